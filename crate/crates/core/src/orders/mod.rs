//! Per-epoch update sequences for every ordering strategy.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{Oracle, Purpose, RngStream};
use crate::problems::FiniteSum;

mod greedy;
mod two_level;

pub use greedy::greedy_order;
pub use two_level::two_level_k_shuffle;

/// Ordered component identifiers used in one epoch (0-based, flattened for
/// two-level problems).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UpdateSequence(Vec<usize>);

impl UpdateSequence {
    pub fn new(entries: Vec<usize>) -> Self {
        Self(entries)
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// Parses 1-based identifiers.
    pub fn from_one_based(entries: &[usize]) -> Result<Self> {
        entries
            .iter()
            .map(|&e| {
                e.checked_sub(1)
                    .ok_or_else(|| Error::InvalidArgument("component identifiers are 1-based".into()))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|e| e + 1).collect()
    }

    /// True when every identifier in `0..n` appears exactly once.
    pub fn is_permutation_of(&self, n: usize) -> bool {
        if self.0.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        for &e in &self.0 {
            if e >= n || seen[e] {
                return false;
            }
            seen[e] = true;
        }
        true
    }

    pub fn check_range(&self, n: usize) -> Result<()> {
        match self.0.iter().find(|&&e| e >= n) {
            Some(e) => Err(Error::InvalidArgument(format!(
                "order references component {} but the problem has {n}",
                e + 1
            ))),
            None => Ok(()),
        }
    }
}

impl From<Vec<usize>> for UpdateSequence {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

fn default_update_every() -> usize {
    1
}

/// Declarative strategy description, as found in the `strategy` config
/// section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    /// Fresh uniform permutation every epoch.
    Rr,
    /// Fixed permutation every epoch; identity unless `order` (1-based) is given.
    Ig {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<Vec<usize>>,
    },
    /// One random permutation drawn in the first epoch and reused.
    SingleShuffle,
    /// `n` i.i.d. uniform draws per epoch (`n` defaults to the component count).
    SgdReplacement {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    /// Greedy order chooser, recomputed every `update_every` epochs.
    Greedy {
        #[serde(default = "default_update_every")]
        update_every: usize,
    },
    /// Two-level K-shuffling over the flattened `(top, low)` pairs.
    TwoLevelK {
        #[serde(rename = "K")]
        k: usize,
    },
    /// Uniform permutation of all flattened pairs.
    StandardCombined,
}

impl StrategySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            StrategySpec::Ig { order: Some(order) } => {
                let seq = UpdateSequence::from_one_based(order)
                    .map_err(|e| Error::config("strategy", format!("order: {e}")))?;
                if !seq.is_permutation_of(order.len()) {
                    return Err(Error::config("strategy", "key `order` must be a permutation of 1..=N"));
                }
            }
            StrategySpec::SgdReplacement { n: Some(0) } => {
                return Err(Error::config("strategy", "key `n` must be positive"));
            }
            StrategySpec::Greedy { update_every: 0 } => {
                return Err(Error::config("strategy", "key `update_every` must be positive"));
            }
            StrategySpec::TwoLevelK { k: 0 } => {
                return Err(Error::config("strategy", "key `K` must be positive"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StrategySpec::Rr => "rr",
            StrategySpec::Ig { .. } => "ig",
            StrategySpec::SingleShuffle => "single_shuffle",
            StrategySpec::SgdReplacement { .. } => "sgd_replacement",
            StrategySpec::Greedy { .. } => "greedy",
            StrategySpec::TwoLevelK { .. } => "two_level_k",
            StrategySpec::StandardCombined => "standard_combined",
        }
    }

    /// Short unique label used in file names and reports.
    pub fn label(&self) -> String {
        match self {
            StrategySpec::Greedy { update_every } if *update_every != 1 => {
                format!("greedy_every{update_every}")
            }
            StrategySpec::TwoLevelK { k } => format!("two_level_k{k}"),
            other => other.kind().to_string(),
        }
    }

    /// Whether every epoch's sequence visits each component exactly once.
    pub fn is_permutation_strategy(&self) -> bool {
        !matches!(self, StrategySpec::SgdReplacement { .. })
    }

    pub fn requires_two_level(&self) -> bool {
        matches!(self, StrategySpec::TwoLevelK { .. })
    }
}

/// Runtime state of one strategy within one run.
#[derive(Debug, Clone)]
pub struct OrderStrategy {
    spec: StrategySpec,
    cached: Option<UpdateSequence>,
}

impl OrderStrategy {
    pub fn new(spec: StrategySpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, cached: None })
    }

    pub fn spec(&self) -> &StrategySpec {
        &self.spec
    }

    /// Checks the strategy against a concrete problem before a run starts.
    pub fn check_problem(&self, problem: &dyn FiniteSum) -> Result<()> {
        let n = problem.component_count();
        match &self.spec {
            StrategySpec::Ig { order: Some(order) } if order.len() != n => Err(Error::config(
                "strategy",
                format!("key `order` has {} entries but the problem has {n} components", order.len()),
            )),
            StrategySpec::TwoLevelK { k } => {
                let shape = problem.two_level_shape().ok_or_else(|| {
                    Error::config("strategy", "two_level_k requires a two-level problem")
                })?;
                if shape.low % k != 0 {
                    return Err(Error::config(
                        "strategy",
                        format!("key `K` = {k} does not divide m = {}", shape.low),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Update sequence for epoch `epoch` (1-based), given the epoch-start
    /// iterate `x_t`.
    pub fn next_epoch_order(
        &mut self,
        problem: &dyn FiniteSum,
        oracle: &Oracle,
        x_t: &[f64],
        epoch: u64,
        seed: u64,
    ) -> Result<UpdateSequence> {
        if epoch == 0 {
            return Err(Error::InvalidArgument("epochs are numbered from 1".into()));
        }
        let n = problem.component_count();
        let stream = RngStream::new(seed, Purpose::Order).at(epoch, 0);
        let order = match &self.spec {
            StrategySpec::Rr | StrategySpec::StandardCombined => random_permutation(n, stream),
            StrategySpec::Ig { order: None } => UpdateSequence::identity(n),
            StrategySpec::Ig { order: Some(order) } => UpdateSequence::from_one_based(order)?,
            StrategySpec::SingleShuffle => match &self.cached {
                Some(order) => order.clone(),
                None => {
                    let order = random_permutation(n, RngStream::new(seed, Purpose::Order).at(1, 0));
                    self.cached = Some(order.clone());
                    order
                }
            },
            StrategySpec::SgdReplacement { n: len } => {
                let mut rng = stream.rng();
                UpdateSequence((0..len.unwrap_or(n)).map(|_| rng.random_range(0..n)).collect())
            }
            StrategySpec::Greedy { update_every } => {
                let refresh = (epoch - 1) % *update_every as u64 == 0;
                match (&self.cached, refresh) {
                    (Some(order), false) => order.clone(),
                    _ => {
                        let probe = RngStream::new(seed, Purpose::GreedyProbe).at(epoch, 0);
                        let order = greedy_order(problem, oracle, x_t, probe)?;
                        self.cached = Some(order.clone());
                        order
                    }
                }
            }
            StrategySpec::TwoLevelK { k } => {
                let shape = problem
                    .two_level_shape()
                    .ok_or_else(|| Error::config("strategy", "two_level_k requires a two-level problem"))?;
                two_level_k_shuffle(shape.top, shape.low, *k, stream)?
            }
        };
        Ok(order)
    }
}

/// Uniform random permutation of `0..n`.
pub fn random_permutation(n: usize, stream: RngStream) -> UpdateSequence {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut stream.rng());
    UpdateSequence(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::SignedExample;

    fn order_at(spec: StrategySpec, n: usize, epochs: u64, seed: u64) -> Vec<UpdateSequence> {
        let p = SignedExample::new(n, 1.0).unwrap();
        let mut s = OrderStrategy::new(spec).unwrap();
        (1..=epochs)
            .map(|t| s.next_epoch_order(&p, &Oracle::Exact, &[0.5], t, seed).unwrap())
            .collect()
    }

    #[test]
    fn ig_is_identity_every_epoch() {
        let p = SignedExample::new(4, 1.0).unwrap();
        let mut s = OrderStrategy::new(StrategySpec::Ig { order: None }).unwrap();
        for t in 1..4 {
            let o = s.next_epoch_order(&p, &Oracle::Exact, &[0.0], t, 0).unwrap();
            assert_eq!(o.to_one_based(), vec![1, 2, 3, 4]);
        }
    }

    #[test]
    fn ig_custom_order() {
        let orders = order_at(StrategySpec::Ig { order: Some(vec![2, 1, 4, 3]) }, 4, 2, 0);
        assert_eq!(orders[1].to_one_based(), vec![2, 1, 4, 3]);
        assert!(StrategySpec::Ig { order: Some(vec![1, 1]) }.validate().is_err());
    }

    #[test]
    fn single_shuffle_reuses_first_permutation() {
        let orders = order_at(StrategySpec::SingleShuffle, 4, 3, 11);
        assert_eq!(orders[0], orders[1]);
        assert_eq!(orders[1], orders[2]);
        assert!(orders[0].is_permutation_of(4));
    }

    #[test]
    fn rr_draws_fresh_permutations() {
        let orders = order_at(StrategySpec::Rr, 8, 10, 3);
        assert!(orders.iter().all(|o| o.is_permutation_of(8)));
        assert!(orders.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn sgd_replacement_length_and_range() {
        let orders = order_at(StrategySpec::SgdReplacement { n: None }, 6, 3, 5);
        assert!(orders.iter().all(|o| o.len() == 6 && o.entries().iter().all(|&e| e < 6)));
        let orders = order_at(StrategySpec::SgdReplacement { n: Some(2) }, 6, 1, 5);
        assert_eq!(orders[0].len(), 2);
    }

    #[test]
    fn greedy_slow_update_reuses_order() {
        let p = SignedExample::new(4, 1.0).unwrap();
        let mut s = OrderStrategy::new(StrategySpec::Greedy { update_every: 3 }).unwrap();
        let a = s.next_epoch_order(&p, &Oracle::Exact, &[0.0], 1, 0).unwrap();
        let b = s.next_epoch_order(&p, &Oracle::Exact, &[5.0], 2, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_level_requires_shape() {
        let p = SignedExample::new(4, 1.0).unwrap();
        let s = OrderStrategy::new(StrategySpec::TwoLevelK { k: 1 }).unwrap();
        assert!(s.check_problem(&p).is_err());
    }

    #[test]
    fn zero_parameters_rejected() {
        assert!(OrderStrategy::new(StrategySpec::TwoLevelK { k: 0 }).is_err());
        assert!(OrderStrategy::new(StrategySpec::Greedy { update_every: 0 }).is_err());
        assert!(OrderStrategy::new(StrategySpec::SgdReplacement { n: Some(0) }).is_err());
    }

    #[test]
    fn labels_are_distinct() {
        assert_eq!(StrategySpec::TwoLevelK { k: 4 }.label(), "two_level_k4");
        assert_eq!(StrategySpec::Greedy { update_every: 10 }.label(), "greedy_every10");
        assert_eq!(StrategySpec::Greedy { update_every: 1 }.label(), "greedy");
    }
}
