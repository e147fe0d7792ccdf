use crate::error::Result;
use crate::oracle::{Oracle, RngStream};
use crate::problems::FiniteSum;

use super::UpdateSequence;

/// Relative slack under which two objective values count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Greedy order chooser.
///
/// Queries the oracle once per component at `x`, takes the mean as the full
/// gradient, then repeatedly appends the remaining component whose deviation
/// keeps the running prefix bias smallest. Ties go to the lowest index.
pub fn greedy_order(
    problem: &dyn FiniteSum,
    oracle: &Oracle,
    x: &[f64],
    stream: RngStream,
) -> Result<UpdateSequence> {
    let n = problem.component_count();
    let d = problem.dimension();

    let mut deviations = vec![0.0; n * d];
    for i in 0..n {
        oracle.query(problem, i, x, stream.at(stream.epoch, i as u64), &mut deviations[i * d..(i + 1) * d])?;
    }
    let mut mean = vec![0.0; d];
    for row in deviations.chunks_exact(d) {
        mean.iter_mut().zip(row).for_each(|(m, g)| *m += g);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for row in deviations.chunks_exact_mut(d) {
        row.iter_mut().zip(&mean).for_each(|(g, m)| *g -= m);
    }

    let mut bias = vec![0.0; d];
    let mut used = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !used[i]) {
            let dev = &deviations[i * d..(i + 1) * d];
            let score: f64 = dev.iter().zip(&bias).map(|(g, b)| (g + b) * (g + b)).sum();
            let better = match best {
                None => true,
                Some((_, b)) => score < b - TIE_TOLERANCE * b.abs().max(score.abs()),
            };
            if better {
                best = Some((i, score));
            }
        }
        let (pick, _) = best.expect("at least one component remains");
        used[pick] = true;
        order.push(pick);
        bias.iter_mut()
            .zip(&deviations[pick * d..(pick + 1) * d])
            .for_each(|(b, g)| *b += g);
    }
    Ok(UpdateSequence::new(order))
}
