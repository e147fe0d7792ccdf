use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::oracle::RngStream;

use super::UpdateSequence;

/// Two-level K-shuffling over `n` top-level functions with `m` low-level
/// functions each.
///
/// One low-level permutation is drawn per top index, then `m / k` rounds
/// each draw a top-level permutation and, for every top index in it, append
/// the next `k` pairs of that index's low-level permutation. Entries are
/// flattened as `top * m + low`.
pub fn two_level_k_shuffle(n: usize, m: usize, k: usize, stream: RngStream) -> Result<UpdateSequence> {
    if k == 0 || m % k != 0 {
        return Err(Error::config("strategy", format!("key `K` = {k} does not divide m = {m}")));
    }
    let mut rng = stream.rng();
    let low: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut rng);
            perm
        })
        .collect();
    let mut cursor = vec![0usize; n];
    let mut full = Vec::with_capacity(n * m);
    for _ in 0..m / k {
        let mut top: Vec<usize> = (0..n).collect();
        top.shuffle(&mut rng);
        for &i in &top {
            full.extend(low[i][cursor[i]..cursor[i] + k].iter().map(|&j| i * m + j));
            cursor[i] += k;
        }
    }
    Ok(UpdateSequence::new(full))
}
