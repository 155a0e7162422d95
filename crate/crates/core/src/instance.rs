//! Random instance generators shared by the search and learning experiments.

use crate::auction::{CtrProfile, ValueProfile};
use crate::error::Result;
use crate::rng::Rng;

/// Top slot rate 1, the remaining `n - 1` rates iid uniform on `[0, 1)`
/// sorted into slot order.
pub fn sample_ctrs<R: Rng>(n: usize, rng: &mut R) -> Result<CtrProfile> {
    let mut alphas = vec![1.0];
    alphas.extend((1..n).map(|_| rng.random::<f64>()));
    CtrProfile::from_unsorted(alphas)
}

/// `n` iid uniform values on `[0, 1)`.
pub fn sample_values<R: Rng>(n: usize, rng: &mut R) -> Result<ValueProfile> {
    ValueProfile::new((0..n).map(|_| rng.random::<f64>()).collect())
}
