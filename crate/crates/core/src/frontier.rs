//! Closed-form price-of-anarchy objectives for the worst 3-slot
//! equilibrium allocations and the cyclic n-slot family, their numerical
//! maximization, and the matching tight instance.
//!
//! All objectives are homogeneous of degree zero in the click-through
//! rates, so profiles are normalized to `α_1 = 1` before evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{optimal_welfare, rank_agents, welfare_unchecked, BidProfile, CtrProfile, ValueProfile};
use crate::equilibria::check_pure_ne;
use crate::error::{GspError, Result};
use crate::grid::BidGrid;
use crate::rng::{stream, tag, Rng};

/// Inputs closer than this to a vanishing denominator are rejected.
pub const SINGULARITY_GUARD: f64 = 1e-9;
pub const DEFAULT_RESTARTS: usize = 32;
/// Slack allowed between the best grid cell and the refined optimum.
pub const CERTIFICATION_SLACK: f64 = 1e-6;

/// Click-through rates at which the first-case objective peaks.
pub const TIGHT_ALPHAS: [f64; 3] = [1.0, 0.55079, 0.4704];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoaCase {
    /// Allocation (2, 3, 1): the top agent ends up in the last slot.
    CaseI,
    /// Allocation (3, 1, 2).
    CaseIi,
    Cyclic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoaPoint {
    pub case: PoaCase,
    pub alphas: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    pub best: PoaPoint,
    /// Best value over the certification grid.
    pub grid_best: f64,
    pub grid_argmax: Vec<f64>,
    pub resolution: usize,
    pub restarts: usize,
    pub evaluations: u64,
    /// No grid cell exceeds the refined optimum by more than
    /// [`CERTIFICATION_SLACK`].
    pub certified: bool,
}

fn three(alphas: &[f64]) -> Result<[f64; 3]> {
    if alphas.len() != 3 {
        return Err(GspError::Shape {
            what: "3-slot objective",
            expected: 3,
            got: alphas.len(),
        });
    }
    let top = alphas[0];
    if !(top > 0.0) || alphas.windows(2).any(|w| !(w[0] >= w[1])) || !(alphas[2] >= 0.0) {
        return Err(GspError::Domain(format!("click-through rates {alphas:?} must be nonincreasing, nonnegative and not all zero")));
    }
    Ok([1.0, alphas[1] / top, alphas[2] / top])
}

/// Ratio for allocation (2, 3, 1) after eliminating the values through the
/// equilibrium inequalities.
pub fn poa_case_i(ctrs: &CtrProfile) -> Result<f64> {
    case_i_raw(ctrs.alphas())
}

fn case_i_raw(alphas: &[f64]) -> Result<f64> {
    let [_, a2, a3] = three(alphas)?;
    if a2 < SINGULARITY_GUARD {
        return Err(GspError::Domain(format!("second rate {a2} too close to zero")));
    }
    Ok(cyclic_normalized(&[1.0, a2, a3]))
}

/// Cyclic objective on a profile with `α_1 = 1` and positive rates above
/// the last.
fn cyclic_normalized(a: &[f64]) -> f64 {
    let last = a[a.len() - 1];
    let mut num = a[0];
    let mut den = last;
    for i in 1..a.len() {
        num += a[i] * (a[i - 1] - last) / a[i - 1];
        den += a[i - 1] - last;
    }
    num / den
}

/// Ratio for allocation (3, 1, 2).
pub fn poa_case_ii(ctrs: &CtrProfile) -> Result<f64> {
    case_ii_raw(ctrs.alphas())
}

fn case_ii_raw(alphas: &[f64]) -> Result<f64> {
    let [_, a2, a3] = three(alphas)?;
    let (d2, d3) = (1.0 - a2, 1.0 - a3);
    if d2 < SINGULARITY_GUARD || d3 < SINGULARITY_GUARD {
        return Err(GspError::Domain(format!("top rate not separated from ({a2}, {a3})")));
    }
    Ok((1.0 / d2 + a2 / d3 + a3) / (a2 / d2 + a3 / d3 + 1.0))
}

/// `(1, α_2, α_3) ↦ (1, 1 − α_3, (α_2 − α_3)/α_2)`, carrying the first case
/// onto the second with equal objective.
pub fn symmetry_map(ctrs: &CtrProfile) -> Result<CtrProfile> {
    let [_, a2, a3] = three(ctrs.alphas())?;
    if a2 <= 0.0 {
        return Err(GspError::Domain("symmetry map needs a positive second rate".into()));
    }
    CtrProfile::new(vec![1.0, 1.0 - a3, (a2 - a3) / a2])
}

/// Bound for the allocation where the top agent takes the last slot and
/// every other agent moves up one.
pub fn poa_cyclic(ctrs: &CtrProfile) -> Result<f64> {
    let a = ctrs.alphas();
    let n = a.len();
    if n < 3 {
        return Err(GspError::Domain(format!("cyclic objective needs at least 3 slots, got {n}")));
    }
    let top = a[0];
    let a: Vec<f64> = a.iter().map(|x| x / top).collect();
    if a[..n - 1].iter().any(|x| *x < SINGULARITY_GUARD) {
        return Err(GspError::Domain("all rates above the last must be positive".into()));
    }
    Ok(cyclic_normalized(&a))
}

fn objective(case: PoaCase) -> fn(&[f64]) -> Result<f64> {
    match case {
        PoaCase::CaseI => case_i_raw,
        PoaCase::CaseIi => case_ii_raw,
        PoaCase::Cyclic => |a: &[f64]| poa_cyclic(&CtrProfile::new(a.to_vec())?),
    }
}

/// Objective at `(1, a_2, …)` with infeasible points scored as −∞.
fn score(f: fn(&[f64]) -> Result<f64>, tail: &[f64]) -> f64 {
    let mut alphas = Vec::with_capacity(tail.len() + 1);
    alphas.push(1.0);
    alphas.extend_from_slice(tail);
    f(&alphas).unwrap_or(f64::NEG_INFINITY)
}

/// Keeps `1 ≥ a_2 ≥ a_3 ≥ … ≥ 0`.
fn project(tail: &mut [f64]) {
    let mut cap = 1.0f64;
    for x in tail.iter_mut() {
        *x = x.clamp(0.0, cap);
        cap = *x;
    }
}

/// Compass search from `start` with the given initial step; returns the
/// local optimum, its value and the number of evaluations.
fn compass(f: fn(&[f64]) -> Result<f64>, start: &[f64], step: f64) -> (Vec<f64>, f64, u64) {
    let mut x = start.to_vec();
    project(&mut x);
    let mut fx = score(f, &x);
    let mut evals = 1;
    let mut h = step;
    let dim = x.len();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for d in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[d] = s;
            dirs.push(e);
        }
    }
    // moving neighbouring rates together slides along the ordering boundary
    for d in 0..dim.saturating_sub(1) {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[d] = s;
            e[d + 1] = s;
            dirs.push(e);
        }
    }
    dirs.push(vec![1.0; dim]);
    dirs.push(vec![-1.0; dim]);
    while h > 1e-13 {
        let mut moved = false;
        for e in &dirs {
            let mut y: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + h * b).collect();
            project(&mut y);
            let fy = score(f, &y);
            evals += 1;
            if fy > fx {
                x = y;
                fx = fy;
                moved = true;
                break;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    (x, fx, evals)
}

/// Grid over `{1 ≥ α_2 ≥ α_3 ≥ 0}` with `resolution` cells per axis,
/// refined by compass search from the best cell and from `restarts` seeded
/// random starts.
pub fn maximize_3slot(case: PoaCase, resolution: usize, restarts: usize, seed: u64) -> Result<OptimizerResult> {
    if case == PoaCase::Cyclic {
        return Err(GspError::Domain("use maximize_cyclic for the cyclic family".into()));
    }
    if resolution < 2 {
        return Err(GspError::Domain(format!("resolution {resolution} too coarse")));
    }
    let f = objective(case);
    let r = resolution as f64;
    let rows: Vec<(f64, usize)> = (0..=resolution)
        .into_par_iter()
        .map(|i| {
            let a2 = i as f64 / r;
            let mut best = (f64::NEG_INFINITY, 0);
            for j in 0..=i {
                let v = score(f, &[a2, j as f64 / r]);
                if v > best.0 {
                    best = (v, j);
                }
            }
            best
        })
        .collect();
    let mut evaluations: u64 = ((resolution + 1) * (resolution + 2) / 2) as u64;
    let (mut grid_best, mut cell) = (f64::NEG_INFINITY, (0, 0));
    for (i, &(v, j)) in rows.iter().enumerate() {
        if v > grid_best {
            grid_best = v;
            cell = (i, j);
        }
    }
    if !grid_best.is_finite() {
        return Err(GspError::Invariant("objective undefined on the whole grid".into()));
    }
    let grid_argmax = vec![1.0, cell.0 as f64 / r, cell.1 as f64 / r];

    let mut starts = vec![(grid_argmax[1..].to_vec(), 1.0 / r)];
    let mut rng = stream(seed, &[tag::OPTIMIZER]);
    for _ in 0..restarts {
        let mut p = vec![rng.random::<f64>(), rng.random::<f64>()];
        p.sort_by(|a, b| b.total_cmp(a));
        starts.push((p, 0.05));
    }
    let results: Vec<(Vec<f64>, f64, u64)> = starts.par_iter().map(|(p, h)| compass(f, p, *h)).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (x, v, e) in results {
        evaluations += e;
        if best.as_ref().is_none_or(|b| v > b.1) {
            best = Some((x, v));
        }
    }
    let (x, value) = best.expect("at least one start");
    Ok(OptimizerResult {
        best: PoaPoint {
            case,
            alphas: vec![1.0, x[0], x[1]],
            value,
        },
        grid_best,
        grid_argmax,
        resolution,
        restarts,
        evaluations,
        certified: grid_best <= value + CERTIFICATION_SLACK,
    })
}

/// Multi-start compass maximization of the cyclic objective over ordered
/// profiles with `slots` rates. No certification grid: the box has
/// `slots − 1` dimensions.
pub fn maximize_cyclic(slots: usize, restarts: usize, seed: u64) -> Result<OptimizerResult> {
    if slots < 3 {
        return Err(GspError::Domain(format!("cyclic objective needs at least 3 slots, got {slots}")));
    }
    let f = objective(PoaCase::Cyclic);
    let mut starts: Vec<Vec<f64>> = vec![{
        // the three-slot optimum padded with copies of the last rate
        let mut p = vec![TIGHT_ALPHAS[2]; slots - 1];
        p[0] = TIGHT_ALPHAS[1];
        p
    }];
    let mut rng = stream(seed, &[tag::OPTIMIZER, slots as u64]);
    for _ in 0..restarts {
        let mut p: Vec<f64> = (0..slots - 1).map(|_| rng.random::<f64>()).collect();
        p.sort_by(|a, b| b.total_cmp(a));
        starts.push(p);
    }
    let results: Vec<(Vec<f64>, f64, u64)> = starts.par_iter().map(|p| compass(f, p, 0.05)).collect();
    let mut evaluations = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (x, v, e) in results {
        evaluations += e;
        if best.as_ref().is_none_or(|b| v > b.1) {
            best = Some((x, v));
        }
    }
    let (x, value) = best.expect("at least one start");
    let mut alphas = vec![1.0];
    alphas.extend(x);
    Ok(OptimizerResult {
        best: PoaPoint {
            case: PoaCase::Cyclic,
            alphas: alphas.clone(),
            value,
        },
        grid_best: value,
        grid_argmax: alphas,
        resolution: 0,
        restarts,
        evaluations,
        certified: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaddingReading {
    pub label: String,
    pub alphas: Vec<f64>,
    pub value: f64,
}

/// Evaluates the cyclic objective on the two ways of extending a 3-slot
/// profile `(1, a_2, a_3)` to `slots` slots with repeated entries: repeating
/// the smallest rate, or repeating the largest.
pub fn padding_readings(a2: f64, a3: f64, slots: usize) -> Result<Vec<PaddingReading>> {
    if slots < 3 {
        return Err(GspError::Domain(format!("need at least 3 slots, got {slots}")));
    }
    let mut low = vec![1.0, a2];
    low.resize(slots, a3);
    let mut high = vec![1.0; slots - 2];
    high.extend([a2, a3]);
    [("repeat_smallest", low), ("repeat_largest", high)]
        .into_iter()
        .map(|(label, alphas)| {
            let value = poa_cyclic(&CtrProfile::new(alphas.clone())?)?;
            Ok(PaddingReading {
                label: label.into(),
                alphas,
                value,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightInstance {
    pub values: ValueProfile,
    pub ctrs: CtrProfile,
    pub bids: BidProfile,
    pub ratio: f64,
}

/// Values `v = (1, (α_1−α_3)/α_1, (α_2−α_3)/α_2)` with bids `(0, v_2, v_3)`:
/// agent 1 takes the top slot, agent 2 the middle and agent 0 the bottom,
/// each indifferent at the boundary. Verified as an ε-equilibrium on
/// `verify_points` uniform levels per agent.
pub fn tight_instance(ctrs: &CtrProfile, verify_points: usize, epsilon: f64) -> Result<TightInstance> {
    let [_, a2, a3] = three(ctrs.alphas())?;
    if a2 <= 0.0 {
        return Err(GspError::Domain("tight instance needs a positive second rate".into()));
    }
    let ctrs = CtrProfile::new(vec![1.0, a2, a3])?;
    let values = ValueProfile::new(vec![1.0, 1.0 - a3, (a2 - a3) / a2])?;
    let v = values.values();
    let bids = BidProfile::new(vec![0.0, v[1], v[2]])?;
    let grid = BidGrid::uniform_no_overbid(&values, verify_points);
    let verdict = check_pure_ne(&bids, &values, &ctrs, &grid, epsilon)?;
    if !verdict.is_equilibrium {
        return Err(GspError::Invariant(format!(
            "constructed profile is not an equilibrium: {:?}",
            verdict.worst_deviation
        )));
    }
    let sw = welfare_unchecked(&rank_agents(bids.bids()), v, ctrs.alphas());
    let ratio = optimal_welfare(&values, &ctrs)? / sw;
    Ok(TightInstance { values, ctrs, bids, ratio })
}

/// The tight instance at [`TIGHT_ALPHAS`], checked on 1000 levels with
/// ε = 1e-3.
pub fn tight_instance_3slot() -> Result<TightInstance> {
    tight_instance(&CtrProfile::new(TIGHT_ALPHAS.to_vec())?, 1000, 1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(a: &[f64]) -> CtrProfile {
        CtrProfile::new(a.to_vec()).unwrap()
    }

    // direct transcription with α_1 kept symbolic
    fn case_i_oracle(a1: f64, a2: f64, a3: f64) -> f64 {
        (a1 + a2 * (a1 - a3) / a1 + a3 * (a2 - a3) / a2) / (a3 + (a1 - a3) + (a2 - a3))
    }

    fn case_ii_oracle(a1: f64, a2: f64, a3: f64) -> f64 {
        let num = a1 * a1 / (a1 - a2) + a2 * a1 / (a1 - a3) + a3;
        let den = a2 * a1 / (a1 - a2) + a3 * a1 / (a1 - a3) + a1;
        num / den
    }

    #[test]
    fn case_i_examples() {
        assert!((poa_case_i(&c(&TIGHT_ALPHAS)).unwrap() - 1.25913).abs() < 1e-4);
        assert!((poa_case_i(&c(&[1.0, 1.0, 1.0])).unwrap() - 1.0).abs() < 1e-15);
        assert!(poa_case_i(&c(&[1.0, 0.0, 0.0])).is_err());
        for k in [0.3, 2.0, 17.0] {
            let s = c(&[k, k * 0.55079, k * 0.4704]);
            assert!((poa_case_i(&s).unwrap() - poa_case_i(&c(&TIGHT_ALPHAS)).unwrap()).abs() < 1e-12);
            assert!((poa_case_i(&s).unwrap() - case_i_oracle(k, k * 0.55079, k * 0.4704)).abs() < 1e-12);
        }
    }

    #[test]
    fn case_ii_examples() {
        let v = poa_case_ii(&c(&[1.0, 0.5295, 0.1458])).unwrap();
        assert!((v - 1.25913).abs() < 1e-3, "{v}");
        assert!((poa_case_ii(&c(&[1.0, 0.4, 0.4])).unwrap() - case_ii_oracle(1.0, 0.4, 0.4)).abs() < 1e-12);
        assert!((poa_case_ii(&c(&[2.0, 0.8, 0.3])).unwrap() - case_ii_oracle(2.0, 0.8, 0.3)).abs() < 1e-12);
        assert!(poa_case_ii(&c(&[1.0, 1.0 - 1e-6, 0.2])).unwrap().is_finite());
        assert!(poa_case_ii(&c(&[1.0, 1.0, 0.2])).is_err());
        assert!(poa_case_ii(&c(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn symmetry_map_examples() {
        let m = symmetry_map(&c(&TIGHT_ALPHAS)).unwrap();
        assert!((m.alphas()[1] - 0.5295).abs() < 1e-3 && (m.alphas()[2] - 0.1458).abs() < 1e-3);
        assert_eq!(symmetry_map(&c(&[1.0, 1.0, 0.0])).unwrap().alphas(), &[1.0, 1.0, 1.0]);
        assert!(symmetry_map(&c(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn symmetry_identity_on_random_profiles() {
        let mut rng = stream(3, &[]);
        for _ in 0..1000 {
            let mut p = [rng.random::<f64>(), rng.random::<f64>()];
            p.sort_by(|a, b| b.total_cmp(a));
            if p[0] < 1e-3 || p[1] > 1.0 - 1e-3 {
                continue;
            }
            let a = c(&[1.0, p[0], p[1]]);
            let lhs = poa_case_ii(&symmetry_map(&a).unwrap()).unwrap();
            assert!((lhs - poa_case_i(&a).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn cyclic_matches_case_i_at_three_slots() {
        for a in [[1.0, 0.5, 0.2], TIGHT_ALPHAS, [3.0, 2.0, 1.0]] {
            assert_eq!(poa_cyclic(&c(&a)).unwrap(), poa_case_i(&c(&a)).unwrap());
        }
        assert!((poa_cyclic(&c(&[0.7; 5])).unwrap() - 1.0).abs() < 1e-15);
        assert!(poa_cyclic(&c(&[1.0, 0.5])).is_err());
    }

    #[test]
    fn repeating_smallest_rate_keeps_three_slot_value() {
        let readings = padding_readings(0.55079, 0.4704, 6).unwrap();
        let base = poa_case_i(&c(&TIGHT_ALPHAS)).unwrap();
        let low = readings.iter().find(|r| r.label == "repeat_smallest").unwrap();
        assert!((low.value - base).abs() < 1e-12);
        let high = readings.iter().find(|r| r.label == "repeat_largest").unwrap();
        assert!(high.value < base);
    }

    #[test]
    fn maximizers_reach_the_tight_value() {
        let r = maximize_3slot(PoaCase::CaseI, 400, 8, 1).unwrap();
        assert!(r.certified);
        assert!((r.best.value - 1.25913).abs() < 1e-4, "{r:?}");
        assert!((r.best.alphas[1] - 0.55079).abs() < 2e-3 && (r.best.alphas[2] - 0.4704).abs() < 2e-3);
        let r2 = maximize_3slot(PoaCase::CaseIi, 400, 8, 1).unwrap();
        assert!((r2.best.value - r.best.value).abs() < 1e-9);
        assert!((r2.best.alphas[1] - 0.5295).abs() < 3e-3 && (r2.best.alphas[2] - 0.1458).abs() < 3e-3);
    }

    #[test]
    fn diagonal_sweep_stays_below_optimum() {
        let best = (1..10_000)
            .map(|k| poa_case_i(&c(&[1.0, k as f64 / 10_000.0, k as f64 / 10_000.0])).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best < 1.25913 - 1e-3, "{best}");
    }

    #[test]
    fn cyclic_maximum_for_four_slots() {
        let r = maximize_cyclic(4, 8, 2).unwrap();
        assert!(r.best.value >= 1.25913 - 1e-4);
    }

    #[test]
    fn tight_instance_is_equilibrium() {
        let t = tight_instance_3slot().unwrap();
        assert!(t.ratio >= 1.25 && (t.ratio - 1.25913).abs() < 1e-4);
        assert_eq!(rank_agents(t.bids.bids()), vec![1, 2, 0]);
        let scaled = t.values.scaled(10.0).unwrap();
        let bids = BidProfile::new(t.bids.bids().iter().map(|b| b * 10.0).collect()).unwrap();
        let grid = BidGrid::uniform_no_overbid(&scaled, 1000);
        assert!(check_pure_ne(&bids, &scaled, &t.ctrs, &grid, 1e-2).unwrap().is_equilibrium);
        let sw = welfare_unchecked(&rank_agents(bids.bids()), scaled.values(), t.ctrs.alphas());
        assert!((optimal_welfare(&scaled, &t.ctrs).unwrap() / sw - t.ratio).abs() < 1e-12);
    }
}
