//! Pure Nash equilibria over discretized bid spaces.

mod search;
mod structural;

pub use search::{pure_poa_search, PoaSearchConfig, PoaSearchResult, PoaWitness};
pub use structural::{
    gamma_from_triples, lemma1_consistency, structural_gamma, BidSource, FixedProfileSource,
    GammaReport, PairMinimum, TripleEstimate, DEFAULT_GAMMA_TEST_VALUES, LEMMA1_TOLERANCE,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{check_agent, same_len, unilateral_utility, BidProfile, CtrProfile, ValueProfile};
use crate::error::{GspError, Result};
use crate::grid::BidGrid;

/// Default cap on the number of joint profiles an enumeration may visit.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

/// Scale-aware slack for approximate equilibrium checks: `1e-6 * α_1 * max v`.
pub fn default_epsilon(values: &ValueProfile, ctrs: &CtrProfile) -> f64 {
    1e-6 * ctrs.top() * values.max()
}

/// The most profitable unilateral grid deviation found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub agent: usize,
    pub from_bid: f64,
    pub to_bid: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeVerdict {
    pub is_equilibrium: bool,
    pub epsilon: f64,
    pub worst_deviation: Deviation,
}

fn check_shapes(bids: &BidProfile, values: &ValueProfile, ctrs: &CtrProfile, grid: &BidGrid) -> Result<()> {
    same_len("bids vs slots", ctrs.len(), bids.len())?;
    same_len("values vs slots", ctrs.len(), values.len())?;
    same_len("grid vs agents", values.len(), grid.agents())
}

/// Lowest grid bid maximizing `agent`'s utility against the other bids in
/// `opponents` (the agent's own entry is ignored). Returns `(bid, utility)`.
pub fn best_response(
    agent: usize,
    opponents: &BidProfile,
    values: &ValueProfile,
    ctrs: &CtrProfile,
    grid: &BidGrid,
) -> Result<(f64, f64)> {
    check_shapes(opponents, values, ctrs, grid)?;
    check_agent(agent, values.len())?;
    let levels = grid.levels(agent);
    if levels.is_empty() {
        return Err(GspError::EmptyGrid(agent));
    }
    Ok(best_on_levels(agent, levels, opponents.bids(), values.values()[agent], ctrs.alphas()))
}

fn best_on_levels(agent: usize, levels: &[f64], bids: &[f64], value: f64, alphas: &[f64]) -> (f64, f64) {
    let mut best = (levels[0], f64::NEG_INFINITY);
    for &bid in levels {
        let u = unilateral_utility(agent, bid, bids, value, alphas);
        if u > best.1 {
            best = (bid, u);
        }
    }
    best
}

/// Checks that no agent gains more than `epsilon` by moving to another
/// bid on its grid.
pub fn check_pure_ne(
    bids: &BidProfile,
    values: &ValueProfile,
    ctrs: &CtrProfile,
    grid: &BidGrid,
    epsilon: f64,
) -> Result<NeVerdict> {
    check_shapes(bids, values, ctrs, grid)?;
    if !(epsilon >= 0.0) {
        return Err(GspError::Domain(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let b = bids.bids();
    let alphas = ctrs.alphas();
    let mut worst: Option<Deviation> = None;
    for agent in 0..b.len() {
        let value = values.values()[agent];
        let current = unilateral_utility(agent, b[agent], b, value, alphas);
        let (to_bid, best) = best_on_levels(agent, grid.levels(agent), b, value, alphas);
        let gain = best - current;
        if worst.as_ref().is_none_or(|w| gain > w.gain) {
            worst = Some(Deviation {
                agent,
                from_bid: b[agent],
                to_bid,
                gain,
            });
        }
    }
    let worst_deviation = worst.expect("profiles are nonempty");
    Ok(NeVerdict {
        is_equilibrium: worst_deviation.gain <= epsilon,
        epsilon,
        worst_deviation,
    })
}

/// Exact (ε = 0) equilibrium test without allocation; bails out on the
/// first profitable deviation.
pub(crate) fn is_grid_ne(bids: &[f64], values: &[f64], alphas: &[f64], grid: &BidGrid) -> bool {
    (0..bids.len()).all(|agent| {
        let current = unilateral_utility(agent, bids[agent], bids, values[agent], alphas);
        grid.levels(agent)
            .iter()
            .all(|&d| unilateral_utility(agent, d, bids, values[agent], alphas) <= current)
    })
}

fn check_grid_no_overbid(values: &ValueProfile, grid: &BidGrid) -> Result<()> {
    for (agent, &v) in values.values().iter().enumerate() {
        let top = *grid.levels(agent).last().ok_or(GspError::EmptyGrid(agent))?;
        if top > v {
            return Err(GspError::Overbid { agent, bid: top, value: v });
        }
    }
    Ok(())
}

/// Calls `visit` on every pure equilibrium of the grid game, in
/// lexicographic grid order, and collects the results.
pub(crate) fn collect_pure_ne<T, F>(
    values: &ValueProfile,
    ctrs: &CtrProfile,
    grid: &BidGrid,
    budget: u128,
    visit: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[f64]) -> Option<T> + Sync,
{
    same_len("values vs slots", ctrs.len(), values.len())?;
    same_len("grid vs agents", values.len(), grid.agents())?;
    check_grid_no_overbid(values, grid)?;
    let required = grid.joint_size();
    if required > budget {
        return Err(GspError::BudgetExceeded { required, budget });
    }
    let n = values.len();
    let vs = values.values();
    let alphas = ctrs.alphas();
    let first = grid.levels(0);
    let chunks: Vec<Vec<T>> = first
        .par_iter()
        .map(|&b0| {
            let mut found = Vec::new();
            let mut idx = vec![0usize; n];
            let mut bids: Vec<f64> = (0..n).map(|a| grid.levels(a)[0]).collect();
            bids[0] = b0;
            loop {
                if is_grid_ne(&bids, vs, alphas, grid) {
                    if let Some(t) = visit(&bids) {
                        found.push(t);
                    }
                }
                // mixed-radix increment over agents 1..n, last agent fastest
                let mut a = n;
                loop {
                    a -= 1;
                    if a == 0 {
                        return found;
                    }
                    idx[a] += 1;
                    if idx[a] < grid.levels(a).len() {
                        bids[a] = grid.levels(a)[idx[a]];
                        break;
                    }
                    idx[a] = 0;
                    bids[a] = grid.levels(a)[0];
                }
            }
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Every joint grid profile that is an exact pure equilibrium. The grid
/// must respect no-overbidding.
pub fn enumerate_pure_ne(
    values: &ValueProfile,
    ctrs: &CtrProfile,
    grid: &BidGrid,
    budget: u128,
) -> Result<Vec<BidProfile>> {
    collect_pure_ne(values, ctrs, grid, budget, |b| {
        Some(BidProfile::new(b.to_vec()).expect("grid levels are valid bids"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::uniform_levels;

    fn vals(v: &[f64]) -> ValueProfile {
        ValueProfile::new(v.to_vec()).unwrap()
    }
    fn ctrs(a: &[f64]) -> CtrProfile {
        CtrProfile::new(a.to_vec()).unwrap()
    }
    fn bids(b: &[f64]) -> BidProfile {
        BidProfile::new(b.to_vec()).unwrap()
    }

    #[test]
    fn best_response_single_slot() {
        let grid = BidGrid::from_points(vec![vec![0.0, 0.5, 1.0, 1.5, 2.0], vec![1.0]]).unwrap();
        let (b, u) = best_response(0, &bids(&[0.0, 1.0]), &vals(&[2.0, 1.0]), &ctrs(&[1.0, 0.0]), &grid).unwrap();
        assert_eq!((b, u), (1.0, 1.0));
    }

    #[test]
    fn best_response_against_zero_bids() {
        let v = vals(&[0.8, 0.5, 0.3]);
        let a = ctrs(&[1.0, 0.5, 0.2]);
        let grid = BidGrid::uniform_no_overbid(&v, 16);
        // agent 0 wins ties, so bidding zero already takes the top slot
        assert_eq!(best_response(0, &bids(&[0.0; 3]), &v, &a, &grid).unwrap(), (0.0, 0.8));
        // agent 2 loses ties and needs the lowest positive level
        let (b, u) = best_response(2, &bids(&[0.0; 3]), &v, &a, &grid).unwrap();
        assert_eq!(b, grid.levels(2)[1]);
        assert!((u - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_value_agent_bids_zero() {
        let v = vals(&[0.0, 1.0]);
        let grid = BidGrid::uniform_no_overbid(&v, 8);
        assert_eq!(best_response(0, &bids(&[0.0, 0.4]), &v, &ctrs(&[1.0, 0.5]), &grid).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(BidGrid::from_points(vec![vec![], vec![0.0]]).is_err());
    }

    #[test]
    fn two_agent_equilibrium() {
        let v = vals(&[2.0, 1.0]);
        let a = ctrs(&[1.0, 0.0]);
        let grid = BidGrid::uniform_no_overbid(&v, 64);
        let verdict = check_pure_ne(&bids(&[2.0, 1.0]), &v, &a, &grid, 0.0).unwrap();
        assert!(verdict.is_equilibrium, "{verdict:?}");
        let all = enumerate_pure_ne(&v, &a, &grid, DEFAULT_BUDGET).unwrap();
        assert!(all.contains(&bids(&[2.0, 1.0])));
    }

    #[test]
    fn profitable_takeover_detected() {
        let v = vals(&[1.0, 0.5]);
        let a = ctrs(&[1.0, 0.5]);
        let grid = BidGrid::uniform_no_overbid(&v, 11);
        // agent 0 sits in slot 1 earning 0.5 but could take slot 0 paying 0.1
        let verdict = check_pure_ne(&bids(&[0.0, 0.1]), &v, &a, &grid, 0.0).unwrap();
        assert!(!verdict.is_equilibrium);
        assert_eq!(verdict.worst_deviation.agent, 0);
        assert!((verdict.worst_deviation.gain - 0.4).abs() < 1e-12);
        assert!(check_pure_ne(&bids(&[0.0, 0.1]), &v, &a, &grid, -1.0).is_err());
    }

    #[test]
    fn single_agent_every_bid_is_ne() {
        let v = vals(&[0.7]);
        let grid = BidGrid::uniform_no_overbid(&v, 10);
        let all = enumerate_pure_ne(&v, &ctrs(&[1.0]), &grid, DEFAULT_BUDGET).unwrap();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn truthful_second_price_is_ne() {
        let cases = [[0.3, 0.9, 0.5], [1.0, 1.0, 0.2], [0.0, 0.4, 0.4]];
        for v in cases {
            let v = vals(&v);
            let grid = BidGrid::uniform_no_overbid(&v, 33);
            let verdict = check_pure_ne(&BidProfile::truthful(&v), &v, &ctrs(&[1.0, 0.0, 0.0]), &grid, 0.0).unwrap();
            assert!(verdict.is_equilibrium);
        }
    }

    #[test]
    fn budget_refusal_reports_requirement() {
        let v = vals(&[1.0, 1.0, 1.0, 1.0]);
        let grid = BidGrid::uniform_no_overbid(&v, 64);
        let err = enumerate_pure_ne(&v, &ctrs(&[1.0, 0.5, 0.3, 0.1]), &grid, DEFAULT_BUDGET).unwrap_err();
        assert_eq!(
            err,
            GspError::BudgetExceeded {
                required: 64u128.pow(4),
                budget: DEFAULT_BUDGET
            }
        );
    }

    #[test]
    fn enumeration_requires_no_overbid_grid() {
        let v = vals(&[1.0, 0.5]);
        let grid = BidGrid::from_points(vec![uniform_levels(1.0, 4), uniform_levels(1.0, 4)]).unwrap();
        assert!(matches!(
            enumerate_pure_ne(&v, &ctrs(&[1.0, 0.5]), &grid, DEFAULT_BUDGET),
            Err(GspError::Overbid { agent: 1, .. })
        ));
    }

    #[test]
    fn enumeration_agrees_with_checker() {
        let v = vals(&[0.9, 0.6, 0.35]);
        let a = ctrs(&[1.0, 0.55, 0.47]);
        let grid = BidGrid::uniform_no_overbid(&v, 8);
        let listed = enumerate_pure_ne(&v, &a, &grid, DEFAULT_BUDGET).unwrap();
        let mut brute = Vec::new();
        for &x in grid.levels(0) {
            for &y in grid.levels(1) {
                for &z in grid.levels(2) {
                    let b = bids(&[x, y, z]);
                    if check_pure_ne(&b, &v, &a, &grid, 0.0).unwrap().is_equilibrium {
                        brute.push(b);
                    }
                }
            }
        }
        assert!(!listed.is_empty());
        assert_eq!(listed, brute);
    }
}
