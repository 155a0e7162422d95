//! The GSP mechanism and the welfare primitives built on top of it.
//!
//! Agents and slots are 0-based. Slot 0 is the top slot (largest
//! click-through rate). Bids are ranked in decreasing order; equal bids are
//! ranked by agent index, lower index first. The agent in slot `k` pays the
//! bid of the agent in slot `k + 1` per click; the agent in the last slot
//! pays zero.

use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};

fn check_entries(what: &'static str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(GspError::InvalidProfile(format!("{what} must not be empty")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(GspError::NonFinite(what));
    }
    if let Some(x) = xs.iter().find(|x| **x < 0.0) {
        return Err(GspError::InvalidProfile(format!("{what} contains negative entry {x}")));
    }
    Ok(())
}

/// Click-through rates per slot, nonincreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCtrs")]
pub struct CtrProfile {
    alphas: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCtrs {
    alphas: Vec<f64>,
}

impl TryFrom<RawCtrs> for CtrProfile {
    type Error = GspError;
    fn try_from(raw: RawCtrs) -> Result<Self> {
        CtrProfile::new(raw.alphas)
    }
}

impl CtrProfile {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        check_entries("alphas", &alphas)?;
        if let Some(k) = alphas.windows(2).position(|w| w[0] < w[1]) {
            return Err(GspError::InvalidProfile(format!(
                "alphas must be nonincreasing (slot {} < slot {})",
                k,
                k + 1
            )));
        }
        Ok(Self { alphas })
    }

    /// Sorts arbitrary nonnegative rates into slot order.
    pub fn from_unsorted(mut alphas: Vec<f64>) -> Result<Self> {
        check_entries("alphas", &alphas)?;
        alphas.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn top(&self) -> f64 {
        self.alphas[0]
    }

    /// Same profile scaled so the top slot has rate 1.
    pub fn normalized(&self) -> Result<Self> {
        let top = self.top();
        if top <= 0.0 {
            return Err(GspError::Domain("cannot normalize all-zero click-through rates".into()));
        }
        Ok(Self {
            alphas: self.alphas.iter().map(|a| a / top).collect(),
        })
    }

    fn padded(&self, n: usize) -> Self {
        let mut alphas = self.alphas.clone();
        alphas.resize(n.max(alphas.len()), 0.0);
        Self { alphas }
    }
}

/// Per-click values, one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawValues")]
pub struct ValueProfile {
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawValues {
    values: Vec<f64>,
}

impl TryFrom<RawValues> for ValueProfile {
    type Error = GspError;
    fn try_from(raw: RawValues) -> Result<Self> {
        ValueProfile::new(raw.values)
    }
}

impl ValueProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_entries("values", &values)?;
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * c).collect())
    }

    fn padded(&self, n: usize) -> Self {
        let mut values = self.values.clone();
        values.resize(n.max(values.len()), 0.0);
        Self { values }
    }
}

/// Per-click bids, one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBids")]
pub struct BidProfile {
    bids: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBids {
    bids: Vec<f64>,
}

impl TryFrom<RawBids> for BidProfile {
    type Error = GspError;
    fn try_from(raw: RawBids) -> Result<Self> {
        BidProfile::new(raw.bids)
    }
}

impl BidProfile {
    pub fn new(bids: Vec<f64>) -> Result<Self> {
        check_entries("bids", &bids)?;
        Ok(Self { bids })
    }

    /// Everyone bids their value.
    pub fn truthful(values: &ValueProfile) -> Self {
        Self {
            bids: values.values.clone(),
        }
    }

    pub fn bids(&self) -> &[f64] {
        &self.bids
    }

    pub fn len(&self) -> usize {
        self.bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty()
    }

    /// Copy of the profile with agent `agent` bidding `bid` instead.
    pub fn with_bid(&self, agent: usize, bid: f64) -> Result<Self> {
        check_agent(agent, self.len())?;
        let mut bids = self.bids.clone();
        bids[agent] = bid;
        Self::new(bids)
    }

    /// Rejects any bid strictly above the agent's value.
    pub fn check_no_overbidding(&self, values: &ValueProfile) -> Result<()> {
        same_len("bids vs values", values.len(), self.len())?;
        for (agent, (&bid, &value)) in self.bids.iter().zip(&values.values).enumerate() {
            if bid > value {
                return Err(GspError::Overbid { agent, bid, value });
            }
        }
        Ok(())
    }

    fn padded(&self, n: usize) -> Self {
        let mut bids = self.bids.clone();
        bids.resize(n.max(bids.len()), 0.0);
        Self { bids }
    }
}

/// Result of one GSP round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    /// `assignment[k]` is the agent placed in slot `k`.
    pub assignment: Vec<usize>,
    /// `slot_of[i]` is the slot of agent `i`.
    pub slot_of: Vec<usize>,
    /// Per-click price paid by each agent.
    pub payments: Vec<f64>,
    /// Clicks received by each agent.
    pub clicks: Vec<f64>,
}

/// A value profile and click-through rates of equal length.
///
/// Ragged inputs are squared off with zero-rate slots or zero-value agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub values: ValueProfile,
    pub ctrs: CtrProfile,
}

impl Instance {
    pub fn new(values: ValueProfile, ctrs: CtrProfile) -> Self {
        let n = values.len().max(ctrs.len());
        Self {
            values: values.padded(n),
            ctrs: ctrs.padded(n),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pads a bid profile to this instance's size with zero bids.
    pub fn pad_bids(&self, bids: &BidProfile) -> Result<BidProfile> {
        if bids.len() > self.len() {
            return Err(GspError::Shape {
                what: "bids vs padded instance",
                expected: self.len(),
                got: bids.len(),
            });
        }
        Ok(bids.padded(self.len()))
    }
}

pub(crate) fn check_agent(agent: usize, n: usize) -> Result<()> {
    if agent >= n {
        Err(GspError::IndexOutOfRange { index: agent, len: n })
    } else {
        Ok(())
    }
}

pub(crate) fn same_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(GspError::Shape { what, expected, got })
    } else {
        Ok(())
    }
}

/// Agents in slot order: decreasing bid, ties to the lower index.
pub fn rank_agents(bids: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..bids.len()).collect();
    order.sort_by(|&a, &b| bids[b].total_cmp(&bids[a]).then(a.cmp(&b)));
    order
}

fn invert(assignment: &[usize]) -> Result<Vec<usize>> {
    let n = assignment.len();
    let mut slot_of = vec![usize::MAX; n];
    for (slot, &agent) in assignment.iter().enumerate() {
        check_agent(agent, n)?;
        if slot_of[agent] != usize::MAX {
            return Err(GspError::InvalidProfile(format!(
                "assignment is not a bijection: agent {agent} appears twice"
            )));
        }
        slot_of[agent] = slot;
    }
    Ok(slot_of)
}

/// Runs the GSP auction.
pub fn run_gsp(bids: &BidProfile, ctrs: &CtrProfile) -> Result<AuctionOutcome> {
    same_len("bids vs slots", ctrs.len(), bids.len())?;
    let b = bids.bids();
    let assignment = rank_agents(b);
    let n = assignment.len();
    let mut slot_of = vec![0; n];
    let mut payments = vec![0.0; n];
    let mut clicks = vec![0.0; n];
    for (slot, &agent) in assignment.iter().enumerate() {
        slot_of[agent] = slot;
        payments[agent] = assignment.get(slot + 1).map_or(0.0, |&next| b[next]);
        clicks[agent] = ctrs.alphas()[slot];
    }
    Ok(AuctionOutcome {
        assignment,
        slot_of,
        payments,
        clicks,
    })
}

/// `clicks * (value - price)` for one agent.
pub fn utility(agent: usize, values: &ValueProfile, outcome: &AuctionOutcome) -> Result<f64> {
    same_len("values vs outcome", outcome.clicks.len(), values.len())?;
    check_agent(agent, values.len())?;
    Ok(outcome.clicks[agent] * (values.values()[agent] - outcome.payments[agent]))
}

/// Total value of an assignment (slot -> agent).
pub fn social_welfare(assignment: &[usize], values: &ValueProfile, ctrs: &CtrProfile) -> Result<f64> {
    same_len("assignment vs slots", ctrs.len(), assignment.len())?;
    same_len("values vs slots", ctrs.len(), values.len())?;
    invert(assignment)?;
    Ok(welfare_unchecked(assignment, values.values(), ctrs.alphas()))
}

pub(crate) fn welfare_unchecked(assignment: &[usize], values: &[f64], alphas: &[f64]) -> f64 {
    assignment
        .iter()
        .zip(alphas)
        .map(|(&agent, &a)| a * values[agent])
        .sum()
}

/// Welfare of the GSP outcome for `bids`, evaluated at `values`.
pub(crate) fn welfare_of_bids(bids: &[f64], values: &[f64], alphas: &[f64]) -> f64 {
    welfare_unchecked(&rank_agents(bids), values, alphas)
}

/// Assortative matching: k-th highest value to slot k, ties by index.
pub fn optimal_assignment(values: &ValueProfile, ctrs: &CtrProfile) -> Result<Vec<usize>> {
    same_len("values vs slots", ctrs.len(), values.len())?;
    Ok(rank_agents(values.values()))
}

pub fn optimal_welfare(values: &ValueProfile, ctrs: &CtrProfile) -> Result<f64> {
    let assignment = optimal_assignment(values, ctrs)?;
    Ok(welfare_unchecked(&assignment, values.values(), ctrs.alphas()))
}

/// GSP assignment with `agent` removed: slot -> agent, `None` for the
/// zero-bid virtual agent that fills the vacated bottom slot.
pub fn assignment_excluding(agent: usize, bids: &BidProfile, ctrs: &CtrProfile) -> Result<Vec<Option<usize>>> {
    same_len("bids vs slots", ctrs.len(), bids.len())?;
    check_agent(agent, bids.len())?;
    let mut slots: Vec<Option<usize>> = rank_agents(bids.bids())
        .into_iter()
        .filter(|&j| j != agent)
        .map(Some)
        .collect();
    slots.push(None);
    Ok(slots)
}

/// Bid of the agent that would occupy each slot if `agent` were absent.
/// The bottom entry is always 0.
pub fn bids_excluding(agent: usize, bids: &[f64]) -> Vec<f64> {
    let mut others: Vec<f64> = bids
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != agent)
        .map(|(_, &b)| b)
        .collect();
    others.sort_by(|a, b| b.total_cmp(a));
    others.push(0.0);
    others
}

fn check_subset(subset: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in subset {
        check_agent(i, n)?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(GspError::InvalidProfile(format!("agent {i} repeated in subset")));
        }
    }
    Ok(())
}

/// Welfare collected by the agents in `subset` under `assignment`.
pub fn restricted_welfare(
    subset: &[usize],
    assignment: &[usize],
    values: &ValueProfile,
    ctrs: &CtrProfile,
) -> Result<f64> {
    same_len("assignment vs slots", ctrs.len(), assignment.len())?;
    same_len("values vs slots", ctrs.len(), values.len())?;
    check_subset(subset, values.len())?;
    let slot_of = invert(assignment)?;
    Ok(subset
        .iter()
        .map(|&i| values.values()[i] * ctrs.alphas()[slot_of[i]])
        .sum())
}

/// Best welfare the agents in `subset` could obtain on their own, placing
/// them in the top `|subset|` slots by decreasing value.
pub fn restricted_optimal_welfare(subset: &[usize], values: &ValueProfile, ctrs: &CtrProfile) -> Result<f64> {
    same_len("values vs slots", ctrs.len(), values.len())?;
    check_subset(subset, values.len())?;
    let mut vs: Vec<f64> = subset.iter().map(|&i| values.values()[i]).collect();
    vs.sort_by(|a, b| b.total_cmp(a));
    Ok(vs.iter().zip(ctrs.alphas()).map(|(v, a)| v * a).sum())
}

/// Utility of `agent` bidding `bid` while everyone else keeps `bids`.
///
/// The agent's own entry in `bids` is ignored.
pub fn unilateral_utility(agent: usize, bid: f64, bids: &[f64], value: f64, alphas: &[f64]) -> f64 {
    let mut rank = 0;
    let mut price = 0.0f64;
    for (j, &other) in bids.iter().enumerate() {
        if j == agent {
            continue;
        }
        if other > bid || (other == bid && j < agent) {
            rank += 1;
        } else if other > price {
            price = other;
        }
    }
    alphas[rank] * (value - price)
}

/// Opponent bids of `agent`, sorted in GSP slot order.
pub(crate) fn sorted_opponents(agent: usize, bids: &[f64]) -> Vec<(f64, usize)> {
    let mut opp: Vec<(f64, usize)> = bids
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != agent)
        .map(|(j, &b)| (b, j))
        .collect();
    opp.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    opp
}

/// Utilities of every bid in `grid` (ascending) against fixed opponents.
///
/// `opponents` must come from [`sorted_opponents`]; `out` receives one
/// utility per grid point.
pub(crate) fn grid_utilities(
    agent: usize,
    grid: &[f64],
    opponents: &[(f64, usize)],
    value: f64,
    alphas: &[f64],
    out: &mut [f64],
) {
    // Number of opponents ranked above us only shrinks as the bid grows.
    let mut rank = opponents.len();
    for (slot, &bid) in grid.iter().enumerate() {
        while rank > 0 {
            let (b, j) = opponents[rank - 1];
            if b > bid || (b == bid && j < agent) {
                break;
            }
            rank -= 1;
        }
        let price = opponents.get(rank).map_or(0.0, |o| o.0);
        out[slot] = alphas[rank] * (value - price);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bids(b: &[f64]) -> BidProfile {
        BidProfile::new(b.to_vec()).unwrap()
    }
    fn ctrs(a: &[f64]) -> CtrProfile {
        CtrProfile::new(a.to_vec()).unwrap()
    }
    fn vals(v: &[f64]) -> ValueProfile {
        ValueProfile::new(v.to_vec()).unwrap()
    }

    #[test]
    fn gsp_three_agents() {
        let out = run_gsp(&bids(&[0.9, 0.5, 0.2]), &ctrs(&[1.0, 0.6, 0.3])).unwrap();
        assert_eq!(out.assignment, vec![0, 1, 2]);
        assert_eq!(out.payments, vec![0.5, 0.2, 0.0]);
        let v = vals(&[1.0, 0.8, 0.5]);
        let u: Vec<f64> = (0..3).map(|i| utility(i, &v, &out).unwrap()).collect();
        for (got, want) in u.iter().zip([0.5, 0.36, 0.15]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_go_to_lower_index() {
        let out = run_gsp(&bids(&[0.0, 0.0, 0.0]), &ctrs(&[1.0, 0.5, 0.1])).unwrap();
        assert_eq!(out.assignment, vec![0, 1, 2]);
        assert_eq!(out.payments, vec![0.0; 3]);

        let out = run_gsp(&bids(&[1.0, 1.0]), &ctrs(&[1.0, 0.5])).unwrap();
        assert_eq!(out.assignment, vec![0, 1]);
        assert_eq!(out.payments, vec![1.0, 0.0]);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let err = run_gsp(&bids(&[1.0, 0.5]), &ctrs(&[1.0])).unwrap_err();
        assert!(matches!(err, GspError::Shape { .. }));
    }

    #[test]
    fn profile_validation() {
        assert!(CtrProfile::new(vec![0.5, 1.0]).is_err());
        assert!(CtrProfile::new(vec![]).is_err());
        assert!(ValueProfile::new(vec![-1.0]).is_err());
        assert!(BidProfile::new(vec![f64::NAN]).is_err());
        let c: CtrProfile = serde_json::from_str(r#"{"alphas":[1.0,0.2]}"#).unwrap();
        assert_eq!(c.alphas(), &[1.0, 0.2]);
        assert!(serde_json::from_str::<CtrProfile>(r#"{"alphas":[0.2,1.0]}"#).is_err());
    }

    #[test]
    fn utility_edge_cases() {
        let v = vals(&[0.5, 0.5]);
        let out = run_gsp(&bids(&[0.5, 0.5]), &ctrs(&[1.0, 0.0])).unwrap();
        assert_eq!(utility(0, &v, &out).unwrap(), 0.0);
        assert_eq!(utility(1, &v, &out).unwrap(), 0.0);
        assert!(matches!(utility(2, &v, &out), Err(GspError::IndexOutOfRange { .. })));
    }

    #[test]
    fn welfare_examples() {
        let v = vals(&[3.0, 2.0, 1.0]);
        let a = ctrs(&[3.0, 2.0, 1.0]);
        assert_eq!(social_welfare(&[0, 1, 2], &v, &a).unwrap(), 14.0);
        assert_eq!(optimal_welfare(&v, &a).unwrap(), 14.0);
        assert!(social_welfare(&[0, 0, 2], &v, &a).is_err());
        assert_eq!(social_welfare(&[2, 1, 0], &v, &ctrs(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(optimal_welfare(&vals(&[4.0]), &ctrs(&[0.5])).unwrap(), 2.0);
        assert_eq!(optimal_welfare(&vals(&[0.0, 0.0]), &ctrs(&[1.0, 0.5])).unwrap(), 0.0);
        assert_eq!(optimal_welfare(&vals(&[1.0, 7.0, 3.0]), &ctrs(&[2.0, 0.0, 0.0])).unwrap(), 14.0);
    }

    #[test]
    fn optimal_assignment_examples() {
        let a = ctrs(&[3.0, 2.0, 1.0]);
        assert_eq!(optimal_assignment(&vals(&[1.0, 2.0, 3.0]), &a).unwrap(), vec![2, 1, 0]);
        assert_eq!(optimal_assignment(&vals(&[1.0, 1.0, 1.0]), &a).unwrap(), vec![0, 1, 2]);
        assert_eq!(optimal_assignment(&vals(&[5.0]), &ctrs(&[1.0])).unwrap(), vec![0]);
    }

    #[test]
    fn excluding_examples() {
        let a = ctrs(&[1.0, 0.6, 0.3]);
        let b = bids(&[0.9, 0.5, 0.2]);
        assert_eq!(assignment_excluding(0, &b, &a).unwrap(), vec![Some(1), Some(2), None]);
        assert_eq!(assignment_excluding(2, &b, &a).unwrap(), vec![Some(0), Some(1), None]);
        assert_eq!(bids_excluding(0, b.bids()), vec![0.5, 0.2, 0.0]);
        assert_eq!(assignment_excluding(0, &bids(&[3.0]), &ctrs(&[1.0])).unwrap(), vec![None]);
        assert!(assignment_excluding(3, &b, &a).is_err());
    }

    #[test]
    fn restricted_examples() {
        let v = vals(&[3.0, 2.0, 1.0]);
        let a = ctrs(&[3.0, 2.0, 1.0]);
        let sw = social_welfare(&[0, 1, 2], &v, &a).unwrap();
        assert_eq!(restricted_welfare(&[0, 1, 2], &[0, 1, 2], &v, &a).unwrap(), sw);
        assert_eq!(restricted_welfare(&[], &[0, 1, 2], &v, &a).unwrap(), 0.0);
        assert_eq!(restricted_optimal_welfare(&[1, 2], &v, &a).unwrap(), 8.0);
        assert!(restricted_welfare(&[1, 1], &[0, 1, 2], &v, &a).is_err());
        assert!(restricted_optimal_welfare(&[4], &v, &a).is_err());
    }

    #[test]
    fn instance_padding() {
        let inst = Instance::new(vals(&[1.0, 2.0, 3.0]), ctrs(&[1.0]));
        assert_eq!(inst.ctrs.alphas(), &[1.0, 0.0, 0.0]);
        let inst = Instance::new(vals(&[1.0]), ctrs(&[1.0, 0.5]));
        assert_eq!(inst.values.values(), &[1.0, 0.0]);
        assert_eq!(inst.pad_bids(&bids(&[0.3])).unwrap().bids(), &[0.3, 0.0]);
    }

    #[test]
    fn grid_sweep_matches_pointwise() {
        let alphas = [1.0, 0.7, 0.4, 0.1];
        let b = [0.5, 0.3, 0.5, 0.0];
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).chain([0.3, 0.5]).collect();
        let mut grid = grid;
        grid.sort_by(f64::total_cmp);
        for agent in 0..4 {
            let opp = sorted_opponents(agent, &b);
            let mut out = vec![0.0; grid.len()];
            grid_utilities(agent, &grid, &opp, 0.9, &alphas, &mut out);
            for (g, u) in grid.iter().zip(&out) {
                assert_eq!(*u, unilateral_utility(agent, *g, &b, 0.9, &alphas));
            }
        }
    }
}
