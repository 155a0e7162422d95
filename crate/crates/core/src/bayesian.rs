//! Independent private values, tabulated bidding strategies and Monte
//! Carlo checks of interim optimality and welfare.
//!
//! Sample `s` of every estimator draws the value profile from the counter
//! stream `(seed, s, agent)` and strategy randomness from
//! `(seed, s, agent)` on a separate tag, so estimates for different agents
//! and different deviations are paired on the same draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{
    grid_utilities, optimal_welfare, same_len, sorted_opponents, unilateral_utility, welfare_of_bids,
    CtrProfile, ValueProfile,
};
use crate::equilibria::{BidSource, DEFAULT_GAMMA_TEST_VALUES};
use crate::error::{GspError, Result};
use crate::grid::uniform_levels;
use crate::rng::{tag, uniform};

/// Value-grid points per agent for continuous distributions.
pub const DEFAULT_VALUE_POINTS: usize = 32;
/// Monte Carlo profiles per estimate.
pub const DEFAULT_SAMPLES: usize = 100_000;

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

/// Distribution of one agent's per-click value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform { low: f64, high: f64 },
    Discrete { atoms: Vec<Atom> },
    PointMass { value: f64 },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match self {
            Self::Uniform { low, high } if ok(*low) && ok(*high) && low <= high => Ok(()),
            Self::Uniform { low, high } => Err(GspError::InvalidProfile(format!("bad uniform support [{low}, {high}]"))),
            Self::PointMass { value } if ok(*value) => Ok(()),
            Self::PointMass { value } => Err(GspError::InvalidProfile(format!("bad point mass {value}"))),
            Self::Discrete { atoms } => {
                if atoms.is_empty() || atoms.iter().any(|a| !ok(a.value) || !(a.weight >= 0.0)) {
                    return Err(GspError::InvalidProfile("discrete atoms must be nonnegative and nonempty".into()));
                }
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(GspError::InvalidProfile(format!("discrete weights sum to {total}, not 1")));
                }
                Ok(())
            }
        }
    }

    /// Inverse-CDF draw at uniform `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Self::Uniform { low, high } => low + (high - low) * u,
            Self::PointMass { value } => *value,
            Self::Discrete { atoms } => {
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.weight;
                    if u < acc {
                        return a.value;
                    }
                }
                atoms.iter().rev().find(|a| a.weight > 0.0).map_or(atoms[0].value, |a| a.value)
            }
        }
    }

    /// Finite set of values at which strategies are tabulated and interim
    /// conditions are certified.
    pub fn value_grid(&self, points: usize) -> Vec<f64> {
        match self {
            Self::Uniform { low, high } => {
                if points <= 1 || low == high {
                    return vec![*low];
                }
                let step = (high - low) / (points - 1) as f64;
                let mut g: Vec<f64> = (0..points - 1).map(|k| low + k as f64 * step).collect();
                g.push(*high);
                g
            }
            Self::PointMass { value } => vec![*value],
            Self::Discrete { atoms } => {
                let mut g: Vec<f64> = atoms.iter().filter(|a| a.weight > 0.0).map(|a| a.value).collect();
                g.sort_by(f64::total_cmp);
                g.dedup();
                g
            }
        }
    }
}

fn validate_dists(dists: &[DistributionSpec]) -> Result<()> {
    if dists.is_empty() {
        return Err(GspError::InvalidProfile("no agents".into()));
    }
    dists.iter().try_for_each(DistributionSpec::validate)
}

/// Independent draw of every agent's value for sample `index`.
pub fn sample_profile(dists: &[DistributionSpec], seed: u64, index: u64) -> Result<ValueProfile> {
    validate_dists(dists)?;
    Ok(ValueProfile::new(draw_values(dists, seed, index)).expect("validated supports are nonnegative"))
}

fn draw_values(dists: &[DistributionSpec], seed: u64, index: u64) -> Vec<f64> {
    dists
        .iter()
        .enumerate()
        .map(|(i, d)| d.quantile(uniform(seed, &[tag::VALUES, index, i as u64])))
        .collect()
}

/// How a table maps off-grid values to bids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Nearest,
    /// Linear between neighbouring grid values (pure rules only).
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyRule {
    /// One bid per grid value.
    Pure { bids: Vec<f64> },
    /// One distribution over `levels` per grid value.
    Mixed { levels: Vec<f64>, weights: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStrategy {
    pub value_grid: Vec<f64>,
    pub rule: StrategyRule,
}

impl AgentStrategy {
    fn validate(&self, agent: usize) -> Result<()> {
        let g = &self.value_grid;
        if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GspError::InvalidProfile(format!(
                "value grid of agent {agent} must be nonempty and strictly increasing"
            )));
        }
        match &self.rule {
            StrategyRule::Pure { bids } => {
                same_len("strategy bids vs value grid", g.len(), bids.len())?;
                for (&v, &b) in g.iter().zip(bids) {
                    if !(b >= 0.0) {
                        return Err(GspError::InvalidProfile(format!("agent {agent} has invalid bid {b}")));
                    }
                    if b > v {
                        return Err(GspError::Overbid { agent, bid: b, value: v });
                    }
                }
            }
            StrategyRule::Mixed { levels, weights } => {
                same_len("strategy rows vs value grid", g.len(), weights.len())?;
                for (&v, row) in g.iter().zip(weights) {
                    same_len("mixed row vs levels", levels.len(), row.len())?;
                    let total: f64 = row.iter().sum();
                    if row.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                        return Err(GspError::InvalidProfile(format!("agent {agent} has a row not summing to 1")));
                    }
                    if let Some((b, _)) = levels.iter().zip(row).find(|(b, w)| **w > 0.0 && **b > v) {
                        return Err(GspError::Overbid { agent, bid: *b, value: v });
                    }
                }
            }
        }
        Ok(())
    }

    fn nearest(&self, value: f64) -> usize {
        let g = &self.value_grid;
        let k = g.partition_point(|x| *x < value);
        if k == 0 {
            0
        } else if k == g.len() {
            g.len() - 1
        } else if value - g[k - 1] <= g[k] - value {
            k - 1
        } else {
            k
        }
    }

    /// Bid at `value`; `u` drives mixing. Never exceeds `value`.
    pub fn bid_at(&self, value: f64, u: f64, interpolation: Interpolation) -> f64 {
        let bid = match (&self.rule, interpolation) {
            (StrategyRule::Pure { bids }, Interpolation::Linear) => {
                let g = &self.value_grid;
                let k = g.partition_point(|x| *x < value);
                if k == 0 {
                    bids[0]
                } else if k == g.len() {
                    bids[g.len() - 1]
                } else {
                    let t = (value - g[k - 1]) / (g[k] - g[k - 1]);
                    bids[k - 1] + t * (bids[k] - bids[k - 1])
                }
            }
            (StrategyRule::Pure { bids }, Interpolation::Nearest) => bids[self.nearest(value)],
            (StrategyRule::Mixed { levels, weights }, _) => {
                let row = &weights[self.nearest(value)];
                let mut acc = 0.0;
                let mut pick = row.iter().rposition(|w| *w > 0.0).unwrap_or(0);
                for (k, w) in row.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                levels[pick]
            }
        };
        bid.min(value)
    }
}

/// Per-agent bidding strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTable {
    pub agents: Vec<AgentStrategy>,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl StrategyTable {
    pub fn new(agents: Vec<AgentStrategy>, interpolation: Interpolation) -> Result<Self> {
        let t = Self { agents, interpolation };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(GspError::InvalidProfile("strategy table has no agents".into()));
        }
        self.agents.iter().enumerate().try_for_each(|(i, a)| a.validate(i))
    }

    /// Bid equal to value, exact between grid points.
    pub fn truthful(dists: &[DistributionSpec], value_points: usize) -> Result<Self> {
        validate_dists(dists)?;
        let agents = dists
            .iter()
            .map(|d| {
                let g = d.value_grid(value_points);
                AgentStrategy {
                    rule: StrategyRule::Pure { bids: g.clone() },
                    value_grid: g,
                }
            })
            .collect();
        Self::new(agents, Interpolation::Linear)
    }

    /// A fixed bid per agent, whatever its value (clipped at the value).
    pub fn constant(dists: &[DistributionSpec], bids: &[f64], value_points: usize) -> Result<Self> {
        validate_dists(dists)?;
        same_len("constant bids vs agents", dists.len(), bids.len())?;
        let agents = dists
            .iter()
            .zip(bids)
            .map(|(d, &b)| {
                let g = d.value_grid(value_points);
                AgentStrategy {
                    rule: StrategyRule::Pure {
                        bids: g.iter().map(|&v| b.min(v)).collect(),
                    },
                    value_grid: g,
                }
            })
            .collect();
        Self::new(agents, Interpolation::Nearest)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn bid(&self, agent: usize, value: f64, u: f64) -> f64 {
        self.agents[agent].bid_at(value, u, self.interpolation)
    }

    fn bids_for(&self, values: &[f64], seed: u64, sample: u64, out: &mut [f64]) {
        for (i, (o, &v)) in out.iter_mut().zip(values).enumerate() {
            *o = self.bid(i, v, uniform(seed, &[tag::STRATEGY, sample, i as u64]));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEpsilon {
    /// Largest estimated interim gain over grid values and deviations,
    /// floored at zero.
    pub epsilon: f64,
    /// The same maximum before flooring.
    pub raw_gain: f64,
    /// Value at which the maximum occurs.
    pub value: f64,
    pub deviation: f64,
    /// Standard error of the maximizing paired difference.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BneReport {
    pub epsilon: f64,
    pub std_error: f64,
    pub per_agent: Vec<AgentEpsilon>,
    pub samples: usize,
}

struct InterimScan {
    /// Per deviation: Σ (u_dev − u_prescribed), Σ squares.
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    levels: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn interim_scan(
    table: &StrategyTable,
    dists: &[DistributionSpec],
    alphas: &[f64],
    agent: usize,
    value: f64,
    deviation_points: usize,
    samples: usize,
    seed: u64,
) -> InterimScan {
    let n = dists.len();
    let levels = uniform_levels(value, deviation_points);
    let mut sum = vec![0.0; levels.len()];
    let mut sum_sq = vec![0.0; levels.len()];
    let mut utils = vec![0.0; levels.len()];
    let mut bids = vec![0.0; n];
    for s in 0..samples as u64 {
        let values = draw_values(dists, seed, s);
        table.bids_for(&values, seed, s, &mut bids);
        bids[agent] = table.bid(agent, value, uniform(seed, &[tag::STRATEGY, s, agent as u64]));
        let prescribed = unilateral_utility(agent, bids[agent], &bids, value, alphas);
        let opponents = sorted_opponents(agent, &bids);
        grid_utilities(agent, &levels, &opponents, value, alphas, &mut utils);
        for ((a, q), u) in sum.iter_mut().zip(&mut sum_sq).zip(&utils) {
            let d = u - prescribed;
            *a += d;
            *q += d * d;
        }
    }
    InterimScan { sum, sum_sq, levels }
}

fn check_inputs(table: &StrategyTable, dists: &[DistributionSpec], ctrs: &CtrProfile, samples: usize) -> Result<()> {
    validate_dists(dists)?;
    table.validate()?;
    same_len("strategies vs agents", dists.len(), table.len())?;
    same_len("agents vs slots", ctrs.len(), dists.len())?;
    if samples == 0 {
        return Err(GspError::Domain("need at least one sample".into()));
    }
    Ok(())
}

/// Estimates how much any agent could gain at any tabulated value by
/// switching to a fixed bid on a uniform no-overbid grid of
/// `deviation_points` levels.
pub fn bne_epsilon(
    table: &StrategyTable,
    dists: &[DistributionSpec],
    ctrs: &CtrProfile,
    deviation_points: usize,
    samples: usize,
    seed: u64,
) -> Result<BneReport> {
    check_inputs(table, dists, ctrs, samples)?;
    let tasks: Vec<(usize, f64)> = table
        .agents
        .iter()
        .enumerate()
        .flat_map(|(i, a)| a.value_grid.iter().map(move |&v| (i, v)))
        .collect();
    let m = samples as f64;
    let scans: Vec<(usize, AgentEpsilon)> = tasks
        .par_iter()
        .map(|&(i, v)| {
            let scan = interim_scan(table, dists, ctrs.alphas(), i, v, deviation_points, samples, seed);
            let mut best = AgentEpsilon {
                epsilon: 0.0,
                raw_gain: f64::NEG_INFINITY,
                value: v,
                deviation: scan.levels[0],
                std_error: 0.0,
            };
            for ((s, q), &d) in scan.sum.iter().zip(&scan.sum_sq).zip(&scan.levels) {
                let mean = s / m;
                if mean > best.raw_gain {
                    let var = if samples > 1 { ((q - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
                    best.raw_gain = mean;
                    best.deviation = d;
                    best.std_error = (var / m).sqrt();
                }
            }
            best.epsilon = best.raw_gain.max(0.0);
            (i, best)
        })
        .collect();
    let mut per_agent: Vec<Option<AgentEpsilon>> = vec![None; table.len()];
    for (i, e) in scans {
        if per_agent[i].as_ref().is_none_or(|cur| e.raw_gain > cur.raw_gain) {
            per_agent[i] = Some(e);
        }
    }
    let per_agent: Vec<AgentEpsilon> = per_agent.into_iter().map(|e| e.expect("every agent has a grid value")).collect();
    let worst = per_agent
        .iter()
        .fold(None::<&AgentEpsilon>, |acc, e| match acc {
            Some(a) if a.raw_gain >= e.raw_gain => Some(a),
            _ => Some(e),
        })
        .expect("at least one agent");
    Ok(BneReport {
        epsilon: worst.epsilon,
        std_error: worst.std_error,
        per_agent,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpoaReport {
    pub e_opt: f64,
    pub e_sw: f64,
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

/// `E[OPT(v)] / E[SW(π(b(v)), v)]` with a 95% delta-method interval, OPT
/// and SW evaluated on the same draws.
pub fn bpoa_estimate(
    table: &StrategyTable,
    dists: &[DistributionSpec],
    ctrs: &CtrProfile,
    samples: usize,
    seed: u64,
) -> Result<BpoaReport> {
    check_inputs(table, dists, ctrs, samples)?;
    let alphas = ctrs.alphas();
    let n = dists.len();
    let pairs: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let values = draw_values(dists, seed, s);
            let mut bids = vec![0.0; n];
            table.bids_for(&values, seed, s, &mut bids);
            let sw = welfare_of_bids(&bids, &values, alphas);
            let opt = welfare_of_bids(&values, &values, alphas);
            (opt, sw)
        })
        .collect();
    let m = samples as f64;
    let (so, ss) = pairs.iter().fold((0.0, 0.0), |(a, b), (o, s)| (a + o, b + s));
    let (e_opt, e_sw) = (so / m, ss / m);
    if e_sw <= 0.0 {
        return Err(GspError::UndefinedRatio("expected welfare is zero"));
    }
    let ratio = e_opt / e_sw;
    let half = if samples > 1 {
        let (mut voo, mut vss, mut vos) = (0.0, 0.0, 0.0);
        for (o, s) in &pairs {
            let (d_o, d_s) = (o - e_opt, s - e_sw);
            voo += d_o * d_o;
            vss += d_s * d_s;
            vos += d_o * d_s;
        }
        let k = m - 1.0;
        let var = ((voo / k) - 2.0 * ratio * (vos / k) + ratio * ratio * (vss / k)).max(0.0) / (m * e_sw * e_sw);
        Z95 * var.sqrt()
    } else {
        0.0
    };
    Ok(BpoaReport {
        e_opt,
        e_sw,
        ratio,
        ci_low: ratio - half,
        ci_high: ratio + half,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BneSearchResult {
    pub table: StrategyTable,
    pub report: BneReport,
    /// Largest interim gain of the table entering each iteration.
    pub epsilon_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BneSearchConfig {
    pub value_points: usize,
    pub deviation_points: usize,
    pub iterations: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for BneSearchConfig {
    fn default() -> Self {
        Self {
            value_points: DEFAULT_VALUE_POINTS,
            deviation_points: crate::grid::DEFAULT_POINTS,
            iterations: 20,
            samples: 10_000,
            seed: 0,
        }
    }
}

/// Simultaneous interim best-response iteration from truthful bidding.
/// Convergence is not guaranteed; inspect `report.epsilon` and the trace.
pub fn approx_bne_search(dists: &[DistributionSpec], ctrs: &CtrProfile, cfg: &BneSearchConfig) -> Result<BneSearchResult> {
    if cfg.iterations == 0 {
        return Err(GspError::Domain("need at least one iteration".into()));
    }
    let mut table = StrategyTable::truthful(dists, cfg.value_points)?;
    table.interpolation = Interpolation::Nearest;
    check_inputs(&table, dists, ctrs, cfg.samples)?;
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let iter_seed = crate::rng::derive_key(cfg.seed, &[it as u64]);
        let rows: Vec<(Vec<f64>, f64)> = (0..table.len())
            .into_par_iter()
            .map(|i| {
                let mut gain = f64::NEG_INFINITY;
                let bids = table.agents[i]
                    .value_grid
                    .iter()
                    .map(|&v| {
                        let scan = interim_scan(&table, dists, ctrs.alphas(), i, v, cfg.deviation_points, cfg.samples, iter_seed);
                        // the current bid stays unless something does strictly better
                        let mut best = (table.bid(i, v, 0.0), 0.0);
                        for (&d, &s) in scan.levels.iter().zip(&scan.sum) {
                            if s > best.1 {
                                best = (d, s);
                            }
                        }
                        gain = gain.max(best.1 / cfg.samples as f64);
                        best.0
                    })
                    .collect();
                (bids, gain)
            })
            .collect();
        trace.push(rows.iter().map(|r| r.1).fold(0.0, f64::max));
        for (agent, (bids, _)) in table.agents.iter_mut().zip(rows) {
            agent.rule = StrategyRule::Pure { bids };
        }
        table.validate().map_err(|e| GspError::Invariant(format!("best-response table broke no-overbidding: {e}")))?;
    }
    let report = bne_epsilon(&table, dists, ctrs, cfg.deviation_points, cfg.samples, cfg.seed)?;
    Ok(BneSearchResult {
        table,
        report,
        epsilon_trace: trace,
    })
}

/// Bayesian bid distribution for the structural property: opponents'
/// values drawn from their distributions, each agent tested on a subset of
/// its tabulated values.
pub struct TableSource<'a> {
    pub table: &'a StrategyTable,
    pub dists: &'a [DistributionSpec],
    pub samples: usize,
    pub seed: u64,
    pub test_points: usize,
}

impl<'a> TableSource<'a> {
    pub fn new(table: &'a StrategyTable, dists: &'a [DistributionSpec], samples: usize, seed: u64) -> Self {
        Self {
            table,
            dists,
            samples,
            seed,
            test_points: DEFAULT_GAMMA_TEST_VALUES,
        }
    }
}

impl BidSource for TableSource<'_> {
    fn agents(&self) -> usize {
        self.table.len()
    }

    fn test_values(&self, agent: usize) -> Vec<f64> {
        let g = &self.table.agents[agent].value_grid;
        if g.len() <= self.test_points {
            return g.clone();
        }
        let mut picks: Vec<f64> = (0..self.test_points)
            .map(|k| g[k * (g.len() - 1) / (self.test_points - 1).max(1)])
            .collect();
        picks.dedup();
        picks
    }

    fn samples(&self) -> usize {
        self.samples
    }

    fn draw(&self, agent: usize, value: f64, sample: usize, bids: &mut [f64]) {
        let s = sample as u64;
        let values = draw_values(self.dists, self.seed, s);
        self.table.bids_for(&values, self.seed, s, bids);
        bids[agent] = self.table.bid(agent, value, uniform(self.seed, &[tag::STRATEGY, s, agent as u64]));
    }
}

/// Expected optimal welfare and the welfare produced by `table`, for the
/// structural-property welfare check.
pub fn expected_welfare(
    table: &StrategyTable,
    dists: &[DistributionSpec],
    ctrs: &CtrProfile,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let r = bpoa_estimate(table, dists, ctrs, samples, seed)?;
    Ok((r.e_opt, r.e_sw))
}

/// Convenience: point-mass distributions for a fixed value profile.
pub fn point_masses(values: &ValueProfile) -> Vec<DistributionSpec> {
    values.values().iter().map(|&value| DistributionSpec::PointMass { value }).collect()
}

/// OPT over SW for a deterministic instance, used to cross-check
/// [`bpoa_estimate`] on point masses.
pub fn deterministic_ratio(values: &ValueProfile, bids: &[f64], ctrs: &CtrProfile) -> Result<f64> {
    let sw = welfare_of_bids(bids, values.values(), ctrs.alphas());
    if sw <= 0.0 {
        return Err(GspError::UndefinedRatio("welfare is zero"));
    }
    Ok(optimal_welfare(values, ctrs)? / sw)
}
