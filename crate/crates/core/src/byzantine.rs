//! Populations mixing Hedge learners with scripted ("byzantine") bidders
//! that never overbid.

use serde::{Deserialize, Serialize};

use crate::auction::{check_agent, restricted_optimal_welfare, same_len, CtrProfile, ValueProfile};
use crate::error::{GspError, Result};
use crate::grid::BidGrid;
use crate::learning::{
    external_regret, hedge_learners, regret_slack, run_participants, welfare_ratio_floor, Participant, RepeatedRun,
};
use crate::rng::{tag, uniform};
use crate::GAMMA_EQ;

/// How a byzantine agent bids each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ByzantineScript {
    Constant { bid: f64 },
    /// Cycled when the run is longer than the list.
    Sequence { bids: Vec<f64> },
    /// Uniform on `[0, v_i]`, drawn from the counter stream of
    /// `(seed, round, agent)`.
    Random,
}

impl ByzantineScript {
    pub fn validate(&self, agent: usize, value: f64) -> Result<()> {
        let check = |bid: f64| {
            if !bid.is_finite() || bid < 0.0 {
                Err(GspError::InvalidProfile(format!("script of agent {agent} has invalid bid {bid}")))
            } else if bid > value {
                Err(GspError::Overbid { agent, bid, value })
            } else {
                Ok(())
            }
        };
        match self {
            Self::Constant { bid } => check(*bid),
            Self::Sequence { bids } if bids.is_empty() => {
                Err(GspError::InvalidProfile(format!("script of agent {agent} has no bids")))
            }
            Self::Sequence { bids } => bids.iter().try_for_each(|&b| check(b)),
            Self::Random => Ok(()),
        }
    }

    pub fn bid(&self, round: usize, value: f64, seed: u64, agent: usize) -> f64 {
        match self {
            Self::Constant { bid } => *bid,
            Self::Sequence { bids } => bids[round % bids.len()],
            Self::Random => value * uniform(seed, &[tag::SCRIPT_BID, round as u64, agent as u64]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByzantineAgent {
    pub agent: usize,
    pub script: ByzantineScript,
}

/// Rational agents `N` and scripted agents `M`; together they cover every
/// agent exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub rational: Vec<usize>,
    pub byzantine: Vec<ByzantineAgent>,
}

impl PopulationSpec {
    /// Everyone rational.
    pub fn all_rational(n: usize) -> Self {
        Self {
            rational: (0..n).collect(),
            byzantine: Vec::new(),
        }
    }

    /// Agents listed in `byzantine` follow their scripts; all others learn.
    pub fn with_byzantine(n: usize, byzantine: Vec<ByzantineAgent>) -> Self {
        let rational = (0..n).filter(|i| byzantine.iter().all(|b| b.agent != *i)).collect();
        Self { rational, byzantine }
    }

    pub fn validate(&self, values: &ValueProfile) -> Result<()> {
        let n = values.len();
        let mut seen = vec![false; n];
        let ids = self.rational.iter().copied().chain(self.byzantine.iter().map(|b| b.agent));
        for i in ids {
            check_agent(i, n)?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(GspError::InvalidProfile(format!("agent {i} listed twice in population")));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(GspError::InvalidProfile(format!("agent {i} missing from population")));
        }
        for b in &self.byzantine {
            b.script.validate(b.agent, values.values()[b.agent])?;
        }
        Ok(())
    }
}

/// `OPT_N`: best welfare the rational agents could reach among themselves.
pub fn opt_rational(values: &ValueProfile, ctrs: &CtrProfile, pop: &PopulationSpec) -> Result<f64> {
    restricted_optimal_welfare(&pop.rational, values, ctrs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByzantineReport {
    /// Average total welfare over rounds, byzantine agents included.
    pub sw_total: f64,
    /// Average welfare of the rational agents only.
    pub sw_rational: f64,
    pub opt_rational: f64,
    pub opt: f64,
    /// `sw_total / opt_rational`; informational when `N` is empty.
    pub ratio: Option<f64>,
    /// Average realized regret of each rational agent, in `rational` order.
    pub rational_regrets: Vec<f64>,
    /// Guaranteed floor on `ratio` given the measured regrets.
    pub ratio_floor: Option<f64>,
    pub bound_holds: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct ByzantineRun {
    pub run: RepeatedRun,
    pub grid: BidGrid,
    pub report: ByzantineReport,
}

/// Repeated GSP where agents in `N` learn by Hedge over `grid_points`
/// no-overbid levels and agents in `M` follow their scripts.
pub fn run_byzantine(
    values: &ValueProfile,
    ctrs: &CtrProfile,
    pop: &PopulationSpec,
    grid_points: usize,
    rounds: usize,
    seed: u64,
) -> Result<ByzantineRun> {
    same_len("values vs slots", ctrs.len(), values.len())?;
    pop.validate(values)?;
    let grid = BidGrid::uniform_no_overbid(values, grid_points);
    let mut participants: Vec<Participant> = hedge_learners(values, ctrs, &grid, rounds)?
        .into_iter()
        .map(Participant::Learner)
        .collect();
    for b in &pop.byzantine {
        participants[b.agent] = Participant::Scripted(b.script.clone());
    }
    let run = run_participants(values, ctrs, participants, rounds, seed)?;

    let seq = &run.sequence;
    let t = seq.rounds() as f64;
    let vs = values.values();
    let alphas = ctrs.alphas();
    let mut rational_sum = 0.0;
    for r in 0..seq.rounds() {
        let assignment = seq.assignment(r);
        for (slot, &agent) in assignment.iter().enumerate() {
            if pop.rational.contains(&agent) {
                rational_sum += alphas[slot] * vs[agent];
            }
        }
    }
    let sw_total = run.welfare_sum / t;
    let opt_n = opt_rational(values, ctrs, pop)?;
    let rational_regrets = pop
        .rational
        .iter()
        .map(|&i| external_regret(i, seq, values, ctrs, &grid))
        .collect::<Result<Vec<f64>>>()?;
    let (ratio, ratio_floor, bound_holds) = if opt_n > 0.0 {
        let slacks: Vec<f64> = pop
            .rational
            .iter()
            .zip(&rational_regrets)
            .map(|(&i, &r)| regret_slack(r, grid.levels(i), vs[i], ctrs.top()))
            .collect();
        let ratio = sw_total / opt_n;
        let floor = welfare_ratio_floor(GAMMA_EQ, &slacks, opt_n);
        (Some(ratio), Some(floor), Some(ratio >= floor))
    } else {
        (None, None, None)
    };
    let report = ByzantineReport {
        sw_total,
        sw_rational: rational_sum / t,
        opt_rational: opt_n,
        opt: crate::auction::optimal_welfare(values, ctrs)?,
        ratio,
        rational_regrets,
        ratio_floor,
        bound_holds,
    };
    Ok(ByzantineRun { run, grid, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::run_repeated_auction;

    fn vals(v: &[f64]) -> ValueProfile {
        ValueProfile::new(v.to_vec()).unwrap()
    }
    fn ctrs(a: &[f64]) -> CtrProfile {
        CtrProfile::new(a.to_vec()).unwrap()
    }

    #[test]
    fn opt_rational_examples() {
        let v = vals(&[3.0, 2.0, 1.0]);
        let a = ctrs(&[3.0, 2.0, 1.0]);
        let all = PopulationSpec::all_rational(3);
        assert_eq!(opt_rational(&v, &a, &all).unwrap(), 14.0);
        let top = PopulationSpec {
            rational: vec![0],
            byzantine: vec![],
        };
        assert_eq!(opt_rational(&v, &a, &top).unwrap(), 9.0);
        let pop = PopulationSpec::with_byzantine(
            3,
            vec![ByzantineAgent {
                agent: 0,
                script: ByzantineScript::Constant { bid: 0.0 },
            }],
        );
        assert_eq!(pop.rational, vec![1, 2]);
        assert_eq!(opt_rational(&v, &a, &pop).unwrap(), 8.0);
    }

    #[test]
    fn overbidding_scripts_rejected_before_running() {
        let v = vals(&[1.0, 0.5]);
        let a = ctrs(&[1.0, 0.5]);
        let pop = PopulationSpec::with_byzantine(
            2,
            vec![ByzantineAgent {
                agent: 1,
                script: ByzantineScript::Sequence { bids: vec![0.1, 0.6] },
            }],
        );
        assert!(matches!(
            run_byzantine(&v, &a, &pop, 8, 10, 0),
            Err(GspError::Overbid { agent: 1, .. })
        ));
    }

    #[test]
    fn malformed_population_rejected() {
        let v = vals(&[1.0, 0.5]);
        let dup = PopulationSpec {
            rational: vec![0, 0],
            byzantine: vec![],
        };
        assert!(dup.validate(&v).is_err());
        let missing = PopulationSpec {
            rational: vec![0],
            byzantine: vec![],
        };
        assert!(missing.validate(&v).is_err());
    }

    #[test]
    fn empty_byzantine_set_matches_plain_learning() {
        let v = vals(&[0.8, 0.6, 0.3]);
        let a = ctrs(&[1.0, 0.5, 0.25]);
        let grid = BidGrid::uniform_no_overbid(&v, 16);
        let plain = run_repeated_auction(&v, &a, hedge_learners(&v, &a, &grid, 500).unwrap(), 500, 4).unwrap();
        let byz = run_byzantine(&v, &a, &PopulationSpec::all_rational(3), 16, 500, 4).unwrap();
        assert_eq!(plain.sequence, byz.run.sequence);
        assert_eq!(plain.welfare_sum, byz.run.welfare_sum);
    }

    #[test]
    fn zero_bidding_high_value_agent() {
        let v = vals(&[5.0, 0.6, 0.3]);
        let a = ctrs(&[1.0, 0.5, 0.25]);
        let pop = PopulationSpec::with_byzantine(
            3,
            vec![ByzantineAgent {
                agent: 0,
                script: ByzantineScript::Constant { bid: 0.0 },
            }],
        );
        let r = run_byzantine(&v, &a, &pop, 16, 3000, 8).unwrap().report;
        assert_eq!(r.opt_rational, 0.6 + 0.15);
        assert!(r.opt_rational <= r.opt);
        assert!(r.sw_rational <= r.sw_total + 1e-12);
        assert_eq!(r.bound_holds, Some(true), "{r:?}");
    }

    #[test]
    fn no_rational_agents_is_informational() {
        let v = vals(&[0.5, 0.4]);
        let a = ctrs(&[1.0, 0.5]);
        let pop = PopulationSpec::with_byzantine(
            2,
            vec![
                ByzantineAgent {
                    agent: 0,
                    script: ByzantineScript::Random,
                },
                ByzantineAgent {
                    agent: 1,
                    script: ByzantineScript::Constant { bid: 0.4 },
                },
            ],
        );
        let r = run_byzantine(&v, &a, &pop, 8, 100, 1).unwrap();
        assert_eq!(r.report.ratio, None);
        assert_eq!(r.report.bound_holds, None);
        for t in 0..100 {
            assert!(r.run.sequence.bids(t)[0] <= 0.5);
        }
    }
}
