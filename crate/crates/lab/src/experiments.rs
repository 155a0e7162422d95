use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gsp_core::auction::{optimal_welfare, run_gsp, social_welfare, utility};
use gsp_core::bayesian::{
    approx_bne_search, bne_epsilon, bpoa_estimate, BneReport, BneSearchConfig, BpoaReport, StrategyTable, TableSource,
};
use gsp_core::byzantine::{run_byzantine, ByzantineReport, PopulationSpec};
use gsp_core::equilibria::{
    check_pure_ne, default_epsilon, enumerate_pure_ne, lemma1_consistency, pure_poa_search, structural_gamma,
    GammaReport, NeVerdict, PoaSearchConfig, PoaSearchResult, LEMMA1_TOLERANCE,
};
use gsp_core::frontier::{
    maximize_3slot, maximize_cyclic, padding_readings, tight_instance, OptimizerResult, PaddingReading, PoaCase,
    TightInstance, TIGHT_ALPHAS,
};
use gsp_core::learning::{
    average_welfare, empirical_cce_check, external_regret, grid_resolution, hedge_learners, hedge_regret_bound,
    regret_slack, run_repeated_auction, welfare_ratio_floor, DeclarationSequence, RoundSource,
};
use gsp_core::{AuctionOutcome, BidGrid, BidProfile, CtrProfile, GAMMA_EQ};
use serde::Serialize;

use crate::config::*;
use crate::error::LabError;
use crate::report::write_report;

/// Slack on the Hedge regret guarantee, for floating-point accumulation.
pub const REGRET_TOLERANCE: f64 = 1e-9;

pub struct Outcome {
    pub summary: Vec<String>,
    pub files: Vec<PathBuf>,
    pub violations: Vec<String>,
}

fn finish<T: Serialize>(cfg: &ExperimentConfig, out: &Path, result: &T, summary: Vec<String>, violations: Vec<String>, mut files: Vec<PathBuf>) -> Result<Outcome, LabError> {
    files.insert(0, write_report(cfg, out, result, &violations)?);
    Ok(Outcome { summary, files, violations })
}

pub fn dispatch(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, LabError> {
    match &cfg.experiment {
        Experiment::Simulate(p) => simulate(cfg, p, out),
        Experiment::CheckNe(p) => check_ne(cfg, p, out),
        Experiment::Enumerate(p) => enumerate(cfg, p, out),
        Experiment::Learn(p) => learn(cfg, p, out),
        Experiment::Bpoa(p) => bpoa(cfg, p, out),
        Experiment::Byzantine(p) => byzantine(cfg, p, out),
        Experiment::Poa3(p) => poa3(cfg, p, out),
        Experiment::Cyclic(p) => cyclic(cfg, p, out),
        Experiment::TightInstance(p) => tight(cfg, p, out),
    }
}

#[derive(Serialize)]
struct SimulateResult {
    bids: Vec<f64>,
    outcome: AuctionOutcome,
    utilities: Vec<f64>,
    welfare: f64,
    opt: f64,
    ratio: Option<f64>,
}

fn simulate(cfg: &ExperimentConfig, p: &SimulateParams, out: &Path) -> Result<Outcome, LabError> {
    let inst = p.instance.build()?;
    let bids = match &p.bids {
        Some(b) => inst.pad_bids(&BidProfile::new(b.clone())?)?,
        None => BidProfile::truthful(&inst.values),
    };
    let outcome = run_gsp(&bids, &inst.ctrs)?;
    let utilities = (0..inst.len())
        .map(|i| utility(i, &inst.values, &outcome))
        .collect::<Result<Vec<_>, _>>()?;
    let welfare = social_welfare(&outcome.assignment, &inst.values, &inst.ctrs)?;
    let opt = optimal_welfare(&inst.values, &inst.ctrs)?;
    let ratio = (welfare > 0.0).then(|| opt / welfare);
    let summary = vec![
        format!("assignment (slot -> agent): {:?}", outcome.assignment),
        format!("welfare {welfare:.6}, optimum {opt:.6}"),
    ];
    let result = SimulateResult {
        bids: bids.bids().to_vec(),
        outcome,
        utilities,
        welfare,
        opt,
        ratio,
    };
    finish(cfg, out, &result, summary, vec![], vec![])
}

#[derive(Serialize)]
struct CheckNeResult {
    verdict: NeVerdict,
    welfare: f64,
    opt: f64,
    ratio: Option<f64>,
}

fn check_ne(cfg: &ExperimentConfig, p: &CheckNeParams, out: &Path) -> Result<Outcome, LabError> {
    let inst = p.instance.build()?;
    let bids = inst.pad_bids(&BidProfile::new(p.bids.clone())?)?;
    let grid = match &p.grid {
        Some(levels) => {
            let mut levels = levels.clone();
            levels.resize(inst.len(), vec![0.0]);
            BidGrid::from_points(levels)?
        }
        None => BidGrid::uniform_no_overbid(&inst.values, p.grid_points),
    };
    let epsilon = p.epsilon.unwrap_or_else(|| default_epsilon(&inst.values, &inst.ctrs));
    let verdict = check_pure_ne(&bids, &inst.values, &inst.ctrs, &grid, epsilon)?;
    let welfare = social_welfare(&gsp_core::auction::rank_agents(bids.bids()), &inst.values, &inst.ctrs)?;
    let opt = optimal_welfare(&inst.values, &inst.ctrs)?;
    let summary = vec![format!(
        "equilibrium: {} (worst deviation gain {:.3e} by agent {}, epsilon {epsilon:.3e})",
        verdict.is_equilibrium, verdict.worst_deviation.gain, verdict.worst_deviation.agent
    )];
    let result = CheckNeResult {
        verdict,
        welfare,
        opt,
        ratio: (welfare > 0.0).then(|| opt / welfare),
    };
    finish(cfg, out, &result, summary, vec![], vec![])
}

#[derive(Serialize)]
struct Equilibrium {
    bids: Vec<f64>,
    assignment: Vec<usize>,
    welfare: f64,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct EnumerateResult {
    opt: f64,
    count: usize,
    worst_ratio: Option<f64>,
    best_ratio: Option<f64>,
    equilibria: Vec<Equilibrium>,
}

fn enumerate(cfg: &ExperimentConfig, p: &EnumerateParams, out: &Path) -> Result<Outcome, LabError> {
    if let Some(s) = &p.search {
        let search = PoaSearchConfig {
            slots: s.slots,
            ctr_samples: s.ctr_samples,
            value_samples: s.value_samples,
            grid_points: p.grid_points,
            budget: u128::from(p.budget),
            refine_evals: s.refine_evals,
            seed: cfg.seed,
        };
        let r: PoaSearchResult = pure_poa_search(&search)?;
        let summary = vec![
            format!("{} instances, {} equilibria", r.instances, r.equilibria),
            format!(
                "worst ratio {:.6} (sampled {:.6}, with a fixed point {:.6})",
                r.worst_ratio, r.sampled_worst_ratio, r.worst_fixed_point_ratio
            ),
        ];
        return finish(cfg, out, &r, summary, vec![], vec![]);
    }
    let inst = p.instance.as_ref().expect("validated").build()?;
    let grid = BidGrid::uniform_no_overbid(&inst.values, p.grid_points);
    let opt = optimal_welfare(&inst.values, &inst.ctrs)?;
    let equilibria: Vec<Equilibrium> = enumerate_pure_ne(&inst.values, &inst.ctrs, &grid, u128::from(p.budget))?
        .into_iter()
        .map(|b| {
            let assignment = gsp_core::auction::rank_agents(b.bids());
            let welfare = social_welfare(&assignment, &inst.values, &inst.ctrs).expect("square instance");
            Equilibrium {
                bids: b.bids().to_vec(),
                assignment,
                welfare,
                ratio: (welfare > 0.0).then(|| opt / welfare),
            }
        })
        .collect();
    let ratios = || equilibria.iter().filter_map(|e| e.ratio);
    let result = EnumerateResult {
        opt,
        count: equilibria.len(),
        worst_ratio: ratios().reduce(f64::max),
        best_ratio: ratios().reduce(f64::min),
        equilibria: Vec::new(),
    };
    let summary = vec![format!(
        "{} equilibria, worst ratio {:?}, best ratio {:?}",
        result.count, result.worst_ratio, result.best_ratio
    )];
    let result = EnumerateResult { equilibria, ..result };
    finish(cfg, out, &result, summary, vec![], vec![])
}

#[derive(Serialize)]
struct AgentLearning {
    agent: usize,
    value: f64,
    actions: usize,
    eta: f64,
    realized_regret: f64,
    mixed_regret: f64,
    regret_bound: f64,
    grid_resolution: f64,
    slack: f64,
}

#[derive(Serialize)]
struct LearnResult {
    rounds: usize,
    burn_in: usize,
    opt: f64,
    average_welfare: f64,
    average_welfare_after_burn_in: f64,
    welfare_ratio: f64,
    pota_ratio: Option<f64>,
    welfare_floor: f64,
    floor_holds: bool,
    cce_epsilon: f64,
    cce_holds: bool,
    gamma: Option<GammaReport>,
    lemma1_holds: Option<bool>,
    agents: Vec<AgentLearning>,
}

fn write_round_log(path: &Path, seq: &DeclarationSequence, ctrs: &CtrProfile, every: usize, vs: &[f64]) -> Result<(), LabError> {
    let n = seq.agents();
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["round".to_string()];
    header.extend((0..n).map(|i| format!("bid_{i}")));
    header.extend((0..n).map(|k| format!("slot_{k}")));
    header.extend((0..n).map(|i| format!("price_{i}")));
    header.push("welfare".into());
    w.write_record(&header)?;
    for t in (0..seq.rounds()).step_by(every) {
        let o = seq.outcome(t, ctrs)?;
        let welfare: f64 = o.assignment.iter().enumerate().map(|(k, &a)| ctrs.alphas()[k] * vs[a]).sum();
        let mut row = vec![t.to_string()];
        row.extend(seq.bids(t).iter().map(f64::to_string));
        row.extend(o.assignment.iter().map(usize::to_string));
        row.extend(o.payments.iter().map(f64::to_string));
        row.push(welfare.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn learn(cfg: &ExperimentConfig, p: &LearnParams, out: &Path) -> Result<Outcome, LabError> {
    let inst = p.instance.build()?;
    let (values, ctrs) = (&inst.values, &inst.ctrs);
    let grid = BidGrid::uniform_no_overbid(values, p.grid_points);
    let learners = hedge_learners(values, ctrs, &grid, p.rounds)?;
    let run = run_repeated_auction(values, ctrs, learners, p.rounds, cfg.seed)?;
    let seq = &run.sequence;
    let opt = optimal_welfare(values, ctrs)?;
    let sw = average_welfare(seq, values, ctrs, 0)?;
    let sw_burned = average_welfare(seq, values, ctrs, p.burn_in)?;
    let mut violations = Vec::new();
    let mut agents = Vec::new();
    for i in 0..values.len() {
        let s = run.learner(i).expect("all agents learn");
        let v = values.values()[i];
        let realized = external_regret(i, seq, values, ctrs, &grid)?;
        let mixed = run.mixed_regret(i).expect("learner");
        let bound = hedge_regret_bound(s.actions.len(), p.rounds, ctrs.top() * v);
        if mixed > bound + REGRET_TOLERANCE {
            violations.push(format!("hedge regret bound: agent {i} has regret {mixed} above {bound}"));
        }
        agents.push(AgentLearning {
            agent: i,
            value: v,
            actions: s.actions.len(),
            eta: s.eta,
            realized_regret: realized,
            mixed_regret: mixed,
            regret_bound: bound,
            grid_resolution: grid_resolution(grid.levels(i), v),
            slack: regret_slack(realized, grid.levels(i), v, ctrs.top()),
        });
    }
    let cce_epsilon = agents.iter().map(|a| a.realized_regret).fold(0.0, f64::max);
    let cce = empirical_cce_check(seq, values, ctrs, &grid, cce_epsilon)?;
    if !cce.holds {
        violations.push("regret and coarse-correlated check disagree".into());
    }
    let (welfare_ratio, welfare_floor, floor_holds) = if opt > 0.0 {
        let slacks: Vec<f64> = agents.iter().map(|a| a.slack).collect();
        let floor = welfare_ratio_floor(GAMMA_EQ, &slacks, opt);
        (sw / opt, floor, sw / opt >= floor)
    } else {
        (1.0, 0.0, true)
    };
    if !floor_holds {
        violations.push(format!("welfare floor: ratio {welfare_ratio} below {welfare_floor}"));
    }
    let (gamma, lemma1_holds) = if p.gamma {
        let src = RoundSource {
            sequence: seq,
            values,
            burn_in: 0,
        };
        let g = structural_gamma(&src, ctrs)?;
        let ok = lemma1_consistency(g.gamma_hat, sw, opt, LEMMA1_TOLERANCE);
        if !ok {
            violations.push(format!("structural welfare consistency: gamma {} with welfare {sw} of {opt}", g.gamma_hat));
        }
        (Some(g), Some(ok))
    } else {
        (None, None)
    };
    let mut files = Vec::new();
    if p.log_every > 0 {
        let path = out.join("rounds.csv");
        write_round_log(&path, seq, ctrs, p.log_every, values.values())?;
        files.push(path);
    }
    let result = LearnResult {
        rounds: p.rounds,
        burn_in: p.burn_in,
        opt,
        average_welfare: sw,
        average_welfare_after_burn_in: sw_burned,
        welfare_ratio,
        pota_ratio: (sw > 0.0).then(|| opt / sw),
        welfare_floor,
        floor_holds,
        cce_epsilon,
        cce_holds: cce.holds,
        gamma,
        lemma1_holds,
        agents,
    };
    let mut summary = vec![
        format!("average welfare {sw:.6} of optimum {opt:.6} (ratio {welfare_ratio:.4}, floor {welfare_floor:.4})"),
        format!(
            "max regret {cce_epsilon:.3e}; max mixed regret / bound {:.3}",
            result
                .agents
                .iter()
                .map(|a| if a.regret_bound > 0.0 { a.mixed_regret / a.regret_bound } else { 0.0 })
                .fold(0.0, f64::max)
        ),
    ];
    if let Some(g) = &result.gamma {
        summary.push(format!("structural gamma {:.4}", g.gamma_hat));
    }
    finish(cfg, out, &result, summary, violations, files)
}

#[derive(Serialize)]
struct BpoaResult {
    strategy: StrategyTable,
    epsilon_trace: Option<Vec<f64>>,
    bne: BneReport,
    bpoa: BpoaReport,
    gamma: Option<GammaReport>,
    lemma1_holds: Option<bool>,
}

fn bpoa(cfg: &ExperimentConfig, p: &BpoaParams, out: &Path) -> Result<Outcome, LabError> {
    let ctrs = CtrProfile::new(p.ctrs.clone())?;
    let (table, trace) = match &p.strategy {
        StrategyChoice::Truthful => (StrategyTable::truthful(&p.dists, p.value_points)?, None),
        StrategyChoice::Table { table } => (table.clone(), None),
        StrategyChoice::Search { iterations, samples } => {
            let r = approx_bne_search(
                &p.dists,
                &ctrs,
                &BneSearchConfig {
                    value_points: p.value_points,
                    deviation_points: p.deviation_points,
                    iterations: *iterations,
                    samples: *samples,
                    seed: cfg.seed,
                },
            )?;
            (r.table, Some(r.epsilon_trace))
        }
    };
    let bne = bne_epsilon(&table, &p.dists, &ctrs, p.deviation_points, p.samples, cfg.seed)?;
    let bpoa = bpoa_estimate(&table, &p.dists, &ctrs, p.samples, cfg.seed)?;
    let (gamma, lemma1_holds) = if p.gamma_samples > 0 {
        let g = structural_gamma(&TableSource::new(&table, &p.dists, p.gamma_samples, cfg.seed), &ctrs)?;
        let ok = lemma1_consistency(g.gamma_hat, bpoa.e_sw, bpoa.e_opt, LEMMA1_TOLERANCE);
        (Some(g), Some(ok))
    } else {
        (None, None)
    };
    let summary = vec![
        format!("interim epsilon {:.3e} (standard error {:.3e})", bne.epsilon, bne.std_error),
        format!("E[OPT]/E[SW] = {:.6} [{:.6}, {:.6}]", bpoa.ratio, bpoa.ci_low, bpoa.ci_high),
    ];
    let result = BpoaResult {
        strategy: table,
        epsilon_trace: trace,
        bne,
        bpoa,
        gamma,
        lemma1_holds,
    };
    finish(cfg, out, &result, summary, vec![], vec![])
}

#[derive(Serialize)]
struct ByzantineResult {
    population: PopulationSpec,
    report: ByzantineReport,
    mixed_regrets: Vec<f64>,
    regret_bounds: Vec<f64>,
}

fn byzantine(cfg: &ExperimentConfig, p: &ByzantineParams, out: &Path) -> Result<Outcome, LabError> {
    let inst = p.instance.build()?;
    let pop = PopulationSpec::with_byzantine(inst.len(), p.byzantine.clone());
    let r = run_byzantine(&inst.values, &inst.ctrs, &pop, p.grid_points, p.rounds, cfg.seed)?;
    let mut violations = Vec::new();
    let mut mixed_regrets = Vec::new();
    let mut regret_bounds = Vec::new();
    for &i in &pop.rational {
        let mixed = r.run.mixed_regret(i).expect("rational agents learn");
        let bound = hedge_regret_bound(r.grid.levels(i).len(), p.rounds, inst.ctrs.top() * inst.values.values()[i]);
        if mixed > bound + REGRET_TOLERANCE {
            violations.push(format!("hedge regret bound: agent {i} has regret {mixed} above {bound}"));
        }
        mixed_regrets.push(mixed);
        regret_bounds.push(bound);
    }
    if r.report.bound_holds == Some(false) {
        violations.push(format!(
            "rational welfare floor: ratio {:?} below {:?}",
            r.report.ratio, r.report.ratio_floor
        ));
    }
    let summary = vec![
        format!(
            "{} rational, {} scripted; welfare {:.6}, rational optimum {:.6}",
            pop.rational.len(),
            pop.byzantine.len(),
            r.report.sw_total,
            r.report.opt_rational
        ),
        format!("ratio {:?}, floor {:?}", r.report.ratio, r.report.ratio_floor),
    ];
    let result = ByzantineResult {
        population: pop,
        report: r.report,
        mixed_regrets,
        regret_bounds,
    };
    finish(cfg, out, &result, summary, violations, vec![])
}

fn poa3(cfg: &ExperimentConfig, p: &Poa3Params, out: &Path) -> Result<Outcome, LabError> {
    let case = match p.case {
        CaseTag::I => PoaCase::CaseI,
        CaseTag::Ii => PoaCase::CaseIi,
    };
    let r: OptimizerResult = maximize_3slot(case, p.resolution, p.restarts, cfg.seed)?;
    let mut violations = Vec::new();
    if !r.certified {
        violations.push(format!("grid certification: grid best {} above optimum {}", r.grid_best, r.best.value));
    }
    let summary = vec![format!(
        "maximum {:.6} at alphas ({:.5}, {:.5}, {:.5}) after {} evaluations",
        r.best.value, r.best.alphas[0], r.best.alphas[1], r.best.alphas[2], r.evaluations
    )];
    finish(cfg, out, &r, summary, violations, vec![])
}

#[derive(Serialize)]
struct CyclicRow {
    slots: usize,
    maximum: OptimizerResult,
    padded: Vec<PaddingReading>,
}

fn cyclic(cfg: &ExperimentConfig, p: &CyclicParams, out: &Path) -> Result<Outcome, LabError> {
    let rows = (p.min_slots..=p.max_slots)
        .map(|n| {
            Ok(CyclicRow {
                slots: n,
                maximum: maximize_cyclic(n, p.restarts, cfg.seed)?,
                padded: padding_readings(TIGHT_ALPHAS[1], TIGHT_ALPHAS[2], n)?,
            })
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    let summary = rows
        .iter()
        .map(|r| {
            let padded: Vec<String> = r.padded.iter().map(|x| format!("{} {:.6}", x.label, x.value)).collect();
            format!("n = {}: maximum {:.6}; {}", r.slots, r.maximum.best.value, padded.join(", "))
        })
        .collect();
    finish(cfg, out, &rows, summary, vec![], vec![])
}

fn tight(cfg: &ExperimentConfig, p: &TightInstanceParams, out: &Path) -> Result<Outcome, LabError> {
    let t: TightInstance = tight_instance(&CtrProfile::new(TIGHT_ALPHAS.to_vec())?, p.verify_points, p.epsilon)?;
    // a ready-to-run equilibrium check of the same profile
    let check = ExperimentConfig {
        seed: cfg.seed,
        experiment: Experiment::CheckNe(CheckNeParams {
            instance: InstanceSpec {
                values: t.values.values().to_vec(),
                ctrs: t.ctrs.alphas().to_vec(),
            },
            bids: t.bids.bids().to_vec(),
            grid_points: p.verify_points,
            grid: None,
            epsilon: Some(p.epsilon),
        }),
    };
    let path = out.join("instance.json");
    let mut f = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut f, &check).map_err(std::io::Error::other)?;
    f.write_all(b"\n")?;
    f.flush()?;
    let summary = vec![
        format!("values {:?}", t.values.values()),
        format!("bids {:?}, ratio {:.6}", t.bids.bids(), t.ratio),
    ];
    finish(cfg, out, &t, summary, vec![], vec![path])
}
