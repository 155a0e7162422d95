//! Repeated GSP with exponential-weights (Hedge) bidders.
//!
//! Values stay fixed across rounds. Each round every learner samples a bid
//! from its weights, the auction runs, and every learner sees the utility
//! each of its grid bids would have earned against the realized opponent
//! bids (full-information feedback). The play history doubles as an
//! empirical coarse correlated distribution over joint bids, with the
//! round index acting as the shared randomness.

use serde::{Deserialize, Serialize};

use crate::auction::{
    grid_utilities, optimal_welfare, rank_agents, run_gsp, same_len, sorted_opponents, unilateral_utility,
    welfare_unchecked, AuctionOutcome, BidProfile, CtrProfile, ValueProfile,
};
use crate::byzantine::ByzantineScript;
use crate::equilibria::BidSource;
use crate::error::{GspError, Result};
use crate::grid::BidGrid;
use crate::rng::{tag, uniform};

/// Hedge over a finite bid set.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub agent: usize,
    pub actions: Vec<f64>,
    pub eta: f64,
    /// Counterfactual utility accumulated by each action.
    pub cumulative: Vec<f64>,
    log_weights: Vec<f64>,
}

/// Learning rate `sqrt(8 ln K / T) / scale` for rewards in `[0, scale]`.
pub fn horizon_eta(actions: usize, horizon: usize, scale: f64) -> f64 {
    if actions <= 1 || horizon == 0 || scale <= 0.0 {
        return 0.0;
    }
    (8.0 * (actions as f64).ln() / horizon as f64).sqrt() / scale
}

/// Average-regret guarantee of Hedge at [`horizon_eta`]:
/// `scale * sqrt(ln K / (2T))`.
pub fn hedge_regret_bound(actions: usize, horizon: usize, scale: f64) -> f64 {
    if actions <= 1 || horizon == 0 {
        return 0.0;
    }
    scale * ((actions as f64).ln() / (2.0 * horizon as f64)).sqrt()
}

impl LearnerState {
    /// Uniform initial weights.
    pub fn new(agent: usize, actions: Vec<f64>, eta: f64) -> Result<Self> {
        if actions.is_empty() {
            return Err(GspError::EmptyGrid(agent));
        }
        if !eta.is_finite() || eta < 0.0 {
            return Err(GspError::Domain(format!("learning rate must be finite and nonnegative, got {eta}")));
        }
        let k = actions.len();
        Ok(Self {
            agent,
            actions,
            eta,
            cumulative: vec![0.0; k],
            log_weights: vec![-(k as f64).ln(); k],
        })
    }

    /// Starts from explicit weights; they must form a distribution.
    pub fn with_weights(agent: usize, actions: Vec<f64>, eta: f64, weights: &[f64]) -> Result<Self> {
        let mut s = Self::new(agent, actions, eta)?;
        same_len("weights vs actions", s.actions.len(), weights.len())?;
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(GspError::Domain("weights must be a probability distribution".into()));
        }
        s.log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(s)
    }

    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.actions.len()];
        self.weights_into(&mut w);
        w
    }

    fn weights_into(&self, out: &mut [f64]) {
        let top = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, lw) in out.iter_mut().zip(&self.log_weights) {
            *o = (lw - top).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    /// Multiplies each weight by `exp(eta * utility)` and renormalizes.
    pub fn update(&mut self, utilities: &[f64]) -> Result<()> {
        same_len("utilities vs actions", self.actions.len(), utilities.len())?;
        if utilities.iter().any(|u| !u.is_finite()) {
            return Err(GspError::NonFinite("hedge utilities"));
        }
        self.apply(utilities);
        Ok(())
    }

    fn apply(&mut self, utilities: &[f64]) {
        let mut top = f64::NEG_INFINITY;
        for ((lw, c), u) in self.log_weights.iter_mut().zip(&mut self.cumulative).zip(utilities) {
            *lw += self.eta * u;
            *c += u;
            top = top.max(*lw);
        }
        // keep log-weights anchored at zero; only differences matter
        for lw in &mut self.log_weights {
            *lw -= top;
        }
    }

    /// Index drawn by inverse CDF from `weights` at uniform `u`.
    fn pick(weights: &[f64], u: f64) -> usize {
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

/// Functional form of [`LearnerState::update`].
pub fn hedge_update(state: &LearnerState, utilities: &[f64]) -> Result<LearnerState> {
    let mut next = state.clone();
    next.update(utilities)?;
    Ok(next)
}

/// One Hedge learner per agent over its grid, tuned for `horizon` rounds
/// with utilities bounded by `α_1 · v_i`.
pub fn hedge_learners(values: &ValueProfile, ctrs: &CtrProfile, grid: &BidGrid, horizon: usize) -> Result<Vec<LearnerState>> {
    same_len("grid vs agents", values.len(), grid.agents())?;
    (0..values.len())
        .map(|i| {
            let levels = grid.levels(i).to_vec();
            let eta = horizon_eta(levels.len(), horizon, ctrs.top() * values.values()[i]);
            LearnerState::new(i, levels, eta)
        })
        .collect()
}

/// Bids of every round, flattened row-major, plus the resulting slot
/// assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclarationSequence {
    agents: usize,
    bids: Vec<f64>,
    assignments: Vec<usize>,
}

impl DeclarationSequence {
    /// Builds a sequence from explicit per-round profiles.
    pub fn from_profiles(profiles: &[BidProfile]) -> Result<Self> {
        let first = profiles
            .first()
            .ok_or_else(|| GspError::Domain("a declaration sequence needs at least one round".into()))?;
        let agents = first.len();
        let mut seq = Self {
            agents,
            bids: Vec::with_capacity(agents * profiles.len()),
            assignments: Vec::with_capacity(agents * profiles.len()),
        };
        for p in profiles {
            same_len("round profile", agents, p.len())?;
            seq.push(p.bids());
        }
        Ok(seq)
    }

    fn with_capacity(agents: usize, rounds: usize) -> Self {
        Self {
            agents,
            bids: Vec::with_capacity(agents * rounds),
            assignments: Vec::with_capacity(agents * rounds),
        }
    }

    fn push(&mut self, bids: &[f64]) -> &[usize] {
        self.bids.extend_from_slice(bids);
        let start = self.assignments.len();
        self.assignments.extend(rank_agents(bids));
        &self.assignments[start..]
    }

    pub fn rounds(&self) -> usize {
        self.bids.len() / self.agents
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn bids(&self, round: usize) -> &[f64] {
        &self.bids[round * self.agents..(round + 1) * self.agents]
    }

    /// Slot -> agent in round `round`.
    pub fn assignment(&self, round: usize) -> &[usize] {
        &self.assignments[round * self.agents..(round + 1) * self.agents]
    }

    /// Full auction outcome of a round.
    pub fn outcome(&self, round: usize, ctrs: &CtrProfile) -> Result<AuctionOutcome> {
        run_gsp(&BidProfile::new(self.bids(round).to_vec())?, ctrs)
    }
}

/// A participant in the repeated auction.
#[derive(Debug, Clone, PartialEq)]
pub enum Participant {
    Learner(LearnerState),
    Scripted(ByzantineScript),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedRun {
    pub sequence: DeclarationSequence,
    pub participants: Vec<Participant>,
    /// Per agent: Σ_t of the learner's expected utility under its weights
    /// (zero for scripted agents).
    pub expected_utility: Vec<f64>,
    /// Per agent: Σ_t of the utility actually realized.
    pub realized_utility: Vec<f64>,
    /// Σ_t of round welfare.
    pub welfare_sum: f64,
}

impl RepeatedRun {
    pub fn learner(&self, agent: usize) -> Option<&LearnerState> {
        match &self.participants[agent] {
            Participant::Learner(s) => Some(s),
            Participant::Scripted(_) => None,
        }
    }

    /// Average regret of a learner's mixed play against its best fixed
    /// action in hindsight; this is the quantity Hedge's guarantee bounds.
    pub fn mixed_regret(&self, agent: usize) -> Option<f64> {
        let s = self.learner(agent)?;
        let best = s.cumulative.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((best - self.expected_utility[agent]) / self.sequence.rounds() as f64)
    }
}

pub(crate) fn run_participants(
    values: &ValueProfile,
    ctrs: &CtrProfile,
    mut participants: Vec<Participant>,
    rounds: usize,
    seed: u64,
) -> Result<RepeatedRun> {
    let n = values.len();
    same_len("values vs slots", ctrs.len(), n)?;
    same_len("participants vs agents", n, participants.len())?;
    if rounds == 0 {
        return Err(GspError::Domain("repeated auction needs at least one round".into()));
    }
    for (i, p) in participants.iter().enumerate() {
        if let Participant::Learner(s) = p {
            if s.agent != i {
                return Err(GspError::InvalidProfile(format!("learner for agent {} placed at {i}", s.agent)));
            }
        }
    }
    let vs = values.values();
    let alphas = ctrs.alphas();
    let mut seq = DeclarationSequence::with_capacity(n, rounds);
    let mut weights: Vec<Vec<f64>> = participants
        .iter()
        .map(|p| match p {
            Participant::Learner(s) => vec![0.0; s.actions.len()],
            Participant::Scripted(_) => Vec::new(),
        })
        .collect();
    let mut scratch: Vec<Vec<f64>> = weights.clone();
    let mut expected = vec![0.0; n];
    let mut realized = vec![0.0; n];
    let mut welfare_sum = 0.0;
    let mut bids = vec![0.0; n];

    for t in 0..rounds {
        for (i, p) in participants.iter().enumerate() {
            bids[i] = match p {
                Participant::Learner(s) => {
                    s.weights_into(&mut weights[i]);
                    let u = uniform(seed, &[tag::LEARN_BID, t as u64, i as u64]);
                    s.actions[LearnerState::pick(&weights[i], u)]
                }
                Participant::Scripted(script) => script.bid(t, vs[i], seed, i),
            };
        }
        let assignment = seq.push(&bids);
        welfare_sum += welfare_unchecked(assignment, vs, alphas);
        for (i, p) in participants.iter_mut().enumerate() {
            realized[i] += unilateral_utility(i, bids[i], &bids, vs[i], alphas);
            if let Participant::Learner(s) = p {
                let opponents = sorted_opponents(i, &bids);
                grid_utilities(i, &s.actions, &opponents, vs[i], alphas, &mut scratch[i]);
                expected[i] += weights[i].iter().zip(&scratch[i]).map(|(w, u)| w * u).sum::<f64>();
                s.apply(&scratch[i]);
            }
        }
    }
    Ok(RepeatedRun {
        sequence: seq,
        participants,
        expected_utility: expected,
        realized_utility: realized,
        welfare_sum,
    })
}

/// Runs `rounds` rounds of GSP with every agent learning by Hedge.
pub fn run_repeated_auction(
    values: &ValueProfile,
    ctrs: &CtrProfile,
    learners: Vec<LearnerState>,
    rounds: usize,
    seed: u64,
) -> Result<RepeatedRun> {
    let participants = learners.into_iter().map(Participant::Learner).collect();
    run_participants(values, ctrs, participants, rounds, seed)
}

/// Σ_t utility of every fixed grid bid, and Σ_t realized utility.
fn deviation_sums(agent: usize, seq: &DeclarationSequence, values: &ValueProfile, ctrs: &CtrProfile, levels: &[f64]) -> (Vec<f64>, f64) {
    let v = values.values()[agent];
    let alphas = ctrs.alphas();
    let mut sums = vec![0.0; levels.len()];
    let mut buf = vec![0.0; levels.len()];
    let mut realized = 0.0;
    for t in 0..seq.rounds() {
        let bids = seq.bids(t);
        let opponents = sorted_opponents(agent, bids);
        grid_utilities(agent, levels, &opponents, v, alphas, &mut buf);
        for (s, u) in sums.iter_mut().zip(&buf) {
            *s += u;
        }
        realized += unilateral_utility(agent, bids[agent], bids, v, alphas);
    }
    (sums, realized)
}

fn check_sequence(seq: &DeclarationSequence, values: &ValueProfile, ctrs: &CtrProfile) -> Result<()> {
    same_len("values vs slots", ctrs.len(), values.len())?;
    same_len("sequence vs agents", values.len(), seq.agents())?;
    if seq.rounds() == 0 {
        return Err(GspError::Domain("empty declaration sequence".into()));
    }
    Ok(())
}

/// `(1/T) [max_b Σ_t u_i(b, b^t_{-i}) − Σ_t u_i(b^t)]` over the agent's grid.
pub fn external_regret(agent: usize, seq: &DeclarationSequence, values: &ValueProfile, ctrs: &CtrProfile, grid: &BidGrid) -> Result<f64> {
    check_sequence(seq, values, ctrs)?;
    crate::auction::check_agent(agent, values.len())?;
    let (sums, realized) = deviation_sums(agent, seq, values, ctrs, grid.levels(agent));
    let best = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((best - realized) / seq.rounds() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CceVerdict {
    pub holds: bool,
    pub epsilon: f64,
    /// Largest average gain from a fixed deviation, per agent.
    pub max_gain: Vec<f64>,
}

/// Checks whether the uniform distribution over rounds is an ε-coarse
/// correlated equilibrium with respect to fixed grid deviations.
pub fn empirical_cce_check(
    seq: &DeclarationSequence,
    values: &ValueProfile,
    ctrs: &CtrProfile,
    grid: &BidGrid,
    epsilon: f64,
) -> Result<CceVerdict> {
    check_sequence(seq, values, ctrs)?;
    let t = seq.rounds() as f64;
    let mut holds = true;
    let mut max_gain = Vec::with_capacity(values.len());
    for agent in 0..values.len() {
        let (sums, realized) = deviation_sums(agent, seq, values, ctrs, grid.levels(agent));
        let mut worst = f64::NEG_INFINITY;
        for s in sums {
            let gain = (s - realized) / t;
            holds &= gain <= epsilon;
            worst = worst.max(gain);
        }
        max_gain.push(worst);
    }
    Ok(CceVerdict { holds, epsilon, max_gain })
}

/// Average welfare over rounds `burn_in..T`.
pub fn average_welfare(seq: &DeclarationSequence, values: &ValueProfile, ctrs: &CtrProfile, burn_in: usize) -> Result<f64> {
    check_sequence(seq, values, ctrs)?;
    if burn_in >= seq.rounds() {
        return Err(GspError::Domain(format!("burn-in {burn_in} leaves no rounds out of {}", seq.rounds())));
    }
    let total: f64 = (burn_in..seq.rounds())
        .map(|t| welfare_unchecked(seq.assignment(t), values.values(), ctrs.alphas()))
        .sum();
    Ok(total / (seq.rounds() - burn_in) as f64)
}

/// `OPT(v)` divided by the average round welfare.
pub fn pota_ratio(seq: &DeclarationSequence, values: &ValueProfile, ctrs: &CtrProfile, burn_in: usize) -> Result<f64> {
    let sw = average_welfare(seq, values, ctrs, burn_in)?;
    if sw <= 0.0 {
        return Err(GspError::UndefinedRatio("average welfare is zero"));
    }
    Ok(optimal_welfare(values, ctrs)? / sw)
}

/// Largest gap an agent's grid leaves below its value: consecutive levels
/// and the top level to the value itself.
pub fn grid_resolution(levels: &[f64], value: f64) -> f64 {
    let inner = levels.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let top = levels.last().map_or(value, |t| (value - t).max(0.0));
    inner.max(top).max(levels.first().copied().unwrap_or(0.0))
}

/// Additive slack in the structural property for one agent whose play has
/// average regret `regret` against grid deviations: the regret itself plus
/// the top-slot rate times the grid resolution.
pub fn regret_slack(regret: f64, levels: &[f64], value: f64, top_ctr: f64) -> f64 {
    regret.max(0.0) + top_ctr * grid_resolution(levels, value)
}

/// Welfare-ratio floor `γ/2 − Σ slack / (2 · OPT)` implied by per-agent
/// regret slacks.
pub fn welfare_ratio_floor(gamma: f64, slacks: &[f64], opt: f64) -> f64 {
    gamma / 2.0 - slacks.iter().sum::<f64>() / (2.0 * opt)
}

/// The play history viewed as a distribution over joint bids: each round
/// is one equally likely draw, and agents are tested at their own values.
pub struct RoundSource<'a> {
    pub sequence: &'a DeclarationSequence,
    pub values: &'a ValueProfile,
    pub burn_in: usize,
}

impl BidSource for RoundSource<'_> {
    fn agents(&self) -> usize {
        self.sequence.agents()
    }
    fn test_values(&self, agent: usize) -> Vec<f64> {
        vec![self.values.values()[agent]]
    }
    fn samples(&self) -> usize {
        self.sequence.rounds().saturating_sub(self.burn_in)
    }
    fn draw(&self, _agent: usize, _value: f64, sample: usize, bids: &mut [f64]) {
        bids.copy_from_slice(self.sequence.bids(self.burn_in + sample));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vals(v: &[f64]) -> ValueProfile {
        ValueProfile::new(v.to_vec()).unwrap()
    }
    fn ctrs(a: &[f64]) -> CtrProfile {
        CtrProfile::new(a.to_vec()).unwrap()
    }

    #[test]
    fn equal_utilities_keep_weights() {
        let mut s = LearnerState::new(0, vec![0.0, 1.0], 0.7).unwrap();
        for _ in 0..100 {
            s.update(&[0.3, 0.3]).unwrap();
        }
        for w in s.weights() {
            assert!((w - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_eta_keeps_weights() {
        let s = LearnerState::with_weights(0, vec![0.0, 0.5, 1.0], 0.0, &[0.2, 0.3, 0.5]).unwrap();
        let next = hedge_update(&s, &[1.0, 0.0, 5.0]).unwrap();
        for (a, b) in next.weights().iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(next.cumulative, vec![1.0, 0.0, 5.0]);
    }

    #[test]
    fn dominant_action_gains_weight_at_closed_form_rate() {
        let eta = 0.1;
        let margin = 0.25;
        let mut s = LearnerState::new(0, vec![0.0, 1.0], eta).unwrap();
        let mut last = 0.5;
        for t in 1..=400 {
            s.update(&[0.5, 0.5 + margin]).unwrap();
            let w = s.weights();
            assert!(w[1] > last || w[1] == 1.0);
            last = w[1];
            // weight ratio is exp(t·η·Δ)
            let expected = 1.0 / (1.0 + (-(t as f64) * eta * margin).exp());
            assert!((w[1] - expected).abs() < 1e-12);
        }
        assert!(last > 0.9999);
    }

    #[test]
    fn update_rejects_bad_input() {
        let mut s = LearnerState::new(0, vec![0.0, 1.0], 0.1).unwrap();
        assert!(s.update(&[0.0]).is_err());
        assert!(s.update(&[f64::NAN, 0.0]).is_err());
        assert!(LearnerState::new(0, vec![], 0.1).is_err());
        assert!(LearnerState::with_weights(0, vec![0.0, 1.0], 0.1, &[0.6, 0.6]).is_err());
    }

    #[test]
    fn singleton_actions_give_constant_play() {
        let v = vals(&[0.9, 0.5, 0.2]);
        let a = ctrs(&[1.0, 0.5, 0.1]);
        let learners = (0..3).map(|i| LearnerState::new(i, vec![v.values()[i] / 2.0], 1.0).unwrap()).collect();
        let run = run_repeated_auction(&v, &a, learners, 50, 3).unwrap();
        for t in 0..50 {
            assert_eq!(run.sequence.bids(t), &[0.45, 0.25, 0.1]);
            assert_eq!(run.sequence.assignment(t), &[0, 1, 2]);
        }
        let grid = BidGrid::from_points(vec![vec![0.45], vec![0.25], vec![0.1]]).unwrap();
        for i in 0..3 {
            assert_eq!(external_regret(i, &run.sequence, &v, &a, &grid).unwrap(), 0.0);
        }
        assert!(empirical_cce_check(&run.sequence, &v, &a, &grid, 0.0).unwrap().holds);
    }

    #[test]
    fn single_agent_has_no_regret() {
        let v = vals(&[0.8]);
        let a = ctrs(&[1.0]);
        let grid = BidGrid::uniform_no_overbid(&v, 8);
        let learners = hedge_learners(&v, &a, &grid, 200).unwrap();
        let run = run_repeated_auction(&v, &a, learners, 200, 1).unwrap();
        assert!(external_regret(0, &run.sequence, &v, &a, &grid).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hand_computed_regret() {
        // single slot, agent 0 (v = 1) always bids 0.5 against 0.8, 0.2, 0.8
        let v = vals(&[1.0, 1.0]);
        let a = ctrs(&[1.0, 0.0]);
        let profiles: Vec<BidProfile> = [0.8, 0.2, 0.8]
            .iter()
            .map(|&o| BidProfile::new(vec![0.5, o]).unwrap())
            .collect();
        let seq = DeclarationSequence::from_profiles(&profiles).unwrap();
        let grid = BidGrid::from_points(vec![vec![0.0, 0.5, 1.0], vec![0.2, 0.8]]).unwrap();
        // realized: 0 + (1 - 0.2) + 0 = 0.8; bidding 1.0 earns 0.2 + 0.8 + 0.2 = 1.2
        let r = external_regret(0, &seq, &v, &a, &grid).unwrap();
        assert!((r - 0.4 / 3.0).abs() < 1e-12);
        // agent 1 would rather have bid 0.8 throughout: 1.5 against 1.0
        let r1 = external_regret(1, &seq, &v, &a, &grid).unwrap();
        assert!((r1 - 0.5 / 3.0).abs() < 1e-12);
        let cce = empirical_cce_check(&seq, &v, &a, &grid, r1).unwrap();
        assert!(cce.holds);
        assert_eq!(cce.max_gain, vec![r, r1]);
        assert!(!empirical_cce_check(&seq, &v, &a, &grid, r1 * 0.99).unwrap().holds);
    }

    #[test]
    fn forced_zero_bid_breaks_cce() {
        let v = vals(&[1.0, 0.3]);
        let a = ctrs(&[1.0, 0.2]);
        let profiles = vec![BidProfile::new(vec![0.0, 0.3]).unwrap(); 5];
        let seq = DeclarationSequence::from_profiles(&profiles).unwrap();
        let grid = BidGrid::uniform_no_overbid(&v, 11);
        assert!(!empirical_cce_check(&seq, &v, &a, &grid, 0.0).unwrap().holds);
    }

    #[test]
    fn truthful_constant_play_is_efficient() {
        let v = vals(&[0.3, 0.9, 0.6]);
        let a = ctrs(&[1.0, 0.4, 0.2]);
        let seq = DeclarationSequence::from_profiles(&vec![BidProfile::truthful(&v); 4]).unwrap();
        assert!((pota_ratio(&seq, &v, &a, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!(pota_ratio(&seq, &v, &a, 4).is_err());
        let zero = DeclarationSequence::from_profiles(&[BidProfile::new(vec![0.0; 3]).unwrap()]).unwrap();
        let zv = vals(&[0.0, 0.0, 0.0]);
        assert!(matches!(pota_ratio(&zero, &zv, &a, 0), Err(GspError::UndefinedRatio(_))));
    }

    #[test]
    fn zero_bids_can_exceed_bound_but_show_regret() {
        // agent 2 has by far the largest value but always bids zero
        let v = vals(&[0.01, 0.01, 1.0]);
        let a = ctrs(&[1.0, 0.01, 0.0]);
        let seq = DeclarationSequence::from_profiles(&[BidProfile::new(vec![0.0; 3]).unwrap()]).unwrap();
        let ratio = pota_ratio(&seq, &v, &a, 0).unwrap();
        assert!(ratio > 3.164, "{ratio}");
        let grid = BidGrid::uniform_no_overbid(&v, 16);
        assert!(external_regret(2, &seq, &v, &a, &grid).unwrap() > 0.5);
    }

    #[test]
    fn regret_and_cce_views_agree() {
        let v = vals(&[0.9, 0.7, 0.4]);
        let a = ctrs(&[1.0, 0.6, 0.3]);
        let grid = BidGrid::uniform_no_overbid(&v, 16);
        let run = run_repeated_auction(&v, &a, hedge_learners(&v, &a, &grid, 2000).unwrap(), 2000, 9).unwrap();
        let regrets: Vec<f64> = (0..3)
            .map(|i| external_regret(i, &run.sequence, &v, &a, &grid).unwrap())
            .collect();
        let eps = regrets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cce = empirical_cce_check(&run.sequence, &v, &a, &grid, eps).unwrap();
        assert!(cce.holds);
        assert_eq!(cce.max_gain, regrets);
        for i in 0..3 {
            let bound = hedge_regret_bound(16, 2000, v.values()[i]);
            assert!(run.mixed_regret(i).unwrap() <= bound + 1e-9);
            let w: f64 = run.learner(i).unwrap().weights().iter().sum();
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outcomes_match_gsp() {
        let v = vals(&[0.9, 0.7, 0.4]);
        let a = ctrs(&[1.0, 0.6, 0.3]);
        let grid = BidGrid::uniform_no_overbid(&v, 8);
        let run = run_repeated_auction(&v, &a, hedge_learners(&v, &a, &grid, 100).unwrap(), 100, 2).unwrap();
        for t in 0..100 {
            assert_eq!(run.sequence.outcome(t, &a).unwrap().assignment, run.sequence.assignment(t));
        }
    }

    #[test]
    fn grid_resolution_of_uniform_grid() {
        let levels = crate::grid::uniform_levels(0.63, 64);
        assert!((grid_resolution(&levels, 0.63) - 0.01).abs() < 1e-12);
        assert_eq!(grid_resolution(&[0.0, 0.1], 0.5), 0.4);
    }
}
