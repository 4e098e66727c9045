//! Reachability for cycle-reset SHSs: qualitative verdicts from the finite
//! abstraction, the symbolic avoid set, and interval estimates of `P(F B)`
//! assembled from per-source outcome frequencies between strong resets.

use crate::abstraction::{
    build_abstraction, initial_blocks, initial_partition, refine, target_blocks, AbstractionError, AbstractionMc,
    Partition, RefineOutcome,
};
use crate::linsets::LinSet;
use crate::rational::fmt_rat;
use crate::shs::{Block, BlockMatcher, InitShape, ModelError, ResetSpec, SampleError, Sampler, Shs, State};
use crate::sts::{hoeffding, run_rng, Estimate, StateSet};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReachError {
    #[error("model is not cycle-reset; non-strong cycle through edges {0:?}")]
    NotCycleReset(Vec<String>),
    #[error("refinement stopped after {steps} splits without reaching a stable partition")]
    StepCap { steps: usize },
    #[error("initial distribution: {0}")]
    InitialDistribution(String),
    #[error("only {accepted} runs followed the conditioning path (need {floor})")]
    InsufficientConditioning { accepted: usize, floor: usize },
    #[error("no convergence up to n = {n}: p_yes + p_no = {sum:.6}, short of 1 - {epsilon}")]
    NonConvergence { n: usize, sum: f64, epsilon: f64 },
    #[error("a run from source `{source_name}` took {steps} steps without a strong reset")]
    NoStrongReset { source_name: String, steps: usize },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
}

impl From<ModelError> for ReachError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NotCycleReset(c) => ReachError::NotCycleReset(c),
            other => ReachError::InitialDistribution(other.to_string()),
        }
    }
}

/// Checks that every uniform initial part has interior, so block positivity
/// is decidable from the support alone.
pub fn check_initial(m: &Shs) -> Result<(), ReachError> {
    for part in &m.init {
        if let InitShape::Uniform { support, .. } = &part.shape {
            if !support.has_interior() {
                return Err(ReachError::InitialDistribution(format!(
                    "uniform part at `{}` has empty interior",
                    m.locations[part.location].name
                )));
            }
        }
    }
    Ok(())
}

/// Stable partition, abstraction and the abstract target/avoid sets.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub initial: Partition,
    pub refinement: RefineOutcome,
    pub abstraction: AbstractionMc,
    pub target: StateSet,
    pub avoid: StateSet,
    pub start: StateSet,
}

pub fn analyze(m: &Shs, target: &[Block], step_cap: usize) -> Result<Analysis, ReachError> {
    m.require_cycle_reset()?;
    check_initial(m)?;
    let initial = initial_partition(m, target);
    let refinement = refine(m, &initial, step_cap);
    if !refinement.terminated() {
        return Err(ReachError::StepCap {
            steps: refinement.steps(),
        });
    }
    let abstraction = build_abstraction(m, refinement.partition())?;
    let p = &abstraction.partition;
    let target_set = target_blocks(m, p, target);
    let avoid = abstraction.mc.btilde(&target_set);
    let start = initial_blocks(m, p);
    Ok(Analysis {
        initial,
        refinement,
        abstraction,
        target: target_set,
        avoid,
        start,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    AlmostSure,
    Never,
    Between,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QualReport {
    pub verdict: Verdict,
    pub blocks: usize,
    pub refine_steps: usize,
    pub initial_blocks: Vec<usize>,
    pub target_blocks: Vec<usize>,
    pub avoid_blocks: Vec<usize>,
    /// Abstract `P(F α(B))` from each initial block.
    pub abstract_reach: Vec<(usize, String)>,
}

pub fn qual_reach(m: &Shs, target: &[Block], step_cap: usize) -> Result<QualReport, ReachError> {
    let a = analyze(m, target, step_cap)?;
    Ok(qual_from(&a))
}

pub fn qual_from(a: &Analysis) -> QualReport {
    let reach = a.abstraction.mc.reach_exact(&a.target);
    let values: Vec<_> = a.start.iter().map(|&b| (b, reach[b].clone())).collect();
    let verdict = if values.iter().all(|(_, r)| num_traits::One::is_one(r)) {
        Verdict::AlmostSure
    } else if values.iter().all(|(_, r)| num_traits::Zero::is_zero(r)) {
        Verdict::Never
    } else {
        Verdict::Between
    };
    QualReport {
        verdict,
        blocks: a.abstraction.partition.len(),
        refine_steps: a.refinement.steps(),
        initial_blocks: a.start.iter().copied().collect(),
        target_blocks: a.target.iter().copied().collect(),
        avoid_blocks: a.avoid.iter().copied().collect(),
        abstract_reach: values.into_iter().map(|(b, r)| (b, fmt_rat(&r))).collect(),
    }
}

/// Blocks whose union is the set of states that reach `B` with probability 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvoidSet {
    pub blocks: Vec<Block>,
}

impl AvoidSet {
    pub fn region_at(&self, loc: usize, dim: usize) -> LinSet {
        self.blocks
            .iter()
            .filter(|b| b.location == loc)
            .fold(LinSet::empty(dim), |acc, b| acc.join(&b.region))
    }
}

pub fn btilde(m: &Shs, target: &[Block], step_cap: usize) -> Result<AvoidSet, ReachError> {
    let a = analyze(m, target, step_cap)?;
    Ok(avoid_from(&a))
}

pub fn avoid_from(a: &Analysis) -> AvoidSet {
    AvoidSet {
        blocks: a
            .avoid
            .iter()
            .map(|&i| a.abstraction.partition.blocks[i].clone())
            .collect(),
    }
}

/// Where runs of the decomposition start: the initial distribution or the
/// reset distribution of a strong edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Source {
    Initial,
    Strong(usize),
}

impl Source {
    pub fn name(&self, m: &Shs) -> String {
        match self {
            Source::Initial => "init".into(),
            Source::Strong(e) => format!("reset:{}", m.edges[*e].name),
        }
    }

    fn sample(&self, s: &Sampler, rng: &mut ChaCha8Rng) -> Result<State, SampleError> {
        match self {
            Source::Initial => s.sample_init(rng),
            Source::Strong(e) => s.sample_strong(*e, rng),
        }
    }
}

/// How one run segment from a source ends: in `B` or `B̃` after `len` steps,
/// or by firing strong edge `edge` as step `len + 1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Outcome {
    Yes { path: Vec<usize> },
    No { path: Vec<usize> },
    Reset { path: Vec<usize>, edge: usize },
}

impl Outcome {
    fn path(&self) -> &[usize] {
        match self {
            Outcome::Yes { path } | Outcome::No { path } | Outcome::Reset { path, .. } => path,
        }
    }

    /// Steps taken before the outcome is known, not counting a final reset.
    pub fn steps(&self) -> usize {
        self.path().len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantParams {
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub n_max: usize,
    pub max_rounds: usize,
    pub step_cap: usize,
}

impl Default for QuantParams {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            delta: 0.01,
            seed: 0,
            n_max: 256,
            max_rounds: 4,
            step_cap: crate::abstraction::DEFAULT_STEP_CAP,
        }
    }
}

/// Exactly known sources whose support lies in `B` or in `B̃`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Known {
    InTarget,
    InAvoid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableEntry {
    pub source: String,
    pub kind: &'static str,
    pub path: Vec<String>,
    pub edge: Option<String>,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantReport {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub p_yes: f64,
    pub p_no: f64,
    /// Plug-in estimates without the confidence correction.
    pub p_yes_point: f64,
    pub p_no_point: f64,
    pub half_width: f64,
    pub samples_per_source: usize,
    pub rounds: usize,
    pub confidence: f64,
    pub seed: u64,
    pub known_sources: Vec<(String, Known)>,
    pub base_table: Vec<TableEntry>,
}

/// Per-source outcome counts.
#[derive(Debug, Clone, Default)]
struct Counts {
    samples: usize,
    table: BTreeMap<Outcome, usize>,
}

/// Sampling context shared by the estimators.
pub struct Engine<'a> {
    pub m: &'a Shs,
    pub sampler: Sampler,
    target: BlockMatcher,
    avoid: BlockMatcher,
    bound: usize,
}

impl<'a> Engine<'a> {
    pub fn new(m: &'a Shs, target: &[Block], avoid: &AvoidSet) -> Result<Self, ReachError> {
        let bound = m.longest_nonreset_path()?;
        Ok(Self {
            m,
            sampler: m.sampler(),
            target: BlockMatcher::new(m, target),
            avoid: BlockMatcher::new(m, &avoid.blocks),
            bound,
        })
    }

    /// Follows one run from `source` until `B`, `B̃` or a strong edge.
    pub fn segment(&self, source: Source, rng: &mut ChaCha8Rng) -> Result<Outcome, ReachError> {
        let mut s = source.sample(&self.sampler, rng)?;
        let mut path = vec![s.location];
        loop {
            if self.target.contains(&s) {
                return Ok(Outcome::Yes { path });
            }
            if self.avoid.contains(&s) {
                return Ok(Outcome::No { path });
            }
            if path.len() > self.bound + 1 {
                return Err(ReachError::NoStrongReset {
                    source_name: source.name(self.m),
                    steps: path.len() - 1,
                });
            }
            let step = self.sampler.step(&s, rng)?;
            if let ResetSpec::Strong { .. } = self.m.edges[step.edge].reset {
                return Ok(Outcome::Reset { path, edge: step.edge });
            }
            s = step.next;
            path.push(s.location);
        }
    }

    fn sources(&self) -> Vec<Source> {
        let mut v = vec![Source::Initial];
        v.extend(
            (0..self.m.edges.len())
                .filter(|&e| self.m.edges[e].reset.is_strong())
                .map(Source::Strong),
        );
        v
    }

    /// Sources whose whole support lies in `B`, or in `B̃`.
    fn known(&self, source: Source, target: &[Block], avoid: &AvoidSet) -> Option<Known> {
        let dim = self.m.dim();
        let parts: Vec<(usize, LinSet)> = match source {
            Source::Initial => self
                .m
                .init
                .iter()
                .map(|p| {
                    let support = match &p.shape {
                        InitShape::Point(v) => LinSet::from_box(&v.iter().map(|x| (x.clone(), x.clone())).collect::<Vec<_>>()),
                        InitShape::Uniform { support, .. } => support.clone(),
                    };
                    (p.location, support)
                })
                .collect(),
            Source::Strong(e) => match &self.m.edges[e].reset {
                ResetSpec::Strong { support, .. } => vec![(self.m.edges[e].dst, support.clone())],
                ResetSpec::Assign(_) => return None,
            },
        };
        if parts.iter().all(|(l, s)| s.is_subset(&self.m.region_at(target, *l))) {
            return Some(Known::InTarget);
        }
        if parts.iter().all(|(l, s)| s.is_subset(&avoid.region_at(*l, dim))) {
            return Some(Known::InAvoid);
        }
        None
    }

    fn count(&self, source: Source, samples: usize, seed: u64, round: usize, index: usize) -> Result<Counts, ReachError> {
        let outcomes = (0..samples)
            .into_par_iter()
            .map(|i| {
                let stream = ((round as u64) << 56) | ((index as u64) << 40) | i as u64;
                let mut rng = run_rng(seed, stream);
                self.segment(source, &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut table = BTreeMap::new();
        for o in outcomes {
            *table.entry(o).or_insert(0) += 1;
        }
        Ok(Counts { samples, table })
    }
}

/// `[lo, hi] ∋ P(F B)` with confidence `1 − δ`, using the decomposition at
/// strong resets. Each round fixes a sample size, assembles lower bounds on
/// `p_yes(n)` and `p_no(n)` for `n = 0, 1, 2, 4, …, n_max`, and stops at the
/// first `n` with `p_yes + p_no ≥ 1 − ε`. Failing rounds double the sample
/// size and spend half of the remaining confidence budget.
pub fn quant_reach(m: &Shs, target: &[Block], params: &QuantParams) -> Result<QuantReport, ReachError> {
    let analysis = analyze(m, target, params.step_cap)?;
    let avoid = avoid_from(&analysis);
    quant_with(m, target, &avoid, params)
}

pub fn quant_with(m: &Shs, target: &[Block], avoid: &AvoidSet, params: &QuantParams) -> Result<QuantReport, ReachError> {
    let engine = Engine::new(m, target, avoid)?;
    let sources = engine.sources();
    let known: Vec<Option<Known>> = sources.iter().map(|&s| engine.known(s, target, avoid)).collect();
    let estimated = known.iter().filter(|k| k.is_none()).count().max(1);
    // one Hoeffding bound per (source, yes/no, m)
    let functions = 2 * estimated * (params.n_max + 1);
    let known_sources = sources
        .iter()
        .zip(&known)
        .filter_map(|(s, k)| k.map(|k| (s.name(m), k)))
        .collect();

    let mut h_goal = params.epsilon / 4.0;
    let mut last = None;
    for round in 0..params.max_rounds {
        let delta_r = params.delta / 2f64.powi(round as i32 + 1);
        let samples = ((2.0 * functions as f64 / delta_r).ln() / (2.0 * h_goal * h_goal)).ceil() as usize;
        let h = hoeffding_union(samples, delta_r, functions);
        let counts: Vec<Option<Counts>> = sources
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                if known[i].is_some() {
                    Ok(None)
                } else {
                    engine.count(s, samples, params.seed, round, i).map(Some)
                }
            })
            .collect::<Result<_, _>>()?;
        let index: BTreeMap<Source, usize> = sources.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let lower = assemble(&sources, &index, &known, &counts, params.n_max, h);
        let point = assemble(&sources, &index, &known, &counts, params.n_max, 0.0);
        let mut n = 0;
        loop {
            let (y, no) = (lower.yes[n][0], lower.no[n][0]);
            if y + no >= 1.0 - params.epsilon {
                return Ok(QuantReport {
                    lo: y,
                    hi: 1.0 - no,
                    n,
                    p_yes: y,
                    p_no: no,
                    p_yes_point: point.yes[n][0],
                    p_no_point: point.no[n][0],
                    half_width: h,
                    samples_per_source: samples,
                    rounds: round + 1,
                    confidence: 1.0 - params.delta,
                    seed: params.seed,
                    known_sources,
                    base_table: table_summary(m, &sources, &counts),
                });
            }
            if n == params.n_max {
                break;
            }
            n = if n == 0 { 1 } else { (2 * n).min(params.n_max) };
        }
        last = Some(lower.yes[params.n_max][0] + lower.no[params.n_max][0]);
        h_goal /= 2f64.sqrt();
    }
    Err(ReachError::NonConvergence {
        n: params.n_max,
        sum: last.unwrap_or(0.0),
        epsilon: params.epsilon,
    })
}

fn hoeffding_union(samples: usize, delta: f64, functions: usize) -> f64 {
    hoeffding(samples, delta / functions as f64)
}

struct Assembly {
    /// `yes[m][source]`
    yes: Vec<Vec<f64>>,
    no: Vec<Vec<f64>>,
}

/// `Yes_m(ν) = Σ_{Y, len ≤ m} P + Σ_{reset e, len + 1 ≤ m} P · Yes_{m−len−1}(μ*_e)`,
/// each frequency-weighted sum lowered by `h`.
fn assemble(
    sources: &[Source],
    index: &BTreeMap<Source, usize>,
    known: &[Option<Known>],
    counts: &[Option<Counts>],
    n_max: usize,
    h: f64,
) -> Assembly {
    let ns = sources.len();
    let mut yes = vec![vec![0.0; ns]; n_max + 1];
    let mut no = vec![vec![0.0; ns]; n_max + 1];
    for m in 0..=n_max {
        for i in 0..ns {
            match known[i] {
                Some(Known::InTarget) => {
                    yes[m][i] = 1.0;
                    continue;
                }
                Some(Known::InAvoid) => {
                    no[m][i] = 1.0;
                    continue;
                }
                None => {}
            }
            let c = counts[i].as_ref().expect("estimated source has counts");
            let (mut y, mut n) = (0.0, 0.0);
            for (o, &k) in &c.table {
                let w = k as f64;
                match o {
                    Outcome::Yes { .. } if o.steps() <= m => y += w,
                    Outcome::No { .. } if o.steps() <= m => n += w,
                    Outcome::Reset { edge, .. } if o.steps() < m => {
                        let j = index[&Source::Strong(*edge)];
                        let rest = m - o.steps() - 1;
                        y += w * yes[rest][j];
                        n += w * no[rest][j];
                    }
                    _ => {}
                }
            }
            let total = c.samples as f64;
            yes[m][i] = (y / total - h).max(0.0);
            no[m][i] = (n / total - h).max(0.0);
        }
    }
    Assembly { yes, no }
}

fn table_summary(m: &Shs, sources: &[Source], counts: &[Option<Counts>]) -> Vec<TableEntry> {
    let mut out = Vec::new();
    for (s, c) in sources.iter().zip(counts) {
        let Some(c) = c else { continue };
        for (o, &k) in &c.table {
            let (kind, edge) = match o {
                Outcome::Yes { .. } => ("yes", None),
                Outcome::No { .. } => ("no", None),
                Outcome::Reset { edge, .. } => ("reset", Some(m.edges[*edge].name.clone())),
            };
            out.push(TableEntry {
                source: s.name(m),
                kind,
                path: o.path().iter().map(|&l| m.locations[l].name.clone()).collect(),
                edge,
                count: k,
                frequency: k as f64 / c.samples as f64,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingParams {
    pub runs: usize,
    pub delta: f64,
    pub seed: u64,
    /// Minimum number of runs that must follow the conditioning path.
    pub floor: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            runs: 10_000,
            delta: 0.01,
            seed: 0,
            floor: 100,
        }
    }
}

/// Frequency of firing `edge` at the step after a run from `source` has
/// followed the block path `conditioning`.
pub fn prob_edge(
    m: &Shs,
    source: Source,
    conditioning: &[Block],
    edge: usize,
    params: &SamplingParams,
) -> Result<Estimate, ReachError> {
    let sampler = m.sampler();
    let matchers: Vec<BlockMatcher> = conditioning
        .iter()
        .map(|b| BlockMatcher::new(m, std::slice::from_ref(b)))
        .collect();
    let results = (0..params.runs)
        .into_par_iter()
        .map(|i| -> Result<Option<bool>, SampleError> {
            let mut rng = run_rng(params.seed, i as u64);
            let mut s = source.sample(&sampler, &mut rng)?;
            for (k, mt) in matchers.iter().enumerate() {
                if !mt.contains(&s) {
                    return Ok(None);
                }
                if k + 1 < matchers.len() {
                    s = sampler.step(&s, &mut rng)?.next;
                }
            }
            Ok(Some(sampler.step(&s, &mut rng)?.edge == edge))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let accepted: Vec<bool> = results.into_iter().flatten().collect();
    if accepted.len() < params.floor {
        return Err(ReachError::InsufficientConditioning {
            accepted: accepted.len(),
            floor: params.floor,
        });
    }
    let hits = accepted.iter().filter(|&&b| b).count();
    Ok(Estimate {
        value: hits as f64 / accepted.len() as f64,
        half_width: hoeffding(accepted.len(), params.delta),
        samples: accepted.len(),
        horizon: conditioning.len(),
        seed: params.seed,
        horizon_truncated: false,
    })
}

/// Whole-run estimates of `P(F≤n B)` and `P(¬B U≤n B̃)` from the initial
/// distribution.
pub fn pyes_pno_direct(
    m: &Shs,
    target: &[Block],
    avoid: &AvoidSet,
    n: usize,
    params: &SamplingParams,
) -> Result<(Estimate, Estimate), ReachError> {
    let sampler = m.sampler();
    let b = BlockMatcher::new(m, target);
    let bt = BlockMatcher::new(m, &avoid.blocks);
    let outcomes = (0..params.runs)
        .into_par_iter()
        .map(|i| -> Result<(bool, bool), SampleError> {
            let mut rng = run_rng(params.seed, i as u64);
            let mut s = sampler.sample_init(&mut rng)?;
            for k in 0..=n {
                if b.contains(&s) {
                    return Ok((true, false));
                }
                if bt.contains(&s) {
                    return Ok((false, true));
                }
                if k < n {
                    s = sampler.step(&s, &mut rng)?.next;
                }
            }
            Ok((false, false))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let yes = outcomes.iter().filter(|o| o.0).count();
    let no = outcomes.iter().filter(|o| o.1).count();
    let est = |k: usize| Estimate {
        value: k as f64 / params.runs as f64,
        half_width: hoeffding(params.runs, params.delta / 2.0),
        samples: params.runs,
        horizon: n,
        seed: params.seed,
        horizon_truncated: false,
    };
    Ok((est(yes), est(no)))
}

/// Block indices visited by a simulated run, for cross-checks against the
/// abstraction.
pub fn visited_blocks(a: &AbstractionMc, run: &[State]) -> Vec<Option<usize>> {
    let c = a.classifier();
    run.iter().map(|s| c.classify(s)).collect()
}

/// Convenience: the set of blocks of `a` hit by a location's full region.
pub fn blocks_at(a: &AbstractionMc, loc: usize) -> BTreeSet<usize> {
    a.partition.at(loc).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::DEFAULT_STEP_CAP;
    use crate::fixtures;

    fn target(m: &Shs, name: &str) -> Vec<Block> {
        m.target(name).unwrap().blocks.clone()
    }

    #[test]
    fn verdicts() {
        let m = fixtures::coin();
        assert_eq!(qual_reach(&m, &target(&m, "goal"), DEFAULT_STEP_CAP).unwrap().verdict, Verdict::Between);
        let m = fixtures::sink();
        assert_eq!(
            qual_reach(&m, &target(&m, "reach_goal"), DEFAULT_STEP_CAP).unwrap().verdict,
            Verdict::Never
        );
        let m = fixtures::retry();
        assert_eq!(
            qual_reach(&m, &target(&m, "goal"), DEFAULT_STEP_CAP).unwrap().verdict,
            Verdict::AlmostSure
        );
    }

    #[test]
    fn preconditions_are_reported() {
        let m = fixtures::pacman();
        let t = target(&m, "b");
        assert!(matches!(qual_reach(&m, &t, 10), Err(ReachError::NotCycleReset(_))));
    }

    #[test]
    fn avoid_sets() {
        let m = fixtures::coin();
        let avoid = btilde(&m, &target(&m, "goal"), DEFAULT_STEP_CAP).unwrap();
        let sink = m.location_index("lsink").unwrap();
        assert!(avoid.region_at(sink, 1).complement().is_empty());
        let lb = m.location_index("lb").unwrap();
        assert!(avoid.region_at(lb, 1).is_empty());
        let m = fixtures::all_strong();
        let avoid = btilde(&m, &target(&m, "hit_b"), DEFAULT_STEP_CAP).unwrap();
        // only valuations outside the invariants avoid b
        for b in &avoid.blocks {
            assert!(b.region.meet(&m.locations[b.location].invariant).is_empty());
        }
    }

    #[test]
    fn prob_edge_examples() {
        let m = fixtures::coin();
        let l0 = m.location_index("l0").unwrap();
        let cond = vec![Block {
            location: l0,
            region: LinSet::full(1),
        }];
        let e_b = m.edge_index("e_b").unwrap();
        let p = prob_edge(&m, Source::Initial, &cond, e_b, &SamplingParams::default()).unwrap();
        assert!((p.value - 0.5).abs() < 0.02, "{p:?}");
        let stay = m.edge_index("stay_b").unwrap();
        let lb = m.location_index("lb").unwrap();
        let cond = vec![Block {
            location: lb,
            region: LinSet::full(1),
        }];
        let p = prob_edge(&m, Source::Strong(e_b), &cond, stay, &SamplingParams::default()).unwrap();
        assert_eq!(p.value, 1.0);
        let err = prob_edge(&m, Source::Strong(e_b), &[Block { location: l0, region: LinSet::full(1) }], stay, &SamplingParams::default());
        assert!(matches!(err, Err(ReachError::InsufficientConditioning { accepted: 0, .. })));
    }

    #[test]
    fn coin_interval() {
        let m = fixtures::coin();
        let r = quant_reach(&m, &target(&m, "goal"), &QuantParams::default()).unwrap();
        assert!(r.lo <= 0.5 && 0.5 <= r.hi, "{r:?}");
        assert!(r.hi - r.lo <= 0.02);
        assert_eq!(r.n, 1);
    }

    #[test]
    fn initial_support_inside_target() {
        let m = fixtures::coin();
        let l0 = m.location_index("l0").unwrap();
        let t = vec![Block {
            location: l0,
            region: LinSet::full(1),
        }];
        let r = quant_reach(&m, &t, &QuantParams::default()).unwrap();
        assert_eq!((r.lo, r.hi, r.n), (1.0, 1.0, 0));
    }

    #[test]
    fn direct_coin_one_step() {
        let m = fixtures::coin();
        let t = target(&m, "goal");
        let avoid = btilde(&m, &t, DEFAULT_STEP_CAP).unwrap();
        let (y, n) = pyes_pno_direct(&m, &t, &avoid, 1, &SamplingParams::default()).unwrap();
        assert!((y.value - 0.5).abs() < 0.02);
        assert!((y.value + n.value - 1.0).abs() < 1e-12);
        let (y, n) = pyes_pno_direct(&m, &t, &avoid, 0, &SamplingParams::default()).unwrap();
        assert_eq!((y.value, n.value), (0.0, 0.0));
    }

    #[test]
    fn retry_converges() {
        let m = fixtures::retry();
        let r = quant_reach(&m, &target(&m, "goal"), &QuantParams::default()).unwrap();
        assert!(r.hi >= 0.98 && r.lo >= 0.9, "{r:?}");
    }
}
