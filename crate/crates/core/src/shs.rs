//! Stochastic hybrid systems with constant-slope flows.
//!
//! The symbolic side (validation, delay regions, reset preimages) works over
//! exact [`LinSet`]s. The sampling side compiles the model to floats once and
//! draws mixed transitions: a delay from the resolved delay family on `I(s)`,
//! a uniformly chosen edge among those enabled after the delay, then a reset.

use crate::linsets::{AffineMap, FloatSet, LinAtom, LinSet, Rel};
use crate::rational::{fmt_rat, serde_rat, to_f64, Rat};
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-variable Dirac reset component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assign {
    Keep,
    Set(#[serde(with = "serde_rat")] Rat),
    /// `x := x + c`
    Shift(#[serde(with = "serde_rat")] Rat),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrongKind {
    UniformContinuous,
    UniformDiscrete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResetSpec {
    Assign(Vec<Assign>),
    Strong {
        support: LinSet,
        kind: StrongKind,
        #[serde(with = "serde_rat::pairs")]
        bbox: Vec<(Rat, Rat)>,
    },
}

impl ResetSpec {
    pub fn identity(n: usize) -> Self {
        ResetSpec::Assign(vec![Assign::Keep; n])
    }

    pub fn is_strong(&self) -> bool {
        matches!(self, ResetSpec::Strong { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelaySpec {
    Auto,
    Uniform,
    Exp(#[serde(with = "serde_rat")] Rat),
}

impl DelaySpec {
    pub fn describe(&self) -> String {
        match self {
            DelaySpec::Auto => "auto".into(),
            DelaySpec::Uniform => "uniform".into(),
            DelaySpec::Exp(r) => format!("exp {}", fmt_rat(r)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub name: String,
    #[serde(with = "serde_rat::vec")]
    pub rates: Vec<Rat>,
    pub invariant: LinSet,
    pub delay: DelaySpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub name: String,
    pub src: usize,
    pub dst: usize,
    pub guard: LinSet,
    pub reset: ResetSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitShape {
    Point(#[serde(with = "serde_rat::vec")] Vec<Rat>),
    Uniform {
        support: LinSet,
        #[serde(with = "serde_rat::pairs")]
        bbox: Vec<(Rat, Rat)>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitPart {
    pub location: usize,
    #[serde(with = "serde_rat")]
    pub weight: Rat,
    pub shape: InitShape,
}

/// A location together with a region of valuations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub location: usize,
    pub region: LinSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shs {
    pub vars: Vec<String>,
    pub locations: Vec<Location>,
    pub edges: Vec<Edge>,
    pub init: Vec<InitPart>,
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagKind {
    Reference,
    Dimension,
    Duplicate,
    NonConvexInvariant,
    EmptyInvariant,
    EmptyGuard,
    NoOutgoingEdge,
    Blocking,
    Reset,
    Delay,
    Init,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagKind,
    pub subject: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} [{}]: {}", self.kind, self.subject, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("model is not cycle-reset; non-strong cycle through edges {0:?}")]
    NotCycleReset(Vec<String>),
    #[error("valuation lies outside the invariant of `{0}`")]
    OutsideInvariant(String),
    #[error("unknown location `{0}`")]
    UnknownLocation(String),
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("state at `{location}` is outside its invariant")]
    OutsideInvariant { location: String },
    #[error("no edge can fire from `{location}` (I(s) is empty)")]
    Blocked { location: String },
    #[error("uniform delay requested on an unbounded delay set at `{location}`")]
    UnboundedUniform { location: String },
    #[error("rejection budget exhausted while sampling {what}")]
    Rejection { what: String },
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<SampleError>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CycleCheck {
    Ok,
    Witness(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrongProfile {
    pub strong_edges: Vec<usize>,
    /// Location pairs connected by at least one edge, all of them strong.
    pub sr_pairs: Vec<(usize, usize)>,
    pub nonreset_edges: Vec<usize>,
}

/// Concrete hybrid state with a float valuation.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub location: usize,
    pub valuation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub delay: f64,
    pub edge: usize,
    pub next: State,
}

impl Shs {
    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.name == name)
    }

    pub fn edge_index(&self, name: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.name == name)
    }

    pub fn target(&self, name: &str) -> Result<&Target, ModelError> {
        self.targets
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ModelError::UnknownTarget(name.to_string()))
    }

    pub fn outgoing(&self, loc: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.src == loc)
            .map(|(i, _)| i)
    }

    /// Old coordinates after a delay: `x = v + rates·τ` over `(v, τ)`.
    pub fn flow_map(&self, loc: usize) -> AffineMap {
        let n = self.dim();
        let rates = &self.locations[loc].rates;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![Rat::zero(); n + 1];
                r[i] = Rat::one();
                r[n] = rates[i].clone();
                (r, Rat::zero())
            })
            .collect();
        AffineMap {
            input_dim: n + 1,
            rows,
        }
    }

    /// `{(v, τ) : τ ≥ 0, v ∈ Inv, v + rτ ∈ Inv, v + rτ ∈ guard}` for edge `e`.
    /// Convexity of the invariant makes the endpoint checks sufficient.
    pub fn delay_region(&self, e: usize) -> LinSet {
        let edge = &self.edges[e];
        let n = self.dim();
        let loc = &self.locations[edge.src];
        let flow = self.flow_map(edge.src);
        let tau_nonneg = LinSet::from_atoms(n + 1, vec![LinAtom::cmp_var(n + 1, Rat::zero(), Rel::Le, n)]);
        tau_nonneg
            .meet(&loc.invariant.extend(1))
            .meet(&loc.invariant.preimage(&flow))
            .meet(&edge.guard.preimage(&flow))
    }

    fn slice_at(&self, v: &[Rat]) -> AffineMap {
        let n = self.dim();
        let mut rows: Vec<(Vec<Rat>, Rat)> = v.iter().map(|x| (vec![Rat::zero()], x.clone())).collect();
        rows.push((vec![Rat::one()], Rat::zero()));
        debug_assert_eq!(rows.len(), n + 1);
        AffineMap { input_dim: 1, rows }
    }

    /// `I(s)` over τ together with the per-edge slices `I(s, e)` (indexed like
    /// `outgoing(loc)`).
    pub fn delay_set(&self, loc: usize, v: &[Rat]) -> Result<(LinSet, Vec<(usize, LinSet)>), ModelError> {
        if !self.locations[loc].invariant.contains(v) {
            return Err(ModelError::OutsideInvariant(self.locations[loc].name.clone()));
        }
        let slice = self.slice_at(v);
        let mut total = LinSet::empty(1);
        let mut per_edge = Vec::new();
        for e in self.outgoing(loc) {
            let s = self.delay_region(e).preimage(&slice);
            total = total.join(&s);
            per_edge.push((e, s));
        }
        Ok((total, per_edge))
    }

    /// Preimage of `d` under a Dirac reset.
    ///
    /// # Panics
    /// If the edge is strongly reset.
    pub fn reset_preimage(&self, e: usize, d: &LinSet) -> LinSet {
        let n = self.dim();
        let ResetSpec::Assign(assign) = &self.edges[e].reset else {
            panic!("reset_preimage on a strong reset");
        };
        let rows = assign
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut r = vec![Rat::zero(); n];
                match a {
                    Assign::Keep => {
                        r[i] = Rat::one();
                        (r, Rat::zero())
                    }
                    Assign::Shift(c) => {
                        r[i] = Rat::one();
                        (r, c.clone())
                    }
                    Assign::Set(c) => (r, c.clone()),
                }
            })
            .collect();
        d.preimage(&AffineMap { input_dim: n, rows })
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut diag = |kind, subject: &str, message: String| {
            out.push(Diagnostic {
                kind,
                subject: subject.to_string(),
                message,
            })
        };
        let n = self.dim();
        if n == 0 {
            diag(DiagKind::Dimension, "vars", "at least one variable is required".into());
        }
        dup_names(self.vars.iter(), "variable", &mut diag);
        dup_names(self.locations.iter().map(|l| &l.name), "location", &mut diag);
        dup_names(self.edges.iter().map(|e| &e.name), "edge", &mut diag);
        dup_names(self.targets.iter().map(|t| &t.name), "target", &mut diag);

        let mut shape_ok = vec![true; self.locations.len()];
        for (li, loc) in self.locations.iter().enumerate() {
            if loc.rates.len() != n || loc.invariant.dimension != n {
                diag(DiagKind::Dimension, &loc.name, format!("rates/invariant must have dimension {n}"));
                shape_ok[li] = false;
                continue;
            }
            match loc.invariant.disjuncts.len() {
                0 => {
                    diag(DiagKind::EmptyInvariant, &loc.name, "invariant is empty".into());
                    shape_ok[li] = false;
                }
                1 if loc.invariant.is_empty() => {
                    diag(DiagKind::EmptyInvariant, &loc.name, "invariant is empty".into());
                    shape_ok[li] = false;
                }
                1 => {}
                k => {
                    diag(
                        DiagKind::NonConvexInvariant,
                        &loc.name,
                        format!("invariant must be a single convex polyhedron, found {k} disjuncts"),
                    );
                    shape_ok[li] = false;
                }
            }
            if let DelaySpec::Exp(r) = &loc.delay {
                if !r.is_positive() {
                    diag(DiagKind::Delay, &loc.name, "exponential rate must be positive".into());
                }
            }
            if self.outgoing(li).next().is_none() {
                diag(DiagKind::NoOutgoingEdge, &loc.name, "location has no outgoing edge".into());
            }
        }

        let mut edges_ok = true;
        for e in &self.edges {
            for (end, idx) in [("source", e.src), ("target", e.dst)] {
                if idx >= self.locations.len() {
                    diag(DiagKind::Reference, &e.name, format!("{end} location #{idx} does not exist"));
                    edges_ok = false;
                }
            }
            if e.guard.dimension != n {
                diag(DiagKind::Dimension, &e.name, format!("guard must have dimension {n}"));
                edges_ok = false;
                continue;
            }
            if e.guard.is_empty() {
                diag(DiagKind::EmptyGuard, &e.name, "guard is empty".into());
            }
            match &e.reset {
                ResetSpec::Assign(a) if a.len() != n => {
                    diag(DiagKind::Dimension, &e.name, format!("reset must assign {n} variables"));
                    edges_ok = false;
                }
                ResetSpec::Assign(_) => {}
                ResetSpec::Strong { support, kind, bbox } => {
                    if support.dimension != n {
                        diag(DiagKind::Dimension, &e.name, format!("reset support must have dimension {n}"));
                        edges_ok = false;
                        continue;
                    }
                    match kind {
                        StrongKind::UniformDiscrete => match support.finite_points() {
                            Some(p) if !p.is_empty() => {}
                            Some(_) => diag(DiagKind::Reset, &e.name, "discrete reset support is empty".into()),
                            None => diag(DiagKind::Reset, &e.name, "discrete reset support is not finite".into()),
                        },
                        StrongKind::UniformContinuous => {
                            check_uniform_support(support, bbox, n, &e.name, "reset", &mut diag);
                        }
                    }
                }
            }
        }

        for part in &self.init {
            let subject = "init";
            let Some(loc) = self.locations.get(part.location) else {
                diag(DiagKind::Reference, subject, format!("location #{} does not exist", part.location));
                continue;
            };
            if !part.weight.is_positive() {
                diag(DiagKind::Init, &loc.name, "initial weights must be positive".into());
            }
            match &part.shape {
                InitShape::Point(p) => {
                    if p.len() != n {
                        diag(DiagKind::Dimension, &loc.name, format!("initial point must have {n} coordinates"));
                    } else if shape_ok[part.location] && !loc.invariant.contains(p) {
                        diag(DiagKind::Init, &loc.name, "initial point lies outside the invariant".into());
                    }
                }
                InitShape::Uniform { support, bbox } => {
                    if support.dimension != n {
                        diag(DiagKind::Dimension, &loc.name, format!("initial support must have dimension {n}"));
                        continue;
                    }
                    check_uniform_support(support, bbox, n, &loc.name, "initial", &mut diag);
                    if shape_ok[part.location] && !support.is_subset(&loc.invariant) {
                        diag(DiagKind::Init, &loc.name, "initial support leaves the invariant".into());
                    }
                }
            }
        }
        if self.init.is_empty() {
            diag(DiagKind::Init, "init", "no initial distribution".into());
        } else {
            let total: Rat = self.init.iter().map(|p| p.weight.clone()).sum();
            if !total.is_one() {
                diag(DiagKind::Init, "init", format!("initial weights sum to {}, not 1", fmt_rat(&total)));
            }
        }

        for t in &self.targets {
            for b in &t.blocks {
                if b.location >= self.locations.len() {
                    diag(DiagKind::Reference, &t.name, format!("location #{} does not exist", b.location));
                } else if b.region.dimension != n {
                    diag(DiagKind::Dimension, &t.name, format!("target region must have dimension {n}"));
                }
            }
        }

        if edges_ok {
            for (li, loc) in self.locations.iter().enumerate() {
                if !shape_ok[li] {
                    continue;
                }
                let stuck = loc.invariant.minus(&self.enabled_somewhere(li));
                if !stuck.is_empty() {
                    diag(
                        DiagKind::Blocking,
                        &loc.name,
                        format!(
                            "no edge is ever enabled from {}",
                            stuck.simplify().fmt_with(&self.vars)
                        ),
                    );
                }
            }
        }
        out
    }

    /// `{v : I((loc, v)) ≠ ∅}`.
    pub fn enabled_somewhere(&self, loc: usize) -> LinSet {
        let n = self.dim();
        let mut all = LinSet::empty(n + 1);
        for e in self.outgoing(loc) {
            all = all.join(&self.delay_region(e));
        }
        all.project(&[n]).expect("tau coordinate exists")
    }

    pub fn strong_profile(&self) -> StrongProfile {
        let strong_edges: Vec<usize> = (0..self.edges.len())
            .filter(|&e| self.edges[e].reset.is_strong())
            .collect();
        let nonreset_edges = (0..self.edges.len())
            .filter(|&e| !self.edges[e].reset.is_strong())
            .collect();
        let mut sr_pairs = Vec::new();
        for e in &self.edges {
            let pair = (e.src, e.dst);
            if sr_pairs.contains(&pair) {
                continue;
            }
            let all_strong = self
                .edges
                .iter()
                .filter(|f| (f.src, f.dst) == pair)
                .all(|f| f.reset.is_strong());
            if all_strong {
                sr_pairs.push(pair);
            }
        }
        sr_pairs.sort();
        StrongProfile {
            strong_edges,
            sr_pairs,
            nonreset_edges,
        }
    }

    /// Looks for a cycle made only of non-strong edges.
    pub fn cycle_reset_check(&self) -> CycleCheck {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let nl = self.locations.len();
        let mut mark = vec![Mark::New; nl];
        let mut path: Vec<usize> = Vec::new();

        fn dfs(
            m: &Shs,
            u: usize,
            mark: &mut [Mark],
            path: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            mark[u] = Mark::Active;
            for e in m.outgoing(u) {
                if m.edges[e].reset.is_strong() {
                    continue;
                }
                let v = m.edges[e].dst;
                path.push(e);
                match mark[v] {
                    Mark::Active => {
                        let start = path
                            .iter()
                            .position(|&f| m.edges[f].src == v)
                            .expect("active location is on the path");
                        return Some(path[start..].to_vec());
                    }
                    Mark::New => {
                        if let Some(c) = dfs(m, v, mark, path) {
                            return Some(c);
                        }
                    }
                    Mark::Done => {}
                }
                path.pop();
            }
            mark[u] = Mark::Done;
            None
        }

        for start in 0..nl {
            if mark[start] == Mark::New {
                if let Some(c) = dfs(self, start, &mut mark, &mut path) {
                    return CycleCheck::Witness(c);
                }
            }
        }
        CycleCheck::Ok
    }

    pub fn require_cycle_reset(&self) -> Result<(), ModelError> {
        match self.cycle_reset_check() {
            CycleCheck::Ok => Ok(()),
            CycleCheck::Witness(c) => Err(ModelError::NotCycleReset(
                c.iter().map(|&e| self.edges[e].name.clone()).collect(),
            )),
        }
    }

    /// Longest edge count of a path using only non-strong edges.
    pub fn longest_nonreset_path(&self) -> Result<usize, ModelError> {
        self.require_cycle_reset()?;
        let nl = self.locations.len();
        let mut memo: Vec<Option<usize>> = vec![None; nl];
        fn longest(m: &Shs, u: usize, memo: &mut Vec<Option<usize>>) -> usize {
            if let Some(v) = memo[u] {
                return v;
            }
            let mut best = 0;
            for e in m.outgoing(u) {
                if !m.edges[e].reset.is_strong() {
                    best = best.max(1 + longest(m, m.edges[e].dst, memo));
                }
            }
            memo[u] = Some(best);
            best
        }
        Ok((0..nl).map(|u| longest(self, u, &mut memo)).max().unwrap_or(0))
    }

    /// Union of a target's regions at one location.
    pub fn region_at(&self, blocks: &[Block], loc: usize) -> LinSet {
        blocks
            .iter()
            .filter(|b| b.location == loc)
            .fold(LinSet::empty(self.dim()), |acc, b| acc.join(&b.region))
    }

    pub fn sampler(&self) -> Sampler {
        Sampler::new(self)
    }

    /// One mixed transition. Builds a [`Sampler`]; reuse one for many draws.
    pub fn kernel_sample<R: Rng + ?Sized>(&self, s: &State, rng: &mut R) -> Result<Step, SampleError> {
        self.sampler().step(s, rng)
    }
}

fn dup_names<'a>(
    names: impl Iterator<Item = &'a String>,
    what: &str,
    diag: &mut impl FnMut(DiagKind, &str, String),
) {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n) {
            diag(DiagKind::Duplicate, n, format!("duplicate {what} name"));
        }
    }
}

fn check_uniform_support(
    support: &LinSet,
    bbox: &[(Rat, Rat)],
    n: usize,
    subject: &str,
    what: &str,
    diag: &mut impl FnMut(DiagKind, &str, String),
) {
    let kind = if what == "reset" { DiagKind::Reset } else { DiagKind::Init };
    if !support.has_interior() {
        diag(kind, subject, format!("{what} support has empty interior"));
    }
    if bbox.len() != n {
        diag(kind, subject, format!("{what} support needs a bounding box with {n} intervals"));
    } else if !support.is_subset(&LinSet::from_box(bbox)) {
        diag(kind, subject, format!("{what} support is not contained in its bounding box"));
    }
}

const SNAP: f64 = 1e-9;

#[derive(Debug, Clone)]
struct FAtom {
    coeffs: Vec<f64>,
    constant: f64,
    slope: f64,
    rel: Rel,
}

/// A real interval with open or closed endpoints; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Interval {
    fn nonneg() -> Self {
        Interval {
            lo: 0.0,
            lo_closed: true,
            hi: f64::INFINITY,
            hi_closed: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi && self.lo_closed && self.hi_closed
    }

    pub fn contains(&self, t: f64) -> bool {
        (t > self.lo || (t == self.lo && self.lo_closed)) && (t < self.hi || (t == self.hi && self.hi_closed))
    }

    fn cap_above(&mut self, b: f64, closed: bool) {
        if b < self.hi || (b == self.hi && !closed) {
            self.hi = b;
            self.hi_closed = closed;
        }
    }

    fn cap_below(&mut self, b: f64, closed: bool) {
        if b > self.lo || (b == self.lo && !closed) {
            self.lo = b;
            self.lo_closed = closed;
        }
    }
}

/// Restricts `iv` by `coeffs·(v + rτ) + c ⋈ 0`; returns false when empty.
fn constrain(iv: &mut Interval, a: &FAtom, v: &[f64]) -> bool {
    let mut s = a.coeffs.iter().zip(v).fold(a.constant, |acc, (c, x)| acc + c * x);
    if s.abs() <= SNAP {
        s = 0.0;
    }
    if a.slope == 0.0 {
        return match a.rel {
            Rel::Lt => s < 0.0,
            Rel::Le => s <= 0.0,
            Rel::Eq => s == 0.0,
        };
    }
    let b = -s / a.slope;
    match (a.rel, a.slope > 0.0) {
        (Rel::Eq, _) => {
            iv.cap_above(b, true);
            iv.cap_below(b, true);
        }
        (rel, true) => iv.cap_above(b, rel == Rel::Le),
        (rel, false) => iv.cap_below(b, rel == Rel::Le),
    }
    !iv.is_empty()
}

fn holds_now(a: &FAtom, v: &[f64]) -> bool {
    let mut s = a.coeffs.iter().zip(v).fold(a.constant, |acc, (c, x)| acc + c * x);
    if s.abs() <= SNAP {
        s = 0.0;
    }
    match a.rel {
        Rel::Lt => s < 0.0,
        Rel::Le => s <= 0.0,
        Rel::Eq => s == 0.0,
    }
}

fn compile_atoms(atoms: &[LinAtom], rates: &[f64]) -> Vec<FAtom> {
    atoms
        .iter()
        .map(|a| {
            let coeffs: Vec<f64> = a.coeffs.iter().map(to_f64).collect();
            let slope = coeffs.iter().zip(rates).map(|(c, r)| c * r).sum();
            FAtom {
                coeffs,
                constant: to_f64(&a.constant),
                slope,
                rel: a.rel,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
enum FReset {
    Assign(Vec<(bool, f64)>),
    Uniform { set: FloatSet, fbox: Vec<(f64, f64)> },
    Discrete(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
struct FEdge {
    dst: usize,
    guard: Vec<Vec<FAtom>>,
    reset: FReset,
}

#[derive(Debug, Clone)]
struct FLoc {
    name: String,
    rates: Vec<f64>,
    inv: Vec<FAtom>,
    delay: DelaySpec,
    exp_rate: f64,
    out: Vec<usize>,
}

#[derive(Debug, Clone)]
enum FInit {
    Point(Vec<f64>),
    Uniform { set: FloatSet, fbox: Vec<(f64, f64)> },
}

/// Float compilation of a validated [`Shs`] for fast sampling.
#[derive(Debug, Clone)]
pub struct Sampler {
    locs: Vec<FLoc>,
    edges: Vec<FEdge>,
    init: Vec<(usize, f64, FInit)>,
    pub max_rejections: usize,
}

/// Delay sets at a concrete state: the union `I(s)` and the per-edge pieces.
#[derive(Debug, Clone)]
pub struct DelaySets {
    pub per_edge: Vec<(usize, Vec<Interval>)>,
}

impl DelaySets {
    pub fn union(&self) -> Vec<Interval> {
        merge(self.per_edge.iter().flat_map(|(_, v)| v.iter().copied()).collect())
    }

    pub fn enabled_at(&self, t: f64) -> Vec<usize> {
        self.per_edge
            .iter()
            .filter(|(_, ivs)| ivs.iter().any(|iv| iv.contains(t)))
            .map(|(e, _)| *e)
            .collect()
    }
}

/// Sorts and merges overlapping or touching intervals.
pub fn merge(mut ivs: Vec<Interval>) -> Vec<Interval> {
    ivs.retain(|iv| !iv.is_empty());
    ivs.sort_by(|a, b| {
        a.lo.partial_cmp(&b.lo)
            .unwrap()
            .then_with(|| b.lo_closed.cmp(&a.lo_closed))
    });
    let mut out: Vec<Interval> = Vec::new();
    for iv in ivs {
        if let Some(last) = out.last_mut() {
            let touches = iv.lo < last.hi || (iv.lo == last.hi && (iv.lo_closed || last.hi_closed));
            if touches {
                if iv.hi > last.hi {
                    last.hi = iv.hi;
                    last.hi_closed = iv.hi_closed;
                } else if iv.hi == last.hi {
                    last.hi_closed |= iv.hi_closed;
                }
                continue;
            }
        }
        out.push(iv);
    }
    out
}

impl Sampler {
    pub fn new(m: &Shs) -> Self {
        let locs = m
            .locations
            .iter()
            .enumerate()
            .map(|(li, l)| {
                let rates: Vec<f64> = l.rates.iter().map(to_f64).collect();
                let inv = compile_atoms(
                    l.invariant.disjuncts.first().map(|p| p.atoms.as_slice()).unwrap_or(&[]),
                    &rates,
                );
                let exp_rate = match &l.delay {
                    DelaySpec::Exp(r) => to_f64(r),
                    _ => 1.0,
                };
                FLoc {
                    name: l.name.clone(),
                    rates,
                    inv,
                    delay: l.delay.clone(),
                    exp_rate,
                    out: m.outgoing(li).collect(),
                }
            })
            .collect::<Vec<_>>();
        let edges = m
            .edges
            .iter()
            .map(|e| {
                let rates = &locs[e.src].rates;
                let guard = e.guard.disjuncts.iter().map(|p| compile_atoms(&p.atoms, rates)).collect();
                let reset = match &e.reset {
                    ResetSpec::Assign(a) => FReset::Assign(
                        a.iter()
                            .map(|x| match x {
                                Assign::Keep => (true, 0.0),
                                Assign::Shift(c) => (true, to_f64(c)),
                                Assign::Set(c) => (false, to_f64(c)),
                            })
                            .collect(),
                    ),
                    ResetSpec::Strong {
                        support,
                        kind: StrongKind::UniformContinuous,
                        bbox,
                    } => FReset::Uniform {
                        set: support.compile_f64(),
                        fbox: float_box(bbox),
                    },
                    ResetSpec::Strong {
                        support,
                        kind: StrongKind::UniformDiscrete,
                        ..
                    } => FReset::Discrete(
                        support
                            .finite_points()
                            .unwrap_or_default()
                            .iter()
                            .map(|p| p.iter().map(to_f64).collect())
                            .collect(),
                    ),
                };
                FEdge {
                    dst: e.dst,
                    guard,
                    reset,
                }
            })
            .collect();
        let init = m
            .init
            .iter()
            .map(|p| {
                let shape = match &p.shape {
                    InitShape::Point(v) => FInit::Point(v.iter().map(to_f64).collect()),
                    InitShape::Uniform { support, bbox } => FInit::Uniform {
                        set: support.compile_f64(),
                        fbox: float_box(bbox),
                    },
                };
                (p.location, to_f64(&p.weight), shape)
            })
            .collect();
        Sampler {
            locs,
            edges,
            init,
            max_rejections: 1_000_000,
        }
    }

    pub fn in_invariant(&self, s: &State) -> bool {
        self.locs[s.location].inv.iter().all(|a| holds_now(a, &s.valuation))
    }

    pub fn delay_sets(&self, s: &State) -> Result<DelaySets, SampleError> {
        let loc = &self.locs[s.location];
        if !self.in_invariant(s) {
            return Err(SampleError::OutsideInvariant {
                location: loc.name.clone(),
            });
        }
        let v = &s.valuation;
        let mut inv_iv = Interval::nonneg();
        let inv_ok = loc.inv.iter().all(|a| constrain(&mut inv_iv, a, v));
        let mut per_edge = Vec::with_capacity(loc.out.len());
        for &e in &loc.out {
            let mut pieces = Vec::new();
            if inv_ok {
                for disjunct in &self.edges[e].guard {
                    let mut iv = inv_iv;
                    if disjunct.iter().all(|a| constrain(&mut iv, a, v)) {
                        pieces.push(iv);
                    }
                }
            }
            per_edge.push((e, pieces));
        }
        Ok(DelaySets { per_edge })
    }

    /// Draws τ from the resolved delay family on `I(s)`.
    pub fn sample_delay<R: Rng + ?Sized>(&self, s: &State, sets: &DelaySets, rng: &mut R) -> Result<f64, SampleError> {
        let loc = &self.locs[s.location];
        let union = sets.union();
        if union.is_empty() {
            return Err(SampleError::Blocked {
                location: loc.name.clone(),
            });
        }
        let proper: Vec<Interval> = union.iter().copied().filter(|iv| iv.hi > iv.lo).collect();
        if proper.is_empty() {
            let i = rng.random_range(0..union.len());
            return Ok(union[i].lo);
        }
        let unbounded = proper.iter().any(|iv| iv.hi.is_infinite());
        let use_exp = match loc.delay {
            DelaySpec::Exp(_) => true,
            DelaySpec::Auto => unbounded,
            DelaySpec::Uniform if unbounded => {
                return Err(SampleError::UnboundedUniform {
                    location: loc.name.clone(),
                })
            }
            DelaySpec::Uniform => false,
        };
        if !use_exp {
            let total: f64 = proper.iter().map(|iv| iv.hi - iv.lo).sum();
            let mut u = rng.random::<f64>() * total;
            for iv in &proper {
                let len = iv.hi - iv.lo;
                if u < len {
                    return Ok(iv.lo + u);
                }
                u -= len;
            }
            let last = proper.last().unwrap();
            return Ok(last.lo + 0.5 * (last.hi - last.lo));
        }
        // truncated exponential; masses are taken relative to the first piece
        let rate = loc.exp_rate;
        let base = proper[0].lo;
        let mass = |iv: &Interval| {
            let a = (-(rate) * (iv.lo - base)).exp();
            let b = if iv.hi.is_infinite() { 0.0 } else { (-(rate) * (iv.hi - base)).exp() };
            (a, a - b)
        };
        let total: f64 = proper.iter().map(|iv| mass(iv).1).sum();
        let mut u = rng.random::<f64>() * total;
        for iv in &proper {
            let (a, m) = mass(iv);
            if u < m || std::ptr::eq(iv, proper.last().unwrap()) {
                let w = u.min(m);
                let t = base - (a - w).ln() / rate;
                let t = if t.is_finite() { t.max(iv.lo) } else { iv.lo };
                return Ok(if iv.hi.is_finite() { t.min(iv.hi) } else { t });
            }
            u -= m;
        }
        unreachable!("interval list is nonempty")
    }

    fn apply_reset<R: Rng + ?Sized>(&self, e: usize, w: &[f64], rng: &mut R) -> Result<Vec<f64>, SampleError> {
        match &self.edges[e].reset {
            FReset::Assign(a) => Ok(a
                .iter()
                .zip(w)
                .map(|(&(keep, c), &x)| if keep { x + c } else { c })
                .collect()),
            FReset::Uniform { set, fbox } => set.sample_in_box(fbox, rng, self.max_rejections).map_err(|_| {
                SampleError::Rejection {
                    what: "a strong reset".into(),
                }
            }),
            FReset::Discrete(points) => Ok(points[rng.random_range(0..points.len())].clone()),
        }
    }

    /// Samples the edge fired after a delay and the reset outcome.
    pub fn step<R: Rng + ?Sized>(&self, s: &State, rng: &mut R) -> Result<Step, SampleError> {
        let sets = self.delay_sets(s)?;
        let loc = &self.locs[s.location];
        for _ in 0..64 {
            let tau = self.sample_delay(s, &sets, rng)?;
            let enabled = sets.enabled_at(tau);
            if enabled.is_empty() {
                // only possible on a measure-zero boundary
                continue;
            }
            let e = enabled[rng.random_range(0..enabled.len())];
            let w: Vec<f64> = s.valuation.iter().zip(&loc.rates).map(|(x, r)| x + r * tau).collect();
            let v = self.apply_reset(e, &w, rng)?;
            return Ok(Step {
                delay: tau,
                edge: e,
                next: State {
                    location: self.edges[e].dst,
                    valuation: v,
                },
            });
        }
        Err(SampleError::Blocked {
            location: loc.name.clone(),
        })
    }

    pub fn sample_init<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<State, SampleError> {
        let total: f64 = self.init.iter().map(|p| p.1).sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = self.init.len() - 1;
        for (i, p) in self.init.iter().enumerate() {
            if u < p.1 {
                chosen = i;
                break;
            }
            u -= p.1;
        }
        let (location, _, shape) = &self.init[chosen];
        let valuation = match shape {
            FInit::Point(v) => v.clone(),
            FInit::Uniform { set, fbox } => set
                .sample_in_box(fbox, rng, self.max_rejections)
                .map_err(|_| SampleError::Rejection {
                    what: "the initial distribution".into(),
                })?,
        };
        Ok(State {
            location: *location,
            valuation,
        })
    }

    /// Samples the reset distribution of a strong edge.
    pub fn sample_strong<R: Rng + ?Sized>(&self, e: usize, rng: &mut R) -> Result<State, SampleError> {
        let valuation = self.apply_reset(e, &[], rng)?;
        Ok(State {
            location: self.edges[e].dst,
            valuation,
        })
    }

    /// Run prefix `s_0 … s_horizon` from a given start.
    pub fn run_from<R: Rng + ?Sized>(&self, start: State, horizon: usize, rng: &mut R) -> Result<Vec<State>, SampleError> {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(start);
        for k in 0..horizon {
            let step = self.step(out.last().unwrap(), rng).map_err(|e| SampleError::AtStep {
                step: k,
                source: Box::new(e),
            })?;
            out.push(step.next);
        }
        Ok(out)
    }

    pub fn run<R: Rng + ?Sized>(&self, horizon: usize, rng: &mut R) -> Result<Vec<State>, SampleError> {
        let start = self.sample_init(rng)?;
        self.run_from(start, horizon, rng)
    }
}

fn float_box(bbox: &[(Rat, Rat)]) -> Vec<(f64, f64)> {
    bbox.iter().map(|(a, b)| (to_f64(a), to_f64(b))).collect()
}

/// Float membership in a set of blocks.
#[derive(Debug, Clone)]
pub struct BlockMatcher {
    per_location: Vec<Option<FloatSet>>,
}

impl BlockMatcher {
    pub fn new(m: &Shs, blocks: &[Block]) -> Self {
        let per_location = (0..m.locations.len())
            .map(|l| {
                let r = m.region_at(blocks, l);
                if r.disjuncts.is_empty() {
                    None
                } else {
                    Some(r.compile_f64())
                }
            })
            .collect();
        Self { per_location }
    }

    pub fn contains(&self, s: &State) -> bool {
        self.per_location[s.location]
            .as_ref()
            .is_some_and(|f| f.contains(&s.valuation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::{int, ratio};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn interval(lo: f64, lo_closed: bool, hi: f64, hi_closed: bool) -> Interval {
        Interval {
            lo,
            lo_closed,
            hi,
            hi_closed,
        }
    }

    #[test]
    fn pacman_is_valid() {
        let m = fixtures::pacman();
        assert_eq!(m.validate(), vec![]);
    }

    #[test]
    fn pacman_delay_sets() {
        let m = fixtures::pacman();
        let l0 = m.location_index("l0").unwrap();
        let v = [int(0), ratio(1, 5)];
        let (total, per_edge) = m.delay_set(l0, &v).unwrap();
        let e0 = m.edge_index("e0").unwrap();
        let i_e0 = &per_edge.iter().find(|(e, _)| *e == e0).unwrap().1;
        let expected_e0 = LinSet::from_atoms(
            1,
            vec![
                LinAtom::cmp_var(1, int(0), Rel::Le, 0),
                LinAtom::var_cmp(1, 0, Rel::Lt, ratio(4, 5)),
            ],
        );
        assert!(i_e0.set_eq(&expected_e0));
        let expected = LinSet::from_atoms(
            1,
            vec![
                LinAtom::cmp_var(1, int(0), Rel::Le, 0),
                LinAtom::var_cmp(1, 0, Rel::Lt, ratio(9, 5)),
            ],
        )
        .minus(&LinSet::from_atoms(1, vec![LinAtom::var_cmp(1, 0, Rel::Eq, ratio(4, 5))]));
        assert!(total.set_eq(&expected));
    }

    #[test]
    fn full_guard_delay_region_is_tau_nonneg() {
        let mut m = fixtures::single_loop();
        m.locations[0].invariant = LinSet::full(1);
        m.edges[0].guard = LinSet::full(1);
        m.edges[0].reset = ResetSpec::identity(1);
        let r = m.delay_region(0);
        let expected = LinSet::from_atoms(2, vec![LinAtom::cmp_var(2, int(0), Rel::Le, 1)]);
        assert!(r.set_eq(&expected));
    }

    #[test]
    fn blocking_guard_is_reported() {
        let mut m = fixtures::single_loop();
        m.locations[0].invariant = LinSet::from_atoms(1, vec![LinAtom::cmp_var(1, int(0), Rel::Le, 0)]);
        m.edges[0].guard = LinSet::from_atoms(1, vec![LinAtom::var_cmp(1, 0, Rel::Lt, int(0))]);
        let d = m.validate();
        assert!(d.iter().any(|d| d.kind == DiagKind::Blocking), "{d:?}");
    }

    #[test]
    fn unknown_location_is_reported() {
        let mut m = fixtures::single_loop();
        m.edges[0].dst = 7;
        let d = m.validate();
        assert!(d.iter().any(|d| d.kind == DiagKind::Reference && d.subject == m.edges[0].name));
    }

    #[test]
    fn dirac_step_is_deterministic() {
        // x' = 1, guard x = 1, reset x := 0, from x = 0
        let m = fixtures::single_loop();
        let s = State {
            location: 0,
            valuation: vec![0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let step = m.kernel_sample(&s, &mut rng).unwrap();
            assert_eq!(step.delay, 1.0);
            assert_eq!(step.edge, 0);
            assert_eq!(step.next, s);
        }
    }

    #[test]
    fn coin_edge_frequency() {
        let m = fixtures::coin();
        let sampler = m.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sampler.sample_init(&mut rng).unwrap();
        let e_b = m.edge_index("e_b").unwrap();
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| sampler.step(&s, &mut rng).unwrap().edge == e_b)
            .count();
        let f = hits as f64 / n as f64;
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn pacman_run_prefix_has_positive_density() {
        // (l0,(0,0)) -0.4,e0-> (l1,(0.4,0.4)) -0.6,e1-> (l2,(1,0)) ...
        let m = fixtures::pacman();
        let sampler = m.sampler();
        let trans = [
            ("l0", [0.0, 0.0], 0.4, "e0"),
            ("l1", [0.4, 0.4], 0.6, "e1"),
            ("l2", [1.0, 0.0], 0.5, "e2"),
            ("l0", [0.0, 0.5], 1.2, "e3"),
        ];
        for (loc, v, tau, edge) in trans {
            let s = State {
                location: m.location_index(loc).unwrap(),
                valuation: v.to_vec(),
            };
            let sets = sampler.delay_sets(&s).unwrap();
            let union = sets.union();
            let e = m.edge_index(edge).unwrap();
            assert!(union.iter().any(|iv| iv.contains(tau)), "{loc} {tau}");
            assert!(sets.enabled_at(tau).contains(&e), "{loc} {edge}");
        }
    }

    #[test]
    fn strong_profile_cases() {
        let m = fixtures::pacman();
        let p = m.strong_profile();
        assert!(p.strong_edges.is_empty());
        assert!(!m.edges[m.edge_index("e1").unwrap()].reset.is_strong());
        assert!(!ResetSpec::identity(2).is_strong());
        let c = fixtures::coin();
        assert!(c.edges[c.edge_index("e_b").unwrap()].reset.is_strong());
    }

    #[test]
    fn pacman_cycle_witness() {
        let m = fixtures::pacman();
        let names: Vec<&str> = match m.cycle_reset_check() {
            CycleCheck::Witness(c) => c.iter().map(|&e| m.edges[e].name.as_str()).collect(),
            CycleCheck::Ok => panic!("pacman has non-strong cycles"),
        };
        assert_eq!(names, ["e0", "e1", "e2"]);
        assert!(m.longest_nonreset_path().is_err());
    }

    #[test]
    fn strong_self_loop_is_cycle_reset() {
        let m = fixtures::strong_loop();
        assert_eq!(m.cycle_reset_check(), CycleCheck::Ok);
        assert_eq!(m.longest_nonreset_path(), Ok(0));
    }

    #[test]
    fn chain_of_three_then_strong() {
        let m = fixtures::chain(3);
        assert_eq!(m.cycle_reset_check(), CycleCheck::Ok);
        assert_eq!(m.longest_nonreset_path(), Ok(3));
    }

    #[test]
    fn merge_intervals() {
        let a = interval(0.0, true, 0.8, false);
        let b = interval(0.8, false, 1.8, false);
        let merged = merge(vec![b, a]);
        assert_eq!(merged, vec![a, b]);
        let c = interval(0.8, true, 0.8, true);
        let merged = merge(vec![a, b, c]);
        assert_eq!(merged, vec![interval(0.0, true, 1.8, false)]);
    }

    #[test]
    fn truncated_exponential_stays_in_pieces() {
        let m = fixtures::no_finite_abs();
        let sampler = m.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = State {
            location: 0,
            valuation: vec![0.5],
        };
        let sets = sampler.delay_sets(&s).unwrap();
        let mut mean = 0.0;
        let n = 20_000;
        for _ in 0..n {
            let t = sampler.sample_delay(&s, &sets, &mut rng).unwrap();
            assert!(t >= 0.0);
            mean += t / n as f64;
        }
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }
}
