//! Stochastic transition systems: exact finite Markov chains, lazily
//! generated countable chains, simulation and bounded-LTL estimation.

use crate::rational::{parse_rat, Rat};
use crate::shs::{SampleError, Sampler, State};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;
use std::sync::Arc;

pub type StateSet = BTreeSet<usize>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum McError {
    #[error("row {row} sums to {sum}, not 1")]
    RowSum { row: usize, sum: String },
    #[error("entry ({row}, {col}) = {value} is outside [0, 1]")]
    Entry { row: usize, col: usize, value: String },
    #[error("row {row} has {got} entries, expected {expected}")]
    Shape { row: usize, got: usize, expected: usize },
    #[error("malformed matrix: {0}")]
    Format(String),
    #[error("state {0} out of range")]
    State(usize),
}

/// Finite chain with an exact row-stochastic kernel, stored sparsely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMc {
    rows: Vec<Vec<(usize, Rat)>>,
}

/// Exact distribution over the states of a [`FiniteMc`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistVec(pub Vec<Rat>);

impl DistVec {
    pub fn dirac(n: usize, s: usize) -> Self {
        let mut v = vec![Rat::zero(); n];
        v[s] = Rat::one();
        DistVec(v)
    }

    pub fn uniform(n: usize, support: &StateSet) -> Self {
        let k = Rat::from_integer(BigInt::from(support.len()));
        DistVec(
            (0..n)
                .map(|s| if support.contains(&s) { Rat::one() / &k } else { Rat::zero() })
                .collect(),
        )
    }

    pub fn mass(&self, set: &StateSet) -> Rat {
        set.iter().map(|&s| self.0[s].clone()).sum()
    }

    pub fn total(&self) -> Rat {
        self.0.iter().cloned().sum()
    }

    fn restrict(&self, set: &StateSet) -> DistVec {
        DistVec(
            self.0
                .iter()
                .enumerate()
                .map(|(s, p)| if set.contains(&s) { p.clone() } else { Rat::zero() })
                .collect(),
        )
    }

    pub fn support(&self) -> StateSet {
        (0..self.0.len()).filter(|&s| !self.0[s].is_zero()).collect()
    }
}

/// Sequence of state sets `(A_0, …, A_n)`.
pub type BlockSeq = Vec<StateSet>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttractorCheck {
    pub set: Vec<usize>,
    pub is_attractor: bool,
    /// Minimal probability of reaching `B` from `A ∖ B̃`, or 1 when empty.
    pub p: String,
    pub decisive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CriterionReport {
    pub btilde: Vec<usize>,
    pub candidates: Vec<AttractorCheck>,
    /// `P_{δ_s}(F B ∨ F B̃)` for each state.
    pub reach_b_or_btilde: Vec<String>,
    pub decisive: bool,
}

impl FiniteMc {
    pub fn new(dense: Vec<Vec<Rat>>) -> Result<Self, McError> {
        let n = dense.len();
        let mut rows = Vec::with_capacity(n);
        for (i, row) in dense.into_iter().enumerate() {
            if row.len() != n {
                return Err(McError::Shape {
                    row: i,
                    got: row.len(),
                    expected: n,
                });
            }
            let mut sum = Rat::zero();
            let mut sparse = Vec::new();
            for (j, p) in row.into_iter().enumerate() {
                if p.is_negative() || p > Rat::one() {
                    return Err(McError::Entry {
                        row: i,
                        col: j,
                        value: crate::rational::fmt_rat(&p),
                    });
                }
                sum += &p;
                if !p.is_zero() {
                    sparse.push((j, p));
                }
            }
            if !sum.is_one() {
                return Err(McError::RowSum {
                    row: i,
                    sum: crate::rational::fmt_rat(&sum),
                });
            }
            rows.push(sparse);
        }
        Ok(Self { rows })
    }

    /// Chain whose rows are uniform over the given successor lists.
    pub fn uniform_over(succ: &[Vec<usize>]) -> Result<Self, McError> {
        let n = succ.len();
        let dense = succ
            .iter()
            .map(|s| {
                let mut row = vec![Rat::zero(); n];
                let k = Rat::from_integer(BigInt::from(s.len()));
                for &t in s {
                    row[t] = Rat::one() / &k;
                }
                row
            })
            .collect();
        Self::new(dense)
    }

    /// Parses `[["1/2","1/2"],["0","1"]]` or `{"kernel": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, McError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| McError::Format(e.to_string()))?;
        let rows = match &v {
            serde_json::Value::Object(o) => o
                .get("kernel")
                .cloned()
                .ok_or_else(|| McError::Format("missing `kernel` field".into()))?,
            _ => v.clone(),
        };
        let rows = rows
            .as_array()
            .ok_or_else(|| McError::Format("kernel must be an array of rows".into()))?;
        let mut dense = Vec::new();
        for row in rows {
            let row = row
                .as_array()
                .ok_or_else(|| McError::Format("each row must be an array".into()))?;
            let mut out = Vec::new();
            for x in row {
                let text = match x {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Number(n) => n.to_string(),
                    _ => return Err(McError::Format(format!("bad entry {x}"))),
                };
                out.push(parse_rat(&text).map_err(|e| McError::Format(e.to_string()))?);
            }
            dense.push(out);
        }
        Self::new(dense)
    }

    /// One row per line, entries separated by tabs or spaces.
    pub fn from_tsv(text: &str) -> Result<Self, McError> {
        let mut dense = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| parse_rat(t).map_err(|e| McError::Format(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            dense.push(row);
        }
        Self::new(dense)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, s: usize) -> &[(usize, Rat)] {
        &self.rows[s]
    }

    pub fn prob(&self, s: usize, t: usize) -> Rat {
        self.rows[s]
            .iter()
            .find(|(u, _)| *u == t)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(Rat::zero)
    }

    pub fn all_states(&self) -> StateSet {
        (0..self.len()).collect()
    }

    /// `Ω(μ)`, the distribution after one step.
    pub fn omega(&self, mu: &DistVec) -> DistVec {
        let mut out = vec![Rat::zero(); self.len()];
        for (s, p) in mu.0.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            for (t, q) in &self.rows[s] {
                out[*t] += p * q;
            }
        }
        DistVec(out)
    }

    /// `{s : κ(s, B) > 0}`.
    pub fn pre(&self, b: &StateSet) -> StateSet {
        (0..self.len())
            .filter(|&s| self.rows[s].iter().any(|(t, _)| b.contains(t)))
            .collect()
    }

    pub fn cyl_prob(&self, mu: &DistVec, blocks: &[StateSet]) -> Rat {
        let Some((first, rest)) = blocks.split_first() else {
            return mu.total();
        };
        let mut nu = mu.restrict(first);
        for a in rest {
            nu = self.omega(&nu).restrict(a);
        }
        nu.total()
    }

    /// `μ_{A_0,…,A_n}`, or `None` when some normalising mass vanishes.
    pub fn conditional(&self, mu: &DistVec, blocks: &[StateSet]) -> Option<DistVec> {
        let mut nu = mu.clone();
        for (i, a) in blocks.iter().enumerate() {
            let stepped = if i == 0 { nu } else { self.omega(&nu) };
            let r = stepped.restrict(a);
            let m = r.total();
            if m.is_zero() {
                return None;
            }
            nu = DistVec(r.0.into_iter().map(|p| p / &m).collect());
        }
        Some(nu)
    }

    /// States with a graph path to `B` (including `B`).
    pub fn backward_reachable(&self, b: &StateSet) -> StateSet {
        let n = self.len();
        let mut preds = vec![Vec::new(); n];
        for s in 0..n {
            for (t, _) in &self.rows[s] {
                preds[*t].push(s);
            }
        }
        let mut seen: StateSet = b.clone();
        let mut stack: Vec<usize> = b.iter().copied().collect();
        while let Some(t) = stack.pop() {
            for &s in &preds[t] {
                if seen.insert(s) {
                    stack.push(s);
                }
            }
        }
        seen
    }

    pub fn btilde(&self, b: &StateSet) -> StateSet {
        let back = self.backward_reachable(b);
        (0..self.len()).filter(|s| !back.contains(s)).collect()
    }

    /// `P_{δ_s}(F B)` for every state, exactly.
    pub fn reach_exact(&self, b: &StateSet) -> Vec<Rat> {
        let n = self.len();
        let back = self.backward_reachable(b);
        let unknown: Vec<usize> = (0..n).filter(|s| back.contains(s) && !b.contains(s)).collect();
        let mut index = vec![usize::MAX; n];
        for (i, &s) in unknown.iter().enumerate() {
            index[s] = i;
        }
        let k = unknown.len();
        // (I - Q) x = κ(·, B)
        let mut a = vec![vec![Rat::zero(); k + 1]; k];
        for (i, &s) in unknown.iter().enumerate() {
            a[i][i] += Rat::one();
            for (t, p) in &self.rows[s] {
                if b.contains(t) {
                    a[i][k] += p;
                } else if index[*t] != usize::MAX {
                    a[i][index[*t]] -= p;
                }
            }
        }
        let x = gauss_solve(a);
        let mut out = vec![Rat::zero(); n];
        for &s in b {
            out[s] = Rat::one();
        }
        for (i, &s) in unknown.iter().enumerate() {
            out[s] = x[i].clone();
        }
        out
    }

    pub fn is_attractor(&self, a: &StateSet) -> bool {
        self.reach_exact(a).iter().all(One::is_one)
    }

    /// Same chain with every state of `B` turned into an absorbing state.
    pub fn make_absorbing(&self, b: &StateSet) -> FiniteMc {
        let rows = (0..self.len())
            .map(|s| {
                if b.contains(&s) {
                    vec![(s, Rat::one())]
                } else {
                    self.rows[s].clone()
                }
            })
            .collect();
        FiniteMc { rows }
    }

    /// Strongly connected components with no edge leaving them.
    pub fn bsccs(&self) -> Vec<StateSet> {
        let sccs = tarjan(self);
        let mut comp = vec![0; self.len()];
        for (i, c) in sccs.iter().enumerate() {
            for &s in c {
                comp[s] = i;
            }
        }
        let mut out: Vec<StateSet> = sccs
            .iter()
            .enumerate()
            .filter(|(i, c)| c.iter().all(|&s| self.rows[s].iter().all(|(t, _)| comp[*t] == *i)))
            .map(|(_, c)| c.clone())
            .collect();
        out.sort_by_key(|c| *c.iter().next().unwrap());
        out
    }

    /// `P_μ(G ¬B ∧ GF A)`.
    pub fn gf_and_gnot(&self, a: &StateSet, b: &StateSet, mu: &DistVec) -> Rat {
        self.gf_seq_and_gnot(std::slice::from_ref(a), b, mu)
    }

    /// `P_μ(G ¬B ∧ GF φ_𝒜)` where `φ_𝒜` holds at a position followed by a
    /// run segment through `A_0, …, A_n`.
    pub fn gf_seq_and_gnot(&self, blocks: &[StateSet], b: &StateSet, mu: &DistVec) -> Rat {
        let absorbing = self.make_absorbing(b);
        let mut good = StateSet::new();
        for c in absorbing.bsccs() {
            if c.iter().any(|s| b.contains(s)) {
                continue;
            }
            if absorbing.sequence_inside(&c, blocks) {
                good.extend(c);
            }
        }
        if good.is_empty() {
            return Rat::zero();
        }
        let reach = absorbing.reach_exact(&good);
        mu.0.iter().zip(&reach).map(|(p, r)| p * r).sum()
    }

    /// Whether some path inside `c` visits `A_0, …, A_n` consecutively.
    fn sequence_inside(&self, c: &StateSet, blocks: &[StateSet]) -> bool {
        let Some((first, rest)) = blocks.split_first() else {
            return true;
        };
        let mut frontier: StateSet = c.intersection(first).copied().collect();
        for a in rest {
            let mut next = StateSet::new();
            for &s in &frontier {
                for (t, _) in &self.rows[s] {
                    if c.contains(t) && a.contains(t) {
                        next.insert(*t);
                    }
                }
            }
            frontier = next;
        }
        !frontier.is_empty()
    }

    /// Exact `P(GF A)` from every state via BSCC membership.
    pub fn gf_exact(&self, a: &StateSet) -> Vec<Rat> {
        let mut good = StateSet::new();
        for c in self.bsccs() {
            if c.iter().any(|s| a.contains(s)) {
                good.extend(c);
            }
        }
        if good.is_empty() {
            return vec![Rat::zero(); self.len()];
        }
        self.reach_exact(&good)
    }

    pub fn check_decisiveness_criterion(&self, b: &StateSet, extra: &[StateSet]) -> CriterionReport {
        let btilde = self.btilde(b);
        let reach = self.reach_exact(b);
        let mut candidates = vec![self.all_states()];
        candidates.extend(extra.iter().cloned());
        let checks: Vec<AttractorCheck> = candidates
            .into_iter()
            .map(|a| {
                let is_attractor = self.is_attractor(&a);
                let p = a
                    .iter()
                    .filter(|s| !btilde.contains(s))
                    .map(|&s| reach[s].clone())
                    .min()
                    .unwrap_or_else(Rat::one);
                AttractorCheck {
                    set: a.iter().copied().collect(),
                    is_attractor,
                    decisive: is_attractor && p.is_positive(),
                    p: crate::rational::fmt_rat(&p),
                }
            })
            .collect();
        let both: StateSet = b.union(&btilde).copied().collect();
        let reach_b_or_btilde = self
            .reach_exact(&both)
            .iter()
            .map(crate::rational::fmt_rat)
            .collect();
        CriterionReport {
            btilde: btilde.into_iter().collect(),
            decisive: checks.iter().any(|c| c.decisive),
            candidates: checks,
            reach_b_or_btilde,
        }
    }

    /// Minimum of `P(F B)` over the Dirac-generated conditionals `(δ_s)_𝒜`,
    /// or `None` when no conditional is defined. Every well-defined `ν_𝒜` is
    /// a convex combination of these, so the bound holds for all of them.
    pub fn dirac_conditional_bound(&self, blocks: &[StateSet], b: &StateSet) -> Option<Rat> {
        let reach = self.reach_exact(b);
        (0..self.len())
            .filter_map(|s| self.conditional(&DistVec::dirac(self.len(), s), blocks))
            .map(|nu| nu.0.iter().zip(&reach).map(|(p, r)| p * r).sum::<Rat>())
            .min()
    }

    /// Exact `(p_yes(n), p_no(n))`.
    pub fn pyes_pno(&self, mu: &DistVec, b: &StateSet, btilde: &StateSet, n: usize) -> (Rat, Rat) {
        let mut t = Transient::new(self, mu, b, btilde);
        for _ in 0..n {
            t.step();
        }
        (t.p_yes(), t.p_no())
    }
}

fn gauss_solve(mut a: Vec<Vec<Rat>>) -> Vec<Rat> {
    let k = a.len();
    for c in 0..k {
        let p = (c..k).find(|&r| !a[r][c].is_zero()).expect("nonsingular system");
        a.swap(c, p);
        let inv = Rat::one() / &a[c][c];
        for v in a[c].iter_mut() {
            *v *= &inv;
        }
        let pivot = a[c].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != c && !row[c].is_zero() {
                let f = row[c].clone();
                for (v, pv) in row.iter_mut().zip(&pivot) {
                    if !pv.is_zero() {
                        *v -= &f * pv;
                    }
                }
            }
        }
    }
    a.into_iter().map(|row| row[k].clone()).collect()
}

fn tarjan(mc: &FiniteMc) -> Vec<StateSet> {
    struct T<'a> {
        mc: &'a FiniteMc,
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<StateSet>,
    }
    impl T<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for i in 0..self.mc.rows[v].len() {
                let w = self.mc.rows[v][i].0;
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    _ => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut c = StateSet::new();
                loop {
                    let w = self.stack.pop().unwrap();
                    self.on_stack[w] = false;
                    c.insert(w);
                    if w == v {
                        break;
                    }
                }
                self.out.push(c);
            }
        }
    }
    let n = mc.len();
    let mut t = T {
        mc,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.out
}

/// Exact transient analysis with integer numerators over a common
/// denominator `D·Lⁿ`, where `L` is the lcm of the kernel denominators.
#[derive(Debug, Clone)]
pub struct Transient {
    kernel: Vec<Vec<(usize, BigInt)>>,
    l: BigInt,
    denom: BigInt,
    live: Vec<BigInt>,
    yes: BigInt,
    no: BigInt,
    b: StateSet,
    btilde: StateSet,
    pub n: usize,
}

impl Transient {
    pub fn new(mc: &FiniteMc, mu: &DistVec, b: &StateSet, btilde: &StateSet) -> Self {
        let l = mc
            .rows
            .iter()
            .flatten()
            .fold(BigInt::one(), |acc, (_, p)| acc.lcm(p.denom()));
        let kernel = mc
            .rows
            .iter()
            .map(|r| r.iter().map(|(t, p)| (*t, (p * Rat::from_integer(l.clone())).to_integer())).collect())
            .collect();
        let d = mu.0.iter().fold(BigInt::one(), |acc, p| acc.lcm(p.denom()));
        let live = mu
            .0
            .iter()
            .map(|p| (p * Rat::from_integer(d.clone())).to_integer())
            .collect();
        let mut t = Transient {
            kernel,
            l,
            denom: d,
            live,
            yes: BigInt::zero(),
            no: BigInt::zero(),
            b: b.clone(),
            btilde: btilde.clone(),
            n: 0,
        };
        t.absorb();
        t
    }

    fn absorb(&mut self) {
        for &s in &self.b {
            let m = std::mem::take(&mut self.live[s]);
            self.yes += m;
        }
        for &s in &self.btilde {
            let m = std::mem::take(&mut self.live[s]);
            self.no += m;
        }
    }

    pub fn step(&mut self) {
        let mut next = vec![BigInt::zero(); self.live.len()];
        for (s, m) in self.live.iter().enumerate() {
            if m.is_zero() {
                continue;
            }
            for (t, k) in &self.kernel[s] {
                next[*t] += m * k;
            }
        }
        self.live = next;
        self.denom *= &self.l;
        self.yes *= &self.l;
        self.no *= &self.l;
        self.n += 1;
        self.absorb();
    }

    pub fn p_yes(&self) -> Rat {
        Rat::new(self.yes.clone(), self.denom.clone())
    }

    pub fn p_no(&self) -> Rat {
        Rat::new(self.no.clone(), self.denom.clone())
    }

    /// Whether `p_yes + p_no ≥ 1 − gap` (`gap = num/den`), without
    /// building reduced fractions.
    pub fn gap_at_most(&self, num: u64, den: u64) -> bool {
        let rest: BigInt = self.live.iter().sum();
        rest * BigInt::from(den) <= &self.denom * BigInt::from(num)
    }

    /// `p_yes ≤ x ≤ 1 − p_no`.
    pub fn sandwiches(&self, x: &Rat) -> bool {
        let scaled = x * Rat::from_integer(self.denom.clone());
        Rat::from_integer(self.yes.clone()) <= scaled
            && scaled <= Rat::from_integer(&self.denom - &self.no)
    }
}

/// Common interface for simulating a system one step at a time.
pub trait Sts: Sync {
    type State: Clone + Send;
    fn step(&self, s: &Self::State, rng: &mut ChaCha8Rng) -> Result<Self::State, SampleError>;
}

/// Float cumulative rows for sampling a [`FiniteMc`].
#[derive(Debug, Clone)]
pub struct McSampler {
    rows: Vec<Vec<(usize, f64)>>,
}

impl McSampler {
    pub fn new(mc: &FiniteMc) -> Self {
        let rows = mc
            .rows
            .iter()
            .map(|r| {
                let mut acc = 0.0;
                r.iter()
                    .map(|(t, p)| {
                        acc += crate::rational::to_f64(p);
                        (*t, acc)
                    })
                    .collect()
            })
            .collect();
        Self { rows }
    }
}

impl Sts for McSampler {
    type State = usize;

    fn step(&self, s: &usize, rng: &mut ChaCha8Rng) -> Result<usize, SampleError> {
        let row = &self.rows[*s];
        let u = rng.random::<f64>() * row.last().map(|x| x.1).unwrap_or(1.0);
        Ok(row.iter().find(|(_, c)| u < *c).unwrap_or(row.last().unwrap()).0)
    }
}

type Generator<S> = Arc<dyn Fn(&S) -> Vec<(S, f64)> + Send + Sync>;

/// Countable chain given by a successor generator.
#[derive(Clone)]
pub struct LazyMc<S> {
    generator: Generator<S>,
}

impl<S> LazyMc<S> {
    pub fn new(f: impl Fn(&S) -> Vec<(S, f64)> + Send + Sync + 'static) -> Self {
        Self {
            generator: Arc::new(f),
        }
    }

    pub fn successors(&self, s: &S) -> Vec<(S, f64)> {
        (self.generator)(s)
    }
}

impl LazyMc<u64> {
    /// Walk on ℕ moving up with probability `p`; 0 steps to 1.
    pub fn random_walk(p: f64) -> Self {
        LazyMc::new(move |&s: &u64| {
            if s == 0 {
                vec![(1, 1.0)]
            } else {
                vec![(s + 1, p), (s - 1, 1.0 - p)]
            }
        })
    }
}

impl<S: Clone + Send + Sync> Sts for LazyMc<S> {
    type State = S;

    fn step(&self, s: &S, rng: &mut ChaCha8Rng) -> Result<S, SampleError> {
        let succ = self.successors(s);
        let total: f64 = succ.iter().map(|x| x.1).sum();
        let mut u = rng.random::<f64>() * total;
        for (t, p) in &succ {
            if u < *p {
                return Ok(t.clone());
            }
            u -= p;
        }
        Ok(succ.last().expect("generator returned no successor").0.clone())
    }
}

impl Sts for Sampler {
    type State = State;

    fn step(&self, s: &State, rng: &mut ChaCha8Rng) -> Result<State, SampleError> {
        Sampler::step(self, s, rng).map(|st| st.next)
    }
}

/// Independent stream for run `index` under a master seed.
pub fn run_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// Run prefix `s_0 … s_horizon`, deterministic in the seed.
pub fn simulate<T: Sts>(
    sts: &T,
    start: impl Fn(&mut ChaCha8Rng) -> Result<T::State, SampleError>,
    horizon: usize,
    seed: u64,
) -> Result<Vec<T::State>, SampleError> {
    let mut rng = run_rng(seed, 0);
    simulate_with(sts, &start, horizon, &mut rng)
}

fn simulate_with<T: Sts>(
    sts: &T,
    start: &impl Fn(&mut ChaCha8Rng) -> Result<T::State, SampleError>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<T::State>, SampleError> {
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(start(rng)?);
    for k in 0..horizon {
        let next = sts.step(out.last().unwrap(), rng).map_err(|e| SampleError::AtStep {
            step: k,
            source: Box::new(e),
        })?;
        out.push(next);
    }
    Ok(out)
}

/// Hoeffding half-width `√(ln(2/δ) / 2N)`.
pub fn hoeffding(samples: usize, delta: f64) -> f64 {
    if samples == 0 {
        return 1.0;
    }
    ((2.0 / delta).ln() / (2.0 * samples as f64)).sqrt()
}

/// Samples needed for a Hoeffding half-width of at most `h`.
pub fn hoeffding_samples(h: f64, delta: f64) -> usize {
    ((2.0 / delta).ln() / (2.0 * h * h)).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
    pub samples: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Unbounded operators were cut at the horizon.
    pub horizon_truncated: bool,
}

/// Estimates `P(F≤horizon target)` stopping each run at the first hit.
pub fn estimate_reach<T: Sts>(
    sts: &T,
    start: impl Fn(&mut ChaCha8Rng) -> Result<T::State, SampleError> + Sync,
    target: impl Fn(&T::State) -> bool + Sync,
    horizon: usize,
    runs: usize,
    seed: u64,
    delta: f64,
) -> Result<Estimate, SampleError> {
    let hits: usize = (0..runs)
        .into_par_iter()
        .map(|i| -> Result<usize, SampleError> {
            let mut rng = run_rng(seed, i as u64);
            let mut s = start(&mut rng)?;
            for _ in 0..=horizon {
                if target(&s) {
                    return Ok(1);
                }
                s = sts.step(&s, &mut rng)?;
            }
            Ok(0)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(Estimate {
        value: hits as f64 / runs as f64,
        half_width: hoeffding(runs, delta),
        samples: runs,
        horizon,
        seed,
        horizon_truncated: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bound {
    AtMost,
    AtLeast,
    Exactly,
}

/// Formulas over atomic state predicates identified by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ltl {
    Atom(usize),
    True,
    Not(Box<Ltl>),
    And(Box<Ltl>, Box<Ltl>),
    Or(Box<Ltl>, Box<Ltl>),
    Until {
        lhs: Box<Ltl>,
        rhs: Box<Ltl>,
        bound: Bound,
        k: usize,
    },
}

impl std::ops::Not for Ltl {
    type Output = Ltl;

    fn not(self) -> Ltl {
        Ltl::Not(Box::new(self))
    }
}

impl Ltl {
    pub fn atom(i: usize) -> Ltl {
        Ltl::Atom(i)
    }


    pub fn and(self, o: Ltl) -> Ltl {
        Ltl::And(Box::new(self), Box::new(o))
    }

    pub fn or(self, o: Ltl) -> Ltl {
        Ltl::Or(Box::new(self), Box::new(o))
    }

    pub fn until(self, bound: Bound, k: usize, o: Ltl) -> Ltl {
        Ltl::Until {
            lhs: Box::new(self),
            rhs: Box::new(o),
            bound,
            k,
        }
    }

    pub fn eventually_within(n: usize, phi: Ltl) -> Ltl {
        Ltl::True.until(Bound::AtMost, n, phi)
    }

    pub fn eventually(phi: Ltl) -> Ltl {
        Ltl::True.until(Bound::AtLeast, 0, phi)
    }

    pub fn globally(phi: Ltl) -> Ltl {
        !Ltl::eventually(!phi)
    }

    pub fn next(phi: Ltl) -> Ltl {
        Ltl::True.until(Bound::Exactly, 1, phi)
    }

    pub fn gf(phi: Ltl) -> Ltl {
        Ltl::globally(Ltl::eventually(phi))
    }

    /// Steps of lookahead needed by the bounded operators, and whether an
    /// unbounded operator occurs.
    pub fn step_bound(&self) -> (usize, bool) {
        match self {
            Ltl::Atom(_) | Ltl::True => (0, false),
            Ltl::Not(a) => a.step_bound(),
            Ltl::And(a, b) | Ltl::Or(a, b) => {
                let (x, u) = a.step_bound();
                let (y, v) = b.step_bound();
                (x.max(y), u || v)
            }
            Ltl::Until { lhs, rhs, bound, k } => {
                let (x, u) = lhs.step_bound();
                let (y, v) = rhs.step_bound();
                (k + x.max(y), u || v || *bound == Bound::AtLeast)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("horizon {horizon} is shorter than the formula's step bound {needed}")]
pub struct HorizonError {
    pub horizon: usize,
    pub needed: usize,
}

/// Evaluates `φ` on a finite prefix; positions past the end are absent, so
/// unbounded operators are cut at the horizon.
pub fn eval_event<S>(prefix: &[S], label: &dyn Fn(usize, &S) -> bool, phi: &Ltl) -> Result<bool, HorizonError> {
    let horizon = prefix.len().saturating_sub(1);
    let (needed, _) = phi.step_bound();
    if needed > horizon {
        return Err(HorizonError { horizon, needed });
    }
    Ok(eval_at(prefix, label, phi, 0))
}

fn eval_at<S>(prefix: &[S], label: &dyn Fn(usize, &S) -> bool, phi: &Ltl, i: usize) -> bool {
    match phi {
        Ltl::True => true,
        Ltl::Atom(a) => label(*a, &prefix[i]),
        Ltl::Not(a) => !eval_at(prefix, label, a, i),
        Ltl::And(a, b) => eval_at(prefix, label, a, i) && eval_at(prefix, label, b, i),
        Ltl::Or(a, b) => eval_at(prefix, label, a, i) || eval_at(prefix, label, b, i),
        Ltl::Until { lhs, rhs, bound, k } => {
            let last = prefix.len() - 1 - i;
            let (lo, hi) = match bound {
                Bound::AtMost => (0, (*k).min(last)),
                Bound::AtLeast => (*k, last),
                Bound::Exactly => (*k, *k),
            };
            if lo > last {
                return false;
            }
            for d in 0..=hi.min(last) {
                if d >= lo && eval_at(prefix, label, rhs, i + d) {
                    return true;
                }
                if !eval_at(prefix, label, lhs, i + d) {
                    return false;
                }
            }
            false
        }
    }
}

/// Frequency of `φ` over independent runs with a Hoeffding half-width.
#[allow(clippy::too_many_arguments)]
pub fn estimate_event<T: Sts>(
    sts: &T,
    start: impl Fn(&mut ChaCha8Rng) -> Result<T::State, SampleError> + Sync,
    label: &(dyn Fn(usize, &T::State) -> bool + Sync),
    phi: &Ltl,
    samples: usize,
    horizon: usize,
    seed: u64,
    delta: f64,
) -> Result<Estimate, EstimateError> {
    let (needed, unbounded) = phi.step_bound();
    if needed > horizon {
        return Err(EstimateError::Horizon(HorizonError { horizon, needed }));
    }
    let hits: usize = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<usize, SampleError> {
            let mut rng = run_rng(seed, i as u64);
            let prefix = simulate_with(sts, &start, horizon, &mut rng)?;
            Ok(usize::from(eval_at(&prefix, label, phi, 0)))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(Estimate {
        value: hits as f64 / samples as f64,
        half_width: hoeffding(samples, delta),
        samples,
        horizon,
        seed,
        horizon_truncated: unbounded,
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error(transparent)]
    Horizon(#[from] HorizonError),
    #[error(transparent)]
    Sample(#[from] SampleError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn set(v: &[usize]) -> StateSet {
        v.iter().copied().collect()
    }

    fn mc(rows: &[&[(i64, i64)]]) -> FiniteMc {
        FiniteMc::new(
            rows.iter()
                .map(|r| r.iter().map(|&(a, b)| ratio(a, b)).collect())
                .collect(),
        )
        .unwrap()
    }

    /// Truncated gambler's ruin on {0..=m}, absorbing ends, up with `p`.
    fn ruin(m: usize, p: Rat) -> FiniteMc {
        let q = Rat::one() - &p;
        let dense = (0..=m)
            .map(|s| {
                let mut row = vec![Rat::zero(); m + 1];
                if s == 0 || s == m {
                    row[s] = Rat::one();
                } else {
                    row[s + 1] = p.clone();
                    row[s - 1] = q.clone();
                }
                row
            })
            .collect();
        FiniteMc::new(dense).unwrap()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let e = FiniteMc::new(vec![vec![ratio(1, 2), ratio(1, 3)], vec![int(0), int(1)]]).unwrap_err();
        assert!(matches!(e, McError::RowSum { row: 0, .. }));
        let e = FiniteMc::new(vec![vec![int(2), int(-1)], vec![int(0), int(1)]]).unwrap_err();
        assert!(matches!(e, McError::Entry { .. }));
    }

    #[test]
    fn omega_examples() {
        let m = mc(&[&[(0, 1), (0, 1), (1, 1)], &[(0, 1), (0, 1), (1, 1)], &[(0, 1), (0, 1), (1, 1)]]);
        assert_eq!(m.omega(&DistVec::dirac(3, 2)), DistVec::dirac(3, 2));
        let mu = DistVec::uniform(3, &set(&[0, 1]));
        assert_eq!(m.omega(&mu), DistVec::dirac(3, 2));
    }

    #[test]
    fn pre_examples() {
        let m = mc(&[&[(1, 2), (1, 2), (0, 1)], &[(0, 1), (1, 1), (0, 1)], &[(0, 1), (0, 1), (1, 1)]]);
        assert_eq!(m.pre(&set(&[2])), set(&[2]));
        assert_eq!(m.pre(&set(&[1])), set(&[0, 1]));
    }

    #[test]
    fn cylinder_and_conditional_basics() {
        let m = mc(&[&[(1, 2), (1, 2)], &[(0, 1), (1, 1)]]);
        let mu = DistVec::uniform(2, &set(&[0, 1]));
        assert!(m.cyl_prob(&mu, &[m.all_states()]).is_one());
        assert_eq!(m.cyl_prob(&mu, &[set(&[0])]), ratio(1, 2));
        assert_eq!(m.conditional(&mu, &[set(&[0])]), Some(DistVec::dirac(2, 0)));
        assert_eq!(m.conditional(&DistVec::dirac(2, 1), &[set(&[1]), set(&[0])]), None);
    }

    #[test]
    fn gamblers_ruin_closed_form() {
        let m = ruin(5, ratio(7, 10));
        let x = m.reach_exact(&set(&[0]));
        let r = ratio(3, 7);
        let r5 = &r * &r * &r * &r * &r;
        let expected = (&r - &r5) / (Rat::one() - &r5);
        assert_eq!(x[1], expected);
        assert!(x[0].is_one());
        // defining equations hold exactly
        for s in 1..5 {
            let rhs: Rat = m.row(s).iter().map(|(t, p)| p * &x[*t]).sum();
            assert_eq!(x[s], rhs);
        }
    }

    #[test]
    fn btilde_examples() {
        let m = ruin(5, ratio(1, 2));
        assert_eq!(m.btilde(&set(&[0])), set(&[5]));
        let m = mc(&[&[(1, 2), (1, 2)], &[(1, 2), (1, 2)]]);
        assert!(m.btilde(&set(&[0])).is_empty());
    }

    #[test]
    fn attractors() {
        let m = ruin(4, ratio(1, 2));
        assert!(m.is_attractor(&m.all_states()));
        assert!(m.is_attractor(&set(&[0, 4])));
        assert!(!m.is_attractor(&set(&[2])));
    }

    #[test]
    fn gf_and_gnot_cases() {
        let m = ruin(4, ratio(1, 2));
        let mu = DistVec::dirac(5, 2);
        // A ⊆ B
        assert!(m.gf_and_gnot(&set(&[0]), &set(&[0]), &mu).is_zero());
        // the only B-avoiding BSCC is {4} and it contains A
        let v = m.gf_and_gnot(&set(&[4]), &set(&[0]), &mu);
        let reach = m.make_absorbing(&set(&[0])).reach_exact(&set(&[0]));
        assert_eq!(v, Rat::one() - &reach[2]);
    }

    #[test]
    fn criterion_on_random_walk_truncation() {
        let m = ruin(50, ratio(3, 10));
        let b = set(&[0]);
        let report = m.check_decisiveness_criterion(&b, &[]);
        let reach = m.reach_exact(&b);
        let bt = m.btilde(&b);
        let min = (0..51).filter(|s| !bt.contains(s)).map(|s| reach[s].clone()).min().unwrap();
        assert_eq!(report.candidates[0].p, crate::rational::fmt_rat(&min));
        assert!(report.decisive);
        assert!(report.reach_b_or_btilde.iter().all(|p| p == "1"));
    }

    #[test]
    fn criterion_p_one_when_everything_avoids() {
        // from 0 nothing reaches B = {1}; A ∖ B̃ = {1}
        let m = mc(&[&[(1, 1), (0, 1)], &[(0, 1), (1, 1)]]);
        let report = m.check_decisiveness_criterion(&set(&[1]), &[set(&[0])]);
        assert_eq!(report.btilde, vec![0]);
        assert_eq!(report.candidates[1].p, "1");
    }

    #[test]
    fn pyes_pno_zero_steps() {
        let m = ruin(3, ratio(1, 2));
        let mu = DistVec(vec![ratio(1, 4), ratio(1, 4), ratio(1, 4), ratio(1, 4)]);
        let b = set(&[0]);
        let bt = set(&[3]);
        assert_eq!(m.pyes_pno(&mu, &b, &bt, 0), (ratio(1, 4), ratio(1, 4)));
    }

    #[test]
    fn pyes_pno_walk_gap() {
        // up with 7/10 on {0..60}; B̃ = ∅ apart from the top absorbing state
        let m = ruin(60, ratio(7, 10));
        let b = set(&[0]);
        let mut t = Transient::new(&m, &DistVec::dirac(61, 1), &b, &StateSet::new());
        for _ in 0..400 {
            t.step();
        }
        assert!(t.p_yes() < ratio(3, 7));
        assert!(crate::rational::to_f64(&t.p_yes()) > 3.0 / 7.0 - 1e-3);
        assert!(t.p_no().is_zero());
    }

    #[test]
    fn dirac_reduction_brute_force() {
        let m = mc(&[&[(1, 3), (1, 3), (1, 3)], &[(1, 2), (0, 1), (1, 2)], &[(0, 1), (1, 4), (3, 4)]]);
        let blocks = vec![set(&[0, 1]), set(&[1, 2])];
        let b = set(&[2]);
        let bound = m.dirac_conditional_bound(&blocks, &b).unwrap();
        let reach = m.reach_exact(&b);
        for a in 0..=6i64 {
            for c in 0..=(6 - a) {
                let mu = DistVec(vec![ratio(a, 6), ratio(c, 6), ratio(6 - a - c, 6)]);
                if let Some(nu) = m.conditional(&mu, &blocks) {
                    let p: Rat = nu.0.iter().zip(&reach).map(|(x, r)| x * r).sum();
                    assert!(p >= bound);
                }
            }
        }
    }

    #[test]
    fn ltl_semantics() {
        let prefix = [0u64, 1, 2, 1, 0];
        let label = |a: usize, s: &u64| *s == a as u64;
        let zero = Ltl::atom(0);
        assert!(eval_event(&prefix, &label, &Ltl::eventually_within(0, zero.clone())).unwrap());
        assert!(!eval_event(&prefix[1..], &label, &Ltl::eventually_within(2, zero.clone())).unwrap());
        assert!(eval_event(&prefix[1..], &label, &Ltl::eventually_within(3, zero.clone())).unwrap());
        assert!(eval_event(&prefix, &label, &Ltl::next(Ltl::atom(1))).unwrap());
        assert!(eval_event(&prefix, &label, &Ltl::eventually_within(9, zero)).is_err());
        let not_two = !Ltl::atom(2);
        assert!(!eval_event(&prefix, &label, &Ltl::globally(not_two)).unwrap());
    }

    #[test]
    fn simulate_is_deterministic() {
        let walk = LazyMc::random_walk(0.5);
        let a = simulate(&walk, |_| Ok(1u64), 50, 9).unwrap();
        let b = simulate(&walk, |_| Ok(1u64), 50, 9).unwrap();
        assert_eq!(a, b);
        let det = McSampler::new(&mc(&[&[(0, 1), (1, 1)], &[(1, 1), (0, 1)]]));
        assert_eq!(simulate(&det, |_| Ok(0usize), 4, 1).unwrap(), vec![0, 1, 0, 1, 0]);
    }

    #[test]
    fn matrix_formats() {
        let j = FiniteMc::from_json(r#"{"kernel": [["1/2", "1/2"], ["0", "1"]]}"#).unwrap();
        let t = FiniteMc::from_tsv("1/2\t1/2\n0 1\n").unwrap();
        assert_eq!(j, t);
        assert!(FiniteMc::from_tsv("1 0\n").is_err());
    }
}
