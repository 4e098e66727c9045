//! Generators and independent oracles shared by the property suites and the
//! acceptance target.
#![allow(dead_code)]

use decisive::linsets::{LinAtom, LinSet, Polyhedron, Rel};
use decisive::rational::{int, ratio, Rat};
use decisive::sts::{DistVec, FiniteMc, StateSet};
use num_traits::{Signed, Zero};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Draws one value from a strategy with a deterministic runner.
pub fn draw<S: Strategy>(s: &S, runner: &mut TestRunner) -> S::Value {
    s.new_tree(runner).expect("strategy produces a value").current()
}

fn rel() -> impl Strategy<Value = Rel> {
    prop_oneof![4 => Just(Rel::Lt), 4 => Just(Rel::Le), 1 => Just(Rel::Eq)]
}

pub fn atom(dim: usize) -> impl Strategy<Value = LinAtom> {
    (prop::collection::vec(-3i64..=3, dim), -12i64..=12, 1i64..=2, rel())
        .prop_map(|(c, k, d, rel)| LinAtom::new(c.into_iter().map(int).collect(), ratio(k, d), rel))
}

pub fn polyhedron(dim: usize) -> impl Strategy<Value = Polyhedron> {
    prop::collection::vec(atom(dim), 1..=3).prop_map(move |atoms| Polyhedron::new(dim, atoms))
}

pub fn linset(dim: usize) -> impl Strategy<Value = LinSet> {
    prop::collection::vec(polyhedron(dim), 0..=3).prop_map(move |ps| LinSet::from_polyhedra(dim, ps))
}

/// Two sets of the same dimension, `1 ≤ dim ≤ 3`.
pub fn linset_pair() -> impl Strategy<Value = (LinSet, LinSet)> {
    (1usize..=3).prop_flat_map(|d| (linset(d), linset(d)))
}

pub fn any_linset() -> impl Strategy<Value = LinSet> {
    (1usize..=3).prop_flat_map(linset)
}

/// Sets whose every disjunct pins a nonzero linear form with an equality.
pub fn equality_set() -> impl Strategy<Value = LinSet> {
    (1usize..=3).prop_flat_map(|dim| {
        let pinned = (prop::collection::vec(-3i64..=3, dim), 1i64..=3, -6i64..=6)
            .prop_map(move |(mut c, lead, k)| {
                c[0] = lead;
                LinAtom::new(c.into_iter().map(int).collect(), ratio(k, 2), Rel::Eq)
            });
        let disjunct = (pinned, prop::collection::vec(atom(dim), 0..=2)).prop_map(move |(e, mut rest)| {
            rest.push(e);
            Polyhedron::new(dim, rest)
        });
        prop::collection::vec(disjunct, 1..=3).prop_map(move |ps| LinSet::from_polyhedra(dim, ps))
    })
}

/// Grid points `k/4` in `[-8, 8]^dim`.
pub fn grid_points(dim: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Rat>> {
    (0..count)
        .map(|_| (0..dim).map(|_| ratio(rng.random_range(-32i64..=32), 4)).collect())
        .collect()
}

/// Pointwise Boolean laws for intersection, union, difference and complement.
pub fn boolean_laws(s: &LinSet, t: &LinSet, probes: usize, seed: u64) -> Result<(), String> {
    let meet = s.meet(t);
    let join = s.join(t);
    let minus = s.minus(t);
    let comp = s.complement();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in grid_points(s.dimension, probes, &mut rng) {
        let (a, b) = (s.contains(&p), t.contains(&p));
        let got = (meet.contains(&p), join.contains(&p), minus.contains(&p), comp.contains(&p));
        if got != (a && b, a || b, a && !b, !a) {
            return Err(format!("at {p:?}: S={a} T={b}, got (∩,∪,∖,ᶜ)={got:?}"));
        }
    }
    Ok(())
}

/// Whether some `t` extends `y` to a point of `p` at coordinate `k`, by
/// collecting the interval of admissible `t` directly.
pub fn extends(p: &Polyhedron, y: &[Rat], k: usize) -> bool {
    let mut lo: Option<(Rat, bool)> = None;
    let mut hi: Option<(Rat, bool)> = None;
    let mut pinned: Vec<Rat> = Vec::new();
    for a in &p.atoms {
        let mut rest = a.constant.clone();
        let mut j = 0;
        for (i, c) in a.coeffs.iter().enumerate() {
            if i == k {
                continue;
            }
            rest += c * &y[j];
            j += 1;
        }
        let ak = &a.coeffs[k];
        if ak.is_zero() {
            let ok = match a.rel {
                Rel::Lt => rest.is_negative(),
                Rel::Le => !rest.is_positive(),
                Rel::Eq => rest.is_zero(),
            };
            if !ok {
                return false;
            }
            continue;
        }
        let bound = -rest / ak;
        let strict = a.rel == Rel::Lt;
        match (a.rel, ak.is_positive()) {
            (Rel::Eq, _) => pinned.push(bound),
            (_, true) => {
                if hi.as_ref().is_none_or(|(h, hs)| bound < *h || (bound == *h && strict && !hs)) {
                    hi = Some((bound, strict));
                }
            }
            (_, false) => {
                if lo.as_ref().is_none_or(|(l, ls)| bound > *l || (bound == *l && strict && !ls)) {
                    lo = Some((bound, strict));
                }
            }
        }
    }
    let fits = |t: &Rat| {
        lo.as_ref().is_none_or(|(l, s)| if *s { t > l } else { t >= l })
            && hi.as_ref().is_none_or(|(h, s)| if *s { t < h } else { t <= h })
    };
    if let Some(first) = pinned.first() {
        return pinned.iter().all(|v| v == first) && fits(first);
    }
    match (&lo, &hi) {
        (Some((l, ls)), Some((h, hs))) => l < h || (l == h && !ls && !hs),
        _ => true,
    }
}

/// Compares `project(s, [k])` with the extension oracle on grid probes.
pub fn projection_agrees(s: &LinSet, k: usize, probes: usize, seed: u64) -> Result<(), String> {
    let proj = s.project(&[k]).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for y in grid_points(s.dimension - 1, probes, &mut rng) {
        let oracle = s.disjuncts.iter().any(|p| extends(p, &y, k));
        if proj.contains(&y) != oracle {
            return Err(format!("dropping x{k} at {y:?}: projection says {}, oracle {oracle}", !oracle));
        }
    }
    Ok(())
}

/// Looks for a cube of half-width `2^-10` inside one disjunct. Coefficients
/// are small and probe coordinates dyadic, so float evaluation is exact.
pub fn ball_probe(s: &LinSet, probes: usize, seed: u64) -> Option<Vec<f64>> {
    let eps = 2f64.powi(-10);
    let dim = s.dimension;
    let parts: Vec<_> = s
        .disjuncts
        .iter()
        .map(|p| LinSet::from_polyhedra(dim, vec![p.clone()]).compile_f64())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..probes {
        let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-512i32..=512) as f64 / 64.0).collect();
        let inside = parts.iter().any(|f| {
            (0..1usize << dim).all(|mask| {
                let corner: Vec<f64> = (0..dim)
                    .map(|i| if mask >> i & 1 == 1 { c[i] + eps } else { c[i] - eps })
                    .collect();
                f.contains(&corner)
            })
        });
        if inside {
            return Some(c);
        }
    }
    None
}

/// A random finite chain with a start distribution and a few state sets.
#[derive(Debug, Clone)]
pub struct ChainCase {
    pub mc: FiniteMc,
    pub mu: DistVec,
    pub a: StateSet,
    pub b: StateSet,
    pub blocks: Vec<StateSet>,
}

fn subset(n: usize) -> impl Strategy<Value = StateSet> {
    prop::collection::vec(any::<bool>(), n).prop_map(|bits| (0..bits.len()).filter(|&i| bits[i]).collect())
}

fn nonempty_subset(n: usize) -> impl Strategy<Value = StateSet> {
    (subset(n), 0..n).prop_map(|(mut s, i)| {
        s.insert(i);
        s
    })
}

pub fn chain_case() -> impl Strategy<Value = ChainCase> {
    (2usize..=8).prop_flat_map(|n| {
        let weight = prop_oneof![2 => Just(0u32), 3 => 1u32..=4];
        (
            prop::collection::vec(prop::collection::vec(weight, n), n),
            prop::collection::vec(0u32..=3, n),
            subset(n),
            subset(n),
            prop::collection::vec(nonempty_subset(n), 1..=4),
        )
            .prop_map(move |(w, mw, a, b, blocks)| {
                let rows = w
                    .into_iter()
                    .enumerate()
                    .map(|(i, mut r)| {
                        if r.iter().all(|&x| x == 0) {
                            r[i] = 1;
                        }
                        let total: u32 = r.iter().sum();
                        r.into_iter().map(|x| ratio(x as i64, total as i64)).collect()
                    })
                    .collect();
                let mut mw = mw;
                if mw.iter().all(|&x| x == 0) {
                    mw[0] = 1;
                }
                let total: u32 = mw.iter().sum();
                ChainCase {
                    mc: FiniteMc::new(rows).expect("rows are stochastic"),
                    mu: DistVec(mw.into_iter().map(|x| ratio(x as i64, total as i64)).collect()),
                    a,
                    b,
                    blocks,
                }
            })
    })
}

/// `P_μ(F B)` from the exact per-state vector.
pub fn reach_from(c: &ChainCase, b: &StateSet) -> Rat {
    let x = c.mc.reach_exact(b);
    c.mu.0.iter().zip(&x).map(|(m, v)| m * v).sum()
}

/// Cylinder split, conditional law and the Ω identity, with exact equality.
pub fn lemma_identities(c: &ChainCase) -> Result<(), String> {
    let all = c.mc.all_states();
    let seq = &c.blocks;
    let whole = c.mc.cyl_prob(&c.mu, seq);
    for j in 0..seq.len() {
        match c.mc.conditional(&c.mu, &seq[..=j]) {
            Some(mu_j) => {
                let split = c.mc.cyl_prob(&c.mu, &seq[..=j]) * c.mc.cyl_prob(&mu_j, &seq[j..]);
                if split != whole {
                    return Err(format!("split at {j}: {split} vs {whole}"));
                }
                if mu_j.total() != int(1) {
                    return Err(format!("conditional at {j} has mass {}", mu_j.total()));
                }
            }
            None => {
                if !c.mc.cyl_prob(&c.mu, &seq[..=j]).is_zero() || !whole.is_zero() {
                    return Err(format!("undefined conditional at {j} on a positive cylinder"));
                }
            }
        }
    }
    let a0 = &seq[0];
    if let Some(cond) = c.mc.conditional(&c.mu, std::slice::from_ref(a0)) {
        let lhs = cond.mass(&c.b) * c.mu.mass(a0);
        let rhs = c.mu.mass(&a0.intersection(&c.b).copied().collect());
        if lhs != rhs {
            return Err(format!("conditional law: {lhs} vs {rhs}"));
        }
    }
    let omega = c.mc.omega(&c.mu).mass(a0);
    let cyl = c.mc.cyl_prob(&c.mu, &[all, a0.clone()]);
    if omega != cyl {
        return Err(format!("Ω identity: {omega} vs {cyl}"));
    }
    Ok(())
}

/// When every state of `A` reaches `B` with positive probability,
/// `P(G¬B ∧ GF A)` must vanish. Returns whether the hypothesis held.
pub fn gf_zero_under_hypothesis(c: &ChainCase, a: &StateSet) -> Result<bool, String> {
    let x = c.mc.reach_exact(&c.b);
    if !a.iter().all(|&s| x[s].is_positive()) {
        return Ok(false);
    }
    let v = c.mc.gf_and_gnot(a, &c.b, &c.mu);
    if v.is_zero() {
        Ok(true)
    } else {
        Err(format!("hypothesis holds but P(G¬B ∧ GF A) = {v}"))
    }
}

/// States of `A` that reach `B`; always satisfies the hypothesis.
pub fn hypothesis_part(c: &ChainCase) -> StateSet {
    let back = c.mc.backward_reachable(&c.b);
    c.a.intersection(&back).copied().collect()
}
