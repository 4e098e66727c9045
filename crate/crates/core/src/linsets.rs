//! Semi-linear subsets of ℝⁿ with rational coefficients.
//!
//! A [`LinSet`] is a finite union of convex polyhedra, each a conjunction of
//! linear atoms `coeffs · x + constant ⋈ 0` with `⋈ ∈ {<, ≤, =}`. Everything
//! here is exact: projection is Fourier–Motzkin elimination per disjunct and
//! emptiness is decided by eliminating every variable and evaluating the
//! remaining ground atoms.

use crate::rational::{fmt_rat, serde_rat, to_f64, Rat};
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinSetError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("dimension index {index} out of range for dimension {dimension}")]
    DimensionOutOfRange { index: usize, dimension: usize },
    #[error("set has empty interior; uniform sampling is undefined")]
    NoInterior,
    #[error("set is unbounded or not contained in the sampling box")]
    NotInBox,
    #[error("bounding box has {got} intervals, expected {expected}")]
    BadBox { got: usize, expected: usize },
    #[error("rejection budget of {0} draws exhausted")]
    RejectionBudget(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rel {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
}

impl Rel {
    fn holds(self, lhs: &Rat) -> bool {
        match self {
            Rel::Lt => lhs.is_negative(),
            Rel::Le => !lhs.is_positive(),
            Rel::Eq => lhs.is_zero(),
        }
    }

    fn holds_f64(self, lhs: f64) -> bool {
        match self {
            Rel::Lt => lhs < 0.0,
            Rel::Le => lhs <= 0.0,
            Rel::Eq => lhs == 0.0,
        }
    }

    fn combine(self, other: Rel) -> Rel {
        if self == Rel::Lt || other == Rel::Lt {
            Rel::Lt
        } else {
            Rel::Le
        }
    }
}

/// `coeffs · x + constant ⋈ 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinAtom {
    #[serde(with = "serde_rat::vec")]
    pub coeffs: Vec<Rat>,
    #[serde(with = "serde_rat")]
    pub constant: Rat,
    pub rel: Rel,
}

enum Normal {
    True,
    False,
    Atom(LinAtom),
}

impl LinAtom {
    pub fn new(coeffs: Vec<Rat>, constant: Rat, rel: Rel) -> Self {
        Self {
            coeffs,
            constant,
            rel,
        }
    }

    /// `x_var ⋈ bound` in the given dimension, written as `x_var - bound ⋈ 0`.
    pub fn var_cmp(dim: usize, var: usize, rel: Rel, bound: Rat) -> Self {
        let mut coeffs = vec![Rat::zero(); dim];
        coeffs[var] = Rat::one();
        Self::new(coeffs, -bound, rel)
    }

    /// `bound ⋈ x_var`, i.e. `-x_var + bound ⋈ 0`.
    pub fn cmp_var(dim: usize, bound: Rat, rel: Rel, var: usize) -> Self {
        let mut coeffs = vec![Rat::zero(); dim];
        coeffs[var] = -Rat::one();
        Self::new(coeffs, bound, rel)
    }

    pub fn dimension(&self) -> usize {
        self.coeffs.len()
    }

    pub fn lhs(&self, x: &[Rat]) -> Rat {
        self.coeffs
            .iter()
            .zip(x)
            .fold(self.constant.clone(), |acc, (a, v)| acc + a * v)
    }

    pub fn holds(&self, x: &[Rat]) -> bool {
        self.rel.holds(&self.lhs(x))
    }

    pub fn is_ground(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    /// Disjunction of atoms equivalent to the negation.
    pub fn negation(&self) -> Vec<LinAtom> {
        let neg = || LinAtom::new(
            self.coeffs.iter().map(|c| -c).collect(),
            -self.constant.clone(),
            Rel::Lt,
        );
        match self.rel {
            Rel::Lt => {
                let mut a = neg();
                a.rel = Rel::Le;
                vec![a]
            }
            Rel::Le => vec![neg()],
            Rel::Eq => {
                let mut lt = self.clone();
                lt.rel = Rel::Lt;
                vec![lt, neg()]
            }
        }
    }

    fn scaled(&self, k: &Rat) -> LinAtom {
        LinAtom::new(
            self.coeffs.iter().map(|c| c * k).collect(),
            &self.constant * k,
            self.rel,
        )
    }

    fn normalize(&self) -> Normal {
        let Some(lead) = self.coeffs.iter().find(|c| !c.is_zero()) else {
            return if self.rel.holds(&self.constant) {
                Normal::True
            } else {
                Normal::False
            };
        };
        let k = if self.rel == Rel::Eq {
            Rat::one() / lead
        } else {
            Rat::one() / lead.abs()
        };
        Normal::Atom(self.scaled(&k))
    }

    fn strict(&self) -> Option<LinAtom> {
        match self.rel {
            Rel::Eq => None,
            _ => Some(LinAtom::new(self.coeffs.clone(), self.constant.clone(), Rel::Lt)),
        }
    }
}

/// An affine change of variables `x = M·y + m`: row `i` gives old coordinate
/// `x_i` as a linear form over the new coordinates `y`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub input_dim: usize,
    pub rows: Vec<(Vec<Rat>, Rat)>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        let rows = (0..dim)
            .map(|i| {
                let mut r = vec![Rat::zero(); dim];
                r[i] = Rat::one();
                (r, Rat::zero())
            })
            .collect();
        Self {
            input_dim: dim,
            rows,
        }
    }

    fn apply(&self, atom: &LinAtom) -> LinAtom {
        let mut coeffs = vec![Rat::zero(); self.input_dim];
        let mut constant = atom.constant.clone();
        for (a, (row, off)) in atom.coeffs.iter().zip(&self.rows) {
            if a.is_zero() {
                continue;
            }
            for (c, m) in coeffs.iter_mut().zip(row) {
                if !m.is_zero() {
                    *c += a * m;
                }
            }
            constant += a * off;
        }
        LinAtom::new(coeffs, constant, atom.rel)
    }
}

/// Conjunction of atoms; no atoms means the whole space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Polyhedron {
    pub dimension: usize,
    pub atoms: Vec<LinAtom>,
}

impl Polyhedron {
    pub fn full(dimension: usize) -> Self {
        Self {
            dimension,
            atoms: Vec::new(),
        }
    }

    pub fn new(dimension: usize, atoms: Vec<LinAtom>) -> Self {
        debug_assert!(atoms.iter().all(|a| a.dimension() == dimension));
        Self { dimension, atoms }
    }

    pub fn holds(&self, x: &[Rat]) -> bool {
        self.atoms.iter().all(|a| a.holds(x))
    }

    fn conjoin(&self, other: &Polyhedron) -> Polyhedron {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Polyhedron::new(self.dimension, atoms)
    }

    fn with_atom(&self, atom: LinAtom) -> Polyhedron {
        let mut atoms = self.atoms.clone();
        atoms.push(atom);
        Polyhedron::new(self.dimension, atoms)
    }

    /// Scales atoms, drops tautologies and duplicate directions (keeping the
    /// tightest bound) and detects trivial contradictions. `None` means empty.
    fn normalized(&self) -> Option<Polyhedron> {
        let mut kept: Vec<LinAtom> = Vec::with_capacity(self.atoms.len());
        let mut index: HashMap<(Vec<Rat>, bool), usize> = HashMap::new();
        for atom in &self.atoms {
            let a = match atom.normalize() {
                Normal::True => continue,
                Normal::False => return None,
                Normal::Atom(a) => a,
            };
            let key = (a.coeffs.clone(), a.rel == Rel::Eq);
            match index.get(&key) {
                Some(&i) => {
                    let prev = &mut kept[i];
                    if a.rel == Rel::Eq {
                        if prev.constant != a.constant {
                            return None;
                        }
                    } else if a.constant > prev.constant
                        || (a.constant == prev.constant && a.rel == Rel::Lt)
                    {
                        *prev = a;
                    }
                }
                None => {
                    index.insert(key, kept.len());
                    kept.push(a);
                }
            }
        }
        // opposite inequality directions: a·x + c1 ⋈ 0 and -a·x + c2 ⋈ 0
        for a in kept.iter().filter(|a| a.rel != Rel::Eq) {
            let neg: Vec<Rat> = a.coeffs.iter().map(|c| -c).collect();
            if let Some(&j) = index.get(&(neg, false)) {
                let b = &kept[j];
                let sum = &a.constant + &b.constant;
                if sum.is_positive() || (sum.is_zero() && (a.rel == Rel::Lt || b.rel == Rel::Lt)) {
                    return None;
                }
            }
        }
        Some(Polyhedron::new(self.dimension, kept))
    }

    /// Eliminates variable `k` (its coefficient becomes zero everywhere).
    /// Returns `None` when the result is detected empty.
    fn eliminate(&self, k: usize) -> Option<Polyhedron> {
        if let Some(pos) = self
            .atoms
            .iter()
            .position(|a| a.rel == Rel::Eq && !a.coeffs[k].is_zero())
        {
            let eq = &self.atoms[pos];
            let mut atoms = Vec::with_capacity(self.atoms.len());
            for (i, b) in self.atoms.iter().enumerate() {
                if i == pos {
                    continue;
                }
                if b.coeffs[k].is_zero() {
                    atoms.push(b.clone());
                    continue;
                }
                let f = &b.coeffs[k] / &eq.coeffs[k];
                let coeffs = b
                    .coeffs
                    .iter()
                    .zip(&eq.coeffs)
                    .map(|(x, y)| x - &f * y)
                    .collect();
                atoms.push(LinAtom::new(coeffs, &b.constant - &f * &eq.constant, b.rel));
            }
            return Polyhedron::new(self.dimension, atoms).normalized();
        }
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        let mut atoms = Vec::new();
        for a in &self.atoms {
            if a.coeffs[k].is_positive() {
                upper.push(a);
            } else if a.coeffs[k].is_negative() {
                lower.push(a);
            } else {
                atoms.push(a.clone());
            }
        }
        for u in &upper {
            for l in &lower {
                let mu = -&l.coeffs[k];
                let ml = u.coeffs[k].clone();
                let coeffs = u
                    .coeffs
                    .iter()
                    .zip(&l.coeffs)
                    .map(|(x, y)| x * &mu + y * &ml)
                    .collect();
                let constant = &u.constant * &mu + &l.constant * &ml;
                atoms.push(LinAtom::new(coeffs, constant, u.rel.combine(l.rel)));
            }
        }
        Polyhedron::new(self.dimension, atoms).normalized()
    }

    fn pick_variable(&self) -> Option<usize> {
        let mut best: Option<(usize, i64)> = None;
        for k in 0..self.dimension {
            let (mut pos, mut neg, mut eq) = (0i64, 0i64, false);
            for a in &self.atoms {
                if a.coeffs[k].is_zero() {
                    continue;
                }
                if a.rel == Rel::Eq {
                    eq = true;
                } else if a.coeffs[k].is_positive() {
                    pos += 1;
                } else {
                    neg += 1;
                }
            }
            if !eq && pos + neg == 0 {
                continue;
            }
            let cost = if eq { -1 } else { pos * neg - pos - neg };
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((k, cost));
            }
        }
        best.map(|(k, _)| k)
    }

    pub fn is_empty(&self) -> bool {
        let Some(mut p) = self.normalized() else {
            return true;
        };
        while let Some(k) = p.pick_variable() {
            match p.eliminate(k) {
                Some(q) => p = q,
                None => return true,
            }
        }
        // all remaining atoms are ground and true after normalization
        false
    }

    /// Existentially quantifies the listed coordinates and removes them.
    pub fn project_out(&self, drop: &[usize]) -> Option<Polyhedron> {
        let mut p = self.normalized()?;
        for &k in drop {
            p = p.eliminate(k)?;
        }
        let keep: Vec<usize> = (0..self.dimension).filter(|i| !drop.contains(i)).collect();
        let atoms = p
            .atoms
            .into_iter()
            .map(|a| {
                let coeffs = keep.iter().map(|&i| a.coeffs[i].clone()).collect();
                LinAtom::new(coeffs, a.constant, a.rel)
            })
            .collect();
        Polyhedron::new(keep.len(), atoms).normalized()
    }

    /// Nonempty interior in the ambient dimension.
    pub fn has_interior(&self) -> bool {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            if a.is_ground() {
                if !a.holds(&vec![Rat::zero(); self.dimension]) {
                    return false;
                }
                continue;
            }
            match a.strict() {
                Some(s) => atoms.push(s),
                None => return false,
            }
        }
        !Polyhedron::new(self.dimension, atoms).is_empty()
    }

    /// Equalities implied by the polyhedron (explicit ones and tight
    /// non-strict inequalities). Assumes the polyhedron is nonempty.
    fn implicit_equalities(&self) -> Vec<LinAtom> {
        let mut eqs = Vec::new();
        for a in &self.atoms {
            match a.rel {
                Rel::Eq => eqs.push(a.clone()),
                Rel::Le => {
                    let mut s = a.clone();
                    s.rel = Rel::Lt;
                    if self.with_atom(s).is_empty() {
                        let mut e = a.clone();
                        e.rel = Rel::Eq;
                        eqs.push(e);
                    }
                }
                Rel::Lt => {}
            }
        }
        eqs
    }

    /// `Some(None)` when empty, `Some(Some(p))` when a single point, `None`
    /// when infinite.
    fn single_point(&self) -> Option<Option<Vec<Rat>>> {
        if self.is_empty() {
            return Some(None);
        }
        let eqs = self.implicit_equalities();
        let point = solve_unique(self.dimension, &eqs)?;
        if self.holds(&point) {
            Some(Some(point))
        } else {
            Some(None)
        }
    }

    /// Removes atoms implied by the others.
    fn without_redundant(&self) -> Polyhedron {
        let mut atoms = self.atoms.clone();
        let mut i = 0;
        while i < atoms.len() {
            let rest: Vec<LinAtom> = atoms
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, a)| a.clone())
                .collect();
            let rest_poly = Polyhedron::new(self.dimension, rest.clone());
            let implied = atoms[i]
                .negation()
                .into_iter()
                .all(|n| rest_poly.with_atom(n).is_empty());
            if implied {
                atoms = rest;
            } else {
                i += 1;
            }
        }
        Polyhedron::new(self.dimension, atoms)
    }

    fn tighten_coordinate(&self, k: usize) -> Option<Polyhedron> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            if a.coeffs[k].is_zero() {
                atoms.push(a.clone());
            } else {
                atoms.push(a.strict()?);
            }
        }
        Some(Polyhedron::new(self.dimension, atoms))
    }
}

/// Unique solution of a system of equalities, if the system has full rank.
fn solve_unique(dim: usize, eqs: &[LinAtom]) -> Option<Vec<Rat>> {
    // rows: coeffs | -constant
    let mut rows: Vec<Vec<Rat>> = eqs
        .iter()
        .map(|e| {
            let mut r = e.coeffs.clone();
            r.push(-e.constant.clone());
            r
        })
        .collect();
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for c in 0..dim {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = Rat::one() / &rows[r][c];
        for v in rows[r].iter_mut() {
            *v *= &inv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c].clone();
                let pivot_row = rows[r].clone();
                for (v, pv) in rows[i].iter_mut().zip(&pivot_row) {
                    *v -= &f * pv;
                }
            }
        }
        pivot_cols.push(c);
        r += 1;
    }
    if pivot_cols.len() < dim {
        return None;
    }
    Some((0..dim).map(|i| rows[i][dim].clone()).collect())
}

/// A finite union of polyhedra; no disjuncts means the empty set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinSet {
    pub dimension: usize,
    pub disjuncts: Vec<Polyhedron>,
}

impl LinSet {
    pub fn full(dimension: usize) -> Self {
        Self {
            dimension,
            disjuncts: vec![Polyhedron::full(dimension)],
        }
    }

    pub fn empty(dimension: usize) -> Self {
        Self {
            dimension,
            disjuncts: Vec::new(),
        }
    }

    pub fn from_atoms(dimension: usize, atoms: Vec<LinAtom>) -> Self {
        Self {
            dimension,
            disjuncts: vec![Polyhedron::new(dimension, atoms)],
        }
    }

    pub fn from_polyhedra(dimension: usize, disjuncts: Vec<Polyhedron>) -> Self {
        Self {
            dimension,
            disjuncts,
        }
    }

    /// Closed axis-aligned box.
    pub fn from_box(bounds: &[(Rat, Rat)]) -> Self {
        let dim = bounds.len();
        let mut atoms = Vec::with_capacity(2 * dim);
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            atoms.push(LinAtom::cmp_var(dim, lo.clone(), Rel::Le, i));
            atoms.push(LinAtom::var_cmp(dim, i, Rel::Le, hi.clone()));
        }
        Self::from_atoms(dim, atoms)
    }

    pub fn contains(&self, x: &[Rat]) -> bool {
        self.disjuncts.iter().any(|p| p.holds(x))
    }

    /// Float membership; used only by simulation, never by symbolic analyses.
    pub fn contains_f64(&self, x: &[f64]) -> bool {
        self.disjuncts.iter().any(|p| {
            p.atoms.iter().all(|a| {
                let lhs = a
                    .coeffs
                    .iter()
                    .zip(x)
                    .fold(to_f64(&a.constant), |acc, (c, v)| acc + to_f64(c) * v);
                a.rel.holds_f64(lhs)
            })
        })
    }

    pub fn compile_f64(&self) -> FloatSet {
        FloatSet {
            disjuncts: self
                .disjuncts
                .iter()
                .map(|p| {
                    p.atoms
                        .iter()
                        .map(|a| FloatAtom {
                            coeffs: a.coeffs.iter().map(to_f64).collect(),
                            constant: to_f64(&a.constant),
                            rel: a.rel,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    fn check_dim(&self, other: &LinSet) -> Result<(), LinSetError> {
        if self.dimension != other.dimension {
            return Err(LinSetError::DimensionMismatch {
                left: self.dimension,
                right: other.dimension,
            });
        }
        Ok(())
    }

    pub fn intersect(&self, other: &LinSet) -> Result<LinSet, LinSetError> {
        self.check_dim(other)?;
        Ok(self.meet(other))
    }

    pub fn union(&self, other: &LinSet) -> Result<LinSet, LinSetError> {
        self.check_dim(other)?;
        Ok(self.join(other))
    }

    pub fn difference(&self, other: &LinSet) -> Result<LinSet, LinSetError> {
        self.check_dim(other)?;
        Ok(self.minus(other))
    }

    /// Intersection of sets known to share a dimension.
    ///
    /// # Panics
    /// On dimension mismatch.
    pub fn meet(&self, other: &LinSet) -> LinSet {
        assert_eq!(self.dimension, other.dimension, "dimension mismatch");
        let mut out = Vec::new();
        for a in &self.disjuncts {
            for b in &other.disjuncts {
                if let Some(p) = a.conjoin(b).normalized() {
                    if !p.is_empty() {
                        out.push(p);
                    }
                }
            }
        }
        LinSet::from_polyhedra(self.dimension, out)
    }

    /// Union of sets known to share a dimension (disjunct concatenation).
    ///
    /// # Panics
    /// On dimension mismatch.
    pub fn join(&self, other: &LinSet) -> LinSet {
        assert_eq!(self.dimension, other.dimension, "dimension mismatch");
        let mut disjuncts = self.disjuncts.clone();
        disjuncts.extend(other.disjuncts.iter().cloned());
        LinSet::from_polyhedra(self.dimension, disjuncts)
    }

    /// Set difference, splitting each disjunct into disjoint pieces.
    ///
    /// # Panics
    /// On dimension mismatch.
    pub fn minus(&self, other: &LinSet) -> LinSet {
        assert_eq!(self.dimension, other.dimension, "dimension mismatch");
        let mut pieces: Vec<Polyhedron> = self
            .disjuncts
            .iter()
            .filter_map(|p| p.normalized())
            .filter(|p| !p.is_empty())
            .collect();
        for q in &other.disjuncts {
            let mut next = Vec::new();
            for piece in pieces {
                if piece.conjoin(q).is_empty() {
                    next.push(piece);
                    continue;
                }
                // piece ∖ q = ⋃_i piece ∧ q_1 ∧ … ∧ q_{i-1} ∧ ¬q_i
                let mut prefix = piece.clone();
                for atom in &q.atoms {
                    for neg in atom.negation() {
                        if let Some(p) = prefix.with_atom(neg).normalized() {
                            if !p.is_empty() {
                                next.push(p);
                            }
                        }
                    }
                    prefix = prefix.with_atom(atom.clone());
                }
            }
            pieces = next;
        }
        LinSet::from_polyhedra(self.dimension, pieces)
    }

    pub fn complement(&self) -> LinSet {
        LinSet::full(self.dimension).minus(self)
    }

    /// Existential projection: drops the listed coordinates.
    pub fn project(&self, drop_dims: &[usize]) -> Result<LinSet, LinSetError> {
        for &d in drop_dims {
            if d >= self.dimension {
                return Err(LinSetError::DimensionOutOfRange {
                    index: d,
                    dimension: self.dimension,
                });
            }
        }
        let mut drop = drop_dims.to_vec();
        drop.sort_unstable();
        drop.dedup();
        let new_dim = self.dimension - drop.len();
        let disjuncts = self
            .disjuncts
            .iter()
            .filter_map(|p| p.project_out(&drop))
            .filter(|p| !p.is_empty())
            .collect();
        Ok(LinSet::from_polyhedra(new_dim, disjuncts))
    }

    pub fn is_empty(&self) -> bool {
        self.disjuncts.iter().all(Polyhedron::is_empty)
    }

    pub fn has_interior(&self) -> bool {
        self.disjuncts.iter().any(Polyhedron::has_interior)
    }

    pub fn is_subset(&self, other: &LinSet) -> bool {
        self.minus(other).is_empty()
    }

    /// Semantic equality via mutual inclusion.
    pub fn set_eq(&self, other: &LinSet) -> bool {
        self.dimension == other.dimension && self.is_subset(other) && other.is_subset(self)
    }

    /// The points of a finite set, or `None` when some disjunct is infinite.
    pub fn finite_points(&self) -> Option<Vec<Vec<Rat>>> {
        let mut points: Vec<Vec<Rat>> = Vec::new();
        for p in &self.disjuncts {
            if let Some(pt) = p.single_point()? {
                if !points.contains(&pt) {
                    points.push(pt);
                }
            }
        }
        Some(points)
    }

    /// Substitutes `x = M·y + m`, giving the preimage of the set.
    pub fn preimage(&self, map: &AffineMap) -> LinSet {
        assert_eq!(map.rows.len(), self.dimension, "affine map arity");
        let disjuncts = self
            .disjuncts
            .iter()
            .filter_map(|p| {
                Polyhedron::new(map.input_dim, p.atoms.iter().map(|a| map.apply(a)).collect())
                    .normalized()
            })
            .collect();
        LinSet::from_polyhedra(map.input_dim, disjuncts)
    }

    /// Adds `extra` trailing coordinates that no atom constrains.
    pub fn extend(&self, extra: usize) -> LinSet {
        let dim = self.dimension + extra;
        let disjuncts = self
            .disjuncts
            .iter()
            .map(|p| {
                let atoms = p
                    .atoms
                    .iter()
                    .map(|a| {
                        let mut c = a.coeffs.clone();
                        c.resize(dim, Rat::zero());
                        LinAtom::new(c, a.constant.clone(), a.rel)
                    })
                    .collect();
                Polyhedron::new(dim, atoms)
            })
            .collect();
        LinSet::from_polyhedra(dim, disjuncts)
    }

    /// Makes every atom that mentions coordinate `k` strict; disjuncts with an
    /// equality on `k` disappear. For fixed other coordinates, the slice along
    /// `k` of the result is the interior of the original slice.
    pub fn tighten_coordinate(&self, k: usize) -> LinSet {
        let disjuncts = self
            .disjuncts
            .iter()
            .filter_map(|p| p.tighten_coordinate(k))
            .collect();
        LinSet::from_polyhedra(self.dimension, disjuncts)
    }

    /// Drops empty disjuncts, redundant atoms and disjuncts covered by another.
    pub fn simplify(&self) -> LinSet {
        let mut parts: Vec<Polyhedron> = self
            .disjuncts
            .iter()
            .filter_map(|p| p.normalized())
            .filter(|p| !p.is_empty())
            .map(|p| p.without_redundant())
            .collect();
        let mut i = 0;
        while i < parts.len() {
            let covered = (0..parts.len()).any(|j| {
                j != i
                    && LinSet::from_polyhedra(self.dimension, vec![parts[i].clone()])
                        .is_subset(&LinSet::from_polyhedra(self.dimension, vec![parts[j].clone()]))
                    && (j < i || parts[i] != parts[j])
            });
            if covered {
                parts.remove(i);
            } else {
                i += 1;
            }
        }
        LinSet::from_polyhedra(self.dimension, parts)
    }

    /// Uniform sample over the set by rejection from the bounding box.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        bounding_box: &[(Rat, Rat)],
        rng: &mut R,
        max_draws: usize,
    ) -> Result<Vec<f64>, LinSetError> {
        if bounding_box.len() != self.dimension {
            return Err(LinSetError::BadBox {
                got: bounding_box.len(),
                expected: self.dimension,
            });
        }
        if !self.has_interior() {
            return Err(LinSetError::NoInterior);
        }
        if !self.is_subset(&LinSet::from_box(bounding_box)) {
            return Err(LinSetError::NotInBox);
        }
        let fbox: Vec<(f64, f64)> = bounding_box
            .iter()
            .map(|(a, b)| (to_f64(a), to_f64(b)))
            .collect();
        self.compile_f64().sample_in_box(&fbox, rng, max_draws)
    }

    pub fn fmt_with(&self, names: &[String]) -> String {
        if self.disjuncts.is_empty() {
            return "false".into();
        }
        self.disjuncts
            .iter()
            .map(|p| fmt_polyhedron(p, names))
            .collect::<Vec<_>>()
            .join(" || ")
    }
}

fn fmt_polyhedron(p: &Polyhedron, names: &[String]) -> String {
    if p.atoms.is_empty() {
        return "true".into();
    }
    p.atoms
        .iter()
        .map(|a| fmt_atom(a, names))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Renders `coeffs · x + c ⋈ 0` as `lhs ⋈ rhs` with the constant moved right;
/// inequalities whose leading coefficient is negative are flipped to `>`/`>=`.
pub fn fmt_atom(a: &LinAtom, names: &[String]) -> String {
    let flip = a.rel != Rel::Eq
        && a.coeffs
            .iter()
            .find(|c| !c.is_zero())
            .is_some_and(|c| c.is_negative());
    let sign = if flip { -Rat::one() } else { Rat::one() };
    let mut lhs = String::new();
    for (i, c) in a.coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let c = c * &sign;
        let name = names.get(i).cloned().unwrap_or_else(|| format!("x{i}"));
        let mag = c.abs();
        if lhs.is_empty() {
            if c.is_negative() {
                lhs.push('-');
            }
        } else {
            lhs.push_str(if c.is_negative() { " - " } else { " + " });
        }
        if mag.is_one() {
            lhs.push_str(&name);
        } else {
            let _ = write!(lhs, "{}*{}", fmt_rat(&mag), name);
        }
    }
    if lhs.is_empty() {
        lhs.push('0');
    }
    let op = match (a.rel, flip) {
        (Rel::Lt, false) => "<",
        (Rel::Le, false) => "<=",
        (Rel::Lt, true) => ">",
        (Rel::Le, true) => ">=",
        (Rel::Eq, _) => "=",
    };
    let rhs = -(&a.constant * &sign);
    format!("{lhs} {op} {}", fmt_rat(&rhs))
}

#[derive(Debug, Clone)]
struct FloatAtom {
    coeffs: Vec<f64>,
    constant: f64,
    rel: Rel,
}

/// Float image of a [`LinSet`] for fast membership tests during simulation.
#[derive(Debug, Clone)]
pub struct FloatSet {
    disjuncts: Vec<Vec<FloatAtom>>,
}

impl FloatSet {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.disjuncts.iter().any(|atoms| {
            atoms.iter().all(|a| {
                let lhs = a
                    .coeffs
                    .iter()
                    .zip(x)
                    .fold(a.constant, |acc, (c, v)| acc + c * v);
                a.rel.holds_f64(lhs)
            })
        })
    }

    /// Membership with every inequality relaxed by `slack`.
    pub fn contains_with_slack(&self, x: &[f64], slack: f64) -> bool {
        self.disjuncts.iter().any(|atoms| {
            atoms.iter().all(|a| {
                let lhs = a
                    .coeffs
                    .iter()
                    .zip(x)
                    .fold(a.constant, |acc, (c, v)| acc + c * v);
                match a.rel {
                    Rel::Eq => lhs.abs() <= slack,
                    _ => lhs <= slack,
                }
            })
        })
    }

    pub fn sample_in_box<R: Rng + ?Sized>(
        &self,
        fbox: &[(f64, f64)],
        rng: &mut R,
        max_draws: usize,
    ) -> Result<Vec<f64>, LinSetError> {
        let mut x = vec![0.0; fbox.len()];
        for _ in 0..max_draws {
            for (v, (lo, hi)) in x.iter_mut().zip(fbox) {
                *v = lo + rng.random::<f64>() * (hi - lo);
            }
            if self.contains(&x) {
                return Ok(x);
            }
        }
        Err(LinSetError::RejectionBudget(max_draws))
    }
}
