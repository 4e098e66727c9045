//! Finite abstractions of SHSs by partition refinement.
//!
//! Blocks pair a location with a region; a partition covers `ℝⁿ` at every
//! location. `Pre` of a block is the set of states that reach it with positive
//! probability in one mixed transition. Refinement splits blocks until every
//! block lies entirely inside or entirely outside every `Pre` set.

use crate::linsets::{AffineMap, LinSet};
use crate::rational::Rat;
use crate::shs::{Block, InitShape, ResetSpec, Shs, State, StrongKind};
use crate::sts::FiniteMc;
use serde::Serialize;
use std::collections::{BTreeSet, HashMap, HashSet};

pub const DEFAULT_STEP_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PartitionError {
    #[error("blocks {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("blocks at location `{0}` do not cover every valuation")]
    NotCovering(String),
    #[error("block {0} is empty")]
    EmptyBlock(usize),
    #[error("block {0} refers to a missing location")]
    Location(usize),
    #[error("block {0} is not contained in a single block of the coarser partition")]
    NotRefining(usize),
}

impl Partition {
    pub fn at(&self, loc: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.blocks.len()).filter(move |&i| self.blocks[i].location == loc)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Disjointness and coverage at every location.
    pub fn check(&self, m: &Shs) -> Result<(), PartitionError> {
        for (i, b) in self.blocks.iter().enumerate() {
            if b.location >= m.locations.len() {
                return Err(PartitionError::Location(i));
            }
            if b.region.is_empty() {
                return Err(PartitionError::EmptyBlock(i));
            }
        }
        for loc in 0..m.locations.len() {
            let idx: Vec<usize> = self.at(loc).collect();
            for (k, &i) in idx.iter().enumerate() {
                for &j in &idx[k + 1..] {
                    if !self.blocks[i].region.meet(&self.blocks[j].region).is_empty() {
                        return Err(PartitionError::Overlap(i, j));
                    }
                }
            }
            let union = idx
                .iter()
                .fold(LinSet::empty(m.dim()), |acc, &i| acc.join(&self.blocks[i].region));
            if !union.complement().is_empty() {
                return Err(PartitionError::NotCovering(m.locations[loc].name.clone()));
            }
        }
        Ok(())
    }

    /// Index of the coarser block containing each block of `self`.
    pub fn parents_in(&self, coarse: &Partition) -> Result<Vec<usize>, PartitionError> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                coarse
                    .at(b.location)
                    .find(|&j| b.region.is_subset(&coarse.blocks[j].region))
                    .ok_or(PartitionError::NotRefining(i))
            })
            .collect()
    }

    /// Block containing an exact state.
    pub fn locate(&self, loc: usize, v: &[Rat]) -> Option<usize> {
        self.at(loc).find(|&i| self.blocks[i].region.contains(v))
    }

    pub fn describe(&self, m: &Shs) -> Vec<BlockInfo> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(id, b)| BlockInfo {
                id,
                location: m.locations[b.location].name.clone(),
                region: b.region.fmt_with(&m.vars),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockInfo {
    pub id: usize,
    pub location: String,
    pub region: String,
}

/// Per location, the target region first and then its complement; empty
/// pieces are dropped.
pub fn initial_partition(m: &Shs, target: &[Block]) -> Partition {
    let mut blocks = Vec::new();
    for loc in 0..m.locations.len() {
        let inside = m.region_at(target, loc).simplify();
        let outside = inside.complement().simplify();
        for region in [inside, outside] {
            if !region.is_empty() {
                blocks.push(Block { location: loc, region });
            }
        }
    }
    Partition { blocks }
}

/// Symbolic one-step predecessor operator with per-model caches.
#[derive(Debug, Clone)]
pub struct PreOperator<'a> {
    m: &'a Shs,
    delay_regions: Vec<LinSet>,
    flows: Vec<AffineMap>,
    /// Valuations whose delay set `I(s)` is a nonempty finite set.
    finite_delay: Vec<LinSet>,
    strong_points: Vec<Option<Vec<Vec<Rat>>>>,
}

impl<'a> PreOperator<'a> {
    pub fn new(m: &'a Shs) -> Self {
        let n = m.dim();
        let delay_regions: Vec<LinSet> = (0..m.edges.len()).map(|e| m.delay_region(e)).collect();
        let flows = (0..m.locations.len()).map(|l| m.flow_map(l)).collect();
        let finite_delay = (0..m.locations.len())
            .map(|l| {
                let all = m
                    .outgoing(l)
                    .fold(LinSet::empty(n + 1), |acc, e| acc.join(&delay_regions[e]));
                let some = all.project(&[n]).expect("tau coordinate");
                let open = all.tighten_coordinate(n).project(&[n]).expect("tau coordinate");
                some.minus(&open).simplify()
            })
            .collect();
        let strong_points = m
            .edges
            .iter()
            .map(|e| match &e.reset {
                ResetSpec::Strong {
                    support,
                    kind: StrongKind::UniformDiscrete,
                    ..
                } => support.finite_points(),
                _ => None,
            })
            .collect();
        Self {
            m,
            delay_regions,
            flows,
            finite_delay,
            strong_points,
        }
    }

    pub fn model(&self) -> &Shs {
        self.m
    }

    /// Whether the reset distribution of a strong edge charges `d`.
    pub fn strong_hits(&self, e: usize, d: &LinSet) -> bool {
        match &self.m.edges[e].reset {
            ResetSpec::Strong {
                kind: StrongKind::UniformDiscrete,
                ..
            } => self.strong_points[e]
                .as_ref()
                .is_some_and(|pts| pts.iter().any(|p| d.contains(p))),
            ResetSpec::Strong { support, .. } => support.meet(d).has_interior(),
            ResetSpec::Assign(_) => unreachable!("not a strong edge"),
        }
    }

    /// Valuations `w` at the end of the delay from which edge `e` leads into `d`
    /// with positive probability.
    fn guard_slice(&self, e: usize, d: &LinSet) -> LinSet {
        let n = self.m.dim();
        match &self.m.edges[e].reset {
            ResetSpec::Assign(_) => self.m.reset_preimage(e, d),
            ResetSpec::Strong { .. } => {
                if self.strong_hits(e, d) {
                    LinSet::full(n)
                } else {
                    LinSet::empty(n)
                }
            }
        }
    }

    /// States of `src(e)` reaching `target` through `e` with positive probability.
    pub fn pre_edge(&self, e: usize, target: &Block) -> LinSet {
        let n = self.m.dim();
        let edge = &self.m.edges[e];
        if edge.dst != target.location {
            return LinSet::empty(n);
        }
        let g = self.guard_slice(e, &target.region);
        if g.is_empty() {
            return LinSet::empty(n);
        }
        let region = self.delay_regions[e].meet(&g.preimage(&self.flows[edge.src]));
        let continuous = region.tighten_coordinate(n).project(&[n]).expect("tau coordinate");
        let discrete = region
            .project(&[n])
            .expect("tau coordinate")
            .meet(&self.finite_delay[edge.src]);
        continuous.join(&discrete).simplify()
    }

    /// `(edge, region at its source)` for every edge contributing to `Pre(target)`.
    pub fn pre_by_edge(&self, target: &Block) -> Vec<(usize, LinSet)> {
        (0..self.m.edges.len())
            .filter(|&e| self.m.edges[e].dst == target.location)
            .map(|e| (e, self.pre_edge(e, target)))
            .filter(|(_, r)| !r.is_empty())
            .collect()
    }

    /// `Pre(target)` as one region per location.
    pub fn pre(&self, target: &Block) -> Vec<LinSet> {
        let mut out = vec![LinSet::empty(self.m.dim()); self.m.locations.len()];
        for (e, r) in self.pre_by_edge(target) {
            let src = self.m.edges[e].src;
            out[src] = out[src].join(&r);
        }
        out.into_iter().map(|r| r.simplify()).collect()
    }
}

pub fn pre_block(m: &Shs, target: &Block) -> Vec<LinSet> {
    PreOperator::new(m).pre(target)
}

/// One application of the splitting rule: `split` is cut by `Pre(splitter)`;
/// the part inside keeps index `split`, the rest becomes block `created`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Split {
    pub splitter: usize,
    pub split: usize,
    pub created: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome")]
pub enum RefineOutcome {
    Terminated { partition: Partition, steps: usize, trace: Vec<Split> },
    StepCapReached { partition: Partition, steps: usize, trace: Vec<Split> },
}

impl RefineOutcome {
    pub fn partition(&self) -> &Partition {
        match self {
            RefineOutcome::Terminated { partition, .. } | RefineOutcome::StepCapReached { partition, .. } => partition,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            RefineOutcome::Terminated { steps, .. } | RefineOutcome::StepCapReached { steps, .. } => *steps,
        }
    }

    pub fn trace(&self) -> &[Split] {
        match self {
            RefineOutcome::Terminated { trace, .. } | RefineOutcome::StepCapReached { trace, .. } => trace,
        }
    }

    pub fn terminated(&self) -> bool {
        matches!(self, RefineOutcome::Terminated { .. })
    }
}

fn straddles(region: &LinSet, pre: &LinSet) -> Option<(LinSet, LinSet)> {
    let inside = region.meet(pre).simplify();
    if inside.is_empty() {
        return None;
    }
    let outside = region.minus(pre).simplify();
    if outside.is_empty() {
        return None;
    }
    Some((inside, outside))
}

/// Splits with the lowest `(splitter, split)` pair until stable or until
/// `step_cap` splits have been made.
pub fn refine(m: &Shs, p0: &Partition, step_cap: usize) -> RefineOutcome {
    let op = PreOperator::new(m);
    let mut blocks = p0.blocks.clone();
    let mut version = vec![0usize; blocks.len()];
    let mut pre_cache: HashMap<usize, (usize, Vec<LinSet>)> = HashMap::new();
    let mut stable_pairs: HashSet<(usize, usize, usize, usize)> = HashSet::new();
    let mut trace = Vec::new();
    'outer: loop {
        for p in 0..blocks.len() {
            let pre = match pre_cache.get(&p) {
                Some((v, pre)) if *v == version[p] => pre.clone(),
                _ => {
                    let pre = op.pre(&blocks[p]);
                    pre_cache.insert(p, (version[p], pre.clone()));
                    pre
                }
            };
            for q in 0..blocks.len() {
                let key = (p, version[p], q, version[q]);
                if stable_pairs.contains(&key) {
                    continue;
                }
                let loc = blocks[q].location;
                match straddles(&blocks[q].region, &pre[loc]) {
                    None => {
                        stable_pairs.insert(key);
                    }
                    Some((inside, outside)) => {
                        if trace.len() >= step_cap {
                            break 'outer;
                        }
                        let created = blocks.len();
                        blocks[q].region = inside;
                        version[q] += 1;
                        blocks.push(Block {
                            location: loc,
                            region: outside,
                        });
                        version.push(0);
                        trace.push(Split {
                            splitter: p,
                            split: q,
                            created,
                        });
                        continue 'outer;
                    }
                }
            }
        }
        let steps = trace.len();
        return RefineOutcome::Terminated {
            partition: Partition { blocks },
            steps,
            trace,
        };
    }
    let steps = trace.len();
    RefineOutcome::StepCapReached {
        partition: Partition { blocks },
        steps,
        trace,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AbstractionError {
    #[error("block {block} straddles Pre of block {target}; the partition is not stable")]
    Straddle { block: usize, target: usize },
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// One support edge of the abstraction, with the SHS edges that induce it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupportEdge {
    pub from: usize,
    pub to: usize,
    pub via: Vec<usize>,
}

/// Finite abstraction chain over the blocks of a stable partition. Rows are
/// uniform over successors, so only the support carries meaning.
#[derive(Debug, Clone)]
pub struct AbstractionMc {
    pub partition: Partition,
    pub mc: FiniteMc,
    pub support: Vec<SupportEdge>,
    /// Blocks without any successor, given a self-loop to keep rows stochastic.
    pub padded: Vec<usize>,
    /// Exact `Pre` of every block, per location.
    pub pre: Vec<Vec<LinSet>>,
}

impl AbstractionMc {
    pub fn successors(&self, b: usize) -> BTreeSet<usize> {
        self.mc.row(b).iter().map(|(t, _)| *t).collect()
    }

    pub fn alpha(&self, loc: usize, v: &[Rat]) -> Option<usize> {
        self.partition.locate(loc, v)
    }

    pub fn classifier(&self) -> BlockClassifier {
        BlockClassifier::new(&self.partition)
    }

    pub fn to_json(&self, m: &Shs) -> serde_json::Value {
        let names = |v: &[usize]| v.iter().map(|&e| m.edges[e].name.clone()).collect::<Vec<_>>();
        serde_json::json!({
            "blocks": self.partition.describe(m),
            "edges": self.support.iter().map(|s| serde_json::json!({
                "from": s.from,
                "to": s.to,
                "via": names(&s.via),
            })).collect::<Vec<_>>(),
            "padded": self.padded,
        })
    }

    /// Graphviz description of the support graph.
    pub fn to_dot(&self, m: &Shs) -> String {
        let mut out = String::from("digraph abstraction {\n");
        for info in self.partition.describe(m) {
            let label = format!("{}: {}", info.location, info.region).replace('"', "\\\"");
            out.push_str(&format!("  b{} [label=\"{}\"];\n", info.id, label));
        }
        for s in &self.support {
            let via: Vec<&str> = s.via.iter().map(|&e| m.edges[e].name.as_str()).collect();
            out.push_str(&format!("  b{} -> b{} [label=\"{}\"];\n", s.from, s.to, via.join(",")));
        }
        for &b in &self.padded {
            out.push_str(&format!("  b{b} -> b{b} [style=dashed];\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// Float classifier from concrete states to block indices.
#[derive(Debug, Clone)]
pub struct BlockClassifier {
    per_location: HashMap<usize, Vec<(usize, crate::linsets::FloatSet)>>,
}

impl BlockClassifier {
    pub fn new(p: &Partition) -> Self {
        let mut per_location: HashMap<usize, Vec<_>> = HashMap::new();
        for (i, b) in p.blocks.iter().enumerate() {
            per_location
                .entry(b.location)
                .or_default()
                .push((i, b.region.compile_f64()));
        }
        Self { per_location }
    }

    pub fn classify(&self, s: &State) -> Option<usize> {
        self.per_location
            .get(&s.location)?
            .iter()
            .find(|(_, f)| f.contains(&s.valuation))
            .map(|(i, _)| *i)
    }
}

/// Builds the abstraction of a stable partition; fails on a straddling block.
pub fn build_abstraction(m: &Shs, p: &Partition) -> Result<AbstractionMc, AbstractionError> {
    let op = PreOperator::new(m);
    let nb = p.blocks.len();
    let mut succ: Vec<Vec<(usize, Vec<usize>)>> = vec![Vec::new(); nb];
    let mut pres = Vec::with_capacity(nb);
    for (t, target) in p.blocks.iter().enumerate() {
        let by_edge = op.pre_by_edge(target);
        let mut pre = vec![LinSet::empty(m.dim()); m.locations.len()];
        for (e, r) in &by_edge {
            let src = m.edges[*e].src;
            pre[src] = pre[src].join(r);
        }
        for (q, block) in p.blocks.iter().enumerate() {
            let loc = block.location;
            if straddles(&block.region, &pre[loc]).is_some() {
                return Err(AbstractionError::Straddle { block: q, target: t });
            }
            if pre[loc].is_empty() || block.region.meet(&pre[loc]).is_empty() {
                continue;
            }
            let via: Vec<usize> = by_edge
                .iter()
                .filter(|(e, r)| m.edges[*e].src == loc && !block.region.meet(r).is_empty())
                .map(|(e, _)| *e)
                .collect();
            succ[q].push((t, via));
        }
        pres.push(pre);
    }
    let mut padded = Vec::new();
    let mut lists = Vec::with_capacity(nb);
    let mut support = Vec::new();
    for (q, s) in succ.into_iter().enumerate() {
        if s.is_empty() {
            padded.push(q);
            lists.push(vec![q]);
            continue;
        }
        lists.push(s.iter().map(|(t, _)| *t).collect());
        for (t, via) in s {
            support.push(SupportEdge { from: q, to: t, via });
        }
    }
    let mc = FiniteMc::uniform_over(&lists).expect("uniform rows are stochastic");
    Ok(AbstractionMc {
        partition: p.clone(),
        mc,
        support,
        padded,
        pre: pres,
    })
}

/// `Ok(())` when no block straddles any `Pre` set.
pub fn check_stable(m: &Shs, p: &Partition) -> Result<(), AbstractionError> {
    let op = PreOperator::new(m);
    for (t, target) in p.blocks.iter().enumerate() {
        let pre = op.pre(target);
        for (q, block) in p.blocks.iter().enumerate() {
            if straddles(&block.region, &pre[block.location]).is_some() {
                return Err(AbstractionError::Straddle { block: q, target: t });
            }
        }
    }
    Ok(())
}

/// True when merging any two blocks of the same location (and, if `p0` is
/// given, of the same `p0` block) breaks stability.
pub fn check_coarsest(m: &Shs, p: &Partition, p0: Option<&Partition>) -> bool {
    let op = PreOperator::new(m);
    let pres: Vec<Vec<LinSet>> = p.blocks.iter().map(|b| op.pre(b)).collect();
    let parents = p0.map(|c| p.parents_in(c));
    let parents = match parents {
        Some(Ok(v)) => Some(v),
        Some(Err(_)) => return false,
        None => None,
    };
    let nb = p.blocks.len();
    for i in 0..nb {
        for j in i + 1..nb {
            if p.blocks[i].location != p.blocks[j].location {
                continue;
            }
            if let Some(par) = &parents {
                if par[i] != par[j] {
                    continue;
                }
            }
            if merged_is_stable(p, &pres, i, j) {
                return false;
            }
        }
    }
    true
}

fn merged_is_stable(p: &Partition, pres: &[Vec<LinSet>], i: usize, j: usize) -> bool {
    let merged_region = p.blocks[i].region.join(&p.blocks[j].region);
    let merged_region = &merged_region;
    let merged_pre: Vec<LinSet> = pres[i].iter().zip(&pres[j]).map(|(a, b)| a.join(b)).collect();
    let regions = || {
        p.blocks
            .iter()
            .enumerate()
            .filter(move |(k, _)| *k != j)
            .map(move |(k, b)| {
                if k == i {
                    (b.location, merged_region.clone())
                } else {
                    (b.location, b.region.clone())
                }
            })
    };
    for (t, pre) in pres.iter().enumerate() {
        if t == j {
            continue;
        }
        let pre = if t == i { &merged_pre } else { pre };
        for (loc, region) in regions() {
            if straddles(&region, &pre[loc]).is_some() {
                return false;
            }
        }
    }
    true
}

/// Blocks charged by the initial distribution: those containing a point of a
/// Dirac part, or meeting a uniform part's support in a set with interior.
pub fn initial_blocks(m: &Shs, p: &Partition) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for part in &m.init {
        for i in p.at(part.location) {
            let hit = match &part.shape {
                InitShape::Point(v) => p.blocks[i].region.contains(v),
                InitShape::Uniform { support, .. } => support.meet(&p.blocks[i].region).has_interior(),
            };
            if hit {
                out.insert(i);
            }
        }
    }
    out
}

/// Indices of the blocks contained in the target region.
pub fn target_blocks(m: &Shs, p: &Partition, target: &[Block]) -> BTreeSet<usize> {
    (0..p.blocks.len())
        .filter(|&i| {
            let b = &p.blocks[i];
            b.region.is_subset(&m.region_at(target, b.location))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::linsets::{LinAtom, Rel};
    use crate::rational::int;

    fn x_cmp(rel: Rel, b: i64) -> LinSet {
        LinSet::from_atoms(1, vec![LinAtom::var_cmp(1, 0, rel, int(b))])
    }

    fn b_cmp(b: i64, rel: Rel) -> LinSet {
        LinSet::from_atoms(1, vec![LinAtom::cmp_var(1, int(b), rel, 0)])
    }

    fn interval(lo: i64, hi: i64) -> LinSet {
        b_cmp(lo, Rel::Le).meet(&x_cmp(Rel::Lt, hi))
    }

    #[test]
    fn initial_partition_shapes() {
        let m = fixtures::no_finite_abs();
        let target = m.target("s_star").unwrap().blocks.clone();
        let p = initial_partition(&m, &target);
        assert_eq!(p.len(), 2);
        assert!(p.blocks.iter().all(|b| b.region.complement().is_empty()));
        p.check(&m).unwrap();

        let l0 = m.location_index("l0").unwrap();
        let b = vec![Block {
            location: l0,
            region: x_cmp(Rel::Lt, 0),
        }];
        let p = initial_partition(&m, &b);
        assert_eq!(p.len(), 3);
        assert!(p.blocks[0].region.set_eq(&x_cmp(Rel::Lt, 0)));
        assert!(p.blocks[1].region.set_eq(&b_cmp(0, Rel::Le)));
        p.check(&m).unwrap();
    }

    #[test]
    fn pre_of_no_finite_abs() {
        let m = fixtures::no_finite_abs();
        let l0 = m.location_index("l0").unwrap();
        let l1 = m.location_index("l1").unwrap();
        let s_star = Block {
            location: l1,
            region: LinSet::full(1),
        };
        let s0 = pre_block(&m, &s_star);
        assert!(s0[l0].set_eq(&x_cmp(Rel::Lt, 0)));
        let s0_block = Block {
            location: l0,
            region: s0[l0].clone(),
        };
        let s1 = pre_block(&m, &s0_block)[l0].meet(&b_cmp(0, Rel::Le));
        assert!(s1.set_eq(&interval(0, 1)));
    }

    #[test]
    fn strong_edge_with_disjoint_support_contributes_nothing() {
        let m = fixtures::coin();
        let lb = m.location_index("lb").unwrap();
        let l0 = m.location_index("l0").unwrap();
        let away = Block {
            location: lb,
            region: b_cmp(1, Rel::Le),
        };
        assert!(pre_block(&m, &away)[l0].is_empty());
        let origin = Block {
            location: lb,
            region: LinSet::full(1),
        };
        assert!(pre_block(&m, &origin)[l0].set_eq(&b_cmp(0, Rel::Le).meet(&x_cmp(Rel::Lt, 1))));
    }

    #[test]
    fn finite_delay_set_uses_nonemptiness() {
        // single_loop: from x < 1 the only delay is 1 - x, a single point
        let m = fixtures::single_loop();
        let whole = Block {
            location: 0,
            region: LinSet::full(1),
        };
        let pre = pre_block(&m, &whole);
        assert!(pre[0].set_eq(&x_cmp(Rel::Le, 1)));
        let zero = Block {
            location: 0,
            region: b_cmp(0, Rel::Eq),
        };
        assert!(pre_block(&m, &zero)[0].set_eq(&x_cmp(Rel::Le, 1)));
        let other = Block {
            location: 0,
            region: b_cmp(1, Rel::Le),
        };
        assert!(pre_block(&m, &other)[0].is_empty());
    }

    #[test]
    fn no_finite_abs_refinement_sequence() {
        let m = fixtures::no_finite_abs();
        let p0 = initial_partition(&m, &m.target("s_star").unwrap().blocks);
        let out = refine(&m, &p0, 10);
        assert!(!out.terminated());
        assert_eq!(out.steps(), 10);
        let p = out.partition();
        p.check(&m).unwrap();
        let l0: Vec<&LinSet> = p.at(0).map(|i| &p.blocks[i].region).collect();
        assert!(l0[0].set_eq(&x_cmp(Rel::Lt, 0)));
        for i in 1..=9 {
            assert!(l0.iter().any(|r| r.set_eq(&interval(i - 1, i))), "missing [{}, {i})", i - 1);
        }
        assert!(l0.iter().any(|r| r.set_eq(&b_cmp(9, Rel::Le))));
        assert_eq!(l0.len(), 11);
    }

    #[test]
    fn all_strong_model_is_a_fixpoint_after_refinement() {
        let m = fixtures::strong_loop();
        let p0 = initial_partition(&m, &m.target("all").unwrap().blocks);
        let out = refine(&m, &p0, DEFAULT_STEP_CAP);
        assert!(out.terminated());
        let again = refine(&m, out.partition(), DEFAULT_STEP_CAP);
        assert_eq!(again.steps(), 0);
    }

    #[test]
    fn coin_abstraction_by_hand() {
        let m = fixtures::coin();
        let p0 = initial_partition(&m, &m.target("goal").unwrap().blocks);
        let out = refine(&m, &p0, DEFAULT_STEP_CAP);
        assert!(out.terminated());
        let p = out.partition();
        p.check(&m).unwrap();
        // l0 splits into [0,1), [1,2] and the rest; x = 2 has the single delay 0
        let l0 = m.location_index("l0").unwrap();
        let l0_blocks: Vec<&LinSet> = p.at(l0).map(|i| &p.blocks[i].region).collect();
        assert_eq!(l0_blocks.len(), 3);
        assert!(l0_blocks.iter().any(|r| r.set_eq(&interval(0, 1))));
        assert!(l0_blocks
            .iter()
            .any(|r| r.set_eq(&b_cmp(1, Rel::Le).meet(&x_cmp(Rel::Le, 2)))));
        assert_eq!(p.len(), 5);
        let a = build_abstraction(&m, p).unwrap();
        let lb0 = p.locate(m.location_index("lb").unwrap(), &[int(0)]).unwrap();
        let ls0 = p.locate(m.location_index("lsink").unwrap(), &[int(0)]).unwrap();
        let first = p.locate(l0, &[int(0)]).unwrap();
        let second = p.locate(l0, &[int(2)]).unwrap();
        assert_eq!(a.successors(first), [lb0, ls0].into_iter().collect());
        assert_eq!(a.successors(second), [ls0].into_iter().collect());
        assert_eq!(a.successors(lb0), [lb0].into_iter().collect());
        assert!(check_coarsest(&m, p, Some(&p0)));
    }

    #[test]
    fn alpha_closedness() {
        let m = fixtures::coin3();
        let p0 = initial_partition(&m, &m.target("goal").unwrap().blocks);
        let out = refine(&m, &p0, DEFAULT_STEP_CAP);
        let p = out.partition();
        let a = build_abstraction(&m, p).unwrap();
        for pre in &a.pre {
            for (loc, region) in pre.iter().enumerate() {
                let union = p
                    .at(loc)
                    .filter(|&i| p.blocks[i].region.is_subset(region))
                    .fold(LinSet::empty(1), |acc, i| acc.join(&p.blocks[i].region));
                assert!(union.set_eq(region));
            }
        }
    }

    #[test]
    fn oversplit_partition_is_not_coarsest() {
        let m = fixtures::strong_loop();
        let p0 = initial_partition(&m, &m.target("all").unwrap().blocks);
        assert!(check_coarsest(&m, &p0, None));
        let inv = m.locations[0].invariant.clone();
        let neg = LinSet::from_atoms(2, vec![LinAtom::var_cmp(2, 0, Rel::Lt, int(0))]);
        let over = Partition {
            blocks: [inv.meet(&neg), inv.minus(&neg), inv.complement()]
                .into_iter()
                .map(|region| Block { location: 0, region })
                .collect(),
        };
        over.check(&m).unwrap();
        check_stable(&m, &over).unwrap();
        assert!(!check_coarsest(&m, &over, None));
    }

    #[test]
    fn straddling_partition_is_rejected() {
        let m = fixtures::coin();
        let p0 = initial_partition(&m, &m.target("goal").unwrap().blocks);
        assert!(matches!(
            build_abstraction(&m, &p0),
            Err(AbstractionError::Straddle { .. })
        ));
    }
}
