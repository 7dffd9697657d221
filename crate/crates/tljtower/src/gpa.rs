//! Bipartite graph planar algebra box spaces.
//!
//! `𝒢_{n,±}` is spanned by loops `η★η'` of length `2n`: two half-paths of
//! length `n` leaving the same start vertex (even for `+`, odd for `−`) and
//! meeting at the same end vertex. Stacking is matrix multiplication in the
//! half-path indices, so each box space is the multi-matrix algebra with one
//! block per (start, end) pair.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::WeightedBipartiteGraph;
use crate::linalg::{c, CMat, C64};
use crate::multimatrix::{AlgebraElement, MultiMatrixAlgebra, Segment, UnitalInclusion};
use crate::tljdiag::Shading;
use crate::tower::MarkovTower;

/// A based loop: half-paths `left` and `right` (edge ids) from `start`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Loop {
    pub start: usize,
    pub end: usize,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Debug)]
pub struct LoopSpace {
    graph: Arc<WeightedBipartiteGraph>,
    n: usize,
    shading: Shading,
    blocks: Vec<(usize, usize)>,
    paths: Vec<Vec<Vec<usize>>>,
    lookup: HashMap<(usize, Vec<usize>), (usize, usize)>,
    /// Basis loops as `(block, row, col)` in lexicographic edge order.
    loops: Vec<(usize, usize, usize)>,
    algebra: Arc<MultiMatrixAlgebra>,
}

fn starts(graph: &WeightedBipartiteGraph, shading: Shading) -> std::ops::Range<usize> {
    match shading {
        Shading::Plus => graph.even_vertices(),
        Shading::Minus => graph.odd_vertices(),
    }
}

/// `Σ dim(v)²` over one vertex class; the two classes agree.
fn class_norm(graph: &WeightedBipartiteGraph, shading: Shading) -> f64 {
    starts(graph, shading).map(|v| graph.dim(v).powi(2)).sum()
}

impl LoopSpace {
    pub fn new(graph: Arc<WeightedBipartiteGraph>, n: usize, shading: Shading) -> Result<Self> {
        let d = graph.modulus();
        let z = class_norm(&graph, shading);
        let mut grouped: BTreeMap<(usize, usize), Vec<Vec<usize>>> = BTreeMap::new();
        for s in starts(&graph, shading) {
            let mut layer: Vec<(Vec<usize>, usize)> = vec![(Vec::new(), s)];
            for _ in 0..n {
                let mut next = Vec::new();
                for (p, v) in &layer {
                    for &e in graph.incident(*v) {
                        let mut q = p.clone();
                        q.push(e);
                        next.push((q, graph.edge(e).other(*v)));
                    }
                }
                layer = next;
            }
            layer.sort();
            for (p, w) in layer {
                grouped.entry((s, w)).or_default().push(p);
            }
        }
        let blocks: Vec<(usize, usize)> = grouped.keys().copied().collect();
        let paths: Vec<Vec<Vec<usize>>> = grouped.into_values().collect();
        let mut lookup = HashMap::new();
        for (b, ps) in paths.iter().enumerate() {
            for (i, p) in ps.iter().enumerate() {
                lookup.insert((blocks[b].0, p.clone()), (b, i));
            }
        }
        let mut keyed: Vec<(Vec<usize>, usize, (usize, usize, usize))> = Vec::new();
        for (b, ps) in paths.iter().enumerate() {
            for (i, p) in ps.iter().enumerate() {
                for (j, q) in ps.iter().enumerate() {
                    let mut key = p.clone();
                    key.extend(q.iter().rev());
                    keyed.push((key, blocks[b].0, (b, i, j)));
                }
            }
        }
        keyed.sort();
        let loops = keyed.into_iter().map(|(_, _, l)| l).collect();
        let labels = blocks.iter().map(|&(s, w)| format!("{}>{}", graph.label(s), graph.label(w))).collect();
        let sizes = paths.iter().map(|p| p.len()).collect();
        let weights = blocks.iter().map(|&(s, w)| graph.dim(s) * graph.dim(w) * d.powi(-(n as i32)) / z).collect();
        let algebra = Arc::new(MultiMatrixAlgebra::new(labels, sizes, weights, true)?);
        Ok(LoopSpace { graph, n, shading, blocks, paths, lookup, loops, algebra })
    }

    pub fn graph(&self) -> &Arc<WeightedBipartiteGraph> {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shading(&self) -> Shading {
        self.shading
    }

    pub fn algebra(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.algebra
    }

    pub fn dim(&self) -> usize {
        self.loops.len()
    }

    /// `(start, end)` vertex of each block.
    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn paths(&self, block: usize) -> &[Vec<usize>] {
        &self.paths[block]
    }

    pub fn locate(&self, start: usize, path: &[usize]) -> Option<(usize, usize)> {
        self.lookup.get(&(start, path.to_vec())).copied()
    }

    pub fn loop_at(&self, k: usize) -> Loop {
        let (b, i, j) = self.loops[k];
        let (start, end) = self.blocks[b];
        Loop { start, end, left: self.paths[b][i].clone(), right: self.paths[b][j].clone() }
    }

    /// Position of a loop in the basis.
    pub fn loop_index(&self, block: usize, row: usize, col: usize) -> usize {
        self.loops.iter().position(|&l| l == (block, row, col)).expect("loop exists")
    }

    pub fn loops(&self) -> &[(usize, usize, usize)] {
        &self.loops
    }

    /// Loops written as alternating vertex/edge sequences.
    pub fn to_json(&self) -> serde_json::Value {
        let g = &self.graph;
        let walk = |l: &Loop| {
            let mut seq = vec![json!(g.label(l.start))];
            let mut v = l.start;
            for &e in l.left.iter().chain(l.right.iter().rev()) {
                v = g.edge(e).other(v);
                seq.push(json!(e));
                seq.push(json!(g.label(v)));
            }
            json!(seq)
        };
        json!({
            "n": self.n,
            "shading": if self.shading == Shading::Plus { "+" } else { "-" },
            "dimension": self.dim(),
            "loops": (0..self.dim()).map(|k| walk(&self.loop_at(k))).collect::<Vec<_>>(),
        })
    }
}

/// Number of based loops of length `2n` at vertices of the given class.
pub fn box_dimension(graph: &WeightedBipartiteGraph, n: usize, shading: Shading) -> usize {
    let adj = graph.adjacency();
    let mut total = 0;
    for s in starts(graph, shading) {
        let mut counts = vec![0usize; graph.vertex_count()];
        counts[s] = 1;
        for _ in 0..n {
            let mut next = vec![0usize; counts.len()];
            for (v, &cv) in counts.iter().enumerate() {
                if cv > 0 {
                    for (w, &m) in adj[v].iter().enumerate() {
                        next[w] += cv * m;
                    }
                }
            }
            counts = next;
        }
        total += counts.iter().map(|c| c * c).sum::<usize>();
    }
    total
}

/// Element of a box space, stored blockwise.
#[derive(Clone, Debug)]
pub struct GPAElement {
    space: Arc<LoopSpace>,
    value: AlgebraElement,
}

impl GPAElement {
    pub fn zero(space: &Arc<LoopSpace>) -> Self {
        GPAElement { space: space.clone(), value: AlgebraElement::zero(&space.algebra) }
    }

    /// Sum of the constant-return loops `η★η`.
    pub fn identity(space: &Arc<LoopSpace>) -> Self {
        GPAElement { space: space.clone(), value: AlgebraElement::identity(&space.algebra) }
    }

    pub fn loop_indicator(space: &Arc<LoopSpace>, k: usize) -> Self {
        let (b, i, j) = space.loops[k];
        GPAElement { space: space.clone(), value: AlgebraElement::matrix_unit(&space.algebra, b, i, j) }
    }

    pub fn from_coefficients(space: &Arc<LoopSpace>, coeffs: &[C64]) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::Shape(format!("{} coefficients for a space of dimension {}", coeffs.len(), space.dim())));
        }
        let mut x = Self::zero(space);
        for (&(b, i, j), &v) in space.loops.iter().zip(coeffs) {
            x.value.block_mut(b)[(i, j)] = v;
        }
        Ok(x)
    }

    pub fn from_algebra(space: &Arc<LoopSpace>, value: AlgebraElement) -> Result<Self> {
        if !value.parent().same_shape(&space.algebra) {
            return Err(Error::ParentMismatch);
        }
        Ok(GPAElement { space: space.clone(), value })
    }

    pub fn space(&self) -> &Arc<LoopSpace> {
        &self.space
    }

    pub fn value(&self) -> &AlgebraElement {
        &self.value
    }

    pub fn coefficients(&self) -> Vec<C64> {
        self.space.loops.iter().map(|&(b, i, j)| self.value.block(b)[(i, j)]).collect()
    }

    fn same(&self, other: &Self) -> Result<()> {
        if !Arc::ptr_eq(&self.space, &other.space)
            && (self.space.n != other.space.n
                || self.space.shading != other.space.shading
                || !self.space.algebra.same_shape(&other.space.algebra))
        {
            return Err(Error::ParentMismatch);
        }
        Ok(())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same(other)?;
        Ok(GPAElement { space: self.space.clone(), value: self.value.try_mul(&other.value)? })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same(other)?;
        Ok(GPAElement { space: self.space.clone(), value: self.value.try_add(&other.value)? })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same(other)?;
        Ok(GPAElement { space: self.space.clone(), value: self.value.try_sub(&other.value)? })
    }

    pub fn scale(&self, s: C64) -> Self {
        GPAElement { space: self.space.clone(), value: self.value.scale(s) }
    }

    pub fn adjoint(&self) -> Self {
        GPAElement { space: self.space.clone(), value: self.value.adjoint() }
    }

    /// `d^{-n}` times the closure, with the start vertices weighted by
    /// `dim(v)² / Σ dim²`.
    pub fn trace(&self) -> C64 {
        self.value.trace()
    }

    pub fn dist(&self, other: &Self) -> Result<f64> {
        self.same(other)?;
        self.value.dist(&other.value)
    }

    pub fn max_abs(&self) -> f64 {
        self.value.max_abs()
    }
}

/// Box spaces of one graph, built on demand, with the generating tangles.
#[derive(Debug)]
pub struct GraphPlanarAlgebra {
    graph: Arc<WeightedBipartiteGraph>,
    spaces: Mutex<HashMap<(usize, Shading), Arc<LoopSpace>>>,
}

impl GraphPlanarAlgebra {
    pub fn new(graph: &WeightedBipartiteGraph) -> Self {
        GraphPlanarAlgebra { graph: Arc::new(graph.clone()), spaces: Mutex::new(HashMap::new()) }
    }

    pub fn graph(&self) -> &Arc<WeightedBipartiteGraph> {
        &self.graph
    }

    pub fn modulus(&self) -> f64 {
        self.graph.modulus()
    }

    pub fn space(&self, n: usize, shading: Shading) -> Arc<LoopSpace> {
        let mut spaces = self.spaces.lock().unwrap();
        spaces
            .entry((n, shading))
            .or_insert_with(|| Arc::new(LoopSpace::new(self.graph.clone(), n, shading).expect("box space")))
            .clone()
    }

    /// `e_k ∈ 𝒢_{k+1,±}` for `k ≥ 1`: supported on loops backtracking after
    /// step `k`, with the path-model entries `√(dim x dim y) / (d dim u)`.
    pub fn jones_projection(&self, k: usize, shading: Shading) -> Result<GPAElement> {
        if k == 0 {
            return Err(Error::Invalid("Jones projections are indexed from 1".into()));
        }
        let g = &self.graph;
        let d = g.modulus();
        let prefixes = self.space(k - 1, shading);
        let space = self.space(k + 1, shading);
        let mut x = GPAElement::zero(&space);
        for (b, &(s, u)) in prefixes.blocks.iter().enumerate() {
            for xi in &prefixes.paths[b] {
                let mut rows = Vec::new();
                for &a in g.incident(u) {
                    let y = g.edge(a).other(u);
                    let mut p = xi.clone();
                    p.extend([a, a]);
                    let (ub, r) = space.locate(s, &p).expect("backtracking path");
                    rows.push((ub, r, (g.dim(y) / (d * g.dim(u))).sqrt()));
                }
                for &(ub, r, vr) in &rows {
                    for &(_, q, vq) in &rows {
                        x.value.block_mut(ub)[(r, q)] += c(vr * vq);
                    }
                }
            }
        }
        Ok(x)
    }

    /// Extend every half-path by the same final edge.
    pub fn include_right(&self, x: &GPAElement) -> GPAElement {
        let src = &x.space;
        let dst = self.space(src.n + 1, src.shading);
        let mut out = GPAElement::zero(&dst);
        for (b, &(s, w)) in src.blocks.iter().enumerate() {
            let m = x.value.block(b);
            for &e in self.graph.incident(w) {
                let rows: Vec<(usize, usize)> = src.paths[b]
                    .iter()
                    .map(|p| {
                        let mut q = p.clone();
                        q.push(e);
                        dst.locate(s, &q).expect("extended path")
                    })
                    .collect();
                add_block(&mut out.value, m, &rows, 1.0);
            }
        }
        out
    }

    /// Prefix every half-path with the same first edge, switching shading.
    pub fn include_left(&self, x: &GPAElement) -> GPAElement {
        let src = &x.space;
        let dst = self.space(src.n + 1, src.shading.flip());
        let mut out = GPAElement::zero(&dst);
        for (b, &(s, _)) in src.blocks.iter().enumerate() {
            let m = x.value.block(b);
            for &a in self.graph.incident(s) {
                let u = self.graph.edge(a).other(s);
                let rows: Vec<(usize, usize)> = src.paths[b]
                    .iter()
                    .map(|p| {
                        let mut q = vec![a];
                        q.extend(p);
                        dst.locate(u, &q).expect("prefixed path")
                    })
                    .collect();
                add_block(&mut out.value, m, &rows, 1.0);
            }
        }
        out
    }

    /// Join the last points of the two half-paths; weight `dim(end)/dim(previous)`.
    pub fn cap_right(&self, x: &GPAElement) -> Result<GPAElement> {
        let src = &x.space;
        if src.n == 0 {
            return Err(Error::Invalid("cannot cap a 0-box".into()));
        }
        let dst = self.space(src.n - 1, src.shading);
        let g = &self.graph;
        let mut out = GPAElement::zero(&dst);
        for (b, &(s, w)) in src.blocks.iter().enumerate() {
            let m = x.value.block(b);
            let ps = &src.paths[b];
            for (i, p) in ps.iter().enumerate() {
                for (j, q) in ps.iter().enumerate() {
                    let (ep, eq) = (p[p.len() - 1], q[q.len() - 1]);
                    if ep != eq || m[(i, j)].norm() == 0.0 {
                        continue;
                    }
                    let mid = g.edge(ep).other(w);
                    let (tb, r) = dst.locate(s, &p[..p.len() - 1]).unwrap();
                    let (_, t) = dst.locate(s, &q[..q.len() - 1]).unwrap();
                    out.value.block_mut(tb)[(r, t)] += m[(i, j)] * (g.dim(w) / g.dim(mid));
                }
            }
        }
        Ok(out)
    }

    /// Join the first points of the two half-paths; weight `dim(start)/dim(next)`.
    pub fn cap_left(&self, x: &GPAElement) -> Result<GPAElement> {
        let src = &x.space;
        if src.n == 0 {
            return Err(Error::Invalid("cannot cap a 0-box".into()));
        }
        let dst = self.space(src.n - 1, src.shading.flip());
        let g = &self.graph;
        let mut out = GPAElement::zero(&dst);
        for (b, &(s, _)) in src.blocks.iter().enumerate() {
            let m = x.value.block(b);
            let ps = &src.paths[b];
            for (i, p) in ps.iter().enumerate() {
                for (j, q) in ps.iter().enumerate() {
                    if p[0] != q[0] || m[(i, j)].norm() == 0.0 {
                        continue;
                    }
                    let next = g.edge(p[0]).other(s);
                    let (tb, r) = dst.locate(next, &p[1..]).unwrap();
                    let (_, t) = dst.locate(next, &q[1..]).unwrap();
                    out.value.block_mut(tb)[(r, t)] += m[(i, j)] * (g.dim(s) / g.dim(next));
                }
            }
        }
        Ok(out)
    }

    /// The positive tower `(𝒢_{n,+}, tr, e_{n+1})` for `n ≤ depth`.
    pub fn as_markov_tower(&self, depth: usize) -> Result<MarkovTower> {
        gpa_tower(self, depth, Shading::Plus)
    }
}

fn add_block(out: &mut AlgebraElement, m: &CMat, rows: &[(usize, usize)], s: f64) {
    for (i, &(b, r)) in rows.iter().enumerate() {
        for (j, &(_, q)) in rows.iter().enumerate() {
            let v = m[(i, j)];
            if v.norm() != 0.0 {
                out.block_mut(b)[(r, q)] += v * s;
            }
        }
    }
}

/// Package one shading of the box spaces as a Markov tower.
pub fn gpa_tower(gpa: &GraphPlanarAlgebra, depth: usize, shading: Shading) -> Result<MarkovTower> {
    if depth < 2 {
        return Err(Error::Depth { have: depth, need: 2 });
    }
    let spaces: Vec<Arc<LoopSpace>> = (0..=depth).map(|n| gpa.space(n, shading)).collect();
    let levels: Vec<Arc<MultiMatrixAlgebra>> = spaces.iter().map(|s| s.algebra.clone()).collect();
    let mut inclusions = Vec::with_capacity(depth);
    for n in 0..depth {
        let (lo, hi) = (&spaces[n], &spaces[n + 1]);
        let mut segs: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
        for (w, ps) in hi.paths.iter().enumerate() {
            let s = hi.blocks[w].0;
            for (r, p) in ps.iter().enumerate() {
                let (u, i) = lo.locate(s, &p[..p.len() - 1]).expect("prefix");
                let seg = segs.entry((u, w, p[p.len() - 1])).or_insert_with(|| vec![usize::MAX; lo.paths[u].len()]);
                seg[i] = r;
            }
        }
        let mut copies: HashMap<(usize, usize), usize> = HashMap::new();
        let segments = segs
            .into_iter()
            .map(|((u, w, _), index)| {
                let copy = copies.entry((u, w)).or_insert(0);
                *copy += 1;
                Segment { lower: u, upper: w, copy: *copy - 1, index }
            })
            .collect();
        inclusions.push(Arc::new(UnitalInclusion::new(levels[n].clone(), levels[n + 1].clone(), segments)?));
    }
    let jones = (1..depth).map(|k| gpa.jones_projection(k, shading).map(|e| e.value)).collect::<Result<Vec<_>>>()?;
    MarkovTower::new(levels, inclusions, jones, gpa.modulus())
}

/// `Σ_{v} ((ΛΛᵀ)ⁿ)_{vv}` over the even class (`+`) or `Σ ((ΛᵀΛ)ⁿ)_{vv}` over the odd class.
pub fn adjacency_trace(graph: &WeightedBipartiteGraph, n: usize, shading: Shading) -> usize {
    let ev: Vec<usize> = graph.even_vertices().collect();
    let od: Vec<usize> = graph.odd_vertices().collect();
    let (rows, cols) = match shading {
        Shading::Plus => (&ev, &od),
        Shading::Minus => (&od, &ev),
    };
    let lam: Vec<Vec<usize>> = rows.iter().map(|&a| cols.iter().map(|&b| graph.multiplicity(a, b)).collect()).collect();
    let k = rows.len();
    let mut sq = vec![vec![0usize; k]; k];
    for i in 0..k {
        for j in 0..k {
            sq[i][j] = (0..cols.len()).map(|t| lam[i][t] * lam[j][t]).sum();
        }
    }
    let mut acc: Vec<Vec<usize>> = (0..k).map(|i| (0..k).map(|j| usize::from(i == j)).collect()).collect();
    for _ in 0..n {
        let mut next = vec![vec![0usize; k]; k];
        for i in 0..k {
            for j in 0..k {
                next[i][j] = (0..k).map(|t| acc[i][t] * sq[t][j]).sum();
            }
        }
        acc = next;
    }
    (0..k).map(|i| acc[i][i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::builtin;
    use crate::verify::verify_markov_axioms;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(space: &Arc<LoopSpace>, rng: &mut ChaCha8Rng) -> GPAElement {
        GPAElement::from_algebra(space, AlgebraElement::random_complex(space.algebra(), rng)).unwrap()
    }

    #[test]
    fn a3_box_dimensions() {
        let g = builtin("A3").unwrap();
        assert_eq!(box_dimension(&g, 0, Shading::Plus), 2);
        assert_eq!(box_dimension(&g, 1, Shading::Plus), 2);
        assert_eq!(box_dimension(&g, 2, Shading::Plus), 4);
        let gpa = GraphPlanarAlgebra::new(&g);
        let s = gpa.space(2, Shading::Plus);
        assert_eq!(s.dim(), 4);
        assert_eq!(s.algebra().sizes(), &[1, 1, 1, 1]);
        assert_eq!(gpa.space(0, Shading::Minus).dim(), 1);
    }

    #[test]
    fn a2_is_connected() {
        let g = builtin("A2").unwrap();
        let dims: Vec<usize> = (0..4).map(|n| box_dimension(&g, n, Shading::Plus)).collect();
        assert_eq!(dims, vec![1, 1, 1, 1]);
    }

    #[test]
    fn loop_counts_match_adjacency_powers() {
        for name in ["A3", "A5", "D4", "D5", "E6"] {
            let g = builtin(name).unwrap();
            let gpa = GraphPlanarAlgebra::new(&g);
            for n in 0..=4 {
                for sh in [Shading::Plus, Shading::Minus] {
                    let want = adjacency_trace(&g, n, sh);
                    assert_eq!(box_dimension(&g, n, sh), want, "{name} {n}");
                    assert_eq!(gpa.space(n, sh).dim(), want);
                }
            }
        }
    }

    #[test]
    fn jones_projections_and_trace() {
        let g = builtin("A3").unwrap();
        let gpa = GraphPlanarAlgebra::new(&g);
        let d = gpa.modulus();
        let e1 = gpa.jones_projection(1, Shading::Plus).unwrap();
        assert!((e1.trace().re - 0.5).abs() < 1e-12);
        for k in 1..=3 {
            let e = gpa.jones_projection(k, Shading::Plus).unwrap();
            assert!(e.mul(&e).unwrap().dist(&e).unwrap() < 1e-12);
            assert!(e.adjoint().dist(&e).unwrap() < 1e-12);
        }
        let e1 = gpa.include_right(&e1);
        let e2 = gpa.jones_projection(2, Shading::Plus).unwrap();
        let lhs = e1.mul(&e2).unwrap().mul(&e1).unwrap();
        assert!(lhs.dist(&e1.scale(c(d.powi(-2)))).unwrap() < 1e-12);
        let lhs = e2.mul(&e1).unwrap().mul(&e2).unwrap();
        assert!(lhs.dist(&e2.scale(c(d.powi(-2)))).unwrap() < 1e-12);
    }

    #[test]
    fn tangle_compatibilities() {
        let g = builtin("D5").unwrap();
        let gpa = GraphPlanarAlgebra::new(&g);
        let d = gpa.modulus();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=3 {
            for sh in [Shading::Plus, Shading::Minus] {
                let x = random(&gpa.space(n, sh), &mut rng);
                let back = gpa.cap_right(&gpa.include_right(&x)).unwrap();
                assert!(back.dist(&x.scale(c(d))).unwrap() < 1e-12);
                let back = gpa.cap_left(&gpa.include_left(&x)).unwrap();
                assert!(back.dist(&x.scale(c(d))).unwrap() < 1e-12);
                let lr = gpa.include_left(&gpa.include_right(&x));
                let rl = gpa.include_right(&gpa.include_left(&x));
                assert!(lr.dist(&rl).unwrap() < 1e-14);
                let a = gpa.cap_right(&gpa.include_left(&x)).unwrap();
                let b = gpa.include_left(&gpa.cap_right(&x).unwrap());
                assert!(a.dist(&b).unwrap() < 1e-12);
                let a = gpa.cap_left(&gpa.include_right(&x)).unwrap();
                let b = gpa.include_right(&gpa.cap_left(&x).unwrap());
                assert!(a.dist(&b).unwrap() < 1e-12);
                let y = random(&gpa.space(n, sh), &mut rng);
                let xy = gpa.include_right(&x.mul(&y).unwrap());
                let prod = gpa.include_right(&x).mul(&gpa.include_right(&y)).unwrap();
                assert!(xy.dist(&prod).unwrap() < 1e-12);
                let xy = gpa.include_left(&x.mul(&y).unwrap());
                let prod = gpa.include_left(&x).mul(&gpa.include_left(&y)).unwrap();
                assert!(xy.dist(&prod).unwrap() < 1e-12);
                assert!((x.mul(&y).unwrap().trace() - y.mul(&x).unwrap().trace()).norm() < 1e-12);
                assert!(x.adjoint().mul(&x).unwrap().trace().re > 0.0);
            }
        }
    }

    #[test]
    fn spherical_trace() {
        let g = builtin("E6").unwrap();
        let gpa = GraphPlanarAlgebra::new(&g);
        let d = gpa.modulus();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for sh in [Shading::Plus, Shading::Minus] {
            let x = random(&gpa.space(1, sh), &mut rng);
            let right = gpa.cap_right(&x).unwrap().trace() / d;
            let left = gpa.cap_left(&x).unwrap().trace() / d;
            assert!((right - x.trace()).norm() < 1e-12);
            assert!((left - x.trace()).norm() < 1e-12);
        }
    }

    #[test]
    fn gpa_towers_are_markov() {
        for name in ["A3", "D4", "E6"] {
            let gpa = GraphPlanarAlgebra::new(&builtin(name).unwrap());
            let t = gpa.as_markov_tower(5).unwrap();
            let r = verify_markov_axioms(&t, 1e-9);
            assert!(r.all_pass(), "{name}: {r:?}");
        }
    }

    #[test]
    fn compression_at_basepoint_recovers_path_tower() {
        let g = builtin("E6").unwrap();
        let gpa = GraphPlanarAlgebra::new(&g);
        let t = gpa.as_markov_tower(6).unwrap();
        let b = gpa.space(0, Shading::Plus).locate(g.basepoint(), &[]).unwrap().0;
        let p = AlgebraElement::central_projection(t.level(0), b);
        let comp = t.compress(&p).unwrap().tower;
        let path = crate::tower::build_tower(&g, 6).unwrap();
        for n in 0..=6 {
            let (a, b) = (comp.level(n), path.level(n));
            let mut x: Vec<(String, usize, f64)> =
                (0..a.block_count()).map(|k| (a.label(k).split('>').nth(1).unwrap().to_string(), a.size(k), a.weight(k))).collect();
            let mut y: Vec<(String, usize, f64)> =
                (0..b.block_count()).map(|k| (b.label(k).to_string(), b.size(k), b.weight(k))).collect();
            x.sort_by(|p, q| p.0.cmp(&q.0));
            y.sort_by(|p, q| p.0.cmp(&q.0));
            assert_eq!(x.len(), y.len());
            for (p, q) in x.iter().zip(&y) {
                assert_eq!((&p.0, p.1), (&q.0, q.1));
                assert!((p.2 - q.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_reverses_loops() {
        let g = builtin("A4").unwrap();
        let gpa = GraphPlanarAlgebra::new(&g);
        let s = gpa.space(2, Shading::Plus);
        for k in 0..s.dim() {
            let l = s.loop_at(k);
            let x = GPAElement::loop_indicator(&s, k).scale(C64::new(0.0, 1.0));
            let (b, i, j) = s.loops()[k];
            let r = s.loop_index(b, j, i);
            let coeffs = x.adjoint().coefficients();
            assert_eq!(coeffs[r], C64::new(0.0, -1.0));
            assert_eq!(s.loop_at(r).left, l.right);
        }
    }
}
