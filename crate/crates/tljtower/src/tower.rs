//! Markov towers in the path model, plus the derived towers obtained by
//! shifting, compressing and taking every k-th level.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{GraphShape, WeightedBipartiteGraph};
use crate::linalg::{c, cmul, projection_range, CMat};
use crate::multimatrix::{AlgebraElement, MultiMatrixAlgebra, Segment, UnitalInclusion};
use crate::sparse::{OwnerMap, SparseElem};

/// Threshold below which a block of a Jones projection counts as zero.
pub(crate) const SUPPORT_TOL: f64 = 1e-9;

/// Paths of a fixed length starting at the basepoint, grouped by end vertex.
#[derive(Clone, Debug)]
pub struct PathBasis {
    length: usize,
    vertices: Vec<usize>,
    paths: Vec<Vec<Vec<usize>>>,
    lookup: HashMap<Vec<usize>, (usize, usize)>,
}

impl PathBasis {
    fn root(graph: &WeightedBipartiteGraph) -> Self {
        let mut lookup = HashMap::new();
        lookup.insert(Vec::new(), (0, 0));
        PathBasis { length: 0, vertices: vec![graph.basepoint()], paths: vec![vec![Vec::new()]], lookup }
    }

    fn extend(&self, graph: &WeightedBipartiteGraph) -> Self {
        // Lexicographic order: walk the current paths in order and append
        // incident edges by increasing id.
        let mut ordered: Vec<(Vec<usize>, usize)> = Vec::new();
        for (p, end) in self.ordered() {
            for &e in graph.incident(end) {
                let mut q = p.clone();
                q.push(e);
                ordered.push((q, graph.edge(e).other(end)));
            }
        }
        ordered.sort();
        let mut ends: Vec<usize> = ordered.iter().map(|(_, v)| *v).collect();
        ends.sort_unstable();
        ends.dedup();
        let slot: HashMap<usize, usize> = ends.iter().enumerate().map(|(b, &v)| (v, b)).collect();
        let mut paths = vec![Vec::new(); ends.len()];
        let mut lookup = HashMap::new();
        for (p, v) in ordered {
            let b = slot[&v];
            lookup.insert(p.clone(), (b, paths[b].len()));
            paths[b].push(p);
        }
        PathBasis { length: self.length + 1, vertices: ends, paths, lookup }
    }

    /// All paths in lexicographic order with their end vertex.
    fn ordered(&self) -> Vec<(Vec<usize>, usize)> {
        let mut all: Vec<(Vec<usize>, usize)> = Vec::new();
        for (b, ps) in self.paths.iter().enumerate() {
            all.extend(ps.iter().map(|p| (p.clone(), self.vertices[b])));
        }
        all.sort();
        all
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Graph vertex of each block.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn block_of_vertex(&self, v: usize) -> Option<usize> {
        self.vertices.iter().position(|&w| w == v)
    }

    pub fn paths(&self, block: usize) -> &[Vec<usize>] {
        &self.paths[block]
    }

    /// Block and row of a path.
    pub fn locate(&self, path: &[usize]) -> Option<(usize, usize)> {
        self.lookup.get(path).copied()
    }

    pub fn len(&self) -> usize {
        self.lookup.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lookup.is_empty()
    }
}

#[derive(Default)]
struct Caches {
    composite: Mutex<HashMap<(usize, usize), Arc<UnitalInclusion>>>,
    owners: Mutex<HashMap<(usize, usize), Arc<OwnerMap>>>,
    jones: Mutex<HashMap<(usize, usize), Arc<SparseElem>>>,
    words: Mutex<HashMap<(Vec<usize>, usize), AlgebraElement>>,
}

/// Levels `M_0 ⊂ ... ⊂ M_N` with traces, inclusions and Jones projections
/// `e_1, ..., e_{N-1}` (`e_n ∈ M_{n+1}`).
pub struct MarkovTower {
    levels: Vec<Arc<MultiMatrixAlgebra>>,
    inclusions: Vec<Arc<UnitalInclusion>>,
    jones: Vec<AlgebraElement>,
    modulus: f64,
    graph: Option<Arc<WeightedBipartiteGraph>>,
    paths: Option<Vec<Arc<PathBasis>>>,
    caches: Caches,
}

impl Clone for MarkovTower {
    fn clone(&self) -> Self {
        MarkovTower {
            levels: self.levels.clone(),
            inclusions: self.inclusions.clone(),
            jones: self.jones.clone(),
            modulus: self.modulus,
            graph: self.graph.clone(),
            paths: self.paths.clone(),
            caches: Caches::default(),
        }
    }
}

impl std::fmt::Debug for MarkovTower {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarkovTower")
            .field("depth", &self.depth())
            .field("modulus", &self.modulus)
            .field("dims", &self.dims())
            .finish()
    }
}

impl MarkovTower {
    /// Assemble a tower from explicit data. Shapes are validated; the axioms
    /// are not (see [`crate::verify`]).
    pub fn new(
        levels: Vec<Arc<MultiMatrixAlgebra>>,
        inclusions: Vec<Arc<UnitalInclusion>>,
        jones: Vec<AlgebraElement>,
        modulus: f64,
    ) -> Result<Self> {
        if levels.len() < 3 {
            return Err(Error::Depth { have: levels.len().saturating_sub(1), need: 2 });
        }
        if inclusions.len() + 1 != levels.len() || jones.len() + 2 != levels.len() {
            return Err(Error::Shape("tower needs N inclusions and N-1 Jones projections".into()));
        }
        for (k, incl) in inclusions.iter().enumerate() {
            if !incl.lower().same_shape(&levels[k]) || !incl.upper().same_shape(&levels[k + 1]) {
                return Err(Error::Shape(format!("inclusion {k} does not connect levels {k} and {}", k + 1)));
            }
        }
        for (i, e) in jones.iter().enumerate() {
            if !e.parent().same_shape(&levels[i + 2]) {
                return Err(Error::Shape(format!("e_{} must live in M_{}", i + 1, i + 2)));
            }
        }
        if !(modulus > 0.0 && modulus.is_finite()) {
            return Err(Error::Invalid(format!("modulus must be positive, got {modulus}")));
        }
        Ok(MarkovTower { levels, inclusions, jones, modulus, graph: None, paths: None, caches: Caches::default() })
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    pub fn level(&self, k: usize) -> &Arc<MultiMatrixAlgebra> {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Arc<MultiMatrixAlgebra>] {
        &self.levels
    }

    /// The inclusion `M_k ⊂ M_{k+1}`.
    pub fn inclusion(&self, k: usize) -> &Arc<UnitalInclusion> {
        &self.inclusions[k]
    }

    /// The Jones projection `e_n ∈ M_{n+1}`, `1 ≤ n ≤ N-1`.
    pub fn jones(&self, n: usize) -> &AlgebraElement {
        &self.jones[n - 1]
    }

    pub fn graph(&self) -> Option<&Arc<WeightedBipartiteGraph>> {
        self.graph.as_ref()
    }

    pub fn paths(&self, k: usize) -> Option<&Arc<PathBasis>> {
        self.paths.as_ref().map(|p| &p[k])
    }

    /// Total dimension of each level.
    pub fn dims(&self) -> Vec<usize> {
        self.levels.iter().map(|a| a.dim()).collect()
    }

    pub fn is_connected(&self) -> bool {
        self.levels[0].sizes() == [1]
    }

    /// Composite inclusion `M_from ⊂ M_to`.
    pub fn composite(&self, from: usize, to: usize) -> Arc<UnitalInclusion> {
        assert!(from <= to && to <= self.depth(), "composite {from} -> {to} out of range");
        if to == from + 1 {
            return self.inclusions[from].clone();
        }
        if let Some(hit) = self.caches.composite.lock().unwrap().get(&(from, to)) {
            return hit.clone();
        }
        let incl = if from == to {
            Arc::new(UnitalInclusion::identity(&self.levels[from]))
        } else {
            let below = self.composite(from, to - 1);
            Arc::new(below.compose(&self.inclusions[to - 1]).expect("consecutive inclusions compose"))
        };
        self.caches.composite.lock().unwrap().insert((from, to), incl.clone());
        incl
    }

    pub fn owners(&self, from: usize, to: usize) -> Arc<OwnerMap> {
        if let Some(hit) = self.caches.owners.lock().unwrap().get(&(from, to)) {
            return hit.clone();
        }
        let map = Arc::new(OwnerMap::new(&self.composite(from, to)));
        self.caches.owners.lock().unwrap().insert((from, to), map.clone());
        map
    }

    /// Sparse image of `e_n` in `M_level`.
    pub fn jones_sparse(&self, n: usize, level: usize) -> Arc<SparseElem> {
        assert!(n >= 1 && n < self.depth() && level > n && level <= self.depth(), "e_{n} at level {level}");
        if let Some(hit) = self.caches.jones.lock().unwrap().get(&(n, level)) {
            return hit.clone();
        }
        let s = if level == n + 1 {
            SparseElem::from_dense(self.jones(n), 1e-15)
        } else {
            self.jones_sparse(n, level - 1).embed(&self.inclusions[level - 1])
        };
        let s = Arc::new(s);
        self.caches.jones.lock().unwrap().insert((n, level), s.clone());
        s
    }

    /// Dense image of `e_n` in `M_level`.
    pub fn jones_at(&self, n: usize, level: usize) -> AlgebraElement {
        self.jones_sparse(n, level).to_dense(&self.levels[level])
    }

    pub fn embed(&self, x: &AlgebraElement, from: usize, to: usize) -> AlgebraElement {
        if from == to {
            return x.clone();
        }
        self.composite(from, to).embed(x)
    }

    /// Trace-preserving conditional expectation `M_from → M_to` (`to ≤ from`).
    pub fn expect(&self, x: &AlgebraElement, from: usize, to: usize) -> AlgebraElement {
        if from == to {
            return x.clone();
        }
        self.composite(to, from).expect(x)
    }

    /// Blocks of `M_n` where `e_{n-1}` is nonzero (empty for `n < 2`).
    pub fn jones_support(&self, n: usize) -> Vec<usize> {
        if n < 2 {
            return Vec::new();
        }
        self.jones(n - 1).support(SUPPORT_TOL)
    }

    /// Blocks of `M_n` making up the new part `Y_n`: all of `M_0` and `M_1`,
    /// and the blocks outside the support of `e_{n-1}` above that.
    pub fn new_blocks(&self, n: usize) -> Vec<usize> {
        let supp = self.jones_support(n);
        (0..self.levels[n].block_count()).filter(|b| !supp.contains(b)).collect()
    }

    /// For each block `a` of `M_{n-2}`, the blocks `c` of `M_n` on which
    /// `ι²(z_a) e_{n-1}` is nonzero.
    pub fn reflection_targets(&self, n: usize) -> Vec<Vec<usize>> {
        let incl = self.composite(n - 2, n);
        let e = self.jones_sparse(n - 1, n);
        let mut out = vec![Vec::new(); self.levels[n - 2].block_count()];
        for s in incl.segments() {
            let hit = s.index.iter().any(|&r| !e.rows[s.upper][r].is_empty());
            if hit && !out[s.lower].contains(&s.upper) {
                out[s.lower].push(s.upper);
            }
        }
        for t in &mut out {
            t.sort_unstable();
        }
        out
    }

    /// A copy with the first `k` levels removed; `e'_n = e_{k+n}`.
    pub fn shift(&self, k: usize) -> Result<MarkovTower> {
        if k == 0 {
            return Ok(self.clone());
        }
        if k + 2 >= self.depth() {
            return Err(Error::Depth { have: self.depth(), need: k + 3 });
        }
        Ok(MarkovTower {
            levels: self.levels[k..].to_vec(),
            inclusions: self.inclusions[k..].to_vec(),
            jones: self.jones[k..].to_vec(),
            modulus: self.modulus,
            graph: self.graph.clone(),
            paths: self.paths.as_ref().map(|p| p[k..].to_vec()),
            caches: Caches::default(),
        })
    }

    /// Compression by a nonzero projection `p ∈ M_0`.
    pub fn compress(&self, p: &AlgebraElement) -> Result<Compression> {
        compress(self, p)
    }

    /// The tower `M_j ⊂ M_{j+k} ⊂ M_{j+2k} ⊂ ...` with cabled Jones projections.
    pub fn multistep(&self, j: usize, k: usize) -> Result<MarkovTower> {
        if k == 0 {
            return Err(Error::Invalid("multistep increment must be at least 1".into()));
        }
        if j + 2 * k > self.depth() {
            return Err(Error::Depth { have: self.depth(), need: j + 2 * k });
        }
        let count = (self.depth() - j) / k + 1;
        let level_ix: Vec<usize> = (0..count).map(|n| j + n * k).collect();
        let levels: Vec<_> = level_ix.iter().map(|&l| self.levels[l].clone()).collect();
        let inclusions: Vec<_> = level_ix.windows(2).map(|w| self.composite(w[0], w[1])).collect();
        let jones: Vec<_> = (1..count - 1).map(|n| self.cabled_jones(j + (n - 1) * k, k)).collect();
        let mut t = MarkovTower::new(levels, inclusions, jones, self.modulus.powi(k as i32))?;
        t.graph = self.graph.clone();
        t.paths = self.paths.as_ref().map(|p| level_ix.iter().map(|&l| p[l].clone()).collect());
        Ok(t)
    }

    /// `f^{J+k}_J ∈ M_{J+2k}` evaluated by the word formula
    /// `d^{k(k-1)} (e_{J+k}···e_{J+1})(e_{J+k+1}···e_{J+2})···(e_{J+2k-1}···e_{J+k})`.
    pub fn cabled_jones(&self, big_j: usize, k: usize) -> AlgebraElement {
        let level = big_j + 2 * k;
        let mut word = Vec::with_capacity(k * k);
        for m in 0..k {
            for i in (big_j + 1 + m..=big_j + k + m).rev() {
                word.push(i);
            }
        }
        let scale = self.modulus.powi((k * (k - 1)) as i32);
        self.jones_word(&word, level).scale_re(scale)
    }

    /// Product `e_{w_0} e_{w_1} ··· ∈ M_level` (identity for the empty word).
    pub fn jones_word(&self, word: &[usize], level: usize) -> AlgebraElement {
        let key = (word.to_vec(), level);
        if let Some(x) = self.caches.words.lock().unwrap().get(&key) {
            return x.clone();
        }
        let mut acc = AlgebraElement::identity(&self.levels[level]);
        for &i in word.iter().rev() {
            acc = self.jones_sparse(i, level).left_mul(&acc);
        }
        self.caches.words.lock().unwrap().insert(key, acc.clone());
        acc
    }

    /// JSON summary: per level block labels, sizes, trace weights and the
    /// inclusion matrices.
    pub fn summary_json(&self) -> serde_json::Value {
        let levels: Vec<_> = self
            .levels
            .iter()
            .enumerate()
            .map(|(k, a)| {
                json!({
                    "level": k,
                    "labels": a.labels(),
                    "sizes": a.sizes(),
                    "weights": a.weights(),
                    "dim": a.dim(),
                })
            })
            .collect();
        let incl: Vec<_> = self.inclusions.iter().map(|i| i.lambda().to_vec()).collect();
        json!({
            "modulus": self.modulus,
            "depth": self.depth(),
            "connected": self.is_connected(),
            "dims": self.dims(),
            "levels": levels,
            "inclusion_matrices": incl,
        })
    }

    /// Bratteli diagram in DOT, one rank per level, multiplicities as labels.
    pub fn bratteli_dot(&self) -> String {
        let mut s = String::from("digraph bratteli {\n  rankdir=BT;\n  node [shape=circle];\n");
        for (k, a) in self.levels.iter().enumerate() {
            let _ = write!(s, "  {{ rank=same;");
            for b in 0..a.block_count() {
                let _ = write!(s, " \"L{k}_{b}\" [label=\"{}\\n{}\"];", a.label(b), a.size(b));
            }
            s.push_str(" }\n");
        }
        for (k, incl) in self.inclusions.iter().enumerate() {
            for (b, row) in incl.lambda().iter().enumerate() {
                for (cb, &m) in row.iter().enumerate() {
                    if m == 1 {
                        let _ = writeln!(s, "  \"L{k}_{b}\" -> \"L{}_{cb}\" [arrowhead=none];", k + 1);
                    } else if m > 1 {
                        let _ = writeln!(s, "  \"L{k}_{b}\" -> \"L{}_{cb}\" [arrowhead=none, label=\"{m}\"];", k + 1);
                    }
                }
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Build the path-model tower of a pointed weighted graph to depth `N`.
///
/// `M_k` has one block per vertex reachable in `k` steps, with minimal
/// projections of trace `d^{-k} dim(v)`. With paths written `ξ'·a·ā`, the
/// Jones projection has entries `d^{-1} √(dim x dim y) / dim u` between
/// backtracking paths that share the prefix `ξ'`.
pub fn build_tower(graph: &WeightedBipartiteGraph, depth: usize) -> Result<MarkovTower> {
    if depth < 2 {
        return Err(Error::Depth { have: depth, need: 2 });
    }
    let d = graph.modulus();
    let mut bases = vec![PathBasis::root(graph)];
    for _ in 0..depth {
        let next = bases.last().unwrap().extend(graph);
        bases.push(next);
    }
    let levels: Vec<Arc<MultiMatrixAlgebra>> = bases
        .iter()
        .enumerate()
        .map(|(k, pb)| {
            let labels = pb.vertices.iter().map(|&v| graph.label(v).to_string()).collect();
            let sizes = pb.paths.iter().map(|p| p.len()).collect();
            let weights = pb.vertices.iter().map(|&v| d.powi(-(k as i32)) * graph.dim(v)).collect();
            MultiMatrixAlgebra::new(labels, sizes, weights, true).map(Arc::new)
        })
        .collect::<Result<_>>()?;

    let mut inclusions = Vec::with_capacity(depth);
    for k in 0..depth {
        let (lo, hi) = (&bases[k], &bases[k + 1]);
        let mut segs: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
        for (w, ps) in hi.paths.iter().enumerate() {
            for (r, p) in ps.iter().enumerate() {
                let (u, i) = lo.locate(&p[..p.len() - 1]).expect("prefix is a shorter path");
                let a = *p.last().unwrap();
                let seg = segs.entry((u, w, a)).or_insert_with(|| vec![usize::MAX; lo.paths[u].len()]);
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
        inclusions.push(Arc::new(UnitalInclusion::new(levels[k].clone(), levels[k + 1].clone(), segments)?));
    }

    let mut jones = Vec::with_capacity(depth - 1);
    for n in 1..depth {
        let top = &bases[n + 1];
        let mut blocks: Vec<CMat> = top.paths.iter().map(|p| CMat::zeros(p.len(), p.len())).collect();
        for (b, prefixes) in bases[n - 1].paths.iter().enumerate() {
            let u = bases[n - 1].vertices[b];
            let ub = top.block_of_vertex(u).expect("backtracking returns to u");
            for xi in prefixes {
                let mut rows = Vec::new();
                for &a in graph.incident(u) {
                    let x = graph.edge(a).other(u);
                    let mut p = xi.clone();
                    p.extend([a, a]);
                    let (_, r) = top.locate(&p).expect("backtracking path exists");
                    rows.push((r, (graph.dim(x) / (d * graph.dim(u))).sqrt()));
                }
                let m = &mut blocks[ub];
                for &(r, vr) in &rows {
                    for &(s, vs) in &rows {
                        m[(r, s)] += c(vr * vs);
                    }
                }
            }
        }
        jones.push(AlgebraElement::from_blocks(&levels[n + 1], blocks)?);
    }
    let mut t = MarkovTower::new(levels, inclusions, jones, d)?;
    t.graph = Some(Arc::new(graph.clone()));
    t.paths = Some(bases.into_iter().map(Arc::new).collect());
    Ok(t)
}

/// A compressed tower together with the isometries `W` realizing
/// `pM_np ≅ M'_n` blockwise as `x ↦ W* x W`.
#[derive(Clone, Debug)]
pub struct Compression {
    pub tower: MarkovTower,
    /// Original block index of each surviving block, per level.
    pub kept: Vec<Vec<usize>>,
    /// Per level and surviving block: columns spanning the range of `ι(p)`.
    pub isometries: Vec<Vec<CMat>>,
    pub trace_p: f64,
    /// When every column is a coordinate vector, the original row it picks.
    pub row_origin: Option<Vec<Vec<Vec<usize>>>>,
}

impl Compression {
    /// `W* x W` for `x ∈ M_level` of the original tower.
    pub fn compress_element(&self, level: usize, x: &AlgebraElement) -> AlgebraElement {
        let blocks = self.kept[level]
            .iter()
            .zip(&self.isometries[level])
            .map(|(&b, w)| cmul(&w.adjoint(), &cmul(x.block(b), w)))
            .collect();
        AlgebraElement::from_blocks(self.tower.level(level), blocks).expect("compressed shapes")
    }

    /// `W y W*` for `y` in the compressed level.
    pub fn expand_element(&self, original: &MarkovTower, level: usize, y: &AlgebraElement) -> AlgebraElement {
        let mut x = AlgebraElement::zero(original.level(level));
        for (k, (&b, w)) in self.kept[level].iter().zip(&self.isometries[level]).enumerate() {
            *x.block_mut(b) = cmul(w, &cmul(y.block(k), &w.adjoint()));
        }
        x
    }
}

struct Group {
    src: usize,
    rows: Vec<usize>,
}

fn compress(t: &MarkovTower, p: &AlgebraElement) -> Result<Compression> {
    if !p.parent().same_shape(t.level(0)) {
        return Err(Error::ParentMismatch);
    }
    let res = p.projection_residual();
    if res > 1e-9 {
        return Err(Error::NotProjection(res));
    }
    let trace_p = p.trace().re;
    if trace_p <= 1e-12 {
        return Err(Error::ZeroProjection);
    }
    let base = t.level(0);
    let mut coordinate = true;
    let ranges: Vec<CMat> = (0..base.block_count())
        .map(|b| {
            let m = p.block(b);
            let diagonal = (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].norm() < 1e-12));
            if diagonal {
                let keep: Vec<usize> = (0..m.nrows()).filter(|&i| m[(i, i)].re > 0.5).collect();
                let mut r = CMat::zeros(m.nrows(), keep.len());
                for (q, &i) in keep.iter().enumerate() {
                    r[(i, q)] = c(1.0);
                }
                r
            } else {
                coordinate = false;
                projection_range(m)
            }
        })
        .collect();

    let depth = t.depth();
    let mut groups: Vec<Vec<Group>> =
        (0..base.block_count()).map(|b| vec![Group { src: b, rows: (0..base.size(b)).collect() }]).collect();
    let mut kept = Vec::new();
    let mut isometries = Vec::new();
    let mut levels = Vec::new();
    let mut inclusions = Vec::new();
    let mut group_offsets: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut new_index: Vec<Vec<Option<usize>>> = Vec::new();
    let mut colpos: Vec<Vec<Vec<usize>>> = Vec::new();
    // Per level: for each original segment, the group index map lower -> upper.
    let mut seg_maps: Vec<Vec<Vec<usize>>> = Vec::new();

    for n in 0..=depth {
        let alg = t.level(n);
        let mut offsets = Vec::with_capacity(alg.block_count());
        let mut sizes = Vec::new();
        let mut keep_n = Vec::new();
        let mut index_n = vec![None; alg.block_count()];
        let mut ws = Vec::new();
        let mut colpos_n = Vec::with_capacity(alg.block_count());
        for cb in 0..alg.block_count() {
            let mut off = vec![0usize];
            for g in &groups[cb] {
                off.push(off.last().unwrap() + ranges[g.src].ncols());
            }
            let cols = *off.last().unwrap();
            if cols > 0 {
                let mut w = CMat::zeros(alg.size(cb), cols);
                for (gi, g) in groups[cb].iter().enumerate() {
                    let r = &ranges[g.src];
                    for q in 0..r.ncols() {
                        for (i, &row) in g.rows.iter().enumerate() {
                            w[(row, off[gi] + q)] = r[(i, q)];
                        }
                    }
                }
                // Order columns by their first nonzero row so that coordinate
                // projections keep the original row order.
                let lead = |q: usize| (0..w.nrows()).find(|&r| w[(r, q)].norm() > 1e-12).unwrap_or(usize::MAX);
                let mut order: Vec<usize> = (0..cols).collect();
                order.sort_by_key(|&q| (lead(q), q));
                let mut pos = vec![0; cols];
                let mut sorted = CMat::zeros(w.nrows(), cols);
                for (new, &old) in order.iter().enumerate() {
                    pos[old] = new;
                    sorted.set_column(new, &w.column(old));
                }
                index_n[cb] = Some(keep_n.len());
                keep_n.push(cb);
                sizes.push(cols);
                ws.push(sorted);
                colpos_n.push(pos);
            } else {
                colpos_n.push(Vec::new());
            }
            offsets.push(off);
        }
        let labels = keep_n.iter().map(|&b| alg.label(b).to_string()).collect();
        let weights = keep_n.iter().map(|&b| alg.weight(b) / trace_p).collect();
        levels.push(Arc::new(MultiMatrixAlgebra::new(labels, sizes, weights, true)?));
        kept.push(keep_n);
        isometries.push(ws);
        group_offsets.push(offsets);
        colpos.push(colpos_n);
        new_index.push(index_n);
        if n < depth {
            let incl = t.inclusion(n);
            let mut next: Vec<Vec<Group>> = (0..t.level(n + 1).block_count()).map(|_| Vec::new()).collect();
            let mut maps = Vec::with_capacity(incl.segments().len());
            for s in incl.segments() {
                let mut m = Vec::with_capacity(groups[s.lower].len());
                for g in &groups[s.lower] {
                    m.push(next[s.upper].len());
                    next[s.upper].push(Group { src: g.src, rows: g.rows.iter().map(|&r| s.index[r]).collect() });
                }
                maps.push(m);
            }
            seg_maps.push(maps);
            groups = next;
        }
    }

    for n in 0..depth {
        let incl = t.inclusion(n);
        let mut segments = Vec::new();
        for (si, s) in incl.segments().iter().enumerate() {
            let (Some(lo), Some(hi)) = (new_index[n][s.lower], new_index[n + 1][s.upper]) else {
                continue;
            };
            let lo_off = &group_offsets[n][s.lower];
            let hi_off = &group_offsets[n + 1][s.upper];
            let mut index = vec![0; levels[n].size(lo)];
            for (gi, &gj) in seg_maps[n][si].iter().enumerate() {
                for q in 0..lo_off[gi + 1] - lo_off[gi] {
                    index[colpos[n][s.lower][lo_off[gi] + q]] = colpos[n + 1][s.upper][hi_off[gj] + q];
                }
            }
            segments.push(Segment { lower: lo, upper: hi, copy: s.copy, index });
        }
        inclusions.push(Arc::new(UnitalInclusion::new(levels[n].clone(), levels[n + 1].clone(), segments)?));
    }

    let mut jones = Vec::with_capacity(depth - 1);
    for n in 1..depth {
        let e = t.jones(n);
        let blocks = kept[n + 1]
            .iter()
            .zip(&isometries[n + 1])
            .map(|(&b, w)| cmul(&w.adjoint(), &cmul(e.block(b), w)))
            .collect();
        jones.push(AlgebraElement::from_blocks(&levels[n + 1], blocks)?);
    }
    let row_origin = coordinate.then(|| {
        isometries
            .iter()
            .map(|ws| {
                ws.iter()
                    .map(|w| {
                        (0..w.ncols())
                            .map(|q| (0..w.nrows()).find(|&r| w[(r, q)].re > 0.5).expect("coordinate column"))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    });
    let mut tower = MarkovTower::new(levels, inclusions, jones, t.modulus)?;
    tower.graph = t.graph.clone();
    Ok(Compression { tower, kept, isometries, trace_p, row_origin })
}

/// Principal graph read off a tower: the new blocks at each level, joined
/// by the Bratteli multiplicities between consecutive levels.
#[derive(Clone, Debug)]
pub struct PrincipalGraph {
    pub graph: WeightedBipartiteGraph,
    /// `(level, block)` of each vertex, in the graph's vertex order.
    pub origin: Vec<(usize, usize)>,
    /// True when some `Y_n` with `2 ≤ n ≤ N` vanishes, so no vertex can
    /// appear above the built depth.
    pub certified: bool,
}

/// Finite depth with a reflection certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDepth {
    pub depth: usize,
    /// Block of `M_n` that each block of `M_{n-2}` reflects to.
    pub reflection: Vec<usize>,
    /// The Bratteli step `M_{n-1} ⊂ M_n` equals the reflected step `M_{n-2} ⊂ M_{n-1}`.
    pub lambda_matches: bool,
}

pub fn principal_graph(t: &MarkovTower) -> Result<PrincipalGraph> {
    if !t.is_connected() {
        return Err(Error::Invalid("principal graph needs a connected tower (M_0 one-dimensional)".into()));
    }
    let fd = finite_depth(t);
    let top = fd.as_ref().map_or(t.depth(), |f| f.depth - 1);
    let mut origin = Vec::new();
    let mut raw_labels = Vec::new();
    for k in 0..=top {
        for b in t.new_blocks(k) {
            origin.push((k, b));
            raw_labels.push(t.level(k).label(b).to_string());
        }
    }
    let labels: Vec<String> = raw_labels
        .iter()
        .zip(&origin)
        .map(|(l, &(k, _))| {
            if raw_labels.iter().filter(|m| *m == l).count() > 1 {
                format!("{l}@{k}")
            } else {
                l.clone()
            }
        })
        .collect();
    let d = t.modulus();
    let mut shape = GraphShape { even: Vec::new(), odd: Vec::new(), edges: Vec::new(), basepoint: labels[0].clone() };
    let mut dims = BTreeMap::new();
    for (v, &(k, b)) in origin.iter().enumerate() {
        if k % 2 == 0 {
            shape.even.push(labels[v].clone());
        } else {
            shape.odd.push(labels[v].clone());
        }
        dims.insert(labels[v].clone(), d.powi(k as i32) * t.level(k).weight(b));
    }
    for (v, &(k, b)) in origin.iter().enumerate() {
        for (w, &(k2, b2)) in origin.iter().enumerate() {
            if k2 == k + 1 {
                let m = t.inclusion(k).lambda()[b][b2];
                if m > 0 {
                    let (ev, od) = if k % 2 == 0 { (v, w) } else { (w, v) };
                    shape.edges.push((labels[ev].clone(), labels[od].clone(), m));
                }
            }
        }
    }
    let graph = WeightedBipartiteGraph::with_weights(&shape, &dims, d)?;
    Ok(PrincipalGraph { graph, origin, certified: fd.is_some() })
}

/// Least `n ≥ 2` with `Y_n = 0` within the built depth.
pub fn finite_depth(t: &MarkovTower) -> Option<FiniteDepth> {
    let n = (2..=t.depth()).find(|&n| t.new_blocks(n).is_empty())?;
    let targets = t.reflection_targets(n);
    let bijective = targets.iter().all(|v| v.len() == 1) && {
        let mut all: Vec<usize> = targets.iter().map(|v| v[0]).collect();
        all.sort_unstable();
        all.dedup();
        all.len() == targets.len() && all.len() == t.level(n).block_count()
    };
    let reflection: Vec<usize> = targets.iter().map(|v| v.first().copied().unwrap_or(usize::MAX)).collect();
    let lambda_matches = bijective && {
        let lo = t.inclusion(n - 2).lambda();
        let hi = t.inclusion(n - 1).lambda();
        (0..lo.len()).all(|a| (0..hi.len()).all(|b| hi[b][reflection[a]] == lo[a][b]))
    };
    Some(FiniteDepth { depth: n, reflection, lambda_matches })
}

/// Graphviz rendering of a principal graph with dimension annotations.
pub fn principal_dot(pg: &PrincipalGraph) -> String {
    pg.graph.to_dot()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::builtin;

    #[test]
    fn a3_dimensions_and_trace() {
        let t = build_tower(&builtin("A3").unwrap(), 4).unwrap();
        assert_eq!(t.dims(), vec![1, 1, 2, 4, 8]);
        let e2 = t.jones(2);
        assert!((e2.trace().re - 0.5).abs() < 1e-12);
        for n in 1..4 {
            assert!(t.jones(n).projection_residual() < 1e-12);
        }
        // Block at v2 of M_2 has weight d^{-2} dim(v2) = 1/2.
        let b = t.level(2).block_index("v2").unwrap();
        let z = AlgebraElement::central_projection(t.level(2), b);
        assert!((z.trace().re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn a2_is_trivial() {
        let t = build_tower(&builtin("A2").unwrap(), 5).unwrap();
        assert!(t.dims().iter().all(|&d| d == 1));
        for n in 1..5 {
            assert!(t.jones(n).dist(&AlgebraElement::identity(t.level(n + 1))).unwrap() < 1e-12);
        }
    }

    #[test]
    fn finite_depths() {
        for (g, n, want) in [("A3", 6, 3), ("A2", 4, 2), ("E6", 8, 5)] {
            let t = build_tower(&builtin(g).unwrap(), n).unwrap();
            let fd = finite_depth(&t).unwrap();
            assert_eq!(fd.depth, want, "{g}");
            assert!(fd.lambda_matches, "{g}");
        }
        let t = build_tower(&builtin("E6").unwrap(), 4).unwrap();
        assert!(finite_depth(&t).is_none());
    }

    #[test]
    fn principal_graph_round_trip() {
        for g in ["A2", "A3", "A4", "D4", "E6"] {
            let graph = builtin(g).unwrap();
            let t = build_tower(&graph, 2 * graph.diameter() + 2).unwrap();
            let pg = principal_graph(&t).unwrap();
            assert!(pg.certified);
            assert!(pg.graph.is_isomorphic(&graph, 1e-9), "{g}");
        }
    }

    #[test]
    fn shift_and_compress_identity() {
        let t = build_tower(&builtin("A3").unwrap(), 6).unwrap();
        assert_eq!(t.shift(0).unwrap().dims(), t.dims());
        let s = t.shift(2).unwrap();
        assert_eq!(s.dims(), t.dims()[2..].to_vec());
        assert!(t.shift(4).is_err());
        let one = AlgebraElement::identity(t.level(0));
        let cmp = t.compress(&one).unwrap();
        assert_eq!(cmp.tower.dims(), t.dims());
        for n in 1..6 {
            assert!(cmp.tower.jones(n).dist(t.jones(n)).unwrap() < 1e-15);
        }
    }

    #[test]
    fn compress_at_v2_is_a3_pointed_at_v2() {
        let g = builtin("A3").unwrap();
        let t = build_tower(&g, 8).unwrap().shift(2).unwrap();
        let b = t.level(0).block_index("v2").unwrap();
        let p = AlgebraElement::matrix_unit(t.level(0), b, 0, 0);
        let cmp = t.compress(&p).unwrap();
        assert!(cmp.tower.is_connected());
        let rebuilt = build_tower(&g.with_basepoint(g.index_of("v2").unwrap()).unwrap(), 6).unwrap();
        assert_eq!(cmp.tower.dims(), rebuilt.dims());
        let pg = principal_graph(&cmp.tower).unwrap();
        assert!(pg.graph.is_isomorphic(&rebuilt.graph().unwrap(), 1e-9));
        assert_eq!(pg.graph.label(pg.graph.basepoint()), "v2");
    }

    #[test]
    fn multistep_k1_is_shift() {
        let t = build_tower(&builtin("A3").unwrap(), 6).unwrap();
        let m = t.multistep(1, 1).unwrap();
        let s = t.shift(1).unwrap();
        assert_eq!(m.dims(), s.dims());
        for n in 1..m.depth() {
            assert!(m.jones(n).dist(s.jones(n)).unwrap() < 1e-12);
        }
    }
}
