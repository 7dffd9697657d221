//! Finite direct sums of matrix algebras with trace weights, their elements,
//! unital inclusions and conditional expectations.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::{self, c, cmul, CMat, C64};
use crate::report::Report;

/// Tolerance used to decide whether a block of an element vanishes.
pub const ZERO_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiMatrixAlgebra {
    labels: Vec<String>,
    sizes: Vec<usize>,
    weights: Vec<f64>,
    normalized: bool,
}

impl MultiMatrixAlgebra {
    /// `weights[b]` is the trace of a minimal projection of block `b`. When
    /// `normalized` is set, `sum_b weights[b] * sizes[b]` must equal 1.
    pub fn new(labels: Vec<String>, sizes: Vec<usize>, weights: Vec<f64>, normalized: bool) -> Result<Self> {
        if labels.len() != sizes.len() || labels.len() != weights.len() {
            return Err(Error::Shape("labels, sizes and weights differ in length".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Schema(format!("duplicate block label `{l}`")));
            }
        }
        if let Some(b) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Shape(format!("block `{}` has size 0", labels[b])));
        }
        if let Some(b) = weights.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Schema(format!("block `{}` has non-positive weight {}", labels[b], weights[b])));
        }
        let alg = MultiMatrixAlgebra { labels, sizes, weights, normalized };
        if normalized && (alg.total_trace() - 1.0).abs() > 1e-9 {
            return Err(Error::Schema(format!("trace of the unit is {} rather than 1", alg.total_trace())));
        }
        Ok(alg)
    }

    pub fn into_arc(self) -> Arc<Self> {
        Arc::new(self)
    }

    pub fn block_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, b: usize) -> usize {
        self.sizes[b]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn weight(&self, b: usize) -> f64 {
        self.weights[b]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self, b: usize) -> &str {
        &self.labels[b]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Vector-space dimension `sum_b size(b)^2`.
    pub fn dim(&self) -> usize {
        self.sizes.iter().map(|s| s * s).sum()
    }

    pub fn max_block(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// `sum_b weight(b) * size(b)`, the trace of the unit.
    pub fn total_trace(&self) -> f64 {
        self.sizes.iter().zip(&self.weights).map(|(&s, &w)| s as f64 * w).sum()
    }

    /// Same block labels and sizes (weights may differ).
    pub fn same_shape(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.labels == other.labels
    }

    /// Copy with weights scaled by `s`.
    pub fn rescaled(&self, s: f64, normalized: bool) -> Result<Self> {
        Self::new(self.labels.clone(), self.sizes.clone(), self.weights.iter().map(|w| w * s).collect(), normalized)
    }
}

impl fmt::Display for MultiMatrixAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .labels
            .iter()
            .zip(&self.sizes)
            .zip(&self.weights)
            .map(|((l, s), w)| format!("{l}:M{s}(t={w:.6})"))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Element of a multi-matrix algebra: one complex matrix per block.
#[derive(Clone, Debug)]
pub struct AlgebraElement {
    parent: Arc<MultiMatrixAlgebra>,
    blocks: Vec<CMat>,
}

impl AlgebraElement {
    pub fn zero(alg: &Arc<MultiMatrixAlgebra>) -> Self {
        let blocks = alg.sizes.iter().map(|&s| CMat::zeros(s, s)).collect();
        AlgebraElement { parent: alg.clone(), blocks }
    }

    pub fn identity(alg: &Arc<MultiMatrixAlgebra>) -> Self {
        let blocks = alg.sizes.iter().map(|&s| CMat::identity(s, s)).collect();
        AlgebraElement { parent: alg.clone(), blocks }
    }

    pub fn matrix_unit(alg: &Arc<MultiMatrixAlgebra>, b: usize, i: usize, j: usize) -> Self {
        let mut x = Self::zero(alg);
        x.blocks[b][(i, j)] = c(1.0);
        x
    }

    /// Unit of block `b` (a minimal central projection).
    pub fn central_projection(alg: &Arc<MultiMatrixAlgebra>, b: usize) -> Self {
        let mut x = Self::zero(alg);
        x.blocks[b] = CMat::identity(alg.sizes[b], alg.sizes[b]);
        x
    }

    pub fn from_blocks(alg: &Arc<MultiMatrixAlgebra>, blocks: Vec<CMat>) -> Result<Self> {
        if blocks.len() != alg.block_count() {
            return Err(Error::Shape(format!("{} blocks given, {} expected", blocks.len(), alg.block_count())));
        }
        for (b, m) in blocks.iter().enumerate() {
            if m.nrows() != alg.sizes[b] || m.ncols() != alg.sizes[b] {
                return Err(Error::Shape(format!(
                    "block {b} is {}x{}, expected size {}",
                    m.nrows(),
                    m.ncols(),
                    alg.sizes[b]
                )));
            }
        }
        Ok(AlgebraElement { parent: alg.clone(), blocks })
    }

    /// Real Gaussian entries.
    pub fn random(alg: &Arc<MultiMatrixAlgebra>, rng: &mut impl Rng) -> Self {
        let blocks = alg
            .sizes
            .iter()
            .map(|&s| CMat::from_fn(s, s, |_, _| c(rng.sample::<f64, _>(StandardNormal))))
            .collect();
        AlgebraElement { parent: alg.clone(), blocks }
    }

    /// Complex Gaussian entries.
    pub fn random_complex(alg: &Arc<MultiMatrixAlgebra>, rng: &mut impl Rng) -> Self {
        let blocks = alg
            .sizes
            .iter()
            .map(|&s| {
                CMat::from_fn(s, s, |_, _| {
                    C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
                })
            })
            .collect();
        AlgebraElement { parent: alg.clone(), blocks }
    }

    pub fn parent(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.parent
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &CMat {
        &self.blocks[b]
    }

    pub fn block_mut(&mut self, b: usize) -> &mut CMat {
        &mut self.blocks[b]
    }

    pub fn into_blocks(self) -> Vec<CMat> {
        self.blocks
    }

    fn check_parent(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.parent, &other.parent) || self.parent.same_shape(&other.parent) {
            Ok(())
        } else {
            Err(Error::ParentMismatch)
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_parent(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect();
        Ok(AlgebraElement { parent: self.parent.clone(), blocks })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_parent(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect();
        Ok(AlgebraElement { parent: self.parent.clone(), blocks })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_parent(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| cmul(a, b)).collect();
        Ok(AlgebraElement { parent: self.parent.clone(), blocks })
    }

    pub fn scale(&self, s: C64) -> Self {
        AlgebraElement { parent: self.parent.clone(), blocks: self.blocks.iter().map(|m| m * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(c(s))
    }

    pub fn adjoint(&self) -> Self {
        AlgebraElement { parent: self.parent.clone(), blocks: self.blocks.iter().map(|m| m.adjoint()).collect() }
    }

    /// `sum_b weight(b) * Tr(x_b)`.
    pub fn trace(&self) -> C64 {
        self.blocks
            .iter()
            .zip(&self.parent.weights)
            .map(|(m, &w)| m.trace() * w)
            .fold(C64::new(0.0, 0.0), |a, b| a + b)
    }

    /// Trace inner product `<x, y> = tr(y* x)`.
    pub fn inner(&self, y: &Self) -> Result<C64> {
        self.check_parent(y)?;
        let mut s = C64::new(0.0, 0.0);
        for (b, (xb, yb)) in self.blocks.iter().zip(&y.blocks).enumerate() {
            let mut t = C64::new(0.0, 0.0);
            for (p, q) in xb.iter().zip(yb.iter()) {
                t += q.conj() * p;
            }
            s += t * self.parent.weights[b];
        }
        Ok(s)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(linalg::max_abs).fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
    }

    /// Largest entrywise difference.
    pub fn dist(&self, other: &Self) -> Result<f64> {
        Ok(self.try_sub(other)?.max_abs())
    }

    /// `max(|p^2 - p|, |p* - p|)`.
    pub fn projection_residual(&self) -> f64 {
        let sq = self.try_mul(self).expect("same parent");
        sq.dist(self).unwrap().max(self.adjoint().dist(self).unwrap())
    }

    pub fn is_real(&self) -> bool {
        self.blocks.iter().all(linalg::is_real)
    }

    /// Blocks in which the element has an entry above `tol`.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        (0..self.blocks.len()).filter(|&b| linalg::max_abs(&self.blocks[b]) > tol).collect()
    }

    /// JSON dump: per block, a list of rows of `[re, im]` pairs.
    pub fn to_json(&self) -> serde_json::Value {
        let blocks: Vec<serde_json::Value> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(b, m)| {
                let rows: Vec<Vec<[f64; 2]>> =
                    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
                json!({"label": self.parent.labels[b], "entries": rows})
            })
            .collect();
        json!({ "blocks": blocks })
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $f:ident) => {
        impl $tr<&AlgebraElement> for &AlgebraElement {
            type Output = AlgebraElement;
            /// Panics when the operands live in different algebras; use the `try_` form to handle that case.
            fn $m(self, rhs: &AlgebraElement) -> AlgebraElement {
                self.$f(rhs).expect("operands must share a parent algebra")
            }
        }
        impl $tr<AlgebraElement> for AlgebraElement {
            type Output = AlgebraElement;
            fn $m(self, rhs: AlgebraElement) -> AlgebraElement {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&AlgebraElement> for AlgebraElement {
            type Output = AlgebraElement;
            fn $m(self, rhs: &AlgebraElement) -> AlgebraElement {
                (&self).$m(rhs)
            }
        }
        impl $tr<AlgebraElement> for &AlgebraElement {
            type Output = AlgebraElement;
            fn $m(self, rhs: AlgebraElement) -> AlgebraElement {
                self.$m(&rhs)
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

impl Neg for &AlgebraElement {
    type Output = AlgebraElement;
    fn neg(self) -> AlgebraElement {
        self.scale_re(-1.0)
    }
}

impl Neg for AlgebraElement {
    type Output = AlgebraElement;
    fn neg(self) -> AlgebraElement {
        self.scale_re(-1.0)
    }
}

impl Mul<f64> for &AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, s: f64) -> AlgebraElement {
        self.scale_re(s)
    }
}

impl Mul<f64> for AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, s: f64) -> AlgebraElement {
        self.scale_re(s)
    }
}

/// One copy of a lower block inside an upper block: lower row `i` sits at
/// upper row `index[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub lower: usize,
    pub upper: usize,
    pub copy: usize,
    pub index: Vec<usize>,
}

impl Segment {
    fn contiguous_start(&self) -> Option<usize> {
        let s = *self.index.first()?;
        self.index.iter().enumerate().all(|(k, &i)| i == s + k).then_some(s)
    }
}

/// Unital inclusion of multi-matrix algebras realized by segments.
#[derive(Clone, Debug)]
pub struct UnitalInclusion {
    lower: Arc<MultiMatrixAlgebra>,
    upper: Arc<MultiMatrixAlgebra>,
    segments: Vec<Segment>,
    lambda: Vec<Vec<usize>>,
    by_lower: Vec<Vec<usize>>,
}

impl UnitalInclusion {
    /// Validates that the segments tile every upper block exactly once.
    pub fn new(lower: Arc<MultiMatrixAlgebra>, upper: Arc<MultiMatrixAlgebra>, mut segments: Vec<Segment>) -> Result<Self> {
        let mut covered: Vec<Vec<bool>> = upper.sizes.iter().map(|&s| vec![false; s]).collect();
        let mut lambda = vec![vec![0usize; upper.block_count()]; lower.block_count()];
        for s in &segments {
            if s.lower >= lower.block_count() || s.upper >= upper.block_count() {
                return Err(Error::Shape("segment refers to a missing block".into()));
            }
            if s.index.len() != lower.sizes[s.lower] {
                return Err(Error::Shape("segment length differs from the lower block size".into()));
            }
            for &i in &s.index {
                if i >= upper.sizes[s.upper] || covered[s.upper][i] {
                    return Err(Error::Shape(format!("upper row {i} of block {} covered twice", s.upper)));
                }
                covered[s.upper][i] = true;
            }
            lambda[s.lower][s.upper] += 1;
        }
        if let Some(b) = covered.iter().position(|rows| rows.iter().any(|x| !x)) {
            return Err(Error::Shape(format!("inclusion is not unital: block `{}` not covered", upper.labels[b])));
        }
        segments.sort_by_key(|s| (s.lower, s.upper, s.copy));
        let mut by_lower = vec![Vec::new(); lower.block_count()];
        for (k, s) in segments.iter().enumerate() {
            by_lower[s.lower].push(k);
        }
        Ok(UnitalInclusion { lower, upper, segments, lambda, by_lower })
    }

    /// Canonical realization of an inclusion matrix: inside each upper block
    /// the copies are stacked in order of (lower block, copy).
    pub fn from_lambda(lower: Arc<MultiMatrixAlgebra>, upper: Arc<MultiMatrixAlgebra>, lambda: &[Vec<usize>]) -> Result<Self> {
        let mut segments = Vec::new();
        for cb in 0..upper.block_count() {
            let mut offset = 0;
            for b in 0..lower.block_count() {
                for copy in 0..lambda[b][cb] {
                    let s = lower.sizes[b];
                    segments.push(Segment { lower: b, upper: cb, copy, index: (offset..offset + s).collect() });
                    offset += s;
                }
            }
            if offset != upper.sizes[cb] {
                return Err(Error::Shape(format!("inclusion matrix does not match size of block `{}`", upper.labels[cb])));
            }
        }
        Self::new(lower, upper, segments)
    }

    pub fn lower(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.lower
    }

    pub fn upper(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.upper
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Indices (into [`Self::segments`]) of the segments leaving lower block `b`.
    pub fn segments_from(&self, b: usize) -> &[usize] {
        &self.by_lower[b]
    }

    /// Inclusion matrix (rows: lower blocks, columns: upper blocks).
    pub fn lambda(&self) -> &[Vec<usize>] {
        &self.lambda
    }

    /// Replace the algebras by ones of identical shape (e.g. with other weights).
    pub fn with_algebras(&self, lower: Arc<MultiMatrixAlgebra>, upper: Arc<MultiMatrixAlgebra>) -> Result<Self> {
        if !lower.same_shape(&self.lower) || !upper.same_shape(&self.upper) {
            return Err(Error::Shape("replacement algebras have a different shape".into()));
        }
        Ok(UnitalInclusion {
            lower,
            upper,
            segments: self.segments.clone(),
            lambda: self.lambda.clone(),
            by_lower: self.by_lower.clone(),
        })
    }

    pub fn embed(&self, x: &AlgebraElement) -> AlgebraElement {
        assert!(x.parent.same_shape(&self.lower), "element is not in the lower algebra");
        let mut y = AlgebraElement::zero(&self.upper);
        for s in &self.segments {
            let xb = &x.blocks[s.lower];
            let yb = &mut y.blocks[s.upper];
            if let Some(st) = s.contiguous_start() {
                let n = s.index.len();
                yb.view_mut((st, st), (n, n)).copy_from(xb);
            } else {
                for (i, &ii) in s.index.iter().enumerate() {
                    for (j, &jj) in s.index.iter().enumerate() {
                        yb[(ii, jj)] = xb[(i, j)];
                    }
                }
            }
        }
        y
    }

    /// Trace-preserving conditional expectation onto the lower algebra,
    /// computed as the orthogonal projection for the upper trace.
    pub fn expect(&self, y: &AlgebraElement) -> AlgebraElement {
        assert!(y.parent.same_shape(&self.upper), "element is not in the upper algebra");
        let mut x = AlgebraElement::zero(&self.lower);
        let mut norm = vec![0.0; self.lower.block_count()];
        for s in &self.segments {
            let t = self.upper.weights[s.upper];
            norm[s.lower] += t;
            let yb = &y.blocks[s.upper];
            let xb = &mut x.blocks[s.lower];
            if let Some(st) = s.contiguous_start() {
                let n = s.index.len();
                *xb += yb.view((st, st), (n, n)) * c(t);
            } else {
                for (i, &ii) in s.index.iter().enumerate() {
                    for (j, &jj) in s.index.iter().enumerate() {
                        xb[(i, j)] += yb[(ii, jj)] * t;
                    }
                }
            }
        }
        for (b, n) in norm.iter().enumerate() {
            x.blocks[b] /= c(*n);
        }
        x
    }

    /// `self: A -> B` followed by `next: B -> C`. Composite copies are
    /// numbered in order of (first segment, second segment).
    pub fn compose(&self, next: &UnitalInclusion) -> Result<UnitalInclusion> {
        if !self.upper.same_shape(&next.lower) {
            return Err(Error::Shape("inclusions are not composable".into()));
        }
        let mut segs: Vec<Segment> = Vec::new();
        for s1 in &self.segments {
            for s2 in next.segments.iter().filter(|s| s.lower == s1.upper) {
                segs.push(Segment {
                    lower: s1.lower,
                    upper: s2.upper,
                    copy: 0,
                    index: s1.index.iter().map(|&i| s2.index[i]).collect(),
                });
            }
        }
        // Number copies within each (lower, upper) pair in enumeration order.
        let mut counter = std::collections::HashMap::new();
        for s in segs.iter_mut() {
            let k = counter.entry((s.lower, s.upper)).or_insert(0usize);
            s.copy = *k;
            *k += 1;
        }
        UnitalInclusion::new(self.lower.clone(), next.upper.clone(), segs)
    }

    /// Identity inclusion of an algebra into itself.
    pub fn identity(alg: &Arc<MultiMatrixAlgebra>) -> Self {
        let segs = (0..alg.block_count())
            .map(|b| Segment { lower: b, upper: b, copy: 0, index: (0..alg.sizes[b]).collect() })
            .collect();
        UnitalInclusion::new(alg.clone(), alg.clone(), segs).expect("identity inclusion is valid")
    }

    /// `max_b |t_b - sum_c Lambda_bc t_c|`.
    pub fn trace_compatibility_residual(&self) -> f64 {
        (0..self.lower.block_count())
            .map(|b| {
                let s: f64 = (0..self.upper.block_count()).map(|cb| self.lambda[b][cb] as f64 * self.upper.weights[cb]).sum();
                (self.lower.weights[b] - s).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Unitality, trace compatibility and multiplicativity on matrix units.
    pub fn verify(&self, tol: f64) -> Report {
        let mut r = Report::new("unital inclusion");
        let one = self.embed(&AlgebraElement::identity(&self.lower));
        r.push("unitality", "Inclusion", one.dist(&AlgebraElement::identity(&self.upper)).unwrap(), tol);
        r.push("trace compatibility", "Inclusion", self.trace_compatibility_residual(), tol);
        // Products of embedded matrix units: check on one unit row per block
        // pair, which exercises every segment.
        let mut worst: f64 = 0.0;
        for b in 0..self.lower.block_count() {
            let s = self.lower.sizes[b];
            for i in 0..s {
                let u = AlgebraElement::matrix_unit(&self.lower, b, i, 0);
                let v = AlgebraElement::matrix_unit(&self.lower, b, 0, s - 1);
                let lhs = &self.embed(&u) * &self.embed(&v);
                let rhs = self.embed(&(&u * &v));
                worst = worst.max(lhs.dist(&rhs).unwrap());
            }
        }
        r.push("multiplicativity on matrix units", "Inclusion", worst, tol);
        r
    }

    /// Orthonormal (for the upper trace) basis of the relative commutant of
    /// the embedded lower algebra: for each upper block and each lower block
    /// with copies `p, q`, the element `sum_i E_{index_p(i), index_q(i)}`.
    pub fn relative_commutant_basis(&self) -> Vec<AlgebraElement> {
        let mut out = Vec::new();
        for cb in 0..self.upper.block_count() {
            for b in 0..self.lower.block_count() {
                let copies: Vec<&Segment> = self.segments.iter().filter(|s| s.upper == cb && s.lower == b).collect();
                let scale = 1.0 / (self.upper.weights[cb] * self.lower.sizes[b] as f64).sqrt();
                for p in &copies {
                    for q in &copies {
                        let mut x = AlgebraElement::zero(&self.upper);
                        for (&i, &j) in p.index.iter().zip(&q.index) {
                            x.blocks[cb][(i, j)] = c(scale);
                        }
                        out.push(x);
                    }
                }
            }
        }
        out
    }

    /// Dimension of the relative commutant, `sum Lambda_bc^2`.
    pub fn relative_commutant_dim(&self) -> usize {
        self.lambda.iter().flatten().map(|m| m * m).sum()
    }
}

pub fn conditional_expectation(incl: &UnitalInclusion, x: &AlgebraElement) -> AlgebraElement {
    incl.expect(x)
}

/// Basis, orthonormal for the trace inner product, of the commutant of
/// `generators` inside `ambient`. Computed blockwise as the null space of the
/// stacked commutator maps.
pub fn relative_commutant(ambient: &Arc<MultiMatrixAlgebra>, generators: &[AlgebraElement]) -> Result<Vec<AlgebraElement>> {
    for g in generators {
        if !g.parent.same_shape(ambient) {
            return Err(Error::ParentMismatch);
        }
    }
    let mut out = Vec::new();
    for b in 0..ambient.block_count() {
        let s = ambient.sizes[b];
        let scale = 1.0 / ambient.weights[b].sqrt();
        let vectors: CMat = if generators.is_empty() {
            CMat::identity(s * s, s * s)
        } else {
            // Column-major vec: vec(XG - GX) = (G^T (x) I - I (x) G) vec(X).
            let id = CMat::identity(s, s);
            let mut stacked = CMat::zeros(generators.len() * s * s, s * s);
            for (k, g) in generators.iter().enumerate() {
                let gb = &g.blocks[b];
                let m = gb.transpose().kronecker(&id) - id.kronecker(gb);
                stacked.view_mut((k * s * s, 0), (s * s, s * s)).copy_from(&m);
            }
            linalg::nullspace(&stacked, 1e-10)
        };
        for k in 0..vectors.ncols() {
            let mut x = AlgebraElement::zero(ambient);
            for j in 0..s {
                for i in 0..s {
                    x.blocks[b][(i, j)] = vectors[(j * s + i, k)] * scale;
                }
            }
            out.push(x);
        }
    }
    Ok(out)
}

/// Smallest central projection dominating `p`: the unit of every block where
/// `p` is nonzero.
pub fn central_support(p: &AlgebraElement) -> Result<AlgebraElement> {
    let res = p.projection_residual();
    if res > 1e-8 {
        return Err(Error::NotProjection(res));
    }
    let mut z = AlgebraElement::zero(&p.parent);
    for b in p.support(ZERO_TOL) {
        z.blocks[b] = CMat::identity(p.parent.sizes[b], p.parent.sizes[b]);
    }
    Ok(z)
}

/// Basis of the two-sided ideal generated by `s`: the matrix units of every
/// block on which some element of `s` is nonzero.
pub fn two_sided_ideal_span(alg: &Arc<MultiMatrixAlgebra>, s: &[AlgebraElement]) -> Result<Vec<AlgebraElement>> {
    let mut blocks = vec![false; alg.block_count()];
    for x in s {
        if !x.parent.same_shape(alg) {
            return Err(Error::ParentMismatch);
        }
        for b in x.support(ZERO_TOL) {
            blocks[b] = true;
        }
    }
    let mut out = Vec::new();
    for (b, &on) in blocks.iter().enumerate() {
        if on {
            let n = alg.sizes[b];
            for i in 0..n {
                for j in 0..n {
                    out.push(AlgebraElement::matrix_unit(alg, b, i, j));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_complex;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn alg(sizes: &[usize], weights: &[f64]) -> Arc<MultiMatrixAlgebra> {
        let labels = (0..sizes.len()).map(|i| format!("b{i}")).collect();
        Arc::new(MultiMatrixAlgebra::new(labels, sizes.to_vec(), weights.to_vec(), false).unwrap())
    }

    /// Lower M1 + M2 into upper M3 + M4 with Lambda = [[1,2],[1,1]], and
    /// weights chosen compatible with the trace.
    fn sample_inclusion() -> UnitalInclusion {
        let upper = alg(&[3, 4], &[0.2, 0.1]);
        let lower = alg(&[1, 2], &[0.2 + 0.2, 0.2 + 0.1]);
        UnitalInclusion::from_lambda(lower, upper, &[vec![1, 2], vec![1, 1]]).unwrap()
    }

    #[test]
    fn unit_adjoint_and_trace_laws() {
        let a = alg(&[2, 3], &[0.2, 0.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = AlgebraElement::random_complex(&a, &mut rng);
        let y = AlgebraElement::random_complex(&a, &mut rng);
        let one = AlgebraElement::identity(&a);
        assert!((&one * &x).dist(&x).unwrap() < 1e-14);
        assert!((&x * &y).adjoint().dist(&(&y.adjoint() * &x.adjoint())).unwrap() < 1e-12);
        assert!(((&x * &y).trace() - (&y * &x).trace()).norm() < 1e-12);
        assert!((x.adjoint() * &x).trace().re > 0.0);
        assert!((one.trace().re - 1.0).abs() < 1e-14);
        assert!(matches!(x.try_mul(&AlgebraElement::identity(&alg(&[2], &[0.5]))), Err(Error::ParentMismatch)));
    }

    #[test]
    fn normalized_flag_enforced() {
        assert!(MultiMatrixAlgebra::new(vec!["a".into()], vec![2], vec![0.3], true).is_err());
        assert!(MultiMatrixAlgebra::new(vec!["a".into()], vec![2], vec![0.5], true).is_ok());
    }

    #[test]
    fn inclusion_is_trace_compatible_and_multiplicative() {
        let incl = sample_inclusion();
        assert!(incl.verify(1e-12).all_pass());
    }

    /// Independent oracle: solve tr(E(x) y) = tr(x iota(y)) for all matrix
    /// units y of the lower algebra by dense least squares.
    fn expectation_oracle(incl: &UnitalInclusion, x: &AlgebraElement) -> AlgebraElement {
        let lower = incl.lower();
        let units: Vec<(usize, usize, usize)> = (0..lower.block_count())
            .flat_map(|b| (0..lower.size(b)).flat_map(move |i| (0..lower.size(b)).map(move |j| (b, i, j))))
            .collect();
        let n = units.len();
        let mut gram = DMatrix::<C64>::zeros(n, n);
        let mut rhs = DVector::<C64>::zeros(n);
        for (r, &(b, i, j)) in units.iter().enumerate() {
            let y = AlgebraElement::matrix_unit(lower, b, i, j);
            rhs[r] = (x * &incl.embed(&y)).trace();
            for (s, &(b2, i2, j2)) in units.iter().enumerate() {
                let u = AlgebraElement::matrix_unit(lower, b2, i2, j2);
                gram[(r, s)] = (&u * &y).trace();
            }
        }
        let sol = gram.lu().solve(&rhs).unwrap();
        let mut out = AlgebraElement::zero(lower);
        for (s, &(b, i, j)) in units.iter().enumerate() {
            out.block_mut(b)[(i, j)] = sol[s];
        }
        out
    }

    #[test]
    fn expectation_matches_trace_duality_oracle() {
        let incl = sample_inclusion();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let x = AlgebraElement::random_complex(incl.upper(), &mut rng);
            let e = incl.expect(&x);
            assert!(e.dist(&expectation_oracle(&incl, &x)).unwrap() < 1e-10);
        }
    }

    #[test]
    fn expectation_bimodular_and_unital() {
        let incl = sample_inclusion();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = AlgebraElement::random_complex(incl.upper(), &mut rng);
        let a = AlgebraElement::random_complex(incl.lower(), &mut rng);
        let b = AlgebraElement::random_complex(incl.lower(), &mut rng);
        let lhs = incl.expect(&(&incl.embed(&a) * &x * incl.embed(&b)));
        let rhs = &a * &incl.expect(&x) * &b;
        assert!(lhs.dist(&rhs).unwrap() < 1e-10);
        let one = AlgebraElement::identity(incl.upper());
        assert!(incl.expect(&one).dist(&AlgebraElement::identity(incl.lower())).unwrap() < 1e-14);
        assert!(incl.expect(&incl.embed(&a)).dist(&a).unwrap() < 1e-12);
    }

    #[test]
    fn commutants() {
        let a = alg(&[2, 3], &[0.2, 0.2]);
        let all: Vec<AlgebraElement> = (0..2)
            .flat_map(|b| {
                let a = a.clone();
                (0..a.size(b)).flat_map(move |i| {
                    let a = a.clone();
                    (0..a.size(b)).map(move |j| AlgebraElement::matrix_unit(&a, b, i, j))
                })
            })
            .collect();
        assert_eq!(relative_commutant(&a, &all).unwrap().len(), 2);
        assert_eq!(relative_commutant(&a, &[]).unwrap().len(), a.dim());
        let incl = sample_inclusion();
        let gens: Vec<AlgebraElement> = (0..incl.lower().block_count())
            .flat_map(|b| {
                let l = incl.lower().clone();
                let n = l.size(b);
                (0..n).flat_map(move |i| {
                    let l = l.clone();
                    (0..n).map(move |j| AlgebraElement::matrix_unit(&l, b, i, j))
                })
            })
            .map(|u| incl.embed(&u))
            .collect();
        let generic = relative_commutant(incl.upper(), &gens).unwrap();
        let structured = incl.relative_commutant_basis();
        assert_eq!(generic.len(), incl.relative_commutant_dim());
        assert_eq!(structured.len(), generic.len());
        for x in &structured {
            for g in &gens {
                assert!((x * g).dist(&(g * x)).unwrap() < 1e-12);
            }
            assert!((x.inner(x).unwrap().re - 1.0).abs() < 1e-12);
        }
        for x in &generic {
            assert!((x.inner(x).unwrap().re - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn supports_and_ideals() {
        let a = alg(&[2, 3], &[0.2, 0.2]);
        let one = AlgebraElement::identity(&a);
        assert!(central_support(&one).unwrap().dist(&one).unwrap() < 1e-15);
        let p = AlgebraElement::matrix_unit(&a, 1, 2, 2);
        let z = central_support(&p).unwrap();
        assert!(z.dist(&AlgebraElement::central_projection(&a, 1)).unwrap() < 1e-15);
        assert!(matches!(central_support(&AlgebraElement::matrix_unit(&a, 0, 0, 1)), Err(Error::NotProjection(_))));
        assert_eq!(two_sided_ideal_span(&a, &[p]).unwrap().len(), 9);
    }

    #[test]
    fn compose_matches_sequential_embedding() {
        let incl = sample_inclusion();
        let top = alg(&[7], &[0.1]);
        let next = UnitalInclusion::from_lambda(incl.upper().clone(), top, &[vec![1], vec![1]]).unwrap();
        let comp = incl.compose(&next).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = AlgebraElement::random(incl.lower(), &mut rng);
        assert!(comp.embed(&x).dist(&next.embed(&incl.embed(&x))).unwrap() < 1e-15);
        assert_eq!(comp.lambda()[0][0], 3);
        assert_eq!(comp.lambda()[1][0], 2);
    }

    proptest! {
        #[test]
        fn adjoint_is_involutive_antihomomorphism(seed in 0u64..500) {
            let a = alg(&[1, 3, 2], &[0.1, 0.2, 0.15]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = AlgebraElement::random_complex(&a, &mut rng);
            let y = AlgebraElement::random_complex(&a, &mut rng);
            prop_assert!(x.adjoint().adjoint().dist(&x).unwrap() < 1e-15);
            prop_assert!((&x * &y).adjoint().dist(&(y.adjoint() * x.adjoint())).unwrap() < 1e-12);
            prop_assert!((x.adjoint() * &x).trace().re > 0.0);
        }

        #[test]
        fn expectation_is_idempotent_and_positive(seed in 0u64..500) {
            let incl = sample_inclusion();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = AlgebraElement::random_complex(incl.upper(), &mut rng);
            let e = incl.expect(&x);
            prop_assert!(incl.expect(&incl.embed(&e)).dist(&e).unwrap() < 1e-12);
            let pos = incl.expect(&(x.adjoint() * &x));
            for b in 0..pos.parent().block_count() {
                let (vals, _) = linalg::hermitian_eigen(pos.block(b));
                prop_assert!(vals.iter().all(|&v| v > -1e-12));
            }
            prop_assert!(((x.trace() - e.trace()).norm()) < 1e-12);
        }
    }

    #[test]
    fn json_dump_has_blocks() {
        let a = alg(&[1], &[1.0]);
        let v = AlgebraElement::identity(&a).to_json();
        assert_eq!(v["blocks"][0]["entries"][0][0][0], 1.0);
        let _ = to_complex(&DMatrix::<f64>::identity(1, 1));
    }
}
