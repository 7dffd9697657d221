//! Sparse block matrices used by the verifiers.
//!
//! Jones projections and matrix units are very sparse in the path basis, so
//! exhaustive checks over every matrix unit of a level are run on triplet
//! lists instead of dense blocks.

use std::collections::HashMap;

use crate::linalg::{c, CMat, C64};
use crate::multimatrix::{AlgebraElement, MultiMatrixAlgebra, UnitalInclusion};

const DROP: f64 = 1e-15;

/// Block-diagonal sparse matrix stored row- and column-wise.
#[derive(Clone, Debug)]
pub struct SparseElem {
    pub sizes: Vec<usize>,
    /// `rows[b][i]` lists `(j, value)` for nonzero entries `(i, j)` of block `b`.
    pub rows: Vec<Vec<Vec<(usize, C64)>>>,
    /// `cols[b][j]` lists `(i, value)` for nonzero entries `(i, j)` of block `b`.
    pub cols: Vec<Vec<Vec<(usize, C64)>>>,
}

impl SparseElem {
    pub fn from_triplets(sizes: &[usize], entries: &[(usize, usize, usize, C64)]) -> Self {
        let mut acc: HashMap<(usize, usize, usize), C64> = HashMap::new();
        for &(b, i, j, v) in entries {
            *acc.entry((b, i, j)).or_insert(c(0.0)) += v;
        }
        let mut items: Vec<((usize, usize, usize), C64)> = acc.into_iter().filter(|(_, v)| v.norm() > DROP).collect();
        items.sort_by_key(|(k, _)| *k);
        let mut rows: Vec<Vec<Vec<(usize, C64)>>> = sizes.iter().map(|&s| vec![Vec::new(); s]).collect();
        let mut cols: Vec<Vec<Vec<(usize, C64)>>> = sizes.iter().map(|&s| vec![Vec::new(); s]).collect();
        for ((b, i, j), v) in items {
            rows[b][i].push((j, v));
            cols[b][j].push((i, v));
        }
        SparseElem { sizes: sizes.to_vec(), rows, cols }
    }

    pub fn from_dense(x: &AlgebraElement, tol: f64) -> Self {
        let mut entries = Vec::new();
        for (b, m) in x.blocks().iter().enumerate() {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    let v = m[(i, j)];
                    if v.norm() > tol {
                        entries.push((b, i, j, v));
                    }
                }
            }
        }
        Self::from_triplets(x.parent().sizes(), &entries)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, usize, C64)> {
        let mut out = Vec::new();
        for (b, rows) in self.rows.iter().enumerate() {
            for (i, row) in rows.iter().enumerate() {
                for &(j, v) in row {
                    out.push((b, i, j, v));
                }
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().flatten().map(|r| r.len()).sum()
    }

    pub fn to_dense(&self, alg: &std::sync::Arc<MultiMatrixAlgebra>) -> AlgebraElement {
        let mut x = AlgebraElement::zero(alg);
        for (b, i, j, v) in self.triplets() {
            x.block_mut(b)[(i, j)] += v;
        }
        x
    }

    /// Image under a unital inclusion, following its segments.
    pub fn embed(&self, incl: &UnitalInclusion) -> SparseElem {
        let mut entries = Vec::new();
        for s in incl.segments() {
            for (i, row) in self.rows[s.lower].iter().enumerate() {
                for &(j, v) in row {
                    entries.push((s.upper, s.index[i], s.index[j], v));
                }
            }
        }
        Self::from_triplets(incl.upper().sizes(), &entries)
    }

    pub fn mul(&self, other: &SparseElem) -> SparseElem {
        let mut entries = Vec::new();
        for (b, rows) in self.rows.iter().enumerate() {
            for (i, row) in rows.iter().enumerate() {
                for &(k, v) in row {
                    for &(j, w) in &other.rows[b][k] {
                        entries.push((b, i, j, v * w));
                    }
                }
            }
        }
        Self::from_triplets(&self.sizes, &entries)
    }

    pub fn scale(&self, s: C64) -> SparseElem {
        let entries: Vec<_> = self.triplets().into_iter().map(|(b, i, j, v)| (b, i, j, v * s)).collect();
        Self::from_triplets(&self.sizes, &entries)
    }

    pub fn adjoint(&self) -> SparseElem {
        let entries: Vec<_> = self.triplets().into_iter().map(|(b, i, j, v)| (b, j, i, v.conj())).collect();
        Self::from_triplets(&self.sizes, &entries)
    }

    /// Largest entry of `self - other`.
    pub fn dist(&self, other: &SparseElem) -> f64 {
        let mut entries = self.triplets();
        entries.extend(other.triplets().into_iter().map(|(b, i, j, v)| (b, i, j, -v)));
        let mut acc: HashMap<(usize, usize, usize), C64> = HashMap::new();
        for (b, i, j, v) in entries {
            *acc.entry((b, i, j)).or_insert(c(0.0)) += v;
        }
        acc.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `self * x` for a dense block `x` of block `b`.
    pub fn left_mul_block(&self, b: usize, x: &CMat) -> CMat {
        let n = x.ncols();
        let mut out = CMat::zeros(self.sizes[b], n);
        for (i, row) in self.rows[b].iter().enumerate() {
            for &(k, v) in row {
                for col in 0..n {
                    out[(i, col)] += v * x[(k, col)];
                }
            }
        }
        out
    }

    /// `x * self` for a dense block `x` of block `b`.
    pub fn right_mul_block(&self, b: usize, x: &CMat) -> CMat {
        let m = x.nrows();
        let mut out = CMat::zeros(m, self.sizes[b]);
        for (k, row) in self.rows[b].iter().enumerate() {
            for &(j, v) in row {
                let src = x.column(k);
                let mut dst = out.column_mut(j);
                dst.axpy(v, &src, c(1.0));
                let _ = m;
            }
        }
        out
    }

    pub fn left_mul(&self, x: &AlgebraElement) -> AlgebraElement {
        let blocks = (0..self.sizes.len()).map(|b| self.left_mul_block(b, x.block(b))).collect();
        AlgebraElement::from_blocks(x.parent(), blocks).expect("shapes agree")
    }

    pub fn right_mul(&self, x: &AlgebraElement) -> AlgebraElement {
        let blocks = (0..self.sizes.len()).map(|b| self.right_mul_block(b, x.block(b))).collect();
        AlgebraElement::from_blocks(x.parent(), blocks).expect("shapes agree")
    }

    /// Rank of each block, computed per connected component of the sparsity
    /// pattern with a dense SVD on each component.
    pub fn block_ranks(&self, tol: f64) -> Vec<usize> {
        (0..self.sizes.len()).map(|b| self.block_rank(b, tol)).collect()
    }

    pub fn block_rank(&self, b: usize, tol: f64) -> usize {
        let n = self.sizes[b];
        // Union-find over row indices and column indices (offset by n).
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let nx = p[y];
                p[y] = r;
                y = nx;
            }
            r
        }
        for (i, row) in self.rows[b].iter().enumerate() {
            for &(j, _) in row {
                let (a, bb) = (find(&mut parent, i), find(&mut parent, n + j));
                if a != bb {
                    parent[a] = bb;
                }
            }
        }
        let mut comps: HashMap<usize, (Vec<usize>, Vec<usize>)> = HashMap::new();
        for i in 0..n {
            if !self.rows[b][i].is_empty() {
                let r = find(&mut parent, i);
                comps.entry(r).or_default().0.push(i);
            }
            if !self.cols[b][i].is_empty() {
                let r = find(&mut parent, n + i);
                comps.entry(r).or_default().1.push(i);
            }
        }
        let mut total = 0;
        for (_, (rs, cs)) in comps {
            let pos: HashMap<usize, usize> = cs.iter().enumerate().map(|(k, &j)| (j, k)).collect();
            let mut m = CMat::zeros(rs.len(), cs.len());
            for (a, &i) in rs.iter().enumerate() {
                for &(j, v) in &self.rows[b][i] {
                    m[(a, pos[&j])] = v;
                }
            }
            total += crate::linalg::rank(&m, tol);
        }
        total
    }
}

/// Where every upper row sits in an inclusion: `(segment index, position)`.
#[derive(Clone, Debug)]
pub struct OwnerMap {
    pub owner: Vec<Vec<(usize, usize)>>,
    /// Per lower block: `sum` of upper weights over its segments.
    pub norm: Vec<f64>,
}

impl OwnerMap {
    pub fn new(incl: &UnitalInclusion) -> Self {
        let mut owner: Vec<Vec<(usize, usize)>> =
            incl.upper().sizes().iter().map(|&s| vec![(usize::MAX, 0); s]).collect();
        let mut norm = vec![0.0; incl.lower().block_count()];
        for (k, s) in incl.segments().iter().enumerate() {
            for (i, &r) in s.index.iter().enumerate() {
                owner[s.upper][r] = (k, i);
            }
            norm[s.lower] += incl.upper().weight(s.upper);
        }
        OwnerMap { owner, norm }
    }
}

/// A short list of `(block, row, col, value)` entries with helpers that apply
/// tower operations without ever forming dense matrices.
#[derive(Clone, Debug, Default)]
pub struct Trip(pub Vec<(usize, usize, usize, C64)>);

impl Trip {
    pub fn unit(b: usize, i: usize, j: usize) -> Self {
        Trip(vec![(b, i, j, c(1.0))])
    }

    /// Sum duplicates and drop zeros.
    pub fn merged(mut self) -> Self {
        self.0.sort_by_key(|&(b, i, j, _)| (b, i, j));
        let mut out: Vec<(usize, usize, usize, C64)> = Vec::with_capacity(self.0.len());
        for (b, i, j, v) in self.0 {
            match out.last_mut() {
                Some(last) if (last.0, last.1, last.2) == (b, i, j) => last.3 += v,
                _ => out.push((b, i, j, v)),
            }
        }
        out.retain(|e| e.3.norm() > DROP);
        Trip(out)
    }

    pub fn scale(mut self, s: C64) -> Self {
        self.0.iter_mut().for_each(|e| e.3 *= s);
        self
    }

    pub fn sub(mut self, other: &Trip) -> Self {
        self.0.extend(other.0.iter().map(|&(b, i, j, v)| (b, i, j, -v)));
        self.merged()
    }

    pub fn max_abs(&self) -> f64 {
        let m = self.clone().merged();
        m.0.iter().map(|e| e.3.norm()).fold(0.0, f64::max)
    }

    pub fn embed(&self, incl: &UnitalInclusion) -> Self {
        let mut out = Vec::new();
        for &(b, i, j, v) in &self.0 {
            for &k in incl.segments_from(b) {
                let s = &incl.segments()[k];
                out.push((s.upper, s.index[i], s.index[j], v));
            }
        }
        Trip(out)
    }

    /// Conditional expectation along `incl` given its owner map.
    pub fn expect(&self, incl: &UnitalInclusion, owners: &OwnerMap) -> Self {
        let mut out = Vec::new();
        for &(cb, r, q, v) in &self.0 {
            let (s1, i) = owners.owner[cb][r];
            let (s2, j) = owners.owner[cb][q];
            if s1 == s2 {
                let seg = &incl.segments()[s1];
                let w = incl.upper().weight(cb) / owners.norm[seg.lower];
                out.push((seg.lower, i, j, v * w));
            }
        }
        Trip(out)
    }

    /// `self * e`.
    pub fn mul_right(&self, e: &SparseElem) -> Self {
        let mut out = Vec::new();
        for &(b, i, k, v) in &self.0 {
            for &(j, w) in &e.rows[b][k] {
                out.push((b, i, j, v * w));
            }
        }
        Trip(out)
    }

    /// `e * self`.
    pub fn mul_left(&self, e: &SparseElem) -> Self {
        let mut out = Vec::new();
        for &(b, k, j, v) in &self.0 {
            for &(i, w) in &e.cols[b][k] {
                out.push((b, i, j, w * v));
            }
        }
        Trip(out)
    }

    pub fn trace(&self, alg: &MultiMatrixAlgebra) -> C64 {
        self.0.iter().filter(|e| e.1 == e.2).map(|e| e.3 * alg.weight(e.0)).fold(c(0.0), |a, b| a + b)
    }
}
