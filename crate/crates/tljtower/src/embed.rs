//! Strongly Markov inclusions, the canonical relative-commutant planar
//! algebra of a tower, its identification with the graph planar algebra of
//! the Bratteli graph, and the module embedding `Φ: TLJ → GPA`.
//!
//! A canonical PA with base `a` has box spaces
//! `P_{n,+} = M_a' ∩ M_{a+n}` and `P_{n,−} = M_{a+1}' ∩ M_{a+1+n}`, stored as
//! elements of the corresponding tower level.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gpa::{GPAElement, GraphPlanarAlgebra, LoopSpace};
use crate::graph::WeightedBipartiteGraph;
use crate::linalg::{self, c, CMat, C64};
use crate::multimatrix::{AlgebraElement, UnitalInclusion};
use crate::report::Report;
use crate::tljdiag::{self, Shading, TLDiagram, TLElement};
use crate::tower::{build_tower, Compression, MarkovTower};

const ZERO_TOL: f64 = 1e-10;

fn delta(sh: Shading) -> usize {
    match sh {
        Shading::Plus => 0,
        Shading::Minus => 1,
    }
}

fn shadings() -> [Shading; 2] {
    [Shading::Plus, Shading::Minus]
}

// ---------------------------------------------------------------------------
// Pimsner-Popa bases

/// An inclusion `A_0 ⊂ A_1` with a Pimsner-Popa basis `{b}`:
/// `x = Σ b E(b* x)` and `Σ b b* = index · 1`.
#[derive(Clone, Debug)]
pub struct StronglyMarkovInclusion {
    inclusion: Arc<UnitalInclusion>,
    basis: Vec<AlgebraElement>,
    watatani_index: f64,
}

/// Gram-Schmidt over `A_0` for the pairing `E(x* y)`, seeded by the matrix
/// units of `A_1` in canonical order.
pub fn pimsner_popa_basis(incl: &Arc<UnitalInclusion>) -> Result<StronglyMarkovInclusion> {
    gram_schmidt(incl, false)
}

/// The same construction with the seeds taken in reverse order; gives a
/// different basis whenever one is possible.
pub fn pimsner_popa_basis_reversed(incl: &Arc<UnitalInclusion>) -> Result<StronglyMarkovInclusion> {
    gram_schmidt(incl, true)
}

fn gram_schmidt(incl: &Arc<UnitalInclusion>, reverse: bool) -> Result<StronglyMarkovInclusion> {
    let upper = incl.upper();
    let lower = incl.lower();
    let mut seeds = Vec::new();
    for b in 0..upper.block_count() {
        let s = upper.size(b);
        for i in 0..s {
            for j in 0..s {
                seeds.push((b, i, j));
            }
        }
    }
    if reverse {
        seeds.reverse();
    }
    let mut basis: Vec<AlgebraElement> = Vec::new();
    for (b, i, j) in seeds {
        let m = AlgebraElement::matrix_unit(upper, b, i, j);
        let mut v = m.clone();
        // Two passes keep the result orthogonal to working precision.
        for _ in 0..2 {
            let mut next = v.clone();
            for bb in &basis {
                let coef = incl.expect(&(&bb.adjoint() * &v));
                next = &next - &(bb * &incl.embed(&coef));
            }
            v = next;
        }
        let h = incl.expect(&(&v.adjoint() * &v));
        if h.max_abs() < ZERO_TOL {
            continue;
        }
        let blocks = h.blocks().iter().map(|m| linalg::psd_inv_sqrt(m, 1e-9)).collect();
        let hinv = AlgebraElement::from_blocks(lower, blocks)?;
        let nb = &v * &incl.embed(&hinv);
        basis.push(nb);
    }
    let s = basis.iter().fold(AlgebraElement::zero(upper), |acc, b| &acc + &(b * &b.adjoint()));
    let index = s.trace().re / upper.total_trace();
    let res = s.dist(&AlgebraElement::identity(upper).scale_re(index))?;
    if res > 1e-8 {
        let per_block: Vec<String> = (0..upper.block_count())
            .map(|b| {
                let blk = s.block(b);
                let n = blk.nrows() as f64;
                format!("{}: {:.6}", upper.label(b), blk.trace().re / n)
            })
            .collect();
        return Err(Error::NotMarkov(format!(
            "sum b b* is not scalar (residual {res:.3e}); block averages [{}]",
            per_block.join(", ")
        )));
    }
    Ok(StronglyMarkovInclusion { inclusion: incl.clone(), basis, watatani_index: index })
}

impl StronglyMarkovInclusion {
    pub fn inclusion(&self) -> &Arc<UnitalInclusion> {
        &self.inclusion
    }

    pub fn basis(&self) -> &[AlgebraElement] {
        &self.basis
    }

    pub fn watatani_index(&self) -> f64 {
        self.watatani_index
    }

    /// `|Σ b b* − index·1|`.
    pub fn index_residual(&self) -> f64 {
        let upper = self.inclusion.upper();
        let s = self.basis.iter().fold(AlgebraElement::zero(upper), |acc, b| &acc + &(b * &b.adjoint()));
        s.dist(&AlgebraElement::identity(upper).scale_re(self.watatani_index)).unwrap_or(f64::NAN)
    }

    /// `|Σ b E(b* x) − x|`.
    pub fn reconstruction_residual(&self, x: &AlgebraElement) -> f64 {
        let incl = &self.inclusion;
        let mut y = AlgebraElement::zero(incl.upper());
        for b in &self.basis {
            y = &y + &(b * &incl.embed(&incl.expect(&(&b.adjoint() * x))));
        }
        y.dist(x).unwrap_or(f64::NAN)
    }
}

/// Pimsner-Popa basis of `M_a ⊂ M_{a+1}` with the invariants checked,
/// including `Σ b e_{a+1} b* = 1` in `M_{a+2}`.
pub fn verify_strongly_markov(t: &MarkovTower, a: usize, samples: usize, seed: u64, tol: f64) -> Result<Report> {
    if a + 2 > t.depth() {
        return Err(Error::Depth { have: t.depth(), need: a + 2 });
    }
    let smi = pimsner_popa_basis(t.inclusion(a))?;
    let d2 = t.modulus().powi(2);
    let mut r = Report::new(format!("Pimsner-Popa basis of M_{a} in M_{}", a + 1)).with_seed(seed);
    r.push("watatani index equals d^2", "StronglyMarkov", (smi.watatani_index - d2).abs(), tol);
    r.push("sum b b* is scalar", "StronglyMarkov", smi.index_residual(), tol);
    let e = t.jones_at(a + 1, a + 2);
    let mut s = AlgebraElement::zero(t.level(a + 2));
    for b in smi.basis() {
        let bb = t.embed(b, a + 1, a + 2);
        s = &s + &(&(&bb * &e) * &bb.adjoint());
    }
    let res = s.dist(&AlgebraElement::identity(t.level(a + 2)))?;
    r.push("sum b e b* = 1 in the basic construction", "StronglyMarkov", res, tol);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = AlgebraElement::random_complex(t.level(a + 1), &mut rng);
        worst = worst.max(smi.reconstruction_residual(&x));
    }
    r.push("x = sum b E(b* x) on random x", "StronglyMarkov", worst, tol);
    Ok(r)
}

// ---------------------------------------------------------------------------
// Standard level

#[derive(Clone, Debug)]
pub struct StandardLevel {
    pub r: usize,
    /// (R1)–(R3) at every level tried, the last one passing.
    pub report: Report,
}

/// (R1)–(R3) for `M_a ⊂ M_{a+1} ⊂ M_{a+2}` with `p = e_{a+1}`.
pub fn recognition_report(t: &MarkovTower, a: usize, tol: f64) -> Result<Report> {
    if a + 2 > t.depth() {
        return Err(Error::Depth { have: t.depth(), need: a + 2 });
    }
    let mut r = Report::new(format!("basic construction recognition at M_{a}"));
    let e = t.jones_at(a + 1, a + 2);
    // (R1) on the matrix units of M_{a+1}.
    let mid = t.level(a + 1);
    let mut worst: f64 = 0.0;
    for b in 0..mid.block_count() {
        for i in 0..mid.size(b) {
            for j in 0..mid.size(b) {
                let x = AlgebraElement::matrix_unit(mid, b, i, j);
                let lhs = &(&e * &t.embed(&x, a + 1, a + 2)) * &e;
                let rhs = &t.embed(&t.expect(&x, a + 1, a), a, a + 2) * &e;
                worst = worst.max(lhs.dist(&rhs)?);
            }
        }
    }
    r.push(format!("p x p = E(x) p for x in M_{}", a + 1), "R1", worst, tol);
    // (R2) E(p) is the scalar d^{-2}.
    let ex = t.expect(&e, a + 2, a + 1);
    let res = ex.dist(&AlgebraElement::identity(mid).scale_re(t.modulus().powi(-2)))?;
    r.push(format!("E(e_{}) = d^-2", a + 1), "R2", res, tol);
    // (R3) M_{a+2} is generated by M_{a+1} and p: p has full central support
    // and M_{a+2} p = M_{a+1} p.
    let supp = e.support(ZERO_TOL).len();
    r.push_exact(format!("e_{} has full central support in M_{}", a + 1, a + 2), "R3", supp as i64, t.level(a + 2).block_count() as i64);
    let top = t.level(a + 2);
    let mut pull: f64 = 0.0;
    let d2 = t.modulus().powi(2);
    for b in 0..top.block_count() {
        for i in 0..top.size(b) {
            for j in 0..top.size(b) {
                let xe = &AlgebraElement::matrix_unit(top, b, i, j) * &e;
                let y = t.expect(&xe, a + 2, a + 1).scale_re(d2);
                pull = pull.max(xe.dist(&(&t.embed(&y, a + 1, a + 2) * &e))?);
            }
        }
    }
    r.push(format!("M_{} e_{} = M_{} e_{}", a + 2, a + 1, a + 1, a + 1), "R3", pull, tol);
    Ok(r)
}

/// Least `r` for which `M_{2r} ⊂ M_{2r+1} ⊂ M_{2r+2}` is a basic
/// construction.
pub fn find_standard_level(t: &MarkovTower) -> Result<StandardLevel> {
    let mut all = Report::new("standard level search");
    let mut r = 0;
    while 2 * r + 2 <= t.depth() {
        let rep = recognition_report(t, 2 * r, 1e-9)?;
        let ok = rep.all_pass();
        all.extend_prefixed(&format!("r={r}: "), rep);
        if ok {
            return Ok(StandardLevel { r, report: all });
        }
        r += 1;
    }
    Err(Error::NoStandardLevel(t.depth()))
}

// ---------------------------------------------------------------------------
// Path frames

#[derive(Clone, Debug)]
struct FrameLevel {
    vertices: Vec<usize>,
    rows: Vec<Vec<Vec<usize>>>,
    lookup: HashMap<Vec<usize>, (usize, usize)>,
}

/// Path labels of the rows of every level of a tower, relative to a graph
/// with a basepoint.
#[derive(Clone, Debug)]
pub struct PathFrame {
    graph: Arc<WeightedBipartiteGraph>,
    levels: Vec<FrameLevel>,
}

impl PathFrame {
    /// The frame of a path-model tower.
    pub fn from_tower(t: &MarkovTower) -> Result<Self> {
        let g = t.graph().ok_or_else(|| Error::Invalid("tower has no path model".into()))?;
        let mut levels = Vec::new();
        for k in 0..=t.depth() {
            let pb = t.paths(k).expect("path model levels");
            let rows: Vec<Vec<Vec<usize>>> = (0..pb.vertices().len()).map(|b| pb.paths(b).to_vec()).collect();
            levels.push(FrameLevel::new(pb.vertices().to_vec(), rows));
        }
        Ok(PathFrame { graph: g.clone(), levels })
    }

    /// The frame of `compress(shift(M, offset), p)` for a coordinate
    /// projection `p` whose rows all start with one path of length `strip`;
    /// that prefix is removed and its end becomes the basepoint.
    pub fn from_compression(parent: &PathFrame, offset: usize, strip: usize, comp: &Compression) -> Result<Self> {
        let origin = comp
            .row_origin
            .as_ref()
            .ok_or_else(|| Error::Invalid("compression is not by a coordinate projection".into()))?;
        let mut prefix: Option<Vec<usize>> = None;
        let mut levels = Vec::new();
        for k in 0..=comp.tower.depth() {
            let pl = parent.levels.get(offset + k).ok_or(Error::Depth { have: parent.depth(), need: offset + k })?;
            let mut vertices = Vec::new();
            let mut rows = Vec::new();
            for (nb, &ob) in comp.kept[k].iter().enumerate() {
                vertices.push(pl.vertices[ob]);
                let mut block_rows = Vec::new();
                for &row in &origin[k][nb] {
                    let path = &pl.rows[ob][row];
                    let (pre, rest) = path.split_at(strip);
                    match &prefix {
                        None => prefix = Some(pre.to_vec()),
                        Some(p) if p.as_slice() != pre => {
                            return Err(Error::Invalid("compressed rows do not share one prefix".into()))
                        }
                        _ => {}
                    }
                    block_rows.push(rest.to_vec());
                }
                rows.push(block_rows);
            }
            levels.push(FrameLevel::new(vertices, rows));
        }
        let first = prefix.ok_or(Error::ZeroProjection)?;
        let mut base = parent.graph.basepoint();
        for &e in &first {
            base = parent.graph.edge(e).other(base);
        }
        Ok(PathFrame { graph: Arc::new(parent.graph.with_basepoint(base)?), levels })
    }

    pub fn graph(&self) -> &Arc<WeightedBipartiteGraph> {
        &self.graph
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Paths of length `level` ending at `v`.
    pub fn paths_to(&self, level: usize, v: usize) -> &[Vec<usize>] {
        let l = &self.levels[level];
        match l.vertices.iter().position(|&w| w == v) {
            Some(b) => &l.rows[b],
            None => &[],
        }
    }

    pub fn locate(&self, level: usize, path: &[usize]) -> Option<(usize, usize)> {
        self.levels[level].lookup.get(path).copied()
    }
}

impl FrameLevel {
    fn new(vertices: Vec<usize>, rows: Vec<Vec<Vec<usize>>>) -> Self {
        let mut lookup = HashMap::new();
        for (b, rs) in rows.iter().enumerate() {
            for (i, p) in rs.iter().enumerate() {
                lookup.insert(p.clone(), (b, i));
            }
        }
        FrameLevel { vertices, rows, lookup }
    }
}

// ---------------------------------------------------------------------------
// Canonical planar algebra

/// The canonical planar algebra of `M_a ⊂ M_{a+1}` inside a tower.
pub struct CanonicalPA {
    tower: Arc<MarkovTower>,
    frame: Option<Arc<PathFrame>>,
    base: usize,
    pp: StronglyMarkovInclusion,
    gpa: Option<GraphPlanarAlgebra>,
}

impl CanonicalPA {
    /// Canonical PA at base `a`; the GPA identification is available when
    /// the tower carries a path model.
    pub fn new(tower: Arc<MarkovTower>, base: usize) -> Result<Self> {
        let frame = if tower.graph().is_some() { Some(Arc::new(PathFrame::from_tower(&tower)?)) } else { None };
        Self::with_frame(tower, frame, base)
    }

    pub fn with_frame(tower: Arc<MarkovTower>, frame: Option<Arc<PathFrame>>, base: usize) -> Result<Self> {
        if base + 2 > tower.depth() {
            return Err(Error::Depth { have: tower.depth(), need: base + 2 });
        }
        let pp = pimsner_popa_basis(tower.inclusion(base))?;
        let gpa = frame.as_ref().map(|f| GraphPlanarAlgebra::new(f.graph()));
        Ok(CanonicalPA { tower, frame, base, pp, gpa })
    }

    pub fn tower(&self) -> &Arc<MarkovTower> {
        &self.tower
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn modulus(&self) -> f64 {
        self.tower.modulus()
    }

    pub fn frame(&self) -> Option<&Arc<PathFrame>> {
        self.frame.as_ref()
    }

    pub fn pimsner_popa(&self) -> &StronglyMarkovInclusion {
        &self.pp
    }

    pub fn gpa(&self) -> Result<&GraphPlanarAlgebra> {
        self.gpa.as_ref().ok_or_else(|| Error::Invalid("no path frame for the GPA identification".into()))
    }

    /// Tower level holding `P_{n,±}`.
    pub fn level(&self, n: usize, sh: Shading) -> usize {
        self.base + delta(sh) + n
    }

    /// Largest `n` with `P_{n,±}` inside the built tower.
    pub fn max_box(&self, sh: Shading) -> usize {
        self.tower.depth() - self.base - delta(sh)
    }

    fn check_box(&self, n: usize, sh: Shading) -> Result<usize> {
        let l = self.level(n, sh);
        if l > self.tower.depth() {
            return Err(Error::Depth { have: self.tower.depth(), need: l });
        }
        Ok(l)
    }

    /// `dim P_{n,±} = Σ Λ²` for the composite inclusion.
    pub fn box_dim(&self, n: usize, sh: Shading) -> Result<usize> {
        let l = self.check_box(n, sh)?;
        let b0 = self.base + delta(sh);
        Ok(self.tower.composite(b0, l).relative_commutant_dim())
    }

    pub fn identity(&self, n: usize, sh: Shading) -> Result<AlgebraElement> {
        Ok(AlgebraElement::identity(self.tower.level(self.check_box(n, sh)?)))
    }

    /// `e_k ∈ P_{k+1,±}`.
    pub fn jones(&self, k: usize, sh: Shading) -> Result<AlgebraElement> {
        if k == 0 {
            return Err(Error::Invalid("Jones projections are indexed from 1".into()));
        }
        let l = self.check_box(k + 1, sh)?;
        Ok(self.tower.jones_at(self.base + delta(sh) + k, l))
    }

    pub fn include_right(&self, x: &AlgebraElement, n: usize, sh: Shading) -> Result<AlgebraElement> {
        let l = self.check_box(n + 1, sh)?;
        Ok(self.tower.embed(x, l - 1, l))
    }

    /// `P_{n,−} → P_{n+1,+}` is the identity on the underlying level.
    pub fn include_left(&self, x: &AlgebraElement, n: usize) -> Result<AlgebraElement> {
        self.check_box(n + 1, Shading::Plus)?;
        Ok(x.clone())
    }

    /// `d · E`.
    pub fn cap_right(&self, x: &AlgebraElement, n: usize, sh: Shading) -> Result<AlgebraElement> {
        if n == 0 {
            return Err(Error::Invalid("cannot cap a 0-box".into()));
        }
        let l = self.check_box(n, sh)?;
        Ok(self.tower.expect(x, l, l - 1).scale_re(self.modulus()))
    }

    /// `P_{n,+} → P_{n−1,−}`, `x ↦ d⁻¹ Σ b x b*` over the Pimsner-Popa basis.
    pub fn cap_left(&self, x: &AlgebraElement, n: usize) -> Result<AlgebraElement> {
        self.cap_left_with(x, n, &self.pp)
    }

    pub fn cap_left_with(&self, x: &AlgebraElement, n: usize, pp: &StronglyMarkovInclusion) -> Result<AlgebraElement> {
        if n == 0 {
            return Err(Error::Invalid("cannot cap a 0-box".into()));
        }
        let l = self.check_box(n, Shading::Plus)?;
        let from = self.base + 1;
        let mut out = AlgebraElement::zero(self.tower.level(l));
        for b in pp.basis() {
            let bb = self.tower.embed(b, from, l);
            out = &out + &(&(&bb * x) * &bb.adjoint());
        }
        Ok(out.scale_re(1.0 / self.modulus()))
    }

    /// Distance from `x` to the relative commutant, measured as the part of
    /// `x` not of the form `1_ξ ⊗ y`.
    pub fn commutant_residual(&self, x: &AlgebraElement, n: usize, sh: Shading) -> Result<f64> {
        let y = self.to_gpa(x, n, sh)?;
        self.from_gpa(&y)?.dist(x)
    }

    /// The identification `P_{n,±} → 𝒢_{n,±}` reading the entries at one
    /// prefix path for each start vertex.
    pub fn to_gpa(&self, x: &AlgebraElement, n: usize, sh: Shading) -> Result<GPAElement> {
        let frame = self.frame.as_ref().ok_or_else(|| Error::Invalid("no path frame".into()))?;
        let l = self.check_box(n, sh)?;
        if !x.parent().same_shape(self.tower.level(l)) {
            return Err(Error::ParentMismatch);
        }
        let b0 = self.base + delta(sh);
        let space = self.gpa()?.space(n, sh);
        let mut coeffs = Vec::with_capacity(space.dim());
        for k in 0..space.dim() {
            let lp = space.loop_at(k);
            let xi = frame.paths_to(b0, lp.start).first().ok_or_else(|| {
                Error::Invalid(format!("vertex {} does not occur at level {b0}", frame.graph().label(lp.start)))
            })?;
            let (blk, row) = frame.locate(l, &[xi.as_slice(), &lp.left].concat()).expect("frame path");
            let (_, col) = frame.locate(l, &[xi.as_slice(), &lp.right].concat()).expect("frame path");
            coeffs.push(x.block(blk)[(row, col)]);
        }
        GPAElement::from_coefficients(&space, &coeffs)
    }

    /// Inverse of [`CanonicalPA::to_gpa`]: every prefix carries the same loop
    /// coefficients.
    pub fn from_gpa(&self, y: &GPAElement) -> Result<AlgebraElement> {
        let frame = self.frame.as_ref().ok_or_else(|| Error::Invalid("no path frame".into()))?;
        let space = y.space();
        let (n, sh) = (space.n(), space.shading());
        let l = self.check_box(n, sh)?;
        let b0 = self.base + delta(sh);
        let mut x = AlgebraElement::zero(self.tower.level(l));
        for (k, v) in y.coefficients().into_iter().enumerate() {
            if v.norm() == 0.0 {
                continue;
            }
            let lp = space.loop_at(k);
            for xi in frame.paths_to(b0, lp.start) {
                let (blk, row) = frame.locate(l, &[xi.as_slice(), &lp.left].concat()).expect("frame path");
                let (_, col) = frame.locate(l, &[xi.as_slice(), &lp.right].concat()).expect("frame path");
                x.block_mut(blk)[(row, col)] = v;
            }
        }
        Ok(x)
    }

    fn random_box(&self, n: usize, sh: Shading, rng: &mut ChaCha8Rng) -> Result<AlgebraElement> {
        let space = self.gpa()?.space(n, sh);
        let y = GPAElement::from_algebra(&space, AlgebraElement::random_complex(space.algebra(), rng))?;
        self.from_gpa(&y)
    }
}

fn gdist(a: &GPAElement, b: &GPAElement) -> f64 {
    a.dist(b).unwrap_or(f64::NAN)
}

/// Checks that the GPA identification is a *-isomorphism on each box space
/// `n ≤ n_max` intertwining the generating tangles and the traces, and that
/// left capping does not depend on the Pimsner-Popa basis.
pub fn verify_gpa_isomorphism(pa: &CanonicalPA, n_max: usize, samples: usize, seed: u64, tol: f64) -> Result<Report> {
    let gpa = pa.gpa()?;
    let d = pa.modulus();
    let mut r = Report::new(format!("canonical planar algebra at M_{} vs GPA", pa.base())).with_seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alt = pimsner_popa_basis_reversed(pa.tower.inclusion(pa.base))?;
    r.push(
        "Pimsner-Popa index equals d^2",
        "StronglyMarkov",
        (pa.pp.watatani_index() - d * d).abs(),
        tol,
    );
    for sh in shadings() {
        let top = n_max.min(pa.max_box(sh));
        for n in 0..=top {
            let tag = format!("n={n}{}", sh.symbol());
            let dim = pa.box_dim(n, sh)?;
            let space = gpa.space(n, sh);
            r.push_exact(format!("{tag}: dim P = dim GPA"), "PlanarIso", dim as i64, space.dim() as i64);
            let one = pa.identity(n, sh)?;
            r.push(format!("{tag}: 1 maps to 1"), "PlanarIso", gdist(&pa.to_gpa(&one, n, sh)?, &GPAElement::identity(&space)), tol);

            let (mut hom, mut adj, mut rinc, mut linc, mut rcap, mut lcap, mut basis_dep, mut tr) =
                (0f64, 0f64, 0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
            // Trace weights per start vertex.
            let starts: Vec<usize> = {
                let mut v: Vec<usize> = space.blocks().iter().map(|&(s, _)| s).collect();
                v.dedup();
                v
            };
            let zeros = GPAElement::zero(&space);
            let mut ratio = HashMap::new();
            for &s in &starts {
                let mut ps = zeros.value().clone();
                for (b, &(bs, _)) in space.blocks().iter().enumerate() {
                    if bs == s {
                        *ps.block_mut(b) = CMat::identity(space.algebra().size(b), space.algebra().size(b));
                    }
                }
                let pe = GPAElement::from_algebra(&space, ps)?;
                let tt = pa.from_gpa(&pe)?.trace().re;
                ratio.insert(s, (tt / pe.trace().re, pe));
            }
            for _ in 0..samples {
                let x = pa.random_box(n, sh, &mut rng)?;
                let y = pa.random_box(n, sh, &mut rng)?;
                let gx = pa.to_gpa(&x, n, sh)?;
                let gy = pa.to_gpa(&y, n, sh)?;
                hom = hom.max(gdist(&pa.to_gpa(&(&x * &y), n, sh)?, &gx.mul(&gy)?));
                adj = adj.max(gdist(&pa.to_gpa(&x.adjoint(), n, sh)?, &gx.adjoint()));
                let mut t_g = C64::new(0.0, 0.0);
                for (w, pe) in ratio.values() {
                    t_g += gx.mul(pe)?.trace() * *w;
                }
                tr = tr.max((x.trace() - t_g).norm());
                if n < top {
                    rinc = rinc.max(gdist(&pa.to_gpa(&pa.include_right(&x, n, sh)?, n + 1, sh)?, &gpa.include_right(&gx)));
                }
                if sh == Shading::Minus && n + 1 <= pa.max_box(Shading::Plus).min(n_max) {
                    let lx = pa.include_left(&x, n)?;
                    linc = linc.max(gdist(&pa.to_gpa(&lx, n + 1, Shading::Plus)?, &gpa.include_left(&gx)));
                }
                if n >= 1 {
                    rcap = rcap.max(gdist(&pa.to_gpa(&pa.cap_right(&x, n, sh)?, n - 1, sh)?, &gpa.cap_right(&gx)?));
                    if sh == Shading::Plus {
                        let cl = pa.cap_left(&x, n)?;
                        lcap = lcap.max(gdist(&pa.to_gpa(&cl, n - 1, Shading::Minus)?, &gpa.cap_left(&gx)?));
                        basis_dep = basis_dep.max(cl.dist(&pa.cap_left_with(&x, n, &alt)?)?);
                    }
                }
            }
            r.push(format!("{tag}: multiplicative"), "PlanarIso", hom, tol);
            r.push(format!("{tag}: adjoint"), "PlanarIso", adj, tol);
            r.push(format!("{tag}: trace"), "PlanarIso", tr, tol);
            if n < top {
                r.push(format!("{tag}: right inclusion"), "PlanarIso", rinc, tol);
            }
            if sh == Shading::Minus && n + 1 <= pa.max_box(Shading::Plus).min(n_max) {
                r.push(format!("{tag}: left inclusion"), "PlanarIso", linc, tol);
            }
            if n >= 1 {
                r.push(format!("{tag}: right capping"), "PlanarIso", rcap, tol);
                if sh == Shading::Plus {
                    r.push(format!("{tag}: left capping"), "PlanarIso", lcap, tol);
                    r.push(format!("{tag}: left capping basis independence"), "LeftCapping", basis_dep, tol);
                }
            }
            if n >= 2 {
                let k = n - 1;
                let e = pa.to_gpa(&pa.jones(k, sh)?, n, sh)?;
                r.push(format!("{tag}: Jones projection e_{k}"), "PlanarIso", gdist(&e, &gpa.jones_projection(k, sh)?), tol);
            }
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Shift and compression isomorphisms

/// `P → Q` for canonical PAs at bases `a` and `a+2` of the same path-model
/// tower: add two strings on the left.
pub fn shift_iso(p: &CanonicalPA, q: &CanonicalPA, x: &AlgebraElement, n: usize, sh: Shading) -> Result<AlgebraElement> {
    if q.base != p.base + 2 || !Arc::ptr_eq(&p.tower, &q.tower) {
        return Err(Error::Invalid("shift_iso needs canonical PAs at bases a and a+2 of one tower".into()));
    }
    let y = p.to_gpa(x, n, sh)?;
    let space = q.gpa()?.space(n, sh);
    q.from_gpa(&GPAElement::from_coefficients(&space, &y.coefficients())?)
}

/// The generator checklist for `shift_iso` on random elements.
pub fn verify_shift_iso(p: &CanonicalPA, q: &CanonicalPA, n_max: usize, samples: usize, seed: u64, tol: f64) -> Result<Report> {
    let mut r = Report::new(format!("shift isomorphism M_{} -> M_{}", p.base, q.base)).with_seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = |x: &AlgebraElement, n, sh| shift_iso(p, q, x, n, sh);
    for sh in shadings() {
        let top = n_max.min(q.max_box(sh));
        for n in 0..=top {
            let tag = format!("n={n}{}", sh.symbol());
            r.push_exact(format!("{tag}: dim P = dim Q"), "ShiftIso", p.box_dim(n, sh)? as i64, q.box_dim(n, sh)? as i64);
            r.push(format!("{tag}: 1 maps to 1"), "ShiftIso", f(&p.identity(n, sh)?, n, sh)?.dist(&q.identity(n, sh)?)?, tol);
            let (mut hom, mut adj, mut rinc, mut linc, mut rcap, mut lcap) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
            for _ in 0..samples {
                let x = p.random_box(n, sh, &mut rng)?;
                let y = p.random_box(n, sh, &mut rng)?;
                let fx = f(&x, n, sh)?;
                hom = hom.max(f(&(&x * &y), n, sh)?.dist(&(&fx * &f(&y, n, sh)?))?);
                adj = adj.max(f(&x.adjoint(), n, sh)?.dist(&fx.adjoint())?);
                if n < top {
                    rinc = rinc.max(f(&p.include_right(&x, n, sh)?, n + 1, sh)?.dist(&q.include_right(&fx, n, sh)?)?);
                }
                if sh == Shading::Minus && n + 1 <= q.max_box(Shading::Plus).min(n_max) {
                    linc = linc.max(f(&p.include_left(&x, n)?, n + 1, Shading::Plus)?.dist(&q.include_left(&fx, n)?)?);
                }
                if n >= 1 {
                    rcap = rcap.max(f(&p.cap_right(&x, n, sh)?, n - 1, sh)?.dist(&q.cap_right(&fx, n, sh)?)?);
                    if sh == Shading::Plus {
                        lcap = lcap.max(f(&p.cap_left(&x, n)?, n - 1, Shading::Minus)?.dist(&q.cap_left(&fx, n)?)?);
                    }
                }
            }
            r.push(format!("{tag}: multiplicative"), "ShiftIso", hom, tol);
            r.push(format!("{tag}: adjoint"), "ShiftIso", adj, tol);
            if n < top {
                r.push(format!("{tag}: right inclusion"), "ShiftIso", rinc, tol);
            }
            if sh == Shading::Minus && n + 1 <= q.max_box(Shading::Plus).min(n_max) {
                r.push(format!("{tag}: left inclusion"), "ShiftIso", linc, tol);
            }
            if n >= 1 {
                r.push(format!("{tag}: right capping"), "ShiftIso", rcap, tol);
                if sh == Shading::Plus {
                    r.push(format!("{tag}: left capping"), "ShiftIso", lcap, tol);
                }
            }
            if n >= 2 {
                let k = n - 1;
                r.push(format!("{tag}: Jones projection e_{k}"), "ShiftIso", f(&p.jones(k, sh)?, n, sh)?.dist(&q.jones(k, sh)?)?, tol);
            }
        }
    }
    Ok(r)
}

/// `x ↦ xp` from the canonical PA at base `a` to the canonical PA of the
/// compressed tower `p M_{a+•} p`.
pub struct CompressionIso {
    pub compression: Compression,
    pub compressed: CanonicalPA,
    base: usize,
}

/// Build the compression of `shift(M, a)` by `p ∈ M_a`, rejecting `p`
/// without full central support. When `p` is diagonal in the path basis and
/// its rows share a prefix of length `strip`, the compressed PA keeps a path
/// frame based at the end of that prefix.
pub fn compression_iso(pa: &CanonicalPA, p: &AlgebraElement, strip: usize) -> Result<CompressionIso> {
    let a = pa.base;
    let alg = pa.tower.level(a);
    let res = p.projection_residual();
    if res > 1e-9 {
        return Err(Error::NotProjection(res));
    }
    let supp = p.support(ZERO_TOL);
    if let Some(b) = (0..alg.block_count()).find(|b| !supp.contains(b)) {
        return Err(Error::IdealSpan(alg.label(b).to_string()));
    }
    let shifted = pa.tower.shift(a)?;
    let compression = shifted.compress(p)?;
    let frame = match pa.frame() {
        Some(f) if compression.row_origin.is_some() => Some(Arc::new(PathFrame::from_compression(f, a, strip, &compression)?)),
        _ => None,
    };
    let compressed = CanonicalPA::with_frame(Arc::new(compression.tower.clone()), frame, 0)?;
    Ok(CompressionIso { compression, compressed, base: a })
}

impl CompressionIso {
    pub fn apply(&self, x: &AlgebraElement, n: usize, sh: Shading) -> AlgebraElement {
        self.compression.compress_element(delta(sh) + n, x)
    }

    /// Generator checklist, the compressed index, and left capping with the
    /// Pimsner-Popa basis `{p b p}` coming from `{b}` for `M_a ⊂ M_{a+1}`.
    pub fn verify(&self, pa: &CanonicalPA, n_max: usize, samples: usize, seed: u64, tol: f64) -> Result<Report> {
        let q = &self.compressed;
        let d = pa.modulus();
        let mut r = Report::new(format!("compression isomorphism at M_{}", self.base)).with_seed(seed);
        r.push("compressed index equals d^2", "CompressionIso", (q.pp.watatani_index() - d * d).abs(), tol);
        r.push("compressed index equals original", "CompressionIso", (q.pp.watatani_index() - pa.pp.watatani_index()).abs(), tol);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for sh in shadings() {
            let top = n_max.min(q.max_box(sh)).min(pa.max_box(sh));
            for n in 0..=top {
                let tag = format!("n={n}{}", sh.symbol());
                let f = |x: &AlgebraElement, n| self.apply(x, n, sh);
                r.push_exact(format!("{tag}: dim P = dim pPp"), "CompressionIso", pa.box_dim(n, sh)? as i64, q.box_dim(n, sh)? as i64);
                // Injectivity on a basis of P.
                let space = pa.gpa()?.space(n, sh);
                let mut rows = Vec::new();
                for k in 0..space.dim() {
                    let x = pa.from_gpa(&GPAElement::loop_indicator(&space, k))?;
                    rows.push(flatten(&f(&x, n)));
                }
                let m = CMat::from_fn(rows.len(), rows.first().map_or(0, |v| v.len()), |i, j| rows[i][j]);
                r.push_exact(format!("{tag}: injective"), "CompressionIso", linalg::rank(&m, 1e-8) as i64, space.dim() as i64);
                let (mut hom, mut adj, mut rinc, mut linc, mut rcap, mut lcap) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
                for _ in 0..samples {
                    let x = pa.random_box(n, sh, &mut rng)?;
                    let y = pa.random_box(n, sh, &mut rng)?;
                    let fx = f(&x, n);
                    hom = hom.max(f(&(&x * &y), n).dist(&(&fx * &f(&y, n)))?);
                    adj = adj.max(f(&x.adjoint(), n).dist(&fx.adjoint())?);
                    if n < top {
                        rinc = rinc.max(f(&pa.include_right(&x, n, sh)?, n + 1).dist(&q.include_right(&fx, n, sh)?)?);
                    }
                    if sh == Shading::Minus && n < top {
                        let lx = self.apply(&pa.include_left(&x, n)?, n + 1, Shading::Plus);
                        linc = linc.max(lx.dist(&q.include_left(&fx, n)?)?);
                    }
                    if n >= 1 {
                        rcap = rcap.max(f(&pa.cap_right(&x, n, sh)?, n - 1).dist(&q.cap_right(&fx, n, sh)?)?);
                        if sh == Shading::Plus {
                            let lhs = self.apply(&pa.cap_left(&x, n)?, n - 1, Shading::Minus);
                            lcap = lcap.max(lhs.dist(&q.cap_left(&fx, n)?)?);
                        }
                    }
                }
                r.push(format!("{tag}: multiplicative"), "CompressionIso", hom, tol);
                r.push(format!("{tag}: adjoint"), "CompressionIso", adj, tol);
                if n < top {
                    r.push(format!("{tag}: right inclusion"), "CompressionIso", rinc, tol);
                    if sh == Shading::Minus {
                        r.push(format!("{tag}: left inclusion"), "CompressionIso", linc, tol);
                    }
                }
                if n >= 1 {
                    r.push(format!("{tag}: right capping"), "CompressionIso", rcap, tol);
                    if sh == Shading::Plus {
                        r.push(format!("{tag}: left capping"), "CompressionIso", lcap, tol);
                    }
                }
                if n >= 2 {
                    let k = n - 1;
                    r.push(format!("{tag}: Jones projection e_{k}"), "CompressionIso", f(&pa.jones(k, sh)?, n).dist(&q.jones(k, sh)?)?, tol);
                }
            }
        }
        Ok(r)
    }
}

fn flatten(x: &AlgebraElement) -> Vec<C64> {
    x.blocks().iter().flat_map(|b| b.iter().copied().collect::<Vec<_>>()).collect()
}

// ---------------------------------------------------------------------------
// The module embedding

/// `Φ: TLJ(d)_{n,±} → 𝒢_{n,±}(Γ)`: prepend `2r` strands (`2r+1` for the
/// negative shading), represent in the path tower of `Γ`, read off loops.
pub struct ModuleEmbedding {
    pa: CanonicalPA,
    r: usize,
    n_max: usize,
}

/// Embedding for box spaces up to `n_max`, at the least standard level.
pub fn embed_module(modulus: f64, graph: &WeightedBipartiteGraph, n_max: usize) -> Result<ModuleEmbedding> {
    if (graph.modulus() - modulus).abs() > 1e-9 * modulus.max(1.0) {
        return Err(Error::Modulus(modulus, graph.modulus()));
    }
    let probe = build_tower(graph, 2 * graph.diameter() + 2)?;
    let r = find_standard_level(&probe)?.r;
    embed_module_at(modulus, graph, n_max, r)
}

/// Embedding at a prescribed level `r`, which must be standard.
pub fn embed_module_at(modulus: f64, graph: &WeightedBipartiteGraph, n_max: usize, r: usize) -> Result<ModuleEmbedding> {
    if (graph.modulus() - modulus).abs() > 1e-9 * modulus.max(1.0) {
        return Err(Error::Modulus(modulus, graph.modulus()));
    }
    let tower = Arc::new(build_tower(graph, 2 * r + n_max + 2)?);
    let rec = recognition_report(&tower, 2 * r, 1e-9)?;
    if !rec.all_pass() {
        return Err(Error::Invalid(format!("level {r} is not standard: {}", rec.first_failure().unwrap().name)));
    }
    Ok(ModuleEmbedding { pa: CanonicalPA::new(tower, 2 * r)?, r, n_max })
}

impl ModuleEmbedding {
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn canonical_pa(&self) -> &CanonicalPA {
        &self.pa
    }

    pub fn gpa(&self) -> &GraphPlanarAlgebra {
        self.pa.gpa().expect("path-model tower")
    }

    pub fn modulus(&self) -> f64 {
        self.pa.modulus()
    }

    /// `1_{prefix} ⊗ x` represented in the tower.
    pub fn tower_image(&self, x: &TLElement) -> Result<AlgebraElement> {
        if x.bottom() != x.top() {
            return Err(Error::Shape("only square TL elements have images".into()));
        }
        let prefix = 2 * self.r + delta(x.shading());
        let one = TLElement::identity(prefix, Shading::Plus, x.modulus());
        tljdiag::represent(self.pa.tower(), &one.tensor(&x.with_shading(Shading::Plus))?)
    }

    pub fn phi(&self, x: &TLElement) -> Result<GPAElement> {
        self.pa.to_gpa(&self.tower_image(x)?, x.bottom(), x.shading())
    }

    /// `|Φ̃(x) − from_gpa(Φ(x))|`: how far the tower image is from the
    /// relative commutant.
    pub fn commutant_residual(&self, x: &TLElement) -> Result<f64> {
        self.pa.commutant_residual(&self.tower_image(x)?, x.bottom(), x.shading())
    }

    pub fn phi_diagram(&self, d: &TLDiagram) -> Result<GPAElement> {
        self.phi(&TLElement::from_diagram(d.clone(), c(1.0), self.modulus()))
    }
}

fn random_tl(n: usize, sh: Shading, d: f64, rng: &mut ChaCha8Rng) -> Result<TLElement> {
    use rand::Rng;
    let mut x = TLElement::zero(n, n, sh, d);
    for diag in tljdiag::basis(n)? {
        let v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        x = x.add(&TLElement::from_diagram(diag, v, d).with_shading(sh))?;
    }
    Ok(x)
}

/// The sufficient conditions for a planar map, checked for `Φ` on basis and
/// random elements for `n ≤ n_max`.
pub fn verify_planar_map(emb: &ModuleEmbedding, n_max: usize, samples: usize, seed: u64, tol: f64) -> Result<Report> {
    verify_planar_map_scaled(emb, n_max, samples, seed, tol, 1.0)
}

/// As [`verify_planar_map`], with the GPA left capping multiplied by
/// `left_cap_scale` for fault injection.
pub fn verify_planar_map_scaled(
    emb: &ModuleEmbedding,
    n_max: usize,
    samples: usize,
    seed: u64,
    tol: f64,
    left_cap_scale: f64,
) -> Result<Report> {
    if n_max > emb.n_max {
        return Err(Error::Depth { have: emb.n_max, need: n_max });
    }
    let d = emb.modulus();
    let gpa = emb.gpa();
    let mut r = Report::new(format!("planar map TLJ({d:.6}) -> GPA(r = {})", emb.r)).with_seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sh in shadings() {
        for n in 0..=n_max {
            let tag = format!("n={n}{}", sh.symbol());
            let space = gpa.space(n, sh);
            let one = emb.phi(&TLElement::identity(n, sh, d))?;
            r.push(format!("{tag}: unital"), "Unital", gdist(&one, &GPAElement::identity(&space)), tol);
            if n >= 2 {
                let mut worst: f64 = 0.0;
                for k in 1..n {
                    let e = tljdiag::jones_projection_diagram(k, n, d)?.with_shading(sh);
                    worst = worst.max(gdist(&emb.phi(&e)?, &gpa.jones_projection(k, sh).map(|g| lift(gpa, &g, n))??));
                }
                r.push(format!("{tag}: Jones projections"), "JonesProjections", worst, tol);
            }
            // Basis diagrams followed by random combinations.
            let mut elems: Vec<TLElement> = tljdiag::basis(n)?
                .into_iter()
                .map(|dg| TLElement::from_diagram(dg, c(1.0), d).with_shading(sh))
                .collect();
            for _ in 0..samples {
                elems.push(random_tl(n, sh, d, &mut rng)?);
            }
            let images: Vec<GPAElement> = elems.iter().map(|x| emb.phi(x)).collect::<Result<_>>()?;
            let (mut comm, mut hom, mut adj, mut rinc, mut linc, mut rcap, mut lcap) =
                (0f64, 0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
            for (i, x) in elems.iter().enumerate() {
                let gx = &images[i];
                comm = comm.max(emb.commutant_residual(x)?);
                let y = &elems[(i * 7 + 3) % elems.len()];
                let gy = &images[(i * 7 + 3) % elems.len()];
                hom = hom.max(gdist(&emb.phi(&x.mul(y)?)?, &gx.mul(gy)?));
                adj = adj.max(gdist(&emb.phi(&x.adjoint())?, &gx.adjoint()));
                if n < n_max {
                    rinc = rinc.max(gdist(&emb.phi(&x.include_right())?, &gpa.include_right(gx)));
                    if sh == Shading::Minus {
                        linc = linc.max(gdist(&emb.phi(&x.include_left())?, &gpa.include_left(gx)));
                    }
                }
                if n >= 1 {
                    rcap = rcap.max(gdist(&emb.phi(&x.cap_right()?)?, &gpa.cap_right(gx)?));
                    if sh == Shading::Plus {
                        let want = gpa.cap_left(gx)?.scale(c(left_cap_scale));
                        lcap = lcap.max(gdist(&emb.phi(&x.cap_left()?)?, &want));
                    }
                }
            }
            r.push(format!("{tag}: image in relative commutant"), "Commutant", comm, tol);
            r.push(format!("{tag}: multiplicative"), "Homomorphism", hom, tol);
            r.push(format!("{tag}: adjoint"), "Adjoint", adj, tol);
            if n < n_max {
                r.push(format!("{tag}: right inclusion"), "RightInclusion", rinc, tol);
                if sh == Shading::Minus {
                    r.push(format!("{tag}: left inclusion"), "LeftInclusion", linc, tol);
                }
            }
            if n >= 1 {
                r.push(format!("{tag}: right capping"), "RightCapping", rcap, tol);
                if sh == Shading::Plus {
                    r.push(format!("{tag}: left capping"), "LeftCapping", lcap, tol);
                }
            }
            // Injectivity on the quotient: rank of Φ(basis) against the
            // dimension of TLJ_n in the tower.
            let nb = tljdiag::basis(n)?.len();
            let rows: Vec<Vec<C64>> = images[..nb].iter().map(|g| g.coefficients()).collect();
            let m = CMat::from_fn(nb, space.dim(), |i, j| rows[i][j]);
            let want = tljdiag::image_dimension(emb.pa.tower(), n)?;
            r.push_exact(format!("{tag}: injective (rank vs image dimension)"), "Injective", linalg::rank(&m, 1e-8) as i64, want as i64);
        }
    }
    Ok(r)
}

/// `gpa.jones_projection(k)` lives in `𝒢_{k+1}`; include it up to `𝒢_n`.
fn lift(gpa: &GraphPlanarAlgebra, g: &GPAElement, n: usize) -> Result<GPAElement> {
    let mut x = g.clone();
    while x.space().n() < n {
        x = gpa.include_right(&x);
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Invariance

/// Loop permutation induced by a vertex automorphism, or `None` if some
/// edge has no image.
fn loop_permutation(graph: &WeightedBipartiteGraph, sigma: &[usize], space: &LoopSpace) -> Option<Vec<usize>> {
    let emap: Vec<usize> = graph
        .edges()
        .iter()
        .map(|e| {
            let (a, b) = (sigma[e.even], sigma[e.odd]);
            graph.edges().iter().position(|f| f.even == a && f.odd == b && f.copy == e.copy)
        })
        .collect::<Option<Vec<_>>>()?;
    let mut perm = Vec::with_capacity(space.dim());
    for k in 0..space.dim() {
        let lp = space.loop_at(k);
        let left: Vec<usize> = lp.left.iter().map(|&e| emap[e]).collect();
        let right: Vec<usize> = lp.right.iter().map(|&e| emap[e]).collect();
        let (b, i) = space.locate(sigma[lp.start], &left)?;
        let (_, j) = space.locate(sigma[lp.start], &right)?;
        perm.push(space.loop_index(b, i, j));
    }
    Some(perm)
}

/// Compare `Φ` built at levels `r1 ≤ r2` through iterated `shift_iso`, and
/// optionally the embedding for the basepoint moved to `basepoint` through
/// compression by a minimal projection.
pub fn invariance_check(
    graph: &WeightedBipartiteGraph,
    r1: usize,
    r2: usize,
    basepoint: Option<usize>,
    n_max: usize,
    seed: u64,
    tol: f64,
) -> Result<Report> {
    if r1 > r2 {
        return invariance_check(graph, r2, r1, basepoint, n_max, seed, tol);
    }
    let d = graph.modulus();
    let mut report = Report::new(format!("embedding invariance r = {r1}, {r2}")).with_seed(seed);
    let probe = build_tower(graph, 2 * graph.diameter() + 2)?;
    let r0 = find_standard_level(&probe)?.r;
    if r1 < r0 {
        return Err(Error::Invalid(format!("level {r1} is below the standard level {r0}")));
    }
    let tower = Arc::new(build_tower(graph, 2 * r2 + n_max + 2)?);
    let pas: Vec<CanonicalPA> = (r1..=r2).map(|r| CanonicalPA::new(tower.clone(), 2 * r)).collect::<Result<_>>()?;
    let emb = |r: usize| ModuleEmbedding { pa: CanonicalPA::new(tower.clone(), 2 * r).expect("canonical PA"), r, n_max };
    let (e1, e2) = (emb(r1), emb(r2));
    let mut worst: f64 = 0.0;
    for sh in shadings() {
        for n in 0..=n_max {
            for dg in tljdiag::basis(n)? {
                let x = TLElement::from_diagram(dg, c(1.0), d).with_shading(sh);
                let mut y = e1.tower_image(&x)?;
                for w in pas.windows(2) {
                    y = shift_iso(&w[0], &w[1], &y, n, sh)?;
                }
                worst = worst.max(y.dist(&e2.tower_image(&x)?)?);
            }
        }
    }
    report.push(format!("shift_iso^{} after Phi at r={r1} equals Phi at r={r2}", r2 - r1), "ShiftIso", worst, tol);
    for (k, w) in pas.windows(2).enumerate() {
        let rep = verify_shift_iso(&w[0], &w[1], n_max.min(2), 3, seed + k as u64, tol)?;
        report.extend_prefixed(&format!("r={}->{}: ", r1 + k, r1 + k + 1), rep);
    }
    if let Some(u) = basepoint {
        report.extend(basepoint_change(graph, u, n_max, seed, tol)?);
    }
    Ok(report)
}

/// Move the basepoint to the even vertex `u` by compressing with the
/// minimal projection at the first path to `u`, then compare both
/// embeddings inside GPA(Γ) up to a graph automorphism.
pub fn basepoint_change(graph: &WeightedBipartiteGraph, u: usize, n_max: usize, seed: u64, tol: f64) -> Result<Report> {
    if !graph.is_even(u) {
        return Err(Error::Invalid(format!("basepoint {} must be even", graph.label(u))));
    }
    let d = graph.modulus();
    let mut report = Report::new(format!("basepoint move {} -> {}", graph.label(graph.basepoint()), graph.label(u)));
    let probe = build_tower(graph, 2 * graph.diameter() + 2)?;
    let r_m = find_standard_level(&probe)?.r;
    let j = graph.distances_from(graph.basepoint())[u] / 2;
    // Base level 2s ≥ 2j where the projection already has full central support.
    let mut s = r_m.max(j);
    let (tower, frame, xi, p) = loop {
        let t = Arc::new(build_tower(graph, 2 * s + n_max + 4)?);
        let frame = Arc::new(PathFrame::from_tower(&t)?);
        let xi = frame.paths_to(2 * j, u).first().cloned().ok_or_else(|| Error::Invalid("vertex not reached".into()))?;
        let ext: Vec<Vec<usize>> = extensions(&frame, &xi, 2 * j, 2 * s);
        let mut p = AlgebraElement::zero(t.level(2 * s));
        for path in &ext {
            let (b, i) = frame.locate(2 * s, path).expect("frame path");
            p.block_mut(b)[(i, i)] = c(1.0);
        }
        if p.support(ZERO_TOL).len() == t.level(2 * s).block_count() {
            break (t, frame, xi, p);
        }
        s += 1;
        if s > r_m + graph.diameter() + 1 {
            return Err(Error::IdealSpan(format!("no level reaches full support from {}", graph.label(u))));
        }
    };
    let emb_m = ModuleEmbedding { pa: CanonicalPA::with_frame(tower, Some(frame), 2 * s)?, r: s, n_max };
    let pa = emb_m.canonical_pa();
    let ci = compression_iso(pa, &p, 2 * j)?;
    report.extend_prefixed("compression: ", ci.verify(pa, n_max.min(2), 3, seed, tol)?);
    let q = &ci.compressed;
    let moved_base = q.frame().map(|f| f.graph().basepoint());
    report.push_exact("compressed frame is based at the new vertex", "CompressionIso", moved_base.map_or(-1, |b| b as i64), u as i64);
    let _ = xi;
    // Φ_M compressed by p, read in the frame based at u, against Φ_N.
    let phi_m = |x: &TLElement| -> Result<Vec<C64>> {
        let (n, sh) = (x.bottom(), x.shading());
        Ok(q.to_gpa(&ci.apply(&emb_m.tower_image(x)?, n, sh), n, sh)?.coefficients())
    };
    let moved = graph.with_basepoint(u)?;
    let emb_n = embed_module(d, &moved, n_max)?;
    let autos = graph.automorphisms(1e-9);
    let mut best: Option<(f64, usize)> = None;
    for (ai, sigma) in autos.iter().enumerate() {
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for sh in shadings() {
            for n in 0..=n_max {
                let space = emb_m.gpa().space(n, sh);
                let Some(perm) = loop_permutation(graph, sigma, &space) else {
                    ok = false;
                    break;
                };
                for dg in tljdiag::basis(n)? {
                    let x = TLElement::from_diagram(dg, c(1.0), d).with_shading(sh);
                    let a = phi_m(&x)?;
                    let b = emb_n.phi(&x)?.coefficients();
                    for k in 0..a.len() {
                        worst = worst.max((a[k] - b[perm[k]]).norm());
                    }
                }
            }
        }
        if ok && best.is_none_or(|(w, _)| worst < w) {
            best = Some((worst, ai));
        }
    }
    match best {
        Some((w, ai)) if w <= tol => {
            let sigma = &autos[ai];
            let map: Vec<String> = (0..sigma.len()).map(|v| format!("{}->{}", graph.label(v), graph.label(sigma[v]))).collect();
            report.push_detail("embeddings agree up to a loop permutation", "Invariance", w, tol, Some(map.join(" ")));
        }
        Some((w, _)) => report.push_detail(
            "embeddings agree up to a loop permutation",
            "Invariance",
            w,
            tol,
            Some("inconclusive: no permutation witness found".into()),
        ),
        None => report.push_detail(
            "embeddings agree up to a loop permutation",
            "Invariance",
            f64::INFINITY,
            tol,
            Some("inconclusive: no automorphism candidates".into()),
        ),
    }
    Ok(report)
}

/// All extensions of `xi` (a path of length `from`) to length `to`.
fn extensions(frame: &PathFrame, xi: &[usize], from: usize, to: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for (b, rows) in frame.levels[to].rows.iter().enumerate() {
        let _ = b;
        for p in rows {
            if p[..from] == *xi {
                out.push(p.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::builtin;

    fn tower(name: &str, depth: usize) -> Arc<MarkovTower> {
        Arc::new(build_tower(&builtin(name).unwrap(), depth).unwrap())
    }

    fn assert_pass(r: &Report) {
        if let Some(c) = r.first_failure() {
            panic!("{}: {} [{}] residual {:.3e} {:?}", r.title, c.name, c.paper_label, c.max_residual, c.detail);
        }
    }

    #[test]
    fn trivial_inclusion_has_unit_basis() {
        let t = tower("A2", 4);
        let smi = pimsner_popa_basis(t.inclusion(0)).unwrap();
        assert_eq!(smi.basis().len(), 1);
        assert!((smi.watatani_index() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn a3_index_is_two() {
        let t = tower("A3", 6);
        let smi = pimsner_popa_basis(t.inclusion(2)).unwrap();
        assert!((smi.watatani_index() - 2.0).abs() < 1e-10);
        assert_pass(&verify_strongly_markov(&t, 2, 5, 1, 1e-9).unwrap());
        // Index d² from the standard level on; M_0 ⊂ M_1 is C ⊂ C.
        assert!((pimsner_popa_basis(t.inclusion(0)).unwrap().watatani_index() - 1.0).abs() < 1e-12);
        for a in 2..5 {
            let smi = pimsner_popa_basis(t.inclusion(a)).unwrap();
            let alt = pimsner_popa_basis_reversed(t.inclusion(a)).unwrap();
            assert!((smi.watatani_index() - 2.0).abs() < 1e-9);
            assert!((alt.watatani_index() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn non_markov_inclusion_is_rejected() {
        use crate::multimatrix::MultiMatrixAlgebra;
        // C ⊂ C ⊕ M_2 with a non-Markov trace: Σ b b* is not scalar.
        let lower = MultiMatrixAlgebra::new(vec!["a".into()], vec![1], vec![1.0], true).unwrap().into_arc();
        let upper = MultiMatrixAlgebra::new(vec!["x".into(), "y".into()], vec![1, 1], vec![0.3, 0.7], true).unwrap().into_arc();
        let incl = Arc::new(UnitalInclusion::from_lambda(lower, upper, &[vec![1, 1]]).unwrap());
        assert!(matches!(pimsner_popa_basis(&incl), Err(Error::NotMarkov(_))));
    }

    #[test]
    fn standard_levels() {
        for (g, want) in [("A2", 0), ("A3", 1), ("E6", 2)] {
            let gr = builtin(g).unwrap();
            let t = build_tower(&gr, 2 * gr.diameter() + 2).unwrap();
            assert_eq!(find_standard_level(&t).unwrap().r, want, "{g}");
        }
        let t = tower("A3", 6);
        assert!(!recognition_report(&t, 0, 1e-9).unwrap().all_pass());
    }

    #[test]
    fn canonical_pa_matches_gpa() {
        let t = tower("A3", 6);
        let pa = CanonicalPA::new(t, 2).unwrap();
        assert_eq!(pa.box_dim(0, Shading::Plus).unwrap(), 2);
        for n in 0..=3 {
            for sh in shadings() {
                let want = crate::gpa::box_dimension(pa.frame().unwrap().graph(), n, sh);
                assert_eq!(pa.box_dim(n, sh).unwrap(), want);
            }
        }
        let one = pa.to_gpa(&pa.identity(2, Shading::Plus).unwrap(), 2, Shading::Plus).unwrap();
        assert!(one.dist(&GPAElement::identity(one.space())).unwrap() < 1e-14);
        assert_pass(&verify_gpa_isomorphism(&pa, 3, 3, 7, 1e-9).unwrap());
    }

    #[test]
    fn shift_isomorphism_a3() {
        let t = tower("A3", 8);
        let p = CanonicalPA::new(t.clone(), 2).unwrap();
        let q = CanonicalPA::new(t, 4).unwrap();
        assert_pass(&verify_shift_iso(&p, &q, 2, 3, 3, 1e-9).unwrap());
    }

    #[test]
    fn compression_rejects_partial_support() {
        let t = tower("A3", 6);
        let pa = CanonicalPA::new(t.clone(), 2).unwrap();
        let p = AlgebraElement::central_projection(t.level(2), 0);
        match compression_iso(&pa, &p, 0) {
            Err(Error::IdealSpan(label)) => assert_eq!(label, t.level(2).label(1)),
            other => panic!("expected an ideal span error, got {:?}", other.err()),
        }
        // p = 1 gives the identity map.
        let ci = compression_iso(&pa, &AlgebraElement::identity(t.level(2)), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = pa.random_box(2, Shading::Plus, &mut rng).unwrap();
        assert!(ci.apply(&x, 2, Shading::Plus).dist(&x).unwrap() < 1e-14);
        assert_pass(&ci.verify(&pa, 2, 2, 2, 1e-9).unwrap());
    }

    #[test]
    fn a3_embedding_and_fault_injection() {
        let a3 = builtin("A3").unwrap();
        let emb = embed_module(2f64.sqrt(), &a3, 3).unwrap();
        assert_eq!(emb.r(), 1);
        let e1 = tljdiag::jones_projection_diagram(1, 2, 2f64.sqrt()).unwrap();
        let g = emb.gpa().jones_projection(1, Shading::Plus).unwrap();
        assert!(emb.phi(&e1).unwrap().dist(&g).unwrap() < 1e-12);
        assert_pass(&verify_planar_map(&emb, 3, 3, 5, 1e-9).unwrap());
        let bad = verify_planar_map_scaled(&emb, 3, 3, 5, 1e-9, 2f64.sqrt()).unwrap();
        let failing: Vec<&str> = bad.checks.iter().filter(|c| !c.pass).map(|c| c.paper_label.as_str()).collect();
        assert!(!failing.is_empty());
        assert!(failing.iter().all(|&l| l == "LeftCapping"));
        assert!(matches!(embed_module(1.5, &a3, 2), Err(Error::Modulus(..))));
    }

    #[test]
    fn injective_on_tl4() {
        let a3 = builtin("A3").unwrap();
        let emb = embed_module(2f64.sqrt(), &a3, 4).unwrap();
        let basis = tljdiag::basis(4).unwrap();
        let rows: Vec<Vec<C64>> = basis.iter().map(|d| emb.phi_diagram(d).unwrap().coefficients()).collect();
        let m = CMat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        assert_eq!(linalg::rank(&m, 1e-8), tljdiag::image_dimension(emb.canonical_pa().tower(), 4).unwrap());
    }

    #[test]
    fn e6_embedding() {
        let e6 = builtin("E6").unwrap();
        let emb = embed_module(e6.modulus(), &e6, 3).unwrap();
        assert_eq!(emb.r(), 2);
        assert_pass(&verify_planar_map(&emb, 3, 2, 5, 1e-9).unwrap());
    }

    #[test]
    fn a3_invariance() {
        let a3 = builtin("A3").unwrap();
        let same = invariance_check(&a3, 1, 1, None, 2, 0, 1e-8).unwrap();
        assert_pass(&same);
        let rep = invariance_check(&a3, 1, 2, Some(a3.index_of("v2").unwrap()), 3, 3, 1e-8).unwrap();
        assert_pass(&rep);
        assert!(rep.checks.iter().any(|c| c.paper_label == "Invariance"));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn reconstruction_holds(seed in 0u64..1000) {
            let t = tower("D4", 5);
            let smi = pimsner_popa_basis(t.inclusion(3)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = AlgebraElement::random_complex(t.level(4), &mut rng);
            proptest::prop_assert!(smi.reconstruction_residual(&x) < 1e-9);
        }
    }
}
