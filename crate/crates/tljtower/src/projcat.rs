//! The projection category of a Markov tower.
//!
//! Objects are `[n]` for `n ≥ 0`. A morphism `[n] → [m]` with `n ≡ m mod 2`
//! is carried by an element of `M_{(n+m)/2}`; going up, the right strands of
//! the carrier's bottom are bent up to the top, and going down the top right
//! strands are bent down. Diagrams are stacked with `x·y` meaning `x` on top
//! of `y`, matching [`tljdiag`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, c, C64};
use crate::multimatrix::AlgebraElement;
use crate::report::Report;
use crate::tljdiag::{self, nested, Pt, Shading, TLDiagram, TLElement};
use crate::tower::{principal_graph, MarkovTower};

#[derive(Clone, Debug)]
pub struct ProjMorphism {
    source: usize,
    target: usize,
    carrier: AlgebraElement,
}

fn carrier_level(source: usize, target: usize) -> Result<usize> {
    if (source + target) % 2 != 0 {
        return Err(Error::Invalid(format!("parity mismatch: [{source}] -> [{target}]")));
    }
    Ok((source + target) / 2)
}

fn need(t: &MarkovTower, level: usize) -> Result<()> {
    if level > t.depth() {
        return Err(Error::Depth { have: t.depth(), need: level });
    }
    Ok(())
}

impl ProjMorphism {
    pub fn new(t: &MarkovTower, source: usize, target: usize, carrier: AlgebraElement) -> Result<Self> {
        let level = carrier_level(source, target)?;
        need(t, level)?;
        if !carrier.parent().same_shape(t.level(level)) {
            return Err(Error::Shape(format!("carrier of [{source}] -> [{target}] must lie in M_{level}")));
        }
        Ok(ProjMorphism { source, target, carrier })
    }

    pub fn identity(t: &MarkovTower, n: usize) -> Result<Self> {
        need(t, n)?;
        Ok(ProjMorphism { source: n, target: n, carrier: AlgebraElement::identity(t.level(n)) })
    }

    pub fn zero(t: &MarkovTower, source: usize, target: usize) -> Result<Self> {
        let level = carrier_level(source, target)?;
        need(t, level)?;
        Ok(ProjMorphism { source, target, carrier: AlgebraElement::zero(t.level(level)) })
    }

    /// Complex Gaussian carrier.
    pub fn random(t: &MarkovTower, source: usize, target: usize, rng: &mut impl Rng) -> Result<Self> {
        let level = carrier_level(source, target)?;
        need(t, level)?;
        Ok(ProjMorphism { source, target, carrier: AlgebraElement::random_complex(t.level(level), rng) })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn carrier(&self) -> &AlgebraElement {
        &self.carrier
    }

    pub fn level(&self) -> usize {
        (self.source + self.target) / 2
    }

    pub fn is_up(&self) -> bool {
        self.target > self.source
    }

    pub fn is_endo(&self) -> bool {
        self.source == self.target
    }

    pub fn dagger(&self) -> Self {
        ProjMorphism { source: self.target, target: self.source, carrier: self.carrier.adjoint() }
    }

    pub fn scale(&self, s: C64) -> Self {
        ProjMorphism { carrier: self.carrier.scale(s), ..self.clone() }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(ProjMorphism { carrier: self.carrier.try_add(&other.carrier)?, ..self.clone() })
    }

    /// Largest entrywise difference of the carriers.
    pub fn dist(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        self.carrier.dist(&other.carrier)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if (self.source, self.target) != (other.source, other.target) {
            return Err(Error::Invalid(format!(
                "morphisms [{}] -> [{}] and [{}] -> [{}] differ in type",
                self.source, self.target, other.source, other.target
            )));
        }
        Ok(())
    }
}

fn lift(t: &MarkovTower, x: &AlgebraElement, from: usize, to: usize) -> Result<AlgebraElement> {
    need(t, to)?;
    Ok(t.embed(x, from, to))
}

fn rep(t: &MarkovTower, d: &TLDiagram) -> Result<AlgebraElement> {
    tljdiag::represent_diagram(t, d)
}

fn diagram(m: usize, pairs: &[(Pt, Pt)]) -> TLDiagram {
    TLDiagram::from_pairs(m, m, Shading::Plus, pairs).expect("planar by construction")
}

/// `D1(n,i,j)` on `n+2i+j` strands. Top: `n` through, a nested cap of `i`,
/// `j` through. Bottom: `n` through, `j` through, a nested cup of `i`.
pub fn kink_diagram(n: usize, i: usize, j: usize) -> TLDiagram {
    let m = n + 2 * i + j;
    let mut pairs: Vec<(Pt, Pt)> = (0..n).map(|p| (Pt::B(p), Pt::T(p))).collect();
    pairs.extend((0..j).map(|p| (Pt::B(n + p), Pt::T(n + 2 * i + p))));
    for (a, b) in nested(n, i) {
        pairs.push((Pt::T(a), Pt::T(b)));
    }
    for (a, b) in nested(n + j, i) {
        pairs.push((Pt::B(a), Pt::B(b)));
    }
    diagram(m, &pairs)
}

/// `D2(n,i,j)`, the flip of `D1(n,i,j)`.
pub fn kink_dagger_diagram(n: usize, i: usize, j: usize) -> TLDiagram {
    kink_diagram(n, i, j).flip()
}

// (C1) up then up: x ∈ M_{n+i}, y ∈ M_{n+2i+j}.
fn c1(t: &MarkovTower, n: usize, i: usize, j: usize, x: &AlgebraElement, y: &AlgebraElement) -> Result<AlgebraElement> {
    let top = n + 2 * i + j;
    let z = y.try_mul(&lift(t, x, n + i, top)?)?.try_mul(&rep(t, &kink_diagram(n, i, j))?)?;
    Ok(t.expect(&z, top, n + i + j).scale_re(t.modulus().powi(i as i32)))
}

// (C2) up then down, ending above the start: x ∈ M_{n+i+j}, y ∈ M_{n+2i+j}.
fn c2(t: &MarkovTower, n: usize, i: usize, j: usize, x: &AlgebraElement, y: &AlgebraElement) -> Result<AlgebraElement> {
    let top = n + 2 * i + j;
    let z = y.try_mul(&lift(t, x, n + i + j, top)?)?.try_mul(&rep(t, &kink_dagger_diagram(n, i, j))?)?;
    Ok(t.expect(&z, top, n + i).scale_re(t.modulus().powi(i as i32)))
}

// (C3) down then up, ending above the start: x ∈ M_{n+i}, y ∈ M_{n+i+j}.
fn c3(t: &MarkovTower, n: usize, i: usize, j: usize, x: &AlgebraElement, y: &AlgebraElement) -> Result<AlgebraElement> {
    let top = n + 2 * i + j;
    let mid = rep(t, &kink_dagger_diagram(n, i, j))?.scale_re(t.modulus().powi(-(i as i32)));
    lift(t, y, n + i + j, top)?.try_mul(&mid)?.try_mul(&lift(t, x, n + i, top)?)
}

/// `g ∘ f`. The three basic cases are computed directly; the others are
/// reduced to them through `(y ∘ x)† = x† ∘ y†`.
pub fn compose(t: &MarkovTower, g: &ProjMorphism, f: &ProjMorphism) -> Result<ProjMorphism> {
    if f.target != g.source {
        return Err(Error::Invalid(format!(
            "cannot compose [{}] -> [{}] after [{}] -> [{}]",
            g.source, g.target, f.source, f.target
        )));
    }
    let (a, b, cc) = (f.source, f.target, g.target);
    let (x, y) = (&f.carrier, &g.carrier);
    let (xs, ys) = (x.adjoint(), y.adjoint());
    let carrier = if a <= b && b <= cc {
        c1(t, a, (b - a) / 2, (cc - b) / 2, x, y)?
    } else if a >= b && b >= cc {
        c1(t, cc, (b - cc) / 2, (a - b) / 2, &ys, &xs)?.adjoint()
    } else if b > a {
        // up then down
        if cc >= a {
            c2(t, a, (cc - a) / 2, (b - cc) / 2, x, y)?
        } else {
            c2(t, cc, (a - cc) / 2, (b - a) / 2, &ys, &xs)?.adjoint()
        }
    } else if cc >= a {
        c3(t, b, (a - b) / 2, (cc - a) / 2, x, y)?
    } else {
        c3(t, b, (cc - b) / 2, (a - cc) / 2, &ys, &xs)?.adjoint()
    };
    Ok(ProjMorphism { source: a, target: cc, carrier })
}

/// Largest entrywise difference of the two sides of the left kink identity
/// `d^i E_{n+i+j}(x·D1(n,i,j)) · DL = x · DR` for `x ∈ M_{n+2i+j}`, both
/// sides in `M_{n+2i+2j}`. `DL` has a nested cap of `i+j` on top, `DR` a cap
/// of `i` then a cap of `j`; both have a cup of `i` then a cup of `j` below.
pub fn left_kink_residual(t: &MarkovTower, n: usize, i: usize, j: usize, x: &AlgebraElement) -> Result<f64> {
    let (mid, top) = (n + 2 * i + j, n + 2 * i + 2 * j);
    need(t, top)?;
    let mut cups: Vec<(Pt, Pt)> = (0..n).map(|p| (Pt::B(p), Pt::T(p))).collect();
    cups.extend(nested(n, i).into_iter().map(|(a, b)| (Pt::B(a), Pt::B(b))));
    cups.extend(nested(n + 2 * i, j).into_iter().map(|(a, b)| (Pt::B(a), Pt::B(b))));
    let mut left = cups.clone();
    left.extend(nested(n, i + j).into_iter().map(|(a, b)| (Pt::T(a), Pt::T(b))));
    let mut right = cups;
    right.extend(nested(n, i).into_iter().map(|(a, b)| (Pt::T(a), Pt::T(b))));
    right.extend(nested(n + 2 * i, j).into_iter().map(|(a, b)| (Pt::T(a), Pt::T(b))));
    let z = x.try_mul(&rep(t, &kink_diagram(n, i, j))?)?;
    let e = t.expect(&z, mid, n + i + j).scale_re(t.modulus().powi(i as i32));
    let lhs = lift(t, &e, n + i + j, top)?.try_mul(&rep(t, &diagram(top, &left))?)?;
    let rhs = lift(t, x, mid, top)?.try_mul(&rep(t, &diagram(top, &right))?)?;
    lhs.dist(&rhs)
}

// ---------------------------------------------------------------------------
// Linking algebra

/// Parameters of the linking algebra on the objects
/// `[n], [n+2i], [n+2i+2j], [n+2i+2j+2k]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkingParams {
    pub n: usize,
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl LinkingParams {
    pub fn new(n: usize, i: usize, j: usize, k: usize) -> Self {
        LinkingParams { n, i, j, k }
    }

    pub fn objects(&self) -> [usize; 4] {
        let o1 = self.n + 2 * self.i;
        let o2 = o1 + 2 * self.j;
        [self.n, o1, o2, o2 + 2 * self.k]
    }

    /// Level `N = n+2i+2j+2k` of the target algebra.
    pub fn top(&self) -> usize {
        self.objects()[3]
    }

    fn groups(&self) -> [usize; 3] {
        [self.i, self.j, self.k]
    }
}

/// A 4×4 array whose `(a, b)` entry is a morphism `[o_b] → [o_a]`.
#[derive(Clone, Debug)]
pub struct LinkingElement {
    params: LinkingParams,
    entries: Vec<ProjMorphism>,
}

impl LinkingElement {
    pub fn new(params: LinkingParams, entries: Vec<ProjMorphism>) -> Result<Self> {
        if entries.len() != 16 {
            return Err(Error::Shape(format!("{} entries given, 16 expected", entries.len())));
        }
        let o = params.objects();
        for (ix, e) in entries.iter().enumerate() {
            if (e.target, e.source) != (o[ix / 4], o[ix % 4]) {
                return Err(Error::Invalid(format!("entry ({}, {}) must be [{}] -> [{}]", ix / 4, ix % 4, o[ix % 4], o[ix / 4])));
            }
        }
        Ok(LinkingElement { params, entries })
    }

    fn build(t: &MarkovTower, params: LinkingParams, mut f: impl FnMut(usize, usize) -> Result<ProjMorphism>) -> Result<Self> {
        need(t, params.top())?;
        let entries = (0..16).map(|ix| f(ix / 4, ix % 4)).collect::<Result<Vec<_>>>()?;
        Self::new(params, entries)
    }

    pub fn identity(t: &MarkovTower, params: LinkingParams) -> Result<Self> {
        let o = params.objects();
        Self::build(t, params, |a, b| if a == b { ProjMorphism::identity(t, o[a]) } else { ProjMorphism::zero(t, o[b], o[a]) })
    }

    pub fn random(t: &MarkovTower, params: LinkingParams, rng: &mut impl Rng) -> Result<Self> {
        let o = params.objects();
        Self::build(t, params, |a, b| ProjMorphism::random(t, o[b], o[a], rng))
    }

    pub fn params(&self) -> LinkingParams {
        self.params
    }

    pub fn entry(&self, a: usize, b: usize) -> &ProjMorphism {
        &self.entries[4 * a + b]
    }

    /// Entrywise dagger with transposition.
    pub fn dagger(&self) -> Self {
        let entries = (0..16).map(|ix| self.entry(ix % 4, ix / 4).dagger()).collect();
        LinkingElement { params: self.params, entries }
    }

    /// `(x·y)_{ac} = Σ_b x_{ab} ∘ y_{bc}`.
    pub fn product(&self, t: &MarkovTower, y: &Self) -> Result<Self> {
        if self.params != y.params {
            return Err(Error::Invalid("linking elements with different parameters".into()));
        }
        let mut entries = Vec::with_capacity(16);
        for a in 0..4 {
            for cc in 0..4 {
                let mut acc = compose(t, self.entry(a, 0), y.entry(0, cc))?;
                for b in 1..4 {
                    acc = acc.try_add(&compose(t, self.entry(a, b), y.entry(b, cc))?)?;
                }
                entries.push(acc);
            }
        }
        Ok(LinkingElement { params: self.params, entries })
    }

    /// Dimension as a vector space: the sum of the 16 carrier dimensions.
    pub fn dimension(t: &MarkovTower, params: LinkingParams) -> usize {
        let o = params.objects();
        (0..16).map(|ix| t.level((o[ix / 4] + o[ix % 4]) / 2).dim()).sum()
    }
}

/// Diagram `T_{ab}` for `o_a ≤ o_b`: a morphism `[o_b] → [o_a]` carried by
/// `X ∈ M_m` maps to `T_{ab} · X`. The top right `s` strands of `X` are bent
/// down to the bottom, the groups between `a` and `b` are capped on top, and
/// the groups above `b` are capped and cupped.
fn linking_diagram(params: &LinkingParams, a: usize, b: usize) -> TLDiagram {
    let o = params.objects();
    let g = params.groups();
    let big = params.top();
    let (m, s) = ((o[a] + o[b]) / 2, (o[b] - o[a]) / 2);
    let mut pairs: Vec<(Pt, Pt)> = (0..o[a]).map(|p| (Pt::B(p), Pt::T(p))).collect();
    pairs.extend((0..s).map(|q| (Pt::B(m - 1 - q), Pt::B(m + q))));
    for (gi, &size) in g.iter().enumerate() {
        let grp = gi + 1;
        let pos = o[grp] - 2 * size;
        if grp > a {
            pairs.extend(nested(pos, size).into_iter().map(|(x, y)| (Pt::T(x), Pt::T(y))));
        }
        if grp > b {
            pairs.extend(nested(pos, size).into_iter().map(|(x, y)| (Pt::B(x), Pt::B(y))));
        }
    }
    diagram(big, &pairs)
}

/// `π(x)`: the 16 entries, each in `M_N`, of the image of `x` in the
/// compressed matrix algebra.
pub fn linking_map(t: &MarkovTower, x: &LinkingElement) -> Result<Vec<AlgebraElement>> {
    let p = x.params;
    let o = p.objects();
    let big = p.top();
    need(t, big)?;
    let d = t.modulus();
    let mut out = Vec::with_capacity(16);
    for a in 0..4 {
        for b in 0..4 {
            let e = x.entry(a, b);
            let s = d.powf(-((big - o[a].min(o[b])) as f64) / 2.0);
            let xe = lift(t, &e.carrier, e.level(), big)?;
            let v = if o[a] <= o[b] {
                rep(t, &linking_diagram(&p, a, b))?.try_mul(&xe)?
            } else {
                xe.try_mul(&rep(t, &linking_diagram(&p, b, a).flip())?)?
            };
            out.push(v.scale_re(s));
        }
    }
    Ok(out)
}

fn block_product(x: &[AlgebraElement], y: &[AlgebraElement]) -> Result<Vec<AlgebraElement>> {
    let mut out = Vec::with_capacity(16);
    for a in 0..4 {
        for cc in 0..4 {
            let mut acc = x[4 * a].try_mul(&y[cc])?;
            for b in 1..4 {
                acc = acc.try_add(&x[4 * a + b].try_mul(&y[4 * b + cc])?)?;
            }
            out.push(acc);
        }
    }
    Ok(out)
}

fn block_dist(x: &[AlgebraElement], y: &[AlgebraElement]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for (u, v) in x.iter().zip(y) {
        m = m.max(u.dist(v)?);
    }
    Ok(m)
}

fn block_scale(x: &[AlgebraElement]) -> f64 {
    x.iter().map(|e| e.max_abs()).fold(1.0, f64::max)
}

/// Numerical rank of `π` on the linking algebra. Distinct entries land in
/// distinct slots, and on slot `(a, b)` the Gram form of the images is
/// `(X, Y) ↦ s² tr_m(Y* Q X)` with `Q = E_m(T*T)` (or `tr_m(Y* X Q)` with
/// `Q = E_m(T T*)` when `T` multiplies on the right), so the rank is
/// `Σ size_b · rank(Q_b)` over the blocks of `M_m`.
pub fn linking_rank(t: &MarkovTower, params: LinkingParams) -> Result<usize> {
    let o = params.objects();
    let big = params.top();
    need(t, big)?;
    let mut rank = 0;
    for a in 0..4 {
        for b in 0..4 {
            let m = (o[a] + o[b]) / 2;
            let tt = if o[a] <= o[b] {
                let d = rep(t, &linking_diagram(&params, a, b))?;
                d.adjoint().try_mul(&d)?
            } else {
                let d = rep(t, &linking_diagram(&params, b, a).flip())?;
                d.try_mul(&d.adjoint())?
            };
            let q = t.expect(&tt, big, m);
            for (blk, qb) in q.blocks().iter().enumerate() {
                let (eig, _) = linalg::hermitian_eigen(qb);
                let top = eig.iter().cloned().fold(0.0, f64::max);
                rank += q.parent().size(blk) * eig.iter().filter(|&&e| e > 1e-12 * top.max(1.0)).count();
            }
        }
    }
    Ok(rank)
}

const ASSOC_SAMPLES: usize = 5;

/// Homomorphism, dagger, unitality and injectivity of `π` on `samples`
/// seeded random pairs. Associativity of the linking product is checked
/// directly on the first few triples.
pub fn verify_linking(t: &MarkovTower, params: LinkingParams, samples: usize, seed: u64, tol: f64) -> Result<Report> {
    let LinkingParams { n, i, j, k } = params;
    let tag = format!("(n,i,j,k)=({n},{i},{j},{k})");
    let mut rep = Report::new(format!("linking map {tag}")).with_seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hom, mut dag, mut assoc): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for s_ix in 0..samples {
        let x = LinkingElement::random(t, params, &mut rng)?;
        let y = LinkingElement::random(t, params, &mut rng)?;
        let (px, py) = (linking_map(t, &x)?, linking_map(t, &y)?);
        let pxy = linking_map(t, &x.product(t, &y)?)?;
        let want = block_product(&px, &py)?;
        hom = hom.max(block_dist(&pxy, &want)? / block_scale(&want));
        let pxd = linking_map(t, &x.dagger())?;
        let adj: Vec<AlgebraElement> = (0..16).map(|ix| px[4 * (ix % 4) + ix / 4].adjoint()).collect();
        dag = dag.max(block_dist(&pxd, &adj)? / block_scale(&adj));
        if s_ix < ASSOC_SAMPLES {
            let z = LinkingElement::random(t, params, &mut rng)?;
            let l = x.product(t, &y)?.product(t, &z)?;
            let r = x.product(t, &y.product(t, &z)?)?;
            let mut m: f64 = 0.0;
            let mut scale: f64 = 1.0;
            for ix in 0..16 {
                m = m.max(l.entries[ix].dist(&r.entries[ix])?);
                scale = scale.max(l.entries[ix].carrier.max_abs());
            }
            assoc = assoc.max(m / scale);
        }
    }
    rep.push(format!("pi(xy) = pi(x)pi(y) {tag}"), "Homomorphism", hom, tol);
    rep.push(format!("pi(x*) = pi(x)* {tag}"), "Adjoint", dag, tol);
    rep.push(format!("linking product associative {tag}"), "Associativity", assoc, tol);
    let one = linking_map(t, &LinkingElement::identity(t, params)?)?;
    let unit_sq = block_product(&one, &one)?;
    let herm: Vec<AlgebraElement> = (0..16).map(|ix| one[4 * (ix % 4) + ix / 4].adjoint()).collect();
    let mut off: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            if a != b {
                off = off.max(one[4 * a + b].max_abs());
            }
        }
    }
    let unital = block_dist(&unit_sq, &one)?.max(block_dist(&herm, &one)?).max(off);
    rep.push(format!("pi(1) is the diagonal projection p {tag}"), "Unital", unital, tol);
    let rank = linking_rank(t, params)?;
    let dim = LinkingElement::dimension(t, params);
    rep.push_exact(format!("rank of pi = dim of linking algebra {tag}"), "Injective", rank as i64, dim as i64);
    Ok(rep)
}

/// Every tuple `(n,i,j,k)` with all entries at most `max_param` and
/// `N = n+2i+2j+2k ≤ max_top`, each with its own seed offset.
pub fn linking_tuples(max_param: usize, max_top: usize) -> Vec<LinkingParams> {
    let r = 0..=max_param;
    let mut out = Vec::new();
    for n in r.clone() {
        for i in r.clone() {
            for j in r.clone() {
                for k in r.clone() {
                    let p = LinkingParams::new(n, i, j, k);
                    if p.top() <= max_top {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// [`verify_linking`] over [`linking_tuples`], capped at the tower depth.
pub fn linking_sweep(t: &MarkovTower, max_param: usize, max_top: usize, samples: usize, seed: u64, tol: f64) -> Result<Report> {
    let mut rep = Report::new("linking map sweep").with_seed(seed);
    for (ix, p) in linking_tuples(max_param, max_top.min(t.depth())).into_iter().enumerate() {
        rep.extend(verify_linking(t, p, samples, seed.wrapping_add(ix as u64), tol)?);
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Module action

/// A TLJ morphism `[a] → [b]`, carried by an element of `TL_{(a+b)/2}`.
#[derive(Clone, Debug)]
pub struct TLMorphism {
    source: usize,
    target: usize,
    carrier: TLElement,
}

impl TLMorphism {
    pub fn new(source: usize, target: usize, carrier: TLElement) -> Result<Self> {
        let level = carrier_level(source, target)?;
        if carrier.bottom() != level || carrier.top() != level {
            return Err(Error::Shape(format!("carrier of [{source}] -> [{target}] must lie in TL_{level}")));
        }
        Ok(TLMorphism { source, target, carrier })
    }

    pub fn identity(n: usize, modulus: f64) -> Self {
        TLMorphism { source: n, target: n, carrier: TLElement::identity(n, Shading::Plus, modulus) }
    }

    /// `coev_{[k]}: [0] → [2k]`, carried by `d^{k/2} 1_k`. With the bare
    /// `1_k` the zig-zag composite comes out as `d^{-k}`; this scaling makes
    /// `ev = coev†` a standard solution with `coev† ∘ coev = d^k`.
    pub fn coev(k: usize, modulus: f64) -> Self {
        let carrier = TLElement::identity(k, Shading::Plus, modulus).scale(c(modulus.powf(k as f64 / 2.0)));
        TLMorphism { source: 0, target: 2 * k, carrier }
    }

    /// Gaussian combination of the diagram basis.
    pub fn random(source: usize, target: usize, modulus: f64, rng: &mut impl Rng) -> Result<Self> {
        let level = carrier_level(source, target)?;
        let mut x = TLElement::zero(level, level, Shading::Plus, modulus);
        for d in tljdiag::basis(level)? {
            let v = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            x = x.add(&TLElement::from_diagram(d, v, modulus))?;
        }
        Self::new(source, target, x)
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn carrier(&self) -> &TLElement {
        &self.carrier
    }

    pub fn dagger(&self) -> Self {
        TLMorphism { source: self.target, target: self.source, carrier: self.carrier.adjoint() }
    }
}

/// `1_{[n]} ⊲ g`: the carrier of `g` padded by `n` strands on the left.
pub fn act_left(t: &MarkovTower, n: usize, g: &TLMorphism) -> Result<ProjMorphism> {
    let padded = TLElement::identity(n, Shading::Plus, g.carrier.modulus()).tensor(&g.carrier)?;
    let carrier = tljdiag::represent(t, &padded)?;
    ProjMorphism::new(t, n + g.source, n + g.target, carrier)
}

/// `f ⊲ 1_{[j]}`. For `f: [n] → [n+2k]` carried by `F ∈ M_{n+k}` this is
/// `F · D1(n,k,j-k)` when `j ≥ k` and `F · D2(n,j,k-j)` when `j < k`;
/// downward morphisms go through the dagger.
pub fn act_right(t: &MarkovTower, f: &ProjMorphism, j: usize) -> Result<ProjMorphism> {
    if f.target < f.source {
        return Ok(act_right(t, &f.dagger(), j)?.dagger());
    }
    let (n, k) = (f.source, (f.target - f.source) / 2);
    let top = n + k + j;
    let d = if j >= k { kink_diagram(n, k, j - k) } else { kink_dagger_diagram(n, j, k - j) };
    let carrier = lift(t, &f.carrier, n + k, top)?.try_mul(&rep(t, &d)?)?;
    Ok(ProjMorphism { source: n + j, target: f.target + j, carrier })
}

/// `f ⊲ g = (f ⊲ 1_{[b]}) ∘ (1_{[n]} ⊲ g)` for `f: [n] → [m]`, `g: [a] → [b]`.
pub fn module_action(t: &MarkovTower, f: &ProjMorphism, g: &TLMorphism) -> Result<ProjMorphism> {
    compose(t, &act_right(t, f, g.target)?, &act_left(t, f.source, g)?)
}

fn rel(a: &ProjMorphism, b: &ProjMorphism) -> Result<f64> {
    Ok(a.dist(b)? / b.carrier.max_abs().max(1.0))
}

/// Exchange law, functoriality in the module slot, `f ⊲ 1_{[0]} = f`, and
/// `(f ⊲ 1_{[a]}) ⊲ 1_{[b]} = f ⊲ 1_{[a+b]}`, for objects up to `n_max`.
pub fn verify_module_action(t: &MarkovTower, n_max: usize, samples: usize, seed: u64, tol: f64) -> Result<Report> {
    let mut rep = Report::new("TLJ module action").with_seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = t.modulus();
    let (mut unit, mut exch, mut bif, mut assoc): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let pairs: Vec<(usize, usize)> =
        (0..=n_max).flat_map(|a| (0..=n_max).map(move |b| (a, b))).filter(|(a, b)| (a + b) % 2 == 0).collect();
    for _ in 0..samples {
        for &(n, m) in &pairs {
            let f = ProjMorphism::random(t, n, m, &mut rng)?;
            unit = unit.max(rel(&act_right(t, &f, 0)?, &f)?);
            for &(a, b) in &pairs {
                let g = TLMorphism::random(a, b, d, &mut rng)?;
                let lhs = compose(t, &act_right(t, &f, b)?, &act_left(t, n, &g)?)?;
                let rhs = compose(t, &act_left(t, m, &g)?, &act_right(t, &f, a)?)?;
                exch = exch.max(rel(&lhs, &rhs)?);
            }
            for &(p, q) in &pairs {
                if p != m {
                    continue;
                }
                let g = ProjMorphism::random(t, m, q, &mut rng)?;
                for j in 0..=n_max {
                    let lhs = compose(t, &act_right(t, &g, j)?, &act_right(t, &f, j)?)?;
                    let rhs = act_right(t, &compose(t, &g, &f)?, j)?;
                    bif = bif.max(rel(&lhs, &rhs)?);
                }
            }
            for a in 0..=n_max {
                for b in 0..=n_max {
                    let lhs = act_right(t, &act_right(t, &f, a)?, b)?;
                    assoc = assoc.max(rel(&lhs, &act_right(t, &f, a + b)?)?);
                }
            }
        }
    }
    rep.push("f ⊲ 1_[0] = f", "Unit", unit, tol);
    rep.push("(f⊲1)∘(1⊲g) = (1⊲g)∘(f⊲1)", "Exchange", exch, tol);
    rep.push("(g⊲1)∘(f⊲1) = (g∘f)⊲1", "Bifunctoriality", bif, tol);
    rep.push("(f⊲1_a)⊲1_b = f⊲1_(a+b)", "Associativity", assoc, tol);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Pivotal structure

/// `Tr_{[n]}(f) = d^n tr_n(f)`.
pub fn pivotal_trace(t: &MarkovTower, f: &ProjMorphism) -> Result<C64> {
    if !f.is_endo() {
        return Err(Error::Invalid(format!("trace of a non-endomorphism [{}] -> [{}]", f.source, f.target)));
    }
    Ok(f.carrier.trace() * t.modulus().powi(f.source as i32))
}

/// (Tr1) traciality across levels, (Tr2) positivity and (Tr3)
/// compatibility with the action, for objects up to `n_max` and `k ≤ k_max`.
pub fn verify_pivotal(t: &MarkovTower, n_max: usize, k_max: usize, samples: usize, seed: u64, tol: f64) -> Result<Report> {
    let mut rep = Report::new("pivotal trace").with_seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = t.modulus();
    let unit = pivotal_trace(t, &ProjMorphism::identity(t, 0)?)?;
    rep.push("Tr_[0](1) = 1", "Tr", (unit - c(1.0)).norm(), tol);
    let (mut tr1, mut tr2_min, mut tr2_im, mut tr3): (f64, f64, f64, f64) = (0.0, f64::INFINITY, 0.0, 0.0);
    for _ in 0..samples {
        for m in 0..=n_max {
            for n in (m % 2..=n_max).step_by(2) {
                let f = ProjMorphism::random(t, m, n, &mut rng)?;
                let g = ProjMorphism::random(t, n, m, &mut rng)?;
                let l = pivotal_trace(t, &compose(t, &g, &f)?)?;
                let r = pivotal_trace(t, &compose(t, &f, &g)?)?;
                tr1 = tr1.max((l - r).norm() / l.norm().max(1.0));
                let pos = pivotal_trace(t, &compose(t, &f.dagger(), &f)?)?;
                tr2_min = tr2_min.min(pos.re);
                tr2_im = tr2_im.max(pos.im.abs() / pos.norm().max(1.0));
            }
        }
        for n in 0..=n_max {
            for k in 0..=k_max {
                let f = ProjMorphism::random(t, n + k, n + k, &mut rng)?;
                let coev = act_left(t, n, &TLMorphism::coev(k, d))?;
                let mid = compose(t, &act_right(t, &f, k)?, &coev)?;
                let closed = compose(t, &coev.dagger(), &mid)?;
                let l = pivotal_trace(t, &f)?;
                let r = pivotal_trace(t, &closed)?;
                tr3 = tr3.max((l - r).norm() / l.norm().max(1.0));
            }
        }
    }
    let mut zig: f64 = 0.0;
    for k in 0..=k_max {
        if 3 * k > t.depth() {
            break;
        }
        let coev = act_left(t, 0, &TLMorphism::coev(k, d))?;
        let snake = compose(t, &act_left(t, k, &TLMorphism::coev(k, d).dagger())?, &act_right(t, &coev, k)?)?;
        zig = zig.max(snake.dist(&ProjMorphism::identity(t, k)?)?);
    }
    rep.push("(1⊲ev)∘(coev⊲1) = 1", "ZigZag", zig, tol);
    rep.push("Tr(g∘f) = Tr(f∘g)", "Tr1", tr1, tol);
    let positive = if tr2_min > 0.0 { tr2_im } else { f64::INFINITY };
    rep.push_detail("Tr(f†∘f) > 0", "Tr2", positive, tol, Some(format!("min Tr(f†∘f) = {tr2_min:.6e}")));
    rep.push("Tr_[n]⊲[k](f) = Tr_[n](coev† ∘ (f⊲1) ∘ coev)", "Tr3", tr3, tol);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Simple objects

/// A simple object: a minimal projection of `M_level` in the given block,
/// standing for one principal-graph vertex.
#[derive(Clone, Debug)]
pub struct SimpleObject {
    pub vertex: usize,
    pub label: String,
    pub level: usize,
    pub block: usize,
    pub projection: AlgebraElement,
    /// `Tr_{[level]}` of the projection, the quantum dimension of the vertex.
    pub dimension: f64,
}

/// One simple object per principal-graph vertex, with a report checking
/// that every minimal projection `p ∈ M_n` is equivalent to `p e_{n+1}` via
/// `p ∈ M_{n+1}` viewed as a morphism `[n] → [n+2]`, that these exhaust
/// `supp(e_{n+1})`, and that equivalent projections have equal traces.
pub fn simple_objects(t: &MarkovTower, tol: f64) -> Result<(Vec<SimpleObject>, Report)> {
    let pg = principal_graph(t)?;
    let mut rep = Report::new("simple objects");
    if !pg.certified {
        rep.push_detail(
            "principal graph certified within built depth",
            "Truncation",
            0.0,
            tol,
            Some(format!("warning: no vanishing new part up to depth {}; more vertices may exist", t.depth())),
        );
    }
    let mut simples = Vec::new();
    // The graph lists even vertices before odd ones, each in origin order.
    let evens = pg.origin.iter().filter(|(k, _)| k % 2 == 0).count();
    let (mut seen_even, mut seen_odd) = (0, 0);
    for &(level, block) in &pg.origin {
        let v = if level % 2 == 0 {
            seen_even += 1;
            seen_even - 1
        } else {
            seen_odd += 1;
            evens + seen_odd - 1
        };
        let p = AlgebraElement::matrix_unit(t.level(level), block, 0, 0);
        let f = ProjMorphism::new(t, level, level, p.clone())?;
        let tr = pivotal_trace(t, &f)?.re;
        let want = pg.graph.dim(v);
        rep.push(format!("Tr of simple {} = dim", pg.graph.label(v)), "QuantumDimension", (tr - want).abs(), tol);
        simples.push(SimpleObject { vertex: v, label: pg.graph.label(v).to_string(), level, block, projection: p, dimension: tr });
    }
    let (mut iso, mut trace_gap): (f64, f64) = (0.0, 0.0);
    for n in 0..t.depth().saturating_sub(1) {
        let mut hit = vec![false; t.level(n + 2).block_count()];
        for b in 0..t.level(n).block_count() {
            let p = AlgebraElement::matrix_unit(t.level(n), b, 0, 0);
            let v = ProjMorphism::new(t, n, n + 2, t.embed(&p, n, n + 1))?;
            let pe = t.embed(&p, n, n + 2).try_mul(&t.jones_at(n + 1, n + 2))?;
            let back = compose(t, &v.dagger(), &v)?;
            let fwd = compose(t, &v, &v.dagger())?;
            iso = iso.max(back.carrier.dist(&p)?).max(fwd.carrier.dist(&pe)?);
            let lo = pivotal_trace(t, &ProjMorphism::new(t, n, n, p)?)?;
            let hi = pivotal_trace(t, &ProjMorphism::new(t, n + 2, n + 2, pe.clone())?)?;
            trace_gap = trace_gap.max((lo - hi).norm());
            for blk in pe.support(1e-10) {
                hit[blk] = true;
            }
        }
        let supp = t.jones_support(n + 2);
        let covered = supp.iter().all(|&b| hit[b]) && hit.iter().enumerate().all(|(b, &h)| !h || supp.contains(&b));
        rep.push_exact(format!("p e_{} exhausts supp(e_{}) in M_{}", n + 1, n + 1, n + 2), "Reflection", covered as i64, 1);
    }
    rep.push("v†∘v = p and v∘v† = p e", "PartialIsometry", iso, tol);
    rep.push("Tr(p) = Tr(p e)", "TraceInvariance", trace_gap, tol);
    rep.push_exact("simple classes = principal graph vertices", "Simples", simples.len() as i64, pg.graph.vertex_count() as i64);
    Ok((simples, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::builtin;
    use crate::linalg::CMat;
    use crate::tower::build_tower;
    use proptest::prelude::*;

    fn tower(name: &str, depth: usize) -> MarkovTower {
        build_tower(&builtin(name).unwrap(), depth).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn identity_composition() {
        let t = tower("A3", 8);
        let mut r = rng(3);
        for (n, m) in [(0, 0), (1, 3), (4, 2), (2, 6), (5, 1)] {
            let f = ProjMorphism::random(&t, n, m, &mut r).unwrap();
            let left = compose(&t, &ProjMorphism::identity(&t, m).unwrap(), &f).unwrap();
            let right = compose(&t, &f, &ProjMorphism::identity(&t, n).unwrap()).unwrap();
            assert!(left.dist(&f).unwrap() < 1e-10);
            assert!(right.dist(&f).unwrap() < 1e-10);
        }
    }

    #[test]
    fn level_and_parity_errors() {
        let t = tower("A3", 6);
        let mut r = rng(0);
        assert!(ProjMorphism::random(&t, 1, 2, &mut r).is_err());
        let f = ProjMorphism::random(&t, 0, 2, &mut r).unwrap();
        let g = ProjMorphism::random(&t, 4, 2, &mut r).unwrap();
        assert!(compose(&t, &g, &f).is_err());
    }

    #[test]
    fn same_level_composition_is_multiplication() {
        let t = tower("D4", 5);
        let mut r = rng(5);
        let f = ProjMorphism::random(&t, 3, 3, &mut r).unwrap();
        let g = ProjMorphism::random(&t, 3, 3, &mut r).unwrap();
        let gf = compose(&t, &g, &f).unwrap();
        assert!(gf.carrier().dist(&g.carrier().try_mul(f.carrier()).unwrap()).unwrap() < 1e-10);
    }

    #[test]
    fn dagger_contract() {
        let t = tower("A3", 10);
        let mut r = rng(7);
        for a in 0..5usize {
            for b in (a % 2..5).step_by(2) {
                for cc in (a % 2..5).step_by(2) {
                    let f = ProjMorphism::random(&t, a, b, &mut r).unwrap();
                    let g = ProjMorphism::random(&t, b, cc, &mut r).unwrap();
                    let lhs = compose(&t, &g, &f).unwrap().dagger();
                    let rhs = compose(&t, &f.dagger(), &g.dagger()).unwrap();
                    assert!(lhs.dist(&rhs).unwrap() < 1e-10, "{a} {b} {cc}");
                }
            }
        }
    }

    #[test]
    fn left_kink_identity() {
        let t = tower("A3", 10);
        let mut r = rng(11);
        for (n, i, j) in [(0, 1, 1), (1, 1, 0), (0, 2, 1), (1, 1, 2), (2, 0, 2)] {
            let x = AlgebraElement::random_complex(t.level(n + 2 * i + j), &mut r);
            assert!(left_kink_residual(&t, n, i, j, &x).unwrap() < 1e-9);
        }
    }

    #[test]
    fn linking_map_a3() {
        let t = tower("A3", 6);
        let rep = verify_linking(&t, LinkingParams::new(0, 1, 1, 1), 20, 1, 1e-8).unwrap();
        assert!(rep.all_pass(), "{}", rep.summary());
    }

    #[test]
    fn linking_identity_is_compressed_unit() {
        let t = tower("D4", 6);
        let p = LinkingParams::new(0, 1, 1, 1);
        let one = linking_map(&t, &LinkingElement::identity(&t, p).unwrap()).unwrap();
        for a in 0..4 {
            assert!(one[5 * a].projection_residual() < 1e-10);
            assert!(one[5 * a].max_abs() > 0.1);
        }
    }

    // Brute force: Gram matrix of the images of all matrix units.
    fn brute_rank(t: &MarkovTower, params: LinkingParams) -> usize {
        let o = params.objects();
        let mut images = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                let alg = t.level((o[a] + o[b]) / 2).clone();
                for blk in 0..alg.block_count() {
                    for r in 0..alg.size(blk) {
                        for s in 0..alg.size(blk) {
                            let entries = (0..16)
                                .map(|ix| {
                                    let z = ProjMorphism::zero(t, o[ix % 4], o[ix / 4]).unwrap();
                                    if ix == 4 * a + b {
                                        ProjMorphism::new(t, o[b], o[a], AlgebraElement::matrix_unit(&alg, blk, r, s)).unwrap()
                                    } else {
                                        z
                                    }
                                })
                                .collect();
                            let u = LinkingElement::new(params, entries).unwrap();
                            images.push(linking_map(t, &u).unwrap());
                        }
                    }
                }
            }
        }
        let n = images.len();
        let mut gram = CMat::zeros(n, n);
        for p in 0..n {
            for q in 0..n {
                gram[(p, q)] = images[p].iter().zip(&images[q]).map(|(u, w)| u.inner(w).unwrap()).sum();
            }
        }
        linalg::rank(&gram, 1e-10)
    }

    #[test]
    fn injectivity_rank_matches_brute_force() {
        let t = tower("A3", 6);
        for p in [LinkingParams::new(0, 1, 1, 1), LinkingParams::new(1, 0, 1, 1), LinkingParams::new(2, 1, 0, 1)] {
            let fast = linking_rank(&t, p).unwrap();
            assert_eq!(fast, brute_rank(&t, p));
            assert_eq!(fast, LinkingElement::dimension(&t, p));
        }
    }

    #[test]
    fn module_action_a3() {
        let t = tower("A3", 8);
        let rep = verify_module_action(&t, 2, 2, 5, 1e-8).unwrap();
        assert!(rep.all_pass(), "{}", rep.summary());
    }

    #[test]
    fn right_action_cases_agree_at_equality() {
        let t = tower("D4", 6);
        let f = ProjMorphism::random(&t, 1, 5, &mut rng(2)).unwrap();
        let a = ProjMorphism::new(
            &t,
            3,
            7,
            t.embed(f.carrier(), 3, 5).try_mul(&rep(&t, &kink_dagger_diagram(1, 2, 0)).unwrap()).unwrap(),
        )
        .unwrap();
        assert!(act_right(&t, &f, 2).unwrap().dist(&a).unwrap() < 1e-12);
    }

    #[test]
    fn pivotal_trace_values() {
        let t = tower("A3", 8);
        let one0 = pivotal_trace(&t, &ProjMorphism::identity(&t, 0).unwrap()).unwrap();
        assert!((one0 - c(1.0)).norm() < 1e-12);
        let one2 = pivotal_trace(&t, &ProjMorphism::identity(&t, 2).unwrap()).unwrap();
        assert!((one2 - c(2.0)).norm() < 1e-12);
        let f = ProjMorphism::random(&t, 0, 2, &mut rng(1)).unwrap();
        assert!(pivotal_trace(&t, &f).is_err());
    }

    #[test]
    fn pivotal_axioms() {
        for name in ["A3", "D4"] {
            let t = tower(name, 7);
            let rep = verify_pivotal(&t, 3, 2, 4, 9, 1e-9).unwrap();
            assert!(rep.all_pass(), "{name}\n{}", rep.summary());
        }
    }

    #[test]
    fn simple_object_counts() {
        for (name, want) in [("A2", 2), ("A3", 3), ("E6", 6)] {
            let t = tower(name, 12);
            let (simples, rep) = simple_objects(&t, 1e-9).unwrap();
            assert_eq!(simples.len(), want);
            assert!(rep.all_pass(), "{name}\n{}", rep.summary());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn composition_is_associative(a in 0usize..5, b in 0usize..3, cc in 0usize..3, dd in 0usize..3, seed in 0u64..1000) {
            let t = tower("A3", 9);
            let lv = |x: usize| 2 * x + a % 2;
            let mut r = rng(seed);
            let f = ProjMorphism::random(&t, a, lv(b), &mut r).unwrap();
            let g = ProjMorphism::random(&t, lv(b), lv(cc), &mut r).unwrap();
            let h = ProjMorphism::random(&t, lv(cc), lv(dd), &mut r).unwrap();
            let l = compose(&t, &h, &compose(&t, &g, &f).unwrap()).unwrap();
            let rr = compose(&t, &compose(&t, &h, &g).unwrap(), &f).unwrap();
            prop_assert!(l.dist(&rr).unwrap() / l.carrier().max_abs().max(1.0) < 1e-8);
        }
    }
}
