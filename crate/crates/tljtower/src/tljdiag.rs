//! Temperley-Lieb-Jones diagrams: planar pairings between a bottom and a top
//! row of points, formal combinations with loop value `d`, and their
//! realization inside a Markov tower through Jones projections.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::{c, C64};
use crate::multimatrix::AlgebraElement;
use crate::tower::MarkovTower;

const DROP: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shading {
    Plus,
    Minus,
}

impl Shading {
    pub fn flip(self) -> Self {
        match self {
            Shading::Plus => Shading::Minus,
            Shading::Minus => Shading::Plus,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Shading::Plus => "+",
            Shading::Minus => "-",
        }
    }
}

/// A boundary point: `B(i)` on the bottom row, `T(j)` on the top row, both
/// counted from the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pt {
    B(usize),
    T(usize),
}

/// Planar pairing of `bottom + top` points, stored as a fixed-point-free
/// involution. Bottom point `i` has index `i`, top point `j` index `bottom + j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TLDiagram {
    bottom: usize,
    top: usize,
    shading: Shading,
    pair: Vec<usize>,
}

impl TLDiagram {
    pub fn new(bottom: usize, top: usize, shading: Shading, pair: Vec<usize>) -> Result<Self> {
        let n = bottom + top;
        if pair.len() != n || n % 2 == 1 {
            return Err(Error::Shape(format!("pairing of {} entries for {bottom}+{top} points", pair.len())));
        }
        for (p, &q) in pair.iter().enumerate() {
            if q >= n || q == p || pair[q] != p {
                return Err(Error::Invalid(format!("not a perfect matching at point {p}")));
            }
        }
        let d = TLDiagram { bottom, top, shading, pair };
        if !d.is_planar() {
            return Err(Error::Invalid(format!("pairing {:?} crosses", d.pair)));
        }
        Ok(d)
    }

    pub fn from_pairs(bottom: usize, top: usize, shading: Shading, pairs: &[(Pt, Pt)]) -> Result<Self> {
        let ix = |p: Pt| match p {
            Pt::B(i) if i < bottom => Ok(i),
            Pt::T(j) if j < top => Ok(bottom + j),
            _ => Err(Error::Invalid(format!("point {p:?} outside {bottom}x{top}"))),
        };
        let mut pair = vec![usize::MAX; bottom + top];
        for &(a, b) in pairs {
            let (a, b) = (ix(a)?, ix(b)?);
            if pair[a] != usize::MAX || pair[b] != usize::MAX {
                return Err(Error::Invalid("point used twice".into()));
            }
            pair[a] = b;
            pair[b] = a;
        }
        Self::new(bottom, top, shading, pair)
    }

    pub fn identity(n: usize, shading: Shading) -> Self {
        let pair = (0..2 * n).map(|p| if p < n { p + n } else { p - n }).collect();
        TLDiagram { bottom: n, top: n, shading, pair }
    }

    /// `E_i` on `n` strands: a cap and a cup joining strands `i` and `i+1`
    /// (1-based), everything else straight.
    pub fn generator(i: usize, n: usize, shading: Shading) -> Result<Self> {
        if i == 0 || i >= n {
            return Err(Error::Invalid(format!("E_{i} needs 1 <= i <= {}", n.saturating_sub(1))));
        }
        let mut pairs = vec![(Pt::B(i - 1), Pt::B(i)), (Pt::T(i - 1), Pt::T(i))];
        pairs.extend((0..n).filter(|&p| p != i - 1 && p != i).map(|p| (Pt::B(p), Pt::T(p))));
        Self::from_pairs(n, n, shading, &pairs)
    }

    /// Parse a top and a bottom row written with `(`, `)` for arcs within
    /// the row and `|` for through strands, e.g. `("||()", "||()")` is `E_3` in TL_4.
    pub fn from_halves(top: &str, bottom: &str, shading: Shading) -> Result<Self> {
        let parse = |s: &str| -> Result<(Vec<Option<usize>>, Vec<usize>)> {
            let mut out = vec![None; s.chars().count()];
            let mut defects = Vec::new();
            let mut stack = Vec::new();
            for (p, ch) in s.chars().enumerate() {
                match ch {
                    '(' => stack.push(p),
                    ')' => {
                        let q = stack.pop().ok_or_else(|| Error::Invalid(format!("unbalanced `{s}`")))?;
                        if !defects.is_empty() && defects.iter().any(|&d| d > q) {
                            return Err(Error::Invalid(format!("arc crosses a through strand in `{s}`")));
                        }
                        out[p] = Some(q);
                        out[q] = Some(p);
                    }
                    '|' => {
                        if !stack.is_empty() {
                            return Err(Error::Invalid(format!("through strand inside an arc in `{s}`")));
                        }
                        defects.push(p)
                    }
                    _ => return Err(Error::Invalid(format!("unexpected `{ch}` in `{s}`"))),
                }
            }
            if !stack.is_empty() {
                return Err(Error::Invalid(format!("unbalanced `{s}`")));
            }
            Ok((out, defects))
        };
        let (t, td) = parse(top)?;
        let (b, bd) = parse(bottom)?;
        if td.len() != bd.len() {
            return Err(Error::Invalid("rows have different numbers of through strands".into()));
        }
        let (nb, nt) = (b.len(), t.len());
        let mut pair = vec![0; nb + nt];
        for (p, q) in b.iter().enumerate() {
            if let Some(q) = q {
                pair[p] = *q;
            }
        }
        for (p, q) in t.iter().enumerate() {
            if let Some(q) = q {
                pair[nb + p] = nb + q;
            }
        }
        for (&x, &y) in bd.iter().zip(&td) {
            pair[x] = nb + y;
            pair[nb + y] = x;
        }
        Self::new(nb, nt, shading, pair)
    }

    pub fn bottom(&self) -> usize {
        self.bottom
    }

    pub fn top(&self) -> usize {
        self.top
    }

    pub fn shading(&self) -> Shading {
        self.shading
    }

    pub fn partner(&self, p: Pt) -> Pt {
        let i = match p {
            Pt::B(i) => i,
            Pt::T(j) => self.bottom + j,
        };
        self.pt(self.pair[i])
    }

    fn pt(&self, i: usize) -> Pt {
        if i < self.bottom {
            Pt::B(i)
        } else {
            Pt::T(i - self.bottom)
        }
    }

    /// Planarity: walking the boundary (bottom left to right, then top right
    /// to left) the arcs must nest like parentheses.
    fn is_planar(&self) -> bool {
        let order: Vec<usize> = (0..self.bottom).chain((0..self.top).rev().map(|j| self.bottom + j)).collect();
        let mut seen = vec![false; order.len()];
        let mut stack = Vec::new();
        for &p in &order {
            if seen[self.pair[p]] {
                if stack.pop() != Some(self.pair[p]) {
                    return false;
                }
            } else {
                stack.push(p);
            }
            seen[p] = true;
        }
        stack.is_empty()
    }

    pub fn through_strands(&self) -> usize {
        (0..self.bottom).filter(|&i| self.pair[i] >= self.bottom).count()
    }

    /// Vertical reflection.
    pub fn flip(&self) -> Self {
        let (b, t) = (self.bottom, self.top);
        let map = |p: usize| if p < b { t + p } else { p - b };
        let mut pair = vec![0; b + t];
        for p in 0..b + t {
            pair[map(p)] = map(self.pair[p]);
        }
        TLDiagram { bottom: t, top: b, shading: self.shading, pair }
    }

    /// Stack `self` on top of `below`; returns the diagram and the number of
    /// closed loops removed.
    pub fn compose(&self, below: &TLDiagram) -> Result<(TLDiagram, usize)> {
        if below.top != self.bottom {
            return Err(Error::Shape(format!("cannot stack {} points onto {}", self.bottom, below.top)));
        }
        if below.shading != self.shading {
            return Err(Error::Invalid("shadings differ".into()));
        }
        let (nb, mid, nt) = (below.bottom, below.top, self.top);
        let mut pair = vec![usize::MAX; nb + nt];
        let mut used = vec![false; mid];
        // Walk from a point of `below` (index into below) or of `self`.
        enum At {
            Low(usize),
            High(usize),
        }
        let finish = |mut at: At, used: &mut Vec<bool>| -> usize {
            loop {
                match at {
                    At::Low(p) => {
                        let q = below.pair[p];
                        if q < nb {
                            return q;
                        }
                        used[q - nb] = true;
                        at = At::High(q - nb);
                    }
                    At::High(p) => {
                        let q = self.pair[p];
                        if q >= mid {
                            return nb + (q - mid);
                        }
                        used[q] = true;
                        at = At::Low(nb + q);
                    }
                }
            }
        };
        for i in 0..nb {
            if pair[i] == usize::MAX {
                let j = finish(At::Low(i), &mut used);
                pair[i] = j;
                pair[j] = i;
            }
        }
        for j in 0..nt {
            if pair[nb + j] == usize::MAX {
                let k = finish(At::High(mid + j), &mut used);
                pair[nb + j] = k;
                pair[k] = nb + j;
            }
        }
        let mut loops = 0;
        for m in 0..mid {
            if !used[m] {
                loops += 1;
                let mut p = m;
                loop {
                    used[p] = true;
                    let q = self.pair[p];
                    used[q] = true;
                    let r = below.pair[nb + q] - nb;
                    if used[r] && r == m {
                        break;
                    }
                    p = r;
                    if used[p] {
                        break;
                    }
                }
            }
        }
        Ok((TLDiagram { bottom: nb, top: nt, shading: self.shading, pair }, loops))
    }

    /// Side-by-side juxtaposition, `self` on the left.
    pub fn tensor(&self, right: &TLDiagram) -> TLDiagram {
        let (b1, t1, b2, t2) = (self.bottom, self.top, right.bottom, right.top);
        let map_l = |p: usize| if p < b1 { p } else { b1 + b2 + (p - b1) };
        let map_r = |p: usize| if p < b2 { b1 + p } else { b1 + b2 + t1 + (p - b2) };
        let mut pair = vec![0; b1 + b2 + t1 + t2];
        for p in 0..b1 + t1 {
            pair[map_l(p)] = map_l(self.pair[p]);
        }
        for p in 0..b2 + t2 {
            pair[map_r(p)] = map_r(right.pair[p]);
        }
        TLDiagram { bottom: b1 + b2, top: t1 + t2, shading: self.shading, pair }
    }

    /// Row description: for each point, `Some(partner)` within the row or
    /// `None` for a through strand.
    fn half(&self, top: bool) -> Vec<Option<usize>> {
        let (lo, len) = if top { (self.bottom, self.top) } else { (0, self.bottom) };
        (0..len)
            .map(|p| {
                let q = self.pair[lo + p];
                (q >= lo && q < lo + len).then(|| q - lo)
            })
            .collect()
    }

    fn half_string(&self, top: bool) -> String {
        self.half(top)
            .iter()
            .enumerate()
            .map(|(p, q)| match q {
                None => '|',
                Some(q) if *q > p => '(',
                Some(_) => ')',
            })
            .collect()
    }

    /// A word `w` with `self = E_{w_0+1} E_{w_1+1} ···` exactly (no loops),
    /// entries being 0-based left strand positions.
    pub fn to_word(&self) -> Result<Vec<usize>> {
        if self.bottom != self.top {
            return Err(Error::Shape("only square diagrams are words in the E_i".into()));
        }
        let n = self.bottom;
        let k = (n - self.through_strands()) / 2;
        if k == 0 {
            return Ok(Vec::new());
        }
        let table = half_words(n, k);
        let top = &table[&self.half(true)];
        let bottom = &table[&self.half(false)];
        let mut w = top.clone();
        w.extend((0..k).map(|i| 2 * i));
        w.extend(bottom.iter().rev());
        Ok(w)
    }
}

impl TLDiagram {
    fn with_shading(mut self, shading: Shading) -> Self {
        self.shading = shading;
        self
    }

    /// One extra through strand on the right.
    pub fn include_right(&self) -> TLDiagram {
        self.tensor(&TLDiagram::identity(1, self.shading))
    }

    /// One extra through strand on the left; the shading flips.
    pub fn include_left(&self) -> TLDiagram {
        let s = self.shading.flip();
        TLDiagram::identity(1, s).tensor(&self.clone().with_shading(s))
    }

    /// Join the rightmost bottom and top points; returns the loop count.
    pub fn cap_right(&self) -> Result<(TLDiagram, usize)> {
        let n = self.square()?;
        let mut pairs: Vec<(Pt, Pt)> = (0..n - 1).map(|p| (Pt::B(p), Pt::T(p))).collect();
        pairs.push((Pt::T(n - 1), Pt::T(n)));
        let u = TLDiagram::from_pairs(n - 1, n + 1, self.shading, &pairs)?;
        let (mid, l1) = self.include_right().compose(&u)?;
        let (out, l2) = u.flip().compose(&mid)?;
        Ok((out, l1 + l2))
    }

    /// Join the leftmost bottom and top points; the shading flips.
    pub fn cap_left(&self) -> Result<(TLDiagram, usize)> {
        let n = self.square()?;
        let s = self.shading.flip();
        let mut pairs: Vec<(Pt, Pt)> = (0..n - 1).map(|p| (Pt::B(p), Pt::T(p + 2))).collect();
        pairs.push((Pt::T(0), Pt::T(1)));
        let u = TLDiagram::from_pairs(n - 1, n + 1, s, &pairs)?;
        let (mid, l1) = self.include_left().compose(&u)?;
        let (out, l2) = u.flip().compose(&mid)?;
        Ok((out, l1 + l2))
    }

    fn square(&self) -> Result<usize> {
        if self.bottom != self.top || self.bottom == 0 {
            return Err(Error::Shape("capping needs a square diagram with at least one strand".into()));
        }
        Ok(self.bottom)
    }
}

impl fmt::Display for TLDiagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.half_string(true), self.half_string(false))
    }
}

type HalfTable = HashMap<Vec<Option<usize>>, Vec<usize>>;

/// For each row with `k` arcs on `n` points, a word `W` such that the
/// diagram with that top row and standard bottom row (arcs at (0,1), (2,3),
/// ...) equals `W · S`, `S = E_1 E_3 ··· E_{2k-1}`. Found by breadth-first
/// search over loop-free left multiplications that keep the bottom row.
fn half_words(n: usize, k: usize) -> Arc<HalfTable> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<HalfTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().unwrap().get(&(n, k)) {
        return hit.clone();
    }
    let std_half: String = "()".repeat(k) + &"|".repeat(n - 2 * k);
    let start = TLDiagram::from_halves(&std_half, &std_half, Shading::Plus).expect("standard diagram");
    let bottom = start.half(false);
    let gens: Vec<TLDiagram> = (1..n).map(|i| TLDiagram::generator(i, n, Shading::Plus).unwrap()).collect();
    let mut table: HalfTable = HashMap::new();
    table.insert(start.half(true), Vec::new());
    let mut queue = VecDeque::from([(start, Vec::<usize>::new())]);
    while let Some((d, w)) = queue.pop_front() {
        for (p, g) in gens.iter().enumerate() {
            let (next, loops) = g.compose(&d).unwrap();
            if loops > 0 || next.half(false) != bottom {
                continue;
            }
            let key = next.half(true);
            if !table.contains_key(&key) {
                let mut w2 = vec![p];
                w2.extend(&w);
                table.insert(key, w2.clone());
                queue.push_back((next, w2));
            }
        }
    }
    let table = Arc::new(table);
    cache.lock().unwrap().insert((n, k), table.clone());
    table
}

/// Formal linear combination of diagrams sharing a signature.
#[derive(Clone, Debug, PartialEq)]
pub struct TLElement {
    bottom: usize,
    top: usize,
    shading: Shading,
    modulus: f64,
    terms: BTreeMap<TLDiagram, C64>,
}

impl TLElement {
    pub fn zero(bottom: usize, top: usize, shading: Shading, modulus: f64) -> Self {
        TLElement { bottom, top, shading, modulus, terms: BTreeMap::new() }
    }

    pub fn from_diagram(d: TLDiagram, coeff: C64, modulus: f64) -> Self {
        let mut x = Self::zero(d.bottom, d.top, d.shading, modulus);
        if coeff.norm() > 0.0 {
            x.terms.insert(d, coeff);
        }
        x
    }

    pub fn identity(n: usize, shading: Shading, modulus: f64) -> Self {
        Self::from_diagram(TLDiagram::identity(n, shading), c(1.0), modulus)
    }

    pub fn bottom(&self) -> usize {
        self.bottom
    }

    pub fn top(&self) -> usize {
        self.top
    }

    pub fn shading(&self) -> Shading {
        self.shading
    }

    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    pub fn terms(&self) -> &BTreeMap<TLDiagram, C64> {
        &self.terms
    }

    fn prune(mut self) -> Self {
        self.terms.retain(|_, v| v.norm() > DROP);
        self
    }

    fn compatible(&self, other: &Self) -> Result<()> {
        if (self.bottom, self.top, self.shading) != (other.bottom, other.top, other.shading) {
            return Err(Error::Shape("TL elements have different signatures".into()));
        }
        if (self.modulus - other.modulus).abs() > 1e-12 * self.modulus {
            return Err(Error::Modulus(self.modulus, other.modulus));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        let mut out = self.clone();
        for (d, v) in &other.terms {
            *out.terms.entry(d.clone()).or_insert(c(0.0)) += v;
        }
        Ok(out.prune())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(c(-1.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|v| *v *= s);
        out.prune()
    }

    /// `self · other` with `self` stacked on top.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.bottom != other.top || self.shading != other.shading {
            return Err(Error::Shape(format!("cannot stack {} points onto {}", self.bottom, other.top)));
        }
        if (self.modulus - other.modulus).abs() > 1e-12 * self.modulus {
            return Err(Error::Modulus(self.modulus, other.modulus));
        }
        let mut out = Self::zero(other.bottom, self.top, self.shading, self.modulus);
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                let (d, loops) = a.compose(b)?;
                *out.terms.entry(d).or_insert(c(0.0)) += x * y * self.modulus.powi(loops as i32);
            }
        }
        Ok(out.prune())
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.top, self.bottom, self.shading, self.modulus);
        for (d, v) in &self.terms {
            out.terms.insert(d.flip(), v.conj());
        }
        out
    }

    pub fn tensor(&self, right: &Self) -> Result<Self> {
        if (self.modulus - right.modulus).abs() > 1e-12 * self.modulus {
            return Err(Error::Modulus(self.modulus, right.modulus));
        }
        let mut out = Self::zero(self.bottom + right.bottom, self.top + right.top, self.shading, self.modulus);
        for (a, x) in &self.terms {
            for (b, y) in &right.terms {
                *out.terms.entry(a.tensor(b)).or_insert(c(0.0)) += x * y;
            }
        }
        Ok(out.prune())
    }

    fn map_terms(&self, bottom: usize, top: usize, shading: Shading, f: impl Fn(&TLDiagram) -> Result<(TLDiagram, usize)>) -> Result<Self> {
        let mut out = Self::zero(bottom, top, shading, self.modulus);
        for (d, v) in &self.terms {
            let (e, loops) = f(d)?;
            *out.terms.entry(e).or_insert(c(0.0)) += v * self.modulus.powi(loops as i32);
        }
        Ok(out.prune())
    }

    pub fn include_right(&self) -> Self {
        self.map_terms(self.bottom + 1, self.top + 1, self.shading, |d| Ok((d.include_right(), 0))).expect("inclusion")
    }

    pub fn include_left(&self) -> Self {
        self.map_terms(self.bottom + 1, self.top + 1, self.shading.flip(), |d| Ok((d.include_left(), 0))).expect("inclusion")
    }

    pub fn cap_right(&self) -> Result<Self> {
        if self.bottom != self.top || self.bottom == 0 {
            return Err(Error::Shape("capping needs TL_n with n >= 1".into()));
        }
        self.map_terms(self.bottom - 1, self.top - 1, self.shading, |d| d.cap_right())
    }

    pub fn cap_left(&self) -> Result<Self> {
        if self.bottom != self.top || self.bottom == 0 {
            return Err(Error::Shape("capping needs TL_n with n >= 1".into()));
        }
        self.map_terms(self.bottom - 1, self.top - 1, self.shading.flip(), |d| d.cap_left())
    }

    /// The same combination with another shading label.
    pub fn with_shading(&self, shading: Shading) -> Self {
        let mut out = Self::zero(self.bottom, self.top, shading, self.modulus);
        for (d, v) in &self.terms {
            out.terms.insert(d.clone().with_shading(shading), *v);
        }
        out
    }

    /// Largest coefficient of `self − other`.
    pub fn dist(&self, other: &Self) -> Result<f64> {
        let diff = self.sub(other)?;
        Ok(diff.terms.values().map(|v| v.norm()).fold(0.0, f64::max))
    }
}

impl fmt::Display for TLElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms.iter().map(|(d, v)| format!("({:.6}{:+.6}i)[{d}]", v.re, v.im)).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// `e_i = d^{-1} E_i` in TL_n.
pub fn jones_projection_diagram(i: usize, n: usize, modulus: f64) -> Result<TLElement> {
    Ok(TLElement::from_diagram(TLDiagram::generator(i, n, Shading::Plus)?, c(1.0 / modulus), modulus))
}

/// Product `e_{w_0} e_{w_1} ···` in TL_n (1-based generator indices).
pub fn jones_word(word: &[usize], n: usize, modulus: f64) -> Result<TLElement> {
    let mut acc = TLElement::identity(n, Shading::Plus, modulus);
    for &i in word {
        acc = acc.mul(&jones_projection_diagram(i, n, modulus)?)?;
    }
    Ok(acc)
}

/// `m` nested arcs starting at position `a`: pairs `(a+i, a+2m-1-i)`.
pub fn nested(a: usize, m: usize) -> Vec<(usize, usize)> {
    (0..m).map(|i| (a + i, a + 2 * m - 1 - i)).collect()
}

/// `F^{j+k}_j`: `j` through strands followed by `k` nested cups over `k` nested caps.
pub fn cabled_diagram(j: usize, k: usize) -> TLDiagram {
    let n = j + 2 * k;
    let mut pairs: Vec<(Pt, Pt)> = (0..j).map(|p| (Pt::B(p), Pt::T(p))).collect();
    for (a, b) in nested(j, k) {
        pairs.push((Pt::B(a), Pt::B(b)));
        pairs.push((Pt::T(a), Pt::T(b)));
    }
    TLDiagram::from_pairs(n, n, Shading::Plus, &pairs).expect("cabled diagram is planar")
}

/// `f^{j+k}_j` by the word formula
/// `d^{k(k-1)} (e_{j+k}···e_{j+1})(e_{j+k+1}···e_{j+2})···(e_{j+2k-1}···e_{j+k})`.
pub fn cabled_projection(j: usize, k: usize, modulus: f64) -> Result<TLElement> {
    if k == 0 {
        return Err(Error::Invalid("cabled projections need k >= 1".into()));
    }
    let mut word = Vec::new();
    for m in 0..k {
        word.extend((j + 1 + m..=j + k + m).rev());
    }
    Ok(jones_word(&word, j + 2 * k, modulus)?.scale(c(modulus.powi((k * (k - 1)) as i32))))
}

/// The diagram on `j + 2k` strands appearing on the right of the
/// multistep relation: `j` through strands, a nested `(k-1)`-cup on top
/// after them, one strand from bottom `j` to top `j+2k-2`, a nested
/// `(k-1)`-cap at the bottom and a final through strand.
pub fn multistep_relation_diagram(j: usize, k: usize) -> TLDiagram {
    let n = j + 2 * k;
    let mut pairs: Vec<(Pt, Pt)> = (0..j).map(|p| (Pt::B(p), Pt::T(p))).collect();
    for (a, b) in nested(j, k - 1) {
        pairs.push((Pt::T(a), Pt::T(b)));
    }
    for (a, b) in nested(j + 1, k - 1) {
        pairs.push((Pt::B(a), Pt::B(b)));
    }
    pairs.push((Pt::B(j), Pt::T(n - 2)));
    pairs.push((Pt::B(n - 1), Pt::T(n - 1)));
    TLDiagram::from_pairs(n, n, Shading::Plus, &pairs).expect("relation diagram is planar")
}

/// Right-hand side of the multistep relation as a TL element:
/// `(e_{j+k} e_{j+k+1} ··· e_{j+2k-1}) · D`.
///
/// Stacking gives `E_{j+k}···E_{j+2k-1} · D = F^{j+k}_j` with no loops, so
/// the coefficient is exactly 1; a prefactor `d^{k(k-1)}` would overshoot
/// by that amount whenever `k >= 2`.
pub fn multistep_relation_rhs(j: usize, k: usize, modulus: f64) -> Result<TLElement> {
    let word: Vec<usize> = (j + k..j + 2 * k).collect();
    let d = TLElement::from_diagram(multistep_relation_diagram(j, k), c(1.0), modulus);
    jones_word(&word, j + 2 * k, modulus)?.mul(&d)
}

fn check_modulus(t: &MarkovTower, d: f64) -> Result<()> {
    if (t.modulus() - d).abs() > 1e-9 * d.max(1.0) {
        return Err(Error::Modulus(d, t.modulus()));
    }
    Ok(())
}

/// Image of a TL_n element in `M_n`, substituting `E_i ↦ d e_i`.
pub fn represent(t: &MarkovTower, x: &TLElement) -> Result<AlgebraElement> {
    check_modulus(t, x.modulus)?;
    if x.bottom != x.top {
        return Err(Error::Shape("only TL_n elements (n to n) live in the tower".into()));
    }
    let n = x.bottom;
    if n > t.depth() {
        return Err(Error::Depth { have: t.depth(), need: n });
    }
    let mut out = AlgebraElement::zero(t.level(n));
    for (d, v) in &x.terms {
        out = &out + &represent_diagram(t, d)?.scale(*v);
    }
    Ok(out)
}

/// Image of a single square diagram.
pub fn represent_diagram(t: &MarkovTower, d: &TLDiagram) -> Result<AlgebraElement> {
    let n = d.bottom;
    if d.top != n {
        return Err(Error::Shape("only square diagrams live in the tower".into()));
    }
    if n > t.depth() {
        return Err(Error::Depth { have: t.depth(), need: n });
    }
    let word: Vec<usize> = d.to_word()?.into_iter().map(|p| p + 1).collect();
    Ok(t.jones_word(&word, n).scale_re(t.modulus().powi(word.len() as i32)))
}

/// Both sides of the multistep relation evaluated in the tower at level
/// `j+2k`; returns the largest entry of their difference.
pub fn multistep_relation_check(t: &MarkovTower, j: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let n = j + 2 * k;
    if n > t.depth() {
        return Err(Error::Depth { have: t.depth(), need: n });
    }
    let lhs = t.cabled_jones(j, k);
    let word: Vec<usize> = (j + k..j + 2 * k).collect();
    let rhs = t.jones_word(&word, n);
    let rhs = rhs.try_mul(&represent_diagram(t, &multistep_relation_diagram(j, k))?)?;
    lhs.dist(&rhs)
}

/// Number of planar pairings of `2n` points.
pub fn generic_dimension(n: usize) -> Result<usize> {
    if n > 8 {
        return Err(Error::Enumeration(n));
    }
    Ok(basis(n)?.len())
}

/// All TL_n diagrams, by enumerating non-crossing matchings of the boundary.
pub fn basis(n: usize) -> Result<Vec<TLDiagram>> {
    if n > 8 {
        return Err(Error::Enumeration(n));
    }
    // Boundary position q ↦ point index: bottom left to right, then top right to left.
    let point = |q: usize| if q < n { q } else { n + (2 * n - 1 - q) };
    let mut out: Vec<TLDiagram> = matchings(0, 2 * n)
        .into_iter()
        .map(|arcs| {
            let mut pair = vec![0; 2 * n];
            for (a, b) in arcs {
                pair[point(a)] = point(b);
                pair[point(b)] = point(a);
            }
            TLDiagram { bottom: n, top: n, shading: Shading::Plus, pair }
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Non-crossing perfect matchings of the positions `lo..hi`.
fn matchings(lo: usize, hi: usize) -> Vec<Vec<(usize, usize)>> {
    if lo >= hi {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for m in (lo + 1..hi).step_by(2) {
        let inner = matchings(lo + 1, m);
        let outer = matchings(m + 1, hi);
        for i in &inner {
            for o in &outer {
                let mut v = vec![(lo, m)];
                v.extend(i);
                v.extend(o);
                out.push(v);
            }
        }
    }
    out
}

/// Numerical rank of the image of the TL_n basis in `M_n`.
pub fn image_dimension(t: &MarkovTower, n: usize) -> Result<usize> {
    let basis = basis(n)?;
    if n > t.depth() {
        return Err(Error::Depth { have: t.depth(), need: n });
    }
    let alg = t.level(n);
    let width = alg.dim();
    let mut m = crate::linalg::CMat::zeros(basis.len(), width);
    for (r, d) in basis.iter().enumerate() {
        let x = represent_diagram(t, d)?;
        let mut col = 0;
        for blk in x.blocks() {
            for v in blk.iter() {
                m[(r, col)] = *v;
                col += 1;
            }
        }
    }
    Ok(crate::linalg::rank(&m, 1e-8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::builtin;
    use crate::tower::build_tower;

    #[test]
    fn generator_relations() {
        let d = 1.7;
        let e1 = jones_projection_diagram(1, 3, d).unwrap();
        let e2 = jones_projection_diagram(2, 3, d).unwrap();
        assert!(e1.mul(&e1).unwrap().dist(&e1).unwrap() < 1e-15);
        let lhs = e1.mul(&e2).unwrap().mul(&e1).unwrap();
        assert!(lhs.dist(&e1.scale(c(d.powi(-2)))).unwrap() < 1e-15);
        let big_e1 = TLElement::from_diagram(TLDiagram::generator(1, 3, Shading::Plus).unwrap(), c(1.0), d);
        assert!(big_e1.mul(&big_e1).unwrap().dist(&big_e1.scale(c(d))).unwrap() < 1e-15);
        let big_e2 = TLElement::from_diagram(TLDiagram::generator(2, 3, Shading::Plus).unwrap(), c(1.0), d);
        assert_eq!(big_e1.mul(&big_e2).unwrap().mul(&big_e1).unwrap(), big_e1);
        let f1 = jones_projection_diagram(1, 4, d).unwrap();
        let f3 = jones_projection_diagram(3, 4, d).unwrap();
        assert_eq!(f1.mul(&f3).unwrap(), f3.mul(&f1).unwrap());
    }

    #[test]
    fn text_notation() {
        let e3 = TLDiagram::from_halves("||()", "||()", Shading::Plus).unwrap();
        assert_eq!(e3, TLDiagram::generator(3, 4, Shading::Plus).unwrap());
        assert_eq!(e3.to_string(), "||()/||()");
        assert!(TLDiagram::from_halves("(|)", "|||", Shading::Plus).is_err());
        assert!(TLDiagram::from_halves("||", "()", Shading::Plus).is_err());
    }

    #[test]
    fn capping_and_inclusions() {
        let d = 1.6;
        let one3 = TLElement::identity(3, Shading::Plus, d);
        let capped = one3.cap_right().unwrap();
        assert!(capped.dist(&TLElement::identity(2, Shading::Plus, d).scale(c(d))).unwrap() < 1e-15);
        let e2 = jones_projection_diagram(2, 3, d).unwrap();
        let capped = e2.cap_right().unwrap();
        assert!(capped.dist(&TLElement::identity(2, Shading::Plus, d).scale(c(1.0 / d))).unwrap() < 1e-15);
        let e1 = jones_projection_diagram(1, 3, d).unwrap();
        let capped = e1.cap_left().unwrap();
        assert_eq!(capped.shading(), Shading::Minus);
        assert!(capped.dist(&TLElement::identity(2, Shading::Minus, d).scale(c(1.0 / d))).unwrap() < 1e-15);
        // Capping after including on the same side multiplies by d.
        for x in basis(3).unwrap() {
            let x = TLElement::from_diagram(x, c(1.0), d);
            assert!(x.include_right().cap_right().unwrap().dist(&x.scale(c(d))).unwrap() < 1e-14);
            let back = x.include_left().cap_left().unwrap();
            assert!(back.dist(&x.scale(c(d))).unwrap() < 1e-14);
            let a = x.include_left().cap_right().unwrap();
            let b = x.cap_right().unwrap().include_left();
            assert!(a.dist(&b).unwrap() < 1e-14);
        }
    }

    #[test]
    fn catalan_counts() {
        let want = [1, 1, 2, 5, 14, 42, 132, 429, 1430];
        for (n, &w) in want.iter().enumerate() {
            assert_eq!(generic_dimension(n).unwrap(), w);
        }
        assert!(generic_dimension(9).is_err());
    }

    #[test]
    fn words_reproduce_every_diagram() {
        for n in 0..=7 {
            for d in basis(n).unwrap() {
                let mut acc = TLDiagram::identity(n, Shading::Plus);
                for &p in &d.to_word().unwrap() {
                    let (next, loops) = acc.compose(&TLDiagram::generator(p + 1, n, Shading::Plus).unwrap()).unwrap();
                    assert_eq!(loops, 0, "{d}");
                    acc = next;
                }
                assert_eq!(acc, d);
            }
        }
    }

    #[test]
    fn associativity_on_tl3() {
        let b = basis(3).unwrap();
        for x in &b {
            for y in &b {
                for z in &b {
                    let (xy, l1) = x.compose(y).unwrap();
                    let (xy_z, l2) = xy.compose(z).unwrap();
                    let (yz, l3) = y.compose(z).unwrap();
                    let (x_yz, l4) = x.compose(&yz).unwrap();
                    assert_eq!(xy_z, x_yz);
                    assert_eq!(l1 + l2, l3 + l4);
                }
            }
        }
    }

    #[test]
    fn flip_is_anti_homomorphism() {
        let b = basis(4).unwrap();
        for x in &b {
            for y in &b {
                let (xy, l) = x.compose(y).unwrap();
                let (fy_fx, l2) = y.flip().compose(&x.flip()).unwrap();
                assert_eq!(xy.flip(), fy_fx);
                assert_eq!(l, l2);
            }
        }
    }

    #[test]
    fn cabled_word_matches_nested_diagram() {
        let d = 1.3;
        for (j, k) in [(0, 1), (2, 1), (0, 2), (1, 2), (0, 3), (1, 3)] {
            let word = cabled_projection(j, k, d).unwrap();
            let diag = TLElement::from_diagram(cabled_diagram(j, k), c(d.powi(-(k as i32))), d);
            assert!(word.dist(&diag).unwrap() < 1e-12, "({j},{k}): {word}");
            assert!(word.mul(&word).unwrap().dist(&word).unwrap() < 1e-12);
            assert!(word.adjoint().dist(&word).unwrap() < 1e-12);
        }
        assert_eq!(cabled_projection(2, 1, d).unwrap(), jones_projection_diagram(3, 4, d).unwrap());
    }

    #[test]
    fn multistep_relation_holds_as_diagrams() {
        let d = 1.9;
        for (j, k) in [(0, 1), (0, 2), (1, 2), (0, 3), (2, 3)] {
            let lhs = cabled_projection(j, k, d).unwrap();
            let rhs = multistep_relation_rhs(j, k, d).unwrap();
            assert!(lhs.dist(&rhs).unwrap() < 1e-12, "({j},{k})");
        }
    }

    #[test]
    fn multistep_prefactor_overshoots() {
        let d = 1.9;
        let (j, k) = (0, 2);
        let lhs = cabled_projection(j, k, d).unwrap();
        let with_prefactor = multistep_relation_rhs(j, k, d).unwrap().scale(c(d.powi(2)));
        let gap = with_prefactor.dist(&lhs).unwrap();
        assert!((gap - (d * d - 1.0) / (d * d)).abs() < 1e-12);
    }

    #[test]
    fn represent_in_towers() {
        let t = build_tower(&builtin("A3").unwrap(), 5).unwrap();
        let d = t.modulus();
        let one = represent(&t, &TLElement::identity(4, Shading::Plus, d)).unwrap();
        assert!(one.dist(&AlgebraElement::identity(t.level(4))).unwrap() < 1e-14);
        let e1 = jones_projection_diagram(1, 3, d).unwrap();
        let e2 = jones_projection_diagram(2, 3, d).unwrap();
        let rel = e1.mul(&e2).unwrap().mul(&e1).unwrap().sub(&e1.scale(c(d.powi(-2)))).unwrap();
        assert!(represent(&t, &rel).unwrap().max_abs() < 1e-10);
        let f = represent(&t, &cabled_projection(0, 2, d).unwrap()).unwrap();
        assert!(f.dist(&t.cabled_jones(0, 2)).unwrap() < 1e-12);
        assert!(represent(&t, &jones_projection_diagram(2, 3, 1.5).unwrap()).is_err());
        // Multiplicativity and adjoints on basis pairs of TL_4.
        let b = basis(4).unwrap();
        for x in b.iter().step_by(3) {
            for y in b.iter().step_by(2) {
                let ex = TLElement::from_diagram(x.clone(), C64::new(0.3, 0.7), d);
                let ey = TLElement::from_diagram(y.clone(), c(-1.1), d);
                let lhs = represent(&t, &ex.mul(&ey).unwrap()).unwrap();
                let rhs = &represent(&t, &ex).unwrap() * &represent(&t, &ey).unwrap();
                assert!(lhs.dist(&rhs).unwrap() < 1e-10);
                let adj = represent(&t, &ex.adjoint()).unwrap();
                assert!(adj.dist(&represent(&t, &ex).unwrap().adjoint()).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn a3_image_exhausts_tower() {
        let t = build_tower(&builtin("A3").unwrap(), 6).unwrap();
        for n in 0..=4 {
            assert_eq!(image_dimension(&t, n).unwrap(), t.dims()[n]);
        }
        for n in 0..=6 {
            assert!(image_dimension(&t, n).unwrap() <= generic_dimension(n).unwrap());
        }
    }

    #[test]
    fn multistep_relation_in_towers() {
        let a3 = build_tower(&builtin("A3").unwrap(), 6).unwrap();
        assert!(multistep_relation_check(&a3, 0, 1).unwrap() < 1e-14);
        assert!(multistep_relation_check(&a3, 0, 2).unwrap() < 1e-9);
        let e6 = build_tower(&builtin("E6").unwrap(), 6).unwrap();
        assert!(multistep_relation_check(&e6, 1, 2).unwrap() < 1e-9);
    }
}
