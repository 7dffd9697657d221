//! Pointed weighted bipartite graphs and their Frobenius-Perron data.
//!
//! Vertices are indexed globally with the even class first. Edges are stored
//! one strand at a time: an edge of multiplicity three between `u` and `w`
//! becomes three [`Edge`] values with `copy` 0, 1, 2. Edge ids are positions
//! in the sorted edge list, which is also the order used for path bases.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::Report;

/// Default numerical tolerance for graph-level checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

const FP_STOP: f64 = 1e-13;
const FP_MAX_ITER: usize = 200_000;

/// A single strand between an even and an odd vertex (global indices).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub even: usize,
    pub odd: usize,
    pub copy: usize,
}

impl Edge {
    /// The endpoint opposite to `v`.
    pub fn other(&self, v: usize) -> usize {
        if v == self.even {
            self.odd
        } else {
            debug_assert_eq!(v, self.odd);
            self.even
        }
    }
}

/// Unweighted pointed bipartite multigraph: the input to [`frobenius_perron`].
#[derive(Clone, Debug, PartialEq)]
pub struct GraphShape {
    pub even: Vec<String>,
    pub odd: Vec<String>,
    /// (even id, odd id, multiplicity)
    pub edges: Vec<(String, String, usize)>,
    pub basepoint: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedBipartiteGraph {
    labels: Vec<String>,
    n_even: usize,
    edges: Vec<Edge>,
    incident: Vec<Vec<usize>>,
    basepoint: usize,
    dim: Vec<f64>,
    modulus: f64,
}

struct Indexed {
    labels: Vec<String>,
    n_even: usize,
    edges: Vec<Edge>,
    basepoint: usize,
}

fn index_shape(shape: &GraphShape) -> Result<Indexed> {
    let mut labels: Vec<String> = shape.even.clone();
    labels.extend(shape.odd.iter().cloned());
    let n_even = shape.even.len();
    let mut lookup = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if lookup.insert(l.clone(), i).is_some() {
            return Err(Error::Schema(format!("duplicate vertex id `{l}`")));
        }
    }
    let mut mult: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (a, b, m) in &shape.edges {
        let ia = *lookup.get(a).ok_or_else(|| Error::Schema(format!("unknown vertex `{a}` in edge")))?;
        let ib = *lookup.get(b).ok_or_else(|| Error::Schema(format!("unknown vertex `{b}` in edge")))?;
        let (e, o) = match (ia < n_even, ib < n_even) {
            (true, false) => (ia, ib),
            (false, true) => (ib, ia),
            (true, true) => {
                return Err(Error::Schema(format!("edge {a}-{b} joins two even vertices")));
            }
            (false, false) => {
                return Err(Error::Schema(format!("edge {a}-{b} joins two odd vertices")));
            }
        };
        *mult.entry((e, o)).or_insert(0) += m;
    }
    let mut edges = Vec::new();
    for (&(e, o), &m) in &mult {
        for copy in 0..m {
            edges.push(Edge { even: e, odd: o, copy });
        }
    }
    let basepoint = *lookup
        .get(&shape.basepoint)
        .ok_or_else(|| Error::Schema(format!("unknown basepoint `{}`", shape.basepoint)))?;
    if basepoint >= n_even {
        return Err(Error::Schema(format!("basepoint `{}` is not an even vertex", shape.basepoint)));
    }
    Ok(Indexed { labels, n_even, edges, basepoint })
}

fn incidence(n: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut inc = vec![Vec::new(); n];
    for (id, e) in edges.iter().enumerate() {
        inc[e.even].push(id);
        inc[e.odd].push(id);
    }
    inc
}

fn check_connected(ix: &Indexed, inc: &[Vec<usize>]) -> Result<()> {
    let n = ix.labels.len();
    if ix.edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([ix.basepoint]);
    seen[ix.basepoint] = true;
    while let Some(v) = queue.pop_front() {
        for &e in &inc[v] {
            let w = ix.edges[e].other(v);
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    if let Some(start) = (0..n).find(|&v| !seen[v]) {
        // Report the whole component containing the first unreachable vertex.
        let mut comp = vec![start];
        let mut mark = vec![false; n];
        mark[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(v) = q.pop_front() {
            for &e in &inc[v] {
                let w = ix.edges[e].other(v);
                if !mark[w] {
                    mark[w] = true;
                    comp.push(w);
                    q.push_back(w);
                }
            }
        }
        comp.sort();
        return Err(Error::Disconnected {
            start: ix.labels[ix.basepoint].clone(),
            component: comp.into_iter().map(|v| ix.labels[v].clone()).collect(),
        });
    }
    Ok(())
}

/// Perron data by power iteration on `A + I`, seeded with the all-ones vector.
///
/// The shift makes the Perron root strictly dominant for bipartite `A`. The
/// iteration stops once `|A x - rho x|_inf <= 1e-13 rho` where `rho` is the
/// Rayleigh quotient of the current iterate.
fn perron(n: usize, edges: &[Edge]) -> Result<(f64, Vec<f64>)> {
    let apply = |x: &[f64]| {
        let mut y = vec![0.0; n];
        for e in edges {
            y[e.even] += x[e.odd];
            y[e.odd] += x[e.even];
        }
        y
    };
    let mut x = vec![1.0; n];
    let mut best = (f64::INFINITY, 0.0, x.clone());
    for _ in 0..FP_MAX_ITER {
        let ax = apply(&x);
        let num: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().map(|a| a * a).sum();
        let rho = num / den;
        let res = x.iter().zip(&ax).map(|(a, b)| (b - rho * a).abs()).fold(0.0, f64::max);
        let scale = x.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let rel = res / (rho * scale);
        if rel < best.0 {
            best = (rel, rho, x.clone());
        }
        if rel <= FP_STOP {
            return Ok((rho, x));
        }
        let mut next: Vec<f64> = ax.iter().zip(&x).map(|(a, b)| a + b).collect();
        let m = next.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        next.iter_mut().for_each(|a| *a /= m);
        x = next;
    }
    // Stagnation at rounding level: accept the best iterate if it is close.
    if best.0 <= 1e-11 {
        Ok((best.1, best.2))
    } else {
        Err(Error::Invalid(format!("power iteration did not converge (residual {:.3e})", best.0)))
    }
}

/// Modulus and quantum dimensions of a connected pointed bipartite multigraph.
pub fn frobenius_perron(shape: &GraphShape) -> Result<(f64, BTreeMap<String, f64>)> {
    let g = WeightedBipartiteGraph::from_shape(shape)?;
    let dims = g.labels.iter().cloned().zip(g.dim.iter().copied()).collect();
    Ok((g.modulus, dims))
}

impl WeightedBipartiteGraph {
    /// Build a graph with Frobenius-Perron weights.
    pub fn from_shape(shape: &GraphShape) -> Result<Self> {
        let ix = index_shape(shape)?;
        let inc = incidence(ix.labels.len(), &ix.edges);
        check_connected(&ix, &inc)?;
        let (rho, x) = perron(ix.labels.len(), &ix.edges)?;
        let base = x[ix.basepoint];
        let dim = x.iter().map(|a| a / base).collect();
        Ok(WeightedBipartiteGraph {
            labels: ix.labels,
            n_even: ix.n_even,
            edges: ix.edges,
            incident: inc,
            basepoint: ix.basepoint,
            dim,
            modulus: rho,
        })
    }

    /// Build a graph with caller-supplied weights. Only positivity is enforced;
    /// use [`verify_dimension_function`] to test the Frobenius-Perron property.
    pub fn with_weights(shape: &GraphShape, dim: &BTreeMap<String, f64>, modulus: f64) -> Result<Self> {
        let ix = index_shape(shape)?;
        let inc = incidence(ix.labels.len(), &ix.edges);
        check_connected(&ix, &inc)?;
        if !(modulus > 0.0 && modulus.is_finite()) {
            return Err(Error::Schema(format!("modulus must be positive, got {modulus}")));
        }
        let mut dv = Vec::with_capacity(ix.labels.len());
        for l in &ix.labels {
            let d = *dim.get(l).ok_or_else(|| Error::Schema(format!("missing dim for vertex `{l}`")))?;
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Schema(format!("dim of `{l}` must be positive, got {d}")));
            }
            dv.push(d);
        }
        if (dv[ix.basepoint] - 1.0).abs() > 1e-9 {
            return Err(Error::Schema(format!("dim of the basepoint must be 1, got {}", dv[ix.basepoint])));
        }
        Ok(WeightedBipartiteGraph {
            labels: ix.labels,
            n_even: ix.n_even,
            edges: ix.edges,
            incident: inc,
            basepoint: ix.basepoint,
            dim: dv,
            modulus,
        })
    }

    pub fn shape(&self) -> GraphShape {
        let mut mult: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for e in &self.edges {
            *mult.entry((e.even, e.odd)).or_insert(0) += 1;
        }
        GraphShape {
            even: self.labels[..self.n_even].to_vec(),
            odd: self.labels[self.n_even..].to_vec(),
            edges: mult
                .into_iter()
                .map(|((e, o), m)| (self.labels[e].clone(), self.labels[o].clone(), m))
                .collect(),
            basepoint: self.labels[self.basepoint].clone(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn even_count(&self) -> usize {
        self.n_even
    }

    pub fn is_even(&self, v: usize) -> bool {
        v < self.n_even
    }

    pub fn even_vertices(&self) -> std::ops::Range<usize> {
        0..self.n_even
    }

    pub fn odd_vertices(&self) -> std::ops::Range<usize> {
        self.n_even..self.labels.len()
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn basepoint(&self) -> usize {
        self.basepoint
    }

    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    pub fn dim(&self, v: usize) -> f64 {
        self.dim[v]
    }

    pub fn dims(&self) -> &[f64] {
        &self.dim
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> Edge {
        self.edges[id]
    }

    /// Ids of the strands touching `v`, in increasing order.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    pub fn multiplicity(&self, a: usize, b: usize) -> usize {
        let (e, o) = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().filter(|x| x.even == e && x.odd == o).count()
    }

    /// Symmetric adjacency matrix with multiplicities (global indexing).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.labels.len();
        let mut a = vec![vec![0; n]; n];
        for e in &self.edges {
            a[e.even][e.odd] += 1;
            a[e.odd][e.even] += 1;
        }
        a
    }

    /// Largest graph distance between two vertices.
    pub fn diameter(&self) -> usize {
        (0..self.vertex_count()).map(|v| self.distances_from(v).into_iter().max().unwrap_or(0)).max().unwrap_or(0)
    }

    pub fn distances_from(&self, v: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.vertex_count()];
        dist[v] = 0;
        let mut q = VecDeque::from([v]);
        while let Some(u) = q.pop_front() {
            for &e in &self.incident[u] {
                let w = self.edges[e].other(u);
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    q.push_back(w);
                }
            }
        }
        dist
    }

    /// Same graph pointed at another even vertex, with dims renormalized there.
    pub fn with_basepoint(&self, v: usize) -> Result<Self> {
        if !self.is_even(v) {
            return Err(Error::Schema(format!("basepoint `{}` is not an even vertex", self.labels[v])));
        }
        let mut g = self.clone();
        let s = g.dim[v];
        g.dim.iter_mut().for_each(|d| *d /= s);
        g.basepoint = v;
        Ok(g)
    }

    /// Rename vertices; the structure and weights are carried along.
    pub fn relabeled(&self, f: impl Fn(&str) -> String) -> Result<Self> {
        let shape = self.shape();
        let new_shape = GraphShape {
            even: shape.even.iter().map(|l| f(l)).collect(),
            odd: shape.odd.iter().map(|l| f(l)).collect(),
            edges: shape.edges.iter().map(|(a, b, m)| (f(a), f(b), *m)).collect(),
            basepoint: f(&shape.basepoint),
        };
        let dims = self.labels.iter().zip(&self.dim).map(|(l, d)| (f(l), *d)).collect();
        Self::with_weights(&new_shape, &dims, self.modulus)
    }

    /// Pointed weighted isomorphism: a parity- and basepoint-preserving
    /// bijection respecting multiplicities with dims equal within `tol`.
    /// Returns the vertex map `self -> other` when one exists.
    pub fn isomorphism(&self, other: &Self, tol: f64) -> Option<Vec<usize>> {
        let n = self.vertex_count();
        if n != other.vertex_count()
            || self.n_even != other.n_even
            || self.edges.len() != other.edges.len()
            || (self.modulus - other.modulus).abs() > tol * self.modulus.max(1.0)
        {
            return None;
        }
        let a = self.adjacency();
        let b = other.adjacency();
        let deg = |adj: &Vec<Vec<usize>>, v: usize| -> usize { adj[v].iter().sum() };
        let compatible = |u: usize, w: usize| -> bool {
            self.is_even(u) == other.is_even(w)
                && deg(&a, u) == deg(&b, w)
                && (self.dim[u] - other.dim[w]).abs() <= tol * self.dim[u].max(1.0)
        };
        if !compatible(self.basepoint, other.basepoint) {
            return None;
        }
        // Assign vertices in breadth-first order from the basepoint.
        let dist = self.distances_from(self.basepoint);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| (dist[v], v));
        let mut map = vec![usize::MAX; n];
        let mut used = vec![false; n];
        map[self.basepoint] = other.basepoint;
        used[other.basepoint] = true;

        fn search(
            k: usize,
            order: &[usize],
            map: &mut Vec<usize>,
            used: &mut Vec<bool>,
            a: &[Vec<usize>],
            b: &[Vec<usize>],
            compatible: &dyn Fn(usize, usize) -> bool,
        ) -> bool {
            if k == order.len() {
                return true;
            }
            let u = order[k];
            if map[u] != usize::MAX {
                return search(k + 1, order, map, used, a, b, compatible);
            }
            for w in 0..used.len() {
                if used[w] || !compatible(u, w) {
                    continue;
                }
                let consistent = (0..map.len()).all(|x| map[x] == usize::MAX || a[u][x] == b[w][map[x]]);
                if !consistent {
                    continue;
                }
                map[u] = w;
                used[w] = true;
                if search(k + 1, order, map, used, a, b, compatible) {
                    return true;
                }
                map[u] = usize::MAX;
                used[w] = false;
            }
            false
        }

        if search(0, &order, &mut map, &mut used, &a, &b, &compatible) {
            Some(map)
        } else {
            None
        }
    }

    pub fn is_isomorphic(&self, other: &Self, tol: f64) -> bool {
        self.isomorphism(other, tol).is_some()
    }

    /// All parity-preserving automorphisms respecting multiplicities and dims
    /// (the basepoint may move).
    pub fn automorphisms(&self, tol: f64) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for v in self.even_vertices() {
            if (self.dim[v] - self.dim[self.basepoint]).abs() > tol {
                continue;
            }
            let mut target = self.clone();
            target.basepoint = v;
            // Enumerate all maps sending the basepoint to v by restarting the
            // search with each candidate; graphs here are tiny.
            for map in all_isomorphisms(self, &target, tol) {
                if !out.contains(&map) {
                    out.push(map);
                }
            }
        }
        out.sort();
        out
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph G {\n");
        for v in 0..self.vertex_count() {
            let shape = if self.is_even(v) { "circle" } else { "box" };
            let extra = if v == self.basepoint { ", peripheries=2" } else { "" };
            s.push_str(&format!(
                "  \"{}\" [shape={shape}, label=\"{}\\ndim={:.6}\"{extra}];\n",
                self.labels[v], self.labels[v], self.dim[v]
            ));
        }
        let mut mult: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for e in &self.edges {
            *mult.entry((e.even, e.odd)).or_insert(0) += 1;
        }
        for ((e, o), m) in mult {
            let lab = if m > 1 { format!(" [label=\"{m}\"]") } else { String::new() };
            s.push_str(&format!("  \"{}\" -- \"{}\"{lab};\n", self.labels[e], self.labels[o]));
        }
        s.push_str(&format!("  label=\"d = {:.9}\";\n}}\n", self.modulus));
        s
    }
}

fn all_isomorphisms(g: &WeightedBipartiteGraph, h: &WeightedBipartiteGraph, tol: f64) -> Vec<Vec<usize>> {
    let n = g.vertex_count();
    let a = g.adjacency();
    let b = h.adjacency();
    let mut out = Vec::new();
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    let dist = g.distances_from(g.basepoint);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (dist[v], v));
    let ok = |u: usize, w: usize| {
        g.is_even(u) == h.is_even(w) && (g.dim[u] - h.dim[w]).abs() <= tol * g.dim[u].max(1.0)
    };
    if !ok(g.basepoint, h.basepoint) {
        return out;
    }
    map[g.basepoint] = h.basepoint;
    used[h.basepoint] = true;
    #[allow(clippy::too_many_arguments)]
    fn rec(
        k: usize,
        order: &[usize],
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        a: &[Vec<usize>],
        b: &[Vec<usize>],
        ok: &dyn Fn(usize, usize) -> bool,
        out: &mut Vec<Vec<usize>>,
    ) {
        if k == order.len() {
            out.push(map.clone());
            return;
        }
        let u = order[k];
        if map[u] != usize::MAX {
            return rec(k + 1, order, map, used, a, b, ok, out);
        }
        for w in 0..used.len() {
            if used[w] || !ok(u, w) {
                continue;
            }
            if (0..map.len()).all(|x| map[x] == usize::MAX || a[u][x] == b[w][map[x]]) && a[u][u] == b[w][w] {
                map[u] = w;
                used[w] = true;
                rec(k + 1, order, map, used, a, b, ok, out);
                map[u] = usize::MAX;
                used[w] = false;
            }
        }
    }
    rec(0, &order, &mut map, &mut used, &a, &b, &ok, &mut out);
    // Degree sums must also agree; the adjacency test above already implies it
    // once every vertex is mapped.
    out
}

/// Per-vertex residuals `|d dim(v) - sum mult(v,w) dim(w)|`; passes iff every
/// residual is within `tolerance` (relative to `d dim(v)`).
pub fn verify_dimension_function(graph: &WeightedBipartiteGraph, tolerance: f64) -> Report {
    let mut r = Report::new("quantum dimension function");
    let d = graph.modulus;
    for v in 0..graph.vertex_count() {
        let s: f64 = graph.incident(v).iter().map(|&e| graph.dim[graph.edges[e].other(v)]).sum();
        let res = (d * graph.dim[v] - s).abs();
        let scale = d * graph.dim[v];
        r.push_detail(
            format!("vertex {}", graph.labels[v]),
            "QuantumDimension",
            res / scale,
            tolerance,
            Some(format!("absolute residual {res:.3e}")),
        );
    }
    r
}

fn parse_family(name: &str) -> Option<(char, usize)> {
    let cleaned: String = name.chars().filter(|c| *c != '_' && !c.is_whitespace()).collect();
    let mut chars = cleaned.chars();
    let fam = chars.next()?.to_ascii_uppercase();
    let n: usize = chars.as_str().parse().ok()?;
    Some((fam, n))
}

/// Builtin ADE graphs with vertices `v0, v1, ...` and basepoint `v0`, the
/// extremal vertex of the longest arm.
///
/// * `A_n`: the path `v0 - v1 - ... - v(n-1)`.
/// * `D_n`: the path `v0 - ... - v(n-3)` with leaves `v(n-2)`, `v(n-1)` on `v(n-3)`.
/// * `E_6`, `E_7`, `E_8`: the path `v0 - ... - vc` to the trivalent vertex `vc`
///   (`c = 2, 3, 4`), then a second arm of length 2 and a single leaf.
pub fn builtin(family: &str) -> Result<WeightedBipartiteGraph> {
    let (fam, n) = parse_family(family).ok_or_else(|| Error::UnknownFamily(family.to_string()))?;
    let pairs: Vec<(usize, usize)> = match (fam, n) {
        ('A', n) if n >= 2 => (0..n - 1).map(|i| (i, i + 1)).collect(),
        ('D', n) if n >= 4 => {
            let mut p: Vec<(usize, usize)> = (0..n - 3).map(|i| (i, i + 1)).collect();
            p.push((n - 3, n - 2));
            p.push((n - 3, n - 1));
            p
        }
        ('E', 6) => vec![(0, 1), (1, 2), (2, 3), (3, 4), (2, 5)],
        ('E', 7) => vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (3, 6)],
        ('E', 8) => vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (4, 7)],
        _ => return Err(Error::UnknownFamily(family.to_string())),
    };
    tree_graph(n, &pairs)
}

/// A tree on vertices `v0..v(n-1)` pointed at `v0`, bipartitioned by distance.
fn tree_graph(n: usize, pairs: &[(usize, usize)]) -> Result<WeightedBipartiteGraph> {
    let mut parity = vec![usize::MAX; n];
    parity[0] = 0;
    let mut changed = true;
    while changed {
        changed = false;
        for &(a, b) in pairs {
            if parity[a] != usize::MAX && parity[b] == usize::MAX {
                parity[b] = 1 - parity[a];
                changed = true;
            } else if parity[b] != usize::MAX && parity[a] == usize::MAX {
                parity[a] = 1 - parity[b];
                changed = true;
            }
        }
    }
    let name = |i: usize| format!("v{i}");
    let shape = GraphShape {
        even: (0..n).filter(|&i| parity[i] == 0).map(name).collect(),
        odd: (0..n).filter(|&i| parity[i] == 1).map(name).collect(),
        edges: pairs
            .iter()
            .map(|&(a, b)| if parity[a] == 0 { (name(a), name(b), 1) } else { (name(b), name(a), 1) })
            .collect(),
        basepoint: name(0),
    };
    WeightedBipartiteGraph::from_shape(&shape)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonId {
    Str(String),
    Int(i64),
}

impl JsonId {
    fn into_string(self) -> String {
        match self {
            JsonId::Str(s) => s,
            JsonId::Int(i) => i.to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphJson {
    even: Vec<JsonId>,
    odd: Vec<JsonId>,
    edges: Vec<(JsonId, JsonId, usize)>,
    basepoint: JsonId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modulus: Option<f64>,
}

/// Parse the JSON graph schema. Missing `dim` (or `modulus`) is filled in by
/// [`frobenius_perron`].
pub fn load_graph(bytes: &[u8]) -> Result<WeightedBipartiteGraph> {
    let raw: GraphJson = serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))?;
    let shape = GraphShape {
        even: raw.even.into_iter().map(JsonId::into_string).collect(),
        odd: raw.odd.into_iter().map(JsonId::into_string).collect(),
        edges: raw.edges.into_iter().map(|(a, b, m)| (a.into_string(), b.into_string(), m)).collect(),
        basepoint: raw.basepoint.into_string(),
    };
    match (raw.dim, raw.modulus) {
        (None, None) => WeightedBipartiteGraph::from_shape(&shape),
        (Some(dim), Some(m)) => WeightedBipartiteGraph::with_weights(&shape, &dim, m),
        (Some(dim), None) => {
            let fp = WeightedBipartiteGraph::from_shape(&shape)?;
            WeightedBipartiteGraph::with_weights(&shape, &dim, fp.modulus)
        }
        (None, Some(m)) => {
            let fp = WeightedBipartiteGraph::from_shape(&shape)?;
            let dims = fp.labels.iter().cloned().zip(fp.dim.iter().copied()).collect();
            WeightedBipartiteGraph::with_weights(&shape, &dims, m)
        }
    }
}

pub fn save_graph(graph: &WeightedBipartiteGraph) -> Vec<u8> {
    let shape = graph.shape();
    let raw = GraphJson {
        even: shape.even.into_iter().map(JsonId::Str).collect(),
        odd: shape.odd.into_iter().map(JsonId::Str).collect(),
        edges: shape.edges.into_iter().map(|(a, b, m)| (JsonId::Str(a), JsonId::Str(b), m)).collect(),
        basepoint: JsonId::Str(shape.basepoint),
        dim: Some(graph.labels.iter().cloned().zip(graph.dim.iter().copied()).collect()),
        modulus: Some(graph.modulus),
    };
    serde_json::to_vec_pretty(&raw).expect("graph serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    /// Independent oracle: dense symmetric eigensolver on the adjacency matrix.
    fn eigen_oracle(g: &WeightedBipartiteGraph) -> (f64, Vec<f64>) {
        let a = g.adjacency();
        let n = a.len();
        let m = DMatrix::from_fn(n, n, |i, j| a[i][j] as f64);
        let e = SymmetricEigen::new(m);
        let (k, &rho) = e.eigenvalues.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap();
        let v = e.eigenvectors.column(k);
        let s = v[g.basepoint()];
        (rho, v.iter().map(|x| x / s).collect())
    }

    #[test]
    fn builtin_moduli_match_eigensolver() {
        for name in ["A2", "A3", "A4", "A5", "D4", "D5", "E6", "E7", "E8"] {
            let g = builtin(name).unwrap();
            let (rho, v) = eigen_oracle(&g);
            assert!((g.modulus() - rho).abs() < 1e-10, "{name}");
            for (a, b) in g.dims().iter().zip(&v) {
                assert!((a - b).abs() < 1e-9, "{name}");
            }
            assert!(verify_dimension_function(&g, 1e-10).all_pass(), "{name}");
        }
    }

    #[test]
    fn frozen_moduli() {
        let cases = [
            ("A2", 1.0),
            ("A3", 1.414213562),
            ("A4", 1.618033989),
            ("D4", 1.732050808),
            ("E6", 1.931851653),
        ];
        for (name, d) in cases {
            assert!((builtin(name).unwrap().modulus() - d).abs() < 1e-9, "{name}");
        }
        for n in 2..=9 {
            let g = builtin(&format!("A{n}")).unwrap();
            let want = 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((g.modulus() - want).abs() < 1e-10);
        }
        let e6 = builtin("E6").unwrap();
        assert!((e6.modulus() - 2.0 * (std::f64::consts::PI / 12.0).cos()).abs() < 1e-10);
    }

    #[test]
    fn a3_dims() {
        let g = builtin("A3").unwrap();
        let v = |l: &str| g.dim(g.index_of(l).unwrap());
        assert!((v("v0") - 1.0).abs() < 1e-12);
        assert!((v("v1") - 2f64.sqrt()).abs() < 1e-12);
        assert!((v("v2") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_dims_fail_at_neighbours() {
        let g = builtin("A3").unwrap();
        let mut dims: BTreeMap<String, f64> =
            g.labels().iter().cloned().zip(g.dims().iter().copied()).collect();
        dims.insert("v1".into(), 1.5);
        let h = WeightedBipartiteGraph::with_weights(&g.shape(), &dims, g.modulus()).unwrap();
        let r = verify_dimension_function(&h, 1e-9);
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"vertex v0"));
        assert!(failed.contains(&"vertex v2"));
    }

    #[test]
    fn a2_unit_weights_pass() {
        let g = builtin("A2").unwrap();
        assert_eq!(g.modulus(), 1.0);
        assert!(verify_dimension_function(&g, 1e-12).all_pass());
    }

    #[test]
    fn disconnected_and_empty_rejected() {
        let shape = GraphShape {
            even: vec!["a".into(), "c".into()],
            odd: vec!["b".into(), "d".into()],
            edges: vec![("a".into(), "b".into(), 1), ("c".into(), "d".into(), 1)],
            basepoint: "a".into(),
        };
        match frobenius_perron(&shape) {
            Err(Error::Disconnected { component, .. }) => assert_eq!(component, vec!["c", "d"]),
            other => panic!("unexpected {other:?}"),
        }
        let empty = GraphShape { even: vec!["a".into()], odd: vec![], edges: vec![], basepoint: "a".into() };
        assert!(matches!(frobenius_perron(&empty), Err(Error::EmptyGraph)));
    }

    #[test]
    fn json_round_trip_and_fp_fill() {
        let g = builtin("E6").unwrap();
        let bytes = save_graph(&g);
        let h = load_graph(&bytes).unwrap();
        assert_eq!(g, h);
        assert_eq!(save_graph(&h), bytes);
        let text = r#"{"even":["v0","v2"],"odd":["v1"],"edges":[["v0","v1",1],["v2","v1",1]],"basepoint":"v0"}"#;
        let a3 = load_graph(text.as_bytes()).unwrap();
        assert!((a3.modulus() - 2f64.sqrt()).abs() < 1e-12);
        let bad = r#"{"even":["v0","v2"],"odd":["v1"],"edges":[["v0","v2",1]],"basepoint":"v0"}"#;
        assert!(matches!(load_graph(bad.as_bytes()), Err(Error::Schema(_))));
        let odd_base = r#"{"even":["v0"],"odd":["v1"],"edges":[["v0","v1",1]],"basepoint":"v1"}"#;
        assert!(matches!(load_graph(odd_base.as_bytes()), Err(Error::Schema(_))));
        let ints = r#"{"even":[0,2],"odd":[1],"edges":[[0,1,1],[2,1,1]],"basepoint":0}"#;
        assert!(load_graph(ints.as_bytes()).unwrap().is_isomorphic(&a3, 1e-9));
    }

    #[test]
    fn multiplicities_supported() {
        let shape = GraphShape {
            even: vec!["a".into()],
            odd: vec!["b".into()],
            edges: vec![("a".into(), "b".into(), 2)],
            basepoint: "a".into(),
        };
        let g = WeightedBipartiteGraph::from_shape(&shape).unwrap();
        assert!((g.modulus() - 2.0).abs() < 1e-12);
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.multiplicity(0, 1), 2);
    }

    #[test]
    fn isomorphism_respects_basepoint() {
        let a4 = builtin("A4").unwrap();
        let moved = a4.with_basepoint(a4.index_of("v2").unwrap()).unwrap();
        assert!(!a4.is_isomorphic(&moved, 1e-9));
        let e6 = builtin("E6").unwrap();
        assert!(e6.is_isomorphic(&e6.with_basepoint(e6.index_of("v4").unwrap()).unwrap(), 1e-9));
        assert_eq!(builtin("D4").unwrap().automorphisms(1e-9).len(), 6);
        assert!(a4.to_dot().contains("v0"));
        assert_eq!(builtin("E6").unwrap().diameter(), 4);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn dims_are_relabeling_equivariant(seed in 0u64..1000) {
            let g = builtin(["A5", "D5", "E6", "E7"][(seed % 4) as usize]).unwrap();
            let shape = g.shape();
            // Reverse both vertex lists: a nontrivial reindexing.
            let mut perm = shape.clone();
            perm.even.reverse();
            perm.odd.reverse();
            perm.edges.reverse();
            let h = WeightedBipartiteGraph::from_shape(&perm).unwrap();
            for l in g.labels() {
                let a = g.dim(g.index_of(l).unwrap());
                let b = h.dim(h.index_of(l).unwrap());
                prop_assert!((a - b).abs() < 1e-10);
            }
            let r = g.relabeled(|s| format!("x{s}{seed}")).unwrap();
            prop_assert!(r.is_isomorphic(&g, 1e-9));
        }
    }
}
