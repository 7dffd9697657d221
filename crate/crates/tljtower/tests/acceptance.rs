//! End-to-end acceptance run. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any of them fails.

use std::sync::Arc;
use std::time::Instant;

use tljtower::embed::{embed_module, find_standard_level, invariance_check, verify_gpa_isomorphism, verify_planar_map, CanonicalPA};
use tljtower::gpa::{adjacency_trace, box_dimension, gpa_tower, GraphPlanarAlgebra, LoopSpace};
use tljtower::graph::{builtin, WeightedBipartiteGraph};
use tljtower::multimatrix::AlgebraElement;
use tljtower::projcat::{linking_sweep, verify_module_action, verify_pivotal};
use tljtower::report::Report;
use tljtower::tljdiag::{basis, generic_dimension, multistep_relation_check, Shading};
use tljtower::tower::{build_tower, principal_graph, MarkovTower};
use tljtower::verify::{verify_elementary_properties, verify_markov_axioms};

const GRAPHS: [&str; 7] = ["A2", "A3", "A4", "A5", "D4", "D5", "E6"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn max_res(r: &Report) -> f64 {
    r.checks.iter().map(|c| c.max_residual).fold(0.0, f64::max)
}

fn failure(r: &Report) -> String {
    r.first_failure().map_or_else(String::new, |c| format!("; first failure {} ({}) = {:.3e}", c.paper_label, c.name, c.max_residual))
}

fn graph(name: &str) -> WeightedBipartiteGraph {
    builtin(name).unwrap()
}

fn standard_depth(g: &WeightedBipartiteGraph) -> usize {
    2 * g.diameter() + 2
}

fn towers() -> Vec<(&'static str, MarkovTower)> {
    GRAPHS.iter().map(|&n| (n, build_tower(&graph(n), standard_depth(&graph(n))).unwrap())).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for name in GRAPHS {
        let g = graph(name);
        let t = build_tower(&g, standard_depth(&g)).unwrap();
        let mut r = verify_markov_axioms(&t, 1e-9);
        r.extend(verify_elementary_properties(&t, 1e-9));
        worst = worst.max(max_res(&r));
        if !r.all_pass() {
            bad.push(format!("{name}{}", failure(&r)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(bad.is_empty() && secs < 30.0, format!("max residual {worst:.2e}, {secs:.1} s{}", bad.join(", ")))
}

fn criterion_2() -> Outcome {
    let mut bad = Vec::new();
    for name in GRAPHS {
        let g = graph(name);
        let pg = principal_graph(&build_tower(&g, standard_depth(&g)).unwrap()).unwrap();
        if !pg.graph.is_isomorphic(&g, 1e-9) {
            bad.push(name);
        }
    }
    outcome(bad.is_empty(), format!("{} of 7 graphs recovered {bad:?}", 7 - bad.len()))
}

/// Matrix units span each level, so checking them covers every x.
fn matrix_units(alg: &Arc<tljtower::multimatrix::MultiMatrixAlgebra>) -> Vec<AlgebraElement> {
    let mut out = Vec::new();
    for b in 0..alg.block_count() {
        for i in 0..alg.size(b) {
            for j in 0..alg.size(b) {
                out.push(AlgebraElement::matrix_unit(alg, b, i, j));
            }
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let (mut rel, mut markov) = (0.0f64, 0.0f64);
    for (_, t) in towers() {
        let d2 = t.modulus().powi(-2);
        for n in 1..t.depth() {
            if n + 2 <= t.depth() {
                let (e, f) = (t.jones_at(n, n + 2), t.jones_at(n + 1, n + 2));
                for (a, b) in [(&e, &f), (&f, &e)] {
                    let lhs = a.try_mul(b).unwrap().try_mul(a).unwrap();
                    rel = rel.max(lhs.dist(&a.scale_re(d2)).unwrap());
                }
            }
            let e = t.jones_at(n, n + 1);
            for x in matrix_units(t.level(n)) {
                let xe = t.embed(&x, n, n + 1).try_mul(&e).unwrap();
                markov = markov.max((xe.trace() - x.trace() * d2).norm());
            }
        }
    }
    outcome(rel < 1e-9 && markov < 1e-9, format!("relation {rel:.2e}, Markov trace {markov:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for name in ["A3", "E6"] {
        let g = graph(name);
        let t = build_tower(&g, 10).unwrap();
        for (j, k) in [(0, 2), (1, 2), (0, 3)] {
            let m = t.multistep(j, k).unwrap();
            let r = verify_markov_axioms(&m, 1e-9);
            let constant = (m.modulus().powi(-2) - t.modulus().powi(-2 * k as i32)).abs();
            let eq = multistep_relation_check(&t, j, k).unwrap();
            worst = worst.max(max_res(&r)).max(eq).max(constant);
            if !r.all_pass() || eq >= 1e-9 || constant >= 1e-12 {
                bad.push(format!("{name} ({j},{k}){}", failure(&r)));
            }
        }
    }
    outcome(bad.is_empty(), format!("6 cabled towers, max residual {worst:.2e} {}", bad.join(", ")))
}

fn criterion_5() -> Outcome {
    let mut count = 0;
    let mut bad = Vec::new();
    for name in GRAPHS {
        let g = graph(name);
        let t = build_tower(&g, standard_depth(&g) + 2).unwrap().shift(2).unwrap();
        let base = t.level(0).clone();
        for b in 0..base.block_count() {
            let p = AlgebraElement::matrix_unit(&base, b, 0, 0);
            let top = t.embed(&p, 0, t.depth());
            if top.support(1e-12).len() < t.level(t.depth()).block_count() {
                continue;
            }
            count += 1;
            let label = base.label(b).to_string();
            let cmp = t.compress(&p).unwrap();
            let mut r = verify_markov_axioms(&cmp.tower, 1e-9);
            r.extend(verify_elementary_properties(&cmp.tower, 1e-9));
            let moved = g.with_basepoint(g.index_of(&label).unwrap()).unwrap();
            let pg = principal_graph(&cmp.tower).unwrap();
            let same = pg.graph.is_isomorphic(&moved, 1e-9) && pg.graph.label(pg.graph.basepoint()) == label;
            if !r.all_pass() || !same {
                bad.push(format!("{name}@{label}{}", failure(&r)));
            }
        }
    }
    outcome(bad.is_empty() && count > 0, format!("{count} compressions {}", bad.join(", ")))
}

fn criterion_6() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, depth) in [("A3", 10), ("D4", 8)] {
        let t = build_tower(&graph(name), depth).unwrap();
        let lk = linking_sweep(&t, 2, depth, 100, 6, 1e-8).unwrap();
        let small = build_tower(&graph(name), 8).unwrap();
        let ma = verify_module_action(&small, 2, 5, 6, 1e-8).unwrap();
        let pv = verify_pivotal(&small, 3, 2, 5, 6, 1e-9).unwrap();
        for (tag, r) in [("linking", &lk), ("module", &ma), ("pivotal", &pv)] {
            pass &= r.all_pass();
            details.push(format!("{name} {tag} {:.1e}{}", max_res(r), failure(r)));
        }
    }
    outcome(pass, details.join(", "))
}

fn criterion_7() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for name in GRAPHS {
        let g = graph(name);
        let gpa = GraphPlanarAlgebra::new(&g);
        for sh in [Shading::Plus, Shading::Minus] {
            for n in 0..=4 {
                let loops = LoopSpace::new(gpa.graph().clone(), n, sh).unwrap().dim();
                let count = box_dimension(&g, n, sh);
                if loops != count || count != adjacency_trace(&g, n, sh) {
                    pass = false;
                    details.push(format!("{name} n={n}{}", sh.symbol()));
                }
            }
            let r = verify_markov_axioms(&gpa_tower(&gpa, 4, sh).unwrap(), 1e-9);
            if !r.all_pass() {
                pass = false;
                details.push(format!("{name} GPA tower{}", failure(&r)));
            }
        }
    }
    let mut iso = 0.0f64;
    for name in ["A3", "E6"] {
        let g = graph(name);
        let r0 = find_standard_level(&build_tower(&g, standard_depth(&g)).unwrap()).unwrap().r;
        let t = Arc::new(build_tower(&g, 2 * r0 + 5).unwrap());
        let r = verify_gpa_isomorphism(&CanonicalPA::new(t, 2 * r0).unwrap(), 3, 3, 7, 1e-9).unwrap();
        iso = iso.max(max_res(&r));
        if !r.all_pass() {
            pass = false;
            details.push(format!("{name} isomorphism{}", failure(&r)));
        }
    }
    outcome(pass, format!("box dimensions exact for n <= 4, isomorphism residual {iso:.2e} {}", details.join(", ")))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut details = Vec::new();
    for name in ["A3", "E6"] {
        let g = graph(name);
        let emb = embed_module(g.modulus(), &g, 3).unwrap();
        let r = verify_planar_map(&emb, 3, 3, 8, 1e-9).unwrap();
        pass &= r.all_pass() && r.checks.iter().any(|c| c.paper_label == "Injective");
        details.push(format!("{name} d={:.6} {:.1e}{}", g.modulus(), max_res(&r), failure(&r)));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < 60.0, format!("{}, {secs:.1} s", details.join(", ")))
}

fn criterion_9() -> Outcome {
    let g = graph("A3");
    let r0 = find_standard_level(&build_tower(&g, standard_depth(&g)).unwrap()).unwrap().r;
    let r = invariance_check(&g, r0, r0 + 1, g.index_of("v2"), 2, 9, 1e-8).unwrap();
    let witnessed = r.checks.iter().any(|c| c.paper_label == "Invariance" && c.pass);
    outcome(r.all_pass() && witnessed, format!("r = {r0}, {}; {} checks, max residual {:.2e}{}", r0 + 1, r.checks.len(), max_res(&r), failure(&r)))
}

fn criterion_10() -> Outcome {
    let catalan = [1, 1, 2, 5, 14, 42, 132];
    let dims: Vec<usize> = (0..=6).map(|n| generic_dimension(n).unwrap()).collect();
    let b = basis(3).unwrap();
    let mut failures = 0;
    for x in &b {
        for y in &b {
            for z in &b {
                let (xy, l1) = x.compose(y).unwrap();
                let (left, l2) = xy.compose(z).unwrap();
                let (yz, l3) = y.compose(z).unwrap();
                let (right, l4) = x.compose(&yz).unwrap();
                if left != right || l1 + l2 != l3 + l4 {
                    failures += 1;
                }
            }
        }
    }
    outcome(dims == catalan && failures == 0, format!("dims {dims:?}, {} triples, {failures} failures", b.len().pow(3)))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("axiom suite", criterion_1),
        ("classification round trip", criterion_2),
        ("TLJ relations and Markov trace", criterion_3),
        ("multistep", criterion_4),
        ("compression", criterion_5),
        ("projection category", criterion_6),
        ("graph planar algebra", criterion_7),
        ("embedding", criterion_8),
        ("invariance", criterion_9),
        ("diagram oracle", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!("criterion {:>2} {:<32} {}  {}", i + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
