//! `tljtower`: build Markov towers from pointed bipartite graphs and verify
//! them. Every report-producing command prints JSON on stdout (or to
//! `--out`), a human summary on stderr, and exits 0 exactly when all checks
//! pass.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tljtower::embed::{embed_module, invariance_check, verify_planar_map};
use tljtower::error::Result;
use tljtower::gpa::{adjacency_trace, box_dimension, gpa_tower, GraphPlanarAlgebra};
use tljtower::graph::{builtin, load_graph, save_graph, verify_dimension_function, WeightedBipartiteGraph};
use tljtower::projcat::{linking_sweep, simple_objects, verify_module_action, verify_pivotal};
use tljtower::report::Report;
use tljtower::tljdiag::Shading;
use tljtower::tower::{build_tower, finite_depth, principal_dot, principal_graph};
use tljtower::verify::{verify_elementary_properties_seeded, verify_markov_axioms};

#[derive(Parser, Debug)]
#[command(name = "tljtower", version, about = "Markov towers, projection categories and graph planar algebra embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Graph JSON file, or a builtin name such as A3, D5, E6.
    graph: String,
    /// Tower depth; defaults to 2·diameter + 2.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long, default_value_t = 3)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a Graphviz rendering here.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frobenius-Perron modulus and dimension function.
    Fp(Common),
    /// Tower summary (levels, block sizes, traces, inclusion matrices).
    Build(Common),
    /// Markov axioms, elementary properties and the dimension function.
    Verify(Common),
    /// Principal graph read off the tower.
    Principal(Common),
    /// Loop-space dimensions and the GPA towers.
    Gpa {
        #[command(flatten)]
        common: Common,
        /// Largest box space.
        #[arg(short, long, default_value_t = 4)]
        n: usize,
    },
    /// Linking map, module action, pivotal trace and simple objects.
    Projcat {
        #[command(flatten)]
        common: Common,
        /// Largest entry of the linking parameters (n, i, j, k).
        #[arg(long, default_value_t = 2)]
        max_param: usize,
    },
    /// Embedding of TLJ at the graph's modulus into its GPA.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(short, long, default_value_t = 3)]
        n: usize,
    },
    /// Compare embeddings at levels r1 and r2, optionally after moving the basepoint.
    Invariance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        r1: usize,
        #[arg(long)]
        r2: usize,
        /// Label of an even vertex to move the basepoint to.
        #[arg(long)]
        basepoint: Option<String>,
        #[arg(short, long, default_value_t = 2)]
        n: usize,
    },
}

fn load(spec: &str) -> Result<WeightedBipartiteGraph> {
    let path = Path::new(spec);
    if path.exists() {
        let bytes = std::fs::read(path).map_err(|e| tljtower::error::Error::Invalid(format!("{spec}: {e}")))?;
        load_graph(&bytes)
    } else {
        builtin(spec)
    }
}

fn write(target: Option<&Path>, text: &str) -> std::io::Result<()> {
    match target {
        Some(p) => std::fs::write(p, text),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            other => other,
        },
    }
}

/// JSON payload, plus the report that decides the exit code when there is one.
struct Output {
    json: serde_json::Value,
    report: Option<Report>,
}

impl Output {
    fn data(json: serde_json::Value) -> Self {
        Output { json, report: None }
    }

    fn report(rep: Report) -> Result<Self> {
        Ok(Output { json: serde_json::to_value(&rep)?, report: Some(rep) })
    }
}

fn depth_or_default(c: &Common, g: &WeightedBipartiteGraph) -> usize {
    c.depth.unwrap_or(2 * g.diameter() + 2)
}

fn run(cmd: &Command) -> Result<(Output, Common, Option<String>)> {
    let common = match cmd {
        Command::Fp(c) | Command::Build(c) | Command::Verify(c) | Command::Principal(c) => c,
        Command::Gpa { common, .. }
        | Command::Projcat { common, .. }
        | Command::Embed { common, .. }
        | Command::Invariance { common, .. } => common,
    };
    if !(common.tolerance > 0.0) {
        return Err(tljtower::error::Error::Invalid("tolerance must be positive".into()));
    }
    let g = load(&common.graph)?;
    let depth = depth_or_default(common, &g);
    let (tol, seed, samples) = (common.tolerance, common.seed, common.samples);
    let mut dot = None;
    let out = match cmd {
        Command::Fp(_) => {
            let dims: serde_json::Map<String, serde_json::Value> =
                g.labels().iter().zip(g.dims()).map(|(l, d)| (l.clone(), json!(d))).collect();
            Output::data(json!({ "modulus": g.modulus(), "dim": dims }))
        }
        Command::Build(_) => {
            let t = build_tower(&g, depth)?;
            dot = Some(t.bratteli_dot());
            Output::data(t.summary_json())
        }
        Command::Verify(_) => {
            let t = build_tower(&g, depth)?;
            let mut rep = Report::new(format!("verify {} at depth {depth}", common.graph)).with_seed(seed);
            rep.extend(verify_dimension_function(&g, tol));
            rep.extend(verify_markov_axioms(&t, tol));
            rep.extend(verify_elementary_properties_seeded(&t, tol, seed));
            Output::report(rep)?
        }
        Command::Principal(_) => {
            let t = build_tower(&g, depth)?;
            let pg = principal_graph(&t)?;
            dot = Some(principal_dot(&pg));
            let graph: serde_json::Value = serde_json::from_slice(&save_graph(&pg.graph))?;
            let origin: Vec<_> = pg.origin.iter().map(|&(k, b)| json!({ "level": k, "block": b })).collect();
            let fd = finite_depth(&t).map(|f| f.depth);
            Output::data(json!({
                "graph": graph,
                "origin": origin,
                "certified": pg.certified,
                "finite_depth": fd,
                "isomorphic_to_input": pg.graph.is_isomorphic(&g, 1e-9),
            }))
        }
        Command::Gpa { n, .. } => {
            let gpa = GraphPlanarAlgebra::new(&g);
            let mut rep = Report::new(format!("graph planar algebra of {}", common.graph));
            let mut dims = Vec::new();
            for sh in [Shading::Plus, Shading::Minus] {
                for k in 0..=*n {
                    let dim = box_dimension(&g, k, sh);
                    let want = adjacency_trace(&g, k, sh);
                    rep.push_exact(format!("dim P_{k},{} = trace of adjacency power", sh.symbol()), "LoopCount", dim as i64, want as i64);
                    dims.push(json!({ "n": k, "shading": sh.symbol(), "dim": dim }));
                }
                let t = gpa_tower(&gpa, (*n).max(2), sh)?;
                rep.extend_prefixed(&format!("GPA tower {}: ", sh.symbol()), verify_markov_axioms(&t, tol));
            }
            Output { json: json!({ "box_dimensions": dims, "report": serde_json::to_value(&rep)? }), report: Some(rep) }
        }
        Command::Projcat { max_param, .. } => {
            let t = build_tower(&g, depth)?;
            let mut rep = Report::new(format!("projection category of {} at depth {depth}", common.graph)).with_seed(seed);
            rep.extend(linking_sweep(&t, *max_param, depth, samples, seed, 1e-8)?);
            let small = depth.min(8);
            rep.extend(verify_module_action(&t, 2.min(small / 3), samples, seed, 1e-8)?);
            rep.extend(verify_pivotal(&t, 3.min(small.saturating_sub(4)), 2, samples, seed, tol)?);
            rep.extend(simple_objects(&t, tol)?.1);
            Output::report(rep)?
        }
        Command::Embed { n, .. } => {
            let emb = embed_module(g.modulus(), &g, *n)?;
            let mut rep = Report::new(format!("embedding of TLJ({:.6}) into GPA({}), r = {}", g.modulus(), common.graph, emb.r()));
            rep.extend(verify_planar_map(&emb, *n, samples, seed, tol)?);
            Output::report(rep.with_seed(seed))?
        }
        Command::Invariance { r1, r2, basepoint, n, .. } => {
            let u = match basepoint {
                Some(l) => Some(
                    g.index_of(l).ok_or_else(|| tljtower::error::Error::Invalid(format!("no vertex labelled {l}")))?,
                ),
                None => None,
            };
            Output::report(invariance_check(&g, *r1, *r2, u, *n, seed, 1e-8)?)?
        }
    };
    Ok((out, common.clone(), dot))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (out, common, dot) = match run(&cli.command) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let (Some(path), Some(text)) = (&common.dot, &dot) {
        if let Err(e) = std::fs::write(path, text) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    let text = serde_json::to_string_pretty(&out.json).expect("json");
    let report = out.report;
    if let Err(e) = write(common.out.as_deref(), &text) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match report {
        None => ExitCode::SUCCESS,
        Some(r) => {
            eprint!("{}", r.summary());
            match r.first_failure() {
                None => ExitCode::SUCCESS,
                Some(c) => {
                    eprintln!("first failing check: {} ({})", c.paper_label, c.name);
                    ExitCode::from(1)
                }
            }
        }
    }
}
