//! `afdlu`: command-line front end for the string-net simulator.

mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use afdlu_core::afdlu::{prepare, projector_residual};
use afdlu_core::anyons::{apply_tubes, tube_patch};
use afdlu_core::lattice::Chain1;
use afdlu_core::oneform::{regauge_region, ungauge_region, Window};
use afdlu_core::oracle::{fidelity, gluing, ground_space_dim};
use afdlu_core::protocol::{naive_cyclic_sim, nilpotent_string_sim, run_trials, solvable_string_sim};
use afdlu_core::{
    apply_string, builtin, builtin_theory, check_tube_algebra, gauge_with_anyons, idempotent, inner, AnyonTheory,
    Complex64, DomainWallOp, Error, FusionCategory, HalfBraiding, HoneycombTorus, Region, SparseState, StringNet,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use report::Report;

const FIDELITY_TOL: f64 = 1e-8;
const PROJECTOR_TOL: f64 = 1e-10;
const ALGEBRA_TOL: f64 = 1e-12;
const INTEGER_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "afdlu", version, about = "Exact string-net simulation, adaptive preparation and anyon strings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Leave timings out of the report so identical runs give identical bytes.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write the report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct LatticeArgs {
    #[arg(long, default_value_t = 2)]
    lx: usize,
    #[arg(long, default_value_t = 2)]
    ly: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Prepare a ground state with the sequential gauging protocol.
    Prepare {
        /// Built-in name or category JSON file.
        #[arg(long)]
        category: String,
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the prepared state here.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Write the measurement transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Check a dumped state: projector scan and fidelity with the direct ground state.
    Verify {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        category: String,
        #[command(flatten)]
        lattice: LatticeArgs,
    },
    /// Ground-space dimension by the projector trace.
    Gsd {
        #[arg(long)]
        category: String,
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Fail unless the trace rounds to this value.
        #[arg(long)]
        expect: Option<usize>,
    },
    /// Apply an anyon string operator to the ground state and scan its projectors.
    StringOp {
        #[arg(long)]
        category: String,
        /// `1`, `phi`, `em*`, `e*m`.
        #[arg(long)]
        anyon: String,
        /// Dual path, `x:y,x:y,...`.
        #[arg(long)]
        path: String,
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dense checks of a tube-algebra idempotent.
    Tube {
        #[arg(long, default_value = "ty_z3")]
        category: String,
        #[arg(long, value_enum)]
        idempotent: Idempotent,
        /// Run the dense algebra checks (always on; kept for script compatibility).
        #[arg(long)]
        check: bool,
    },
    /// Ungauge and regauge a region of a ℤ_N ground state.
    Oneform {
        #[arg(long)]
        roundtrip: bool,
        /// `zN`, e.g. `z3`.
        #[arg(long)]
        group: String,
        /// Region plaquettes, `x:y,x:y,...`.
        #[arg(long)]
        region: String,
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Label-level string protocols.
    Protocol {
        #[arg(value_enum)]
        kind: ProtocolKind,
        /// Built-in name (`doubled_ising`, `zty3`, `dz3`) or theory JSON file.
        #[arg(long)]
        theory: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// String label; defaults to the first label of largest dimension.
        #[arg(long)]
        anyon: Option<String>,
        /// Number of pairs in the string.
        #[arg(long, default_value_t = 8)]
        length: usize,
        /// Rounds in the cyclic success curve.
        #[arg(long, default_value_t = 8)]
        depth: usize,
        /// Override the per-round failure probability (cyclic only).
        #[arg(long)]
        p: Option<f64>,
        /// Write the success curve as CSV (cyclic only).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write every transcript as JSON lines.
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Idempotent {
    Vacuum,
    Phi,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ProtocolKind {
    Nilpotent,
    Cyclic,
    Solvable,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli.cmd) {
        Ok(mut report) => {
            if cli.global.deterministic {
                report.timings_ms = None;
            }
            let text = report.to_json();
            println!("{text}");
            if let Some(p) = &cli.global.report {
                if let Err(e) = std::fs::write(p, format!("{text}\n")) {
                    eprintln!("error: writing {}: {e}", p.display());
                    return ExitCode::from(1);
                }
            }
            ExitCode::from(if report.pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::UnknownName(_) | Error::Io(_) | Error::Json(_) => 2,
        Error::ResourceGuard(_) => 3,
        _ => 1,
    }
}

fn run(cmd: &Command) -> afdlu_core::Result<Report> {
    match cmd {
        Command::Prepare { category, lattice, seed, dump, transcript } => {
            cmd_prepare(category, lattice, *seed, dump.as_deref(), transcript.as_deref())
        }
        Command::Verify { state, category, lattice } => cmd_verify(state, category, lattice),
        Command::Gsd { category, lattice, expect } => cmd_gsd(category, lattice, *expect),
        Command::StringOp { category, anyon, path, lattice, seed } => cmd_string_op(category, anyon, path, lattice, *seed),
        Command::Tube { category, idempotent, .. } => cmd_tube(category, *idempotent),
        Command::Oneform { roundtrip, group, region, lattice, seed } => {
            if !roundtrip {
                return Err(Error::InvalidArgument("oneform supports only --roundtrip".into()));
            }
            cmd_oneform(group, region, lattice, *seed)
        }
        Command::Protocol { kind, theory, trials, seed, anyon, length, depth, p, csv, transcripts } => cmd_protocol(
            *kind,
            theory,
            *trials,
            *seed,
            anyon.as_deref(),
            *length,
            *depth,
            *p,
            csv.as_deref(),
            transcripts.as_deref(),
        ),
    }
}

fn load_category(spec: &str) -> afdlu_core::Result<FusionCategory> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        FusionCategory::from_file(&serde_json::from_str(&text)?, afdlu_core::fusion::DEFAULT_TOL)
    } else {
        builtin(spec)
    }
}

fn load_theory(spec: &str) -> afdlu_core::Result<AnyonTheory> {
    let path = Path::new(spec);
    if path.is_file() {
        AnyonTheory::load(path)
    } else {
        builtin_theory(spec)
    }
}

fn build_lattice(l: &LatticeArgs) -> afdlu_core::Result<HoneycombTorus> {
    HoneycombTorus::build(l.lx, l.ly)
}

/// `⟨ψ|O ψ⟩ / ⟨ψ|ψ⟩`.
fn expect(state: &SparseState, image: &SparseState) -> afdlu_core::Result<Complex64> {
    Ok(inner(state, image)? / state.norm_sq())
}

fn one_dev(z: Complex64) -> f64 {
    (z - Complex64::new(1.0, 0.0)).norm()
}

fn cmd_prepare(
    category: &str,
    lattice: &LatticeArgs,
    seed: u64,
    dump: Option<&Path>,
    transcript: Option<&Path>,
) -> afdlu_core::Result<Report> {
    let cat = load_category(category)?;
    let lat = build_lattice(lattice)?;
    let mut rep = Report::new("prepare", json!({"category": cat.name, "lx": lat.lx, "ly": lat.ly, "seed": seed}));
    rep.checksums.insert("category".into(), cat.checksum());
    let t0 = Instant::now();
    let (st, tr) = prepare(&cat, &lat, seed)?;
    rep.time("prepare", t0);
    let sn = StringNet::new(cat.clone(), lat.graph());
    let t1 = Instant::now();
    let resid = projector_residual(&sn, &st, cat.series.len())?;
    let fid = fidelity(&st, &sn.ground_state_direct()?)?;
    rep.time("verify", t1);
    rep.at_most("projector_residual", resid, PROJECTOR_TOL);
    rep.at_least("fidelity_direct", fid, 1.0 - FIDELITY_TOL);
    if cat.name == "ty_z3" && lat.num_plaquettes() <= 6 {
        let t2 = Instant::now();
        let (dev, n) = gluing::max_deviation(&lat)?;
        rep.time("gluing", t2);
        rep.at_most("gluing_formula_deviation", dev, PROJECTOR_TOL);
        rep.results = json!({"gluing_assignments": n});
    }
    rep.checksums.insert("state".into(), tr.checksum.clone());
    let mut results = rep.results.take();
    if results.is_null() {
        results = json!({});
    }
    results["rounds"] = json!(tr.rounds.len());
    results["outcomes"] = json!(tr.rounds.iter().map(|r| r.outcomes.clone()).collect::<Vec<_>>());
    results["terms"] = json!(st.len());
    rep.results = results;
    if let Some(p) = dump {
        st.save(p)?;
    }
    if let Some(p) = transcript {
        std::fs::write(p, serde_json::to_string_pretty(&tr)?)?;
    }
    Ok(rep)
}

fn cmd_verify(state: &Path, category: &str, lattice: &LatticeArgs) -> afdlu_core::Result<Report> {
    let cat = load_category(category)?;
    let lat = build_lattice(lattice)?;
    let st = SparseState::load(state)?;
    let sn = StringNet::new(cat.clone(), lat.graph());
    if st.layout != sn.layout() {
        return Err(Error::InvalidArgument("state layout does not match the category and lattice".into()));
    }
    let mut rep =
        Report::new("verify", json!({"state": state.display().to_string(), "category": cat.name, "lx": lat.lx, "ly": lat.ly}));
    rep.checksums.insert("category".into(), cat.checksum());
    rep.checksums.insert("state".into(), afdlu_core::afdlu::state_checksum(&st));
    let t0 = Instant::now();
    let mut av = Vec::new();
    for v in 0..sn.num_vertices() {
        av.push(one_dev(expect(&st, &sn.apply_av(&st, v))?));
    }
    let mut bp = Vec::new();
    for f in 0..sn.num_faces() {
        bp.push(one_dev(expect(&st, &sn.apply_bp(&st, f)?)?));
    }
    let fid = fidelity(&st, &sn.ground_state_direct()?)?;
    rep.time("verify", t0);
    rep.at_most("a_v_eigenvalue_deviation", av.iter().copied().fold(0.0, f64::max), PROJECTOR_TOL);
    rep.at_most("b_p_eigenvalue_deviation", bp.iter().copied().fold(0.0, f64::max), PROJECTOR_TOL);
    rep.at_least("fidelity_direct", fid, 1.0 - FIDELITY_TOL);
    rep.results = json!({"a_v_deviation": av, "b_p_deviation": bp});
    Ok(rep)
}

fn cmd_gsd(category: &str, lattice: &LatticeArgs, want: Option<usize>) -> afdlu_core::Result<Report> {
    let cat = load_category(category)?;
    let lat = build_lattice(lattice)?;
    let mut rep = Report::new("gsd", json!({"category": cat.name, "lx": lat.lx, "ly": lat.ly, "expect": want}));
    rep.checksums.insert("category".into(), cat.checksum());
    let t0 = Instant::now();
    let d = ground_space_dim(&cat, &lat)?;
    rep.time("trace", t0);
    let rounded = d.round();
    rep.at_most("distance_to_integer", (d - rounded).abs(), INTEGER_TOL);
    if let Some(w) = want {
        rep.at_most("distance_to_expected", (d - w as f64).abs(), INTEGER_TOL);
    }
    rep.results = json!({"trace": d, "dimension": rounded as i64});
    Ok(rep)
}

fn cmd_string_op(category: &str, anyon: &str, path: &str, lattice: &LatticeArgs, seed: u64) -> afdlu_core::Result<Report> {
    let cat = load_category(category)?;
    let lat = build_lattice(lattice)?;
    let dual = lat.parse_path(path)?;
    let (start, end) = (dual.start(), dual.end());
    let omega = HalfBraiding::named(&cat, anyon)?;
    let is_phi = omega.label == "phi";
    if is_phi && cat.name != "ty_z3" {
        return Err(Error::InvalidArgument("phi strings need ty_z3".into()));
    }
    if cat.name == "ty_z3" && !is_phi && omega.label != "1" {
        return Err(Error::InvalidArgument(format!("{anyon} is not an anyon of the ty_z3 string-net")));
    }
    let mut rep = Report::new(
        "string-op",
        json!({"category": cat.name, "anyon": anyon, "path": path, "plaquettes": dual.plaquettes, "lx": lat.lx, "ly": lat.ly, "seed": seed}),
    );
    rep.checksums.insert("category".into(), cat.checksum());
    let sn = StringNet::new(cat.clone(), lat.graph_with_tails(&[start, end]));
    let t0 = Instant::now();
    let gs = sn.ground_state_direct()?;
    let w = apply_string(&sn, &gs, &dual, &omega, None)?;
    rep.time("string", t0);
    let t1 = Instant::now();
    let mut av: f64 = 0.0;
    for v in 0..sn.num_vertices() {
        av = av.max(one_dev(expect(&w, &sn.apply_av(&w, v))?));
    }
    rep.at_most("a_v_eigenvalue_deviation", av, PROJECTOR_TOL);
    let mut bulk: f64 = 0.0;
    let mut endpoints = BTreeMap::new();
    for f in 0..sn.num_faces() {
        let b = expect(&w, &sn.apply_bp(&w, f)?)?;
        if f == start || f == end {
            endpoints.insert(f.to_string(), b.re);
        } else {
            bulk = bulk.max(one_dev(b));
        }
    }
    rep.at_most("bulk_b_p_deviation", bulk, PROJECTOR_TOL);
    let trivial = omega.label == "1";
    if is_phi {
        let pf = idempotent(&cat, "phi")?;
        let mut worst: f64 = 0.0;
        for f in [start, end] {
            worst = worst.max(one_dev(expect(&w, &apply_tubes(&sn, &w, f, &pf)?)?));
        }
        rep.at_most("endpoint_p_phi_deviation", worst, PROJECTOR_TOL);
        // Same string from gauging the ℤ3 dyon pair.
        let level1 = {
            let mut s = sn.vacuum();
            for f in 0..sn.num_faces() {
                s = sn.apply_bp_level(&s, f, 1)?;
            }
            s.normalized()?
        };
        let em = apply_string(&sn, &level1, &dual, &HalfBraiding::zn_dyon(3, 1), None)?;
        let me = apply_string(&sn, &level1, &dual, &HalfBraiding::zn_dyon(3, 2), None)?;
        let input = em.axpy(Complex64::new(1.0, 0.0), &me)?;
        let wall = DomainWallOp::ty_phi(&cat)?;
        let anyons = [(start, wall.clone()), (end, wall)].into_iter().collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (gauged, rec) = gauge_with_anyons(&sn, &lat, &input, 2, &anyons, &mut rng)?;
        rep.at_least("fidelity_gauged_dyons", fidelity(&gauged, &w)?, 1.0 - FIDELITY_TOL);
        rep.results = json!({"gauging_outcomes": rec.outcomes});
    } else {
        let worst = endpoints.values().map(|b| if trivial { (b - 1.0).abs() } else { b.abs() }).fold(0.0, f64::max);
        rep.at_most(if trivial { "endpoint_b_p_deviation" } else { "endpoint_b_p_value" }, worst, PROJECTOR_TOL);
    }
    rep.time("checks", t1);
    let mut results = rep.results.take();
    if results.is_null() {
        results = json!({});
    }
    results["endpoint_b_p"] = json!(endpoints);
    results["norm"] = json!(w.norm());
    rep.results = results;
    Ok(rep)
}

fn cmd_tube(category: &str, which: Idempotent) -> afdlu_core::Result<Report> {
    let cat = load_category(category)?;
    let name = match which {
        Idempotent::Vacuum => "vacuum",
        Idempotent::Phi => "phi",
    };
    let mut rep = Report::new("tube", json!({"category": cat.name, "idempotent": name}));
    rep.checksums.insert("category".into(), cat.checksum());
    let t0 = Instant::now();
    let r = check_tube_algebra(&cat, name)?;
    rep.time("dense", t0);
    rep.at_most("idempotency", r.idempotency, ALGEBRA_TOL);
    rep.at_most("hermiticity", r.hermiticity, ALGEBRA_TOL);
    rep.at_most("orthogonality", r.orthogonality, ALGEBRA_TOL);
    rep.at_most("wall_representation", r.representation, ALGEBRA_TOL);
    // Eigenvalue on the ground state with a trivial tail: 1 for the vacuum, 0 otherwise.
    let lat = HoneycombTorus::build(2, 2)?;
    let sn = StringNet::new(cat.clone(), lat.graph_with_tails(&[0]));
    let gs = sn.ground_state_direct()?;
    let p = idempotent(&cat, name)?;
    let ev = expect(&gs, &apply_tubes(&sn, &gs, 0, &p)?)?;
    let want = if name == "vacuum" { 1.0 } else { 0.0 };
    rep.at_most("ground_state_eigenvalue_deviation", (ev - Complex64::new(want, 0.0)).norm(), PROJECTOR_TOL);
    let (_, basis) = tube_patch(&cat, [0; 6])?;
    rep.results = json!({"patch_dims": r.patch_dims, "ground_state_eigenvalue": ev.re, "trivial_leg_patch": basis.len()});
    Ok(rep)
}

fn cmd_oneform(group: &str, region: &str, lattice: &LatticeArgs, seed: u64) -> afdlu_core::Result<Report> {
    let n: usize = group
        .trim()
        .to_ascii_lowercase()
        .strip_prefix('z')
        .and_then(|s| s.parse().ok())
        .filter(|&n| n >= 2)
        .ok_or_else(|| Error::InvalidArgument(format!("group `{group}` is not zN with N ≥ 2")))?;
    let cat = builtin(&format!("vec_z{n}"))?;
    let lat = build_lattice(lattice)?;
    let reg = Region::parse(&lat, region)?;
    let mut rep = Report::new(
        "oneform",
        json!({"group": format!("z{n}"), "region": region, "lx": lat.lx, "ly": lat.ly, "seed": seed}),
    );
    rep.checksums.insert("category".into(), cat.checksum());
    let sn = StringNet::new(cat.clone(), lat.graph());
    let gs = sn.ground_state_direct()?;
    // Flux pair with both ends outside the region (a flux inside would carry holonomy).
    let outside: Vec<usize> = (0..lat.num_plaquettes()).filter(|p| !reg.plaquettes.contains(p)).collect();
    let mut inputs = vec![("ground_state", gs.clone())];
    if let (Some(&p), Some(&q)) = (outside.first(), outside.last()) {
        if p != q {
            inputs.push(("flux_pair", sn.apply_char_string(&gs, 1, 1, &lat.dual_path(p, q))?));
        }
    }
    // Charge pair at two region vertices.
    let win = Window::new(&cat, &lat, reg.clone())?;
    let verts: Vec<usize> = reg.vertices.iter().copied().collect();
    if verts.len() >= 2 {
        let chain = Chain1::along(&win.group, &lat, &win.path(verts[0], verts[verts.len() / 2]), 1);
        inputs.push(("charge_pair", win.apply_chain(&gs, &chain, true)));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let t0 = Instant::now();
    let mut records = Vec::new();
    for (name, st) in &inputs {
        let (ungauged, win, out) = ungauge_region(&cat, &lat, st, &reg, &mut rng)?;
        let (back, rec) = regauge_region(&win, &ungauged, &mut rng)?;
        rep.at_least(&format!("fidelity_{name}"), fidelity(&back, st)?, 1.0 - 1e-10);
        records.push(json!({"state": name, "edge_outcomes": out.edge_outcomes, "byproduct": out.byproduct, "vertex_outcomes": rec.outcomes}));
    }
    rep.time("roundtrip", t0);
    rep.results = json!(records);
    Ok(rep)
}

#[allow(clippy::too_many_arguments)]
fn cmd_protocol(
    kind: ProtocolKind,
    theory: &str,
    trials: usize,
    seed: u64,
    anyon: Option<&str>,
    length: usize,
    depth: usize,
    p: Option<f64>,
    csv: Option<&Path>,
    transcripts: Option<&Path>,
) -> afdlu_core::Result<Report> {
    let th = load_theory(theory)?;
    th.validate()?;
    let a = match anyon {
        Some(name) => th.label(name)?,
        None => match kind {
            ProtocolKind::Cyclic => (0..th.rank())
                .find(|&x| !th.is_invertible(x) && th.n(x, th.dual[x], x) > 0)
                .ok_or_else(|| Error::InvalidArgument(format!("{} has no cyclic label", th.name)))?,
            _ => (0..th.rank()).fold(0, |best, x| if th.dims[x] > th.dims[best] + 1e-12 { x } else { best }),
        },
    };
    let mut rep = Report::new(
        "protocol",
        json!({"kind": format!("{kind:?}").to_lowercase(), "theory": th.name, "anyon": th.labels[a], "trials": trials,
               "seed": seed, "length": length, "depth": depth, "p_override": p}),
    );
    rep.checksums.insert("theory".into(), th.checksum());
    let t0 = Instant::now();
    match kind {
        ProtocolKind::Cyclic => {
            let curve = naive_cyclic_sim(&th, a, depth, trials, seed, p)?;
            rep.at_most("max_sigma_deviation", curve.max_z(), 3.0);
            if let Some(path) = csv {
                std::fs::write(path, curve.to_csv()?)?;
            }
            rep.results = serde_json::to_value(&curve)?;
        }
        ProtocolKind::Nilpotent | ProtocolKind::Solvable => {
            let nilpotent = matches!(kind, ProtocolKind::Nilpotent);
            let runs = run_trials(seed, trials, |rng| {
                if nilpotent {
                    nilpotent_string_sim(&th, a, length, rng)
                } else {
                    solvable_string_sim(&th, a, length, rng)
                }
            });
            let runs: Vec<_> = runs.into_iter().collect::<afdlu_core::Result<_>>()?;
            let series = th.levels.len() - 1;
            let mut hist = BTreeMap::<usize, usize>::new();
            let (mut bad_books, mut within, mut far_ok) = (0usize, 0usize, 0usize);
            let mut max_cond = 0;
            for tr in &runs {
                *hist.entry(tr.rounds.len()).or_default() += 1;
                bad_books += tr.check_bookkeeping(&th).is_err() as usize;
                far_ok += (tr.terminated() && tr.far_end == a) as usize;
                within += (tr.rounds.len() <= series.max(1)) as usize;
                max_cond = max_cond.max(tr.condensation_rounds);
            }
            let t = trials.max(1) as f64;
            rep.at_least("fraction_within_series_length", within as f64 / t, 1.0);
            rep.at_least("fraction_far_end_correct", far_ok as f64 / t, 1.0);
            rep.at_most("bookkeeping_failures", bad_books as f64, 0.0);
            if !nilpotent {
                rep.at_most("max_condensation_rounds", max_cond as f64, series as f64);
            }
            rep.results = json!({"rounds_histogram": hist, "series_length": series, "max_condensation_rounds": max_cond});
            if let Some(path) = transcripts {
                let mut lines = String::new();
                for tr in &runs {
                    lines.push_str(&serde_json::to_string(tr)?);
                    lines.push('\n');
                }
                std::fs::write(path, lines)?;
            }
        }
    }
    rep.time("trials", t0);
    Ok(rep)
}
