//! Command-line pipeline: validate rod structures, build model maps, run
//! the harmonic-map solver, diagnose solved fields, sample closed-form
//! oracles, and export plot tables. Exit codes: 0 ok, 1 negative domain
//! verdict, 2 usage/schema error, 3 numerical failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use instanton_core::config::{hex_string, ConfigError, RunConfig};
use instanton_core::diagnostics::{
    basis_matches, calibrate_nu, conical_angles, extract_rod_structure, fit_asymptotics,
    fit_mass_from_nu, mazur_field, transform_field, twist_and_residuals, AsymptoticFit,
};
use instanton_core::grid::{AxisData, HalfPlaneGrid, PhiField};
use instanton_core::mat2::sym_eigen;
use instanton_core::model_map::AsymptoticClass;
use instanton_core::oracles::{
    asymptotic_model_gram, selfdual_proper_gram, taub_bolt_pipeline_gram, AsymptoticModelParams,
    BasisTag, CenterSet,
};
use instanton_core::rod::{lens_invariants, validate_rod_structure, RodVector};
use instanton_core::snapshot::GridSnapshot;
use instanton_core::solver::{conformal_factor, discrete_tension, margin_excluded, solve};

const EXIT_OK: u8 = 0;
const EXIT_VERDICT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "instanton", version, about = "Toric gravitational instanton pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a rod structure for admissibility and print its lens invariants.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build the explicit model map and write it as a grid snapshot.
    Modelmap {
        #[arg(long)]
        config: PathBuf,
        /// Output directory root (overrides [output].dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relax the model map to the harmonic field and write snapshot + report.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Attach a Mazur-distance summary against a named oracle
        /// (taub-nut, taub-bolt).
        #[arg(long)]
        compare_oracle: Option<String>,
    },
    /// Read invariants off a snapshot.
    Diagnose {
        #[arg(long)]
        snapshot: PathBuf,
        /// Config used to produce the snapshot; hashes must match.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report the sup of the discrete tension.
        #[arg(long)]
        tension: bool,
        /// Extract the rod structure from the axis.
        #[arg(long)]
        rods: bool,
        /// Conical angles per rod (needs a snapshot with nu).
        #[arg(long)]
        cones: bool,
        /// Fit ALF invariants (NUT, mass, j).
        #[arg(long)]
        fit_alf: bool,
        /// Fit the ALE remainder decay exponent.
        #[arg(long)]
        fit_ale: bool,
        /// Twist potential and Ernst-pair residuals.
        #[arg(long)]
        twist: bool,
        #[arg(long)]
        compare_oracle: Option<String>,
    },
    /// Sample a closed-form oracle onto a grid snapshot.
    Oracle {
        /// gibbons-hawking | taub-nut | taub-bolt | asymptotic-model
        name: String,
        /// Number of centers (gibbons-hawking).
        #[arg(long, default_value_t = 2)]
        centers: usize,
        /// Asymptotic constant c (gibbons-hawking / asymptotic-model).
        #[arg(long, default_value_t = 0.0)]
        c: f64,
        /// Center spacing in Gibbons-Hawking coordinates.
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        /// NUT parameter (taub-nut / taub-bolt).
        #[arg(long, default_value_t = 1.0)]
        nut: f64,
        #[arg(long, default_value_t = 1)]
        p: i64,
        #[arg(long, default_value_t = 0)]
        q: i64,
        #[arg(long, default_value_t = 128)]
        n_rho: usize,
        #[arg(long, default_value_t = 256)]
        n_z: usize,
        /// Output snapshot path (default <name>.snap).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export plot tables from a snapshot as comma-separated text.
    Export {
        #[arg(long)]
        snapshot: PathBuf,
        /// ray | rod | grid
        #[arg(long)]
        what: String,
        /// Polar angle for ray profiles (radians).
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
        theta: f64,
        /// Output file (default stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Validate { config } => cmd_validate(&config),
        Cmd::Modelmap { config, out } => cmd_modelmap(&config, out.as_deref()),
        Cmd::Solve { config, out, compare_oracle } => {
            cmd_solve(&config, out.as_deref(), compare_oracle.as_deref())
        }
        Cmd::Diagnose {
            snapshot,
            config,
            out,
            tension,
            rods,
            cones,
            fit_alf,
            fit_ale,
            twist,
            compare_oracle,
        } => cmd_diagnose(DiagnoseArgs {
            snapshot,
            config,
            out,
            tension,
            rods,
            cones,
            fit_alf,
            fit_ale,
            twist,
            compare_oracle,
        }),
        Cmd::Oracle { name, centers, c, spacing, nut, p, q, n_rho, n_z, out } => {
            cmd_oracle(&name, centers, c, spacing, nut, p, q, n_rho, n_z, out.as_deref())
        }
        Cmd::Export { snapshot, what, theta, out } => {
            cmd_export(&snapshot, &what, theta, out.as_deref())
        }
    };
    ExitCode::from(code)
}

fn load_config(path: &Path) -> Result<RunConfig, u8> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read config {}: {e}", path.display());
        EXIT_USAGE
    })?;
    RunConfig::from_toml_str(&text).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_USAGE
    })
}

fn cmd_validate(config: &Path) -> u8 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let rs = match cfg.rod_structure() {
        Ok(rs) => rs,
        Err(e) => {
            println!("verdict: not admissible");
            println!("  {e}");
            return EXIT_VERDICT;
        }
    };
    let report = validate_rod_structure(&rs);
    println!("corners: {:?}", rs.corners);
    for (i, (v, w)) in rs.rod_vectors.windows(2).map(|w| (w[0], w[1])).enumerate() {
        println!(
            "junction {}: det(({},{}), ({},{})) = {}",
            i + 1,
            v.a,
            v.b,
            w.a,
            w.b,
            report.junction_dets[i]
        );
    }
    if !report.admissible {
        println!("verdict: not admissible (junctions {:?})", report.failing_junctions);
        return EXIT_VERDICT;
    }
    match lens_invariants(&rs) {
        Ok(lens) => {
            println!("lens: L({}, {})", lens.p, lens.q);
            println!("verdict: admissible");
            EXIT_OK
        }
        Err(e) => {
            println!("verdict: not admissible");
            println!("  {e}");
            EXIT_VERDICT
        }
    }
}

/// One directory per run, named by command and resolved-config hash so
/// reruns are bitwise-identical.
struct RunDir {
    dir: PathBuf,
    artifacts: Vec<(String, String)>,
}

impl RunDir {
    fn create(cfg: &RunConfig, command: &str, out: Option<&Path>) -> Result<Self, u8> {
        let root = out
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
        let dir = root.join(format!("{command}-{}", &cfg.resolved_hash()[..8]));
        std::fs::create_dir_all(&dir).map_err(|e| {
            eprintln!("error: cannot create run directory {}: {e}", dir.display());
            EXIT_USAGE
        })?;
        let mut rd = RunDir { dir, artifacts: Vec::new() };
        rd.write("config.resolved.toml", cfg.to_resolved_toml().as_bytes())?;
        Ok(rd)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), u8> {
        std::fs::write(self.path(name), bytes).map_err(|e| {
            eprintln!("error: cannot write {name}: {e}");
            EXIT_USAGE
        })?;
        self.artifacts
            .push((name.to_string(), hex_string(&Sha256::digest(bytes))));
        Ok(())
    }

    fn record_file(&mut self, name: &str) -> Result<(), u8> {
        let bytes = std::fs::read(self.path(name)).map_err(|_| EXIT_USAGE)?;
        self.artifacts
            .push((name.to_string(), hex_string(&Sha256::digest(&bytes))));
        Ok(())
    }

    fn finish(mut self, cfg: &RunConfig, command: &str) -> Result<PathBuf, u8> {
        let mut m = String::new();
        writeln!(m, "command = \"{command}\"").unwrap();
        writeln!(m, "config_hash = \"{}\"", cfg.resolved_hash()).unwrap();
        writeln!(m, "\n[artifacts]").unwrap();
        self.artifacts.sort();
        for (name, digest) in &self.artifacts {
            writeln!(m, "\"{name}\" = \"{digest}\"").unwrap();
        }
        let path = self.dir.join("manifest.toml");
        std::fs::write(&path, m).map_err(|_| EXIT_USAGE)?;
        Ok(self.dir)
    }
}

fn cmd_modelmap(config: &Path, out: Option<&Path>) -> u8 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let spec = match cfg.model_map_spec() {
        Ok(s) => s,
        Err(ConfigError::Schema(e)) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
        Err(e) => {
            println!("verdict: not admissible\n  {e}");
            return EXIT_VERDICT;
        }
    };
    let grid = HalfPlaneGrid::from_spec(&spec, cfg.solver.n_rho, cfg.solver.n_z);
    let phi = match PhiField::from_model_map(&grid, &spec) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: model map evaluation failed: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let mut rd = match RunDir::create(&cfg, "modelmap", out) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let snap = GridSnapshot::from_phi(&phi, &grid, &cfg.resolved_hash());
    if snap.save(&rd.path("modelmap.snap")).is_err() || rd.record_file("modelmap.snap").is_err() {
        eprintln!("error: cannot write snapshot");
        return EXIT_USAGE;
    }
    match rd.finish(&cfg, "modelmap") {
        Ok(dir) => {
            println!(
                "model map: L({}, {}) on {}x{} grid -> {}",
                spec.lens.p,
                spec.lens.q,
                grid.n_rho,
                grid.n_z,
                dir.display()
            );
            EXIT_OK
        }
        Err(code) => code,
    }
}

fn solve_report_toml(r: &instanton_core::solver::SolveReport) -> String {
    // wall time is deliberately omitted: artifacts must be bitwise
    // reproducible across reruns
    let mut s = String::new();
    writeln!(s, "iterations = {}", r.iterations).unwrap();
    writeln!(s, "final_tension = {:e}", r.final_tension).unwrap();
    writeln!(s, "converged = {}", r.converged).unwrap();
    let hist: Vec<String> = r.tension_history.iter().map(|x| format!("{x:e}")).collect();
    writeln!(s, "tension_history = [{}]", hist.join(", ")).unwrap();
    let hist: Vec<String> = r.energy_history.iter().map(|x| format!("{x:e}")).collect();
    writeln!(s, "energy_history = [{}]", hist.join(", ")).unwrap();
    s
}

fn cmd_solve(config: &Path, out: Option<&Path>, compare: Option<&str>) -> u8 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let spec = match cfg.model_map_spec() {
        Ok(s) => s,
        Err(ConfigError::Schema(e)) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
        Err(e) => {
            println!("verdict: not admissible\n  {e}");
            return EXIT_VERDICT;
        }
    };
    let params = cfg.solve_params();
    let result = match solve(&spec, &params) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: solver failed: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let mut rd = match RunDir::create(&cfg, "solve", out) {
        Ok(r) => r,
        Err(code) => return code,
    };

    // integrated conformal factor, calibrated against the model map at the
    // quadrature reference node (which lies in the outer model region)
    let (mut nu, loop_residual) = conformal_factor(&result.phi, &result.grid);
    let gref = (result.grid.n_rho - 2, result.grid.n_z / 2);
    if let Ok(sample) = instanton_core::model_map::model_map_eval(
        &spec,
        result.grid.rho(gref.0),
        result.grid.z(gref.1),
    ) {
        if sample.nu.is_finite() {
            calibrate_nu(&mut nu, &result.grid, sample.nu);
        }
    }

    let snap = GridSnapshot::from_phi(&result.phi, &result.grid, &cfg.resolved_hash())
        .with_nu(nu);
    if snap.save(&rd.path("solution.snap")).is_err() || rd.record_file("solution.snap").is_err() {
        eprintln!("error: cannot write snapshot");
        return EXIT_USAGE;
    }
    let mut report = solve_report_toml(&result.report);
    writeln!(report, "nu_loop_residual = {loop_residual:e}").unwrap();

    if let Some(name) = compare {
        match oracle_on_grid(name, &cfg, &spec, &result.grid, &result.phi) {
            Ok(oracle) => {
                let (psi, sup) = mazur_field(&result.phi, &oracle, &result.grid).unwrap();
                let sup_margin = margin_sup(&psi, &result.grid);
                writeln!(report, "\n[compare.{name}]").unwrap();
                writeln!(report, "mazur_sup = {sup:e}").unwrap();
                writeln!(report, "mazur_sup_margin = {sup_margin:e}").unwrap();
                println!("mazur vs {name}: sup {sup:.3e} (margin {sup_margin:.3e})");
            }
            Err(e) => {
                eprintln!("error: --compare-oracle {name}: {e}");
                return EXIT_USAGE;
            }
        }
    }
    if rd.write("report.toml", report.as_bytes()).is_err() {
        return EXIT_USAGE;
    }
    let dir = match rd.finish(&cfg, "solve") {
        Ok(d) => d,
        Err(code) => return code,
    };
    println!(
        "solve: {} sweeps, sup tension {:.3e}, converged = {} -> {}",
        result.report.iterations,
        result.report.final_tension,
        result.report.converged,
        dir.display()
    );
    if result.report.converged {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    }
}

fn margin_sup(field: &[f64], grid: &HalfPlaneGrid) -> f64 {
    let mut sup = 0.0f64;
    for k in 0..grid.n_z {
        for j in 0..grid.n_rho {
            if !margin_excluded(grid, grid.rho(j), grid.z(k)) {
                sup = sup.max(field[grid.idx(j, k)]);
            }
        }
    }
    sup
}

/// Samples a named closed-form oracle on the given grid in the same lens
/// basis as the spec's model map. Rod vectors pin a basis change only up
/// to per-rod signs, so among the matching unimodular candidates we keep
/// the one whose transformed Gram is closest to `target` at probe nodes.
fn oracle_on_grid(
    name: &str,
    cfg: &RunConfig,
    spec: &instanton_core::model_map::ModelMapSpec,
    grid: &HalfPlaneGrid,
    target: &PhiField,
) -> Result<PhiField, String> {
    let nut = cfg.asymptotics.nut;
    let (raw, raw_vectors): (PhiField, Vec<RodVector>) = match name {
        "taub-nut" => {
            let params = AsymptoticModelParams::alf(1, 0, nut).map_err(|e| e.to_string())?;
            let phi = PhiField::from_fn(grid, BasisTag::Lens { p: 1, q: 0 }, |rho, z| {
                asymptotic_model_gram(&params, rho, z).unwrap().g / rho
            });
            (phi, vec![RodVector { a: 0, b: 1 }, RodVector { a: 1, b: 0 }])
        }
        "taub-bolt" => {
            let phi = PhiField::from_fn(grid, BasisTag::Lens { p: 1, q: 0 }, |rho, z| {
                taub_bolt_pipeline_gram(nut, rho, z).unwrap().g / rho
            });
            (
                phi,
                vec![
                    RodVector { a: 0, b: 1 },
                    RodVector { a: 1, b: 0 },
                    RodVector { a: 1, b: -1 },
                ],
            )
        }
        other => return Err(format!("unknown oracle \"{other}\"")),
    };
    let candidates = basis_matches(&raw_vectors, &spec.lens_vectors);
    if candidates.is_empty() {
        return Err("no basis change matches the configured rod vectors".to_string());
    }
    let probes: Vec<usize> = (1..8)
        .map(|i| grid.idx(grid.n_rho * i / 8, grid.n_z * i / 8))
        .collect();
    let best = candidates
        .iter()
        .map(|m| {
            let t = transform_field(&raw, m, raw.basis);
            let err: f64 = probes
                .iter()
                .map(|&i| (t.data[i] - target.data[i]).norm())
                .sum();
            (t, err)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    Ok(best.0)
}

struct DiagnoseArgs {
    snapshot: PathBuf,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    tension: bool,
    rods: bool,
    cones: bool,
    fit_alf: bool,
    fit_ale: bool,
    twist: bool,
    compare_oracle: Option<String>,
}

fn cmd_diagnose(args: DiagnoseArgs) -> u8 {
    let snap = match GridSnapshot::load(&args.snapshot) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot load snapshot: {e}");
            return EXIT_USAGE;
        }
    };
    let cfg = match &args.config {
        Some(path) => match load_config(path) {
            Ok(c) => {
                if !snap.config_hash.is_empty() && snap.config_hash != c.resolved_hash() {
                    eprintln!(
                        "error: snapshot was produced by a different config (hash {} != {})",
                        &snap.config_hash[..8.min(snap.config_hash.len())],
                        &c.resolved_hash()[..8]
                    );
                    return EXIT_USAGE;
                }
                Some(c)
            }
            Err(code) => return code,
        },
        None => None,
    };
    let phi = snap.to_phi();
    let grid = &snap.grid;
    let any = args.tension
        || args.rods
        || args.cones
        || args.fit_alf
        || args.fit_ale
        || args.twist
        || args.compare_oracle.is_some();
    let (do_tension, do_rods) = if any { (args.tension, args.rods) } else { (true, true) };

    let (height, angle_tol) = cfg
        .as_ref()
        .map(|c| (c.diagnostics.snap_max_height, c.diagnostics.snap_angle_tol))
        .unwrap_or((50, 0.05));

    let mut report = String::new();
    let mut code = EXIT_OK;

    if do_tension {
        match discrete_tension(&phi, grid) {
            Ok(t) => {
                let sup = t.sup_tau();
                writeln!(report, "tension_sup = {sup:e}").unwrap();
            }
            Err(e) => {
                writeln!(report, "# tension unavailable: {e}").unwrap();
            }
        }
    }
    if do_rods {
        match extract_rod_structure(&phi, grid, height, angle_tol) {
            Ok(rods) => {
                writeln!(report, "\n[rods]").unwrap();
                let vs: Vec<String> =
                    rods.vectors.iter().map(|v| format!("[{}, {}]", v.a, v.b)).collect();
                writeln!(report, "vectors = [{}]", vs.join(", ")).unwrap();
                let cs: Vec<String> = rods.corners.iter().map(|c| format!("{c:e}")).collect();
                writeln!(report, "corners = [{}]", cs.join(", ")).unwrap();
            }
            Err(e) => {
                writeln!(report, "# rod extraction failed: {e}").unwrap();
                code = EXIT_NUMERICAL;
            }
        }
    }
    if args.cones {
        match &snap.nu {
            Some(nu) => match conical_angles(&phi, grid, nu) {
                Ok(cones) => {
                    let cs: Vec<String> = cones.iter().map(|c| format!("{c:e}")).collect();
                    writeln!(report, "\nconical_angles = [{}]", cs.join(", ")).unwrap();
                }
                Err(e) => {
                    writeln!(report, "# conical angles failed: {e}").unwrap();
                    code = EXIT_NUMERICAL;
                }
            },
            None => {
                writeln!(report, "# conical angles need a snapshot with nu").unwrap();
                code = EXIT_USAGE;
            }
        }
    }
    if args.fit_alf || args.fit_ale {
        let class = if args.fit_ale {
            AsymptoticClass::Ale
        } else {
            AsymptoticClass::Alf { n: cfg.as_ref().map(|c| c.asymptotics.nut).unwrap_or(1.0) }
        };
        match fit_asymptotics(&phi, grid, &class) {
            Ok(AsymptoticFit::Alf { nut, mass, j, j_spread }) => {
                writeln!(report, "\n[fit.alf]").unwrap();
                writeln!(report, "nut = {nut:e}").unwrap();
                writeln!(report, "mass = {mass:e}").unwrap();
                writeln!(report, "mass_over_nut = {:e}", mass / nut).unwrap();
                writeln!(report, "j = {j:e}").unwrap();
                writeln!(report, "j_window_spread = {j_spread:e}").unwrap();
                if let Some(nu) = &snap.nu {
                    if let Ok(m_nu) = fit_mass_from_nu(nu, grid, nut) {
                        writeln!(report, "mass_from_nu = {m_nu:e}").unwrap();
                    }
                }
            }
            Ok(AsymptoticFit::Ale { exponent }) => {
                writeln!(report, "\n[fit.ale]").unwrap();
                writeln!(report, "remainder_exponent = {exponent:e}").unwrap();
            }
            Err(e) => {
                writeln!(report, "# asymptotic fit failed: {e}").unwrap();
                code = EXIT_NUMERICAL;
            }
        }
    }
    if args.twist {
        match twist_and_residuals(&phi, grid) {
            Ok(t) => {
                writeln!(report, "\n[twist]").unwrap();
                writeln!(report, "loop_residual = {:e}", t.loop_residual).unwrap();
                writeln!(report, "veq_residual = {:e}", t.veq_residual).unwrap();
                writeln!(report, "weq_residual = {:e}", t.weq_residual).unwrap();
            }
            Err(e) => {
                writeln!(report, "# twist failed: {e}").unwrap();
                code = EXIT_NUMERICAL;
            }
        }
    }
    if let Some(name) = &args.compare_oracle {
        let Some(cfg) = &cfg else {
            eprintln!("error: --compare-oracle needs --config");
            return EXIT_USAGE;
        };
        let spec = match cfg.model_map_spec() {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        };
        match oracle_on_grid(name, cfg, &spec, grid, &phi) {
            Ok(oracle) => {
                let (psi, sup) = mazur_field(&phi, &oracle, grid).unwrap();
                writeln!(report, "\n[compare.{name}]").unwrap();
                writeln!(report, "mazur_sup = {sup:e}").unwrap();
                writeln!(report, "mazur_sup_margin = {:e}", margin_sup(&psi, grid)).unwrap();
            }
            Err(e) => {
                eprintln!("error: --compare-oracle {name}: {e}");
                return EXIT_USAGE;
            }
        }
    }

    print!("{report}");
    if let Some(out) = &args.out {
        if let Some(cfg) = &cfg {
            let mut rd = match RunDir::create(cfg, "diagnose", Some(out)) {
                Ok(r) => r,
                Err(code) => return code,
            };
            if rd.write("report.toml", report.as_bytes()).is_err() {
                return EXIT_USAGE;
            }
            if rd.finish(cfg, "diagnose").is_err() {
                return EXIT_USAGE;
            }
        } else if std::fs::create_dir_all(out).is_err()
            || std::fs::write(out.join("report.toml"), report.as_bytes()).is_err()
        {
            eprintln!("error: cannot write report");
            return EXIT_USAGE;
        }
    }
    code
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracle(
    name: &str,
    centers: usize,
    c: f64,
    spacing: f64,
    nut: f64,
    p: i64,
    q: i64,
    n_rho: usize,
    n_z: usize,
    out: Option<&Path>,
) -> u8 {
    let built = match name {
        "gibbons-hawking" => build_gh_oracle(centers, c, spacing, n_rho, n_z),
        "taub-nut" => build_taub_nut_oracle(nut, n_rho, n_z),
        "taub-bolt" => build_taub_bolt_oracle(nut, n_rho, n_z),
        "asymptotic-model" => build_model_oracle(p, q, c, n_rho, n_z),
        other => Err(format!("unknown oracle \"{other}\"")),
    };
    let (phi, grid, nu) = match built {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let snap = GridSnapshot::from_phi(&phi, &grid, "").with_nu(nu);
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{name}.snap")));
    if let Err(e) = snap.save(&path) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return EXIT_USAGE;
    }
    println!("oracle {name}: {}x{} grid -> {}", grid.n_rho, grid.n_z, path.display());
    EXIT_OK
}

type OracleField = (PhiField, HalfPlaneGrid, Vec<f64>);

fn sample_field<F>(grid: &HalfPlaneGrid, basis: BasisTag, p: f64, f: F) -> (PhiField, Vec<f64>)
where
    F: Fn(f64, f64) -> instanton_core::oracles::GramSample,
{
    let phi = PhiField::from_fn(grid, basis, |rho, z| f(rho, z).g * (p / rho));
    let mut nu = vec![0.0; grid.len()];
    for k in 0..grid.n_z {
        for j in 0..grid.n_rho {
            nu[grid.idx(j, k)] = f(grid.rho(j), grid.z(k)).nu;
        }
    }
    (phi, nu)
}

fn build_gh_oracle(
    n: usize,
    c: f64,
    spacing: f64,
    n_rho: usize,
    n_z: usize,
) -> Result<OracleField, String> {
    if n == 0 {
        return Err("need at least one center".into());
    }
    let zs: Vec<f64> = (0..n)
        .map(|i| spacing * (i as f64 - 0.5 * (n as f64 - 1.0)))
        .collect();
    let cs = CenterSet::new(zs.clone(), c).map_err(|e| e.to_string())?;
    let s = 2.0 * n as f64;
    let span = s * spacing * ((n as f64 - 1.0).max(1.0));
    let axis = AxisData {
        corners: zs.iter().map(|&z| s * z).collect(),
        vectors: (1..=n as i64 + 1)
            .map(|i| RodVector { a: i - 1, b: i - 2 })
            .collect(),
    };
    let grid = HalfPlaneGrid::new(n_rho, n_z, 2.5 * span, -2.5 * span, 2.5 * span, Some(axis));
    let (phi, nu) = sample_field(&grid, BasisTag::Lens { p: n as i64, q: (1 % n) as i64 },
        n as f64, |rho, z| selfdual_proper_gram(&cs, rho, z).unwrap());
    Ok((phi, grid, nu))
}

fn build_taub_nut_oracle(nut: f64, n_rho: usize, n_z: usize) -> Result<OracleField, String> {
    let params = AsymptoticModelParams::alf(1, 0, nut).map_err(|e| e.to_string())?;
    let axis = AxisData {
        corners: vec![0.0],
        vectors: vec![RodVector { a: 0, b: 1 }, RodVector { a: 1, b: 0 }],
    };
    let ext = 20.0 * nut.abs().max(1.0);
    let grid = HalfPlaneGrid::new(n_rho, n_z, ext, -ext, ext, Some(axis));
    let (phi, nu) = sample_field(&grid, BasisTag::Lens { p: 1, q: 0 }, 1.0, |rho, z| {
        asymptotic_model_gram(&params, rho, z).unwrap()
    });
    Ok((phi, grid, nu))
}

fn build_taub_bolt_oracle(nut: f64, n_rho: usize, n_z: usize) -> Result<OracleField, String> {
    if nut <= 0.0 {
        return Err("taub-bolt needs a positive NUT parameter".into());
    }
    let len = 1.5 * nut * nut;
    let axis = AxisData {
        corners: vec![0.0, len],
        vectors: vec![
            RodVector { a: 0, b: 1 },
            RodVector { a: 1, b: 0 },
            RodVector { a: 1, b: -1 },
        ],
    };
    let ext = 15.0 * len;
    let grid = HalfPlaneGrid::new(n_rho, n_z, ext, 0.5 * len - ext, 0.5 * len + ext, Some(axis));
    let (phi, nu) = sample_field(&grid, BasisTag::Lens { p: 1, q: 0 }, 1.0, |rho, z| {
        taub_bolt_pipeline_gram(nut, rho, z).unwrap()
    });
    Ok((phi, grid, nu))
}

fn build_model_oracle(p: i64, q: i64, c: f64, n_rho: usize, n_z: usize) -> Result<OracleField, String> {
    let params = if c > 0.0 {
        AsymptoticModelParams::new(p, q, c, 1)
    } else {
        AsymptoticModelParams::ale(p, q)
    }
    .map_err(|e| e.to_string())?;
    let grid = HalfPlaneGrid::new(n_rho, n_z, 20.0, -20.0, 20.0, None);
    let (phi, nu) = sample_field(&grid, BasisTag::Lens { p, q: params.q }, p as f64, |rho, z| {
        asymptotic_model_gram(&params, rho, z).unwrap()
    });
    Ok((phi, grid, nu))
}

fn cmd_export(snapshot: &Path, what: &str, theta: f64, out: Option<&Path>) -> u8 {
    let snap = match GridSnapshot::load(snapshot) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot load snapshot: {e}");
            return EXIT_USAGE;
        }
    };
    let phi = snap.to_phi();
    let grid = &snap.grid;
    let mut csv = String::new();
    match what {
        "ray" => {
            // profile along a polar ray from the grid's z midpoint
            let zc = grid.z0 + 0.5 * (grid.z(grid.n_z - 1) - grid.z0);
            let r_cap = (grid.n_rho as f64 * grid.d_rho)
                .min(grid.z(grid.n_z - 1) - zc)
                .min(zc - grid.z0);
            writeln!(csv, "r,rho,z,g11,g12,g22").unwrap();
            for i in 1..=100 {
                let r = r_cap * i as f64 / 100.0;
                let (rho, z) = (r * theta.sin(), zc + r * theta.cos());
                let g = phi.sample(grid, rho, z);
                writeln!(csv, "{r:e},{rho:e},{z:e},{:e},{:e},{:e}", g[(0, 0)], g[(0, 1)], g[(1, 1)])
                    .unwrap();
            }
        }
        "rod" => {
            // axis-column spectral data: eigenvalue gap and kernel angle
            writeln!(csv, "z,lambda_small_over_large,kernel_angle").unwrap();
            for k in 0..grid.n_z {
                let m = &phi.data[grid.idx(0, k)];
                let ((l1, l2), _) = sym_eigen(m);
                let (x, y) = instanton_core::mat2::smallest_eigenvector(m);
                writeln!(csv, "{:e},{:e},{:e}", grid.z(k), l2 / l1, y.atan2(x)).unwrap();
            }
        }
        "grid" => {
            let with_nu = snap.nu.is_some();
            writeln!(csv, "j,k,rho,z,g11,g12,g22{}", if with_nu { ",nu" } else { "" }).unwrap();
            for k in 0..grid.n_z {
                for j in 0..grid.n_rho {
                    let m = &phi.data[grid.idx(j, k)];
                    write!(
                        csv,
                        "{j},{k},{:e},{:e},{:e},{:e},{:e}",
                        grid.rho(j),
                        grid.z(k),
                        m[(0, 0)],
                        m[(0, 1)],
                        m[(1, 1)]
                    )
                    .unwrap();
                    match &snap.nu {
                        Some(nu) => writeln!(csv, ",{:e}", nu[grid.idx(j, k)]).unwrap(),
                        None => writeln!(csv).unwrap(),
                    }
                }
            }
        }
        other => {
            eprintln!("error: unknown export kind \"{other}\" (ray | rod | grid)");
            return EXIT_USAGE;
        }
    }
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, csv) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_USAGE;
            }
        }
        None => print!("{csv}"),
    }
    EXIT_OK
}
