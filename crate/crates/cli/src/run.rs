//! Task dispatch and artifact emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use oxydyn_core::bifurcation::{
    attractor_classify_with, bifurcation_diagram_with, criticality_probe_with, locate_hopf,
    saddle_node_threshold_with, BifurcationDiagram,
};
use oxydyn_core::diagnostics::{classify_regime_with, omz_series, RegimeThresholds};
use oxydyn_core::equilibria::{
    all_equilibria, homogeneous_state, EquilibriumKind, EquilibriumReport,
};
use oxydyn_core::ode::{integrate, EventKind, IntegrateOptions, BLOWUP_THRESHOLD};
use oxydyn_core::pde::{self, Grid1D, RunOptions};
use oxydyn_core::slowfast::{
    find_folds, slow_flow_integrate, trace_critical_manifold_with, ManifoldBranch,
};
use oxydyn_core::turing::{turing_test_with, write_dispersion_csv, ScanOptions};
use oxydyn_core::{Error as CoreError, ModelParams, State};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{emit_config, parse_config, ConfigError, RunConfig, Task};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_SEARCH: i32 = 4;

/// Why a run stopped short.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Core(CoreError),
    Io(std::io::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {e}"),
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Io(_) => EXIT_IO,
            Failure::Core(e) => match e {
                CoreError::InvalidParameter { .. } | CoreError::Config(_) | CoreError::Grid(_) => {
                    EXIT_CONFIG
                }
                CoreError::Bracket { .. }
                | CoreError::Branch { .. }
                | CoreError::NotHopf { .. } => EXIT_SEARCH,
                _ => EXIT_NUMERICAL,
            },
        }
    }

    /// Diagnostic document written to `error.json`.
    pub fn to_json(&self) -> Value {
        let (kind, details) = match self {
            Failure::Config(e) => ("config", json!({ "path": e.path })),
            Failure::Io(_) => ("io", Value::Null),
            Failure::Core(e) => core_details(e),
        };
        json!({
            "exit_code": self.exit_code(),
            "kind": kind,
            "message": self.to_string(),
            "details": details,
        })
    }
}

fn core_details(e: &CoreError) -> (&'static str, Value) {
    match e {
        CoreError::InvalidParameter { name, reason } => (
            "invalid_parameter",
            json!({ "name": name, "reason": reason }),
        ),
        CoreError::Domain(_) => ("domain", Value::Null),
        CoreError::Config(_) => ("config", Value::Null),
        CoreError::Grid(_) => ("grid", Value::Null),
        CoreError::StabilityGuard { dt, bound } => {
            ("stability_guard", json!({ "dt": dt, "bound": bound }))
        }
        CoreError::Bracket { lo, hi, reason } => {
            ("bracket", json!({ "lo": lo, "hi": hi, "reason": reason }))
        }
        CoreError::Branch { at, reason } => ("branch", json!({ "at": at, "reason": reason })),
        CoreError::NotHopf { at, p1 } => ("not_hopf", json!({ "at": at, "p1": p1 })),
        CoreError::Seed(_) => ("seed", Value::Null),
        CoreError::ManifoldLoss { tau } => ("manifold_loss", json!({ "tau": tau })),
        CoreError::Integration { time, reason } => {
            ("integration", json!({ "time": time, "reason": reason }))
        }
        CoreError::Blowup { time, node } => ("blowup", json!({ "time": time, "node": node })),
        CoreError::InsufficientData(_) => ("insufficient_data", Value::Null),
    }
}

/// Files written by a task, relative to the output directory.
#[derive(Debug, Default)]
pub struct Artifacts {
    out: PathBuf,
    pub files: Vec<String>,
}

impl Artifacts {
    fn new(out: &Path) -> Self {
        Artifacts {
            out: out.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn create(&mut self, name: &str) -> std::io::Result<BufWriter<File>> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()
    }
}

fn home_state(p: &ModelParams) -> Result<State, CoreError> {
    homogeneous_state(p)?
        .ok_or_else(|| CoreError::Domain("no coexistence equilibrium exists".into()))
}

#[derive(Serialize)]
struct Labeled<'a> {
    label: String,
    #[serde(flatten)]
    report: &'a EquilibriumReport,
}

/// `E0` for extinction, `E1`, `E2` for the zooplankton-free states and
/// `C1`, `C2`, ... for coexistence, each group in increasing `c`.
fn label_equilibria(eqs: &[EquilibriumReport]) -> Vec<Labeled<'_>> {
    let (mut zf, mut co) = (0, 0);
    eqs.iter()
        .map(|e| {
            let label = match e.kind {
                EquilibriumKind::Extinction => "E0".to_string(),
                EquilibriumKind::ZooplanktonFree => {
                    zf += 1;
                    format!("E{zf}")
                }
                EquilibriumKind::Coexistence => {
                    co += 1;
                    format!("C{co}")
                }
            };
            Labeled { label, report: e }
        })
        .collect()
}

/// Run the configured task and write its files into `out`.
pub fn run_task(cfg: &RunConfig, out: &Path) -> Result<Artifacts, (Artifacts, Failure)> {
    let mut art = Artifacts::new(out);
    match dispatch(cfg, &mut art) {
        Ok(()) => Ok(art),
        Err(e) => Err((art, e)),
    }
}

fn dispatch(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let p = &cfg.model;
    let exec = cfg.execution;
    match &cfg.task {
        Task::Equilibria { search } => {
            let mut search = *search;
            search.exec = exec;
            let eqs = all_equilibria(p, &search)?;
            art.json(
                "equilibria.json",
                &json!({ "equilibria": label_equilibria(&eqs) }),
            )?;
        }
        Task::Hopf {
            parameter,
            bracket,
            options,
            probe,
        } => {
            let mut opts = *options;
            opts.search.exec = exec;
            let point = locate_hopf(p, *parameter, *bracket, &opts)?;
            let criticality = match probe {
                Some(po) => {
                    let mut po = *po;
                    po.exec = exec;
                    Some(criticality_probe_with(p, *parameter, point.value, &po)?)
                }
                None => None,
            };
            art.json(
                "hopf.json",
                &json!({ "parameter": parameter, "point": point, "criticality": criticality }),
            )?;
        }
        Task::SaddleNode {
            parameter,
            bracket,
            tol,
            search,
        } => {
            let mut search = *search;
            search.exec = exec;
            let value = saddle_node_threshold_with(p, *parameter, *bracket, *tol, &search)?;
            art.json(
                "saddle_node.json",
                &json!({ "parameter": parameter, "value": value, "bracket": bracket }),
            )?;
        }
        Task::Diagram {
            parameter,
            range,
            samples,
            options,
        } => {
            let mut opts = *options;
            opts.exec = exec;
            opts.search.exec = exec;
            let d = bifurcation_diagram_with(p, *parameter, *range, *samples, &opts)?;
            art.json("diagram.json", &d)?;
            write_diagram_csv(art.create("diagram.csv")?, &d)?;
        }
        Task::Manifold {
            seed,
            trace,
            slow_flow,
        } => {
            let seed = match seed {
                Some(s) => *s,
                None => home_state(p)?,
            };
            let branch = trace_critical_manifold_with(p, &seed, trace)?;
            write_manifold_csv(art.create("manifold.csv")?, &branch)?;
            let folds = find_folds(&branch, p);
            let mut report = json!({
                "seed": seed,
                "points": branch.points.len(),
                "stability_changes": branch.stability_changes,
                "folds": folds,
            });
            if let Some(sf) = slow_flow {
                let start = branch
                    .points
                    .get(sf.start_point)
                    .ok_or_else(|| ConfigError {
                        path: "task.slow_flow.start_point".into(),
                        message: format!("branch has only {} points", branch.points.len()),
                    })?;
                let traj = slow_flow_integrate(p, &start.state, sf.dtau, sf.t_end)?;
                let mut w = art.create("slow_flow.csv")?;
                writeln!(w, "tau,c,u,v")?;
                for (t, s) in traj.times.iter().zip(&traj.states) {
                    writeln!(w, "{t:.14e},{:.14e},{:.14e},{:.14e}", s.c, s.u, s.v)?;
                }
                w.flush()?;
                report["slow_flow"] = json!({
                    "start": start.state,
                    "termination": traj.termination,
                    "final_time": traj.times.last(),
                    "final_state": traj.states.last(),
                });
            }
            art.json("manifold.json", &report)?;
        }
        Task::Ode {
            ic,
            dt,
            t_end,
            record_stride,
            scheme,
        } => {
            let opts = IntegrateOptions {
                dt: *dt,
                t_end: *t_end,
                record_stride: *record_stride,
                scheme: *scheme,
                extinction_threshold: cfg.thresholds.extinction,
                blowup_threshold: BLOWUP_THRESHOLD,
            };
            let traj = integrate(p, ic, &opts)?;
            let mut w = art.create("trajectory.csv")?;
            writeln!(w, "t,c,u,v")?;
            for (t, s) in traj.times.iter().zip(&traj.states) {
                writeln!(w, "{t:.14e},{:.14e},{:.14e},{:.14e}", s.c, s.u, s.v)?;
            }
            w.flush()?;
            art.json("events.json", &json!({ "events": traj.events }))?;
            if let Some(e) = traj.events.iter().find(|e| e.kind == EventKind::Blowup) {
                return Err(CoreError::Integration {
                    time: e.time,
                    reason: "a component exceeded the blow-up threshold".into(),
                }
                .into());
            }
        }
        Task::Pde {
            diffusivity,
            grid,
            ic,
            dt,
            t_end,
            snapshot_interval,
            stop_on_anoxia,
        } => {
            let grid = Grid1D::new(grid.length, grid.dx)?;
            let opts = RunOptions {
                dt: *dt,
                t_end: *t_end,
                snapshot_interval: *snapshot_interval,
                anoxia_fraction: cfg.thresholds.anoxia,
                stop_on_anoxia: *stop_on_anoxia,
                reaction: true,
                exec,
            };
            let rec = pde::run(p, *diffusivity, &grid, ic, &opts)?;
            for f in &rec.snapshots {
                let name = format!("snapshots/{}", pde::snapshot_file_name(f.time));
                let mut w = art.create(&name)?;
                pde::write_snapshot_csv(&mut w, &grid, f)?;
                w.flush()?;
            }
            let mut w = art.create("means.csv")?;
            pde::write_means_csv(&mut w, &rec.means)?;
            w.flush()?;
            let series = omz_series(&rec, cfg.thresholds.omz_fraction);
            let mut w = art.create("omz.csv")?;
            writeln!(w, "t,total_width,count")?;
            for s in &series {
                writeln!(w, "{:.14e},{:.14e},{}", s.time, s.total_width, s.count)?;
            }
            w.flush()?;
            art.json(
                "events.json",
                &json!({ "base": rec.base, "events": rec.events, "warnings": rec.warnings }),
            )?;
            let th = RegimeThresholds {
                omz_fraction: cfg.thresholds.omz_fraction,
                ..Default::default()
            };
            let echo = serde_json::to_value(cfg).expect("config is always serializable");
            let regime = match classify_regime_with(&rec, rec.c_ref(), &th) {
                Ok(r) => json!({ "label": r.label, "evidence": r.evidence, "config_echo": echo }),
                Err(e) => {
                    json!({ "label": null, "evidence": null, "config_echo": echo, "error": e.to_string() })
                }
            };
            art.json("regime.json", &regime)?;
            if let Some(b) = rec.blowup() {
                return Err(CoreError::Blowup {
                    time: b.time,
                    node: b.node.unwrap_or(0),
                }
                .into());
            }
        }
        Task::Turing {
            diffusivity,
            equilibrium,
            k2_max,
            k2_step,
            length,
        } => {
            let eq = match equilibrium {
                Some(s) => *s,
                None => home_state(p)?,
            };
            let opts = ScanOptions {
                k2_max: *k2_max,
                k2_step: *k2_step,
                length: *length,
                exec,
            };
            let curve = turing_test_with(p, &eq, *diffusivity, &opts)?;
            let mut w = art.create("dispersion.csv")?;
            write_dispersion_csv(&mut w, &curve)?;
            w.flush()?;
            art.json(
                "verdict.json",
                &json!({
                    "verdict": curve.verdict,
                    "k_t2": curve.k_t2,
                    "scan_argmin": curve.scan_argmin,
                    "unstable_band": curve.unstable_band,
                    "nearest_mode": curve.nearest_mode,
                    "equilibrium": eq,
                    "diffusivity": diffusivity,
                }),
            )?;
        }
        Task::Classify { ic, options } => {
            let a = attractor_classify_with(p, ic, options)?;
            art.json("attractor.json", &json!({ "ic": ic, "attractor": a }))?;
        }
    }
    Ok(())
}

fn write_diagram_csv<W: Write>(mut w: W, d: &BifurcationDiagram) -> std::io::Result<()> {
    writeln!(w, "value,kind,stability,unstable_dim,c,u,v,max_re")?;
    for s in &d.samples {
        for e in &s.equilibria {
            writeln!(
                w,
                "{:.14e},{:?},{:?},{},{:.14e},{:.14e},{:.14e},{:.14e}",
                s.value,
                e.kind,
                e.stability,
                e.unstable_dim,
                e.location.c,
                e.location.u,
                e.location.v,
                e.max_real_part()
            )?;
        }
    }
    w.flush()
}

fn write_manifold_csv<W: Write>(mut w: W, b: &ManifoldBranch) -> std::io::Result<()> {
    writeln!(w, "arclength,c,u,v,attracting,fast_det,re1,im1,re2,im2")?;
    for pt in &b.points {
        let [l1, l2] = pt.fast_eigenvalues;
        writeln!(
            w,
            "{:.14e},{:.14e},{:.14e},{:.14e},{},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e}",
            pt.arclength,
            pt.state.c,
            pt.state.u,
            pt.state.v,
            pt.attracting,
            pt.fast_det,
            l1.re,
            l1.im,
            l2.re,
            l2.im
        )?;
    }
    w.flush()
}

/// Cap the rayon pool from `OXYDYN_THREADS`, if set.
fn configure_threads() -> Result<Option<usize>, ConfigError> {
    let Ok(raw) = std::env::var("OXYDYN_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError {
            path: "OXYDYN_THREADS".into(),
            message: format!("must be a positive integer, got {raw:?}"),
        })?;
    #[cfg(feature = "parallel")]
    {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(Some(n))
}

fn write_error(out: &Path, failure: &Failure) {
    if fs::create_dir_all(out).is_ok() {
        if let Ok(text) = serde_json::to_string_pretty(&failure.to_json()) {
            let _ = fs::write(out.join("error.json"), text + "\n");
        }
    }
}

/// Full command: read, validate, run, write `metadata.json`. Returns the exit code.
pub fn execute(config_path: &Path, out_override: Option<&Path>) -> i32 {
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("oxydyn: cannot read {}: {e}", config_path.display());
            return EXIT_CONFIG;
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            let failure = Failure::Config(e);
            eprintln!("oxydyn: {failure}");
            if let Some(out) = out_override {
                write_error(out, &failure);
            }
            return failure.exit_code();
        }
    };
    let Some(out) = out_override
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
    else {
        eprintln!("oxydyn: no output directory; pass --out or set \"output\"");
        return EXIT_CONFIG;
    };
    let threads = match configure_threads() {
        Ok(t) => t,
        Err(e) => {
            let failure = Failure::Config(e);
            eprintln!("oxydyn: {failure}");
            write_error(&out, &failure);
            return failure.exit_code();
        }
    };
    if let Err(e) = fs::create_dir_all(&out) {
        eprintln!("oxydyn: cannot create {}: {e}", out.display());
        return EXIT_IO;
    }
    let _ = fs::remove_file(out.join("error.json"));

    let start = Instant::now();
    let result = run_task(&cfg, &out);
    let wall = start.elapsed().as_secs_f64();
    let (files, code) = match result {
        Ok(art) => (art.files, EXIT_OK),
        Err((art, failure)) => {
            eprintln!("oxydyn: {failure}");
            write_error(&out, &failure);
            (art.files, failure.exit_code())
        }
    };
    let config: Value =
        serde_json::from_str(&emit_config(&cfg)).expect("emitted config is valid JSON");
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "task": cfg.task.name(),
        "exit_code": code,
        "wall_time_s": wall,
        "threads": threads,
        "parallel_feature": cfg!(feature = "parallel"),
        "files": files,
        "config": config,
    });
    let text = serde_json::to_string_pretty(&meta).expect("metadata is serializable") + "\n";
    if let Err(e) = fs::write(out.join("metadata.json"), text) {
        eprintln!("oxydyn: cannot write metadata: {e}");
        return if code == EXIT_OK { EXIT_IO } else { code };
    }
    code
}
