//! One-dimensional reaction-diffusion solver: fourth-order five-point
//! Laplacian with zero-flux mirror boundaries and forward Euler in time.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::equilibria::{homogeneous_state, residual, RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::model::{rhs, ModelParams, State};
use crate::parallel::Execution;

/// Node-centred grid on `[0, length]` with `n = length / dx + 1` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub length: f64,
    pub dx: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(length: f64, dx: f64) -> Result<Self> {
        if !(length > 0.0 && dx > 0.0 && length.is_finite() && dx.is_finite()) {
            return Err(Error::Grid(format!(
                "length and dx must be positive, got {length} and {dx}"
            )));
        }
        let cells = length / dx;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::Grid(format!(
                "length / dx = {cells} is not an integer"
            )));
        }
        let n = cells.round() as usize + 1;
        if n < 11 {
            return Err(Error::Grid(format!(
                "grid needs at least 11 nodes, got {n}"
            )));
        }
        Ok(Grid1D { length, dx, n })
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }
}

impl Default for Grid1D {
    fn default() -> Self {
        Grid1D {
            length: 500.0,
            dx: 1.0,
            n: 501,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub c: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
}

impl FieldState {
    pub fn uniform(grid: &Grid1D, s: &State) -> Self {
        FieldState {
            c: vec![s.c; grid.n],
            u: vec![s.u; grid.n],
            v: vec![s.v; grid.n],
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn node(&self, i: usize) -> State {
        State::new(self.c[i], self.u[i], self.v[i])
    }

    /// Max-norm difference over all three fields.
    pub fn distance(&self, other: &FieldState) -> f64 {
        [
            (&self.c, &other.c),
            (&self.u, &other.u),
            (&self.v, &other.v),
        ]
        .iter()
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
    }

    pub fn c_range(&self) -> (f64, f64) {
        self.c
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(*x), hi.max(*x))
            })
    }
}

#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let last = n as isize - 1;
    let j = if i < 0 {
        -i
    } else if i > last {
        2 * last - i
    } else {
        i
    };
    j as usize
}

#[inline]
fn lap_at(f: &[f64], i: usize, inv12dx2: f64) -> f64 {
    let n = f.len();
    let i = i as isize;
    let g = |k: isize| f[mirror(i + k, n)];
    (16.0 * (g(-1) + g(1)) - (g(-2) + g(2)) - 30.0 * f[i as usize]) * inv12dx2
}

/// Five-point fourth-order Laplacian with even reflection at both ends.
pub fn laplacian_5pt(field: &[f64], dx: f64) -> Result<Vec<f64>> {
    if field.len() < 5 {
        return Err(Error::Grid(format!(
            "stencil needs at least 5 nodes, got {}",
            field.len()
        )));
    }
    if dx.is_nan() || dx <= 0.0 {
        return Err(Error::Grid(format!("dx must be positive, got {dx}")));
    }
    let k = 1.0 / (12.0 * dx * dx);
    Ok((0..field.len()).map(|i| lap_at(field, i, k)).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `c* + 0.5`, `u* + 0.2` on `|x - L/2| < 10`.
    #[default]
    PaperIc,
    CustomBump {
        amp_c: f64,
        amp_u: f64,
        half_width: f64,
    },
}

impl InitialCondition {
    fn parts(&self) -> (f64, f64, f64) {
        match *self {
            InitialCondition::PaperIc => (0.5, 0.2, 10.0),
            InitialCondition::CustomBump {
                amp_c,
                amp_u,
                half_width,
            } => (amp_c, amp_u, half_width),
        }
    }
}

pub fn apply_initial_condition(grid: &Grid1D, base: &State, kind: &InitialCondition) -> FieldState {
    let (ac, au, w) = kind.parts();
    let mut f = FieldState::uniform(grid, base);
    let mid = 0.5 * grid.length;
    for i in 0..grid.n {
        if (grid.x(i) - mid).abs() < w {
            f.c[i] += ac;
            f.u[i] += au;
        }
    }
    f
}

/// Largest forward-Euler step accepted for diffusivity `d`.
pub fn stability_bound(dx: f64, d: f64) -> f64 {
    0.3 * dx * dx * 12.0 / (30.0 * d.max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Disables the reaction terms (pure diffusion).
    pub reaction: bool,
    pub exec: Execution,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            reaction: true,
            exec: Execution::default(),
        }
    }
}

fn check_step(d: f64, dx: f64, dt: f64) -> Result<()> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::config(format!(
            "zooplankton diffusivity must be nonnegative, got {d}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config(format!("dt must be positive, got {dt}")));
    }
    let bound = stability_bound(dx, d);
    if dt > bound {
        return Err(Error::StabilityGuard { dt, bound });
    }
    Ok(())
}

fn step_into(
    p: &ModelParams,
    d: f64,
    dx: f64,
    dt: f64,
    cur: &FieldState,
    buf: &mut [[f64; 3]],
    opts: &StepOptions,
) -> Result<FieldState> {
    let k = 1.0 / (12.0 * dx * dx);
    opts.exec.fill(buf, 128, |i| {
        let (c, u, v) = (cur.c[i], cur.u[i], cur.v[i]);
        let r = if opts.reaction {
            rhs(p, c, u, v)
        } else {
            [0.0; 3]
        };
        [
            c + dt * (lap_at(&cur.c, i, k) + r[0]),
            u + dt * (lap_at(&cur.u, i, k) + r[1]),
            v + dt * (d * lap_at(&cur.v, i, k) + r[2]),
        ]
    });
    let time = cur.time + dt;
    if let Some(node) = buf.iter().position(|x| !x.iter().all(|y| y.is_finite())) {
        return Err(Error::Blowup { time, node });
    }
    Ok(FieldState {
        c: buf.iter().map(|x| x[0]).collect(),
        u: buf.iter().map(|x| x[1]).collect(),
        v: buf.iter().map(|x| x[2]).collect(),
        time,
    })
}

/// One forward-Euler step on a unit-spaced grid.
pub fn step(p: &ModelParams, d: f64, state: &FieldState, dt: f64) -> Result<FieldState> {
    step_with(p, d, 1.0, state, dt, &StepOptions::default())
}

pub fn step_with(
    p: &ModelParams,
    d: f64,
    dx: f64,
    state: &FieldState,
    dt: f64,
    opts: &StepOptions,
) -> Result<FieldState> {
    if state.len() < 5 {
        return Err(Error::Grid(format!(
            "stencil needs at least 5 nodes, got {}",
            state.len()
        )));
    }
    check_step(d, dx, dt)?;
    let mut buf = vec![[0.0; 3]; state.len()];
    step_into(p, d, dx, dt, state, &mut buf, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldEventKind {
    GlobalAnoxia,
    Blowup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldEvent {
    pub time: f64,
    pub kind: FieldEventKind,
    /// Offending node for a blow-up.
    pub node: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSample {
    pub t: f64,
    pub c: f64,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Time between snapshots.
    pub snapshot_interval: f64,
    /// Global anoxia once `max c < anoxia_fraction * c*`.
    pub anoxia_fraction: f64,
    /// Stop at the first global-anoxia event.
    pub stop_on_anoxia: bool,
    #[serde(skip)]
    pub reaction: bool,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            dt: 0.01,
            t_end: 2000.0,
            snapshot_interval: 50.0,
            anoxia_fraction: 0.05,
            stop_on_anoxia: false,
            reaction: true,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeRecord {
    pub grid: Grid1D,
    pub diffusivity: f64,
    /// Homogeneous steady state the run is measured against.
    pub base: State,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<FieldState>,
    pub means: Vec<MeanSample>,
    pub events: Vec<FieldEvent>,
    pub warnings: Vec<String>,
}

impl SpaceTimeRecord {
    pub fn c_ref(&self) -> f64 {
        self.base.c
    }

    pub fn t_end(&self) -> f64 {
        self.snapshot_times.last().copied().unwrap_or(0.0)
    }

    pub fn anoxia_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == FieldEventKind::GlobalAnoxia)
            .map(|e| e.time)
    }

    pub fn blowup(&self) -> Option<&FieldEvent> {
        self.events
            .iter()
            .find(|e| e.kind == FieldEventKind::Blowup)
    }
}

/// Trapezoidal spatial mean of a field.
pub fn spatial_mean(f: &[f64]) -> f64 {
    let n = f.len();
    if n < 2 {
        return f.first().copied().unwrap_or(f64::NAN);
    }
    let inner: f64 = f[1..n - 1].iter().sum();
    (inner + 0.5 * (f[0] + f[n - 1])) / (n - 1) as f64
}

fn mean_of(f: &FieldState) -> MeanSample {
    MeanSample {
        t: f.time,
        c: spatial_mean(&f.c),
        u: spatial_mean(&f.u),
        v: spatial_mean(&f.v),
    }
}

/// Run from the homogeneous steady state perturbed by `ic`.
pub fn run(
    p: &ModelParams,
    d: f64,
    grid: &Grid1D,
    ic: &InitialCondition,
    opts: &RunOptions,
) -> Result<SpaceTimeRecord> {
    p.validate()?;
    check_step(d, grid.dx, opts.dt)?;
    let base = homogeneous_state(p)?
        .ok_or_else(|| Error::Domain("no coexistence equilibrium to perturb".into()))?;
    let init = apply_initial_condition(grid, &base, ic);
    run_from(p, d, grid, init, base, opts)
}

/// Run from an explicit initial field; `base` supplies the reference `c*`.
pub fn run_from(
    p: &ModelParams,
    d: f64,
    grid: &Grid1D,
    init: FieldState,
    base: State,
    opts: &RunOptions,
) -> Result<SpaceTimeRecord> {
    p.validate()?;
    check_step(d, grid.dx, opts.dt)?;
    if init.len() != grid.n || init.u.len() != grid.n || init.v.len() != grid.n {
        return Err(Error::Grid(format!(
            "initial field has {} nodes, grid has {}",
            init.len(),
            grid.n
        )));
    }
    if !(opts.t_end > 0.0 && opts.snapshot_interval > 0.0) {
        return Err(Error::config(
            "t_end and snapshot_interval must be positive",
        ));
    }
    let steps = (opts.t_end / opts.dt).round() as usize;
    let stride = ((opts.snapshot_interval / opts.dt).round() as usize).max(1);
    let mut rec = SpaceTimeRecord {
        grid: *grid,
        diffusivity: d,
        base,
        snapshot_times: Vec::new(),
        snapshots: Vec::new(),
        means: Vec::new(),
        events: Vec::new(),
        warnings: Vec::new(),
    };
    if residual(p, &base) > RESIDUAL_TOL {
        rec.warnings
            .push(format!("base state {base:?} is not an equilibrium"));
    }
    let sopts = StepOptions {
        reaction: opts.reaction,
        exec: opts.exec,
    };
    let threshold = opts.anoxia_fraction * base.c;
    let mut cur = init;
    cur.time = 0.0;
    let mut buf = vec![[0.0; 3]; grid.n];
    let mut anoxic = false;
    let record = |rec: &mut SpaceTimeRecord, f: &FieldState| {
        rec.snapshot_times.push(f.time);
        rec.means.push(mean_of(f));
        rec.snapshots.push(f.clone());
    };
    record(&mut rec, &cur);
    for k in 1..=steps {
        match step_into(p, d, grid.dx, opts.dt, &cur, &mut buf, &sopts) {
            Ok(mut next) => {
                next.time = k as f64 * opts.dt;
                cur = next;
            }
            Err(Error::Blowup { time, node }) => {
                rec.events.push(FieldEvent {
                    time,
                    kind: FieldEventKind::Blowup,
                    node: Some(node),
                });
                return Ok(rec);
            }
            Err(e) => return Err(e),
        }
        let snap = k % stride == 0 || k == steps;
        if !anoxic && cur.c.iter().all(|c| *c < threshold) {
            anoxic = true;
            rec.events.push(FieldEvent {
                time: cur.time,
                kind: FieldEventKind::GlobalAnoxia,
                node: None,
            });
            if opts.stop_on_anoxia {
                record(&mut rec, &cur);
                return Ok(rec);
            }
        }
        if snap {
            record(&mut rec, &cur);
        }
    }
    Ok(rec)
}

fn fmt15(x: f64) -> String {
    format!("{x:.14e}")
}

/// `x,c,u,v` rows for one snapshot.
pub fn write_snapshot_csv<W: Write>(
    mut w: W,
    grid: &Grid1D,
    f: &FieldState,
) -> std::io::Result<()> {
    writeln!(w, "x,c,u,v")?;
    for i in 0..f.len() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt15(grid.x(i)),
            fmt15(f.c[i]),
            fmt15(f.u[i]),
            fmt15(f.v[i])
        )?;
    }
    Ok(())
}

pub fn snapshot_file_name(time: f64) -> String {
    format!("snap_t{time:.2}.csv")
}

pub fn write_means_csv<W: Write>(mut w: W, means: &[MeanSample]) -> std::io::Result<()> {
    writeln!(w, "t,c_mean,u_mean,v_mean")?;
    for m in means {
        writeln!(
            w,
            "{},{},{},{}",
            fmt15(m.t),
            fmt15(m.c),
            fmt15(m.u),
            fmt15(m.v)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_checks() {
        assert_eq!(Grid1D::new(500.0, 1.0).unwrap().n, 501);
        assert!(matches!(Grid1D::new(500.0, 0.3), Err(Error::Grid(_))));
        assert!(matches!(Grid1D::new(5.0, 1.0), Err(Error::Grid(_))));
        assert_eq!(Grid1D::new(10.0, 1.0).unwrap().n, 11);
    }

    #[test]
    fn laplacian_needs_five_nodes() {
        assert!(matches!(laplacian_5pt(&[1.0; 4], 1.0), Err(Error::Grid(_))));
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let l = laplacian_5pt(&[3.7; 20], 0.5).unwrap();
        assert!(l.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn laplacian_exact_for_quintics() {
        let dx = 0.5;
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * dx).collect();
        let f: Vec<f64> = x
            .iter()
            .map(|x| 0.3 * x.powi(5) - x.powi(4) + 2.0 * x * x - x + 4.0)
            .collect();
        let l = laplacian_5pt(&f, dx).unwrap();
        for i in 2..n - 2 {
            let want = 6.0 * x[i].powi(3) - 12.0 * x[i] * x[i] + 4.0;
            assert!(
                (l[i] - want).abs() < 1e-8 * (1.0 + want.abs()),
                "{i}: {} vs {want}",
                l[i]
            );
        }
    }

    #[test]
    fn laplacian_cosine_error_bound() {
        let k: f64 = 0.33;
        let f: Vec<f64> = (0..200).map(|i| (k * i as f64).cos()).collect();
        let l = laplacian_5pt(&f, 1.0).unwrap();
        let bound = k.powi(6) / 90.0 * 1.1;
        for i in 2..198 {
            let want = -k * k * (k * i as f64).cos();
            assert!((l[i] - want).abs() <= bound);
        }
    }

    #[test]
    fn central_bump_index_set() {
        let g = Grid1D::default();
        let base = State::new(1.0, 1.0, 1.0);
        let f = apply_initial_condition(&g, &base, &InitialCondition::PaperIc);
        let bumped: Vec<usize> = (0..g.n).filter(|&i| f.c[i] != 1.0).collect();
        assert_eq!(bumped, (241..=259).collect::<Vec<_>>());
        assert!(f.c[241] == 1.5 && (f.u[241] - 1.2).abs() < 1e-15 && f.v[241] == 1.0);
        let z = InitialCondition::CustomBump {
            amp_c: 0.0,
            amp_u: 0.0,
            half_width: 10.0,
        };
        assert_eq!(
            apply_initial_condition(&g, &base, &z),
            FieldState::uniform(&g, &base)
        );
    }

    #[test]
    fn guard_names_the_bound() {
        let g = Grid1D::default();
        let p = ModelParams::default().with_mu2(0.41);
        let f = FieldState::uniform(&g, &State::new(1.0, 1.0, 1.0));
        match step(&p, 5.0, &f, 0.05) {
            Err(Error::StabilityGuard { bound, .. }) => assert!((bound - 0.024).abs() < 1e-12),
            r => panic!("{r:?}"),
        }
        assert!(step(&p, 5.0, &f, 0.01).is_ok());
    }

    #[test]
    fn step_is_local() {
        let g = Grid1D::default();
        let p = ModelParams::default().with_mu2(0.41);
        let base = homogeneous_state(&p).unwrap().unwrap();
        let f = apply_initial_condition(&g, &base, &InitialCondition::PaperIc);
        let next = step(&p, 5.0, &f, 0.01).unwrap();
        for i in 0..g.n {
            let changed = (next.c[i] - f.c[i]).abs() > 1e-13 || (next.u[i] - f.u[i]).abs() > 1e-13;
            assert_eq!(changed, (239..=261).contains(&i), "node {i}");
        }
    }

    #[test]
    fn no_reaction_conserves_trapezoid_sums() {
        let g = Grid1D::new(100.0, 1.0).unwrap();
        let p = ModelParams::default();
        let mut f = FieldState::uniform(&g, &State::new(1.0, 1.0, 1.0));
        for i in 0..g.n {
            let x = g.x(i);
            f.c[i] += (x / 7.0).sin() * 0.3 + if x < 20.0 { 0.5 } else { 0.0 };
            f.u[i] += (x / 3.0).cos() * 0.2;
            f.v[i] += 0.001 * x;
        }
        let opts = StepOptions {
            reaction: false,
            exec: Execution::Sequential,
        };
        let before = [spatial_mean(&f.c), spatial_mean(&f.u), spatial_mean(&f.v)];
        let mut cur = f;
        for _ in 0..1000 {
            cur = step_with(&p, 2.0, 1.0, &cur, 0.01, &opts).unwrap();
        }
        let after = [
            spatial_mean(&cur.c),
            spatial_mean(&cur.u),
            spatial_mean(&cur.v),
        ];
        // Trapezoid weights span the left null space of the mirrored stencil.
        for (a, b) in before.iter().zip(after) {
            assert!(((a - b) * (g.n - 1) as f64).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn parallel_and_sequential_steps_agree() {
        let g = Grid1D::default();
        let p = ModelParams::default().with_mu2(0.41);
        let base = homogeneous_state(&p).unwrap().unwrap();
        let f = apply_initial_condition(&g, &base, &InitialCondition::PaperIc);
        let mut a = f.clone();
        let mut b = f;
        for _ in 0..50 {
            a = step_with(
                &p,
                5.0,
                1.0,
                &a,
                0.01,
                &StepOptions {
                    reaction: true,
                    exec: Execution::Sequential,
                },
            )
            .unwrap();
            b = step_with(
                &p,
                5.0,
                1.0,
                &b,
                0.01,
                &StepOptions {
                    reaction: true,
                    exec: Execution::Parallel,
                },
            )
            .unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn means_match_snapshots() {
        let g = Grid1D::new(100.0, 1.0).unwrap();
        let p = ModelParams::default().with_mu2(0.41);
        let o = RunOptions {
            t_end: 10.0,
            snapshot_interval: 2.0,
            ..Default::default()
        };
        let ic = InitialCondition::CustomBump {
            amp_c: 0.3,
            amp_u: 0.1,
            half_width: 5.0,
        };
        let rec = run(&p, 5.0, &g, &ic, &o).unwrap();
        assert_eq!(rec.snapshot_times.len(), 6);
        for (m, s) in rec.means.iter().zip(&rec.snapshots) {
            assert_eq!(m.t, s.time);
            assert!((m.c - spatial_mean(&s.c)).abs() <= 1e-12 * m.c.abs());
        }
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &g, &rec.snapshots[1]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,c,u,v\n"));
        assert_eq!(text.lines().count(), g.n + 1);
        assert_eq!(snapshot_file_name(50.0), "snap_t50.00.csv");
    }
}
