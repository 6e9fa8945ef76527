use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use hsle_core::fk::{enumerate_exact, estimate_arc_probability, ArcPattern};
use hsle_core::harness::{mean_se, run_indexed};
use hsle_core::lattice::build_rect_domain;
use hsle_core::loewner;
use hsle_core::observables::*;
use hsle_core::pair::{pair_ensemble, PairSpec};
use hsle_core::percolation::{self, estimate_crossing, CrossingEstimate, TriDomain};
use hsle_core::sde::{
    simulate_indexed, weighted_vs_direct, DriverKind, DriverSpec, DrivingPath, NoiseMode, M_SYMMETRIC,
};

use crate::config::{usage, Resolved};

pub const IDENTITY_HEADER: &str = "check,max_error,tolerance,pass";
pub const FK_HEADER: &str = "mesh_step,cols,rows,mesh,aspect,z,n,estimate,se,theory";
pub const ENSEMBLE_HEADER: &str = "path,t_end,stop_reason,U,V,W,z,log_weight";
pub const GIRSANOV_HEADER: &str = "path,z_weighted,weight,z_direct";
pub const PAIR_HEADER: &str = "sample,functional";

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Collects the CSV and manifest of one run.
struct Output<'a, P> {
    run: &'a Resolved<P>,
    started: Instant,
    csv: PathBuf,
}

impl<'a, P: Serialize> Output<'a, P> {
    fn new(run: &'a Resolved<P>) -> anyhow::Result<Self> {
        fs::create_dir_all(&run.out).with_context(|| format!("creating {}", run.out.display()))?;
        Ok(Self {
            run,
            started: Instant::now(),
            csv: run.out.join(format!("{}.csv", run.command)),
        })
    }

    fn csv_writer(&self) -> anyhow::Result<BufWriter<File>> {
        let f = File::create(&self.csv).with_context(|| format!("creating {}", self.csv.display()))?;
        Ok(BufWriter::new(f))
    }

    fn write_rows(&self, header: &str, rows: impl IntoIterator<Item = String>) -> anyhow::Result<()> {
        let mut w = self.csv_writer()?;
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        w.flush()?;
        Ok(())
    }

    fn finish(self, results: Value, pass: bool) -> anyhow::Result<bool> {
        let manifest = json!({
            "command": self.run.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.run.seed,
            "config": self.run.params,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "csv": self.csv.file_name().and_then(|s| s.to_str()),
            "results": results,
            "pass": pass,
        });
        let path = self.run.out.join(format!("{}.json", self.run.command));
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        println!("{}: {}", self.run.command, if pass { "PASS" } else { "FAIL" });
        println!("  wrote {} and {}", self.csv.display(), path.display());
        Ok(pass)
    }
}

fn kind_of(name: &str) -> anyhow::Result<DriverKind> {
    DriverKind::parse(name).or_else(|e| usage(e.to_string()))
}

/// Driver spec from command-line style parameters; κ defaults to 16/3 for
/// chordal runs.
fn driver(kind: &str, kappa: Option<f64>, x0: f64, y0: f64, dt: f64, tmax: f64, seed: u64) -> anyhow::Result<DriverSpec> {
    let kind = kind_of(kind)?;
    let initial = MarkedState::from_xy(x0, y0).or_else(|e| usage(e.to_string()))?;
    let spec = match (kind, kappa) {
        (DriverKind::Chordal, k) => DriverSpec::chordal(k.unwrap_or(KAPPA_FK), initial, dt, tmax, seed),
        (_, Some(k)) if kind.fixed_kappa() != Some(k) => {
            return usage(format!("{} has fixed kappa {}", kind.tag(), kind.fixed_kappa().unwrap()))
        }
        _ => DriverSpec::new(kind, initial, dt, tmax, seed),
    };
    spec.or_else(|e| usage(e.to_string()))
}

// ---------------------------------------------------------------- identities

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityParams {
    pub grid: usize,
}

impl Default for IdentityParams {
    fn default() -> Self {
        Self { grid: 40 }
    }
}

struct Check {
    name: &'static str,
    max_error: f64,
    tolerance: f64,
}

fn log_grid_states(n: usize) -> anyhow::Result<Vec<MarkedState>> {
    let g: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (n - 1) as f64))
        .collect();
    let mut out = Vec::with_capacity(n * n);
    for &x in &g {
        for &y in &g {
            out.push(MarkedState::from_xy(x, y)?);
        }
    }
    Ok(out)
}

/// Largest generator residual `L M` over states with `X + Y = 1`, where the
/// generator is that of the P-measure driving process with `V`, `W` moving
/// by Loewner flow. Homogeneity makes these states cover every shape.
fn generator_residual() -> anyhow::Result<f64> {
    let m = |u: f64, v: f64, w: f64| -> f64 {
        MarkedState::new(u, v, w)
            .and_then(|s| fk_observable(&s))
            .unwrap_or(f64::NAN)
    };
    let d1 = |g: &dyn Fn(f64) -> f64, h: f64| (-g(2.0 * h) + 8.0 * g(h) - 8.0 * g(-h) + g(-2.0 * h)) / (12.0 * h);
    let mut worst = 0.0f64;
    for i in 1..100 {
        let st = MarkedState::from_xy(i as f64 / 100.0, 1.0 - i as f64 / 100.0)?;
        let (u, v, w, x, y) = (st.u, st.v, st.w, st.x(), st.y());
        let h = 3e-3 * x;
        let mu = d1(&|d| m(u + d, v, w), h);
        let mv = d1(&|d| m(u, v + d, w), 3e-3 * x.min(y));
        let mw = d1(&|d| m(u, v, w + d), 3e-3 * y);
        let muu = (-m(u + 2.0 * h, v, w) + 16.0 * m(u + h, v, w) - 30.0 * m(u, v, w) + 16.0 * m(u - h, v, w)
            - m(u - 2.0 * h, v, w))
            / (12.0 * h * h);
        let r = p_measure_drift(&st)? * mu + KAPPA_FK / 2.0 * muu + 2.0 / x * mv + 2.0 / st.s() * mw;
        worst = worst.max(if r.is_nan() { f64::INFINITY } else { r.abs() });
    }
    Ok(worst)
}

pub fn check_identities(run: &Resolved<IdentityParams>) -> anyhow::Result<bool> {
    if run.params.grid < 2 {
        return usage("grid needs at least 2 points per axis");
    }
    let out = Output::new(run)?;
    let states = log_grid_states(run.params.grid)?;
    let mut drift = 0.0f64;
    let mut link = 0.0f64;
    for st in &states {
        drift = drift.max((conditioned_drift(st)? - hsle_drift(st)?).abs());
        link = link.max((hyp_link_term(st)? - hsle_third_term(st)?).abs());
    }
    let mut symmetry = 0.0f64;
    for i in 1..200 {
        let z = i as f64 / 200.0;
        symmetry = symmetry.max((cardy(z)? + cardy(1.0 - z)? - 1.0).abs());
    }
    let checks = [
        Check { name: "drift_identity", max_error: drift, tolerance: 1e-10 },
        Check { name: "hypergeometric_link", max_error: link, tolerance: 1e-8 },
        Check { name: "cardy_symmetry", max_error: symmetry, tolerance: 1e-10 },
        Check { name: "generator_annihilation", max_error: generator_residual()?, tolerance: 1e-6 },
    ];
    let ok = |c: &Check| c.max_error < c.tolerance;
    out.write_rows(
        IDENTITY_HEADER,
        checks.iter().map(|c| format!("{},{:e},{:e},{}", c.name, c.max_error, c.tolerance, ok(c))),
    )?;
    for c in &checks {
        println!("  {:<24} {:.3e} (tol {:.0e}) {}", c.name, c.max_error, c.tolerance, if ok(c) { "ok" } else { "FAIL" });
    }
    let results: Vec<Value> = checks
        .iter()
        .map(|c| json!({"check": c.name, "max_error": c.max_error, "tolerance": c.tolerance, "pass": ok(c)}))
        .collect();
    let pass = checks.iter().all(ok);
    out.finish(Value::Array(results), pass)
}

// ---------------------------------------------------------------- fk-crossing

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkParams {
    pub cols: usize,
    pub rows: usize,
    pub mesh_steps: usize,
    pub samples: usize,
    pub sweeps_between: usize,
}

impl Default for FkParams {
    fn default() -> Self {
        Self {
            cols: 2,
            rows: 2,
            mesh_steps: 1,
            samples: 0,
            sweeps_between: 2,
        }
    }
}

#[derive(Debug, Serialize)]
struct FkRow {
    mesh_step: usize,
    cols: usize,
    rows: usize,
    mesh: f64,
    aspect: f64,
    z: f64,
    n: usize,
    estimate: f64,
    se: f64,
    theory: f64,
}

pub fn fk_crossing(run: &Resolved<FkParams>) -> anyhow::Result<bool> {
    let p = &run.params;
    if p.cols == 0 || p.rows == 0 || p.mesh_steps == 0 {
        return usage("cols, rows and mesh_steps must be positive");
    }
    if p.samples > 0 && p.samples < 100 {
        return usage(format!("samples must be 0 (enumeration) or at least 100, got {}", p.samples));
    }
    let out = Output::new(run)?;
    let mut rows = Vec::new();
    let mut pass = true;
    for k in 1..=p.mesh_steps {
        let (cols, nrows) = (p.cols * k, p.rows * k);
        let d = build_rect_domain(cols, nrows, 1.0 / k as f64)?;
        let z = rectangle_cross_ratio(d.aspect())?;
        let theory = fk_observable_from_z(z)?;
        let (n, estimate, se) = if p.samples == 0 {
            let law = enumerate_exact(&d)?;
            let exact = law.prob(ArcPattern::AdCb);
            // The quarter turn exchanges the two patterns on a square.
            if cols == nrows && (exact - M_SYMMETRIC).abs() > 1e-12 {
                pass = false;
            }
            (0, exact, 0.0)
        } else {
            let seed = run.seed.wrapping_add(k as u64);
            let e = estimate_arc_probability(&d, p.samples, p.sweeps_between, seed)?;
            (e.n_samples, e.estimate, e.std_error)
        };
        if !(0.0..=1.0).contains(&estimate) {
            pass = false;
        }
        println!("  {cols}x{nrows}: P(AD_CB) = {estimate:.6} (se {se:.4}), continuum {theory:.6}");
        rows.push(FkRow {
            mesh_step: k,
            cols,
            rows: nrows,
            mesh: 1.0 / k as f64,
            aspect: d.aspect(),
            z,
            n,
            estimate,
            se,
            theory,
        });
    }
    out.write_rows(
        FK_HEADER,
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                r.mesh_step, r.cols, r.rows, r.mesh, r.aspect, r.z, r.n, r.estimate, r.se, r.theory
            )
        }),
    )?;
    out.finish(serde_json::to_value(&rows)?, pass)
}

// ---------------------------------------------------------------- sle-simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub kind: String,
    pub kappa: Option<f64>,
    pub x0: f64,
    pub y0: f64,
    pub dt: f64,
    pub tmax: f64,
    pub paths: usize,
    pub zero_noise: bool,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            kind: "chordal".into(),
            kappa: None,
            x0: 1.0,
            y0: 1.0,
            dt: 1e-3,
            tmax: 1.0,
            paths: 100,
            zero_noise: false,
        }
    }
}

fn path_ok(p: &DrivingPath) -> bool {
    p.marked.iter().all(|m| m.u.is_finite() && m.w.is_finite() && m.x() > 0.0 && m.y() > 0.0)
}

pub fn sle_simulate(run: &Resolved<SimulateParams>) -> anyhow::Result<bool> {
    let p = &run.params;
    if p.paths == 0 && !p.zero_noise {
        return usage("--paths 0 runs one deterministic path and requires --zero-noise");
    }
    let mut spec = driver(&p.kind, p.kappa, p.x0, p.y0, p.dt, p.tmax, run.seed)?;
    if p.zero_noise {
        spec = spec.with_noise(NoiseMode::Zero);
    }
    let out = Output::new(run)?;

    if p.paths == 0 {
        let path = simulate_indexed(&spec, 0)?;
        let mut w = out.csv_writer()?;
        path.write_csv(&mut w)?;
        w.flush()?;
        let mut pass = path_ok(&path);
        // With U ≡ 0 the marked points follow dV = 2/V dt exactly.
        let fixture = if spec.kind == DriverKind::Chordal && spec.initial.u == 0.0 {
            let (v0, w0) = (spec.initial.v, spec.initial.w);
            let err = path
                .times
                .iter()
                .zip(&path.marked)
                .map(|(&t, m)| {
                    let dv = (m.v - (v0 * v0 + 4.0 * t).sqrt()).abs();
                    let dw = (m.w - (w0 * w0 + 4.0 * t).sqrt()).abs();
                    dv.max(dw).max(m.u.abs())
                })
                .fold(0.0, f64::max);
            pass &= err < 1e-6;
            println!("  max |V_t - sqrt(V0^2 + 4t)| over the path: {err:.3e} (tol 1e-6)");
            Some(err)
        } else {
            None
        };
        let end = path.final_state();
        println!("  {} steps to t = {:.4}, final z = {:.6}", path.len() - 1, path.final_time(), end.z());
        let results = json!({
            "n_steps": path.len() - 1,
            "t_end": path.final_time(),
            "final": {"U": end.u, "V": end.v, "W": end.w, "z": end.z()},
            "stop_reason": path.stop_reason,
            "closed_form_max_error": fixture,
        });
        return out.finish(results, pass);
    }

    let paths = run_indexed(p.paths, spec.seed, workers(), |i, _| simulate_indexed(&spec, i));
    let paths = paths.into_iter().collect::<hsle_core::Result<Vec<_>>>()?;
    let pass = paths.iter().all(path_ok);
    out.write_rows(
        ENSEMBLE_HEADER,
        paths.iter().enumerate().map(|(i, path)| {
            let m = path.final_state();
            let reason = path.stop_reason.map_or("none".to_string(), |r| format!("{r:?}"));
            format!(
                "{i},{},{reason},{},{},{},{},{}",
                path.final_time(),
                m.u,
                m.v,
                m.w,
                m.z(),
                path.log_weights.last().copied().unwrap_or(0.0)
            )
        }),
    )?;
    let z: Vec<f64> = paths.iter().map(|q| q.final_state().z()).collect();
    let (mean_z, se_z) = mean_se(&z);
    let stopped = paths.iter().filter(|q| q.stop_reason.is_some()).count();
    println!("  {} paths of {}: final z = {mean_z:.4} ± {se_z:.4}, {stopped} stopped early", p.paths, spec.kind.tag());
    let results = json!({
        "kind": spec.kind.tag(),
        "kappa": spec.kappa,
        "n_paths": p.paths,
        "mean_final_z": mean_z,
        "se_final_z": se_z,
        "n_stopped": stopped,
    });
    out.finish(results, pass)
}

// ---------------------------------------------------------------- girsanov-test

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovParams {
    pub x0: f64,
    pub y0: f64,
    pub t: f64,
    pub paths: usize,
    pub dt: f64,
}

impl Default for GirsanovParams {
    fn default() -> Self {
        Self {
            x0: 1.0,
            y0: 1.0,
            t: 0.3,
            paths: 2000,
            dt: 1e-3,
        }
    }
}

pub fn girsanov_test(run: &Resolved<GirsanovParams>) -> anyhow::Result<bool> {
    let p = &run.params;
    if p.paths < 2 {
        return usage("girsanov-test needs at least 2 paths");
    }
    let spec_p = driver("fk-p-measure", None, p.x0, p.y0, p.dt, p.t, run.seed)?;
    let spec_h = driver("hsle-16-3", None, p.x0, p.y0, p.dt, p.t, run.seed.wrapping_add(1))?;
    let out = Output::new(run)?;
    let r = weighted_vs_direct(p.paths, p.t, &spec_p, &spec_h, workers())?;
    out.write_rows(
        GIRSANOV_HEADER,
        (0..r.n_paths).map(|i| format!("{i},{},{},{}", r.weighted_z[i], r.weights[i], r.direct_z[i])),
    )?;
    // The weight is a bounded martingale with mean one.
    let weight_dev = (r.mean_weight - 1.0).abs() / r.mean_weight_se.max(f64::MIN_POSITIVE);
    let pass = r.distance.passes() && weight_dev < 4.0;
    println!(
        "  weighted mean z {:.4} ± {:.4}, direct {:.4} ± {:.4}",
        r.weighted_mean_z, r.weighted_se_z, r.direct_mean_z, r.direct_se_z
    );
    println!(
        "  sup-CDF distance {:.4} (1% critical {:.4}, ESS {:.0}); mean weight {:.4} ± {:.4}",
        r.distance.statistic, r.distance.critical_1pct, r.distance.ess_a, r.mean_weight, r.mean_weight_se
    );
    out.finish(serde_json::to_value(&r)?, pass)
}

// ---------------------------------------------------------------- pair-sample

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairParams {
    pub x0: f64,
    pub y0: f64,
    pub order: u8,
    pub n: usize,
    pub dt: f64,
}

impl Default for PairParams {
    fn default() -> Self {
        Self {
            x0: 1.0,
            y0: 1.0,
            order: 1,
            n: 50,
            dt: PairSpec::default().dt,
        }
    }
}

pub fn pair_sample(run: &Resolved<PairParams>) -> anyhow::Result<bool> {
    let p = &run.params;
    if !matches!(p.order, 1 | 2) {
        return usage(format!("order must be 1 or 2, got {}", p.order));
    }
    if p.n == 0 {
        return usage("n must be positive");
    }
    let st = MarkedState::from_xy(p.x0, p.y0).or_else(|e| usage(e.to_string()))?;
    let spec = PairSpec {
        dt: p.dt,
        seed: run.seed,
        ..PairSpec::default()
    };
    let out = Output::new(run)?;
    let ens = pair_ensemble(&st, p.order, &spec, p.n)?;
    out.write_rows(PAIR_HEADER, ens.functionals.iter().enumerate().map(|(i, f)| format!("{i},{f}")))?;
    let (mean, se) = mean_se(&ens.functionals);
    for v in ens.violations.iter().take(10) {
        println!("  violation: {v}");
    }
    println!(
        "  order {}: {} of {} accepted, functional {mean:.4} ± {se:.4}, {} violations",
        p.order,
        ens.n_accepted(),
        p.n,
        ens.violations.len()
    );
    let pass = ens.violations.is_empty() && ens.n_accepted() > 0;
    let results = json!({
        "order": p.order,
        "n_requested": ens.n_requested,
        "n_accepted": ens.n_accepted(),
        "n_incomplete": ens.n_incomplete,
        "incomplete": ens.incomplete,
        "functional_mean": mean,
        "functional_se": se,
        "violations": ens.violations,
    });
    out.finish(results, pass)
}

// ---------------------------------------------------------------- percolation

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PercolationParams {
    pub aspect: Vec<f64>,
    pub side: usize,
    pub samples: usize,
}

impl Default for PercolationParams {
    fn default() -> Self {
        Self {
            aspect: vec![1.0],
            side: 32,
            samples: 2000,
        }
    }
}

pub fn percolation(run: &Resolved<PercolationParams>) -> anyhow::Result<bool> {
    let p = &run.params;
    if p.aspect.is_empty() {
        return usage("need at least one aspect");
    }
    let out = Output::new(run)?;
    let mut rows: Vec<CrossingEstimate> = Vec::with_capacity(p.aspect.len());
    for (k, &a) in p.aspect.iter().enumerate() {
        let dom = TriDomain::rectangle(p.side, a)?;
        // Every sample is checked against the exploration path inside.
        let e = estimate_crossing(&dom, p.samples, run.seed.wrapping_add(k as u64))?;
        println!(
            "  aspect {:.4} (z {:.4}): crossing {:.4} ± {:.4}, Cardy {:.4}",
            e.aspect, e.z, e.estimate, e.std_error, e.cardy_value
        );
        rows.push(e);
    }
    let mut w = out.csv_writer()?;
    percolation::write_csv(&rows, &mut w)?;
    w.flush()?;
    out.finish(serde_json::to_value(&rows)?, true)
}

// ---------------------------------------------------------------- trace

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceParams {
    pub kind: String,
    pub kappa: Option<f64>,
    pub x0: f64,
    pub y0: f64,
    pub dt: f64,
    pub tmax: f64,
    pub resolution: usize,
    pub zero_noise: bool,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            kind: "hsle-16-3".into(),
            kappa: None,
            x0: 1.0,
            y0: 1.0,
            dt: 1e-3,
            tmax: 1.0,
            resolution: 10,
            zero_noise: false,
        }
    }
}

pub fn trace(run: &Resolved<TraceParams>) -> anyhow::Result<bool> {
    let p = &run.params;
    if p.resolution == 0 {
        return usage("resolution must be positive");
    }
    let mut spec = driver(&p.kind, p.kappa, p.x0, p.y0, p.dt, p.tmax, run.seed)?;
    if p.zero_noise {
        spec = spec.with_noise(NoiseMode::Zero);
    }
    let out = Output::new(run)?;
    let path = simulate_indexed(&spec, 0)?;
    let tr = loewner::trace(&path, p.resolution);
    let mut w = out.csv_writer()?;
    tr.write_csv(&mut w)?;
    w.flush()?;
    let pass = tr.points.iter().all(|z| z.re.is_finite() && z.im > -1e-9);
    println!("  {} points to t = {:.4}, max height {:.4}", tr.len(), path.final_time(), tr.max_im());
    let results = json!({
        "kind": spec.kind.tag(),
        "n_points": tr.len(),
        "t_end": path.final_time(),
        "max_im": tr.max_im(),
        "stop_reason": path.stop_reason,
    });
    out.finish(results, pass)
}
