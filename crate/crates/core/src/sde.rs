//! Euler–Maruyama simulation of the driving function `U` together with the
//! Loewner flow of the marked points `V < W`.
//!
//! Marked points move by the exact flow of a constant driving value over
//! each step, `V ↦ U + √((V − U)² + 4Δt)`, which is what
//! [`crate::loewner::forward_map`] composes, so the two routes agree to
//! rounding. The fourth marked point sits at `∞`.

use std::f64::consts::SQRT_2;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{cdf_distance, mean_se, run_indexed, CdfDistance};
use crate::observables::{
    fk_observable, fk_observable_xy, hsle_drift, m_diffusion_xy, p_measure_drift, percolation_drift, MarkedState, KAPPA_FK,
    KAPPA_PERCOLATION,
};
use crate::rng::{stream, StreamRng};

/// Relative collapse threshold: stop once `min(X, Y) < STOP_FRACTION · (X₀ + Y₀)`.
pub const STOP_FRACTION: f64 = 1e-4;

/// Under the relative rule a path is abandoned once `X + Y` falls below this
/// fraction of `|U|`, where doubles no longer resolve the marked points.
pub const PRECISION_FLOOR: f64 = 1e-8;

/// Maximum number of times a single step may be halved.
pub const MAX_HALVINGS: u32 = 30;

/// Steps are halved while the noise scale `σ√Δt` exceeds `√REFINE_EPS · X`.
pub const REFINE_EPS: f64 = 0.001;

/// Magnitude of the FK noise coefficient, `4/√3 = √(16/3)`.
pub fn fk_noise() -> f64 {
    4.0 / 3f64.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DriverKind {
    Chordal,
    FkPMeasure,
    #[serde(rename = "HSLE_16_3")]
    Hsle163,
    #[serde(rename = "HSLE_6")]
    Hsle6,
}

impl DriverKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "chordal" => Ok(Self::Chordal),
            "fk_p_measure" | "fk_p" | "p" => Ok(Self::FkPMeasure),
            "hsle_16_3" | "hsle16_3" | "hsle" => Ok(Self::Hsle163),
            "hsle_6" | "hsle6" => Ok(Self::Hsle6),
            other => Err(Error::Usage(format!("unknown driver kind {other:?}"))),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::Chordal => "CHORDAL",
            Self::FkPMeasure => "FK_P_MEASURE",
            Self::Hsle163 => "HSLE_16_3",
            Self::Hsle6 => "HSLE_6",
        }
    }

    /// `None` for chordal, where κ is free.
    pub fn fixed_kappa(self) -> Option<f64> {
        match self {
            Self::Chordal => None,
            Self::FkPMeasure | Self::Hsle163 => Some(KAPPA_FK),
            Self::Hsle6 => Some(KAPPA_PERCOLATION),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoiseMode {
    #[default]
    Gaussian,
    /// All Brownian increments are zero.
    Zero,
}

/// How the collapse threshold is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StopRule {
    /// `min(X, Y) < STOP_FRACTION · (X₀ + Y₀)`.
    #[default]
    Absolute,
    /// `min(X, Y) < STOP_FRACTION · (X + Y)`, invariant under scaling of the
    /// current configuration.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverSpec {
    pub kind: DriverKind,
    pub kappa: f64,
    pub initial: MarkedState,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseMode,
    #[serde(default)]
    pub stop_rule: StopRule,
    /// See [`REFINE_EPS`].
    #[serde(default = "default_refine_eps")]
    pub refine_eps: f64,
}

fn default_refine_eps() -> f64 {
    REFINE_EPS
}

impl DriverSpec {
    /// Spec for a kind with a fixed κ.
    pub fn new(kind: DriverKind, initial: MarkedState, dt: f64, t_max: f64, seed: u64) -> Result<Self> {
        let kappa = kind
            .fixed_kappa()
            .ok_or_else(|| Error::Usage("chordal spec needs an explicit kappa".into()))?;
        Self {
            kind,
            kappa,
            initial,
            dt,
            t_max,
            seed,
            noise: NoiseMode::Gaussian,
            stop_rule: StopRule::Absolute,
            refine_eps: REFINE_EPS,
        }
        .validated()
    }

    pub fn chordal(kappa: f64, initial: MarkedState, dt: f64, t_max: f64, seed: u64) -> Result<Self> {
        Self {
            kind: DriverKind::Chordal,
            kappa,
            initial,
            dt,
            t_max,
            seed,
            noise: NoiseMode::Gaussian,
            stop_rule: StopRule::Absolute,
            refine_eps: REFINE_EPS,
        }
        .validated()
    }

    pub fn with_refine_eps(mut self, eps: f64) -> Self {
        self.refine_eps = eps;
        self
    }

    pub fn with_stop_rule(mut self, rule: StopRule) -> Self {
        self.stop_rule = rule;
        self
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.t_max.is_finite() && self.dt <= self.t_max) {
            return Err(Error::Usage(format!("need 0 < dt <= t_max, got dt = {}, t_max = {}", self.dt, self.t_max)));
        }
        if !(self.refine_eps > 0.0) {
            return Err(Error::Usage(format!("refine_eps must be positive, got {}", self.refine_eps)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Usage(format!("kappa must be positive, got {}", self.kappa)));
        }
        if let Some(k) = self.kind.fixed_kappa() {
            if (k - self.kappa).abs() > 1e-12 {
                return Err(Error::Usage(format!("{} requires kappa = {k}, got {}", self.kind.tag(), self.kappa)));
            }
        }
        MarkedState::new(self.initial.u, self.initial.v, self.initial.w)?;
        Ok(self)
    }

    /// Number of base steps on the uniform grid.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil() as usize
    }

    /// Grid time of base step `k`, clamped to `t_max`.
    pub fn grid_time(&self, k: usize) -> f64 {
        (k as f64 * self.dt).min(self.t_max)
    }

    pub fn stop_threshold(&self) -> f64 {
        STOP_FRACTION * self.initial.s()
    }

    /// Coefficient of `dB` in `dU`.
    pub fn noise_coeff(&self) -> f64 {
        match self.kind {
            DriverKind::Chordal | DriverKind::Hsle6 => self.kappa.sqrt(),
            DriverKind::FkPMeasure => -fk_noise(),
            DriverKind::Hsle163 => fk_noise(),
        }
    }

    pub fn drift(&self, st: &MarkedState) -> Result<f64> {
        match self.kind {
            DriverKind::Chordal => Ok(0.0),
            DriverKind::FkPMeasure => p_measure_drift(st),
            DriverKind::Hsle163 => hsle_drift(st),
            DriverKind::Hsle6 => percolation_drift(st),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// `X = V − U` fell below threshold: the curve reached `V`.
    XCollapse,
    /// `Y = W − V` fell below threshold: `V` was swallowed towards `W`.
    YCollapse,
    /// A step needed more than [`MAX_HALVINGS`] halvings.
    StepFloor,
}

/// Running `N_t`, `⟨N⟩_t` and `log M_t/M₀ = N_t − ⟨N⟩_t / 2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GirsanovAccumulator {
    pub log_weight: f64,
    pub n_value: f64,
    pub qv: f64,
}

impl GirsanovAccumulator {
    fn add(&mut self, coeff: f64, db: f64, dt: f64) {
        self.n_value += coeff * db;
        self.qv += coeff * coeff * dt;
        self.log_weight = self.n_value - 0.5 * self.qv;
    }
}

/// `d⟨B, N⟩/dt` for the P-measure noise `B`.
fn cross_coeff(x: f64, y: f64) -> f64 {
    m_diffusion_xy(x, y) / fk_observable_xy(x, y)
}

/// A simulated path; entry `k` of every vector is the state after `k`
/// retained steps, and step `k` is driven by `u_values[k]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrivingPath {
    pub kind: DriverKind,
    pub kappa: f64,
    pub times: Vec<f64>,
    pub u_values: Vec<f64>,
    pub marked: Vec<MarkedState>,
    /// `noise[k]` is the increment used for step `k`.
    pub noise: Vec<f64>,
    /// `step_sizes[k]` is the length of step `k`; kept separately since
    /// steps can fall below the resolution of `times`.
    pub step_sizes: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub stopped_at: Option<f64>,
    pub stop_reason: Option<StopReason>,
    /// Present for [`DriverKind::FkPMeasure`].
    pub girsanov: Option<GirsanovAccumulator>,
}

impl DrivingPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> MarkedState {
        *self.marked.last().expect("paths hold at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Step sizes and driving values `(Δt_k, U_k)` of the retained steps.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.step_sizes.iter().copied().zip(self.u_values.iter().copied())
    }

    /// Index of the last retained entry with time `≤ t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t + 1e-12).saturating_sub(1)
    }

    pub const CSV_HEADER: &'static str = "t,U,V,W,X,Y,log_weight";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for k in 0..self.len() {
            let m = &self.marked[k];
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.times[k],
                m.u,
                m.v,
                m.w,
                m.x(),
                m.y(),
                self.log_weights[k]
            )?;
        }
        Ok(())
    }
}

/// State of one path at a requested time `t ∧ τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub state: MarkedState,
    pub log_weight: f64,
    pub stopped: bool,
}

/// Receives each retained step.
trait Recorder {
    fn record(&mut self, t: f64, dt: f64, st: &MarkedState, db: f64, log_weight: f64);
}

struct FullRecorder<'a>(&'a mut DrivingPath);

impl Recorder for FullRecorder<'_> {
    fn record(&mut self, t: f64, dt: f64, st: &MarkedState, db: f64, log_weight: f64) {
        let p = &mut *self.0;
        p.times.push(t);
        p.step_sizes.push(dt);
        p.u_values.push(st.u);
        p.marked.push(*st);
        p.noise.push(db);
        p.log_weights.push(log_weight);
    }
}

struct NullRecorder;

impl Recorder for NullRecorder {
    fn record(&mut self, _: f64, _: f64, _: &MarkedState, _: f64, _: f64) {}
}

enum StepOutcome {
    Running,
    Stopped(StopReason),
}

struct Stepper<'s> {
    spec: &'s DriverSpec,
    sigma: f64,
    threshold: f64,
    state: MarkedState,
    t: f64,
    girsanov: Option<GirsanovAccumulator>,
}

impl<'s> Stepper<'s> {
    fn new(spec: &'s DriverSpec) -> Self {
        Self {
            spec,
            sigma: spec.noise_coeff(),
            threshold: spec.stop_threshold(),
            state: spec.initial,
            t: 0.0,
            girsanov: (spec.kind == DriverKind::FkPMeasure).then(GirsanovAccumulator::default),
        }
    }

    fn log_weight(&self) -> f64 {
        self.girsanov.map_or(0.0, |g| g.log_weight)
    }

    fn draw(&self, rng: &mut StreamRng, dt: f64) -> f64 {
        match self.spec.noise {
            NoiseMode::Gaussian => dt.sqrt() * rng.sample::<f64, _>(StandardNormal),
            NoiseMode::Zero => 0.0,
        }
    }

    /// Advances by `dt` with Brownian increment `db`, halving on overshoot.
    fn advance(&mut self, dt: f64, db: f64, depth: u32, rng: &mut StreamRng, rec: &mut impl Recorder) -> StepOutcome {
        let st = self.state;
        let drift = match self.spec.drift(&st) {
            Ok(d) => d,
            Err(_) => return StepOutcome::Stopped(self.collapse_reason().unwrap_or(StopReason::StepFloor)),
        };
        let u1 = st.u + drift * dt + self.sigma * db;
        let flow = |x: f64| st.u + (x - st.u).signum() * ((x - st.u).powi(2) + 4.0 * dt).sqrt();
        let (v1, w1) = (flow(st.v), flow(st.w));
        // Chordal marked points are only carried along and may be swallowed.
        let chordal = self.spec.kind == DriverKind::Chordal;
        let too_coarse = !chordal && self.sigma * self.sigma * dt > self.spec.refine_eps * st.x().powi(2);
        if too_coarse || !u1.is_finite() || (!chordal && u1 >= v1) {
            if depth >= MAX_HALVINGS {
                return StepOutcome::Stopped(StopReason::StepFloor);
            }
            // Brownian bridge midpoint.
            let db1 = 0.5 * db + self.draw(rng, 0.25 * dt);
            if let StepOutcome::Stopped(r) = self.advance(0.5 * dt, db1, depth + 1, rng, rec) {
                return StepOutcome::Stopped(r);
            }
            return self.advance(0.5 * dt, db - db1, depth + 1, rng, rec);
        }
        if let Some(g) = self.girsanov.as_mut() {
            let (x, y) = (st.x(), st.y());
            let c = cross_coeff(x, y);
            // Milstein term: c depends on U through X = V − U.
            let h = 1e-5 * x;
            let dc_du = -(cross_coeff(x + h, y) - cross_coeff(x - h, y)) / (2.0 * h);
            g.add(c, db, dt);
            g.n_value += 0.5 * dc_du * self.sigma * (db * db - dt);
            g.log_weight = g.n_value - 0.5 * g.qv;
        }
        self.state = MarkedState { u: u1, v: v1, w: w1 };
        self.t += dt;
        rec.record(self.t, dt, &self.state, db, self.log_weight());
        match self.collapse_reason() {
            Some(r) => StepOutcome::Stopped(r),
            None => StepOutcome::Running,
        }
    }

    fn collapse_reason(&self) -> Option<StopReason> {
        if self.spec.kind == DriverKind::Chordal {
            return None;
        }
        let threshold = match self.spec.stop_rule {
            StopRule::Absolute => self.threshold,
            StopRule::Relative => {
                if self.state.s() < PRECISION_FLOOR * self.state.u.abs() {
                    return Some(StopReason::StepFloor);
                }
                STOP_FRACTION * self.state.s()
            }
        };
        if self.state.x() < threshold {
            Some(StopReason::XCollapse)
        } else if self.state.y() < threshold {
            Some(StopReason::YCollapse)
        } else {
            None
        }
    }

    fn base_step(&mut self, k: usize, rng: &mut StreamRng, rec: &mut impl Recorder) -> StepOutcome {
        let t1 = self.spec.grid_time(k + 1);
        let dt = t1 - self.spec.grid_time(k);
        let db = self.draw(rng, dt);
        let out = self.advance(dt, db, 0, rng, rec);
        if matches!(out, StepOutcome::Running) {
            self.t = t1;
        }
        out
    }
}

fn empty_path(spec: &DriverSpec) -> DrivingPath {
    let n = spec.n_steps().saturating_add(1).min(1 << 16);
    let mut p = DrivingPath {
        kind: spec.kind,
        kappa: spec.kappa,
        times: Vec::with_capacity(n),
        u_values: Vec::with_capacity(n),
        marked: Vec::with_capacity(n),
        noise: Vec::with_capacity(n),
        step_sizes: Vec::with_capacity(n),
        log_weights: Vec::with_capacity(n),
        stopped_at: None,
        stop_reason: None,
        girsanov: None,
    };
    p.times.push(0.0);
    p.u_values.push(spec.initial.u);
    p.marked.push(spec.initial);
    p.log_weights.push(0.0);
    p
}

/// Simulates the path with stream index `index` of `spec.seed`.
pub fn simulate_indexed(spec: &DriverSpec, index: u64) -> Result<DrivingPath> {
    let spec = spec.validated()?;
    let mut rng = stream(spec.seed, index);
    let mut path = empty_path(&spec);
    let mut stepper = Stepper::new(&spec);
    for k in 0..spec.n_steps() {
        let out = stepper.base_step(k, &mut rng, &mut FullRecorder(&mut path));
        if let StepOutcome::Stopped(r) = out {
            path.stopped_at = Some(stepper.t);
            path.stop_reason = Some(r);
            break;
        }
    }
    path.girsanov = stepper.girsanov;
    Ok(path)
}

/// Like [`simulate_indexed`], but with step `dt · (s/s₀)²` where
/// `s = X + Y`, so the discretization looks the same at every scale. Runs
/// until stopping, `t_max`, or `max_steps` steps.
pub fn simulate_scaled(spec: &DriverSpec, index: u64, max_steps: usize) -> Result<DrivingPath> {
    simulate_scaled_until(spec, index, max_steps, 0.0)
}

/// As [`simulate_scaled`], but also ends (without a stop reason) once
/// `X + Y < min_scale`, so that the caller can recentre and continue.
pub fn simulate_scaled_until(spec: &DriverSpec, index: u64, max_steps: usize, min_scale: f64) -> Result<DrivingPath> {
    let spec = spec.validated()?;
    let mut rng = stream(spec.seed, index);
    let mut path = empty_path(&spec);
    let mut stepper = Stepper::new(&spec);
    let s0 = spec.initial.s();
    for _ in 0..max_steps {
        if stepper.t >= spec.t_max || stepper.state.s() < min_scale {
            break;
        }
        let dt = spec.dt * (stepper.state.s() / s0).powi(2);
        let dt = dt.min(spec.t_max - stepper.t);
        let db = stepper.draw(&mut rng, dt);
        if let StepOutcome::Stopped(r) = stepper.advance(dt, db, 0, &mut rng, &mut FullRecorder(&mut path)) {
            path.stopped_at = Some(stepper.t);
            path.stop_reason = Some(r);
            break;
        }
    }
    path.girsanov = stepper.girsanov;
    Ok(path)
}

pub fn simulate(spec: &DriverSpec) -> Result<DrivingPath> {
    simulate_indexed(spec, 0)
}

/// States of path `index` at each of the increasing `times`, frozen after
/// stopping. Only the snapshots are kept in memory.
pub fn simulate_snapshots(spec: &DriverSpec, index: u64, times: &[f64]) -> Result<Vec<Snapshot>> {
    let spec = spec.validated()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0 || t > spec.t_max + 1e-12) {
        return Err(Error::Usage("snapshot times must be increasing within [0, t_max]".into()));
    }
    let mut rng = stream(spec.seed, index);
    let mut stepper = Stepper::new(&spec);
    let mut out = Vec::with_capacity(times.len());
    let mut stopped = false;
    let mut k = 0;
    for &t in times {
        while !stopped && spec.grid_time(k) < t - 1e-12 * spec.dt.max(t) {
            if let StepOutcome::Stopped(_) = stepper.base_step(k, &mut rng, &mut NullRecorder) {
                stopped = true;
            }
            k += 1;
        }
        out.push(Snapshot {
            t,
            state: stepper.state,
            log_weight: stepper.log_weight(),
            stopped,
        });
    }
    Ok(out)
}

/// Closed-form weight `M_{t∧τ} / M₀` and the accumulated `exp(N − ⟨N⟩/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPair {
    pub closed_form: f64,
    pub accumulated: f64,
}

impl WeightPair {
    pub fn relative_gap(&self) -> f64 {
        (self.accumulated - self.closed_form).abs() / self.closed_form
    }
}

pub fn weight_of_state(initial: &MarkedState, state: &MarkedState, log_weight: f64) -> Result<WeightPair> {
    Ok(WeightPair {
        closed_form: fk_observable(state)? / fk_observable(initial)?,
        accumulated: log_weight.exp(),
    })
}

pub fn girsanov_weights(path: &DrivingPath) -> Result<WeightPair> {
    if path.kind != DriverKind::FkPMeasure {
        return Err(Error::Usage(format!("Girsanov weight needs an FK_P_MEASURE path, got {}", path.kind.tag())));
    }
    if path.len() <= 1 {
        return Ok(WeightPair {
            closed_form: 1.0,
            accumulated: 1.0,
        });
    }
    weight_of_state(&path.marked[0], &path.final_state(), path.girsanov.map_or(0.0, |g| g.log_weight))
}

/// `M_{t∧τ}/M₀` for a P-measure path, in closed form.
pub fn girsanov_weight(path: &DrivingPath) -> Result<f64> {
    Ok(girsanov_weights(path)?.closed_form)
}

/// Weighted P-measure ensemble against a direct hSLE(16/3) ensemble at a
/// fixed time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GirsanovReport {
    pub t: f64,
    pub n_paths: usize,
    pub weighted_mean_z: f64,
    pub weighted_se_z: f64,
    pub direct_mean_z: f64,
    pub direct_se_z: f64,
    pub mean_weight: f64,
    pub mean_weight_se: f64,
    /// Largest relative gap between closed-form and accumulated weights.
    pub max_weight_gap: f64,
    pub distance: CdfDistance,
    #[serde(skip)]
    pub weighted_z: Vec<f64>,
    #[serde(skip)]
    pub weights: Vec<f64>,
    #[serde(skip)]
    pub direct_z: Vec<f64>,
}

impl GirsanovReport {
    pub fn joint_se(&self) -> f64 {
        self.weighted_se_z.hypot(self.direct_se_z)
    }
}

pub fn weighted_vs_direct(
    n_paths: usize,
    t: f64,
    spec_p: &DriverSpec,
    spec_hsle: &DriverSpec,
    workers: usize,
) -> Result<GirsanovReport> {
    if spec_p.kind != DriverKind::FkPMeasure || spec_hsle.kind != DriverKind::Hsle163 {
        return Err(Error::Usage("expected an FK_P_MEASURE and an HSLE_16_3 spec".into()));
    }
    let (a, b) = (spec_p.initial, spec_hsle.initial);
    if (a.x() - b.x()).abs() > 1e-12 * a.s() || (a.y() - b.y()).abs() > 1e-12 * a.s() {
        return Err(Error::Usage("initial states differ".into()));
    }
    if n_paths == 0 {
        return Err(Error::Usage("need at least one path".into()));
    }
    let p_runs = run_indexed(n_paths, spec_p.seed, workers, |i, _| {
        let s = simulate_snapshots(spec_p, i, &[t])?[0];
        let w = weight_of_state(&spec_p.initial, &s.state, s.log_weight)?;
        Ok((s.state.z(), w))
    });
    let h_runs = run_indexed(n_paths, spec_hsle.seed, workers, |i, _| {
        Ok(simulate_snapshots(spec_hsle, i, &[t])?[0].state.z())
    });
    let mut weighted_z = Vec::with_capacity(n_paths);
    let mut weights = Vec::with_capacity(n_paths);
    let mut max_gap = 0.0f64;
    for r in p_runs {
        let (z, w) = r?;
        weighted_z.push(z);
        max_gap = max_gap.max(w.relative_gap());
        weights.push(w.closed_form);
    }
    let direct_z = h_runs.into_iter().collect::<Result<Vec<_>>>()?;
    let wz: Vec<f64> = weighted_z.iter().zip(&weights).map(|(z, w)| z * w).collect();
    let (weighted_mean_z, weighted_se_z) = mean_se(&wz);
    let (direct_mean_z, direct_se_z) = mean_se(&direct_z);
    let (mean_weight, mean_weight_se) = mean_se(&weights);
    let distance = cdf_distance(&weighted_z, Some(&weights), &direct_z)?;
    Ok(GirsanovReport {
        t,
        n_paths,
        weighted_mean_z,
        weighted_se_z,
        direct_mean_z,
        direct_se_z,
        mean_weight,
        mean_weight_se,
        max_weight_gap: max_gap,
        distance,
        weighted_z,
        weights,
        direct_z,
    })
}

/// Scale factor used by tests of Brownian scaling.
pub fn scaled(spec: &DriverSpec, lambda: f64) -> Result<DriverSpec> {
    let st = spec.initial;
    DriverSpec {
        initial: MarkedState::new(lambda * st.u, lambda * st.v, lambda * st.w)?,
        dt: spec.dt * lambda * lambda,
        t_max: spec.t_max * lambda * lambda,
        ..*spec
    }
    .validated()
}

/// `√2 − 1`, the observable at `X = Y`.
pub const M_SYMMETRIC: f64 = SQRT_2 - 1.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::m_diffusion_coeff;

    fn st(x: f64, y: f64) -> MarkedState {
        MarkedState::from_xy(x, y).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(DriverSpec::new(DriverKind::Hsle163, st(1.0, 1.0), 0.1, 0.05, 0).is_err());
        assert!(DriverSpec::new(DriverKind::Chordal, st(1.0, 1.0), 0.1, 1.0, 0).is_err());
        let mut s = DriverSpec::new(DriverKind::Hsle6, st(1.0, 1.0), 0.1, 1.0, 0).unwrap();
        assert_eq!(s.kappa, 6.0);
        s.kappa = 4.0;
        assert!(s.validated().is_err());
        assert!(DriverSpec::chordal(-1.0, st(1.0, 1.0), 0.1, 1.0, 0).is_err());
        assert_eq!(DriverSpec::chordal(2.0, st(1.0, 1.0), 0.1, 1.0, 0).unwrap().n_steps(), 10);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [DriverKind::Chordal, DriverKind::FkPMeasure, DriverKind::Hsle163, DriverKind::Hsle6] {
            assert_eq!(DriverKind::parse(k.tag()).unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.tag()));
        }
        assert!(DriverKind::parse("radial").is_err());
    }

    #[test]
    fn zero_noise_chordal_matches_ode() {
        let s = DriverSpec::chordal(16.0 / 3.0, MarkedState::new(0.0, 0.7, 2.0).unwrap(), 1e-3, 1.0, 0)
            .unwrap()
            .with_noise(NoiseMode::Zero);
        let p = simulate(&s).unwrap();
        assert!(p.u_values.iter().all(|&u| u == 0.0));
        for (t, m) in p.times.iter().zip(&p.marked) {
            assert!((m.v - (0.49 + 4.0 * t).sqrt()).abs() < 1e-6);
            assert!((m.w - (4.0 + 4.0 * t).sqrt()).abs() < 1e-6);
        }
        assert!((p.final_time() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_hsle_steps_follow_drift() {
        let s = DriverSpec::new(DriverKind::Hsle163, st(1.0, 1.0), 1e-3, 0.2, 0)
            .unwrap()
            .with_noise(NoiseMode::Zero);
        let p = simulate(&s).unwrap();
        for k in 0..p.len() - 1 {
            let dt = p.times[k + 1] - p.times[k];
            let du = p.u_values[k + 1] - p.u_values[k];
            let expect = hsle_drift(&p.marked[k]).unwrap();
            assert!((du / dt - expect).abs() < 1e-12 * expect.abs().max(1.0), "step {k}");
        }
    }

    #[test]
    fn ordering_preserved() {
        for kind in [DriverKind::FkPMeasure, DriverKind::Hsle163, DriverKind::Hsle6] {
            for i in 0..20 {
                let s = DriverSpec::new(kind, st(1.0, 0.5), 1e-3, 2.0, 11).unwrap();
                let p = simulate_indexed(&s, i).unwrap();
                assert!(p.marked.iter().all(|m| m.u < m.v && m.v < m.w), "{kind:?} {i}");
                assert!(p.times.windows(2).all(|w| w[1] > w[0]));
                assert_eq!(p.noise.len() + 1, p.len());
            }
        }
    }

    #[test]
    fn stops_record_reason() {
        let s = DriverSpec::new(DriverKind::Hsle163, st(1.0, 1.0), 1e-3, 50.0, 1).unwrap();
        let mut seen = 0;
        for i in 0..10 {
            let p = simulate_indexed(&s, i).unwrap();
            if let Some(tau) = p.stopped_at {
                seen += 1;
                assert!((tau - p.final_time()).abs() < 1e-12);
                let m = p.final_state();
                match p.stop_reason.unwrap() {
                    StopReason::XCollapse => assert!(m.x() < s.stop_threshold()),
                    StopReason::YCollapse => assert!(m.y() < s.stop_threshold()),
                    StopReason::StepFloor => {}
                }
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn snapshots_match_full_path() {
        let s = DriverSpec::new(DriverKind::FkPMeasure, st(1.0, 1.0), 1e-3, 0.5, 4).unwrap();
        for i in 0..5 {
            let p = simulate_indexed(&s, i).unwrap();
            let snaps = simulate_snapshots(&s, i, &[0.0, 0.1, 0.25, 0.5]).unwrap();
            for sn in snaps {
                let k = p.index_at(sn.t);
                assert_eq!(sn.state, p.marked[k]);
                assert_eq!(sn.log_weight, p.log_weights[k]);
            }
        }
    }

    #[test]
    fn girsanov_drift_shift_is_cross_variation() {
        // hSLE drift − P drift, with the noise sign flip B ↦ −B, equals
        // √κ · d⟨B, N⟩/dt.
        for &(x, y) in &[(1.0, 1.0), (0.01, 3.0), (50.0, 0.2), (2.0, 7.0)] {
            let s = st(x, y);
            let c = m_diffusion_coeff(&s).unwrap() / fk_observable(&s).unwrap();
            let shift = -fk_noise() * c;
            let lhs = hsle_drift(&s).unwrap() - p_measure_drift(&s).unwrap();
            assert!((lhs - shift).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn weight_of_short_path_is_one() {
        let s = DriverSpec::new(DriverKind::FkPMeasure, st(1.0, 1.0), 1e-3, 1e-3, 0).unwrap();
        let mut p = simulate(&s).unwrap();
        p.times.truncate(1);
        p.marked.truncate(1);
        assert_eq!(girsanov_weight(&p).unwrap(), 1.0);
        let h = simulate(&DriverSpec::new(DriverKind::Hsle163, st(1.0, 1.0), 1e-3, 1e-2, 0).unwrap()).unwrap();
        assert!(matches!(girsanov_weight(&h), Err(Error::Usage(_))));
    }

    #[test]
    fn accumulated_weight_tracks_closed_form() {
        let s = DriverSpec::new(DriverKind::FkPMeasure, st(1.0, 1.0), 1e-4, 0.3, 8).unwrap();
        for i in 0..20 {
            let p = simulate_indexed(&s, i).unwrap();
            let w = girsanov_weights(&p).unwrap();
            if p.stopped_at.is_none() {
                assert!(w.relative_gap() < 0.01, "path {i}: {w:?}");
            }
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = DriverSpec::new(DriverKind::FkPMeasure, st(1.0, 1.0), 0.01, 0.05, 0).unwrap();
        let p = simulate(&s).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,U,V,W,X,Y,log_weight\n"));
        assert_eq!(text.lines().count(), p.len() + 1);
    }

    #[test]
    fn mismatched_initial_states_rejected() {
        let p = DriverSpec::new(DriverKind::FkPMeasure, st(1.0, 1.0), 0.01, 0.1, 0).unwrap();
        let h = DriverSpec::new(DriverKind::Hsle163, st(1.0, 2.0), 0.01, 0.1, 0).unwrap();
        assert!(weighted_vs_direct(10, 0.05, &p, &h, 1).is_err());
    }

    #[test]
    fn zero_noise_comparison_smoke() {
        let p = DriverSpec::new(DriverKind::FkPMeasure, st(1.0, 1.0), 1e-3, 0.1, 0)
            .unwrap()
            .with_noise(NoiseMode::Zero);
        let h = DriverSpec::new(DriverKind::Hsle163, st(1.0, 1.0), 1e-3, 0.1, 0)
            .unwrap()
            .with_noise(NoiseMode::Zero);
        let r = weighted_vs_direct(1, 0.1, &p, &h, 1).unwrap();
        assert!(r.weights[0] > 0.0);
        assert_eq!(r.weighted_z.len(), 1);
    }
}
