//! Sampling the pair of interfaces `γ₁` (from `U₀` to `∞`) and `γ₂` (from
//! `W₀` to `V₀`) in the conditioned arc configuration.
//!
//! One curve is drawn as hSLE(16/3) until it closes the pocket containing
//! the other's endpoints, which shows up as `Y → 0` with `Y/X → 0`. The other
//! curve is then chordal SLE(16/3) inside the pocket, drawn in the uniformized
//! picture and pulled back through the first curve's inverse slit maps.
//!
//! For order 2 the roles are exchanged by the Möbius involution
//! `ι(x) = V₀ − X₀Y₀/(x − V₀)`, which swaps `U₀ ↔ W₀` and `V₀ ↔ ∞` while
//! preserving `X₀` and `Y₀`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loewner::{slit_forward, trace_maps, MapChain, Mapped, SlitMaps, Trace};
use crate::rng::stream;
use crate::observables::{MarkedState, KAPPA_FK};
use crate::specfun::left_passage;
use crate::sde::{simulate_scaled_until, DriverKind, DriverSpec, StopReason, StopRule, STOP_FRACTION};

/// Imaginary parts above `-IM_TOLERANCE` count as in the closed half-plane.
pub const IM_TOLERANCE: f64 = 1e-9;

/// Pullback of the second curve's start must land within this of its target.
pub const START_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    /// Step of the first (hSLE) curve at the initial scale; it grows with
    /// the square of the current scale.
    pub dt: f64,
    pub max_steps: usize,
    /// Local refinement parameter of the first curve, see [`crate::sde::REFINE_EPS`].
    pub refine_eps: f64,
    /// Capacity of the second curve in units where its endpoints are `0` and
    /// `∞` and the pole of the uniformizing map sits at `1`.
    pub second_capacity: f64,
    pub second_steps: usize,
    /// Approximate number of points kept per trace.
    pub trace_points: usize,
    pub seed: u64,
}

impl Default for PairSpec {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            max_steps: 200_000,
            refine_eps: 0.05,
            second_capacity: 25.0,
            second_steps: 2000,
            trace_points: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IncompleteReason {
    /// `Y₀` already below the collapse threshold.
    DegenerateStart,
    /// No pocket closure within `max_steps`.
    TimeLimit,
    /// The first curve ran into `V` instead.
    XCollapse,
    StepFloor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterfacePair {
    /// From `U₀`.
    pub gamma1: Trace,
    /// From `W₀`.
    pub gamma2: Trace,
    /// Which curve was sampled first.
    pub order: u8,
    pub first_stop_time: f64,
    pub first_stop_state: MarkedState,
    /// Largest roundtrip error of the pulled-back second curve.
    pub roundtrip_error: f64,
    /// For each of [`PROBES`], the probability that it lies in the component
    /// of `H ∖ γ₁` bordering `[V₀, W₀]`. Exact 0 or 1 when `γ₁` is the first
    /// curve; otherwise conditional on the simulated part of `γ₁`, with the
    /// remainder integrated out by the left passage formula.
    pub pocket_probes: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum PairOutcome {
    Accepted(InterfacePair),
    Incomplete(IncompleteReason),
}

/// Involution exchanging the roles of the two curves.
#[derive(Debug, Clone, Copy)]
pub struct Involution {
    v0: f64,
    xy: f64,
}

impl Involution {
    pub fn new(st: &MarkedState) -> Self {
        Self {
            v0: st.v,
            xy: st.x() * st.y(),
        }
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        self.v0 - self.xy / (z - self.v0)
    }
}

/// Orientation-preserving map sending `0 ↦ W`, `∞ ↦ V` and `1 ↦ ∞`.
fn pocket_map(st: &MarkedState, w: Complex64) -> Complex64 {
    (st.v * w - st.w) / (w - 1.0)
}

fn stride(n: usize, points: usize) -> usize {
    (n / points.max(1)).max(1)
}

/// Probe points `U₀ + (X₀ + Y₀)·(a + ib)` for the pocket functional.
pub const PROBES: [(f64, f64); 3] = [(0.75, 0.5), (1.25, 0.25), (0.75, 1.5)];

/// In the uniformized pocket, points this close to the pinch `1` are taken
/// to lie outside it.
const PINCH_RADIUS: f64 = 1e-2;

/// A new segment starts whenever `X + Y` has shrunk by this factor.
const RECENTER: f64 = 1e-2;

pub struct FirstCurve {
    pub maps: MapChain,
    /// Marked points at closure, in the last segment's coordinates.
    pub stop_state: MarkedState,
    pub stop_time: f64,
}

/// hSLE(16/3) from `U₀` until the pocket closes, recentred every time the
/// scale drops by [`RECENTER`]. The drift depends only on `X` and `Y`, so a
/// translated restart continues the same process.
pub fn first_curve(initial: &MarkedState, spec: &PairSpec, index: u64) -> Result<std::result::Result<FirstCurve, IncompleteReason>> {
    let s0 = initial.s();
    let mut maps = MapChain::default();
    let mut state = *initial;
    let mut shift = 0.0;
    let mut time = 0.0;
    let mut budget = spec.max_steps;
    for segment in 0u64.. {
        let dt = spec.dt * (state.s() / s0).powi(2);
        let seg_spec = DriverSpec::new(DriverKind::Hsle163, state, dt, f64::MAX, spec.seed)?
            .with_stop_rule(StopRule::Relative)
            .with_refine_eps(spec.refine_eps);
        let path = simulate_scaled_until(&seg_spec, 2 * index + (segment << 40), budget, RECENTER * state.s())?;
        budget = budget.saturating_sub(path.len());
        time += path.final_time();
        let end = path.final_state();
        maps.push(SlitMaps::from_path(&path), shift);
        match path.stop_reason {
            Some(StopReason::YCollapse) => {
                return Ok(Ok(FirstCurve {
                    maps,
                    stop_state: end,
                    stop_time: time,
                }))
            }
            Some(StopReason::XCollapse) => return Ok(Err(IncompleteReason::XCollapse)),
            Some(StopReason::StepFloor) => return Ok(Err(IncompleteReason::StepFloor)),
            None if budget == 0 => return Ok(Err(IncompleteReason::TimeLimit)),
            None => {}
        }
        shift = end.u;
        state = MarkedState::from_xy(end.x(), end.y())?;
    }
    unreachable!()
}

enum Place {
    /// Cut off by the first curve before the pocket closed.
    Swallowed,
    /// Beyond the closing gap.
    Outside,
    /// In the pocket, with its uniformized coordinate.
    Pocket(Complex64),
}

impl FirstCurve {
    fn locate(&self, z: Complex64) -> Result<Place> {
        Ok(match self.maps.forward(z)? {
            Mapped::Absorbed => Place::Swallowed,
            Mapped::Point(g) => {
                let st = &self.stop_state;
                let w = (g - st.w) / (g - st.v);
                if (w - 1.0).norm() < PINCH_RADIUS {
                    Place::Outside
                } else {
                    Place::Pocket(w)
                }
            }
        })
    }
}

/// Chordal SLE(16/3) from `0` to `∞` in the uniformized pocket, with
/// uniform steps up to the requested capacity.
fn second_curve(spec: &PairSpec, index: u64) -> SlitMaps {
    let mut rng = stream(spec.seed, 2 * index + 1);
    let sigma = KAPPA_FK.sqrt();
    let n = spec.second_steps.max(1);
    let dt = spec.second_capacity / n as f64;
    let mut u = 0.0;
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        steps.push((dt, u));
        u += sigma * dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
    }
    SlitMaps::from_steps(steps)
}

/// Probability, given the sampled second curve up to its final capacity,
/// that the rest of it passes to the left of `w`. Points already swallowed
/// sit on the real line and get 0 or 1.
fn passes_left(second: &SlitMaps, w: Complex64) -> Result<f64> {
    let g = second.steps.iter().fold(w, |acc, &(dt, u)| slit_forward(acc, dt, u));
    let u_end = second.steps.last().map_or(0.0, |&(_, u)| u);
    left_passage((g - u_end).arg(), KAPPA_FK)
}

/// Draws one pair; `index` selects the random streams.
pub fn sample_pair(initial: &MarkedState, order: u8, spec: &PairSpec, index: u64) -> Result<PairOutcome> {
    if order != 1 && order != 2 {
        return Err(Error::Usage(format!("order must be 1 or 2, got {order}")));
    }
    MarkedState::new(initial.u, initial.v, initial.w)?;
    if initial.y() < STOP_FRACTION * initial.s() || initial.x() < STOP_FRACTION * initial.s() {
        return Ok(PairOutcome::Incomplete(IncompleteReason::DegenerateStart));
    }
    let first = match first_curve(initial, spec, index)? {
        Ok(f) => f,
        Err(reason) => return Ok(PairOutcome::Incomplete(reason)),
    };
    let stop_state = first.stop_state;

    let second = second_curve(spec, index);
    let normalized = trace_maps(&second, 0.0, stride(second.len(), spec.trace_points));
    let mut roundtrip_error = 0.0f64;
    let mut second_trace = Trace::default();
    for (p, &t) in normalized.points.iter().zip(&normalized.times) {
        let g = if p.norm() == 0.0 {
            Complex64::new(stop_state.w, 0.0)
        } else {
            pocket_map(&stop_state, *p)
        };
        let z = first.maps.inverse(g);
        if let Some(back) = first.maps.forward(z)?.point() {
            let w = (back - stop_state.w) / (back - stop_state.v);
            roundtrip_error = roundtrip_error.max((w - p).norm() / (1.0 + p.norm()));
        } else {
            roundtrip_error = f64::INFINITY;
        }
        second_trace.points.push(z);
        second_trace.times.push(t);
    }
    let first_trace = first.maps.trace(initial.u, stride(first.maps.len(), spec.trace_points));

    let iota = Involution::new(initial);
    let mut pocket_probes = Vec::with_capacity(PROBES.len());
    for &(a, b) in &PROBES {
        let z = Complex64::new(initial.u + a * initial.s(), b * initial.s());
        let inside = if order == 1 {
            if matches!(first.locate(z)?, Place::Pocket(_)) { 1.0 } else { 0.0 }
        } else {
            // The pocket of γ₁ is the side of the second curve facing the
            // first curve, which is where everything outside the pocket of
            // the first curve also lies.
            match first.locate(iota.apply(z))? {
                Place::Swallowed | Place::Outside => 1.0,
                Place::Pocket(w) => passes_left(&second, w)?,
            }
        };
        pocket_probes.push(inside);
    }

    let (gamma1, gamma2) = if order == 1 {
        (first_trace, second_trace)
    } else {
        let iota = Involution::new(initial);
        let map = |tr: Trace| Trace {
            points: tr.points.iter().map(|&z| iota.apply(z)).collect(),
            times: tr.times,
        };
        (map(second_trace), map(first_trace))
    };
    Ok(PairOutcome::Accepted(InterfacePair {
        gamma1,
        gamma2,
        order,
        first_stop_time: first.stop_time,
        first_stop_state: stop_state,
        roundtrip_error,
        pocket_probes,
    }))
}

/// Invariant violations of an accepted pair, empty when all hold.
pub fn check_pair(pair: &InterfacePair, initial: &MarkedState) -> Vec<String> {
    let mut bad = Vec::new();
    let scale = initial.s();
    for (name, tr) in [("gamma1", &pair.gamma1), ("gamma2", &pair.gamma2)] {
        if let Some(p) = tr.points.iter().find(|p| p.im < -IM_TOLERANCE * scale || !p.re.is_finite()) {
            bad.push(format!("{name} leaves the upper half-plane at {p}"));
        }
    }
    let start1 = pair.gamma1.points[0];
    let start2 = pair.gamma2.points[0];
    if (start1 - initial.u).norm() > START_TOLERANCE * scale {
        bad.push(format!("gamma1 starts at {start1}, expected {}", initial.u));
    }
    if (start2 - initial.w).norm() > START_TOLERANCE * scale {
        bad.push(format!("gamma2 starts at {start2}, expected {}", initial.w));
    }
    if pair.roundtrip_error > START_TOLERANCE {
        bad.push(format!("pullback roundtrip error {}", pair.roundtrip_error));
    }
    // Disjoint away from the real line.
    let interior = |p: &&Complex64| p.im > 1e-6 * scale;
    let min_dist = pair
        .gamma1
        .points
        .iter()
        .filter(interior)
        .flat_map(|a| pair.gamma2.points.iter().filter(interior).map(move |b| (a - b).norm()))
        .fold(f64::INFINITY, f64::min);
    if min_dist <= 0.0 {
        bad.push("curves share an interior point".into());
    }
    bad
}

/// Crossing functional used to compare orders: the fraction of [`PROBES`]
/// enclosed in the pocket of `γ₁`.
pub fn pair_functional(pair: &InterfacePair) -> f64 {
    pair.pocket_probes.iter().sum::<f64>() / pair.pocket_probes.len().max(1) as f64
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PairEnsemble {
    pub order: u8,
    pub n_requested: usize,
    pub functionals: Vec<f64>,
    pub n_incomplete: usize,
    pub incomplete: Vec<(IncompleteReason, usize)>,
    pub violations: Vec<String>,
}

impl PairEnsemble {
    pub fn n_accepted(&self) -> usize {
        self.functionals.len()
    }
}

pub fn pair_ensemble(initial: &MarkedState, order: u8, spec: &PairSpec, n: usize) -> Result<PairEnsemble> {
    let outcomes: Vec<Result<PairOutcome>> = (0..n as u64)
        .into_par_iter()
        .map(|i| sample_pair(initial, order, spec, i))
        .collect();
    let mut ens = PairEnsemble {
        order,
        n_requested: n,
        ..Default::default()
    };
    for (i, out) in outcomes.into_iter().enumerate() {
        match out? {
            PairOutcome::Accepted(p) => {
                for v in check_pair(&p, initial) {
                    ens.violations.push(format!("pair {i}: {v}"));
                }
                ens.functionals.push(pair_functional(&p));
            }
            PairOutcome::Incomplete(r) => {
                ens.n_incomplete += 1;
                match ens.incomplete.iter_mut().find(|(k, _)| *k == r) {
                    Some((_, c)) => *c += 1,
                    None => ens.incomplete.push((r, 1)),
                }
            }
        }
    }
    Ok(ens)
}
