//! Chordal Loewner maps for piecewise-constant driving functions.
//!
//! Over a step of length `Δt` with driving value `u`, the map
//! `φ(w) = u + √((w − u)² + 4Δt)` removes the vertical slit from `u` to
//! `u + 2i√Δt`. `g_t` is the composition of these maps, and the curve tip at
//! a retained step is the preimage of the last driving value.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::sde::DrivingPath;

/// Outcome of mapping a point forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mapped {
    Point(Complex64),
    /// The point was swallowed by the hull.
    Absorbed,
}

impl Mapped {
    pub fn point(self) -> Option<Complex64> {
        match self {
            Mapped::Point(z) => Some(z),
            Mapped::Absorbed => None,
        }
    }
}

/// Square root in the closed upper half-plane; on the real line the sign
/// follows `side`.
fn upper_sqrt(zeta: Complex64, side: f64) -> Complex64 {
    let r = zeta.sqrt();
    if r.im < 0.0 {
        -r
    } else if r.im == 0.0 {
        Complex64::new(r.re.abs().copysign(side), 0.0)
    } else {
        r
    }
}

/// `u + √((w − u)² + 4Δt)`.
pub fn slit_forward(w: Complex64, dt: f64, u: f64) -> Complex64 {
    let d = w - u;
    u + upper_sqrt(d * d + 4.0 * dt, d.re)
}

/// `u + √((w − u)² − 4Δt)`, the inverse of [`slit_forward`].
pub fn slit_inverse(w: Complex64, dt: f64, u: f64) -> Complex64 {
    let d = w - u;
    u + upper_sqrt(d * d - 4.0 * dt, d.re)
}

/// Sequence of elementary slit maps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlitMaps {
    /// `(Δt_k, u_k)` per step.
    pub steps: Vec<(f64, f64)>,
    /// Capacity time after each step; `times[0] = 0`.
    pub times: Vec<f64>,
}

impl SlitMaps {
    pub fn from_path(path: &DrivingPath) -> Self {
        Self::from_steps(path.steps().collect())
    }

    pub fn from_steps(steps: Vec<(f64, f64)>) -> Self {
        let mut times = Vec::with_capacity(steps.len() + 1);
        times.push(0.0);
        let mut t = 0.0;
        for &(dt, _) in &steps {
            t += dt;
            times.push(t);
        }
        Self { steps, times }
    }

    pub fn total_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `(Δt, u)` pieces covering `[t0, t1]`, the first and last possibly partial.
    fn pieces(&self, t0: f64, t1: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let start = self.times.partition_point(|&s| s <= t0).saturating_sub(1);
        self.steps[start.min(self.steps.len())..]
            .iter()
            .zip(&self.times[start..])
            .map_while(move |(&(dt, u), &s)| {
                if s >= t1 {
                    return None;
                }
                let lo = s.max(t0);
                let hi = (s + dt).min(t1);
                Some((hi - lo, u))
            })
            .filter(|&(d, _)| d > 0.0)
    }

    /// `g_{t1} ∘ g_{t0}⁻¹` applied to `z`.
    pub fn forward_between(&self, z: Complex64, t0: f64, t1: f64) -> Result<Mapped> {
        if z.im < 0.0 || !z.re.is_finite() || !z.im.is_finite() {
            return domain(format!("point {z} is not in the closed upper half-plane"));
        }
        if !(0.0 <= t0 && t0 <= t1 && t1 <= self.total_time() * (1.0 + 1e-12) + 1e-15) {
            return domain(format!("times [{t0}, {t1}] outside [0, {}]", self.total_time()));
        }
        let real = z.im == 0.0;
        let mut w = z;
        let mut side = 0.0;
        for (dt, u) in self.pieces(t0, t1) {
            if real {
                let s = (w.re - u).signum();
                if w.re == u || (side != 0.0 && s != side) {
                    return Ok(Mapped::Absorbed);
                }
                side = s;
            }
            w = slit_forward(w, dt, u);
            if !real && w.im <= 0.0 {
                return Ok(Mapped::Absorbed);
            }
        }
        Ok(Mapped::Point(w))
    }

    pub fn forward(&self, z: Complex64, t: f64) -> Result<Mapped> {
        self.forward_between(z, 0.0, t)
    }

    /// `g_t⁻¹` at `w` for `t = times[n]`.
    pub fn inverse_from_step(&self, w: Complex64, n: usize) -> Complex64 {
        self.steps[..n]
            .iter()
            .rev()
            .fold(w, |acc, &(dt, u)| slit_inverse(acc, dt, u))
    }

    /// `g_T⁻¹` for the full sequence.
    pub fn inverse(&self, w: Complex64) -> Complex64 {
        self.inverse_from_step(w, self.steps.len())
    }

    /// Curve tip after `n ≥ 1` steps.
    pub fn tip(&self, n: usize) -> Complex64 {
        let u = self.steps[n - 1].1;
        self.inverse_from_step(Complex64::new(u, 0.0), n)
    }
}

/// `g_t(z)` for the path's driving function.
pub fn forward_map(path: &DrivingPath, z: Complex64, t: f64) -> Result<Mapped> {
    SlitMaps::from_path(path).forward(z, t)
}

/// Slit maps in consecutive segments, each written in coordinates translated
/// so that its own driving function starts near 0. Keeps small hulls far from
/// the origin resolvable in double precision.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapChain {
    pub segments: Vec<SlitMaps>,
    /// `shifts[j]`: origin of segment `j` in the final coordinates of segment
    /// `j − 1`; `shifts[0] = 0`.
    pub shifts: Vec<f64>,
}

impl MapChain {
    pub fn push(&mut self, maps: SlitMaps, shift: f64) {
        self.shifts.push(if self.segments.is_empty() { 0.0 } else { shift });
        self.segments.push(maps);
    }

    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(SlitMaps::total_time).sum()
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(SlitMaps::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Carries `z`, given at the start of segment `j`, back to the original
    /// coordinates.
    fn pull(&self, mut z: Complex64, j: usize) -> Complex64 {
        for k in (1..=j).rev() {
            z = self.segments[k - 1].inverse(z + self.shifts[k]);
        }
        z
    }

    /// Full inverse; `w` is in the final coordinates of the last segment.
    pub fn inverse(&self, w: Complex64) -> Complex64 {
        match self.segments.len() {
            0 => w,
            n => self.pull(self.segments[n - 1].inverse(w), n - 1),
        }
    }

    /// Full forward map into the final coordinates of the last segment.
    pub fn forward(&self, z: Complex64) -> Result<Mapped> {
        let mut w = z;
        for (j, seg) in self.segments.iter().enumerate() {
            if j > 0 {
                w -= self.shifts[j];
            }
            match seg.forward(w, seg.total_time())? {
                Mapped::Point(p) => w = p,
                Mapped::Absorbed => return Ok(Mapped::Absorbed),
            }
        }
        Ok(Mapped::Point(w))
    }

    /// Trace with roughly one point per `stride` steps.
    pub fn trace(&self, start: f64, stride: usize) -> Trace {
        let mut tr = Trace {
            points: vec![Complex64::new(start, 0.0)],
            times: vec![0.0],
        };
        let mut t0 = 0.0;
        for (j, seg) in self.segments.iter().enumerate() {
            let local = trace_maps(seg, 0.0, stride);
            for (p, t) in local.points.iter().zip(&local.times).skip(1) {
                tr.points.push(self.pull(*p, j));
                tr.times.push(t0 + t);
            }
            t0 += seg.total_time();
        }
        tr
    }
}

/// Sampled curve with its capacity times.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub points: Vec<Complex64>,
    pub times: Vec<f64>,
}

impl Trace {
    pub const CSV_HEADER: &'static str = "t,re,im";

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_im(&self) -> f64 {
        self.points.iter().map(|p| p.im).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for (t, p) in self.times.iter().zip(&self.points) {
            writeln!(out, "{t},{},{}", p.re, p.im)?;
        }
        Ok(())
    }
}

/// Trace of the maps at every `stride`-th step, plus the final step.
pub fn trace_maps(maps: &SlitMaps, start: f64, stride: usize) -> Trace {
    let stride = stride.max(1);
    let mut tr = Trace {
        points: vec![Complex64::new(start, 0.0)],
        times: vec![0.0],
    };
    let n = maps.len();
    let mut k = stride;
    while k <= n {
        tr.points.push(maps.tip(k));
        tr.times.push(maps.times[k]);
        if k == n {
            break;
        }
        k = (k + stride).min(n);
    }
    tr
}

/// Trace of a driving path, one point per `resolution` retained steps.
pub fn trace(path: &DrivingPath, resolution: usize) -> Trace {
    trace_maps(&SlitMaps::from_path(path), path.u_values[0], resolution)
}
