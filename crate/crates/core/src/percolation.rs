//! Critical site percolation on the triangular lattice in a rectangle with
//! four marked corners.
//!
//! Sites are stored by row `k` and column `c`, with axial lattice coordinate
//! `j = c − ⌊k/2⌋`, so the site sits at `j + k e^{iπ/3}`. Consecutive rows are
//! offset by half a spacing and the domain is a brick-shaped approximation of
//! the rectangle `[0, cols] × [0, rows·√3/2]`.
//!
//! Marked corners, counterclockwise: `a` top left, `b` bottom left, `c`
//! bottom right, `d` top right. The arcs `[ab]` and `[cd]` are the left and
//! right columns.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::harness::mean_se;
use crate::observables::{cardy, rectangle_cross_ratio};
use crate::rng::{stream, StreamRng};

pub const OPEN_PROBABILITY: f64 = 0.5;

/// Largest number of sites handled by [`crossing_probability_exact`].
pub const ENUMERATION_LIMIT: usize = 20;

const ROW_HEIGHT: f64 = 0.866_025_403_784_438_6;

/// Axial neighbour offsets `(Δj, Δk)` in counterclockwise order.
const DIRS: [(i32, i32); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriDomain {
    pub rows: usize,
    pub cols: usize,
}

impl TriDomain {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Sizing(format!("domain needs positive size, got {rows}x{cols}")));
        }
        if rows > i32::MAX as usize / 4 || cols > i32::MAX as usize / 4 {
            return Err(Error::Sizing("domain too large".into()));
        }
        Ok(Self { rows, cols })
    }

    /// `side` rows and as many columns as give width/height ≈ `aspect`.
    pub fn rectangle(side: usize, aspect: f64) -> Result<Self> {
        if !(aspect > 0.0) || !aspect.is_finite() {
            return domain(format!("aspect must be positive, got {aspect}"));
        }
        let cols = (aspect * side as f64 * ROW_HEIGHT).round().max(1.0) as usize;
        Self::new(side, cols)
    }

    /// Width over height of the covered region, the `[bc]` to `[ab]` ratio.
    pub fn aspect(&self) -> f64 {
        self.cols as f64 / (self.rows as f64 * ROW_HEIGHT)
    }

    /// Cross-ratio of the marked corners in the continuum rectangle.
    pub fn cross_ratio(&self) -> Result<f64> {
        rectangle_cross_ratio(self.aspect())
    }

    pub fn n_sites(&self) -> usize {
        self.rows * self.cols
    }

    fn index(&self, k: usize, c: usize) -> usize {
        k * self.cols + c
    }

    /// Neighbours of site `(k, c)` inside the domain.
    fn neighbours(&self, k: usize, c: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let j = c as i32 - (k as i32).div_euclid(2);
        DIRS.iter().filter_map(move |&(dj, dk)| {
            let (nk, nc) = to_cell(j + dj, k as i32 + dk);
            (nk >= 0 && nk < self.rows as i32 && nc >= 0 && nc < self.cols as i32).then_some((nk as usize, nc as usize))
        })
    }

    /// Colour of an axial site, including the frame of boundary sites: the
    /// columns beside `[ab]` and `[cd]` are open, the rows beyond `[bc]` and
    /// `[da]` closed. `None` is outside the frame.
    fn colour(&self, sites: &[bool], j: i32, k: i32) -> Option<bool> {
        let (k, c) = to_cell(j, k);
        let (rows, cols) = (self.rows as i32, self.cols as i32);
        if k < -1 || k > rows || c < -1 || c > cols {
            return None;
        }
        if k == -1 || k == rows {
            return Some(false);
        }
        if c == -1 || c == cols {
            return Some(true);
        }
        Some(sites[self.index(k as usize, c as usize)])
    }
}

fn to_cell(j: i32, k: i32) -> (i32, i32) {
    (k, j + k.div_euclid(2))
}

/// Site states in row-major order, `true` for open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteConfig {
    pub sites: Vec<bool>,
}

impl SiteConfig {
    pub fn uniform(dom: &TriDomain, open: bool) -> Self {
        Self {
            sites: vec![open; dom.n_sites()],
        }
    }

    /// Configuration whose bit `i` is bit `i` of `index`.
    pub fn from_index(dom: &TriDomain, index: u64) -> Self {
        Self {
            sites: (0..dom.n_sites()).map(|i| index >> i & 1 == 1).collect(),
        }
    }

    pub fn open_fraction(&self) -> f64 {
        self.sites.iter().filter(|&&s| s).count() as f64 / self.sites.len().max(1) as f64
    }
}

/// Each site open independently with probability 1/2.
pub fn sample_with(dom: &TriDomain, rng: &mut StreamRng) -> SiteConfig {
    SiteConfig {
        sites: (0..dom.n_sites()).map(|_| rng.random_bool(OPEN_PROBABILITY)).collect(),
    }
}

pub fn sample_percolation(dom: &TriDomain, seed: u64) -> SiteConfig {
    sample_with(dom, &mut stream(seed, 0))
}

fn check(config: &SiteConfig, dom: &TriDomain) -> Result<()> {
    if config.sites.len() != dom.n_sites() {
        return Err(Error::Sizing(format!(
            "configuration has {} sites, domain {}",
            config.sites.len(),
            dom.n_sites()
        )));
    }
    Ok(())
}

/// Whether an open path joins the left column `[ab]` to the right column
/// `[cd]`.
pub fn has_crossing(config: &SiteConfig, dom: &TriDomain) -> Result<bool> {
    check(config, dom)?;
    let mut seen = vec![false; dom.n_sites()];
    let mut queue = VecDeque::new();
    for k in 0..dom.rows {
        let i = dom.index(k, 0);
        if config.sites[i] {
            seen[i] = true;
            queue.push_back((k, 0));
        }
    }
    while let Some((k, c)) = queue.pop_front() {
        if c + 1 == dom.cols {
            return Ok(true);
        }
        for (nk, nc) in dom.neighbours(k, c) {
            let i = dom.index(nk, nc);
            if config.sites[i] && !seen[i] {
                seen[i] = true;
                queue.push_back((nk, nc));
            }
        }
    }
    Ok(false)
}

/// Corner where an exploration path ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Corner {
    B,
    D,
}

/// Follows the interface from `a` that keeps open sites (and the open
/// column beside `[ab]`) on its right and closed ones on its left. It ends
/// at `d` exactly when there is a left–right crossing.
pub fn exploration_endpoint(config: &SiteConfig, dom: &TriDomain) -> Result<Corner> {
    check(config, dom)?;
    let top = dom.rows as i32;
    // Open frame site beside the top row and the closed frame site up and
    // to its right; the first step looks at the top left site.
    let k = top - 1;
    let mut right = (-1 - k.div_euclid(2), k);
    let mut left = (right.0, top);
    let mut dir = 4;
    let frame = |(j, k): (i32, i32)| {
        let (k, c) = to_cell(j, k);
        k == -1 || k == top || c == -1 || c == dom.cols as i32
    };
    let limit = 6 * (dom.rows + 2) * (dom.cols + 2);
    for _ in 0..limit {
        let (dj, dk) = DIRS[(dir + 1) % 6];
        let next = (left.0 + dj, left.1 + dk);
        let open = dom
            .colour(&config.sites, next.0, next.1)
            .ok_or_else(|| Error::Structural(format!("exploration left the frame at {next:?}")))?;
        if open {
            right = next;
        } else {
            left = next;
        }
        dir = DIRS
            .iter()
            .position(|&d| d == (right.0 - left.0, right.1 - left.1))
            .ok_or_else(|| Error::Structural("exploration lost adjacency".into()))?;
        if frame(left) && frame(right) {
            let (_, c) = to_cell(right.0, right.1);
            return Ok(if c == -1 { Corner::B } else { Corner::D });
        }
    }
    Err(Error::Structural("exploration did not terminate".into()))
}

/// Exact crossing probability by summing over all configurations.
pub fn crossing_probability_exact(dom: &TriDomain) -> Result<f64> {
    let n = dom.n_sites();
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            what: "sites",
            actual: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut hits = 0u64;
    for index in 0..1u64 << n {
        if has_crossing(&SiteConfig::from_index(dom, index), dom)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / (1u64 << n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEstimate {
    pub aspect: f64,
    pub z: f64,
    pub side: usize,
    pub n: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub cardy_value: f64,
}

impl CrossingEstimate {
    pub const CSV_HEADER: &'static str = "aspect,z,side,n,estimate,se,cardy_value";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.aspect, self.z, self.side, self.n, self.estimate, self.std_error, self.cardy_value
        )
    }
}

pub fn write_csv<W: Write>(rows: &[CrossingEstimate], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", CrossingEstimate::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Monte Carlo crossing frequency over `n ≥ 100` independent samples, also
/// checking every sample against the exploration path.
pub fn estimate_crossing(dom: &TriDomain, n: usize, seed: u64) -> Result<CrossingEstimate> {
    if n < 100 {
        return Err(Error::Usage(format!("need at least 100 samples, got {n}")));
    }
    let outcomes = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let config = sample_with(dom, &mut stream(seed, i));
            let crossing = has_crossing(&config, dom)?;
            let explored = exploration_endpoint(&config, dom)? == Corner::D;
            if crossing != explored {
                return Err(Error::Structural(format!("sample {i}: crossing {crossing} but exploration ends elsewhere")));
            }
            Ok(if crossing { 1.0 } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    let (estimate, std_error) = mean_se(&outcomes);
    let z = dom.cross_ratio()?;
    Ok(CrossingEstimate {
        aspect: dom.aspect(),
        z,
        side: dom.rows,
        n,
        estimate,
        std_error,
        cardy_value: cardy(z)?,
    })
}
