//! Rectangular domain, its uniform grid, and cell-union masks.
//!
//! The stream function lives on the `nx × ny` interior nodes of a uniform
//! grid with spacing `hx = lx/(nx+1)`, `hy = ly/(ny+1)`. The grid has
//! `(nx+1) × (ny+1)` cells; measurable sets are unions of cells, time sets
//! are unions of the `nt` uniform time steps on `(0, T)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectDomain {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub t_horizon: f64,
    pub nt: usize,
}

/// Smallest interior node count per axis accepted by the biharmonic stencil.
pub const MIN_NODES: usize = 4;

pub fn build_domain(
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    t_horizon: f64,
    nt: usize,
) -> Result<RectDomain> {
    RectDomain::new(lx, ly, nx, ny, t_horizon, nt)
}

impl RectDomain {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize, t_horizon: f64, nt: usize) -> Result<Self> {
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "side lengths must be positive, got {lx} x {ly}"
            )));
        }
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(Error::InvalidDomain(format!(
                "grid too coarse: {nx} x {ny} interior nodes, need at least {MIN_NODES} per axis"
            )));
        }
        if !(t_horizon > 0.0 && t_horizon.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "time horizon must be positive, got {t_horizon}"
            )));
        }
        if nt < 2 {
            return Err(Error::InvalidDomain(format!(
                "need at least 2 time steps, got {nt}"
            )));
        }
        Ok(Self {
            lx,
            ly,
            nx,
            ny,
            hx: lx / (nx + 1) as f64,
            hy: ly / (ny + 1) as f64,
            t_horizon,
            nt,
        })
    }

    /// Unit square with `n` intervals per side (`n - 1` interior nodes).
    pub fn unit_square(n: usize, t_horizon: f64, nt: usize) -> Result<Self> {
        Self::new(1.0, 1.0, n.saturating_sub(1), n.saturating_sub(1), t_horizon, nt)
    }

    /// Same spatial grid, different time discretization.
    pub fn with_time(&self, t_horizon: f64, nt: usize) -> Result<Self> {
        Self::new(self.lx, self.ly, self.nx, self.ny, t_horizon, nt)
    }

    pub fn n_dof(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cells_x(&self) -> usize {
        self.nx + 1
    }

    pub fn cells_y(&self) -> usize {
        self.ny + 1
    }

    pub fn n_cells(&self) -> usize {
        self.cells_x() * self.cells_y()
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn dt(&self) -> f64 {
        self.t_horizon / self.nt as f64
    }

    pub fn cell_index(&self, cx: usize, cy: usize) -> usize {
        cy * self.cells_x() + cx
    }

    pub fn cell_coords(&self, c: usize) -> (usize, usize) {
        (c % self.cells_x(), c / self.cells_x())
    }

    pub fn cell_center(&self, c: usize) -> (f64, f64) {
        let (cx, cy) = self.cell_coords(c);
        ((cx as f64 + 0.5) * self.hx, (cy as f64 + 0.5) * self.hy)
    }

    /// Time interval `(t_k, t_{k+1})` of step `k`.
    pub fn step_interval(&self, k: usize) -> (f64, f64) {
        let dt = self.dt();
        (k as f64 * dt, (k + 1) as f64 * dt)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.lx).contains(&x) && (0.0..=self.ly).contains(&y)
    }

    fn same_grid(&self, other: &RectDomain) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }
}

/// A union of grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMask {
    domain: RectDomain,
    indicator: Vec<bool>,
    count: usize,
}

/// Whether the enlarged ball `B_{4R}` fits in the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallContainment {
    Contained,
    Exceeds,
}

impl SpatialMask {
    pub fn from_indicator(domain: RectDomain, indicator: Vec<bool>) -> Result<Self> {
        if indicator.len() != domain.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: domain.n_cells(),
                got: indicator.len(),
            });
        }
        let count = indicator.iter().filter(|&&b| b).count();
        Ok(Self {
            domain,
            indicator,
            count,
        })
    }

    pub fn from_fn(domain: RectDomain, mut f: impl FnMut(f64, f64) -> bool) -> Self {
        let indicator = (0..domain.n_cells())
            .map(|c| {
                let (x, y) = domain.cell_center(c);
                f(x, y)
            })
            .collect();
        Self::from_indicator(domain, indicator).expect("length matches by construction")
    }

    pub fn full(domain: RectDomain) -> Self {
        Self::from_indicator(domain, vec![true; domain.n_cells()]).expect("full mask")
    }

    /// Cells whose centers lie in the open ball. Warns when `B_{4R}` leaves
    /// the rectangle but still builds the mask.
    pub fn ball(domain: RectDomain, center: (f64, f64), radius: f64) -> Result<(Self, BallContainment)> {
        if !domain.contains(center.0, center.1) {
            return Err(Error::OutsideDomain {
                x: center.0,
                y: center.1,
            });
        }
        if !(radius > 0.0) {
            return Err(invalid("radius", format!("must be positive, got {radius}")));
        }
        let r2 = radius * radius;
        let mask = Self::from_fn(domain, |x, y| {
            let (dx, dy) = (x - center.0, y - center.1);
            dx * dx + dy * dy < r2
        });
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        let big = 4.0 * radius;
        let containment = if center.0 - big >= 0.0
            && center.0 + big <= domain.lx
            && center.1 - big >= 0.0
            && center.1 + big <= domain.ly
        {
            BallContainment::Contained
        } else {
            log::warn!(
                "ball of radius 4*{radius} around ({}, {}) leaves the domain",
                center.0,
                center.1
            );
            BallContainment::Exceeds
        };
        Ok((mask, containment))
    }

    /// Exactly `max(1, round(fraction * n_cells))` cells chosen uniformly.
    pub fn random(domain: RectDomain, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(invalid("fraction", format!("must lie in (0, 1), got {fraction}")));
        }
        let n = domain.n_cells();
        let count = ((fraction * n as f64).round() as usize).clamp(1, n);
        let mut rng = crate::rng::stream(seed, crate::rng::streams::MASK);
        let mut indicator = vec![false; n];
        for c in rand::seq::index::sample(&mut rng, n, count) {
            indicator[c] = true;
        }
        Self::from_indicator(domain, indicator)
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    pub fn contains_cell(&self, c: usize) -> bool {
        self.indicator[c]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn measure(&self) -> f64 {
        self.count as f64 * self.domain.hx * self.domain.hy
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.indicator
            .iter()
            .enumerate()
            .filter_map(|(c, &b)| b.then_some(c))
    }

    pub fn is_subset_of(&self, other: &SpatialMask) -> bool {
        self.indicator
            .iter()
            .zip(&other.indicator)
            .all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &SpatialMask) -> Result<SpatialMask> {
        self.check_grid(other)?;
        let ind = self
            .indicator
            .iter()
            .zip(&other.indicator)
            .map(|(&a, &b)| a || b)
            .collect();
        Self::from_indicator(self.domain, ind)
    }

    pub fn intersection(&self, other: &SpatialMask) -> Result<SpatialMask> {
        self.check_grid(other)?;
        let ind = self
            .indicator
            .iter()
            .zip(&other.indicator)
            .map(|(&a, &b)| a && b)
            .collect();
        Self::from_indicator(self.domain, ind)
    }

    /// Image of the mask under a permutation of cells.
    pub fn map_cells(&self, perm: impl Fn(usize) -> usize) -> Result<SpatialMask> {
        let mut ind = vec![false; self.indicator.len()];
        for c in self.cells() {
            ind[perm(c)] = true;
        }
        Self::from_indicator(self.domain, ind)
    }

    fn check_grid(&self, other: &SpatialMask) -> Result<()> {
        if !self.domain.same_grid(&other.domain) {
            return Err(Error::DimensionMismatch {
                expected: self.domain.n_cells(),
                got: other.domain.n_cells(),
            });
        }
        Ok(())
    }
}

/// A union of (cell, time-step) entries of `Ω × (0, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeMask {
    domain: RectDomain,
    /// Step-major: entry `k * n_cells + c`.
    indicator: Vec<bool>,
    count: usize,
}

impl SpaceTimeMask {
    pub fn from_indicator(domain: RectDomain, indicator: Vec<bool>) -> Result<Self> {
        let expected = domain.n_cells() * domain.nt;
        if indicator.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: indicator.len(),
            });
        }
        let count = indicator.iter().filter(|&&b| b).count();
        Ok(Self {
            domain,
            indicator,
            count,
        })
    }

    /// `f(x, y, t_mid)` decides membership of each cell/step entry.
    pub fn from_fn(domain: RectDomain, mut f: impl FnMut(f64, f64, f64) -> bool) -> Self {
        let nc = domain.n_cells();
        let mut ind = Vec::with_capacity(nc * domain.nt);
        for k in 0..domain.nt {
            let (t0, t1) = domain.step_interval(k);
            let tm = 0.5 * (t0 + t1);
            for c in 0..nc {
                let (x, y) = domain.cell_center(c);
                ind.push(f(x, y, tm));
            }
        }
        Self::from_indicator(domain, ind).expect("length matches by construction")
    }

    /// `ω × {steps k : in_time(k)}`.
    pub fn cylinder_steps(spatial: &SpatialMask, in_time: impl Fn(usize) -> bool) -> Self {
        let d = *spatial.domain();
        let nc = d.n_cells();
        let mut ind = vec![false; nc * d.nt];
        for k in (0..d.nt).filter(|&k| in_time(k)) {
            for c in spatial.cells() {
                ind[k * nc + c] = true;
            }
        }
        Self::from_indicator(d, ind).expect("length matches by construction")
    }

    /// `ω × (0, T)`.
    pub fn cylinder(spatial: &SpatialMask) -> Self {
        Self::cylinder_steps(spatial, |_| true)
    }

    /// `ω × (t0, t1)`, keeping steps whose midpoint lies in the interval.
    pub fn cylinder_between(spatial: &SpatialMask, t0: f64, t1: f64) -> Self {
        let d = *spatial.domain();
        Self::cylinder_steps(spatial, |k| {
            let (a, b) = d.step_interval(k);
            let m = 0.5 * (a + b);
            m > t0 && m < t1
        })
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, step: usize, cell: usize) -> bool {
        self.indicator[step * self.domain.n_cells() + cell]
    }

    pub fn measure(&self) -> f64 {
        self.count as f64 * self.domain.hx * self.domain.hy * self.domain.dt()
    }

    pub fn slice(&self, step: usize) -> SpatialMask {
        let nc = self.domain.n_cells();
        SpatialMask::from_indicator(
            self.domain,
            self.indicator[step * nc..(step + 1) * nc].to_vec(),
        )
        .expect("slice length")
    }

    pub fn slice_measure(&self, step: usize) -> f64 {
        let nc = self.domain.n_cells();
        let n = self.indicator[step * nc..(step + 1) * nc]
            .iter()
            .filter(|&&b| b)
            .count();
        n as f64 * self.domain.hx * self.domain.hy
    }

    /// Marked `(step, cell)` pairs in step-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nc = self.domain.n_cells();
        self.indicator
            .iter()
            .enumerate()
            .filter_map(move |(e, &b)| b.then_some((e / nc, e % nc)))
    }

    pub fn is_subset_of(&self, other: &SpaceTimeMask) -> bool {
        self.indicator
            .iter()
            .zip(&other.indicator)
            .all(|(&a, &b)| !a || b)
    }

    /// Projection onto space: cells marked at some step.
    pub fn spatial_support(&self) -> SpatialMask {
        let nc = self.domain.n_cells();
        let mut ind = vec![false; nc];
        for (_, c) in self.entries() {
            ind[c] = true;
        }
        SpatialMask::from_indicator(self.domain, ind).expect("support length")
    }
}

/// Time steps whose slice is at least half the average slice measure.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodTimeSet {
    domain: RectDomain,
    members: Vec<bool>,
    threshold: f64,
    slice_measures: Vec<f64>,
}

pub fn good_time_set(mask: &SpaceTimeMask) -> Result<GoodTimeSet> {
    GoodTimeSet::new(mask)
}

impl GoodTimeSet {
    pub fn new(mask: &SpaceTimeMask) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        let d = *mask.domain();
        let threshold = mask.measure() / (2.0 * d.t_horizon);
        let slice_measures: Vec<f64> = (0..d.nt).map(|k| mask.slice_measure(k)).collect();
        let members = slice_measures.iter().map(|&m| m >= threshold).collect();
        Ok(Self {
            domain: d,
            members,
            threshold,
            slice_measures,
        })
    }

    /// Time set given directly as member steps (slice measures unknown).
    pub fn from_members(domain: RectDomain, members: Vec<bool>) -> Result<Self> {
        if members.len() != domain.nt {
            return Err(Error::DimensionMismatch {
                expected: domain.nt,
                got: members.len(),
            });
        }
        if !members.iter().any(|&b| b) {
            return Err(Error::EmptyMask);
        }
        Ok(Self {
            domain,
            slice_measures: vec![f64::NAN; members.len()],
            members,
            threshold: f64::NAN,
        })
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    pub fn contains_step(&self, k: usize) -> bool {
        self.members[k]
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn slice_measures(&self) -> &[f64] {
        &self.slice_measures
    }

    pub fn measure(&self) -> f64 {
        self.members.iter().filter(|&&b| b).count() as f64 * self.domain.dt()
    }

    /// `|E ∩ (a, b)|`, exact for the step-union representation.
    pub fn measure_in(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let dt = self.domain.dt();
        let k0 = ((a / dt).floor().max(0.0) as usize).min(self.domain.nt);
        let k1 = ((b / dt).ceil().max(0.0) as usize).min(self.domain.nt);
        (k0..k1)
            .filter(|&k| self.members[k])
            .map(|k| {
                let (t0, t1) = self.domain.step_interval(k);
                (t1.min(b) - t0.max(a)).max(0.0)
            })
            .sum()
    }

    /// Overlaps `(max(a, t_k), min(b, t_{k+1}))` of `(a, b)` with member steps.
    pub fn pieces_in(&self, a: f64, b: f64) -> Vec<(usize, f64, f64)> {
        if b <= a {
            return Vec::new();
        }
        let dt = self.domain.dt();
        let k0 = ((a / dt).floor().max(0.0) as usize).min(self.domain.nt);
        let k1 = ((b / dt).ceil().max(0.0) as usize).min(self.domain.nt);
        (k0..k1)
            .filter(|&k| self.members[k])
            .filter_map(|k| {
                let (t0, t1) = self.domain.step_interval(k);
                let (lo, hi) = (t0.max(a), t1.min(b));
                (hi > lo).then_some((k, lo, hi))
            })
            .collect()
    }
}

/// Text exchange form of a mask: run-length encoded indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDocument {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub lx: f64,
    pub ly: f64,
    pub t_horizon: f64,
    /// Runs `bit:length` separated by commas, in cell-major then step order.
    pub indicator: String,
    pub measure: f64,
}

pub fn encode_runs(bits: &[bool]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < bits.len() {
        let b = bits[i];
        let start = i;
        while i < bits.len() && bits[i] == b {
            i += 1;
        }
        if !out.is_empty() {
            out.push(',');
        }
        write!(out, "{}:{}", u8::from(b), i - start).expect("write to string");
    }
    out
}

pub fn decode_runs(s: &str) -> Result<Vec<bool>> {
    let mut bits = Vec::new();
    if s.is_empty() {
        return Ok(bits);
    }
    for tok in s.split(',') {
        let (b, n) = tok
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("bad run `{tok}`")))?;
        let bit = match b {
            "0" => false,
            "1" => true,
            _ => return Err(Error::Format(format!("bad bit `{b}`"))),
        };
        let n: usize = n
            .parse()
            .map_err(|_| Error::Format(format!("bad run length `{n}`")))?;
        bits.extend(std::iter::repeat_n(bit, n));
    }
    Ok(bits)
}

impl MaskDocument {
    pub fn from_spatial(mask: &SpatialMask) -> Self {
        let d = mask.domain();
        Self {
            nx: d.nx,
            ny: d.ny,
            nt: 1,
            lx: d.lx,
            ly: d.ly,
            t_horizon: d.t_horizon,
            indicator: encode_runs(mask.indicator()),
            measure: mask.measure(),
        }
    }

    pub fn from_space_time(mask: &SpaceTimeMask) -> Self {
        let d = mask.domain();
        Self {
            nx: d.nx,
            ny: d.ny,
            nt: d.nt,
            lx: d.lx,
            ly: d.ly,
            t_horizon: d.t_horizon,
            indicator: encode_runs(mask.indicator()),
            measure: mask.measure(),
        }
    }

    fn check_measure(&self, measure: f64) -> Result<()> {
        if measure != self.measure {
            return Err(Error::Format(format!(
                "stored measure {} does not match indicator measure {measure}",
                self.measure
            )));
        }
        Ok(())
    }

    /// Spatial mask; `domain` supplies the time discretization.
    pub fn to_spatial(&self, nt: usize) -> Result<SpatialMask> {
        if self.nt != 1 {
            return Err(Error::Format(format!("expected a spatial mask, nt = {}", self.nt)));
        }
        let d = RectDomain::new(self.lx, self.ly, self.nx, self.ny, self.t_horizon, nt.max(2))?;
        let m = SpatialMask::from_indicator(d, decode_runs(&self.indicator)?)?;
        self.check_measure(m.measure())?;
        Ok(m)
    }

    pub fn to_space_time(&self) -> Result<SpaceTimeMask> {
        let d = RectDomain::new(self.lx, self.ly, self.nx, self.ny, self.t_horizon, self.nt)?;
        let m = SpaceTimeMask::from_indicator(d, decode_runs(&self.indicator)?)?;
        self.check_measure(m.measure())?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_square_and_anisotropic() {
        let d = build_domain(1.0, 1.0, 15, 15, 1.0, 64).unwrap();
        assert_eq!(d.hx, 1.0 / 16.0);
        assert_eq!(d.hy, 1.0 / 16.0);
        let d = build_domain(2.0, 1.0, 31, 15, 0.5, 32).unwrap();
        assert_eq!(d.hx, 1.0 / 16.0);
        assert_eq!(d.hy, 1.0 / 16.0);
    }

    #[test]
    fn rejects_coarse_or_nonpositive() {
        assert!(build_domain(1.0, 1.0, 3, 3, 1.0, 2).is_err());
        assert!(build_domain(0.0, 1.0, 8, 8, 1.0, 2).is_err());
        assert!(build_domain(1.0, 1.0, 8, 8, -1.0, 2).is_err());
        assert!(build_domain(1.0, 1.0, 8, 8, 1.0, 1).is_err());
    }

    #[test]
    fn cell_centers_reproducible() {
        let d = build_domain(1.0, 1.0, 15, 15, 1.0, 4).unwrap();
        let c = d.cell_index(3, 7);
        assert_eq!(d.cell_center(c), (3.5 / 16.0, 7.5 / 16.0));
        assert_eq!(d.cell_coords(c), (3, 7));
    }

    #[test]
    fn ball_area_converges() {
        let area = std::f64::consts::PI * 0.01;
        let mut errs = Vec::new();
        for n in [63, 127, 255] {
            let d = build_domain(1.0, 1.0, n, n, 1.0, 2).unwrap();
            let (m, fit) = SpatialMask::ball(d, (0.5, 0.5), 0.1).unwrap();
            assert_eq!(fit, BallContainment::Contained);
            errs.push((m.measure() - area).abs() / area);
        }
        assert!(errs[0] < 0.1, "{errs:?}");
        // cell-center rule: error shrinks under refinement
        assert!(errs[2] < errs[0], "{errs:?}");
    }

    #[test]
    fn ball_edge_cases() {
        let d = build_domain(1.0, 1.0, 15, 15, 1.0, 2).unwrap();
        assert!(matches!(
            SpatialMask::ball(d, (0.5, 0.5), 0.01),
            Err(Error::EmptyMask)
        ));
        let (m, fit) = SpatialMask::ball(d, (0.5, 0.5), 1.0).unwrap();
        assert_eq!(m.count(), d.n_cells());
        assert_eq!(fit, BallContainment::Exceeds);
        assert!(SpatialMask::ball(d, (1.5, 0.5), 0.1).is_err());
        let (_, fit) = SpatialMask::ball(d, (0.5, 0.5), 0.1).unwrap();
        assert_eq!(fit, BallContainment::Contained);
    }

    #[test]
    fn random_mask_counts() {
        let d = build_domain(1.0, 1.0, 15, 15, 1.0, 2).unwrap();
        let m = SpatialMask::random(d, 0.5, 7).unwrap();
        assert_eq!(m.count(), 128);
        assert_eq!(m, SpatialMask::random(d, 0.5, 7).unwrap());
        assert_eq!(SpatialMask::random(d, 1.0 / 256.0, 3).unwrap().count(), 1);
        assert!(SpatialMask::random(d, 1.0, 3).is_err());
        assert!(SpatialMask::random(d, 0.0, 3).is_err());
        assert_eq!(m.measure(), 128.0 * d.hx * d.hy);
    }

    #[test]
    fn good_time_set_cases() {
        let d = build_domain(1.0, 1.0, 7, 7, 1.0, 16).unwrap();
        let (ball, _) = SpatialMask::ball(d, (0.5, 0.5), 0.3).unwrap();
        let cyl = SpaceTimeMask::cylinder(&ball);
        let e = good_time_set(&cyl).unwrap();
        assert!(e.members().iter().all(|&b| b));
        assert_eq!(cyl.slice(3), ball);

        let late = SpaceTimeMask::cylinder_between(&ball, 0.5, 1.0);
        let e = good_time_set(&late).unwrap();
        for k in 0..8 {
            assert!(!e.contains_step(k));
        }

        // alternating halves of the ball, equal slice areas
        let left = ball.intersection(&SpatialMask::from_fn(d, |x, _| x < 0.5)).unwrap();
        let right = ball.intersection(&SpatialMask::from_fn(d, |x, _| x > 0.5)).unwrap();
        assert_eq!(left.count(), right.count());
        let nc = d.n_cells();
        let mut ind = vec![false; nc * d.nt];
        for k in 0..d.nt {
            let s = if k % 2 == 0 { &left } else { &right };
            for c in s.cells() {
                ind[k * nc + c] = true;
            }
        }
        let m = SpaceTimeMask::from_indicator(d, ind).unwrap();
        let e = good_time_set(&m).unwrap();
        assert!((e.slice_measures()[0] - 2.0 * e.threshold()).abs() < 1e-15);
        assert!(e.members().iter().all(|&b| b));

        assert!(good_time_set(&SpaceTimeMask::from_fn(d, |_, _, _| false)).is_err());
    }

    #[test]
    fn measure_in_partial_steps() {
        let d = build_domain(1.0, 1.0, 7, 7, 1.0, 4).unwrap();
        let e = GoodTimeSet::from_members(d, vec![true, false, true, true]).unwrap();
        assert!((e.measure_in(0.1, 0.6) - (0.15 + 0.1)).abs() < 1e-15);
        assert!((e.measure() - 0.75).abs() < 1e-15);
        assert_eq!(e.pieces_in(0.1, 0.6).len(), 2);
    }

    #[test]
    fn runs_roundtrip_edge() {
        assert_eq!(decode_runs(&encode_runs(&[])).unwrap(), Vec::<bool>::new());
        let bits = vec![true, true, false, true];
        assert_eq!(encode_runs(&bits), "1:2,0:1,1:1");
        assert!(decode_runs("2:3").is_err());
    }
}
