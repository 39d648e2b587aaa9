//! Finite-difference derivative growth of eigen-sums on a region.

use serde::Serialize;

use super::SpectralBasis;
use crate::error::{invalid, Error, Result};
use crate::grid::SpatialMask;

/// Highest derivative order supported.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct GrowthRow {
    pub order: usize,
    /// `max_{|α| = order} sup_region |∂^α u|`.
    pub sup: f64,
    /// `sup / (order! ‖a‖)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthTable {
    pub rows: Vec<GrowthRow>,
    pub lambda: f64,
    pub radius: f64,
    /// Fitted `ρ` of the `(ρR)^{−|α|}` factor.
    pub rho: f64,
    /// Envelope constant: `ratio(α) ≤ e^{K√Λ} (ρR)^{−|α|}` for every row.
    pub k: f64,
    pub r_squared: f64,
    /// Least-squares slope and intercept of `log ratio` against order.
    pub slope: f64,
    pub intercept: f64,
}

impl GrowthTable {
    /// `e^{K√Λ}`, the majorant of `sup|u| / ‖a‖`.
    pub fn majorant_factor(&self) -> f64 {
        (self.k * self.lambda.sqrt()).exp()
    }
}

fn d1(f: &dyn Fn(isize) -> f64, h: f64) -> f64 {
    (f(1) - f(-1)) / (2.0 * h)
}

/// Central difference `∂^p` along one axis, as a closure over offsets.
fn derivative_1d(p: usize, f: &dyn Fn(isize) -> f64, h: f64) -> f64 {
    match p {
        0 => f(0),
        1 => d1(f, h),
        _ => {
            let g = |s: isize| (f(s + 1) - 2.0 * f(s) + f(s - 1)) / (h * h);
            derivative_1d(p - 2, &g, h)
        }
    }
}

fn half_width(p: usize) -> usize {
    p.div_ceil(2)
}

pub fn derivative_growth_check(
    basis: &SpectralBasis,
    a: &[f64],
    lambda: f64,
    max_order: usize,
    region: &SpatialMask,
) -> Result<GrowthTable> {
    if max_order > MAX_ORDER {
        return Err(invalid("max_order", format!("at most {MAX_ORDER}, got {max_order}")));
    }
    if max_order < 1 {
        return Err(invalid("max_order", "need at least order 1 for a fit"));
    }
    let k = basis.count_below(lambda);
    if a.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: a.len(),
        });
    }
    let norm = crate::linalg::norm(a);
    if norm == 0.0 {
        return Err(Error::Degenerate("zero coefficient vector".into()));
    }
    let mut padded = a.to_vec();
    padded.resize(basis.len(), 0.0);
    let cells = basis.synthesize_cells(&padded)?;
    let d = basis.domain();
    let (ncx, ncy) = (d.cells_x() as isize, d.cells_y() as isize);
    let w = half_width(max_order) as isize;
    let interior: Vec<usize> = region
        .cells()
        .filter(|&c| {
            let (cx, cy) = d.cell_coords(c);
            let (cx, cy) = (cx as isize, cy as isize);
            cx >= w && cy >= w && cx < ncx - w && cy < ncy - w
        })
        .collect();
    if interior.is_empty() {
        return Err(invalid(
            "region",
            format!("grid too coarse: no region cell admits an order-{max_order} stencil"),
        ));
    }

    let value = |cx: isize, cy: isize, comp: usize| cells[d.cell_index(cx as usize, cy as usize)][comp];
    let mut rows = Vec::with_capacity(max_order + 1);
    let mut factorial = 1.0;
    for order in 0..=max_order {
        if order > 0 {
            factorial *= order as f64;
        }
        let mut sup: f64 = 0.0;
        for px in 0..=order {
            let py = order - px;
            for &c in &interior {
                let (cx, cy) = d.cell_coords(c);
                let (cx, cy) = (cx as isize, cy as isize);
                let mut mag2 = 0.0;
                for comp in 0..2 {
                    let along_y = |sx: isize| {
                        let col = |sy: isize| value(cx + sx, cy + sy, comp);
                        derivative_1d(py, &col, d.hy)
                    };
                    let dv = derivative_1d(px, &along_y, d.hx);
                    mag2 += dv * dv;
                }
                sup = sup.max(mag2.sqrt());
            }
        }
        rows.push(GrowthRow {
            order,
            sup,
            ratio: sup / (factorial * norm),
        });
    }

    let xs: Vec<f64> = rows.iter().map(|r| r.order as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.ratio.max(f64::MIN_POSITIVE).ln()).collect();
    let (intercept, slope, r_squared) = crate::stats::linear_fit(&xs, &ys);
    let envelope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - slope * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let radius = region_radius(region);
    Ok(GrowthTable {
        rows,
        lambda,
        radius,
        rho: (-slope).exp() / radius,
        k: envelope / lambda.sqrt(),
        r_squared,
        slope,
        intercept,
    })
}

/// Largest distance of a marked cell center from the centroid, plus half a cell diagonal.
pub fn region_radius(mask: &SpatialMask) -> f64 {
    let d = mask.domain();
    let n = mask.count().max(1) as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for c in mask.cells() {
        let (x, y) = d.cell_center(c);
        sx += x;
        sy += y;
    }
    let (gx, gy) = (sx / n, sy / n);
    let r = mask
        .cells()
        .map(|c| {
            let (x, y) = d.cell_center(c);
            (x - gx).hypot(y - gy)
        })
        .fold(0.0, f64::max);
    r + 0.5 * d.hx.hypot(d.hy)
}
