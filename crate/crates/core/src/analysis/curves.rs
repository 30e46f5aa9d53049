use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum XKind {
    #[default]
    Round,
    /// Cumulative annotation cost.
    Cost,
}

/// Performance as a function of rounds or cost; `x` strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub x_kind: XKind,
    points: Vec<(f64, f64)>,
}

impl LearningCurve {
    pub fn new(x_kind: XKind, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.iter().any(|(x, y)| !x.is_finite() || y.is_nan()) {
            return Err(Error::param("learning curve has non-finite coordinates"));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::param("learning curve x values must be strictly increasing"));
        }
        Ok(LearningCurve { x_kind, points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pointwise mean and sample standard deviation over several curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub x_kind: XKind,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    /// `n - 1` denominator; 0 for a single curve.
    pub std: Vec<f64>,
    pub n_curves: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate_columns(x_kind: XKind, grid: Vec<f64>, columns: Vec<Vec<f64>>) -> AggregateCurve {
    let n_curves = columns.len();
    let (mean, std) = (0..grid.len())
        .map(|j| mean_std(&columns.iter().map(|c| c[j]).collect::<Vec<_>>()))
        .unzip();
    AggregateCurve {
        x_kind,
        grid,
        mean,
        std,
        n_curves,
    }
}

/// Curves sharing one grid, e.g. the same round numbers.
pub fn aggregate_aligned(curves: &[LearningCurve]) -> Result<AggregateCurve> {
    let first = curves.first().ok_or_else(|| Error::param("no curves to aggregate"))?;
    let grid: Vec<f64> = first.points.iter().map(|p| p.0).collect();
    for c in curves {
        if c.points.len() != grid.len() || c.points.iter().zip(&grid).any(|(p, &g)| p.0 != g) {
            return Err(Error::param("curves do not share a common grid"));
        }
    }
    let columns = curves.iter().map(|c| c.points.iter().map(|p| p.1).collect()).collect();
    Ok(aggregate_columns(first.x_kind, grid, columns))
}

/// Piecewise-linear value of `curve` at `x`; exact at knots, `None` outside
/// the curve's range.
pub fn interpolate(curve: &LearningCurve, x: f64) -> Option<f64> {
    let pts = &curve.points;
    let (first, last) = (pts.first()?, pts.last()?);
    if x < first.0 || x > last.0 {
        return None;
    }
    match pts.binary_search_by(|p| p.0.total_cmp(&x)) {
        Ok(i) => Some(pts[i].1),
        Err(i) => {
            let (x0, y0) = pts[i - 1];
            let (x1, y1) = pts[i];
            let t = (x - x0) / (x1 - x0);
            // Clamp so rounding never overshoots the segment's end values.
            Some((y0 + (y1 - y0) * t).clamp(y0.min(y1), y0.max(y1)))
        }
    }
}

/// Resamples unaligned curves on `grid_size` evenly spaced points of the x
/// range they all cover, then aggregates.
pub fn interpolate_cost_curves(curves: &[LearningCurve], grid_size: usize) -> Result<AggregateCurve> {
    if curves.is_empty() {
        return Err(Error::param("no curves to aggregate"));
    }
    if grid_size < 2 {
        return Err(Error::param("grid needs at least 2 points"));
    }
    if curves.iter().any(|c| c.points.len() < 2) {
        return Err(Error::param("interpolation needs at least 2 points per curve"));
    }
    let lo = curves.iter().map(|c| c.points[0].0).fold(f64::NEG_INFINITY, f64::max);
    let hi = curves
        .iter()
        .map(|c| c.points[c.points.len() - 1].0)
        .fold(f64::INFINITY, f64::min);
    if lo > hi {
        return Err(Error::param(format!(
            "curves share no x range (overlap [{lo}, {hi}] is empty)"
        )));
    }
    let grid: Vec<f64> = if lo == hi {
        vec![lo]
    } else {
        let step = (hi - lo) / (grid_size - 1) as f64;
        (0..grid_size)
            .map(|i| if i + 1 == grid_size { hi } else { lo + step * i as f64 })
            .collect()
    };
    let columns = curves
        .iter()
        .map(|c| {
            grid.iter()
                .map(|&x| interpolate(c, x).expect("grid inside every curve"))
                .collect()
        })
        .collect();
    Ok(aggregate_columns(curves[0].x_kind, grid, columns))
}
