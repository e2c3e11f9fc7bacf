//! L1-regularized least squares by cyclic coordinate descent, with the
//! penalty picked by k-fold cross-validation over a logarithmic grid.
//!
//! Columns are standardized before fitting so the penalty treats features of
//! very different magnitudes alike; the returned weights act on raw inputs.

use crate::error::{Error, Result};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConfig {
    pub folds: usize,
    /// Grid size between `alpha_max` and `alpha_max * grid_ratio`.
    pub n_alphas: usize,
    pub grid_ratio: f64,
    pub max_sweeps: usize,
    /// Stop once the largest coefficient update falls below this.
    pub tolerance: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            folds: 5,
            n_alphas: 50,
            grid_ratio: 1e-4,
            max_sweeps: 2000,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l1_strength: f64,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "linear model expects {} features, got {}",
                self.weights.len(),
                x.len()
            )));
        }
        Ok(self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn predict(&self, features: &Table) -> Result<Vec<f64>> {
        features.rows().map(|r| self.predict_row(r)).collect()
    }
}

/// Standardized, centered copy of a design matrix, column-major.
struct Design {
    cols: Vec<Vec<f64>>,
    /// Original column index of each retained column.
    kept: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    y: Vec<f64>,
    y_mean: f64,
}

impl Design {
    fn new(x: &Table, y: &[f64], rows: &[usize]) -> Result<Design> {
        let n = rows.len() as f64;
        let mut cols = Vec::new();
        let mut kept = Vec::new();
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        for j in 0..x.n_cols() {
            let col: Vec<f64> = rows.iter().map(|&i| x.row(i)[j]).collect();
            let m = col.iter().sum::<f64>() / n;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            if !(s > 1e-12 * (1.0 + m.abs())) {
                continue;
            }
            cols.push(col.iter().map(|v| (v - m) / s).collect());
            kept.push(j);
            mean.push(m);
            scale.push(s);
        }
        if cols.is_empty() {
            return Err(Error::Degenerate("every feature column is constant".into()));
        }
        let yv: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let y_mean = yv.iter().sum::<f64>() / n;
        Ok(Design {
            cols,
            kept,
            mean,
            scale,
            y: yv.iter().map(|v| v - y_mean).collect(),
            y_mean,
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn alpha_max(&self) -> f64 {
        let n = self.n() as f64;
        self.cols
            .iter()
            .map(|c| c.iter().zip(&self.y).map(|(a, b)| a * b).sum::<f64>().abs() / n)
            .fold(0.0, f64::max)
    }

    fn to_model(&self, w: &[f64], n_features: usize, alpha: f64) -> LinearModel {
        let mut weights = vec![0.0; n_features];
        let mut bias = self.y_mean;
        for (c, &j) in self.kept.iter().enumerate() {
            weights[j] = w[c] / self.scale[c];
            bias -= weights[j] * self.mean[c];
        }
        LinearModel {
            weights,
            bias,
            l1_strength: alpha,
        }
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Coordinate descent state for `(1/2n)‖y − Xw‖² + α‖w‖₁` on a
/// standardized design.
pub(crate) struct CoordinateDescent<'a> {
    design: &'a Design,
    pub w: Vec<f64>,
    residual: Vec<f64>,
}

impl<'a> CoordinateDescent<'a> {
    fn new(design: &'a Design) -> Self {
        CoordinateDescent {
            design,
            w: vec![0.0; design.cols.len()],
            residual: design.y.clone(),
        }
    }

    /// One cyclic pass; returns the largest coefficient change.
    pub fn sweep(&mut self, alpha: f64) -> f64 {
        let n = self.design.n() as f64;
        let mut max_delta: f64 = 0.0;
        for (j, col) in self.design.cols.iter().enumerate() {
            // Standardized columns have x_jᵀx_j / n = 1.
            let rho = col.iter().zip(&self.residual).map(|(a, b)| a * b).sum::<f64>() / n + self.w[j];
            let new = soft_threshold(rho, alpha);
            let delta = new - self.w[j];
            if delta != 0.0 {
                for (r, x) in self.residual.iter_mut().zip(col) {
                    *r -= delta * x;
                }
                self.w[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        max_delta
    }

    #[cfg(test)]
    pub fn objective(&self, alpha: f64) -> f64 {
        let n = self.design.n() as f64;
        self.residual.iter().map(|r| r * r).sum::<f64>() / (2.0 * n)
            + alpha * self.w.iter().map(|w| w.abs()).sum::<f64>()
    }

    fn solve(&mut self, alpha: f64, cfg: &LinearConfig) {
        for _ in 0..cfg.max_sweeps {
            if self.sweep(alpha) < cfg.tolerance {
                break;
            }
        }
    }
}

fn alpha_grid(alpha_max: f64, cfg: &LinearConfig) -> Vec<f64> {
    let top = alpha_max.max(1e-12);
    if cfg.n_alphas <= 1 {
        return vec![top];
    }
    let step = cfg.grid_ratio.ln() / (cfg.n_alphas - 1) as f64;
    (0..cfg.n_alphas).map(|i| top * (step * i as f64).exp()).collect()
}

/// Fits at a fixed penalty on the full data.
pub fn fit_lasso(features: &Table, targets: &[f64], alpha: f64, cfg: &LinearConfig) -> Result<LinearModel> {
    check_inputs(features, targets, None)?;
    let rows: Vec<usize> = (0..features.n_rows()).collect();
    let design = Design::new(features, targets, &rows)?;
    let mut cd = CoordinateDescent::new(&design);
    cd.solve(alpha, cfg);
    Ok(design.to_model(&cd.w, features.n_cols(), alpha))
}

/// One grid point of the cross-validation trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvPoint {
    pub alpha: f64,
    pub mean_squared_error: f64,
}

/// Cross-validated squared error along the penalty grid, from the largest
/// penalty down, using contiguous folds.
pub fn lasso_cv_path(features: &Table, targets: &[f64], cfg: &LinearConfig) -> Result<Vec<CvPoint>> {
    check_inputs(features, targets, Some(cfg.folds))?;
    let n = features.n_rows();
    let all: Vec<usize> = (0..n).collect();
    let grid = alpha_grid(Design::new(features, targets, &all)?.alpha_max(), cfg);
    let mut sse = vec![0.0; grid.len()];
    for f in 0..cfg.folds {
        let lo = f * n / cfg.folds;
        let hi = (f + 1) * n / cfg.folds;
        let train: Vec<usize> = (0..n).filter(|i| *i < lo || *i >= hi).collect();
        let design = Design::new(features, targets, &train)?;
        let mut cd = CoordinateDescent::new(&design);
        for (g, &alpha) in grid.iter().enumerate() {
            cd.solve(alpha, cfg);
            let model = design.to_model(&cd.w, features.n_cols(), alpha);
            for (i, t) in targets.iter().enumerate().take(hi).skip(lo) {
                let e = model.predict_row(features.row(i))? - t;
                sse[g] += e * e;
            }
        }
    }
    Ok(grid
        .into_iter()
        .zip(sse)
        .map(|(alpha, s)| CvPoint {
            alpha,
            mean_squared_error: s / n as f64,
        })
        .collect())
}

/// Cross-validates the penalty, then refits on all data.
pub fn train_linear(features: &Table, targets: &[f64], cfg: &LinearConfig) -> Result<LinearModel> {
    let path = lasso_cv_path(features, targets, cfg)?;
    let best = path
        .iter()
        .filter(|p| p.mean_squared_error.is_finite())
        .min_by(|a, b| a.mean_squared_error.total_cmp(&b.mean_squared_error))
        .ok_or_else(|| Error::Diverged("no finite cross-validation error".into()))?;
    let n = features.n_rows();
    let all: Vec<usize> = (0..n).collect();
    let design = Design::new(features, targets, &all)?;
    let mut cd = CoordinateDescent::new(&design);
    // Warm-start down the grid to the chosen penalty.
    for p in &path {
        cd.solve(p.alpha, cfg);
        if p.alpha == best.alpha {
            break;
        }
    }
    Ok(design.to_model(&cd.w, features.n_cols(), best.alpha))
}

fn check_inputs(features: &Table, targets: &[f64], folds: Option<usize>) -> Result<()> {
    let n = features.n_rows();
    if targets.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} targets", targets.len())));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    if let Some(folds) = folds {
        if folds < 2 || n < folds {
            return Err(Error::InvalidArgument(format!("need N ({n}) >= folds ({folds}) >= 2")));
        }
    }
    if targets.iter().chain(features.rows().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear training data"));
    }
    Ok(())
}
