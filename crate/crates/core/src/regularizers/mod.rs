//! Loss terms over per-pixel probabilities, each returned with its gradient.
//!
//! All functions take a row-major prediction `y` and (where relevant) a target
//! `t` of the same [`GridShape`]. Values are scalars; gradients are
//! `d value / d y` with one entry per pixel.

mod euler;

pub use euler::{ec_regularizer, euler_characteristic_hard, euler_characteristic_soft, EcDirection};

use crate::error::{check_len, Error, Result};
use crate::grid_graph::{
    build_grid_edges, laplacian_from_edges, laplacian_matvec, masked_subgraph, Connectivity,
    EdgeList, GridShape,
};

/// A scalar loss and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl LossGrad {
    pub fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![0.0; n],
        }
    }

    fn scaled(mut self, s: f64) -> Self {
        self.value *= s;
        self.grad.iter_mut().for_each(|g| *g *= s);
        self
    }
}

/// How a regularizer sum is scaled before weighting by lambda.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalize {
    /// Raw sums.
    None,
    /// Divide by the number of candidate edges of the full grid graph.
    #[default]
    PerEdge,
    /// Divide by the number of pixels.
    PerPixel,
}

impl std::str::FromStr for Normalize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Normalize::None),
            "per_edge" | "peredge" | "edge" => Ok(Normalize::PerEdge),
            "per_pixel" | "perpixel" | "pixel" => Ok(Normalize::PerPixel),
            other => Err(Error::Config(format!("unknown normalization '{other}'"))),
        }
    }
}

impl std::fmt::Display for Normalize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalize::None => "none",
            Normalize::PerEdge => "per_edge",
            Normalize::PerPixel => "per_pixel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerConfig {
    /// Weight of the regularizer in the combined objective.
    pub lambda: f64,
    /// Neighborhood of the smoothing and neighbor-difference graphs. The Euler
    /// characteristic always uses its own triangulated 8-neighborhood.
    pub connectivity: Connectivity,
    pub normalize: Normalize,
    /// Targets at or above this value are foreground.
    pub fg_threshold: f64,
    /// Predictions are clamped to `[clamp_eps, 1 - clamp_eps]` inside BCE.
    pub clamp_eps: f64,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            connectivity: Connectivity::N4,
            normalize: Normalize::PerEdge,
            fg_threshold: 0.5,
            clamp_eps: 1e-7,
        }
    }
}

impl RegularizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.fg_threshold > 0.0 && self.fg_threshold < 1.0) {
            return Err(Error::Config(format!(
                "fg_threshold must lie in (0, 1), got {}",
                self.fg_threshold
            )));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::Config(format!(
                "clamp_eps must lie in (0, 0.5), got {}",
                self.clamp_eps
            )));
        }
        Ok(())
    }

    fn divisor(&self, shape: GridShape, edge_count: usize) -> f64 {
        match self.normalize {
            Normalize::None => 1.0,
            Normalize::PerEdge => edge_count.max(1) as f64,
            Normalize::PerPixel => shape.len() as f64,
        }
    }
}

fn check_pair(shape: GridShape, y: &[f64], t: &[f64]) -> Result<()> {
    check_len(shape.len(), y.len())?;
    check_len(shape.len(), t.len())
}

pub(crate) fn check_unit_interval(y: &[f64], what: &str) -> Result<()> {
    match y.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::InvalidInput(format!(
            "{what} must lie in [0, 1], got {} at pixel {i}",
            y[i]
        ))),
        None => Ok(()),
    }
}

/// Similarity weights `1 - |t_i - t_j|` for every edge.
pub fn region_similarity_weights(t: &[f64], edges: &EdgeList) -> Result<Vec<f64>> {
    check_len(edges.shape().len(), t.len())?;
    Ok(edges
        .edges()
        .iter()
        .map(|&(i, j)| (1.0 - (t[i] - t[j]).abs()).clamp(0.0, 1.0))
        .collect())
}

/// Graph-based smoothing: `y^T (L_F + L_B) y`, where `L_F` and `L_B` are the
/// similarity-weighted Laplacians of the grid restricted to the target's
/// foreground and background pixels.
pub fn gbs_value_grad(
    shape: GridShape,
    y: &[f64],
    t: &[f64],
    cfg: &RegularizerConfig,
) -> Result<LossGrad> {
    check_pair(shape, y, t)?;
    let grid = build_grid_edges(shape, cfg.connectivity);
    let foreground: Vec<bool> = t.iter().map(|&v| v >= cfg.fg_threshold).collect();
    let background: Vec<bool> = foreground.iter().map(|f| !f).collect();

    let mut ly = vec![0.0; shape.len()];
    for member in [&foreground, &background] {
        let region = masked_subgraph(&grid, member)?;
        let beta = region_similarity_weights(t, &region)?;
        let region = region.with_weights(beta)?;
        let lap = laplacian_from_edges(&region);
        for (acc, v) in ly.iter_mut().zip(laplacian_matvec(&lap, y)?) {
            *acc += v;
        }
    }
    let value = y.iter().zip(&ly).map(|(a, b)| a * b).sum();
    let grad = ly.iter().map(|v| 2.0 * v).collect();
    Ok(LossGrad { value, grad }.scaled(1.0 / cfg.divisor(shape, grid.len())))
}

/// Neighbor-difference Laplacian regularizer: `(t - y)^T L (t - y)` with the
/// unit-weight grid Laplacian, i.e. the squared mismatch of neighbor
/// differences summed over edges.
pub fn glrdn_value_grad(
    shape: GridShape,
    y: &[f64],
    t: &[f64],
    cfg: &RegularizerConfig,
) -> Result<LossGrad> {
    check_pair(shape, y, t)?;
    let grid = build_grid_edges(shape, cfg.connectivity);
    let lap = laplacian_from_edges(&grid);
    let residual: Vec<f64> = y.iter().zip(t).map(|(a, b)| a - b).collect();
    let lr = laplacian_matvec(&lap, &residual)?;
    let value = residual.iter().zip(&lr).map(|(a, b)| a * b).sum();
    let grad = lr.iter().map(|v| 2.0 * v).collect();
    Ok(LossGrad { value, grad }.scaled(1.0 / cfg.divisor(shape, grid.len())))
}

/// Pixel-mean binary cross-entropy, `-(1/N) sum t ln y + (1 - t) ln(1 - y)`.
///
/// `y` is clamped to `[eps, 1 - eps]`; the gradient is zero where the clamp
/// is active.
pub fn bce_value_grad(y: &[f64], t: &[f64], cfg: &RegularizerConfig) -> Result<LossGrad> {
    check_len(y.len(), t.len())?;
    if y.is_empty() {
        return Err(Error::InvalidInput("empty prediction".into()));
    }
    let eps = cfg.clamp_eps;
    let n = y.len() as f64;
    let mut value = 0.0;
    let grad = y
        .iter()
        .zip(t)
        .map(|(&yi, &ti)| {
            let yc = yi.clamp(eps, 1.0 - eps);
            value -= ti * yc.ln() + (1.0 - ti) * (1.0 - yc).ln();
            if yi < eps || yi > 1.0 - eps {
                0.0
            } else {
                (yc - ti) / (yc * (1.0 - yc)) / n
            }
        })
        .collect();
    Ok(LossGrad {
        value: value / n,
        grad,
    })
}

/// Which regularizer accompanies the cross-entropy term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ObjectiveKind {
    /// Cross-entropy alone.
    #[default]
    Baseline,
    /// Cross-entropy plus graph-based smoothing.
    Gbs,
    /// Cross-entropy plus the neighbor-difference Laplacian.
    Glrdn,
    /// Cross-entropy plus the Euler-characteristic regularizer.
    Ec,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 4] = [
        ObjectiveKind::Baseline,
        ObjectiveKind::Gbs,
        ObjectiveKind::Glrdn,
        ObjectiveKind::Ec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Baseline => "baseline",
            ObjectiveKind::Gbs => "o1",
            ObjectiveKind::Glrdn => "o2",
            ObjectiveKind::Ec => "o3",
        }
    }
}

impl std::fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "bce" => Ok(ObjectiveKind::Baseline),
            "o1" | "gbs" => Ok(ObjectiveKind::Gbs),
            "o2" | "glrdn" => Ok(ObjectiveKind::Glrdn),
            "o3" | "ec" => Ok(ObjectiveKind::Ec),
            other => Err(Error::Config(format!("unknown objective '{other}'"))),
        }
    }
}

/// An objective evaluation broken into its terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveTerms {
    pub total: LossGrad,
    pub bce: f64,
    /// Normalized regularizer value before multiplication by lambda.
    pub regularizer: f64,
}

/// The regularizer selected by `kind`, normalized per `cfg.normalize`.
pub fn regularizer_value_grad(
    shape: GridShape,
    y: &[f64],
    t: &[f64],
    kind: ObjectiveKind,
    cfg: &RegularizerConfig,
) -> Result<LossGrad> {
    match kind {
        ObjectiveKind::Baseline => {
            check_pair(shape, y, t)?;
            Ok(LossGrad::zero(shape.len()))
        }
        ObjectiveKind::Gbs => gbs_value_grad(shape, y, t, cfg),
        ObjectiveKind::Glrdn => glrdn_value_grad(shape, y, t, cfg),
        ObjectiveKind::Ec => {
            check_pair(shape, y, t)?;
            let ec = ec_regularizer(shape, y)?;
            Ok(ec.scaled(1.0 / cfg.divisor(shape, euler::complex_edge_count(shape))))
        }
    }
}

pub fn objective_terms(
    shape: GridShape,
    y: &[f64],
    t: &[f64],
    kind: ObjectiveKind,
    cfg: &RegularizerConfig,
) -> Result<ObjectiveTerms> {
    cfg.validate()?;
    check_pair(shape, y, t)?;
    let mut total = bce_value_grad(y, t, cfg)?;
    let bce = total.value;
    let reg = regularizer_value_grad(shape, y, t, kind, cfg)?;
    if cfg.lambda != 0.0 {
        total.value += cfg.lambda * reg.value;
        for (g, r) in total.grad.iter_mut().zip(&reg.grad) {
            *g += cfg.lambda * r;
        }
    }
    Ok(ObjectiveTerms {
        total,
        bce,
        regularizer: reg.value,
    })
}

/// `BCE + lambda * R` for the regularizer selected by `kind`.
pub fn objective(
    shape: GridShape,
    y: &[f64],
    t: &[f64],
    kind: ObjectiveKind,
    cfg: &RegularizerConfig,
) -> Result<LossGrad> {
    Ok(objective_terms(shape, y, t, kind, cfg)?.total)
}
