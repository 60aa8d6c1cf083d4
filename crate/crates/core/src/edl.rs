//! Local plane-fitting flow on the time surface.
//!
//! Around each event the same-polarity time surface is locally a plane
//! `t = a·x + b·y + c`. Its gradient `(a, b)` (µs per pixel) points along the
//! motion and its inverse norm is the edge-normal speed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, Micros, SurfacePoint, TimeSurface};
use crate::flow::LocalFlow;
use crate::scalar::{wrap_angle, Scalar};

/// Speeds above this (px/s) are indistinguishable from a simultaneity plane and
/// are rejected. Corresponds to a gradient of 1 µs/px.
pub const MAX_SPEED: f64 = 1e6;

const MICROS_PER_SECOND: f64 = 1e6;

/// Fitted plane `t̂(x, y) = a·x + b·y + c` in µs and pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneParams<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T: Scalar> PlaneParams<T> {
    /// Gradient norm `√(a² + b²)` in µs per pixel.
    pub fn gradient_norm(&self) -> T {
        self.a.hypot(self.b)
    }

    pub fn eval(&self, x: T, y: T) -> T {
        self.a * x + self.b * y + self.c
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FitError {
    #[error("plane fit needs at least 3 points, got {0}")]
    InsufficientEvents(usize),
    #[error("points are collinear in (x, y); plane is not determined")]
    DegenerateGeometry,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{field} = {value} is out of range: {reason}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdlConfig {
    /// Half-width of the fitting window; 2 gives the 5x5 window.
    pub filter_radius: u32,
    pub inlier_fraction: f64,
    pub min_fit_events: usize,
    pub refit_passes: usize,
    pub t_past: Micros,
    pub inlier_threshold_scale: f64,
}

impl Default for EdlConfig {
    fn default() -> Self {
        Self {
            filter_radius: 2,
            inlier_fraction: 0.5,
            min_fit_events: 5,
            refit_passes: 2,
            t_past: 5000,
            inlier_threshold_scale: 0.5,
        }
    }
}

impl EdlConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.inlier_fraction > 0.0 && self.inlier_fraction <= 1.0) {
            return Err(ConfigError::OutOfRange {
                field: "inlier_fraction",
                value: self.inlier_fraction,
                reason: "must lie in (0, 1]",
            });
        }
        if self.min_fit_events < 3 {
            return Err(ConfigError::OutOfRange {
                field: "min_fit_events",
                value: self.min_fit_events as f64,
                reason: "must be at least 3",
            });
        }
        if !(self.inlier_threshold_scale.is_finite() && self.inlier_threshold_scale >= 0.0) {
            return Err(ConfigError::OutOfRange {
                field: "inlier_threshold_scale",
                value: self.inlier_threshold_scale,
                reason: "must be finite and non-negative",
            });
        }
        Ok(())
    }
}

/// Least-squares plane `t = a·x + b·y + c` through `points` given as `(x, y, t)`.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN
pub fn fit_plane<T: Scalar>(points: &[(T, T, T)]) -> Result<PlaneParams<T>, FitError> {
    if points.len() < 3 {
        return Err(FitError::InsufficientEvents(points.len()));
    }
    let n = T::from_usize_lossy(points.len());
    let (mut mx, mut my, mut mt) = (T::zero(), T::zero(), T::zero());
    for &(x, y, t) in points {
        mx = mx + x;
        my = my + y;
        mt = mt + t;
    }
    mx = mx / n;
    my = my / n;
    mt = mt / n;

    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) =
        (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for &(x, y, t) in points {
        let (dx, dy, dt) = (x - mx, y - my, t - mt);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
        sxt = sxt + dx * dt;
        syt = syt + dy * dt;
    }

    let det = sxx * syy - sxy * sxy;
    let trace = sxx + syy;
    // det / trace² is the product/sum² of the scatter eigenvalues; near zero
    // means the points lie (numerically) on a line
    if !(trace > T::zero()) || det <= T::epsilon() * T::lit(64.0) * trace * trace {
        return Err(FitError::DegenerateGeometry);
    }
    let a = (sxt * syy - syt * sxy) / det;
    let b = (syt * sxx - sxt * sxy) / det;
    let c = mt - a * mx - b * my;
    Ok(PlaneParams { a, b, c })
}

/// Counts points whose timestamp lies strictly within
/// `inlier_threshold_scale · √(a² + b²)` of the plane anchored at `center`:
/// `t̂ᵢ = center.t + a·(xᵢ − center.x) + b·(yᵢ − center.y)`.
pub fn count_inliers<T: Scalar>(
    plane: &PlaneParams<T>,
    center: &SurfacePoint,
    points: &[SurfacePoint],
    cfg: &EdlConfig,
) -> usize {
    let threshold = T::lit(cfg.inlier_threshold_scale) * plane.gradient_norm();
    points
        .iter()
        .filter(|p| {
            let (dx, dy, dt) = offsets::<T>(center, p);
            (dt - (plane.a * dx + plane.b * dy)).abs() < threshold
        })
        .count()
}

#[inline]
fn offsets<T: Scalar>(center: &SurfacePoint, p: &SurfacePoint) -> (T, T, T) {
    let dx = T::lit(p.x as f64 - center.x as f64);
    let dy = T::lit(p.y as f64 - center.y as f64);
    let dt = T::lit(p.t as i64 as f64 - center.t as i64 as f64);
    (dx, dy, dt)
}

/// Diagnostic detail of one local flow evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit<T> {
    pub flow: LocalFlow<T>,
    /// Plane in coordinates relative to the center event, if a fit succeeded.
    pub plane: Option<PlaneParams<T>>,
    pub participating: usize,
    pub inliers: usize,
}

/// Local flow estimator with reusable scratch buffers.
#[derive(Debug, Clone)]
pub struct EdlEstimator<T> {
    cfg: EdlConfig,
    neighborhood: Vec<SurfacePoint>,
    rel: Vec<(T, T, T)>,
    subset: Vec<(T, T, T)>,
}

impl<T: Scalar> EdlEstimator<T> {
    pub fn new(cfg: EdlConfig) -> Self {
        Self {
            cfg,
            neighborhood: Vec::with_capacity(32),
            rel: Vec::with_capacity(32),
            subset: Vec::with_capacity(32),
        }
    }

    pub fn config(&self) -> &EdlConfig {
        &self.cfg
    }

    pub fn local_flow(&mut self, center: &Event, surface: &TimeSurface) -> LocalFlow<T> {
        self.local_fit(center, surface).flow
    }

    pub fn local_fit(&mut self, center: &Event, surface: &TimeSurface) -> LocalFit<T> {
        surface.neighborhood_into(center, self.cfg.filter_radius, self.cfg.t_past, &mut self.neighborhood);
        let participating = self.neighborhood.len();
        let rejected = |plane, inliers| LocalFit {
            flow: LocalFlow::invalid(),
            plane,
            participating,
            inliers,
        };
        if participating < self.cfg.min_fit_events.max(3) {
            return rejected(None, 0);
        }

        let anchor = self.neighborhood[0];
        self.rel.clear();
        self.rel
            .extend(self.neighborhood.iter().map(|p| offsets::<T>(&anchor, p)));

        let mut plane = match fit_plane(&self.rel) {
            Ok(p) => p,
            Err(_) => return rejected(None, 0),
        };
        let scale = T::lit(self.cfg.inlier_threshold_scale);
        let is_inlier = |plane: &PlaneParams<T>, &(dx, dy, dt): &(T, T, T)| {
            (dt - (plane.a * dx + plane.b * dy)).abs() < scale * plane.gradient_norm()
        };

        let mut fitted_on = participating;
        for _ in 0..self.cfg.refit_passes {
            self.subset.clear();
            self.subset
                .extend(self.rel.iter().filter(|p| is_inlier(&plane, p)).copied());
            if self.subset.len() == fitted_on || self.subset.len() < 3 {
                break;
            }
            match fit_plane(&self.subset) {
                Ok(p) => {
                    plane = p;
                    fitted_on = self.subset.len();
                }
                Err(_) => break,
            }
        }

        let inliers = self.rel.iter().filter(|p| is_inlier(&plane, p)).count();
        let gate = self.cfg.inlier_fraction * participating as f64;
        let grad = plane.gradient_norm();
        if (inliers as f64) < gate || !grad.is_finite() || grad < T::lit(MICROS_PER_SECOND / MAX_SPEED) {
            return rejected(Some(plane), inliers);
        }
        let speed = T::lit(MICROS_PER_SECOND) / grad;
        let theta = wrap_angle(plane.b.atan2(plane.a));
        LocalFit {
            flow: LocalFlow::from_polar(speed, theta),
            plane: Some(plane),
            participating,
            inliers,
        }
    }
}

/// One-shot local flow for `center`, which must already be ingested into `surface`.
pub fn local_flow<T: Scalar>(center: &Event, surface: &TimeSurface, cfg: &EdlConfig) -> LocalFlow<T> {
    EdlEstimator::new(cfg.clone()).local_flow(center, surface)
}
