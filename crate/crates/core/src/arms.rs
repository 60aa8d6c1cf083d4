//! Multi-scale max-pooling correction of local flow.
//!
//! Local plane-fit flow on an edge only measures the component normal to the
//! edge, `|U|·cos θ`. Pooling the local speeds over a neighborhood gives a mean
//! bounded above by the speed of the edge most orthogonal to the motion, so the
//! neighborhood scale with the largest mean speed is the one whose flows best
//! represent the true motion. The event's flow is replaced by the Cartesian mean
//! of the flows pooled at that scale.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edl::ConfigError;
use crate::event::{Event, Micros};
use crate::flow::{FlowSurface, FlowVector, LocalFlow};
use crate::scalar::{wrap_angle, Scalar};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ArmsError {
    #[error("center event has no valid local flow")]
    NoValidCenterFlow,
    #[error("no scale pooled at least {0} flows")]
    NoEligibleScale(usize),
}

/// Candidate pooling radii and pooling limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSet {
    /// Strictly increasing radii in pixels; radius `r` pools a `(2r+1)²` window.
    pub radii: Vec<u32>,
    pub t_past: Micros,
    pub min_pool_count: usize,
    /// Pooled means within this relative distance of the maximum count as tied,
    /// and ties go to the smallest radius. Zero selects the exact maximum.
    pub tie_tolerance: f64,
}

impl Default for ScaleSet {
    fn default() -> Self {
        Self {
            radii: (0..=10).map(|k| 10 * k).collect(),
            t_past: 5000,
            min_pool_count: 1,
            tie_tolerance: 0.0,
        }
    }
}

impl ScaleSet {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.radii.is_empty() {
            return Err(ConfigError::OutOfRange {
                field: "radii",
                value: 0.0,
                reason: "at least one radius is required",
            });
        }
        if let Some(w) = self.radii.windows(2).find(|w| w[1] <= w[0]) {
            return Err(ConfigError::OutOfRange {
                field: "radii",
                value: w[1] as f64,
                reason: "radii must be strictly increasing",
            });
        }
        if self.min_pool_count == 0 {
            return Err(ConfigError::OutOfRange {
                field: "min_pool_count",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.tie_tolerance >= 0.0 && self.tie_tolerance < 1.0) {
            return Err(ConfigError::OutOfRange {
                field: "tie_tolerance",
                value: self.tie_tolerance,
                reason: "must lie in [0, 1)",
            });
        }
        Ok(())
    }

    pub fn max_radius(&self) -> u32 {
        self.radii.last().copied().unwrap_or(0)
    }
}

/// Pooling statistics at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusStats<T> {
    pub radius: u32,
    /// Arithmetic mean of pooled speeds, px/s; zero when nothing was pooled.
    pub mean_speed: T,
    pub count: usize,
    /// Circular mean of pooled directions (unit-vector resultant).
    pub circular_mean: T,
    /// Component-wise mean of the pooled flow vectors.
    pub mean_vector: FlowVector<T>,
    /// `U_m − mean_speed`, with `U_m` the largest eligible mean.
    pub error_value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReport<T> {
    pub per_radius: Vec<RadiusStats<T>>,
    pub chosen_index: usize,
    pub chosen_radius: u32,
    /// Largest pooled mean speed among eligible radii.
    pub max_mean: T,
    /// Error function at the chosen radius.
    pub error_value: T,
}

impl<T: Scalar> ScaleReport<T> {
    pub fn chosen(&self) -> &RadiusStats<T> {
        &self.per_radius[self.chosen_index]
    }

    /// Corrected flow: mean pooled vector at the chosen radius.
    pub fn corrected(&self) -> FlowVector<T> {
        self.chosen().mean_vector
    }

    /// One CSV row per radius.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,mean_speed,count,circular_mean,error_value,chosen\n");
        for (i, r) in self.per_radius.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.radius,
                r.mean_speed,
                r.count,
                r.circular_mean,
                r.error_value,
                u8::from(i == self.chosen_index)
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RingSum<T> {
    speed: T,
    vx: T,
    vy: T,
    ux: T,
    uy: T,
    count: usize,
}

impl<T: Scalar> RingSum<T> {
    #[inline]
    fn add(&mut self, speed: T, vx: T, vy: T, units: bool) {
        self.speed = self.speed + speed;
        self.vx = self.vx + vx;
        self.vy = self.vy + vy;
        if units {
            self.ux = self.ux + vx / speed;
            self.uy = self.uy + vy / speed;
        }
        self.count += 1;
    }

    fn merge(&mut self, o: &Self) {
        self.speed = self.speed + o.speed;
        self.vx = self.vx + o.vx;
        self.vy = self.vy + o.vy;
        self.ux = self.ux + o.ux;
        self.uy = self.uy + o.uy;
        self.count += o.count;
    }
}

/// Mean speed and count of valid flows in the `(2·radius+1)²` window around
/// `center` within `t_past` of `center.t`; `(0, 0)` when empty.
pub fn pooled_mean_speed<T: Scalar>(
    center: &Event,
    flows: &FlowSurface<T>,
    radius: u32,
    t_past: Micros,
) -> (T, usize) {
    let mut sum = T::zero();
    let mut count = 0usize;
    flows.visit_window(center.x, center.y, center.t, radius, t_past, |_, _, c| {
        sum = sum + c.speed;
        count += 1;
    });
    if count == 0 {
        (T::zero(), 0)
    } else {
        (sum / T::from_usize_lossy(count), count)
    }
}

/// Scale sweep with precomputed ring lookup; reuse across events.
///
/// All radii are evaluated in one pass over the largest window: each pooled
/// flow is added to the ring (annulus between consecutive radii) its Chebyshev
/// distance falls into, and per-radius sums are prefix sums over the rings.
#[derive(Debug, Clone)]
pub struct ArmsPooler<T> {
    scales: ScaleSet,
    ring_of: Vec<u16>,
    rings: Vec<RingSum<T>>,
}

impl<T: Scalar> ArmsPooler<T> {
    pub fn new(scales: ScaleSet) -> Self {
        let max_r = scales.max_radius() as usize;
        let mut ring_of = Vec::with_capacity(max_r + 1);
        let mut k = 0usize;
        for d in 0..=max_r {
            while (scales.radii[k] as usize) < d {
                k += 1;
            }
            ring_of.push(k as u16);
        }
        let rings = vec![RingSum::default(); scales.radii.len()];
        Self {
            scales,
            ring_of,
            rings,
        }
    }

    pub fn scales(&self) -> &ScaleSet {
        &self.scales
    }

    /// `units` also accumulates unit vectors for the per-radius circular mean.
    fn sweep(&mut self, center: &Event, flows: &FlowSurface<T>, units: bool) {
        for r in &mut self.rings {
            *r = RingSum::default();
        }
        let rings = &mut self.rings;
        let ring_of = &self.ring_of;
        flows.visit_window(
            center.x,
            center.y,
            center.t,
            self.scales.max_radius(),
            self.scales.t_past,
            |dx, dy, c| {
                let d = dx.unsigned_abs().max(dy.unsigned_abs()) as usize;
                rings[ring_of[d] as usize].add(c.speed, c.vx, c.vy, units);
            },
        );
        for k in 1..self.rings.len() {
            let prev = self.rings[k - 1];
            self.rings[k].merge(&prev);
        }
    }

    fn choose(&self) -> Result<(usize, T), ArmsError> {
        let min = self.scales.min_pool_count;
        let mean = |s: &RingSum<T>| s.speed / T::from_usize_lossy(s.count);
        let max_mean = self
            .rings
            .iter()
            .filter(|s| s.count >= min)
            .map(mean)
            .fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.max(v))))
            .ok_or(ArmsError::NoEligibleScale(min))?;
        // means equal up to summation rounding count as ties
        let slack = T::epsilon() * T::lit(16.0);
        let floor = max_mean * (T::one() - T::lit(self.scales.tie_tolerance)) * (T::one() - slack);
        let idx = self
            .rings
            .iter()
            .position(|s| s.count >= min && mean(s) >= floor)
            .expect("maximum is attained");
        Ok((idx, max_mean))
    }

    /// Chosen radius index and corrected flow without building a full report.
    pub fn correct(
        &mut self,
        center: &Event,
        center_flow: &LocalFlow<T>,
        flows: &FlowSurface<T>,
    ) -> Result<(u32, FlowVector<T>), ArmsError> {
        if !center_flow.valid {
            return Err(ArmsError::NoValidCenterFlow);
        }
        self.sweep(center, flows, false);
        let (idx, _) = self.choose()?;
        let s = &self.rings[idx];
        let n = T::from_usize_lossy(s.count);
        Ok((self.scales.radii[idx], FlowVector::new(s.vx / n, s.vy / n)))
    }

    pub fn select_scale(
        &mut self,
        center: &Event,
        center_flow: &LocalFlow<T>,
        flows: &FlowSurface<T>,
    ) -> Result<ScaleReport<T>, ArmsError> {
        if !center_flow.valid {
            return Err(ArmsError::NoValidCenterFlow);
        }
        self.sweep(center, flows, true);
        let (chosen_index, max_mean) = self.choose()?;
        let per_radius = self
            .rings
            .iter()
            .zip(&self.scales.radii)
            .map(|(s, &radius)| {
                if s.count == 0 {
                    return RadiusStats {
                        radius,
                        mean_speed: T::zero(),
                        count: 0,
                        circular_mean: T::zero(),
                        mean_vector: FlowVector::zero(),
                        error_value: max_mean,
                    };
                }
                let n = T::from_usize_lossy(s.count);
                let mean_speed = s.speed / n;
                RadiusStats {
                    radius,
                    mean_speed,
                    count: s.count,
                    circular_mean: wrap_angle(s.uy.atan2(s.ux)),
                    mean_vector: FlowVector::new(s.vx / n, s.vy / n),
                    error_value: max_mean - mean_speed,
                }
            })
            .collect::<Vec<_>>();
        let error_value = per_radius[chosen_index].error_value;
        Ok(ScaleReport {
            chosen_radius: self.scales.radii[chosen_index],
            chosen_index,
            max_mean,
            error_value,
            per_radius,
        })
    }
}

/// Evaluates every radius of `scales` and picks the smallest one attaining the
/// largest pooled mean speed.
pub fn select_scale<T: Scalar>(
    center: &Event,
    center_flow: &LocalFlow<T>,
    flows: &FlowSurface<T>,
    scales: &ScaleSet,
) -> Result<ScaleReport<T>, ArmsError> {
    ArmsPooler::new(scales.clone()).select_scale(center, center_flow, flows)
}

/// Mean Cartesian flow over the window chosen by [`select_scale`].
pub fn corrected_flow<T: Scalar>(
    center: &Event,
    center_flow: &LocalFlow<T>,
    flows: &FlowSurface<T>,
    scales: &ScaleSet,
) -> Result<FlowVector<T>, ArmsError> {
    ArmsPooler::new(scales.clone())
        .correct(center, center_flow, flows)
        .map(|(_, v)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Polarity, SensorGeometry};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn surface() -> FlowSurface<f64> {
        FlowSurface::new(SensorGeometry::new(64, 64).unwrap(), 5000)
    }

    fn ev(t: u64, x: u16, y: u16) -> Event {
        Event::new(t, x, y, Polarity::On)
    }

    #[test]
    fn singleton_mean() {
        let mut s = surface();
        let f = LocalFlow::from_polar(70.7, 0.3);
        s.update(10, 10, 100, &f).unwrap();
        let (m, n) = pooled_mean_speed(&ev(100, 10, 10), &s, 0, 5000);
        assert_eq!(n, 1);
        assert!((m - 70.7).abs() < 1e-12);
    }

    #[test]
    fn stale_window_is_empty() {
        let mut s = surface();
        s.update(10, 10, 100, &LocalFlow::from_polar(5.0, 0.0)).unwrap();
        assert_eq!(pooled_mean_speed(&ev(10_000, 10, 10), &s, 5, 5000), (0.0, 0));
    }

    #[test]
    fn two_segments_mean_speed() {
        // equal event counts on two edges at ±45° to a motion of 100 px/s
        let u = 100.0f64;
        let s_edge = u * FRAC_PI_4.cos();
        let mut s = surface();
        for k in 0..8u16 {
            s.update(20 + k, 20 - k, 10, &LocalFlow::from_polar(s_edge, FRAC_PI_4)).unwrap();
            s.update(20 - k - 1, 20 - k, 10, &LocalFlow::from_polar(s_edge, 3.0 * FRAC_PI_4))
                .unwrap();
        }
        let (m, n) = pooled_mean_speed(&ev(10, 20, 20), &s, 20, 5000);
        assert_eq!(n, 16);
        assert!((m - u * FRAC_PI_4.cos()).abs() < 1e-9);
    }

    #[test]
    fn ties_go_to_smallest_radius() {
        let mut s = surface();
        let f = LocalFlow::from_polar(50.0, FRAC_PI_2);
        for x in 0..64u16 {
            s.update(x, 30, 10, &f).unwrap();
        }
        let r = select_scale(&ev(10, 32, 30), &f, &s, &ScaleSet::default()).unwrap();
        assert_eq!(r.chosen_radius, 0);
        assert_eq!(r.error_value, 0.0);
        let v = r.corrected();
        assert_eq!(v, f.to_vector());
    }

    #[test]
    fn invalid_center_rejected() {
        let s = surface();
        let r = select_scale(&ev(10, 3, 3), &LocalFlow::<f64>::invalid(), &s, &ScaleSet::default());
        assert_eq!(r.unwrap_err(), ArmsError::NoValidCenterFlow);
        let c = corrected_flow(&ev(10, 3, 3), &LocalFlow::<f64>::invalid(), &s, &ScaleSet::default());
        assert_eq!(c.unwrap_err(), ArmsError::NoValidCenterFlow);
    }

    #[test]
    fn faster_ring_wins_and_vector_mean_used() {
        let mut s = surface();
        let slow = LocalFlow::from_polar(70.0, FRAC_PI_4);
        let fast = LocalFlow::from_polar(100.0, FRAC_PI_2);
        s.update(30, 30, 10, &slow).unwrap();
        s.update(45, 30, 10, &fast).unwrap();
        s.update(46, 30, 10, &fast).unwrap();
        let r = select_scale(&ev(10, 30, 30), &slow, &s, &ScaleSet::default()).unwrap();
        assert_eq!(r.chosen_radius, 20);
        assert_eq!(r.chosen().count, 3);
        assert_eq!(r.per_radius[1].count, 1);
        let expect = FlowVector::new(
            (slow.to_vector().vx + 2.0 * fast.to_vector().vx) / 3.0,
            (slow.to_vector().vy + 2.0 * fast.to_vector().vy) / 3.0,
        );
        assert!((r.corrected().vx - expect.vx).abs() < 1e-12);
        assert!((r.corrected().vy - expect.vy).abs() < 1e-12);
        assert!((r.max_mean - 90.0).abs() < 1e-12);
        assert!((r.per_radius[0].error_value - 20.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_cancels_transverse_component() {
        let s_edge = 60.0;
        let mut s = surface();
        let a = LocalFlow::from_polar(s_edge, FRAC_PI_4);
        let b = LocalFlow::from_polar(s_edge, -FRAC_PI_4);
        s.update(10, 10, 5, &a).unwrap();
        s.update(11, 10, 5, &b).unwrap();
        let scales = ScaleSet {
            radii: vec![1],
            ..ScaleSet::default()
        };
        let v = corrected_flow(&ev(5, 10, 10), &a, &s, &scales).unwrap();
        assert!(v.vy.abs() < 1e-12);
        assert!((v.speed() - s_edge * FRAC_PI_4.cos()).abs() < 1e-12);
    }

    #[test]
    fn min_pool_count_excludes_sparse_scales() {
        let mut s = surface();
        let fast = LocalFlow::from_polar(100.0, 0.0);
        let slow = LocalFlow::from_polar(10.0, 0.0);
        s.update(30, 30, 10, &fast).unwrap();
        for x in 45..48 {
            s.update(x, 30, 10, &slow).unwrap();
        }
        let scales = ScaleSet {
            min_pool_count: 2,
            ..ScaleSet::default()
        };
        let r = select_scale(&ev(10, 30, 30), &fast, &s, &scales).unwrap();
        assert_eq!(r.chosen_radius, 20);
        let scales = ScaleSet {
            min_pool_count: 10,
            ..ScaleSet::default()
        };
        assert_eq!(
            select_scale(&ev(10, 30, 30), &fast, &s, &scales).unwrap_err(),
            ArmsError::NoEligibleScale(10)
        );
    }

    #[test]
    fn tie_tolerance_prefers_locality() {
        let mut s = surface();
        let a = LocalFlow::from_polar(100.0, 0.0);
        let b = LocalFlow::from_polar(100.001, std::f64::consts::PI);
        s.update(30, 30, 10, &a).unwrap();
        s.update(45, 30, 10, &b).unwrap();
        let exact = select_scale(&ev(10, 30, 30), &a, &s, &ScaleSet::default()).unwrap();
        assert_eq!(exact.chosen_radius, 20);
        let tol = ScaleSet {
            tie_tolerance: 1e-4,
            ..ScaleSet::default()
        };
        assert_eq!(select_scale(&ev(10, 30, 30), &a, &s, &tol).unwrap().chosen_radius, 0);
    }

    #[test]
    fn scale_set_validation() {
        assert!(ScaleSet::default().validate().is_ok());
        let bad = ScaleSet {
            radii: vec![0, 10, 10],
            ..ScaleSet::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(ScaleSet::default().radii.len(), 11);
    }

    #[test]
    fn report_csv_has_row_per_radius() {
        let mut s = surface();
        let f = LocalFlow::from_polar(1.0, 0.0);
        s.update(1, 1, 1, &f).unwrap();
        let r = select_scale(&ev(1, 1, 1), &f, &s, &ScaleSet::default()).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 12);
        assert!(csv.lines().nth(1).unwrap().ends_with(",1"));
    }
}
