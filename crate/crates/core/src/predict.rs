//! Event-by-event forward prediction from flow, cluster speed normalization
//! and windowed affine evaluation of predicted clouds.

use thiserror::Error;

use crate::event::{Event, Micros, SensorGeometry};
use crate::flow::FlowVector;
use crate::metrics::{affine_fit, AffineFit};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PredictError {
    #[error("cluster has no member with a valid flow")]
    EmptyCluster,
}

/// Where an event is expected to be `horizon` µs after it occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedEvent<T> {
    pub source: Event,
    pub horizon: Micros,
    pub px: T,
    pub py: T,
    /// Nearest pixel of `(px, py)` lies outside the sensor.
    pub out_of_frame: bool,
}

impl<T: Scalar> PredictedEvent<T> {
    /// Nearest pixel, if inside the sensor.
    pub fn rasterize(&self, geometry: &SensorGeometry) -> Option<(u16, u16)> {
        let x = self.px.round().to_i64()?;
        let y = self.py.round().to_i64()?;
        geometry.contains_i(x, y).then_some((x as u16, y as u16))
    }

    pub fn predicted_t(&self) -> Micros {
        self.source.t + self.horizon
    }
}

/// Linear extrapolation of `e` along `flow` (px/s) over `horizon` µs.
pub fn predict_event<T: Scalar>(
    e: &Event,
    flow: &FlowVector<T>,
    horizon: Micros,
    geometry: &SensorGeometry,
) -> PredictedEvent<T> {
    let dt = T::lit(horizon as f64 * 1e-6);
    let px = T::lit(e.x as f64) + flow.vx * dt;
    let py = T::lit(e.y as f64) + flow.vy * dt;
    let mut p = PredictedEvent {
        source: *e,
        horizon,
        px,
        py,
        out_of_frame: false,
    };
    p.out_of_frame = p.rasterize(geometry).is_none();
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterMember<T> {
    pub event: Event,
    pub flow: FlowVector<T>,
    pub valid: bool,
}

/// Events of one time window `[start_t, end_t)` with their flows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterWindow<T> {
    pub start_t: Micros,
    pub end_t: Micros,
    pub members: Vec<ClusterMember<T>>,
}

/// Replaces every valid member's speed with the mean speed of the valid
/// members, keeping each direction.
pub fn normalize_cluster_speeds<T: Scalar>(window: &ClusterWindow<T>) -> Result<ClusterWindow<T>, PredictError> {
    let (sum, n) = window
        .members
        .iter()
        .filter(|m| m.valid)
        .fold((T::zero(), 0usize), |(s, n), m| (s + m.flow.speed(), n + 1));
    if n == 0 {
        return Err(PredictError::EmptyCluster);
    }
    let mean = sum / T::from_usize_lossy(n);
    let members = window
        .members
        .iter()
        .map(|m| {
            if !m.valid {
                return *m;
            }
            let speed = m.flow.speed();
            let flow = if speed > T::zero() {
                FlowVector::new(m.flow.vx / speed * mean, m.flow.vy / speed * mean)
            } else {
                m.flow
            };
            ClusterMember { flow, ..*m }
        })
        .collect();
    Ok(ClusterWindow {
        members,
        ..*window
    })
}

/// Splits a time-ordered member stream into consecutive windows aligned to
/// multiples of `span`. Empty windows are omitted.
pub fn cluster_windows<T: Scalar>(
    members: impl IntoIterator<Item = ClusterMember<T>>,
    span: Micros,
) -> Vec<ClusterWindow<T>> {
    assert!(span > 0, "cluster span must be positive");
    let mut out: Vec<ClusterWindow<T>> = Vec::new();
    for m in members {
        let start = m.event.t / span * span;
        match out.last_mut() {
            Some(w) if w.start_t == start => w.members.push(m),
            _ => out.push(ClusterWindow {
                start_t: start,
                end_t: start + span,
                members: vec![m],
            }),
        }
    }
    out
}

/// Overlapping windows of length `span` starting every `step` µs.
pub fn sliding_cluster_windows<T: Scalar>(
    members: &[ClusterMember<T>],
    span: Micros,
    step: Micros,
) -> Vec<ClusterWindow<T>> {
    assert!(span > 0 && step > 0, "span and step must be positive");
    let Some(last) = members.last() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut start = members[0].event.t / step * step;
    while start <= last.event.t {
        let end = start + span;
        let lo = members.partition_point(|m| m.event.t < start);
        let hi = members.partition_point(|m| m.event.t < end);
        if hi > lo {
            out.push(ClusterWindow {
                start_t: start,
                end_t: end,
                members: members[lo..hi].to_vec(),
            });
        }
        start += step;
    }
    out
}

/// Affine fit of one cluster's predicted cloud against the events actually
/// observed one horizon later.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineWindow<T> {
    pub t_start: Micros,
    pub fit: AffineFit<T>,
}

/// For each window, predicts its valid members `horizon` µs ahead (optionally
/// with cluster-normalized speeds) and fits the prediction to the `actual`
/// events in the window shifted by `horizon`. Windows where the fit is
/// undefined are skipped. `actual` must be time-ordered.
pub fn affine_windows<T: Scalar>(
    windows: &[ClusterWindow<T>],
    actual: &[Event],
    horizon: Micros,
    normalize: bool,
    geometry: &SensorGeometry,
) -> Vec<AffineWindow<T>> {
    let mut out = Vec::new();
    for w in windows {
        let w = if normalize {
            match normalize_cluster_speeds(w) {
                Ok(n) => n,
                Err(_) => continue,
            }
        } else {
            w.clone()
        };
        let predicted: Vec<(T, T)> = w
            .members
            .iter()
            .filter(|m| m.valid)
            .map(|m| {
                let p = predict_event(&m.event, &m.flow, horizon, geometry);
                (p.px, p.py)
            })
            .collect();
        let lo = actual.partition_point(|e| e.t < w.start_t + horizon);
        let hi = actual.partition_point(|e| e.t < w.end_t + horizon);
        let observed: Vec<(T, T)> = actual[lo..hi]
            .iter()
            .map(|e| (T::lit(e.x as f64), T::lit(e.y as f64)))
            .collect();
        if let Ok(fit) = affine_fit(&predicted, &observed) {
            out.push(AffineWindow {
                t_start: w.start_t,
                fit,
            });
        }
    }
    out
}

/// Mean `|scale − 1|` and mean translation magnitude over windows.
pub fn affine_summary<T: Scalar>(windows: &[AffineWindow<T>]) -> Option<(T, T)> {
    if windows.is_empty() {
        return None;
    }
    let n = T::from_usize_lossy(windows.len());
    let (s, t) = windows.iter().fold((T::zero(), T::zero()), |(s, t), w| {
        (s + w.fit.scale_error(), t + w.fit.translation_magnitude())
    });
    Some((s / n, t / n))
}
