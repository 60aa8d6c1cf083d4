//! Evaluation metrics: endpoint error, zero-rotation affine fit between event
//! clouds, and circular direction statistics.

use std::fmt::Write as _;

use thiserror::Error;

use crate::flow::FlowVector;
use crate::scalar::{wrap_angle, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("length mismatch: {0} estimates vs {1} truths")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("point cloud has zero spread")]
    DegenerateCloud,
}

/// Average endpoint error: mean Euclidean distance between paired vectors.
pub fn aee<T: Scalar>(estimates: &[FlowVector<T>], truths: &[FlowVector<T>]) -> Result<T, MetricError> {
    if estimates.len() != truths.len() {
        return Err(MetricError::LengthMismatch(estimates.len(), truths.len()));
    }
    if estimates.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let sum = estimates
        .iter()
        .zip(truths)
        .fold(T::zero(), |acc, (e, t)| acc + (e.vx - t.vx).hypot(e.vy - t.vy));
    Ok(sum / T::from_usize_lossy(estimates.len()))
}

/// Scale about the centroid followed by translation, no rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFit<T> {
    pub scale: T,
    pub translation: (T, T),
    /// RMS distance from each transformed predicted point to its nearest actual
    /// point (clouds carry no correspondence).
    pub residual: T,
}

impl<T: Scalar> AffineFit<T> {
    pub fn scale_error(&self) -> T {
        (self.scale - T::one()).abs()
    }

    pub fn translation_magnitude(&self) -> T {
        self.translation.0.hypot(self.translation.1)
    }
}

fn centroid_and_rms<T: Scalar>(cloud: &[(T, T)]) -> (T, T, T) {
    let n = T::from_usize_lossy(cloud.len());
    let (sx, sy) = cloud
        .iter()
        .fold((T::zero(), T::zero()), |(a, b), &(x, y)| (a + x, b + y));
    let (cx, cy) = (sx / n, sy / n);
    let ss = cloud
        .iter()
        .fold(T::zero(), |acc, &(x, y)| acc + (x - cx) * (x - cx) + (y - cy) * (y - cy));
    (cx, cy, (ss / n).sqrt())
}

/// Zero-rotation similarity mapping `predicted` onto `actual` at distribution
/// level: translation between centroids, scale as the ratio of RMS radii.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN
pub fn affine_fit<T: Scalar>(predicted: &[(T, T)], actual: &[(T, T)]) -> Result<AffineFit<T>, MetricError> {
    if predicted.len() < 2 || actual.len() < 2 {
        return Err(MetricError::EmptyInput);
    }
    let (pcx, pcy, pr) = centroid_and_rms(predicted);
    let (acx, acy, ar) = centroid_and_rms(actual);
    if !(pr > T::zero()) || !(ar > T::zero()) {
        return Err(MetricError::DegenerateCloud);
    }
    let scale = ar / pr;
    let mut ss = T::zero();
    for &(x, y) in predicted {
        let (tx, ty) = (acx + scale * (x - pcx), acy + scale * (y - pcy));
        let nearest = actual
            .iter()
            .map(|&(ax, ay)| (ax - tx) * (ax - tx) + (ay - ty) * (ay - ty))
            .fold(T::infinity(), T::min);
        ss = ss + nearest;
    }
    Ok(AffineFit {
        scale,
        translation: (acx - pcx, acy - pcy),
        residual: (ss / T::from_usize_lossy(predicted.len())).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionHistogram<T> {
    /// `bin_count + 1` edges over `[0, 2π]`.
    pub edges: Vec<T>,
    pub counts: Vec<usize>,
    pub circular_mean: T,
    /// Mean resultant length in `[0, 1]`.
    pub resultant: T,
    /// `√(−2 ln R̄)`; infinite when the resultant vanishes.
    pub circular_std: T,
}

impl<T: Scalar> DirectionHistogram<T> {
    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_center(&self, i: usize) -> T {
        (self.edges[i] + self.edges[i + 1]) / T::lit(2.0)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Circular local maxima of the histogram holding at least `min_fraction`
    /// of the largest bin, strongest first. A plateau of equal bins counts once,
    /// at its middle bin.
    pub fn modes(&self, min_fraction: f64) -> Vec<usize> {
        let n = self.counts.len();
        let max = self.counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return Vec::new();
        }
        let c = |i: isize| self.counts[i.rem_euclid(n as isize) as usize];
        let mut peaks = Vec::new();
        if self.counts.iter().all(|&v| v == max) {
            return vec![0];
        }
        for i in 0..n as isize {
            let v = c(i);
            if v == 0 || (v as f64) < min_fraction * max as f64 || c(i - 1) == v {
                continue;
            }
            if c(i - 1) > v {
                continue;
            }
            // walk to the end of a plateau starting at i
            let mut j = i;
            while c(j + 1) == v && j - i < n as isize {
                j += 1;
            }
            if c(j + 1) < v {
                peaks.push((((i + j) / 2).rem_euclid(n as isize)) as usize);
            }
        }
        peaks.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        peaks
    }

    /// `bin_center,count` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_center,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{},{}", self.bin_center(i), c);
        }
        s
    }
}

/// Histogram of flow directions over `[0, 2π)` with circular mean and
/// circular standard deviation. Zero vectors are skipped.
pub fn direction_stats<T: Scalar>(flows: &[FlowVector<T>], bins: usize) -> Result<DirectionHistogram<T>, MetricError> {
    let angles: Vec<T> = flows
        .iter()
        .filter(|f| f.is_finite() && (f.vx != T::zero() || f.vy != T::zero()))
        .map(|f| f.direction())
        .collect();
    direction_stats_from_angles(&angles, bins)
}

pub fn direction_stats_from_angles<T: Scalar>(angles: &[T], bins: usize) -> Result<DirectionHistogram<T>, MetricError> {
    if angles.is_empty() || bins == 0 {
        return Err(MetricError::EmptyInput);
    }
    let width = T::TAU() / T::from_usize_lossy(bins);
    let edges = (0..=bins).map(|i| width * T::from_usize_lossy(i)).collect();
    let mut counts = vec![0usize; bins];
    let (mut sc, mut ss) = (T::zero(), T::zero());
    for &a in angles {
        let a = wrap_angle(a);
        let k = ((a / width).floor().to_usize().unwrap_or(0)).min(bins - 1);
        counts[k] += 1;
        let (s, c) = a.sin_cos();
        sc = sc + c;
        ss = ss + s;
    }
    let n = T::from_usize_lossy(angles.len());
    let resultant = (sc.hypot(ss) / n).min(T::one());
    let circular_std = if resultant > T::zero() {
        (T::lit(-2.0) * resultant.ln()).max(T::zero()).sqrt()
    } else {
        T::infinity()
    };
    Ok(DirectionHistogram {
        edges,
        counts,
        circular_mean: wrap_angle(ss.atan2(sc)),
        resultant,
        circular_std,
    })
}

/// Circular mean of angles within `half_width` of `around`; refines a
/// histogram mode location below bin resolution.
pub fn local_circular_mean<T: Scalar>(angles: &[T], around: T, half_width: T) -> Option<T> {
    let (mut sc, mut ss, mut n) = (T::zero(), T::zero(), 0usize);
    for &a in angles {
        if crate::scalar::angle_distance(a, around) <= half_width {
            let (s, c) = a.sin_cos();
            sc = sc + c;
            ss = ss + s;
            n += 1;
        }
    }
    (n > 0).then(|| wrap_angle(ss.atan2(sc)))
}
