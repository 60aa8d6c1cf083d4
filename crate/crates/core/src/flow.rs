//! Local flow estimates, Cartesian flow vectors and the per-pixel flow surface.

use std::collections::VecDeque;

use crate::event::{Micros, SensorGeometry, SurfaceError};
use crate::scalar::{wrap_angle, Scalar};

/// Velocity in pixels per second.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowVector<T> {
    pub vx: T,
    pub vy: T,
}

impl<T: Scalar> FlowVector<T> {
    pub fn new(vx: T, vy: T) -> Self {
        Self { vx, vy }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn from_polar(speed: T, theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(speed * c, speed * s)
    }

    pub fn speed(&self) -> T {
        self.vx.hypot(self.vy)
    }

    /// Direction in `[0, 2π)`; zero for the zero vector.
    pub fn direction(&self) -> T {
        wrap_angle(self.vy.atan2(self.vx))
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite()
    }

    pub fn cast<U: Scalar>(&self) -> FlowVector<U> {
        FlowVector::new(U::lit(self.vx.to_f64_lossy()), U::lit(self.vy.to_f64_lossy()))
    }
}

/// Per-event local (normal) flow in polar form.
///
/// The invalid state is the zero sentinel: `valid == false` implies `speed == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFlow<T> {
    pub speed: T,
    pub theta: T,
    pub valid: bool,
}

impl<T: Scalar> LocalFlow<T> {
    pub fn invalid() -> Self {
        Self {
            speed: T::zero(),
            theta: T::zero(),
            valid: false,
        }
    }

    /// Valid flow when `speed` is finite and positive, the invalid sentinel otherwise.
    pub fn from_polar(speed: T, theta: T) -> Self {
        if speed.is_finite() && speed > T::zero() && theta.is_finite() {
            Self {
                speed,
                theta: wrap_angle(theta),
                valid: true,
            }
        } else {
            Self::invalid()
        }
    }

    pub fn to_vector(&self) -> FlowVector<T> {
        if self.valid {
            FlowVector::from_polar(self.speed, self.theta)
        } else {
            FlowVector::zero()
        }
    }
}

const NEVER: Micros = Micros::MAX;

/// Stored flow at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowCell<T> {
    pub t: Micros,
    pub speed: T,
    pub theta: T,
    pub vx: T,
    pub vy: T,
    seq: u64,
}

impl<T: Scalar> FlowCell<T> {
    fn empty() -> Self {
        Self {
            t: NEVER,
            speed: T::zero(),
            theta: T::zero(),
            vx: T::zero(),
            vy: T::zero(),
            seq: 0,
        }
    }

    pub fn is_set(&self) -> bool {
        self.t != NEVER
    }

    pub fn local_flow(&self) -> LocalFlow<T> {
        if self.is_set() {
            LocalFlow::from_polar(self.speed, self.theta)
        } else {
            LocalFlow::invalid()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RecentEntry<T> {
    x: u16,
    y: u16,
    idx: u32,
    cell: FlowCell<T>,
}

/// Per-pixel most recent valid local flow with its timestamp.
///
/// Alongside the dense grid the surface keeps the writes of the last `retention`
/// microseconds in arrival order, so that window queries can visit only recent
/// flows instead of every pixel of a large window. The list never grows beyond
/// twice the pixel count.
#[derive(Debug, Clone)]
pub struct FlowSurface<T> {
    geometry: SensorGeometry,
    cells: Vec<FlowCell<T>>,
    /// Copy of `cells[i].seq`, kept dense for cheap freshness checks.
    seqs: Vec<u64>,
    recent: VecDeque<RecentEntry<T>>,
    retention: Micros,
    next_seq: u64,
    latest: Option<Micros>,
}

impl<T: Scalar> FlowSurface<T> {
    /// `retention` should be at least the largest `t_past` used in queries;
    /// queries reaching further back fall back to a dense window scan.
    pub fn new(geometry: SensorGeometry, retention: Micros) -> Self {
        Self {
            geometry,
            cells: vec![FlowCell::empty(); geometry.pixel_count()],
            seqs: vec![0; geometry.pixel_count()],
            recent: VecDeque::new(),
            retention,
            next_seq: 1,
            latest: None,
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn retention(&self) -> Micros {
        self.retention
    }

    /// Number of entries in the recent-write list, including superseded ones.
    pub fn recent_len(&self) -> usize {
        self.recent.len()
    }

    pub fn get(&self, x: u16, y: u16) -> Option<&FlowCell<T>> {
        if !self.geometry.contains(x, y) {
            return None;
        }
        let c = &self.cells[self.geometry.index(x, y)];
        c.is_set().then_some(c)
    }

    /// Stores `flow` at `(x, y)`. Invalid flows are not stored; returns whether a
    /// write happened.
    pub fn update(
        &mut self,
        x: u16,
        y: u16,
        t: Micros,
        flow: &LocalFlow<T>,
    ) -> Result<bool, SurfaceError> {
        if !self.geometry.contains(x, y) {
            return Err(SurfaceError::OutOfBounds {
                x,
                y,
                width: self.geometry.width,
                height: self.geometry.height,
            });
        }
        if let Some(last) = self.latest {
            if t < last {
                return Err(SurfaceError::NonMonotonicTimestamp { t, last });
            }
        }
        if !flow.valid {
            return Ok(false);
        }
        let idx = self.geometry.index(x, y);
        let seq = self.next_seq;
        self.next_seq += 1;
        let v = flow.to_vector();
        let cell = FlowCell {
            t,
            speed: flow.speed,
            theta: flow.theta,
            vx: v.vx,
            vy: v.vy,
            seq,
        };
        self.cells[idx] = cell;
        self.seqs[idx] = seq;
        self.latest = Some(t);
        self.recent.push_back(RecentEntry {
            x,
            y,
            idx: idx as u32,
            cell,
        });
        let horizon = t.saturating_sub(self.retention);
        while self.recent.front().is_some_and(|e| e.cell.t < horizon) {
            self.recent.pop_front();
        }
        if self.recent.len() > 2 * self.cells.len() {
            let seqs = &self.seqs;
            self.recent.retain(|e| seqs[e.idx as usize] == e.cell.seq);
        }
        Ok(true)
    }

    /// Visits every stored flow with Chebyshev distance `<= radius` from
    /// `(cx, cy)` and timestamp in `[ct - t_past, ct]`.
    ///
    /// The callback receives the offset `(dx, dy)` from the center and the cell.
    /// Each pixel is visited at most once.
    pub fn visit_window<F>(&self, cx: u16, cy: u16, ct: Micros, radius: u32, t_past: Micros, mut f: F)
    where
        F: FnMut(i32, i32, &FlowCell<T>),
    {
        let oldest = ct.saturating_sub(t_past);
        let side = 2 * radius as usize + 1;
        let window_area = side.saturating_mul(side);
        let use_list = t_past <= self.retention && self.recent.len() < window_area;
        if use_list {
            let r = radius as i32;
            // entries are time-ordered: skip the stale prefix by binary search
            let start = self.recent.partition_point(|e| e.cell.t < oldest);
            for e in self.recent.range(start..) {
                if e.cell.t > ct {
                    break;
                }
                let dx = e.x as i32 - cx as i32;
                let dy = e.y as i32 - cy as i32;
                if dx.abs() > r || dy.abs() > r || self.seqs[e.idx as usize] != e.cell.seq {
                    continue;
                }
                f(dx, dy, &e.cell);
            }
        } else {
            let (x0, x1) = SensorGeometry::clip_span(cx, radius, self.geometry.width);
            let (y0, y1) = SensorGeometry::clip_span(cy, radius, self.geometry.height);
            let w = self.geometry.width as usize;
            for y in y0..=y1 {
                let row = y as usize * w;
                for x in x0..=x1 {
                    let cell = &self.cells[row + x as usize];
                    if cell.t <= ct && cell.t >= oldest {
                        f(x as i32 - cx as i32, y as i32 - cy as i32, cell);
                    }
                }
            }
        }
    }
}
