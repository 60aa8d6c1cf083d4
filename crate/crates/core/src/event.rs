//! Sensor events, geometry and the per-polarity time surface.

use thiserror::Error;

/// Timestamp in integer microseconds.
pub type Micros = u64;

/// Sign of the brightness change that produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }

    #[inline]
    pub fn as_u8(self) -> u8 {
        self.index() as u8
    }

    /// `0` is OFF, any other value is ON.
    #[inline]
    pub fn from_u8(v: u8) -> Self {
        if v == 0 {
            Polarity::Off
        } else {
            Polarity::On
        }
    }
}

/// One sensor event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: Micros,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: Micros, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self, SurfaceError> {
        if width == 0 || height == 0 {
            return Err(SurfaceError::EmptyGeometry { width, height });
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// Signed-coordinate containment, for continuous or offset positions.
    #[inline]
    pub fn contains_i(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    #[inline]
    pub(crate) fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }

    /// Inclusive window `[lo, hi]` of `center ± radius`, clipped to `[0, extent)`.
    #[inline]
    pub(crate) fn clip_span(center: u16, radius: u32, extent: u16) -> (u16, u16) {
        let lo = (center as i64 - radius as i64).max(0) as u16;
        let hi = (center as i64 + radius as i64).min(extent as i64 - 1) as u16;
        (lo, hi)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SurfaceError {
    #[error("sensor geometry must be at least 1x1, got {width}x{height}")]
    EmptyGeometry { width: u16, height: u16 },
    #[error("event at ({x}, {y}) is outside the {width}x{height} sensor")]
    OutOfBounds {
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
    #[error("timestamp {t} us precedes previously ingested {last} us")]
    NonMonotonicTimestamp { t: Micros, last: Micros },
}

/// Whether ON and OFF events live on separate temporal surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolarityMode {
    #[default]
    Separate,
    Merged,
}

/// A sample of the time surface: pixel coordinates and its latest timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurfacePoint {
    pub x: u16,
    pub y: u16,
    pub t: Micros,
}

const NEVER: Micros = Micros::MAX;

/// Per-pixel, per-polarity most recent event timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSurface {
    geometry: SensorGeometry,
    mode: PolarityMode,
    // layer-major: [layer][y][x]
    last_t: Vec<Micros>,
    latest: Option<Micros>,
}

impl TimeSurface {
    pub fn new(geometry: SensorGeometry, mode: PolarityMode) -> Self {
        let layers = match mode {
            PolarityMode::Separate => 2,
            PolarityMode::Merged => 1,
        };
        Self {
            geometry,
            mode,
            last_t: vec![NEVER; layers * geometry.pixel_count()],
            latest: None,
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn mode(&self) -> PolarityMode {
        self.mode
    }

    /// Timestamp of the most recently ingested event.
    pub fn latest(&self) -> Option<Micros> {
        self.latest
    }

    #[inline]
    fn layer_offset(&self, polarity: Polarity) -> usize {
        match self.mode {
            PolarityMode::Separate => polarity.index() * self.geometry.pixel_count(),
            PolarityMode::Merged => 0,
        }
    }

    /// Checks an event against bounds and stream order without mutating.
    pub fn check(&self, e: &Event) -> Result<(), SurfaceError> {
        if !self.geometry.contains(e.x, e.y) {
            return Err(SurfaceError::OutOfBounds {
                x: e.x,
                y: e.y,
                width: self.geometry.width,
                height: self.geometry.height,
            });
        }
        if let Some(last) = self.latest {
            if e.t < last {
                return Err(SurfaceError::NonMonotonicTimestamp { t: e.t, last });
            }
        }
        Ok(())
    }

    /// Records `e`. Rejected events leave the surface untouched.
    pub fn ingest(&mut self, e: &Event) -> Result<(), SurfaceError> {
        self.check(e)?;
        let idx = self.layer_offset(e.polarity) + self.geometry.index(e.x, e.y);
        self.last_t[idx] = e.t;
        self.latest = Some(e.t);
        Ok(())
    }

    /// Latest timestamp at `(x, y)` for `polarity`, `None` if the pixel never fired.
    pub fn last(&self, x: u16, y: u16, polarity: Polarity) -> Option<Micros> {
        if !self.geometry.contains(x, y) {
            return None;
        }
        let t = self.last_t[self.layer_offset(polarity) + self.geometry.index(x, y)];
        (t != NEVER).then_some(t)
    }

    /// Same-polarity entries in the clipped `(2r+1)²` window around `center` with
    /// `center.t - t_past <= t <= center.t`. The center event itself is always first.
    pub fn neighborhood(&self, center: &Event, radius: u32, t_past: Micros) -> Vec<SurfacePoint> {
        let mut out = Vec::new();
        self.neighborhood_into(center, radius, t_past, &mut out);
        out
    }

    /// Allocation-free form of [`neighborhood`](Self::neighborhood); clears `out` first.
    pub fn neighborhood_into(
        &self,
        center: &Event,
        radius: u32,
        t_past: Micros,
        out: &mut Vec<SurfacePoint>,
    ) {
        out.clear();
        out.push(SurfacePoint {
            x: center.x,
            y: center.y,
            t: center.t,
        });
        if !self.geometry.contains(center.x, center.y) {
            return;
        }
        let (x0, x1) = SensorGeometry::clip_span(center.x, radius, self.geometry.width);
        let (y0, y1) = SensorGeometry::clip_span(center.y, radius, self.geometry.height);
        let base = self.layer_offset(center.polarity);
        let w = self.geometry.width as usize;
        let oldest = center.t.saturating_sub(t_past);
        for y in y0..=y1 {
            let row = base + y as usize * w;
            for x in x0..=x1 {
                if x == center.x && y == center.y {
                    continue;
                }
                let t = self.last_t[row + x as usize];
                // NEVER is larger than any real timestamp, so it fails `t <= center.t`
                if t <= center.t && t >= oldest {
                    out.push(SurfacePoint { x, y, t });
                }
            }
        }
    }
}
