//! Flow visualisation as binary PPM (P6) images.
//!
//! Hue encodes direction, value encodes speed clamped to `max_speed`, and
//! pixels without a valid record in the window stay black.

use std::io::{self, Write};

use thiserror::Error;

use crate::event::{Micros, SensorGeometry};
use crate::pipeline::FlowRecord;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("no valid flow records in [{start}, {end}) us")]
    EmptyWindow { start: Micros, end: Micros },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u16,
    pub height: u16,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn get(&self, x: u16, y: u16) -> [u8; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        for p in &self.pixels {
            w.write_all(p)?;
        }
        w.flush()
    }
}

/// HSV to RGB with `h` in degrees, `s` and `v` in [0, 1].
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Renders valid records with `start <= t < end`; the latest record per pixel wins.
pub fn render_flow<T: Scalar>(
    records: &[FlowRecord<T>],
    geometry: SensorGeometry,
    start: Micros,
    end: Micros,
    max_speed: f64,
) -> Result<Image, RenderError> {
    let mut latest: Vec<Option<usize>> = vec![None; geometry.pixel_count()];
    for (i, r) in records.iter().enumerate() {
        let e = &r.event;
        if !r.valid || e.t < start || e.t >= end || !geometry.contains(e.x, e.y) {
            continue;
        }
        let idx = e.y as usize * geometry.width as usize + e.x as usize;
        match latest[idx] {
            Some(j) if records[j].event.t > e.t => {}
            _ => latest[idx] = Some(i),
        }
    }
    if latest.iter().all(Option::is_none) {
        return Err(RenderError::EmptyWindow { start, end });
    }
    let pixels = latest
        .iter()
        .map(|slot| match slot {
            None => [0, 0, 0],
            Some(i) => {
                let f = records[*i].flow.cast::<f64>();
                let v = if max_speed > 0.0 {
                    (f.speed() / max_speed).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                hsv_to_rgb(f.direction().to_degrees(), 1.0, v)
            }
        })
        .collect();
    Ok(Image {
        width: geometry.width,
        height: geometry.height,
        pixels,
    })
}
