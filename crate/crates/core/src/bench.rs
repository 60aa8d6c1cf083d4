//! Throughput measurement over a lazily tiled synthetic stream.

use std::time::{Duration, Instant};

use crate::event::{Event, Micros, SensorGeometry};
use crate::pipeline::{Pipeline, StageTimes};
use crate::scalar::Scalar;
use crate::synth::{bar_square_scene, generate, SynthError};

pub const CLIP_SPEED: f64 = 1000.0;
pub const CLIP_DURATION: Micros = 150_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub events: u64,
    pub wall_s: f64,
    pub throughput: f64,
    pub edl_s: f64,
    pub arms_s: f64,
    pub io_s: f64,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        format!(
            "events,wall_s,throughput,edl_s,arms_s,io_s\n{},{},{},{},{},{}\n",
            self.events, self.wall_s, self.throughput, self.edl_s, self.arms_s, self.io_s
        )
    }
}

/// A fixed clip replayed back to back with shifted timestamps; only the clip
/// is held in memory.
#[derive(Debug, Clone)]
pub struct TiledStream {
    clip: Vec<Event>,
    period: Micros,
    remaining: u64,
    pos: usize,
    tile: u64,
}

impl TiledStream {
    /// `period` must be at least the clip's last timestamp plus one.
    pub fn new(clip: Vec<Event>, period: Micros, total: u64) -> Self {
        let remaining = if clip.is_empty() { 0 } else { total };
        Self {
            clip,
            period,
            remaining,
            pos: 0,
            tile: 0,
        }
    }
}

impl Iterator for TiledStream {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let mut e = self.clip[self.pos];
        e.t += self.tile * self.period;
        self.pos += 1;
        if self.pos == self.clip.len() {
            self.pos = 0;
            self.tile += 1;
        }
        Some(e)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

/// The default bench stream: the bar and square scene at 1000 px/s.
pub fn bench_stream(total: u64, seed: u64) -> Result<(SensorGeometry, TiledStream), SynthError> {
    let spec = bar_square_scene(CLIP_SPEED);
    let clip: Vec<Event> = generate(&spec, CLIP_DURATION, seed)?.into_iter().map(|l| l.event).collect();
    Ok((spec.geometry, TiledStream::new(clip, CLIP_DURATION, total)))
}

/// Pushes `events` through `pipeline`, discarding records. Rejected events
/// are counted but not timed separately.
pub fn run_bench<T: Scalar, I: IntoIterator<Item = Event>>(pipeline: &mut Pipeline<T>, events: I) -> BenchReport {
    let mut times = StageTimes::default();
    let mut n = 0u64;
    let start = Instant::now();
    for e in events {
        let _ = pipeline.process_timed(&e, &mut times);
        n += 1;
    }
    let wall = start.elapsed();
    report(n, wall, &times, Duration::ZERO)
}

pub fn report(events: u64, wall: Duration, times: &StageTimes, io: Duration) -> BenchReport {
    let wall_s = wall.as_secs_f64();
    BenchReport {
        events,
        wall_s,
        throughput: if wall_s > 0.0 { events as f64 / wall_s } else { f64::INFINITY },
        edl_s: times.edl.as_secs_f64(),
        arms_s: times.arms.as_secs_f64(),
        io_s: io.as_secs_f64(),
    }
}
