//! Synthetic event scenes with exact per-event velocity labels.
//!
//! Objects are convex polygons or zero-width segments translating at constant
//! velocity. A pixel (center at integer coordinates) emits an ON event when a
//! polygon starts covering it and an OFF event when it stops; a segment emits
//! a single ON event when it sweeps over the pixel. Crossing times are solved
//! analytically and quantized to 1 µs, so the time surface of each edge is an
//! exact plane up to that quantization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::event::{Event, Micros, Polarity, SensorGeometry};
use crate::flow::FlowVector;

pub type Point = (f64, f64);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("scene has no objects and no noise")]
    EmptyScene,
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("object {0}: {1}")]
    BadObject(usize, &'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Zero-width segment from `a` to `b` (positions at t = 0).
    Segment { a: Point, b: Point },
    /// Convex polygon, vertices at t = 0 in either winding order.
    Polygon(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub shape: Shape,
    /// px/s
    pub velocity: Point,
    /// Emission interval `[start, end)` in µs; `None` means always active.
    pub active: Option<(Micros, Micros)>,
}

impl SceneObject {
    pub fn new(shape: Shape, velocity: Point) -> Self {
        Self {
            shape,
            velocity,
            active: None,
        }
    }
}

/// Scene description. Objects later in `objects` are in front and hide the
/// edges of earlier objects they cover.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: SensorGeometry,
    pub objects: Vec<SceneObject>,
    /// Events emitted per pixel crossing.
    pub events_per_crossing: u32,
    /// Uniform background noise, events per pixel per second.
    pub noise_rate: f64,
}

impl SceneSpec {
    pub fn new(geometry: SensorGeometry, objects: Vec<SceneObject>) -> Self {
        Self {
            geometry,
            objects,
            events_per_crossing: 1,
            noise_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledEvent {
    pub event: Event,
    pub true_flow: FlowVector<f64>,
    /// Index into [`SceneSpec::objects`]; `None` for noise.
    pub object_id: Option<u32>,
}

/// Half-plane `n·q <= h`.
#[derive(Debug, Clone, Copy)]
struct HalfPlane {
    n: Point,
    h: f64,
}

#[derive(Debug, Clone)]
struct ConvexPolygon {
    planes: Vec<HalfPlane>,
}

impl ConvexPolygon {
    fn new(vertices: &[Point]) -> Option<Self> {
        if vertices.len() < 3 {
            return None;
        }
        let area2: f64 = (0..vertices.len())
            .map(|i| {
                let (p, q) = (vertices[i], vertices[(i + 1) % vertices.len()]);
                p.0 * q.1 - q.0 * p.1
            })
            .sum();
        if area2.abs() < 1e-12 {
            return None;
        }
        let sign = area2.signum();
        let planes = (0..vertices.len())
            .map(|i| {
                let (p, q) = (vertices[i], vertices[(i + 1) % vertices.len()]);
                let (dx, dy) = (q.0 - p.0, q.1 - p.1);
                // outward normal for counter-clockwise winding is (dy, -dx)
                let n = (sign * dy, -sign * dx);
                HalfPlane {
                    n,
                    h: n.0 * p.0 + n.1 * p.1,
                }
            })
            .collect();
        Some(Self { planes })
    }

    /// Time interval (seconds) during which pixel `p` is inside the polygon
    /// translating at `v`. Empty intervals return `None`.
    fn coverage(&self, p: Point, v: Point) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for hp in &self.planes {
            // n·(p - v t) <= h  <=>  (n·v) t >= n·p - h
            let np = hp.n.0 * p.0 + hp.n.1 * p.1 - hp.h;
            let nv = hp.n.0 * v.0 + hp.n.1 * v.1;
            if nv.abs() < 1e-12 {
                if np > 0.0 {
                    return None;
                }
            } else if nv > 0.0 {
                lo = lo.max(np / nv);
            } else {
                hi = hi.min(np / nv);
            }
        }
        (lo < hi).then_some((lo, hi))
    }

    fn contains_at(&self, p: Point, v: Point, t: f64) -> bool {
        let q = (p.0 - v.0 * t, p.1 - v.1 * t);
        self.planes.iter().all(|hp| hp.n.0 * q.0 + hp.n.1 * q.1 < hp.h)
    }
}

fn seconds(t: Micros) -> f64 {
    t as f64 * 1e-6
}

fn to_micros(t: f64) -> Micros {
    (t * 1e6).round().max(0.0) as Micros
}

/// Pixel range `[lo, hi]` covering `vals` (with a one pixel margin), clipped to `[0, extent)`.
fn pixel_span(vals: impl Iterator<Item = f64>, extent: u16) -> Option<(u16, u16)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let lo = (lo.floor() - 1.0).max(0.0);
    let hi = (hi.ceil() + 1.0).min(extent as f64 - 1.0);
    (lo <= hi).then_some((lo as u16, hi as u16))
}

/// Generates the labeled event stream of `spec` over `[0, duration)`, sorted by
/// timestamp. Deterministic for a fixed `seed`; the seed only drives noise.
pub fn generate(spec: &SceneSpec, duration: Micros, seed: u64) -> Result<Vec<LabeledEvent>, SynthError> {
    if duration == 0 {
        return Err(SynthError::ZeroDuration);
    }
    if spec.objects.is_empty() && spec.noise_rate <= 0.0 {
        return Err(SynthError::EmptyScene);
    }
    let g = spec.geometry;
    let polys: Vec<Option<ConvexPolygon>> = spec
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            if !(o.velocity.0.is_finite() && o.velocity.1.is_finite()) {
                return Err(SynthError::BadObject(i, "velocity must be finite"));
            }
            match &o.shape {
                Shape::Polygon(v) => ConvexPolygon::new(v)
                    .map(Some)
                    .ok_or(SynthError::BadObject(i, "polygon needs 3+ non-collinear vertices")),
                Shape::Segment { a, b } => {
                    if a == b {
                        Err(SynthError::BadObject(i, "segment has zero length"))
                    } else {
                        Ok(None)
                    }
                }
            }
        })
        .collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    let reps = spec.events_per_crossing.max(1);
    for (id, obj) in spec.objects.iter().enumerate() {
        let v = obj.velocity;
        if v == (0.0, 0.0) {
            continue;
        }
        let (a0, a1) = obj.active.unwrap_or((0, duration));
        let (t0, t1) = (seconds(a0), seconds(a1.min(duration)));
        if t1 <= t0 {
            continue;
        }
        let corners: Vec<Point> = match &obj.shape {
            Shape::Polygon(vs) => vs.clone(),
            Shape::Segment { a, b } => vec![*a, *b],
        };
        let swept = corners
            .iter()
            .flat_map(|c| [(c.0 + v.0 * t0, c.1 + v.1 * t0), (c.0 + v.0 * t1, c.1 + v.1 * t1)])
            .collect::<Vec<_>>();
        let (Some((x0, x1)), Some((y0, y1))) = (
            pixel_span(swept.iter().map(|p| p.0), g.width),
            pixel_span(swept.iter().map(|p| p.1), g.height),
        ) else {
            continue;
        };
        let truth = FlowVector::new(v.0, v.1);
        let mut emit = |t: f64, x: u16, y: u16, polarity: Polarity| {
            if t <= t0 || t >= t1 {
                return;
            }
            let p = (x as f64, y as f64);
            let hidden = polys[id + 1..]
                .iter()
                .zip(&spec.objects[id + 1..])
                .any(|(poly, front)| {
                    poly.as_ref().is_some_and(|poly| {
                        let active = front.active.is_none_or(|(s, e)| t >= seconds(s) && t < seconds(e));
                        active && poly.contains_at(p, front.velocity, t)
                    })
                });
            if hidden {
                return;
            }
            let e = Event::new(to_micros(t), x, y, polarity);
            for _ in 0..reps {
                out.push(LabeledEvent {
                    event: e,
                    true_flow: truth,
                    object_id: Some(id as u32),
                });
            }
        };
        match (&obj.shape, &polys[id]) {
            (Shape::Polygon(_), Some(poly)) => {
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        if let Some((lo, hi)) = poly.coverage((x as f64, y as f64), v) {
                            emit(lo, x, y, Polarity::On);
                            emit(hi, x, y, Polarity::Off);
                        }
                    }
                }
            }
            (Shape::Segment { a, b }, _) => {
                let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
                let u = ((b.0 - a.0) / len, (b.1 - a.1) / len);
                let n = (-u.1, u.0);
                let nv = n.0 * v.0 + n.1 * v.1;
                if nv.abs() < 1e-12 {
                    continue;
                }
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let p = (x as f64, y as f64);
                        let t = (n.0 * (p.0 - a.0) + n.1 * (p.1 - a.1)) / nv;
                        let q = (p.0 - v.0 * t - a.0, p.1 - v.1 * t - a.1);
                        let s = q.0 * u.0 + q.1 * u.1;
                        if (0.0..len).contains(&s) {
                            emit(t, x, y, Polarity::On);
                        }
                    }
                }
            }
            _ => unreachable!("polygons validated above"),
        }
    }

    if spec.noise_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean = spec.noise_rate * g.pixel_count() as f64 * seconds(duration);
        let n = Poisson::new(mean).map(|p| p.sample(&mut rng) as u64).unwrap_or(0);
        for _ in 0..n {
            let e = Event::new(
                rng.gen_range(0..duration),
                rng.gen_range(0..g.width),
                rng.gen_range(0..g.height),
                Polarity::from_u8(rng.gen_range(0..2)),
            );
            out.push(LabeledEvent {
                event: e,
                true_flow: FlowVector::zero(),
                object_id: None,
            });
        }
    }

    out.retain(|l| g.contains(l.event.x, l.event.y));
    out.sort_by_key(|l| (l.event.t, l.event.y, l.event.x, l.event.polarity, l.object_id));
    Ok(out)
}

/// Corners of a `w x h` rectangle centered at `c`, rotated by `angle` radians.
pub fn rectangle(c: Point, w: f64, h: f64, angle: f64) -> Vec<Point> {
    let (s, co) = angle.sin_cos();
    [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
        .iter()
        .map(|&(i, j)| {
            let (lx, ly) = (i * w, j * h);
            (c.0 + co * lx - s * ly, c.1 + s * lx + co * ly)
        })
        .collect()
}

/// Default sensor of the synthetic suites (ATIS resolution).
pub fn default_geometry() -> SensorGeometry {
    SensorGeometry::new(304, 240).expect("non-empty")
}

/// One entry of [`rotated_bar_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedBar {
    pub angle_deg: f64,
    /// Unit normal of the bar pointing along the motion, as an angle in radians.
    pub normal: f64,
    pub spec: SceneSpec,
    /// Bar (nearly) parallel to its motion: no usable plane.
    pub degenerate: bool,
}

impl RotatedBar {
    /// Normal-flow speed a plane fit should report on the long edges.
    pub fn expected_normal_speed(&self, speed: f64) -> f64 {
        speed * self.angle_deg.to_radians().cos()
    }
}

/// Bars translating along +x at `speed`, each rotated so that its normal makes
/// `angle` degrees with the motion.
pub fn rotated_bar_suite(angles: &[f64], speed: f64) -> Vec<RotatedBar> {
    angles
        .iter()
        .map(|&deg| {
            let th = deg.to_radians();
            // long axis along (-sin, cos); the rectangle's local x is its thickness
            let bar = rectangle((52.0, 120.0), 4.0, 80.0, th);
            let spec = SceneSpec::new(
                default_geometry(),
                vec![SceneObject::new(Shape::Polygon(bar), (speed, 0.0))],
            );
            RotatedBar {
                angle_deg: deg,
                normal: th,
                spec,
                degenerate: th.cos().abs() < 1e-9,
            }
        })
        .collect()
}

/// Horizontal bars and a square rotated by 45° translating together at
/// `speed` px/s along +y. The square's edges are all oblique to the motion;
/// the bars are orthogonal to it.
pub fn bar_square_scene(speed: f64) -> SceneSpec {
    let v = (0.0, speed);
    let bar = |cx: f64, cy: f64| SceneObject::new(Shape::Polygon(rectangle((cx, cy), 40.0, 4.0, 0.0)), v);
    let square = SceneObject::new(
        Shape::Polygon(rectangle((152.0, 60.0), 50.0, 50.0, std::f64::consts::FRAC_PI_4)),
        v,
    );
    SceneSpec::new(
        default_geometry(),
        vec![bar(92.0, 60.0), bar(212.0, 60.0), square],
    )
}

/// Two squares translating in opposite directions along x on neighboring rows
/// so that they pass each other half-way through a 2 s sequence.
pub fn two_squares_scene(speed: f64) -> SceneSpec {
    let sq = |c: Point| Shape::Polygon(rectangle(c, 40.0, 40.0, 0.0));
    SceneSpec::new(
        default_geometry(),
        vec![
            SceneObject::new(sq((50.5, 90.5)), (speed, 0.0)),
            SceneObject::new(sq((253.5, 150.5)), (-speed, 0.0)),
        ],
    )
}

/// A square passing behind a larger square moving the other way.
pub fn occlusion_scene(speed: f64) -> SceneSpec {
    SceneSpec::new(
        default_geometry(),
        vec![
            SceneObject::new(Shape::Polygon(rectangle((60.5, 120.5), 40.0, 40.0, 0.0)), (speed, 0.0)),
            SceneObject::new(Shape::Polygon(rectangle((243.5, 120.5), 60.0, 60.0, 0.0)), (-speed, 0.0)),
        ],
    )
}
