use std::collections::HashMap;
use std::f64::consts::TAU;

use proptest::prelude::*;

use armsflow::arms::{select_scale, ScaleSet};
use armsflow::config::PipelineConfig;
use armsflow::edl::{count_inliers, fit_plane, local_flow, EdlConfig, PlaneParams, MAX_SPEED};
use armsflow::flow::{FlowSurface, FlowVector, LocalFlow};
use armsflow::metrics::{aee, affine_fit, direction_stats_from_angles};
use armsflow::pipeline::{run_pipeline, FlowMode, FlowRecord};
use armsflow::scalar::angle_distance;
use armsflow::{Event, Micros, Polarity, PolarityMode, SensorGeometry, SurfacePoint, TimeSurface};

const W: u16 = 24;
const H: u16 = 18;

fn geometry() -> SensorGeometry {
    SensorGeometry::new(W, H).unwrap()
}

/// Time-ordered random events on the small test sensor.
fn event_stream(max_len: usize) -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0u64..400, 0..W, 0..H, any::<bool>()), 0..max_len).prop_map(|raw| {
        let mut t = 0;
        raw.into_iter()
            .map(|(dt, x, y, p)| {
                t += dt;
                Event::new(t, x, y, if p { Polarity::On } else { Polarity::Off })
            })
            .collect()
    })
}

fn test_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.scales.radii = vec![0, 2, 4, 8];
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_is_deterministic(events in event_stream(400)) {
        let cfg = test_config();
        for mode in [FlowMode::Edl, FlowMode::Arms] {
            let a: Vec<FlowRecord<f64>> = run_pipeline(geometry(), &cfg, mode, &events).unwrap();
            let b: Vec<FlowRecord<f64>> = run_pipeline(geometry(), &cfg, mode, &events).unwrap();
            prop_assert_eq!(a.len(), events.len());
            let same = a.iter().zip(&b).all(|(x, y)| {
                x.flow.vx.to_bits() == y.flow.vx.to_bits()
                    && x.flow.vy.to_bits() == y.flow.vy.to_bits()
                    && x.valid == y.valid
                    && x.chosen_radius == y.chosen_radius
            });
            prop_assert!(same);
        }
    }

    #[test]
    fn neighborhood_matches_brute_force(
        events in event_stream(300),
        pick in any::<prop::sample::Index>(),
        radius in 0u32..5,
        t_past in 1u64..3000,
        merged in any::<bool>(),
    ) {
        prop_assume!(!events.is_empty());
        let mode = if merged { PolarityMode::Merged } else { PolarityMode::Separate };
        let mut surface = TimeSurface::new(geometry(), mode);
        let k = pick.index(events.len());
        for e in &events[..=k] {
            surface.ingest(e).unwrap();
        }
        let center = events[k];
        // naive model: latest timestamp per (pixel, layer) over the ingested prefix
        let mut latest: HashMap<(u16, u16, bool), Micros> = HashMap::new();
        for e in &events[..=k] {
            let layer = merged || e.polarity == Polarity::On;
            latest.insert((e.x, e.y, layer), e.t);
        }
        let layer = merged || center.polarity == Polarity::On;
        let mut expected: Vec<SurfacePoint> = latest
            .iter()
            .filter(|(&(x, y, l), &t)| {
                l == layer
                    && (x as i64 - center.x as i64).unsigned_abs() <= radius as u64
                    && (y as i64 - center.y as i64).unsigned_abs() <= radius as u64
                    && t <= center.t
                    && center.t - t <= t_past
            })
            .map(|(&(x, y, _), &t)| SurfacePoint { x, y, t })
            .collect();
        let got = surface.neighborhood(&center, radius, t_past);
        prop_assert_eq!(got[0], SurfacePoint { x: center.x, y: center.y, t: center.t });
        let mut got_sorted = got.clone();
        let key = |p: &SurfacePoint| (p.y, p.x);
        got_sorted.sort_by_key(key);
        expected.sort_by_key(key);
        prop_assert_eq!(got_sorted, expected);
    }

    #[test]
    fn edl_points_along_increasing_time(a in -400.0f64..400.0, b in -400.0f64..400.0) {
        // timestamps sampled from the plane t = t0 + a·x + b·y, rounded to 1 µs
        prop_assume!(a.hypot(b) > 20.0);
        let g = SensorGeometry::new(5, 5).unwrap();
        let mut pts: Vec<(u64, u16, u16)> = Vec::new();
        for y in 0..5u16 {
            for x in 0..5u16 {
                let t = 10_000.0 + a * (x as f64 - 2.0) + b * (y as f64 - 2.0);
                pts.push((t.round() as u64, x, y));
            }
        }
        pts.sort();
        let mut surface = TimeSurface::new(g, PolarityMode::Merged);
        for &(t, x, y) in &pts {
            surface.ingest(&Event::new(t, x, y, Polarity::On)).unwrap();
        }
        // re-fire the centre after all neighbours so the whole plane is in the past
        let (t_last, _, _) = *pts.last().unwrap();
        let center = Event::new(t_last + 1, 2, 2, Polarity::On);
        surface.ingest(&center).unwrap();
        let cfg = EdlConfig { t_past: 100_000, ..EdlConfig::default() };
        let f: LocalFlow<f64> = local_flow(&center, &surface, &cfg);
        if f.valid {
            let expected_dir = b.atan2(a);
            // direction of flow follows the time gradient within rounding slack
            prop_assert!(angle_distance(f.theta, expected_dir) < 0.2, "{} vs {}", f.theta, expected_dir);
            prop_assert!(f.speed > 0.0 && f.speed <= MAX_SPEED);
        }
    }

    #[test]
    fn plane_fit_recovers_exact_planes(a in -1e3f64..1e3, b in -1e3f64..1e3, c in -1e4f64..1e4) {
        let pts: Vec<(f64, f64, f64)> = (-2..=2)
            .flat_map(|y| (-2..=2).map(move |x| (x as f64, y as f64)))
            .map(|(x, y)| (x, y, a * x + b * y + c))
            .collect();
        let p = fit_plane(&pts).unwrap();
        prop_assert!((p.a - a).abs() <= 1e-9 * a.abs().max(1.0));
        prop_assert!((p.b - b).abs() <= 1e-9 * b.abs().max(1.0));
        prop_assert!((p.c - c).abs() <= 1e-9 * c.abs().max(1.0));
    }

    #[test]
    fn inlier_count_monotone_in_threshold(
        a in -300.0f64..300.0,
        b in -300.0f64..300.0,
        offsets in prop::collection::vec((-2i32..=2, -2i32..=2, -2000i64..2000), 1..25),
        s1 in 0.01f64..3.0,
        s2 in 0.01f64..3.0,
    ) {
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let plane = PlaneParams { a, b, c: 0.0 };
        let center = SurfacePoint { x: 10, y: 10, t: 100_000 };
        let points: Vec<SurfacePoint> = offsets
            .iter()
            .map(|&(dx, dy, dt)| SurfacePoint {
                x: (10 + dx) as u16,
                y: (10 + dy) as u16,
                t: (100_000 + dt) as u64,
            })
            .collect();
        let count = |s: f64| count_inliers(&plane, &center, &points, &EdlConfig { inlier_threshold_scale: s, ..EdlConfig::default() });
        prop_assert!(count(lo) <= count(hi));
        prop_assert!(count(hi) <= points.len());
    }

    #[test]
    fn chosen_scale_attains_the_maximum(
        cells in prop::collection::vec((0..W, 0..H, 1.0f64..500.0, 0.0f64..TAU), 1..120),
        cx in 0..W,
        cy in 0..H,
        tie in 0.0f64..0.2,
    ) {
        let mut flows = FlowSurface::<f64>::new(geometry(), 10_000);
        for (i, &(x, y, s, th)) in cells.iter().enumerate() {
            flows.update(x, y, i as u64, &LocalFlow::from_polar(s, th)).unwrap();
        }
        flows.update(cx, cy, cells.len() as u64, &LocalFlow::from_polar(100.0, 0.0)).unwrap();
        let center = Event::new(cells.len() as u64, cx, cy, Polarity::On);
        let scales = ScaleSet { radii: vec![0, 1, 3, 6, 12], t_past: 10_000, min_pool_count: 1, tie_tolerance: tie };
        let rep = select_scale(&center, &LocalFlow::from_polar(100.0, 0.0), &flows, &scales).unwrap();
        let best = rep.per_radius.iter().filter(|r| r.count > 0).map(|r| r.mean_speed).fold(f64::MIN, f64::max);
        prop_assert!((rep.max_mean - best).abs() <= 1e-9 * best.max(1.0));
        prop_assert!(rep.per_radius.iter().all(|r| r.mean_speed <= rep.max_mean + 1e-9));
        let chosen = rep.chosen();
        prop_assert!(chosen.mean_speed >= rep.max_mean * (1.0 - tie) - 1e-9);
        // smallest radius attaining the (tolerant) maximum
        for r in &rep.per_radius[..rep.chosen_index] {
            prop_assert!(r.count == 0 || r.mean_speed < rep.max_mean * (1.0 - tie));
        }
    }

    #[test]
    fn uniform_flow_is_a_fixed_point(
        pixels in prop::collection::vec((0..W, 0..H), 1..80),
        speed in 1.0f64..1000.0,
        theta in 0.0f64..TAU,
    ) {
        let mut flows = FlowSurface::<f64>::new(geometry(), 10_000);
        let f = LocalFlow::from_polar(speed, theta);
        for (i, &(x, y)) in pixels.iter().enumerate() {
            flows.update(x, y, i as u64, &f).unwrap();
        }
        let (x, y) = pixels[0];
        let center = Event::new(pixels.len() as u64, x, y, Polarity::On);
        let rep = select_scale(&center, &f, &flows, &ScaleSet { t_past: 10_000, ..ScaleSet::default() }).unwrap();
        let v = rep.corrected();
        let want = f.to_vector();
        prop_assert!((v.vx - want.vx).abs() <= 1e-9 * speed && (v.vy - want.vy).abs() <= 1e-9 * speed);
        prop_assert_eq!(rep.chosen_radius, 0);
    }

    #[test]
    fn aee_translation_invariant(
        pairs in prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0, -500.0f64..500.0, -500.0f64..500.0), 1..50),
        sx in -1e3f64..1e3,
        sy in -1e3f64..1e3,
    ) {
        let est: Vec<FlowVector<f64>> = pairs.iter().map(|p| FlowVector::new(p.0, p.1)).collect();
        let gt: Vec<FlowVector<f64>> = pairs.iter().map(|p| FlowVector::new(p.2, p.3)).collect();
        let shift = |v: &[FlowVector<f64>]| v.iter().map(|f| FlowVector::new(f.vx + sx, f.vy + sy)).collect::<Vec<_>>();
        let a = aee(&est, &gt).unwrap();
        let b = aee(&shift(&est), &shift(&gt)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        // mean, not sum
        let direct = pairs.iter().map(|p| (p.0 - p.2).hypot(p.1 - p.3)).sum::<f64>() / pairs.len() as f64;
        prop_assert!((a - direct).abs() <= 1e-9 * direct.max(1.0));
    }

    #[test]
    fn affine_fit_recovers_similarities(
        cloud in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..60),
        s in 0.2f64..5.0,
        tx in -50.0f64..50.0,
        ty in -50.0f64..50.0,
    ) {
        let (mx, my) = cloud.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let n = cloud.len() as f64;
        let spread: f64 = cloud.iter().map(|p| (p.0 - mx / n).hypot(p.1 - my / n)).sum();
        prop_assume!(spread > 1e-3);
        let actual: Vec<(f64, f64)> = cloud.iter().map(|&(x, y)| (s * x + tx, s * y + ty)).collect();
        let fit = affine_fit(&cloud, &actual).unwrap();
        prop_assert!((fit.scale - s).abs() <= 1e-9 * s);
        let (cx, cy) = (mx / n, my / n);
        let expect = (s * cx + tx - cx, s * cy + ty - cy);
        prop_assert!((fit.translation.0 - expect.0).abs() <= 1e-7);
        prop_assert!((fit.translation.1 - expect.1).abs() <= 1e-7);
        prop_assert!(fit.residual <= 1e-6);
    }

    #[test]
    fn circular_mean_ignores_full_turns(
        angles in prop::collection::vec(0.0f64..TAU, 1..60),
        turns in prop::collection::vec(-3i32..=3, 60),
    ) {
        let shifted: Vec<f64> = angles.iter().zip(&turns).map(|(a, k)| a + *k as f64 * TAU).collect();
        let h1 = direction_stats_from_angles(&angles, 36).unwrap();
        let h2 = direction_stats_from_angles(&shifted, 36).unwrap();
        prop_assume!(h1.resultant > 1e-6);
        prop_assert!(angle_distance(h1.circular_mean, h2.circular_mean) <= 1e-6);
        prop_assert!((h1.resultant - h2.resultant).abs() <= 1e-9);
    }

    #[test]
    fn flow_window_list_and_dense_agree(
        updates in prop::collection::vec((0u64..50, 0..W, 0..H, 1.0f64..100.0), 1..200),
        cx in 0..W,
        cy in 0..H,
        radius in 0u32..12,
        t_past in 0u64..3000,
    ) {
        let mut flows = FlowSurface::<f64>::new(geometry(), 3_000);
        let mut t = 0;
        for &(dt, x, y, s) in &updates {
            t += dt;
            flows.update(x, y, t, &LocalFlow::from_polar(s, 1.0)).unwrap();
        }
        let mut via_query = Vec::new();
        flows.visit_window(cx, cy, t, radius, t_past, |dx, dy, c| via_query.push((dx, dy, c.t, c.speed.to_bits())));
        let mut brute = Vec::new();
        for y in 0..H {
            for x in 0..W {
                let (dx, dy) = (x as i32 - cx as i32, y as i32 - cy as i32);
                if let Some(c) = flows.get(x, y) {
                    if dx.unsigned_abs() <= radius && dy.unsigned_abs() <= radius && c.t + t_past >= t && c.t <= t {
                        brute.push((dx, dy, c.t, c.speed.to_bits()));
                    }
                }
            }
        }
        via_query.sort();
        brute.sort();
        prop_assert_eq!(via_query, brute);
    }
}
