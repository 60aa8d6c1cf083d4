use std::io::{BufReader, Cursor};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use armsflow::io::{read_events, write_events, write_events_binary, write_events_csv, EventFormat, EventReader};
use armsflow::{Event, Polarity, SensorGeometry};

fn random_events(n: usize, g: SensorGeometry, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = rng.gen_range(0..1_000_000u64);
    (0..n)
        .map(|_| {
            t += rng.gen_range(0..50);
            let p = if rng.gen() { Polarity::On } else { Polarity::Off };
            Event::new(t, rng.gen_range(0..g.width), rng.gen_range(0..g.height), p)
        })
        .collect()
}

#[test]
fn hundred_thousand_events_roundtrip_both_formats() {
    let g = SensorGeometry::new(346, 260).unwrap();
    let events = random_events(100_000, g, 42);
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("ev.csv", EventFormat::Csv), ("ev.evt", EventFormat::Binary)] {
        let path = dir.path().join(name);
        write_events(&path, format, g, &events).unwrap();
        let (read_g, back) = read_events(&path, format, Some(g)).unwrap();
        assert_eq!(read_g, Some(g));
        assert_eq!(back, events, "{name}");
    }
    // binary files carry their own geometry
    let (read_g, _) = read_events(&dir.path().join("ev.evt"), EventFormat::Binary, None).unwrap();
    assert_eq!(read_g, Some(g));
}

proptest! {
    #[test]
    fn roundtrip_is_identity(
        w in 1u16..2000,
        h in 1u16..2000,
        raw in prop::collection::vec((0u64..1_000_000, any::<u16>(), any::<u16>(), any::<bool>()), 0..200),
    ) {
        let g = SensorGeometry::new(w, h).unwrap();
        let mut t = 0u64;
        let events: Vec<Event> = raw
            .into_iter()
            .map(|(dt, x, y, p)| {
                t += dt;
                Event::new(t, x % w, y % h, if p { Polarity::On } else { Polarity::Off })
            })
            .collect();

        let mut csv = Vec::new();
        write_events_csv(&mut csv, &events).unwrap();
        let back: Vec<Event> = EventReader::csv(BufReader::new(Cursor::new(csv)), Some(g))
            .collect::<Result<_, _>>()
            .unwrap();
        prop_assert_eq!(&back, &events);

        let mut bin = Vec::new();
        write_events_binary(&mut bin, g, &events).unwrap();
        prop_assert_eq!(bin.len(), 16 + 13 * events.len());
        let reader = EventReader::binary(Cursor::new(bin), None).unwrap();
        prop_assert_eq!(reader.geometry(), Some(g));
        let back: Vec<Event> = reader.collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(&back, &events);
    }
}
