mod common;

use std::collections::BTreeMap;

use chronofuse::charts::{
    build_line_chart, build_radial_chart, line_segments, normalize_series, radial_point, ChartGeometry, ChartRequest,
    Normalization, RefRange,
};
use chronofuse::ingest::{Observation, TimePoint};
use chronofuse::store::{add_report, column_count_formula, fuse, slice_range, TemporalTable};
use common::gen;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn by_report(obs: &[Observation]) -> BTreeMap<String, Vec<Observation>> {
    let mut out: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    for o in obs {
        out.entry(o.source.as_str().to_string()).or_default().push(o.clone());
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fusion_ignores_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let set = gen::observation_set(&mut r);
        let reference = fuse(&set.observations, set.granularity).unwrap();
        let mut shuffled = set.observations.clone();
        shuffled.shuffle(&mut r);
        prop_assert_eq!(fuse(&shuffled, set.granularity).unwrap(), reference);
    }

    #[test]
    fn incremental_fusion_matches_batch(seed in any::<u64>(), split in 0usize..10) {
        let mut r = rng(seed);
        let set = gen::observation_set(&mut r);
        let reports: Vec<Vec<Observation>> = by_report(&set.observations).into_values().collect();
        let k = split.min(reports.len());
        let a: Vec<Observation> = reports[..k].concat();
        let b: Vec<Observation> = reports[k..].concat();
        let step = add_report(&fuse(&a, set.granularity).unwrap().table, &b).unwrap();
        prop_assert_eq!(step, fuse(&set.observations, set.granularity).unwrap().table);
    }

    #[test]
    fn column_count_is_bounded(seed in any::<u64>()) {
        let set = gen::observation_set(&mut rng(seed));
        let t = fuse(&set.observations, set.granularity).unwrap().table;
        let (m, r) = (set.m_max as u128, set.reports as u128);
        prop_assert!(t.column_count() as u128 <= m * r);
        prop_assert!(m * r <= column_count_formula(m as u64, r as u64));
    }

    #[test]
    fn persistence_round_trip(seed in any::<u64>()) {
        let set = gen::observation_set(&mut rng(seed));
        let mut t = fuse(&set.observations, set.granularity).unwrap().table;
        t.set_reference_ranges(|m| (m < "M4").then(|| RefRange::new(-1.5, 1000.25, "u;%").unwrap()));
        let text = t.to_store_text();
        prop_assert_eq!(TemporalTable::from_store_text(&text).unwrap(), t);
    }

    #[test]
    fn covering_slice_range_is_identity(seed in any::<u64>()) {
        let set = gen::observation_set(&mut rng(seed));
        let t = fuse(&set.observations, set.granularity).unwrap().table;
        let (Some(first), Some(last)) = (t.slices().next(), t.slices().last()) else {
            return Ok(());
        };
        let from = TimePoint::day(first.start());
        let to = TimePoint::day(last.end_exclusive().pred_opt().unwrap());
        prop_assert_eq!(slice_range(&t, from, to).unwrap(), t);
    }

    #[test]
    fn reference_normalization_is_affine_and_monotone(
        low in -1e3..1e3f64,
        width in 1e-3..1e3f64,
        seed in any::<u64>(),
    ) {
        let range = RefRange::new(low, low + width, "u").unwrap();
        let ends = normalize_series("m", &[(0.0, range.low), (1.0, range.high)], Some(&range), Normalization::ReferenceRange).unwrap();
        prop_assert_eq!(ends.points[0].v, 0.0);
        prop_assert_eq!(ends.points[1].v, 1.0);
        let raw = gen::series(&mut rng(seed), 20);
        let s = normalize_series("m", &raw, Some(&range), Normalization::ReferenceRange).unwrap();
        for (i, (a, b)) in raw.iter().zip(&s.points).enumerate() {
            let expected = (a.1 - range.low) / width;
            prop_assert!((b.v - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            prop_assert_eq!(s.out_of_range.contains(&i), !(0.0..=1.0).contains(&b.v));
            for (c, d) in raw.iter().zip(&s.points) {
                if a.1 < c.1 {
                    prop_assert!(b.v < d.v);
                }
            }
        }
    }

    #[test]
    fn reference_normalization_is_scale_equivariant(
        low in -1e3..1e3f64,
        width in 1e-2..1e3f64,
        c in 1e-3..1e3f64,
        seed in any::<u64>(),
    ) {
        let raw = gen::series(&mut rng(seed), 16);
        let range = RefRange::new(low, low + width, "u").unwrap();
        let scaled_range = RefRange::new(low * c, (low + width) * c, "u").unwrap();
        let scaled: Vec<(f64, f64)> = raw.iter().map(|&(t, v)| (t, v * c)).collect();
        let a = normalize_series("m", &raw, Some(&range), Normalization::ReferenceRange).unwrap();
        let b = normalize_series("m", &scaled, Some(&scaled_range), Normalization::ReferenceRange).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!((p.v - q.v).abs() <= 1e-12 * p.v.abs().max(1.0), "{} vs {}", p.v, q.v);
        }
    }

    #[test]
    fn segments_reproduce_endpoints(seed in any::<u64>(), len in 1usize..40) {
        let raw = gen::series(&mut rng(seed), len);
        let s = normalize_series("m", &raw, None, Normalization::None).unwrap();
        let segs = line_segments(&s);
        prop_assert_eq!(segs.len(), len - 1);
        for (k, seg) in segs.iter().enumerate() {
            for p in [s.points[k], s.points[k + 1]] {
                let y = seg.slope * p.t + seg.intercept;
                prop_assert!((y - p.v).abs() <= 1e-9 * p.v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn perturbing_a_point_is_local(seed in any::<u64>(), len in 2usize..30, pick in any::<prop::sample::Index>()) {
        let raw = gen::series(&mut rng(seed), len);
        let i = pick.index(len);
        let mut moved = raw.clone();
        moved[i].1 += 17.5;
        let before = line_segments(&normalize_series("m", &raw, None, Normalization::None).unwrap());
        let after = line_segments(&normalize_series("m", &moved, None, Normalization::None).unwrap());
        for k in 0..before.len() {
            let touched = k + 1 == i || k == i;
            prop_assert_eq!(before[k] != after[k], touched, "segment {}", k);
        }
    }

    #[test]
    fn radial_angles_are_equally_spaced(n in 1usize..500) {
        let step = std::f64::consts::TAU / n as f64;
        for i in 0..n {
            let angle = radial_point(i, n, 0.5, 0.0, 1.0, 0.1, 1.0).unwrap().angle;
            prop_assert!((angle - step * i as f64).abs() <= 1e-12);
            if i > 0 {
                let prev = radial_point(i - 1, n, 0.5, 0.0, 1.0, 0.1, 1.0).unwrap().angle;
                prop_assert!((angle - prev - step).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn chart_building_is_pure(seed in any::<u64>()) {
        let set = gen::observation_set(&mut rng(seed));
        let t = fuse(&set.observations, set.granularity).unwrap().table;
        let metrics: Vec<String> = t.columns().map(|c| c.metric.clone()).collect();
        if metrics.is_empty() {
            return Ok(());
        }
        let req = ChartRequest::new(metrics).normalization(Normalization::MinMax);
        let a = build_line_chart(&t, &req).unwrap();
        prop_assert_eq!(&a, &build_line_chart(&t, &req).unwrap());
        if t.row_count() >= 3 {
            let r = build_radial_chart(&t, &req).unwrap();
            prop_assert_eq!(&r, &build_radial_chart(&t, &req).unwrap());
            let ChartGeometry::Polygons(rings) = &r.geometry else { panic!("radial geometry") };
            for ring in rings.iter().filter(|ring| !ring.is_empty()) {
                prop_assert_eq!(ring.first(), ring.last());
            }
        }
    }
}
