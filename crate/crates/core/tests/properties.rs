mod common;

use feature_partition::harness::RunRecord;
use feature_partition::partition::{avg_usage, constrain, n_free, overlap_band, FeasibleSpec, SharingSpec};
use feature_partition::search::Role;
use feature_partition::synthesis::{round_to_mask, SubsetAllocation};
use proptest::prelude::*;

fn raw_spec(max_n: usize) -> impl Strategy<Value = SharingSpec> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.0f64..=1.0, n_free(n)).prop_map(move |free| SharingSpec::from_free(n, &free).unwrap())
    })
}

fn fractions(max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.0f64..1.0, 1 << n).prop_filter_map("all zero", move |w| {
            let s: f64 = w.iter().sum();
            (s > 0.0).then(|| (n, w.iter().map(|v| v / s).collect()))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn constrain_output_is_feasible(raw in raw_spec(9)) {
        let out = constrain(&raw);
        let n = raw.n_tasks();
        for i in 0..n {
            prop_assert_eq!(out.get(i, i), raw.get(i, i));
            for j in 0..n {
                prop_assert_eq!(out.get(i, j), out.get(j, i));
                if i != j {
                    prop_assert!(common::exactly_in_band(out.get(i, j), out.get(i, i), out.get(j, j)));
                }
            }
        }
        prop_assert!(FeasibleSpec::new(out.into_sharing()).is_ok());
    }

    #[test]
    fn constrain_is_monotone_in_each_overlap(raw in raw_spec(6), pick in any::<prop::sample::Index>(), bump in 0.0f64..1.0) {
        let n = raw.n_tasks();
        prop_assume!(n >= 2);
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let (i, j) = pairs[pick.index(pairs.len())];
        let mut rows: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| raw.get(r, c)).collect()).collect();
        let higher = (raw.get(i, j) + bump).min(1.0);
        rows[i][j] = higher;
        rows[j][i] = higher;
        let raised = SharingSpec::from_rows(&rows).unwrap();
        prop_assert!(constrain(&raised).get(i, j) >= constrain(&raw).get(i, j));
    }

    #[test]
    fn constrain_hits_band_endpoints(d in prop::collection::vec(0.0f64..=1.0, 2..6), top in any::<bool>()) {
        let n = d.len();
        let fill = if top { 1.0 } else { 0.0 };
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { d[i] } else { fill }).collect()).collect();
        let out = constrain(&SharingSpec::from_rows(&rows).unwrap());
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let (lo, hi) = overlap_band(d[i], d[j]);
                    prop_assert_eq!(out.get(i, j), if top { hi } else { lo });
                }
            }
        }
    }

    #[test]
    fn constrain_preserves_usage(raw in raw_spec(9)) {
        prop_assert_eq!(avg_usage(&constrain(&raw)), avg_usage(&raw));
    }

    #[test]
    fn feasible_specs_are_fixed_points_of_projection(raw in raw_spec(7)) {
        let f = constrain(&raw);
        prop_assert_eq!(FeasibleSpec::project(f.as_sharing()), f);
    }

    #[test]
    fn rounding_uses_every_channel((n, x) in fractions(5), c in 1usize..300) {
        let alloc = SubsetAllocation::new(n, x.clone()).unwrap();
        let mask = round_to_mask(&alloc, c).unwrap();
        prop_assert_eq!(mask.n_channels(), c);
        let mut counts = vec![0usize; 1 << n];
        for ch in 0..c {
            let s = mask.row(ch).iter().enumerate().fold(0usize, |acc, (t, &b)| acc | (b as usize) << t);
            counts[s] += 1;
        }
        prop_assert_eq!(counts.iter().sum::<usize>(), c);
        for (k, &cnt) in counts.iter().enumerate() {
            prop_assert!((cnt as f64 - x[k] * c as f64).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn text_format_round_trips(raw in raw_spec(8)) {
        let parsed: SharingSpec = raw.to_string().parse().unwrap();
        prop_assert_eq!(parsed, raw);
    }

    #[test]
    fn free_coordinates_round_trip(raw in raw_spec(8)) {
        prop_assert_eq!(SharingSpec::from_free(raw.n_tasks(), &raw.free_coords()).unwrap(), raw);
    }

    #[test]
    fn records_round_trip(
        raw in raw_spec(6),
        step in 0usize..100_000,
        scores in prop::collection::vec(-10.0f64..10.0, 1..4),
        err in prop::option::of(0.0f64..1.0),
        ms in prop::option::of(0u64..1_000_000),
        role in prop::sample::select(vec![Role::Sample, Role::Center, Role::Plus, Role::Minus, Role::Baseline, Role::Single]),
    ) {
        let feasible = constrain(&raw);
        let record = RunRecord {
            step,
            iteration: step / 33,
            role,
            direction: (role == Role::Plus).then_some(step % 16),
            avg_usage: feasible.avg_usage(),
            raw,
            feasible,
            aggregate: scores.iter().sum::<f64>() / scores.len() as f64,
            per_task_scores: scores,
            synthesis_median_error: err,
            wall_millis: ms,
        };
        let line = serde_json::to_string(&record).unwrap();
        let back: RunRecord = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(back, record);
    }
}
