use proptest::prelude::*;

use stratcv::boosting::{best_split, split_gain, Dataset, TrainConfig};
use stratcv::crossval::merge_global_folds;
use stratcv::datagen::Record;
use stratcv::experiments::{reference_model, ExperimentConfig};
use stratcv::federation::{assign_hospitals, audit, inject_duplicates, FederatedDataset};
use stratcv::partition::{compute_thresholds, random_partition, stratified_partition};
use stratcv::rng::SeedStream;

fn federation(seed: u64, n: usize, n_h: usize, dup_frac: f64) -> FederatedDataset {
    let model = reference_model(&ExperimentConfig::default()).unwrap();
    let stream = SeedStream::root(seed);
    let records: Vec<Record> = model.generate(n, &mut stream.child("records", 0).rng());
    let fed = assign_hospitals(&records, n_h, &mut stream.child("hospitals", 0).rng()).unwrap();
    let n_dup = (n as f64 * dup_frac) as usize;
    inject_duplicates(&fed, n_dup, &mut stream.child("duplicates", 0).rng()).unwrap()
}

prop_compose! {
    fn instance()(seed in any::<u64>(), n in 20usize..400, n_h in 1usize..6, k in 2usize..7, frac in 0.0f64..0.5)
        -> (FederatedDataset, usize) {
        (federation(seed, n, n_h, if n_h == 1 { 0.0 } else { frac }), k)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn duplicates_respect_definition_1((fed, _) in instance()) {
        let report = audit(&fed, None).unwrap();
        prop_assert!(report.def1_satisfied());
        prop_assert_eq!(fed.total_records(), fed.n_original + fed.n_duplicates);
    }

    #[test]
    fn stratified_folds_are_monotone_in_the_covariate((fed, k) in instance(), c in 1usize..=10) {
        let folds = stratified_partition(&fed, &compute_thresholds(&fed, c, k).unwrap()).unwrap();
        let mut pairs: Vec<(f64, usize)> = Vec::new();
        for (h, recs) in fed.hospitals.iter().enumerate() {
            for (i, r) in recs.iter().enumerate() {
                pairs.push((r.x[c - 1], folds.fold_of(h, i)));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            prop_assert!(w[0].1 <= w[1].1, "{:?} then {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn stratified_folds_satisfy_definition_3((fed, k) in instance(), c in 1usize..=10) {
        let folds = stratified_partition(&fed, &compute_thresholds(&fed, c, k).unwrap()).unwrap();
        prop_assert_eq!(audit(&fed, Some(&folds)).unwrap().def3_satisfied(), Some(true));
    }

    #[test]
    fn stratified_fold_sizes_are_balanced((fed, k) in instance(), c in 1usize..=10) {
        // copies of one individual share a value and sit in distinct hospitals, so a
        // tied block holds at most n_h records and can shift a boundary by less than that
        let folds = stratified_partition(&fed, &compute_thresholds(&fed, c, k).unwrap()).unwrap();
        let n = fed.total_records() as f64;
        for size in folds.global_sizes() {
            prop_assert!((size as f64 - n / k as f64).abs() <= fed.n_hospitals() as f64, "{size} vs {}", n / k as f64);
        }
    }

    #[test]
    fn global_folds_partition_the_records((fed, k) in instance(), seed in any::<u64>(), stratify in any::<bool>()) {
        let folds = if stratify {
            stratified_partition(&fed, &compute_thresholds(&fed, 1, k).unwrap()).unwrap()
        } else {
            random_partition(&fed, k, &mut SeedStream::root(seed).rng()).unwrap()
        };
        let merged = merge_global_folds(&fed, &folds).unwrap();
        prop_assert_eq!(merged.len(), k);
        let mut seen: Vec<*const Record> = merged.iter().flatten().map(|r| *r as *const Record).collect();
        prop_assert_eq!(seen.len(), fed.total_records());
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), fed.total_records());
    }

    #[test]
    fn random_folds_are_balanced_per_hospital((fed, k) in instance(), seed in any::<u64>()) {
        let folds = random_partition(&fed, k, &mut SeedStream::root(seed).rng()).unwrap();
        for idx in folds.per_hospital() {
            let mut counts = vec![0usize; k];
            for &f in idx {
                counts[f] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "{counts:?}");
        }
    }

    #[test]
    fn best_split_beats_every_cut(
        rows in prop::collection::vec((0u8..6, 0u8..6, -1.0f64..1.0, 0.01f64..0.25), 2..12),
        lambda in 0.0f64..2.0,
    ) {
        let n = rows.len();
        let values: Vec<f64> = rows.iter().flat_map(|r| [f64::from(r.0), f64::from(r.1)]).collect();
        let data = Dataset::new(2, values, vec![0; n]).unwrap();
        let g: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let h: Vec<f64> = rows.iter().map(|r| r.3).collect();
        let cfg = TrainConfig { reg_lambda: lambda, gamma: 0.0, min_child_weight: 0.0, ..Default::default() };
        let idx: Vec<usize> = (0..n).collect();
        let best = best_split(&data, &idx, &g, &h, &cfg);
        let (gt, ht) = (g.iter().sum::<f64>(), h.iter().sum::<f64>());
        let best_gain = best.map_or(0.0, |s| s.gain);
        for f in 0..2 {
            for t in 0..6 {
                let t = f64::from(t) + 0.5;
                let (gl, hl) = idx.iter().filter(|&&r| data.value(r, f) < t).fold((0.0, 0.0), |a, &r| (a.0 + g[r], a.1 + h[r]));
                let gain = split_gain(gl, hl, gt, ht, lambda, 0.0);
                prop_assert!(gain <= best_gain + 1e-12, "cut x{f} < {t} gains {gain} > {best_gain}");
            }
        }
    }
}
