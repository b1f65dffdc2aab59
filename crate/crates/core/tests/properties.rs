use ndarray::{Array1, Array2};
use proptest::prelude::*;
use qrc_core::bench::{
    classification_label, confusion_matrix, generate_dataset, Task, CAT_REGION, SQUEEZED_REGION,
};
use qrc_core::features::{bin_features, CorrectedSeries, Standardizer};
use qrc_core::learn::{softmax, AdamState};
use qrc_core::states::{sample, StateKind, StateSpec};
use qrc_core::{seed, AmplitudePair64};

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * 0.05).collect()
}

fn signal(nodes: usize, values: &[f64]) -> CorrectedSeries<f64> {
    let n = values.len() / nodes;
    let values = Array2::from_shape_vec((nodes, n), values[..nodes * n].to_vec()).unwrap();
    CorrectedSeries::from_values(grid(n), values).unwrap()
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..12), shift in -100.0f64..100.0) {
        let z = Array1::from(logits);
        let p = softmax(z.view());
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let q = softmax((&z + shift).view());
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn binning_is_linear(
        a in prop::collection::vec(-5.0f64..5.0, 2 * 101),
        b in prop::collection::vec(-5.0f64..5.0, 2 * 101),
        (ca, cb) in (-3.0f64..3.0, -3.0f64..3.0),
        n_bins in 1usize..8,
    ) {
        let window = (1.0, 5.0);
        let fa = bin_features(&signal(2, &a), window, n_bins).unwrap();
        let fb = bin_features(&signal(2, &b), window, n_bins).unwrap();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| ca * x + cb * y).collect();
        let fm = bin_features(&signal(2, &mix), window, n_bins).unwrap();
        for ((m, x), y) in fm.values.iter().zip(&fa.values).zip(&fb.values) {
            prop_assert!((m - (ca * x + cb * y)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_bin_per_sample_reproduces_the_signal(values in prop::collection::vec(-5.0f64..5.0, 2..40)) {
        let n = values.len();
        // window [t_0, t_{n-1} + dt) with one bin per recorded sample
        let window = (0.0, n as f64 * 0.05);
        let padded = {
            let mut v = values.clone();
            v.push(0.0);
            CorrectedSeries::from_values(grid(n + 1), Array2::from_shape_vec((1, n + 1), v).unwrap()).unwrap()
        };
        let f = bin_features(&padded, window, n).unwrap();
        // the endpoint sample joins the last bin; compare the others exactly
        for k in 0..n - 1 {
            prop_assert!((f.values[k] - values[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn standardizer_round_trips(rows in 2usize..20, cols in 1usize..6, data in prop::collection::vec(-1e3f64..1e3, 20 * 6)) {
        let x = Array2::from_shape_vec((rows, cols), data[..rows * cols].to_vec()).unwrap();
        let s = Standardizer::fit_rows(&x).unwrap();
        let back = s.invert_rows(&s.apply_rows(&x));
        for (a, b) in back.iter().zip(x.iter()) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn confusion_counts_every_prediction(pairs in prop::collection::vec((0usize..3, 0usize..3), 0..200)) {
        let (preds, labels): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let m = confusion_matrix(&preds, &labels, 3).unwrap();
        prop_assert_eq!(m.iter().flatten().sum::<usize>(), pairs.len());
        for c in 0..3 {
            prop_assert_eq!(m[c].iter().sum::<usize>(), labels.iter().filter(|&&l| l == c).count());
        }
        let correct = preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
        prop_assert_eq!((0..3).map(|c| m[c][c]).sum::<usize>(), correct);
    }

    #[test]
    fn labels_follow_the_regions(mag in 0.0f64..4.0, phase in 0.0f64..3.2) {
        let inside = |(a0, b0, r): (f64, f64, f64)| (mag - a0).powi(2) + (phase - b0).powi(2) < r * r;
        let cat = classification_label(&StateSpec::cat(mag, phase)).unwrap();
        prop_assert_eq!(cat, if inside(CAT_REGION) { 0 } else { 2 });
        let sq = classification_label(&StateSpec::squeezed(mag, phase)).unwrap();
        prop_assert_eq!(sq, if inside(SQUEEZED_REGION) { 0 } else { 1 });
    }

    #[test]
    fn seeds_are_deterministic(parent in any::<u64>(), path in prop::collection::vec(any::<u64>(), 0..5)) {
        prop_assert_eq!(seed::derive(parent, &path), seed::derive(parent, &path));
        let mut extended = path.clone();
        extended.push(0);
        prop_assert_ne!(seed::derive(parent, &path), seed::derive(parent, &extended));
    }

    #[test]
    fn decoupled_decay_contracts(p0 in prop::collection::vec(-10.0f64..10.0, 1..8), steps in 1usize..50) {
        let mut s = AdamState::new(&[p0.len()], 0.004, 0.01);
        let zeros = vec![0.0; p0.len()];
        let mut p = p0.clone();
        let mut last: Vec<f64> = p0.iter().map(|v| v.abs()).collect();
        for _ in 0..steps {
            s.step(&mut [&mut p], &[&zeros], &[true]).unwrap();
            for (v, l) in p.iter().zip(&last) {
                prop_assert!(v.abs() <= *l);
            }
            last = p.iter().map(|v| v.abs()).collect();
        }
        let factor = (1.0f64 - 0.004 * 0.01).powi(steps as i32);
        for (v, v0) in p.iter().zip(&p0) {
            prop_assert!((v - v0 * factor).abs() < 1e-12 * (1.0 + v0.abs()));
        }
    }

    #[test]
    fn samplers_are_reproducible(s in any::<u64>(), r in 0.9f64..1.1, theta in 0.0f64..1.5, mag in 1.12f64..1.38) {
        for spec in [StateSpec::squeezed(r, theta), StateSpec::cat(mag, theta)] {
            let a: Vec<AmplitudePair64> = sample(&spec, 16, &mut seed::stream(s, 3)).unwrap();
            let b: Vec<AmplitudePair64> = sample(&spec, 16, &mut seed::stream(s, 3)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn datasets_are_balanced(s in any::<u64>(), task in prop_oneof![Just(Task::Classification), Just(Task::Regression)]) {
        let n = match task {
            Task::Classification => 100,
            _ => 130,
        };
        let d = generate_dataset(task, n, s).unwrap();
        let kinds = task.kinds();
        for kind in kinds {
            let count = d.samples.iter().filter(|x| x.spec.kind == *kind).count();
            prop_assert_eq!(count, n / kinds.len());
        }
        let (a, b) = task.split_ratio();
        prop_assert_eq!(d.train.len(), n / (a + b) * a);
        prop_assert_eq!(d.train.len() + d.test.len(), n);
        prop_assert_eq!(&generate_dataset(task, n, s).unwrap(), &d);
        if task == Task::Classification {
            prop_assert!(d.samples.iter().all(|x| x.spec.kind != StateKind::Coherent));
        }
    }
}
