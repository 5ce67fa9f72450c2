mod common;

use common::rng;
use proptest::prelude::*;
use pure_core::dataset::Dataset;
use pure_core::netcore::{LayerKind, LayerSpec, Network, NeuronTarget};
use pure_core::purify::{kmeans_fit, nearest, select_references, KMeansParams};
use pure_core::{Error, Tensor};
use rand::seq::SliceRandom;

/// Matrices from a few blobs, with duplicated rows mixed in.
fn matrix() -> impl Strategy<Value = Tensor> {
    (2usize..40, 1usize..6).prop_flat_map(|(n, d)| {
        prop::collection::vec(prop_oneof![3 => -10.0f64..10.0, 1 => Just(0.0)], n * d)
            .prop_map(move |v| Tensor::new(vec![n, d], v).unwrap())
    })
}

fn case() -> impl Strategy<Value = (Tensor, KMeansParams)> {
    (matrix(), 1usize..6, any::<u64>()).prop_map(|(m, k, seed)| {
        let k = k.min(m.rows());
        (m, KMeansParams::new(k, seed))
    })
}

fn inertia(m: &Tensor, centroids: &Tensor, labels: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        for (a, b) in m.row(i).iter().zip(centroids.row(l)) {
            s += (a - b) * (a - b);
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lloyd_inertia_never_increases((m, p) in case()) {
        match kmeans_fit(&m, &p) {
            Ok(fit) => {
                for w in fit.inertia_trace.windows(2) {
                    prop_assert!(w[1] <= w[0], "{:?}", fit.inertia_trace);
                }
                prop_assert_eq!(*fit.inertia_trace.last().unwrap(), fit.inertia);
            }
            Err(e) => prop_assert!(matches!(e, Error::KMeans(_))),
        }
    }

    #[test]
    fn fit_is_bit_exact_under_fixed_seed((m, p) in case()) {
        let a = kmeans_fit(&m, &p);
        let b = kmeans_fit(&m, &p);
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert_eq!(a.labels, b.labels);
            prop_assert_eq!(a.inertia_trace, b.inertia_trace);
            let (ca, cb): (Vec<u64>, Vec<u64>) = (
                a.centroids.data().iter().map(|v| v.to_bits()).collect(),
                b.centroids.data().iter().map(|v| v.to_bits()).collect(),
            );
            prop_assert_eq!(ca, cb);
        }
    }

    #[test]
    fn labels_are_nearest_centroids_and_nonempty((m, p) in case()) {
        if let Ok(fit) = kmeans_fit(&m, &p) {
            let mut counts = vec![0usize; p.k];
            for i in 0..m.rows() {
                let (c, _) = nearest(&fit.centroids, m.row(i));
                prop_assert_eq!(c, fit.labels[i]);
                counts[c] += 1;
            }
            prop_assert!(counts.iter().all(|&c| c > 0));
            let direct = inertia(&m, &fit.centroids, &fit.labels);
            prop_assert!((direct - fit.inertia).abs() <= 1e-9 * (1.0 + direct));
        }
    }

    #[test]
    fn one_cluster_is_the_column_mean(m in matrix(), seed in any::<u64>()) {
        let fit = kmeans_fit(&m, &KMeansParams::new(1, seed)).unwrap();
        for j in 0..m.cols() {
            let mean = (0..m.rows()).map(|i| m.get2(i, j)).sum::<f64>() / m.rows() as f64;
            prop_assert!((fit.centroids.get2(0, j) - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
        }
        prop_assert!(fit.labels.iter().all(|&l| l == 0));
    }
}

#[test]
fn two_tight_pairs() {
    let m = Tensor::new(vec![4, 1], vec![0.0, 0.1, 10.0, 10.1]).unwrap();
    for seed in 0..20 {
        let fit = kmeans_fit(&m, &KMeansParams::new(2, seed)).unwrap();
        assert_eq!(fit.labels[0], fit.labels[1]);
        assert_eq!(fit.labels[2], fit.labels[3]);
        assert_ne!(fit.labels[0], fit.labels[2]);
        assert!((fit.inertia - 0.01).abs() < 1e-12);
    }
}

#[test]
fn too_few_distinct_rows_is_numerical() {
    let m = Tensor::new(vec![5, 2], vec![1.0; 10]).unwrap();
    let err = kmeans_fit(&m, &KMeansParams::new(2, 0)).unwrap_err();
    assert!(err.is_numerical());
}

#[test]
fn references_ignore_dataset_order() {
    let net = Network::new(vec![1], vec![LayerSpec::new("relu", LayerKind::Relu)]).unwrap();
    // Includes ties so the id tie-break is exercised.
    let values = [0.5, 2.0, 2.0, -1.0, 3.0, 0.5, 2.0, 1.0];
    let mut items: Vec<(String, Tensor)> =
        values.iter().enumerate().map(|(i, &v)| (format!("s{i:02}"), Tensor::from_vec(vec![v]))).collect();
    let target = NeuronTarget::scalar("relu", 0);
    let mut prev = None;
    for seed in 0..10 {
        items.shuffle(&mut rng(seed));
        let ds = Dataset::new(items.iter().map(|p| p.0.clone()).collect(), items.iter().map(|p| p.1.clone()).collect()).unwrap();
        let refs = select_references(&net, &ds, &target, 4).unwrap();
        let ids: Vec<String> = refs.ids().map(String::from).collect();
        assert_eq!(ids, ["s04", "s01", "s02", "s06"]);
        if let Some(p) = prev.replace(refs.entries.clone()) {
            assert_eq!(p, refs.entries);
        }
    }
}
