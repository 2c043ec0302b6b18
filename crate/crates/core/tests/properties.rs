//! Property tests for the module invariants.

use std::sync::Arc;

use proptest::prelude::*;

use byzsim_core::aggregators::{aggregate, AggregatorKind};
use byzsim_core::attacks::{craft, AdversaryView, AttackKind};
use byzsim_core::compressors::{compress, decompress, omega, CompressorKind, Payload};
use byzsim_core::harness::{parse_libsvm, partition, read_csv, write_csv, PartitionScheme, Row};
use byzsim_core::linalg::{dot, finite_diff_grad};
use byzsim_core::objective::{LabeledDataset, LocalObjective, Regularizer};
use byzsim_core::rng::RngStream;
use byzsim_core::Vector;

fn vector(d: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-100.0f64..100.0, d).prop_map(Vector::from)
}

fn vectors(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vector>> {
    prop::collection::vec(vector(d), n)
}

fn int_vectors(n: usize, d: usize) -> impl Strategy<Value = Vec<Vector>> {
    prop::collection::vec(
        prop::collection::vec(-1000i32..1000, d).prop_map(|v| v.into_iter().map(f64::from).collect::<Vector>()),
        n,
    )
}

fn kinds() -> Vec<AggregatorKind> {
    vec![
        AggregatorKind::Mean,
        AggregatorKind::CM,
        AggregatorKind::gm(),
        AggregatorKind::Krum { num_byz: 1 },
        AggregatorKind::bucketed(AggregatorKind::CM, 2),
        AggregatorKind::bucketed(AggregatorKind::Mean, 3),
    ]
}

fn rng(seed: u64) -> RngStream {
    RngStream::new(seed, 77)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn test_prop_unanimity(v in vector(5), n in 4usize..12, seed in any::<u64>()) {
        let inputs = vec![v.clone(); n];
        for kind in kinds() {
            prop_assert_eq!(aggregate(&kind, &inputs, &mut rng(seed)).unwrap(), v.clone());
        }
    }

    #[test]
    fn test_prop_permutation_invariance(inputs in vectors(4..10, 3), seed in any::<u64>()) {
        let perm = rng(seed).permutation(inputs.len());
        let shuffled: Vec<Vector> = perm.iter().map(|&i| inputs[i].clone()).collect();
        // Krum breaks score ties by input position, so it is left out
        for kind in [AggregatorKind::Mean, AggregatorKind::CM, AggregatorKind::gm()] {
            let a = aggregate(&kind, &inputs, &mut rng(0)).unwrap();
            let b = aggregate(&kind, &shuffled, &mut rng(0)).unwrap();
            prop_assert_eq!(a, b, "{:?}", kind);
        }
    }

    #[test]
    fn test_prop_translation_equivariance(
        inputs in prop_oneof![int_vectors(4, 3), int_vectors(8, 3)],
        shift in prop::collection::vec(-1000i32..1000, 3),
        seed in any::<u64>(),
    ) {
        let shift: Vector = shift.into_iter().map(f64::from).collect();
        let moved: Vec<Vector> = inputs.iter().map(|v| v.add(&shift)).collect();
        for kind in [AggregatorKind::Mean, AggregatorKind::CM, AggregatorKind::Krum { num_byz: 1 }, AggregatorKind::bucketed(AggregatorKind::CM, 2)] {
            let a = aggregate(&kind, &inputs, &mut rng(seed)).unwrap().add(&shift);
            let b = aggregate(&kind, &moved, &mut rng(seed)).unwrap();
            prop_assert_eq!(a, b, "{:?}", kind);
        }
        let a = aggregate(&AggregatorKind::gm(), &inputs, &mut rng(seed)).unwrap().add(&shift);
        let b = aggregate(&AggregatorKind::gm(), &moved, &mut rng(seed)).unwrap();
        prop_assert!(a.sub(&b).max_abs() <= 1e-9);
    }

    #[test]
    fn test_prop_cm_containment_and_krum_membership(inputs in vectors(4..10, 4)) {
        let cm = aggregate(&AggregatorKind::CM, &inputs, &mut rng(0)).unwrap();
        for j in 0..4 {
            let lo = inputs.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
            let hi = inputs.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= cm[j] && cm[j] <= hi);
        }
        let krum = aggregate(&AggregatorKind::Krum { num_byz: 1 }, &inputs, &mut rng(0)).unwrap();
        prop_assert!(inputs.contains(&krum));
    }

    #[test]
    fn test_prop_bucketing_singletons_equal_mean(inputs in vectors(1..10, 3), seed in any::<u64>()) {
        let a = aggregate(&AggregatorKind::Mean, &inputs, &mut rng(0)).unwrap();
        let b = aggregate(&AggregatorKind::bucketed(AggregatorKind::Mean, 1), &inputs, &mut rng(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn test_prop_compressed_messages(x in vector(12), k in 1usize..=12, seed in any::<u64>()) {
        let d = 12;
        let mut r = rng(seed);
        let sparse_cost = k as u64 * (64 + 4);
        for (kind, cost) in [
            (CompressorKind::RandK(k), sparse_cost),
            (CompressorKind::TopK(k), sparse_cost),
            (CompressorKind::Natural, 9 * d as u64),
            (CompressorKind::Identity, 64 * d as u64),
        ] {
            let msg = compress(&kind, &x, &mut r).unwrap();
            prop_assert_eq!(msg.bit_cost, cost);
            prop_assert_eq!(msg.bit_cost, kind.message_bits(d));
            let out = decompress(&msg).unwrap();
            prop_assert_eq!(out.len(), d);
            prop_assert!(out.is_finite());
            if let Payload::Sparse { indices, .. } = &msg.payload {
                prop_assert_eq!(indices.len(), k);
            }
        }
        let top = decompress(&compress(&CompressorKind::TopK(k), &x, &mut r).unwrap()).unwrap();
        prop_assert!(top.dist_sq(&x) <= (1.0 - k as f64 / d as f64) * x.norm_sq());
        let rk = decompress(&compress(&CompressorKind::RandK(k), &x, &mut r).unwrap()).unwrap();
        let scale = d as f64 / k as f64;
        for j in 0..d {
            prop_assert!(rk[j] == 0.0 || rk[j] == scale * x[j]);
        }
        prop_assert_eq!(omega(&CompressorKind::RandK(k), d).unwrap(), scale - 1.0);
    }

    #[test]
    fn test_prop_natural_rounds_to_neighbouring_powers(x in prop::collection::vec(-1e6f64..1e6, 1..20), seed in any::<u64>()) {
        let q = decompress(&compress(&CompressorKind::Natural, &x, &mut rng(seed)).unwrap()).unwrap();
        for (a, b) in x.iter().zip(q.iter()) {
            if *a == 0.0 {
                prop_assert_eq!(*b, 0.0);
                continue;
            }
            prop_assert_eq!(a.signum(), b.signum());
            let lo = 2f64.powf(a.abs().log2().floor());
            prop_assert!(b.abs() == lo || b.abs() == 2.0 * lo || b.abs() == a.abs(), "{} -> {}", a, b);
        }
    }

    #[test]
    fn test_prop_coordinated_attacks_are_identical_and_finite(honest in vectors(2..8, 4), num_byz in 1usize..4, z in 0.0f64..3.0) {
        let view = AdversaryView { honest_aggregands: &honest, shadow_aggregands: &[], num_byz };
        for attack in [AttackKind::Ipm { z }, AttackKind::Alie { z }] {
            let out = craft(&attack, &view).unwrap();
            prop_assert_eq!(out.len(), num_byz);
            prop_assert!(out.iter().all(|v| v.is_finite() && *v == out[0]));
        }
    }

    #[test]
    fn test_prop_heterogeneous_partition_is_a_partition(n in 1usize..200, g in 1usize..20) {
        prop_assume!(g <= n);
        let mut ds = LabeledDataset::new(1);
        for j in 0..n {
            ds.push_row(&[0], &[j as f64], 1.0).unwrap();
        }
        let shards = partition(&Arc::new(ds), g, PartitionScheme::Heterogeneous).unwrap();
        prop_assert_eq!(shards.len(), g);
        let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let flat: Vec<f64> = shards.iter().flat_map(|s| (0..s.len()).map(|j| s.row(j).1[0]).collect::<Vec<_>>()).collect();
        prop_assert_eq!(flat, (0..n).map(|j| j as f64).collect::<Vec<_>>());
    }

    #[test]
    fn test_prop_libsvm_round_trip(
        rows in prop::collection::vec(
            (prop::bool::ANY, prop::collection::btree_map(0u32..30, -1e3f64..1e3, 0..6)),
            1..20,
        )
    ) {
        let mut text = String::new();
        for (pos, feats) in &rows {
            text.push_str(if *pos { "+1" } else { "-1" });
            for (i, v) in feats {
                text.push_str(&format!(" {}:{v:e}", i + 1));
            }
            text.push('\n');
        }
        let ds = parse_libsvm(text.as_bytes(), Some(30)).unwrap();
        prop_assert_eq!(ds.len(), rows.len());
        for (j, (pos, feats)) in rows.iter().enumerate() {
            prop_assert_eq!(ds.label(j), if *pos { 1.0 } else { -1.0 });
            let (idx, val) = ds.row(j);
            prop_assert_eq!(idx.to_vec(), feats.keys().copied().collect::<Vec<_>>());
            prop_assert_eq!(val.to_vec(), feats.values().copied().collect::<Vec<_>>());
        }
    }

    #[test]
    fn test_prop_csv_round_trip(
        rows in prop::collection::vec((0usize..10_000, any::<u32>(), -1e9f64..1e9, 0.0f64..1e9, prop::option::of(-1e3f64..1e3)), 0..20)
    ) {
        let rows: Vec<Row> = rows
            .into_iter()
            .map(|(t, bits, f, g, gap)| Row { t, bits: bits as u64, f, grad_norm_sq: g, gap })
            .collect();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn test_prop_logistic_gradient_matches_finite_differences(
        x in prop::collection::vec(-2.0f64..2.0, 4),
        rows in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 4), prop::bool::ANY), 1..8),
        lambda in 0.0f64..1.0,
        ridge in prop::bool::ANY,
    ) {
        let mut ds = LabeledDataset::new(4);
        for (a, pos) in &rows {
            ds.push_row(&[0, 1, 2, 3], a, if *pos { 1.0 } else { -1.0 }).unwrap();
        }
        let reg = if ridge { Regularizer::ridge(lambda) } else { Regularizer::non_convex(lambda) };
        let obj = LocalObjective::logistic(Arc::new(ds), reg).unwrap();
        let x = Vector::from(x);
        let an = obj.grad(&x).unwrap();
        let h = 1e-6 * (1.0 + x.max_abs());
        let fd = finite_diff_grad(|z| obj.loss(z).unwrap(), &x, h).unwrap();
        prop_assert!(fd.sub(&an).norm() <= 1e-5 * an.norm().max(1e-3), "{:?} vs {:?}", fd, an);
    }

    #[test]
    fn test_prop_rng_streams_reproducible(seed in any::<u64>(), stream in any::<u64>()) {
        let (mut a, mut b) = (RngStream::new(seed, stream), RngStream::new(seed, stream));
        for _ in 0..16 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn test_prop_dot_is_symmetric(a in prop::collection::vec(-1e3f64..1e3, 6), b in prop::collection::vec(-1e3f64..1e3, 6)) {
        prop_assert_eq!(dot(&a, &b).unwrap(), dot(&b, &a).unwrap());
    }
}
