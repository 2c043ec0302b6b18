//! Harness behavior through the public API: files, partitions, run loops.

use std::io::Write;
use std::sync::Arc;

use byzsim_core::algorithms::Algorithm;
use byzsim_core::harness::config::{AttackName, SyntheticKind};
use byzsim_core::harness::{
    emit_csv, load_libsvm, partition, read_csv, run, run_problem, write_csv, ExperimentConfig, PartitionScheme, Problem,
};
use byzsim_core::objective::LabeledDataset;
use byzsim_core::Error;

fn numbered(n: usize) -> Arc<LabeledDataset> {
    let mut ds = LabeledDataset::new(1);
    for j in 0..n {
        ds.push_row(&[0], &[j as f64], if j % 2 == 0 { 1.0 } else { -1.0 }).unwrap();
    }
    Arc::new(ds)
}

#[test]
fn test_partition_full_phishing_size_into_13() {
    let ds = numbered(11_055);
    let shards = partition(&ds, 13, PartitionScheme::Heterogeneous).unwrap();
    let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
    assert!(sizes.iter().all(|&s| s == 850 || s == 851), "{sizes:?}");
    assert_eq!(sizes.iter().sum::<usize>(), 11_055);
    assert_eq!(sizes.iter().filter(|&&s| s == 851).count(), 5);
    // contiguous, order preserving, disjoint
    let mut next = 0.0;
    for s in &shards {
        for j in 0..s.len() {
            assert_eq!(s.row(j).1[0], next);
            next += 1.0;
        }
    }
}

#[test]
fn test_load_libsvm_from_file() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "1 1:0.5 3:2.0").unwrap();
    writeln!(file, "-1 2:1").unwrap();
    writeln!(file, "0 68:1").unwrap();
    let ds = load_libsvm(file.path(), None).unwrap();
    assert_eq!((ds.len(), ds.dim()), (3, 68));
    assert_eq!(ds.row(0), (&[0u32, 2][..], &[0.5, 2.0][..]));
    assert_eq!(ds.labels(), &[1.0, -1.0, -1.0]);
    assert!(matches!(
        load_libsvm(&file.path().with_extension("missing"), None),
        Err(Error::Io(_))
    ));
}

#[test]
fn test_config_file_drives_a_run_on_a_libsvm_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tiny.svm");
    let mut text = String::new();
    for j in 0..40 {
        let label = if j % 3 == 0 { "+1" } else { "-1" };
        text.push_str(&format!("{label} {}:1 {}:0.5\n", 1 + j % 5, 6 + j % 4));
    }
    std::fs::write(&data, text).unwrap();
    let cfg_path = dir.path().join("exp.toml");
    std::fs::write(
        &cfg_path,
        format!(
            "dataset = {:?}\nn = 5\nn_byz = 1\nattack = \"ipm\"\nalgorithm = \"dasha\"\nrounds = 7\naggregator = \"gm\"\n",
            data.to_str().unwrap()
        ),
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let result = run(&cfg).unwrap();
    assert_eq!(result.rows.len(), 8);
    assert_eq!(result.constants.l_workers.len(), 4);
    assert!(!result.diverged);
}

#[test]
fn test_csv_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        samples: 120,
        rounds: 2,
        estimate_f_star: true,
        ..Default::default()
    };
    let result = run(&cfg).unwrap();
    let path = dir.path().join("run.csv");
    emit_csv(&result, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(read_csv(text.as_bytes()).unwrap(), result.rows);

    let mut header_only = Vec::new();
    write_csv(&[], &mut header_only).unwrap();
    assert_eq!(String::from_utf8(header_only).unwrap(), "t,bits,f,grad_norm_sq,gap\n");
    assert!(matches!(read_csv("t,bits\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn test_cumulative_bits_strictly_increase() {
    let cfg = ExperimentConfig {
        samples: 200,
        rounds: 30,
        algorithm: Algorithm::Ef21Bc,
        compressor: byzsim_core::harness::config::CompressorName::Topk,
        downlink: byzsim_core::harness::config::CompressorName::Topk,
        ..Default::default()
    };
    let rows = run(&cfg).unwrap().rows;
    assert_eq!(rows[0].bits, 0);
    assert!(rows.windows(2).all(|w| w[1].bits > w[0].bits));
}

#[test]
fn test_homogeneous_shards_reach_small_gradients_under_every_attack() {
    for attack in [AttackName::Bf, AttackName::Lf, AttackName::Ipm, AttackName::Alie] {
        let base = ExperimentConfig {
            samples: 2000,
            rounds: 3000,
            metrics_every: 50,
            attack,
            ..Default::default()
        };
        let problem = Problem::build(&base).unwrap();
        for alg in [Algorithm::Marina2, Algorithm::Dasha] {
            let cfg = ExperimentConfig {
                algorithm: alg,
                ..base.clone()
            };
            let r = run_problem(&cfg, &problem).unwrap();
            assert!(
                r.best_grad_norm_sq() < 1e-3,
                "{attack:?} {}: {}",
                alg.name(),
                r.best_grad_norm_sq()
            );
        }
    }
}

#[test]
fn test_mimic_requires_quadratic_source() {
    let cfg = ExperimentConfig {
        attack: AttackName::Mimic,
        ..Default::default()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let quad = ExperimentConfig {
        synthetic: SyntheticKind::Quadratic,
        ..cfg
    };
    assert!(quad.validate().is_ok());
}
