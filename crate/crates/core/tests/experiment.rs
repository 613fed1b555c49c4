mod common;

use std::process::Command;

use prunelab::analysis::RunKey;
use prunelab::data::Dataset;
use prunelab::experiment::snapshot::{read_manifest, write_manifest};
use prunelab::experiment::*;
use prunelab::nn::{build_lenet_300_100, InitScheme, Network};
use prunelab::pruning::{build_mask, score_magnitude, Direction, Method};
use prunelab::treatments::Treatment;
use prunelab::{Error, Tensor};

fn synthetic_mnist(n: usize) -> Dataset {
    let mut rng = prunelab::rng::rng_from_seed(3);
    let x: Vec<f32> = common::normal_vec(&mut rng, n * 784, 1.0).into_iter().map(|v| v as f32).collect();
    Dataset::new(Tensor::new(vec![n, 784], x).unwrap(), (0..n).map(|i| (i % 10) as u8).collect()).unwrap()
}

fn config(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        methods: vec![Method::Magnitude],
        treatments: vec![Treatment::Reinit, Treatment::LayerwiseShuffle, Treatment::RandomPruning],
        sparsities: vec![0.8],
        seeds: vec![SeedSpec::Base(0)],
        out: out.to_path_buf(),
        ..Default::default()
    }
}

fn no_data() -> Datasets {
    Datasets { train: None, test: None }
}

#[test]
fn unmodified_rows_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { treatments: vec![Treatment::Unmodified], sparsities: vec![0.5, 0.9], ..config(dir.path()) };
    let out = run_sweep_with(&cfg, &build_lenet_300_100(), &no_data()).unwrap();
    assert_eq!(out.failed_runs, 0);
    for r in &out.rows {
        assert!(r.wd.unwrap_or(0.0) == 0.0 && r.avg_wd.unwrap_or(0.0) == 0.0);
    }
}

#[test]
fn random_pruning_has_the_largest_shift() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep_with(&config(dir.path()), &build_lenet_300_100(), &no_data()).unwrap();
    let summaries: Vec<&CsvRow> = out.rows.iter().filter(|r| r.is_summary()).collect();
    assert_eq!(summaries.len(), 3);
    assert_eq!(out.rows.len(), 3 * 4);
    let best = summaries.iter().max_by(|a, b| a.avg_wd.unwrap().total_cmp(&b.avg_wd.unwrap())).unwrap();
    assert_eq!(best.treatment, Treatment::RandomPruning);
    // Layer 0 gets more density under random pruning than under magnitude, so its shift can be smaller.
    for layer in ["1", "2"] {
        let wd = |t: Treatment| out.rows.iter().find(|r| r.treatment == t && r.layer == layer).unwrap().wd.unwrap();
        assert!(wd(Treatment::RandomPruning) > wd(Treatment::Reinit).max(wd(Treatment::LayerwiseShuffle)), "layer {layer}");
    }
}

#[test]
fn csv_schema_and_summary_means() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { sparsities: vec![0.5, 0.9], seeds: vec![SeedSpec::Base(0), SeedSpec::Base(1)], ..config(dir.path()) };
    let out = run_sweep_with(&cfg, &build_lenet_300_100(), &no_data()).unwrap();
    let text = std::fs::read_to_string(&out.csv_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    let rows = read_csv(&out.csv_path).unwrap();
    assert_eq!(rows, out.rows);
    for s in rows.iter().filter(|r| r.is_summary()) {
        let layers: Vec<f64> = rows
            .iter()
            .filter(|r| !r.is_summary() && r.treatment == s.treatment && r.sparsity == s.sparsity && r.init_seed == s.init_seed)
            .map(|r| r.wd.unwrap())
            .collect();
        assert_eq!(layers.len(), 3);
        assert!((s.avg_wd.unwrap() - layers.iter().sum::<f64>() / 3.0).abs() <= 1e-12);
        assert!(s.test_acc.is_none());
    }
}

#[test]
fn reruns_and_parallel_runs_are_bytewise_identical() {
    let data = Datasets { train: Some(synthetic_mnist(300)), test: Some(synthetic_mnist(50)) };
    let run = |jobs: usize| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            methods: vec![Method::Magnitude, Method::Snip],
            treatments: Treatment::ALL.to_vec(),
            sparsities: vec![0.5, 0.8],
            train: true,
            training: prunelab::train::TrainConfig { epochs: 1, lr: 0.01, ..Default::default() },
            jobs,
            ..config(dir.path())
        };
        let out = run_sweep_with(&cfg, &build_lenet_300_100(), &data).unwrap();
        assert_eq!(out.failed_runs, 0);
        std::fs::read(&out.csv_path).unwrap()
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(2));
}

#[test]
fn failing_cells_are_recorded_and_the_sweep_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { methods: vec![Method::Snip, Method::Magnitude], ..config(dir.path()) };
    let out = run_sweep_with(&cfg, &build_lenet_300_100(), &no_data()).unwrap();
    assert_eq!(out.failed_runs, 3);
    assert!(out.rows.iter().filter(|r| r.method == Method::Snip).all(|r| r.error.contains("empty dataset")));
    assert!(out.rows.iter().filter(|r| r.method == Method::Magnitude).all(|r| r.error.is_empty()));
}

#[test]
fn control_is_shared_across_treatments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { treatments: Treatment::ALL.to_vec(), snapshots: true, ..config(dir.path()) };
    run_sweep_with(&cfg, &build_lenet_300_100(), &no_data()).unwrap();
    let snaps = dir.path().join("snapshots");
    let load = |t: &str| load_snapshot(snaps.join(format!("lenet_300_100-magnitude-{t}-s800000-i0-t1000-c2000"))).unwrap();
    let (cn, cm, meta) = load("unmodified");
    assert_eq!(meta.treatment, Some(Treatment::Unmodified));
    let (sn, sm, _) = load("layerwise-shuffle");
    assert_eq!(sn, cn);
    assert_eq!(sm.kept_per_layer(), cm.kept_per_layer());
    let (_, rm, _) = load("reinit");
    assert_eq!(rm, cm);
}

fn lenet_pair() -> (Network, prunelab::pruning::Mask) {
    let net = Network::initialize(&build_lenet_300_100(), InitScheme::KaimingNormal, 0).unwrap();
    let mask = build_mask(&score_magnitude(&net), 0.8, Direction::RemoveLowest).unwrap();
    (prunelab::pruning::apply_mask(&net, &mask).unwrap(), mask)
}

#[test]
fn snapshot_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (net, mask) = lenet_pair();
    let meta = SnapshotMeta { method: Some(Method::Magnitude), sparsity: Some(0.8), ..Default::default() };
    save_snapshot(&net, &mask, &meta, dir.path()).unwrap();
    let (n2, m2, meta2) = load_snapshot(dir.path()).unwrap();
    assert_eq!(m2, mask);
    assert_eq!(meta2, meta);
    for (a, b) in n2.params.iter().zip(&net.params) {
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.weight), bits(&b.weight));
        assert_eq!(a.bias.as_ref().map(bits), b.bias.as_ref().map(bits));
    }
}

#[test]
fn snapshot_corruption_is_detected() {
    let (net, mask) = lenet_pair();
    let dir = tempfile::tempdir().unwrap();
    save_snapshot(&net, &mask, &SnapshotMeta::default(), dir.path()).unwrap();
    let weights = dir.path().join("weights.bin");
    let original = std::fs::read(&weights).unwrap();

    let mut flipped = original.clone();
    flipped[12345] ^= 0x01;
    std::fs::write(&weights, &flipped).unwrap();
    assert!(matches!(load_snapshot(dir.path()), Err(Error::ChecksumMismatch { .. })));

    // Keep only the first two layers' bytes while the manifest lists three.
    let manifest = read_manifest(dir.path()).unwrap();
    let two_layers = manifest.layers[1].bias.unwrap();
    std::fs::write(&weights, &original[..two_layers.offset + two_layers.len]).unwrap();
    assert!(matches!(load_snapshot(dir.path()), Err(Error::TruncatedBlob { .. })));

    std::fs::write(&weights, &original).unwrap();
    let mut m = manifest.clone();
    m.format_version = 99;
    write_manifest(dir.path(), &m).unwrap();
    assert!(matches!(load_snapshot(dir.path()), Err(Error::VersionMismatch { found: 99, .. })));
    write_manifest(dir.path(), &manifest).unwrap();
    assert!(load_snapshot(dir.path()).is_ok());
}

fn row(t: Treatment, layer: &str, wd: f64) -> CsvRow {
    CsvRow {
        network: "lenet_300_100".into(),
        method: Method::Snip,
        treatment: t,
        sparsity: 0.8,
        init_seed: 0,
        treat_seed: 1000,
        score_seed: 2000,
        layer: layer.into(),
        wd: Some(wd),
        kept_count: Some(1),
        avg_wd: None,
        test_acc: None,
        error: String::new(),
    }
}

#[test]
fn plot_structure() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    for (k, t) in [Treatment::Reinit, Treatment::LayerwiseShuffle, Treatment::RandomPruning].into_iter().enumerate() {
        for l in 0..3 {
            rows.push(row(t, &l.to_string(), 0.01 * (k + 1) as f64 + 0.001 * l as f64));
        }
    }
    let csv = dir.path().join("r.csv");
    write_csv(&rows, &csv).unwrap();
    let out = emit_plots(&csv, dir.path().join("plots")).unwrap();
    assert_eq!(out.files.len(), 1);
    assert_eq!(out.warnings, 0);
    let svg = std::fs::read_to_string(&out.files[0]).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let polylines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
    assert_eq!(polylines.len(), 3);
    for (line, color) in polylines.iter().zip(["blue", "green", "red"]) {
        assert!(line.contains(&format!("stroke=\"{color}\"")));
        let points = line.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 3);
    }
}

#[test]
fn plot_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = emit_plots(&empty, dir.path().join("p")).unwrap();
    assert!(out.files.is_empty() && out.warnings > 0);

    let mixed = dir.path().join("mixed.csv");
    let good = {
        let p = dir.path().join("good.csv");
        write_csv(&[row(Treatment::Reinit, "0", 0.1)], &p).unwrap();
        std::fs::read_to_string(p).unwrap()
    };
    std::fs::write(&mixed, format!("{good}lenet_300_100,snip,reinit,not-a-number,0,1,2,1,0.1,1,,,\n")).unwrap();
    let out = emit_plots(&mixed, dir.path().join("p")).unwrap();
    assert_eq!(out.files.len(), 1);
    assert_eq!(out.warnings, 1);
}

#[test]
fn mean_over_seeds() {
    let mut a = row(Treatment::Reinit, "ALL", 0.0);
    a.wd = None;
    a.avg_wd = Some(1.0);
    let mut b = a.clone();
    b.init_seed = 1;
    b.avg_wd = Some(3.0);
    let m = mean_avg_wd(&[a, b]);
    assert_eq!(m[&(Method::Snip, Treatment::Reinit, RunKey::sparsity_to_ppm(0.8))], 2.0);
}

#[test]
fn cli_config_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"methods": ["snip"], "treatments": ["reinit"], "sparsities": [0.3], "seeds": [5]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_prunelab"))
        .args(["sweep", "--config"])
        .arg(&cfg_path)
        .args(["--methods", "magnitude,synflow", "--sparsities", "0.5", "--no-plots", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = read_csv(out.join("results.csv")).unwrap();
    assert!(rows.iter().all(|r| r.treatment == Treatment::Reinit && r.sparsity == 0.5 && r.init_seed == 5));
    assert_eq!(rows.iter().filter(|r| r.is_summary()).count(), 2);

    // SNIP without MNIST files fails its cells: nonzero exit.
    let status = Command::new(env!("CARGO_BIN_EXE_prunelab"))
        .args(["sweep", "--config"])
        .arg(&cfg_path)
        .args(["--data-dir"])
        .arg(dir.path().join("nowhere"))
        .args(["--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(!status.success());
}
