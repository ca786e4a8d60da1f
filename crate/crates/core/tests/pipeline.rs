use std::fs;

use driftfed::data::{write_records, Category, ColumnSpec, Task};
use driftfed::fed::Checkpoint;
use driftfed::runner::{
    rerender_reports, run_experiment, run_generalization, DataSource, RunConfig, RunStatus,
};
use driftfed::synth::{default_paper_shaped_scenario, generate, ScenarioSpec};
use driftfed::timeline::{Period, StrategyConfig, StrategyKind};
use driftfed::Seed;

/// Default geometry with fewer rows per sub-attack.
fn small_scenario(rows: usize) -> ScenarioSpec {
    let mut spec = default_paper_shaped_scenario(Seed::new(5));
    for f in &mut spec.families {
        f.rows_per_sub_attack = rows;
    }
    spec
}

fn quick_config(dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig {
        data: DataSource::Synthetic {
            scenario: Some(small_scenario(150)),
        },
        output_dir: dir.to_path_buf(),
        seed: Seed::new(8),
        ..RunConfig::default()
    };
    cfg.apply_desk_preset();
    cfg.fed.rounds = 1;
    cfg.fed.train.local_epochs = 2;
    cfg
}

#[test]
fn six_class_cumulative_fills_the_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        tasks: vec![Task::SixClass],
        strategies: vec![StrategyConfig::new(StrategyKind::Cumulative)],
        ..quick_config(dir.path())
    };
    let summary = run_experiment(&cfg).unwrap();
    let report = &summary.tasks[0].strategies[0];
    assert_eq!(report.checkpoints.len(), 6);
    assert_eq!(report.grid.checkpoint_periods, (0..6).map(Period).collect::<Vec<_>>());
    assert_eq!(report.grid.test_periods, (0..7).map(Period).collect::<Vec<_>>());
    assert_eq!(report.grid.reports.len(), 6);
    assert!(report.grid.reports.iter().all(|row| row.len() == 7));
    assert_eq!(report.grid.protocol().unwrap().len(), 7);
    assert_eq!(report.accuracy.len(), 7);

    for c in &report.checkpoints {
        let ck = Checkpoint::load(&dir.path().join(&c.file)).unwrap();
        assert_eq!(ck.period, c.period);
        assert_eq!(ck.train_sample_count, c.train_sample_count);
        assert_eq!(ck.params.len(), summary.tasks[0].arch.param_count());
    }
}

#[test]
fn csv_source_reproduces_the_synthetic_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_scenario(100);
    let csv_path = dir.path().join("flows.csv");
    let cols = ColumnSpec::numbered(spec.num_features);
    write_records(&csv_path, &generate(&spec).unwrap(), &cols, b',').unwrap();

    let base = RunConfig {
        tasks: vec![Task::Binary],
        strategies: vec![
            StrategyConfig::new(StrategyKind::Simple),
            StrategyConfig::retain(100),
        ],
        ..quick_config(dir.path())
    };
    let synth = RunConfig {
        data: DataSource::Synthetic {
            scenario: Some(spec),
        },
        output_dir: dir.path().join("synth"),
        ..base.clone()
    };
    let csv = RunConfig {
        data: DataSource::Csv {
            path: csv_path,
            columns: None,
            delimiter: ',',
        },
        output_dir: dir.path().join("csv"),
        ..base
    };
    run_experiment(&synth).unwrap();
    run_experiment(&csv).unwrap();
    let read = |root: &std::path::Path| fs::read_to_string(root.join("binary/accuracy.csv")).unwrap();
    assert_eq!(read(&synth.output_dir), read(&csv.output_dir));
}

#[test]
fn report_subcommand_path_rewrites_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        tasks: vec![Task::Binary],
        strategies: vec![StrategyConfig::new(StrategyKind::Static)],
        ..quick_config(&dir.path().join("run"))
    };
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.manifest.status, RunStatus::Complete);
    let dest = dir.path().join("again");
    let written = rerender_reports(&cfg.output_dir, &dest).unwrap();
    assert!(!written.is_empty());
    for rel in ["binary/accuracy.csv", "binary/static/metrics.csv", "binary/static/composition.csv"] {
        assert_eq!(
            fs::read(cfg.output_dir.join(rel)).unwrap(),
            fs::read(dest.join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn generalization_matrix_favours_the_training_family() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    cfg.data = DataSource::Synthetic {
        scenario: Some(small_scenario(300)),
    };
    cfg.fed.rounds = 3;
    cfg.fed.train.local_epochs = 5;
    let m = run_generalization(&cfg).unwrap();
    assert_eq!(m.families, Category::ATTACKS.to_vec());
    let f = m.families.len();
    for (i, row) in m.accuracy.iter().enumerate() {
        assert_eq!(row.len(), f + 1);
        let best = row[..f].iter().cloned().fold(f64::MIN, f64::max);
        // Neighbouring families (DoS, DDoS) may tie or swap by a hair.
        assert!(row[i] >= 0.95 && row[i] >= best - 0.01, "row {i}: {row:?}");
        let mean = row[..f].iter().sum::<f64>() / f as f64;
        assert!((row[f] - mean).abs() < 1e-12);
    }
    let idx = |c: Category| m.families.iter().position(|&x| x == c).unwrap();
    assert!(m.accuracy[idx(Category::Mqtt)][idx(Category::Ddos)] < 0.5);
    assert!(dir.path().join("generalization.csv").is_file());
}
