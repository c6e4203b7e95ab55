use std::path::Path;
use std::process::Command;

use vbomi::autodiff::read_checkpoint;
use vbomi::benchmarks::ObjectiveConfig;
use vbomi::harness::csv::{parse_trace_csv, PLOT_HEADER, TRACE_HEADER};
use vbomi::harness::{
    checkpoint_file_name, compare, random_search, run_experiment, run_method, sweep, trace_file_name, ComparisonTable,
    ExperimentConfig, MethodName, SweepConfig,
};
use vbomi::trace::average_reward;
use vbomi::vbo::{ExplorationMode, VboConfig};

fn tiny(dir: &Path, methods: &[MethodName], n_seeds: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.methods = methods.to_vec();
    cfg.experiment.n_seeds = n_seeds;
    cfg.experiment.output_dir = dir.to_path_buf();
    cfg.objective = ObjectiveConfig {
        name: "quadratic".into(),
        dim: Some(1),
        ..ObjectiveConfig::default()
    };
    cfg.vbo = VboConfig {
        warmup_steps: 2,
        iterations: 5,
        batch: 8,
        ..VboConfig::default()
    };
    cfg.gp_ucb.iterations = 7;
    cfg.gp_ucb.batch = 8;
    cfg.gp_ucb.ucb.candidate_pool_size = 64;
    cfg.gp_ucb.ucb.n_refine_steps = 5;
    cfg
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn one_trace_per_seed_plus_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), &[MethodName::Vbo], 3);
    let report = run_experiment(&cfg).unwrap();
    assert!(report.all_succeeded());
    let traces: Vec<_> = std::fs::read_dir(dir.path().join("traces")).unwrap().collect();
    assert_eq!(traces.len(), 3);
    let summary = read(&dir.path().join("summary.csv"));
    assert_eq!(summary.lines().count(), 4);
    let frozen = ExperimentConfig::from_toml(&read(&dir.path().join("config.resolved.toml"))).unwrap();
    assert_eq!(frozen, cfg);
    let t = read(&dir.path().join("traces").join(trace_file_name("vbo", 1)));
    assert!(t.starts_with(TRACE_HEADER));
    assert!(!t.contains('\r'));
    let mut ckpt = std::fs::File::open(dir.path().join("checkpoints").join(checkpoint_file_name("vbo", 1))).unwrap();
    assert_eq!(read_checkpoint(&mut ckpt).unwrap(), report.runs[1].params);
}

#[test]
fn rerun_reproduces_trace_files_byte_for_byte() {
    let methods = [MethodName::Vbo, MethodName::GpUcb, MethodName::Random];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&tiny(a.path(), &methods, 2)).unwrap();
    let mut cfg = tiny(b.path(), &methods, 2);
    cfg.experiment.jobs = 3;
    run_experiment(&cfg).unwrap();
    for m in methods {
        for s in 0..2 {
            let name = trace_file_name(m.as_str(), s);
            assert_eq!(
                read(&a.path().join("traces").join(&name)),
                read(&b.path().join("traces").join(&name))
            );
        }
    }
    assert_eq!(read(&a.path().join("summary.csv")), read(&b.path().join("summary.csv")));
}

#[test]
fn changing_one_seed_changes_only_its_file() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = tiny(a.path(), &[MethodName::Vbo], 1);
    ca.experiment.seeds = vec![3, 4];
    let mut cb = tiny(b.path(), &[MethodName::Vbo], 1);
    cb.experiment.seeds = vec![3, 9];
    run_experiment(&ca).unwrap();
    run_experiment(&cb).unwrap();
    let f = |d: &Path, s| read(&d.join("traces").join(trace_file_name("vbo", s)));
    assert_eq!(f(a.path(), 3), f(b.path(), 3));
    assert_ne!(f(a.path(), 4), f(b.path(), 9));
}

#[test]
fn random_search_finds_branin_basin() {
    let cfg = ExperimentConfig::default();
    let mut hits = 0;
    for seed in 0..10 {
        let mut obj = vbomi::benchmarks::NoisyObjective::new(
            vbomi::benchmarks::build_objective(&cfg.objective).unwrap(),
            0.0,
            seed,
        )
        .unwrap();
        let r = random_search(50, 32, seed, &mut obj).unwrap();
        assert_eq!(r.evaluations, 1600);
        if r.best_y >= -0.397887 - 0.5 {
            hits += 1;
        }
    }
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn beta_sweep_yields_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), &[MethodName::Vbo], 1);
    cfg.sweep = Some(SweepConfig {
        parameter: "beta".into(),
        values: vec![0.1, 1.0, 10.0],
    });
    let cells = sweep(&cfg).unwrap();
    assert_eq!(cells.len(), 3);
    let csv = read(&dir.path().join("sensitivity.csv"));
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.path().join("beta=10").join("summary.csv").exists());
}

#[test]
fn batch_sweep_keeps_exact_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), &[MethodName::Vbo], 1);
    cfg.sweep = Some(SweepConfig {
        parameter: "batch".into(),
        values: vec![16.0, 32.0, 64.0],
    });
    for c in sweep(&cfg).unwrap() {
        let b = c.value as usize;
        let r = &c.report.runs[0];
        assert!(r.status.is_success());
        assert_eq!(r.evaluations, (2 + 5) * b);
        assert!(r.traces.iter().all(|t| t.batch_rewards.len() == b));
    }
}

#[test]
fn zero_beta_cell_matches_exploitation_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), &[MethodName::Vbo], 1);
    cfg.sweep = Some(SweepConfig {
        parameter: "beta".into(),
        values: vec![0.0, 1.0],
    });
    let cell = &sweep(&cfg).unwrap()[0];
    let mut plain = tiny(dir.path(), &[MethodName::Vbo], 1);
    plain.vbo.exploration_mode = ExplorationMode::None;
    let r = run_method(&plain, MethodName::Vbo, 0).unwrap();
    assert_eq!(format!("{:?}", cell.report.runs[0]), format!("{r:?}"));
}

#[test]
fn single_method_table_matches_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), &[MethodName::Vbo], 2);
    let (report, table) = compare(&cfg).unwrap();
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    let finals: Vec<f64> = report.runs.iter().map(|r| r.final_reward(20)).collect();
    assert_eq!(row.per_seed, finals);
    assert_eq!(row.mean, (finals[0] + finals[1]) / 2.0);
    let from_files =
        ComparisonTable::from_trace_dir(&dir.path().join("traces"), &[MethodName::Vbo], &[0, 1], 20).unwrap();
    assert_eq!(from_files.rows[0].per_seed, row.per_seed);
    assert!(read(&dir.path().join("comparison.md")).contains("Average over the last 20 iterations"));
}

#[test]
fn constant_objective_reports_constant_with_zero_variance() {
    let dir = tempfile::tempdir().unwrap();
    let methods = [MethodName::Vbo, MethodName::Random, MethodName::GpUcb];
    let mut cfg = tiny(dir.path(), &methods, 2);
    cfg.objective.name = "constant".into();
    cfg.objective.constant = -1.25;
    let (_, table) = compare(&cfg).unwrap();
    for r in &table.rows {
        assert_eq!(r.mean, -1.25, "{}", r.method);
        assert_eq!(r.variance, 0.0);
    }
}

#[test]
fn mismatched_budgets_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), &[MethodName::Vbo, MethodName::GpUcb], 1);
    cfg.gp_ucb.iterations = 3;
    assert!(compare(&cfg).is_err());
    assert!(!dir.path().join("summary.csv").exists());
}

#[test]
fn plot_data_has_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), &[MethodName::Vbo, MethodName::Random], 2);
    cfg.vbo.iterations = 10;
    cfg.random.iterations = Some(10);
    let report = run_experiment(&cfg).unwrap();
    let text = read(&dir.path().join("plot_data.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(PLOT_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 40);
    for r in &report.runs {
        let means: Vec<f64> = r.traces.iter().map(|t| t.mean_reward).collect();
        let s = average_reward(&means);
        let trace = parse_trace_csv(&read(
            &dir.path().join("traces").join(trace_file_name(&r.method, r.seed)),
        ))
        .unwrap();
        for (row, expect) in trace.iter().zip(&s) {
            assert!((row.s_t - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }
}

#[test]
fn unknown_config_keys_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[vbo]\nbeta = 1.0\nwarmup = 3\n[objective]\nnme = \"branin\"\n").unwrap();
    let err = ExperimentConfig::load(&path).unwrap_err().to_string();
    assert!(err.contains("vbo.warmup") && err.contains("objective.nme"), "{err}");
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vbomi"))
}

#[test]
fn cli_run_and_failure_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.toml");
    let out = dir.path().join("out");
    let mut cfg = tiny(&out, &[MethodName::Vbo], 1);
    cfg.vbo.iterations = 2;
    std::fs::write(&cfg_path, cfg.to_toml().unwrap()).unwrap();
    let status = cli()
        .args(["run", "--config", cfg_path.to_str().unwrap(), "--seed", "5"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(out.join("traces").join(trace_file_name("vbo", 5)).exists());

    // A point outside the Brusselator's stable range fails that seed only.
    cfg.objective.name = "brusselator".into();
    cfg.objective.dim = None;
    cfg.objective.brusselator.dt = Some(10.0);
    std::fs::write(&cfg_path, cfg.to_toml().unwrap()).unwrap();
    let status = cli()
        .args(["run", "--config", cfg_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));

    let status = cli().args(["run", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn cli_flops_and_estimate_mi() {
    let out = cli()
        .args(["flops", "--t-min", "100", "--t-max", "100"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("method,T,surrogate,acquisition,total\n"));
    assert!(text.contains("hmc,100,1000000000,250000000,1250000000"));
    assert!(text.contains("vbo,100,32000,100000,132000"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("xy.csv");
    let mut csv = String::from("x y\n");
    for i in 0..400 {
        let v = (i as f64 * 0.37).sin();
        let sep = if i % 2 == 0 { "," } else { " \t" };
        csv.push_str(&format!("{v}{sep}{}\n", 2.0 * v));
    }
    std::fs::write(&path, csv).unwrap();
    let out = cli()
        .args(["estimate-mi", "--input", path.to_str().unwrap(), "--x-dims", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let est: f64 = text.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(est > 0.5, "{est}");
}
