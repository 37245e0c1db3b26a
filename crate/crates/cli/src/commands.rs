//! Implementation of the CLI subcommands.

use std::path::{Path, PathBuf};
use std::result::Result;
use std::time::Instant;

use ndarray::{Array2, Axis};

use transferop_core::io;
use transferop_core::*;

use crate::config::{load_config, RunConfig};
use crate::report::{PhaseTimings, RunReport};
use crate::{
    BenchmarkArgs, Cli, CliError, ClusterArgs, Command, EvalArgs, ModelFlags, SimulateArgs,
};

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = load_config(cli.config.as_deref(), &cli.sets)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    match &cli.command {
        Command::Simulate(args) => {
            apply_simulate_flags(&mut cfg, args, cli.seed);
            cfg.validate()?;
            cmd_simulate(&cfg)
        }
        Command::Fit(args) => {
            apply_model_flags(&mut cfg, &args.model, cli.seed);
            cfg.validate()?;
            cmd_fit(&cfg, &args.data)
        }
        Command::FitIterative(args) => {
            apply_model_flags(&mut cfg, &args.model, cli.seed);
            if let Some(epochs) = args.epochs {
                cfg.training.epochs = epochs;
            }
            if let Some(step) = args.train_step_size {
                cfg.training.step_size = step;
            }
            cfg.validate()?;
            cmd_fit_iterative(&cfg, &args.data)
        }
        Command::Ensemble(args) => {
            apply_model_flags(&mut cfg, &args.model, None);
            if let Some(members) = args.members {
                cfg.ensemble.members = members;
            }
            if let Some(base) = args.base_seed.or(cli.seed) {
                cfg.ensemble.base_seed = base;
            }
            cfg.validate()?;
            cmd_ensemble(&cfg, &args.data)
        }
        Command::Eval(args) => {
            cfg.validate()?;
            cmd_eval(&cfg, args)
        }
        Command::Cluster(args) => {
            cfg.validate()?;
            cmd_cluster(&cfg, args, cli.seed.unwrap_or(0))
        }
        Command::Benchmark(args) => {
            cfg.validate()?;
            cmd_benchmark(&cfg, args)
        }
    }
}

fn apply_simulate_flags(cfg: &mut RunConfig, args: &SimulateArgs, seed: Option<u64>) {
    if let Some(v) = &args.system {
        cfg.system.name = v.clone();
    }
    if let Some(v) = args.alpha {
        cfg.system.alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.system.beta = Some(v);
    }
    if let Some(v) = args.wells {
        cfg.system.wells = v;
    }
    if let Some(v) = args.m {
        cfg.data.m = v;
    }
    if let Some(v) = args.lag_time {
        cfg.data.lag_time = Some(v);
        cfg.data.lag_steps = None;
    }
    if let Some(v) = args.lag_steps {
        cfg.data.lag_steps = Some(v);
        cfg.data.lag_time = None;
    }
    if let Some(v) = args.step_size {
        cfg.data.step_size = v;
    }
    if let Some(v) = args.stride {
        cfg.data.stride = Some(v);
    }
    if let Some(v) = args.burn_in {
        cfg.data.burn_in = v;
    }
    if let Some(v) = args.t0 {
        cfg.system.t0 = v;
    }
    if let Some(v) = args.t1 {
        cfg.system.t1 = v;
    }
    if let Some(v) = seed {
        cfg.data.seed = v;
    }
}

fn apply_model_flags(cfg: &mut RunConfig, flags: &ModelFlags, seed: Option<u64>) {
    if let Some(v) = &flags.mode {
        cfg.model.mode = v.clone();
    }
    if let Some(v) = flags.n {
        cfg.model.n = v;
    }
    if let Some(v) = &flags.widths {
        cfg.model.widths = v
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect();
    }
    if let Some(v) = &flags.activation {
        cfg.model.activation = v.clone();
    }
    if let Some(v) = flags.rank_tol {
        cfg.model.rank_tol = v;
    }
    if flags.no_symmetrize {
        cfg.model.symmetrize = false;
    }
    if let Some(v) = seed {
        cfg.model.seed = v;
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(&cfg.output.dir)
}

fn load_dataset_checked(stem: &Path) -> Result<SnapshotDataset, CliError> {
    io::load_dataset(stem)
        .map_err(|e| CliError::validation(format!("dataset {}: {e}", stem.display())))
}

fn load_model_checked(path: &Path) -> Result<SpectralModel, CliError> {
    io::read_model(path).map_err(|e| CliError::validation(format!("model {}: {e}", path.display())))
}

fn build_rfm(cfg: &RunConfig, input_dim: usize) -> Result<RandomFeatureMap, CliError> {
    let activation: Activation = cfg.model.activation.parse()?;
    let family: DistFamily = cfg.model.distribution.parse()?;
    let dist = DistributionSpec {
        family,
        weight_scale: cfg.model.weight_scale,
        bias_scale: cfg.model.bias_scale,
    };
    Ok(sample_rfm(
        input_dim,
        &cfg.model.widths,
        activation,
        dist,
        cfg.model.seed,
    )?)
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions {
        rank_tol: cfg.model.rank_tol,
        symmetrize: cfg.model.symmetrize,
    }
}

fn hamiltonian_params(cfg: &RunConfig) -> Result<HamiltonianParams, CliError> {
    let potential = match cfg.model.potential.as_str() {
        "qho" => PotentialSystem::qho(cfg.model.omega)?,
        name => builtin_potential(
            name,
            SystemParams {
                alpha: Some(cfg.system.alpha),
                wells: Some(cfg.system.wells),
                beta: cfg.system.beta,
            },
        )?,
    };
    Ok(HamiltonianParams {
        potential,
        hbar: cfg.model.hbar,
        mass: cfg.model.mass,
        offset: cfg.model.potential_offset,
    })
}

fn simulate_dataset(cfg: &RunConfig) -> Result<SnapshotDataset, CliError> {
    match cfg.system.name.as_str() {
        "bickley" => Ok(bickley_trajectories(
            cfg.data.m,
            cfg.system.t0,
            cfg.system.t1,
            cfg.system.integrator_step,
            cfg.data.seed,
        )?),
        "grid" => {
            let domain: Vec<(f64, f64)> = cfg
                .system
                .domain_min
                .iter()
                .zip(&cfg.system.domain_max)
                .map(|(lo, hi)| (*lo, *hi))
                .collect();
            let mode = if cfg.system.grid_mode == "regular" {
                GridMode::RegularGrid
            } else {
                GridMode::UniformRandom
            };
            Ok(sample_grid(&domain, cfg.data.m, mode, cfg.data.seed)?)
        }
        name => {
            let system = builtin_potential(
                name,
                SystemParams {
                    alpha: Some(cfg.system.alpha),
                    wells: Some(cfg.system.wells),
                    beta: cfg.system.beta,
                },
            )?;
            let plan = TrajectoryPlan {
                pairs: cfg.data.m,
                lag_steps: cfg.lag_steps()?,
                stride: cfg.stride()?,
                step_size: cfg.data.step_size,
                burn_in: cfg.data.burn_in,
                seed: cfg.data.seed,
            };
            Ok(generate_potential_dataset(&system, plan)?)
        }
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let data = simulate_dataset(cfg)?;
    let stem = out_dir(cfg).join(&cfg.system.name);
    let files = io::save_dataset(&stem, &data)?;
    println!(
        "dataset {}: system={} d={} m={} tau={}",
        stem.display(),
        data.source.system,
        data.dim(),
        data.len(),
        data.lag_time.map_or("none".into(), |t| format!("{t}")),
    );
    for f in files {
        println!("  wrote {}", f.display());
    }
    println!("simulated in {:.3}s", start.elapsed().as_secs_f64());
    Ok(())
}

/// Dispatches the closed-form fit for the configured mode.
fn run_closed_form_fit(
    cfg: &RunConfig,
    rfm: &RandomFeatureMap,
    data: &SnapshotDataset,
) -> Result<(SpectralModel, FitTimings), CliError> {
    let opts = fit_options(cfg);
    let result = match cfg.model.mode.as_str() {
        "eigen" => fit_eigen(rfm, data, cfg.model.n, &opts)?,
        "singular" => fit_singular(rfm, data, cfg.model.n, &opts)?,
        "schrodinger" => {
            let ham = hamiltonian_params(cfg)?;
            fit_schrodinger(rfm, data, cfg.model.n, &ham, &opts)?
        }
        other => return Err(CliError::validation(format!("model.mode: unknown mode '{other}'"))),
    };
    Ok(result)
}

pub fn cmd_fit(cfg: &RunConfig, data_stem: &Path) -> Result<(), CliError> {
    let data = load_dataset_checked(data_stem)?;
    let rfm = build_rfm(cfg, data.dim())?;
    let (model, timings) = run_closed_form_fit(cfg, &rfm, &data)?;

    let dir = out_dir(cfg);
    let model_path = dir.join("model.spm");
    io::write_model(&model_path, &model)?;

    let mut report = RunReport::new("fit", cfg);
    report.values = model.values.to_vec();
    report.seeds.insert("data", data.source.seed);
    report.seeds.insert("model", cfg.model.seed);
    report
        .artifacts
        .insert("model", model_path.to_string_lossy().into_owned());
    report
        .artifacts
        .insert("dataset", data_stem.to_string_lossy().into_owned());
    report.timings_sec = PhaseTimings {
        simulate: 0.0,
        featurize: timings.featurize_sec,
        covariances: timings.covariance_sec,
        solve: timings.solve_sec,
        total: timings.total_sec,
    };
    let report_path = dir.join("fit_report.json");
    report.write(&report_path)?;

    println!("mode: {}", model.mode.name());
    println!("values: {:?}", model.values.to_vec());
    println!(
        "timings: featurize {:.3}s, covariances {:.3}s, solve {:.3}s, total {:.3}s",
        timings.featurize_sec, timings.covariance_sec, timings.solve_sec, timings.total_sec
    );
    println!("wrote {}", model_path.display());
    println!("wrote {}", report_path.display());
    Ok(())
}

pub fn cmd_fit_iterative(cfg: &RunConfig, data_stem: &Path) -> Result<(), CliError> {
    let data = load_dataset_checked(data_stem)?;
    let rfm = build_rfm(cfg, data.dim())?;
    let opts = TrainOptions {
        epochs: cfg.training.epochs,
        step_size: cfg.training.step_size,
        seed: cfg.training.seed,
        output_activation: cfg.training.output_activation.parse()?,
        rank_tol: cfg.model.rank_tol,
        symmetrize: cfg.model.symmetrize,
    };
    let start = Instant::now();
    let trained = fit_iterative_basis(&rfm, &data, cfg.model.n, &opts)?;
    let total = start.elapsed().as_secs_f64();

    let dir = out_dir(cfg);
    let mut report = RunReport::new("fit-iterative", cfg);
    report.mode = "eigen".into();
    report.values = trained.values.to_vec();
    report.loss_history = Some(trained.loss_history.clone());
    report.seeds.insert("data", data.source.seed);
    report.seeds.insert("model", cfg.model.seed);
    report.seeds.insert("training", cfg.training.seed);
    report
        .artifacts
        .insert("dataset", data_stem.to_string_lossy().into_owned());
    // With an identity output layer the trained model is expressible in the
    // linear-readout model format; otherwise the report carries the results.
    if let Some(model) = trained.to_spectral_model() {
        let model_path = dir.join("model_iterative.spm");
        io::write_model(&model_path, &model)?;
        report
            .artifacts
            .insert("model", model_path.to_string_lossy().into_owned());
        println!("wrote {}", model_path.display());
    }
    report.timings_sec = PhaseTimings {
        total,
        ..PhaseTimings::default()
    };
    let report_path = dir.join("fit_iterative_report.json");
    report.write(&report_path)?;

    println!("values: {:?}", trained.values.to_vec());
    println!(
        "loss: {} -> {} over {} epochs in {total:.3}s",
        trained.loss_history.first().unwrap(),
        trained.loss_history.last().unwrap(),
        cfg.training.epochs
    );
    println!("wrote {}", report_path.display());
    Ok(())
}

/// Builds the evaluation points for an ensemble run: either a regular grid
/// over configured (or data) bounds, or a deterministic subsample of the
/// training data.
fn ensemble_eval_points(cfg: &RunConfig, data: &SnapshotDataset) -> Result<Array2<f64>, CliError> {
    let d = data.dim();
    if cfg.ensemble.eval_mode == "data" {
        let k = cfg.ensemble.eval_sample.min(data.len()).max(1);
        return Ok(data.x.slice(ndarray::s![.., ..k]).to_owned());
    }
    let counts: Vec<usize> = if cfg.ensemble.grid_points.len() == 1 {
        vec![cfg.ensemble.grid_points[0]; d]
    } else if cfg.ensemble.grid_points.len() == d {
        cfg.ensemble.grid_points.clone()
    } else {
        return Err(CliError::validation(format!(
            "ensemble.grid_points: expected 1 or {d} axis counts, got {}",
            cfg.ensemble.grid_points.len()
        )));
    };
    let mut axes = Vec::with_capacity(d);
    for i in 0..d {
        let (lo, hi) = match (&cfg.ensemble.grid_min, &cfg.ensemble.grid_max) {
            (Some(min), Some(max)) if min.len() == d && max.len() == d => (min[i], max[i]),
            _ => {
                let row = data.x.index_axis(Axis(0), i);
                let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        };
        if lo >= hi {
            return Err(CliError::validation(format!(
                "ensemble grid axis {i}: empty range [{lo}, {hi}]"
            )));
        }
        axes.push((lo, hi, counts[i]));
    }
    Ok(regular_grid(&axes))
}

/// Cartesian grid over the axes, first axis fastest.
fn regular_grid(axes: &[(f64, f64, usize)]) -> Array2<f64> {
    let d = axes.len();
    let total: usize = axes.iter().map(|a| a.2).product();
    let mut pts = Array2::zeros((d, total));
    for j in 0..total {
        let mut idx = j;
        for (axis, &(lo, hi, count)) in axes.iter().enumerate() {
            let along = idx % count;
            idx /= count;
            let t = if count == 1 {
                0.5
            } else {
                along as f64 / (count - 1) as f64
            };
            pts[[axis, j]] = lo + t * (hi - lo);
        }
    }
    pts
}

pub fn cmd_ensemble(cfg: &RunConfig, data_stem: &Path) -> Result<(), CliError> {
    let data = load_dataset_checked(data_stem)?;
    let activation: Activation = cfg.model.activation.parse()?;
    let family: DistFamily = cfg.model.distribution.parse()?;
    let mode: SpectralMode = cfg.model.mode.parse()?;
    let spec = EnsembleSpec {
        mode,
        n: cfg.model.n,
        widths: cfg.model.widths.clone(),
        activation,
        distribution: DistributionSpec {
            family,
            weight_scale: cfg.model.weight_scale,
            bias_scale: cfg.model.bias_scale,
        },
        options: fit_options(cfg),
        hamiltonian: if mode == SpectralMode::Schrodinger {
            Some(hamiltonian_params(cfg)?)
        } else {
            None
        },
        bootstrap: cfg.ensemble.bootstrap,
    };
    let eval_points = ensemble_eval_points(cfg, &data)?;
    let start = Instant::now();
    let summary = fit_ensemble(
        &data,
        &spec,
        cfg.ensemble.members,
        cfg.ensemble.base_seed,
        &eval_points,
    )?;

    let dir = out_dir(cfg);
    let csv_path = dir.join("ensemble_summary.csv");
    io::atomic_write(&csv_path, summary.to_csv(&eval_points).as_bytes())?;
    let json_path = dir.join("ensemble_report.json");
    io::atomic_write(&json_path, summary.report_json().as_bytes())?;

    println!(
        "ensemble: {} members ({} failed) in {:.3}s",
        summary.member_count,
        summary.failures.len(),
        start.elapsed().as_secs_f64()
    );
    println!("value mean: {:?}", summary.value_mean.to_vec());
    println!("value std:  {:?}", summary.value_std.to_vec());
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    Ok(())
}

fn parse_grid_flag(specs: &[String]) -> Result<Vec<(f64, f64, usize)>, CliError> {
    let mut axes = Vec::with_capacity(specs.len());
    for spec in specs {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::validation(format!(
                "--grid '{spec}': expected lo:hi:count"
            )));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|e| CliError::validation(format!("--grid '{spec}': {e}")))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|e| CliError::validation(format!("--grid '{spec}': {e}")))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|e| CliError::validation(format!("--grid '{spec}': {e}")))?;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi || count < 1 {
            return Err(CliError::validation(format!(
                "--grid '{spec}': need lo < hi and count >= 1"
            )));
        }
        axes.push((lo, hi, count));
    }
    Ok(axes)
}

pub fn cmd_eval(cfg: &RunConfig, args: &EvalArgs) -> Result<(), CliError> {
    let model = load_model_checked(&args.model)?;
    let points = match (&args.data, args.grid.is_empty()) {
        (Some(stem), _) => load_dataset_checked(stem)?.x,
        (None, false) => regular_grid(&parse_grid_flag(&args.grid)?),
        (None, true) => {
            return Err(CliError::validation(
                "eval needs --grid axes or --data".into(),
            ))
        }
    };
    if points.nrows() != model.rfm.input_dim() {
        return Err(CliError::validation(format!(
            "model expects {}-dimensional points, got {}",
            model.rfm.input_dim(),
            points.nrows()
        )));
    }
    let values = model.evaluate_functions(&points.view())?;

    let d = points.nrows();
    let n = values.nrows();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.extend((1..=n).map(|i| format!("phi_{i}")));
    let mut csv = header.join(",");
    csv.push('\n');
    for j in 0..points.ncols() {
        let mut row: Vec<String> = (0..d).map(|i| io::fmt_f64(points[[i, j]])).collect();
        row.extend((0..n).map(|i| io::fmt_f64(values[[i, j]])));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let path = out_dir(cfg).join("eval.csv");
    io::atomic_write(&path, csv.as_bytes())?;
    println!("evaluated {} functions at {} points", n, points.ncols());
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_cluster(cfg: &RunConfig, args: &ClusterArgs, seed: u64) -> Result<(), CliError> {
    if args.k < 2 {
        return Err(CliError::validation(format!(
            "--k: need at least 2 clusters, got {}",
            args.k
        )));
    }
    let model = load_model_checked(&args.model)?;
    let data = load_dataset_checked(&args.data)?;
    if data.dim() != model.rfm.input_dim() {
        return Err(CliError::validation(format!(
            "model expects {}-dimensional points, dataset has {}",
            model.rfm.input_dim(),
            data.dim()
        )));
    }
    let assignment = spectral_cluster_with(
        &model,
        &data.x.view(),
        args.k,
        &ClusterOptions {
            include_first: args.include_first,
            seed,
            eigenvalue_weighted: args.weighted,
            ..ClusterOptions::default()
        },
    )?;

    let d = data.dim();
    let mut header: Vec<String> = vec!["point".into()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.push("label".into());
    let mut csv = header.join(",");
    csv.push('\n');
    for (j, label) in assignment.labels.iter().enumerate() {
        let mut row: Vec<String> = vec![j.to_string()];
        row.extend((0..d).map(|i| io::fmt_f64(data.x[[i, j]])));
        row.push(label.to_string());
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let path = out_dir(cfg).join("clusters.csv");
    io::atomic_write(&path, csv.as_bytes())?;

    let mut sizes = vec![0usize; args.k];
    for label in &assignment.labels {
        sizes[*label] += 1;
    }
    println!("clusters: {sizes:?} (inertia {:.6})", assignment.inertia);
    println!("wrote {}", path.display());
    Ok(())
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct BenchRow {
    system: String,
    closed_sec: f64,
    iterative_sec: f64,
    closed_lambda1: f64,
    iterative_lambda1: f64,
    status: String,
}

fn benchmark_system(cfg: &RunConfig, system: &str, reps: usize) -> Result<BenchRow, CliError> {
    let mut sys_cfg = cfg.clone();
    sys_cfg.system.name = system.to_string();
    sys_cfg.system.beta = cfg.system.beta;
    let data = simulate_dataset(&sys_cfg)?;
    let rfm = build_rfm(&sys_cfg, data.dim())?;

    let mut closed_times = Vec::with_capacity(reps);
    let mut closed_lambda1 = f64::NAN;
    for _ in 0..reps {
        let (model, timings) = run_closed_form_fit(&sys_cfg, &rfm, &data)?;
        closed_times.push(timings.total_sec);
        closed_lambda1 = model.values[0];
    }

    let train_opts = TrainOptions {
        epochs: sys_cfg.training.epochs,
        step_size: sys_cfg.training.step_size,
        seed: sys_cfg.training.seed,
        output_activation: sys_cfg.training.output_activation.parse()?,
        rank_tol: sys_cfg.model.rank_tol,
        symmetrize: sys_cfg.model.symmetrize,
    };
    let mut iter_times = Vec::with_capacity(reps);
    let mut iterative_lambda1 = f64::NAN;
    for _ in 0..reps {
        let start = Instant::now();
        let trained = fit_iterative_basis(&rfm, &data, sys_cfg.model.n, &train_opts)?;
        iter_times.push(start.elapsed().as_secs_f64());
        iterative_lambda1 = trained.values[0];
    }

    Ok(BenchRow {
        system: system.to_string(),
        closed_sec: median(closed_times),
        iterative_sec: median(iter_times),
        closed_lambda1,
        iterative_lambda1,
        status: "ok".into(),
    })
}

pub fn cmd_benchmark(cfg: &RunConfig, args: &BenchmarkArgs) -> Result<(), CliError> {
    let systems: Vec<&str> = args
        .systems
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if systems.is_empty() {
        return Err(CliError::validation("--systems: need at least one system".into()));
    }
    let reps = args.reps.max(1);

    let mut rows = Vec::new();
    for system in systems {
        match benchmark_system(cfg, system, reps) {
            Ok(row) => rows.push(row),
            Err(e) => rows.push(BenchRow {
                system: system.to_string(),
                closed_sec: f64::NAN,
                iterative_sec: f64::NAN,
                closed_lambda1: f64::NAN,
                iterative_lambda1: f64::NAN,
                status: e.to_string().replace(',', ";").replace('\n', "; "),
            }),
        }
    }

    let mut csv =
        String::from("system,closed_form_sec,iterative_sec,speedup,closed_lambda1,iterative_lambda1,status\n");
    println!(
        "{:<14} {:>14} {:>14} {:>9}  status",
        "system", "closed [s]", "iterative [s]", "speedup"
    );
    for row in &rows {
        let speedup = row.iterative_sec / row.closed_sec;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.system,
            io::fmt_f64(row.closed_sec),
            io::fmt_f64(row.iterative_sec),
            io::fmt_f64(speedup),
            io::fmt_f64(row.closed_lambda1),
            io::fmt_f64(row.iterative_lambda1),
            row.status
        ));
        println!(
            "{:<14} {:>14.4} {:>14.4} {:>8.1}x  {}",
            row.system, row.closed_sec, row.iterative_sec, speedup, row.status
        );
    }
    let path = out_dir(cfg).join("benchmark.csv");
    io::atomic_write(&path, csv.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}
