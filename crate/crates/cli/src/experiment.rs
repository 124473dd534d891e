//! Monte-Carlo runs over seeded channel batches.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use beamsolve_core::system::{channel_seed, compute_kappa, init_state_algorithm1};
use beamsolve_core::{
    compute_step_bounds, generate_channels, run_algorithm1, run_algorithm2, run_reference, IterationTrace, KappaMode,
    Phase, SystemConfig, TraceLevel, TraceRecorder,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Engine, EngineSetup, ExperimentConfig, StepPolicy};
use crate::error::CliError;

pub const CSV_HEADER: [&str; 13] = [
    "run_id",
    "algo",
    "channel",
    "iter",
    "phase",
    "f_nats",
    "wsr_bits",
    "power",
    "grad_norm_u",
    "grad_norm_v",
    "lambda_min_EW",
    "lambda_max_EW",
    "wall_nanos",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses one per core.
    pub workers: Option<usize>,
    /// Forces the eigenvalue columns on.
    pub diagnostics: bool,
}

/// Outcome of one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRun {
    pub channel: u64,
    pub rows: Vec<IterationTrace>,
    pub initial_wsr: f64,
    /// WSR after each outer iteration `1..=L`, the last value carried forward
    /// past an early stop.
    pub wsr_curve: Vec<f64>,
    /// Outer iterations actually run.
    pub iterations: usize,
    pub solver_nanos: u64,
    pub converged: Option<bool>,
}

impl ChannelRun {
    pub fn final_wsr(&self) -> f64 {
        self.wsr_curve.last().copied().unwrap_or(self.initial_wsr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single channel.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub engine: Engine,
    pub scenario: SystemConfig,
    pub seed: u64,
    pub num_channels: usize,
    #[serde(rename = "L")]
    pub iterations: usize,
    pub final_wsr: MeanStd,
    pub initial_wsr_mean: f64,
    /// Mean WSR over channels after each outer iteration.
    pub wsr_curve: Vec<f64>,
    pub mean_iterations: f64,
    pub mean_wall_nanos_per_iter: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub converged_channels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub channels: Vec<ChannelRun>,
    pub summary: Summary,
}

fn solver_error(channel: u64) -> impl Fn(beamsolve_core::Error) -> CliError {
    move |source| CliError::Solver { channel, source }
}

/// Runs one channel realization; `phases` limits the recorded rows.
pub fn run_channel(
    config: &ExperimentConfig,
    setup: &EngineSetup,
    index: u64,
    level: TraceLevel,
    phases: Option<&[Phase]>,
) -> beamsolve_core::Result<ChannelRun> {
    let scenario = &config.scenario;
    let mut channels = generate_channels(scenario, channel_seed(config.seed, index));
    if config.engine_params.kappa_mode == KappaMode::Oracle {
        channels.kappa = compute_kappa(&channels.h, KappaMode::Oracle)?;
    }
    let mut recorder = TraceRecorder::new(config.run_id(), config.engine.as_str(), index, level);
    if let Some(p) = phases {
        recorder = recorder.only_phases(p);
    }
    let mut converged = None;
    match setup {
        EngineSetup::Reference(run) => {
            let mut state = init_state_algorithm1(scenario, &channels)?;
            converged = Some(run_reference(scenario, &channels, &mut state, run, &mut recorder)?.converged);
        }
        EngineSetup::Algorithm1(params, policy) => {
            let mut bounds = compute_step_bounds(scenario, channels.kappa, params.j_u, params.j_v)?;
            if let StepPolicy::Fixed { gamma_u, gamma_v } = *policy {
                bounds = bounds.with_steps(gamma_u, gamma_v);
            }
            let mut state = init_state_algorithm1(scenario, &channels)?;
            run_algorithm1(scenario, &channels, &mut state, params, &bounds, &mut recorder)?;
        }
        EngineSetup::Algorithm2(params) => {
            run_algorithm2(scenario, &channels, params, &mut recorder)?;
        }
    }
    let rows = recorder.into_rows();
    Ok(summarize_rows(index, rows, setup.iterations(), converged))
}

fn summarize_rows(channel: u64, rows: Vec<IterationTrace>, iterations: usize, converged: Option<bool>) -> ChannelRun {
    let initial_wsr = rows.first().and_then(|r| r.wsr_bits).unwrap_or(f64::NAN);
    let mut curve = vec![f64::NAN; iterations];
    let mut ran = 0;
    for row in &rows {
        if row.iter >= 1 && row.iter <= iterations {
            if let Some(w) = row.wsr_bits {
                curve[row.iter - 1] = w;
            }
            ran = ran.max(row.iter);
        }
    }
    let mut last = initial_wsr;
    for w in &mut curve {
        if w.is_nan() {
            *w = last;
        }
        last = *w;
    }
    let solver_nanos = rows.iter().filter_map(|r| r.wall_nanos).sum();
    ChannelRun { channel, rows, initial_wsr, wsr_curve: curve, iterations: ran, solver_nanos, converged }
}

/// Runs every channel of `config` on a worker pool. Results are kept in
/// channel order, so the worker count never changes them.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<Experiment, CliError> {
    run_with(config, options, None)
}

pub(crate) fn run_with(
    config: &ExperimentConfig,
    options: &RunOptions,
    phases: Option<&[Phase]>,
) -> Result<Experiment, CliError> {
    let setup = config.engine_setup().map_err(|(_, message)| CliError::Config {
        path: config.run_id().into(),
        line: 1,
        message,
    })?;
    let level = if options.diagnostics || config.engine_params.diagnostics {
        TraceLevel::Diagnostics
    } else {
        TraceLevel::Metrics
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Failed(format!("worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        (0..config.num_channels as u64)
            .into_par_iter()
            .map(|i| run_channel(config, &setup, i, level, phases).map_err(solver_error(i)))
            .collect()
    });
    let channels = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(config, setup.iterations(), &channels);
    Ok(Experiment { config: config.clone(), channels, summary })
}

fn summarize(config: &ExperimentConfig, iterations: usize, runs: &[ChannelRun]) -> Summary {
    let n = runs.len() as f64;
    let finals: Vec<f64> = runs.iter().map(ChannelRun::final_wsr).collect();
    let mut curve = vec![0.0; iterations];
    for run in runs {
        for (c, w) in curve.iter_mut().zip(&run.wsr_curve) {
            *c += w / n;
        }
    }
    let total_iters: usize = runs.iter().map(|r| r.iterations).sum();
    let total_nanos: u64 = runs.iter().map(|r| r.solver_nanos).sum();
    Summary {
        run_id: config.run_id().to_string(),
        engine: config.engine,
        scenario: config.scenario.clone(),
        seed: config.seed,
        num_channels: runs.len(),
        iterations,
        final_wsr: MeanStd::of(&finals),
        initial_wsr_mean: runs.iter().map(|r| r.initial_wsr).sum::<f64>() / n,
        wsr_curve: curve,
        mean_iterations: total_iters as f64 / n,
        mean_wall_nanos_per_iter: total_nanos as f64 / total_iters.max(1) as f64,
        converged_channels: match config.engine {
            Engine::Reference => Some(runs.iter().filter(|r| r.converged == Some(true)).count()),
            _ => None,
        },
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    run_id: &'a str,
    algo: &'a str,
    channel: u64,
    iter: usize,
    phase: &'static str,
    f_nats: Option<f64>,
    wsr_bits: Option<f64>,
    power: f64,
    grad_norm_u: Option<f64>,
    grad_norm_v: Option<f64>,
    #[serde(rename = "lambda_min_EW")]
    lambda_min_ew: Option<f64>,
    #[serde(rename = "lambda_max_EW")]
    lambda_max_ew: Option<f64>,
    wall_nanos: Option<u64>,
}

/// Writes all trace rows in channel order.
pub fn write_trace_csv<W: Write>(out: W, runs: &[ChannelRun], with_timing: bool) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in runs.iter().flat_map(|r| &r.rows) {
        w.serialize(CsvRow {
            run_id: &row.run_id,
            algo: &row.algo,
            channel: row.channel,
            iter: row.iter,
            phase: row.phase.as_str(),
            f_nats: row.f_nats,
            wsr_bits: row.wsr_bits,
            power: row.power,
            grad_norm_u: row.grad_norm_u,
            grad_norm_v: row.grad_norm_v,
            lambda_min_ew: row.lambda_min_ew,
            lambda_max_ew: row.lambda_max_ew,
            wall_nanos: row.wall_nanos.filter(|_| with_timing),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Fails early if an output file cannot be created.
pub fn check_outputs(config: &ExperimentConfig) -> Result<(), CliError> {
    for path in [&config.output.csv, &config.output.json].into_iter().flatten() {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let meta = fs::metadata(dir).map_err(|e| CliError::io(dir, e))?;
        if !meta.is_dir() {
            return Err(CliError::io(dir, std::io::Error::other("not a directory")));
        }
    }
    Ok(())
}

/// Writes the configured CSV and summary files.
pub fn write_outputs(experiment: &Experiment) -> Result<(), CliError> {
    let output = &experiment.config.output;
    if let Some(path) = &output.csv {
        let mut file = create(path)?;
        write_trace_csv(&mut file, &experiment.channels, output.timing_in_trace).map_err(|e| {
            let io = match e.into_kind() {
                csv::ErrorKind::Io(io) => io,
                other => std::io::Error::other(format!("{other:?}")),
            };
            CliError::io(path, io)
        })?;
        file.flush().map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = &output.json {
        let mut file = create(path)?;
        serde_json::to_writer_pretty(&mut file, &experiment.summary).map_err(|e| CliError::io(path, e.into()))?;
        writeln!(file).and_then(|_| file.flush()).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EngineParams, OutputConfig};

    fn config(engine: Engine, l: usize, channels: usize) -> ExperimentConfig {
        ExperimentConfig {
            run_id: Some("t".into()),
            scenario: SystemConfig::at_10db(4, 2, 2, 2),
            seed: 5,
            num_channels: channels,
            engine,
            engine_params: EngineParams {
                iterations: Some(l),
                j_u: Some(2),
                j_w: Some(2),
                j_v: Some(2),
                ..Default::default()
            },
            output: OutputConfig::default(),
        }
    }

    #[test]
    fn mean_std() {
        let s = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 1.0).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[4.0]).std, 0.0);
    }

    #[test]
    fn curve_carries_forward_after_early_stop() {
        let row = |iter, wsr| IterationTrace {
            run_id: "r".into(),
            algo: "a".into(),
            channel: 0,
            iter,
            phase: Phase::Scale,
            f_nats: None,
            wsr_bits: Some(wsr),
            power: 1.0,
            grad_norm_u: None,
            grad_norm_v: None,
            lambda_min_ew: None,
            lambda_max_ew: None,
            wall_nanos: Some(10),
        };
        let run = summarize_rows(0, vec![row(0, 1.0), row(1, 2.0), row(2, 2.5)], 4, Some(true));
        assert_eq!(run.wsr_curve, vec![2.0, 2.5, 2.5, 2.5]);
        assert_eq!(run.iterations, 2);
        assert_eq!(run.solver_nanos, 30);
        assert_eq!(run.final_wsr(), 2.5);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = config(Engine::Algorithm2, 3, 6);
        let one = run_experiment(&cfg, &RunOptions { workers: Some(1), ..Default::default() }).unwrap();
        let four = run_experiment(&cfg, &RunOptions { workers: Some(4), ..Default::default() }).unwrap();
        let strip = |e: &Experiment| -> Vec<f64> { e.channels.iter().flat_map(|c| c.wsr_curve.clone()).collect() };
        assert_eq!(strip(&one), strip(&four));
        assert_eq!(one.channels.iter().map(|c| c.channel).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn every_engine_runs() {
        for engine in [Engine::Reference, Engine::Algorithm1, Engine::Algorithm2] {
            let e = run_experiment(&config(engine, 3, 2), &RunOptions::default()).unwrap();
            assert_eq!(e.summary.wsr_curve.len(), 3);
            assert!(e.summary.final_wsr.mean > e.summary.initial_wsr_mean, "{engine:?}");
            assert_eq!(e.summary.converged_channels.is_some(), engine == Engine::Reference);
        }
    }

    #[test]
    fn csv_layout() {
        let e = run_experiment(&config(Engine::Reference, 2, 1), &RunOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &e.channels, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&first[..5], &["t", "reference", "0", "0", "init"]);
        assert_eq!(&first[10..], &["", "", ""]);
    }
}
