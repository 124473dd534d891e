//! Side-by-side mean WSR curves of several experiments.

use std::io::Write;

use beamsolve_core::Phase;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{run_with, RunOptions};

/// Rows are outer iterations `1..=max L`; shorter curves carry their last
/// value forward. `ratio[c][i] = wsr[c][i] / wsr[0][i]`, so the first config
/// is the baseline and, once it has converged, every ratio is relative to its
/// converged WSR.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub labels: Vec<String>,
    pub wsr: Vec<Vec<f64>>,
    pub ratio: Vec<Vec<f64>>,
}

impl ComparisonTable {
    pub fn rows(&self) -> usize {
        self.wsr.first().map_or(0, Vec::len)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["iter".to_string()];
        for l in &self.labels {
            header.push(format!("{l}_wsr"));
            header.push(format!("{l}_ratio"));
        }
        w.write_record(&header)?;
        for i in 0..self.rows() {
            let mut rec = vec![(i + 1).to_string()];
            for c in 0..self.labels.len() {
                rec.push(self.wsr[c][i].to_string());
                rec.push(self.ratio[c][i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn unique_labels(configs: &[ExperimentConfig]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::with_capacity(configs.len());
    for c in configs {
        let base = c.run_id().to_string();
        let mut label = base.clone();
        let mut n = 2;
        while labels.contains(&label) {
            label = format!("{base}#{n}");
            n += 1;
        }
        labels.push(label);
    }
    labels
}

/// Runs every config and aligns their mean WSR curves. All configs must share
/// scenario, seed and channel count so they see the same channels.
pub fn compare_engines(configs: &[ExperimentConfig], options: &RunOptions) -> Result<ComparisonTable, CliError> {
    let first = configs.first().ok_or_else(|| CliError::Rejected("no configs given".into()))?;
    for c in &configs[1..] {
        if c.scenario != first.scenario {
            return Err(CliError::Rejected(format!("{} and {} use different scenarios", first.run_id(), c.run_id())));
        }
        if c.seed != first.seed {
            return Err(CliError::Rejected(format!("{} and {} use different seeds", first.run_id(), c.run_id())));
        }
        if c.num_channels != first.num_channels {
            return Err(CliError::Rejected(format!(
                "{} and {} use different channel counts",
                first.run_id(),
                c.run_id()
            )));
        }
    }
    let phases = [Phase::Init, Phase::VStep, Phase::Scale, Phase::Refresh];
    let curves = configs
        .iter()
        .map(|c| run_with(c, options, Some(&phases)).map(|e| e.summary.wsr_curve))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = curves.iter().map(Vec::len).max().unwrap_or(0);
    let wsr: Vec<Vec<f64>> = curves
        .into_iter()
        .map(|mut c| {
            let last = c.last().copied().unwrap_or(f64::NAN);
            c.resize(rows, last);
            c
        })
        .collect();
    let ratio = wsr.iter().map(|c| c.iter().zip(&wsr[0]).map(|(x, b)| x / b).collect()).collect();
    Ok(ComparisonTable { labels: unique_labels(configs), wsr, ratio })
}
