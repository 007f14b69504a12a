//! Threshold sweeps over a scenario set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_signal, CriterionSweep, EvalKey, RunConfig};
use crate::array_model::circular_distance;
use crate::coherence::Criterion;
use crate::error::{Error, Result};
use crate::simulator::{mix_scenario, ScenarioConfig};
use crate::spectra::Method;

/// Scenario grid: every DOA pair (or `J`-tuple) from `doas` respecting the
/// minimum spacing, crossed with `snrs` and `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSet {
    pub doas: Vec<f64>,
    pub snrs: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Shared settings; its `doas`, `snr_db` and `seed` are overridden.
    pub base: ScenarioConfig,
}

impl Default for ScenarioSet {
    fn default() -> Self {
        Self {
            doas: vec![-60.0, -30.0, 0.0, 30.0, 60.0],
            snrs: vec![0.0, 5.0, 20.0],
            seeds: vec![1, 2],
            base: ScenarioConfig::default(),
        }
    }
}

fn combinations(items: &[f64], j: usize) -> Vec<Vec<f64>> {
    if j == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        for mut rest in combinations(&items[i + 1..], j - 1) {
            rest.insert(0, items[i]);
            out.push(rest);
        }
    }
    out
}

impl ScenarioSet {
    pub fn scenarios(&self, num_sources: usize) -> Vec<ScenarioConfig> {
        let sep = self.base.min_separation;
        let tuples: Vec<Vec<f64>> = combinations(&self.doas, num_sources)
            .into_iter()
            .filter(|t| t.iter().enumerate().all(|(i, &a)| t[i + 1..].iter().all(|&b| circular_distance(a, b) >= sep)))
            .collect();
        let mut out = Vec::new();
        for t in &tuples {
            for &snr in &self.snrs {
                for &seed in &self.seeds {
                    out.push(ScenarioConfig { doas: t.clone(), snr_db: snr, seed, ..self.base.clone() });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub run: RunConfig,
    pub scenarios: ScenarioSet,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            run: RunConfig {
                methods: vec![Method::Hermitian, Method::Music],
                criteria: Criterion::ALL.iter().map(|&c| CriterionSweep::default_grid(c)).collect(),
                ..RunConfig::default()
            },
            scenarios: ScenarioSet::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.run.validate()?;
        Ok(cfg)
    }
}

/// Accuracy of one scenario under one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: usize,
    pub doas: Vec<f64>,
    pub snr_db: f64,
    pub seed: u64,
    pub key: EvalKey,
    pub accuracy: f64,
    pub front_back_rate: f64,
    pub mean_selected: f64,
    pub scored_frames: usize,
}

/// One row of the sweep table: scenario-averaged accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub key: EvalKey,
    /// `None` for the average over every SNR.
    pub snr_db: Option<f64>,
    pub accuracy: f64,
    pub front_back_rate: f64,
    pub mean_selected: f64,
    pub scenarios: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub per_scenario: Vec<ScenarioResult>,
}

impl SweepTable {
    /// Overall row for a setting.
    pub fn get(&self, method: Method, criterion: Criterion, threshold: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| {
            r.snr_db.is_none() && r.key.method == method && r.key.criterion == criterion && same_threshold(r.key.threshold, threshold)
        })
    }

    /// Overall accuracy curve of one criterion, in threshold order.
    pub fn curve(&self, method: Method, criterion: Criterion) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.snr_db.is_none() && r.key.method == method && r.key.criterion == criterion)
            .map(|r| (r.key.threshold, r.accuracy))
            .collect()
    }
}

fn same_threshold(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Evaluates every scenario (in parallel) and averages per setting.
pub fn run_sweep(config: &SweepConfig, scenarios: &[ScenarioConfig]) -> Result<SweepTable> {
    if scenarios.is_empty() {
        return Err(Error::Empty("scenario set"));
    }
    config.run.validate()?;
    let db = config.run.database(scenarios[0].stft())?;
    let per: Vec<Vec<ScenarioResult>> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, sc)| -> Result<Vec<ScenarioResult>> {
            let out = mix_scenario(sc)?;
            let evals = evaluate_signal(&out.mixture, Some(&out.truth), &db, &config.run)?;
            Ok(evals
                .into_iter()
                .map(|e| ScenarioResult {
                    scenario: i,
                    doas: sc.doas.clone(),
                    snr_db: sc.snr_db,
                    seed: sc.seed,
                    key: e.key,
                    accuracy: e.summary.accuracy,
                    front_back_rate: ratio(e.summary.front_back_frames, e.summary.scored_frames),
                    mean_selected: e.summary.mean_selected,
                    scored_frames: e.summary.scored_frames,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let per_scenario: Vec<ScenarioResult> = per.into_iter().flatten().collect();

    let mut snrs: Vec<f64> = Vec::new();
    for sc in scenarios {
        if !snrs.iter().any(|&s| same_threshold(s, sc.snr_db)) {
            snrs.push(sc.snr_db);
        }
    }
    let keys: Vec<EvalKey> = per_scenario.iter().filter(|r| r.scenario == 0).map(|r| r.key).collect();
    let mut rows = Vec::new();
    for snr in std::iter::once(None).chain(snrs.iter().map(|&s| Some(s))) {
        for key in &keys {
            let sel: Vec<&ScenarioResult> = per_scenario
                .iter()
                .filter(|r| r.key == *key && snr.is_none_or(|s| same_threshold(s, r.snr_db)))
                .collect();
            let n = sel.len() as f64;
            rows.push(SweepRow {
                key: *key,
                snr_db: snr,
                accuracy: sel.iter().map(|r| r.accuracy).sum::<f64>() / n,
                front_back_rate: sel.iter().map(|r| r.front_back_rate).sum::<f64>() / n,
                mean_selected: sel.iter().map(|r| r.mean_selected).sum::<f64>() / n,
                scenarios: sel.len(),
            });
        }
    }
    Ok(SweepTable { rows, per_scenario })
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}
