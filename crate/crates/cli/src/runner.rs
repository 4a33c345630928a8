//! Experiment orchestration: per-seed task construction, the ablation
//! matrix (NOIS/INIT/CLSO/SRPR/GCLB/D4AM), the fixed-weight grid search,
//! and cross-seed aggregation.

use std::collections::VecDeque;
use std::sync::Mutex;

use auxcal_core::net::{Activation, NetworkSpec, OutputActivation};
use auxcal_core::task::{self, TaskData};
use auxcal_core::trainer::{self, Mode, RunReport, TaskBundle};
use auxcal_core::{rng, Matrix, ParamVector};
use serde::Serialize;

use crate::config::{ExperimentConfig, HarnessMode};
use crate::error::CliError;

// Substream tags for per-seed data generation.
const TAG_REG_TRAIN: u64 = 1;
const TAG_CLS_TRAIN: u64 = 2;
const TAG_VAL: u64 = 3;
const TAG_TEST: u64 = 4;
const TAG_CLASSIFIER_DATA: u64 = 5;

/// Everything shared by all modes under one seed: the data splits, frozen
/// models, and the pre-trained checkpoint every fine-tuning run starts
/// from.
pub struct SeedArtifacts {
    pub seed: u64,
    pub bundle: TaskBundle,
    pub test: TaskData,
    pub init_theta: ParamVector,
}

pub fn enhancer_spec(cfg: &ExperimentConfig) -> Result<NetworkSpec, CliError> {
    let d = cfg.task.feature_dim;
    let mut dims = vec![d];
    dims.extend_from_slice(&cfg.enhancer_hidden);
    dims.push(d);
    NetworkSpec::new(dims, Activation::Tanh, OutputActivation::Identity).map_err(CliError::Core)
}

fn proxy_spec(cfg: &ExperimentConfig) -> Result<NetworkSpec, CliError> {
    NetworkSpec::new(
        vec![cfg.task.feature_dim, 16, cfg.task.num_classes],
        Activation::Tanh,
        OutputActivation::Softmax,
    )
    .map_err(CliError::Core)
}

/// Evaluator family: widths/depths/activations cycle so every evaluator
/// differs from the proxy in architecture or seed.
fn evaluator_specs(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<(String, NetworkSpec, u64)>, CliError> {
    let d = cfg.task.feature_dim;
    let k = cfg.task.num_classes;
    let family: [(&[usize], Activation); 4] = [
        (&[16], Activation::Tanh),
        (&[32, 16], Activation::Tanh),
        (&[8], Activation::Relu),
        (&[24], Activation::Tanh),
    ];
    let mut specs = Vec::with_capacity(cfg.evaluator_count);
    for i in 0..cfg.evaluator_count {
        let (hidden, act) = family[i % family.len()];
        let mut dims = vec![d];
        dims.extend_from_slice(hidden);
        dims.push(k);
        let spec = NetworkSpec::new(dims, act, OutputActivation::Softmax).map_err(CliError::Core)?;
        specs.push((format!("EV{i}"), spec, seed ^ (0xE0 + i as u64)));
    }
    Ok(specs)
}

/// Keep the first `label_fraction` of a split for the classification
/// objective. Labels are assigned round-robin at generation, so a prefix
/// stays class-balanced.
fn labeled_subset(data: &TaskData, fraction: f64) -> Result<TaskData, CliError> {
    let n = data.len();
    let m = ((n as f64 * fraction).round() as usize).clamp(1, n);
    let d = data.clean.ncols();
    let take = |src: &Matrix| -> Result<Matrix, CliError> {
        let mut out = Matrix::zeros(m, d);
        for i in 0..m {
            out.row_mut(i).copy_from_slice(src.row(i));
        }
        Ok(out)
    };
    Ok(TaskData {
        clean: take(&data.clean)?,
        noisy: take(&data.noisy)?,
        labels: data.labels[..m].to_vec(),
        snr_db: data.snr_db[..m].to_vec(),
    })
}

pub fn build_seed_artifacts(cfg: &ExperimentConfig, seed: u64) -> Result<SeedArtifacts, CliError> {
    let spec = &cfg.task;
    let reg_train =
        task::gen_split(spec, spec.train_size, &mut rng::substream(seed, TAG_REG_TRAIN))?;
    let cls_full =
        task::gen_split(spec, spec.train_size, &mut rng::substream(seed, TAG_CLS_TRAIN))?;
    let cls_train = labeled_subset(&cls_full, spec.label_fraction)?;
    let val = task::gen_split(spec, spec.val_size, &mut rng::substream(seed, TAG_VAL))?;
    let test = task::gen_split(spec, spec.test_size, &mut rng::substream(seed, TAG_TEST))?;

    let (clf_clean, clf_labels) =
        task::gen_clean(spec, spec.train_size, &mut rng::substream(seed, TAG_CLASSIFIER_DATA))?;
    let pspec = proxy_spec(cfg)?;
    let proxy_seed = seed ^ 0xA1;
    let proxy = task::train_proxy(&pspec, &clf_clean, &clf_labels, proxy_seed, &cfg.classifier)?;
    let evaluators = task::train_evaluators(
        &evaluator_specs(cfg, seed)?,
        &pspec,
        proxy_seed,
        &clf_clean,
        &clf_labels,
        &cfg.classifier,
    )?;

    let enh = enhancer_spec(cfg)?;
    let init_theta = trainer::pretrain(
        &enh,
        &reg_train,
        cfg.pretrain.steps,
        cfg.pretrain.epsilon,
        cfg.pretrain.batch_size,
        seed,
    )?;

    Ok(SeedArtifacts {
        seed,
        bundle: TaskBundle {
            enhancer_spec: enh,
            proxy,
            reg_train,
            cls_train,
            val,
            evaluators,
        },
        test,
        init_theta,
    })
}

/// Result of one (label, seed) cell. `failure` carries the error message
/// when the run did not complete; aggregation skips such cells.
#[derive(Debug, Clone, Serialize)]
pub struct CellOutcome {
    pub label: String,
    pub seed: u64,
    pub evaluator_errors: Option<Vec<f64>>,
    pub failure: Option<String>,
    #[serde(skip)]
    pub report: Option<RunReport>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ModeSummary {
    pub label: String,
    pub per_evaluator_mean: Vec<f64>,
    pub per_evaluator_std: Vec<f64>,
    pub overall_mean: f64,
    pub seeds_completed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReportKind {
    Ablation,
    Grid,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateReport {
    pub kind: ReportKind,
    pub evaluator_names: Vec<String>,
    pub cells: Vec<CellOutcome>,
    pub summaries: Vec<ModeSummary>,
    /// Mean of the seven lowest per-weight overall means (grid runs only).
    pub best7_grid_average: Option<f64>,
}

/// Bounded worker pool preserving input order in the output.
fn parallel_map<T, R, F>(items: Vec<T>, jobs: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let queue: Mutex<VecDeque<(usize, T)>> = Mutex::new(items.into_iter().enumerate().collect());
    let total = queue.lock().unwrap().len();
    let results: Mutex<Vec<Option<R>>> =
        Mutex::new((0..total).map(|_| None).collect());
    let workers = jobs.max(1).min(total.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap().pop_front();
                match next {
                    Some((idx, item)) => {
                        let r = f(item);
                        results.lock().unwrap()[idx] = Some(r);
                    }
                    None => break,
                }
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("worker did not fill slot"))
        .collect()
}

fn cell_failure(label: &str, seed: u64, message: String) -> CellOutcome {
    CellOutcome {
        label: label.to_string(),
        seed,
        evaluator_errors: None,
        failure: Some(message),
        report: None,
    }
}

fn run_joint_cell(
    cfg: &ExperimentConfig,
    artifacts: &SeedArtifacts,
    label: &str,
    mode: Mode,
) -> CellOutcome {
    let tcfg = cfg.trainer_config(mode, artifacts.seed);
    match trainer::run(&tcfg, &artifacts.bundle, artifacts.init_theta.clone()) {
        Ok(report) => match task::evaluate_enhanced(
            &artifacts.bundle.enhancer_spec,
            &report.final_theta,
            &artifacts.bundle.evaluators,
            &artifacts.test.noisy,
            &artifacts.test.labels,
        ) {
            Ok(errors) => CellOutcome {
                label: label.to_string(),
                seed: artifacts.seed,
                evaluator_errors: Some(errors),
                failure: None,
                report: Some(report),
            },
            Err(e) => cell_failure(label, artifacts.seed, e.to_string()),
        },
        Err(e) => cell_failure(label, artifacts.seed, e.to_string()),
    }
}

fn run_ablation_cell(
    cfg: &ExperimentConfig,
    artifacts: &SeedArtifacts,
    mode: HarnessMode,
) -> CellOutcome {
    let label = mode.to_string();
    let result = match mode {
        HarnessMode::Nois => task::evaluate_features(
            &artifacts.bundle.evaluators,
            &artifacts.test.noisy,
            &artifacts.test.labels,
        ),
        HarnessMode::Init => task::evaluate_enhanced(
            &artifacts.bundle.enhancer_spec,
            &artifacts.init_theta,
            &artifacts.bundle.evaluators,
            &artifacts.test.noisy,
            &artifacts.test.labels,
        ),
        _ => {
            let mode = mode.trainer_mode().expect("joint mode");
            return run_joint_cell(cfg, artifacts, &label, mode);
        }
    };
    match result {
        Ok(errors) => CellOutcome {
            label,
            seed: artifacts.seed,
            evaluator_errors: Some(errors),
            failure: None,
            report: None,
        },
        Err(e) => cell_failure(&label, artifacts.seed, e.to_string()),
    }
}

/// Cross-seed aggregation in the given label order. Pure function of the
/// cells; the report emitter re-runs it from persisted raw cells as an
/// independent cross-check.
pub fn aggregate(cells: &[CellOutcome], labels: &[String], n_evaluators: usize) -> Vec<ModeSummary> {
    let mut summaries = Vec::with_capacity(labels.len());
    for label in labels {
        let completed: Vec<&Vec<f64>> = cells
            .iter()
            .filter(|c| &c.label == label)
            .filter_map(|c| c.evaluator_errors.as_ref())
            .collect();
        let n = completed.len();
        let mut mean = vec![0.0; n_evaluators];
        let mut std = vec![0.0; n_evaluators];
        let mut overall = 0.0;
        if n > 0 {
            for errs in &completed {
                for (m, e) in mean.iter_mut().zip(errs.iter()) {
                    *m += e;
                }
            }
            for m in &mut mean {
                *m /= n as f64;
            }
            for errs in &completed {
                for ((s, e), m) in std.iter_mut().zip(errs.iter()).zip(&mean) {
                    *s += (e - m) * (e - m);
                }
            }
            for s in &mut std {
                *s = (*s / n as f64).sqrt();
            }
            overall = mean.iter().sum::<f64>() / n_evaluators as f64;
        }
        summaries.push(ModeSummary {
            label: label.clone(),
            per_evaluator_mean: mean,
            per_evaluator_std: std,
            overall_mean: overall,
            seeds_completed: n,
        });
    }
    summaries
}

fn build_all_artifacts(
    cfg: &ExperimentConfig,
) -> Vec<(u64, Result<SeedArtifacts, CliError>)> {
    parallel_map(cfg.seeds.clone(), cfg.jobs, |seed| {
        (seed, build_seed_artifacts(cfg, seed))
    })
}

fn evaluator_names(cfg: &ExperimentConfig) -> Vec<String> {
    (0..cfg.evaluator_count).map(|i| format!("EV{i}")).collect()
}

/// Execute the ablation matrix: one pre-trained checkpoint per seed,
/// shared across modes; NOIS/INIT run no fine-tuning.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AggregateReport, CliError> {
    cfg.validate()?;
    let artifacts = build_all_artifacts(cfg);
    let mut jobs: Vec<(HarnessMode, usize)> = Vec::new();
    for (ai, _) in artifacts.iter().enumerate() {
        for &mode in &cfg.ablation_modes {
            jobs.push((mode, ai));
        }
    }
    let cells = parallel_map(jobs, cfg.jobs, |(mode, ai)| {
        let (seed, art) = &artifacts[ai];
        match art {
            Ok(art) => run_ablation_cell(cfg, art, mode),
            Err(e) => cell_failure(&mode.to_string(), *seed, e.to_string()),
        }
    });
    let labels: Vec<String> = cfg.ablation_modes.iter().map(|m| m.to_string()).collect();
    let summaries = aggregate(&cells, &labels, cfg.evaluator_count);
    Ok(AggregateReport {
        kind: ReportKind::Ablation,
        evaluator_names: evaluator_names(cfg),
        cells,
        summaries,
        best7_grid_average: None,
    })
}

/// Canonical label for a grid weight, used in filenames and CSV rows.
pub fn weight_label(w: f64) -> String {
    format!("W{w}")
}

/// Execute the fixed-weight grid: one FIXED_WEIGHT run per (weight, seed),
/// sharing the per-seed pre-trained checkpoints.
pub fn run_grid_search(cfg: &ExperimentConfig) -> Result<AggregateReport, CliError> {
    cfg.validate()?;
    if cfg.grid_weights.is_empty() {
        return Err(CliError::Config("grid_weights: none configured".into()));
    }
    let artifacts = build_all_artifacts(cfg);
    let mut jobs: Vec<(f64, usize)> = Vec::new();
    for (ai, _) in artifacts.iter().enumerate() {
        for &w in &cfg.grid_weights {
            jobs.push((w, ai));
        }
    }
    let cells = parallel_map(jobs, cfg.jobs, |(w, ai)| {
        let (seed, art) = &artifacts[ai];
        let label = weight_label(w);
        match art {
            Ok(art) => run_joint_cell(cfg, art, &label, Mode::FixedWeight(w)),
            Err(e) => cell_failure(&label, *seed, e.to_string()),
        }
    });
    let labels: Vec<String> = cfg.grid_weights.iter().map(|w| weight_label(*w)).collect();
    let summaries = aggregate(&cells, &labels, cfg.evaluator_count);
    let best7 = best_k_average(&summaries, 7);
    Ok(AggregateReport {
        kind: ReportKind::Grid,
        evaluator_names: evaluator_names(cfg),
        cells,
        summaries,
        best7_grid_average: best7,
    })
}

/// Mean of the `k` lowest per-label overall means among completed labels.
pub fn best_k_average(summaries: &[ModeSummary], k: usize) -> Option<f64> {
    let mut means: Vec<f64> = summaries
        .iter()
        .filter(|s| s.seeds_completed > 0)
        .map(|s| s.overall_mean)
        .collect();
    if means.is_empty() {
        return None;
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = k.min(means.len());
    Some(means[..k].iter().sum::<f64>() / k as f64)
}
