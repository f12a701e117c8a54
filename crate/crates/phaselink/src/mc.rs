//! Monte-Carlo comparison harness: repeated patch draws with known truth,
//! phase RMSE per chain configuration, and a plain-text results table.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::f64::consts::PI;

use crate::error::Result;
use crate::estimators::EstimatorConfig;
use crate::objectives::ObjectiveKind;
use crate::pipeline::{chain_solve, flag, naive_phases_from_patch, SolverChoice};
use crate::regularizers::RegularizerSpec;
use crate::synth::{sample_patch, SceneModel};
use crate::types::{wrap_angle, TorusVector};

/// Root-mean-square wrapped phase error over the non-reference dates, with
/// both vectors referenced to their first entry.
pub fn phase_rmse(estimate: &TorusVector, truth: &TorusVector) -> f64 {
    assert_eq!(estimate.dim(), truth.dim());
    let a = estimate.reference_first();
    let b = truth.reference_first();
    let p = a.dim();
    let sum: f64 = (1..p)
        .map(|q| wrap_angle(a.entries()[q].arg() - b.entries()[q].arg()).powi(2))
        .sum();
    (sum / (p - 1) as f64).sqrt()
}

/// Phase RMSE between referenced phase stacks over processed pixels,
/// pooling all non-reference dates.
pub fn stack_phase_rmse(phases: &Array3<f64>, truth: &Array3<f64>, flags: &Array2<u8>) -> f64 {
    let (rows, cols, p) = phases.dim();
    assert_eq!(truth.dim(), (rows, cols, p));
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..rows {
        for c in 0..cols {
            if flags[(r, c)] & flag::NOT_PROCESSED != 0 {
                continue;
            }
            for q in 1..p {
                sum += wrap_angle(phases[(r, c, q)] - truth[(r, c, q)]).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        return f64::NAN;
    }
    (sum / count as f64).sqrt()
}

/// Pearson correlation between two images over a mask of processed pixels.
pub fn pearson(a: &Array2<f64>, b: &Array2<f64>, flags: &Array2<u8>) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for ((idx, &x), &y) in a.indexed_iter().zip(b.iter()) {
        if flags[idx] & flag::NOT_PROCESSED == 0 {
            xs.push(x);
            ys.push(y);
        }
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// One labelled chain to compare.
#[derive(Clone, Debug)]
pub struct ChainSpec {
    pub label: String,
    pub estimator: EstimatorConfig,
    pub regularizer: RegularizerSpec,
    pub objective: ObjectiveKind,
    pub solver: SolverChoice,
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub scene: SceneModel,
    pub sample_counts: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub label: String,
    pub n: usize,
    pub mean_rmse: f64,
    pub failures: usize,
}

/// Repeated-trial RMSE comparison. Each trial draws a fresh truth vector
/// (uniform phases, first entry zero) and a patch; every chain sees the same
/// patch. Failed solves are counted and skipped from the mean.
pub fn run_bench(cfg: &BenchConfig, chains: &[ChainSpec]) -> Result<Vec<BenchRow>> {
    cfg.scene.validate()?;
    let p = cfg.scene.p;
    let mut rows = Vec::new();
    for &n in &cfg.sample_counts {
        let mut sums = vec![0.0f64; chains.len() + 1];
        let mut counts = vec![0usize; chains.len() + 1];
        let mut failures = vec![0usize; chains.len() + 1];
        for trial in 0..cfg.trials {
            let mut rng = ChaCha12Rng::seed_from_u64(
                cfg.seed ^ (n as u64).wrapping_mul(0x9E3779B97F4A7C15) ^ trial as u64,
            );
            let mut theta = vec![0.0f64; p];
            for t in theta.iter_mut().skip(1) {
                *t = rng.random_range(-PI..PI);
            }
            let truth = TorusVector::from_phases(&theta)?;
            let patch_seed: u64 = rng.random();
            let patch = sample_patch(&cfg.scene, &theta, n, patch_seed)?;

            // naive baseline first
            let naive = TorusVector::from_phases(&naive_phases_from_patch(&patch))?;
            sums[0] += phase_rmse(&naive, &truth);
            counts[0] += 1;

            for (k, chain) in chains.iter().enumerate() {
                match chain_solve(
                    &patch,
                    &chain.estimator,
                    &chain.regularizer,
                    chain.objective,
                    &chain.solver,
                ) {
                    Ok(outcome) => {
                        sums[k + 1] += phase_rmse(&outcome.w, &truth);
                        counts[k + 1] += 1;
                    }
                    Err(_) => failures[k + 1] += 1,
                }
            }
        }
        rows.push(BenchRow {
            label: "naive".to_string(),
            n,
            mean_rmse: sums[0] / counts[0].max(1) as f64,
            failures: failures[0],
        });
        for (k, chain) in chains.iter().enumerate() {
            rows.push(BenchRow {
                label: chain.label.clone(),
                n,
                mean_rmse: sums[k + 1] / counts[k + 1].max(1) as f64,
                failures: failures[k + 1],
            });
        }
    }
    Ok(rows)
}

/// Fixed-width table of bench rows.
pub fn format_table(rows: &[BenchRow]) -> String {
    let label_width = rows
        .iter()
        .map(|r| r.label.len())
        .max()
        .unwrap_or(8)
        .max("chain".len());
    let mut out = String::new();
    out.push_str(&format!(
        "{:<label_width$}  {:>6}  {:>12}  {:>8}\n",
        "chain", "n", "mean rmse", "failures"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<label_width$}  {:>6}  {:>12.6}  {:>8}\n",
            row.label, row.n, row.mean_rmse, row.failures
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorKind;
    use crate::mm::MmConfig;

    #[test]
    fn rmse_of_identical_vectors_is_zero() {
        let w = TorusVector::from_phases(&[0.0, 1.0, -2.0]).unwrap();
        assert_eq!(phase_rmse(&w, &w), 0.0);
    }

    #[test]
    fn rmse_ignores_global_phase() {
        let a = TorusVector::from_phases(&[0.3, 1.3, -1.7]).unwrap();
        let b = TorusVector::from_phases(&[0.0, 1.0, -2.0]).unwrap();
        assert!(phase_rmse(&a, &b) < 1e-12);
    }

    #[test]
    fn rmse_measures_wrapped_differences() {
        let a = TorusVector::from_phases(&[0.0, PI - 0.1]).unwrap();
        let b = TorusVector::from_phases(&[0.0, -PI + 0.1]).unwrap();
        assert!((phase_rmse(&a, &b) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn pearson_of_identical_images_is_one() {
        let img = Array2::from_shape_fn((4, 4), |(r, c)| (r * 4 + c) as f64);
        let flags = Array2::<u8>::zeros((4, 4));
        assert!((pearson(&img, &img, &flags) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linked_chain_beats_naive_at_moderate_coherence() {
        let cfg = BenchConfig {
            scene: SceneModel::exponential(6, 0.8).unwrap(),
            sample_counts: vec![40],
            trials: 30,
            seed: 7,
        };
        let chains = vec![ChainSpec {
            label: "scm-kl-mm".into(),
            estimator: EstimatorConfig::default(),
            regularizer: RegularizerSpec::none(),
            objective: ObjectiveKind::Kl,
            solver: SolverChoice::Mm(MmConfig::default()),
        }];
        let rows = run_bench(&cfg, &chains).unwrap();
        assert_eq!(rows.len(), 2);
        let naive = rows.iter().find(|r| r.label == "naive").unwrap();
        let linked = rows.iter().find(|r| r.label == "scm-kl-mm").unwrap();
        assert!(
            linked.mean_rmse < naive.mean_rmse,
            "linked {} vs naive {}",
            linked.mean_rmse,
            naive.mean_rmse
        );
        assert_eq!(linked.failures, 0);
    }

    #[test]
    fn bench_is_reproducible() {
        let cfg = BenchConfig {
            scene: SceneModel::exponential(4, 0.9).unwrap(),
            sample_counts: vec![16],
            trials: 5,
            seed: 3,
        };
        let chains = vec![ChainSpec {
            label: "ls".into(),
            estimator: EstimatorConfig::default(),
            regularizer: RegularizerSpec::none(),
            objective: ObjectiveKind::Ls,
            solver: SolverChoice::Mm(MmConfig::default()),
        }];
        let a = run_bench(&cfg, &chains).unwrap();
        let b = run_bench(&cfg, &chains).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.mean_rmse.to_bits(), y.mean_rmse.to_bits());
        }
    }

    #[test]
    fn table_formatting_is_stable() {
        let rows = vec![BenchRow {
            label: "naive".into(),
            n: 20,
            mean_rmse: 0.5,
            failures: 0,
        }];
        let table = format_table(&rows);
        assert!(table.contains("naive"));
        assert!(table.contains("mean rmse"));
    }
}
