//! End-to-end runs built from a [`RunConfig`]: simulate, reconstruct,
//! Tikhonov baseline, evaluation and the regularization ablation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::denoiser::DenoiserHandle;
use crate::error::{Error, Result};
use crate::field::NeuralField;
use crate::io::quantize_params;
use crate::optics::{build_tf_stack, MeasurementSet, OpticalSetup};
use crate::reconstruction::{
    blockwise_adam_train, partition_blocks, AblationVariant, LogEntry, LossWeights, TrainState,
};
use crate::simulate::{make_phantom, simulate_measurements};
use crate::tikhonov::{tau_sweep, tikhonov_cg, TikhonovSolver, TikhonovSystem};
use crate::volume::{mae, mse, permittivity_to_ri, psnr, PermittivityVolume};

pub struct Simulation {
    pub setup: OpticalSetup,
    pub phantom: PermittivityVolume,
    pub measurements: MeasurementSet,
}

pub fn simulate_run(cfg: &RunConfig) -> Result<Simulation> {
    let setup = cfg.setup.build()?;
    let phantom = make_phantom(&cfg.phantom.spec(cfg.grid))?;
    let measurements = simulate_measurements(&phantom, &setup, cfg.convention, &cfg.noise)?;
    Ok(Simulation {
        setup,
        phantom,
        measurements,
    })
}

pub struct Reconstruction {
    pub state: TrainState,
    /// Field rendered on the training grid from its `f32`-rounded weights,
    /// i.e. exactly what a reload of the weight file renders.
    pub volume: PermittivityVolume,
}

impl Reconstruction {
    pub fn history(&self) -> &[LogEntry] {
        &self.state.history
    }
}

/// Trains a fresh field on `meas` with the given loss weights and denoiser.
pub fn reconstruct_run(
    cfg: &RunConfig,
    meas: &MeasurementSet,
    weights: &LossWeights,
    denoiser: &DenoiserHandle,
) -> Result<Reconstruction> {
    let setup = cfg.setup.build()?;
    let stack = build_tf_stack(&setup, &cfg.grid, cfg.convention)?;
    let partition = partition_blocks(&cfg.grid, cfg.partition.blocks, cfg.partition.padding, cfg.partition.margin)?;
    let field = NeuralField::new(&cfg.field)?;
    let state = TrainState::new(field, cfg.train.schedule, cfg.train.seed)?;
    let mut state = blockwise_adam_train(state, &cfg.grid, &partition, &stack, meas, weights, denoiser, &cfg.train)?;
    quantize_params(&mut state.field.mlp.params);
    let volume = state.field.render_grid(&cfg.grid)?;
    Ok(Reconstruction { state, volume })
}

/// Image-quality scores of the real RI contrast `n_re − n0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub psnr_db: f64,
    pub mse: f64,
    pub mae: f64,
}

pub fn evaluate(reference: &PermittivityVolume, estimate: &PermittivityVolume, n0: f64) -> Result<Evaluation> {
    estimate.check_grid(&reference.grid)?;
    let r = permittivity_to_ri(reference, n0)?.contrast();
    let e = permittivity_to_ri(estimate, n0)?.contrast();
    Ok(Evaluation {
        psnr_db: psnr(&r, &e)?,
        mse: mse(&r, &e)?,
        mae: mae(&r, &e)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TikhonovReport {
    pub tau: f64,
    /// `(τ, PSNR)` of the sweep, empty when τ was fixed.
    pub sweep: Vec<(f64, f64)>,
}

/// Tikhonov baseline. Uses the configured τ, or the sweep value with the
/// best PSNR against `reference`.
pub fn tikhonov_run(
    cfg: &RunConfig,
    meas: &MeasurementSet,
    reference: Option<&PermittivityVolume>,
) -> Result<(PermittivityVolume, TikhonovReport)> {
    let setup = cfg.setup.build()?;
    let stack = build_tf_stack(&setup, &cfg.grid, cfg.convention)?;
    let tc = &cfg.tikhonov;
    let solve = |tau: f64| match tc.solver {
        TikhonovSolver::Direct => TikhonovSystem::new(&stack, meas)?.solve(tau),
        TikhonovSolver::Cg => tikhonov_cg(&stack, meas, tau, tc.cg_tol, tc.cg_maxiter),
    };
    match (tc.tau, reference) {
        (Some(tau), _) => Ok((solve(tau)?, TikhonovReport { tau, sweep: vec![] })),
        (None, Some(reference)) => {
            let system = TikhonovSystem::new(&stack, meas)?;
            let sweep = tau_sweep(&system, &tc.taus, |v| Ok(evaluate(reference, v, setup.n0)?.psnr_db))?;
            let vol = if tc.solver == TikhonovSolver::Cg {
                solve(sweep.best_tau)?
            } else {
                sweep.best
            };
            Ok((
                vol,
                TikhonovReport {
                    tau: sweep.best_tau,
                    sweep: sweep.scores,
                },
            ))
        }
        (None, None) => Err(Error::Config(
            "tikhonov needs either a fixed tau or a reference volume for the sweep".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub alpha: f64,
    pub beta: f64,
    #[serde(flatten)]
    pub eval: Evaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub tikhonov_tau: f64,
    pub tikhonov: Evaluation,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: AblationVariant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// Plain-text table, one line per method.
    pub fn table(&self) -> String {
        let mut s = format!("{:<10} {:>9} {:>12} {:>12}\n", "method", "PSNR(dB)", "MSE", "MAE");
        let mut line = |name: &str, e: &Evaluation| {
            s.push_str(&format!("{:<10} {:>9.3} {:>12.4e} {:>12.4e}\n", name, e.psnr_db, e.mse, e.mae));
        };
        line("Tikhonov", &self.tikhonov);
        for r in &self.rows {
            line(r.variant.name(), &r.eval);
        }
        s
    }
}

/// Trains every variant from the same initialization, plus the Tikhonov
/// baseline, and scores them against `reference`. `on_row` sees each
/// variant as soon as it finishes.
pub fn ablate_run(
    cfg: &RunConfig,
    meas: &MeasurementSet,
    reference: &PermittivityVolume,
    base: &Path,
    variants: &[AblationVariant],
    mut on_row: impl FnMut(&AblationRow, &Reconstruction),
) -> Result<AblationReport> {
    let n0 = cfg.setup.build()?.n0;
    let (tik, report) = tikhonov_run(cfg, meas, Some(reference))?;
    let tikhonov = evaluate(reference, &tik, n0)?;
    let denoiser = cfg.denoiser.build(base)?;
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let weights = variant.apply(cfg.loss);
        let rec = reconstruct_run(cfg, meas, &weights, &denoiser)?;
        let row = AblationRow {
            variant,
            alpha: weights.alpha,
            beta: weights.beta,
            eval: evaluate(reference, &rec.volume, n0)?,
        };
        on_row(&row, &rec);
        rows.push(row);
    }
    Ok(AblationReport {
        tikhonov_tau: report.tau,
        tikhonov,
        rows,
    })
}
