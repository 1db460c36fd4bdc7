//! Subcommand implementations. Each writes its machine-readable output to
//! `out` (or to the `--json` path) and returns an error for exit code 1.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use knoblab::autodiff::finite_diff_check;
use knoblab::autodiff::suite::{check_primitive, sample_case, PRIMITIVE_KINDS};
use knoblab::autodiff::OptimizerKind;
use knoblab::explain::{counterfactual, forward_sweep, CounterfactualConfig, ExplainError, Objective, API_VERSION};
use knoblab::persist::{export_image, load_model, read_manifest, save_model, write_manifest, ImageFormat};
use knoblab::regressor::{evaluate, train, RegressorModel, TrainConfig};
use knoblab::world::{DatasetConfig, DatasetManifest, Split};
use knoblab::{render_edit, rng, AttributeVector, NormOrder};

use crate::cli::*;
use crate::output::{to_json, GradcheckSummary, Prediction, TrainSummary};

const GRADCHECK_TOLERANCE: f64 = 1e-3;
const GRADCHECK_EPS: f64 = 1e-5;

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::SynthData(a) => synth_data(&a, out),
        Command::Train(a) => train_model(&a, out),
        Command::Predict(a) => predict(&a, out),
        Command::Render(a) => render(&a, out),
        Command::Sweep(a) => sweep(&a, out),
        Command::Counterfactual(a) => run_counterfactual(&a, out),
        Command::Gradcheck(a) => gradcheck(&a, out),
        Command::Serve(a) => crate::service::serve_blocking(&a),
    }
}

fn emit(json: String, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, &json).with_context(|| format!("writing {}", p.display())),
        None => writeln!(out, "{json}").context("writing stdout"),
    }
}

pub fn manifest_path(dir: &Path) -> std::path::PathBuf {
    dir.join(MANIFEST_FILE)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = manifest_path(dir);
    read_manifest(&path).with_context(|| format!("reading manifest {}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<RegressorModel> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn synth_data(a: &SynthDataArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = DatasetConfig {
        tiles_per_lot: a.tiles,
        jitter: a.jitter,
        noise_sd: a.noise_sd,
        master_seed: a.seed,
    };
    let manifest = DatasetManifest::generate(a.lots, &cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let path = manifest_path(&a.out);
    write_manifest(&manifest, &path)?;
    writeln!(
        out,
        "wrote {} ({} lots, {} samples, {} validation)",
        path.display(),
        manifest.lots.len(),
        manifest.samples.len(),
        manifest.split(Split::Val).count()
    )?;
    Ok(())
}

fn train_model(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = load_manifest(&a.data)?;
    let optimizer = match a.optimizer {
        OptimizerChoice::Adam => OptimizerKind::adam(a.lr),
        OptimizerChoice::Sgd => OptimizerKind::Sgd { lr: a.lr },
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        optimizer,
        seed: a.seed,
        ..Default::default()
    };
    let start = Instant::now();
    let init = RegressorModel::init(a.resolution, a.seed)?;
    let outcome = match train(&init, &manifest, &cfg) {
        Ok(o) => o,
        Err(e) => {
            if let Some(good) = e.last_good() {
                let rescue = a.out.with_extension("last-good.knob");
                save_model(good, &rescue)?;
                eprintln!("saved last good epoch to {}", rescue.display());
            }
            return Err(e.into());
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    save_model(&outcome.model, &a.out)?;
    let val = evaluate(&outcome.model, &manifest, Split::Val)?;
    let summary = TrainSummary {
        api_version: API_VERSION,
        samples: manifest.samples.len(),
        resolution: a.resolution,
        label_range: outcome.model.label_range(),
        history: outcome.history,
        val_rmse: val.rmse,
        val_mae: val.mae,
        seconds,
    };
    if let Some(p) = &a.json {
        emit(to_json(&summary), Some(p), out)?;
    }
    for m in &summary.history {
        writeln!(out, "epoch {:>2}  train RMSE {:.3}  val RMSE {:.3}", m.epoch, m.train_rmse, m.val_rmse)?;
    }
    writeln!(out, "saved {} in {:.1}s", a.out.display(), seconds)?;
    Ok(())
}

fn predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let image = render_edit(a.tile.seed, &a.tile.attrs, model.resolution())?;
    let stress = model.predict(&image)?;
    emit(to_json(&Prediction::new(a.tile.seed, a.tile.attrs, stress)), None, out)
}

fn render(a: &RenderArgs, out: &mut dyn Write) -> Result<()> {
    let Some(format) = ImageFormat::from_path(&a.out) else {
        bail!("cannot infer image format from {}; use .pgm or .png", a.out.display());
    };
    let image = render_edit(a.tile.seed, &a.tile.attrs, a.resolution)?;
    export_image(&image, &a.out, format)?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(())
}

fn sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let result = forward_sweep(&model, a.tile.seed, &a.tile.attrs, a.index, &a.grid.0)?;
    emit(to_json(&result), a.json.as_deref(), out)
}

pub fn counterfactual_config(a: &CounterfactualArgs) -> CounterfactualConfig {
    CounterfactualConfig {
        lambda: a.lambda,
        norm_order: match a.norm {
            NormChoice::L1 => NormOrder::L1,
            NormChoice::L2 => NormOrder::L2,
        },
        step_size: a.step_size,
        max_iters: a.max_iters,
        tolerance: a.tolerance,
        backtracking: true,
    }
}

fn run_counterfactual(a: &CounterfactualArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let report = counterfactual(&model, a.tile.seed, &a.tile.attrs, a.target, &counterfactual_config(a))?;
    emit(to_json(&report), a.json.as_deref(), out)
}

pub fn gradcheck_summary(model: &RegressorModel, cases: usize, seed: u64) -> Result<GradcheckSummary> {
    let mut prim_worst = 0.0f64;
    for kind in 0..PRIMITIVE_KINDS {
        for c in 0..cases as u64 {
            let (prim, inputs) = sample_case(kind, rng::derive_key(seed, &[kind as u64, c]));
            let r = check_primitive(&prim, &inputs, c, GRADCHECK_EPS)
                .with_context(|| format!("checking {}", prim.name()))?;
            prim_worst = prim_worst.max(r.max_rel_error);
        }
    }
    let (lo, hi) = model.label_range();
    let mut obj_worst = 0.0f64;
    for c in 0..cases as u64 {
        let k = rng::derive_key(seed, &[0x0B, c]);
        let draw = |slot: u64| rng::draw_range(k, slot, 0.1, 0.9);
        let base = AttributeVector::from_array([draw(1), draw(2), draw(3), draw(4)])?;
        let probe = [draw(5), draw(6), draw(7), draw(8)];
        let cfg = CounterfactualConfig {
            lambda: rng::draw_range(k, 9, 0.1, 10.0),
            norm_order: if c % 2 == 0 { NormOrder::L2 } else { NormOrder::L1 },
            ..Default::default()
        };
        let objective = Objective::new(model, rng::draw_u64(k, 0), &base, rng::draw_range(k, 10, lo, hi), &cfg)?;
        let r = finite_diff_check(
            |x: &[f64]| -> Result<(f64, Vec<f64>), ExplainError> {
                let v = objective.evaluate(&AttributeVector::from_slice(x)?)?;
                Ok((v.value, v.gradient.to_vec()))
            },
            &probe,
            GRADCHECK_EPS,
        )?;
        obj_worst = obj_worst.max(r.max_rel_error);
    }
    let worst = prim_worst.max(obj_worst);
    Ok(GradcheckSummary {
        api_version: API_VERSION,
        cases_per_primitive: cases,
        objective_cases: cases,
        primitive_max_rel_error: prim_worst,
        objective_max_rel_error: obj_worst,
        max_rel_error: worst,
        tolerance: GRADCHECK_TOLERANCE,
        passed: worst < GRADCHECK_TOLERANCE,
    })
}

fn gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    if a.cases == 0 {
        bail!("--cases must be at least 1");
    }
    let model = match &a.model {
        Some(p) => load_checkpoint(p)?,
        None => RegressorModel::init(32, a.seed)?,
    };
    let summary = gradcheck_summary(&model, a.cases, a.seed)?;
    emit(to_json(&summary), None, out)?;
    writeln!(out, "max relative error {:.3e}", summary.max_rel_error)?;
    if !summary.passed {
        bail!(
            "gradient check failed: max relative error {:.3e} exceeds {:.0e}",
            summary.max_rel_error,
            GRADCHECK_TOLERANCE
        );
    }
    Ok(())
}
