use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gmf::data::trial::{parse_kinematics, read_subjects, read_trial};
use gmf::data::{import_corpus, load_dataset, synth_corpus, Dataset, ImportMap, PipelineConfig, SplitSpec, SynthConfig, TrialRecord};
use gmf::eval::{bench_latency, evaluate, export_gait_curves, markers_from_period, targets_for, BenchConfig};
use gmf::model::{load_checkpoint, load_sidecar, save_checkpoint, Architecture, BodyParams, GmfModel, KinematicWindow, Model, ModelFamily, Normalization, WINDOW_LEN};
use gmf::train::{train_repetitions, TrainConfig, TrainData};
use serde_json::json;

use crate::{BenchArgs, CurvesArgs, EvalArgs, ImportArgs, InferArgs, SynthArgs, TrainArgs};

pub fn synth_data(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_subjects: a.subjects,
        speeds: a.speeds,
        duration_s: a.duration,
        sample_rate_hz: a.sample_rate,
        angle_noise_std: a.noise,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let (trials, subjects) = synth_corpus(&cfg)?;
    Dataset::write_raw(&a.out, &trials, &subjects)?;
    let meta = a.out.join("synth.json");
    std::fs::write(&meta, serde_json::to_string_pretty(&cfg)? + "\n").with_context(|| format!("writing {}", meta.display()))?;
    log::info!("wrote {} trials of {} subjects to {} (seed {})", trials.len(), subjects.len(), a.out.display(), a.seed);
    Ok(())
}

pub fn import(a: ImportArgs) -> Result<()> {
    let map = ImportMap::read(&a.map)?;
    let (trials, subjects) = import_corpus(&a.raw, &map)?;
    Dataset::write_raw(&a.out, &trials, &subjects)?;
    log::info!("imported {} trials of {} subjects into {}", trials.len(), subjects.len(), a.out.display());
    Ok(())
}

fn effective_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::read(p)?,
        None => TrainConfig::default(),
    };
    if let Some(m) = &a.mode {
        cfg.mode = m.parse()?;
    }
    if let Some(b) = &a.backbone {
        cfg.backbone = b.parse()?;
    }
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = a.$field.clone() { cfg.$field = v; })*};
    }
    set!(epochs, batch_size, lr, repetitions, train_stride, val_stride, seed);
    if a.patience.is_some() {
        cfg.patience = a.patience;
    }
    if a.pretrained.is_some() {
        cfg.pretrained = a.pretrained.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `model.gmf` for a single run, `model.r<i>.gmf` otherwise.
fn run_path(out: &Path, run: usize, runs: usize) -> PathBuf {
    if runs == 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.r{run}.{}", ext.to_string_lossy()),
        None => format!("{stem}.r{run}"),
    };
    out.with_file_name(name)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = effective_config(&a)?;
    let data = load_dataset(&a.data, &cfg.pipeline)?;
    let spec = SplitSpec::read(&a.split)?;
    let split = data.split(&spec)?;
    let td = TrainData::from_split(&data, &split, cfg.train_stride, cfg.val_stride)?;
    let pretrained = match &cfg.pretrained {
        None => None,
        Some(p) => match load_checkpoint(p)? {
            Model::Gmf(g) => Some(g),
            Model::Baseline(_) => bail!("pretrained checkpoint {} is a baseline, not a GMF model", p.display()),
        },
    };
    log::info!(
        "training {:?} with a {} estimator: {} train / {} validation windows, seed {}",
        cfg.mode,
        cfg.backbone,
        td.train.len(),
        td.validation.len(),
        cfg.seed
    );
    let runs = train_repetitions(&td, &cfg, pretrained.as_ref())?;
    for (i, (model, log)) in runs.iter().enumerate() {
        let path = run_path(&a.out, i, runs.len());
        let meta = json!({
            "seed": cfg.seed.wrapping_add(i as u64),
            "repetition": i,
            "mode": cfg.mode,
            "epochs_run": log.len(),
            "best_epoch": log.best_epoch,
            "best_val_rmse": log.best_val_rmse,
            "config": cfg,
            "pipeline": cfg.pipeline,
        });
        save_checkpoint(&path, model, meta)?;
        let log_path = path.with_extension("log.csv");
        std::fs::write(&log_path, log.to_csv(a.log_timing)).with_context(|| format!("writing {}", log_path.display()))?;
        log::info!(
            "run {i}: best validation RMSE {:.5} at epoch {:?}, wrote {}",
            log.best_val_rmse.unwrap_or(f64::NAN),
            log.best_epoch,
            path.display()
        );
    }
    Ok(())
}

/// Pipeline settings recorded at training time, or the defaults.
fn pipeline_of(ckpt: &Path) -> PipelineConfig {
    load_sidecar(ckpt)
        .ok()
        .and_then(|s| serde_json::from_value(s.metadata.get("pipeline")?.clone()).ok())
        .unwrap_or_default()
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let models: Vec<Model> = a.model.iter().map(|p| load_checkpoint(p)).collect::<gmf::Result<_>>()?;
    let data = load_dataset(&a.data, &pipeline_of(&a.model[0]))?;
    let spec = SplitSpec::read(&a.split)?;
    let split = data.split(&spec)?;
    let report = evaluate(&models, &data, &split, a.stride)?;
    report.write(&a.out)?;
    log::info!(
        "{}: test RMSE {:.5} ± {:.5} Nm/kg over {} run(s), wrote {}",
        report.model,
        report.rmse_mean,
        report.rmse_std,
        report.repetitions,
        a.out.display()
    );
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let body: BodyParams = a.q.parse()?;
    let mut models: Vec<Model> = a.models.iter().map(|p| load_checkpoint(p)).collect::<gmf::Result<_>>()?;
    for b in &a.backbones {
        let arch = Architecture::new(ModelFamily::Gmf, b.parse()?);
        models.push(GmfModel::init(arch, Normalization::identity(), a.seed)?.into());
    }
    if models.is_empty() {
        bail!("nothing to time: pass --models and/or --backbones");
    }
    let norm = *models[0].norm();
    let mut targets = targets_for(&models, body)?;
    let cfg = BenchConfig {
        rounds: a.rounds,
        per_round: a.per_round,
        warmup: a.warmup,
        seed: a.seed,
    };
    let report = bench_latency(&mut targets, &cfg, &norm)?;
    report.write_csv(&a.out)?;
    for r in report.rows.iter().filter(|r| r.stage == "total") {
        log::info!("{}: {:.4} ± {:.4} ms per estimation", r.backbone, r.mean_ms, r.std_ms);
    }
    Ok(())
}

fn frames_of(path: &Path, rate: f64, pipeline: &PipelineConfig) -> Result<TrialRecord> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw = parse_kinematics(&text, path, rate)?;
    Ok(TrialRecord::process(raw, pipeline)?)
}

pub fn infer(a: InferArgs) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let body: BodyParams = a.q.parse()?;
    let trial = frames_of(&a.stream, a.sample_rate, &pipeline_of(&a.model))?;
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    writeln!(out, "time_s,moment_nm_per_kg")?;
    let mut emitted = 0usize;
    match &model {
        Model::Gmf(g) if g.arch().backbone == gmf::model::BackboneKind::Gru => {
            let mut stream = g.stream()?;
            for (i, f) in trial.frames.iter().enumerate() {
                let y = stream.push_moment(f, &body)?;
                if i + 1 >= WINDOW_LEN {
                    writeln!(out, "{},{}", trial.raw.time[i], y)?;
                    emitted += 1;
                }
            }
        }
        _ => {
            for end in WINDOW_LEN - 1..trial.len() {
                let w = KinematicWindow::new(&trial.frames[end + 1 - WINDOW_LEN..=end])?;
                writeln!(out, "{},{}", trial.raw.time[end], model.predict(w, &body)?)?;
                emitted += 1;
            }
        }
    }
    out.flush()?;
    eprintln!(
        "note: the first {} frames are warm-up and produce no prediction; {} rows read, {} predictions written",
        WINDOW_LEN - 1,
        trial.len(),
        emitted
    );
    Ok(())
}

pub fn export_curves(a: CurvesArgs) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let raw = read_trial(&a.trial, a.sample_rate)?;
    let body: BodyParams = match (&a.q, &a.subjects) {
        (Some(q), _) => q.parse()?,
        (None, Some(p)) => {
            let subjects = read_subjects(p)?;
            subjects
                .get(&raw.subject_id)
                .with_context(|| format!("subject {} is not listed in {}", raw.subject_id, p.display()))?
                .body
        }
        (None, None) => bail!("pass --q or --subjects to supply body parameters"),
    };
    let trial = TrialRecord::process(raw, &pipeline_of(&a.model))?;
    let markers = if !trial.raw.heel_strikes.is_empty() {
        trial.raw.heel_strikes.clone()
    } else if let Some(period) = a.period {
        markers_from_period(trial.len(), trial.sample_rate(), period)?
    } else {
        bail!("{} has no heel_strikes line; pass --period to place cycle markers", a.trial.display());
    };
    let rows = export_gait_curves(&model, &trial, &body, &markers)?;
    gmf::eval::curves::write_curves(&a.out, &rows)?;
    log::info!("wrote {} cycles to {}", rows.len() / gmf::eval::curves::PHASE_POINTS, a.out.display());
    Ok(())
}
