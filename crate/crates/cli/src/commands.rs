//! The `muse` subcommands. Each reads one key=value config, writes its
//! artifacts under `out_path` and returns the summary it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use muse_core::checkpoint::{load_checkpoint, save_checkpoint};
use muse_core::dsm::{
    checkpoint_name, load_manifest, train, train_multiscale, Dataset, TrainConfig, TrainReport,
    DEFAULT_TOY_SAMPLES,
};
use muse_core::energy::{pairwise_lipschitz, EnergyModel, Model, ModelKind, ModelSpec, Prior};
use muse_core::gmm::{field_grid_export, score_cosine_similarity, write_field_csv, Bounds, GmmEnergy, GmmPrior};
use muse_core::io::{load_signal, save_signal, write_json, KeyValueConfig};
use muse_core::metrics::{peak_magnitude, psnr};
use muse_core::operators::{read_mask_csv, LinearOperator};
use muse_core::solvers::{
    algorithm_select, muse_solve, pnp_ista, solve, Algorithm, MapProblem, MuseSchedule,
    RunTrace, SolveConfig, Termination,
};
use muse_core::{MuseError, Rng, Signal};

use crate::denoise::{evaluate_denoiser, write_table_csv, DenoiseSettings, Denoiser};
use crate::error::{config_err, CliError, CliResult};
use crate::repro::find_claim;
use crate::summary::Summary;

/// Command-line values that replace config keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Loads a config and applies `--seed` / `--out`. A relative `--out` is
/// taken relative to the working directory, not the config file.
pub fn load_config(path: &Path, overrides: &Overrides) -> CliResult<KeyValueConfig> {
    let mut cfg = KeyValueConfig::load(path)?;
    if let Some(seed) = overrides.seed {
        cfg.set("seed", seed.to_string());
    }
    if let Some(out) = &overrides.out {
        let out = if out.is_relative() {
            std::env::current_dir()
                .map_err(|e| MuseError::io(".", e))?
                .join(out)
        } else {
            out.clone()
        };
        cfg.set("out_path", out.display().to_string());
    }
    Ok(cfg)
}

fn cfg_parse<T: std::str::FromStr>(cfg: &KeyValueConfig, key: &str, default: T) -> CliResult<T> {
    cfg.parse_or(key, default).map_err(config_err)
}

fn cfg_require<'a>(cfg: &'a KeyValueConfig, key: &str) -> CliResult<&'a str> {
    cfg.require(key).map_err(config_err)
}

fn cfg_path(cfg: &KeyValueConfig, key: &str) -> CliResult<PathBuf> {
    cfg_require(cfg, key)?;
    let path = cfg.path(key).expect("key present");
    Ok(path)
}

/// Required path that must already exist.
fn cfg_existing(cfg: &KeyValueConfig, key: &str) -> CliResult<PathBuf> {
    let path = cfg_path(cfg, key)?;
    if !path.exists() {
        return Err(CliError::Config(format!(
            "`{key}` points to {}, which does not exist",
            path.display()
        )));
    }
    Ok(path)
}

fn out_dir(cfg: &KeyValueConfig) -> CliResult<PathBuf> {
    let dir = cfg_path(cfg, "out_path")?;
    std::fs::create_dir_all(&dir).map_err(|e| MuseError::io(&dir, e))?;
    Ok(dir)
}

fn reject_unknown(cfg: &KeyValueConfig, allowed: &[&str]) -> CliResult<()> {
    cfg.reject_unknown(allowed).map_err(config_err)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

const TRAIN_KEYS: &[&str] = &[
    "variant",
    "sigma",
    "sigmas",
    "batch_size",
    "epochs",
    "learning_rate",
    "seed",
    "dataset",
    "data_path",
    "out_path",
    "spectral_norm_every",
    "hidden_width",
    "hidden_layers",
    "num_samples",
];

/// Samples named by `dataset` (`gmm-toy` or `signal-file`).
fn load_dataset(cfg: &KeyValueConfig, seed: u64) -> CliResult<Dataset> {
    match cfg.get("dataset").unwrap_or("gmm-toy") {
        "gmm-toy" => {
            let n = cfg_parse(cfg, "num_samples", DEFAULT_TOY_SAMPLES)?;
            Ok(Dataset::from_gmm(&GmmPrior::four_cluster_toy(), n, seed)?)
        }
        "signal-file" => {
            let path = cfg_existing(cfg, "data_path")?;
            Ok(Dataset::from_signal(&load_signal(&path)?, seed)?)
        }
        other => Err(CliError::Config(format!(
            "unknown dataset `{other}` (expected gmm-toy or signal-file)"
        ))),
    }
}

fn parse_kind(cfg: &KeyValueConfig) -> CliResult<ModelKind> {
    let name = cfg_require(cfg, "variant")?;
    ModelKind::parse(name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown variant `{name}` (expected e1, e2, e3, score-u or score-c)"
        ))
    })
}

/// `muse train`: one checkpoint for `sigma`, or a manifest of checkpoints
/// for a descending `sigmas` list.
pub fn cmd_train(cfg: &KeyValueConfig) -> CliResult<Summary> {
    reject_unknown(cfg, TRAIN_KEYS)?;
    let kind = parse_kind(cfg)?;
    let seed: u64 = cfg_parse(cfg, "seed", 0)?;
    let sigmas: Vec<f64> = match (cfg.get("sigma"), cfg.list::<f64>("sigmas").map_err(config_err)?) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("give either `sigma` or `sigmas`, not both".into()))
        }
        (Some(_), None) => vec![cfg.parse_required("sigma").map_err(config_err)?],
        (None, Some(list)) => list,
        (None, None) => return Err(CliError::Config("missing required key `sigma`".into())),
    };
    let base = TrainConfig {
        sigma: sigmas[0],
        batch_size: cfg_parse(cfg, "batch_size", 128)?,
        epochs: cfg_parse(cfg, "epochs", 30)?,
        learning_rate: cfg_parse(cfg, "learning_rate", 1e-3)?,
        seed,
        spectral_norm_every: cfg_parse(cfg, "spectral_norm_every", usize::from(kind.is_contractive()))?,
    };
    let spec = ModelSpec::new(
        kind,
        cfg_parse(cfg, "hidden_width", 128)?,
        cfg_parse(cfg, "hidden_layers", 4)?,
    );
    let configs: Vec<TrainConfig> = sigmas
        .iter()
        .map(|&sigma| TrainConfig { sigma, ..base.clone() })
        .collect();
    for c in &configs {
        c.validate().map_err(config_err)?;
    }
    let data = load_dataset(cfg, seed)?;
    let out = out_dir(cfg)?;
    let mut summary = Summary::new("train", cfg, seed);

    let result: Result<Vec<TrainReport>, muse_core::dsm::TrainFailure> = if cfg.get("sigmas").is_some() {
        train_multiscale(&spec, &configs, &data, &out)
            .map(|runs| runs.into_iter().map(|(_, r)| r).collect())
    } else {
        spec.init(data.dim(), base.sigma, seed)
            .map_err(Into::into)
            .and_then(|model| train(model, &base, &data))
            .and_then(|(model, mut report)| {
                let path = out.join(checkpoint_name(&spec, base.sigma));
                save_checkpoint(&model, &path)?;
                report.checkpoint_path = Some(path);
                Ok(vec![report])
            })
    };
    let reports = match result {
        Ok(r) => r,
        Err(failure) => {
            if let Some(partial) = &failure.report {
                write_json(&out.join("report.json"), &[partial])?;
            }
            return Err(failure.error.into());
        }
    };
    write_json(&out.join("report.json"), &reports)?;
    for r in &reports {
        let tag = format!("sigma{}", r.sigma);
        summary.metric(format!("{tag}.final_loss"), r.final_loss);
        summary.metric(
            format!("{tag}.validation_loss"),
            r.validation_losses.last().copied().unwrap_or(f64::NAN),
        );
        summary.metric(format!("{tag}.baseline_loss"), r.baseline_loss);
        summary.metric(format!("{tag}.steps"), r.steps);
        summary.metric(format!("{tag}.wall_time_s"), r.wall_time_s);
        if let Some(p) = &r.checkpoint_path {
            summary.outputs.push(file_name(p));
        }
    }
    if cfg.get("sigmas").is_some() {
        summary.outputs.push("manifest.json".into());
    }
    summary.outputs.push("report.json".into());
    summary.write(&out)?;
    Ok(summary)
}

const RECONSTRUCT_KEYS: &[&str] = &[
    "algorithm",
    "operator",
    "operator_path",
    "mask_path",
    "image_cols",
    "measurements",
    "ground_truth",
    "eta",
    "checkpoint",
    "manifest",
    "lipschitz",
    "epsilon",
    "max_iter",
    "backtracking",
    "step",
    "init",
    "iters",
    "seed",
    "out_path",
];

fn build_operator(cfg: &KeyValueConfig, b: &Signal) -> CliResult<LinearOperator> {
    match cfg.get("operator").unwrap_or("identity") {
        "identity" => Ok(LinearOperator::identity(b.shape(), b.channels())?),
        "dense" => Ok(LinearOperator::load_dense(&cfg_existing(cfg, "operator_path")?)?),
        "masked-dft" => {
            let mask = read_mask_csv(&cfg_existing(cfg, "mask_path")?)?;
            let cols: usize = cfg.parse_required("image_cols").map_err(config_err)?;
            Ok(LinearOperator::masked_dft(mask.len(), cols, mask)?)
        }
        other => Err(CliError::Config(format!(
            "unknown operator `{other}` (expected identity, dense or masked-dft)"
        ))),
    }
}

fn initial_point(cfg: &KeyValueConfig, op: &LinearOperator, b: &Signal, seed: u64) -> CliResult<Signal> {
    let d = op.domain();
    match cfg.get("init").unwrap_or("adjoint") {
        "adjoint" => Ok(op.adjoint(b)?),
        "zeros" => Ok(Signal::zeros(&d.shape, d.channels)?),
        "random" => Ok(Signal::new(
            Rng::new(seed).fork(1).normal_vec(d.len()),
            d.shape.clone(),
            d.channels,
        )?),
        _ => {
            let x = load_signal(&cfg_existing(cfg, "init")?)?;
            if x.len() != d.len() {
                return Err(CliError::Config("`init` signal does not match the operator domain".into()));
            }
            Ok(op.domain().reshape(x)?)
        }
    }
}

/// `lipschitz` = `pairwise` (default), `layer-product`, or a number.
fn lipschitz_for(cfg: &KeyValueConfig, model: &EnergyModel, anchor: &Signal) -> CliResult<f64> {
    match cfg.get("lipschitz").unwrap_or("pairwise") {
        "pairwise" => Ok(pairwise_lipschitz(
            model,
            std::slice::from_ref(anchor),
            model.sigma,
            &mut Rng::new(0x11f),
            512,
        )?),
        "layer-product" => Ok(model.layer_product_bound()),
        v => v
            .parse::<f64>()
            .ok()
            .filter(|l| *l > 0.0 && l.is_finite())
            .ok_or_else(|| CliError::Config(format!("invalid lipschitz `{v}`"))),
    }
}

fn load_energy(path: &Path) -> CliResult<EnergyModel> {
    match load_checkpoint(path)? {
        Model::Energy(m) => Ok(m),
        Model::Score(_) => Err(CliError::Config(format!(
            "{} holds a score network; this algorithm needs an energy model",
            path.display()
        ))),
    }
}

fn write_trace(trace: &RunTrace, out: &Path, name: &str, summary: &mut Summary) -> CliResult<()> {
    trace.write_csv(&out.join(name))?;
    summary.outputs.push(name.to_string());
    Ok(())
}

/// `muse reconstruct`: GD, MM, automatic choice, MuSE over a manifest, or
/// PnP-ISTA with a contractive score network.
pub fn cmd_reconstruct(cfg: &KeyValueConfig) -> CliResult<Summary> {
    reject_unknown(cfg, RECONSTRUCT_KEYS)?;
    let algorithm = cfg.get("algorithm").unwrap_or("auto").to_string();
    if !matches!(algorithm.as_str(), "gd" | "mm" | "auto" | "muse" | "pnp-ista") {
        return Err(CliError::Config(format!(
            "unknown algorithm `{algorithm}` (expected gd, mm, auto, muse or pnp-ista)"
        )));
    }
    let seed: u64 = cfg_parse(cfg, "seed", 0)?;
    let eta: f64 = cfg.parse_required("eta").map_err(config_err)?;
    if !(eta > 0.0) {
        return Err(CliError::Config("`eta` must be positive".into()));
    }
    let b = load_signal(&cfg_existing(cfg, "measurements")?)?;
    let op = build_operator(cfg, &b)?;
    let b = op.range().reshape(b).map_err(config_err)?;
    let x0 = initial_point(cfg, &op, &b, seed)?;
    let truth = match cfg.get("ground_truth") {
        Some(_) => Some(op.domain().reshape(load_signal(&cfg_existing(cfg, "ground_truth")?)?)?),
        None => None,
    };
    let base = SolveConfig {
        epsilon: cfg_parse(cfg, "epsilon", 1e-5)?,
        max_iter: cfg_parse(cfg, "max_iter", 10_000)?,
        backtracking: cfg_parse(cfg, "backtracking", true)?,
        step_override: cfg.parse_opt("step").map_err(config_err)?,
        ..SolveConfig::default()
    };
    let out = out_dir(cfg)?;
    let mut summary = Summary::new("reconstruct", cfg, seed);
    let start = Instant::now();

    let (x, final_f, iterations) = match algorithm.as_str() {
        "muse" => {
            let entries = load_manifest(&cfg_existing(cfg, "manifest")?)?;
            let models: Vec<EnergyModel> = entries
                .iter()
                .map(|e| load_energy(&e.checkpoint_path))
                .collect::<CliResult<_>>()?;
            let scales: Vec<(f64, f64, &dyn Prior, f64)> = entries
                .iter()
                .zip(&models)
                .map(|(e, m)| Ok((e.sigma, base.epsilon, m as &dyn Prior, lipschitz_for(cfg, m, &x0)?)))
                .collect::<CliResult<_>>()?;
            let schedule = MuseSchedule::paired(scales, Some(eta))?;
            let (x, traces) = match muse_solve(&schedule, &op, &b, &base, &x0) {
                Ok(r) => r,
                Err(MuseError::Stage { stage, source }) if matches!(*source, MuseError::Diverged { .. }) => {
                    return Err(CliError::Diverged { stage })
                }
                Err(e) => return Err(e.into()),
            };
            for (i, t) in traces.iter().enumerate() {
                write_trace(t, &out, &format!("trace_stage{i}.csv"), &mut summary)?;
                summary.metric(format!("stage{i}.algorithm"), t.algorithm.name());
                summary.metric(format!("stage{i}.iterations"), t.iterations);
            }
            let last = traces.last().expect("non-empty schedule");
            summary.metric("stages", traces.len());
            let iters: usize = traces.iter().map(|t| t.iterations).sum();
            (x, last.final_objective(), iters)
        }
        "pnp-ista" => {
            let path = cfg_existing(cfg, "checkpoint")?;
            let Model::Score(net) = load_checkpoint(&path)? else {
                return Err(CliError::Config("pnp-ista needs a score network checkpoint".into()));
            };
            let iters = cfg.parse_opt("iters").map_err(config_err)?;
            let trace = pnp_ista(&op, &b, eta * eta, &net, iters, &x0).map_err(config_err)?;
            write_trace(&trace, &out, "trace.csv", &mut summary)?;
            if trace.termination == Termination::Diverged {
                summary.write(&out)?;
                return Err(CliError::Diverged { stage: 0 });
            }
            let iters = trace.iterations;
            (trace.final_iterate, None, iters)
        }
        name => {
            let model = load_energy(&cfg_existing(cfg, "checkpoint")?)?;
            let l = lipschitz_for(cfg, &model, &x0)?;
            let p = MapProblem::new(&op, &b, eta * eta, &model, model.sigma * model.sigma)?;
            let algorithm = match name {
                "gd" => Algorithm::Gd,
                "mm" => Algorithm::Mm,
                _ => algorithm_select(&p, l),
            };
            let trace = solve(&p, &SolveConfig { algorithm, lipschitz: l, ..base.clone() }, &x0)?;
            write_trace(&trace, &out, "trace.csv", &mut summary)?;
            summary.metric("algorithm", algorithm.name());
            summary.metric("lipschitz", l);
            summary.metric("termination", format!("{:?}", trace.termination));
            summary.metric("backtracks", trace.backtracks);
            if trace.termination == Termination::Diverged {
                summary.write(&out)?;
                return Err(CliError::Diverged { stage: 0 });
            }
            let f = trace.final_objective();
            let iters = trace.iterations;
            (trace.final_iterate, f, iters)
        }
    };
    save_signal(&x, &out.join("reconstruction.bin"))?;
    summary.outputs.push("reconstruction.bin".into());
    summary.outputs.push("reconstruction.json".into());
    if let Some(f) = final_f {
        summary.metric("final_f_map", f);
    }
    summary.metric("iterations", iterations);
    summary.metric("wall_time_s", start.elapsed().as_secs_f64());
    if let Some(t) = &truth {
        summary.metric("psnr", psnr(&x, t, peak_magnitude(t).max(f64::MIN_POSITIVE))?);
    }
    summary.write(&out)?;
    Ok(summary)
}

const DENOISE_KEYS: &[&str] = &[
    "checkpoints",
    "sigmas",
    "dataset",
    "data_path",
    "num_samples",
    "seed",
    "out_path",
    "lipschitz",
    "epsilon",
    "max_iter",
    "include_identity",
];

/// Held-out items: fresh toy samples, or the validation split of a signal
/// file.
fn held_out_items(cfg: &KeyValueConfig, seed: u64) -> CliResult<Vec<Signal>> {
    match cfg.get("dataset").unwrap_or("gmm-toy") {
        "gmm-toy" => {
            let n = cfg_parse(cfg, "num_samples", 500)?;
            Ok(GmmPrior::four_cluster_toy().sample(&mut Rng::new(seed).fork(50), n)?)
        }
        "signal-file" => {
            let data = Dataset::from_signal(&load_signal(&cfg_existing(cfg, "data_path")?)?, seed)?;
            data.validation
                .rows()
                .into_iter()
                .map(|r| Signal::from_vec(r.to_vec()).map_err(Into::into))
                .collect()
        }
        other => Err(CliError::Config(format!("unknown dataset `{other}`"))),
    }
}

/// Comma-separated paths resolved against the config directory.
fn path_list(cfg: &KeyValueConfig, key: &str) -> CliResult<Vec<PathBuf>> {
    let raw = cfg_require(cfg, key)?;
    let base = cfg.base_dir().map(Path::to_path_buf);
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let p = PathBuf::from(s);
            let p = match &base {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p,
            };
            if p.exists() {
                Ok(p)
            } else {
                Err(CliError::Config(format!("`{key}` entry {} does not exist", p.display())))
            }
        })
        .collect()
}

/// `muse denoise-eval`: PSNR table over a held-out set per model and noise
/// level.
pub fn cmd_denoise_eval(cfg: &KeyValueConfig) -> CliResult<Summary> {
    reject_unknown(cfg, DENOISE_KEYS)?;
    let seed: u64 = cfg_parse(cfg, "seed", 0)?;
    let sigmas = cfg.list::<f64>("sigmas").map_err(config_err)?.unwrap_or(vec![0.01, 0.05]);
    let paths = path_list(cfg, "checkpoints")?;
    let items = held_out_items(cfg, seed)?;
    let settings = DenoiseSettings {
        lipschitz: cfg.parse_opt("lipschitz").map_err(config_err)?,
        epsilon: cfg_parse(cfg, "epsilon", 1e-6)?,
        max_iter: cfg_parse(cfg, "max_iter", 5000)?,
        ..DenoiseSettings::default()
    };
    let out = out_dir(cfg)?;
    let mut summary = Summary::new("denoise-eval", cfg, seed);
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut denoisers: Vec<(String, Option<f64>, Denoiser)> = Vec::new();
    if cfg_parse(cfg, "include_identity", true)? {
        denoisers.push(("identity".into(), None, Denoiser::Identity));
    }
    for p in &paths {
        let model = load_checkpoint(p)?;
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let trained = model.sigma();
        denoisers.push((name, Some(trained), Denoiser::from_model(model, &items, &settings)?));
    }
    for &sigma in &sigmas {
        for (name, trained, den) in &denoisers {
            if let Some(t) = trained {
                if (t - sigma).abs() > 1e-12 {
                    warnings.push(format!("{name} was trained at sigma {t}, evaluated at {sigma}"));
                }
            }
            let row = evaluate_denoiser(name, den, &items, sigma, seed, &settings)?;
            summary.metric(format!("{name}.sigma{sigma}.psnr_mean"), row.psnr_mean);
            summary.metric(format!("{name}.sigma{sigma}.psnr_std"), row.psnr_std);
            rows.push(row);
        }
    }
    write_table_csv(&rows, &out.join("denoise.csv"))?;
    summary.outputs.push("denoise.csv".into());
    summary.metric("warnings", warnings);
    summary.write(&out)?;
    Ok(summary)
}

const FIELD_KEYS: &[&str] = &[
    "manifest",
    "out_path",
    "resolution",
    "half_width",
    "density_fraction",
    "seed",
];

/// `muse field-export`: energy and score grids (divided by `σ²`) for every
/// manifest checkpoint and the matching oracle, plus cosine similarities.
pub fn cmd_field_export(cfg: &KeyValueConfig) -> CliResult<Summary> {
    reject_unknown(cfg, FIELD_KEYS)?;
    let seed: u64 = cfg_parse(cfg, "seed", 0)?;
    let entries = load_manifest(&cfg_existing(cfg, "manifest")?)?;
    let resolution: usize = cfg_parse(cfg, "resolution", 100)?;
    let bounds = Bounds::square(cfg_parse(cfg, "half_width", 2.0)?);
    let fraction: f64 = cfg_parse(cfg, "density_fraction", 0.01)?;
    let out = out_dir(cfg)?;
    let mut summary = Summary::new("field-export", cfg, seed);
    let mut cosines = serde_json::Map::new();
    for e in &entries {
        let model = load_checkpoint(&e.checkpoint_path)?;
        if model.net().input_dim() != 2 {
            return Err(CliError::Config(format!(
                "{} is not a 2-D model",
                e.checkpoint_path.display()
            )));
        }
        let oracle = GmmEnergy::new(GmmPrior::four_cluster_toy(), e.sigma)?;
        let name = format!("{}_sigma{}.csv", model.kind().name(), e.sigma);
        write_field_csv(
            &field_grid_export(model.as_field(), bounds, resolution, e.sigma)?,
            &out.join(&name),
        )?;
        let oracle_name = format!("oracle_sigma{}.csv", e.sigma);
        write_field_csv(
            &field_grid_export(&oracle, bounds, resolution, e.sigma)?,
            &out.join(&oracle_name),
        )?;
        let cos = score_cosine_similarity(model.as_field(), &oracle, bounds, resolution, fraction)?;
        cosines.insert(format!("{}", e.sigma), cos.into());
        summary.metric(format!("sigma{}.cosine", e.sigma), cos);
        summary.outputs.push(name);
        summary.outputs.push(oracle_name);
    }
    write_json(&out.join("report.json"), &serde_json::json!({ "cosine_similarity": cosines }))?;
    summary.outputs.push("report.json".into());
    summary.write(&out)?;
    Ok(summary)
}

const REPRO_KEYS: &[&str] = &["claim", "seed", "out_path"];

/// `muse repro`: runs one acceptance claim and records its metrics. The
/// verdict is a metric (`passed`), not an exit status.
pub fn cmd_repro(cfg: &KeyValueConfig) -> CliResult<Summary> {
    reject_unknown(cfg, REPRO_KEYS)?;
    let seed: u64 = cfg_parse(cfg, "seed", 0)?;
    let key = cfg_require(cfg, "claim")?;
    let (_, _, run) = find_claim(key).ok_or_else(|| CliError::Config(format!("unknown claim `{key}`")))?;
    let report = run(seed)?;
    let mut summary = Summary::new("repro", cfg, seed);
    summary.metric("claim", report.name.clone());
    summary.metric("passed", f64::from(u8::from(report.passed)));
    for (k, v) in &report.metrics {
        summary.metric(k.clone(), *v);
    }
    if cfg.get("out_path").is_some() {
        let out = out_dir(cfg)?;
        write_json(&out.join("claim.json"), &report)?;
        summary.outputs.push("claim.json".into());
        summary.write(&out)?;
    }
    Ok(summary)
}

/// Dispatches a config-driven command by name.
pub fn run_command(command: &str, cfg: &KeyValueConfig) -> CliResult<Summary> {
    match command {
        "train" => cmd_train(cfg),
        "reconstruct" => cmd_reconstruct(cfg),
        "denoise-eval" => cmd_denoise_eval(cfg),
        "field-export" => cmd_field_export(cfg),
        "repro" => cmd_repro(cfg),
        other => Err(CliError::Config(format!("unknown command `{other}`"))),
    }
}
