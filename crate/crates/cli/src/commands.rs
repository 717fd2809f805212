use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use alternator::checkpoint::{load_checkpoint, Checkpoint};
use alternator::config::{RunConfig, CONFIG_KEYS};
use alternator::data::{generate_noisy_sine, load_csv, metrics, preset_by_name, write_csv, SequenceBatch};
use alternator::generation::{decode, forecast, impute, sample, ForecastTask, ImputationTask};
use alternator::ndmath::Matrix;
use alternator::training::{history_csv, train, TrainMode};
use alternator::vendi::{diversity_profile, median_bandwidth, Kernel, VendiConfig};
use alternator::Error;
use log::{info, warn};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::{entropy_seed, resolve_output, sidecar, write_atomic, RunManifest};
use crate::{
    CliError, Command, EvalArgs, KernelArg, SampleArgs, SynthArgs, Task, TrainArgs, VendiArgs,
};

pub const DEFAULT_MISSING_RATES: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 0.95];

/// CSV files carry no time base; commands that need one use unit steps.
const CSV_DT: f64 = 1.0;

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Replay(args) => {
            let m = RunManifest::load(&args.manifest)?;
            if matches!(m.invocation, Command::Replay(_)) {
                return Err(CliError::Usage("a manifest cannot replay another replay".into()));
            }
            std::env::set_current_dir(&m.cwd).map_err(|e| {
                CliError::Runtime(format!("cannot enter recorded directory {}: {e}", m.cwd.display()))
            })?;
            info!("replaying run from {}", args.manifest.display());
            let sources = m.config_sources.clone();
            execute(m.invocation, Some(sources))
        }
        mut other => {
            resolve_outputs(&mut other)?;
            execute(other, None)
        }
    }
}

fn resolve_outputs(cmd: &mut Command) -> Result<(), CliError> {
    let fix = |p: &mut PathBuf| -> Result<(), CliError> {
        let r = resolve_output(p);
        *p = if r == *p { r } else { std::path::absolute(r)? };
        Ok(())
    };
    match cmd {
        Command::Train(a) => fix(&mut a.out),
        Command::Eval(a) => {
            fix(&mut a.out)?;
            a.pred_out.as_mut().map_or(Ok(()), fix)
        }
        Command::Synth(a) => fix(&mut a.out),
        Command::Vendi(a) => fix(&mut a.out),
        Command::Sample(a) => fix(&mut a.out),
        Command::Replay(_) => Ok(()),
    }
}

/// `recorded` carries the config provenance of a replayed run, so the
/// rewritten manifest keeps reporting where each value first came from.
fn execute(cmd: Command, recorded: Option<BTreeMap<String, String>>) -> Result<(), CliError> {
    match cmd {
        Command::Train(a) => cmd_train(a, recorded),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Vendi(a) => cmd_vendi(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Replay(_) => unreachable!("replay is handled by run"),
    }
}

fn seeded(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = entropy_seed();
        info!("no --seed given; using {s}");
        s
    })
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn batch_bytes(batch: &SequenceBatch) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_csv(batch, &mut buf)?;
    Ok(buf)
}

fn read_data(path: &Path) -> Result<SequenceBatch, CliError> {
    load_csv(path, CSV_DT).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<alternator::model::AlternatorParams, CliError> {
    load_checkpoint(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Config file values over defaults, with the origin of every key.
fn load_config(path: Option<&Path>) -> Result<(RunConfig, BTreeMap<String, String>), CliError> {
    let mut sources: BTreeMap<String, String> =
        CONFIG_KEYS.iter().map(|k| (k.to_string(), "default".to_string())).collect();
    let Some(path) = path else {
        return Ok((RunConfig::default(), sources));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = RunConfig::from_toml_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Ok(table) = text.parse::<toml::Table>() {
        for key in table.keys() {
            sources.insert(key.clone(), "config".to_string());
        }
    }
    Ok((cfg, sources))
}

fn cmd_train(
    mut args: TrainArgs,
    recorded: Option<BTreeMap<String, String>>,
) -> Result<(), CliError> {
    let (mut cfg, mut sources) = load_config(args.config.as_deref())?;
    let seed = match args.seed {
        Some(s) => {
            from_cli(&mut sources, "seed");
            s
        }
        None if sources["seed"] == "config" => cfg.train.seed,
        None => {
            sources.insert("seed".into(), "entropy".into());
            seeded(None)
        }
    };
    args.seed = Some(seed);
    cfg.train.seed = seed;
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
        from_cli(&mut sources, "epochs");
    }
    if let Some(p) = args.p_mask {
        cfg.train.p_mask = p;
        from_cli(&mut sources, "p_mask");
    }
    if args.no_adaptive_alpha {
        cfg.train.adaptive_alpha = false;
        from_cli(&mut sources, "adaptive_alpha");
    }
    if args.no_masking {
        cfg.train.masking = false;
        from_cli(&mut sources, "masking");
    }
    if args.features_in_data {
        cfg.train.mode = TrainMode::Supervised;
        from_cli(&mut sources, "mode");
    } else if sources.get("mode").map(String::as_str) != Some("config") {
        cfg.train.mode = TrainMode::Unsupervised;
        from_cli(&mut sources, "mode");
    }
    cfg.validate()?;
    if let Some(r) = recorded {
        sources = r;
    }

    let mut data = read_data(&args.data)?;
    if cfg.train.mode == TrainMode::Unsupervised {
        data.z = None;
    }
    info!(
        "training on {} sequences of {} steps ({:?}, adaptive gate {}, masking {})",
        data.n(),
        data.steps(),
        cfg.train.mode,
        cfg.train.adaptive_alpha,
        cfg.train.masking
    );

    let outcome = match train(&data, &cfg.train, &cfg.model) {
        Ok(o) => o,
        Err(Error::NonFiniteLoss { epoch, last_good }) => {
            write_atomic(&args.out, Checkpoint::new(*last_good).to_json()?.as_bytes())?;
            return Err(CliError::Runtime(format!(
                "non-finite loss at epoch {epoch}; last good parameters written to {}",
                args.out.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };

    let loss_path = sidecar(&args.out, "loss.csv");
    write_atomic(&args.out, Checkpoint::new(outcome.params).to_json()?.as_bytes())?;
    write_atomic(&loss_path, history_csv(&outcome.history).as_bytes())?;

    let out = args.out.clone();
    let mut m = RunManifest::new(Command::Train(args), seed)?;
    m.config = Some(cfg.to_toml_string());
    m.config_sources = sources;
    m.checkpoint = Some(out.clone());
    m.outputs = vec![out.clone(), loss_path];
    if let Some(last) = outcome.history.last() {
        m.metrics.insert("final_loss".into(), last.loss);
    }
    m.metrics.insert("epochs".into(), outcome.history.len() as f64);
    let path = m.write(&out)?;
    info!("wrote {} and {}", out.display(), path.display());
    Ok(())
}

fn from_cli(sources: &mut BTreeMap<String, String>, key: &str) {
    sources.insert(key.to_string(), "cli".to_string());
}

fn check_eval_flags(args: &EvalArgs) -> Result<(), CliError> {
    let mismatch = |flag: &str, task: &str| {
        Err(CliError::Usage(format!("--{flag} only applies to --task {task}")))
    };
    if args.missing_rate.is_some() && args.task != Task::Impute {
        return mismatch("missing-rate", "impute");
    }
    if args.horizon.is_some() && args.task != Task::Forecast {
        return mismatch("horizon", "forecast");
    }
    if args.context.is_some() && args.task != Task::Forecast {
        return mismatch("context", "forecast");
    }
    if args.pred_out.is_some() && args.task == Task::Impute {
        return Err(CliError::Usage("--pred-out applies to decode and forecast".into()));
    }
    if let Some(rates) = &args.missing_rate {
        if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(CliError::Usage(format!("missing rate {r} outside [0, 1]")));
        }
    }
    Ok(())
}

fn put(rows: &mut Vec<(String, f64)>, prefix: &str, m: &alternator::data::Metrics) {
    rows.push((format!("{prefix}.mae"), m.mae));
    rows.push((format!("{prefix}.mse"), m.mse));
    rows.push((format!("{prefix}.cc"), m.cc));
}

fn cmd_eval(mut args: EvalArgs) -> Result<(), CliError> {
    check_eval_flags(&args)?;
    let seed = seeded(args.seed);
    args.seed = Some(seed);
    let params = read_model(&args.model)?;
    let data = read_data(&args.data)?;
    let mut rows: Vec<(String, f64)> = Vec::new();
    let mut preds: Option<SequenceBatch> = None;

    match args.task {
        Task::Decode => {
            let truth = data.z.as_ref().ok_or_else(|| {
                CliError::Runtime("decode needs feature columns (z0..) in the data".into())
            })?;
            let z = decode(&params, &data.x)?;
            put(&mut rows, "decode", &metrics(&z, truth)?);
            preds = Some(SequenceBatch::new(data.x.clone(), Some(z), data.dt)?);
        }
        Task::Impute => {
            let rates = args.missing_rate.clone().unwrap_or(DEFAULT_MISSING_RATES.to_vec());
            for (i, &rate) in rates.iter().enumerate() {
                let task = ImputationTask::random(&data.x, rate, &mut rng_stream(seed, i as u64))?;
                let filled = impute(&params, &task)?;
                impute_rows(&mut rows, &task, &filled, &data.x)?;
            }
        }
        Task::Forecast => {
            let task = ForecastTask {
                context: args.context.unwrap_or(96),
                horizon: args.horizon.unwrap_or(96),
            };
            let (pred, locf, truth) = forecast_all(&params, &task, &data.x)?;
            put(&mut rows, "forecast", &metrics(&pred, &truth)?);
            let l = metrics(&locf, &truth)?;
            rows.push(("locf.mae".into(), l.mae));
            rows.push(("locf.mse".into(), l.mse));
            preds = Some(SequenceBatch::new(pred, None, data.dt)?);
        }
    }

    let mut csv = String::from("metric,value\n");
    for (k, v) in &rows {
        csv.push_str(&format!("{k},{v}\n"));
    }
    print!("{csv}");
    write_atomic(&args.out, csv.as_bytes())?;
    let mut outputs = vec![args.out.clone()];
    if let (Some(path), Some(batch)) = (&args.pred_out, &preds) {
        write_atomic(path, &batch_bytes(batch)?)?;
        outputs.push(path.clone());
    }

    let out = args.out.clone();
    let model = args.model.clone();
    let mut m = RunManifest::new(Command::Eval(args), seed)?;
    m.checkpoint = Some(model);
    m.outputs = outputs;
    m.metrics = rows.into_iter().collect();
    m.write(&out)?;
    Ok(())
}

/// Scores only the hidden steps, against the model and a per-column mean of
/// the observed steps.
fn impute_rows(
    rows: &mut Vec<(String, f64)>,
    task: &ImputationTask,
    filled: &[Matrix],
    truth: &[Matrix],
) -> Result<(), CliError> {
    let prefix = format!("impute[{}]", task.missing_rate);
    let dx = truth.first().map_or(0, Matrix::cols);
    let (mut pred, mut fill, mut real) = (Vec::new(), Vec::new(), Vec::new());
    for (i, x) in truth.iter().enumerate() {
        let seen: Vec<usize> = (0..x.rows()).filter(|&t| task.observed[i][t]).collect();
        let means: Vec<f64> = (0..dx)
            .map(|k| {
                let s: f64 = seen.iter().map(|&t| x.get(t, k)).sum();
                if seen.is_empty() { 0.0 } else { s / seen.len() as f64 }
            })
            .collect();
        for t in (0..x.rows()).filter(|&t| !task.observed[i][t]) {
            pred.extend_from_slice(filled[i].row(t));
            real.extend_from_slice(x.row(t));
            fill.extend_from_slice(&means);
        }
    }
    let missing = task.missing_count();
    rows.push((format!("{prefix}.missing"), missing as f64));
    if missing == 0 {
        rows.push((format!("{prefix}.mae"), 0.0));
        rows.push((format!("{prefix}.mse"), 0.0));
        return Ok(());
    }
    let as_mat = |v: Vec<f64>| Matrix::from_vec(v.len() / dx, dx, v);
    let real = vec![as_mat(real)?];
    put(rows, &prefix, &metrics(&[as_mat(pred)?], &real)?);
    let mf = metrics(&[as_mat(fill)?], &real)?;
    rows.push((format!("{prefix}.mean_fill_mse"), mf.mse));
    Ok(())
}

type ForecastSet = (Vec<Matrix>, Vec<Matrix>, Vec<Matrix>);

/// Forecasts the last `horizon` steps of each sequence from the steps
/// before them, alongside a last-value carry-forward baseline.
fn forecast_all(
    params: &alternator::model::AlternatorParams,
    task: &ForecastTask,
    x: &[Matrix],
) -> Result<ForecastSet, CliError> {
    let (mut pred, mut locf, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    for (i, seq) in x.iter().enumerate() {
        let t = seq.rows();
        if t <= task.horizon {
            return Err(CliError::Runtime(format!(
                "sequence {i} has {t} steps; forecasting {} needs at least one more",
                task.horizon
            )));
        }
        let ctx = seq.slice_rows(0, t - task.horizon);
        if ctx.rows() < task.context {
            warn!("sequence {i}: only {} context steps available", ctx.rows());
        }
        pred.push(forecast(params, task, &ctx)?);
        let last = ctx.row(ctx.rows() - 1).to_vec();
        let mut carry = Matrix::zeros(task.horizon, seq.cols());
        for h in 0..task.horizon {
            carry.row_mut(h).copy_from_slice(&last);
        }
        locf.push(carry);
        truth.push(seq.slice_rows(t - task.horizon, t));
    }
    Ok((pred, locf, truth))
}

fn cmd_synth(mut args: SynthArgs) -> Result<(), CliError> {
    let preset = preset_by_name(&args.preset)?;
    let seed = seeded(args.seed);
    args.seed = Some(seed);
    let batch = generate_noisy_sine(&preset, &mut ChaCha8Rng::seed_from_u64(seed))?;
    write_atomic(&args.out, &batch_bytes(&batch)?)?;
    let out = args.out.clone();
    let mut m = RunManifest::new(Command::Synth(args), seed)?;
    m.outputs = vec![out.clone()];
    m.write(&out)?;
    Ok(())
}

fn cmd_vendi(mut args: VendiArgs) -> Result<(), CliError> {
    let seed = seeded(args.seed);
    args.seed = Some(seed);
    let data = read_data(&args.data)?;
    let kernel = match args.kernel {
        KernelArg::LinearCosine => Kernel::LinearCosine,
        KernelArg::Rbf => Kernel::Rbf {
            bandwidth: match args.bandwidth {
                Some(h) => h,
                None => median_bandwidth(&data.x, args.window)?,
            },
        },
    };
    let cfg = VendiConfig {
        kernel,
        q: args.q,
        window: args.window,
    };
    let mut csv = String::from("seq,t,vs\n");
    for (i, seq) in data.x.iter().enumerate() {
        for (t, vs) in diversity_profile(seq, &cfg)?.iter().enumerate() {
            csv.push_str(&format!("{i},{t},{vs}\n"));
        }
    }
    write_atomic(&args.out, csv.as_bytes())?;
    let out = args.out.clone();
    let mut m = RunManifest::new(Command::Vendi(args), seed)?;
    m.outputs = vec![out.clone()];
    if let Kernel::Rbf { bandwidth } = kernel {
        m.metrics.insert("bandwidth".into(), bandwidth);
    }
    m.write(&out)?;
    Ok(())
}

fn cmd_sample(mut args: SampleArgs) -> Result<(), CliError> {
    let seed = seeded(args.seed);
    args.seed = Some(seed);
    let params = read_model(&args.model)?;
    let (mut xs, mut zs) = (Vec::new(), Vec::new());
    for i in 0..args.count {
        if args.steps == 0 {
            xs.push(Matrix::zeros(0, params.obs_dim));
            zs.push(Matrix::zeros(0, params.latent_dim));
            continue;
        }
        let s = sample(&params, args.steps, &mut rng_stream(seed, i as u64))?;
        xs.push(s.x);
        zs.push(s.z);
    }
    let batch = SequenceBatch::new(xs, Some(zs), CSV_DT)?;
    write_atomic(&args.out, &batch_bytes(&batch)?)?;
    let out = args.out.clone();
    let model = args.model.clone();
    let mut m = RunManifest::new(Command::Sample(args), seed)?;
    m.checkpoint = Some(model);
    m.outputs = vec![out.clone()];
    m.write(&out)?;
    Ok(())
}
