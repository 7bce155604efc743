use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use bci_gmm::divergence::{kl_mc, separability, DEFAULT_KL_SAMPLES};
use bci_gmm::features::{self, ChannelReduction, FeatureMap, FeatureOptions, FeatureRecord, Label};
use bci_gmm::gmm::{em_fit, load_models, save_models, EmOptions};
use bci_gmm::policy::PolicyKind;
use bci_gmm::rng::substream;
use bci_gmm::sim::{format_summary, run_monte_carlo, run_session, summarize, Scenario};
use bci_gmm::transfer::TransferState;
use bci_gmm::{ClassModels, Error};
use clap::Args;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{self, FeaturesRecord, FitRecord, SimulateConfig, TransferRunConfig};
use crate::CliError;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn read_features(path: &Path) -> Result<Vec<FeatureRecord>, CliError> {
    Ok(features::read_feature_csv(open(path)?)?)
}

fn models(path: &Path) -> Result<ClassModels, CliError> {
    if !path.exists() {
        return Err(CliError::Io(
            path.to_path_buf(),
            std::io::Error::new(std::io::ErrorKind::NotFound, "model file not found"),
        ));
    }
    Ok(load_models(path)?)
}

fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| CliError::Config(e.to_string())))
        .collect()
}

#[derive(Args)]
pub struct FitArgs {
    /// Labeled feature CSV (`epoch_id,label,f1,...`); unknown labels are skipped.
    #[arg(long)]
    features: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Components per class.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    reg_epsilon: f64,
    /// Samples for the separability estimate.
    #[arg(long, default_value_t = DEFAULT_KL_SAMPLES)]
    kl_samples: usize,
}

pub fn fit(a: FitArgs) -> Result<(), CliError> {
    let rows = read_features(&a.features)?;
    let class_rows = |label: Label| -> Vec<&FeatureRecord> {
        rows.iter().filter(|r| r.label == Some(label)).collect()
    };
    let (r0, r1) = (class_rows(Label::NonTarget), class_rows(Label::Target));
    if r0.is_empty() || r1.is_empty() {
        return Err(Error::InvalidData("both classes required".into()).into());
    }
    let opts = EmOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        reg_epsilon: a.reg_epsilon,
        seed: a.seed,
    };
    let fit_class = |rs: &[&FeatureRecord]| -> Result<bci_gmm::Gmm, CliError> {
        let d = rs[0].values.len();
        let m = DMatrix::from_fn(rs.len(), d, |i, j| rs[i].values[j]);
        let f = em_fit(&m, a.k, &opts)?;
        if !f.converged {
            log::warn!("EM stopped after {} iterations without converging", a.max_iter);
        }
        Ok(f.gmm)
    };
    let m = ClassModels::new(fit_class(&r0)?, fit_class(&r1)?)?;
    save_models(&a.out, &m)?;
    let kl = separability(&m, a.kl_samples, &mut substream(a.seed, &[0x6b6c]))?;
    println!(
        "separability KL(f1||f0) = {:.6} +- {:.6} (n = {})",
        kl.value, kl.std_error, kl.n_samples
    );
    config::write_echo(
        &config::echo_path(&a.out),
        &FitRecord {
            features: a.features,
            k: a.k,
            seed: a.seed,
            max_iter: a.max_iter,
            tol: a.tol,
            reg_epsilon: a.reg_epsilon,
            kl_samples: a.kl_samples,
        },
    )
}

#[derive(Args)]
pub struct KlArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_KL_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn kl(a: KlArgs) -> Result<(), CliError> {
    let m = models(&a.model)?;
    let kl = separability(&m, a.samples, &mut substream(a.seed, &[0x6b6c]))?;
    #[derive(Serialize)]
    struct Out<'a> {
        model: &'a Path,
        direction: &'static str,
        seed: u64,
        #[serde(flatten)]
        kl: bci_gmm::divergence::KlEstimate,
    }
    let out = Out {
        model: &a.model,
        direction: "f1||f0",
        seed: a.seed,
        kl,
    };
    println!("{}", serde_json::to_string(&out).map_err(Error::from)?);
    Ok(())
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for cdf.csv, summary.txt and resolved_config.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Comma-separated policy subset, overriding the config.
    #[arg(long)]
    policies: Option<String>,
    /// Also write per-step traces of this run index for every policy.
    #[arg(long)]
    trace_run: Option<u64>,
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut cfg: SimulateConfig = config::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    cfg.model = config::resolve(base, &cfg.model);
    cfg.belief_model = cfg.belief_model.map(|p| config::resolve(base, &p));
    if let Some(list) = &a.policies {
        cfg.policies = parse_list::<PolicyKind>(list)?;
    }
    if cfg.policies.is_empty() {
        return Err(CliError::Config("no policies selected".into()));
    }
    if cfg.n_runs == 0 {
        return Err(CliError::Config("n_runs must be at least 1".into()));
    }
    cfg.session.validate()?;
    let truth = models(&cfg.model)?;
    let assumed = match &cfg.belief_model {
        Some(p) => models(p)?,
        None => truth.clone(),
    };
    let scenario = Scenario::new(truth, assumed)?;

    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Io(a.out.clone(), e))?;
    config::write_echo(&a.out.join("resolved_config.json"), &cfg)?;
    let res = run_monte_carlo(&cfg.session, &scenario, cfg.n_runs, &cfg.policies)?;
    let csv_path = a.out.join("cdf.csv");
    let mut w = create(&csv_path)?;
    res.write_csv(&mut w)?;
    w.flush().map_err(|e| CliError::Io(csv_path.clone(), e))?;
    let table = format_summary(&summarize(&res));
    std::fs::write(a.out.join("summary.txt"), &table).map_err(|e| CliError::Io(a.out.clone(), e))?;
    print!("{table}");
    if let Some(run) = a.trace_run {
        let path = a.out.join("traces.jsonl");
        let mut w = create(&path)?;
        for p in &cfg.policies {
            run_session(&cfg.session, &scenario, *p, run)?.write_jsonl(&mut w)?;
        }
        w.flush().map_err(|e| CliError::Io(path.clone(), e))?;
    }
    Ok(())
}

#[derive(Args)]
pub struct TransferArgs {
    /// Source-session model file.
    #[arg(long)]
    model: PathBuf,
    /// Destination feature CSV; label -1 marks unknown rows.
    #[arg(long)]
    data: PathBuf,
    /// Output adapted model file.
    #[arg(long)]
    out: PathBuf,
    /// Output KL trace CSV.
    #[arg(long)]
    trace: PathBuf,
    /// Model the trace measures KL against (default: the source model).
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Transfer options (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn transfer(a: TransferArgs) -> Result<(), CliError> {
    let cfg: TransferRunConfig = match &a.config {
        Some(p) => config::load(p)?,
        None => TransferRunConfig::default(),
    };
    cfg.validate()?;
    let source = models(&a.model)?;
    let reference = match &a.reference {
        Some(p) => models(p)?,
        None => source.clone(),
    };
    if source.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            got: reference.dim(),
        }
        .into());
    }
    let rows = read_features(&a.data)?;
    let mut state = TransferState::new(source, &cfg.transfer, cfg.classes)?;

    let mut trace = create(&a.trace)?;
    let io = |e| CliError::Io(a.trace.clone(), e);
    writeln!(trace, "step,kl_f0,kl_f1,alpha_mean").map_err(io)?;
    let mut write_row = |step: usize, m: &ClassModels, alpha_mean: f64| -> Result<(), CliError> {
        let kl0 = kl_mc(&m.f0, &reference.f0, cfg.kl_samples, &mut substream(cfg.seed, &[step as u64, 0]))?;
        let kl1 = kl_mc(&m.f1, &reference.f1, cfg.kl_samples, &mut substream(cfg.seed, &[step as u64, 1]))?;
        writeln!(trace, "{step},{},{},{alpha_mean}", kl0.value, kl1.value).map_err(io)
    };
    write_row(0, state.current(), 0.0)?;
    let n = rows.len();
    let mut alpha_mean = 0.0;
    for (i, r) in rows.into_iter().enumerate() {
        let step = i + 1;
        let report = if step == n {
            match state.transfer_step(r.values, r.label)? {
                Some(rep) => Some(rep),
                None => state.flush()?,
            }
        } else {
            state.transfer_step(r.values, r.label)?
        };
        if let Some(rep) = report {
            alpha_mean = rep.alpha_mean();
        }
        if step % cfg.trace_every == 0 || step == n {
            write_row(step, state.current(), alpha_mean)?;
        }
    }
    trace.flush().map_err(io)?;
    save_models(&a.out, state.current())?;

    #[derive(Serialize)]
    struct Echo<'a> {
        model: &'a Path,
        data: &'a Path,
        reference: Option<&'a Path>,
        #[serde(flatten)]
        cfg: &'a TransferRunConfig,
    }
    config::write_echo(
        &config::echo_path(&a.out),
        &Echo {
            model: &a.model,
            data: &a.data,
            reference: a.reference.as_deref(),
            cfg: &cfg,
        },
    )
}

#[derive(Args)]
pub struct FeaturesArgs {
    /// Epoch JSON lines.
    #[arg(long)]
    epochs: PathBuf,
    /// Output feature CSV.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated feature maps: peak, auc.
    #[arg(long, default_value = "peak,auc")]
    maps: String,
    /// Window `START,END` in ms after onset (default: whole epoch).
    #[arg(long)]
    window: Option<String>,
    /// Use one channel instead of the channel average.
    #[arg(long)]
    channel: Option<usize>,
}

pub fn features(a: FeaturesArgs) -> Result<(), CliError> {
    let maps = parse_list::<FeatureMap>(&a.maps)?;
    let window_ms = match &a.window {
        Some(w) => {
            let parts: Vec<f64> = w
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Config(format!("--window: {e}")))?;
            match parts[..] {
                [s, e] => Some((s, e)),
                _ => return Err(CliError::Config("--window expects START,END".into())),
            }
        }
        None => None,
    };
    let options = FeatureOptions {
        window_ms,
        channels: a.channel.map_or(ChannelReduction::Average, ChannelReduction::Channel),
    };
    let epochs = features::read_epochs(open(&a.epochs)?)?;
    let recs = epochs
        .iter()
        .map(|e| features::extract(e, &maps, &options))
        .collect::<bci_gmm::Result<Vec<_>>>()?;
    let mut w = create(&a.out)?;
    features::write_feature_csv(&mut w, &recs)?;
    w.flush().map_err(|e| CliError::Io(a.out.clone(), e))?;
    config::write_echo(
        &config::echo_path(&a.out),
        &FeaturesRecord {
            epochs: a.epochs,
            maps,
            options,
        },
    )
}
