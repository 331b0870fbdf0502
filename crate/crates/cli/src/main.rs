use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use drxcast::adapt::AdaptivePolicy;
use drxcast::drx::DrxConfig;
use drxcast::featurize::{apply_mask, Feature, bin_trace, read_series_csv, write_series_csv, FeatureSet};
use drxcast::kv::KvMap;
use drxcast::linear_forecast::{fit_arima, grid_search, write_rmse_table_csv};
use drxcast::neural_forecast::{write_loss_curve_csv, Activation, ForecastMode, Optimizer, RegressionConfig, RegressionNet, TrainConfig};
use drxcast::report::drx_compare::{train_adapt, user_traffic, DrxCompareSetup};
use drxcast::report::experiment::{run_experiment, ExperimentConfig, ExperimentKind};
use drxcast::report::metrics::{average_power, mean_delay, rmse};
use drxcast::sim::{run, Scheme, UePolicy};
use drxcast::trace_io::{
    load_trace, save_trace, synthesize_labeled_session, synthesize_trace, synthesize_user_trace, tti_byte_totals, AppClass, Direction,
    LoadOptions, QuantizationScheme, SynthDefaults, UnsortedPolicy,
};

#[derive(Parser)]
#[command(name = "drxcast", version, about = "Per-user traffic forecasting, classification and DRX simulation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// TTI length in ms.
    #[arg(long, global = true)]
    tti_ms: Option<f64>,
    /// Bin width in seconds.
    #[arg(long, global = true)]
    tau_s: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic packet trace.
    Synth(SynthArgs),
    /// Validate a trace and write its per-TTI DL byte totals and labels.
    Ingest(IngestArgs),
    /// Bin a trace into per-interval features.
    Features(FeaturesArgs),
    /// Fit ARIMA to a feature series and score rolling forecasts.
    FitArima(FitArimaArgs),
    /// Train the LSTM forecaster on a feature series.
    TrainLstm(TrainLstmArgs),
    /// Leave-one-trace-out application classification.
    Classify(ExperimentArgs),
    /// Simulate one DRX scheme over synthetic users.
    Simulate(SimulateArgs),
    /// Compare minimum-energy, adaptive and minimum-delay DRX.
    Compare(ExperimentArgs),
    /// Run any experiment described by a config file.
    Report(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Sessions of mixed applications separated by idle gaps.
    User,
    /// One application throughout.
    App,
    /// Consecutive labeled single-application segments.
    Labeled,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Predict,
    Drx,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "user")]
    kind: SynthKind,
    #[arg(long, value_enum, default_value = "predict")]
    profile: Profile,
    /// Application for `app`, comma-separated list for `labeled`.
    #[arg(long, default_value = "surf")]
    apps: String,
    /// Trace length, per segment for `labeled`.
    #[arg(long, default_value_t = 600.0)]
    duration_s: f64,
    /// Generator parameters in the key=value grammar; built-in when absent.
    #[arg(long)]
    defaults: Option<PathBuf>,
    #[arg(long, default_value = "trace.csv")]
    output: String,
}

#[derive(Args)]
struct IngestArgs {
    trace: PathBuf,
    /// Sort out-of-order records instead of rejecting the file.
    #[arg(long)]
    sort: bool,
    #[arg(long, default_value = "tti_labels.csv")]
    output: String,
}

#[derive(Args)]
struct FeaturesArgs {
    trace: PathBuf,
    #[arg(long)]
    sort: bool,
    #[arg(long, default_value = "series.csv")]
    output: String,
}

#[derive(Args)]
struct FitArimaArgs {
    series: PathBuf,
    /// Fixed order `p,d,q`; grid-searched when absent.
    #[arg(long)]
    order: Option<String>,
    #[arg(long, default_value_t = 3)]
    p_max: usize,
    #[arg(long, default_value_t = 1)]
    d_max: usize,
    #[arg(long, default_value_t = 2)]
    q_max: usize,
    /// Leading fraction of bins used for fitting.
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// Column to forecast.
    #[arg(long, default_value = "num_ul")]
    target: String,
}

#[derive(Args)]
struct TrainLstmArgs {
    series: PathBuf,
    #[arg(long, default_value = "FS-6")]
    feature_set: FeatureSet,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value = "adam")]
    optimizer: Optimizer,
    #[arg(long, default_value = "tanh")]
    activation: Activation,
    /// Feed forecasts back as inputs instead of one output per step.
    #[arg(long)]
    recursive: bool,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config in the key=value grammar.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, e.g. `drx.omega=0.3`.
    overrides: Vec<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// `set1`..`set4`, `always_on`, `ml` or five comma-separated timers.
    #[arg(long, default_value = "set2")]
    scheme: String,
    #[arg(long)]
    config: Option<PathBuf>,
    overrides: Vec<String>,
    /// Log every DRX phase change to events.csv.
    #[arg(long)]
    events: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Synth(a) => synth(&g, a).context("synth"),
        Command::Ingest(a) => ingest(&g, a).context("ingest"),
        Command::Features(a) => features(&g, a).context("features"),
        Command::FitArima(a) => fit_arima_cmd(&g, a).context("fit-arima"),
        Command::TrainLstm(a) => train_lstm(&g, a).context("train-lstm"),
        Command::Classify(a) => experiment(&g, a, Some(ExperimentKind::ClassifyFolds)).context("classify"),
        Command::Simulate(a) => simulate(&g, a).context("simulate"),
        Command::Compare(a) => experiment(&g, a, Some(ExperimentKind::DrxCompare)).context("compare"),
        Command::Report(a) => experiment(&g, a, None).context("report"),
    }
}

fn out_dir(g: &Global) -> Result<PathBuf> {
    let dir = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_defaults(path: Option<&Path>) -> Result<SynthDefaults> {
    match path {
        None => Ok(SynthDefaults::builtin()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(SynthDefaults::parse(&text)?)
        }
    }
}

fn load_opts(sort: bool) -> LoadOptions {
    LoadOptions {
        unsorted: if sort { UnsortedPolicy::Sort } else { UnsortedPolicy::Reject },
        duration: None,
    }
}

fn synth(g: &Global, a: SynthArgs) -> Result<()> {
    let d = load_defaults(a.defaults.as_deref())?;
    let seed = g.seed.unwrap_or(1);
    let apps: Vec<AppClass> = a.apps.split(',').map(str::parse).collect::<std::result::Result<_, _>>()?;
    let trace = match a.kind {
        SynthKind::User => {
            let profile = match a.profile {
                Profile::Predict => &d.predict_user,
                Profile::Drx => &d.drx_user,
            };
            synthesize_user_trace(&d, profile, a.duration_s, seed)?
        }
        SynthKind::App => {
            let app = *apps.first().ok_or_else(|| anyhow!("--apps is empty"))?;
            synthesize_trace(&d, app, a.duration_s, seed)?
        }
        SynthKind::Labeled => synthesize_labeled_session(&d, &apps, a.duration_s, seed)?,
    };
    let path = out_dir(g)?.join(&a.output);
    save_trace(&path, &trace)?;
    println!("{} records, {:.1} s -> {}", trace.len(), trace.duration, path.display());
    Ok(())
}

fn ingest(g: &Global, a: IngestArgs) -> Result<()> {
    let trace = load_trace(&a.trace, &load_opts(a.sort))?;
    let tti = g.tti_ms.unwrap_or(1.0);
    let bytes = tti_byte_totals(&trace, tti, Direction::Dl)?;
    let q = QuantizationScheme::default();
    let mut w = create(&out_dir(g)?, &a.output)?;
    writeln!(w, "tti,dl_bytes,label")?;
    for (t, b) in bytes.iter().enumerate() {
        writeln!(w, "{t},{b},{}", q.label(*b))?;
    }
    w.flush()?;
    println!(
        "{} records ({} UL, {} DL) over {:.1} s, {} TTIs",
        trace.len(),
        trace.count(Direction::Ul),
        trace.count(Direction::Dl),
        trace.duration,
        bytes.len()
    );
    Ok(())
}

fn features(g: &Global, a: FeaturesArgs) -> Result<()> {
    let trace = load_trace(&a.trace, &load_opts(a.sort))?;
    let series = bin_trace(&trace, g.tau_s.unwrap_or(10.0))?;
    let mut w = create(&out_dir(g)?, &a.output)?;
    write_series_csv(&mut w, &series)?;
    w.flush()?;
    println!("{} bins of {} s", series.len(), series.tau);
    Ok(())
}

fn load_series(path: &Path, tau: f64) -> Result<drxcast::featurize::FeatureSeries> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_series_csv(f, tau)?)
}

fn split_at(len: usize, frac: f64) -> Result<usize> {
    if !(frac > 0.0 && frac < 1.0) {
        bail!("--train-frac must be in (0, 1)");
    }
    let cut = (len as f64 * frac).round() as usize;
    if cut == 0 || cut >= len {
        bail!("{len} bins cannot be split at fraction {frac}");
    }
    Ok(cut)
}

fn fit_arima_cmd(g: &Global, a: FitArimaArgs) -> Result<()> {
    let series = load_series(&a.series, g.tau_s.unwrap_or(10.0))?;
    let target = Feature::ALL
        .into_iter()
        .find(|f| f.column() == a.target)
        .ok_or_else(|| anyhow!("unknown column `{}`", a.target))?;
    let y: Vec<f64> = series.bins.iter().map(|b| b.get(target)).collect();
    let cut = split_at(y.len(), a.train_frac)?;
    let (train, test) = y.split_at(cut);
    let dir = out_dir(g)?;
    let model = match &a.order {
        Some(o) => {
            let v: Vec<usize> = o.split(',').map(|s| s.trim().parse()).collect::<std::result::Result<_, _>>()?;
            match v[..] {
                [p, d, q] => fit_arima(train, p, d, q)?,
                _ => bail!("--order expects p,d,q"),
            }
        }
        None => {
            let vcut = split_at(train.len(), 0.8)?;
            let grid = grid_search(&train[..vcut], &train[vcut..], 0..=a.p_max, 0..=a.d_max, 0..=a.q_max)?;
            let mut w = create(&dir, "arima_grid.csv")?;
            write_rmse_table_csv(&mut w, &grid.table)?;
            w.flush()?;
            grid.refit_stable(train)?
        }
    };
    let (p, d, q) = (model.p, model.d, model.q);
    let preds: Vec<f64> = model.rolling_h_step(test, a.horizon).into_iter().map(|v| v.max(0.0)).collect();
    serde_json::to_writer(create(&dir, "arima_model.json")?, &model)?;
    let mut w = create(&dir, "arima_forecast.csv")?;
    writeln!(w, "bin,actual,forecast")?;
    for (i, (t, f)) in test.iter().zip(&preds).enumerate() {
        writeln!(w, "{},{t},{f}", cut + i)?;
    }
    w.flush()?;
    println!("ARIMA({p},{d},{q}) test RMSE {:.4}", rmse(&preds, test)?);
    Ok(())
}

fn train_lstm(g: &Global, a: TrainLstmArgs) -> Result<()> {
    let series = apply_mask(&load_series(&a.series, g.tau_s.unwrap_or(10.0))?, a.feature_set.mask())?;
    let rows = series.matrix();
    let y = series.target_values();
    let cut = split_at(rows.len(), a.train_frac)?;
    let cfg = RegressionConfig {
        hidden: a.hidden,
        window: a.window,
        horizon: a.horizon,
        activation: a.activation,
        mode: if a.recursive { ForecastMode::Recursive } else { ForecastMode::MultiOutput },
        train: TrainConfig {
            epochs: a.epochs,
            learning_rate: a.learning_rate,
            batch_size: a.batch_size,
            optimizer: a.optimizer,
            seed: g.seed.unwrap_or(0),
            ..TrainConfig::default()
        },
    };
    let (net, report) = RegressionNet::fit_series(&rows[..cut], &y[..cut], series.target_column(), &cfg)?;
    let dir = out_dir(g)?;
    net.save(dir.join("lstm.json"))?;
    let mut w = create(&dir, "loss_curve.csv")?;
    write_loss_curve_csv(&mut w, &report.epoch_losses)?;
    w.flush()?;
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut w = create(&dir, "lstm_forecast.csv")?;
    writeln!(w, "bin,actual,forecast")?;
    for i in cut.max(a.window + a.horizon - 1)..rows.len() {
        let end = i + 1 - a.horizon;
        let f = net.predict_horizon(&rows[end.saturating_sub(a.window)..end], a.horizon)?[a.horizon - 1].max(0.0);
        writeln!(w, "{i},{},{f}", y[i])?;
        preds.push(f);
        truths.push(y[i]);
    }
    w.flush()?;
    println!(
        "training MSE {:.5} -> {:.5}; test RMSE {:.4}",
        report.initial_loss,
        report.final_loss,
        rmse(&preds, &truths)?
    );
    Ok(())
}

fn experiment_config(g: &Global, config: Option<&Path>, overrides: &[String], kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut kv = match config {
        Some(p) => KvMap::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => KvMap::default(),
    };
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not key=value"))?;
        kv.insert(k.trim(), v.trim());
    }
    match (kind, kv.raw("experiment")) {
        (Some(k), None) => kv.insert("experiment", k.as_str()),
        (Some(k), Some(v)) if v.parse::<ExperimentKind>()? != k => bail!("config describes `{v}`, not `{k}`"),
        (None, None) => bail!("the config must name an `experiment`"),
        _ => {}
    }
    if let Some(s) = g.seed {
        kv.insert("seed", s);
    }
    if let Some(d) = &g.out_dir {
        kv.insert("out_dir", d.display());
    }
    if let Some(t) = g.tti_ms {
        kv.insert("tti_ms", t);
    }
    if let Some(t) = g.tau_s {
        kv.insert("tau_s", t);
    }
    Ok(ExperimentConfig::from_kv(&kv)?)
}

fn experiment(g: &Global, a: ExperimentArgs, kind: Option<ExperimentKind>) -> Result<()> {
    let cfg = experiment_config(g, a.config.as_deref(), &a.overrides, kind)?;
    let out = run_experiment(&cfg)?;
    println!("scheme,axis,value,metric,mean,std,n");
    for r in &out.table.rows {
        println!("{},{},{},{},{:.6},{:.6},{}", r.scheme, r.axis, r.value, r.metric, r.mean, r.std, r.n);
    }
    eprintln!("{} files in {}", out.files.len(), cfg.out_dir.display());
    Ok(())
}

fn static_scheme(s: &str) -> Result<Option<DrxConfig>> {
    Ok(match s {
        "ml" => None,
        "always_on" => Some(DrxConfig::always_on()),
        _ if s.starts_with("set") => Some(DrxConfig::set(s[3..].parse()?)?),
        _ => {
            let v: Vec<u32> = s.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>()?;
            let arr: [u32; 5] = v.try_into().map_err(|_| anyhow!("a DRX config has five timers"))?;
            Some(DrxConfig::from_array(arr)?)
        }
    })
}

fn simulate(g: &Global, a: SimulateArgs) -> Result<()> {
    let cfg = experiment_config(g, a.config.as_deref(), &a.overrides, Some(ExperimentKind::DrxCompare))?;
    let mut setup: DrxCompareSetup = cfg.drx.setup.clone();
    setup.sim.log_events = a.events;
    let n = setup.sim.n_ues;
    let tti = setup.sim.tti_ms;
    let traffic = user_traffic(&cfg.synth, &cfg.synth.drx_user, n, setup.sim.duration_s(), tti, cfg.seed)?;
    let scheme = match static_scheme(&a.scheme).context("parsing --scheme")? {
        Some(c) => Scheme::uniform(a.scheme.clone(), c, n),
        None => {
            let train = user_traffic(&cfg.synth, &cfg.synth.drx_user, setup.train_ues, setup.train_s, tti, cfg.seed.wrapping_add(1))?;
            let adapt = train_adapt(&train, &setup)?;
            let (f, h) = (Arc::new(adapt.predictor), Arc::new(adapt.h));
            Scheme {
                name: "ml".into(),
                policies: (0..n)
                    .map(|_| UePolicy::Adaptive(Box::new(AdaptivePolicy::new(f.clone(), h.clone()))))
                    .collect(),
            }
        }
    };
    let report = run(&setup.sim, &traffic, scheme, cfg.seed)?;
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(&dir)?;
    let mut w = create(&dir, "packets.csv")?;
    report.write_packets_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir, "ues.csv")?;
    report.write_ues_csv(&mut w)?;
    w.flush()?;
    if !report.decisions.is_empty() {
        let mut w = create(&dir, "decisions.csv")?;
        report.write_decisions_csv(&mut w)?;
        w.flush()?;
    }
    if a.events {
        let mut w = create(&dir, "events.csv")?;
        drxcast::drx::write_event_log_csv(&mut w, &report.events)?;
        w.flush()?;
    }
    let (_, fleet) = average_power(&report)?;
    let delay = if report.packets.is_empty() { f64::NAN } else { mean_delay(&report)? };
    println!(
        "{}: {} packets, mean delay {delay:.2} ms, mean power {fleet:.2} mW",
        report.scheme,
        report.packets.len()
    );
    Ok(())
}
