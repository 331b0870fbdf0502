//! Experiment configs and the harness that runs them and writes artifacts.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adapt::ThresholdTable;
use crate::adapt::MappingH;
use crate::error::{Error, Result};
use crate::featurize::{apply_mask, bin_trace, FeatureSet};
use crate::kv::KvMap;
use crate::linear_forecast::{grid_search, write_rmse_table_csv};
use crate::report::classify::{labeled_corpus, pooled_report, run_folds, ClassifierModel, ClassifySetup};
use crate::report::drx_compare::{compare, train_adapt, user_traffic, DrxCompareSetup, HSource};
use crate::report::metrics::{average_power, delay_cdf, mean_delay, median_delay};
use crate::report::plot::{PlotKind, PlotSpec};
use crate::report::predict::{job_seed, run_points, PredictScheme, PredictSetup, RawScore, SweepPoint};
use crate::report::table::MetricTable;
use crate::classifier::{write_classification_csv, ClassificationRow};
use crate::trace_io::{synthesize_user_trace, AppClass, SynthDefaults};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    PredictSweep,
    ClassifyFolds,
    DrxCompare,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::PredictSweep => "predict_sweep",
            ExperimentKind::ClassifyFolds => "classify_folds",
            ExperimentKind::DrxCompare => "drx_compare",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "predict_sweep" => Ok(ExperimentKind::PredictSweep),
            "classify_folds" => Ok(ExperimentKind::ClassifyFolds),
            "drx_compare" => Ok(ExperimentKind::DrxCompare),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictAxis {
    Tau,
    TrainLength,
    Horizon,
}

impl PredictAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictAxis::Tau => "tau",
            PredictAxis::TrainLength => "train_length",
            PredictAxis::Horizon => "horizon",
        }
    }
}

impl FromStr for PredictAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tau" => Ok(PredictAxis::Tau),
            "train_length" => Ok(PredictAxis::TrainLength),
            "horizon" => Ok(PredictAxis::Horizon),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictSweepConfig {
    pub axes: Vec<PredictAxis>,
    pub taus: Vec<f64>,
    pub train_lengths: Vec<usize>,
    pub horizons: Vec<usize>,
    /// Bin width of the training-length and horizon sweeps.
    pub base_tau: f64,
    pub tau_repetitions: usize,
    pub train_length_repetitions: usize,
    pub horizon_repetitions: usize,
    pub schemes: Vec<PredictScheme>,
    pub trace_hours: f64,
    pub setup: PredictSetup,
}

impl Default for PredictSweepConfig {
    fn default() -> Self {
        Self {
            axes: vec![PredictAxis::Tau, PredictAxis::TrainLength, PredictAxis::Horizon],
            taus: vec![2.0, 10.0, 30.0, 60.0],
            train_lengths: vec![100, 400, 1600, 4000],
            horizons: vec![1, 2, 5, 10],
            base_tau: 10.0,
            tau_repetitions: 37,
            train_length_repetitions: 10,
            horizon_repetitions: 10,
            schemes: PredictScheme::ALL.to_vec(),
            trace_hours: 48.0,
            setup: PredictSetup {
                train_bins: 1500,
                test_bins: 300,
                ..PredictSetup::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyConfig {
    pub models: Vec<ClassifierModel>,
    pub feature_sets: Vec<FeatureSet>,
    pub repetitions: usize,
    pub setup: ClassifySetup,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            models: vec![ClassifierModel::Lstm, ClassifierModel::Forest],
            feature_sets: FeatureSet::ALL.to_vec(),
            repetitions: 1,
            setup: ClassifySetup::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrxExperimentConfig {
    pub repetitions: usize,
    pub setup: DrxCompareSetup,
    pub table: ThresholdTable,
}

impl Default for DrxExperimentConfig {
    fn default() -> Self {
        Self {
            repetitions: 1,
            setup: DrxCompareSetup::default(),
            table: ThresholdTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub synth: SynthDefaults,
    pub predict: PredictSweepConfig,
    pub classify: ClassifyConfig,
    pub drx: DrxExperimentConfig,
}

const TOP_KEYS: &[&str] = &["experiment", "seed", "out_dir", "repetitions", "tti_ms", "tau_s", "synth_defaults"];
const PREDICT_KEYS: &[&str] = &[
    "axes", "taus", "train_lengths", "horizons", "train_length_repetitions", "horizon_repetitions", "schemes", "feature_set",
    "trace_hours", "train_bins", "test_bins", "validation_fraction", "p_max", "d_max", "q_max", "hidden", "window", "epochs",
    "learning_rate", "batch_size", "optimizer", "activation",
];
const CLASSIFY_KEYS: &[&str] = &[
    "models", "feature_sets", "traces_per_class", "trace_s", "window_s", "hidden", "seq_len", "stride", "epochs", "learning_rate",
    "activation", "n_trees", "max_depth",
];
const DRX_KEYS: &[&str] = &[
    "n_ues", "n_carriers", "carrier_rate_bps", "duration_s", "train_ues", "train_s", "omega", "mapping", "short_boundary",
    "long_boundary", "predictor_hidden", "predictor_epochs", "predictor_stride", "h_max_depth", "h_min_leaf_fraction", "cdf_max_ms",
    "p_rx_mw", "p_active_mw", "p_sleep_mw",
];

fn set_if<T: FromStr>(kv: &KvMap, key: &str, slot: &mut T) -> Result<()> {
    if let Some(v) = kv.get(key)? {
        *slot = v;
    }
    Ok(())
}

fn list_if<T: FromStr>(kv: &KvMap, key: &str, slot: &mut Vec<T>) -> Result<()> {
    if let Some(v) = kv.list(key)? {
        *slot = v;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seed: 1,
            out_dir: PathBuf::from(format!("out/{kind}")),
            synth: SynthDefaults::builtin(),
            predict: PredictSweepConfig::default(),
            classify: ClassifyConfig::default(),
            drx: DrxExperimentConfig::default(),
        }
    }

    /// Builds a config from the key=value grammar; unknown keys are errors.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        for key in kv.keys() {
            let ok = match key.split_once('.') {
                None => TOP_KEYS.contains(&key),
                Some(("predict", k)) => PREDICT_KEYS.contains(&k),
                Some(("classify", k)) => CLASSIFY_KEYS.contains(&k),
                Some(("drx", k)) => DRX_KEYS.contains(&k),
                Some(_) => false,
            };
            if !ok {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        let kind: ExperimentKind = kv.require("experiment")?;
        let mut c = Self::defaults(kind);
        set_if(kv, "seed", &mut c.seed)?;
        if let Some(dir) = kv.raw("out_dir") {
            c.out_dir = PathBuf::from(dir);
        }
        if let Some(path) = kv.raw("synth_defaults") {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            c.synth = SynthDefaults::parse(&text)?;
        }
        if let Some(r) = kv.get::<usize>("repetitions")? {
            c.predict.tau_repetitions = r;
            c.classify.repetitions = r;
            c.drx.repetitions = r;
        }
        if let Some(t) = kv.get::<f64>("tti_ms")? {
            c.set_tti_ms(t);
        }
        if let Some(t) = kv.get::<f64>("tau_s")? {
            c.set_tau_s(t);
        }

        let p = &mut c.predict;
        list_if(kv, "predict.axes", &mut p.axes)?;
        list_if(kv, "predict.taus", &mut p.taus)?;
        list_if(kv, "predict.train_lengths", &mut p.train_lengths)?;
        list_if(kv, "predict.horizons", &mut p.horizons)?;
        list_if(kv, "predict.schemes", &mut p.schemes)?;
        set_if(kv, "predict.train_length_repetitions", &mut p.train_length_repetitions)?;
        set_if(kv, "predict.horizon_repetitions", &mut p.horizon_repetitions)?;
        set_if(kv, "predict.trace_hours", &mut p.trace_hours)?;
        let s = &mut p.setup;
        set_if(kv, "predict.feature_set", &mut s.feature_set)?;
        set_if(kv, "predict.train_bins", &mut s.train_bins)?;
        set_if(kv, "predict.test_bins", &mut s.test_bins)?;
        set_if(kv, "predict.validation_fraction", &mut s.validation_fraction)?;
        set_if(kv, "predict.p_max", &mut s.p_max)?;
        set_if(kv, "predict.d_max", &mut s.d_max)?;
        set_if(kv, "predict.q_max", &mut s.q_max)?;
        set_if(kv, "predict.hidden", &mut s.lstm.hidden)?;
        set_if(kv, "predict.window", &mut s.lstm.window)?;
        set_if(kv, "predict.epochs", &mut s.lstm.train.epochs)?;
        set_if(kv, "predict.learning_rate", &mut s.lstm.train.learning_rate)?;
        set_if(kv, "predict.batch_size", &mut s.lstm.train.batch_size)?;
        set_if(kv, "predict.optimizer", &mut s.lstm.train.optimizer)?;
        set_if(kv, "predict.activation", &mut s.lstm.activation)?;

        let k = &mut c.classify;
        list_if(kv, "classify.models", &mut k.models)?;
        list_if(kv, "classify.feature_sets", &mut k.feature_sets)?;
        let s = &mut k.setup;
        set_if(kv, "classify.traces_per_class", &mut s.traces_per_class)?;
        set_if(kv, "classify.trace_s", &mut s.trace_s)?;
        set_if(kv, "classify.window_s", &mut s.window_len_s)?;
        set_if(kv, "classify.hidden", &mut s.net.hidden)?;
        set_if(kv, "classify.seq_len", &mut s.net.seq_len)?;
        set_if(kv, "classify.stride", &mut s.net.stride)?;
        set_if(kv, "classify.epochs", &mut s.net.train.epochs)?;
        set_if(kv, "classify.learning_rate", &mut s.net.train.learning_rate)?;
        set_if(kv, "classify.activation", &mut s.net.activation)?;
        set_if(kv, "classify.n_trees", &mut s.forest.n_trees)?;
        set_if(kv, "classify.max_depth", &mut s.forest.max_depth)?;

        let d = &mut c.drx;
        let s = &mut d.setup;
        set_if(kv, "drx.n_ues", &mut s.sim.n_ues)?;
        set_if(kv, "drx.n_carriers", &mut s.sim.n_carriers)?;
        set_if(kv, "drx.carrier_rate_bps", &mut s.sim.carrier_rate_bps)?;
        if let Some(secs) = kv.get::<f64>("drx.duration_s")? {
            s.sim.duration_ttis = (secs * 1000.0 / s.sim.tti_ms).round() as u64;
        }
        set_if(kv, "drx.train_ues", &mut s.train_ues)?;
        set_if(kv, "drx.train_s", &mut s.train_s)?;
        set_if(kv, "drx.omega", &mut s.omega)?;
        if let Some(m) = kv.raw("drx.mapping") {
            s.h_source = match m {
                "tree" => HSource::Trained,
                "table" => HSource::Table,
                other => return Err(Error::Config(format!("unknown mapping `{other}` (tree or table)"))),
            };
        }
        set_if(kv, "drx.short_boundary", &mut d.table.short_boundary)?;
        set_if(kv, "drx.long_boundary", &mut d.table.long_boundary)?;
        set_if(kv, "drx.predictor_hidden", &mut s.predictor.net.hidden)?;
        set_if(kv, "drx.predictor_epochs", &mut s.predictor.net.train.epochs)?;
        set_if(kv, "drx.predictor_stride", &mut s.predictor.stride)?;
        set_if(kv, "drx.h_max_depth", &mut s.h_params.max_depth)?;
        set_if(kv, "drx.h_min_leaf_fraction", &mut s.h_params.min_leaf_fraction)?;
        if let Some(max) = kv.get::<u32>("drx.cdf_max_ms")? {
            s.cdf_grid_ms = (0..=max).map(f64::from).collect();
        }
        set_if(kv, "drx.p_rx_mw", &mut s.sim.power.p_rx)?;
        set_if(kv, "drx.p_active_mw", &mut s.sim.power.p_active)?;
        set_if(kv, "drx.p_sleep_mw", &mut s.sim.power.p_sleep)?;
        s.oracle.power = s.sim.power;
        s.oracle.carrier_rate_bps = s.sim.carrier_rate_bps;
        c.validate()?;
        Ok(c)
    }

    pub fn set_tti_ms(&mut self, tti_ms: f64) {
        let secs = self.drx.setup.sim.duration_s();
        let s = &mut self.drx.setup;
        s.sim.tti_ms = tti_ms;
        s.sim.duration_ttis = (secs * 1000.0 / tti_ms).round() as u64;
        s.oracle.tti_ms = tti_ms;
    }

    /// Bin width of the training-length and horizon sweeps and of the
    /// classification windows.
    pub fn set_tau_s(&mut self, tau: f64) {
        self.predict.base_tau = tau;
        self.classify.setup.tau = tau;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let p = &self.predict;
        let c = &self.classify;
        let d = &self.drx;
        match self.kind {
            ExperimentKind::PredictSweep => {
                if p.tau_repetitions == 0 || p.train_length_repetitions == 0 || p.horizon_repetitions == 0 {
                    return bad("repetitions must be at least 1".into());
                }
                if p.axes.is_empty() || p.schemes.is_empty() {
                    return bad("predict sweep needs at least one axis and one scheme".into());
                }
                if p.taus.iter().chain([&p.base_tau]).any(|t| !(*t > 0.0)) {
                    return bad("every tau must be > 0".into());
                }
                if p.horizons.contains(&0) || p.train_lengths.iter().any(|&n| n < 20) {
                    return bad("horizons must be >= 1 and training lengths >= 20 bins".into());
                }
                if !(p.setup.validation_fraction > 0.0 && p.setup.validation_fraction < 1.0) {
                    return bad("validation_fraction must be in (0, 1)".into());
                }
                if p.setup.test_bins == 0 || !(p.trace_hours > 0.0) {
                    return bad("test_bins and trace_hours must be positive".into());
                }
            }
            ExperimentKind::ClassifyFolds => {
                if c.repetitions == 0 {
                    return bad("repetitions must be at least 1".into());
                }
                if c.models.is_empty() || c.feature_sets.is_empty() {
                    return bad("classification needs at least one model and one feature set".into());
                }
                if c.setup.traces_per_class == 0 || !(c.setup.trace_s > 0.0) {
                    return bad("traces_per_class and trace_s must be positive".into());
                }
                crate::classifier::window_bins(c.setup.tau, c.setup.window_len_s)?;
            }
            ExperimentKind::DrxCompare => {
                if d.repetitions == 0 {
                    return bad("repetitions must be at least 1".into());
                }
                d.setup.sim.validate()?;
                if !(0.0..=1.0).contains(&d.setup.omega) {
                    return bad(format!("omega must be in [0, 1], got {}", d.setup.omega));
                }
                if d.setup.train_ues == 0 || !(d.setup.train_s > 0.0) {
                    return bad("train_ues and train_s must be positive".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: MetricTable,
    /// Every file written, relative to the output directory, in write order.
    pub files: Vec<String>,
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        self.write(name, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e)))
    }

    fn table(&mut self, table: &MetricTable) -> Result<()> {
        self.write("metrics.csv", |w| table.write_csv(w))
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("artifact", e)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut art = Artifacts::new(&cfg.out_dir)?;
    let table = match cfg.kind {
        ExperimentKind::PredictSweep => run_predict(cfg, &mut art)?,
        ExperimentKind::ClassifyFolds => run_classify(cfg, &mut art)?,
        ExperimentKind::DrxCompare => run_drx(cfg, &mut art)?,
    };
    Ok(ExperimentOutput { table, files: art.files })
}

/// Aggregates raw repetitions into mean/std rows per (scheme, value).
pub fn summarize_scores(raw: &[RawScore], table: &mut MetricTable) -> Result<()> {
    let mut keys: Vec<(String, f64, PredictScheme)> = Vec::new();
    for r in raw {
        let k = (r.axis.clone(), r.value, r.scheme);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (axis, value, scheme) in keys {
        let sel: Vec<&RawScore> = raw.iter().filter(|r| r.axis == axis && r.value == value && r.scheme == scheme).collect();
        let rmse: Vec<f64> = sel.iter().map(|r| r.rmse).collect();
        let rel: Vec<f64> = sel.iter().filter_map(|r| r.relative_rmse).collect();
        table.push_samples(scheme.as_str(), &axis, value, "rmse", &rmse)?;
        table.push_samples(scheme.as_str(), &axis, value, "relative_rmse", &rel)?;
    }
    Ok(())
}

pub const RAW_HEADER: &str = "axis,value,rep,start,scheme,rmse,relative_rmse";

pub fn write_raw_scores<W: Write>(w: &mut W, raw: &[RawScore]) -> std::io::Result<()> {
    writeln!(w, "{RAW_HEADER}")?;
    for r in raw {
        let rel = r.relative_rmse.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{},{}", r.axis, r.value, r.rep, r.start, r.scheme, r.rmse, rel)?;
    }
    Ok(())
}

fn run_predict(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<MetricTable> {
    let p = &cfg.predict;
    let trace = synthesize_user_trace(&cfg.synth, &cfg.synth.predict_user, p.trace_hours * 3600.0, cfg.seed)?;
    let mut table = MetricTable::default();
    let mut plots = String::new();

    // ARIMA order grid on the first training slice at the base bin width.
    let base = apply_mask(&bin_trace(&trace, p.base_tau)?, p.setup.feature_set.mask())?;
    let n = p.setup.train_bins.min(base.len());
    let y = base.slice(0..n).target_values();
    let cut = ((n as f64) * (1.0 - p.setup.validation_fraction)).round() as usize;
    let grid = grid_search(&y[..cut], &y[cut..], 0..=p.setup.p_max, 0..=p.setup.d_max, 0..=p.setup.q_max)
        .map_err(|e| Error::Config(format!("ARIMA order grid: {e}")))?;
    art.write("arima_grid.csv", |w| write_rmse_table_csv(w, &grid.table).map_err(io_err))?;
    plots += &PlotSpec::new("arima_grid", "ARIMA validation RMSE by order", "arima_grid.csv", PlotKind::Line, ("p", "rmse"), ("p", "RMSE"))
        .group("q")
        .to_script();

    for (ai, axis) in p.axes.iter().enumerate() {
        let (points, reps): (Vec<(f64, SweepPoint)>, usize) = match axis {
            PredictAxis::Tau => (
                p.taus
                    .iter()
                    .map(|&t| (t, SweepPoint { tau: t, train_bins: p.setup.train_bins, horizon: 1 }))
                    .collect(),
                p.tau_repetitions,
            ),
            PredictAxis::TrainLength => (
                p.train_lengths
                    .iter()
                    .map(|&l| (l as f64, SweepPoint { tau: p.base_tau, train_bins: l, horizon: 1 }))
                    .collect(),
                p.train_length_repetitions,
            ),
            PredictAxis::Horizon => (
                p.horizons
                    .iter()
                    .map(|&h| (h as f64, SweepPoint { tau: p.base_tau, train_bins: p.setup.train_bins, horizon: h }))
                    .collect(),
                p.horizon_repetitions,
            ),
        };
        let name = axis.as_str();
        let raw = run_points(&trace, name, &points, reps, &p.schemes, &p.setup, job_seed(cfg.seed, ai + 1, 0))?;
        art.write(&format!("raw_{name}.csv"), |w| write_raw_scores(w, &raw).map_err(io_err))?;
        summarize_scores(&raw, &mut table)?;
        let (id, title, xlabel) = match axis {
            PredictAxis::Tau => ("rmse_by_tau", "RMSE versus bin width", "tau (s)"),
            PredictAxis::TrainLength => ("rmse_by_train_length", "RMSE versus training length", "training bins"),
            PredictAxis::Horizon => ("rmse_by_horizon", "RMSE versus forecast horizon", "horizon (bins)"),
        };
        plots += &PlotSpec::new(id, title, "metrics.csv", PlotKind::Line, ("value", "mean"), (xlabel, "RMSE (packets)"))
            .group("scheme")
            .filter("axis", name)
            .filter("metric", "rmse")
            .to_script();
    }
    art.table(&table)?;
    art.text("figures.plot", &plots)?;
    Ok(table)
}

fn run_classify(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<MetricTable> {
    let c = &cfg.classify;
    let mut table = MetricTable::default();
    let mut fold_csv = String::from("rep,model,feature_set,fold,class,windows,accuracy\n");
    let mut recall_csv = String::from("rep,model,feature_set,class,recall\n");
    // accuracy[model][fs] over repetitions
    let mut acc: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); c.feature_sets.len()]; c.models.len()];
    let mut rec: Vec<Vec<Vec<Vec<f64>>>> = vec![vec![vec![Vec::new(); AppClass::COUNT]; c.feature_sets.len()]; c.models.len()];
    let mut class_rows: Vec<Vec<ClassificationRow>> = vec![Vec::new(); c.models.len()];
    for rep in 0..c.repetitions {
        let seed = job_seed(cfg.seed, 0, rep);
        let corpus = labeled_corpus(&cfg.synth, &c.setup, seed)?;
        let folds = run_folds(&corpus, &c.models, &c.feature_sets, &c.setup, seed)?;
        for f in &folds {
            fold_csv += &format!(
                "{rep},{},{},{},{},{},{}\n",
                f.model,
                f.feature_set,
                f.fold,
                AppClass::ALL[f.fold % AppClass::COUNT],
                f.report.total,
                f.report.accuracy
            );
        }
        for (mi, &model) in c.models.iter().enumerate() {
            for (si, &fs) in c.feature_sets.iter().enumerate() {
                let r = pooled_report(&folds, model, fs)?;
                acc[mi][si].push(r.accuracy);
                for app in AppClass::ALL {
                    if let Some(v) = r.recall[app.index()] {
                        rec[mi][si][app.index()].push(v);
                        recall_csv += &format!("{rep},{model},{fs},{app},{v}\n");
                    }
                }
                if rep == 0 {
                    class_rows[mi].push(ClassificationRow {
                        feature_set: fs.to_string(),
                        window_len_s: c.setup.window_len_s,
                        accuracy: r.accuracy,
                        recall: r.recall,
                    });
                }
            }
        }
    }
    for (mi, &model) in c.models.iter().enumerate() {
        for (si, &fs) in c.feature_sets.iter().enumerate() {
            let v = (FeatureSet::ALL.iter().position(|&x| x == fs).expect("known set") + 1) as f64;
            table.push_samples(model.as_str(), "feature_set", v, "accuracy", &acc[mi][si])?;
            for app in AppClass::ALL {
                table.push_samples(model.as_str(), "feature_set", v, &format!("recall_{}", app.config_key()), &rec[mi][si][app.index()])?;
            }
        }
        art.write(&format!("classification_{model}.csv"), |w| write_classification_csv(w, &class_rows[mi]).map_err(io_err))?;
    }
    art.text("folds.csv", &fold_csv)?;
    art.text("recall.csv", &recall_csv)?;
    art.table(&table)?;
    let plots = PlotSpec::new("accuracy", "Accuracy by feature set", "metrics.csv", PlotKind::Bar, ("value", "mean"), ("feature set", "accuracy"))
        .group("scheme")
        .filter("axis", "feature_set")
        .filter("metric", "accuracy")
        .to_script()
        + &PlotSpec::new("recall", "Per-application recall by feature set", "recall.csv", PlotKind::Bar, ("feature_set", "recall"), ("feature set", "recall"))
            .group("class")
            .filter("model", "lstm")
            .filter("rep", "0")
            .to_script();
    art.text("figures.plot", &plots)?;
    Ok(table)
}

fn run_drx(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<MetricTable> {
    let d = &cfg.drx;
    let mut setup = d.setup.clone();
    setup.oracle.power = setup.sim.power;
    setup.oracle.carrier_rate_bps = setup.sim.carrier_rate_bps;
    setup.oracle.tti_ms = setup.sim.tti_ms;
    let tti = setup.sim.tti_ms;
    let profile = &cfg.synth.drx_user;
    let train = user_traffic(&cfg.synth, profile, setup.train_ues, setup.train_s, tti, job_seed(cfg.seed, 1, 0))?;
    let mut adapt = train_adapt(&train, &setup).map_err(|e| Error::Config(format!("training the adaptive policy: {e}")))?;
    if setup.h_source == HSource::Table {
        adapt.h = MappingH::ThresholdTable(d.table);
    }
    art.write("predictor.json", |w| serde_json::to_writer(w, &adapt.predictor).map_err(Error::from))?;
    art.write("h.json", |w| serde_json::to_writer(w, &adapt.h).map_err(Error::from))?;
    art.text("h_rules.txt", &adapt.h.describe())?;

    let secs = setup.sim.duration_s();
    let mut table = MetricTable::default();
    let mut cdf_csv = String::from("rep,scheme,delay_ms,cdf\n");
    let mut power_csv = String::from("rep,scheme,ue,power_mw\n");
    let names = [super::drx_compare::MIN_ENERGY, super::drx_compare::ML, super::drx_compare::MIN_DELAY];
    let mut per: Vec<[Vec<f64>; 4]> = vec![Default::default(); names.len()];
    for rep in 0..d.repetitions {
        let traffic = user_traffic(&cfg.synth, profile, setup.sim.n_ues, secs, tti, job_seed(cfg.seed, 2, rep))?;
        let reports = compare(&setup, &traffic, &adapt, job_seed(cfg.seed, 3, rep))
            .map_err(|e| Error::Config(format!("simulation, repetition {rep}: {e}")))?;
        for (si, r) in reports.iter().enumerate() {
            art.write(&format!("packets_{}_rep{rep}.csv", r.scheme), |w| r.write_packets_csv(w).map_err(io_err))?;
            art.write(&format!("ues_{}_rep{rep}.csv", r.scheme), |w| r.write_ues_csv(w).map_err(io_err))?;
            if !r.decisions.is_empty() {
                art.write(&format!("decisions_{}_rep{rep}.csv", r.scheme), |w| r.write_decisions_csv(w).map_err(io_err))?;
            }
            for (g, c) in setup.cdf_grid_ms.iter().zip(delay_cdf(r, &setup.cdf_grid_ms)?) {
                cdf_csv += &format!("{rep},{},{g},{c}\n", r.scheme);
            }
            let (ue_power, fleet) = average_power(r)?;
            for (ue, pw) in ue_power.iter().enumerate() {
                power_csv += &format!("{rep},{},{ue},{pw}\n", r.scheme);
            }
            per[si][0].push(fleet);
            per[si][1].push(mean_delay(r)?);
            per[si][2].push(median_delay(r)?);
            per[si][3].push(r.total_undelivered() as f64);
        }
    }
    for (si, name) in names.iter().enumerate() {
        for (mi, metric) in ["mean_power_mw", "mean_delay_ms", "median_delay_ms", "undelivered"].iter().enumerate() {
            table.push_samples(name, "carriers", setup.sim.n_carriers as f64, metric, &per[si][mi])?;
        }
    }
    art.text("delay_cdf.csv", &cdf_csv)?;
    art.text("power.csv", &power_csv)?;
    art.table(&table)?;
    let plots = PlotSpec::new("delay_cdf", "Packet delay CDF", "delay_cdf.csv", PlotKind::Step, ("delay_ms", "cdf"), ("delay (ms)", "CDF"))
        .group("scheme")
        .filter("rep", "0")
        .to_script()
        + &PlotSpec::new("power", "Average power per UE", "metrics.csv", PlotKind::Bar, ("scheme", "mean"), ("scheme", "power (mW)"))
            .filter("metric", "mean_power_mw")
            .to_script();
    art.text("figures.plot", &plots)?;
    Ok(table)
}

#[cfg(test)]
mod tests;
