//! Experiment drivers behind the command-line tool: the length-stability
//! sweep and leave-one-out classification over synthetic or on-disk
//! datasets. Every report carries its fully resolved configuration, and
//! rerunning that configuration reproduces the report exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chaos::chaos_feature_vector;
use crate::classify::{chi2_distance, loocv_predictions, ConfusionMatrix, LabeledFeature, LoocvPrediction, Metric};
use crate::embedding::{default_max_lag, delay_embed, estimate_delay, DelayMethod, EmbeddingParams, DEFAULT_M};
use crate::error::{Error, Result};
use crate::models::{GenConfig, System};
use crate::par;
use crate::series::{load_csv, write_csv, MultiSeries};
use crate::shape::{shape_distribution, Normalization, ShapeConfig, ShapeDistribution, ShapeKind, DEFAULT_BINS, DEFAULT_SAMPLES};

/// SplitMix64 finalizer over `root + stream`.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a named instance; independent of the instance's position.
pub fn instance_seed(root: u64, id: &str) -> u64 {
    // FNV-1a
    let h = id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3));
    derive_seed(root, h)
}

/// Embedding delay: estimated per channel, or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauPolicy {
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for TauPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(TauPolicy::Auto);
        }
        match s.parse::<usize>() {
            Ok(t) if t > 0 => Ok(TauPolicy::Fixed(t)),
            _ => Err(Error::InvalidParameter(format!("tau must be 'auto' or a positive integer, got {s:?}"))),
        }
    }
}

/// Delay actually used for one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedTau {
    pub tau: usize,
    /// `None` when the delay was fixed by configuration.
    pub method: Option<DelayMethod>,
}

pub fn resolve_tau(series: &crate::series::TimeSeries, policy: TauPolicy) -> Result<ResolvedTau> {
    match policy {
        TauPolicy::Fixed(tau) => Ok(ResolvedTau { tau, method: None }),
        TauPolicy::Auto => {
            let est = estimate_delay(series, default_max_lag(series.len()))?;
            Ok(ResolvedTau {
                tau: est.tau,
                method: Some(est.method),
            })
        }
    }
}

/// Which features describe an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Shape(ShapeKind),
    Chaos,
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("chaos") {
            Ok(FeatureSet::Chaos)
        } else {
            s.parse().map(FeatureSet::Shape)
        }
    }
}

/// Shape-feature settings. `delta` and `gamma` fall back to the
/// embedding-derived defaults of [`ShapeConfig::new`] when unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeOptions {
    pub bins: usize,
    pub n_samples: usize,
    pub delta: Option<usize>,
    pub gamma: Option<f64>,
    pub normalization: Normalization,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            n_samples: DEFAULT_SAMPLES,
            delta: None,
            gamma: None,
            normalization: Normalization::MeanNormalized,
        }
    }
}

impl ShapeOptions {
    pub fn config(&self, kind: ShapeKind, embed: EmbeddingParams, seed: u64) -> ShapeConfig {
        let mut c = ShapeConfig::new(kind, embed).with_seed(seed);
        c.bins = self.bins;
        c.n_samples = self.n_samples;
        if let Some(d) = self.delta {
            c.delta = d;
        }
        if let Some(g) = self.gamma {
            c.gamma = g;
        }
        c.normalization = self.normalization;
        c
    }
}

/// Per-channel shape distributions with the delay resolved per channel.
pub fn series_distributions(
    series: &MultiSeries,
    m: usize,
    tau: TauPolicy,
    kind: ShapeKind,
    options: &ShapeOptions,
    seed: u64,
) -> Result<Vec<(ResolvedTau, ShapeDistribution)>> {
    par::map_range(series.n_channels(), |j| {
        let ch = &series.channels()[j];
        let run = || {
            let rt = resolve_tau(ch, tau)?;
            let embed = EmbeddingParams::new(m, rt.tau)?;
            let cfg = options.config(kind, embed, seed);
            let ps = delay_embed(ch, embed)?;
            Ok((rt, shape_distribution(&ps, &cfg)?))
        };
        run().map_err(|e: Error| e.in_channel(j))
    })
    .into_iter()
    .collect()
}

// ---------------------------------------------------------------------------
// length stability

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub system: System,
    pub lengths: Vec<usize>,
    pub tau: TauPolicy,
    /// `n` is ignored; the trajectory is generated at the longest length and
    /// each length takes its prefix.
    pub generator: GenConfig,
}

impl StabilityRun {
    /// Embedding delays and length sweeps of the model-system table.
    pub fn table_defaults(system: System) -> Self {
        let (lengths, tau) = match system {
            System::Lorenz => (vec![1000, 2000, 3000, 4000, 5000], 11),
            System::Rossler => (vec![400, 800, 1200, 1600, 2000], 8),
        };
        Self {
            system,
            lengths,
            tau: TauPolicy::Fixed(tau),
            generator: system.default_config(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub runs: Vec<StabilityRun>,
    pub m: usize,
    pub kind: ShapeKind,
    pub shape: ShapeOptions,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            runs: vec![
                StabilityRun::table_defaults(System::Lorenz),
                StabilityRun::table_defaults(System::Rossler),
            ],
            m: DEFAULT_M,
            kind: ShapeKind::D2,
            shape: ShapeOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEntry {
    pub system: System,
    pub length: usize,
    pub tau: ResolvedTau,
    pub distribution: ShapeDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub experiment: String,
    pub config: StabilityConfig,
    pub labels: Vec<String>,
    /// Symmetric χ² distances between the entries, in label order.
    pub distances: Vec<Vec<f64>>,
    pub max_within: Option<f64>,
    pub min_cross: Option<f64>,
    /// Whether every within-system distance is below every cross-system one.
    pub separated: Option<bool>,
    pub entries: Vec<StabilityEntry>,
}

pub fn run_stability(cfg: &StabilityConfig) -> Result<StabilityReport> {
    let mut jobs = Vec::new();
    for run in &cfg.runs {
        let longest = *run
            .lengths
            .iter()
            .max()
            .ok_or_else(|| Error::InvalidParameter(format!("no lengths for {}", run.system.name())))?;
        let gen = GenConfig {
            n: longest,
            ..run.generator.clone()
        };
        let traj = run.system.generate(&gen)?;
        let x = traj.channels()[0].clone();
        for &len in &run.lengths {
            jobs.push((run.system, len, run.tau, x.truncated(len)?));
        }
    }
    let entries = par::map_slice(&jobs, |(system, len, tau, x)| {
        let rt = resolve_tau(x, *tau)?;
        let embed = EmbeddingParams::new(cfg.m, rt.tau)?;
        let ps = delay_embed(x, embed)?;
        let dist = shape_distribution(&ps, &cfg.shape.config(cfg.kind, embed, cfg.seed))?;
        Ok(StabilityEntry {
            system: *system,
            length: *len,
            tau: rt,
            distribution: dist,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let n = entries.len();
    let mut distances = vec![vec![0.0; n]; n];
    let (mut max_within, mut min_cross): (Option<f64>, Option<f64>) = (None, None);
    for i in 0..n {
        for j in i + 1..n {
            let d = chi2_distance(&entries[i].distribution.mass, &entries[j].distribution.mass)?;
            distances[i][j] = d;
            distances[j][i] = d;
            if entries[i].system == entries[j].system {
                max_within = Some(max_within.map_or(d, |m| m.max(d)));
            } else {
                min_cross = Some(min_cross.map_or(d, |m| m.min(d)));
            }
        }
    }
    let separated = match (max_within, min_cross) {
        (Some(w), Some(c)) => Some(w < c),
        _ => None,
    };
    Ok(StabilityReport {
        experiment: "stability".into(),
        config: cfg.clone(),
        labels: entries
            .iter()
            .map(|e| format!("{}@{}", e.system.name(), e.length))
            .collect(),
        distances,
        max_within,
        min_cross,
        separated,
        entries,
    })
}

impl StabilityReport {
    /// Distance matrix as CSV with a label header and label column.
    pub fn distances_csv(&self) -> String {
        let mut out = format!("label,{}\n", self.labels.join(","));
        for (l, row) in self.labels.iter().zip(&self.distances) {
            let cells: Vec<String> = row.iter().map(|d| format!("{d:?}")).collect();
            out.push_str(&format!("{l},{}\n", cells.join(",")));
        }
        out
    }

    /// One row per bin: lower edge, upper edge, then each entry's mass.
    pub fn histograms_csv(&self) -> String {
        let mut out = format!("bin_lo,bin_hi,{}\n", self.labels.join(","));
        let Some(first) = self.entries.first() else {
            return out;
        };
        for b in 0..first.distribution.bins {
            let masses: Vec<String> = self.entries.iter().map(|e| format!("{:?}", e.distribution.mass[b])).collect();
            out.push_str(&format!(
                "{:?},{:?},{}\n",
                first.distribution.edges[b],
                first.distribution.edges[b + 1],
                masses.join(",")
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// classification

/// One labelled multichannel instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub id: String,
    pub label: String,
    pub series: MultiSeries,
    /// Generator seed for synthetic instances.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub per_class: usize,
    /// Inclusive length range per system.
    pub lorenz_lengths: (usize, usize),
    pub rossler_lengths: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            per_class: 20,
            lorenz_lengths: (1000, 5000),
            rossler_lengths: (400, 2000),
            seed: 0,
        }
    }
}

/// Observed x(t) of Lorenz and Rossler runs with random initial conditions
/// and random lengths.
///
/// Instances are kept in sample units (dt = 1), exactly as they reload after
/// [`export_dataset`]; the two systems' integration steps differ, so keeping
/// them would hand the classifier its label through the time scale.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<Vec<LabeledSeries>> {
    if spec.per_class == 0 {
        return Err(Error::InvalidParameter("per_class must be positive".into()));
    }
    let mut jobs = Vec::new();
    for (system, (lo, hi)) in [
        (System::Lorenz, spec.lorenz_lengths),
        (System::Rossler, spec.rossler_lengths),
    ] {
        if lo < 2 || lo > hi {
            return Err(Error::InvalidParameter(format!(
                "bad length range ({lo}, {hi}) for {}",
                system.name()
            )));
        }
        for i in 0..spec.per_class {
            jobs.push((system, lo, hi, format!("{}/{i:03}", system.name())));
        }
    }
    par::map_slice(&jobs, |(system, lo, hi, id)| {
        let seed = instance_seed(spec.seed, id);
        let n = ChaCha8Rng::seed_from_u64(seed).gen_range(*lo..=*hi);
        let traj = system.generate(&system.default_config(n).with_seed(seed))?;
        let x = MultiSeries::new(vec![traj.channels()[0].clone()])?
            .with_dt(1.0)?
            .with_label(system.name());
        Ok(LabeledSeries {
            id: id.clone(),
            label: system.name().into(),
            series: x,
            seed: Some(seed),
        })
    })
    .into_iter()
    .collect()
}

/// Writes `<dir>/<id>.csv` per instance; ids of the form `<label>/<name>`
/// give the layout [`load_dataset_dir`] reads.
pub fn export_dataset(data: &[LabeledSeries], dir: &Path) -> Result<()> {
    for inst in data {
        let path = dir.join(format!("{}.csv", inst.id));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        write_csv(&inst.series, &path)?;
    }
    Ok(())
}

/// True when the first line holds a cell that is not a number.
pub fn sniff_header(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let first = text.lines().next().unwrap_or("");
    Ok(first.split(',').any(|c| c.trim().parse::<f64>().is_err()))
}

/// Loads `<dir>/<label>/<instance>.csv`, sorted by label then file name.
pub fn load_dataset_dir(dir: &Path, has_header: Option<bool>) -> Result<Vec<LabeledSeries>> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    let mut classes: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    let mut out = Vec::new();
    for class in classes {
        let label = class.file_name().unwrap().to_string_lossy().into_owned();
        let mut files: Vec<PathBuf> = fs::read_dir(&class)
            .map_err(io_err(&class))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect();
        files.sort();
        for file in files {
            let header = match has_header {
                Some(h) => h,
                None => sniff_header(&file)?,
            };
            let series = load_csv(&file, header)?.with_label(label.clone());
            let stem = file.file_stem().unwrap().to_string_lossy();
            out.push(LabeledSeries {
                id: format!("{label}/{stem}"),
                label: label.clone(),
                series,
                seed: None,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::DegenerateDataset(format!("no CSV files under {}", dir.display())));
    }
    let labels: std::collections::BTreeSet<&str> = out.iter().map(|s| s.label.as_str()).collect();
    if labels.len() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "{} holds a single class",
            dir.display()
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Directory { path: PathBuf, has_header: Option<bool> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub data: DataSource,
    pub features: FeatureSet,
    pub metric: Metric,
    pub m: usize,
    pub tau: TauPolicy,
    pub shape: ShapeOptions,
    /// Root of the per-instance sampling seeds.
    pub seed: u64,
}

impl ClassifyConfig {
    pub fn synthetic(spec: SyntheticSpec) -> Self {
        Self {
            seed: spec.seed,
            data: DataSource::Synthetic(spec),
            features: FeatureSet::Shape(ShapeKind::D2),
            metric: Metric::Chi2,
            m: DEFAULT_M,
            tau: TauPolicy::Auto,
            shape: ShapeOptions::default(),
        }
    }

    /// χ² is defined for non-negative histograms only; the chaos vector is
    /// compared with L2.
    pub fn effective_metric(&self) -> Metric {
        match self.features {
            FeatureSet::Chaos => Metric::L2,
            FeatureSet::Shape(_) => self.metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub id: String,
    pub label: String,
    pub length: usize,
    pub generator_seed: Option<u64>,
    pub feature_seed: u64,
    pub taus: Vec<ResolvedTau>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub experiment: String,
    pub config: ClassifyConfig,
    pub metric_used: Metric,
    pub metric_convention: String,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub instances: Vec<InstanceSummary>,
    pub predictions: Vec<LoocvPrediction>,
}

/// Feature vector of one instance: channel features concatenated.
pub fn instance_features(
    inst: &LabeledSeries,
    cfg: &ClassifyConfig,
) -> Result<(LabeledFeature, InstanceSummary)> {
    let seed = instance_seed(cfg.seed, &inst.id);
    let (vector, taus) = match cfg.features {
        FeatureSet::Shape(kind) => {
            let dists = series_distributions(&inst.series, cfg.m, cfg.tau, kind, &cfg.shape, seed)?;
            let taus = dists.iter().map(|(t, _)| *t).collect();
            (dists.into_iter().flat_map(|(_, d)| d.mass).collect(), taus)
        }
        FeatureSet::Chaos => {
            let per = par::map_range(inst.series.n_channels(), |j| {
                let ch = &inst.series.channels()[j];
                let run = || {
                    let rt = resolve_tau(ch, cfg.tau)?;
                    let cf = chaos_feature_vector(ch, EmbeddingParams::new(cfg.m, rt.tau)?)?;
                    Ok((rt, cf.to_vec()))
                };
                run().map_err(|e: Error| e.in_channel(j))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let taus = per.iter().map(|(t, _)| *t).collect();
            (per.into_iter().flat_map(|(_, v)| v).collect(), taus)
        }
    };
    let feature = LabeledFeature::new(vector, inst.label.clone(), inst.id.clone())?;
    let summary = InstanceSummary {
        id: inst.id.clone(),
        label: inst.label.clone(),
        length: inst.series.len(),
        generator_seed: inst.seed,
        feature_seed: seed,
        taus,
    };
    Ok((feature, summary))
}

pub fn run_classify(cfg: &ClassifyConfig) -> Result<ClassifyReport> {
    let data = match &cfg.data {
        DataSource::Synthetic(spec) => synthetic_dataset(spec)?,
        DataSource::Directory { path, has_header } => load_dataset_dir(path, *has_header)?,
    };
    classify_instances(&data, cfg)
}

pub fn classify_instances(data: &[LabeledSeries], cfg: &ClassifyConfig) -> Result<ClassifyReport> {
    let extracted = par::map_slice(data, |inst| {
        instance_features(inst, cfg).map_err(|e| match e {
            Error::Channel { .. } | Error::Io { .. } => e,
            other => Error::InvalidSeries(format!("{}: {other}", inst.id)),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (features, instances): (Vec<_>, Vec<_>) = extracted.into_iter().unzip();
    let metric = cfg.effective_metric();
    let predictions = loocv_predictions(&features, metric)?;
    let confusion = ConfusionMatrix::from_pairs(
        predictions
            .iter()
            .map(|p| (p.truth.as_str(), p.predicted.label.as_str())),
    );
    Ok(ClassifyReport {
        experiment: "classify".into(),
        config: cfg.clone(),
        metric_used: metric,
        metric_convention: metric.convention().into(),
        accuracy: confusion.accuracy,
        confusion,
        instances,
        predictions,
    })
}

/// Either experiment's report, tagged by its `experiment` field on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentReport {
    Stability(StabilityReport),
    Classify(ClassifyReport),
}

impl ExperimentReport {
    /// Reruns the experiment from the report's echoed configuration.
    pub fn replay(&self) -> Result<ExperimentReport> {
        Ok(match self {
            ExperimentReport::Stability(r) => ExperimentReport::Stability(run_stability(&r.config)?),
            ExperimentReport::Classify(r) => ExperimentReport::Classify(run_classify(&r.config)?),
        })
    }
}

impl ExperimentReport {
    /// Pretty JSON; field order follows the struct definitions.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            row: e.line() as u64,
            column: e.column(),
            message: format!("not a report: {e}"),
        })
    }
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_artifact(path: &Path, text: &str) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(text.as_bytes()).map_err(io_err)
}

/// Instance counts per label.
pub fn class_counts(data: &[LabeledSeries]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for d in data {
        *out.entry(d.label.clone()).or_insert(0) += 1;
    }
    out
}
