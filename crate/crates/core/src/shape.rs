//! Shape distributions of a reconstructed attractor.
//!
//! A shape function (distance to the centroid, pairwise distance, root
//! triangle area, or a time-local variant of the pairwise distance) is
//! evaluated on randomly drawn points and the values are binned into a
//! fixed-width histogram.
//!
//! Sampling is split into fixed-size chunks, each drawing from its own
//! ChaCha stream keyed by `(seed, chunk)`. Output is therefore identical
//! whether chunks run on one thread or many.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{delay_embed, euclidean, EmbeddingParams, PhaseSpace};
use crate::error::{Error, Result};
use crate::par;
use crate::series::MultiSeries;

pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Upper edge of the mean-normalized binning range, in units of the mean.
pub const NORMALIZED_RANGE: f64 = 4.0;
/// Largest phase space `exhaustive_d2` will enumerate.
pub const EXHAUSTIVE_LIMIT: usize = 5000;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapeKind {
    D1,
    D2,
    D3,
    DT1,
    DT2,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::D1,
        ShapeKind::D2,
        ShapeKind::D3,
        ShapeKind::DT1,
        ShapeKind::DT2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::D1 => "D1",
            ShapeKind::D2 => "D2",
            ShapeKind::D3 => "D3",
            ShapeKind::DT1 => "DT1",
            ShapeKind::DT2 => "DT2",
        }
    }
}

impl std::fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown shape function {s:?}")))
    }
}

/// Binning policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Values divided by their mean, binned over `[0, 4]`, overflow clamped
    /// into the last bin.
    MeanNormalized,
    /// Values binned over `[0, max]`.
    RawRange,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-normalized" | "mean" => Ok(Normalization::MeanNormalized),
            "raw-range" | "raw" => Ok(Normalization::RawRange),
            other => Err(Error::InvalidParameter(format!("unknown normalization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeConfig {
    pub kind: ShapeKind,
    pub n_samples: usize,
    pub bins: usize,
    /// DT1 time window, in samples.
    pub delta: usize,
    /// DT2 decay per sample of time separation.
    pub gamma: f64,
    pub seed: u64,
    pub normalization: Normalization,
}

impl ShapeConfig {
    /// Defaults for phase spaces built with `embed`: the DT1 window spans two
    /// embedding windows and the DT2 weight falls to 1/e over one.
    pub fn new(kind: ShapeKind, embed: EmbeddingParams) -> Self {
        let window = embed.window().max(1);
        Self {
            kind,
            n_samples: DEFAULT_SAMPLES,
            bins: DEFAULT_BINS,
            delta: 2 * window,
            gamma: 1.0 / window as f64,
            seed: 0,
            normalization: Normalization::MeanNormalized,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_kind(mut self, kind: ShapeKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.n_samples == 0 || self.delta == 0 {
            return Err(Error::InvalidParameter(
                "bins, n_samples and delta must be positive".into(),
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be a non-negative number, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Normalized histogram of shape-function values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDistribution {
    pub kind: ShapeKind,
    pub bins: usize,
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
    pub sample_count: usize,
    pub seed: u64,
    pub normalization: Normalization,
    /// Set when every sample was zero and the mass was put in bin 0.
    pub degenerate: bool,
    pub delta: usize,
    pub gamma: f64,
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn distinct_pair(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let i = rng.gen_range(0..n);
    let mut j = rng.gen_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

fn distinct_triple(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize, usize) {
    let (i, j) = distinct_pair(rng, n);
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let mut k = rng.gen_range(0..n - 2);
    if k >= lo {
        k += 1;
    }
    if k >= hi {
        k += 1;
    }
    (i, j, k)
}

/// Square root of the area of the triangle `abc`, in any dimension.
pub fn root_triangle_area(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let (mut uu, mut vv, mut uv) = (0.0, 0.0, 0.0);
    for d in 0..a.len() {
        let u = b[d] - a[d];
        let v = c[d] - a[d];
        uu += u * u;
        vv += v * v;
        uv += u * v;
    }
    (0.5 * (uu * vv - uv * uv).max(0.0).sqrt()).sqrt()
}

/// Pairs `(i, j)`, `i < j`, with `t[j] - t[i] <= delta`, indexed by a
/// cumulative count so a uniform draw maps straight to a pair.
struct WindowPairs {
    /// `cum[i]` = admissible pairs whose first index is below `i`.
    cum: Vec<u64>,
    /// Number of partners after `i`.
    span: Vec<usize>,
}

impl WindowPairs {
    fn new(time_index: &[usize], delta: usize) -> Self {
        let n = time_index.len();
        let mut span = vec![0; n];
        let mut hi = 0;
        for i in 0..n {
            hi = hi.max(i + 1);
            while hi < n && time_index[hi] - time_index[i] <= delta {
                hi += 1;
            }
            span[i] = hi - i - 1;
        }
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0u64);
        for &s in &span {
            cum.push(cum.last().unwrap() + s as u64);
        }
        Self { cum, span }
    }

    fn total(&self) -> u64 {
        *self.cum.last().unwrap()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let r = rng.gen_range(0..self.total());
        // first i with cum[i + 1] > r
        let i = self.cum.partition_point(|&c| c <= r) - 1;
        let offset = (r - self.cum[i]) as usize;
        debug_assert!(offset < self.span[i]);
        (i, i + 1 + offset)
    }
}

/// Draws `config.n_samples` values of the configured shape function.
pub fn sample_shape(ps: &PhaseSpace, config: &ShapeConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let n = ps.len();
    let need = match config.kind {
        ShapeKind::D1 => 1,
        ShapeKind::D2 | ShapeKind::DT1 | ShapeKind::DT2 => 2,
        ShapeKind::D3 => 3,
    };
    if n < need {
        return Err(Error::InsufficientPoints(format!(
            "{} needs {need} points, phase space has {n}",
            config.kind
        )));
    }
    let centroid = match config.kind {
        ShapeKind::D1 => ps.centroid(),
        _ => Vec::new(),
    };
    let window = match config.kind {
        ShapeKind::DT1 => {
            let w = WindowPairs::new(ps.time_index(), config.delta);
            if w.total() == 0 {
                return Err(Error::InsufficientPoints(format!(
                    "no point pair lies within delta = {}",
                    config.delta
                )));
            }
            Some(w)
        }
        _ => None,
    };
    let t = ps.time_index();

    let n_chunks = config.n_samples.div_ceil(CHUNK);
    let chunks = par::map_range(n_chunks, |c| {
        let mut rng = chunk_rng(config.seed, c);
        let len = CHUNK.min(config.n_samples - c * CHUNK);
        (0..len)
            .map(|_| match config.kind {
                ShapeKind::D1 => euclidean(ps.point(rng.gen_range(0..n)), &centroid),
                ShapeKind::D2 => {
                    let (i, j) = distinct_pair(&mut rng, n);
                    ps.distance(i, j)
                }
                ShapeKind::D3 => {
                    let (i, j, k) = distinct_triple(&mut rng, n);
                    root_triangle_area(ps.point(i), ps.point(j), ps.point(k))
                }
                ShapeKind::DT1 => {
                    let (i, j) = window.as_ref().expect("window built for DT1").draw(&mut rng);
                    ps.distance(i, j)
                }
                ShapeKind::DT2 => {
                    let (i, j) = distinct_pair(&mut rng, n);
                    let gap = t[i].abs_diff(t[j]) as f64;
                    (-config.gamma * gap).exp() * ps.distance(i, j)
                }
            })
            .collect::<Vec<f64>>()
    });
    Ok(chunks.concat())
}

/// Bins non-negative samples under the configured normalization.
pub fn build_histogram(samples: &[f64], config: &ShapeConfig) -> Result<ShapeDistribution> {
    if config.bins == 0 {
        return Err(Error::InvalidParameter("bins must be positive".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples to bin".into()));
    }
    if let Some(i) = samples.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "sample {i} is {}, expected a finite non-negative value",
            samples[i]
        )));
    }
    let b = config.bins;
    let (scale, upper) = match config.normalization {
        Normalization::MeanNormalized => {
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            (mean, NORMALIZED_RANGE)
        }
        Normalization::RawRange => {
            let max = samples.iter().copied().fold(0.0, f64::max);
            (max, 1.0)
        }
    };
    let edge_top = match config.normalization {
        Normalization::MeanNormalized => NORMALIZED_RANGE,
        Normalization::RawRange if scale > 0.0 => scale,
        Normalization::RawRange => 1.0,
    };
    let edges: Vec<f64> = (0..=b).map(|k| edge_top * k as f64 / b as f64).collect();

    let mut counts = vec![0usize; b];
    let degenerate = scale <= 0.0;
    if degenerate {
        counts[0] = samples.len();
    } else {
        let width = upper / b as f64;
        for v in samples {
            let idx = ((v / scale) / width).floor() as usize;
            counts[idx.min(b - 1)] += 1;
        }
    }
    let total = samples.len() as f64;
    Ok(ShapeDistribution {
        kind: config.kind,
        bins: b,
        edges,
        mass: counts.iter().map(|&c| c as f64 / total).collect(),
        sample_count: samples.len(),
        seed: config.seed,
        normalization: config.normalization,
        degenerate,
        delta: config.delta,
        gamma: config.gamma,
    })
}

/// Sampled shape function binned into its distribution.
pub fn shape_distribution(ps: &PhaseSpace, config: &ShapeConfig) -> Result<ShapeDistribution> {
    let samples = sample_shape(ps, config)?;
    build_histogram(&samples, config)
}

/// Pairwise-distance distribution over every unordered pair of distinct
/// points. Used as the reference the sampled D2 must converge to.
pub fn exhaustive_d2(ps: &PhaseSpace, config: &ShapeConfig) -> Result<ShapeDistribution> {
    let n = ps.len();
    if n < 2 {
        return Err(Error::InsufficientPoints("need at least two points".into()));
    }
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "{n} points exceed the exhaustive limit of {EXHAUSTIVE_LIMIT}"
        )));
    }
    let rows = par::map_range(n, |i| (i + 1..n).map(|j| ps.distance(i, j)).collect::<Vec<_>>());
    let mut hist = build_histogram(&rows.concat(), &config.with_kind(ShapeKind::D2))?;
    hist.seed = 0;
    Ok(hist)
}

/// Half the L1 distance between two mass vectors.
pub fn total_variation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Per-channel distributions of a multichannel series.
pub fn channel_distributions(
    series: &MultiSeries,
    embed: EmbeddingParams,
    config: &ShapeConfig,
) -> Result<Vec<ShapeDistribution>> {
    par::map_range(series.n_channels(), |j| {
        let ch = &series.channels()[j];
        delay_embed(ch, embed)
            .and_then(|ps| shape_distribution(&ps, config))
            .map_err(|e| e.in_channel(j))
    })
    .into_iter()
    .collect()
}

/// Channel distributions concatenated in channel order: `channels * bins`
/// values.
pub fn feature_vector(series: &MultiSeries, embed: EmbeddingParams, config: &ShapeConfig) -> Result<Vec<f64>> {
    Ok(channel_distributions(series, embed, config)?
        .into_iter()
        .flat_map(|d| d.mass)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ShapeKind) -> ShapeConfig {
        ShapeConfig::new(kind, EmbeddingParams::new(3, 1).unwrap())
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("dt2".parse::<ShapeKind>().unwrap(), ShapeKind::DT2);
        assert!("D4".parse::<ShapeKind>().is_err());
        assert_eq!(
            "raw-range".parse::<Normalization>().unwrap(),
            Normalization::RawRange
        );
    }

    #[test]
    fn repeated_point_gives_zero_d2() {
        let ps = PhaseSpace::from_points(&vec![vec![1.0, 2.0, 3.0]; 10]).unwrap();
        let s = sample_shape(&ps, &cfg(ShapeKind::D2)).unwrap();
        assert_eq!(s.len(), DEFAULT_SAMPLES);
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn d1_on_two_points_is_half_distance() {
        let ps = PhaseSpace::from_points(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let s = sample_shape(&ps, &cfg(ShapeKind::D1)).unwrap();
        assert!(s.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn d3_collinear_and_right_triangle() {
        let line = PhaseSpace::from_points(&[vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0], vec![3.0, 3.0, 3.0]]).unwrap();
        let s = sample_shape(&line, &cfg(ShapeKind::D3)).unwrap();
        assert!(s.iter().all(|&v| v.abs() < 1e-6));

        let tri = PhaseSpace::from_points(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let s = sample_shape(&tri, &cfg(ShapeKind::D3)).unwrap();
        assert!(s.iter().all(|&v| (v - 0.5f64.sqrt()).abs() < 1e-12));
    }

    #[test]
    fn too_few_points() {
        let one = PhaseSpace::from_points(&[vec![0.0]]).unwrap();
        assert!(sample_shape(&one, &cfg(ShapeKind::D1)).is_ok());
        assert!(sample_shape(&one, &cfg(ShapeKind::D2)).is_err());
        let two = PhaseSpace::from_points(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(sample_shape(&two, &cfg(ShapeKind::D3)).is_err());
        assert!(exhaustive_d2(&one, &cfg(ShapeKind::D2)).is_err());
    }

    #[test]
    fn dt2_without_decay_is_d2() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos()]).collect();
        let ps = PhaseSpace::from_points(&pts).unwrap();
        let mut c = cfg(ShapeKind::DT2).with_seed(9);
        c.gamma = 0.0;
        let a = sample_shape(&ps, &c).unwrap();
        let b = sample_shape(&ps, &c.with_kind(ShapeKind::D2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_pairs_enumerate_exactly() {
        let t: Vec<usize> = (0..7).collect();
        let w = WindowPairs::new(&t, 2);
        // each i pairs with up to two successors: 2*5 + 1 + 0
        assert_eq!(w.total(), 11);
        let mut rng = chunk_rng(1, 0);
        for _ in 0..1000 {
            let (i, j) = w.draw(&mut rng);
            assert!(i < j && j - i <= 2 && j < 7);
        }
        assert_eq!(WindowPairs::new(&t, 100).total(), 21);
    }

    #[test]
    fn dt1_needs_a_pair_in_window() {
        let ps = PhaseSpace::from_points(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let mut c = cfg(ShapeKind::DT1);
        c.delta = 1;
        let s = sample_shape(&ps, &c).unwrap();
        assert!(s.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn equal_samples_land_in_bin_twelve() {
        let h = build_histogram(&[2.5; 100], &cfg(ShapeKind::D2)).unwrap();
        assert_eq!(h.mass.len(), 50);
        assert_eq!(h.mass[12], 1.0);
        assert!(!h.degenerate);
        assert_eq!(h.edges.len(), 51);
        assert_eq!(h.edges[50], 4.0);
    }

    #[test]
    fn zero_samples_are_degenerate() {
        let h = build_histogram(&[0.0, 0.0, 0.0], &cfg(ShapeKind::D2)).unwrap();
        assert!(h.degenerate);
        assert_eq!(h.mass[0], 1.0);
        assert_eq!(h.mass.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn histogram_rejects_bad_samples() {
        assert!(build_histogram(&[], &cfg(ShapeKind::D2)).is_err());
        assert!(build_histogram(&[1.0, -1.0], &cfg(ShapeKind::D2)).is_err());
        assert!(build_histogram(&[1.0, f64::NAN], &cfg(ShapeKind::D2)).is_err());
    }

    #[test]
    fn exhaustive_three_points_raw_range() {
        let ps = PhaseSpace::from_points(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let mut c = cfg(ShapeKind::D2);
        c.normalization = Normalization::RawRange;
        let h = exhaustive_d2(&ps, &c).unwrap();
        assert_eq!(h.sample_count, 3);
        assert!((h.mass[25] - 2.0 / 3.0).abs() < 1e-12);
        assert!((h.mass[49] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_d2_fills_one_bin() {
        let ps = PhaseSpace::from_points(&[vec![0.0, 1.0], vec![2.0, 5.0]]).unwrap();
        let h = shape_distribution(&ps, &cfg(ShapeKind::D2)).unwrap();
        assert_eq!(h.mass.iter().filter(|&&m| m > 0.0).count(), 1);
    }

    #[test]
    fn invalid_config() {
        let mut c = cfg(ShapeKind::DT2);
        c.gamma = -1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(ShapeKind::D2);
        c.bins = 0;
        assert!(c.validate().is_err());
    }
}
