//! Classical chaotic invariants: largest Lyapunov exponent by nearest-neighbour
//! divergence (Rosenstein), correlation integral and correlation dimension.
//! Together they make the 10-number "Chaos" baseline feature.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::embedding::{delay_embed, EmbeddingParams, PhaseSpace};
use crate::error::{Error, Result};
use crate::par;
use crate::series::TimeSeries;

/// Floor applied to neighbour distances before taking logs.
pub const DISTANCE_FLOOR: f64 = 1e-12;
/// Number of radii in the baseline feature.
pub const N_RADII: usize = 8;
/// Fraction of the saturation rise that ends the linear fit region.
pub const SATURATION_FRACTION: f64 = 0.7;
/// Radii of the baseline correlation integral, as fractions of the diameter.
pub const INTEGRAL_RANGE: (f64, f64) = (0.05, 1.0);
/// Scaling region used for the baseline correlation dimension.
pub const DIMENSION_RANGE: (f64, f64) = (0.01, 0.1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LleConfig {
    /// Minimum temporal separation of a neighbour pair, in samples.
    pub theiler: usize,
    /// Number of divergence steps tracked.
    pub k_max: usize,
    /// Inclusive step range of the linear fit.
    pub fit_range: (usize, usize),
}

impl LleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theiler == 0 || self.k_max == 0 {
            return Err(Error::InvalidParameter("theiler and k_max must be positive".into()));
        }
        let (a, b) = self.fit_range;
        if a >= b || b >= self.k_max {
            return Err(Error::InvalidParameter(format!(
                "fit range ({a}, {b}) must be increasing and below k_max {}",
                self.k_max
            )));
        }
        Ok(())
    }
}

/// Mean period in samples: the reciprocal of the power-weighted mean
/// frequency of the spectrum.
///
/// Returns `None` when the spectrum is too flat to have a meaningful peak
/// (spectral flatness above one half, as for white noise).
pub fn mean_period(series: &TimeSeries) -> Option<usize> {
    let x = series.samples();
    let n = x.len();
    if n < 4 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm_sqr()).collect();
    let arith = power.iter().sum::<f64>() / power.len() as f64;
    if arith <= 0.0 {
        return None;
    }
    let geo = (power.iter().map(|p| p.max(f64::MIN_POSITIVE).ln()).sum::<f64>() / power.len() as f64).exp();
    if geo / arith > 0.5 {
        return None;
    }
    let weighted: f64 = power.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
    let mean_bin = weighted / power.iter().sum::<f64>();
    Some((n as f64 / mean_bin).round().max(1.0) as usize)
}

/// Theiler window for a series: its mean period, or `4 * tau` for a flat spectrum.
pub fn default_theiler(series: &TimeSeries, tau: usize) -> usize {
    mean_period(series).unwrap_or(4 * tau).max(1)
}

/// Index of each point's nearest neighbour more than `theiler` samples away.
fn nearest_neighbours(ps: &PhaseSpace, theiler: usize) -> Vec<Option<usize>> {
    let n = ps.len();
    let t = ps.time_index();
    par::map_range(n, |i| {
        let mut best = None;
        let mut best_d2 = f64::INFINITY;
        let p = ps.point(i);
        for j in 0..n {
            if t[i].abs_diff(t[j]) <= theiler {
                continue;
            }
            let d2: f64 = p.iter().zip(ps.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best_d2 {
                best_d2 = d2;
                best = Some(j);
            }
        }
        best
    })
}

/// Mean log distance between initially nearest neighbours after k steps,
/// for k in `0..k_max`.
pub fn divergence_curve(ps: &PhaseSpace, theiler: usize, k_max: usize) -> Result<Vec<f64>> {
    let n = ps.len();
    if theiler == 0 || k_max == 0 {
        return Err(Error::InvalidParameter("theiler and k_max must be positive".into()));
    }
    if n <= theiler + k_max + 1 {
        return Err(Error::InsufficientPoints(format!(
            "{n} points cannot support theiler {theiler} with {k_max} steps"
        )));
    }
    let nn = nearest_neighbours(ps, theiler);
    if nn.iter().all(Option::is_none) {
        return Err(Error::InsufficientPoints("no point has an admissible neighbour".into()));
    }
    let per_point = par::map_range(n, |i| {
        let mut sums = vec![0.0; k_max];
        let mut counts = vec![0usize; k_max];
        if let Some(j) = nn[i] {
            for k in 0..k_max {
                if i + k >= n || j + k >= n {
                    break;
                }
                sums[k] += ps.distance(i + k, j + k).max(DISTANCE_FLOOR).ln();
                counts[k] += 1;
            }
        }
        (sums, counts)
    });
    let mut sums = vec![0.0; k_max];
    let mut counts = vec![0usize; k_max];
    for (s, c) in &per_point {
        for k in 0..k_max {
            sums[k] += s[k];
            counts[k] += c[k];
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect())
}

/// Least-squares line through `(x, y)`; returns slope and R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(Error::Numerical("linear fit needs at least two points".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerical("linear fit with zero spread in x".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, r2))
}

/// Result of a Lyapunov fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LleEstimate {
    /// Per unit time.
    pub lambda1: f64,
    pub r_squared: f64,
    pub config: LleConfig,
    pub curve: Vec<f64>,
}

/// Slope of the divergence curve over `cfg.fit_range`, per unit time.
pub fn lle_rosenstein(ps: &PhaseSpace, cfg: &LleConfig, dt: f64) -> Result<LleEstimate> {
    cfg.validate()?;
    let curve = divergence_curve(ps, cfg.theiler, cfg.k_max)?;
    fit_curve(curve, *cfg, dt)
}

fn fit_curve(curve: Vec<f64>, cfg: LleConfig, dt: f64) -> Result<LleEstimate> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let (a, b) = cfg.fit_range;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (a..=b)
        .filter(|&k| curve[k].is_finite())
        .map(|k| (k as f64, curve[k]))
        .unzip();
    let (slope, r_squared) = linear_fit(&xs, &ys)?;
    Ok(LleEstimate {
        lambda1: slope / dt,
        r_squared,
        config: cfg,
        curve,
    })
}

/// Step at which the curve first covers `fraction` of its rise from the
/// start to its maximum.
pub fn saturation_step(curve: &[f64], fraction: f64) -> usize {
    let finite: Vec<(usize, f64)> = curve
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .collect();
    let Some(&(_, start)) = finite.first() else {
        return 0;
    };
    let top = finite.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let target = start + fraction * (top - start);
    finite
        .iter()
        .find(|&&(_, v)| v >= target)
        .map_or(0, |&(k, _)| k)
}

/// Lyapunov estimate with the Theiler window, horizon and fit region chosen
/// from the data: the window is the mean period, the horizon three mean
/// periods, and the fit runs from step 0 until the curve reaches 70% of its
/// saturation rise.
pub fn lle_auto(series: &TimeSeries, embed: EmbeddingParams) -> Result<LleEstimate> {
    let ps = delay_embed(series, embed)?;
    let theiler = default_theiler(series, embed.tau);
    let n = ps.len();
    if n < theiler + 4 {
        return Err(Error::InsufficientPoints(format!(
            "{n} points cannot support theiler window {theiler}"
        )));
    }
    let k_max = (3 * theiler).min(n - theiler - 2).max(2);
    let curve = divergence_curve(&ps, theiler, k_max)?;
    let k_lin = saturation_step(&curve, SATURATION_FRACTION).clamp(1, k_max - 1);
    let cfg = LleConfig {
        theiler,
        k_max,
        fit_range: (0, k_lin),
    };
    fit_curve(curve, cfg, series.dt())
}

/// Fraction of admissible pairs closer than each radius.
///
/// A pair `(i, j)` is admissible when its time indices differ by more than
/// `theiler`. The output follows the order of `radii`.
pub fn correlation_integral(ps: &PhaseSpace, radii: &[f64], theiler: usize) -> Result<Vec<f64>> {
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidParameter("radii must be positive and finite".into()));
    }
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| radii[i]).collect();

    let n = ps.len();
    let t = ps.time_index();
    let rows = par::map_range(n, |i| {
        // bucket b counts pairs with sorted[b-1] <= d < sorted[b]
        let mut buckets = vec![0u64; sorted.len() + 1];
        let mut total = 0u64;
        for j in i + 1..n {
            if t[i].abs_diff(t[j]) <= theiler {
                continue;
            }
            total += 1;
            let d = ps.distance(i, j);
            buckets[sorted.partition_point(|&r| r <= d)] += 1;
        }
        (buckets, total)
    });
    let mut buckets = vec![0u64; sorted.len() + 1];
    let mut total = 0u64;
    for (b, t) in rows {
        total += t;
        buckets.iter_mut().zip(b).for_each(|(a, b)| *a += b);
    }
    if total < 2 {
        return Err(Error::InsufficientPoints(format!(
            "{total} admissible pairs after theiler exclusion"
        )));
    }
    let mut out = vec![0.0; radii.len()];
    let mut cum = 0u64;
    for (b, &orig) in order.iter().enumerate() {
        cum += buckets[b];
        out[orig] = cum as f64 / total as f64;
    }
    Ok(out)
}

/// Slope of log C(r) against log r over the radii with 0 < C(r) < 1.
pub fn correlation_dimension(ps: &PhaseSpace, radii: &[f64], theiler: usize) -> Result<f64> {
    let c = correlation_integral(ps, radii, theiler)?;
    dimension_from_integral(radii, &c)
}

fn dimension_from_integral(radii: &[f64], c: &[f64]) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(c)
        .filter(|(_, &c)| c > 0.0 && c < 1.0)
        .map(|(r, c)| (r.ln(), c.ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::Numerical(format!(
            "only {} radii have a nontrivial correlation integral",
            xs.len()
        )));
    }
    Ok(linear_fit(&xs, &ys)?.0)
}

/// `count` radii spaced evenly in log between `lo` and `hi`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// The 10-number baseline: λ₁, correlation dimension and C(r) at 8 radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosFeatureVector {
    pub lambda1: f64,
    pub corr_dim: f64,
    pub corr_integral: Vec<f64>,
    pub radii: Vec<f64>,
    pub dimension_radii: Vec<f64>,
    pub theiler: usize,
    pub fit_range: (usize, usize),
    pub lle_r_squared: f64,
    pub embedding: EmbeddingParams,
}

impl ChaosFeatureVector {
    /// `[λ₁, corr_dim, C(r₁), …, C(r₈)]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + self.corr_integral.len());
        v.push(self.lambda1);
        v.push(self.corr_dim);
        v.extend_from_slice(&self.corr_integral);
        v
    }
}

/// Baseline chaos features of one scalar series.
///
/// The integral is reported at 8 radii log-spaced over 5%..100% of the
/// attractor diameter. The dimension is fitted over 8 radii spanning
/// 1%..10% of the diameter, where the integral still scales as a power law.
pub fn chaos_feature_vector(series: &TimeSeries, embed: EmbeddingParams) -> Result<ChaosFeatureVector> {
    let lle = lle_auto(series, embed)?;
    let ps = delay_embed(series, embed)?;
    let diameter = ps.diameter();
    if diameter <= 0.0 {
        return Err(Error::Numerical("attractor has zero diameter".into()));
    }
    let theiler = lle.config.theiler;
    let radii = log_spaced(INTEGRAL_RANGE.0 * diameter, INTEGRAL_RANGE.1 * diameter, N_RADII);
    let dim_radii = log_spaced(DIMENSION_RANGE.0 * diameter, DIMENSION_RANGE.1 * diameter, N_RADII);
    let corr_integral = correlation_integral(&ps, &radii, theiler)?;
    let corr_dim = correlation_dimension(&ps, &dim_radii, theiler)?;
    Ok(ChaosFeatureVector {
        lambda1: lle.lambda1,
        corr_dim,
        corr_integral,
        radii,
        dimension_radii: dim_radii,
        theiler,
        fit_range: lle.config.fit_range,
        lle_r_squared: lle.r_squared,
        embedding: embed,
    })
}
