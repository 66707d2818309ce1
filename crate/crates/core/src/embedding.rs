//! Delay embedding and estimation of its parameters.
//!
//! The delay comes from the first zero crossing of the autocorrelation, the
//! dimension from the false-nearest-neighbour fraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::series::TimeSeries;

pub const DEFAULT_M: usize = 3;
pub const DEFAULT_FNN_RTOL: f64 = 15.0;
pub const DEFAULT_FNN_ATOL: f64 = 2.0;
pub const DEFAULT_FNN_THRESHOLD: f64 = 0.01;
/// Neighbour distances below this multiple of the series deviation count as
/// roundoff when testing distance growth.
pub const FNN_DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub m: usize,
    pub tau: usize,
}

impl EmbeddingParams {
    pub fn new(m: usize, tau: usize) -> Result<Self> {
        if m == 0 || tau == 0 {
            return Err(Error::InvalidParameter(format!(
                "embedding needs m >= 1 and tau >= 1, got m={m}, tau={tau}"
            )));
        }
        Ok(Self { m, tau })
    }

    /// Samples spanned by one delay vector, minus one.
    pub fn window(&self) -> usize {
        (self.m - 1) * self.tau
    }
}

/// Reconstructed phase space: `len()` points of dimension `dim()`, stored
/// row-major, each tagged with the start index of its delay vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpace {
    data: Vec<f64>,
    dim: usize,
    time_index: Vec<usize>,
    params: EmbeddingParams,
    source_len: usize,
}

impl PhaseSpace {
    /// Wraps explicit points; time indices are 0.. in order.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InsufficientPoints("phase space needs at least one point".into()))?;
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidParameter("points must share a nonzero dimension".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("points must be finite".into()));
        }
        Ok(Self {
            data: points.concat(),
            dim,
            time_index: (0..points.len()).collect(),
            params: EmbeddingParams { m: dim, tau: 1 },
            source_len: points.len() + dim - 1,
        })
    }

    pub fn len(&self) -> usize {
        self.time_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_index.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn time_index(&self) -> &[usize] {
        &self.time_index
    }

    pub fn params(&self) -> EmbeddingParams {
        self.params
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }

    /// Arithmetic mean of the points.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.points() {
            for (c, v) in c.iter_mut().zip(p) {
                *c += v;
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    /// Largest pairwise distance, by exhaustive search.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        par::map_range(n, |i| {
            (i + 1..n).map(|j| self.distance(i, j)).fold(0.0, f64::max)
        })
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Point `k` is `[x(k), x(k+tau), ..., x(k+(m-1)tau)]`.
pub fn delay_embed(series: &TimeSeries, params: EmbeddingParams) -> Result<PhaseSpace> {
    let n = series.len();
    let window = params.window();
    if n <= window {
        return Err(Error::TooShort {
            needed: window + 1,
            have: n,
        });
    }
    let count = n - window;
    let x = series.samples();
    let mut data = Vec::with_capacity(count * params.m);
    for k in 0..count {
        data.extend((0..params.m).map(|d| x[k + d * params.tau]));
    }
    Ok(PhaseSpace {
        data,
        dim: params.m,
        time_index: (0..count).collect(),
        params,
        source_len: n,
    })
}

/// Biased, mean-removed autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let x = series.samples();
    let n = x.len();
    if max_lag >= n {
        return Err(Error::InvalidParameter(format!(
            "max_lag {max_lag} must be below the series length {n}"
        )));
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return Err(Error::ZeroVariance);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if c0 <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|lag| {
            if lag == 0 {
                return 1.0;
            }
            let c: f64 = centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum();
            c / c0
        })
        .collect())
}

/// How a delay estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMethod {
    ZeroCrossing,
    FirstMinimum,
    MaxLag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayEstimate {
    pub tau: usize,
    pub method: DelayMethod,
}

/// Default autocorrelation horizon for a series of length `n`.
pub fn default_max_lag(n: usize) -> usize {
    (n / 4).max(1)
}

/// Delay from the first zero crossing of the autocorrelation.
///
/// The crossing lag is the one of the bracketing pair (last positive, first
/// non-positive) whose value is closer to zero. Without a crossing the first
/// local minimum is used, and failing that `max_lag`.
pub fn estimate_delay(series: &TimeSeries, max_lag: usize) -> Result<DelayEstimate> {
    if max_lag == 0 {
        return Err(Error::InvalidParameter("max_lag must be positive".into()));
    }
    let acf = autocorrelation(series, max_lag)?;
    if let Some(lag) = (1..=max_lag).find(|&l| acf[l] <= 0.0) {
        let tau = if lag > 1 && acf[lag - 1].abs() < acf[lag].abs() {
            lag - 1
        } else {
            lag
        };
        return Ok(DelayEstimate {
            tau,
            method: DelayMethod::ZeroCrossing,
        });
    }
    if let Some(lag) = (1..max_lag).find(|&l| acf[l] < acf[l - 1] && acf[l] <= acf[l + 1]) {
        return Ok(DelayEstimate {
            tau: lag,
            method: DelayMethod::FirstMinimum,
        });
    }
    Ok(DelayEstimate {
        tau: max_lag,
        method: DelayMethod::MaxLag,
    })
}

/// False-nearest-neighbour fraction for each m in `1..=m_max`.
///
/// A neighbour found at dimension m is false when the added coordinate
/// separates the pair by more than `r_tol` times their distance, or when the
/// extended distance exceeds `a_tol` times the series standard deviation.
pub fn fnn_fractions(
    series: &TimeSeries,
    tau: usize,
    m_max: usize,
    r_tol: f64,
    a_tol: f64,
) -> Result<Vec<f64>> {
    if tau == 0 || m_max == 0 {
        return Err(Error::InvalidParameter("tau and m_max must be positive".into()));
    }
    if !(r_tol > 0.0 && a_tol > 0.0) {
        return Err(Error::InvalidParameter("r_tol and a_tol must be positive".into()));
    }
    let x = series.samples();
    let n = x.len();
    if n < m_max * tau + 2 {
        return Err(Error::TooShort {
            needed: m_max * tau + 2,
            have: n,
        });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if sd == 0.0 {
        return Err(Error::ZeroVariance);
    }

    let fractions = (1..=m_max)
        .map(|m| {
            // points that still exist one dimension up
            let count = n - m * tau;
            let sq_dist = |i: usize, j: usize| -> f64 {
                (0..m).map(|d| (x[i + d * tau] - x[j + d * tau]).powi(2)).sum()
            };
            let flags = par::map_range(count, |i| {
                let (mut best, mut best_d2) = (usize::MAX, f64::INFINITY);
                for j in (0..count).filter(|&j| j != i) {
                    let d2 = sq_dist(i, j);
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = j;
                    }
                }
                let r = best_d2.sqrt().max(FNN_DISTANCE_FLOOR * sd);
                let extra = (x[i + m * tau] - x[best + m * tau]).abs();
                let grows = extra / r > r_tol;
                let far = (best_d2 + extra * extra).sqrt() / sd > a_tol;
                grows || far
            });
            flags.iter().filter(|&&f| f).count() as f64 / count as f64
        })
        .collect();
    Ok(fractions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub m: usize,
    pub converged: bool,
}

/// Smallest m whose false-neighbour fraction is at or under `threshold`;
/// otherwise the m of the smallest fraction, flagged as not converged.
pub fn estimate_dimension(fractions: &[f64], threshold: f64) -> Result<DimensionEstimate> {
    if fractions.is_empty() {
        return Err(Error::InvalidParameter("no fractions given".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside (0,1)")));
    }
    if let Some(i) = fractions.iter().position(|&f| f <= threshold) {
        return Ok(DimensionEstimate {
            m: i + 1,
            converged: true,
        });
    }
    let argmin = fractions
        .iter()
        .enumerate()
        .fold(0, |best, (i, &f)| if f < fractions[best] { i } else { best });
    Ok(DimensionEstimate {
        m: argmin + 1,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(period: f64, n: usize) -> TimeSeries {
        TimeSeries::new((0..n).map(|t| (2.0 * PI * t as f64 / period).sin()).collect(), None).unwrap()
    }

    #[test]
    fn embeds_ramp() {
        let s = TimeSeries::new((0..10).map(f64::from).collect(), None).unwrap();
        let ps = delay_embed(&s, EmbeddingParams::new(3, 2).unwrap()).unwrap();
        assert_eq!(ps.len(), 6);
        assert_eq!(ps.point(0), &[0.0, 2.0, 4.0]);
        assert_eq!(ps.point(5), &[5.0, 7.0, 9.0]);
        assert_eq!(ps.time_index(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(ps.source_len(), 10);
    }

    #[test]
    fn m1_is_identity() {
        let s = TimeSeries::new(vec![3.0, 1.0, 4.0, 1.0, 5.0], None).unwrap();
        let ps = delay_embed(&s, EmbeddingParams::new(1, 7).unwrap()).unwrap();
        let flat: Vec<f64> = ps.points().flatten().copied().collect();
        assert_eq!(flat, s.samples());
    }

    #[test]
    fn too_short_to_embed() {
        let s = TimeSeries::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], None).unwrap();
        assert!(matches!(
            delay_embed(&s, EmbeddingParams::new(3, 3).unwrap()),
            Err(Error::TooShort { .. })
        ));
        assert!(EmbeddingParams::new(0, 1).is_err());
        assert!(EmbeddingParams::new(1, 0).is_err());
    }

    #[test]
    fn sine_autocorrelation_is_cosine() {
        let acf = autocorrelation(&sine(20.0, 4000), 40).unwrap();
        assert_eq!(acf[0], 1.0);
        for (lag, r) in acf.iter().enumerate() {
            let expect = (2.0 * PI * lag as f64 / 20.0).cos();
            assert!((r - expect).abs() < 0.02, "lag {lag}: {r} vs {expect}");
        }
        assert!(acf[5].abs() < 0.01);
    }

    #[test]
    fn constant_series_has_no_autocorrelation() {
        let s = TimeSeries::new(vec![0.1; 100], None).unwrap();
        assert!(matches!(autocorrelation(&s, 10), Err(Error::ZeroVariance)));
        assert!(matches!(estimate_delay(&s, 10), Err(Error::ZeroVariance)));
        assert!(autocorrelation(&sine(20.0, 100), 100).is_err());
    }

    #[test]
    fn sine_delay_is_quarter_period() {
        assert_eq!(estimate_delay(&sine(20.0, 2000), 500).unwrap().tau, 5);
        for p in 8..=64 {
            let est = estimate_delay(&sine(p as f64, 4000), 1000).unwrap();
            assert_eq!(est.tau, (p as f64 / 4.0).round() as usize, "period {p}");
            assert_eq!(est.method, DelayMethod::ZeroCrossing);
        }
    }

    #[test]
    fn delay_fallbacks() {
        // monotone decay, no crossing and no minimum
        let s = TimeSeries::new((0..200).map(|t| (t as f64).sqrt()).collect(), None).unwrap();
        let est = estimate_delay(&s, 3).unwrap();
        assert_eq!(est.method, DelayMethod::MaxLag);
        assert_eq!(est.tau, 3);
        // period-40 sine plus a large period-4 ripple dips before crossing
        let x: Vec<f64> = (0..4000)
            .map(|t| {
                let t = t as f64;
                (2.0 * PI * t / 400.0).sin() + 0.3 * (2.0 * PI * t / 4.0).sin()
            })
            .collect();
        let est = estimate_delay(&TimeSeries::new(x, None).unwrap(), 50).unwrap();
        assert_eq!(est.method, DelayMethod::FirstMinimum);
        assert_eq!(est.tau, 2);
    }

    #[test]
    fn dimension_selection() {
        let d = estimate_dimension(&[0.9, 0.004, 0.001], 0.01).unwrap();
        assert_eq!(d, DimensionEstimate { m: 2, converged: true });
        let d = estimate_dimension(&[0.5, 0.4, 0.3], 0.01).unwrap();
        assert_eq!(d, DimensionEstimate { m: 3, converged: false });
        assert!(estimate_dimension(&[], 0.01).is_err());
    }

    #[test]
    fn fnn_rejects_short_series() {
        let s = sine(20.0, 30);
        assert!(matches!(fnn_fractions(&s, 5, 6, 15.0, 2.0), Err(Error::TooShort { .. })));
        assert!(fnn_fractions(&s, 5, 2, 0.0, 2.0).is_err());
    }
}
