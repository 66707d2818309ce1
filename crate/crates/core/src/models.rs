//! Lorenz and Rossler trajectories by fixed-step fourth-order Runge-Kutta.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{MultiSeries, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 16.0,
            rho: 45.92,
            beta: 4.0,
        }
    }
}

impl LorenzParams {
    pub fn derivative(&self, s: &[f64; 3]) -> [f64; 3] {
        let [x, y, z] = *s;
        [
            self.sigma * (y - x),
            x * (self.rho - z) - y,
            x * y - self.beta * z,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosslerParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for RosslerParams {
    fn default() -> Self {
        Self {
            a: 0.15,
            b: 0.20,
            c: 10.0,
        }
    }
}

impl RosslerParams {
    pub fn derivative(&self, s: &[f64; 3]) -> [f64; 3] {
        let [x, y, z] = *s;
        [-y - z, x + self.a * y, self.b + z * (x - self.c)]
    }
}

/// Integration step, kept length, discarded transient and initial condition.
///
/// When `seed` is set the initial condition is drawn uniformly from the
/// system's box instead of `ic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub dt: f64,
    pub n: usize,
    pub transient: usize,
    pub ic: [f64; 3],
    pub seed: Option<u64>,
}

pub const LORENZ_DT: f64 = 0.01;
pub const ROSSLER_DT: f64 = 0.12;
pub const DEFAULT_TRANSIENT: usize = 1000;

impl GenConfig {
    pub fn lorenz(n: usize) -> Self {
        Self {
            dt: LORENZ_DT,
            n,
            transient: DEFAULT_TRANSIENT,
            ic: [1.0, 1.0, 1.0],
            seed: None,
        }
    }

    pub fn rossler(n: usize) -> Self {
        Self {
            dt: ROSSLER_DT,
            n,
            transient: DEFAULT_TRANSIENT,
            ic: [1.0, 1.0, 1.0],
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("n must be at least 2, got {}", self.n)));
        }
        if self.ic.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("initial condition must be finite".into()));
        }
        Ok(())
    }
}

/// One classic RK4 step of `f` from `y` over `h`.
pub fn rk4_step<const D: usize>(f: impl Fn(&[f64; D]) -> [f64; D], y: &[f64; D], h: f64) -> [f64; D] {
    let shift = |base: &[f64; D], k: &[f64; D], s: f64| {
        let mut out = *base;
        for (o, k) in out.iter_mut().zip(k) {
            *o += s * k;
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&shift(y, &k1, h / 2.0));
    let k3 = f(&shift(y, &k2, h / 2.0));
    let k4 = f(&shift(y, &k3, h));
    let mut out = *y;
    for i in 0..D {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Advances `y0` by `steps` RK4 steps of size `h`.
pub fn rk4_integrate<const D: usize>(
    f: impl Fn(&[f64; D]) -> [f64; D],
    y0: [f64; D],
    h: f64,
    steps: usize,
) -> [f64; D] {
    (0..steps).fold(y0, |y, _| rk4_step(&f, &y, h))
}

fn trajectory(
    f: impl Fn(&[f64; 3]) -> [f64; 3],
    ic: [f64; 3],
    g: &GenConfig,
) -> Result<MultiSeries> {
    let mut cols: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(g.n));
    let mut state = ic;
    let total = g.transient + g.n;
    for step in 0..total {
        if step >= g.transient {
            for (c, v) in cols.iter_mut().zip(state) {
                c.push(v);
            }
        }
        if step + 1 < total {
            state = rk4_step(&f, &state, g.dt);
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: step + 1 });
            }
        }
    }
    let channels = cols
        .into_iter()
        .zip(["x", "y", "z"])
        .map(|(c, name)| Ok(TimeSeries::new(c, Some(g.dt))?.with_name(name)))
        .collect::<Result<Vec<_>>>()?;
    MultiSeries::new(channels)
}

fn seeded_ic(seed: u64, lo: [f64; 3], hi: [f64; 3]) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::array::from_fn(|i| rng.gen_range(lo[i]..hi[i]))
}

/// Initial condition actually used for a Lorenz run.
pub fn lorenz_ic(g: &GenConfig) -> [f64; 3] {
    match g.seed {
        Some(seed) => seeded_ic(seed, [-10.0; 3], [10.0; 3]),
        None => g.ic,
    }
}

/// Initial condition actually used for a Rossler run.
pub fn rossler_ic(g: &GenConfig) -> [f64; 3] {
    match g.seed {
        Some(seed) => seeded_ic(seed, [-5.0, -5.0, 0.0], [5.0, 5.0, 5.0]),
        None => g.ic,
    }
}

/// Channels x, y, z of the Lorenz system.
pub fn lorenz_generate(p: &LorenzParams, g: &GenConfig) -> Result<MultiSeries> {
    g.validate()?;
    trajectory(|s| p.derivative(s), lorenz_ic(g), g).map(|s| s.with_label("lorenz"))
}

/// Channels x, y, z of the Rossler system.
pub fn rossler_generate(p: &RosslerParams, g: &GenConfig) -> Result<MultiSeries> {
    g.validate()?;
    trajectory(|s| p.derivative(s), rossler_ic(g), g).map(|s| s.with_label("rossler"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Lorenz,
    Rossler,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::Lorenz => "lorenz",
            System::Rossler => "rossler",
        }
    }

    pub fn default_config(self, n: usize) -> GenConfig {
        match self {
            System::Lorenz => GenConfig::lorenz(n),
            System::Rossler => GenConfig::rossler(n),
        }
    }

    /// Initial condition `generate` starts from.
    pub fn initial_condition(self, g: &GenConfig) -> [f64; 3] {
        match self {
            System::Lorenz => lorenz_ic(g),
            System::Rossler => rossler_ic(g),
        }
    }

    /// Trajectory with the system's default parameters.
    pub fn generate(self, g: &GenConfig) -> Result<MultiSeries> {
        match self {
            System::Lorenz => lorenz_generate(&LorenzParams::default(), g),
            System::Rossler => rossler_generate(&RosslerParams::default(), g),
        }
    }
}

impl std::str::FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lorenz" => Ok(System::Lorenz),
            "rossler" | "rössler" => Ok(System::Rossler),
            other => Err(Error::InvalidParameter(format!("unknown system {other:?}"))),
        }
    }
}
