//! Experiment configuration and scaling runs.
//!
//! A configuration is a flat `key = value` text file. Every row of a scaling
//! run is one `(ε, initial condition)` pair with its own ChaCha seed derived
//! from the master seed, so rows can run in any order and be resumed.
//!
//! ```text
//! system = quasi-convex
//! n = 2
//! epsilons = 1e-2, 1e-3
//! samples = 4
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dynamics::{drift_time, integrate, IntegratorConfig, TimeBudget};
use crate::error::{Error, Result};
use crate::restrain::{exponents, time_budget, try_restrain, RestrainConfig, RestrainOutcome};
use crate::series::{io, sup_distance, Domain, FourierTaylorSeries, HamiltonianSystem, Regularity};

/// First line of a scaling CSV; excluded from the data section.
pub const RUN_HEADER_PREFIX: &str = "# effstab scaling run started";

/// Builtin system families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// `½|I|² + ε cos 2π(θ_1 − θ_2)`
    QuasiConvex,
    /// `ω·I + ε cos 2πθ_1` with `ω = (1, g, g², …)`, `g = (√5 − 1)/2`.
    Linear,
    /// `½I_1² + I_1 I_2² + ε cos 2π(θ_1 + θ_2)`
    SteepToy,
    /// `½I² + ε cos 2πθ` in one degree of freedom.
    Pendulum,
    /// `½|I|²` with no perturbation.
    Integrable,
}

impl Family {
    pub const ALL: [Family; 5] = [Self::QuasiConvex, Self::Linear, Self::SteepToy, Self::Pendulum, Self::Integrable];

    pub fn name(&self) -> &'static str {
        match self {
            Self::QuasiConvex => "quasi-convex",
            Self::Linear => "linear",
            Self::SteepToy => "steep-toy",
            Self::Pendulum => "pendulum",
            Self::Integrable => "integrable",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown system family `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemSpec {
    Builtin(Family),
    /// `h` and a unit-size perturbation shape, scaled by `ε` on each row.
    Files { h: PathBuf, f: PathBuf },
}

/// Builds a builtin family at perturbation size `epsilon`.
pub fn builtin_system(
    family: Family,
    n: usize,
    radius: f64,
    epsilon: f64,
    regularity: Regularity,
) -> Result<HamiltonianSystem> {
    let n = if family == Family::Pendulum { 1 } else { n };
    if family == Family::SteepToy && n != 2 {
        return Err(Error::InvalidArgument("steep-toy is defined for n = 2".into()));
    }
    let d = Domain::new(n, radius)?;
    let mode = |k: &[i32]| FourierTaylorSeries::cosine(d, k, epsilon);
    let first = |sign: i32| -> Vec<i32> {
        let mut k = vec![0; n];
        k[0] = 1;
        if n > 1 {
            k[1] = sign;
        }
        k
    };
    let (h, f) = match family {
        Family::QuasiConvex => (FourierTaylorSeries::half_square_norm(d), mode(&first(-1))),
        Family::Pendulum => (FourierTaylorSeries::half_square_norm(d), mode(&[1])),
        Family::Integrable => (FourierTaylorSeries::half_square_norm(d), FourierTaylorSeries::zero(d, 0, 0)),
        Family::Linear => {
            let g = (5f64.sqrt() - 1.0) / 2.0;
            let omega: Vec<f64> = (0..n).map(|j| g.powi(j as i32)).collect();
            let mut k = vec![0; n];
            k[0] = 1;
            (FourierTaylorSeries::linear(d, &omega), mode(&k))
        }
        Family::SteepToy => {
            let mut h = FourierTaylorSeries::zero(d, 0, 3);
            h.add_cos(&[0, 0], &[2, 0], 0.5);
            h.add_cos(&[0, 0], &[1, 2], 1.0);
            (h, mode(&first(1)))
        }
    };
    HamiltonianSystem::new(h, f, epsilon, regularity)
}

/// A scaling experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub n: usize,
    /// Radius `R` of the action domain; initial actions are drawn from
    /// `B_{R/2}`.
    pub radius: f64,
    pub regularity: Regularity,
    /// Sorted descending, each in `(0, 1)`.
    pub epsilons: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub start_angles: Option<Vec<f64>>,
    pub start_actions: Option<Vec<f64>>,
    pub integrator: IntegratorConfig,
    /// Fixed `m`; otherwise `m = max(1, ⌊m_multiplier ε^{−a}⌋)`.
    pub m: Option<usize>,
    pub m_multiplier: f64,
    /// Cap on `τ_m`.
    pub t_cap: f64,
    pub tau: f64,
    pub gamma: f64,
    /// `μ_0 = mu0_multiplier · ε^b`.
    pub mu0_multiplier: f64,
    pub mu_multiplier: f64,
    pub condition_multiplier: f64,
    pub steepness_multiplier: f64,
    /// Drift threshold `threshold_multiplier · ε^{threshold_exponent}`;
    /// defaults to `(n+1)² μ_0`.
    pub threshold_multiplier: Option<f64>,
    pub threshold_exponent: Option<f64>,
    pub restrain: bool,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemSpec::Builtin(Family::QuasiConvex),
            n: 2,
            radius: 1.0,
            regularity: Regularity::Gevrey { alpha: 1.0, l: 1.0 },
            epsilons: vec![1e-3],
            samples: 1,
            seed: 0,
            start_angles: None,
            start_actions: None,
            integrator: IntegratorConfig { sample_stride: 100, ..IntegratorConfig::with_step(1e-2) },
            m: None,
            m_multiplier: 9.0,
            t_cap: 1e4,
            tau: 2.0,
            gamma: 0.9,
            mu0_multiplier: 0.4,
            mu_multiplier: 0.5,
            condition_multiplier: 16.0,
            steepness_multiplier: 0.1,
            threshold_multiplier: None,
            threshold_exponent: None,
            restrain: false,
            workers: 0,
            output: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("bad value `{value}` for `{key}`") })
}

fn parse_list(key: &str, value: &str, line: usize) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse_value(key, v, line)).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut files: (Option<PathBuf>, Option<PathBuf>) = (None, None);
        let mut family = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, message: format!("expected `key = value`, got `{raw}`") })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "system" => {
                    family = if value == "files" { None } else { Some(value.parse::<Family>()?) };
                    if family.is_none() {
                        cfg.system = SystemSpec::Files { h: PathBuf::new(), f: PathBuf::new() };
                    }
                }
                "h_file" => files.0 = Some(value.into()),
                "f_file" => files.1 = Some(value.into()),
                "n" => cfg.n = parse_value(key, value, line)?,
                "radius" => cfg.radius = parse_value(key, value, line)?,
                "regularity" => cfg.regularity = Regularity::parse_tag(value)?,
                "epsilons" => cfg.epsilons = parse_list(key, value, line)?,
                "samples" => cfg.samples = parse_value(key, value, line)?,
                "seed" => cfg.seed = parse_value(key, value, line)?,
                "start_angles" => cfg.start_angles = Some(parse_list(key, value, line)?),
                "start_actions" => cfg.start_actions = Some(parse_list(key, value, line)?),
                "step" => cfg.integrator.step = parse_value(key, value, line)?,
                "sample_stride" => cfg.integrator.sample_stride = parse_value(key, value, line)?,
                "m" => cfg.m = Some(parse_value(key, value, line)?),
                "m_multiplier" => cfg.m_multiplier = parse_value(key, value, line)?,
                "t_cap" => cfg.t_cap = parse_value(key, value, line)?,
                "tau" => cfg.tau = parse_value(key, value, line)?,
                "gamma" => cfg.gamma = parse_value(key, value, line)?,
                "mu0_multiplier" => cfg.mu0_multiplier = parse_value(key, value, line)?,
                "mu_multiplier" => cfg.mu_multiplier = parse_value(key, value, line)?,
                "condition_multiplier" => cfg.condition_multiplier = parse_value(key, value, line)?,
                "steepness_multiplier" => cfg.steepness_multiplier = parse_value(key, value, line)?,
                "threshold_multiplier" => cfg.threshold_multiplier = Some(parse_value(key, value, line)?),
                "threshold_exponent" => cfg.threshold_exponent = Some(parse_value(key, value, line)?),
                "restrain" => cfg.restrain = parse_value(key, value, line)?,
                "workers" => cfg.workers = parse_value(key, value, line)?,
                "output" => cfg.output = Some(value.into()),
                _ => return Err(Error::Parse { line, message: format!("unknown key `{key}`") }),
            }
        }
        match family {
            Some(f) => cfg.system = SystemSpec::Builtin(f),
            None if matches!(cfg.system, SystemSpec::Files { .. }) => match files {
                (Some(h), Some(f)) => cfg.system = SystemSpec::Files { h, f },
                _ => return Err(Error::InvalidArgument("system = files needs h_file and f_file".into())),
            },
            None => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidArgument("empty epsilon ladder".into()));
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::InvalidArgument("every epsilon must lie in (0, 1)".into()));
        }
        if self.epsilons.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::InvalidArgument("epsilons must be sorted strictly descending".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidArgument("samples must be at least 1".into()));
        }
        if !(self.t_cap > 0.0) {
            return Err(Error::InvalidArgument("t_cap must be positive".into()));
        }
        self.integrator.validate()?;
        let n = self.effective_dim();
        for (name, v) in [("start_angles", &self.start_angles), ("start_actions", &self.start_actions)] {
            if v.as_ref().is_some_and(|v| v.len() != n) {
                return Err(Error::InvalidArgument(format!("{name} must have {n} entries")));
            }
        }
        Ok(())
    }

    fn effective_dim(&self) -> usize {
        match self.system {
            SystemSpec::Builtin(Family::Pendulum) => 1,
            _ => self.n,
        }
    }

    /// Canonical text form; `workers` and `output` are left out because
    /// they do not affect the data.
    pub fn canonical_text(&self) -> String {
        let mut t = String::new();
        match &self.system {
            SystemSpec::Builtin(f) => {
                let _ = writeln!(t, "system = {}", f.name());
            }
            SystemSpec::Files { h, f } => {
                let _ = writeln!(t, "system = files\nh_file = {}\nf_file = {}", h.display(), f.display());
            }
        }
        let _ = writeln!(t, "n = {}", self.n);
        let _ = writeln!(t, "radius = {:e}", self.radius);
        let _ = writeln!(t, "regularity = {}", self.regularity.tag());
        let _ = writeln!(t, "epsilons = {}", join(&self.epsilons));
        let _ = writeln!(t, "samples = {}", self.samples);
        let _ = writeln!(t, "seed = {}", self.seed);
        if let Some(v) = &self.start_angles {
            let _ = writeln!(t, "start_angles = {}", join(v));
        }
        if let Some(v) = &self.start_actions {
            let _ = writeln!(t, "start_actions = {}", join(v));
        }
        let _ = writeln!(t, "step = {:e}", self.integrator.step);
        let _ = writeln!(t, "sample_stride = {}", self.integrator.sample_stride);
        if let Some(m) = self.m {
            let _ = writeln!(t, "m = {m}");
        }
        let _ = writeln!(t, "m_multiplier = {:e}", self.m_multiplier);
        let _ = writeln!(t, "t_cap = {:e}", self.t_cap);
        let _ = writeln!(t, "tau = {:e}", self.tau);
        let _ = writeln!(t, "gamma = {:e}", self.gamma);
        let _ = writeln!(t, "mu0_multiplier = {:e}", self.mu0_multiplier);
        let _ = writeln!(t, "mu_multiplier = {:e}", self.mu_multiplier);
        let _ = writeln!(t, "condition_multiplier = {:e}", self.condition_multiplier);
        let _ = writeln!(t, "steepness_multiplier = {:e}", self.steepness_multiplier);
        if let Some(v) = self.threshold_multiplier {
            let _ = writeln!(t, "threshold_multiplier = {v:e}");
        }
        if let Some(v) = self.threshold_exponent {
            let _ = writeln!(t, "threshold_exponent = {v:e}");
        }
        let _ = writeln!(t, "restrain = {}", self.restrain);
        t
    }

    /// Hex SHA-256 of [`Self::canonical_text`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }

    /// The system at perturbation size `epsilon`.
    pub fn system_at(&self, epsilon: f64) -> Result<HamiltonianSystem> {
        match &self.system {
            SystemSpec::Builtin(f) => builtin_system(*f, self.n, self.radius, epsilon, self.regularity),
            SystemSpec::Files { h, f } => {
                let (h, _) = io::read(h)?;
                let (f, _) = io::read(f)?;
                HamiltonianSystem::new(h, f.scale(epsilon), epsilon, self.regularity)
            }
        }
    }

    /// `τ_m` (capped) and whether the cap was hit.
    pub fn budget(&self, epsilon: f64) -> Result<(TimeBudget, bool)> {
        let exps = exponents(self.effective_dim(), self.tau)?;
        let b = match self.m {
            Some(m) => TimeBudget::new(self.regularity, m.max(1)),
            None => time_budget(epsilon, self.regularity, &exps, self.m_multiplier)?,
        };
        Ok((b.capped(self.t_cap), b.tau_m > self.t_cap))
    }

    pub fn mu0(&self, epsilon: f64) -> Result<f64> {
        let exps = exponents(self.effective_dim(), self.tau)?;
        Ok(self.mu0_multiplier * epsilon.powf(exps.b_f64()))
    }

    pub fn threshold(&self, epsilon: f64) -> Result<f64> {
        let n = self.effective_dim();
        match (self.threshold_multiplier, self.threshold_exponent) {
            (None, None) => Ok(((n + 1) * (n + 1)) as f64 * self.mu0(epsilon)?),
            (m, e) => {
                let b = exponents(n, self.tau)?.b_f64();
                Ok(m.unwrap_or(1.0) * epsilon.powf(e.unwrap_or(b)))
            }
        }
    }

    pub fn restrain_config(&self, epsilon: f64) -> RestrainConfig {
        let mut r = RestrainConfig::new(epsilon, self.gamma, self.tau);
        r.mu_multiplier = self.mu_multiplier;
        r.condition_multiplier = self.condition_multiplier;
        r.steepness_multiplier = self.steepness_multiplier;
        r
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

/// Seed of row `(ε, ic)`: the first 8 bytes of
/// `SHA-256(seed ‖ ε bits ‖ ic)`.
pub fn row_seed(seed: u64, epsilon: f64, ic: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(epsilon.to_bits().to_le_bytes());
    h.update((ic as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Initial angles and actions of a row.
pub fn initial_condition(cfg: &ExperimentConfig, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let n = cfg.effective_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let half = cfg.radius / 2.0;
    let action: Vec<f64> = (0..n).map(|_| rng.random_range(-half..half)).collect();
    (
        cfg.start_angles.clone().unwrap_or(theta),
        cfg.start_actions.clone().unwrap_or(action),
    )
}

/// One `(ε, initial condition)` measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRecord {
    /// Hex digest binding the row to the config, `ε` and `ic`.
    pub key: String,
    pub epsilon: f64,
    pub ic: usize,
    pub seed: u64,
    pub angles: Vec<f64>,
    pub actions: Vec<f64>,
    pub threshold: f64,
    pub tau_m: f64,
    /// `τ_m` was cut at `t_cap`; a sentinel drift time is then censored.
    pub capped: bool,
    /// First crossing of the threshold, `+∞` when none before `τ_m`.
    pub drift_time: f64,
    pub max_drift: f64,
    pub final_drift: f64,
    /// `certified`, `failed:<condition>`, `error:<message>` or `off`.
    pub certificate: String,
    /// `ok`, `violated` or `n/a`: a certified row must not drift past
    /// `(n+1)² μ_0` before `τ_m`.
    pub exclusion: String,
    pub energy_alarm: bool,
}

impl ScalingRecord {
    pub const CSV_HEADER: &'static str =
        "key,epsilon,ic,seed,angles,actions,threshold,tau_m,capped,drift_time,max_drift,final_drift,certificate,exclusion,energy_alarm";

    pub fn is_sentinel(&self) -> bool {
        self.drift_time.is_infinite()
    }

    pub fn to_csv(&self) -> String {
        let v = |x: &[f64]| x.iter().map(|a| format!("{a:e}")).collect::<Vec<_>>().join(" ");
        format!(
            "{},{:e},{},{},{},{},{:e},{:e},{},{:e},{:e},{:e},{},{},{}",
            self.key,
            self.epsilon,
            self.ic,
            self.seed,
            v(&self.angles),
            v(&self.actions),
            self.threshold,
            self.tau_m,
            self.capped,
            self.drift_time,
            self.max_drift,
            self.final_drift,
            self.certificate.replace(',', ";"),
            self.exclusion,
            self.energy_alarm
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse { line: 0, message: format!("malformed scaling row `{line}`") };
        if f.len() != 15 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let vec = |s: &str| -> Result<Vec<f64>> { s.split_whitespace().map(|x| x.parse().map_err(|_| bad())).collect() };
        Ok(Self {
            key: f[0].to_string(),
            epsilon: num(f[1])?,
            ic: f[2].parse().map_err(|_| bad())?,
            seed: f[3].parse().map_err(|_| bad())?,
            angles: vec(f[4])?,
            actions: vec(f[5])?,
            threshold: num(f[6])?,
            tau_m: num(f[7])?,
            capped: f[8].parse().map_err(|_| bad())?,
            drift_time: num(f[9])?,
            max_drift: num(f[10])?,
            final_drift: num(f[11])?,
            certificate: f[12].to_string(),
            exclusion: f[13].to_string(),
            energy_alarm: f[14].parse().map_err(|_| bad())?,
        })
    }
}

/// Least-squares fit of `ln T*` on non-sentinel rows. The abscissa is
/// `ε^{−a/α}` for Gevrey systems and `ln(1/ε)` for `C^k` systems.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub abscissa: &'static str,
    pub slope: f64,
    pub intercept: f64,
    /// `(ε, residual)` per fitted row.
    pub residuals: Vec<(f64, f64)>,
    /// Rows left out because they never crossed the threshold.
    pub censored: usize,
    /// `k*·a`, the slope the polynomial bound suggests; `None` for Gevrey.
    pub reference_slope: Option<f64>,
}

impl fmt::Display for ScalingFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "fit ln T* = slope * x + intercept, x = {}", self.abscissa)?;
        writeln!(f, "slope {:e}", self.slope)?;
        writeln!(f, "intercept {:e}", self.intercept)?;
        if let Some(r) = self.reference_slope {
            writeln!(f, "reference_slope {r:e}")?;
        }
        writeln!(f, "fitted_rows {}", self.residuals.len())?;
        writeln!(f, "censored_rows {}", self.censored)?;
        for (e, r) in &self.residuals {
            writeln!(f, "residual eps={e:e} {r:+e}")?;
        }
        Ok(())
    }
}

/// Descriptive fit; `None` with fewer than two distinct abscissae.
pub fn fit_scaling(records: &[ScalingRecord], regularity: Regularity, a: f64) -> Option<ScalingFit> {
    type Abscissa = Box<dyn Fn(f64) -> f64>;
    let (abscissa, x_of, reference): (&'static str, Abscissa, Option<f64>) = match regularity {
        Regularity::Gevrey { alpha, .. } => ("eps^(-a/alpha)", Box::new(move |e: f64| e.powf(-a / alpha)), None),
        Regularity::FiniteDiff { k_star, .. } => {
            ("ln(1/eps)", Box::new(|e: f64| (1.0 / e).ln()), Some(k_star as f64 * a))
        }
    };
    let pts: Vec<(f64, f64, f64)> = records
        .iter()
        .filter(|r| !r.is_sentinel() && r.drift_time > 0.0)
        .map(|r| (r.epsilon, x_of(r.epsilon), r.drift_time.ln()))
        .collect();
    let censored = records.len() - pts.len();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.2).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.1 - mx).powi(2)).sum();
    if pts.len() < 2 || !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.1 - mx) * (p.2 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = pts.iter().map(|p| (p.0, p.2 - (slope * p.1 + intercept))).collect();
    Some(ScalingFit { abscissa, slope, intercept, residuals, censored, reference_slope: reference })
}

fn row_key(config_hash: &str, epsilon: f64, ic: usize) -> String {
    let mut h = Sha256::new();
    h.update(config_hash.as_bytes());
    h.update(epsilon.to_bits().to_le_bytes());
    h.update((ic as u64).to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Runs one row; also returns the wall-clock seconds spent.
pub fn run_row(cfg: &ExperimentConfig, sys: &HamiltonianSystem, epsilon: f64, ic: usize) -> Result<(ScalingRecord, f64)> {
    let clock = Instant::now();
    let seed = row_seed(cfg.seed, epsilon, ic);
    let (angles, actions) = initial_condition(cfg, seed);
    let (budget, capped) = cfg.budget(epsilon)?;
    let threshold = cfg.threshold(epsilon)?;
    let total = sys.total();
    let start = (angles.as_slice(), actions.as_slice());
    let t_star = drift_time(&total, start, threshold, budget.tau_m, &cfg.integrator)?;
    let mut traj = integrate(sys, start, budget.tau_m, &cfg.integrator)?;
    traj.seed = Some(seed);
    let drifts: Vec<f64> = traj.actions.iter().map(|a| sup_distance(a, &actions)).collect();
    let max_drift = drifts.iter().copied().fold(0.0, f64::max);
    let final_drift = drifts.last().copied().unwrap_or(0.0);

    let (certificate, exclusion) = if !cfg.restrain {
        ("off".to_string(), "n/a".to_string())
    } else {
        let mu0 = cfg.mu0(epsilon)?;
        match try_restrain(sys, &traj, mu0, budget, &[], &cfg.restrain_config(epsilon)) {
            Ok(RestrainOutcome::Certified(_)) => {
                let n = sys.dim();
                let bound = ((n + 1) * (n + 1)) as f64 * mu0;
                let crossing = if bound == threshold {
                    t_star
                } else {
                    drift_time(&total, start, bound, budget.tau_m, &cfg.integrator)?
                };
                let verdict = if crossing.is_infinite() { "ok" } else { "violated" };
                ("certified".to_string(), verdict.to_string())
            }
            Ok(RestrainOutcome::Failed(f)) => (format!("failed:{}", f.condition), "n/a".to_string()),
            Err(e) => (format!("error:{e}"), "n/a".to_string()),
        }
    };
    let record = ScalingRecord {
        key: row_key(&cfg.hash(), epsilon, ic),
        epsilon,
        ic,
        seed,
        angles,
        actions,
        threshold,
        tau_m: budget.tau_m,
        capped,
        drift_time: t_star,
        max_drift,
        final_drift,
        certificate,
        exclusion,
        energy_alarm: traj.energy_alarm,
    };
    Ok((record, clock.elapsed().as_secs_f64()))
}

#[derive(Clone, Debug)]
pub struct ScalingOutput {
    /// Canonical order: `ε` descending, then `ic`.
    pub records: Vec<ScalingRecord>,
    pub fit: Option<ScalingFit>,
    /// Rows taken from an earlier partial run.
    pub resumed: usize,
}

/// The CSV without the timestamped first line.
pub fn data_section(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with(RUN_HEADER_PREFIX))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn read_partial(path: &Path, config_hash: &str) -> Result<(String, BTreeMap<String, ScalingRecord>)> {
    let text = fs::read_to_string(path)?;
    let mut header = None;
    let mut rows = BTreeMap::new();
    for line in text.lines() {
        if line.starts_with(RUN_HEADER_PREFIX) {
            header = Some(line.to_string());
        } else if let Some(h) = line.strip_prefix("# config ") {
            if h.trim() != config_hash {
                return Err(Error::Inconsistent(format!(
                    "{} was written by a different configuration",
                    path.display()
                )));
            }
        } else if line == ScalingRecord::CSV_HEADER || line.trim().is_empty() {
        } else if let Ok(r) = ScalingRecord::from_csv(line) {
            rows.insert(r.key.clone(), r);
        }
    }
    Ok((header.unwrap_or_else(run_header), rows))
}

fn run_header() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    format!("{RUN_HEADER_PREFIX} {secs}")
}

fn render(header: &str, config_hash: &str, records: &[ScalingRecord]) -> String {
    let mut out = format!("{header}\n# config {config_hash}\n{}\n", ScalingRecord::CSV_HEADER);
    for r in records {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Path of the wall-clock sidecar next to `output`.
pub fn runtime_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".runtime");
    PathBuf::from(s)
}

/// Runs every `(ε, ic)` row. With an output path, finished rows are
/// appended one `ε` at a time, rows already present are skipped, and the
/// file is rewritten in canonical order at the end. Wall-clock times go to
/// a `.runtime` sidecar so the CSV stays reproducible.
pub fn run_scaling(cfg: &ExperimentConfig) -> Result<ScalingOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start workers: {e}")))?;
    let hash = cfg.hash();
    let (header, mut done) = match &cfg.output {
        Some(p) if p.exists() => read_partial(p, &hash)?,
        _ => (run_header(), BTreeMap::new()),
    };
    let resumed = done.len();
    if let Some(p) = &cfg.output {
        if !p.exists() {
            fs::write(p, render(&header, &hash, &[]))?;
        }
    }
    for &eps in &cfg.epsilons {
        let sys = cfg.system_at(eps)?;
        let todo: Vec<usize> = (0..cfg.samples).filter(|&ic| !done.contains_key(&row_key(&hash, eps, ic))).collect();
        let rows: Vec<(ScalingRecord, f64)> =
            pool.install(|| todo.par_iter().map(|&ic| run_row(cfg, &sys, eps, ic)).collect::<Result<_>>())?;
        if let Some(p) = &cfg.output {
            let mut csv = OpenOptions::new().append(true).open(p)?;
            let mut side = OpenOptions::new().create(true).append(true).open(runtime_path(p))?;
            for (r, secs) in &rows {
                writeln!(csv, "{}", r.to_csv())?;
                writeln!(side, "{},{secs:.6}", r.key)?;
            }
            csv.flush()?;
        }
        for (r, _) in rows {
            done.insert(r.key.clone(), r);
        }
    }
    let mut records: Vec<ScalingRecord> = Vec::with_capacity(done.len());
    for &eps in &cfg.epsilons {
        for ic in 0..cfg.samples {
            if let Some(r) = done.remove(&row_key(&hash, eps, ic)) {
                records.push(r);
            }
        }
    }
    if let Some(p) = &cfg.output {
        let tmp = p.with_extension("tmp");
        fs::write(&tmp, render(&header, &hash, &records))?;
        fs::rename(&tmp, p)?;
    }
    let a = exponents(cfg.effective_dim(), cfg.tau)?.a_f64();
    let fit = fit_scaling(&records, cfg.regularity, a);
    Ok(ScalingOutput { records, fit, resumed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::parse(
            "system = pendulum\nepsilons = 1e-2, 1e-3\nsamples = 2\nseed = 3\nstep = 1e-2\nm = 2\nt_cap = 20\nthreshold_multiplier = 0.5\nthreshold_exponent = 0.5\n",
        )
        .unwrap()
    }

    #[test]
    fn config_round_trip() {
        let cfg = small();
        let again = ExperimentConfig::parse(&cfg.canonical_text()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn config_errors() {
        assert!(ExperimentConfig::parse("epsilons = 1e-3, 1e-2").is_err());
        assert!(ExperimentConfig::parse("epsilons = 1.5").is_err());
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        assert!(ExperimentConfig::parse("system = files\nh_file = a").is_err());
        assert!(ExperimentConfig::parse("system = nope").is_err());
    }

    #[test]
    fn row_seeds_differ() {
        assert_ne!(row_seed(1, 1e-3, 0), row_seed(1, 1e-3, 1));
        assert_ne!(row_seed(1, 1e-3, 0), row_seed(1, 1e-4, 0));
        assert_eq!(row_seed(1, 1e-3, 0), row_seed(1, 1e-3, 0));
    }

    #[test]
    fn builtins_build() {
        let g = Regularity::gevrey(1.0, 1.0).unwrap();
        for f in Family::ALL {
            let s = builtin_system(f, 2, 1.0, 1e-3, g).unwrap();
            assert_eq!(s.dim(), if f == Family::Pendulum { 1 } else { 2 });
        }
        assert!(builtin_system(Family::SteepToy, 3, 1.0, 1e-3, g).is_err());
    }

    #[test]
    fn record_csv_round_trip() {
        let cfg = small();
        let sys = cfg.system_at(1e-2).unwrap();
        let (r, _) = run_row(&cfg, &sys, 1e-2, 0).unwrap();
        assert_eq!(ScalingRecord::from_csv(&r.to_csv()).unwrap(), r);
    }

    #[test]
    fn integrable_rows_are_sentinels() {
        let mut cfg = small();
        cfg.system = SystemSpec::Builtin(Family::Integrable);
        let out = run_scaling(&cfg).unwrap();
        assert_eq!(out.records.len(), 4);
        assert!(out.records.iter().all(|r| r.is_sentinel() && r.max_drift == 0.0));
        assert!(out.fit.is_none());
    }

    #[test]
    fn fit_recovers_slope() {
        let g = Regularity::finite_diff(1, 4, 2).unwrap();
        let rec = |e: f64, t: f64| ScalingRecord {
            key: String::new(),
            epsilon: e,
            ic: 0,
            seed: 0,
            angles: vec![],
            actions: vec![],
            threshold: 0.0,
            tau_m: 0.0,
            capped: false,
            drift_time: t,
            max_drift: 0.0,
            final_drift: 0.0,
            certificate: "off".into(),
            exclusion: "n/a".into(),
            energy_alarm: false,
        };
        let rows = vec![rec(1e-2, 1e-2f64.powf(-0.5)), rec(1e-3, 1e-3f64.powf(-0.5)), rec(1e-4, f64::INFINITY)];
        let fit = fit_scaling(&rows, g, 0.1).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert_eq!(fit.censored, 1);
        assert!(fit.residuals.iter().all(|r| r.1.abs() < 1e-12));
        assert_eq!(fit.reference_slope, Some(0.2));
    }

    #[test]
    fn resume_skips_finished_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.output = Some(dir.path().join("run.csv"));
        let first = run_scaling(&cfg).unwrap();
        let full = fs::read_to_string(cfg.output.as_ref().unwrap()).unwrap();
        // Drop the last row to mimic an interrupted run.
        let cut: String = full.lines().take(full.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        fs::write(cfg.output.as_ref().unwrap(), &cut).unwrap();
        let second = run_scaling(&cfg).unwrap();
        assert_eq!(second.resumed, 3);
        assert_eq!(first.records, second.records);
        assert_eq!(fs::read_to_string(cfg.output.as_ref().unwrap()).unwrap(), full);

        let mut other = cfg.clone();
        other.seed = 4;
        assert!(matches!(run_scaling(&other), Err(Error::Inconsistent(_))));
    }
}
