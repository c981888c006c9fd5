//! Symplectic integration and drift measurements.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::diophantine::ResonanceFrame;
use crate::error::{Error, Result};
use crate::normal_form::SymplecticTransform;
use crate::series::{io, sup_distance, Coordinate, FourierTaylorSeries, HamiltonianSystem, Regularity};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Strang splitting when the angle-dependent part does not depend on the
    /// actions, implicit midpoint otherwise.
    Auto,
    Strang,
    ImplicitMidpoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub step: f64,
    pub scheme: Scheme,
    /// Relative energy deviation above which the record is flagged.
    pub energy_tolerance: f64,
    /// Store every `sample_stride`-th step.
    pub sample_stride: usize,
    pub fixed_point_tolerance: f64,
    pub max_fixed_point_iterations: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            scheme: Scheme::Auto,
            energy_tolerance: 1e-6,
            sample_stride: 1,
            fixed_point_tolerance: 1e-13,
            max_fixed_point_iterations: 50,
        }
    }
}

impl IntegratorConfig {
    pub fn with_step(step: f64) -> Self {
        Self { step, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidArgument(format!("step must be positive, got {}", self.step)));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidArgument("sample stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// `τ_m`: `e^{m^{1/α}}` in the Gevrey case, `m^{k*}` in the `C^k` case.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBudget {
    pub m: usize,
    pub tau_m: f64,
}

impl TimeBudget {
    pub fn new(regularity: Regularity, m: usize) -> Self {
        let tau_m = match regularity {
            Regularity::Gevrey { alpha, .. } => (m as f64).powf(1.0 / alpha).exp(),
            Regularity::FiniteDiff { k_star, .. } => (m as f64).powi(k_star as i32),
        };
        Self { m, tau_m }
    }

    /// Caps `τ_m` for desk-scale runs.
    pub fn capped(self, cap: f64) -> Self {
        Self { tau_m: self.tau_m.min(cap), ..self }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub angles: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    /// The actions left the domain; the record stops at the first such sample.
    pub escaped: bool,
    pub max_energy_deviation: f64,
    pub energy_alarm: bool,
    pub seed: Option<u64>,
    pub config_hash: String,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.actions.first().map_or(0, Vec::len)
    }

    pub fn final_state(&self) -> Option<(&[f64], &[f64])> {
        Some((self.angles.last()?.as_slice(), self.actions.last()?.as_slice()))
    }

    pub fn csv_header(&self) -> String {
        let n = self.dim();
        let mut h = String::from("t");
        for j in 1..=n {
            let _ = write!(h, ",theta_{j}");
        }
        for j in 1..=n {
            let _ = write!(h, ",I_{j}");
        }
        h.push_str(",H,config_hash");
        h
    }

    pub fn write_csv(&self, out: &mut impl std::io::Write) -> Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for i in 0..self.len() {
            let mut line = format!("{:.17e}", self.times[i]);
            for v in self.angles[i].iter().chain(&self.actions[i]) {
                let _ = write!(line, ",{v:.17e}");
            }
            let _ = write!(line, ",{:.17e},{}", self.energy[i], self.config_hash);
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// The record in the coordinates `Φ^{−1}(θ, I)`.
    pub fn conjugate(&self, transform: &SymplecticTransform) -> Self {
        let mut out = self.clone();
        for (t, a) in out.angles.iter_mut().zip(out.actions.iter_mut()) {
            let (t2, a2) = transform.apply_inverse(t, a);
            *t = t2;
            *a = a2;
        }
        out
    }
}

/// A series compiled for repeated real evaluation.
#[derive(Clone, Debug)]
struct Compiled {
    center: Vec<f64>,
    terms: Vec<(Vec<f64>, Vec<i32>, Complex64)>,
}

impl Compiled {
    fn new(s: &FourierTaylorSeries) -> Self {
        let terms = s
            .terms()
            .map(|(idx, c)| {
                (
                    idx.angle.iter().map(|&k| TAU * k as f64).collect(),
                    idx.action.iter().map(|&l| l as i32).collect(),
                    *c,
                )
            })
            .collect();
        Self { center: s.center().to_vec(), terms }
    }

    fn eval(&self, theta: &[f64], action: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, l, c) in &self.terms {
            let phase: f64 = k.iter().zip(theta).map(|(k, t)| k * t).sum();
            let mut mono = 1.0;
            for ((&p, &a), &c0) in l.iter().zip(action).zip(&self.center) {
                if p != 0 {
                    mono *= (a - c0).powi(p);
                }
            }
            let (s, co) = phase.sin_cos();
            acc += mono * (c.re * co - c.im * s);
        }
        acc
    }
}

struct VectorField {
    n: usize,
    /// `∂H/∂θ_j`.
    d_angle: Vec<Compiled>,
    /// `∂H/∂I_j`.
    d_action: Vec<Compiled>,
    /// For the splitting: `∂V/∂θ_j` and `∂K/∂I_j` with `H = K(I) + V(θ)`.
    split: Option<(Vec<Compiled>, Vec<Compiled>)>,
}

impl VectorField {
    fn new(h: &FourierTaylorSeries) -> Self {
        let n = h.dim();
        let grad = |s: &FourierTaylorSeries, c: fn(usize) -> Coordinate| -> Vec<Compiled> {
            (0..n).map(|j| Compiled::new(&s.partial_derivative(c(j)))).collect()
        };
        let separable = h.terms().all(|(idx, _)| idx.is_angle_free() || idx.degree() == 0);
        let split = separable.then(|| {
            let kinetic = h.angle_average();
            let potential = h.filter(|idx| !idx.is_angle_free());
            (grad(&potential, Coordinate::Angle), grad(&kinetic, Coordinate::Action))
        });
        Self {
            n,
            d_angle: grad(h, Coordinate::Angle),
            d_action: grad(h, Coordinate::Action),
            split,
        }
    }

    fn strang(&self, theta: &mut [f64], action: &mut [f64], dt: f64) {
        let (dv, dk) = self.split.as_ref().expect("separable");
        let kick = |theta: &[f64], action: &mut [f64]| {
            let g: Vec<f64> = dv.iter().map(|d| d.eval(theta, action)).collect();
            for (a, g) in action.iter_mut().zip(g) {
                *a -= 0.5 * dt * g;
            }
        };
        kick(theta, action);
        let w: Vec<f64> = dk.iter().map(|d| d.eval(theta, action)).collect();
        for (t, w) in theta.iter_mut().zip(w) {
            *t = (*t + dt * w).rem_euclid(1.0);
        }
        kick(theta, action);
    }

    fn midpoint(&self, theta: &mut [f64], action: &mut [f64], dt: f64, cfg: &IntegratorConfig, t: f64) -> Result<()> {
        let n = self.n;
        let (t0, a0) = (theta.to_vec(), action.to_vec());
        let mut t1 = t0.clone();
        let mut a1 = a0.clone();
        let mut mid_t = vec![0.0; n];
        let mut mid_a = vec![0.0; n];
        for _ in 0..cfg.max_fixed_point_iterations {
            for j in 0..n {
                mid_t[j] = 0.5 * (t0[j] + t1[j]);
                mid_a[j] = 0.5 * (a0[j] + a1[j]);
            }
            let mut change: f64 = 0.0;
            for j in 0..n {
                let nt = t0[j] + dt * self.d_action[j].eval(&mid_t, &mid_a);
                let na = a0[j] - dt * self.d_angle[j].eval(&mid_t, &mid_a);
                change = change.max((nt - t1[j]).abs()).max((na - a1[j]).abs());
                t1[j] = nt;
                a1[j] = na;
            }
            if change <= cfg.fixed_point_tolerance {
                for j in 0..n {
                    theta[j] = t1[j].rem_euclid(1.0);
                    action[j] = a1[j];
                }
                return Ok(());
            }
        }
        Err(Error::Integration {
            time: t,
            reason: format!(
                "implicit midpoint did not converge in {} iterations",
                cfg.max_fixed_point_iterations
            ),
        })
    }
}

fn config_hash(h: &FourierTaylorSeries, cfg: &IntegratorConfig, start: (&[f64], &[f64])) -> String {
    let mut hasher = Sha256::new();
    hasher.update(io::to_string(h, None).as_bytes());
    hasher.update(format!("{cfg:?}{start:?}").as_bytes());
    hex::encode(&hasher.finalize()[..8])
}

/// Streams the trajectory of `h` from `start` to `t_max`, calling `visit`
/// after every step with `(step index, t, θ, I)`. Stops early when the actions
/// leave the domain or `visit` returns `false`. Returns whether it escaped.
fn run(
    h: &FourierTaylorSeries,
    start: (&[f64], &[f64]),
    t_max: f64,
    cfg: &IntegratorConfig,
    mut visit: impl FnMut(usize, f64, &[f64], &[f64]) -> bool,
) -> Result<bool> {
    cfg.validate()?;
    let n = h.dim();
    if start.0.len() != n || start.1.len() != n {
        return Err(Error::InvalidArgument("start point has wrong dimension".into()));
    }
    h.check_point(start.0, start.1)?;
    let field = VectorField::new(h);
    let scheme = match cfg.scheme {
        Scheme::Auto if field.split.is_some() => Scheme::Strang,
        Scheme::Auto => Scheme::ImplicitMidpoint,
        Scheme::Strang if field.split.is_none() => {
            return Err(Error::InvalidArgument(
                "splitting needs the angle-dependent part to be independent of the actions".into(),
            ))
        }
        s => s,
    };
    let mut theta: Vec<f64> = start.0.iter().map(|t| t.rem_euclid(1.0)).collect();
    let mut action = start.1.to_vec();
    if !visit(0, 0.0, &theta, &action) {
        return Ok(false);
    }
    let steps = (t_max / cfg.step - 1e-9).ceil().max(0.0) as usize;
    let radius = h.domain().radius();
    for i in 1..=steps {
        let t_prev = (i - 1) as f64 * cfg.step;
        let t = if i == steps { t_max } else { i as f64 * cfg.step };
        let dt = t - t_prev;
        match scheme {
            Scheme::Strang => field.strang(&mut theta, &mut action, dt),
            _ => field.midpoint(&mut theta, &mut action, dt, cfg, t_prev)?,
        }
        if theta.iter().chain(&action).any(|v| !v.is_finite()) {
            return Err(Error::Integration { time: t, reason: "non-finite state".into() });
        }
        let escaped = sup_distance(&action, h.center()) > radius;
        if !visit(i, t, &theta, &action) || escaped {
            return Ok(escaped);
        }
    }
    Ok(false)
}

/// Integrates `h` directly (no perturbation bookkeeping).
pub fn integrate_series(
    h: &FourierTaylorSeries,
    start: (&[f64], &[f64]),
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryRecord> {
    let energy = Compiled::new(h);
    let e0 = energy.eval(start.0, start.1);
    let scale = e0.abs().max(f64::MIN_POSITIVE);
    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        angles: Vec::new(),
        actions: Vec::new(),
        energy: Vec::new(),
        escaped: false,
        max_energy_deviation: 0.0,
        energy_alarm: false,
        seed: None,
        config_hash: config_hash(h, cfg, start),
    };
    let stride = cfg.sample_stride;
    let mut last_stored = usize::MAX;
    // (step, time, angles, actions, energy) of the latest unstored step
    type Pending = (usize, f64, Vec<f64>, Vec<f64>, f64);
    let mut last: Option<Pending> = None;
    let escaped = run(h, start, t_max, cfg, |i, t, theta, action| {
        let e = energy.eval(theta, action);
        rec.max_energy_deviation = rec.max_energy_deviation.max((e - e0).abs() / scale);
        if i % stride == 0 {
            rec.times.push(t);
            rec.angles.push(theta.to_vec());
            rec.actions.push(action.to_vec());
            rec.energy.push(e);
            last_stored = i;
        } else {
            last = Some((i, t, theta.to_vec(), action.to_vec(), e));
        }
        true
    })?;
    if let Some((i, t, theta, action, e)) = last {
        if i != last_stored && rec.times.last().is_none_or(|&lt| t > lt) {
            rec.times.push(t);
            rec.angles.push(theta);
            rec.actions.push(action);
            rec.energy.push(e);
        }
    }
    rec.escaped = escaped;
    rec.energy_alarm = rec.max_energy_deviation > cfg.energy_tolerance;
    Ok(rec)
}

/// Solution of `H = h + f` from `start` up to `t_max`.
pub fn integrate(
    sys: &HamiltonianSystem,
    start: (&[f64], &[f64]),
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryRecord> {
    integrate_series(&sys.total(), start, t_max, cfg)
}

/// First sample time with `|I(t) − center|_∞ ≥ radius`, or `+∞`.
pub fn escape_time(traj: &TrajectoryRecord, center: &[f64], radius: f64) -> Result<f64> {
    let Some(first) = traj.actions.first() else {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    };
    if sup_distance(first, center) > radius {
        return Err(Error::Precondition("trajectory starts outside the ball".into()));
    }
    Ok(traj
        .times
        .iter()
        .zip(&traj.actions)
        .find(|(_, a)| sup_distance(a, center) >= radius)
        .map_or(f64::INFINITY, |(&t, _)| t))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransverseDrift {
    pub times: Vec<f64>,
    pub per_sample: Vec<f64>,
    pub max: f64,
}

/// `|Π^⊥(I(t) − I(t_0))|_∞` for samples from the first one at or after
/// `from_time`.
pub fn transverse_drift(traj: &TrajectoryRecord, frame: &ResonanceFrame, from_time: f64) -> Result<TransverseDrift> {
    let Some(i0) = traj.times.iter().position(|&t| t >= from_time) else {
        return Err(Error::InvalidArgument(format!("time {from_time} is past the end of the trajectory")));
    };
    let base = &traj.actions[i0];
    let mut out = TransverseDrift { times: Vec::new(), per_sample: Vec::new(), max: 0.0 };
    for (t, a) in traj.times[i0..].iter().zip(&traj.actions[i0..]) {
        let d: Vec<f64> = a.iter().zip(base).map(|(x, y)| x - y).collect();
        let v = frame.project_perp(&d).amax();
        out.times.push(*t);
        out.per_sample.push(v);
        out.max = out.max.max(v);
    }
    Ok(out)
}

/// First step time with `|I(t) − I(0)|_∞ ≥ threshold`, or `+∞` if none
/// before `t_cap` (or before the actions leave the domain).
pub fn drift_time(
    h: &FourierTaylorSeries,
    start: (&[f64], &[f64]),
    threshold: f64,
    t_cap: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument("threshold must be positive".into()));
    }
    let mut crossing = f64::INFINITY;
    run(h, start, t_cap, cfg, |_, t, _, action| {
        if sup_distance(action, start.1) >= threshold {
            crossing = t;
            false
        } else {
            true
        }
    })?;
    Ok(crossing)
}
