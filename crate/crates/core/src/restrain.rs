//! Restrained and drifting solutions.
//!
//! [`try_restrain`] walks along a recorded trajectory and tries to build the
//! ladder of radii `μ_0 > μ_1 > … > μ_n`, independent periodic vectors
//! `ω_1, …, ω_n` and times `0 ≤ t_1 ≤ … ≤ t_n ≤ τ_m` of a restrained
//! solution, stopping with the first violated condition otherwise.

use std::fmt::{self, Write as _};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

use crate::diophantine::{default_search_cap, dirichlet_approx, PeriodicVector, ResonanceFrame};
use crate::dynamics::{TimeBudget, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::morse::{steepness_escape, EscapeOutcome, MorseParams, SteepnessQuery};
use crate::normal_form::{local_normal_form, ConditionMargin, NormalFormConfig, SymplecticTransform};
use crate::series::{sup_distance, HamiltonianSystem, IntegrableHamiltonian, PolynomialHamiltonian, Regularity};

/// Times `Q` is doubled (per approximated coordinate) when the Dirichlet
/// vector depends on the current frame.
pub const DEPENDENCE_RETRIES: usize = 8;

/// Exponents `a_j = (2τ(n+1))^{−n−1+j}` and `a = b = 3^{−1}(2τ(n+1))^{−n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentSet {
    pub n: usize,
    pub tau: BigRational,
    pub a_list: Vec<BigRational>,
    pub a: BigRational,
    pub b: BigRational,
}

impl ExponentSet {
    pub fn a_j(&self, j: usize) -> f64 {
        self.a_list[j - 1].to_f64().unwrap_or(f64::NAN)
    }

    pub fn a_f64(&self) -> f64 {
        self.a.to_f64().unwrap_or(f64::NAN)
    }

    pub fn b_f64(&self) -> f64 {
        self.b.to_f64().unwrap_or(f64::NAN)
    }
}

fn pow_neg(base: &BigRational, e: usize) -> BigRational {
    let mut p = BigRational::one();
    for _ in 0..e {
        p *= base;
    }
    p.recip()
}

/// Exact exponents; `tau` is converted to a rational without rounding.
pub fn exponents(n: usize, tau: f64) -> Result<ExponentSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(tau >= 2.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("tau must be at least 2, got {tau}")));
    }
    let tau_r = BigRational::from_float(tau).expect("finite");
    let base = BigRational::from_integer(BigInt::from(2 * (n as i64 + 1))) * &tau_r;
    let a_list = (1..=n).map(|j| pow_neg(&base, n + 1 - j)).collect();
    let a = pow_neg(&base, n) / BigRational::from_integer(BigInt::from(3));
    Ok(ExponentSet { n, tau: tau_r, a_list, b: a.clone(), a })
}

/// `m = max(1, ⌊multiplier · ε^{−a}⌋)` and the matching `τ_m`.
pub fn time_budget(epsilon: f64, regularity: Regularity, exps: &ExponentSet, m_multiplier: f64) -> Result<TimeBudget> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let m = (m_multiplier * epsilon.powf(-exps.a_f64())).floor().max(1.0) as usize;
    Ok(TimeBudget::new(regularity, m))
}

/// `μ_j = c T_j^{−1} ε^{a_j}`.
pub fn realized_mu(c: f64, period: f64, epsilon: f64, a_j: f64) -> f64 {
    c * epsilon.powf(a_j) / period
}

/// Inputs of the eleven parameter conditions.
#[derive(Clone, Debug)]
pub struct ConditionParams {
    pub n: usize,
    pub tau: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub mu0: f64,
    pub m: usize,
    /// `T_1, …, T_n`.
    pub periods: Vec<f64>,
    /// `L_1, …, L_n`.
    pub l_indices: Vec<f64>,
    /// `μ_1, …, μ_n`.
    pub mus: Vec<f64>,
    /// Implicit constants of conditions (i) to (xi), in order.
    pub multipliers: [f64; 11],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionEntry {
    /// Roman numeral of the condition.
    pub label: &'static str,
    /// Index `j` the instance refers to, if any.
    pub index: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    /// `ln(rhs / lhs)`.
    pub log_margin: f64,
    /// `ln(rhs / lhs) / ln(1/ε)`.
    pub epsilon_margin: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    pub passed: bool,
}

impl ConditionReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConditionEntry> {
        self.entries.iter().filter(|e| !e.holds)
    }

    pub fn first_failure(&self) -> Option<&ConditionEntry> {
        self.failures().next()
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let idx = e.index.map_or(String::new(), |j| format!("[j={j}]"));
            writeln!(
                f,
                "({}){idx} lhs={:.6e} rhs={:.6e} log_margin={:+.6} {}",
                e.label,
                e.lhs,
                e.rhs,
                e.log_margin,
                if e.holds { "ok" } else { "FAIL" }
            )?;
        }
        write!(f, "overall: {}", if self.passed { "pass" } else { "fail" })
    }
}

/// Evaluates conditions (i) to (xi) with their multipliers.
pub fn check_conditions(p: &ConditionParams) -> Result<ConditionReport> {
    let n = p.n;
    if p.periods.len() != n || p.l_indices.len() != n || p.mus.len() != n {
        return Err(Error::InvalidArgument(format!("need {n} periods, L indices and radii")));
    }
    let log_eps = (1.0 / p.epsilon).ln();
    let c = &p.multipliers;
    let mut entries = Vec::new();
    let mut push = |label: &'static str, index: Option<usize>, lhs: f64, rhs: f64| {
        let log_margin = rhs.ln() - lhs.ln();
        let holds = lhs < rhs;
        entries.push(ConditionEntry {
            label,
            index,
            lhs,
            rhs,
            log_margin,
            epsilon_margin: log_margin / log_eps,
            holds,
        });
    };
    let ratio = |j: usize| p.periods[j - 1] * p.mus[j - 1] / p.l_indices[j - 1];
    let mu = |j: usize| if j == 0 { p.mu0 } else { p.mus[j - 1] };
    for j in 1..n {
        push("i", Some(j), mu(j + 1), c[0] * ratio(j).powf(2.0 * p.tau));
    }
    for j in 1..n {
        push("ii", Some(j), ratio(j).powf(p.tau), c[1] * mu(j));
    }
    for j in 1..=n {
        push("iii", Some(j), p.m as f64 * p.periods[j - 1] * mu(j), c[2]);
    }
    push("iv", None, mu(1), c[3] * p.mu0 * p.mu0);
    for j in 1..=n {
        push("v", Some(j), p.epsilon, mu(j) * mu(j));
    }
    for j in 1..n {
        push("vi", Some(j), ratio(j).powf(p.tau), c[5] * p.gamma * p.l_indices[j - 1].powf(-p.tau));
    }
    for j in 1..=n {
        push("vii", Some(j), p.periods[j - 1] * mu(j), c[6]);
    }
    for j in 1..=n {
        push("viii", Some(j), mu(j), c[7]);
    }
    for j in 2..=n {
        push("ix", Some(j), mu(j), c[8] * mu(j - 1));
    }
    push("x", None, p.mu0, c[9] * p.gamma);
    push("xi", None, p.mu0, c[10]);
    let passed = entries.iter().all(|e| e.holds);
    Ok(ConditionReport { entries, passed })
}

/// Parameters of the monitor. Every `⋖` carries `condition_multiplier`.
#[derive(Clone, Debug)]
pub struct RestrainConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub tau: f64,
    /// `c` in `μ_j = c T_j^{−1} ε^{a_j}`.
    pub mu_multiplier: f64,
    pub condition_multiplier: f64,
    /// Gradient constant in the steepness escape.
    pub steepness_multiplier: f64,
    /// Use the normal-form transforms to build the normalized actions.
    pub normalize: bool,
    pub normal_form: NormalFormConfig,
}

impl RestrainConfig {
    pub fn new(epsilon: f64, gamma: f64, tau: f64) -> Self {
        Self {
            epsilon,
            gamma,
            tau,
            mu_multiplier: 1.0,
            condition_multiplier: 1.0,
            steepness_multiplier: 1.0,
            normalize: false,
            normal_form: NormalFormConfig::default(),
        }
    }
}

/// One rung of the ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct RestrainStep {
    /// Index `j + 1` of the new vector.
    pub index: usize,
    pub time: f64,
    pub sample: usize,
    /// `I^j(t_{j+1})`.
    pub center: Vec<f64>,
    pub gradient: Vec<f64>,
    pub vector: PeriodicVector,
    pub period: f64,
    pub mu: f64,
    pub q: f64,
    /// `max |I^j(t) − I^j(t_j)|` over `[t_j, t_{j+1}]`.
    pub confinement: f64,
    /// `c_j` of the steepness escape.
    pub c: f64,
    pub escape: String,
}

/// A restrained-solution certificate (or its partial state on failure).
#[derive(Clone, Debug)]
pub struct RestrainFrame {
    pub n: usize,
    pub epsilon: f64,
    pub m: usize,
    pub tau_m: f64,
    pub mu0: f64,
    pub start: Vec<f64>,
    pub steps: Vec<RestrainStep>,
    pub frame: ResonanceFrame,
    pub condition_log: Vec<ConditionMargin>,
    pub eleven: Option<ConditionReport>,
    pub approximate: bool,
    pub condition_multiplier: f64,
    pub mu_multiplier: f64,
    pub gamma: f64,
    pub tau: f64,
    pub trajectory_hash: String,
}

impl RestrainFrame {
    pub fn mus(&self) -> Vec<f64> {
        std::iter::once(self.mu0).chain(self.steps.iter().map(|s| s.mu)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.steps.iter().map(|s| s.time)).chain([self.tau_m]).collect()
    }

    /// Re-derives the logged `(B_{j+1})`, `(C_j)` and nesting conditions
    /// from the stored sequences.
    pub fn reevaluate(&self) -> Vec<ConditionMargin> {
        let c = self.condition_multiplier;
        let mut out = vec![
            ConditionMargin::new("(x) mu_0 < c gamma".into(), self.mu0, c * self.gamma),
            ConditionMargin::new("(xi) mu_0 < c".into(), self.mu0, c),
        ];
        let mut prev: Option<&RestrainStep> = None;
        let mut prev_mu = self.mu0;
        for s in &self.steps {
            out.extend(step_margins(s, prev, prev_mu, self.m, self.epsilon, c));
            prev = Some(s);
            prev_mu = s.mu;
        }
        out
    }

    /// Structured text form of the certificate.
    pub fn to_text(&self) -> String {
        let mut t = String::from("restrain-certificate v1\n");
        let _ = writeln!(t, "n {}", self.n);
        let _ = writeln!(t, "epsilon {:e}", self.epsilon);
        let _ = writeln!(t, "m {}", self.m);
        let _ = writeln!(t, "tau_m {:e}", self.tau_m);
        let _ = writeln!(t, "gamma {:e}", self.gamma);
        let _ = writeln!(t, "tau {:e}", self.tau);
        let _ = writeln!(t, "condition_multiplier {:e}", self.condition_multiplier);
        let _ = writeln!(t, "mu_multiplier {:e}", self.mu_multiplier);
        let _ = writeln!(t, "approximate {}", self.approximate);
        let _ = writeln!(t, "trajectory_hash {}", self.trajectory_hash);
        let _ = writeln!(t, "start {:?}", self.start);
        let _ = writeln!(t, "mu {:?}", self.mus());
        let _ = writeln!(t, "times {:?}", self.times());
        for s in &self.steps {
            let _ = writeln!(
                t,
                "step {} t={:e} omega={} mu={:e} Q={:e} center={:?} confinement={:e} c={:e} escape={}",
                s.index, s.time, s.vector, s.mu, s.q, s.center, s.confinement, s.c, s.escape
            );
        }
        for m in &self.condition_log {
            let _ = writeln!(t, "margin {} lhs={:e} rhs={:e} {}", m.name, m.lhs, m.rhs, if m.holds { "ok" } else { "FAIL" });
        }
        if let Some(r) = &self.eleven {
            let _ = writeln!(t, "{r}");
        }
        t
    }
}

fn step_margins(
    s: &RestrainStep,
    prev: Option<&RestrainStep>,
    prev_mu: f64,
    m: usize,
    eps: f64,
    c: f64,
) -> Vec<ConditionMargin> {
    let j = s.index - 1;
    let k = s.index;
    let mut out = vec![
        ConditionMargin::new(format!("(C_{j}) |I^{j}(t) - I^{j}(t_{j})| < mu_{j}"), s.confinement, prev_mu),
        ConditionMargin::new(
            format!("(C_{j}) |grad h(I^{j}(t_{k})) - w_{k}| < mu_{k}"),
            sup_distance(&s.gradient, &s.vector.omega_f64()),
            s.mu,
        ),
        ConditionMargin::new(format!("(B_{k}) T_{k} mu_{k} < c"), s.period * s.mu, c),
        ConditionMargin::new(format!("(B_{k}) m T_{k} mu_{k} < c"), m as f64 * s.period * s.mu, c),
        ConditionMargin::new(format!("(B_{k}) mu_{k} < c"), s.mu, c),
        ConditionMargin::new(format!("(B_{k}) epsilon < mu_{k}^2"), eps, s.mu * s.mu),
        ConditionMargin::new(format!("(B_{k}) mu_{k} < c mu_{j}"), s.mu, c * prev_mu),
        ConditionMargin::new(format!("2 mu_{k} <= mu_{j}"), 2.0 * s.mu, prev_mu * (1.0 + 1e-15)),
    ];
    if let Some(p) = prev {
        out.push(ConditionMargin::new(
            format!("(B_{k}) |w_{k} - w_{j}| < c mu_{j}"),
            sup_distance(&s.vector.omega_f64(), &p.vector.omega_f64()),
            c * prev_mu,
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct RestrainFailure {
    /// Step `j` at which the ladder broke.
    pub step: usize,
    pub condition: String,
    pub detail: String,
    pub partial: RestrainFrame,
}

#[derive(Clone, Debug)]
pub enum RestrainOutcome {
    Certified(RestrainFrame),
    Failed(RestrainFailure),
}

impl RestrainOutcome {
    pub fn certificate(&self) -> Option<&RestrainFrame> {
        match self {
            Self::Certified(c) => Some(c),
            Self::Failed(_) => None,
        }
    }
}

/// Normalized actions along the trajectory, `None` where undefined.
type Track = Vec<Option<Vec<f64>>>;

/// Tries to certify that `traj` is restrained by `mu0` up to `budget`.
/// `q_schedule[j]` is the Dirichlet parameter of the `(j+1)`-th vector; when
/// empty, `Q_j = (c ε^{a_j} / 2)^{−(n−1)}` so that the approximation error
/// is at most `μ_j / 2`.
pub fn try_restrain(
    sys: &HamiltonianSystem,
    traj: &TrajectoryRecord,
    mu0: f64,
    budget: TimeBudget,
    q_schedule: &[f64],
    cfg: &RestrainConfig,
) -> Result<RestrainOutcome> {
    let n = sys.dim();
    if n < 2 {
        return Err(Error::InvalidArgument("the monitor needs n >= 2".into()));
    }
    if traj.is_empty() || traj.dim() != n {
        return Err(Error::InvalidArgument("trajectory is empty or has wrong dimension".into()));
    }
    let last = *traj.times.last().expect("nonempty");
    if last < budget.tau_m * (1.0 - 1e-12) && !traj.escaped {
        return Err(Error::Precondition(format!(
            "trajectory ends at t = {last} before the budget {} without escaping",
            budget.tau_m
        )));
    }
    if !q_schedule.is_empty() && q_schedule.len() < n {
        return Err(Error::InvalidArgument(format!("need {n} values of Q, got {}", q_schedule.len())));
    }
    let exps = exponents(n, cfg.tau)?;
    let morse = MorseParams::new(cfg.gamma, cfg.tau)?;
    let h = PolynomialHamiltonian::new(sys.integrable())?;
    let c = cfg.condition_multiplier;
    let end = traj.times.iter().rposition(|&t| t <= budget.tau_m).unwrap_or(0);

    let mut cert = RestrainFrame {
        n,
        epsilon: cfg.epsilon,
        m: budget.m,
        tau_m: budget.tau_m,
        mu0,
        start: traj.actions[0].clone(),
        steps: Vec::new(),
        frame: ResonanceFrame::empty(n),
        condition_log: Vec::new(),
        eleven: None,
        approximate: !cfg.normalize,
        condition_multiplier: c,
        mu_multiplier: cfg.mu_multiplier,
        gamma: cfg.gamma,
        tau: cfg.tau,
        trajectory_hash: traj.config_hash.clone(),
    };
    let fail = |cert: RestrainFrame, step: usize, condition: &str, detail: String| {
        Ok(RestrainOutcome::Failed(RestrainFailure { step, condition: condition.into(), detail, partial: cert }))
    };

    for m in [
        ConditionMargin::new("(x) mu_0 < c gamma".into(), mu0, c * cfg.gamma),
        ConditionMargin::new("(xi) mu_0 < c".into(), mu0, c),
    ] {
        let holds = m.holds;
        let name = m.name.clone();
        cert.condition_log.push(m);
        if !holds {
            return fail(cert, 0, &name, format!("mu_0 = {mu0:e}"));
        }
    }

    let mut track: Track = traj.actions[..=end].iter().cloned().map(Some).collect();
    let mut t_idx = 0;
    let mut mu_j = mu0;
    for j in 0..n {
        let start = track[t_idx].clone().expect("defined at t_j");
        let defined_end = (t_idx..=end).take_while(|&i| track[i].is_some()).last().unwrap_or(t_idx);
        let c_j = if j == 0 {
            mu0
        } else {
            let s = &cert.steps[j - 1];
            (s.period * s.mu / cert.frame.l_index() as f64).powf(cfg.tau)
        };
        let curve: Vec<Vec<f64>> = (t_idx..=defined_end)
            .map(|i| {
                let a = track[i].as_ref().expect("defined");
                let d: Vec<f64> = a.iter().zip(&start).map(|(x, y)| x - y).collect();
                let p = cert.frame.project(&d);
                start.iter().zip(p.iter()).map(|(s, p)| s + p).collect()
            })
            .collect();
        let times: Vec<f64> = traj.times[t_idx..=defined_end].to_vec();
        let moved = curve.iter().any(|x| sup_distance(x, &start) > 0.0);
        let (next, escape) = if !(c_j > 0.0 && c_j < 1.0) {
            return fail(cert, j, "steepness c_j in (0, 1)", format!("c_{j} = {c_j:e}"));
        } else if !moved {
            (defined_end, "curve-too-short".to_string())
        } else {
            let q = SteepnessQuery { times, curve, c: c_j, frame: cert.frame.clone() };
            let report = steepness_escape(&q, &h, morse, cfg.steepness_multiplier, c)?;
            match report.outcome {
                EscapeOutcome::Escaped { index, .. } => (t_idx + index, "escaped".to_string()),
                EscapeOutcome::CurveTooShort { .. } => (defined_end, "curve-too-short".to_string()),
                EscapeOutcome::NotFound { exit_time, max_projected_gradient, .. } => {
                    return fail(
                        cert,
                        j,
                        "steepness escape",
                        format!(
                            "curve left the c_{j} = {c_j:e} ball at t = {exit_time} with projected gradient at most {max_projected_gradient:e}"
                        ),
                    );
                }
            }
        };

        let confinement = (t_idx..=next)
            .map(|i| sup_distance(track[i].as_ref().expect("defined"), &start))
            .fold(0.0, f64::max);
        let center = track[next].clone().expect("defined");
        let gradient: Vec<f64> = h.gradient(&center).iter().copied().collect();
        let a_next = exps.a_j(j + 1);
        let mut q = match q_schedule.get(j) {
            Some(&q) => q,
            None => (0.5 * cfg.mu_multiplier * cfg.epsilon.powf(a_next)).powi(-((n - 1) as i32)),
        };
        let mut attempt = 0;
        let (approx, extended) = loop {
            let approx = match dirichlet_approx(&gradient, q, default_search_cap(q, n)) {
                Ok(a) => a,
                Err(e) => return fail(cert, j, "Dirichlet approximation", e.to_string()),
            };
            let extended = cert.frame.extend(approx.vector.clone());
            if extended.is_ok() || attempt == DEPENDENCE_RETRIES {
                break (approx, extended);
            }
            attempt += 1;
            q *= 2f64.powi((n - 1) as i32);
        };
        let period = approx.vector.period_f64();
        let mu_next = realized_mu(cfg.mu_multiplier, period, cfg.epsilon, a_next);
        let step = RestrainStep {
            index: j + 1,
            time: traj.times[next],
            sample: next,
            center: center.clone(),
            gradient,
            vector: approx.vector.clone(),
            period,
            mu: mu_next,
            q,
            confinement,
            c: c_j,
            escape,
        };
        let margins = step_margins(&step, cert.steps.last(), mu_j, budget.m, cfg.epsilon, c);
        let broken = margins.iter().find(|m| !m.holds).map(|m| m.name.clone());
        cert.condition_log.extend(margins);
        if j >= 1 {
            let s = &cert.steps[j - 1];
            let guard = (s.period * s.mu / cert.frame.l_index() as f64).powf(2.0 * cfg.tau);
            cert.condition_log.push(ConditionMargin::new(format!("(iv) mu_{} < c (T mu / L)^2tau", j + 1), mu_next, c * guard));
        }
        if let Some(name) = broken {
            cert.steps.push(step);
            return fail(cert, j, &name, "margin violated".into());
        }
        let frame = match extended {
            Ok(f) => f,
            Err(e) => {
                cert.steps.push(step);
                return fail(cert, j, "independence", e.to_string());
            }
        };
        cert.frame = frame;
        cert.steps.push(step);
        mu_j = mu_next;
        t_idx = next;

        if j + 1 < n {
            track = next_track(sys, traj, &track, t_idx, end, &center, &cert, cfg)?;
            if cfg.normalize && track.iter().all(Option::is_none) {
                cert.approximate = true;
            }
        }
    }

    let periods: Vec<f64> = cert.steps.iter().map(|s| s.period).collect();
    let mut l_indices = Vec::new();
    for j in 1..=n {
        let prefix = ResonanceFrame::new(n, cert.frame.vectors()[..j].to_vec())?;
        l_indices.push(prefix.l_index() as f64);
    }
    cert.eleven = Some(check_conditions(&ConditionParams {
        n,
        tau: cfg.tau,
        gamma: cfg.gamma,
        epsilon: cfg.epsilon,
        mu0,
        m: budget.m,
        periods,
        l_indices,
        mus: cert.steps.iter().map(|s| s.mu).collect(),
        multipliers: [c; 11],
    })?);
    Ok(RestrainOutcome::Certified(cert))
}

/// Normalized actions `I^{j+1}` from sample `from` on. They are defined
/// while the previous ones stay in `B(I_{j+1}, 2μ_{j+1})`.
#[allow(clippy::too_many_arguments)]
fn next_track(
    sys: &HamiltonianSystem,
    traj: &TrajectoryRecord,
    prev: &Track,
    from: usize,
    end: usize,
    center: &[f64],
    cert: &RestrainFrame,
    cfg: &RestrainConfig,
) -> Result<Track> {
    let mu = cert.steps.last().expect("nonempty").mu;
    let mut out: Track = vec![None; end + 1];
    let transform: Option<SymplecticTransform> = if cfg.normalize {
        let mus: Vec<f64> = cert.steps.iter().map(|s| s.mu).collect();
        match local_normal_form(sys, center, &cert.frame, &mus, &cfg.normal_form) {
            Ok(lnf) if lnf.inner.dropped_mass * mu <= mu / 10.0 => Some(lnf.inner.transform),
            _ => None,
        }
    } else {
        None
    };
    for i in from..=end {
        let Some(a) = prev[i].as_ref() else { break };
        if sup_distance(a, center) > 2.0 * mu {
            break;
        }
        out[i] = Some(match &transform {
            Some(t) => {
                let scaled: Vec<f64> = traj.actions[i].iter().zip(center).map(|(x, c)| (x - c) / mu).collect();
                let (_, back) = t.apply_inverse(&traj.angles[i], &scaled);
                back.iter().zip(center).map(|(x, c)| c + mu * x).collect()
            }
            None => a.clone(),
        });
    }
    if out[from].is_none() {
        out[from] = prev[from].clone();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityCheck {
    pub holds: bool,
    pub bound: f64,
    pub max_displacement: f64,
    /// First sample time violating the bound.
    pub witness: Option<f64>,
    /// `Σ_j μ_j` over the certificate radii plus the logged confinements.
    pub chain_bound: f64,
}

/// Checks `|I(t) − I(0)| < (n+1)² μ_0` on the samples up to `τ_m`.
pub fn restrained_implies_stable(cert: &RestrainFrame, traj: &TrajectoryRecord) -> StabilityCheck {
    let bound = ((cert.n + 1) * (cert.n + 1)) as f64 * cert.mu0;
    let start = &traj.actions[0];
    let mut max_displacement: f64 = 0.0;
    let mut witness = None;
    for (t, a) in traj.times.iter().zip(&traj.actions) {
        if *t > cert.tau_m {
            break;
        }
        let d = sup_distance(a, start);
        max_displacement = max_displacement.max(d);
        if d >= bound && witness.is_none() {
            witness = Some(*t);
        }
    }
    let chain_bound = cert.mus().iter().sum::<f64>() + cert.steps.iter().map(|s| s.confinement).sum::<f64>();
    StabilityCheck { holds: witness.is_none(), bound, max_displacement, witness, chain_bound }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Signed;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    #[test]
    fn exponents_n2_tau2() {
        let e = exponents(2, 2.0).unwrap();
        assert_eq!(e.a_list, vec![q(1, 144), q(1, 12)]);
        assert_eq!(e.a, q(1, 432));
        assert_eq!(e.b, q(1, 432));
        let e = exponents(1, 2.0).unwrap();
        assert_eq!(e.a, q(1, 24));
        assert!(exponents(2, 1.5).is_err());
    }

    #[test]
    fn exponent_monotonicity() {
        for n in 1..6 {
            for tau in [2.0, 2.5, 3.0, 7.0] {
                let e = exponents(n, tau).unwrap();
                assert!(e.a_list.windows(2).all(|w| w[0] < w[1]));
                assert!(e.a < e.a_list[0]);
                assert!(e.a.is_positive());
            }
        }
    }

    #[test]
    fn budgets() {
        let e = exponents(2, 2.0).unwrap();
        let g = Regularity::gevrey(1.0, 1.0).unwrap();
        let b = time_budget(1e-3, g, &e, 1.0).unwrap();
        assert_eq!(b.m, 1);
        assert!((b.tau_m - 1f64.exp()).abs() < 1e-12);
        assert_eq!(TimeBudget::new(Regularity::finite_diff(2, 7, 3).unwrap(), 10).tau_m, 1000.0);
        assert_eq!(time_budget(0.999999, g, &e, 1.0).unwrap().m, 1);
        assert!(time_budget(1.0, g, &e, 1.0).is_err());
    }

    fn params(eps: f64) -> ConditionParams {
        let e = exponents(2, 2.0).unwrap();
        let periods = vec![3.0, 7.0];
        ConditionParams {
            n: 2,
            tau: 2.0,
            gamma: 1.0,
            epsilon: eps,
            mu0: eps.powf(e.b_f64()),
            m: 1,
            mus: vec![realized_mu(1.0, 3.0, eps, e.a_j(1)), realized_mu(1.0, 7.0, eps, e.a_j(2))],
            periods,
            l_indices: vec![3.0, 7.0],
            multipliers: [1.0; 11],
        }
    }

    #[test]
    fn condition_iv_margin_in_epsilon_units() {
        let eps = 1e-12;
        let r = check_conditions(&params(eps)).unwrap();
        let iv = r.entries.iter().find(|e| e.label == "iv").unwrap();
        let expected = 1.0 / 144.0 - 2.0 / 432.0 + 3f64.ln() / (1.0 / eps).ln();
        assert!((iv.epsilon_margin - expected).abs() < 1e-12);
        assert!(iv.holds);
    }

    #[test]
    fn large_epsilon_fails_and_small_gamma_multiplier_flags_x() {
        let r = check_conditions(&params(0.5)).unwrap();
        assert!(!r.passed);
        assert!(r.failures().count() > 1);
        let mut p = params(1e-12);
        let base: Vec<bool> = check_conditions(&p).unwrap().entries.iter().map(|e| e.holds).collect();
        p.multipliers[9] = 1e-6;
        let r = check_conditions(&p).unwrap();
        let x = r.entries.iter().find(|e| e.label == "x").unwrap();
        assert!(!x.holds);
        let flipped: Vec<_> = r.entries.iter().zip(&base).filter(|(e, b)| e.holds != **b).collect();
        assert_eq!(flipped.len(), 1);
    }

    fn synthetic(n: usize, mu0: f64) -> (RestrainFrame, TrajectoryRecord) {
        let vectors = [vec![(1, 1), (0, 1)], vec![(0, 1), (1, 1)]];
        let mut steps = Vec::new();
        for j in 1..=n {
            let v = crate::diophantine::period_of_fractions(&vectors[j - 1]).unwrap();
            steps.push(RestrainStep {
                index: j,
                time: j as f64,
                sample: j,
                center: vec![0.0; n],
                gradient: v.omega_f64(),
                period: 1.0,
                mu: mu0 / 2f64.powi(j as i32),
                q: 1.0,
                confinement: 0.9 * mu0 / 2f64.powi(j as i32 - 1),
                c: 0.0,
                escape: String::new(),
                vector: v,
            });
        }
        let frame = ResonanceFrame::new(n, steps.iter().map(|s| s.vector.clone()).collect()).unwrap();
        let cert = RestrainFrame {
            n,
            epsilon: 1e-9,
            m: 1,
            tau_m: 10.0,
            mu0,
            start: vec![0.0; n],
            steps,
            frame,
            condition_log: Vec::new(),
            eleven: None,
            approximate: false,
            condition_multiplier: 1e3,
            mu_multiplier: 1.0,
            gamma: 1.0,
            tau: 2.0,
            trajectory_hash: String::new(),
        };
        // Drift of exactly μ_j on each interval, all in the same direction.
        let mut times = Vec::new();
        let mut actions = Vec::new();
        let mut pos = 0.0;
        for j in 0..=n {
            times.push(j as f64);
            actions.push(vec![pos; n]);
            pos += mu0 / 2f64.powi(j as i32);
        }
        times.push(10.0);
        actions.push(vec![pos; n]);
        let k = times.len();
        let traj = TrajectoryRecord {
            times,
            angles: vec![vec![0.0; n]; k],
            actions,
            energy: vec![0.0; k],
            escaped: false,
            max_energy_deviation: 0.0,
            energy_alarm: false,
            seed: None,
            config_hash: String::new(),
        };
        (cert, traj)
    }

    #[test]
    fn synthetic_chain_stays_inside_bound() {
        let (cert, traj) = synthetic(2, 0.01);
        let r = restrained_implies_stable(&cert, &traj);
        assert!(r.holds);
        assert!(r.max_displacement < 2.0 * 0.01);
        assert!(r.chain_bound < 9.0 * 0.01);
        assert!(cert.reevaluate().iter().all(|m| m.holds));
    }

    #[test]
    fn violated_bound_has_witness() {
        let (cert, mut traj) = synthetic(2, 0.01);
        traj.actions[2] = vec![0.5, 0.0];
        let r = restrained_implies_stable(&cert, &traj);
        assert!(!r.holds);
        assert_eq!(r.witness, Some(2.0));
    }
}
