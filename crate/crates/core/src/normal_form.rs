//! Averaging along periodic frequencies.
//!
//! For a periodic `ω` the time average along the linear flow of
//! `l_ω(I) = ω·I` keeps exactly the Fourier modes with `k·ω = 0`, and the
//! generator of the averaging transformation is obtained by dividing the
//! remaining modes by `2πi k·ω`. Transformations are time-one maps of
//! Hamiltonian flows, applied to functions by truncated Lie series.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::diophantine::{PeriodicVector, ResonanceFrame};
use crate::dynamics::TimeBudget;
use crate::error::{Error, Result};
use crate::norms::{radius_contraction, GridSpec, NearIdentityMap};
use crate::series::{
    Coordinate, FourierTaylorSeries, HamiltonianSystem, MultiIndex, Truncated,
};

/// Relative slack on the small-divisor bound `|k·ω| ≥ 1/T`.
const DIVISOR_SLACK: f64 = 1e-9;

/// Below this fraction of the input size a growing remainder is roundoff,
/// not divergence.
const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Pointwise tolerance of the grid half of [`verify_resonant_symmetry`].
const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct NormalFormConfig {
    /// Number of averaging iterations per frequency.
    pub m: usize,
    /// Number of brackets kept in each Lie series.
    pub lie_order: u32,
    /// Gevrey exponent used for the radius schedule and the time budget.
    pub alpha: f64,
    /// Initial Gevrey radius `L`.
    pub gevrey_radius: f64,
    /// `μ_i`, used only to report the parameter conditions.
    pub mu_schedule: Vec<f64>,
    /// Implicit constant applied to every `⋖` condition.
    pub condition_multiplier: f64,
    /// Grid on which local remainders and displacements are measured.
    pub sample_grid: GridSpec,
}

impl Default for NormalFormConfig {
    fn default() -> Self {
        Self {
            m: 4,
            lie_order: 4,
            alpha: 1.0,
            gevrey_radius: 1.0,
            mu_schedule: Vec::new(),
            condition_multiplier: 1.0,
            sample_grid: GridSpec { angle_points: 12, action_points: 3 },
        }
    }
}

impl NormalFormConfig {
    pub fn new(m: usize, lie_order: u32) -> Result<Self> {
        let cfg = Self { m, lie_order, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        if self.lie_order == 0 {
            return Err(Error::InvalidArgument("Lie order must be at least 1".into()));
        }
        if !(self.alpha >= 1.0) || !(self.gevrey_radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need alpha >= 1 and L > 0, got alpha = {}, L = {}",
                self.alpha, self.gevrey_radius
            )));
        }
        if self.mu_schedule.iter().any(|&mu| !(mu > 0.0)) {
            return Err(Error::InvalidArgument("every mu must be positive".into()));
        }
        Ok(())
    }

    /// `ρ_i = 2^i`.
    pub fn rho(&self, i: usize) -> f64 {
        2f64.powi(i as i32)
    }

    /// Contraction constant `C`, which lies in `(0, 1]` for `α ≥ 1`.
    pub fn contraction(&self, n: usize) -> f64 {
        radius_contraction(n, self.alpha)
    }

    /// `L_i = C^i L`.
    pub fn gevrey_radius_at(&self, i: usize, n: usize) -> f64 {
        self.contraction(n).powi(i as i32) * self.gevrey_radius
    }
}

/// Keeps the modes with `k·ω = 0`.
pub fn resonant_average(f: &FourierTaylorSeries, w: &PeriodicVector) -> FourierTaylorSeries {
    f.filter(|idx| w.annihilates(&idx.angle))
}

/// Generator `χ` with `{χ, l_ω} = f − [f]_ω`.
pub fn homological_solve(f: &FourierTaylorSeries, w: &PeriodicVector) -> Result<FourierTaylorSeries> {
    if f.dim() != w.dim() {
        return Err(Error::DomainMismatch(format!(
            "series has dimension {}, frequency {}",
            f.dim(),
            w.dim()
        )));
    }
    let period = w.period_f64();
    let omega = w.omega_f64();
    let mut chi = f.filter(|_| false);
    for (idx, c) in f.terms() {
        if w.annihilates(&idx.angle) {
            continue;
        }
        let lattice_dot: i64 = w.lattice().iter().zip(&idx.angle).map(|(&a, &k)| a * k as i64).sum();
        let divisor = lattice_dot as f64 / period;
        let direct: f64 = omega.iter().zip(&idx.angle).map(|(w, &k)| w * k as f64).sum();
        if divisor.abs() < (1.0 - DIVISOR_SLACK) / period
            || (divisor - direct).abs() > DIVISOR_SLACK * (1.0 + divisor.abs())
        {
            return Err(Error::Inconsistent(format!(
                "divisor k·ω = {direct} for k = {:?} violates |k·ω| >= 1/T = {}",
                idx.angle,
                1.0 / period
            )));
        }
        chi.add_coeff(idx.clone(), c / Complex64::new(0.0, TAU * divisor));
    }
    Ok(chi)
}

/// `H ∘ Φ_χ = H + {H,χ} + ½{{H,χ},χ} + …` with `order` brackets.
pub fn lie_transform(h: &FourierTaylorSeries, chi: &FourierTaylorSeries, order: u32) -> Result<Truncated> {
    lie_series(h, h, chi, order, 0)
}

/// With `shift = 0`: `start + Σ_{k=1}^{order} ad_χ^k(first)/k!`.
/// With `shift = 1`: `start + Σ_{k=1}^{order} ad_χ^{k−1}(first)/k!`.
/// Here `ad_χ F = {F, χ}`.
fn lie_series(
    start: &FourierTaylorSeries,
    first: &FourierTaylorSeries,
    chi: &FourierTaylorSeries,
    order: u32,
    shift: u32,
) -> Result<Truncated> {
    if order == 0 {
        return Err(Error::InvalidArgument("Lie order must be at least 1".into()));
    }
    let mut out = start.clone();
    let mut term = first.clone();
    let mut dropped = 0.0;
    if shift > 0 {
        out = out.add(&term)?;
    }
    let extra = if shift > 0 { order - 1 } else { order };
    for k in 1..=extra {
        let b = term.poisson_bracket(chi)?;
        let denom = (k + shift) as f64;
        dropped += b.dropped_mass / denom;
        term = b.series.scale(1.0 / denom).prune(0.0);
        if term.is_empty() {
            break;
        }
        out = out.add(&term)?;
    }
    Ok(Truncated { series: out.prune(0.0), dropped_mass: dropped })
}

/// Displacement series of the time-one map of `χ`: `Δθ_j` and `ΔI_j` as
/// Lie series of the coordinate functions.
pub fn flow_displacement(chi: &FourierTaylorSeries, order: u32) -> Result<NearIdentityMap> {
    let n = chi.dim();
    let mut map = NearIdentityMap::identity(chi);
    let zero = chi.filter(|_| false);
    for j in 0..n {
        let d_theta = chi.partial_derivative(Coordinate::Action(j)).with_center(chi.center().to_vec())?;
        let d_action = chi.partial_derivative(Coordinate::Angle(j)).scale(-1.0);
        map.angle_shift[j] = lie_series(&zero, &d_theta, chi, order, 1)?.series;
        map.action_shift[j] = lie_series(&zero, &d_action, chi, order, 1)?.series;
    }
    Ok(map)
}

fn apply_displacement(map: &NearIdentityMap, theta: &mut [f64], action: &mut [f64]) {
    let dt: Vec<f64> = map.angle_shift.iter().map(|s| s.evaluate_complex(theta, action).re).collect();
    let da: Vec<f64> = map.action_shift.iter().map(|s| s.evaluate_complex(theta, action).re).collect();
    for (t, d) in theta.iter_mut().zip(dt) {
        *t = (*t + d).rem_euclid(1.0);
    }
    for (a, d) in action.iter_mut().zip(da) {
        *a += d;
    }
}

/// Composition `Φ_{χ_1} ∘ Φ_{χ_2} ∘ … ∘ Φ_{χ_N}` of time-one maps.
#[derive(Clone, Debug)]
pub struct SymplecticTransform {
    generators: Vec<FourierTaylorSeries>,
    order: u32,
    forward: Vec<NearIdentityMap>,
    backward: Vec<NearIdentityMap>,
}

impl SymplecticTransform {
    pub fn identity(order: u32) -> Self {
        Self { generators: Vec::new(), order, forward: Vec::new(), backward: Vec::new() }
    }

    pub fn from_generators(generators: Vec<FourierTaylorSeries>, order: u32) -> Result<Self> {
        let forward = generators.iter().map(|g| flow_displacement(g, order)).collect::<Result<_>>()?;
        let backward = generators
            .iter()
            .map(|g| flow_displacement(&g.scale(-1.0), order))
            .collect::<Result<_>>()?;
        Ok(Self { generators, order, forward, backward })
    }

    pub fn generators(&self) -> &[FourierTaylorSeries] {
        &self.generators
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn is_identity(&self) -> bool {
        self.generators.iter().all(FourierTaylorSeries::is_empty)
    }

    /// `outer ∘ self`.
    pub fn after(&self, outer: &Self) -> Self {
        fn cat<T: Clone>(a: &[T], b: &[T]) -> Vec<T> {
            a.iter().chain(b).cloned().collect()
        }
        Self {
            generators: cat(&outer.generators, &self.generators),
            order: self.order.max(outer.order),
            forward: cat(&outer.forward, &self.forward),
            backward: cat(&outer.backward, &self.backward),
        }
    }

    /// `F ∘ Φ`.
    pub fn pullback(&self, f: &FourierTaylorSeries) -> Result<Truncated> {
        let mut out = f.clone();
        let mut dropped = 0.0;
        for g in &self.generators {
            if g.is_empty() {
                continue;
            }
            let t = lie_transform(&out, g, self.order)?;
            out = t.series;
            dropped += t.dropped_mass;
        }
        Ok(Truncated { series: out, dropped_mass: dropped })
    }

    /// `Φ(θ, I)`, with angles reduced to `[0, 1)`.
    pub fn apply(&self, theta: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut t, mut a) = (theta.to_vec(), action.to_vec());
        for map in self.forward.iter().rev() {
            apply_displacement(map, &mut t, &mut a);
        }
        (t, a)
    }

    /// `Φ^{−1}(θ, I)` through the reversed flows of `−χ`.
    pub fn apply_inverse(&self, theta: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut t, mut a) = (theta.to_vec(), action.to_vec());
        for map in &self.backward {
            apply_displacement(map, &mut t, &mut a);
        }
        (t, a)
    }

    /// Sum over the factors of the sup bounds of the action displacements.
    pub fn displacement_bound(&self) -> f64 {
        self.forward.iter().map(NearIdentityMap::action_displacement).sum()
    }
}

/// One averaging iteration.
#[derive(Clone, Debug)]
pub struct AveragingStep {
    pub frequency: PeriodicVector,
    /// `[f]_ω` of the perturbation entering the step.
    pub resonant_part: FourierTaylorSeries,
    /// Non-resonant part removed by the step.
    pub removed: FourierTaylorSeries,
    pub generator: FourierTaylorSeries,
    pub transform_displacement: NearIdentityMap,
    /// Sup bound of the non-resonant part left after the step.
    pub remainder_norm: f64,
    pub dropped_mass: f64,
}

impl AveragingStep {
    /// Largest `|{χ, l_ω} − (f − [f])|` over the coefficients.
    pub fn homological_residue(&self) -> Result<f64> {
        let l = linear_part(&self.generator, &self.frequency)?;
        let lhs = self.generator.poisson_bracket_full(&l)?;
        Ok(lhs.sub(&self.removed)?.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max))
    }
}

#[derive(Clone, Debug)]
pub struct AveragingResult {
    pub g: FourierTaylorSeries,
    pub remainder: FourierTaylorSeries,
    pub steps: Vec<AveragingStep>,
    pub transform: SymplecticTransform,
    pub initial_norm: f64,
    pub dropped_mass: f64,
}

impl AveragingResult {
    /// Remainder norms after each iteration.
    pub fn remainder_trace(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.remainder_norm).collect()
    }

    /// Ratios of consecutive remainder norms, starting from the input.
    pub fn contraction_factors(&self) -> Vec<f64> {
        let mut prev = self.initial_norm;
        self.steps
            .iter()
            .map(|s| {
                let r = if prev == 0.0 { 0.0 } else { s.remainder_norm / prev };
                prev = s.remainder_norm;
                r
            })
            .collect()
    }

    pub fn remainder_norm(&self) -> f64 {
        self.remainder.sup_bound()
    }
}

fn linear_part(like: &FourierTaylorSeries, w: &PeriodicVector) -> Result<FourierTaylorSeries> {
    FourierTaylorSeries::linear(like.domain(), &w.omega_f64()).with_center(like.center().to_vec())
}

/// `m` averaging iterations of `H = l_ω + f` along `ω`. Returns
/// `H ∘ Φ = l_ω + g + remainder` with `{g, l_ω} = 0` mode-wise.
pub fn periodic_averaging(
    h: &FourierTaylorSeries,
    w: &PeriodicVector,
    cfg: &NormalFormConfig,
) -> Result<AveragingResult> {
    cfg.validate()?;
    let l = linear_part(h, w)?;
    let split = |current: &FourierTaylorSeries| -> Result<(FourierTaylorSeries, FourierTaylorSeries)> {
        let f = current.sub(&l)?.prune(0.0);
        let g = resonant_average(&f, w);
        let rest = f.filter(|idx| !w.annihilates(&idx.angle));
        Ok((g, rest))
    };
    let mut current = h.clone();
    let (_, rest0) = split(&current)?;
    let initial_norm = rest0.sup_bound();
    let floor = ROUNDOFF_FLOOR * current.sub(&l)?.sup_bound();
    let mut steps: Vec<AveragingStep> = Vec::new();
    let mut trace = vec![initial_norm];
    let mut dropped = 0.0;
    for iteration in 1..=cfg.m {
        let (g, rest) = split(&current)?;
        if rest.is_empty() {
            break;
        }
        let chi = homological_solve(&rest, w)?;
        let t = lie_transform(&current, &chi, cfg.lie_order)?;
        current = t.series;
        dropped += t.dropped_mass;
        let (_, after) = split(&current)?;
        let norm = after.sup_bound();
        let previous = *trace.last().expect("nonempty");
        trace.push(norm);
        if norm > previous && norm > floor {
            return Err(Error::Divergence { iteration, previous, current: norm, trace });
        }
        steps.push(AveragingStep {
            frequency: w.clone(),
            resonant_part: g,
            removed: rest,
            transform_displacement: flow_displacement(&chi, cfg.lie_order)?,
            generator: chi,
            remainder_norm: norm,
            dropped_mass: t.dropped_mass,
        });
    }
    let (g, remainder) = split(&current)?;
    let transform = SymplecticTransform {
        generators: steps.iter().map(|s| s.generator.clone()).collect(),
        order: cfg.lie_order,
        forward: steps.iter().map(|s| s.transform_displacement.clone()).collect(),
        backward: steps
            .iter()
            .map(|s| flow_displacement(&s.generator.scale(-1.0), cfg.lie_order))
            .collect::<Result<_>>()?,
    };
    Ok(AveragingResult { g, remainder, steps, transform, initial_norm, dropped_mass: dropped })
}

/// A `⋖`/`<` condition evaluated with its implicit constant.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionMargin {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ConditionMargin {
    pub fn new(name: String, lhs: f64, rhs: f64) -> Self {
        Self { name, lhs, rhs, holds: lhs < rhs }
    }

    /// `rhs / lhs`; above 1 when the condition holds.
    pub fn margin(&self) -> f64 {
        if self.lhs == 0.0 {
            f64::INFINITY
        } else {
            self.rhs / self.lhs
        }
    }
}

/// Margins of the conditions on `(T_i, μ_i, m)` for a frame of `j` vectors.
pub fn frame_condition_margins(frame: &ResonanceFrame, cfg: &NormalFormConfig) -> Vec<ConditionMargin> {
    let c = cfg.condition_multiplier;
    let m = cfg.m as f64;
    let mut out = Vec::new();
    for (i, w) in frame.vectors().iter().enumerate() {
        let Some(&mu) = cfg.mu_schedule.get(i) else { break };
        let t = w.period_f64();
        let idx = i + 1;
        out.push(ConditionMargin::new(format!("T_{idx} mu_{idx} < c"), t * mu, c));
        out.push(ConditionMargin::new(format!("m T_{idx} mu_{idx} < c"), m * t * mu, c));
        if i > 0 {
            let prev_mu = cfg.mu_schedule[i - 1];
            let prev = frame.vectors()[i - 1].omega_f64();
            let gap = crate::series::sup_distance(&w.omega_f64(), &prev);
            out.push(ConditionMargin::new(format!("|w_{idx} - w_{i}| < c mu_{i}"), gap, c * prev_mu));
            out.push(ConditionMargin::new(format!("mu_{idx} < c mu_{i}"), mu, c * prev_mu));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormCertificates {
    pub g_norm: f64,
    pub remainder_norm: f64,
    pub displacement_norm: f64,
}

#[derive(Clone, Debug)]
pub struct NormalFormResult {
    pub frame: ResonanceFrame,
    /// `steps[i]` are the iterations along the `(i+1)`-th frame vector.
    pub steps: Vec<Vec<AveragingStep>>,
    pub g: FourierTaylorSeries,
    pub remainder: FourierTaylorSeries,
    pub transform: SymplecticTransform,
    pub norm_certificates: NormCertificates,
    pub symmetry_checked: bool,
    pub margins: Vec<ConditionMargin>,
    pub dropped_mass: f64,
}

struct Composed {
    steps: Vec<Vec<AveragingStep>>,
    g: FourierTaylorSeries,
    remainder: FourierTaylorSeries,
    transform: SymplecticTransform,
    dropped_mass: f64,
}

fn compose_recursive(h: &FourierTaylorSeries, vectors: &[PeriodicVector], cfg: &NormalFormConfig) -> Result<Composed> {
    let (last, inner) = vectors.split_last().expect("frame is nonempty");
    let outer = periodic_averaging(h, last, cfg)?;
    if inner.is_empty() {
        return Ok(Composed {
            steps: vec![outer.steps],
            g: outer.g,
            remainder: outer.remainder,
            transform: outer.transform,
            dropped_mass: outer.dropped_mass,
        });
    }
    let l_j = linear_part(h, last)?;
    let l_prev = linear_part(h, inner.last().expect("nonempty"))?;
    let shift = l_j.sub(&l_prev)?.prune(0.0);
    let rewritten = l_prev.add(&shift)?.add(&outer.g)?;
    let rec = compose_recursive(&rewritten, inner, cfg)?;
    let g = shift.scale(-1.0).add(&rec.g)?.prune(0.0);
    let pulled = rec.transform.pullback(&outer.remainder)?;
    let remainder = rec.remainder.add(&pulled.series)?.prune(0.0);
    let mut steps = rec.steps;
    steps.push(outer.steps);
    Ok(Composed {
        steps,
        g,
        remainder,
        transform: rec.transform.after(&outer.transform),
        dropped_mass: outer.dropped_mass + rec.dropped_mass + pulled.dropped_mass,
    })
}

/// Normal form of `H = l_j + f` with respect to every vector of `frame`,
/// where `l_j` is the linear Hamiltonian of the last vector.
pub fn composed_normal_form(
    h: &FourierTaylorSeries,
    frame: &ResonanceFrame,
    cfg: &NormalFormConfig,
) -> Result<NormalFormResult> {
    cfg.validate()?;
    if frame.is_empty() {
        return Err(Error::InvalidArgument("frame has no vectors".into()));
    }
    if frame.dim() != h.dim() {
        return Err(Error::DomainMismatch(format!(
            "frame dimension {} and series dimension {}",
            frame.dim(),
            h.dim()
        )));
    }
    let c = compose_recursive(h, frame.vectors(), cfg)?;
    let symmetry_checked = verify_resonant_symmetry(&c.g, frame);
    if !symmetry_checked {
        return Err(Error::Inconsistent("normal form is not resonant with the frame".into()));
    }
    Ok(NormalFormResult {
        frame: frame.clone(),
        norm_certificates: NormCertificates {
            g_norm: c.g.sup_bound(),
            remainder_norm: c.remainder.sup_bound(),
            displacement_norm: c.transform.displacement_bound(),
        },
        steps: c.steps,
        g: c.g,
        remainder: c.remainder,
        transform: c.transform,
        symmetry_checked,
        margins: frame_condition_margins(frame, cfg),
        dropped_mass: c.dropped_mass,
    })
}

/// True iff every mode of `g` is resonant with the frame, and the angle
/// gradient of `g` has no component orthogonal to `Λ` on a sample grid.
pub fn verify_resonant_symmetry(g: &FourierTaylorSeries, frame: &ResonanceFrame) -> bool {
    if !g.terms().all(|(idx, _)| frame.is_resonant(&idx.angle)) {
        return false;
    }
    if g.is_empty() || frame.is_empty() {
        return true;
    }
    let n = g.dim();
    let grads: Vec<FourierTaylorSeries> = (0..n).map(|j| g.partial_derivative(Coordinate::Angle(j))).collect();
    let tol = SYMMETRY_TOLERANCE * g.sup_bound().max(1.0);
    let grid = GridSpec { angle_points: 5, action_points: 3 };
    sample_points(g, grid, g.domain().radius()).into_iter().all(|(theta, action)| {
        let v: Vec<f64> = grads.iter().map(|d| d.evaluate_complex(&theta, &action).re).collect();
        frame.project_perp(&v).amax() < tol
    })
}

/// Regular grid on `T^n × [c − r, c + r]^n`.
fn sample_points(like: &FourierTaylorSeries, grid: GridSpec, r: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = like.dim();
    let angles: Vec<f64> = (0..grid.angle_points).map(|i| i as f64 / grid.angle_points as f64).collect();
    let actions: Vec<f64> = if grid.action_points <= 1 {
        vec![0.0]
    } else {
        (0..grid.action_points)
            .map(|i| -r + 2.0 * r * i as f64 / (grid.action_points - 1) as f64)
            .collect()
    };
    let mut out = Vec::new();
    let na = angles.len();
    let nb = actions.len();
    let total = na.pow(n as u32) * nb.pow(n as u32);
    for mut code in 0..total {
        let mut theta = vec![0.0; n];
        let mut action = like.center().to_vec();
        for t in theta.iter_mut() {
            *t = angles[code % na];
            code /= na;
        }
        for a in action.iter_mut() {
            *a += actions[code % nb];
            code /= nb;
        }
        out.push((theta, action));
    }
    out
}

/// Result of translating and rescaling the actions around a point.
#[derive(Clone, Debug)]
pub struct ScaledHamiltonian {
    pub center: Vec<f64>,
    pub mu: f64,
    pub frequency: PeriodicVector,
    /// `l_ω` in the scaled actions.
    pub linear: FourierTaylorSeries,
    /// Gradient mismatch plus the Taylor block of order at least two.
    pub h_tilde: FourierTaylorSeries,
    /// `h̃ + μ^{−1} f∘σ`.
    pub f_tilde: FourierTaylorSeries,
    pub gradient_mismatch: f64,
    pub f_tilde_norm: f64,
    /// `|f̃| < c·μ` with the configured multiplier.
    pub size_condition: ConditionMargin,
}

impl ScaledHamiltonian {
    pub fn total(&self) -> Result<FourierTaylorSeries> {
        self.linear.add(&self.f_tilde)
    }
}

/// `H̃ = μ^{−1} H(θ, I_c + μĨ)` split as `l_ω + f̃`, defined for
/// `|Ĩ| ≤ scaled_radius`. The constant `h(I_c)` is discarded.
pub fn localize_and_scale(
    sys: &HamiltonianSystem,
    center: &[f64],
    mu: f64,
    omega: &PeriodicVector,
    scaled_radius: f64,
    multiplier: f64,
) -> Result<ScaledHamiltonian> {
    let n = sys.dim();
    if center.len() != n || omega.dim() != n {
        return Err(Error::InvalidArgument("center or frequency has wrong dimension".into()));
    }
    if !(mu > 0.0) || !(scaled_radius > 0.0) {
        return Err(Error::InvalidArgument("mu and radius must be positive".into()));
    }
    let h = sys.integrable();
    let reach = crate::series::sup_distance(center, h.center()) + scaled_radius * mu;
    if reach > h.domain().radius() {
        return Err(Error::Domain(format!(
            "ball of radius {} around {center:?} leaves the domain of radius {}",
            scaled_radius * mu,
            h.domain().radius()
        )));
    }
    let local = |s: &FourierTaylorSeries| -> Result<FourierTaylorSeries> {
        Ok(s.recenter(center, scaled_radius * mu)?.zoom(mu, scaled_radius)?.scale(1.0 / mu))
    };
    let h_loc = local(h)?;
    let w = omega.omega_f64();
    let zero_idx = MultiIndex::zero(n);
    let mut grad = vec![0.0; n];
    for (j, g) in grad.iter_mut().enumerate() {
        let mut l = vec![0; n];
        l[j] = 1;
        *g = h_loc.coeff(&MultiIndex::new(vec![0; n], l)).re;
    }
    let gradient_mismatch = crate::series::sup_distance(&grad, &w);
    if gradient_mismatch >= mu {
        return Err(Error::Precondition(format!(
            "|grad h(I) - w| = {gradient_mismatch:e} is not below mu = {mu:e}"
        )));
    }
    let linear = FourierTaylorSeries::linear(h_loc.domain(), &w);
    let h_tilde = h_loc.filter(|idx| *idx != zero_idx).sub(&linear)?.prune(0.0);
    let f_tilde = h_tilde.add(&local(sys.perturbation())?)?.prune(0.0);
    let f_tilde_norm = f_tilde.sup_bound();
    Ok(ScaledHamiltonian {
        center: center.to_vec(),
        mu,
        frequency: omega.clone(),
        linear,
        h_tilde,
        f_tilde,
        gradient_mismatch,
        f_tilde_norm,
        size_condition: ConditionMargin::new("|f~| < c mu".into(), f_tilde_norm, multiplier * mu),
    })
}

#[derive(Clone, Debug)]
pub struct LocalNormalForm {
    pub scaled: ScaledHamiltonian,
    pub inner: NormalFormResult,
    /// `g_j` in the original actions, centred at the localisation point.
    pub g: FourierTaylorSeries,
    /// `f_j` in the original actions.
    pub remainder: FourierTaylorSeries,
    /// Sampled `sup |∂_θ f_j|` on `T^n × B(I_c, 2ρ_1 μ_j)`.
    pub remainder_angle_gradient: f64,
    /// `μ_j / τ_m`.
    pub target: f64,
    /// Sampled `sup |Π_I Ψ_j − Id|`.
    pub displacement: f64,
    pub margins: Vec<ConditionMargin>,
}

impl LocalNormalForm {
    pub fn meets_target(&self) -> bool {
        self.remainder_angle_gradient < self.target
    }
}

/// Local normal form `H ∘ Ψ_j = h + g_j + f_j` around `center`.
pub fn local_normal_form(
    sys: &HamiltonianSystem,
    center: &[f64],
    frame: &ResonanceFrame,
    mu_schedule: &[f64],
    cfg: &NormalFormConfig,
) -> Result<LocalNormalForm> {
    let j = frame.len();
    if j == 0 || mu_schedule.len() < j {
        return Err(Error::InvalidArgument(format!(
            "frame of {j} vectors needs {j} values of mu, got {}",
            mu_schedule.len()
        )));
    }
    let eps = sys.epsilon();
    for (i, &mu) in mu_schedule[..j].iter().enumerate() {
        if !(eps < mu * mu) {
            return Err(Error::Precondition(format!("epsilon = {eps:e} is not below mu_{}^2 = {:e}", i + 1, mu * mu)));
        }
    }
    let mu = mu_schedule[j - 1];
    let omega = &frame.vectors()[j - 1];
    let outer = 3.0 * cfg.rho(j);
    let inner_radius = 2.0 * cfg.rho(1);
    let scaled = localize_and_scale(sys, center, mu, omega, outer, cfg.condition_multiplier)?;
    let mut inner_cfg = cfg.clone();
    inner_cfg.mu_schedule = mu_schedule[..j].to_vec();
    let inner = composed_normal_form(&scaled.total()?, frame, &inner_cfg)?;

    let s_tilde = inner.g.sub(&scaled.h_tilde)?.prune(0.0);
    let back = |s: &FourierTaylorSeries, radius: f64| s.scale(mu).unzoom(center, mu, radius * mu);
    let g = back(&s_tilde, outer)?;
    let remainder = back(&inner.remainder, outer)?;

    let n = sys.dim();
    let grads: Vec<FourierTaylorSeries> =
        (0..n).map(|i| remainder.partial_derivative(Coordinate::Angle(i))).collect();
    let points = sample_points(&remainder, cfg.sample_grid, inner_radius * mu);
    let remainder_angle_gradient = points
        .iter()
        .map(|(t, a)| grads.iter().map(|d| d.evaluate_complex(t, a).re.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);

    let scaled_points = sample_points(&inner.g, cfg.sample_grid, inner_radius);
    let displacement = if inner.transform.is_identity() {
        0.0
    } else {
        scaled_points
            .iter()
            .map(|(t, a)| {
                let (_, a2) = inner.transform.apply(t, a);
                mu * crate::series::sup_distance(&a2, a)
            })
            .fold(0.0, f64::max)
    };

    let c = cfg.condition_multiplier;
    let mut margins = inner.margins.clone();
    for (i, &m) in mu_schedule[..j].iter().enumerate() {
        margins.push(ConditionMargin::new(format!("mu_{} < c", i + 1), m, c));
        margins.push(ConditionMargin::new(format!("epsilon < mu_{}^2", i + 1), eps, m * m));
    }
    margins.push(ConditionMargin::new(format!("|grad h(I) - w_{j}| < mu_{j}"), scaled.gradient_mismatch, mu));
    margins.push(scaled.size_condition.clone());
    margins.push(ConditionMargin::new(format!("|Pi_I Psi_{j} - Id| < c mu_{j}"), displacement, c * mu));

    Ok(LocalNormalForm {
        target: mu / TimeBudget::new(sys.regularity(), cfg.m).tau_m,
        scaled,
        inner,
        g,
        remainder,
        remainder_angle_gradient,
        displacement,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diophantine::period_of_fractions;
    use crate::series::{Domain, Regularity};

    fn dom(n: usize) -> Domain {
        Domain::new(n, 1.0).unwrap()
    }

    fn pv(fr: &[(i64, i64)]) -> PeriodicVector {
        period_of_fractions(fr).unwrap()
    }

    fn max_coeff_diff(a: &FourierTaylorSeries, b: &FourierTaylorSeries) -> f64 {
        a.sub(b).unwrap().terms().map(|(_, c)| c.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn resonant_average_examples() {
        let w = pv(&[(1, 1), (0, 1)]);
        let f = FourierTaylorSeries::cosine(dom(2), &[1, 0], 1.0);
        assert!(resonant_average(&f, &w).is_empty());
        let f = FourierTaylorSeries::cosine(dom(2), &[0, 1], 1.0);
        assert_eq!(resonant_average(&f, &w), f);
        let w = pv(&[(1, 1), (-1, 1)]);
        let f = FourierTaylorSeries::cosine(dom(2), &[1, 1], 1.0);
        assert_eq!(resonant_average(&f, &w), f);
    }

    #[test]
    fn homological_solution_of_cosine() {
        let w = pv(&[(1, 1), (0, 1)]);
        let f = FourierTaylorSeries::cosine(dom(2), &[1, 0], 1.0);
        let chi = homological_solve(&f, &w).unwrap();
        let expected = FourierTaylorSeries::sine(dom(2), &[1, 0], 1.0 / TAU);
        assert!(max_coeff_diff(&chi, &expected) < 1e-15);
        let l = FourierTaylorSeries::linear(dom(2), &[1.0, 0.0]);
        let back = chi.poisson_bracket_full(&l).unwrap();
        assert!(max_coeff_diff(&back, &f) < 1e-15);
        assert!(homological_solve(&FourierTaylorSeries::cosine(dom(2), &[0, 1], 1.0), &w).unwrap().is_empty());
        assert!(homological_solve(&f.filter(|_| false), &w).unwrap().is_empty());
    }

    #[test]
    fn lie_transform_first_order() {
        let w = pv(&[(1, 1), (1, 2)]);
        let mut f = FourierTaylorSeries::cosine(dom(2), &[1, 0], 0.3);
        f.add_cos(&[1, 1], &[1, 0], 0.2);
        let chi = homological_solve(&f, &w).unwrap();
        let l = FourierTaylorSeries::linear(dom(2), &w.omega_f64());
        let out = lie_transform(&l, &chi, 1).unwrap().series;
        let expected = l.sub(&f.sub(&resonant_average(&f, &w)).unwrap()).unwrap();
        assert!(max_coeff_diff(&out, &expected) < 1e-14);
        assert_eq!(lie_transform(&l, &l.filter(|_| false), 3).unwrap().series, l);
    }

    #[test]
    fn periodic_averaging_trivial_cases() {
        let w = pv(&[(1, 1), (0, 1)]);
        let l = FourierTaylorSeries::linear(dom(2), &[1.0, 0.0]);
        let f = FourierTaylorSeries::cosine(dom(2), &[0, 1], 0.1);
        let cfg = NormalFormConfig::new(3, 3).unwrap();
        let r = periodic_averaging(&l.add(&f).unwrap(), &w, &cfg).unwrap();
        assert!(r.steps.is_empty());
        assert!(max_coeff_diff(&r.g, &f) < 1e-16);
        assert!(r.remainder.is_empty());
        let r = periodic_averaging(&l, &w, &cfg).unwrap();
        assert!(r.g.is_empty() && r.remainder.is_empty());
    }

    #[test]
    fn averaging_removes_first_order_and_decays() {
        let w = pv(&[(1, 1), (1, 2)]);
        let l = FourierTaylorSeries::linear(dom(2), &w.omega_f64());
        let mut f = FourierTaylorSeries::cosine(dom(2), &[1, 0], 1e-3);
        f.add_cos(&[0, 1], &[1, 0], 1e-3);
        f.add_cos(&[1, -2], &[0, 1], 1e-3);
        let h = l.add(&f).unwrap();
        let cfg = NormalFormConfig::new(4, 6).unwrap();
        let r = periodic_averaging(&h, &w, &cfg).unwrap();
        let trace = r.remainder_trace();
        assert!(trace.windows(2).all(|p| p[1] < p[0]), "{trace:?}");
        assert!(trace[0] < 1e-1 * r.initial_norm, "{} {trace:?}", r.initial_norm);
        assert!(verify_resonant_symmetry(&r.g, &ResonanceFrame::new(2, vec![w]).unwrap()));
        for s in &r.steps {
            assert!(s.homological_residue().unwrap() < 1e-15);
        }
    }

    #[test]
    fn transform_inverse_roundtrip() {
        let mut chi = FourierTaylorSeries::sine(dom(2), &[1, 0], 1e-3).with_bounds(8, 8);
        chi.add_cos(&[1, 1], &[1, 0], 1e-3);
        let t = SymplecticTransform::from_generators(vec![chi], 8).unwrap();
        let (th, a) = t.apply(&[0.2, 0.7], &[0.1, -0.3]);
        let (th2, a2) = t.apply_inverse(&th, &a);
        assert!((th2[0] - 0.2).abs() < 1e-9 && (th2[1] - 0.7).abs() < 1e-9);
        assert!((a2[0] - 0.1).abs() < 1e-9 && (a2[1] + 0.3).abs() < 1e-9);
    }

    #[test]
    fn energy_consistency_of_lie_transform() {
        let mut h = FourierTaylorSeries::half_square_norm(dom(2)).with_bounds(4, 4);
        h.add_cos(&[1, 0], &[0, 0], 0.01);
        let mut chi = FourierTaylorSeries::sine(dom(2), &[1, 1], 1e-3).with_bounds(4, 4);
        chi.add_cos(&[0, 1], &[1, 0], 1e-3);
        let t = SymplecticTransform::from_generators(vec![chi.clone()], 10).unwrap();
        let pulled = t.pullback(&h).unwrap().series;
        for (th, a) in [([0.1, 0.4], [0.2, -0.1]), ([0.8, 0.3], [-0.3, 0.25])] {
            let (th2, a2) = t.apply(&th, &a);
            let direct = h.evaluate_complex(&th2, &a2).re;
            let series = pulled.evaluate_complex(&th, &a).re;
            assert!((direct - series).abs() < 1e-10, "{direct} vs {series}");
        }
    }

    #[test]
    fn full_frame_leaves_integrable_normal_form() {
        let w1 = pv(&[(1, 1), (0, 1)]);
        let w2 = pv(&[(0, 1), (1, 1)]);
        let frame = ResonanceFrame::new(2, vec![w1, w2.clone()]).unwrap();
        let l = FourierTaylorSeries::linear(dom(2), &w2.omega_f64());
        let mut f = FourierTaylorSeries::cosine(dom(2), &[1, 0], 1e-3);
        f.add_cos(&[0, 1], &[0, 0], 1e-3);
        f.add_cos(&[1, 1], &[0, 0], 1e-3);
        f.add_cos(&[0, 0], &[1, 0], 1e-3);
        let cfg = NormalFormConfig::new(3, 4).unwrap();
        let r = composed_normal_form(&l.add(&f).unwrap(), &frame, &cfg).unwrap();
        assert!(r.symmetry_checked);
        assert!(r.g.terms().all(|(idx, _)| idx.is_angle_free()));
        assert_eq!(r.steps.len(), 2);
    }

    #[test]
    fn composed_zero_perturbation_is_identity() {
        let w1 = pv(&[(1, 1), (1, 2)]);
        let w2 = pv(&[(1, 1), (2, 3)]);
        let frame = ResonanceFrame::new(2, vec![w1, w2.clone()]).unwrap();
        let l = FourierTaylorSeries::linear(dom(2), &w2.omega_f64());
        let r = composed_normal_form(&l, &frame, &NormalFormConfig::default()).unwrap();
        assert!(r.g.is_empty());
        assert!(r.remainder.is_empty());
        assert!(r.transform.is_identity());
    }

    #[test]
    fn single_vector_frame_matches_periodic_averaging() {
        let w = pv(&[(1, 1), (1, 3)]);
        let frame = ResonanceFrame::new(2, vec![w.clone()]).unwrap();
        let l = FourierTaylorSeries::linear(dom(2), &w.omega_f64());
        let mut f = FourierTaylorSeries::cosine(dom(2), &[1, 0], 1e-3);
        f.add_cos(&[1, -3], &[1, 0], 1e-3);
        let h = l.add(&f).unwrap();
        let cfg = NormalFormConfig::new(3, 4).unwrap();
        let a = periodic_averaging(&h, &w, &cfg).unwrap();
        let b = composed_normal_form(&h, &frame, &cfg).unwrap();
        assert_eq!(a.g, b.g);
        assert_eq!(a.remainder, b.remainder);
    }

    #[test]
    fn symmetry_examples() {
        let frame = ResonanceFrame::new(2, vec![pv(&[(1, 1), (-1, 1)])]).unwrap();
        assert!(verify_resonant_symmetry(&FourierTaylorSeries::cosine(dom(2), &[1, 1], 1.0), &frame));
        assert!(verify_resonant_symmetry(&FourierTaylorSeries::half_square_norm(dom(2)), &frame));
        let frame = ResonanceFrame::new(2, vec![pv(&[(1, 1), (0, 1)])]).unwrap();
        assert!(!verify_resonant_symmetry(&FourierTaylorSeries::cosine(dom(2), &[1, 0], 1.0), &frame));
    }

    #[test]
    fn localize_linear_hamiltonian_is_trivial() {
        let w = pv(&[(1, 1), (1, 2)]);
        let h = FourierTaylorSeries::linear(Domain::new(2, 1.0).unwrap(), &w.omega_f64());
        let zero = h.filter(|_| false);
        let sys = HamiltonianSystem::new(h, zero, 0.0, Regularity::gevrey(1.0, 1.0).unwrap()).unwrap();
        let s = localize_and_scale(&sys, &[0.1, 0.1], 0.01, &w, 6.0, 1.0).unwrap();
        assert!(s.h_tilde.is_empty());
        assert!(s.f_tilde.is_empty());
        assert!(localize_and_scale(&sys, &[0.1, 0.1], 0.5, &w, 6.0, 1.0).is_err());
    }

    #[test]
    fn localize_quadratic() {
        let d = Domain::new(2, 1.0).unwrap();
        let h = FourierTaylorSeries::half_square_norm(d);
        let sys = HamiltonianSystem::new(h.clone(), h.filter(|_| false), 0.0, Regularity::gevrey(1.0, 1.0).unwrap())
            .unwrap();
        let w = pv(&[(3, 10), (0, 1)]);
        let mu = 0.01;
        let s = localize_and_scale(&sys, &[0.3, 0.0], mu, &w, 6.0, 1.0).unwrap();
        let mut expected = FourierTaylorSeries::half_square_norm(s.h_tilde.domain()).scale(mu);
        expected = expected.add(&FourierTaylorSeries::linear(s.h_tilde.domain(), &[0.3 - 0.3, 0.0])).unwrap();
        assert!(max_coeff_diff(&s.h_tilde, &expected) < 1e-15);
        assert!(s.size_condition.lhs <= 0.5 * mu * 72.0 + 1e-15);
    }
}
