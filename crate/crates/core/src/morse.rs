//! Diophantine Morse checks on integrable Hamiltonians, prevalence sampling
//! over linear shifts, and the steepness escape search along curves.
//!
//! For a rational subspace `Λ` with orthonormal basis `E`, the check at a
//! point compares the projected gradient `g = ‖Eᵀ∇h‖` and the smallest
//! singular value `σ` of `EᵀHE` against `γL^{−τ}`: the point passes if the
//! gradient is large or, failing that, the Hessian block is nondegenerate.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diophantine::{adapted_coordinates, enumerate_gl, RationalSubspace, ResonanceFrame};
use crate::error::{Error, Result};
use crate::series::{IntegrableHamiltonian, PolynomialHamiltonian};

/// `γ > 0` and `τ ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MorseParams {
    pub gamma: f64,
    pub tau: f64,
}

impl MorseParams {
    pub fn new(gamma: f64, tau: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) || !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Morse parameters need gamma > 0 and tau >= 0, got ({gamma}, {tau})"
            )));
        }
        Ok(Self { gamma, tau })
    }

    /// Whether the parameters are in the range used by the stability
    /// estimates (`γ ≤ 1`, `τ ≥ 2`).
    pub fn fits_stability_range(&self) -> bool {
        self.gamma <= 1.0 && self.tau >= 2.0
    }

    /// `γ L^{−τ}`
    pub fn threshold(&self, l: u32) -> f64 {
        self.gamma * (l as f64).powf(-self.tau)
    }
}

/// Outcome of the check at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MorseBranch {
    GradientLarge { gradient: f64, threshold: f64 },
    HessianNondegenerate { gradient: f64, singular: f64, threshold: f64 },
    Fail { gradient: f64, singular: f64, threshold: f64 },
}

impl MorseBranch {
    pub fn passed(&self) -> bool {
        !matches!(self, Self::Fail { .. })
    }

    /// `(g − γL^{−τ}, σ − γL^{−τ})`; the singular value is computed in every
    /// branch.
    pub fn margins(&self) -> (f64, f64) {
        match *self {
            Self::GradientLarge { gradient, threshold } => (gradient - threshold, f64::NAN),
            Self::HessianNondegenerate { gradient, singular, threshold }
            | Self::Fail { gradient, singular, threshold } => {
                (gradient - threshold, singular - threshold)
            }
        }
    }
}

/// `Λ` with its adapted orthonormal basis stored as an `n × k` matrix.
#[derive(Clone, Debug)]
pub struct Section {
    pub subspace: RationalSubspace,
    pub basis: DMatrix<f64>,
}

impl Section {
    pub fn new(subspace: RationalSubspace) -> Result<Self> {
        let (e, _) = adapted_coordinates(&subspace)?;
        let n = subspace.ambient_dim();
        let basis = if e.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&e) };
        Ok(Self { subspace, basis })
    }

    /// `(‖Eᵀ∇h‖, σ_min(EᵀHE))`
    pub fn invariants(&self, gradient: &DVector<f64>, hessian: &DMatrix<f64>) -> (f64, f64) {
        let e = &self.basis;
        if e.ncols() == 0 {
            return (0.0, 0.0);
        }
        let g = (e.transpose() * gradient).norm();
        let block = e.transpose() * hessian * e;
        let sym = (&block + block.transpose()) * 0.5;
        let sigma = sym.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        (g, sigma)
    }
}

fn branch(g: f64, sigma: f64, threshold: f64) -> MorseBranch {
    if g > threshold {
        MorseBranch::GradientLarge { gradient: g, threshold }
    } else if sigma > threshold {
        MorseBranch::HessianNondegenerate { gradient: g, singular: sigma, threshold }
    } else {
        MorseBranch::Fail { gradient: g, singular: sigma, threshold }
    }
}

/// Checks the alternative at one point. `radius` is the sup-norm radius of
/// the action ball centred at `center`.
pub fn check_morse_at(
    h: &dyn IntegrableHamiltonian,
    section: &Section,
    point: &[f64],
    center: &[f64],
    radius: f64,
    p: MorseParams,
    l: u32,
) -> Result<MorseBranch> {
    let dist = point.iter().zip(center).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if dist > radius * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("point {point:?} is outside the action ball")));
    }
    let (g, sigma) = section.invariants(&h.gradient(point), &h.hessian(point));
    Ok(branch(g, sigma, p.threshold(l)))
}

/// Sample points of the Euclidean ball of radius `radius` around `center`
/// taken from a cubic grid with `points_per_axis` points per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct MorseGrid {
    pub points_per_axis: usize,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl MorseGrid {
    pub fn new(n: usize, radius: f64, points_per_axis: usize) -> Self {
        Self { points_per_axis, center: vec![0.0; n], radius }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let n = self.center.len();
        let m = self.points_per_axis.max(1);
        let axis: Vec<f64> = if m == 1 {
            vec![0.0]
        } else {
            (0..m).map(|i| -self.radius + 2.0 * self.radius * i as f64 / (m - 1) as f64).collect()
        };
        let total = m.pow(n as u32);
        (0..total)
            .filter_map(|mut idx| {
                let mut x = vec![0.0; n];
                for xi in x.iter_mut() {
                    *xi = axis[idx % m];
                    idx /= m;
                }
                let r2: f64 = x.iter().map(|v| v * v).sum();
                (r2 <= self.radius * self.radius * (1.0 + 1e-12))
                    .then(|| x.iter().zip(&self.center).map(|(a, c)| a + c).collect())
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MorseFailure {
    pub subspace: RationalSubspace,
    pub l: u32,
    pub point: Vec<f64>,
    pub gradient_margin: f64,
    pub hessian_margin: f64,
}

#[derive(Clone, Debug)]
pub struct MorseReport {
    pub params: MorseParams,
    pub l_max: u32,
    /// Number of subspaces tested, by dimension `k = 1..=n`.
    pub subspaces_per_dim: Vec<usize>,
    pub grid_points_per_axis: usize,
    pub grid_size: usize,
    pub failures: Vec<MorseFailure>,
    /// Largest `γ` for which every check would pass strictly:
    /// `min L_min^τ · max(g, σ)` over all subspaces and points.
    pub critical_gamma: f64,
    pub passed: bool,
}

impl MorseReport {
    /// Subspaces that fail somewhere, in report order, without repeats.
    pub fn failing_subspaces(&self) -> Vec<&RationalSubspace> {
        let mut out: Vec<&RationalSubspace> = Vec::new();
        for f in &self.failures {
            if !out.contains(&&f.subspace) {
                out.push(&f.subspace);
            }
        }
        out
    }

    pub const CSV_HEADER: &'static str = "subspace,l,point,gradient_margin,hessian_margin";

    pub fn failures_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for f in &self.failures {
            let pt: Vec<String> = f.point.iter().map(|v| format!("{v:.6e}")).collect();
            out.push_str(&format!(
                "\"{}\",{},\"{}\",{:.6e},{:.6e}\n",
                f.subspace,
                f.l,
                pt.join(" "),
                f.gradient_margin,
                f.hessian_margin
            ));
        }
        out
    }
}

impl fmt::Display for MorseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gamma {}", self.params.gamma)?;
        writeln!(f, "tau {}", self.params.tau)?;
        writeln!(f, "l_max {}", self.l_max)?;
        writeln!(
            f,
            "subspaces_per_dim {}",
            self.subspaces_per_dim.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
        )?;
        writeln!(f, "grid {} per axis, {} points", self.grid_points_per_axis, self.grid_size)?;
        writeln!(f, "critical_gamma {:.6e}", self.critical_gamma)?;
        writeln!(f, "failures {}", self.failures.len())?;
        for s in self.failing_subspaces() {
            writeln!(f, "failing_subspace {s}")?;
        }
        write!(f, "passed {}", self.passed)
    }
}

/// Subspaces of `G^{l_max}(n, k)` for all `k`, each with the least `L`
/// at which it belongs.
pub fn subspace_catalogue(n: usize, l_max: u32) -> Result<Vec<(Section, u32)>> {
    let mut out = Vec::new();
    for k in 1..=n {
        for (s, l) in enumerate_gl(n, k, l_max) {
            out.push((Section::new(s)?, l));
        }
    }
    Ok(out)
}

/// Runs the check over every subspace with `L ≤ l_max` and every grid
/// point. A subspace first appearing at `L_min` is checked with `L_min`,
/// whose threshold is the largest among the admissible `L`.
pub fn check_morse(
    h: &dyn IntegrableHamiltonian,
    p: MorseParams,
    l_max: u32,
    grid: &MorseGrid,
) -> Result<MorseReport> {
    if l_max < 1 {
        return Err(Error::InvalidArgument("L_max must be at least 1".into()));
    }
    let n = h.dim();
    let catalogue = subspace_catalogue(n, l_max)?;
    let points = grid.points();
    let derivs: Vec<(DVector<f64>, DMatrix<f64>)> =
        points.par_iter().map(|x| (h.gradient(x), h.hessian(x))).collect();
    let report = check_catalogue(&catalogue, &points, &derivs, p);
    let mut subspaces_per_dim = vec![0usize; n];
    for (s, _) in &catalogue {
        subspaces_per_dim[s.subspace.dim() - 1] += 1;
    }
    Ok(MorseReport {
        params: p,
        l_max,
        subspaces_per_dim,
        grid_points_per_axis: grid.points_per_axis,
        grid_size: points.len(),
        passed: report.0.is_empty(),
        failures: report.0,
        critical_gamma: report.1,
    })
}

fn check_catalogue(
    catalogue: &[(Section, u32)],
    points: &[Vec<f64>],
    derivs: &[(DVector<f64>, DMatrix<f64>)],
    p: MorseParams,
) -> (Vec<MorseFailure>, f64) {
    let per_subspace: Vec<(Vec<MorseFailure>, f64)> = catalogue
        .par_iter()
        .map(|(section, l)| {
            let threshold = p.threshold(*l);
            let scale = (*l as f64).powf(p.tau);
            let mut failures = Vec::new();
            let mut critical = f64::INFINITY;
            for (x, (grad, hess)) in points.iter().zip(derivs) {
                let (g, sigma) = section.invariants(grad, hess);
                critical = critical.min(scale * g.max(sigma));
                if let MorseBranch::Fail { .. } = branch(g, sigma, threshold) {
                    failures.push(MorseFailure {
                        subspace: section.subspace.clone(),
                        l: *l,
                        point: x.clone(),
                        gradient_margin: g - threshold,
                        hessian_margin: sigma - threshold,
                    });
                }
            }
            (failures, critical)
        })
        .collect();
    let critical = per_subspace.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    (per_subspace.into_iter().flat_map(|r| r.0).collect(), critical)
}

/// The γ-ladder `{1, 1/2, …, 2^{−20}}`.
pub fn gamma_ladder() -> Vec<f64> {
    (0..=20).map(|i| 2f64.powi(-i)).collect()
}

/// Largest ladder value strictly below the critical `γ`.
pub fn ladder_gamma(critical: f64) -> Option<f64> {
    gamma_ladder().into_iter().find(|&g| g < critical)
}

#[derive(Clone, Debug)]
pub struct PrevalenceReport {
    pub samples: usize,
    /// `None` when no samples were drawn.
    pub fraction: Option<f64>,
    /// Ladder `γ` found for each sample, in draw order.
    pub gammas: Vec<Option<f64>>,
    /// Count per ladder exponent `i` (`γ = 2^{−i}`); failures are omitted.
    pub histogram: BTreeMap<u32, usize>,
}

/// Draws `ξ` uniformly from `[−xi_box, xi_box]^n` and finds, for each
/// `h_ξ = h − ξ·I`, the largest ladder `γ` passing the check.
pub fn sample_prevalence(
    h: &PolynomialHamiltonian,
    tau: f64,
    num_samples: usize,
    xi_box: f64,
    l_max: u32,
    grid: &MorseGrid,
    seed: u64,
) -> Result<PrevalenceReport> {
    let n = h.dim();
    let bound = 2.0 * ((n * n) as f64 + 1.0);
    if !(tau > bound) {
        return Err(Error::InvalidArgument(format!("tau must exceed 2(n²+1) = {bound}, got {tau}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xis: Vec<Vec<f64>> = (0..num_samples)
        .map(|_| (0..n).map(|_| rng.random_range(-xi_box..=xi_box)).collect())
        .collect();
    let catalogue = subspace_catalogue(n, l_max)?;
    let points = grid.points();
    let p = MorseParams::new(1.0, tau)?;
    let gammas: Vec<Option<f64>> = xis
        .iter()
        .map(|xi| {
            let shifted = h.shifted(xi)?;
            let derivs: Vec<_> =
                points.par_iter().map(|x| (shifted.gradient(x), shifted.hessian(x))).collect();
            let (_, critical) = check_catalogue(&catalogue, &points, &derivs, p);
            Ok(ladder_gamma(critical))
        })
        .collect::<Result<_>>()?;
    let mut histogram = BTreeMap::new();
    for g in gammas.iter().flatten() {
        *histogram.entry((-g.log2()).round() as u32).or_insert(0) += 1;
    }
    let passing = gammas.iter().filter(|g| g.is_some()).count();
    Ok(PrevalenceReport {
        samples: num_samples,
        fraction: (num_samples > 0).then(|| passing as f64 / num_samples as f64),
        gammas,
        histogram,
    })
}

/// A sampled curve in an affine subspace with direction `Λ_j`.
#[derive(Clone, Debug)]
pub struct SteepnessQuery {
    pub times: Vec<f64>,
    pub curve: Vec<Vec<f64>>,
    /// Length threshold `c_j < 1`.
    pub c: f64,
    pub frame: ResonanceFrame,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EscapeOutcome {
    /// First sample where the projected gradient exceeds `mult · c²` while
    /// the curve has stayed within `c` of its start.
    Escaped { index: usize, time: f64, projected_gradient: f64, threshold: f64, max_excursion: f64 },
    /// The curve left the `c`-ball before the gradient became large: a
    /// counterexample candidate when `h` passed the Morse check.
    NotFound { exit_index: usize, exit_time: f64, max_projected_gradient: f64 },
    /// The curve ended inside the `c`-ball without an escape.
    CurveTooShort { max_excursion: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EscapeReport {
    pub outcome: EscapeOutcome,
    /// `ln(mult_length · γ L_j^{−τ} / c)`; positive when the length
    /// condition on `c` holds.
    pub length_margin: f64,
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Scans the curve in time order for the escape time. Distances and the
/// projected gradient are measured in the supremum norm.
pub fn steepness_escape(
    q: &SteepnessQuery,
    h: &dyn IntegrableHamiltonian,
    p: MorseParams,
    gradient_mult: f64,
    length_mult: f64,
) -> Result<EscapeReport> {
    if q.curve.is_empty() || q.curve.len() != q.times.len() {
        return Err(Error::InvalidArgument("curve and times must be nonempty and aligned".into()));
    }
    if q.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("curve times must be strictly increasing".into()));
    }
    if !(q.c > 0.0 && q.c < 1.0) {
        return Err(Error::Precondition(format!("c must lie in (0, 1), got {}", q.c)));
    }
    let start = DVector::from_column_slice(&q.curve[0]);
    let length = q
        .curve
        .iter()
        .map(|x| sup_norm(&(DVector::from_column_slice(x) - &start)))
        .fold(0.0, f64::max);
    if length == 0.0 {
        return Err(Error::Precondition("curve has zero length".into()));
    }
    let l = q.frame.l_index() as u32;
    let length_margin = (length_mult * p.threshold(l) / q.c).ln();
    let threshold = gradient_mult * q.c * q.c;

    let mut max_excursion: f64 = 0.0;
    let mut max_grad: f64 = 0.0;
    for (i, (t, x)) in q.times.iter().zip(&q.curve).enumerate() {
        let excursion = sup_norm(&(DVector::from_column_slice(x) - &start));
        if excursion >= q.c {
            return Ok(EscapeReport {
                outcome: EscapeOutcome::NotFound {
                    exit_index: i,
                    exit_time: *t,
                    max_projected_gradient: max_grad,
                },
                length_margin,
            });
        }
        max_excursion = max_excursion.max(excursion);
        let projected = sup_norm(&q.frame.project(h.gradient(x).as_slice()));
        max_grad = max_grad.max(projected);
        if projected > threshold {
            return Ok(EscapeReport {
                outcome: EscapeOutcome::Escaped {
                    index: i,
                    time: *t,
                    projected_gradient: projected,
                    threshold,
                    max_excursion,
                },
                length_margin,
            });
        }
    }
    Ok(EscapeReport { outcome: EscapeOutcome::CurveTooShort { max_excursion }, length_margin })
}
