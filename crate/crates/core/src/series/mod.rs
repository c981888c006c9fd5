//! Truncated Fourier–Taylor series on `T^n × B_R`.
//!
//! A series is a finite sum
//!
//! ```text
//! s(θ, I) = Σ c(k, l) · (I − center)^l · exp(2πi k·θ)
//! ```
//!
//! with angles normalised to `[0, 1)`. Coefficients are complex and stored
//! sparsely; a real function satisfies `c(−k, l) = conj(c(k, l))`. Every
//! operation that can produce indices beyond the truncation bounds reports
//! the mass (ℓ¹ norm of the coefficients) it dropped.

mod hamiltonian;
pub mod io;

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub use hamiltonian::{HamiltonianSystem, IntegrableHamiltonian, PolynomialHamiltonian, Regularity};

/// Relative slack on the action-ball membership test.
const BALL_SLACK: f64 = 1e-12;
/// Relative tolerance on the imaginary residue of an evaluation.
const REALITY_TOLERANCE: f64 = 1e-12;

/// Phase-space dimension and action-ball radius (supremum norm).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    n: usize,
    radius: f64,
}

impl Domain {
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "action radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self { n, radius })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.n, radius)
    }
}

/// Fourier index `k ∈ Z^n` paired with a Taylor exponent `l ∈ N^n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    pub angle: Vec<i32>,
    pub action: Vec<u32>,
}

impl MultiIndex {
    pub fn new(angle: Vec<i32>, action: Vec<u32>) -> Self {
        debug_assert_eq!(angle.len(), action.len());
        Self { angle, action }
    }

    pub fn zero(n: usize) -> Self {
        Self { angle: vec![0; n], action: vec![0; n] }
    }

    pub fn dim(&self) -> usize {
        self.angle.len()
    }

    /// `|k|_∞`
    pub fn angle_order(&self) -> u32 {
        self.angle.iter().map(|k| k.unsigned_abs()).max().unwrap_or(0)
    }

    /// `|k|_1`
    pub fn angle_l1(&self) -> u32 {
        self.angle.iter().map(|k| k.unsigned_abs()).sum()
    }

    /// `|l|_1`
    pub fn degree(&self) -> u32 {
        self.action.iter().sum()
    }

    pub fn is_angle_free(&self) -> bool {
        self.angle.iter().all(|&k| k == 0)
    }

    pub fn conjugate(&self) -> Self {
        Self { angle: self.angle.iter().map(|k| -k).collect(), action: self.action.clone() }
    }

    fn fits(&self, k_max: u32, d_max: u32) -> bool {
        self.angle_order() <= k_max && self.degree() <= d_max
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k={:?} l={:?}", self.angle, self.action)
    }
}

/// A coordinate of phase space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coordinate {
    Angle(usize),
    Action(usize),
}

/// Result of an operation that truncates back to the series bounds.
#[derive(Clone, Debug)]
pub struct Truncated {
    pub series: FourierTaylorSeries,
    /// Sum of `|c|` over the coefficients that were removed.
    pub dropped_mass: f64,
}

/// Sparse truncated Fourier–Taylor series.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierTaylorSeries {
    domain: Domain,
    center: Vec<f64>,
    k_max: u32,
    d_max: u32,
    coeffs: BTreeMap<MultiIndex, Complex64>,
}

impl FourierTaylorSeries {
    /// The zero series centred at the origin.
    pub fn zero(domain: Domain, k_max: u32, d_max: u32) -> Self {
        Self { center: vec![0.0; domain.n], domain, k_max, d_max, coeffs: BTreeMap::new() }
    }

    pub fn constant(domain: Domain, value: f64) -> Self {
        let mut s = Self::zero(domain, 0, 0);
        s.add_coeff(MultiIndex::zero(domain.n), Complex64::new(value, 0.0));
        s
    }

    /// The action coordinate `I_j` (expansion centred at the origin).
    pub fn action_coordinate(domain: Domain, j: usize) -> Self {
        let mut s = Self::zero(domain, 0, 1);
        let mut l = vec![0; domain.n];
        l[j] = 1;
        s.add_coeff(MultiIndex::new(vec![0; domain.n], l), Complex64::new(1.0, 0.0));
        s
    }

    /// The linear Hamiltonian `ω·I`.
    pub fn linear(domain: Domain, omega: &[f64]) -> Self {
        let mut s = Self::zero(domain, 0, 1);
        for (j, &w) in omega.iter().enumerate() {
            let mut l = vec![0; domain.n];
            l[j] = 1;
            s.add_coeff(MultiIndex::new(vec![0; domain.n], l), Complex64::new(w, 0.0));
        }
        s
    }

    /// `½ Σ_j I_j²`
    pub fn half_square_norm(domain: Domain) -> Self {
        let mut s = Self::zero(domain, 0, 2);
        for j in 0..domain.n {
            let mut l = vec![0; domain.n];
            l[j] = 2;
            s.add_coeff(MultiIndex::new(vec![0; domain.n], l), Complex64::new(0.5, 0.0));
        }
        s
    }

    /// `amplitude · cos(2π k·θ)` with bounds large enough to hold it.
    pub fn cosine(domain: Domain, k: &[i32], amplitude: f64) -> Self {
        let k_max = k.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
        let mut s = Self::zero(domain, k_max, 0);
        s.add_cos(k, &vec![0; domain.n], amplitude);
        s
    }

    /// `amplitude · sin(2π k·θ)`
    pub fn sine(domain: Domain, k: &[i32], amplitude: f64) -> Self {
        let k_max = k.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
        let mut s = Self::zero(domain, k_max, 0);
        s.add_sin(k, &vec![0; domain.n], amplitude);
        s
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Result<Self> {
        if center.len() != self.domain.n {
            return Err(Error::InvalidArgument("center has wrong dimension".into()));
        }
        self.center = center;
        Ok(self)
    }

    /// Raises the truncation bounds; never drops coefficients.
    pub fn with_bounds(mut self, k_max: u32, d_max: u32) -> Self {
        self.k_max = self.k_max.max(k_max);
        self.d_max = self.d_max.max(d_max);
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        if domain.n != self.domain.n {
            return Err(Error::DomainMismatch("dimension differs".into()));
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.n
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// True when every stored coefficient is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn coeff(&self, idx: &MultiIndex) -> Complex64 {
        self.coeffs.get(idx).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.coeffs.iter()
    }

    /// Adds `c` to the coefficient at `idx`. Bounds grow to fit the index.
    pub fn add_coeff(&mut self, idx: MultiIndex, c: Complex64) {
        assert_eq!(idx.dim(), self.domain.n, "multi-index dimension mismatch");
        self.k_max = self.k_max.max(idx.angle_order());
        self.d_max = self.d_max.max(idx.degree());
        *self.coeffs.entry(idx).or_default() += c;
    }

    /// Adds `a · cos(2π k·θ) · (I − center)^l`.
    pub fn add_cos(&mut self, k: &[i32], l: &[u32], a: f64) {
        let idx = MultiIndex::new(k.to_vec(), l.to_vec());
        if idx.is_angle_free() {
            self.add_coeff(idx, Complex64::new(a, 0.0));
        } else {
            let conj = idx.conjugate();
            self.add_coeff(idx, Complex64::new(0.5 * a, 0.0));
            self.add_coeff(conj, Complex64::new(0.5 * a, 0.0));
        }
    }

    /// Adds `a · sin(2π k·θ) · (I − center)^l`.
    pub fn add_sin(&mut self, k: &[i32], l: &[u32], a: f64) {
        let idx = MultiIndex::new(k.to_vec(), l.to_vec());
        if idx.is_angle_free() {
            return;
        }
        let conj = idx.conjugate();
        self.add_coeff(idx, Complex64::new(0.0, -0.5 * a));
        self.add_coeff(conj, Complex64::new(0.0, 0.5 * a));
    }

    /// Removes coefficients with modulus at most `tol`.
    pub fn prune(mut self, tol: f64) -> Self {
        self.coeffs.retain(|_, c| c.norm() > tol);
        self
    }

    /// Largest `|c(−k, l) − conj(c(k, l))|` over the stored indices.
    pub fn reality_residue(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(idx, c)| (self.coeff(&idx.conjugate()) - c.conj()).norm())
            .fold(0.0, f64::max)
    }

    /// ℓ¹ norm of the coefficients.
    pub fn coefficient_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, |a, b| a + b)
    }

    /// `Σ |c| R^{|l|}`, an upper bound for the supremum on the domain.
    pub fn sup_bound(&self) -> f64 {
        let r = self.domain.radius;
        self.coeffs.iter().map(|(idx, c)| c.norm() * r.powi(idx.degree() as i32)).fold(0.0, |a, b| a + b)
    }

    pub fn check_point(&self, theta: &[f64], action: &[f64]) -> Result<()> {
        let n = self.domain.n;
        if theta.len() != n || action.len() != n {
            return Err(Error::InvalidArgument(format!(
                "point has dimension ({}, {}), series has {n}",
                theta.len(),
                action.len()
            )));
        }
        let dist = sup_distance(action, &self.center);
        if dist > self.domain.radius * (1.0 + BALL_SLACK) {
            return Err(Error::Domain(format!(
                "action {action:?} is at distance {dist} from center, radius {}",
                self.domain.radius
            )));
        }
        Ok(())
    }

    /// Complex value of the sum at a point, without checks.
    pub fn evaluate_complex(&self, theta: &[f64], action: &[f64]) -> Complex64 {
        self.evaluate_with_scale(theta, action).0
    }

    fn evaluate_with_scale(&self, theta: &[f64], action: &[f64]) -> (Complex64, f64) {
        let x: Vec<f64> = action.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let mut sum = Complex64::new(0.0, 0.0);
        let mut scale = 0.0;
        for (idx, c) in &self.coeffs {
            let phase: f64 = idx.angle.iter().zip(theta).map(|(&k, &t)| k as f64 * t).sum();
            let mono: f64 = idx.action.iter().zip(&x).map(|(&l, &v)| v.powi(l as i32)).product();
            let term = c * Complex64::cis(TAU * phase) * mono;
            scale += term.norm();
            sum += term;
        }
        (sum, scale)
    }

    /// Real value at `(θ, I)`.
    pub fn evaluate(&self, theta: &[f64], action: &[f64]) -> Result<f64> {
        self.check_point(theta, action)?;
        let (value, scale) = self.evaluate_with_scale(theta, action);
        let tolerance = REALITY_TOLERANCE * scale.max(1.0);
        if value.im.abs() > tolerance {
            return Err(Error::CorruptSeries { residue: value.im.abs(), tolerance });
        }
        Ok(value.re)
    }

    /// Partial derivative along one coordinate. Action derivatives lower the
    /// Taylor bound to `d_max − 1`.
    pub fn partial_derivative(&self, which: Coordinate) -> Self {
        let mut out = Self {
            domain: self.domain,
            center: self.center.clone(),
            k_max: self.k_max,
            d_max: self.d_max,
            coeffs: BTreeMap::new(),
        };
        match which {
            Coordinate::Angle(j) => {
                for (idx, c) in &self.coeffs {
                    let k = idx.angle[j];
                    if k != 0 {
                        out.coeffs.insert(idx.clone(), c * Complex64::new(0.0, TAU * k as f64));
                    }
                }
            }
            Coordinate::Action(j) => {
                out.d_max = self.d_max.saturating_sub(1);
                for (idx, c) in &self.coeffs {
                    let l = idx.action[j];
                    if l > 0 {
                        let mut shifted = idx.clone();
                        shifted.action[j] -= 1;
                        out.coeffs.insert(shifted, c * l as f64);
                    }
                }
            }
        }
        out
    }

    /// Splits into the part within `(k_max, d_max)` and the dropped part.
    /// Bounds above the current ones are clamped.
    pub fn split_truncation(&self, k_max: u32, d_max: u32) -> (Self, Self) {
        let k_max = k_max.min(self.k_max);
        let d_max = d_max.min(self.d_max);
        let mut kept = Self {
            domain: self.domain,
            center: self.center.clone(),
            k_max,
            d_max,
            coeffs: BTreeMap::new(),
        };
        let mut dropped = Self { k_max: self.k_max, d_max: self.d_max, ..kept.clone() };
        for (idx, c) in &self.coeffs {
            if idx.fits(k_max, d_max) {
                kept.coeffs.insert(idx.clone(), *c);
            } else {
                dropped.coeffs.insert(idx.clone(), *c);
            }
        }
        (kept, dropped)
    }

    pub fn truncate(&self, k_max: u32, d_max: u32) -> Truncated {
        let (series, dropped) = self.split_truncation(k_max, d_max);
        Truncated { series, dropped_mass: dropped.coefficient_norm() }
    }

    /// Keeps the coefficients whose index satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&MultiIndex) -> bool) -> Self {
        let mut out = self.clone();
        out.coeffs.retain(|idx, _| keep(idx));
        out
    }

    /// The angle-independent part.
    pub fn angle_average(&self) -> Self {
        self.filter(MultiIndex::is_angle_free)
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.values_mut().for_each(|c| *c *= factor);
        out
    }

    pub fn scale_complex(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs.values_mut().for_each(|c| *c *= factor);
        out
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.domain.n != other.domain.n {
            return Err(Error::DomainMismatch(format!(
                "dimensions {} and {}",
                self.domain.n, other.domain.n
            )));
        }
        if self.center != other.center {
            return Err(Error::DomainMismatch(format!(
                "centers {:?} and {:?}",
                self.center, other.center
            )));
        }
        if (self.domain.radius - other.domain.radius).abs()
            > BALL_SLACK * self.domain.radius.max(other.domain.radius)
        {
            return Err(Error::DomainMismatch(format!(
                "radii {} and {}",
                self.domain.radius, other.domain.radius
            )));
        }
        Ok(())
    }

    /// Sum; bounds are the componentwise maximum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone().with_bounds(other.k_max, other.d_max);
        for (idx, c) in &other.coeffs {
            *out.coeffs.entry(idx.clone()).or_default() += c;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    /// Product truncated to the componentwise maximum of the bounds.
    pub fn mul(&self, other: &Self) -> Result<Truncated> {
        self.check_compatible(other)?;
        let k_max = self.k_max.max(other.k_max);
        let d_max = self.d_max.max(other.d_max);
        let full = self.combine(other, k_max, d_max, |a, ca, b, cb, acc| {
            let idx = MultiIndex {
                angle: a.angle.iter().zip(&b.angle).map(|(x, y)| x + y).collect(),
                action: a.action.iter().zip(&b.action).map(|(x, y)| x + y).collect(),
            };
            *acc.entry(idx).or_default() += ca * cb;
        });
        Ok(full.truncate(k_max, d_max))
    }

    /// `{F, G}` without truncation; bounds are enlarged to hold the result.
    pub fn poisson_bracket_full(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let n = self.domain.n;
        let k_max = self.k_max + other.k_max;
        let d_max = (self.d_max + other.d_max).saturating_sub(1);
        Ok(self.combine(other, k_max, d_max, |a, ca, b, cb, acc| {
            let base = ca * cb * Complex64::new(0.0, TAU);
            for j in 0..n {
                let weight = a.angle[j] as f64 * b.action[j] as f64
                    - a.action[j] as f64 * b.angle[j] as f64;
                if weight == 0.0 {
                    continue;
                }
                let mut action: Vec<u32> =
                    a.action.iter().zip(&b.action).map(|(x, y)| x + y).collect();
                action[j] -= 1;
                let idx = MultiIndex {
                    angle: a.angle.iter().zip(&b.angle).map(|(x, y)| x + y).collect(),
                    action,
                };
                *acc.entry(idx).or_default() += base * weight;
            }
        }))
    }

    /// Poisson bracket
    /// `{F, G} = Σ_j ∂F/∂θ_j ∂G/∂I_j − ∂F/∂I_j ∂G/∂θ_j`,
    /// truncated to the componentwise maximum of the operand bounds.
    pub fn poisson_bracket(&self, other: &Self) -> Result<Truncated> {
        let k_max = self.k_max.max(other.k_max);
        let d_max = self.d_max.max(other.d_max);
        Ok(self.poisson_bracket_full(other)?.truncate(k_max, d_max))
    }

    fn combine(
        &self,
        other: &Self,
        k_max: u32,
        d_max: u32,
        mut op: impl FnMut(
            &MultiIndex,
            Complex64,
            &MultiIndex,
            Complex64,
            &mut HashMap<MultiIndex, Complex64>,
        ),
    ) -> Self {
        let mut acc = HashMap::new();
        for (a, ca) in &self.coeffs {
            for (b, cb) in &other.coeffs {
                op(a, *ca, b, *cb, &mut acc);
            }
        }
        let mut out = Self {
            domain: self.domain,
            center: self.center.clone(),
            k_max,
            d_max,
            coeffs: acc.into_iter().collect(),
        };
        for idx in out.coeffs.keys() {
            out.k_max = out.k_max.max(idx.angle_order());
            out.d_max = out.d_max.max(idx.degree());
        }
        out
    }

    /// Re-expands around a new center (exact binomial expansion). The domain
    /// radius is replaced by `radius`.
    pub fn recenter(&self, new_center: &[f64], radius: f64) -> Result<Self> {
        if new_center.len() != self.domain.n {
            return Err(Error::InvalidArgument("center has wrong dimension".into()));
        }
        let shift: Vec<f64> = new_center.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let mut out = Self {
            domain: self.domain.with_radius(radius)?,
            center: new_center.to_vec(),
            k_max: self.k_max,
            d_max: self.d_max,
            coeffs: BTreeMap::new(),
        };
        for (idx, c) in &self.coeffs {
            // (x + d)^l = Σ_{b ≤ l} C(l, b) d^{l−b} x^b, coordinatewise.
            for_each_sub_exponent(&idx.action, |b| {
                let weight: f64 = idx
                    .action
                    .iter()
                    .zip(b)
                    .zip(&shift)
                    .map(|((&l, &bj), &d)| binomial(l, bj) * d.powi((l - bj) as i32))
                    .product();
                if weight != 0.0 {
                    let key = MultiIndex { angle: idx.angle.clone(), action: b.to_vec() };
                    *out.coeffs.entry(key).or_default() += c * weight;
                }
            });
        }
        Ok(out)
    }

    /// Substitutes `I = center + μ Ĩ`: the result is a series in `Ĩ`
    /// centred at the origin on the ball of the given radius.
    pub fn zoom(&self, mu: f64, radius: f64) -> Result<Self> {
        let mut out = self.clone().with_domain(self.domain.with_radius(radius)?)?;
        out.center = vec![0.0; self.domain.n];
        for (idx, c) in out.coeffs.iter_mut() {
            *c *= mu.powi(idx.degree() as i32);
        }
        Ok(out)
    }

    /// Inverse of [`Self::zoom`]: substitutes `Ĩ = (I − center)/μ`.
    pub fn unzoom(&self, center: &[f64], mu: f64, radius: f64) -> Result<Self> {
        if center.len() != self.domain.n {
            return Err(Error::InvalidArgument("center has wrong dimension".into()));
        }
        let mut out = self.clone().with_domain(self.domain.with_radius(radius)?)?;
        out.center = center.to_vec();
        for (idx, c) in out.coeffs.iter_mut() {
            *c *= mu.powi(-(idx.degree() as i32));
        }
        Ok(out)
    }
}

/// Supremum-norm distance.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Calls `f` with every exponent `b` satisfying `b ≤ l` componentwise.
pub(crate) fn for_each_sub_exponent(l: &[u32], mut f: impl FnMut(&[u32])) {
    let mut b = vec![0u32; l.len()];
    loop {
        f(&b);
        let mut j = 0;
        loop {
            if j == l.len() {
                return;
            }
            if b[j] < l[j] {
                b[j] += 1;
                break;
            }
            b[j] = 0;
            j += 1;
        }
    }
}
