//! Gevrey and `C^k` norms of truncated series, evaluated on sampling grids.
//!
//! Both norms are weighted sums of derivative suprema,
//!
//! ```text
//! |s|_{α,L} = Σ_{l ∈ N^{2n}, |l| ≤ cap} L^{|l|α} (l!)^{−α} sup|∂^l s|
//! |s|_k     = Σ_{|l| ≤ k} (l!)^{−1} sup|∂^l s|
//! ```
//!
//! where `l` runs over derivatives in all `2n` coordinates and the supremum
//! is taken over a uniform grid. Both values under-approximate the true norm.

pub mod constants;

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::series::{Coordinate, FourierTaylorSeries};

/// Gevrey class parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GevreyParams {
    alpha: f64,
    l: f64,
}

impl GevreyParams {
    pub fn new(alpha: f64, l: f64) -> Result<Self> {
        if !(alpha >= 1.0 && alpha.is_finite()) || !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Gevrey parameters need alpha >= 1 and L > 0, got ({alpha}, {l})"
            )));
        }
        Ok(Self { alpha, l })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn with_l(&self, l: f64) -> Result<Self> {
        Self::new(self.alpha, l)
    }
}

/// Uniform sampling grid: `angle_points` per angle on `[0, 1)` and
/// `action_points` per action on `[c − R, c + R]` (endpoints included).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub angle_points: usize,
    pub action_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { angle_points: 64, action_points: 33 }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.angle_points, self.action_points)
    }
}

pub const DEFAULT_GEVREY_CAP: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    Gevrey(GevreyParams),
    Ck(u32),
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gevrey(p) => write!(f, "gevrey(alpha={},L={})", p.alpha, p.l),
            Self::Ck(k) => write!(f, "C{k}"),
        }
    }
}

/// A norm value. It is a finite partial sum over a sampling grid, hence a
/// lower bound of the true norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormCertificate {
    pub kind: NormKind,
    pub value: f64,
    pub cap: u32,
    pub grid: GridSpec,
    pub lower_bound: bool,
}

impl NormCertificate {
    pub const CSV_HEADER: &'static str = "norm_kind,value,cap,grid_spec";

    pub fn csv_row(&self) -> String {
        format!("{},{:.16e},{},{}", self.kind, self.value, self.cap, self.grid)
    }
}

/// `Σ_{|l| ≤ cap} weight(l) · sup_grid |∂^l s|` with `l` ordered as
/// `(angle orders, action orders)`.
pub fn weighted_derivative_sum(
    s: &FourierTaylorSeries,
    cap: u32,
    grid: GridSpec,
    weight: &(dyn Fn(&[u32], &[u32]) -> f64 + Sync),
) -> f64 {
    let n = s.dim();
    let mut total = 0.0;
    let mut b = vec![0u32; n];
    action_orders(s, &mut b, 0, cap, grid, weight, &mut total);
    total
}

fn action_orders(
    s: &FourierTaylorSeries,
    b: &mut Vec<u32>,
    coord: usize,
    budget: u32,
    grid: GridSpec,
    weight: &(dyn Fn(&[u32], &[u32]) -> f64 + Sync),
    total: &mut f64,
) {
    if s.is_empty() {
        return;
    }
    if coord == b.len() {
        *total += angle_sum(s, b, budget, grid, weight);
        return;
    }
    let mut current = s.clone();
    let mut p = 0;
    loop {
        b[coord] = p;
        action_orders(&current, b, coord + 1, budget - p, grid, weight, total);
        if p == budget {
            break;
        }
        current = current.partial_derivative(Coordinate::Action(coord));
        if current.is_empty() {
            break;
        }
        p += 1;
    }
    b[coord] = 0;
}

/// Sum over angle derivative orders for a fixed action derivative `s`.
fn angle_sum(
    s: &FourierTaylorSeries,
    b: &[u32],
    budget: u32,
    grid: GridSpec,
    weight: &(dyn Fn(&[u32], &[u32]) -> f64 + Sync),
) -> f64 {
    let n = s.dim();
    let basis = GridBasis::new(s, grid);
    let coeffs: Vec<Complex64> = s.terms().map(|(_, c)| *c).collect();
    let ks: Vec<&[i32]> = s.terms().map(|(idx, _)| idx.angle.as_slice()).collect();
    let active: Vec<usize> = (0..n).filter(|&j| ks.iter().any(|k| k[j] != 0)).collect();

    let mut total = 0.0;
    let mut a = vec![0u32; n];
    for_each_bounded(&active, &mut a, 0, budget, &mut |a: &[u32]| {
        let w = weight(a, b);
        if w == 0.0 {
            return;
        }
        let scaled: Vec<Complex64> = coeffs
            .iter()
            .zip(&ks)
            .map(|(c, k)| {
                let mut f = *c;
                for (&aj, &kj) in a.iter().zip(k.iter()) {
                    if aj > 0 {
                        f *= Complex64::new(0.0, TAU * kj as f64).powu(aj);
                    }
                }
                f
            })
            .collect();
        if scaled.iter().all(|c| c.norm() == 0.0) {
            return;
        }
        total += w * basis.sup_abs(&scaled);
    });
    total
}

/// Enumerates `a` supported on `active` with `|a| ≤ budget`, in
/// lexicographic order.
fn for_each_bounded(
    active: &[usize],
    a: &mut Vec<u32>,
    pos: usize,
    budget: u32,
    f: &mut dyn FnMut(&[u32]),
) {
    if pos == active.len() {
        f(a);
        return;
    }
    let j = active[pos];
    for p in 0..=budget {
        a[j] = p;
        for_each_bounded(active, a, pos + 1, budget - p, f);
    }
    a[j] = 0;
}

/// Values of every term's basis function `e^{2πik·θ}(I−c)^l` on the grid
/// restricted to the coordinates the series depends on.
struct GridBasis {
    /// `values[p * terms + t]`
    values: Vec<Complex64>,
    terms: usize,
}

impl GridBasis {
    fn new(s: &FourierTaylorSeries, grid: GridSpec) -> Self {
        let n = s.dim();
        let r = s.domain().radius();
        let idx: Vec<_> = s.terms().map(|(i, _)| i.clone()).collect();
        let angle_dep: Vec<usize> = (0..n).filter(|&j| idx.iter().any(|i| i.angle[j] != 0)).collect();
        let action_dep: Vec<usize> = (0..n).filter(|&j| idx.iter().any(|i| i.action[j] != 0)).collect();

        let angle_vals: Vec<f64> =
            (0..grid.angle_points).map(|i| i as f64 / grid.angle_points as f64).collect();
        let action_vals: Vec<f64> = if grid.action_points <= 1 {
            vec![0.0]
        } else {
            (0..grid.action_points)
                .map(|i| -r + 2.0 * r * i as f64 / (grid.action_points - 1) as f64)
                .collect()
        };

        let dims: Vec<usize> = angle_dep
            .iter()
            .map(|_| angle_vals.len())
            .chain(action_dep.iter().map(|_| action_vals.len()))
            .collect();
        let points: usize = dims.iter().product();
        let terms = idx.len();
        let mut values = vec![Complex64::new(0.0, 0.0); points * terms];
        values.par_chunks_mut(terms.max(1)).enumerate().for_each(|(p, row)| {
            let mut rem = p;
            let mut theta = vec![0.0; n];
            let mut x = vec![0.0; n];
            for (slot, &d) in dims.iter().enumerate() {
                let i = rem % d;
                rem /= d;
                if slot < angle_dep.len() {
                    theta[angle_dep[slot]] = angle_vals[i];
                } else {
                    x[action_dep[slot - angle_dep.len()]] = action_vals[i];
                }
            }
            for (t, mi) in idx.iter().enumerate() {
                let phase: f64 = mi.angle.iter().zip(&theta).map(|(&k, &th)| k as f64 * th).sum();
                let mono: f64 =
                    mi.action.iter().zip(&x).map(|(&l, &v)| v.powi(l as i32)).product();
                row[t] = Complex64::cis(TAU * phase) * mono;
            }
        });
        Self { values, terms }
    }

    fn sup_abs(&self, coeffs: &[Complex64]) -> f64 {
        if self.terms == 0 {
            return 0.0;
        }
        self.values
            .par_chunks(self.terms)
            .map(|row| row.iter().zip(coeffs).map(|(b, c)| b * c).sum::<Complex64>().norm())
            .reduce(|| 0.0, f64::max)
    }
}

fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn gevrey_weight(p: GevreyParams) -> impl Fn(&[u32], &[u32]) -> f64 + Sync {
    move |a: &[u32], b: &[u32]| {
        let order: u32 = a.iter().chain(b).sum();
        let ln_fact: f64 = a.iter().chain(b).map(|&v| ln_factorial(v)).sum();
        (p.alpha * (order as f64 * p.l.ln() - ln_fact)).exp()
    }
}

fn ck_weight(a: &[u32], b: &[u32]) -> f64 {
    let ln_fact: f64 = a.iter().chain(b).map(|&v| ln_factorial(v)).sum();
    (-ln_fact).exp()
}

/// Gevrey norm with derivative orders up to `cap`.
pub fn gevrey_norm_with_grid(
    s: &FourierTaylorSeries,
    p: GevreyParams,
    cap: u32,
    grid: GridSpec,
) -> NormCertificate {
    let value = weighted_derivative_sum(s, cap, grid, &gevrey_weight(p));
    NormCertificate { kind: NormKind::Gevrey(p), value, cap, grid, lower_bound: true }
}

/// Gevrey norm on the default grid.
pub fn gevrey_norm(s: &FourierTaylorSeries, p: GevreyParams, cap: u32) -> NormCertificate {
    gevrey_norm_with_grid(s, p, cap, GridSpec::default())
}

pub fn ck_norm_with_grid(s: &FourierTaylorSeries, k: u32, grid: GridSpec) -> NormCertificate {
    let value = weighted_derivative_sum(s, k, grid, &ck_weight);
    NormCertificate { kind: NormKind::Ck(k), value, cap: k, grid, lower_bound: true }
}

/// `C^k` norm on the default grid.
pub fn ck_norm(s: &FourierTaylorSeries, k: u32) -> NormCertificate {
    ck_norm_with_grid(s, k, GridSpec::default())
}

/// Comparison of `Σ_{|l|=p} |∂^l s|_{α,L/2}` with `|s|_{α,L}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeBoundReport {
    pub order: u32,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `ratio / envelope`; compared against the frozen constant.
    pub normalized_ratio: f64,
    pub within_constant: bool,
}

/// Growth envelope for the derivative bound:
/// `C(2n+p−1, p) · (2^p p! / L^p)^α`.
pub fn derivative_bound_envelope(n: usize, order: u32, p: GevreyParams) -> f64 {
    let count = crate::series::binomial(2 * n as u32 + order - 1, order);
    let ln = order as f64 * 2f64.ln() + ln_factorial(order) - order as f64 * p.l.ln();
    count * (p.alpha * ln).exp()
}

pub fn check_derivative_bound_with_grid(
    s: &FourierTaylorSeries,
    p: GevreyParams,
    order: u32,
    cap: u32,
    grid: GridSpec,
) -> Result<DerivativeBoundReport> {
    let half = p.with_l(p.l / 2.0)?;
    let n = s.dim();
    let mut lhs = 0.0;
    let mut l = vec![0u32; 2 * n];
    let all: Vec<usize> = (0..2 * n).collect();
    for_each_exact(&all, &mut l, 0, order, &mut |l: &[u32]| {
        let mut d = s.clone();
        for (c, &times) in l.iter().enumerate() {
            for _ in 0..times {
                let which = if c < n { Coordinate::Angle(c) } else { Coordinate::Action(c - n) };
                d = d.partial_derivative(which);
            }
        }
        if d.is_empty() {
            return;
        }
        lhs += gevrey_norm_with_grid(&d, half, cap, grid).value;
    });
    let rhs = gevrey_norm_with_grid(s, p, cap, grid).value;
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    let normalized_ratio = ratio / derivative_bound_envelope(n, order, p);
    Ok(DerivativeBoundReport {
        order,
        lhs,
        rhs,
        ratio,
        normalized_ratio,
        within_constant: normalized_ratio <= constants::DERIVATIVE_BOUND_CONSTANT,
    })
}

pub fn check_derivative_bound(
    s: &FourierTaylorSeries,
    p: GevreyParams,
    order: u32,
) -> Result<DerivativeBoundReport> {
    check_derivative_bound_with_grid(s, p, order, DEFAULT_GEVREY_CAP, GridSpec::default())
}

/// Enumerates `l` with `|l| = total` over the given coordinates.
fn for_each_exact(coords: &[usize], l: &mut Vec<u32>, pos: usize, total: u32, f: &mut dyn FnMut(&[u32])) {
    if pos + 1 == coords.len() {
        l[coords[pos]] = total;
        f(l);
        l[coords[pos]] = 0;
        return;
    }
    for p in 0..=total {
        l[coords[pos]] = p;
        for_each_exact(coords, l, pos + 1, total - p, f);
    }
    l[coords[pos]] = 0;
}

/// Near-identity map `(θ, I) ↦ (θ + Δθ, I + ΔI)` given by displacement series.
#[derive(Clone, Debug)]
pub struct NearIdentityMap {
    pub angle_shift: Vec<FourierTaylorSeries>,
    pub action_shift: Vec<FourierTaylorSeries>,
}

impl NearIdentityMap {
    pub fn identity(f: &FourierTaylorSeries) -> Self {
        let zero = FourierTaylorSeries::zero(f.domain(), 0, 0)
            .with_center(f.center().to_vec())
            .expect("same dimension");
        Self { angle_shift: vec![zero.clone(); f.dim()], action_shift: vec![zero; f.dim()] }
    }

    /// Largest sup bound of the action displacement components.
    pub fn action_displacement(&self) -> f64 {
        self.action_shift.iter().map(|s| s.sup_bound()).fold(0.0, f64::max)
    }
}

/// `f ∘ Φ` by the Taylor expansion `Σ_{|β| ≤ order} ∂^β f · Δ^β / β!`.
/// The returned series lives on `radius` (the source domain of `Φ`).
pub fn compose(
    f: &FourierTaylorSeries,
    phi: &NearIdentityMap,
    order: u32,
    radius: f64,
) -> Result<FourierTaylorSeries> {
    let n = f.dim();
    if phi.angle_shift.len() != n || phi.action_shift.len() != n {
        return Err(Error::InvalidArgument("map has wrong dimension".into()));
    }
    let shrink = f.domain().radius() - radius;
    let reach = phi.action_displacement();
    if shrink < 0.0 || reach > shrink {
        return Err(Error::Domain(format!(
            "map moves actions by up to {reach}, but only {shrink} separates the domains"
        )));
    }
    let domain = f.domain().with_radius(radius)?;
    let on = |s: &FourierTaylorSeries| s.clone().with_domain(domain);
    let f_small = on(f)?;
    let shifts: Vec<FourierTaylorSeries> = phi
        .angle_shift
        .iter()
        .chain(&phi.action_shift)
        .map(|s| on(s).and_then(|s| s.with_center(f.center().to_vec())))
        .collect::<Result<_>>()?;

    let mut out = f_small.clone();
    let all: Vec<usize> = (0..2 * n).collect();
    let mut beta = vec![0u32; 2 * n];
    let mut result = Ok(());
    for total in 1..=order {
        for_each_exact(&all, &mut beta, 0, total, &mut |beta: &[u32]| {
            if result.is_err() {
                return;
            }
            let step = || -> Result<Option<FourierTaylorSeries>> {
                let mut d = f_small.clone();
                for (c, &times) in beta.iter().enumerate() {
                    for _ in 0..times {
                        let which =
                            if c < n { Coordinate::Angle(c) } else { Coordinate::Action(c - n) };
                        d = d.partial_derivative(which);
                    }
                }
                if d.is_empty() {
                    return Ok(None);
                }
                let mut term = d;
                let mut fact = 1.0;
                for (c, &times) in beta.iter().enumerate() {
                    for t in 0..times {
                        term = term.mul(&shifts[c])?.series;
                        fact *= (t + 1) as f64;
                    }
                }
                Ok(Some(term.scale(1.0 / fact)))
            };
            match step() {
                Ok(Some(term)) => match out.add(&term) {
                    Ok(s) => out = s,
                    Err(e) => result = Err(e),
                },
                Ok(None) => {}
                Err(e) => result = Err(e),
            }
        });
    }
    result?;
    Ok(out)
}

/// Outcome of comparing `|f∘Φ|_{α,CL}` on the smaller domain with `|f|_{α,L}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositionBoundReport {
    pub composed_norm: f64,
    pub original_norm: f64,
    pub ratio: f64,
    pub holds: bool,
}

/// Relative slack applied when comparing two grid norms.
const COMPOSITION_SLACK: f64 = 1e-12;

#[allow(clippy::too_many_arguments)]
pub fn check_composition_bound(
    f: &FourierTaylorSeries,
    phi: &NearIdentityMap,
    p: GevreyParams,
    c: f64,
    inner_radius: f64,
    order: u32,
    cap: u32,
    grid: GridSpec,
) -> Result<CompositionBoundReport> {
    let composed = compose(f, phi, order, inner_radius)?;
    let composed_norm = gevrey_norm_with_grid(&composed, p.with_l(c * p.l)?, cap, grid).value;
    let original_norm = gevrey_norm_with_grid(f, p, cap, grid).value;
    let ratio = if original_norm == 0.0 { 0.0 } else { composed_norm / original_norm };
    Ok(CompositionBoundReport {
        composed_norm,
        original_norm,
        ratio,
        holds: composed_norm <= original_norm * (1.0 + COMPOSITION_SLACK),
    })
}

/// Radius contraction constant `16^{−1} (2n)^{(1−α)/α}`.
pub fn radius_contraction(n: usize, alpha: f64) -> f64 {
    (2.0 * n as f64).powf((1.0 - alpha) / alpha) / 16.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Domain;

    fn dom(n: usize, r: f64) -> Domain {
        Domain::new(n, r).unwrap()
    }

    #[test]
    fn constant_norms() {
        let s = FourierTaylorSeries::constant(dom(2, 1.0), -2.5);
        let p = GevreyParams::new(1.0, 0.5).unwrap();
        assert_eq!(gevrey_norm(&s, p, 10).value, 2.5);
        for k in 0..4 {
            assert_eq!(ck_norm(&s, k).value, 2.5);
        }
    }

    #[test]
    fn action_coordinate_norms() {
        let s = FourierTaylorSeries::action_coordinate(dom(2, 1.0), 0);
        let p = GevreyParams::new(1.0, 0.5).unwrap();
        assert!((gevrey_norm(&s, p, 3).value - 1.5).abs() < 1e-15);
        assert!((ck_norm(&s, 1).value - 2.0).abs() < 1e-15);
        assert!((ck_norm(&s, 0).value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_gevrey_norm_matches_exponential_series() {
        let s = FourierTaylorSeries::cosine(dom(2, 1.0), &[1, 0], 1.0);
        let p = GevreyParams::new(1.0, 0.1).unwrap();
        let v = gevrey_norm(&s, p, 50).value;
        // Independent oracle: Σ_p (2πL)^p / p!
        let x = TAU * 0.1;
        let mut term = 1.0;
        let mut oracle = 0.0;
        for k in 0..60 {
            oracle += term;
            term *= x / (k + 1) as f64;
        }
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
        assert!((v - 1.8745).abs() < 1e-4);
    }

    #[test]
    fn certificate_csv_row() {
        let s = FourierTaylorSeries::constant(dom(1, 1.0), 1.0);
        let c = ck_norm(&s, 2);
        assert_eq!(c.csv_row(), "C2,1.0000000000000000e0,2,64x33");
        assert!(c.lower_bound);
    }

    #[test]
    fn derivative_bound_of_constant_is_zero() {
        let s = FourierTaylorSeries::constant(dom(2, 1.0), 3.0);
        let p = GevreyParams::new(1.0, 0.5).unwrap();
        let r = check_derivative_bound(&s, p, 2).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn derivative_bound_of_cosine() {
        let s = FourierTaylorSeries::cosine(dom(2, 1.0), &[1, 0], 1.0);
        let p = GevreyParams::new(1.0, 0.1).unwrap();
        let r = check_derivative_bound(&s, p, 1).unwrap();
        // |∂θ cos|_{1,L/2} = 2π e^{πL}, |cos|_{1,L} = e^{2πL}.
        let oracle = TAU * (-std::f64::consts::PI * 0.1).exp();
        assert!((r.ratio - oracle).abs() < 1e-9);
        assert!(r.within_constant);
    }

    #[test]
    fn composition_with_identity_and_constant() {
        let d = dom(1, 1.0);
        let p = GevreyParams::new(1.0, 0.5).unwrap();
        let c = FourierTaylorSeries::constant(d, 2.0);
        let id = NearIdentityMap::identity(&c);
        let r = check_composition_bound(&c, &id, p, radius_contraction(1, 1.0), 0.9, 2, 10, GridSpec::default())
            .unwrap();
        assert_eq!(r.composed_norm, 2.0);
        assert_eq!(r.original_norm, 2.0);
        assert!(r.holds);
    }

    #[test]
    fn composition_shifting_action() {
        let d = dom(1, 1.0);
        let f = FourierTaylorSeries::action_coordinate(d, 0);
        let mut phi = NearIdentityMap::identity(&f);
        phi.action_shift[0] = FourierTaylorSeries::sine(d, &[1], 0.1);
        let composed = compose(&f, &phi, 3, 0.8).unwrap();
        let v = composed.evaluate(&[0.25], &[0.5]).unwrap();
        assert!((v - 0.6).abs() < 1e-15);
        let p = GevreyParams::new(1.0, 0.5).unwrap();
        let r = check_composition_bound(&f, &phi, p, radius_contraction(1, 1.0), 0.8, 3, 20, GridSpec::default())
            .unwrap();
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn composition_leaving_domain_is_rejected() {
        let d = dom(1, 1.0);
        let f = FourierTaylorSeries::action_coordinate(d, 0);
        let mut phi = NearIdentityMap::identity(&f);
        phi.action_shift[0] = FourierTaylorSeries::sine(d, &[1], 0.5);
        assert!(matches!(compose(&f, &phi, 2, 0.9), Err(Error::Domain(_))));
    }
}
