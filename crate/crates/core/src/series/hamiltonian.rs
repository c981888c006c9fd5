use nalgebra::{DMatrix, DVector};

use super::{Coordinate, FourierTaylorSeries};
use crate::error::{Error, Result};

/// Regularity class of the perturbation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regularity {
    /// Gevrey class `G^{α,L}`; `α = 1` is the analytic case.
    Gevrey { alpha: f64, l: f64 },
    /// `C^k` with the polynomial time exponent `k*`.
    FiniteDiff { k: u32, k_star: u32 },
}

impl Regularity {
    pub fn gevrey(alpha: f64, l: f64) -> Result<Self> {
        if !(alpha >= 1.0) || !(l > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Gevrey class needs alpha >= 1 and L > 0, got alpha={alpha}, L={l}"
            )));
        }
        Ok(Self::Gevrey { alpha, l })
    }

    pub fn finite_diff(n: usize, k: u32, k_star: u32) -> Result<Self> {
        if k_star < 1 || (k as usize) < k_star as usize * n + 1 {
            return Err(Error::InvalidArgument(format!(
                "finite regularity needs k* >= 1 and k >= k*·n + 1, got k={k}, k*={k_star}, n={n}"
            )));
        }
        Ok(Self::FiniteDiff { k, k_star })
    }

    /// Short tag used in file headers, e.g. `gevrey:1:0.5` or `ck:5:1`.
    pub fn tag(&self) -> String {
        match self {
            Self::Gevrey { alpha, l } => format!("gevrey:{alpha:?}:{l:?}"),
            Self::FiniteDiff { k, k_star } => format!("ck:{k}:{k_star}"),
        }
    }

    pub fn parse_tag(tag: &str) -> Result<Self> {
        let parts: Vec<&str> = tag.trim().split(':').collect();
        let bad = || Error::InvalidArgument(format!("unrecognised regularity tag `{tag}`"));
        match parts.as_slice() {
            ["gevrey", a, l] => Ok(Self::Gevrey {
                alpha: a.parse().map_err(|_| bad())?,
                l: l.parse().map_err(|_| bad())?,
            }),
            ["ck", k, ks] => Ok(Self::FiniteDiff {
                k: k.parse().map_err(|_| bad())?,
                k_star: ks.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// `H = h(I) + f(θ, I)` where `f` is stored at its actual size and
/// `epsilon` records the bound on it.
#[derive(Clone, Debug)]
pub struct HamiltonianSystem {
    integrable: FourierTaylorSeries,
    perturbation: FourierTaylorSeries,
    epsilon: f64,
    regularity: Regularity,
}

impl HamiltonianSystem {
    pub fn new(
        integrable: FourierTaylorSeries,
        perturbation: FourierTaylorSeries,
        epsilon: f64,
        regularity: Regularity,
    ) -> Result<Self> {
        if integrable.terms().any(|(idx, c)| !idx.is_angle_free() && c.norm() > 0.0) {
            return Err(Error::InvalidArgument("integrable part depends on the angles".into()));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
        }
        match regularity {
            Regularity::FiniteDiff { k, k_star } => {
                Regularity::finite_diff(integrable.dim(), k, k_star)?;
            }
            Regularity::Gevrey { alpha, l } => {
                Regularity::gevrey(alpha, l)?;
            }
        }
        // Validates that both parts live on the same domain.
        integrable.add(&perturbation)?;
        Ok(Self { integrable, perturbation, epsilon, regularity })
    }

    pub fn integrable(&self) -> &FourierTaylorSeries {
        &self.integrable
    }

    pub fn perturbation(&self) -> &FourierTaylorSeries {
        &self.perturbation
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn dim(&self) -> usize {
        self.integrable.dim()
    }

    /// `h + f` as a single series.
    pub fn total(&self) -> FourierTaylorSeries {
        self.integrable.add(&self.perturbation).expect("validated at construction")
    }
}

/// A function of the actions with gradient and Hessian.
pub trait IntegrableHamiltonian: Sync {
    fn dim(&self) -> usize;
    fn value(&self, action: &[f64]) -> f64;
    fn gradient(&self, action: &[f64]) -> DVector<f64>;
    fn hessian(&self, action: &[f64]) -> DMatrix<f64>;
}

/// An angle-free series with its first and second derivatives precomputed.
#[derive(Clone, Debug)]
pub struct PolynomialHamiltonian {
    value: FourierTaylorSeries,
    gradient: Vec<FourierTaylorSeries>,
    hessian: Vec<Vec<FourierTaylorSeries>>,
}

impl PolynomialHamiltonian {
    pub fn new(h: &FourierTaylorSeries) -> Result<Self> {
        if h.terms().any(|(idx, c)| !idx.is_angle_free() && c.norm() > 0.0) {
            return Err(Error::InvalidArgument("integrable part depends on the angles".into()));
        }
        let n = h.dim();
        let gradient: Vec<_> =
            (0..n).map(|i| h.partial_derivative(Coordinate::Action(i))).collect();
        let hessian = gradient
            .iter()
            .map(|g| (0..n).map(|j| g.partial_derivative(Coordinate::Action(j))).collect())
            .collect();
        Ok(Self { value: h.clone(), gradient, hessian })
    }

    pub fn series(&self) -> &FourierTaylorSeries {
        &self.value
    }

    /// `h(I) − ξ·I`
    pub fn shifted(&self, xi: &[f64]) -> Result<Self> {
        let lin = FourierTaylorSeries::linear(self.value.domain(), xi)
            .with_center(self.value.center().to_vec())?;
        // ξ·(I − c) differs from ξ·I by a constant, which has no gradient.
        Self::new(&self.value.sub(&lin)?)
    }
}

fn eval_real(s: &FourierTaylorSeries, action: &[f64]) -> f64 {
    let zeros = vec![0.0; action.len()];
    s.evaluate_complex(&zeros, action).re
}

impl IntegrableHamiltonian for PolynomialHamiltonian {
    fn dim(&self) -> usize {
        self.value.dim()
    }

    fn value(&self, action: &[f64]) -> f64 {
        eval_real(&self.value, action)
    }

    fn gradient(&self, action: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.gradient.iter().map(|g| eval_real(g, action)))
    }

    fn hessian(&self, action: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| eval_real(&self.hessian[i][j], action))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Domain;

    #[test]
    fn regularity_tags_round_trip() {
        for r in [Regularity::Gevrey { alpha: 1.5, l: 0.25 }, Regularity::FiniteDiff { k: 7, k_star: 2 }]
        {
            assert_eq!(Regularity::parse_tag(&r.tag()).unwrap(), r);
        }
    }

    #[test]
    fn finite_diff_requires_enough_smoothness() {
        assert!(Regularity::finite_diff(2, 4, 2).is_err());
        assert!(Regularity::finite_diff(2, 5, 2).is_ok());
    }

    #[test]
    fn integrable_part_must_be_angle_free() {
        let d = Domain::new(1, 1.0).unwrap();
        let h = FourierTaylorSeries::cosine(d, &[1], 1.0);
        let f = FourierTaylorSeries::zero(d, 0, 0);
        let r = Regularity::Gevrey { alpha: 1.0, l: 1.0 };
        assert!(HamiltonianSystem::new(h, f, 0.0, r).is_err());
    }

    #[test]
    fn quadratic_derivatives() {
        let d = Domain::new(2, 1.0).unwrap();
        let h = PolynomialHamiltonian::new(&FourierTaylorSeries::half_square_norm(d)).unwrap();
        let g = h.gradient(&[0.3, -0.2]);
        assert!((g[0] - 0.3).abs() < 1e-15 && (g[1] + 0.2).abs() < 1e-15);
        assert_eq!(h.hessian(&[0.1, 0.1]), DMatrix::identity(2, 2));
        let s = h.shifted(&[1.0, 0.0]).unwrap();
        assert!((s.gradient(&[0.3, 0.0])[0] + 0.7).abs() < 1e-15);
    }
}
