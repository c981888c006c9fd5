//! Frozen constants for the derivative and composition bounds.
//!
//! Calibrated on [`calibration_corpus`] with the default grid and a
//! derivative cap of 40, then rounded up. Re-run the
//! `calibration_corpus_stays_below_frozen_constant` test after changing
//! the norm implementation.

use super::GevreyParams;
use crate::series::{Domain, FourierTaylorSeries};

/// Upper bound on `ratio / derivative_bound_envelope` over the corpus.
pub const DERIVATIVE_BOUND_CONSTANT: f64 = 0.2;

/// Derivative cap used for the calibration.
pub const CALIBRATION_CAP: u32 = 40;

/// Series, Gevrey parameters and derivative orders of the corpus.
pub fn calibration_corpus() -> Vec<(FourierTaylorSeries, GevreyParams, u32)> {
    let mut out = Vec::new();
    for n in [1usize, 2] {
        let d = Domain::new(n, 1.0).expect("valid domain");
        let mut shapes = Vec::new();
        for k in [1, 2, 4] {
            let mut kv = vec![0; n];
            kv[0] = k;
            shapes.push(FourierTaylorSeries::cosine(d, &kv, 1.0));
            let mut s = FourierTaylorSeries::zero(d, k as u32, 2);
            let mut l = vec![0; n];
            l[n - 1] = 1;
            s.add_cos(&kv, &l, 1.0);
            l[n - 1] = 2;
            s.add_sin(&kv, &l, 0.5);
            shapes.push(s);
        }
        shapes.push(FourierTaylorSeries::half_square_norm(d));
        for s in &shapes {
            for alpha in [1.0, 1.5, 2.0] {
                for l in [0.05, 0.1, 0.2, 0.5] {
                    for order in 1..=3 {
                        out.push((s.clone(), GevreyParams::new(alpha, l).expect("valid"), order));
                    }
                }
            }
        }
    }
    out
}
