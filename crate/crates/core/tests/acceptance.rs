//! Acceptance criteria 1–12, each printed as one PASS/FAIL line.
//!
//! Run with `cargo test -p effstab --test acceptance -- --nocapture` to see
//! the report.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use effstab::diophantine::{
    default_search_cap, dirichlet_approx, period_of_fractions, PeriodicVector, RationalSubspace, ResonanceFrame,
};
use effstab::dynamics::{integrate_series, transverse_drift, IntegratorConfig};
use effstab::harness::{data_section, run_scaling, ExperimentConfig, Family, SystemSpec};
use effstab::morse::{check_morse, ladder_gamma, MorseGrid, MorseParams};
use effstab::normal_form::{
    composed_normal_form, homological_solve, periodic_averaging, resonant_average, verify_resonant_symmetry,
    NormalFormConfig,
};
use effstab::restrain::exponents;
use effstab::series::{Domain, FourierTaylorSeries, PolynomialHamiltonian};

/// Criteria that cannot hold as stated; see the README.
const KNOWN_UNATTAINABLE: &[u32] = &[8];

struct Verdict {
    id: u32,
    passed: bool,
    detail: String,
}

fn criterion(id: u32, limit_secs: Option<f64>, body: impl FnOnce() -> Result<String, String>) -> Verdict {
    let clock = Instant::now();
    let result = body();
    let secs = clock.elapsed().as_secs_f64();
    let (mut passed, mut detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if let Some(limit) = limit_secs {
        if secs >= limit {
            passed = false;
            detail.push_str(&format!("; runtime {secs:.1}s over the {limit}s limit"));
        }
    }
    println!("criterion {id:>2}: {} ({secs:.2}s) {detail}", if passed { "PASS" } else { "FAIL" });
    Verdict { id, passed, detail }
}

fn dom(n: usize) -> Domain {
    Domain::new(n, 1.0).unwrap()
}

fn random_periodic(rng: &mut impl Rng, n: usize, t_max: i64) -> PeriodicVector {
    loop {
        let t = rng.random_range(1..=t_max);
        let fr: Vec<(i64, i64)> = (0..n).map(|_| (rng.random_range(-2 * t..=2 * t), t)).collect();
        if fr.iter().any(|f| f.0 != 0) {
            return period_of_fractions(&fr).unwrap();
        }
    }
}

fn random_series(rng: &mut impl Rng, n: usize, k_max: i32, degree: u32, amplitude: f64) -> FourierTaylorSeries {
    let mut f = FourierTaylorSeries::zero(dom(n), k_max as u32, degree);
    for _ in 0..rng.random_range(1..=10) {
        let k: Vec<i32> = (0..n).map(|_| rng.random_range(-k_max..=k_max)).collect();
        let mut l = vec![0u32; n];
        for _ in 0..rng.random_range(0..=degree) {
            l[rng.random_range(0..n)] += 1;
        }
        let a = amplitude * rng.random_range(-1.0..1.0);
        if rng.random_bool(0.5) {
            f.add_cos(&k, &l, a);
        } else {
            f.add_sin(&k, &l, a);
        }
    }
    f
}

/// Series whose angle support lies in the integer span of `basis`.
fn series_on_module(rng: &mut impl Rng, n: usize, basis: &[Vec<i64>], amplitude: f64) -> FourierTaylorSeries {
    let mut f = FourierTaylorSeries::zero(dom(n), 1, 2);
    for _ in 0..rng.random_range(1..=6) {
        let mut k = vec![0i64; n];
        for b in basis {
            let c = rng.random_range(-2..=2);
            for (x, y) in k.iter_mut().zip(b) {
                *x += c * y;
            }
        }
        let k: Vec<i32> = k.iter().map(|&x| x as i32).collect();
        let mut l = vec![0u32; n];
        l[rng.random_range(0..n)] = rng.random_range(0..=2);
        f.add_cos(&k, &l, amplitude * rng.random_range(-1.0..1.0));
    }
    f
}

fn max_coefficient_gap(a: &FourierTaylorSeries, b: &FourierTaylorSeries) -> f64 {
    let mut gap: f64 = 0.0;
    for (idx, c) in a.terms() {
        gap = gap.max((c - b.coeff(idx)).norm());
    }
    for (idx, c) in b.terms() {
        gap = gap.max((c - a.coeff(idx)).norm());
    }
    gap
}

fn max_coefficient(a: &FourierTaylorSeries) -> f64 {
    a.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max)
}

fn c1_homological_identity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let cases = 250;
    for case in 0..cases {
        let n = rng.random_range(1..=3);
        let k_max = rng.random_range(1..=8);
        let f = random_series(&mut rng, n, k_max, 2, 1.0);
        let w = random_periodic(&mut rng, n, 20);
        let l = FourierTaylorSeries::linear(dom(n), &w.omega_f64());
        let chi = homological_solve(&f, &w).map_err(|e| format!("case {case}: {e}"))?;
        let lhs = chi.poisson_bracket_full(&l).unwrap().add(&resonant_average(&f, &w)).unwrap();
        let rel = max_coefficient_gap(&lhs, &f) / max_coefficient(&f).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        if rel > 1e-12 {
            return Err(format!("case {case}: relative gap {rel:e}"));
        }
    }
    Ok(format!("{cases} cases, worst relative gap {worst:.2e}"))
}

/// `ω_2 = ω_1 + δ` with `|δ|_∞ ≤ 1/50`, so the two frequencies are close
/// as the composed construction needs.
fn close_pair(rng: &mut impl Rng, n: usize) -> (PeriodicVector, PeriodicVector) {
    let w1 = random_periodic(rng, n, 4);
    let d: i64 = rng.random_range(50..=200);
    let fr: Vec<(i64, i64)> = w1
        .omega()
        .iter()
        .map(|o| {
            let shifted = o + BigRational::new(BigInt::from(rng.random_range(-1..=1)), BigInt::from(d));
            (i64::try_from(shifted.numer()).unwrap(), i64::try_from(shifted.denom()).unwrap())
        })
        .collect();
    (w1, period_of_fractions(&fr).unwrap())
}

fn c2_normal_form_symmetry() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut cases = 0;
    let mut nontrivial = 0;
    while cases < 60 {
        let n = if cases % 2 == 0 { 2 } else { 3 };
        let (w1, w2) = close_pair(&mut rng, n);
        let Ok(frame) = ResonanceFrame::new(n, vec![w1, w2.clone()]) else { continue };
        // Low modes plus modes resonant with the whole frame. A low mode
        // resonant with w_2 alone would need |k·(w_2 − w_1)| ≥ 1/T_1, which
        // the closeness of the pair rules out. Periods reach ~800, so T|f|
        // stays small only for tiny f.
        let mut f = random_series(&mut rng, n, 2, 1, 1e-6);
        for b in frame.module_basis().iter().filter(|b| b.iter().all(|x| x.abs() <= 2)) {
            let k: Vec<i32> = b.iter().map(|&x| x as i32).collect();
            let mut l = vec![0u32; n];
            l[rng.random_range(0..n)] = 1;
            f.add_cos(&k, &l, 1e-6 * rng.random_range(-1.0..1.0));
        }
        let h = FourierTaylorSeries::linear(dom(n), &w2.omega_f64()).add(&f).unwrap();
        let r = composed_normal_form(&h, &frame, &NormalFormConfig::new(2, 3).unwrap())
            .map_err(|e| format!("frame {cases}: {e}"))?;
        if !r.symmetry_checked || !verify_resonant_symmetry(&r.g, &frame) {
            return Err(format!("frame {cases}: g is not frame-resonant"));
        }
        if r.g.terms().any(|(idx, c)| !idx.is_angle_free() && c.norm() > 0.0) {
            nontrivial += 1;
        }
        cases += 1;
    }
    Ok(format!("{cases} random 2-frames in n = 2, 3 ({nontrivial} with angle-dependent g)"))
}

fn c3_symmetry_propagation() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut cases = 0;
    let mut terms_checked = 0;
    while cases < 120 {
        let n = rng.random_range(2..=3);
        let w1 = random_periodic(&mut rng, n, 5);
        let w2 = random_periodic(&mut rng, n, 5);
        if ResonanceFrame::new(n, vec![w1.clone(), w2.clone()]).is_err() {
            continue;
        }
        let module = ResonanceFrame::new(n, vec![w2.clone()]).unwrap().module_basis().to_vec();
        let f = series_on_module(&mut rng, n, &module, 1e-2);
        let h = FourierTaylorSeries::linear(dom(n), &w1.omega_f64()).add(&f).unwrap();
        let r = periodic_averaging(&h, &w1, &NormalFormConfig::new(2, 3).unwrap()).map_err(|e| e.to_string())?;
        let mut outputs = vec![&r.g, &r.remainder];
        outputs.extend(r.transform.generators());
        for s in outputs {
            for (idx, c) in s.terms() {
                terms_checked += 1;
                if c.norm() > 0.0 && !exact_dot_is_zero(&idx.angle, &w2) {
                    return Err(format!("case {cases}: mode {:?} breaks the symmetry", idx.angle));
                }
            }
        }
        cases += 1;
    }
    Ok(format!("{cases} cases, {terms_checked} output modes all annihilated by w_2"))
}

fn exact_dot_is_zero(k: &[i32], w: &PeriodicVector) -> bool {
    let s: BigRational = k.iter().zip(w.omega()).map(|(&k, o)| BigRational::from_integer(k.into()) * o).sum();
    s.is_zero()
}

fn c4_dirichlet() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..1000 {
        let n = if case % 2 == 0 { 2 } else { 3 };
        let v: Vec<f64> = loop {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            if v.iter().any(|x| x.abs() > 0.05) {
                break v;
            }
        };
        let q = if n == 2 { rng.random_range(1.5..60.0) } else { rng.random_range(1.5..15.0) };
        let r = dirichlet_approx(&v, q, default_search_cap(q, n)).map_err(|e| format!("case {case}: {e}"))?;
        let t = r.vector.period_f64();
        let omega = r.vector.omega_f64();
        let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = v.iter().zip(&omega).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let bound = q.powf(-1.0 / (n as f64 - 1.0)) / t;
        let tol = 1e-12;
        if err > bound * (1.0 + tol) || t < (1.0 - tol) / norm || t > q / norm * (1.0 + tol) {
            return Err(format!("case {case}: v={v:?} Q={q} T={t} error={err:e} bound={bound:e}"));
        }
        if (t * omega.iter().fold(0.0, |m: f64, x| m.max(x.abs())) - r.vector.lattice_norm() as f64).abs() > 1e-9 {
            return Err(format!("case {case}: T w is not the stored lattice vector"));
        }
    }
    Ok("1000 cases, zero failures".into())
}

/// Integer vectors `k` with `|k|_1 ≤ l` and `k·ω_i = 0` in exact arithmetic.
fn brute_kernel(n: usize, vectors: &[PeriodicVector], l: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut k = vec![-l; n];
    loop {
        if k.iter().map(|x| x.abs()).sum::<i64>() <= l && k.iter().any(|&x| x != 0) {
            let ok = vectors.iter().all(|w| {
                let s: BigRational = k.iter().zip(w.omega()).map(|(&k, o)| BigRational::from_integer(k.into()) * o).sum();
                s.is_zero()
            });
            if ok {
                out.push(k.clone());
            }
        }
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            k[i] += 1;
            if k[i] <= l {
                break;
            }
            k[i] = -l;
            i += 1;
        }
    }
}

/// Coordinates of `x` in the rows of `basis` over Q, if it lies in their span.
fn solve_in_span(basis: &[Vec<i64>], x: &[i64]) -> Option<Vec<BigRational>> {
    let r = basis.len();
    let n = x.len();
    let q = |v: i64| BigRational::from_integer(BigInt::from(v));
    // Columns are the basis vectors, augmented with x.
    let mut m: Vec<Vec<BigRational>> = (0..n)
        .map(|i| basis.iter().map(|b| q(b[i])).chain(std::iter::once(q(x[i]))).collect())
        .collect();
    let mut row = 0;
    let mut pivots = Vec::new();
    for col in 0..r {
        let Some(p) = (row..n).find(|&i| !m[i][col].is_zero()) else { continue };
        m.swap(row, p);
        let inv = m[row][col].recip();
        for v in m[row].iter_mut() {
            *v *= &inv;
        }
        for i in 0..n {
            if i != row && !m[i][col].is_zero() {
                let factor = m[i][col].clone();
                let pivot_row = m[row].clone();
                for (v, p) in m[i].iter_mut().zip(&pivot_row) {
                    *v -= &factor * p;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    if m[row..].iter().any(|rw| !rw[r].is_zero()) {
        return None;
    }
    let mut coords = vec![BigRational::zero(); r];
    for (i, &c) in pivots.iter().enumerate() {
        coords[c] = m[i][r].clone();
    }
    Some(coords)
}

fn rank(vectors: &[Vec<i64>]) -> usize {
    let mut basis: Vec<Vec<i64>> = Vec::new();
    for v in vectors {
        if basis.is_empty() || solve_in_span(&basis, v).is_none() {
            basis.push(v.clone());
        }
    }
    basis.len()
}

fn c5_resonance_module() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut frames = 0;
    let mut kernel_vectors = 0;
    while frames < 100 {
        let n = rng.random_range(2..=3);
        let j = rng.random_range(1..n);
        let vectors: Vec<PeriodicVector> = (0..j).map(|_| random_periodic(&mut rng, n, 4)).collect();
        let Ok(frame) = ResonanceFrame::new(n, vectors.clone()) else { continue };
        let basis = frame.module_basis();
        let l = if n == 2 { 20 } else { 10 };
        let brute = brute_kernel(n, &vectors, l);
        kernel_vectors += brute.len();
        if basis.len() != n - j {
            return Err(format!("frame {frames}: basis has {} vectors, expected {}", basis.len(), n - j));
        }
        for b in basis {
            if !vectors.iter().all(|w| exact_dot_is_zero(&b.iter().map(|&x| x as i32).collect::<Vec<_>>(), w)) {
                return Err(format!("frame {frames}: basis vector {b:?} not in the kernel"));
            }
        }
        for k in &brute {
            let coords = solve_in_span(basis, k).ok_or_else(|| format!("frame {frames}: {k:?} outside the span"))?;
            if coords.iter().any(|c| !c.is_integer()) {
                return Err(format!("frame {frames}: {k:?} is not an integer combination of {basis:?}"));
            }
        }
        if basis.iter().all(|b| b.iter().map(|x| x.abs()).sum::<i64>() <= l) && rank(&brute) != basis.len() {
            return Err(format!("frame {frames}: brute-force kernel rank differs"));
        }
        frames += 1;
    }
    Ok(format!("{frames} frames, {kernel_vectors} brute-force kernel vectors"))
}

fn c6_exponents() -> Result<String, String> {
    let e = exponents(2, 2.0).map_err(|e| e.to_string())?;
    let q = |d: i64| BigRational::new(BigInt::one(), BigInt::from(d));
    let expected = (vec![q(144), q(12)], q(432), q(432));
    if e.a_list == expected.0 && e.a == expected.1 && e.b == expected.2 {
        Ok(format!("a_1 = {}, a_2 = {}, a = {}, b = {}", e.a_list[0], e.a_list[1], e.a, e.b))
    } else {
        Err(format!("got {:?}, {}, {}", e.a_list, e.a, e.b))
    }
}

fn c7_transverse_drift() -> Result<String, String> {
    let w = period_of_fractions(&[(1, 1), (1, 2)]).unwrap();
    let frame = ResonanceFrame::new(2, vec![w.clone()]).unwrap();
    // Modes (1, -2) and (2, -4) are resonant with (1, 1/2).
    let mut g = FourierTaylorSeries::zero(dom(2), 4, 2);
    g.add_cos(&[1, -2], &[0, 0], 0.05);
    g.add_cos(&[1, -2], &[1, 0], 0.03);
    g.add_sin(&[2, -4], &[0, 2], 0.02);
    g.add_cos(&[0, 0], &[2, 0], 0.5);
    if !verify_resonant_symmetry(&g, &frame) {
        return Err("test Hamiltonian is not frame-resonant".into());
    }
    let h = FourierTaylorSeries::linear(dom(2), &w.omega_f64()).add(&g).unwrap();
    let cfg = IntegratorConfig { sample_stride: 50, ..IntegratorConfig::with_step(0.02) };
    let traj = integrate_series(&h, (&[0.1, 0.3], &[0.05, -0.1]), 1e4, &cfg).map_err(|e| e.to_string())?;
    let end = *traj.times.last().unwrap();
    if end < 1e4 - 1e-9 {
        return Err(format!("trajectory stopped at t = {end}"));
    }
    let d = transverse_drift(&traj, &frame, 0.0).map_err(|e| e.to_string())?;
    let along = traj.actions.iter().map(|a| (a[0] - 0.05).abs()).fold(0.0, f64::max);
    if d.max <= 1e-9 {
        Ok(format!("max transverse drift {:.2e} over t <= 1e4 (resonant excursion {along:.2e})", d.max))
    } else {
        Err(format!("max transverse drift {:e}", d.max))
    }
}

fn c8_remainder_decay() -> Result<String, String> {
    let w = period_of_fractions(&[(1, 1), (0, 1)]).unwrap();
    let h = FourierTaylorSeries::linear(dom(2), &w.omega_f64())
        .add(&FourierTaylorSeries::cosine(dom(2), &[1, 0], 1e-3))
        .unwrap();
    let mut norms = Vec::new();
    for m in 1..=8 {
        let r = periodic_averaging(&h, &w, &NormalFormConfig::new(m, 4).unwrap()).map_err(|e| e.to_string())?;
        norms.push(r.remainder_norm());
    }
    let decreasing = norms.windows(2).all(|p| p[1] < p[0]);
    let ratio = norms[7] / norms[0];
    let shown: Vec<String> = norms.iter().map(|x| format!("{x:.1e}")).collect();
    if decreasing && ratio < 1e-6 {
        Ok(format!("remainders {}", shown.join(" ")))
    } else {
        Err(format!(
            "remainders {} are not strictly decreasing (ratio {ratio:e}); the perturbation is action-free, so one step removes it exactly",
            shown.join(" ")
        ))
    }
}

fn c9_integrator() -> Result<String, String> {
    let d = Domain::new(1, 2.0).unwrap();
    let h = FourierTaylorSeries::half_square_norm(d).add(&FourierTaylorSeries::cosine(d, &[1], 1e-2)).unwrap();
    let cfg = IntegratorConfig { sample_stride: 1000, ..IntegratorConfig::with_step(1e-3) };
    let traj = integrate_series(&h, (&[0.25], &[0.1]), 100.0, &cfg).map_err(|e| e.to_string())?;
    let steps = (100.0f64 / 1e-3).round() as usize;
    let energy = traj.max_energy_deviation;
    let (theta, action) = traj.final_state().unwrap();
    let back = integrate_series(&h, (theta, &[-action[0]]), 100.0, &cfg).map_err(|e| e.to_string())?;
    let (theta_b, action_b) = back.final_state().unwrap();
    let angle_gap = {
        let d = (theta_b[0] - 0.25).rem_euclid(1.0);
        d.min(1.0 - d)
    };
    let rev = angle_gap.max((action_b[0] + 0.1).abs());
    if energy < 1e-6 && rev < 1e-8 {
        Ok(format!("{steps} steps: energy deviation {energy:.2e}, reversibility error {rev:.2e}"))
    } else {
        Err(format!("energy deviation {energy:e}, reversibility error {rev:e}"))
    }
}

fn c10_morse() -> Result<String, String> {
    let d = dom(2);
    let quad = PolynomialHamiltonian::new(&FourierTaylorSeries::half_square_norm(d)).unwrap();
    let mut s = FourierTaylorSeries::zero(d, 0, 2);
    s.add_cos(&[0, 0], &[2, 0], 0.5);
    let degenerate = PolynomialHamiltonian::new(&s).unwrap();
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let golden = PolynomialHamiltonian::new(&FourierTaylorSeries::linear(d, &[1.0, g])).unwrap();
    let e2 = RationalSubspace::spanned_by(2, &[vec![0, 1]]).unwrap();
    let p = MorseParams::new(0.9, 2.0).unwrap();

    let coarse = check_morse(&golden, p, 5, &MorseGrid::new(2, 1.0, 33)).map_err(|e| e.to_string())?;
    let gamma = ladder_gamma(coarse.critical_gamma).ok_or("no ladder gamma for the golden linear h")?;
    let golden_p = MorseParams::new(gamma, 2.0).unwrap();
    let mut verdicts = Vec::new();
    for grid in [33, 65] {
        let mg = MorseGrid::new(2, 1.0, grid);
        let a = check_morse(&quad, p, 3, &mg).map_err(|e| e.to_string())?;
        let b = check_morse(&degenerate, p, 3, &mg).map_err(|e| e.to_string())?;
        let c = check_morse(&golden, golden_p, 5, &mg).map_err(|e| e.to_string())?;
        let names_e2 = b.failing_subspaces().contains(&&e2);
        verdicts.push((a.passed, !b.passed && names_e2, c.passed));
    }
    if verdicts.iter().all(|v| *v == (true, true, true)) {
        Ok(format!(
            "quadratic passes, 1/2 I_1^2 fails on span{{e_2}}, golden linear passes at gamma = {gamma:e} (critical {:.3e}); grids 33 and 65 agree",
            coarse.critical_gamma
        ))
    } else {
        Err(format!("verdicts per grid (33, 65): {verdicts:?}"))
    }
}

fn c11_exclusion() -> Result<String, String> {
    let cfg = ExperimentConfig {
        system: SystemSpec::Builtin(Family::QuasiConvex),
        epsilons: vec![1e-4],
        samples: 20,
        seed: 11,
        t_cap: 1e4,
        restrain: true,
        ..ExperimentConfig::default()
    };
    let out = run_scaling(&cfg).map_err(|e| e.to_string())?;
    let certified: Vec<_> = out.records.iter().filter(|r| r.certificate == "certified").collect();
    let both = certified.iter().filter(|r| r.exclusion != "ok").count();
    let drifted = out.records.iter().filter(|r| !r.is_sentinel()).count();
    let detail = format!(
        "{} runs, {} certified, {} drifted, {both} with both (tau_m = {:.0})",
        out.records.len(),
        certified.len(),
        drifted,
        out.records[0].tau_m
    );
    if both == 0 && !certified.is_empty() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c12_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = ExperimentConfig::parse(
        "system = quasi-convex\nepsilons = 1e-2, 1e-3\nsamples = 3\nseed = 12\nm = 3\nrestrain = true\n",
    )
    .map_err(|e| e.to_string())?;
    let mut texts = Vec::new();
    for (i, workers) in [1, 4, 0].into_iter().enumerate() {
        let mut cfg = base.clone();
        cfg.workers = workers;
        cfg.output = Some(dir.path().join(format!("run{i}.csv")));
        run_scaling(&cfg).map_err(|e| e.to_string())?;
        texts.push(data_section(&std::fs::read_to_string(cfg.output.unwrap()).map_err(|e| e.to_string())?));
    }
    if texts.windows(2).all(|w| w[0] == w[1]) {
        Ok(format!("3 runs (1, 4, all workers) give identical {}-byte data sections", texts[0].len()))
    } else {
        Err("data sections differ".into())
    }
}

#[test]
fn acceptance_report() {
    let verdicts = vec![
        criterion(1, Some(10.0), c1_homological_identity),
        criterion(2, Some(60.0), c2_normal_form_symmetry),
        criterion(3, None, c3_symmetry_propagation),
        criterion(4, Some(30.0), c4_dirichlet),
        criterion(5, Some(30.0), c5_resonance_module),
        criterion(6, None, c6_exponents),
        criterion(7, Some(60.0), c7_transverse_drift),
        criterion(8, None, c8_remainder_decay),
        criterion(9, None, c9_integrator),
        criterion(10, None, c10_morse),
        criterion(11, None, c11_exclusion),
        criterion(12, None, c12_determinism),
    ];
    let passed = verdicts.iter().filter(|v| v.passed).count();
    println!("acceptance: {passed}/{} criteria pass", verdicts.len());
    let unexpected: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.passed && !KNOWN_UNATTAINABLE.contains(&v.id))
        .map(|v| format!("{}: {}", v.id, v.detail))
        .collect();
    assert!(unexpected.is_empty(), "failing criteria: {unexpected:?}");
}

/// Criterion 8 exactly as stated. It fails: see [`c8_remainder_decay`].
#[test]
#[ignore = "unattainable as stated: the remainder vanishes after one step"]
fn criterion_8_strict() {
    c8_remainder_decay().unwrap();
}

/// The decay the criterion is after, on a perturbation that does depend on
/// the actions.
#[test]
fn remainder_decays_for_action_dependent_perturbation() {
    let w = period_of_fractions(&[(1, 1), (1, 2)]).unwrap();
    let mut f = FourierTaylorSeries::cosine(dom(2), &[1, 0], 1e-3).with_bounds(6, 4);
    f.add_cos(&[0, 1], &[1, 0], 1e-3);
    f.add_cos(&[1, -2], &[0, 1], 1e-3);
    let h = FourierTaylorSeries::linear(dom(2), &w.omega_f64()).add(&f).unwrap();
    let r = periodic_averaging(&h, &w, &NormalFormConfig::new(4, 6).unwrap()).unwrap();
    let trace = r.remainder_trace();
    assert!(trace.windows(2).all(|p| p[1] < p[0]), "{trace:?}");
    assert!(trace[3] / trace[0] < 1e-6, "{trace:?}");
}
