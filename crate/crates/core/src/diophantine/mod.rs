//! Integer-lattice geometry of frequencies: periodic vectors, simultaneous
//! Diophantine approximation, resonance modules, projections and rational
//! subspaces with bounded normals.

pub mod lattice;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use lattice::{gcd_of, integer_kernel, to_big, to_i64};

fn ratio_to_string(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn exact(x: f64) -> Result<BigRational> {
    BigRational::from_float(x)
        .ok_or_else(|| Error::InvalidArgument(format!("non-finite component {x}")))
}

/// A rational frequency `ω` together with its period `T`, the least `t > 0`
/// with `tω ∈ Z^n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicVector {
    omega: Vec<BigRational>,
    period: BigRational,
    lattice: Vec<i64>,
}

impl PeriodicVector {
    pub fn omega(&self) -> &[BigRational] {
        &self.omega
    }

    pub fn period(&self) -> &BigRational {
        &self.period
    }

    /// The integer vector `Tω`.
    pub fn lattice(&self) -> &[i64] {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    pub fn period_f64(&self) -> f64 {
        self.period.to_f64().unwrap_or(f64::NAN)
    }

    pub fn omega_f64(&self) -> Vec<f64> {
        self.omega.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect()
    }

    /// `|Tω|_∞`
    pub fn lattice_norm(&self) -> i64 {
        self.lattice.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Exact `k·ω`.
    pub fn dot(&self, k: &[i32]) -> BigRational {
        self.omega
            .iter()
            .zip(k)
            .map(|(w, &ki)| w * BigRational::from_integer(BigInt::from(ki)))
            .fold(BigRational::zero(), |a, b| a + b)
    }

    /// True iff `k·ω = 0`, tested on the integer vector `Tω`.
    pub fn annihilates(&self, k: &[i32]) -> bool {
        let s: i128 = self.lattice.iter().zip(k).map(|(&a, &b)| a as i128 * b as i128).sum();
        s == 0
    }

    pub fn omega_strings(&self) -> Vec<String> {
        self.omega.iter().map(ratio_to_string).collect()
    }
}

impl fmt::Display for PeriodicVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) T={}", self.omega_strings().join(", "), ratio_to_string(&self.period))
    }
}

/// The periodic vector with frequency `v`.
pub fn period_of(v: &[BigRational]) -> Result<PeriodicVector> {
    if v.is_empty() || v.iter().all(Zero::is_zero) {
        return Err(Error::ZeroVector);
    }
    let denom = v.iter().fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
    let scaled: Vec<BigInt> = v.iter().map(|r| (r * BigRational::from_integer(denom.clone())).to_integer()).collect();
    let g = gcd_of(&scaled);
    let period = BigRational::new(denom, g.clone());
    let lattice: Vec<BigInt> = scaled.iter().map(|x| x / &g).collect();
    let lattice = to_i64(&[lattice])?.remove(0);
    Ok(PeriodicVector { omega: v.to_vec(), period, lattice })
}

/// `period_of` for integer numerators over a common denominator.
pub fn period_of_fractions(fracs: &[(i64, i64)]) -> Result<PeriodicVector> {
    let v = fracs
        .iter()
        .map(|&(p, q)| {
            if q == 0 {
                Err(Error::InvalidArgument("zero denominator".into()))
            } else {
                Ok(BigRational::new(p.into(), q.into()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    period_of(&v)
}

/// Output of [`dirichlet_approx`] with the two inequalities' margins.
#[derive(Clone, Debug)]
pub struct DirichletApprox {
    pub vector: PeriodicVector,
    /// `|v − ω|_∞`
    pub error: f64,
    /// `T^{−1} Q^{−1/(n−1)}`
    pub error_bound: f64,
    /// `T − |v|^{−1}`
    pub lower_margin: f64,
    /// `Q|v|^{−1} − T`
    pub upper_margin: f64,
    pub candidates_examined: usize,
}

/// Default candidate budget for a given `Q` and dimension.
pub fn default_search_cap(q: f64, n: usize) -> usize {
    let per_shell = (q.ceil() as usize).saturating_mul(1 << n.min(20));
    per_shell.saturating_mul(q.ceil() as usize + 2).max(1024)
}

/// Simplest rational (least denominator, then least numerator) in `[lo, hi]`,
/// for `0 ≤ lo ≤ hi`.
pub fn simplest_rational_between(lo: &BigRational, hi: &BigRational) -> BigRational {
    debug_assert!(lo <= hi);
    let fl = lo.floor();
    if fl == *lo {
        return fl;
    }
    let next = &fl + BigRational::one();
    if next <= *hi {
        return next;
    }
    // lo and hi share the integer part.
    let inner = simplest_rational_between(&(hi - &fl).recip(), &(lo - &fl).recip());
    fl + inner.recip()
}

/// Finds a `T`-periodic `ω` with `|v − ω|_∞ ≤ T^{−1}Q^{−1/(n−1)}` and
/// `|v|^{−1} ≤ T ≤ Q|v|^{−1}`, both verified in exact arithmetic.
///
/// Candidates are the primitive integer vectors `p` near the ray through
/// `v`; for each, `T` is the simplest rational in the feasible interval
/// and `ω = p/T`. The smallest `T` wins, ties broken by the
/// lexicographically smallest `p`.
pub fn dirichlet_approx(v: &[f64], q: f64, search_cap: usize) -> Result<DirichletApprox> {
    let n = v.len();
    if n < 2 {
        return Err(Error::InvalidArgument("simultaneous approximation needs n >= 2".into()));
    }
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("Q must be finite and > 1, got {q}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite frequency".into()));
    }
    let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let star = v.iter().position(|x| x.abs() == norm).expect("max exists");
    let delta = q.powf(-1.0 / (n as f64 - 1.0));

    let v_exact: Vec<BigRational> = v.iter().map(|&x| exact(x)).collect::<Result<_>>()?;
    let q_exact = exact(q)?;
    let norm_exact = v_exact[star].abs();
    let t_min_exact = norm_exact.recip();
    let t_max_exact = &q_exact / &norm_exact;

    let mut best: Option<(BigRational, Vec<i64>)> = None;
    let mut examined = 0usize;
    let last_shell = (q + delta).floor() as i64 + 1;
    let sign = if v[star] > 0.0 { 1 } else { -1 };

    for m in 1..=last_shell {
        let shell_lo = ((m as f64 - delta).max(1.0)) / norm;
        if let Some((t, _)) = &best {
            if shell_lo > t.to_f64().unwrap_or(f64::INFINITY) * (1.0 + 1e-9) {
                break;
            }
        }
        let t_lo = (m as f64 - delta).max(1.0) / norm;
        let t_hi = (m as f64 + delta).min(q) / norm;
        if t_lo > t_hi {
            continue;
        }
        // Integer candidates for every coordinate.
        let ranges: Vec<Vec<i64>> = (0..n)
            .map(|i| {
                if i == star {
                    return vec![sign * m];
                }
                let a = v[i] * t_lo;
                let b = v[i] * t_hi;
                let (lo, hi) = (a.min(b) - delta, a.max(b) + delta);
                ((lo.ceil() as i64)..=(hi.floor() as i64)).collect()
            })
            .collect();
        if ranges.iter().any(Vec::is_empty) {
            continue;
        }
        let mut p = vec![0i64; n];
        let mut stack = vec![0usize; n];
        'combos: loop {
            for i in 0..n {
                p[i] = ranges[i][stack[i]];
            }
            examined += 1;
            if examined > search_cap {
                return Err(Error::SearchExhausted {
                    candidates: examined - 1,
                    detail: format!("no T-periodic approximation of {v:?} with Q={q} found"),
                });
            }
            if let Some(t) = feasible_period(&p, &v_exact, &q_exact, &t_min_exact, &t_max_exact, n) {
                let better = match &best {
                    None => true,
                    Some((bt, bp)) => t < *bt || (t == *bt && p < *bp),
                };
                if better {
                    best = Some((t, p.clone()));
                }
            }
            let mut i = 0;
            loop {
                if i == n {
                    break 'combos;
                }
                stack[i] += 1;
                if stack[i] < ranges[i].len() {
                    break;
                }
                stack[i] = 0;
                i += 1;
            }
        }
    }

    let (t, p) = best.ok_or_else(|| Error::SearchExhausted {
        candidates: examined,
        detail: format!("no T-periodic approximation of {v:?} with Q={q} found"),
    })?;
    let omega: Vec<BigRational> =
        p.iter().map(|&pi| BigRational::from_integer(pi.into()) / &t).collect();
    let vector = period_of(&omega)?;
    if vector.period != t {
        return Err(Error::Inconsistent(format!(
            "period {} differs from the chosen T {}",
            vector.period, t
        )));
    }
    let tf = t.to_f64().unwrap_or(f64::NAN);
    let error = omega
        .iter()
        .zip(&v_exact)
        .map(|(w, x)| (w - x).abs().to_f64().unwrap_or(f64::NAN))
        .fold(0.0, f64::max);
    Ok(DirichletApprox {
        error,
        error_bound: delta / tf,
        lower_margin: tf - 1.0 / norm,
        upper_margin: q / norm - tf,
        candidates_examined: examined,
        vector,
    })
}

/// Simplest admissible `T` for the integer vector `p`, if any.
fn feasible_period(
    p: &[i64],
    v: &[BigRational],
    q: &BigRational,
    t_min: &BigRational,
    t_max: &BigRational,
    n: usize,
) -> Option<BigRational> {
    let g = p.iter().fold(0i64, |g, &x| g.gcd(&x));
    if g != 1 {
        return None;
    }
    // Floating interval for T, then an exact check.
    let delta = q.to_f64()?.powf(-1.0 / (n as f64 - 1.0));
    let mut lo = t_min.to_f64()?;
    let mut hi = t_max.to_f64()?;
    for (pi, vi) in p.iter().zip(v) {
        let vf = vi.to_f64()?;
        let pf = *pi as f64;
        if vf == 0.0 {
            if pf.abs() > delta {
                return None;
            }
            continue;
        }
        let a = (pf - delta) / vf;
        let b = (pf + delta) / vf;
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    if lo > hi {
        return None;
    }
    // The exact check rejects a boundary choice spoiled by rounding; the
    // slightly shrunk interval is the fallback.
    for shrink in [0.0, (hi - lo) * 1e-9] {
        let lo_r = exact(lo + shrink).ok()?.max(t_min.clone());
        let hi_r = exact(hi - shrink).ok()?.min(t_max.clone());
        if lo_r > hi_r {
            continue;
        }
        let t = simplest_rational_between(&lo_r, &hi_r);
        if check_dirichlet(p, &t, v, q, t_min, t_max, n) {
            return Some(t);
        }
    }
    None
}

/// Exact check of both inequalities for `ω = p/T`.
fn check_dirichlet(
    p: &[i64],
    t: &BigRational,
    v: &[BigRational],
    q: &BigRational,
    t_min: &BigRational,
    t_max: &BigRational,
    n: usize,
) -> bool {
    if t < t_min || t > t_max {
        return false;
    }
    // |Tv_i − p_i| ≤ Q^{−1/(n−1)}  ⇔  |Tv_i − p_i|^{n−1} · Q ≤ 1
    p.iter().zip(v).all(|(&pi, vi)| {
        let d = (t * vi - BigRational::from_integer(pi.into())).abs();
        let mut pow = BigRational::one();
        for _ in 0..n - 1 {
            pow *= &d;
        }
        pow * q <= BigRational::one()
    })
}

/// Ordered independent periodic vectors with their resonance module.
#[derive(Clone, Debug)]
pub struct ResonanceFrame {
    n: usize,
    vectors: Vec<PeriodicVector>,
    module_basis: Vec<Vec<i64>>,
    lambda_basis: DMatrix<f64>,
    l_index: i64,
}

impl ResonanceFrame {
    /// The empty frame: no vectors, `Λ = R^n`.
    pub fn empty(n: usize) -> Self {
        Self::new(n, Vec::new()).expect("empty frame is valid")
    }

    pub fn new(n: usize, vectors: Vec<PeriodicVector>) -> Result<Self> {
        if vectors.iter().any(|v| v.dim() != n) {
            return Err(Error::InvalidArgument("frame vector has wrong dimension".into()));
        }
        let module_basis = resonance_module(n, &vectors)?;
        let lambda_basis = orthonormal_columns(n, &module_basis);
        let l_index = vectors.iter().map(PeriodicVector::lattice_norm).max().unwrap_or(1).max(1);
        Ok(Self { n, vectors, module_basis, lambda_basis, l_index })
    }

    /// Appends a vector; fails if it is dependent on the current ones.
    pub fn extend(&self, v: PeriodicVector) -> Result<Self> {
        let mut vectors = self.vectors.clone();
        vectors.push(v);
        Self::new(self.n, vectors)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[PeriodicVector] {
        &self.vectors
    }

    pub fn module_basis(&self) -> &[Vec<i64>] {
        &self.module_basis
    }

    /// `n × (n − j)` matrix with orthonormal columns spanning `Λ`.
    pub fn lambda_basis(&self) -> &DMatrix<f64> {
        &self.lambda_basis
    }

    /// `max_i |T_i ω_i|_∞`, at least 1.
    pub fn l_index(&self) -> i64 {
        self.l_index
    }

    /// True iff `k·ω_i = 0` for every frame vector.
    pub fn is_resonant(&self, k: &[i32]) -> bool {
        self.vectors.iter().all(|v| v.annihilates(k))
    }

    /// `(Π, Π^⊥)`: orthogonal projections onto `Λ` and its complement.
    pub fn projections(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let b = &self.lambda_basis;
        let pi = b * b.transpose();
        let perp = DMatrix::identity(self.n, self.n) - &pi;
        (pi, perp)
    }

    pub fn project(&self, x: &[f64]) -> DVector<f64> {
        let b = &self.lambda_basis;
        b * (b.transpose() * DVector::from_column_slice(x))
    }

    pub fn project_perp(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x) - self.project(x)
    }
}

/// Integer basis of `{k ∈ Z^n : k·ω_i = 0 for all i}` in row Hermite form.
pub fn resonance_module(n: usize, vectors: &[PeriodicVector]) -> Result<Vec<Vec<i64>>> {
    let rows: Vec<Vec<i64>> = vectors.iter().map(|v| v.lattice.clone()).collect();
    if lattice::rank_int(&rows) != rows.len() {
        return Err(Error::DependentVectors);
    }
    let kernel = integer_kernel(&to_big(&rows), n);
    if kernel.len() != n - rows.len() {
        return Err(Error::Inconsistent(format!(
            "kernel rank {} differs from {}",
            kernel.len(),
            n - rows.len()
        )));
    }
    to_i64(&kernel)
}

/// Orthonormal columns spanning the rows of `rows` (modified Gram–Schmidt).
fn orthonormal_columns(n: usize, rows: &[Vec<i64>]) -> DMatrix<f64> {
    let vecs: Vec<DVector<f64>> =
        rows.iter().map(|r| DVector::from_iterator(n, r.iter().map(|&v| v as f64))).collect();
    let basis = gram_schmidt(&vecs, 1e-12);
    if basis.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

/// Modified Gram–Schmidt, dropping vectors whose residual is below `tol`
/// relative to their length.
pub fn gram_schmidt(vecs: &[DVector<f64>], tol: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vecs {
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for e in &out {
                let c = e.dot(&w);
                w -= e * c;
            }
        }
        let r = w.norm();
        if r > tol * scale {
            out.push(w / r);
        }
    }
    out
}

/// A rational subspace `Λ` given by integer normals spanning `Λ^⊥`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalSubspace {
    n: usize,
    normals: Vec<Vec<i64>>,
}

impl RationalSubspace {
    pub fn new(n: usize, normals: Vec<Vec<i64>>) -> Result<Self> {
        if normals.iter().any(|k| k.len() != n) {
            return Err(Error::InvalidArgument("normal has wrong dimension".into()));
        }
        if normals.len() > n || lattice::rank_int(&normals) != normals.len() {
            return Err(Error::Degenerate("normals are linearly dependent".into()));
        }
        Ok(Self { n, normals })
    }

    /// `Λ = R^n`
    pub fn full(n: usize) -> Self {
        Self { n, normals: Vec::new() }
    }

    /// Subspace spanned by integer direction vectors.
    pub fn spanned_by(n: usize, directions: &[Vec<i64>]) -> Result<Self> {
        if lattice::rank_int(directions) != directions.len() {
            return Err(Error::Degenerate("directions are linearly dependent".into()));
        }
        let normals = to_i64(&integer_kernel(&to_big(directions), n))?;
        Self::new(n, normals)
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    /// `dim Λ`
    pub fn dim(&self) -> usize {
        self.n - self.normals.len()
    }

    pub fn normals(&self) -> &[Vec<i64>] {
        &self.normals
    }

    /// Integer basis of `Λ ∩ Z^n` in row Hermite form; identifies `Λ`.
    pub fn canonical_key(&self) -> Vec<Vec<i64>> {
        to_i64(&integer_kernel(&to_big(&self.normals), self.n)).expect("small entries")
    }

    /// Whether an integer vector lies in `Λ^⊥`.
    pub fn is_normal(&self, k: &[i64]) -> bool {
        self.canonical_key()
            .iter()
            .all(|b| b.iter().zip(k).map(|(&x, &y)| x as i128 * y as i128).sum::<i128>() == 0)
    }
}

impl fmt::Display for RationalSubspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let key = self.canonical_key();
        let parts: Vec<String> = key
            .iter()
            .map(|r| format!("({})", r.iter().map(i64::to_string).collect::<Vec<_>>().join(",")))
            .collect();
        write!(f, "span{{{}}}", parts.join(","))
    }
}

/// Nonzero integer vectors with `|k|_1 ≤ l`, in a fixed order.
pub fn integer_vectors_l1(n: usize, l: u32) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = vec![0i64; n];
    fn rec(pos: usize, budget: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if pos == cur.len() {
            if cur.iter().any(|&x| x != 0) {
                out.push(cur.clone());
            }
            return;
        }
        for v in -budget..=budget {
            cur[pos] = v;
            rec(pos + 1, budget - v.abs(), cur, out);
        }
        cur[pos] = 0;
    }
    rec(0, l as i64, &mut cur, &mut out);
    out
}

/// Primitive vectors with `|k|_1 ≤ l` whose first nonzero entry is positive.
pub fn primitive_normals(n: usize, l: u32) -> Vec<Vec<i64>> {
    integer_vectors_l1(n, l)
        .into_iter()
        .filter(|k| {
            let first = k.iter().find(|&&x| x != 0).copied().unwrap_or(0);
            first > 0 && k.iter().fold(0i64, |g, &x| g.gcd(&x)) == 1
        })
        .collect()
}

/// Whether `Λ^⊥` is spanned by integer vectors with `|k|_1 ≤ l`.
pub fn subspace_in_gl(s: &RationalSubspace, l: u32) -> bool {
    let codim = s.normals.len();
    if codim == 0 {
        return true;
    }
    let inside: Vec<Vec<i64>> =
        integer_vectors_l1(s.n, l).into_iter().filter(|k| s.is_normal(k)).collect();
    lattice::rank_int(&inside) == codim
}

/// Every subspace of dimension `k` in `G^l(n, k)`, keyed by its canonical
/// form, together with the least `l` at which it appears.
pub fn enumerate_gl(n: usize, k: usize, l_max: u32) -> Vec<(RationalSubspace, u32)> {
    let codim = n - k;
    let mut found: BTreeMap<Vec<Vec<i64>>, (RationalSubspace, u32)> = BTreeMap::new();
    if codim == 0 {
        let s = RationalSubspace::full(n);
        return vec![(s, 1)];
    }
    for l in 1..=l_max {
        let normals = primitive_normals(n, l);
        let mut chosen: Vec<usize> = Vec::new();
        subsets(&normals, codim, 0, &mut chosen, &mut |set: &[Vec<i64>]| {
            if let Ok(s) = RationalSubspace::new(n, set.to_vec()) {
                found.entry(s.canonical_key()).or_insert((s, l));
            }
        });
    }
    let mut out: Vec<_> = found.into_values().collect();
    out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.canonical_key().cmp(&b.0.canonical_key())));
    out
}

fn subsets(
    pool: &[Vec<i64>],
    size: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    f: &mut dyn FnMut(&[Vec<i64>]),
) {
    if chosen.len() == size {
        let set: Vec<Vec<i64>> = chosen.iter().map(|&i| pool[i].clone()).collect();
        f(&set);
        return;
    }
    for i in start..pool.len() {
        chosen.push(i);
        if lattice::rank_int(&chosen.iter().map(|&j| pool[j].clone()).collect::<Vec<_>>()) == chosen.len() {
            subsets(pool, size, i + 1, chosen, f);
        }
        chosen.pop();
    }
}

/// Orthonormal bases `(e, f)`.
pub type AdaptedBasis = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Orthonormal bases adapted to `Λ`: `e` spans `Λ`, `f` spans `Λ^⊥`.
/// `f` comes from the normals in input order, `e` from the canonical basis
/// in index order.
pub fn adapted_coordinates(s: &RationalSubspace) -> Result<AdaptedBasis> {
    let n = s.n;
    let normals: Vec<DVector<f64>> = s
        .normals
        .iter()
        .map(|r| DVector::from_iterator(n, r.iter().map(|&v| v as f64)))
        .collect();
    let f = gram_schmidt(&normals, 1e-12);
    if f.len() != normals.len() {
        return Err(Error::Degenerate("normals are linearly dependent".into()));
    }
    let mut all = f.clone();
    let mut e = Vec::new();
    for i in 0..n {
        if e.len() == s.dim() {
            break;
        }
        let mut w = DVector::zeros(n);
        w[i] = 1.0;
        let next = gram_schmidt(&[all.clone(), vec![w]].concat(), 1e-9);
        if next.len() > all.len() {
            let v = next.last().expect("grew").clone();
            e.push(v.clone());
            all.push(v);
        }
    }
    if e.len() != s.dim() {
        return Err(Error::Degenerate("could not complete the basis".into()));
    }
    Ok((e, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    #[test]
    fn periods() {
        assert_eq!(period_of(&[rat(1, 1), rat(0, 1)]).unwrap().period(), &rat(1, 1));
        assert_eq!(period_of(&[rat(1, 1), rat(1, 3)]).unwrap().period(), &rat(3, 1));
        let v = period_of(&[rat(2, 3), rat(1, 6)]).unwrap();
        assert_eq!(v.period(), &rat(6, 1));
        assert_eq!(v.lattice(), &[4, 1]);
        assert!(matches!(period_of(&[rat(0, 1), rat(0, 1)]), Err(Error::ZeroVector)));
    }

    #[test]
    fn period_can_be_fractional() {
        let v = period_of(&[rat(2, 1), rat(4, 1)]).unwrap();
        assert_eq!(v.period(), &rat(1, 2));
        assert_eq!(v.lattice(), &[1, 2]);
    }

    #[test]
    fn simplest_rationals() {
        assert_eq!(simplest_rational_between(&rat(49, 10), &rat(507, 100)), rat(5, 1));
        assert_eq!(simplest_rational_between(&rat(1, 3), &rat(1, 2)), rat(1, 2));
        assert_eq!(simplest_rational_between(&rat(3, 10), &rat(4, 10)), rat(1, 3));
        assert_eq!(simplest_rational_between(&rat(7, 5), &rat(7, 5)), rat(7, 5));
    }

    #[test]
    fn dirichlet_examples() {
        let a = dirichlet_approx(&[1.0, 0.0], 5.0, 10_000).unwrap();
        assert_eq!(a.vector.omega(), &[rat(1, 1), rat(0, 1)]);
        assert_eq!(a.vector.period(), &rat(1, 1));
        assert_eq!(a.error, 0.0);

        let a = dirichlet_approx(&[1.0, 1.0 / 3.0], 4.0, 10_000).unwrap();
        assert_eq!(a.vector.period(), &rat(3, 1));
        assert_eq!(a.vector.lattice(), &[3, 1]);

        let a = dirichlet_approx(&[1.0, 0.41421356], 10.0, 10_000).unwrap();
        assert_eq!(a.vector.omega(), &[rat(1, 1), rat(2, 5)]);
        assert_eq!(a.vector.period(), &rat(5, 1));
        assert!((a.error - 0.01421356).abs() < 1e-12);
        assert!(a.error <= a.error_bound);
    }

    #[test]
    fn dirichlet_rejects_bad_input() {
        assert!(matches!(dirichlet_approx(&[0.0, 0.0], 5.0, 100), Err(Error::ZeroVector)));
        assert!(dirichlet_approx(&[1.0], 5.0, 100).is_err());
        assert!(dirichlet_approx(&[1.0, 0.5], 1.0, 100).is_err());
        assert!(matches!(
            dirichlet_approx(&[1.0, 0.41421356], 10.0, 0),
            Err(Error::SearchExhausted { .. })
        ));
    }

    #[test]
    fn module_examples() {
        let e1 = period_of_fractions(&[(1, 1), (0, 1)]).unwrap();
        let e2 = period_of_fractions(&[(0, 1), (1, 1)]).unwrap();
        assert!(resonance_module(2, &[e1.clone(), e2]).unwrap().is_empty());
        let d = period_of_fractions(&[(1, 1), (1, 1)]).unwrap();
        assert_eq!(resonance_module(2, &[d]).unwrap(), vec![vec![1, -1]]);
        let w = period_of_fractions(&[(2, 1), (1, 1)]).unwrap();
        assert_eq!(resonance_module(2, &[w]).unwrap(), vec![vec![1, -2]]);
        let twice = period_of_fractions(&[(2, 1), (0, 1)]).unwrap();
        assert!(matches!(resonance_module(2, &[e1, twice]), Err(Error::DependentVectors)));
    }

    #[test]
    fn projection_examples() {
        let frame = ResonanceFrame::empty(2);
        let (pi, perp) = frame.projections();
        assert_eq!(pi, DMatrix::identity(2, 2));
        assert_eq!(perp, DMatrix::zeros(2, 2));

        let e1 = period_of_fractions(&[(1, 1), (0, 1)]).unwrap();
        let e2 = period_of_fractions(&[(0, 1), (1, 1)]).unwrap();
        let full = ResonanceFrame::new(2, vec![e1, e2]).unwrap();
        let (pi, perp) = full.projections();
        assert_eq!(pi, DMatrix::zeros(2, 2));
        assert_eq!(perp, DMatrix::identity(2, 2));

        let d = period_of_fractions(&[(1, 1), (1, 1)]).unwrap();
        let frame = ResonanceFrame::new(2, vec![d]).unwrap();
        let p = frame.project(&[1.0, 0.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] + 0.5).abs() < 1e-15);
        assert_eq!(frame.l_index(), 1);
    }

    #[test]
    fn gl_membership() {
        let s = RationalSubspace::new(2, vec![vec![1, 0]]).unwrap();
        assert!(subspace_in_gl(&s, 1));
        let s = RationalSubspace::new(2, vec![vec![2, 3]]).unwrap();
        assert!(!subspace_in_gl(&s, 4));
        assert!(subspace_in_gl(&s, 5));
        assert!(subspace_in_gl(&RationalSubspace::full(3), 1));
    }

    #[test]
    fn adapted_coordinate_examples() {
        let s = RationalSubspace::new(2, vec![vec![0, 1]]).unwrap();
        let (e, f) = adapted_coordinates(&s).unwrap();
        assert_eq!(e, vec![DVector::from_vec(vec![1.0, 0.0])]);
        assert_eq!(f, vec![DVector::from_vec(vec![0.0, 1.0])]);

        let s = RationalSubspace::new(2, vec![vec![1, 1]]).unwrap();
        let (e, _) = adapted_coordinates(&s).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e[0][0] - h).abs() < 1e-15 && (e[0][1] + h).abs() < 1e-15);

        let (e, f) = adapted_coordinates(&RationalSubspace::full(3)).unwrap();
        assert_eq!(e.len(), 3);
        assert!(f.is_empty());
        assert_eq!(e[2], DVector::from_vec(vec![0.0, 0.0, 1.0]));
    }

    #[test]
    fn gl_enumeration_in_the_plane() {
        let lines = enumerate_gl(2, 1, 2);
        // Normals with |k|_1 ≤ 2 up to sign: (1,0), (0,1), (1,1), (1,-1).
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|(_, l)| *l <= 2));
        assert_eq!(enumerate_gl(2, 2, 3).len(), 1);
    }
}
