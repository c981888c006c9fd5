//! Exact integer and rational linear algebra on small matrices.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub(crate) fn to_big(rows: &[Vec<i64>]) -> Vec<Vec<BigInt>> {
    rows.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect()
}

pub(crate) fn to_i64(rows: &[Vec<BigInt>]) -> Result<Vec<Vec<i64>>> {
    rows.iter()
        .map(|r| {
            r.iter()
                .map(|v| {
                    v.to_i64().ok_or_else(|| {
                        Error::InvalidArgument(format!("integer {v} does not fit in 64 bits"))
                    })
                })
                .collect()
        })
        .collect()
}

/// Rank over `Q` by fraction-free elimination on a copy.
pub fn rank(rows: &[Vec<BigRational>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let cols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        for i in r + 1..m.len() {
            if m[i][c].is_zero() {
                continue;
            }
            let f = &m[i][c] / &m[r][c];
            for k in c..cols {
                let d = &f * &m[r][k];
                m[i][k] -= d;
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

pub fn rank_int(rows: &[Vec<i64>]) -> usize {
    let q: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| BigRational::from_integer(v.into())).collect())
        .collect();
    rank(&q)
}

/// Extended gcd with `x·a + y·b = g ≥ 0`.
fn ext_gcd(a: &BigInt, b: &BigInt) -> (BigInt, BigInt, BigInt) {
    let e = a.extended_gcd(b);
    if e.gcd.is_negative() {
        (-e.gcd, -e.x, -e.y)
    } else {
        (e.gcd, e.x, e.y)
    }
}

/// Basis (as rows) of the integer kernel `{k ∈ Z^n : A k = 0}`, in row
/// Hermite normal form.
pub fn integer_kernel(a: &[Vec<BigInt>], n: usize) -> Vec<Vec<BigInt>> {
    let mut m: Vec<Vec<BigInt>> = a.to_vec();
    // Columns of `u` track the unimodular column operations applied to `m`.
    let mut u: Vec<Vec<BigInt>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect();
    let col_op = |mat: &mut Vec<Vec<BigInt>>, p: usize, c: usize, x: &BigInt, y: &BigInt, s: &BigInt, t: &BigInt| {
        for row in mat.iter_mut() {
            let vp = row[p].clone();
            let vc = row[c].clone();
            row[p] = x * &vp + y * &vc;
            row[c] = s * &vp + t * &vc;
        }
    };
    let mut pivot = 0;
    for i in 0..m.len() {
        if pivot == n {
            break;
        }
        for c in pivot + 1..n {
            if m[i][c].is_zero() {
                continue;
            }
            let a_ = m[i][pivot].clone();
            let b_ = m[i][c].clone();
            let (g, x, y) = ext_gcd(&a_, &b_);
            let s = -(&b_ / &g);
            let t = &a_ / &g;
            col_op(&mut m, pivot, c, &x, &y, &s, &t);
            col_op(&mut u, pivot, c, &x, &y, &s, &t);
        }
        if !m[i][pivot].is_zero() {
            pivot += 1;
        }
    }
    let kernel: Vec<Vec<BigInt>> = (pivot..n).map(|c| (0..n).map(|r| u[r][c].clone()).collect()).collect();
    hermite_rows(kernel)
}

/// Row Hermite normal form with positive pivots and reduced entries above
/// each pivot. Zero rows are removed.
pub fn hermite_rows(mut m: Vec<Vec<BigInt>>) -> Vec<Vec<BigInt>> {
    let cols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        if r == m.len() {
            break;
        }
        // Euclid on column `c` over rows r.. until a single nonzero remains.
        loop {
            let nonzero: Vec<usize> = (r..m.len()).filter(|&i| !m[i][c].is_zero()).collect();
            if nonzero.len() <= 1 {
                if let Some(&p) = nonzero.first() {
                    m.swap(r, p);
                }
                break;
            }
            let p = *nonzero.iter().min_by_key(|&&i| m[i][c].abs()).expect("nonempty");
            m.swap(r, p);
            for i in r + 1..m.len() {
                if m[i][c].is_zero() {
                    continue;
                }
                let q = m[i][c].div_floor(&m[r][c]);
                for k in 0..cols {
                    let d = &q * &m[r][k];
                    m[i][k] -= d;
                }
            }
        }
        if m[r][c].is_zero() {
            continue;
        }
        if m[r][c].is_negative() {
            for v in m[r].iter_mut() {
                *v = -v.clone();
            }
        }
        for i in 0..r {
            let q = m[i][c].div_floor(&m[r][c]);
            if !q.is_zero() {
                for k in 0..cols {
                    let d = &q * &m[r][k];
                    m[i][k] -= d;
                }
            }
        }
        r += 1;
    }
    m.truncate(r);
    m.retain(|row| row.iter().any(|v| !v.is_zero()));
    m
}

pub fn gcd_of(v: &[BigInt]) -> BigInt {
    v.iter().fold(BigInt::zero(), |g, x| g.gcd(x))
}
