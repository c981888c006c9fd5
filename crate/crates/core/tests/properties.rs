use effstab::diophantine::{dirichlet_approx, simplest_rational_between};
use effstab::norms::{ck_norm_with_grid, GridSpec};
use effstab::restrain::exponents;
use effstab::series::io;
use effstab::{Domain, FourierTaylorSeries};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

type Term = (Vec<i32>, Vec<u32>, f64, bool);

fn terms() -> impl Strategy<Value = Vec<Term>> {
    prop::collection::vec(
        (
            prop::collection::vec(-2i32..=2, 2),
            prop::collection::vec(0u32..=2, 2),
            -1.0f64..1.0,
            any::<bool>(),
        ),
        1..5,
    )
}

fn build(ts: &[Term]) -> FourierTaylorSeries {
    let d = Domain::new(2, 0.5).unwrap();
    let mut s = FourierTaylorSeries::zero(d, 4, 4);
    for (k, l, a, cos) in ts {
        if *cos {
            s.add_cos(k, l, *a);
        } else {
            s.add_sin(k, l, *a);
        }
    }
    s
}

fn max_coeff_gap(a: &FourierTaylorSeries, b: &FourierTaylorSeries) -> f64 {
    a.sub(b).unwrap().terms().map(|(_, c)| c.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_is_antisymmetric(f in terms(), g in terms()) {
        let (f, g) = (build(&f), build(&g));
        let fg = f.poisson_bracket_full(&g).unwrap();
        let gf = g.poisson_bracket_full(&f).unwrap();
        let sum = fg.add(&gf).unwrap();
        prop_assert!(sum.terms().all(|(_, c)| c.norm() < 1e-9));
    }

    #[test]
    fn bracket_matches_pointwise_derivatives(f in terms(), g in terms(), th in prop::collection::vec(0.0f64..1.0, 2), i in prop::collection::vec(-0.3f64..0.3, 2)) {
        let (f, g) = (build(&f), build(&g));
        let b = f.poisson_bracket_full(&g).unwrap();
        let h = 1e-5;
        let d = |s: &FourierTaylorSeries, ang: bool, j: usize| {
            let (mut tp, mut tm, mut ip, mut im) = (th.clone(), th.clone(), i.clone(), i.clone());
            if ang { tp[j] += h; tm[j] -= h; } else { ip[j] += h; im[j] -= h; }
            (s.evaluate_complex(&tp, &ip) - s.evaluate_complex(&tm, &im)).re / (2.0 * h)
        };
        let mut expect = 0.0;
        for j in 0..2 {
            expect += d(&f, true, j) * d(&g, false, j) - d(&f, false, j) * d(&g, true, j);
        }
        let got = b.evaluate_complex(&th, &i).re;
        prop_assert!((got - expect).abs() < 1e-4 * (1.0 + expect.abs()), "{got} vs {expect}");
    }

    #[test]
    fn series_text_round_trips(f in terms()) {
        let f = build(&f);
        let (back, _) = io::from_str(&io::to_string(&f, None)).unwrap();
        prop_assert!(max_coeff_gap(&f, &back) < 1e-12);
    }

    #[test]
    fn ck_norm_is_subadditive_and_homogeneous(f in terms(), g in terms(), lambda in -3.0f64..3.0) {
        let (f, g) = (build(&f), build(&g));
        let grid = GridSpec { angle_points: 12, action_points: 5 };
        let ck = |s: &FourierTaylorSeries| ck_norm_with_grid(s, 1, grid).value;
        let (nf, ng) = (ck(&f), ck(&g));
        let nfg = ck(&f.add(&g).unwrap());
        prop_assert!(nfg <= (nf + ng) * (1.0 + 1e-9) + 1e-12);
        let scaled = ck(&f.scale(lambda));
        prop_assert!((scaled - lambda.abs() * nf).abs() <= 1e-9 * (1.0 + nf));
    }

    #[test]
    fn dirichlet_meets_its_bounds(x in -1.0f64..1.0, q in 2.0f64..60.0) {
        let a = dirichlet_approx(&[1.0, x], q, 1_000_000).unwrap();
        prop_assert!(a.error <= a.error_bound * (1.0 + 1e-9));
        prop_assert!(a.lower_margin >= -1e-12);
        prop_assert!(a.upper_margin >= -1e-12);
    }

    #[test]
    fn simplest_rational_lies_between(a in -500i64..500, b in 1i64..60, c in 0i64..500, d in 1i64..60) {
        let lo = BigRational::new(BigInt::from(a), BigInt::from(b));
        let hi = &lo + BigRational::new(BigInt::from(c), BigInt::from(d));
        let r = simplest_rational_between(&lo, &hi);
        prop_assert!(lo <= r && r <= hi);
        prop_assert!(r.denom() <= &BigInt::from(b));
    }

    #[test]
    fn exponents_increase_and_bound_a(n in 1usize..5, tau in 2.0f64..6.0) {
        let e = exponents(n, tau).unwrap();
        for j in 1..e.a_list.len() {
            prop_assert!(e.a_list[j - 1] < e.a_list[j]);
        }
        prop_assert!(e.a_f64() < e.a_j(1));
        prop_assert_eq!(&e.a, &e.b);
    }
}
