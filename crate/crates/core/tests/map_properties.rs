use maxent_lab::{chordal_distance, RationalMap, SpherePoint};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn coeff() -> impl Strategy<Value = Complex64> {
    (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| Complex64::new(a, b))
}

fn point() -> impl Strategy<Value = SpherePoint> {
    prop_oneof![
        9 => (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| SpherePoint::new(a, b)),
        1 => Just(SpherePoint::Infinity),
    ]
}

/// Random maps of degree 2 or 3, polynomial or genuinely rational.
fn map() -> impl Strategy<Value = RationalMap> {
    (2usize..=3, proptest::collection::vec(coeff(), 8), any::<bool>()).prop_filter_map("degenerate", |(d, c, poly)| {
        let mut num: Vec<Complex64> = c[..d].to_vec();
        num.push(Complex64::new(1.0, 0.0) + c[d] * 0.1);
        let den = if poly { vec![Complex64::new(1.0, 0.0)] } else { c[4..4 + d].to_vec() };
        RationalMap::new("random", num, den).ok().filter(|f| f.degree() == d)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn riemann_hurwitz(f in map()) {
        let crit = f.critical_points_raw().unwrap();
        // entries carry local degrees
        let total: usize = crit.iter().map(|c| c.1 - 1).sum();
        prop_assert_eq!(total, 2 * f.degree() - 2);
    }

    #[test]
    fn preimages_map_back(f in map(), y in point()) {
        let res = f.preimages(y).unwrap();
        prop_assert_eq!(res.count_with_multiplicity(), f.degree());
        if res.certified {
            for z in f.preimage_list(y).unwrap() {
                prop_assert!(chordal_distance(f.eval(z), y) < 1e-7, "{} -> {} vs {}", z, f.eval(z), y);
            }
        }
    }

    #[test]
    fn iterates_agree_with_repeated_evaluation(f in map(), n in 1usize..=4, p in point()) {
        let g = f.iterate(n).unwrap();
        prop_assert_eq!(g.degree(), f.degree().pow(n as u32));
        let (a, b) = (g.eval(p), f.iterate_point(p, n));
        let slack = 64.0 * g.degree() as f64 * f64::EPSILON * condition(&g, p);
        prop_assert!(chordal_distance(a, b) < 1e-9 + slack, "{} vs {} (slack {:e})", a, b, slack);
    }
}

/// Relative condition number of evaluating the coefficient form of `g` at `p`.
fn condition(g: &RationalMap, p: SpherePoint) -> f64 {
    let (z, flip) = match p {
        SpherePoint::Infinity => (Complex64::new(0.0, 0.0), true),
        SpherePoint::Finite(z) if z.norm() > 1.0 => (1.0 / z, true),
        SpherePoint::Finite(z) => (z, false),
    };
    let d = g.degree();
    let cond = |c: &[Complex64]| {
        let mut coeffs: Vec<Complex64> = c.to_vec();
        coeffs.resize(d + 1, Complex64::new(0.0, 0.0));
        if flip {
            coeffs.reverse();
        }
        let (mut abs, mut val) = (0.0, Complex64::new(0.0, 0.0));
        for a in coeffs.iter().rev() {
            abs = abs * z.norm() + a.norm();
            val = val * z + a;
        }
        abs / val.norm().max(f64::MIN_POSITIVE)
    };
    cond(g.numerator()) + cond(g.denominator())
}

#[test]
fn squaring_iterates_match_pointwise_evaluation() {
    let f = RationalMap::unicritical("z2", 2, Complex64::new(0.0, 0.0)).unwrap();
    let mut rng = maxent_lab::rng::stream_rng(3, 0);
    for n in 1..=12 {
        let g = f.iterate(n).unwrap();
        assert_eq!(g.degree(), 1 << n);
        for _ in 0..100 {
            let p = SpherePoint::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            assert!(chordal_distance(g.eval(p), f.iterate_point(p, n)) < 1e-9, "n {n} at {p}");
        }
    }
}

#[test]
fn corpus_iterates_are_stable_where_well_conditioned() {
    let mut rng = maxent_lab::rng::stream_rng(4, 0);
    for entry in maxent_lab::registry::shipped_corpus() {
        let f = &entry.map;
        for n in 1..=10 {
            let g = f.iterate(n).unwrap();
            for _ in 0..100 {
                let p = SpherePoint::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                let slack = 64.0 * g.degree() as f64 * f64::EPSILON * condition(&g, p);
                assert!(chordal_distance(g.eval(p), f.iterate_point(p, n)) < 1e-9 + slack, "{} n {n} at {p}", f.name());
            }
        }
    }
}
