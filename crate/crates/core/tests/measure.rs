use std::f64::consts::PI;

use maxent_lab::measure::sample_measure;
use maxent_lab::pullback::jacobian_trial;
use maxent_lab::registry::shipped_corpus;
use maxent_lab::rng::stream_rng;
use maxent_lab::scaling::{
    center_exponent, doubling_scan, inverse_doubling_stats_at, lower_exponent_fit, sqrt2_radii, upper_exponent_check, DoublingVerdict,
};
use maxent_lab::{chordal_distance, RationalMap, SphereBall, SpherePoint};
use num_complex::Complex64;
use rand::Rng;

fn quad(c: f64) -> RationalMap {
    RationalMap::unicritical(format!("z2{c:+}"), 2, Complex64::new(c, 0.0)).unwrap()
}

fn p(re: f64, im: f64) -> SpherePoint {
    SpherePoint::new(re, im)
}

/// Arc-length mass of a chordal ball centered on the unit circle.
fn circle_mass(r: f64) -> f64 {
    2.0 * (r / 2.0).asin() / PI
}

/// Equilibrium mass of [-2, 2] inside the chordal ball of radius `r` around real `c`.
fn interval_mass(c: f64, r: f64) -> f64 {
    let k = r * r * (1.0 + c * c);
    let (a, b, cc) = (4.0 - k, -8.0 * c, 4.0 * c * c - k);
    let disc = (b * b - 4.0 * a * cc).sqrt();
    let (lo, hi) = ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a));
    let cdf = |x: f64| 0.5 + (x.clamp(-2.0, 2.0) / 2.0).asin() / PI;
    cdf(hi) - cdf(lo)
}

#[test]
fn interval_oracle_is_a_probability() {
    assert!((interval_mass(0.0, 1.99) - 1.0).abs() < 1e-12);
    assert!(interval_mass(0.3, 1e-3) > 0.0);
    let near: f64 = interval_mass(2.0, 1e-4);
    // square-root scaling at the endpoint
    assert!((interval_mass(2.0, 4e-4) / near - 2.0).abs() < 0.01);
}

#[test]
fn supports_match_the_julia_sets() {
    let mu = sample_measure(&quad(0.0), 50, 150, 50, 1).unwrap();
    for a in mu.atoms() {
        assert!((a.finite().unwrap().norm() - 1.0).abs() < 1e-6);
    }
    let mu = sample_measure(&quad(-2.0), 50, 150, 100, 2).unwrap();
    for a in mu.atoms() {
        let z = a.finite().unwrap();
        assert!(z.im.abs() < 1e-6 && z.re.abs() <= 2.0 + 1e-9, "{z}");
    }
    assert_eq!(mu.len(), 50 * 50);
    assert!((mu.total_weight() - 1.0).abs() < 1e-12);
}

#[test]
fn ball_mass_examples() {
    let mu = sample_measure(&quad(0.0), 500, 600, 100, 3).unwrap();
    for r in sqrt2_radii(1e-3, 0.1).unwrap() {
        let (m, _) = mu.ball_mass(&SphereBall::new(p(1.0, 0.0), r).unwrap());
        assert!(m / r > 1.0 / 20.0 && m / r < 20.0, "r {r} mass {m}");
    }
    assert_eq!(mu.ball_mass(&SphereBall::new(p(0.3, 0.0), 2.0).unwrap()).0, 1.0);
    assert_eq!(mu.ball_mass(&SphereBall::new(p(0.0, 0.0), 0.5).unwrap()).0, 0.0);
}

#[test]
fn ball_masses_match_closed_forms() {
    let mu = sample_measure(&quad(0.0), 1000, 300, 100, 4).unwrap();
    for k in 0..10 {
        let t = 2.0 * PI * k as f64 / 10.0 + 0.1;
        for r in [0.02, 0.05, 0.1] {
            let (m, se) = mu.ball_mass(&SphereBall::new(p(t.cos(), t.sin()), r).unwrap());
            assert!((m - circle_mass(r)).abs() < 3.0 * se + 1e-4, "circle t {t} r {r}: {m} vs {} (se {se})", circle_mass(r));
        }
    }
    let mu = sample_measure(&quad(-2.0), 1000, 300, 100, 5).unwrap();
    for c in [-2.0, -1.7, -0.9, 0.0, 0.4, 1.3, 2.0] {
        for r in [0.02, 0.05, 0.1] {
            let (m, se) = mu.ball_mass(&SphereBall::new(p(c, 0.0), r).unwrap());
            let want = interval_mass(c, r);
            assert!((m - want).abs() < 3.0 * se + 1e-4, "segment c {c} r {r}: {m} vs {want} (se {se})");
        }
    }
}

#[test]
fn doubling_scan_examples() {
    let mu = sample_measure(&quad(0.0), 400, 600, 100, 6).unwrap();
    let est = doubling_scan(&mu, 60, 10, 0.01, 0.2).unwrap();
    assert_eq!(est.verdict, DoublingVerdict::DoublingConsistent);
    assert!(est.c_star_hat >= 1.6 && est.c_star_hat <= 2.5, "{}", est.c_star_hat);

    let mu = sample_measure(&quad(-2.0), 400, 600, 100, 7).unwrap();
    let est = doubling_scan(&mu, 60, 10, 0.01, 0.2).unwrap();
    assert_eq!(est.verdict, DoublingVerdict::DoublingConsistent);
    assert!(est.c_star_hat >= 1.0);
    let prof = mu.radial_profile(p(2.0, 0.0), 0.02);
    let ratio = prof.ball(0.02).mass / prof.ball(0.01).mass;
    assert!((ratio - 2f64.sqrt()).abs() < 0.1, "endpoint ratio {ratio}");
}

#[test]
fn exponent_examples() {
    let mu = sample_measure(&quad(0.0), 500, 600, 100, 8).unwrap();
    let fit = lower_exponent_fit(&mu, 40, 1e-3, 0.1).unwrap();
    assert!((fit.alpha_hat - 1.0).abs() < 0.1, "{}", fit.alpha_hat);
    for e in &fit.per_center {
        assert!((e.slope - 1.0).abs() < 0.1);
    }
    let up = upper_exponent_check(&mu, 40, 1e-3, 0.1).unwrap();
    assert!(up > 0.0 && (up - 1.0).abs() < 0.1, "{up}");

    let mu = sample_measure(&quad(-2.0), 500, 600, 100, 9).unwrap();
    let radii = sqrt2_radii(1e-3, 0.1).unwrap();
    for c in [-2.0, 2.0, 1.995] {
        let e = center_exponent(&mu, p(c, 0.0), &radii).unwrap();
        assert!((e.slope - 0.5).abs() < 0.07, "endpoint {c}: {}", e.slope);
    }
    for c in [-1.0, 0.3, 1.1] {
        let e = center_exponent(&mu, p(c, 0.0), &radii).unwrap();
        assert!((e.slope - 1.0).abs() < 0.1, "interior {c}: {}", e.slope);
    }
    assert!(upper_exponent_check(&mu, 40, 1e-3, 0.1).unwrap() > 0.0);
}

#[test]
fn inverse_doubling_examples() {
    let mu = sample_measure(&quad(0.0), 400, 600, 100, 10).unwrap();
    let rep = inverse_doubling_stats_at(&mu, 2.0, &[p(1.0, 0.0), p(0.0, 1.0), p(-0.6, 0.8)], 0.005, 0.1).unwrap();
    assert!((rep.min_inflation - 2.0).abs() < 0.25, "{}", rep.min_inflation);
    let eta = rep.smallest_eta_doubling_mass.unwrap();
    assert!((1.75..=2.25).contains(&eta), "{eta}");
    let one = inverse_doubling_stats_at(&mu, 1.0, &[p(1.0, 0.0)], 0.005, 0.1).unwrap();
    assert_eq!(one.min_inflation, 1.0);

    let mu = sample_measure(&quad(-2.0), 400, 600, 100, 11).unwrap();
    let rep = inverse_doubling_stats_at(&mu, 2.0, &[p(2.0, 0.0), p(-2.0, 0.0)], 0.002, 0.05).unwrap();
    assert!((rep.min_inflation - 2f64.sqrt()).abs() < 0.15, "{}", rep.min_inflation);
    let eta = rep.smallest_eta_doubling_mass.unwrap();
    assert!((3.5..=5.0).contains(&eta), "{eta}");
}

#[test]
fn jacobian_examples() {
    let f = quad(0.0);
    let mu = sample_measure(&f, 1000, 300, 100, 12).unwrap();
    let t = jacobian_trial(&f, &mu, p(1.0, 0.0), 0.05, 1).unwrap().unwrap();
    assert_eq!(t.components.len(), 2);
    let total: f64 = t.components.iter().map(|c| c.mass).sum();
    for c in &t.components {
        assert_eq!(c.degree, 1);
        assert!((c.mass / t.ball_mass - 0.5).abs() < 0.05);
        assert!(c.seed.finite().unwrap().re.abs() > 0.9);
    }
    assert!((total / t.ball_mass - 1.0).abs() < 0.05);

    let f = quad(-2.0);
    let mu = sample_measure(&f, 1000, 300, 100, 13).unwrap();
    let t = jacobian_trial(&f, &mu, p(2.0, 0.0), 0.05, 1).unwrap().unwrap();
    let near = t.components.iter().find(|c| chordal_distance(c.seed, p(2.0, 0.0)) < 0.05).unwrap();
    assert_eq!(near.degree, 1);
    assert!((near.mass / t.ball_mass - 0.5).abs() < 0.05, "{}", near.mass / t.ball_mass);
}

#[test]
fn measure_is_invariant_on_the_corpus() {
    for entry in shipped_corpus() {
        let f = &entry.map;
        let mu = sample_measure(f, 200, 600, 100, 14).unwrap();
        let images: Vec<SpherePoint> = mu.atoms().iter().map(|&a| f.eval(a)).collect();
        let mut rng = stream_rng(14, 0xB411);
        for _ in 0..50 {
            let c = mu.atoms()[rng.gen_range(0..mu.len())];
            let b = SphereBall::new(c, rng.gen_range(0.05..0.3)).unwrap();
            let (m, se) = mu.ball_mass(&b);
            let pre = images.iter().filter(|&&y| b.contains(y)).count() as f64 / mu.len() as f64;
            assert!((pre - m).abs() < 3.0 * se * 2f64.sqrt() + 1e-9, "{}: ball {b:?} pre {pre} mass {m} se {se}", f.name());
        }
    }
}
