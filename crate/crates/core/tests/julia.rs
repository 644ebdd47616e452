use maxent_lab::julia::{
    boundary_porosity_curve, carrot_probe, carrot_probe_at, green_function, julia_approximation, porosity_curve, targets_near_neutral,
    uniform_perfectness, JuliaApproximation, PorosityVerdict,
};
use maxent_lab::registry::shipped_corpus;
use maxent_lab::rng::stream_rng;
use maxent_lab::{chordal_distance, RationalMap, SpherePoint};
use num_complex::Complex64;
use rand::Rng;

const RES: f64 = 1.0 / 200.0;
const RADII: [f64; 4] = [0.02, 0.04, 0.07, 0.1];

fn quad(re: f64, im: f64) -> RationalMap {
    RationalMap::unicritical(format!("q{re}{im:+}"), 2, Complex64::new(re, im)).unwrap()
}

fn approx(f: &RationalMap) -> JuliaApproximation {
    julia_approximation(f, RES, 40_000, 1).unwrap()
}

fn fine(f: &RationalMap) -> JuliaApproximation {
    julia_approximation(f, 1.0 / 400.0, 200_000, 1).unwrap()
}

fn occupied(j: &JuliaApproximation) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..j.ny).flat_map(move |b| (0..j.nx).map(move |a| (a, b))).filter(|&(a, b)| j.is_occupied(a, b))
}

#[test]
fn clouds_hug_the_julia_sets() {
    let j = approx(&quad(0.0, 0.0));
    for (a, b) in occupied(&j) {
        assert!((j.cell_center(a, b).norm() - 1.0).abs() <= 2.0 * RES * 2f64.sqrt(), "{a} {b}");
    }
    let j = approx(&quad(-2.0, 0.0));
    assert!(j.occupied_cells() > 0);
    for (a, b) in occupied(&j) {
        let z = j.cell_center(a, b);
        assert!(z.im.abs() <= 2.0 * RES && z.re.abs() <= 2.0 + 2.0 * RES, "{z}");
    }
}

#[test]
fn basilica_cloud_is_symmetric() {
    let j = approx(&quad(-1.0, 0.0));
    let (mut total, mut matched) = (0, 0);
    for (a, b) in occupied(&j) {
        total += 1;
        let Some((i, k)) = j.cell_of(-j.cell_center(a, b)) else { continue };
        let hit = (i.saturating_sub(1)..=(i + 1).min(j.nx - 1))
            .any(|x| (k.saturating_sub(1)..=(k + 1).min(j.ny - 1)).any(|y| j.is_occupied(x, y)));
        matched += hit as usize;
    }
    assert!(matched as f64 >= 0.99 * total as f64, "{matched}/{total}");
}

#[test]
fn porosity_examples() {
    let j = fine(&quad(0.0, 0.0));
    let est = porosity_curve(&j, 60, &[0.01, 0.02, 0.04, 0.07, 0.1], 2).unwrap();
    assert!(est.xi_hat.iter().all(|&x| x >= 0.3), "{:?}", est.xi_hat);
    assert_eq!(est.verdict, PorosityVerdict::PorousConsistent);
    // the segment straddles two cell rows, so the bound needs r >= 8 cells
    let j = fine(&quad(-2.0, 0.0));
    let est = porosity_curve(&j, 60, &[0.02, 0.04, 0.07, 0.1], 2).unwrap();
    assert!(est.xi_hat.iter().all(|&x| x >= 0.3), "{:?}", est.xi_hat);
    assert_eq!(est.verdict, PorosityVerdict::PorousConsistent);
    let j = approx(&quad(0.0, 1.0));
    let est = porosity_curve(&j, 60, &RADII, 2).unwrap();
    assert!(est.witness_xi > 0.0);
    assert_eq!(est.verdict, PorosityVerdict::PorousConsistent);
}

#[test]
fn boundary_porosity_examples() {
    let f = quad(0.0, 0.0);
    let j = approx(&f);
    let est = boundary_porosity_curve(&f, &j, 60, &RADII, 3).unwrap();
    assert!(est.xi_hat.iter().all(|&x| x >= 0.2), "{:?}", est.xi_hat);
    for (a, b) in (0..j.ny).flat_map(|b| (0..j.nx).map(move |a| (a, b))) {
        if j.is_filled(a, b) {
            assert!(j.cell_center(a, b).norm() <= 1.0 + 2.0 * RES);
        }
    }

    let f = quad(-2.0, 0.0);
    let j = approx(&f);
    let open = porosity_curve(&j, 60, &RADII, 3).unwrap();
    let filled = boundary_porosity_curve(&f, &j, 60, &RADII, 3).unwrap();
    assert_eq!(open.xi_hat, filled.xi_hat);

    let f = quad(-1.0, 0.0);
    let j = approx(&f);
    let est = boundary_porosity_curve(&f, &j, 60, &RADII, 3).unwrap();
    assert!(est.witness_xi > 0.0);
}

#[test]
fn uniform_perfectness_examples() {
    for c in [0.0, -2.0] {
        let j = approx(&quad(c, 0.0));
        let up = uniform_perfectness(&j, 60, &RADII).unwrap();
        assert!(up.eta_hat <= 1.5, "{c}: {}", up.eta_hat);
    }
    for entry in shipped_corpus() {
        let j = julia_approximation(&entry.map, RES, 20_000, 1).unwrap();
        let up = uniform_perfectness(&j, 30, &RADII).unwrap();
        assert!(up.eta_hat.is_finite(), "{}", entry.map.name());
    }
}

#[test]
fn green_examples() {
    let f = quad(0.0, 0.0);
    assert!((green_function(&f, SpherePoint::new(2.0, 0.0)).unwrap() - 2f64.ln()).abs() < 1e-12);
    assert!(green_function(&f, SpherePoint::new(0.0, 1.0)).unwrap().abs() < 1e-12);
    let want = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    assert!((green_function(&quad(-2.0, 0.0), SpherePoint::new(3.0, 0.0)).unwrap() - want).abs() < 1e-12);
}

#[test]
fn green_functional_equation() {
    let mut rng = stream_rng(5, 0);
    for f in [quad(0.0, 0.0), quad(-1.0, 0.0), quad(0.0, 1.0), quad(0.25, 0.0)] {
        let mut tested = 0;
        while tested < 100 {
            let z = SpherePoint::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let g = green_function(&f, z).unwrap();
            if g <= 1e-6 {
                continue;
            }
            let gf = green_function(&f, f.eval(z)).unwrap();
            assert!((gf - 2.0 * g).abs() < 1e-8, "{}: {z} {g} {gf}", f.name());
            tested += 1;
        }
    }
}

#[test]
fn distance_field_is_a_lower_bound() {
    let j = approx(&quad(-1.0, 0.0));
    let mut rng = stream_rng(6, 0);
    for _ in 0..1000 {
        let (a, b) = (rng.gen_range(0..j.nx), rng.gen_range(0..j.ny));
        let exact = j.nearest_distance(SpherePoint::Finite(j.cell_center(a, b)));
        assert!(j.distance_field(a, b) <= exact + 1e-12, "{a} {b}");
    }
}

#[test]
fn carrot_examples() {
    let f = quad(0.0, 0.0);
    let j = approx(&f);
    let probe = carrot_probe(&f, &j, 10, 7).unwrap();
    assert!(probe.c_hat >= 0.5, "{}", probe.c_hat);

    let f = quad(-1.0, 0.0);
    let j = approx(&f);
    let probe = carrot_probe(&f, &j, 10, 7).unwrap();
    assert!(probe.c_hat > 0.0);
    for path in &probe.paths {
        for &p in &path[..path.len() - 1] {
            let z = p.finite().unwrap();
            assert!(j.distance_lower(z) > 0.0 || j.cell_of(z).is_none(), "{z}");
        }
    }

    let f = quad(0.25, 0.0);
    let j = approx(&f);
    let distances: Vec<f64> = (0..6).map(|k| 0.2 * 0.6f64.powi(k)).collect();
    let targets = targets_near_neutral(&f, &j, &distances).unwrap();
    assert_eq!(targets.len(), distances.len());
    let half = SpherePoint::new(0.5, 0.0);
    assert!(targets.windows(2).all(|w| chordal_distance(w[1], half) < chordal_distance(w[0], half)));
    let probe = carrot_probe_at(&f, &j, &targets).unwrap();
    let first = probe.constants[0];
    let last = *probe.constants.last().unwrap();
    assert!(last < first, "{:?}", probe.constants);
}

#[test]
fn carrot_constants_are_symmetric() {
    let f = quad(-1.0, 0.0);
    let j = approx(&f);
    let pool: Vec<SpherePoint> = j.sampled_points().iter().step_by(997).take(6).cloned().collect();
    let mirrored: Vec<SpherePoint> = pool.iter().map(|p| SpherePoint::Finite(-p.finite().unwrap())).collect();
    let a = carrot_probe_at(&f, &j, &pool).unwrap();
    let b = carrot_probe_at(&f, &j, &mirrored).unwrap();
    for (x, y) in a.constants.iter().zip(&b.constants) {
        assert!((x - y).abs() < 0.1 * x.max(*y) + 0.02, "{x} {y}");
    }
}
