//! Acceptance criteria, one PASS/FAIL line each.

mod common;

use std::f64::consts::{LN_2, PI};
use std::fs;
use std::time::{Duration, Instant};

use common::{quick_config, tree};
use maxent_lab::config::{LabConfig, OutputFormat};
use maxent_lab::julia::{carrot_probe, carrot_probe_at, julia_approximation, targets_near_neutral};
use maxent_lab::lab::{neutral_target_distances, run_corpus, run_subcommand, SUBCOMMANDS};
use maxent_lab::measure::{sample_measure, EmpiricalMeasure};
use maxent_lab::periodic::{chi_per, periodic_points, uhp_check, OrbitClass};
use maxent_lab::pullback::{expshrink_decay, jacobian_consistency, pullback_chain, semihyperbolicity_scan, DegreeVerdict, DEFAULT_RESOLUTION};
use maxent_lab::report::CARROT_FLOOR;
use maxent_lab::rng::stream_rng;
use maxent_lab::scaling::{center_exponent, lower_exponent_fit, sqrt2_radii};
use maxent_lab::{chordal_distance, LabError, RationalMap, SphereBall, SpherePoint};
use num_complex::Complex64;
use rand::Rng;
use serde_json::Value;

type Outcome = Result<(bool, String), String>;

fn quad(re: f64, im: f64) -> RationalMap {
    let name = match (re, im) {
        (0.0, 0.0) => "z2".to_string(),
        (0.0, _) => "z2+i".to_string(),
        (0.25, _) => "z2+1/4".to_string(),
        _ => format!("z2{re:+}"),
    };
    RationalMap::unicritical(name, 2, Complex64::new(re, im)).unwrap()
}

fn p(re: f64, im: f64) -> SpherePoint {
    SpherePoint::new(re, im)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
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

/// Counts balls whose estimate lies within three bootstrap errors of `want`.
fn balls_within(mu: &EmpiricalMeasure, centers: &[SpherePoint], radii: &[f64], want: impl Fn(SpherePoint, f64) -> f64) -> (usize, usize, String) {
    let (mut ok, mut total, mut worst) = (0, 0, (0.0, String::new()));
    for &c in centers {
        for &r in radii {
            let (m, se) = mu.ball_mass(&SphereBall::new(c, r).unwrap());
            let z = (m - want(c, r)).abs() / se.max(1e-300);
            total += 1;
            ok += (z <= 3.0) as usize;
            if z > worst.0 {
                worst = (z, format!("{c} r {r:.3}"));
            }
        }
    }
    (ok, total, format!("worst {:.2} se at {}", worst.0, worst.1))
}

fn measure_circle() -> Outcome {
    let t = Instant::now();
    let mu = sample_measure(&quad(0.0, 0.0), 100, 1100, 100, 1).map_err(err)?;
    let mut u: Vec<f64> = mu.atoms().iter().map(|a| a.finite().unwrap().arg().rem_euclid(2.0 * PI) / (2.0 * PI)).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let ks = u.iter().enumerate().map(|(k, &x)| (x - k as f64 / n).abs().max(((k + 1) as f64 / n - x).abs())).fold(0.0, f64::max);
    let centers: Vec<SpherePoint> = (0..20).map(|k| SpherePoint::from_complex(Complex64::from_polar(1.0, 0.1 + 2.0 * PI * k as f64 / 20.0))).collect();
    let radii = [0.01, 0.0178, 0.0316, 0.0562, 0.1];
    let (ok, total, worst) = balls_within(&mu, &centers, &radii, |_, r| 2.0 * (r / 2.0).asin() / PI);
    let secs = t.elapsed().as_secs_f64();
    let pass = u.len() == 100_000 && ks < 0.02 && ok == total && secs < 30.0;
    Ok((pass, format!("{} atoms, KS {ks:.4}, {ok}/{total} balls within 3 se ({worst}), {secs:.1} s", u.len())))
}

fn measure_segment() -> Outcome {
    let t = Instant::now();
    let mu = sample_measure(&quad(-2.0, 0.0), 1000, 1100, 100, 2).map_err(err)?;
    let mut centers = vec![p(-2.0, 0.0), p(2.0, 0.0)];
    centers.extend((0..18).map(|k| p(-1.9 + 3.8 * (k as f64 + 0.5) / 18.0, 0.0)));
    let radii = [0.01, 0.0178, 0.0316, 0.0562, 0.1];
    let (ok, total, worst) = balls_within(&mu, &centers, &radii, |c, r| interval_mass(c.finite().unwrap().re, r));
    let fit = sqrt2_radii(1e-3, 0.1).map_err(err)?;
    let slope = |c: f64| center_exponent(&mu, p(c, 0.0), &fit).map(|e| e.slope).unwrap_or(f64::NAN);
    let ends = [slope(-2.0), slope(2.0)];
    let inner = [slope(-1.0), slope(0.3), slope(1.1)];
    let secs = t.elapsed().as_secs_f64();
    let pass = ok == total
        && ends.iter().all(|s| (s - 0.5).abs() <= 0.07)
        && inner.iter().all(|s| (s - 1.0).abs() <= 0.1)
        && secs < 60.0;
    Ok((pass, format!("{ok}/{total} balls within 3 se ({worst}), endpoint slopes {ends:.3?}, interior {inner:.3?}, {secs:.1} s")))
}

fn jacobian() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (f, seed) in [(quad(0.0, 0.0), 3), (quad(-2.0, 0.0), 4)] {
        let mu = sample_measure(&f, 1000, 1100, 100, seed).map_err(err)?;
        let rep = jacobian_consistency(&f, &mu, 50, seed).map_err(err)?;
        pass &= rep.trials.len() == 50 && rep.max_deviation < 0.1;
        parts.push(format!("{}: {} trials, max deviation {:.4}", f.name(), rep.trials.len(), rep.max_deviation));
    }
    Ok((pass, parts.join("; ")))
}

fn chi_exact() -> Outcome {
    let t = Instant::now();
    let a = chi_per(&quad(0.0, 0.0), 10).map_err(err)?.chi_per_hat;
    let b = chi_per(&quad(-2.0, 0.0), 10).map_err(err)?.chi_per_hat;
    let secs = t.elapsed().as_secs_f64();
    let pass = (a - LN_2).abs() < 1e-9 && (b - LN_2).abs() < 1e-6 && secs < 60.0;
    Ok((pass, format!("z2 err {:.1e}, z2-2 err {:.1e}, {secs:.1} s", (a - LN_2).abs(), (b - LN_2).abs())))
}

fn optimal_alpha() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (f, seed) in [(quad(0.0, 0.0), 5), (quad(-2.0, 0.0), 6)] {
        let mu = sample_measure(&f, 1000, 1100, 100, seed).map_err(err)?;
        let alpha = lower_exponent_fit(&mu, 40, 1e-3, 0.1).map_err(err)?.alpha_hat;
        let target = (f.degree() as f64).ln() / chi_per(&f, 10).map_err(err)?.chi_per_hat;
        pass &= (alpha - target).abs() < 0.1;
        parts.push(format!("{}: fit {alpha:.4} vs {target:.4}", f.name()));
    }
    Ok((pass, parts.join("; ")))
}

fn parabolic() -> Outcome {
    let f = quad(0.25, 0.0);
    let fixed = periodic_points(&f, 1).map_err(err)?;
    let half = fixed.iter().find(|o| chordal_distance(o.points[0], p(0.5, 0.0)) < 1e-6).ok_or("no fixed point at 1/2")?;
    let d1 = (half.multiplier - Complex64::new(1.0, 0.0)).norm();
    let two = periodic_points(&f, 2).map_err(err)?;
    let d2 = two.iter().map(|o| (o.multiplier - Complex64::new(5.0, 0.0)).norm()).fold(f64::INFINITY, f64::min);
    let est = chi_per(&f, 12).map_err(err)?;
    let lowest = est.per_period_min.range(3..).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
    // min chi at periods up to 12 is 0.4094 > ln 1.5; period 13 is the first to break the bound
    let (uhp12, _) = uhp_check(&f, 12, 1.5).map_err(err)?;
    let (uhp, worst) = uhp_check(&f, 13, 1.5).map_err(err)?;
    let worst_chi = worst.chi;
    let pass = half.classification == OrbitClass::Neutral && d1 < 1e-8 && d2 < 1e-8 && lowest < 5f64.ln() / 2.0 && !uhp;
    Ok((
        pass,
        format!(
            "|m1 - 1| {d1:.1e}, |m2 - 5| {d2:.1e}, min chi {lowest:.4} < {:.4}; UHP at 1.5 holds to cap 12: {uhp12}, to cap 13: {uhp} (period {} chi {worst_chi:.4} < {:.4})",
            5f64.ln() / 2.0,
            worst.period,
            1.5f64.ln()
        ),
    ))
}

fn semilocal() -> Outcome {
    let f = quad(0.0, 0.0);
    let mu = sample_measure(&f, 20, 120, 100, 7).map_err(err)?;
    let mut rng = stream_rng(7, 1);
    let mut good = 0;
    for _ in 0..100 {
        let x = mu.atoms()[rng.gen_range(0..mu.len())];
        let c = pullback_chain(&f, x, 0.05, rng.gen_range(1..=10), DEFAULT_RESOLUTION).map_err(err)?;
        good += (!c.degree_uncertain() && c.total_degree == 1 && c.preimage_degree == Some(1)) as usize;
    }
    let s = semihyperbolicity_scan(&quad(0.0, 1.0), 0.01, 12, 6, 7).map_err(err)?;
    let max = s.max_degree_per_m.iter().copied().max().unwrap_or(0);
    let pass = good == 100 && max == 2 && s.verdict == DegreeVerdict::Bounded;
    Ok((pass, format!("z2 {good}/100 chains of degree 1 with agreeing counts; z2+i max degree {max}, {}", s.verdict.as_str())))
}

fn expshrink() -> Outcome {
    let t = Instant::now();
    let sq = expshrink_decay(&quad(0.0, 0.0), 20, 0.1, 20, 8).map_err(err)?.lambda_hat;
    let f = quad(0.25, 0.0);
    let mut lam = Vec::new();
    for m in [10, 20, 30] {
        lam.push(expshrink_decay(&f, 20, 0.05, m, 8).map_err(err)?.lambda_hat);
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = (sq - 2.0).abs() <= 0.2 && lam.windows(2).all(|w| w[1] < w[0]) && lam.iter().all(|&l| l >= 1.0) && secs < 300.0;
    Ok((pass, format!("z2 lambda {sq:.4}; z2+1/4 lambda at m_max 10/20/30 {lam:.4?}, {secs:.1} s")))
}

fn doubling() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["z2", "z2-2", "z2-1", "z2+i", "z2+1/4"] {
        let cfg = LabConfig { map: name.into(), out: dir.path().to_path_buf(), ..LabConfig::default() };
        run_subcommand("doubling", &cfg, false).map_err(err)?;
        let slug = maxent_lab::lab::slug(name);
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(slug).join("doubling.json")).map_err(err)?).map_err(err)?;
        let verdict = v["result"]["verdict"].as_str().unwrap_or("").to_string();
        let atoms = v["params"]["atoms"].as_u64().unwrap_or(0);
        pass &= atoms == 1_000_000;
        if name == "z2+1/4" {
            let near_half = v["result"]["growth_witnesses"].as_array().into_iter().flatten().any(|w| {
                let c = &w["center"]["Finite"];
                chordal_distance(p(c[0].as_f64().unwrap_or(9.0), c[1].as_f64().unwrap_or(9.0)), p(0.5, 0.0)) < 0.05
            });
            pass &= verdict == "violated" || (verdict == "inconclusive" && near_half);
            parts.push(format!("{name} {verdict} (witness near 1/2: {near_half})"));
        } else {
            pass &= verdict == "doubling-consistent";
            parts.push(format!("{name} {verdict}"));
        }
    }
    Ok((pass, parts.join(", ")))
}

fn john() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for f in [quad(0.0, 0.0), quad(-1.0, 0.0)] {
        let j = julia_approximation(&f, 1.0 / 400.0, 200_000, 9).map_err(err)?;
        let a = carrot_probe(&f, &j, 20, 9).map_err(err)?.c_hat;
        let b = carrot_probe(&f, &j, 40, 9).map_err(err)?.c_hat;
        pass &= a >= CARROT_FLOOR && b >= CARROT_FLOOR && b >= 0.5 * a;
        parts.push(format!("{} C_hat {a:.3} (20 targets) {b:.3} (40)", f.name()));
    }
    let f = quad(0.25, 0.0);
    let j = julia_approximation(&f, 1.0 / 400.0, 200_000, 9).map_err(err)?;
    let targets = targets_near_neutral(&f, &j, &neutral_target_distances()).map_err(err)?;
    let c = carrot_probe_at(&f, &j, &targets).map_err(err)?.constants;
    let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
    let monotone = c.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let fall = c.first().copied().unwrap_or(0.0) / min;
    pass &= targets.len() == neutral_target_distances().len() && monotone && fall >= 5.0;
    parts.push(format!("z2+1/4 constants fall by {fall:.1}x over {} targets (monotone: {monotone})", c.len()));
    Ok((pass, parts.join("; ")))
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    let reg = a.path().join("registry.json");
    fs::write(&reg, common::SMALL_REGISTRY.replace(r#"{"name": "1/z-z""#, r#"{"name": "z2+1/4", "numerator": [[0.25, 0], [0, 0], [1, 0]], "denominator": [[1, 0]]},
  {"name": "1/z-z""#))
    .map_err(err)?;
    for out in [a.path().join("run"), b.path().join("run")] {
        for map in ["z2+1/4", "1/z-z"] {
            let cfg = LabConfig { map: map.into(), registry: Some(reg.clone()), format: OutputFormat::Csv, ..quick_config(&out) };
            for sub in SUBCOMMANDS.iter().filter(|s| **s != "corpus") {
                match run_subcommand(sub, &cfg, false) {
                    // the carrot probe is defined for polynomial basins only
                    Err(LabError::InvalidInput(_)) if *sub == "carrot" && map == "1/z-z" => {}
                    other => {
                        other.map_err(err)?;
                    }
                }
            }
            run_subcommand("classify", &cfg, true).map_err(err)?;
        }
        let cfg = LabConfig { registry: Some(reg.clone()), ..quick_config(&out.join("corpus")) };
        run_subcommand("corpus", &cfg, false).map_err(err)?;
    }
    let (ta, tb) = (tree(&a.path().join("run")), tree(&b.path().join("run")));
    let differing: Vec<&String> = ta.keys().filter(|k| tb.get(*k) != ta.get(*k)).collect();
    let pass = ta.len() == tb.len() && differing.is_empty();
    Ok((pass, format!("{} artifacts compared, {} differ {:?}", ta.len(), differing.len(), differing)))
}

fn corpus() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = LabConfig { out: dir.path().to_path_buf(), ..LabConfig::default() };
    let t = Instant::now();
    let reports = run_corpus(&cfg, false, &mut std::io::sink()).map_err(err)?;
    let elapsed = t.elapsed();
    let total: usize = reports.iter().map(|r| r.contradictions).sum();
    let pass = reports.len() == 6 && total == 0 && elapsed < Duration::from_secs(20 * 60);
    Ok((pass, format!("{} maps, {total} contradictions, {:.1} min", reports.len(), elapsed.as_secs_f64() / 60.0)))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("measure oracle z2", measure_circle),
        ("measure oracle z2-2", measure_segment),
        ("jacobian identity", jacobian),
        ("chi_per exactness", chi_exact),
        ("optimal alpha", optimal_alpha),
        ("parabolic signature", parabolic),
        ("semi-local degree oracle", semilocal),
        ("ExpShrink contrast", expshrink),
        ("doubling contrast", doubling),
        ("John contrast", john),
        ("determinism", determinism),
        ("full corpus classify", corpus),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != k + 1) {
            continue;
        }
        let (pass, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("{} {:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, k + 1);
        failed += (!pass) as usize;
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
