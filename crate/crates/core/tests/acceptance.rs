//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any line fails.

use std::f64::consts::TAU;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phinormal::exprparse::parse;
use phinormal::mapfn::{Disc, HarmonicMap};
use phinormal::normality::{classical_normal_sup, classify_normality, sup_ratio, EvidenceKind};
use phinormal::phi::{reciprocal_convexity_check, PhiWeight};
use phinormal::rescale::{extract_sequence, rescaled_spherical};
use phinormal::roots::{boundary_degree, exceptional_value_scan, find_preimages, Cell, Multiplicity, ScanMode};

const C1_SUP_TOL: f64 = 1e-6;
const C1_ARGMAX_TOL: f64 = 1e-3;
const C1_BUDGET: Duration = Duration::from_secs(10);
const C2_LOWER_SLACK: f64 = 0.99;
const C2_EXPONENT: f64 = 0.5;
const C2_EXPONENT_TOL: f64 = 0.1;
const C2_BUDGET: Duration = Duration::from_secs(60);
const C3_SLACK: f64 = 0.99;
const C4_REL_TOL: f64 = 1e-9;
const C5_AFFINE_TOL: f64 = 1e-8;
const C5_CUBE_TOL: f64 = 1e-6;
const C5_BUDGET: Duration = Duration::from_secs(5);
const C6_CANDIDATES: usize = 100;
const C7_EXPRESSIONS: usize = 50;
const C7_POINTS: usize = 20;
const C7_REL_TOL: f64 = 1e-6;
const C7_SINGULAR_EXCLUSION: f64 = 1e-2;
const C8_DEGREE_CASES: usize = 500;
const C8_MAPS: usize = 10;
const C8_SAMPLES: usize = 10_000;
const C8_AFFINE_REL_TOL: f64 = 1e-10;
const C8_RATIO_PAIRS: usize = 1_000;

const DEPTH: usize = 8;
const WITNESS_H: &str = "exp(i/(1-z))";

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn map(h: &str, g: &str) -> HarmonicMap {
    HarmonicMap::from_sources(h, g).expect("map builds")
}

fn witness_schedule() -> Vec<f64> {
    (1..=4).map(|n| 1.0 - 10f64.powi(-n)).collect()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(start: Instant, budget: Duration, detail: String) -> Outcome {
    let took = start.elapsed();
    check(took < budget, format!("{detail}; {:.2}s of {}s", took.as_secs_f64(), budget.as_secs()))
}

fn identity_map_sup() -> Outcome {
    // dense polar oracle of (1 - r^2) / (1 + r^2)
    let (nr, nt, limit) = (2048usize, 512usize, 0.999);
    let mut oracle = (f64::NEG_INFINITY, c(1.0, 1.0));
    for i in 0..nr {
        let r = limit * i as f64 / (nr - 1) as f64;
        for j in 0..nt {
            let z = Complex64::from_polar(r, TAU * j as f64 / nt as f64);
            let v = (1.0 - r * r) / (1.0 + z.norm_sqr());
            if v > oracle.0 {
                oracle = (v, z);
            }
        }
    }
    let start = Instant::now();
    let est = sup_ratio(&map("z", "0"), &PhiWeight::Classical, 0.999, DEPTH).map_err(|e| e.to_string())?;
    let detail = format!(
        "sup {:.9} (oracle {:.9}), argmax |{:.2e}|",
        est.value,
        oracle.0,
        est.argmax.norm()
    );
    if (est.value - oracle.0).abs() > C1_SUP_TOL || (est.argmax - oracle.1).norm() > C1_ARGMAX_TOL {
        return Err(detail);
    }
    within_budget(start, C1_BUDGET, detail)
}

fn witness_growth() -> Outcome {
    let m = map(WITNESS_H, "0");
    let w = PhiWeight::inv_pow(1.5).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for r in witness_schedule() {
        let oracle = (1.0 - r).powf(-0.5) / 2.0;
        let est = sup_ratio(&m, &w, r, DEPTH).map_err(|e| e.to_string())?;
        let good = est.value >= oracle * C2_LOWER_SLACK;
        ok &= good;
        parts.push(format!("r={r}: {:.4} vs {:.4}{}", est.value, oracle, if good { "" } else { " LOW" }));
    }
    let verdict = classify_normality(&m, &w, &witness_schedule(), DEPTH).map_err(|e| e.to_string())?;
    let exponent = verdict.growth_exponent.unwrap_or(f64::NAN);
    ok &= verdict.kind == EvidenceKind::GrowthEvidence;
    ok &= (exponent - C2_EXPONENT).abs() <= C2_EXPONENT_TOL;
    let detail = format!("{}; {:?}, exponent {:.4}", parts.join(", "), verdict.kind, exponent);
    if !ok {
        return Err(detail);
    }
    within_budget(start, C2_BUDGET, detail)
}

fn witness_classical() -> Outcome {
    let r = 0.999;
    let oracle = (1.0 + r) / (2.0 * (1.0 - r));
    let est = classical_normal_sup(&map(WITNESS_H, "0"), r, DEPTH).map_err(|e| e.to_string())?;
    check(est.value >= oracle * C3_SLACK, format!("sup {:.3} vs oracle {:.3}", est.value, oracle))
}

fn rescaling_identity() -> Outcome {
    let m = map(WITNESS_H, "0");
    let w = PhiWeight::inv_pow(1.5).map_err(|e| e.to_string())?;
    let seq = extract_sequence(&m, &w, &witness_schedule(), DEPTH).map_err(|e| e.to_string())?;
    if seq.entries.is_empty() {
        return Err("no entries extracted".into());
    }
    let mut worst = 0.0f64;
    for entry in &seq.entries {
        let v = rescaled_spherical(&m, &w, entry, c(0.0, 0.0)).map_err(|e| e.to_string())?;
        worst = worst.max((v - 1.0).abs());
    }
    check(worst <= C4_REL_TOL, format!("{} entries, max |g#(0) - 1| = {worst:.2e}", seq.entries.len()))
}

fn preimage_suite() -> Outcome {
    let mut lines = Vec::new();

    let start = Instant::now();
    let set = find_preimages(&map("z", "0.5*z"), c(1.0, 0.0), &Disc::centered(1.0), 1e-10).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let ok_a = set.roots.len() == 1
        && (set.roots[0].location - c(2.0 / 3.0, 0.0)).norm() <= C5_AFFINE_TOL
        && set.roots[0].multiplicity == Multiplicity::One
        && t < C5_BUDGET;
    lines.push(format!("(a) {} root(s) in {:.3}s", set.roots.len(), t.as_secs_f64()));

    let start = Instant::now();
    let set = find_preimages(&map("z^3", "0"), c(1.0, 0.0), &Disc::centered(2.0), 1e-10).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let matched = (0..3).all(|k| {
        let w = Complex64::from_polar(1.0, TAU * k as f64 / 3.0);
        set.roots.iter().filter(|r| (r.location - w).norm() <= C5_CUBE_TOL).count() == 1
    });
    let ok_b = set.roots.len() == 3 && matched && set.region_degree == Some(3) && t < C5_BUDGET;
    lines.push(format!(
        "(b) {} root(s), degree {:?} in {:.3}s",
        set.roots.len(),
        set.region_degree,
        t.as_secs_f64()
    ));

    let start = Instant::now();
    let set = find_preimages(&map("z^2", "0"), c(0.0, 0.0), &Disc::centered(1.0), 1e-10).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let ok_c = set.roots.len() == 1
        && set.roots[0].local_degree == Some(2)
        && set.roots[0].multiplicity == Multiplicity::Two
        && t < C5_BUDGET;
    lines.push(format!(
        "(c) {} root(s), local degree {:?} in {:.3}s",
        set.roots.len(),
        set.roots.first().and_then(|r| r.local_degree),
        t.as_secs_f64()
    ));

    check(ok_a && ok_b && ok_c, lines.join("; "))
}

fn random_in_disc(rng: &mut ChaCha8Rng, radius: f64) -> Complex64 {
    let r = radius * rng.gen::<f64>().sqrt();
    Complex64::from_polar(r, rng.gen_range(0.0..TAU))
}

fn exceptional_values() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut candidates = vec![c(0.0, 0.0)];
    candidates.extend((0..C6_CANDIDATES).map(|_| random_in_disc(&mut rng, 3.0)));
    let region = Disc::centered(1.0);
    let mut lines = Vec::new();
    let mut ok = true;
    for (h, mode) in [("z^2", ScanMode::AllMultiple), ("z^3", ScanMode::AllAtleast3)] {
        let rep = exceptional_value_scan(&map(h, "0"), &candidates, &region, mode).map_err(|e| e.to_string())?;
        ok &= rep.hits == vec![c(0.0, 0.0)] && rep.count <= rep.bound && rep.excluded.is_empty();
        lines.push(format!("{h}: hits {:?}, bound {}, excluded {}", rep.hits, rep.bound, rep.excluded.len()));
    }
    check(ok, lines.join("; "))
}

fn random_constant(rng: &mut ChaCha8Rng) -> String {
    let re = (rng.gen_range(-1.0..1.0f64) * 100.0).round() / 100.0;
    let im = (rng.gen_range(-1.0..1.0f64) * 100.0).round() / 100.0;
    format!("({re}+{im}*i)")
}

fn random_polynomial(rng: &mut ChaCha8Rng) -> String {
    let deg = rng.gen_range(1..=3);
    let mut terms = vec![random_constant(rng)];
    for k in 1..=deg {
        terms.push(format!("{}*z^{k}", random_constant(rng)));
    }
    format!("({})", terms.join("+"))
}

/// Random tree over the expression grammar. `nest` bounds how many
/// `exp`/`sin`/`cos` calls may stack so magnitudes stay in range.
fn random_expression(rng: &mut ChaCha8Rng, depth: u32, nest: u32) -> String {
    if depth == 0 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..3) {
            0 => "z".into(),
            1 => random_constant(rng),
            _ => format!("{}*z", random_constant(rng)),
        };
    }
    let sub = |rng: &mut ChaCha8Rng, nest: u32| random_expression(rng, depth - 1, nest);
    let pick = if nest == 0 { rng.gen_range(0..5) } else { rng.gen_range(0..9) };
    match pick {
        0 => format!("({}+{})", sub(rng, nest), sub(rng, nest)),
        1 => format!("({}-{})", sub(rng, nest), sub(rng, nest)),
        2 => format!("({}*{})", sub(rng, nest), sub(rng, nest)),
        3 => format!("({}/{})", sub(rng, nest), random_polynomial(rng)),
        4 => format!("({})^{}", sub(rng, nest), rng.gen_range(0..=3)),
        5 => format!("exp({})", sub(rng, nest - 1)),
        6 => format!("sin({})", sub(rng, nest - 1)),
        7 => format!("cos({})", sub(rng, nest - 1)),
        _ => format!("-{}", sub(rng, nest)),
    }
}

/// Ridders' extrapolation of a difference quotient `q(h)` toward `h = 0`,
/// stopping once the tableau error estimate stops improving.
fn ridders(q: &dyn Fn(f64) -> Option<Complex64>, h0: f64) -> Option<(Complex64, f64)> {
    const SHRINK: f64 = 1.4;
    const ROWS: usize = 12;
    let mut table = vec![vec![Complex64::new(0.0, 0.0); ROWS]; ROWS];
    let mut h = h0;
    table[0][0] = loop {
        match q(h) {
            Some(v) => break v,
            None if h > 1e-8 => h /= 8.0,
            None => return None,
        }
    };
    let (mut best, mut err) = (table[0][0], f64::INFINITY);
    for i in 1..ROWS {
        h /= SHRINK;
        let Some(v) = q(h) else { break };
        table[0][i] = v;
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let e = (table[j][i] - table[j - 1][i]).norm().max((table[j][i] - table[j - 1][i - 1]).norm());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).norm() >= 2.0 * err {
            break;
        }
    }
    err.is_finite().then_some((best, err))
}

/// First and second derivatives along the real direction by extrapolated
/// central differences, keeping the start step with the smallest error.
fn finite_differences(f: &dyn Fn(Complex64) -> Option<Complex64>, z: Complex64, h0: f64) -> Option<(Complex64, Complex64)> {
    let f0 = f(z)?;
    let best = |q: &dyn Fn(f64) -> Option<Complex64>| {
        (0..5)
            .filter_map(|k| ridders(q, h0 * 0.1f64.powi(k)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(v, _)| v)
    };
    let d1 = best(&|h| Some((f(z + h)? - f(z - h)?) / (2.0 * h)))?;
    let d2 = best(&|h| Some((f(z + h)? - 2.0 * f0 + f(z - h)?) / (h * h)))?;
    Some((d1, d2))
}

fn rel_err(symbolic: Complex64, numeric: Complex64) -> f64 {
    (symbolic - numeric).norm() / symbolic.norm().max(1.0)
}

fn derivative_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: (f64, String) = (0.0, String::new());
    let mut compared = 0usize;
    for _ in 0..C7_EXPRESSIONS {
        let src = random_expression(&mut rng, 4, 2);
        let e = parse(&src).map_err(|err| format!("`{src}`: {err}"))?;
        let (d1, d2) = (e.differentiate(1), e.differentiate(2));
        let f = |z: Complex64| e.evaluate(z).ok().filter(|v| v.is_finite());
        let mut points = 0usize;
        let mut attempts = 0usize;
        while points < C7_POINTS {
            attempts += 1;
            if attempts > 100 * C7_POINTS {
                return Err(format!("could not place {C7_POINTS} points for `{src}`"));
            }
            let z = random_in_disc(&mut rng, 1.0);
            let gap = e.singularities().iter().map(|s| (z - s).norm()).fold(f64::INFINITY, f64::min);
            if gap < C7_SINGULAR_EXCLUSION {
                continue;
            }
            let step = (0.05f64).min(gap / 4.0);
            let (Ok(s1), Ok(s2)) = (d1.evaluate(z), d2.evaluate(z)) else {
                return Err(format!("`{src}` derivative failed at {z}"));
            };
            let Some((n1, n2)) = finite_differences(&f, z, step) else {
                return Err(format!("`{src}` failed near {z}"));
            };
            for (label, err) in [("d1", rel_err(s1, n1)), ("d2", rel_err(s2, n2))] {
                if err > worst.0 {
                    worst = (err, format!("{label} of `{src}` at {z:.4}"));
                }
            }
            points += 1;
            compared += 1;
        }
    }
    check(
        worst.0 <= C7_REL_TOL,
        format!("{compared} points, worst relative error {:.2e} ({})", worst.0, worst.1),
    )
}

fn random_coeff(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

fn poly_source(coeffs: &[Complex64]) -> String {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, a)| format!("({}+{}*i)*z^{k}", a.re, a.im))
        .collect::<Vec<_>>()
        .join("+")
}

fn degree_additivity(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut done = 0usize;
    let mut attempts = 0usize;
    while done < C8_DEGREE_CASES {
        attempts += 1;
        if attempts > 20 * C8_DEGREE_CASES {
            return Err(format!("only {done} admissible degree cases"));
        }
        let deg = rng.gen_range(1..=4);
        let h: Vec<Complex64> = (0..=deg).map(|_| random_coeff(rng, 1.0)).collect();
        let g = [c(0.0, 0.0), random_coeff(rng, 0.3)];
        let m = map(&poly_source(&h), &poly_source(&g));
        let a = random_coeff(rng, 1.0);
        let Ok(cell) = Cell::new(random_coeff(rng, 0.5), rng.gen_range(0.05..0.8)) else {
            continue;
        };
        let Ok(whole) = boundary_degree(&m, a, &cell, 256) else {
            continue;
        };
        let parts: Result<Vec<i64>, _> = cell.children().iter().map(|ch| boundary_degree(&m, a, ch, 256)).collect();
        let Ok(parts) = parts else {
            continue;
        };
        if parts.iter().sum::<i64>() != whole {
            return Err(format!("degree {whole} != sum {parts:?} for a={a}"));
        }
        done += 1;
    }
    Ok(done)
}

fn spherical_bound(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut checked = 0usize;
    for _ in 0..C8_MAPS {
        let h: Vec<Complex64> = (0..=3).map(|_| random_coeff(rng, 1.0)).collect();
        let g: Vec<Complex64> = (0..=3).map(|k| if k == 0 { c(0.0, 0.0) } else { random_coeff(rng, 1.0) }).collect();
        let m = map(&poly_source(&h), &poly_source(&g));
        for _ in 0..C8_SAMPLES {
            let z = random_in_disc(rng, 1.0);
            let jet = m.jet(z).map_err(|e| e.to_string())?;
            if (jet.h * jet.g).re < 0.0 {
                continue;
            }
            let fsharp = (jet.dh.norm() + jet.dg.norm()) / (1.0 + (jet.h + jet.g.conj()).norm_sqr());
            let hsharp = jet.dh.norm() / (1.0 + jet.h.norm_sqr());
            let gsharp = jet.dg.norm() / (1.0 + jet.g.norm_sqr());
            if fsharp > (hsharp + gsharp) * (1.0 + 1e-12) {
                return Err(format!("f# {fsharp} > h# + g# {} at {z}", hsharp + gsharp));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn affine_identity(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let sources = [("z^2+0.3*z", "0.2*z^2"), ("exp(z)-1", "0.5*z"), ("z/(2-z)", "0.1*z^3"), ("sin(z)", "0.25*z")];
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for (h, g) in sources {
        let m = map(h, g);
        for _ in 0..100 {
            let offset = random_in_disc(rng, 0.5);
            let scale = random_in_disc(rng, 0.4);
            if scale.norm() < 1e-3 {
                continue;
            }
            let p = m.precompose_affine(offset, scale).map_err(|e| e.to_string())?;
            let zeta = random_in_disc(rng, 1.0);
            let z = offset + scale * zeta;
            let (lhs, rhs) = (p.eval(zeta).map_err(|e| e.to_string())?, m.eval(z).map_err(|e| e.to_string())?);
            let (ls, rs) = (
                p.spherical_derivative(zeta).map_err(|e| e.to_string())?,
                scale.norm() * m.spherical_derivative(z).map_err(|e| e.to_string())?,
            );
            worst = worst.max((lhs - rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE));
            worst = worst.max((ls - rs).abs() / rs.abs().max(f64::MIN_POSITIVE));
            count += 1;
        }
    }
    if worst > C8_AFFINE_REL_TOL {
        return Err(format!("affine identity off by {worst:.2e}"));
    }
    Ok(count)
}

fn ratio_at_origin(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for k in 0..C8_RATIO_PAIRS {
        let w = match k % 3 {
            0 => PhiWeight::Classical,
            1 => PhiWeight::inv_pow(rng.gen_range(1.01..4.0)).map_err(|e| e.to_string())?,
            _ => PhiWeight::inv_log(rng.gen_range(1.0..4.0)).map_err(|e| e.to_string())?,
        };
        let a = random_in_disc(rng, 0.999);
        let v = w.rescale_ratio(a, c(0.0, 0.0)).map_err(|e| e.to_string())?;
        if v != 1.0 {
            return Err(format!("R_a(0) = {v} for {w} at a = {a}"));
        }
    }
    Ok(C8_RATIO_PAIRS)
}

fn convexity_cases() -> Result<usize, String> {
    for alpha in [1.5, 2.0, 3.0] {
        let w = PhiWeight::inv_pow(alpha).map_err(|e| e.to_string())?;
        if !reciprocal_convexity_check(&w, 1000).map_err(|e| e.to_string())? {
            return Err(format!("1/phi not convex for alpha {alpha}"));
        }
    }
    if reciprocal_convexity_check(&PhiWeight::Classical, 1000).map_err(|e| e.to_string())? {
        return Err("1/phi convex for the classical weight".into());
    }
    Ok(4)
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let degree = degree_additivity(&mut rng)?;
    let bound = spherical_bound(&mut rng)?;
    let affine = affine_identity(&mut rng)?;
    let ratio = ratio_at_origin(&mut rng)?;
    let convex = convexity_cases()?;
    Ok(format!(
        "degree additivity {degree}, f# bound {bound} samples, affine {affine}, R_a(0) {ratio}, convexity {convex}"
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let map_path = dir.path().join("witness.map");
    std::fs::write(&map_path, format!("h = {WITNESS_H}\ng = 0\n")).map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let cwd = dir.path().join(name);
        std::fs::create_dir(&cwd).map_err(|e| e.to_string())?;
        let out = Command::new(env!("CARGO_BIN_EXE_phinormal"))
            .current_dir(&cwd)
            .args(["analyze", "--phi", "inv_pow:alpha=1.5", "--rstart", "0.9", "--rfactor", "0.1", "--steps", "4"])
            .arg("--map")
            .arg(&map_path)
            .args(["--out", "report.json"])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
        }
        let json = std::fs::read(cwd.join("report.json")).map_err(|e| e.to_string())?;
        let csv = std::fs::read(cwd.join("report.csv")).map_err(|e| e.to_string())?;
        Ok((json, csv))
    };
    let (j1, c1) = run("first")?;
    let (j2, c2) = run("second")?;
    check(
        j1 == j2 && c1 == c2,
        format!("json {} bytes identical {}; csv identical {}", j1.len(), j1 == j2, c1 == c2),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("identity map sup", identity_map_sup),
        ("witness growth under inv_pow 1.5", witness_growth),
        ("witness classical sup", witness_classical),
        ("rescaling identity at the origin", rescaling_identity),
        ("preimage suite", preimage_suite),
        ("exceptional value scans", exceptional_values),
        ("symbolic derivatives vs finite differences", derivative_correctness),
        ("property suites", property_suites),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
