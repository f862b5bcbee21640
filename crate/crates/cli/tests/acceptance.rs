//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary so the lines print in order.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riemann_ineq::calculus::{point_calculus_with, CurvatureTerm, ScalarField};
use riemann_ineq::manifold::{parse_manifold, ManifoldSpec};
use riemann_ineq::quadrature::{build_grid, byparts_residual, ByPartsSign};
use riemann_ineq::verifier::sweep::{
    integral_sweep, pointwise_sweep, sample_points, Tolerances, REFINEMENT_FLOOR,
};
use riemann_ineq::verifier::{
    check_inequalities, eval_functionals, eval_functionals_with, function_family, FamilyKind,
    FamilySpec, IdentityName, IdentityReport,
};

const BIN: &str = env!("CARGO_BIN_EXE_riemann-ineq");

const SUITE: [&str; 6] = [
    "flat-torus:2",
    "flat-torus:3",
    "sphere:1",
    "sphere:2",
    "torus-rev:2,0.5",
    "conformal-torus:0.1",
];

type Outcome = Result<String, String>;

fn manifold(spec: &str) -> ManifoldSpec {
    parse_manifold(spec).expect("catalog spec parses")
}

fn sci(x: f64) -> String {
    format!("{x:.2e}")
}

fn pointwise_suite() -> Outcome {
    let family = FamilySpec::parse("exp-trig:4").map_err(|e| e.to_string())?;
    let mut tol = Tolerances::default();
    for name in ["lemma", "bochner", "log", "sqrt"] {
        tol.set(name, 1e-8).map_err(|e| e.to_string())?;
    }
    let mut worst = 0.0_f64;
    let mut problems = Vec::new();
    for spec in SUITE {
        let m = manifold(spec);
        let s = pointwise_sweep(&m, &family, 10_000, 20, 0, &tol).map_err(|e| e.to_string())?;
        for (name, c) in s.checks() {
            if name != "raz" {
                worst = worst.max(c.max_rel_residual);
            }
            if !c.pass() {
                problems.push(format!(
                    "{spec} {name}: {} failures, max {}",
                    c.failures,
                    sci(c.max_rel_residual)
                ));
            }
        }
        if s.evaluation_errors > 0 {
            problems.push(format!("{spec}: {} evaluation errors", s.evaluation_errors));
        }
    }
    if problems.is_empty() {
        Ok(format!(
            "6 manifolds x 10^4 points x 20 samples, max rel residual {}, trace bound held",
            sci(worst)
        ))
    } else {
        Err(problems.join("; "))
    }
}

fn curvature_mutation() -> Outcome {
    let m = manifold("sphere:1");
    let u = ScalarField::new(2, "2+cos".into(), true, |x| Ok(x[0].cos().add_scalar(2.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst_point = 0.0_f64;
    for x in sample_points(&m, 1000, &mut rng) {
        let r = point_calculus_with(&m, &u, &x, CurvatureTerm::Zeroed)
            .map_err(|e| e.to_string())?
            .bochner();
        worst_point = worst_point.max((r.residual - x[0].sin().powi(2)).abs());
    }
    let grid = build_grid(&m, &m.default_resolution()).map_err(|e| e.to_string())?;
    let full = eval_functionals(&grid, &u).map_err(|e| e.to_string())?;
    let zeroed =
        eval_functionals_with(&grid, &u, CurvatureTerm::Zeroed).map_err(|e| e.to_string())?;
    let res = &grid.resolution;
    let tr = IdentityReport::new(IdentityName::Trzecie, &zeroed, res, 1e-7);
    let cz = IdentityReport::new(IdentityName::Czwarte, &zeroed, res, 1e-7);
    let intact = [IdentityName::Trzecie, IdentityName::Czwarte]
        .iter()
        .all(|&n| IdentityReport::new(n, &full, res, 1e-7).pass);
    let f = full.f.abs();
    let tr_err = (tr.abs_residual - 0.25 * f).abs() / f;
    let cz_err = (cz.abs_residual - f).abs() / f;
    let detail = format!(
        "|bochner - sin^2| <= {}, |F| = {}, trzecie off by {} (1/4|F| rel err {}), czwarte off by {} (|F| rel err {})",
        sci(worst_point),
        sci(f),
        sci(tr.abs_residual),
        sci(tr_err),
        sci(cz.abs_residual),
        sci(cz_err)
    );
    if worst_point <= 1e-6
        && intact
        && !tr.pass
        && !cz.pass
        && tr_err < 1e-6
        && cz_err < 1e-6
        && f > 0.1
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn identity_chain() -> Outcome {
    let family = FamilySpec::parse("exp-trig:4").map_err(|e| e.to_string())?;
    let tol = Tolerances::default();
    let mut worst = 0.0_f64;
    let mut c1 = 0.0_f64;
    let mut c2 = 0.0_f64;
    let mut problems = Vec::new();
    let mut timing = Vec::new();
    for spec in SUITE {
        let t = Instant::now();
        let m = manifold(spec);
        let res = m.default_resolution();
        let out =
            integral_sweep(&m, &family, 200, 0, &res, true, &tol).map_err(|e| e.to_string())?;
        for (i, s) in out.iter().enumerate() {
            for r in &s.identities {
                worst = worst.max(r.rel_residual);
                if !r.pass {
                    problems.push(format!(
                        "{spec} draw {i} {}: {}",
                        r.name.as_str(),
                        sci(r.rel_residual)
                    ));
                }
            }
            if s.refinement_improves(REFINEMENT_FLOOR) != Some(true) {
                problems.push(format!("{spec} draw {i}: no decrease under refinement"));
            }
            match (s.ratios.cross, s.ratios.bernis, s.ratios.main) {
                (Some(d), Some(e), Some(a)) if d.is_finite() && e.is_finite() && a.is_finite() => {
                    c1 = c1.max(d);
                    c2 = c2.max(e);
                }
                _ => problems.push(format!("{spec} draw {i}: ratio not finite")),
            }
        }
        timing.push(format!("{spec} {:.0}s", t.elapsed().as_secs_f64()));
    }

    let m = manifold("flat-torus:2");
    let analytic = FamilySpec::parse("exp-trig:2:a=1,0.5").map_err(|e| e.to_string())?;
    let u = analytic
        .field(&m, analytic.params.as_deref().unwrap_or_default())
        .map_err(|e| e.to_string())?;
    let grid = build_grid(&m, &m.default_resolution()).map_err(|e| e.to_string())?;
    let fx = eval_functionals(&grid, &u).map_err(|e| e.to_string())?;
    let flat_worst = IdentityName::ALL
        .iter()
        .map(|&n| IdentityReport::new(n, &fx, &grid.resolution, 1e-10).rel_residual)
        .fold(0.0_f64, f64::max);
    if flat_worst >= 1e-10 {
        problems.push(format!("flat T^2 analytic u: {}", sci(flat_worst)));
    }
    let detail = format!(
        "200 draws x 6 manifolds, max rel residual {}, refinement decreased or at floor, flat analytic {}, D/B <= {:.3}, E/B <= {:.3} [{}]",
        sci(worst),
        sci(flat_worst),
        c1,
        c2,
        timing.join(", ")
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        problems.truncate(8);
        Err(format!("{detail}: {}", problems.join("; ")))
    }
}

fn byparts_sign() -> Outcome {
    let mut problems = Vec::new();
    let mut worst = 0.0_f64;
    let mut min_pairing = f64::INFINITY;
    for spec in SUITE {
        let m = manifold(spec);
        let f = function_family(FamilyKind::ExpTrig, &[0.5, 0.0, -0.3], &m)
            .map_err(|e| e.to_string())?;
        let u = function_family(FamilyKind::ExpTrig, &[0.2, 0.6, 0.1], &m)
            .map_err(|e| e.to_string())?;
        let base = m.default_resolution();
        let mut printed = Vec::new();
        for factor in [1, 2] {
            let res: Vec<usize> = base.iter().map(|r| r * factor).collect();
            let grid = build_grid(&m, &res).map_err(|e| e.to_string())?;
            let div = byparts_residual(&grid, &f, &u, ByPartsSign::Divergence)
                .map_err(|e| e.to_string())?;
            let pr =
                byparts_residual(&grid, &f, &u, ByPartsSign::Printed).map_err(|e| e.to_string())?;
            // the printed residual is 2∫g(∇f,∇u) minus the divergence residual
            let [pairing] = grid
                .integrate_nodes(|node| {
                    let fj = f.jet_at(&node.point, 1)?;
                    let uj = u.jet_at(&node.point, 1)?;
                    let g = &node.geometry;
                    let mut s = 0.0;
                    for i in 0..m.dim() {
                        for j in 0..m.dim() {
                            s += g.inverse(i, j) * fj.partial_value(&[i]) * uj.partial_value(&[j]);
                        }
                    }
                    Ok([s])
                })
                .map_err(|e| e.to_string())?;
            worst = worst.max(div.abs());
            min_pairing = min_pairing.min(pairing.abs());
            if div.abs() >= 1e-8 {
                problems.push(format!(
                    "{spec} at {res:?}: divergence residual {}",
                    sci(div)
                ));
            }
            if (pr - 2.0 * pairing).abs() > 1e-8 * pairing.abs() || pairing.abs() < 1e-2 {
                problems.push(format!(
                    "{spec}: printed {} vs 2*pairing {}",
                    sci(pr),
                    sci(2.0 * pairing)
                ));
            }
            printed.push(pr);
        }
        if (printed[0] - printed[1]).abs() > 1e-8 * printed[1].abs() {
            problems.push(format!("{spec}: printed residual not converged"));
        }
    }
    let detail = format!(
        "minus sign residual <= {} at default and doubled resolution; printed sign converges to 2*int g(grad f, grad u), |pairing| >= {}",
        sci(worst),
        sci(min_pairing)
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}: {}", problems.join("; ")))
    }
}

fn small_amplitude() -> Outcome {
    let m = manifold("flat-torus:2");
    let grid = build_grid(&m, &m.default_resolution()).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    let mut bernis = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let u = ScalarField::new(2, "exp(eps sin x1)".into(), true, move |x| {
            Ok(x[0].sin().scale(eps).exp())
        });
        let r = check_inequalities(&grid, &u, &[eps]).map_err(|e| e.to_string())?;
        let (main, b) = (r.main.unwrap_or(f64::NAN), r.bernis.unwrap_or(f64::NAN));
        let dev = (main - 0.25).abs();
        ok &= dev <= 1e-2 * eps;
        lines.push(format!("eps {eps:e}: |main-1/4| {}", sci(dev)));
        bernis.push(b);
    }
    for w in bernis.windows(2) {
        let q = w[0] / w[1];
        ok &= (80.0..=120.0).contains(&q);
        lines.push(format!("bernis ratio {q:.3}"));
    }
    if ok {
        Ok(lines.join(", "))
    } else {
        Err(lines.join(", "))
    }
}

fn scaling() -> Outcome {
    let family = FamilySpec::parse("exp-trig:4").map_err(|e| e.to_string())?;
    let params = [0.9, -0.6, 0.4, 0.7];
    let mut worst = 0.0_f64;
    for spec in SUITE {
        let m = manifold(spec);
        let grid = build_grid(&m, &m.default_resolution()).map_err(|e| e.to_string())?;
        let u = family.field(&m, &params).map_err(|e| e.to_string())?;
        let base = check_inequalities(&grid, &u, &params).map_err(|e| e.to_string())?;
        for c in [1e-3, 1e3] {
            let r = check_inequalities(&grid, &u.scaled(c), &params).map_err(|e| e.to_string())?;
            for (x, y) in [
                (r.main, base.main),
                (r.bernis, base.bernis),
                (r.cross, base.cross),
            ] {
                let (x, y) = (x.unwrap_or(f64::NAN), y.unwrap_or(f64::NAN));
                let rel = (x - y).abs() / y.abs();
                if !(rel <= worst) {
                    worst = rel;
                }
            }
        }
    }
    let detail = format!(
        "6 manifolds, c in {{1e-3, 1e3}}, max rel change {}",
        sci(worst)
    );
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn volumes() -> Outcome {
    use std::f64::consts::PI;
    let cases = [
        ("sphere:1", 4.0 * PI),
        ("sphere:2", 16.0 * PI),
        ("flat-torus:2", 4.0 * PI * PI),
        ("flat-torus:3", 8.0 * PI.powi(3)),
        ("flat-torus:2:1,3", 3.0),
        ("torus-rev:2,0.5", 4.0 * PI * PI),
        ("torus-rev:3,1", 12.0 * PI * PI),
    ];
    let mut worst = 0.0_f64;
    for (spec, exact) in cases {
        let m = manifold(spec);
        let grid = build_grid(&m, &m.default_resolution()).map_err(|e| e.to_string())?;
        worst = worst.max((grid.volume() - exact).abs() / exact);
    }
    let detail = format!("{} manifolds, max rel error {}", cases.len(), sci(worst));
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_cli(args: &[&str], out: &Path, jobs: usize) -> Result<(), String> {
    let status = Command::new(BIN)
        .args(args)
        .arg("--jobs")
        .arg(jobs.to_string())
        .arg("--out")
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("{} exited with {status}", args.join(" ")))
    }
}

/// Byte comparison of every file in two output directories.
fn same_outputs(a: &Path, b: &Path) -> Result<usize, String> {
    let list = |d: &Path| -> Result<Vec<String>, String> {
        let mut names: Vec<String> = std::fs::read_dir(d)
            .map_err(|e| e.to_string())?
            .map(|e| {
                e.map(|e| e.file_name().to_string_lossy().into_owned())
                    .map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()?;
        names.sort();
        Ok(names)
    };
    let (na, nb) = (list(a)?, list(b)?);
    if na != nb {
        return Err(format!("file sets differ: {na:?} vs {nb:?}"));
    }
    for name in &na {
        let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{name} differs"));
        }
    }
    Ok(na.len())
}

fn estimation_run() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = [
        "estimate-c",
        "--manifold",
        "flat-torus:2",
        "--manifold",
        "sphere:1",
        "--family",
        "exp-trig:4",
        "--budget",
        "2000",
        "--seed",
        "0",
    ];
    let t = Instant::now();
    run_cli(&args, &dir.path().join("a"), 1)?;
    let first = t.elapsed().as_secs_f64();
    run_cli(&args, &dir.path().join("b"), 2)?;
    let files = same_outputs(&dir.path().join("a"), &dir.path().join("b"))?;

    let text =
        std::fs::read_to_string(dir.path().join("a/estimate.json")).map_err(|e| e.to_string())?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let entries = doc["per_manifold"]
        .as_array()
        .ok_or("per_manifold missing")?;
    let mut torus_main = f64::NAN;
    let mut all_resolved = true;
    let mut summary = Vec::new();
    for e in entries {
        let m = e["manifold"].as_str().unwrap_or("?");
        let obj = e["objective"].as_str().unwrap_or("?");
        let r = e["best_ratio"].as_f64().unwrap_or(f64::NAN);
        all_resolved &= e["resolved"].as_bool() == Some(true);
        if m.starts_with("flat-torus:2") && obj == "main" {
            torus_main = r;
        }
        summary.push(format!("{m} {obj} {r:.6}"));
    }
    let detail = format!(
        "{first:.0}s for the first run, {files} files byte-identical across --jobs 1/2, {}",
        summary.join(", ")
    );
    if first < 600.0 && torus_main >= 0.25 && all_resolved && entries.len() == 4 {
        Ok(detail)
    } else {
        Err(format!("{detail} (resolved: {all_resolved})"))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [(&str, Vec<&str>); 3] = [
        (
            "verify",
            vec![
                "verify",
                "--manifold",
                "sphere:1",
                "--manifold",
                "flat-torus:2",
                "--samples",
                "3",
                "--refine",
                "1",
            ],
        ),
        (
            "convergence",
            vec![
                "convergence",
                "--manifold",
                "torus-rev:2,0.5",
                "--manifold",
                "sphere:2",
                "--refine",
                "2",
            ],
        ),
        (
            "estimate-c",
            vec![
                "estimate-c",
                "--manifold",
                "conformal-torus:0.1",
                "--family",
                "exp-trig:3",
                "--budget",
                "80",
                "--seed",
                "5",
            ],
        ),
    ];
    let mut lines = Vec::new();
    for (name, args) in runs {
        let a = dir.path().join(format!("{name}-1"));
        let b = dir.path().join(format!("{name}-3"));
        run_cli(&args, &a, 1)?;
        run_cli(&args, &b, 3)?;
        let n = same_outputs(&a, &b).map_err(|e| format!("{name}: {e}"))?;
        lines.push(format!("{name} {n} files"));
    }
    Ok(format!("identical across --jobs 1/3: {}", lines.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("pointwise identity suite", pointwise_suite),
        ("curvature-term mutation", curvature_mutation),
        ("integral identity chain", identity_chain),
        ("integration-by-parts sign", byparts_sign),
        ("small-amplitude limit", small_amplitude),
        ("scaling invariance", scaling),
        ("volume oracles", volumes),
        ("constant estimation run", estimation_run),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.1}s) {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
