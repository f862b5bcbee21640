use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use riemann_ineq::calculus::ScalarField;
use riemann_ineq::manifold::{catalog, ManifoldSpec};
use riemann_ineq::quadrature::{
    byparts_residual, convergence_study, doubling_resolutions, ByPartsSign, ConvergenceRow,
    MIN_RESOLUTION,
};
use riemann_ineq::verifier::family::modes;
use riemann_ineq::verifier::sweep::{
    integral_sweep, pointwise_sweep, sample_params, PointwiseSummary, SampleOutcome, Tolerances,
    REFINEMENT_FLOOR,
};
use riemann_ineq::verifier::{
    estimate_constant, eval_functionals, EstimateOptions, EstimateReport, IdentityName,
    IdentityReport, Objective,
};

use crate::args::RunConfig;
use crate::output::{self, list, num, opt, resolution, slug};
use crate::Failure;

/// Random interior points in the pointwise sweep of `verify`.
pub const POINTWISE_POINTS: usize = 10_000;

pub fn list_manifolds() {
    for (spec, about) in catalog() {
        println!("{spec:<34} {about}");
    }
}

#[derive(Serialize)]
struct RatioMax {
    main: Option<f64>,
    bernis: Option<f64>,
    cross: Option<f64>,
}

#[derive(Serialize)]
struct ManifoldVerify {
    manifold: String,
    resolution: Vec<usize>,
    pointwise: PointwiseSummary,
    samples: Vec<SampleOutcome>,
    refinement_checked: bool,
    ratio_max: RatioMax,
    failures: Vec<String>,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    command: &'static str,
    family: String,
    seed: u64,
    samples: usize,
    points: usize,
    tolerances: Tolerances,
    manifolds: Vec<ManifoldVerify>,
    pass: bool,
}

fn fold_max(acc: Option<f64>, x: Option<f64>) -> Option<f64> {
    match (acc, x) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

fn verify_one(config: &RunConfig, m: &ManifoldSpec) -> Result<ManifoldVerify, Failure> {
    let tol = &config.tolerances;
    let res = config.resolution_for(m)?;
    let pointwise = pointwise_sweep(
        m,
        &config.family,
        POINTWISE_POINTS,
        config.samples,
        config.seed,
        tol,
    )
    .map_err(Failure::from_core)?;
    let refine = config.refine >= 1;
    let samples = integral_sweep(
        m,
        &config.family,
        config.samples,
        config.seed,
        &res,
        refine,
        tol,
    )
    .map_err(Failure::from_core)?;

    let mut failures = Vec::new();
    for (name, check) in pointwise.checks() {
        if !check.pass() {
            failures.push(format!(
                "{}: pointwise {name}: {} of {} evaluations above {} (max {})",
                m.name,
                check.failures,
                pointwise.points * pointwise.samples,
                num(check.tolerance),
                num(check.max_rel_residual)
            ));
        }
    }
    if pointwise.evaluation_errors > 0 {
        failures.push(format!(
            "{}: pointwise: {} evaluations failed",
            m.name, pointwise.evaluation_errors
        ));
    }
    let mut ratio_max = RatioMax {
        main: None,
        bernis: None,
        cross: None,
    };
    for (i, s) in samples.iter().enumerate() {
        for r in s.identities.iter().filter(|r| !r.pass) {
            failures.push(format!(
                "{}: sample {i}: identity {} rel_residual {} >= {}",
                m.name,
                r.name.as_str(),
                num(r.rel_residual),
                num(r.tolerance)
            ));
        }
        if s.refinement_improves(REFINEMENT_FLOOR) == Some(false) {
            failures.push(format!(
                "{}: sample {i}: identity residuals did not decrease under refinement",
                m.name
            ));
        }
        if !s.ratios.b_floor_hit && !s.ratios.all_finite() {
            failures.push(format!("{}: sample {i}: non-finite ratio", m.name));
        }
        ratio_max.main = fold_max(ratio_max.main, s.ratios.main);
        ratio_max.bernis = fold_max(ratio_max.bernis, s.ratios.bernis);
        ratio_max.cross = fold_max(ratio_max.cross, s.ratios.cross);
    }
    Ok(ManifoldVerify {
        manifold: m.name.clone(),
        resolution: res,
        pointwise,
        samples,
        refinement_checked: refine,
        ratio_max,
        pass: failures.is_empty(),
        failures,
    })
}

fn identity_row(manifold: &str, sample: usize, r: &IdentityReport) -> Vec<String> {
    vec![
        manifold.to_string(),
        sample.to_string(),
        r.name.as_str().to_string(),
        num(r.lhs),
        num(r.rhs),
        num(r.abs_residual),
        num(r.rel_residual),
        resolution(&r.resolution),
        num(r.tolerance),
        r.pass.to_string(),
    ]
}

pub fn verify(config: &RunConfig) -> Result<(), Failure> {
    let results = config
        .manifolds
        .iter()
        .map(|m| verify_one(config, m))
        .collect::<Result<Vec<_>, _>>()?;

    let dir = &config.out;
    output::ensure_dir(dir)?;
    let mut id_rows = Vec::new();
    let mut ratio_rows = Vec::new();
    let mut point_rows = Vec::new();
    for r in &results {
        for (name, c) in r.pointwise.checks() {
            point_rows.push(vec![
                r.manifold.clone(),
                name.to_string(),
                r.pointwise.points.to_string(),
                r.pointwise.samples.to_string(),
                num(c.max_rel_residual),
                c.failures.to_string(),
                num(c.tolerance),
                c.pass().to_string(),
            ]);
        }
        for (i, s) in r.samples.iter().enumerate() {
            id_rows.extend(s.identities.iter().map(|x| identity_row(&r.manifold, i, x)));
            if let Some(refined) = &s.refined_identities {
                id_rows.extend(refined.iter().map(|x| identity_row(&r.manifold, i, x)));
            }
            ratio_rows.push(vec![
                r.manifold.clone(),
                i.to_string(),
                list(&s.params),
                opt(s.ratios.main),
                opt(s.ratios.bernis),
                opt(s.ratios.cross),
                s.ratios.b_floor_hit.to_string(),
            ]);
        }
    }
    output::write_csv(
        dir,
        "pointwise.csv",
        &[
            "manifold",
            "check",
            "points",
            "samples",
            "max_rel_residual",
            "failures",
            "tolerance",
            "pass",
        ],
        &point_rows,
    )?;
    output::write_csv(
        dir,
        "identities.csv",
        &[
            "manifold",
            "sample",
            "identity",
            "lhs",
            "rhs",
            "abs_residual",
            "rel_residual",
            "resolution",
            "tolerance",
            "pass",
        ],
        &id_rows,
    )?;
    output::write_csv(
        dir,
        "ratios.csv",
        &[
            "manifold",
            "sample",
            "params",
            "main",
            "bernis",
            "cross",
            "B_floor_hit",
        ],
        &ratio_rows,
    )?;

    let pass = results.iter().all(|r| r.pass);
    let failures: Vec<String> = results.iter().flat_map(|r| r.failures.clone()).collect();
    for r in &results {
        println!(
            "{}: {} pointwise checks, {} samples, max A/B {}, max E/B {}, {}",
            r.manifold,
            POINTWISE_POINTS * config.samples,
            r.samples.len(),
            opt(r.ratio_max.main),
            opt(r.ratio_max.bernis),
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    let report = VerifyReport {
        command: "verify",
        family: config.family.to_string(),
        seed: config.seed,
        samples: config.samples,
        points: POINTWISE_POINTS,
        tolerances: config.tolerances,
        manifolds: results,
        pass,
    };
    let path = output::write_json(dir, "report.json", &report)?;
    println!("report: {}", path.display());
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(failures))
    }
}

#[derive(Serialize)]
struct BestEntry {
    objective: Objective,
    manifold: String,
    best_ratio: Option<f64>,
    argmax: Vec<f64>,
    resolved: Option<bool>,
}

#[derive(Serialize)]
struct EstimateDocument {
    command: &'static str,
    family: String,
    budget: usize,
    seed: u64,
    per_manifold: Vec<BestEntry>,
    reports: Vec<EstimateReport>,
}

pub fn estimate(config: &RunConfig) -> Result<(), Failure> {
    let mut reports = Vec::new();
    for m in &config.manifolds {
        let opts = EstimateOptions {
            resolution: Some(config.resolution_for(m)?),
            certify_tolerance: config.tolerances.certify,
            ..EstimateOptions::default()
        };
        let report = estimate_constant(m, &config.family, config.budget, config.seed, &opts)
            .map_err(Failure::from_core)?;
        reports.push(report);
    }

    let mut failures = Vec::new();
    let mut best = Vec::new();
    let mut summary_rows = Vec::new();
    let mut trace_rows = Vec::new();
    for rep in &reports {
        for r in &rep.results {
            let cert = r.certification.as_ref();
            println!(
                "{} {}: best {} at [{}] ({} evaluations, {})",
                rep.manifold,
                r.objective.as_str(),
                opt(r.best_ratio),
                list(&r.argmax),
                r.evaluations,
                match (r.empty_max, cert) {
                    (true, _) => "empty max".to_string(),
                    (false, Some(c)) if c.resolved => "resolved".to_string(),
                    (false, Some(c)) => format!("UNRESOLVED, refined {}", num(c.refined_ratio)),
                    (false, None) => "uncertified".to_string(),
                }
            );
            if r.unresolved() {
                let c = cert.expect("unresolved implies certification");
                failures.push(format!(
                    "{}: {} incumbent unresolved: {} at {:?} vs {} at {:?} (rel {} > {})",
                    rep.manifold,
                    r.objective.as_str(),
                    num(c.ratio),
                    c.resolution,
                    num(c.refined_ratio),
                    c.refined_resolution,
                    num(c.rel_discrepancy),
                    num(c.tolerance)
                ));
            }
            best.push(BestEntry {
                objective: r.objective,
                manifold: rep.manifold.clone(),
                best_ratio: r.best_ratio,
                argmax: r.argmax.clone(),
                resolved: cert.map(|c| c.resolved),
            });
            summary_rows.push(vec![
                rep.manifold.clone(),
                r.objective.as_str().to_string(),
                opt(r.best_ratio),
                list(&r.argmax),
                rep.restarts.to_string(),
                r.evaluations.to_string(),
                r.degenerate_evaluations.to_string(),
                opt(cert.map(|c| c.refined_ratio)),
                opt(cert.map(|c| c.rel_discrepancy)),
                cert.map(|c| c.resolved.to_string()).unwrap_or_default(),
                r.empty_max.to_string(),
            ]);
            for t in &r.trace {
                trace_rows.push(vec![
                    rep.manifold.clone(),
                    r.objective.as_str().to_string(),
                    t.index.to_string(),
                    list(&t.start),
                    opt(t.start_ratio),
                    num(t.best_ratio),
                    list(&t.best_params),
                    t.evaluations.to_string(),
                    t.iterations.to_string(),
                    t.converged.to_string(),
                ]);
            }
        }
    }

    let dir = &config.out;
    output::ensure_dir(dir)?;
    output::write_csv(
        dir,
        "estimate.csv",
        &[
            "manifold",
            "objective",
            "best_ratio",
            "argmax",
            "restarts",
            "evaluations",
            "degenerate",
            "refined_ratio",
            "rel_discrepancy",
            "resolved",
            "empty_max",
        ],
        &summary_rows,
    )?;
    output::write_csv(
        dir,
        "trace.csv",
        &[
            "manifold",
            "objective",
            "restart",
            "start",
            "start_ratio",
            "best_ratio",
            "best_params",
            "evaluations",
            "iterations",
            "converged",
        ],
        &trace_rows,
    )?;
    let doc = EstimateDocument {
        command: "estimate-c",
        family: config.family.to_string(),
        budget: config.budget,
        seed: config.seed,
        per_manifold: best,
        reports,
    };
    let path = output::write_json(dir, "estimate.json", &doc)?;
    println!("report: {}", path.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failures))
    }
}

#[derive(Serialize)]
struct ConvergenceTables {
    manifold: String,
    family: String,
    params: Vec<f64>,
    known_volume: Option<f64>,
    volume: Vec<ConvergenceRow>,
    byparts: Vec<ConvergenceRow>,
    piate: Vec<ConvergenceRow>,
}

/// First family mode as a test function for the integration-by-parts check.
fn first_mode(m: &ManifoldSpec) -> ScalarField {
    let mode = modes(m)
        .into_iter()
        .next()
        .expect("every manifold has modes");
    let label = mode.label();
    ScalarField::new(m.dim(), label, false, move |x| Ok(mode.eval(x)))
}

fn convergence_one(config: &RunConfig, m: &ManifoldSpec) -> Result<ConvergenceTables, Failure> {
    let base: Vec<usize> = match &config.resolution {
        Some(_) => config.resolution_for(m)?,
        None => m
            .default_resolution()
            .iter()
            .map(|r| (r / 4).max(MIN_RESOLUTION))
            .collect(),
    };
    let resolutions = doubling_resolutions(&base, config.refine);
    let params = match &config.family.params {
        Some(p) => p.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            sample_params(&config.family, 1, &mut rng).remove(0)
        }
    };
    let u = config
        .family
        .field(m, &params)
        .map_err(Failure::from_core)?;
    let f = first_mode(m);
    let core = Failure::from_core;

    let volume = convergence_study(m, &resolutions, |g| Ok(g.volume())).map_err(core)?;
    let byparts = convergence_study(m, &resolutions, |g| {
        byparts_residual(g, &f, &u, ByPartsSign::Divergence)
    })
    .map_err(core)?;
    let piate = convergence_study(m, &resolutions, |g| {
        let fx = eval_functionals(g, &u)?;
        Ok(IdentityReport::new(
            IdentityName::Piate,
            &fx,
            &g.resolution,
            config.tolerances.identity,
        )
        .rel_residual)
    })
    .map_err(core)?;
    Ok(ConvergenceTables {
        manifold: m.name.clone(),
        family: config.family.to_string(),
        params,
        known_volume: m.known_volume,
        volume,
        byparts,
        piate,
    })
}

pub fn convergence(config: &RunConfig) -> Result<(), Failure> {
    let tables = config
        .manifolds
        .iter()
        .map(|m| convergence_one(config, m))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = &config.out;
    output::ensure_dir(dir)?;
    for t in &tables {
        for (quantity, rows) in [
            ("volume", &t.volume),
            ("byparts", &t.byparts),
            ("piate", &t.piate),
        ] {
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.resolution_label(),
                        num(r.value),
                        opt(r.delta),
                        opt(r.est_order),
                    ]
                })
                .collect();
            let name = format!("convergence_{}_{quantity}.csv", slug(&t.manifold));
            output::write_csv(
                dir,
                &name,
                &["resolution", "value", "delta", "est_order"],
                &csv_rows,
            )?;
            let last = rows.last().expect("at least three rows");
            println!(
                "{} {quantity}: {} rows, final {} at {}",
                t.manifold,
                rows.len(),
                num(last.value),
                last.resolution_label()
            );
        }
    }
    let path = output::write_json(dir, "convergence.json", &tables)?;
    println!("report: {}", path.display());
    Ok(())
}
