//! Empirical lower bounds for the inequality constants by simplex search
//! over a function family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::ManifoldSpec;
use crate::quadrature::{build_grid, Grid};

use crate::calculus::CurvatureTerm;

use super::{eval_functionals_cached, CachedFamily, FamilySpec, RatioReport};

pub const DEFAULT_RESTARTS: usize = 50;
/// Simplex diameter below which a restart has converged.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;
/// Largest relative change of the incumbent ratio under grid doubling.
pub const CERTIFY_TOLERANCE: f64 = 1e-4;
/// Initial simplex edge as a fraction of the box width.
const INITIAL_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// `A / B`
    Main,
    /// `E / B`
    Bernis,
}

impl Objective {
    pub const ALL: [Objective; 2] = [Objective::Main, Objective::Bernis];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Main => "main",
            Objective::Bernis => "bernis",
        }
    }

    fn pick(self, r: &RatioReport) -> Option<f64> {
        match self {
            Objective::Main => r.main,
            Objective::Bernis => r.bernis,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub restarts: usize,
    /// Search resolution; `None` uses the manifold default.
    pub resolution: Option<Vec<usize>>,
    /// Overrides the family box when set.
    pub bounds: Option<(f64, f64)>,
    pub certify_tolerance: f64,
    pub objectives: Vec<Objective>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            restarts: DEFAULT_RESTARTS,
            resolution: None,
            bounds: None,
            certify_tolerance: CERTIFY_TOLERANCE,
            objectives: Objective::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartTrace {
    pub index: usize,
    pub start: Vec<f64>,
    /// Objective at the start point; `None` when degenerate.
    pub start_ratio: Option<f64>,
    pub best_ratio: f64,
    pub best_params: Vec<f64>,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certification {
    pub resolution: Vec<usize>,
    pub refined_resolution: Vec<usize>,
    pub ratio: f64,
    pub refined_ratio: f64,
    pub rel_discrepancy: f64,
    pub tolerance: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveResult {
    pub objective: Objective,
    /// Largest ratio seen; `None` when every evaluation was degenerate.
    pub best_ratio: Option<f64>,
    pub argmax: Vec<f64>,
    /// Index of the restart that produced the incumbent.
    pub best_restart: Option<usize>,
    pub evaluations: usize,
    pub degenerate_evaluations: usize,
    pub empty_max: bool,
    pub certification: Option<Certification>,
    pub trace: Vec<RestartTrace>,
}

impl ObjectiveResult {
    /// Unresolved when the incumbent fails certification.
    pub fn unresolved(&self) -> bool {
        self.certification.as_ref().is_some_and(|c| !c.resolved)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub manifold: String,
    pub family: String,
    pub n_params: usize,
    pub resolution: Vec<usize>,
    pub bounds: (f64, f64),
    pub budget: usize,
    pub seed: u64,
    pub restarts: usize,
    pub results: Vec<ObjectiveResult>,
}

impl EstimateReport {
    pub fn result(&self, objective: Objective) -> Option<&ObjectiveResult> {
        self.results.iter().find(|r| r.objective == objective)
    }

    pub fn unresolved(&self) -> bool {
        self.results.iter().any(ObjectiveResult::unresolved)
    }
}

/// Objective evaluator with evaluation counting.
struct Evaluator<'a> {
    cache: &'a CachedFamily<'a>,
    grid: &'a Grid,
    objective: Objective,
    evaluations: usize,
    degenerate: usize,
}

impl Evaluator<'_> {
    /// Objective value at `p`; degenerate points count as 0.
    fn eval(&mut self, p: &[f64]) -> Result<Option<f64>> {
        self.evaluations += 1;
        let value = ratio_at(self.cache, self.grid, p, self.objective)?;
        if value.is_none() {
            self.degenerate += 1;
        }
        Ok(value)
    }
}

fn ratio_at(
    cache: &CachedFamily<'_>,
    grid: &Grid,
    p: &[f64],
    objective: Objective,
) -> Result<Option<f64>> {
    let fx = eval_functionals_cached(grid, &cache.member(p)?, CurvatureTerm::Included)?;
    let r = RatioReport::new(&fx, grid.volume(), &grid.manifold_name, p);
    Ok(objective.pick(&r).filter(|v| v.is_finite()))
}

fn clamp(p: &mut [f64], (lo, hi): (f64, f64)) {
    for v in p {
        *v = v.clamp(lo, hi);
    }
}

/// One bounded maximisation from `start` with at most `budget` evaluations.
fn nelder_mead(
    ev: &mut Evaluator<'_>,
    index: usize,
    start: Vec<f64>,
    budget: usize,
    bounds: (f64, f64),
) -> Result<RestartTrace> {
    let k = start.len();
    let begin = ev.evaluations;
    let used = |ev: &Evaluator<'_>| ev.evaluations - begin;
    let value = |r: Option<f64>| r.unwrap_or(0.0);

    let start_ratio = ev.eval(&start)?;
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), value(start_ratio))];
    let step = INITIAL_STEP * (bounds.1 - bounds.0);
    for i in 0..k {
        if used(ev) >= budget {
            break;
        }
        let mut p = start.clone();
        p[i] = if p[i] + step <= bounds.1 {
            p[i] + step
        } else {
            p[i] - step
        };
        let f = value(ev.eval(&p)?);
        simplex.push((p, f));
    }

    let mut iterations = 0;
    let mut converged = false;
    if simplex.len() == k + 1 && k > 0 {
        loop {
            // best first; stable sort keeps ties in insertion order
            simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
            let diameter = simplex[1..]
                .iter()
                .map(|(p, _)| {
                    p.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if diameter < SIMPLEX_TOLERANCE {
                converged = true;
                break;
            }
            if used(ev) >= budget {
                break;
            }
            iterations += 1;

            let worst = simplex[k].clone();
            let mut centroid = vec![0.0; k];
            for (p, _) in &simplex[..k] {
                for (c, v) in centroid.iter_mut().zip(p) {
                    *c += v / k as f64;
                }
            }
            let along = |t: f64| {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                clamp(&mut p, bounds);
                p
            };

            let xr = along(1.0);
            let fr = value(ev.eval(&xr)?);
            if fr > simplex[0].1 {
                if used(ev) >= budget {
                    simplex[k] = (xr, fr);
                    continue;
                }
                let xe = along(2.0);
                let fe = value(ev.eval(&xe)?);
                simplex[k] = if fe > fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr > simplex[k - 1].1 {
                simplex[k] = (xr, fr);
                continue;
            }
            if used(ev) >= budget {
                break;
            }
            let (xc, fc) = if fr > worst.1 {
                let xc = along(0.5);
                let fc = value(ev.eval(&xc)?);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = value(ev.eval(&xc)?);
                (xc, fc)
            };
            if fc > worst.1.max(fr) || (fr <= worst.1 && fc > worst.1) {
                simplex[k] = (xc, fc);
                continue;
            }
            // shrink towards the best vertex
            let best = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                if used(ev) >= budget {
                    break;
                }
                let p: Vec<f64> = best
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, v)| b + 0.5 * (v - b))
                    .collect();
                let f = value(ev.eval(&p)?);
                *vertex = (p, f);
            }
        }
    }

    let (best_params, best_ratio) = simplex
        .iter()
        .fold(None::<&(Vec<f64>, f64)>, |acc, v| match acc {
            Some(a) if a.1 >= v.1 => Some(a),
            _ => Some(v),
        })
        .cloned()
        .expect("simplex has the start vertex");
    Ok(RestartTrace {
        index,
        start,
        start_ratio,
        best_ratio,
        best_params,
        evaluations: used(ev),
        iterations,
        converged,
    })
}

/// Splits `budget` evaluations over restarts; each restart gets at least two
/// simplex-sized blocks when the budget allows.
fn restart_budgets(budget: usize, restarts: usize, k: usize) -> Vec<usize> {
    let per = 2 * (k + 1);
    let count = restarts.min(budget / per).max(1);
    let mut out = vec![budget / count; count];
    for slot in out.iter_mut().take(budget % count) {
        *slot += 1;
    }
    out
}

fn certify(
    m: &ManifoldSpec,
    family: &FamilySpec,
    grid: &Grid,
    argmax: &[f64],
    ratio: f64,
    objective: Objective,
    tolerance: f64,
) -> Result<Certification> {
    let refined_resolution: Vec<usize> = grid.resolution.iter().map(|r| 2 * r).collect();
    let fine = build_grid(m, &refined_resolution)?;
    let cache = CachedFamily::on_grid(family, m, &fine);
    let refined = ratio_at(&cache, &fine, argmax, objective)?.unwrap_or(0.0);
    let rel_discrepancy = (refined - ratio).abs() / ratio.abs().max(f64::MIN_POSITIVE);
    Ok(Certification {
        resolution: grid.resolution.clone(),
        refined_resolution,
        ratio,
        refined_ratio: refined,
        rel_discrepancy,
        tolerance,
        resolved: rel_discrepancy <= tolerance,
    })
}

/// Maximises each objective over the family's parameters. `budget` counts
/// functional evaluations per objective at the search resolution; the
/// certification evaluation at doubled resolution is not charged.
pub fn estimate_constant(
    m: &ManifoldSpec,
    family: &FamilySpec,
    budget: usize,
    seed: u64,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    if budget == 0 {
        return Err(Error::InvalidSearch("budget must be at least 1".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidSearch("restarts must be at least 1".into()));
    }
    let bounds = opts.bounds.unwrap_or(family.bounds);
    if !(bounds.0 < bounds.1) || !bounds.0.is_finite() || !bounds.1.is_finite() {
        return Err(Error::InvalidSearch("box must satisfy lo < hi".into()));
    }
    let resolution = opts
        .resolution
        .clone()
        .unwrap_or_else(|| m.default_resolution());
    let grid = build_grid(m, &resolution)?;
    let cache = CachedFamily::on_grid(family, m, &grid);
    let k = family.n_params;
    let budgets = if k == 0 {
        vec![1]
    } else {
        restart_budgets(budget, opts.restarts, k)
    };

    // restart points drawn once, shared by every objective
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = budgets
        .iter()
        .map(|_| (0..k).map(|_| rng.gen_range(bounds.0..bounds.1)).collect())
        .collect();

    let mut results = Vec::new();
    for &objective in &opts.objectives {
        let runs = starts
            .par_iter()
            .zip(&budgets)
            .enumerate()
            .map(|(index, (start, &b))| {
                let mut ev = Evaluator {
                    cache: &cache,
                    grid: &grid,
                    objective,
                    evaluations: 0,
                    degenerate: 0,
                };
                let trace = nelder_mead(&mut ev, index, start.clone(), b, bounds)?;
                Ok((trace, ev.evaluations, ev.degenerate))
            })
            .collect::<Result<Vec<_>>>()?;

        let evaluations = runs.iter().map(|r| r.1).sum();
        let degenerate_evaluations = runs.iter().map(|r| r.2).sum();
        let trace: Vec<RestartTrace> = runs.into_iter().map(|r| r.0).collect();
        // ties go to the lowest restart index
        let best = trace
            .iter()
            .fold(None::<&RestartTrace>, |acc, t| match acc {
                Some(a) if a.best_ratio >= t.best_ratio => Some(a),
                _ => Some(t),
            })
            .filter(|_| degenerate_evaluations < evaluations);
        let result = match best {
            Some(t) => ObjectiveResult {
                objective,
                best_ratio: Some(t.best_ratio),
                argmax: t.best_params.clone(),
                best_restart: Some(t.index),
                evaluations,
                degenerate_evaluations,
                empty_max: false,
                certification: Some(certify(
                    m,
                    family,
                    &grid,
                    &t.best_params,
                    t.best_ratio,
                    objective,
                    opts.certify_tolerance,
                )?),
                trace,
            },
            None => ObjectiveResult {
                objective,
                best_ratio: None,
                argmax: Vec::new(),
                best_restart: None,
                evaluations,
                degenerate_evaluations,
                empty_max: true,
                certification: None,
                trace,
            },
        };
        results.push(result);
    }

    Ok(EstimateReport {
        manifold: m.name.clone(),
        family: family.to_string(),
        n_params: k,
        resolution,
        bounds,
        budget,
        seed,
        restarts: budgets.len(),
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::flat_torus;
    use std::f64::consts::TAU;

    fn small_opts() -> EstimateOptions {
        EstimateOptions {
            resolution: Some(vec![16, 16]),
            ..EstimateOptions::default()
        }
    }

    #[test]
    fn budgets_split_evenly() {
        assert_eq!(restart_budgets(2000, 50, 4), vec![40; 50]);
        assert_eq!(restart_budgets(10, 50, 4), vec![10]);
        let b = restart_budgets(101, 50, 2);
        assert_eq!(b.iter().sum::<usize>(), 101);
        assert_eq!(b.len(), 16);
    }

    #[test]
    fn dimension_zero_is_an_empty_max() {
        let m = flat_torus(2, &[TAU, TAU]).unwrap();
        let family = FamilySpec::parse("exp-trig:0").unwrap();
        let r = estimate_constant(&m, &family, 100, 0, &small_opts()).unwrap();
        for res in &r.results {
            assert!(res.empty_max);
            assert_eq!(res.best_ratio, None);
            assert_eq!(res.evaluations, 1);
            assert_eq!(res.degenerate_evaluations, 1);
        }
    }

    #[test]
    fn budget_is_respected_and_best_dominates_starts() {
        let m = flat_torus(2, &[TAU, TAU]).unwrap();
        let family = FamilySpec::parse("exp-trig:2").unwrap();
        let r = estimate_constant(&m, &family, 60, 3, &small_opts()).unwrap();
        for res in &r.results {
            assert!(res.evaluations <= 60);
            let best = res.best_ratio.unwrap();
            for t in &res.trace {
                assert!(best >= t.start_ratio.unwrap_or(0.0));
                assert!(best >= t.best_ratio);
            }
        }
    }

    #[test]
    fn tiny_budget_completes() {
        let m = flat_torus(2, &[TAU, TAU]).unwrap();
        let family = FamilySpec::parse("exp-trig:4").unwrap();
        let r = estimate_constant(&m, &family, 10, 0, &small_opts()).unwrap();
        assert_eq!(r.restarts, 1);
        assert!(r.results.iter().all(|x| x.evaluations <= 10));
    }
}
