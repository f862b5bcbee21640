//! Seeded sweeps over random chart points and random family members.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{
    log_identity_at, sqrt_identity_at, CurvatureTerm, PointCalculus, FIELD_ORDER,
};
use crate::error::{Error, Result};
use crate::manifold::{Geometry, ManifoldSpec};
use crate::quadrature::{build_grid, Grid};

use super::{
    eval_functionals_cached, identity_chain, CachedFamily, FamilySpec, Functionals, IdentityReport,
    RatioReport,
};

/// Fraction of a singular axis excluded at each end when sampling points.
pub const SINGULAR_PAD: f64 = 1e-3;

/// Named tolerances; every check reads its threshold from here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub lemma: f64,
    pub bochner: f64,
    pub log: f64,
    pub sqrt: f64,
    pub raz: f64,
    pub identity: f64,
    pub byparts: f64,
    pub certify: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lemma: 1e-9,
            bochner: 1e-8,
            log: 1e-9,
            sqrt: 1e-9,
            raz: 1e-12,
            identity: super::IDENTITY_TOLERANCE,
            byparts: 1e-8,
            certify: super::estimate::CERTIFY_TOLERANCE,
        }
    }
}

impl Tolerances {
    pub const NAMES: [&'static str; 8] = [
        "lemma", "bochner", "log", "sqrt", "raz", "identity", "byparts", "certify",
    ];

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value > 0.0) {
            return Err(Error::InvalidSearch(format!(
                "tolerance {name} must be positive"
            )));
        }
        let slot = match name {
            "lemma" => &mut self.lemma,
            "bochner" => &mut self.bochner,
            "log" => &mut self.log,
            "sqrt" => &mut self.sqrt,
            "raz" => &mut self.raz,
            "identity" => &mut self.identity,
            "byparts" => &mut self.byparts,
            "certify" => &mut self.certify,
            other => {
                return Err(Error::InvalidSearch(format!(
                    "unknown tolerance '{other}' (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        *slot = value;
        Ok(())
    }
}

/// Uniform draws inside the chart, padded away from singular endpoints.
pub fn sample_points(m: &ManifoldSpec, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            (0..m.dim())
                .map(|i| {
                    let (lo, hi) = (m.chart.lower[i], m.chart.upper[i]);
                    let pad = if m.chart.is_singular(i) {
                        SINGULAR_PAD * (hi - lo)
                    } else {
                        0.0
                    };
                    rng.gen_range(lo + pad..hi - pad)
                })
                .collect()
        })
        .collect()
}

/// Parameter vectors for a family: its fixed parameters, or uniform draws
/// from its box.
pub fn sample_params(family: &FamilySpec, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    if let Some(p) = &family.params {
        return vec![p.clone(); count];
    }
    let (lo, hi) = family.bounds;
    (0..count)
        .map(|_| {
            (0..family.n_params)
                .map(|_| rng.gen_range(lo..hi))
                .collect()
        })
        .collect()
}

/// Worst residual seen for one pointwise check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckSummary {
    pub max_rel_residual: f64,
    pub failures: usize,
    pub tolerance: f64,
}

impl CheckSummary {
    fn new(tolerance: f64) -> Self {
        CheckSummary {
            max_rel_residual: 0.0,
            failures: 0,
            tolerance,
        }
    }

    fn record(&mut self, rel: f64) {
        // NaN counts as a failure
        if !(rel <= self.tolerance) {
            self.failures += 1;
        }
        if !(rel <= self.max_rel_residual) {
            self.max_rel_residual = rel;
        }
    }

    fn merge(mut self, other: CheckSummary) -> Self {
        self.failures += other.failures;
        if !(other.max_rel_residual <= self.max_rel_residual) {
            self.max_rel_residual = other.max_rel_residual;
        }
        self
    }

    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointwiseSummary {
    pub manifold: String,
    pub family: String,
    pub points: usize,
    pub samples: usize,
    pub lemma: CheckSummary,
    pub bochner: CheckSummary,
    pub log: CheckSummary,
    pub sqrt: CheckSummary,
    /// Largest `(lhs − rhs) / max(rhs, tiny)` of the trace bound.
    pub raz: CheckSummary,
    pub evaluation_errors: usize,
}

impl PointwiseSummary {
    pub fn pass(&self) -> bool {
        self.evaluation_errors == 0
            && [self.lemma, self.bochner, self.log, self.sqrt, self.raz]
                .iter()
                .all(CheckSummary::pass)
    }

    /// `(name, summary)` pairs in report order.
    pub fn checks(&self) -> [(&'static str, CheckSummary); 5] {
        [
            ("lemma", self.lemma),
            ("bochner", self.bochner),
            ("log", self.log),
            ("sqrt", self.sqrt),
            ("raz", self.raz),
        ]
    }
}

/// Every pointwise identity at `points × samples` evaluations. Geometry is
/// computed once per point and reused for every family member.
pub fn pointwise_sweep(
    m: &ManifoldSpec,
    family: &FamilySpec,
    points: usize,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<PointwiseSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = sample_points(m, points, &mut rng);
    let params = sample_params(family, samples, &mut rng);
    let cache = CachedFamily::new(family, m, xs.clone(), FIELD_ORDER);
    let members = params
        .iter()
        .map(|p| cache.member(p))
        .collect::<Result<Vec<_>>>()?;

    let empty = || {
        (
            [
                CheckSummary::new(tol.lemma),
                CheckSummary::new(tol.bochner),
                CheckSummary::new(tol.log),
                CheckSummary::new(tol.sqrt),
                CheckSummary::new(tol.raz),
            ],
            0usize,
        )
    };
    let per_point = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let (mut acc, mut errors) = empty();
            let geom = match Geometry::at(m, x) {
                Ok(g) => g,
                Err(_) => return (acc, errors + members.len()),
            };
            for u in &members {
                let outcome = (|| -> Result<[f64; 5]> {
                    let jet = u.jet(i)?;
                    let pc = PointCalculus::from_jet(&geom, &jet, CurvatureTerm::Included);
                    let (lhs, rhs) = pc.trace_bound();
                    let raz_excess = (lhs - rhs).max(0.0) / rhs.max(f64::MIN_POSITIVE);
                    Ok([
                        pc.lemma_auxi().relative(),
                        pc.bochner().relative(),
                        log_identity_at(&geom, &jet, &pc)?.relative(),
                        sqrt_identity_at(&geom, &jet, &pc)?.relative(),
                        raz_excess,
                    ])
                })();
                match outcome {
                    Ok(rels) => {
                        for (slot, rel) in acc.iter_mut().zip(rels) {
                            slot.record(rel);
                        }
                    }
                    Err(_) => errors += 1,
                }
            }
            (acc, errors)
        })
        .collect::<Vec<_>>();

    let (mut total, mut errors) = empty();
    for (acc, e) in per_point {
        for (t, a) in total.iter_mut().zip(acc) {
            *t = t.merge(a);
        }
        errors += e;
    }
    let [lemma, bochner, log, sqrt, raz] = total;
    Ok(PointwiseSummary {
        manifold: m.name.clone(),
        family: family.to_string(),
        points,
        samples,
        lemma,
        bochner,
        log,
        sqrt,
        raz,
        evaluation_errors: errors,
    })
}

/// Functionals, identity reports and ratios for one family member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub params: Vec<f64>,
    pub functionals: Functionals,
    pub identities: Vec<IdentityReport>,
    /// The same identities at doubled resolution, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refined_identities: Option<Vec<IdentityReport>>,
    pub ratios: RatioReport,
}

impl SampleOutcome {
    pub fn identities_pass(&self) -> bool {
        self.identities.iter().all(|r| r.pass)
    }

    /// Every identity residual shrinks on refinement, or both sit below the
    /// round-off floor.
    pub fn refinement_improves(&self, floor: f64) -> Option<bool> {
        let refined = self.refined_identities.as_ref()?;
        Some(self.identities.iter().zip(refined).all(|(c, f)| {
            f.rel_residual < c.rel_residual || c.rel_residual.max(f.rel_residual) <= floor
        }))
    }
}

/// Round-off floor for the refinement check.
pub const REFINEMENT_FLOOR: f64 = 1e-12;

/// Integral checks for `draws` random family members.
pub fn integral_sweep(
    m: &ManifoldSpec,
    family: &FamilySpec,
    draws: usize,
    seed: u64,
    resolution: &[usize],
    refine: bool,
    tol: &Tolerances,
) -> Result<Vec<SampleOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = sample_params(family, draws, &mut rng);
    let grid = build_grid(m, resolution)?;
    let cache = CachedFamily::on_grid(family, m, &grid);
    let fine = if refine {
        let res: Vec<usize> = resolution.iter().map(|r| 2 * r).collect();
        let fg = build_grid(m, &res)?;
        let fc = CachedFamily::on_grid(family, m, &fg);
        Some((fg, fc))
    } else {
        None
    };
    params
        .into_iter()
        .map(|p| {
            let fine = fine.as_ref().map(|(g, c)| (g, c));
            sample_outcome(&grid, &cache, fine, p, tol)
        })
        .collect()
}

/// Outcome for one member of a family cached on `grid` (and optionally on
/// a finer grid).
pub fn sample_outcome(
    grid: &Grid,
    cache: &CachedFamily<'_>,
    fine: Option<(&Grid, &CachedFamily<'_>)>,
    params: Vec<f64>,
    tol: &Tolerances,
) -> Result<SampleOutcome> {
    let fx = eval_functionals_cached(grid, &cache.member(&params)?, CurvatureTerm::Included)?;
    let identities = identity_chain(&fx, &grid.resolution, tol.identity);
    let refined_identities = match fine {
        Some((fg, fc)) => {
            let ffx = eval_functionals_cached(fg, &fc.member(&params)?, CurvatureTerm::Included)?;
            Some(identity_chain(&ffx, &fg.resolution, tol.identity))
        }
        None => None,
    };
    let ratios = RatioReport::new(&fx, grid.volume(), &grid.manifold_name, &params);
    Ok(SampleOutcome {
        params,
        functionals: fx,
        identities,
        refined_identities,
        ratios,
    })
}
