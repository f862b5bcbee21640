//! Integral functionals of a positive function, the identity chain relating
//! them, the inequality ratios, and the constant search.

pub mod estimate;
pub mod family;
pub mod sweep;

use serde::Serialize;

use crate::calculus::{
    covariant_hessian, endomorphism_norm_sq, integrand_terms, CurvatureTerm, ScalarField,
    FIELD_ORDER,
};
use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::quadrature::{Grid, Node};

pub use estimate::{estimate_constant, EstimateOptions, EstimateReport, Objective};
pub use family::{function_family, CachedFamily, FamilyKind, FamilySpec, Member};

/// Default relative tolerance of the integral identity chain.
pub const IDENTITY_TOLERANCE: f64 = 1e-7;
/// `B` below `B_FLOOR_FACTOR · Vol(M)` counts as a constant function.
pub const B_FLOOR_FACTOR: f64 = 1e-14;

/// The seven integrals appearing in the identity chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Functionals {
    /// `∫ |∇²√u|²`
    #[serde(rename = "A")]
    pub a: f64,
    /// `∫ u |∇² log u|²`
    #[serde(rename = "B")]
    pub b: f64,
    /// `∫ ∇²u(∇u, ∇u) / u²`
    #[serde(rename = "D")]
    pub d: f64,
    /// `∫ |∇u|⁴ / u³`
    #[serde(rename = "E")]
    pub e: f64,
    /// `∫ Ric(∇u, ∇u) / u`
    #[serde(rename = "F")]
    pub f: f64,
    /// `∫ g(∇u, ∇Δu) / u`
    #[serde(rename = "G")]
    pub g: f64,
    /// `∫ |∇u|² Δu / u²`
    #[serde(rename = "H")]
    pub h: f64,
}

/// The seven integrands at one node, in `A, B, D, E, F, G, H` order.
fn integrands(node: &Node, jet: &Jet, curvature: CurvatureTerm) -> Result<[f64; 7]> {
    let v = jet.value();
    if !(v > 0.0) {
        return Err(Error::PositivityViolation { value: v });
    }
    let geom = &node.geometry;
    let low = jet.truncate(2);
    let sqrt_h = covariant_hessian(geom, &low.sqrt()?);
    let log_h = covariant_hessian(geom, &low.ln()?);
    let t = integrand_terms(geom, jet, curvature);
    let g2 = t.grad_norm_sq;
    Ok([
        endomorphism_norm_sq(geom, &sqrt_h),
        v * endomorphism_norm_sq(geom, &log_h),
        t.hessian_grad_grad / (v * v),
        g2 * g2 / (v * v * v),
        t.ricci_grad / v,
        t.grad_dot_grad_laplacian / v,
        g2 * t.laplacian / (v * v),
    ])
}

/// Evaluates the seven functionals of `u` on `grid`.
pub fn eval_functionals(grid: &Grid, u: &ScalarField) -> Result<Functionals> {
    eval_functionals_with(grid, u, CurvatureTerm::Included)
}

pub fn eval_functionals_with(
    grid: &Grid,
    u: &ScalarField,
    curvature: CurvatureTerm,
) -> Result<Functionals> {
    let [a, b, d, e, f, g, h] = grid.integrate_nodes(|node| {
        let jet = u.jet_from_coords(&Jet::seed_point(&node.point, FIELD_ORDER))?;
        integrands(node, &jet, curvature)
    })?;
    Ok(Functionals {
        a,
        b,
        d,
        e,
        f,
        g,
        h,
    })
}

/// Functionals of a family member whose mode jets are cached on the grid
/// nodes; see [`CachedFamily::on_grid`].
pub fn eval_functionals_cached(
    grid: &Grid,
    member: &Member<'_>,
    curvature: CurvatureTerm,
) -> Result<Functionals> {
    let [a, b, d, e, f, g, h] =
        grid.integrate_indexed(|i, node| integrands(node, &member.jet(i)?, curvature))?;
    Ok(Functionals {
        a,
        b,
        d,
        e,
        f,
        g,
        h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentityName {
    /// `H = −2D + 2E`
    Drugie,
    /// `A = −¼G + E/16 − ¼F`
    Trzecie,
    /// `B = −G − D + E − F`
    Czwarte,
    /// `A = ¼B + ¼D − (3/16)E`
    Piate,
}

impl IdentityName {
    pub const ALL: [IdentityName; 4] = [
        IdentityName::Drugie,
        IdentityName::Trzecie,
        IdentityName::Czwarte,
        IdentityName::Piate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IdentityName::Drugie => "drugie",
            IdentityName::Trzecie => "trzecie",
            IdentityName::Czwarte => "czwarte",
            IdentityName::Piate => "piate",
        }
    }

    /// `(lhs, rhs)` of the identity.
    pub fn sides(self, fx: &Functionals) -> (f64, f64) {
        self.sides_with(fx, ChainCoefficients::Exact)
    }

    pub fn sides_with(self, fx: &Functionals, coeffs: ChainCoefficients) -> (f64, f64) {
        let Functionals {
            a,
            b,
            d,
            e,
            f,
            g,
            h,
        } = *fx;
        match (self, coeffs) {
            (IdentityName::Drugie, _) => (h, -2.0 * d + 2.0 * e),
            (IdentityName::Trzecie, ChainCoefficients::Exact) => {
                (a, -0.25 * g + 0.0625 * e - 0.25 * f)
            }
            (IdentityName::Trzecie, ChainCoefficients::Printed) => {
                (a, -0.25 * g + 0.25 * d - 0.125 * e - 0.25 * f)
            }
            (IdentityName::Czwarte, _) => (b, -g - d + e - f),
            (IdentityName::Piate, ChainCoefficients::Exact) => {
                (a, 0.25 * b + 0.25 * d - 0.1875 * e)
            }
            (IdentityName::Piate, ChainCoefficients::Printed) => {
                (a, 0.25 * b + 0.5 * d - 0.375 * e)
            }
        }
    }
}

/// Coefficients of the `D` and `E` terms in trzecie and piate.
///
/// `Printed` doubles the cross term when expanding `|∇²√u|²` (¼ where
/// ⅛ belongs), so both sides differ by `¼D − (3/16)E`. It is kept for the
/// dedicated test exhibiting that gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainCoefficients {
    #[default]
    Exact,
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: IdentityName,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_residual: f64,
    /// `abs_residual / max(1, |lhs|, |rhs|)`.
    pub rel_residual: f64,
    pub resolution: Vec<usize>,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    pub fn new(name: IdentityName, fx: &Functionals, resolution: &[usize], tolerance: f64) -> Self {
        Self::with_coefficients(name, fx, resolution, tolerance, ChainCoefficients::Exact)
    }

    pub fn with_coefficients(
        name: IdentityName,
        fx: &Functionals,
        resolution: &[usize],
        tolerance: f64,
        coeffs: ChainCoefficients,
    ) -> Self {
        let (lhs, rhs) = name.sides_with(fx, coeffs);
        let abs_residual = (lhs - rhs).abs();
        let rel_residual = abs_residual / 1f64.max(lhs.abs()).max(rhs.abs());
        IdentityReport {
            name,
            lhs,
            rhs,
            abs_residual,
            rel_residual,
            resolution: resolution.to_vec(),
            tolerance,
            pass: rel_residual < tolerance,
        }
    }
}

/// All four identity reports for already-evaluated functionals.
pub fn identity_chain(
    fx: &Functionals,
    resolution: &[usize],
    tolerance: f64,
) -> Vec<IdentityReport> {
    IdentityName::ALL
        .iter()
        .map(|&name| IdentityReport::new(name, fx, resolution, tolerance))
        .collect()
}

pub fn check_identity_chain(
    grid: &Grid,
    u: &ScalarField,
    tolerance: f64,
) -> Result<Vec<IdentityReport>> {
    let fx = eval_functionals(grid, u)?;
    Ok(identity_chain(&fx, &grid.resolution, tolerance))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    /// `A / B`
    pub main: Option<f64>,
    /// `E / B`
    pub bernis: Option<f64>,
    /// `D / B`
    pub cross: Option<f64>,
    pub manifold: String,
    pub params: Vec<f64>,
    #[serde(rename = "B_floor_hit")]
    pub b_floor_hit: bool,
}

impl RatioReport {
    /// Ratios of `fx`; all `None` when `B` is not above `B_FLOOR_FACTOR · volume`.
    pub fn new(fx: &Functionals, volume: f64, manifold: &str, params: &[f64]) -> Self {
        let floor = B_FLOOR_FACTOR * volume;
        let hit = !(fx.b > floor);
        let ratio = |num: f64| (!hit).then(|| num / fx.b);
        RatioReport {
            main: ratio(fx.a),
            bernis: ratio(fx.e),
            cross: ratio(fx.d),
            manifold: manifold.to_string(),
            params: params.to_vec(),
            b_floor_hit: hit,
        }
    }

    pub fn all_finite(&self) -> bool {
        [self.main, self.bernis, self.cross]
            .iter()
            .all(|r| r.is_some_and(f64::is_finite))
    }
}

/// Ratios `A/B`, `E/B`, `D/B`; fails with `DegenerateRatio` for numerically
/// constant `u`.
pub fn check_inequalities(grid: &Grid, u: &ScalarField, params: &[f64]) -> Result<RatioReport> {
    let fx = eval_functionals(grid, u)?;
    ratios(&fx, grid, params)
}

pub fn ratios(fx: &Functionals, grid: &Grid, params: &[f64]) -> Result<RatioReport> {
    let volume = grid.volume();
    let report = RatioReport::new(fx, volume, &grid.manifold_name, params);
    if report.b_floor_hit {
        return Err(Error::DegenerateRatio {
            b: fx.b,
            floor: B_FLOOR_FACTOR * volume,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{flat_torus, round_sphere};
    use crate::quadrature::build_grid;
    use std::f64::consts::PI;

    fn torus_grid() -> Grid {
        let m = flat_torus(2, &[2.0 * PI, 2.0 * PI]).unwrap();
        build_grid(&m, &m.default_resolution()).unwrap()
    }

    #[test]
    fn constant_function_has_zero_functionals() {
        let grid = torus_grid();
        let fx = eval_functionals(&grid, &ScalarField::constant(2, 3.0)).unwrap();
        for v in [fx.a, fx.b, fx.d, fx.e, fx.f, fx.g, fx.h] {
            assert_eq!(v, 0.0);
        }
        for r in identity_chain(&fx, &grid.resolution, IDENTITY_TOLERANCE) {
            assert!(r.pass);
            assert_eq!(r.abs_residual, 0.0);
        }
        assert!(matches!(
            check_inequalities(&grid, &ScalarField::constant(2, 3.0), &[]),
            Err(Error::DegenerateRatio { .. })
        ));
    }

    #[test]
    fn flat_identity_chain_is_tight() {
        let m = flat_torus(2, &[2.0 * PI, 2.0 * PI]).unwrap();
        let grid = torus_grid();
        let u = function_family(FamilyKind::ExpTrig, &[1.0, 0.5], &m).unwrap();
        let reports = check_identity_chain(&grid, &u, IDENTITY_TOLERANCE).unwrap();
        assert_eq!(reports.len(), 4);
        for r in reports {
            assert!(r.rel_residual < 1e-10, "{r:?}");
        }
        let fx = eval_functionals(&grid, &u).unwrap();
        assert!(fx.f.abs() < 1e-14);
        assert!(fx.a >= 0.0 && fx.b >= 0.0 && fx.e >= 0.0);
    }

    #[test]
    fn sphere_curvature_term_is_positive_and_essential() {
        let m = round_sphere(1.0).unwrap();
        let grid = build_grid(&m, &m.default_resolution()).unwrap();
        let family = FamilySpec::parse("shifted-trig:1:a=1:c=2").unwrap();
        let u = family.field(&m, &[1.0]).unwrap(); // 2 + cos θ
        let fx = eval_functionals(&grid, &u).unwrap();
        assert!(fx.f > 0.0);
        for r in identity_chain(&fx, &grid.resolution, IDENTITY_TOLERANCE) {
            assert!(r.pass, "{r:?}");
        }
        let zeroed = eval_functionals_with(&grid, &u, CurvatureTerm::Zeroed).unwrap();
        assert_eq!(zeroed.f, 0.0);
        let reports = identity_chain(&zeroed, &grid.resolution, IDENTITY_TOLERANCE);
        let trz = &reports[1];
        let czw = &reports[2];
        assert!((trz.abs_residual - 0.25 * fx.f.abs()).abs() < 1e-9);
        assert!((czw.abs_residual - fx.f.abs()).abs() < 1e-9);
    }

    #[test]
    fn printed_coefficients_miss_by_the_lemma_term() {
        let m = round_sphere(1.5).unwrap();
        let grid = build_grid(&m, &m.default_resolution()).unwrap();
        let u = function_family(FamilyKind::ExpTrig, &[0.7, -0.3, 0.4, 0.9, -0.6], &m).unwrap();
        let fx = eval_functionals(&grid, &u).unwrap();
        let gap = 0.25 * fx.d - 0.1875 * fx.e;
        assert!(gap.abs() > 1e-3);
        for name in [IdentityName::Trzecie, IdentityName::Piate] {
            let exact = IdentityReport::new(name, &fx, &grid.resolution, IDENTITY_TOLERANCE);
            let printed = IdentityReport::with_coefficients(
                name,
                &fx,
                &grid.resolution,
                IDENTITY_TOLERANCE,
                ChainCoefficients::Printed,
            );
            assert!(exact.pass, "{exact:?}");
            assert!(!printed.pass);
            assert!((printed.rhs - exact.rhs - gap).abs() < 1e-9);
        }
    }

    #[test]
    fn ratios_are_scale_invariant() {
        let m = flat_torus(2, &[2.0 * PI, 2.0 * PI]).unwrap();
        let grid = torus_grid();
        let u = function_family(FamilyKind::ExpTrig, &[0.8, -0.4, 0.3], &m).unwrap();
        let base = check_inequalities(&grid, &u, &[]).unwrap();
        let scaled = check_inequalities(&grid, &u.scaled(7.0), &[]).unwrap();
        for (x, y) in [
            (base.main, scaled.main),
            (base.bernis, scaled.bernis),
            (base.cross, scaled.cross),
        ] {
            let (x, y) = (x.unwrap(), y.unwrap());
            assert!((x - y).abs() < 1e-12 * x.abs());
        }
        assert!(base.all_finite());
    }

    #[test]
    fn small_amplitude_ratio_is_a_quarter() {
        let m = flat_torus(2, &[2.0 * PI, 2.0 * PI]).unwrap();
        let grid = torus_grid();
        let eps = 1e-3;
        let u = function_family(FamilyKind::ExpTrig, &[eps], &m).unwrap();
        let fx = eval_functionals(&grid, &u).unwrap();
        // B ≈ ε² ∫ sin² x₁ = 2π² ε²
        assert!((fx.b / (2.0 * PI * PI * eps * eps) - 1.0).abs() < 1e-2);
        let r = ratios(&fx, &grid, &[eps]).unwrap();
        assert!((r.main.unwrap() - 0.25).abs() < 1e-3);
    }
}
