//! Covariant calculus of scalar fields at a chart point: gradient, covariant
//! Hessian, Laplace–Beltrami operator and the endomorphism norm, plus the
//! pointwise identities relating them.
//!
//! Sign convention: `Δ_g = tr ∇²`, so `Δ cos θ = −2 cos θ` on the unit sphere.
//! Third-order quantities (`∇Δu`, `Δ|∇u|²`) are assembled directly from the
//! order-3 jet of `u` and the order-2 jets of the metric.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::manifold::{Geometry, ManifoldSpec};

/// Scalar fields are evaluated to this order.
pub const FIELD_ORDER: usize = 3;

type FieldFn = dyn Fn(&[Jet]) -> Result<Jet> + Send + Sync;

/// A smooth function on a chart, expressed as a map from seeded coordinate
/// jets to the jet of the function.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    label: String,
    positivity_required: bool,
    eval: Arc<FieldFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("positivity_required", &self.positivity_required)
            .finish()
    }
}

impl ScalarField {
    pub fn new<F>(dim: usize, label: String, positivity_required: bool, eval: F) -> Self
    where
        F: Fn(&[Jet]) -> Result<Jet> + Send + Sync + 'static,
    {
        ScalarField {
            dim,
            label,
            positivity_required,
            eval: Arc::new(eval),
        }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        ScalarField::new(dim, format!("{value}"), value > 0.0, move |x| {
            Ok(Jet::constant(value, x[0].dim(), x[0].order()))
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn positivity_required(&self) -> bool {
        self.positivity_required
    }

    /// Evaluates the field on already-seeded coordinate jets.
    pub fn jet_from_coords(&self, coords: &[Jet]) -> Result<Jet> {
        let jet = (self.eval)(coords)?;
        if self.positivity_required && !(jet.value() > 0.0) {
            return Err(Error::PositivityViolation { value: jet.value() });
        }
        Ok(jet)
    }

    pub fn jet_at(&self, x: &[f64], order: usize) -> Result<Jet> {
        assert_eq!(x.len(), self.dim, "chart point has wrong dimension");
        self.jet_from_coords(&Jet::seed_point(x, order))
    }

    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.jet_at(x, 0)?.value())
    }

    /// Multiplies the field by a constant.
    pub fn scaled(&self, factor: f64) -> ScalarField {
        let inner = self.eval.clone();
        ScalarField::new(
            self.dim,
            format!("{factor}*({})", self.label),
            self.positivity_required && factor > 0.0,
            move |x| Ok(inner(x)?.scale(factor)),
        )
    }

    /// `(√u, log u)` with jets composed from those of `u`.
    pub fn derived_fields(&self) -> (ScalarField, ScalarField) {
        let (a, b) = (self.eval.clone(), self.eval.clone());
        let sqrt_u = ScalarField::new(self.dim, format!("sqrt({})", self.label), true, move |x| {
            a(x)?.sqrt()
        });
        let log_u = ScalarField::new(self.dim, format!("log({})", self.label), false, move |x| {
            b(x)?.ln()
        });
        (sqrt_u, log_u)
    }
}

/// Whether `Ric(∇u, ∇u)` enters the pointwise quantities. `Zeroed` exists to
/// demonstrate that curvature terms are genuinely exercised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurvatureTerm {
    #[default]
    Included,
    Zeroed,
}

/// `H_ij = ∂_i∂_j f − Γ^k_ij ∂_k f` for a jet of order ≥ 2.
pub fn covariant_hessian(geom: &Geometry, jet: &Jet) -> Vec<f64> {
    let n = geom.dim();
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut v = jet.partial_value(&[i, j]);
            for k in 0..n {
                v -= geom.christoffel(k, i, j) * jet.partial_value(&[k]);
            }
            h[i * n + j] = v;
            h[j * n + i] = v;
        }
    }
    h
}

/// `g^{ik} g^{jl} A_ij A_kl` for a bilinear form `A`.
pub fn endomorphism_norm_sq(geom: &Geometry, form: &[f64]) -> f64 {
    let n = geom.dim();
    // raised[i][l] = g^{ik} A_kl ; |A|² = raised[i][l] raised[l][i]
    let mut raised = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            raised[i * n + l] = (0..n).map(|k| geom.inverse(i, k) * form[k * n + l]).sum();
        }
    }
    let mut acc = 0.0;
    for i in 0..n {
        for l in 0..n {
            acc += raised[i * n + l] * raised[l * n + i];
        }
    }
    acc
}

/// Metric trace `g^{ij} A_ij`.
pub fn metric_trace(geom: &Geometry, form: &[f64]) -> f64 {
    let n = geom.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += geom.inverse(i, j) * form[i * n + j];
        }
    }
    acc
}

/// The scalars entering the integral functionals, from raw partials of an
/// order-3 jet without jet products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrandTerms {
    pub value: f64,
    /// `|∇u|²`
    pub grad_norm_sq: f64,
    /// `Δu`
    pub laplacian: f64,
    /// `∇²u(∇u, ∇u)`
    pub hessian_grad_grad: f64,
    /// `g(∇u, ∇Δu)`
    pub grad_dot_grad_laplacian: f64,
    /// `Ric(∇u, ∇u)`
    pub ricci_grad: f64,
}

pub fn integrand_terms(geom: &Geometry, u: &Jet, curvature: CurvatureTerm) -> IntegrandTerms {
    assert!(
        u.order() >= FIELD_ORDER,
        "integrand terms need an order-3 jet"
    );
    const N: usize = crate::jets::MAX_DIM;
    let n = geom.dim();
    let mut du = [0.0; N];
    let mut grad = [0.0; N];
    let mut ddu = [[0.0; N]; N];
    let mut hess = [[0.0; N]; N];
    for i in 0..n {
        du[i] = u.partial_value(&[i]);
    }
    for i in 0..n {
        grad[i] = (0..n).map(|j| geom.inverse(i, j) * du[j]).sum();
        for j in i..n {
            let raw = u.partial_value(&[i, j]);
            let h = raw
                - (0..n)
                    .map(|m| geom.christoffel(m, i, j) * du[m])
                    .sum::<f64>();
            ddu[i][j] = raw;
            ddu[j][i] = raw;
            hess[i][j] = h;
            hess[j][i] = h;
        }
    }

    let mut laplacian = 0.0;
    let mut hgg = 0.0;
    let mut g2 = 0.0;
    let mut ricci_grad = 0.0;
    for i in 0..n {
        g2 += grad[i] * du[i];
        for j in 0..n {
            laplacian += geom.inverse(i, j) * hess[i][j];
            hgg += hess[i][j] * grad[i] * grad[j];
            if curvature == CurvatureTerm::Included {
                ricci_grad += geom.ricci(i, j) * grad[i] * grad[j];
            }
        }
    }

    // ∂_k Δu = ∂_k g^{ij} H_ij + g^{ij} (∂_k ∂_i ∂_j u − ∂_k Γ^m_ij ∂_m u − Γ^m_ij ∂_k ∂_m u)
    let mut gdl = 0.0;
    for k in 0..n {
        let mut dk = 0.0;
        for i in 0..n {
            for j in 0..n {
                let ginv = geom.inverse_jet(i, j);
                let mut inner = u.partial_value(&[k, i, j]);
                for m in 0..n {
                    let gamma = geom.christoffel_jet(m, i, j);
                    inner -= gamma.partial_value(&[k]) * du[m] + gamma.value() * ddu[k][m];
                }
                dk += ginv.partial_value(&[k]) * hess[i][j] + ginv.value() * inner;
            }
        }
        gdl += grad[k] * dk;
    }

    IntegrandTerms {
        value: u.value(),
        grad_norm_sq: g2,
        laplacian,
        hessian_grad_grad: hgg,
        grad_dot_grad_laplacian: gdl,
        ricci_grad,
    }
}

/// Every covariant quantity of `u` needed at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCalculus {
    pub dim: usize,
    pub value: f64,
    /// `∂_i u`.
    pub differential: Vec<f64>,
    /// `∇u = g^{ij} ∂_j u`.
    pub gradient: Vec<f64>,
    /// `H_ij`, row-major.
    pub hessian: Vec<f64>,
    pub laplacian: f64,
    /// `|∇u|²`.
    pub grad_norm_sq: f64,
    /// `|∇²u|²`.
    pub hessian_norm_sq: f64,
    /// `Ric(∇u, ∇u)`.
    pub ricci_grad: f64,
    /// `∂_k |∇u|²`.
    pub grad_norm_sq_differential: Vec<f64>,
    /// `∂_k Δu`.
    pub laplacian_differential: Vec<f64>,
    /// `Δ |∇u|²`.
    pub laplacian_of_grad_norm_sq: f64,
}

impl PointCalculus {
    /// Assembles the point calculus from an order-3 jet of `u`.
    pub fn from_jet(geom: &Geometry, u: &Jet, curvature: CurvatureTerm) -> PointCalculus {
        assert!(
            u.order() >= FIELD_ORDER,
            "point calculus needs an order-3 jet"
        );
        let n = geom.dim();

        let du: Vec<Jet> = (0..n).map(|i| u.partial(i)).collect();
        let differential: Vec<f64> = du.iter().map(Jet::value).collect();
        let gradient: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| geom.inverse(i, j) * differential[j]).sum())
            .collect();

        // Hessian and Laplacian as order-1 jets.
        let mut hessian_jets = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut h = du[i].partial(j);
                for (k, duk) in du.iter().enumerate() {
                    h.axpy(-1.0, &(geom.christoffel_jet(k, i, j) * duk));
                }
                hessian_jets.push(h);
            }
        }
        let mut laplacian_jet = Jet::zero(n, 1);
        for i in 0..n {
            for j in 0..n {
                laplacian_jet.axpy(1.0, &(geom.inverse_jet(i, j) * &hessian_jets[i * n + j]));
            }
        }
        let hessian: Vec<f64> = hessian_jets.iter().map(Jet::value).collect();

        // |∇u|² as an order-2 jet.
        let mut grad_sq = Jet::zero(n, 2);
        for i in 0..n {
            for j in i..n {
                let w = if i == j { 1.0 } else { 2.0 };
                let term = &(geom.inverse_jet(i, j) * &du[i]) * &du[j];
                grad_sq.axpy(w, &term);
            }
        }
        let grad_norm_sq_differential: Vec<f64> =
            (0..n).map(|k| grad_sq.partial_value(&[k])).collect();
        let mut laplacian_of_grad_norm_sq = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut hij = grad_sq.partial_value(&[i, j]);
                for k in 0..n {
                    hij -= geom.christoffel(k, i, j) * grad_norm_sq_differential[k];
                }
                laplacian_of_grad_norm_sq += geom.inverse(i, j) * hij;
            }
        }

        let ricci_grad = match curvature {
            CurvatureTerm::Included => {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += geom.ricci(i, j) * gradient[i] * gradient[j];
                    }
                }
                acc
            }
            CurvatureTerm::Zeroed => 0.0,
        };

        PointCalculus {
            dim: n,
            value: u.value(),
            grad_norm_sq: grad_sq.value(),
            hessian_norm_sq: endomorphism_norm_sq(geom, &hessian),
            laplacian: laplacian_jet.value(),
            laplacian_differential: (0..n).map(|k| laplacian_jet.partial_value(&[k])).collect(),
            differential,
            gradient,
            hessian,
            ricci_grad,
            grad_norm_sq_differential,
            laplacian_of_grad_norm_sq,
        }
    }

    pub fn hessian_at(&self, i: usize, j: usize) -> f64 {
        self.hessian[i * self.dim + j]
    }

    /// `∇²u(v, w)` for vectors `v`, `w`.
    pub fn hessian_on(&self, v: &[f64], w: &[f64]) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.hessian[i * n + j] * v[i] * w[j];
            }
        }
        acc
    }

    /// `g(∇u, ∇f) = ∇u^i ∂_i f` for a covector `df`.
    pub fn pair_gradient(&self, covector: &[f64]) -> f64 {
        self.gradient.iter().zip(covector).map(|(a, b)| a * b).sum()
    }

    /// `∇²u(∇u, ∇u)`.
    pub fn hessian_grad_grad(&self) -> f64 {
        self.hessian_on(&self.gradient, &self.gradient)
    }

    /// `g(∇u, ∇Δu)`.
    pub fn grad_dot_grad_laplacian(&self) -> f64 {
        self.pair_gradient(&self.laplacian_differential)
    }

    /// `g(∇u, ∇|∇u|²)` against `2∇²u(∇u, ∇u)`.
    pub fn lemma_auxi(&self) -> Residual {
        let lhs = self.pair_gradient(&self.grad_norm_sq_differential);
        let rhs = 2.0 * self.hessian_grad_grad();
        Residual::new(lhs, rhs, rhs.abs())
    }

    /// `½Δ|∇u|²` against `g(∇u, ∇Δu) + |∇²u|² + Ric(∇u, ∇u)`.
    pub fn bochner(&self) -> Residual {
        let terms = [
            0.5 * self.laplacian_of_grad_norm_sq,
            self.grad_dot_grad_laplacian(),
            self.hessian_norm_sq,
            self.ricci_grad,
        ];
        let scale = terms.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        Residual::new(terms[0], terms[1] + terms[2] + terms[3], scale)
    }

    /// `(|Δu|², n |∇²u|²)`.
    pub fn trace_bound(&self) -> (f64, f64) {
        (
            self.laplacian * self.laplacian,
            self.dim as f64 * self.hessian_norm_sq,
        )
    }
}

/// One pointwise identity `lhs = rhs`, normalized by `max(1, scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub scale: f64,
}

impl Residual {
    fn new(lhs: f64, rhs: f64, scale: f64) -> Self {
        Residual {
            lhs,
            rhs,
            residual: lhs - rhs,
            scale: scale.max(lhs.abs()).max(rhs.abs()).max(1.0),
        }
    }

    pub fn relative(&self) -> f64 {
        self.residual.abs() / self.scale
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.relative() <= tolerance
    }
}

fn laplacian_of(geom: &Geometry, jet: &Jet) -> f64 {
    metric_trace(geom, &covariant_hessian(geom, jet))
}

/// `Δ log u` against `Δu/u − |∇u|²/u²`, from the order-3 jet of `u`.
pub fn log_identity_at(geom: &Geometry, u: &Jet, pc: &PointCalculus) -> Result<Residual> {
    let lhs = laplacian_of(geom, &u.truncate(2).ln()?);
    let v = pc.value;
    let terms = [pc.laplacian / v, pc.grad_norm_sq / (v * v)];
    let scale = terms[0].abs().max(terms[1].abs());
    Ok(Residual::new(lhs, terms[0] - terms[1], scale))
}

/// `Δ√u` against `½Δu/√u − |∇u|²/(4u^{3/2})`.
pub fn sqrt_identity_at(geom: &Geometry, u: &Jet, pc: &PointCalculus) -> Result<Residual> {
    let lhs = laplacian_of(geom, &u.truncate(2).sqrt()?);
    let v = pc.value;
    let s = v.sqrt();
    let terms = [0.5 * pc.laplacian / s, pc.grad_norm_sq / (4.0 * v * s)];
    let scale = terms[0].abs().max(terms[1].abs());
    Ok(Residual::new(lhs, terms[0] - terms[1], scale))
}

fn prepare(m: &ManifoldSpec, u: &ScalarField, x: &[f64]) -> Result<(Geometry, Jet)> {
    let jet = u.jet_at(x, FIELD_ORDER)?;
    Ok((Geometry::at(m, x)?, jet))
}

pub fn point_calculus(m: &ManifoldSpec, u: &ScalarField, x: &[f64]) -> Result<PointCalculus> {
    point_calculus_with(m, u, x, CurvatureTerm::Included)
}

pub fn point_calculus_with(
    m: &ManifoldSpec,
    u: &ScalarField,
    x: &[f64],
    curvature: CurvatureTerm,
) -> Result<PointCalculus> {
    let (geom, jet) = prepare(m, u, x)?;
    Ok(PointCalculus::from_jet(&geom, &jet, curvature))
}

pub fn lemma_auxi_residual(m: &ManifoldSpec, u: &ScalarField, x: &[f64]) -> Result<Residual> {
    Ok(point_calculus(m, u, x)?.lemma_auxi())
}

pub fn bochner_residual(m: &ManifoldSpec, u: &ScalarField, x: &[f64]) -> Result<Residual> {
    Ok(point_calculus(m, u, x)?.bochner())
}

fn require_positive(pc: &PointCalculus) -> Result<()> {
    if pc.value > 0.0 {
        Ok(())
    } else {
        Err(Error::PositivityViolation { value: pc.value })
    }
}

pub fn log_identity_residual(m: &ManifoldSpec, u: &ScalarField, x: &[f64]) -> Result<Residual> {
    let (geom, jet) = prepare(m, u, x)?;
    let pc = PointCalculus::from_jet(&geom, &jet, CurvatureTerm::Included);
    require_positive(&pc)?;
    log_identity_at(&geom, &jet, &pc)
}

pub fn sqrt_identity_residual(m: &ManifoldSpec, u: &ScalarField, x: &[f64]) -> Result<Residual> {
    let (geom, jet) = prepare(m, u, x)?;
    let pc = PointCalculus::from_jet(&geom, &jet, CurvatureTerm::Included);
    require_positive(&pc)?;
    sqrt_identity_at(&geom, &jet, &pc)
}

pub fn trace_bound_check(m: &ManifoldSpec, u: &ScalarField, x: &[f64]) -> Result<(f64, f64)> {
    Ok(point_calculus(m, u, x)?.trace_bound())
}

/// `(√u, log u)`.
pub fn derived_fields(u: &ScalarField) -> (ScalarField, ScalarField) {
    u.derived_fields()
}
