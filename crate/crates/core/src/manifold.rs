//! Catalog of compact boundaryless manifolds, each given by a single global
//! chart and a closed-form metric, plus the pointwise geometry (inverse
//! metric, Christoffel symbols, Ricci tensor, volume density) derived from
//! the metric's jets.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::calculus::ScalarField;
use crate::error::{Error, Result};
use crate::jets::Jet;

/// Metric jets carry derivatives through this order.
pub const METRIC_ORDER: usize = 2;

/// Relative determinant threshold below which a metric counts as singular.
pub const SINGULAR_DET_TOLERANCE: f64 = 1e-12;

/// Coordinate box of a global chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub periodic: Vec<bool>,
    /// Axes whose endpoints are coordinate singularities.
    pub singular_axes: Vec<usize>,
}

impl ChartDomain {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        periodic: Vec<bool>,
        singular_axes: Vec<usize>,
    ) -> Result<Self> {
        let dim = lower.len();
        if dim == 0 || upper.len() != dim || periodic.len() != dim {
            return Err(Error::InvalidManifold(
                "chart bounds and periodicity flags must share a positive dimension".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidManifold(
                "chart lower bounds must be below upper bounds".into(),
            ));
        }
        for &axis in &singular_axes {
            if axis >= dim || periodic[axis] {
                return Err(Error::InvalidManifold(format!(
                    "axis {axis} cannot be both periodic and singular"
                )));
            }
        }
        Ok(ChartDomain {
            lower,
            upper,
            periodic,
            singular_axes,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_singular(&self, axis: usize) -> bool {
        self.singular_axes.contains(&axis)
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }
}

type MetricFn = dyn Fn(&[Jet]) -> Result<Vec<Jet>> + Send + Sync;

/// Symmetric matrix of metric jets as a function of the seeded chart
/// coordinates. Entries are row-major.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    eval: Arc<MetricFn>,
}

impl MetricField {
    /// `upper` returns the entries `g_ij` for `i ≤ j` in row-major order;
    /// the lower triangle is mirrored from it.
    pub fn from_upper_triangle<F>(dim: usize, upper: F) -> Self
    where
        F: Fn(&[Jet]) -> Result<Vec<Jet>> + Send + Sync + 'static,
    {
        let eval = move |x: &[Jet]| {
            let tri = upper(x)?;
            assert_eq!(tri.len(), dim * (dim + 1) / 2);
            let mut full = vec![Jet::zero(x[0].dim(), 0); dim * dim];
            let mut k = 0;
            for i in 0..dim {
                for j in i..dim {
                    full[i * dim + j] = tri[k].clone();
                    full[j * dim + i] = tri[k].clone();
                    k += 1;
                }
            }
            Ok(full)
        };
        MetricField {
            dim,
            eval: Arc::new(eval),
        }
    }

    pub fn diagonal<F>(dim: usize, diag: F) -> Self
    where
        F: Fn(&[Jet]) -> Result<Vec<Jet>> + Send + Sync + 'static,
    {
        MetricField::from_upper_triangle(dim, move |x| {
            let d = diag(x)?;
            let mut tri = Vec::with_capacity(dim * (dim + 1) / 2);
            for i in 0..dim {
                for j in i..dim {
                    tri.push(if i == j {
                        d[i].clone()
                    } else {
                        Jet::zero(x[0].dim(), x[0].order())
                    });
                }
            }
            Ok(tri)
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Metric jets at `x`, carried to [`METRIC_ORDER`].
    pub fn jets_at(&self, x: &[f64]) -> Result<Vec<Jet>> {
        (self.eval)(&Jet::seed_point(x, METRIC_ORDER))
    }
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("dim", &self.dim)
            .finish()
    }
}

/// Which catalog entry a manifold came from; function families use it to
/// pick period-compatible modes.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldKind {
    FlatTorus { lengths: Vec<f64> },
    Sphere { radius: f64 },
    TorusOfRevolution { major: f64, minor: f64 },
    ConformalTorus,
}

#[derive(Debug, Clone)]
pub struct ManifoldSpec {
    pub name: String,
    pub kind: ManifoldKind,
    pub chart: ChartDomain,
    pub metric: MetricField,
    pub known_volume: Option<f64>,
    pub known_constant_curvature: Option<f64>,
}

impl ManifoldSpec {
    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// Quadrature resolution used when none is requested.
    pub fn default_resolution(&self) -> Vec<usize> {
        match &self.kind {
            ManifoldKind::Sphere { .. } => vec![48, 96],
            _ => {
                let per_axis = match self.dim() {
                    1 | 2 => 64,
                    3 => 20,
                    _ => 12,
                };
                vec![per_axis; self.dim()]
            }
        }
    }

    /// Whether `x` lies inside the chart, with singular endpoints excluded.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|i| {
                let (lo, hi) = (self.chart.lower[i], self.chart.upper[i]);
                if self.chart.periodic[i] {
                    x[i].is_finite()
                } else {
                    x[i] > lo && x[i] < hi
                }
            })
    }
}

/// Flat torus `∏ [0, L_i)` with the identity metric.
pub fn flat_torus(dim: usize, lengths: &[f64]) -> Result<ManifoldSpec> {
    if dim == 0 || dim > crate::jets::MAX_DIM {
        return Err(Error::InvalidManifold(format!(
            "flat torus dimension must be in 1..={}",
            crate::jets::MAX_DIM
        )));
    }
    if lengths.len() != dim {
        return Err(Error::InvalidManifold(format!(
            "flat torus of dimension {dim} needs {dim} lengths, got {}",
            lengths.len()
        )));
    }
    if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidManifold("lengths must be positive".into()));
    }
    let chart = ChartDomain::new(vec![0.0; dim], lengths.to_vec(), vec![true; dim], vec![])?;
    let metric = MetricField::diagonal(dim, move |x| {
        Ok(vec![Jet::constant(1.0, x[0].dim(), x[0].order()); dim])
    });
    Ok(ManifoldSpec {
        name: format!(
            "flat-torus:{dim}:{}",
            lengths
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ),
        kind: ManifoldKind::FlatTorus {
            lengths: lengths.to_vec(),
        },
        chart,
        metric,
        known_volume: Some(lengths.iter().product()),
        known_constant_curvature: Some(0.0),
    })
}

/// Round sphere of radius `a` in coordinates `(θ, φ) ∈ (0, π) × [0, 2π)`.
pub fn round_sphere(radius: f64) -> Result<ManifoldSpec> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidManifold("radius must be positive".into()));
    }
    let chart = ChartDomain::new(
        vec![0.0, 0.0],
        vec![PI, 2.0 * PI],
        vec![false, true],
        vec![0],
    )?;
    let a2 = radius * radius;
    let metric = MetricField::diagonal(2, move |x| {
        let s = x[0].sin();
        Ok(vec![
            Jet::constant(a2, 2, x[0].order()),
            (&s * &s).scale(a2),
        ])
    });
    Ok(ManifoldSpec {
        name: format!("sphere:{radius}"),
        kind: ManifoldKind::Sphere { radius },
        chart,
        metric,
        known_volume: Some(4.0 * PI * a2),
        known_constant_curvature: Some(1.0 / a2),
    })
}

/// Torus of revolution with tube radius `minor` around a circle of radius
/// `major`; `g = diag(r², (R + r cos θ)²)`.
pub fn torus_of_revolution(major: f64, minor: f64) -> Result<ManifoldSpec> {
    if !(minor > 0.0) || !(major > minor) || !major.is_finite() {
        return Err(Error::InvalidManifold(
            "torus of revolution needs R > r > 0".into(),
        ));
    }
    let chart = ChartDomain::new(
        vec![0.0, 0.0],
        vec![2.0 * PI, 2.0 * PI],
        vec![true, true],
        vec![],
    )?;
    let metric = MetricField::diagonal(2, move |x| {
        let ring = x[0].cos().scale(minor).add_scalar(major);
        Ok(vec![
            Jet::constant(minor * minor, 2, x[0].order()),
            &ring * &ring,
        ])
    });
    Ok(ManifoldSpec {
        name: format!("torus-rev:{major},{minor}"),
        kind: ManifoldKind::TorusOfRevolution { major, minor },
        chart,
        metric,
        known_volume: Some(4.0 * PI * PI * major * minor),
        known_constant_curvature: None,
    })
}

/// Gaussian curvature of [`torus_of_revolution`] at latitude `theta`.
pub fn torus_of_revolution_curvature(major: f64, minor: f64, theta: f64) -> f64 {
    theta.cos() / (minor * (major + minor * theta.cos()))
}

/// Conformally flat torus `[0, 2π)²` with `g = e^{2φ} δ`.
pub fn conformal_torus(phi: ScalarField) -> Result<ManifoldSpec> {
    if phi.dim() != 2 {
        return Err(Error::InvalidManifold(
            "conformal factor must live on a 2-dimensional chart".into(),
        ));
    }
    let chart = ChartDomain::new(
        vec![0.0, 0.0],
        vec![2.0 * PI, 2.0 * PI],
        vec![true, true],
        vec![],
    )?;
    let name = format!("conformal-torus[{}]", phi.label());
    let metric = MetricField::diagonal(2, move |x| {
        let factor = phi.jet_from_coords(x)?.scale(2.0).exp();
        Ok(vec![factor.clone(), factor])
    });
    Ok(ManifoldSpec {
        name,
        kind: ManifoldKind::ConformalTorus,
        chart,
        metric,
        known_volume: None,
        known_constant_curvature: None,
    })
}

/// Conformal torus with `φ = amp_sin · sin x₁ + amp_cos · cos x₂`.
pub fn conformal_torus_trig(amp_sin: f64, amp_cos: f64) -> Result<ManifoldSpec> {
    let phi = ScalarField::new(
        2,
        format!("{amp_sin}*sin(x1)+{amp_cos}*cos(x2)"),
        false,
        move |x| Ok(&x[0].sin().scale(amp_sin) + &x[1].cos().scale(amp_cos)),
    );
    let mut m = conformal_torus(phi)?;
    m.name = if amp_cos == 0.0 {
        format!("conformal-torus:{amp_sin}")
    } else {
        format!("conformal-torus:{amp_sin},{amp_cos}")
    };
    if amp_sin == 0.0 && amp_cos == 0.0 {
        m.known_volume = Some(4.0 * PI * PI);
        m.known_constant_curvature = Some(0.0);
    }
    Ok(m)
}

/// Parses a catalog manifold from its colon-delimited spec string.
///
/// Grammar:
/// - `flat-torus:<n>[:<L1>,…,<Ln>]` (lengths default to 2π)
/// - `sphere:<a>`
/// - `torus-rev:<R>,<r>`
/// - `conformal-torus:<c>[,<d>]` with `φ = c sin x₁ + d cos x₂`
pub fn parse_manifold(spec: &str) -> Result<ManifoldSpec> {
    let mut parts = spec.split(':');
    let name = parts.next().unwrap_or_default();
    let rest: Vec<&str> = parts.collect();
    let numbers = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidManifold(format!("cannot parse number '{t}'")))
            })
            .collect()
    };
    let arity = |n: usize| -> Result<()> {
        if rest.len() == n {
            Ok(())
        } else {
            Err(Error::InvalidManifold(format!(
                "'{spec}': expected {n} parameter group(s)"
            )))
        }
    };
    match name {
        "flat-torus" => {
            if rest.is_empty() || rest.len() > 2 {
                return Err(Error::InvalidManifold(format!(
                    "'{spec}': expected flat-torus:<n>[:<L1>,...]"
                )));
            }
            let dim: usize = rest[0]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidManifold(format!("bad dimension '{}'", rest[0])))?;
            let lengths = match rest.get(1) {
                Some(s) => numbers(s)?,
                None => vec![2.0 * PI; dim],
            };
            flat_torus(dim, &lengths)
        }
        "sphere" => {
            arity(1)?;
            let v = numbers(rest[0])?;
            if v.len() != 1 {
                return Err(Error::InvalidManifold("sphere takes one radius".into()));
            }
            round_sphere(v[0])
        }
        "torus-rev" => {
            arity(1)?;
            let v = numbers(rest[0])?;
            if v.len() != 2 {
                return Err(Error::InvalidManifold("torus-rev takes R,r".into()));
            }
            torus_of_revolution(v[0], v[1])
        }
        "conformal-torus" => {
            arity(1)?;
            let v = numbers(rest[0])?;
            match v.as_slice() {
                [c] => conformal_torus_trig(*c, 0.0),
                [c, d] => conformal_torus_trig(*c, *d),
                _ => Err(Error::InvalidManifold(
                    "conformal-torus takes c or c,d".into(),
                )),
            }
        }
        other => Err(Error::InvalidManifold(format!(
            "unknown manifold '{other}'"
        ))),
    }
}

/// One line per catalog entry: grammar and description.
pub fn catalog() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "flat-torus:<n>[:<L1>,...,<Ln>]",
            "flat torus with identity metric, lengths default 2π",
        ),
        (
            "sphere:<a>",
            "round sphere of radius a, (θ, φ) chart, K = 1/a²",
        ),
        (
            "torus-rev:<R>,<r>",
            "torus of revolution, K(θ) = cos θ / (r (R + r cos θ))",
        ),
        (
            "conformal-torus:<c>[,<d>]",
            "g = exp(2φ) δ on [0,2π)², φ = c sin x₁ + d cos x₂",
        ),
    ]
}

/// Pointwise geometry at one chart point.
#[derive(Debug, Clone)]
pub struct Geometry {
    dim: usize,
    metric: Vec<f64>,
    /// `g^{ij}` jets through order 2.
    inverse: Vec<Jet>,
    /// `Γ^k_{ij}` jets through order 1, indexed `[k][i][j]`.
    christoffel: Vec<Jet>,
    ricci: Vec<f64>,
    density: f64,
}

impl Geometry {
    pub fn at(m: &ManifoldSpec, x: &[f64]) -> Result<Geometry> {
        let n = m.dim();
        assert_eq!(x.len(), n, "chart point has wrong dimension");
        let g = m.metric.jets_at(x)?;
        let metric: Vec<f64> = g.iter().map(Jet::value).collect();

        let (inverse, det) = invert_jet_matrix(&g, n).map_err(|det| Error::SingularMetric {
            point: x.to_vec(),
            det,
        })?;

        // dg[l][i][j] = ∂_l g_ij
        let dg: Vec<Jet> = (0..n)
            .flat_map(|l| g.iter().map(move |gij| gij.partial(l)))
            .collect();
        let dg_at = |l: usize, i: usize, j: usize| &dg[(l * n + i) * n + j];

        let mut christoffel = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = Jet::zero(n, 1);
                    for l in 0..n {
                        let bracket = &(dg_at(i, j, l) + dg_at(j, i, l)) - dg_at(l, i, j);
                        acc = &acc + &(&inverse[k * n + l] * &bracket);
                    }
                    christoffel.push(acc.scale(0.5));
                }
            }
        }

        let ricci = ricci_from_christoffel(&christoffel, n);
        Ok(Geometry {
            dim: n,
            metric,
            inverse,
            christoffel,
            ricci,
            density: det.sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self, i: usize, j: usize) -> f64 {
        self.metric[i * self.dim + j]
    }

    pub fn inverse(&self, i: usize, j: usize) -> f64 {
        self.inverse[i * self.dim + j].value()
    }

    pub fn inverse_jet(&self, i: usize, j: usize) -> &Jet {
        &self.inverse[i * self.dim + j]
    }

    pub fn christoffel(&self, k: usize, i: usize, j: usize) -> f64 {
        self.christoffel_jet(k, i, j).value()
    }

    pub fn christoffel_jet(&self, k: usize, i: usize, j: usize) -> &Jet {
        &self.christoffel[(k * self.dim + i) * self.dim + j]
    }

    pub fn ricci(&self, i: usize, j: usize) -> f64 {
        self.ricci[i * self.dim + j]
    }

    /// `√det g`.
    pub fn density(&self) -> f64 {
        self.density
    }
}

fn ricci_from_christoffel(gamma: &[Jet], n: usize) -> Vec<f64> {
    let at = |k: usize, i: usize, j: usize| &gamma[(k * n + i) * n + j];
    let mut ricci = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += at(j, i, k).partial_value(&[j]) - at(j, i, j).partial_value(&[k]);
                for m in 0..n {
                    acc += at(j, j, m).value() * at(m, i, k).value()
                        - at(j, k, m).value() * at(m, i, j).value();
                }
            }
            ricci[i * n + k] = acc;
        }
    }
    ricci
}

/// Inverse of a symmetric positive-definite jet matrix together with the
/// determinant value. Fails with the determinant when the matrix is singular
/// relative to its diagonal scale.
fn invert_jet_matrix(g: &[Jet], n: usize) -> std::result::Result<(Vec<Jet>, f64), f64> {
    let at = |i: usize, j: usize| &g[i * n + j];
    let scale = (0..n)
        .map(|i| at(i, i).value().abs())
        .fold(0.0_f64, f64::max)
        .powi(n as i32);

    if n <= 3 {
        let (det, adj) = match n {
            1 => (
                at(0, 0).clone(),
                vec![Jet::constant(1.0, g[0].dim(), g[0].order())],
            ),
            2 => {
                let det = &(at(0, 0) * at(1, 1)) - &(at(0, 1) * at(1, 0));
                (
                    det,
                    vec![at(1, 1).clone(), -at(0, 1), -at(1, 0), at(0, 0).clone()],
                )
            }
            _ => {
                let minor = |r0: usize, r1: usize, c0: usize, c1: usize| {
                    &(at(r0, c0) * at(r1, c1)) - &(at(r0, c1) * at(r1, c0))
                };
                // adj[i][j] = cofactor C_ji
                let adj = vec![
                    minor(1, 2, 1, 2),
                    -minor(0, 2, 1, 2),
                    minor(0, 1, 1, 2),
                    -minor(1, 2, 0, 2),
                    minor(0, 2, 0, 2),
                    -minor(0, 1, 0, 2),
                    minor(1, 2, 0, 1),
                    -minor(0, 2, 0, 1),
                    minor(0, 1, 0, 1),
                ];
                let det = &(&(at(0, 0) * &adj[0]) + &(at(0, 1) * &adj[3])) + &(at(0, 2) * &adj[6]);
                (det, adj)
            }
        };
        let d = det.value();
        if !(d > SINGULAR_DET_TOLERANCE * scale) {
            return Err(d);
        }
        let recip = det.compose(crate::jets::Univariate::Recip).map_err(|_| d)?;
        let inverse = adj.iter().map(|a| a * &recip).collect();
        return Ok((inverse, d));
    }

    let values: Vec<f64> = g.iter().map(Jet::value).collect();
    let (inv0, det) = invert_values(&values, n).ok_or(0.0)?;
    if !(det > SINGULAR_DET_TOLERANCE * scale) {
        return Err(det);
    }
    // (G₀ + δ)⁻¹ = Σ_k (−G₀⁻¹ δ)ᵏ G₀⁻¹; δᵏ vanishes below degree k.
    let dim = g[0].dim();
    let order = g[0].order();
    let inv0_jets: Vec<Jet> = inv0.iter().map(|&v| Jet::constant(v, dim, order)).collect();
    let delta: Vec<Jet> = g.iter().map(|j| j.add_scalar(-j.value())).collect();
    let neg_step = jet_matmul(&inv0_jets, &delta, n)
        .into_iter()
        .map(|j| -j)
        .collect::<Vec<_>>();
    let mut term = inv0_jets.clone();
    let mut sum = inv0_jets;
    for _ in 0..order {
        term = jet_matmul(&neg_step, &term, n);
        sum = sum.iter().zip(&term).map(|(a, b)| a + b).collect();
    }
    Ok((sum, det))
}

fn jet_matmul(a: &[Jet], b: &[Jet], n: usize) -> Vec<Jet> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Jet::zero(a[0].dim(), a[0].order().min(b[0].order()));
            for k in 0..n {
                acc = &acc + &(&a[i * n + k] * &b[k * n + j]);
            }
            out.push(acc);
        }
    }
    out
}

/// Gauss–Jordan inverse with partial pivoting; returns the inverse and the
/// determinant, or `None` for an exactly singular matrix.
fn invert_values(a: &[f64], n: usize) -> Option<(Vec<f64>, f64)> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| {
            m[r * n + col]
                .abs()
                .partial_cmp(&m[s * n + col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot * n + col] == 0.0 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
                inv.swap(pivot * n + k, col * n + k);
            }
            det = -det;
        }
        let p = m[col * n + col];
        det *= p;
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for k in 0..n {
                        m[r * n + k] -= f * m[col * n + k];
                        inv[r * n + k] -= f * inv[col * n + k];
                    }
                }
            }
        }
    }
    Some((inv, det))
}

/// `Γ^k_{ij}` at `x`, indexed `[k][i][j]` in a flat row-major vector.
pub fn christoffel_at(m: &ManifoldSpec, x: &[f64]) -> Result<Vec<f64>> {
    let geom = Geometry::at(m, x)?;
    Ok(geom.christoffel.iter().map(Jet::value).collect())
}

/// `Ric_{ij}` at `x`, row-major.
pub fn ricci_at(m: &ManifoldSpec, x: &[f64]) -> Result<Vec<f64>> {
    Ok(Geometry::at(m, x)?.ricci)
}

/// `√det g(x)`.
pub fn volume_density_at(m: &ManifoldSpec, x: &[f64]) -> Result<f64> {
    Ok(Geometry::at(m, x)?.density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_points(m: &ManifoldSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                (0..m.dim())
                    .map(|i| {
                        let (lo, hi) = (m.chart.lower[i], m.chart.upper[i]);
                        let pad = if m.chart.is_singular(i) { 1e-2 } else { 0.0 };
                        rng.gen_range(lo + pad..hi - pad)
                    })
                    .collect()
            })
            .collect()
    }

    fn catalog_sample() -> Vec<ManifoldSpec> {
        vec![
            flat_torus(2, &[2.0 * PI, 2.0 * PI]).unwrap(),
            flat_torus(3, &[1.0, 2.0, 3.0]).unwrap(),
            round_sphere(1.0).unwrap(),
            round_sphere(2.0).unwrap(),
            torus_of_revolution(2.0, 0.5).unwrap(),
            conformal_torus_trig(0.1, 0.0).unwrap(),
            conformal_torus_trig(0.3, -0.2).unwrap(),
        ]
    }

    #[test]
    fn flat_torus_basics() {
        let m = flat_torus(2, &[2.0 * PI, 2.0 * PI]).unwrap();
        assert_relative_eq!(m.known_volume.unwrap(), 4.0 * PI * PI);
        let x = [0.3, 4.0];
        assert!(christoffel_at(&m, &x).unwrap().iter().all(|&c| c == 0.0));
        assert!(ricci_at(&m, &x).unwrap().iter().all(|&c| c == 0.0));
        assert_eq!(volume_density_at(&m, &x).unwrap(), 1.0);
    }

    #[test]
    fn flat_torus_validation() {
        assert!(flat_torus(0, &[]).is_err());
        assert!(flat_torus(2, &[1.0]).is_err());
        assert!(flat_torus(1, &[-1.0]).is_err());
    }

    #[test]
    fn sphere_metric_and_christoffels() {
        let m = round_sphere(1.0).unwrap();
        let g = Geometry::at(&m, &[PI / 2.0, 1.0]).unwrap();
        assert_relative_eq!(g.metric(0, 0), 1.0);
        assert_relative_eq!(g.metric(1, 1), 1.0);
        assert_eq!(g.metric(0, 1), 0.0);

        let (theta, phi) = (0.7, 2.1);
        let gamma = christoffel_at(&m, &[theta, phi]).unwrap();
        let at = |k: usize, i: usize, j: usize| gamma[(k * 2 + i) * 2 + j];
        assert_relative_eq!(at(0, 1, 1), -theta.sin() * theta.cos(), epsilon = 1e-14);
        assert_relative_eq!(at(1, 0, 1), 1.0 / theta.tan(), epsilon = 1e-14);
        assert_relative_eq!(at(1, 1, 0), 1.0 / theta.tan(), epsilon = 1e-14);
        for (k, i, j) in [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 1, 1)] {
            assert!(at(k, i, j).abs() < 1e-15);
        }
    }

    #[test]
    fn sphere_ricci_is_curvature_times_metric() {
        for a in [1.0, 2.0] {
            let m = round_sphere(a).unwrap();
            for x in sample_points(&m, 50, 3) {
                let geom = Geometry::at(&m, &x).unwrap();
                for i in 0..2 {
                    for j in 0..2 {
                        let expected = geom.metric(i, j) / (a * a);
                        assert!((geom.ricci(i, j) - expected).abs() < 1e-12, "{x:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn sphere_density_and_validation() {
        let m = round_sphere(1.0).unwrap();
        assert_relative_eq!(volume_density_at(&m, &[0.4, 0.0]).unwrap(), 0.4_f64.sin());
        assert_eq!(
            round_sphere(-1.0).unwrap_err(),
            Error::InvalidManifold("radius must be positive".into())
        );
        assert!(matches!(
            Geometry::at(&m, &[0.0, 1.0]),
            Err(Error::SingularMetric { .. })
        ));
    }

    #[test]
    fn torus_of_revolution_curvature_matches_closed_form() {
        let (big, small) = (2.0, 0.5);
        let m = torus_of_revolution(big, small).unwrap();
        for theta in [0.0, PI / 2.0, PI, 1.3, 4.4] {
            let geom = Geometry::at(&m, &[theta, 0.9]).unwrap();
            let k = torus_of_revolution_curvature(big, small, theta);
            for i in 0..2 {
                for j in 0..2 {
                    assert!(
                        (geom.ricci(i, j) - k * geom.metric(i, j)).abs() < 1e-12,
                        "θ = {theta}"
                    );
                }
            }
            assert_relative_eq!(
                geom.density(),
                small * (big + small * theta.cos()),
                epsilon = 1e-14
            );
        }
        assert!(ricci_at(&m, &[PI / 2.0, 0.0])
            .unwrap()
            .iter()
            .all(|r| r.abs() < 1e-14));
        assert_relative_eq!(
            torus_of_revolution_curvature(big, small, PI),
            -1.0 / (small * (big - small))
        );
        assert!(torus_of_revolution(1.0, 1.0).is_err());
    }

    #[test]
    fn conformal_torus_curvature() {
        let c = 0.1;
        let m = conformal_torus_trig(c, 0.0).unwrap();
        for x in sample_points(&m, 50, 5) {
            let geom = Geometry::at(&m, &x).unwrap();
            let s = x[0].sin();
            // K = −e^{−2φ} Δ₀φ with Δ₀φ = −c sin x₁
            let k = c * (-2.0 * c * s).exp() * s;
            for i in 0..2 {
                for j in 0..2 {
                    assert!((geom.ricci(i, j) - k * geom.metric(i, j)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn conformal_torus_with_zero_factor_is_flat() {
        let m = conformal_torus_trig(0.0, 0.0).unwrap();
        let x = [1.0, 2.0];
        assert!(christoffel_at(&m, &x).unwrap().iter().all(|&c| c == 0.0));
        assert!(ricci_at(&m, &x).unwrap().iter().all(|&c| c == 0.0));
        assert_eq!(volume_density_at(&m, &x).unwrap(), 1.0);

        let constant = ScalarField::new(2, "0.4".into(), false, |x| {
            Ok(Jet::constant(0.4, x[0].dim(), x[0].order()))
        });
        let m = conformal_torus(constant).unwrap();
        assert!(christoffel_at(&m, &x).unwrap().iter().all(|&c| c == 0.0));
        assert_relative_eq!(volume_density_at(&m, &x).unwrap(), 0.8_f64.exp());
    }

    #[test]
    fn torsion_free_symmetric_ricci_and_metric_compatible() {
        for m in catalog_sample() {
            let n = m.dim();
            for x in sample_points(&m, 40, 11) {
                let geom = Geometry::at(&m, &x).unwrap();
                let jets = m.metric.jets_at(&x).unwrap();
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let (a, b) = (geom.christoffel(k, i, j), geom.christoffel(k, j, i));
                            assert!((a - b).abs() < 1e-14 * a.abs().max(1.0));
                        }
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        assert!((geom.ricci(i, j) - geom.ricci(j, i)).abs() < 1e-12);
                    }
                }
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut r = jets[i * n + j].partial_value(&[k]);
                            for l in 0..n {
                                r -= geom.christoffel(l, k, i) * geom.metric(l, j)
                                    + geom.christoffel(l, k, j) * geom.metric(i, l);
                            }
                            assert!(r.abs() < 1e-10, "{} at {x:?}: {r}", m.name);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn constant_curvature_catalog_on_dense_grid() {
        for m in catalog_sample() {
            let Some(k) = m.known_constant_curvature else {
                continue;
            };
            let n = m.dim();
            for a in 0..50 {
                for b in 0..50 {
                    let mut x: Vec<f64> = (0..n)
                        .map(|i| m.chart.lower[i] + 0.37 * m.chart.length(i))
                        .collect();
                    let frac = |t: usize| (t as f64 + 0.5) / 50.0;
                    x[0] = m.chart.lower[0] + frac(a) * m.chart.length(0);
                    x[1] = m.chart.lower[1] + frac(b) * m.chart.length(1);
                    let geom = Geometry::at(&m, &x).unwrap();
                    for i in 0..n {
                        for j in 0..n {
                            let expected = (n as f64 - 1.0) * k * geom.metric(i, j);
                            assert!((geom.ricci(i, j) - expected).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn general_inverse_matches_cofactor_route() {
        // a non-diagonal metric jet matrix on four variables inverted by the
        // series route, checked against g g⁻¹ = I through second order
        let x = Jet::seed_point(&[0.3, -0.2, 0.5, 0.1], 2);
        let n = 4;
        let mut g = vec![Jet::zero(4, 2); n * n];
        for i in 0..n {
            g[i * n + i] = (&x[i] * &x[i]).add_scalar(2.0 + i as f64);
            for j in i + 1..n {
                let off = (&x[i] * &x[j]).scale(0.1).add_scalar(0.05);
                g[i * n + j] = off.clone();
                g[j * n + i] = off;
            }
        }
        let (inv, det) = invert_jet_matrix(&g, n).unwrap();
        assert!(det > 0.0);
        let prod = jet_matmul(&g, &inv, n);
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                let p = &prod[i * n + j];
                assert!((p.value() - target).abs() < 1e-14);
                assert!(p.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
            }
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn parses_catalog_specs() {
        assert_eq!(parse_manifold("sphere:1.0").unwrap().dim(), 2);
        let t = parse_manifold("flat-torus:2:6.2832,6.2832").unwrap();
        assert_relative_eq!(t.known_volume.unwrap(), 6.2832 * 6.2832);
        assert_eq!(parse_manifold("flat-torus:3").unwrap().dim(), 3);
        assert!(parse_manifold("torus-rev:2.0,0.5").is_ok());
        assert!(parse_manifold("conformal-torus:0.1").is_ok());
        assert_eq!(
            parse_manifold("sphere:-1").unwrap_err().to_string(),
            "invalid manifold: radius must be positive"
        );
        assert!(parse_manifold("klein-bottle:1").is_err());
        assert!(parse_manifold("sphere:abc").is_err());
    }
}
