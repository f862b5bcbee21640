//! Tensor-product quadrature against `dVol_g`.
//!
//! Periodic axes use the uniform rectangle rule, which is spectrally accurate
//! for smooth periodic integrands. Bounded axes use Gauss–Legendre nodes, an
//! open rule that never touches a singular endpoint. Geometry is cached per
//! node so repeated integrals over one grid only pay for the integrand.

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::ScalarField;
use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::manifold::{Geometry, ManifoldSpec};

pub const MIN_RESOLUTION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Uniform,
    GaussLegendre,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisRule {
    pub kind: RuleKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AxisRule {
    /// `count` equispaced nodes on `[lower, upper)`, endpoint excluded.
    pub fn uniform(lower: f64, upper: f64, count: usize) -> Self {
        let h = (upper - lower) / count as f64;
        AxisRule {
            kind: RuleKind::Uniform,
            nodes: (0..count).map(|i| lower + i as f64 * h).collect(),
            weights: vec![h; count],
        }
    }

    pub fn gauss_legendre(lower: f64, upper: f64, count: usize) -> Self {
        let (x, w) = gauss_legendre_unit(count);
        let half = 0.5 * (upper - lower);
        let mid = 0.5 * (upper + lower);
        AxisRule {
            kind: RuleKind::GaussLegendre,
            nodes: x.iter().map(|t| mid + half * t).collect(),
            weights: w.iter().map(|v| half * v).collect(),
        }
    }
}

/// Gauss–Legendre nodes (ascending) and weights on `[−1, 1]`, by Newton
/// iteration on the three-term recurrence.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * p - pm1) / (x * x - 1.0);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// A quadrature node with its cached geometry.
#[derive(Debug, Clone)]
pub struct Node {
    pub point: Vec<f64>,
    /// Rule weight times `√det g`.
    pub weight: f64,
    pub geometry: Geometry,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub manifold_name: String,
    pub resolution: Vec<usize>,
    pub axes: Vec<AxisRule>,
    nodes: Vec<Node>,
}

pub fn build_grid(m: &ManifoldSpec, resolution: &[usize]) -> Result<Grid> {
    let n = m.dim();
    if resolution.len() != n {
        return Err(Error::InvalidGrid(format!(
            "resolution has {} axes, manifold has {n}",
            resolution.len()
        )));
    }
    if let Some(&r) = resolution.iter().find(|&&r| r < MIN_RESOLUTION) {
        return Err(Error::InvalidGrid(format!(
            "resolution {r} is below the minimum {MIN_RESOLUTION}"
        )));
    }
    let axes: Vec<AxisRule> = (0..n)
        .map(|i| {
            let (lo, hi) = (m.chart.lower[i], m.chart.upper[i]);
            if m.chart.periodic[i] {
                AxisRule::uniform(lo, hi, resolution[i])
            } else {
                AxisRule::gauss_legendre(lo, hi, resolution[i])
            }
        })
        .collect();

    let total: usize = resolution.iter().product();
    let nodes = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut point = vec![0.0; n];
            let mut weight = 1.0;
            for axis in (0..n).rev() {
                let k = rem % resolution[axis];
                rem /= resolution[axis];
                point[axis] = axes[axis].nodes[k];
                weight *= axes[axis].weights[k];
            }
            let geometry = Geometry::at(m, &point)?;
            Ok(Node {
                weight: weight * geometry.density(),
                point,
                geometry,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Grid {
        manifold_name: m.name.clone(),
        resolution: resolution.to_vec(),
        axes,
        nodes,
    })
}

/// Same manifold, every axis refined by `factor`.
pub fn refine_grid(m: &ManifoldSpec, grid: &Grid, factor: usize) -> Result<Grid> {
    let res: Vec<usize> = grid.resolution.iter().map(|r| r * factor).collect();
    build_grid(m, &res)
}

/// Neumaier-compensated sum in slice order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl Grid {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    /// `∫ 1 dVol_g`.
    pub fn volume(&self) -> f64 {
        compensated_sum(self.nodes.iter().map(|n| n.weight))
    }

    /// `∫ f dVol_g` for a pointwise integrand.
    pub fn integrate<F>(&self, pointwise: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let [v] = self.integrate_nodes(|node| Ok([pointwise(&node.point)?]))?;
        Ok(v)
    }

    /// Integrates `N` quantities at once; node evaluations may run in
    /// parallel while the reduction order stays fixed.
    pub fn integrate_nodes<const N: usize, F>(&self, pointwise: F) -> Result<[f64; N]>
    where
        F: Fn(&Node) -> Result<[f64; N]> + Sync,
    {
        self.integrate_indexed(|_, node| pointwise(node))
    }

    /// As [`Grid::integrate_nodes`], also passing the node index.
    pub fn integrate_indexed<const N: usize, F>(&self, pointwise: F) -> Result<[f64; N]>
    where
        F: Fn(usize, &Node) -> Result<[f64; N]> + Sync,
    {
        let values = self
            .nodes
            .par_iter()
            .enumerate()
            .map(|(i, node)| pointwise(i, node).map(|v| v.map(|x| x * node.weight)))
            .collect::<Result<Vec<[f64; N]>>>()?;
        let mut out = [0.0; N];
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = compensated_sum(values.iter().map(|v| v[k]));
        }
        Ok(out)
    }
}

pub fn integrate<F>(grid: &Grid, pointwise: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    grid.integrate(pointwise)
}

/// Sign convention for integration by parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ByPartsSign {
    /// `∫ g(∇f, ∇u) = −∫ f Δu`, the divergence theorem with `Δ = tr ∇²`.
    Divergence,
    /// `∫ g(∇f, ∇u) = ∫ f Δu` as sometimes printed; fails on closed manifolds.
    Printed,
}

/// `∫ g(∇f, ∇u) dVol ± ∫ f Δu dVol`, which vanishes under the
/// [`ByPartsSign::Divergence`] convention.
pub fn byparts_residual(
    grid: &Grid,
    f: &ScalarField,
    u: &ScalarField,
    sign: ByPartsSign,
) -> Result<f64> {
    let [dot, f_lap] = grid.integrate_nodes(|node| {
        let coords = Jet::seed_point(&node.point, 2);
        let fj = f.jet_from_coords(&coords)?;
        let uj = u.jet_from_coords(&coords)?;
        let geom = &node.geometry;
        let n = geom.dim();
        let mut dot = 0.0;
        for i in 0..n {
            for j in 0..n {
                dot += geom.inverse(i, j) * fj.partial_value(&[i]) * uj.partial_value(&[j]);
            }
        }
        let lap =
            crate::calculus::metric_trace(geom, &crate::calculus::covariant_hessian(geom, &uj));
        Ok([dot, fj.value() * lap])
    })?;
    Ok(match sign {
        ByPartsSign::Divergence => dot + f_lap,
        ByPartsSign::Printed => dot - f_lap,
    })
}

/// One row of a refinement table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub resolution: Vec<usize>,
    pub value: f64,
    /// Change from the previous row.
    pub delta: Option<f64>,
    /// `log(|δ_{k−1}| / |δ_k|) / log(h_{k−1} / h_k)`.
    pub est_order: Option<f64>,
}

impl ConvergenceRow {
    pub fn resolution_label(&self) -> String {
        self.resolution
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }
}

/// Evaluates `quantity` on grids at each resolution and tabulates successive
/// differences.
pub fn convergence_study<F>(
    m: &ManifoldSpec,
    resolutions: &[Vec<usize>],
    quantity: F,
) -> Result<Vec<ConvergenceRow>>
where
    F: Fn(&Grid) -> Result<f64>,
{
    if resolutions.len() < 3 {
        return Err(Error::InvalidGrid(
            "a convergence study needs at least three resolutions".into(),
        ));
    }
    if resolutions
        .windows(2)
        .any(|w| w[1].iter().zip(&w[0]).any(|(b, a)| b <= a))
    {
        return Err(Error::InvalidGrid(
            "convergence resolutions must increase on every axis".into(),
        ));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(resolutions.len());
    for res in resolutions {
        let grid = build_grid(m, res)?;
        let value = quantity(&grid)?;
        let delta = rows.last().map(|prev| value - prev.value);
        let est_order = match (rows.last(), rows.len() >= 2) {
            (Some(prev), true) => {
                let prev_delta = prev.delta.unwrap_or(0.0);
                let d = delta.unwrap_or(0.0);
                let ratio = res[0] as f64 / prev.resolution[0] as f64;
                if prev_delta != 0.0 && d != 0.0 {
                    Some((prev_delta.abs() / d.abs()).ln() / ratio.ln())
                } else {
                    None
                }
            }
            _ => None,
        };
        rows.push(ConvergenceRow {
            resolution: res.clone(),
            value,
            delta,
            est_order,
        });
    }
    Ok(rows)
}

/// `[r, 2r, 4r, …]` with `refine` doublings, each axis scaled alike.
pub fn doubling_resolutions(base: &[usize], refine: usize) -> Vec<Vec<usize>> {
    (0..=refine)
        .map(|k| base.iter().map(|r| r << k).collect())
        .collect()
}
