//! Parametric families of positive smooth test functions.
//!
//! Spec strings: `<name>[:<k>][:a=<a1>,…][:c=<offset>][:box=<lo>,<hi>]`, e.g.
//! `exp-trig:4`, `exp-trig:2:a=1,0.5`, `shifted-trig:1:a=1:c=2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{ScalarField, FIELD_ORDER};
use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::manifold::{ManifoldKind, ManifoldSpec};
use crate::quadrature::Grid;

/// Lower bound kept by `shifted-trig` when its offset is chosen automatically.
pub const SHIFTED_MARGIN: f64 = 0.5;
/// Default search box for family parameters.
pub const DEFAULT_BOX: (f64, f64) = (-3.0, 3.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `u = exp(Σ a_k φ_k)`.
    ExpTrig,
    /// `u = c + Σ a_k φ_k`.
    ShiftedTrig,
    /// `u = exp(s · bump)` with a smooth bump of width `0.1 + |w|`.
    Peak,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::ExpTrig => "exp-trig",
            FamilyKind::ShiftedTrig => "shifted-trig",
            FamilyKind::Peak => "peak",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "exp-trig" => Ok(FamilyKind::ExpTrig),
            "shifted-trig" => Ok(FamilyKind::ShiftedTrig),
            "peak" => Ok(FamilyKind::Peak),
            other => Err(Error::InvalidFamily(format!("unknown family '{other}'"))),
        }
    }
}

/// A family together with its parameter count, optional fixed parameters
/// and search box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub n_params: usize,
    pub params: Option<Vec<f64>>,
    pub offset: Option<f64>,
    pub bounds: (f64, f64),
}

impl FamilySpec {
    pub fn new(kind: FamilyKind, n_params: usize) -> Self {
        FamilySpec {
            kind,
            n_params,
            params: None,
            offset: None,
            bounds: DEFAULT_BOX,
        }
    }

    pub fn parse(spec: &str) -> Result<Self> {
        let mut parts = spec.split(':');
        let kind = FamilyKind::parse(parts.next().unwrap_or_default())?;
        let mut n_params: Option<usize> = None;
        let mut params = None;
        let mut offset = None;
        let mut bounds = DEFAULT_BOX;
        let list = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidFamily(format!("cannot parse number '{t}'")))
                })
                .collect()
        };
        for part in parts {
            if let Some(v) = part.strip_prefix("a=") {
                params = Some(list(v)?);
            } else if let Some(v) = part.strip_prefix("c=") {
                let v = list(v)?;
                if v.len() != 1 {
                    return Err(Error::InvalidFamily("c= takes one value".into()));
                }
                offset = Some(v[0]);
            } else if let Some(v) = part.strip_prefix("box=") {
                let v = list(v)?;
                if v.len() != 2 || !(v[0] < v[1]) {
                    return Err(Error::InvalidFamily("box= takes lo,hi with lo < hi".into()));
                }
                bounds = (v[0], v[1]);
            } else if n_params.is_none() {
                n_params =
                    Some(part.trim().parse().map_err(|_| {
                        Error::InvalidFamily(format!("bad parameter count '{part}'"))
                    })?);
            } else {
                return Err(Error::InvalidFamily(format!("unexpected field '{part}'")));
            }
        }
        let n_params = match (n_params, &params) {
            (Some(k), Some(p)) if k != p.len() => {
                return Err(Error::InvalidFamily(format!(
                    "parameter count {k} does not match {} given values",
                    p.len()
                )))
            }
            (Some(k), _) => k,
            (None, Some(p)) => p.len(),
            (None, None) => 2,
        };
        if offset.is_some() && kind != FamilyKind::ShiftedTrig {
            return Err(Error::InvalidFamily(
                "c= only applies to shifted-trig".into(),
            ));
        }
        Ok(FamilySpec {
            kind,
            n_params,
            params,
            offset,
            bounds,
        })
    }

    pub fn with_params(&self, params: Vec<f64>) -> Self {
        FamilySpec {
            n_params: params.len(),
            params: Some(params),
            ..self.clone()
        }
    }

    /// Instantiates the family at `params`.
    pub fn field(&self, m: &ManifoldSpec, params: &[f64]) -> Result<ScalarField> {
        build_family(self.kind, params, self.offset, m)
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.n_params)?;
        if let Some(p) = &self.params {
            let s: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            write!(f, ":a={}", s.join(","))?;
        }
        if let Some(c) = self.offset {
            write!(f, ":c={c}")?;
        }
        if self.bounds != DEFAULT_BOX {
            write!(f, ":box={},{}", self.bounds.0, self.bounds.1)?;
        }
        Ok(())
    }
}

/// A basis function with `sup |φ| = 1`, evaluated on coordinate jets.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// `sin` or `cos` of `Σ k_i · 2π x_i / L_i`.
    Trig {
        wave: Vec<i32>,
        cosine: bool,
        periods: Vec<f64>,
    },
    /// Low-degree polynomial in `(X, Y, Z) = (sin θ cos φ, sin θ sin φ, cos θ)`.
    Sphere(SphereMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphereMode {
    Z,
    X,
    Y,
    Xz,
    Yz,
    Xy,
    XxMinusYy,
    Zonal2,
}

impl Mode {
    pub fn eval(&self, x: &[Jet]) -> Jet {
        match self {
            Mode::Trig {
                wave,
                cosine,
                periods,
            } => {
                let mut arg = Jet::zero(x[0].dim(), x[0].order());
                for (i, &k) in wave.iter().enumerate() {
                    if k != 0 {
                        arg.axpy(f64::from(k) * 2.0 * PI / periods[i], &x[i]);
                    }
                }
                if *cosine {
                    arg.cos()
                } else {
                    arg.sin()
                }
            }
            Mode::Sphere(mode) => {
                let (st, ct) = (x[0].sin(), x[0].cos());
                let xx = || &st * &x[1].cos();
                let yy = || &st * &x[1].sin();
                match mode {
                    SphereMode::Z => ct,
                    SphereMode::X => xx(),
                    SphereMode::Y => yy(),
                    SphereMode::Xz => (&xx() * &ct).scale(2.0),
                    SphereMode::Yz => (&yy() * &ct).scale(2.0),
                    SphereMode::Xy => (&xx() * &yy()).scale(2.0),
                    SphereMode::XxMinusYy => {
                        let (a, b) = (xx(), yy());
                        &(&a * &a) - &(&b * &b)
                    }
                    SphereMode::Zonal2 => (&ct * &ct).scale(1.5).add_scalar(-0.5),
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Mode::Trig { wave, cosine, .. } => {
                let terms: Vec<String> = wave
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k != 0)
                    .map(|(i, &k)| match k {
                        1 => format!("x{}", i + 1),
                        -1 => format!("-x{}", i + 1),
                        _ => format!("{k}x{}", i + 1),
                    })
                    .collect();
                format!(
                    "{}({})",
                    if *cosine { "cos" } else { "sin" },
                    terms.join("+").replace("+-", "-")
                )
            }
            Mode::Sphere(m) => format!("{m:?}"),
        }
    }
}

/// Ordered mode list for a manifold; the first `k` modes span a `k`-parameter
/// family.
pub fn modes(m: &ManifoldSpec) -> Vec<Mode> {
    match &m.kind {
        ManifoldKind::Sphere { .. } => [
            SphereMode::Z,
            SphereMode::X,
            SphereMode::Y,
            SphereMode::Xz,
            SphereMode::Yz,
            SphereMode::Xy,
            SphereMode::XxMinusYy,
            SphereMode::Zonal2,
        ]
        .into_iter()
        .map(Mode::Sphere)
        .collect(),
        _ => torus_modes(&(0..m.dim()).map(|i| m.chart.length(i)).collect::<Vec<_>>()),
    }
}

fn torus_modes(periods: &[f64]) -> Vec<Mode> {
    let n = periods.len();
    let unit = |i: usize, k: i32| {
        let mut w = vec![0; n];
        w[i] = k;
        w
    };
    let pair = |i: usize, sign: i32| {
        let mut w = vec![0; n];
        w[i] = 1;
        w[(i + 1) % n] = sign;
        w
    };
    let mk = |wave: Vec<i32>, cosine: bool| Mode::Trig {
        wave,
        cosine,
        periods: periods.to_vec(),
    };
    let mut out = Vec::new();
    if n == 1 {
        for k in 1..=4 {
            out.push(mk(unit(0, k), false));
            out.push(mk(unit(0, k), true));
        }
        return out;
    }
    // sin x1, cos x2, sin x3, …; then cos(x_i + x_{i+1}) so that wave-vector
    // triads appear early; then the complementary phases.
    for i in 0..n {
        out.push(mk(unit(i, 1), i % 2 == 1));
    }
    let cross = if n == 2 { 1 } else { n };
    for i in 0..cross {
        out.push(mk(pair(i, 1), true));
    }
    for i in 0..n {
        out.push(mk(unit(i, 1), i % 2 == 0));
    }
    for i in 0..cross {
        out.push(mk(pair(i, 1), false));
    }
    for i in 0..cross {
        out.push(mk(pair(i, -1), true));
    }
    for i in 0..n {
        out.push(mk(unit(i, 2), i % 2 == 1));
    }
    out
}

fn peak_bump(m: &ManifoldSpec, width: f64) -> impl Fn(&[Jet]) -> Jet + Send + Sync {
    let sphere = matches!(m.kind, ManifoldKind::Sphere { .. });
    let periods: Vec<f64> = (0..m.dim()).map(|i| m.chart.length(i)).collect();
    let inv_w2 = 1.0 / (width * width);
    move |x: &[Jet]| {
        let mut arg = Jet::zero(x[0].dim(), x[0].order());
        if sphere {
            arg.axpy(inv_w2, &x[0].cos().add_scalar(-1.0));
        } else {
            for (i, p) in periods.iter().enumerate() {
                arg.axpy(inv_w2, &x[i].scale(2.0 * PI / p).cos().add_scalar(-1.0));
            }
        }
        arg.exp()
    }
}

fn check_mode_count(
    kind: FamilyKind,
    given: usize,
    available: usize,
    m: &ManifoldSpec,
) -> Result<()> {
    if given > available {
        return Err(Error::InvalidFamily(format!(
            "{} supports at most {available} parameters on {}",
            kind.name(),
            m.name
        )));
    }
    Ok(())
}

/// Offset of a shifted-trig member, `None` for exp-trig.
fn trig_shift(kind: FamilyKind, params: &[f64], offset: Option<f64>) -> Result<Option<f64>> {
    if kind != FamilyKind::ShiftedTrig {
        return Ok(None);
    }
    let spread: f64 = params.iter().map(|a| a.abs()).sum();
    match offset {
        Some(c) if c - spread < SHIFTED_MARGIN => Err(Error::NonPositiveFamily {
            offset: c,
            min: c - spread,
            margin: SHIFTED_MARGIN,
        }),
        Some(c) => Ok(Some(c)),
        None => Ok(Some(SHIFTED_MARGIN + spread.max(0.5))),
    }
}

/// `exp(Σ aₖφₖ)` or `c + Σ aₖφₖ` from mode jets; zero coefficients are
/// expected to be filtered out by the caller.
fn combine_trig<'j>(
    shift: Option<f64>,
    terms: impl Iterator<Item = (f64, &'j Jet)>,
    dim: usize,
    order: usize,
) -> Jet {
    let mut acc = Jet::zero(dim, order);
    for (a, jet) in terms {
        acc.axpy(a, jet);
    }
    match shift {
        Some(c) => acc.add_scalar(c),
        None => acc.exp(),
    }
}

/// A family with its mode jets cached at a fixed set of points, so that
/// members differing only in their coefficients are cheap to evaluate.
/// Members agree bit for bit with [`FamilySpec::field`].
pub struct CachedFamily<'a> {
    spec: &'a FamilySpec,
    m: &'a ManifoldSpec,
    points: Vec<Vec<f64>>,
    order: usize,
    /// Per point, every mode jet; `None` for families without modes.
    modes: Option<Vec<Vec<Jet>>>,
}

impl<'a> CachedFamily<'a> {
    pub fn new(
        spec: &'a FamilySpec,
        m: &'a ManifoldSpec,
        points: Vec<Vec<f64>>,
        order: usize,
    ) -> Self {
        let modes = matches!(spec.kind, FamilyKind::ExpTrig | FamilyKind::ShiftedTrig).then(|| {
            let all = modes(m);
            let used = &all[..spec.n_params.min(all.len())];
            points
                .par_iter()
                .map(|x| {
                    let coords = Jet::seed_point(x, order);
                    used.iter().map(|mode| mode.eval(&coords)).collect()
                })
                .collect()
        });
        CachedFamily {
            spec,
            m,
            points,
            order,
            modes,
        }
    }

    /// Cache on the nodes of `grid`, at the order the functionals need.
    pub fn on_grid(spec: &'a FamilySpec, m: &'a ManifoldSpec, grid: &Grid) -> Self {
        let points = grid.nodes().iter().map(|n| n.point.clone()).collect();
        Self::new(spec, m, points, FIELD_ORDER)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Jets of the member at `params`, one per cached point.
    pub fn jets(&self, params: &[f64]) -> Result<Vec<Jet>> {
        let member = Member::new(self, params)?;
        (0..self.len())
            .into_par_iter()
            .map(|i| member.jet(i))
            .collect()
    }

    pub fn member(&self, params: &[f64]) -> Result<Member<'_>> {
        Member::new(self, params)
    }
}

/// One member of a [`CachedFamily`].
pub struct Member<'c> {
    cache: &'c CachedFamily<'c>,
    params: Vec<f64>,
    shift: Option<f64>,
    field: ScalarField,
}

impl<'c> Member<'c> {
    fn new(cache: &'c CachedFamily<'c>, params: &[f64]) -> Result<Self> {
        let field = cache.spec.field(cache.m, params)?;
        let shift = trig_shift(cache.spec.kind, params, cache.spec.offset)?;
        if let Some(modes) = cache.modes.as_ref().and_then(|m| m.first()) {
            if params.len() > modes.len() {
                return Err(Error::InvalidFamily(format!(
                    "{} parameters given to a family cached with {}",
                    params.len(),
                    modes.len()
                )));
            }
        }
        Ok(Member {
            cache,
            params: params.to_vec(),
            shift,
            field,
        })
    }

    /// Jet of the member at cached point `i`.
    pub fn jet(&self, i: usize) -> Result<Jet> {
        let cache = self.cache;
        match &cache.modes {
            Some(modes) => {
                let terms = self
                    .params
                    .iter()
                    .zip(&modes[i])
                    .filter(|(a, _)| **a != 0.0)
                    .map(|(a, j)| (*a, j));
                let jet = combine_trig(self.shift, terms, cache.m.dim(), cache.order);
                if !(jet.value() > 0.0) {
                    return Err(Error::PositivityViolation { value: jet.value() });
                }
                Ok(jet)
            }
            None => self.field.jet_at(&cache.points[i], cache.order),
        }
    }
}

/// Builds the family member with the given parameters on `m`.
pub fn function_family(kind: FamilyKind, params: &[f64], m: &ManifoldSpec) -> Result<ScalarField> {
    build_family(kind, params, None, m)
}

fn build_family(
    kind: FamilyKind,
    params: &[f64],
    offset: Option<f64>,
    m: &ManifoldSpec,
) -> Result<ScalarField> {
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidFamily("parameters must be finite".into()));
    }
    let dim = m.dim();
    let fmt_params = params
        .iter()
        .map(|p| p.to_string())
        .collect::<Vec<_>>()
        .join(",");
    match kind {
        FamilyKind::ExpTrig | FamilyKind::ShiftedTrig => {
            let all = modes(m);
            check_mode_count(kind, params.len(), all.len(), m)?;
            let shift = trig_shift(kind, params, offset)?;
            let terms: Arc<Vec<(f64, Mode)>> = Arc::new(params.iter().copied().zip(all).collect());
            let label = match shift {
                Some(c) => format!("shifted-trig[c={c};{fmt_params}]"),
                None => format!("exp-trig[{fmt_params}]"),
            };
            Ok(ScalarField::new(dim, label, true, move |x| {
                let jets: Vec<(f64, Jet)> = terms
                    .iter()
                    .filter(|(a, _)| *a != 0.0)
                    .map(|(a, mode)| (*a, mode.eval(x)))
                    .collect();
                Ok(combine_trig(
                    shift,
                    jets.iter().map(|(a, j)| (*a, j)),
                    x[0].dim(),
                    x[0].order(),
                ))
            }))
        }
        FamilyKind::Peak => {
            let (s, w) = match params {
                [] => (0.0, 0.4),
                [s] => (*s, 0.4),
                [s, w] => (*s, 0.1 + w.abs()),
                _ => {
                    return Err(Error::InvalidFamily(
                        "peak takes at most two parameters (s, w)".into(),
                    ))
                }
            };
            let bump = peak_bump(m, w);
            Ok(ScalarField::new(
                dim,
                format!("peak[{fmt_params}]"),
                true,
                move |x| Ok(bump(x).scale(s).exp()),
            ))
        }
    }
}
