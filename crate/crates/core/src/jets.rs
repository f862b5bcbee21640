//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] carries the value of a function together with all of its raw
//! partial derivatives `∂^α f` for multi-indices `|α| ≤ order` (not divided
//! by `α!`). Arithmetic on jets propagates derivatives exactly, so anything
//! built from seeded coordinate jets is differentiated to round-off.
//!
//! Coefficients are stored densely, sorted by total degree first. The layout
//! of an order-`q` jet is therefore a prefix of the order-3 layout, which
//! makes truncation a slice and lets every order share one table.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Highest derivative order a jet can carry.
pub const MAX_ORDER: usize = 3;
/// Largest number of chart variables supported by the jet tables.
pub const MAX_DIM: usize = 8;

const NONE: usize = usize::MAX;

/// Multi-index tables for one dimension.
#[derive(Debug)]
struct Layout {
    dim: usize,
    alphas: Vec<SmallVec<[u8; 4]>>,
    len_by_order: [usize; MAX_ORDER + 1],
    /// `shift[i][k]` is the index of `alphas[k] + e_i`, or `NONE` at top degree.
    shift: Vec<Vec<usize>>,
    /// Leibniz table `(out, a, b, multinomial)`, sorted by `out`.
    leibniz: Vec<(u16, u16, u16, f64)>,
    leibniz_end: [usize; MAX_ORDER + 1],
}

fn binomial(n: u8, k: u8) -> f64 {
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * f64::from(n - j) / f64::from(j + 1);
    }
    acc
}

impl Layout {
    fn build(dim: usize) -> Self {
        let mut alphas: Vec<SmallVec<[u8; 4]>> = Vec::new();
        let mut len_by_order = [0; MAX_ORDER + 1];
        for deg in 0..=MAX_ORDER {
            let mut current = SmallVec::from_elem(0u8, dim);
            push_with_degree(&mut alphas, &mut current, 0, deg as u8);
            len_by_order[deg] = alphas.len();
        }

        let index_of = |alpha: &[u8]| alphas.iter().position(|a| a.as_slice() == alpha);
        let shift = (0..dim)
            .map(|i| {
                alphas
                    .iter()
                    .map(|a| {
                        let mut b = a.clone();
                        b[i] += 1;
                        index_of(&b).unwrap_or(NONE)
                    })
                    .collect()
            })
            .collect();

        let mut leibniz = Vec::new();
        let mut leibniz_end = [0; MAX_ORDER + 1];
        let mut deg_marker = 0;
        for (out, gamma) in alphas.iter().enumerate() {
            for (ia, alpha) in alphas.iter().enumerate() {
                if alpha.iter().zip(gamma.iter()).any(|(a, g)| a > g) {
                    continue;
                }
                let beta: SmallVec<[u8; 4]> =
                    gamma.iter().zip(alpha.iter()).map(|(g, a)| g - a).collect();
                let ib = index_of(&beta).expect("complement multi-index exists");
                let coef: f64 = gamma
                    .iter()
                    .zip(alpha.iter())
                    .map(|(&g, &a)| binomial(g, a))
                    .product();
                leibniz.push((out as u16, ia as u16, ib as u16, coef));
            }
            while deg_marker <= MAX_ORDER && out + 1 == len_by_order[deg_marker] {
                leibniz_end[deg_marker] = leibniz.len();
                deg_marker += 1;
            }
        }

        Layout {
            dim,
            alphas,
            len_by_order,
            shift,
            leibniz,
            leibniz_end,
        }
    }
}

fn push_with_degree(
    out: &mut Vec<SmallVec<[u8; 4]>>,
    current: &mut SmallVec<[u8; 4]>,
    axis: usize,
    remaining: u8,
) {
    let dim = current.len();
    if axis + 1 == dim {
        current[axis] = remaining;
        out.push(current.clone());
        current[axis] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[axis] = k;
        push_with_degree(out, current, axis + 1, remaining - k);
    }
    current[axis] = 0;
}

fn layout(dim: usize) -> &'static Layout {
    static LAYOUTS: [OnceLock<Layout>; MAX_DIM] = [const { OnceLock::new() }; MAX_DIM];
    assert!(
        (1..=MAX_DIM).contains(&dim),
        "jet dimension {dim} outside 1..={MAX_DIM}"
    );
    LAYOUTS[dim - 1].get_or_init(|| Layout::build(dim))
}

/// Number of multi-indices with `|α| ≤ order` in `dim` variables.
pub fn coeff_count(dim: usize, order: usize) -> usize {
    layout(dim).len_by_order[order.min(MAX_ORDER)]
}

/// Univariate functions that can be composed with a jet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Univariate {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Recip,
    Pow(f64),
}

impl Univariate {
    /// Value and first three derivatives at `v`.
    fn derivatives(self, v: f64) -> Result<[f64; 4]> {
        Ok(match self {
            Univariate::Exp => {
                let e = v.exp();
                [e, e, e, e]
            }
            Univariate::Log => {
                if !(v > 0.0) {
                    return Err(Error::PositivityViolation { value: v });
                }
                let r = 1.0 / v;
                [v.ln(), r, -r * r, 2.0 * r * r * r]
            }
            Univariate::Sqrt => {
                if !(v > 0.0) {
                    return Err(Error::PositivityViolation { value: v });
                }
                let s = v.sqrt();
                let s3 = s * v;
                [s, 0.5 / s, -0.25 / s3, 0.375 / (s3 * v)]
            }
            Univariate::Sin => {
                let (s, c) = v.sin_cos();
                [s, c, -s, -c]
            }
            Univariate::Cos => {
                let (s, c) = v.sin_cos();
                [c, -s, -c, s]
            }
            Univariate::Recip => {
                if v == 0.0 {
                    return Err(Error::DegenerateValue);
                }
                let r = 1.0 / v;
                [r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r]
            }
            Univariate::Pow(p) => {
                if p.fract() != 0.0 && !(v > 0.0) {
                    return Err(Error::PositivityViolation { value: v });
                }
                [
                    v.powf(p),
                    p * v.powf(p - 1.0),
                    p * (p - 1.0) * v.powf(p - 2.0),
                    p * (p - 1.0) * (p - 2.0) * v.powf(p - 3.0),
                ]
            }
        })
    }
}

/// Truncated Taylor expansion storing raw partial derivatives.
#[derive(Clone)]
pub struct Jet {
    layout: &'static Layout,
    order: u8,
    coeffs: SmallVec<[f64; 20]>,
}

impl std::fmt::Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.dim())
            .field("order", &self.order)
            .field("coeffs", &self.coeffs.as_slice())
            .finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.order == other.order && self.coeffs == other.coeffs
    }
}

impl Jet {
    /// Jet of the constant function `value`.
    pub fn constant(value: f64, dim: usize, order: usize) -> Jet {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        let layout = layout(dim);
        let mut coeffs = SmallVec::from_elem(0.0, layout.len_by_order[order]);
        coeffs[0] = value;
        Jet {
            layout,
            order: order as u8,
            coeffs,
        }
    }

    /// Jet of the zero function.
    pub fn zero(dim: usize, order: usize) -> Jet {
        Jet::constant(0.0, dim, order)
    }

    /// Jet of the coordinate function `x_index` evaluated at `value`.
    pub fn seed(index: usize, value: f64, dim: usize, order: usize) -> Result<Jet> {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        let mut jet = Jet::constant(value, dim, order);
        if order >= 1 {
            let slot = jet.layout.shift[index][0];
            jet.coeffs[slot] = 1.0;
        }
        Ok(jet)
    }

    /// Seeds every coordinate of `point` at once.
    pub fn seed_point(point: &[f64], order: usize) -> Vec<Jet> {
        let dim = point.len();
        point
            .iter()
            .enumerate()
            .map(|(i, &x)| Jet::seed(i, x, dim, order).expect("index within dimension"))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn order(&self) -> usize {
        usize::from(self.order)
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// All coefficients in storage order.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Multi-indices matching [`Jet::coeffs`] entry by entry.
    pub fn multi_indices(&self) -> impl Iterator<Item = &[u8]> {
        self.layout.alphas[..self.coeffs.len()]
            .iter()
            .map(|a| a.as_slice())
    }

    /// Raw partial `∂^α f` for the multi-index `alpha`, or `None` if `|α|`
    /// exceeds the order.
    pub fn coeff(&self, alpha: &[u8]) -> Option<f64> {
        assert_eq!(alpha.len(), self.dim());
        self.multi_indices()
            .position(|a| a == alpha)
            .map(|k| self.coeffs[k])
    }

    fn slot(&self, axes: &[usize]) -> usize {
        assert!(axes.len() <= self.order(), "derivative beyond jet order");
        axes.iter().fold(0, |k, &axis| self.layout.shift[axis][k])
    }

    /// Raw partial derivative along the listed axes, e.g. `&[0, 1]` for `∂₀∂₁ f`.
    pub fn partial_value(&self, axes: &[usize]) -> f64 {
        self.coeffs[self.slot(axes)]
    }

    /// `∂_i f` as a jet of one lower order.
    pub fn partial(&self, axis: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        assert!(axis < self.dim());
        let order = self.order - 1;
        let len = self.layout.len_by_order[usize::from(order)];
        let shift = &self.layout.shift[axis];
        let coeffs = (0..len).map(|k| self.coeffs[shift[k]]).collect();
        Jet {
            layout: self.layout,
            order,
            coeffs,
        }
    }

    /// Drops every coefficient above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order());
        Jet {
            layout: self.layout,
            order: order as u8,
            coeffs: SmallVec::from_slice(&self.coeffs[..self.layout.len_by_order[order]]),
        }
    }

    fn check_dim(&self, other: &Jet) {
        assert_eq!(
            self.dim(),
            other.dim(),
            "jet dimension mismatch: {} vs {}",
            self.dim(),
            other.dim()
        );
    }

    fn zip_with(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        self.check_dim(other);
        let order = self.order.min(other.order);
        let len = self.layout.len_by_order[usize::from(order)];
        let coeffs = self.coeffs[..len]
            .iter()
            .zip(&other.coeffs[..len])
            .map(|(&a, &b)| f(a, b))
            .collect();
        Jet {
            layout: self.layout,
            order,
            coeffs,
        }
    }

    /// Product by the Leibniz rule, truncated at the lower of the two orders.
    pub fn mul_jet(&self, other: &Jet) -> Jet {
        self.check_dim(other);
        let order = usize::from(self.order.min(other.order));
        let mut coeffs = SmallVec::from_elem(0.0, self.layout.len_by_order[order]);
        for &(out, a, b, c) in &self.layout.leibniz[..self.layout.leibniz_end[order]] {
            coeffs[usize::from(out)] +=
                c * self.coeffs[usize::from(a)] * other.coeffs[usize::from(b)];
        }
        Jet {
            layout: self.layout,
            order: order as u8,
            coeffs,
        }
    }

    pub fn scale(&self, factor: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= factor);
        out
    }

    pub fn add_scalar(&self, value: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += value;
        out
    }

    /// In-place `self += factor * other`, truncating to the lower order.
    pub fn axpy(&mut self, factor: f64, other: &Jet) {
        self.check_dim(other);
        if other.order < self.order {
            *self = self.truncate(other.order());
        }
        for (c, o) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *c += factor * o;
        }
    }

    /// Quotient `self / other`.
    pub fn div(&self, other: &Jet) -> Result<Jet> {
        if other.value() == 0.0 {
            return Err(Error::DegenerateValue);
        }
        Ok(self.mul_jet(&other.compose(Univariate::Recip)?))
    }

    /// Jet of `func ∘ self`.
    ///
    /// With `δ = f − f(x)`, `h(f) = Σ_k h⁽ᵏ⁾(f(x)) δᵏ / k!`; `δᵏ` has no terms
    /// below degree `k`, so the series truncated at the order is exact.
    pub fn compose(&self, func: Univariate) -> Result<Jet> {
        let h = func.derivatives(self.value())?;
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;

        let mut out = Jet::constant(h[0], self.dim(), self.order());
        if self.order == 0 {
            return Ok(out);
        }
        out.axpy(h[1], &delta);
        let mut power = delta.clone();
        let mut factorial = 1.0;
        for (k, &hk) in h.iter().enumerate().take(self.order() + 1).skip(2) {
            power = power.mul_jet(&delta);
            factorial *= k as f64;
            out.axpy(hk / factorial, &power);
        }
        Ok(out)
    }

    pub fn exp(&self) -> Jet {
        self.compose(Univariate::Exp).expect("exp is total")
    }

    pub fn ln(&self) -> Result<Jet> {
        self.compose(Univariate::Log)
    }

    pub fn sqrt(&self) -> Result<Jet> {
        self.compose(Univariate::Sqrt)
    }

    pub fn sin(&self) -> Jet {
        self.compose(Univariate::Sin).expect("sin is total")
    }

    pub fn cos(&self) -> Jet {
        self.compose(Univariate::Cos).expect("cos is total")
    }

    pub fn powf(&self, p: f64) -> Result<Jet> {
        self.compose(Univariate::Pow(p))
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_jet(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($trait:ident, $method:ident) => {
        impl $trait for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
        impl $trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$method(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}
