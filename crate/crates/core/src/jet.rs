//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] carries the Taylor coefficients of a smooth function of the
//! chart coordinates up to a fixed total degree. Arithmetic and elementary
//! functions propagate the coefficients exactly (up to roundoff), so a metric
//! evaluated on seeded coordinates yields its value, gradient and Hessian in
//! one pass, and higher orders when third derivatives are needed (for
//! example the covariant derivative of a Ricci tensor).
//!
//! Coefficients are stored in graded order: all monomials of degree 0, then
//! degree 1, and so on. Truncating a jet to a lower order is therefore a
//! prefix of its coefficient vector, and binary operations between jets of
//! different orders run at the smaller order.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::{Arc, Mutex, OnceLock};

/// Highest total degree any jet may carry.
pub const MAX_ORDER: usize = 4;

/// Monomial bookkeeping shared by every jet over the same number of variables.
#[derive(Debug)]
pub struct Layout {
    dim: usize,
    exps: Vec<Vec<u8>>,
    len: [usize; MAX_ORDER + 1],
    triples: Vec<(u32, u32, u32)>,
    tri_len: [usize; MAX_ORDER + 1],
    /// `raise[var][idx]` is the index of monomial `idx` times `x_var`.
    raise: Vec<Vec<u32>>,
}

impl Layout {
    fn build(dim: usize) -> Layout {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        let mut len = [0usize; MAX_ORDER + 1];
        for (deg, slot) in len.iter_mut().enumerate() {
            let mut cur = vec![0u8; dim];
            push_graded(&mut exps, &mut cur, 0, deg);
            *slot = exps.len();
        }
        let index: HashMap<Vec<u8>, usize> = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let degree: Vec<usize> = exps.iter().map(|e| e.iter().map(|&v| v as usize).sum()).collect();

        let mut triples = Vec::new();
        for i in 0..exps.len() {
            for j in 0..exps.len() {
                if degree[i] + degree[j] > MAX_ORDER {
                    continue;
                }
                let sum: Vec<u8> = exps[i].iter().zip(&exps[j]).map(|(a, b)| a + b).collect();
                triples.push((i as u32, j as u32, index[&sum] as u32));
            }
        }
        triples.sort_by_key(|&(_, _, k)| degree[k as usize]);
        let mut tri_len = [0usize; MAX_ORDER + 1];
        for (p, slot) in tri_len.iter_mut().enumerate() {
            *slot = triples.iter().take_while(|t| degree[t.2 as usize] <= p).count();
        }

        let mut raise = vec![vec![u32::MAX; exps.len()]; dim];
        for (var, row) in raise.iter_mut().enumerate() {
            for (idx, e) in exps.iter().enumerate() {
                if degree[idx] < MAX_ORDER {
                    let mut up = e.clone();
                    up[var] += 1;
                    row[idx] = index[&up] as u32;
                }
            }
        }
        Layout { dim, exps, len, triples, tri_len, raise }
    }

    /// Number of coordinates the jets differentiate against.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored coefficients for a jet of the given order.
    pub fn coefficients(&self, order: usize) -> usize {
        self.len[order]
    }
}

fn push_graded(out: &mut Vec<Vec<u8>>, cur: &mut [u8], pos: usize, remaining: usize) {
    if pos + 1 == cur.len() || cur.is_empty() {
        if let Some(last) = cur.len().checked_sub(1) {
            cur[last] = remaining as u8;
            out.push(cur.to_vec());
            cur[last] = 0;
        } else if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for take in (0..=remaining).rev() {
        cur[pos] = take as u8;
        push_graded(out, cur, pos + 1, remaining - take);
    }
    cur[pos] = 0;
}

/// Shared layout for `dim` variables.
pub fn layout(dim: usize) -> Arc<Layout> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Layout>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("jet layout cache poisoned");
    guard.entry(dim).or_insert_with(|| Arc::new(Layout::build(dim))).clone()
}

/// A smooth scalar function of the chart coordinates, truncated at `order`.
#[derive(Clone)]
pub struct Jet {
    layout: Arc<Layout>,
    order: usize,
    coef: Vec<f64>,
}

/// The value/gradient/Hessian jet used for metric evaluation.
pub type Jet2Scalar = Jet;

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("order", &self.order)
            .field("value", &self.value())
            .field("coef", &self.coef)
            .finish()
    }
}

impl Jet {
    pub fn constant(layout: &Arc<Layout>, order: usize, value: f64) -> Jet {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        let mut coef = vec![0.0; layout.len[order]];
        coef[0] = value;
        Jet { layout: layout.clone(), order, coef }
    }

    /// The coordinate function `x_var` expanded around `value`.
    pub fn variable(layout: &Arc<Layout>, order: usize, value: f64, var: usize) -> Jet {
        let mut j = Jet::constant(layout, order, value);
        if order >= 1 {
            j.coef[1 + var] = 1.0;
        }
        j
    }

    /// Seeded coordinates `x_i + dx_i` at a point.
    pub fn seeds(point: &[f64], order: usize) -> Vec<Jet> {
        let lay = layout(point.len());
        point.iter().enumerate().map(|(i, &v)| Jet::variable(&lay, order, v, i)).collect()
    }

    /// First-order jet from a value and its gradient.
    pub fn from_value_grad(layout: &Arc<Layout>, value: f64, grad: &[f64]) -> Jet {
        debug_assert_eq!(grad.len(), layout.dim);
        let mut j = Jet::constant(layout, 1, value);
        j.coef[1..=layout.dim].copy_from_slice(grad);
        j
    }

    /// A constant with the same layout and order as `self`.
    pub fn lift(&self, value: f64) -> Jet {
        Jet::constant(&self.layout, self.order, value)
    }

    pub fn zero_like(&self) -> Jet {
        self.lift(0.0)
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn value(&self) -> f64 {
        self.coef[0]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn is_finite(&self) -> bool {
        self.coef.iter().all(|c| c.is_finite())
    }

    /// First partials. Zero when the jet is of order 0.
    pub fn grad(&self) -> Vec<f64> {
        let n = self.layout.dim;
        if self.order == 0 {
            return vec![0.0; n];
        }
        self.coef[1..=n].to_vec()
    }

    /// Second partials as a row-major `n*n` matrix.
    pub fn hess(&self) -> Vec<f64> {
        let n = self.layout.dim;
        let mut h = vec![0.0; n * n];
        if self.order < 2 {
            return h;
        }
        for k in 0..n {
            for l in 0..n {
                let idx = self.layout.raise[l][1 + k] as usize;
                let c = self.coef[idx];
                h[k * n + l] = if k == l { 2.0 * c } else { c };
            }
        }
        h
    }

    /// Drop every coefficient above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order);
        Jet { layout: self.layout.clone(), order, coef: self.coef[..self.layout.len[order]].to_vec() }
    }

    /// Partial derivative along coordinate `var`; the result has one order less.
    pub fn partial(&self, var: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let order = self.order - 1;
        let len = self.layout.len[order];
        let raise = &self.layout.raise[var];
        let coef =
            (0..len).map(|idx| (self.layout.exps[idx][var] as f64 + 1.0) * self.coef[raise[idx] as usize]).collect();
        Jet { layout: self.layout.clone(), order, coef }
    }

    fn binary_order(&self, other: &Jet) -> usize {
        debug_assert!(Arc::ptr_eq(&self.layout, &other.layout), "jets over different layouts");
        self.order.min(other.order)
    }

    fn product(&self, other: &Jet) -> Jet {
        let order = self.binary_order(other);
        let lay = &self.layout;
        let mut coef = vec![0.0; lay.len[order]];
        for &(i, j, k) in &lay.triples[..lay.tri_len[order]] {
            coef[k as usize] += self.coef[i as usize] * other.coef[j as usize];
        }
        Jet { layout: lay.clone(), order, coef }
    }

    /// `f(self)` given `derivs[m] = f^(m)(self.value())` for `m = 0..=order`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        debug_assert!(derivs.len() > self.order);
        let mut h = self.clone();
        h.coef[0] = 0.0;
        let mut fact = 1.0;
        for m in 1..=self.order {
            fact *= m as f64;
        }
        // Horner in h: sum_m derivs[m]/m! h^m.
        let mut acc = self.lift(derivs[self.order] / fact);
        for m in (0..self.order).rev() {
            fact /= (m + 1) as f64;
            acc = acc.product(&h);
            acc.coef[0] += derivs[m] / fact;
        }
        acc
    }

    pub fn recip(&self) -> Jet {
        let a = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        let mut v = 1.0 / a;
        for m in 0..=self.order {
            d.push(v);
            v *= -((m + 1) as f64) / a;
        }
        self.compose(&d)
    }

    pub fn powf(&self, r: f64) -> Jet {
        let a = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        let mut c = 1.0;
        for m in 0..=self.order {
            d.push(c * a.powf(r - m as f64));
            c *= r - m as f64;
        }
        self.compose(&d)
    }

    pub fn powi(&self, k: u32) -> Jet {
        let mut acc = self.lift(1.0);
        for _ in 0..k {
            acc = acc.product(self);
        }
        acc
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.order + 1])
    }

    pub fn ln(&self) -> Jet {
        let a = self.value();
        let mut d = vec![a.ln()];
        let mut v = 1.0 / a;
        for m in 1..=self.order {
            d.push(v);
            v *= -(m as f64) / a;
        }
        self.compose(&d)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.order).map(|m| cycle[m % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.order).map(|m| cycle[m % 4]).collect();
        self.compose(&d)
    }

    pub fn square(&self) -> Jet {
        self.product(self)
    }
}

macro_rules! jet_binop {
    ($tr:ident, $method:ident, $body:expr) => {
        impl $tr<&Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$method(&rhs)
            }
        }
    };
}

fn zip_with(a: &Jet, b: &Jet, op: impl Fn(f64, f64) -> f64) -> Jet {
    let order = a.binary_order(b);
    let len = a.layout.len[order];
    let coef = a.coef[..len].iter().zip(&b.coef[..len]).map(|(x, y)| op(*x, *y)).collect();
    Jet { layout: a.layout.clone(), order, coef }
}

jet_binop!(Add, add, |a, b| zip_with(a, b, |x, y| x + y));
jet_binop!(Sub, sub, |a, b| zip_with(a, b, |x, y| x - y));
jet_binop!(Mul, mul, |a, b| a.product(b));
jet_binop!(Div, div, |a, b| a.product(&b.recip()));

macro_rules! jet_scalar_op {
    ($tr:ident, $method:ident, $body:expr) => {
        impl $tr<f64> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: f64) -> Jet {
                let f: fn(&Jet, f64) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $tr<f64> for Jet {
            type Output = Jet;
            fn $method(self, rhs: f64) -> Jet {
                (&self).$method(rhs)
            }
        }
    };
}

jet_scalar_op!(Add, add, |a, s| {
    let mut out = a.clone();
    out.coef[0] += s;
    out
});
jet_scalar_op!(Sub, sub, |a, s| {
    let mut out = a.clone();
    out.coef[0] -= s;
    out
});
jet_scalar_op!(Mul, mul, |a, s| {
    let mut out = a.clone();
    out.coef.iter_mut().for_each(|c| *c *= s);
    out
});
jet_scalar_op!(Div, div, |a, s| {
    let mut out = a.clone();
    out.coef.iter_mut().for_each(|c| *c /= s);
    out
});

impl Mul<&Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        rhs * self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &rhs * self
    }
}

impl Add<&Jet> for f64 {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        rhs + self
    }
}

impl Sub<&Jet> for f64 {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        -rhs + self
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        &self * -1.0
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        if rhs.order < self.order {
            *self = self.truncate(rhs.order);
        }
        let len = self.coef.len();
        self.coef.iter_mut().zip(&rhs.coef[..len]).for_each(|(a, b)| *a += b);
    }
}

impl AddAssign<Jet> for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        *self += &rhs;
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        if rhs.order < self.order {
            *self = self.truncate(rhs.order);
        }
        let len = self.coef.len();
        self.coef.iter_mut().zip(&rhs.coef[..len]).for_each(|(a, b)| *a -= b);
    }
}

impl SubAssign<Jet> for Jet {
    fn sub_assign(&mut self, rhs: Jet) {
        *self -= &rhs;
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, rhs: f64) {
        self.coef.iter_mut().for_each(|c| *c *= rhs);
    }
}

/// Sum of pairwise products, starting from the zero jet of `like`.
pub fn dot(like: &Jet, a: impl IntoIterator<Item = (Jet, Jet)>) -> Jet {
    let mut acc = like.zero_like();
    for (x, y) in a {
        acc += x * y;
    }
    acc
}
