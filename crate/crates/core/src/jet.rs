//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] stores the Taylor coefficients `c_α = ∂^α f / α!` of a function of
//! `nvars` variables up to some total degree. Arithmetic and the elementary
//! functions act on the truncated series exactly, so every partial derivative
//! up to the stored order is exact to rounding.
//!
//! Coefficients are kept in graded order (all degree-0 terms, then degree 1,
//! ...), so lowering the order of a jet is a prefix truncation. Differentiating
//! lowers the order by one.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::{Mutex, OnceLock};

use crate::scalar::Scalar;

const NONE: u32 = u32::MAX;

/// Monomial tables for a fixed number of variables and maximal order.
pub struct JetSpace {
    nvars: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    len_upto: Vec<usize>,
    mul: Vec<(u32, u32, u32)>,
    mul_upto: Vec<usize>,
    up: Vec<Vec<u32>>,
    index: HashMap<Vec<u8>, usize>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JetSpace({} vars, order {})", self.nvars, self.order)
    }
}

fn monomials_of_degree(nvars: usize, deg: usize, out: &mut Vec<Vec<u8>>) {
    fn rec(v: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if v + 1 == cur.len() {
            cur[v] = left as u8;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[v] = e as u8;
            rec(v + 1, left - e, cur, out);
        }
        cur[v] = 0;
    }
    let mut cur = vec![0u8; nvars];
    rec(0, deg, &mut cur, out);
}

impl JetSpace {
    fn build(nvars: usize, order: usize) -> JetSpace {
        assert!(nvars > 0, "jet space needs at least one variable");
        let mut exps = Vec::new();
        let mut len_upto = Vec::with_capacity(order + 1);
        for d in 0..=order {
            monomials_of_degree(nvars, d, &mut exps);
            len_upto.push(exps.len());
        }
        let index: HashMap<Vec<u8>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let degree = |e: &[u8]| e.iter().map(|&k| k as usize).sum::<usize>();

        let mut mul = Vec::new();
        let mut mul_upto = Vec::with_capacity(order + 1);
        let mut sum = vec![0u8; nvars];
        for d in 0..=order {
            let lo = if d == 0 { 0 } else { len_upto[d - 1] };
            for k in lo..len_upto[d] {
                for i in 0..=k {
                    let ei = &exps[i];
                    if ei.iter().zip(&exps[k]).any(|(a, b)| a > b) {
                        continue;
                    }
                    for v in 0..nvars {
                        sum[v] = exps[k][v] - ei[v];
                    }
                    let j = index[&sum];
                    debug_assert_eq!(degree(&exps[i]) + degree(&exps[j]), d);
                    mul.push((i as u32, j as u32, k as u32));
                }
            }
            mul_upto.push(mul.len());
        }

        let mut up = vec![vec![NONE; exps.len()]; nvars];
        for (i, e) in exps.iter().enumerate() {
            if degree(e) == order {
                continue;
            }
            for (v, row) in up.iter_mut().enumerate() {
                let mut f = e.clone();
                f[v] += 1;
                row[i] = index[&f] as u32;
            }
        }
        JetSpace {
            nvars,
            order,
            exps,
            len_upto,
            mul,
            mul_upto,
            up,
            index,
        }
    }

    /// Returns the shared tables for `nvars` variables up to `order`.
    pub fn get(nvars: usize, order: usize) -> &'static JetSpace {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("jet space cache poisoned");
        map.entry((nvars, order))
            .or_insert_with(|| Box::leak(Box::new(JetSpace::build(nvars, order))))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of monomials of degree at most `order`.
    pub fn len(&self, order: usize) -> usize {
        self.len_upto[order]
    }

    fn order_of_len(&self, len: usize) -> usize {
        self.len_upto
            .iter()
            .position(|&l| l == len)
            .expect("jet length does not match a truncation order")
    }

    /// Constant jet of the given order.
    pub fn constant(&'static self, order: usize, v: f64) -> Jet {
        assert!(order <= self.order);
        let mut c = vec![0.0; self.len_upto[order]];
        c[0] = v;
        Jet { sp: self, c }
    }

    /// The coordinate function `var`, evaluated at `v`.
    pub fn variable(&'static self, order: usize, var: usize, v: f64) -> Jet {
        assert!(var < self.nvars);
        let mut j = self.constant(order, v);
        if order >= 1 {
            j.c[1 + var] = 1.0;
        }
        j
    }

    /// Coordinate functions for all variables at the point `at`.
    pub fn variables(&'static self, order: usize, at: &[f64]) -> Vec<Jet> {
        assert_eq!(at.len(), self.nvars);
        at.iter()
            .enumerate()
            .map(|(i, &v)| self.variable(order, i, v))
            .collect()
    }
}

/// A truncated Taylor expansion about a fixed point.
#[derive(Clone)]
pub struct Jet {
    sp: &'static JetSpace,
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet(order {}, value {:e})", self.order(), self.c[0])
    }
}

impl Jet {
    pub fn space(&self) -> &'static JetSpace {
        self.sp
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn order(&self) -> usize {
        self.sp.order_of_len(self.c.len())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// Drops all terms above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        let n = self.sp.len_upto[order.min(self.order())];
        Jet {
            sp: self.sp,
            c: self.c[..n].to_vec(),
        }
    }

    /// Partial derivative with respect to variable `var`; the order drops by one.
    pub fn d(&self, var: usize) -> Jet {
        let ord = self.order();
        assert!(ord >= 1, "cannot differentiate an order-0 jet");
        let n = self.sp.len_upto[ord - 1];
        let up = &self.sp.up[var];
        let mut c = vec![0.0; n];
        for (i, ci) in c.iter_mut().enumerate() {
            let k = up[i] as usize;
            *ci = (self.sp.exps[i][var] as f64 + 1.0) * self.c[k];
        }
        Jet { sp: self.sp, c }
    }

    /// The partial derivative `∂^α f` at the expansion point.
    pub fn partial(&self, exps: &[u8]) -> f64 {
        let i = self.sp.index[exps];
        assert!(i < self.c.len(), "derivative beyond stored order");
        let fact: f64 = exps
            .iter()
            .map(|&k| (1..=k as u32).map(f64::from).product::<f64>())
            .product();
        self.c[i] * fact
    }

    /// Sets the listed variables to zero at the expansion point, keeping the
    /// dependence on the others.
    pub fn restrict(&self, zero: &[usize]) -> Jet {
        let mut c = self.c.clone();
        for (i, ci) in c.iter_mut().enumerate() {
            if zero.iter().any(|&v| self.sp.exps[i][v] > 0) {
                *ci = 0.0;
            }
        }
        Jet { sp: self.sp, c }
    }

    /// Composition `f(self)` given the univariate Taylor coefficients
    /// `e_k = f^{(k)}(a0)/k!` of `f` at the current value.
    pub fn compose(&self, e: &[f64]) -> Jet {
        let ord = self.order();
        debug_assert!(e.len() > ord);
        let mut delta = self.clone();
        delta.c[0] = 0.0;
        let mut r = self.sp.constant(ord, e[ord]);
        for k in (0..ord).rev() {
            r = &r * &delta;
            r.c[0] += e[k];
        }
        r
    }

    fn mul_into(&self, other: &Jet, out: &mut [f64]) {
        let ord = self.sp.order_of_len(out.len());
        let (a, b) = (&self.c, &other.c);
        for &(i, j, k) in &self.sp.mul[..self.sp.mul_upto[ord]] {
            out[k as usize] += a[i as usize] * b[j as usize];
        }
    }

    fn check_space(&self, other: &Jet) {
        debug_assert!(
            std::ptr::eq(self.sp, other.sp),
            "jets from different spaces"
        );
    }
}

/// Univariate Taylor coefficients of `P(t)^alpha` where `P` has coefficients `p`.
fn series_pow(p: &[f64], alpha: f64, n: usize) -> Vec<f64> {
    let mut q = vec![0.0; n + 1];
    q[0] = p[0].powf(alpha);
    for k in 1..=n {
        let mut s = 0.0;
        for j in 1..=k.min(p.len() - 1) {
            s += ((alpha + 1.0) * j as f64 - k as f64) * p[j] * q[k - j];
        }
        q[k] = s / (k as f64 * p[0]);
    }
    q
}

/// Integrates a derivative series: coefficients of `f` from those of `f'`.
fn integrate(f0: f64, dq: &[f64], n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n + 1];
    e[0] = f0;
    for k in 1..=n {
        e[k] = dq[k - 1] / k as f64;
    }
    e
}

fn factorial_series(n: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut e = Vec::with_capacity(n + 1);
    let mut fact = 1.0;
    for k in 0..=n {
        if k > 0 {
            fact *= k as f64;
        }
        e.push(f(k) / fact);
    }
    e
}

impl Scalar for Jet {
    fn cst(&self, v: f64) -> Self {
        self.sp.constant(self.order(), v)
    }

    fn re(&self) -> f64 {
        self.c[0]
    }

    fn exp(&self) -> Self {
        let v = self.c[0].exp();
        self.compose(&factorial_series(self.order(), |_| v))
    }

    fn ln(&self) -> Self {
        let a = self.c[0];
        let n = self.order();
        let mut e = vec![a.ln(); n + 1];
        for (k, ek) in e.iter_mut().enumerate().skip(1) {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            *ek = sign / (k as f64 * a.powi(k as i32));
        }
        self.compose(&e)
    }

    fn powf(&self, p: f64) -> Self {
        let a = self.c[0];
        let n = self.order();
        let mut e = vec![0.0; n + 1];
        let mut coef = 1.0;
        for (k, ek) in e.iter_mut().enumerate() {
            *ek = coef * a.powf(p - k as f64);
            coef *= (p - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&e)
    }

    fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    fn recip(&self) -> Self {
        let a = self.c[0];
        let n = self.order();
        let e: Vec<f64> = (0..=n)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                s / a.powi(k as i32 + 1)
            })
            .collect();
        self.compose(&e)
    }

    fn sin(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose(&factorial_series(self.order(), |k| match k % 4 {
            0 => s,
            1 => c,
            2 => -s,
            _ => -c,
        }))
    }

    fn cos(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose(&factorial_series(self.order(), |k| match k % 4 {
            0 => c,
            1 => -s,
            2 => -c,
            _ => s,
        }))
    }

    fn atan(&self) -> Self {
        let a = self.c[0];
        let n = self.order();
        // atan' = (1 + u^2)^{-1}
        let dq = series_pow(&[1.0 + a * a, 2.0 * a, 1.0], -1.0, n);
        self.compose(&integrate(a.atan(), &dq, n))
    }

    fn acos(&self) -> Self {
        let a = self.c[0];
        let n = self.order();
        // acos' = -(1 - u^2)^{-1/2}
        let dq: Vec<f64> = series_pow(&[1.0 - a * a, -2.0 * a, -1.0], -0.5, n)
            .into_iter()
            .map(|v| -v)
            .collect();
        self.compose(&integrate(a.acos(), &dq, n))
    }

    fn atan2(&self, x: &Self) -> Self {
        let (y0, x0) = (self.c[0], x.c[0]);
        let mut r = if x0.abs() >= y0.abs() {
            (self.clone() / x).atan()
        } else {
            -((x.clone() / self).atan())
        };
        r.c[0] = y0.atan2(x0);
        r
    }
}

impl Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        self.check_space(o);
        let n = self.c.len().min(o.c.len());
        let c = self.c[..n].iter().zip(&o.c[..n]).map(|(a, b)| a + b).collect();
        Jet { sp: self.sp, c }
    }
}

impl Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        self.check_space(o);
        let n = self.c.len().min(o.c.len());
        let c = self.c[..n].iter().zip(&o.c[..n]).map(|(a, b)| a - b).collect();
        Jet { sp: self.sp, c }
    }
}

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        self.check_space(o);
        let n = self.c.len().min(o.c.len());
        let mut c = vec![0.0; n];
        self.mul_into(o, &mut c);
        Jet { sp: self.sp, c }
    }
}

impl Div<&Jet> for &Jet {
    type Output = Jet;
    fn div(self, o: &Jet) -> Jet {
        self * &o.recip()
    }
}

macro_rules! owned_ops {
    ($tr:ident, $m:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, o: Jet) -> Jet {
                (&self).$m(&o)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, o: &Jet) -> Jet {
                (&self).$m(o)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, o: Jet) -> Jet {
                self.$m(&o)
            }
        }
    };
}
owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);
owned_ops!(Div, div);

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        self.c.iter_mut().for_each(|v| *v = -*v);
        self
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -(self.clone())
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.c[0] += o;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, o: f64) -> Jet {
        self.c[0] -= o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, o: f64) -> Jet {
        self.c.iter_mut().for_each(|v| *v *= o);
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, o: f64) -> Jet {
        self * (1.0 / o)
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, o: &Jet) {
        self.check_space(o);
        let n = self.c.len().min(o.c.len());
        self.c.truncate(n);
        self.c.iter_mut().zip(&o.c).for_each(|(a, b)| *a += b);
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, o: &Jet) {
        self.check_space(o);
        let n = self.c.len().min(o.c.len());
        self.c.truncate(n);
        self.c.iter_mut().zip(&o.c).for_each(|(a, b)| *a -= b);
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, o: f64) {
        self.c.iter_mut().for_each(|v| *v *= o);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(sp: &'static JetSpace, ord: usize, at: &[f64]) -> Vec<Jet> {
        sp.variables(ord, at)
    }

    #[test]
    fn monomial_counts() {
        let sp = JetSpace::get(3, 4);
        assert_eq!(sp.len(0), 1);
        assert_eq!(sp.len(1), 4);
        assert_eq!(sp.len(4), 35);
    }

    #[test]
    fn polynomial_partials_are_exact() {
        let sp = JetSpace::get(2, 4);
        let v = eval(sp, 4, &[1.5, -0.5]);
        // f = x^3 y + 2 y^2
        let f = &(&(&v[0] * &v[0]) * &v[0]) * &v[1] + (&v[1] * &v[1]) * 2.0;
        assert!((f.partial(&[0, 0]) - (1.5f64.powi(3) * -0.5 + 0.5)).abs() < 1e-14);
        assert!((f.partial(&[3, 1]) - 6.0).abs() < 1e-13);
        assert!((f.partial(&[0, 2]) - 4.0).abs() < 1e-13);
        assert!((f.partial(&[2, 1]) - 6.0 * 1.5).abs() < 1e-13);
        assert!((f.partial(&[1, 1]) - 3.0 * 1.5 * 1.5).abs() < 1e-13);
    }

    #[test]
    fn elementary_functions_match_closed_derivatives() {
        let sp = JetSpace::get(1, 4);
        let x = sp.variable(4, 0, 0.3);
        let checks: Vec<(Jet, [f64; 5])> = vec![
            (x.exp(), [0.3f64.exp(); 5]),
            (
                x.ln(),
                [0.3f64.ln(), 1.0 / 0.3, -1.0 / 0.09, 2.0 / 0.027, -6.0 / 0.0081],
            ),
            (
                x.sin(),
                [0.3f64.sin(), 0.3f64.cos(), -0.3f64.sin(), -0.3f64.cos(), 0.3f64.sin()],
            ),
        ];
        for (j, want) in checks {
            for (k, w) in want.iter().enumerate() {
                assert!((j.partial(&[k as u8]) - w).abs() < 1e-11, "k={k}");
            }
        }
        // atan'' = -2u/(1+u^2)^2
        let a = x.atan();
        assert!((a.partial(&[1]) - 1.0 / 1.09).abs() < 1e-14);
        assert!((a.partial(&[2]) + 0.6 / (1.09 * 1.09)).abs() < 1e-14);
        // acos' = -1/sqrt(1-u^2)
        let c = x.acos();
        assert!((c.partial(&[1]) + 1.0 / 0.91f64.sqrt()).abs() < 1e-14);
        assert!((c.partial(&[2]) + 0.3 / 0.91f64.powf(1.5)).abs() < 1e-13);
    }

    #[test]
    fn atan2_matches_both_branches() {
        let sp = JetSpace::get(2, 3);
        for &(y0, x0) in &[(0.2, 1.0), (1.0, 0.2), (1.0, -0.3), (-0.5, -2.0)] {
            let v = eval(sp, 3, &[y0, x0]);
            let a = v[0].atan2(&v[1]);
            let r2 = y0 * y0 + x0 * x0;
            assert!((a.value() - f64::atan2(y0, x0)).abs() < 1e-15);
            assert!((a.partial(&[1, 0]) - x0 / r2).abs() < 1e-13);
            assert!((a.partial(&[0, 1]) + y0 / r2).abs() < 1e-13);
            assert!((a.partial(&[1, 1]) - (y0 * y0 - x0 * x0) / (r2 * r2)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_lowers_order() {
        let sp = JetSpace::get(2, 4);
        let v = eval(sp, 4, &[0.7, 0.2]);
        let f = (&v[0] * &v[1]).exp();
        let fx = f.d(0);
        assert_eq!(fx.order(), 3);
        assert!((fx.value() - 0.2 * (0.14f64).exp()).abs() < 1e-15);
        assert!((fx.partial(&[0, 1]) - f.partial(&[1, 1])).abs() < 1e-13);
    }

    #[test]
    fn restrict_drops_dependence() {
        let sp = JetSpace::get(2, 2);
        let v = eval(sp, 2, &[0.0, 0.0]);
        let f = &(&v[0] * &v[1]) + &v[1];
        let r = f.restrict(&[0]);
        assert_eq!(r.partial(&[1, 1]), 0.0);
        assert_eq!(r.partial(&[0, 1]), 1.0);
    }
}
