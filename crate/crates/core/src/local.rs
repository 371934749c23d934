//! Jets of every local object over the joint variables `(x, y)`.
//!
//! The base coordinates are jet variables `0..n` and the fiber coordinates
//! `n..2n`. One evaluation of the space at order `K` yields `F` to order `K`,
//! the metric tensor to `K-2`, the Cartan tensor to `K-3`, the generic
//! connection coefficients `N^m_n` to `K-1` and their fiber derivatives below
//! that. The horizontal operator `d_i` and the covariant derivatives act on
//! these jets and lower the order by one, so compositions stay exact.

use crate::error::{GeomError, Result};
use crate::finsler::FinslerSpace;
use crate::jet::{Jet, JetSpace};
use crate::scalar::Scalar;
use crate::tensor::{einsum, invert, outer, Tensor};

/// Default jet order; enough for every identity in the crate.
pub const DEFAULT_ORDER: usize = 4;

/// Kind of a tensor slot for covariant differentiation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Idx {
    /// Contravariant Finsler index.
    Up,
    /// Covariant Finsler index.
    Down,
    /// Contravariant index of the associated Riemannian space.
    BaseUp,
    /// Covariant index of the associated Riemannian space.
    BaseDown,
}

/// Which coefficients act on Finsler slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operator {
    /// `𝒟`, built from `N^k_{im}` alone.
    Deflectionless,
    /// `𝒯`, built from the total coefficients `T^k_{im}`.
    Total,
}

/// All local objects at one `(x, y)` as jets.
#[derive(Clone, Debug)]
pub struct LocalJets {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub vars: Vec<Jet>,
    pub f: Jet,
    /// `l^i`.
    pub l_up: Tensor<Jet>,
    /// `l_i`.
    pub l_down: Tensor<Jet>,
    pub g: Tensor<Jet>,
    pub g_inv: Tensor<Jet>,
    pub c_low: Tensor<Jet>,
    /// `C^k_{ij}`, layout `[k, i, j]`.
    pub c_up: Tensor<Jet>,
    /// `h_{mn}`.
    pub h: Tensor<Jet>,
    /// `h^k_m`, layout `[k, m]`.
    pub h_mixed: Tensor<Jet>,
    /// `H(x)`.
    pub hh: Jet,
    /// `H_i = ∂H/∂x^i`.
    pub h_grad: Tensor<Jet>,
    pub a: Tensor<Jet>,
    pub a_inv: Tensor<Jet>,
    /// `L^m_{ij}`, layout `[m, i, j]`.
    pub lc: Tensor<Jet>,
    pub u: Tensor<Jet>,
    pub ybar: Tensor<Jet>,
    /// `t^i_n`, layout `[i, n]`.
    pub t: Tensor<Jet>,
    /// `t^h_{nu}`, layout `[h, n, u]`.
    pub t2: Tensor<Jet>,
    /// `y^m_i`, layout `[m, i]`.
    pub y_inv: Tensor<Jet>,
    pub p: Jet,
    /// `N^m_n`, layout `[m, n]`.
    pub n1: Tensor<Jet>,
    /// `N^k_{nm} = ∂N^k_n/∂y^m`, layout `[k, n, m]`.
    pub n2: Tensor<Jet>,
    /// `N^k_{nmj}`, layout `[k, n, m, j]`.
    pub n3: Tensor<Jet>,
    /// `Δ^k_{im} = (1/H) H_i h^k_m`, layout `[k, i, m]`.
    pub delta: Tensor<Jet>,
    /// `T^k_{im} = -N^k_{im} - Δ^k_{im}`, layout `[k, i, m]`.
    pub tc: Tensor<Jet>,
}

fn rank1(v: Vec<Jet>) -> Tensor<Jet> {
    let n = v.len();
    Tensor::from_vec(n, 1, v)
}

impl LocalJets {
    /// Builds all local jets with the default order.
    pub fn new<T: FinslerSpace>(space: &T, x: &[f64], y: &[f64]) -> Result<LocalJets> {
        Self::with_order(space, x, y, DEFAULT_ORDER)
    }

    /// Builds all local jets; `order` must be at least 3.
    pub fn with_order<T: FinslerSpace>(space: &T, x: &[f64], y: &[f64], order: usize) -> Result<LocalJets> {
        if order < 3 {
            return Err(GeomError::InvalidArgument(format!("jet order {order} is below 3")));
        }
        space.admissible(x, y)?;
        let n = space.dim();
        let sp = JetSpace::get(2 * n, order);
        let mut at = x.to_vec();
        at.extend_from_slice(y);
        let vars = sp.variables(order, &at);
        let (xs, ys) = vars.split_at(n);

        let f = space.metric(xs, ys);
        if !(f.value() > 0.0 && f.value().is_finite()) {
            return Err(GeomError::Inadmissible(format!("F = {}", f.value())));
        }
        let e = Tensor::from_vec(n, 0, vec![f.sq() * 0.5]);
        let g = e.grad(n).grad(n);
        let c_low = g.grad(n).times_f(0.5);
        let g_inv = invert(&g)?;
        let c_up = einsum("kt,tij->kij", &[&g_inv, &c_low]);
        let ft = Tensor::from_vec(n, 0, vec![f.clone()]);
        let l_down = ft.grad(n);
        let finv = f.recip();
        let l_up = rank1(ys.iter().map(|v| v.clone() * &finv).collect());
        let h = g.minus(&outer(&l_down, &l_down));
        let h_mixed = einsum("kt,tm->km", &[&g_inv, &h]);

        let hh = space.h_scalar(xs);
        let h_grad = Tensor::from_vec(n, 0, vec![hh.clone()]).grad(0);
        let a = space.base().metric(xs);
        let a_inv = invert(&a)?;
        let lc = space.base().connection_jets(&a, &a_inv);

        let u = space
            .unit_field(xs, ys)
            .ok_or_else(|| GeomError::InvalidArgument("the space admits no conformal deformation".into()))?;
        let u = rank1(u);
        let lnf = f.ln();
        let fh = (lnf.clone() * &hh).exp();
        let ybar = u.times(&fh);
        let t = ybar.grad(n);
        let t2 = t.grad(n);
        let y_inv = invert(&t)?;
        let p = (lnf * (hh.cst(1.0) - &hh)).exp() / &hh;

        // N^m_n = -l^m ∂_n F - y^m_i F^H (∂_n U^i + L^i_{nk} U^k)
        let df = ft.grad(0);
        let du = u.grad(0);
        let lu = einsum("ink,k->in", &[&lc, &u]);
        let inner = du.plus(&lu);
        let n1 = outer(&l_up, &df)
            .times_f(-1.0)
            .minus(&einsum("mi,in->mn", &[&y_inv, &inner]).times(&fh));
        let n2 = n1.grad(n);
        let n3 = n2.grad(n);
        let hinv = hh.recip();
        let delta = Tensor::from_fn(n, 3, |idx| h_grad[[idx[1]]].clone() * &hinv * &h_mixed[[idx[0], idx[2]]]);
        let tc = n2.times_f(-1.0).minus(&delta);

        let out = LocalJets {
            n,
            x: x.to_vec(),
            y: y.to_vec(),
            vars: vars.clone(),
            f,
            l_up,
            l_down,
            g,
            g_inv,
            c_low,
            c_up,
            h,
            h_mixed,
            hh,
            h_grad,
            a,
            a_inv,
            lc,
            u,
            ybar,
            t,
            t2,
            y_inv,
            p,
            n1,
            n2,
            n3,
            delta,
            tc,
        };
        if !(out.n1.val().is_finite() && out.g.val().is_finite()) {
            return Err(GeomError::NonFinite("local jets"));
        }
        Ok(out)
    }

    /// Base coordinate jets.
    pub fn xs(&self) -> &[Jet] {
        &self.vars[..self.n]
    }

    /// Fiber coordinate jets.
    pub fn ys(&self) -> &[Jet] {
        &self.vars[self.n..]
    }

    /// Fiber derivative, appended as the last axis.
    pub fn dy(&self, w: &Tensor<Jet>) -> Tensor<Jet> {
        w.grad(self.n)
    }

    /// `d_i W = ∂W/∂x^i + N^k_i ∂W/∂y^k`, derivative index first.
    pub fn d(&self, w: &Tensor<Jet>) -> Tensor<Jet> {
        let n = self.n;
        let wx = w.grad(0);
        let wy = w.grad(n);
        let r = w.rank();
        let mut src = vec![0usize; r + 1];
        Tensor::from_fn(n, r + 1, |idx| {
            let i = idx[0];
            src[..r].copy_from_slice(&idx[1..]);
            src[r] = i;
            let mut v = wx.at(&src).clone();
            for k in 0..n {
                src[r] = k;
                v = v + wy.at(&src).clone() * &self.n1[[k, i]];
            }
            v
        })
    }

    fn finsler_coefficients(&self, op: Operator) -> Tensor<Jet> {
        match op {
            Operator::Deflectionless => self.n2.times_f(-1.0),
            Operator::Total => self.tc.clone(),
        }
    }

    /// Covariant derivative of a tensor field given as jets; derivative index
    /// first. Finsler slots use `Γ = -N^k_{im}` for `𝒟` and `Γ = T^k_{im}` for
    /// `𝒯`: upper slots gain `+Γ^m_{ih} w^h`, lower slots `-Γ^h_{im} w_h`.
    /// Base slots use `L^m_{ij}` with the same signs.
    pub fn covariant(&self, w: &Tensor<Jet>, slots: &[Idx], op: Operator) -> Tensor<Jet> {
        assert_eq!(w.rank(), slots.len(), "slot list must match tensor rank");
        let n = self.n;
        let gam = self.finsler_coefficients(op);
        let dw = self.d(w);
        let r = slots.len();
        let mut s2 = vec![0usize; r];
        Tensor::from_fn(n, r + 1, |idx| {
            let i = idx[0];
            let rest = &idx[1..];
            let mut v = dw.at(idx).clone();
            s2.copy_from_slice(rest);
            for (pos, slot) in slots.iter().enumerate() {
                let (coef, up) = match slot {
                    Idx::Up => (&gam, true),
                    Idx::Down => (&gam, false),
                    Idx::BaseUp => (&self.lc, true),
                    Idx::BaseDown => (&self.lc, false),
                };
                for hdx in 0..n {
                    s2[pos] = hdx;
                    let c = if up {
                        &coef[[rest[pos], i, hdx]]
                    } else {
                        &coef[[hdx, i, rest[pos]]]
                    };
                    let term = c.clone() * w.at(&s2);
                    v = if up { v + term } else { v - term };
                }
                s2[pos] = rest[pos];
            }
            v
        })
    }

    /// Scalar jet as a rank-0 tensor.
    pub fn scalar(&self, s: &Jet) -> Tensor<Jet> {
        Tensor::from_vec(self.n, 0, vec![s.clone()])
    }

    /// Plain-valued `Δ^k_{im}`.
    pub fn deflection(&self) -> Tensor {
        self.delta.val()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsleroid::Finsleroid;
    use crate::riemann::{AxisField, BaseMetric, ChargeField, RiemannField};

    fn curv3() -> Finsleroid {
        Finsleroid::new(RiemannField {
            dim: 3,
            metric: BaseMetric::Conformal { phi_grad: vec![0.1, 0.0, 0.0] },
            axis: AxisField::Coordinate { index: 0 },
            charge: ChargeField::Affine { g0: 0.4, grad: vec![0.0, 0.2, 0.0] },
            torsion: None,
        })
        .unwrap()
    }

    #[test]
    fn horizontal_derivative_annihilates_f() {
        let sp = curv3();
        let lj = LocalJets::new(&sp, &[0.3, -0.2, 0.5], &[0.7, 0.9, -0.4]).unwrap();
        let df = lj.d(&lj.scalar(&lj.f)).val();
        assert!(df.max_abs() < 1e-12, "{df:?}");
    }

    #[test]
    fn total_operator_is_metric() {
        let sp = curv3();
        let lj = LocalJets::new(&sp, &[0.3, -0.2, 0.5], &[0.7, 0.9, -0.4]).unwrap();
        let tg = lj.covariant(&lj.g, &[Idx::Down, Idx::Down], Operator::Total).val();
        assert!(tg.max_abs() < 1e-11, "{}", tg.max_abs());
    }

    #[test]
    fn order_below_three_is_rejected() {
        let sp = curv3();
        assert!(LocalJets::with_order(&sp, &[0.0; 3], &[0.3, 1.0, 0.2], 2).is_err());
    }
}
