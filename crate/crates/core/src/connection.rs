//! The angle-preserving nonlinear connection: generic coefficients
//! `N^m_n`, their fiber derivatives, total coefficients and deflection, the
//! covariant operators and the metricity and transitivity checks.

use crate::error::{GeomError, Result};
use crate::fd::{fd_gradient_x, FD_STEP};
use crate::finsler::FinslerSpace;
use crate::jet::{Jet, JetSpace};
use crate::local::{Idx, LocalJets, Operator};
use crate::riemann::{nabla, Slot};
use crate::scalar::Scalar;
use crate::tensor::{einsum, invert, outer, Tensor};

/// Connection coefficients at one `(x, y)`.
#[derive(Clone, Debug)]
pub struct ConnectionBundle {
    /// `N^m_n`, layout `[m, n]`.
    pub n1: Tensor,
    /// `N^k_{nm}`, layout `[k, n, m]`.
    pub n2: Tensor,
    /// `N^k_{nmj}`, layout `[k, n, m, j]`.
    pub n3: Tensor,
    /// `T^k_{im}`, layout `[k, i, m]`.
    pub tc: Tensor,
    /// `Δ^k_{im}`, layout `[k, i, m]`.
    pub delta: Tensor,
}

impl ConnectionBundle {
    pub fn new<T: FinslerSpace>(space: &T, x: &[f64], y: &[f64]) -> Result<ConnectionBundle> {
        Ok(Self::from_local(&LocalJets::new(space, x, y)?))
    }

    pub fn from_local(lj: &LocalJets) -> ConnectionBundle {
        ConnectionBundle {
            n1: lj.n1.val(),
            n2: lj.n2.val(),
            n3: lj.n3.val(),
            tc: lj.tc.val(),
            delta: lj.delta.val(),
        }
    }

    /// Largest residual among `N^k_{nm} y^m = N^k_n`, `N^k_{nmj} y^m = 0`,
    /// `N^k_{nmj} = N^k_{njm}`, `Δ^k_{im} y^m = 0` and `T^k_{im} y^m = -N^k_i`.
    pub fn invariant_residual(&self, y: &[f64]) -> f64 {
        let yv = Tensor::vector(y);
        let scale = self.n1.max_abs().max(1.0);
        let euler = einsum("knm,m->kn", &[&self.n2, &yv]).max_diff(&self.n1) / scale;
        let second = einsum("knmj,m->knj", &[&self.n3, &yv]).max_abs() / scale;
        let sym = self.n3.max_diff(&self.n3.swap_axes(2, 3)) / scale;
        let defl = einsum("kim,m->ki", &[&self.delta, &yv]).max_abs() / scale;
        let total = einsum("kim,m->ki", &[&self.tc, &yv]).max_diff(&self.n1.scale(-1.0)) / scale;
        [euler, second, sym, defl, total].into_iter().fold(0.0, f64::max)
    }
}

/// `N^m_n = -l^m ∂F/∂x^n - y^m_i F^H (∂U^i/∂x^n + L^i_{nk} U^k)` from one
/// first-order jet pass; layout `[m, n]`.
pub fn n_coefficients<T: FinslerSpace>(space: &T, x: &[f64], y: &[f64]) -> Result<Tensor> {
    space.admissible(x, y)?;
    let n = space.dim();
    let sp = JetSpace::get(2 * n, 2);
    let mut at = x.to_vec();
    at.extend_from_slice(y);
    let vars = sp.variables(2, &at);
    let (xs, ys) = vars.split_at(n);
    let f = space.metric(xs, ys);
    let hh = space.h_scalar(xs);
    let u = space
        .unit_field(xs, ys)
        .ok_or_else(|| GeomError::InvalidArgument("the space admits no conformal deformation".into()))?;
    let fh = (f.ln() * &hh).exp();
    let u = Tensor::from_vec(n, 1, u);
    let t = u.times(&fh).grad(n).val();
    let y_inv = invert(&t)?;
    let du = u.grad(0).val();
    let uv = u.val();
    let lc = space.base().linear_connection(x)?;
    let df: Vec<f64> = (0..n).map(|i| f.d(i).value()).collect();
    let (fv, fhv) = (f.value(), fh.value());
    let inner = du.add(&einsum("ink,k->in", &[&lc, &uv]));
    let yi = einsum("mi,in->mn", &[&y_inv, &inner]);
    Ok(Tensor::from_fn(n, 2, |mn| -y[mn[0]] / fv * df[mn[1]] - fhv * yi[[mn[0], mn[1]]]))
}

/// Closed form of `N^k_{mn}` (layout `[k, m, n]`, `m` the base index):
/// `-(1/F) h^k_n ∂_m F - l^k ∂_m l_n - C^k_{ns} N^s_m
/// + (1/F)(l_n h^k_s - (1-H) l^k h_{ns}) N^s_m - y^k_h F^H (∂_m U^h_n + L^h_{ms} U^s_n)`.
pub fn n2_closed_form(lj: &LocalJets) -> Tensor {
    let n = lj.n;
    let f = lj.f.value();
    let hh = lj.hh.value();
    let fh = f.powf(hh);
    let df = lj.scalar(&lj.f).grad(0).val();
    let dl = lj.l_down.grad(0).val(); // [n, m] = ∂_m l_n
    let hm = lj.h_mixed.val();
    let h = lj.h.val();
    let cu = lj.c_up.val();
    let n1 = lj.n1.val();
    let ll = lj.l_down.val();
    let lu = lj.l_up.val();
    let y_inv = lj.y_inv.val();
    let uy = lj.u.grad(lj.n); // U^h_n
    let duy = uy.grad(0).val(); // [h, n, m] = ∂_m U^h_n
    let uyv = uy.val();
    let lc = lj.lc.val();
    let inner = Tensor::from_fn(n, 3, |i| {
        let (hh_, m, nn) = (i[0], i[1], i[2]);
        duy[[hh_, nn, m]] + (0..n).map(|s| lc[[hh_, m, s]] * uyv[[s, nn]]).sum::<f64>()
    }); // [h, m, n]
    let last = einsum("kh,hmn->kmn", &[&y_inv, &inner]);
    Tensor::from_fn(n, 3, |i| {
        let (k, m, nn) = (i[0], i[1], i[2]);
        let mut v = -hm[[k, nn]] * df[[m]] / f - lu[[k]] * dl[[nn, m]];
        for s in 0..n {
            v -= cu[[k, nn, s]] * n1[[s, m]];
            v += (ll[[nn]] * hm[[k, s]] - (1.0 - hh) * lu[[k]] * h[[nn, s]]) * n1[[s, m]] / f;
        }
        v - fh * last[[k, m, nn]]
    })
}

/// Closed form `N^k_{mni} = (2/H) H_m l^k h_{ni}/F - 𝒟_m C^k_{ni}`, layout `[k, m, n, i]`.
pub fn n3_closed_form(lj: &LocalJets) -> Tensor {
    let n = lj.n;
    let dc = lj
        .covariant(&lj.c_up, &[Idx::Up, Idx::Down, Idx::Down], Operator::Deflectionless)
        .val(); // [m, k, n, i]
    let hg = lj.h_grad.val();
    let (hh, f) = (lj.hh.value(), lj.f.value());
    let lu = lj.l_up.val();
    let h = lj.h.val();
    Tensor::from_fn(n, 4, |i| {
        let (k, m, nn, ii) = (i[0], i[1], i[2], i[3]);
        2.0 / hh * hg[[m]] * lu[[k]] * h[[nn, ii]] / f - dc[[m, k, nn, ii]]
    })
}

/// Residual of `F N^k_{inm} l_k = (2/H) H_i h_{mn}`.
pub fn l_contraction_residual(lj: &LocalJets) -> f64 {
    let lhs = einsum("kinm,k->inm", &[&lj.n3.val(), &lj.l_down.val()]).scale(lj.f.value());
    let rhs = outer(&lj.h_grad.val(), &lj.h.val()).scale(2.0 / lj.hh.value());
    lhs.max_diff(&rhs)
}

/// `T^k_{im} = -N^k_{im} - (1/H) H_i h^k_m` and `Δ^k_{im} = (1/H) H_i h^k_m`
/// from plain values.
pub fn total_connection(n2: &Tensor, h: f64, h_grad: &[f64], h_mixed: &Tensor) -> (Tensor, Tensor) {
    let n = n2.dim();
    let delta = Tensor::from_fn(n, 3, |i| h_grad[i[1]] / h * h_mixed[[i[0], i[2]]]);
    (n2.scale(-1.0).sub(&delta), delta)
}

/// Objects the covariant operators can be applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// `F`.
    F,
    /// `l_m`.
    L,
    /// `g_{mn}`.
    G,
    /// `h_{mn}`.
    H,
    /// `C^k_{ij}`.
    Cartan,
    /// `U^i`.
    U,
    /// `t^i = ȳ^i`.
    Ybar,
    /// `C^m_n = p t^m_n`.
    Deformation,
    /// `H p t^m`.
    ScaledYbar,
    /// `C̃^n_m = y^n_m / p`.
    Reciprocal,
}

/// The field and its slot kinds for a target.
pub fn target_field(lj: &LocalJets, target: Target) -> (Tensor<Jet>, Vec<Idx>) {
    use Idx::*;
    match target {
        Target::F => (lj.scalar(&lj.f), vec![]),
        Target::L => (lj.l_down.clone(), vec![Down]),
        Target::G => (lj.g.clone(), vec![Down, Down]),
        Target::H => (lj.h.clone(), vec![Down, Down]),
        Target::Cartan => (lj.c_up.clone(), vec![Up, Down, Down]),
        Target::U => (lj.u.clone(), vec![BaseUp]),
        Target::Ybar => (lj.ybar.clone(), vec![BaseUp]),
        Target::Deformation => (lj.t.times(&lj.p), vec![BaseUp, Down]),
        Target::ScaledYbar => (lj.ybar.times(&(lj.p.clone() * &lj.hh)), vec![BaseUp]),
        Target::Reciprocal => (lj.y_inv.times(&lj.p.recip()), vec![Up, BaseDown]),
    }
}

/// Covariant derivative of a built-in target; derivative index first.
pub fn covariant_derive(lj: &LocalJets, op: Operator, target: Target) -> Tensor {
    let (w, slots) = target_field(lj, target);
    lj.covariant(&w, &slots, op).val()
}

/// Residuals of the metricity and deflection laws.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricityResiduals {
    /// `|d_i F|`.
    pub d_f: f64,
    /// `|𝒯_i F|, |𝒯_i l_m|, |𝒯_i g_{mn}|`.
    pub total_f: f64,
    pub total_l: f64,
    pub total_g: f64,
    /// `|𝒟_k g_{mn} + (2/H) H_k h_{mn}|`.
    pub deflected_g: f64,
    /// `|𝒟_i h_{mn} - (2/F) h_{mn} d_i F + (2/H) H_i h_{mn}|`.
    pub deflected_h: f64,
    /// `|𝒟_n U^i|`.
    pub unit_field: f64,
    /// `|𝒟_n t^i - t^i H_n ln F|`, with `F` taken in the fixture's units.
    pub ybar_log: f64,
    /// `|𝒯_i (p t^m_n)|` and `|𝒯_i (H p t^m)|`.
    pub deformation: f64,
    pub scaled_ybar: f64,
    /// `|l_k T^k_{im} + l_k N^k_{im}|`.
    pub l_total: f64,
    /// `|𝒟_i S_n^k_{jm} + (2/H) H_i (h^k_j h_{mn} - h^k_m h_{jn})|`.
    pub s_tensor: f64,
}

pub fn metricity(lj: &LocalJets) -> MetricityResiduals {
    let n = lj.n;
    let hh = lj.hh.value();
    let f = lj.f.value();
    let hg = lj.h_grad.val();
    let h = lj.h.val();
    let hm = lj.h_mixed.val();
    let dh_law = outer(&hg, &h).scale(-2.0 / hh);
    let dfi = lj.d(&lj.scalar(&lj.f)).val();
    let dh = covariant_derive(lj, Operator::Deflectionless, Target::H);
    let dh_rhs = Tensor::from_fn(n, 3, |i| 2.0 / f * h[[i[1], i[2]]] * dfi[[i[0]]]).add(&dh_law);
    let dt = covariant_derive(lj, Operator::Deflectionless, Target::Ybar);
    let yb = lj.ybar.val();
    let dt_rhs = Tensor::from_fn(n, 2, |i| yb[[i[1]]] * hg[[i[0]]] * f.ln());
    let ll = lj.l_down.val();
    let l_total = einsum("k,kim->im", &[&ll, &lj.tc.val()])
        .max_diff(&einsum("k,kim->im", &[&ll, &lj.n2.val()]).scale(-1.0));
    // S_n^k_{jm} = (C^h_{nm} C^k_{hj} - C^h_{nj} C^k_{hm}) F²
    let cu = &lj.c_up;
    let sa = einsum("hnm,khj->nkjm", &[cu, cu]);
    let s = sa.minus(&sa.permute(&[0, 1, 3, 2])).times(&lj.f.sq());
    let ds = lj
        .covariant(&s, &[Idx::Down, Idx::Up, Idx::Down, Idx::Down], Operator::Deflectionless)
        .val(); // [i, n, k, j, m]
    let s_rhs = Tensor::from_fn(n, 5, |i| {
        let (ii, nn, k, j, m) = (i[0], i[1], i[2], i[3], i[4]);
        -2.0 / hh * hg[[ii]] * (hm[[k, j]] * h[[m, nn]] - hm[[k, m]] * h[[j, nn]])
    });
    MetricityResiduals {
        d_f: dfi.max_abs(),
        total_f: covariant_derive(lj, Operator::Total, Target::F).max_abs(),
        total_l: covariant_derive(lj, Operator::Total, Target::L).max_abs(),
        total_g: covariant_derive(lj, Operator::Total, Target::G).max_abs(),
        deflected_g: covariant_derive(lj, Operator::Deflectionless, Target::G).max_diff(&dh_law),
        deflected_h: dh.max_diff(&dh_rhs),
        unit_field: covariant_derive(lj, Operator::Deflectionless, Target::U).max_abs(),
        ybar_log: dt.max_diff(&dt_rhs),
        deformation: covariant_derive(lj, Operator::Total, Target::Deformation).max_abs(),
        scaled_ybar: covariant_derive(lj, Operator::Total, Target::ScaledYbar).max_abs(),
        l_total,
        s_tensor: ds.max_diff(&s_rhs),
    }
}

/// Metricity residual `|𝒟_i g_{mn}|` of the operator with the deflection
/// term deleted. Nonzero wherever `H_i ≠ 0`.
pub fn deflectionless_metricity(lj: &LocalJets) -> f64 {
    covariant_derive(lj, Operator::Deflectionless, Target::G).max_abs()
}

/// Solves `ȳ(x, y) = t` for `y` by Newton iteration from `start`.
pub fn inverse_deformation<T: FinslerSpace>(space: &T, x: &[f64], t: &[f64], start: &[f64]) -> Result<Vec<f64>> {
    let n = space.dim();
    let sp = JetSpace::get(n, 1);
    let xs: Vec<Jet> = x.iter().map(|&v| sp.constant(1, v)).collect();
    let mut y = start.to_vec();
    let tnorm = t.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let mut last = f64::INFINITY;
    for it in 0..60 {
        space.admissible(x, &y)?;
        let ys = sp.variables(1, &y);
        let yb = space
            .deformation(&xs, &ys)
            .ok_or_else(|| GeomError::InvalidArgument("the space admits no conformal deformation".into()))?;
        let ybt = Tensor::from_vec(n, 1, yb);
        let jac = ybt.grad(0).val();
        let r: Vec<f64> = (0..n).map(|i| ybt[[i]].value() - t[i]).collect();
        let res = r.iter().map(|v| v.abs()).fold(0.0, f64::max) / tnorm;
        if res < 1e-15 || (it > 3 && res >= last && res < 1e-12) {
            return Ok(y);
        }
        last = res;
        let ji = invert(&jac)?;
        for m in 0..n {
            y[m] -= (0..n).map(|i| ji[[m, i]] * r[i]).sum::<f64>();
        }
    }
    Err(GeomError::NoConvergence { iterations: 60, change: last })
}

/// The alternative representation `N^m_n = d^Riem_n y^m(x, t) + (1/H) H_n y^m ln F`
/// with `d^Riem_n = ∂/∂x^n - L^k_{nj} t^j ∂/∂t^k` acting on the inverse map
/// `y(x, t)`, whose base derivative is taken by central differences.
pub fn alternative_form<T: FinslerSpace>(space: &T, x: &[f64], y: &[f64]) -> Result<Tensor> {
    let lj = LocalJets::with_order(space, x, y, 3)?;
    let n = lj.n;
    let tb: Vec<f64> = lj.ybar.val().into_vec();
    let dyx = fd_gradient_x(|xp| Ok(Tensor::vector(&inverse_deformation(space, xp, &tb, y)?)), x, FD_STEP)?;
    let y_inv = lj.y_inv.val();
    let lc = lj.lc.val();
    let hg = lj.h_grad.val();
    let (hh, f) = (lj.hh.value(), lj.f.value());
    Ok(Tensor::from_fn(n, 2, |i| {
        let (m, nn) = (i[0], i[1]);
        let mut v = dyx[[m, nn]];
        for k in 0..n {
            let lt: f64 = (0..n).map(|j| lc[[k, nn, j]] * tb[j]).sum();
            v -= y_inv[[m, k]] * lt;
        }
        v + hg[[nn]] / hh * y[m] * f.ln()
    }))
}

/// Degree-0 covector test field `W_m(x, t) = c_m(x) + d_{mk}(x) t^k / S`.
pub fn covector_test_field<S: Scalar>(x: &[S], t: &[S], a: &Tensor<S>) -> Tensor<S> {
    let n = x.len();
    let s = norm_a(t, a);
    Tensor::from_fn(n, 1, |m| {
        let m = m[0];
        let c = (x[m].clone() + 0.3 * m as f64).sin() * 0.5;
        let mut v = c;
        for k in 0..n {
            let d = if k == m { x[0].cst(1.0) } else { x[0].cst(0.0) } + x[(m + k) % n].clone() * 0.2;
            v = v + d * &t[k] / &s;
        }
        v
    })
}

/// Degree-0 mixed test field `W^i_j(x, t)`.
pub fn mixed_test_field<S: Scalar>(x: &[S], t: &[S], a: &Tensor<S>) -> Tensor<S> {
    let n = x.len();
    let s2 = norm_a(t, a).sq();
    Tensor::from_fn(n, 2, |ij| {
        let (i, j) = (ij[0], ij[1]);
        let diag = if i == j { x[0].clone() * 0.1 + 1.0 } else { x[0].cst(0.0) };
        let mut tj = x[0].cst(0.0);
        for k in 0..n {
            tj = tj + a[[j, k]].clone() * &t[k];
        }
        diag + t[i].clone() * &tj / &s2 * 0.3 + (x[(i + 2 * j) % n].clone() * 0.7).cos() * 0.2
    })
}

fn norm_a<S: Scalar>(t: &[S], a: &Tensor<S>) -> S {
    let n = t.len();
    let mut s = t[0].cst(0.0);
    for i in 0..n {
        for j in 0..n {
            s = s + a[[i, j]].clone() * &t[i] * &t[j];
        }
    }
    s.sqrt()
}

/// Residuals of the transitivity laws.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransitivityResiduals {
    /// `|𝒯_i w_n - C^m_n ∇_i W_m|` with `w_n = C^m_n W_m`.
    pub covector: f64,
    /// `|𝒯_i w^n_m - C̃^n_a C^b_m ∇_i W^a_b|` with `w^n_m = C̃^n_a C^b_m W^a_b`.
    pub mixed: f64,
    /// `|𝒯_n C^m_k|`.
    pub deformation: f64,
    /// `|𝒯_n C̃^m_k|`.
    pub reciprocal: f64,
}

impl TransitivityResiduals {
    pub fn max(&self) -> f64 {
        self.covector.max(self.mixed).max(self.deformation).max(self.reciprocal)
    }
}

pub fn transitivity_check<T: FinslerSpace>(space: &T, lj: &LocalJets) -> Result<TransitivityResiduals> {
    let n = lj.n;
    let xs = lj.xs();
    let tb: Vec<Jet> = lj.ybar.data().to_vec();
    let cdef = lj.t.times(&lj.p);
    let ctil = lj.y_inv.times(&lj.p.recip());
    let wcov = covector_test_field(xs, &tb, &lj.a);
    let wmix = mixed_test_field(xs, &tb, &lj.a);
    let w_n = einsum("mn,m->n", &[&cdef, &wcov]);
    let w_nm = einsum("na,bm,ab->nm", &[&ctil, &cdef, &wmix]);
    let tw = lj.covariant(&w_n, &[Idx::Down], Operator::Total).val();
    let twm = lj.covariant(&w_nm, &[Idx::Up, Idx::Down], Operator::Total).val();
    let tbv = lj.ybar.val().into_vec();
    let field = space.base();
    let nab_cov = nabla(field, &lj.x, &tbv, &[Slot::Down], |x, t| {
        covector_test_field(x, t, &field.metric(x))
    })?;
    let nab_mix = nabla(field, &lj.x, &tbv, &[Slot::Up, Slot::Down], |x, t| {
        mixed_test_field(x, t, &field.metric(x))
    })?;
    let (cv, ctv) = (cdef.val(), ctil.val());
    let rhs_cov = einsum("mn,im->in", &[&cv, &nab_cov]);
    let rhs_mix = einsum("na,bm,iab->inm", &[&ctv, &cv, &nab_mix]);
    debug_assert_eq!(rhs_cov.dim(), n);
    Ok(TransitivityResiduals {
        covector: tw.max_diff(&rhs_cov),
        mixed: twm.max_diff(&rhs_mix),
        deformation: covariant_derive(lj, Operator::Total, Target::Deformation).max_abs(),
        reciprocal: covariant_derive(lj, Operator::Total, Target::Reciprocal).max_abs(),
    })
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

    const X: [f64; 3] = [0.3, -0.2, 0.5];
    const Y: [f64; 3] = [0.7, 0.9, -0.4];

    #[test]
    fn first_order_pass_matches_local_jets() {
        let sp = curv3();
        let lj = LocalJets::new(&sp, &X, &Y).unwrap();
        let n = n_coefficients(&sp, &X, &Y).unwrap();
        assert!(n.max_diff(&lj.n1.val()) < 1e-13);
    }

    #[test]
    fn generic_matches_explicit_finsleroid() {
        let sp = curv3();
        let n = n_coefficients(&sp, &X, &Y).unwrap();
        let e = sp.explicit_connection(&X, &Y).unwrap();
        assert!(n.max_diff(&e) < 1e-10, "{}", n.max_diff(&e));
    }

    #[test]
    fn closed_forms() {
        let sp = curv3();
        let lj = LocalJets::new(&sp, &X, &Y).unwrap();
        let b = ConnectionBundle::from_local(&lj);
        assert!(b.invariant_residual(&Y) < 1e-12);
        assert!(n2_closed_form(&lj).max_diff(&b.n2) < 1e-10, "{}", n2_closed_form(&lj).max_diff(&b.n2));
        let d4 = n3_closed_form(&lj).max_diff(&b.n3);
        assert!(d4 < 1e-10, "{d4}");
        assert!(l_contraction_residual(&lj) < 1e-10);
    }

    #[test]
    fn metricity_laws() {
        let sp = curv3();
        let lj = LocalJets::new(&sp, &X, &Y).unwrap();
        let m = metricity(&lj);
        for (name, v) in [
            ("d_f", m.d_f),
            ("total_f", m.total_f),
            ("total_l", m.total_l),
            ("total_g", m.total_g),
            ("deflected_g", m.deflected_g),
            ("deflected_h", m.deflected_h),
            ("unit_field", m.unit_field),
            ("ybar_log", m.ybar_log),
            ("deformation", m.deformation),
            ("scaled_ybar", m.scaled_ybar),
            ("l_total", m.l_total),
            ("s_tensor", m.s_tensor),
        ] {
            assert!(v < 1e-10, "{name}: {v}");
        }
        assert!(deflectionless_metricity(&lj) > 1e-3);
    }

    #[test]
    fn alternative_representation() {
        let sp = curv3();
        let alt = alternative_form(&sp, &X, &Y).unwrap();
        let n = n_coefficients(&sp, &X, &Y).unwrap();
        assert!(alt.max_diff(&n) < 1e-8, "{}", alt.max_diff(&n));
    }

    #[test]
    fn transitivity() {
        let sp = curv3();
        let lj = LocalJets::new(&sp, &X, &Y).unwrap();
        let r = transitivity_check(&sp, &lj).unwrap();
        assert!(r.max() < 1e-10, "{r:?}");
    }
}
