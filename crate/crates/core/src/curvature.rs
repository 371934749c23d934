//! Curvature entailed by the connection: `M^n_{ij}` by two routes,
//! `E_k^n_{ij}`, the curvature tensor `ρ_k^n_{ij}`, their contraction and
//! norm identities, and the covariant-derivative identities.

use crate::jet::Jet;
use crate::local::{Idx, LocalJets, Operator};
use crate::riemann::RiemannField;
use crate::scalar::Scalar;
use crate::tensor::{einsum, Tensor};

/// Base curvature `a_k^h_{ij}` as jets, layout `[k, h, i, j]`.
pub fn base_curvature_jets(lj: &LocalJets) -> Tensor<Jet> {
    RiemannField::curvature_from_connection(&lj.lc)
}

/// Closed form `M^n_{ij} = -y^n_t t^h a_h^t_{ij}` as jets, layout `[n, i, j]`.
pub fn m_closed_jets(lj: &LocalJets) -> Tensor<Jet> {
    let r = base_curvature_jets(lj);
    einsum("nt,h,htij->nij", &[&lj.y_inv, &lj.ybar, &r]).times_f(-1.0)
}

/// `M^n_{ij} = d_i N^n_j - d_j N^n_i`.
pub fn m_commutator(lj: &LocalJets) -> Tensor {
    let dn = lj.d(&lj.n1).val(); // [i, n, j]
    let m = dn.permute(&[1, 0, 2]); // [n, i, j] = d_i N^n_j
    m.sub(&m.swap_axes(1, 2))
}

/// `ρ` by the closed representation, as jets, layout `[k, n, i, j]`:
/// `-(1-H)(l_k δ^n_m - l^n g_{mk}) M^m_{ij}/F + y^n_m a_h^m_{ij} t^h_k`.
pub fn rho_closed_jets(lj: &LocalJets) -> Tensor<Jet> {
    let n = lj.n;
    let m = m_closed_jets(lj);
    let r = base_curvature_jets(lj);
    let one_minus = (lj.hh.cst(1.0) - &lj.hh) / &lj.f;
    let pm = projector_jets(lj);
    let first = einsum("knm,mij->knij", &[&pm, &m]).times(&one_minus);
    let second = einsum("nm,hmij,hk->knij", &[&lj.y_inv, &r, &lj.t]);
    debug_assert_eq!(first.dim(), n);
    second.minus(&first)
}

/// `P_k^n_m = l_k δ^n_m - l^n g_{mk}` as jets, layout `[k, n, m]`.
fn projector_jets(lj: &LocalJets) -> Tensor<Jet> {
    let z = lj.f.cst(0.0);
    Tensor::from_fn(lj.n, 3, |i| {
        let (k, nn, m) = (i[0], i[1], i[2]);
        let d = if nn == m { lj.l_down[[k]].clone() } else { z.clone() };
        d - lj.l_up[[nn]].clone() * &lj.g[[m, k]]
    })
}

/// Curvature objects at one point, plain values.
#[derive(Clone, Debug)]
pub struct CurvatureBundle {
    /// Closed-form `M^n_{ij}`.
    pub m: Tensor,
    /// Commutator-route `M^n_{ij}`.
    pub m_commutator: Tensor,
    /// `E_k^n_{ij}` from the explicit representation.
    pub e: Tensor,
    /// `ρ_k^n_{ij} = E_k^n_{ij} - M^h_{ij} C^n_{hk}`.
    pub rho: Tensor,
    /// `ρ` by the closed representation.
    pub rho_closed: Tensor,
    /// `a_k^h_{ij}`.
    pub a_curv: Tensor,
}

impl CurvatureBundle {
    pub fn new(lj: &LocalJets) -> CurvatureBundle {
        let m = m_closed_jets(lj).val();
        let a_curv = base_curvature_jets(lj).val();
        let y_inv = lj.y_inv.val();
        let t = lj.t.val();
        let t2 = lj.t2.val();
        // E_k^n_{ij} = y^n_h t^h_{km} M^m_{ij} + y^n_m a_h^m_{ij} t^h_k
        let e = einsum("nh,hkm,mij->knij", &[&y_inv, &t2, &m])
            .add(&einsum("nm,hmij,hk->knij", &[&y_inv, &a_curv, &t]));
        let rho = e.sub(&einsum("hij,nhk->knij", &[&m, &lj.c_up.val()]));
        CurvatureBundle {
            m_commutator: m_commutator(lj),
            rho_closed: rho_closed_jets(lj).val(),
            m,
            e,
            rho,
            a_curv,
        }
    }

    /// Largest absolute entry over `M`, `E`, `ρ` and the base curvature.
    pub fn max_abs(&self) -> f64 {
        [&self.m, &self.m_commutator, &self.e, &self.rho, &self.rho_closed, &self.a_curv]
            .iter()
            .map(|t| t.max_abs())
            .fold(0.0, f64::max)
    }
}

/// `E_k^n_{ij} = d_i T^n_{jk} - d_j T^n_{ik} + T^m_{jk} T^n_{im} - T^m_{ik} T^n_{jm}`
/// straight from its definition.
pub fn e_from_definition(lj: &LocalJets) -> Tensor {
    let tc = lj.tc.val();
    let dt = lj.d(&lj.tc).val(); // [i, n, j, k]
    let n = lj.n;
    Tensor::from_fn(n, 4, |idx| {
        let (k, nn, i, j) = (idx[0], idx[1], idx[2], idx[3]);
        let mut v = dt[[i, nn, j, k]] - dt[[j, nn, i, k]];
        for m in 0..n {
            v += tc[[m, j, k]] * tc[[nn, i, m]] - tc[[m, i, k]] * tc[[nn, j, m]];
        }
        v
    })
}

/// Residuals of the contraction identities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContractionResiduals {
    /// `|y_n M^n_{ij}|`.
    pub y_m: f64,
    /// `|y^k E_k^n_{ij} + M^n_{ij}|`.
    pub y_e: f64,
    /// `|y_n E_k^n_{ij} - M_{kij}|`.
    pub y_low_e: f64,
    /// `|ρ_{mnij} + ρ_{nmij}|`.
    pub skew: f64,
    /// `|y^k ρ_k^n_{ij} + M^n_{ij}|`.
    pub y_rho: f64,
    /// `|y_n ρ_k^n_{ij} - M_{kij}|`.
    pub y_low_rho: f64,
    /// `|E_{mnij} + E_{nmij} - 2 C_{mnh} M^h_{ij}|`.
    pub e_symmetric: f64,
    /// `|ρ(definition) - ρ(closed)|`.
    pub rho_routes: f64,
}

impl ContractionResiduals {
    /// The identities stated for `ρ` alone.
    pub fn rho_max(&self) -> f64 {
        self.skew.max(self.y_rho).max(self.y_low_rho)
    }
}

pub fn contraction_identities(lj: &LocalJets, cb: &CurvatureBundle) -> ContractionResiduals {
    let g = lj.g.val();
    let y = Tensor::vector(&lj.y);
    let yl = einsum("nm,m->n", &[&g, &y]);
    let m_low = einsum("nm,mij->nij", &[&g, &cb.m]);
    let e_low = einsum("nm,kmij->knij", &[&g, &cb.e]);
    let r_low = einsum("nm,kmij->knij", &[&g, &cb.rho]);
    ContractionResiduals {
        y_m: einsum("n,nij->ij", &[&yl, &cb.m]).max_abs(),
        y_e: einsum("k,knij->nij", &[&y, &cb.e]).max_diff(&cb.m.scale(-1.0)),
        y_low_e: einsum("n,knij->kij", &[&yl, &cb.e]).max_diff(&m_low),
        skew: r_low.add(&r_low.swap_axes(0, 1)).max_abs(),
        y_rho: einsum("k,knij->nij", &[&y, &cb.rho]).max_diff(&cb.m.scale(-1.0)),
        y_low_rho: einsum("n,knij->kij", &[&yl, &cb.rho]).max_diff(&m_low),
        e_symmetric: e_low
            .add(&e_low.swap_axes(0, 1))
            .max_diff(&einsum("mnh,hij->mnij", &[&lj.c_low.val(), &cb.m]).scale(2.0)),
        rho_routes: cb.rho.max_diff(&cb.rho_closed),
    }
}

/// Relative residuals of the norm identities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormResiduals {
    /// `M_{nij} = -p² t^h t^m_n a_{hmij}`.
    pub m_lowered: f64,
    /// `M·M = p² (t a)·(t a)`.
    pub m_square: f64,
    /// `ρ·ρ = a·a + (2/S²)(1/H² - 1)(t a)·(t a)`.
    pub rho_square: f64,
    pub m_norm2: f64,
    pub rho_norm2: f64,
    pub a_norm2: f64,
}

impl NormResiduals {
    pub fn max(&self) -> f64 {
        self.m_lowered.max(self.m_square).max(self.rho_square)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s < 1e-300 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

pub fn norm_identities(lj: &LocalJets, cb: &CurvatureBundle) -> NormResiduals {
    let g = lj.g.val();
    let gi = lj.g_inv.val();
    let a = lj.a.val();
    let ai = lj.a_inv.val();
    let tb = lj.ybar.val();
    let t = lj.t.val();
    let p = lj.p.value();
    let hh = lj.hh.value();
    let s2 = einsum("ij,i,j->", &[&a, &tb, &tb])[[]];
    let a_low = einsum("lr,hrij->hlij", &[&a, &cb.a_curv]);
    let m_low = einsum("nm,mij->nij", &[&g, &cb.m]);
    let m19 = einsum("h,mn,hmij->nij", &[&tb, &t, &a_low]).scale(-p * p);
    let mm = einsum("nm,mij,nab,ia,jb->", &[&g, &cb.m, &cb.m, &ai, &ai])[[]];
    let ta = einsum("l,lnij->nij", &[&tb, &a_low]);
    let ta2 = einsum("nij,mab,nm,ia,jb->", &[&ta, &ta, &ai, &ai, &ai])[[]];
    let r_low = einsum("nm,kmij->knij", &[&g, &cb.rho]);
    let rr = einsum("knij,pqab,kp,nq,ia,jb->", &[&r_low, &r_low, &gi, &gi, &ai, &ai])[[]];
    let aa = einsum("knij,pqab,kp,nq,ia,jb->", &[&a_low, &a_low, &ai, &ai, &ai, &ai])[[]];
    let scale = m_low.max_abs().max(m19.max_abs());
    NormResiduals {
        m_lowered: if scale > 0.0 { m_low.max_diff(&m19) / scale } else { 0.0 },
        m_square: rel(mm, p * p * ta2),
        rho_square: rel(rr, aa + 2.0 / s2 * (1.0 / (hh * hh) - 1.0) * ta2),
        m_norm2: mm,
        rho_norm2: rr,
        a_norm2: aa,
    }
}

/// Residuals of the covariant-derivative identities for `M` and `ρ`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DerivativeResiduals {
    /// `|𝒯_l M^n_{ij} + y^n_t t^h (∇_l - H_l/H) a_h^t_{ij}|`.
    pub m_derivative: f64,
    /// The analogous identity for `𝒯_l ρ_k^n_{ij}`.
    pub rho_derivative: f64,
}

pub fn curvature_derivative_check(lj: &LocalJets) -> DerivativeResiduals {
    use Idx::*;
    let n = lj.n;
    let r = base_curvature_jets(lj);
    let m = m_closed_jets(lj);
    let tm = lj.covariant(&m, &[Up, BaseDown, BaseDown], Operator::Total).val(); // [l, n, i, j]
    let nab_r = lj.covariant(&r, &[BaseDown, BaseUp, BaseDown, BaseDown], Operator::Total).val(); // [l, h, t, i, j]
    let rv = r.val();
    let hg = lj.h_grad.val();
    let hh = lj.hh.value();
    let shifted = Tensor::from_fn(n, 5, |i| nab_r.at(i) - hg[[i[0]]] / hh * rv.at(&i[1..]));
    let y_inv = lj.y_inv.val();
    let tb = lj.ybar.val();
    let t = lj.t.val();
    let m_rhs = einsum("nt,h,lhtij->lnij", &[&y_inv, &tb, &shifted]).scale(-1.0);

    let rho = rho_closed_jets(lj);
    let trho = lj.covariant(&rho, &[Down, Up, BaseDown, BaseDown], Operator::Total).val(); // [l, k, n, i, j]
    let pm = projector_jets(lj).val().scale(1.0 / lj.f.value());
    let mv = m.val();
    let rho_rhs = einsum("knm,mt,h,lhtij->lknij", &[&pm, &y_inv, &tb, &shifted])
        .scale(1.0 - hh)
        .add(&einsum("nm,hk,lhmij->lknij", &[&y_inv, &t, &nab_r]))
        .add(&einsum("l,knm,mij->lknij", &[&hg, &pm, &mv]));
    DerivativeResiduals {
        m_derivative: tm.max_diff(&m_rhs),
        rho_derivative: trho.max_diff(&rho_rhs),
    }
}

/// Degree-0 mixed test field `w^n_k(x, y)` for the commutator law.
pub fn commutator_test_field(lj: &LocalJets) -> Tensor<Jet> {
    let n = lj.n;
    let xs = lj.xs();
    let ys = lj.ys();
    let f2 = lj.f.sq();
    Tensor::from_fn(n, 2, |i| {
        let (a, k) = (i[0], i[1]);
        let diag = if a == k { xs[0].clone() * 0.2 + 1.0 } else { xs[0].cst(0.0) };
        diag + ys[a].clone() * &ys[k] / &f2 * 0.3
            + (xs[(a + k) % n].clone() + ys[0].clone() / &lj.f).cos() * 0.1
    })
}

/// Residual of `[𝒯_i, 𝒯_j] w^n_k = M^h_{ij} 𝒮_h w^n_k - ρ_k^h_{ij} w^n_h + ρ_h^n_{ij} w^h_k`
/// with `𝒮_h w^n_k = ∂w^n_k/∂y^h + C^n_{hs} w^s_k - C^m_{hk} w^n_m`.
pub fn commutator_law(lj: &LocalJets, cb: &CurvatureBundle) -> f64 {
    use Idx::*;
    let w = commutator_test_field(lj);
    let tw = lj.covariant(&w, &[Up, Down], Operator::Total); // [j, n, k]
    let ttw = lj.covariant(&tw, &[BaseDown, Up, Down], Operator::Total).val(); // [i, j, n, k]
    let lhs = ttw.sub(&ttw.permute(&[1, 0, 2, 3]));
    let wv = w.val();
    let wy = lj.dy(&w).val(); // [n, k, h]
    let cu = lj.c_up.val();
    let n = lj.n;
    let s = Tensor::from_fn(n, 3, |i| {
        let (h, nn, k) = (i[0], i[1], i[2]);
        let mut v = wy[[nn, k, h]];
        for q in 0..n {
            v += cu[[nn, h, q]] * wv[[q, k]] - cu[[q, h, k]] * wv[[nn, q]];
        }
        v
    });
    let rhs = einsum("hij,hnk->ijnk", &[&cb.m, &s])
        .sub(&einsum("khij,nh->ijnk", &[&cb.rho, &wv]))
        .add(&einsum("hnij,hk->ijnk", &[&cb.rho, &wv]));
    lhs.max_diff(&rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsleroid::Finsleroid;
    use crate::riemann::{AxisField, BaseMetric, ChargeField};

    fn space(metric: BaseMetric, charge: ChargeField) -> Finsleroid {
        Finsleroid::new(RiemannField {
            dim: 3,
            metric,
            axis: AxisField::Coordinate { index: 0 },
            charge,
            torsion: None,
        })
        .unwrap()
    }

    fn curv3() -> Finsleroid {
        space(
            BaseMetric::Conformal { phi_grad: vec![0.1, 0.0, 0.0] },
            ChargeField::Affine { g0: 0.4, grad: vec![0.0, 0.2, 0.0] },
        )
    }

    const X: [f64; 3] = [0.3, -0.2, 0.5];
    const Y: [f64; 3] = [0.7, 0.9, -0.4];

    #[test]
    fn routes_and_contractions() {
        let sp = curv3();
        let lj = LocalJets::new(&sp, &X, &Y).unwrap();
        let cb = CurvatureBundle::new(&lj);
        assert!(cb.m.max_abs() > 1e-3);
        assert!(cb.m.max_diff(&cb.m_commutator) < 1e-10);
        let c = contraction_identities(&lj, &cb);
        assert!(c.rho_max() < 1e-10 && c.y_m < 1e-10 && c.y_e < 1e-10 && c.y_low_e < 1e-10, "{c:?}");
        assert!(c.e_symmetric < 1e-10 && c.rho_routes < 1e-10, "{c:?}");
        assert!(e_from_definition(&lj).max_diff(&cb.e) < 1e-9);
    }

    #[test]
    fn norms_and_derivatives() {
        let sp = curv3();
        let lj = LocalJets::new(&sp, &X, &Y).unwrap();
        let cb = CurvatureBundle::new(&lj);
        let nr = norm_identities(&lj, &cb);
        assert!(nr.max() < 1e-10, "{nr:?}");
        let d = curvature_derivative_check(&lj);
        assert!(d.m_derivative < 1e-9 && d.rho_derivative < 1e-9, "{d:?}");
    }

    #[test]
    fn commutator() {
        let sp = curv3();
        let lj = LocalJets::new(&sp, &X, &Y).unwrap();
        let cb = CurvatureBundle::new(&lj);
        let r = commutator_law(&lj, &cb);
        assert!(r < 1e-9, "{r}");
    }

    #[test]
    fn flat_base_has_no_curvature() {
        let sp = space(BaseMetric::Flat, ChargeField::Constant { g: 0.8 });
        let lj = LocalJets::new(&sp, &X, &Y).unwrap();
        assert_eq!(CurvatureBundle::new(&lj).max_abs(), 0.0);
    }
}
