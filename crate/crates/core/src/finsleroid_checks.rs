//! Identity checks specific to the Finsleroid: closed forms against the jet
//! engine, charge derivatives against central differences in `g`, and the
//! deflection laws of the metric and angular metric.

use crate::finsler::{sample, FinslerSpace};
use crate::finsleroid::{breve_of, chain, m_bar_of, Finsleroid};
use crate::jet::{Jet, JetSpace};
use crate::local::{Idx, LocalJets, Operator};
use crate::scalar::Scalar;
use crate::tensor::{einsum, outer, Tensor};
use crate::Result;

/// Step of the central differences in the charge parameter.
pub const CHARGE_STEP: f64 = 1e-5;

/// Residuals of the Finsleroid identities at one point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FinsleroidResiduals {
    /// `|y_i(closed) - ½ ∂K²/∂y^i|`.
    pub covector: f64,
    /// `|a(U, U) - 1|`.
    pub unit_norm: f64,
    /// `|m_i y^i|` and `|g^{ij} m_i m_j - 1|`.
    pub m_vector: f64,
    /// `|A^m - K C^{mn}_n|`.
    pub cartan_trace: f64,
    /// `|y_k η^{kn}| + |b_k η^{kn}|`.
    pub eta_nullity: f64,
    /// `|N(explicit) - N(generic)|`.
    pub explicit_connection: f64,
    /// `|∂M̄/∂y^n - 2 (q²/B) m_n / K|`.
    pub m_bar_gradient: f64,
    /// `|∂A_{mnj}/∂g - rhs|`, absent when `g` vanishes.
    pub cartan_charge: Option<f64>,
    /// `|∂K²/∂g - M̄ K²|`.
    pub k2_charge: f64,
    /// `|y_k ∂²N̆^k_i/∂y^m∂y^n - (2/h) h_i h_{mn}|` by differentiation.
    pub breve_contraction: f64,
    /// The same contraction from the closed form of `N̆^k_{imn}`.
    pub breve_contraction_closed: f64,
    /// `|N̆^k_{im}(closed) - ∂N̆^k_i/∂y^m|`.
    pub breve_first: f64,
    /// `|N̆^k_{imn}(closed) - ∂²N̆^k_i/∂y^m∂y^n|`.
    pub breve_second: f64,
    /// `|𝒟_i h_{nm} + (2/h) h_i h_{nm}|`.
    pub h_deflection: f64,
    /// `|𝒟_i g_{nm} - (g g_i / 2h²) h_{nm}|`.
    pub g_deflection: f64,
    /// `|N^k_{imn} - (2/h) h_i l^k h_{mn}/K + (1/K) 𝒟_i A^k_{mn}|`.
    pub full_second: f64,
}

fn y_jets(n: usize, order: usize, x: &[f64], y: &[f64]) -> (Vec<Jet>, Vec<Jet>) {
    let sp = JetSpace::get(n, order);
    let xs = x.iter().map(|&v| sp.constant(order, v)).collect();
    (xs, sp.variables(order, y))
}

/// `A_{mnj} = K C_{mnj}` at `(x, y)` with the charge replaced by `g`.
fn cartan_at_charge(sp: &Finsleroid, x: &[f64], y: &[f64], g: f64) -> Tensor {
    let n = sp.dim();
    let (xs, ys) = y_jets(n, 3, x, y);
    let k = chain(&sp.field, &xs, &ys, Some(xs[0].cst(g))).k;
    let kv = k.value();
    let e = Tensor::from_vec(n, 0, vec![k.sq() * 0.5]);
    e.grad(0).grad(0).grad(0).val().scale(0.5 * kv)
}

fn k2_at_charge(sp: &Finsleroid, x: &[f64], y: &[f64], g: f64) -> f64 {
    chain(&sp.field, x, y, Some(g)).k.powi(2)
}

pub fn finsleroid_identities(sp: &Finsleroid, x: &[f64], y: &[f64]) -> Result<FinsleroidResiduals> {
    let n = sp.dim();
    let s = sp.scalars(x, y)?;
    let fs = sample(sp, x, y)?;
    let cc = sp.cartan_contraction(x, y)?;
    let gi = sp.charge_gradient(x);
    let (g, h, k, b, q, bb) = (s.g, s.h, s.k, s.b, s.q, s.big_b);
    let h_grad: Vec<f64> = gi.iter().map(|v| -g * v / (4.0 * h)).collect();

    let covector = Tensor::vector(&sp.covector(x, y)?).max_diff(&Tensor::vector(&fs.y_low));
    let u = sp.u_field(x, y)?;
    let unit_norm = (einsum("ij,i,j->", &[&s.a, &Tensor::vector(&u), &Tensor::vector(&u)])[[]] - 1.0).abs();
    let ml = Tensor::vector(&cc.m_low);
    let m_vector = einsum("i,i->", &[&ml, &Tensor::vector(y)])[[]]
        .abs()
        .max((einsum("ij,i,j->", &[&fs.g_inv, &ml, &ml])[[]] - 1.0).abs());
    let c_trace = einsum("mnk,nk->m", &[&fs.c_up, &fs.g_inv]);
    let cartan_trace = c_trace.scale(k).max_diff(&Tensor::vector(&cc.a_up));
    let eta = sp.eta(x, y)?;
    let eta_nullity = einsum("k,kn->n", &[&Tensor::vector(&fs.y_low), &eta]).max_abs()
        + einsum("k,kn->n", &[&Tensor::vector(&s.b_low), &eta]).max_abs();
    let generic = crate::connection::n_coefficients(sp, x, y)?;
    let explicit_connection = generic.max_diff(&sp.explicit_connection(x, y)?);

    // ∂M̄/∂y^n by jets
    let (xs1, ys1) = y_jets(n, 1, x, y);
    let mb = m_bar_of(&chain(&sp.field, &xs1, &ys1, None));
    let m_bar_gradient = (0..n)
        .map(|i| (mb.d(i).value() - 2.0 * q * q / bb * cc.m_low[i] / k).abs())
        .fold(0.0, f64::max);

    let cartan_charge = (g.abs() > 1e-6).then(|| {
        let dp = cartan_at_charge(sp, x, y, g + CHARGE_STEP);
        let dm = cartan_at_charge(sp, x, y, g - CHARGE_STEP);
        let da = dp.sub(&dm).scale(0.5 / CHARGE_STEP);
        let a = fs.c_low.scale(k);
        let mmm = outer(&outer(&ml, &ml), &ml);
        let rhs = a
            .scale(1.5 * cc.m_bar + 1.0 / g - 2.0 * b * q / bb)
            .sub(&mmm.scale(g * b * q / bb));
        da.max_diff(&rhs)
    });
    let dk2 = (k2_at_charge(sp, x, y, g + CHARGE_STEP) - k2_at_charge(sp, x, y, g - CHARGE_STEP))
        / (2.0 * CHARGE_STEP);
    let k2_charge = (dk2 - cc.m_bar * k * k).abs();

    // N̆^k_i = N̆^k g_i differentiated twice in y
    let (xs2, ys2) = y_jets(n, 2, x, y);
    let nb = Tensor::from_vec(n, 1, breve_of(&chain(&sp.field, &xs2, &ys2, None), &ys2));
    let nb1 = nb.grad(0);
    let nb2 = nb1.grad(0).val(); // [k, m, n]
    let gt = Tensor::vector(&gi);
    let ad_first = einsum("km,i->kim", &[&nb1.val(), &gt]);
    let ad_second = einsum("kmn,i->kimn", &[&nb2, &gt]);
    let (first, second) = sp.breve_derivatives(x, y, &fs)?;
    let yl = Tensor::vector(&fs.y_low);
    let law = outer(&Tensor::vector(&h_grad), &fs.h).scale(2.0 / h);
    let breve_contraction = einsum("k,kimn->imn", &[&yl, &ad_second]).max_diff(&law);
    let breve_contraction_closed = einsum("k,kimn->imn", &[&yl, &second]).max_diff(&law);

    let lj = LocalJets::new(sp, x, y)?;
    let dh = lj.covariant(&lj.h, &[Idx::Down, Idx::Down], Operator::Deflectionless).val();
    let dg = lj.covariant(&lj.g, &[Idx::Down, Idx::Down], Operator::Deflectionless).val();
    let g_law = outer(&gt, &fs.h).scale(g / (2.0 * h * h));
    let a_up = lj.c_up.times(&lj.f);
    let da = lj.covariant(&a_up, &[Idx::Up, Idx::Down, Idx::Down], Operator::Deflectionless).val(); // [i, k, m, n]
    let lu = Tensor::vector(&fs.l_up);
    let full_rhs = Tensor::from_fn(n, 4, |t| {
        let (kk, i, m, nn) = (t[0], t[1], t[2], t[3]);
        2.0 / h * h_grad[i] * lu[[kk]] * fs.h[[m, nn]] / k - da[[i, kk, m, nn]] / k
    });
    Ok(FinsleroidResiduals {
        covector,
        unit_norm,
        m_vector,
        cartan_trace,
        eta_nullity,
        explicit_connection,
        m_bar_gradient,
        cartan_charge,
        k2_charge,
        breve_contraction,
        breve_contraction_closed,
        breve_first: first.max_diff(&ad_first),
        breve_second: second.max_diff(&ad_second),
        h_deflection: dh.max_diff(&law.scale(-1.0)),
        g_deflection: dg.max_diff(&g_law),
        full_second: lj.n3.val().max_diff(&full_rhs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::{AxisField, BaseMetric, ChargeField, RiemannField};

    #[test]
    fn all_identities_on_a_curved_inhomogeneous_point() {
        let sp = Finsleroid::new(RiemannField {
            dim: 3,
            metric: BaseMetric::Conformal { phi_grad: vec![0.1, 0.0, 0.0] },
            axis: AxisField::Coordinate { index: 0 },
            charge: ChargeField::Affine { g0: 0.4, grad: vec![0.0, 0.2, 0.0] },
            torsion: None,
        })
        .unwrap();
        let r = finsleroid_identities(&sp, &[0.3, -0.2, 0.5], &[0.7, 0.9, -0.4]).unwrap();
        let fields = [
            ("covector", r.covector),
            ("unit_norm", r.unit_norm),
            ("m_vector", r.m_vector),
            ("cartan_trace", r.cartan_trace),
            ("eta", r.eta_nullity),
            ("explicit", r.explicit_connection),
            ("m_bar_gradient", r.m_bar_gradient),
            ("breve_contraction", r.breve_contraction),
            ("breve_contraction_closed", r.breve_contraction_closed),
            ("breve_first", r.breve_first),
            ("breve_second", r.breve_second),
            ("h_deflection", r.h_deflection),
            ("g_deflection", r.g_deflection),
            ("full_second", r.full_second),
        ];
        for (name, v) in fields {
            assert!(v < 1e-9, "{name}: {v}");
        }
        assert!(r.cartan_charge.unwrap() < 1e-7, "{:?}", r.cartan_charge);
        assert!(r.k2_charge < 1e-8, "{}", r.k2_charge);
    }
}
