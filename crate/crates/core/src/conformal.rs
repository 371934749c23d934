//! The fiberwise conformal deformation `ȳ = F^H U` carrying the Finsler
//! tangent space onto a Euclidean one, its Jacobians and the identities
//! that tie the Finsler metric to the pulled-back Riemannian metric.

use crate::error::{GeomError, Result};
use crate::fd::{fd_derivative_1d, FD_STEP};
use crate::finsler::{FinslerSample, FinslerSpace};
use crate::jet::{Jet, JetSpace};
use crate::tensor::{einsum, invert, outer, Tensor};

/// Deformation data at one `(x, y)`.
#[derive(Clone, Debug)]
pub struct DeformationSample {
    pub f: f64,
    pub h: f64,
    /// `ȳ^i = t^i`.
    pub ybar: Vec<f64>,
    /// `S = √(a(ȳ, ȳ))`.
    pub s_norm: f64,
    /// `p = F^{1-H} / H`.
    pub p: f64,
    pub a: Tensor,
    pub a_inv: Tensor,
    /// `t^i_n = ∂ȳ^i/∂y^n`, layout `[i, n]`.
    pub t: Tensor,
    /// `y^m_i`, the inverse of `t`, layout `[m, i]`.
    pub y_inv: Tensor,
    /// `t^h_{nu} = ∂t^h_n/∂y^u`, layout `[h, n, u]`.
    pub t2: Tensor,
    /// `C^i_m = p t^i_m`.
    pub c_def: Tensor,
    /// `C̃^n_m = y^n_m / p`.
    pub c_tilde: Tensor,
}

fn require_unit_field<T: FinslerSpace>(space: &T, x: &[f64], y: &[f64]) -> Result<()> {
    if space.unit_field(x, y).is_none() {
        return Err(GeomError::InvalidArgument(
            "the space admits no conformal deformation".into(),
        ));
    }
    Ok(())
}

/// Builds the deformation sample from one order-2 jet pass in `y`.
pub fn deform<T: FinslerSpace>(space: &T, x: &[f64], y: &[f64]) -> Result<DeformationSample> {
    space.admissible(x, y)?;
    require_unit_field(space, x, y)?;
    let n = space.dim();
    let sp = JetSpace::get(n, 2);
    let ys = sp.variables(2, y);
    let xs: Vec<Jet> = x.iter().map(|&v| sp.constant(2, v)).collect();
    let yb = space.deformation(&xs, &ys).expect("unit field checked above");
    let ybt = Tensor::from_vec(n, 1, yb);
    let tj = ybt.grad(0);
    let t = tj.val();
    let t2 = tj.grad(0).val();
    let f = space.metric(x, y);
    let h = space.h_scalar(x);
    let (a, a_inv) = space.base().metric_at(x)?;
    let ybar = ybt.val().into_vec();
    let s_norm = einsum("ij,i,j->", &[&a, &Tensor::vector(&ybar), &Tensor::vector(&ybar)])[[]].sqrt();
    let p = f.powf(1.0 - h) / h;
    let y_inv = invert(&t)?;
    Ok(DeformationSample {
        f,
        h,
        s_norm,
        p,
        c_def: t.scale(p),
        c_tilde: y_inv.scale(1.0 / p),
        ybar,
        a,
        a_inv,
        t,
        y_inv,
        t2,
    })
}

impl DeformationSample {
    /// `y^k_{hp} = ∂y^k_h/∂t^p`, layout `[k, h, p]`, from
    /// `y^k_{hp} t^p_n = -y^k_p t^p_{nv} y^v_h`.
    pub fn y_inv_derivative(&self) -> Tensor {
        let rhs = einsum("kp,pnv,vh->khn", &[&self.y_inv, &self.t2, &self.y_inv]).scale(-1.0);
        einsum("khn,np->khp", &[&rhs, &self.y_inv])
    }

    /// Pulled-back metric `p² t^i_m t^j_n a_ij`.
    pub fn pullback_metric(&self) -> Tensor {
        einsum("im,jn,ij->mn", &[&self.t, &self.t, &self.a]).scale(self.p * self.p)
    }
}

/// Residuals of the algebraic identities relating the Jacobians.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JacobianResiduals {
    /// `|S(x, ȳ) - F^H|`.
    pub indicatrix: f64,
    /// `|ȳ^m_k y^k - H ȳ^m|`.
    pub homogeneity: f64,
    /// `|y^m_i t^i_n - δ|`.
    pub inverse: f64,
    /// `|g - p² tᵀ a t|`.
    pub pullback: f64,
    /// `y_m y^m_n = (1/H) F^{2(1-H)} t_n` with `t_n = a_nj ȳ^j`.
    pub covector_map: f64,
    /// `t_h t^h_n = H F^{2(H-1)} y_n`.
    pub covector_back: f64,
    /// `t_h t^h_{ni} = H(1-H) F^{2(H-1)} (g_ni - 2 l_n l_i)`.
    pub second_order: f64,
    /// `p² t^i_{mk} t^j a_ij = (1/H - 1)(h_km - l_k l_m)`.
    pub contracted_second: f64,
}

impl JacobianResiduals {
    pub fn max(&self) -> f64 {
        [
            self.indicatrix,
            self.homogeneity,
            self.inverse,
            self.pullback,
            self.covector_map,
            self.covector_back,
            self.second_order,
            self.contracted_second,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn jacobian_identities(d: &DeformationSample, s: &FinslerSample) -> JacobianResiduals {
    let n = s.dim();
    let (f, h) = (d.f, d.h);
    let yv = Tensor::vector(&s.y);
    let tb = Tensor::vector(&d.ybar);
    let t_low = einsum("nj,j->n", &[&d.a, &tb]);
    let yl = Tensor::vector(&s.y_low);
    let ll = Tensor::vector(&s.l_down);
    let covector_map = einsum("m,mn->n", &[&yl, &d.y_inv])
        .max_diff(&t_low.scale(f.powf(2.0 * (1.0 - h)) / h));
    let covector_back = einsum("h,hn->n", &[&t_low, &d.t]).max_diff(&yl.scale(h * f.powf(2.0 * (h - 1.0))));
    let lhs = einsum("h,hni->ni", &[&t_low, &d.t2]);
    let rhs = s.g.sub(&outer(&ll, &ll).scale(2.0)).scale(h * (1.0 - h) * f.powf(2.0 * (h - 1.0)));
    let lhs19 = einsum("imk,j,ij->km", &[&d.t2, &tb, &d.a]).scale(d.p * d.p);
    let rhs19 = s.h.sub(&outer(&ll, &ll)).scale(1.0 / h - 1.0);
    JacobianResiduals {
        indicatrix: (d.s_norm - f.powf(h)).abs(),
        homogeneity: einsum("mk,k->m", &[&d.t, &yv]).max_diff(&tb.scale(h)),
        inverse: einsum("mi,in->mn", &[&d.y_inv, &d.t]).max_diff(&Tensor::identity(n)),
        pullback: s.g.max_diff(&d.pullback_metric()),
        covector_map,
        covector_back,
        second_order: lhs.max_diff(&rhs),
        contracted_second: lhs19.max_diff(&rhs19),
    }
}

/// The deformation tensor, its reciprocal and the unholonomy
/// `∂C^i_m/∂y^n - ∂C^i_n/∂y^m`.
#[derive(Clone, Debug)]
pub struct DeformationTensor {
    pub c_def: Tensor,
    pub c_tilde: Tensor,
    /// Layout `[i, m, n]`.
    pub unholonomy: Tensor,
    /// `|g - C C a|`.
    pub pullback_residual: f64,
    /// `|C^i_m y^m - F^{1-H} ȳ^i|`.
    pub contraction_residual: f64,
    /// `|C C̃ - δ|`.
    pub reciprocal_residual: f64,
}

pub fn deformation_tensor(d: &DeformationSample, s: &FinslerSample) -> DeformationTensor {
    let n = s.dim();
    // ∂p/∂y^n = p (1 - H) l_n / F
    let dp = Tensor::vector(&s.l_down).scale(d.p * (1.0 - d.h) / d.f);
    let dc = outer(&d.t, &dp).add(&d.t2.scale(d.p));
    let yv = Tensor::vector(&s.y);
    DeformationTensor {
        unholonomy: dc.sub(&dc.swap_axes(1, 2)),
        pullback_residual: s.g.max_diff(&einsum("im,jn,ij->mn", &[&d.c_def, &d.c_def, &d.a])),
        contraction_residual: einsum("im,m->i", &[&d.c_def, &yv])
            .max_diff(&Tensor::vector(&d.ybar).scale(d.f.powf(1.0 - d.h))),
        reciprocal_residual: einsum("im,mj->ij", &[&d.c_def, &d.c_tilde]).max_diff(&Tensor::identity(n)),
        c_def: d.c_def.clone(),
        c_tilde: d.c_tilde.clone(),
    }
}

/// Residuals of the Cartan tensor expressed through the deformation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CartanViaMap {
    /// `C_mnk - (1-H)(l_k g_mn + l_n g_mk - l_m g_nk)/F - p² t^i_m t^j_{nk} a_ij`.
    pub cartan: f64,
    /// Skew identity required by the symmetry of `C_mnk`.
    pub skew: f64,
    /// `F C^m = -(N-2)(1-H) l^m + F g^{nk} t^i_{nk} y^m_i`.
    pub trace_up: f64,
    /// `F C_m = -(N-2)(1-H) l_m + F g^{nk} p² t^i_{nk} t^j_m a_ij`.
    pub trace_down: f64,
}

impl CartanViaMap {
    pub fn max(&self) -> f64 {
        self.cartan.max(self.skew).max(self.trace_up).max(self.trace_down)
    }
}

pub fn cartan_via_map(d: &DeformationSample, s: &FinslerSample) -> CartanViaMap {
    let n = s.dim();
    let (f, h, p) = (d.f, d.h, d.p);
    let l = &s.l_down;
    let g = &s.g;
    let ptt = einsum("im,jnk,ij->mnk", &[&d.t, &d.t2, &d.a]).scale(p * p);
    let geo = Tensor::from_fn(n, 3, |i| {
        let (m, nn, k) = (i[0], i[1], i[2]);
        (1.0 - h) / f * (l[k] * g[[m, nn]] + l[nn] * g[[m, k]] - l[m] * g[[nn, k]])
    });
    let cartan = s.c_low.max_diff(&geo.add(&ptt));
    // (1-H)(2/F)(l_k g_mn - l_m g_kn) + p²(t^i_m t^j_{nk} - t^i_k t^j_{nm}) a_ij
    let skew = Tensor::from_fn(n, 3, |i| {
        let (m, nn, k) = (i[0], i[1], i[2]);
        (1.0 - h) * 2.0 / f * (l[k] * g[[m, nn]] - l[m] * g[[k, nn]]) + ptt[[m, nn, k]] - ptt[[k, nn, m]]
    })
    .max_abs();
    let nf = n as f64;
    let c_trace = einsum("mnk,nk->m", &[&s.c_low, &s.g_inv]);
    let c_trace_up = einsum("km,m->k", &[&s.g_inv, &c_trace]);
    let up_rhs = einsum("nk,ink,mi->m", &[&s.g_inv, &d.t2, &d.y_inv]).scale(f).sub(
        &Tensor::vector(&s.l_up).scale((nf - 2.0) * (1.0 - h)),
    );
    let down_rhs = einsum("nk,ink,jm,ij->m", &[&s.g_inv, &d.t2, &d.t, &d.a])
        .scale(f * p * p)
        .sub(&Tensor::vector(l).scale((nf - 2.0) * (1.0 - h)));
    CartanViaMap {
        cartan,
        skew,
        trace_up: c_trace_up.scale(f).max_diff(&up_rhs),
        trace_down: c_trace.scale(f).max_diff(&down_rhs),
    }
}

/// Checks `g(l)(dl, dl) = (1/H²) a(dL, dL)` for indicatrix-tangent
/// displacements `dl`, with `dL` obtained by differentiating `L = t(x, l)`
/// along the indicatrix. Returns the largest absolute mismatch.
pub fn unit_correspondence<T: FinslerSpace>(space: &T, x: &[f64], y: &[f64]) -> Result<f64> {
    let s = crate::finsler::sample(space, x, y)?;
    require_unit_field(space, x, y)?;
    let n = s.dim();
    let h = space.h_scalar(x);
    let (a, _) = space.base().metric_at(x)?;
    let mut worst: f64 = 0.0;
    for dir in tangent_basis(&s) {
        let point = |eps: f64| -> Result<Tensor> {
            let w: Vec<f64> = (0..n).map(|i| s.l_up[i] + eps * dir[i]).collect();
            let fw = space.metric(x, &w);
            let l: Vec<f64> = w.iter().map(|v| v / fw).collect();
            let big_l = space.deformation(x, &l).expect("unit field checked above");
            Ok(Tensor::vector(&big_l))
        };
        let d_big_l = fd_derivative_1d(point, 0.0, FD_STEP)?;
        // dl = d/dε [(l + ε dir)/F] at ε = 0 = dir - l (l_m dir^m)
        let ld: f64 = (0..n).map(|i| s.l_down[i] * dir[i]).sum();
        let dl: Vec<f64> = (0..n).map(|i| dir[i] - s.l_up[i] * ld).collect();
        let dlt = Tensor::vector(&dl);
        let lhs = einsum("mn,m,n->", &[&s.g, &dlt, &dlt])[[]];
        let rhs = einsum("ij,i,j->", &[&a, &d_big_l, &d_big_l])[[]] / (h * h);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// A `g`-orthonormal basis of the `l`-orthogonal hyperplane.
pub fn tangent_basis(s: &FinslerSample) -> Vec<Vec<f64>> {
    let n = s.dim();
    let ip = |u: &[f64], v: &[f64]| -> f64 {
        let mut r = 0.0;
        for i in 0..n {
            for j in 0..n {
                r += s.g[[i, j]] * u[i] * v[j];
            }
        }
        r
    };
    let mut basis: Vec<Vec<f64>> = vec![s.l_up.clone()];
    for e in 0..n {
        let mut v: Vec<f64> = (0..n).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
        for b in &basis {
            let c = ip(&v, b) / ip(b, b);
            for i in 0..n {
                v[i] -= c * b[i];
            }
        }
        let nv = ip(&v, &v).sqrt();
        if nv > 1e-6 {
            basis.push(v.iter().map(|c| c / nv).collect());
        }
        if basis.len() == n {
            break;
        }
    }
    basis.remove(0);
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsler::sample;
    use crate::finsleroid::Finsleroid;
    use crate::riemann::{AxisField, BaseMetric, ChargeField, RiemannField};

    fn flat(g: f64) -> Finsleroid {
        Finsleroid::new(RiemannField {
            dim: 3,
            metric: BaseMetric::Flat,
            axis: AxisField::Coordinate { index: 0 },
            charge: ChargeField::Constant { g },
            torsion: None,
        })
        .unwrap()
    }

    // flat base, axis e_1, written out by hand
    fn k_by_hand(g: f64, y: &[f64]) -> f64 {
        let h = (1.0 - g * g / 4.0).sqrt();
        let b = y[0];
        let q = (y[1] * y[1] + y[2] * y[2]).sqrt();
        let big_b = b * b + g * b * q + q * q;
        let f = (h * q).atan2(b + g * q / 2.0);
        big_b.sqrt() * (-(g / h) * f / 2.0).exp()
    }

    fn hessian_by_hand(g: f64, y: &[f64]) -> Tensor {
        let e = 1e-4;
        let e2 = |y: &[f64]| 0.5 * k_by_hand(g, y).powi(2);
        Tensor::from_fn(3, 2, |ix| {
            let shifted = |si: f64, sj: f64| {
                let mut w = y.to_vec();
                w[ix[0]] += si * e;
                w[ix[1]] += sj * e;
                e2(&w)
            };
            (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0)) / (4.0 * e * e)
        })
    }

    const X: [f64; 3] = [0.1, -0.2, 0.3];
    const Y: [f64; 3] = [0.4, -0.7, 0.5];

    #[test]
    fn deformed_norm_is_a_power_of_f() {
        let g = 0.8;
        let sp = flat(g);
        let d = deform(&sp, &X, &Y).unwrap();
        let h = (1.0 - g * g / 4.0).sqrt();
        assert!((d.f - k_by_hand(g, &Y)).abs() < 1e-14);
        assert!((d.s_norm - k_by_hand(g, &Y).powf(h)).abs() < 1e-13);
    }

    #[test]
    fn pullback_matches_a_difference_hessian() {
        let sp = flat(0.8);
        let d = deform(&sp, &X, &Y).unwrap();
        assert!(d.pullback_metric().max_diff(&hessian_by_hand(0.8, &Y)) < 1e-6);
    }

    #[test]
    fn riemannian_limit_is_the_identity_map() {
        let d = deform(&flat(0.0), &X, &Y).unwrap();
        assert!(Tensor::vector(&d.ybar).max_diff(&Tensor::vector(&Y)) < 1e-14);
        assert!(d.t.max_diff(&Tensor::from_fn(3, 2, |i| (i[0] == i[1]) as u8 as f64)) < 1e-14);
        assert!((d.p - 1.0).abs() < 1e-14);
        assert!(d.t2.max_abs() < 1e-13);
    }

    #[test]
    fn jacobian_and_cartan_identities_hold() {
        let sp = flat(-1.2);
        let s = sample(&sp, &X, &Y).unwrap();
        let d = deform(&sp, &X, &Y).unwrap();
        assert!(jacobian_identities(&d, &s).max() < 1e-10);
        assert!(cartan_via_map(&d, &s).max() < 1e-10);
        assert!(unit_correspondence(&sp, &X, &Y).unwrap() < 1e-6);
    }

    #[test]
    fn tangent_basis_is_orthonormal_and_transverse() {
        let s = sample(&flat(0.8), &X, &Y).unwrap();
        let e = tangent_basis(&s);
        assert_eq!(e.len(), 2);
        for (i, u) in e.iter().enumerate() {
            let lu: f64 = (0..3).map(|k| s.l_down[k] * u[k]).sum();
            assert!(lu.abs() < 1e-12);
            for (j, v) in e.iter().enumerate() {
                let guv = einsum("ij,i,j->", &[&s.g, &Tensor::vector(u), &Tensor::vector(v)])[[]];
                assert!((guv - (i == j) as u8 as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quartic_space_has_no_deformation() {
        let q = crate::fixtures::fixture("QUARTIC3", 3).unwrap();
        assert!(deform(&q, &X, &Y).is_err());
    }
}
