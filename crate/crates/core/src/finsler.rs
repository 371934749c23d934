//! Generic Finsler-space contract and the fiber-local quantities obtained
//! from `F` by differentiation in `y`.

use crate::error::{GeomError, Result};
use crate::jet::{Jet, JetSpace};
use crate::riemann::{HScalar, RiemannField};
use crate::scalar::Scalar;
use crate::tensor::{einsum, invert, outer, Tensor};

/// A Finsler space whose metric function, indicatrix-curvature scalar `H(x)`
/// and (when it exists) conformal unit field can be evaluated on any
/// [`Scalar`].
pub trait FinslerSpace: Send + Sync {
    fn dim(&self) -> usize;

    /// The associated Riemannian space (base metric, axis, charge, torsion).
    fn base(&self) -> &RiemannField;

    /// The metric function `F(x, y)`.
    fn metric<S: Scalar>(&self, x: &[S], y: &[S]) -> S;

    /// `H(x)`; the indicatrix curvature is `H²`.
    fn h_scalar<S: Scalar>(&self, x: &[S]) -> S;

    /// The `a`-unit field `U(x, y)` of the conformal deformation, if the space
    /// admits one.
    fn unit_field<S: Scalar>(&self, x: &[S], y: &[S]) -> Option<Vec<S>>;

    /// Rejects points where the closed forms degenerate.
    fn admissible(&self, x: &[f64], y: &[f64]) -> Result<()>;

    /// `H(x)` with its gradient.
    fn h_at(&self, x: &[f64]) -> HScalar {
        let sp = JetSpace::get(self.dim(), 1);
        let h = self.h_scalar(&sp.variables(1, x));
        HScalar {
            h: h.value(),
            grad: (0..self.dim()).map(|i| h.d(i).value()).collect(),
        }
    }

    /// The deformation map `ȳ = F^H U`.
    fn deformation<S: Scalar>(&self, x: &[S], y: &[S]) -> Option<Vec<S>> {
        let u = self.unit_field(x, y)?;
        let f = self.metric(x, y);
        let hx = self.h_scalar(x);
        let fh = (f.ln() * &hx).exp();
        Some(u.into_iter().map(|v| v * &fh).collect())
    }
}

/// Fiber-local quantities at one `(x, y)`.
#[derive(Clone, Debug)]
pub struct FinslerSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f: f64,
    /// `l^i = y^i / F`.
    pub l_up: Vec<f64>,
    /// `l_i = ∂F/∂y^i`.
    pub l_down: Vec<f64>,
    /// `y_i = ½ ∂F²/∂y^i`.
    pub y_low: Vec<f64>,
    pub g: Tensor,
    pub g_inv: Tensor,
    /// `C_{ijk}`.
    pub c_low: Tensor,
    /// `C^k_{ij}`, layout `[k, i, j]`.
    pub c_up: Tensor,
    /// `h_{mn} = g_{mn} - l_m l_n`.
    pub h: Tensor,
}

/// Evaluates the fiber quantities by one order-3 jet pass in `y`.
pub fn sample<T: FinslerSpace>(space: &T, x: &[f64], y: &[f64]) -> Result<FinslerSample> {
    space.admissible(x, y)?;
    let n = space.dim();
    let sp = JetSpace::get(n, 3);
    let ys = sp.variables(3, y);
    let xs: Vec<Jet> = x.iter().map(|&v| sp.constant(3, v)).collect();
    let f = space.metric(&xs, &ys);
    let fv = f.value();
    if !(fv > 0.0 && fv.is_finite()) {
        return Err(GeomError::Inadmissible(format!("F = {fv} at y = {y:?}")));
    }
    let e = f.sq() * 0.5;
    let e_t = Tensor::from_vec(n, 0, vec![e]);
    let yl = e_t.grad(0);
    let gj = yl.grad(0);
    let cj = gj.grad(0);
    let g = gj.val();
    let c_low = cj.val().scale(0.5);
    let g_inv = invert(&g)?;
    let c_up = einsum("kt,tij->kij", &[&g_inv, &c_low]);
    let l_up: Vec<f64> = y.iter().map(|v| v / fv).collect();
    let y_low = yl.val().into_vec();
    let l_down: Vec<f64> = y_low.iter().map(|v| v / fv).collect();
    let ld = Tensor::vector(&l_down);
    let h = g.sub(&outer(&ld, &ld));
    let s = FinslerSample {
        x: x.to_vec(),
        y: y.to_vec(),
        f: fv,
        l_up,
        l_down,
        y_low,
        g,
        g_inv,
        c_low,
        c_up,
        h,
    };
    if !(s.g.is_finite() && s.c_low.is_finite()) {
        return Err(GeomError::NonFinite("fiber sample"));
    }
    Ok(s)
}

impl FinslerSample {
    pub fn dim(&self) -> usize {
        self.y.len()
    }

    /// Residuals of `g y y = F²`, `C·y = 0`, `g g⁻¹ = I`, `y_i = g_ij y^j`,
    /// `h y = 0`, as the largest of them.
    pub fn invariant_residual(&self) -> f64 {
        let n = self.dim();
        let y = Tensor::vector(&self.y);
        let gyy = einsum("ij,i,j->", &[&self.g, &y, &y])[[]];
        let r1 = (gyy - self.f * self.f).abs() / (self.f * self.f);
        let r2 = einsum("ijk,k->ij", &[&self.c_low, &y]).max_abs();
        let r3 = einsum("ij,jk->ik", &[&self.g, &self.g_inv]).max_diff(&Tensor::identity(n));
        let r4 = einsum("ij,j->i", &[&self.g, &y]).max_diff(&Tensor::vector(&self.y_low));
        let r5 = einsum("ij,j->i", &[&self.h, &y]).max_abs();
        [r1, r2, r3, r4, r5].into_iter().fold(0.0, f64::max)
    }

    pub fn h_mixed(&self) -> Tensor {
        einsum("kt,tm->km", &[&self.g_inv, &self.h])
    }
}

/// `S_n^k_{ij} = (C^h_{nj} C^k_{hi} - C^h_{ni} C^k_{hj}) F²`, layout `[n, k, i, j]`.
pub fn s_tensor(s: &FinslerSample) -> Tensor {
    let a = einsum("hnj,khi->nkij", &[&s.c_up, &s.c_up]);
    a.sub(&a.swap_axes(2, 3)).scale(s.f * s.f)
}

/// `S_{nmij} = g_{mk} S_n^k_{ij}`.
pub fn s_tensor_lowered(s: &FinslerSample) -> Tensor {
    einsum("mk,nkij->nmij", &[&s.g, &s_tensor(s)])
}

/// The constant-curvature form `h_{nj} h_{mi} - h_{ni} h_{mj}`.
pub fn curvature_form(h: &Tensor) -> Tensor {
    let a = einsum("nj,mi->nmij", &[h, h]);
    a.sub(&a.swap_axes(2, 3))
}

/// Fitted indicatrix curvature.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatrixCurvature {
    /// `C_Ind = 1 - C` where `S = C (h∧h)` in the least-squares sense.
    pub c_ind: f64,
    /// Frobenius norm of `S - C (h∧h)`.
    pub residual: f64,
}

pub fn indicatrix_curvature(s: &FinslerSample) -> IndicatrixCurvature {
    let st = s_tensor_lowered(s);
    let p = curvature_form(&s.h);
    let pp: f64 = p.data().iter().map(|v| v * v).sum();
    let sp: f64 = p.data().iter().zip(st.data()).map(|(a, b)| a * b).sum();
    let c = sp / pp;
    IndicatrixCurvature {
        c_ind: 1.0 - c,
        residual: st.sub(&p.scale(c)).norm(),
    }
}

/// Weyl-tensor diagnostics of the tangent Riemannian space.
#[derive(Clone, Debug, PartialEq)]
pub struct WeylCheck {
    /// `|(N-2) F² W_{ijmn} l^n l^j + S_im - S̆ h_im/(N-1)|`; an algebraic
    /// identity, zero for every Finsler space.
    pub contraction_identity: f64,
    /// `|F² W|`; vanishes exactly when `S` has the constant-curvature form.
    pub weyl_norm: f64,
    /// `|S_im - S̆ h_im/(N-1)|`.
    pub trace_free_ricci: f64,
}

pub fn weyl_contraction_check(s: &FinslerSample) -> Result<WeylCheck> {
    let n = s.dim();
    if n < 4 {
        return Err(GeomError::InvalidArgument(format!(
            "the Weyl check needs N >= 4, got N = {n}"
        )));
    }
    let nf = n as f64;
    let st = s_tensor_lowered(s); // S_{ijmn}
    let ric = einsum("jn,ijmn->im", &[&s.g_inv, &st]);
    let sc = einsum("im,im->", &[&s.g_inv, &ric])[[]];
    let g = &s.g;
    let w = Tensor::from_fn(n, 4, |k| {
        let (i, j, m, q) = (k[0], k[1], k[2], k[3]);
        st[[i, j, m, q]]
            - (ric[[i, m]] * g[[j, q]] + ric[[j, q]] * g[[i, m]] - ric[[i, q]] * g[[j, m]] - ric[[j, m]] * g[[i, q]])
                / (nf - 2.0)
            + sc * (g[[i, m]] * g[[j, q]] - g[[i, q]] * g[[j, m]]) / ((nf - 1.0) * (nf - 2.0))
    });
    let l = Tensor::vector(&s.l_up);
    let wll = einsum("ijmn,n,j->im", &[&w, &l, &l]).scale(nf - 2.0);
    let tf = ric.sub(&s.h.scale(sc / (nf - 1.0)));
    Ok(WeylCheck {
        contraction_identity: wll.add(&tf).norm(),
        weyl_norm: w.norm(),
        trace_free_ricci: tf.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;

    #[test]
    fn riemannian_sample_is_euclidean() {
        let sp = fixture("SPHERE3", 3).unwrap();
        let x = [0.0; 3];
        let y = [0.3, -0.4, 1.2];
        let s = sample(&sp, &x, &y).unwrap();
        // the stereographic chart is normalized to δ at the origin
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((s.f - norm).abs() < 1e-14);
        assert!(s.g.max_diff(&Tensor::from_fn(3, 2, |i| (i[0] == i[1]) as u8 as f64)) < 1e-13);
        assert!(s.c_low.max_abs() < 1e-13);
    }

    #[test]
    fn metric_tensor_is_scale_invariant() {
        let sp = fixture("CURV3", 3).unwrap();
        let x = [0.1, 0.2, -0.1];
        let y = [0.5, -0.3, 0.8];
        let s1 = sample(&sp, &x, &y).unwrap();
        let s2 = sample(&sp, &x, &y.map(|v| 3.0 * v)).unwrap();
        assert!(s1.g.max_diff(&s2.g) < 1e-12);
        assert!(s1.c_low.max_diff(&s2.c_low.scale(3.0)) < 1e-12);
        assert!((s2.f - 3.0 * s1.f).abs() < 1e-13);
    }

    #[test]
    fn indicatrix_curvature_of_the_finsleroid() {
        let sp = fixture("FLAT3", 4).unwrap();
        let s = sample(&sp, &[0.0; 4], &[0.2, 0.5, -0.6, 0.3]).unwrap();
        let ic = indicatrix_curvature(&s);
        let h2 = 1.0 - 0.8f64 * 0.8 / 4.0;
        assert!((ic.c_ind - h2).abs() < 1e-12);
        assert!(ic.residual < 1e-12);
    }

    #[test]
    fn quartic_indicatrix_curvature_varies_with_direction() {
        // a two-dimensional indicatrix always fits the constant-curvature form
        // pointwise, so the failure shows up as a direction-dependent C_Ind
        let sp = fixture("QUARTIC3", 3).unwrap();
        let c = |y: &[f64]| indicatrix_curvature(&sample(&sp, &[0.0; 3], y).unwrap()).c_ind;
        assert!((c(&[0.2, 0.5, -0.6]) - c(&[0.9, 0.1, 0.2])).abs() > 1e-2);
    }

    #[test]
    fn quartic_indicatrix_is_not_constant_curvature_in_four_dimensions() {
        let sp = fixture("QUARTIC3", 4).unwrap();
        let s = sample(&sp, &[0.0; 4], &[0.2, 0.5, -0.6, 0.3]).unwrap();
        assert!(indicatrix_curvature(&s).residual > 1e-3);
    }
}
