//! Derivative engines: exact y-derivatives through jets and a central
//! difference in x with one Richardson level.

use crate::error::{GeomError, Result};
use crate::jet::{Jet, JetSpace};
use crate::tensor::Tensor;

/// Default step for x finite differences.
pub const FD_STEP: f64 = 1e-4;

/// Symmetric derivative tensor `∂^order f / ∂y ... ∂y` at `y`.
///
/// `f` is evaluated once on jets, so the result is exact for polynomials of
/// degree up to `order` and accurate to rounding otherwise. Order 0 returns the
/// value as a rank-0 tensor.
pub fn differentiate_y<F>(f: F, y: &[f64], order: usize) -> Result<Tensor>
where
    F: Fn(&[Jet]) -> Jet,
{
    if order > 4 {
        return Err(GeomError::InvalidArgument(format!(
            "derivative order {order} exceeds 4"
        )));
    }
    let n = y.len();
    let sp = JetSpace::get(n, order.max(1));
    let vars = sp.variables(order.max(1), y);
    let v = f(&vars);
    let mut exps = vec![0u8; n];
    let out = Tensor::from_fn(n, order, |idx| {
        exps.iter_mut().for_each(|e| *e = 0);
        for &i in idx {
            exps[i] += 1;
        }
        v.partial(&exps)
    });
    if !out.is_finite() {
        return Err(GeomError::NonFinite("fiber derivative"));
    }
    Ok(out)
}

/// Gradient of a tensor-valued function of the base point by central
/// differences with one Richardson level (error `O(step⁴)`). The derivative
/// index is appended as the last axis.
pub fn fd_gradient_x<F>(f: F, x: &[f64], step: f64) -> Result<Tensor>
where
    F: Fn(&[f64]) -> Result<Tensor>,
{
    if !(step > 0.0) {
        return Err(GeomError::InvalidArgument(format!("step {step} must be positive")));
    }
    let n = x.len();
    let mut parts = Vec::with_capacity(n);
    for i in 0..n {
        let central = |h: f64| -> Result<Tensor> {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (f(&xp)?, f(&xm)?);
            if !fp.is_finite() || !fm.is_finite() {
                return Err(GeomError::NonFinite("finite-difference stencil"));
            }
            Ok(fp.sub(&fm).scale(0.5 / h))
        };
        let coarse = central(step)?;
        let fine = central(step / 2.0)?;
        parts.push(fine.scale(4.0 / 3.0).sub(&coarse.scale(1.0 / 3.0)));
    }
    let r = parts[0].rank();
    Ok(Tensor::from_fn(n, r + 1, |idx| *parts[idx[r]].at(&idx[..r])))
}

/// Scalar convenience wrapper around [`fd_gradient_x`].
pub fn fd_gradient_scalar<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let g = fd_gradient_x(|p| Ok(Tensor::scalar(n, f(p)?)), x, step)?;
    Ok(g.into_vec())
}

/// Derivative of a function of one real parameter by central differences with
/// one Richardson level.
pub fn fd_derivative_1d<F>(f: F, t: f64, step: f64) -> Result<Tensor>
where
    F: Fn(f64) -> Result<Tensor>,
{
    let central = |h: f64| -> Result<Tensor> { Ok(f(t + h)?.sub(&f(t - h)?).scale(0.5 / h)) };
    let coarse = central(step)?;
    let fine = central(step / 2.0)?;
    Ok(fine.scale(4.0 / 3.0).sub(&coarse.scale(1.0 / 3.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;

    #[test]
    fn quadratic_form_hessian_is_twice_identity() {
        let h = differentiate_y(|y| y.iter().skip(1).fold(y[0].sq(), |s, v| s + v.sq()), &[0.3, -1.0, 2.0], 2)
            .unwrap();
        assert!(h.max_diff(&Tensor::identity(3).scale(2.0)) < 1e-14);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = differentiate_y(|y| y[0].cst(3.5), &[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let gx = fd_gradient_scalar(|_| Ok(2.0), &[0.1, 0.2], FD_STEP).unwrap();
        assert_eq!(gx, vec![0.0, 0.0]);
    }

    #[test]
    fn product_gradient_by_differences() {
        let g = fd_gradient_scalar(|x| Ok(x[0] * x[1]), &[0.7, -0.4, 0.2], FD_STEP).unwrap();
        assert!((g[0] + 0.4).abs() < 1e-12);
        assert!((g[1] - 0.7).abs() < 1e-12);
        assert!(g[2].abs() < 1e-12);
    }

    #[test]
    fn order_above_four_is_rejected() {
        assert!(differentiate_y(|y| y[0].clone(), &[1.0], 5).is_err());
    }

    #[test]
    fn non_finite_is_reported() {
        let r = differentiate_y(|y| y[0].sqrt(), &[-1.0], 1);
        assert!(matches!(r, Err(GeomError::NonFinite(_))));
        let r = fd_gradient_scalar(|x| Ok(x[0].ln()), &[0.0], FD_STEP);
        assert!(r.is_err());
    }
}
