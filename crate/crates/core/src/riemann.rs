//! The associated Riemannian space: metric field `a_mn(x)`, unit axis
//! covector `b_i(x)`, charge `g(x)`, optional torsion, and the objects built
//! from them (Christoffel symbols, linear connection, curvature, `∇`).
//!
//! Connection coefficients are stored derivative-index first:
//! `L[m, i, j] = L^m_{ij}` where `i` is the direction of differentiation.

use serde::{Deserialize, Serialize};

use crate::curve::Curve;
use crate::error::{GeomError, Result};
use crate::jet::{Jet, JetSpace};
use crate::scalar::{dot, Scalar};
use crate::tensor::{einsum, invert, Tensor};

/// Family of base metrics `a_mn(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseMetric {
    /// `a = δ`.
    Flat,
    /// `a = exp(2 c·x) δ`.
    Conformal { phi_grad: Vec<f64> },
    /// `a = δ / (1 + κ|x|²/4)²`, constant sectional curvature `κ`.
    Sphere { kappa: f64 },
    /// `a = δ + ε s sᵀ` with `s_i = sin(x^{i+1} + i)`; not conformally flat.
    Sheared { eps: f64 },
}

/// Axis direction; the covector is renormalized to unit `a`-length at every point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisField {
    /// `b^i ∝ δ^i_k`, i.e. `b_i ∝ a_{ik}`.
    Coordinate { index: usize },
    /// `b_i ∝ c_i + m_ij x^j`.
    Affine {
        c: Vec<f64>,
        #[serde(default)]
        m: Vec<Vec<f64>>,
    },
}

/// The Finsleroid charge `g(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChargeField {
    Constant { g: f64 },
    /// `g = g0 + grad·x`.
    Affine { g0: f64, grad: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiemannField {
    pub dim: usize,
    pub metric: BaseMetric,
    pub axis: AxisField,
    pub charge: ChargeField,
    /// Lowered torsion `S_{mij}` (row-major, `dim³` entries), constant and
    /// antisymmetric in `m, j`. The connection uses `S^m_{ij} = a^{mh} S_{hij}`.
    #[serde(default)]
    pub torsion: Option<Vec<f64>>,
}

/// `H(x)` with its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct HScalar {
    pub h: f64,
    pub grad: Vec<f64>,
}

impl RiemannField {
    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        let bad = |m: String| Err(GeomError::InvalidArgument(m));
        if !(2..=8).contains(&n) {
            return bad(format!("dimension {n} unsupported"));
        }
        match &self.metric {
            BaseMetric::Conformal { phi_grad } if phi_grad.len() != n => {
                return bad("conformal metric gradient has wrong length".into())
            }
            BaseMetric::Sphere { kappa } if *kappa < 0.0 => {
                return bad("sphere metric needs kappa >= 0".into())
            }
            BaseMetric::Sheared { eps } if *eps <= -0.5 => {
                return bad("sheared metric needs eps > -0.5".into())
            }
            _ => {}
        }
        match &self.axis {
            AxisField::Coordinate { index } if *index >= n => {
                return bad(format!("axis index {index} out of range"))
            }
            AxisField::Affine { c, m } => {
                if c.len() != n || !(m.is_empty() || (m.len() == n && m.iter().all(|r| r.len() == n))) {
                    return bad("affine axis has wrong shape".into());
                }
            }
            _ => {}
        }
        match &self.charge {
            ChargeField::Affine { grad, .. } if grad.len() != n => {
                return bad("charge gradient has wrong length".into())
            }
            // an affine charge is only checked pointwise, at the base point
            ChargeField::Constant { g } | ChargeField::Affine { g0: g, .. } if !(g.abs() < 2.0) => {
                return bad(format!("charge {g} outside (-2, 2)"))
            }
            _ => {}
        }
        if let Some(s) = &self.torsion {
            if s.len() != n * n * n {
                return bad("torsion needs dim^3 entries".into());
            }
            let t = Tensor::from_vec(n, 3, s.clone());
            if t.add(&t.swap_axes(0, 2)).max_abs() > 1e-12 {
                return bad("torsion must satisfy S_mij = -S_jim".into());
            }
        }
        Ok(())
    }

    /// `a_mn(x)`.
    pub fn metric<S: Scalar>(&self, x: &[S]) -> Tensor<S> {
        let n = self.dim;
        let one = x[0].cst(1.0);
        let zero = x[0].cst(0.0);
        match &self.metric {
            BaseMetric::Flat => {
                Tensor::from_fn(n, 2, |i| if i[0] == i[1] { one.clone() } else { zero.clone() })
            }
            BaseMetric::Conformal { phi_grad } => {
                let phi = x
                    .iter()
                    .zip(phi_grad)
                    .fold(zero.clone(), |s, (xi, c)| s + xi.clone() * *c);
                let e = (phi * 2.0).exp();
                Tensor::from_fn(n, 2, |i| if i[0] == i[1] { e.clone() } else { zero.clone() })
            }
            BaseMetric::Sphere { kappa } => {
                let r2 = dot(x, x);
                let c = (r2 * (kappa / 4.0) + 1.0).sq().recip();
                Tensor::from_fn(n, 2, |i| if i[0] == i[1] { c.clone() } else { zero.clone() })
            }
            BaseMetric::Sheared { eps } => {
                let s: Vec<S> = (0..n).map(|i| (x[(i + 1) % n].clone() + i as f64).sin()).collect();
                Tensor::from_fn(n, 2, |i| {
                    let base = if i[0] == i[1] { one.clone() } else { zero.clone() };
                    base + s[i[0]].clone() * &s[i[1]] * *eps
                })
            }
        }
    }

    /// Unnormalized axis covector.
    fn raw_axis<S: Scalar>(&self, x: &[S], a: &Tensor<S>) -> Vec<S> {
        let n = self.dim;
        match &self.axis {
            AxisField::Coordinate { index } => (0..n).map(|i| a[[i, *index]].clone()).collect(),
            AxisField::Affine { c, m } => (0..n)
                .map(|i| {
                    let mut v = x[0].cst(c[i]);
                    if !m.is_empty() {
                        for (j, xj) in x.iter().enumerate() {
                            v = v + xj.clone() * m[i][j];
                        }
                    }
                    v
                })
                .collect(),
        }
    }

    /// Unit axis covector `b_i(x)` with `a^{ij} b_i b_j = 1`.
    pub fn axis<S: Scalar>(&self, x: &[S], a: &Tensor<S>, a_inv: &Tensor<S>) -> Vec<S> {
        let raw = self.raw_axis(x, a);
        let n = self.dim;
        let mut norm2 = raw[0].cst(0.0);
        for i in 0..n {
            for j in 0..n {
                norm2 = norm2 + a_inv[[i, j]].clone() * &raw[i] * &raw[j];
            }
        }
        let inv = norm2.sqrt().recip();
        raw.into_iter().map(|v| v * &inv).collect()
    }

    /// The Finsleroid charge `g(x)`.
    pub fn charge<S: Scalar>(&self, x: &[S]) -> S {
        match &self.charge {
            ChargeField::Constant { g } => x[0].cst(*g),
            ChargeField::Affine { g0, grad } => x
                .iter()
                .zip(grad)
                .fold(x[0].cst(*g0), |s, (xi, c)| s + xi.clone() * *c),
        }
    }

    pub fn charge_is_constant(&self) -> bool {
        match &self.charge {
            ChargeField::Constant { .. } => true,
            ChargeField::Affine { grad, .. } => grad.iter().all(|&v| v == 0.0),
        }
    }

    pub fn has_torsion(&self) -> bool {
        self.torsion.as_ref().is_some_and(|s| s.iter().any(|&v| v != 0.0))
    }

    /// Christoffel symbols and the linear connection as jets in `x`.
    ///
    /// `a` must carry x-jets with the base coordinates as the first `dim`
    /// variables; the result has one order less.
    pub fn connection_jets(&self, a: &Tensor<Jet>, a_inv: &Tensor<Jet>) -> Tensor<Jet> {
        let n = self.dim;
        let da = a.grad(0); // da[l, j, i] = ∂_i a_lj
        let low = Tensor::from_fn(n, 3, |idx| {
            let (l, i, j) = (idx[0], idx[1], idx[2]);
            (da[[l, j, i]].clone() + &da[[l, i, j]] - &da[[i, j, l]]) * 0.5
        });
        let a_inv = a_inv.truncate(low.order());
        let mut l = einsum("kl,lij->kij", &[&a_inv, &low]);
        if let Some(s) = self.torsion.as_ref().filter(|_| self.has_torsion()) {
            let s_low = Tensor::from_vec(n, 3, s.clone());
            let s_low = s_low.map(|v| a_inv.data()[0].cst(*v));
            let s_up = einsum("mh,hij->mij", &[&a_inv, &s_low]);
            l = l.plus(&s_up);
        }
        l
    }

    fn x_jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        JetSpace::get(self.dim, order).variables(order, x)
    }

    /// `a_mn(x)` and its inverse at a point.
    pub fn metric_at(&self, x: &[f64]) -> Result<(Tensor, Tensor)> {
        let a = self.metric(x);
        let a_inv = invert(&a)?;
        Ok((a, a_inv))
    }

    /// Christoffel symbols `a^k_{ij}` (torsion excluded), layout `[k, i, j]`.
    pub fn christoffel(&self, x: &[f64]) -> Result<Tensor> {
        let plain = RiemannField {
            torsion: None,
            ..self.clone()
        };
        plain.linear_connection(x)
    }

    /// `L^m_{ij} = a^m_{ij} + S^m_{ij}`, layout `[m, i, j]`.
    pub fn linear_connection(&self, x: &[f64]) -> Result<Tensor> {
        let xs = self.x_jets(x, 1);
        let a = self.metric(&xs);
        let a_inv = invert(&a)?;
        Ok(self.connection_jets(&a, &a_inv).val())
    }

    /// `L^m_j(x, y) = -L^m_{ji} y^i`.
    pub fn connection_contracted(&self, x: &[f64], y: &[f64]) -> Result<Tensor> {
        let l = self.linear_connection(x)?;
        let n = self.dim;
        Ok(Tensor::from_fn(n, 2, |i| -(0..n).map(|k| l[[i[0], i[1], k]] * y[k]).sum::<f64>()))
    }

    /// Curvature `a_k^h_{ij}` from connection jets of order ≥ 1; layout `[k, h, i, j]`.
    pub fn curvature_from_connection(l: &Tensor<Jet>) -> Tensor<Jet> {
        let n = l.dim();
        let dl = l.grad(0); // dl[h, k, j, i] = ∂_i L^h_kj
        let lt = l.truncate(dl.order());
        let quad = einsum("ukj,hui->khij", &[&lt, &lt]);
        Tensor::from_fn(n, 4, |idx| {
            let (k, h, i, j) = (idx[0], idx[1], idx[2], idx[3]);
            dl[[h, k, j, i]].clone() - &dl[[h, k, i, j]] + &quad[[k, h, i, j]] - &quad[[k, h, j, i]]
        })
    }

    /// Riemannian curvature `a_k^h_{ij}` at `x`, layout `[k, h, i, j]`.
    pub fn riemann_curvature(&self, x: &[f64]) -> Result<Tensor> {
        let xs = self.x_jets(x, 2);
        let a = self.metric(&xs);
        let a_inv = invert(&a)?;
        let l = self.connection_jets(&a, &a_inv);
        Ok(Self::curvature_from_connection(&l).val())
    }

    /// Riemannian angle between two vectors at `x`.
    pub fn riemann_angle(&self, x: &[f64], t1: &[f64], t2: &[f64]) -> Result<f64> {
        let a = self.metric(x);
        let ip = |u: &[f64], v: &[f64]| {
            let mut s = 0.0;
            for i in 0..self.dim {
                for j in 0..self.dim {
                    s += a[[i, j]] * u[i] * v[j];
                }
            }
            s
        };
        let (n1, n2) = (ip(t1, t1).sqrt(), ip(t2, t2).sqrt());
        if !(n1 > 0.0 && n2 > 0.0) {
            return Err(GeomError::InvalidArgument("zero-norm vector in angle".into()));
        }
        // half-angle form; acos loses half the digits near 0 and π
        let u: Vec<f64> = t1.iter().map(|v| v / n1).collect();
        let v: Vec<f64> = t2.iter().map(|v| v / n2).collect();
        let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let (d2, s2) = (ip(&diff, &diff), ip(&sum, &sum));
        Ok(2.0 * d2.max(0.0).sqrt().atan2(s2.max(0.0).sqrt()))
    }

    /// Riemannian parallel transport `dt^k/ds = -L^k_{ij} ẋ^i t^j` by RK4.
    /// Returns the transported vectors at every step.
    pub fn parallel_transport(&self, curve: &Curve, t0: &[f64], steps: usize) -> Result<Vec<Vec<f64>>> {
        let n = self.dim;
        let rhs = |s: f64, t: &[f64]| -> Result<Vec<f64>> {
            let x = curve.point(s);
            let xd = curve.velocity(s);
            let l = self.linear_connection(&x)?;
            Ok((0..n)
                .map(|k| {
                    let mut v = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            v -= l[[k, i, j]] * xd[i] * t[j];
                        }
                    }
                    v
                })
                .collect())
        };
        let ds = curve.length_parameter() / steps as f64;
        let mut out = vec![t0.to_vec()];
        let mut t = t0.to_vec();
        for s in 0..steps {
            let s0 = s as f64 * ds;
            t = crate::curve::rk4_step(&rhs, s0, &t, ds)?;
            out.push(t.clone());
        }
        Ok(out)
    }
}

/// Index type of a tensor slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Up,
    Down,
}

/// Riemannian covariant derivative of a field `W(x, t)` whose fiber argument
/// is carried by Riemannian parallel transport:
/// `∇_i W = ∂_i W - ∂W/∂t^k L^k_{ij} t^j + Σ_up L^m_{il} W^l - Σ_down L^h_{im} W_h`.
///
/// `w` receives x-jets (variables `0..n`) and t-jets (variables `n..2n`).
/// The derivative index comes first in the result.
pub fn nabla<W>(field: &RiemannField, x: &[f64], t: &[f64], slots: &[Slot], w: W) -> Result<Tensor>
where
    W: Fn(&[Jet], &[Jet]) -> Tensor<Jet>,
{
    let n = field.dim;
    let sp = JetSpace::get(2 * n, 1);
    let mut at = x.to_vec();
    at.extend_from_slice(t);
    let vars = sp.variables(1, &at);
    let (xs, ts) = vars.split_at(n);
    let wj = w(xs, ts);
    assert_eq!(wj.rank(), slots.len(), "slot list must match tensor rank");
    let wv = wj.val();
    let wx = wj.grad(0).val();
    let wt = wj.grad(n).val();
    let l = field.linear_connection(x)?;
    let r = slots.len();
    let mut src = vec![0usize; r + 1];
    Ok(Tensor::from_fn(n, r + 1, |idx| {
        let i = idx[0];
        let rest = &idx[1..];
        src[..r].copy_from_slice(rest);
        src[r] = i;
        let mut v = *wx.at(&src);
        for k in 0..n {
            src[r] = k;
            let dk = *wt.at(&src);
            let lt: f64 = (0..n).map(|j| l[[k, i, j]] * t[j]).sum();
            v -= dk * lt;
        }
        let mut s2 = rest.to_vec();
        for (p, slot) in slots.iter().enumerate() {
            for h in 0..n {
                s2[p] = h;
                let c = match slot {
                    Slot::Up => l[[rest[p], i, h]],
                    Slot::Down => -l[[h, i, rest[p]]],
                };
                v += c * wv.at(&s2);
            }
            s2[p] = rest[p];
        }
        v
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conformal(c: f64) -> RiemannField {
        RiemannField {
            dim: 3,
            metric: BaseMetric::Conformal { phi_grad: vec![c, 0.0, 0.0] },
            axis: AxisField::Coordinate { index: 0 },
            charge: ChargeField::Constant { g: 0.0 },
            torsion: None,
        }
    }

    #[test]
    fn flat_christoffel_vanishes() {
        let f = RiemannField { metric: BaseMetric::Flat, ..conformal(0.0) };
        assert_eq!(f.christoffel(&[0.1, 0.2, 0.3]).unwrap().max_abs(), 0.0);
        assert_eq!(f.riemann_curvature(&[0.1, 0.2, 0.3]).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn conformal_christoffel_closed_form() {
        // a = e^{2φ}δ: Γ^k_ij = δ^k_i φ_j + δ^k_j φ_i - δ_ij φ^k
        let f = conformal(0.1);
        let g = f.christoffel(&[0.3, -0.2, 0.5]).unwrap();
        let phi = [0.1, 0.0, 0.0];
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let want = Tensor::from_fn(3, 3, |i| {
            let (k, a, b) = (i[0], i[1], i[2]);
            d(k, a) * phi[b] + d(k, b) * phi[a] - d(a, b) * phi[k]
        });
        assert!(g.max_diff(&want) < 1e-15);
    }

    #[test]
    fn axis_is_unit() {
        let f = RiemannField {
            axis: AxisField::Affine { c: vec![1.0, 0.5, -0.2], m: vec![] },
            ..conformal(0.3)
        };
        let x = [0.2, 0.1, -0.4];
        let (a, ai) = f.metric_at(&x).unwrap();
        let b = f.axis(&x, &a, &ai);
        let n2 = einsum("ij,i,j->", &[&ai, &Tensor::vector(&b), &Tensor::vector(&b)]);
        assert!((n2[[]] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn torsion_shifts_connection() {
        let mut s = Tensor::zeros(3, 3);
        s[[0, 1, 2]] = 0.3;
        s[[2, 1, 0]] = -0.3;
        let f = RiemannField { torsion: Some(s.data().to_vec()), ..conformal(0.0) };
        f.validate().unwrap();
        let l = f.linear_connection(&[0.0; 3]).unwrap();
        assert!(l.max_diff(&s) < 1e-15);
        let bad = RiemannField { torsion: Some(vec![1.0; 27]), ..conformal(0.0) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unit_sphere_sectional_curvature() {
        let f = RiemannField { metric: BaseMetric::Sphere { kappa: 1.0 }, ..conformal(0.0) };
        let x = [0.3, -0.4, 0.2];
        let r = f.riemann_curvature(&x).unwrap();
        let (a, _) = f.metric_at(&x).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            // a_{jiij} with the lowered upper index second
            let r_low: f64 = (0..3).map(|h| a[[i, h]] * r[[j, h, i, j]]).sum();
            let k = r_low / (a[[i, i]] * a[[j, j]] - a[[i, j]] * a[[i, j]]);
            assert!((k - 1.0).abs() < 1e-12, "K = {k}");
        }
    }

    #[test]
    fn angle_basics() {
        let f = RiemannField { metric: BaseMetric::Flat, ..conformal(0.0) };
        let x = [0.0; 3];
        assert_eq!(f.riemann_angle(&x, &[1.0, 2.0, 0.0], &[1.0, 2.0, 0.0]).unwrap(), 0.0);
        let a = f.riemann_angle(&x, &[1.0, 0.0, 0.0], &[0.0, 3.0, 0.0]).unwrap();
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(f.riemann_angle(&x, &[0.0; 3], &[1.0, 0.0, 0.0]).is_err());
    }
}
