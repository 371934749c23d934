//! The Finsleroid metric `K = √B · exp(-G f / 2)` built from a Riemannian
//! metric `a`, a unit axis covector `b` and a charge `g(x) ∈ (-2, 2)`.

use crate::error::{GeomError, Result};
use crate::finsler::{FinslerSample, FinslerSpace};
use crate::jet::{Jet, JetSpace};
use crate::riemann::RiemannField;
use crate::scalar::{dot, Scalar};
use crate::tensor::{einsum, invert, Tensor};

/// Minimal `q / √(b² + q²)` accepted by [`Finsleroid::admissible`].
pub const AXIS_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Finsleroid {
    pub field: RiemannField,
}

/// The scalar chain and its vector companions at one `(x, y)`.
#[derive(Clone, Debug)]
pub struct FinsleroidScalars<S = f64> {
    pub a: Tensor<S>,
    pub a_inv: Tensor<S>,
    /// `b_i`.
    pub b_low: Vec<S>,
    /// `b^i = a^{ij} b_j`.
    pub b_up: Vec<S>,
    pub g: S,
    /// `h = √(1 - g²/4)`.
    pub h: S,
    /// `G = g / h`.
    pub big_g: S,
    /// `b = b_i y^i`.
    pub b: S,
    /// `q = √(r_mn y^m y^n)` with `r = a - b⊗b`.
    pub q: S,
    /// `v^i = y^i - b b^i`.
    pub v: Vec<S>,
    /// `B = b² + g b q + q²`.
    pub big_b: S,
    /// `L = q + g b / 2`, so that `L² + h² b² = B`.
    pub big_l: S,
    /// `A = b + g q / 2`, so that `A² + h² q² = B`.
    pub big_a: S,
    /// `f = atan2(h q, b + g q / 2) ∈ [0, π]`.
    pub f: S,
    /// `χ = f / h`.
    pub chi: S,
    /// `J = exp(-G f / 2)`.
    pub j: S,
    /// `K = √B J`.
    pub k: S,
}

/// Evaluates the scalar chain; `charge` overrides `g(x)` when given.
pub fn chain<S: Scalar>(field: &RiemannField, x: &[S], y: &[S], charge: Option<S>) -> FinsleroidScalars<S> {
    let n = field.dim;
    let a = field.metric(x);
    let a_inv = invert(&a).expect("base metric must be invertible on the domain");
    let b_low = field.axis(x, &a, &a_inv);
    let b_up: Vec<S> = (0..n)
        .map(|i| dot(&(0..n).map(|j| a_inv[[i, j]].clone()).collect::<Vec<_>>(), &b_low))
        .collect();
    let g = charge.unwrap_or_else(|| field.charge(x));
    let h = (g.sq() * -0.25 + 1.0).sqrt();
    let big_g = g.clone() / &h;
    let b = dot(&b_low, y);
    let mut ayy = b.cst(0.0);
    for i in 0..n {
        for jj in 0..n {
            ayy = ayy + a[[i, jj]].clone() * &y[i] * &y[jj];
        }
    }
    let r = ayy - b.sq();
    let q = if r.re() <= 0.0 { r.cst(0.0) } else { r.sqrt() };
    let v: Vec<S> = (0..n).map(|i| y[i].clone() - b.clone() * &b_up[i]).collect();
    let big_b = b.sq() + g.clone() * &b * &q + q.sq();
    let big_l = q.clone() + g.clone() * &b * 0.5;
    let big_a = b.clone() + g.clone() * &q * 0.5;
    let f = (h.clone() * &q).atan2(&big_a);
    let chi = f.clone() / &h;
    let j = (big_g.clone() * &f * -0.5).exp();
    let k = big_b.sqrt() * &j;
    FinsleroidScalars {
        a,
        a_inv,
        b_low,
        b_up,
        g,
        h,
        big_g,
        b,
        q,
        v,
        big_b,
        big_l,
        big_a,
        f,
        chi,
        j,
        k,
    }
}

/// `U^i = [h v^i + (b + g q/2) b^i] / √B`.
pub fn unit_field_of<S: Scalar>(s: &FinsleroidScalars<S>) -> Vec<S> {
    let sb = s.big_b.sqrt().recip();
    (0..s.v.len())
        .map(|i| (s.h.clone() * &s.v[i] + s.big_a.clone() * &s.b_up[i]) * &sb)
        .collect()
}

/// `m^i = [q² b^i - (b + g q) v^i] / (q K)`.
pub fn m_up_of<S: Scalar>(s: &FinsleroidScalars<S>) -> Vec<S> {
    let qk = s.q.clone() * &s.k;
    let c = s.b.clone() + s.g.clone() * &s.q;
    (0..s.v.len())
        .map(|i| (s.q.sq() * &s.b_up[i] - c.clone() * &s.v[i]) / &qk)
        .collect()
}

/// `N̆^k = -(1/h²)(q/B)(q + g b/2)(K m^k/2) - ½ M̄ y^k`, which equals
/// `-(1/h²)(q/B)(q + g b/2)(K/(N g)) A^k - ½ M̄ y^k` and stays regular at `g = 0`.
pub fn breve_of<S: Scalar>(s: &FinsleroidScalars<S>, y: &[S]) -> Vec<S> {
    let m = m_up_of(s);
    let fac = -(s.q.clone() / &s.big_b) * &s.big_l / s.h.sq() * &s.k * 0.5;
    let mb = m_bar_of(s) * 0.5;
    (0..y.len()).map(|k| fac.clone() * &m[k] - mb.clone() * &y[k]).collect()
}

/// `M̄ = (∂K²/∂g) / K² = -f/h³ + G q² / (2 h B) + b q / (h² B)`.
pub fn m_bar_of<S: Scalar>(s: &FinsleroidScalars<S>) -> S {
    let h2 = s.h.sq();
    let h3 = h2.clone() * &s.h;
    -(s.f.clone() / h3) + s.big_g.clone() * &s.q.sq() / (s.h.clone() * &s.big_b * 2.0)
        + s.b.clone() * &s.q / (h2 * &s.big_b)
}

/// Cartan-contraction objects of the Finsleroid.
#[derive(Clone, Debug)]
pub struct CartanContraction {
    /// `A_m = K C_m` with `C_m = C_{mnk} g^{nk}`.
    pub a_low: Vec<f64>,
    /// `A^m`.
    pub a_up: Vec<f64>,
    /// `m_i = (2/(N g)) A_i`, closed form.
    pub m_low: Vec<f64>,
    /// `m^i`, closed form.
    pub m_up: Vec<f64>,
    pub m_bar: f64,
}

impl Finsleroid {
    pub fn new(field: RiemannField) -> Result<Finsleroid> {
        field.validate()?;
        Ok(Finsleroid { field })
    }

    fn check_charge(&self, x: &[f64]) -> Result<f64> {
        let g = self.field.charge(x);
        if !(g.abs() < 2.0) {
            return Err(GeomError::InvalidArgument(format!("charge |g| = {} must be below 2", g.abs())));
        }
        Ok(g)
    }

    /// The scalar chain at a point.
    pub fn scalars(&self, x: &[f64], y: &[f64]) -> Result<FinsleroidScalars> {
        self.check_charge(x)?;
        let (a, _) = self.field.metric_at(x)?;
        let n = self.field.dim;
        let ayy: f64 = (0..n).map(|i| (0..n).map(|j| a[[i, j]] * y[i] * y[j]).sum::<f64>()).sum();
        let s = chain(&self.field, x, y, None);
        let r = ayy - s.b * s.b;
        if r < -1e-12 * ayy.max(1e-300) {
            return Err(GeomError::Inadmissible(format!("r(y, y) = {r:e} is negative")));
        }
        Ok(s)
    }

    /// Closed-form covector `y_i = (u_i + g q b_i) J²` with `u_i = a_ij y^j`.
    pub fn covector(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let s = self.scalars(x, y)?;
        let n = self.field.dim;
        Ok((0..n)
            .map(|i| {
                let u: f64 = (0..n).map(|j| s.a[[i, j]] * y[j]).sum();
                (u + s.g * s.q * s.b_low[i]) * s.j * s.j
            })
            .collect())
    }

    /// `U^i`.
    pub fn u_field(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let s = self.scalars(x, y)?;
        if !(s.big_b > 0.0) {
            return Err(GeomError::InvalidArgument("B must be positive".into()));
        }
        Ok(unit_field_of(&s))
    }

    /// `A_m`, `A^m`, `m_i`, `m^i` from their closed forms and `M̄`.
    pub fn cartan_contraction(&self, x: &[f64], y: &[f64]) -> Result<CartanContraction> {
        self.admissible(x, y)?;
        let s = self.scalars(x, y)?;
        let n = self.field.dim;
        let nf = n as f64;
        let y_low = self.covector(x, y)?;
        let (b, q, k, g) = (s.b, s.q, s.k, s.g);
        let m_low: Vec<f64> = (0..n).map(|i| k / q * (s.b_low[i] - b / (k * k) * y_low[i])).collect();
        let m_up: Vec<f64> = (0..n)
            .map(|i| (q * q * s.b_up[i] - (b + g * q) * s.v[i]) / (q * k))
            .collect();
        Ok(CartanContraction {
            a_low: m_low.iter().map(|m| nf * g / 2.0 * m).collect(),
            a_up: m_up.iter().map(|m| nf * g / 2.0 * m).collect(),
            m_low,
            m_up,
            m_bar: m_bar_of(&s),
        })
    }

    /// `η^{kn} = a^{kn} - b^k b^n - v^k v^n / q²`.
    pub fn eta(&self, x: &[f64], y: &[f64]) -> Result<Tensor> {
        let s = self.scalars(x, y)?;
        let q2 = s.q * s.q;
        Ok(Tensor::from_fn(self.field.dim, 2, |i| {
            s.a_inv[[i[0], i[1]]] - s.b_up[i[0]] * s.b_up[i[1]] - s.v[i[0]] * s.v[i[1]] / q2
        }))
    }

    /// `∇_i b_j`, layout `[i, j]`, with the Christoffel symbols of `a`.
    pub fn nabla_b(&self, x: &[f64]) -> Result<Tensor> {
        let n = self.field.dim;
        let xs = JetSpace::get(n, 1).variables(1, x);
        let a = self.field.metric(&xs);
        let a_inv = invert(&a)?;
        let b: Vec<Jet> = self.field.axis(&xs, &a, &a_inv);
        let gamma = self.field.christoffel(x)?;
        Ok(Tensor::from_fn(n, 2, |ij| {
            let (i, j) = (ij[0], ij[1]);
            b[j].d(i).value() - (0..n).map(|k| gamma[[k, i, j]] * b[k].value()).sum::<f64>()
        }))
    }

    /// `N^{I k}_i`: the coefficients of the indicatrix-homogeneous case; layout `[k, i]`.
    pub fn connection_homogeneous(&self, x: &[f64], y: &[f64]) -> Result<Tensor> {
        self.admissible(x, y)?;
        let s = self.scalars(x, y)?;
        let n = self.field.dim;
        let eta = self.eta(x, y)?;
        let nb = self.nabla_b(x)?;
        let gamma = self.field.christoffel(x)?;
        let (b, q, g, h) = (s.b, s.q, s.g, s.h);
        let c_eta = b - (b + g * q / 2.0) / h;
        let vec_y: Vec<f64> = (0..n)
            .map(|k| s.v[k] / (q * q) * (b - (b + g * q) / h) + (1.0 / h - 1.0) * s.b_up[k])
            .collect();
        Ok(Tensor::from_fn(n, 2, |ki| {
            let (k, i) = (ki[0], ki[1]);
            let mut v = 0.0;
            for jj in 0..n {
                v += (c_eta * eta[[k, jj]] + vec_y[k] * y[jj]) * nb[[i, jj]];
                v -= gamma[[k, i, jj]] * y[jj];
            }
            v
        }))
    }

    /// `N̆^k`; see [`breve_of`].
    pub fn breve_vector(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.admissible(x, y)?;
        Ok(breve_of(&self.scalars(x, y)?, y))
    }

    /// The explicit coefficients `N^k_i = N^{I k}_i + N̆^k g_i`; layout `[k, i]`.
    pub fn explicit_connection(&self, x: &[f64], y: &[f64]) -> Result<Tensor> {
        let ni = self.connection_homogeneous(x, y)?;
        let nb = self.breve_vector(x, y)?;
        let gi = self.charge_gradient(x);
        Ok(Tensor::from_fn(self.field.dim, 2, |ki| ni[[ki[0], ki[1]]] + nb[ki[0]] * gi[ki[1]]))
    }

    pub fn charge_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.field.dim;
        let xs = JetSpace::get(n, 1).variables(1, x);
        let g = self.field.charge(&xs);
        (0..n).map(|i| g.d(i).value()).collect()
    }

    /// Closed forms of `N̆^k_{im} = ∂N̆^k_i/∂y^m` (layout `[k, i, m]`) and
    /// `N̆^k_{imn}` (layout `[k, i, m, n]`).
    pub fn breve_derivatives(&self, x: &[f64], y: &[f64], fs: &FinslerSample) -> Result<(Tensor, Tensor)> {
        let s = self.scalars(x, y)?;
        let cc = self.cartan_contraction(x, y)?;
        let nbv = self.breve_vector(x, y)?;
        let gi = self.charge_gradient(x);
        let n = self.field.dim;
        let (b, q, g, h, k, bb) = (s.b, s.q, s.g, s.h, s.k, s.big_b);
        let h2 = h * h;
        let base = q * q / (2.0 * bb) / h2;
        let c1 = base * (1.0 + 0.5 * g * b / q - 2.0 * h2);
        let c2 = base * (1.0 + 0.5 * g * b / q) * (b / q + g);
        let c3 = base * (b / q + 0.5 * g);
        let hm = fs.h_mixed();
        let first = Tensor::from_fn(n, 3, |idx| {
            let (kk, i, m) = (idx[0], idx[1], idx[2]);
            let mut v = c1 * cc.m_low[m] * fs.l_up[kk]
                + c2 * hm[[kk, m]]
                + c3 * cc.m_low[m] * cc.m_up[kk]
                - 0.5 * cc.m_bar * hm[[kk, m]];
            v *= gi[i];
            v + fs.l_down[m] / k * nbv[kk] * gi[i]
        });
        // C^k_{mn}/g, by the closed Cartan form when g vanishes
        let c_over_g = if g.abs() > 1e-8 {
            fs.c_up.scale(1.0 / g)
        } else {
            let ml = Tensor::vector(&cc.m_low);
            let low = Tensor::from_fn(n, 3, |t| {
                let (i, j, l) = (t[0], t[1], t[2]);
                0.5 * (ml[[i]] * fs.h[[j, l]] + ml[[j]] * fs.h[[i, l]] + ml[[l]] * fs.h[[i, j]]
                    - ml[[i]] * ml[[j]] * ml[[l]])
                    / k
            });
            einsum("kt,tmn->kmn", &[&fs.g_inv, &low])
        };
        let second = Tensor::from_fn(n, 4, |idx| {
            let (kk, i, m, nn) = (idx[0], idx[1], idx[2], idx[3]);
            gi[i] * (-g / (2.0 * h2) / k * fs.h[[m, nn]] * fs.l_up[kk] - c_over_g[[kk, m, nn]] / h2)
        });
        Ok((first, second))
    }
}

impl FinslerSpace for Finsleroid {
    fn dim(&self) -> usize {
        self.field.dim
    }

    fn base(&self) -> &RiemannField {
        &self.field
    }

    fn metric<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        chain(&self.field, x, y, None).k
    }

    fn h_scalar<S: Scalar>(&self, x: &[S]) -> S {
        (self.field.charge(x).sq() * -0.25 + 1.0).sqrt()
    }

    fn unit_field<S: Scalar>(&self, x: &[S], y: &[S]) -> Option<Vec<S>> {
        Some(unit_field_of(&chain(&self.field, x, y, None)))
    }

    fn admissible(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.field.dim || y.len() != self.field.dim {
            return Err(GeomError::InvalidArgument("point has wrong dimension".into()));
        }
        self.check_charge(x)?;
        let s = self.scalars(x, y)?;
        let ratio = s.q / (s.b * s.b + s.q * s.q).sqrt();
        if !(ratio >= AXIS_FLOOR) {
            return Err(GeomError::Inadmissible(format!(
                "y too close to the axis: q/sqrt(b²+q²) = {ratio:e}"
            )));
        }
        if !(s.k > 0.0 && s.k.is_finite()) {
            return Err(GeomError::Inadmissible(format!("F = {}", s.k)));
        }
        Ok(())
    }
}

/// A deliberately non-conformal perturbation
/// `F = √(a(y,y) + ε Σ (y^i)⁴ / a(y,y))`, used as a negative control. It has no
/// unit field and `H ≡ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuarticPerturbation {
    pub field: RiemannField,
    pub eps: f64,
}

impl FinslerSpace for QuarticPerturbation {
    fn dim(&self) -> usize {
        self.field.dim
    }

    fn base(&self) -> &RiemannField {
        &self.field
    }

    fn metric<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        let a = self.field.metric(x);
        let n = self.field.dim;
        let mut ayy = y[0].cst(0.0);
        for i in 0..n {
            for j in 0..n {
                ayy = ayy + a[[i, j]].clone() * &y[i] * &y[j];
            }
        }
        let quart = y.iter().fold(y[0].cst(0.0), |s, v| s + v.sq().sq());
        (quart * self.eps / &ayy + &ayy).sqrt()
    }

    fn h_scalar<S: Scalar>(&self, x: &[S]) -> S {
        x[0].cst(1.0)
    }

    fn unit_field<S: Scalar>(&self, _x: &[S], _y: &[S]) -> Option<Vec<S>> {
        None
    }

    fn admissible(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let f = self.metric(x, y);
        if f > 0.0 && f.is_finite() {
            Ok(())
        } else {
            Err(GeomError::Inadmissible(format!("F = {f}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::{AxisField, BaseMetric, ChargeField};

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

    #[test]
    fn axis_values() {
        let x = [0.0; 3];
        for g in [-1.5, -0.4, 0.0, 0.9, 1.8] {
            let sp = flat(g);
            let h = (1.0 - g * g / 4.0).sqrt();
            assert!((sp.metric(&x, &[2.0, 0.0, 0.0]) - 2.0).abs() < 1e-14);
            let back = (-std::f64::consts::PI * g / (2.0 * h)).exp();
            assert!((sp.metric(&x, &[-1.0, 0.0, 0.0]) - back).abs() < 1e-13, "g = {g}");
        }
    }

    #[test]
    fn unit_field_is_a_unit() {
        let sp = flat(1.1);
        let x = [0.2, 0.1, -0.3];
        let u = sp.unit_field(&x, &[0.3, -0.8, 0.2]).unwrap();
        assert!((u.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn charge_outside_the_range_is_rejected() {
        let mut f = flat(0.0).field;
        f.charge = ChargeField::Constant { g: 2.5 };
        assert!(Finsleroid::new(f).is_err());
    }

    #[test]
    fn directions_on_the_axis_are_inadmissible() {
        let sp = flat(0.5);
        assert!(sp.admissible(&[0.0; 3], &[1.0, 0.0, 0.0]).is_err());
        assert!(sp.admissible(&[0.0; 3], &[1.0, 0.3, 0.0]).is_ok());
    }
}
