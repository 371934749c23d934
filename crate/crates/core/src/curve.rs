//! Analytic base curves and a fixed-step RK4 integrator.

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// `x(s) = start + s·dir + amp·sin(π s / length)·bend` for `s ∈ [0, length]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub start: Vec<f64>,
    pub dir: Vec<f64>,
    #[serde(default)]
    pub bend: Vec<f64>,
    #[serde(default)]
    pub amp: f64,
    #[serde(default = "unit")]
    pub length: f64,
}

fn unit() -> f64 {
    1.0
}

impl Curve {
    pub fn line(start: &[f64], dir: &[f64]) -> Curve {
        Curve {
            start: start.to_vec(),
            dir: dir.to_vec(),
            bend: vec![0.0; start.len()],
            amp: 0.0,
            length: 1.0,
        }
    }

    fn bend_at(&self, i: usize) -> f64 {
        self.bend.get(i).copied().unwrap_or(0.0)
    }

    pub fn point(&self, s: f64) -> Vec<f64> {
        let w = self.amp * (std::f64::consts::PI * s / self.length).sin();
        (0..self.start.len())
            .map(|i| self.start[i] + s * self.dir[i] + w * self.bend_at(i))
            .collect()
    }

    pub fn velocity(&self, s: f64) -> Vec<f64> {
        let k = std::f64::consts::PI / self.length;
        let w = self.amp * k * (k * s).cos();
        (0..self.start.len())
            .map(|i| self.dir[i] + w * self.bend_at(i))
            .collect()
    }

    pub fn length_parameter(&self) -> f64 {
        self.length
    }
}

/// One classical Runge–Kutta step of `dy/ds = f(s, y)`.
pub fn rk4_step<F>(f: &F, s: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let axpy = |a: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        a.iter().zip(k).map(|(a, k)| a + c * k).collect()
    };
    let k1 = f(s, y)?;
    let k2 = f(s + h / 2.0, &axpy(y, &k1, h / 2.0))?;
    let k3 = f(s + h / 2.0, &axpy(y, &k2, h / 2.0))?;
    let k4 = f(s + h, &axpy(y, &k3, h))?;
    Ok((0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_integrates_exponential() {
        let f = |_s: f64, y: &[f64]| Ok(vec![y[0]]);
        let mut y = vec![1.0];
        for k in 0..100 {
            y = rk4_step(&f, k as f64 * 0.01, &y, 0.01).unwrap();
        }
        assert!((y[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn velocity_matches_point_difference() {
        let c = Curve { start: vec![0.1, 0.2, 0.0], dir: vec![0.6, 0.0, 0.8], bend: vec![0.0, 1.0, 0.0], amp: 0.2, length: 1.0 };
        let h = 1e-6;
        let s = 0.37;
        let (p, m) = (c.point(s + h), c.point(s - h));
        let v = c.velocity(s);
        for i in 0..3 {
            assert!(((p[i] - m[i]) / (2.0 * h) - v[i]).abs() < 1e-8);
        }
    }
}
