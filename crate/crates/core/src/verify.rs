//! Scenario-driven verification: a registry of named identities, a seeded
//! sampler, a parallel runner and the JSON/CSV report formats.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::{
    closed_angle, coincidence_check, geodesic_angle, horizontal_transport, indicatrix_chart, ChartResiduals,
    CoincidenceResiduals, GeodesicAngle, TransportTrace, TRANSPORT_COLUMNS,
};
use crate::conformal::{cartan_via_map, deform, jacobian_identities, unit_correspondence, CartanViaMap, JacobianResiduals};
use crate::connection::{
    alternative_form, covariant_derive, deflectionless_metricity, l_contraction_residual, metricity, n3_closed_form,
    transitivity_check, ConnectionBundle, MetricityResiduals, Target,
};
use crate::curvature::{
    commutator_law, contraction_identities, curvature_derivative_check, norm_identities, CurvatureBundle,
};
use crate::curve::Curve;
use crate::error::GeomError;
use crate::finsler::{indicatrix_curvature, sample, FinslerSample, FinslerSpace};
use crate::finsleroid_checks::{finsleroid_identities, FinsleroidResiduals};
use crate::fixtures::{fixture_spec, Space, SpaceSpec, DIMENSIONS};
use crate::local::{LocalJets, Operator};

/// Version tag written into every report.
pub const REPORT_SCHEMA: &str = "finsler-verify-report/1";

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn config(msg: impl Into<String>) -> VerifyError {
    VerifyError::Config(msg.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> VerifyError + '_ {
    move |source| VerifyError::Io { path: path.display().to_string(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Rejected draws tolerated per accepted point.
    #[serde(default = "default_retry_cap")]
    pub retry_cap: usize,
    /// Base points are drawn from `[-x_range, x_range]^N`.
    #[serde(default = "default_x_range")]
    pub x_range: f64,
}

fn default_count() -> usize {
    64
}
fn default_seed() -> u64 {
    42
}
fn default_retry_cap() -> usize {
    200
}
fn default_x_range() -> f64 {
    0.5
}
fn default_dim() -> usize {
    3
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            count: default_count(),
            seed: default_seed(),
            retry_cap: default_retry_cap(),
            x_range: default_x_range(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSpec {
    pub curve: Curve,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    1000
}

fn pad(v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| v.get(i).copied().unwrap_or(0.0)).collect()
}

impl TransportSpec {
    /// A unit-length, slightly bent curve crossing the charge gradient of the
    /// CURV3 family.
    pub fn default_for(n: usize) -> TransportSpec {
        TransportSpec {
            curve: Curve {
                start: pad(&[-0.1, -0.4, 0.1], n),
                dir: pad(&[0.36, 0.8, 0.48], n),
                bend: pad(&[0.0, 0.0, 1.0], n),
                amp: 0.05,
                length: 1.0,
            },
            y1: pad(&[0.7, 0.9, -0.4, 0.3, 0.1], n),
            y2: pad(&[0.2, 1.1, 0.3, -0.5, 0.4], n),
            steps: default_steps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleSpec {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_segments")]
    pub segments: usize,
}

fn default_pairs() -> usize {
    3
}
fn default_segments() -> usize {
    400
}

impl Default for AngleSpec {
    fn default() -> Self {
        AngleSpec { pairs: default_pairs(), segments: default_segments() }
    }
}

/// A scenario file. Exactly one of `fixture` and `space` must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub fixture: Option<String>,
    #[serde(default)]
    pub space: Option<SpaceSpec>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub sampling: Sampling,
    /// Identity ids; empty selects every identity applicable to the space.
    #[serde(default)]
    pub identities: Vec<String>,
    /// Per-identity tolerance overrides.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub transport: Option<TransportSpec>,
    #[serde(default)]
    pub angle: AngleSpec,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, VerifyError> {
        toml::from_str(text).map_err(|e| config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Scenario, VerifyError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Scenario::from_toml(&text)
    }

    pub fn builtin(name: &str) -> Option<Scenario> {
        BUILTIN_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Scenario::from_toml(text).expect("built-in scenarios parse"))
    }

    /// The space under test.
    pub fn build_space(&self) -> Result<Space, VerifyError> {
        let spec = match (&self.fixture, &self.space) {
            (Some(name), None) => fixture_spec(name, self.dim).map_err(|e| config(e.to_string()))?,
            (None, Some(spec)) => spec.clone(),
            _ => return Err(config("give exactly one of `fixture` and `space`")),
        };
        spec.build().map_err(|e| config(format!("space: {e}")))
    }

    fn transport_spec(&self, n: usize) -> Result<TransportSpec, VerifyError> {
        let t = self.transport.clone().unwrap_or_else(|| TransportSpec::default_for(n));
        if t.curve.start.len() != n || t.curve.dir.len() != n || t.y1.len() != n || t.y2.len() != n {
            return Err(config(format!("transport vectors must have {n} components")));
        }
        if t.steps < 2 {
            return Err(config("transport needs at least two steps"));
        }
        Ok(t)
    }
}

/// Scenarios shipped with the tool, runnable by name.
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    ("riemannian-control", include_str!("../scenarios/riemannian-control.toml")),
    ("finsleroid-inhomogeneous", include_str!("../scenarios/finsleroid-inhomogeneous.toml")),
    ("finsleroid-homogeneous", include_str!("../scenarios/finsleroid-homogeneous.toml")),
    ("flat-finsleroid", include_str!("../scenarios/flat-finsleroid.toml")),
];

/// `residual ≤ tolerance` or, for negative controls, `residual ≥ tolerance`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

/// Per-point evaluation context with lazily built, shared intermediates.
pub struct PointCtx<'a> {
    pub space: &'a Space,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    fs: OnceCell<Result<FinslerSample, GeomError>>,
    lj: OnceCell<Result<LocalJets, GeomError>>,
    curv: OnceCell<Result<CurvatureBundle, GeomError>>,
    metr: OnceCell<Result<MetricityResiduals, GeomError>>,
    fins: OnceCell<Result<FinsleroidResiduals, GeomError>>,
    coin: OnceCell<Result<CoincidenceResiduals, GeomError>>,
    chart: OnceCell<Result<ChartResiduals, GeomError>>,
    jac: OnceCell<Result<(JacobianResiduals, CartanViaMap), GeomError>>,
}

type GResult<T> = Result<T, GeomError>;

fn cached<T>(cell: &OnceCell<GResult<T>>, f: impl FnOnce() -> GResult<T>) -> GResult<&T> {
    cell.get_or_init(f).as_ref().map_err(Clone::clone)
}

impl<'a> PointCtx<'a> {
    pub fn new(space: &'a Space, x: Vec<f64>, y: Vec<f64>) -> Self {
        PointCtx {
            space,
            x,
            y,
            fs: OnceCell::new(),
            lj: OnceCell::new(),
            curv: OnceCell::new(),
            metr: OnceCell::new(),
            fins: OnceCell::new(),
            coin: OnceCell::new(),
            chart: OnceCell::new(),
            jac: OnceCell::new(),
        }
    }

    fn sample(&self) -> GResult<&FinslerSample> {
        cached(&self.fs, || sample(self.space, &self.x, &self.y))
    }

    fn local(&self) -> GResult<&LocalJets> {
        cached(&self.lj, || LocalJets::new(self.space, &self.x, &self.y))
    }

    fn curvature(&self) -> GResult<&CurvatureBundle> {
        cached(&self.curv, || Ok(CurvatureBundle::new(self.local()?)))
    }

    fn metricity(&self) -> GResult<&MetricityResiduals> {
        cached(&self.metr, || Ok(metricity(self.local()?)))
    }

    fn finsleroid(&self) -> GResult<&FinsleroidResiduals> {
        cached(&self.fins, || {
            let f = self.space.as_finsleroid().ok_or_else(|| not_finsleroid())?;
            finsleroid_identities(f, &self.x, &self.y)
        })
    }

    fn coincidence(&self) -> GResult<&CoincidenceResiduals> {
        cached(&self.coin, || coincidence_check(self.space, &self.x, &self.y))
    }

    fn chart(&self) -> GResult<&ChartResiduals> {
        cached(&self.chart, || indicatrix_chart(self.space, &self.x, &self.y)?.residuals(self.space))
    }

    fn jacobians(&self) -> GResult<&(JacobianResiduals, CartanViaMap)> {
        cached(&self.jac, || {
            let d = deform(self.space, &self.x, &self.y)?;
            let s = self.sample()?;
            Ok((jacobian_identities(&d, s), cartan_via_map(&d, s)))
        })
    }
}

/// `y` with its components rotated by one place; never parallel to a
/// sampled `y` with at least two distinct components.
fn shifted(y: &[f64]) -> Vec<f64> {
    let mut v = y.to_vec();
    v.rotate_left(1);
    v
}

fn not_finsleroid() -> GeomError {
    GeomError::InvalidArgument("identity needs the Finsleroid closed forms".into())
}

/// Shared state of the trajectory- and pair-based identities.
pub struct GlobalCtx<'a> {
    pub space: &'a Space,
    pub points: &'a [(Vec<f64>, Vec<f64>)],
    pub transport: TransportSpec,
    pub angle: AngleSpec,
    trace: OnceLock<GResult<TransportTrace>>,
    geodesics: OnceLock<GResult<Vec<PairResult>>>,
}

/// One geodesic-oracle pair.
#[derive(Clone, Debug)]
pub struct PairResult {
    pub x: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub closed: f64,
    pub geodesic: GeodesicAngle,
    pub refined: f64,
}

fn cached_sync<T>(cell: &OnceLock<GResult<T>>, f: impl FnOnce() -> GResult<T>) -> GResult<&T> {
    cell.get_or_init(f).as_ref().map_err(Clone::clone)
}

impl GlobalCtx<'_> {
    fn trace(&self) -> GResult<&TransportTrace> {
        cached_sync(&self.trace, || {
            let t = &self.transport;
            horizontal_transport(self.space, &t.curve, &t.y1, &t.y2, t.steps)
        })
    }

    /// Pairs `(x_k, y_k, y_{k+1})` from the sample, skipping near-antipodal ones.
    fn geodesics(&self) -> GResult<&Vec<PairResult>> {
        cached_sync(&self.geodesics, || {
            let mut pairs = Vec::new();
            for k in 0..self.points.len().saturating_sub(1) {
                if pairs.len() == self.angle.pairs {
                    break;
                }
                let (x, y1) = &self.points[k];
                let y2 = &self.points[k + 1].1;
                if self.space.admissible(x, y2).is_err() {
                    continue;
                }
                let closed = closed_angle(self.space, x, y1, y2)?;
                if closed * self.space.h_at(x).h > 2.5 {
                    continue;
                }
                pairs.push((x.clone(), y1.clone(), y2.clone(), closed));
            }
            let m = self.angle.segments;
            pairs
                .into_par_iter()
                .map(|(x, y1, y2, closed)| {
                    let geodesic = geodesic_angle(self.space, &x, &y1, &y2, m)?;
                    let refined = geodesic_angle(self.space, &x, &y1, &y2, 2 * m)?.angle;
                    Ok(PairResult { x, y1, y2, closed, geodesic, refined })
                })
                .collect()
        })
    }
}

type PointFn = fn(&PointCtx) -> GResult<f64>;
type GlobalFn = fn(&GlobalCtx) -> GResult<Vec<f64>>;

#[derive(Clone, Copy)]
pub enum Eval {
    Point(PointFn),
    Global(GlobalFn),
}

/// A registered identity.
#[derive(Clone, Copy)]
pub struct Identity {
    pub id: &'static str,
    /// What is being checked, in words and symbols.
    pub reference: &'static str,
    pub tolerance: f64,
    pub bound: Bound,
    applies: fn(&Space) -> bool,
    pub eval: Eval,
}

impl Identity {
    pub fn applies_to(&self, space: &Space) -> bool {
        (self.applies)(space)
    }
}

fn always(_: &Space) -> bool {
    true
}
fn deformable(s: &Space) -> bool {
    s.has_deformation()
}
fn finsleroid(s: &Space) -> bool {
    s.as_finsleroid().is_some()
}
fn charged(s: &Space) -> bool {
    s.as_finsleroid().is_some() && !s.is_riemannian()
}
fn inhomogeneous(s: &Space) -> bool {
    s.has_deformation() && !s.is_homogeneous()
}
fn homogeneous(s: &Space) -> bool {
    s.has_deformation() && s.is_homogeneous()
}
fn riemannian(s: &Space) -> bool {
    s.is_riemannian()
}
fn flat(s: &Space) -> bool {
    s.has_deformation() && s.has_flat_base()
}

const fn upper(id: &'static str, reference: &'static str, tolerance: f64, applies: fn(&Space) -> bool, eval: Eval) -> Identity {
    Identity { id, reference, tolerance, bound: Bound::AtMost, applies, eval }
}

/// Every identity known to the harness.
pub static REGISTRY: &[Identity] = &[
    upper("fiber.exactness", "fiber calculus: g(y, y) = F², C_ijk y^k = 0, g g⁻¹ = I", 1e-9, always,
        Eval::Point(|p| Ok(p.sample()?.invariant_residual()))),
    upper("indicatrix.s_tensor", "indicatrix curvature: S_nmij = (1 - H²)(h_ni h_mj - h_nj h_mi), Frobenius residual of the fit", 1e-7, always,
        Eval::Point(|p| Ok(indicatrix_curvature(p.sample()?).residual))),
    upper("indicatrix.c_ind", "fitted indicatrix curvature C_Ind equals H(x)²", 1e-6, always,
        Eval::Point(|p| {
            let h = p.space.h_at(&p.x).h;
            Ok((indicatrix_curvature(p.sample()?).c_ind - h * h).abs())
        })),
    upper("indicatrix.chart", "indicatrix chart: F(l) = 1, F u^b_m t^m_c = δ, l_m t^m_ab = -i_ab, Gauss formula for t^m_ab", 1e-8, always,
        Eval::Point(|p| {
            let r = p.chart()?;
            Ok(r.on_indicatrix.max(r.projection).max(r.second_fundamental).max(r.gauss))
        })),
    upper("indicatrix.chart_s_identity", "chart curvature: S_abcd - S_acbd = -I_adbc", 1e-6, always,
        Eval::Point(|p| Ok(p.chart()?.s_identity))),
    upper("indicatrix.chart_curvature", "chart curvature I_aebd = K(i_ab i_ed - i_ad i_eb) with K = H²", 1e-6, always,
        Eval::Point(|p| {
            let r = p.chart()?;
            Ok(r.constant_curvature.max(r.curvature_vs_h2))
        })),
    upper("conformal.indicatrix", "deformation norm: |ȳ|_a = F^H", 1e-10, deformable,
        Eval::Point(|p| Ok(p.jacobians()?.0.indicatrix))),
    upper("conformal.pullback", "metric pullback: g = p² tᵀ a t", 1e-8, deformable,
        Eval::Point(|p| Ok(p.jacobians()?.0.pullback))),
    upper("conformal.jacobians", "Jacobian identities of the deformation map (homogeneity, inverse, covector maps, second order)", 1e-8, deformable,
        Eval::Point(|p| Ok(p.jacobians()?.0.max()))),
    upper("conformal.cartan", "Cartan tensor rebuilt from the deformation map, trace and symmetry", 1e-8, deformable,
        Eval::Point(|p| Ok(p.jacobians()?.1.max()))),
    upper("conformal.unit_metric", "indicatrix metric pulled back from the unit a-sphere: g(dl, dl) = a(dL, dL)/H²", 1e-6, deformable,
        Eval::Point(|p| unit_correspondence(p.space, &p.x, &p.y))),
    upper("connection.explicit", "nonlinear connection: generic deformation formula vs explicit Finsleroid coefficients", 1e-6, finsleroid,
        Eval::Point(|p| {
            let f = p.space.as_finsleroid().ok_or_else(not_finsleroid)?;
            Ok(p.local()?.n1.val().max_diff(&f.explicit_connection(&p.x, &p.y)?))
        })),
    upper("connection.alternative", "nonlinear connection: alternative form through the inverse deformation", 1e-6, deformable,
        Eval::Point(|p| Ok(alternative_form(p.space, &p.x, &p.y)?.max_diff(&p.local()?.n1.val())))),
    upper("connection.invariants", "N^k_nm y^m = N^k_n, N^k_nmj y^m = 0, N^k_nmj symmetric, Δ^k_im y^m = 0, T^k_im y^m = -N^k_i", 1e-9, deformable,
        Eval::Point(|p| Ok(ConnectionBundle::from_local(p.local()?).invariant_residual(&p.y)))),
    upper("connection.l_total", "l_k T^k_im = -l_k N^k_im", 1e-9, deformable,
        Eval::Point(|p| Ok(p.metricity()?.l_total))),
    upper("connection.d_f", "d_i F = ∂F/∂x^i + N^k_i l_k = 0", 1e-7, deformable,
        Eval::Point(|p| Ok(p.metricity()?.d_f))),
    upper("connection.third_derivative", "N^k_imn = (2/H) H_i l^k h_mn / F - 𝒟_i C^k_mn", 1e-6, deformable,
        Eval::Point(|p| {
            let lj = p.local()?;
            Ok(n3_closed_form(lj).max_diff(&lj.n3.val()))
        })),
    upper("connection.l_contraction", "F N^k_inm l_k = (2/H) H_i h_mn", 1e-7, deformable,
        Eval::Point(|p| Ok(l_contraction_residual(p.local()?)))),
    upper("metricity.total", "total covariant derivative: 𝒯F = 0, 𝒯l = 0, 𝒯g = 0", 1e-6, deformable,
        Eval::Point(|p| {
            let m = p.metricity()?;
            Ok(m.total_f.max(m.total_l).max(m.total_g))
        })),
    upper("metricity.deflected_g", "deflected metric derivative: 𝒟_i g_mn = -(2/H) H_i h_mn", 1e-6, deformable,
        Eval::Point(|p| Ok(p.metricity()?.deflected_g))),
    upper("metricity.deflected_h", "𝒟_i h_mn = (2/F) h_mn d_i F - (2/H) H_i h_mn", 1e-6, deformable,
        Eval::Point(|p| Ok(p.metricity()?.deflected_h))),
    upper("metricity.unit_field", "𝒟_n U^i = 0", 1e-6, deformable,
        Eval::Point(|p| Ok(p.metricity()?.unit_field))),
    upper("metricity.ybar_log", "𝒟_n t^i = t^i H_n ln F (F in fixture units)", 1e-6, deformable,
        Eval::Point(|p| Ok(p.metricity()?.ybar_log))),
    upper("metricity.deformation", "𝒯_i(p t^m_n) = 0 and 𝒯_i(H p t^m) = 0", 1e-6, deformable,
        Eval::Point(|p| {
            let m = p.metricity()?;
            Ok(m.deformation.max(m.scaled_ybar))
        })),
    upper("metricity.s_tensor", "𝒟_i S_n^k_jm = -(2/H) H_i (h^k_j h_mn - h^k_m h_jn)", 1e-5, deformable,
        Eval::Point(|p| Ok(p.metricity()?.s_tensor))),
    Identity {
        id: "metricity.deflectionless_control",
        reference: "negative control: |𝒟_i g_mn| with the deflection term deleted must exceed 10x the metricity tolerance",
        tolerance: 1e-5,
        bound: Bound::AtLeast,
        applies: inhomogeneous,
        eval: Eval::Point(|p| Ok(deflectionless_metricity(p.local()?))),
    },
    upper("transitivity.fields", "transitivity 𝒯 = 𝒞·∇ on covector and mixed test fields; 𝒯 𝒞 = 0, 𝒯 𝒞̃ = 0", 1e-6, deformable,
        Eval::Point(|p| Ok(transitivity_check(p.space, p.local()?)?.max()))),
    upper("transitivity.deformation", "the deformation is 𝒯-constant: 𝒯_n C^m_k = 0 with C^m_k = p t^m_k", 1e-6, deformable,
        Eval::Point(|p| Ok(covariant_derive(p.local()?, Operator::Total, Target::Deformation).max_abs()))),
    upper("curvature.m_commutator", "M^n_ij from d_i N^n_j - d_j N^n_i vs the closed form -y^n_t ȳ^h a_h^t_ij", 1e-5, deformable,
        Eval::Point(|p| {
            let c = p.curvature()?;
            Ok(c.m.max_diff(&c.m_commutator))
        })),
    upper("curvature.rho_contractions", "ρ_mnij = -ρ_nmij, y^k ρ_k^n_ij = -M^n_ij, y_n ρ_k^n_ij = M_kij", 1e-8, deformable,
        Eval::Point(|p| Ok(contraction_identities(p.local()?, p.curvature()?).rho_max()))),
    upper("curvature.contractions", "y_n M^n_ij = 0, E contractions and symmetric part, ρ by two routes", 1e-8, deformable,
        Eval::Point(|p| {
            let r = contraction_identities(p.local()?, p.curvature()?);
            Ok([r.y_m, r.y_e, r.y_low_e, r.e_symmetric, r.rho_routes].into_iter().fold(0.0, f64::max))
        })),
    upper("curvature.norms", "squared norms: M·M = p²(t a)·(t a), ρ·ρ = a·a + (2/S²)(1/H² - 1)(t a)·(t a), relative", 1e-5, deformable,
        Eval::Point(|p| Ok(norm_identities(p.local()?, p.curvature()?).max()))),
    upper("curvature.derivative", "𝒯_l M and 𝒯_l ρ through the shifted base derivative (∇_l - H_l/H) a", 1e-4, deformable,
        Eval::Point(|p| {
            let r = curvature_derivative_check(p.local()?);
            Ok(r.m_derivative.max(r.rho_derivative))
        })),
    upper("curvature.commutator_law", "[𝒯_i, 𝒯_j] w^n_k = M^h_ij 𝒮_h w - ρ_k^h_ij w^n_h + ρ_h^n_ij w^h_k", 1e-7, deformable,
        Eval::Point(|p| Ok(commutator_law(p.local()?, p.curvature()?)))),
    upper("curvature.flat_zero", "flat base: M, E, ρ and the base curvature vanish", 1e-10, flat,
        Eval::Point(|p| Ok(p.curvature()?.max_abs()))),
    upper("finsleroid.closed_forms", "Finsleroid closed forms: covector, unit field, m vector, Cartan trace A^m, η nullity, N̆ derivatives", 1e-8, finsleroid,
        Eval::Point(|p| {
            let r = p.finsleroid()?;
            Ok([r.covector, r.unit_norm, r.m_vector, r.cartan_trace, r.eta_nullity, r.breve_first, r.breve_second]
                .into_iter()
                .fold(0.0, f64::max))
        })),
    upper("finsleroid.m_bar_gradient", "∂M̄/∂y^n = 2(q²/B) m_n / K", 1e-6, finsleroid,
        Eval::Point(|p| Ok(p.finsleroid()?.m_bar_gradient))),
    upper("finsleroid.cartan_charge", "∂A_mnj/∂g = (3/2)M̄ A_mnj + (1/g - 2bq/B) A_mnj - (g b q/B) m_m m_n m_j, central differences in g", 1e-5, charged,
        Eval::Point(|p| Ok(p.finsleroid()?.cartan_charge.unwrap_or(0.0)))),
    upper("finsleroid.k2_charge", "∂K²/∂g = M̄ K², central differences in g", 1e-5, finsleroid,
        Eval::Point(|p| Ok(p.finsleroid()?.k2_charge))),
    upper("finsleroid.breve_contraction", "y_k ∂²N̆^k_i/∂y^m∂y^n = (2/h) h_i h_mn, by jets and by the closed form", 1e-6, finsleroid,
        Eval::Point(|p| {
            let r = p.finsleroid()?;
            Ok(r.breve_contraction.max(r.breve_contraction_closed))
        })),
    upper("finsleroid.h_deflection", "𝒟_i h_mn = -(2/h) h_i h_mn", 1e-6, finsleroid,
        Eval::Point(|p| Ok(p.finsleroid()?.h_deflection))),
    upper("finsleroid.g_deflection", "𝒟_i g_mn = (g g_i / 2h²) h_mn", 1e-6, finsleroid,
        Eval::Point(|p| Ok(p.finsleroid()?.g_deflection))),
    upper("finsleroid.second_derivative", "N^k_imn = (2/h) h_i l^k h_mn / K - (1/K) 𝒟_i(K C^k_mn)", 1e-6, finsleroid,
        Eval::Point(|p| Ok(p.finsleroid()?.full_second))),
    upper("coincidence.gradient", "∂E/∂y₁ and ∂E/∂y₂ vanish at coincidence", 1e-12, deformable,
        Eval::Point(|p| Ok(p.coincidence()?.gradient))),
    upper("coincidence.hessian_exact", "∂²E/∂y₁∂y₁ → h/F², ∂²E/∂y₁∂y₂ → -h/F² by jets through the diagonal", 1e-9, deformable,
        Eval::Point(|p| Ok(p.coincidence()?.hessian_exact))),
    upper("coincidence.hessian", "∂²E/∂y₁∂y₁ → h/F², Richardson-extrapolated from ε = 1e-2, 5e-3, 2.5e-3", 1e-4, deformable,
        Eval::Point(|p| Ok(p.coincidence()?.hessian_extrapolated))),
    upper("coincidence.third_order", "∂³E/∂y₂^k∂y₁^m∂y₂^n → (h_mk l_n + h_mn l_k)/F³ - C_kmn/F² and its (k, m, n) companion, extrapolated", 1e-3, deformable,
        Eval::Point(|p| Ok(p.coincidence()?.third_order_extrapolated))),
    upper("coincidence.third_order_exact", "third-order coincidence limits by jets through the diagonal", 1e-8, deformable,
        Eval::Point(|p| Ok(p.coincidence()?.third_order_exact))),
    upper("coincidence.deflection", "𝒟_i h_mn - (2/F) h_mn d_i F + (2/H) H_i h_mn = 0 from the two-point function", 1e-6, deformable,
        Eval::Point(|p| Ok(p.coincidence()?.deflection))),
    upper("riemann.angle", "g = 0: the closed angle is the Riemannian angle", 1e-12, riemannian,
        Eval::Point(|p| {
            let y2 = shifted(&p.y);
            Ok((closed_angle(p.space, &p.x, &p.y, &y2)? - p.space.base().riemann_angle(&p.x, &p.y, &y2)?).abs())
        })),
    upper("riemann.cartan_zero", "g = 0: the Cartan tensor vanishes", 1e-12, riemannian,
        Eval::Point(|p| Ok(p.sample()?.c_low.max_abs()))),
    upper("angle.geodesic", "closed angle (1/H) arccos λ vs the discrete indicatrix geodesic", 1e-4, deformable,
        Eval::Global(|g| Ok(g.geodesics()?.iter().map(|r| (r.geodesic.angle - r.closed).abs()).collect()))),
    upper("angle.geodesic_cauchy", "discrete geodesic angle is stable under doubling the segment count", 1e-5, deformable,
        Eval::Global(|g| Ok(g.geodesics()?.iter().map(|r| (r.geodesic.angle - r.refined).abs()).collect()))),
    upper("angle.geodesic_descent", "discrete geodesic energy decreases monotonically during optimization", 0.0, deformable,
        Eval::Global(|g| {
            Ok(g.geodesics()?
                .iter()
                .map(|r| r.geodesic.energy_history.windows(2).map(|w| (w[1] - w[0]).max(0.0)).fold(0.0, f64::max))
                .collect())
        })),
    upper("angle.great_circle", "g = 0: discrete geodesic vs the Riemannian arccos angle", 1e-5, riemannian,
        Eval::Global(|g| {
            g.geodesics()?
                .iter()
                .map(|r| Ok((r.geodesic.angle - g.space.base().riemann_angle(&r.x, &r.y1, &r.y2)?).abs()))
                .collect()
        })),
    upper("transport.f_drift", "horizontal transport ẏ^k = N^k_i ẋ^i preserves F", 1e-6, deformable,
        Eval::Global(|g| Ok(vec![g.trace()?.f_drift()]))),
    upper("transport.h_alpha_drift", "horizontal transport preserves the normalized angle H α", 1e-5, deformable,
        Eval::Global(|g| Ok(vec![g.trace()?.h_alpha_drift()]))),
    upper("transport.rate", "dα/ds = -(H_i ẋ^i / H) α along the transported pair", 1e-4, deformable,
        Eval::Global(|g| Ok(vec![g.trace()?.rate_residual()]))),
    upper("transport.alpha_constant", "constant charge: the angle itself is preserved", 1e-6, homogeneous,
        Eval::Global(|g| Ok(vec![g.trace()?.alpha_drift()]))),
];

pub fn identity(id: &str) -> Option<&'static Identity> {
    REGISTRY.iter().find(|i| i.id == id)
}

/// Draws `count` admissible points: `x` uniform in the box, `y` uniform in
/// `[-1, 1]^N` with `|y| ≥ 0.2`.
pub fn sample_points(space: &Space, s: &Sampling) -> Result<Vec<(Vec<f64>, Vec<f64>)>, GeomError> {
    let n = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut out = Vec::with_capacity(s.count);
    let mut rejected = 0usize;
    while out.len() < s.count {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-s.x_range..=s.x_range)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm >= 0.2 && space.admissible(&x, &y).is_ok() {
            out.push((x, y));
            continue;
        }
        rejected += 1;
        if rejected > s.retry_cap * s.count.max(1) {
            return Err(GeomError::Inadmissible(format!(
                "only {} admissible points after {rejected} rejections",
                out.len()
            )));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub id: String,
    pub reference: String,
    pub tolerance: f64,
    pub bound: Bound,
    /// Largest residual (smallest for negative controls); absent when every
    /// evaluation failed.
    pub worst: Option<f64>,
    pub passed: bool,
    pub samples: usize,
    pub failures: usize,
    /// First evaluation error, if any.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub sampling_seconds: f64,
    pub points_seconds: f64,
    pub global_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Environment {
    pub dim: usize,
    pub fixture: String,
    pub seed: u64,
    pub samples: usize,
    pub timings: Timings,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema: String,
    pub scenario: String,
    pub passed: bool,
    pub environment: Environment,
    pub identities: Vec<IdentityReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn failed(&self) -> impl Iterator<Item = &IdentityReport> {
        self.identities.iter().filter(|r| !r.passed)
    }
}

/// One residual of one identity at one sample point, pair or trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualRow {
    pub identity: &'static str,
    pub sample: usize,
    pub residual: Option<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Everything produced by one run.
pub struct RunOutput {
    pub report: Report,
    pub rows: Vec<ResidualRow>,
    pub trace: Option<TransportTrace>,
}

/// Command-line style overrides of a scenario.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dim: Option<usize>,
}

fn selected(scenario: &Scenario, space: &Space) -> Result<Vec<Identity>, VerifyError> {
    for key in scenario.tolerances.keys() {
        if identity(key).is_none() {
            return Err(config(format!("tolerance given for unknown identity `{key}`")));
        }
    }
    let mut out = Vec::new();
    if scenario.identities.is_empty() {
        out.extend(REGISTRY.iter().filter(|i| i.applies_to(space)).copied());
    } else {
        for id in &scenario.identities {
            let ident = identity(id).ok_or_else(|| config(format!("unknown identity `{id}`")))?;
            if !ident.applies_to(space) {
                return Err(config(format!("identity `{id}` does not apply to this space")));
            }
            out.push(*ident);
        }
    }
    for ident in &mut out {
        if let Some(&t) = scenario.tolerances.get(ident.id) {
            ident.tolerance = t;
        }
    }
    Ok(out)
}

fn summarize(ident: &Identity, values: &[GResult<f64>]) -> IdentityReport {
    let ok: Vec<f64> = values.iter().filter_map(|v| v.as_ref().ok().copied()).collect();
    let worst = match ident.bound {
        Bound::AtMost => ok.iter().copied().reduce(|a, b| if a.is_nan() || b > a { b } else { a }),
        Bound::AtLeast => ok.iter().copied().reduce(|a, b| if a.is_nan() || b < a { b } else { a }),
    };
    let pass_one = |v: f64| match ident.bound {
        Bound::AtMost => v <= ident.tolerance,
        Bound::AtLeast => v >= ident.tolerance,
    };
    let failures = values.iter().filter(|v| !matches!(v, Ok(r) if pass_one(*r))).count();
    IdentityReport {
        id: ident.id.to_string(),
        reference: ident.reference.to_string(),
        tolerance: ident.tolerance,
        bound: ident.bound,
        worst: worst.filter(|v| v.is_finite()),
        passed: failures == 0 && !values.is_empty(),
        samples: values.len(),
        failures,
        error: values.iter().find_map(|v| v.as_ref().err().map(|e| e.to_string())),
    }
}

/// Runs a scenario. Configuration problems are errors; failed identities are
/// not (they are recorded in the report).
pub fn run(scenario: &Scenario, overrides: &Overrides) -> Result<RunOutput, VerifyError> {
    let t0 = Instant::now();
    let mut scenario = scenario.clone();
    if let Some(seed) = overrides.seed {
        scenario.sampling.seed = seed;
    }
    if let Some(dim) = overrides.dim {
        if !DIMENSIONS.contains(&dim) {
            return Err(config(format!("dimension {dim} is not one of 3, 4, 5")));
        }
        if scenario.space.is_some() {
            return Err(config("--dim only applies to fixture scenarios"));
        }
        scenario.dim = dim;
    }
    let space = scenario.build_space()?;
    let n = space.dim();
    let identities = selected(&scenario, &space)?;
    let transport = scenario.transport_spec(n)?;
    if scenario.angle.segments < 4 || scenario.angle.segments % 2 != 0 {
        return Err(config("angle.segments must be even and at least 4"));
    }

    let points = sample_points(&space, &scenario.sampling).map_err(|e| config(format!("sampling: {e}")))?;
    let t_sampled = Instant::now();

    let point_ids: Vec<(usize, PointFn)> = identities
        .iter()
        .enumerate()
        .filter_map(|(k, i)| match i.eval {
            Eval::Point(f) => Some((k, f)),
            Eval::Global(_) => None,
        })
        .collect();
    let per_point: Vec<Vec<GResult<f64>>> = points
        .par_iter()
        .map(|(x, y)| {
            let ctx = PointCtx::new(&space, x.clone(), y.clone());
            point_ids.iter().map(|(_, f)| f(&ctx)).collect()
        })
        .collect();
    let t_points = Instant::now();

    let gctx = GlobalCtx {
        space: &space,
        points: &points,
        transport,
        angle: scenario.angle.clone(),
        trace: OnceLock::new(),
        geodesics: OnceLock::new(),
    };
    let global_ids: Vec<(usize, GlobalFn)> = identities
        .iter()
        .enumerate()
        .filter_map(|(k, i)| match i.eval {
            Eval::Global(f) => Some((k, f)),
            Eval::Point(_) => None,
        })
        .collect();
    let global: Vec<GResult<Vec<f64>>> = global_ids.par_iter().map(|(_, f)| f(&gctx)).collect();
    let t_global = Instant::now();

    let mut reports = Vec::with_capacity(identities.len());
    let mut rows = Vec::new();
    for (k, ident) in identities.iter().enumerate() {
        let values: Vec<GResult<f64>> = if let Some(j) = point_ids.iter().position(|(i, _)| *i == k) {
            per_point.iter().map(|v| v[j].clone()).collect()
        } else {
            let j = global_ids.iter().position(|(i, _)| *i == k).expect("identity is point or global");
            match &global[j] {
                Ok(v) => v.iter().map(|&r| Ok(r)).collect(),
                Err(e) => vec![Err(e.clone())],
            }
        };
        for (s, v) in values.iter().enumerate() {
            let (x, y) = match ident.eval {
                Eval::Point(_) => points[s].clone(),
                Eval::Global(_) => (Vec::new(), Vec::new()),
            };
            rows.push(ResidualRow { identity: ident.id, sample: s, residual: v.as_ref().ok().copied(), x, y });
        }
        reports.push(summarize(ident, &values));
    }
    let trace = gctx.trace.get().and_then(|t| t.as_ref().ok()).cloned();
    let report = Report {
        schema: REPORT_SCHEMA.to_string(),
        scenario: scenario.name.clone(),
        passed: reports.iter().all(|r| r.passed),
        environment: Environment {
            dim: n,
            fixture: scenario.fixture.clone().unwrap_or_else(|| "custom".into()),
            seed: scenario.sampling.seed,
            samples: points.len(),
            timings: Timings {
                total_seconds: t0.elapsed().as_secs_f64(),
                sampling_seconds: (t_sampled - t0).as_secs_f64(),
                points_seconds: (t_points - t_sampled).as_secs_f64(),
                global_seconds: (t_global - t_points).as_secs_f64(),
            },
        },
        identities: reports,
    };
    Ok(RunOutput { report, rows, trace })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|c| format!("{c:e}")).collect::<Vec<_>>().join(" ")
}

/// Per-sample residuals as CSV: `identity,sample,residual,x,y`, coordinates
/// space-separated within their field.
pub fn write_residual_csv<W: Write>(rows: &[ResidualRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["identity", "sample", "residual", "x", "y"])?;
    for r in rows {
        w.write_record([
            r.identity.to_string(),
            r.sample.to_string(),
            r.residual.map(|v| format!("{v:e}")).unwrap_or_default(),
            join(&r.x),
            join(&r.y),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The transport trace with the columns of [`TRANSPORT_COLUMNS`].
pub fn write_transport_csv<W: Write>(trace: &TransportTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRANSPORT_COLUMNS)?;
    for rec in trace.to_records() {
        w.write_record(rec.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the transport of a scenario alone and writes its trace.
pub fn emit_transport_trace(scenario: &Scenario, overrides: &Overrides, path: &Path) -> Result<TransportTrace, VerifyError> {
    let mut scenario = scenario.clone();
    if let Some(dim) = overrides.dim {
        scenario.dim = dim;
    }
    let space = scenario.build_space()?;
    let t = scenario.transport_spec(space.dim())?;
    let trace = horizontal_transport(&space, &t.curve, &t.y1, &t.y2, t.steps).map_err(|e| config(format!("transport: {e}")))?;
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_transport_csv(&trace, file).map_err(|e| VerifyError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_unique_and_dotted() {
        let mut ids: Vec<&str> = REGISTRY.iter().map(|i| i.id).collect();
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        assert_eq!(ids.len(), before);
        assert!(ids.iter().all(|i| i.contains('.')));
    }

    #[test]
    fn builtin_scenarios_parse_and_select() {
        for (name, _) in BUILTIN_SCENARIOS {
            let s = Scenario::builtin(name).unwrap();
            let space = s.build_space().unwrap();
            assert!(!selected(&s, &space).unwrap().is_empty(), "{name}");
        }
    }

    #[test]
    fn unknown_identity_is_a_config_error() {
        let s = Scenario::from_toml("name = \"x\"\nfixture = \"FLAT3\"\nidentities = [\"nonexistent\"]\n").unwrap();
        assert!(matches!(run(&s, &Overrides::default()), Err(VerifyError::Config(m)) if m.contains("nonexistent")));
    }

    #[test]
    fn sampling_is_reproducible() {
        let space = crate::fixtures::fixture("CURV3", 3).unwrap();
        let s = Sampling { count: 8, ..Sampling::default() };
        assert_eq!(sample_points(&space, &s).unwrap(), sample_points(&space, &s).unwrap());
    }

    #[test]
    fn negative_control_bound_is_a_lower_bound() {
        let ident = identity("metricity.deflectionless_control").unwrap();
        let r = summarize(ident, &[Ok(1e-3), Ok(2e-3)]);
        assert!(r.passed);
        assert_eq!(r.worst, Some(1e-3));
        let r = summarize(ident, &[Ok(1e-7)]);
        assert!(!r.passed);
    }
}
