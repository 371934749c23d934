//! The twelve acceptance criteria. Each is a set of registry identities on one
//! or more fixtures, with the tolerance the criterion states; the target exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;

use finsler_conn::verify::{run, Bound, IdentityReport, Overrides, Sampling, Scenario};

struct Check {
    fixture: &'static str,
    id: &'static str,
    tol: f64,
}

const fn c(fixture: &'static str, id: &'static str, tol: f64) -> Check {
    Check { fixture, id, tol }
}

const ALL_FIXTURES: [&str; 6] = ["FLAT3", "CURV3", "CURV3-CONST", "CURV3-RIEMANN", "SPHERE3", "QUARTIC3"];

fn criteria() -> Vec<(&'static str, Vec<Check>)> {
    vec![
        ("fiber-calculus exactness", ALL_FIXTURES.iter().map(|f| c(f, "fiber.exactness", 1e-9)).collect()),
        (
            "indicatrix constant curvature H²",
            ["FLAT3", "CURV3"]
                .iter()
                .flat_map(|f| [c(f, "indicatrix.s_tensor", 1e-7), c(f, "indicatrix.c_ind", 1e-6)])
                .collect(),
        ),
        (
            "conformal correspondence",
            ["FLAT3", "CURV3"]
                .iter()
                .flat_map(|f| [c(f, "conformal.indicatrix", 1e-10), c(f, "conformal.pullback", 1e-8)])
                .collect(),
        ),
        (
            "connection cross-validation",
            vec![c("CURV3", "connection.explicit", 1e-6), c("CURV3", "connection.alternative", 1e-6)],
        ),
        (
            "metricity and deflection",
            vec![
                c("CURV3", "metricity.total", 1e-6),
                c("CURV3", "metricity.deflected_g", 1e-6),
                c("CURV3", "connection.invariants", 1e-9),
                c("CURV3", "connection.l_total", 1e-9),
            ],
        ),
        (
            "derivative-coefficient identity",
            vec![c("CURV3", "connection.third_derivative", 1e-6), c("CURV3", "connection.l_contraction", 1e-7)],
        ),
        (
            "Finsleroid closed-form suite",
            vec![
                c("CURV3", "finsleroid.closed_forms", 1e-6),
                c("CURV3", "finsleroid.m_bar_gradient", 1e-6),
                c("CURV3", "finsleroid.breve_contraction", 1e-6),
                c("CURV3", "finsleroid.h_deflection", 1e-6),
                c("CURV3", "finsleroid.g_deflection", 1e-6),
                c("CURV3", "finsleroid.second_derivative", 1e-6),
                c("CURV3", "finsleroid.cartan_charge", 1e-5),
                c("CURV3", "finsleroid.k2_charge", 1e-5),
            ],
        ),
        (
            "angle equivalence",
            vec![
                c("CURV3", "angle.geodesic", 1e-4),
                c("FLAT3", "angle.geodesic", 1e-4),
                c("SPHERE3", "angle.great_circle", 1e-5),
            ],
        ),
        (
            "preservation laws",
            vec![
                c("CURV3", "transport.f_drift", 1e-6),
                c("CURV3", "transport.h_alpha_drift", 1e-5),
                c("CURV3", "transport.rate", 1e-4),
                c("CURV3", "metricity.deflectionless_control", 1e-5),
            ],
        ),
        (
            "curvature",
            vec![
                c("CURV3", "curvature.m_commutator", 1e-5),
                c("CURV3", "curvature.rho_contractions", 1e-8),
                c("CURV3", "curvature.norms", 1e-5),
                c("CURV3", "curvature.derivative", 1e-4),
                c("FLAT3", "curvature.flat_zero", 1e-10),
            ],
        ),
        (
            "transitivity",
            vec![c("CURV3", "transitivity.fields", 1e-6), c("CURV3", "transitivity.deformation", 1e-6)],
        ),
        (
            "coincidence limits",
            vec![c("CURV3", "coincidence.deflection", 1e-6), c("CURV3", "coincidence.hessian", 1e-4)],
        ),
    ]
}

fn main() -> ExitCode {
    let criteria = criteria();
    let mut per_fixture: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for (_, checks) in &criteria {
        for ch in checks {
            let prev = per_fixture.entry(ch.fixture).or_default().insert(ch.id, ch.tol);
            assert!(prev.is_none_or(|t| t == ch.tol), "{} on {} listed twice with different tolerances", ch.id, ch.fixture);
        }
    }

    let mut reports: BTreeMap<(&str, String), IdentityReport> = BTreeMap::new();
    for (fixture, ids) in &per_fixture {
        let scenario = Scenario {
            name: format!("acceptance-{fixture}"),
            fixture: Some(fixture.to_string()),
            space: None,
            dim: 3,
            sampling: Sampling::default(),
            identities: ids.keys().map(|s| s.to_string()).collect(),
            tolerances: ids.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            transport: None,
            angle: Default::default(),
        };
        let out = run(&scenario, &Overrides::default()).expect("acceptance scenarios are well formed");
        for r in out.report.identities {
            reports.insert((fixture, r.id.clone()), r);
        }
    }

    let mut failed = BTreeSet::new();
    for (k, (name, checks)) in criteria.iter().enumerate() {
        let mut parts = Vec::new();
        let mut ok = true;
        for ch in checks {
            let r = &reports[&(ch.fixture, ch.id.to_string())];
            ok &= r.passed;
            let rel = if r.bound == Bound::AtLeast { ">=" } else { "<=" };
            let worst = r.worst.map(|w| format!("{w:.1e}")).unwrap_or_else(|| "error".into());
            parts.push(format!("{}[{}] {worst} {rel} {:.0e}", ch.id, ch.fixture, ch.tol));
        }
        if !ok {
            failed.insert(k + 1);
        }
        println!("criterion {:>2} {:<34} {}  {}", k + 1, name, if ok { "PASS" } else { "FAIL" }, parts.join("; "));
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
