use finsler_conn::verify::{run, Overrides, Scenario, BUILTIN_SCENARIOS};

#[test]
fn every_builtin_scenario_passes() {
    for (name, _) in BUILTIN_SCENARIOS {
        let out = run(&Scenario::builtin(name).unwrap(), &Overrides::default()).unwrap();
        let failed: Vec<_> = out.report.failed().map(|r| (&r.id, r.worst)).collect();
        assert!(failed.is_empty(), "{name}: {failed:?}");
    }
}

#[test]
fn riemannian_control_residuals_are_below_1e_8() {
    let out = run(&Scenario::builtin("riemannian-control").unwrap(), &Overrides::default()).unwrap();
    for r in &out.report.identities {
        assert!(r.tolerance <= 1e-8 && r.worst.unwrap() <= 1e-8, "{}: {:?}", r.id, r.worst);
    }
}

#[test]
fn higher_dimensions_run() {
    let mut s = Scenario::builtin("flat-finsleroid").unwrap();
    s.sampling.count = 4;
    s.identities = ["fiber.exactness", "indicatrix.s_tensor", "metricity.total", "curvature.flat_zero"]
        .map(String::from)
        .to_vec();
    for dim in [4, 5] {
        let out = run(&s, &Overrides { seed: None, dim: Some(dim) }).unwrap();
        assert!(out.report.passed, "N = {dim}");
        assert_eq!(out.report.environment.dim, dim);
    }
}

#[test]
fn explicit_space_tables_parse_and_run() {
    let s = Scenario::from_toml(
        r#"
name = "curved"
identities = ["fiber.exactness", "metricity.deflected_g", "transport.h_alpha_drift"]

[sampling]
count = 4

[space]
family = "finsleroid"
[space.field]
dim = 3
metric = { kind = "conformal", phi_grad = [0.1, 0.0, 0.0] }
axis = { kind = "coordinate", index = 0 }
charge = { kind = "affine", g0 = 0.4, grad = [0.0, 0.2, 0.0] }

[transport]
steps = 200
y1 = [0.7, 0.9, -0.4]
y2 = [0.2, 1.1, 0.3]
[transport.curve]
start = [-0.1, -0.4, 0.1]
dir = [0.36, 0.8, 0.48]
bend = [0.0, 0.0, 1.0]
amp = 0.05
"#,
    )
    .unwrap();
    let out = run(&s, &Overrides::default()).unwrap();
    assert!(out.report.passed, "{:?}", out.report.identities);
    assert_eq!(out.report.environment.fixture, "custom");
    assert!(run(&s, &Overrides { seed: None, dim: Some(4) }).is_err());
}
