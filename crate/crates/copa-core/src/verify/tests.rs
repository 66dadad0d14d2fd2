use super::*;

#[test]
fn gradcheck_suite_covers_every_network_and_both_losses() {
    let report = run_suite(SuiteKind::Gradcheck, 3, 41);
    assert!(report.pass, "{}", report.render());
    assert_eq!(report.trials, 18);
    for part in ["coach", "player", "mixer", "decoder", "loss-td", "loss-var"] {
        assert!(
            report.lines.iter().any(|l| l.starts_with(part)),
            "missing {part} in {:?}",
            report.lines
        );
    }
}

#[test]
fn monotonicity_suite_small() {
    let report = run_suite(SuiteKind::Monotonicity, 60, 42);
    assert!(report.pass, "{}", report.render());
    assert_eq!(report.trials, 60);
}

#[test]
fn bound_suite_small() {
    let report = run_suite(SuiteKind::Bound, 40, 43);
    assert!(report.pass, "{}", report.render());
    // Exactness sub-cases are interleaved every fifth trial.
    assert!(report.lines.iter().any(|l| l.contains("κ=β=0 exact gap")));
}

#[test]
fn gaussian_suite_small() {
    let report = run_suite(SuiteKind::Gaussian, 25, 44);
    assert!(report.pass, "{}", report.render());
    // 25 pooled + 25 entropy + 3ρ × 2 posteriors of the MI check.
    assert_eq!(report.trials, 56);
    assert_eq!(report.lines.iter().filter(|l| l.starts_with("mi bound")).count(), 6);
}

#[test]
fn reports_render_machine_readably() {
    let report = run_suite(SuiteKind::Monotonicity, 5, 45);
    let text = report.render();
    assert!(text.starts_with("suite=monotonicity pass=true trials=5 failures=0"));
}

#[test]
fn suite_kinds_round_trip_through_names() {
    for kind in SuiteKind::all() {
        assert_eq!(SuiteKind::parse(kind.name()), Some(kind));
    }
    assert_eq!(SuiteKind::parse("nope"), None);
}

#[test]
fn simpson_integrates_polynomials_exactly() {
    // Simpson is exact for cubics: ∫₀¹ x³ dx = 1/4.
    let v = simpson(|x| x * x * x, 0.0, 1.0, 2);
    assert!((v - 0.25).abs() < 1e-15);
    let g = simpson(|x| (-0.5 * x * x).exp(), -10.0, 10.0, 10_000);
    assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
}
