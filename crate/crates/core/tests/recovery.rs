use gmdisco::gmpe::{builtin_models, predict, Im};
use gmdisco::library::{build_design_matrix, default_library, NormalizationMode, Scenario};
use gmdisco::stridge::{
    default_delta_grid, select_threshold, stridge_fit, threshold_sweep, SolverConfig,
};
use gmdisco::synth::{generate, SynthSpec};

fn truth_terms(im: Im) -> Vec<String> {
    let (pga, pgv) = builtin_models();
    let eq = if im == Im::Pga { pga } else { pgv };
    let mut t: Vec<String> = eq.terms().iter().map(|c| c.term.to_string()).collect();
    t.sort();
    t
}

fn fitted_terms(eq: &gmdisco::PhysicalEquation) -> Vec<String> {
    let mut t: Vec<String> = eq.terms().iter().map(|c| c.term.to_string()).collect();
    t.sort();
    t
}

#[test]
fn noisy_pga_recovers_seven_terms() {
    let (pga, _) = builtin_models();
    let records = generate(&SynthSpec::new(pga.clone(), 500, 10, 0.0, 0.1, 2024)).unwrap();
    let matrix = build_design_matrix(
        &records,
        &default_library(),
        Im::Pga,
        NormalizationMode::MaxAbs,
    )
    .unwrap();
    let sweep = threshold_sweep(&matrix, &SolverConfig::default(), &default_delta_grid()).unwrap();
    assert!(sweep.is_monotone(), "{:?}", sweep.n_terms());
    let delta = select_threshold(&sweep).unwrap();
    let model = stridge_fit(&matrix, &SolverConfig::default().with_delta(delta)).unwrap();
    assert_eq!(
        fitted_terms(&model.physical),
        truth_terms(Im::Pga),
        "{:?}",
        sweep.n_terms()
    );
    for tc in pga.terms() {
        let got = model.physical.coefficient(&tc.term).unwrap();
        let c = tc.coefficient;
        if c.abs() > 0.1 {
            assert!(((got - c) / c).abs() < 0.05, "{} {got} vs {c}", tc.term);
        } else {
            assert!((got - c).abs() < 0.005, "{} {got} vs {c}", tc.term);
        }
    }
}

#[test]
fn noiseless_recovery_is_exact_on_plateau() {
    for im in [Im::Pga, Im::Pgv] {
        let (pga, pgv) = builtin_models();
        let truth = if im == Im::Pga { pga } else { pgv };
        let records = generate(&SynthSpec::new(truth.clone(), 300, 10, 0.0, 0.0, 9)).unwrap();
        let matrix =
            build_design_matrix(&records, &default_library(), im, NormalizationMode::MaxAbs)
                .unwrap();
        let sweep =
            threshold_sweep(&matrix, &SolverConfig::default(), &default_delta_grid()).unwrap();
        let n_true = truth.n_active();
        let plateau: Vec<_> = sweep
            .points
            .iter()
            .filter(|p| p.n_terms == n_true)
            .collect();
        assert!(!plateau.is_empty(), "{im}: {:?}", sweep.n_terms());
        for p in plateau {
            let eq = &p.model.as_ref().unwrap().physical;
            assert_eq!(fitted_terms(eq), truth_terms(im));
            for tc in truth.terms() {
                let got = eq.coefficient(&tc.term).unwrap();
                assert!(
                    (got - tc.coefficient).abs() < 1e-6,
                    "{im} {} {got}",
                    tc.term
                );
            }
            assert!((eq.constant() - truth.constant()).abs() < 1e-6);
            let s = Scenario::new(6.0, 10.0, 760.0);
            assert!((predict(eq, &s).unwrap() - predict(&truth, &s).unwrap()).abs() < 1e-6);
        }
        let delta = select_threshold(&sweep).unwrap();
        let chosen = sweep.points.iter().find(|p| p.delta == delta).unwrap();
        assert_eq!(chosen.n_terms, n_true, "{im}");
    }
}
