use gmdisco::gmpe::{builtin_model, predict, Im};
use gmdisco::library::{
    build_design_matrix, default_library, denormalize_coefficients, DesignMatrix,
    NormalizationMode, Scenario,
};
use gmdisco::mixedfx::{
    decompose, estimate_variance_components, marginal_log_likelihood, GroupedResiduals,
};
use gmdisco::stridge::{select_knee, stridge_fit, KneeRule, SolverConfig};
use gmdisco::synth::{generate, two_level_residuals, RecordsPerEvent, SynthSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn design(im: Im, seed: u64, n_events: usize, phi: f64, mode: NormalizationMode) -> DesignMatrix {
    let spec = SynthSpec::new(builtin_model(im), n_events, 6, 0.2, phi, seed);
    let records = generate(&spec).unwrap();
    build_design_matrix(&records, &default_library(), im, mode).unwrap()
}

fn im_strategy() -> impl Strategy<Value = Im> {
    prop_oneof![Just(Im::Pga), Just(Im::Pgv)]
}

fn mode_strategy() -> impl Strategy<Value = NormalizationMode> {
    prop_oneof![
        Just(NormalizationMode::MaxAbs),
        Just(NormalizationMode::MinMax),
        Just(NormalizationMode::ZScore),
    ]
}

/// Dense `-0.5 (n ln 2pi + ln|C| + r' C^-1 r)` with block-diagonal
/// `C = phi^2 I + tau^2 J` per event.
fn dense_log_likelihood(pairs: &[(String, f64)], tau: f64, phi: f64) -> f64 {
    let n = pairs.len();
    let c = DMatrix::from_fn(n, n, |i, j| {
        let same = pairs[i].0 == pairs[j].0;
        f64::from(u8::from(same)) * tau * tau + if i == j { phi * phi } else { 0.0 }
    });
    let r = DVector::from_iterator(n, pairs.iter().map(|p| p.1));
    let chol = c.cholesky().unwrap();
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = r.dot(&chol.solve(&r));
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn final_fit_satisfies_normal_equations_on_support(
        im in im_strategy(), seed in 0u64..1000, delta in 1e-3f64..2.0,
    ) {
        let m = design(im, seed, 40, 0.3, NormalizationMode::MaxAbs);
        let model = stridge_fit(&m, &SolverConfig::default().with_delta(delta)).unwrap();
        let resid = m.y() - m.predict_normalized(&model.xi_normalized);
        let scale = m.y().norm() * m.theta().norm();
        for &j in &model.support {
            let g = m.theta().column(j).dot(&resid);
            prop_assert!(g.abs() <= 1e-8 * scale, "column {j}: {g}");
        }
        for (j, x) in model.xi_normalized.iter().enumerate() {
            prop_assert_eq!(*x != 0.0, model.support.contains(&j));
        }
    }

    #[test]
    fn support_only_shrinks(im in im_strategy(), seed in 0u64..1000, delta in 1e-3f64..5.0) {
        let m = design(im, seed, 30, 0.5, NormalizationMode::MaxAbs);
        let model = stridge_fit(&m, &SolverConfig::default().with_delta(delta)).unwrap();
        prop_assert_eq!(model.support_trace[0].len(), m.n_terms());
        for pair in model.support_trace.windows(2) {
            prop_assert!(pair[1].iter().all(|j| pair[0].contains(j)));
        }
        prop_assert_eq!(model.support_trace.last().unwrap(), &model.support);
    }

    #[test]
    fn zero_threshold_unregularized_is_least_squares(im in im_strategy(), seed in 0u64..1000) {
        let m = design(im, seed, 40, 0.4, NormalizationMode::MaxAbs);
        let cfg = SolverConfig { lambda: 0.0, ..SolverConfig::default() };
        let model = stridge_fit(&m, &cfg).unwrap();
        let svd = m.theta().clone().svd(true, true);
        let oracle = svd.solve(m.y(), 1e-14).unwrap();
        let ours = m.predict_normalized(&model.xi_normalized);
        let theirs = m.theta() * &oracle;
        let err = (&ours - &theirs).amax();
        prop_assert!(err < 1e-7, "fitted values differ by {err}");
    }

    #[test]
    fn physical_and_normalized_predictions_agree(
        im in im_strategy(), mode in mode_strategy(), seed in 0u64..1000, delta in 1e-3f64..1.0,
    ) {
        let spec = SynthSpec::new(builtin_model(im), 30, 5, 0.2, 0.3, seed);
        let records = generate(&spec).unwrap();
        let m = build_design_matrix(&records, &default_library(), im, mode).unwrap();
        let model = stridge_fit(&m, &SolverConfig::default().with_delta(delta)).unwrap();
        let eq = denormalize_coefficients(&model.xi_normalized, &m);
        let normalized = m.predict_normalized(&model.xi_normalized);
        for (rec, yn) in records.iter().zip(normalized.iter()) {
            let s = Scenario {
                fm: f64::from(rec.fm.code()),
                z_1_0: rec.z_1_0,
                ..Scenario::new(rec.m_w, rec.r_jb, rec.v_s30)
            };
            let yp = predict(&eq, &s).unwrap();
            prop_assert!((yp - yn).abs() <= 1e-9 * (1.0 + yn.abs()), "{yp} vs {yn}");
        }
    }

    #[test]
    fn knee_is_a_drop_point(
        drops in proptest::collection::vec(0usize..4, 2..30), start in 1usize..15,
    ) {
        let mut n = start;
        let seq: Vec<usize> = drops.iter().map(|d| { n = n.saturating_sub(*d); n }).collect();
        let rule = KneeRule::default();
        match select_knee(&seq, None, 0.0, &rule) {
            Ok(k) => {
                prop_assert!(k > 0 && seq[k - 1] > seq[k] && seq[k] > 0);
                let size = seq[k - 1] - seq[k];
                for j in 1..seq.len() {
                    if seq[j] > 0 && seq[j - 1] > seq[j] {
                        let other = seq[j - 1] - seq[j];
                        prop_assert!(other < size || (other == size && j <= k));
                    }
                }
            }
            Err(_) => prop_assert!((1..seq.len()).all(|j| seq[j] == 0 || seq[j] >= seq[j - 1])),
        }
    }

    #[test]
    fn knee_with_rss_never_selects_underfit(
        drops in proptest::collection::vec(0usize..3, 2..20),
        growth in proptest::collection::vec(0.0f64..0.05, 20),
    ) {
        let mut n = 12usize;
        let seq: Vec<usize> = drops.iter().map(|d| { n = n.saturating_sub(*d); n }).collect();
        let mut r = 1.0;
        let rss: Vec<f64> = seq.iter().zip(&growth).map(|(_, g)| { r *= 1.0 + g; r }).collect();
        let rule = KneeRule::default();
        if let Ok(k) = select_knee(&seq, Some(&rss), 100.0, &rule) {
            let reference = seq.iter().position(|&v| v > 0).unwrap();
            prop_assert!(k == reference || (seq[k - 1] > seq[k] && seq[k] > 0));
            prop_assert!(k == reference || rss[k] <= rss[reference] * (1.0 + rule.underfit_tolerance) + 1e-10);
        }
    }

    #[test]
    fn decomposition_identity_and_shrinkage(
        seed in 0u64..10_000, n_events in 2usize..20, per in 1usize..8,
        tau in 0.0f64..1.0, phi in 0.05f64..1.0,
    ) {
        let pairs = two_level_residuals(n_events, per, tau, phi, seed);
        let grouped = GroupedResiduals::from_pairs(pairs.iter().map(|(e, r)| (e, *r)));
        let d = decompose(&grouped, tau, phi).unwrap();
        for (i, (e, r)) in pairs.iter().enumerate() {
            let eta = d.eta_of(e).unwrap();
            prop_assert!((r - eta - d.epsilon[i]).abs() <= 1e-14 * (1.0 + r.abs()));
        }
        for ev in grouped.events() {
            let mean = ev.residuals.iter().sum::<f64>() / ev.residuals.len() as f64;
            prop_assert!(d.eta_of(&ev.event_id).unwrap().abs() <= mean.abs() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn likelihood_matches_dense_form(
        seed in 0u64..10_000, n_events in 1usize..5, per in 1usize..5,
        tau in 0.01f64..1.5, phi in 0.05f64..1.5,
    ) {
        let pairs = two_level_residuals(n_events, per, 0.5, 0.5, seed);
        let grouped = GroupedResiduals::from_pairs(pairs.iter().map(|(e, r)| (e, *r)));
        let ours = marginal_log_likelihood(&grouped, tau, phi).unwrap();
        let dense = dense_log_likelihood(&pairs, tau, phi);
        prop_assert!((ours - dense).abs() <= 1e-10 * (1.0 + dense.abs()), "{ours} vs {dense}");
    }

    #[test]
    fn estimate_ignores_record_order(
        seed in 0u64..10_000, n_events in 2usize..12,
        order in Just((0usize..60).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let pairs = two_level_residuals(n_events, 5, 0.4, 0.6, seed);
        let shuffled: Vec<_> = order.iter().filter(|&&i| i < pairs.len()).map(|&i| pairs[i].clone()).collect();
        let a = estimate_variance_components(&GroupedResiduals::from_pairs(pairs.iter().map(|(e, r)| (e, *r)))).unwrap();
        let b = estimate_variance_components(&GroupedResiduals::from_pairs(shuffled.iter().map(|(e, r)| (e, *r)))).unwrap();
        prop_assert_eq!(a.tau.to_bits(), b.tau.to_bits());
        prop_assert_eq!(a.phi.to_bits(), b.phi.to_bits());
        prop_assert_eq!(a.log_likelihood.to_bits(), b.log_likelihood.to_bits());
    }

    #[test]
    fn synthetic_records_respect_ranges(
        seed in any::<u64>(), n_events in 1usize..30, lo in 1usize..4, extra in 0usize..5,
    ) {
        let mut spec = SynthSpec::new(builtin_model(Im::Pga), n_events, lo, 0.3, 0.5, seed);
        spec.records_per_event = RecordsPerEvent::Range { min: lo, max: lo + extra };
        let records = generate(&spec).unwrap();
        let r = spec.ranges;
        let mut per_event = std::collections::HashMap::new();
        for rec in &records {
            prop_assert!(r.m_w.contains(rec.m_w) && r.r_jb.contains(rec.r_jb));
            prop_assert!(r.v_s30.contains(rec.v_s30) && r.z_1_0.contains(rec.z_1_0));
            prop_assert!(r.depth.contains(rec.depth));
            prop_assert!(rec.pga > 0.0 && rec.pgv > 0.0);
            *per_event.entry(rec.event_id.clone()).or_insert(0usize) += 1;
        }
        prop_assert_eq!(per_event.len(), n_events);
        prop_assert!(per_event.values().all(|&c| c >= lo && c <= lo + extra));
        prop_assert_eq!(generate(&spec).unwrap(), records);
    }
}
