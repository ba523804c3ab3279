//! Two-level random-effects residual analysis.
//!
//! Residuals are modelled as `r_ij = eta_i + eps_ij` with `eta_i ~ N(0, tau^2)`
//! per event and `eps_ij ~ N(0, phi^2)` per record. Variance components are
//! estimated by direct maximization of the marginal likelihood.

use std::collections::HashMap;
use std::f64::consts::PI;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest intra-event SD the estimator will report.
pub const PHI_FLOOR: f64 = 1e-8;
pub const LOW_MAGNITUDE_BREAK: f64 = 4.5;
pub const HIGH_MAGNITUDE_BREAK: f64 = 5.5;

#[derive(Debug, Clone, PartialEq)]
pub struct EventResiduals {
    pub event_id: String,
    pub residuals: Vec<f64>,
    /// Position of each residual in the caller's original record order.
    pub record_index: Vec<usize>,
}

/// Residuals grouped by event, events in first-appearance order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupedResiduals {
    events: Vec<EventResiduals>,
    n_records: usize,
}

impl GroupedResiduals {
    pub fn from_pairs<S, I>(pairs: I) -> Self
    where
        S: AsRef<str>,
        I: IntoIterator<Item = (S, f64)>,
    {
        let mut slot: HashMap<String, usize> = HashMap::new();
        let mut events: Vec<EventResiduals> = Vec::new();
        let mut n_records = 0;
        for (idx, (id, r)) in pairs.into_iter().enumerate() {
            let id = id.as_ref();
            let k = *slot.entry(id.to_string()).or_insert_with(|| {
                events.push(EventResiduals {
                    event_id: id.to_string(),
                    residuals: Vec::new(),
                    record_index: Vec::new(),
                });
                events.len() - 1
            });
            events[k].residuals.push(r);
            events[k].record_index.push(idx);
            n_records += 1;
        }
        GroupedResiduals { events, n_records }
    }

    pub fn events(&self) -> &[EventResiduals] {
        &self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    fn check_finite(&self) -> Result<()> {
        for ev in &self.events {
            if let Some(r) = ev.residuals.iter().find(|r| !r.is_finite()) {
                return Err(Error::Domain(format!(
                    "non-finite residual {r} in event {}",
                    ev.event_id
                )));
            }
        }
        Ok(())
    }

    /// Per-event `(n, sum r, sum r^2)`, each summed over sorted residuals and
    /// the list sorted, so results do not depend on input order.
    fn sufficient_stats(&self) -> Vec<EventStats> {
        let mut stats: Vec<EventStats> = self
            .events
            .iter()
            .map(|ev| {
                let mut r = ev.residuals.clone();
                r.sort_by(f64::total_cmp);
                EventStats {
                    n: r.len() as f64,
                    sum: r.iter().sum(),
                    sum_sq: r.iter().map(|v| v * v).sum(),
                }
            })
            .collect();
        stats.sort_by(|a, b| {
            a.n.total_cmp(&b.n)
                .then(a.sum.total_cmp(&b.sum))
                .then(a.sum_sq.total_cmp(&b.sum_sq))
        });
        stats
    }
}

#[derive(Debug, Clone, Copy)]
struct EventStats {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

fn log_likelihood_stats(stats: &[EventStats], tau2: f64, phi2: f64) -> f64 {
    stats
        .iter()
        .map(|s| {
            let d = phi2 + s.n * tau2;
            -0.5 * (s.n * (2.0 * PI).ln()
                + (s.n - 1.0) * phi2.ln()
                + d.ln()
                + (s.sum_sq - tau2 * s.sum * s.sum / d) / phi2)
        })
        .sum()
}

/// Exact Gaussian log-likelihood under per-event covariance
/// `phi^2 I + tau^2 1 1^T`.
pub fn marginal_log_likelihood(residuals: &GroupedResiduals, tau: f64, phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::Domain(format!("phi must be > 0, got {phi}")));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("tau must be >= 0, got {tau}")));
    }
    residuals.check_finite()?;
    Ok(log_likelihood_stats(
        &residuals.sufficient_stats(),
        tau * tau,
        phi * phi,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub tau: f64,
    pub phi: f64,
    pub log_likelihood: f64,
    /// The maximum lies on the `tau = 0` boundary.
    pub boundary: bool,
    /// All residuals equal, or no within-event spread; `phi` sits at its floor
    /// or equals the common value.
    pub degenerate: bool,
}

/// Minimizes `f` from `start` with the Nelder-Mead simplex method.
fn nelder_mead(f: &dyn Fn([f64; 2]) -> f64, start: [f64; 2], step: f64) -> ([f64; 2], f64) {
    let mut simplex = [
        start,
        [start[0] + step, start[1]],
        [start[0], start[1] + step],
    ];
    let mut values = simplex.map(f);
    for _ in 0..5000 {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        let spread = (values[2] - values[0]).abs();
        let size = (1..3)
            .map(|i| {
                (simplex[i][0] - simplex[0][0])
                    .abs()
                    .max((simplex[i][1] - simplex[0][1]).abs())
            })
            .fold(0.0, f64::max);
        if spread <= 1e-13 * (1.0 + values[0].abs()) && size < 1e-9 {
            break;
        }

        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
            continue;
        }
        if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
            continue;
        }
        let contracted = if fr < values[2] {
            along(-0.5)
        } else {
            along(0.5)
        };
        let fc = f(contracted);
        if fc < values[2].min(fr) {
            simplex[2] = contracted;
            values[2] = fc;
            continue;
        }
        for i in 1..3 {
            simplex[i] = [
                0.5 * (simplex[0][0] + simplex[i][0]),
                0.5 * (simplex[0][1] + simplex[i][1]),
            ];
            values[i] = f(simplex[i]);
        }
    }
    let best = (0..3)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    (simplex[best], values[best])
}

/// Maximum-likelihood `(tau, phi)`.
///
/// The search runs over `(ln tau^2, ln phi^2)` from several starts scaled to
/// the data, each polished by a restart, and is compared against the
/// closed-form `tau = 0` boundary solution.
pub fn estimate_variance_components(residuals: &GroupedResiduals) -> Result<VarianceComponents> {
    residuals.check_finite()?;
    if residuals.n_events() < 2 {
        return Err(Error::Estimation(format!(
            "variance components need at least 2 events, got {}",
            residuals.n_events()
        )));
    }
    if residuals.events().iter().all(|e| e.residuals.len() < 2) {
        return Err(Error::Estimation(
            "variance components need at least one event with 2 or more records".into(),
        ));
    }

    let stats = residuals.sufficient_stats();
    let n_total: f64 = stats.iter().map(|s| s.n).sum();
    let mean_sq = stats.iter().map(|s| s.sum_sq).sum::<f64>() / n_total;
    let within: f64 = stats.iter().map(|s| s.sum_sq - s.sum * s.sum / s.n).sum();
    let all_equal = {
        let first = residuals.events()[0].residuals[0];
        residuals
            .events()
            .iter()
            .all(|e| e.residuals.iter().all(|&r| r == first))
    };
    let phi2_floor = PHI_FLOOR * PHI_FLOOR;

    let boundary_phi2 = mean_sq.max(phi2_floor);
    let boundary_ll = log_likelihood_stats(&stats, 0.0, boundary_phi2);
    if all_equal {
        return Ok(VarianceComponents {
            tau: 0.0,
            phi: boundary_phi2.sqrt(),
            log_likelihood: boundary_ll,
            boundary: true,
            degenerate: true,
        });
    }

    let tau2_min = 1e-300;
    let objective = |p: [f64; 2]| {
        let tau2 = p[0].exp().max(tau2_min);
        let phi2 = p[1].exp().max(phi2_floor);
        -log_likelihood_stats(&stats, tau2, phi2)
    };
    let scale = mean_sq.max(phi2_floor);
    let within_var = (within / n_total).max(phi2_floor);
    let starts = [
        [(0.5 * scale).ln(), (0.5 * scale).ln()],
        [(0.1 * scale).ln(), within_var.ln()],
        [scale.ln(), (0.1 * scale).ln()],
    ];
    let mut best = ([f64::NAN; 2], f64::INFINITY);
    for start in starts {
        let (p1, v1) = nelder_mead(&objective, start, 1.0);
        let (p2, v2) = nelder_mead(&objective, p1, 0.05);
        let (p, v) = if v2 < v1 { (p2, v2) } else { (p1, v1) };
        if v < best.1 {
            best = (p, v);
        }
    }

    let (p, neg_ll) = best;
    let tau2 = p[0].exp().max(tau2_min);
    let phi2 = p[1].exp().max(phi2_floor);
    let interior_ll = -neg_ll;
    let at_floor = phi2 <= phi2_floor * (1.0 + 1e-9);
    if boundary_ll >= interior_ll || tau2 <= 1e-14 * scale {
        return Ok(VarianceComponents {
            tau: 0.0,
            phi: boundary_phi2.sqrt(),
            log_likelihood: boundary_ll,
            boundary: true,
            degenerate: boundary_phi2 <= phi2_floor,
        });
    }
    Ok(VarianceComponents {
        tau: tau2.sqrt(),
        phi: phi2.sqrt(),
        log_likelihood: interior_ll,
        boundary: false,
        degenerate: at_floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDecomposition {
    /// Inter-event residual per event, in grouping order.
    pub eta: IndexMap<String, f64>,
    /// Intra-event residual per record, in the caller's original order.
    pub epsilon: Vec<f64>,
    /// Event of each record, aligned with `epsilon`.
    pub record_event: Vec<String>,
    pub tau: f64,
    pub phi: f64,
    pub log_likelihood: f64,
}

impl ResidualDecomposition {
    pub fn eta_of(&self, event_id: &str) -> Result<f64> {
        self.eta
            .get(event_id)
            .copied()
            .ok_or_else(|| Error::UnknownEvent(event_id.to_string()))
    }
}

/// Best linear unbiased predictors `eta_i = tau^2 sum_j r_ij / (phi^2 + n_i tau^2)`
/// and `eps_ij = r_ij - eta_i`.
pub fn decompose(
    residuals: &GroupedResiduals,
    tau: f64,
    phi: f64,
) -> Result<ResidualDecomposition> {
    let log_likelihood = marginal_log_likelihood(residuals, tau, phi)?;
    let (tau2, phi2) = (tau * tau, phi * phi);
    let mut eta = IndexMap::with_capacity(residuals.n_events());
    let mut epsilon = vec![f64::NAN; residuals.n_records()];
    let mut record_event = vec![String::new(); residuals.n_records()];
    for ev in residuals.events() {
        let n = ev.residuals.len() as f64;
        let mut sorted = ev.residuals.clone();
        sorted.sort_by(f64::total_cmp);
        let sum: f64 = sorted.iter().sum();
        let e = tau2 * sum / (phi2 + n * tau2);
        eta.insert(ev.event_id.clone(), e);
        for (&r, &idx) in ev.residuals.iter().zip(&ev.record_index) {
            epsilon[idx] = r - e;
            record_event[idx] = ev.event_id.clone();
        }
    }
    Ok(ResidualDecomposition {
        eta,
        epsilon,
        record_event,
        tau,
        phi,
        log_likelihood,
    })
}

/// Piecewise-linear magnitude dependence of the residual SDs, flat below
/// M 4.5 and above M 5.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaModel {
    pub tau1: f64,
    pub tau2: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl SigmaModel {
    pub fn new(tau1: f64, tau2: f64, phi1: f64, phi2: f64) -> Result<Self> {
        let model = SigmaModel {
            tau1,
            tau2,
            phi1,
            phi2,
        };
        for (name, v) in [
            ("tau1", tau1),
            ("tau2", tau2),
            ("phi1", phi1),
            ("phi2", phi2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(model)
    }

    pub fn pga() -> Self {
        SigmaModel {
            tau1: 0.511,
            tau2: 0.392,
            phi1: 0.756,
            phi2: 0.576,
        }
    }

    pub fn pgv() -> Self {
        SigmaModel {
            tau1: 0.374,
            tau2: 0.438,
            phi1: 0.670,
            phi2: 0.547,
        }
    }
}

/// `(tau, phi)` at magnitude `m`.
pub fn sigma_at_magnitude(model: &SigmaModel, m: f64) -> (f64, f64) {
    let interp = |low: f64, high: f64| {
        if m <= LOW_MAGNITUDE_BREAK {
            low
        } else if m >= HIGH_MAGNITUDE_BREAK {
            high
        } else {
            low + (high - low) * (m - LOW_MAGNITUDE_BREAK)
        }
    };
    (
        interp(model.tau1, model.tau2),
        interp(model.phi1, model.phi2),
    )
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Plateau SDs from events in the two magnitude bins; events between the
/// breakpoints are ignored. A fitted SD may be zero when a bin has no spread.
pub fn fit_sigma_model(
    decomposition: &ResidualDecomposition,
    magnitudes: &HashMap<String, f64>,
) -> Result<SigmaModel> {
    let magnitude = |id: &str| {
        magnitudes
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownEvent(id.to_string()))
    };
    let low = |m: f64| m <= LOW_MAGNITUDE_BREAK;
    let high = |m: f64| m >= HIGH_MAGNITUDE_BREAK;

    let (mut eta_low, mut eta_high) = (Vec::new(), Vec::new());
    for (id, &e) in &decomposition.eta {
        let m = magnitude(id)?;
        if low(m) {
            eta_low.push(e);
        } else if high(m) {
            eta_high.push(e);
        }
    }
    let (mut eps_low, mut eps_high) = (Vec::new(), Vec::new());
    for (id, &e) in decomposition
        .record_event
        .iter()
        .zip(&decomposition.epsilon)
    {
        let m = magnitude(id)?;
        if low(m) {
            eps_low.push(e);
        } else if high(m) {
            eps_high.push(e);
        }
    }

    for (label, events, records) in [
        ("M <= 4.5", &eta_low, &eps_low),
        ("M >= 5.5", &eta_high, &eps_high),
    ] {
        if events.len() < 2 {
            return Err(Error::Estimation(format!(
                "magnitude bin {label} has {} event(s); at least 2 are required",
                events.len()
            )));
        }
        if records.len() < 2 {
            return Err(Error::Estimation(format!(
                "magnitude bin {label} has {} intra-event residual(s); at least 2 are required",
                records.len()
            )));
        }
    }
    Ok(SigmaModel {
        tau1: sample_sd(&eta_low),
        tau2: sample_sd(&eta_high),
        phi1: sample_sd(&eps_low),
        phi2: sample_sd(&eps_high),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lower: f64,
    pub upper: f64,
    /// Geometric midpoint of the bin.
    pub center: f64,
    /// NaN for an empty bin.
    pub mean: f64,
    /// Sample SD; 0 for a single value, NaN for an empty bin.
    pub sd: f64,
    pub count: usize,
}

/// `n_bins + 1` log-spaced edges from `lo` to `hi`.
pub fn log_spaced_edges(lo: f64, hi: f64, n_bins: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || n_bins == 0 {
        return Err(Error::Config(format!(
            "log-spaced bins need 0 < lo < hi and at least one bin (lo={lo}, hi={hi}, n={n_bins})"
        )));
    }
    Ok(crate::gmpe::log_spaced(lo, hi, n_bins + 1))
}

/// Mean and SD of `values` in bins of `bin_variable` delimited by `edges`.
///
/// Bins are half-open `[lower, upper)` except the last, which is closed.
/// Points outside the edges or with a non-finite value are not counted.
pub fn binned_residual_stats(
    values: &[f64],
    bin_variable: &[f64],
    edges: &[f64],
) -> Result<Vec<BinStat>> {
    if values.len() != bin_variable.len() {
        return Err(Error::Config(format!(
            "{} values but {} bin coordinates",
            values.len(),
            bin_variable.len()
        )));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "bin edges must be strictly increasing with at least two entries".into(),
        ));
    }
    let n_bins = edges.len() - 1;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (&v, &x) in values.iter().zip(bin_variable) {
        if !v.is_finite() || !(x >= edges[0] && x <= edges[n_bins]) {
            continue;
        }
        let k = edges
            .partition_point(|&e| e <= x)
            .saturating_sub(1)
            .min(n_bins - 1);
        members[k].push(v);
    }
    Ok(members
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let (lower, upper) = (edges[k], edges[k + 1]);
            let count = m.len();
            let (mean, sd) = if count == 0 {
                (f64::NAN, f64::NAN)
            } else {
                (m.iter().sum::<f64>() / count as f64, sample_sd(m))
            };
            BinStat {
                lower,
                upper,
                center: if lower > 0.0 {
                    (lower * upper).sqrt()
                } else {
                    0.5 * (lower + upper)
                },
                mean,
                sd,
                count,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grouped(events: &[(&str, &[f64])]) -> GroupedResiduals {
        GroupedResiduals::from_pairs(
            events
                .iter()
                .flat_map(|(id, rs)| rs.iter().map(move |&r| (*id, r))),
        )
    }

    #[test]
    fn standard_normal_at_zero() {
        let g = grouped(&[("a", &[0.0])]);
        let ll = marginal_log_likelihood(&g, 0.0, 1.0).unwrap();
        assert!((ll + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_tau_is_iid_normal() {
        let rs = [0.3, -1.2, 0.7, 2.0, -0.1];
        let g = grouped(&[("a", &rs[..2]), ("b", &rs[2..])]);
        let phi: f64 = 0.8;
        let iid: f64 = rs
            .iter()
            .map(|r| -0.5 * (2.0 * PI * phi * phi).ln() - r * r / (2.0 * phi * phi))
            .sum();
        let ll = marginal_log_likelihood(&g, 0.0, phi).unwrap();
        assert!((ll - iid).abs() < 1e-12);
    }

    #[test]
    fn likelihood_rejects_bad_inputs() {
        let g = grouped(&[("a", &[0.0, f64::NAN])]);
        assert!(matches!(
            marginal_log_likelihood(&g, 0.1, 1.0),
            Err(Error::Domain(_))
        ));
        let g = grouped(&[("a", &[0.0])]);
        assert!(marginal_log_likelihood(&g, 0.1, 0.0).is_err());
        assert!(marginal_log_likelihood(&g, -0.1, 1.0).is_err());
    }

    #[test]
    fn blup_hand_example() {
        let g = grouped(&[("a", &[1.0, 1.0])]);
        let d = decompose(&g, 1.0, 1.0).unwrap();
        assert!((d.eta["a"] - 2.0 / 3.0).abs() < 1e-15);
        for e in &d.epsilon {
            assert!((e - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_tau_has_no_event_term() {
        let g = grouped(&[("a", &[0.5, -0.2]), ("b", &[1.5])]);
        let d = decompose(&g, 0.0, 0.7).unwrap();
        assert!(d.eta.values().all(|&e| e == 0.0));
        assert_eq!(d.epsilon, vec![0.5, -0.2, 1.5]);
    }

    #[test]
    fn epsilon_follows_input_order() {
        let g = GroupedResiduals::from_pairs([("b", 1.0), ("a", 2.0), ("b", 3.0)]);
        let d = decompose(&g, 0.5, 0.5).unwrap();
        assert_eq!(d.record_event, vec!["b", "a", "b"]);
        assert_eq!(d.eta.keys().collect::<Vec<_>>(), vec!["b", "a"]);
        assert!((d.epsilon[1] + d.eta["a"] - 2.0).abs() < 1e-15);
        assert!(matches!(d.eta_of("zz"), Err(Error::UnknownEvent(_))));
    }

    #[test]
    fn all_zero_residuals_are_degenerate() {
        let g = grouped(&[("a", &[0.0, 0.0]), ("b", &[0.0, 0.0, 0.0])]);
        let vc = estimate_variance_components(&g).unwrap();
        assert_eq!(vc.tau, 0.0);
        assert!(vc.phi <= PHI_FLOOR);
        assert!(vc.degenerate && vc.boundary);
    }

    #[test]
    fn estimator_preconditions() {
        let one_event = grouped(&[("a", &[0.1, 0.2])]);
        assert!(matches!(
            estimate_variance_components(&one_event),
            Err(Error::Estimation(_))
        ));
        let singletons = grouped(&[("a", &[0.1]), ("b", &[0.2])]);
        assert!(matches!(
            estimate_variance_components(&singletons),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn no_between_event_spread_goes_to_boundary() {
        let g = grouped(&[
            ("a", &[1.0, -1.0]),
            ("b", &[0.5, -0.5]),
            ("c", &[2.0, -2.0]),
        ]);
        let vc = estimate_variance_components(&g).unwrap();
        assert!(vc.boundary);
        assert_eq!(vc.tau, 0.0);
        let mean_sq: f64 = (2.0 + 0.5 + 8.0) / 6.0;
        assert!((vc.phi - mean_sq.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn table_values() {
        let pga = SigmaModel::pga();
        assert_eq!(sigma_at_magnitude(&pga, 4.0), (0.511, 0.756));
        let (t, p) = sigma_at_magnitude(&pga, 5.0);
        assert!((t - 0.4515).abs() < 1e-12 && (p - 0.666).abs() < 1e-12);
        assert_eq!(sigma_at_magnitude(&SigmaModel::pgv(), 6.5), (0.438, 0.547));
        assert!(SigmaModel::new(0.1, 0.2, 0.0, 0.3).is_err());
        assert_eq!(SigmaModel::new(0.511, 0.392, 0.756, 0.576).unwrap(), pga);
    }

    #[test]
    fn sigma_fit_names_missing_bin() {
        let g = grouped(&[("a", &[0.1, 0.2]), ("b", &[0.3, -0.4])]);
        let d = decompose(&g, 0.3, 0.5).unwrap();
        let mags: HashMap<String, f64> = [("a".to_string(), 6.0), ("b".to_string(), 6.0)].into();
        match fit_sigma_model(&d, &mags) {
            Err(Error::Estimation(msg)) => assert!(msg.contains("M <= 4.5"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sigma_fit_equal_eta_gives_zero_tau() {
        let g = grouped(&[
            ("a", &[0.5, -0.5]),
            ("b", &[0.5, -0.5]),
            ("c", &[0.2, 0.4]),
            ("d", &[-0.1, 0.9]),
        ]);
        let d = decompose(&g, 0.3, 0.5).unwrap();
        let mags: HashMap<String, f64> = [("a", 4.0), ("b", 4.2), ("c", 6.0), ("d", 6.5)]
            .map(|(k, v)| (k.to_string(), v))
            .into();
        let s = fit_sigma_model(&d, &mags).unwrap();
        assert_eq!(s.tau1, 0.0);
        assert!(s.tau2 > 0.0);
        let mut missing = mags.clone();
        missing.remove("d");
        assert!(matches!(
            fit_sigma_model(&d, &missing),
            Err(Error::UnknownEvent(_))
        ));
    }

    #[test]
    fn bins() {
        let edges = log_spaced_edges(1.0, 100.0, 2).unwrap();
        assert!((edges[1] - 10.0).abs() < 1e-12);
        let stats = binned_residual_stats(&[0.4], &[2.0], &edges).unwrap();
        assert_eq!(stats[0].count, 1);
        assert_eq!(stats[0].mean, 0.4);
        assert_eq!(stats[0].sd, 0.0);
        assert_eq!(stats[1].count, 0);
        assert!(stats[1].mean.is_nan());

        let xs = [1.0, 5.0, 20.0, 100.0];
        let stats = binned_residual_stats(&[0.3; 4], &xs, &edges).unwrap();
        assert!(stats.iter().all(|b| b.mean == 0.3 && b.count == 2));
        assert!(log_spaced_edges(0.0, 1.0, 3).is_err());
        assert!(binned_residual_stats(&[1.0], &[], &edges).is_err());
    }
}
