//! Prediction equations in physical variables.
//!
//! Every V_S30 symbol in an equation stands for `V_S30 / v_s30_reference`
//! (1500 m/s unless stated otherwise). The published PGV equation carries
//! `-7.491 V_S30 + 4.094 V_S30^2`, which only gives plausible amplitudes on
//! that scaled variable. Predictions are natural-log intensities.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatfile::GroundMotionRecord;
use crate::library::{evaluate_term, Scenario, TermSpec, Variable, DEFAULT_V_S30_REFERENCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Im {
    Pga,
    Pgv,
}

impl Im {
    pub fn of(self, record: &GroundMotionRecord) -> f64 {
        match self {
            Im::Pga => record.pga,
            Im::Pgv => record.pgv,
        }
    }

    pub fn other(self) -> Im {
        match self {
            Im::Pga => Im::Pgv,
            Im::Pgv => Im::Pga,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Im::Pga => "pga",
            Im::Pgv => "pgv",
        }
    }
}

impl fmt::Display for Im {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Im::Pga => "PGA",
            Im::Pgv => "PGV",
        })
    }
}

impl std::str::FromStr for Im {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pga" => Ok(Im::Pga),
            "pgv" => Ok(Im::Pgv),
            _ => Err(Error::Config(format!("unknown intensity measure `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Fitted,
    Builtin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_hash: Option<String>,
}

impl Provenance {
    pub fn builtin() -> Self {
        Provenance {
            source: Source::Builtin,
            lambda: None,
            delta: None,
            data_hash: None,
        }
    }

    pub fn fitted(data_hash: &str) -> Self {
        Provenance {
            source: Source::Fitted,
            lambda: None,
            delta: None,
            data_hash: Some(data_hash.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermCoefficient {
    pub term: TermSpec,
    pub coefficient: f64,
}

/// `ln Y = constant + sum_j coefficient_j * term_j(inputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "EquationWire", try_from = "EquationWire")]
pub struct PhysicalEquation {
    im: Im,
    terms: Vec<TermCoefficient>,
    constant: f64,
    v_s30_reference: f64,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct EquationWire {
    im: Im,
    v_s30_reference: f64,
    constant: f64,
    coefficients: IndexMap<String, f64>,
    provenance: Provenance,
}

impl From<PhysicalEquation> for EquationWire {
    fn from(eq: PhysicalEquation) -> Self {
        EquationWire {
            im: eq.im,
            v_s30_reference: eq.v_s30_reference,
            constant: eq.constant,
            coefficients: eq
                .terms
                .iter()
                .map(|t| (t.term.to_string(), t.coefficient))
                .collect(),
            provenance: eq.provenance,
        }
    }
}

impl TryFrom<EquationWire> for PhysicalEquation {
    type Error = Error;
    fn try_from(w: EquationWire) -> Result<Self> {
        let mut terms = Vec::with_capacity(w.coefficients.len());
        for (descriptor, coefficient) in w.coefficients {
            let term: TermSpec = descriptor.parse()?;
            if term == TermSpec::Constant {
                return Err(Error::Schema(
                    "use the `constant` field for the intercept".into(),
                ));
            }
            terms.push(TermCoefficient { term, coefficient });
        }
        if !(w.v_s30_reference > 0.0) {
            return Err(Error::Schema("v_s30_reference must be positive".into()));
        }
        Ok(PhysicalEquation::new(
            w.im,
            terms,
            w.constant,
            w.v_s30_reference,
            w.provenance,
        ))
    }
}

impl PhysicalEquation {
    pub fn new(
        im: Im,
        terms: Vec<TermCoefficient>,
        constant: f64,
        v_s30_reference: f64,
        provenance: Provenance,
    ) -> Self {
        PhysicalEquation {
            im,
            terms,
            constant,
            v_s30_reference,
            provenance,
        }
    }

    pub fn im(&self) -> Im {
        self.im
    }

    pub fn terms(&self) -> &[TermCoefficient] {
        &self.terms
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn v_s30_reference(&self) -> f64 {
        self.v_s30_reference
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn coefficient(&self, term: &TermSpec) -> Option<f64> {
        self.terms
            .iter()
            .find(|t| t.term == *term)
            .map(|t| t.coefficient)
    }

    /// Number of terms with a nonzero coefficient, the intercept included
    /// when it is nonzero.
    pub fn n_active(&self) -> usize {
        self.terms.iter().filter(|t| t.coefficient != 0.0).count()
            + usize::from(self.constant != 0.0)
    }

    /// Prediction without domain checks.
    fn evaluate(&self, s: &Scenario) -> Result<f64> {
        let mut sum = self.constant;
        for t in &self.terms {
            sum += t.coefficient * evaluate_term(&t.term, s, self.v_s30_reference)?;
        }
        Ok(sum)
    }

    /// Human-readable form, e.g. `ln(PGA) = 16.101 M_w - 0.005 R_JB ...`.
    pub fn to_text(&self, decimals: usize) -> String {
        let mut ordered: Vec<&TermCoefficient> = self.terms.iter().collect();
        ordered.sort_by_key(|t| t.term.display_rank());
        let mut out = format!("ln({}) =", self.im);
        let mut first = true;
        let mut push = |c: f64, name: Option<String>| {
            let sign = if c < 0.0 { "-" } else { "+" };
            let body = match &name {
                Some(n) => format!("{:.*} {}", decimals, c.abs(), n.replace('*', " ")),
                None => format!("{:.*}", decimals, c.abs()),
            };
            if first {
                out.push_str(&format!(" {}{}", if c < 0.0 { "-" } else { "" }, body));
                first = false;
            } else {
                out.push_str(&format!(" {sign} {body}"));
            }
        };
        for t in ordered {
            push(t.coefficient, Some(t.term.to_string()));
        }
        if self.constant != 0.0 || self.terms.is_empty() {
            push(self.constant, None);
        }
        out
    }
}

impl fmt::Display for PhysicalEquation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text(3))
    }
}

fn builtin(im: Im, coefficients: &[(TermSpec, f64)]) -> PhysicalEquation {
    PhysicalEquation::new(
        im,
        coefficients
            .iter()
            .map(|&(term, coefficient)| TermCoefficient { term, coefficient })
            .collect(),
        0.0,
        DEFAULT_V_S30_REFERENCE,
        Provenance::builtin(),
    )
}

/// Published sparse equations for ln(PGA) (7 terms) and ln(PGV) (9 terms).
pub fn builtin_models() -> (PhysicalEquation, PhysicalEquation) {
    use TermSpec::*;
    use Variable::*;
    let ln_r = LogShiftedDistance { shift: 10.0 };
    let m_ln_r = MwTimesLogShiftedDistance { shift: 10.0 };
    let pga = builtin(
        Im::Pga,
        &[
            (Linear(Mw), 16.101),
            (Linear(Rjb), -0.005),
            (Log(Mw), -31.611),
            (Log(Vs30), -0.543),
            (Square(Mw), -0.871),
            (ln_r, -2.335),
            (m_ln_r, 0.185),
        ],
    );
    let pgv = builtin(
        Im::Pgv,
        &[
            (Linear(Mw), 8.986),
            (Linear(Rjb), 0.002),
            (Linear(Vs30), -7.491),
            (Log(Mw), -14.612),
            (Log(Vs30), 0.618),
            (Square(Mw), -0.507),
            (Square(Vs30), 4.094),
            (ln_r, -2.914),
            (m_ln_r, 0.245),
        ],
    );
    (pga, pgv)
}

pub fn builtin_model(im: Im) -> PhysicalEquation {
    let (pga, pgv) = builtin_models();
    match im {
        Im::Pga => pga,
        Im::Pgv => pgv,
    }
}

/// ln-intensity at a scenario. Requires M_w > 0, R_JB >= 0, V_S30 > 0.
pub fn predict(eq: &PhysicalEquation, scenario: &Scenario) -> Result<f64> {
    let s = scenario;
    if !(s.m_w.is_finite() && s.m_w > 0.0) {
        return Err(Error::Domain(format!(
            "M_w must be positive, got {}",
            s.m_w
        )));
    }
    if !(s.r_jb.is_finite() && s.r_jb >= 0.0) {
        return Err(Error::Domain(format!(
            "R_JB must be non-negative, got {}",
            s.r_jb
        )));
    }
    if !(s.v_s30.is_finite() && s.v_s30 > 0.0) {
        return Err(Error::Domain(format!(
            "V_S30 must be positive, got {}",
            s.v_s30
        )));
    }
    eq.evaluate(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub m_w: Vec<f64>,
    pub v_s30: Vec<f64>,
    pub r_jb: Vec<f64>,
    pub fm: f64,
    pub z_1_0: f64,
}

impl ScenarioGrid {
    pub fn new(m_w: Vec<f64>, v_s30: Vec<f64>, r_jb: Vec<f64>) -> Result<Self> {
        let grid = ScenarioGrid {
            m_w,
            v_s30,
            r_jb,
            fm: 1.0,
            z_1_0: 1.0,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Magnitudes 4-7 at V_S30 = 200, 560, 760 m/s over 1-400 km.
    pub fn attenuation_default() -> Self {
        ScenarioGrid::new(
            vec![4.0, 5.0, 6.0, 7.0],
            vec![200.0, 560.0, 760.0],
            log_spaced(1.0, 400.0, 60),
        )
        .expect("default grid is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_w.is_empty() || self.v_s30.is_empty() || self.r_jb.is_empty() {
            return Err(Error::Config("scenario grid axes must be non-empty".into()));
        }
        if self.r_jb.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Config(
                "scenario grid distances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `n` points spaced evenly in log between `lo` and `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub im: Im,
    pub m_w: f64,
    pub v_s30: f64,
    pub r_jb: f64,
    pub ln_y: f64,
    pub y: f64,
}

/// Rows ordered by magnitude, then V_S30, then distance.
pub fn attenuation_curves(eq: &PhysicalEquation, grid: &ScenarioGrid) -> Result<Vec<CurveRow>> {
    grid.validate()?;
    let mut rows = Vec::with_capacity(grid.m_w.len() * grid.v_s30.len() * grid.r_jb.len());
    for &m_w in &grid.m_w {
        for &v_s30 in &grid.v_s30 {
            for &r_jb in &grid.r_jb {
                let s = Scenario {
                    m_w,
                    r_jb,
                    v_s30,
                    fm: grid.fm,
                    z_1_0: grid.z_1_0,
                };
                let ln_y = predict(eq, &s).map_err(|e| {
                    Error::Domain(format!("at M_w={m_w}, V_S30={v_s30}, R_JB={r_jb}: {e}"))
                })?;
                rows.push(CurveRow {
                    im: eq.im(),
                    m_w,
                    v_s30,
                    r_jb,
                    ln_y,
                    y: ln_y.exp(),
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeMethod {
    /// Analytic derivative when available, otherwise finite differences.
    Auto,
    Analytic,
    FiniteDifference,
}

pub const NEAR_FIELD_MAX_KM: f64 = 5.0;
const SLOPE_SAMPLES: usize = 5001;
const FD_STEP_KM: f64 = 1e-4;

/// Distance terms with a closed-form derivative.
struct DistanceSlope {
    linear: f64,
    /// (coefficient, shift) of ln(R_JB + shift)
    log_shifted: Vec<(f64, f64)>,
    /// (coefficient, shift) of M_w ln(R_JB + shift)
    mw_log_shifted: Vec<(f64, f64)>,
}

impl DistanceSlope {
    /// `None` when another distance-dependent term is present.
    fn of(eq: &PhysicalEquation) -> Option<Self> {
        let mut out = DistanceSlope {
            linear: 0.0,
            log_shifted: Vec::new(),
            mw_log_shifted: Vec::new(),
        };
        for t in eq.terms() {
            match t.term {
                TermSpec::Linear(Variable::Rjb) => out.linear += t.coefficient,
                TermSpec::LogShiftedDistance { shift } => {
                    out.log_shifted.push((t.coefficient, shift))
                }
                TermSpec::MwTimesLogShiftedDistance { shift } => {
                    out.mw_log_shifted.push((t.coefficient, shift))
                }
                ref other if other.depends_on_distance() => return None,
                _ => {}
            }
        }
        Some(out)
    }

    fn at(&self, m_w: f64, r: f64) -> f64 {
        let a: f64 = self.log_shifted.iter().map(|&(c, s)| c / (r + s)).sum();
        let b: f64 = self
            .mw_log_shifted
            .iter()
            .map(|&(c, s)| c * m_w / (r + s))
            .sum();
        self.linear + a + b
    }
}

/// Maximum of |d lnY / dR_JB| over R_JB in [0, 5] km.
pub fn near_field_slope(eq: &PhysicalEquation, m_w: f64, v_s30: f64) -> Result<f64> {
    near_field_slope_with(eq, m_w, v_s30, SlopeMethod::Auto)
}

pub fn near_field_slope_with(
    eq: &PhysicalEquation,
    m_w: f64,
    v_s30: f64,
    method: SlopeMethod,
) -> Result<f64> {
    let analytic = DistanceSlope::of(eq);
    let use_analytic = match method {
        SlopeMethod::Auto => analytic.is_some(),
        SlopeMethod::Analytic => {
            if analytic.is_none() {
                return Err(Error::Domain(
                    "equation has distance terms without an analytic derivative".into(),
                ));
            }
            true
        }
        SlopeMethod::FiniteDifference => false,
    };
    let at = |r: f64| Scenario {
        m_w,
        r_jb: r,
        v_s30,
        fm: 1.0,
        z_1_0: 1.0,
    };
    let mut max_slope: f64 = 0.0;
    for k in 0..SLOPE_SAMPLES {
        let r = NEAR_FIELD_MAX_KM * k as f64 / (SLOPE_SAMPLES - 1) as f64;
        let slope = if use_analytic {
            analytic.as_ref().expect("checked above").at(m_w, r)
        } else if r >= FD_STEP_KM {
            let h = FD_STEP_KM;
            (predict(eq, &at(r + h))? - predict(eq, &at(r - h))?) / (2.0 * h)
        } else {
            // second-order one-sided difference at the R_JB = 0 edge
            let h = FD_STEP_KM;
            (-3.0 * predict(eq, &at(r))? + 4.0 * predict(eq, &at(r + h))?
                - predict(eq, &at(r + 2.0 * h))?)
                / (2.0 * h)
        };
        max_slope = max_slope.max(slope.abs());
    }
    Ok(max_slope)
}

/// Upper bound |c_R| + (|c_ln| + |c_Mln| M_w) / shift on the distance slope
/// of an equation whose distance dependence is limited to R_JB,
/// ln(R_JB+shift) and M_w ln(R_JB+shift). `None` for other equations.
pub fn saturation_slope_bound(eq: &PhysicalEquation, m_w: f64) -> Option<f64> {
    let mut bound = 0.0;
    for t in eq.terms() {
        bound += match t.term {
            TermSpec::Linear(Variable::Rjb) => t.coefficient.abs(),
            TermSpec::LogShiftedDistance { shift } => t.coefficient.abs() / shift,
            TermSpec::MwTimesLogShiftedDistance { shift } => {
                t.coefficient.abs() * m_w.abs() / shift
            }
            ref other if other.depends_on_distance() => return None,
            _ => 0.0,
        };
    }
    Some(bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_coefficients() {
        let (pga, pgv) = builtin_models();
        assert_eq!(pga.terms().len(), 7);
        assert_eq!(pgv.terms().len(), 9);
        assert_eq!(
            pga.coefficient(&TermSpec::LogShiftedDistance { shift: 10.0 }),
            Some(-2.335)
        );
        assert_eq!(
            pgv.coefficient(&TermSpec::Square(Variable::Vs30)),
            Some(4.094)
        );
        assert_eq!(pga.coefficient(&TermSpec::Linear(Variable::Fm)), None);
        assert_eq!(pga.coefficient(&TermSpec::Linear(Variable::Z10)), None);
        assert_eq!(pga.constant(), 0.0);
    }

    #[test]
    fn constant_only_equation() {
        let eq = PhysicalEquation::new(Im::Pga, vec![], 1.0, 1500.0, Provenance::builtin());
        for s in [
            Scenario::new(4.0, 0.0, 200.0),
            Scenario::new(7.5, 300.0, 1400.0),
        ] {
            assert_eq!(predict(&eq, &s).unwrap(), 1.0);
        }
    }

    #[test]
    fn out_of_domain_inputs() {
        let (pga, _) = builtin_models();
        assert!(predict(&pga, &Scenario::new(6.0, -1.0, 760.0)).is_err());
        assert!(predict(&pga, &Scenario::new(0.0, 1.0, 760.0)).is_err());
        assert!(predict(&pga, &Scenario::new(6.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn json_round_trip_keeps_order() {
        let (_, pgv) = builtin_models();
        let text = serde_json::to_string(&pgv).unwrap();
        let back: PhysicalEquation = serde_json::from_str(&text).unwrap();
        assert_eq!(back, pgv);
        let m = text.find("\"M_w\"").unwrap();
        let r = text.find("\"R_JB\"").unwrap();
        assert!(m < r);
    }

    #[test]
    fn text_form() {
        let (pga, _) = builtin_models();
        let text = pga.to_text(3);
        assert!(
            text.starts_with("ln(PGA) = 16.101 M_w - 0.005 R_JB - 31.611 ln(M_w)"),
            "{text}"
        );
        assert!(text.ends_with("+ 0.185 M_w ln(R_JB+10)"), "{text}");
    }

    #[test]
    fn curve_grid_ordering_and_size() {
        let (pga, _) = builtin_models();
        let grid =
            ScenarioGrid::new(vec![5.0, 6.0], vec![300.0, 760.0], vec![1.0, 10.0, 100.0]).unwrap();
        let rows = attenuation_curves(&pga, &grid).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(
            (rows[0].m_w, rows[0].v_s30, rows[0].r_jb),
            (5.0, 300.0, 1.0)
        );
        assert_eq!(
            (rows[1].m_w, rows[1].v_s30, rows[1].r_jb),
            (5.0, 300.0, 10.0)
        );
        assert_eq!(
            (rows[3].m_w, rows[3].v_s30, rows[3].r_jb),
            (5.0, 760.0, 1.0)
        );
        assert_eq!(rows[6].m_w, 6.0);

        let single = ScenarioGrid::new(vec![6.0], vec![760.0], vec![10.0]).unwrap();
        let rows = attenuation_curves(&pga, &single).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(
            rows[0].ln_y,
            predict(&pga, &Scenario::new(6.0, 10.0, 760.0)).unwrap()
        );
    }

    #[test]
    fn invalid_grid() {
        assert!(ScenarioGrid::new(vec![], vec![760.0], vec![1.0]).is_err());
        assert!(ScenarioGrid::new(vec![6.0], vec![760.0], vec![0.0]).is_err());
    }

    #[test]
    fn near_field_slope_of_pga_builtin() {
        let (pga, _) = builtin_models();
        // |-0.005 - (2.335 - 0.185*7)/10| at R_JB = 0
        let slope = near_field_slope(&pga, 7.0, 760.0).unwrap();
        assert!((slope - 0.109).abs() < 1e-12, "{slope}");
        let fd = near_field_slope_with(&pga, 7.0, 760.0, SlopeMethod::FiniteDifference).unwrap();
        assert!((fd - slope).abs() < 1e-6, "{fd} vs {slope}");
    }

    #[test]
    fn distance_free_equation_has_zero_slope() {
        let eq = PhysicalEquation::new(
            Im::Pga,
            vec![TermCoefficient {
                term: TermSpec::Linear(Variable::Mw),
                coefficient: 2.0,
            }],
            1.0,
            1500.0,
            Provenance::builtin(),
        );
        assert_eq!(near_field_slope(&eq, 6.0, 760.0).unwrap(), 0.0);
    }

    #[test]
    fn log_distance_term_falls_back_to_finite_differences() {
        let eq = PhysicalEquation::new(
            Im::Pga,
            vec![TermCoefficient {
                term: TermSpec::Square(Variable::Rjb),
                coefficient: -0.01,
            }],
            0.0,
            1500.0,
            Provenance::builtin(),
        );
        assert!(saturation_slope_bound(&eq, 6.0).is_none());
        assert!(near_field_slope_with(&eq, 6.0, 760.0, SlopeMethod::Analytic).is_err());
        // d/dR (-0.01 R^2) = -0.02 R, largest at R = 5
        let slope = near_field_slope(&eq, 6.0, 760.0).unwrap();
        assert!((slope - 0.1).abs() < 1e-8, "{slope}");
    }

    #[test]
    fn builtin_slopes_within_saturation_bound() {
        let (pga, pgv) = builtin_models();
        for eq in [&pga, &pgv] {
            for m in [4.0, 5.0, 6.0, 7.0, 8.0] {
                let slope = near_field_slope(eq, m, 760.0).unwrap();
                let bound = saturation_slope_bound(eq, m).unwrap();
                assert!(
                    slope.is_finite() && slope <= bound + 1e-15,
                    "{slope} > {bound}"
                );
            }
        }
    }

    #[test]
    fn pga_builtin_decreases_with_distance() {
        let (pga, _) = builtin_models();
        let r = log_spaced(10.0, 400.0, 200);
        for m in [4.0, 5.0, 6.0, 7.0] {
            let ys: Vec<f64> = r
                .iter()
                .map(|&r| predict(&pga, &Scenario::new(m, r, 760.0)).unwrap())
                .collect();
            assert!(ys.windows(2).all(|w| w[1] < w[0]), "M_w = {m}");
        }
    }
}
