//! Candidate term library and design-matrix construction.
//!
//! Terms are evaluated on physical values first and only then are columns
//! normalized. V_S30 always enters terms as the scaled variable
//! `v = V_S30 / v_s30_reference` (reference 1500 m/s by default).

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flatfile::GroundMotionRecord;
use crate::gmpe::{Im, PhysicalEquation, Provenance, TermCoefficient};

pub const DEFAULT_V_S30_REFERENCE: f64 = 1500.0;
pub const DEFAULT_DISTANCE_SHIFT: f64 = 10.0;

/// Covariates a term may depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Mw,
    Rjb,
    /// V_S30 divided by the library's reference velocity.
    Vs30,
    Fm,
    Z10,
}

impl Variable {
    pub const ALL: [Variable; 5] = [
        Variable::Mw,
        Variable::Rjb,
        Variable::Vs30,
        Variable::Fm,
        Variable::Z10,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Variable::Mw => "M_w",
            Variable::Rjb => "R_JB",
            Variable::Vs30 => "V_S30",
            Variable::Fm => "FM",
            Variable::Z10 => "Z_1.0",
        }
    }

    fn value(self, s: &Scenario, v_s30_reference: f64) -> f64 {
        match self {
            Variable::Mw => s.m_w,
            Variable::Rjb => s.r_jb,
            Variable::Vs30 => s.v_s30 / v_s30_reference,
            Variable::Fm => s.fm,
            Variable::Z10 => s.z_1_0,
        }
    }
}

impl FromStr for Variable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variable::ALL
            .iter()
            .copied()
            .find(|v| v.symbol() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown variable `{s}`")))
    }
}

/// Covariates at which terms are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub m_w: f64,
    pub r_jb: f64,
    /// Physical V_S30 in m/s; scaling happens inside term evaluation.
    pub v_s30: f64,
    pub fm: f64,
    pub z_1_0: f64,
}

impl Scenario {
    pub fn new(m_w: f64, r_jb: f64, v_s30: f64) -> Self {
        Scenario {
            m_w,
            r_jb,
            v_s30,
            fm: 1.0,
            z_1_0: 1.0,
        }
    }
}

impl From<&GroundMotionRecord> for Scenario {
    fn from(r: &GroundMotionRecord) -> Self {
        Scenario {
            m_w: r.m_w,
            r_jb: r.r_jb,
            v_s30: r.v_s30,
            fm: f64::from(r.fm.code()),
            z_1_0: r.z_1_0,
        }
    }
}

/// One candidate basis function.
///
/// Textual form (used in JSON and configuration): `1`, `M_w`, `ln(M_w)`,
/// `M_w^2`, `ln(R_JB+10)`, `M_w*ln(R_JB+10)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TermSpec {
    Constant,
    Linear(Variable),
    Log(Variable),
    Square(Variable),
    LogShiftedDistance { shift: f64 },
    MwTimesLogShiftedDistance { shift: f64 },
}

impl TermSpec {
    pub fn depends_on_distance(&self) -> bool {
        match self {
            TermSpec::Constant => false,
            TermSpec::Linear(v) | TermSpec::Log(v) | TermSpec::Square(v) => *v == Variable::Rjb,
            TermSpec::LogShiftedDistance { .. } | TermSpec::MwTimesLogShiftedDistance { .. } => {
                true
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            TermSpec::LogShiftedDistance { shift }
            | TermSpec::MwTimesLogShiftedDistance { shift }
                if !(shift.is_finite() && shift > 0.0) =>
            {
                Err(Error::Config(format!(
                    "distance shift must be positive, got {shift}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Ordering used when printing equations: linear, logarithmic, square,
    /// then saturation terms.
    pub(crate) fn display_rank(&self) -> (u8, u8) {
        let var_rank = |v: &Variable| Variable::ALL.iter().position(|x| x == v).unwrap_or(0) as u8;
        match self {
            TermSpec::Constant => (9, 0),
            TermSpec::Linear(v) => (0, var_rank(v)),
            TermSpec::Log(v) => (1, var_rank(v)),
            TermSpec::Square(v) => (2, var_rank(v)),
            TermSpec::LogShiftedDistance { .. } => (3, 0),
            TermSpec::MwTimesLogShiftedDistance { .. } => (4, 0),
        }
    }
}

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermSpec::Constant => write!(f, "1"),
            TermSpec::Linear(v) => write!(f, "{}", v.symbol()),
            TermSpec::Log(v) => write!(f, "ln({})", v.symbol()),
            TermSpec::Square(v) => write!(f, "{}^2", v.symbol()),
            TermSpec::LogShiftedDistance { shift } => write!(f, "ln(R_JB+{shift})"),
            TermSpec::MwTimesLogShiftedDistance { shift } => write!(f, "M_w*ln(R_JB+{shift})"),
        }
    }
}

impl FromStr for TermSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Config(format!("cannot parse term `{s}`"));
        let shifted = |inner: &str| -> Option<f64> {
            inner
                .strip_prefix("R_JB+")
                .and_then(|x| x.parse::<f64>().ok())
        };
        let term = if s == "1" {
            TermSpec::Constant
        } else if let Some(rest) = s.strip_prefix("M_w*ln(").and_then(|r| r.strip_suffix(')')) {
            TermSpec::MwTimesLogShiftedDistance {
                shift: shifted(rest).ok_or_else(bad)?,
            }
        } else if let Some(inner) = s.strip_prefix("ln(").and_then(|r| r.strip_suffix(')')) {
            match shifted(inner) {
                Some(shift) => TermSpec::LogShiftedDistance { shift },
                None => TermSpec::Log(inner.parse()?),
            }
        } else if let Some(base) = s.strip_suffix("^2") {
            TermSpec::Square(base.parse()?)
        } else {
            TermSpec::Linear(s.parse().map_err(|_| bad())?)
        };
        term.validate()?;
        Ok(term)
    }
}

impl From<TermSpec> for String {
    fn from(t: TermSpec) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for TermSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Exact value of `term` at `scenario` on the physical scale.
pub fn evaluate_term(term: &TermSpec, scenario: &Scenario, v_s30_reference: f64) -> Result<f64> {
    let log = |x: f64, what: &dyn fmt::Display| {
        if x > 0.0 && x.is_finite() {
            Ok(x.ln())
        } else {
            Err(Error::Domain(format!(
                "ln({what}) undefined for argument {x}"
            )))
        }
    };
    let value = match *term {
        TermSpec::Constant => 1.0,
        TermSpec::Linear(v) => v.value(scenario, v_s30_reference),
        TermSpec::Log(v) => log(v.value(scenario, v_s30_reference), &v.symbol())?,
        TermSpec::Square(v) => {
            let x = v.value(scenario, v_s30_reference);
            x * x
        }
        TermSpec::LogShiftedDistance { shift } => log(scenario.r_jb + shift, &"R_JB+shift")?,
        TermSpec::MwTimesLogShiftedDistance { shift } => {
            scenario.m_w * log(scenario.r_jb + shift, &"R_JB+shift")?
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!("term {term} is not finite")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermLibrary {
    terms: Vec<TermSpec>,
    v_s30_reference: f64,
}

impl TermLibrary {
    pub fn new(terms: Vec<TermSpec>, v_s30_reference: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("term library is empty".into()));
        }
        if !(v_s30_reference.is_finite() && v_s30_reference > 0.0) {
            return Err(Error::Config("v_s30_reference must be positive".into()));
        }
        let mut seen = HashSet::new();
        for t in &terms {
            t.validate()?;
            if !seen.insert(t.to_string()) {
                return Err(Error::Config(format!("duplicate term `{t}`")));
            }
        }
        Ok(TermLibrary {
            terms,
            v_s30_reference,
        })
    }

    pub fn terms(&self) -> &[TermSpec] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn v_s30_reference(&self) -> f64 {
        self.v_s30_reference
    }

    pub fn position(&self, term: &TermSpec) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn constant_index(&self) -> Option<usize> {
        self.position(&TermSpec::Constant)
    }
}

/// The 12-term library: constant, magnitude (linear, square, log), distance,
/// scaled V_S30 (linear, square, log), FM, Z_1.0 and the two near-field
/// saturation terms ln(R_JB+10) and M_w ln(R_JB+10).
pub fn default_library() -> TermLibrary {
    use Variable::*;
    let shift = DEFAULT_DISTANCE_SHIFT;
    TermLibrary::new(
        vec![
            TermSpec::Constant,
            TermSpec::Linear(Mw),
            TermSpec::Square(Mw),
            TermSpec::Log(Mw),
            TermSpec::Linear(Rjb),
            TermSpec::Linear(Vs30),
            TermSpec::Square(Vs30),
            TermSpec::Log(Vs30),
            TermSpec::Linear(Fm),
            TermSpec::Linear(Z10),
            TermSpec::LogShiftedDistance { shift },
            TermSpec::MwTimesLogShiftedDistance { shift },
        ],
        DEFAULT_V_S30_REFERENCE,
    )
    .expect("default library is well formed")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    /// Divide each column by its largest absolute value (no shift).
    #[default]
    MaxAbs,
    /// Map each column onto [0, 1].
    MinMax,
    /// Subtract the mean, divide by the population standard deviation.
    ZScore,
    None,
}

impl FromStr for NormalizationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "maxabs" => Ok(NormalizationMode::MaxAbs),
            "minmax" => Ok(NormalizationMode::MinMax),
            "zscore" => Ok(NormalizationMode::ZScore),
            "none" => Ok(NormalizationMode::None),
            _ => Err(Error::Config(format!("unknown normalization mode `{s}`"))),
        }
    }
}

/// Normalized column j is `(raw_j - shift[j]) / scale[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub mode: NormalizationMode,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NormalizationSpec {
    pub fn identity(mode: NormalizationMode, n: usize) -> Self {
        NormalizationSpec {
            mode,
            shift: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }
}

/// Evaluated, normalized library over a dataset plus the ln-intensity target.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    theta: DMatrix<f64>,
    y: DVector<f64>,
    norm: NormalizationSpec,
    library: TermLibrary,
    im: Im,
    data_hash: String,
}

impl DesignMatrix {
    /// Assembles a matrix from already normalized parts.
    pub fn from_parts(
        theta: DMatrix<f64>,
        y: DVector<f64>,
        norm: NormalizationSpec,
        library: TermLibrary,
        im: Im,
    ) -> Result<Self> {
        let n = library.len();
        if theta.ncols() != n || norm.shift.len() != n || norm.scale.len() != n {
            return Err(Error::Config(
                "design matrix columns do not match library".into(),
            ));
        }
        if theta.nrows() != y.len() || y.is_empty() {
            return Err(Error::Config(
                "design matrix rows do not match target".into(),
            ));
        }
        if theta.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("design matrix has non-finite entries".into()));
        }
        let data_hash = hash_data(&theta, &y);
        Ok(DesignMatrix {
            theta,
            y,
            norm,
            library,
            im,
            data_hash,
        })
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn norm(&self) -> &NormalizationSpec {
        &self.norm
    }

    pub fn library(&self) -> &TermLibrary {
        &self.library
    }

    pub fn im(&self) -> Im {
        self.im
    }

    pub fn n_rows(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_terms(&self) -> usize {
        self.theta.ncols()
    }

    /// SHA-256 over the bit patterns of the normalized matrix and target.
    pub fn data_hash(&self) -> &str {
        &self.data_hash
    }

    pub fn predict_normalized(&self, xi: &[f64]) -> DVector<f64> {
        &self.theta * DVector::from_column_slice(xi)
    }
}

fn hash_data(theta: &DMatrix<f64>, y: &DVector<f64>) -> String {
    let mut hasher = Sha256::new();
    hasher.update((theta.nrows() as u64).to_le_bytes());
    hasher.update((theta.ncols() as u64).to_le_bytes());
    for v in theta.iter().chain(y.iter()) {
        hasher.update(v.to_bits().to_le_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn build_design_matrix(
    records: &[GroundMotionRecord],
    library: &TermLibrary,
    im: Im,
    mode: NormalizationMode,
) -> Result<DesignMatrix> {
    if records.is_empty() {
        return Err(Error::Domain(
            "cannot build a design matrix from zero records".into(),
        ));
    }
    let (m, n) = (records.len(), library.len());
    let mut raw = DMatrix::<f64>::zeros(m, n);
    let mut y = DVector::<f64>::zeros(m);
    for (i, rec) in records.iter().enumerate() {
        let locate = |e: Error| {
            Error::Domain(format!(
                "record {i} (event {}, station {}): {e}",
                rec.event_id, rec.station_id
            ))
        };
        let target = im.of(rec);
        if !(target.is_finite() && target > 0.0) {
            return Err(locate(Error::Domain(format!(
                "{im} must be positive, got {target}"
            ))));
        }
        y[i] = target.ln();
        let scenario = Scenario::from(rec);
        for (j, term) in library.terms().iter().enumerate() {
            raw[(i, j)] =
                evaluate_term(term, &scenario, library.v_s30_reference()).map_err(locate)?;
        }
    }

    let mut norm = NormalizationSpec::identity(mode, n);
    if mode != NormalizationMode::None {
        for (j, term) in library.terms().iter().enumerate() {
            if *term == TermSpec::Constant {
                continue;
            }
            let col = raw.column(j);
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            if hi <= lo {
                return Err(Error::DegenerateColumn {
                    term: term.to_string(),
                    reason: format!("every record evaluates to {lo}"),
                });
            }
            let (shift, scale) = match mode {
                NormalizationMode::MaxAbs => (0.0, lo.abs().max(hi.abs())),
                NormalizationMode::MinMax => (lo, hi - lo),
                NormalizationMode::ZScore => {
                    let mean = col.mean();
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
                    (mean, var.sqrt())
                }
                NormalizationMode::None => unreachable!(),
            };
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::DegenerateColumn {
                    term: term.to_string(),
                    reason: format!("normalization scale {scale}"),
                });
            }
            norm.shift[j] = shift;
            norm.scale[j] = scale;
            for v in raw.column_mut(j).iter_mut() {
                *v = (*v - shift) / scale;
            }
        }
    }
    DesignMatrix::from_parts(raw, y, norm, library.clone(), im)
}

/// Maps normalized-column coefficients onto raw term values.
///
/// For each non-constant term `c_j = xi_j / s_j`; the intercept collects the
/// constant coefficient minus `sum_j xi_j a_j / s_j`. Terms with a zero
/// normalized coefficient are left out of the returned equation.
pub fn denormalize_coefficients(xi: &[f64], matrix: &DesignMatrix) -> PhysicalEquation {
    let norm = matrix.norm();
    let mut constant = 0.0;
    let mut terms = Vec::new();
    for (j, term) in matrix.library().terms().iter().enumerate() {
        if *term == TermSpec::Constant {
            constant += xi[j];
            continue;
        }
        if xi[j] == 0.0 {
            continue;
        }
        let c = xi[j] / norm.scale[j];
        constant -= c * norm.shift[j];
        terms.push(TermCoefficient {
            term: *term,
            coefficient: c,
        });
    }
    PhysicalEquation::new(
        matrix.im(),
        terms,
        constant,
        matrix.library().v_s30_reference(),
        Provenance::fitted(matrix.data_hash()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flatfile::FaultMechanism;

    fn record(m_w: f64, r_jb: f64, v_s30: f64) -> GroundMotionRecord {
        GroundMotionRecord {
            event_id: "e".into(),
            station_id: "s".into(),
            m_w,
            r_jb,
            v_s30,
            fm: FaultMechanism::StrikeSlip,
            z_1_0: 50.0,
            depth: 10.0,
            pga: 1.0,
            pgv: 1.0,
        }
    }

    #[test]
    fn default_library_shape() {
        let lib = default_library();
        assert_eq!(lib.len(), 12);
        assert_eq!(lib.terms()[0], TermSpec::Constant);
        assert!(lib
            .position(&TermSpec::LogShiftedDistance { shift: 10.0 })
            .is_some());
        assert!(lib
            .position(&TermSpec::MwTimesLogShiftedDistance { shift: 10.0 })
            .is_some());
        assert!(lib.position(&TermSpec::Square(Variable::Mw)).is_some());
        assert!(lib.position(&TermSpec::Log(Variable::Mw)).is_some());
    }

    #[test]
    fn term_values() {
        let s = Scenario::new(6.0, 0.0, 750.0);
        let v = evaluate_term(&TermSpec::LogShiftedDistance { shift: 10.0 }, &s, 1500.0).unwrap();
        assert!((v - std::f64::consts::LN_10).abs() < 1e-15);
        let v = evaluate_term(&TermSpec::Linear(Variable::Vs30), &s, 1500.0).unwrap();
        assert_eq!(v, 0.5);
        let s = Scenario::new(6.0, 10.0, 750.0);
        let v = evaluate_term(
            &TermSpec::MwTimesLogShiftedDistance { shift: 10.0 },
            &s,
            1500.0,
        )
        .unwrap();
        assert!((v - 6.0 * 20f64.ln()).abs() < 1e-14);
        assert!((v - 17.9744).abs() < 1e-4);
    }

    #[test]
    fn log_of_nonpositive_is_domain_error() {
        let s = Scenario::new(6.0, 0.0, 750.0);
        assert!(matches!(
            evaluate_term(&TermSpec::Log(Variable::Rjb), &s, 1500.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn descriptors_round_trip() {
        for t in default_library().terms() {
            let parsed: TermSpec = t.to_string().parse().unwrap();
            assert_eq!(&parsed, t);
        }
        assert_eq!(
            "ln(R_JB + 7.5)".parse::<TermSpec>().unwrap(),
            TermSpec::LogShiftedDistance { shift: 7.5 }
        );
        assert!("ln(R_JB+-1)".parse::<TermSpec>().is_err());
        assert!("foo".parse::<TermSpec>().is_err());
    }

    #[test]
    fn library_rejects_duplicates() {
        let t = vec![TermSpec::Constant, TermSpec::Constant];
        assert!(TermLibrary::new(t, 1500.0).is_err());
    }

    #[test]
    fn none_mode_is_raw() {
        let recs = [record(5.0, 10.0, 300.0), record(6.0, 40.0, 500.0)];
        let lib = default_library();
        let dm = build_design_matrix(&recs, &lib, Im::Pga, NormalizationMode::None).unwrap();
        for (i, r) in recs.iter().enumerate() {
            for (j, t) in lib.terms().iter().enumerate() {
                let raw = evaluate_term(t, &Scenario::from(r), 1500.0).unwrap();
                assert_eq!(dm.theta()[(i, j)], raw);
            }
        }
    }

    #[test]
    fn minmax_columns_span_unit_interval() {
        let recs: Vec<_> = (0..20)
            .map(|i| {
                let mut r = record(
                    3.0 + 0.2 * i as f64,
                    1.0 + 7.0 * i as f64,
                    200.0 + 31.0 * i as f64,
                );
                r.z_1_0 = 10.0 + (i * i) as f64;
                r.fm = FaultMechanism::from_code(1 + (i % 3) as u8).unwrap();
                r
            })
            .collect();
        let dm = build_design_matrix(
            &recs,
            &default_library(),
            Im::Pga,
            NormalizationMode::MinMax,
        )
        .unwrap();
        for j in 1..12 {
            let col = dm.theta().column(j);
            assert!(col.min().abs() < 1e-15, "column {j}");
            assert!((col.max() - 1.0).abs() < 1e-15, "column {j}");
        }
        assert!(dm.theta().column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn identical_records_are_degenerate() {
        let recs = [record(5.0, 10.0, 300.0), record(5.0, 10.0, 300.0)];
        for mode in [
            NormalizationMode::MaxAbs,
            NormalizationMode::MinMax,
            NormalizationMode::ZScore,
        ] {
            let err = build_design_matrix(&recs, &default_library(), Im::Pga, mode).unwrap_err();
            assert!(matches!(err, Error::DegenerateColumn { .. }), "{mode:?}");
        }
    }

    #[test]
    fn nonpositive_target_rejected() {
        let mut r = record(5.0, 10.0, 300.0);
        r.pgv = 0.0;
        let lib = TermLibrary::new(vec![TermSpec::Constant], 1500.0).unwrap();
        assert!(build_design_matrix(&[r], &lib, Im::Pgv, NormalizationMode::None).is_err());
    }

    #[test]
    fn denormalize_identity_without_normalization() {
        let recs = [record(5.0, 10.0, 300.0), record(6.0, 40.0, 500.0)];
        let lib = TermLibrary::new(
            vec![TermSpec::Constant, TermSpec::Linear(Variable::Mw)],
            1500.0,
        )
        .unwrap();
        let dm = build_design_matrix(&recs, &lib, Im::Pga, NormalizationMode::None).unwrap();
        let eq = denormalize_coefficients(&[0.7, 1.3], &dm);
        assert_eq!(eq.constant(), 0.7);
        assert_eq!(eq.coefficient(&TermSpec::Linear(Variable::Mw)), Some(1.3));
    }

    #[test]
    fn denormalize_single_shifted_column() {
        // m_w in {2, 6} gives a = 2, s = 4 under MinMax.
        let recs = [record(2.0, 10.0, 300.0), record(6.0, 40.0, 500.0)];
        let lib = TermLibrary::new(vec![TermSpec::Linear(Variable::Mw)], 1500.0).unwrap();
        let dm = build_design_matrix(&recs, &lib, Im::Pga, NormalizationMode::MinMax).unwrap();
        assert_eq!(dm.norm().shift[0], 2.0);
        assert_eq!(dm.norm().scale[0], 4.0);
        let eq = denormalize_coefficients(&[1.0], &dm);
        assert_eq!(eq.coefficient(&TermSpec::Linear(Variable::Mw)), Some(0.25));
        assert_eq!(eq.constant(), -0.5);
    }
}
