//! Flatfile ingestion and record selection.
//!
//! A flatfile is a CSV table with one row per station recording. Columns are
//! located through a [`ColumnMap`], missing-value tokens and unit factors
//! through [`IngestOptions`]. Parsing never fails on bad cell content: such
//! rows are counted in the [`IngestReport`] under a named rule and skipped.
//! Structural CSV problems (wrong column count, broken quoting) and missing
//! headers are errors.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fault mechanism code: strike-slip = 1, normal = 2, reverse = 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum FaultMechanism {
    StrikeSlip,
    Normal,
    Reverse,
}

impl FaultMechanism {
    pub fn code(self) -> u8 {
        match self {
            FaultMechanism::StrikeSlip => 1,
            FaultMechanism::Normal => 2,
            FaultMechanism::Reverse => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(FaultMechanism::StrikeSlip),
            2 => Some(FaultMechanism::Normal),
            3 => Some(FaultMechanism::Reverse),
            _ => None,
        }
    }
}

impl From<FaultMechanism> for u8 {
    fn from(fm: FaultMechanism) -> u8 {
        fm.code()
    }
}

impl TryFrom<u8> for FaultMechanism {
    type Error = String;
    fn try_from(code: u8) -> std::result::Result<Self, String> {
        FaultMechanism::from_code(code)
            .ok_or_else(|| format!("invalid fault mechanism code {code}"))
    }
}

/// One station recording of one event.
///
/// `z_1_0` and `depth` are `NaN` when the flatfile leaves them blank; every
/// other numeric field is present after parsing. PGA and PGV carry the
/// flatfile's units times the configured ingest factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundMotionRecord {
    pub event_id: String,
    pub station_id: String,
    pub m_w: f64,
    pub r_jb: f64,
    pub v_s30: f64,
    pub fm: FaultMechanism,
    pub z_1_0: f64,
    pub depth: f64,
    pub pga: f64,
    pub pgv: f64,
}

impl GroundMotionRecord {
    pub fn value(&self, field: Field) -> Option<f64> {
        match field {
            Field::MW => Some(self.m_w),
            Field::RJB => Some(self.r_jb),
            Field::VS30 => Some(self.v_s30),
            Field::FM => Some(f64::from(self.fm.code())),
            Field::Z10 => Some(self.z_1_0),
            Field::Depth => Some(self.depth),
            Field::PGA => Some(self.pga),
            Field::PGV => Some(self.pgv),
            Field::EventId | Field::StationId => None,
        }
    }
}

/// Flatfile columns known to the ingester.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    EventId,
    StationId,
    #[serde(rename = "m_w")]
    MW,
    #[serde(rename = "r_jb")]
    RJB,
    #[serde(rename = "v_s30")]
    VS30,
    #[serde(rename = "fm")]
    FM,
    #[serde(rename = "z_1_0")]
    Z10,
    Depth,
    #[serde(rename = "pga")]
    PGA,
    #[serde(rename = "pgv")]
    PGV,
}

impl Field {
    pub const ALL: [Field; 10] = [
        Field::EventId,
        Field::StationId,
        Field::MW,
        Field::RJB,
        Field::VS30,
        Field::FM,
        Field::Z10,
        Field::Depth,
        Field::PGA,
        Field::PGV,
    ];

    /// Numeric covariates reported in observed ranges.
    pub const NUMERIC: [Field; 8] = [
        Field::MW,
        Field::RJB,
        Field::VS30,
        Field::FM,
        Field::Z10,
        Field::Depth,
        Field::PGA,
        Field::PGV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::EventId => "event_id",
            Field::StationId => "station_id",
            Field::MW => "m_w",
            Field::RJB => "r_jb",
            Field::VS30 => "v_s30",
            Field::FM => "fm",
            Field::Z10 => "z_1_0",
            Field::Depth => "depth",
            Field::PGA => "pga",
            Field::PGV => "pgv",
        }
    }

    /// Fields that may be blank at parse time.
    fn optional_at_parse(self) -> bool {
        matches!(self, Field::Z10 | Field::Depth)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown field `{s}`")))
    }
}

/// Field -> CSV header mapping. The default maps each field to its own name,
/// which is the schema written by [`write_flatfile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    headers: BTreeMap<Field, String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            headers: Field::ALL
                .iter()
                .map(|f| (*f, f.name().to_string()))
                .collect(),
        }
    }
}

impl ColumnMap {
    pub fn set(&mut self, field: Field, header: impl Into<String>) -> &mut Self {
        self.headers.insert(field, header.into());
        self
    }

    pub fn header(&self, field: Field) -> &str {
        self.headers
            .get(&field)
            .map(String::as_str)
            .unwrap_or_else(|| field.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Cell contents treated as missing. Numeric tokens also match cells
    /// with the same numeric value (`-999` matches `-999.0`).
    pub missing_tokens: Vec<String>,
    /// Multiplicative unit factor applied to PGA at ingest.
    pub pga_factor: f64,
    /// Multiplicative unit factor applied to PGV at ingest.
    pub pgv_factor: f64,
    /// Raw FM cell text -> mechanism code. Empty means the cell already
    /// holds 1, 2 or 3.
    pub fm_codes: BTreeMap<String, u8>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            missing_tokens: vec!["".into(), "NaN".into(), "-999".into()],
            pga_factor: 1.0,
            pgv_factor: 1.0,
            fm_codes: BTreeMap::new(),
        }
    }
}

impl IngestOptions {
    fn is_missing(&self, cell: &str) -> bool {
        let cell = cell.trim();
        self.missing_tokens.iter().any(|tok| {
            let tok = tok.trim();
            if tok.eq_ignore_ascii_case(cell) {
                return true;
            }
            match (tok.parse::<f64>(), cell.parse::<f64>()) {
                (Ok(a), Ok(b)) => a == b || (a.is_nan() && b.is_nan()),
                _ => false,
            }
        })
    }

    fn fault_mechanism(&self, cell: &str) -> Option<FaultMechanism> {
        let cell = cell.trim();
        if !self.fm_codes.is_empty() {
            return self
                .fm_codes
                .get(cell)
                .copied()
                .and_then(FaultMechanism::from_code);
        }
        let value: f64 = cell.parse().ok()?;
        if value.fract() != 0.0 || !(1.0..=3.0).contains(&value) {
            return None;
        }
        FaultMechanism::from_code(value as u8)
    }
}

/// Closed interval; a missing bound is unbounded on that side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Interval {
    pub fn unbounded() -> Self {
        Interval::default()
    }

    pub fn closed(min: f64, max: f64) -> Self {
        Interval {
            min: Some(min),
            max: Some(max),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        !x.is_nan() && self.min.is_none_or(|m| x >= m) && self.max.is_none_or(|m| x <= m)
    }

    fn is_valid(&self) -> bool {
        let ordered = match (self.min, self.max) {
            (Some(a), Some(b)) => a <= b,
            _ => true,
        };
        ordered && self.min.is_none_or(|v| !v.is_nan()) && self.max.is_none_or(|v| !v.is_nan())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterCriteria {
    pub m_w_range: Interval,
    pub r_jb_range: Interval,
    pub v_s30_range: Interval,
    pub depth_range: Interval,
    pub min_records_per_event: usize,
    pub require_fields: BTreeSet<Field>,
}

impl Default for FilterCriteria {
    /// Shallow-crustal selection: source depth in [1, 20] km, at least five
    /// records per event, and M_w, FM, R_JB, V_S30, Z_1.0 all present.
    fn default() -> Self {
        FilterCriteria {
            m_w_range: Interval::unbounded(),
            r_jb_range: Interval::unbounded(),
            v_s30_range: Interval::unbounded(),
            depth_range: Interval::closed(1.0, 20.0),
            min_records_per_event: 5,
            require_fields: [Field::MW, Field::FM, Field::RJB, Field::VS30, Field::Z10]
                .into_iter()
                .collect(),
        }
    }
}

impl FilterCriteria {
    /// Criteria that keep every parsed record with positive intensities.
    pub fn permissive() -> Self {
        FilterCriteria {
            depth_range: Interval::unbounded(),
            min_records_per_event: 1,
            require_fields: BTreeSet::new(),
            ..FilterCriteria::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [
            ("m_w_range", &self.m_w_range),
            ("r_jb_range", &self.r_jb_range),
            ("v_s30_range", &self.v_s30_range),
            ("depth_range", &self.depth_range),
        ] {
            if !iv.is_valid() {
                return Err(Error::Config(format!(
                    "{name}: lower bound exceeds upper bound"
                )));
            }
        }
        if self.min_records_per_event == 0 {
            return Err(Error::Config(
                "min_records_per_event must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped_by_rule: BTreeMap<String, usize>,
    pub n_records: usize,
    pub n_events: usize,
    pub n_stations: usize,
    pub ranges: BTreeMap<String, ObservedRange>,
}

impl IngestReport {
    pub fn rows_dropped(&self) -> usize {
        self.rows_dropped_by_rule.values().sum()
    }

    fn drop_row(&mut self, rule: String) {
        *self.rows_dropped_by_rule.entry(rule).or_insert(0) += 1;
    }

    /// Chains a parse report with the report of a later filter pass, so the
    /// result accounts for every row of the original source.
    pub fn then(&self, later: &IngestReport) -> IngestReport {
        let mut merged = later.clone();
        merged.rows_read = self.rows_read;
        for (rule, n) in &self.rows_dropped_by_rule {
            *merged.rows_dropped_by_rule.entry(rule.clone()).or_insert(0) += n;
        }
        merged
    }
}

/// Reads a flatfile. Lines starting with `#` are comments.
pub fn parse_flatfile<R: Read>(
    source: R,
    column_map: &ColumnMap,
    options: &IngestOptions,
) -> Result<(Vec<GroundMotionRecord>, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok((Vec::new(), summarize(&[])));
    }

    let mut index = HashMap::new();
    for field in Field::ALL {
        let name = column_map.header(field);
        let pos = headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Config(format!(
                "column `{name}` for field {field} not found in header"
            ))
        })?;
        index.insert(field, pos);
    }

    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        report.rows_read += 1;
        match parse_row(&row, &index, options) {
            Ok(rec) => records.push(rec),
            Err(rule) => report.drop_row(rule),
        }
    }

    let summary = summarize(&records);
    report.n_records = summary.n_records;
    report.n_events = summary.n_events;
    report.n_stations = summary.n_stations;
    report.ranges = summary.ranges;
    Ok((records, report))
}

fn csv_error(err: csv::Error) -> Error {
    let row = err.position().map(|p| p.line()).unwrap_or(0);
    let message = match err.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} fields, found {len}"),
        _ => err.to_string(),
    };
    Error::Parse { row, message }
}

fn parse_row(
    row: &csv::StringRecord,
    index: &HashMap<Field, usize>,
    options: &IngestOptions,
) -> std::result::Result<GroundMotionRecord, String> {
    let cell = |f: Field| row.get(index[&f]).unwrap_or("");

    let text = |f: Field| -> std::result::Result<String, String> {
        let c = cell(f);
        if options.is_missing(c) {
            Err(format!("missing:{f}"))
        } else {
            Ok(c.to_string())
        }
    };
    let number = |f: Field| -> std::result::Result<f64, String> {
        let c = cell(f);
        if options.is_missing(c) {
            if f.optional_at_parse() {
                return Ok(f64::NAN);
            }
            return Err(format!("missing:{f}"));
        }
        match c.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("unparseable:{f}")),
        }
    };

    let event_id = text(Field::EventId)?;
    let station_id = text(Field::StationId)?;
    let m_w = number(Field::MW)?;
    let r_jb = number(Field::RJB)?;
    let v_s30 = number(Field::VS30)?;
    let fm_cell = cell(Field::FM);
    if options.is_missing(fm_cell) {
        return Err("missing:fm".into());
    }
    let fm = options
        .fault_mechanism(fm_cell)
        .ok_or_else(|| "invalid:fm".to_string())?;
    let z_1_0 = number(Field::Z10)?;
    let depth = number(Field::Depth)?;
    let pga = number(Field::PGA)? * options.pga_factor;
    let pgv = number(Field::PGV)? * options.pgv_factor;

    Ok(GroundMotionRecord {
        event_id,
        station_id,
        m_w,
        r_jb,
        v_s30,
        fm,
        z_1_0,
        depth,
        pga,
        pgv,
    })
}

fn record_rule(rec: &GroundMotionRecord, criteria: &FilterCriteria) -> Option<String> {
    for field in &criteria.require_fields {
        if rec.value(*field).is_some_and(f64::is_nan) {
            return Some(format!("missing:{field}"));
        }
    }
    for field in [Field::MW, Field::RJB, Field::VS30, Field::PGA, Field::PGV] {
        let v = rec.value(field).unwrap_or(f64::NAN);
        if !(v.is_finite() && v > 0.0) {
            return Some(format!("nonpositive:{field}"));
        }
    }
    let ranges = [
        (Field::MW, &criteria.m_w_range),
        (Field::RJB, &criteria.r_jb_range),
        (Field::VS30, &criteria.v_s30_range),
        (Field::Depth, &criteria.depth_range),
    ];
    for (field, iv) in ranges {
        if *iv != Interval::unbounded() && !iv.contains(rec.value(field).unwrap_or(f64::NAN)) {
            return Some(format!("range:{field}"));
        }
    }
    None
}

/// Applies per-record rules first, then drops events left with fewer than
/// `min_records_per_event` records. Input order is preserved.
pub fn filter_records(
    records: &[GroundMotionRecord],
    criteria: &FilterCriteria,
) -> (Vec<GroundMotionRecord>, IngestReport) {
    let mut report = IngestReport {
        rows_read: records.len(),
        ..IngestReport::default()
    };

    let mut kept: Vec<&GroundMotionRecord> = Vec::with_capacity(records.len());
    for rec in records {
        match record_rule(rec, criteria) {
            Some(rule) => report.drop_row(rule),
            None => kept.push(rec),
        }
    }

    let mut per_event: HashMap<&str, usize> = HashMap::new();
    for rec in &kept {
        *per_event.entry(rec.event_id.as_str()).or_insert(0) += 1;
    }
    let mut out = Vec::with_capacity(kept.len());
    for rec in kept {
        if per_event[rec.event_id.as_str()] < criteria.min_records_per_event {
            report.drop_row("min_records_per_event".into());
        } else {
            out.push(rec.clone());
        }
    }

    let summary = summarize(&out);
    report.n_records = summary.n_records;
    report.n_events = summary.n_events;
    report.n_stations = summary.n_stations;
    report.ranges = summary.ranges;
    (out, report)
}

pub fn summarize(records: &[GroundMotionRecord]) -> IngestReport {
    let events: HashSet<&str> = records.iter().map(|r| r.event_id.as_str()).collect();
    let stations: HashSet<&str> = records.iter().map(|r| r.station_id.as_str()).collect();
    let mut ranges = BTreeMap::new();
    for field in Field::NUMERIC {
        let mut range: Option<ObservedRange> = None;
        for v in records
            .iter()
            .filter_map(|r| r.value(field))
            .filter(|v| !v.is_nan())
        {
            let r = range.get_or_insert(ObservedRange { min: v, max: v });
            r.min = r.min.min(v);
            r.max = r.max.max(v);
        }
        if let Some(r) = range {
            ranges.insert(field.name().to_string(), r);
        }
    }
    IngestReport {
        rows_read: records.len(),
        rows_dropped_by_rule: BTreeMap::new(),
        n_records: records.len(),
        n_events: events.len(),
        n_stations: stations.len(),
        ranges,
    }
}

/// Writes records in the default column schema. Missing values are written
/// as empty cells; floats use the shortest representation that parses back
/// to the same value.
pub fn write_flatfile<W: Write>(records: &[GroundMotionRecord], sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer
        .write_record(Field::ALL.iter().map(|f| f.name()))
        .map_err(csv_error)?;
    let num = |v: f64| {
        if v.is_nan() {
            String::new()
        } else {
            format!("{v}")
        }
    };
    for r in records {
        writer
            .write_record([
                r.event_id.clone(),
                r.station_id.clone(),
                num(r.m_w),
                num(r.r_jb),
                num(r.v_s30),
                r.fm.code().to_string(),
                num(r.z_1_0),
                num(r.depth),
                num(r.pga),
                num(r.pgv),
            ])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}
