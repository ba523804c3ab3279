//! TOML run configuration. Every section and key is optional.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gmdisco::flatfile::{ColumnMap, Field, FilterCriteria, IngestOptions};
use gmdisco::gmpe::{log_spaced, Im};
use gmdisco::library::{default_library, NormalizationMode, TermLibrary, TermSpec};
use gmdisco::stridge::{KneeRule, SolverConfig};
use gmdisco::synth::CovariateRanges;
use gmdisco::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub flatfile: FlatfileSection,
    pub filter: FilterCriteria,
    pub data: DataSection,
    pub library: LibrarySection,
    pub solver: SolverSection,
    pub residuals: ResidualsSection,
    pub curves: CurvesSection,
    pub extrapolate: ExtrapolateSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Output directory. Left out of the config hash so runs into different
    /// directories stay comparable.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub im: Im,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            out: PathBuf::from("out"),
            im: Im::Pga,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatfileSection {
    /// Raw flatfile read by `ingest`.
    pub path: Option<PathBuf>,
    /// Field name -> CSV header, for headers that differ from the field name.
    pub columns: BTreeMap<Field, String>,
    pub missing_tokens: Vec<String>,
    pub pga_factor: f64,
    pub pgv_factor: f64,
    pub fm_codes: BTreeMap<String, u8>,
}

impl Default for FlatfileSection {
    fn default() -> Self {
        let opts = IngestOptions::default();
        FlatfileSection {
            path: None,
            columns: BTreeMap::new(),
            missing_tokens: opts.missing_tokens,
            pga_factor: opts.pga_factor,
            pgv_factor: opts.pgv_factor,
            fm_codes: opts.fm_codes,
        }
    }
}

impl FlatfileSection {
    pub fn column_map(&self) -> ColumnMap {
        let mut map = ColumnMap::default();
        for (field, header) in &self.columns {
            map.set(*field, header.clone());
        }
        map
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            missing_tokens: self.missing_tokens.clone(),
            pga_factor: self.pga_factor,
            pgv_factor: self.pgv_factor,
            fm_codes: self.fm_codes.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Filtered dataset in the canonical schema; defaults to
    /// `<out>/dataset.csv`.
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibrarySection {
    /// Replaces the default 12-term library when set.
    pub terms: Option<Vec<TermSpec>>,
    pub extra_terms: Vec<TermSpec>,
    pub normalization: NormalizationMode,
    pub v_s30_reference: f64,
}

impl Default for LibrarySection {
    fn default() -> Self {
        let lib = default_library();
        LibrarySection {
            terms: None,
            extra_terms: Vec::new(),
            normalization: NormalizationMode::default(),
            v_s30_reference: lib.v_s30_reference(),
        }
    }
}

impl LibrarySection {
    pub fn library(&self) -> Result<TermLibrary> {
        let mut terms = match &self.terms {
            Some(t) => t.clone(),
            None => default_library().terms().to_vec(),
        };
        terms.extend(self.extra_terms.iter().cloned());
        TermLibrary::new(terms, self.v_s30_reference)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub lambda: f64,
    pub max_iterations: usize,
    pub final_refit_unregularized: bool,
    /// Fixed threshold; skips knee selection.
    pub delta: Option<f64>,
    /// Explicit threshold grid; overrides the log-spaced grid below.
    pub delta_grid: Option<Vec<f64>>,
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_points: usize,
    pub underfit_tolerance: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let solver = SolverConfig::default();
        SolverSection {
            lambda: solver.lambda,
            max_iterations: solver.max_iterations,
            final_refit_unregularized: solver.final_refit_unregularized,
            delta: None,
            delta_grid: None,
            delta_min: 1e-3,
            delta_max: 10.0,
            delta_points: 50,
            underfit_tolerance: KneeRule::default().underfit_tolerance,
        }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            delta: self.delta.unwrap_or(0.0),
            max_iterations: self.max_iterations,
            final_refit_unregularized: self.final_refit_unregularized,
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        if let Some(grid) = &self.delta_grid {
            return Ok(grid.clone());
        }
        if !(self.delta_min > 0.0 && self.delta_max > self.delta_min) {
            return Err(Error::Config(format!(
                "solver.delta_min and delta_max must satisfy 0 < min < max (got {}, {})",
                self.delta_min, self.delta_max
            )));
        }
        Ok(log_spaced(
            self.delta_min,
            self.delta_max,
            self.delta_points,
        ))
    }

    pub fn knee_rule(&self) -> KneeRule {
        KneeRule {
            underfit_tolerance: self.underfit_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualsSection {
    /// `fit`, `builtin`, or the path of an equation JSON file.
    pub model: String,
    pub distance_bins: usize,
    pub v_s30_bins: usize,
    pub magnitude_bins: usize,
}

impl Default for ResidualsSection {
    fn default() -> Self {
        ResidualsSection {
            model: "fit".into(),
            distance_bins: 10,
            v_s30_bins: 8,
            magnitude_bins: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesSection {
    /// `builtin`, `fit`, or the path of an equation JSON file.
    pub model: String,
    pub m_w: Vec<f64>,
    pub v_s30: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub r_points: usize,
    pub fm: f64,
    pub z_1_0: f64,
    /// CSV with columns m_w, v_s30, r_jb and ln_y or y; optional im, source.
    pub comparison: Option<PathBuf>,
}

impl Default for CurvesSection {
    fn default() -> Self {
        CurvesSection {
            model: "builtin".into(),
            m_w: vec![4.0, 5.0, 6.0, 7.0],
            v_s30: vec![200.0, 560.0, 760.0],
            r_min: 1.0,
            r_max: 400.0,
            r_points: 60,
            fm: 1.0,
            z_1_0: 1.0,
            comparison: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtrapolateSection {
    pub split_km: f64,
    pub m_w: Vec<f64>,
    pub v_s30: Vec<f64>,
    /// Nearest distance of the near-field prediction grid.
    pub r_min: f64,
    pub r_points: usize,
}

impl Default for ExtrapolateSection {
    fn default() -> Self {
        ExtrapolateSection {
            split_km: 30.0,
            m_w: vec![4.0, 5.0, 6.0, 7.0],
            v_s30: vec![760.0],
            r_min: 0.1,
            r_points: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// `builtin` or the path of an equation JSON file.
    pub truth: String,
    pub n_events: usize,
    pub records_per_event: usize,
    /// Draw record counts uniformly from `records_per_event..=max`.
    pub records_per_event_max: Option<usize>,
    pub tau: f64,
    pub phi: f64,
    pub seed: u64,
    pub ranges: CovariateRanges,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            truth: "builtin".into(),
            n_events: 500,
            records_per_event: 10,
            records_per_event_max: None,
            tau: 0.4,
            phi: 0.6,
            seed: 0,
            ranges: CovariateRanges::default(),
        }
    }
}

/// A parsed configuration with the directory its relative paths resolve
/// against.
#[derive(Debug, Clone)]
pub struct Session {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    hash: String,
}

impl Session {
    pub fn new(config: RunConfig, base_dir: PathBuf) -> Result<Self> {
        let text = toml::to_string(&config)
            .map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))?;
        let digest = Sha256::digest(text.as_bytes());
        let hash = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Ok(Session {
            config,
            base_dir,
            hash,
        })
    }

    /// First 16 hex digits of the SHA-256 of the effective configuration.
    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.run.out
    }

    pub fn im(&self) -> Im {
        self.config.run.im
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = parse_config(
            r#"
            [run]
            im = "pgv"
            [flatfile]
            columns = { m_w = "Earthquake Magnitude", r_jb = "Rjb (km)" }
            fm_codes = { "0" = 1, "1" = 2 }
            [filter]
            min_records_per_event = 3
            depth_range = { min = 0.0 }
            [library]
            extra_terms = ["ln(R_JB+6)"]
            normalization = "minmax"
            [solver]
            delta_grid = [0.01, 0.1]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.run.im, Im::Pgv);
        assert_eq!(
            cfg.flatfile.column_map().header(Field::MW),
            "Earthquake Magnitude"
        );
        assert_eq!(cfg.flatfile.column_map().header(Field::PGA), "pga");
        assert_eq!(cfg.filter.min_records_per_event, 3);
        assert_eq!(cfg.filter.depth_range.max, None);
        assert_eq!(cfg.library.library().unwrap().len(), 13);
        assert_eq!(cfg.solver.grid().unwrap(), vec![0.01, 0.1]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("[solver]\nlamda = 1.0\n").is_err());
        assert!(parse_config("[nonsense]\n").is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.run.out = PathBuf::from("elsewhere");
        let ha = Session::new(a, ".".into()).unwrap();
        let hb = Session::new(b.clone(), ".".into()).unwrap();
        assert_eq!(ha.config_hash(), hb.config_hash());
        assert_eq!(ha.config_hash().len(), 16);
        b.synth.seed = 9;
        assert_ne!(
            Session::new(b, ".".into()).unwrap().config_hash(),
            ha.config_hash()
        );
    }
}
