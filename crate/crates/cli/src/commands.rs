use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use gmdisco::flatfile::{
    filter_records, parse_flatfile, write_flatfile, ColumnMap, GroundMotionRecord, IngestOptions,
};
use gmdisco::gmpe::{
    attenuation_curves, builtin_model, log_spaced, near_field_slope, predict,
    saturation_slope_bound, Im, PhysicalEquation, ScenarioGrid, Source,
};
use gmdisco::library::{build_design_matrix, Scenario};
use gmdisco::mixedfx::{
    binned_residual_stats, decompose, estimate_variance_components, fit_sigma_model,
    log_spaced_edges, BinStat, GroupedResiduals,
};
use gmdisco::stridge::{
    select_threshold_with, stridge_fit, threshold_sweep, SparseModel, ThresholdSweep,
};
use gmdisco::synth::{generate, RecordsPerEvent, SynthSpec};
use gmdisco::{Error, Result};
use serde::Serialize;

use crate::config::Session;
use crate::output::{num, OutputDir};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot open {}: {e}", path.display()),
        ))
    })
}

/// The filtered dataset: `input`, else `[data] dataset`, else
/// `<out>/dataset.csv`.
pub fn load_dataset(session: &Session, input: Option<&Path>) -> Result<Vec<GroundMotionRecord>> {
    let path = match (input, &session.config.data.dataset) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => session.resolve(p),
        (None, None) => session.out_dir().join("dataset.csv"),
    };
    let (records, _) = parse_flatfile(
        BufReader::new(open(&path)?),
        &ColumnMap::default(),
        &IngestOptions::default(),
    )?;
    Ok(records)
}

fn load_equation(path: &Path, im: Im) -> Result<PhysicalEquation> {
    let eq: PhysicalEquation = serde_json::from_reader(BufReader::new(open(path)?))
        .map_err(|e| Error::Config(format!("invalid equation file {}: {e}", path.display())))?;
    if eq.im() != im {
        return Err(Error::Config(format!(
            "equation file {} is for {}, but {} was requested",
            path.display(),
            eq.im(),
            im
        )));
    }
    Ok(eq)
}

pub struct FitOutcome {
    pub model: SparseModel,
    /// Sweep and selected index when the threshold came from knee selection.
    pub sweep: Option<(ThresholdSweep, usize)>,
}

/// Sweep, knee selection and final fit, or a single fit when a threshold
/// is given.
pub fn fit_records(
    session: &Session,
    records: &[GroundMotionRecord],
    im: Im,
    delta: Option<f64>,
) -> Result<FitOutcome> {
    let cfg = &session.config;
    let library = cfg.library.library()?;
    let matrix = build_design_matrix(records, &library, im, cfg.library.normalization)?;
    let base = cfg.solver.solver_config();
    if let Some(delta) = delta.or(cfg.solver.delta) {
        let model = stridge_fit(&matrix, &base.with_delta(delta))?;
        return Ok(FitOutcome { model, sweep: None });
    }
    let sweep = threshold_sweep(&matrix, &base, &cfg.solver.grid()?)?;
    let idx = select_threshold_with(&sweep, &cfg.solver.knee_rule())?;
    let model = match &sweep.points[idx].model {
        Some(m) => m.clone(),
        None => stridge_fit(&matrix, &base.with_delta(sweep.points[idx].delta))?,
    };
    Ok(FitOutcome {
        model,
        sweep: Some((sweep, idx)),
    })
}

fn resolve_model(
    session: &Session,
    choice: &str,
    records: impl FnOnce() -> Result<Vec<GroundMotionRecord>>,
) -> Result<PhysicalEquation> {
    let im = session.im();
    match choice {
        "builtin" => Ok(builtin_model(im)),
        "fit" => Ok(fit_records(session, &records()?, im, None)?.model.physical),
        path => load_equation(&session.resolve(Path::new(path)), im),
    }
}

fn write_sweep(
    out: &mut OutputDir,
    name: &str,
    sweep: &ThresholdSweep,
    selected: Option<usize>,
) -> Result<()> {
    let rows = sweep.points.iter().enumerate().map(|(i, p)| {
        let stats = p.model.as_ref().map(|m| m.fit_stats);
        vec![
            num(p.delta),
            p.n_terms.to_string(),
            stats.map_or(String::new(), |s| num(s.rss)),
            stats.map_or(String::new(), |s| num(s.r_squared)),
            u8::from(selected == Some(i)).to_string(),
        ]
    });
    out.csv(
        name,
        &["delta", "n_terms", "rss", "r_squared", "selected"],
        rows,
    )?;
    out.json(&name.replace(".csv", ".json"), sweep)?;
    Ok(())
}

pub fn cmd_ingest(session: &Session, input: Option<&Path>) -> Result<()> {
    let cfg = &session.config;
    let path = match (input, &cfg.flatfile.path) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => session.resolve(p),
        (None, None) => {
            return Err(Error::Config(
                "no flatfile given; pass --input or set [flatfile] path".into(),
            ))
        }
    };
    cfg.filter.validate()?;
    let (parsed, parse_report) = parse_flatfile(
        BufReader::new(open(&path)?),
        &cfg.flatfile.column_map(),
        &cfg.flatfile.ingest_options(),
    )?;
    let (kept, filter_report) = filter_records(&parsed, &cfg.filter);
    let report = parse_report.then(&filter_report);

    let mut out = OutputDir::create(session.out_dir(), session.config_hash())?;
    out.csv_with("dataset.csv", |buf| write_flatfile(&kept, buf))?;
    out.json("ingest_report.json", &report)?;
    println!(
        "ingest: {} rows read, {} dropped, {} records from {} events at {} stations",
        report.rows_read,
        report.rows_dropped(),
        report.n_records,
        report.n_events,
        report.n_stations
    );
    for (rule, n) in &report.rows_dropped_by_rule {
        println!("  dropped {n:>6}  {rule}");
    }
    Ok(())
}

pub fn cmd_fit(session: &Session, input: Option<&Path>, delta: Option<f64>) -> Result<()> {
    let im = session.im();
    let records = load_dataset(session, input)?;
    let outcome = fit_records(session, &records, im, delta)?;
    let label = im.label();

    let mut out = OutputDir::create(session.out_dir(), session.config_hash())?;
    out.json(&format!("model_{label}.json"), &outcome.model)?;
    out.json(&format!("equation_{label}.json"), &outcome.model.physical)?;
    let text = outcome.model.physical.to_text(6);
    out.text(&format!("equation_{label}.txt"), &text)?;
    if let Some((sweep, idx)) = &outcome.sweep {
        write_sweep(&mut out, &format!("sweep_{label}.csv"), sweep, Some(*idx))?;
    }
    let stats = outcome.model.fit_stats;
    println!(
        "fit: {} records, delta = {}, {} terms, R^2 = {:.6}",
        records.len(),
        outcome.model.config.delta,
        stats.n_terms,
        stats.r_squared
    );
    println!("{text}");
    Ok(())
}

pub fn cmd_sweep(session: &Session, input: Option<&Path>) -> Result<()> {
    let im = session.im();
    let cfg = &session.config;
    let records = load_dataset(session, input)?;
    let library = cfg.library.library()?;
    let matrix = build_design_matrix(&records, &library, im, cfg.library.normalization)?;
    let sweep = threshold_sweep(&matrix, &cfg.solver.solver_config(), &cfg.solver.grid()?)?;
    let selected = match select_threshold_with(&sweep, &cfg.solver.knee_rule()) {
        Ok(i) => Some(i),
        Err(Error::NoKnee) => None,
        Err(e) => return Err(e),
    };

    let mut out = OutputDir::create(session.out_dir(), session.config_hash())?;
    write_sweep(
        &mut out,
        &format!("sweep_{}.csv", im.label()),
        &sweep,
        selected,
    )?;
    let n: Vec<String> = sweep.n_terms().iter().map(|n| n.to_string()).collect();
    println!("sweep: n_terms = [{}]", n.join(", "));
    match selected {
        Some(i) => println!(
            "selected delta = {} ({} terms)",
            sweep.points[i].delta, sweep.points[i].n_terms
        ),
        None => println!("no knee in the threshold curve"),
    }
    if !sweep.is_monotone() {
        println!(
            "warning: term count increases at grid index {:?}",
            sweep.monotonicity_violations
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SigmaReport<'a> {
    im: Im,
    model: &'a PhysicalEquation,
    tau: f64,
    phi: f64,
    log_likelihood: f64,
    boundary: bool,
    degenerate: bool,
    sigma_model: Option<gmdisco::mixedfx::SigmaModel>,
    sigma_model_error: Option<String>,
}

fn bin_rows(stats: &[BinStat]) -> Vec<Vec<String>> {
    stats
        .iter()
        .map(|b| {
            vec![
                num(b.lower),
                num(b.upper),
                num(b.center),
                num(b.mean),
                num(b.sd),
                b.count.to_string(),
            ]
        })
        .collect()
}

fn bins_over(values: &[f64], bin_variable: &[f64], n_bins: usize) -> Result<Vec<BinStat>> {
    let lo = bin_variable.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = bin_variable
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Ok(Vec::new());
    }
    let hi = if hi > lo { hi } else { lo * (1.0 + 1e-9) };
    binned_residual_stats(values, bin_variable, &log_spaced_edges(lo, hi, n_bins)?)
}

const BIN_HEADER: [&str; 6] = ["lower", "upper", "center", "mean", "sd", "count"];

pub fn cmd_residuals(session: &Session, input: Option<&Path>) -> Result<()> {
    let im = session.im();
    let label = im.label();
    let cfg = &session.config.residuals;
    let records = load_dataset(session, input)?;
    let eq = resolve_model(session, &cfg.model, || Ok(records.clone()))?;

    let mut residuals = Vec::with_capacity(records.len());
    for rec in &records {
        residuals.push(im.of(rec).ln() - predict(&eq, &Scenario::from(rec))?);
    }
    let grouped = GroupedResiduals::from_pairs(
        records
            .iter()
            .zip(&residuals)
            .map(|(r, &v)| (r.event_id.as_str(), v)),
    );
    let vc = estimate_variance_components(&grouped)?;
    let decomposition = decompose(&grouped, vc.tau, vc.phi)?;
    let magnitudes: HashMap<String, f64> = records
        .iter()
        .map(|r| (r.event_id.clone(), r.m_w))
        .collect();
    let sigma = fit_sigma_model(&decomposition, &magnitudes);

    let mut out = OutputDir::create(session.out_dir(), session.config_hash())?;
    let mut n_per_event: HashMap<&str, usize> = HashMap::new();
    for r in &records {
        *n_per_event.entry(r.event_id.as_str()).or_insert(0) += 1;
    }
    out.csv(
        &format!("eta_{label}.csv"),
        &["event_id", "m_w", "n_records", "eta"],
        decomposition.eta.iter().map(|(id, &e)| {
            vec![
                id.clone(),
                num(magnitudes[id]),
                n_per_event[id.as_str()].to_string(),
                num(e),
            ]
        }),
    )?;
    out.csv(
        &format!("epsilon_{label}.csv"),
        &[
            "record_id",
            "event_id",
            "station_id",
            "m_w",
            "r_jb",
            "v_s30",
            "residual",
            "epsilon",
        ],
        records.iter().enumerate().map(|(i, r)| {
            vec![
                (i + 1).to_string(),
                r.event_id.clone(),
                r.station_id.clone(),
                num(r.m_w),
                num(r.r_jb),
                num(r.v_s30),
                num(residuals[i]),
                num(decomposition.epsilon[i]),
            ]
        }),
    )?;

    let eps = &decomposition.epsilon;
    let column = |f: fn(&GroundMotionRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    for (name, variable, n_bins) in [
        ("m_w", column(|r| r.m_w), cfg.magnitude_bins),
        ("r_jb", column(|r| r.r_jb), cfg.distance_bins),
        ("v_s30", column(|r| r.v_s30), cfg.v_s30_bins),
    ] {
        let stats = bins_over(eps, &variable, n_bins)?;
        out.csv(
            &format!("binned_epsilon_{name}_{label}.csv"),
            &BIN_HEADER,
            bin_rows(&stats),
        )?;
    }
    let eta_values: Vec<f64> = decomposition.eta.values().copied().collect();
    let eta_m: Vec<f64> = decomposition.eta.keys().map(|id| magnitudes[id]).collect();
    let stats = bins_over(&eta_values, &eta_m, cfg.magnitude_bins)?;
    out.csv(
        &format!("binned_eta_m_w_{label}.csv"),
        &BIN_HEADER,
        bin_rows(&stats),
    )?;

    let (sigma_model, sigma_model_error) = match &sigma {
        Ok(s) => (Some(*s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    out.json(
        &format!("sigma_{label}.json"),
        &SigmaReport {
            im,
            model: &eq,
            tau: vc.tau,
            phi: vc.phi,
            log_likelihood: vc.log_likelihood,
            boundary: vc.boundary,
            degenerate: vc.degenerate,
            sigma_model,
            sigma_model_error,
        },
    )?;
    println!(
        "residuals: {} records, {} events, tau = {:.4}, phi = {:.4}{}",
        records.len(),
        grouped.n_events(),
        vc.tau,
        vc.phi,
        if vc.boundary {
            " (tau at boundary)"
        } else {
            ""
        }
    );
    let sigma = sigma?;
    println!(
        "sigma model: tau1 = {:.4}, tau2 = {:.4}, phi1 = {:.4}, phi2 = {:.4}",
        sigma.tau1, sigma.tau2, sigma.phi1, sigma.phi2
    );
    Ok(())
}

struct ComparisonRow {
    im: String,
    m_w: f64,
    v_s30: f64,
    r_jb: f64,
    ln_y: f64,
    source: String,
}

fn read_comparison(path: &Path, im: Im) -> Result<Vec<ComparisonRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(open(path)?));
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("comparison CSV {}: {e}", path.display())))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        col(name).ok_or_else(|| {
            Error::Schema(format!(
                "comparison CSV {} is missing column `{name}`",
                path.display()
            ))
        })
    };
    let (m_col, v_col, r_col) = (require("m_w")?, require("v_s30")?, require("r_jb")?);
    let (y_col, is_log) = match (col("ln_y"), col("y")) {
        (Some(c), _) => (c, true),
        (None, Some(c)) => (c, false),
        (None, None) => {
            return Err(Error::Schema(format!(
                "comparison CSV {} is missing column `ln_y` (or `y`)",
                path.display()
            )))
        }
    };
    let im_col = col("im");
    let source_col = col("source");
    let default_source = path.file_stem().map_or("comparison".to_string(), |s| {
        s.to_string_lossy().into_owned()
    });

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record =
            record.map_err(|e| Error::Schema(format!("comparison CSV row {line}: {e}")))?;
        let value = |c: usize| -> Result<f64> {
            let cell = record.get(c).unwrap_or("");
            cell.parse::<f64>().map_err(|_| {
                Error::Schema(format!(
                    "comparison CSV column `{}` row {line}: cannot parse `{cell}` as a number",
                    &headers[c]
                ))
            })
        };
        let row_im = im_col.and_then(|c| record.get(c)).unwrap_or(im.label());
        if row_im.parse::<Im>().map_err(|_| {
            Error::Schema(format!(
                "comparison CSV column `im` row {line}: unknown value `{row_im}`"
            ))
        })? != im
        {
            continue;
        }
        let y = value(y_col)?;
        rows.push(ComparisonRow {
            im: im.label().to_string(),
            m_w: value(m_col)?,
            v_s30: value(v_col)?,
            r_jb: value(r_col)?,
            ln_y: if is_log { y } else { y.ln() },
            source: source_col
                .and_then(|c| record.get(c))
                .filter(|s| !s.is_empty())
                .map_or(default_source.clone(), str::to_string),
        });
    }
    Ok(rows)
}

pub fn cmd_curves(
    session: &Session,
    input: Option<&Path>,
    comparison: Option<&Path>,
) -> Result<()> {
    let im = session.im();
    let cfg = &session.config.curves;
    let eq = resolve_model(session, &cfg.model, || load_dataset(session, input))?;
    if !(cfg.r_min > 0.0 && cfg.r_max >= cfg.r_min) || cfg.r_points == 0 {
        return Err(Error::Config(format!(
            "curves distance grid needs 0 < r_min <= r_max and r_points >= 1 (got {}, {}, {})",
            cfg.r_min, cfg.r_max, cfg.r_points
        )));
    }
    let grid = ScenarioGrid {
        m_w: cfg.m_w.clone(),
        v_s30: cfg.v_s30.clone(),
        r_jb: log_spaced(cfg.r_min, cfg.r_max, cfg.r_points),
        fm: cfg.fm,
        z_1_0: cfg.z_1_0,
    };
    let rows = attenuation_curves(&eq, &grid)?;
    let comparison_path = comparison
        .map(Path::to_path_buf)
        .or_else(|| cfg.comparison.as_ref().map(|p| session.resolve(p)));
    let extra = match &comparison_path {
        Some(p) => read_comparison(p, im)?,
        None => Vec::new(),
    };

    let source = match eq.provenance().source {
        Source::Builtin => "builtin",
        Source::Fitted => "fitted",
    };
    let mut table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                im.label().to_string(),
                num(r.m_w),
                num(r.v_s30),
                num(r.r_jb),
                num(r.ln_y),
                num(r.y),
                source.to_string(),
            ]
        })
        .collect();
    table.extend(extra.iter().map(|r| {
        vec![
            r.im.clone(),
            num(r.m_w),
            num(r.v_s30),
            num(r.r_jb),
            num(r.ln_y),
            num(r.ln_y.exp()),
            r.source.clone(),
        ]
    }));
    let mut out = OutputDir::create(session.out_dir(), session.config_hash())?;
    out.csv(
        &format!("curves_{}.csv", im.label()),
        &["im", "m_w", "v_s30", "r_jb", "ln_y", "y", "source"],
        table,
    )?;
    println!(
        "curves: {} rows from the {source} {im} equation, {} comparison rows",
        rows.len(),
        extra.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct SlopeEntry {
    model: &'static str,
    m_w: f64,
    v_s30: f64,
    slope: f64,
    bound: Option<f64>,
    within_bound: Option<bool>,
}

pub fn cmd_extrapolate(
    session: &Session,
    input: Option<&Path>,
    split_km: Option<f64>,
) -> Result<()> {
    let im = session.im();
    let label = im.label();
    let cfg = &session.config.extrapolate;
    let split = split_km.unwrap_or(cfg.split_km);
    if !(split > cfg.r_min && cfg.r_min > 0.0) || cfg.r_points == 0 {
        return Err(Error::Config(format!(
            "extrapolation needs 0 < r_min < split_km and r_points >= 1 (got {}, {split}, {})",
            cfg.r_min, cfg.r_points
        )));
    }
    let records = load_dataset(session, input)?;
    let far: Vec<GroundMotionRecord> = records
        .iter()
        .filter(|r| r.r_jb >= split)
        .cloned()
        .collect();
    if far.is_empty() {
        return Err(Error::Estimation(format!(
            "no records with R_JB >= {split} km to train the far-field model"
        )));
    }
    let full = fit_records(session, &records, im, None)?.model;
    let far_model = fit_records(session, &far, im, None)?.model;
    let truth = builtin_model(im);

    let mut near_r = log_spaced(cfg.r_min, split, cfg.r_points + 1);
    near_r.pop();
    let grid = ScenarioGrid {
        m_w: cfg.m_w.clone(),
        v_s30: cfg.v_s30.clone(),
        r_jb: near_r,
        fm: 1.0,
        z_1_0: 1.0,
    };
    let mut table = Vec::new();
    let mut slopes = Vec::new();
    for (name, eq) in [
        ("full", &full.physical),
        ("far_field", &far_model.physical),
        ("builtin", &truth),
    ] {
        for r in attenuation_curves(eq, &grid)? {
            table.push(vec![
                name.to_string(),
                num(r.m_w),
                num(r.v_s30),
                num(r.r_jb),
                num(r.ln_y),
                num(r.y),
            ]);
        }
        if name == "builtin" {
            continue;
        }
        for &m_w in &grid.m_w {
            let v_s30 = grid.v_s30[0];
            let slope = near_field_slope(eq, m_w, v_s30)?;
            let bound = saturation_slope_bound(eq, m_w);
            slopes.push(SlopeEntry {
                model: name,
                m_w,
                v_s30,
                slope,
                bound,
                within_bound: bound.map(|b| slope <= b + 1e-9),
            });
        }
    }

    let mut out = OutputDir::create(session.out_dir(), session.config_hash())?;
    out.json(&format!("model_full_{label}.json"), &full)?;
    out.json(&format!("model_far_{label}.json"), &far_model)?;
    out.text(
        &format!("equation_full_{label}.txt"),
        &full.physical.to_text(6),
    )?;
    out.text(
        &format!("equation_far_{label}.txt"),
        &far_model.physical.to_text(6),
    )?;
    out.csv(
        &format!("near_field_{label}.csv"),
        &["model", "m_w", "v_s30", "r_jb", "ln_y", "y"],
        table,
    )?;
    out.json(&format!("slopes_{label}.json"), &slopes)?;
    println!(
        "extrapolate: {} records, {} with R_JB >= {split} km",
        records.len(),
        far.len()
    );
    println!("full:      {}", full.physical.to_text(6));
    println!("far field: {}", far_model.physical.to_text(6));
    for s in &slopes {
        println!(
            "  {:<9} M_w {:<4} slope {:.5} bound {}",
            s.model,
            s.m_w,
            s.slope,
            s.bound.map_or("n/a".to_string(), |b| format!("{b:.5}"))
        );
    }
    Ok(())
}

pub fn cmd_synth(session: &Session) -> Result<PathBuf> {
    let im = session.im();
    let cfg = &session.config.synth;
    let truth = match cfg.truth.as_str() {
        "builtin" => builtin_model(im),
        path => load_equation(&session.resolve(Path::new(path)), im)?,
    };
    let spec = SynthSpec {
        companion: builtin_model(im.other()),
        truth,
        n_events: cfg.n_events,
        records_per_event: match cfg.records_per_event_max {
            Some(max) => RecordsPerEvent::Range {
                min: cfg.records_per_event,
                max,
            },
            None => RecordsPerEvent::Fixed(cfg.records_per_event),
        },
        tau: cfg.tau,
        phi: cfg.phi,
        ranges: cfg.ranges,
        seed: cfg.seed,
    };
    let records = generate(&spec)?;
    let mut out = OutputDir::create(session.out_dir(), session.config_hash())?;
    let path = out.csv_with(&format!("synth_{}.csv", im.label()), |buf| {
        write_flatfile(&records, buf)
    })?;
    out.json(&format!("synth_spec_{}.json", im.label()), &spec)?;
    println!(
        "synth: {} records from {} events (seed {}, tau {}, phi {}) -> {}",
        records.len(),
        spec.n_events,
        spec.seed,
        spec.tau,
        spec.phi,
        path.display()
    );
    Ok(path)
}
