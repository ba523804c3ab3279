//! Seeded synthetic flatfiles with two-level Gaussian noise.
//!
//! The random stream is ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`)
//! read as raw `u64` words. A uniform on `[0, 1)` is `(u >> 11) * 2^-53`;
//! a standard normal is `sqrt(-2 ln(1 - U1)) * cos(2 pi U2)` from two
//! consecutive uniforms. Draw order:
//!
//! * per event: `M_w`, fault mechanism, depth, record count (range mode
//!   only), `eta` for the target IM, `eta` for the companion IM;
//! * per record: `R_JB`, `V_S30`, `Z_1.0`, `eps` for the target IM, `eps`
//!   for the companion IM.
//!
//! Normal draws are taken even when the corresponding SD is zero, so changing
//! an SD never shifts the rest of the stream.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatfile::{FaultMechanism, GroundMotionRecord};
use crate::gmpe::{builtin_model, predict, Im, PhysicalEquation};
use crate::library::Scenario;

/// Deterministic uniform and normal draws, portable across platforms.
pub struct SynthRng(ChaCha8Rng);

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        SynthRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn log_uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        (lo.ln() + (hi.ln() - lo.ln()) * self.uniform()).exp()
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn integer_in(&mut self, lo: u64, hi: u64) -> u64 {
        let span = hi - lo + 1;
        lo + ((self.uniform() * span as f64) as u64).min(span - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordsPerEvent {
    Fixed(usize),
    /// Uniform integer in `[min, max]`.
    Range {
        min: usize,
        max: usize,
    },
}

/// Closed bounds `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Bounds { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// `m_w` and `depth` are uniform; the others log-uniform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateRanges {
    pub m_w: Bounds,
    pub r_jb: Bounds,
    pub v_s30: Bounds,
    pub z_1_0: Bounds,
    pub depth: Bounds,
}

impl Default for CovariateRanges {
    fn default() -> Self {
        CovariateRanges {
            m_w: Bounds::new(3.0, 7.6),
            r_jb: Bounds::new(1.0, 400.0),
            v_s30: Bounds::new(90.0, 1464.0),
            z_1_0: Bounds::new(1.0, 3520.0),
            depth: Bounds::new(1.0, 20.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub truth: PhysicalEquation,
    /// Equation for the other intensity measure column.
    pub companion: PhysicalEquation,
    pub n_events: usize,
    pub records_per_event: RecordsPerEvent,
    pub tau: f64,
    pub phi: f64,
    pub ranges: CovariateRanges,
    pub seed: u64,
}

impl SynthSpec {
    /// Default ranges, with the builtin model of the other IM as companion.
    pub fn new(
        truth: PhysicalEquation,
        n_events: usize,
        records_per_event: usize,
        tau: f64,
        phi: f64,
        seed: u64,
    ) -> Self {
        SynthSpec {
            companion: builtin_model(truth.im().other()),
            truth,
            n_events,
            records_per_event: RecordsPerEvent::Fixed(records_per_event),
            tau,
            phi,
            ranges: CovariateRanges::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.companion.im() == self.truth.im() {
            return Err(Error::Config(format!(
                "companion equation must be for {}, not {}",
                self.truth.im().other(),
                self.companion.im()
            )));
        }
        if self.n_events == 0 {
            return Err(Error::Config("n_events must be positive".into()));
        }
        match self.records_per_event {
            RecordsPerEvent::Fixed(0) => {
                return Err(Error::Config("records_per_event must be positive".into()))
            }
            RecordsPerEvent::Range { min, max } if min == 0 || max < min => {
                return Err(Error::Config(format!(
                    "records_per_event range [{min}, {max}] is invalid"
                )))
            }
            _ => {}
        }
        for (name, v) in [("tau", self.tau), ("phi", self.phi)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        let r = &self.ranges;
        for (name, b, positive) in [
            ("m_w", r.m_w, true),
            ("r_jb", r.r_jb, true),
            ("v_s30", r.v_s30, true),
            ("z_1_0", r.z_1_0, true),
            ("depth", r.depth, false),
        ] {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.hi >= b.lo) || (positive && b.lo <= 0.0)
            {
                return Err(Error::Config(format!(
                    "range for {name} [{}, {}] is invalid",
                    b.lo, b.hi
                )));
            }
        }
        Ok(())
    }
}

fn record_count(rng: &mut SynthRng, spec: &RecordsPerEvent) -> usize {
    match *spec {
        RecordsPerEvent::Fixed(n) => n,
        RecordsPerEvent::Range { min, max } => rng.integer_in(min as u64, max as u64) as usize,
    }
}

/// Records in event order; event ids `EQ0001...`, station ids numbered
/// across the whole dataset.
pub fn generate(spec: &SynthSpec) -> Result<Vec<GroundMotionRecord>> {
    spec.validate()?;
    let mut rng = SynthRng::new(spec.seed);
    let r = &spec.ranges;
    let mut records = Vec::new();
    for i in 0..spec.n_events {
        let m_w = rng.uniform_in(r.m_w.lo, r.m_w.hi);
        let fm = match rng.integer_in(1, 3) {
            1 => FaultMechanism::StrikeSlip,
            2 => FaultMechanism::Normal,
            _ => FaultMechanism::Reverse,
        };
        let depth = rng.uniform_in(r.depth.lo, r.depth.hi);
        let n = record_count(&mut rng, &spec.records_per_event);
        let eta = spec.tau * rng.standard_normal();
        let eta_companion = spec.tau * rng.standard_normal();
        for _ in 0..n {
            let scenario = Scenario {
                m_w,
                r_jb: rng.log_uniform_in(r.r_jb.lo, r.r_jb.hi),
                v_s30: rng.log_uniform_in(r.v_s30.lo, r.v_s30.hi),
                fm: f64::from(fm.code()),
                z_1_0: rng.log_uniform_in(r.z_1_0.lo, r.z_1_0.hi),
            };
            let eps = spec.phi * rng.standard_normal();
            let eps_companion = spec.phi * rng.standard_normal();
            let ln_y = predict(&spec.truth, &scenario)? + eta + eps;
            let ln_other = predict(&spec.companion, &scenario)? + eta_companion + eps_companion;
            let (pga, pgv) = match spec.truth.im() {
                Im::Pga => (ln_y.exp(), ln_other.exp()),
                Im::Pgv => (ln_other.exp(), ln_y.exp()),
            };
            records.push(GroundMotionRecord {
                event_id: format!("EQ{:04}", i + 1),
                station_id: format!("ST{:06}", records.len() + 1),
                m_w,
                r_jb: scenario.r_jb,
                v_s30: scenario.v_s30,
                fm,
                z_1_0: scenario.z_1_0,
                depth,
                pga,
                pgv,
            });
        }
    }
    Ok(records)
}

/// Pure noise `eta_i + eps_ij` as `(event_id, residual)` pairs, event-major.
/// Each event draws its `eta` then its records' `eps` in turn.
pub fn two_level_residuals(
    n_events: usize,
    records_per_event: usize,
    tau: f64,
    phi: f64,
    seed: u64,
) -> Vec<(String, f64)> {
    let mut rng = SynthRng::new(seed);
    let mut out = Vec::with_capacity(n_events * records_per_event);
    for i in 0..n_events {
        let id = format!("EQ{:04}", i + 1);
        let eta = tau * rng.standard_normal();
        for _ in 0..records_per_event {
            out.push((id.clone(), eta + phi * rng.standard_normal()));
        }
    }
    out
}
