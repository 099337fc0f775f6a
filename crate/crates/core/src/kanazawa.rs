//! Classical half-bandwidth baseline.
//!
//! The conductance peak of a crystal immersed in a Newtonian liquid is a
//! Lorentzian whose half width at half maximum Γ equals the magnitude of
//! the resonance-frequency shift. Γ inverts to viscosity through the
//! Kanazawa–Gordon relation `Γ = f0^{3/2}·√(ρ_l·η/(π·ρ_q·μ_q))`, and a
//! monotone glycerol–water calibration table turns viscosity into
//! concentration.
//!
//! The default calibration ships as a CSV of 25 °C literature-style values
//! (Cheng 2008 correlation, ideal-mixing densities) and can be replaced by
//! any table with strictly increasing viscosity over its range.

use serde::Serialize;
use thiserror::Error;

use crate::lineshape::track_extremum;
use crate::spectra::{derive_observables, Extremum, FeatureKind, FrequencySweep, ObservableTrace};

#[derive(Debug, Error)]
pub enum KanazawaError {
    #[error("crystal constant {0} must be strictly positive")]
    NonPositiveConstant(&'static str),
    #[error("half-height not crossed on the {0} flank of the conductance peak")]
    HalfHeightNotCrossed(&'static str),
    #[error("half-bandwidth must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("viscosity must be positive, got {0}")]
    NonPositiveViscosity(f64),
    #[error("density must be positive, got {0}")]
    NonPositiveDensity(f64),
    #[error("calibration table needs at least 2 rows")]
    TooFewKnots,
    #[error("calibration viscosity must increase strictly with concentration (violated at knot {0})")]
    NonMonotoneCalibration(usize),
    #[error("calibration parse error at line {line}: {msg}")]
    CalibrationParse { line: usize, msg: String },
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<KanazawaError>,
    },
    #[error(transparent)]
    Tracking(#[from] crate::lineshape::LineshapeError),
    #[error(transparent)]
    Spectra(#[from] crate::spectra::SpectraError),
}

/// AT-cut quartz constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrystalConstants {
    /// Fundamental resonance, Hz.
    pub f0: f64,
    /// Quartz density, kg/m³.
    pub rho_q: f64,
    /// Quartz shear modulus, Pa.
    pub mu_q: f64,
}

impl Default for CrystalConstants {
    fn default() -> Self {
        CrystalConstants { f0: 1e7, rho_q: 2650.0, mu_q: 2.947e10 }
    }
}

impl CrystalConstants {
    pub fn validate(&self) -> Result<(), KanazawaError> {
        for (v, name) in [(self.f0, "f0"), (self.rho_q, "rho_q"), (self.mu_q, "mu_q")] {
            if !(v > 0.0) {
                return Err(KanazawaError::NonPositiveConstant(name));
            }
        }
        Ok(())
    }
}

/// Conductance-peak reading for one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaReading {
    /// Conductance-peak frequency, Hz.
    pub f_r: f64,
    /// Half width at half of (peak − baseline), Hz.
    pub gamma: f64,
    /// Baseline conductance, Siemens.
    pub baseline: f64,
}

// ---------- gamma extraction ----------

/// Quadratic inverse interpolation of the crossing `y = level` between
/// samples around index `i..i+1`, walking outward from the peak.
fn crossing(freq: &[f64], y: &[f64], i: usize, level: f64) -> f64 {
    let n = freq.len();
    // three points bracketing the crossing
    let (i0, i1, i2) = if i == 0 { (0, 1, 2) } else if i + 1 >= n { (n - 3, n - 2, n - 1) } else { (i - 1, i, i + 1) };
    let (x0, x1, x2) = (freq[i0], freq[i1], freq[i2]);
    let (y0, y1, y2) = (y[i0], y[i1], y[i2]);
    // Lagrange quadratic through the three points, solved for y = level by
    // bisection on the bracketing interval (the quadratic is monotone there)
    let eval = |x: f64| -> f64 {
        y0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1))
    };
    let (mut lo, mut hi) = (freq[i.saturating_sub(0).max(i0)], freq[(i + 1).min(i2)]);
    let f_lo = eval(lo) - level;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f_mid = eval(mid) - level;
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Baseline, tracked peak, and half-bandwidth of a conductance trace.
///
/// The baseline is the mean of the outer 5% of samples on each side, the
/// peak position comes from the parabola tracker, and Γ is half the width
/// between the two half-height crossings found by quadratic interpolation
/// on each flank.
pub fn extract_gamma(g_trace: &ObservableTrace) -> Result<GammaReading, KanazawaError> {
    let n = g_trace.value.len();
    let edge = (n / 20).max(1);
    let baseline = (g_trace.value[..edge].iter().sum::<f64>()
        + g_trace.value[n - edge..].iter().sum::<f64>())
        / (2 * edge) as f64;

    let f_r = track_extremum(g_trace, Extremum::Max)?;
    let peak_idx = g_trace
        .freq_hz
        .partition_point(|&f| f < f_r)
        .clamp(1, n - 1);
    let peak_value = g_trace.value[peak_idx - 1].max(g_trace.value[peak_idx]);
    let level = baseline + 0.5 * (peak_value - baseline);

    // walk outward on each flank to the first crossing below the level
    let mut right = None;
    for i in peak_idx..n - 1 {
        if g_trace.value[i] >= level && g_trace.value[i + 1] < level {
            right = Some(crossing(&g_trace.freq_hz, &g_trace.value, i, level));
            break;
        }
    }
    let mut left = None;
    for i in (1..=peak_idx).rev() {
        if g_trace.value[i] >= level && g_trace.value[i - 1] < level {
            left = Some(crossing(&g_trace.freq_hz, &g_trace.value, i - 1, level));
            break;
        }
    }
    let right = right.ok_or(KanazawaError::HalfHeightNotCrossed("upper"))?;
    let left = left.ok_or(KanazawaError::HalfHeightNotCrossed("lower"))?;
    Ok(GammaReading { f_r, gamma: 0.5 * (right - left), baseline })
}

// ---------- Kanazawa–Gordon inversion ----------

/// Half-bandwidth of a Newtonian load: `Γ = f0^{3/2}·√(ρ_l·η/(π·ρ_q·μ_q))`.
pub fn gamma_from_viscosity(
    eta: f64,
    constants: &CrystalConstants,
    rho_l: f64,
) -> Result<f64, KanazawaError> {
    constants.validate()?;
    if !(eta > 0.0) {
        return Err(KanazawaError::NonPositiveViscosity(eta));
    }
    if !(rho_l > 0.0) {
        return Err(KanazawaError::NonPositiveDensity(rho_l));
    }
    Ok(constants.f0.powf(1.5)
        * (rho_l * eta / (std::f64::consts::PI * constants.rho_q * constants.mu_q)).sqrt())
}

/// Analytic inverse: `η = Γ²·π·ρ_q·μ_q/(f0³·ρ_l)`.
pub fn viscosity_from_gamma(
    reading: &GammaReading,
    constants: &CrystalConstants,
    rho_l: f64,
) -> Result<f64, KanazawaError> {
    constants.validate()?;
    if !(reading.gamma > 0.0) {
        return Err(KanazawaError::NonPositiveGamma(reading.gamma));
    }
    if !(rho_l > 0.0) {
        return Err(KanazawaError::NonPositiveDensity(rho_l));
    }
    Ok(reading.gamma * reading.gamma * std::f64::consts::PI * constants.rho_q * constants.mu_q
        / (constants.f0.powi(3) * rho_l))
}

// ---------- calibration ----------

/// One calibration knot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationKnot {
    pub pct: f64,
    pub eta_pa_s: f64,
    pub rho_kg_m3: f64,
}

/// Monotone glycerol–water calibration: concentration ↔ viscosity and
/// density at fixed temperature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViscosityCalibration {
    knots: Vec<CalibrationKnot>,
    /// PCHIP slopes of pct as a function of eta.
    slopes: Vec<f64>,
}

/// Conversion result, flagged when the input was outside the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Concentration {
    pub pct: f64,
    pub clamped: bool,
}

const DEFAULT_CALIBRATION: &str = include_str!("../data/glycerol_water_25c.csv");

impl ViscosityCalibration {
    pub fn new(knots: Vec<CalibrationKnot>) -> Result<ViscosityCalibration, KanazawaError> {
        if knots.len() < 2 {
            return Err(KanazawaError::TooFewKnots);
        }
        for i in 1..knots.len() {
            if knots[i].pct <= knots[i - 1].pct || knots[i].eta_pa_s <= knots[i - 1].eta_pa_s {
                return Err(KanazawaError::NonMonotoneCalibration(i));
            }
        }
        // Fritsch-Carlson monotone slopes for pct(eta)
        let n = knots.len();
        let h: Vec<f64> = (0..n - 1).map(|i| knots[i + 1].eta_pa_s - knots[i].eta_pa_s).collect();
        let delta: Vec<f64> = (0..n - 1)
            .map(|i| (knots[i + 1].pct - knots[i].pct) / h[i])
            .collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = delta[0];
        slopes[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                slopes[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Ok(ViscosityCalibration { knots, slopes })
    }

    /// Built-in glycerol–water table at 25 °C.
    pub fn default_glycerol_water() -> ViscosityCalibration {
        Self::parse_csv(DEFAULT_CALIBRATION).expect("bundled calibration is valid")
    }

    /// Parse `pct,eta_pa_s,rho_kg_m3` rows.
    pub fn parse_csv(text: &str) -> Result<ViscosityCalibration, KanazawaError> {
        let mut knots = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 {
                if line.trim() != "pct,eta_pa_s,rho_kg_m3" {
                    return Err(KanazawaError::CalibrationParse {
                        line: 1,
                        msg: "expected header pct,eta_pa_s,rho_kg_m3".into(),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(KanazawaError::CalibrationParse {
                    line: idx + 1,
                    msg: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let parse = |raw: &str| -> Result<f64, KanazawaError> {
                raw.trim().parse().map_err(|_| KanazawaError::CalibrationParse {
                    line: idx + 1,
                    msg: format!("invalid number {raw:?}"),
                })
            };
            knots.push(CalibrationKnot {
                pct: parse(fields[0])?,
                eta_pa_s: parse(fields[1])?,
                rho_kg_m3: parse(fields[2])?,
            });
        }
        ViscosityCalibration::new(knots)
    }

    pub fn knots(&self) -> &[CalibrationKnot] {
        &self.knots
    }

    pub fn eta_range(&self) -> (f64, f64) {
        (self.knots[0].eta_pa_s, self.knots[self.knots.len() - 1].eta_pa_s)
    }

    /// Monotone-spline inversion of the table; out-of-range viscosities are
    /// clamped to the nearest knot and flagged.
    pub fn concentration_from_viscosity(&self, eta: f64) -> Result<Concentration, KanazawaError> {
        if !(eta > 0.0) {
            return Err(KanazawaError::NonPositiveViscosity(eta));
        }
        let (lo, hi) = self.eta_range();
        if eta <= lo {
            return Ok(Concentration { pct: self.knots[0].pct, clamped: eta < lo });
        }
        if eta >= hi {
            return Ok(Concentration {
                pct: self.knots[self.knots.len() - 1].pct,
                clamped: eta > hi,
            });
        }
        let i = self.knots.partition_point(|k| k.eta_pa_s <= eta) - 1;
        let k0 = &self.knots[i];
        let k1 = &self.knots[i + 1];
        let h = k1.eta_pa_s - k0.eta_pa_s;
        let t = (eta - k0.eta_pa_s) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t),
            t * (1.0 - t) * (1.0 - t),
            t * t * (3.0 - 2.0 * t),
            t * t * (t - 1.0),
        );
        let pct = h00 * k0.pct + h10 * h * self.slopes[i] + h01 * k1.pct + h11 * h * self.slopes[i + 1];
        Ok(Concentration { pct, clamped: false })
    }

    /// Density at a concentration, linearly interpolated between knots.
    pub fn density_at(&self, pct: f64) -> f64 {
        let n = self.knots.len();
        if pct <= self.knots[0].pct {
            return self.knots[0].rho_kg_m3;
        }
        if pct >= self.knots[n - 1].pct {
            return self.knots[n - 1].rho_kg_m3;
        }
        let i = self.knots.partition_point(|k| k.pct <= pct) - 1;
        let k0 = &self.knots[i];
        let k1 = &self.knots[i + 1];
        let t = (pct - k0.pct) / (k1.pct - k0.pct);
        k0.rho_kg_m3 + t * (k1.rho_kg_m3 - k0.rho_kg_m3)
    }
}

// ---------- per-round prediction ----------

/// One predicted round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KanazawaPrediction {
    pub round_index: usize,
    pub timestamp_s: f64,
    pub gamma_hz: f64,
    pub eta_pa_s: f64,
    pub pred_pct: f64,
    pub clamped: bool,
}

/// A round that could not be inverted, with its cause.
#[derive(Debug)]
pub struct SkippedRound {
    pub round_index: usize,
    pub error: KanazawaError,
}

/// Chain Γ extraction → viscosity → concentration per conductance sweep.
/// Density feeds back once through the calibration table, which converges
/// immediately on the 0–2% range where it varies well under a percent.
pub fn kanazawa_predict(
    g_sweeps: &[FrequencySweep],
    constants: &CrystalConstants,
    calibration: &ViscosityCalibration,
) -> (Vec<KanazawaPrediction>, Vec<SkippedRound>) {
    let mut predictions = Vec::new();
    let mut skipped = Vec::new();
    for sweep in g_sweeps {
        debug_assert_eq!(sweep.kind, FeatureKind::G);
        let result = (|| -> Result<KanazawaPrediction, KanazawaError> {
            let trace = derive_observables(sweep, FeatureKind::G.observable())?;
            let reading = extract_gamma(&trace)?;
            let mut rho = calibration.density_at(0.0);
            let mut eta = viscosity_from_gamma(&reading, constants, rho)?;
            let mut conc = calibration.concentration_from_viscosity(eta)?;
            // one density refinement pass
            rho = calibration.density_at(conc.pct);
            eta = viscosity_from_gamma(&reading, constants, rho)?;
            conc = calibration.concentration_from_viscosity(eta)?;
            Ok(KanazawaPrediction {
                round_index: sweep.round_index,
                timestamp_s: sweep.timestamp_s,
                gamma_hz: reading.gamma,
                eta_pa_s: eta,
                pred_pct: conc.pct,
                clamped: conc.clamped,
            })
        })();
        match result {
            Ok(p) => predictions.push(p),
            Err(error) => skipped.push(SkippedRound {
                round_index: sweep.round_index,
                error: KanazawaError::Round {
                    round: sweep.round_index,
                    source: Box::new(error),
                },
            }),
        }
    }
    (predictions, skipped)
}
