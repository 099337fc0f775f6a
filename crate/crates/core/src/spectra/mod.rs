//! Data model for windowed impedance sweeps and the descriptor matrix.
//!
//! A *sweep* is one 1000-point acquisition of complex impedance in a narrow
//! frequency window around one resonance feature; a *round* is the set of
//! nine sweeps covering all features at one time point. Each sweep is
//! reduced by the line-shape fitter to 6 Gaussian or 4 Lorentzian
//! parameters, and a full round assembles into one 52-descriptor row.

pub mod io;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::lineshape::{FitParams, FitRecord};

/// Samples per acquisition window.
pub const POINTS_PER_SWEEP: usize = 1000;

/// Descriptors per dataset row: 8 two-term-Gaussian features × 6 parameters
/// plus the 4-parameter Lorentzian conductance fit.
pub const DESCRIPTOR_COUNT: usize = 52;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("frequency grid must be strictly increasing (violated at sample {0})")]
    NonMonotoneGrid(usize),
    #[error("sweep must have {expected} samples, got {got}")]
    BadSweepLength { expected: usize, got: usize },
    #[error("frequency and impedance arrays differ in length ({freq} vs {z})")]
    LengthMismatch { freq: usize, z: usize },
    #[error("impedance sample {0} is zero; admittance undefined")]
    ZeroImpedance(usize),
    #[error("frequency grid is constant; normalization statistics undefined")]
    ConstantGrid,
    #[error("round is missing fits for kinds: {0:?}")]
    MissingKinds(Vec<&'static str>),
    #[error("round has duplicate fits for kinds: {0:?}")]
    DuplicateKinds(Vec<&'static str>),
    #[error("fit record for {kind} carries {got} parameters, expected {expected}")]
    BadParamCount {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

// ---------- resonance features ----------

/// The nine resonance observables acquired per round, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FeatureKind {
    BPeak,
    BTrough,
    ZTheta,
    ZabsTrough,
    ZabsPeak,
    XPeak,
    XTrough,
    R,
    G,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 9] = [
        FeatureKind::BPeak,
        FeatureKind::BTrough,
        FeatureKind::ZTheta,
        FeatureKind::ZabsTrough,
        FeatureKind::ZabsPeak,
        FeatureKind::XPeak,
        FeatureKind::XTrough,
        FeatureKind::R,
        FeatureKind::G,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::BPeak => "B_peak",
            FeatureKind::BTrough => "B_trough",
            FeatureKind::ZTheta => "Z_theta",
            FeatureKind::ZabsTrough => "Zabs_trough",
            FeatureKind::ZabsPeak => "Zabs_peak",
            FeatureKind::XPeak => "X_peak",
            FeatureKind::XTrough => "X_trough",
            FeatureKind::R => "R",
            FeatureKind::G => "G",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureKind> {
        FeatureKind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Observable trace this feature is measured on.
    pub fn observable(self) -> Observable {
        match self {
            FeatureKind::BPeak | FeatureKind::BTrough => Observable::Susceptance,
            FeatureKind::ZTheta => Observable::PhaseDeg,
            FeatureKind::ZabsTrough | FeatureKind::ZabsPeak => Observable::Magnitude,
            FeatureKind::XPeak | FeatureKind::XTrough => Observable::Reactance,
            FeatureKind::R => Observable::Resistance,
            FeatureKind::G => Observable::Conductance,
        }
    }

    /// Whether the feature of interest is a maximum or a minimum of its trace.
    pub fn extremum(self) -> Extremum {
        match self {
            FeatureKind::BTrough | FeatureKind::ZabsTrough | FeatureKind::XTrough => Extremum::Min,
            _ => Extremum::Max,
        }
    }

    /// Number of line-shape descriptors this feature contributes.
    pub fn param_count(self) -> usize {
        match self {
            FeatureKind::G => 4,
            _ => 6,
        }
    }

    fn param_suffixes(self) -> &'static [&'static str] {
        match self {
            FeatureKind::G => &["a", "b", "c", "d"],
            _ => &["a1", "b1", "c1", "a2", "b2", "c2"],
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Extremum sense used by the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

// ---------- acquisition windows ----------

/// Acquisition window for one feature: width, current center, and whether
/// the window follows its tracked feature between rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowConfig {
    pub kind: FeatureKind,
    /// Window width in Hz.
    pub span_hz: f64,
    /// Center frequency in Hz.
    pub center_hz: f64,
    /// False only for the conductance window, which stays fixed so both
    /// tails of the line shape remain inside the sweep.
    pub tracking: bool,
}

impl WindowConfig {
    /// Instrument window for `kind`: spans and initial centers of the nine
    /// acquisition windows used on the real crystal.
    pub fn default_for(kind: FeatureKind) -> WindowConfig {
        let (span_hz, center_hz) = match kind {
            FeatureKind::BPeak => (3_000.0, 10_008_449.0),
            FeatureKind::BTrough => (3_000.0, 10_014_600.0),
            FeatureKind::ZTheta => (5_000.0, 10_011_947.0),
            FeatureKind::ZabsTrough => (5_000.0, 10_008_836.0),
            FeatureKind::ZabsPeak => (5_000.0, 10_015_060.0),
            FeatureKind::XPeak => (5_000.0, 10_009_210.0),
            FeatureKind::XTrough => (5_000.0, 10_015_444.0),
            FeatureKind::R => (3_000.0, 10_012_285.0),
            FeatureKind::G => (50_000.0, 10_011_585.0),
        };
        WindowConfig {
            kind,
            span_hz,
            center_hz,
            tracking: kind != FeatureKind::G,
        }
    }

    pub fn all_defaults() -> Vec<WindowConfig> {
        FeatureKind::ALL.iter().map(|&k| WindowConfig::default_for(k)).collect()
    }

    /// The 1000-point frequency grid spanning this window.
    pub fn grid(&self) -> Vec<f64> {
        let lo = self.center_hz - self.span_hz / 2.0;
        let step = self.span_hz / (POINTS_PER_SWEEP - 1) as f64;
        (0..POINTS_PER_SWEEP).map(|i| lo + step * i as f64).collect()
    }

    /// Same window moved to a new center; fixed windows are returned unchanged.
    pub fn recentered(&self, tracked_hz: f64) -> WindowConfig {
        if self.tracking {
            WindowConfig { center_hz: tracked_hz, ..*self }
        } else {
            *self
        }
    }
}

// ---------- sweeps and observables ----------

/// One windowed complex-impedance acquisition for one resonance feature.
#[derive(Debug, Clone)]
pub struct FrequencySweep {
    pub kind: FeatureKind,
    pub round_index: usize,
    pub timestamp_s: f64,
    pub freq_hz: Vec<f64>,
    pub z_ohm: Vec<Complex64>,
}

impl FrequencySweep {
    pub fn new(
        kind: FeatureKind,
        round_index: usize,
        timestamp_s: f64,
        freq_hz: Vec<f64>,
        z_ohm: Vec<Complex64>,
    ) -> Result<FrequencySweep, SpectraError> {
        if freq_hz.len() != z_ohm.len() {
            return Err(SpectraError::LengthMismatch { freq: freq_hz.len(), z: z_ohm.len() });
        }
        if freq_hz.len() != POINTS_PER_SWEEP {
            return Err(SpectraError::BadSweepLength {
                expected: POINTS_PER_SWEEP,
                got: freq_hz.len(),
            });
        }
        for i in 1..freq_hz.len() {
            if freq_hz[i] <= freq_hz[i - 1] {
                return Err(SpectraError::NonMonotoneGrid(i));
            }
        }
        Ok(FrequencySweep { kind, round_index, timestamp_s, freq_hz, z_ohm })
    }
}

/// Electrical observables derivable from a complex-impedance sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// R = Re Z, in Ohm.
    Resistance,
    /// X = Im Z, in Ohm.
    Reactance,
    /// |Z|, in Ohm.
    Magnitude,
    /// Phase angle atan2(X, R), in degrees.
    PhaseDeg,
    /// G = Re(1/Z), in Siemens.
    Conductance,
    /// B = Im(1/Z), in Siemens.
    Susceptance,
}

/// One real-valued trace derived from a sweep.
#[derive(Debug, Clone)]
pub struct ObservableTrace {
    pub freq_hz: Vec<f64>,
    pub value: Vec<f64>,
}

/// Derive a real observable trace from a sweep, elementwise.
///
/// Admittance-based observables fail with the offending sample index when an
/// impedance sample is exactly zero.
pub fn derive_observables(
    sweep: &FrequencySweep,
    which: Observable,
) -> Result<ObservableTrace, SpectraError> {
    let mut value = Vec::with_capacity(sweep.z_ohm.len());
    for (i, z) in sweep.z_ohm.iter().enumerate() {
        let v = match which {
            Observable::Resistance => z.re,
            Observable::Reactance => z.im,
            Observable::Magnitude => z.norm(),
            Observable::PhaseDeg => z.im.atan2(z.re).to_degrees(),
            Observable::Conductance | Observable::Susceptance => {
                if z.norm_sqr() == 0.0 {
                    return Err(SpectraError::ZeroImpedance(i));
                }
                let y = z.inv();
                if which == Observable::Conductance {
                    y.re
                } else {
                    y.im
                }
            }
        };
        value.push(v);
    }
    Ok(ObservableTrace { freq_hz: sweep.freq_hz.clone(), value })
}

// ---------- frequency normalization ----------

/// Mean/std of the first sweep's frequency grid for one feature kind.
/// All later sweeps of that kind are normalized against these statistics so
/// frequency shifts over time survive as shifts in the fitted centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormStats {
    pub mean_hz: f64,
    pub std_hz: f64,
}

/// Statistics of the reference (first) sweep's frequency grid.
/// Population standard deviation.
pub fn reference_stats(first_sweep: &FrequencySweep) -> Result<NormStats, SpectraError> {
    let mean_hz = crate::stats::mean(&first_sweep.freq_hz);
    let std_hz = crate::stats::pop_std(&first_sweep.freq_hz);
    if std_hz <= 0.0 {
        return Err(SpectraError::ConstantGrid);
    }
    Ok(NormStats { mean_hz, std_hz })
}

/// Map a sweep's frequency grid to dimensionless normalized units
/// `(f − mean)/std`. Observable values are untouched.
pub fn normalize_frequency(sweep: &FrequencySweep, stats: &NormStats) -> Vec<f64> {
    sweep.freq_hz.iter().map(|f| (f - stats.mean_hz) / stats.std_hz).collect()
}

impl NormStats {
    /// Inverse of [`normalize_frequency`] for a single coordinate.
    pub fn denormalize(&self, x: f64) -> f64 {
        x * self.std_hz + self.mean_hz
    }

    pub fn normalize(&self, f_hz: f64) -> f64 {
        (f_hz - self.mean_hz) / self.std_hz
    }
}

// ---------- descriptor matrix ----------

/// The canonical, fixed total order of the 52 descriptor names:
/// `<Kind>.<a1|b1|c1|a2|b2|c2>` for the eight Gaussian-fitted kinds followed
/// by `G.<a|b|c|d>`.
pub fn descriptor_names() -> Vec<String> {
    let mut names = Vec::with_capacity(DESCRIPTOR_COUNT);
    for kind in FeatureKind::ALL {
        for suffix in kind.param_suffixes() {
            names.push(format!("{}.{}", kind.name(), suffix));
        }
    }
    debug_assert_eq!(names.len(), DESCRIPTOR_COUNT);
    names
}

/// N×52 descriptor table with per-row target concentration and timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatrix {
    pub names: Vec<String>,
    /// Row-major N×52.
    pub x: Vec<f64>,
    /// Target glycerol concentration per row, %v/v.
    pub y: Vec<f64>,
    pub timestamps_s: Vec<f64>,
}

impl DescriptorMatrix {
    pub fn new() -> DescriptorMatrix {
        DescriptorMatrix {
            names: descriptor_names(),
            x: Vec::new(),
            y: Vec::new(),
            timestamps_s: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        DESCRIPTOR_COUNT
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * DESCRIPTOR_COUNT..(i + 1) * DESCRIPTOR_COUNT]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.x[i * DESCRIPTOR_COUNT + j]).collect()
    }

    /// Append one assembled round.
    pub fn push_round(
        &mut self,
        fits: &[FitRecord],
        target_pct: f64,
        timestamp_s: f64,
    ) -> Result<(), SpectraError> {
        let row = assemble_round(fits)?;
        self.x.extend_from_slice(&row);
        self.y.push(target_pct);
        self.timestamps_s.push(timestamp_s);
        Ok(())
    }

    /// Copy of the matrix keeping only rows where `keep[i]` is true.
    pub fn filtered(&self, keep: &[bool]) -> DescriptorMatrix {
        assert_eq!(keep.len(), self.n_rows());
        let mut out = DescriptorMatrix::new();
        for i in 0..self.n_rows() {
            if keep[i] {
                out.x.extend_from_slice(self.row(i));
                out.y.push(self.y[i]);
                out.timestamps_s.push(self.timestamps_s[i]);
            }
        }
        out
    }
}

impl Default for DescriptorMatrix {
    fn default() -> Self {
        Self::new()
    }
}

/// Flatten one round's nine fit records into a 52-value row in canonical
/// name order. Requires exactly one record per feature kind.
pub fn assemble_round(fits: &[FitRecord]) -> Result<[f64; DESCRIPTOR_COUNT], SpectraError> {
    let mut by_kind: [Option<&FitRecord>; 9] = [None; 9];
    let mut dupes = Vec::new();
    for rec in fits {
        let slot = FeatureKind::ALL.iter().position(|&k| k == rec.kind).unwrap();
        if by_kind[slot].is_some() {
            dupes.push(rec.kind.name());
        }
        by_kind[slot] = Some(rec);
    }
    if !dupes.is_empty() {
        return Err(SpectraError::DuplicateKinds(dupes));
    }
    let missing: Vec<&'static str> = FeatureKind::ALL
        .iter()
        .enumerate()
        .filter(|(i, _)| by_kind[*i].is_none())
        .map(|(_, k)| k.name())
        .collect();
    if !missing.is_empty() {
        return Err(SpectraError::MissingKinds(missing));
    }
    let mut row = [0.0; DESCRIPTOR_COUNT];
    let mut at = 0;
    for (slot, kind) in FeatureKind::ALL.iter().enumerate() {
        let rec = by_kind[slot].unwrap();
        let params = rec.params.values();
        let expected = kind.param_count();
        let matches_kind = match (&rec.params, kind) {
            (FitParams::Lorentz(_), FeatureKind::G) => true,
            (FitParams::Gauss2(_), k) => *k != FeatureKind::G,
            _ => false,
        };
        if params.len() != expected || !matches_kind {
            return Err(SpectraError::BadParamCount {
                kind: kind.name(),
                expected,
                got: params.len(),
            });
        }
        row[at..at + expected].copy_from_slice(&params);
        at += expected;
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::{GaussianPair, LorentzQuad};

    fn test_sweep(freq: Vec<f64>, z: Vec<Complex64>) -> FrequencySweep {
        FrequencySweep { kind: FeatureKind::G, round_index: 0, timestamp_s: 0.0, freq_hz: freq, z_ohm: z }
    }

    fn grid_sweep() -> FrequencySweep {
        let freq: Vec<f64> = (0..POINTS_PER_SWEEP).map(|i| 1.0e7 + i as f64).collect();
        let z = vec![Complex64::new(3.0, 4.0); POINTS_PER_SWEEP];
        test_sweep(freq, z)
    }

    #[test]
    fn observables_match_exact_arithmetic() {
        let sweep = grid_sweep();
        let mag = derive_observables(&sweep, Observable::Magnitude).unwrap();
        let theta = derive_observables(&sweep, Observable::PhaseDeg).unwrap();
        let g = derive_observables(&sweep, Observable::Conductance).unwrap();
        let b = derive_observables(&sweep, Observable::Susceptance).unwrap();
        assert!((mag.value[0] - 5.0).abs() < 1e-12);
        assert!((theta.value[0] - 53.13010235415598).abs() < 1e-9);
        assert!((g.value[0] - 0.12).abs() < 1e-12);
        assert!((b.value[0] + 0.16).abs() < 1e-12);
    }

    #[test]
    fn purely_real_impedance_has_zero_phase_and_susceptance() {
        let mut sweep = grid_sweep();
        sweep.z_ohm = vec![Complex64::new(7.5, 0.0); POINTS_PER_SWEEP];
        let x = derive_observables(&sweep, Observable::Reactance).unwrap();
        let b = derive_observables(&sweep, Observable::Susceptance).unwrap();
        let theta = derive_observables(&sweep, Observable::PhaseDeg).unwrap();
        assert!(x.value.iter().all(|&v| v == 0.0));
        assert!(b.value.iter().all(|&v| v == 0.0));
        assert!(theta.value.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_impedance_sample_is_reported_by_index() {
        let mut sweep = grid_sweep();
        sweep.z_ohm[17] = Complex64::new(0.0, 0.0);
        match derive_observables(&sweep, Observable::Conductance) {
            Err(SpectraError::ZeroImpedance(17)) => {}
            other => panic!("expected ZeroImpedance(17), got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn admittance_impedance_consistency() {
        // G + iB == 1/(R + iX) at every sample
        let freq: Vec<f64> = (0..POINTS_PER_SWEEP).map(|i| 1.0e7 + i as f64).collect();
        let z: Vec<Complex64> = (0..POINTS_PER_SWEEP)
            .map(|i| Complex64::new(1.0 + (i as f64 * 0.37).sin().abs(), (i as f64 * 0.11).cos()))
            .collect();
        let sweep = test_sweep(freq, z.clone());
        let g = derive_observables(&sweep, Observable::Conductance).unwrap();
        let b = derive_observables(&sweep, Observable::Susceptance).unwrap();
        for i in 0..POINTS_PER_SWEEP {
            let y = Complex64::new(g.value[i], b.value[i]);
            let back = y.inv();
            assert!((back - z[i]).norm() / z[i].norm() < 1e-12);
        }
    }

    #[test]
    fn reference_stats_small_grid_values() {
        // mean 2, population std sqrt(2/3) for {1,2,3}
        let m = crate::stats::mean(&[1.0, 2.0, 3.0]);
        let s = crate::stats::pop_std(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15);
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn self_normalization_gives_zero_mean_unit_std() {
        let sweep = grid_sweep();
        let stats = reference_stats(&sweep).unwrap();
        let norm = normalize_frequency(&sweep, &stats);
        assert!(crate::stats::mean(&norm).abs() < 1e-9);
        assert!((crate::stats::pop_std(&norm) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rigid_shift_appears_as_mean_over_std() {
        let sweep = grid_sweep();
        let stats = reference_stats(&sweep).unwrap();
        let mut shifted = sweep.clone();
        for f in &mut shifted.freq_hz {
            *f += 10.0;
        }
        let norm = normalize_frequency(&shifted, &stats);
        let expect = 10.0 / stats.std_hz;
        assert!((crate::stats::mean(&norm) - expect).abs() < 1e-9);
    }

    #[test]
    fn normalization_is_affine_invertible() {
        let sweep = grid_sweep();
        let stats = reference_stats(&sweep).unwrap();
        let norm = normalize_frequency(&sweep, &stats);
        for (x, f) in norm.iter().zip(&sweep.freq_hz) {
            assert!((stats.denormalize(*x) - f).abs() < 1e-6);
        }
    }

    #[test]
    fn window_defaults_match_acquisition_table() {
        let w = WindowConfig::default_for(FeatureKind::BPeak);
        assert_eq!(w.span_hz, 3_000.0);
        assert_eq!(w.center_hz, 10_008_449.0);
        assert!(w.tracking);
        let g = WindowConfig::default_for(FeatureKind::G);
        assert_eq!(g.span_hz, 50_000.0);
        assert_eq!(g.center_hz, 10_011_585.0);
        assert!(!g.tracking);
        assert_eq!(FeatureKind::ALL.len(), 9);
    }

    #[test]
    fn descriptor_names_are_unique_ordered_and_52() {
        let names = descriptor_names();
        assert_eq!(names.len(), 52);
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 52);
        assert_eq!(names[0], "B_peak.a1");
        assert_eq!(names[48], "G.a");
        assert_eq!(names[51], "G.d");
    }

    fn fits_for_round() -> Vec<FitRecord> {
        let mut fits = Vec::new();
        for kind in FeatureKind::ALL {
            let params = if kind == FeatureKind::G {
                FitParams::Lorentz(LorentzQuad { a: 1.0, b: 0.0, c: 1.0, d: 0.0 })
            } else {
                FitParams::Gauss2(GaussianPair {
                    a1: 2.0,
                    b1: 0.0,
                    c1: 1.0,
                    a2: 1.0,
                    b2: 0.5,
                    c2: 0.7,
                })
            };
            fits.push(FitRecord {
                kind,
                round_index: 0,
                params,
                r2: 0.999,
                bounded: false,
                active_bounds: Vec::new(),
            });
        }
        fits
    }

    #[test]
    fn assemble_round_produces_finite_row_in_order() {
        let fits = fits_for_round();
        let row = assemble_round(&fits).unwrap();
        assert!(row.iter().all(|v| v.is_finite()));
        // G block is the last four entries
        assert_eq!(&row[48..], &[1.0, 0.0, 1.0, 0.0]);
        // assembling twice yields identical rows
        assert_eq!(row, assemble_round(&fits).unwrap());
    }

    #[test]
    fn assemble_round_rejects_missing_and_duplicate_kinds() {
        let mut fits = fits_for_round();
        let g = fits.pop().unwrap();
        match assemble_round(&fits) {
            Err(SpectraError::MissingKinds(k)) => assert_eq!(k, vec!["G"]),
            other => panic!("expected MissingKinds, got {:?}", other.map(|_| ())),
        }
        fits.push(g.clone());
        fits.push(g);
        match assemble_round(&fits) {
            Err(SpectraError::DuplicateKinds(k)) => assert_eq!(k, vec!["G"]),
            other => panic!("expected DuplicateKinds, got {:?}", other.map(|_| ())),
        }
    }
}
