//! Impedance-resolved QCM analysis library.
//!
//! Converts windowed complex-impedance sweeps of a quartz crystal resonator
//! into line-shape descriptors and runs the full inference chain on top of
//! them:
//!
//! - [`spectra`] — sweep/observable data model, frequency normalization,
//!   descriptor-matrix assembly and CSV formats
//! - [`bvd`] — Butterworth–Van Dyke equivalent-circuit simulator with
//!   sinusoidal loading schedules and flow-derived concentration targets
//! - [`lineshape`] — extremum tracking, constrained two-term-Gaussian and
//!   Lorentzian fitting, percentile bounds, R² quality control
//! - [`outlier`] — LDOF / Isolation Forest / shrinkage-Mahalanobis ensemble
//!   with weighted soft-consensus flagging and elbow selection
//! - [`mrmr`] — mutual-information relevance/redundancy and greedy
//!   minimum-redundancy maximum-relevance ranking
//! - [`regression`] — Lasso, Elastic Net, ε-SVR, random forest and
//!   second-order gradient boosting under leakage-free k-fold
//!   cross-validation with in-fold feature ranking
//! - [`kanazawa`] — classical half-bandwidth baseline: Γ extraction,
//!   Kanazawa–Gordon viscosity inversion, concentration calibration
//!
//! All operations are pure functions over immutable inputs; everything that
//! draws random numbers takes an explicit seed and is bit-reproducible.

pub mod bvd;
pub mod kanazawa;
pub mod lineshape;
pub mod mrmr;
pub mod outlier;
pub mod regression;
pub mod spectra;
pub mod stats;
