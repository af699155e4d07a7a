//! Rational dynamic-permeability series.
//!
//! The frequency response is
//!
//! ```text
//! Â(ω) = (η_k / F) · Σ_j d_j / (1 + iωc_j)
//! ```
//!
//! with relaxation times `c_j > 0` and weights `d_j > 0`. All transforms in
//! this crate use `û(ω) = ∫ u(t) e^{-iωt} dt`, so `∂_t ↔ iω` and
//! `∂_t² ↔ -ω²`. Under that convention the causal kernel
//! `e^{-t/c} H(t) / c` transforms to `1 / (1 + iωc)` and
//!
//! ```text
//! A(t) = (η_k / F) · Σ_j (d_j / c_j) · e^{-t/c_j},   t ≥ 0.
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::material::MaterialParams;

#[derive(Debug, Error)]
pub enum PermeabilityError {
    #[error("invalid permeability series: {0}")]
    InvalidSeries(String),
    #[error("kernel evaluated at negative time t = {0}")]
    NegativeTime(f64),
    #[error("need at least {needed} samples for {terms} terms, got {got}")]
    InsufficientSamples {
        needed: usize,
        got: usize,
        terms: usize,
    },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("pole relocation did not converge after {iterations} iterations (last move {last_move:e})")]
    FitDiverged { iterations: usize, last_move: f64 },
    #[error("fitted constants are not strictly positive: c = {c:?}, d = {d:?}")]
    PositivityViolated { c: Vec<f64>, d: Vec<f64> },
    #[error("least-squares solve failed: {0}")]
    LinearAlgebra(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One rational term `d / (1 + iωc)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub c: f64,
    pub d: f64,
}

/// Fitted constants `{c_j, d_j}` together with the prefactor `η_k / F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermeabilitySeries {
    eta_k: f64,
    #[serde(rename = "F")]
    formation_factor: f64,
    terms: Vec<Term>,
}

impl PermeabilitySeries {
    /// Validates the constants and sorts the terms by ascending `c`.
    pub fn new(
        eta_k: f64,
        formation_factor: f64,
        terms: Vec<Term>,
    ) -> Result<Self, PermeabilityError> {
        let series = Self {
            eta_k,
            formation_factor,
            terms,
        };
        series.validate()?;
        Ok(series.canonical())
    }

    /// Derives `η_k = η/ρ_f` and `F = α_∞/φ` from the material parameters.
    pub fn from_material(
        params: &MaterialParams,
        terms: Vec<Term>,
    ) -> Result<Self, PermeabilityError> {
        Self::new(params.eta_k(), params.formation_factor(), terms)
    }

    /// Series with no terms: the memory-free (standard dynamic Biot) limit.
    /// Only the solvers accept it; evaluation returns zero.
    pub fn memoryless(eta_k: f64, formation_factor: f64) -> Self {
        Self {
            eta_k,
            formation_factor,
            terms: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), PermeabilityError> {
        if !(self.eta_k.is_finite() && self.eta_k > 0.0) {
            return Err(PermeabilityError::InvalidSeries(format!(
                "eta_k must be positive, got {}",
                self.eta_k
            )));
        }
        if !(self.formation_factor.is_finite() && self.formation_factor >= 1.0) {
            return Err(PermeabilityError::InvalidSeries(format!(
                "formation factor must be >= 1, got {}",
                self.formation_factor
            )));
        }
        if self.terms.is_empty() {
            return Err(PermeabilityError::InvalidSeries(
                "at least one term is required".into(),
            ));
        }
        for (j, t) in self.terms.iter().enumerate() {
            if !(t.c.is_finite() && t.c > 0.0 && t.d.is_finite() && t.d > 0.0) {
                return Err(PermeabilityError::InvalidSeries(format!(
                    "term {j}: c and d must be positive, got c = {}, d = {}",
                    t.c, t.d
                )));
            }
        }
        Ok(())
    }

    fn canonical(mut self) -> Self {
        self.terms.sort_by(|a, b| a.c.total_cmp(&b.c));
        self
    }

    pub fn eta_k(&self) -> f64 {
        self.eta_k
    }

    pub fn formation_factor(&self) -> f64 {
        self.formation_factor
    }

    /// `η_k / F`.
    pub fn prefactor(&self) -> f64 {
        self.eta_k / self.formation_factor
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest relaxation time, or zero for an empty series.
    pub fn max_relaxation_time(&self) -> f64 {
        self.terms.iter().map(|t| t.c).fold(0.0, f64::max)
    }

    /// Terms whose relaxation time is not below `phi_max`, the principal
    /// viscous relaxation time. The bound is advisory; nothing rejects a
    /// series on its account.
    pub fn relaxation_bound_violations(&self, phi_max: f64) -> Vec<usize> {
        self.terms
            .iter()
            .enumerate()
            .filter(|(_, t)| t.c >= phi_max)
            .map(|(j, _)| j)
            .collect()
    }

    /// `Â(ω)` at a real angular frequency.
    pub fn eval_hat(&self, omega: f64) -> Complex64 {
        self.eval_hat_complex(Complex64::new(omega, 0.0))
    }

    /// `Â` continued to a complex frequency argument.
    pub fn eval_hat_complex(&self, omega: Complex64) -> Complex64 {
        let i = Complex64::i();
        let sum: Complex64 = self
            .terms
            .iter()
            .map(|t| t.d / (1.0 + i * omega * t.c))
            .sum();
        sum * self.prefactor()
    }

    /// Time-domain kernel `A(t)`; rejects `t < 0`.
    pub fn kernel(&self, t: f64) -> Result<f64, PermeabilityError> {
        if t < 0.0 || t.is_nan() {
            return Err(PermeabilityError::NegativeTime(t));
        }
        Ok(self.kernel_unchecked(t))
    }

    pub(crate) fn kernel_unchecked(&self, t: f64) -> f64 {
        self.prefactor()
            * self
                .terms
                .iter()
                .map(|term| term.d / term.c * (-t / term.c).exp())
                .sum::<f64>()
    }

    /// `∫₀ᵗ A(t - s) ds`, the response to a unit step.
    pub fn step_response(&self, t: f64) -> f64 {
        self.prefactor()
            * self
                .terms
                .iter()
                .map(|term| term.d * (1.0 - (-t / term.c).exp()))
                .sum::<f64>()
    }

    pub fn to_json(&self) -> Result<String, PermeabilityError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a series document `{eta_k, F, terms: [{c, d}]}`.
    pub fn from_json(text: &str) -> Result<Self, PermeabilityError> {
        let raw: PermeabilitySeries = serde_json::from_str(text)?;
        Self::new(raw.eta_k, raw.formation_factor, raw.terms)
    }

    /// Samples `Â` at the given frequencies.
    pub fn sample(&self, omegas: &[f64]) -> Vec<FrequencySample> {
        omegas
            .iter()
            .map(|&omega| FrequencySample {
                omega,
                value: self.eval_hat(omega),
            })
            .collect()
    }
}

/// A measured (or synthesised) value of `Â(ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencySample {
    pub omega: f64,
    pub value: Complex64,
}

impl FrequencySample {
    pub fn new(omega: f64, value: Complex64) -> Result<Self, PermeabilityError> {
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(PermeabilityError::InvalidSample(format!(
                "omega must be finite and non-negative, got {omega}"
            )));
        }
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(PermeabilityError::InvalidSample(format!(
                "value at omega = {omega} is not finite"
            )));
        }
        Ok(Self { omega, value })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    omega: f64,
    re: f64,
    im: f64,
}

/// Reads samples from CSV with header `omega,re,im`.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<FrequencySample>, PermeabilityError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["omega", "re", "im"] {
        return Err(PermeabilityError::InvalidSample(format!(
            "expected header `omega,re,im`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize::<SampleRow>()
        .map(|row| {
            let row = row?;
            FrequencySample::new(row.omega, Complex64::new(row.re, row.im))
        })
        .collect()
}

pub fn read_samples_file(path: &Path) -> Result<Vec<FrequencySample>, PermeabilityError> {
    read_samples_csv(std::fs::File::open(path)?)
}

pub fn write_samples_csv<W: Write>(
    writer: W,
    samples: &[FrequencySample],
) -> Result<(), PermeabilityError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for s in samples {
        wtr.serialize(SampleRow {
            omega: s.omega,
            re: s.value.re,
            im: s.value.im,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Knobs for [`fit_series`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// `η_k` of the returned series.
    pub eta_k: f64,
    /// Formation factor `F` of the returned series.
    pub formation_factor: f64,
    /// Pins `Â(0)` to this value when set.
    pub static_limit: Option<f64>,
    pub max_iterations: usize,
    /// Relative pole movement below which relocation stops.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            eta_k: 1.0,
            formation_factor: 1.0,
            static_limit: None,
            max_iterations: 200,
            tolerance: 1e-12,
        }
    }
}

/// Output of [`fit_series`].
#[derive(Debug, Clone)]
pub struct FitReport {
    pub series: PermeabilitySeries,
    /// `‖fit - data‖₂ / ‖data‖₂` over the samples.
    pub residual: f64,
    pub iterations: usize,
}

/// Fits an `n`-term series to frequency samples.
///
/// Poles `-1/c_j` start log-spaced over the sampled band and are relocated
/// by vector fitting restricted to real poles: each sweep solves the linear
/// least-squares problem for the weighting function `σ(s)` and moves the
/// poles to its zeros. Weights then follow from one more linear solve with
/// the poles fixed, optionally constrained so that `Â(0)` matches
/// `options.static_limit`.
pub fn fit_series(
    samples: &[FrequencySample],
    n: usize,
    options: &FitOptions,
) -> Result<FitReport, PermeabilityError> {
    if n == 0 {
        return Err(PermeabilityError::InvalidSeries(
            "at least one term is required".into(),
        ));
    }
    if samples.len() < 2 * n {
        return Err(PermeabilityError::InsufficientSamples {
            needed: 2 * n,
            got: samples.len(),
            terms: n,
        });
    }
    let mut omegas: Vec<f64> = samples.iter().map(|s| s.omega).collect();
    omegas.sort_by(f64::total_cmp);
    if omegas.windows(2).any(|w| w[0] == w[1]) {
        return Err(PermeabilityError::InvalidSample(
            "sample frequencies must be distinct".into(),
        ));
    }
    let positive: Vec<f64> = omegas.iter().copied().filter(|&w| w > 0.0).collect();
    let (w_lo, w_hi) = match (positive.first(), positive.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => {
            return Err(PermeabilityError::InsufficientSamples {
                needed: 2 * n,
                got: positive.len(),
                terms: n,
            })
        }
    };

    let mut poles = initial_poles(w_lo, w_hi.max(w_lo * 10.0), n);
    let mut iterations = 0;
    let mut last_move = f64::INFINITY;
    while last_move > options.tolerance {
        if iterations == options.max_iterations {
            return Err(PermeabilityError::FitDiverged {
                iterations,
                last_move,
            });
        }
        let relocated = relocate_poles(samples, &poles)?;
        last_move = poles
            .iter()
            .zip(&relocated)
            .map(|(old, new)| ((new - old) / old).abs())
            .fold(0.0, f64::max);
        poles = relocated;
        iterations += 1;
    }

    let residues = fit_residues(samples, &poles, options.static_limit)?;
    let prefactor = options.eta_k / options.formation_factor;
    let c: Vec<f64> = poles.iter().map(|p| -1.0 / p).collect();
    let d: Vec<f64> = residues
        .iter()
        .zip(&c)
        .map(|(r, c)| r * c / prefactor)
        .collect();
    if c.iter().chain(&d).any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(PermeabilityError::PositivityViolated { c, d });
    }
    let series = PermeabilitySeries::new(
        options.eta_k,
        options.formation_factor,
        c.iter().zip(&d).map(|(&c, &d)| Term { c, d }).collect(),
    )?;

    let (num, den) = samples.iter().fold((0.0, 0.0), |(num, den), s| {
        (
            num + (series.eval_hat(s.omega) - s.value).norm_sqr(),
            den + s.value.norm_sqr(),
        )
    });
    Ok(FitReport {
        series,
        residual: (num / den).sqrt(),
        iterations,
    })
}

fn initial_poles(w_lo: f64, w_hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![-(w_lo * w_hi).sqrt()];
    }
    let (a, b) = (w_lo.ln(), w_hi.ln());
    (0..n)
        .map(|k| -(a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Real and imaginary parts of each complex equation become two real rows.
fn split_rows(rows: &[Vec<Complex64>], rhs: &[Complex64]) -> (DMatrix<f64>, DVector<f64>) {
    let m = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    let mut a = DMatrix::zeros(2 * m, cols);
    let mut b = DVector::zeros(2 * m);
    for (k, (row, r)) in rows.iter().zip(rhs).enumerate() {
        for (j, v) in row.iter().enumerate() {
            a[(2 * k, j)] = v.re;
            a[(2 * k + 1, j)] = v.im;
        }
        b[2 * k] = r.re;
        b[2 * k + 1] = r.im;
    }
    (a, b)
}

/// Least squares with column equilibration, solved by SVD.
fn least_squares(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, PermeabilityError> {
    let scales: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = a;
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }
    let svd = scaled.svd(true, true);
    let y = svd
        .solve(b, 1e-14)
        .map_err(|e| PermeabilityError::LinearAlgebra(e.to_string()))?;
    Ok(DVector::from_iterator(
        y.len(),
        y.iter().zip(&scales).map(|(v, s)| v / s),
    ))
}

fn relocate_poles(samples: &[FrequencySample], poles: &[f64]) -> Result<Vec<f64>, PermeabilityError> {
    let n = poles.len();
    let mut rows = Vec::with_capacity(samples.len());
    let mut rhs = Vec::with_capacity(samples.len());
    for s in samples {
        let iw = Complex64::new(0.0, s.omega);
        let mut row = Vec::with_capacity(2 * n);
        for &p in poles {
            row.push(1.0 / (iw - p));
        }
        for &p in poles {
            row.push(-s.value / (iw - p));
        }
        rows.push(row);
        rhs.push(s.value);
    }
    let (a, b) = split_rows(&rows, &rhs);
    let x = least_squares(a, &b)?;
    let sigma_residues = x.rows(n, n);

    // zeros of σ(s) = 1 + Σ r̃_j/(s - p_j) are eig(diag(p) - 1·r̃ᵀ)
    let mut h = DMatrix::from_diagonal(&DVector::from_column_slice(poles));
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] -= sigma_residues[j];
        }
    }
    let mut zeros: Vec<f64> = h
        .complex_eigenvalues()
        .iter()
        .map(|z| {
            // conjugate pairs split into two distinct stable real poles
            -(z.re.abs() + z.im).abs().max(1e-300)
        })
        .collect();
    zeros.sort_by(|a, b| b.total_cmp(a));
    if zeros.iter().any(|z| !z.is_finite() || *z == 0.0) {
        return Err(PermeabilityError::LinearAlgebra(
            "pole relocation produced a degenerate pole".into(),
        ));
    }
    // keep the ordering of the previous iterate so movement is measurable
    let mut previous: Vec<(usize, f64)> = poles.iter().copied().enumerate().collect();
    previous.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out = vec![0.0; n];
    for ((slot, _), z) in previous.into_iter().zip(zeros) {
        out[slot] = z;
    }
    Ok(out)
}

fn fit_residues(
    samples: &[FrequencySample],
    poles: &[f64],
    static_limit: Option<f64>,
) -> Result<Vec<f64>, PermeabilityError> {
    let basis = |omega: f64| -> Vec<Complex64> {
        let iw = Complex64::new(0.0, omega);
        poles.iter().map(|&p| 1.0 / (iw - p)).collect()
    };
    let rows: Vec<Vec<Complex64>> = samples.iter().map(|s| basis(s.omega)).collect();
    let rhs: Vec<Complex64> = samples.iter().map(|s| s.value).collect();
    let (a, b) = split_rows(&rows, &rhs);

    match static_limit {
        None => Ok(least_squares(a, &b)?.iter().copied().collect()),
        Some(target) => {
            // Â(0) = Σ r_j / (-p_j): eliminate the unknown with the largest
            // constraint coefficient and solve for the rest.
            let n = poles.len();
            let coeff: Vec<f64> = poles.iter().map(|p| -1.0 / p).collect();
            let k = (0..n)
                .max_by(|&i, &j| coeff[i].abs().total_cmp(&coeff[j].abs()))
                .expect("non-empty pole set");
            if n == 1 {
                return Ok(vec![target / coeff[0]]);
            }
            let free: Vec<usize> = (0..n).filter(|&j| j != k).collect();
            let mut reduced = DMatrix::zeros(a.nrows(), n - 1);
            for (col, &j) in free.iter().enumerate() {
                let adjusted = a.column(j) - a.column(k) * (coeff[j] / coeff[k]);
                reduced.set_column(col, &adjusted);
            }
            let shifted = b - a.column(k) * (target / coeff[k]);
            let y = least_squares(reduced, &shifted)?;
            let mut r = vec![0.0; n];
            for (col, &j) in free.iter().enumerate() {
                r[j] = y[col];
            }
            r[k] = (target - free.iter().map(|&j| coeff[j] * r[j]).sum::<f64>()) / coeff[k];
            Ok(r)
        }
    }
}

/// `n` log-spaced values in `[lo, hi]`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> PermeabilitySeries {
        PermeabilitySeries::new(1.0, 1.0, vec![Term { c: 1.0, d: 1.0 }]).unwrap()
    }

    #[test]
    fn eval_hat_at_zero_and_one() {
        let s = unit();
        let z = s.eval_hat(0.0);
        assert_eq!((z.re, z.im), (1.0, 0.0));
        let one = s.eval_hat(1.0);
        assert!((one.re - 0.5).abs() < 1e-15 && (one.im + 0.5).abs() < 1e-15);
    }

    #[test]
    fn magnitude_decays_at_high_frequency() {
        let s = PermeabilitySeries::new(
            1e-6,
            2.0,
            vec![Term { c: 0.1, d: 0.5 }, Term { c: 2.0, d: 1.5 }],
        )
        .unwrap();
        let mags: Vec<f64> = logspace(1e2, 1e8, 30)
            .into_iter()
            .map(|w| s.eval_hat(w).norm())
            .collect();
        assert!(mags.windows(2).all(|w| w[1] < w[0]));
        assert!(mags.last().unwrap() / mags[0] < 1e-5);
    }

    #[test]
    fn kernel_values() {
        let s = PermeabilitySeries::new(1.0, 1.0, vec![Term { c: 2.0, d: 3.0 }]).unwrap();
        assert_eq!(s.kernel(0.0).unwrap(), 1.5);
        assert!(s.kernel(200.0).unwrap() < 1e-40);
        assert!(matches!(
            s.kernel(-1e-9),
            Err(PermeabilityError::NegativeTime(_))
        ));
    }

    #[test]
    fn rejects_bad_series() {
        assert!(PermeabilitySeries::new(1.0, 1.0, vec![]).is_err());
        assert!(PermeabilitySeries::new(1.0, 0.5, vec![Term { c: 1.0, d: 1.0 }]).is_err());
        assert!(PermeabilitySeries::new(0.0, 1.0, vec![Term { c: 1.0, d: 1.0 }]).is_err());
        assert!(PermeabilitySeries::new(1.0, 1.0, vec![Term { c: -1.0, d: 1.0 }]).is_err());
        assert!(PermeabilitySeries::new(1.0, 1.0, vec![Term { c: 1.0, d: 0.0 }]).is_err());
    }

    #[test]
    fn terms_sorted_by_relaxation_time() {
        let s = PermeabilitySeries::new(
            1.0,
            1.0,
            vec![Term { c: 3.0, d: 1.0 }, Term { c: 0.5, d: 2.0 }],
        )
        .unwrap();
        assert_eq!(s.terms()[0].c, 0.5);
    }

    #[test]
    fn single_sample_is_insufficient() {
        let samples = [FrequencySample::new(0.0, Complex64::new(1.0, 0.0)).unwrap()];
        let err = fit_series(&samples, 1, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, PermeabilityError::InsufficientSamples { .. }));
    }

    #[test]
    fn duplicate_frequencies_rejected() {
        let s = unit();
        let samples = s.sample(&[1.0, 1.0, 2.0]);
        assert!(fit_series(&samples, 1, &FitOptions::default()).is_err());
    }

    #[test]
    fn negative_data_reports_positivity_violation() {
        let s = unit();
        let samples: Vec<_> = s
            .sample(&logspace(0.01, 100.0, 12))
            .into_iter()
            .map(|mut x| {
                x.value = -x.value;
                x
            })
            .collect();
        let err = fit_series(&samples, 1, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, PermeabilityError::PositivityViolated { .. }));
    }

    #[test]
    fn static_limit_is_honoured() {
        let truth = PermeabilitySeries::new(
            1.0,
            1.0,
            vec![Term { c: 0.1, d: 0.5 }, Term { c: 2.0, d: 1.5 }],
        )
        .unwrap();
        let samples = truth.sample(&logspace(0.05, 50.0, 16));
        let opts = FitOptions {
            static_limit: Some(2.0),
            ..FitOptions::default()
        };
        let fit = fit_series(&samples, 2, &opts).unwrap();
        assert!((fit.series.eval_hat(0.0).re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let s = unit();
        let samples = s.sample(&[0.0, 0.5, 3.0]);
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &samples).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("omega,re,im\n"));
        let back = read_samples_csv(buf.as_slice()).unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn csv_requires_header() {
        let err = read_samples_csv("w,re,im\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, PermeabilityError::InvalidSample(_)));
    }

    #[test]
    fn json_document_shape() {
        let s = unit();
        let v: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(v["eta_k"], 1.0);
        assert_eq!(v["F"], 1.0);
        assert_eq!(v["terms"][0]["c"], 1.0);
        assert!(PermeabilitySeries::from_json(r#"{"eta_k":1,"F":1,"terms":[]}"#).is_err());
    }
}
