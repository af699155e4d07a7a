//! Frequency response of the auxiliary equations.
//!
//! Each term is driven by `g(t) = sin(ω t)` until the transient has decayed,
//! then `Ψ = Σ_j Ψ_j` is least-squares fitted by `a sin(ω t) + b cos(ω t)`
//! over whole periods. The complex amplitude `a + i b` is compared with
//! `Â(ω)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::ade_solver::AdeFilter;
use crate::permeability::PermeabilitySeries;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("omega * dt = {product:.3e} exceeds {limit} at omega = {omega}")]
    Resolution { omega: f64, product: f64, limit: f64 },
    #[error("frequency must be finite and non-negative, got {0}")]
    InvalidFrequency(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Largest admissible `ω dt`.
pub const RESOLUTION_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferOptions {
    /// Fixed step; when absent each frequency uses `dt = omega_dt / ω`.
    pub dt: Option<f64>,
    pub omega_dt: f64,
    pub theta: f64,
    /// Settling horizon in units of the largest relaxation time.
    pub settle: f64,
    /// Periods used for the amplitude fit.
    pub periods: usize,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            dt: None,
            omega_dt: 0.05,
            theta: 0.5,
            settle: 30.0,
            periods: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferRow {
    pub omega: f64,
    pub measured: Complex64,
    pub expected: Complex64,
    pub rel_err: f64,
}

/// Response of every term of `series` to the same input.
fn simulate(
    series: &PermeabilitySeries,
    theta: f64,
    dt: f64,
    n_steps: usize,
    g: impl Fn(f64) -> f64,
    mut record: impl FnMut(f64, f64),
) {
    let filters: Vec<AdeFilter> = (0..series.len())
        .map(|j| AdeFilter::for_term(series, j, theta, dt))
        .collect();
    let mut psi = vec![0.0; filters.len()];
    let mut g_n = g(0.0);
    for n in 0..n_steps {
        let t = (n + 1) as f64 * dt;
        let g_np1 = g(t);
        for (p, f) in psi.iter_mut().zip(&filters) {
            *p = f.step(*p, g_n, g_np1);
        }
        g_n = g_np1;
        record(t, psi.iter().sum());
    }
}

/// Measured complex amplitude of `Ψ` under `sin(ω t)` forcing.
pub fn measure_response(
    series: &PermeabilitySeries,
    omega: f64,
    opts: &TransferOptions,
) -> Result<Complex64, TransferError> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(TransferError::InvalidFrequency(omega));
    }
    let c_max = series.max_relaxation_time();
    let c_min = series.terms()[0].c;
    if omega == 0.0 {
        let dt = opts.dt.unwrap_or(c_min / 20.0);
        let n = (opts.settle * c_max / dt).ceil() as usize;
        let mut last = 0.0;
        simulate(series, opts.theta, dt, n, |_| 1.0, |_, psi| last = psi);
        return Ok(Complex64::new(last, 0.0));
    }
    let dt = match opts.dt {
        Some(dt) => {
            if omega * dt > RESOLUTION_LIMIT {
                return Err(TransferError::Resolution {
                    omega,
                    product: omega * dt,
                    limit: RESOLUTION_LIMIT,
                });
            }
            dt
        }
        None => opts.omega_dt / omega,
    };
    let period = 2.0 * PI / omega;
    let settle = (opts.settle * c_max).max(2.0 * period);
    let n_settle = (settle / dt).ceil() as usize;
    let n_fit = (opts.periods as f64 * period / dt).round() as usize;
    let mut normal = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    let mut n = 0usize;
    simulate(
        series,
        opts.theta,
        dt,
        n_settle + n_fit,
        |t| (omega * t).sin(),
        |t, psi| {
            n += 1;
            if n > n_settle {
                let row = Vector2::new((omega * t).sin(), (omega * t).cos());
                normal += row * row.transpose();
                rhs += row * psi;
            }
        },
    );
    let ab = normal
        .lu()
        .solve(&rhs)
        .expect("sine and cosine are independent over whole periods");
    Ok(Complex64::new(ab[0], ab[1]))
}

/// One row per frequency comparing the measured response with `Â(ω)`.
pub fn transfer_study(
    series: &PermeabilitySeries,
    omegas: &[f64],
    opts: &TransferOptions,
) -> Result<Vec<TransferRow>, TransferError> {
    omegas
        .iter()
        .map(|&omega| {
            let measured = measure_response(series, omega, opts)?;
            let expected = series.eval_hat(omega);
            Ok(TransferRow {
                omega,
                measured,
                expected,
                rel_err: (measured - expected).norm() / expected.norm(),
            })
        })
        .collect()
}

pub fn write_transfer_csv<W: Write>(rows: &[TransferRow], writer: W) -> Result<(), TransferError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["omega", "measured_re", "measured_im", "expected_re", "expected_im", "rel_err"])?;
    for r in rows {
        w.write_record(
            [r.omega, r.measured.re, r.measured.im, r.expected.re, r.expected.im, r.rel_err]
                .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}
