//! Refinement study of the distance between the auxiliary-variable scheme
//! and the convolution solver.

use std::io::Write;

use serde::Serialize;

use crate::ade_solver::{assemble_system, Forcing, InitialData, SolverConfig, SteppingOperator};
use crate::conv_oracle::{Acceleration, ConvError, ConvSolver};
use crate::discretization::DiscreteOps;
use crate::material::MaterialLaw;
use crate::permeability::PermeabilitySeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareLevel {
    pub dt: f64,
    /// Max over time of the weighted L² distance in `(v, p)`.
    pub max_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub levels: Vec<CompareLevel>,
    /// `log(gap_k / gap_{k+1}) / log(dt_k / dt_{k+1})`.
    pub orders: Vec<f64>,
    /// Smallest of `orders`.
    pub observed_order: f64,
    /// Gap on the finest level.
    pub max_diff: f64,
}

impl CompareReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["level", "dt", "max_diff", "order"])?;
        for (k, l) in self.levels.iter().enumerate() {
            let order = if k == 0 {
                String::new()
            } else {
                self.orders[k - 1].to_string()
            };
            w.write_record([k.to_string(), l.dt.to_string(), l.max_diff.to_string(), order])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs both solvers with step `cfg.dt` and returns the largest gap.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_gap(
    law: &MaterialLaw,
    series: &PermeabilitySeries,
    ops: &DiscreteOps,
    cfg: &SolverConfig,
    initial: &dyn Fn(&SteppingOperator) -> InitialData,
    forcing: &dyn Forcing,
    acceleration: Acceleration,
    blowup: f64,
) -> Result<f64, ConvError> {
    let ade = assemble_system(law, ops, cfg)?;
    let init = initial(&ade);
    let mut states = Vec::with_capacity(cfg.n_steps());
    ade.run_observed(&init, forcing, &[], None, |_, _, u| {
        states.push((u.v.clone(), u.p.clone()))
    })?;
    let conv = ConvSolver::with_acceleration(law, series, ops, cfg, blowup, acceleration)?;
    let mut gap: f64 = 0.0;
    conv.run_observed(&init, forcing, &[], |n, _, c| {
        let (v, p) = &states[n - 1];
        let dv: Vec<f64> = v.iter().zip(&c.v).map(|(a, b)| a - b).collect();
        let dp: Vec<f64> = p.iter().zip(&c.p).map(|(a, b)| a - b).collect();
        gap = gap.max((ops.velocity.inner(&dv, &dv) + ops.pressure.inner(&dp, &dp)).sqrt());
    })?;
    Ok(gap)
}

/// Gap at every step size in `dts` with observed orders.
#[allow(clippy::too_many_arguments)]
pub fn compare_study(
    law: &MaterialLaw,
    series: &PermeabilitySeries,
    ops: &DiscreteOps,
    base: &SolverConfig,
    dts: &[f64],
    initial: &dyn Fn(&SteppingOperator) -> InitialData,
    forcing: &dyn Forcing,
    acceleration: Acceleration,
    blowup: f64,
) -> Result<CompareReport, ConvError> {
    let mut levels = Vec::with_capacity(dts.len());
    for &dt in dts {
        let cfg = SolverConfig { dt, ..*base };
        let max_diff = trajectory_gap(law, series, ops, &cfg, initial, forcing, acceleration, blowup)?;
        levels.push(CompareLevel { dt, max_diff });
    }
    let orders: Vec<f64> = levels
        .windows(2)
        .map(|w| (w[0].max_diff / w[1].max_diff).ln() / (w[0].dt / w[1].dt).ln())
        .collect();
    Ok(CompareReport {
        observed_order: orders.iter().copied().fold(f64::INFINITY, f64::min),
        max_diff: levels.last().map_or(f64::NAN, |l| l.max_diff),
        orders,
        levels,
    })
}
