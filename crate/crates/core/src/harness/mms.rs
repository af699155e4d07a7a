//! Manufactured solutions built from separable trigonometric products.
//!
//! A field is a sum of modes `a · X(x) · Y(y) · T(t)` with every factor of
//! the form `sin(k s + φ)`. Derivatives stay in the same family, so the
//! balancing sources are exact expressions rather than finite differences.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ade_solver::{
    assemble_system, Field, Forcing, InitialData, SolverConfig, SolverError, StateVector,
    SteppingOperator,
};
use crate::discretization::{build_grid, build_ops, DiscreteOps, Point};
use crate::material::{mandel_pairs, MaterialLaw};

/// `sin(freq · s + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub freq: f64,
    pub phase: f64,
}

impl Wave {
    pub const ONE: Wave = Wave {
        freq: 0.0,
        phase: FRAC_PI_2,
    };

    pub fn sin(freq: f64) -> Self {
        Self { freq, phase: 0.0 }
    }
    pub fn cos(freq: f64) -> Self {
        Self {
            freq,
            phase: FRAC_PI_2,
        }
    }
    pub fn eval(&self, s: f64) -> f64 {
        (self.freq * s + self.phase).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub coeff: f64,
    /// Factors in `x`, `y` and `t`.
    pub waves: [Wave; 3],
}

/// Sum of separable modes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Expr(pub Vec<Mode>);

impl Expr {
    pub fn mode(coeff: f64, x: Wave, y: Wave, t: Wave) -> Self {
        Expr(vec![Mode {
            coeff,
            waves: [x, y, t],
        }])
    }

    pub fn eval(&self, x: Point, t: f64) -> f64 {
        self.0
            .iter()
            .map(|m| m.coeff * m.waves[0].eval(x[0]) * m.waves[1].eval(x[1]) * m.waves[2].eval(t))
            .sum()
    }

    /// Derivative along `axis` (0 = x, 1 = y, 2 = t).
    pub fn diff(&self, axis: usize) -> Expr {
        Expr(
            self.0
                .iter()
                .filter(|m| m.waves[axis].freq != 0.0)
                .map(|m| {
                    let mut d = *m;
                    d.coeff *= m.waves[axis].freq;
                    d.waves[axis].phase += FRAC_PI_2;
                    d
                })
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Expr {
        Expr(
            self.0
                .iter()
                .map(|m| Mode {
                    coeff: s * m.coeff,
                    ..*m
                })
                .collect(),
        )
    }

    pub fn plus(mut self, other: &Expr) -> Expr {
        self.0.extend_from_slice(&other.0);
        self
    }
}

/// Closed-form `u`, `p` and `Ψ_j` with the sources that balance them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsCase {
    pub dim: usize,
    /// Displacement components.
    pub u: Vec<Expr>,
    pub p: Expr,
    /// `psi[j][axis]`.
    pub psi: Vec<Vec<Expr>>,
}

impl MmsCase {
    /// Smooth time-dependent case on `[0, L_x] (× [0, L_y])`. `u` and `p`
    /// vanish on the boundary together with their second normal derivatives.
    pub fn smooth(dim: usize, n_terms: usize, extents: &[f64]) -> Self {
        let k: Vec<f64> = extents.iter().map(|l| PI / l).collect();
        let sx = Wave::sin(k[0]);
        let cx = Wave::cos(k[0]);
        let (sy, cy) = if dim == 2 {
            (Wave::sin(k[1]), Wave::cos(k[1]))
        } else {
            (Wave::ONE, Wave::ONE)
        };
        let time = |f: f64, ph: f64| Wave { freq: f, phase: ph };
        let mut u = vec![Expr::mode(0.5, sx, sy, time(2.0, 0.5))];
        if dim == 2 {
            u.push(Expr::mode(0.4, sx, sy, time(1.7, 1.1)));
        }
        let p = Expr::mode(1.0, sx, sy, time(1.5, 1.0));
        let psi = (0..n_terms)
            .map(|j| {
                let a = 0.3 / (j as f64 + 1.0);
                let tj = time(2.5, 0.2 * j as f64);
                let mut v = vec![Expr::mode(a, cx, sy, tj)];
                if dim == 2 {
                    v.push(Expr::mode(0.7 * a, sx, cy, tj));
                }
                v
            })
            .collect();
        Self { dim, u, p, psi }
    }

    /// Same spatial shapes frozen in time.
    pub fn stationary(dim: usize, n_terms: usize, extents: &[f64]) -> Self {
        let mut case = Self::smooth(dim, n_terms, extents);
        let freeze = |e: &mut Expr| e.0.iter_mut().for_each(|m| m.waves[2] = Wave::ONE);
        case.u.iter_mut().for_each(freeze);
        freeze(&mut case.p);
        case.psi.iter_mut().flatten().for_each(freeze);
        case
    }

    pub fn velocity(&self) -> Vec<Expr> {
        self.u.iter().map(|e| e.diff(2)).collect()
    }

    /// Mandel components of `σ = C ε(u)`.
    pub fn stress(&self, law: &MaterialLaw) -> Vec<Expr> {
        let d = self.dim;
        let pairs = mandel_pairs(d);
        let strain: Vec<Expr> = pairs
            .iter()
            .map(|&(a, b)| {
                if a == b {
                    self.u[a].diff(a)
                } else {
                    self.u[a].diff(b).plus(&self.u[b].diff(a)).scale(1.0 / SQRT_2)
                }
            })
            .collect();
        let c = law
            .compliance()
            .clone()
            .try_inverse()
            .expect("compliance is invertible");
        (0..pairs.len())
            .map(|m| {
                (0..pairs.len()).fold(Expr::default(), |acc, n| acc.plus(&strain[n].scale(c[(m, n)])))
            })
            .collect()
    }

    /// Sources for every equation of the first-order system.
    pub fn forcing(&self, law: &MaterialLaw) -> MmsForcing {
        let d = self.dim;
        let v = self.velocity();
        let sigma = self.stress(law);
        let pairs = mandel_pairs(d);
        let component = |a: usize, b: usize| -> Expr {
            let m = pairs
                .iter()
                .position(|&(i, j)| (i, j) == (a.min(b), a.max(b)))
                .expect("valid index pair");
            if a == b {
                sigma[m].clone()
            } else {
                sigma[m].scale(1.0 / SQRT_2)
            }
        };
        let (rho, rho_f, alpha) = (law.rho(), law.rho_f(), law.alpha());
        let velocity = (0..d)
            .map(|a| {
                let mut g = v[a].diff(2).scale(rho).plus(&self.p.diff(a).scale(alpha));
                for psi in &self.psi {
                    g = g.plus(&psi[a].diff(2).scale(rho_f));
                }
                for b in 0..d {
                    g = g.plus(&component(a, b).diff(b).scale(-1.0));
                }
                g
            })
            .collect();
        let mut pressure = self.p.diff(2).scale(law.c0());
        for a in 0..d {
            pressure = pressure.plus(&v[a].diff(a).scale(alpha));
            for psi in &self.psi {
                pressure = pressure.plus(&psi[a].diff(a));
            }
        }
        let flux = self
            .psi
            .iter()
            .enumerate()
            .map(|(j, psi)| {
                (0..d)
                    .map(|a| {
                        v[a].diff(2)
                            .scale(rho_f)
                            .plus(&psi[a].diff(2).scale(law.psi_mass()[j]))
                            .plus(&psi[a].scale(law.psi_damping()[j]))
                            .plus(&self.p.diff(a))
                    })
                    .collect()
            })
            .collect();
        MmsForcing {
            velocity,
            pressure,
            flux,
        }
    }

    /// Exact fields sampled at the unknowns, with stresses taken from the
    /// closed form.
    pub fn exact(&self, law: &MaterialLaw, ops: &DiscreteOps, t: f64) -> (StateVector, Vec<f64>) {
        let v = self.velocity();
        let sigma = self.stress(law);
        let state = StateVector {
            v: ops.velocity.sample(|x, c| v[c].eval(x, t)),
            sigma: ops.stress.sample(|x, c| sigma[c].eval(x, t)),
            p: ops.pressure.sample(|x, _| self.p.eval(x, t)),
            psi: self
                .psi
                .iter()
                .map(|psi| ops.flux.sample(|x, c| psi[c].eval(x, t)))
                .collect(),
        };
        let u = ops.velocity.sample(|x, c| self.u[c].eval(x, t));
        (state, u)
    }
}

/// Balancing sources of an [`MmsCase`]; the stress equation needs none.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsForcing {
    pub velocity: Vec<Expr>,
    pub pressure: Expr,
    pub flux: Vec<Vec<Expr>>,
}

impl Forcing for MmsForcing {
    fn source(&self, t: f64, field: Field, x: Point, component: usize) -> f64 {
        match field {
            Field::Velocity => self.velocity[component].eval(x, t),
            Field::Stress => 0.0,
            Field::Pressure => self.pressure.eval(x, t),
            Field::Flux(j) => self.flux[j][component].eval(x, t),
        }
    }
}

/// Load given as a fixed flat vector.
struct ConstantLoad(Vec<f64>);

impl Forcing for ConstantLoad {
    fn vector(&self, _t: f64) -> Option<Vec<f64>> {
        Some(self.0.clone())
    }
}

/// One level of a refinement ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub cells: Vec<usize>,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub dt: f64,
    pub error: f64,
    /// `None` on the coarsest level.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Builds the table, taking orders against `dt` when it changes between
    /// levels and against `h` otherwise.
    pub fn from_errors(levels: &[(f64, f64, f64)]) -> Self {
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
        for (k, &(h, dt, error)) in levels.iter().enumerate() {
            let order = (k > 0).then(|| {
                let (h0, dt0, e0) = levels[k - 1];
                let ratio = if (dt0 / dt - 1.0).abs() > 1e-12 { dt0 / dt } else { h0 / h };
                (e0 / error).ln() / ratio.ln()
            });
            rows.push(ConvergenceRow {
                level: k,
                h,
                dt,
                error,
                order,
            });
        }
        Self { rows }
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SolverError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["level", "h", "dt", "error", "order"])?;
        for r in &self.rows {
            w.write_record([
                r.level.to_string(),
                r.h.to_string(),
                r.dt.to_string(),
                r.error.to_string(),
                r.order.map_or(String::new(), |o| o.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Weighted `‖U_h(T) − U(T)‖` for one level.
pub fn mms_error(
    case: &MmsCase,
    law: &MaterialLaw,
    extents: &[f64],
    level: &Level,
    theta: f64,
    t_final: f64,
) -> Result<f64, SolverError> {
    let grid = build_grid(case.dim, extents, &level.cells)
        .map_err(|e| SolverError::InvalidConfig(e.to_string()))?;
    let ops = build_ops(&grid);
    let cfg = SolverConfig::new(level.dt, t_final, theta);
    let stepper = assemble_system(law, &ops, &cfg)?;
    let (state, displacement) = case.exact(law, &ops, 0.0);
    let initial = InitialData {
        state,
        displacement,
    };
    let forcing = case.forcing(law);
    let out = stepper.run(&initial, &forcing, &[])?;
    let t_end = cfg.n_steps() as f64 * cfg.dt;
    let (exact, _) = case.exact(law, &ops, t_end);
    Ok(state_distance(&stepper, &out.final_state, &exact))
}

fn state_distance(stepper: &SteppingOperator, a: &StateVector, b: &StateVector) -> f64 {
    let d: Vec<f64> = a
        .to_flat()
        .iter()
        .zip(b.to_flat())
        .map(|(x, y)| x - y)
        .collect();
    stepper.inner(&d, &d).sqrt()
}

/// Runs every level and tabulates errors with observed orders.
pub fn mms_study(
    case: &MmsCase,
    law: &MaterialLaw,
    extents: &[f64],
    levels: &[Level],
    theta: f64,
    t_final: f64,
) -> Result<ConvergenceTable, SolverError> {
    if levels.len() < 3 {
        return Err(SolverError::InvalidConfig(format!(
            "a refinement study needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    let mut errors = Vec::with_capacity(levels.len());
    for level in levels {
        let e = mms_error(case, law, extents, level, theta, t_final)?;
        let h = level
            .cells
            .iter()
            .zip(extents)
            .map(|(n, l)| l / *n as f64)
            .fold(0.0, f64::max);
        errors.push((h, level.dt, e));
    }
    Ok(ConvergenceTable::from_errors(&errors))
}

/// Relative drift of a stationary discrete solution kept in place by the
/// load `G = W⁻¹ (W M₁ + W A) U*`.
pub fn stationary_drift(
    case: &MmsCase,
    law: &MaterialLaw,
    extents: &[f64],
    level: &Level,
    theta: f64,
    n_steps: usize,
) -> Result<f64, SolverError> {
    let grid = build_grid(case.dim, extents, &level.cells)
        .map_err(|e| SolverError::InvalidConfig(e.to_string()))?;
    let ops = build_ops(&grid);
    let cfg = SolverConfig::new(level.dt, level.dt * n_steps as f64, theta);
    let stepper = assemble_system(law, &ops, &cfg)?;
    let (state, displacement) = case.exact(law, &ops, 0.0);
    let x = state.to_flat();
    let w = stepper.weights();
    let load: Vec<f64> = stepper
        .weighted_m1()
        .apply(&x)
        .iter()
        .zip(stepper.weighted_a().apply(&x))
        .zip(w)
        .map(|((m, a), w)| (m + a) / w)
        .collect();
    let initial = InitialData {
        state: state.clone(),
        displacement,
    };
    let out = stepper.run(&initial, &ConstantLoad(load), &[])?;
    Ok(state_distance(&stepper, &out.final_state, &state) / stepper.inner(&x, &x).sqrt())
}
