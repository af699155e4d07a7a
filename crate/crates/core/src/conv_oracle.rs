//! Reference solver for the original convolution form of the model.
//!
//! The memory term is kept as an explicit history integral
//! `Φ(t) = ∫₀ᵗ A(t-s) g(s) ds` with `g = f - ∇p/ρ_f - ∂_t²u`, evaluated by the
//! composite trapezoidal rule over every stored step. No recursion over the
//! exponential terms is used, so the solver shares nothing with the
//! auxiliary-variable form beyond the spatial operators.
//!
//! Unknowns are `(v, u, p)` on the same staggered grid, with `σ = C Grad₀ u`
//! eliminated. The pressure gradient and force inside `g` are taken at the
//! new level. The acceleration is either the newest backward difference,
//! solved for together with the rest (default), or lagged by one step.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::ade_solver::{
    FieldName, Forcing, InitialData, Probe, SolverConfig, SolverError, Trajectory,
};
use crate::discretization::{DiscreteOps, FieldSpace, Point};
use crate::linalg::{norm2, Sparse, SparseLu};
use crate::material::MaterialLaw;
use crate::permeability::PermeabilitySeries;

#[derive(Debug, Error)]
pub enum ConvError {
    #[error("stability breach at t = {t}: state norm {norm:.3e} exceeds {threshold:.3e}")]
    StabilityBreach { t: f64, norm: f64, threshold: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Samples `g(t_m)` for `m = 0, 1, …` on a uniform step.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    dt: f64,
    samples: Vec<Vec<f64>>,
}

impl HistoryBuffer {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            samples: Vec::new(),
        }
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn push(&mut self, g: Vec<f64>) {
        self.samples.push(g);
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn sample(&self, m: usize) -> &[f64] {
        &self.samples[m]
    }
    /// Composite trapezoidal weights on `t_0, …, t_n`.
    pub fn weights(&self, n: usize) -> Vec<f64> {
        if n == 0 {
            return vec![0.0];
        }
        let mut w = vec![self.dt; n + 1];
        w[0] = 0.5 * self.dt;
        w[n] = 0.5 * self.dt;
        w
    }
}

/// `∫₀^{t_n} A(t_n - s) g(s) ds` by the trapezoidal rule over the first
/// `n + 1` samples.
pub fn conv_eval(kernel: &PermeabilitySeries, history: &HistoryBuffer, n: usize) -> Vec<f64> {
    assert!(n < history.len(), "history holds {} samples, asked for t_{n}", history.len());
    let dt = history.dt();
    let mut out = vec![0.0; history.sample(0).len()];
    for (m, w) in history.weights(n).into_iter().enumerate() {
        let a = w * kernel.kernel_unchecked((n - m) as f64 * dt);
        for (o, g) in out.iter_mut().zip(history.sample(m)) {
            *o += a * g;
        }
    }
    out
}

/// Time level of the acceleration inside the memory operand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acceleration {
    /// `(v^n - v^{n-1})/dt`, explicit.
    Lagged,
    /// `(v^{n+1} - v^n)/dt`, part of the implicit solve.
    #[default]
    Implicit,
}

/// Fields of the convolution solver at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvState {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Memory flux `Φ = A ∗ g` on all faces.
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvOutput {
    pub trajectory: Trajectory,
    pub final_state: ConvState,
}

/// Factored convolution scheme for one material, grid and step size.
#[derive(Debug)]
pub struct ConvSolver {
    ops: DiscreteOps,
    law: MaterialLaw,
    series: PermeabilitySeries,
    cfg: SolverConfig,
    stiffness: Sparse,
    lhs: Sparse,
    lu: SparseLu,
    blowup: f64,
    acceleration: Acceleration,
}

/// Block-diagonal `C_h` mapping strains to Mandel stresses.
fn stiffness_matrix(ops: &DiscreteOps, law: &MaterialLaw) -> Sparse {
    let s = law.compliance();
    let mut t = Vec::new();
    for block in &ops.stress_blocks {
        let k = block.dofs.len();
        let sub = DMatrix::from_fn(k, k, |a, b| s[(block.mandel[a], block.mandel[b])]);
        let c = sub.try_inverse().expect("compliance is positive definite");
        for a in 0..k {
            for b in 0..k {
                t.push((block.dofs[a], block.dofs[b], c[(a, b)]));
            }
        }
    }
    Sparse::from_triplets(ops.stress.len(), ops.stress.len(), &t)
}

impl ConvSolver {
    /// `blowup` is the state-norm threshold that triggers `StabilityBreach`.
    pub fn new(
        law: &MaterialLaw,
        series: &PermeabilitySeries,
        ops: &DiscreteOps,
        cfg: &SolverConfig,
        blowup: f64,
    ) -> Result<Self, ConvError> {
        Self::with_acceleration(law, series, ops, cfg, blowup, Acceleration::default())
    }

    pub fn with_acceleration(
        law: &MaterialLaw,
        series: &PermeabilitySeries,
        ops: &DiscreteOps,
        cfg: &SolverConfig,
        blowup: f64,
        acceleration: Acceleration,
    ) -> Result<Self, ConvError> {
        cfg.validate()?;
        if law.n_terms() != series.len() || law.dim() != ops.dim {
            return Err(SolverError::DimensionMismatch(
                "material law, series and grid disagree".into(),
            )
            .into());
        }
        let (nv, np) = (ops.velocity.len(), ops.pressure.len());
        let (dt, th) = (cfg.dt, cfg.theta);
        let (rho, rho_f, alpha) = (law.rho(), law.rho_f(), law.alpha());
        let a0 = series.kernel_unchecked(0.0);
        let kappa = 0.5 * dt * a0;

        let stiffness = {
            let k = ops.ds.matmul(&stiffness_matrix(ops, law)).matmul(&ops.gv);
            let t: Vec<_> = k.triplets().into_iter().map(|(r, c, v)| (r, c, -v)).collect();
            Sparse::from_triplets(nv, nv, &t)
        };
        let laplace = ops.dv.matmul(&ops.gp);

        // rows: v (weighted), u, p (weighted)
        let (vo, uo, po) = (0, nv, 2 * nv);
        let wv = &ops.velocity.weights;
        let wp = &ops.pressure.weights;
        let implicit = acceleration == Acceleration::Implicit;
        let mut t = Vec::new();
        for k in 0..nv {
            let mass = if implicit { rho - rho_f * kappa / dt } else { rho };
            t.push((vo + k, vo + k, wv[k] * mass / dt));
            t.push((uo + k, uo + k, 1.0));
            t.push((uo + k, vo + k, -th * dt));
        }
        for (r, c, v) in stiffness.triplets() {
            t.push((vo + r, uo + c, wv[r] * th * v));
        }
        for (r, c, v) in ops.gp_v.triplets() {
            t.push((vo + r, po + c, wv[r] * (th * alpha - kappa / dt) * v));
        }
        for k in 0..np {
            t.push((po + k, po + k, wp[k] * law.c0() / dt));
        }
        for (r, c, v) in ops.dv_v.triplets() {
            let coupling = if implicit { alpha - kappa / dt } else { alpha };
            t.push((po + r, vo + c, wp[r] * th * coupling * v));
        }
        for (r, c, v) in laplace.triplets() {
            t.push((po + r, po + c, -wp[r] * th * kappa / rho_f * v));
        }
        let n = 2 * nv + np;
        let lhs = Sparse::from_triplets(n, n, &t);
        let lu = lhs.lu().map_err(|e| SolverError::SingularSystem {
            schur: law.m0_schur_complement(),
            detail: e.to_string(),
        })?;
        Ok(Self {
            ops: ops.clone(),
            law: law.clone(),
            series: series.clone(),
            cfg: *cfg,
            stiffness,
            lhs,
            lu,
            blowup,
            acceleration,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// `σ = C Grad₀ u`.
    pub fn stress(&self, u: &[f64]) -> Vec<f64> {
        stiffness_matrix(&self.ops, &self.law).apply(&self.ops.gv.apply(u))
    }

    /// `½ (ρ‖v‖² + ⟨Sσ, σ⟩ + c₀‖p‖²)`, the memory-free part of the energy.
    pub fn energy(&self, s: &ConvState) -> f64 {
        let ops = &self.ops;
        let ku = self.stiffness.apply(&s.u);
        let elastic = ops.velocity.inner(&ku, &s.u);
        0.5 * (self.law.rho() * ops.velocity.inner(&s.v, &s.v)
            + elastic
            + self.law.c0() * ops.pressure.inner(&s.p, &s.p))
    }

    fn force_on(&self, t: f64, forcing: &dyn Forcing, space: &FieldSpace) -> Vec<f64> {
        space
            .positions
            .iter()
            .zip(&space.component)
            .map(|(x, c)| forcing.body_force(t, *x, *c))
            .collect()
    }

    fn solve(&self, t: f64, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        let scale = norm2(rhs);
        if scale == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        let mut x = self.lu.solve(rhs);
        let mut residual = 0.0;
        for _ in 0..3 {
            let r: Vec<f64> = rhs.iter().zip(self.lhs.apply(&x)).map(|(b, a)| b - a).collect();
            residual = norm2(&r) / scale;
            if residual <= self.cfg.linear_tol {
                return Ok(x);
            }
            let dx = self.lu.solve(&r);
            x.iter_mut().zip(dx).for_each(|(a, d)| *a += d);
        }
        Err(SolverError::LinearSolveFailed { t, residual })
    }

    fn probe_value(&self, probe: &Probe, s: &ConvState) -> f64 {
        let ops = &self.ops;
        match probe {
            Probe::Energy => self.energy(s),
            Probe::Norm { field } => match field {
                FieldName::U => ops.velocity.norm(&s.u),
                FieldName::V => ops.velocity.norm(&s.v),
                FieldName::Sigma => ops.stress.norm(&self.stress(&s.u)),
                FieldName::P => ops.pressure.norm(&s.p),
                FieldName::Psi => ops.flux.norm(&s.phi),
            },
            Probe::Point {
                field,
                at,
                component,
                ..
            } => {
                let (space, values) = match field {
                    FieldName::U => (&ops.velocity, s.u.clone()),
                    FieldName::V => (&ops.velocity, s.v.clone()),
                    FieldName::Sigma => (&ops.stress, self.stress(&s.u)),
                    FieldName::P => (&ops.pressure, s.p.clone()),
                    FieldName::Psi => (&ops.flux, s.phi.clone()),
                };
                let x: Point = [
                    at.first().copied().unwrap_or(0.0),
                    at.get(1).copied().unwrap_or(0.0),
                ];
                (0..space.len())
                    .filter(|&k| space.component[k] == *component)
                    .min_by(|&a, &b| {
                        let d = |k: usize| {
                            (space.positions[k][0] - x[0]).powi(2)
                                + (space.positions[k][1] - x[1]).powi(2)
                        };
                        d(a).total_cmp(&d(b))
                    })
                    .map_or(f64::NAN, |k| values[k])
            }
        }
    }

    pub fn run(
        &self,
        initial: &InitialData,
        forcing: &dyn Forcing,
        probes: &[Probe],
    ) -> Result<ConvOutput, ConvError> {
        self.run_observed(initial, forcing, probes, |_, _, _| {})
    }

    /// Steps over `[0, T]`. Only `v`, `p` and the displacement of `initial`
    /// are used; the memory starts empty.
    pub fn run_observed(
        &self,
        initial: &InitialData,
        forcing: &dyn Forcing,
        probes: &[Probe],
        mut observer: impl FnMut(usize, f64, &ConvState),
    ) -> Result<ConvOutput, ConvError> {
        let ops = &self.ops;
        let (nv, np, nf) = (ops.velocity.len(), ops.pressure.len(), ops.flux.len());
        if initial.state.v.len() != nv || initial.state.p.len() != np || initial.displacement.len() != nv {
            return Err(SolverError::DimensionMismatch("initial data does not match the grid".into()).into());
        }
        let (dt, th) = (self.cfg.dt, self.cfg.theta);
        let steps = self.cfg.n_steps();
        let (rho, rho_f, alpha) = (self.law.rho(), self.law.rho_f(), self.law.alpha());
        let kernel: Vec<f64> = (0..=steps)
            .map(|k| self.series.kernel_unchecked(k as f64 * dt))
            .collect();
        let kappa = 0.5 * dt * kernel[0];
        let implicit = self.acceleration == Acceleration::Implicit;
        let wv = &ops.velocity.weights;
        let wp = &ops.pressure.weights;

        let mut s = ConvState {
            v: initial.state.v.clone(),
            u: initial.displacement.clone(),
            p: initial.state.p.clone(),
            phi: vec![0.0; nf],
        };
        let mut v_prev = s.v.clone();
        let mut history = HistoryBuffer::new(dt);
        let g_of = |t: f64, p: &[f64], acc: &[f64]| -> Vec<f64> {
            let mut g = self.force_on(t, forcing, &ops.flux);
            for (gi, dp) in g.iter_mut().zip(ops.gp.apply(p)) {
                *gi -= dp / rho_f;
            }
            for (k, &f) in ops.velocity_face.iter().enumerate() {
                g[f] -= acc[k];
            }
            g
        };
        history.push(g_of(0.0, &s.p, &vec![0.0; nv]));

        let mut trajectory = Trajectory {
            columns: crate::ade_solver::SteppingOperator::probe_names(probes),
            ..Trajectory::default()
        };
        let mut f_v = self.force_on(0.0, forcing, &ops.velocity);
        for n in 0..steps {
            let t = n as f64 * dt;
            let t1 = t + dt;
            let acc: Vec<f64> = if n == 0 || implicit {
                vec![0.0; nv]
            } else {
                s.v.iter().zip(&v_prev).map(|(a, b)| (a - b) / dt).collect()
            };
            // history part of Φ^{n+1}: all stored samples, weight dt/2 at m = 0
            let mut h = vec![0.0; nf];
            for m in 0..=n {
                let w = if m == 0 { 0.5 * dt } else { dt };
                let a = w * kernel[n + 1 - m];
                for (hi, g) in h.iter_mut().zip(history.sample(m)) {
                    *hi += a * g;
                }
            }
            let f_flux = self.force_on(t1, forcing, &ops.flux);
            let f_v1 = self.force_on(t1, forcing, &ops.velocity);
            // known part of Φ^{n+1}
            let mut phi_known = h;
            for (k, pk) in phi_known.iter_mut().enumerate() {
                *pk += kappa * f_flux[k];
            }
            for (k, &f) in ops.velocity_face.iter().enumerate() {
                phi_known[f] -= kappa * acc[k];
            }

            let ku = self.stiffness.apply(&s.u);
            let gpp = ops.gp_v.apply(&s.p);
            let mut rhs = vec![0.0; 2 * nv + np];
            for k in 0..nv {
                let face = ops.velocity_face[k];
                let explicit = rho / dt * s.v[k] - (1.0 - th) * (ku[k] + alpha * gpp[k])
                    + rho * (th * f_v1[k] + (1.0 - th) * f_v[k])
                    - rho_f / dt * (phi_known[face] - s.phi[face])
                    - if implicit { rho_f * kappa / (dt * dt) * s.v[k] } else { 0.0 };
                rhs[k] = wv[k] * explicit;
                rhs[nv + k] = s.u[k] + (1.0 - th) * dt * s.v[k];
            }
            let divv = ops.dv_v.apply(&s.v);
            let divphi = ops.dv.apply(&s.phi);
            let divknown = ops.dv.apply(&phi_known);
            for k in 0..np {
                let explicit = self.law.c0() / dt * s.p[k]
                    - (1.0 - th) * (alpha * divv[k] + divphi[k])
                    - th * divknown[k]
                    - if implicit { th * kappa / dt * divv[k] } else { 0.0 };
                rhs[2 * nv + k] = wp[k] * explicit;
            }
            let x = self.solve(t1, &rhs)?;
            v_prev = std::mem::replace(&mut s.v, x[..nv].to_vec());
            s.u = x[nv..2 * nv].to_vec();
            s.p = x[2 * nv..].to_vec();
            let acc1: Vec<f64> = if implicit {
                s.v.iter().zip(&v_prev).map(|(a, b)| (a - b) / dt).collect()
            } else {
                acc
            };
            let g1 = g_of(t1, &s.p, &acc1);
            s.phi = phi_known;
            if implicit {
                for (k, &f) in ops.velocity_face.iter().enumerate() {
                    s.phi[f] -= kappa * acc1[k];
                }
            }
            let gpp1 = ops.gp.apply(&s.p);
            for (k, pk) in s.phi.iter_mut().enumerate() {
                *pk -= kappa * gpp1[k] / rho_f;
            }
            history.push(g1);
            f_v = f_v1;

            let norm = (ops.velocity.inner(&s.v, &s.v)
                + ops.velocity.inner(&s.u, &s.u)
                + ops.pressure.inner(&s.p, &s.p))
            .sqrt();
            if !norm.is_finite() || norm > self.blowup {
                return Err(ConvError::StabilityBreach {
                    t: t1,
                    norm,
                    threshold: self.blowup,
                });
            }
            trajectory.times.push(t1);
            trajectory
                .rows
                .push(probes.iter().map(|p| self.probe_value(p, &s)).collect());
            observer(n + 1, t1, &s);
        }
        Ok(ConvOutput {
            trajectory,
            final_state: s,
        })
    }
}

/// Convenience wrapper: build the solver and run it.
#[allow(clippy::too_many_arguments)]
pub fn run_convolution(
    law: &MaterialLaw,
    series: &PermeabilitySeries,
    ops: &DiscreteOps,
    cfg: &SolverConfig,
    initial: &InitialData,
    forcing: &dyn Forcing,
    probes: &[Probe],
    blowup: f64,
) -> Result<ConvOutput, ConvError> {
    ConvSolver::new(law, series, ops, cfg, blowup)?.run(initial, forcing, probes)
}
