//! θ-scheme time stepping of `(M₀ ∂_t + M₁ + A) U = G` with one auxiliary
//! flux `Ψ_j` per permeability term.
//!
//! Every row of the discrete system is multiplied by its quadrature weight,
//! which makes the stored `W M₀` and `W M₁` symmetric and `W A` skew. The
//! matrix `L⁺ = W M₀/dt + θ W (M₁ + A)` is factored once per stepper.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::{DiscreteOps, FieldSpace, Point};
use crate::linalg::{norm2, Sparse, SparseLu};
use crate::material::MaterialLaw;
use crate::permeability::PermeabilitySeries;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(
        "singular system: M0 is not positive definite (rho - sum_j rho_f^2/m_j = {schur:.6e}); \
         every term needs c_j F/(d_j eta) > 1/rho. {detail}"
    )]
    SingularSystem { schur: f64, detail: String },
    #[error("linear solve failed at t = {t}: relative residual {residual:.3e}")]
    LinearSolveFailed { t: f64, residual: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("compliance couples normal and shear stress; the 2D staggering stores them apart")]
    UnsupportedAnisotropy,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn default_theta() -> f64 {
    1.0
}
fn default_linear_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_linear_tol")]
    pub linear_tol: f64,
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64, theta: f64) -> Self {
        Self {
            dt,
            t_final,
            theta,
            linear_tol: default_linear_tol(),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt * (1.0 - 1e-12)) {
            return bad(format!("T = {} must be at least dt = {}", self.t_final, self.dt));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0.5, 1], got {}", self.theta));
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            return bad(format!("linear_tol must lie in (0, 1), got {}", self.linear_tol));
        }
        Ok(())
    }

    /// Number of steps covering `[0, T]`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// Offsets of the blocks `(v, σ, p, Ψ_1, …, Ψ_N)` in the flat unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemLayout {
    pub n_velocity: usize,
    pub n_stress: usize,
    pub n_pressure: usize,
    pub n_flux: usize,
    pub n_terms: usize,
}

impl SystemLayout {
    pub fn new(ops: &DiscreteOps, n_terms: usize) -> Self {
        Self {
            n_velocity: ops.velocity.len(),
            n_stress: ops.stress.len(),
            n_pressure: ops.pressure.len(),
            n_flux: ops.flux.len(),
            n_terms,
        }
    }
    pub fn velocity(&self) -> Range<usize> {
        0..self.n_velocity
    }
    pub fn stress(&self) -> Range<usize> {
        let s = self.n_velocity;
        s..s + self.n_stress
    }
    pub fn pressure(&self) -> Range<usize> {
        let s = self.stress().end;
        s..s + self.n_pressure
    }
    pub fn psi(&self, j: usize) -> Range<usize> {
        let s = self.pressure().end + j * self.n_flux;
        s..s + self.n_flux
    }
    pub fn len(&self) -> usize {
        self.pressure().end + self.n_terms * self.n_flux
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unknowns at one time level. Stresses are Mandel components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub v: Vec<f64>,
    pub sigma: Vec<f64>,
    pub p: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
}

impl StateVector {
    pub fn zeros(layout: &SystemLayout) -> Self {
        Self {
            v: vec![0.0; layout.n_velocity],
            sigma: vec![0.0; layout.n_stress],
            p: vec![0.0; layout.n_pressure],
            psi: vec![vec![0.0; layout.n_flux]; layout.n_terms],
        }
    }

    pub fn from_flat(layout: &SystemLayout, x: &[f64]) -> Self {
        Self {
            v: x[layout.velocity()].to_vec(),
            sigma: x[layout.stress()].to_vec(),
            p: x[layout.pressure()].to_vec(),
            psi: (0..layout.n_terms).map(|j| x[layout.psi(j)].to_vec()).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(
            self.v.len() + self.sigma.len() + self.p.len() + self.psi.iter().map(Vec::len).sum::<usize>(),
        );
        x.extend_from_slice(&self.v);
        x.extend_from_slice(&self.sigma);
        x.extend_from_slice(&self.p);
        for psi in &self.psi {
            x.extend_from_slice(psi);
        }
        x
    }

    pub fn matches(&self, layout: &SystemLayout) -> bool {
        self.v.len() == layout.n_velocity
            && self.sigma.len() == layout.n_stress
            && self.p.len() == layout.n_pressure
            && self.psi.len() == layout.n_terms
            && self.psi.iter().all(|p| p.len() == layout.n_flux)
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }
}

/// Equation a source term is added to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Velocity,
    Stress,
    Pressure,
    Flux(usize),
}

/// Right-hand side `G = (ρ f, 0, 0, ρ_f f)` plus optional per-equation
/// sources used by manufactured solutions.
pub trait Forcing {
    /// Body force component `axis` at `x`.
    fn body_force(&self, _t: f64, _x: Point, _axis: usize) -> f64 {
        0.0
    }
    /// Additive source in the equation of `field`; `component` is the
    /// vector axis or Mandel index.
    fn source(&self, _t: f64, _field: Field, _x: Point, _component: usize) -> f64 {
        0.0
    }
    /// A complete load vector in the flat layout, replacing the point-wise
    /// callbacks when present.
    fn vector(&self, _t: f64) -> Option<Vec<f64>> {
        None
    }
}

/// `G ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoForcing;

impl Forcing for NoForcing {}

/// Body force `f(t, x) = amplitude · s(x) · sin(ω t)` (or constant in time
/// when `omega` is zero), with `s ≡ 1` or the lowest Dirichlet mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyForce {
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub profile: Profile,
    /// Domain extents used by the `sine` profile.
    #[serde(default = "unit_extents")]
    pub extents: Vec<f64>,
}

fn unit_extents() -> Vec<f64> {
    vec![1.0, 1.0]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Uniform,
    Sine,
}

impl Forcing for BodyForce {
    fn body_force(&self, t: f64, x: Point, axis: usize) -> f64 {
        let a = self.amplitude.get(axis).copied().unwrap_or(0.0);
        let time = if self.omega == 0.0 {
            1.0
        } else {
            (self.omega * t).sin()
        };
        let space = match self.profile {
            Profile::Uniform => 1.0,
            Profile::Sine => self
                .extents
                .iter()
                .zip(x)
                .map(|(l, xi)| (std::f64::consts::PI * xi / l).sin())
                .product(),
        };
        a * time * space
    }
}

/// Initial data: classical `u₀`, `v₀`, `p₀` with `Ψ(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub state: StateVector,
    pub displacement: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldName {
    U,
    V,
    Sigma,
    P,
    Psi,
}

/// Quantity recorded after every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Probe {
    /// Value at the unknown nearest to `at`.
    Point {
        field: FieldName,
        at: Vec<f64>,
        #[serde(default)]
        component: usize,
        #[serde(default)]
        term: usize,
    },
    /// Weighted L² norm of a field (all terms for `psi`).
    Norm { field: FieldName },
    /// `½ Uᵀ W M₀ U`.
    Energy,
}

impl Probe {
    pub fn defaults() -> Vec<Probe> {
        vec![
            Probe::Energy,
            Probe::Norm { field: FieldName::V },
            Probe::Norm { field: FieldName::Sigma },
            Probe::Norm { field: FieldName::P },
            Probe::Norm { field: FieldName::Psi },
        ]
    }
}

/// Time series of probe values.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
    /// `t,probe1,probe2,…`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SolverError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Finite-horizon analogue of the weighted stability estimate:
/// `Σ e^{-2νt_n} ‖U_n‖² dt` against the same sum for `G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityMonitor {
    pub nu: f64,
    pub state_sum: f64,
    pub load_sum: f64,
}

impl StabilityMonitor {
    pub fn new(nu: f64) -> Self {
        Self {
            nu,
            state_sum: 0.0,
            load_sum: 0.0,
        }
    }
    pub fn observe(&mut self, t: f64, dt: f64, state_norm: f64, load_norm: f64) {
        let e = (-2.0 * self.nu * t).exp() * dt;
        self.state_sum += e * state_norm * state_norm;
        self.load_sum += e * load_norm * load_norm;
    }
    /// `‖U‖_ν / (‖G‖_ν / c_min)`; at most about one when the estimate holds.
    pub fn ratio(&self, c_min: f64) -> f64 {
        let bound = self.load_sum.sqrt() / c_min;
        if bound == 0.0 {
            if self.state_sum == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.state_sum.sqrt() / bound
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub final_state: StateVector,
    pub displacement: Vec<f64>,
    pub monitor: Option<StabilityMonitor>,
}

enum ResolvedProbe {
    Point(FieldName, usize, usize),
    Norm(FieldName),
    Energy,
}

/// Factored θ-scheme for one material, grid and step size.
#[derive(Debug)]
pub struct SteppingOperator {
    layout: SystemLayout,
    ops: DiscreteOps,
    law: MaterialLaw,
    cfg: SolverConfig,
    weights: Vec<f64>,
    m0: Sparse,
    m1: Sparse,
    a: Sparse,
    l_plus: Sparse,
    l_minus: Sparse,
    lu: SparseLu,
}

fn scaled(t: &[(usize, usize, f64)], s: f64) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    t.iter().map(move |&(r, c, v)| (r, c, s * v))
}

/// Assembles and factors `L⁺`; fails with `SingularSystem` when `M₀` is not
/// positive definite.
pub fn assemble_system(
    law: &MaterialLaw,
    ops: &DiscreteOps,
    cfg: &SolverConfig,
) -> Result<SteppingOperator, SolverError> {
    cfg.validate()?;
    if law.dim() != ops.dim {
        return Err(SolverError::DimensionMismatch(format!(
            "material law has dimension {} but the grid has {}",
            law.dim(),
            ops.dim
        )));
    }
    if !law.m0_positive_definite() {
        let detail = law
            .psi_mass()
            .iter()
            .enumerate()
            .map(|(j, m)| {
                format!(
                    "term {}: c F/(d eta) = {:.6e} vs 1/rho = {:.6e}",
                    j + 1,
                    m / (law.rho_f() * law.rho_f()),
                    1.0 / law.rho()
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(SolverError::SingularSystem {
            schur: law.m0_schur_complement(),
            detail,
        });
    }
    let s = law.compliance();
    if ops.dim == 2 {
        let scale = s.amax();
        if s[(0, 2)].abs() > 1e-14 * scale || s[(1, 2)].abs() > 1e-14 * scale {
            return Err(SolverError::UnsupportedAnisotropy);
        }
    }

    let layout = SystemLayout::new(ops, law.n_terms());
    let (vr, sr, pr) = (layout.velocity(), layout.stress(), layout.pressure());
    let mut weights = Vec::with_capacity(layout.len());
    weights.extend_from_slice(&ops.velocity.weights);
    weights.extend_from_slice(&ops.stress.weights);
    weights.extend_from_slice(&ops.pressure.weights);
    for _ in 0..layout.n_terms {
        weights.extend_from_slice(&ops.flux.weights);
    }

    let mut m0 = Vec::new();
    let mut m1 = Vec::new();
    let mut a = Vec::new();
    for (k, w) in ops.velocity.weights.iter().enumerate() {
        m0.push((vr.start + k, vr.start + k, law.rho() * w));
    }
    for block in &ops.stress_blocks {
        let w = ops.stress.weights[block.dofs[0]];
        for (ia, &da) in block.dofs.iter().enumerate() {
            for (ib, &db) in block.dofs.iter().enumerate() {
                let v = s[(block.mandel[ia], block.mandel[ib])];
                if v != 0.0 {
                    m0.push((sr.start + da, sr.start + db, w * v));
                }
            }
        }
    }
    for (k, w) in ops.pressure.weights.iter().enumerate() {
        m0.push((pr.start + k, pr.start + k, law.c0() * w));
    }
    for j in 0..layout.n_terms {
        let fr = layout.psi(j);
        for (f, w) in ops.flux.weights.iter().enumerate() {
            m0.push((fr.start + f, fr.start + f, law.psi_mass()[j] * w));
            m1.push((fr.start + f, fr.start + f, law.psi_damping()[j] * w));
        }
        for (k, &f) in ops.velocity_face.iter().enumerate() {
            let w = ops.velocity.weights[k];
            m0.push((vr.start + k, fr.start + f, law.rho_f() * w));
            m0.push((fr.start + f, vr.start + k, law.rho_f() * w));
        }
    }

    // skew block: rows weighted by the field they belong to
    let wv = &ops.velocity.weights;
    let ws = &ops.stress.weights;
    let wp = &ops.pressure.weights;
    let wf = &ops.flux.weights;
    for (r, c, v) in ops.ds.triplets() {
        a.push((vr.start + r, sr.start + c, -wv[r] * v));
    }
    for (r, c, v) in ops.gp_v.triplets() {
        a.push((vr.start + r, pr.start + c, law.alpha() * wv[r] * v));
    }
    for (r, c, v) in ops.gv.triplets() {
        a.push((sr.start + r, vr.start + c, -ws[r] * v));
    }
    for (r, c, v) in ops.dv_v.triplets() {
        a.push((pr.start + r, vr.start + c, law.alpha() * wp[r] * v));
    }
    for j in 0..layout.n_terms {
        let fr = layout.psi(j);
        for (r, c, v) in ops.dv.triplets() {
            a.push((pr.start + r, fr.start + c, wp[r] * v));
        }
        for (r, c, v) in ops.gp.triplets() {
            a.push((fr.start + r, pr.start + c, wf[r] * v));
        }
    }

    let n = layout.len();
    let (dt, theta) = (cfg.dt, cfg.theta);
    let lp: Vec<_> = scaled(&m0, 1.0 / dt)
        .chain(scaled(&m1, theta))
        .chain(scaled(&a, theta))
        .collect();
    let lm: Vec<_> = scaled(&m0, 1.0 / dt)
        .chain(scaled(&m1, theta - 1.0))
        .chain(scaled(&a, theta - 1.0))
        .collect();
    let l_plus = Sparse::from_triplets(n, n, &lp);
    let lu = l_plus.lu().map_err(|e| SolverError::SingularSystem {
        schur: law.m0_schur_complement(),
        detail: e.to_string(),
    })?;
    Ok(SteppingOperator {
        layout,
        ops: ops.clone(),
        law: law.clone(),
        cfg: *cfg,
        weights,
        m0: Sparse::from_triplets(n, n, &m0),
        m1: Sparse::from_triplets(n, n, &m1),
        a: Sparse::from_triplets(n, n, &a),
        l_plus,
        l_minus: Sparse::from_triplets(n, n, &lm),
        lu,
    })
}

impl SteppingOperator {
    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }
    pub fn ops(&self) -> &DiscreteOps {
        &self.ops
    }
    pub fn law(&self) -> &MaterialLaw {
        &self.law
    }
    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }
    /// Quadrature weight of every unknown.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// `W M₀` (symmetric).
    pub fn weighted_m0(&self) -> &Sparse {
        &self.m0
    }
    /// `W M₁` (symmetric positive semidefinite).
    pub fn weighted_m1(&self) -> &Sparse {
        &self.m1
    }
    /// `W A` (skew-symmetric).
    pub fn weighted_a(&self) -> &Sparse {
        &self.a
    }
    pub fn l_plus(&self) -> &Sparse {
        &self.l_plus
    }
    pub fn l_minus(&self) -> &Sparse {
        &self.l_minus
    }

    /// The spatial operator `A_h = W⁻¹ (W A)`.
    pub fn operator(&self) -> Sparse {
        let t: Vec<_> = self
            .a
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (r, c, v / self.weights[r]))
            .collect();
        Sparse::from_triplets(self.a.nrows(), self.a.ncols(), &t)
    }

    /// `⟨x, y⟩ = Σ w_k x_k y_k`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(x.iter().zip(y))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn energy(&self, u: &StateVector) -> f64 {
        let x = u.to_flat();
        0.5 * x.iter().zip(self.m0.apply(&x)).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Unweighted load vector `G(t)`.
    pub fn load(&self, t: f64, forcing: &dyn Forcing) -> Vec<f64> {
        if let Some(g) = forcing.vector(t) {
            assert_eq!(g.len(), self.layout.len(), "forcing vector has the wrong length");
            return g;
        }
        let ops = &self.ops;
        let mut g = vec![0.0; self.layout.len()];
        let rho = self.law.rho();
        let rho_f = self.law.rho_f();
        let sample = |space: &FieldSpace, field: Field, out: &mut [f64], scale: f64| {
            for (k, (x, c)) in space.positions.iter().zip(&space.component).enumerate() {
                let f = if scale != 0.0 {
                    scale * forcing.body_force(t, *x, *c)
                } else {
                    0.0
                };
                out[k] = f + forcing.source(t, field, *x, *c);
            }
        };
        let l = self.layout;
        sample(&ops.velocity, Field::Velocity, &mut g[l.velocity()], rho);
        sample(&ops.stress, Field::Stress, &mut g[l.stress()], 0.0);
        sample(&ops.pressure, Field::Pressure, &mut g[l.pressure()], 0.0);
        for j in 0..l.n_terms {
            sample(&ops.flux, Field::Flux(j), &mut g[l.psi(j)], rho_f);
        }
        g
    }

    /// `σ = C Grad₀ u` in Mandel components.
    pub fn stress_from_displacement(&self, u: &[f64]) -> Vec<f64> {
        let eps = self.ops.gv.apply(u);
        let mut sigma = vec![0.0; eps.len()];
        let s = self.law.compliance();
        for block in &self.ops.stress_blocks {
            let k = block.dofs.len();
            let sub = DMatrix::from_fn(k, k, |a, b| s[(block.mandel[a], block.mandel[b])]);
            let rhs = nalgebra::DVector::from_iterator(k, block.dofs.iter().map(|&d| eps[d]));
            let x = sub
                .cholesky()
                .expect("compliance is positive definite")
                .solve(&rhs);
            for (a, &d) in block.dofs.iter().enumerate() {
                sigma[d] = x[a];
            }
        }
        sigma
    }

    /// Consistent initial data from `u₀`, `v₀`, `p₀`, with `Ψ(0) = 0`.
    pub fn initial_data(&self, u0: Vec<f64>, v0: Vec<f64>, p0: Vec<f64>) -> InitialData {
        let mut state = StateVector::zeros(&self.layout);
        state.sigma = self.stress_from_displacement(&u0);
        state.v = v0;
        state.p = p0;
        InitialData {
            state,
            displacement: u0,
        }
    }

    fn solve(&self, t: f64, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        let scale = norm2(rhs);
        if scale == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        let mut x = self.lu.solve(rhs);
        let mut residual = 0.0;
        for _ in 0..3 {
            let r: Vec<f64> = rhs
                .iter()
                .zip(self.l_plus.apply(&x))
                .map(|(b, ax)| b - ax)
                .collect();
            residual = norm2(&r) / scale;
            if residual <= self.cfg.linear_tol {
                return Ok(x);
            }
            let dx = self.lu.solve(&r);
            x.iter_mut().zip(dx).for_each(|(a, d)| *a += d);
        }
        Err(SolverError::LinearSolveFailed { t, residual })
    }

    /// One step from `t_n` to `t_n + dt`, given unweighted loads at both ends.
    pub fn step(
        &self,
        t_n: f64,
        u_n: &StateVector,
        g_n: &[f64],
        g_np1: &[f64],
    ) -> Result<StateVector, SolverError> {
        let x = u_n.to_flat();
        let theta = self.cfg.theta;
        let mut rhs = self.l_minus.apply(&x);
        for (k, r) in rhs.iter_mut().enumerate() {
            *r += self.weights[k] * (theta * g_np1[k] + (1.0 - theta) * g_n[k]);
        }
        let x = self.solve(t_n + self.cfg.dt, &rhs)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite {
                t: t_n + self.cfg.dt,
            });
        }
        Ok(StateVector::from_flat(&self.layout, &x))
    }

    fn resolve(&self, probe: &Probe) -> ResolvedProbe {
        match probe {
            Probe::Energy => ResolvedProbe::Energy,
            Probe::Norm { field } => ResolvedProbe::Norm(*field),
            Probe::Point {
                field,
                at,
                component,
                term,
            } => {
                let space = self.space(*field);
                let x = [
                    at.first().copied().unwrap_or(0.0),
                    at.get(1).copied().unwrap_or(0.0),
                ];
                let best = (0..space.len())
                    .filter(|&k| space.component[k] == *component)
                    .min_by(|&a, &b| {
                        dist2(space.positions[a], x).total_cmp(&dist2(space.positions[b], x))
                    })
                    .unwrap_or(0);
                ResolvedProbe::Point(*field, *term, best)
            }
        }
    }

    fn space(&self, field: FieldName) -> &FieldSpace {
        match field {
            FieldName::U | FieldName::V => &self.ops.velocity,
            FieldName::Sigma => &self.ops.stress,
            FieldName::P => &self.ops.pressure,
            FieldName::Psi => &self.ops.flux,
        }
    }

    /// Probe column names.
    pub fn probe_names(probes: &[Probe]) -> Vec<String> {
        probes
            .iter()
            .map(|p| match p {
                Probe::Energy => "energy".to_string(),
                Probe::Norm { field } => format!("norm_{}", field_label(*field)),
                Probe::Point {
                    field,
                    at,
                    component,
                    term,
                } => {
                    let coords: Vec<String> = at.iter().map(|v| v.to_string()).collect();
                    let f = match field {
                        FieldName::Psi => format!("psi{}", term + 1),
                        other => field_label(*other).to_string(),
                    };
                    format!("{f}[{component}]@({})", coords.join(" "))
                }
            })
            .collect()
    }

    fn evaluate(&self, probe: &ResolvedProbe, u: &StateVector, disp: &[f64]) -> f64 {
        match *probe {
            ResolvedProbe::Energy => self.energy(u),
            ResolvedProbe::Norm(field) => match field {
                FieldName::U => self.ops.velocity.norm(disp),
                FieldName::V => self.ops.velocity.norm(&u.v),
                FieldName::Sigma => self.ops.stress.norm(&u.sigma),
                FieldName::P => self.ops.pressure.norm(&u.p),
                FieldName::Psi => u
                    .psi
                    .iter()
                    .map(|x| self.ops.flux.inner(x, x))
                    .sum::<f64>()
                    .sqrt(),
            },
            ResolvedProbe::Point(field, term, k) => match field {
                FieldName::U => disp[k],
                FieldName::V => u.v[k],
                FieldName::Sigma => u.sigma[k],
                FieldName::P => u.p[k],
                FieldName::Psi => u.psi.get(term).map_or(f64::NAN, |p| p[k]),
            },
        }
    }

    /// Steps over `[0, T]`, recording probes after every step.
    pub fn run(
        &self,
        initial: &InitialData,
        forcing: &dyn Forcing,
        probes: &[Probe],
    ) -> Result<RunOutput, SolverError> {
        self.run_observed(initial, forcing, probes, None, |_, _, _| {})
    }

    /// As [`run`](Self::run), calling `observer(step, t, state)` after each
    /// step and optionally monitoring the weighted stability estimate.
    pub fn run_observed(
        &self,
        initial: &InitialData,
        forcing: &dyn Forcing,
        probes: &[Probe],
        monitor_nu: Option<f64>,
        mut observer: impl FnMut(usize, f64, &StateVector),
    ) -> Result<RunOutput, SolverError> {
        if !initial.state.matches(&self.layout) || initial.displacement.len() != self.layout.n_velocity {
            return Err(SolverError::DimensionMismatch(
                "initial data does not match the grid".into(),
            ));
        }
        let dt = self.cfg.dt;
        let resolved: Vec<_> = probes.iter().map(|p| self.resolve(p)).collect();
        let mut trajectory = Trajectory {
            columns: Self::probe_names(probes),
            ..Trajectory::default()
        };
        let mut monitor = monitor_nu.map(StabilityMonitor::new);
        let mut u = initial.state.clone();
        let mut disp = initial.displacement.clone();
        let mut g = self.load(0.0, forcing);
        for n in 0..self.cfg.n_steps() {
            let t = n as f64 * dt;
            let g_next = self.load(t + dt, forcing);
            let next = self.step(t, &u, &g, &g_next)?;
            for (d, (a, b)) in disp.iter_mut().zip(u.v.iter().zip(&next.v)) {
                *d += 0.5 * dt * (a + b);
            }
            u = next;
            g = g_next;
            if let Some(m) = monitor.as_mut() {
                let x = u.to_flat();
                m.observe(t + dt, dt, self.inner(&x, &x).sqrt(), self.inner(&g, &g).sqrt());
            }
            trajectory.times.push(t + dt);
            trajectory
                .rows
                .push(resolved.iter().map(|p| self.evaluate(p, &u, &disp)).collect());
            observer(n + 1, t + dt, &u);
        }
        Ok(RunOutput {
            trajectory,
            final_state: u,
            displacement: disp,
            monitor,
        })
    }

    /// Writes `<stem>.txt` (one value per line, flat layout) and
    /// `<stem>.json` describing the layout.
    pub fn write_state(
        &self,
        dir: &Path,
        stem: &str,
        t: f64,
        state: &StateVector,
        displacement: &[f64],
    ) -> Result<(), SolverError> {
        let mut text = String::new();
        for v in state.to_flat().iter().chain(displacement) {
            text.push_str(&v.to_string());
            text.push('\n');
        }
        std::fs::write(dir.join(format!("{stem}.txt")), text)?;
        let l = self.layout;
        let mut blocks = vec![
            block_json("v", l.velocity(), "m/s", &self.ops.velocity),
            block_json("sigma", l.stress(), "Pa (Mandel: xy entries hold sqrt(2) sigma_xy)", &self.ops.stress),
            block_json("p", l.pressure(), "Pa", &self.ops.pressure),
        ];
        for j in 0..l.n_terms {
            blocks.push(block_json(&format!("psi{}", j + 1), l.psi(j), "m/s", &self.ops.flux));
        }
        let n = l.len();
        blocks.push(block_json("u", n..n + l.n_velocity, "m", &self.ops.velocity));
        let sidecar = serde_json::json!({
            "format": "text, one value per line",
            "time": t,
            "dim": self.ops.dim,
            "length": n + l.n_velocity,
            "blocks": blocks,
        });
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }
}

fn block_json(name: &str, r: Range<usize>, unit: &str, space: &FieldSpace) -> serde_json::Value {
    serde_json::json!({
        "name": name,
        "offset": r.start,
        "len": r.len(),
        "unit": unit,
        "positions": space.positions,
        "component": space.component,
    })
}

fn field_label(f: FieldName) -> &'static str {
    match f {
        FieldName::U => "u",
        FieldName::V => "v",
        FieldName::Sigma => "sigma",
        FieldName::P => "p",
        FieldName::Psi => "psi",
    }
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Scalar auxiliary equation `c Ψ' + Ψ = k g` under the θ-scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdeFilter {
    pub c: f64,
    pub gain: f64,
    pub theta: f64,
    pub dt: f64,
}

impl AdeFilter {
    /// Term `j` of `series`: `c = c_j`, `k = η_k d_j / F`.
    pub fn for_term(series: &PermeabilitySeries, j: usize, theta: f64, dt: f64) -> Self {
        let t = series.terms()[j];
        Self {
            c: t.c,
            gain: series.prefactor() * t.d,
            theta,
            dt,
        }
    }

    pub fn step(&self, psi: f64, g_n: f64, g_np1: f64) -> f64 {
        let r = self.c / self.dt;
        let th = self.theta;
        ((r - (1.0 - th)) * psi + self.gain * (th * g_np1 + (1.0 - th) * g_n)) / (r + th)
    }
}
