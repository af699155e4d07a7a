//! Physical parameters and the material law `M(z) = M₀ + z⁻¹M₁`.
//!
//! The unknown at a point is `U = (v, σ, p, Ψ₁, …, Ψ_N)`. Stresses are
//! stored in Mandel coordinates (`σ_xy` scaled by `√2`) so that the
//! Euclidean inner product of the point vector equals the Frobenius inner
//! product on symmetric tensors, and eigenvalues of the assembled blocks are
//! eigenvalues of the operator.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::permeability::PermeabilitySeries;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("invalid material parameter: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Elastic stiffness, either isotropic or a full fourth-order tensor
/// `C[i][j][k][l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Elasticity {
    Lame { lambda: f64, mu: f64 },
    Tensor(Vec<Vec<Vec<Vec<f64>>>>),
}

/// Index pairs of the Mandel basis in dimension `d`.
pub fn mandel_pairs(d: usize) -> &'static [(usize, usize)] {
    match d {
        1 => &[(0, 0)],
        2 => &[(0, 0), (1, 1), (0, 1)],
        3 => &[(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)],
        _ => &[],
    }
}

/// Number of independent symmetric-tensor components.
pub fn sym_dim(d: usize) -> usize {
    d * (d + 1) / 2
}

impl Elasticity {
    /// Stiffness as a symmetric matrix in the Mandel basis.
    pub fn stiffness_mandel(&self, d: usize) -> Result<DMatrix<f64>, MaterialError> {
        if !(1..=3).contains(&d) {
            return Err(MaterialError::DimensionMismatch(format!(
                "dimension must be 1, 2 or 3, got {d}"
            )));
        }
        let pairs = mandel_pairs(d);
        let m = pairs.len();
        let weight = |(i, j): (usize, usize)| if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
        let c = match self {
            Elasticity::Lame { lambda, mu } => DMatrix::from_fn(m, m, |a, b| {
                let normal = pairs[a].0 == pairs[a].1 && pairs[b].0 == pairs[b].1;
                let mut v = if normal { *lambda } else { 0.0 };
                if a == b {
                    v += 2.0 * mu;
                }
                v
            }),
            Elasticity::Tensor(t) => {
                let ok = t.len() == d
                    && t.iter().all(|a| {
                        a.len() == d
                            && a.iter().all(|b| b.len() == d && b.iter().all(|c| c.len() == d))
                    });
                if !ok {
                    return Err(MaterialError::DimensionMismatch(format!(
                        "elasticity tensor is not {d}x{d}x{d}x{d}"
                    )));
                }
                let scale = t
                    .iter()
                    .flatten()
                    .flatten()
                    .flatten()
                    .fold(0.0f64, |m, x| m.max(x.abs()));
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            for l in 0..d {
                                let x = t[i][j][k][l];
                                let sym = [t[j][i][k][l], t[i][j][l][k], t[k][l][i][j]];
                                if sym.iter().any(|y| (x - y).abs() > 1e-12 * scale) {
                                    return Err(MaterialError::InvalidParams(
                                        "elasticity tensor lacks minor/major symmetry".into(),
                                    ));
                                }
                            }
                        }
                    }
                }
                DMatrix::from_fn(m, m, |a, b| {
                    let (i, j) = pairs[a];
                    let (k, l) = pairs[b];
                    weight(pairs[a]) * weight(pairs[b]) * t[i][j][k][l]
                })
            }
        };
        if !c.iter().all(|x| x.is_finite()) {
            return Err(MaterialError::InvalidParams(
                "elasticity contains non-finite entries".into(),
            ));
        }
        let lmin = SymmetricEigen::new(c.clone()).eigenvalues.min();
        if lmin <= 0.0 {
            return Err(MaterialError::InvalidParams(format!(
                "elasticity is not positive definite (smallest eigenvalue {lmin:e})"
            )));
        }
        Ok(c)
    }

    /// Compliance `S = C⁻¹` in the Mandel basis.
    pub fn compliance_mandel(&self, d: usize) -> Result<DMatrix<f64>, MaterialError> {
        let c = self.stiffness_mandel(d)?;
        let s = c.try_inverse().ok_or_else(|| {
            MaterialError::InvalidParams("elasticity tensor is singular".into())
        })?;
        Ok((&s + s.transpose()) * 0.5)
    }

    /// Smallest eigenvalue `c_s` of the compliance.
    pub fn compliance_floor(&self, d: usize) -> Result<f64, MaterialError> {
        match self {
            Elasticity::Lame { lambda, mu } => {
                self.stiffness_mandel(d)?;
                // volumetric mode d·λ + 2μ, deviatoric modes 2μ (absent in 1D)
                let volumetric = d as f64 * lambda + 2.0 * mu;
                let largest = if d == 1 {
                    volumetric
                } else {
                    volumetric.max(2.0 * mu)
                };
                Ok(1.0 / largest)
            }
            Elasticity::Tensor(_) => {
                Ok(SymmetricEigen::new(self.compliance_mandel(d)?).eigenvalues.min())
            }
        }
    }
}

/// All physical coefficients. SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    pub rho_s: f64,
    pub rho_f: f64,
    pub phi: f64,
    /// Biot coefficient.
    pub alpha: f64,
    /// Specific storage.
    pub c0: f64,
    pub elasticity: Elasticity,
    /// Dynamic viscosity.
    pub eta: f64,
    /// Infinite-frequency tortuosity.
    pub alpha_inf: f64,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), MaterialError> {
        let check = |ok: bool, what: &str, v: f64| {
            if ok {
                Ok(())
            } else {
                Err(MaterialError::InvalidParams(format!("{what} = {v}")))
            }
        };
        check(self.rho_s.is_finite() && self.rho_s > 0.0, "rho_s must be positive, got", self.rho_s)?;
        check(self.rho_f.is_finite() && self.rho_f > 0.0, "rho_f must be positive, got", self.rho_f)?;
        check(self.eta.is_finite() && self.eta > 0.0, "eta must be positive, got", self.eta)?;
        check(self.phi > 0.0 && self.phi < 1.0, "phi must lie in (0,1), got", self.phi)?;
        check(self.alpha > 0.0 && self.alpha <= 1.0, "alpha must lie in (0,1], got", self.alpha)?;
        check(self.c0.is_finite() && self.c0 > 0.0, "c0 must be positive, got", self.c0)?;
        check(
            self.alpha_inf.is_finite() && self.alpha_inf >= 1.0,
            "alpha_inf must be >= 1, got",
            self.alpha_inf,
        )?;
        Ok(())
    }

    /// Bulk density `ρ = ρ_f φ + ρ_s (1 - φ)`.
    pub fn rho(&self) -> f64 {
        self.rho_f * self.phi + self.rho_s * (1.0 - self.phi)
    }

    /// Kinematic viscosity `η / ρ_f`.
    pub fn eta_k(&self) -> f64 {
        self.eta / self.rho_f
    }

    /// Formation factor `α_∞ / φ`.
    pub fn formation_factor(&self) -> f64 {
        self.alpha_inf / self.phi
    }
}

/// Offsets of the blocks inside the point vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointLayout {
    pub dim: usize,
    pub n_terms: usize,
}

impl PointLayout {
    pub fn v(&self) -> std::ops::Range<usize> {
        0..self.dim
    }
    pub fn sigma(&self) -> std::ops::Range<usize> {
        let s = self.dim;
        s..s + sym_dim(self.dim)
    }
    pub fn p(&self) -> usize {
        self.dim + sym_dim(self.dim)
    }
    pub fn psi(&self, j: usize) -> std::ops::Range<usize> {
        let s = self.p() + 1 + j * self.dim;
        s..s + self.dim
    }
    pub fn size(&self) -> usize {
        self.p() + 1 + self.n_terms * self.dim
    }
}

/// Point-wise material law with the scalar coefficients it was built from.
#[derive(Debug, Clone)]
pub struct MaterialLaw {
    layout: PointLayout,
    m0: DMatrix<f64>,
    m1: DMatrix<f64>,
    rho: f64,
    rho_f: f64,
    c0: f64,
    alpha: f64,
    compliance: DMatrix<f64>,
    compliance_floor: f64,
    /// `c_j ρ_f F / (d_j η_k)`.
    psi_mass: Vec<f64>,
    /// `ρ_f F / (d_j η_k)`.
    psi_damping: Vec<f64>,
}

/// Builds `M₀` and `M₁` for dimension `d` and the terms of `series`.
///
/// An empty series yields the memory-free law `(v, σ, p)`.
pub fn assemble_material_law(
    params: &MaterialParams,
    series: &PermeabilitySeries,
    d: usize,
) -> Result<MaterialLaw, MaterialError> {
    params.validate()?;
    let compliance = params.elasticity.compliance_mandel(d)?;
    let compliance_floor = params.elasticity.compliance_floor(d)?;
    let layout = PointLayout {
        dim: d,
        n_terms: series.len(),
    };
    let rho = params.rho();
    let rho_f = params.rho_f;
    let scale = rho_f * series.formation_factor() / series.eta_k();
    let psi_mass: Vec<f64> = series.terms().iter().map(|t| t.c * scale / t.d).collect();
    let psi_damping: Vec<f64> = series.terms().iter().map(|t| scale / t.d).collect();

    let n = layout.size();
    let mut m0 = DMatrix::zeros(n, n);
    let mut m1 = DMatrix::zeros(n, n);
    for k in layout.v() {
        m0[(k, k)] = rho;
    }
    for (a, ia) in layout.sigma().enumerate() {
        for (b, ib) in layout.sigma().enumerate() {
            m0[(ia, ib)] = compliance[(a, b)];
        }
    }
    m0[(layout.p(), layout.p())] = params.c0;
    for j in 0..layout.n_terms {
        for (axis, k) in layout.psi(j).enumerate() {
            m0[(k, k)] = psi_mass[j];
            m1[(k, k)] = psi_damping[j];
            m0[(k, axis)] = rho_f;
            m0[(axis, k)] = rho_f;
        }
    }
    Ok(MaterialLaw {
        layout,
        m0,
        m1,
        rho,
        rho_f,
        c0: params.c0,
        alpha: params.alpha,
        compliance,
        compliance_floor,
        psi_mass,
        psi_damping,
    })
}

impl MaterialLaw {
    pub fn layout(&self) -> PointLayout {
        self.layout
    }
    pub fn dim(&self) -> usize {
        self.layout.dim
    }
    pub fn n_terms(&self) -> usize {
        self.layout.n_terms
    }
    pub fn m0(&self) -> &DMatrix<f64> {
        &self.m0
    }
    pub fn m1(&self) -> &DMatrix<f64> {
        &self.m1
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn rho_f(&self) -> f64 {
        self.rho_f
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }
    /// Compliance block in Mandel coordinates.
    /// Biot–Willis coefficient; enters only the spatial operator.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn compliance(&self) -> &DMatrix<f64> {
        &self.compliance
    }
    pub fn compliance_floor(&self) -> f64 {
        self.compliance_floor
    }
    pub fn psi_mass(&self) -> &[f64] {
        &self.psi_mass
    }
    pub fn psi_damping(&self) -> &[f64] {
        &self.psi_damping
    }

    /// `M(z) = M₀ + z⁻¹ M₁`.
    pub fn eval(&self, z: Complex64) -> DMatrix<Complex64> {
        let inv = 1.0 / z;
        DMatrix::from_fn(self.m0.nrows(), self.m0.ncols(), |i, j| {
            Complex64::new(self.m0[(i, j)], 0.0) + inv * self.m1[(i, j)]
        })
    }

    /// Symmetric part of `Re(z M(z))`.
    pub fn real_part_z_m(&self, z: Complex64) -> DMatrix<f64> {
        let zm = self.eval(z) * z;
        let re = zm.map(|x| x.re);
        (&re + re.transpose()) * 0.5
    }

    /// Exact positive definiteness of `M₀`: every block but the `v`/`Ψ`
    /// coupling is block diagonal, and that coupling is positive definite iff
    /// its Schur complement `ρ - Σ_j ρ_f² / (c_j ρ_f F / (d_j η_k))` is.
    pub fn m0_positive_definite(&self) -> bool {
        self.m0_schur_complement() > 0.0 && self.c0 > 0.0 && self.compliance_floor > 0.0
    }

    /// `ρ - ρ_f² Σ_j 1/m_j` with `m_j` the `Ψ_j` mass coefficient.
    pub fn m0_schur_complement(&self) -> f64 {
        self.rho
            - self
                .psi_mass
                .iter()
                .map(|m| self.rho_f * self.rho_f / m)
                .sum::<f64>()
    }

    /// Congruence `T M(z) Tᵀ` obtained by symmetric Gauss steps that clear
    /// the `v`-rows and columns of `M₀`. `T` does not depend on `z`, so the
    /// same transform reduces `M₁` (which it leaves unchanged). For one term
    /// the result is block diagonal with `Ψ` entry `m₁ - ρ_f²/ρ`.
    pub fn congruence_reduced(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.m0.nrows();
        let mut t = DMatrix::<f64>::identity(n, n);
        let mut m0 = self.m0.clone();
        for pivot in self.layout.v() {
            let piv = m0[(pivot, pivot)];
            for r in 0..n {
                if r == pivot || m0[(r, pivot)] == 0.0 {
                    continue;
                }
                let factor = m0[(r, pivot)] / piv;
                // row op then the matching column op
                for c in 0..n {
                    m0[(r, c)] -= factor * m0[(pivot, c)];
                    t[(r, c)] -= factor * t[(pivot, c)];
                }
                for c in 0..n {
                    m0[(c, r)] -= factor * m0[(c, pivot)];
                }
            }
        }
        let m1 = &t * &self.m1 * t.transpose();
        (m0, m1, t)
    }
}

/// Positivity constant
///
/// ```text
/// min{ ν₀ρ, ν₀c_s, ν₀c₀, min_j ρ_f² (ν₀ (c_j F/(d_j η) - 1/ρ) + F/(d_j η)) }
/// ```
///
/// with `η = ρ_f η_k` taken from the law's series so that the last entry is
/// exactly the reduced `Ψ_j` diagonal `ν₀(m_j - ρ_f²/ρ) + b_j`. May be
/// non-positive.
pub fn c_min(law: &MaterialLaw, nu0: f64) -> f64 {
    let base = (nu0 * law.rho)
        .min(nu0 * law.compliance_floor)
        .min(nu0 * law.c0);
    let rho_f2 = law.rho_f * law.rho_f;
    term_margins(law, nu0)
        .into_iter()
        .map(|m| rho_f2 * m)
        .fold(base, f64::min)
}

/// `ν₀ (c_j F/(d_j η) - 1/ρ) + F/(d_j η)` for each term.
fn term_margins(law: &MaterialLaw, nu0: f64) -> Vec<f64> {
    let (slopes, offsets) = term_slopes(law);
    slopes
        .iter()
        .zip(&offsets)
        .map(|(s, o)| nu0 * s + o)
        .collect()
}

/// Per-term slope `c_j F/(d_j η) - 1/ρ` and offset `F/(d_j η)`.
fn term_slopes(law: &MaterialLaw) -> (Vec<f64>, Vec<f64>) {
    let rho_f2 = law.rho_f * law.rho_f;
    let slopes = law
        .psi_mass
        .iter()
        .map(|m| m / rho_f2 - 1.0 / law.rho)
        .collect();
    let offsets = law.psi_damping.iter().map(|b| b / rho_f2).collect();
    (slopes, offsets)
}

/// Outcome of the well-posedness test at a given `ν₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellPosednessReport {
    pub nu0: f64,
    pub holds: bool,
    pub c_min: f64,
    pub per_term_margins: Vec<f64>,
    /// Open interval `(lower, upper)` of admissible `ν₀`; `upper = None`
    /// means unbounded.
    pub nu0_admissible_range: (f64, Option<f64>),
    /// Exact positive definiteness of `M₀` (all terms coupled through `v`).
    pub m0_positive_definite: bool,
    pub m0_schur_complement: f64,
}

/// Evaluates the per-term positivity inequality and `c_min` at `nu0`.
pub fn check_wellposedness(
    params: &MaterialParams,
    series: &PermeabilitySeries,
    nu0: f64,
    dim: usize,
) -> Result<WellPosednessReport, MaterialError> {
    if !(nu0.is_finite() && nu0 > 0.0) {
        return Err(MaterialError::InvalidParams(format!(
            "nu0 must be positive, got {nu0}"
        )));
    }
    let law = assemble_material_law(params, series, dim)?;
    Ok(wellposedness_of_law(&law, nu0))
}

pub fn wellposedness_of_law(law: &MaterialLaw, nu0: f64) -> WellPosednessReport {
    let margins = term_margins(law, nu0);
    let cmin = c_min(law, nu0);
    let (slopes, offsets) = term_slopes(law);
    let upper = slopes
        .iter()
        .zip(&offsets)
        .filter(|(s, _)| **s < 0.0)
        .map(|(s, o)| o / (-s))
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))));
    WellPosednessReport {
        nu0,
        holds: margins.iter().all(|m| *m > 0.0) && cmin > 0.0,
        c_min: cmin,
        per_term_margins: margins,
        nu0_admissible_range: (0.0, upper),
        m0_positive_definite: law.m0_positive_definite(),
        m0_schur_complement: law.m0_schur_complement(),
    }
}

/// Diagnostic for the convolution form:
/// `Re(√(2π) Â(-i(im + ν₀)))⁻¹ - ν₀ ρ_f / ρ` at one `m`.
pub fn convolution_form_margin(
    params: &MaterialParams,
    series: &PermeabilitySeries,
    nu0: f64,
    m: f64,
) -> f64 {
    let arg = -Complex64::i() * Complex64::new(nu0, m);
    let a = series.eval_hat_complex(arg) * (2.0 * std::f64::consts::PI).sqrt();
    (1.0 / a).re - nu0 * params.rho_f / params.rho()
}

impl std::fmt::Display for WellPosednessReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<24}{:>16}", "nu0", format!("{:.6e}", self.nu0))?;
        writeln!(f, "{:<24}{:>16}", "holds", self.holds)?;
        writeln!(f, "{:<24}{:>16}", "c_min", format!("{:.6e}", self.c_min))?;
        for (j, m) in self.per_term_margins.iter().enumerate() {
            writeln!(f, "{:<24}{:>16}", format!("margin[{j}]"), format!("{m:.6e}"))?;
        }
        let upper = self
            .nu0_admissible_range
            .1
            .map_or("inf".to_string(), |u| format!("{u:.6e}"));
        writeln!(f, "{:<24}{:>16}", "nu0 range", format!("(0, {upper})"))?;
        writeln!(f, "{:<24}{:>16}", "M0 positive definite", self.m0_positive_definite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permeability::Term;

    fn params(rho: f64, rho_f: f64) -> MaterialParams {
        // any φ with ρ_f φ < ρ gives a positive ρ_s
        let phi = 0.5 * (rho / rho_f).min(1.0);
        MaterialParams {
            rho_s: (rho - rho_f * phi) / (1.0 - phi),
            rho_f,
            phi,
            alpha: 1.0,
            c0: 1.0,
            elasticity: Elasticity::Lame { lambda: 0.0, mu: 0.5 },
            eta: rho_f,
            alpha_inf: 1.0,
        }
    }

    fn unit_series(terms: Vec<Term>) -> PermeabilitySeries {
        PermeabilitySeries::new(1.0, 1.0, terms).unwrap()
    }

    #[test]
    fn unit_law_1d() {
        let p = params(1.0, 1.0);
        let s = unit_series(vec![Term { c: 1.0, d: 1.0 }]);
        let law = assemble_material_law(&p, &s, 1).unwrap();
        let expect0 = DMatrix::from_row_slice(
            4,
            4,
            &[1., 0., 0., 1., 0., 1., 0., 0., 0., 0., 1., 0., 1., 0., 0., 1.],
        );
        assert_eq!(law.m0(), &expect0);
        assert_eq!(law.m1(), &DMatrix::from_diagonal(&nalgebra::dvector![0., 0., 0., 1.]));
    }

    #[test]
    fn two_terms_couple_to_velocity() {
        let p = params(3.0, 1.0);
        let s = PermeabilitySeries::new(
            1.0,
            1.0,
            vec![Term { c: 1.0, d: 1.0 }, Term { c: 2.0, d: 1.0 }],
        )
        .unwrap();
        let law = assemble_material_law(&p, &s, 2).unwrap();
        let l = law.layout();
        assert_eq!(l.size(), 2 + 3 + 1 + 4);
        for j in 0..2 {
            for (axis, k) in l.psi(j).enumerate() {
                assert_eq!(law.m0()[(axis, k)], 1.0);
                assert_eq!(law.m0()[(k, axis)], 1.0);
            }
        }
        assert_eq!(law.m0(), &law.m0().transpose());
    }

    #[test]
    fn c_min_hand_example() {
        // ρ=2, c_s=1, c₀=1, ρ_f=1, F=1, η=1, c=d=1, ν₀=1 → min{2,1,1,1.5}
        let p = params(2.0, 1.0);
        let s = unit_series(vec![Term { c: 1.0, d: 1.0 }]);
        let law = assemble_material_law(&p, &s, 1).unwrap();
        assert_eq!(law.compliance_floor(), 1.0);
        assert_eq!(c_min(&law, 1.0), 1.0);
        let r = wellposedness_of_law(&law, 1.0);
        assert_eq!(r.per_term_margins, vec![1.5]);
    }

    #[test]
    fn c_min_vanishes_with_nu0() {
        let p = params(2.0, 1.0);
        let s = unit_series(vec![Term { c: 1.0, d: 1.0 }]);
        let law = assemble_material_law(&p, &s, 1).unwrap();
        assert!(c_min(&law, 1e-12) < 1e-11);
        assert!(c_min(&law, 1e-12) > 0.0);
    }

    #[test]
    fn admissible_range_for_negative_slope() {
        // F/(dη) = 1 and c F/(dη) - 1/ρ = -2: ρ = 1/2.5, c = 0.5
        let p = params(0.4, 1.0);
        let s = unit_series(vec![Term { c: 0.5, d: 1.0 }]);
        let r = check_wellposedness(&p, &s, 1.0, 1).unwrap();
        assert!((r.per_term_margins[0] + 1.0).abs() < 1e-14);
        assert!(!r.holds);
        let upper = r.nu0_admissible_range.1.unwrap();
        assert!((upper - 0.5).abs() < 1e-14);
    }

    #[test]
    fn nonnegative_slopes_hold_everywhere() {
        let p = params(2.0, 1.0);
        let s = unit_series(vec![Term { c: 1.0, d: 1.0 }]);
        for nu0 in [1e-6, 1e-2, 1.0, 1e3, 1e9] {
            let r = check_wellposedness(&p, &s, nu0, 1).unwrap();
            assert!(r.holds);
            assert_eq!(r.nu0_admissible_range, (0.0, None));
        }
    }

    #[test]
    fn isotropic_compliance_floor_matches_eigensolve() {
        let e = Elasticity::Lame { lambda: 3.0, mu: 1.5 };
        for d in 1..=3 {
            let closed = e.compliance_floor(d).unwrap();
            let eig = SymmetricEigen::new(e.compliance_mandel(d).unwrap()).eigenvalues.min();
            assert!((closed - eig).abs() < 1e-14, "d = {d}");
        }
    }

    #[test]
    fn tensor_input_matches_lame() {
        let (lambda, mu) = (2.0, 0.7);
        let d = 2;
        let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        let t: Vec<Vec<Vec<Vec<f64>>>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        (0..d)
                            .map(|k| {
                                (0..d)
                                    .map(|l| {
                                        lambda * delta(i, j) * delta(k, l)
                                            + mu * (delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k))
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let a = Elasticity::Tensor(t).stiffness_mandel(2).unwrap();
        let b = Elasticity::Lame { lambda, mu }.stiffness_mandel(2).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn tensor_dimension_mismatch() {
        let t = vec![vec![vec![vec![1.0]]]];
        let err = Elasticity::Tensor(t).stiffness_mandel(2).unwrap_err();
        assert!(matches!(err, MaterialError::DimensionMismatch(_)));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = params(2.0, 1.0);
        p.phi = 1.0;
        assert!(p.validate().is_err());
        let mut p = params(2.0, 1.0);
        p.alpha_inf = 0.9;
        assert!(p.validate().is_err());
    }

    #[test]
    fn congruence_reduces_single_term_to_block_diagonal() {
        let p = params(2.0, 1.0);
        let s = unit_series(vec![Term { c: 1.0, d: 1.0 }]);
        let law = assemble_material_law(&p, &s, 2).unwrap();
        let (m0, m1, _) = law.congruence_reduced();
        let l = law.layout();
        for (axis, k) in l.psi(0).enumerate() {
            assert_eq!(m0[(axis, k)], 0.0);
            assert!((m0[(k, k)] - (1.0 - 0.5)).abs() < 1e-15);
        }
        assert_eq!(&m1, law.m1());
    }
}
