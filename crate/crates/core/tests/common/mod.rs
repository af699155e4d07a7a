#![allow(dead_code)]

use poroade::ade_solver::{assemble_system, InitialData, SolverConfig, SteppingOperator};
use poroade::discretization::{build_grid, build_ops, DiscreteOps};
use poroade::material::{assemble_material_law, Elasticity, MaterialLaw, MaterialParams};
use poroade::permeability::{PermeabilitySeries, Term};

/// ρ = 1.5, ρ_f = 1, η_k = 1, F = 3.
pub fn params() -> MaterialParams {
    MaterialParams {
        rho_s: 2.0,
        rho_f: 1.0,
        phi: 0.5,
        alpha: 0.8,
        c0: 0.5,
        elasticity: Elasticity::Lame { lambda: 1.0, mu: 1.0 },
        eta: 1.0,
        alpha_inf: 1.5,
    }
}

pub fn series(terms: &[(f64, f64)]) -> PermeabilitySeries {
    PermeabilitySeries::from_material(
        &params(),
        terms.iter().map(|&(c, d)| Term { c, d }).collect(),
    )
    .unwrap()
}

pub fn law(s: &PermeabilitySeries, dim: usize) -> MaterialLaw {
    assemble_material_law(&params(), s, dim).unwrap()
}

pub fn ops_1d(cells: usize) -> DiscreteOps {
    build_ops(&build_grid(1, &[1.0], &[cells]).unwrap())
}

pub fn ops_2d(nx: usize, ny: usize) -> DiscreteOps {
    build_ops(&build_grid(2, &[1.0, 1.0], &[nx, ny]).unwrap())
}

pub fn stepper(law: &MaterialLaw, ops: &DiscreteOps, dt: f64, t: f64, theta: f64) -> SteppingOperator {
    assemble_system(law, ops, &SolverConfig::new(dt, t, theta)).unwrap()
}

/// Smooth data vanishing on the boundary: `u₀ = 0`, `v₀ = sin(πx)/10`,
/// `p₀ = sin(πx)`.
pub fn smooth_initial(s: &SteppingOperator) -> InitialData {
    let ops = s.ops();
    let pi = std::f64::consts::PI;
    let mode = |x: [f64; 2]| (pi * x[0]).sin() * if ops.dim == 2 { (pi * x[1]).sin() } else { 1.0 };
    let v0 = ops.velocity.sample(|x, _| 0.1 * mode(x));
    let p0 = ops.pressure.sample(|x, _| mode(x));
    s.initial_data(vec![0.0; ops.velocity.len()], v0, p0)
}

/// Random isotropic material with `n` random terms. `slope_sign` forces
/// every `c_j F/(d_j η) - 1/ρ` to be positive (`1`), negative (`-1`) or
/// leaves it free (`0`).
pub fn random_case(
    rng: &mut impl rand::Rng,
    n: usize,
    slope_sign: i32,
) -> (MaterialParams, PermeabilitySeries) {
    use rand::RngExt;
    let p = MaterialParams {
        rho_s: rng.random_range(0.5..5.0),
        rho_f: rng.random_range(0.2..2.0),
        phi: rng.random_range(0.05..0.95),
        alpha: rng.random_range(0.1..1.0),
        c0: rng.random_range(0.01..2.0),
        elasticity: Elasticity::Lame {
            lambda: rng.random_range(0.1..5.0),
            mu: rng.random_range(0.1..5.0),
        },
        eta: rng.random_range(0.01..2.0),
        alpha_inf: rng.random_range(1.0..4.0),
    };
    let f = p.formation_factor();
    let inv_rho = 1.0 / p.rho();
    let terms = (0..n)
        .map(|_| {
            let d: f64 = rng.random_range(0.05..3.0);
            // c F/(d η) = s / ρ with s on the requested side of 1
            let s: f64 = match slope_sign {
                1 => rng.random_range(1.05..20.0),
                -1 => rng.random_range(0.05..0.95),
                _ => rng.random_range(0.05..20.0),
            };
            Term {
                c: s * inv_rho * d * p.eta / f,
                d,
            }
        })
        .collect();
    let s = PermeabilitySeries::from_material(&p, terms).unwrap();
    (p, s)
}
