mod common;

use common::*;
use poroade::ade_solver::{NoForcing, SolverConfig};
use poroade::conv_oracle::{Acceleration, ConvSolver};
use poroade::permeability::PermeabilitySeries;

/// Max over time of the weighted L² distance in `(v, p)`.
fn max_gap(terms: &[(f64, f64)], cells: usize, dt: f64, t_end: f64, theta: f64) -> f64 {
    max_gap_with(terms, cells, dt, t_end, theta, Acceleration::default())
}

fn max_gap_with(terms: &[(f64, f64)], cells: usize, dt: f64, t_end: f64, theta: f64, acc: Acceleration) -> f64 {
    let s = if terms.is_empty() {
        let p = params();
        PermeabilitySeries::memoryless(p.eta_k(), p.formation_factor())
    } else {
        series(terms)
    };
    let law = law(&s, 1);
    let ops = ops_1d(cells);
    let ade = stepper(&law, &ops, dt, t_end, theta);
    let init = smooth_initial(&ade);
    let mut ade_states = Vec::new();
    ade.run_observed(&init, &NoForcing, &[], None, |_, _, u| {
        ade_states.push((u.v.clone(), u.p.clone()))
    })
    .unwrap();
    let conv = ConvSolver::with_acceleration(&law, &s, &ops, &SolverConfig::new(dt, t_end, theta), 1e12, acc).unwrap();
    let mut gap: f64 = 0.0;
    let mut k = 0;
    conv.run_observed(&init, &NoForcing, &[], |_, _, c| {
        let (v, p) = &ade_states[k];
        let dv: Vec<f64> = v.iter().zip(&c.v).map(|(a, b)| a - b).collect();
        let dp: Vec<f64> = p.iter().zip(&c.p).map(|(a, b)| a - b).collect();
        let g = (ops.velocity.inner(&dv, &dv) + ops.pressure.inner(&dp, &dp)).sqrt();
        gap = gap.max(g);
        k += 1;
    })
    .unwrap();
    gap
}

#[test]
fn memoryless_runs_agree() {
    for theta in [0.5, 1.0] {
        let gap = max_gap(&[], 32, 0.01, 0.5, theta);
        assert!(gap < 1e-10, "gap {gap}");
    }
}

fn orders(terms: &[(f64, f64)]) -> Vec<f64> {
    let gaps: Vec<f64> = [0.01, 0.005, 0.0025]
        .iter()
        .map(|&dt| max_gap(terms, 64, dt, 0.5, 1.0))
        .collect();
    eprintln!("{terms:?}: gaps {gaps:?}");
    gaps.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn first_order_agreement_for_one_two_four_terms() {
    for terms in [
        vec![(0.2, 0.5)],
        vec![(0.05, 0.05), (0.4, 0.4)],
        vec![(0.02, 0.01), (0.1, 0.05), (0.3, 0.2), (1.0, 0.5)],
    ] {
        for o in orders(&terms) {
            assert!(o >= 0.9, "order {o} for {terms:?}");
        }
    }
}

#[test]
fn lagged_acceleration_converges_on_a_coarse_grid() {
    let gaps: Vec<f64> = [0.01, 0.005, 0.0025]
        .iter()
        .map(|&dt| max_gap_with(&[(0.2, 0.5)], 16, dt, 0.5, 1.0, Acceleration::Lagged))
        .collect();
    for w in gaps.windows(2) {
        assert!((w[0] / w[1]).log2() >= 0.9, "{gaps:?}");
    }
}
