//! Staggered finite differences on uniform rectangular grids.
//!
//! Placement (`d = 2`, `nx × ny` cells):
//!
//! | field            | location                     | boundary          |
//! |------------------|------------------------------|-------------------|
//! | `p`              | cell centres                 | Dirichlet (ghost) |
//! | `σ_xx`, `σ_yy`   | cell centres                 | natural           |
//! | `σ_xy`           | vertices                     | natural           |
//! | `v_x`, `v_y`     | interior normal faces        | Dirichlet         |
//! | `Ψ_x`, `Ψ_y`     | all normal faces             | natural           |
//!
//! In one dimension faces are nodes and there is no shear component.
//!
//! The two gradients `grad₀: p ↦ faces` and `Grad₀: v ↦ σ` are assembled
//! first. A homogeneous Dirichlet value for `p` enters `grad₀` on boundary
//! faces through the half-cell difference `(0 - p)/(h/2)`. Boundary faces and
//! vertices carry half (or quarter) weights. The divergences are then
//! *defined* as `div = -W_c⁻¹ grad₀ᵀ W_f` and `Div = -W_v⁻¹ Grad₀ᵀ W_σ`, so
//! `⟨grad₀ p, Ψ⟩ + ⟨p, div Ψ⟩ = 0` holds to rounding for every pair.
//!
//! Stresses are stored in Mandel coordinates: the `xy` entry holds
//! `√2 σ_xy`, which makes the `σ` inner product a plain weighted sum.

use std::fmt::Write as _;
use std::path::Path;

use crate::linalg::Sparse;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidExtent(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Point = [f64; 2];

/// Uniform rectangular grid on `[0, L_x] × [0, L_y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: Vec<f64>,
    cells: Vec<usize>,
}

/// Builds a grid with `cells[a] ≥ 2` cells along each axis.
pub fn build_grid(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Grid, GridError> {
    Grid::new(dim, extents, cells)
}

impl Grid {
    pub fn new(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Self, GridError> {
        if !(1..=2).contains(&dim) {
            return Err(GridError::InvalidExtent(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if extents.len() != dim || cells.len() != dim {
            return Err(GridError::InvalidExtent(format!(
                "expected {dim} extents and cell counts, got {} and {}",
                extents.len(),
                cells.len()
            )));
        }
        if let Some(l) = extents.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(GridError::InvalidExtent(format!(
                "extent must be positive and finite, got {l}"
            )));
        }
        if let Some(n) = cells.iter().find(|n| **n < 2) {
            return Err(GridError::InvalidExtent(format!(
                "need at least 2 cells per axis, got {n}"
            )));
        }
        Ok(Self {
            dim,
            extents: extents.to_vec(),
            cells: cells.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn extents(&self) -> &[f64] {
        &self.extents
    }
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.cells[axis] as f64
    }
    fn nx(&self) -> usize {
        self.cells[0]
    }
    fn ny(&self) -> usize {
        if self.dim == 2 {
            self.cells[1]
        } else {
            1
        }
    }
    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }
    /// Interior normal faces, i.e. velocity unknowns.
    pub fn n_interior_faces(&self) -> usize {
        let (nx, ny) = (self.nx(), self.ny());
        match self.dim {
            1 => nx - 1,
            _ => (nx - 1) * ny + nx * (ny - 1),
        }
    }
    /// All normal faces, i.e. auxiliary-flux unknowns per term.
    pub fn n_faces(&self) -> usize {
        let (nx, ny) = (self.nx(), self.ny());
        match self.dim {
            1 => nx + 1,
            _ => (nx + 1) * ny + nx * (ny + 1),
        }
    }
    /// Stress unknowns (Mandel components).
    pub fn n_stress(&self) -> usize {
        let (nx, ny) = (self.nx(), self.ny());
        match self.dim {
            1 => nx,
            _ => 2 * nx * ny + (nx + 1) * (ny + 1),
        }
    }
}

/// Locations, quadrature weights and vector component of one family of
/// unknowns.
#[derive(Debug, Clone, Default)]
pub struct FieldSpace {
    pub positions: Vec<Point>,
    pub weights: Vec<f64>,
    /// Vector axis for `v`/`Ψ`, Mandel index for `σ`, zero for scalars.
    pub component: Vec<usize>,
}

impl FieldSpace {
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    fn push(&mut self, x: Point, w: f64, component: usize) {
        self.positions.push(x);
        self.weights.push(w);
        self.component.push(component);
    }
    /// Weighted inner product `Σ w_k a_k b_k`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }
    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }
    /// Samples `f(position, component)` at every unknown.
    pub fn sample(&self, f: impl Fn(Point, usize) -> f64) -> Vec<f64> {
        self.positions
            .iter()
            .zip(&self.component)
            .map(|(x, c)| f(*x, *c))
            .collect()
    }
}

/// Stress unknowns that share one location, with their Mandel indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StressBlock {
    pub dofs: Vec<usize>,
    pub mandel: Vec<usize>,
}

/// Discrete `grad₀`, `div`, `Grad₀`, `Div` with their spaces.
#[derive(Debug, Clone)]
pub struct DiscreteOps {
    pub dim: usize,
    pub velocity: FieldSpace,
    pub stress: FieldSpace,
    pub pressure: FieldSpace,
    pub flux: FieldSpace,
    /// Flux face of every velocity unknown.
    pub velocity_face: Vec<usize>,
    pub stress_blocks: Vec<StressBlock>,
    /// `grad₀`: pressure → flux faces.
    pub gp: Sparse,
    /// `div`: flux faces → pressure.
    pub dv: Sparse,
    /// `grad₀` restricted to velocity faces.
    pub gp_v: Sparse,
    /// `div` of a velocity field.
    pub dv_v: Sparse,
    /// `Grad₀`: velocity → stress (Mandel).
    pub gv: Sparse,
    /// `Div`: stress → velocity.
    pub ds: Sparse,
}

fn csr(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Sparse {
    Sparse::from_triplets(nrows, ncols, triplets)
}

/// `-W_in⁻¹ Gᵀ W_out` for `G: in → out`.
fn negative_adjoint(g: &Sparse, w_in: &[f64], w_out: &[f64]) -> Sparse {
    let t: Vec<_> = g
        .triplets()
        .into_iter()
        .map(|(r, c, v)| (c, r, -v * w_out[r] / w_in[c]))
        .collect();
    csr(g.ncols(), g.nrows(), &t)
}

/// Assembles the staggered operators for `grid`.
pub fn build_ops(grid: &Grid) -> DiscreteOps {
    match grid.dim {
        1 => build_1d(grid),
        _ => build_2d(grid),
    }
}

fn build_1d(grid: &Grid) -> DiscreteOps {
    let n = grid.nx();
    let h = grid.spacing(0);
    let mut pressure = FieldSpace::default();
    let mut stress = FieldSpace::default();
    for c in 0..n {
        let x = [(c as f64 + 0.5) * h, 0.0];
        pressure.push(x, h, 0);
        stress.push(x, h, 0);
    }
    let mut flux = FieldSpace::default();
    for f in 0..=n {
        let w = if f == 0 || f == n { 0.5 * h } else { h };
        flux.push([f as f64 * h, 0.0], w, 0);
    }
    let mut velocity = FieldSpace::default();
    let mut velocity_face = Vec::new();
    for f in 1..n {
        velocity.push([f as f64 * h, 0.0], h, 0);
        velocity_face.push(f);
    }

    let mut gp = Vec::new();
    gp.push((0, 0, 2.0 / h));
    for f in 1..n {
        gp.push((f, f, 1.0 / h));
        gp.push((f, f - 1, -1.0 / h));
    }
    gp.push((n, n - 1, -2.0 / h));

    // node k holds velocity index k-1; nodes 0 and n are clamped
    let mut gv = Vec::new();
    for c in 0..n {
        if c + 1 < n {
            gv.push((c, c, 1.0 / h));
        }
        if c > 0 {
            gv.push((c, c - 1, -1.0 / h));
        }
    }
    let stress_blocks = (0..n)
        .map(|c| StressBlock {
            dofs: vec![c],
            mandel: vec![0],
        })
        .collect();
    finish(
        grid.dim,
        velocity,
        stress,
        pressure,
        flux,
        velocity_face,
        stress_blocks,
        gp,
        gv,
    )
}

fn build_2d(grid: &Grid) -> DiscreteOps {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.spacing(0), grid.spacing(1));
    let vol = hx * hy;
    let cell = |i: usize, j: usize| i + nx * j;
    let fx = |i: usize, j: usize| i + (nx + 1) * j;
    let fy_off = (nx + 1) * ny;
    let fy = |i: usize, j: usize| fy_off + i + nx * j;
    let vx = |i: usize, j: usize| (i - 1) + (nx - 1) * j;
    let vy_off = (nx - 1) * ny;
    let vy = |i: usize, j: usize| vy_off + i + nx * (j - 1);
    let half = |k: usize, n: usize| if k == 0 || k == n { 0.5 } else { 1.0 };

    let mut pressure = FieldSpace::default();
    for j in 0..ny {
        for i in 0..nx {
            pressure.push([(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy], vol, 0);
        }
    }

    let mut flux = FieldSpace::default();
    for j in 0..ny {
        for i in 0..=nx {
            flux.push([i as f64 * hx, (j as f64 + 0.5) * hy], vol * half(i, nx), 0);
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            flux.push([(i as f64 + 0.5) * hx, j as f64 * hy], vol * half(j, ny), 1);
        }
    }

    let mut velocity = FieldSpace::default();
    let mut velocity_face = Vec::new();
    for j in 0..ny {
        for i in 1..nx {
            velocity.push([i as f64 * hx, (j as f64 + 0.5) * hy], vol, 0);
            velocity_face.push(fx(i, j));
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            velocity.push([(i as f64 + 0.5) * hx, j as f64 * hy], vol, 1);
            velocity_face.push(fy(i, j));
        }
    }

    // σ = [xx at cells | yy at cells | xy at vertices]
    let mut stress = FieldSpace::default();
    for comp in 0..2 {
        for j in 0..ny {
            for i in 0..nx {
                stress.push([(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy], vol, comp);
            }
        }
    }
    let xy_off = 2 * nx * ny;
    let vert = |i: usize, j: usize| xy_off + i + (nx + 1) * j;
    for j in 0..=ny {
        for i in 0..=nx {
            stress.push(
                [i as f64 * hx, j as f64 * hy],
                vol * half(i, nx) * half(j, ny),
                2,
            );
        }
    }
    let mut stress_blocks: Vec<StressBlock> = (0..nx * ny)
        .map(|c| StressBlock {
            dofs: vec![c, nx * ny + c],
            mandel: vec![0, 1],
        })
        .collect();
    stress_blocks.extend((0..(nx + 1) * (ny + 1)).map(|k| StressBlock {
        dofs: vec![xy_off + k],
        mandel: vec![2],
    }));

    let mut gp = Vec::new();
    for j in 0..ny {
        gp.push((fx(0, j), cell(0, j), 2.0 / hx));
        for i in 1..nx {
            gp.push((fx(i, j), cell(i, j), 1.0 / hx));
            gp.push((fx(i, j), cell(i - 1, j), -1.0 / hx));
        }
        gp.push((fx(nx, j), cell(nx - 1, j), -2.0 / hx));
    }
    for i in 0..nx {
        gp.push((fy(i, 0), cell(i, 0), 2.0 / hy));
        for j in 1..ny {
            gp.push((fy(i, j), cell(i, j), 1.0 / hy));
            gp.push((fy(i, j), cell(i, j - 1), -1.0 / hy));
        }
        gp.push((fy(i, ny), cell(i, ny - 1), -2.0 / hy));
    }

    let mut gv = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            // ε_xx, ε_yy with clamped boundary faces
            if i + 1 < nx {
                gv.push((cell(i, j), vx(i + 1, j), 1.0 / hx));
            }
            if i > 0 {
                gv.push((cell(i, j), vx(i, j), -1.0 / hx));
            }
            let row = nx * ny + cell(i, j);
            if j + 1 < ny {
                gv.push((row, vy(i, j + 1), 1.0 / hy));
            }
            if j > 0 {
                gv.push((row, vy(i, j), -1.0 / hy));
            }
        }
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..=ny {
        for i in 0..=nx {
            let row = vert(i, j);
            // √2 ε_xy = (∂_y v_x + ∂_x v_y)/√2
            if i > 0 && i < nx {
                if j == 0 {
                    gv.push((row, vx(i, 0), s * 2.0 / hy));
                } else if j == ny {
                    gv.push((row, vx(i, ny - 1), -s * 2.0 / hy));
                } else {
                    gv.push((row, vx(i, j), s / hy));
                    gv.push((row, vx(i, j - 1), -s / hy));
                }
            }
            if j > 0 && j < ny {
                if i == 0 {
                    gv.push((row, vy(0, j), s * 2.0 / hx));
                } else if i == nx {
                    gv.push((row, vy(nx - 1, j), -s * 2.0 / hx));
                } else {
                    gv.push((row, vy(i, j), s / hx));
                    gv.push((row, vy(i - 1, j), -s / hx));
                }
            }
        }
    }
    finish(
        grid.dim,
        velocity,
        stress,
        pressure,
        flux,
        velocity_face,
        stress_blocks,
        gp,
        gv,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    dim: usize,
    velocity: FieldSpace,
    stress: FieldSpace,
    pressure: FieldSpace,
    flux: FieldSpace,
    velocity_face: Vec<usize>,
    stress_blocks: Vec<StressBlock>,
    gp: Vec<(usize, usize, f64)>,
    gv: Vec<(usize, usize, f64)>,
) -> DiscreteOps {
    let gp = csr(flux.len(), pressure.len(), &gp);
    let mut face_to_v = vec![None; flux.len()];
    for (k, &f) in velocity_face.iter().enumerate() {
        face_to_v[f] = Some(k);
    }
    let gp_v: Vec<_> = gp
        .triplets()
        .into_iter()
        .filter_map(|(f, c, v)| face_to_v[f].map(|k| (k, c, v)))
        .collect();
    let gp_v = csr(velocity.len(), pressure.len(), &gp_v);
    let gv = csr(stress.len(), velocity.len(), &gv);
    let dv = negative_adjoint(&gp, &pressure.weights, &flux.weights);
    let dv_v = negative_adjoint(&gp_v, &pressure.weights, &velocity.weights);
    let ds = negative_adjoint(&gv, &velocity.weights, &stress.weights);
    DiscreteOps {
        dim,
        velocity,
        stress,
        pressure,
        flux,
        velocity_face,
        stress_blocks,
        gp,
        dv,
        gp_v,
        dv_v,
        gv,
        ds,
    }
}

impl DiscreteOps {
    /// A single point with no spatial coupling: every operator is zero and
    /// the system reduces to the point-wise ODE `M₀ U' + M₁ U = G`.
    pub fn single_point() -> Self {
        let one = || FieldSpace {
            positions: vec![[0.0, 0.0]],
            weights: vec![1.0],
            component: vec![0],
        };
        let zero = || Sparse::zeros(1, 1);
        DiscreteOps {
            dim: 1,
            velocity: one(),
            stress: one(),
            pressure: one(),
            flux: one(),
            velocity_face: vec![0],
            stress_blocks: vec![StressBlock {
                dofs: vec![0],
                mandel: vec![0],
            }],
            gp: zero(),
            dv: zero(),
            gp_v: zero(),
            dv_v: zero(),
            gv: zero(),
            ds: zero(),
        }
    }

    fn named(&self) -> [(&'static str, &Sparse); 6] {
        [
            ("grad", &self.gp),
            ("div", &self.dv),
            ("grad_v", &self.gp_v),
            ("div_v", &self.dv_v),
            ("sym_grad", &self.gv),
            ("sym_div", &self.ds),
        ]
    }

    /// Coordinate-format text: a `rows cols nnz` header, then one
    /// `row col value` line per stored entry (zero-based).
    pub fn triplet_text(m: &Sparse) -> String {
        let mut out = format!("{} {} {}\n", m.nrows(), m.ncols(), m.nnz());
        for (r, c, v) in m.triplets() {
            let _ = writeln!(out, "{r} {c} {v:e}");
        }
        out
    }

    /// Writes each operator to `<dir>/<name>.txt` in triplet format.
    pub fn export_triplets(&self, dir: &Path) -> Result<(), GridError> {
        std::fs::create_dir_all(dir)?;
        for (name, m) in self.named() {
            std::fs::write(dir.join(format!("{name}.txt")), Self::triplet_text(m))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_1d() {
        let g = build_grid(1, &[1.0], &[4]).unwrap();
        let ops = build_ops(&g);
        assert_eq!(ops.pressure.len(), 4);
        assert_eq!(ops.velocity.len(), 3);
        assert_eq!(ops.flux.len(), 5);
    }

    #[test]
    fn counts_2d() {
        let g = build_grid(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let ops = build_ops(&g);
        assert_eq!(ops.pressure.len(), 16);
        assert_eq!(ops.velocity.len(), 3 * 4 + 4 * 3);
        assert_eq!(ops.flux.len(), 5 * 4 + 4 * 5);
        assert_eq!(ops.stress.len(), 2 * 16 + 25);
        assert_eq!(g.n_interior_faces(), 24);
        assert_eq!(g.n_stress(), ops.stress.len());
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(matches!(
            build_grid(1, &[1.0], &[1]),
            Err(GridError::InvalidExtent(_))
        ));
        assert!(build_grid(1, &[0.0], &[4]).is_err());
        assert!(build_grid(3, &[1.0; 3], &[4; 3]).is_err());
        assert!(build_grid(2, &[1.0], &[4]).is_err());
    }

    #[test]
    fn gradient_stencil_1d() {
        let g = build_grid(1, &[1.0], &[4]).unwrap();
        let ops = build_ops(&g);
        let mut entries: Vec<_> = ops
            .gp_v
            .triplets()
            .into_iter()
            .filter(|e| e.0 == 0)
            .map(|(_, c, v)| (c, v))
            .collect();
        entries.sort_by_key(|e| e.0);
        assert_eq!(entries, vec![(0, -4.0), (1, 4.0)]);
    }

    #[test]
    fn gradient_annihilates_constants_in_the_interior() {
        let g = build_grid(2, &[1.0, 2.0], &[5, 3]).unwrap();
        let ops = build_ops(&g);
        let ones = vec![1.0; ops.pressure.len()];
        assert!(ops.gp_v.apply(&ones).iter().all(|x| x.abs() < 1e-12));
        let flux_ones = vec![1.0; ops.flux.len()];
        let div = ops.dv.apply(&flux_ones);
        // a constant flux field has zero divergence
        assert!(div.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn stress_divergence_of_constant_is_zero() {
        let g = build_grid(2, &[1.0, 1.0], &[4, 6]).unwrap();
        let ops = build_ops(&g);
        let sigma = ops.stress.sample(|_, m| [1.0, -2.0, 0.5][m]);
        assert!(ops.ds.apply(&sigma).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn triplet_export_header() {
        let g = build_grid(1, &[1.0], &[3]).unwrap();
        let ops = build_ops(&g);
        let text = DiscreteOps::triplet_text(&ops.gp);
        assert!(text.starts_with("4 3 6\n"));
        let dir = tempfile::tempdir().unwrap();
        ops.export_triplets(dir.path()).unwrap();
        assert!(dir.path().join("sym_div.txt").exists());
    }
}
