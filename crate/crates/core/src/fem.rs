//! P1 finite element discretization of `-Δu + εu = f` on the unit square with
//! homogeneous Neumann data, and the boundary-observation forward map
//! `A = M_∂^{1/2} L^{-1} M`.
//!
//! Node `(i, j)` (column `i`, row `j`) has index `j * (N + 1) + i` and sits at
//! `(i / N, j / N)`. Boundary nodes are ordered counterclockwise starting at the
//! origin. Each square cell is split along its lower-left to upper-right diagonal.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::BandedLu;
use crate::error::{Error, Result};

const PIVOT_TOLERANCE: f64 = 1e-12;

/// Uniform triangulated grid on `[0, 1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    cells_per_side: usize,
    boundary: Vec<usize>,
}

impl Grid {
    pub fn new(cells_per_side: usize) -> Result<Self> {
        if cells_per_side < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 cells per side, got {cells_per_side}"
            )));
        }
        let n = cells_per_side;
        let s = n + 1;
        let mut boundary = Vec::with_capacity(4 * n);
        boundary.extend((0..n).map(|i| i));
        boundary.extend((0..n).map(|j| j * s + n));
        boundary.extend((1..=n).rev().map(|i| n * s + i));
        boundary.extend((1..=n).rev().map(|j| j * s));
        Ok(Self { cells_per_side: n, boundary })
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.cells_per_side as f64
    }

    pub fn nodes_per_side(&self) -> usize {
        self.cells_per_side + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_side() * self.nodes_per_side()
    }

    pub fn boundary_node_count(&self) -> usize {
        self.boundary.len()
    }

    /// Node indices on ∂Ω in counterclockwise order from `(0, 0)`.
    pub fn boundary_index_map(&self) -> &[usize] {
        &self.boundary
    }

    /// `(column, row)` position of a node.
    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        let s = self.nodes_per_side();
        (node % s, node / s)
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nodes_per_side() + i
    }

    pub fn node_coordinates(&self, node: usize) -> (f64, f64) {
        let (i, j) = self.node_ij(node);
        let h = self.spacing();
        (i as f64 * h, j as f64 * h)
    }

    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        (0..self.node_count()).map(|k| self.node_coordinates(k)).collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let (i, j) = self.node_ij(node);
        let n = self.cells_per_side;
        i == 0 || j == 0 || i == n || j == n
    }

    /// Nearest grid node to `point`; ties go to the smaller index.
    pub fn locate_node(&self, point: (f64, f64)) -> usize {
        let n = self.cells_per_side as f64;
        let snap = |t: f64| -> usize {
            let scaled = (t.clamp(0.0, 1.0)) * n;
            let lo = scaled.floor();
            let idx = if scaled - lo > 0.5 { lo + 1.0 } else { lo };
            (idx as usize).min(self.cells_per_side)
        };
        self.node_index(snap(point.0), snap(point.1))
    }

    /// Chebyshev distance between two nodes, in cells.
    pub fn cell_distance(&self, a: usize, b: usize) -> usize {
        let (ai, aj) = self.node_ij(a);
        let (bi, bj) = self.node_ij(b);
        ai.abs_diff(bi).max(aj.abs_diff(bj))
    }

    /// Arc-length position of boundary slot `k` (perimeter is 4).
    fn boundary_arc(&self, k: usize) -> f64 {
        k as f64 * self.spacing()
    }

    fn triangles(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let n = self.cells_per_side;
        (0..n).flat_map(move |j| {
            (0..n).flat_map(move |i| {
                let n00 = self.node_index(i, j);
                let n10 = self.node_index(i + 1, j);
                let n01 = self.node_index(i, j + 1);
                let n11 = self.node_index(i + 1, j + 1);
                [[n00, n10, n11], [n00, n11, n01]]
            })
        })
    }
}

/// A source made of weighted nodal basis vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfiguration {
    entries: Vec<(usize, f64)>,
}

impl SourceConfiguration {
    pub fn new(entries: Vec<(usize, f64)>, n: usize) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &(j, a) in &entries {
            if j >= n {
                return Err(Error::InvalidInput(format!("source index {j} out of range 0..{n}")));
            }
            if a == 0.0 || !a.is_finite() {
                return Err(Error::InvalidInput(format!("source {j} has amplitude {a}")));
            }
            if !seen.insert(j) {
                return Err(Error::InvalidInput(format!("duplicate source index {j}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn single(j: usize, n: usize) -> Result<Self> {
        Self::new(vec![(j, 1.0)], n)
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|&(j, _)| j).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self, n: usize) -> DVector<f64> {
        let mut x = DVector::zeros(n);
        for &(j, a) in &self.entries {
            x[j] += a;
        }
        x
    }
}

/// Assembled finite element system: stiffness-plus-mass, mass and boundary
/// mass matrices together with the factorization of `L`.
#[derive(Debug, Clone)]
pub struct FemSystem {
    grid: Grid,
    epsilon: f64,
    operator: CsrMatrix<f64>,
    mass: CsrMatrix<f64>,
    boundary_mass: DMatrix<f64>,
    boundary_mass_sqrt: DMatrix<f64>,
    factor: BandedLu,
}

impl FemSystem {
    pub fn assemble(cells_per_side: usize, epsilon: f64) -> Result<Self> {
        let grid = Grid::new(cells_per_side)?;
        let n = grid.node_count();
        let mut stiff = CooMatrix::new(n, n);
        let mut mass = CooMatrix::new(n, n);
        for tri in grid.triangles() {
            let p: Vec<(f64, f64)> = tri.iter().map(|&k| grid.node_coordinates(k)).collect();
            let det = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
            let area = 0.5 * det.abs();
            // gradients of the barycentric coordinates
            let grads = [
                ((p[1].1 - p[2].1) / det, (p[2].0 - p[1].0) / det),
                ((p[2].1 - p[0].1) / det, (p[0].0 - p[2].0) / det),
                ((p[0].1 - p[1].1) / det, (p[1].0 - p[0].0) / det),
            ];
            for a in 0..3 {
                for b in 0..3 {
                    let k = area * (grads[a].0 * grads[b].0 + grads[a].1 * grads[b].1);
                    let m = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                    stiff.push(tri[a], tri[b], k);
                    mass.push(tri[a], tri[b], m);
                }
            }
        }
        let stiff = CsrMatrix::from(&stiff);
        let mass = CsrMatrix::from(&mass);
        let operator = &stiff + &(&mass * epsilon);

        let m = grid.boundary_node_count();
        let h = grid.spacing();
        let mut boundary_mass = DMatrix::zeros(m, m);
        for e in 0..m {
            let (a, b) = (e, (e + 1) % m);
            boundary_mass[(a, a)] += h / 3.0;
            boundary_mass[(b, b)] += h / 3.0;
            boundary_mass[(a, b)] += h / 6.0;
            boundary_mass[(b, a)] += h / 6.0;
        }
        let boundary_mass_sqrt = symmetric_sqrt(&boundary_mass);

        let band = grid.nodes_per_side() + 1;
        let factor = BandedLu::factorize(&operator, band, band, PIVOT_TOLERANCE)?;
        Ok(Self { grid, epsilon, operator, mass, boundary_mass, boundary_mass_sqrt, factor })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `L = K + εM`.
    pub fn operator(&self) -> &CsrMatrix<f64> {
        &self.operator
    }

    pub fn mass(&self) -> &CsrMatrix<f64> {
        &self.mass
    }

    pub fn boundary_mass(&self) -> &DMatrix<f64> {
        &self.boundary_mass
    }

    pub fn boundary_mass_sqrt(&self) -> &DMatrix<f64> {
        &self.boundary_mass_sqrt
    }

    /// FEM solution `u = L^{-1} M x` for source coefficients `x`.
    pub fn solve_source(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(x.len(), self.grid.node_count())?;
        let mut rhs = csr_mul(&self.mass, x.as_slice());
        self.factor.solve_in_place(&mut rhs);
        Ok(DVector::from_vec(rhs))
    }

    /// Boundary trace `u|∂Ω` of the FEM solution, before the `M_∂^{1/2}` factor.
    pub fn boundary_trace(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let u = self.solve_source(x)?;
        Ok(DVector::from_iterator(
            self.grid.boundary_node_count(),
            self.grid.boundary_index_map().iter().map(|&k| u[k]),
        ))
    }

    /// `R L^{-1} M`, one row per boundary node. Uses the symmetry of `L` and `M`:
    /// row `b` equals `(M L^{-1} e_b)^T`, so only `4N` solves are needed.
    fn trace_matrix(&self) -> DMatrix<f64> {
        let n = self.grid.node_count();
        let rows: Vec<Vec<f64>> = self
            .grid
            .boundary_index_map()
            .par_iter()
            .map(|&node| {
                let mut e = vec![0.0; n];
                e[node] = 1.0;
                self.factor.solve_in_place(&mut e);
                csr_mul(&self.mass, &e)
            })
            .collect();
        DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c])
    }
}

/// The discrete forward operator together with the system it was built from.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    system: FemSystem,
    matrix: DMatrix<f64>,
}

impl ForwardModel {
    pub fn assemble(cells_per_side: usize, epsilon: f64) -> Result<Self> {
        let system = FemSystem::assemble(cells_per_side, epsilon)?;
        Ok(Self::from_system(system))
    }

    pub fn from_system(system: FemSystem) -> Self {
        let matrix = &system.boundary_mass_sqrt * system.trace_matrix();
        Self { system, matrix }
    }

    pub fn system(&self) -> &FemSystem {
        &self.system
    }

    pub fn grid(&self) -> &Grid {
        &self.system.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.system.epsilon
    }

    /// The dense `m × n` matrix `A`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(x.len(), self.cols())?;
        Ok(&self.matrix * x)
    }
}

/// Samples a fine-grid boundary trace at the coarse boundary nodes by
/// piecewise-linear interpolation in arc length.
pub fn transfer_boundary_trace(fine: &Grid, coarse: &Grid, trace_fine: &DVector<f64>) -> Result<DVector<f64>> {
    let (nf, nc) = (fine.cells_per_side(), coarse.cells_per_side());
    if nf % nc != 0 {
        return Err(Error::IncompatibleGrids { fine: nf, coarse: nc });
    }
    let mf = fine.boundary_node_count();
    check_len(trace_fine.len(), mf)?;
    let hf = fine.spacing();
    let out = (0..coarse.boundary_node_count()).map(|k| {
        let pos = coarse.boundary_arc(k) / hf;
        let lo = pos.floor();
        let t = pos - lo;
        let a = lo as usize % mf;
        if t < 1e-12 {
            trace_fine[a]
        } else {
            (1.0 - t) * trace_fine[a] + t * trace_fine[(a + 1) % mf]
        }
    });
    Ok(DVector::from_iterator(coarse.boundary_node_count(), out))
}

fn symmetric_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

pub(crate) fn csr_mul(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    a.row_iter()
        .map(|row| row.col_indices().iter().zip(row.values()).map(|(&j, &v)| v * x[j]).sum())
        .collect()
}

fn check_len(actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
