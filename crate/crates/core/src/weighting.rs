//! Auxiliary operators `B`, the composite operator `C = BA` and the diagonal
//! weights `w_i = ‖C e_i‖₂`.
//!
//! A [`WeightedOperator`] keeps `C` in a compressed form `C = Q C̃` where `Q`
//! has orthonormal columns (or is the identity). Every quantity the solvers
//! and certificates need, `‖Cx − By‖₂`, `Cᵀ(Cx − By)` and inner products of
//! columns of `C`, is invariant under this compression. For the truncated
//! pseudo-inverse, `C = V_k V_kᵀ` is stored as `C̃ = V_kᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_norms, thin_svd};

/// Relative singular value cutoff for truncated pseudo-inverses.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// `σ_min/σ_max` below which the pre-orthogonalizer columns count as dependent.
pub const DEPENDENCE_TOLERANCE: f64 = 1e-10;
/// Relative column-norm cutoff for `Nul(C)` membership.
pub const ZERO_COLUMN_TOLERANCE: f64 = 1e-14;
/// Default tolerance for [`check_nonparallel`].
pub const NONPARALLEL_TOLERANCE: f64 = 1e-10;
/// Resampling attempts for random `B` that produce a zero column.
pub const RANDOM_RESAMPLE_ATTEMPTS: u64 = 8;

/// Choice of auxiliary operator `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "b", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightingScheme {
    Identity,
    #[serde(rename = "trunc_pinv")]
    TruncatedPseudoInverse { k: usize },
    RandomSparse { p: usize, density: f64, seed: u64 },
    #[serde(rename = "pre_orth")]
    PreOrthogonalizer { indices: Vec<usize> },
}

impl WeightingScheme {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::TruncatedPseudoInverse { .. } => "trunc_pinv",
            Self::RandomSparse { .. } => "random_sparse",
            Self::PreOrthogonalizer { .. } => "pre_orth",
        }
    }
}

/// The pair `(C = BA, W)` consumed by the solvers and certificates.
#[derive(Debug, Clone)]
pub struct WeightedOperator {
    scheme: WeightingScheme,
    // maps an observation y to the compressed coordinates of By; None = identity
    data_map: Option<DMatrix<f64>>,
    // orthonormal Q with C = Q C̃; None = identity
    range_basis: Option<DMatrix<f64>>,
    compressed: DMatrix<f64>,
    weights: DVector<f64>,
    unit_weights: bool,
}

impl WeightedOperator {
    /// Treats `c` itself as the composite operator (`B = I`, `A = c`).
    pub fn from_matrix(c: DMatrix<f64>) -> Result<Self> {
        Self::from_parts(WeightingScheme::Identity, None, None, c)
    }

    fn from_parts(
        scheme: WeightingScheme,
        data_map: Option<DMatrix<f64>>,
        range_basis: Option<DMatrix<f64>>,
        compressed: DMatrix<f64>,
    ) -> Result<Self> {
        let weights = column_norms(&compressed);
        let cutoff = ZERO_COLUMN_TOLERANCE * compressed.norm();
        if let Some(i) = weights.iter().position(|&w| w <= cutoff || !w.is_finite()) {
            return Err(Error::ZeroColumn(i));
        }
        Ok(Self { scheme, data_map, range_basis, compressed, weights, unit_weights: false })
    }

    /// Same `C`, but `W = I` (the unweighted baseline).
    pub fn with_unit_weights(mut self) -> Self {
        self.weights = DVector::from_element(self.cols(), 1.0);
        self.unit_weights = true;
        self
    }

    pub fn scheme(&self) -> &WeightingScheme {
        &self.scheme
    }

    pub fn has_unit_weights(&self) -> bool {
        self.unit_weights
    }

    /// Number of columns `n`.
    pub fn cols(&self) -> usize {
        self.compressed.ncols()
    }

    /// Dimension of the (compressed) data space the solvers work in.
    pub fn rows(&self) -> usize {
        self.compressed.nrows()
    }

    /// Diagonal of `W`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Column norms `‖C e_i‖₂`, regardless of [`Self::with_unit_weights`].
    pub fn column_norms(&self) -> DVector<f64> {
        column_norms(&self.compressed)
    }

    /// Compressed operator `C̃` with `C = Q C̃`.
    pub fn compressed(&self) -> &DMatrix<f64> {
        &self.compressed
    }

    /// Explicit `C`. For the truncated pseudo-inverse this is the `n × n` matrix `V_k V_kᵀ`.
    pub fn c_matrix(&self) -> DMatrix<f64> {
        match &self.range_basis {
            Some(q) => q * &self.compressed,
            None => self.compressed.clone(),
        }
    }

    /// Maps a vector in compressed coordinates to the data space of `C`.
    pub fn expand(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.range_basis {
            Some(q) => q * v,
            None => v.clone(),
        }
    }

    /// `CᵀC e_j`; the orthonormal factor cancels, so this never forms `C`.
    pub fn gram_column(&self, j: usize) -> DVector<f64> {
        self.compressed.tr_mul(&self.compressed.column(j))
    }

    /// Maps an observation `y` to the data vector `By` in compressed coordinates.
    pub fn transform_data(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.data_map {
            Some(f) => {
                if f.ncols() != y.len() {
                    return Err(Error::DimensionMismatch { expected: f.ncols(), actual: y.len() });
                }
                Ok(f * y)
            }
            None => {
                if y.len() != self.rows() {
                    return Err(Error::DimensionMismatch { expected: self.rows(), actual: y.len() });
                }
                Ok(y.clone())
            }
        }
    }

    /// `C e_j` in compressed coordinates.
    pub fn image(&self, j: usize) -> DVector<f64> {
        self.compressed.column(j).into_owned()
    }

    /// Compressed image of a coefficient vector.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.cols() {
            return Err(Error::DimensionMismatch { expected: self.cols(), actual: x.len() });
        }
        Ok(&self.compressed * x)
    }

    pub fn apply_transpose(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        if r.len() != self.rows() {
            return Err(Error::DimensionMismatch { expected: self.rows(), actual: r.len() });
        }
        Ok(self.compressed.tr_mul(r))
    }

    /// `C W⁻¹` in compressed coordinates: unit columns `C e_i / ‖C e_i‖`.
    pub fn normalized_columns(&self) -> DMatrix<f64> {
        let norms = self.column_norms();
        let mut out = self.compressed.clone();
        for (mut col, w) in out.column_iter_mut().zip(norms.iter()) {
            col /= *w;
        }
        out
    }
}

/// `Σᵢ₌₁ᵏ σᵢ⁻¹ vᵢ uᵢᵀ`.
pub fn truncated_pseudoinverse(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let (u, s, v_t) = truncated_factors(a, k)?;
    let scaled = DMatrix::from_fn(k, u.nrows(), |r, c| u[(c, r)] / s[r]);
    Ok(v_t.tr_mul(&scaled))
}

fn truncated_factors(a: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidInput(format!("k = {k} must lie in 1..={}", m.min(n))));
    }
    let svd = thin_svd(a);
    let s1 = svd.singular_values[0];
    let sk = svd.singular_values[k - 1];
    let threshold = RANK_TOLERANCE * s1;
    if sk <= threshold || s1 == 0.0 {
        return Err(Error::RankDeficient { k, sigma: sk, threshold });
    }
    Ok((
        svd.u.columns(0, k).into_owned(),
        svd.singular_values.rows(0, k).into_owned(),
        svd.v_t.rows(0, k).into_owned(),
    ))
}

/// Numerical rank at the truncation tolerance.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let s = thin_svd(a).singular_values;
    let cutoff = RANK_TOLERANCE * s[0];
    s.iter().filter(|&&v| v > cutoff).count()
}

/// Random `p × m` matrix; each entry is nonzero with probability `density`
/// and nonzero values are uniform on `(0, 1)`. ChaCha8 stream seeded with `seed`.
pub fn random_sparse_b(p: usize, m: usize, density: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidInput(format!("density {density} outside (0, 1]")));
    }
    if p == 0 || m == 0 {
        return Err(Error::InvalidInput("random B needs positive dimensions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = DMatrix::zeros(p, m);
    for r in 0..p {
        for c in 0..m {
            if rng.random::<f64>() < density {
                b[(r, c)] = loop {
                    let v: f64 = rng.random();
                    if v > 0.0 {
                        break v;
                    }
                };
            }
        }
    }
    Ok(b)
}

/// `Y†` for `Y = [a_{j1} … a_{js}]`.
pub fn pre_orthogonalizer(a: &DMatrix<f64>, indices: &[usize]) -> Result<DMatrix<f64>> {
    let (m, n) = a.shape();
    validate_index_set(indices, n)?;
    if indices.len() > m {
        return Err(Error::InvalidInput(format!("|J| = {} exceeds m = {m}", indices.len())));
    }
    let y = a.select_columns(indices);
    let svd = thin_svd(&y);
    let s = &svd.singular_values;
    let ratio = s[s.len() - 1] / s[0];
    if !(ratio > DEPENDENCE_TOLERANCE) {
        return Err(Error::DependentColumns { ratio });
    }
    // Y† = V Σ⁻¹ Uᵀ
    let scaled = DMatrix::from_fn(s.len(), m, |r, c| svd.u[(c, r)] / s[r]);
    Ok(svd.v_t.tr_mul(&scaled))
}

pub(crate) fn validate_index_set(indices: &[usize], n: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::InvalidInput("index set is empty".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &j in indices {
        if j >= n {
            return Err(Error::InvalidInput(format!("index {j} out of range 0..{n}")));
        }
        if !seen.insert(j) {
            return Err(Error::InvalidInput(format!("duplicate index {j}")));
        }
    }
    Ok(())
}

/// Builds `C = BA` and `W` for the given scheme.
pub fn build_weighted_operator(a: &DMatrix<f64>, scheme: &WeightingScheme) -> Result<WeightedOperator> {
    let (m, _) = a.shape();
    match scheme {
        WeightingScheme::Identity => WeightedOperator::from_parts(scheme.clone(), None, None, a.clone()),
        WeightingScheme::TruncatedPseudoInverse { k } => {
            let (u, s, v_t) = truncated_factors(a, *k)?;
            let data_map = DMatrix::from_fn(*k, m, |r, c| u[(c, r)] / s[r]);
            let basis = v_t.transpose();
            WeightedOperator::from_parts(scheme.clone(), Some(data_map), Some(basis), v_t)
        }
        WeightingScheme::RandomSparse { p, density, seed } => {
            let mut last = None;
            for attempt in 0..RANDOM_RESAMPLE_ATTEMPTS {
                let b = random_sparse_b(*p, m, *density, seed.wrapping_add(attempt))?;
                let c = &b * a;
                let effective = WeightingScheme::RandomSparse {
                    p: *p,
                    density: *density,
                    seed: seed.wrapping_add(attempt),
                };
                match WeightedOperator::from_parts(effective, Some(b), None, c) {
                    Err(Error::ZeroColumn(i)) => last = Some(i),
                    other => return other,
                }
            }
            Err(Error::ZeroColumn(last.unwrap_or(0)))
        }
        WeightingScheme::PreOrthogonalizer { indices } => {
            let y_pinv = pre_orthogonalizer(a, indices)?;
            let c = &y_pinv * a;
            WeightedOperator::from_parts(scheme.clone(), Some(y_pinv), None, c)
        }
    }
}

/// All pairs `(l, q)`, `l < q`, whose normalized images satisfy
/// `1 − |⟨C e_l/‖C e_l‖, C e_q/‖C e_q‖⟩| ≤ tol`.
pub fn check_nonparallel(op: &WeightedOperator, tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    scan_normalized_gram(op, |l, q, g| {
        if q > l && 1.0 - g.abs() <= tol {
            out.push((l, q));
        }
    });
    out
}

/// Visits every entry `(i, j, g_ij)` of the normalized Gram matrix, in
/// row-major order, without forming it in full.
pub fn scan_normalized_gram(op: &WeightedOperator, mut visit: impl FnMut(usize, usize, f64)) {
    let normalized = op.normalized_columns();
    let n = normalized.ncols();
    const BLOCK: usize = 256;
    for start in (0..n).step_by(BLOCK) {
        let len = BLOCK.min(n - start);
        let block = normalized.columns(start, len).tr_mul(&normalized);
        for r in 0..len {
            for j in 0..n {
                visit(start + r, j, block[(r, j)]);
            }
        }
    }
}
