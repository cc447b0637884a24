//! Recoverability diagnostics: the weighted back-projection argmax, Gram
//! analysis around a representative coherence level, dual certificates, and
//! support-overlap measures.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SourceConfiguration;
use crate::linalg::inf_norm;
use crate::weighting::{scan_normalized_gram, WeightedOperator};

/// Relative gap below which two back-projection components count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Reciprocal condition number below which the restricted Gram matrix is singular.
pub const GRAM_RCOND_TOLERANCE: f64 = 1e-12;
/// Allowed deviation from exact interpolation of the signs on the support.
pub const COND1_TOLERANCE: f64 = 1e-10;
/// Strict-inequality margin required off the support.
pub const COND2_MARGIN: f64 = 1e-10;
/// Normalized inner products at most this large count as orthogonal.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;
/// Relative floor for the floating-point support of `CᵀC e_j`.
pub const SUPPORT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramAnalysis {
    pub support: Vec<usize>,
    /// Normalized Gram matrix restricted to the support, row-major.
    pub gram: Vec<Vec<f64>>,
    pub rho_bar: f64,
    /// Whether `0 < rho_bar < 1`, where the perturbation bound is defined.
    pub rho_in_domain: bool,
    /// Off-diagonal deviations `g_ij − rho_bar`, zero diagonal.
    pub deviation: Vec<Vec<f64>>,
    pub r_inf_norm: f64,
    pub bound: Option<f64>,
    pub bound_satisfied: bool,
    pub min_inside: f64,
    pub max_outside: f64,
    pub most_parallel_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub support: Vec<usize>,
    /// Dual vector in the data space of `C`.
    pub c: Vec<f64>,
    pub z: Vec<f64>,
    pub cond1_residual: f64,
    pub cond2_margin: f64,
    pub valid: bool,
    pub z_nonnegative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub pair: (usize, usize),
    pub tau_values: Vec<f64>,
    pub ratios: Vec<f64>,
    pub n: usize,
}

impl OverlapReport {
    /// Smallest sampled `τ` at which the overlap ratio is zero.
    pub fn first_zero_tau(&self) -> Option<f64> {
        self.tau_values.iter().zip(&self.ratios).find(|(_, &r)| r == 0.0).map(|(&t, _)| t)
    }
}

/// `W⁻¹CᵀC e_j`.
pub fn weighted_backprojection(op: &WeightedOperator, j: usize) -> Result<DVector<f64>> {
    check_index(op, j)?;
    Ok(op.gram_column(j).component_div(op.weights()))
}

/// Index of the largest back-projection component; a near tie is an error.
pub fn argmax_source(op: &WeightedOperator, j: usize) -> Result<usize> {
    let v = weighted_backprojection(op, j)?.abs();
    let (best, top) = v.argmax();
    let scale = top.max(f64::MIN_POSITIVE);
    if let Some(rival) = (0..v.len()).find(|&i| i != best && top - v[i] <= TIE_TOLERANCE * scale) {
        return Err(Error::AssumptionViolated(best.min(rival), best.max(rival)));
    }
    Ok(best)
}

/// Largest off-diagonal `|g_kl|` of the normalized Gram matrix.
pub fn mutual_coherence(op: &WeightedOperator) -> f64 {
    let mut worst = 0.0f64;
    scan_normalized_gram(op, |k, l, g| {
        if k != l {
            worst = worst.max(g.abs());
        }
    });
    worst
}

fn check_q_domain(rho: f64, s: usize) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) || s < 2 {
        return Err(Error::DomainError(format!("need 0 < rho < 1 and s > 1, got rho = {rho}, s = {s}")));
    }
    Ok(())
}

/// `Q(ρ)`: ones on the diagonal, `ρ` elsewhere.
pub fn q_matrix(rho: f64, s: usize) -> DMatrix<f64> {
    DMatrix::from_fn(s, s, |i, j| if i == j { 1.0 } else { rho })
}

/// Solution of `Q(ρ) y = 1`.
pub fn q_closed_form_solution(rho: f64, s: usize) -> Result<DVector<f64>> {
    check_q_domain(rho, s)?;
    Ok(DVector::from_element(s, 1.0 / (1.0 + (s as f64 - 1.0) * rho)))
}

/// `‖Q(ρ)⁻¹‖∞`.
pub fn q_inverse_inf_norm(rho: f64, s: usize) -> Result<f64> {
    check_q_domain(rho, s)?;
    let s = s as f64;
    Ok((rho * (2.0 * s - 3.0) + 1.0) / ((1.0 - rho) * (rho * (s - 1.0) + 1.0)))
}

/// Largest `‖R‖∞` for which `(Q(ρ) + R) x = 1` keeps a non-negative solution.
pub fn r_perturbation_bound(rho: f64, s: usize) -> Result<f64> {
    check_q_domain(rho, s)?;
    let s = s as f64;
    Ok((1.0 - rho) * (rho * (s - 1.0) + 1.0) / (2.0 * rho * (2.0 * s - 3.0) + 2.0))
}

fn normalized_gram_on(op: &WeightedOperator, support: &[usize]) -> DMatrix<f64> {
    let cols = op.compressed().select_columns(support);
    let norms = op.column_norms();
    let mut unit = cols;
    for (mut col, &j) in unit.column_iter_mut().zip(support) {
        col /= norms[j];
    }
    unit.tr_mul(&unit)
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Gram analysis of the support `support`; `rho_bar` defaults to the mean
/// off-diagonal entry.
pub fn analyze_parallel_recovery(op: &WeightedOperator, support: &[usize], rho_bar: Option<f64>) -> Result<GramAnalysis> {
    crate::weighting::validate_index_set(support, op.cols())?;
    let s = support.len();
    if s < 2 {
        return Err(Error::InvalidInput("the support needs at least two indices".into()));
    }
    let gram = normalized_gram_on(op, support);
    let mut off = Vec::with_capacity(s * (s - 1));
    for i in 0..s {
        for j in 0..s {
            if i != j {
                off.push(gram[(i, j)]);
            }
        }
    }
    let rho = rho_bar.unwrap_or_else(|| off.iter().sum::<f64>() / off.len() as f64);
    let deviation = DMatrix::from_fn(s, s, |i, j| if i == j { 0.0 } else { gram[(i, j)] - rho });
    let r_inf_norm = inf_norm(&deviation);
    let bound = r_perturbation_bound(rho, s).ok();
    let min_inside = off.iter().copied().fold(f64::INFINITY, f64::min);

    let mut member = vec![false; op.cols()];
    for &j in support {
        member[j] = true;
    }
    let mut max_outside = 0.0f64;
    scan_normalized_gram(op, |i, j, g| {
        if !member[i] && member[j] {
            max_outside = max_outside.max(g.abs());
        }
    });

    Ok(GramAnalysis {
        support: support.to_vec(),
        gram: rows_of(&gram),
        rho_bar: rho,
        rho_in_domain: bound.is_some(),
        deviation: rows_of(&deviation),
        r_inf_norm,
        bound,
        bound_satisfied: bound.is_some_and(|b| r_inf_norm <= b),
        min_inside,
        max_outside,
        most_parallel_satisfied: min_inside > max_outside,
    })
}

/// Dual certificate for a same-sign source: `c = sgn · Σ z_j C e_j/‖C e_j‖`
/// with `G z = 1` on the support.
pub fn dual_certificate(op: &WeightedOperator, x_star: &SourceConfiguration) -> Result<CertificateReport> {
    let (support, signs) = split_source(op, x_star)?;
    let sign = signs[0];
    if signs.iter().any(|&v| v != sign) {
        return Err(Error::InvalidInput("the source entries must share one sign".into()));
    }
    let gram = normalized_gram_on(op, &support);
    let svd = gram.clone().svd(false, false);
    let sv = &svd.singular_values;
    let rcond = sv.min() / sv.max();
    if !(rcond >= GRAM_RCOND_TOLERANCE) {
        return Err(Error::SingularGram(rcond));
    }
    let ones = DVector::from_element(support.len(), 1.0);
    let z = gram.lu().solve(&ones).ok_or(Error::SingularGram(0.0))?;
    let coefficients = &z * sign;
    Ok(evaluate(op, support, &coefficients, &signs, z))
}

/// Dual certificate `c = Σ sgn(x*_j) C e_j/‖C e_j‖` for pairwise orthogonal images.
pub fn dual_certificate_disjoint(op: &WeightedOperator, x_star: &SourceConfiguration) -> Result<CertificateReport> {
    let (support, signs) = split_source(op, x_star)?;
    let gram = normalized_gram_on(op, &support);
    for a in 0..support.len() {
        for b in a + 1..support.len() {
            if gram[(a, b)].abs() > ORTHOGONALITY_TOLERANCE {
                return Err(Error::NotOrthogonal(support[a], support[b]));
            }
        }
    }
    let coefficients = DVector::from_vec(signs.clone());
    let z = coefficients.clone();
    Ok(evaluate(op, support, &coefficients, &signs, z))
}

fn split_source(op: &WeightedOperator, x_star: &SourceConfiguration) -> Result<(Vec<usize>, Vec<f64>)> {
    if x_star.is_empty() {
        return Err(Error::InvalidInput("the source configuration is empty".into()));
    }
    let support = x_star.support();
    crate::weighting::validate_index_set(&support, op.cols())?;
    let signs = x_star.entries().iter().map(|&(_, v)| v.signum()).collect();
    Ok((support, signs))
}

fn evaluate(op: &WeightedOperator, support: Vec<usize>, coefficients: &DVector<f64>, signs: &[f64], z: DVector<f64>) -> CertificateReport {
    let norms = op.column_norms();
    let compressed = op.compressed();
    let mut c = DVector::zeros(op.rows());
    for (k, &j) in support.iter().enumerate() {
        c.axpy(coefficients[k] / norms[j], &compressed.column(j), 1.0);
    }
    // ⟨C eᵢ/‖C eᵢ‖, c⟩ for every column
    let correlations = compressed.tr_mul(&c).component_div(&norms);
    let mut member = vec![false; op.cols()];
    let mut cond1_residual = 0.0f64;
    for (k, &j) in support.iter().enumerate() {
        member[j] = true;
        cond1_residual = cond1_residual.max((correlations[j] - signs[k]).abs());
    }
    let outside = (0..op.cols()).filter(|&i| !member[i]).map(|i| correlations[i].abs()).fold(None, |acc: Option<f64>, v| {
        Some(acc.map_or(v, |a| a.max(v)))
    });
    let cond2_margin = outside.map_or(1.0, |m| 1.0 - m);
    CertificateReport {
        support,
        c: op.expand(&c).iter().copied().collect(),
        z_nonnegative: z.iter().all(|&v| v >= 0.0),
        z: z.iter().copied().collect(),
        cond1_residual,
        cond2_margin,
        valid: cond1_residual <= COND1_TOLERANCE && cond2_margin > COND2_MARGIN,
    }
}

/// Nonzero pattern of `v` after nullifying entries at or below
/// `max(τ, SUPPORT_FLOOR)·‖v‖∞`.
pub fn thresholded_support(v: &DVector<f64>, tau: f64) -> Vec<bool> {
    let cutoff = tau.max(SUPPORT_FLOOR) * v.amax();
    v.iter().map(|x| x.abs() > cutoff).collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("threshold {tau} outside [0, 1]")));
    }
    Ok(())
}

/// Whether the thresholded vectors `CᵀC e_j`, `j ∈ support`, have pairwise
/// disjoint nonzero patterns.
pub fn check_disjoint_supports(op: &WeightedOperator, support: &[usize], tau: f64) -> Result<bool> {
    check_tau(tau)?;
    crate::weighting::validate_index_set(support, op.cols())?;
    let patterns: Vec<Vec<bool>> = support.iter().map(|&j| thresholded_support(&op.gram_column(j), tau)).collect();
    for a in 0..patterns.len() {
        for b in a + 1..patterns.len() {
            if overlap_count(&patterns[a], &patterns[b]) > 0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Number of positions where both patterns are set.
pub fn overlap_count(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| **x && **y).count()
}

/// `0, 0.01, …, 1`.
pub fn default_tau_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Overlap ratio `ν/n` of the thresholded `CᵀC e_j` and `CᵀC e_k` for each `τ`.
pub fn disjointness_overlap(op: &WeightedOperator, j: usize, k: usize, taus: &[f64]) -> Result<OverlapReport> {
    check_index(op, j)?;
    check_index(op, k)?;
    if j == k {
        return Err(Error::InvalidInput("the pair must consist of two distinct indices".into()));
    }
    for &t in taus {
        check_tau(t)?;
    }
    let (vj, vk) = (op.gram_column(j), op.gram_column(k));
    let n = op.cols();
    let ratios = taus
        .iter()
        .map(|&t| overlap_count(&thresholded_support(&vj, t), &thresholded_support(&vk, t)) as f64 / n as f64)
        .collect();
    Ok(OverlapReport { pair: (j, k), tau_values: taus.to_vec(), ratios, n })
}

fn check_index(op: &WeightedOperator, j: usize) -> Result<()> {
    if j >= op.cols() {
        return Err(Error::InvalidInput(format!("index {j} out of range 0..{}", op.cols())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_basis_pursuit, SolverConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn op(rows: usize, cols: usize, data: &[f64]) -> WeightedOperator {
        WeightedOperator::from_matrix(DMatrix::from_row_slice(rows, cols, data)).unwrap()
    }

    fn identity(n: usize) -> WeightedOperator {
        WeightedOperator::from_matrix(DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn backprojection_examples() {
        let c = op(2, 2, &[1.0, 0.5, 0.0, 0.5]);
        let v0 = weighted_backprojection(&c, 0).unwrap();
        assert_relative_eq!(v0[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(v0[1], 0.5f64.sqrt(), epsilon = 1e-15);
        let v1 = weighted_backprojection(&c, 1).unwrap();
        assert_relative_eq!(v1[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(v1[1], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(argmax_source(&c, 1).unwrap(), 1);
        assert_eq!(argmax_source(&c, 0).unwrap(), 0);

        let d = op(3, 3, &[2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0]);
        let v = weighted_backprojection(&d, 1).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 3.0, 0.0]);
    }

    #[test]
    fn backprojection_is_norm_times_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = WeightedOperator::from_matrix(DMatrix::from_fn(5, 7, |_, _| rng.random::<f64>() - 0.5)).unwrap();
        let unit = c.normalized_columns();
        let norms = c.column_norms();
        for j in 0..7 {
            let v = weighted_backprojection(&c, j).unwrap();
            for i in 0..7 {
                let oracle = norms[j] * unit.column(j).dot(&unit.column(i));
                assert!((v[i] - oracle).abs() <= 1e-13);
            }
            assert_eq!(argmax_source(&c, j).unwrap(), j);
        }
    }

    #[test]
    fn argmax_identity_and_tie() {
        assert_eq!(argmax_source(&identity(4), 2).unwrap(), 2);
        let parallel = op(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(argmax_source(&parallel, 0), Err(Error::AssumptionViolated(0, 1))));
    }

    #[test]
    fn coherence_examples() {
        assert_eq!(mutual_coherence(&identity(3)), 0.0);
        let c = op(2, 2, &[1.0, 1.0, 0.0, 1e-3]);
        let oracle = 1.0 / (1.0f64 + 1e-6).sqrt();
        let mu = mutual_coherence(&c);
        assert!((mu - oracle).abs() < 1e-15 && mu < 1.0);
    }

    #[test]
    fn q_examples() {
        assert_eq!(q_closed_form_solution(0.5, 3).unwrap().as_slice(), &[0.5; 3]);
        let y = q_closed_form_solution(0.5, 2).unwrap();
        let direct = q_matrix(0.5, 2).lu().solve(&DVector::from_element(2, 1.0)).unwrap();
        assert_relative_eq!(y, direct, epsilon = 1e-15);
        assert_relative_eq!(y[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(q_inverse_inf_norm(0.5, 3).unwrap(), 2.5, epsilon = 1e-15);
        assert!((q_inverse_inf_norm(1e-9, 4).unwrap() - 1.0).abs() < 1e-8);
        assert_relative_eq!(r_perturbation_bound(0.5, 2).unwrap(), 0.25, epsilon = 1e-15);
        for (rho, s) in [(0.0, 3), (1.0, 3), (-0.2, 3), (0.5, 1), (f64::NAN, 2)] {
            assert!(matches!(q_closed_form_solution(rho, s), Err(Error::DomainError(_))));
            assert!(matches!(q_inverse_inf_norm(rho, s), Err(Error::DomainError(_))));
            assert!(matches!(r_perturbation_bound(rho, s), Err(Error::DomainError(_))));
        }
    }

    #[test]
    fn perturbed_two_by_two() {
        let m = q_matrix(0.5, 2) + DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.1, 0.0]);
        let x = m.lu().solve(&DVector::from_element(2, 1.0)).unwrap();
        assert_relative_eq!(x[0], 0.625, epsilon = 1e-14);
        assert_relative_eq!(x[1], 0.625, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn bound_is_half_reciprocal_norm(rho in 0.01f64..0.99, s in 2usize..40) {
            let prod = r_perturbation_bound(rho, s).unwrap() * 2.0 * q_inverse_inf_norm(rho, s).unwrap();
            prop_assert!((prod - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn q_random_pairs(rho in 0.001f64..0.999, s in 2usize..30) {
            let q = q_matrix(rho, s);
            let y = q_closed_form_solution(rho, s).unwrap();
            prop_assert!((&q * &y - DVector::from_element(s, 1.0)).amax() <= 1e-12);
            let dense = inf_norm(&q.try_inverse().unwrap());
            let formula = q_inverse_inf_norm(rho, s).unwrap();
            prop_assert!((formula - dense).abs() <= 1e-10 * dense);
        }
    }

    fn equal_angle_columns(rho: f64, s: usize, extra: usize) -> DMatrix<f64> {
        // s unit columns with pairwise cosine rho, followed by `extra` columns
        // orthogonal to them
        let l = q_matrix(rho, s).cholesky().unwrap().l();
        let m = s + extra;
        let mut c = DMatrix::zeros(m, m);
        c.view_mut((0, 0), (s, s)).copy_from(&l.transpose());
        for k in 0..extra {
            c[(s + k, s + k)] = 1.0 + 0.1 * k as f64;
        }
        c
    }

    #[test]
    fn equal_off_diagonals_give_zero_deviation() {
        let c = WeightedOperator::from_matrix(equal_angle_columns(0.3, 4, 3)).unwrap();
        let g = analyze_parallel_recovery(&c, &[0, 1, 2, 3], None).unwrap();
        assert!((g.rho_bar - 0.3).abs() < 1e-14);
        assert!(g.r_inf_norm < 1e-14);
        assert!(g.bound_satisfied && g.rho_in_domain && g.most_parallel_satisfied);
        for i in 0..4 {
            assert!((g.gram[i][i] - 1.0).abs() <= 1e-12);
            assert_eq!(g.deviation[i][i], 0.0);
            for j in 0..4 {
                assert_eq!(g.gram[i][j], g.gram[j][i]);
            }
        }
    }

    #[test]
    fn orthonormal_support_is_outside_domain() {
        let g = analyze_parallel_recovery(&identity(4), &[0, 2], None).unwrap();
        assert_eq!(g.rho_bar, 0.0);
        assert!(!g.rho_in_domain && g.bound.is_none() && !g.bound_satisfied);
        assert!(analyze_parallel_recovery(&identity(4), &[1], None).is_err());
    }

    /// Three unit columns at cosine 0.6 ± 0.01, the rest nearly orthogonal to them.
    fn coherent_fixture() -> (WeightedOperator, Vec<usize>) {
        let target = DMatrix::from_row_slice(3, 3, &[1.0, 0.61, 0.6, 0.61, 1.0, 0.59, 0.6, 0.59, 1.0]);
        let l = target.cholesky().unwrap().l();
        let (m, n) = (10, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut c = DMatrix::zeros(m, n);
        let support = vec![2, 5, 7];
        for (k, &j) in support.iter().enumerate() {
            for r in 0..3 {
                c[(r, j)] = l[(k, r)];
            }
        }
        let mut next = 3;
        for j in 0..n {
            if support.contains(&j) {
                continue;
            }
            c[(next % m, j)] = 1.0;
            for r in 0..3 {
                c[(r, j)] = 0.01 * (rng.random::<f64>() - 0.5);
            }
            next += 1;
        }
        (WeightedOperator::from_matrix(c).unwrap(), support)
    }

    #[test]
    fn coherent_fixture_recovers_by_basis_pursuit() {
        let (c, support) = coherent_fixture();
        let g = analyze_parallel_recovery(&c, &support, None).unwrap();
        assert!((g.rho_bar - 0.6).abs() < 0.01);
        assert!(g.bound_satisfied && g.most_parallel_satisfied, "{g:?}");
        let x_star = SourceConfiguration::new(support.iter().map(|&j| (j, 1.0)).collect(), c.cols()).unwrap();
        let cert = dual_certificate(&c, &x_star).unwrap();
        assert!(cert.valid && cert.z_nonnegative, "{cert:?}");
        let b = c.apply(&x_star.to_dense(c.cols())).unwrap();
        let res = solve_basis_pursuit(&c, &b, &SolverConfig::default()).unwrap();
        assert!((&res.x - x_star.to_dense(c.cols())).amax() <= 1e-4);
        assert!(res.support.iter().all(|j| support.contains(j)));
    }

    #[test]
    fn certificate_single_identity_source() {
        let x = SourceConfiguration::single(1, 3).unwrap();
        let cert = dual_certificate(&identity(3), &x).unwrap();
        assert_eq!(cert.c, vec![0.0, 1.0, 0.0]);
        assert_eq!(cert.cond1_residual, 0.0);
        assert_eq!(cert.cond2_margin, 1.0);
        assert!(cert.valid);
    }

    #[test]
    fn certificate_equal_angle_fixture() {
        let c = WeightedOperator::from_matrix(equal_angle_columns(0.5, 3, 2)).unwrap();
        let x = SourceConfiguration::new(vec![(0, 2.0), (1, 1.0), (2, 0.5)], 5).unwrap();
        let cert = dual_certificate(&c, &x).unwrap();
        let oracle = q_closed_form_solution(0.5, 3).unwrap();
        for k in 0..3 {
            assert!((cert.z[k] - oracle[k]).abs() <= 1e-10);
        }
        assert!(cert.cond1_residual <= 1e-12 && cert.valid);
        let mixed = SourceConfiguration::new(vec![(0, 1.0), (1, -1.0)], 5).unwrap();
        assert!(dual_certificate(&c, &mixed).is_err());
    }

    #[test]
    fn certificate_detects_singular_gram() {
        let c = op(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let x = SourceConfiguration::new(vec![(0, 1.0), (1, 1.0)], 3).unwrap();
        assert!(matches!(dual_certificate(&c, &x), Err(Error::SingularGram(_))));
    }

    #[test]
    fn disjoint_certificate_examples() {
        let x = SourceConfiguration::new(vec![(0, 1.0), (1, -1.0)], 3).unwrap();
        let cert = dual_certificate_disjoint(&identity(3), &x).unwrap();
        assert_eq!(cert.c, vec![1.0, -1.0, 0.0]);
        assert_eq!(cert.cond1_residual, 0.0);
        assert_eq!(cert.cond2_margin, 1.0);
        let skew = op(2, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(dual_certificate_disjoint(&skew, &x), Err(Error::NotOrthogonal(0, 1))));
    }

    #[test]
    fn certificates_agree_on_orthogonal_positive_sources() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>() - 0.5).qr().q();
        let scales = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.5, 3.0, 1.5, 1.0]));
        let c = WeightedOperator::from_matrix(q * scales).unwrap();
        let x = SourceConfiguration::new(vec![(1, 1.0), (4, 3.0)], 6).unwrap();
        let a = dual_certificate(&c, &x).unwrap();
        let b = dual_certificate_disjoint(&c, &x).unwrap();
        for (u, v) in a.c.iter().zip(&b.c) {
            assert!((u - v).abs() <= 1e-12);
        }
        assert!(a.valid && b.valid);
    }

    #[test]
    fn disjoint_support_examples() {
        assert!(check_disjoint_supports(&identity(4), &[0, 1, 3], 0.0).unwrap());
        assert!(check_disjoint_supports(&identity(4), &[0, 1, 3], 0.7).unwrap());
        let u = thresholded_support(&DVector::from_vec(vec![1.0, 1.0, 0.0]), 0.0);
        let v = thresholded_support(&DVector::from_vec(vec![0.0, 1.0, 1.0]), 0.0);
        assert_eq!(overlap_count(&u, &v), 1);
        let chain = op(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        assert!(!check_disjoint_supports(&chain, &[0, 1], 0.0).unwrap());
        assert!(!check_disjoint_supports(&chain, &[0, 2], 0.0).unwrap());
        // CᵀC e_0 = (1,1,0) keeps only its tied maxima at τ = 0.99, both shared
        assert!(!check_disjoint_supports(&chain, &[0, 2], 0.99).unwrap());
        assert!(check_disjoint_supports(&chain, &[0, 2], 1.0).unwrap());
        assert!(check_disjoint_supports(&chain, &[0, 2], 1.5).is_err());
    }

    #[test]
    fn overlap_examples() {
        // CᵀC e_0 = (1,1,0), CᵀC e_2 = (0,1,1)
        let chain = op(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let r = disjointness_overlap(&chain, 0, 2, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(r.n, 3);
        assert_relative_eq!(r.ratios[0], 1.0 / 3.0);
        assert_eq!(r.ratios[2], 0.0);
        assert!(disjointness_overlap(&chain, 1, 1, &[0.0]).is_err());
        assert_eq!(default_tau_grid().len(), 101);
        assert_eq!(*default_tau_grid().last().unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn overlap_is_monotone_and_matches_brute_force(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = WeightedOperator::from_matrix(DMatrix::from_fn(4, 9, |_, _| rng.random::<f64>() - 0.5)).unwrap();
            let taus = default_tau_grid();
            let r = disjointness_overlap(&c, 0, 5, &taus).unwrap();
            prop_assert!(r.ratios.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(r.ratios.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let full = c.c_matrix();
            let gram = full.tr_mul(&full);
            for (&t, &ratio) in taus.iter().zip(&r.ratios) {
                let (a, b) = (gram.column(0), gram.column(5));
                let (ca, cb) = (t.max(SUPPORT_FLOOR) * a.amax(), t.max(SUPPORT_FLOOR) * b.amax());
                let count = (0..9).filter(|&i| a[i].abs() > ca && b[i].abs() > cb).count();
                prop_assert_eq!(ratio, count as f64 / 9.0);
            }
        }
    }

    #[test]
    fn perturbation_bound_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut worst = f64::INFINITY;
        for _ in 0..1000 {
            let s = rng.random_range(2..=12);
            let rho = rng.random_range(0.05..0.95);
            let bound = r_perturbation_bound(rho, s).unwrap();
            let mut r = DMatrix::from_fn(s, s, |i, j| if i == j { 0.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
            r *= bound / inf_norm(&r);
            let x = (q_matrix(rho, s) + r).lu().solve(&DVector::from_element(s, 1.0)).unwrap();
            worst = worst.min(x.min());
        }
        assert!(worst >= -1e-12, "min component {worst}");
    }
}
