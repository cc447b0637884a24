//! Weighted ℓ¹ solvers for `½‖Cx − b‖₂² + α‖Wx‖₁` and its basis-pursuit limit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weighting::WeightedOperator;

/// Entries with `|x_i| > SUPPORT_THRESHOLD · max|x|` count as support.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;
const POWER_TOLERANCE: f64 = 1e-9;
const POWER_MAX_ITERATIONS: usize = 10_000;
const KKT_CHECK_INTERVAL: usize = 25;
// path join events whose correlation tracks the active set this closely are skipped
const PATH_PARALLEL_TOLERANCE: f64 = 1e-9;
// relative magnitudes below which entries are dropped before refinement
const POLISH_CUTOFFS: [f64; 4] = [1e-2, 1e-4, 1e-6, 0.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub alpha: f64,
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub kkt_tolerance: f64,
    pub continuation_steps: usize,
    pub restart: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            max_iterations: 50_000,
            rel_tolerance: 1e-12,
            kkt_tolerance: 1e-8,
            continuation_steps: 6,
            restart: true,
        }
    }
}

impl SolverConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidInput(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.rel_tolerance > 0.0 && self.kkt_tolerance > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub objective_history: Vec<f64>,
    pub kkt_residual: f64,
    pub converged: bool,
    pub support: Vec<usize>,
    /// `‖Cx − b‖₂ / ‖b‖₂`, reported by the basis-pursuit solver.
    pub feasibility_residual: Option<f64>,
    pub restarts: usize,
    /// Whether the final iterate came from the active-set refinement.
    pub polished: bool,
}

impl SolveResult {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// `½‖Cx − b‖₂² + α Σ wᵢ|xᵢ|`.
pub fn objective(op: &WeightedOperator, b: &DVector<f64>, alpha: f64, x: &DVector<f64>) -> Result<f64> {
    check_dims(op, b, x)?;
    let r = op.compressed() * x - b;
    Ok(0.5 * r.norm_squared() + alpha * weighted_l1(op.weights(), x))
}

/// Maximum violation of the subgradient optimality conditions at `x`.
pub fn kkt_residual(op: &WeightedOperator, b: &DVector<f64>, alpha: f64, x: &DVector<f64>) -> Result<f64> {
    check_dims(op, b, x)?;
    let g = op.compressed().tr_mul(&(op.compressed() * x - b));
    Ok(kkt_from_gradient(&g, op.weights(), alpha, x))
}

fn kkt_from_gradient(g: &DVector<f64>, w: &DVector<f64>, alpha: f64, x: &DVector<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let v = if x[i] != 0.0 {
            (g[i] + alpha * w[i] * x[i].signum()).abs()
        } else {
            (g[i].abs() - alpha * w[i]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// `σ_max(C)²` by power iteration on `CᵀC`.
pub fn operator_norm_sq(c: &DMatrix<f64>) -> f64 {
    let n = c.ncols();
    if n == 0 {
        return 0.0;
    }
    // fixed start vector, not aligned with any coordinate axis
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERATIONS {
        let u = c.tr_mul(&(c * &v));
        let next = v.dot(&u);
        let norm = u.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = u / norm;
        if (next - lambda).abs() <= POWER_TOLERANCE * next {
            return next.max(norm);
        }
        lambda = next;
    }
    lambda
}

/// `sign(vᵢ)·max(|vᵢ| − θᵢ, 0)`.
pub fn weighted_soft_threshold(v: &DVector<f64>, thresholds: &DVector<f64>) -> DVector<f64> {
    assert_eq!(v.len(), thresholds.len(), "length mismatch");
    v.zip_map(thresholds, |vi, t| {
        let mag = vi.abs() - t;
        if mag > 0.0 {
            mag.copysign(vi)
        } else {
            0.0
        }
    })
}

/// `γ_α e_j` with `γ_α = 1 − α/w_j`.
pub fn closed_form_single_source(op: &WeightedOperator, j: usize, alpha: f64) -> Result<DVector<f64>> {
    if j >= op.cols() {
        return Err(Error::InvalidInput(format!("index {j} out of range 0..{}", op.cols())));
    }
    let w = op.weights()[j];
    if alpha >= w {
        return Err(Error::AlphaTooLarge { alpha, weight: w });
    }
    let mut x = DVector::zeros(op.cols());
    x[j] = 1.0 - alpha / w;
    Ok(x)
}

/// Weighted lasso from `x = 0`.
///
/// The regularization path (see [`lasso_path`]) is tried first and its end
/// point is returned when its KKT residual meets `kkt_tolerance`; path
/// breakpoints count as iterations. Otherwise the accelerated proximal
/// gradient iteration runs, seeded with the path end point when one exists
/// and from zero if that seed does not converge.
pub fn solve_weighted_lasso(op: &WeightedOperator, b: &DVector<f64>, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let x0 = DVector::zeros(op.cols());
    check_dims(op, b, &x0)?;
    let Some((seed, steps)) = lasso_path(op.compressed(), b, op.weights(), cfg.alpha, cfg.max_iterations) else {
        return solve_weighted_lasso_from(op, b, cfg, &x0);
    };
    let kkt = kkt_residual(op, b, cfg.alpha, &seed)?;
    if kkt <= cfg.kkt_tolerance {
        let history = vec![objective(op, b, cfg.alpha, &x0)?, objective(op, b, cfg.alpha, &seed)?];
        return Ok(SolveResult {
            support: support_of(&seed),
            x: seed,
            iterations: steps,
            objective_history: history,
            kkt_residual: kkt,
            converged: true,
            feasibility_residual: None,
            restarts: 0,
            polished: false,
        });
    }
    let budget = SolverConfig { max_iterations: cfg.max_iterations - steps, ..cfg.clone() };
    match solve_weighted_lasso_from(op, b, &budget, &seed) {
        Ok(mut r) => {
            r.iterations += steps;
            Ok(r)
        }
        Err(_) => solve_weighted_lasso_from(op, b, cfg, &x0),
    }
}

/// Follows the piecewise-linear solution path of the weighted lasso from
/// `α = max|cᵢᵀb|/wᵢ` down to `alpha`, adding and dropping one coordinate per
/// breakpoint. Returns the end point and the number of breakpoints, or `None`
/// when an active Gram matrix is numerically singular or `budget` is exhausted.
pub fn lasso_path(c: &DMatrix<f64>, b: &DVector<f64>, w: &DVector<f64>, alpha: f64, budget: usize) -> Option<(DVector<f64>, usize)> {
    let n = c.ncols();
    let inv_w = w.map(|v| 1.0 / v);
    let correlations = |r: &DVector<f64>| c.tr_mul(r).component_mul(&inv_w);
    let mut corr = correlations(b);
    let mut lambda = corr.amax();
    if lambda <= alpha {
        return Some((DVector::zeros(n), 0));
    }
    let first = corr.iamax();
    let mut active = vec![first];
    let mut signs = vec![corr[first].signum()];
    let mut in_active = vec![false; n];
    in_active[first] = true;
    let mut blocked = None;

    for step in 1..=budget {
        let k = active.len();
        if k > c.nrows() {
            return None;
        }
        let scaled = DMatrix::from_fn(c.nrows(), k, |r, q| c[(r, active[q])] * inv_w[active[q]]);
        let chol = scaled.tr_mul(&scaled).cholesky()?;
        let s = DVector::from_vec(signs.clone());
        let z = chol.solve(&(scaled.tr_mul(b) - &s * lambda));
        let d = chol.solve(&s);
        if !z.iter().chain(d.iter()).all(|v| v.is_finite()) {
            return None;
        }
        let residual = b - &scaled * &z;
        corr = correlations(&residual);
        let v = correlations(&(&scaled * &d));

        let floor = 1e-14 * lambda;
        let mut gamma = lambda - alpha;
        let mut event = None;
        for i in (0..n).filter(|&i| !in_active[i] && blocked != Some(i)) {
            for (num, den, sign) in [(lambda - corr[i], 1.0 - v[i], 1.0), (lambda + corr[i], 1.0 + v[i], -1.0)] {
                if den > PATH_PARALLEL_TOLERANCE {
                    let g = num / den;
                    if g > floor && g < gamma {
                        gamma = g;
                        event = Some((i, sign, true));
                    }
                }
            }
        }
        for q in 0..k {
            // a coordinate that just joined sits at zero up to rounding
            if z[q] * signs[q] > 0.0 && z[q] * d[q] < 0.0 {
                let g = -z[q] / d[q];
                if g > floor && g < gamma {
                    gamma = g;
                    event = Some((q, 0.0, false));
                }
            }
        }
        lambda -= gamma;
        let z = z + d * gamma;
        match event {
            None => {
                let mut x = DVector::zeros(n);
                for (q, &i) in active.iter().enumerate() {
                    x[i] = z[q] * inv_w[i];
                }
                return Some((x, step));
            }
            Some((i, sign, true)) => {
                active.push(i);
                signs.push(sign);
                in_active[i] = true;
                blocked = None;
            }
            Some((q, _, false)) => {
                let i = active.remove(q);
                signs.remove(q);
                in_active[i] = false;
                blocked = Some(i);
            }
        }
    }
    None
}

/// Accelerated proximal gradient with function-value restart, run over a
/// growing working set of columns.
///
/// Each round solves the problem restricted to the working set (step
/// `1/σ_max(C_S)²`), then adds the coordinates outside it whose gradient
/// violates `|gᵢ| ≤ α wᵢ`. Converged means a round finished with the last step
/// moving the iterate by at most `rel_tolerance` (relative), the KKT residual
/// at most `kkt_tolerance`, and no violators left. `max_iterations` bounds the
/// total over all rounds. Otherwise [`Error::NotConverged`] carries the final
/// iterate.
pub fn solve_weighted_lasso_from(
    op: &WeightedOperator,
    b: &DVector<f64>,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
) -> Result<SolveResult> {
    cfg.validate()?;
    check_dims(op, b, x0)?;
    let c = op.compressed();
    let w = op.weights();
    let alpha = cfg.alpha;
    let n = op.cols();

    let mut x = x0.clone();
    let mut in_set = vec![false; n];
    let mut working: Vec<usize> = (0..n).filter(|&i| x[i] != 0.0).collect();
    for &i in &working {
        in_set[i] = true;
    }
    let mut history = vec![0.5 * (c * &x - b).norm_squared() + alpha * weighted_l1(w, &x)];
    let mut iterations = 0;
    let mut restarts = 0;
    let mut polished = false;
    let mut converged = false;
    // a warm start still needs one round on its own support
    let mut inner_converged = working.is_empty();

    loop {
        let g = c.tr_mul(&(c * &x - b));
        let mut violators: Vec<(usize, f64)> = (0..n)
            .filter(|&i| !in_set[i])
            .map(|i| (i, g[i].abs() / w[i] - alpha))
            .filter(|&(_, v)| v > 0.0)
            .collect();
        if inner_converged && violators.is_empty() {
            converged = kkt_from_gradient(&g, w, alpha, &x) <= cfg.kkt_tolerance;
            break;
        }
        if iterations >= cfg.max_iterations {
            break;
        }
        violators.sort_by(|p, q| q.1.total_cmp(&p.1).then(p.0.cmp(&q.0)));
        let grow = (working.len() / 2).max(1);
        for &(i, _) in violators.iter().take(grow) {
            in_set[i] = true;
            working.push(i);
        }
        working.sort_unstable();

        let sub = c.select_columns(&working);
        let sub_w = DVector::from_iterator(working.len(), working.iter().map(|&i| w[i]));
        let sub_x = DVector::from_iterator(working.len(), working.iter().map(|&i| x[i]));
        let round = fista(&sub, b, &sub_w, alpha, cfg, sub_x, cfg.max_iterations - iterations);
        iterations += round.iterations;
        restarts += round.restarts;
        polished = round.polished;
        inner_converged = round.converged;
        history.extend_from_slice(&round.history[1..]);
        x.fill(0.0);
        for (k, &i) in working.iter().enumerate() {
            x[i] = round.x[k];
        }
        if !inner_converged && iterations >= cfg.max_iterations {
            break;
        }
    }
    let kkt = kkt_from_gradient(&c.tr_mul(&(c * &x - b)), w, alpha, &x);
    let result = SolveResult {
        support: support_of(&x),
        x,
        iterations,
        objective_history: history,
        kkt_residual: kkt,
        converged,
        feasibility_residual: None,
        restarts,
        polished,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::NotConverged(Box::new(result)))
    }
}

struct Round {
    x: DVector<f64>,
    iterations: usize,
    history: Vec<f64>,
    restarts: usize,
    converged: bool,
    polished: bool,
}

fn fista(
    c: &DMatrix<f64>,
    b: &DVector<f64>,
    w: &DVector<f64>,
    alpha: f64,
    cfg: &SolverConfig,
    x0: DVector<f64>,
    budget: usize,
) -> Round {
    let step = 1.0 / operator_norm_sq(c);
    let thresholds = w * (alpha * step);

    let mut x = x0;
    let mut cx = c * &x;
    let mut obj = 0.5 * (&cx - b).norm_squared() + alpha * weighted_l1(w, &x);
    let mut y = x.clone();
    let mut cy = cx.clone();
    let mut t = 1.0f64;
    let mut momentum = false;
    let mut history = vec![obj];
    let mut restarts = 0;
    let mut converged = false;
    let mut polished = false;
    let mut iterations = 0;

    for it in 1..=budget {
        iterations = it;
        let grad = c.tr_mul(&(&cy - b));
        let x_new = weighted_soft_threshold(&(&y - grad * step), &thresholds);
        let cx_new = c * &x_new;
        let obj_new = 0.5 * (&cx_new - b).norm_squared() + alpha * weighted_l1(w, &x_new);

        if cfg.restart && obj_new > obj {
            if momentum {
                y.copy_from(&x);
                cy.copy_from(&cx);
                t = 1.0;
                momentum = false;
                restarts += 1;
                continue;
            }
            // a plain proximal step that fails to descend means x is a fixed
            // point up to rounding
            let g = c.tr_mul(&(&cx - b));
            if kkt_from_gradient(&g, w, alpha, &x) <= cfg.kkt_tolerance {
                converged = true;
                break;
            }
        }

        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        let dx = &x_new - &x;
        let scale = x_new.norm().max(f64::MIN_POSITIVE);
        let rel_change = dx.norm() / scale;
        y = &x_new + &dx * beta;
        cy = &cx_new + (&cx_new - &cx) * beta;
        momentum = beta != 0.0;
        x = x_new;
        cx = cx_new;
        // without restart the objective may rise; history keeps the raw values
        obj = obj_new;
        t = t_new;
        history.push(obj);

        let settled = rel_change <= cfg.rel_tolerance || dx.amax() == 0.0;
        if settled || it % KKT_CHECK_INTERVAL == 0 {
            let g = c.tr_mul(&(&cx - b));
            if settled && kkt_from_gradient(&g, w, alpha, &x) <= cfg.kkt_tolerance {
                converged = true;
                break;
            }
            let accepted = POLISH_CUTOFFS.iter().filter_map(|&cut| polish(c, b, w, alpha, &x, cut, step, &thresholds)).find(|p| {
                p.objective <= obj && p.rel_change <= cfg.rel_tolerance && p.kkt <= cfg.kkt_tolerance
            });
            if let Some(p) = accepted {
                x = p.x;
                history.push(p.objective);
                converged = true;
                polished = true;
                break;
            }
        }
    }
    Round { x, iterations, history, restarts, converged, polished }
}

/// Basis pursuit `min ‖Wx‖₁ s.t. Cx = b` by α-continuation: the weighted lasso
/// is solved for a geometric sequence of `α` (factor 10) ending at
/// `10⁻⁸·‖Cᵀb‖∞ / min wᵢ`, each stage warm-started from the previous one.
pub fn solve_basis_pursuit(op: &WeightedOperator, b: &DVector<f64>, cfg: &SolverConfig) -> Result<SolveResult> {
    let zero = DVector::zeros(op.cols());
    check_dims(op, b, &zero)?;
    let steps = cfg.continuation_steps.max(1);
    let correlation = op.compressed().tr_mul(b).amax();
    let min_w = op.weights().min();
    if correlation == 0.0 {
        return Ok(SolveResult {
            support: Vec::new(),
            x: zero,
            iterations: 0,
            objective_history: vec![0.5 * b.norm_squared()],
            kkt_residual: 0.0,
            converged: true,
            feasibility_residual: Some(if b.norm() == 0.0 { 0.0 } else { 1.0 }),
            restarts: 0,
            polished: false,
        });
    }
    let alpha_final = 1e-8 * correlation / min_w;
    let mut x = zero;
    let mut total_iterations = 0;
    let mut total_restarts = 0;
    let mut history = Vec::new();
    let mut last = None;
    for stage in 0..steps {
        let alpha = alpha_final * 10f64.powi((steps - 1 - stage) as i32);
        let stage_cfg = SolverConfig { alpha, ..cfg.clone() };
        let res = match solve_weighted_lasso_from(op, b, &stage_cfg, &x) {
            Ok(r) => r,
            Err(Error::NotConverged(r)) => *r,
            Err(e) => return Err(e),
        };
        total_iterations += res.iterations;
        total_restarts += res.restarts;
        history.extend_from_slice(&res.objective_history);
        x = res.x.clone();
        last = Some(res);
    }
    let mut res = last.expect("at least one stage");
    let bnorm = b.norm();
    res.feasibility_residual = Some((op.compressed() * &res.x - b).norm() / bnorm);
    res.iterations = total_iterations;
    res.restarts = total_restarts;
    res.objective_history = history;
    if res.converged {
        Ok(res)
    } else {
        Err(Error::NotConverged(Box::new(res)))
    }
}

struct Polished {
    x: DVector<f64>,
    objective: f64,
    kkt: f64,
    rel_change: f64,
}

/// Solves the problem restricted to the entries of `x` above `cutoff·max|x|`, signs held
/// fixed, then takes one proximal step from that point. When the support and
/// signs are right the result is a fixed point of the iteration.
fn polish(
    c: &DMatrix<f64>,
    b: &DVector<f64>,
    w: &DVector<f64>,
    alpha: f64,
    x: &DVector<f64>,
    cutoff: f64,
    step: f64,
    thresholds: &DVector<f64>,
) -> Option<Polished> {
    let floor = cutoff * x.amax();
    let active: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0 && x[i].abs() > floor).collect();
    if active.is_empty() || active.len() > c.nrows() {
        return None;
    }
    let cs = c.select_columns(&active);
    let gram = cs.tr_mul(&cs);
    let signs = DVector::from_iterator(active.len(), active.iter().map(|&i| w[i] * x[i].signum()));
    let rhs = cs.tr_mul(b) - signs * alpha;
    let xs = gram.cholesky()?.solve(&rhs);
    if !xs.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut xp = DVector::zeros(x.len());
    for (k, &i) in active.iter().enumerate() {
        xp[i] = xs[k];
    }
    let grad = c.tr_mul(&(&cs * &xs - b));
    let next = weighted_soft_threshold(&(&xp - grad * step), thresholds);
    let rel_change = (&next - &xp).norm() / next.norm().max(f64::MIN_POSITIVE);
    let cn = c * &next;
    let objective = 0.5 * (&cn - b).norm_squared() + alpha * weighted_l1(w, &next);
    let kkt = kkt_from_gradient(&c.tr_mul(&(&cn - b)), w, alpha, &next);
    Some(Polished { x: next, objective, kkt, rel_change })
}

pub fn support_of(x: &DVector<f64>) -> Vec<usize> {
    let cutoff = SUPPORT_THRESHOLD * x.amax();
    x.iter().enumerate().filter(|(_, v)| v.abs() > cutoff && **v != 0.0).map(|(i, _)| i).collect()
}

fn weighted_l1(w: &DVector<f64>, x: &DVector<f64>) -> f64 {
    w.iter().zip(x.iter()).map(|(wi, xi)| wi * xi.abs()).sum()
}

fn check_dims(op: &WeightedOperator, b: &DVector<f64>, x: &DVector<f64>) -> Result<()> {
    if b.len() != op.rows() {
        return Err(Error::DimensionMismatch { expected: op.rows(), actual: b.len() });
    }
    if x.len() != op.cols() {
        return Err(Error::DimensionMismatch { expected: op.cols(), actual: x.len() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn identity_op(n: usize) -> WeightedOperator {
        WeightedOperator::from_matrix(DMatrix::identity(n, n)).unwrap()
    }

    fn e(n: usize, j: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[j] = 1.0;
        v
    }

    #[test]
    fn objective_examples() {
        let op = identity_op(2);
        let b = e(2, 0);
        assert_relative_eq!(objective(&op, &b, 0.25, &DVector::zeros(2)).unwrap(), 0.5);
        let x = DVector::from_vec(vec![0.75, 0.0]);
        assert_relative_eq!(objective(&op, &b, 0.25, &x).unwrap(), 0.21875, epsilon = 1e-16);
        assert!(objective(&op, &b, 0.25, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn operator_norm_examples() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        assert!((operator_norm_sq(&c) - 9.0).abs() <= 9e-6);
        assert!((operator_norm_sq(&DMatrix::identity(5, 5)) - 1.0).abs() <= 1e-6);
        let c = DMatrix::from_fn(5, 8, |i, j| ((i * 3 + j * 5) % 7) as f64 / 7.0 - 0.4);
        let oracle = c.clone().svd(false, false).singular_values.max().powi(2);
        assert!((operator_norm_sq(&c) - oracle).abs() <= 1e-6 * oracle);
    }

    #[test]
    fn soft_threshold_examples() {
        let v = DVector::from_vec(vec![1.0, -2.0]);
        let t = DVector::from_element(2, 0.5);
        assert_eq!(weighted_soft_threshold(&v, &t), DVector::from_vec(vec![0.5, -1.5]));
        assert_eq!(weighted_soft_threshold(&v, &DVector::zeros(2)), v);
        assert_eq!(weighted_soft_threshold(&v, &DVector::from_element(2, 2.0)), DVector::zeros(2));
    }

    proptest! {
        #[test]
        fn soft_threshold_is_the_prox(v in -3.0f64..3.0, theta in 0.0f64..2.0) {
            let u = weighted_soft_threshold(&DVector::from_element(1, v), &DVector::from_element(1, theta))[0];
            let f = |z: f64| 0.5 * (z - v).powi(2) + theta * z.abs();
            // brute-force scan
            let best = (-4000..=4000).map(|k| k as f64 * 1e-3).map(f).fold(f64::INFINITY, f64::min);
            prop_assert!(f(u) <= best + 1e-12);
        }
    }

    #[test]
    fn lasso_decoupled_identity() {
        let op = identity_op(2);
        let res = solve_weighted_lasso(&op, &e(2, 0), &SolverConfig::with_alpha(0.25)).unwrap();
        assert!((res.x[0] - 0.75).abs() <= 1e-12 && res.x[1] == 0.0);
        assert_eq!(res.support, vec![0]);
    }

    #[test]
    fn lasso_zero_data() {
        let op = WeightedOperator::from_matrix(DMatrix::from_fn(3, 5, |i, j| (i + 2 * j) as f64 + 1.0)).unwrap();
        let res = solve_weighted_lasso(&op, &DVector::zeros(3), &SolverConfig::default()).unwrap();
        assert_eq!(res.x, DVector::zeros(5));
        assert!(res.support.is_empty());
    }

    #[test]
    fn lasso_matches_closed_form_and_kkt_recomputes() {
        let c = DMatrix::from_fn(4, 9, |i, j| ((i * 5 + j * 3) % 11) as f64 / 11.0 + 0.05 * (i == j % 4) as u8 as f64);
        let op = WeightedOperator::from_matrix(c).unwrap();
        for j in [0, 4, 8] {
            let b = op.image(j);
            let cfg = SolverConfig::with_alpha(1e-3);
            let res = solve_weighted_lasso(&op, &b, &cfg).unwrap();
            let oracle = closed_form_single_source(&op, j, 1e-3).unwrap();
            assert!((&res.x - oracle).amax() <= 1e-6);
            assert_eq!(res.support, vec![j]);
            let again = kkt_residual(&op, &b, cfg.alpha, &res.x).unwrap();
            assert!((again - res.kkt_residual).abs() <= 1e-12);
            assert!(res.kkt_residual <= cfg.kkt_tolerance);
            let hist = &res.objective_history;
            let worst = hist.windows(2).map(|w| (w[1] - w[0]) / w[0]).fold(f64::MIN, f64::max);
            assert!(hist.windows(2).all(|w| w[1] <= w[0]), "worst rel increase {worst:e}");
            assert!(hist.iter().all(|&h| res.objective() <= h));
        }
    }

    #[test]
    fn closed_form_examples() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 1.0]));
        let op = WeightedOperator::from_matrix(c).unwrap();
        let x = closed_form_single_source(&op, 0, 1e-4).unwrap();
        assert_relative_eq!(x[0], 0.99, epsilon = 1e-14);
        let g: Vec<f64> = [1e-3, 1e-4, 1e-5].iter().map(|&a| closed_form_single_source(&op, 0, a).unwrap()[0]).collect();
        assert!(g[0] < g[1] && g[1] < g[2] && g[2] < 1.0);
        assert!(matches!(closed_form_single_source(&op, 0, 0.01), Err(Error::AlphaTooLarge { .. })));
    }

    #[test]
    fn basis_pursuit_recovers_orthogonal_support() {
        // columns 0..3 orthogonal, the rest mixtures
        let mut c = DMatrix::zeros(4, 7);
        for k in 0..4 {
            c[(k, k)] = 1.0 + k as f64;
        }
        for j in 4..7 {
            for k in 0..4 {
                c[(k, j)] = 0.3 + 0.1 * ((j + k) % 3) as f64;
            }
        }
        let op = WeightedOperator::from_matrix(c).unwrap();
        let x_star = DVector::from_vec(vec![1.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.0]);
        let b = op.apply(&x_star).unwrap();
        let res = solve_basis_pursuit(&op, &b, &SolverConfig::default()).unwrap();
        assert!((&res.x - &x_star).amax() <= 1e-4, "{:?}", res.x);
        assert!(res.feasibility_residual.unwrap() < 1e-6);
        let zero = solve_basis_pursuit(&op, &DVector::zeros(4), &SolverConfig::default()).unwrap();
        assert_eq!(zero.x, DVector::zeros(7));
    }

    #[test]
    fn not_converged_returns_iterate() {
        let c = DMatrix::from_fn(3, 6, |i, j| ((i + 1) * (j + 2)) as f64 % 5.0 + 0.5);
        let op = WeightedOperator::from_matrix(c).unwrap();
        let cfg = SolverConfig { max_iterations: 1, ..SolverConfig::with_alpha(1e-6) };
        let b = op.image(2) + op.image(4) * 0.5;
        match solve_weighted_lasso(&op, &b, &cfg) {
            Err(Error::NotConverged(r)) => {
                assert!(!r.converged);
                assert_eq!(r.iterations, 1);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        let op = identity_op(2);
        assert!(solve_weighted_lasso(&op, &e(2, 0), &SolverConfig::with_alpha(0.0)).is_err());
    }
}
