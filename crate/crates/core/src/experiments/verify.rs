//! Self-checks behind `wsr verify`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::certificates::{
    argmax_source, default_tau_grid, disjointness_overlap, dual_certificate, q_closed_form_solution, q_inverse_inf_norm,
    q_matrix, r_perturbation_bound,
};
use crate::error::{Error, Result};
use crate::fem::{transfer_boundary_trace, FemSystem, ForwardModel, SourceConfiguration};
use crate::solver::{closed_form_single_source, kkt_residual, solve_basis_pursuit, solve_weighted_lasso, SolverConfig};
use crate::linalg::column_norms;
use crate::weighting::{build_weighted_operator, WeightingScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Forward,
    Lemmas,
    Solver,
    Certificates,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "forward" => Suite::Forward,
            "lemmas" => Suite::Lemmas,
            "solver" => Suite::Solver,
            "certificates" => Suite::Certificates,
            "all" => Suite::All,
            other => return Err(Error::Parse(format!("unknown suite `{other}`"))),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Forward => "forward",
            Suite::Lemmas => "lemmas",
            Suite::Solver => "solver",
            Suite::Certificates => "certificates",
            Suite::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub suite: Suite,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{}] {}: {}", self.suite, self.name, self.detail)
    }
}

struct Checks {
    suite: Suite,
    out: Vec<CheckOutcome>,
}

impl Checks {
    fn record(&mut self, name: &'static str, check: impl FnOnce() -> Result<(bool, String)>) {
        let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        self.out.push(CheckOutcome { suite: self.suite, name, passed, detail });
    }
}

const GRID: usize = 8;

fn small_model() -> Result<ForwardModel> {
    ForwardModel::assemble(GRID, 1.0)
}

fn schemes(model: &ForwardModel) -> Vec<WeightingScheme> {
    vec![
        WeightingScheme::Identity,
        WeightingScheme::TruncatedPseudoInverse { k: model.rows() },
        WeightingScheme::RandomSparse { p: model.rows(), density: 0.3, seed: 7 },
    ]
}

fn forward(c: &mut Checks) -> Result<()> {
    let model = small_model()?;
    c.record("constant source", || {
        let eps = model.epsilon();
        let y = model.apply(&DVector::from_element(model.cols(), 1.0))?;
        let expected = model.system().boundary_mass_sqrt() * DVector::from_element(model.rows(), 1.0 / eps);
        let err = (&y - &expected).norm() / expected.norm();
        Ok((err <= 1e-10, format!("relative error {err:.2e}")))
    });
    c.record("columns match single solves", || {
        let j = model.grid().locate_node((0.375, 0.625));
        let x = SourceConfiguration::single(j, model.cols())?.to_dense(model.cols());
        let trace = model.system().boundary_trace(&x)?;
        let direct = model.system().boundary_mass_sqrt() * trace;
        let err = (model.matrix().column(j) - &direct).amax();
        Ok((err <= 1e-12 * direct.amax(), format!("max deviation {err:.2e}")))
    });
    c.record("boundary mass is symmetric positive definite", || {
        let m = model.system().boundary_mass();
        let asym = (m - m.transpose()).amax();
        let min_eig = m.clone().symmetric_eigenvalues().min();
        Ok((asym <= 1e-15 && min_eig > 0.0, format!("asymmetry {asym:.1e}, smallest eigenvalue {min_eig:.3e}")))
    });
    c.record("trace transfer keeps constants", || {
        let fine = FemSystem::assemble(2 * GRID, 1.0)?;
        let trace = DVector::from_element(fine.grid().boundary_node_count(), 2.5);
        let coarse = transfer_boundary_trace(fine.grid(), model.grid(), &trace)?;
        let err = coarse.iter().map(|v| (v - 2.5).abs()).fold(0.0, f64::max);
        Ok((err <= 1e-14, format!("max deviation {err:.1e}")))
    });
    Ok(())
}

fn lemmas(c: &mut Checks) -> Result<()> {
    let model = small_model()?;
    for scheme in schemes(&model) {
        let op = build_weighted_operator(model.matrix(), &scheme)?;
        let name = match scheme {
            WeightingScheme::Identity => "backprojection peaks at the source (identity)",
            WeightingScheme::TruncatedPseudoInverse { .. } => "backprojection peaks at the source (trunc_pinv)",
            _ => "backprojection peaks at the source (random_sparse)",
        };
        c.record(name, || {
            let misses: Vec<usize> = (0..op.cols()).filter(|&j| !matches!(argmax_source(&op, j), Ok(k) if k == j)).collect();
            Ok((misses.is_empty(), format!("{} of {} indices missed", misses.len(), op.cols())))
        });
    }
    c.record("weights are unit after normalization", || {
        let op = build_weighted_operator(model.matrix(), &WeightingScheme::Identity)?;
        let dev = column_norms(&op.normalized_columns()).iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        Ok((dev <= 1e-14, format!("max deviation {dev:.1e}")))
    });
    Ok(())
}

fn solver(c: &mut Checks) -> Result<()> {
    let model = small_model()?;
    let op = build_weighted_operator(model.matrix(), &WeightingScheme::RandomSparse { p: model.rows(), density: 0.3, seed: 7 })?;
    let j = model.grid().locate_node((0.5, 0.25));
    c.record("single source matches the closed form", || {
        let alpha = 0.1 * op.weights().min();
        let b = op.image(j);
        let r = solve_weighted_lasso(&op, &b, &SolverConfig::with_alpha(alpha))?;
        let exact = closed_form_single_source(&op, j, alpha)?;
        let err = (&r.x - &exact).amax();
        Ok((err <= 1e-9 * exact.amax(), format!("max deviation {err:.2e} after {} iterations", r.iterations)))
    });
    c.record("two-source lasso meets the KKT tolerance", || {
        let k = model.grid().locate_node((0.25, 0.75));
        let b = op.image(j) - op.image(k) * 0.5;
        let cfg = SolverConfig::with_alpha(1e-2 * op.weights().min());
        let r = solve_weighted_lasso(&op, &b, &cfg)?;
        let kkt = kkt_residual(&op, &b, cfg.alpha, &r.x)?;
        Ok((r.converged && kkt <= cfg.kkt_tolerance, format!("kkt {kkt:.2e}")))
    });
    c.record("basis pursuit recovers a single source", || {
        let r = solve_basis_pursuit(&op, &op.image(j), &SolverConfig::default())?;
        let mut e = DVector::zeros(op.cols());
        e[j] = 1.0;
        let err = (&r.x - e).amax();
        Ok((err <= 1e-4, format!("max deviation {err:.2e}")))
    });
    Ok(())
}

fn certificates(c: &mut Checks) -> Result<()> {
    c.record("closed-form Q solution", || {
        let mut worst: f64 = 0.0;
        for s in 2..=6 {
            for rho in [0.05, 0.3, 0.7, 0.95] {
                let q = q_closed_form_solution(rho, s)?;
                let res = q_matrix(rho, s) * q - DVector::from_element(s, 1.0);
                worst = worst.max(res.amax());
            }
        }
        Ok((worst <= 1e-12, format!("max residual {worst:.1e}")))
    });
    c.record("perturbation bound equals 1/(2 ||Q^-1||)", || {
        let mut worst: f64 = 0.0;
        for s in 2..=6 {
            for rho in [0.1, 0.5, 0.9] {
                let lhs = r_perturbation_bound(rho, s)? * 2.0 * q_inverse_inf_norm(rho, s)?;
                let dense = q_matrix(rho, s).try_inverse().ok_or(Error::SingularGram(0.0))?;
                let direct = dense.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
                worst = worst.max((lhs - 1.0).abs()).max((direct - q_inverse_inf_norm(rho, s)?).abs() / direct);
            }
        }
        Ok((worst <= 1e-12, format!("max deviation {worst:.1e}")))
    });
    let model = small_model()?;
    let op = build_weighted_operator(model.matrix(), &WeightingScheme::TruncatedPseudoInverse { k: model.rows() })?;
    c.record("single-source certificate", || {
        let j = model.grid().locate_node((0.5, 0.5));
        let cert = dual_certificate(&op, &SourceConfiguration::single(j, op.cols())?)?;
        Ok((cert.valid, format!("cond1 {:.1e}, margin {:.3e}", cert.cond1_residual, cert.cond2_margin)))
    });
    c.record("overlap is nonincreasing in tau", || {
        let (j, k) = (model.grid().locate_node((0.25, 0.5)), model.grid().locate_node((0.75, 0.5)));
        let r = disjointness_overlap(&op, j, k, &default_tau_grid())?;
        let ok = r.ratios.windows(2).all(|w| w[1] <= w[0]) && r.ratios.last() == Some(&0.0);
        Ok((ok, format!("ratio {:.3} at tau 0", r.ratios[0])))
    });
    Ok(())
}

/// Runs one suite (or all of them) and returns every outcome.
pub fn run_suite(suite: Suite) -> Vec<CheckOutcome> {
    let order = match suite {
        Suite::All => vec![Suite::Forward, Suite::Lemmas, Suite::Solver, Suite::Certificates],
        s => vec![s],
    };
    let mut all = Vec::new();
    for s in order {
        let mut checks = Checks { suite: s, out: Vec::new() };
        let setup = match s {
            Suite::Forward => forward(&mut checks),
            Suite::Lemmas => lemmas(&mut checks),
            Suite::Solver => solver(&mut checks),
            Suite::Certificates => certificates(&mut checks),
            Suite::All => unreachable!(),
        };
        if let Err(e) = setup {
            checks.out.push(CheckOutcome { suite: s, name: "setup", passed: false, detail: e.to_string() });
        }
        all.extend(checks.out);
    }
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_parse() {
        for s in ["forward", "lemmas", "solver", "certificates", "all"] {
            assert_eq!(s.parse::<Suite>().unwrap().to_string(), s);
        }
        assert!("fast".parse::<Suite>().is_err());
    }

    #[test]
    fn all_checks_pass() {
        let out = run_suite(Suite::All);
        assert!(out.len() >= 14);
        for o in &out {
            assert!(o.passed, "{o}");
        }
    }
}
