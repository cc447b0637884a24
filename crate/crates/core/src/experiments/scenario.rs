//! Data synthesis, inversion and reporting for one scenario.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certificates::{
    analyze_parallel_recovery, check_disjoint_supports, default_tau_grid, disjointness_overlap, dual_certificate,
    dual_certificate_disjoint, mutual_coherence, CertificateReport, GramAnalysis, OverlapReport,
};
use crate::error::{Error, Result};
use crate::experiments::artifacts::{write_heatmap, write_json, write_observation_csv, write_overlap_csv, write_solution_csv};
use crate::experiments::config::{
    ScenarioConfig, SchemeKind, DEFAULT_DENSITY, DEFAULT_K_NOISE_FREE, DEFAULT_K_NOISY, DEFAULT_SEED,
};
use crate::experiments::noise::add_noise;
use crate::fem::{transfer_boundary_trace, FemSystem, ForwardModel, Grid, SourceConfiguration};
use crate::solver::{kkt_residual, objective, solve_weighted_lasso, SolveResult};
use crate::weighting::{build_weighted_operator, check_nonparallel, WeightedOperator, WeightingScheme, NONPARALLEL_TOLERANCE};

/// Synthetic data on the inverse grid.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Noisy data `y` (after `M_∂^{1/2}`), one entry per coarse boundary node.
    pub y: DVector<f64>,
    pub clean: DVector<f64>,
    /// True sources mapped to inverse-grid nodes.
    pub truth: SourceConfiguration,
    /// Achieved `‖η‖₂/‖y‖₂`; `None` when no noise was drawn.
    pub noise_ratio: Option<f64>,
}

/// Nodes of `grid` nearest to each source, with amplitudes; zero amplitudes are dropped.
pub fn sources_on_grid(cfg: &ScenarioConfig, grid: &Grid) -> Result<SourceConfiguration> {
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for (k, s) in cfg.sources.iter().enumerate() {
        let node = grid.locate_node((s.location[0], s.location[1]));
        if let Some(prev) = cfg.sources[..k].iter().position(|t| grid.locate_node((t.location[0], t.location[1])) == node) {
            return Err(Error::Validation(format!(
                "sources {prev} and {k} fall on the same node of the {}-cell grid",
                grid.cells_per_side()
            )));
        }
        if s.amplitude != 0.0 {
            entries.push((node, s.amplitude));
        }
    }
    SourceConfiguration::new(entries, grid.node_count())
}

/// Builds the inverse-grid model for a scenario.
pub fn inverse_model(cfg: &ScenarioConfig) -> Result<ForwardModel> {
    ForwardModel::assemble(cfg.inverse_n, cfg.epsilon)
}

pub fn synthesize_observation(cfg: &ScenarioConfig) -> Result<Observation> {
    synthesize_with(cfg, &inverse_model(cfg)?)
}

/// Generates data on the forward grid, transfers the boundary trace to the
/// inverse grid, applies `M_∂^{1/2}` there and adds noise.
pub fn synthesize_with(cfg: &ScenarioConfig, coarse: &ForwardModel) -> Result<Observation> {
    cfg.validate()?;
    if coarse.grid().cells_per_side() != cfg.inverse_n {
        return Err(Error::InvalidInput("model does not match inverse_N".into()));
    }
    let truth = sources_on_grid(cfg, coarse.grid())?;
    let clean = if cfg.inverse_crime {
        coarse.apply(&truth.to_dense(coarse.cols()))?
    } else {
        let fine = FemSystem::assemble(cfg.forward_n, cfg.epsilon)?;
        let x_fine = sources_on_grid(cfg, fine.grid())?.to_dense(fine.grid().node_count());
        let trace = fine.boundary_trace(&x_fine)?;
        let coarse_trace = transfer_boundary_trace(fine.grid(), coarse.grid(), &trace)?;
        coarse.system().boundary_mass_sqrt() * coarse_trace
    };
    let y = add_noise(&clean, &cfg.noise)?;
    let noise_ratio = (cfg.noise.level > 0.0).then(|| (&y - &clean).norm() / clean.norm());
    Ok(Observation { y, clean, truth, noise_ratio })
}

/// Fills in scheme parameters the file left out. Returns the scheme and a
/// note for each default that was applied.
pub fn resolve_scheme(cfg: &ScenarioConfig, a: &DMatrix<f64>, truth: &SourceConfiguration) -> Result<(WeightingScheme, Vec<String>)> {
    let spec = &cfg.b_scheme;
    let mut notes = Vec::new();
    let scheme = match spec.b {
        SchemeKind::Identity => WeightingScheme::Identity,
        SchemeKind::TruncPinv => {
            let k = match spec.k {
                Some(k) => k,
                None => {
                    let wanted = if cfg.noise.level > 0.0 { DEFAULT_K_NOISY } else { DEFAULT_K_NOISE_FREE };
                    let limit = a.nrows().min(a.ncols());
                    if wanted > limit {
                        notes.push(format!("default k = {wanted} clamped to min(m, n) = {limit}"));
                    }
                    wanted.min(limit)
                }
            };
            WeightingScheme::TruncatedPseudoInverse { k }
        }
        SchemeKind::RandomSparse => WeightingScheme::RandomSparse {
            p: spec.p.unwrap_or(a.nrows()),
            density: spec.density.unwrap_or(DEFAULT_DENSITY),
            seed: spec.seed.unwrap_or(DEFAULT_SEED),
        },
        SchemeKind::PreOrth => {
            let indices = match &spec.indices {
                Some(v) => v.clone(),
                None => {
                    notes.push("pre_orth indices default to the true source nodes".into());
                    truth.support()
                }
            };
            WeightingScheme::PreOrthogonalizer { indices }
        }
    };
    Ok((scheme, notes))
}

/// Builds `(C, W)` for the scenario, honouring `unweighted`.
pub fn scenario_operator(cfg: &ScenarioConfig, model: &ForwardModel, truth: &SourceConfiguration) -> Result<(WeightedOperator, Vec<String>)> {
    let (scheme, notes) = resolve_scheme(cfg, model.matrix(), truth)?;
    let op = build_weighted_operator(model.matrix(), &scheme)?;
    Ok((if cfg.unweighted { op.with_unit_weights() } else { op }, notes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub nodes: Vec<usize>,
    /// Node with the largest `|x|` in the cluster.
    pub peak: usize,
    pub peak_value: f64,
    /// Cell distance from the peak to the nearest true source.
    pub nearest_source_cells: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub support: Vec<usize>,
    /// Per true source, cells to the nearest recovered support node.
    pub localization_error_cells: Vec<Option<usize>>,
    /// Node of the largest `|x|` and its distance to the nearest true source.
    pub peak_node: Option<usize>,
    pub peak_distance_cells: Option<usize>,
    pub clusters: Vec<Cluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub node: usize,
    pub amplitude: f64,
    pub x_coord: f64,
    pub y_coord: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub mutual_coherence: f64,
    pub nonparallel_violations: usize,
    pub nonparallel_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    pub pair: (usize, usize),
    pub first_zero_tau: Option<f64>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub level: f64,
    pub seed: u64,
    pub achieved_ratio: Option<f64>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub forward_n: usize,
    pub inverse_n: usize,
    pub inverse_crime: bool,
    pub epsilon: f64,
    pub alpha: f64,
    pub scheme: WeightingScheme,
    pub unweighted: bool,
    pub notes: Vec<String>,
    pub noise: NoiseReport,
    pub truth: Vec<TruthEntry>,
    pub summary: RunSummary,
    pub restarts: usize,
    pub coherence: Option<CoherenceReport>,
    pub certificate: Option<CertificateReport>,
    pub certificate_error: Option<String>,
    pub gram_analysis: Option<GramAnalysis>,
    pub disjoint_supports: Option<bool>,
    pub overlap: Option<Vec<OverlapSummary>>,
}

/// Everything a run produces, before anything is written.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub config: ScenarioConfig,
    pub grid: Grid,
    pub operator: WeightedOperator,
    pub observation: Observation,
    /// Data vector `By` in the solver's coordinates.
    pub data: DVector<f64>,
    pub result: SolveResult,
    pub report: RunReport,
    pub overlaps: Vec<OverlapReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub solution_path: PathBuf,
    pub observation_path: PathBuf,
    pub report_path: PathBuf,
    pub heatmap_paths: Vec<PathBuf>,
    pub overlap_paths: Vec<PathBuf>,
    pub summary: RunSummary,
}

/// 8-connected components of `support`, each with its peak.
pub fn clusters(grid: &Grid, x: &DVector<f64>, support: &[usize], truth: &[usize]) -> Vec<Cluster> {
    let mut member = vec![false; grid.node_count()];
    for &j in support {
        member[j] = true;
    }
    let side = grid.nodes_per_side() as isize;
    let mut seen = vec![false; grid.node_count()];
    let mut out = Vec::new();
    for &start in support {
        if seen[start] {
            continue;
        }
        let mut nodes = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(node) = queue.pop_front() {
            nodes.push(node);
            let (i, j) = grid.node_ij(node);
            for di in -1..=1isize {
                for dj in -1..=1isize {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if (di, dj) == (0, 0) || ni < 0 || nj < 0 || ni >= side || nj >= side {
                        continue;
                    }
                    let next = grid.node_index(ni as usize, nj as usize);
                    if member[next] && !seen[next] {
                        seen[next] = true;
                        queue.push_back(next);
                    }
                }
            }
        }
        nodes.sort_unstable();
        let peak = *nodes.iter().max_by(|&&a, &&b| x[a].abs().total_cmp(&x[b].abs()).then(b.cmp(&a))).expect("non-empty");
        out.push(Cluster {
            peak,
            peak_value: x[peak],
            nearest_source_cells: truth.iter().map(|&t| grid.cell_distance(peak, t)).min(),
            nodes,
        });
    }
    out
}

/// Summary statistics of a solution against the truth.
pub fn summarize(grid: &Grid, op: &WeightedOperator, b: &DVector<f64>, alpha: f64, result: &SolveResult, truth: &[usize]) -> Result<RunSummary> {
    let x = &result.x;
    let support = result.support.clone();
    let localization_error_cells = truth.iter().map(|&t| support.iter().map(|&s| grid.cell_distance(s, t)).min()).collect();
    let peak_node = (!support.is_empty()).then(|| x.iamax());
    Ok(RunSummary {
        objective: objective(op, b, alpha, x)?,
        kkt_residual: kkt_residual(op, b, alpha, x)?,
        converged: result.converged,
        iterations: result.iterations,
        localization_error_cells,
        peak_distance_cells: peak_node.and_then(|p| truth.iter().map(|&t| grid.cell_distance(p, t)).min()),
        peak_node,
        clusters: clusters(grid, x, &support, truth),
        support,
    })
}

/// Runs a scenario in memory.
pub fn execute_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let model = inverse_model(cfg)?;
    let grid = model.grid().clone();
    let observation = synthesize_with(cfg, &model)?;
    let (op, notes) = scenario_operator(cfg, &model, &observation.truth)?;
    let data = op.transform_data(&observation.y)?;
    let solver = cfg.solver_config();
    let result = match solve_weighted_lasso(&op, &data, &solver) {
        Err(Error::NotConverged(r)) => *r,
        other => other?,
    };
    let truth_nodes = observation.truth.support();
    let summary = summarize(&grid, &op, &data, cfg.alpha, &result, &truth_nodes)?;

    let coherence = cfg.analyses.coherence.then(|| CoherenceReport {
        mutual_coherence: mutual_coherence(&op),
        nonparallel_violations: check_nonparallel(&op, NONPARALLEL_TOLERANCE).len(),
        nonparallel_tolerance: NONPARALLEL_TOLERANCE,
    });

    let (mut certificate, mut certificate_error, mut gram_analysis, mut disjoint_supports) = (None, None, None, None);
    if cfg.analyses.certificates && !observation.truth.is_empty() {
        let truth = &observation.truth;
        let same_sign = truth.entries().iter().all(|e| e.1 > 0.0) || truth.entries().iter().all(|e| e.1 < 0.0);
        let attempt = if same_sign { dual_certificate(&op, truth) } else { dual_certificate_disjoint(&op, truth) };
        match attempt {
            Ok(c) => certificate = Some(c),
            Err(e) => certificate_error = Some(e.to_string()),
        }
        if truth_nodes.len() >= 2 {
            gram_analysis = Some(analyze_parallel_recovery(&op, &truth_nodes, None)?);
        }
        disjoint_supports = Some(check_disjoint_supports(&op, &truth_nodes, 0.0)?);
    }

    let overlaps = if cfg.analyses.overlap { overlap_reports(&op, &truth_nodes)? } else { Vec::new() };
    let overlap = cfg.analyses.overlap.then(|| {
        overlaps
            .iter()
            .map(|r| OverlapSummary { pair: r.pair, first_zero_tau: r.first_zero_tau(), file: overlap_file_name(r) })
            .collect()
    });

    let truth = observation
        .truth
        .entries()
        .iter()
        .map(|&(node, amplitude)| {
            let (x_coord, y_coord) = grid.node_coordinates(node);
            TruthEntry { node, amplitude, x_coord, y_coord }
        })
        .collect();
    let report = RunReport {
        name: cfg.name.clone(),
        forward_n: cfg.forward_n,
        inverse_n: cfg.inverse_n,
        inverse_crime: cfg.inverse_crime,
        epsilon: cfg.epsilon,
        alpha: cfg.alpha,
        scheme: op.scheme().clone(),
        unweighted: cfg.unweighted,
        notes,
        noise: NoiseReport { level: cfg.noise.level, seed: cfg.noise.seed, achieved_ratio: observation.noise_ratio },
        truth,
        summary,
        restarts: result.restarts,
        coherence,
        certificate,
        certificate_error,
        gram_analysis,
        disjoint_supports,
        overlap,
    };
    Ok(ScenarioOutcome { config: cfg.clone(), grid, operator: op, observation, data, result, report, overlaps })
}

fn overlap_file_name(r: &OverlapReport) -> String {
    format!("overlap_{}_{}.csv", r.pair.0, r.pair.1)
}

fn overlap_reports(op: &WeightedOperator, nodes: &[usize]) -> Result<Vec<OverlapReport>> {
    let taus = default_tau_grid();
    let mut out = Vec::new();
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            out.push(disjointness_overlap(op, nodes[a], nodes[b], &taus)?);
        }
    }
    Ok(out)
}

/// Writes the artifacts of an executed scenario into `dir`.
pub fn write_artifacts(outcome: &ScenarioOutcome, dir: &Path) -> Result<RunArtifacts> {
    std::fs::create_dir_all(dir)?;
    let grid = &outcome.grid;
    let solution_path = dir.join("solution.csv");
    let observation_path = dir.join("observation.csv");
    let report_path = dir.join("report.json");
    write_solution_csv(&solution_path, grid, &outcome.result.x)?;
    write_observation_csv(&observation_path, &outcome.observation.y)?;
    let solution_pgm = dir.join("solution.pgm");
    let truth_pgm = dir.join("truth.pgm");
    write_heatmap(&outcome.result.x, grid, &solution_pgm)?;
    write_heatmap(&outcome.observation.truth.to_dense(grid.node_count()), grid, &truth_pgm)?;
    let mut overlap_paths = Vec::new();
    for r in &outcome.overlaps {
        let path = dir.join(overlap_file_name(r));
        write_overlap_csv(&path, r)?;
        overlap_paths.push(path);
    }
    write_json(&report_path, &outcome.report)?;
    Ok(RunArtifacts {
        solution_path,
        observation_path,
        report_path,
        heatmap_paths: vec![solution_pgm, truth_pgm],
        overlap_paths,
        summary: outcome.report.summary.clone(),
    })
}

pub fn run_scenario(cfg: &ScenarioConfig, dir: &Path) -> Result<RunArtifacts> {
    write_artifacts(&execute_scenario(cfg)?, dir)
}

/// Overlap ratios for every pair of true source nodes, without solving.
pub fn sweep_overlap(cfg: &ScenarioConfig) -> Result<Vec<OverlapReport>> {
    cfg.validate()?;
    let model = inverse_model(cfg)?;
    let truth = sources_on_grid(cfg, model.grid())?;
    if truth.len() < 2 {
        return Err(Error::Validation("an overlap sweep needs at least two sources".into()));
    }
    let (op, _) = scenario_operator(cfg, &model, &truth)?;
    overlap_reports(&op, &truth.support())
}

/// Runs [`sweep_overlap`] and writes one `(tau, ratio)` CSV per pair into `dir`.
pub fn write_overlap_sweep(cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<(OverlapReport, PathBuf)>> {
    let reports = sweep_overlap(cfg)?;
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for r in reports {
        let path = dir.join(overlap_file_name(&r));
        write_overlap_csv(&path, &r)?;
        out.push((r, path));
    }
    Ok(out)
}
