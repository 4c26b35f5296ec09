//! Experiment runs: solve, decay verification, transport.

use std::f64::consts::TAU;

use higgslab_core::solver::{auto_cells, solve_dirichlet, BoundaryData, MetricSolution, SolveConfig, SolveError};
use higgslab_core::spectral::{
    compute_all_wk, fit_decay, fit_decay_samples, noise_floor, predicted_rate, predicted_vtilde1_rate, EigenProfile,
};
use higgslab_core::transport::{
    integrate_transport, max_mu, mu_values, pairing_check, vector_distance, ConnectionSource,
    ExactLeading, RayPath, SolvedChart, shift_matrix, StepRule, TransportResult,
};
use higgslab_core::{par, Complex64, Family, RadialGrid, SystemKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Cells, ConfigError, ExperimentConfig};
use crate::report::{Check, DecayRecord, RunRecord, RunReport, SolverRecord, TransportRecord, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver: {0}")]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Core(#[from] higgslab_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    VerifyDecay,
    Transport,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::VerifyDecay => "verify-decay",
            Command::Transport => "transport",
            Command::Report => "report",
        }
    }

    fn decay(self) -> bool {
        matches!(self, Command::VerifyDecay | Command::Report)
    }

    fn transport(self) -> bool {
        matches!(self, Command::Transport | Command::Report)
    }
}

/// Everything one t value produced.
#[derive(Debug, Clone)]
pub struct TRun {
    pub t: f64,
    pub solution: Option<MetricSolution>,
    pub profiles: Vec<EigenProfile>,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone)]
pub struct LabRun {
    pub report: RunReport,
    pub per_t: Vec<TRun>,
}

/// Configured angles followed by `theta_random` angles drawn from `seed`.
pub fn angles(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = cfg.theta.clone();
    out.extend((0..cfg.theta_random).map(|_| rng.gen_range(0.0..TAU)));
    out
}

pub fn grid_for(cfg: &ExperimentConfig, kind: SystemKind, t: f64) -> Result<RadialGrid, LabError> {
    let cells = match cfg.cells {
        Cells::Auto => auto_cells(kind, t, cfg.radius),
        Cells::Fixed(n) => n,
    };
    Ok(RadialGrid::new(cfg.radius, cells)?)
}

pub fn solve(cfg: &ExperimentConfig, t: f64) -> Result<MetricSolution, LabError> {
    let kind = cfg.kind()?;
    let grid = grid_for(cfg, kind, t)?;
    let bc = BoundaryData::staircase(kind, t, cfg.alpha);
    let solve_cfg = SolveConfig { tol: cfg.solver_tol, ..SolveConfig::default() };
    Ok(solve_dirichlet(kind, t, grid, &bc, &solve_cfg)?)
}

fn solver_record(sol: &MetricSolution) -> SolverRecord {
    SolverRecord {
        cells: sol.grid().len() - 1,
        iterations: sol.iterations,
        residual: sol.residual,
        boundary_amplitude: sol.boundary_amplitude,
        q_orthogonality_defect: sol.state.q_orthogonality_defect(),
        warning: sol.warning.clone(),
    }
}

fn decay_record(
    field: String,
    k: Option<usize>,
    fit: Result<higgslab_core::spectral::DecayFit, higgslab_core::Error>,
    predicted: f64,
    tol: f64,
) -> Result<DecayRecord, LabError> {
    match fit {
        Ok(f) => Ok(DecayRecord {
            field,
            k,
            fitted: Some(f.rate),
            predicted,
            tolerance: tol,
            r_squared: Some(f.r_squared),
            window: Some(f.window),
            samples: f.samples,
            verdict: Verdict::from_bool(((f.rate - predicted) / predicted).abs() <= tol),
        }),
        Err(higgslab_core::Error::EmptyWindow) => Ok(DecayRecord {
            field,
            k,
            fitted: None,
            predicted,
            tolerance: tol,
            r_squared: None,
            window: None,
            samples: 0,
            verdict: Verdict::Inconclusive,
        }),
        Err(e) => Err(e.into()),
    }
}

/// Mode profiles `w_k` and a decay record for every nontrivial mode (and
/// `ṽ^1` for (n-1)-cyclic systems).
pub fn decay_analysis(
    cfg: &ExperimentConfig,
    sol: &MetricSolution,
) -> Result<(Vec<EigenProfile>, Vec<DecayRecord>), LabError> {
    let kind = sol.kind();
    let t = sol.t();
    let window = (cfg.fit_window.0 * cfg.radius, cfg.fit_window.1 * cfg.radius);
    let floor = noise_floor(sol.boundary_amplitude);
    let tol = cfg.tolerances.decay_rate;
    let profiles = compute_all_wk(&sol.state)?;
    let mut records = Vec::new();
    if let Some(v1) = sol.state.vtilde1() {
        let mags: Vec<f64> = v1.values().iter().map(|x| x.abs()).collect();
        let fit = fit_decay_samples(v1.grid(), &mags, window, floor);
        records.push(decay_record("vtilde1".into(), None, fit, predicted_vtilde1_rate(kind, t), tol)?);
    }
    for p in profiles.iter().skip(1) {
        let fit = fit_decay(p, window, floor);
        records.push(decay_record(format!("w{}", p.k), Some(p.k), fit, predicted_rate(kind, t, p.k), tol)?);
    }
    Ok((profiles, records))
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn has_pairing(kind: SystemKind) -> bool {
    kind.family() == Family::NMinus1Cyclic || kind.n() % 2 == 0
}

/// Relative Frobenius distance between the integrated `Ψ(L)` and the matrix
/// exponential of the constant leading connection `τ(e^{iθ}P + e^{-iθ}Pᵀ)`.
pub fn leading_exponential_defect(result: &TransportResult) -> f64 {
    let p = shift_matrix(result.kind);
    let a = (&p * Complex64::from_polar(1.0, result.theta) + p.transpose() * Complex64::from_polar(1.0, -result.theta))
        * Complex64::new(result.tau * result.length, 0.0);
    let exact = a.exp();
    (result.psi() - &exact).norm() / exact.norm()
}

/// Transport along one ray with verdicts. `exact` selects the zero-error
/// source and its tight tolerances.
pub fn transport_record(
    cfg: &ExperimentConfig,
    source: &dyn ConnectionSource,
    theta: f64,
    length: f64,
    exact: bool,
) -> Result<TransportRecord, LabError> {
    let kind = source.kind();
    let tol = &cfg.tolerances;
    let path = RayPath::new(length, theta)?;
    let result = integrate_transport(source, &path, &StepRule::default())?;
    let mu = mu_values(kind, theta);
    let vector_expected = sorted_desc(mu.iter().map(|m| -2.0 * length * m).collect());
    let vd = vector_distance(source, &result).ok();
    let pairing = if has_pairing(kind) { Some(pairing_check(&result)?) } else { None };
    let wkb_predicted = max_mu(kind, theta);
    let diag_dev = max_abs_diff(&result.diag_logs, &mu);

    let mut checks = Vec::new();
    let (diag_tol, wkb_tol, vec_tol, pair_tol) = if exact {
        (tol.exact, tol.exact, tol.exact, tol.exact)
    } else {
        (tol.diag_log, tol.wkb, tol.vector * 2.0 * length, tol.pairing)
    };
    checks.push(Check::at_most("diag_logs", diag_dev, diag_tol));
    checks.push(Check::within("wkb", result.wkb, wkb_predicted, wkb_tol));
    checks.push(Check::at_most("det_drift", result.det_drift, tol.det_drift));
    match &vd {
        Some(v) => checks.push(Check::at_most("vector_distance", max_abs_diff(v, &vector_expected), vec_tol)),
        None => checks.push(Check {
            name: "vector_distance".into(),
            value: f64::NAN,
            expected: 0.0,
            tolerance: vec_tol,
            verdict: Verdict::Inconclusive,
        }),
    }
    if let Some(p) = pairing {
        checks.push(Check::at_most("pairing", p, pair_tol));
    }
    if exact {
        checks.push(Check::at_most("offdiag_norm", result.offdiag_norm, tol.exact));
        checks.push(Check::at_most("leading_exponential", leading_exponential_defect(&result), tol.exact));
    }
    Ok(TransportRecord {
        source: if exact { "exact-leading" } else { "solved" }.into(),
        tau: result.tau,
        mu,
        diag_logs: result.diag_logs.clone(),
        offdiag_norm: result.offdiag_norm,
        wkb: result.wkb,
        wkb_predicted,
        wkb_converged: result.wkb_converged,
        det_drift: result.det_drift,
        pairing_defect: pairing,
        vector_distance: vd,
        vector_expected,
        steps: result.steps,
        interpolated_samples: result.interpolated_samples,
        checks,
    })
}

fn run_t(cfg: &ExperimentConfig, command: Command, t: f64, thetas: &[f64]) -> Result<TRun, LabError> {
    let kind = cfg.kind()?;
    let needs_solution = !(command == Command::Transport && cfg.exact_leading);
    let solution = if needs_solution { Some(solve(cfg, t)?) } else { None };
    let (profiles, decay) = match (&solution, command.decay()) {
        (Some(sol), true) => decay_analysis(cfg, sol)?,
        _ => (Vec::new(), Vec::new()),
    };
    let solver = solution.as_ref().map(solver_record);
    let mut records = Vec::new();
    if command.transport() {
        let pairs: Vec<(f64, f64)> =
            thetas.iter().flat_map(|&th| cfg.length.iter().map(move |&l| (th, l))).collect();
        let transports = par::map(&pairs, |&(theta, length)| -> Result<TransportRecord, LabError> {
            if cfg.exact_leading {
                let src = ExactLeading { kind, tau: kind.rate_scale(t), theta };
                transport_record(cfg, &src, theta, length, true)
            } else {
                let src = SolvedChart::new(solution.as_ref().expect("solved"), theta)?;
                transport_record(cfg, &src, theta, length, false)
            }
        });
        for (i, (&(theta, length), tr)) in pairs.iter().zip(transports).enumerate() {
            records.push(RunRecord {
                t,
                theta: Some(theta),
                length: Some(length),
                solver: solver.clone(),
                decay: if i == 0 { decay.clone() } else { Vec::new() },
                transport: Some(tr?),
            });
        }
    } else {
        records.push(RunRecord { t, theta: None, length: None, solver, decay, transport: None });
    }
    Ok(TRun { t, solution, profiles, records })
}

/// Checks that compare runs at different t.
pub fn cross_checks(cfg: &ExperimentConfig, per_t: &[TRun]) -> Result<Vec<Check>, LabError> {
    let kind = cfg.kind()?;
    let mut checks = Vec::new();
    if per_t.len() < 2 {
        return Ok(checks);
    }
    let (first, last) = (&per_t[0], &per_t[per_t.len() - 1]);
    let fitted = |run: &TRun, field: &str| {
        run.records.iter().flat_map(|r| &r.decay).find(|d| d.field == field).and_then(|d| d.fitted)
    };
    if let (Some(a), Some(b)) = (fitted(first, "w1"), fitted(last, "w1")) {
        let expected = (last.t / first.t).powf(1.0 / kind.degree() as f64);
        let ratio = b / a;
        checks.push(Check::within(
            format!("decay ratio w1 t={}/t={}", last.t, first.t),
            ratio,
            expected,
            cfg.tolerances.decay_ratio * expected,
        ));
    }
    if !cfg.exact_leading {
        for (a, b) in first.records.iter().zip(&last.records) {
            if let (Some(ta), Some(tb)) = (&a.transport, &b.transport) {
                let theta = a.theta.unwrap_or_default();
                let length = a.length.unwrap_or_default();
                checks.push(Check {
                    name: format!("offdiag trend theta={theta} L={length}"),
                    value: tb.offdiag_norm,
                    expected: ta.offdiag_norm,
                    tolerance: 0.0,
                    verdict: Verdict::from_bool(tb.offdiag_norm <= ta.offdiag_norm),
                });
            }
        }
    }
    Ok(checks)
}

/// Run `command` over every configured t (in parallel) and assemble the report.
pub fn run(cfg: &ExperimentConfig, command: Command) -> Result<LabRun, LabError> {
    cfg.validate()?;
    let thetas = angles(cfg);
    let per_t: Vec<TRun> =
        par::map(&cfg.t, |&t| run_t(cfg, command, t, &thetas)).into_iter().collect::<Result<_, _>>()?;
    let checks = if command == Command::Solve { Vec::new() } else { cross_checks(cfg, &per_t)? };
    let runs = per_t.iter().flat_map(|r| r.records.iter().cloned()).collect();
    let report = RunReport::new(command.name(), cfg.clone(), runs, checks);
    Ok(LabRun { report, per_t })
}
