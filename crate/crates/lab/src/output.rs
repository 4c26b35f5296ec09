//! CSV and JSON artifacts. Floats are written as `{:.16e}`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use higgslab_core::solver::MetricSolution;
use higgslab_core::spectral::{noise_floor, predicted_rate, EigenProfile};
use serde::Serialize;

use crate::pipeline::{Command, LabError, LabRun};

fn e(x: f64) -> String {
    format!("{x:.16e}")
}

fn t_tag(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

/// Columns `r, d1..dm` and `vtilde1` for (n-1)-cyclic systems.
pub fn solution_csv(sol: &MetricSolution) -> String {
    let mut cols = sol.state.dvec();
    let grid = sol.grid().as_radial().expect("radial solution");
    let mut s = String::from("r");
    for j in 1..=cols.len() {
        let _ = write!(s, ",d{j}");
    }
    if let Some(v1) = sol.state.vtilde1() {
        s.push_str(",vtilde1");
        cols.push(v1.clone());
    }
    s.push('\n');
    for i in 0..grid.len() {
        s.push_str(&e(grid.r(i)));
        for f in &cols {
            s.push(',');
            s.push_str(&e(f.values()[i]));
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct SolutionMeta<'a> {
    kind: &'a str,
    n: usize,
    t: f64,
    radius: f64,
    cells: usize,
    iterations: usize,
    residual: f64,
    boundary_amplitude: f64,
    q_orthogonality_defect: f64,
    warning: Option<&'a str>,
}

pub fn solution_meta(sol: &MetricSolution) -> String {
    let kind = sol.kind();
    let grid = sol.grid().as_radial().expect("radial solution");
    let meta = SolutionMeta {
        kind: crate::config::family_name(kind.family()),
        n: kind.n(),
        t: sol.t(),
        radius: grid.radius(),
        cells: grid.cells(),
        iterations: sol.iterations,
        residual: sol.residual,
        boundary_amplitude: sol.boundary_amplitude,
        q_orthogonality_defect: sol.state.q_orthogonality_defect(),
        warning: sol.warning.as_deref(),
    };
    serde_json::to_string_pretty(&meta).expect("metadata serializes")
}

/// Columns `r`, then `|w_k|` and the predicted envelope
/// `|w_k(R)| e^{-rate (R - r)}` for each nontrivial mode.
pub fn decay_csv(sol: &MetricSolution, profiles: &[EigenProfile]) -> String {
    let kind = sol.kind();
    let grid = sol.grid().as_radial().expect("radial solution");
    let radius = grid.radius();
    let modes = &profiles[1.min(profiles.len())..];
    let mags: Vec<Vec<f64>> = modes.iter().map(|p| p.magnitudes()).collect();
    let mut s = String::from("r");
    for p in modes {
        let _ = write!(s, ",abs_w{k},envelope_w{k}", k = p.k);
    }
    s.push('\n');
    for i in 0..grid.len() {
        let r = grid.r(i);
        s.push_str(&e(r));
        for (p, m) in modes.iter().zip(&mags) {
            let rate = predicted_rate(kind, sol.t(), p.k);
            let envelope = m[grid.len() - 1] * (-rate * (radius - r)).exp();
            let _ = write!(s, ",{},{}", e(m[i]), e(envelope));
        }
        s.push('\n');
    }
    s
}

/// Long format `t,mode,distance,log_abs_w,log_envelope`, resolved samples only.
pub fn decay_plot_csv(run: &LabRun) -> String {
    let mut s = String::from("t,mode,distance,log_abs_w,log_envelope\n");
    for tr in &run.per_t {
        let Some(sol) = &tr.solution else { continue };
        let grid = sol.grid().as_radial().expect("radial solution");
        let radius = grid.radius();
        let floor = noise_floor(sol.boundary_amplitude);
        for p in tr.profiles.iter().skip(1) {
            let mags = p.magnitudes();
            let rate = predicted_rate(sol.kind(), sol.t(), p.k);
            let edge = mags[grid.len() - 1];
            for (i, &m) in mags.iter().enumerate() {
                if m <= floor {
                    continue;
                }
                let dist = radius - grid.r(i);
                let _ = writeln!(s, "{},{},{},{},{}", e(tr.t), p.k, e(dist), e(m.ln()), e(edge.ln() - rate * dist));
            }
        }
    }
    s
}

/// `t,theta,L,wkb,max_mu`, one row per transport run.
pub fn wkb_plot_csv(run: &LabRun) -> String {
    let mut s = String::from("t,theta,L,wkb,max_mu\n");
    for r in &run.report.runs {
        if let (Some(th), Some(l), Some(tr)) = (r.theta, r.length, &r.transport) {
            let _ = writeln!(s, "{},{},{},{},{}", e(r.t), e(th), e(l), e(tr.wkb), e(tr.wkb_predicted));
        }
    }
    s
}

fn put(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<(), LabError> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    written.push(path);
    Ok(())
}

/// Write every artifact of `command` into `dir`; returns the paths written.
pub fn write_artifacts(run: &LabRun, command: Command, dir: &Path) -> Result<Vec<PathBuf>, LabError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for tr in &run.per_t {
        let Some(sol) = &tr.solution else { continue };
        let tag = t_tag(tr.t);
        if command == Command::Solve {
            put(dir, &format!("solution_t{tag}.csv"), &solution_csv(sol), &mut written)?;
            put(dir, &format!("solution_t{tag}.json"), &solution_meta(sol), &mut written)?;
        }
        if command == Command::VerifyDecay {
            put(dir, &format!("decay_t{tag}.csv"), &decay_csv(sol, &tr.profiles), &mut written)?;
        }
    }
    if command == Command::Report {
        put(dir, "decay_plot.csv", &decay_plot_csv(run), &mut written)?;
        put(dir, "wkb_plot.csv", &wkb_plot_csv(run), &mut written)?;
    }
    put(dir, "report.json", &run.report.to_json(), &mut written)?;
    Ok(written)
}
