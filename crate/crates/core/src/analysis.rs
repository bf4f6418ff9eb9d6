//! Experiment orchestration: parameter sweeps, convergence-order fits,
//! oscillation studies, and the CSV table they produce.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::SchemeKind;
use crate::cases::{build_case, CaseName, CaseParams, DEFAULT_A, DEFAULT_ALPHA, DEFAULT_X0};
use crate::error::{ConfigError, Error};
use crate::fem::error_quad_rule;
use crate::grid::Grid;
use crate::schemes::{errors_against_exact, parallel_gradient_norm, solve, FieldErrors, SolverOptions};

/// Errors below this are dominated by the forcing evaluation and are left out
/// of convergence fits (together with anything within a factor 10 of it).
pub const ACCURACY_FLOOR: f64 = 1e-9;

/// Residual above which a solved row is flagged.
pub const RESIDUAL_LIMIT: f64 = 1e-7;

/// Environment variable capping the number of sweep worker threads.
pub const THREADS_ENV: &str = "ANISOAP_THREADS";

/// CSV header of a sweep table.
pub const CSV_COLUMNS: [&str; 22] = [
    "scheme", "case", "nx", "ny", "h", "eps", "eps_min", "m", "alpha", "l2_abs_u", "h1_abs_u", "l2_rel_u", "h1_rel_u",
    "l2_abs_q", "h1_abs_q", "rows", "nnz", "factor_ms", "solve_ms", "residual", "rcond_est", "status",
];

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_a() -> f64 {
    DEFAULT_A
}
fn default_x0() -> f64 {
    DEFAULT_X0
}
fn default_m() -> Vec<u32> {
    vec![1]
}
fn default_quad() -> usize {
    4
}
fn default_true() -> bool {
    true
}

/// A sweep over schemes, grids, intensities and oscillation numbers.
///
/// `eps` holds the constant intensity for constant-eps families and
/// `eps_min` for the tanh families. Grids are node intervals per direction
/// (`nx = ny = n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schemes: Vec<SchemeKind>,
    pub case: CaseName,
    pub grids: Vec<usize>,
    pub eps: Vec<f64>,
    #[serde(default = "default_m")]
    pub m: Vec<u32>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default = "default_quad")]
    pub quad_order: usize,
    #[serde(default = "default_true")]
    pub condition: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(schemes: Vec<SchemeKind>, case: CaseName, grids: Vec<usize>, eps: Vec<f64>) -> Self {
        SweepConfig {
            schemes,
            case,
            grids,
            eps,
            m: default_m(),
            alpha: DEFAULT_ALPHA,
            a: DEFAULT_A,
            x0: DEFAULT_X0,
            quad_order: default_quad(),
            condition: true,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let empty = |what: &str| ConfigError::Sweep(format!("empty {what} list"));
        if self.schemes.is_empty() {
            return Err(empty("scheme"));
        }
        if self.grids.is_empty() {
            return Err(empty("grid"));
        }
        if self.eps.is_empty() {
            return Err(empty("eps"));
        }
        if self.m.is_empty() {
            return Err(empty("m"));
        }
        for &n in &self.grids {
            Grid::unit_square(n)?;
        }
        error_quad_rule(self.quad_order)?;
        Ok(())
    }

    /// Sweep points in table order: scheme, then grid, then eps, then m.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &n in &self.grids {
                for &eps in &self.eps {
                    for &m in &self.m {
                        out.push(SweepPoint { scheme, n, eps, m });
                    }
                }
            }
        }
        out
    }

    fn params(&self, p: &SweepPoint) -> CaseParams {
        CaseParams {
            eps: p.eps,
            eps_min: p.eps,
            a: self.a,
            x0: self.x0,
            alpha: self.alpha,
            m: p.m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub scheme: SchemeKind,
    pub n: usize,
    pub eps: f64,
    pub m: u32,
}

/// Outcome of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Solved, but the relative residual exceeds [`RESIDUAL_LIMIT`].
    HighResidual,
    SolverFailure,
    ConfigError,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::HighResidual => "high_residual",
            RowStatus::SolverFailure => "solver_failure",
            RowStatus::ConfigError => "config_error",
        }
    }

    /// Whether the row carries a solution.
    pub fn solved(self) -> bool {
        matches!(self, RowStatus::Ok | RowStatus::HighResidual)
    }
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheme: SchemeKind,
    pub case: CaseName,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub eps: Option<f64>,
    pub eps_min: Option<f64>,
    pub m: u32,
    pub alpha: f64,
    pub u: Option<FieldErrors>,
    pub q: Option<FieldErrors>,
    pub rows: Option<usize>,
    pub nnz: Option<usize>,
    pub factor_ms: Option<f64>,
    pub solve_ms: Option<f64>,
    pub residual: Option<f64>,
    pub rcond: Option<f64>,
    pub status: RowStatus,
    /// Diagnostic for failed rows; not part of the CSV.
    pub message: Option<String>,
}

impl SweepRow {
    fn empty(config: &SweepConfig, p: &SweepPoint, status: RowStatus, message: String) -> Self {
        let variable = config.case.has_variable_eps();
        SweepRow {
            scheme: p.scheme,
            case: config.case,
            nx: p.n,
            ny: p.n,
            h: 1.0 / p.n as f64,
            eps: (!variable).then_some(p.eps),
            eps_min: variable.then_some(p.eps),
            m: p.m,
            alpha: config.alpha,
            u: None,
            q: None,
            rows: None,
            nnz: None,
            factor_ms: None,
            solve_ms: None,
            residual: None,
            rcond: None,
            status,
            message: Some(message),
        }
    }
}

/// Solves a single sweep point. Never fails: problems become the row status.
pub fn run_point(config: &SweepConfig, p: &SweepPoint) -> SweepRow {
    let prepared = (|| -> Result<_, ConfigError> {
        let grid = Grid::unit_square(p.n)?;
        let case = build_case(config.case, &config.params(p))?;
        let rule = error_quad_rule(config.quad_order)?;
        Ok((grid, case, rule))
    })();
    let (grid, case, rule) = match prepared {
        Ok(v) => v,
        Err(e) => return SweepRow::empty(config, p, RowStatus::ConfigError, e.to_string()),
    };
    let opts = SolverOptions {
        condition: config.condition,
    };
    match solve(&grid, &case, p.scheme, &opts) {
        Ok(r) => {
            let errors = errors_against_exact(&r, &case, &rule);
            let status = if r.residual <= RESIDUAL_LIMIT {
                RowStatus::Ok
            } else {
                RowStatus::HighResidual
            };
            SweepRow {
                u: Some(errors.u),
                q: errors.q,
                rows: Some(r.rows),
                nnz: Some(r.nnz),
                factor_ms: Some(r.factor_ms),
                solve_ms: Some(r.solve_ms),
                residual: Some(r.residual),
                rcond: r.rcond,
                status,
                message: None,
                ..SweepRow::empty(config, p, status, String::new())
            }
        }
        Err(Error::Config(e)) => SweepRow::empty(config, p, RowStatus::ConfigError, e.to_string()),
        Err(e) => SweepRow::empty(config, p, RowStatus::SolverFailure, e.to_string()),
    }
}

/// Worker count from [`THREADS_ENV`], defaulting to the available cores.
pub fn sweep_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every point of `config`, in parallel, and returns the rows in
/// [`SweepConfig::points`] order. Failing points are recorded, not fatal.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>, ConfigError> {
    config.validate()?;
    let points = config.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads())
        .build()
        .map_err(|e| ConfigError::Sweep(e.to_string()))?;
    Ok(pool.install(|| points.par_iter().map(|p| run_point(config, p)).collect()))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn opt_int(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl SweepRow {
    /// CSV fields in [`CSV_COLUMNS`] order. Absent values are empty fields.
    pub fn record(&self) -> Vec<String> {
        vec![
            self.scheme.as_str().to_string(),
            self.case.as_str().to_string(),
            self.nx.to_string(),
            self.ny.to_string(),
            num(self.h),
            opt_num(self.eps),
            opt_num(self.eps_min),
            self.m.to_string(),
            num(self.alpha),
            opt_num(self.u.map(|e| e.l2_abs)),
            opt_num(self.u.map(|e| e.h1_abs)),
            opt_num(self.u.map(|e| e.l2_rel)),
            opt_num(self.u.map(|e| e.h1_rel)),
            opt_num(self.q.map(|e| e.l2_abs)),
            opt_num(self.q.map(|e| e.h1_abs)),
            opt_int(self.rows),
            opt_int(self.nnz),
            opt_num(self.factor_ms),
            opt_num(self.solve_ms),
            opt_num(self.residual),
            opt_num(self.rcond),
            self.status.as_str().to_string(),
        ]
    }
}

/// Writes the header and one record per row.
pub fn write_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// [`write_csv`] into a file, creating parent directories.
pub fn write_csv_file(path: &std::path::Path, rows: &[SweepRow]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path)?;
    write_csv(std::io::BufWriter::new(file), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L2,
    H1,
}

/// Least-squares fit of `log(error) = slope * log(h) + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in natural-log units.
    pub residual: f64,
    pub levels: usize,
    pub h_min: f64,
    pub h_max: f64,
}

/// Fits the order of `(h, error)` pairs. Pairs with an error within a factor
/// 10 of [`ACCURACY_FLOOR`] (or non-positive) are dropped first; at least
/// three distinct mesh levels must remain.
pub fn fit_order(points: &[(f64, f64)]) -> Result<ConvergenceFit, ConfigError> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(h, e)| h > 0.0 && e.is_finite() && e > 10.0 * ACCURACY_FLOOR)
        .collect();
    let mut hs: Vec<f64> = kept.iter().map(|p| p.0).collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    if hs.len() < 3 {
        return Err(ConfigError::Sweep(format!(
            "a convergence fit needs at least 3 mesh levels, got {}",
            hs.len()
        )));
    }
    let xs: Vec<f64> = kept.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(ConvergenceFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
        levels: hs.len(),
        h_min: hs[0],
        h_max: hs[hs.len() - 1],
    })
}

fn row_error(row: &SweepRow, norm: Norm) -> Option<f64> {
    let u = row.u?;
    Some(match norm {
        Norm::L2 => u.l2_abs,
        Norm::H1 => u.h1_abs,
    })
}

/// Convergence order of the absolute `u` error over the solved rows.
pub fn fit_convergence(rows: &[SweepRow], norm: Norm) -> Result<ConvergenceFit, ConfigError> {
    fit_convergence_below(rows, norm, f64::INFINITY)
}

/// [`fit_convergence`] restricted to mesh sizes `h <= h_max`.
pub fn fit_convergence_below(rows: &[SweepRow], norm: Norm, h_max: f64) -> Result<ConvergenceFit, ConfigError> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.status.solved() && r.h <= h_max)
        .filter_map(|r| row_error(r, norm).map(|e| (r.h, e)))
        .collect();
    fit_order(&pts)
}

/// Slope of `log(y)` against `log(x)` by least squares.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Relative errors of one oscillation-study run.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationPoint {
    pub m: u32,
    pub l2_rel: Option<f64>,
    pub h1_rel: Option<f64>,
    pub status: RowStatus,
}

/// Micro-macro solves of the oscillating-field family on an `n x n` grid for
/// every `m`, reporting the relative `u` errors.
pub fn oscillation_study(alpha: f64, m_list: &[u32], n: usize, eps: f64) -> Result<Vec<OscillationPoint>, ConfigError> {
    let scheme = if eps == 0.0 { SchemeKind::Limit } else { SchemeKind::MM };
    let mut config = SweepConfig::new(vec![scheme], CaseName::OscB, vec![n], vec![eps]);
    config.m = m_list.to_vec();
    config.alpha = alpha;
    config.condition = false;
    let rows = run_sweep(&config)?;
    Ok(rows
        .into_iter()
        .map(|r| OscillationPoint {
            m: r.m,
            l2_rel: r.u.map(|e| e.l2_rel),
            h1_rel: r.u.map(|e| e.h1_rel),
            status: r.status,
        })
        .collect())
}

/// Parallel-gradient norms of one micro-macro solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelGradients {
    pub eps: f64,
    /// `||grad_par u_h||_L2`
    pub u: f64,
    /// `||grad_par q_h||_L2`
    pub q: f64,
}

/// Parallel-gradient norms of `u_h` and `q_h` for the aligned
/// constant-intensity case over `eps_list`, on an `n x n` grid.
pub fn parallel_gradient_study(n: usize, eps_list: &[f64]) -> Result<Vec<ParallelGradients>, Error> {
    let grid = Grid::unit_square(n)?;
    let rule = error_quad_rule(default_quad())?;
    eps_list
        .iter()
        .map(|&eps| {
            let case = build_case(CaseName::ConstB, &CaseParams { eps, ..CaseParams::default() })?;
            let r = solve(&grid, &case, SchemeKind::MM, &SolverOptions { condition: false })?;
            let q = r.q.as_ref().expect("micro-macro solves carry q");
            Ok(ParallelGradients {
                eps,
                u: parallel_gradient_norm(&grid, &case.spec.b, &r.u, &rule),
                q: parallel_gradient_norm(&grid, &case.spec.b, q, &rule),
            })
        })
        .collect()
}
