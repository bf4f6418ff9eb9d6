//! Command-line front end: `run`, `sweep` and `reproduce`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 I/O error.
//! Summaries go to stdout, diagnostics to stderr, tables to CSV files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::analysis::{fit_convergence, fit_convergence_below, run_sweep, write_csv_file, Norm, RowStatus, SweepConfig, SweepRow};
use crate::assembly::SchemeKind;
use crate::cases::CaseName;
use crate::error::{ConfigError, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_IO: i32 = 3;

const REFERENCE_JSON: &str = include_str!("../resources/reference_values.json");

#[derive(Debug, Parser)]
#[command(name = "anisoap", version, about = "Q2 finite element solvers for strongly anisotropic elliptic problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance and write a one-row CSV.
    Run(CaseArgs),
    /// Run every combination of the given lists and write the table.
    Sweep(CaseArgs),
    /// Re-run a stored preset and compare against its reference values.
    Reproduce(ReproduceArgs),
}

/// Case selection. List-valued flags take comma-separated values; they
/// override the matching fields of `--config`.
#[derive(Debug, Default, Args)]
pub struct CaseArgs {
    /// p, mm, mm_var_eps, db or limit
    #[arg(long, value_delimiter = ',')]
    pub scheme: Vec<SchemeKind>,
    /// const_b, var_b, osc_b, const_b_var_eps or var_b_var_eps
    #[arg(long)]
    pub case: Option<CaseName>,
    /// Node intervals per direction (nx = ny = n, h = 1/n); must be even.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Constant anisotropy intensity.
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Far-side value of the tanh intensity profile (variable-eps cases).
    #[arg(long = "eps-min", value_delimiter = ',')]
    pub eps_min: Vec<f64>,
    /// Steepness of the tanh profile.
    #[arg(long)]
    pub a: Option<f64>,
    /// Centre of the tanh profile.
    #[arg(long)]
    pub x0: Option<f64>,
    /// Field-line amplitude of the variable-b cases.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Field oscillation number.
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<u32>,
    /// Gauss points per direction for error norms (3, 4 or 5).
    #[arg(long = "quad-order")]
    pub quad_order: Option<usize>,
    /// Skip the condition estimate.
    #[arg(long = "no-condition")]
    pub no_condition: bool,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON sweep configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Table {
    #[value(name = "error")]
    Error,
    #[value(name = "time")]
    Time,
    #[value(name = "conv_e1")]
    ConvE1,
    #[value(name = "conv_e-100")]
    ConvE100,
    #[value(name = "conv_ev")]
    ConvEv,
    #[value(name = "osc")]
    Osc,
}

impl Table {
    pub fn as_str(self) -> &'static str {
        match self {
            Table::Error => "error",
            Table::Time => "time",
            Table::ConvE1 => "conv_e1",
            Table::ConvE100 => "conv_e-100",
            Table::ConvEv => "conv_ev",
            Table::Osc => "osc",
        }
    }
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    pub table: Table,
    /// Include the heavy levels (h = 0.0015625, 400 x 400 oscillation grid).
    #[arg(long)]
    pub full: bool,
    /// Output directory for the CSV and the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the preset's grid list.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_CONFIG
                }
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, stdout, stderr),
        Command::Sweep(a) => cmd_sweep(&a, stdout, stderr),
        Command::Reproduce(a) => cmd_reproduce(&a, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if matches!(e, Error::Config(_)) {
                let _ = writeln!(stderr, "usage: anisoap <run|sweep|reproduce> [options]  (see --help)");
            }
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
        Error::Solver(_) => EXIT_SOLVER,
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
    }
}

fn missing(flag: &str) -> Error {
    Error::Config(ConfigError::Sweep(format!("missing {flag}")))
}

/// Reads a JSON sweep configuration (unknown keys are rejected).
pub fn load_config(path: &Path) -> Result<SweepConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Merges `--config` with the flags; flags win.
pub fn resolve_config(args: &CaseArgs) -> Result<SweepConfig, Error> {
    let base = args.config.as_deref().map(load_config).transpose()?;
    let case = args.case.or(base.as_ref().map(|c| c.case)).ok_or_else(|| missing("--case"))?;
    let schemes = if args.scheme.is_empty() {
        base.as_ref().map(|c| c.schemes.clone()).unwrap_or_default()
    } else {
        args.scheme.clone()
    };
    if schemes.is_empty() {
        return Err(missing("--scheme"));
    }
    let grids = if args.n.is_empty() {
        base.as_ref().map(|c| c.grids.clone()).unwrap_or_default()
    } else {
        args.n.clone()
    };
    if grids.is_empty() {
        return Err(missing("--n"));
    }
    let (flag_eps, wrong) = if case.has_variable_eps() {
        (&args.eps_min, (!args.eps.is_empty()).then_some("--eps (use --eps-min for a variable-eps case)"))
    } else {
        (&args.eps, (!args.eps_min.is_empty()).then_some("--eps-min (use --eps for a constant-eps case)"))
    };
    if let Some(w) = wrong {
        return Err(Error::Config(ConfigError::Sweep(format!("unexpected {w}"))));
    }
    let eps = if flag_eps.is_empty() {
        base.as_ref().map(|c| c.eps.clone()).unwrap_or_default()
    } else {
        flag_eps.clone()
    };
    if eps.is_empty() {
        return Err(missing(if case.has_variable_eps() { "--eps-min" } else { "--eps" }));
    }
    let mut config = base.unwrap_or_else(|| SweepConfig::new(vec![], case, vec![], vec![]));
    config.case = case;
    config.schemes = schemes;
    config.grids = grids;
    config.eps = eps;
    if !args.m.is_empty() {
        config.m = args.m.clone();
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    if let Some(v) = args.a {
        config.a = v;
    }
    if let Some(v) = args.x0 {
        config.x0 = v;
    }
    if let Some(v) = args.quad_order {
        config.quad_order = v;
    }
    if args.no_condition {
        config.condition = false;
    }
    if args.out.is_some() {
        config.out = args.out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn sci(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into())
}

fn write_rows(out: &mut dyn Write, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<10} {:<15} {:>5} {:>10} {:>3} {:>10} {:>10} {:>10} {:>10} {:>8} {:>9} {:>10} {:>9} {:>9}  status",
        "scheme", "case", "n", "eps", "m", "L2 u", "H1 u", "L2 q", "H1 q", "rows", "nnz", "factor ms", "residual", "rcond"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:<10} {:<15} {:>5} {:>10} {:>3} {:>10} {:>10} {:>10} {:>10} {:>8} {:>9} {:>10} {:>9} {:>9}  {}",
            r.scheme.as_str(),
            r.case.as_str(),
            r.nx,
            sci(r.eps.or(r.eps_min)),
            r.m,
            sci(r.u.map(|e| e.l2_abs)),
            sci(r.u.map(|e| e.h1_abs)),
            sci(r.q.map(|e| e.l2_abs)),
            sci(r.q.map(|e| e.h1_abs)),
            r.rows.map_or("-".into(), |v| v.to_string()),
            r.nnz.map_or("-".into(), |v| v.to_string()),
            r.factor_ms.map_or("-".into(), |v| format!("{v:.1}")),
            sci(r.residual),
            sci(r.rcond),
            r.status.as_str(),
        )?;
    }
    Ok(())
}

fn report_failures(stderr: &mut dyn Write, rows: &[SweepRow]) {
    for r in rows.iter().filter(|r| r.message.is_some()) {
        let _ = writeln!(
            stderr,
            "{} n={} eps={}: {} ({})",
            r.scheme,
            r.nx,
            sci(r.eps.or(r.eps_min)),
            r.status.as_str(),
            r.message.as_deref().unwrap_or_default()
        );
    }
    for r in rows.iter().filter(|r| r.status == RowStatus::HighResidual) {
        let _ = writeln!(stderr, "{} n={}: residual {} above limit", r.scheme, r.nx, sci(r.residual));
    }
}

pub fn cmd_run(args: &CaseArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Error> {
    let config = resolve_config(args)?;
    let single = config.schemes.len() == 1 && config.grids.len() == 1 && config.eps.len() == 1 && config.m.len() == 1;
    if !single {
        return Err(Error::Config(ConfigError::Sweep("run takes single values; use sweep for lists".into())));
    }
    let rows = run_sweep(&config)?;
    let row = &rows[0];
    report_failures(stderr, &rows);
    match row.status {
        RowStatus::ConfigError => return Ok(EXIT_CONFIG),
        RowStatus::SolverFailure => {
            let path = config.out.clone().unwrap_or_else(|| PathBuf::from("results/run.csv"));
            write_csv_file(&path, &rows)?;
            return Ok(EXIT_SOLVER);
        }
        _ => {}
    }
    let path = config.out.clone().unwrap_or_else(|| PathBuf::from("results/run.csv"));
    write_csv_file(&path, &rows)?;
    let u = row.u.expect("solved row");
    writeln!(stdout, "{} on {} with n = {} (h = {})", row.scheme, row.case, row.nx, row.h)?;
    match (row.eps, row.eps_min) {
        (Some(e), _) => writeln!(stdout, "eps        {e:e}")?,
        (_, Some(e)) => writeln!(stdout, "eps_min    {e:e}")?,
        _ => {}
    }
    writeln!(stdout, "rows       {}", row.rows.unwrap_or(0))?;
    writeln!(stdout, "nnz        {}", row.nnz.unwrap_or(0))?;
    writeln!(stdout, "factor     {:.1} ms", row.factor_ms.unwrap_or(0.0))?;
    writeln!(stdout, "solve      {:.1} ms", row.solve_ms.unwrap_or(0.0))?;
    writeln!(stdout, "residual   {}", sci(row.residual))?;
    writeln!(stdout, "rcond      {}", sci(row.rcond))?;
    writeln!(stdout, "L2 u       {:.3e} (relative {:.3e})", u.l2_abs, u.l2_rel)?;
    writeln!(stdout, "H1 u       {:.3e} (relative {:.3e})", u.h1_abs, u.h1_rel)?;
    if let Some(q) = row.q {
        writeln!(stdout, "L2 q       {:.3e}", q.l2_abs)?;
        writeln!(stdout, "H1 q       {:.3e}", q.h1_abs)?;
    }
    writeln!(stdout, "csv        {}", path.display())?;
    Ok(EXIT_OK)
}

pub fn cmd_sweep(args: &CaseArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Error> {
    let config = resolve_config(args)?;
    let rows = run_sweep(&config)?;
    let path = config.out.clone().unwrap_or_else(|| PathBuf::from("results/sweep.csv"));
    write_csv_file(&path, &rows)?;
    report_failures(stderr, &rows);
    write_rows(stdout, &rows)?;
    writeln!(stdout, "csv: {}", path.display())?;
    Ok(EXIT_OK)
}

/// How a reference value constrains the computed one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefKind {
    /// A table value; reported with its relative deviation.
    #[default]
    Value,
    /// Upper bound.
    Max,
    /// Lower bound.
    Min,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceCell {
    pub scheme: SchemeKind,
    pub n: usize,
    pub eps: f64,
    #[serde(default = "one")]
    pub m: u32,
    pub quantity: String,
    pub value: f64,
    #[serde(default)]
    pub kind: RefKind,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub description: String,
    pub case: CaseName,
    pub schemes: Vec<SchemeKind>,
    pub grids: Vec<usize>,
    pub full_grids: Vec<usize>,
    pub eps: Vec<f64>,
    pub m: Vec<u32>,
    pub reference: Vec<ReferenceCell>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFile {
    pub version: u32,
    pub presets: BTreeMap<String, Preset>,
}

/// The embedded reference tables.
pub fn reference_file() -> ReferenceFile {
    serde_json::from_str(REFERENCE_JSON).expect("embedded reference file is valid")
}

pub fn preset(table: Table) -> Preset {
    reference_file()
        .presets
        .remove(table.as_str())
        .expect("every table has a preset")
}

impl Preset {
    pub fn sweep_config(&self, full: bool) -> SweepConfig {
        let grids = if full { self.full_grids.clone() } else { self.grids.clone() };
        let mut c = SweepConfig::new(self.schemes.clone(), self.case, grids, self.eps.clone());
        c.m = self.m.clone();
        c
    }
}

/// Value of `quantity` in a row, if the row carries it.
pub fn row_quantity(row: &SweepRow, quantity: &str) -> Option<f64> {
    let u = row.u;
    let q = row.q;
    match quantity {
        "l2_abs_u" => u.map(|e| e.l2_abs),
        "h1_abs_u" => u.map(|e| e.h1_abs),
        "l2_rel_u" => u.map(|e| e.l2_rel),
        "h1_rel_u" => u.map(|e| e.h1_rel),
        "l2_abs_q" => q.map(|e| e.l2_abs),
        "h1_abs_q" => q.map(|e| e.h1_abs),
        "rows" => row.rows.map(|v| v as f64),
        "nnz" => row.nnz.map(|v| v as f64),
        "time_s" => match (row.factor_ms, row.solve_ms) {
            (Some(f), Some(s)) => Some((f + s) / 1e3),
            _ => None,
        },
        _ => None,
    }
}

fn same(a: f64, b: f64) -> bool {
    a == b || ((a - b) / b).abs() < 1e-12
}

/// One line of a reproduce comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub cell: ReferenceCell,
    pub computed: Option<f64>,
    /// `(computed - reference) / reference` for value cells.
    pub deviation: Option<f64>,
    /// For bound cells: whether the bound holds.
    pub holds: Option<bool>,
}

/// Matches reference cells against rows. Cells without a matching solved
/// row are skipped.
pub fn compare(preset: &Preset, rows: &[SweepRow]) -> Vec<Comparison> {
    preset
        .reference
        .iter()
        .filter_map(|cell| {
            let row = rows.iter().find(|r| {
                r.scheme == cell.scheme && r.nx == cell.n && r.m == cell.m && r.eps.or(r.eps_min).is_some_and(|e| same(e, cell.eps))
            })?;
            let computed = row_quantity(row, &cell.quantity);
            let (deviation, holds) = match (cell.kind, computed) {
                (_, None) => (None, None),
                (RefKind::Value, Some(v)) => (Some((v - cell.value) / cell.value), None),
                (RefKind::Max, Some(v)) => (None, Some(v <= cell.value)),
                (RefKind::Min, Some(v)) => (None, Some(v > cell.value)),
            };
            Some(Comparison {
                cell: cell.clone(),
                computed,
                deviation,
                holds,
            })
        })
        .collect()
}

/// Human-readable comparison report.
pub fn format_report(table: Table, preset: &Preset, rows: &[SweepRow], comparisons: &[Comparison]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "reproduce {}: {}", table.as_str(), preset.description);
    let _ = writeln!(
        s,
        "{:<10} {:>5} {:>10} {:>3} {:<9} {:>12} {:>12} {:>10}",
        "scheme", "n", "eps", "m", "quantity", "reference", "computed", "deviation"
    );
    for c in comparisons {
        let reference = match c.cell.kind {
            RefKind::Value => format!("{:.3e}", c.cell.value),
            RefKind::Max => format!("<= {:.2e}", c.cell.value),
            RefKind::Min => format!("> {:.2e}", c.cell.value),
        };
        let verdict = match (c.deviation, c.holds) {
            (Some(d), _) => format!("{:+.1}%", 100.0 * d),
            (_, Some(true)) => "holds".into(),
            (_, Some(false)) => "violated".into(),
            _ => "n/a".into(),
        };
        let _ = writeln!(
            s,
            "{:<10} {:>5} {:>10.1e} {:>3} {:<9} {:>12} {:>12} {:>10}",
            c.cell.scheme.as_str(),
            c.cell.n,
            c.cell.eps,
            c.cell.m,
            c.cell.quantity,
            reference,
            sci(c.computed),
            verdict
        );
    }
    if matches!(table, Table::ConvE1 | Table::ConvE100 | Table::ConvEv) {
        for &eps in &preset.eps {
            let sub: Vec<SweepRow> = rows
                .iter()
                .filter(|r| r.eps.or(r.eps_min).is_some_and(|e| same(e, eps)))
                .cloned()
                .collect();
            let h_max = if table == Table::ConvEv { 0.0125 } else { f64::INFINITY };
            for norm in [Norm::L2, Norm::H1] {
                let fit = if h_max.is_finite() {
                    fit_convergence_below(&sub, norm, h_max)
                } else {
                    fit_convergence(&sub, norm)
                };
                match fit {
                    Ok(f) => {
                        let _ = writeln!(
                            s,
                            "order {norm:?} eps {eps:e}: {:.3} over {} levels (h {}..{})",
                            f.slope, f.levels, f.h_min, f.h_max
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(s, "order {norm:?} eps {eps:e}: {e}");
                    }
                }
            }
        }
    }
    s
}

pub fn cmd_reproduce(args: &ReproduceArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Error> {
    let preset = preset(args.table);
    let mut config = preset.sweep_config(args.full);
    if !args.n.is_empty() {
        config.grids = args.n.clone();
    }
    let rows = run_sweep(&config)?;
    report_failures(stderr, &rows);
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let csv = dir.join(format!("{}.csv", args.table.as_str()));
    write_csv_file(&csv, &rows)?;
    let comparisons = compare(&preset, &rows);
    let report = format_report(args.table, &preset, &rows, &comparisons);
    std::fs::write(dir.join(format!("{}_report.txt", args.table.as_str())), &report)?;
    write_rows(stdout, &rows)?;
    writeln!(stdout)?;
    write!(stdout, "{report}")?;
    writeln!(stdout, "csv: {}", csv.display())?;
    Ok(EXIT_OK)
}
