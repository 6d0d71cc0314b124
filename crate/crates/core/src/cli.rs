//! Command-line front end.
//!
//! Settings come from an optional flat JSON config file; flags override the
//! file key by key. Every JSON report echoes the resolved settings.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::certify::{certify_all, Verdict, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::lmi::{build_feasibility_systems, inner_products, CaseSelection, FeasibilitySystem};
use crate::model::{estimate, validate_portfolio, MarketEstimates, Portfolio, ReturnHistory};
use crate::oracle::{
    closed_form, compare_verdicts, quadratic_worst_case, worst_case_sampled, Agreement,
    AgreementReport, WorstCase, DEFAULT_SAMPLES, DEFAULT_SEED,
};
use crate::output::{format_float, to_json};
use crate::solver::{frontier, tau_grid, FrontierPoint, SolverOptions, MAX_CUTS};
use crate::uncertainty::{
    ProblemInstance, Radii, ShiftConvention, UncertaintyKind,
    UncertaintySpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_DISAGREE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "robust-portfolio", version, about = "Robust Markowitz feasibility certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate expected returns and covariance from a returns CSV.
    Estimate(Flags),
    /// Certify robust feasibility of a portfolio and compare with the oracle.
    Check(Flags),
    /// Nominal and robust efficient frontiers over a tau grid.
    Frontier(Flags),
    /// Print the (A, B) feasibility systems for a portfolio.
    Matrices(Flags),
    /// Closed-form and sampled worst-case returns for a portfolio.
    Oracle(Flags),
}

#[derive(Debug, Clone, Default, Args)]
struct Flags {
    /// Returns CSV: header of asset labels, one row per period.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Flat JSON config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Portfolio weights, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Option<Vec<f64>>,
    /// Required worst-case return.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    /// start:stop:step, inclusive.
    #[arg(long)]
    tau_grid: Option<String>,
    /// box, ellipsoidal, polyhedral, box-ellipsoidal, box-polyhedral or
    /// ellipsoidal-polyhedral.
    #[arg(long)]
    kind: Option<UncertaintyKind>,
    /// Box radius.
    #[arg(long)]
    delta_b: Option<f64>,
    /// Ellipsoid radius.
    #[arg(long)]
    delta_e: Option<f64>,
    /// Polyhedron (l1-ball) radius.
    #[arg(long)]
    delta_p: Option<f64>,
    /// Diagonal shift magnitudes, one per asset, comma separated.
    #[arg(long, value_delimiter = ',')]
    shift_mags: Option<Vec<f64>>,
    /// Multiply the shifts by the effective radius.
    #[arg(long)]
    scale_shifts: bool,
    /// Seed for the sampled oracle.
    #[arg(long)]
    seed: Option<u64>,
    /// Certificate tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Random directions tried by the sampled oracle.
    #[arg(long)]
    samples: Option<usize>,
    /// JSON output (default except for frontier).
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    /// CSV output (frontier only; its default).
    #[arg(long)]
    csv: bool,
}

/// Contents of a config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<UncertaintyKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_p: Option<f64>,
    /// Diagonal shift magnitudes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_mags: Option<Vec<f64>>,
    /// Explicit shift vectors; exclusive with `shift_mags`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Vec<Vec<f64>>>,
    /// Nominal returns; defaults to the estimated means.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_convention: Option<ShiftConvention>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Flags win over file values. A flag for either of `tau`/`tau_grid`
    /// replaces both file values.
    fn overlay(mut self, f: &Flags) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {$(
                if f.$field.is_some() {
                    self.$field = f.$field.clone();
                }
            )*};
        }
        take!(data, kind, delta_b, delta_e, delta_p, shift_mags, seed, tol, samples, weights);
        if f.tau.is_some() || f.tau_grid.is_some() {
            self.tau = f.tau;
            self.tau_grid = f.tau_grid.clone();
        }
        if f.shift_mags.is_some() {
            self.shifts = None;
        }
        if f.scale_shifts {
            self.shift_convention = Some(ShiftConvention::ScaleByRadius);
        }
        self
    }

    /// Fills defaults and checks everything that does not need the data.
    fn resolve(mut self) -> Result<Self> {
        self.seed.get_or_insert(DEFAULT_SEED);
        self.tol.get_or_insert(DEFAULT_TOL);
        self.samples.get_or_insert(DEFAULT_SAMPLES);
        self.shift_convention.get_or_insert_default();
        if self.tau.is_some() && self.tau_grid.is_some() {
            return Err(Error::Config("give either tau or tau_grid, not both".into()));
        }
        if self.samples == Some(0) {
            return Err(Error::Config("samples must be >= 1".into()));
        }
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::Config(format!("tol must be >= 0, got {tol}")));
            }
        }
        if self.shifts.is_some() && self.shift_mags.is_some() {
            return Err(Error::Config("give either shifts or shift_mags, not both".into()));
        }
        match &self.data {
            None => return Err(Error::Config("a returns CSV is required (--data)".into())),
            Some(p) if !p.is_file() => {
                return Err(Error::Config(format!("data file {} does not exist", p.display())))
            }
            _ => {}
        }
        if let Some(kind) = self.kind {
            let radii = [
                (kind.uses_box(), &mut self.delta_b, "delta_b"),
                (kind.uses_ellipsoid(), &mut self.delta_e, "delta_e"),
                (kind.uses_polyhedron(), &mut self.delta_p, "delta_p"),
            ];
            for (used, value, name) in radii {
                match (used, value.is_some()) {
                    (false, true) => {
                        return Err(Error::Config(format!("{name} is not used by {kind} uncertainty")))
                    }
                    // Single sets default to the unit ball; intersections need both.
                    (true, false) if !kind.is_combined() => *value = Some(1.0),
                    (true, false) => {
                        return Err(Error::Config(format!("{name} is required for {kind} uncertainty")))
                    }
                    _ => {}
                }
            }
        }
        Ok(self)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn samples(&self) -> usize {
        self.samples.unwrap_or(DEFAULT_SAMPLES)
    }

    fn tol(&self) -> f64 {
        self.tol.unwrap_or(DEFAULT_TOL)
    }

    fn convention(&self) -> ShiftConvention {
        self.shift_convention.unwrap_or_default()
    }

    fn tau(&self) -> Result<f64> {
        self.tau
            .ok_or_else(|| Error::Config("this command needs tau (--tau)".into()))
    }

    fn grid(&self) -> Result<Vec<f64>> {
        let text = self
            .tau_grid
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs a tau grid (--tau-grid)".into()))?;
        let parts: Vec<&str> = text.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(Error::Config(format!("tau grid {text:?} is not start:stop:step")));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("tau grid {text:?}: {s:?} is not a number")))
        };
        tau_grid(num(a)?, num(b)?, num(c)?)
    }

    fn history(&self) -> Result<ReturnHistory> {
        let path = self.data.as_ref().expect("resolved config has data");
        ReturnHistory::from_csv(File::open(path)?)
    }

    fn spec(&self, estimates: &MarketEstimates) -> Result<UncertaintySpec> {
        let kind = self
            .kind
            .ok_or_else(|| Error::Config("this command needs an uncertainty kind (--kind)".into()))?;
        let n = estimates.assets();
        let mu0 = match &self.mu0 {
            Some(m) if m.len() != n => {
                return Err(Error::DimensionMismatch {
                    context: "mu0",
                    expected: n,
                    found: m.len(),
                })
            }
            Some(m) => DVector::from_column_slice(m),
            None => estimates.mu.clone(),
        };
        let radii = Radii {
            delta_b: self.delta_b,
            delta_e: self.delta_e,
            delta_p: self.delta_p,
        };
        match (&self.shift_mags, &self.shifts) {
            (Some(mags), _) => UncertaintySpec::with_diagonal_shifts(kind, radii, mu0, mags),
            (None, Some(vs)) => UncertaintySpec::new(
                kind,
                radii,
                mu0,
                vs.iter().map(|v| DVector::from_column_slice(v)).collect(),
            ),
            (None, None) => Err(Error::Config(
                "shift magnitudes (--shift-mags) or shift vectors are required".into(),
            )),
        }
    }

    fn weights(&self) -> Result<Portfolio> {
        let w = self
            .weights
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs portfolio weights (--weights)".into()))?;
        validate_portfolio(w)
    }

    fn instance(&self, estimates: MarketEstimates) -> Result<ProblemInstance> {
        let spec = self.spec(&estimates)?;
        ProblemInstance::new(estimates, self.tau()?, spec, self.convention())
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            samples: self.samples(),
            seed: self.seed(),
            tol: self.tol(),
            max_cuts: MAX_CUTS,
        }
    }
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    config: &'a RunConfig,
    n: usize,
    #[serde(rename = "T")]
    periods: usize,
    labels: &'a [String],
    #[serde(flatten)]
    estimates: &'a MarketEstimates,
}

#[derive(Serialize)]
struct SystemReport {
    label: String,
    feasible: bool,
    lambda: Option<f64>,
    min_eig: f64,
    best_lambda: f64,
    iterations: usize,
    tolerance_used: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

#[derive(Serialize)]
struct CheckReport<'a> {
    config: &'a RunConfig,
    feasible: bool,
    /// Winning system, or the one closest to certifying.
    label: String,
    lambda: Option<f64>,
    min_eig: f64,
    iterations: usize,
    certified_systems: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    case: Option<CaseSelection>,
    systems: Vec<SystemReport>,
    oracle: &'a AgreementReport,
    agreement: Agreement,
    exit_code: i32,
}

#[derive(Serialize)]
struct MatricesReport<'a> {
    config: &'a RunConfig,
    #[serde(serialize_with = "crate::output::vector")]
    inner_products: DVector<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    case: Option<CaseSelection>,
    systems: Vec<LabeledSystem<'a>>,
}

#[derive(Serialize)]
struct LabeledSystem<'a> {
    label: String,
    #[serde(flatten)]
    system: &'a FeasibilitySystem,
}

#[derive(Serialize)]
struct OracleReport<'a> {
    config: &'a RunConfig,
    closed_form: Option<f64>,
    sampled: f64,
    argmin_zeta: &'a [f64],
    quadratic_worst_case: f64,
    seed: u64,
    worst_case: &'a WorstCase,
}

#[derive(Serialize)]
struct FrontierReport<'a> {
    config: &'a RunConfig,
    points: &'a [FrontierPoint],
}

fn system_reports(verdict: &Verdict) -> Vec<SystemReport> {
    verdict
        .results
        .iter()
        .map(|r| SystemReport {
            label: r.label.to_string(),
            feasible: r.certificate.feasible,
            lambda: r.certificate.lambda_star,
            min_eig: r.certificate.min_eig_at_lambda,
            best_lambda: r.certificate.best_lambda,
            iterations: r.certificate.iterations,
            tolerance_used: r.certificate.tolerance_used,
            warning: r.certificate.warning.clone(),
        })
        .collect()
}

enum Format {
    Json,
    Csv,
}

fn format(f: &Flags, default: Format) -> Format {
    if f.json {
        Format::Json
    } else if f.csv {
        Format::Csv
    } else {
        default
    }
}

fn json_only(f: &Flags, command: &str) -> Result<()> {
    if f.csv {
        return Err(Error::Config(format!("{command} only writes JSON")));
    }
    Ok(())
}

fn cmd_estimate(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let history = cfg.history()?;
    let estimates = estimate(&history)?;
    let report = EstimateReport {
        config: cfg,
        n: history.assets(),
        periods: history.periods(),
        labels: history.labels(),
        estimates: &estimates,
    };
    out.write_all(to_json(&report)?.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_check(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let instance = cfg.instance(estimate(&cfg.history()?)?)?;
    let x = cfg.weights()?;
    let verdict = certify_all(&build_feasibility_systems(&x, &instance)?, cfg.tol())?;
    let oracle = compare_verdicts(&x, &instance, &verdict, cfg.samples(), cfg.seed())?;
    let exit_code = match (oracle.agreement, verdict.feasible) {
        (Agreement::Agree, true) => EXIT_OK,
        (Agreement::Agree, false) => EXIT_INFEASIBLE,
        _ => EXIT_DISAGREE,
    };
    let lead = verdict.winning().unwrap_or_else(|| {
        verdict
            .results
            .iter()
            .max_by(|a, b| {
                a.certificate
                    .min_eig_at_lambda
                    .total_cmp(&b.certificate.min_eig_at_lambda)
            })
            .expect("at least one system")
    });
    let report = CheckReport {
        config: cfg,
        feasible: verdict.feasible,
        label: lead.label.to_string(),
        lambda: lead.certificate.lambda_star,
        min_eig: lead.certificate.min_eig_at_lambda,
        iterations: lead.certificate.iterations,
        certified_systems: verdict.certified_count,
        case: instance.model()?.case,
        systems: system_reports(&verdict),
        agreement: oracle.agreement,
        oracle: &oracle,
        exit_code,
    };
    out.write_all(to_json(&report)?.as_bytes())?;
    Ok(exit_code)
}

fn cmd_matrices(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let instance = cfg.instance(estimate(&cfg.history()?)?)?;
    let x = cfg.weights()?;
    let model = instance.model()?;
    let systems = build_feasibility_systems(&x, &instance)?;
    let report = MatricesReport {
        config: cfg,
        inner_products: inner_products(&x, &model)?.0,
        case: model.case,
        systems: systems
            .iter()
            .map(|s| LabeledSystem {
                label: s.label.to_string(),
                system: s,
            })
            .collect(),
    };
    out.write_all(to_json(&report)?.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_oracle(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let estimates = estimate(&cfg.history()?)?;
    let spec = cfg.spec(&estimates)?;
    let model = crate::uncertainty::UncertaintyModel::new(&spec, cfg.convention())?;
    let x = cfg.weights()?;
    let v = inner_products(&x, &model)?;
    let closed = closed_form(v.nominal(), v.shift_part(), &model.set).map(|w| w.value);
    let sampled = worst_case_sampled(&x, &model, cfg.samples(), cfg.seed())?;
    let quadratic = quadratic_worst_case(&x, &model, cfg.samples(), cfg.seed())?;
    let report = OracleReport {
        config: cfg,
        closed_form: closed,
        sampled: sampled.value,
        argmin_zeta: &sampled.argmin_zeta,
        quadratic_worst_case: quadratic,
        seed: cfg.seed(),
        worst_case: &sampled,
    };
    out.write_all(to_json(&report)?.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_frontier(cfg: &RunConfig, fmt: Format, out: &mut dyn Write) -> Result<i32> {
    let history = cfg.history()?;
    let estimates = estimate(&history)?;
    let spec = cfg.spec(&estimates)?;
    let grid = cfg.grid()?;
    let points = frontier(&estimates, &spec, cfg.convention(), &grid, &cfg.solver_options())?;
    match fmt {
        Format::Json => {
            let report = FrontierReport {
                config: cfg,
                points: &points,
            };
            out.write_all(to_json(&report)?.as_bytes())?;
        }
        Format::Csv => write_frontier_csv(&points, history.labels(), out)?,
    }
    Ok(EXIT_OK)
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn write_frontier_csv(points: &[FrontierPoint], labels: &[String], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["tau", "mode", "variance", "return", "status"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(labels.iter().map(|l| format!("w_{l}")));
    w.write_record(&header)?;
    for p in points {
        let status = serde_json::to_value(p.status)?;
        let mut row = vec![
            format_float(p.tau),
            if p.robust { "robust" } else { "nominal" }.to_string(),
            opt(p.variance),
            opt(p.expected_return),
            status.as_str().unwrap_or_default().to_string(),
        ];
        match &p.x {
            Some(x) => row.extend(x.weights().iter().map(|v| format_float(*v))),
            None => row.extend(labels.iter().map(|_| String::new())),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let (flags, name) = match &cli.command {
        Command::Estimate(f) => (f, "estimate"),
        Command::Check(f) => (f, "check"),
        Command::Frontier(f) => (f, "frontier"),
        Command::Matrices(f) => (f, "matrices"),
        Command::Oracle(f) => (f, "oracle"),
    };
    let base = match &flags.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.overlay(flags).resolve()?;
    match cli.command {
        Command::Frontier(_) => cmd_frontier(&cfg, format(flags, Format::Csv), out),
        _ => {
            json_only(flags, name)?;
            match cli.command {
                Command::Estimate(_) => cmd_estimate(&cfg, out),
                Command::Check(_) => cmd_check(&cfg, out),
                Command::Matrices(_) => cmd_matrices(&cfg, out),
                Command::Oracle(_) => cmd_oracle(&cfg, out),
                Command::Frontier(_) => unreachable!(),
            }
        }
    }
}

/// Runs the command line `args` (including the program name) and returns the
/// process exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}
