//! Nominal and robust Markowitz solves and efficient frontiers.
//!
//! Both problems minimize `1/2 x^T Sigma x` over the long-only simplex. The
//! nominal problem adds `mu^T x >= tau`; the robust problem requires the
//! worst-case return over the uncertainty set to reach `tau`, which is
//! enforced by cutting planes: every cut is the return constraint for one
//! worst-case realization, so the cut set is an outer approximation that
//! tightens until the worst case at the iterate clears `tau`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::certify::{certify_all, DEFAULT_TOL};
use crate::eigen::min_eigenvalue;
use crate::error::{Error, Result};
use crate::lmi::build_feasibility_systems;
use crate::model::{portfolio_return, portfolio_variance, MarketEstimates, Portfolio};
use crate::oracle::{
    closed_form, compare_verdicts, sampled_minimum, Agreement, WorstCase, DEFAULT_SAMPLES,
    DEFAULT_SEED,
};
use crate::qp::{self, Constraint, QpProblem, QpStatus};
use crate::uncertainty::{ProblemInstance, ShiftConvention, UncertaintyModel, UncertaintySpec};

pub type SolveStatus = QpStatus;

pub const MAX_ASSETS: usize = 64;
pub const MAX_CUTS: usize = 100;
/// A cut is needed while the worst case falls short of `tau` by more than this.
pub const CUT_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-10;

/// Lagrange multipliers in the sign convention
/// `Sigma x = budget e + sum_i bounds_i e_i + sum_k returns_k mu_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Multipliers {
    pub budget: f64,
    pub bounds: Vec<f64>,
    pub returns: Vec<f64>,
}

/// One return row `mu . x >= tau`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnConstraint {
    #[serde(serialize_with = "crate::output::vector")]
    pub mu: DVector<f64>,
    pub tau: f64,
}

/// Result of re-certifying a robust solution.
#[derive(Debug, Clone, Serialize)]
pub struct Recertification {
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub agreement: Agreement,
    pub in_squared_domain: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Option<Portfolio>,
    /// `x^T Sigma x`.
    pub variance: Option<f64>,
    /// `1/2 x^T Sigma x`.
    pub objective: Option<f64>,
    pub expected_return: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_case_return: Option<f64>,
    pub kkt_residual: Option<f64>,
    /// Active inequalities: `i < n` is the bound `x_i >= 0`, `n + k` is
    /// return row `k`.
    pub active_set: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Multipliers>,
    pub iterations: usize,
    pub cuts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Recertification>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SolveResult {
    fn infeasible(message: String) -> Self {
        Self {
            status: QpStatus::Infeasible,
            x: None,
            variance: None,
            objective: None,
            expected_return: None,
            worst_case_return: None,
            kkt_residual: None,
            active_set: Vec::new(),
            multipliers: None,
            iterations: 0,
            cuts: 0,
            certificate: None,
            warnings: vec![message],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Sampling budget for worst cases over intersection sets.
    pub samples: usize,
    pub seed: u64,
    /// Certifier tolerance for re-certification.
    pub tol: f64,
    pub max_cuts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            tol: DEFAULT_TOL,
            max_cuts: MAX_CUTS,
        }
    }
}

fn check_covariance(sigma: &DMatrix<f64>) -> Result<()> {
    let n = sigma.nrows();
    if n > MAX_ASSETS {
        return Err(Error::InvalidParameter(format!(
            "at most {MAX_ASSETS} assets are supported, got {n}"
        )));
    }
    let lmin = min_eigenvalue(sigma)?;
    if lmin < -PSD_TOL {
        return Err(Error::InvalidParameter(format!(
            "covariance is not positive semidefinite (min eigenvalue {lmin:e})"
        )));
    }
    Ok(())
}

/// Max-norm KKT violation of `(x, multipliers)` for the problem with the
/// given return rows: stationarity, primal feasibility, complementary
/// slackness and multiplier signs.
pub fn kkt_residual_with(
    sigma: &DMatrix<f64>,
    rows: &[ReturnConstraint],
    x: &DVector<f64>,
    m: &Multipliers,
) -> Result<f64> {
    let n = x.len();
    if sigma.shape() != (n, n) || m.bounds.len() != n || m.returns.len() != rows.len() {
        return Err(Error::DimensionMismatch {
            context: "kkt residual",
            expected: n,
            found: sigma.nrows(),
        });
    }
    let mut r = sigma * x;
    r.add_scalar_mut(-m.budget);
    for i in 0..n {
        r[i] -= m.bounds[i];
    }
    for (row, l) in rows.iter().zip(&m.returns) {
        if row.mu.len() != n {
            return Err(Error::DimensionMismatch {
                context: "kkt residual",
                expected: n,
                found: row.mu.len(),
            });
        }
        r.axpy(-l, &row.mu, 1.0);
    }
    let mut worst = r.amax();
    worst = worst.max((x.sum() - 1.0).abs());
    for i in 0..n {
        worst = worst
            .max((-x[i]).max(0.0))
            .max((m.bounds[i] * x[i]).abs())
            .max((-m.bounds[i]).max(0.0));
    }
    for (row, l) in rows.iter().zip(&m.returns) {
        let slack = row.mu.dot(x) - row.tau;
        worst = worst
            .max((-slack).max(0.0))
            .max((l * slack).abs())
            .max((-l).max(0.0));
    }
    Ok(worst)
}

/// [`kkt_residual_with`] for the nominal problem.
pub fn kkt_residual(
    estimates: &MarketEstimates,
    tau: f64,
    x: &[f64],
    multipliers: &Multipliers,
) -> Result<f64> {
    let row = ReturnConstraint {
        mu: estimates.mu.clone(),
        tau,
    };
    kkt_residual_with(
        &estimates.sigma,
        &[row],
        &DVector::from_column_slice(x),
        multipliers,
    )
}

/// Uniform weights when they meet `tau`, otherwise the highest-return vertex.
fn nominal_start(mu: &DVector<f64>, tau: f64) -> DVector<f64> {
    let n = mu.len();
    if mu.mean() >= tau {
        return DVector::from_element(n, 1.0 / n as f64);
    }
    let k = (0..n).fold(0, |best, i| if mu[i] > mu[best] { i } else { best });
    let mut x = DVector::zeros(n);
    x[k] = 1.0;
    x
}

fn simplex_qp(sigma: &DMatrix<f64>, rows: &[ReturnConstraint]) -> QpProblem {
    let n = sigma.nrows();
    let mut inequalities: Vec<Constraint> = (0..n)
        .map(|i| {
            let mut a = DVector::zeros(n);
            a[i] = 1.0;
            Constraint::new(a, 0.0)
        })
        .collect();
    inequalities.extend(rows.iter().map(|r| Constraint::new(r.mu.clone(), r.tau)));
    QpProblem {
        q: sigma.clone(),
        c: DVector::zeros(n),
        equalities: vec![Constraint::new(DVector::from_element(n, 1.0), 1.0)],
        inequalities,
    }
}

/// Solves the QP for the current rows and packages the result.
fn solve_rows(
    sigma: &DMatrix<f64>,
    mu: &DVector<f64>,
    rows: &[ReturnConstraint],
    start: &DVector<f64>,
) -> Result<SolveResult> {
    let n = sigma.nrows();
    let sol = qp::solve(&simplex_qp(sigma, rows), start, qp::MAX_ITERATIONS)?;
    if sol.status == QpStatus::Infeasible {
        return Ok(SolveResult::infeasible(
            "no long-only portfolio meets the return constraints".into(),
        ));
    }
    let multipliers = Multipliers {
        budget: sol.eq_multipliers[0],
        bounds: sol.ineq_multipliers[..n].to_vec(),
        returns: sol.ineq_multipliers[n..].to_vec(),
    };
    let kkt = kkt_residual_with(sigma, rows, &sol.x, &multipliers)?;
    let x = Portfolio::from_iterate(&sol.x);
    let variance = portfolio_variance(sigma, &x)?;
    Ok(SolveResult {
        status: sol.status,
        expected_return: Some(portfolio_return(mu, &x)?),
        variance: Some(variance),
        objective: Some(0.5 * variance),
        x: Some(x),
        worst_case_return: None,
        kkt_residual: Some(kkt),
        active_set: sol.active,
        multipliers: Some(multipliers),
        iterations: sol.iterations,
        cuts: 0,
        certificate: None,
        warnings: Vec::new(),
    })
}

fn unreachable_tau(max_mu: f64, tau: f64) -> SolveResult {
    SolveResult::infeasible(format!(
        "tau {tau} exceeds the largest attainable return {max_mu}"
    ))
}

/// Minimum-variance long-only portfolio with `mu^T x >= tau`.
pub fn solve_nominal(estimates: &MarketEstimates, tau: f64) -> Result<SolveResult> {
    if !tau.is_finite() {
        return Err(Error::NonFinite("tau"));
    }
    check_covariance(&estimates.sigma)?;
    let mu = &estimates.mu;
    if tau > mu.max() {
        return Ok(unreachable_tau(mu.max(), tau));
    }
    let rows = [ReturnConstraint {
        mu: mu.clone(),
        tau,
    }];
    solve_rows(&estimates.sigma, mu, &rows, &nominal_start(mu, tau))
}

fn worst_case_at(
    x: &Portfolio,
    model: &UncertaintyModel,
    opts: &SolverOptions,
) -> Result<WorstCase> {
    let v = crate::lmi::inner_products(x, model)?;
    let (v0, w) = (v.nominal(), v.shift_part());
    match closed_form(v0, w, &model.set) {
        Some(wc) => Ok(wc),
        None => sampled_minimum(v0, w, &model.set, opts.samples, opts.seed),
    }
}

/// Minimum-variance portfolio whose worst-case return reaches `tau`.
pub fn solve_robust(instance: &ProblemInstance) -> Result<SolveResult> {
    solve_robust_with(instance, &SolverOptions::default())
}

pub fn solve_robust_with(instance: &ProblemInstance, opts: &SolverOptions) -> Result<SolveResult> {
    let tau = instance.tau;
    let estimates = &instance.estimates;
    check_covariance(&estimates.sigma)?;
    let model = instance.model()?;
    let mu0 = &model.mu0;
    if tau > mu0.max() {
        return Ok(unreachable_tau(mu0.max(), tau));
    }

    let mut rows = vec![ReturnConstraint {
        mu: mu0.clone(),
        tau,
    }];
    let mut start = nominal_start(mu0, tau);
    let mut iterations = 0;
    let (mut result, worst) = loop {
        let mut result = solve_rows(&estimates.sigma, &estimates.mu, &rows, &start)?;
        iterations += result.iterations;
        result.iterations = iterations;
        result.cuts = rows.len() - 1;
        let Some(x) = result.x.clone() else {
            result.warnings =
                vec!["no long-only portfolio has a worst-case return reaching tau".into()];
            return Ok(result);
        };
        let worst = worst_case_at(&x, &model, opts)?;
        if tau - worst.value <= CUT_TOL {
            break (result, worst);
        }
        if rows.len() > opts.max_cuts {
            result.status = QpStatus::MaxIter;
            result.warnings.push(format!(
                "cutting planes stopped after {} cuts with violation {:e}",
                opts.max_cuts,
                tau - worst.value
            ));
            break (result, worst);
        }
        rows.push(ReturnConstraint {
            mu: model.realization(&worst.argmin_zeta),
            tau,
        });
        start = x.weights().clone();
    };
    result.worst_case_return = Some(worst.value);

    let x = result.x.clone().expect("feasible result carries weights");
    let verdict = certify_all(&build_feasibility_systems(&x, instance)?, opts.tol)?;
    let report = compare_verdicts(&x, instance, &verdict, opts.samples, opts.seed)?;
    let winner = verdict.winning();
    if !verdict.feasible {
        result.warnings.push(format!(
            "robust solution is not certified ({}; worst-case return {:e})",
            match report.agreement {
                Agreement::OracleOnly => "oracle_only",
                Agreement::CertificateOnly => "certificate_only",
                Agreement::Agree => "agree",
            },
            worst.value
        ));
    }
    result.certificate = Some(Recertification {
        certified: verdict.feasible,
        label: winner.map(|w| w.label.to_string()),
        lambda: winner.and_then(|w| w.certificate.lambda_star),
        agreement: report.agreement,
        in_squared_domain: report.in_squared_domain,
    });
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontierPoint {
    pub tau: f64,
    pub robust: bool,
    pub status: SolveStatus,
    pub variance: Option<f64>,
    pub expected_return: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_case_return: Option<f64>,
    pub x: Option<Portfolio>,
    /// Re-certification outcome of robust points.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified: Option<bool>,
}

impl FrontierPoint {
    fn from_result(tau: f64, robust: bool, r: SolveResult) -> Self {
        Self {
            tau,
            robust,
            status: r.status,
            variance: r.variance,
            expected_return: r.expected_return,
            worst_case_return: r.worst_case_return,
            certified: r.certificate.map(|c| c.certified),
            x: r.x,
        }
    }
}

/// Inclusive arithmetic grid `start, start + step, ...` up to `stop`.
pub fn tau_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err(Error::NonFinite("tau grid"));
    }
    if step <= 0.0 || stop < start {
        return Err(Error::InvalidParameter(format!(
            "tau grid needs start <= stop and step > 0, got {start}:{stop}:{step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

/// Nominal and robust points for every `tau`, in grid order with the nominal
/// point first.
pub fn frontier(
    estimates: &MarketEstimates,
    spec: &UncertaintySpec,
    convention: ShiftConvention,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<FrontierPoint>> {
    if grid.is_empty() {
        return Err(Error::Empty("tau grid"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("tau grid must be ascending".into()));
    }
    let mut points = Vec::with_capacity(2 * grid.len());
    for &tau in grid {
        points.push(FrontierPoint::from_result(tau, false, solve_nominal(estimates, tau)?));
        let instance = ProblemInstance::new(estimates.clone(), tau, spec.clone(), convention)?;
        points.push(FrontierPoint::from_result(
            tau,
            true,
            solve_robust_with(&instance, opts)?,
        ));
    }
    Ok(points)
}
