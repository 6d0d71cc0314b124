//! Worst-case portfolio returns over the perturbation set.
//!
//! With `v = (mu0^T x, w_1, ..., w_n)` and `w_j = shift_j^T x`, the return at
//! a perturbation `zeta` is `v0 + zeta . w`. Over a single norm ball the
//! minimum is `v0 - r ||w||_*` with the dual norm; intersections are handled
//! by the sampled search, which keeps every candidate inside the set so its
//! value is always attained.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::certify::Verdict;
use crate::error::{Error, Result};
use crate::lmi::inner_products;
use crate::model::Portfolio;
use crate::uncertainty::{norm_1, norm_2, norm_inf, PerturbationSet, ProblemInstance, UncertaintyModel};

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 20_240_601;
/// Box vertices are enumerated exhaustively up to this dimension.
pub const MAX_ENUMERATED_DIM: usize = 16;
/// Relative slack of the membership test applied to every candidate.
const MEMBERSHIP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCase {
    pub value: f64,
    pub argmin_zeta: Vec<f64>,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Candidates that passed the membership test.
    pub candidates: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// First index of the largest `|w_j|`.
fn argmax_abs(w: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, x) in w.iter().enumerate() {
        if best.is_none_or(|b| x.abs() > w[b].abs()) {
            best = Some(j);
        }
    }
    best
}

/// Dual-norm worst case over a single ball; `None` for intersections.
pub fn closed_form(v0: f64, w: &[f64], set: &PerturbationSet) -> Option<WorstCase> {
    let n = w.len();
    let (value, zeta) = match (set.box_radius, set.l2_radius, set.l1_radius) {
        (Some(r), None, None) => (
            v0 - r * norm_1(w),
            w.iter().map(|x| -r * sign(*x)).collect(),
        ),
        (None, Some(r), None) => {
            let nw = norm_2(w);
            let zeta = if nw > 0.0 {
                w.iter().map(|x| -r * x / nw).collect()
            } else {
                vec![0.0; n]
            };
            (v0 - r * nw, zeta)
        }
        (None, None, Some(r)) => {
            let mut zeta = vec![0.0; n];
            if let Some(k) = argmax_abs(w) {
                zeta[k] = -r * sign(w[k]);
            }
            (v0 - r * norm_inf(w), zeta)
        }
        _ => return None,
    };
    Some(WorstCase {
        value,
        argmin_zeta: zeta,
        method: Method::ClosedForm,
        seed: None,
        candidates: 1,
        warnings: Vec::new(),
    })
}

/// A minimizer of `zeta . w` over `set`, solved through the optimality
/// conditions of each pairwise intersection. Used to seed the sampled search.
pub fn extreme_point(w: &[f64], set: &PerturbationSet) -> Option<Vec<f64>> {
    let n = w.len();
    let mut zeta = match (set.box_radius, set.l2_radius, set.l1_radius) {
        (None, None, None) => vec![0.0; n],
        (Some(_), None, None) | (None, Some(_), None) | (None, None, Some(_)) => {
            closed_form(0.0, w, set)?.argmin_zeta
        }
        (Some(b), Some(e), None) => box_ball(w, b, e),
        (Some(b), None, Some(p)) => box_diamond(w, b, p),
        (None, Some(e), Some(p)) => ball_diamond(w, e, p),
        (Some(_), Some(_), Some(_)) => return None,
    };
    let s = set.boundary_scale(&zeta);
    if s < 1.0 {
        zeta.iter_mut().for_each(|z| *z *= s);
    }
    Some(zeta)
}

/// `clamp(-w / nu, -b, b)` with `nu` set so the ball constraint binds.
fn box_ball(w: &[f64], b: f64, e: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> { w.iter().map(|x| (-x / nu).clamp(-b, b)).collect() };
    let vertex: Vec<f64> = w.iter().map(|x| -b * sign(*x)).collect();
    let nw = norm_2(w);
    if norm_2(&vertex) <= e || nw == 0.0 {
        return vertex;
    }
    let (mut lo, mut hi) = (0.0, nw / e);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_2(&at(mid)) > e {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// Fractional knapsack: spend the l1 budget on the largest `|w_j|` first.
fn box_diamond(w: &[f64], b: f64, p: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&i, &j| w[j].abs().total_cmp(&w[i].abs()));
    let mut zeta = vec![0.0; w.len()];
    let mut budget = p;
    for j in order {
        if budget <= 0.0 || w[j] == 0.0 {
            break;
        }
        let amount = b.min(budget);
        zeta[j] = -amount * sign(w[j]);
        budget -= amount;
    }
    zeta
}

fn soft_threshold(w: &[f64], beta: f64) -> Vec<f64> {
    w.iter()
        .map(|x| sign(*x) * (x.abs() - beta).max(0.0))
        .collect()
}

/// `-e S_beta(w) / ||S_beta(w)||_2`, with `beta` set so the l1 constraint binds.
fn ball_diamond(w: &[f64], e: f64, p: f64) -> Vec<f64> {
    let at = |beta: f64| -> Vec<f64> {
        let s = soft_threshold(w, beta);
        let ns = norm_2(&s);
        if ns == 0.0 {
            return vec![0.0; w.len()];
        }
        s.iter().map(|x| -e * x / ns).collect()
    };
    let first = at(0.0);
    if norm_1(&first) <= p {
        return first;
    }
    let (mut lo, mut hi) = (0.0, norm_inf(w));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let z = at(mid);
        if norm_2(&z) > 0.0 && norm_1(&z) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = at(hi);
    if norm_2(&z) > 0.0 {
        z
    } else {
        at(lo)
    }
}

/// Feeds every candidate perturbation to `visit`: the origin, the extreme
/// points for `w` and `-w`, sign vectors, signed coordinate vectors and
/// Gaussian directions, each scaled onto the boundary of `set`.
fn for_each_candidate(
    w: &[f64],
    set: &PerturbationSet,
    samples: usize,
    seed: u64,
    warnings: &mut Vec<String>,
    mut visit: impl FnMut(&[f64]),
) {
    let n = w.len();
    let to_boundary = |d: &mut Vec<f64>, visit: &mut dyn FnMut(&[f64])| {
        let s = set.boundary_scale(d);
        if s.is_finite() {
            d.iter_mut().for_each(|x| *x *= s);
            visit(d);
        }
    };

    visit(&vec![0.0; n]);
    let neg: Vec<f64> = w.iter().map(|x| -x).collect();
    for dir in [w, &neg[..]] {
        if let Some(z) = extreme_point(dir, set) {
            visit(&z);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = vec![0.0; n];
    if n <= MAX_ENUMERATED_DIM {
        for mask in 0u64..(1u64 << n) {
            for (j, x) in d.iter_mut().enumerate() {
                *x = if mask >> j & 1 == 1 { -1.0 } else { 1.0 };
            }
            to_boundary(&mut d, &mut visit);
        }
    } else {
        warnings.push(format!(
            "{n} perturbation coordinates exceed {MAX_ENUMERATED_DIM}; \
             sampled {samples} random box vertices instead of enumerating them"
        ));
        for _ in 0..samples {
            for x in d.iter_mut() {
                *x = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            to_boundary(&mut d, &mut visit);
        }
    }
    for k in 0..n {
        for s in [1.0, -1.0] {
            d.iter_mut().for_each(|x| *x = 0.0);
            d[k] = s;
            to_boundary(&mut d, &mut visit);
        }
    }
    for _ in 0..samples {
        for x in d.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        to_boundary(&mut d, &mut visit);
    }
}

fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    Ok(())
}

/// Minimum of `v0 + zeta . w` over the sampled candidates.
pub fn sampled_minimum(
    v0: f64,
    w: &[f64],
    set: &PerturbationSet,
    samples: usize,
    seed: u64,
) -> Result<WorstCase> {
    check_samples(samples)?;
    let mut warnings = Vec::new();
    let mut best = (f64::INFINITY, Vec::new());
    let mut count = 0;
    for_each_candidate(w, set, samples, seed, &mut warnings, |z| {
        if !set.contains(z, MEMBERSHIP_SLACK) {
            return;
        }
        count += 1;
        let value = v0 + dot(z, w);
        if value < best.0 {
            best = (value, z.to_vec());
        }
    });
    Ok(WorstCase {
        value: best.0,
        argmin_zeta: best.1,
        method: Method::Sampled,
        seed: Some(seed),
        candidates: count,
        warnings,
    })
}

fn inner(x: &Portfolio, model: &UncertaintyModel) -> Result<(f64, Vec<f64>)> {
    let v = inner_products(x, model)?;
    Ok((v.nominal(), v.shift_part().to_vec()))
}

/// Exact for single sets, sampled with the default budget for intersections.
pub fn worst_case_return(x: &Portfolio, model: &UncertaintyModel) -> Result<WorstCase> {
    let (v0, w) = inner(x, model)?;
    match closed_form(v0, &w, &model.set) {
        Some(wc) => Ok(wc),
        None => sampled_minimum(v0, &w, &model.set, DEFAULT_SAMPLES, DEFAULT_SEED),
    }
}

pub fn worst_case_sampled(
    x: &Portfolio,
    model: &UncertaintyModel,
    samples: usize,
    seed: u64,
) -> Result<WorstCase> {
    let (v0, w) = inner(x, model)?;
    sampled_minimum(v0, &w, &model.set, samples, seed)
}

/// Minimum of `(mu(zeta)^T x)^2` over the sampled candidates.
///
/// The set is convex, so when the extreme returns have opposite signs the
/// zero crossing on the segment between them is added as a candidate.
pub fn quadratic_worst_case(
    x: &Portfolio,
    model: &UncertaintyModel,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_samples(samples)?;
    let (v0, w) = inner(x, model)?;
    let set = &model.set;
    let mut warnings = Vec::new();
    let mut min_sq = f64::INFINITY;
    let mut lowest = (f64::INFINITY, Vec::new());
    let mut highest = (f64::NEG_INFINITY, Vec::new());
    for_each_candidate(&w, set, samples, seed, &mut warnings, |z| {
        if !set.contains(z, MEMBERSHIP_SLACK) {
            return;
        }
        let r = v0 + dot(z, &w);
        min_sq = min_sq.min(r * r);
        if r < lowest.0 {
            lowest = (r, z.to_vec());
        }
        if r > highest.0 {
            highest = (r, z.to_vec());
        }
    });
    if lowest.0 < 0.0 && highest.0 > 0.0 {
        let t = highest.0 / (highest.0 - lowest.0);
        let z: Vec<f64> = lowest
            .1
            .iter()
            .zip(&highest.1)
            .map(|(a, b)| t * a + (1.0 - t) * b)
            .collect();
        let r = v0 + dot(&z, &w);
        min_sq = min_sq.min(r * r);
    }
    Ok(min_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Agree,
    /// Certified, yet the oracle finds a violating realization.
    CertificateOnly,
    /// The oracle finds no violation, yet no certificate was found.
    OracleOnly,
}

impl Agreement {
    pub fn between(certificate: bool, oracle: bool) -> Self {
        match (certificate, oracle) {
            (true, false) => Agreement::CertificateOnly,
            (false, true) => Agreement::OracleOnly,
            _ => Agreement::Agree,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub agreement: Agreement,
    pub certificate_feasible: bool,
    pub oracle_feasible: bool,
    pub squared_oracle_feasible: bool,
    /// Agreement between the certificate and the squared oracle.
    pub squared_agreement: Agreement,
    pub tau: f64,
    pub worst_case: WorstCase,
    pub quadratic_worst_case: f64,
    /// Whether the worst-case return is nonnegative, where squaring the
    /// constraint is an equivalence.
    pub in_squared_domain: bool,
    pub seed: u64,
}

/// Tolerance for `value >= tau` in the oracle verdicts.
pub fn oracle_tolerance(tau: f64) -> f64 {
    1e-9 * (1.0 + tau.abs())
}

pub fn compare_verdicts(
    x: &Portfolio,
    instance: &ProblemInstance,
    verdict: &Verdict,
    samples: usize,
    seed: u64,
) -> Result<AgreementReport> {
    let model = instance.model()?;
    let tau = instance.tau;
    let worst_case = match model.kind.is_combined() {
        true => worst_case_sampled(x, &model, samples, seed)?,
        false => worst_case_return(x, &model)?,
    };
    let quadratic = quadratic_worst_case(x, &model, samples, seed)?;
    let oracle_feasible = worst_case.value >= tau - oracle_tolerance(tau);
    let squared_oracle_feasible = quadratic >= tau * tau - oracle_tolerance(tau * tau);
    Ok(AgreementReport {
        agreement: Agreement::between(verdict.feasible, oracle_feasible),
        certificate_feasible: verdict.feasible,
        oracle_feasible,
        squared_oracle_feasible,
        squared_agreement: Agreement::between(verdict.feasible, squared_oracle_feasible),
        tau,
        in_squared_domain: worst_case.value >= 0.0,
        worst_case,
        quadratic_worst_case: quadratic,
        seed,
    })
}
