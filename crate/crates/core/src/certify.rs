//! Search for an S-lemma multiplier.
//!
//! `g(lambda) = lambda_min(A - lambda B)` is a pointwise minimum of functions
//! affine in `lambda`, hence concave. The certifier brackets its maximum on
//! `lambda >= 0` by doubling and then narrows the bracket by golden-section
//! search. The system is certified when the best value clears `-tol`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::eigen::min_eigenvalue;
use crate::error::{Error, Result};
use crate::lmi::{FeasibilitySystem, SystemLabel};

/// Absolute tolerance on `lambda_min`, scaled by `1 + ||A||_F`.
pub const DEFAULT_TOL: f64 = 1e-8;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub feasible: bool,
    /// The multiplier, present iff `feasible`.
    pub lambda_star: Option<f64>,
    /// Best `lambda` found, feasible or not.
    pub best_lambda: f64,
    /// `g` at `best_lambda`.
    pub min_eig_at_lambda: f64,
    /// Number of eigenvalue evaluations.
    pub iterations: usize,
    pub tolerance_used: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// `lambda_min(A - lambda B)`.
pub fn multiplier_objective(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    min_eigenvalue(&(a - b * lambda))
}

struct Search<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DMatrix<f64>,
    evals: usize,
    best: (f64, f64),
}

impl Search<'_> {
    fn eval(&mut self, lambda: f64) -> Result<f64> {
        let g = multiplier_objective(self.a, self.b, lambda)?;
        self.evals += 1;
        if g > self.best.1 {
            self.best = (lambda, g);
        }
        Ok(g)
    }
}

/// Certifies a raw `(A, B)` pair.
pub fn certify_matrices(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<Certificate> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            context: "feasibility system",
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feasibility system"));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be >= 0, got {tol}")));
    }

    let a_norm = a.norm();
    let tolerance_used = tol * (1.0 + a_norm);
    let cap = 1e12 * (1.0 + a_norm / b.norm().max(1e-30));

    let mut s = Search {
        a,
        b,
        evals: 0,
        best: (0.0, f64::NEG_INFINITY),
    };
    let mut warning = None;

    // lambda = 0 first; then double until g stops increasing.
    let mut before = 0.0;
    let mut prev = 0.0;
    let mut g_prev = s.eval(0.0)?;
    let mut lambda = 1.0;
    let (lo, hi) = loop {
        if lambda >= cap {
            let g = s.eval(cap)?;
            if g >= g_prev {
                warning = Some(format!(
                    "multiplier bracket reached the cap {cap:e} while g was still increasing"
                ));
            }
            break (prev, cap);
        }
        let g = s.eval(lambda)?;
        if g <= g_prev {
            break (before, lambda);
        }
        before = prev;
        prev = lambda;
        g_prev = g;
        lambda *= 2.0;
    };

    let width = 1e-10 * (1.0 + hi);
    let (mut lo, mut hi) = (lo, hi);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = s.eval(x1)?;
    let mut f2 = s.eval(x2)?;
    while hi - lo > width {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = s.eval(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = s.eval(x1)?;
        }
    }
    s.eval(0.5 * (lo + hi))?;

    let (best_lambda, best_g) = s.best;
    let feasible = best_g >= -tolerance_used;
    if !feasible && warning.is_some() {
        warning = warning.map(|w| format!("{w}; reported infeasible"));
    }
    Ok(Certificate {
        feasible,
        lambda_star: feasible.then_some(best_lambda),
        best_lambda,
        min_eig_at_lambda: best_g,
        iterations: s.evals,
        tolerance_used,
        warning,
    })
}

pub fn certify(system: &FeasibilitySystem, tol: f64) -> Result<Certificate> {
    certify_matrices(&system.a, &system.b, tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct LabeledCertificate {
    pub label: SystemLabel,
    pub certificate: Certificate,
}

/// Aggregate over a family of systems: feasible when any member certifies.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub feasible: bool,
    /// Index of the first certified system.
    pub winner: Option<usize>,
    pub certified_count: usize,
    pub results: Vec<LabeledCertificate>,
}

impl Verdict {
    pub fn winning(&self) -> Option<&LabeledCertificate> {
        self.winner.map(|i| &self.results[i])
    }
}

/// Certifies every system, preserving input order.
pub fn certify_all(systems: &[FeasibilitySystem], tol: f64) -> Result<Verdict> {
    if systems.is_empty() {
        return Err(Error::Empty("feasibility systems"));
    }
    let results = systems
        .iter()
        .map(|s| {
            Ok(LabeledCertificate {
                label: s.label.clone(),
                certificate: certify(s, tol)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let winner = results.iter().position(|r| r.certificate.feasible);
    let certified_count = results.iter().filter(|r| r.certificate.feasible).count();
    Ok(Verdict {
        feasible: winner.is_some(),
        winner,
        certified_count,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::is_psd;
    use crate::lmi::{build_feasibility_systems, SetForm};
    use crate::model::{validate_portfolio, MarketEstimates, Portfolio};
    use crate::uncertainty::{
        ProblemInstance, Radii, ShiftConvention, UncertaintyKind, UncertaintySpec,
    };
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    fn ell_b() -> DMatrix<f64> {
        mat(&[&[1.0, 0.0], &[0.0, -1.0]])
    }

    #[test]
    fn boundary_certificate_at_lambda_one() {
        // det(A - lambda B) = -(lambda - 1)^2, so only lambda = 1 works.
        let a = mat(&[&[3.0, 2.0], &[2.0, 1.0]]);
        let c = certify_matrices(&a, &ell_b(), DEFAULT_TOL).unwrap();
        assert!(c.feasible);
        let lambda = c.lambda_star.unwrap();
        assert!((lambda - 1.0).abs() <= 1e-6, "lambda = {lambda}");
        assert!(c.min_eig_at_lambda.abs() <= 1e-7);
        assert!(is_psd(&(&a - ell_b() * lambda), 2.0 * c.tolerance_used).unwrap());
    }

    #[test]
    fn infeasible_pair() {
        // det(A - lambda B) = -lambda^2 - lambda - 1 < 0 for all lambda >= 0.
        let a = mat(&[&[0.0, 1.0], &[1.0, 1.0]]);
        let c = certify_matrices(&a, &ell_b(), DEFAULT_TOL).unwrap();
        assert!(!c.feasible);
        assert!(c.lambda_star.is_none());
        assert!(c.min_eig_at_lambda <= -0.5);
        // g(0) = (1 - sqrt 5) / 2 is the maximum.
        assert!((c.min_eig_at_lambda - (1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_shift_system_has_an_interval_of_multipliers() {
        let a_val: f64 = 0.3;
        let tau: f64 = 0.2;
        let n = 3;
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a[(0, 0)] = a_val * a_val - tau * tau;
        let b = crate::lmi::build_b(UncertaintyKind::Ellipsoidal, n, None).unwrap();
        let c = certify_matrices(&a, &b, DEFAULT_TOL).unwrap();
        assert!(c.feasible);
        let l = c.lambda_star.unwrap();
        assert!((0.0..=a_val * a_val - tau * tau).contains(&l));
        assert!(c.min_eig_at_lambda >= 0.0);
    }

    #[test]
    fn rejects_mismatched_and_nonfinite() {
        let a = DMatrix::zeros(2, 2);
        assert!(certify_matrices(&a, &DMatrix::zeros(3, 3), DEFAULT_TOL).is_err());
        let mut bad = ell_b();
        bad[(0, 0)] = f64::INFINITY;
        assert!(matches!(
            certify_matrices(&a, &bad, DEFAULT_TOL),
            Err(Error::NonFinite(_))
        ));
        assert!(certify_all(&[], DEFAULT_TOL).is_err());
    }

    #[test]
    fn positive_definite_b_hits_cap() {
        // A - lambda I decreases immediately, but A - lambda (-I) grows forever.
        let a = mat(&[&[-1.0, 0.0], &[0.0, -1.0]]);
        let b = mat(&[&[-1.0, 0.0], &[0.0, -1.0]]);
        let c = certify_matrices(&a, &b, DEFAULT_TOL).unwrap();
        assert!(c.feasible);
        assert!(c.warning.is_some());
    }

    fn box_instance(mu0: &[f64], mags: &[f64], tau: f64) -> ProblemInstance {
        let n = mu0.len();
        let mu = DVector::from_column_slice(mu0);
        let est = MarketEstimates::new(mu.clone(), DMatrix::identity(n, n)).unwrap();
        let spec =
            UncertaintySpec::with_diagonal_shifts(UncertaintyKind::Box, Radii::unit(), mu, mags)
                .unwrap();
        ProblemInstance::new(est, tau, spec, ShiftConvention::UnitSet).unwrap()
    }

    #[test]
    fn box_family_single_winner() {
        // Only asset 2 carries a shift, so only the M = 2 slab can certify:
        // worst case 0.5*0.1 + 0.5*0.2 - 0.5*0.04 = 0.13 >= 0.12.
        let inst = box_instance(&[0.1, 0.2, 0.15], &[0.0, 0.04, 0.0], 0.12);
        let x = validate_portfolio(&[0.5, 0.5, 0.0]).unwrap();
        let systems = build_feasibility_systems(&x, &inst).unwrap();
        let v = certify_all(&systems, DEFAULT_TOL).unwrap();
        assert!(v.feasible);
        assert_eq!(v.certified_count, 1);
        let win = v.winning().unwrap();
        assert_eq!(win.label.box_index, Some(2));
        assert_eq!(win.label.form, SetForm::Box);
        // Cross-check by enumerating zeta_2 over [-1, 1].
        let worst = (0..=2000)
            .map(|k| -1.0 + k as f64 / 1000.0)
            .map(|z| 0.05 + 0.5 * (0.2 + 0.04 * z))
            .fold(f64::INFINITY, f64::min);
        assert!(worst >= 0.12);
    }

    #[test]
    fn single_feasible_and_all_infeasible() {
        let inst = box_instance(&[2.0], &[1.0], 1.0);
        let v = certify_all(
            &build_feasibility_systems(&Portfolio::vertex(1, 0), &inst).unwrap(),
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(v.feasible);

        let inst = box_instance(&[0.1, 0.2, 0.15], &[0.05, 0.05, 0.05], 0.3);
        let v = certify_all(
            &build_feasibility_systems(&Portfolio::uniform(3), &inst).unwrap(),
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(!v.feasible);
        assert_eq!(v.results.len(), 3);
        assert!(v.results.iter().all(|r| r.certificate.lambda_star.is_none()));
    }

    #[test]
    fn concave_midpoint_property() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..6);
            let v = DVector::from_fn(n + 1, |_, _| rng.random_range(-1.0..1.0));
            let mut a = &v * v.transpose();
            a[(0, 0)] -= rng.random_range(0.0..1.0);
            let b = crate::lmi::build_b(UncertaintyKind::Polyhedral, n, None).unwrap();
            let l1: f64 = rng.random_range(0.0..5.0);
            let l2: f64 = rng.random_range(0.0..5.0);
            let g1 = multiplier_objective(&a, &b, l1).unwrap();
            let g2 = multiplier_objective(&a, &b, l2).unwrap();
            let gm = multiplier_objective(&a, &b, 0.5 * (l1 + l2)).unwrap();
            assert!(gm >= g1.min(g2) - 1e-9);
        }
    }
}
