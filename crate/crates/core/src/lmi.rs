//! Homogenized quadratic forms for the robust return constraint.
//!
//! With `v_0 = mu0^T x` and `v_j = shift_j^T x`, the squared constraint
//! `(mu(zeta)^T x)^2 >= tau^2` over the set becomes `z^T A z >= 0` whenever
//! `z^T B z >= 0`, for `z = (t, zeta)`. `A` is the rank-two matrix
//! `v' v'^T - c e0 e0^T` and `B` encodes the set. Combined sets reduce to one
//! of the single-set forms after choosing which set dominates.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Portfolio;
use crate::uncertainty::{ProblemInstance, UncertaintyKind, UncertaintyModel};

/// `(mu0^T x, shift_1^T x, ..., shift_n^T x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductVector(pub DVector<f64>);

impl InnerProductVector {
    pub fn nominal(&self) -> f64 {
        self.0[0]
    }

    /// The shift products `w_j = shift_j^T x`.
    pub fn shift_part(&self) -> &[f64] {
        &self.0.as_slice()[1..]
    }
}

pub fn inner_products(x: &Portfolio, model: &UncertaintyModel) -> Result<InnerProductVector> {
    let n = model.assets();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            context: "inner products",
            expected: n,
            found: x.len(),
        });
    }
    let w = x.weights();
    let mut v = DVector::zeros(n + 1);
    v[0] = model.mu0.dot(w);
    for (j, s) in model.shifts.iter().enumerate() {
        v[j + 1] = s.dot(w);
    }
    if v.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("inner products"));
    }
    Ok(InnerProductVector(v))
}

/// The vector `v'` with its first entry multiplied by `nominal_scale`.
pub fn scaled_vector(v: &InnerProductVector, nominal_scale: f64) -> DVector<f64> {
    let mut s = v.0.clone();
    s[0] *= nominal_scale;
    s
}

/// `A = v' v'^T - (tau_scale * tau)^2 e0 e0^T`.
///
/// Unit scales give the single-set matrix; `sqrt(n)` and `n` give the
/// box-dominated forms of the box/ellipsoid and box/polyhedron intersections.
pub fn build_a(
    v: &InnerProductVector,
    tau: f64,
    nominal_scale: f64,
    tau_scale: f64,
) -> Result<DMatrix<f64>> {
    if !(nominal_scale > 0.0 && tau_scale > 0.0) {
        return Err(Error::InvalidParameter("scales must be positive".into()));
    }
    if !tau.is_finite() || v.0.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("A-matrix inputs"));
    }
    let vs = scaled_vector(v, nominal_scale);
    Ok(rank_two(&vs, offset(tau, tau_scale)))
}

fn offset(tau: f64, tau_scale: f64) -> f64 {
    let t = tau_scale * tau;
    t * t
}

fn rank_two(vs: &DVector<f64>, c: f64) -> DMatrix<f64> {
    let mut a = vs * vs.transpose();
    a[(0, 0)] -= c;
    a
}

/// The set matrix `B` for `kind` in dimension `n + 1`.
///
/// - `Ellipsoidal`, `EllipsoidalPolyhedral`: `diag(1, -1, ..., -1)`.
/// - `Box`: `1` at `(0, 0)`, `-1` at `(M, M)`, zero elsewhere; `M` in `1..=n`.
/// - `Polyhedral`: `1` at `(0, 0)` and an all `-1` lower-right block.
/// - `BoxEllipsoidal`: `diag(n, -1, ..., -1)` (box-dominated case).
/// - `BoxPolyhedral`: `n^2` at `(0, 0)` and an all `-1` block (box-dominated case).
pub fn build_b(kind: UncertaintyKind, n: usize, box_index: Option<usize>) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    let dim = n + 1;
    let mut b = DMatrix::zeros(dim, dim);
    let nf = n as f64;
    match kind {
        UncertaintyKind::Ellipsoidal | UncertaintyKind::EllipsoidalPolyhedral => {
            b[(0, 0)] = 1.0;
            for j in 1..dim {
                b[(j, j)] = -1.0;
            }
        }
        UncertaintyKind::BoxEllipsoidal => {
            b[(0, 0)] = nf;
            for j in 1..dim {
                b[(j, j)] = -1.0;
            }
        }
        UncertaintyKind::Box => {
            let m = box_index.ok_or_else(|| {
                Error::InvalidParameter("box matrix needs an index M".into())
            })?;
            if m == 0 || m > n {
                return Err(Error::InvalidParameter(format!(
                    "box index {m} outside 1..={n}"
                )));
            }
            b[(0, 0)] = 1.0;
            b[(m, m)] = -1.0;
        }
        UncertaintyKind::Polyhedral | UncertaintyKind::BoxPolyhedral => {
            b[(0, 0)] = if kind == UncertaintyKind::Polyhedral {
                1.0
            } else {
                nf * nf
            };
            for i in 1..dim {
                for j in 1..dim {
                    b[(i, j)] = -1.0;
                }
            }
        }
    }
    Ok(b)
}

/// Which set bounds the intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// The first-named set (box, or ellipsoid for ellipsoid/polyhedron).
    #[serde(rename = "I")]
    One,
    #[serde(rename = "II")]
    Two,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::One => "I",
            Case::Two => "II",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseSelection {
    pub chosen: Case,
    pub effective_radius_sq: f64,
    pub criterion_lhs: f64,
    pub criterion_rhs: f64,
}

/// Case criterion for a combined set. Ties resolve to case I.
///
/// | kind | lhs | rhs | effective radius^2 |
/// |---|---|---|---|
/// | box/ellipsoid | `n d_B^2` | `d_E^2` | `min(lhs, rhs)` |
/// | box/polyhedron | `n d_B` | `d_P` | `min(lhs, rhs)^2` |
/// | ellipsoid/polyhedron | `d_E` | `d_P` | `min(lhs, rhs)^2` |
pub fn select_case(
    kind: UncertaintyKind,
    n: usize,
    delta_b: Option<f64>,
    delta_e: Option<f64>,
    delta_p: Option<f64>,
) -> Result<CaseSelection> {
    let need = |r: Option<f64>, name: &str| -> Result<f64> {
        match r {
            Some(v) if v.is_finite() && v > 0.0 => Ok(v),
            _ => Err(Error::InvalidParameter(format!(
                "{name} must be present and positive"
            ))),
        }
    };
    let nf = n as f64;
    let (lhs, rhs, squared) = match kind {
        UncertaintyKind::BoxEllipsoidal => {
            let b = need(delta_b, "delta_b")?;
            let e = need(delta_e, "delta_e")?;
            (nf * b * b, e * e, false)
        }
        UncertaintyKind::BoxPolyhedral => {
            let b = need(delta_b, "delta_b")?;
            (nf * b, need(delta_p, "delta_p")?, true)
        }
        UncertaintyKind::EllipsoidalPolyhedral => {
            (need(delta_e, "delta_e")?, need(delta_p, "delta_p")?, true)
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "case selection applies to combined sets, not {other}"
            )))
        }
    };
    let chosen = if lhs <= rhs { Case::One } else { Case::Two };
    let m = lhs.min(rhs);
    Ok(CaseSelection {
        chosen,
        effective_radius_sq: if squared { m * m } else { m },
        criterion_lhs: lhs,
        criterion_rhs: rhs,
    })
}

/// Which `B` matrix a system uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetForm {
    Ellipsoidal,
    Box,
    Polyhedral,
    BoxEllipsoidalScaled,
    BoxPolyhedralScaled,
}

/// Where a system came from. `nominal_scale` and `tau_scale` reproduce `A`
/// from the inner products.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemLabel {
    pub kind: UncertaintyKind,
    pub form: SetForm,
    pub case: Option<Case>,
    pub box_index: Option<usize>,
    pub nominal_scale: f64,
    pub tau_scale: f64,
}

impl fmt::Display for SystemLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(c) = self.case {
            write!(f, " case {c}")?;
        }
        if let Some(m) = self.box_index {
            write!(f, " M={m}")?;
        }
        Ok(())
    }
}

/// A pair `(A, B)`; robust feasibility holds if some `lambda >= 0` makes
/// `A - lambda B` positive semidefinite.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilitySystem {
    #[serde(serialize_with = "crate::output::matrix")]
    pub a: DMatrix<f64>,
    #[serde(serialize_with = "crate::output::matrix")]
    pub b: DMatrix<f64>,
    pub label: SystemLabel,
    /// `v'`, so that `a == v' v'^T - offset * e0 e0^T` exactly.
    #[serde(serialize_with = "crate::output::vector")]
    pub scaled_vector: DVector<f64>,
    pub offset: f64,
}

impl FeasibilitySystem {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Rebuilds `A` from the recorded structure.
    pub fn reconstruct_a(&self) -> DMatrix<f64> {
        rank_two(&self.scaled_vector, self.offset)
    }
}

fn system(
    v: &InnerProductVector,
    tau: f64,
    kind: UncertaintyKind,
    form: SetForm,
    case: Option<Case>,
    box_index: Option<usize>,
    scale: f64,
) -> Result<FeasibilitySystem> {
    let n = v.0.len() - 1;
    let b_kind = match form {
        SetForm::Ellipsoidal => UncertaintyKind::Ellipsoidal,
        SetForm::Box => UncertaintyKind::Box,
        SetForm::Polyhedral => UncertaintyKind::Polyhedral,
        SetForm::BoxEllipsoidalScaled => UncertaintyKind::BoxEllipsoidal,
        SetForm::BoxPolyhedralScaled => UncertaintyKind::BoxPolyhedral,
    };
    Ok(FeasibilitySystem {
        a: build_a(v, tau, scale, scale)?,
        b: build_b(b_kind, n, box_index)?,
        label: SystemLabel {
            kind,
            form,
            case,
            box_index,
            nominal_scale: scale,
            tau_scale: scale,
        },
        scaled_vector: scaled_vector(v, scale),
        offset: offset(tau, scale),
    })
}

/// All systems whose certification implies robust feasibility of `x`.
///
/// Box sets produce one system per index `M = 1..=n`; any one certificate
/// suffices because each single-coordinate slab contains the box.
pub fn build_systems(
    x: &Portfolio,
    model: &UncertaintyModel,
    tau: f64,
) -> Result<Vec<FeasibilitySystem>> {
    let v = inner_products(x, model)?;
    let n = model.assets();
    let kind = model.kind;
    let case = model.case.map(|c| c.chosen);
    let one = |form| system(&v, tau, kind, form, case, None, 1.0);
    Ok(match kind {
        UncertaintyKind::Ellipsoidal | UncertaintyKind::EllipsoidalPolyhedral => {
            vec![one(SetForm::Ellipsoidal)?]
        }
        UncertaintyKind::Polyhedral => vec![one(SetForm::Polyhedral)?],
        UncertaintyKind::Box => (1..=n)
            .map(|m| system(&v, tau, kind, SetForm::Box, None, Some(m), 1.0))
            .collect::<Result<_>>()?,
        UncertaintyKind::BoxEllipsoidal => match case {
            Some(Case::One) => vec![system(
                &v,
                tau,
                kind,
                SetForm::BoxEllipsoidalScaled,
                case,
                None,
                (n as f64).sqrt(),
            )?],
            _ => vec![one(SetForm::Ellipsoidal)?],
        },
        UncertaintyKind::BoxPolyhedral => match case {
            Some(Case::One) => vec![system(
                &v,
                tau,
                kind,
                SetForm::BoxPolyhedralScaled,
                case,
                None,
                n as f64,
            )?],
            _ => vec![one(SetForm::Polyhedral)?],
        },
    })
}

/// [`build_systems`] for a full problem instance.
pub fn build_feasibility_systems(
    x: &Portfolio,
    instance: &ProblemInstance,
) -> Result<Vec<FeasibilitySystem>> {
    build_systems(x, &instance.model()?, instance.tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_portfolio, MarketEstimates};
    use crate::uncertainty::{Radii, ShiftConvention, UncertaintySpec};
    use approx::assert_abs_diff_eq;

    fn ipv(v: &[f64]) -> InnerProductVector {
        InnerProductVector(DVector::from_column_slice(v))
    }

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    fn toy_model(kind: UncertaintyKind) -> UncertaintyModel {
        let spec = UncertaintySpec::with_diagonal_shifts(
            kind,
            Radii::unit(),
            DVector::from_vec(vec![0.1, 0.2]),
            &[0.05, 0.05],
        )
        .unwrap();
        UncertaintyModel::new(&spec, ShiftConvention::UnitSet).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let model = toy_model(UncertaintyKind::Ellipsoidal);
        let x = validate_portfolio(&[0.5, 0.5]).unwrap();
        let v = inner_products(&x, &model).unwrap();
        assert_abs_diff_eq!(v.0[0], 0.15, epsilon = 1e-16);
        assert_abs_diff_eq!(v.0[1], 0.025, epsilon = 1e-16);
        assert_abs_diff_eq!(v.0[2], 0.025, epsilon = 1e-16);

        let v = inner_products(&Portfolio::vertex(2, 0), &model).unwrap();
        assert_eq!(v.0.as_slice(), &[0.1, 0.05, 0.0]);

        let three = validate_portfolio(&[0.2, 0.3, 0.5]).unwrap();
        assert!(inner_products(&three, &model).is_err());
    }

    #[test]
    fn zero_shifts_leave_only_nominal() {
        let spec = UncertaintySpec::with_diagonal_shifts(
            UncertaintyKind::Box,
            Radii::unit(),
            DVector::from_vec(vec![0.1, 0.3, 0.2]),
            &[0.0; 3],
        )
        .unwrap();
        let model = UncertaintyModel::new(&spec, ShiftConvention::UnitSet).unwrap();
        let x = validate_portfolio(&[0.25, 0.25, 0.5]).unwrap();
        let v = inner_products(&x, &model).unwrap();
        assert_abs_diff_eq!(v.0[0], 0.2, epsilon = 1e-16);
        assert!(v.shift_part().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn a_matrix_examples() {
        assert_eq!(build_a(&ipv(&[1.0, 0.0]), 1.0, 1.0, 1.0).unwrap(), DMatrix::zeros(2, 2));
        assert_eq!(
            build_a(&ipv(&[2.0, 1.0]), 1.0, 1.0, 1.0).unwrap(),
            mat(&[&[3.0, 2.0], &[2.0, 1.0]])
        );
        let a = build_a(&ipv(&[0.15, 0.025, 0.025]), 0.1, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(a[(0, 0)], 0.0125, epsilon = 1e-16);
        assert_abs_diff_eq!(a[(0, 1)], 0.00375, epsilon = 1e-16);
        assert_abs_diff_eq!(a[(2, 0)], 0.00375, epsilon = 1e-16);
        assert_abs_diff_eq!(a[(1, 1)], 0.000625, epsilon = 1e-17);
        assert_abs_diff_eq!(a[(1, 2)], 0.000625, epsilon = 1e-17);
        assert!(build_a(&ipv(&[1.0, 0.0]), 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn b_matrices_match_references() {
        use UncertaintyKind::*;
        // Independently written references for n = 1, 2, 3.
        let refs: Vec<(UncertaintyKind, usize, Option<usize>, DMatrix<f64>)> = vec![
            (Ellipsoidal, 1, None, mat(&[&[1.0, 0.0], &[0.0, -1.0]])),
            (Ellipsoidal, 2, None, mat(&[&[1., 0., 0.], &[0., -1., 0.], &[0., 0., -1.]])),
            (
                Ellipsoidal,
                3,
                None,
                mat(&[&[1., 0., 0., 0.], &[0., -1., 0., 0.], &[0., 0., -1., 0.], &[0., 0., 0., -1.]]),
            ),
            (Box, 1, Some(1), mat(&[&[1.0, 0.0], &[0.0, -1.0]])),
            (Box, 2, Some(2), mat(&[&[1., 0., 0.], &[0., 0., 0.], &[0., 0., -1.]])),
            (
                Box,
                3,
                Some(2),
                mat(&[&[1., 0., 0., 0.], &[0., 0., 0., 0.], &[0., 0., -1., 0.], &[0., 0., 0., 0.]]),
            ),
            (Polyhedral, 1, None, mat(&[&[1.0, 0.0], &[0.0, -1.0]])),
            (Polyhedral, 2, None, mat(&[&[1., 0., 0.], &[0., -1., -1.], &[0., -1., -1.]])),
            (
                Polyhedral,
                3,
                None,
                mat(&[
                    &[1., 0., 0., 0.],
                    &[0., -1., -1., -1.],
                    &[0., -1., -1., -1.],
                    &[0., -1., -1., -1.],
                ]),
            ),
            (BoxEllipsoidal, 1, None, mat(&[&[1.0, 0.0], &[0.0, -1.0]])),
            (BoxEllipsoidal, 2, None, mat(&[&[2., 0., 0.], &[0., -1., 0.], &[0., 0., -1.]])),
            (
                BoxEllipsoidal,
                3,
                None,
                mat(&[&[3., 0., 0., 0.], &[0., -1., 0., 0.], &[0., 0., -1., 0.], &[0., 0., 0., -1.]]),
            ),
            (BoxPolyhedral, 1, None, mat(&[&[1.0, 0.0], &[0.0, -1.0]])),
            (BoxPolyhedral, 2, None, mat(&[&[4., 0., 0.], &[0., -1., -1.], &[0., -1., -1.]])),
            (
                BoxPolyhedral,
                3,
                None,
                mat(&[
                    &[9., 0., 0., 0.],
                    &[0., -1., -1., -1.],
                    &[0., -1., -1., -1.],
                    &[0., -1., -1., -1.],
                ]),
            ),
            (EllipsoidalPolyhedral, 2, None, mat(&[&[1., 0., 0.], &[0., -1., 0.], &[0., 0., -1.]])),
        ];
        for (kind, n, m, expected) in refs {
            let b = build_b(kind, n, m).unwrap();
            assert_eq!(b, expected, "{kind} n={n} M={m:?}");
            assert_eq!(b, b.transpose());
        }
        assert!(matches!(build_b(Box, 2, None), Err(Error::InvalidParameter(_))));
        assert!(build_b(Box, 2, Some(3)).is_err());
        assert!(build_b(Box, 2, Some(0)).is_err());
    }

    #[test]
    fn case_selection_examples() {
        let c = select_case(UncertaintyKind::BoxEllipsoidal, 4, Some(1.0), Some(1.0), None).unwrap();
        assert_eq!(c.chosen, Case::Two);
        assert_eq!(c.effective_radius_sq, 1.0);

        let c = select_case(UncertaintyKind::BoxPolyhedral, 3, Some(0.1), None, Some(1.0)).unwrap();
        assert_eq!(c.chosen, Case::One);
        assert_abs_diff_eq!(c.criterion_lhs, 0.3, epsilon = 1e-15);

        // Ties go to case I.
        let c = select_case(UncertaintyKind::BoxEllipsoidal, 4, Some(0.5), Some(1.0), None).unwrap();
        assert_eq!(c.chosen, Case::One);

        let c = select_case(UncertaintyKind::EllipsoidalPolyhedral, 3, None, Some(2.0), Some(1.0))
            .unwrap();
        assert_eq!(c.chosen, Case::Two);
        assert_eq!(c.effective_radius_sq, 1.0);

        assert!(select_case(UncertaintyKind::Box, 3, Some(1.0), None, None).is_err());
        assert!(select_case(UncertaintyKind::BoxPolyhedral, 3, Some(1.0), None, None).is_err());
    }

    fn instance(kind: UncertaintyKind, radii: Radii, mu0: &[f64], mags: &[f64], tau: f64) -> ProblemInstance {
        let n = mu0.len();
        let est = MarketEstimates::new(DVector::from_column_slice(mu0), DMatrix::identity(n, n)).unwrap();
        let spec =
            UncertaintySpec::with_diagonal_shifts(kind, radii, DVector::from_column_slice(mu0), mags)
                .unwrap();
        ProblemInstance::new(est, tau, spec, ShiftConvention::UnitSet).unwrap()
    }

    #[test]
    fn ellipsoidal_single_system() {
        let inst = instance(UncertaintyKind::Ellipsoidal, Radii::unit(), &[2.0], &[1.0], 1.0);
        let sys = build_feasibility_systems(&Portfolio::vertex(1, 0), &inst).unwrap();
        assert_eq!(sys.len(), 1);
        assert_eq!(sys[0].a, mat(&[&[3.0, 2.0], &[2.0, 1.0]]));
        assert_eq!(sys[0].b, mat(&[&[1.0, 0.0], &[0.0, -1.0]]));
        assert_eq!(sys[0].reconstruct_a(), sys[0].a);
    }

    #[test]
    fn box_family_has_one_system_per_index() {
        let inst = instance(UncertaintyKind::Box, Radii::unit(), &[0.1, 0.2, 0.3], &[0.01; 3], 0.1);
        let x = Portfolio::uniform(3);
        let sys = build_feasibility_systems(&x, &inst).unwrap();
        let labels: Vec<_> = sys.iter().map(|s| s.label.box_index).collect();
        assert_eq!(labels, vec![Some(1), Some(2), Some(3)]);
        assert_eq!(sys[1].label.to_string(), "box M=2");
    }

    #[test]
    fn combined_cases_reuse_single_forms() {
        let mu0 = [0.1, 0.15, 0.2];
        let mags = [0.02, 0.03, 0.01];
        let x = validate_portfolio(&[0.2, 0.3, 0.5]).unwrap();
        let radii = Radii {
            delta_b: Some(1.0),
            delta_e: Some(0.5),
            delta_p: Some(0.7),
        };
        let ell = build_feasibility_systems(&x, &instance(UncertaintyKind::Ellipsoidal, radii, &mu0, &mags, 0.1)).unwrap();
        let poly = build_feasibility_systems(&x, &instance(UncertaintyKind::Polyhedral, radii, &mu0, &mags, 0.1)).unwrap();
        let be = build_feasibility_systems(&x, &instance(UncertaintyKind::BoxEllipsoidal, radii, &mu0, &mags, 0.1)).unwrap();
        let bp = build_feasibility_systems(&x, &instance(UncertaintyKind::BoxPolyhedral, radii, &mu0, &mags, 0.1)).unwrap();
        let ep = build_feasibility_systems(&x, &instance(UncertaintyKind::EllipsoidalPolyhedral, radii, &mu0, &mags, 0.1)).unwrap();
        assert_eq!(be[0].label.case, Some(Case::Two));
        assert_eq!(bp[0].label.case, Some(Case::Two));
        assert_eq!((&be[0].a, &be[0].b), (&ell[0].a, &ell[0].b));
        assert_eq!((&bp[0].a, &bp[0].b), (&poly[0].a, &poly[0].b));
        assert_eq!((&ep[0].a, &ep[0].b), (&ell[0].a, &ell[0].b));

        let small_box = Radii {
            delta_b: Some(0.1),
            ..radii
        };
        let be1 = build_feasibility_systems(&x, &instance(UncertaintyKind::BoxEllipsoidal, small_box, &mu0, &mags, 0.1)).unwrap();
        assert_eq!(be1[0].label.form, SetForm::BoxEllipsoidalScaled);
        assert_eq!(be1[0].b[(0, 0)], 3.0);
        let s3 = 3f64.sqrt();
        let v0 = 0.2 * 0.1 + 0.3 * 0.15 + 0.5 * 0.2;
        assert_abs_diff_eq!(be1[0].a[(0, 0)], (s3 * v0).powi(2) - 3.0 * 0.01, epsilon = 1e-15);
        assert_eq!(be1[0].reconstruct_a(), be1[0].a);

        let bp1 = build_feasibility_systems(&x, &instance(UncertaintyKind::BoxPolyhedral, small_box, &mu0, &mags, 0.1)).unwrap();
        assert_eq!(bp1[0].label.form, SetForm::BoxPolyhedralScaled);
        assert_eq!(bp1[0].b[(0, 0)], 9.0);
        assert_abs_diff_eq!(bp1[0].a[(0, 1)], 3.0 * v0 * 0.2 * 0.02, epsilon = 1e-16);
    }
}
