//! Uncertainty-set geometry for the expected-return vector.
//!
//! Realizations are `mu(zeta) = mu0 + sum_j zeta_j * shift_j` with `zeta`
//! ranging over a norm ball (or an intersection of two). The matrix builder
//! and the worst-case oracle both consume an [`UncertaintyModel`], which fixes
//! the shift convention once so the two sides cannot disagree about what set
//! is being certified.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{select_case, CaseSelection};
use crate::model::MarketEstimates;

/// Shape of the perturbation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyKind {
    Box,
    Ellipsoidal,
    Polyhedral,
    BoxEllipsoidal,
    BoxPolyhedral,
    EllipsoidalPolyhedral,
}

impl UncertaintyKind {
    pub const ALL: [UncertaintyKind; 6] = [
        Self::Box,
        Self::Ellipsoidal,
        Self::Polyhedral,
        Self::BoxEllipsoidal,
        Self::BoxPolyhedral,
        Self::EllipsoidalPolyhedral,
    ];

    pub fn uses_box(self) -> bool {
        matches!(self, Self::Box | Self::BoxEllipsoidal | Self::BoxPolyhedral)
    }

    pub fn uses_ellipsoid(self) -> bool {
        matches!(
            self,
            Self::Ellipsoidal | Self::BoxEllipsoidal | Self::EllipsoidalPolyhedral
        )
    }

    pub fn uses_polyhedron(self) -> bool {
        matches!(
            self,
            Self::Polyhedral | Self::BoxPolyhedral | Self::EllipsoidalPolyhedral
        )
    }

    pub fn is_combined(self) -> bool {
        matches!(
            self,
            Self::BoxEllipsoidal | Self::BoxPolyhedral | Self::EllipsoidalPolyhedral
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Box => "box",
            Self::Ellipsoidal => "ellipsoidal",
            Self::Polyhedral => "polyhedral",
            Self::BoxEllipsoidal => "box-ellipsoidal",
            Self::BoxPolyhedral => "box-polyhedral",
            Self::EllipsoidalPolyhedral => "ellipsoidal-polyhedral",
        }
    }
}

impl fmt::Display for UncertaintyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UncertaintyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        Ok(match key.as_str() {
            "box" | "b" => Self::Box,
            "ellipsoidal" | "ellipsoid" | "e" => Self::Ellipsoidal,
            "polyhedral" | "polyhedron" | "p" => Self::Polyhedral,
            "box-ellipsoidal" | "be" => Self::BoxEllipsoidal,
            "box-polyhedral" | "bp" => Self::BoxPolyhedral,
            "ellipsoidal-polyhedral" | "ep" => Self::EllipsoidalPolyhedral,
            _ => return Err(Error::InvalidParameter(format!("unknown uncertainty kind {s:?}"))),
        })
    }
}

/// Radii of the box, ellipsoidal and polyhedral sets. Only those used by the
/// kind are required.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    pub delta_b: Option<f64>,
    pub delta_e: Option<f64>,
    pub delta_p: Option<f64>,
}

impl Radii {
    pub fn unit() -> Self {
        Self {
            delta_b: Some(1.0),
            delta_e: Some(1.0),
            delta_p: Some(1.0),
        }
    }
}

/// How stored shifts relate to the radii.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftConvention {
    /// Shifts are perturbations over the unit set; radii only pick the case
    /// for combined sets.
    #[default]
    UnitSet,
    /// Each shift is multiplied by the effective radius before use.
    ScaleByRadius,
}

/// Nominal returns, basic shifts and set geometry.
#[derive(Debug, Clone, Serialize)]
pub struct UncertaintySpec {
    pub kind: UncertaintyKind,
    pub radii: Radii,
    #[serde(serialize_with = "crate::output::vector")]
    pub mu0: DVector<f64>,
    #[serde(serialize_with = "crate::output::vectors")]
    pub shifts: Vec<DVector<f64>>,
    pub diagonal_shifts: bool,
}

impl UncertaintySpec {
    /// General shifts, one per asset.
    pub fn new(
        kind: UncertaintyKind,
        radii: Radii,
        mu0: DVector<f64>,
        shifts: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let diagonal_shifts = shifts.iter().enumerate().all(|(j, s)| {
            s.iter()
                .enumerate()
                .all(|(i, v)| i == j || *v == 0.0)
        });
        let spec = Self {
            kind,
            radii,
            mu0,
            shifts,
            diagonal_shifts,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Shift `j` equals `magnitudes[j] * e_j`.
    pub fn with_diagonal_shifts(
        kind: UncertaintyKind,
        radii: Radii,
        mu0: DVector<f64>,
        magnitudes: &[f64],
    ) -> Result<Self> {
        if magnitudes.len() != mu0.len() {
            return Err(Error::DimensionMismatch {
                context: "shift magnitudes",
                expected: mu0.len(),
                found: magnitudes.len(),
            });
        }
        Self::new(kind, radii, mu0, make_diagonal_shifts(magnitudes)?)
    }

    pub fn assets(&self) -> usize {
        self.mu0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mu0.len();
        if n == 0 {
            return Err(Error::Empty("nominal returns"));
        }
        if self.mu0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("nominal returns"));
        }
        if self.shifts.len() != n {
            return Err(Error::DimensionMismatch {
                context: "shift count",
                expected: n,
                found: self.shifts.len(),
            });
        }
        for (j, s) in self.shifts.iter().enumerate() {
            if s.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "shift length",
                    expected: n,
                    found: s.len(),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("shift vector"));
            }
            if self.diagonal_shifts && s.iter().enumerate().any(|(i, v)| i != j && *v != 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "shift {j} has off-diagonal entries but diagonal_shifts is set"
                )));
            }
        }
        let required = [
            (self.kind.uses_box(), self.radii.delta_b, "delta_b"),
            (self.kind.uses_ellipsoid(), self.radii.delta_e, "delta_e"),
            (self.kind.uses_polyhedron(), self.radii.delta_p, "delta_p"),
        ];
        for (needed, value, name) in required {
            if !needed {
                continue;
            }
            match value {
                Some(r) if r.is_finite() && r > 0.0 => {}
                Some(r) => {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must be positive and finite, got {r}"
                    )))
                }
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "{name} is required for {} uncertainty",
                        self.kind
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Shift `j` is `magnitudes[j]` times the unit vector `e_j`.
pub fn make_diagonal_shifts(magnitudes: &[f64]) -> Result<Vec<DVector<f64>>> {
    let n = magnitudes.len();
    magnitudes
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            if !m.is_finite() {
                return Err(Error::NonFinite("shift magnitude"));
            }
            if m < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "shift magnitude {j} is negative ({m})"
                )));
            }
            let mut s = DVector::zeros(n);
            s[j] = m;
            Ok(s)
        })
        .collect()
}

/// Radii of the perturbation set in the coordinates the shifts are stored in.
///
/// For single sets every present radius is 1. For combined sets the radius of
/// the dominating (case-selected) set is 1 and the other is rescaled by the
/// same factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationSet {
    pub box_radius: Option<f64>,
    pub l2_radius: Option<f64>,
    pub l1_radius: Option<f64>,
}

impl PerturbationSet {
    /// True if `zeta` lies in every present ball, up to a relative slack.
    pub fn contains(&self, zeta: &[f64], slack: f64) -> bool {
        let ok = |norm: f64, r: Option<f64>| r.is_none_or(|r| norm <= r * (1.0 + slack) + slack);
        ok(norm_inf(zeta), self.box_radius)
            && ok(norm_2(zeta), self.l2_radius)
            && ok(norm_1(zeta), self.l1_radius)
    }

    /// Largest `s >= 0` with `s * d` in the set (`f64::INFINITY` for `d = 0`).
    pub fn boundary_scale(&self, d: &[f64]) -> f64 {
        let mut s = f64::INFINITY;
        for (norm, r) in [
            (norm_inf(d), self.box_radius),
            (norm_2(d), self.l2_radius),
            (norm_1(d), self.l1_radius),
        ] {
            if let Some(r) = r {
                if norm > 0.0 {
                    s = s.min(r / norm);
                }
            }
        }
        s
    }
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub(crate) fn norm_2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn norm_1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// An [`UncertaintySpec`] resolved under a [`ShiftConvention`].
///
/// `shifts` are the vectors the matrix builder multiplies into `x`, and `set`
/// is the perturbation region the oracle searches, both expressed in the same
/// coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct UncertaintyModel {
    pub kind: UncertaintyKind,
    pub convention: ShiftConvention,
    #[serde(serialize_with = "crate::output::vector")]
    pub mu0: DVector<f64>,
    #[serde(serialize_with = "crate::output::vectors")]
    pub shifts: Vec<DVector<f64>>,
    pub set: PerturbationSet,
    pub effective_radius: f64,
    pub case: Option<CaseSelection>,
}

impl UncertaintyModel {
    pub fn new(spec: &UncertaintySpec, convention: ShiftConvention) -> Result<Self> {
        spec.validate()?;
        let n = spec.assets();
        let r = spec.radii;
        let (effective_radius, case) = match spec.kind {
            UncertaintyKind::Box => (r.delta_b.unwrap_or(1.0), None),
            UncertaintyKind::Ellipsoidal => (r.delta_e.unwrap_or(1.0), None),
            UncertaintyKind::Polyhedral => (r.delta_p.unwrap_or(1.0), None),
            kind => {
                let case = select_case(kind, n, r.delta_b, r.delta_e, r.delta_p)?;
                (case.effective_radius_sq.sqrt(), Some(case))
            }
        };
        let norm = |radius: Option<f64>, used: bool| {
            if !used {
                return None;
            }
            let radius = radius.unwrap_or(1.0);
            Some(if radius == effective_radius {
                1.0
            } else {
                radius / effective_radius
            })
        };
        let set = PerturbationSet {
            box_radius: norm(r.delta_b, spec.kind.uses_box()),
            l2_radius: norm(r.delta_e, spec.kind.uses_ellipsoid()),
            l1_radius: norm(r.delta_p, spec.kind.uses_polyhedron()),
        };
        let shifts = match convention {
            ShiftConvention::UnitSet => spec.shifts.clone(),
            ShiftConvention::ScaleByRadius => {
                spec.shifts.iter().map(|s| s * effective_radius).collect()
            }
        };
        Ok(Self {
            kind: spec.kind,
            convention,
            mu0: spec.mu0.clone(),
            shifts,
            set,
            effective_radius,
            case,
        })
    }

    pub fn assets(&self) -> usize {
        self.mu0.len()
    }

    /// The realization `mu0 + sum_j zeta_j shift_j`.
    pub fn realization(&self, zeta: &[f64]) -> DVector<f64> {
        let mut mu = self.mu0.clone();
        for (z, s) in zeta.iter().zip(&self.shifts) {
            if *z != 0.0 {
                mu.axpy(*z, s, 1.0);
            }
        }
        mu
    }
}

/// Estimates, required return level and uncertainty description.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemInstance {
    pub estimates: MarketEstimates,
    pub tau: f64,
    pub uncertainty: UncertaintySpec,
    pub convention: ShiftConvention,
}

impl ProblemInstance {
    pub fn new(
        estimates: MarketEstimates,
        tau: f64,
        uncertainty: UncertaintySpec,
        convention: ShiftConvention,
    ) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::NonFinite("tau"));
        }
        if estimates.assets() != uncertainty.assets() {
            return Err(Error::DimensionMismatch {
                context: "problem instance",
                expected: estimates.assets(),
                found: uncertainty.assets(),
            });
        }
        uncertainty.validate()?;
        Ok(Self {
            estimates,
            tau,
            uncertainty,
            convention,
        })
    }

    pub fn assets(&self) -> usize {
        self.estimates.assets()
    }

    pub fn model(&self) -> Result<UncertaintyModel> {
        UncertaintyModel::new(&self.uncertainty, self.convention)
    }
}
