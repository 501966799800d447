//! Directions, the rotation sending `e1` to `l`, boxes and exit predicates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::MAX_DIM;

/// Tolerance on `| |l| - 1 |` for a direction.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Positive-face snap for boxes with non-axis `l`.
pub const FACE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("direction has norm {0}, expected 1")]
    NotUnit(f64),
    #[error("dimension {0} outside 2..={MAX_DIM}")]
    BadDimension(usize),
    #[error("box extents must be positive, got {0}")]
    BadExtent(f64),
    #[error("transverse half-width {ltilde} exceeds 70 L^3 = {limit}")]
    TransverseTooWide { ltilde: f64, limit: f64 },
    #[error("point has {got} coordinates, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Normalize a non-zero vector to unit length.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n.is_finite() && n > 0.0) {
        return Err(GeometryError::NotUnit(n));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn dot_i(x: &[i64], v: &[f64]) -> f64 {
    x.iter().zip(v).map(|(a, b)| *a as f64 * b).sum()
}

/// Orthonormal matrix with first column `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    columns: Vec<Vec<f64>>,
}

impl Rotation {
    /// Householder completion: `R = H_u diag(-1, 1, ..., 1)` with
    /// `u = (e1 + l) / |e1 + l|`, identity for `l = e1`. For `l` close to
    /// `-e1` the fixed matrix `diag(-1, -1, 1, ..., 1)` is used.
    pub fn new(l: &[f64]) -> Result<Self, GeometryError> {
        let d = l.len();
        if !(2..=MAX_DIM).contains(&d) {
            return Err(GeometryError::BadDimension(d));
        }
        let n = l.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GeometryError::NotUnit(n));
        }
        let mut columns = vec![vec![0.0; d]; d];
        if 1.0 + l[0] < 1e-12 {
            for (i, c) in columns.iter_mut().enumerate() {
                c[i] = if i < 2 { -1.0 } else { 1.0 };
            }
        } else {
            let mut u = l.to_vec();
            u[0] += 1.0;
            let un = u.iter().map(|x| x * x).sum::<f64>();
            // H = I - 2 u u^T / |u|^2; column j of R is H e_j, negated for j = 0
            for (j, c) in columns.iter_mut().enumerate() {
                for (i, v) in c.iter_mut().enumerate() {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    let h = delta - 2.0 * u[i] * u[j] / un;
                    *v = if j == 0 { -h } else { h };
                }
            }
            columns[0] = l.to_vec();
        }
        for c in columns.iter_mut() {
            for v in c.iter_mut() {
                let r = v.round();
                if (*v - r).abs() < 1e-14 {
                    *v = r;
                }
            }
        }
        Ok(Rotation { columns })
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// `R(e_{i+1})`.
    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn direction(&self) -> &[f64] {
        &self.columns[0]
    }

    /// True when every column is a signed unit vector.
    pub fn is_axis_aligned(&self) -> bool {
        self.columns
            .iter()
            .all(|c| c.iter().all(|v| *v == 0.0 || v.abs() == 1.0))
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.columns.iter().enumerate() {
            for (j, b) in self.columns.iter().enumerate() {
                let g: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteClass {
    Interior,
    PositiveBoundary,
    OtherBoundary,
    Far,
}

/// `B = R((-L_minus, L_plus) x (-L_tilde, L_tilde)^{d-1}) ∩ Z^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpec {
    rotation: Rotation,
    l_minus: f64,
    l_plus: f64,
    l_tilde: f64,
    snap: f64,
}

/// JSON form: `{"l":[1,0],"Lminus":99,"Lplus":101,"Ltilde":1000}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    pub l: Vec<f64>,
    #[serde(rename = "Lminus")]
    pub l_minus: f64,
    #[serde(rename = "Lplus")]
    pub l_plus: f64,
    #[serde(rename = "Ltilde")]
    pub l_tilde: f64,
}

impl BoxSpec {
    pub fn new(
        rotation: Rotation,
        l_minus: f64,
        l_plus: f64,
        l_tilde: f64,
    ) -> Result<Self, GeometryError> {
        for v in [l_minus, l_plus, l_tilde] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeometryError::BadExtent(v));
            }
        }
        let snap = if rotation.is_axis_aligned() {
            0.0
        } else {
            FACE_SNAP
        };
        Ok(BoxSpec {
            rotation,
            l_minus,
            l_plus,
            l_tilde,
            snap,
        })
    }

    pub fn from_config(c: &BoxConfig) -> Result<Self, GeometryError> {
        Self::new(Rotation::new(&normalize(&c.l)?)?, c.l_minus, c.l_plus, c.l_tilde)
    }

    pub fn to_config(&self) -> BoxConfig {
        BoxConfig {
            l: self.rotation.direction().to_vec(),
            l_minus: self.l_minus,
            l_plus: self.l_plus,
            l_tilde: self.l_tilde,
        }
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn dim(&self) -> usize {
        self.rotation.dim()
    }

    pub fn l_minus(&self) -> f64 {
        self.l_minus
    }

    pub fn l_plus(&self) -> f64 {
        self.l_plus
    }

    pub fn l_tilde(&self) -> f64 {
        self.l_tilde
    }

    /// Whether a non-zero snap tolerance applies.
    pub fn snapped(&self) -> bool {
        self.snap > 0.0
    }

    /// `x . l`.
    #[inline]
    pub fn projection(&self, x: &[i64]) -> f64 {
        dot_i(x, self.rotation.direction())
    }

    /// Positive-face test `x . l >= L_plus`, with the snap toward inclusion.
    #[inline]
    pub fn beyond_positive_face(&self, x: &[i64]) -> bool {
        self.projection(x) >= self.l_plus - self.snap
    }

    #[inline]
    fn transverse_inside(&self, x: &[i64]) -> bool {
        self.rotation.columns[1..]
            .iter()
            .all(|c| dot_i(x, c).abs() < self.l_tilde)
    }

    #[inline]
    pub fn contains(&self, x: &[i64]) -> bool {
        let p = self.projection(x);
        p > -self.l_minus && p < self.l_plus - self.snap && self.transverse_inside(x)
    }

    pub fn classify(&self, x: &[i64]) -> SiteClass {
        if self.contains(x) {
            return SiteClass::Interior;
        }
        let mut y = x.to_vec();
        let mut adjacent = false;
        'outer: for i in 0..x.len() {
            for s in [1, -1] {
                y[i] = x[i] + s;
                let inside = self.contains(&y);
                y[i] = x[i];
                if inside {
                    adjacent = true;
                    break 'outer;
                }
            }
        }
        if !adjacent {
            SiteClass::Far
        } else if self.boundary_is_positive(x) {
            SiteClass::PositiveBoundary
        } else {
            SiteClass::OtherBoundary
        }
    }

    /// Label of a site already known to be on the boundary.
    #[inline]
    pub fn boundary_is_positive(&self, x: &[i64]) -> bool {
        self.beyond_positive_face(x) && self.transverse_inside(x)
    }

    /// Axis-aligned bounding box of the lattice points of `B`, per coordinate.
    pub fn bounding_ranges(&self) -> Vec<(i64, i64)> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                // |x_i| <= sum_j |R_ij| * extent_j
                let mut lo = 0.0;
                let mut hi = 0.0;
                for (j, c) in self.rotation.columns.iter().enumerate() {
                    let r = c[i];
                    let (a, b) = if j == 0 {
                        (-self.l_minus, self.l_plus)
                    } else {
                        (-self.l_tilde, self.l_tilde)
                    };
                    lo += (r * a).min(r * b);
                    hi += (r * a).max(r * b);
                }
                (lo.floor() as i64, hi.ceil() as i64)
            })
            .collect()
    }
}

/// The box `B_{l,L,L~}` with `L_minus = L_plus = L` and `L~ <= 70 L^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyBox {
    pub l: Vec<f64>,
    pub half_length: f64,
    pub l_tilde: f64,
}

impl PolyBox {
    pub fn new(l: Vec<f64>, half_length: f64, l_tilde: f64) -> Result<Self, GeometryError> {
        let limit = 70.0 * half_length.powi(3);
        if l_tilde > limit {
            return Err(GeometryError::TransverseTooWide { ltilde: l_tilde, limit });
        }
        Ok(PolyBox {
            l,
            half_length,
            l_tilde,
        })
    }

    pub fn to_box(&self) -> Result<BoxSpec, GeometryError> {
        BoxSpec::new(
            Rotation::new(&self.l)?,
            self.half_length,
            self.half_length,
            self.l_tilde,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlabExit {
    None,
    Plus,
    Minus,
}

/// Which half-space threshold `x` has reached: `x . l >= b_plus` or
/// `x . l <= -b_minus`.
#[inline]
pub fn slab_exit_test(l: &[f64], b_minus: f64, b_plus: f64, x: &[i64]) -> SlabExit {
    let p = dot_i(x, l);
    if p >= b_plus {
        SlabExit::Plus
    } else if p <= -b_minus {
        SlabExit::Minus
    } else {
        SlabExit::None
    }
}
