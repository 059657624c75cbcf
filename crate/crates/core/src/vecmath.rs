//! Unit-sphere vector composition: normalization, cosine similarity, lerp,
//! pairwise slerp and hierarchical slerp.
//!
//! Every function here is pure and allocation-light; all of them reject
//! mismatched dimensions instead of padding or truncating.

use std::ops::Deref;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const EPS_ZERO: f64 = 1e-9;

/// Angles (radians) closer than this to 0 or pi are treated as degenerate.
pub const EPS_ANGLE: f64 = 1e-6;

/// Maximum deviation from unit norm accepted without renormalizing.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// A finite vector with Euclidean norm 1.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Accepts raw components, renormalizing only if the norm is off by more
    /// than [`UNIT_TOLERANCE`]. Vectors already on the sphere keep their bits.
    pub fn from_components(components: Vec<f64>) -> Result<Self> {
        if components.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteVector);
        }
        let n = norm(&components);
        if n <= EPS_ZERO {
            return Err(Error::DegenerateVector { norm: n });
        }
        if (n - 1.0).abs() <= UNIT_TOLERANCE {
            Ok(UnitVector(components))
        } else {
            Ok(UnitVector(components.into_iter().map(|x| x / n).collect()))
        }
    }

    /// The `axis`-th standard basis vector of dimension `dim`.
    ///
    /// # Panics
    /// If `axis >= dim`.
    pub fn basis(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "axis {axis} out of range for dimension {dim}");
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        UnitVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &UnitVector) -> Result<f64> {
        ensure_same_dim(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    pub(crate) fn ensure_dim(&self, expected: usize) -> Result<()> {
        ensure_same_dim(expected, self.dim())
    }
}

impl Deref for UnitVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl Serialize for UnitVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for UnitVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        UnitVector::from_components(raw).map_err(serde::de::Error::custom)
    }
}

impl schemars::JsonSchema for UnitVector {
    fn schema_name() -> std::borrow::Cow<'static, str> {
        "UnitVector".into()
    }

    fn json_schema(generator: &mut schemars::SchemaGenerator) -> schemars::Schema {
        <Vec<f64>>::json_schema(generator)
    }
}

/// A vector paired with its interpolation weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedVector {
    pub vector: UnitVector,
    pub weight: f64,
}

impl WeightedVector {
    pub fn new(vector: UnitVector, weight: f64) -> Self {
        WeightedVector { vector, weight }
    }
}

fn ensure_same_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` onto the unit sphere.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteVector);
    }
    let n = norm(v);
    if n <= EPS_ZERO {
        return Err(Error::DegenerateVector { norm: n });
    }
    Ok(UnitVector(v.iter().map(|x| x / n).collect()))
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    Ok(a.dot(b)?.clamp(-1.0, 1.0))
}

/// Angle between two unit vectors in radians.
pub fn angle(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    Ok(cosine(a, b)?.acos())
}

/// `normalize(sum w_i * v_i)`. Weights may be negative.
pub fn lerp_combine(items: &[WeightedVector]) -> Result<UnitVector> {
    let first = items
        .first()
        .ok_or_else(|| Error::InvalidArgument("lerp_combine needs at least one vector".into()))?;
    let dim = first.vector.dim();
    let mut acc = vec![0.0; dim];
    for item in items {
        item.vector.ensure_dim(dim)?;
        if !item.weight.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite weight {}", item.weight)));
        }
        for (a, x) in acc.iter_mut().zip(item.vector.iter()) {
            *a += item.weight * x;
        }
    }
    normalize(&acc)
}

/// Spherical linear interpolation from `v0` (t = 0) to `v1` (t = 1).
///
/// Below [`EPS_ANGLE`] the pair is merged with normalized lerp, which is the
/// limit of the closed form. Near-antipodal pairs are rejected.
pub fn slerp2(v0: &UnitVector, v1: &UnitVector, t: f64) -> Result<UnitVector> {
    ensure_same_dim(v0.dim(), v1.dim())?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("slerp parameter {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(v0.clone());
    }
    if t == 1.0 {
        return Ok(v1.clone());
    }
    let omega = angle(v0, v1)?;
    if omega > std::f64::consts::PI - EPS_ANGLE {
        return Err(Error::AntipodalVectors { angle: omega });
    }
    let (c0, c1) = if omega < EPS_ANGLE {
        (1.0 - t, t)
    } else {
        let s = omega.sin();
        (((1.0 - t) * omega).sin() / s, (t * omega).sin() / s)
    };
    let mixed: Vec<f64> = v0.iter().zip(v1.iter()).map(|(a, b)| c0 * a + c1 * b).collect();
    normalize(&mixed)
}

/// Merges `n` weighted unit vectors by repeated pairwise slerp.
///
/// Each round pairs neighbours `(0,1), (2,3), ...`, interpolating with
/// `t = w_right / (w_left + w_right)` and giving the merged vector half the
/// pair's weight sum. A trailing odd element is carried to the end of the
/// next round unchanged. The result depends on input order.
pub fn hierarchical_slerp(items: &[WeightedVector]) -> Result<UnitVector> {
    let first = items.first().ok_or_else(|| {
        Error::InvalidArgument("hierarchical_slerp needs at least one vector".into())
    })?;
    let dim = first.vector.dim();
    for (index, item) in items.iter().enumerate() {
        item.vector.ensure_dim(dim)?;
        if !(item.weight.is_finite() && item.weight > 0.0) {
            return Err(Error::NonPositiveWeight { index, weight: item.weight });
        }
    }

    let mut round: Vec<(UnitVector, f64)> =
        items.iter().map(|it| (it.vector.clone(), it.weight)).collect();
    while round.len() > 1 {
        let mut next = Vec::with_capacity(round.len().div_ceil(2));
        let mut pairs = round.chunks_exact(2);
        for pair in pairs.by_ref() {
            let (left, wl) = &pair[0];
            let (right, wr) = &pair[1];
            let sum = wl + wr;
            next.push((slerp2(left, right, wr / sum)?, sum / 2.0));
        }
        if let [last] = pairs.remainder() {
            next.push(last.clone());
        }
        round = next;
    }
    Ok(round.pop().map(|(v, _)| v).expect("non-empty"))
}
