//! Shape classes, point clouds and the centroid-distance descriptor.
//!
//! A descriptor is built in three stages: the raw distance of every boundary
//! point from the centroid, a cyclic rotation so the signature starts (and
//! ends) at its maximum, and a resampling to a fixed length `N`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the eight shape classes: regular polygons with 3 to 9 corners, or a circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShapeClass {
    Polygon(u8),
    Circle,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 8] = [
        ShapeClass::Polygon(3),
        ShapeClass::Polygon(4),
        ShapeClass::Polygon(5),
        ShapeClass::Polygon(6),
        ShapeClass::Polygon(7),
        ShapeClass::Polygon(8),
        ShapeClass::Polygon(9),
        ShapeClass::Circle,
    ];

    pub fn polygon(corners: u8) -> Result<Self> {
        if (3..=9).contains(&corners) {
            Ok(ShapeClass::Polygon(corners))
        } else {
            Err(Error::UnknownClass(corners.to_string()))
        }
    }

    /// Number of corners, `None` for the circle.
    pub fn corners(self) -> Option<u8> {
        match self {
            ShapeClass::Polygon(m) => Some(m),
            ShapeClass::Circle => None,
        }
    }

    /// Position in the canonical order 3, 4, ..., 9, circle (0-based).
    pub fn canonical_index(self) -> usize {
        match self {
            ShapeClass::Polygon(m) => m as usize - 3,
            ShapeClass::Circle => 7,
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeClass::Polygon(m) => write!(f, "{m}"),
            ShapeClass::Circle => f.write_str("circle"),
        }
    }
}

impl FromStr for ShapeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "circle" | "inf" | "∞" => Ok(ShapeClass::Circle),
            other => other
                .parse::<u8>()
                .ok()
                .and_then(|m| ShapeClass::polygon(m).ok())
                .ok_or_else(|| Error::UnknownClass(t.to_string())),
        }
    }
}

impl Serialize for ShapeClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ShapeClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered list of the classes taking part in an experiment.
///
/// Positions follow the canonical order (3, 4, ..., 9, circle) restricted to
/// the classes present, so position `l` always maps to the same label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRegistry {
    classes: Vec<ShapeClass>,
}

impl ClassRegistry {
    pub fn new(classes: impl IntoIterator<Item = ShapeClass>) -> Self {
        let mut classes: Vec<_> = classes.into_iter().collect();
        classes.sort();
        classes.dedup();
        ClassRegistry { classes }
    }

    /// All eight classes.
    pub fn standard() -> Self {
        ClassRegistry::new(ShapeClass::ALL)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ShapeClass] {
        &self.classes
    }

    /// Label at 0-based position `pos`.
    pub fn class_at(&self, pos: usize) -> Option<ShapeClass> {
        self.classes.get(pos).copied()
    }

    /// 0-based position of `class`.
    pub fn position(&self, class: ShapeClass) -> Option<usize> {
        self.classes.binary_search(&class).ok()
    }
}

/// Ordered, closed sequence of boundary samples: the first and last points coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 2]>,
    class_label: ShapeClass,
    source_id: String,
}

impl PointCloud {
    pub fn new(
        points: Vec<[f64; 2]>,
        class_label: ShapeClass,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidCloud(format!(
                "need at least 4 points, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        if points[0] != points[points.len() - 1] {
            return Err(Error::InvalidCloud(
                "first and last point must coincide".into(),
            ));
        }
        Ok(PointCloud {
            points,
            class_label,
            source_id: source_id.into(),
        })
    }

    /// Like [`PointCloud::new`], but appends the first point when the cloud is
    /// open. The flag reports whether the closure point was added.
    pub fn closing(
        mut points: Vec<[f64; 2]>,
        class_label: ShapeClass,
        source_id: impl Into<String>,
    ) -> Result<(Self, bool)> {
        let open = match (points.first(), points.last()) {
            (Some(a), Some(b)) => a != b || points.len() == 1,
            _ => false,
        };
        if open {
            points.push(points[0]);
        }
        Ok((PointCloud::new(points, class_label, source_id)?, open))
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn class_label(&self) -> ShapeClass {
        self.class_label
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> PointCloud {
        self.source_id = source_id.into();
        self
    }

    pub fn translated(&self, dx: f64, dy: f64) -> PointCloud {
        self.map_points(|[x, y]| [x + dx, y + dy])
    }

    pub fn scaled(&self, factor: f64) -> PointCloud {
        self.map_points(|[x, y]| [x * factor, y * factor])
    }

    /// Rotation by `angle` radians about the origin.
    pub fn rotated(&self, angle: f64) -> PointCloud {
        let (s, c) = angle.sin_cos();
        self.map_points(|[x, y]| [c * x - s * y, s * x + c * y])
    }

    fn map_points(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> PointCloud {
        PointCloud {
            points: self.points.iter().copied().map(f).collect(),
            class_label: self.class_label,
            source_id: self.source_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Raw,
    Sorted,
    Pruned,
}

/// Centroid distances at one of the three preprocessing stages.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceVector {
    values: Vec<f64>,
    stage: Stage,
}

impl DistanceVector {
    pub fn new(values: Vec<f64>, stage: Stage) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDistanceVector(
                "entries must be finite and non-negative".into(),
            ));
        }
        if values.len() < 2 {
            return Err(Error::InvalidDistanceVector(
                "need at least two entries".into(),
            ));
        }
        if stage != Stage::Pruned && values[0] != values[values.len() - 1] {
            return Err(Error::InvalidDistanceVector(
                "first and last entries must be equal before pruning".into(),
            ));
        }
        if stage == Stage::Sorted && values.iter().any(|&v| v > values[0]) {
            return Err(Error::InvalidDistanceVector(
                "sorted vector must start at its maximum".into(),
            ));
        }
        Ok(DistanceVector { values, stage })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fixed-length pruned distance vector tagged with the class of its cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    pub values: Vec<f64>,
    pub class_label: ShapeClass,
    pub source_id: String,
}

impl DescriptorVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copy divided by the largest entry (left unchanged when that is zero).
    pub fn normalized_scale(&self) -> DescriptorVector {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        let mut out = self.clone();
        if max > 0.0 {
            out.values.iter_mut().for_each(|v| *v /= max);
        }
        out
    }
}

/// Mean of the `n - 1` distinct points; the closing duplicate is left out.
pub fn centroid(cloud: &PointCloud) -> Result<[f64; 2]> {
    let unique = &cloud.points[..cloud.points.len() - 1];
    if unique.iter().all(|p| *p == unique[0]) {
        return Err(Error::DegenerateCloud);
    }
    let m = unique.len() as f64;
    let (sx, sy) = unique
        .iter()
        .fold((0.0, 0.0), |(sx, sy), [x, y]| (sx + x, sy + y));
    Ok([sx / m, sy / m])
}

pub fn distance_vector(cloud: &PointCloud) -> Result<DistanceVector> {
    let [cx, cy] = centroid(cloud)?;
    let values = cloud
        .points
        .iter()
        .map(|[x, y]| (x - cx).hypot(y - cy))
        .collect();
    DistanceVector::new(values, Stage::Raw)
}

/// Rotates the signature so it starts at the first maximal entry `q`:
/// `(d_q, ..., d_{n-1}, d_1, ..., d_q)`.
pub fn sort_distance_vector(d: &DistanceVector) -> Result<DistanceVector> {
    if d.stage != Stage::Raw {
        return Err(Error::InvalidDistanceVector(format!(
            "expected a raw vector, got {:?}",
            d.stage
        )));
    }
    let v = &d.values;
    let n = v.len();
    let q = v
        .iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > v[best] { i } else { best });
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&v[q..n - 1]);
    out.extend_from_slice(&v[..=q]);
    DistanceVector::new(out, Stage::Sorted)
}

/// Resamples a sorted signature at `len` equidistant positions, dropping the
/// wrap-around duplicate.
///
/// Entry `i` (0-based) sits at fractional position `i (n - 1) / len` and is
/// linearly interpolated between its two neighbours.
pub fn prune_distance_vector(d: &DistanceVector, len: usize) -> Result<DistanceVector> {
    if len < 2 {
        return Err(Error::InvalidPruneLength(len));
    }
    if d.stage != Stage::Sorted {
        return Err(Error::InvalidDistanceVector(format!(
            "expected a sorted vector, got {:?}",
            d.stage
        )));
    }
    let v = &d.values;
    let intervals = v.len() - 1;
    let out = (0..len)
        .map(|i| {
            // integer arithmetic keeps integral positions exact
            let num = i * intervals;
            let a = num / len;
            let rem = num % len;
            if rem == 0 {
                v[a]
            } else {
                let w = rem as f64 / len as f64;
                (1.0 - w) * v[a] + w * v[a + 1]
            }
        })
        .collect();
    DistanceVector::new(out, Stage::Pruned)
}

/// Raw distances, rotation to the maximum and resampling to `len` entries.
pub fn describe(cloud: &PointCloud, len: usize) -> Result<DescriptorVector> {
    let raw = distance_vector(cloud)?;
    let sorted = sort_distance_vector(&raw)?;
    let pruned = prune_distance_vector(&sorted, len)?;
    Ok(DescriptorVector {
        values: pruned.values,
        class_label: cloud.class_label,
        source_id: cloud.source_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f64; 2]]) -> PointCloud {
        PointCloud::new(points.to_vec(), ShapeClass::Polygon(4), "t").unwrap()
    }

    fn raw(v: &[f64]) -> DistanceVector {
        DistanceVector::new(v.to_vec(), Stage::Raw).unwrap()
    }

    fn unit_square() -> PointCloud {
        cloud(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]])
    }

    #[test]
    fn class_labels_parse_and_print() {
        for c in ShapeClass::ALL {
            assert_eq!(c.to_string().parse::<ShapeClass>().unwrap(), c);
        }
        assert_eq!("CIRCLE".parse::<ShapeClass>().unwrap(), ShapeClass::Circle);
        assert!("10".parse::<ShapeClass>().is_err());
        assert!("hexagon".parse::<ShapeClass>().is_err());
    }

    #[test]
    fn registry_is_canonically_ordered() {
        let r = ClassRegistry::new([
            ShapeClass::Circle,
            ShapeClass::Polygon(5),
            ShapeClass::Polygon(3),
        ]);
        assert_eq!(r.class_at(0), Some(ShapeClass::Polygon(3)));
        assert_eq!(r.class_at(2), Some(ShapeClass::Circle));
        assert_eq!(r.position(ShapeClass::Polygon(5)), Some(1));
        let std = ClassRegistry::standard();
        for (i, c) in std.classes().iter().enumerate() {
            assert_eq!(c.canonical_index(), i);
            assert_eq!(std.position(*c), Some(i));
        }
    }

    #[test]
    fn cloud_invariants() {
        assert!(PointCloud::new(vec![[0.0, 0.0]; 3], ShapeClass::Circle, "a").is_err());
        let open = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(PointCloud::new(open.clone(), ShapeClass::Circle, "a").is_err());
        let (c, added) = PointCloud::closing(open, ShapeClass::Circle, "a").unwrap();
        assert!(added);
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn square_centroid() {
        assert_eq!(centroid(&unit_square()).unwrap(), [0.5, 0.5]);
        let moved = unit_square().translated(3.0, -2.0);
        let c = centroid(&moved).unwrap();
        assert!((c[0] - 3.5).abs() < 1e-15 && (c[1] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cloud_is_rejected() {
        let c = cloud(&[[1.0, 1.0]; 5]);
        assert!(matches!(centroid(&c), Err(Error::DegenerateCloud)));
        assert!(matches!(describe(&c, 4), Err(Error::DegenerateCloud)));
    }

    #[test]
    fn circle_distances_are_unit() {
        let n = 64;
        let mut pts: Vec<[f64; 2]> = (0..n - 1)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        pts.push(pts[0]);
        let d = distance_vector(&cloud(&pts)).unwrap();
        assert_eq!(d.len(), n);
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let scaled = distance_vector(&cloud(&pts).scaled(2.5)).unwrap();
        for (a, b) in d.values().iter().zip(scaled.values()) {
            assert!((2.5 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sort_example() {
        let s = sort_distance_vector(&raw(&[1.0, 3.0, 2.0, 1.0])).unwrap();
        assert_eq!(s.values(), &[3.0, 2.0, 1.0, 3.0]);
        assert_eq!(s.stage(), Stage::Sorted);
    }

    #[test]
    fn sort_fixed_point_and_constant() {
        let v = [5.0, 1.0, 2.0, 5.0];
        assert_eq!(sort_distance_vector(&raw(&v)).unwrap().values(), &v);
        let c = [2.0; 6];
        assert_eq!(sort_distance_vector(&raw(&c)).unwrap().values(), &c);
    }

    #[test]
    fn sort_breaks_ties_at_smallest_index() {
        let s = sort_distance_vector(&raw(&[1.0, 4.0, 2.0, 4.0, 3.0, 1.0])).unwrap();
        assert_eq!(s.values(), &[4.0, 2.0, 4.0, 3.0, 1.0, 4.0]);
    }

    #[test]
    fn sort_rejects_wrong_stage() {
        let s = sort_distance_vector(&raw(&[1.0, 3.0, 2.0, 1.0])).unwrap();
        assert!(sort_distance_vector(&s).is_err());
    }

    #[test]
    fn prune_interpolates_at_fractional_positions() {
        let s = DistanceVector::new(vec![4.0, 0.0, 4.0], Stage::Sorted).unwrap();
        let p = prune_distance_vector(&s, 4).unwrap();
        assert_eq!(p.values(), &[4.0, 2.0, 0.0, 2.0]);
        assert_eq!(p.stage(), Stage::Pruned);
    }

    #[test]
    fn prune_selects_every_tenth_of_101() {
        let mut v: Vec<f64> = (0..101).map(|i| 1000.0 - i as f64).collect();
        v[100] = v[0];
        let s = DistanceVector::new(v.clone(), Stage::Sorted).unwrap();
        let p = prune_distance_vector(&s, 10).unwrap();
        let expected: Vec<f64> = (0..10).map(|i| v[10 * i]).collect();
        assert_eq!(p.values(), expected.as_slice());
    }

    #[test]
    fn prune_to_n_minus_one_drops_duplicate() {
        let v = vec![9.0, 3.0, 7.0, 1.0, 9.0];
        let s = DistanceVector::new(v.clone(), Stage::Sorted).unwrap();
        assert_eq!(prune_distance_vector(&s, 4).unwrap().values(), &v[..4]);
    }

    #[test]
    fn prune_length_errors_and_upsampling() {
        let s = DistanceVector::new(vec![4.0, 0.0, 4.0], Stage::Sorted).unwrap();
        assert!(matches!(
            prune_distance_vector(&s, 1),
            Err(Error::InvalidPruneLength(1))
        ));
        assert_eq!(prune_distance_vector(&s, 8).unwrap().len(), 8);
        let r = raw(&[4.0, 0.0, 4.0]);
        assert!(prune_distance_vector(&r, 2).is_err());
    }

    #[test]
    fn describe_square_and_normalize() {
        let d = describe(&unit_square(), 4).unwrap();
        let h = 0.5f64.hypot(0.5);
        assert_eq!(d.values, vec![h; 4]);
        assert_eq!(d.class_label, ShapeClass::Polygon(4));
        let n = d.normalized_scale();
        assert!(n.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }
}
