//! Grasp volume: convex hull of hand keypoints and the packing upper bound
//! on how many objects fit inside it.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{self, HandGeometry, HandPose, KinematicsError, Point};

/// Densest packing fraction of congruent spheres (`pi / sqrt(18)`).
pub const SPHERE_PACKING_DENSITY: f64 = 0.740_480_489_693_061;
/// Axis-aligned cubes tile space.
pub const CUBE_PACKING_DENSITY: f64 = 1.0;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate hull input: {0}")]
    DegenerateInput(&'static str),
    #[error("invalid object: {0}")]
    InvalidObject(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone)]
pub struct ConvexHull {
    pub vertices: Vec<Point>,
    /// Outward-oriented triangles indexing `vertices`.
    pub faces: Vec<[usize; 3]>,
}

impl ConvexHull {
    /// Signed distance of `p` to the plane of face `f`; positive outside.
    pub fn face_distance(&self, f: usize, p: &Point) -> f64 {
        let [a, b, c] = self.faces[f].map(|i| self.vertices[i]);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len == 0.0 {
            return 0.0;
        }
        n.dot(&(p - a)) / len
    }

    /// Largest signed distance of `p` over all face planes. Non-positive
    /// means `p` is inside or on the hull.
    pub fn signed_distance(&self, p: &Point) -> f64 {
        (0..self.faces.len())
            .map(|f| self.face_distance(f, p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        self.signed_distance(p) <= tol
    }
}

/// Incremental 3D convex hull.
///
/// Fails with [`GeometryError::DegenerateInput`] for fewer than four points
/// or when all points are (numerically) coplanar.
pub fn convex_hull(points: &[Point]) -> Result<ConvexHull> {
    if points.len() < 4 {
        return Err(GeometryError::DegenerateInput("fewer than 4 points"));
    }
    if points.iter().any(|p| !p.coords.iter().all(|v| v.is_finite())) {
        return Err(GeometryError::DegenerateInput("non-finite point"));
    }

    let extent = bounding_extent(points);
    if extent == 0.0 {
        return Err(GeometryError::DegenerateInput("coincident points"));
    }
    let eps = 1e-10 * extent;

    let seed = initial_simplex(points, eps)?;
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let [i0, i1, i2, i3] = seed;
    let centroid = Point::from(
        (points[i0].coords + points[i1].coords + points[i2].coords + points[i3].coords) / 4.0,
    );
    for tri in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        faces.push(orient_away(points, tri, &centroid));
    }

    let mut normals: Vec<(Vector3<f64>, f64)> =
        faces.iter().map(|f| plane(points, *f)).collect();

    for (idx, p) in points.iter().enumerate() {
        if seed.contains(&idx) {
            continue;
        }
        let visible: Vec<bool> = normals
            .iter()
            .map(|(n, d)| n.dot(&p.coords) - d > eps)
            .collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }

        let mut edges = HashSet::new();
        for (f, tri) in faces.iter().enumerate() {
            if visible[f] {
                for k in 0..3 {
                    edges.insert((tri[k], tri[(k + 1) % 3]));
                }
            }
        }
        let mut horizon: Vec<(usize, usize)> = edges
            .iter()
            .filter(|(a, b)| !edges.contains(&(*b, *a)))
            .copied()
            .collect();
        horizon.sort_unstable();

        let mut kept_faces = Vec::with_capacity(faces.len());
        let mut kept_normals = Vec::with_capacity(faces.len());
        for (f, tri) in faces.iter().enumerate() {
            if !visible[f] {
                kept_faces.push(*tri);
                kept_normals.push(normals[f]);
            }
        }
        for (a, b) in horizon {
            let tri = [a, b, idx];
            kept_faces.push(tri);
            kept_normals.push(plane(points, tri));
        }
        faces = kept_faces;
        normals = kept_normals;
    }

    // compact to the vertices actually used
    let mut remap = vec![usize::MAX; points.len()];
    let mut vertices = Vec::new();
    for tri in &mut faces {
        for v in tri.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = vertices.len();
                vertices.push(points[*v]);
            }
            *v = remap[*v];
        }
    }
    Ok(ConvexHull { vertices, faces })
}

fn bounding_extent(points: &[Point]) -> f64 {
    let mut lo = points[0].coords;
    let mut hi = points[0].coords;
    for p in points {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    (hi - lo).max()
}

/// Unit normal and offset of the plane through `tri` (right-hand order).
fn plane(points: &[Point], tri: [usize; 3]) -> (Vector3<f64>, f64) {
    let [a, b, c] = tri.map(|i| points[i]);
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len == 0.0 {
        // sliver from a point on a horizon edge line; never reported visible
        return (Vector3::zeros(), 0.0);
    }
    let n = n / len;
    (n, n.dot(&a.coords))
}

fn orient_away(points: &[Point], tri: [usize; 3], inside: &Point) -> [usize; 3] {
    let (n, d) = plane(points, tri);
    if n.dot(&inside.coords) - d > 0.0 {
        [tri[0], tri[2], tri[1]]
    } else {
        tri
    }
}

/// Picks four well-spread, affinely independent points.
fn initial_simplex(points: &[Point], eps: f64) -> Result<[usize; 4]> {
    // extreme along x (ties broken by index for determinism)
    let mut i0 = 0;
    for (i, p) in points.iter().enumerate() {
        if p.x < points[i0].x {
            i0 = i;
        }
    }
    let a = points[i0];

    let i1 = argmax(points, |p| (p - a).norm());
    let ab = points[i1] - a;
    if ab.norm() <= eps {
        return Err(GeometryError::DegenerateInput("coincident points"));
    }
    let dir = ab / ab.norm();

    let i2 = argmax(points, |p| {
        let v = p - a;
        (v - dir * v.dot(&dir)).norm()
    });
    let v2 = points[i2] - a;
    if (v2 - dir * v2.dot(&dir)).norm() <= eps {
        return Err(GeometryError::DegenerateInput("collinear points"));
    }
    let n = ab.cross(&v2);
    let n = n / n.norm();

    let i3 = argmax(points, |p| n.dot(&(p - a)).abs());
    if n.dot(&(points[i3] - a)).abs() <= eps {
        return Err(GeometryError::DegenerateInput("coplanar points"));
    }
    Ok([i0, i1, i2, i3])
}

fn argmax(points: &[Point], key: impl Fn(&Point) -> f64) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let v = key(p);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Enclosed volume by signed tetrahedra against the first vertex.
pub fn hull_volume(hull: &ConvexHull) -> f64 {
    let Some(origin) = hull.vertices.first() else {
        return 0.0;
    };
    let six_v: f64 = hull
        .faces
        .iter()
        .map(|tri| {
            let [a, b, c] = tri.map(|i| hull.vertices[i] - origin);
            a.dot(&b.cross(&c))
        })
        .sum();
    (six_v / 6.0).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Sphere,
    Cube,
}

impl std::str::FromStr for ObjectKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sphere" => Ok(ObjectKind::Sphere),
            "cube" => Ok(ObjectKind::Cube),
            other => Err(format!("unknown object kind `{other}`")),
        }
    }
}

impl std::fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ObjectKind::Sphere => "sphere",
            ObjectKind::Cube => "cube",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    /// Radius for spheres, edge length for cubes (metres).
    pub characteristic_size: f64,
    /// kg
    pub unit_mass: f64,
    pub packing_density: f64,
}

impl ObjectSpec {
    /// A 40 mm ping-pong ball.
    pub fn ping_pong_ball() -> Self {
        Self {
            kind: ObjectKind::Sphere,
            characteristic_size: 0.020,
            unit_mass: 0.0027,
            packing_density: SPHERE_PACKING_DENSITY,
        }
    }

    /// A 30 mm foam cube.
    pub fn foam_cube() -> Self {
        Self {
            kind: ObjectKind::Cube,
            characteristic_size: 0.030,
            unit_mass: 0.0020,
            packing_density: CUBE_PACKING_DENSITY,
        }
    }

    pub fn default_for(kind: ObjectKind) -> Self {
        match kind {
            ObjectKind::Sphere => Self::ping_pong_ball(),
            ObjectKind::Cube => Self::foam_cube(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.characteristic_size.is_finite() && self.characteristic_size > 0.0) {
            return Err(GeometryError::InvalidObject(format!(
                "size must be > 0, got {}",
                self.characteristic_size
            )));
        }
        if !(self.unit_mass.is_finite() && self.unit_mass > 0.0) {
            return Err(GeometryError::InvalidObject(format!(
                "mass must be > 0, got {}",
                self.unit_mass
            )));
        }
        if !(self.packing_density > 0.0 && self.packing_density <= 1.0) {
            return Err(GeometryError::InvalidObject(format!(
                "packing density must be in (0, 1], got {}",
                self.packing_density
            )));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        let s = self.characteristic_size;
        match self.kind {
            ObjectKind::Sphere => 4.0 / 3.0 * PI * s.powi(3),
            ObjectKind::Cube => s.powi(3),
        }
    }

    /// Full extent of the object along an axis: diameter or edge.
    pub fn extent(&self) -> f64 {
        match self.kind {
            ObjectKind::Sphere => 2.0 * self.characteristic_size,
            ObjectKind::Cube => self.characteristic_size,
        }
    }

    /// Weight in newtons.
    pub fn weight(&self) -> f64 {
        self.unit_mass * crate::GRAVITY
    }
}

/// `floor(density * volume / object_volume)`. Quotients within 1e-9 of the
/// next integer snap up so that exact tilings are not lost to rounding.
pub fn upper_bound_count(volume: f64, obj: &ObjectSpec) -> u32 {
    if !(volume > 0.0) {
        return 0;
    }
    let q = obj.packing_density * volume / obj.volume();
    (q + 1e-9).floor() as u32
}

/// Hull volume of the hand keypoints for `pose`; zero for a flat hand.
pub fn grasp_volume(pose: &HandPose, geom: &HandGeometry) -> Result<f64> {
    let kp = kinematics::forward_kinematics(pose, geom)?;
    match convex_hull(&kp.points()) {
        Ok(hull) => Ok(hull_volume(&hull)),
        Err(GeometryError::DegenerateInput(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

pub fn grasp_volume_estimate(pose: &HandPose, geom: &HandGeometry, obj: &ObjectSpec) -> Result<u32> {
    Ok(upper_bound_count(grasp_volume(pose, geom)?, obj))
}
