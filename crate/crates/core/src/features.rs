//! Per-obstacle feature extraction.
//!
//! For each obstacle cluster: axis-aligned bounding box and its volume, a
//! quadric-fit shape score (RMS algebraic residual, near zero for clean
//! ellipsoids, growing with edges and corners), the ground patch under the
//! scaled box with its normal summary, and the angle between the obstacle's
//! displacement vector and the patch normal.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{NormalField, SceneSegmentation};
use crate::pointcloud::{Point3, PointCloud};

/// Shape score assigned when the quadric fit is degenerate.
pub const SHAPE_MAX: f64 = 10.0;
/// Floor applied to the shape score wherever it is used as a divisor.
pub const SHAPE_FLOOR: f64 = 1e-3;

/// Axis-aligned bounding box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    /// Component-wise min/max over a point set. Errors on empty input.
    pub fn from_points<'a, I: IntoIterator<Item = &'a Point3>>(points: I) -> Result<Self> {
        let mut iter = points.into_iter();
        let first = iter.next().ok_or(Error::EmptyInput("aabb of empty set"))?;
        let (mut min, mut max) = (*first, *first);
        for p in iter {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            min.z = min.z.min(p.z);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
            max.z = max.z.max(p.z);
        }
        Ok(Self { min, max })
    }

    pub fn dims(&self) -> [f64; 3] {
        [
            self.max.x - self.min.x,
            self.max.y - self.min.y,
            self.max.z - self.min.z,
        ]
    }

    pub fn volume(&self) -> f64 {
        let [dx, dy, dz] = self.dims();
        dx * dy * dz
    }

    pub fn center(&self) -> Point3 {
        Point3::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
            0.5 * (self.min.z + self.max.z),
        )
    }

    /// Scale about the box center: each half-extent multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Aabb {
        let c = self.center();
        let [dx, dy, dz] = self.dims();
        let (hx, hy, hz) = (0.5 * s * dx, 0.5 * s * dy, 0.5 * s * dz);
        Aabb {
            min: Point3::new(c.x - hx, c.y - hy, c.z - hz),
            max: Point3::new(c.x + hx, c.y + hy, c.z + hz),
        }
    }

    pub fn contains_xy(&self, p: &Point3) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Compute the AABB of a point slice.
pub fn compute_aabb(points: &[Point3]) -> Result<Aabb> {
    Aabb::from_points(points.iter())
}

/// Result of the quadric shape fit.
#[derive(Debug, Clone)]
pub struct EllipsoidFit {
    /// General quadric coefficients (a..j) for
    /// a x^2 + b y^2 + c z^2 + d xy + e xz + f yz + g x + h y + i z + j,
    /// in the centered, radius-normalized frame of the fit.
    pub coefficients: [f64; 10],
    /// RMS algebraic residual over the input points.
    pub rms_residual: f64,
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Fit a general quadric to the points by minimizing algebraic distance and
/// return the RMS residual as the shape score.
///
/// Points are centered on their centroid and divided by the mean distance
/// to it, so the score is comparable across obstacle sizes and invariant to
/// rigid motion. The unit-norm gauge is applied in the symmetric-matrix
/// (Frobenius) parametrization of the quadric, which keeps the minimized
/// residual rotation-invariant; the plain coefficient norm would not be.
pub fn fit_ellipsoid(points: &[Point3]) -> Result<EllipsoidFit> {
    let n = points.len();
    if n < 10 {
        return Err(Error::Degenerate(format!(
            "quadric fit needs at least 10 points, got {n}"
        )));
    }

    let mut centroid = Vector3::zeros();
    for p in points {
        centroid += p.to_vector();
    }
    centroid /= n as f64;

    let mean_radius = points
        .iter()
        .map(|p| (p.to_vector() - centroid).norm())
        .sum::<f64>()
        / n as f64;
    if mean_radius < 1e-12 {
        return Err(Error::Degenerate("all points coincide".into()));
    }

    let mut design = DMatrix::zeros(n, 10);
    for (row, p) in points.iter().enumerate() {
        let q = (p.to_vector() - centroid) / mean_radius;
        design[(row, 0)] = q.x * q.x;
        design[(row, 1)] = q.y * q.y;
        design[(row, 2)] = q.z * q.z;
        design[(row, 3)] = SQRT2 * q.x * q.y;
        design[(row, 4)] = SQRT2 * q.x * q.z;
        design[(row, 5)] = SQRT2 * q.y * q.z;
        design[(row, 6)] = q.x;
        design[(row, 7)] = q.y;
        design[(row, 8)] = q.z;
        design[(row, 9)] = 1.0;
    }

    let svd = design.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let (smallest, second) = (order[0], order[1]);
    let sigma_max = svd.singular_values[*order.last().unwrap()];

    // A null space of dimension >= 2 (e.g. coplanar points) means the fit
    // is not identifiable.
    if svd.singular_values[second] <= 1e-9 * sigma_max.max(1.0) {
        return Err(Error::Degenerate(
            "rank-deficient quadric design matrix (coplanar points?)".into(),
        ));
    }

    let w = v_t.row(smallest);
    let rms = svd.singular_values[smallest] / (n as f64).sqrt();

    let coefficients = [
        w[0],
        w[1],
        w[2],
        SQRT2 * w[3],
        SQRT2 * w[4],
        SQRT2 * w[5],
        w[6],
        w[7],
        w[8],
        w[9],
    ];
    Ok(EllipsoidFit {
        coefficients,
        rms_residual: rms,
    })
}

/// Ground patch under an obstacle's scaled bounding box.
#[derive(Debug, Clone)]
pub struct SurfacePatch {
    /// Indices (into the cloud) of the ground points in the patch.
    pub indices: Vec<usize>,
    /// Renormalized mean of the valid patch normals, sign chosen upward.
    pub mean_normal: Vector3<f64>,
}

/// Collect the ground points whose (x, y) lie inside the obstacle's
/// `s`-scaled box footprint and whose z is at least the scaled box bottom,
/// together with their mean normal.
pub fn surface_patch(
    segmentation: &SceneSegmentation,
    cloud: &PointCloud,
    normals: &NormalField,
    obstacle: usize,
    s: f64,
) -> Result<SurfacePatch> {
    let cluster = segmentation
        .clusters
        .get(obstacle)
        .ok_or_else(|| Error::InvalidArgument {
            name: "obstacle",
            msg: format!(
                "index {obstacle} out of range ({} clusters)",
                segmentation.clusters.len()
            ),
        })?;
    let points: Vec<Point3> = cluster.iter().map(|&i| cloud.point(i)).collect();
    let scaled = compute_aabb(&points)?.scaled(s);

    let mut indices = Vec::new();
    let mut normal_sum = Vector3::zeros();
    let mut normal_count = 0usize;
    for &g in &segmentation.ground {
        let p = cloud.point(g);
        if scaled.contains_xy(&p) && p.z >= scaled.min.z {
            indices.push(g);
            if normals.valid[g] {
                normal_sum += normals.normals[g];
                normal_count += 1;
            }
        }
    }
    if indices.is_empty() || normal_count == 0 {
        return Err(Error::EmptyPatch { obstacle });
    }
    let mean = normal_sum / normal_count as f64;
    if mean.norm() < 1e-9 {
        return Err(Error::Degenerate(
            "patch normals cancel to zero mean".into(),
        ));
    }
    let mut mean = mean.normalize();
    if mean.z < 0.0 {
        mean = -mean;
    }
    Ok(SurfacePatch {
        indices,
        mean_normal: mean,
    })
}

/// Angle in [0, pi] between the displacement vector to the obstacle
/// centroid and the surface normal (sign chosen upward).
pub fn compute_theta(centroid: Point3, mean_normal: Vector3<f64>) -> Result<f64> {
    let d = centroid.to_vector();
    if d.norm() < 1e-12 {
        return Err(Error::Degenerate("centroid at the robot origin".into()));
    }
    if mean_normal.norm() < 1e-12 {
        return Err(Error::Degenerate("zero-length surface normal".into()));
    }
    let mut n = mean_normal.normalize();
    if n.z < 0.0 {
        n = -n;
    }
    let cos = (d.normalize().dot(&n)).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

/// Per-obstacle degenerate-case markers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    /// Quadric fit failed; shape score was set to `SHAPE_MAX`.
    pub degenerate_shape: bool,
    /// No usable ground points under the scaled box footprint.
    pub empty_patch: bool,
}

impl FeatureFlags {
    pub fn any(&self) -> bool {
        self.degenerate_shape || self.empty_patch
    }
}

/// Extracted features for one obstacle. `centroid` doubles as the obstacle
/// position feature used by the regressor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObstacleFeatures {
    pub centroid: Point3,
    pub box_dims: [f64; 3],
    pub volume: f64,
    pub shape: f64,
    pub mean_normal: Option<[f64; 3]>,
    pub theta: Option<f64>,
    pub surface_count: usize,
    pub flags: FeatureFlags,
}

/// Extract features for every obstacle cluster in the segmentation.
/// Degenerate shape fits and empty surface patches are flagged per obstacle
/// rather than reported as errors.
pub fn extract_features(
    segmentation: &SceneSegmentation,
    cloud: &PointCloud,
    normals: &NormalField,
    s: f64,
) -> Vec<ObstacleFeatures> {
    (0..segmentation.clusters.len())
        .map(|j| {
            let cluster = &segmentation.clusters[j];
            let points: Vec<Point3> = cluster.iter().map(|&i| cloud.point(i)).collect();
            let aabb = compute_aabb(&points).expect("clusters are non-empty");
            let mut acc = Vector3::zeros();
            for p in &points {
                acc += p.to_vector();
            }
            let centroid = Point3::from_vector(acc / points.len() as f64);

            let mut flags = FeatureFlags::default();
            let shape = match fit_ellipsoid(&points) {
                Ok(fit) => fit.rms_residual,
                Err(_) => {
                    flags.degenerate_shape = true;
                    SHAPE_MAX
                }
            };

            let (mean_normal, theta, surface_count) =
                match surface_patch(segmentation, cloud, normals, j, s) {
                    Ok(patch) => {
                        let theta = compute_theta(centroid, patch.mean_normal).ok();
                        if theta.is_none() {
                            flags.empty_patch = true;
                        }
                        (
                            Some([
                                patch.mean_normal.x,
                                patch.mean_normal.y,
                                patch.mean_normal.z,
                            ]),
                            theta,
                            patch.indices.len(),
                        )
                    }
                    Err(_) => {
                        flags.empty_patch = true;
                        (None, None, 0)
                    }
                };

            ObstacleFeatures {
                centroid,
                box_dims: aabb.dims(),
                volume: aabb.volume(),
                shape,
                mean_normal,
                theta,
                surface_count,
                flags,
            }
        })
        .collect()
}

/// Sample `n` points on an axis-aligned ellipsoid surface (test helper and
/// synthetic-shape building block).
#[doc(hidden)]
pub fn sample_ellipsoid(
    semi_axes: [f64; 3],
    n: usize,
    rng: &mut impl rand::Rng,
) -> Vec<Point3> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: Vector3<f64> = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let norm = v.norm();
        if norm < 1e-9 || norm > 1.0 {
            continue;
        }
        let u = v / norm;
        out.push(Point3::new(
            semi_axes[0] * u.x,
            semi_axes[1] * u.y,
            semi_axes[2] * u.z,
        ));
    }
    out
}
