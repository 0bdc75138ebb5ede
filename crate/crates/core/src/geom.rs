//! Surface normal estimation and ground/obstacle segmentation.
//!
//! Per-point normals come from the eigenvector with smallest eigenvalue of
//! the neighborhood covariance. The component-wise median of the valid
//! normals stands in for the ground normal; points whose normal is within a
//! cosine-similarity threshold of it are ground, the rest are clustered into
//! obstacles with DBSCAN. Cluster noise is folded back into the ground set.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::dbscan::dbscan;
use crate::error::{Error, Result};
use crate::index::SpatialIndex;
use crate::pointcloud::{Point3, PointCloud};

/// Per-point unit normals parallel to a cloud. `valid[i]` is false where a
/// normal could not be estimated (fewer than 3 neighbors).
#[derive(Debug, Clone)]
pub struct NormalField {
    pub normals: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
}

impl NormalField {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Disjoint ground/obstacle partition of a cloud. `labels[i]` is -1 for
/// ground and the cluster id for obstacle points; `clusters` are ordered by
/// their smallest member index.
#[derive(Debug, Clone)]
pub struct SceneSegmentation {
    pub ground: Vec<usize>,
    pub clusters: Vec<Vec<usize>>,
    pub labels: Vec<i32>,
}

impl SceneSegmentation {
    pub fn obstacle_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn ground_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.ground.len() as f64 / self.labels.len() as f64
    }
}

/// Parameters for `segment_scene`, mirroring the pipeline hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct SegmentationParams {
    /// Neighbor count for normal estimation.
    pub k: usize,
    /// Neighbor search radius in meters.
    pub r: f64,
    /// Cosine similarity threshold for ground membership.
    pub t_cs: f64,
    /// DBSCAN neighborhood radius in meters.
    pub epsilon: f64,
    /// DBSCAN minimum points.
    pub min_pts: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            k: 30,
            r: 0.2,
            t_cs: 0.85,
            epsilon: 0.5,
            min_pts: 5,
        }
    }
}

/// Flip `n` into the canonical sign: z >= 0, falling back to x >= 0 then
/// y >= 0 for normals lying in the horizontal plane.
pub fn canonical_sign(n: Vector3<f64>) -> Vector3<f64> {
    if n.z.abs() >= 1e-9 {
        if n.z < 0.0 {
            -n
        } else {
            n
        }
    } else if n.x.abs() >= 1e-9 {
        if n.x < 0.0 {
            -n
        } else {
            n
        }
    } else if n.y < 0.0 {
        -n
    } else {
        n
    }
}

fn normal_from_neighborhood(points: &[Point3], neighborhood: &[usize]) -> Option<Vector3<f64>> {
    if neighborhood.len() < 3 {
        return None;
    }
    let m = neighborhood.len() as f64;
    let mut centroid = Vector3::zeros();
    for &q in neighborhood {
        centroid += points[q].to_vector();
    }
    centroid /= m;

    let mut cov = Matrix3::zeros();
    for &q in neighborhood {
        let d = points[q].to_vector() - centroid;
        cov += d * d.transpose();
    }
    cov /= m;

    let eig = cov.symmetric_eigen();
    let mut min_i = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
            min_i = i;
        }
    }
    let v: Vector3<f64> = eig.eigenvectors.column(min_i).into_owned();
    let norm = v.norm();
    if !norm.is_finite() || norm < 1e-12 {
        return None;
    }
    Some(canonical_sign(v / norm))
}

/// Estimate per-point surface normals from the k-nearest neighborhood
/// within radius `r`. Points with fewer than 3 neighbors get
/// `valid == false` rather than an error.
pub fn estimate_normals(
    cloud: &PointCloud,
    index: &SpatialIndex,
    k: usize,
    r: f64,
) -> NormalField {
    assert!(k >= 3, "normal estimation needs k >= 3");
    let points = cloud.points();
    let results: Vec<Option<Vector3<f64>>> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let neighborhood = index.neighbors(points[i], k, r);
            normal_from_neighborhood(points, &neighborhood)
        })
        .collect();

    let mut normals = Vec::with_capacity(points.len());
    let mut valid = Vec::with_capacity(points.len());
    for r in results {
        match r {
            Some(n) => {
                normals.push(n);
                valid.push(true);
            }
            None => {
                normals.push(Vector3::zeros());
                valid.push(false);
            }
        }
    }
    NormalField { normals, valid }
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Component-wise median of the valid normals, renormalized to unit length
/// and sign-canonicalized. Errors when no valid normal exists or the median
/// degenerates to (near) zero length.
pub fn median_normal(field: &NormalField) -> Result<Vector3<f64>> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut zs = Vec::new();
    for (n, &ok) in field.normals.iter().zip(&field.valid) {
        if ok {
            xs.push(n.x);
            ys.push(n.y);
            zs.push(n.z);
        }
    }
    if xs.is_empty() {
        return Err(Error::EmptyInput("median_normal: no valid normals"));
    }
    let m = Vector3::new(median(&mut xs), median(&mut ys), median(&mut zs));
    let norm = m.norm();
    if norm < 1e-9 {
        return Err(Error::Degenerate(
            "median normal has near-zero length".into(),
        ));
    }
    Ok(canonical_sign(m / norm))
}

/// Indices of ground points: those whose normal's absolute cosine
/// similarity to `n_med` is at least `t_cs`, plus every point whose normal
/// could not be estimated. Sorted ascending.
pub fn segment_ground(field: &NormalField, n_med: Vector3<f64>, t_cs: f64) -> Vec<usize> {
    assert!(t_cs > 0.0 && t_cs <= 1.0, "T_cs must be in (0, 1]");
    (0..field.len())
        .filter(|&i| !field.valid[i] || field.normals[i].dot(&n_med).abs() >= t_cs)
        .collect()
}

/// Normal field plus segmentation for one scene; what downstream feature
/// extraction consumes.
#[derive(Debug, Clone)]
pub struct SceneAnalysis {
    pub normals: NormalField,
    pub segmentation: SceneSegmentation,
}

/// Run the full segmentation stack and keep the normal field: normals,
/// median ground normal, cosine threshold, DBSCAN on the remainder, noise
/// folded into ground.
pub fn analyze_scene(cloud: &PointCloud, params: &SegmentationParams) -> Result<SceneAnalysis> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("segment_scene: empty cloud"));
    }
    let index = SpatialIndex::build(cloud);
    let normals = estimate_normals(cloud, &index, params.k, params.r);
    let n_med = median_normal(&normals)?;
    let segmentation = segment_with_normals(cloud, &normals, n_med, params)?;
    Ok(SceneAnalysis {
        normals,
        segmentation,
    })
}

/// Segmentation-only wrapper around `analyze_scene`.
pub fn segment_scene(cloud: &PointCloud, params: &SegmentationParams) -> Result<SceneSegmentation> {
    Ok(analyze_scene(cloud, params)?.segmentation)
}

/// Segmentation given precomputed normals; used when the caller also needs
/// the normal field (the usual case).
pub fn segment_with_normals(
    cloud: &PointCloud,
    normals: &NormalField,
    n_med: Vector3<f64>,
    params: &SegmentationParams,
) -> Result<SceneSegmentation> {
    let n = cloud.len();
    let ground_set = segment_ground(normals, n_med, params.t_cs);
    let mut is_ground = vec![false; n];
    for &i in &ground_set {
        is_ground[i] = true;
    }

    let candidates: Vec<usize> = (0..n).filter(|&i| !is_ground[i]).collect();
    let candidate_points: Vec<Point3> = candidates.iter().map(|&i| cloud.point(i)).collect();
    let sub_labels = if candidate_points.is_empty() {
        Vec::new()
    } else {
        dbscan(&candidate_points, params.epsilon, params.min_pts)
    };

    let mut labels = vec![-1i32; n];
    let cluster_count = sub_labels.iter().copied().max().map_or(0, |m| (m + 1) as usize);
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); cluster_count];
    for (slot, &orig) in candidates.iter().enumerate() {
        let l = sub_labels[slot];
        if l < 0 {
            is_ground[orig] = true; // DBSCAN noise becomes ground
        } else {
            labels[orig] = l;
            clusters[l as usize].push(orig);
        }
    }

    let ground: Vec<usize> = (0..n).filter(|&i| is_ground[i]).collect();
    Ok(SceneSegmentation {
        ground,
        clusters,
        labels,
    })
}
