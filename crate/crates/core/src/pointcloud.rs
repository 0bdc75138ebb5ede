//! Point cloud data model.
//!
//! Point indices are stable identifiers: every downstream mask, label, and
//! cluster refers to positions in the cloud's point sequence.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D point in the robot/sensor frame (meters, z up, x forward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }
}

/// An ordered sequence of points with an opaque frame tag.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame_id: impl Into<String>) -> Self {
        Self {
            points,
            frame_id: frame_id.into(),
        }
    }

    pub fn from_points(points: Vec<Point3>) -> Self {
        Self::new(points, "")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn push(&mut self, p: Point3) {
        self.points.push(p);
    }

    /// Mean of all points. Errors on an empty cloud.
    pub fn centroid(&self) -> Result<Point3> {
        if self.points.is_empty() {
            return Err(Error::EmptyInput("centroid of empty cloud"));
        }
        let mut acc = Vector3::zeros();
        for p in &self.points {
            acc += p.to_vector();
        }
        Ok(Point3::from_vector(acc / self.points.len() as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_of_triangle() {
        let cloud = PointCloud::from_points(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(3.0, 0.0, 0.0),
            Point3::new(0.0, 3.0, 0.0),
        ]);
        let c = cloud.centroid().unwrap();
        assert_eq!((c.x, c.y, c.z), (1.0, 1.0, 0.0));
    }

    #[test]
    fn centroid_empty_errors() {
        assert!(PointCloud::default().centroid().is_err());
    }
}
