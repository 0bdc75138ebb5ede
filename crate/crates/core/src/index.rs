//! Exact radius-bounded k-nearest-neighbor search.
//!
//! A balanced k-d tree over a snapshot of the cloud coordinates. Queries
//! return exactly the same point set as a brute-force linear scan; results
//! are sorted by ascending distance with ties broken by ascending index so
//! downstream consumers are deterministic.

use crate::pointcloud::{Point3, PointCloud};

/// Immutable k-d tree over a point cloud. Safe to query concurrently.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    /// Point indices arranged as an implicit tree: each node owns a slice,
    /// its splitter is the median element, children are the two halves.
    tree: Vec<u32>,
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        let points = cloud.points().to_vec();
        let mut tree: Vec<u32> = (0..points.len() as u32).collect();
        build_recursive(&points, &mut tree, 0);
        Self { points, tree }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// All point indices within distance `r` of `query`, sorted by
    /// (distance, index).
    pub fn within_radius(&self, query: Point3, r: f64) -> Vec<usize> {
        let mut hits: Vec<(f64, u32)> = Vec::new();
        if !self.tree.is_empty() && r > 0.0 {
            self.search(0, self.tree.len(), 0, query, r * r, &mut hits);
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.into_iter().map(|(_, i)| i as usize).collect()
    }

    /// Same point set as `within_radius` but in tree order; for consumers
    /// that do not care about neighbor ordering.
    pub fn within_radius_unordered(&self, query: Point3, r: f64) -> Vec<usize> {
        let mut hits: Vec<(f64, u32)> = Vec::new();
        if !self.tree.is_empty() && r > 0.0 {
            self.search(0, self.tree.len(), 0, query, r * r, &mut hits);
        }
        hits.into_iter().map(|(_, i)| i as usize).collect()
    }

    /// Up to `k` nearest point indices within distance `r` of `query`,
    /// sorted by (distance, index). May return fewer than `k`.
    pub fn neighbors(&self, query: Point3, k: usize, r: f64) -> Vec<usize> {
        let mut hits = self.within_radius(query, r);
        hits.truncate(k);
        hits
    }

    fn search(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        query: Point3,
        r2: f64,
        hits: &mut Vec<(f64, u32)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.tree[mid];
        let p = self.points[idx as usize];
        let d2 = query.distance_squared(&p);
        if d2 <= r2 {
            hits.push((d2, idx));
        }
        let axis = depth % 3;
        let delta = query.coord(axis) - p.coord(axis);
        let (near_lo, near_hi, far_lo, far_hi) = if delta <= 0.0 {
            (lo, mid, mid + 1, hi)
        } else {
            (mid + 1, hi, lo, mid)
        };
        self.search(near_lo, near_hi, depth + 1, query, r2, hits);
        if delta * delta <= r2 {
            self.search(far_lo, far_hi, depth + 1, query, r2, hits);
        }
    }
}

fn build_recursive(points: &[Point3], slice: &mut [u32], depth: usize) {
    if slice.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = slice.len() / 2;
    // Tie-break by index so the tree layout is deterministic.
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize]
            .coord(axis)
            .total_cmp(&points[b as usize].coord(axis))
            .then(a.cmp(&b))
    });
    let (left, rest) = slice.split_at_mut(mid);
    build_recursive(points, left, depth + 1);
    build_recursive(points, &mut rest[1..], depth + 1);
}

/// Brute-force reference query used by the exactness tests.
#[doc(hidden)]
pub fn brute_force_neighbors(cloud: &PointCloud, query: Point3, k: usize, r: f64) -> Vec<usize> {
    let mut hits: Vec<(f64, usize)> = cloud
        .points()
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let d2 = query.distance_squared(p);
            (r > 0.0 && d2 <= r * r).then_some((d2, i))
        })
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.truncate(k);
    hits.into_iter().map(|(_, i)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_cloud(n: usize, seed: u64, span: f64) -> PointCloud {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        PointCloud::from_points(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.gen_range(-span..span),
                        rng.gen_range(-span..span),
                        rng.gen_range(-span..span),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn empty_cloud_queries_are_empty() {
        let index = SpatialIndex::build(&PointCloud::default());
        assert!(index.within_radius(Point3::new(0.0, 0.0, 0.0), 10.0).is_empty());
        assert!(index.neighbors(Point3::new(0.0, 0.0, 0.0), 5, 10.0).is_empty());
    }

    #[test]
    fn single_point_query_at_point() {
        let cloud = PointCloud::from_points(vec![Point3::new(1.0, 2.0, 3.0)]);
        let index = SpatialIndex::build(&cloud);
        assert_eq!(index.neighbors(Point3::new(1.0, 2.0, 3.0), 1, 0.5), vec![0]);
    }

    #[test]
    fn line_of_points_k_and_radius_bounded() {
        let cloud = PointCloud::from_points(
            (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect(),
        );
        let index = SpatialIndex::build(&cloud);
        let got = index.neighbors(Point3::new(0.0, 0.0, 0.0), 2, 1.5);
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn far_query_returns_empty() {
        let cloud = random_cloud(50, 3, 1.0);
        let index = SpatialIndex::build(&cloud);
        assert!(index.neighbors(Point3::new(100.0, 100.0, 100.0), 5, 0.5).is_empty());
    }

    #[test]
    fn matches_brute_force_on_random_queries() {
        let cloud = random_cloud(500, 7, 2.0);
        let index = SpatialIndex::build(&cloud);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let q = Point3::new(
                rng.gen_range(-2.5..2.5),
                rng.gen_range(-2.5..2.5),
                rng.gen_range(-2.5..2.5),
            );
            let k = rng.gen_range(1..20);
            let r = rng.gen_range(0.05..3.0);
            assert_eq!(
                index.neighbors(q, k, r),
                brute_force_neighbors(&cloud, q, k, r),
                "q={q:?} k={k} r={r}"
            );
        }
    }

    #[test]
    fn radius_queries_match_brute_force_exactly() {
        let cloud = random_cloud(500, 13, 1.5);
        let index = SpatialIndex::build(&cloud);
        for i in (0..cloud.len()).step_by(17) {
            let q = cloud.point(i);
            let got = index.within_radius(q, 0.4);
            let want = brute_force_neighbors(&cloud, q, usize::MAX, 0.4);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn duplicate_points_tie_break_by_index() {
        let p = Point3::new(0.5, 0.5, 0.5);
        let cloud = PointCloud::from_points(vec![p, p, p]);
        let index = SpatialIndex::build(&cloud);
        assert_eq!(index.neighbors(p, 2, 1.0), vec![0, 1]);
    }
}
