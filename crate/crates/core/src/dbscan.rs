//! Density-based clustering with deterministic labeling.
//!
//! Standard DBSCAN semantics: a core point has at least `min_pts` neighbors
//! (itself included) within `epsilon`; clusters are the connected components
//! of core points under epsilon-reachability plus their border points. Noise
//! is labeled -1. Scanning in ascending index order and relabeling by each
//! cluster's smallest member makes the output reproducible; border points
//! reachable from several clusters stay with the first cluster that reached
//! them in that order.

use std::collections::HashMap;

use crate::pointcloud::Point3;

const UNASSIGNED: i32 = -1;

/// Epsilon-cell bucket grid: every neighbor of a point lies in one of the
/// 27 cells around it, so range queries are exact linear scans of a small
/// candidate set.
struct CellGrid<'a> {
    points: &'a [Point3],
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    inv_cell: f64,
    eps2: f64,
}

impl<'a> CellGrid<'a> {
    fn build(points: &'a [Point3], epsilon: f64) -> Self {
        let inv_cell = 1.0 / epsilon;
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(Self::key_of(p, inv_cell))
                .or_default()
                .push(i as u32);
        }
        Self {
            points,
            cells,
            inv_cell,
            eps2: epsilon * epsilon,
        }
    }

    fn key_of(p: &Point3, inv_cell: f64) -> (i64, i64, i64) {
        (
            (p.x * inv_cell).floor() as i64,
            (p.y * inv_cell).floor() as i64,
            (p.z * inv_cell).floor() as i64,
        )
    }

    fn for_each_neighbor(&self, i: usize, mut visit: impl FnMut(usize)) {
        let p = self.points[i];
        let (cx, cy, cz) = Self::key_of(&p, self.inv_cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in bucket {
                            if p.distance_squared(&self.points[j as usize]) <= self.eps2 {
                                visit(j as usize);
                            }
                        }
                    }
                }
            }
        }
    }

    fn neighbor_count(&self, i: usize) -> usize {
        let mut count = 0;
        self.for_each_neighbor(i, |_| count += 1);
        count
    }
}

/// Cluster the given points. Returns one label per input point: -1 for
/// noise, otherwise a cluster id in `0..m`.
pub fn dbscan(points: &[Point3], epsilon: f64, min_pts: usize) -> Vec<i32> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");

    let n = points.len();
    let grid = CellGrid::build(points, epsilon);
    let is_core: Vec<bool> = (0..n).map(|i| grid.neighbor_count(i) >= min_pts).collect();

    let mut labels = vec![UNASSIGNED; n];
    let mut next_cluster = 0;
    let mut queue = std::collections::VecDeque::new();

    for seed in 0..n {
        if !is_core[seed] || labels[seed] != UNASSIGNED {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[seed] = cluster;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            grid.for_each_neighbor(i, |j| {
                if labels[j] == UNASSIGNED {
                    labels[j] = cluster;
                    if is_core[j] {
                        queue.push_back(j);
                    }
                }
            });
        }
    }

    relabel_by_smallest_member(&mut labels, next_cluster as usize);
    labels
}

/// Remap cluster ids so that ordering clusters by their smallest member
/// index yields ids 0..m.
fn relabel_by_smallest_member(labels: &mut [i32], clusters: usize) {
    let mut first_member = vec![usize::MAX; clusters];
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            let c = l as usize;
            if first_member[c] == usize::MAX {
                first_member[c] = i;
            }
        }
    }
    let mut order: Vec<usize> = (0..clusters).collect();
    order.sort_by_key(|&c| first_member[c]);
    let mut remap = vec![0i32; clusters];
    for (new_id, &old_id) in order.iter().enumerate() {
        remap[old_id] = new_id as i32;
    }
    for l in labels.iter_mut() {
        if *l >= 0 {
            *l = remap[*l as usize];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Independent oracle: brute-force epsilon-graph connected components
    /// restricted to core points, with border points attached to the
    /// component, among those reaching them, whose smallest core index is
    /// smallest. Relabeled by smallest member as in the implementation.
    fn dbscan_oracle(points: &[Point3], epsilon: f64, min_pts: usize) -> Vec<i32> {
        let n = points.len();
        let e2 = epsilon * epsilon;
        let near = |i: usize, j: usize| points[i].distance_squared(&points[j]) <= e2;
        let degree = |i: usize| (0..n).filter(|&j| near(i, j)).count();
        let is_core: Vec<bool> = (0..n).map(|i| degree(i) >= min_pts).collect();

        // Union-find over core points.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if is_core[i] && is_core[j] && near(i, j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }

        // Components identified by their smallest core index.
        let mut labels = vec![-1i32; n];
        let mut component_of_core = vec![usize::MAX; n];
        for i in 0..n {
            if is_core[i] {
                component_of_core[i] = find(&mut parent, i);
            }
        }
        for i in 0..n {
            if is_core[i] {
                labels[i] = component_of_core[i] as i32;
            } else {
                // Border point: earliest-seeded component that reaches it.
                let best = (0..n)
                    .filter(|&j| is_core[j] && near(i, j))
                    .map(|j| component_of_core[j])
                    .min();
                if let Some(root) = best {
                    labels[i] = root as i32;
                }
            }
        }

        // Compress component roots to 0..m by smallest member.
        let mut roots: Vec<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
        roots.sort_unstable();
        roots.dedup();
        let mut first = std::collections::HashMap::new();
        for (i, &l) in labels.iter().enumerate() {
            if l >= 0 {
                first.entry(l).or_insert(i);
            }
        }
        let mut order = roots.clone();
        order.sort_by_key(|r| first[r]);
        let remap: std::collections::HashMap<i32, i32> = order
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new as i32))
            .collect();
        labels
            .into_iter()
            .map(|l| if l >= 0 { remap[&l] } else { -1 })
            .collect()
    }

    fn blob(center: (f64, f64, f64), n: usize, spread: f64, rng: &mut ChaCha12Rng) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    center.0 + rng.gen_range(-spread..spread),
                    center.1 + rng.gen_range(-spread..spread),
                    center.2 + rng.gen_range(-spread..spread),
                )
            })
            .collect()
    }

    #[test]
    fn two_distant_blobs_two_clusters_no_noise() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut pts = blob((0.0, 0.0, 0.0), 20, 0.2, &mut rng);
        pts.extend(blob((10.0, 0.0, 0.0), 20, 0.2, &mut rng));
        let labels = dbscan(&pts, 0.5, 5);
        assert!(labels.iter().all(|&l| l >= 0));
        assert_eq!(labels.iter().copied().max().unwrap(), 1);
        assert!(labels[..20].iter().all(|&l| l == labels[0]));
        assert!(labels[20..].iter().all(|&l| l == labels[20]));
        assert_ne!(labels[0], labels[20]);
    }

    #[test]
    fn isolated_points_are_noise() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(0.0, 5.0, 0.0),
        ];
        assert_eq!(dbscan(&pts, 0.5, 5), vec![-1, -1, -1]);
    }

    #[test]
    fn matches_epsilon_graph_oracle_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for trial in 0..40 {
            let n = rng.gen_range(5..=300);
            let pts: Vec<Point3> = (0..n)
                .map(|_| {
                    Point3::new(
                        rng.gen_range(0.0..5.0),
                        rng.gen_range(0.0..5.0),
                        rng.gen_range(0.0..2.0),
                    )
                })
                .collect();
            let epsilon = rng.gen_range(0.1..1.2);
            let min_pts = rng.gen_range(1..=8);
            let got = dbscan(&pts, epsilon, min_pts);
            let want = dbscan_oracle(&pts, epsilon, min_pts);
            assert_eq!(got, want, "trial {trial} n={n} eps={epsilon} min_pts={min_pts}");
        }
    }

    #[test]
    fn labels_are_canonical_by_smallest_member() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let mut pts = blob((8.0, 0.0, 0.0), 10, 0.2, &mut rng);
        pts.extend(blob((0.0, 0.0, 0.0), 10, 0.2, &mut rng));
        let labels = dbscan(&pts, 0.5, 4);
        // The cluster containing point 0 must carry label 0.
        assert_eq!(labels[0], 0);
        assert_eq!(labels[10], 1);
    }
}
