//! Synthetic scene and dataset generation.
//!
//! A desk-scale stand-in for field data collection: Perlin-noise terrain
//! with hill and pit patches, a catalog of superellipsoid rocks, resting
//! placement, jittered scene sampling with ground-truth labels, and a
//! quasi-static Coulomb force oracle that produces the labeled force
//! signals used to train the affordance regressor. The whole path is a
//! pure function of its seed.

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::affordance::{FeatureVector, ForceSignal, PushRecord};
use crate::error::{Error, Result};
use crate::features::extract_features;
use crate::geom::{analyze_scene, SegmentationParams};
use crate::pointcloud::{Point3, PointCloud};

pub const GRAVITY: f64 = 9.81;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Stable per-stream seed derivation.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

// ── Perlin noise ────────────────────────────────────────────────────────

fn lattice_gradient(xi: i64, yi: i64, seed: u64) -> (f64, f64) {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ (xi as u64).wrapping_mul(0x9E3779B97F4A7C15));
    h = splitmix64(h ^ (yi as u64).wrapping_mul(0xBF58476D1CE4E5B9));
    let angle = (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    (angle.cos(), angle.sin())
}

fn smootherstep(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Classic 2D gradient noise in [-1, 1], zero at integer lattice points
/// and deterministic per seed.
pub fn perlin2(x: f64, y: f64, seed: u64) -> f64 {
    let xf = x.floor();
    let yf = y.floor();
    let xi = xf as i64;
    let yi = yf as i64;
    let tx = x - xf;
    let ty = y - yf;

    let dot = |gx: i64, gy: i64, dx: f64, dy: f64| {
        let (ax, ay) = lattice_gradient(gx, gy, seed);
        ax * dx + ay * dy
    };
    let d00 = dot(xi, yi, tx, ty);
    let d10 = dot(xi + 1, yi, tx - 1.0, ty);
    let d01 = dot(xi, yi + 1, tx, ty - 1.0);
    let d11 = dot(xi + 1, yi + 1, tx - 1.0, ty - 1.0);

    let u = smootherstep(tx);
    let v = smootherstep(ty);
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let value = lerp(lerp(d00, d10, u), lerp(d01, d11, u), v);
    // Unit gradients bound the raw value by sqrt(2)/2.
    (value * std::f64::consts::SQRT_2).clamp(-1.0, 1.0)
}

// ── Height map ──────────────────────────────────────────────────────────

/// Regular height grid with bilinear interpolation over its full extent.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    heights: Vec<f64>,
    nx: usize,
    ny: usize,
    cell_size: f64,
    origin: (f64, f64),
}

impl HeightMap {
    /// Build by evaluating `f(x, y)` at every grid node.
    pub fn from_fn(
        origin: (f64, f64),
        extent: (f64, f64),
        cell_size: f64,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Self {
        assert!(extent.0 > 0.0 && extent.1 > 0.0 && cell_size > 0.0);
        let nx = (extent.0 / cell_size).round() as usize + 1;
        let ny = (extent.1 / cell_size).round() as usize + 1;
        let mut heights = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let x = origin.0 + ix as f64 * cell_size;
                let y = origin.1 + iy as f64 * cell_size;
                heights.push(f(x, y));
            }
        }
        Self {
            heights,
            nx,
            ny,
            cell_size,
            origin,
        }
    }

    pub fn flat(origin: (f64, f64), extent: (f64, f64), cell_size: f64, height: f64) -> Self {
        Self::from_fn(origin, extent, cell_size, |_, _| height)
    }

    pub fn min_corner(&self) -> (f64, f64) {
        self.origin
    }

    pub fn max_corner(&self) -> (f64, f64) {
        (
            self.origin.0 + (self.nx - 1) as f64 * self.cell_size,
            self.origin.1 + (self.ny - 1) as f64 * self.cell_size,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let max = self.max_corner();
        x >= self.origin.0 && x <= max.0 && y >= self.origin.1 && y <= max.1
    }

    pub fn grid_lines_x(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nx).map(move |i| self.origin.0 + i as f64 * self.cell_size)
    }

    pub fn grid_lines_y(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.ny).map(move |i| self.origin.1 + i as f64 * self.cell_size)
    }

    fn node(&self, ix: usize, iy: usize) -> f64 {
        self.heights[iy * self.nx + ix]
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let gx = ((x - self.origin.0) / self.cell_size).clamp(0.0, (self.nx - 1) as f64);
        let gy = ((y - self.origin.1) / self.cell_size).clamp(0.0, (self.ny - 1) as f64);
        let ix = (gx.floor() as usize).min(self.nx - 2);
        let iy = (gy.floor() as usize).min(self.ny - 2);
        (ix, iy, gx - ix as f64, gy - iy as f64)
    }

    /// Bilinear interpolation; coordinates are clamped to the extent.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let (ix, iy, fx, fy) = self.cell_of(x, y);
        let h00 = self.node(ix, iy);
        let h10 = self.node(ix + 1, iy);
        let h01 = self.node(ix, iy + 1);
        let h11 = self.node(ix + 1, iy + 1);
        h00 * (1.0 - fx) * (1.0 - fy) + h10 * fx * (1.0 - fy) + h01 * (1.0 - fx) * fy
            + h11 * fx * fy
    }

    /// Analytic gradient of the bilinear interpolant at (x, y).
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (ix, iy, fx, fy) = self.cell_of(x, y);
        let h00 = self.node(ix, iy);
        let h10 = self.node(ix + 1, iy);
        let h01 = self.node(ix, iy + 1);
        let h11 = self.node(ix + 1, iy + 1);
        let dx = ((h10 - h00) * (1.0 - fy) + (h11 - h01) * fy) / self.cell_size;
        let dy = ((h01 - h00) * (1.0 - fx) + (h11 - h10) * fx) / self.cell_size;
        (dx, dy)
    }

    pub fn min_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_height(&self) -> f64 {
        self.heights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Raise or lower the whole map.
    pub fn offset(&self, dz: f64) -> Self {
        let mut out = self.clone();
        for h in out.heights.iter_mut() {
            *h += dz;
        }
        out
    }
}

/// Terrain construction parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TerrainParams {
    pub origin: (f64, f64),
    pub extent: (f64, f64),
    pub cell_size: f64,
    /// Peak height of each hill/pit patch in meters.
    pub amplitude: f64,
    /// Gaussian window sigma of each patch in meters.
    pub sigma: f64,
    /// Perlin noise frequency in cycles per meter.
    pub noise_frequency: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            origin: (-1.5, -4.0),
            extent: (9.0, 8.0),
            cell_size: 0.1,
            amplitude: 0.5,
            sigma: 2.0,
            noise_frequency: 0.5,
        }
    }
}

/// Flat base plus two additive (hill) and two subtractive (pit)
/// Gaussian-windowed Perlin patches at seeded-random positions.
pub fn make_terrain(params: &TerrainParams, seed: u64) -> HeightMap {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 0xA11CE));
    let signs = [1.0, 1.0, -1.0, -1.0];
    let patches: Vec<(f64, f64, f64, u64)> = signs
        .iter()
        .map(|&sign| {
            let cx = params.origin.0 + rng.gen_range(0.0..params.extent.0);
            let cy = params.origin.1 + rng.gen_range(0.0..params.extent.1);
            let noise_seed: u64 = rng.gen();
            (cx, cy, sign, noise_seed)
        })
        .collect();

    let two_sigma2 = 2.0 * params.sigma * params.sigma;
    HeightMap::from_fn(params.origin, params.extent, params.cell_size, |x, y| {
        patches
            .iter()
            .map(|&(cx, cy, sign, noise_seed)| {
                let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                let window = (-d2 / two_sigma2).exp();
                let noise = perlin2(
                    x * params.noise_frequency,
                    y * params.noise_frequency,
                    noise_seed,
                );
                sign * params.amplitude * window * 0.5 * (1.0 + noise)
            })
            .sum()
    })
}

// ── Rocks ───────────────────────────────────────────────────────────────

/// Catalog entry: a unit base shape scaled per axis, with its mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RockSpec {
    pub name: String,
    pub scale: [f64; 3],
    pub mass: f64,
}

/// The six-boulder catalog used by the experiments.
pub fn rock_catalog() -> Vec<RockSpec> {
    let entries: [(&str, [f64; 3], f64); 6] = [
        ("Boulder 0", [1.0, 1.0, 1.0], 37.75),
        ("Boulder 1", [0.6, 0.6, 0.6], 8.85),
        ("Boulder 2", [0.5, 0.5, 0.5], 5.12),
        ("Boulder 3", [0.3, 0.3, 0.4], 1.20),
        ("Boulder 4", [0.25, 0.25, 0.4], 0.78),
        ("Boulder 5", [0.2, 0.2, 0.4], 0.5),
    ];
    entries
        .iter()
        .map(|(name, scale, mass)| RockSpec {
            name: name.to_string(),
            scale: *scale,
            mass: *mass,
        })
        .collect()
}

/// Rock surface points with outward unit normals (world frame).
#[derive(Debug, Clone)]
pub struct RockCloud {
    pub points: Vec<Point3>,
    pub normals: Vec<Vector3<f64>>,
}

impl RockCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| Point3::from_vector(p.to_vector() + offset))
                .collect(),
            normals: self.normals.clone(),
        }
    }
}

/// Superellipsoid radius along direction `u` for semi-axes `s`:
/// the surface is sum |x_i / s_i|^p = 1.
fn superellipsoid_radius(u: Vector3<f64>, s: [f64; 3], p: f64) -> f64 {
    let sum = (u.x / s[0]).abs().powf(p) + (u.y / s[1]).abs().powf(p) + (u.z / s[2]).abs().powf(p);
    sum.powf(-1.0 / p)
}

fn superellipsoid_normal(q: Vector3<f64>, s: [f64; 3], p: f64) -> Vector3<f64> {
    let g = Vector3::new(
        (q.x / s[0]).abs().powf(p - 1.0) * q.x.signum() / s[0],
        (q.y / s[1]).abs().powf(p - 1.0) * q.y.signum() / s[1],
        (q.z / s[2]).abs().powf(p - 1.0) * q.z.signum() / s[2],
    );
    let n = g.norm();
    if n < 1e-12 {
        Vector3::z()
    } else {
        g / n
    }
}

/// Sample a rock surface uniformly by area.
///
/// The unit base shape is a superellipsoid (exponent 2 gives an ellipsoid,
/// larger exponents give blockier rocks) with semi-axes 0.5, scaled per
/// axis by the spec. A latitude/longitude mesh of the scaled surface gives
/// triangle areas; the point count is `round(total_area * density)` and
/// points are drawn per triangle proportionally to area, projected back to
/// the exact surface radially. Rotation is applied after sampling, so the
/// point count is rotation-invariant.
pub fn make_rock(
    spec: &RockSpec,
    exponent: f64,
    rotation: &Rotation3<f64>,
    surface_density: f64,
    rng: &mut ChaCha12Rng,
) -> RockCloud {
    assert!(surface_density > 0.0, "surface density must be positive");
    assert!(exponent >= 1.0, "superellipsoid exponent must be >= 1");
    let semi = [
        0.5 * spec.scale[0],
        0.5 * spec.scale[1],
        0.5 * spec.scale[2],
    ];

    // Lat/long mesh over directions, mapped radially onto the surface.
    const RINGS: usize = 48;
    const SLICES: usize = 96;
    let vertex = |i: usize, j: usize| -> Vector3<f64> {
        let theta = std::f64::consts::PI * i as f64 / RINGS as f64;
        let phi = std::f64::consts::TAU * (j % SLICES) as f64 / SLICES as f64;
        let u = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        let u = if u.norm() < 1e-12 {
            Vector3::z() * theta.cos().signum()
        } else {
            u.normalize()
        };
        u * superellipsoid_radius(u, semi, exponent)
    };

    let mut triangles: Vec<([Vector3<f64>; 3], f64)> = Vec::with_capacity(2 * RINGS * SLICES);
    let mut total_area = 0.0;
    for i in 0..RINGS {
        for j in 0..SLICES {
            let a = vertex(i, j);
            let b = vertex(i + 1, j);
            let c = vertex(i + 1, j + 1);
            let d = vertex(i, j + 1);
            for tri in [[a, b, c], [a, c, d]] {
                let area = 0.5 * (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm();
                if area > 1e-15 {
                    total_area += area;
                    triangles.push((tri, total_area));
                }
            }
        }
    }

    let count = (total_area * surface_density).round().max(1.0) as usize;
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = rng.gen_range(0.0..total_area);
        let idx = triangles.partition_point(|(_, cum)| *cum < pick);
        let (tri, _) = &triangles[idx.min(triangles.len() - 1)];
        let mut r1: f64 = rng.gen();
        let mut r2: f64 = rng.gen();
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        let chord = tri[0] + (tri[1] - tri[0]) * r1 + (tri[2] - tri[0]) * r2;
        // Project radially back onto the exact surface.
        let dir = chord.normalize();
        let q = dir * superellipsoid_radius(dir, semi, exponent);
        points.push(Point3::from_vector(rotation * q));
        normals.push(rotation * superellipsoid_normal(q, semi, exponent));
    }
    RockCloud { points, normals }
}

/// Lower a rock onto the terrain at (x, y): the cloud is shifted so its
/// footprint center lands on (x, y) and its minimum z touches the highest
/// bilinear terrain height under the footprint. Returns the placed cloud
/// and that contact height.
pub fn place_rock(terrain: &HeightMap, rock: &RockCloud, x: f64, y: f64) -> Result<(RockCloud, f64)> {
    if !terrain.contains(x, y) {
        return Err(Error::OutOfExtent { x, y });
    }
    if rock.is_empty() {
        return Err(Error::EmptyInput("rock cloud"));
    }
    let aabb = crate::features::compute_aabb(&rock.points)?;
    let center = aabb.center();
    let dx = x - center.x;
    let dy = y - center.y;
    let (fx0, fx1) = (aabb.min.x + dx, aabb.max.x + dx);
    let (fy0, fy1) = (aabb.min.y + dy, aabb.max.y + dy);

    // The bilinear max over a rectangle is attained at a corner of some
    // cell/footprint intersection: check grid nodes inside the footprint,
    // the footprint corners, and footprint-edge crossings of grid lines.
    let mut contact = f64::NEG_INFINITY;
    let mut consider = |px: f64, py: f64| {
        let h = terrain.height_at(px, py);
        if h > contact {
            contact = h;
        }
    };
    for corner_x in [fx0, fx1] {
        for corner_y in [fy0, fy1] {
            consider(corner_x, corner_y);
        }
    }
    let xs: Vec<f64> = terrain
        .grid_lines_x()
        .filter(|&gx| gx >= fx0 && gx <= fx1)
        .collect();
    let ys: Vec<f64> = terrain
        .grid_lines_y()
        .filter(|&gy| gy >= fy0 && gy <= fy1)
        .collect();
    for &gx in &xs {
        consider(gx, fy0);
        consider(gx, fy1);
        for &gy in &ys {
            consider(gx, gy);
        }
    }
    for &gy in &ys {
        consider(fx0, gy);
        consider(fx1, gy);
    }

    let dz = contact - aabb.min.z;
    Ok((
        rock.translated(Vector3::new(dx, dy, dz)),
        contact,
    ))
}

/// Scene sampling parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingParams {
    /// Terrain points per square meter.
    pub ground_density: f64,
    /// Rock surface points per square meter.
    pub rock_density: f64,
    /// Rock points whose outward normal z falls below this are dropped
    /// (self-occluded undersides a surface sensor cannot see).
    pub min_normal_z: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            ground_density: 150.0,
            rock_density: 800.0,
            min_normal_z: -0.85,
        }
    }
}

/// Sample the terrain on a jittered grid and append the visible points of
/// each placed rock. Returns the cloud plus ground-truth labels (-1 for
/// ground, rock index otherwise).
pub fn sample_scene(
    terrain: &HeightMap,
    rocks: &[RockCloud],
    params: &SamplingParams,
    rng: &mut ChaCha12Rng,
) -> (PointCloud, Vec<i32>) {
    let spacing = 1.0 / params.ground_density.sqrt();
    let min = terrain.min_corner();
    let max = terrain.max_corner();
    let nx = ((max.0 - min.0) / spacing).floor() as usize;
    let ny = ((max.1 - min.1) / spacing).floor() as usize;

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let x = min.0 + (ix as f64 + 0.5 + rng.gen_range(-0.45..0.45)) * spacing;
            let y = min.1 + (iy as f64 + 0.5 + rng.gen_range(-0.45..0.45)) * spacing;
            points.push(Point3::new(x, y, terrain.height_at(x, y)));
            labels.push(-1);
        }
    }
    for (j, rock) in rocks.iter().enumerate() {
        for (p, n) in rock.points.iter().zip(&rock.normals) {
            if n.z >= params.min_normal_z {
                points.push(*p);
                labels.push(j as i32);
            }
        }
    }
    (PointCloud::from_points(points), labels)
}

// ── Force oracle ────────────────────────────────────────────────────────

/// Quasi-static force oracle parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleParams {
    /// Static friction coefficient.
    pub mu_s: f64,
    /// Saturation force of the arm sensor, Newtons.
    pub arm_limit: f64,
    /// Number of samples per force signal.
    pub signal_len: usize,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            mu_s: 0.5,
            arm_limit: 50.0,
            signal_len: 100,
        }
    }
}

/// Peak force needed to start a quasi-static push of `mass` up a slope of
/// `phi` radians (measured along the push direction) under Coulomb
/// friction, floored at 0.1 N.
pub fn required_force(mass: f64, phi: f64, mu_s: f64) -> f64 {
    (mass * GRAVITY * (mu_s * phi.cos() + phi.sin())).max(0.1)
}

/// Synthesize the push force signal. Movable obstacles produce a ramp to
/// the static-friction peak followed by an exponential decay toward the
/// moving-friction plateau (0.6 peak); obstacles beyond the arm limit
/// saturate there. The signal's max norm is exactly min(required, limit).
pub fn force_oracle(
    mass: f64,
    phi: f64,
    mu_s: f64,
    arm_limit: f64,
    t: usize,
) -> Result<ForceSignal> {
    if mass <= 0.0 {
        return Err(Error::InvalidArgument {
            name: "mass",
            msg: format!("{mass} must be positive"),
        });
    }
    if phi.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::InvalidArgument {
            name: "phi",
            msg: format!("{phi} rad not in (-pi/2, pi/2)"),
        });
    }
    if mu_s < 0.0 {
        return Err(Error::InvalidArgument {
            name: "mu_s",
            msg: format!("{mu_s} must be non-negative"),
        });
    }
    if arm_limit <= 0.0 || t < 2 {
        return Err(Error::InvalidArgument {
            name: "arm_limit/t",
            msg: "need a positive limit and at least 2 samples".into(),
        });
    }

    let f_req = required_force(mass, phi, mu_s);
    let peak = f_req.min(arm_limit);
    let n_ramp = ((0.3 * t as f64).round() as usize).clamp(1, t - 1);
    let mut samples = Vec::with_capacity(t);
    for i in 0..t {
        let value = if i < n_ramp {
            peak * (i + 1) as f64 / n_ramp as f64
        } else if f_req <= arm_limit {
            let progress = (i + 1 - n_ramp) as f64 / (t - n_ramp) as f64;
            peak * (0.6 + 0.4 * (-6.0 * progress).exp())
        } else {
            arm_limit
        };
        samples.push([value, 0.0, 0.0]);
    }
    Ok(ForceSignal { samples })
}

// ── Dataset generation ──────────────────────────────────────────────────

/// Everything the generator needs beyond the segmentation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthParams {
    pub terrain: TerrainParams,
    pub sampling: SamplingParams,
    /// Superellipsoid blockiness of generated rocks (2 = ellipsoid).
    pub rock_exponent: f64,
    /// Rock placement window, robot at the origin facing +x.
    pub placement_x: (f64, f64),
    pub placement_y: (f64, f64),
    /// Scene samples taken per experiment.
    pub frames_per_experiment: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            terrain: TerrainParams::default(),
            sampling: SamplingParams::default(),
            rock_exponent: 2.5,
            placement_x: (2.0, 4.5),
            placement_y: (-2.5, 2.5),
            frames_per_experiment: 10,
        }
    }
}

/// One generated experiment: its scene (first frame), ground truth, and
/// oracle label.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run: usize,
    pub rock: RockSpec,
    pub placement: (f64, f64),
    /// Terrain slope along the push direction at the placement, radians.
    pub slope: f64,
    pub f_max: f64,
    pub scene: PointCloud,
    pub truth_labels: Vec<i32>,
}

/// Generator result: per-run scenes plus the flattened record set.
#[derive(Debug, Clone)]
pub struct GenOutput {
    pub runs: Vec<RunOutput>,
    pub records: Vec<PushRecord>,
}

/// Run `n` experiments: rock from the catalog (round-robin), random
/// rotation and placement on a fresh Perlin terrain, oracle force label
/// from the slope along the push direction, and per-frame features
/// extracted through the real segmentation pipeline. All frames of a run
/// share the run's label.
pub fn gen_dataset(
    synth: &SynthParams,
    seg_params: &SegmentationParams,
    box_scale: f64,
    oracle: &OracleParams,
    n_experiments: usize,
    seed: u64,
) -> Result<GenOutput> {
    if n_experiments == 0 {
        return Err(Error::InvalidArgument {
            name: "n_experiments",
            msg: "need at least one experiment".into(),
        });
    }
    let catalog = rock_catalog();
    let mut runs = Vec::with_capacity(n_experiments);
    let mut records = Vec::with_capacity(n_experiments * synth.frames_per_experiment);

    for e in 0..n_experiments {
        let run_seed = derive_seed(seed, e as u64);
        let mut rng = ChaCha12Rng::seed_from_u64(run_seed);
        let terrain = make_terrain(&synth.terrain, rng.gen());
        let spec = &catalog[e % catalog.len()];
        let rotation = Rotation3::from_euler_angles(
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.0..std::f64::consts::TAU),
        );
        let rock = make_rock(
            spec,
            synth.rock_exponent,
            &rotation,
            synth.sampling.rock_density,
            &mut rng,
        );
        let x = rng.gen_range(synth.placement_x.0..synth.placement_x.1);
        let y = rng.gen_range(synth.placement_y.0..synth.placement_y.1);
        let (placed, _contact) = place_rock(&terrain, &rock, x, y)?;

        let (gx, gy) = terrain.gradient(x, y);
        let push_len = (x * x + y * y).sqrt();
        let (dir_x, dir_y) = if push_len > 1e-9 {
            (x / push_len, y / push_len)
        } else {
            (1.0, 0.0)
        };
        let slope = (gx * dir_x + gy * dir_y).atan();
        let signal = force_oracle(spec.mass, slope, oracle.mu_s, oracle.arm_limit, oracle.signal_len)?;
        let f_max = signal.fmax()?;

        for frame in 0..synth.frames_per_experiment {
            let (cloud, truth) = sample_scene(&terrain, &[placed.clone()], &synth.sampling, &mut rng);
            let analysis = analyze_scene(&cloud, seg_params)?;
            let seg = &analysis.segmentation;

            // The cluster that recovered the rock: maximum overlap with the
            // ground-truth rock points.
            let mut best = None;
            for (c, cluster) in seg.clusters.iter().enumerate() {
                let overlap = cluster.iter().filter(|&&i| truth[i] == 0).count();
                if overlap > 0 && best.map_or(true, |(_, b)| overlap > b) {
                    best = Some((c, overlap));
                }
            }
            let (chosen, _) = best.ok_or_else(|| {
                Error::Degenerate(format!("run {e} frame {frame}: segmentation lost the rock"))
            })?;

            let features = extract_features(seg, &cloud, &analysis.normals, box_scale);
            let fv = FeatureVector::from_obstacle(&features[chosen]).ok_or_else(|| {
                Error::Degenerate(format!("run {e} frame {frame}: degenerate rock features"))
            })?;

            let mut record = PushRecord::new(fv, f_max);
            record.rock = Some(spec.name.clone());
            record.slope = Some(slope);
            record.run = Some(e);
            record.frame = Some(frame);
            records.push(record);

            if frame == 0 {
                runs.push(RunOutput {
                    run: e,
                    rock: spec.clone(),
                    placement: (x, y),
                    slope,
                    f_max,
                    scene: cloud,
                    truth_labels: truth,
                });
            }
        }
    }
    Ok(GenOutput { runs, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn perlin_zero_at_lattice_and_deterministic() {
        for (x, y) in [(0.0, 0.0), (3.0, -7.0), (100.0, 41.0)] {
            assert_relative_eq!(perlin2(x, y, 9), 0.0);
        }
        assert_eq!(perlin2(0.37, 4.81, 5), perlin2(0.37, 4.81, 5));
        assert_ne!(perlin2(0.37, 4.81, 5), perlin2(0.37, 4.81, 6));
    }

    #[test]
    fn perlin_bounded_over_many_samples() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let v = perlin2(
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
                42,
            );
            assert!((-1.0..=1.0).contains(&v), "value {v}");
        }
    }

    #[test]
    fn terrain_flat_when_amplitude_zero() {
        let params = TerrainParams {
            amplitude: 0.0,
            ..TerrainParams::default()
        };
        let map = make_terrain(&params, 3);
        assert_eq!(map.min_height(), 0.0);
        assert_eq!(map.max_height(), 0.0);
    }

    #[test]
    fn terrain_deterministic_and_has_hills_and_pits() {
        let params = TerrainParams::default();
        let a = make_terrain(&params, 7);
        let b = make_terrain(&params, 7);
        assert_eq!(a, b);
        assert!(a.max_height() > 0.0, "max {}", a.max_height());
        assert!(a.min_height() < 0.0, "min {}", a.min_height());
    }

    #[test]
    fn heightmap_bilinear_and_gradient() {
        // h = 2x + 3y is reproduced exactly by bilinear interpolation.
        let map = HeightMap::from_fn((0.0, 0.0), (2.0, 2.0), 0.5, |x, y| 2.0 * x + 3.0 * y);
        assert_relative_eq!(map.height_at(0.77, 1.13), 2.0 * 0.77 + 3.0 * 1.13, epsilon = 1e-12);
        let (gx, gy) = map.gradient(0.77, 1.13);
        assert_relative_eq!(gx, 2.0, epsilon = 1e-12);
        assert_relative_eq!(gy, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rock_volume_ordering_biggest_vs_smallest() {
        let catalog = rock_catalog();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let rot = Rotation3::identity();
        let b0 = make_rock(&catalog[0], 2.5, &rot, 800.0, &mut rng);
        let b5 = make_rock(&catalog[5], 2.5, &rot, 800.0, &mut rng);
        let v0 = crate::features::compute_aabb(&b0.points).unwrap().volume();
        let v5 = crate::features::compute_aabb(&b5.points).unwrap().volume();
        assert!(v0 > v5, "v0={v0} v5={v5}");
    }

    #[test]
    fn rock_extent_matches_analytic_shape() {
        let catalog = rock_catalog();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let rock = make_rock(&catalog[0], 2.5, &Rotation3::identity(), 2000.0, &mut rng);
        let aabb = crate::features::compute_aabb(&rock.points).unwrap();
        for d in aabb.dims() {
            assert!((d - 1.0).abs() < 0.1, "extent {d}");
        }
    }

    #[test]
    fn rock_point_count_is_rotation_invariant() {
        let catalog = rock_catalog();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let r1 = Rotation3::from_euler_angles(0.3, 1.2, -0.5);
        let r2 = Rotation3::from_euler_angles(-2.0, 0.1, 2.8);
        let a = make_rock(&catalog[3], 2.5, &r1, 800.0, &mut rng);
        let b = make_rock(&catalog[3], 2.5, &r2, 800.0, &mut rng);
        assert_eq!(a.len(), b.len());
    }

    #[test]
    fn rock_normals_point_outward() {
        let catalog = rock_catalog();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let rock = make_rock(&catalog[2], 2.5, &Rotation3::identity(), 500.0, &mut rng);
        for (p, n) in rock.points.iter().zip(&rock.normals) {
            assert!(p.to_vector().dot(n) > 0.0, "inward normal at {p:?}");
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn placement_touches_flat_terrain() {
        let terrain = HeightMap::flat((-2.0, -2.0), (4.0, 4.0), 0.1, 0.0);
        let catalog = rock_catalog();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let rock = make_rock(&catalog[3], 2.5, &Rotation3::identity(), 500.0, &mut rng);
        let (placed, contact) = place_rock(&terrain, &rock, 0.5, -0.5).unwrap();
        let min_z = placed
            .points
            .iter()
            .map(|p| p.z)
            .fold(f64::INFINITY, f64::min);
        assert!(min_z.abs() < 1e-9, "min z {min_z}");
        assert_relative_eq!(contact, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn placement_is_translation_equivariant_in_height() {
        let terrain = HeightMap::flat((-2.0, -2.0), (4.0, 4.0), 0.1, 0.0);
        let raised = terrain.offset(1.0);
        let catalog = rock_catalog();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let rock = make_rock(&catalog[4], 2.5, &Rotation3::identity(), 500.0, &mut rng);
        let (_, c0) = place_rock(&terrain, &rock, 0.0, 0.0).unwrap();
        let (_, c1) = place_rock(&raised, &rock, 0.0, 0.0).unwrap();
        assert_relative_eq!(c1 - c0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn placement_on_crest_uses_footprint_maximum() {
        // A ridge along y: height peaks at x = 0.
        let terrain = HeightMap::from_fn((-2.0, -2.0), (4.0, 4.0), 0.1, |x, _| {
            0.5 * (1.0 - (x / 2.0).abs())
        });
        let catalog = rock_catalog();
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let rock = make_rock(&catalog[3], 2.5, &Rotation3::identity(), 500.0, &mut rng);
        let (_, contact) = place_rock(&terrain, &rock, 0.0, 0.0).unwrap();
        assert_relative_eq!(contact, 0.5, epsilon = 1e-9);

        assert!(place_rock(&terrain, &rock, 10.0, 0.0).is_err());
    }

    #[test]
    fn scene_labels_match_constituents() {
        let terrain = HeightMap::flat((-2.0, -2.0), (4.0, 4.0), 0.1, 0.0);
        let params = SamplingParams::default();
        let mut rng = ChaCha12Rng::seed_from_u64(11);

        let (cloud, labels) = sample_scene(&terrain, &[], &params, &mut rng);
        assert!(labels.iter().all(|&l| l == -1));
        assert_eq!(cloud.len(), labels.len());

        let catalog = rock_catalog();
        let rock = make_rock(&catalog[2], 2.5, &Rotation3::identity(), 800.0, &mut rng);
        let (placed, _) = place_rock(&terrain, &rock, 0.0, 0.0).unwrap();
        let visible = placed
            .normals
            .iter()
            .filter(|n| n.z >= params.min_normal_z)
            .count();
        let (_, labels) = sample_scene(&terrain, &[placed], &params, &mut rng);
        let rock_count = labels.iter().filter(|&&l| l == 0).count();
        assert_eq!(rock_count, visible);
    }

    #[test]
    fn oracle_hand_values() {
        // Boulder 5 flat: 0.5 kg * 9.81 * 0.5.
        let sig = force_oracle(0.5, 0.0, 0.5, 50.0, 100).unwrap();
        assert_relative_eq!(sig.fmax().unwrap(), 0.5 * GRAVITY * 0.5, epsilon = 1e-9);
        assert!(sig.fmax().unwrap() <= 20.0);

        // Boulder 0 flat saturates the arm.
        let sig = force_oracle(37.75, 0.0, 0.5, 50.0, 100).unwrap();
        let req = 37.75 * GRAVITY * 0.5;
        assert!(req > 180.0 && req < 190.0, "req {req}");
        assert_relative_eq!(sig.fmax().unwrap(), 50.0, epsilon = 1e-9);
        // Saturated signals hold the limit after the ramp.
        assert_relative_eq!(sig.samples[99][0], 50.0);

        // Downhill requires less than flat.
        let flat = required_force(1.20, 0.0, 0.5);
        let downhill = required_force(1.20, -8.0f64.to_radians(), 0.5);
        assert!(downhill < flat, "downhill {downhill} flat {flat}");
    }

    #[test]
    fn oracle_monotone_in_mass_and_slope() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..200 {
            let mass = rng.gen_range(0.1..40.0);
            let phi = rng.gen_range(-0.4..0.4);
            let mu = rng.gen_range(0.1..1.0);
            let base = required_force(mass, phi, mu);
            assert!(required_force(mass * 1.1, phi, mu) >= base);
            assert!(required_force(mass, phi + 0.05, mu) >= base);
            let sig = force_oracle(mass, phi, mu, 50.0, 60).unwrap();
            assert_relative_eq!(
                sig.fmax().unwrap(),
                base.min(50.0),
                epsilon = 1e-6
            );
        }
    }

    #[test]
    fn oracle_rejects_bad_inputs() {
        assert!(force_oracle(0.0, 0.0, 0.5, 50.0, 100).is_err());
        assert!(force_oracle(1.0, 1.6, 0.5, 50.0, 100).is_err());
        assert!(force_oracle(1.0, 0.0, -0.1, 50.0, 100).is_err());
        assert!(force_oracle(1.0, 0.0, 0.5, 50.0, 1).is_err());
    }

    fn small_synth() -> SynthParams {
        SynthParams {
            terrain: TerrainParams {
                origin: (-1.0, -2.5),
                extent: (5.5, 5.0),
                ..TerrainParams::default()
            },
            sampling: SamplingParams {
                ground_density: 100.0,
                rock_density: 700.0,
                min_normal_z: -0.85,
            },
            frames_per_experiment: 2,
            placement_x: (1.8, 3.2),
            placement_y: (-1.2, 1.2),
            rock_exponent: 2.5,
        }
    }

    #[test]
    fn gen_dataset_counts_labels_and_determinism() {
        let synth = small_synth();
        let seg = SegmentationParams::default();
        let oracle = OracleParams::default();
        let out = gen_dataset(&synth, &seg, 1.5, &oracle, 4, 99).unwrap();
        assert_eq!(out.runs.len(), 4);
        assert_eq!(out.records.len(), 8);

        // Every frame of a run carries the run's oracle label.
        for record in &out.records {
            let run = record.run.unwrap();
            assert_eq!(record.f_max, out.runs[run].f_max);
        }

        let out2 = gen_dataset(&synth, &seg, 1.5, &oracle, 4, 99).unwrap();
        let json1: Vec<String> = out
            .records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        let json2: Vec<String> = out2
            .records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        assert_eq!(json1, json2);

        assert!(gen_dataset(&synth, &seg, 1.5, &oracle, 0, 99).is_err());
    }
}
