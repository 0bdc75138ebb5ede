//! Push-affordance learning: Bayesian linear regression over obstacle
//! features predicting the peak push-force magnitude.
//!
//! The weight posterior is Gaussian and updated in closed form, so feeding
//! records one at a time gives exactly the same posterior as the batch fit
//! (for fixed precisions). Predictions are full Gaussians; the pushability
//! decision compares the predictive mean against the robot's force limit.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ObstacleFeatures;

/// 3-axis force time series in Newtons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSignal {
    pub samples: Vec<[f64; 3]>,
}

impl ForceSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Maximum Euclidean norm over the samples.
    pub fn fmax(&self) -> Result<f64> {
        if self.samples.is_empty() {
            return Err(Error::EmptyInput("fmax of empty signal"));
        }
        Ok(self
            .samples
            .iter()
            .map(|s| (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt())
            .fold(0.0, f64::max))
    }
}

/// Names of the regression features, in vector order.
pub const FEATURE_NAMES: [&str; 12] = [
    "pos_x", "pos_y", "pos_z", "box_x", "box_y", "box_z", "volume", "shape", "normal_x",
    "normal_y", "normal_z", "theta",
];

/// Dependency group of each feature, parallel to `FEATURE_NAMES`.
pub const FEATURE_GROUPS: [&str; 12] = [
    "position", "position", "position", "box", "box", "box", "volume", "shape", "normal",
    "normal", "normal", "theta",
];

pub const FEATURE_DIM: usize = 12;

/// One regression input: obstacle position, box dims, volume, shape score,
/// mean surface normal, and displacement/normal angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub pos_x: f64,
    pub pos_y: f64,
    pub pos_z: f64,
    pub box_x: f64,
    pub box_y: f64,
    pub box_z: f64,
    pub volume: f64,
    pub shape: f64,
    pub normal_x: f64,
    pub normal_y: f64,
    pub normal_z: f64,
    pub theta: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; FEATURE_DIM] {
        [
            self.pos_x,
            self.pos_y,
            self.pos_z,
            self.box_x,
            self.box_y,
            self.box_z,
            self.volume,
            self.shape,
            self.normal_x,
            self.normal_y,
            self.normal_z,
            self.theta,
        ]
    }

    pub fn from_array(a: [f64; FEATURE_DIM]) -> Self {
        Self {
            pos_x: a[0],
            pos_y: a[1],
            pos_z: a[2],
            box_x: a[3],
            box_y: a[4],
            box_z: a[5],
            volume: a[6],
            shape: a[7],
            normal_x: a[8],
            normal_y: a[9],
            normal_z: a[10],
            theta: a[11],
        }
    }

    /// Build from extracted obstacle features. Returns `None` when the
    /// obstacle is flagged (no usable normal/theta).
    pub fn from_obstacle(f: &ObstacleFeatures) -> Option<Self> {
        if f.flags.any() {
            return None;
        }
        let n = f.mean_normal?;
        let theta = f.theta?;
        Some(Self {
            pos_x: f.centroid.x,
            pos_y: f.centroid.y,
            pos_z: f.centroid.z,
            box_x: f.box_dims[0],
            box_y: f.box_dims[1],
            box_z: f.box_dims[2],
            volume: f.volume,
            shape: f.shape,
            normal_x: n[0],
            normal_y: n[1],
            normal_z: n[2],
            theta,
        })
    }
}

/// One training example: features plus the peak force label, with optional
/// provenance fields carried through from the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushRecord {
    pub features: FeatureVector,
    pub f_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rock: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
}

impl PushRecord {
    pub fn new(features: FeatureVector, f_max: f64) -> Self {
        Self {
            features,
            f_max,
            rock: None,
            slope: None,
            run: None,
            frame: None,
        }
    }
}

/// Seeded shuffle-and-split. Test side takes ceil(n * fraction) records.
pub fn split_dataset(
    records: &[PushRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<PushRecord>, Vec<PushRecord>)> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::InvalidArgument {
            name: "test_fraction",
            msg: format!("{test_fraction} not in (0, 1)"),
        });
    }
    if records.len() < 2 {
        return Err(Error::InvalidArgument {
            name: "records",
            msg: format!("need at least 2 records, got {}", records.len()),
        });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    // Guard against float products landing one ulp above an integer.
    let n_test = ((records.len() as f64 * test_fraction) - 1e-9).ceil() as usize;
    let n_test = n_test.clamp(1, records.len() - 1);
    let test = order[..n_test].iter().map(|&i| records[i].clone()).collect();
    let train = order[n_test..].iter().map(|&i| records[i].clone()).collect();
    Ok((train, test))
}

/// Per-feature affine normalization fit on training data only.
/// Zero-variance features map to 0 and are flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl Standardizer {
    pub fn fit(rows: &[[f64; FEATURE_DIM]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("standardizer fit on empty data"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; FEATURE_DIM];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; FEATURE_DIM];
        for row in rows {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(row) {
                let d = x - m;
                *v += d * d;
            }
        }
        let mut std = Vec::with_capacity(FEATURE_DIM);
        let mut degenerate = Vec::with_capacity(FEATURE_DIM);
        for v in var {
            let s = (v / n).sqrt();
            if s < 1e-12 {
                std.push(1.0);
                degenerate.push(true);
            } else {
                std.push(s);
                degenerate.push(false);
            }
        }
        Ok(Self {
            mean,
            std,
            degenerate,
        })
    }

    pub fn transform(&self, row: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            out[i] = if self.degenerate[i] {
                0.0
            } else {
                (row[i] - self.mean[i]) / self.std[i]
            };
        }
        out
    }

    pub fn inverse(&self, row: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            out[i] = if self.degenerate[i] {
                self.mean[i]
            } else {
                row[i] * self.std[i] + self.mean[i]
            };
        }
        out
    }
}

const PRECISION_FLOOR: f64 = 1e-12;
const PRECISION_CAP: f64 = 1e12;

/// Gaussian weight posterior with fixed prior and noise precisions.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorModel {
    /// Posterior mean over weights (bias first).
    pub weight_mean: DVector<f64>,
    /// Posterior covariance over weights.
    pub weight_cov: DMatrix<f64>,
    /// Prior precision lambda.
    pub lambda: f64,
    /// Noise precision alpha.
    pub alpha: f64,
}

impl PosteriorModel {
    /// Zero-observation posterior: mean 0, covariance I / lambda.
    pub fn prior(dim: usize, lambda: f64, alpha: f64) -> Self {
        Self {
            weight_mean: DVector::zeros(dim),
            weight_cov: DMatrix::identity(dim, dim) / lambda,
            lambda,
            alpha,
        }
    }

    /// Closed-form batch fit on a design matrix (columns as given; callers
    /// add the bias column). With `alpha` supplied the precisions are fixed;
    /// otherwise both precisions are estimated by the evidence fixed point.
    pub fn fit_design(
        design: &DMatrix<f64>,
        targets: &DVector<f64>,
        lambda: f64,
        alpha: Option<f64>,
    ) -> Result<Self> {
        let n = design.nrows();
        if n == 0 || n != targets.len() {
            return Err(Error::InvalidArgument {
                name: "design",
                msg: format!("{n} rows vs {} targets", targets.len()),
            });
        }
        let xtx = design.transpose() * design;
        let xty = design.transpose() * targets;

        let (lambda, alpha) = match alpha {
            Some(a) => (lambda, a),
            None => evidence_fixed_point(design, targets, &xtx, &xty, lambda)?,
        };

        let dim = design.ncols();
        let precision = DMatrix::identity(dim, dim) * lambda + &xtx * alpha;
        let chol = precision
            .cholesky()
            .ok_or_else(|| Error::Degenerate("singular posterior precision".into()))?;
        let weight_cov = chol.inverse();
        let weight_mean = &weight_cov * &xty * alpha;
        Ok(Self {
            weight_mean,
            weight_cov,
            lambda,
            alpha,
        })
    }

    /// Exact conjugate update with one observation (recursive least squares
    /// in covariance form).
    pub fn update(&mut self, x: &DVector<f64>, y: f64) {
        let s = &self.weight_cov * x;
        let denom = 1.0 / self.alpha + x.dot(&s);
        let gain = &s / denom;
        let innovation = y - self.weight_mean.dot(x);
        self.weight_mean += &gain * innovation;
        self.weight_cov -= &gain * s.transpose();
        // Keep the covariance numerically symmetric.
        let sym = (&self.weight_cov + self.weight_cov.transpose()) * 0.5;
        self.weight_cov = sym;
    }

    /// Predictive mean and variance at a design row.
    pub fn predict(&self, x: &DVector<f64>) -> (f64, f64) {
        let mean = self.weight_mean.dot(x);
        let var = 1.0 / self.alpha + x.dot(&(&self.weight_cov * x));
        (mean, var.max(1.0 / self.alpha))
    }
}

/// MacKay evidence-maximization fixed point over (alpha, lambda).
fn evidence_fixed_point(
    design: &DMatrix<f64>,
    targets: &DVector<f64>,
    xtx: &DMatrix<f64>,
    xty: &DVector<f64>,
    lambda_init: f64,
) -> Result<(f64, f64)> {
    let n = design.nrows() as f64;
    let dim = design.ncols();
    let eigenvalues = xtx.clone().symmetric_eigen().eigenvalues;

    let y_mean = targets.sum() / n;
    let y_var = targets.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n;
    let mut alpha = if y_var > 1e-12 { 1.0 / y_var } else { 1.0 };
    let mut lambda = lambda_init;

    for _ in 0..300 {
        let precision = DMatrix::identity(dim, dim) * lambda + xtx * alpha;
        let chol = precision
            .cholesky()
            .ok_or_else(|| Error::Degenerate("singular precision during evidence iteration".into()))?;
        let mean = chol.solve(&(xty * alpha));

        let gamma: f64 = eigenvalues
            .iter()
            .map(|&e| {
                let ae = alpha * e.max(0.0);
                ae / (lambda + ae)
            })
            .sum();
        let mu2 = mean.norm_squared();
        let resid = (targets - design * &mean).norm_squared();

        let new_lambda = if mu2 > 1e-12 { gamma / mu2 } else { lambda };
        let new_alpha = if resid > 1e-12 {
            (n - gamma).max(1e-9) / resid
        } else {
            PRECISION_CAP
        };
        let new_lambda = new_lambda.clamp(PRECISION_FLOOR, PRECISION_CAP);
        let new_alpha = new_alpha.clamp(PRECISION_FLOOR, PRECISION_CAP);

        let converged = ((new_lambda - lambda) / lambda).abs() < 1e-6
            && ((new_alpha - alpha) / alpha).abs() < 1e-6;
        lambda = new_lambda;
        alpha = new_alpha;
        if converged {
            break;
        }
    }
    Ok((lambda, alpha))
}

/// Predictive distribution summary for one obstacle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Prediction {
    /// Predictive mean of the peak force, Newtons.
    pub mean: f64,
    /// Predictive variance, Newtons^2.
    pub variance: f64,
    /// Probability that the peak force stays within the robot's limit.
    pub p_pushable: f64,
}

/// Push decision derived from the predictive mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PushDecision {
    Pushable,
    NotPushable,
}

/// Pushable iff the predictive mean stays within the force limit.
pub fn decide(prediction: &Prediction, delta_maxforce: f64) -> PushDecision {
    if prediction.mean <= delta_maxforce {
        PushDecision::Pushable
    } else {
        PushDecision::NotPushable
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standardizer + posterior bundle, the unit that is trained, saved, and
/// queried.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub standardizer: Standardizer,
    pub posterior: PosteriorModel,
    pub feature_names: Vec<String>,
}

impl TrainedModel {
    /// Fit on training records. `alpha = None` selects evidence
    /// maximization for both precisions.
    pub fn fit(records: &[PushRecord], lambda: f64, alpha: Option<f64>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        let rows: Vec<[f64; FEATURE_DIM]> =
            records.iter().map(|r| r.features.as_array()).collect();
        let standardizer = Standardizer::fit(&rows)?;

        let mut design = DMatrix::zeros(records.len(), FEATURE_DIM + 1);
        for (i, row) in rows.iter().enumerate() {
            design[(i, 0)] = 1.0; // bias column, excluded from standardization
            for (j, v) in standardizer.transform(row).iter().enumerate() {
                design[(i, j + 1)] = *v;
            }
        }
        let targets = DVector::from_iterator(records.len(), records.iter().map(|r| r.f_max));
        let posterior = PosteriorModel::fit_design(&design, &targets, lambda, alpha)?;
        Ok(Self {
            standardizer,
            posterior,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Standardized design row (bias included) for a raw feature vector.
    pub fn design_row(&self, features: &FeatureVector) -> DVector<f64> {
        let z = self.standardizer.transform(&features.as_array());
        let mut x = DVector::zeros(FEATURE_DIM + 1);
        x[0] = 1.0;
        for (j, v) in z.iter().enumerate() {
            x[j + 1] = *v;
        }
        x
    }

    /// Predict the peak force for raw (unstandardized) features.
    pub fn predict(&self, features: &FeatureVector, delta_maxforce: f64) -> Prediction {
        let x = self.design_row(features);
        let (mean, variance) = self.posterior.predict(&x);
        Prediction {
            mean,
            variance,
            p_pushable: normal_cdf((delta_maxforce - mean) / variance.sqrt()),
        }
    }

    /// Root-mean-square error of the predictive mean over a record set.
    pub fn rmse(&self, records: &[PushRecord], delta_maxforce: f64) -> f64 {
        if records.is_empty() {
            return 0.0;
        }
        let sum: f64 = records
            .iter()
            .map(|r| {
                let p = self.predict(&r.features, delta_maxforce);
                (p.mean - r.f_max) * (p.mean - r.f_max)
            })
            .sum();
        (sum / records.len() as f64).sqrt()
    }
}

/// Serialized form of a trained model.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub lambda: f64,
    pub alpha: f64,
    pub weight_mean: Vec<f64>,
    /// Row-major (dim x dim) covariance.
    pub weight_cov: Vec<f64>,
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

impl TrainedModel {
    pub fn to_model_file(&self) -> ModelFile {
        let dim = self.posterior.weight_mean.len();
        let mut cov = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                cov.push(self.posterior.weight_cov[(i, j)]);
            }
        }
        ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            feature_names: self.feature_names.clone(),
            standardizer: self.standardizer.clone(),
            lambda: self.posterior.lambda,
            alpha: self.posterior.alpha,
            weight_mean: self.posterior.weight_mean.iter().copied().collect(),
            weight_cov: cov,
        }
    }

    pub fn from_model_file(file: ModelFile, path: &str) -> Result<Self> {
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema {
                path: path.into(),
                msg: format!("unsupported schema version {}", file.schema_version),
            });
        }
        let dim = file.weight_mean.len();
        if file.weight_cov.len() != dim * dim || file.feature_names.len() + 1 != dim {
            return Err(Error::Schema {
                path: path.into(),
                msg: "inconsistent weight dimensions".into(),
            });
        }
        Ok(Self {
            standardizer: file.standardizer,
            posterior: PosteriorModel {
                weight_mean: DVector::from_vec(file.weight_mean),
                weight_cov: DMatrix::from_row_iterator(dim, dim, file.weight_cov),
                lambda: file.lambda,
                alpha: file.alpha,
            },
            feature_names: file.feature_names,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_model_file())
            .expect("model serialization cannot fail");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_model_file(file, &path.display().to_string())
    }
}

/// One row of the coefficient report.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub feature: String,
    pub group: String,
    pub weight: f64,
}

/// Aggregated weights for one feature group.
#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub mean_weight: f64,
    pub mean_abs_weight: f64,
}

/// Named standardized coefficients plus grouped dependency magnitudes.
#[derive(Debug, Clone)]
pub struct CoefficientReport {
    pub rows: Vec<CoefficientRow>,
    pub groups: Vec<GroupSummary>,
}

impl CoefficientReport {
    /// CSV body: `feature,group,weight`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,group,weight\n");
        for row in &self.rows {
            out.push_str(&format!("{},{},{}\n", row.feature, row.group, row.weight));
        }
        out
    }

    /// CSV body: `group,mean_weight,mean_abs_weight`.
    pub fn groups_csv(&self) -> String {
        let mut out = String::from("group,mean_weight,mean_abs_weight\n");
        for g in &self.groups {
            out.push_str(&format!(
                "{},{},{}\n",
                g.group, g.mean_weight, g.mean_abs_weight
            ));
        }
        out
    }

    pub fn group(&self, name: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.group == name)
    }
}

/// Standardized coefficients per feature name with grouped magnitudes for
/// {position, box, volume, shape, normal, theta}.
pub fn coefficient_report(model: &TrainedModel) -> CoefficientReport {
    let mut rows = vec![CoefficientRow {
        feature: "bias".into(),
        group: "bias".into(),
        weight: model.posterior.weight_mean[0],
    }];
    for (i, name) in model.feature_names.iter().enumerate() {
        rows.push(CoefficientRow {
            feature: name.clone(),
            group: FEATURE_GROUPS[i].into(),
            weight: model.posterior.weight_mean[i + 1],
        });
    }

    let group_order = ["position", "box", "volume", "shape", "normal", "theta"];
    let groups = group_order
        .iter()
        .map(|&g| {
            let weights: Vec<f64> = rows
                .iter()
                .filter(|r| r.group == g)
                .map(|r| r.weight)
                .collect();
            let n = weights.len().max(1) as f64;
            GroupSummary {
                group: g.into(),
                mean_weight: weights.iter().sum::<f64>() / n,
                mean_abs_weight: weights.iter().map(|w| w.abs()).sum::<f64>() / n,
            }
        })
        .collect();
    CoefficientReport { rows, groups }
}

/// Write records as JSON Lines.
pub fn save_jsonl(records: &[PushRecord], path: &std::path::Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization cannot fail"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read records from JSON Lines, skipping blank lines.
pub fn load_jsonl(path: &std::path::Path) -> Result<Vec<PushRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PushRecord = serde_json::from_str(line).map_err(|e| Error::Schema {
            path: format!("{}:{}", path.display(), i + 1),
            msg: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
