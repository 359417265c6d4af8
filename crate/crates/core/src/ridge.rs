//! Closed-form ridge regression with feature standardization, the
//! validation-driven lambda grid search, and the full-reference
//! difference-feature mode.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metrics::srcc;

/// Log-spaced regularization grid spanning `[1e-3, 1e3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        // 13 points, half-decade spacing, exact endpoints.
        let mut values = vec![1e-3];
        for i in 1..12 {
            values.push(10f64.powf(-3.0 + 0.5 * i as f64));
        }
        values.push(1e3);
        LambdaGrid { values }
    }
}

impl LambdaGrid {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("empty lambda grid"));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) && self.values.len() > 1 {
            return Err(Error::invalid("lambda grid must be strictly increasing"));
        }
        Ok(())
    }
}

/// Linear model in raw feature space: `y = weights . x + bias`. The
/// standardization statistics used during fitting are retained for the
/// model file.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    pub lambda: f64,
    pub bias: f64,
    pub weights: Vec<f64>,
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
}

impl RidgeModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

/// Closed-form ridge fit: standardizes features (statistics from the
/// training rows), centers the targets, solves
/// `(Z'Z + lambda I) w = Z'y` by Cholesky, and folds the standardization
/// back into raw-space weights so `bias` is the exact prediction at the
/// zero feature vector.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RidgeModel> {
    if x.len() != y.len() {
        return Err(Error::invalid("row/target count mismatch"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("ridge fit needs at least 2 rows"));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("inconsistent feature dimensions"));
    }
    if x.iter().flatten().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entries in ridge inputs"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    let n = x.len();

    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut std = vec![0.0; d];
    for row in x {
        for j in 0..d {
            let dv = row[j] - mean[j];
            std[j] += dv * dv;
        }
    }
    for s in &mut std {
        *s = (*s / n as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0; // constant feature: centered values are zero anyway
        }
    }

    let y_mean = y.iter().sum::<f64>() / n as f64;

    // Z'Z and Z'y over standardized, centered data.
    let mut z = DMatrix::<f64>::zeros(n, d);
    for (i, row) in x.iter().enumerate() {
        for j in 0..d {
            z[(i, j)] = (row[j] - mean[j]) / std[j];
        }
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut ztz = z.transpose() * &z;
    for j in 0..d {
        ztz[(j, j)] += lambda;
    }
    let zty = z.transpose() * yc;
    let chol = Cholesky::new(ztz).ok_or_else(|| {
        Error::NumericFailure("ridge normal equations not positive definite".into())
    })?;
    let w_std = chol.solve(&zty);

    // Fold standardization into raw space.
    let weights: Vec<f64> = (0..d).map(|j| w_std[j] / std[j]).collect();
    let bias = y_mean - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(RidgeModel {
        lambda,
        bias,
        weights,
        feat_mean: mean,
        feat_std: std,
    })
}

/// Predict a quality score for one feature vector.
pub fn predict(model: &RidgeModel, feat: &[f64]) -> Result<f64> {
    if feat.len() != model.dim() {
        return Err(Error::invalid(format!(
            "feature dim {} does not match model dim {}",
            feat.len(),
            model.dim()
        )));
    }
    Ok(model
        .weights
        .iter()
        .zip(feat)
        .map(|(w, v)| w * v)
        .sum::<f64>()
        + model.bias)
}

/// Full-reference prediction: regress on the elementwise absolute
/// difference of reference and distorted features.
pub fn predict_fr(model: &RidgeModel, feat_ref: &[f64], feat_dist: &[f64]) -> Result<f64> {
    if feat_ref.len() != feat_dist.len() {
        return Err(Error::invalid("FR features must share dimensions"));
    }
    let diff = abs_diff_features(feat_ref, feat_dist);
    predict(model, &diff)
}

/// `|h_ref - h_dist|`, the FR regression input.
pub fn abs_diff_features(feat_ref: &[f64], feat_dist: &[f64]) -> Vec<f64> {
    feat_ref
        .iter()
        .zip(feat_dist)
        .map(|(a, b)| (a - b).abs())
        .collect()
}

/// Fit once per grid point and keep the lambda that maximizes validation
/// SRCC; ties break toward the larger lambda.
pub fn select_lambda(
    x_train: &[Vec<f64>],
    y_train: &[f64],
    x_val: &[Vec<f64>],
    y_val: &[f64],
    grid: &LambdaGrid,
) -> Result<RidgeModel> {
    grid.validate()?;
    let mut best: Option<(f64, RidgeModel)> = None;
    for &lambda in &grid.values {
        let model = fit_ridge(x_train, y_train, lambda)?;
        let preds: Vec<f64> = x_val
            .iter()
            .map(|row| predict(&model, row))
            .collect::<Result<_>>()?;
        let score = match srcc(&preds, y_val) {
            Ok(s) => s,
            Err(Error::DegenerateMetric(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        let replace = match &best {
            None => true,
            Some((best_score, _)) => score >= *best_score, // ascending grid: ties go large
        };
        if replace {
            best = Some((score, model));
        }
    }
    best.map(|(_, m)| m)
        .ok_or_else(|| Error::invalid("empty lambda grid"))
}

/// Model file: CSV of (lambda, bias, standardization stats, weights).
pub fn write_model(path: &Path, model: &RidgeModel) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "lambda,{}", model.lambda)?;
    writeln!(f, "bias,{}", model.bias)?;
    writeln!(f, "mean,{}", join(&model.feat_mean))?;
    writeln!(f, "std,{}", join(&model.feat_std))?;
    writeln!(f, "weights,{}", join(&model.weights))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<RidgeModel> {
    let text = std::fs::read_to_string(path)?;
    let mut lambda = None;
    let mut bias = None;
    let mut mean = None;
    let mut std = None;
    let mut weights = None;
    for line in text.lines() {
        let Some((key, rest)) = line.split_once(',') else {
            continue;
        };
        match key {
            "lambda" => lambda = Some(parse_one(rest)?),
            "bias" => bias = Some(parse_one(rest)?),
            "mean" => mean = Some(parse_list(rest)?),
            "std" => std = Some(parse_list(rest)?),
            "weights" => weights = Some(parse_list(rest)?),
            other => return Err(Error::Format(format!("unknown model field `{other}`"))),
        }
    }
    match (lambda, bias, mean, std, weights) {
        (Some(lambda), Some(bias), Some(feat_mean), Some(feat_std), Some(weights)) => {
            if feat_mean.len() != weights.len() || feat_std.len() != weights.len() {
                return Err(Error::Format("model field length mismatch".into()));
            }
            Ok(RidgeModel {
                lambda,
                bias,
                weights,
                feat_mean,
                feat_std,
            })
        }
        _ => Err(Error::Format("model file missing fields".into())),
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_one(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad float `{s}`")))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_one).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn near_zero_lambda_interpolates() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![1.0, 2.0];
        let m = fit_ridge(&x, &y, 1e-12).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-6);
        assert!(m.bias.abs() < 1e-6);
        assert!((predict(&m, &[1.0]).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn huge_lambda_shrinks_to_mean() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![1.0, 5.0, 3.0];
        let m = fit_ridge(&x, &y, 1e12).unwrap();
        let mean_y = 3.0;
        for row in &x {
            assert!((predict(&m, row).unwrap() - mean_y).abs() < 1e-6);
        }
    }

    /// Normal-equation oracle via an independent Gaussian elimination in
    /// extended precision over the same standardized system.
    fn fit_reference(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
        let n = x.len();
        let d = x[0].len();
        let mean: Vec<f64> = (0..d)
            .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        let std: Vec<f64> = (0..d)
            .map(|j| {
                let v = x
                    .iter()
                    .map(|r| (r[j] - mean[j]) * (r[j] - mean[j]))
                    .sum::<f64>()
                    / n as f64;
                let s = v.sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        let ymean = y.iter().sum::<f64>() / n as f64;
        // A = Z'Z + lambda I, b = Z'(y - ymean)
        let mut a = vec![vec![0.0; d]; d];
        let mut b = vec![0.0; d];
        for i in 0..n {
            let z: Vec<f64> = (0..d).map(|j| (x[i][j] - mean[j]) / std[j]).collect();
            for p in 0..d {
                b[p] += z[p] * (y[i] - ymean);
                for q in 0..d {
                    a[p][q] += z[p] * z[q];
                }
            }
        }
        for (j, row) in a.iter_mut().enumerate() {
            row[j] += lambda;
        }
        // Gaussian elimination with partial pivoting.
        let mut aug: Vec<Vec<f64>> = a
            .iter()
            .zip(&b)
            .map(|(row, bv)| {
                let mut r = row.clone();
                r.push(*bv);
                r
            })
            .collect();
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&p, &q| aug[p][col].abs().partial_cmp(&aug[q][col].abs()).unwrap())
                .unwrap();
            aug.swap(col, piv);
            let pv = aug[col][col];
            for r in col + 1..d {
                let f = aug[r][col] / pv;
                for c in col..=d {
                    aug[r][c] -= f * aug[col][c];
                }
            }
        }
        let mut w = vec![0.0; d];
        for col in (0..d).rev() {
            let mut acc = aug[col][d];
            for c in col + 1..d {
                acc -= aug[col][c] * w[c];
            }
            w[col] = acc / aug[col][col];
        }
        let w_raw: Vec<f64> = (0..d).map(|j| w[j] / std[j]).collect();
        let bias = ymean - w_raw.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>();
        (w_raw, bias)
    }

    #[test]
    fn matches_normal_equation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..50 {
            let n = rng.gen_range(10..40);
            let d = rng.gen_range(1..6);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for lambda in [1e-3, 1.0, 31.6] {
                let m = fit_ridge(&x, &y, lambda).unwrap();
                let (w_ref, b_ref) = fit_reference(&x, &y, lambda);
                for (got, want) in m.weights.iter().zip(&w_ref) {
                    let scale = 1.0 + want.abs();
                    assert!(
                        (got - want).abs() / scale < 1e-8,
                        "trial {trial} lambda {lambda}: weight {got} vs {want}"
                    );
                }
                assert!((m.bias - b_ref).abs() / (1.0 + b_ref.abs()) < 1e-8);
            }
        }
    }

    #[test]
    fn centered_single_feature_closed_form() {
        // Standardized single feature with unit variance: w_std = s/(1+l)
        // where s is the correlation-scaled slope. Check against the direct
        // normal-equation value for x = [-0.5, 0.5] (std = 0.5).
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![1.0, 2.0];
        let lambda = 1.0;
        let m = fit_ridge(&x, &y, lambda).unwrap();
        // Z = [-1, 1], y_c = [-0.5, 0.5]; Z'Z = 2; w_std = 1/(2+1) * Z'y = 1/3.
        // Raw weight = w_std / std = (1/3) / 0.5 = 2/3.
        assert!((m.weights[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_of_one_value_is_chosen() {
        let grid = LambdaGrid { values: vec![0.5] };
        let x = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let m = select_lambda(&x, &y, &x, &y, &grid).unwrap();
        assert_eq!(m.lambda, 0.5);
    }

    #[test]
    fn noiseless_linear_data_ties_break_large() {
        // With train == val and perfectly linear noiseless data, every
        // small lambda gives SRCC 1.0 on the validation predictions; ties
        // resolve to the largest such lambda.
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64 + 1.0).collect();
        let grid = LambdaGrid::default();
        let m = select_lambda(&x, &y, &x, &y, &grid).unwrap();
        // Ridge predictions stay strictly monotone for every finite lambda,
        // so the tie-break walks all the way to the top of the grid.
        assert_eq!(m.lambda, 1e3);
    }

    #[test]
    fn selected_lambda_beats_endpoints_on_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 8;
        let w_true: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mk = |rng: &mut ChaCha8Rng, n: usize| -> (Vec<Vec<f64>>, Vec<f64>) {
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let y: Vec<f64> = x
                .iter()
                .map(|r| {
                    r.iter().zip(&w_true).map(|(a, b)| a * b).sum::<f64>()
                        + rng.gen_range(-0.3..0.3)
                })
                .collect();
            (x, y)
        };
        let (xt, yt) = mk(&mut rng, 40);
        let (xv, yv) = mk(&mut rng, 40);
        let grid = LambdaGrid::default();
        let best = select_lambda(&xt, &yt, &xv, &yv, &grid).unwrap();
        let score = |lambda: f64| -> f64 {
            let m = fit_ridge(&xt, &yt, lambda).unwrap();
            let preds: Vec<f64> = xv.iter().map(|r| predict(&m, r).unwrap()).collect();
            srcc(&preds, &yv).unwrap()
        };
        let best_score = score(best.lambda);
        assert!(best_score >= score(grid.values[0]) - 1e-12);
        assert!(best_score >= score(*grid.values.last().unwrap()) - 1e-12);
    }

    #[test]
    fn fr_prediction_is_symmetric_and_bias_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = 6;
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..d).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>()).collect();
        let m = fit_ridge(&rows, &y, 0.1).unwrap();
        let a: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ab = predict_fr(&m, &a, &b).unwrap();
        let ba = predict_fr(&m, &b, &a).unwrap();
        assert_eq!(ab, ba);
        let same = predict_fr(&m, &a, &a).unwrap();
        assert_eq!(same, m.bias);
    }

    #[test]
    fn default_grid_shape() {
        let g = LambdaGrid::default();
        assert_eq!(g.values.len(), 13);
        assert_eq!(g.values[0], 1e-3);
        assert_eq!(*g.values.last().unwrap(), 1e3);
        assert!(g.values.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.csv");
        let m = RidgeModel {
            lambda: 0.316,
            bias: -1.5,
            weights: vec![0.25, -0.75, 3.0],
            feat_mean: vec![0.1, 0.2, 0.3],
            feat_std: vec![1.0, 2.0, 0.5],
        };
        write_model(&path, &m).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(fit_ridge(&[vec![1.0]], &[1.0], 1.0).is_err()); // < 2 rows
        assert!(fit_ridge(&[vec![1.0], vec![f64::NAN]], &[1.0, 2.0], 1.0).is_err());
        let m = fit_ridge(&[vec![1.0], vec![2.0]], &[1.0, 2.0], 1.0).unwrap();
        assert!(predict(&m, &[1.0, 2.0]).is_err());
        assert!(select_lambda(
            &[vec![1.0], vec![2.0]],
            &[1.0, 2.0],
            &[vec![1.0], vec![2.0]],
            &[1.0, 2.0],
            &LambdaGrid { values: vec![] }
        )
        .is_err());
    }
}
