//! Evaluation protocol: repeated 70/10/20 splits with optional content
//! grouping, per-repeat lambda selection, and median SRCC/PLCC reporting,
//! plus the cross-database variant.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, SplitTag};
use crate::metrics::{plcc, srcc};
use crate::ridge::{fit_ridge, predict, select_lambda, LambdaGrid, RidgeModel};

/// How items are grouped when splitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grouping {
    /// Items are independent.
    ByImage,
    /// Whole content groups stay within one partition.
    ByContent,
}

/// Split protocol parameters.
#[derive(Clone, Debug)]
pub struct SplitSpec {
    pub fractions: (f64, f64, f64),
    pub repeats: usize,
    pub seed: u64,
    pub grouping: Grouping,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            fractions: (0.70, 0.10, 0.20),
            repeats: 10,
            seed: 0,
            grouping: Grouping::ByImage,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.fractions;
        if !(a > 0.0 && b > 0.0 && c > 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split fractions must be positive and sum to 1"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be >= 1"));
        }
        Ok(())
    }
}

/// Index partitions for one repeat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partitions {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Disjoint-cover split of the manifest, seeded by `(spec.seed,
/// repeat_index)`. A fixed `split` column in the manifest overrides the
/// random protocol.
pub fn split(
    manifest: &DatasetManifest,
    spec: &SplitSpec,
    repeat_index: usize,
) -> Result<Partitions> {
    spec.validate()?;
    if manifest.has_fixed_split() {
        let mut p = Partitions {
            train: vec![],
            val: vec![],
            test: vec![],
        };
        for (i, e) in manifest.entries().iter().enumerate() {
            match e.split.expect("validated all-or-none") {
                SplitTag::Train => p.train.push(i),
                SplitTag::Val => p.val.push(i),
                SplitTag::Test => p.test.push(i),
            }
        }
        if p.train.is_empty() || p.test.is_empty() {
            return Err(Error::invalid("fixed split lacks train or test rows"));
        }
        return Ok(p);
    }

    if manifest.has_content_ids() && spec.grouping != Grouping::ByContent {
        return Err(Error::invalid(
            "manifest has content ids; grouping must be by-content",
        ));
    }

    let mut seed_bytes = [0u8; 32];
    seed_bytes[..8].copy_from_slice(&spec.seed.to_le_bytes());
    seed_bytes[8..16].copy_from_slice(&(repeat_index as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed_bytes);

    // Group items; ByImage treats every item as its own group.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    match spec.grouping {
        Grouping::ByImage => {
            groups.extend((0..manifest.len()).map(|i| vec![i]));
        }
        Grouping::ByContent => {
            let mut by_id: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
            for (i, e) in manifest.entries().iter().enumerate() {
                let id = e
                    .content_id
                    .clone()
                    .unwrap_or_else(|| format!("__item{i}"));
                by_id.entry(id).or_default().push(i);
            }
            groups.extend(by_id.into_values());
        }
    }
    if groups.len() < 3 {
        return Err(Error::invalid(format!(
            "{} groups cannot populate three partitions",
            groups.len()
        )));
    }
    groups.shuffle(&mut rng);

    let n = manifest.len() as f64;
    let targets = [
        spec.fractions.0 * n,
        spec.fractions.1 * n,
        spec.fractions.2 * n,
    ];
    let mut assigned = [0usize; 3];
    let mut parts = [vec![], vec![], vec![]];
    if spec.grouping == Grouping::ByImage {
        // Exact fraction arithmetic: floor(train), floor(val), rest test.
        let flat: Vec<usize> = groups.into_iter().flatten().collect();
        let n_train = (spec.fractions.0 * flat.len() as f64).floor() as usize;
        let n_val = (spec.fractions.1 * flat.len() as f64).floor() as usize;
        parts[0] = flat[..n_train].to_vec();
        parts[1] = flat[n_train..n_train + n_val].to_vec();
        parts[2] = flat[n_train + n_val..].to_vec();
    } else {
        // Greedy: each group goes to the partition with the largest
        // remaining deficit relative to its target count.
        for g in groups {
            let pick = (0..3)
                .max_by(|&a, &b| {
                    let da = targets[a] - assigned[a] as f64;
                    let db = targets[b] - assigned[b] as f64;
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assigned[pick] += g.len();
            parts[pick].extend(g);
        }
    }
    let [train, val, test] = parts;
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::invalid("a partition ended up empty"));
    }
    Ok(Partitions { train, val, test })
}

/// Result of one protocol repeat.
#[derive(Clone, Copy, Debug)]
pub struct RepeatResult {
    pub repeat: usize,
    pub srcc: f64,
    pub plcc: f64,
    pub lambda: f64,
}

/// Per-repeat results plus their medians.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub per_repeat: Vec<RepeatResult>,
    pub median_srcc: f64,
    pub median_plcc: f64,
}

impl EvalReport {
    fn from_repeats(per_repeat: Vec<RepeatResult>) -> Self {
        let median_srcc = median(per_repeat.iter().map(|r| r.srcc));
        let median_plcc = median(per_repeat.iter().map(|r| r.plcc));
        EvalReport {
            per_repeat,
            median_srcc,
            median_plcc,
        }
    }
}

/// Order-statistic median (mean of the two central values for even counts).
pub fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Run the full protocol: per repeat, split the manifest, select the ridge
/// regularizer on train/val, and score SRCC/PLCC on the held-out test set.
/// `features` rows align with manifest entries.
pub fn run_protocol(
    manifest: &DatasetManifest,
    features: &[Vec<f64>],
    spec: &SplitSpec,
    grid: &LambdaGrid,
) -> Result<EvalReport> {
    run_protocol_threaded(manifest, features, spec, grid, 1)
}

/// Like [`run_protocol`] but running independent repeats on worker
/// threads. Results assemble by repeat index, so any thread count gives
/// identical output.
pub fn run_protocol_threaded(
    manifest: &DatasetManifest,
    features: &[Vec<f64>],
    spec: &SplitSpec,
    grid: &LambdaGrid,
    threads: usize,
) -> Result<EvalReport> {
    spec.validate()?;
    if features.len() != manifest.len() {
        return Err(Error::invalid("feature rows must align with manifest"));
    }
    let y = manifest.mos_values();
    let run_one = |r: usize| -> Result<RepeatResult> {
        let parts = split(manifest, spec, r)?;
        let gather = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
            (
                idx.iter().map(|&i| features[i].clone()).collect(),
                idx.iter().map(|&i| y[i]).collect(),
            )
        };
        let (xt, yt) = gather(&parts.train);
        let (xv, yv) = gather(&parts.val);
        let (xs, ys) = gather(&parts.test);
        (|| -> Result<RepeatResult> {
            let model = select_lambda(&xt, &yt, &xv, &yv, grid)?;
            let preds: Vec<f64> = xs
                .iter()
                .map(|row| predict(&model, row))
                .collect::<Result<_>>()?;
            Ok(RepeatResult {
                repeat: r,
                srcc: srcc(&preds, &ys)?,
                plcc: plcc(&preds, &ys)?,
                lambda: model.lambda,
            })
        })()
        .map_err(|e| Error::StateError(format!("repeat {r}: {e}")))
    };

    let per_repeat: Vec<RepeatResult> = if threads <= 1 {
        (0..spec.repeats).map(run_one).collect::<Result<_>>()?
    } else {
        let mut slots: Vec<Option<Result<RepeatResult>>> = Vec::new();
        slots.resize_with(spec.repeats, || None);
        std::thread::scope(|scope| {
            for (w, chunk) in slots.chunks_mut(spec.repeats.div_ceil(threads)).enumerate() {
                let run_one = &run_one;
                let base = w * spec.repeats.div_ceil(threads);
                scope.spawn(move || {
                    for (off, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(run_one(base + off));
                    }
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("all repeats executed"))
            .collect::<Result<_>>()?
    };
    Ok(EvalReport::from_repeats(per_repeat))
}

/// Cross-database evaluation: fit on the whole training manifest (lambda
/// chosen on an internal seeded 90/10 split), evaluate once on the full
/// test manifest.
pub fn run_cross(
    train_features: &[Vec<f64>],
    train_mos: &[f64],
    test_features: &[Vec<f64>],
    test_mos: &[f64],
    grid: &LambdaGrid,
    seed: u64,
) -> Result<(f64, f64, RidgeModel)> {
    if train_features.len() != train_mos.len() || test_features.len() != test_mos.len() {
        return Err(Error::invalid("feature/target length mismatch"));
    }
    if train_features.len() < 10 {
        return Err(Error::invalid("cross-database training set too small"));
    }
    let mut order: Vec<usize> = (0..train_features.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_val = (order.len() / 10).max(1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let gather = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            idx.iter().map(|&i| train_features[i].clone()).collect(),
            idx.iter().map(|&i| train_mos[i]).collect(),
        )
    };
    let (xt, yt) = gather(train_idx);
    let (xv, yv) = gather(val_idx);
    let selected = select_lambda(&xt, &yt, &xv, &yv, grid)?;
    // Refit on the full training manifest at the selected lambda.
    let model = fit_ridge(
        train_features,
        train_mos,
        selected.lambda,
    )?;
    let preds: Vec<f64> = test_features
        .iter()
        .map(|row| predict(&model, row))
        .collect::<Result<_>>()?;
    Ok((srcc(&preds, test_mos)?, plcc(&preds, test_mos)?, model))
}

/// Report CSV: one row per repeat plus a `median` summary row.
pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "repeat,srcc,plcc,lambda")?;
    for r in &report.per_repeat {
        writeln!(f, "{},{},{},{}", r.repeat, r.srcc, r.plcc, r.lambda)?;
    }
    writeln!(f, "median,{},{},", report.median_srcc, report.median_plcc)?;
    Ok(())
}

/// Plain-text table mirroring the usual SRCC/PLCC presentation.
pub fn format_report(name: &str, report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<24} {:>8} {:>8} {:>10}\n", "dataset", "SRCC", "PLCC", "lambda"));
    for r in &report.per_repeat {
        out.push_str(&format!(
            "{:<24} {:>8.4} {:>8.4} {:>10.4}\n",
            format!("{name}[{}]", r.repeat),
            r.srcc,
            r.plcc,
            r.lambda
        ));
    }
    out.push_str(&format!(
        "{:<24} {:>8.4} {:>8.4} {:>10}\n",
        format!("{name} (median)"),
        report.median_srcc,
        report.median_plcc,
        "-"
    ));
    out
}
