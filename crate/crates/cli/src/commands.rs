//! Subcommand implementations, each a thin orchestration over the core
//! library.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use iqa_core::distort::{
    apply, hex_sha256, list_kinds, DistortionKind, DistortionSpec, SeverityTable,
};
use iqa_core::features::{
    read_features, write_feature_index, write_features, FeatureExtractor,
};
use iqa_core::gradcheck::gradcheck;
use iqa_core::io::{read_image, write_image};
use iqa_core::manifest::{resolve, DatasetManifest};
use iqa_core::nn::checkpoint;
use iqa_core::pairs::make_batch;
use iqa_core::protocol::{format_report, run_cross, run_protocol_threaded, write_report};
use iqa_core::raster::Image;
use iqa_core::ridge::{abs_diff_features, select_lambda, write_model, predict};
use iqa_core::trainer::{train, TrainMode};

use crate::config::{write_run_manifest, RunConfig};

pub fn load_table(cfg: &RunConfig, base: &Path) -> anyhow::Result<SeverityTable> {
    match &cfg.paths.severity_table {
        None => Ok(SeverityTable::builtin()),
        Some(p) => {
            let path = resolve(base, p);
            SeverityTable::load(&path).with_context(|| format!("severity table {}", path.display()))
        }
    }
}

fn load_manifest_images(manifest_path: &Path) -> anyhow::Result<(DatasetManifest, Vec<Image>)> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let images = manifest
        .entries()
        .iter()
        .map(|e| read_image(&resolve(base, &e.path)))
        .collect::<iqa_core::Result<Vec<_>>>()?;
    Ok((manifest, images))
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_distort(
    input: &Path,
    kind: &str,
    level: u8,
    seed: u64,
    output: &Path,
    cfg: &RunConfig,
) -> anyhow::Result<()> {
    let kind = DistortionKind::from_name(kind).ok_or_else(|| {
        anyhow::anyhow!(
            "unknown kind `{kind}`; available: {}",
            list_kinds()
                .iter()
                .map(|k| k.name())
                .collect::<Vec<_>>()
                .join(", ")
        )
    })?;
    let table = load_table(cfg, Path::new("."))?;
    let img = read_image(input)?;
    let spec = DistortionSpec::new(kind, level, seed)?;
    let out = apply(&img, &spec, &table)?;
    write_image(output, &out)?;
    println!(
        "distorted {} -> {} ({} level {} seed {})",
        input.display(),
        output.display(),
        kind.name(),
        level,
        seed
    );
    write_run_manifest(
        output,
        "distort",
        cfg,
        seed,
        table.digest(),
        &[("output", output.to_path_buf())],
    )
}

pub fn cmd_pairs(
    manifest_path: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
    seed: u64,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let (_, images) = load_manifest_images(manifest_path)?;
    let table = load_table(cfg, manifest_path.parent().unwrap_or(Path::new(".")))?;
    let pcfg = cfg.pipeline_config()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = make_batch(&mut rng, &images, &pcfg, &table)?;

    let meta_path = out_dir.join("pair_meta.csv");
    let mut meta = std::fs::File::create(&meta_path)?;
    writeln!(
        meta,
        "pair,chunk_id,source_idx,scale_idx,aug_index,crop1,crop2,swapped,query_file,key_file"
    )?;
    let mut artifacts: Vec<(&str, PathBuf)> = Vec::new();
    for (i, m) in batch.meta.iter().enumerate() {
        let qf = out_dir.join(format!("pair{i:04}_query.png"));
        let kf = out_dir.join(format!("pair{i:04}_key.png"));
        write_image(&qf, &batch.queries[i])?;
        write_image(&kf, &batch.keys[i])?;
        writeln!(
            meta,
            "{i},{},{},{},{},{}x{}+{}+{},{}x{}+{}+{},{},{},{}",
            m.chunk_id,
            m.source_idx,
            m.scale_idx,
            m.aug_index,
            m.crop1.w,
            m.crop1.h,
            m.crop1.x,
            m.crop1.y,
            m.crop2.w,
            m.crop2.h,
            m.crop2.x,
            m.crop2.y,
            m.swapped,
            qf.file_name().unwrap().to_string_lossy(),
            kf.file_name().unwrap().to_string_lossy(),
        )?;
    }
    drop(meta);
    artifacts.push(("pair_meta", meta_path));
    println!(
        "wrote {} pairs to {} (skipped {} undersized source/scale combinations)",
        batch.len(),
        out_dir.display(),
        batch.skipped_small
    );
    write_run_manifest(
        &out_dir.join("run"),
        "pairs",
        cfg,
        seed,
        table.digest(),
        &artifacts,
    )
}

pub fn cmd_train(
    manifest_path: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
    seed: u64,
    mode: Option<&str>,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let (_, images) = load_manifest_images(manifest_path)?;
    let table = load_table(cfg, manifest_path.parent().unwrap_or(Path::new(".")))?;
    let pcfg = cfg.pipeline_config()?;
    let mut tcfg = cfg.train_config(seed)?;
    if let Some(m) = mode {
        tcfg.mode = TrainMode::from_name(m)
            .ok_or_else(|| anyhow::anyhow!("unknown mode `{m}` (quality|content)"))?;
    }

    let outcome = train(&images, &pcfg, &tcfg, &table)?;

    let mut digest = [0u8; 32];
    let hex = hex_sha256(cfg.to_toml().as_bytes());
    for (i, byte) in digest.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).unwrap();
    }
    let ckpt_path = out_dir.join("encoder.riqc");
    checkpoint::save(&outcome.online, &digest, &ckpt_path)?;
    let log_path = out_dir.join("train_log.csv");
    checkpoint::write_log_csv(
        &log_path,
        &outcome
            .log
            .iter()
            .map(|r| (r.step, r.lr, r.loss, r.queue_fill))
            .collect::<Vec<_>>(),
    )?;
    let first = outcome.log.first().map(|r| r.loss).unwrap_or(f64::NAN);
    let last = outcome.log.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "trained {} steps ({} mode): loss {:.4} -> {:.4}, checkpoint {}",
        outcome.log.len(),
        tcfg.mode.name(),
        first,
        last,
        ckpt_path.display()
    );
    if outcome.skipped_small > 0 {
        println!(
            "warning: skipped {} undersized source/scale combinations",
            outcome.skipped_small
        );
    }
    write_run_manifest(
        &out_dir.join("run"),
        "train",
        cfg,
        seed,
        table.digest(),
        &[("checkpoint", ckpt_path), ("train_log", log_path)],
    )
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_extract(
    manifest_path: &Path,
    quality_ckpt: Option<&Path>,
    content_ckpt: Option<&Path>,
    output: &Path,
    fr: bool,
    threads: usize,
    cfg: &RunConfig,
) -> anyhow::Result<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let quality = quality_ckpt.map(checkpoint::load).transpose()?.map(|t| t.0);
    let content = content_ckpt.map(checkpoint::load).transpose()?.map(|t| t.0);
    let extractor = FeatureExtractor::new(content, quality)?;
    if fr && !manifest.has_refs() {
        anyhow::bail!("--fr requires a manifest with a ref_path column");
    }

    let extract_one = |i: usize| -> iqa_core::Result<Vec<f64>> {
        let e = &manifest.entries()[i];
        let img = read_image(&resolve(&base, &e.path))?;
        let feat = extractor.extract(&img)?;
        if fr {
            let ref_img = read_image(&resolve(&base, e.ref_path.as_ref().expect("checked")))?;
            let ref_feat = extractor.extract(&ref_img)?;
            Ok(abs_diff_features(&ref_feat, &feat))
        } else {
            Ok(feat)
        }
    };

    let n = manifest.len();
    let rows: Vec<Vec<f64>> = if threads <= 1 {
        (0..n).map(extract_one).collect::<iqa_core::Result<_>>()?
    } else {
        let mut slots: Vec<Option<iqa_core::Result<Vec<f64>>>> = Vec::new();
        slots.resize_with(n, || None);
        let chunk = n.div_ceil(threads);
        std::thread::scope(|scope| {
            for (w, slice) in slots.chunks_mut(chunk).enumerate() {
                let extract_one = &extract_one;
                scope.spawn(move || {
                    for (off, slot) in slice.iter_mut().enumerate() {
                        *slot = Some(extract_one(w * chunk + off));
                    }
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("all rows extracted"))
            .collect::<iqa_core::Result<_>>()?
    };

    write_features(output, &rows)?;
    let index_path = output.with_extension("index.csv");
    write_feature_index(
        &index_path,
        &manifest
            .entries()
            .iter()
            .map(|e| e.path.display().to_string())
            .collect::<Vec<_>>(),
    )?;
    println!(
        "extracted {} x {} features ({}) -> {}",
        rows.len(),
        rows.first().map(|r| r.len()).unwrap_or(0),
        if fr { "FR |ref - dist|" } else { "NR" },
        output.display()
    );
    let table = load_table(cfg, &base)?;
    write_run_manifest(
        output,
        "extract",
        cfg,
        0,
        table.digest(),
        &[("features", output.to_path_buf()), ("index", index_path)],
    )
}

pub fn cmd_regress(
    manifest_path: &Path,
    features_path: &Path,
    output: &Path,
    seed: u64,
    cfg: &RunConfig,
) -> anyhow::Result<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let features = read_features(features_path)?;
    if features.len() != manifest.len() {
        anyhow::bail!(
            "feature rows ({}) do not match manifest entries ({})",
            features.len(),
            manifest.len()
        );
    }
    let spec = cfg.split_spec(seed, manifest.has_content_ids())?;
    let grid = cfg.lambda_grid()?;
    let parts = iqa_core::protocol::split(&manifest, &spec, 0)?;
    let y = manifest.mos_values();
    let gather = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            idx.iter().map(|&i| features[i].clone()).collect(),
            idx.iter().map(|&i| y[i]).collect(),
        )
    };
    let (xt, yt) = gather(&parts.train);
    let (xv, yv) = gather(&parts.val);
    let (xs, ys) = gather(&parts.test);
    let model = select_lambda(&xt, &yt, &xv, &yv, &grid)?;
    let preds: Vec<f64> = xs
        .iter()
        .map(|r| predict(&model, r))
        .collect::<iqa_core::Result<_>>()?;
    let s = iqa_core::metrics::srcc(&preds, &ys)?;
    let p = iqa_core::metrics::plcc(&preds, &ys)?;
    write_model(output, &model)?;
    println!(
        "fitted ridge (lambda {:.4}): test SRCC {:.4}, PLCC {:.4}, model -> {}",
        model.lambda,
        s,
        p,
        output.display()
    );
    let table = load_table(cfg, Path::new("."))?;
    write_run_manifest(
        output,
        "regress",
        cfg,
        seed,
        table.digest(),
        &[("model", output.to_path_buf())],
    )
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    manifest_path: &Path,
    features_path: &Path,
    output: &Path,
    seed: u64,
    repeats: Option<usize>,
    threads: usize,
    cfg: &RunConfig,
) -> anyhow::Result<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let features = read_features(features_path)?;
    let mut spec = cfg.split_spec(seed, manifest.has_content_ids())?;
    if let Some(r) = repeats {
        spec.repeats = r;
    }
    let grid = cfg.lambda_grid()?;
    let report = run_protocol_threaded(&manifest, &features, &spec, &grid, threads)?;
    write_report(output, &report)?;
    let name = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    print!("{}", format_report(&name, &report));
    println!(
        "median SRCC {:.4}, median PLCC {:.4}",
        report.median_srcc, report.median_plcc
    );
    let table = load_table(cfg, Path::new("."))?;
    write_run_manifest(
        output,
        "eval",
        cfg,
        seed,
        table.digest(),
        &[("report", output.to_path_buf())],
    )
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_cross_eval(
    train_manifest: &Path,
    train_features: &Path,
    test_manifest: &Path,
    test_features: &Path,
    seed: u64,
    model_out: Option<&Path>,
    cfg: &RunConfig,
) -> anyhow::Result<()> {
    let tm = DatasetManifest::load(train_manifest)?;
    let sm = DatasetManifest::load(test_manifest)?;
    let tf = read_features(train_features)?;
    let sf = read_features(test_features)?;
    let grid = cfg.lambda_grid()?;
    let (s, p, model) = run_cross(&tf, &tm.mos_values(), &sf, &sm.mos_values(), &grid, seed)?;
    println!(
        "cross-database: train {} -> test {}: SRCC {:.4}, PLCC {:.4} (lambda {:.4})",
        train_manifest.display(),
        test_manifest.display(),
        s,
        p,
        model.lambda
    );
    if let Some(out) = model_out {
        write_model(out, &model)?;
        println!("model -> {}", out.display());
    }
    Ok(())
}

pub fn cmd_synth(
    out_dir: &Path,
    count: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let corpus = iqa_core::synth::synth_corpus(count, width, height, seed);
    let manifest_path = out_dir.join("manifest.csv");
    let mut manifest = std::fs::File::create(&manifest_path)?;
    writeln!(manifest, "path,mos")?;
    for (i, img) in corpus.iter().enumerate() {
        let name = format!("img{i:04}.png");
        write_image(&out_dir.join(&name), img)?;
        writeln!(manifest, "{name},0")?;
    }
    println!(
        "wrote {count} images ({width}x{height}) and {} ",
        manifest_path.display()
    );
    Ok(())
}

pub fn cmd_gradcheck(seed: u64, seeds: usize, eps: f64) -> anyhow::Result<()> {
    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| seed.wrapping_add(i)).collect();
    let report = gradcheck(&seed_list, eps, 0.2)?;
    println!(
        "gradcheck: {} parameters over {} seeds, eps {eps}",
        report.params_checked,
        seed_list.len()
    );
    for (s, err) in seed_list.iter().zip(&report.per_seed_max) {
        println!("  seed {s}: max relative error {err:.3e}");
    }
    println!(
        "max relative error {:.3e}; key-encoder gradients zero: {}",
        report.max_rel_err, report.key_grads_zero
    );
    if report.max_rel_err < 1e-4 && report.key_grads_zero {
        println!("PASS (threshold 1e-4)");
        Ok(())
    } else {
        anyhow::bail!("gradcheck FAILED: max relative error {}", report.max_rel_err)
    }
}

pub fn cmd_selftest() -> anyhow::Result<()> {
    use iqa_core::contrast::{info_nce_loss, lr_at, NegativeQueue};
    use iqa_core::metrics::{plcc, srcc};
    use iqa_core::nn::Tensor;
    use rand::Rng;

    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "ok  " } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // InfoNCE closed forms and stabilization.
    {
        let q = vec![1.0, 0.0];
        let k = vec![0.0, 1.0];
        let negs: Vec<Vec<f64>> = (0..4).map(|_| k.clone()).collect();
        let loss = info_nce_loss(&q, &k, &negs, 0.2)?;
        check("info_nce equal logits = ln(N+1)", (loss - 5f64.ln()).abs() < 1e-12);

        let mut q1 = vec![0.0; 5];
        q1[0] = 1.0;
        let negs: Vec<Vec<f64>> = (1..5)
            .map(|i| {
                let mut v = vec![0.0; 5];
                v[i] = 1.0;
                v
            })
            .collect();
        let loss = info_nce_loss(&q1, &q1.clone(), &negs, 1.0)?;
        let e = std::f64::consts::E;
        check(
            "info_nce orthogonal closed form",
            (loss + (e / (e + 4.0)).ln()).abs() < 1e-12,
        );

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
                v.into_iter().map(|x| x / n).collect()
            };
            let q = unit(&mut rng);
            let kp = unit(&mut rng);
            let negs: Vec<Vec<f64>> = (0..16).map(|_| unit(&mut rng)).collect();
            let got = info_nce_loss(&q, &kp, &negs, 0.07)?;
            let pos = (q.iter().zip(&kp).map(|(a, b)| a * b).sum::<f64>() / 0.07).exp();
            let neg: f64 = negs
                .iter()
                .map(|n| (q.iter().zip(n).map(|(a, b)| a * b).sum::<f64>() / 0.07).exp())
                .sum();
            worst = worst.max((got + (pos / (pos + neg)).ln()).abs());
        }
        check("info_nce stabilized vs direct (100 cases)", worst < 1e-10);
    }

    // Metric oracles.
    {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        check("srcc hand oracle 0.8", (srcc(&x, &y)? - 0.8).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -3.0 * v + 10.0).collect();
        check("plcc affine -1", (plcc(&x, &z)? + 1.0).abs() < 1e-12);
    }

    // Queue FIFO model.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut queue = NegativeQueue::new(16, 3);
        let mut model: Vec<Vec<f64>> = Vec::new();
        let mut ok = true;
        for _ in 0..1000 {
            let n = rng.gen_range(0..4usize);
            let mut t = Tensor::zeros(&[n, 3]);
            for i in 0..n {
                let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
                for (j, x) in v.iter().enumerate() {
                    t.data[i * 3 + j] = x / norm;
                }
                model.push(t.data[i * 3..(i + 1) * 3].to_vec());
                if model.len() > 16 {
                    model.remove(0);
                }
            }
            queue.push(&t)?;
            ok &= queue.snapshot() == model && queue.len() <= 16;
        }
        check("queue matches list FIFO model (1000 ops)", ok);
    }

    // Schedule endpoints.
    {
        let ok = (lr_at(0, 10, 0.6)? - 0.6).abs() < 1e-15
            && lr_at(10, 10, 0.6)?.abs() < 1e-15
            && (lr_at(5, 10, 0.6)? - 0.3).abs() < 1e-15;
        check("cosine lr endpoints", ok);
    }

    if failures == 0 {
        println!("selftest passed");
        Ok(())
    } else {
        anyhow::bail!("{failures} selftest suites failed")
    }
}
