//! wasm-bindgen bindings for the browser demo. All logic lives in
//! `iqa-core`; this crate only shuttles PNG bytes and JSON strings across
//! the boundary, so everything here also compiles and tests on the host.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use iqa_core::distort::{apply, DistortionKind, DistortionSpec, SeverityTable};
use iqa_core::io::{decode_png, encode_png};
use iqa_core::pairs::{overlap_fraction, sample_ola_crops, OlaBounds, PipelineConfig};
use iqa_core::synth::synth_corpus;

fn js_err(e: iqa_core::Error) -> JsError {
    JsError::new(&format!("[{}] {e}", e.category()))
}

/// JSON array of the 25 distortion kind names.
#[wasm_bindgen]
pub fn list_kinds() -> String {
    let names: Vec<String> = DistortionKind::ALL
        .iter()
        .map(|k| format!("\"{}\"", k.name()))
        .collect();
    format!("[{}]", names.join(","))
}

/// Procedural demo image as PNG bytes.
#[wasm_bindgen]
pub fn synth_demo_png(width: usize, height: usize, seed: u64) -> Result<Vec<u8>, JsError> {
    let img = synth_corpus(1, width, height, seed).remove(0);
    encode_png(&img).map_err(js_err)
}

/// Apply one bank distortion to a PNG image.
#[wasm_bindgen]
pub fn distort_png(png: &[u8], kind: &str, level: u8, seed: u64) -> Result<Vec<u8>, JsError> {
    let kind = DistortionKind::from_name(kind)
        .ok_or_else(|| JsError::new(&format!("unknown kind {kind}")))?;
    let img = decode_png(png).map_err(js_err)?;
    let spec = DistortionSpec::new(kind, level, seed).map_err(js_err)?;
    let table = SeverityTable::builtin();
    let out = apply(&img, &spec, &table).map_err(js_err)?;
    encode_png(&out).map_err(js_err)
}

/// MSE against the pristine input for levels 1..5, as a JSON array.
#[wasm_bindgen]
pub fn severity_curve(png: &[u8], kind: &str, seed: u64) -> Result<String, JsError> {
    let kind = DistortionKind::from_name(kind)
        .ok_or_else(|| JsError::new(&format!("unknown kind {kind}")))?;
    let img = decode_png(png).map_err(js_err)?;
    let table = SeverityTable::builtin();
    let mut values = Vec::with_capacity(5);
    for level in 1..=5u8 {
        let spec = DistortionSpec::new(kind, level, seed).map_err(js_err)?;
        let out = apply(&img, &spec, &table).map_err(js_err)?;
        values.push(format!("{:.8}", out.mse(&img).map_err(js_err)?));
    }
    Ok(format!("[{}]", values.join(",")))
}

/// Sample overlap-constrained crop pairs; JSON list of rect pairs plus
/// their overlap fraction.
#[wasm_bindgen]
pub fn sample_ola_rects(
    img_w: usize,
    img_h: usize,
    patch: usize,
    min_frac: f64,
    max_frac: f64,
    count: usize,
    seed: u64,
) -> Result<String, JsError> {
    let cfg = PipelineConfig {
        patch,
        ola: OlaBounds::new(min_frac, max_frac).map_err(js_err)?,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (a, b) = sample_ola_crops(&mut rng, img_w, img_h, &cfg).map_err(js_err)?;
        let frac = overlap_fraction(&a, &b).map_err(js_err)?;
        out.push(format!(
            "{{\"a\":[{},{},{},{}],\"b\":[{},{},{},{}],\"overlap\":{:.4}}}",
            a.x, a.y, a.w, a.h, b.x, b.y, b.w, b.h, frac
        ));
    }
    Ok(format!("[{}]", out.join(",")))
}
