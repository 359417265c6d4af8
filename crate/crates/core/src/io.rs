//! Image file I/O: 8-bit RGB PNG and binary PPM (P6). Sample values map
//! `v/255` on read and `round(v*255)` on write.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Image;

/// Read a PNG or PPM file, dispatching on extension.
pub fn read_image(path: &Path) -> Result<Image> {
    match extension(path) {
        Some("png") => read_png(path),
        Some("ppm") => read_ppm(path),
        other => Err(Error::Format(format!(
            "unsupported image extension {:?} (png and ppm only)",
            other
        ))),
    }
}

/// Write a PNG or PPM file, dispatching on extension.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    match extension(path) {
        Some("png") => write_png(path, img),
        Some("ppm") => write_ppm(path, img),
        other => Err(Error::Format(format!(
            "unsupported image extension {:?} (png and ppm only)",
            other
        ))),
    }
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}

pub fn read_png(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    decode_png(&bytes)
}

/// Decode PNG bytes (8-bit; RGB, RGBA, gray and indexed inputs are widened
/// to RGB).
pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let dyn_img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png decode: {e}")))?;
    let rgb = dyn_img.to_rgb8();
    Image::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let bytes = encode_png(img)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Encode as 8-bit RGB PNG in memory.
pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let buf =
        image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
            .expect("buffer sized from image dims");
    let mut out = Vec::new();
    buf.write_to(
        &mut std::io::Cursor::new(&mut out),
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::Format(format!("png encode: {e}")))?;
    Ok(out)
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    decode_ppm(&bytes)
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(format!("P6\n{} {}\n255\n", img.width(), img.height()).as_bytes())?;
    f.write_all(&img.to_rgb8())?;
    Ok(())
}

/// Decode binary PPM (P6, maxval 255).
pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        // Skip whitespace and `#` comments between header tokens.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated ppm header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token()? != "P6" {
        return Err(Error::Format("not a binary ppm (P6) file".into()));
    }
    let w: usize = token()?
        .parse()
        .map_err(|_| Error::Format("bad ppm width".into()))?;
    let h: usize = token()?
        .parse()
        .map_err(|_| Error::Format("bad ppm height".into()))?;
    let maxval: usize = token()?
        .parse()
        .map_err(|_| Error::Format("bad ppm maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "ppm maxval {maxval} unsupported (255 only)"
        )));
    }
    pos += 1; // single whitespace byte after maxval
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(Error::Format("ppm pixel data truncated".into()));
    }
    Image::from_rgb8(w, h, &bytes[pos..pos + need])
}
