//! Image files: binary pixmaps (`P5` grayscale / `P6` RGB, maxval 255) and the
//! raw `RALT` tensor format (magic, rank u32, dims u32 x rank, LE f32 data).
//!
//! A dataset directory holds one sub-directory per class name; each slide's
//! id is its file stem.

use std::path::{Path, PathBuf};

use super::dataset::{SlideImage, TrainingSet};
use crate::binio::Reader;
use crate::class::Class;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const RALT_MAGIC: &[u8; 4] = b"RALT";

fn header_token(r: &mut Reader<'_>, what: &str) -> Result<usize> {
    // Whitespace and `#` comments may precede any header field.
    loop {
        match r.peek() {
            Some(b) if b.is_ascii_whitespace() => {
                r.take(1)?;
            }
            Some(b'#') => {
                while !matches!(r.peek(), Some(b'\n') | None) {
                    r.take(1)?;
                }
            }
            _ => break,
        }
    }
    let start = r.pos();
    let mut value: usize = 0;
    while let Some(b) = r.peek().filter(u8::is_ascii_digit) {
        r.take(1)?;
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((b - b'0') as usize))
            .ok_or_else(|| r.malformed_at(start, format!("{what} is too large")))?;
    }
    if r.pos() == start {
        return Err(r.malformed(format!("expected {what}")));
    }
    Ok(value)
}

pub fn decode_pixmap(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    let mut r = Reader::new(bytes, path);
    let magic = r.take(2)?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(r.malformed_at(0, "expected binary pixmap magic P5 or P6")),
    };
    let width = header_token(&mut r, "width")?;
    let height = header_token(&mut r, "height")?;
    let maxval = header_token(&mut r, "maxval")?;
    if width == 0 || height == 0 {
        return Err(r.malformed("zero image dimension"));
    }
    if maxval != 255 {
        return Err(r.malformed(format!(
            "only 8-bit pixmaps (maxval 255) are supported, got {maxval}"
        )));
    }
    match r.take(1)? {
        [b] if b.is_ascii_whitespace() => {}
        _ => return Err(r.malformed_at(r.pos() - 1, "expected whitespace after maxval")),
    }
    let raw = r.take(width * height * channels)?;
    r.expect_end()?;
    let data = raw.iter().map(|&b| b as f32 / 255.0).collect();
    Tensor::new(vec![height, width, channels], data)
}

/// Values are clamped to `[0, 1]` and rounded to 8 bits.
pub fn encode_pixmap(pixels: &Tensor<f32>) -> Result<Vec<u8>> {
    let &[h, w, c] = pixels.shape() else {
        return Err(Error::InvalidShape {
            shape: pixels.shape().to_vec(),
            reason: "expected an HxWxC image".into(),
        });
    };
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => {
            return Err(Error::InvalidShape {
                shape: pixels.shape().to_vec(),
                reason: "pixmaps hold 1 or 3 channels".into(),
            })
        }
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(
        pixels
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn decode_ralt(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    let mut r = Reader::new(bytes, path);
    r.expect_magic(RALT_MAGIC)?;
    let t = r.tensor()?;
    r.expect_end()?;
    Ok(t)
}

pub fn encode_ralt(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(RALT_MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Reads a pixmap or RALT file, chosen by its leading magic bytes.
pub fn read_tensor(path: &Path) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(RALT_MAGIC) {
        let t = decode_ralt(&bytes, path)?;
        if t.rank() != 3 {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                offset: 4,
                reason: format!("image tensors must have rank 3, got {}", t.rank()),
            });
        }
        Ok(t)
    } else {
        decode_pixmap(&bytes, path)
    }
}

/// Writes `.ralt` files bit-exactly and anything else as an 8-bit pixmap.
pub fn write_tensor(path: &Path, pixels: &Tensor<f32>) -> Result<()> {
    let bytes = if path.extension().is_some_and(|e| e == "ralt") {
        encode_ralt(pixels)
    } else {
        encode_pixmap(pixels)?
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a slide; the label comes from the parent directory name.
pub fn load_image(path: &Path) -> Result<SlideImage> {
    let label = path
        .parent()
        .and_then(Path::file_name)
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidConfig(format!("{} has no class directory", path.display())))?
        .parse::<Class>()?;
    load_image_as(path, label)
}

pub fn load_image_as(path: &Path, label: Class) -> Result<SlideImage> {
    let slide_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidConfig(format!("bad file name {}", path.display())))?
        .to_string();
    Ok(SlideImage {
        slide_id,
        label,
        pixels: read_tensor(path)?,
    })
}

pub fn save_patch(set: &TrainingSet, patch_id: &str, path: &Path) -> Result<()> {
    let i = set
        .position(patch_id)
        .ok_or_else(|| Error::UnknownId(patch_id.to_string()))?;
    write_tensor(path, set.pixels(i))
}

const IMAGE_EXTENSIONS: [&str; 4] = ["ppm", "pgm", "pnm", "ralt"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Every slide under `root/<Class>/`, ordered by class then file name.
pub fn load_dataset(root: &Path) -> Result<Vec<SlideImage>> {
    let mut slides = Vec::new();
    for class in Class::ALL {
        let dir = root.join(class.name());
        if !dir.is_dir() {
            continue;
        }
        for path in sorted_entries(&dir)? {
            if path.is_file() && is_image(&path) {
                slides.push(load_image_as(&path, class)?);
            }
        }
    }
    for entry in sorted_entries(root)? {
        if entry.is_dir() {
            let name = entry
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            name.parse::<Class>()?;
        }
    }
    if slides.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no slides found under {}",
            root.display()
        )));
    }
    Ok(slides)
}

/// Writes `root/<Class>/<slide_id>.<ext>`.
pub fn save_slide(root: &Path, slide: &SlideImage, ext: &str) -> Result<PathBuf> {
    let dir = root.join(slide.label.name());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(format!("{}.{ext}", slide.slide_id));
    write_tensor(&path, &slide.pixels)?;
    Ok(path)
}
