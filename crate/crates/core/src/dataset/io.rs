//! Dataset directories: `images/*.pgm` (binary 8-bit greymaps),
//! `landmarks.csv` and `meta.json`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ImageGray, Sample};
use crate::annotation::{read_landmarks_csv, write_landmarks_csv, LandmarkRecord};
use crate::error::{Error, Result};

pub const GENERATOR_VERSION: &str = concat!("tonguenet-synth/", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub width: usize,
    pub height: usize,
    pub n_points: usize,
    pub seed: u64,
    pub generator_version: String,
}

/// Writes a binary `P5` greymap with maxval 255.
pub fn write_pgm(path: &Path, img: &ImageGray) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    bytes.extend(img.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a binary `P5` greymap. Only maxval 255 is supported.
pub fn read_pgm(path: &Path) -> Result<ImageGray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        // Skip whitespace and `#` comments.
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::malformed(path, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            msg: format!("expected magic `P5`, found `{magic}`"),
        });
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = token()?;
        t.parse()
            .map_err(|_| Error::malformed(path, format!("{what} `{t}` is not a number")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            msg: format!("maxval {maxval} (only 255 is supported)"),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let need = width * height;
    if width == 0 || height == 0 {
        return Err(Error::malformed(path, "zero image dimension"));
    }
    if bytes.len() < start + need {
        return Err(Error::malformed(
            path,
            format!(
                "raster has {} bytes, expected {need}",
                bytes.len().saturating_sub(start)
            ),
        ));
    }
    let data = bytes[start..start + need]
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    ImageGray::new(width, height, data)
}

/// `*.pgm` files in `dir`, sorted by name.
pub fn list_pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "pgm") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Saves images as `images/<id>.pgm`, landmarks as `landmarks.csv` and the
/// metadata as `meta.json`.
pub fn save_dataset(dir: &Path, samples: &[Sample], meta: &DatasetMeta) -> Result<()> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        let filename = format!("{}.pgm", s.id);
        write_pgm(&images.join(&filename), &s.image)?;
        records.push(LandmarkRecord {
            filename,
            landmarks: s.landmarks.clone(),
        });
    }
    write_landmarks_csv(&dir.join("landmarks.csv"), &records)?;
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(meta).expect("meta serializes");
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))
}

pub fn load_meta(dir: &Path) -> Result<DatasetMeta> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(&path, e.to_string()))
}

/// Loads every sample listed in `landmarks.csv`. A row without an image and an
/// image without a row are both errors.
pub fn load_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let csv_path = dir.join("landmarks.csv");
    let records = read_landmarks_csv(&csv_path)?;
    let images = dir.join("images");
    let on_disk: BTreeSet<String> = list_pgm_files(&images)?
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let listed: BTreeSet<&str> = records.iter().map(|r| r.filename.as_str()).collect();
    if let Some(orphan) = on_disk.iter().find(|f| !listed.contains(f.as_str())) {
        return Err(Error::malformed(
            &csv_path,
            format!(
                "{} rows but {} images; image `{orphan}` has no landmark row",
                records.len(),
                on_disk.len()
            ),
        ));
    }
    records
        .into_iter()
        .map(|r| {
            let img_path = images.join(&r.filename);
            if !on_disk.contains(&r.filename) {
                return Err(Error::malformed(
                    &csv_path,
                    format!("row `{}` has no image at {}", r.filename, img_path.display()),
                ));
            }
            let image = read_pgm(&img_path)?;
            let id = r
                .filename
                .strip_suffix(".pgm")
                .unwrap_or(&r.filename)
                .to_string();
            Sample::new(image, r.landmarks, id)
                .map_err(|e| Error::malformed(&csv_path, format!("row `{}`: {e}", r.filename)))
        })
        .collect()
}
