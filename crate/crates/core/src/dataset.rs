//! Dataset ingestion and synthesis: IDX (MNIST) files, CSV round-tripping,
//! average-pooling precompression, and seeded uniform/Gaussian sampling.
//!
//! All stochastic operations take an explicit seed and run on ChaCha8, so
//! identical seeds give identical output on every platform and thread count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// N points in `[0,1)^s` with one scalar response each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
    pub s: usize,
}

impl Dataset {
    /// Builds a dataset, checking the `[0,1)` coordinate invariant and that
    /// points and responses agree in length.
    pub fn new(points: Vec<Vec<f64>>, responses: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Range("dataset must contain at least one point".into()));
        }
        if points.len() != responses.len() {
            return Err(Error::Shape(format!(
                "{} points vs {} responses",
                points.len(),
                responses.len()
            )));
        }
        let s = points[0].len();
        for (n, p) in points.iter().enumerate() {
            if p.len() != s {
                return Err(Error::Shape(format!("point {n} has dimension {} != {s}", p.len())));
            }
            for &c in p {
                if !(0.0..1.0).contains(&c) {
                    return Err(Error::Range(format!("coordinate {c} of point {n} outside [0,1)")));
                }
            }
        }
        Ok(Self { points, responses, s })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mean response.
    pub fn response_mean(&self) -> f64 {
        crate::kahan_sum(self.responses.iter().copied()) / self.responses.len() as f64
    }
}

/// Grayscale image with row-major intensities in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

const IDX_IMAGE_MAGIC: u32 = 2051;
const IDX_LABEL_MAGIC: u32 = 2049;

fn read_be_u32(bytes: &[u8], pos: usize, what: &str) -> Result<u32> {
    let end = pos + 4;
    if bytes.len() < end {
        return Err(Error::Length(format!("file truncated while reading {what}")));
    }
    Ok(u32::from_be_bytes([bytes[pos], bytes[pos + 1], bytes[pos + 2], bytes[pos + 3]]))
}

/// Reads an IDX image file (big-endian magic 2051), scaling pixel bytes by
/// exactly 255.0 into `[0,1]`. Ingestion order is preserved.
pub fn read_idx_images<P: AsRef<Path>>(path: P) -> Result<Vec<GrayImage>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let magic = read_be_u32(&bytes, 0, "image magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!("expected image magic {IDX_IMAGE_MAGIC}, got {magic}")));
    }
    let n = read_be_u32(&bytes, 4, "image count")? as usize;
    let rows = read_be_u32(&bytes, 8, "row count")? as usize;
    let cols = read_be_u32(&bytes, 12, "column count")? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(Error::Length(format!(
            "image payload truncated: need {need} bytes, file has {}",
            bytes.len()
        )));
    }
    Ok(bytes[16..need]
        .chunks_exact(rows * cols)
        .map(|chunk| GrayImage {
            width: cols,
            height: rows,
            pixels: chunk.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
        .collect())
}

/// Reads an IDX label file (magic 2049) of digits in `0..=9`.
pub fn read_idx_labels<P: AsRef<Path>>(path: P) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let magic = read_be_u32(&bytes, 0, "label magic")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Format(format!("expected label magic {IDX_LABEL_MAGIC}, got {magic}")));
    }
    let n = read_be_u32(&bytes, 4, "label count")? as usize;
    if bytes.len() < 8 + n {
        return Err(Error::Length(format!(
            "label payload truncated: need {} bytes, file has {}",
            8 + n,
            bytes.len()
        )));
    }
    let labels = bytes[8..8 + n].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Range(format!("label {bad} outside 0..=9")));
    }
    Ok(labels)
}

/// Replaces each `block x block` tile by its arithmetic mean.
///
/// A 28x28 image pooled with `block = 2` becomes 14x14, dropping the flat
/// dimension from 784 to 196.
pub fn pool_average(image: &GrayImage, block: usize) -> Result<GrayImage> {
    if block == 0 || image.width % block != 0 || image.height % block != 0 {
        return Err(Error::Dimension(format!(
            "block {block} does not divide {}x{}",
            image.width, image.height
        )));
    }
    let (w, h) = (image.width / block, image.height / block);
    let mut pixels = Vec::with_capacity(w * h);
    for by in 0..h {
        for bx in 0..w {
            let mut acc = 0.0;
            for dy in 0..block {
                for dx in 0..block {
                    acc += image.pixels[(by * block + dy) * image.width + bx * block + dx];
                }
            }
            pixels.push(acc / (block * block) as f64);
        }
    }
    Ok(GrayImage { width: w, height: h, pixels })
}

/// Largest representable double below 1.0; intensities of exactly 1.0 are
/// clamped here so image vectors satisfy the `[0,1)` dataset invariant.
pub const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Flattens the first `limit` images row-major into points, with labels as
/// scalar responses. Coordinates equal to 1.0 become [`ONE_BELOW`].
pub fn to_dataset(images: &[GrayImage], labels: &[u8], limit: usize) -> Result<Dataset> {
    if limit > images.len() || limit > labels.len() {
        return Err(Error::Range(format!(
            "limit {limit} exceeds {} images / {} labels",
            images.len(),
            labels.len()
        )));
    }
    let points = images[..limit]
        .iter()
        .map(|img| img.pixels.iter().map(|&p| if p >= 1.0 { ONE_BELOW } else { p }).collect())
        .collect();
    let responses = labels[..limit].iter().map(|&l| f64::from(l)).collect();
    Dataset::new(points, responses)
}

/// N i.i.d. uniform points in `[0,1)^s`, deterministic in `seed`.
pub fn generate_uniform(n: usize, s: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 || s == 0 {
        return Err(Error::Range(format!("n = {n}, s = {s}: both must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| (0..s).map(|_| rng.gen::<f64>()).collect()).collect())
}

/// Adds independent N(0, sigma2) noise elementwise (`sigma2` is a variance).
pub fn add_noise(responses: &[f64], sigma2: f64, seed: u64) -> Result<Vec<f64>> {
    if sigma2 < 0.0 {
        return Err(Error::Parameter(format!("negative noise variance {sigma2}")));
    }
    if sigma2 == 0.0 {
        return Ok(responses.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma2.sqrt())
        .map_err(|e| Error::Parameter(format!("normal distribution: {e}")))?;
    Ok(responses.iter().map(|&y| y + normal.sample(&mut rng)).collect())
}

/// Writes a dataset as CSV: header `x1..xs,y`, one row per point, shortest
/// round-trip decimals (lossless through [`read_csv`]).
pub fn write_csv<P: AsRef<Path>>(dataset: &Dataset, path: P) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv_to(dataset, &mut out)
}

pub fn write_csv_to<W: Write>(dataset: &Dataset, out: &mut W) -> Result<()> {
    let header: Vec<String> =
        (1..=dataset.s).map(|j| format!("x{j}")).chain(std::iter::once("y".into())).collect();
    writeln!(out, "{}", header.join(","))?;
    for (p, y) in dataset.points.iter().zip(&dataset.responses) {
        for c in p {
            write!(out, "{c},")?;
        }
        writeln!(out, "{y}")?;
    }
    Ok(())
}

/// Reads a dataset written by [`write_csv`].
pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut points = Vec::new();
    let mut responses = Vec::new();
    for record in reader.records() {
        let record = record?;
        let fields: Vec<&str> = record.iter().collect();
        if fields.len() < 2 {
            return Err(Error::Format("dataset row needs at least one coordinate and a response".into()));
        }
        let mut row = Vec::with_capacity(fields.len() - 1);
        for f in &fields[..fields.len() - 1] {
            row.push(f.parse::<f64>().map_err(|e| Error::Format(format!("bad coordinate {f:?}: {e}")))?);
        }
        let y = fields[fields.len() - 1]
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("bad response: {e}")))?;
        points.push(row);
        responses.push(y);
    }
    Dataset::new(points, responses)
}
