//! Synthetic two-class image task and its dataset file format.
//!
//! Samples are single-channel 12x12 images of sinusoidal gratings. Class 0
//! is oriented near-horizontal (stripe normal within +/-40 degrees of the
//! row axis), class 1 near-vertical, leaving a 10-degree separation margin
//! between the classes' orientation ranges. Random orientation within the
//! class range, random phase, amplitude jitter, and additive Gaussian noise
//! make the decision depend on estimating dominant orientation across a
//! band of angles — a task that needs a small bank of oriented filters
//! rather than one lucky kernel, so pruning schemes separate by how much
//! of that bank their structure lets them keep. A noiseless sample's
//! horizontal-vs-vertical gradient energy ratio equals tan^2(theta), so the
//! classes are cleanly separable by design.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::PruneError;

pub const DATASET_MAGIC: &[u8; 4] = b"BPDS";
pub const DATASET_VERSION: u32 = 1;

pub const IMAGE_SIDE: usize = 12;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Row-major 12x12 pixel values, one image per sample.
    pub images: Vec<Vec<f32>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Half-width of each class's orientation range, radians (40 degrees).
const ORIENTATION_SPREAD: f64 = 40.0 * std::f64::consts::PI / 180.0;

/// Generates `count` samples, classes alternating (balanced within one).
/// The same seed always produces identical bytes. `noise` is the Gaussian
/// sigma added per pixel — the difficulty knob the quality gates are
/// calibrated at.
pub fn gen_synthetic(seed: u64, count: usize, noise: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = (i % 2) as u8;
        // Stripe-normal angle: class 0 around the row axis, class 1 around
        // the column axis, each jittered within its +/-40 degree band.
        let base = if label == 0 { 0.0 } else { std::f64::consts::FRAC_PI_2 };
        let theta = base + rng.random_range(-ORIENTATION_SPREAD..ORIENTATION_SPREAD);
        let phase: f64 = rng.random_range(0.0..4.0);
        let amplitude: f64 = rng.random_range(0.8..1.2);
        let period: f64 = rng.random_range(3.5..4.5);
        let (sin_t, cos_t) = theta.sin_cos();
        let mut image = Vec::with_capacity(IMAGE_PIXELS);
        for row in 0..IMAGE_SIDE {
            for col in 0..IMAGE_SIDE {
                let along = row as f64 * cos_t + col as f64 * sin_t;
                let clean = amplitude * (std::f64::consts::TAU * (along + phase) / period).sin();
                // Box-Muller; two uniforms per pixel keeps the stream layout
                // independent of earlier draws.
                let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                let gauss = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                image.push((clean + noise * gauss) as f32);
            }
        }
        images.push(image);
        labels.push(label);
    }
    Dataset { images, labels }
}

/// Writes `BPDS v1`: magic, version, sample count, image side; then per
/// sample one label byte and the pixels as little-endian f32.
pub fn write_dataset(data: &Dataset, writer: &mut impl Write) -> Result<(), PruneError> {
    writer.write_all(DATASET_MAGIC)?;
    writer.write_u32::<LittleEndian>(DATASET_VERSION)?;
    writer.write_u32::<LittleEndian>(data.len() as u32)?;
    writer.write_u32::<LittleEndian>(IMAGE_SIDE as u32)?;
    for (image, &label) in data.images.iter().zip(&data.labels) {
        writer.write_u8(label)?;
        for &pixel in image {
            writer.write_f32::<LittleEndian>(pixel)?;
        }
    }
    Ok(())
}

pub fn read_dataset(reader: &mut impl Read) -> Result<Dataset, PruneError> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(eof)?;
    if &magic != DATASET_MAGIC {
        return Err(PruneError::BadMagic { expected: "BPDS" });
    }
    let version = reader.read_u32::<LittleEndian>().map_err(eof)?;
    if version != DATASET_VERSION {
        return Err(PruneError::UnsupportedVersion(version));
    }
    let count = reader.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let side = reader.read_u32::<LittleEndian>().map_err(eof)? as usize;
    if side != IMAGE_SIDE {
        return Err(PruneError::DataFormat(format!(
            "image side {side}, expected {IMAGE_SIDE}"
        )));
    }
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let label = reader.read_u8().map_err(eof)?;
        if label as usize >= NUM_CLASSES {
            return Err(PruneError::DataFormat(format!("label {label} out of range")));
        }
        let mut image = Vec::with_capacity(IMAGE_PIXELS);
        for _ in 0..IMAGE_PIXELS {
            image.push(reader.read_f32::<LittleEndian>().map_err(eof)?);
        }
        images.push(image);
        labels.push(label);
    }
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(PruneError::DataFormat("trailing bytes".into()));
    }
    Ok(Dataset { images, labels })
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<(), PruneError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_dataset(data, &mut writer)?;
    writer.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, PruneError> {
    read_dataset(&mut BufReader::new(File::open(path)?))
}

fn eof(e: std::io::Error) -> PruneError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        PruneError::Truncated
    } else {
        PruneError::Io(e)
    }
}
