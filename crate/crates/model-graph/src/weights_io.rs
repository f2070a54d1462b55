//! Little-endian binary weight files.
//!
//! Layout: magic `BPWT`, version u32, layer count u32; then per layer:
//! id length u32 + UTF-8 id, dims as four u32 (filters, channels, kh, kw),
//! and `filters*channels*kh*kw` f32 values. Round trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::GraphError;
use crate::graph::ModelGraph;
use crate::tensor::WeightTensor;
use crate::Result;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"BPWT";
pub const WEIGHTS_VERSION: u32 = 1;

pub type WeightMap = BTreeMap<String, WeightTensor>;

pub fn save_weights(weights: &WeightMap, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    write_weights(weights, &mut writer)?;
    Ok(())
}

pub fn write_weights(weights: &WeightMap, writer: &mut impl Write) -> Result<()> {
    writer.write_all(WEIGHTS_MAGIC)?;
    writer.write_u32::<LittleEndian>(WEIGHTS_VERSION)?;
    writer.write_u32::<LittleEndian>(weights.len() as u32)?;
    for tensor in weights.values() {
        writer.write_u32::<LittleEndian>(tensor.layer_id.len() as u32)?;
        writer.write_all(tensor.layer_id.as_bytes())?;
        let (m, n, kh, kw) = tensor.dims;
        for dim in [m, n, kh, kw] {
            writer.write_u32::<LittleEndian>(dim as u32)?;
        }
        for &v in &tensor.values {
            writer.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

/// Loads weights and checks every declared shape against `model`. Every weight
/// layer of the model must be present in the file.
pub fn load_weights(path: impl AsRef<Path>, model: &ModelGraph) -> Result<WeightMap> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    read_weights(&mut reader, model)
}

pub fn read_weights(reader: &mut impl Read, model: &ModelGraph) -> Result<WeightMap> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(|_| GraphError::Truncated)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(GraphError::BadMagic { expected: "BPWT" });
    }
    let version = reader.read_u32::<LittleEndian>().map_err(|_| GraphError::Truncated)?;
    if version != WEIGHTS_VERSION {
        return Err(GraphError::UnsupportedVersion(version));
    }
    let count = reader.read_u32::<LittleEndian>().map_err(|_| GraphError::Truncated)? as usize;
    let mut weights = WeightMap::new();
    for _ in 0..count {
        let id_len = reader.read_u32::<LittleEndian>().map_err(|_| GraphError::Truncated)? as usize;
        let mut id_bytes = vec![0u8; id_len];
        reader.read_exact(&mut id_bytes).map_err(|_| GraphError::Truncated)?;
        let layer_id = String::from_utf8(id_bytes).map_err(|_| GraphError::Truncated)?;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = reader.read_u32::<LittleEndian>().map_err(|_| GraphError::Truncated)? as usize;
        }
        let layer = model
            .layer(&layer_id)
            .ok_or_else(|| GraphError::WeightMismatch {
                layer: layer_id.clone(),
                message: "not a layer of this model".into(),
            })?;
        let shape = layer
            .weight_shape
            .as_ref()
            .ok_or_else(|| GraphError::WeightMismatch {
                layer: layer_id.clone(),
                message: "layer carries no weights".into(),
            })?;
        let declared = (shape.filters, shape.in_channels, shape.kernel_h, shape.kernel_w);
        if (dims[0], dims[1], dims[2], dims[3]) != declared {
            return Err(GraphError::WeightMismatch {
                layer: layer_id,
                message: format!("declared dims {dims:?} do not match model {declared:?}"),
            });
        }
        let len = dims.iter().product::<usize>();
        let mut values = vec![0.0f32; len];
        reader
            .read_f32_into::<LittleEndian>(&mut values)
            .map_err(|_| GraphError::Truncated)?;
        if weights
            .insert(layer_id.clone(), WeightTensor::new(layer_id.clone(), declared, values)?)
            .is_some()
        {
            return Err(GraphError::WeightMismatch {
                layer: layer_id,
                message: "duplicate weight record".into(),
            });
        }
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing).map_err(GraphError::Io)? != 0 {
        return Err(GraphError::Truncated);
    }
    for layer in model.weight_layers() {
        if !weights.contains_key(&layer.id) {
            return Err(GraphError::WeightMismatch {
                layer: layer.id.clone(),
                message: "missing from weight file".into(),
            });
        }
    }
    Ok(weights)
}
