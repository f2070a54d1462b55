//! Packed-layer container file (`BPCR v1`).
//!
//! Little-endian throughout: magic `BPCR`, u32 version, u32 layer count,
//! then per layer the id (u32 length + UTF-8 bytes), four u32 dense dims
//! `(filters, channels, kh, kw)`, u32 `gm`, u32 `gn`, u16 band permutation
//! entries (one per band, bands = ceil(filters/gm)), u8 kept counts (one per
//! block, physical band-major), the concatenated u8 in-block column indices,
//! and the packed f32 values. Counts and dims fix every array length, so the
//! file needs no offsets; anything left over after the last layer is an
//! error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use pruner::BlockConfig;

use crate::error::SparseError;
use crate::packed::{grid_of, PackedSparseLayer};

pub const PACKED_MAGIC: &[u8; 4] = b"BPCR";
pub const PACKED_VERSION: u32 = 1;

/// A model's packed layers, keyed by layer id.
pub type PackedModel = BTreeMap<String, PackedSparseLayer>;

pub fn write_packed(layers: &PackedModel, writer: &mut impl Write) -> Result<(), SparseError> {
    writer.write_all(PACKED_MAGIC)?;
    writer.write_u32::<LittleEndian>(PACKED_VERSION)?;
    writer.write_u32::<LittleEndian>(layers.len() as u32)?;
    for (id, layer) in layers {
        layer.validate()?;
        if layer.block_order.len() > u16::MAX as usize {
            return Err(SparseError::CorruptLayer {
                layer: id.clone(),
                message: format!("{} bands exceed the format's u16 limit", layer.block_order.len()),
            });
        }
        writer.write_u32::<LittleEndian>(id.len() as u32)?;
        writer.write_all(id.as_bytes())?;
        let (f, c, kh, kw) = layer.dims;
        for dim in [f, c, kh, kw] {
            writer.write_u32::<LittleEndian>(dim as u32)?;
        }
        writer.write_u32::<LittleEndian>(layer.cfg.gm as u32)?;
        writer.write_u32::<LittleEndian>(layer.cfg.gn as u32)?;
        for &band in &layer.block_order {
            writer.write_u16::<LittleEndian>(band as u16)?;
        }
        writer.write_all(&layer.counts)?;
        writer.write_all(&layer.locals)?;
        for &v in &layer.values {
            writer.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_packed(reader: &mut impl Read) -> Result<PackedModel, SparseError> {
    let mut magic = [0u8; 4];
    read_exact(reader, &mut magic, "magic")?;
    if &magic != PACKED_MAGIC {
        return Err(SparseError::BadMagic);
    }
    let version = reader.read_u32::<LittleEndian>().map_err(|_| eof("version"))?;
    if version != PACKED_VERSION {
        return Err(SparseError::UnsupportedVersion(version.min(255) as u8));
    }
    let count = reader.read_u32::<LittleEndian>().map_err(|_| eof("layer count"))?;
    let mut layers = PackedModel::new();
    for _ in 0..count {
        let id_len = reader.read_u32::<LittleEndian>().map_err(|_| eof("id length"))? as usize;
        let mut id = vec![0u8; id_len];
        read_exact(reader, &mut id, "layer id")?;
        let id = String::from_utf8(id).map_err(|_| SparseError::CorruptLayer {
            layer: "?".into(),
            message: "non-UTF-8 layer id".into(),
        })?;
        let corrupt = |message: String| SparseError::CorruptLayer {
            layer: id.clone(),
            message,
        };

        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = reader.read_u32::<LittleEndian>().map_err(|_| eof("dims"))? as usize;
        }
        let dims = (dims[0], dims[1], dims[2], dims[3]);
        let gm = reader.read_u32::<LittleEndian>().map_err(|_| eof("block config"))? as usize;
        let gn = reader.read_u32::<LittleEndian>().map_err(|_| eof("block config"))? as usize;
        let cfg = BlockConfig::new(gm, gn)
            .map_err(|_| corrupt(format!("bad block config {gm}x{gn}")))?;

        let rows = dims.0;
        let cols = dims.1 * dims.2 * dims.3;
        if rows == 0 || cols == 0 {
            return Err(corrupt("empty dimensions".into()));
        }
        let grid = grid_of(rows, cols, cfg);

        let mut block_order = Vec::with_capacity(grid.bands);
        for _ in 0..grid.bands {
            block_order.push(reader.read_u16::<LittleEndian>().map_err(|_| eof("permutation"))? as u32);
        }
        let tiles = grid.bands * grid.col_blocks;
        let mut counts = vec![0u8; tiles];
        read_exact(reader, &mut counts, "block counts")?;

        let total_locals: usize = counts.iter().map(|&c| c as usize).sum();
        let mut locals = vec![0u8; total_locals];
        read_exact(reader, &mut locals, "column indices")?;

        // Offsets are implied: each block's run is count x its band's rows.
        let mut offsets = Vec::with_capacity(tiles + 1);
        offsets.push(0u32);
        for p in 0..grid.bands {
            let band = *block_order.get(p).unwrap() as usize;
            if band >= grid.bands {
                return Err(corrupt(format!("permutation entry {band} out of range")));
            }
            let band_rows = grid.band_rows(band).len() as u32;
            for cb in 0..grid.col_blocks {
                let run = counts[p * grid.col_blocks + cb] as u32 * band_rows;
                offsets.push(offsets.last().unwrap() + run);
            }
        }
        let mut values = vec![0f32; *offsets.last().unwrap() as usize];
        for v in &mut values {
            *v = reader.read_f32::<LittleEndian>().map_err(|_| eof("values"))?;
        }

        let layer = PackedSparseLayer {
            layer_id: id.clone(),
            dims,
            cfg,
            block_order,
            counts,
            locals,
            offsets,
            values,
        };
        layer.validate()?;
        if layers.insert(id.clone(), layer).is_some() {
            return Err(corrupt("duplicate layer".into()));
        }
    }
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(SparseError::TrailingBytes);
    }
    Ok(layers)
}

pub fn save_packed(layers: &PackedModel, path: impl AsRef<Path>) -> Result<(), SparseError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_packed(layers, &mut writer)?;
    writer.flush()?;
    Ok(())
}

pub fn load_packed(path: impl AsRef<Path>) -> Result<PackedModel, SparseError> {
    read_packed(&mut BufReader::new(File::open(path)?))
}

fn eof(what: &str) -> SparseError {
    SparseError::Truncated(what.into())
}

fn read_exact(reader: &mut impl Read, buf: &mut [u8], what: &str) -> Result<(), SparseError> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            eof(what)
        } else {
            SparseError::Io(e)
        }
    })
}
