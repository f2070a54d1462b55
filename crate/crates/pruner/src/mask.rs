//! Punched-column prune masks and their versioned file format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::block::{grid_for, BlockConfig, BlockGrid};
use crate::error::PruneError;
use model_graph::WeightTensor;

pub const MASK_MAGIC: &[u8; 4] = b"BPMK";
pub const MASK_VERSION: u32 = 1;

/// Which columns survive in each block row-band of one layer.
///
/// Kept columns are stored per band as sorted global column indices; the
/// per-block local index lists used on disk are derived views. The punched
/// structure — within a block a column is either fully kept or fully
/// punched — holds by construction since a band's kept set applies to all of
/// its rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    pub layer_id: String,
    pub rows: usize,
    pub cols: usize,
    pub cfg: BlockConfig,
    /// `kept[band]` = strictly increasing global column indices.
    pub kept: Vec<Vec<u32>>,
}

impl PruneMask {
    /// A mask keeping every column of an `(rows, cols)` matrix.
    pub fn dense(layer_id: impl Into<String>, rows: usize, cols: usize, cfg: BlockConfig) -> Self {
        let grid = grid_for(rows, cols, cfg);
        PruneMask {
            layer_id: layer_id.into(),
            rows,
            cols,
            cfg,
            kept: vec![(0..cols as u32).collect(); grid.bands],
        }
    }

    pub fn grid(&self) -> BlockGrid {
        grid_for(self.rows, self.cols, self.cfg)
    }

    /// Checks internal consistency: band count matches the grid, indices are
    /// strictly increasing and in range.
    pub fn validate(&self) -> Result<(), PruneError> {
        let grid = self.grid();
        if self.kept.len() != grid.bands {
            return Err(PruneError::MaskFormat(format!(
                "layer `{}`: {} bands recorded, grid has {}",
                self.layer_id,
                self.kept.len(),
                grid.bands
            )));
        }
        for (band, cols) in self.kept.iter().enumerate() {
            for pair in cols.windows(2) {
                if pair[0] >= pair[1] {
                    return Err(PruneError::MaskFormat(format!(
                        "layer `{}` band {band}: kept columns not strictly increasing",
                        self.layer_id
                    )));
                }
            }
            if cols.last().is_some_and(|&c| c as usize >= self.cols) {
                return Err(PruneError::MaskFormat(format!(
                    "layer `{}` band {band}: column index out of range",
                    self.layer_id
                )));
            }
        }
        Ok(())
    }

    pub fn is_kept(&self, row: usize, col: usize) -> bool {
        let band = self.grid().band_of_row(row);
        self.kept[band].binary_search(&(col as u32)).is_ok()
    }

    /// Kept weights = sum over bands of kept columns x band height.
    pub fn kept_weights(&self) -> u64 {
        let grid = self.grid();
        self.kept
            .iter()
            .enumerate()
            .map(|(band, cols)| cols.len() as u64 * grid.band_rows(band).len() as u64)
            .sum()
    }

    pub fn total_weights(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }

    /// Flat row-major keep flags over the GEMM view.
    pub fn to_flat_keep(&self) -> Vec<bool> {
        let grid = self.grid();
        let mut keep = vec![false; self.rows * self.cols];
        for (band, cols) in self.kept.iter().enumerate() {
            for row in grid.band_rows(band) {
                for &c in cols {
                    keep[row * self.cols + c as usize] = true;
                }
            }
        }
        keep
    }

    /// Zeroes every weight outside the mask, in place.
    pub fn apply(&self, weights: &mut WeightTensor) -> Result<(), PruneError> {
        if weights.rows() != self.rows || weights.cols() != self.cols {
            return Err(PruneError::ShapeMismatch {
                layer: self.layer_id.clone(),
                message: format!(
                    "mask is {}x{}, weights are {}x{}",
                    self.rows,
                    self.cols,
                    weights.rows(),
                    weights.cols()
                ),
            });
        }
        let keep = self.to_flat_keep();
        for (value, kept) in weights.values.iter_mut().zip(keep) {
            if !kept {
                *value = 0.0;
            }
        }
        Ok(())
    }

    /// Kept columns of `band` falling in column-block `cb`, as local indices.
    pub fn local_indices(&self, band: usize, cb: usize) -> Vec<u8> {
        let range = self.grid().block_cols(cb);
        self.kept[band]
            .iter()
            .filter(|&&c| range.contains(&(c as usize)))
            .map(|&c| (c as usize - range.start) as u8)
            .collect()
    }
}

pub type MaskMap = BTreeMap<String, PruneMask>;

/// Writes masks as `BPMK v1`: magic, version, layer count, then per layer the
/// id, matrix dims, block config, and per-block local kept-column lists in
/// row-major block order.
pub fn write_masks(masks: &MaskMap, writer: &mut impl Write) -> Result<(), PruneError> {
    writer.write_all(MASK_MAGIC)?;
    writer.write_u32::<LittleEndian>(MASK_VERSION)?;
    writer.write_u32::<LittleEndian>(masks.len() as u32)?;
    for (id, mask) in masks {
        mask.validate()?;
        writer.write_u32::<LittleEndian>(id.len() as u32)?;
        writer.write_all(id.as_bytes())?;
        writer.write_u32::<LittleEndian>(mask.rows as u32)?;
        writer.write_u32::<LittleEndian>(mask.cols as u32)?;
        writer.write_u32::<LittleEndian>(mask.cfg.gm as u32)?;
        writer.write_u32::<LittleEndian>(mask.cfg.gn as u32)?;
        let grid = mask.grid();
        for band in 0..grid.bands {
            for cb in 0..grid.col_blocks {
                let local = mask.local_indices(band, cb);
                writer.write_u16::<LittleEndian>(local.len() as u16)?;
                writer.write_all(&local)?;
            }
        }
    }
    Ok(())
}

pub fn read_masks(reader: &mut impl Read) -> Result<MaskMap, PruneError> {
    let mut magic = [0u8; 4];
    read_exact(reader, &mut magic)?;
    if &magic != MASK_MAGIC {
        return Err(PruneError::BadMagic { expected: "BPMK" });
    }
    let version = reader.read_u32::<LittleEndian>().map_err(eof)?;
    if version != MASK_VERSION {
        return Err(PruneError::UnsupportedVersion(version));
    }
    let count = reader.read_u32::<LittleEndian>().map_err(eof)?;
    let mut masks = MaskMap::new();
    for _ in 0..count {
        let id_len = reader.read_u32::<LittleEndian>().map_err(eof)? as usize;
        let mut id = vec![0u8; id_len];
        read_exact(reader, &mut id)?;
        let id = String::from_utf8(id).map_err(|_| PruneError::MaskFormat("non-UTF-8 layer id".into()))?;
        let rows = reader.read_u32::<LittleEndian>().map_err(eof)? as usize;
        let cols = reader.read_u32::<LittleEndian>().map_err(eof)? as usize;
        let gm = reader.read_u32::<LittleEndian>().map_err(eof)? as usize;
        let gn = reader.read_u32::<LittleEndian>().map_err(eof)? as usize;
        let cfg = BlockConfig::new(gm, gn)
            .map_err(|_| PruneError::MaskFormat(format!("layer `{id}`: bad block config {gm}x{gn}")))?;
        let grid = grid_for(rows, cols, cfg);
        let mut kept: Vec<Vec<u32>> = vec![Vec::new(); grid.bands];
        for band in 0..grid.bands {
            for cb in 0..grid.col_blocks {
                let n = reader.read_u16::<LittleEndian>().map_err(eof)? as usize;
                let mut local = vec![0u8; n];
                read_exact(reader, &mut local)?;
                let base = (cb * gn) as u32;
                kept[band].extend(local.iter().map(|&l| base + l as u32));
            }
        }
        let mask = PruneMask { layer_id: id.clone(), rows, cols, cfg, kept };
        mask.validate()?;
        if masks.insert(id.clone(), mask).is_some() {
            return Err(PruneError::MaskFormat(format!("duplicate layer `{id}`")));
        }
    }
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(PruneError::MaskFormat("trailing bytes".into()));
    }
    Ok(masks)
}

pub fn save_masks(masks: &MaskMap, path: impl AsRef<Path>) -> Result<(), PruneError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_masks(masks, &mut writer)?;
    writer.flush()?;
    Ok(())
}

pub fn load_masks(path: impl AsRef<Path>) -> Result<MaskMap, PruneError> {
    read_masks(&mut BufReader::new(File::open(path)?))
}

fn read_exact(reader: &mut impl Read, buf: &mut [u8]) -> Result<(), PruneError> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            PruneError::Truncated
        } else {
            PruneError::Io(e)
        }
    })
}

fn eof(e: std::io::Error) -> PruneError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        PruneError::Truncated
    } else {
        PruneError::Io(e)
    }
}
