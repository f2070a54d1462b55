//! Convolution by im2col lowering onto the sparse GEMM.
//!
//! The input patch matrix is laid out so its row index equals the layer's
//! GEMM column index — `(channel * kh + ki) * kw + kj` — which makes the
//! punched-column skip exact: a pruned column's patch row is simply never
//! read.

use crate::error::SparseError;
use crate::gemm::{sparse_gemm, TuningConfig};
use crate::packed::PackedSparseLayer;

/// Output spatial size for one axis.
fn out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (input + 2 * padding).checked_sub(kernel).map(|span| span / stride + 1)
}

/// Lowers `input` (C x H x W, row-major) to the patch matrix, patch rows
/// indexed like GEMM columns, one column per output position.
pub fn im2col(
    input: &[f32],
    in_shape: (usize, usize, usize),
    kernel: (usize, usize),
    stride: usize,
    padding: usize,
    out_spatial: (usize, usize),
) -> Vec<f32> {
    let (c_in, h, w) = in_shape;
    let (kh, kw) = kernel;
    let (ho, wo) = out_spatial;
    let positions = ho * wo;
    let mut cols = vec![0f32; c_in * kh * kw * positions];
    for c in 0..c_in {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for ow in 0..wo {
                        let iw = (ow * stride + kj) as isize - padding as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        cols[row * positions + oh * wo + ow] =
                            input[(c * h + ih as usize) * w + iw as usize];
                    }
                }
            }
        }
    }
    cols
}

/// A convolution's output map (row-major) and its `(filters, ho, wo)` shape.
pub type ConvOutput = (Vec<f32>, (usize, usize, usize));

/// Sparse convolution of `input` (C x H x W row-major) with a packed layer.
/// Kernel size comes from the packed dims. Returns the output map (M x Ho x
/// Wo row-major) and its shape.
pub fn sparse_conv(
    packed: &PackedSparseLayer,
    input: &[f32],
    in_shape: (usize, usize, usize),
    stride: usize,
    padding: usize,
    tuning: &TuningConfig,
) -> Result<ConvOutput, SparseError> {
    let (c_in, h, w) = in_shape;
    let (filters, wc, kh, kw) = packed.dims;
    if c_in != wc || input.len() != c_in * h * w {
        return Err(SparseError::DimMismatch(format!(
            "layer `{}` expects {wc} input channels, got {c_in} ({} values for {c_in}x{h}x{w})",
            packed.layer_id,
            input.len()
        )));
    }
    if stride == 0 {
        return Err(SparseError::DimMismatch(format!(
            "layer `{}` has zero stride",
            packed.layer_id
        )));
    }
    let (ho, wo) = match (
        out_extent(h, kh, stride, padding),
        out_extent(w, kw, stride, padding),
    ) {
        (Some(ho), Some(wo)) if ho > 0 && wo > 0 => (ho, wo),
        _ => {
            return Err(SparseError::DimMismatch(format!(
                "layer `{}` kernel {kh}x{kw} does not fit {h}x{w} input (stride {stride}, padding {padding})",
                packed.layer_id
            )))
        }
    };

    let cols = im2col(input, in_shape, (kh, kw), stride, padding, (ho, wo));
    let out = sparse_gemm(packed, &cols, ho * wo, tuning)?;
    Ok((out, (filters, ho, wo)))
}
