use crate::error::GraphError;
use crate::Result;

/// Dense 4-D layer weights, row-major over `(filters, channels, kh, kw)`.
///
/// The flattened 2-D GEMM view has `filters` rows and
/// `channels * kh * kw` columns; because the storage is row-major, GEMM row
/// `m` is the contiguous slice `values[m*cols .. (m+1)*cols]` and GEMM column
/// `c` maps bijectively to
/// `(channel, kh, kw) = (c / (kh*kw), (c % (kh*kw)) / kw, c % kw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    pub layer_id: String,
    /// `(filters, in_channels, kernel_h, kernel_w)`.
    pub dims: (usize, usize, usize, usize),
    pub values: Vec<f32>,
}

impl WeightTensor {
    pub fn new(
        layer_id: impl Into<String>,
        dims: (usize, usize, usize, usize),
        values: Vec<f32>,
    ) -> Result<Self> {
        let layer_id = layer_id.into();
        let expected = dims.0 * dims.1 * dims.2 * dims.3;
        if values.len() != expected {
            return Err(GraphError::WeightMismatch {
                layer: layer_id,
                message: format!("expected {expected} values, got {}", values.len()),
            });
        }
        Ok(WeightTensor {
            layer_id,
            dims,
            values,
        })
    }

    pub fn zeros(layer_id: impl Into<String>, dims: (usize, usize, usize, usize)) -> Self {
        let len = dims.0 * dims.1 * dims.2 * dims.3;
        WeightTensor {
            layer_id: layer_id.into(),
            dims,
            values: vec![0.0; len],
        }
    }

    /// Rows of the GEMM view (number of filters).
    pub fn rows(&self) -> usize {
        self.dims.0
    }

    /// Columns of the GEMM view (`in_channels * kh * kw`).
    pub fn cols(&self) -> usize {
        self.dims.1 * self.dims.2 * self.dims.3
    }

    pub fn gemm_row(&self, m: usize) -> &[f32] {
        let cols = self.cols();
        &self.values[m * cols..(m + 1) * cols]
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols() + col]
    }

    /// GEMM column index -> `(channel, kh, kw)`.
    pub fn col_position(&self, col: usize) -> (usize, usize, usize) {
        let (_, _, kh, kw) = self.dims;
        let kernel = kh * kw;
        (col / kernel, (col % kernel) / kw, col % kw)
    }
}
