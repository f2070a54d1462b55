use std::fmt;

/// What a layer computes. Only `Conv` and `Fc` carry weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Fc,
    PointwiseAdd,
    PointwiseMul,
    Concat,
    Upsample,
    TransposeReshape,
}

impl LayerKind {
    pub fn has_weights(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Fc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Fc => "fc",
            LayerKind::PointwiseAdd => "pointwise-add",
            LayerKind::PointwiseMul => "pointwise-mul",
            LayerKind::Concat => "concat",
            LayerKind::Upsample => "upsample",
            LayerKind::TransposeReshape => "transpose-reshape",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        Some(match s {
            "conv" => LayerKind::Conv,
            "fc" => LayerKind::Fc,
            "pointwise-add" => LayerKind::PointwiseAdd,
            "pointwise-mul" => LayerKind::PointwiseMul,
            "concat" => LayerKind::Concat,
            "upsample" => LayerKind::Upsample,
            "transpose-reshape" => LayerKind::TransposeReshape,
            _ => return None,
        })
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 4-D weight shape of a conv/fc layer: `filters x in_channels x kh x kw`.
/// FC layers are the 1x1-kernel special case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightShape {
    pub filters: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
}

impl WeightShape {
    pub fn weight_count(&self) -> u64 {
        self.filters as u64 * self.in_channels as u64 * self.kernel_h as u64 * self.kernel_w as u64
    }

    /// Columns of the flattened 2-D GEMM view.
    pub fn gemm_cols(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn is_3x3(&self) -> bool {
        self.kernel_h == 3 && self.kernel_w == 3
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub weight_shape: Option<WeightShape>,
    /// Conv stride; for `upsample` this is the integer scale factor.
    pub stride: usize,
    pub padding: usize,
    /// Ids of the layers feeding this one. Empty means the model input.
    pub inputs: Vec<String>,
}

impl LayerSpec {
    pub fn conv(
        id: impl Into<String>,
        filters: usize,
        in_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        inputs: Vec<String>,
    ) -> Self {
        LayerSpec {
            id: id.into(),
            kind: LayerKind::Conv,
            weight_shape: Some(WeightShape {
                filters,
                in_channels,
                kernel_h: kernel.0,
                kernel_w: kernel.1,
            }),
            stride,
            padding,
            inputs,
        }
    }

    pub fn fc(id: impl Into<String>, filters: usize, in_features: usize, inputs: Vec<String>) -> Self {
        LayerSpec {
            id: id.into(),
            kind: LayerKind::Fc,
            weight_shape: Some(WeightShape {
                filters,
                in_channels: in_features,
                kernel_h: 1,
                kernel_w: 1,
            }),
            stride: 1,
            padding: 0,
            inputs,
        }
    }

    pub fn plain(id: impl Into<String>, kind: LayerKind, inputs: Vec<String>) -> Self {
        LayerSpec {
            id: id.into(),
            kind,
            weight_shape: None,
            stride: if kind == LayerKind::Upsample { 2 } else { 1 },
            padding: 0,
            inputs,
        }
    }
}

/// Which decision rule a branch structure is scheduled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    /// A fork of CONV-heavy branches (CSP-style block); exactly two branches.
    ConvBranches,
    /// Independent non-CONV tails (head structures); up to 2^k enumeration.
    NonConvBranches,
}

impl BranchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchKind::ConvBranches => "conv-branches",
            BranchKind::NonConvBranches => "nonconv-branches",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        Some(match s {
            "conv-branches" => BranchKind::ConvBranches,
            "nonconv-branches" => BranchKind::NonConvBranches,
            _ => return None,
        })
    }
}

/// A set of mutually independent layer sequences between a fork and a join.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchStructure {
    pub kind: BranchKind,
    /// Each branch is a sequence of layer ids, in execution order.
    pub branches: Vec<Vec<String>>,
    /// Bytes that cross lanes when a branch runs on the general-purpose lane.
    pub copy_bytes: u64,
}
