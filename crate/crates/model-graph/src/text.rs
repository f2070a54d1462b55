//! Human-readable model format, one layer per record.
//!
//! ```text
//! blockpunch-model v1
//! input 3 320 320
//! layer id=c1 kind=conv filters=32 in_channels=3 kernel=3x3 stride=1 padding=1 inputs=
//! layer id=j1 kind=concat inputs=c1,c2
//! structure kind=conv-branches copy_bytes=4096 branch=c1 branch=c2
//! ```
//!
//! `#` starts a comment line; key=value tokens may appear in any order. The
//! renderer emits the canonical field order so fixtures diff cleanly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::GraphError;
use crate::graph::ModelGraph;
use crate::layer::{BranchKind, BranchStructure, LayerKind, LayerSpec, WeightShape};
use crate::Result;

pub const MODEL_MAGIC: &str = "blockpunch-model";
pub const MODEL_VERSION: u32 = 1;

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelGraph> {
    parse_model(&std::fs::read_to_string(path)?)
}

pub fn save_model(model: &ModelGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_model(model))?;
    Ok(())
}

pub fn parse_model(text: &str) -> Result<ModelGraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line_no, header) = lines.next().ok_or(GraphError::BadMagic {
        expected: MODEL_MAGIC,
    })?;
    parse_header(line_no, header)?;

    let mut input_shape = None;
    let mut layers = Vec::new();
    let mut structures = Vec::new();
    for (line_no, line) in lines {
        let mut tokens = line.split_whitespace();
        let record = tokens.next().unwrap();
        match record {
            "input" => {
                let dims: Vec<usize> = tokens
                    .map(|t| {
                        t.parse().map_err(|_| GraphError::Parse {
                            line: line_no,
                            message: format!("bad input dimension `{t}`"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if dims.len() != 3 {
                    return Err(GraphError::Parse {
                        line: line_no,
                        message: "input takes exactly 3 dimensions".into(),
                    });
                }
                input_shape = Some((dims[0], dims[1], dims[2]));
            }
            "layer" => layers.push(parse_layer(line_no, tokens)?),
            "structure" => structures.push(parse_structure(line_no, tokens)?),
            other => {
                return Err(GraphError::Parse {
                    line: line_no,
                    message: format!("unknown record `{other}`"),
                })
            }
        }
    }

    let input_shape = input_shape.ok_or(GraphError::Parse {
        line: 0,
        message: "missing `input` record".into(),
    })?;
    ModelGraph::new(layers, structures, input_shape)
}

fn parse_header(line: usize, header: &str) -> Result<()> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MODEL_MAGIC) {
        return Err(GraphError::BadMagic {
            expected: MODEL_MAGIC,
        });
    }
    match parts.next().and_then(|v| v.strip_prefix('v')) {
        Some(v) => {
            let version: u32 = v.parse().map_err(|_| GraphError::Parse {
                line,
                message: format!("bad version `{v}`"),
            })?;
            if version != MODEL_VERSION {
                return Err(GraphError::UnsupportedVersion(version));
            }
            Ok(())
        }
        None => Err(GraphError::Parse {
            line,
            message: "missing format version".into(),
        }),
    }
}

fn split_fields<'a>(
    line_no: usize,
    tokens: impl Iterator<Item = &'a str>,
) -> Result<(HashMap<&'a str, &'a str>, Vec<&'a str>)> {
    let mut fields = HashMap::new();
    let mut branches = Vec::new();
    for token in tokens {
        let (key, value) = token.split_once('=').ok_or_else(|| GraphError::Parse {
            line: line_no,
            message: format!("expected key=value, got `{token}`"),
        })?;
        // `branch=` may repeat; everything else is single-valued.
        if key == "branch" {
            branches.push(value);
        } else if fields.insert(key, value).is_some() {
            return Err(GraphError::Parse {
                line: line_no,
                message: format!("duplicate field `{key}`"),
            });
        }
    }
    Ok((fields, branches))
}

fn parse_count(line: usize, fields: &HashMap<&str, &str>, key: &str) -> Result<usize> {
    let raw = fields.get(key).ok_or_else(|| GraphError::Parse {
        line,
        message: format!("missing field `{key}`"),
    })?;
    raw.parse().map_err(|_| GraphError::Parse {
        line,
        message: format!("bad value for `{key}`: `{raw}`"),
    })
}

fn parse_id_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_layer<'a>(line_no: usize, tokens: impl Iterator<Item = &'a str>) -> Result<LayerSpec> {
    let (fields, _) = split_fields(line_no, tokens)?;
    let id = *fields.get("id").ok_or_else(|| GraphError::Parse {
        line: line_no,
        message: "layer is missing `id`".into(),
    })?;
    let kind_str = *fields.get("kind").ok_or_else(|| GraphError::Parse {
        line: line_no,
        message: "layer is missing `kind`".into(),
    })?;
    let kind = LayerKind::from_str(kind_str).ok_or_else(|| GraphError::UnknownLayerKind {
        line: line_no,
        kind: kind_str.to_string(),
    })?;
    let inputs = parse_id_list(fields.get("inputs").copied().unwrap_or(""));
    let weight_shape = if kind.has_weights() {
        let kernel_raw = fields.get("kernel").copied().unwrap_or("1x1");
        let (kh, kw) = kernel_raw
            .split_once('x')
            .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
            .ok_or_else(|| GraphError::Parse {
                line: line_no,
                message: format!("bad kernel `{kernel_raw}`"),
            })?;
        Some(WeightShape {
            filters: parse_count(line_no, &fields, "filters")?,
            in_channels: parse_count(line_no, &fields, "in_channels")?,
            kernel_h: kh,
            kernel_w: kw,
        })
    } else {
        None
    };
    let default_stride = if kind == LayerKind::Upsample { 2 } else { 1 };
    let stride = match fields.get("stride") {
        Some(_) => parse_count(line_no, &fields, "stride")?,
        None => default_stride,
    };
    let padding = match fields.get("padding") {
        Some(_) => parse_count(line_no, &fields, "padding")?,
        None => 0,
    };
    Ok(LayerSpec {
        id: id.to_string(),
        kind,
        weight_shape,
        stride,
        padding,
        inputs,
    })
}

fn parse_structure<'a>(
    line_no: usize,
    tokens: impl Iterator<Item = &'a str>,
) -> Result<BranchStructure> {
    let (fields, branch_fields) = split_fields(line_no, tokens)?;
    let kind_str = *fields.get("kind").ok_or_else(|| GraphError::Parse {
        line: line_no,
        message: "structure is missing `kind`".into(),
    })?;
    let kind = BranchKind::from_str(kind_str).ok_or_else(|| GraphError::Parse {
        line: line_no,
        message: format!("unknown structure kind `{kind_str}`"),
    })?;
    let copy_bytes = match fields.get("copy_bytes") {
        Some(raw) => raw.parse().map_err(|_| GraphError::Parse {
            line: line_no,
            message: format!("bad value for `copy_bytes`: `{raw}`"),
        })?,
        None => 0,
    };
    if branch_fields.is_empty() {
        return Err(GraphError::Parse {
            line: line_no,
            message: "structure needs at least one `branch=`".into(),
        });
    }
    Ok(BranchStructure {
        kind,
        branches: branch_fields.into_iter().map(parse_id_list).collect(),
        copy_bytes,
    })
}

pub fn render_model(model: &ModelGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_MAGIC} v{MODEL_VERSION}");
    let (c, h, w) = model.input_shape;
    let _ = writeln!(out, "input {c} {h} {w}");
    for layer in &model.layers {
        let _ = write!(out, "layer id={} kind={}", layer.id, layer.kind);
        if let Some(shape) = &layer.weight_shape {
            let _ = write!(
                out,
                " filters={} in_channels={} kernel={}x{}",
                shape.filters, shape.in_channels, shape.kernel_h, shape.kernel_w
            );
        }
        let _ = write!(out, " stride={} padding={}", layer.stride, layer.padding);
        let _ = writeln!(out, " inputs={}", layer.inputs.join(","));
    }
    for structure in &model.branch_structures {
        let _ = write!(
            out,
            "structure kind={} copy_bytes={}",
            structure.kind.as_str(),
            structure.copy_bytes
        );
        for branch in &structure.branches {
            let _ = write!(out, " branch={}", branch.join(","));
        }
        let _ = writeln!(out);
    }
    out
}
