use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Dense, Mlp};
use super::model::{DeepONetModel, Normalization};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "deeponet";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    branch_sizes: Vec<usize>,
    trunk_sizes: Vec<usize>,
    p: usize,
    m: usize,
    activation: Activation,
    normalization: Normalization,
}

/// Writes a one-line JSON header, a newline, then every weight and bias as
/// little-endian f64 (branch layers first, each layer weights then bias).
pub fn save_model(model: &DeepONetModel, path: &Path) -> Result<()> {
    let header = Header {
        format: FORMAT_NAME.into(),
        format_version: FORMAT_VERSION,
        branch_sizes: model.branch.sizes(),
        trunk_sizes: model.trunk.sizes(),
        p: model.p(),
        m: model.m(),
        activation: model.branch.activation,
        normalization: model.norm.clone(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for layer in model.branch.layers.iter().chain(&model.trunk.layers) {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn read_net(
    sizes: &[usize],
    activation: Activation,
    bytes: &[u8],
    cursor: &mut usize,
    base: usize,
) -> Result<Mlp> {
    let mut take = |count: usize| -> Result<Vec<f64>> {
        let need = count * 8;
        if bytes.len() - *cursor < need {
            return Err(parse_err(
                base + bytes.len(),
                format!(
                    "payload truncated: {} more bytes expected",
                    need - (bytes.len() - *cursor)
                ),
            ));
        }
        let out = bytes[*cursor..*cursor + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        *cursor += need;
        Ok(out)
    };
    let mut layers = Vec::new();
    for w in sizes.windows(2) {
        let weights =
            Array2::from_shape_vec((w[1], w[0]), take(w[0] * w[1])?).expect("length matches shape");
        let bias = Array1::from(take(w[1])?);
        layers.push(Dense { weights, bias });
    }
    Ok(Mlp { layers, activation })
}

pub fn load_model(path: &Path) -> Result<DeepONetModel> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| parse_err(bytes.len(), "header line is not terminated"))?;
    let head = &bytes[..newline];
    let json_offset = |e: &serde_json::Error| e.column().saturating_sub(1);
    let raw: serde_json::Value =
        serde_json::from_slice(head).map_err(|e| parse_err(json_offset(&e), e.to_string()))?;
    if raw.get("format").and_then(|v| v.as_str()) != Some(FORMAT_NAME) {
        return Err(parse_err(0, "not a DeepONet model file"));
    }
    let version = raw.get("format_version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        return Err(Error::UnsupportedVersion {
            found: version.map_or(0, |v| v as u32),
            expected: FORMAT_VERSION,
        });
    }
    let header: Header =
        serde_json::from_slice(head).map_err(|e| parse_err(json_offset(&e), e.to_string()))?;

    let consistent = header.branch_sizes.len() >= 2
        && header.trunk_sizes.len() >= 2
        && header.branch_sizes[0] == header.m
        && header.trunk_sizes[0] == 2
        && header.branch_sizes.last() == Some(&header.p)
        && header.trunk_sizes.last() == Some(&header.p)
        && header.normalization.sensor_mean.len() == header.m
        && header.normalization.sensor_std.len() == header.m
        && header
            .branch_sizes
            .iter()
            .chain(&header.trunk_sizes)
            .all(|&s| s > 0);
    if !consistent {
        return Err(parse_err(
            0,
            "header describes an inconsistent architecture",
        ));
    }

    let base = newline + 1;
    let payload = &bytes[base..];
    let mut cursor = 0;
    let branch = read_net(
        &header.branch_sizes,
        header.activation,
        payload,
        &mut cursor,
        base,
    )?;
    let trunk = read_net(
        &header.trunk_sizes,
        header.activation,
        payload,
        &mut cursor,
        base,
    )?;
    if cursor != payload.len() {
        return Err(parse_err(base + cursor, "unexpected trailing bytes"));
    }
    Ok(DeepONetModel {
        branch,
        trunk,
        norm: header.normalization,
    })
}
