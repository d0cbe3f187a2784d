//! Model serialization: a JSON header describing the model kind, its
//! configuration and every parameter's name/shape, followed by the raw `f64`
//! little-endian weight blobs in parameter-visit order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Trainable;

const MAGIC: &[u8; 8] = b"SCLERA01";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Model kind tag, e.g. `fast-yolo`, `fcn`, `segnet`, `gan-generator`.
    pub model: String,
    /// Model-specific configuration (input size, width divisor, ...).
    pub config: serde_json::Value,
    pub params: Vec<ParamInfo>,
}

/// Writes a checkpoint for `net` under the given model tag.
pub fn save(
    path: &Path,
    model: &str,
    config: serde_json::Value,
    net: &mut dyn Trainable,
) -> Result<()> {
    let mut params = Vec::new();
    net.visit_params(&mut |p| {
        params.push(ParamInfo {
            name: p.name.clone(),
            shape: p.w.shape().to_vec(),
        });
    });
    let header = CheckpointHeader {
        model: model.to_string(),
        config,
        params,
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| Error::Checkpoint(format!("header encode: {e}")))?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_u64::<LittleEndian>(json.len() as u64)?;
    out.write_all(&json)?;
    let mut io_err = None;
    net.visit_params(&mut |p| {
        if io_err.is_some() {
            return;
        }
        for &v in p.w.iter() {
            if let Err(e) = out.write_f64::<LittleEndian>(v) {
                io_err = Some(e);
                return;
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    out.flush()?;
    Ok(())
}

/// Reads only the header, without touching the weight blobs.
pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let mut input = BufReader::new(File::open(path)?);
    read_header_from(&mut input)
}

fn read_header_from(input: &mut impl Read) -> Result<CheckpointHeader> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let len = input.read_u64::<LittleEndian>()? as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("header decode: {e}")))
}

/// Loads weights into an already-constructed `net`, verifying the model tag
/// and every parameter name/shape. Returns the stored configuration.
pub fn load_into(path: &Path, model: &str, net: &mut dyn Trainable) -> Result<serde_json::Value> {
    let mut input = BufReader::new(File::open(path)?);
    let header = read_header_from(&mut input)?;
    if header.model != model {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds a `{}` model, expected `{model}`",
            header.model
        )));
    }
    let mut expected = header.params.iter();
    let mut err: Option<Error> = None;
    net.visit_params(&mut |p| {
        if err.is_some() {
            return;
        }
        let info = match expected.next() {
            Some(i) => i,
            None => {
                err = Some(Error::Checkpoint(format!(
                    "checkpoint ends before parameter `{}`",
                    p.name
                )));
                return;
            }
        };
        if info.name != p.name || info.shape != p.w.shape() {
            err = Some(Error::Checkpoint(format!(
                "parameter mismatch: checkpoint has `{}` {:?}, model expects `{}` {:?}",
                info.name,
                info.shape,
                p.name,
                p.w.shape()
            )));
            return;
        }
        for v in p.w.iter_mut() {
            match input.read_f64::<LittleEndian>() {
                Ok(x) => *v = x,
                Err(e) => {
                    err = Some(e.into());
                    return;
                }
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if expected.next().is_some() {
        return Err(Error::Checkpoint(
            "checkpoint holds more parameters than the model".into(),
        ));
    }
    Ok(header.config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Conv2d, Layer, Sequential, WeightInit};

    fn tiny_net(seed: u64) -> Sequential {
        let mut init = WeightInit::new(seed);
        Sequential::new(vec![
            Box::new(Conv2d::new("a", 2, 3, 3, 1, 1, &mut init)),
            Box::new(Conv2d::new("b", 3, 1, 1, 1, 0, &mut init)),
        ])
    }

    #[test]
    fn round_trip_restores_every_weight() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut a = tiny_net(1);
        save(&path, "tiny", serde_json::json!({"k": 3}), &mut a).unwrap();
        let mut b = tiny_net(2);
        let config = load_into(&path, "tiny", &mut b).unwrap();
        assert_eq!(config["k"], 3);
        let mut wa = Vec::new();
        Trainable::visit_params(&mut a, &mut |p| wa.extend(p.w.iter().copied()));
        let mut wb = Vec::new();
        Trainable::visit_params(&mut b, &mut |p| wb.extend(p.w.iter().copied()));
        assert_eq!(wa, wb);
    }

    #[test]
    fn wrong_model_tag_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut a = tiny_net(1);
        save(&path, "tiny", serde_json::Value::Null, &mut a).unwrap();
        let mut b = tiny_net(1);
        assert!(load_into(&path, "other", &mut b).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut a = tiny_net(1);
        save(&path, "tiny", serde_json::Value::Null, &mut a).unwrap();
        let mut init = WeightInit::new(3);
        let mut b = Sequential::new(vec![Box::new(Conv2d::new("a", 2, 4, 3, 1, 1, &mut init))
            as Box<dyn Layer>]);
        assert!(load_into(&path, "tiny", &mut b).is_err());
    }

    #[test]
    fn header_is_readable_alone() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut a = tiny_net(1);
        save(&path, "tiny", serde_json::json!({"w": 8}), &mut a).unwrap();
        let h = read_header(&path).unwrap();
        assert_eq!(h.model, "tiny");
        assert_eq!(h.params.len(), 4); // two convs, weight + bias each
    }
}
