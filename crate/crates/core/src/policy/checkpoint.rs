//! Policy checkpoints: one JSON header line followed by raw little-endian parameters.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, GaussianMlp, Policy, TabularSoftmax};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FORMAT: &str = "fpg-policy";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    scalar: String,
    architecture: Architecture,
    num_params: usize,
}

/// A loaded checkpoint. Parameters are converted to the requested scalar type.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub architecture: Architecture,
    pub params: Vec<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn into_tabular(self) -> Result<TabularSoftmax<T>> {
        match self.architecture {
            Architecture::Tabular {
                n_goals,
                n_states,
                n_actions,
            } => TabularSoftmax::from_logits(n_goals, n_states, n_actions, self.params),
            Architecture::Mlp { .. } => Err(Error::Unsupported("checkpoint holds an MLP policy".into())),
        }
    }

    pub fn into_mlp(self) -> Result<GaussianMlp<T>> {
        GaussianMlp::from_architecture(&self.architecture, self.params)
    }
}

fn scalar_tag<T>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

pub fn write_checkpoint<T: Scalar, P: Policy<T>, W: Write>(policy: &P, mut out: W) -> Result<()> {
    let params = policy.params();
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        scalar: scalar_tag::<T>().into(),
        architecture: policy.architecture(),
        num_params: params.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for &p in params {
        if header.scalar == "f32" {
            out.write_all(&(p.as_f64() as f32).to_le_bytes())?;
        } else {
            out.write_all(&p.as_f64().to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: Read>(input: R) -> Result<Checkpoint<T>> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: Header =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Parse(format!("checkpoint header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Parse(format!(
            "unsupported checkpoint format {} v{}",
            header.format, header.version
        )));
    }
    if header.num_params != header.architecture.num_params() {
        return Err(Error::Parse("parameter count disagrees with architecture".into()));
    }
    let width = match header.scalar.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(Error::Parse(format!("unknown scalar type `{other}`"))),
    };
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != width * header.num_params {
        return Err(Error::Parse(format!(
            "expected {} parameter bytes, found {}",
            width * header.num_params,
            bytes.len()
        )));
    }
    let params = bytes
        .chunks_exact(width)
        .map(|c| {
            let v = if width == 4 {
                f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64
            } else {
                f64::from_le_bytes(c.try_into().expect("8 bytes"))
            };
            T::c(v)
        })
        .collect();
    Ok(Checkpoint {
        architecture: header.architecture,
        params,
    })
}

pub fn save_checkpoint<T: Scalar, P: Policy<T>>(policy: &P, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(policy, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    read_checkpoint(File::open(path)?)
}
