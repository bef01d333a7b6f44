//! Binary checkpoint container for [`ModelParams`].
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "MMDN"
//! version      u32      CHECKPOINT_VERSION
//! num_layers   u32
//! per layer:
//!   out_dim    u32
//!   in_dim     u32
//!   activation u8       0 identity, 1 tanh, 2 relu
//!   weight     out_dim·in_dim × f64, row-major
//!   bias       out_dim × f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Layer, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MMDN";

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(params.layers().len() as u32).to_le_bytes())?;
    for layer in params.layers() {
        out.write_all(&(layer.output_dim() as u32).to_le_bytes())?;
        out.write_all(&(layer.input_dim() as u32).to_le_bytes())?;
        out.write_all(&[layer.activation.code()])?;
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

fn malformed(msg: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into())
}

fn read_u32<R: Read>(input: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    (0..n)
        .map(|_| {
            input.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        })
        .collect()
}

pub fn read_checkpoint<R: Read>(mut input: R) -> std::io::Result<ModelParams> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(malformed("not a model checkpoint"));
    }
    let version = read_u32(&mut input)?;
    if version != CHECKPOINT_VERSION {
        return Err(malformed(format!("unsupported checkpoint version {version}")));
    }
    let num_layers = read_u32(&mut input)? as usize;
    let mut layers = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let out_dim = read_u32(&mut input)? as usize;
        let in_dim = read_u32(&mut input)? as usize;
        let mut code = [0u8; 1];
        input.read_exact(&mut code)?;
        let activation =
            Activation::from_code(code[0]).ok_or_else(|| malformed(format!("unknown activation code {}", code[0])))?;
        let weight = Array2::from_shape_vec((out_dim, in_dim), read_f64s(&mut input, out_dim * in_dim)?)
            .map_err(|e| malformed(e.to_string()))?;
        let bias = Array1::from(read_f64s(&mut input, out_dim)?);
        layers.push(Layer {
            weight,
            bias,
            activation,
        });
    }
    ModelParams::from_layers(layers).map_err(|e| malformed(e.to_string()))
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    write_checkpoint(params, BufWriter::new(file)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_checkpoint(BufReader::new(file)).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}
