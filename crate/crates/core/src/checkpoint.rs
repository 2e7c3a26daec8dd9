//! Binary model checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MUSE" | u32 version | u8 kind | f64 sigma | u32 layer count
//! per layer:  u32 rows | u32 cols | u8 activation | rows*cols f64 | rows f64
//! u8 head flag, followed by one more layer when set
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::energy::{Model, ModelKind};
use crate::error::{MuseError, Result};
use crate::nn::{Activation, Dense, MlpParams};

const MAGIC: &[u8; 4] = b"MUSE";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_model(model: &Model) -> Vec<u8> {
    let net = model.net();
    let mut out = Vec::with_capacity(32 + 8 * net.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(model.kind().code());
    out.extend_from_slice(&model.sigma().to_le_bytes());
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        encode_layer(layer, &mut out);
    }
    match &net.scalar_head {
        Some(head) => {
            out.push(1);
            encode_layer(head, &mut out);
        }
        None => out.push(0),
    }
    out
}

fn encode_layer(layer: &Dense, out: &mut Vec<u8>) {
    out.extend_from_slice(&(layer.weight.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(layer.weight.ncols() as u32).to_le_bytes());
    out.push(layer.activation.code());
    for v in layer.weight.iter().chain(layer.bias.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt<T>(msg: impl Into<String>) -> Result<T> {
    Err(MuseError::CorruptCheckpoint(msg.into()))
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return corrupt(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn layer(&mut self) -> Result<Dense> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let act = self.u8()?;
        let Some(activation) = Activation::from_code(act) else {
            return corrupt(format!("unknown activation code {act}"));
        };
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.saturating_add(rows).saturating_mul(8) <= self.bytes.len() - self.pos);
        let Some(n) = n else {
            return corrupt(format!("truncated {rows}x{cols} layer"));
        };
        let w: Vec<f64> = (0..n).map(|_| self.f64()).collect::<Result<_>>()?;
        let b: Vec<f64> = (0..rows).map(|_| self.f64()).collect::<Result<_>>()?;
        let weight = Array2::from_shape_vec((rows, cols), w).expect("length checked");
        Dense::new(weight, Array1::from(b), activation)
            .map_err(|e| MuseError::CorruptCheckpoint(e.to_string()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return corrupt("bad magic bytes");
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return corrupt(format!("unsupported version {version}"));
    }
    let code = r.u8()?;
    let Some(kind) = ModelKind::from_code(code) else {
        return corrupt(format!("unknown model kind {code}"));
    };
    let sigma = r.f64()?;
    let count = r.u32()? as usize;
    let mut layers = Vec::new();
    for _ in 0..count {
        layers.push(r.layer()?);
    }
    let head = match r.u8()? {
        0 => None,
        1 => Some(r.layer()?),
        f => return corrupt(format!("bad head flag {f}")),
    };
    if r.pos != bytes.len() {
        return corrupt("trailing bytes after model");
    }
    let net = MlpParams::new(layers, head).map_err(|e| MuseError::CorruptCheckpoint(e.to_string()))?;
    Model::from_parts(kind, net, sigma).map_err(|e| MuseError::CorruptCheckpoint(e.to_string()))
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| MuseError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| MuseError::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{EnergyVariant, ModelSpec, ScoreVariant};

    fn models() -> Vec<Model> {
        [
            ModelKind::Energy(EnergyVariant::E1),
            ModelKind::Energy(EnergyVariant::E2),
            ModelKind::Energy(EnergyVariant::E3),
            ModelKind::Score(ScoreVariant::Unconstrained),
            ModelKind::Score(ScoreVariant::Contractive),
        ]
        .into_iter()
        .map(|k| ModelSpec::new(k, 6, 2).init(3, 0.3, 11).unwrap())
        .collect()
    }

    #[test]
    fn round_trip_is_exact() {
        for m in models() {
            assert_eq!(decode_model(&encode_model(&m)).unwrap(), m);
        }
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = encode_model(&models()[1]);
        for cut in 0..bytes.len() {
            assert!(matches!(
                decode_model(&bytes[..cut]),
                Err(MuseError::CorruptCheckpoint(_))
            ));
        }
    }

    #[test]
    fn bad_header_is_rejected() {
        let mut bytes = encode_model(&models()[0]);
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(MuseError::CorruptCheckpoint(_))));
        let mut bytes = encode_model(&models()[0]);
        bytes[4] = 9;
        let err = decode_model(&bytes).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
