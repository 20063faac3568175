//! Binary checkpoint layout for a single network:
//!
//! ```text
//! magic "LMNET001" | u32 n_widths | u64 widths.. | u8 hidden act.. | u8 output act
//! | per layer: f64 weights (row-major, out x in) then f64 biases
//! ```
//! All integers and floats little-endian.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{Activation, Adam, Layer, NetError, NetParams, NetSpec};

pub const NET_MAGIC: &[u8; 8] = b"LMNET001";
const ADAM_MAGIC: &[u8; 8] = b"LMADAM01";

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N], NetError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| NetError::Checkpoint(format!("truncated: {e}")))?;
    Ok(buf)
}
fn get_u32(r: &mut impl Read) -> Result<u32, NetError> {
    Ok(u32::from_le_bytes(get::<4>(r)?))
}
fn get_u64(r: &mut impl Read) -> Result<u64, NetError> {
    Ok(u64::from_le_bytes(get::<8>(r)?))
}
fn get_f64(r: &mut impl Read) -> Result<f64, NetError> {
    Ok(f64::from_le_bytes(get::<8>(r)?))
}

fn write_layers(w: &mut impl Write, layers: &[Layer]) -> std::io::Result<()> {
    for l in layers {
        for &v in l.w.iter() {
            put_f64(w, v)?;
        }
        for &v in l.b.iter() {
            put_f64(w, v)?;
        }
    }
    Ok(())
}

fn read_layers(r: &mut impl Read, spec: &NetSpec) -> Result<Vec<Layer>, NetError> {
    let mut layers = Vec::with_capacity(spec.num_layers());
    for win in spec.widths.windows(2) {
        let (input, output) = (win[0], win[1]);
        let mut w = Vec::with_capacity(input * output);
        for _ in 0..input * output {
            w.push(get_f64(r)?);
        }
        let mut b = Vec::with_capacity(output);
        for _ in 0..output {
            b.push(get_f64(r)?);
        }
        layers.push(Layer {
            w: Array2::from_shape_vec((output, input), w).expect("sized above"),
            b: Array1::from(b),
        });
    }
    Ok(layers)
}

pub fn write_net(w: &mut impl Write, params: &NetParams) -> Result<(), NetError> {
    w.write_all(NET_MAGIC)?;
    put_u32(w, params.spec.widths.len() as u32)?;
    for &width in &params.spec.widths {
        put_u64(w, width as u64)?;
    }
    for a in &params.spec.hidden {
        w.write_all(&[a.code()])?;
    }
    w.write_all(&[params.spec.output.code()])?;
    write_layers(w, &params.layers)?;
    Ok(())
}

/// Reads one network. When `expected` is given the stored spec must equal it.
pub fn read_net(r: &mut impl Read, expected: Option<&NetSpec>) -> Result<NetParams, NetError> {
    if &get::<8>(r)? != NET_MAGIC {
        return Err(NetError::Checkpoint("bad magic".into()));
    }
    let n = get_u32(r)? as usize;
    if !(2..=64).contains(&n) {
        return Err(NetError::Checkpoint(format!("implausible layer count {n}")));
    }
    let mut widths = Vec::with_capacity(n);
    for _ in 0..n {
        widths.push(get_u64(r)? as usize);
    }
    let mut hidden = Vec::with_capacity(n - 2);
    for _ in 0..n - 2 {
        let code = get::<1>(r)?[0];
        hidden.push(Activation::from_code(code).ok_or_else(|| NetError::Checkpoint(format!("unknown activation {code}")))?);
    }
    let code = get::<1>(r)?[0];
    let output = Activation::from_code(code).ok_or_else(|| NetError::Checkpoint(format!("unknown activation {code}")))?;
    let spec = NetSpec { widths, hidden, output };
    spec.validate()?;
    if let Some(exp) = expected {
        if exp != &spec {
            return Err(NetError::Checkpoint(format!(
                "shape mismatch: stored {:?}, expected {:?}",
                spec.widths, exp.widths
            )));
        }
    }
    let layers = read_layers(r, &spec)?;
    Ok(NetParams { spec, layers })
}

impl Adam {
    pub fn write(&self, w: &mut impl Write) -> Result<(), NetError> {
        w.write_all(ADAM_MAGIC)?;
        for v in [self.lr, self.beta1, self.beta2, self.eps] {
            put_f64(w, v)?;
        }
        put_u64(w, self.step_count)?;
        write_layers(w, &self.m)?;
        write_layers(w, &self.v)?;
        Ok(())
    }

    /// Reads optimizer state whose moments are shaped like `params`.
    pub fn read(r: &mut impl Read, params: &NetParams) -> Result<Self, NetError> {
        if &get::<8>(r)? != ADAM_MAGIC {
            return Err(NetError::Checkpoint("bad optimizer magic".into()));
        }
        let lr = get_f64(r)?;
        let beta1 = get_f64(r)?;
        let beta2 = get_f64(r)?;
        let eps = get_f64(r)?;
        let step_count = get_u64(r)?;
        let m = read_layers(r, &params.spec)?;
        let v = read_layers(r, &params.spec)?;
        Ok(Adam { lr, beta1, beta2, eps, step_count, m, v })
    }
}
