//! Binary model file.
//!
//! Layout (all integers u32 little-endian, all tensors f64 little-endian):
//!
//! ```text
//! "IPVAE" | version | K | d | n_hidden | hidden[n_hidden]
//! | encoder (W, b)* | mu head (W, b) | log-variance head (W, b) | decoder (W, b)*
//! | input shift[d] | input scale[d]
//! | FNV-1a 64 checksum of every preceding byte (u64)
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Architecture, InputScaling, VaeError, VaeModel};
use crate::nn::{Activation, DenseLayer, Mlp};

pub const MAGIC: &[u8; 5] = b"IPVAE";
pub const FORMAT_VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_layer(buf: &mut Vec<u8>, layer: &DenseLayer) {
    for v in layer.weights.iter().chain(&layer.bias) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_model(model: &VaeModel, out: &mut impl Write) -> Result<(), VaeError> {
    let arch = model.architecture();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut buf, arch.latent_dim);
    put_u32(&mut buf, arch.input_dim);
    put_u32(&mut buf, arch.hidden.len());
    for &h in &arch.hidden {
        put_u32(&mut buf, h);
    }
    let (mu, logvar) = model.heads();
    model
        .encoder()
        .layers()
        .iter()
        .chain([mu, logvar])
        .chain(model.decoder().layers())
        .for_each(|l| put_layer(&mut buf, l));
    for v in model.scaling().shift.iter().chain(&model.scaling().scale) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let checksum = fnv1a(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());
    out.write_all(&buf)?;
    Ok(())
}

pub fn save(model: &VaeModel, path: impl AsRef<Path>) -> Result<(), VaeError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_model(model, &mut out)?;
    out.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], VaeError> {
        let end = self.pos.checked_add(n).ok_or(VaeError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(VaeError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<usize, VaeError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, VaeError> {
        let b = self.take(n.checked_mul(8).ok_or(VaeError::Truncated)?)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn layer(&mut self, inputs: usize, outputs: usize) -> Result<DenseLayer, VaeError> {
        let w = self.f64s(inputs * outputs)?;
        let b = self.f64s(outputs)?;
        Ok(DenseLayer::new(inputs, outputs, w, b)?)
    }
}

/// Parses a model; `expected_latent` rejects files of a different K.
pub fn read_model(bytes: &[u8], expected_latent: Option<usize>) -> Result<VaeModel, VaeError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(VaeError::BadMagic);
    }
    let mut cur = Cursor { bytes, pos: MAGIC.len() };
    let version = cur.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(VaeError::UnsupportedVersion {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let latent_dim = cur.u32()?;
    let input_dim = cur.u32()?;
    let n_hidden = cur.u32()?;
    if n_hidden > 64 {
        return Err(VaeError::Checksum);
    }
    let hidden = (0..n_hidden).map(|_| cur.u32()).collect::<Result<Vec<_>, _>>()?;
    let arch = Architecture {
        input_dim,
        hidden,
        latent_dim,
    };

    // Size is fully determined by the header; check it before allocating.
    let enc = arch.encoder_widths();
    let dec = arch.decoder_widths();
    let last = *arch.hidden.last().unwrap_or(&0);
    let count = |w: &[usize]| w.windows(2).map(|p| p[0] * p[1] + p[1]).sum::<usize>();
    let params = count(&enc) + 2 * (last * latent_dim + latent_dim) + count(&dec) + 2 * input_dim;
    let expected_len = cur.pos + params * 8 + 8;
    if bytes.len() < expected_len {
        return Err(VaeError::Truncated);
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    if bytes.len() != expected_len || fnv1a(payload) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
        return Err(VaeError::Checksum);
    }
    arch.validate()?;
    if let Some(k) = expected_latent {
        if k != latent_dim {
            return Err(VaeError::DimensionMismatch {
                what: "latent dimension",
                expected: k,
                found: latent_dim,
            });
        }
    }

    let encoder = read_chain(&mut cur, &enc, vec![Activation::Tanh; enc.len() - 1])?;
    let mu_head = cur.layer(last, latent_dim)?;
    let logvar_head = cur.layer(last, latent_dim)?;
    let mut dec_acts = vec![Activation::Tanh; dec.len() - 2];
    dec_acts.push(Activation::Identity);
    let decoder = read_chain(&mut cur, &dec, dec_acts)?;
    let shift = cur.f64s(input_dim)?;
    let scale = cur.f64s(input_dim)?;
    Ok(VaeModel::from_parts(
        arch,
        encoder,
        mu_head,
        logvar_head,
        decoder,
        InputScaling { shift, scale },
    ))
}

fn read_chain(cur: &mut Cursor<'_>, widths: &[usize], acts: Vec<Activation>) -> Result<Mlp, VaeError> {
    let layers = widths
        .windows(2)
        .zip(acts)
        .map(|(w, a)| Ok((cur.layer(w[0], w[1])?, a)))
        .collect::<Result<Vec<_>, VaeError>>()?;
    Ok(Mlp::new(layers)?)
}

pub fn load(path: impl AsRef<Path>) -> Result<VaeModel, VaeError> {
    load_expecting(path, None)
}

pub fn load_expecting(path: impl AsRef<Path>, expected_latent: Option<usize>) -> Result<VaeModel, VaeError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_model(&bytes, expected_latent)
}
