//! Binary checkpoint: magic, format version, architecture, element width,
//! parameter count, little-endian parameters, SHA-256 of everything before.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ActorCritic, Architecture, Scalar};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FWDPOLCY";
const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn encode<T: Scalar>(net: &ActorCritic<T>) -> Vec<u8> {
    let a = net.architecture();
    let mut out = Vec::with_capacity(64 + net.param_count() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for w in [a.conv1_filters, a.conv2_filters, a.encoder_units, a.hidden_units] {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.push(T::TAG);
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for &p in net.params() {
        p.write_le(&mut out);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn read_u32(b: &[u8], at: &mut usize) -> Result<u32> {
    let v = b.get(*at..*at + 4).ok_or_else(|| ckpt_err("truncated header"))?;
    *at += 4;
    Ok(u32::from_le_bytes(v.try_into().unwrap()))
}

/// Decodes a checkpoint into a network of precision `T`, converting the
/// stored element width when it differs.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<ActorCritic<T>> {
    if bytes.len() < MAGIC.len() + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ckpt_err("not a policy checkpoint"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(ckpt_err("checksum mismatch (file corrupted)"));
    }
    let mut at = MAGIC.len();
    let version = read_u32(body, &mut at)?;
    if version != VERSION {
        return Err(ckpt_err(format!("unsupported checkpoint version {version}")));
    }
    let mut w = [0usize; 4];
    for x in &mut w {
        *x = read_u32(body, &mut at)? as usize;
    }
    let arch = Architecture {
        conv1_filters: w[0],
        conv2_filters: w[1],
        encoder_units: w[2],
        hidden_units: w[3],
    };
    let tag = *body.get(at).ok_or_else(|| ckpt_err("truncated header"))?;
    at += 1;
    let count = body
        .get(at..at + 8)
        .map(|v| u64::from_le_bytes(v.try_into().unwrap()) as usize)
        .ok_or_else(|| ckpt_err("truncated header"))?;
    at += 8;
    let mut net = ActorCritic::<T>::zeros(arch)?;
    if count != net.param_count() {
        return Err(ckpt_err(format!(
            "architecture {arch:?} needs {} parameters, file has {count}",
            net.param_count()
        )));
    }
    let width = match tag {
        4 => 4,
        8 => 8,
        other => return Err(ckpt_err(format!("unknown element type {other}"))),
    };
    let data = &body[at..];
    if data.len() != count * width {
        return Err(ckpt_err("parameter block has the wrong length"));
    }
    for (p, chunk) in net.params_mut().iter_mut().zip(data.chunks_exact(width)) {
        let v = if width == 4 {
            f32::read_le(chunk) as f64
        } else {
            f64::read_le(chunk)
        };
        *p = T::cast(v);
    }
    if net.log_std().iter().any(|v| !v.is_finite()) {
        return Err(ckpt_err("log σ is not finite"));
    }
    Ok(net)
}

pub fn save<T: Scalar>(net: &ActorCritic<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    // Write then rename so a crash never leaves a half-written checkpoint.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(net))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<ActorCritic<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ckpt_err(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = ActorCritic::<f32>::new(Architecture::reduced(), 3).unwrap();
        let back: ActorCritic<f32> = decode(&encode(&net)).unwrap();
        assert_eq!(back.params(), net.params());
        let wide: ActorCritic<f64> = decode(&encode(&net)).unwrap();
        assert!(wide.params().iter().zip(net.params()).all(|(a, b)| *a == *b as f64));
    }

    #[test]
    fn corruption_is_detected() {
        let net = ActorCritic::<f64>::new(Architecture::reduced(), 3).unwrap();
        let mut bytes = encode(&net);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(decode::<f64>(&bytes), Err(Error::Checkpoint(_))));
        assert!(decode::<f64>(b"garbage").is_err());
        let good = encode(&net);
        assert!(decode::<f64>(&good[..good.len() - 1]).is_err());
    }

    #[test]
    fn save_and_load_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/policy.ckpt");
        let net = ActorCritic::<f32>::new(Architecture::reduced(), 8).unwrap();
        save(&net, &path).unwrap();
        let back: ActorCritic<f32> = load(&path).unwrap();
        assert_eq!(back.params(), net.params());
        assert!(load::<f32>(dir.path().join("missing")).is_err());
    }
}
