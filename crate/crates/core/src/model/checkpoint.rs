//! Checkpoint files hold the Ω− network followed by the Ω+ network. Each
//! block is one ASCII header line `sizes activation seed`, for example
//! `3,10,10,1 sine 42` (an `activation:omega0` tag records a non-unit
//! frequency scale), followed by the flat parameters as little-endian `f64`.

use std::path::Path;

use thiserror::Error;

use super::{param_count, Activation, Mlp, SurrogatePair};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint at byte {offset}: {message}")]
    Corrupt { offset: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn corrupt(offset: usize, message: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt { offset, message: message.into() }
}

pub fn encode_net(net: &Mlp, out: &mut Vec<u8>) {
    let sizes: Vec<String> = net.sizes.iter().map(|s| s.to_string()).collect();
    let act = if net.omega0 == 1.0 {
        net.activation.name().to_string()
    } else {
        format!("{}:{:e}", net.activation.name(), net.omega0)
    };
    out.extend_from_slice(format!("{} {} {}\n", sizes.join(","), act, net.seed).as_bytes());
    for p in &net.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
}

/// Decodes one network starting at `offset`, returning it and the offset
/// just past its parameters.
pub fn decode_net(bytes: &[u8], offset: usize) -> Result<(Mlp, usize), CheckpointError> {
    let rest = bytes.get(offset..).ok_or_else(|| corrupt(offset, "unexpected end of file"))?;
    let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| corrupt(offset, "missing header line"))?;
    let header = std::str::from_utf8(&rest[..nl]).map_err(|_| corrupt(offset, "header is not UTF-8"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(corrupt(offset, format!("header {header:?} needs 3 fields")));
    }
    let sizes: Vec<usize> = fields[0]
        .split(',')
        .map(|s| s.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| corrupt(offset, format!("bad layer sizes {:?}", fields[0])))?;
    let (act_name, omega0) = match fields[1].split_once(':') {
        Some((a, w)) => (a, w.parse::<f64>().map_err(|_| corrupt(offset, format!("bad omega0 {w:?}")))?),
        None => (fields[1], 1.0),
    };
    let activation: Activation = act_name.parse().map_err(|e: String| corrupt(offset, e))?;
    let seed: u64 = fields[2].parse().map_err(|_| corrupt(offset, format!("bad seed {:?}", fields[2])))?;
    let start = offset + nl + 1;
    let count = param_count(&sizes);
    let end = start + 8 * count;
    if bytes.len() < end {
        let have = (bytes.len() - start) / 8;
        return Err(corrupt(start + 8 * have, format!("expected {count} parameters, found {have}")));
    }
    let params = bytes[start..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let net = Mlp::from_params(&sizes, activation, seed, omega0, params).map_err(|e| corrupt(offset, e.to_string()))?;
    Ok((net, end))
}

pub fn encode_pair(pair: &SurrogatePair) -> Vec<u8> {
    let mut out = Vec::new();
    encode_net(&pair.net_minus, &mut out);
    encode_net(&pair.net_plus, &mut out);
    out
}

pub fn decode_pair(bytes: &[u8]) -> Result<SurrogatePair, CheckpointError> {
    let (net_minus, off) = decode_net(bytes, 0)?;
    let (net_plus, off) = decode_net(bytes, off)?;
    if off != bytes.len() {
        return Err(corrupt(off, format!("{} trailing bytes", bytes.len() - off)));
    }
    Ok(SurrogatePair { net_minus, net_plus })
}

pub fn save_pair(pair: &SurrogatePair, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_pair(pair))?;
    Ok(())
}

pub fn load_pair(path: &Path) -> Result<SurrogatePair, CheckpointError> {
    decode_pair(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitScale;

    fn pair() -> SurrogatePair {
        SurrogatePair {
            net_minus: Mlp::init(&[3, 1, 1], Activation::Tanh, 1).unwrap(),
            net_plus: Mlp::init_with(&[3, 10, 10, 1], Activation::Celu, 2, 30.0, InitScale::FanIn).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = pair();
        let bytes = encode_pair(&p);
        let q = decode_pair(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(encode_pair(&q), bytes);
        assert!(bytes.starts_with(b"3,1,1 tanh 1\n"));
    }

    #[test]
    fn truncation_names_byte_offset() {
        let bytes = encode_pair(&pair());
        let cut = &bytes[..bytes.len() - 3];
        match decode_pair(cut) {
            Err(CheckpointError::Corrupt { offset, .. }) => {
                let n = pair().net_plus.num_params();
                assert_eq!(offset, bytes.len() - 8 * n + 8 * (n - 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        match decode_pair(b"3,4,1 relu 0\n") {
            Err(CheckpointError::Corrupt { offset: 0, message }) => assert!(message.contains("relu")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
