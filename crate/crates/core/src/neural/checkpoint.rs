//! Checkpoint container: a JSON header followed by a flat little-endian f64
//! blob.
//!
//! ```text
//! SAINCKPT 1\n
//! <header JSON, one line>\n
//! <u64 LE: number of f64 values>
//! <f64 LE values...>
//! ```

use std::io::{BufRead, Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::NeuralError;

pub const CHECKPOINT_MAGIC: &str = "SAINCKPT 1";

pub fn encode_checkpoint<H: Serialize>(header: &H, blob: &[f64]) -> Result<Vec<u8>, NeuralError> {
    let mut out = Vec::with_capacity(64 + 8 * blob.len());
    out.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
    out.push(b'\n');
    serde_json::to_writer(&mut out, header).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    out.push(b'\n');
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    for v in blob {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint<H: DeserializeOwned, R: Read>(reader: R) -> Result<(H, Vec<f64>), NeuralError> {
    let mut reader = std::io::BufReader::new(reader);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != CHECKPOINT_MAGIC {
        return Err(NeuralError::Checkpoint(format!(
            "bad magic line {:?}",
            line.trim_end()
        )));
    }
    line.clear();
    reader.read_line(&mut line)?;
    let header: H = serde_json::from_str(line.trim_end()).map_err(|e| NeuralError::Checkpoint(format!("header: {e}")))?;
    let mut len = [0u8; 8];
    reader
        .read_exact(&mut len)
        .map_err(|_| NeuralError::Checkpoint("missing blob length".into()))?;
    let n = u64::from_le_bytes(len) as usize;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * n {
        return Err(NeuralError::Checkpoint(format!(
            "blob holds {} bytes, header promises {} values",
            bytes.len(),
            n
        )));
    }
    let blob = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, blob))
}

pub fn write_checkpoint<H: Serialize, W: Write>(mut writer: W, header: &H, blob: &[f64]) -> Result<(), NeuralError> {
    writer.write_all(&encode_checkpoint(header, blob)?)?;
    Ok(())
}

/// Hex SHA-256 of arbitrary bytes; used to fingerprint checkpoints and configs.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Header {
        shapes: Vec<usize>,
        note: String,
    }

    #[test]
    fn round_trip() {
        let h = Header {
            shapes: vec![3, 2],
            note: "x".into(),
        };
        let blob = vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300, 0.1 + 0.2];
        let bytes = encode_checkpoint(&h, &blob).unwrap();
        let (h2, b2): (Header, Vec<f64>) = decode_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(h2, h);
        assert_eq!(b2.len(), blob.len());
        for (a, b) in blob.iter().zip(&b2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let h = Header {
            shapes: vec![],
            note: String::new(),
        };
        let mut bytes = encode_checkpoint(&h, &[1.0, 2.0]).unwrap();
        bytes.truncate(bytes.len() - 3);
        let err = decode_checkpoint::<Header, _>(bytes.as_slice()).unwrap_err();
        assert!(matches!(err, NeuralError::Checkpoint(_)));
    }

    #[test]
    fn sha_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
