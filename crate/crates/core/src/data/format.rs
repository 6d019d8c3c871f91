//! Epoch files.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic     "EEGE"
//! version   u32 = 1
//! n_trials  u32
//! n_channels u32
//! n_samples u32
//! sample_rate f32
//! per trial:
//!   subject_id u32
//!   valence    f32
//!   payload    n_channels * n_samples f32, channel-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::epochs::EpochSet;
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const EPOCH_MAGIC: [u8; 4] = *b"EEGE";
pub const EPOCH_VERSION: u32 = 1;

fn u32_field(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds u32")))
}

pub fn write_epochset(es: &EpochSet) -> Result<Vec<u8>> {
    let mut w = ByteWriter::with_capacity(24 + es.trials().len() * 4 + es.n_trials() * 8);
    w.bytes(&EPOCH_MAGIC);
    w.u32(EPOCH_VERSION);
    w.u32(u32_field(es.n_trials(), "n_trials")?);
    w.u32(u32_field(es.n_channels(), "n_channels")?);
    w.u32(u32_field(es.n_samples(), "n_samples")?);
    w.f32(es.sample_rate_hz());
    for i in 0..es.n_trials() {
        w.u32(es.subject_ids()[i]);
        w.f32(es.valence()[i]);
        w.f32s(es.trial(i));
    }
    Ok(w.into_inner())
}

pub fn read_epochset(bytes: &[u8]) -> Result<EpochSet> {
    let mut r = ByteReader::new(bytes);
    r.magic(EPOCH_MAGIC)?;
    r.version(EPOCH_VERSION)?;
    let n = r.u32("header")? as usize;
    let c = r.u32("header")? as usize;
    let t = r.u32("header")? as usize;
    let rate = r.f32("header")?;
    if n == 0 || c == 0 || t == 0 {
        return Err(Error::Malformed(format!(
            "empty geometry: {n} trials x {c} channels x {t} samples"
        )));
    }
    let len = c
        .checked_mul(t)
        .ok_or_else(|| Error::Malformed(format!("{c} x {t} samples overflow")))?;
    let mut data = Vec::with_capacity(len.saturating_mul(n).min(r.remaining() / 4));
    let mut subject_ids = Vec::with_capacity(n.min(r.remaining() / 8));
    let mut valence = Vec::with_capacity(subject_ids.capacity());
    for trial in 0..n {
        let truncated = |_| Error::TruncatedTrial { trial };
        subject_ids.push(r.u32("trial").map_err(truncated)?);
        valence.push(r.f32("trial").map_err(truncated)?);
        data.extend(r.f32s(len, "trial").map_err(truncated)?);
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed(format!(
            "{} trailing bytes",
            r.remaining()
        )));
    }
    EpochSet::new(
        Tensor::from_vec(&[n, c, t], data)?,
        subject_ids,
        valence,
        rate,
    )
}

pub fn save_epochset(es: &EpochSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_epochset(es)?)?;
    Ok(())
}

pub fn load_epochset(path: impl AsRef<Path>) -> Result<EpochSet> {
    read_epochset(&fs::read(path)?)
}

/// One line of the human-readable sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub trial: usize,
    pub subject_id: u32,
    pub valence: f32,
}

/// JSON lines, one [`SidecarEntry`] per trial. The binary file stays
/// authoritative.
pub fn write_sidecar(es: &EpochSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    for i in 0..es.n_trials() {
        let entry = SidecarEntry {
            trial: i,
            subject_id: es.subject_ids()[i],
            valence: es.valence()[i],
        };
        serde_json::to_writer(&mut out, &entry).map_err(std::io::Error::from)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    fn sample() -> EpochSet {
        let mut es = generate_synthetic(2, 3, 4, 10, 125.0, 5).unwrap();
        let mut trials = es.trials().clone();
        trials.data_mut()[0] = -0.0;
        trials.data_mut()[1] = f32::MIN_POSITIVE / 2.0;
        es = EpochSet::new(
            trials,
            es.subject_ids().to_vec(),
            es.valence().to_vec(),
            125.0,
        )
        .unwrap();
        es
    }

    #[test]
    fn round_trip_bit_exact() {
        let es = sample();
        let bytes = write_epochset(&es).unwrap();
        assert_eq!(bytes.len(), 24 + 6 * (8 + 40 * 4));
        let back = read_epochset(&bytes).unwrap();
        let bits = |e: &EpochSet| {
            e.trials()
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&back), bits(&es));
        assert_eq!(back.subject_ids(), es.subject_ids());
        assert_eq!(back.valence(), es.valence());
        assert_eq!(back.sample_rate_hz(), 125.0);
    }

    #[test]
    fn header_layout() {
        let bytes = write_epochset(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"EEGE");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 6);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 10);
        assert_eq!(f32::from_le_bytes(bytes[20..24].try_into().unwrap()), 125.0);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 0);
    }

    #[test]
    fn distinct_errors() {
        let bytes = write_epochset(&sample()).unwrap();
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(read_epochset(&magic), Err(Error::BadMagic { .. })));
        let mut version = bytes.clone();
        version[4] = 2;
        assert!(matches!(
            read_epochset(&version),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
        assert!(matches!(
            read_epochset(&bytes[..10]),
            Err(Error::Truncated(_))
        ));
        let trial_len = 8 + 40 * 4;
        for (cut, k) in [(24 + 3, 0), (24 + trial_len + 100, 1), (bytes.len() - 1, 5)] {
            let err = read_epochset(&bytes[..cut]).unwrap_err();
            assert_eq!(err.to_string(), format!("truncated at trial {k}"));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(read_epochset(&extra), Err(Error::Malformed(_))));
    }

    #[test]
    fn dens_geometry_loads() {
        let n = 2;
        let trials = Tensor::zeros(&[n, 128, 875]).unwrap();
        let es = EpochSet::new(trials, vec![0, 1], vec![1.0, 9.0], 125.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dens.eege");
        save_epochset(&es, &path).unwrap();
        let back = load_epochset(&path).unwrap();
        assert_eq!((back.n_channels(), back.n_samples()), (128, 875));
        assert_eq!(back, es);
    }

    #[test]
    fn sidecar_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.jsonl");
        let es = sample();
        write_sidecar(&es, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<SidecarEntry> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[4].trial, 4);
        assert_eq!(lines[4].subject_id, 1);
        assert!(text.starts_with("{\"trial\":0,\"subject_id\":0,\"valence\":"));
    }
}
