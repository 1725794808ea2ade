//! Binary checkpoint: `LDGM` magic, version byte, then little-endian fields.
//!
//! ```text
//! magic[4] version:u8 aggregation:u8 relu:u8
//! c_in:u64 k:u64 dims:u64×k has_rule:u8 [l:u64 d:f64] num_classes:u64
//! k+1 matrices (W_1..W_K, W_U), each rows:u64 cols:u64 data:f64×rows·cols
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::model::ladder::{Aggregation, LadderModel};
use crate::model::profile::{make_profile, HopDimProfile};
use crate::model::train::{Metrics, TrainConfig};

pub const MAGIC: [u8; 4] = *b"LDGM";
pub const VERSION: u8 = 1;

/// JSON written next to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub config: TrainConfig,
    pub metrics: Metrics,
}

pub fn encode_checkpoint(model: &LadderModel) -> Vec<u8> {
    let profile = model.profile();
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(match model.aggregation() {
        Aggregation::Concat => 0,
        Aggregation::Addition => 1,
    });
    out.push(u8::from(model.relu()));
    put_u64(&mut out, profile.c_in());
    put_u64(&mut out, profile.k());
    profile.dims().iter().for_each(|&d| put_u64(&mut out, d));
    match profile.rule() {
        Some(rule) => {
            out.push(1);
            put_u64(&mut out, rule.l);
            out.extend_from_slice(&rule.d.to_le_bytes());
        }
        None => out.push(0),
    }
    put_u64(&mut out, model.num_classes());
    for w in model.hop_weights().iter().chain([model.classifier()]) {
        put_u64(&mut out, w.n_rows());
        put_u64(&mut out, w.n_cols());
        w.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<LadderModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a ladder checkpoint (bad magic)".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let aggregation = match r.u8()? {
        0 => Aggregation::Concat,
        1 => Aggregation::Addition,
        other => return Err(Error::Format(format!("unknown aggregation tag {other}"))),
    };
    let relu = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad relu flag {other}"))),
    };
    let c_in = r.usize()?;
    let k = r.usize()?;
    if k > r.remaining() / 8 {
        return Err(Error::Format(format!("hop count {k} exceeds file size")));
    }
    let dims = (0..k).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let profile = match r.u8()? {
        0 => HopDimProfile::explicit(c_in, dims)?,
        1 => {
            let l = r.usize()?;
            let d = r.f64()?;
            let p = make_profile(c_in, k, l, d)?;
            if p.dims() != dims.as_slice() {
                return Err(Error::Format("stored dims disagree with the stored rule".into()));
            }
            p
        }
        other => return Err(Error::Format(format!("bad rule flag {other}"))),
    };
    let num_classes = r.usize()?;
    let mut mats = Vec::with_capacity(k + 1);
    for _ in 0..=k {
        mats.push(r.matrix()?);
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    let classifier = mats.pop().expect("k + 1 matrices");
    if classifier.n_cols() != num_classes {
        return Err(Error::Format("classifier width disagrees with class count".into()));
    }
    LadderModel::from_weights(profile, mats, classifier, aggregation, relu)
}

/// Writes the checkpoint atomically (temp file then rename).
pub fn save_checkpoint(model: &LadderModel, path: &Path) -> Result<()> {
    let tmp = path.with_extension("ldg.tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&encode_checkpoint(model))?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<LadderModel> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_checkpoint(&fs::read(path)?)
}

pub fn save_sidecar(sidecar: &CheckpointSidecar, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}

pub fn load_sidecar(path: &Path) -> Result<CheckpointSidecar> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if n > self.remaining() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format(format!("value {v} too large")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self) -> Result<FeatureMatrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let len = rows
            .checked_mul(cols)
            .filter(|&n| n <= self.remaining() / 8)
            .ok_or_else(|| Error::Format(format!("{rows}x{cols} matrix exceeds file size")))?;
        let data = self
            .take(len * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        FeatureMatrix::from_vec(rows, cols, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(agg: Aggregation) -> LadderModel {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        LadderModel::init(make_profile(5, 3, 1, 0.5).unwrap(), 4, agg, true, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for agg in [Aggregation::Concat, Aggregation::Addition] {
            let m = model(agg);
            assert_eq!(decode_checkpoint(&encode_checkpoint(&m)).unwrap(), m);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let explicit = HopDimProfile::explicit(3, vec![1, 3]).unwrap();
        let m = LadderModel::init(explicit, 2, Aggregation::Concat, false, &mut rng).unwrap();
        assert_eq!(decode_checkpoint(&encode_checkpoint(&m)).unwrap(), m);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint(&model(Aggregation::Concat));
        assert_eq!(&bytes[..4], b"LDGM");
        assert_eq!(bytes[4], 1);
        assert_eq!(u64::from_le_bytes(bytes[7..15].try_into().unwrap()), 5);
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = encode_checkpoint(&model(Aggregation::Concat));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_checkpoint(&bad).is_err());
        let mut longer = bytes;
        longer.push(0);
        assert!(decode_checkpoint(&longer).is_err());
    }
}
