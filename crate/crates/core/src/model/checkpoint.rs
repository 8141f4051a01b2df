//! Single-file checkpoint archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "SRECCKP1"
//! meta     u32 length + UTF-8 `key<TAB>value` lines
//! count    u32 number of tensors
//! tensor*  u32 name length, name, u32 rank, u64 per dim, f64 bits per value
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a save/load cycle is bit-exact.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AblationConfig, Mode, ModelDims, ModelParams};
use crate::data::{write_file, RatingScale};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SRECCKP1";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub dims: ModelDims,
    pub rating_scale: RatingScale,
    pub mode: Mode,
    pub ablation: AblationConfig,
    pub seed: u64,
}

impl CheckpointMeta {
    fn to_text(&self) -> String {
        let d = &self.dims;
        let a = &self.ablation;
        format!(
            "dim\t{}\nlstm_layers\t{}\nn_users\t{}\nn_items\t{}\nn_ratings\t{}\n\
             rating_scale\t{}\nmode\t{}\nuse_lstm\t{}\nuse_att\t{}\nuse_social\t{}\n\
             use_correlative\t{}\nseed\t{}\n",
            d.dim,
            d.lstm_layers,
            d.n_users,
            d.n_items,
            d.n_ratings,
            self.rating_scale,
            self.mode,
            a.use_lstm,
            a.use_att,
            a.use_social,
            a.use_correlative,
            self.seed
        )
    }

    fn from_text(text: &str) -> Result<Self> {
        let kv: HashMap<&str, &str> = text.lines().filter_map(|l| l.split_once('\t')).collect();
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| Error::Checkpoint(format!("meta is missing '{k}'")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Checkpoint(format!("meta '{k}' has bad value '{v}'")))
        }
        let flag = |k: &str| -> Result<bool> { num(k, get(k)?) };
        Ok(CheckpointMeta {
            dims: ModelDims {
                dim: num("dim", get("dim")?)?,
                lstm_layers: num("lstm_layers", get("lstm_layers")?)?,
                n_users: num("n_users", get("n_users")?)?,
                n_items: num("n_items", get("n_items")?)?,
                n_ratings: num("n_ratings", get("n_ratings")?)?,
            },
            rating_scale: get("rating_scale")?.parse()?,
            mode: get("mode")?.parse()?,
            ablation: AblationConfig {
                use_lstm: flag("use_lstm")?,
                use_att: flag("use_att")?,
                use_social: flag("use_social")?,
                use_correlative: flag("use_correlative")?,
            },
            seed: num("seed", get("seed")?)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("archive is truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8 in archive".into()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let meta = self.meta.to_text();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.params.store.len() as u32).to_le_bytes());
        for (name, t) in self.params.store.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint archive".into()));
        }
        let meta = CheckpointMeta::from_text(&r.string()?)?;
        // Build the layout from the recorded dimensions, then overwrite values.
        let mut params = ModelParams::new(meta.dims, &mut ChaCha8Rng::seed_from_u64(0))?;
        let count = r.u32()? as usize;
        if count != params.store.len() {
            return Err(Error::Checkpoint(format!(
                "archive has {count} tensors, model layout expects {}",
                params.store.len()
            )));
        }
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let id = params
                .store
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor '{name}'")))?;
            let t = params.store.get_mut(id);
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor '{name}' has shape {shape:?}, expected {:?}",
                    t.shape()
                )));
            }
            for v in t.data_mut() {
                *v = f64::from_bits(r.u64()?);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after archive".into()));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let dims = ModelDims {
            n_users: 4,
            n_items: 3,
            n_ratings: 5,
            dim: 4,
            lstm_layers: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ModelParams::new(dims, &mut rng).unwrap();
        params.set("head.2.b", &[f64::MIN_POSITIVE]).unwrap();
        Checkpoint {
            meta: CheckpointMeta {
                dims,
                rating_scale: RatingScale::five_star(),
                mode: Mode::Ranking,
                ablation: "w/o_CN".parse().unwrap(),
                seed: 99,
            },
            params,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("best.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.meta, ck.meta);
        for ((n1, a), (n2, b)) in ck.params.store.iter().zip(back.params.store.iter()) {
            assert_eq!(n1, n2);
            assert!(a
                .data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn corrupt_archives_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPT").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
