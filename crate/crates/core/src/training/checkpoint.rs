//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "TNET"  u32 version
//! config: u32 n_points, u32 c, u32 h, u32 w,
//!         u32 len + u32 conv_channels, u32 len + u32 fc_sizes,
//!         f32 dropout_p, f32 bn_eps, f32 bn_momentum
//! params:  per tensor u32 len + f32 values
//! buffers: per tensor u32 len + f32 values
//! u8 has_adam; if 1: u64 t, then m and v tensors like params
//! ```

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use super::adam::AdamState;
use crate::error::{Error, Result};
use crate::net::{init_params, ModelState, NetworkConfig};

pub const MAGIC: &[u8; 4] = b"TNET";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(model: &ModelState<f32>, adam: Option<&AdamState<f32>>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let put_u32 = |out: &mut Vec<u8>, v: usize| out.write_u32::<LittleEndian>(v as u32).unwrap();
    put_u32(&mut out, VERSION as usize);
    let c = &model.config;
    for v in [c.n_points, c.input.0, c.input.1, c.input.2] {
        put_u32(&mut out, v);
    }
    for list in [&c.conv_channels, &c.fc_sizes] {
        put_u32(&mut out, list.len());
        for &v in list.iter() {
            put_u32(&mut out, v);
        }
    }
    for v in [c.dropout_p, c.bn_eps, c.bn_momentum] {
        out.write_f32::<LittleEndian>(v as f32).unwrap();
    }
    let put_tensors = |out: &mut Vec<u8>, ts: &[&[f32]]| {
        for t in ts {
            out.write_u32::<LittleEndian>(t.len() as u32).unwrap();
            for &v in t.iter() {
                out.write_f32::<LittleEndian>(v).unwrap();
            }
        }
    };
    put_tensors(&mut out, &model.params());
    put_tensors(&mut out, &model.buffers());
    match adam {
        None => out.push(0),
        Some(st) => {
            out.push(1);
            out.write_u64::<LittleEndian>(st.t).unwrap();
            let m: Vec<&[f32]> = st.m.iter().map(|v| &v[..]).collect();
            let v: Vec<&[f32]> = st.v.iter().map(|v| &v[..]).collect();
            put_tensors(&mut out, &m);
            put_tensors(&mut out, &v);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn corrupt(&self, msg: impl Into<String>) -> Error {
        Error::Corrupt {
            path: self.path.into(),
            offset: self.pos as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(format!(
                "truncated while reading {what} ({n} bytes needed, {} left)",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(LittleEndian::read_u32(self.take(4, what)?) as usize)
    }

    /// Config reals are stored as f32; read back through their shortest
    /// decimal form so that e.g. `1e-5` survives the round trip.
    fn real(&mut self, what: &str) -> Result<f64> {
        let v = LittleEndian::read_f32(self.take(4, what)?);
        Ok(v.to_string().parse().expect("f32 display parses as f64"))
    }

    fn tensor_into(&mut self, dst: &mut [f32], what: &str) -> Result<()> {
        let at = self.pos;
        let len = self.u32(what)?;
        if len != dst.len() {
            self.pos = at;
            return Err(self.corrupt(format!(
                "{what} has {len} values, the embedded config implies {}",
                dst.len()
            )));
        }
        let raw = self.take(4 * len, what)?;
        LittleEndian::read_f32_into(raw, dst);
        Ok(())
    }
}

/// Inverse of [`encode_checkpoint`]. `path` only labels errors.
pub fn decode_checkpoint(
    bytes: &[u8],
    path: &Path,
) -> Result<(ModelState<f32>, Option<AdamState<f32>>)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::NotACheckpoint { path: path.into() });
    }
    let mut r = Reader { bytes, pos: 4, path };
    let version = r.u32("version")? as u32;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.into(),
            found: version,
            expected: VERSION,
        });
    }
    let n_points = r.u32("n_points")?;
    let input = (r.u32("input")?, r.u32("input")?, r.u32("input")?);
    let mut lists = Vec::new();
    for what in ["conv_channels", "fc_sizes"] {
        let len = r.u32(what)?;
        if len > 64 {
            return Err(r.corrupt(format!("implausible {what} length {len}")));
        }
        lists.push((0..len).map(|_| r.u32(what)).collect::<Result<Vec<_>>>()?);
    }
    let fc_sizes = lists.pop().unwrap();
    let conv_channels = lists.pop().unwrap();
    let config = NetworkConfig {
        n_points,
        input,
        conv_channels,
        fc_sizes,
        dropout_p: r.real("dropout_p")?,
        bn_eps: r.real("bn_eps")?,
        bn_momentum: r.real("bn_momentum")?,
    };
    let at = r.pos;
    config.validate().map_err(|e| Error::Corrupt {
        path: path.into(),
        offset: at as u64,
        msg: format!("embedded config is invalid: {e}"),
    })?;
    let mut model = init_params::<f32>(&config, 0)?;
    for (i, p) in model.params_mut().into_iter().enumerate() {
        r.tensor_into(p, &format!("parameter tensor {i}"))?;
    }
    for (i, b) in model.buffers_mut().into_iter().enumerate() {
        r.tensor_into(b, &format!("buffer tensor {i}"))?;
    }
    let adam = match r.take(1, "adam flag")?[0] {
        0 => None,
        1 => {
            let t = LittleEndian::read_u64(r.take(8, "adam step")?);
            let mut st = AdamState::new(model.params().iter().map(|p| p.len()));
            st.t = t;
            for (i, m) in st.m.iter_mut().enumerate() {
                r.tensor_into(m, &format!("adam m tensor {i}"))?;
            }
            for (i, v) in st.v.iter_mut().enumerate() {
                r.tensor_into(v, &format!("adam v tensor {i}"))?;
            }
            Some(st)
        }
        f => {
            r.pos -= 1;
            return Err(r.corrupt(format!("adam flag must be 0 or 1, found {f}")));
        }
    };
    if r.pos != bytes.len() {
        return Err(r.corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((model, adam))
}

pub fn save_checkpoint(
    path: &Path,
    model: &ModelState<f32>,
    adam: Option<&AdamState<f32>>,
) -> Result<()> {
    fs::write(path, encode_checkpoint(model, adam)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelState<f32>, Option<AdamState<f32>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelState<f32> {
        let cfg = NetworkConfig {
            input: (1, 8, 8),
            conv_channels: vec![2],
            fc_sizes: vec![3],
            ..NetworkConfig::new(2)
        };
        init_params(&cfg, 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = tiny();
        let mut st = AdamState::new(m.params().iter().map(|p| p.len()));
        st.t = 7;
        st.m[0][0] = 0.25;
        st.v[1][0] = 1e-9;
        let bytes = encode_checkpoint(&m, Some(&st));
        let (m2, st2) = decode_checkpoint(&bytes, Path::new("x")).unwrap();
        assert_eq!(m2, m);
        assert_eq!(st2.unwrap(), st);
        assert_eq!(m2.config.bn_eps, 1e-5);
        let (_, none) = decode_checkpoint(&encode_checkpoint(&m, None), Path::new("x")).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn bad_magic_version_and_truncation() {
        let bytes = encode_checkpoint(&tiny(), None);
        let p = Path::new("x");

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad, p), Err(Error::NotACheckpoint { .. })));

        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            decode_checkpoint(&v2, p),
            Err(Error::UnsupportedVersion { found: 2, expected: 1, .. })
        ));

        let cut = bytes.len() - 3;
        match decode_checkpoint(&bytes[..cut], p) {
            Err(Error::Corrupt { offset, .. }) => assert!(offset as usize <= cut),
            other => panic!("expected corruption error, got {other:?}"),
        }
    }
}
