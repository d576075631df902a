//! Binary container for consolidated RBF weights.
//!
//! Layout, little-endian:
//!
//! ```text
//! "RBFW"            4 bytes
//! version           u32 (= 1)
//! input_dim         u32 (q)
//! counts            q x u32
//! bounds            q x (f64 lo, f64 hi)
//! width             f64
//! channels          u32 (= 3)
//! weights           channels x prod(counts) f64, channel-major
//! crc32             u32 over every preceding byte
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use formation_core::rbf::{build_grid_network, ChannelWeights, RbfNetwork, CHANNELS};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"RBFW";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(net: &RbfNetwork) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * CHANNELS * net.n_nodes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.input_dim() as u32).to_le_bytes());
    for &c in net.counts() {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    for &(lo, hi) in net.bounds() {
        out.extend_from_slice(&lo.to_le_bytes());
        out.extend_from_slice(&hi.to_le_bytes());
    }
    out.extend_from_slice(&net.width().to_le_bytes());
    out.extend_from_slice(&(CHANNELS as u32).to_le_bytes());
    for w in &net.weights {
        for x in w {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, field: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            CliError::FormatVersionMismatch { path: self.path.into(), reason: format!("truncated in {field}") }
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<RbfNetwork> {
    let bad = |reason: String| CliError::FormatVersionMismatch { path: path.into(), reason };
    if bytes.len() < 12 {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("missing RBFW magic".into()));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(CliError::ChecksumMismatch { path: path.into(), stored, computed });
    }
    let mut r = Reader { buf: payload, pos: 4, path };
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let dim = r.u32("input_dim")? as usize;
    if dim == 0 || dim > 16 {
        return Err(CliError::validation("input_dim", format!("{dim} is out of range")));
    }
    let counts = (0..dim).map(|_| r.u32("counts").map(|c| c as usize)).collect::<Result<Vec<_>>>()?;
    let bounds = (0..dim)
        .map(|_| Ok((r.f64("bounds")?, r.f64("bounds")?)))
        .collect::<Result<Vec<_>>>()?;
    let width = r.f64("width")?;
    let channels = r.u32("channels")? as usize;
    if channels != CHANNELS {
        return Err(CliError::validation("channels", format!("{channels}, expected {CHANNELS}")));
    }
    let nodes = counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
    let expected = nodes.and_then(|n| n.checked_mul(8 * CHANNELS));
    let remaining = payload.len() - r.pos;
    if expected != Some(remaining) {
        return Err(CliError::validation(
            "counts",
            format!("{counts:?} needs {} weight bytes, file holds {remaining}", expected.map_or("overflowing".into(), |e| e.to_string())),
        ));
    }
    let nodes = nodes.expect("checked above");
    let mut weights: ChannelWeights = Default::default();
    for w in weights.iter_mut() {
        *w = (0..nodes).map(|_| r.f64("weights")).collect::<Result<_>>()?;
    }
    let lattice = build_grid_network(&bounds, &counts, width)?;
    Ok(lattice.with_weights(weights)?)
}

pub fn save_weights(net: &RbfNetwork, path: &Path) -> Result<()> {
    fs::write(path, encode(net)).map_err(CliError::io(path))
}

pub fn load_weights(path: &Path) -> Result<RbfNetwork> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingWeightsFile(path.into()),
        _ => CliError::Io { path: path.into(), source: e },
    })?;
    decode(&bytes, path)
}

/// `PREFIX.<i>.rbfw` for follower `i` (1-based, matching graph nodes).
pub fn agent_path(prefix: &Path, agent: usize) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!(".{}.rbfw", agent + 1));
    PathBuf::from(s)
}

pub fn save_all(nets: &[RbfNetwork], prefix: &Path) -> Result<Vec<PathBuf>> {
    nets.iter()
        .enumerate()
        .map(|(i, net)| {
            let p = agent_path(prefix, i);
            save_weights(net, &p)?;
            Ok(p)
        })
        .collect()
}

pub fn load_all(prefix: &Path, n_agents: usize) -> Result<Vec<RbfNetwork>> {
    (0..n_agents).map(|i| load_weights(&agent_path(prefix, i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RbfNetwork {
        let lattice = build_grid_network(&[(-1.5, 2.0), (0.1, 0.3)], &[3, 4], 0.7).unwrap();
        let w: ChannelWeights = std::array::from_fn(|c| (0..12).map(|j| (j as f64 + 0.1) * (c as f64 - 1.3) / 7.0).collect());
        lattice.with_weights(w).unwrap()
    }

    fn bits(net: &RbfNetwork) -> Vec<u64> {
        net.weights.iter().flatten().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = sample();
        let back = decode(&encode(&net), Path::new("mem")).unwrap();
        assert_eq!(back, net);
        assert_eq!(bits(&back), bits(&net));
        assert_eq!(back.axes(), net.axes());
    }

    #[test]
    fn header_layout() {
        let b = encode(&sample());
        assert_eq!(&b[..4], b"RBFW");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(b.len(), 4 + 4 + 4 + 2 * 4 + 2 * 16 + 8 + 4 + 3 * 12 * 8 + 4);
    }

    #[test]
    fn truncation_detected() {
        let b = encode(&sample());
        for cut in [0, 3, 11, 12, 40, b.len() - 1] {
            let err = decode(&b[..cut], Path::new("mem")).unwrap_err();
            assert!(matches!(err, CliError::FormatVersionMismatch { .. } | CliError::ChecksumMismatch { .. }), "{cut}: {err}");
        }
    }

    #[test]
    fn flipped_bit_fails_checksum() {
        let mut b = encode(&sample());
        b[50] ^= 0x10;
        assert!(matches!(decode(&b, Path::new("mem")), Err(CliError::ChecksumMismatch { .. })));
    }

    #[test]
    fn wrong_version() {
        let mut b = encode(&sample());
        b[4] = 2;
        let n = b.len() - 4;
        let crc = crc32fast::hash(&b[..n]);
        b[n..].copy_from_slice(&crc.to_le_bytes());
        let err = decode(&b, Path::new("mem")).unwrap_err();
        assert!(matches!(err, CliError::FormatVersionMismatch { .. }), "{err}");
    }

    #[test]
    fn count_mismatch_names_field() {
        let mut b = encode(&sample());
        b[12] = 4;
        let n = b.len() - 4;
        let crc = crc32fast::hash(&b[..n]);
        b[n..].copy_from_slice(&crc.to_le_bytes());
        match decode(&b, Path::new("mem")) {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "counts"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn agent_paths() {
        assert_eq!(agent_path(Path::new("out/w"), 0), PathBuf::from("out/w.1.rbfw"));
        assert_eq!(agent_path(Path::new("w"), 4), PathBuf::from("w.5.rbfw"));
    }
}
