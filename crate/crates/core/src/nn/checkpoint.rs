//! Bit-exact binary checkpoints.
//!
//! Layout: magic `CNNW`, version u32 LE (=1), tensor count u32 LE, then per
//! tensor: name length u16 LE, UTF-8 name bytes, ndim u8, each dim u32 LE,
//! raw IEEE-754 f32 LE row-major. No padding anywhere. Entries are written
//! in layer order (weight before bias), and a load parses the whole file
//! before touching the network, so a failed load leaves it unmodified.

use std::collections::BTreeSet;
use std::path::Path;

use super::{Network, Stage};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: [u8; 4] = *b"CNNW";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// Checkpoint entries and network parameters must match one to one.
    Strict,
    /// Only feature-extractor parameters are loaded; the classifier keeps
    /// its current (fresh) initialization and extra entries are ignored.
    FeatureExtractorOnly,
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let names = net.param_names();
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for name in &names {
        let t = net.param(name).expect("canonical param");
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "checkpoint truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16_le(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn parse(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic, expected CNNW".into()));
    }
    let version = r.u32_le()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32_le()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16_le()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("non-UTF-8 tensor name".into()))?
            .to_owned();
        let ndim = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32_le()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        entries.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(entries)
}

pub fn load_checkpoint(net: &mut Network, path: &Path, mode: LoadMode) -> Result<()> {
    let entries = parse(&std::fs::read(path)?)?;
    let wanted: Vec<String> = match mode {
        LoadMode::Strict => net.param_names(),
        LoadMode::FeatureExtractorOnly => {
            let fe: BTreeSet<String> =
                net.stage_layers(Stage::FeatureExtractor).into_iter().collect();
            net.param_names()
                .into_iter()
                .filter(|n| fe.contains(n.rsplit_once('.').map(|(l, _)| l).unwrap_or("")))
                .collect()
        }
    };

    let mut offenders = Vec::new();
    let mut to_apply: Vec<(String, Tensor)> = Vec::new();
    let entry_names: BTreeSet<&str> = entries.iter().map(|(n, _)| n.as_str()).collect();
    for name in &wanted {
        match entries.iter().find(|(n, _)| n == name) {
            Some((_, t)) => {
                let current = net.param(name).expect("canonical param");
                if current.shape() != t.shape() {
                    offenders.push(format!(
                        "{name}: shape {:?} in file, {:?} in network",
                        t.shape(),
                        current.shape()
                    ));
                } else {
                    to_apply.push((name.clone(), t.clone()));
                }
            }
            None => offenders.push(format!("{name}: missing from checkpoint")),
        }
    }
    if mode == LoadMode::Strict {
        let known: BTreeSet<&str> = wanted.iter().map(|s| s.as_str()).collect();
        for extra in entry_names.difference(&known) {
            offenders.push(format!("{extra}: not a network parameter"));
        }
    }
    if !offenders.is_empty() {
        return Err(Error::Checkpoint(offenders.join("; ")));
    }
    for (name, t) in to_apply {
        *net.param_mut(&name).expect("checked above") = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_network, Preset};
    use crate::rng::Rng;

    fn bits(t: &Tensor) -> Vec<u32> {
        t.data().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("net.ckpt");
        let mut rng = Rng::new(11);
        let net = build_network(Preset::Vanilla, (1, 16, 16), 5, &mut rng).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let mut other = build_network(Preset::Vanilla, (1, 16, 16), 5, &mut Rng::new(99)).unwrap();
        load_checkpoint(&mut other, &path, LoadMode::Strict).unwrap();
        for name in net.param_names() {
            assert_eq!(bits(net.param(&name).unwrap()), bits(other.param(&name).unwrap()), "{name}");
        }
    }

    #[test]
    fn feature_extractor_load_into_different_class_count() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("net.ckpt");
        let mut rng = Rng::new(12);
        let src = build_network(Preset::Vanilla, (1, 16, 16), 5, &mut rng).unwrap();
        save_checkpoint(&src, &path).unwrap();

        let mut dst = build_network(Preset::Vanilla, (1, 16, 16), 9, &mut Rng::new(13)).unwrap();
        let fresh_fc2 = dst.param("fc2.weight").unwrap().clone();
        // strict load must fail: fc sizes differ
        assert!(matches!(
            load_checkpoint(&mut dst, &path, LoadMode::Strict),
            Err(Error::Checkpoint(_))
        ));
        load_checkpoint(&mut dst, &path, LoadMode::FeatureExtractorOnly).unwrap();
        assert_eq!(bits(src.param("conv1.weight").unwrap()), bits(dst.param("conv1.weight").unwrap()));
        // classifier untouched by the load
        assert_eq!(bits(&fresh_fc2), bits(dst.param("fc2.weight").unwrap()));
    }

    #[test]
    fn truncated_file_leaves_network_unmodified() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("net.ckpt");
        let mut rng = Rng::new(14);
        let net = build_network(Preset::Vanilla, (1, 16, 16), 4, &mut rng).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() / 2]).unwrap();

        let mut victim = build_network(Preset::Vanilla, (1, 16, 16), 4, &mut Rng::new(15)).unwrap();
        let before: Vec<Vec<u32>> =
            victim.param_names().iter().map(|n| bits(victim.param(n).unwrap())).collect();
        assert!(matches!(
            load_checkpoint(&mut victim, &path, LoadMode::Strict),
            Err(Error::Format(_))
        ));
        let after: Vec<Vec<u32>> =
            victim.param_names().iter().map(|n| bits(victim.param(n).unwrap())).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("junk.ckpt");
        std::fs::write(&path, b"JUNKxxxxxxxxxxxx").unwrap();
        let mut net = build_network(Preset::Vanilla, (1, 16, 16), 4, &mut Rng::new(16)).unwrap();
        assert!(matches!(
            load_checkpoint(&mut net, &path, LoadMode::Strict),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn file_layout_starts_with_magic_and_version() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("net.ckpt");
        let mut rng = Rng::new(17);
        let net = build_network(Preset::Vanilla, (1, 16, 16), 4, &mut rng).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], &[0x43, 0x4E, 0x4E, 0x57]);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(count, net.param_names().len());
        // first entry is conv1.weight: u16 name length, then the name
        let name_len = u16::from_le_bytes(bytes[12..14].try_into().unwrap()) as usize;
        assert_eq!(&bytes[14..14 + name_len], b"conv1.weight");
    }
}
