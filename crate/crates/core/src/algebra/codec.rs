//! Binary encoding of paths and profiles.
//!
//! ```text
//! "EPATH1"            6 bytes magic
//! version             u8 (= 1)
//! fingerprint         32 bytes
//! theta               f64
//! depth               u32   number of extracted layers
//! layer count         u32   equals depth
//! per layer:
//!   layer index       u32
//!   N, S, W           bitset blobs
//! trailer:
//!   kind              u8    0 = path, 1 = profile
//!   class             i64   -1 when the profile has no single class
//!   image count       u64
//!   start rank        u32
//!   start class       u32
//!   degenerate        u8
//!   frontier          bitset blob (capacity 0 for profiles)
//! bitset blob = capacity in bits (u64) followed by ceil(capacity/64) u64 words
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::profile::ClassProfile;
use crate::bitset::Bitset;
use crate::error::{Error, Result};
use crate::path::{EffectivePath, LayerSets};

pub const MAGIC: &[u8; 6] = b"EPATH1";
pub const VERSION: u8 = 1;

const KIND_PATH: u8 = 0;
const KIND_PROFILE: u8 = 1;

/// Anything an EPATH1 stream can hold.
#[derive(Clone, Debug, PartialEq)]
pub enum PathObject {
    Path(EffectivePath),
    Profile(ClassProfile),
}

struct Header<'a> {
    fingerprint: &'a [u8; 32],
    theta: f64,
    layers: &'a [LayerSets],
}

fn put_bitset(out: &mut Vec<u8>, set: &Bitset) {
    out.extend_from_slice(&(set.capacity() as u64).to_le_bytes());
    for w in set.words() {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

fn put_header(out: &mut Vec<u8>, h: &Header<'_>) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(h.fingerprint);
    out.extend_from_slice(&h.theta.to_le_bytes());
    out.extend_from_slice(&(h.layers.len() as u32).to_le_bytes());
    out.extend_from_slice(&(h.layers.len() as u32).to_le_bytes());
    for l in h.layers {
        out.extend_from_slice(&(l.layer as u32).to_le_bytes());
        put_bitset(out, &l.neurons);
        put_bitset(out, &l.synapses);
        put_bitset(out, &l.weights);
    }
}

pub fn encode_path(path: &EffectivePath) -> Vec<u8> {
    let mut out = Vec::new();
    put_header(
        &mut out,
        &Header {
            fingerprint: &path.fingerprint,
            theta: path.theta,
            layers: &path.layers,
        },
    );
    out.push(KIND_PATH);
    out.extend_from_slice(&(-1i64).to_le_bytes());
    out.extend_from_slice(&1u64.to_le_bytes());
    out.extend_from_slice(&(path.start_rank as u32).to_le_bytes());
    out.extend_from_slice(&(path.start_class as u32).to_le_bytes());
    out.push(path.degenerate as u8);
    put_bitset(&mut out, &path.frontier);
    out
}

pub fn encode_profile(profile: &ClassProfile) -> Vec<u8> {
    let mut out = Vec::new();
    put_header(
        &mut out,
        &Header {
            fingerprint: &profile.fingerprint,
            theta: profile.theta,
            layers: &profile.layers,
        },
    );
    out.push(KIND_PROFILE);
    out.extend_from_slice(&profile.class.map_or(-1i64, |c| c as i64).to_le_bytes());
    out.extend_from_slice(&profile.image_count.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.push(0);
    put_bitset(&mut out, &Bitset::new(0));
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what} ({n} bytes needed, {} left)", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn i64(&mut self, what: &str) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn bitset(&mut self, what: &str) -> Result<Bitset> {
        let at = self.pos as u64;
        let bits = self.u64(what)?;
        let words = bits.div_ceil(64);
        let remaining = (self.buf.len() - self.pos) as u64;
        if words.checked_mul(8).is_none_or(|b| b > remaining) {
            return Err(Error::format(
                at,
                format!("{what}: declared {bits} bits exceed the remaining {remaining} bytes"),
            ));
        }
        let raw = self.take(words as usize * 8, what)?;
        let words: Vec<u64> = raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        Bitset::from_words(bits as usize, words)
            .ok_or_else(|| Error::format(at, format!("{what}: bits set beyond capacity")))
    }
}

/// Decodes a whole stream; nothing is returned unless every byte parses.
pub fn decode(bytes: &[u8]) -> Result<PathObject> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(6, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic"));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::format(6, format!("unsupported version {version}")));
    }
    let fingerprint: [u8; 32] = r.take(32, "fingerprint")?.try_into().unwrap();
    let theta = r.f64("theta")?;
    let depth_at = r.pos as u64;
    let depth = r.u32("depth")?;
    let count = r.u32("layer count")?;
    if depth != count {
        return Err(Error::format(depth_at, format!("depth {depth} disagrees with layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count.min(1024) as usize);
    for _ in 0..count {
        let layer = r.u32("layer index")? as usize;
        layers.push(LayerSets {
            layer,
            neurons: r.bitset("neuron set")?,
            synapses: r.bitset("synapse set")?,
            weights: r.bitset("weight set")?,
        });
    }
    let kind_at = r.pos as u64;
    let kind = r.u8("kind")?;
    let class = r.i64("class")?;
    let image_count = r.u64("image count")?;
    let start_rank = r.u32("start rank")? as usize;
    let start_class = r.u32("start class")? as usize;
    let degenerate = r.u8("degenerate flag")? != 0;
    let frontier = r.bitset("frontier")?;
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after object"));
    }
    match kind {
        KIND_PATH => Ok(PathObject::Path(EffectivePath {
            fingerprint,
            theta,
            start_rank,
            start_class,
            layers,
            frontier,
            degenerate,
        })),
        KIND_PROFILE => Ok(PathObject::Profile(ClassProfile {
            class: (class >= 0).then_some(class as usize),
            fingerprint,
            theta,
            layers,
            image_count,
        })),
        k => Err(Error::format(kind_at, format!("unknown object kind {k}"))),
    }
}

pub fn decode_path(bytes: &[u8]) -> Result<EffectivePath> {
    match decode(bytes)? {
        PathObject::Path(p) => Ok(p),
        PathObject::Profile(_) => Err(Error::domain("stream holds a profile, not a path")),
    }
}

pub fn decode_profile(bytes: &[u8]) -> Result<ClassProfile> {
    match decode(bytes)? {
        PathObject::Profile(p) => Ok(p),
        PathObject::Path(_) => Err(Error::domain("stream holds a path, not a profile")),
    }
}

pub fn write_profile(profile: &ClassProfile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_profile(profile)).map_err(|e| Error::io(path, e))
}

pub fn read_profile(path: impl AsRef<Path>) -> Result<ClassProfile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_profile(&bytes)
}

pub fn write_path(p: &EffectivePath, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_path(p)).map_err(|e| Error::io(path, e))
}

pub fn read_path(path: impl AsRef<Path>) -> Result<EffectivePath> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_path(&bytes)
}

const OVERALL_FILE: &str = "overall.epath";
const SET_INDEX: &str = "profiles.json";

#[derive(serde::Serialize, serde::Deserialize)]
struct SetIndex {
    classes: usize,
    misclassified: usize,
}

/// Writes `class_<c>.epath` per class, `overall.epath`, and a small JSON index.
pub fn save_profile_set(set: &super::ProfileSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (c, p) in set.classes.iter().enumerate() {
        write_profile(p, dir.join(format!("class_{c}.epath")))?;
    }
    write_profile(&set.overall, dir.join(OVERALL_FILE))?;
    let index = SetIndex {
        classes: set.classes.len(),
        misclassified: set.misclassified,
    };
    let path = dir.join(SET_INDEX);
    fs::write(&path, serde_json::to_string_pretty(&index).expect("index serializes")).map_err(|e| Error::io(&path, e))
}

pub fn load_profile_set(dir: impl AsRef<Path>) -> Result<super::ProfileSet> {
    let dir = dir.as_ref();
    let path = dir.join(SET_INDEX);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: SetIndex = serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })?;
    let classes = (0..index.classes)
        .map(|c| read_profile(dir.join(format!("class_{c}.epath"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(super::ProfileSet {
        classes,
        overall: read_profile(dir.join(OVERALL_FILE))?,
        misclassified: index.misclassified,
    })
}
