//! The SSRF checkpoint format.
//!
//! Layout: magic `SSRF`, u32 version, u32 entry count, then per entry a
//! length-prefixed UTF-8 name, a u8 rank, rank u32 dims, and a little-endian
//! float32 payload; the file ends with a CRC32 of everything before it.
//!
//! Every tensor of an object field is one entry (network weights, biases,
//! the raw beta scalar, the instance latent, the feature image). Metadata
//! rides along as reserved `meta.*` entries: canonical bbox, conditioning
//! camera, instance transform, network shape, training epoch, seed, and a
//! config hash (64-bit values are split into 16-bit limbs so they survive
//! the float32 payload exactly).

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use srf_core::field::{
    FieldConfig, ImplicitNetConfig, ObjectField, PositionalEncodingConfig, RenderNetConfig,
};
use srf_core::geom::{Aabb, Camera, Mat3, SimilarityTransform, Vec3};

pub const MAGIC: &[u8; 4] = b"SSRF";
pub const VERSION: u32 = 1;

#[derive(Debug)]
pub enum CheckpointError {
    Io(io::Error),
    BadMagic,
    UnsupportedVersion(u32),
    CrcMismatch { stored: u32, computed: u32 },
    Truncated,
    ShapeMismatch { name: String, expected: Vec<u32>, found: Vec<u32> },
    MissingEntry(String),
    Malformed(String),
}

impl std::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "io error: {e}"),
            CheckpointError::BadMagic => write!(f, "not an SSRF checkpoint (bad magic)"),
            CheckpointError::UnsupportedVersion(v) => write!(f, "unsupported version {v}"),
            CheckpointError::CrcMismatch { stored, computed } => {
                write!(f, "CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")
            }
            CheckpointError::Truncated => write!(f, "truncated checkpoint"),
            CheckpointError::ShapeMismatch { name, expected, found } => {
                write!(f, "parameter '{name}': expected shape {expected:?}, found {found:?}")
            }
            CheckpointError::MissingEntry(name) => write!(f, "missing entry '{name}'"),
            CheckpointError::Malformed(m) => write!(f, "malformed checkpoint: {m}"),
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<io::Error> for CheckpointError {
    fn from(e: io::Error) -> Self {
        CheckpointError::Io(e)
    }
}

/// CRC32 (IEEE 802.3, reflected polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, slot) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *slot = c;
    }
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

#[derive(Clone, Debug)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    pub version: u32,
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dims.len() as u8);
            for &d in &e.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for &v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        if bytes.len() < 4 || &bytes[0..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < 16 {
            return Err(CheckpointError::Truncated);
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32(body);
        if stored != computed {
            return Err(CheckpointError::CrcMismatch { stored, computed });
        }
        let mut pos = 4;
        let u32_at = |pos: &mut usize| -> Result<u32, CheckpointError> {
            if *pos + 4 > body.len() {
                return Err(CheckpointError::Truncated);
            }
            let v = u32::from_le_bytes(body[*pos..*pos + 4].try_into().unwrap());
            *pos += 4;
            Ok(v)
        };
        let version = u32_at(&mut pos)?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = u32_at(&mut pos)?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = u32_at(&mut pos)? as usize;
            if pos + name_len > body.len() {
                return Err(CheckpointError::Truncated);
            }
            let name = std::str::from_utf8(&body[pos..pos + name_len])
                .map_err(|_| CheckpointError::Malformed("non-utf8 entry name".into()))?
                .to_string();
            pos += name_len;
            if pos >= body.len() {
                return Err(CheckpointError::Truncated);
            }
            let rank = body[pos] as usize;
            pos += 1;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u32_at(&mut pos)?);
            }
            let n: usize = dims.iter().map(|&d| d as usize).product();
            if pos + 4 * n > body.len() {
                return Err(CheckpointError::Truncated);
            }
            let data = body[pos..pos + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += 4 * n;
            entries.push(Entry { name, dims, data });
        }
        Ok(Checkpoint { version, entries })
    }
}

/// Split a u64 into four 16-bit limbs (high first), each exact in f32.
fn limbs(v: u64) -> [f32; 4] {
    [
        ((v >> 48) & 0xFFFF) as f32,
        ((v >> 32) & 0xFFFF) as f32,
        ((v >> 16) & 0xFFFF) as f32,
        (v & 0xFFFF) as f32,
    ]
}

fn from_limbs(l: &[f32]) -> u64 {
    l.iter().fold(0u64, |acc, &x| (acc << 16) | (x as u64 & 0xFFFF))
}

/// Training metadata stored alongside the tensors.
#[derive(Clone, Debug)]
pub struct CheckpointMeta {
    pub epoch: u64,
    pub seed: u64,
    pub config_hash: u64,
    pub transform: SimilarityTransform,
}

/// FNV-1a hash of an arbitrary byte string (used for the config hash).
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn save_object_field(
    path: &Path,
    field: &ObjectField,
    meta: &CheckpointMeta,
) -> Result<(), CheckpointError> {
    let mut ckpt = Checkpoint { version: VERSION, entries: Vec::new() };
    for id in field.store.ids() {
        let e = field.store.entry(id);
        ckpt.entries.push(Entry {
            name: e.name.clone(),
            dims: vec![e.rows as u32, e.cols as u32],
            data: e.data.iter().map(|&v| v as f32).collect(),
        });
    }
    let bbox = field.bbox;
    ckpt.entries.push(Entry {
        name: "meta.bbox".into(),
        dims: vec![6],
        data: vec![
            bbox.min.x as f32,
            bbox.min.y as f32,
            bbox.min.z as f32,
            bbox.max.x as f32,
            bbox.max.y as f32,
            bbox.max.z as f32,
        ],
    });
    let cam = &field.camera;
    let mut cam_data = vec![
        cam.fx as f32,
        cam.fy as f32,
        cam.cx as f32,
        cam.cy as f32,
        cam.width as f32,
        cam.height as f32,
    ];
    cam_data.extend(cam.rotation.m.iter().map(|&v| v as f32));
    cam_data.extend([cam.position.x as f32, cam.position.y as f32, cam.position.z as f32]);
    ckpt.entries.push(Entry { name: "meta.camera".into(), dims: vec![18], data: cam_data });
    let tf = &meta.transform;
    let mut tf_data: Vec<f32> = tf.rotation.m.iter().map(|&v| v as f32).collect();
    tf_data.extend([
        tf.translation.x as f32,
        tf.translation.y as f32,
        tf.translation.z as f32,
        tf.scale as f32,
    ]);
    ckpt.entries.push(Entry { name: "meta.transform".into(), dims: vec![13], data: tf_data });
    let c = &field.config;
    ckpt.entries.push(Entry {
        name: "meta.netcfg".into(),
        dims: vec![13],
        data: vec![
            c.implicit.layers as f32,
            c.implicit.hidden as f32,
            c.implicit.geo_features as f32,
            if c.implicit.skip { 1.0 } else { 0.0 },
            c.render.layers as f32,
            c.render.hidden as f32,
            c.encoding.frequencies as f32,
            c.encoding.omega as f32,
            if c.encoding.include_input { 1.0 } else { 0.0 },
            c.instance_features as f32,
            c.pixel_features as f32,
            c.feature_res.0 as f32,
            c.feature_res.1 as f32,
        ],
    });
    ckpt.entries.push(Entry {
        name: "meta.epoch".into(),
        dims: vec![4],
        data: limbs(meta.epoch).to_vec(),
    });
    ckpt.entries.push(Entry {
        name: "meta.seed".into(),
        dims: vec![4],
        data: limbs(meta.seed).to_vec(),
    });
    ckpt.entries.push(Entry {
        name: "meta.confighash".into(),
        dims: vec![4],
        data: limbs(meta.config_hash).to_vec(),
    });
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

fn required<'a>(ckpt: &'a Checkpoint, name: &str) -> Result<&'a Entry, CheckpointError> {
    ckpt.get(name).ok_or_else(|| CheckpointError::MissingEntry(name.to_string()))
}

pub fn load_object_field(path: &Path) -> Result<(ObjectField, CheckpointMeta), CheckpointError> {
    let bytes = fs::read(path)?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;

    let netcfg = required(&ckpt, "meta.netcfg")?;
    if netcfg.data.len() != 13 {
        return Err(CheckpointError::Malformed("meta.netcfg must have 13 values".into()));
    }
    let d = &netcfg.data;
    let config = FieldConfig {
        encoding: PositionalEncodingConfig {
            frequencies: d[6] as usize,
            omega: d[7] as f64,
            include_input: d[8] != 0.0,
        },
        implicit: ImplicitNetConfig {
            layers: d[0] as usize,
            hidden: d[1] as usize,
            geo_features: d[2] as usize,
            skip: d[3] != 0.0,
        },
        render: RenderNetConfig { layers: d[4] as usize, hidden: d[5] as usize },
        instance_features: d[9] as usize,
        pixel_features: d[10] as usize,
        feature_res: (d[11] as usize, d[12] as usize),
    };

    let cam = required(&ckpt, "meta.camera")?;
    if cam.data.len() != 18 {
        return Err(CheckpointError::Malformed("meta.camera must have 18 values".into()));
    }
    let c = &cam.data;
    // Float32 storage perturbs orthonormality past the camera invariant;
    // re-orthonormalize on load.
    let rotation = Mat3 {
        m: [
            c[6] as f64,
            c[7] as f64,
            c[8] as f64,
            c[9] as f64,
            c[10] as f64,
            c[11] as f64,
            c[12] as f64,
            c[13] as f64,
            c[14] as f64,
        ],
    }
    .orthonormalized();
    let camera = Camera::new(
        c[0] as f64,
        c[1] as f64,
        c[2] as f64,
        c[3] as f64,
        c[4] as u32,
        c[5] as u32,
        rotation,
        Vec3::new(c[15] as f64, c[16] as f64, c[17] as f64),
    );

    // Rebuild a field of the declared shape, then overwrite every tensor.
    let mut field = ObjectField::init(config, camera, 0);
    let bbox = required(&ckpt, "meta.bbox")?;
    if bbox.data.len() != 6 {
        return Err(CheckpointError::Malformed("meta.bbox must have 6 values".into()));
    }
    field.bbox = Aabb::new(
        Vec3::new(bbox.data[0] as f64, bbox.data[1] as f64, bbox.data[2] as f64),
        Vec3::new(bbox.data[3] as f64, bbox.data[4] as f64, bbox.data[5] as f64),
    );

    let by_name: BTreeMap<&str, &Entry> =
        ckpt.entries.iter().map(|e| (e.name.as_str(), e)).collect();
    for id in field.store.ids().collect::<Vec<_>>() {
        let (name, rows, cols) = {
            let e = field.store.entry(id);
            (e.name.clone(), e.rows as u32, e.cols as u32)
        };
        let entry = by_name
            .get(name.as_str())
            .ok_or_else(|| CheckpointError::MissingEntry(name.clone()))?;
        if entry.dims != vec![rows, cols] {
            return Err(CheckpointError::ShapeMismatch {
                name,
                expected: vec![rows, cols],
                found: entry.dims.clone(),
            });
        }
        let dst = field.store.data_mut(id);
        for (d, &s) in dst.iter_mut().zip(&entry.data) {
            *d = s as f64;
        }
    }

    let tf = required(&ckpt, "meta.transform")?;
    if tf.data.len() != 13 {
        return Err(CheckpointError::Malformed("meta.transform must have 13 values".into()));
    }
    let t = &tf.data;
    let transform = SimilarityTransform {
        rotation: Mat3 {
            m: [
                t[0] as f64,
                t[1] as f64,
                t[2] as f64,
                t[3] as f64,
                t[4] as f64,
                t[5] as f64,
                t[6] as f64,
                t[7] as f64,
                t[8] as f64,
            ],
        }
        .orthonormalized(),
        translation: Vec3::new(t[9] as f64, t[10] as f64, t[11] as f64),
        scale: t[12] as f64,
    };
    let meta = CheckpointMeta {
        epoch: from_limbs(&required(&ckpt, "meta.epoch")?.data),
        seed: from_limbs(&required(&ckpt, "meta.seed")?.data),
        config_hash: from_limbs(&required(&ckpt, "meta.confighash")?.data),
        transform,
    };
    Ok((field, meta))
}
