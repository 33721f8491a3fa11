//! On-disk dataset layout: `scenes.jsonl` (annotations and proposals),
//! `tensors.bin` (f32 canvases, little-endian) and `manifest.json` with
//! a SHA-256 content hash over both files. Loading verifies the hash so
//! reports can prove which dataset they were computed on.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::labeling::Instance;
use crate::synthdata::{Scene, SceneSpec};

pub const MANIFEST_VERSION: u32 = 1;
const TENSORS_MAGIC: &[u8; 4] = b"DKTN";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub spec: SceneSpec,
    pub n_scenes: usize,
    /// SHA-256 over scenes.jsonl bytes followed by tensors.bin bytes.
    pub content_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SceneLine {
    image_id: usize,
    instances: Vec<Instance>,
    objects: Vec<(BBox, usize)>,
    proposals: Vec<BBox>,
}

fn hash_files(scenes: &[u8], tensors: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(scenes);
    hasher.update(tensors);
    format!("{:x}", hasher.finalize())
}

pub fn save_dataset(dir: &Path, spec: &SceneSpec, scenes: &[Scene]) -> Result<Manifest> {
    fs::create_dir_all(dir)?;

    let mut scenes_bytes = Vec::new();
    for s in scenes {
        let line = SceneLine {
            image_id: s.image_id,
            instances: s.instances.clone(),
            objects: s.objects.clone(),
            proposals: s.proposals.clone(),
        };
        serde_json::to_writer(&mut scenes_bytes, &line)?;
        scenes_bytes.push(b'\n');
    }

    let mut tensors_bytes = Vec::new();
    tensors_bytes.write_all(TENSORS_MAGIC)?;
    tensors_bytes.write_u64::<LittleEndian>(scenes.len() as u64)?;
    for s in scenes {
        let (c, h, w) = s.canvas.dim();
        tensors_bytes.write_u64::<LittleEndian>(c as u64)?;
        tensors_bytes.write_u64::<LittleEndian>(h as u64)?;
        tensors_bytes.write_u64::<LittleEndian>(w as u64)?;
        for &v in s.canvas.iter() {
            tensors_bytes.write_u32::<LittleEndian>(v.to_bits())?;
        }
    }

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        spec: spec.clone(),
        n_scenes: scenes.len(),
        content_hash: hash_files(&scenes_bytes, &tensors_bytes),
    };

    fs::write(dir.join("scenes.jsonl"), &scenes_bytes)?;
    fs::write(dir.join("tensors.bin"), &tensors_bytes)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.flush()?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_reader(BufReader::new(fs::File::open(
        dir.join("manifest.json"),
    )?))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Corrupt(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<(Vec<Scene>, Manifest)> {
    let manifest = load_manifest(dir)?;
    let scenes_bytes = fs::read(dir.join("scenes.jsonl"))?;
    let tensors_bytes = fs::read(dir.join("tensors.bin"))?;
    let actual = hash_files(&scenes_bytes, &tensors_bytes);
    if actual != manifest.content_hash {
        return Err(Error::DatasetHashMismatch(
            manifest.content_hash,
            actual,
        ));
    }

    let mut r = &tensors_bytes[..];
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSORS_MAGIC {
        return Err(Error::Corrupt(format!("bad tensors magic {magic:?}")));
    }
    let n = r.read_u64::<LittleEndian>()? as usize;
    if n != manifest.n_scenes {
        return Err(Error::Corrupt(format!(
            "manifest says {} scenes, tensors.bin holds {n}",
            manifest.n_scenes
        )));
    }

    let mut scenes = Vec::with_capacity(n);
    for line in scenes_bytes.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sl: SceneLine = serde_json::from_str(&line)?;
        let c = r.read_u64::<LittleEndian>()? as usize;
        let h = r.read_u64::<LittleEndian>()? as usize;
        let w = r.read_u64::<LittleEndian>()? as usize;
        let mut values = Vec::with_capacity(c * h * w);
        for _ in 0..c * h * w {
            values.push(f32::from_bits(r.read_u32::<LittleEndian>()?));
        }
        let canvas = Array3::from_shape_vec((c, h, w), values)
            .map_err(|e| Error::Corrupt(format!("canvas shape: {e}")))?;
        scenes.push(Scene {
            image_id: sl.image_id,
            canvas,
            instances: sl.instances,
            objects: sl.objects,
            proposals: sl.proposals,
        });
    }
    if scenes.len() != n {
        return Err(Error::Corrupt(format!(
            "scenes.jsonl holds {} scenes, expected {n}",
            scenes.len()
        )));
    }
    Ok((scenes, manifest))
}
