//! Versioned binary parameter container: a JSON config header followed
//! by little-endian 64-bit tensors in a fixed order. Reload is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Network, NetworkConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DKCP";
const VERSION: u32 = 1;

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let config = serde_json::to_vec(&net.config)?;
    w.write_u64::<LittleEndian>(config.len() as u64)?;
    w.write_all(&config)?;
    let tensors = net.tensors();
    w.write_u32::<LittleEndian>(tensors.len() as u32)?;
    for t in tensors {
        w.write_u32::<LittleEndian>(t.ndim() as u32)?;
        for &d in t.shape() {
            w.write_u64::<LittleEndian>(d as u64)?;
        }
        for &v in t.iter() {
            w.write_u64::<LittleEndian>(v.to_bits())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Corrupt(format!("bad checkpoint magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Corrupt(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config_len = r.read_u64::<LittleEndian>()? as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes)?;
    let config: NetworkConfig = serde_json::from_slice(&config_bytes)?;

    let mut net = Network::new(config, 0)?;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut tensors = net.tensors_mut();
    if count != tensors.len() {
        return Err(Error::Corrupt(format!(
            "checkpoint holds {count} tensors, config implies {}",
            tensors.len()
        )));
    }
    for t in tensors.iter_mut() {
        let ndim = r.read_u32::<LittleEndian>()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u64::<LittleEndian>()? as usize);
        }
        if shape != t.shape() {
            return Err(Error::Corrupt(format!(
                "tensor shape {shape:?} does not match config shape {:?}",
                t.shape()
            )));
        }
        for v in t.iter_mut() {
            *v = f64::from_bits(r.read_u64::<LittleEndian>()?);
        }
    }
    Ok(net)
}
