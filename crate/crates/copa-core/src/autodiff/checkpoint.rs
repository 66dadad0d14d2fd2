//! Bit-exact binary checkpoints.
//!
//! Layout (all integers little-endian u64, all floats little-endian f64):
//! an 8-byte magic, then labeled parameter stores (values + RMSProp state),
//! then three metadata sections (f64, u64, string) for counters, schedule
//! positions, RNG state, and config echoes. Floats round-trip through raw
//! bits, so saving and reloading reproduces training exactly.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::store::ParamStore;

const MAGIC: &[u8; 8] = b"COPACKP1";

#[derive(Debug, Default)]
pub struct Checkpoint {
    pub stores: Vec<(String, ParamStore)>,
    pub meta_f64: Vec<(String, f64)>,
    pub meta_u64: Vec<(String, u64)>,
    pub meta_str: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_store(&mut self, label: &str, store: ParamStore) {
        self.stores.push((label.to_string(), store));
    }

    pub fn store(&self, label: &str) -> Option<&ParamStore> {
        self.stores.iter().find(|(l, _)| l == label).map(|(_, s)| s)
    }

    pub fn take_store(&mut self, label: &str) -> Option<ParamStore> {
        let pos = self.stores.iter().position(|(l, _)| l == label)?;
        Some(self.stores.remove(pos).1)
    }

    pub fn set_f64(&mut self, key: &str, v: f64) {
        self.meta_f64.push((key.to_string(), v));
    }

    pub fn set_u64(&mut self, key: &str, v: u64) {
        self.meta_u64.push((key.to_string(), v));
    }

    pub fn set_str(&mut self, key: &str, v: &str) {
        self.meta_str.push((key.to_string(), v.to_string()));
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.meta_f64.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        self.meta_u64.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.meta_str
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: &Path) -> io::Result<Checkpoint> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        put_u64(w, self.stores.len() as u64)?;
        for (label, store) in &self.stores {
            put_str(w, label)?;
            put_u64(w, store.len() as u64)?;
            for e in store.entries() {
                put_str(w, &e.name)?;
                put_u64(w, e.shape.0 as u64)?;
                put_u64(w, e.shape.1 as u64)?;
                put_f64s(w, &e.values)?;
                put_f64s(w, &e.rms)?;
            }
        }
        put_u64(w, self.meta_f64.len() as u64)?;
        for (k, v) in &self.meta_f64 {
            put_str(w, k)?;
            w.write_all(&v.to_le_bytes())?;
        }
        put_u64(w, self.meta_u64.len() as u64)?;
        for (k, v) in &self.meta_u64 {
            put_str(w, k)?;
            put_u64(w, *v)?;
        }
        put_u64(w, self.meta_str.len() as u64)?;
        for (k, v) in &self.meta_str {
            put_str(w, k)?;
            put_str(w, v)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> io::Result<Checkpoint> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "not a checkpoint file (bad magic)",
            ));
        }
        let mut ck = Checkpoint::new();
        let n_stores = get_u64(r)?;
        for _ in 0..n_stores {
            let label = get_str(r)?;
            let n_entries = get_u64(r)?;
            let mut store = ParamStore::new();
            for _ in 0..n_entries {
                let name = get_str(r)?;
                let rows = get_u64(r)? as usize;
                let cols = get_u64(r)? as usize;
                let values = get_f64s(r, rows * cols)?;
                let rms = get_f64s(r, rows * cols)?;
                store.add(&name, (rows, cols), values);
                store.get_mut(&name).rms = rms;
            }
            ck.stores.push((label, store));
        }
        for _ in 0..get_u64(r)? {
            let k = get_str(r)?;
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            ck.meta_f64.push((k, f64::from_le_bytes(b)));
        }
        for _ in 0..get_u64(r)? {
            let k = get_str(r)?;
            let v = get_u64(r)?;
            ck.meta_u64.push((k, v));
        }
        for _ in 0..get_u64(r)? {
            let k = get_str(r)?;
            let v = get_str(r)?;
            ck.meta_str.push((k, v));
        }
        Ok(ck)
    }
}

fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn put_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    put_u64(w, s.len() as u64)?;
    w.write_all(s.as_bytes())
}

fn get_str(r: &mut impl Read) -> io::Result<String> {
    let len = get_u64(r)? as usize;
    if len > 1 << 20 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "string too long"));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bad utf-8"))
}

fn put_f64s(w: &mut impl Write, vs: &[f64]) -> io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_f64s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
