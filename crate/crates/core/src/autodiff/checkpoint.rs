//! Checkpoints: a plain-text manifest (name, shape, byte offset) followed by
//! raw little-endian float32 blobs.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::graph::ParamSet;
use crate::error::{Error, Result};

const MAGIC: &str = "MACKPT1";

pub fn save_checkpoint(params: &ParamSet, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "{}", params.len())?;
    let mut offset = 0usize;
    for p in &params.params {
        let [a, b, c, d] = p.value.shape;
        writeln!(w, "{} {a} {b} {c} {d} {offset}", p.name)?;
        offset += p.value.numel() * 4;
    }
    writeln!(w)?;
    for p in &params.params {
        for v in &p.value.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Load values into an existing parameter set; names and shapes must match.
pub fn load_checkpoint(params: &mut ParamSet, path: &Path) -> Result<()> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim() != MAGIC {
        return Err(Error::SchemaMismatch("bad checkpoint magic".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    let count: usize = line
        .trim()
        .parse()
        .map_err(|_| Error::SchemaMismatch("bad checkpoint count".into()))?;
    if count != params.len() {
        return Err(Error::SchemaMismatch(format!(
            "checkpoint has {count} params, model has {}",
            params.len()
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        line.clear();
        r.read_line(&mut line)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 6 {
            return Err(Error::SchemaMismatch("bad manifest line".into()));
        }
        let shape: [usize; 4] = [
            parts[1].parse().unwrap_or(0),
            parts[2].parse().unwrap_or(0),
            parts[3].parse().unwrap_or(0),
            parts[4].parse().unwrap_or(0),
        ];
        entries.push((parts[0].to_string(), shape));
    }
    line.clear();
    r.read_line(&mut line)?; // separator

    for (i, (name, shape)) in entries.iter().enumerate() {
        let p = &mut params.params[i];
        if &p.name != name || p.value.shape != *shape {
            return Err(Error::SchemaMismatch(format!(
                "param {i}: checkpoint {name} {shape:?} vs model {} {:?}",
                p.name, p.value.shape
            )));
        }
        let mut bytes = vec![0u8; p.value.numel() * 4];
        r.read_exact(&mut bytes)?;
        for (j, chunk) in bytes.chunks_exact(4).enumerate() {
            p.value.data[j] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    Ok(())
}
