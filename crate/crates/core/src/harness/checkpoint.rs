//! Text checkpoints: header `sbnlab-ckpt v1`, then one line per tensor with
//! its name, shape and 17-significant-digit values. Round-trips bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array1;

use crate::error::Error;
use crate::sbn::NetworkSpec;
use crate::stream::fnv1a64;
use crate::Result;

const HEADER: &str = "sbnlab-ckpt v1";

/// Serialise every trainable tensor of the network.
pub fn render_checkpoint(net: &NetworkSpec) -> String {
    let flat = net.params_flat();
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for entry in &net.layout().entries {
        out.push_str(&entry.name);
        for d in &entry.shape {
            let _ = write!(out, " {d}");
        }
        for i in entry.offset..entry.offset + entry.len() {
            let _ = write!(out, " {:.16e}", flat[i]);
        }
        out.push('\n');
    }
    out
}

pub fn save_checkpoint(net: &NetworkSpec, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render_checkpoint(net))?;
    Ok(())
}

/// Parse a checkpoint into the network's parameters. Tensor names and shapes
/// must match the network's layout exactly.
pub fn load_checkpoint(net: &mut NetworkSpec, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    apply_checkpoint(net, &text)
}

pub fn apply_checkpoint(net: &mut NetworkSpec, text: &str) -> Result<()> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => {
            return Err(Error::Data { line: 1, msg: format!("expected header `{HEADER}`") });
        }
    }
    let mut flat = net.params_flat();
    let mut seen = vec![false; net.layout().entries.len()];
    for (i, raw) in lines {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().expect("non-empty line");
        let (idx, entry) = net
            .layout()
            .entries
            .iter()
            .enumerate()
            .find(|(_, e)| e.name == name)
            .ok_or_else(|| Error::Data {
                line: lineno,
                msg: format!("unknown tensor `{name}`"),
            })?;
        if seen[idx] {
            return Err(Error::Data { line: lineno, msg: format!("tensor `{name}` repeated") });
        }
        seen[idx] = true;
        for (k, want) in entry.shape.iter().enumerate() {
            let got: usize = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::Data {
                    line: lineno,
                    msg: format!("bad shape for `{name}`"),
                })?;
            if got != *want {
                return Err(Error::Data {
                    line: lineno,
                    msg: format!("shape mismatch for `{name}` dim {k}: {got} vs {want}"),
                });
            }
        }
        for j in 0..entry.len() {
            let v: f64 = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::Data {
                    line: lineno,
                    msg: format!("missing value {j} for `{name}`"),
                })?;
            flat[entry.offset + j] = v;
        }
        if parts.next().is_some() {
            return Err(Error::Data { line: lineno, msg: format!("trailing values for `{name}`") });
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Data {
            line: 1,
            msg: format!("tensor `{}` missing", net.layout().entries[missing].name),
        });
    }
    net.set_params_flat(flat.view())
}

/// Stable content hash of a parameter snapshot (hex FNV-1a of the rendered
/// checkpoint text).
pub fn checkpoint_hash(net: &NetworkSpec) -> String {
    format!("{:016x}", fnv1a64(render_checkpoint(net).as_bytes()))
}

/// Hash of a flat parameter vector (for recording byte-identical snapshots).
pub fn params_hash(flat: &Array1<f64>) -> String {
    let mut bytes = Vec::with_capacity(flat.len() * 8);
    for v in flat.iter() {
        bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    format!("{:016x}", fnv1a64(&bytes))
}
