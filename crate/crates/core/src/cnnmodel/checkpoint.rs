//! Versioned binary checkpoint container.
//!
//! Layout: 8-byte magic, u32 LE format version, u32 LE header length, a
//! UTF-8 `key=value` header block (config, vocabulary digest, class map,
//! training metadata), then one little-endian f64 block per parameter in
//! declared order, each prefixed with its u64 LE element count. The final 32
//! bytes are the SHA-256 of everything before them, so truncation and bit
//! rot surface as a corrupt-file error rather than silent weight damage.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{CnnConfig, Model, SelectionMetric};
use crate::error::{Error, Result};
use crate::nncore::{Activation, NdArray};
use crate::textprep::Vocabulary;

const MAGIC: &[u8; 8] = b"HIERPCK\0";
const VERSION: u32 = 1;

/// Best-epoch weights plus everything needed to use them safely: the
/// architecture config, the class-index map and the vocabulary digest.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    /// Class index → ICD-O code (or group label for a parent model).
    pub classes: Vec<String>,
    pub vocab_digest: String,
    pub best_epoch: usize,
    pub best_metric: f64,
}

impl Checkpoint {
    /// Error unless `vocab` is the exact vocabulary this model was trained on.
    pub fn verify_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let digest = vocab.digest();
        if digest != self.vocab_digest {
            return Err(Error::invalid(format!(
                "vocabulary digest mismatch: checkpoint has {}, supplied vocabulary has {digest}",
                self.vocab_digest
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = String::new();
        let cfg = &self.model.config;
        let windows: Vec<String> = cfg.window_sizes.iter().map(|w| w.to_string()).collect();
        header.push_str(&format!("embed_dim={}\n", cfg.embed_dim));
        header.push_str(&format!("window_sizes={}\n", windows.join(",")));
        header.push_str(&format!("maps_per_window={}\n", cfg.maps_per_window));
        header.push_str(&format!("hidden_dim={}\n", cfg.hidden_dim));
        header.push_str(&format!("dropout_p={}\n", cfg.dropout_p));
        header.push_str(&format!("activation={}\n", cfg.activation));
        header.push_str(&format!("num_classes={}\n", cfg.num_classes));
        header.push_str(&format!("epochs={}\n", cfg.epochs));
        header.push_str(&format!("batch_size={}\n", cfg.batch_size));
        header.push_str(&format!("seed={}\n", cfg.seed));
        header.push_str(&format!("selection_metric={}\n", cfg.selection_metric));
        header.push_str(&format!("vocab_rows={}\n", self.model.vocab_rows));
        header.push_str(&format!("vocab_digest={}\n", self.vocab_digest));
        header.push_str(&format!("classes={}\n", self.classes.join(",")));
        header.push_str(&format!("best_epoch={}\n", self.best_epoch));
        header.push_str(&format!("best_metric={}\n", self.best_metric));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        for arr in self.model.param_values() {
            bytes.extend_from_slice(&(arr.len() as u64).to_le_bytes());
            for v in arr.values() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&bytes);
        bytes.extend_from_slice(&digest);
        fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let corrupt = |what: &str| {
            Error::invalid(format!("corrupt checkpoint {}: {what}", path.display()))
        };
        if bytes.len() < MAGIC.len() + 8 + 32 {
            return Err(corrupt("file too short"));
        }
        let (body, stored_digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != stored_digest {
            return Err(corrupt("content digest mismatch"));
        }
        if &body[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::invalid(format!(
                "unknown checkpoint version {version} (supported: {VERSION})"
            )));
        }
        let header_len = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
        if body.len() < 16 + header_len {
            return Err(corrupt("header extends past end of file"));
        }
        let header = std::str::from_utf8(&body[16..16 + header_len])
            .map_err(|_| corrupt("header is not UTF-8"))?;
        let fields: BTreeMap<&str, &str> = header
            .lines()
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split_once('=')
                    .ok_or_else(|| corrupt(&format!("malformed header line `{l}`")))
            })
            .collect::<Result<_>>()?;
        let get = |key: &str| {
            fields
                .get(key)
                .copied()
                .ok_or_else(|| corrupt(&format!("missing header field `{key}`")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| corrupt(&format!("bad value for `{key}`")))
        };
        let window_sizes: Vec<usize> = get("window_sizes")?
            .split(',')
            .map(|w| w.parse().map_err(|_| corrupt("bad window size")))
            .collect::<Result<_>>()?;
        let config = CnnConfig {
            embed_dim: parse_usize("embed_dim")?,
            window_sizes,
            maps_per_window: parse_usize("maps_per_window")?,
            hidden_dim: parse_usize("hidden_dim")?,
            dropout_p: get("dropout_p")?
                .parse()
                .map_err(|_| corrupt("bad dropout_p"))?,
            activation: get("activation")?.parse::<Activation>()?,
            num_classes: parse_usize("num_classes")?,
            epochs: parse_usize("epochs")?,
            batch_size: parse_usize("batch_size")?,
            seed: get("seed")?.parse().map_err(|_| corrupt("bad seed"))?,
            selection_metric: get("selection_metric")?.parse::<SelectionMetric>()?,
        };
        let vocab_rows = parse_usize("vocab_rows")?;
        let classes: Vec<String> = get("classes")?.split(',').map(str::to_string).collect();
        if classes.len() != config.num_classes {
            return Err(corrupt("class map length does not match num_classes"));
        }

        let shapes = param_shapes(&config, vocab_rows);
        let mut offset = 16 + header_len;
        let mut values = Vec::with_capacity(shapes.len());
        for shape in &shapes {
            let expected: usize = shape.iter().product();
            if body.len() < offset + 8 {
                return Err(corrupt("missing parameter block"));
            }
            let count =
                u64::from_le_bytes(body[offset..offset + 8].try_into().expect("8 bytes")) as usize;
            offset += 8;
            if count != expected {
                return Err(corrupt(&format!(
                    "parameter block holds {count} values, expected {expected}"
                )));
            }
            let end = offset + count * 8;
            if body.len() < end {
                return Err(corrupt("parameter block truncated"));
            }
            let mut vals = Vec::with_capacity(count);
            for chunk in body[offset..end].chunks_exact(8) {
                vals.push(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
            }
            offset = end;
            values.push(NdArray::from_vec(shape, vals)?);
        }
        if offset != body.len() {
            return Err(corrupt("trailing bytes after parameter blocks"));
        }

        Ok(Checkpoint {
            model: Model::from_values(&config, vocab_rows, values)?,
            classes,
            vocab_digest: get("vocab_digest")?.to_string(),
            best_epoch: parse_usize("best_epoch")?,
            best_metric: get("best_metric")?
                .parse()
                .map_err(|_| corrupt("bad best_metric"))?,
        })
    }
}

/// Parameter shapes in declared order.
fn param_shapes(config: &CnnConfig, vocab_rows: usize) -> Vec<Vec<usize>> {
    let mut shapes = vec![vec![vocab_rows, config.embed_dim]];
    for &h in &config.window_sizes {
        shapes.push(vec![config.maps_per_window, h, config.embed_dim]);
        shapes.push(vec![config.maps_per_window]);
    }
    shapes.push(vec![config.hidden_dim, config.concat_width()]);
    shapes.push(vec![config.hidden_dim]);
    shapes.push(vec![config.num_classes, config.hidden_dim]);
    shapes.push(vec![config.num_classes]);
    shapes
}
