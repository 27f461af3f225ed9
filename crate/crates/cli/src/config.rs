//! Run configuration: a flat `key = value` file with `[section]` headers,
//! overridden by CLI flags. Unknown keys are rejected, and every command
//! writes the effective merged config next to its outputs so a run can be
//! reproduced from the artifacts alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hierpath_core::cnnmodel::{CnnConfig, SelectionMetric};
use hierpath_core::corpus::SyntheticSpec;
use hierpath_core::error::{Error, Result};
use hierpath_core::nncore::Activation;
use hierpath_core::textprep::PrepConfig;

/// Every key the config file may contain.
const KNOWN_KEYS: &[&str] = &[
    "seed.master",
    "corpus.classes",
    "policy.min_count",
    "synthetic.seed",
    "synthetic.reports_per_class",
    "synthetic.tokens_min",
    "synthetic.tokens_max",
    "synthetic.signature_size",
    "synthetic.shared_size",
    "synthetic.signature_strength",
    "synthetic.confusable_pairs",
    "prep.top_k",
    "prep.max_len",
    "prep.stopwords",
    "prep.afrikaans_filter",
    "prep.afrikaans_wordlist",
    "prep.afrikaans_ratio_threshold",
    "split.ratios",
    "model.embed_dim",
    "model.window_sizes",
    "model.maps_per_window",
    "model.hidden_dim",
    "model.dropout",
    "model.activation",
    "model.epochs",
    "model.batch_size",
    "model.selection_metric",
    "model.parent.embed_dim",
    "model.parent.window_sizes",
    "model.parent.maps_per_window",
    "model.parent.hidden_dim",
    "model.parent.dropout",
    "model.parent.activation",
    "model.parent.epochs",
    "model.parent.batch_size",
    "model.parent.selection_metric",
    "model.child-one.embed_dim",
    "model.child-one.window_sizes",
    "model.child-one.maps_per_window",
    "model.child-one.hidden_dim",
    "model.child-one.dropout",
    "model.child-one.activation",
    "model.child-one.epochs",
    "model.child-one.batch_size",
    "model.child-one.selection_metric",
    "model.child-two.embed_dim",
    "model.child-two.window_sizes",
    "model.child-two.maps_per_window",
    "model.child-two.hidden_dim",
    "model.child-two.dropout",
    "model.child-two.activation",
    "model.child-two.epochs",
    "model.child-two.batch_size",
    "model.child-two.selection_metric",
    "crossval.k",
    "bootstrap.n_resamples",
    "bootstrap.level",
    "grouping.strategy",
];

/// The eight classes the desk-scale experiments run on by default.
pub const DEFAULT_CLASSES: [&str; 8] = [
    "C50.0", "C50.1", "C50.2", "C50.3", "C50.4", "C50.5", "C50.8", "C50.9",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!(
                    "{} line {}: expected `key = value`",
                    path.display(),
                    i + 1
                ))
            })?;
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            cfg.set(&full, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::invalid(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::invalid(format!("config `{key}`: bad value `{v}`"))),
        }
    }

    fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        })
    }

    /// Master seed: explicit flag beats the file, which beats `HIERPATH_SEED`,
    /// which beats the default 42.
    pub fn master_seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Some(v) = self.get("seed.master") {
            return v
                .parse()
                .map_err(|_| Error::invalid(format!("config `seed.master`: bad value `{v}`")));
        }
        if let Ok(env) = std::env::var("HIERPATH_SEED") {
            return env
                .parse()
                .map_err(|_| Error::invalid(format!("HIERPATH_SEED: bad value `{env}`")));
        }
        Ok(42)
    }

    pub fn classes(&self) -> Vec<String> {
        self.list("corpus.classes")
            .unwrap_or_else(|| DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect())
    }

    pub fn min_count(&self) -> Result<usize> {
        self.parse_or("policy.min_count", 0)
    }

    pub fn split_ratios(&self) -> Result<[f64; 3]> {
        match self.list("split.ratios") {
            None => Ok([0.8, 0.1, 0.1]),
            Some(parts) => {
                if parts.len() != 3 {
                    return Err(Error::invalid("split.ratios needs three fractions"));
                }
                let mut out = [0.0; 3];
                for (o, p) in out.iter_mut().zip(&parts) {
                    *o = p
                        .parse()
                        .map_err(|_| Error::invalid(format!("split.ratios: bad value `{p}`")))?;
                }
                Ok(out)
            }
        }
    }

    pub fn synthetic_spec(&self, master_seed: u64) -> Result<SyntheticSpec> {
        let codes = self.classes();
        let mut pairs = Vec::new();
        let pair_text = self
            .get("synthetic.confusable_pairs")
            .unwrap_or("C50.8:C50.9:0.5");
        if !pair_text.trim().is_empty() {
            for part in pair_text.split(',') {
                let fields: Vec<&str> = part.trim().split(':').collect();
                if fields.len() != 3 {
                    return Err(Error::invalid(format!(
                        "confusable pair `{part}` must be code:code:overlap"
                    )));
                }
                let overlap: f64 = fields[2].parse().map_err(|_| {
                    Error::invalid(format!("confusable pair overlap `{}`", fields[2]))
                })?;
                pairs.push((fields[0].to_string(), fields[1].to_string(), overlap));
            }
        }
        // Drop pairs naming classes outside the active list (e.g. after a
        // --classes filter), so the default pair never breaks subset runs.
        pairs.retain(|(a, b, _)| codes.contains(a) && codes.contains(b));
        Ok(SyntheticSpec::uniform(
            &codes,
            self.parse_or("synthetic.signature_size", 12)?,
            self.parse_or("synthetic.shared_size", 300)?,
            self.parse_or("synthetic.signature_strength", 0.35)?,
            self.parse_or("synthetic.reports_per_class", 275)?,
            (
                self.parse_or("synthetic.tokens_min", 40)?,
                self.parse_or("synthetic.tokens_max", 80)?,
            ),
            pairs,
            self.parse_or("synthetic.seed", master_seed)?,
        ))
    }

    pub fn prep_config(&self) -> Result<PrepConfig> {
        let cfg = PrepConfig {
            stopword_list: self.list("prep.stopwords").unwrap_or_default(),
            top_k: self.parse_or("prep.top_k", 1400)?,
            max_len: self.parse_or("prep.max_len", 400)?,
            afrikaans_wordlist: self.list("prep.afrikaans_wordlist").unwrap_or_default(),
            afrikaans_ratio_threshold: self.parse_or("prep.afrikaans_ratio_threshold", 0.8)?,
            afrikaans_filter_enabled: self.parse_or("prep.afrikaans_filter", false)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Model config for one classifier role: `model.*` keys overridden by
    /// `model.<role>.*` keys. Class count and seed are wired by the caller.
    pub fn model_config(&self, role: Option<&str>) -> Result<CnnConfig> {
        let base = CnnConfig::default();
        let key = |name: &str| -> String {
            match role {
                Some(r) => format!("model.{r}.{name}"),
                None => format!("model.{name}"),
            }
        };
        let fallback = |name: &str| -> String { format!("model.{name}") };
        let lookup = |name: &str| -> Option<&str> {
            self.get(&key(name)).or_else(|| {
                if role.is_some() {
                    self.get(&fallback(name))
                } else {
                    None
                }
            })
        };
        let parse = |name: &str, default_: String| -> Result<String> {
            Ok(lookup(name).map(str::to_string).unwrap_or(default_))
        };
        let windows: Vec<usize> = parse(
            "window_sizes",
            base.window_sizes
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )?
        .split(',')
        .map(|w| {
            w.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad window size `{w}`")))
        })
        .collect::<Result<_>>()?;
        let cfg = CnnConfig {
            embed_dim: parse("embed_dim", base.embed_dim.to_string())?
                .parse()
                .map_err(|_| Error::invalid("bad embed_dim"))?,
            window_sizes: windows,
            maps_per_window: parse("maps_per_window", base.maps_per_window.to_string())?
                .parse()
                .map_err(|_| Error::invalid("bad maps_per_window"))?,
            hidden_dim: parse("hidden_dim", base.hidden_dim.to_string())?
                .parse()
                .map_err(|_| Error::invalid("bad hidden_dim"))?,
            dropout_p: parse("dropout", base.dropout_p.to_string())?
                .parse()
                .map_err(|_| Error::invalid("bad dropout"))?,
            activation: parse("activation", base.activation.to_string())?
                .parse::<Activation>()?,
            num_classes: base.num_classes,
            epochs: parse("epochs", base.epochs.to_string())?
                .parse()
                .map_err(|_| Error::invalid("bad epochs"))?,
            batch_size: parse("batch_size", base.batch_size.to_string())?
                .parse()
                .map_err(|_| Error::invalid("bad batch_size"))?,
            seed: 0,
            selection_metric: parse("selection_metric", base.selection_metric.to_string())?
                .parse::<SelectionMetric>()?,
        };
        Ok(cfg)
    }

    pub fn crossval_k(&self) -> Result<usize> {
        self.parse_or("crossval.k", 10)
    }

    pub fn grouping_strategy(&self) -> Option<&str> {
        self.get("grouping.strategy")
    }

    pub fn bootstrap_params(&self) -> Result<(usize, f64)> {
        Ok((
            self.parse_or("bootstrap.n_resamples", 1000)?,
            self.parse_or("bootstrap.level", 0.95)?,
        ))
    }

    /// The effective merged configuration, one sorted `key = value` per line.
    pub fn snapshot(&self, master_seed: u64) -> String {
        let mut s = format!("seed.master = {master_seed}\n");
        for (k, v) in &self.values {
            if k != "seed.master" {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    /// Write the snapshot next to a command's outputs.
    pub fn write_snapshot(&self, out_dir: &Path, command: &str, master_seed: u64) -> Result<()> {
        let path = out_dir.join(format!("{command}-effective-config.txt"));
        fs::write(&path, self.snapshot(master_seed))
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Expand a `--classes` argument: comma-separated codes, where an item may
/// be a range like `C50.0..C50.5` over the final digit.
pub fn expand_classes(arg: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for item in arg.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            None => out.push(item.to_string()),
            Some((lo, hi)) => {
                let (lo_prefix, lo_digit) = lo.split_at(lo.len().saturating_sub(1));
                let (hi_prefix, hi_digit) = hi.split_at(hi.len().saturating_sub(1));
                if lo_prefix != hi_prefix || lo_prefix.is_empty() {
                    return Err(Error::invalid(format!(
                        "class range `{item}` must share a prefix, e.g. C50.0..C50.5"
                    )));
                }
                let (a, b) = (
                    lo_digit.parse::<u8>().map_err(|_| {
                        Error::invalid(format!("class range `{item}`: bad start"))
                    })?,
                    hi_digit.parse::<u8>().map_err(|_| {
                        Error::invalid(format!("class range `{item}`: bad end"))
                    })?,
                );
                if a > b {
                    return Err(Error::invalid(format!("class range `{item}` is reversed")));
                }
                for d in a..=b {
                    out.push(format!("{lo_prefix}{d}"));
                }
            }
        }
    }
    Ok(out)
}
