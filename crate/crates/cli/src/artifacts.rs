//! On-disk artifacts the commands pass to each other: the split file with
//! its digest marker, and the encode step shared by training and evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hierpath_core::corpus::{CorpusFormat, DatasetSplit, Report};
use hierpath_core::error::{Error, Result};
use hierpath_core::textprep::{tokenize, EncodedReport, PrepConfig, Vocabulary};

pub fn detect_format(path: &Path) -> Result<CorpusFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("xml") => Ok(CorpusFormat::Xml),
        Some("jsonl") => Ok(CorpusFormat::Jsonl),
        other => Err(Error::invalid(format!(
            "cannot infer corpus format from extension {other:?}; use .xml or .jsonl"
        ))),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// The split artifact: partition assignment plus the class list that defines
/// label indices for everything trained on this split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFile {
    pub split: DatasetSplit,
    pub classes: Vec<String>,
    pub excluded: Vec<String>,
    pub seed: u64,
}

impl SplitFile {
    pub fn to_text(&self) -> String {
        let r = &self.split.ratios;
        let mut s = format!("#ratios={},{},{}\n", r[0], r[1], r[2]);
        s.push_str(&format!("#seed={}\n", self.seed));
        s.push_str(&format!("#classes={}\n", self.classes.join(",")));
        if !self.excluded.is_empty() {
            s.push_str(&format!("#excluded={}\n", self.excluded.join(",")));
        }
        for (ids, part) in [
            (&self.split.train, "train"),
            (&self.split.validation, "validation"),
            (&self.split.test, "test"),
        ] {
            for id in ids {
                s.push_str(&format!("{id}\t{part}\n"));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<SplitFile> {
        let mut headers: BTreeMap<&str, &str> = BTreeMap::new();
        let mut split = DatasetSplit {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            ratios: [0.0; 3],
        };
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest.split_once('=').ok_or_else(|| {
                    Error::invalid(format!("split file line {}: bad header", i + 1))
                })?;
                headers.insert(k, v);
                continue;
            }
            let (id, part) = line.split_once('\t').ok_or_else(|| {
                Error::invalid(format!("split file line {}: expected id<TAB>partition", i + 1))
            })?;
            match part {
                "train" => split.train.push(id.to_string()),
                "validation" => split.validation.push(id.to_string()),
                "test" => split.test.push(id.to_string()),
                other => {
                    return Err(Error::invalid(format!(
                        "split file line {}: unknown partition `{other}`",
                        i + 1
                    )))
                }
            }
        }
        let ratios_text = headers
            .get("ratios")
            .ok_or_else(|| Error::invalid("split file missing #ratios header"))?;
        for (slot, part) in split.ratios.iter_mut().zip(ratios_text.split(',')) {
            *slot = part
                .parse()
                .map_err(|_| Error::invalid(format!("split file: bad ratio `{part}`")))?;
        }
        let classes = headers
            .get("classes")
            .ok_or_else(|| Error::invalid("split file missing #classes header"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let excluded = headers
            .get("excluded")
            .map(|v| v.split(',').map(str::to_string).collect())
            .unwrap_or_default();
        let seed = headers
            .get("seed")
            .ok_or_else(|| Error::invalid("split file missing #seed header"))?
            .parse()
            .map_err(|_| Error::invalid("split file: bad seed"))?;
        Ok(SplitFile {
            split,
            classes,
            excluded,
            seed,
        })
    }

    /// Write the split and its digest marker. The marker pins the split at
    /// split time; `eval` refuses to run if the file changed since.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_text();
        fs::write(path, &text).map_err(|e| Error::io(path.display().to_string(), e))?;
        let marker = marker_path(path);
        fs::write(&marker, format!("{}\n", sha256_hex(text.as_bytes())))
            .map_err(|e| Error::io(marker.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<SplitFile> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        SplitFile::from_text(&text)
    }

    /// Check the split file against its digest marker.
    pub fn verify_marker(path: &Path) -> Result<()> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let marker = marker_path(path);
        let recorded = fs::read_to_string(&marker)
            .map_err(|e| Error::io(marker.display().to_string(), e))?;
        let actual = sha256_hex(text.as_bytes());
        if recorded.trim() != actual {
            return Err(Error::invalid(format!(
                "split file {} does not match its digest marker; the split was modified after it was made",
                path.display()
            )));
        }
        Ok(())
    }
}

pub fn marker_path(split_path: &Path) -> PathBuf {
    let mut os = split_path.as_os_str().to_owned();
    os.push(".digest");
    PathBuf::from(os)
}

/// Tokenize, vocabulary-filter and encode one partition of a corpus.
/// `classes` defines the label indices.
pub fn encode_partition(
    reports: &[Report],
    ids: &[String],
    classes: &[String],
    vocab: &Vocabulary,
    prep: &PrepConfig,
) -> Result<Vec<EncodedReport>> {
    let by_id: BTreeMap<&str, &Report> =
        reports.iter().map(|r| (r.id.as_str(), r)).collect();
    ids.iter()
        .map(|id| {
            let r = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::invalid(format!("split names unknown report id `{id}`")))?;
            let label_index = match &r.label {
                None => None,
                Some(code) => Some(classes.iter().position(|c| c == code).ok_or_else(|| {
                    Error::invalid(format!("report {id}: code {code} not in active classes"))
                })?),
            };
            let tokens = tokenize(&r.text, prep);
            Ok(EncodedReport::new(
                id.clone(),
                &tokens,
                label_index,
                vocab,
                prep.max_len,
            ))
        })
        .collect()
}

/// Tokenized documents for a set of report ids, for vocabulary fitting.
pub fn tokenized_docs(
    reports: &[Report],
    ids: &[String],
    prep: &PrepConfig,
) -> Result<Vec<Vec<String>>> {
    let by_id: BTreeMap<&str, &Report> =
        reports.iter().map(|r| (r.id.as_str(), r)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|r| tokenize(&r.text, prep))
                .ok_or_else(|| Error::invalid(format!("split names unknown report id `{id}`")))
        })
        .collect()
}

/// Loadable grouping file: provenance, group_one, group_two.
pub fn write_grouping_file(
    grouping: &hierpath_core::hierarchy::GroupingSpec,
    path: &Path,
) -> Result<()> {
    write_text(
        path,
        &format!(
            "provenance={}\ngroup_one={}\ngroup_two={}\n",
            grouping.provenance,
            grouping.group_one.join(","),
            grouping.group_two.join(",")
        ),
    )
}

pub fn read_grouping_file(path: &Path) -> Result<hierpath_core::hierarchy::GroupingSpec> {
    use hierpath_core::hierarchy::GroupingSpec;
    let text = read_text(path)?;
    let mut provenance = None;
    let mut group_one = None;
    let mut group_two = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::invalid(format!("{} line {}: expected key=value", path.display(), i + 1))
        })?;
        let codes = || v.split(',').map(str::to_string).collect::<Vec<_>>();
        match k {
            "provenance" => provenance = Some(v.parse()?),
            "group_one" => group_one = Some(codes()),
            "group_two" => group_two = Some(codes()),
            other => {
                return Err(Error::invalid(format!(
                    "{}: unknown grouping key `{other}`",
                    path.display()
                )))
            }
        }
    }
    match (provenance, group_one, group_two) {
        (Some(p), Some(one), Some(two)) => Ok(GroupingSpec::new(one, two, p)),
        _ => Err(Error::invalid(format!(
            "{}: grouping file needs provenance, group_one and group_two",
            path.display()
        ))),
    }
}

pub fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_file_round_trip_and_marker() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.txt");
        let sf = SplitFile {
            split: DatasetSplit {
                train: vec!["a".into(), "b".into()],
                validation: vec!["c".into()],
                test: vec!["d".into()],
                ratios: [0.5, 0.25, 0.25],
            },
            classes: vec!["C50.0".into(), "C50.1".into()],
            excluded: vec!["C50.6".into()],
            seed: 9,
        };
        sf.save(&path).unwrap();
        assert_eq!(SplitFile::load(&path).unwrap(), sf);
        SplitFile::verify_marker(&path).unwrap();

        // Touching the split invalidates the marker.
        let mut text = fs::read_to_string(&path).unwrap();
        text = text.replace("d\ttest", "a\ttest");
        fs::write(&path, text).unwrap();
        assert!(SplitFile::verify_marker(&path).is_err());
    }
}
