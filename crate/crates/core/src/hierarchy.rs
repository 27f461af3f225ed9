//! Two-level hierarchical ensemble: a parent classifier predicts the class
//! group, then exactly one specialized child predicts the final code inside
//! that group (hard routing — the other child is never consulted).
//!
//! Groupings come from the expert default (the general codes C50.8/C50.9
//! against the site-specific C50.0–C50.5) or from confusion-matrix analysis;
//! provenance is recorded so runs stay auditable.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::cnnmodel::{train, Checkpoint, CnnConfig, TrainReport};
use crate::error::{Error, Result};
use crate::metrics::{f1_scores, top_confused_pairs, ConfusionMatrix, MetricsReport};
use crate::nncore::Rng;
use crate::par;
use crate::textprep::EncodedReport;

/// Class labels the parent model predicts.
pub const GROUP_LABELS: [&str; 2] = ["group-one", "group-two"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Expert,
    Suggested,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Expert => write!(f, "expert"),
            Provenance::Suggested => write!(f, "suggested"),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(Provenance::Expert),
            "suggested" => Ok(Provenance::Suggested),
            other => Err(Error::invalid(format!("unknown provenance `{other}`"))),
        }
    }
}

/// Partition of the active codes into two groups. Group codes are kept
/// sorted; their positions define each child's class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupingSpec {
    pub group_one: Vec<String>,
    pub group_two: Vec<String>,
    pub provenance: Provenance,
}

impl GroupingSpec {
    pub fn new(
        mut group_one: Vec<String>,
        mut group_two: Vec<String>,
        provenance: Provenance,
    ) -> Self {
        group_one.sort();
        group_two.sort();
        GroupingSpec {
            group_one,
            group_two,
            provenance,
        }
    }

    /// The shipped default: general codes (C50.8, C50.9) in group one,
    /// site-specific codes (C50.0–C50.5) in group two.
    pub fn expert_default() -> Self {
        GroupingSpec::new(
            vec!["C50.8".into(), "C50.9".into()],
            vec![
                "C50.0".into(),
                "C50.1".into(),
                "C50.2".into(),
                "C50.3".into(),
                "C50.4".into(),
                "C50.5".into(),
            ],
            Provenance::Expert,
        )
    }

    /// Each active code in exactly one non-empty group, nothing extra.
    pub fn validate(&self, active: &[String]) -> Result<()> {
        if self.group_one.is_empty() || self.group_two.is_empty() {
            return Err(Error::invalid("both groups must be non-empty"));
        }
        let one: BTreeSet<&str> = self.group_one.iter().map(String::as_str).collect();
        let two: BTreeSet<&str> = self.group_two.iter().map(String::as_str).collect();
        if let Some(shared) = one.intersection(&two).next() {
            return Err(Error::invalid(format!("code {shared} is in both groups")));
        }
        let union: BTreeSet<&str> = one.union(&two).copied().collect();
        let active_set: BTreeSet<&str> = active.iter().map(String::as_str).collect();
        if union != active_set {
            return Err(Error::invalid(format!(
                "grouping covers {{{}}} but the active classes are {{{}}}",
                union.into_iter().collect::<Vec<_>>().join(", "),
                active_set.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(())
    }

    /// 0 for group one, 1 for group two.
    pub fn group_of(&self, code: &str) -> Option<usize> {
        if self.group_one.iter().any(|c| c == code) {
            Some(0)
        } else if self.group_two.iter().any(|c| c == code) {
            Some(1)
        } else {
            None
        }
    }

    pub fn group_codes(&self, group: usize) -> &[String] {
        if group == 0 {
            &self.group_one
        } else {
            &self.group_two
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupingStrategy {
    /// Rank pairs by normalized symmetric confusion; emit the top two pairs
    /// as group-one candidates.
    TopPair,
    /// Emit one candidate per pair whose normalized rate reaches the bound.
    Threshold(f64),
}

/// Candidate groupings from a confusion matrix: each candidate isolates one
/// heavily confused pair in group one against the rest.
pub fn suggest_grouping(
    cm: &ConfusionMatrix,
    strategy: GroupingStrategy,
) -> Result<Vec<GroupingSpec>> {
    let k = cm.classes.len();
    if k < 3 {
        return Err(Error::invalid(format!(
            "grouping needs at least 3 classes, got {k}"
        )));
    }
    let pairs = top_confused_pairs(cm, k * (k - 1) / 2);
    let selected: Vec<_> = match strategy {
        GroupingStrategy::TopPair => pairs.into_iter().take(2).collect(),
        GroupingStrategy::Threshold(t) => {
            pairs.into_iter().filter(|p| p.rate >= t).collect()
        }
    };
    Ok(selected
        .into_iter()
        .map(|p| {
            let rest = cm
                .classes
                .iter()
                .filter(|c| **c != p.code_a && **c != p.code_b)
                .cloned()
                .collect();
            GroupingSpec::new(vec![p.code_a, p.code_b], rest, Provenance::Suggested)
        })
        .collect())
}

/// Relabel reports with their 2-class group index (group one = 0).
pub fn derive_parent_labels(
    reports: &[EncodedReport],
    classes: &[String],
    grouping: &GroupingSpec,
) -> Result<Vec<EncodedReport>> {
    reports
        .iter()
        .map(|r| {
            let ci = r
                .label_index
                .ok_or_else(|| Error::invalid(format!("report {} has no label", r.id)))?;
            let code = classes
                .get(ci)
                .ok_or_else(|| Error::invalid(format!("report {}: class index {ci} out of range", r.id)))?;
            let group = grouping
                .group_of(code)
                .ok_or_else(|| Error::invalid(format!("code {code} is outside both groups")))?;
            Ok(EncodedReport {
                id: r.id.clone(),
                indices: r.indices.clone(),
                label_index: Some(group),
            })
        })
        .collect()
}

/// One trained ensemble member below the parent.
#[derive(Debug, Clone)]
pub enum ChildModel {
    Cnn(Checkpoint),
    /// Degenerate one-class group: always predicts this code. Cross
    /// validation on tiny corpora can produce such folds and must not crash.
    Constant { code: String },
}

impl ChildModel {
    fn codes(&self) -> Vec<String> {
        match self {
            ChildModel::Cnn(c) => c.classes.clone(),
            ChildModel::Constant { code } => vec![code.clone()],
        }
    }

    fn predict(&self, indices: &[usize]) -> Result<(String, Vec<f64>)> {
        match self {
            ChildModel::Cnn(c) => {
                let (idx, probs) = c.model.predict(indices)?;
                Ok((c.classes[idx].clone(), probs.values().to_vec()))
            }
            ChildModel::Constant { code } => Ok((code.clone(), vec![1.0])),
        }
    }
}

/// The wired ensemble: grouping, 2-class parent, one child per group.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub grouping: GroupingSpec,
    pub parent: Checkpoint,
    pub child_one: ChildModel,
    pub child_two: ChildModel,
}

impl EnsembleSpec {
    /// Structural invariants: parent is 2-class over the group labels, each
    /// child owns exactly its group's codes, digests agree across members.
    pub fn validate(&self) -> Result<()> {
        if self.parent.classes != GROUP_LABELS {
            return Err(Error::invalid(format!(
                "parent classes {:?} are not the group labels",
                self.parent.classes
            )));
        }
        for (child, codes) in [
            (&self.child_one, &self.grouping.group_one),
            (&self.child_two, &self.grouping.group_two),
        ] {
            let got = child.codes();
            if &got != codes {
                return Err(Error::invalid(format!(
                    "child class map {got:?} does not match its group {codes:?}"
                )));
            }
        }
        let digest = &self.parent.vocab_digest;
        for child in [&self.child_one, &self.child_two] {
            if let ChildModel::Cnn(c) = child {
                if &c.vocab_digest != digest {
                    return Err(Error::invalid(
                        "vocabulary digest differs across ensemble members",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn vocab_digest(&self) -> &str {
        &self.parent.vocab_digest
    }
}

/// Routed prediction for one report.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutedPrediction {
    pub report_id: String,
    pub group: usize,
    pub group_probs: Vec<f64>,
    pub final_code: String,
    /// Probabilities over the chosen group's codes only.
    pub final_probs: Vec<f64>,
}

/// Predict the final code inside a fixed group (used by hard routing and by
/// oracle-routed evaluation).
pub fn predict_within_group(
    spec: &EnsembleSpec,
    group: usize,
    encoded: &EncodedReport,
) -> Result<(String, Vec<f64>)> {
    let child = if group == 0 {
        &spec.child_one
    } else {
        &spec.child_two
    };
    let (code, probs) = child.predict(&encoded.indices)?;
    if spec.grouping.group_of(&code) != Some(group) {
        return Err(Error::invalid(format!(
            "routing violation: child for group {group} produced out-of-group code {code}"
        )));
    }
    Ok((code, probs))
}

/// Hard routing: the parent picks the group (argmax, ties to group one),
/// then that group's child alone produces the final code.
pub fn ensemble_predict(spec: &EnsembleSpec, encoded: &EncodedReport) -> Result<RoutedPrediction> {
    spec.validate()?;
    let (group, group_probs) = spec.parent.model.predict(&encoded.indices)?;
    let (final_code, final_probs) = predict_within_group(spec, group, encoded)?;
    Ok(RoutedPrediction {
        report_id: encoded.id.clone(),
        group,
        group_probs: group_probs.values().to_vec(),
        final_code,
        final_probs,
    })
}

/// CSV form of a routing log: one line per routed report.
pub fn routing_log_csv(log: &[RoutedPrediction]) -> String {
    let mut s = String::from("report_id,group_prob_0,group_prob_1,routed_group,final_code\n");
    for r in log {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.report_id, r.group_probs[0], r.group_probs[1], r.group, r.final_code
        ));
    }
    s
}

fn child_class_indices(
    reports: &[EncodedReport],
    classes: &[String],
    group_codes: &[String],
) -> Result<Vec<EncodedReport>> {
    let mut out = Vec::new();
    for r in reports {
        let ci = r
            .label_index
            .ok_or_else(|| Error::invalid(format!("report {} has no label", r.id)))?;
        let code = &classes[ci];
        if let Some(pos) = group_codes.iter().position(|c| c == code) {
            out.push(EncodedReport {
                id: r.id.clone(),
                indices: r.indices.clone(),
                label_index: Some(pos),
            });
        }
    }
    Ok(out)
}

/// Per-member training reports (absent for constant children).
#[derive(Debug, Clone)]
pub struct EnsembleTrainReports {
    pub parent: TrainReport,
    pub child_one: Option<TrainReport>,
    pub child_two: Option<TrainReport>,
}

/// Train the parent and both children. Seeds derive from the master seed by
/// member index (parent 0, child one 1, child two 2); the three trainings
/// are independent jobs and may run in parallel without changing results.
#[allow(clippy::too_many_arguments)]
pub fn train_ensemble(
    train_set: &[EncodedReport],
    val_set: &[EncodedReport],
    classes: &[String],
    grouping: &GroupingSpec,
    parent_config: &CnnConfig,
    child_one_config: &CnnConfig,
    child_two_config: &CnnConfig,
    vocab_rows: usize,
    vocab_digest: &str,
    master_seed: u64,
) -> Result<(EnsembleSpec, EnsembleTrainReports)> {
    grouping.validate(classes)?;

    let parent_train = derive_parent_labels(train_set, classes, grouping)?;
    let parent_val = derive_parent_labels(val_set, classes, grouping)?;
    let group_classes: Vec<String> = GROUP_LABELS.iter().map(|s| s.to_string()).collect();
    let mut parent_cfg = parent_config.clone();
    parent_cfg.num_classes = 2;
    parent_cfg.seed = master_seed;

    let train_child = |cfg: &CnnConfig,
                       member: u64,
                       codes: &[String]|
     -> Result<(ChildModel, Option<TrainReport>)> {
        if codes.len() < 2 {
            log::warn!(
                "group with single class {}: using a constant classifier",
                codes[0]
            );
            return Ok((
                ChildModel::Constant {
                    code: codes[0].clone(),
                },
                None,
            ));
        }
        let mut cfg = cfg.clone();
        cfg.num_classes = codes.len();
        cfg.seed = master_seed.wrapping_add(member);
        let ctrain = child_class_indices(train_set, classes, codes)?;
        let cval = child_class_indices(val_set, classes, codes)?;
        let model = crate::cnnmodel::build_model(&cfg, vocab_rows, &mut Rng::new(cfg.seed))?;
        let (ckpt, report) = train(model, &ctrain, &cval, codes, vocab_digest)?;
        Ok((ChildModel::Cnn(ckpt), Some(report)))
    };

    let (parent_res, children_res) = par::join(
        || -> Result<(Checkpoint, TrainReport)> {
            let model =
                crate::cnnmodel::build_model(&parent_cfg, vocab_rows, &mut Rng::new(parent_cfg.seed))?;
            train(model, &parent_train, &parent_val, &group_classes, vocab_digest)
        },
        || {
            par::join(
                || train_child(child_one_config, 1, &grouping.group_one),
                || train_child(child_two_config, 2, &grouping.group_two),
            )
        },
    );
    let (parent, parent_report) = parent_res?;
    let (child_one, c1_report) = children_res.0?;
    let (child_two, c2_report) = children_res.1?;

    let spec = EnsembleSpec {
        grouping: grouping.clone(),
        parent,
        child_one,
        child_two,
    };
    spec.validate()?;
    Ok((
        spec,
        EnsembleTrainReports {
            parent: parent_report,
            child_one: c1_report,
            child_two: c2_report,
        },
    ))
}

/// Paired evaluation of the ensemble against a flat model on one test set.
#[derive(Debug, Clone)]
pub struct PairedEval {
    pub flat: MetricsReport,
    pub hierarchical: MetricsReport,
    pub flat_cm: ConfusionMatrix,
    pub hierarchical_cm: ConfusionMatrix,
    pub routing: Vec<RoutedPrediction>,
    pub flat_preds: Vec<usize>,
    pub hierarchical_preds: Vec<usize>,
    pub truths: Vec<usize>,
}

/// Run both systems over the identical test set.
pub fn evaluate_pipeline(
    spec: &EnsembleSpec,
    flat: &Checkpoint,
    test_set: &[EncodedReport],
    classes: &[String],
) -> Result<PairedEval> {
    if test_set.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    spec.validate()?;
    if flat.classes != classes {
        return Err(Error::invalid(format!(
            "flat model classes {:?} do not match the active classes {classes:?}",
            flat.classes
        )));
    }
    if flat.vocab_digest != spec.vocab_digest() {
        return Err(Error::invalid(
            "flat model and ensemble were trained on different vocabularies",
        ));
    }

    let mut truths = Vec::with_capacity(test_set.len());
    let mut flat_preds = Vec::with_capacity(test_set.len());
    let mut hier_preds = Vec::with_capacity(test_set.len());
    let mut routing = Vec::with_capacity(test_set.len());
    for r in test_set {
        truths.push(
            r.label_index
                .ok_or_else(|| Error::invalid(format!("test report {} has no label", r.id)))?,
        );
        flat_preds.push(flat.model.predict(&r.indices)?.0);
        let routed = ensemble_predict(spec, r)?;
        let code_index = classes
            .iter()
            .position(|c| *c == routed.final_code)
            .ok_or_else(|| {
                Error::invalid(format!("routed code {} not in active classes", routed.final_code))
            })?;
        hier_preds.push(code_index);
        routing.push(routed);
    }

    let flat_cm = ConfusionMatrix::from_indices(&truths, &flat_preds, classes)?;
    let hier_cm = ConfusionMatrix::from_indices(&truths, &hier_preds, classes)?;
    Ok(PairedEval {
        flat: f1_scores(&flat_cm)?,
        hierarchical: f1_scores(&hier_cm)?,
        flat_cm,
        hierarchical_cm: hier_cm,
        routing,
        flat_preds,
        hierarchical_preds: hier_preds,
        truths,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Plain-text ensemble manifest: grouping, member checkpoint paths and their
/// file digests. Paths are stored relative to the manifest's directory.
pub fn write_manifest(
    spec: &EnsembleSpec,
    manifest_path: &Path,
    parent_file: &str,
    child_one_file: &str,
    child_two_file: &str,
) -> Result<()> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut s = String::new();
    s.push_str(&format!("provenance={}\n", spec.grouping.provenance));
    s.push_str(&format!("group_one={}\n", spec.grouping.group_one.join(",")));
    s.push_str(&format!("group_two={}\n", spec.grouping.group_two.join(",")));
    let member = |name: &str, child: Option<&ChildModel>, file: &str| -> Result<String> {
        match child {
            Some(ChildModel::Constant { code }) => Ok(format!("{name}.constant={code}\n")),
            _ => {
                let bytes = fs::read(dir.join(file))
                    .map_err(|e| Error::io(dir.join(file).display().to_string(), e))?;
                Ok(format!(
                    "{name}.path={file}\n{name}.digest={}\n",
                    sha256_hex(&bytes)
                ))
            }
        }
    };
    s.push_str(&member("parent", None, parent_file)?);
    s.push_str(&member("child_one", Some(&spec.child_one), child_one_file)?);
    s.push_str(&member("child_two", Some(&spec.child_two), child_two_file)?);
    fs::write(manifest_path, s).map_err(|e| Error::io(manifest_path.display().to_string(), e))
}

/// Load an ensemble back from its manifest, verifying member file digests.
pub fn load_manifest(manifest_path: &Path) -> Result<EnsembleSpec> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut fields = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("manifest line {}: missing `=`", i + 1)))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |key: &str| {
        fields
            .get(key)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("manifest missing `{key}`")))
    };
    let split_codes =
        |s: String| -> Vec<String> { s.split(',').map(str::to_string).collect() };
    let grouping = GroupingSpec::new(
        split_codes(get("group_one")?),
        split_codes(get("group_two")?),
        get("provenance")?.parse()?,
    );
    let load_member = |name: &str| -> Result<(PathBuf, Checkpoint)> {
        let file = get(&format!("{name}.path"))?;
        let path = dir.join(&file);
        let bytes = fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let expected = get(&format!("{name}.digest"))?;
        let actual = sha256_hex(&bytes);
        if actual != expected {
            return Err(Error::invalid(format!(
                "manifest digest mismatch for {name}: expected {expected}, file has {actual}"
            )));
        }
        Ok((path.clone(), Checkpoint::load(&path)?))
    };
    let parent = load_member("parent")?.1;
    let load_child = |name: &str| -> Result<ChildModel> {
        if let Some(code) = fields.get(&format!("{name}.constant")) {
            Ok(ChildModel::Constant { code: code.clone() })
        } else {
            Ok(ChildModel::Cnn(load_member(name)?.1))
        }
    };
    let spec = EnsembleSpec {
        grouping,
        parent,
        child_one: load_child("child_one")?,
        child_two: load_child("child_two")?,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnnmodel::SelectionMetric;
    use crate::nncore::Activation;

    fn active_codes() -> Vec<String> {
        vec![
            "C50.0".into(),
            "C50.1".into(),
            "C50.2".into(),
            "C50.3".into(),
            "C50.4".into(),
            "C50.5".into(),
            "C50.8".into(),
            "C50.9".into(),
        ]
    }

    fn tiny_cfg() -> CnnConfig {
        CnnConfig {
            embed_dim: 6,
            window_sizes: vec![2],
            maps_per_window: 3,
            hidden_dim: 6,
            dropout_p: 0.0,
            activation: Activation::Relu,
            num_classes: 8,
            epochs: 6,
            batch_size: 8,
            seed: 0,
            selection_metric: SelectionMetric::F1Micro,
        }
    }

    /// Encoded reports whose class is recoverable from a signature token:
    /// class i gets token 2+i repeated. 8 classes, vocab rows 2+8.
    fn signature_reports(per_class: usize, max_len: usize) -> Vec<EncodedReport> {
        let mut out = Vec::new();
        for class in 0..8usize {
            for i in 0..per_class {
                let mut idx = vec![2 + class; max_len.min(4)];
                idx.resize(max_len, 0);
                out.push(EncodedReport {
                    id: format!("c{class}-{i}"),
                    indices: idx,
                    label_index: Some(class),
                });
            }
        }
        out
    }

    #[test]
    fn expert_grouping_matches_defaults_and_validates() {
        let g = GroupingSpec::expert_default();
        assert_eq!(g.group_one, vec!["C50.8".to_string(), "C50.9".to_string()]);
        assert_eq!(g.group_two.len(), 6);
        g.validate(&active_codes()).unwrap();
        assert_eq!(g.group_of("C50.9"), Some(0));
        assert_eq!(g.group_of("C50.3"), Some(1));
        assert_eq!(g.group_of("C50.6"), None);
    }

    #[test]
    fn grouping_validation_catches_overlap_and_gaps() {
        let overlap = GroupingSpec::new(
            vec!["C50.8".into(), "C50.9".into()],
            vec!["C50.8".into(), "C50.0".into()],
            Provenance::Expert,
        );
        assert!(overlap.validate(&["C50.0".into(), "C50.8".into(), "C50.9".into()]).is_err());

        let gap = GroupingSpec::expert_default();
        let mut nine = active_codes();
        nine.push("C50.6".into());
        assert!(gap.validate(&nine).is_err());
    }

    #[test]
    fn suggest_grouping_top_pair_from_heavy_off_diagonal() {
        let classes = active_codes();
        let mut counts = vec![vec![0usize; 8]; 8];
        for (i, row) in counts.iter_mut().enumerate() {
            row[i] = 20;
        }
        // Heavy confusion between C50.8 (index 6) and C50.9 (index 7).
        counts[6][7] = 9;
        counts[7][6] = 8;
        counts[0][1] = 2;
        let cm = ConfusionMatrix { classes, counts };
        let cands = suggest_grouping(&cm, GroupingStrategy::TopPair).unwrap();
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].group_one, vec!["C50.8".to_string(), "C50.9".to_string()]);
        assert_eq!(cands[0].provenance, Provenance::Suggested);
        assert_eq!(cands[0].group_two.len(), 6);
        assert_eq!(cands[1].group_one, vec!["C50.0".to_string(), "C50.1".to_string()]);
    }

    #[test]
    fn suggest_grouping_diagonal_falls_back_to_code_order() {
        let classes = vec!["C50.0".to_string(), "C50.1".to_string(), "C50.2".to_string()];
        let cm = ConfusionMatrix {
            classes,
            counts: vec![vec![5, 0, 0], vec![0, 5, 0], vec![0, 0, 5]],
        };
        let cands = suggest_grouping(&cm, GroupingStrategy::TopPair).unwrap();
        assert_eq!(cands[0].group_one, vec!["C50.0".to_string(), "C50.1".to_string()]);
        assert_eq!(cands[1].group_one, vec!["C50.0".to_string(), "C50.2".to_string()]);
    }

    #[test]
    fn suggest_grouping_exact_two_cell_case() {
        let classes = active_codes();
        let mut counts = vec![vec![0usize; 8]; 8];
        for (i, row) in counts.iter_mut().enumerate() {
            row[i] = 10;
        }
        counts[0][1] = 4;
        counts[1][0] = 3;
        let cm = ConfusionMatrix { classes, counts };
        let cands = suggest_grouping(&cm, GroupingStrategy::TopPair).unwrap();
        assert_eq!(cands[0].group_one, vec!["C50.0".to_string(), "C50.1".to_string()]);
    }

    #[test]
    fn suggest_grouping_needs_three_classes() {
        let cm = ConfusionMatrix {
            classes: vec!["A".into(), "B".into()],
            counts: vec![vec![1, 0], vec![0, 1]],
        };
        assert!(suggest_grouping(&cm, GroupingStrategy::TopPair).is_err());
    }

    #[test]
    fn parent_labels_follow_the_grouping() {
        let classes = active_codes();
        let grouping = GroupingSpec::expert_default();
        let reports = vec![
            EncodedReport {
                id: "x".into(),
                indices: vec![0; 4],
                label_index: Some(7), // C50.9
            },
            EncodedReport {
                id: "y".into(),
                indices: vec![0; 4],
                label_index: Some(3), // C50.3
            },
        ];
        let relabeled = derive_parent_labels(&reports, &classes, &grouping).unwrap();
        assert_eq!(relabeled[0].label_index, Some(0));
        assert_eq!(relabeled[1].label_index, Some(1));
    }

    #[test]
    fn parent_label_counts_partition_the_corpus() {
        let classes = active_codes();
        let grouping = GroupingSpec::expert_default();
        let reports = signature_reports(5, 6);
        let relabeled = derive_parent_labels(&reports, &classes, &grouping).unwrap();
        let group0 = relabeled
            .iter()
            .filter(|r| r.label_index == Some(0))
            .count();
        assert_eq!(group0, 10); // C50.8 + C50.9 counts
        assert_eq!(relabeled.len() - group0, 30);
    }

    fn trained_ensemble() -> (EnsembleSpec, Vec<EncodedReport>, Vec<String>) {
        let classes = active_codes();
        let grouping = GroupingSpec::expert_default();
        let reports = signature_reports(6, 6);
        let cfg = tiny_cfg();
        let (spec, _) = train_ensemble(
            &reports, &reports, &classes, &grouping, &cfg, &cfg, &cfg, 10, "digest", 42,
        )
        .unwrap();
        (spec, reports, classes)
    }

    #[test]
    fn ensemble_members_have_expected_shapes() {
        let (spec, _, _) = trained_ensemble();
        assert_eq!(spec.parent.classes, GROUP_LABELS);
        assert_eq!(spec.parent.model.config.num_classes, 2);
        match &spec.child_one {
            ChildModel::Cnn(c) => assert_eq!(c.classes.len(), 2),
            _ => panic!("child one should be a CNN"),
        }
        match &spec.child_two {
            ChildModel::Cnn(c) => assert_eq!(c.classes.len(), 6),
            _ => panic!("child two should be a CNN"),
        }
    }

    #[test]
    fn ensemble_training_is_deterministic() {
        let classes = active_codes();
        let grouping = GroupingSpec::expert_default();
        let reports = signature_reports(6, 6);
        let cfg = tiny_cfg();
        let run = || {
            train_ensemble(
                &reports, &reports, &classes, &grouping, &cfg, &cfg, &cfg, 10, "digest", 42,
            )
            .unwrap()
            .0
        };
        let (a, b) = (run(), run());
        for (x, y) in a
            .parent
            .model
            .param_values()
            .iter()
            .zip(b.parent.model.param_values())
        {
            assert_eq!(x.values(), y.values());
        }
    }

    #[test]
    fn routed_code_stays_inside_predicted_group() {
        let (spec, reports, _) = trained_ensemble();
        for r in &reports {
            let routed = ensemble_predict(&spec, r).unwrap();
            assert!(
                spec.grouping.group_of(&routed.final_code) == Some(routed.group),
                "{routed:?}"
            );
            assert_eq!(routed.group_probs.len(), 2);
        }
    }

    #[test]
    fn oracle_parent_gives_block_diagonal_composition() {
        let (spec, reports, classes) = trained_ensemble();
        // Route by ground truth group; confusion must be block diagonal and
        // each block must equal the child's own confusion on its subset.
        let mut truths = Vec::new();
        let mut preds = Vec::new();
        for r in &reports {
            let code = &classes[r.label_index.unwrap()];
            let group = spec.grouping.group_of(code).unwrap();
            let (pred_code, _) = predict_within_group(&spec, group, r).unwrap();
            truths.push(r.label_index.unwrap());
            preds.push(classes.iter().position(|c| c == &pred_code).unwrap());
        }
        let cm = ConfusionMatrix::from_indices(&truths, &preds, &classes).unwrap();
        for (t, row) in cm.counts.iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                if count > 0 {
                    let gt = spec.grouping.group_of(&classes[t]);
                    let gp = spec.grouping.group_of(&classes[p]);
                    assert_eq!(gt, gp, "cross-group cell ({t}, {p}) has {count}");
                }
            }
        }
    }

    #[test]
    fn constant_child_for_single_class_group() {
        let classes = vec!["C50.0".to_string(), "C50.1".to_string(), "C50.2".to_string()];
        let grouping = GroupingSpec::new(
            vec!["C50.2".into()],
            vec!["C50.0".into(), "C50.1".into()],
            Provenance::Suggested,
        );
        let mut reports = Vec::new();
        for class in 0..3usize {
            for i in 0..6 {
                let mut idx = vec![2 + class; 3];
                idx.resize(6, 0);
                reports.push(EncodedReport {
                    id: format!("r{class}-{i}"),
                    indices: idx,
                    label_index: Some(class),
                });
            }
        }
        let mut cfg = tiny_cfg();
        cfg.num_classes = 3;
        let (spec, _) = train_ensemble(
            &reports, &reports, &classes, &grouping, &cfg, &cfg, &cfg, 10, "digest", 1,
        )
        .unwrap();
        match &spec.child_one {
            ChildModel::Constant { code } => assert_eq!(code, "C50.2"),
            _ => panic!("expected constant child"),
        }
        // Pipeline still routes without crashing.
        for r in &reports {
            ensemble_predict(&spec, r).unwrap();
        }
    }

    #[test]
    fn paired_evaluation_runs_and_flags_empty_test() {
        let (spec, reports, classes) = trained_ensemble();
        let flat_cfg = tiny_cfg();
        let flat_model =
            crate::cnnmodel::build_model(&flat_cfg, 10, &mut Rng::new(9)).unwrap();
        let (flat, _) = train(flat_model, &reports, &reports, &classes, "digest").unwrap();
        let eval = evaluate_pipeline(&spec, &flat, &reports, &classes).unwrap();
        assert_eq!(eval.routing.len(), reports.len());
        assert_eq!(eval.flat_cm.total(), reports.len());
        assert_eq!(eval.hierarchical_cm.total(), reports.len());
        assert!(evaluate_pipeline(&spec, &flat, &[], &classes).is_err());
    }

    #[test]
    fn digest_mismatch_across_members_is_rejected() {
        let (mut spec, reports, _) = trained_ensemble();
        if let ChildModel::Cnn(c) = &mut spec.child_one {
            c.vocab_digest = "other".into();
        }
        assert!(ensemble_predict(&spec, &reports[0]).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        use tempfile::tempdir;
        let (spec, _, _) = trained_ensemble();
        let dir = tempdir().unwrap();
        spec.parent.save(&dir.path().join("parent.ckpt")).unwrap();
        if let ChildModel::Cnn(c) = &spec.child_one {
            c.save(&dir.path().join("child-one.ckpt")).unwrap();
        }
        if let ChildModel::Cnn(c) = &spec.child_two {
            c.save(&dir.path().join("child-two.ckpt")).unwrap();
        }
        let manifest = dir.path().join("ensemble-manifest.txt");
        write_manifest(&spec, &manifest, "parent.ckpt", "child-one.ckpt", "child-two.ckpt")
            .unwrap();
        let loaded = load_manifest(&manifest).unwrap();
        assert_eq!(loaded.grouping, spec.grouping);
        assert_eq!(loaded.parent.classes, spec.parent.classes);

        // Tampering with a member file breaks the manifest digest.
        let mut bytes = fs::read(dir.path().join("parent.ckpt")).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xFF;
        fs::write(dir.path().join("parent.ckpt"), bytes).unwrap();
        let err = load_manifest(&manifest).unwrap_err().to_string();
        assert!(err.contains("digest"), "{err}");
    }
}
