//! Report ingestion, class-inclusion policy, stratified splits,
//! cross-validation folds and seeded synthetic corpora.
//!
//! Everything here is pure given (inputs, seed): classes are always
//! processed in sorted code order and per-class report lists in input order
//! before the seeded shuffle, so the same corpus and seed reproduce the same
//! partitioning on any platform.

mod io;
mod synthetic;

pub use io::{load_reports, write_jsonl, write_xml, CorpusFormat};
pub use synthetic::{generate_synthetic, ClassSpec, SyntheticSpec};

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::nncore::Rng;

/// One pathology document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub id: String,
    pub text: String,
    /// ICD-O topography code, e.g. `C50.4`.
    pub label: Option<String>,
}

impl Report {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("report with empty id"));
        }
        if let Some(code) = &self.label {
            if !is_valid_code(code) {
                return Err(Error::invalid(format!(
                    "report {}: label `{code}` does not match C<2 digits>.<1 digit>",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// `C<2 digits>.<1 digit>`.
pub fn is_valid_code(code: &str) -> bool {
    let b = code.as_bytes();
    b.len() == 5
        && b[0] == b'C'
        && b[1].is_ascii_digit()
        && b[2].is_ascii_digit()
        && b[3] == b'.'
        && b[4].is_ascii_digit()
}

/// The fixed code universe and the class-inclusion threshold.
/// Code order defines class-index assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSchema {
    pub codes: Vec<String>,
    pub min_count: usize,
}

impl LabelSchema {
    pub fn new(codes: Vec<String>, min_count: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &codes {
            if !seen.insert(c.clone()) {
                return Err(Error::invalid(format!("duplicate code `{c}` in schema")));
            }
        }
        Ok(LabelSchema { codes, min_count })
    }

    /// The nine breast-cancer topography codes (there is no C50.7) with the
    /// more-than-200-reports inclusion threshold.
    pub fn icdo_breast() -> Self {
        let codes = ["C50.0", "C50.1", "C50.2", "C50.3", "C50.4", "C50.5", "C50.6", "C50.8", "C50.9"]
            .into_iter()
            .map(str::to_string)
            .collect();
        LabelSchema {
            codes,
            min_count: 200,
        }
    }

    pub fn class_index(&self, code: &str) -> Option<usize> {
        self.codes.iter().position(|c| c == code)
    }
}

/// Disjoint train/validation/test id lists.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub ratios: [f64; 3],
}

impl DatasetSplit {
    pub fn partition_of(&self, id: &str) -> Option<&'static str> {
        if self.train.iter().any(|x| x == id) {
            Some("train")
        } else if self.validation.iter().any(|x| x == id) {
            Some("validation")
        } else if self.test.iter().any(|x| x == id) {
            Some("test")
        } else {
            None
        }
    }
}

/// Assignment of every report id to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_ids(&self, fold: usize) -> Vec<String> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.clone())
            .collect()
    }
}

/// Drop every code whose report count is not strictly greater than
/// `schema.min_count`, together with all its reports.
///
/// Returns the kept reports in their original order and the excluded codes
/// sorted. Codes in the schema with zero reports are listed as excluded too.
pub fn apply_class_policy(
    reports: &[Report],
    schema: &LabelSchema,
) -> Result<(Vec<Report>, Vec<String>)> {
    let mut counts: BTreeMap<&str, usize> = schema.codes.iter().map(|c| (c.as_str(), 0)).collect();
    for r in reports {
        let label = r.label.as_deref().ok_or_else(|| {
            Error::invalid(format!("report {} has no label; policy needs labels", r.id))
        })?;
        match counts.get_mut(label) {
            Some(c) => *c += 1,
            None => {
                return Err(Error::invalid(format!(
                    "report {}: label `{label}` is outside the schema",
                    r.id
                )))
            }
        }
    }
    let excluded: Vec<String> = counts
        .iter()
        .filter(|(_, &n)| n <= schema.min_count)
        .map(|(c, _)| c.to_string())
        .collect();
    let excluded_set: HashSet<&str> = excluded.iter().map(String::as_str).collect();
    let kept = reports
        .iter()
        .filter(|r| !excluded_set.contains(r.label.as_deref().unwrap()))
        .cloned()
        .collect();
    Ok((kept, excluded))
}

/// Group report indices by label, classes in sorted code order,
/// reports in input order within each class.
fn by_class(reports: &[Report]) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in reports.iter().enumerate() {
        let label = r
            .label
            .clone()
            .ok_or_else(|| Error::invalid(format!("report {} has no label", r.id)))?;
        groups.entry(label).or_default().push(i);
    }
    Ok(groups)
}

/// Largest-remainder allocation of `n` items to the three ratios,
/// ties broken by partition order (train, validation, test).
fn allocate(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - alloc[a] as f64;
        let fb = quotas[b] - alloc[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        alloc[order[i % 3]] += 1;
    }
    [alloc[0], alloc[1], alloc[2]]
}

/// Per-class stratified split with largest-remainder rounding.
/// Deterministic for a fixed (input order, seed).
pub fn stratified_split(reports: &[Report], ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios sum to {sum}, not 1")));
    }
    if ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::invalid("split ratios must be non-negative"));
    }
    let groups = by_class(reports)?;
    let mut rng = Rng::new(seed);
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        ratios,
    };
    for (code, mut idxs) in groups {
        if idxs.len() < 3 {
            return Err(Error::invalid(format!(
                "class {code} has only {} reports; need at least 3 to split",
                idxs.len()
            )));
        }
        rng.shuffle(&mut idxs);
        let [n_train, n_val, _] = allocate(idxs.len(), &ratios);
        if n_train == 0 {
            return Err(Error::invalid(format!(
                "class {code} too small to place at least one report in train"
            )));
        }
        for (pos, &i) in idxs.iter().enumerate() {
            let id = reports[i].id.clone();
            if pos < n_train {
                split.train.push(id);
            } else if pos < n_train + n_val {
                split.validation.push(id);
            } else {
                split.test.push(id);
            }
        }
    }
    Ok(split)
}

/// Per-class balanced k-fold plan. The remainder is rotated by the class
/// rank so no single fold collects every class's extra report.
pub fn make_folds(reports: &[Report], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count {k} must be at least 2")));
    }
    let groups = by_class(reports)?;
    let mut rng = Rng::new(seed);
    let mut assignment = BTreeMap::new();
    for (rank, (code, mut idxs)) in groups.into_iter().enumerate() {
        if idxs.len() < k {
            return Err(Error::invalid(format!(
                "class {code} has {} reports, fewer than {k} folds",
                idxs.len()
            )));
        }
        rng.shuffle(&mut idxs);
        for (pos, &i) in idxs.iter().enumerate() {
            assignment.insert(reports[i].id.clone(), (pos + rank) % k);
        }
    }
    Ok(FoldPlan { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(id: &str, code: &str) -> Report {
        Report {
            id: id.to_string(),
            text: format!("text for {id}"),
            label: Some(code.to_string()),
        }
    }

    fn uniform_corpus(per_class: usize, codes: &[&str]) -> Vec<Report> {
        let mut out = Vec::new();
        for code in codes {
            for i in 0..per_class {
                out.push(labeled(&format!("{code}-{i}"), code));
            }
        }
        out
    }

    #[test]
    fn code_pattern() {
        assert!(is_valid_code("C50.4"));
        assert!(!is_valid_code("C5.4"));
        assert!(!is_valid_code("C50.41"));
        assert!(!is_valid_code("D50.4"));
        assert!(!is_valid_code("C50x4"));
    }

    #[test]
    fn policy_excludes_low_count_class() {
        let mut reports = uniform_corpus(201, &["C50.0", "C50.1"]);
        reports.extend(uniform_corpus(150, &["C50.6"]));
        let schema = LabelSchema::new(
            vec!["C50.0".into(), "C50.1".into(), "C50.6".into()],
            200,
        )
        .unwrap();
        let (kept, excluded) = apply_class_policy(&reports, &schema).unwrap();
        assert_eq!(excluded, vec!["C50.6".to_string()]);
        assert_eq!(kept.len(), 402);
        assert!(kept.iter().all(|r| r.label.as_deref() != Some("C50.6")));
    }

    #[test]
    fn policy_boundary_is_strict() {
        // Exactly min_count reports → excluded ("greater than" retained).
        let reports = uniform_corpus(200, &["C50.0"]);
        let schema = LabelSchema::new(vec!["C50.0".into()], 200).unwrap();
        let (kept, excluded) = apply_class_policy(&reports, &schema).unwrap();
        assert_eq!(excluded, vec!["C50.0".to_string()]);
        assert!(kept.is_empty());
        // One more report → kept.
        let reports = uniform_corpus(201, &["C50.0"]);
        let (kept, excluded) = apply_class_policy(&reports, &schema).unwrap();
        assert!(excluded.is_empty());
        assert_eq!(kept.len(), 201);
    }

    #[test]
    fn policy_no_op_when_all_above() {
        let reports = uniform_corpus(5, &["C50.0", "C50.1"]);
        let schema = LabelSchema::new(vec!["C50.0".into(), "C50.1".into()], 1).unwrap();
        let (kept, excluded) = apply_class_policy(&reports, &schema).unwrap();
        assert!(excluded.is_empty());
        assert_eq!(kept, reports);
    }

    #[test]
    fn policy_rejects_unlabeled_and_foreign_labels() {
        let schema = LabelSchema::new(vec!["C50.0".into()], 0).unwrap();
        let unlabeled = vec![Report {
            id: "x".into(),
            text: String::new(),
            label: None,
        }];
        assert!(apply_class_policy(&unlabeled, &schema).is_err());
        let foreign = vec![labeled("y", "C50.9")];
        let err = apply_class_policy(&foreign, &schema).unwrap_err().to_string();
        assert!(err.contains("C50.9"), "{err}");
    }

    #[test]
    fn split_exact_divisibility() {
        let reports = uniform_corpus(10, &["C50.0", "C50.1", "C50.2", "C50.3"]);
        let split = stratified_split(&reports, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!(split.train.len(), 32);
        assert_eq!(split.validation.len(), 4);
        assert_eq!(split.test.len(), 4);
    }

    #[test]
    fn split_is_deterministic() {
        let reports = uniform_corpus(13, &["C50.0", "C50.1"]);
        let a = stratified_split(&reports, [0.8, 0.1, 0.1], 42).unwrap();
        let b = stratified_split(&reports, [0.8, 0.1, 0.1], 42).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&reports, [0.8, 0.1, 0.1], 43).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn split_largest_remainder_case() {
        // 21 reports, 80/10/10 → 17/2/2.
        let reports = uniform_corpus(21, &["C50.0"]);
        let split = stratified_split(&reports, [0.8, 0.1, 0.1], 1).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (17, 2, 2)
        );
    }

    #[test]
    fn split_rounding_matches_brute_force_for_all_small_sizes() {
        // Largest-remainder check for every class size 3..=30.
        for n in 3..=30usize {
            let reports = uniform_corpus(n, &["C50.0"]);
            let split = stratified_split(&reports, [0.8, 0.1, 0.1], 5).unwrap();
            let got = [split.train.len(), split.validation.len(), split.test.len()];
            assert_eq!(got.iter().sum::<usize>(), n);
            for (g, r) in got.iter().zip([0.8, 0.1, 0.1]) {
                assert!(
                    (*g as f64 - r * n as f64).abs() <= 1.0 + 1e-9,
                    "n={n}: {got:?}"
                );
            }
        }
    }

    #[test]
    fn split_disjoint_and_covers() {
        let reports = uniform_corpus(9, &["C50.0", "C50.1", "C50.8"]);
        let split = stratified_split(&reports, [0.6, 0.2, 0.2], 99).unwrap();
        let mut all: Vec<&String> = split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
            .collect();
        all.sort();
        let mut expect: Vec<&String> = reports.iter().map(|r| &r.id).collect();
        expect.sort();
        assert_eq!(all.len(), reports.len());
        assert_eq!(all, expect);
    }

    #[test]
    fn split_rejects_tiny_class() {
        let reports = uniform_corpus(2, &["C50.0"]);
        let err = stratified_split(&reports, [0.8, 0.1, 0.1], 0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("C50.0"), "{err}");
    }

    #[test]
    fn folds_exact_divisibility() {
        let reports = uniform_corpus(20, &["C50.0"]);
        let plan = make_folds(&reports, 10, 3).unwrap();
        for fold in 0..10 {
            assert_eq!(plan.fold_ids(fold).len(), 2);
        }
    }

    #[test]
    fn folds_balance_23_over_10() {
        let reports = uniform_corpus(23, &["C50.0"]);
        let plan = make_folds(&reports, 10, 3).unwrap();
        let mut sizes: Vec<usize> = (0..10).map(|f| plan.fold_ids(f).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 2, 2, 2, 3, 3, 3]);
    }

    #[test]
    fn folds_minimal_two_by_two() {
        let reports = uniform_corpus(2, &["C50.0", "C50.1"]);
        let plan = make_folds(&reports, 2, 8).unwrap();
        for fold in 0..2 {
            let ids = plan.fold_ids(fold);
            assert_eq!(ids.len(), 2);
            let c0 = ids.iter().filter(|i| i.starts_with("C50.0")).count();
            assert_eq!(c0, 1);
        }
    }

    #[test]
    fn folds_reject_small_class() {
        let reports = uniform_corpus(5, &["C50.0"]);
        let err = make_folds(&reports, 10, 0).unwrap_err().to_string();
        assert!(err.contains("C50.0"), "{err}");
    }

    #[test]
    fn folds_per_class_balance_holds_generally() {
        let mut reports = uniform_corpus(23, &["C50.0", "C50.1"]);
        reports.extend(uniform_corpus(31, &["C50.8"]));
        let plan = make_folds(&reports, 10, 11).unwrap();
        for code in ["C50.0", "C50.1", "C50.8"] {
            let mut per_fold = vec![0usize; 10];
            for (id, &f) in &plan.assignment {
                if id.starts_with(code) {
                    per_fold[f] += 1;
                }
            }
            let max = per_fold.iter().max().unwrap();
            let min = per_fold.iter().min().unwrap();
            assert!(max - min <= 1, "{code}: {per_fold:?}");
        }
    }
}
