use std::path::Path;

use hierpath_core::cnnmodel::Checkpoint;
use hierpath_core::corpus::load_reports;
use hierpath_core::error::{Error, Result};
use hierpath_core::hierarchy::{evaluate_pipeline, load_manifest, routing_log_csv};
use hierpath_core::metrics::{bootstrap_ci, ConfidenceInterval, MetricKind, MetricsReport};
use hierpath_core::textprep::Vocabulary;

use super::{seeds, Ctx};
use crate::artifacts::{create_out_dir, detect_format, encode_partition, write_text, SplitFile};

fn attach_cis(
    report: &mut MetricsReport,
    truths: &[usize],
    preds: &[usize],
    classes: &[String],
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<()> {
    let mut run = |kind: MetricKind| -> Result<ConfidenceInterval> {
        let (ci, notes) = bootstrap_ci(truths, preds, classes, kind, n_resamples, level, seed)?;
        report.notes.extend(notes);
        Ok(ci)
    };
    report.ci_f1_macro = Some(run(MetricKind::F1Macro)?);
    report.ci_f1_micro = Some(run(MetricKind::F1Micro)?);
    report.ci_accuracy = Some(run(MetricKind::Accuracy)?);
    report
        .notes
        .push("ci method: percentile bootstrap over test predictions, resample unit = report".to_string());
    Ok(())
}

fn ci_cell(ci: &Option<ConfidenceInterval>) -> String {
    match ci {
        Some(ci) => format!("({:.3}, {:.3})", ci.lower, ci.upper),
        None => "-".to_string(),
    }
}

/// The side-by-side comparison block, flat model against the ensemble.
fn comparison_block(flat: &MetricsReport, hier: &MetricsReport, n_test: usize) -> String {
    let mut s = format!("final performance on the test set ({n_test} reports)\n");
    s.push_str(&format!(
        "{:<12} {:>9} {:>9} {:>9}  {:>16} {:>16} {:>16}\n",
        "model", "f1_macro", "f1_micro", "accuracy", "ci_f1_macro", "ci_f1_micro", "ci_accuracy"
    ));
    for (name, r) in [("flat", flat), ("hecnn", hier)] {
        s.push_str(&format!(
            "{:<12} {:>9.3} {:>9.3} {:>9.3}  {:>16} {:>16} {:>16}\n",
            name,
            r.f1_macro,
            r.f1_micro,
            r.accuracy,
            ci_cell(&r.ci_f1_macro),
            ci_cell(&r.ci_f1_micro),
            ci_cell(&r.ci_accuracy),
        ));
    }
    s
}

/// Evaluate the flat model and the ensemble on the untouched test split.
/// The split digest marker must still match — training commands never read
/// the test rows, and this check proves nobody rewrote the split since it
/// was made.
#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    ctx: &Ctx,
    corpus: &Path,
    split: &Path,
    vocab_path: &Path,
    flat_path: &Path,
    ensemble_path: &Path,
    out_dir: &Path,
) -> Result<()> {
    SplitFile::verify_marker(split)?;
    let reports = load_reports(corpus, detect_format(corpus)?)?;
    let sf = SplitFile::load(split)?;
    let vocab = Vocabulary::load(vocab_path)?;
    let prep = ctx.config.prep_config()?;

    let flat = Checkpoint::load(flat_path)?;
    flat.verify_vocab(&vocab)?;
    let spec = load_manifest(ensemble_path)?;
    if spec.vocab_digest() != vocab.digest() {
        return Err(Error::invalid(
            "ensemble was trained on a different vocabulary than the one supplied",
        ));
    }

    // The one and only read of the test rows.
    let test_set = encode_partition(&reports, &sf.split.test, &sf.classes, &vocab, &prep)?;
    let mut eval = evaluate_pipeline(&spec, &flat, &test_set, &sf.classes)?;

    let (n_resamples, level) = ctx.config.bootstrap_params()?;
    let ci_seed = ctx.master_seed.wrapping_add(seeds::BOOTSTRAP);
    attach_cis(
        &mut eval.flat,
        &eval.truths,
        &eval.flat_preds,
        &sf.classes,
        n_resamples,
        level,
        ci_seed,
    )?;
    attach_cis(
        &mut eval.hierarchical,
        &eval.truths,
        &eval.hierarchical_preds,
        &sf.classes,
        n_resamples,
        level,
        ci_seed,
    )?;

    create_out_dir(out_dir)?;
    let block = comparison_block(&eval.flat, &eval.hierarchical, test_set.len());
    let mut report = block.clone();
    report.push_str("\n== flat ==\n");
    report.push_str(&eval.flat.to_text());
    report.push_str("\n== hierarchical ==\n");
    report.push_str(&eval.hierarchical.to_text());
    write_text(&out_dir.join("eval-report.txt"), &report)?;
    write_text(&out_dir.join("flat-confusion.csv"), &eval.flat_cm.to_csv())?;
    write_text(
        &out_dir.join("hier-confusion.csv"),
        &eval.hierarchical_cm.to_csv(),
    )?;
    write_text(&out_dir.join("routing-log.csv"), &routing_log_csv(&eval.routing))?;
    ctx.config.write_snapshot(out_dir, "eval", ctx.master_seed)?;
    print!("{block}");
    Ok(())
}
