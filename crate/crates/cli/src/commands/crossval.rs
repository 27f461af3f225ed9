use std::path::Path;

use hierpath_core::cnnmodel::{build_model, train};
use hierpath_core::corpus::{
    apply_class_policy, load_reports, make_folds, stratified_split, LabelSchema, Report,
};
use hierpath_core::error::{Error, Result};
use hierpath_core::metrics::{bootstrap_ci, f1_scores, ConfusionMatrix, MetricKind};
use hierpath_core::nncore::Rng;
use hierpath_core::textprep::fit_tfidf;

use super::{seeds, Ctx};
use crate::artifacts::{create_out_dir, detect_format, encode_partition, tokenized_docs, write_text};
use crate::config::expand_classes;

struct FoldOutcome {
    f1_micro: f64,
    f1_macro: f64,
    accuracy: f64,
    truths: Vec<usize>,
    preds: Vec<usize>,
}

/// K-fold cross validation of the flat model. Each fold refits the
/// vocabulary on its own training portion, trains from scratch with a
/// fold-derived seed, and scores the held-out fold.
pub fn cmd_crossval(
    ctx: &Ctx,
    corpus: &Path,
    out_dir: &Path,
    classes_filter: Option<&str>,
    k_override: Option<usize>,
) -> Result<()> {
    let reports = load_reports(corpus, detect_format(corpus)?)?;
    let codes = match classes_filter {
        Some(arg) => expand_classes(arg)?,
        None => ctx.config.classes(),
    };
    let schema = LabelSchema::new(codes, ctx.config.min_count()?)?;
    let in_schema: Vec<Report> = reports
        .into_iter()
        .filter(|r| {
            r.label
                .as_deref()
                .is_some_and(|l| schema.codes.iter().any(|c| c == l))
        })
        .collect();
    let (kept, excluded) = apply_class_policy(&in_schema, &schema)?;
    let active: Vec<String> = schema
        .codes
        .iter()
        .filter(|c| !excluded.contains(c))
        .cloned()
        .collect();
    if active.len() < 2 {
        return Err(Error::invalid("fewer than 2 classes left after the policy"));
    }

    let k = k_override.map(Ok).unwrap_or_else(|| ctx.config.crossval_k())?;
    let plan = make_folds(&kept, k, ctx.master_seed.wrapping_add(seeds::FOLDS))?;
    create_out_dir(out_dir)?;

    let prep = ctx.config.prep_config()?;
    let base_cfg = ctx.config.model_config(None)?;
    let run_fold = |fold: usize| -> Result<FoldOutcome> {
        let with_fold = |e: Error| Error::invalid(format!("fold {fold}: {e}"));
        let test_ids = plan.fold_ids(fold);
        let rest: Vec<Report> = kept
            .iter()
            .filter(|r| plan.assignment[&r.id] != fold)
            .cloned()
            .collect();
        let seed = ctx
            .master_seed
            .wrapping_add(seeds::FOLD_TRAIN_BASE)
            .wrapping_add(fold as u64);
        let inner = stratified_split(&rest, [0.9, 0.1, 0.0], seed).map_err(with_fold)?;
        let docs = tokenized_docs(&rest, &inner.train, &prep)?;
        let vocab = fit_tfidf(&docs, prep.top_k).map_err(with_fold)?;
        let train_set = encode_partition(&rest, &inner.train, &active, &vocab, &prep)?;
        let val_set = encode_partition(&rest, &inner.validation, &active, &vocab, &prep)?;
        let test_set = encode_partition(&kept, &test_ids, &active, &vocab, &prep)?;
        let mut cfg = base_cfg.clone();
        cfg.num_classes = active.len();
        cfg.seed = seed;
        let model = build_model(&cfg, vocab.table_rows(), &mut Rng::new(cfg.seed))?;
        let (ckpt, _) =
            train(model, &train_set, &val_set, &active, &vocab.digest()).map_err(with_fold)?;
        let mut truths = Vec::with_capacity(test_set.len());
        let mut preds = Vec::with_capacity(test_set.len());
        for r in &test_set {
            truths.push(r.label_index.expect("labeled"));
            preds.push(ckpt.model.predict(&r.indices)?.0);
        }
        let scores = f1_scores(&ConfusionMatrix::from_indices(&truths, &preds, &active)?)?;
        Ok(FoldOutcome {
            f1_micro: scores.f1_micro,
            f1_macro: scores.f1_macro,
            accuracy: scores.accuracy,
            truths,
            preds,
        })
    };

    // Folds are independent jobs with their own seeds; running them in
    // parallel cannot change any fold's result.
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<FoldOutcome>> = {
        use rayon::prelude::*;
        (0..k).into_par_iter().map(run_fold).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<FoldOutcome>> = (0..k).map(run_fold).collect();
    let outcomes: Vec<FoldOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut csv = String::from("fold,f1_micro,f1_macro,accuracy\n");
    for (i, o) in outcomes.iter().enumerate() {
        csv.push_str(&format!("{i},{},{},{}\n", o.f1_micro, o.f1_macro, o.accuracy));
    }
    write_text(&out_dir.join("crossval-metrics.csv"), &csv)?;

    let kf = k as f64;
    let mean_micro = outcomes.iter().map(|o| o.f1_micro).sum::<f64>() / kf;
    let mean_macro = outcomes.iter().map(|o| o.f1_macro).sum::<f64>() / kf;
    let mean_acc = outcomes.iter().map(|o| o.accuracy).sum::<f64>() / kf;
    let pooled_truths: Vec<usize> = outcomes.iter().flat_map(|o| o.truths.clone()).collect();
    let pooled_preds: Vec<usize> = outcomes.iter().flat_map(|o| o.preds.clone()).collect();
    let (n_resamples, level) = ctx.config.bootstrap_params()?;
    let ci_seed = ctx.master_seed.wrapping_add(seeds::BOOTSTRAP);
    let mut report = format!(
        "classes = {}\nfolds = {k}\nmean_f1_micro = {mean_micro}\nmean_f1_macro = {mean_macro}\nmean_accuracy = {mean_acc}\n",
        active.join(",")
    );
    for (name, kind) in [
        ("f1_micro", MetricKind::F1Micro),
        ("f1_macro", MetricKind::F1Macro),
        ("accuracy", MetricKind::Accuracy),
    ] {
        let (ci, notes) = bootstrap_ci(
            &pooled_truths,
            &pooled_preds,
            &active,
            kind,
            n_resamples,
            level,
            ci_seed,
        )?;
        report.push_str(&format!(
            "ci_{name} = ({}, {}) level={} n={}\n",
            ci.lower, ci.upper, ci.level, ci.n_resamples
        ));
        for n in notes {
            report.push_str(&format!("note: {n}\n"));
        }
    }
    report.push_str("ci_method = percentile bootstrap over pooled cross-validation predictions, resample unit = report\n");
    write_text(&out_dir.join("crossval-report.txt"), &report)?;
    ctx.config.write_snapshot(out_dir, "crossval", ctx.master_seed)?;
    println!(
        "{k}-fold crossval over {} classes: mean f1_micro {mean_micro}, mean f1_macro {mean_macro}",
        active.len()
    );
    Ok(())
}
