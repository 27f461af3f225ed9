use std::path::Path;

use hierpath_core::cnnmodel::{build_model, train};
use hierpath_core::corpus::load_reports;
use hierpath_core::error::Result;
use hierpath_core::metrics::ConfusionMatrix;
use hierpath_core::nncore::Rng;
use hierpath_core::textprep::fit_tfidf;

use super::{seeds, Ctx};
use crate::artifacts::{
    create_out_dir, detect_format, encode_partition, tokenized_docs, write_text, SplitFile,
};

/// Fit the vocabulary on the training split, train the flat multiclass
/// model, and save checkpoint, vocabulary, training report and the
/// validation confusion matrix (the input to `analyze`).
pub fn cmd_train_flat(ctx: &Ctx, corpus: &Path, split: &Path, out_dir: &Path) -> Result<()> {
    let reports = load_reports(corpus, detect_format(corpus)?)?;
    let sf = SplitFile::load(split)?;
    let prep = ctx.config.prep_config()?;
    create_out_dir(out_dir)?;

    let train_docs = tokenized_docs(&reports, &sf.split.train, &prep)?;
    let vocab = fit_tfidf(&train_docs, prep.top_k)?;
    vocab.save(&out_dir.join("vocab.tsv"))?;

    let mut cfg = ctx.config.model_config(None)?;
    cfg.num_classes = sf.classes.len();
    cfg.seed = ctx.master_seed.wrapping_add(seeds::FLAT_TRAIN);
    if let Some(&w) = cfg.window_sizes.iter().max() {
        if w > prep.max_len {
            log::warn!("window size {w} exceeds max_len {}", prep.max_len);
        }
    }

    let train_set = encode_partition(&reports, &sf.split.train, &sf.classes, &vocab, &prep)?;
    let val_set = encode_partition(&reports, &sf.split.validation, &sf.classes, &vocab, &prep)?;
    let model = build_model(&cfg, vocab.table_rows(), &mut Rng::new(cfg.seed))?;
    let (ckpt, report) = train(model, &train_set, &val_set, &sf.classes, &vocab.digest())?;

    ckpt.save(&out_dir.join("flat.ckpt"))?;
    write_text(&out_dir.join("flat-train-report.csv"), &report.to_csv())?;

    // Validation confusion for the grouping analysis; test stays untouched.
    let mut truths = Vec::new();
    let mut preds = Vec::new();
    for r in &val_set {
        truths.push(r.label_index.expect("validated"));
        preds.push(ckpt.model.predict(&r.indices)?.0);
    }
    let cm = ConfusionMatrix::from_indices(&truths, &preds, &sf.classes)?;
    write_text(&out_dir.join("flat-val-confusion.csv"), &cm.to_csv())?;

    ctx.config.write_snapshot(out_dir, "train-flat", ctx.master_seed)?;
    println!(
        "trained flat model: best epoch {} ({} = {})",
        ckpt.best_epoch, cfg.selection_metric, ckpt.best_metric
    );
    Ok(())
}
