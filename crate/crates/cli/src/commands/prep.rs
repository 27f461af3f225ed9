use std::path::Path;

use hierpath_core::corpus::{load_reports, write_jsonl, Report};
use hierpath_core::error::Result;
use hierpath_core::textprep::{detect_afrikaans_only, tokenize};

use super::Ctx;
use crate::artifacts::{create_out_dir, detect_format};

/// Clean the corpus: tokenize every report and drop Afrikaans-only ones.
/// The output is a corpus-format JSONL whose text is the cleaned tokens
/// joined by spaces (tokenization is idempotent, so downstream stages can
/// re-tokenize it cheaply).
pub fn cmd_prep(ctx: &Ctx, corpus: &Path, out_dir: &Path) -> Result<()> {
    let reports = load_reports(corpus, detect_format(corpus)?)?;
    let prep = ctx.config.prep_config()?;
    create_out_dir(out_dir)?;
    let mut kept = Vec::with_capacity(reports.len());
    let mut dropped = 0usize;
    for r in &reports {
        let tokens = tokenize(&r.text, &prep);
        if prep.afrikaans_filter_enabled && detect_afrikaans_only(&tokens, &prep) {
            dropped += 1;
            continue;
        }
        kept.push(Report {
            id: r.id.clone(),
            text: tokens.join(" "),
            label: r.label.clone(),
        });
    }
    let out = out_dir.join("cleaned.jsonl");
    write_jsonl(&kept, &out)?;
    ctx.config.write_snapshot(out_dir, "prep", ctx.master_seed)?;
    println!(
        "cleaned {} reports ({dropped} dropped as Afrikaans-only) -> {}",
        kept.len(),
        out.display()
    );
    Ok(())
}
