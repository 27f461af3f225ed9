use std::path::Path;

use hierpath_core::corpus::{generate_synthetic, write_jsonl, write_xml};
use hierpath_core::error::Result;

use super::Ctx;
use crate::artifacts::create_out_dir;

/// Generate the synthetic corpus and write it in both formats.
pub fn cmd_gen_corpus(ctx: &Ctx, out_dir: &Path) -> Result<()> {
    let spec = ctx.config.synthetic_spec(ctx.master_seed)?;
    create_out_dir(out_dir)?;
    let reports = generate_synthetic(&spec)?;
    write_jsonl(&reports, &out_dir.join("corpus.jsonl"))?;
    write_xml(&reports, &out_dir.join("corpus.xml"))?;
    ctx.config.write_snapshot(out_dir, "gen-corpus", ctx.master_seed)?;
    println!(
        "wrote {} reports ({} classes x {}) to {}",
        reports.len(),
        spec.classes.len(),
        spec.reports_per_class,
        out_dir.display()
    );
    Ok(())
}
