use std::path::Path;

use hierpath_core::corpus::{apply_class_policy, load_reports, stratified_split, LabelSchema};
use hierpath_core::error::Result;

use super::{seeds, Ctx};
use crate::artifacts::{create_out_dir, detect_format, SplitFile};

/// Apply the class-inclusion policy and write the stratified split plus its
/// digest marker.
pub fn cmd_split(ctx: &Ctx, corpus: &Path, out_dir: &Path) -> Result<()> {
    let reports = load_reports(corpus, detect_format(corpus)?)?;
    let schema = LabelSchema::new(ctx.config.classes(), ctx.config.min_count()?)?;
    let (kept, excluded) = apply_class_policy(&reports, &schema)?;
    let active: Vec<String> = schema
        .codes
        .iter()
        .filter(|c| !excluded.contains(c))
        .cloned()
        .collect();
    let seed = ctx.master_seed.wrapping_add(seeds::SPLIT);
    let split = stratified_split(&kept, ctx.config.split_ratios()?, seed)?;
    create_out_dir(out_dir)?;
    let sf = SplitFile {
        split,
        classes: active,
        excluded: excluded.clone(),
        seed,
    };
    sf.save(&out_dir.join("split.txt"))?;
    ctx.config.write_snapshot(out_dir, "split", ctx.master_seed)?;
    println!(
        "split {} reports into {}/{}/{} (excluded codes: {})",
        kept.len(),
        sf.split.train.len(),
        sf.split.validation.len(),
        sf.split.test.len(),
        if excluded.is_empty() {
            "none".to_string()
        } else {
            excluded.join(", ")
        }
    );
    Ok(())
}
