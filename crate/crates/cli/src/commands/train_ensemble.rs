use std::path::Path;

use hierpath_core::corpus::load_reports;
use hierpath_core::error::Result;
use hierpath_core::hierarchy::{train_ensemble, write_manifest, ChildModel, GroupingSpec};
use hierpath_core::textprep::Vocabulary;

use super::{seeds, Ctx};
use crate::artifacts::{
    create_out_dir, detect_format, encode_partition, read_grouping_file, write_text, SplitFile,
};

/// Train parent and children on the same split and vocabulary as the flat
/// model, then write the three checkpoints and the ensemble manifest.
pub fn cmd_train_ensemble(
    ctx: &Ctx,
    corpus: &Path,
    split: &Path,
    vocab_path: &Path,
    grouping_arg: &str,
    out_dir: &Path,
) -> Result<()> {
    let reports = load_reports(corpus, detect_format(corpus)?)?;
    let sf = SplitFile::load(split)?;
    let vocab = Vocabulary::load(vocab_path)?;
    let prep = ctx.config.prep_config()?;
    let grouping = if grouping_arg == "expert" {
        GroupingSpec::expert_default()
    } else {
        read_grouping_file(Path::new(grouping_arg))?
    };
    grouping.validate(&sf.classes)?;
    create_out_dir(out_dir)?;

    let train_set = encode_partition(&reports, &sf.split.train, &sf.classes, &vocab, &prep)?;
    let val_set = encode_partition(&reports, &sf.split.validation, &sf.classes, &vocab, &prep)?;

    let parent_cfg = ctx.config.model_config(Some("parent"))?;
    let child_one_cfg = ctx.config.model_config(Some("child-one"))?;
    let child_two_cfg = ctx.config.model_config(Some("child-two"))?;
    let (spec, reports_by_member) = train_ensemble(
        &train_set,
        &val_set,
        &sf.classes,
        &grouping,
        &parent_cfg,
        &child_one_cfg,
        &child_two_cfg,
        vocab.table_rows(),
        &vocab.digest(),
        ctx.master_seed.wrapping_add(seeds::ENSEMBLE),
    )?;

    spec.parent.save(&out_dir.join("parent.ckpt"))?;
    if let ChildModel::Cnn(c) = &spec.child_one {
        c.save(&out_dir.join("child-one.ckpt"))?;
    }
    if let ChildModel::Cnn(c) = &spec.child_two {
        c.save(&out_dir.join("child-two.ckpt"))?;
    }
    write_manifest(
        &spec,
        &out_dir.join("ensemble-manifest.txt"),
        "parent.ckpt",
        "child-one.ckpt",
        "child-two.ckpt",
    )?;

    write_text(
        &out_dir.join("parent-train-report.csv"),
        &reports_by_member.parent.to_csv(),
    )?;
    if let Some(r) = &reports_by_member.child_one {
        write_text(&out_dir.join("child-one-train-report.csv"), &r.to_csv())?;
    }
    if let Some(r) = &reports_by_member.child_two {
        write_text(&out_dir.join("child-two-train-report.csv"), &r.to_csv())?;
    }
    ctx.config.write_snapshot(out_dir, "train-ensemble", ctx.master_seed)?;
    println!(
        "trained ensemble (grouping {} | {}) -> {}",
        spec.grouping.group_one.join(","),
        spec.grouping.group_two.join(","),
        out_dir.join("ensemble-manifest.txt").display()
    );
    Ok(())
}
