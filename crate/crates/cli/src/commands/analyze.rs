use std::path::Path;

use hierpath_core::error::{Error, Result};
use hierpath_core::hierarchy::{suggest_grouping, GroupingStrategy};
use hierpath_core::metrics::{top_confused_pairs, ConfusionMatrix};

use super::Ctx;
use crate::artifacts::{create_out_dir, read_text, write_grouping_file, write_text};

fn strategy_from_config(ctx: &Ctx) -> Result<GroupingStrategy> {
    match ctx.config.grouping_strategy() {
        None => Ok(GroupingStrategy::TopPair),
        Some(s) if s == "top_pair" => Ok(GroupingStrategy::TopPair),
        Some(s) => match s.strip_prefix("threshold:") {
            Some(t) => t
                .parse()
                .map(GroupingStrategy::Threshold)
                .map_err(|_| Error::invalid(format!("bad grouping threshold `{t}`"))),
            None => Err(Error::invalid(format!("unknown grouping strategy `{s}`"))),
        },
    }
}

/// Rank confused class pairs from a saved confusion matrix and emit grouping
/// candidates. The top candidate is also written in the loadable grouping
/// form for `train-ensemble --grouping`.
pub fn cmd_analyze(ctx: &Ctx, confusion: &Path, out_dir: &Path) -> Result<()> {
    let cm = ConfusionMatrix::from_csv(&read_text(confusion)?)?;
    let strategy = strategy_from_config(ctx)?;
    let candidates = suggest_grouping(&cm, strategy)?;
    create_out_dir(out_dir)?;

    let mut text = String::from("top confused pairs (pair, symmetric mass, normalized rate):\n");
    for p in top_confused_pairs(&cm, 5) {
        text.push_str(&format!("  {} / {}  mass={}  rate={}\n", p.code_a, p.code_b, p.mass, p.rate));
    }
    text.push('\n');
    for (i, cand) in candidates.iter().enumerate() {
        text.push_str(&format!(
            "candidate {}: group_one={} group_two={} provenance={}\n",
            i + 1,
            cand.group_one.join(","),
            cand.group_two.join(","),
            cand.provenance
        ));
    }
    write_text(&out_dir.join("grouping-candidates.txt"), &text)?;
    if let Some(first) = candidates.first() {
        write_grouping_file(first, &out_dir.join("grouping-suggested.txt"))?;
    }
    ctx.config.write_snapshot(out_dir, "analyze", ctx.master_seed)?;
    print!("{text}");
    Ok(())
}
