use std::path::Path;

use hierpath_core::error::Result;
use hierpath_core::metrics::ConfusionMatrix;

use crate::artifacts::read_text;

/// Render saved artifacts for reading: the confusion matrix as an aligned
/// text grid, optionally followed by a saved metrics report.
pub fn cmd_report(confusion: &Path, metrics: Option<&Path>) -> Result<()> {
    let cm = ConfusionMatrix::from_csv(&read_text(confusion)?)?;
    print!("{}", cm.to_text_grid());
    if let Some(path) = metrics {
        println!();
        print!("{}", read_text(path)?);
    }
    Ok(())
}
