pub mod evaluate;
pub mod generate;
pub mod prep;
pub mod regions;
pub mod split;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use petct_core::dataset::{list_cases, read_case, CaseFiles};
use petct_core::Modality;

use crate::error::{CliError, CliResult};

/// Case directories under `root`; an empty dataset is a data error.
pub(crate) fn cases_in(root: &Path) -> CliResult<Vec<PathBuf>> {
    let cases = list_cases(root)?;
    if cases.is_empty() {
        return Err(CliError::Data(format!("no cases under {}", root.display())));
    }
    Ok(cases)
}

pub(crate) fn read_prepared(dir: &Path) -> CliResult<CaseFiles> {
    Ok(read_case(dir, Modality::CtNorm, Modality::PetSuv)?)
}

pub(crate) fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}
