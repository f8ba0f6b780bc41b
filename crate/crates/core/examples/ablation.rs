//! Runs the five-row architectural ablation on the miniature dataset.
//!
//!     cargo run --release --example ablation -- [steps]

use musicslots::cli::{self, demo};
use musicslots::evalkit::render_table;

fn main() -> musicslots::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let scratch = tempfile::tempdir().map_err(|e| musicslots::Error::io(std::env::temp_dir(), e))?;
    let mut cfg = demo::workspace(scratch.path(), None, 40)?;
    cli::dataset_build(&cfg, cfg.dataset.as_ref().expect("set"), false)?;
    cfg.train = demo::training(steps);
    cfg.eval.splits = vec!["test".into()];
    let rows = cli::ablate_run(&cfg, false, false)?;
    println!("{}", render_table(&rows));
    Ok(())
}
