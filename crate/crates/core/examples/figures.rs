//! Trains a soft-mask and an unmasked model briefly and renders their
//! decompositions: the slot grid, the masks and a ground truth / none /
//! softmax comparison.
//!
//!     cargo run --release --example figures -- out_dir [steps]

use std::path::PathBuf;

use musicslots::cli::{self, demo};

fn main() -> musicslots::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("figures"));
    let steps: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(200);
    let scratch = tempfile::tempdir().map_err(|e| musicslots::Error::io(std::env::temp_dir(), e))?;
    let root = scratch.path();
    let base = demo::workspace(root, None, 40)?;
    cli::dataset_build(&base, base.dataset.as_ref().expect("set"), false)?;

    let mut runs = Vec::new();
    for preset in ["musicslots-none", "musicslots-soft"] {
        let mut cfg = demo::workspace(&root.join(preset), Some(preset), 1)?;
        cfg.dataset = base.dataset.clone();
        cfg.train = demo::training(steps);
        cli::train_run(&cfg, false, false)?;
        runs.push(cfg.run_dir.expect("set"));
    }
    let mut cfg = base.clone();
    cfg.viz.examples = vec![0, 1, 2];
    cfg.viz.scale = 8;
    for p in cli::viz_run(&cfg, &runs[0], &runs[1..], &out, false)? {
        println!("{}", p.display());
    }
    Ok(())
}
