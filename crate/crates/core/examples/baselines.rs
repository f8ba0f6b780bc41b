//! Trains the autoencoder, a beta-VAE and the supervised CNN, probes the
//! autoencoder latents and compares chord accuracy.
//!
//!     cargo run --release --example baselines -- [steps]

use musicslots::cli::{self, demo};
use musicslots::evalkit::render_table;

fn main() -> musicslots::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let scratch = tempfile::tempdir().map_err(|e| musicslots::Error::io(std::env::temp_dir(), e))?;
    let root = scratch.path();
    let data = demo::workspace(root, None, 40)?;
    cli::dataset_build(&data, data.dataset.as_ref().expect("set"), false)?;

    let mut rows = Vec::new();
    for preset in ["ae", "vae:0.5", "vae:4"] {
        let mut cfg = demo::workspace(&root.join(preset), Some(preset), 1)?;
        cfg.dataset = data.dataset.clone();
        cfg.train = demo::training(steps);
        cli::train_run(&cfg, false, false)?;
        let mut probe = cfg.clone();
        probe.backbone = cfg.run_dir.clone();
        probe.run_dir = Some(root.join(format!("{preset}-probe")));
        probe.probe = demo::training(steps);
        rows.push(cli::probe_run(&probe, false, false)?);
    }
    let mut cfg = demo::workspace(&root.join("cnn"), Some("supervised-cnn"), 1)?;
    cfg.dataset = data.dataset.clone();
    cfg.train = demo::training(steps);
    rows.push(cli::train_run(&cfg, false, false)?);
    println!("{}", render_table(&rows));
    Ok(())
}
