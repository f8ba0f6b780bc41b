//! Trains the slot model on the miniature dataset, then a read-out probe on
//! its frozen slots, and reports note MSE, mIoU and chord accuracy.
//!
//!     cargo run --release --example train_slots -- [steps]

use musicslots::cli::{self, demo};
use musicslots::evalkit::render_table;
use musicslots::trainer::read_log;

fn main() -> musicslots::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let scratch = tempfile::tempdir().map_err(|e| musicslots::Error::io(std::env::temp_dir(), e))?;
    let root = scratch.path();

    let mut cfg = demo::workspace(root, Some("musicslots-none"), 40)?;
    cli::dataset_build(&cfg, cfg.dataset.as_ref().expect("set"), false)?;
    cfg.seeds = vec![0, 1];
    cfg.train = demo::training(steps);

    let untrained = {
        let mut c = cfg.clone();
        c.train = demo::training(1);
        c.run_dir = Some(root.join("untrained"));
        cli::train_run(&c, false, false)?
    };
    let trained = cli::train_run(&cfg, false, false)?;
    let log = read_log(&root.join("runs/seed_0/log.csv"))?;
    println!(
        "seed 0 loss {:.2} -> {:.2} over {} steps",
        log.first().map(|r| r.loss).unwrap_or(f64::NAN),
        log.last().map(|r| r.loss).unwrap_or(f64::NAN),
        log.len()
    );

    let mut probe_cfg = cfg.clone();
    probe_cfg.backbone = cfg.run_dir.clone();
    probe_cfg.run_dir = Some(root.join("probe"));
    probe_cfg.probe = demo::training(steps);
    let probed = cli::probe_run(&probe_cfg, false, false)?;

    let mut before = untrained;
    before.model = "after 1 step".into();
    println!("{}", render_table(&[before, trained, probed]));
    Ok(())
}
