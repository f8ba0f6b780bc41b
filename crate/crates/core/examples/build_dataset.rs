//! Builds a dataset and compares its statistics with the published sizes.
//!
//! With a preset name and the corpus variable set (`MUSICSLOTS_JSB` or
//! `MUSICSLOTS_JAZZNET`, plus `MUSICSLOTS_SOUNDFONT`) the full variant is
//! built; otherwise a miniature dataset from a generated corpus.
//!
//!     cargo run --release --example build_dataset -- [preset] [out_dir]

use std::path::PathBuf;
use std::str::FromStr;

use musicslots::chordset::{DatasetPreset, SplitName};
use musicslots::cli::{self, demo, RunConfig};

fn main() -> musicslots::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scratch = tempfile::tempdir().map_err(|e| musicslots::Error::io(std::env::temp_dir(), e))?;
    let (cfg, out) = match args.first() {
        Some(name) => {
            let preset = DatasetPreset::from_str(name)?;
            if std::env::var_os(preset.corpus_env()).is_none() {
                eprintln!("{} is not set; building the miniature dataset instead", preset.corpus_env());
                let cfg = demo::workspace(scratch.path(), None, 40)?;
                let out = cfg.dataset.clone().expect("set by workspace");
                (cfg, out)
            } else {
                let cfg = RunConfig::resolve(None, Some(name))?;
                let out = args.get(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(format!("data/{name}")));
                (cfg, out)
            }
        }
        None => {
            let cfg = demo::workspace(scratch.path(), None, 40)?;
            let out = cfg.dataset.clone().expect("set by workspace");
            (cfg, out)
        }
    };

    let outcome = cli::dataset_build(&cfg, &out, false)?;
    let manifest = outcome.manifest.expect("not a dry run");
    for name in SplitName::ALL {
        let s = manifest.splits.get(name);
        println!("{:>5}: {:>6} examples from {:>5} chords, dyad/triad/tetrad {:?}", name.as_str(), s.examples, s.chords, s.chord_histogram);
    }
    println!("unique pitches: {}", manifest.unique_pitch_count);
    for c in &outcome.checks {
        println!("{c}");
    }
    println!("dataset at {}", out.display());
    Ok(())
}
