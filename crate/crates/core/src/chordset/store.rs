//! On-disk dataset layout.
//!
//! ```text
//! <root>/manifest.toml
//! <root>/<split>/chords.f32   one row per example, n_mels * frames values
//! <root>/<split>/notes.f32    one row per note, examples in order
//! <root>/<split>/masks.bits   one row per note, bits packed LSB-first
//! <root>/<split>/labels.tsv   one line per example: `pitch:instrument` fields
//! ```
//!
//! Matrix files start with two little-endian `u32`s (rows, cols) followed by
//! the row-major payload. Each row of `masks.bits` is padded to a whole byte.
//! The manifest records a SHA-256 for every file; reading verifies them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{cardinality_histogram, ChordSpec, DatasetConfig, ExampleRecord, InstrumentId, NoteLabel, SplitName, Splits};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.toml";
const FILES: [&str; 4] = ["chords.f32", "notes.f32", "masks.bits", "labels.tsv"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub examples: usize,
    pub chords: usize,
    pub notes: usize,
    /// Unique chords by cardinality: dyads, triads, tetrads.
    pub chord_histogram: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub synthesizer: String,
    pub n_mels: usize,
    pub frames: usize,
    pub pitches: Vec<u8>,
    pub unique_pitch_count: usize,
    pub splits: Splits<SplitStats>,
    pub config: DatasetConfig,
    pub files: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn counts(&self) -> [usize; 3] {
        [self.splits.train.examples, self.splits.val.examples, self.splits.test.examples]
    }
}

struct MatrixFile {
    path: PathBuf,
    out: BufWriter<File>,
    rows: u32,
    cols: u32,
}

impl MatrixFile {
    fn create(path: PathBuf, cols: usize) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(&[0u8; 8]).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path, out, rows: 0, cols: cols as u32 })
    }

    fn push_f32(&mut self, row: &Array2<f32>) -> Result<()> {
        debug_assert_eq!(row.len(), self.cols as usize);
        for v in row.iter() {
            self.out.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&self.path, e))?;
        }
        self.rows += 1;
        Ok(())
    }

    fn push_bits(&mut self, row: &Array2<bool>) -> Result<()> {
        let mut bytes = vec![0u8; (self.cols as usize).div_ceil(8)];
        for (i, &b) in row.iter().enumerate() {
            if b {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        self.out.write_all(&bytes).map_err(|e| Error::io(&self.path, e))?;
        self.rows += 1;
        Ok(())
    }

    fn finish(self) -> Result<PathBuf> {
        let mut file = self.out.into_inner().map_err(|e| Error::io(&self.path, e.into_error()))?;
        file.seek(SeekFrom::Start(0)).map_err(|e| Error::io(&self.path, e))?;
        file.write_all(&self.rows.to_le_bytes()).map_err(|e| Error::io(&self.path, e))?;
        file.write_all(&self.cols.to_le_bytes()).map_err(|e| Error::io(&self.path, e))?;
        file.sync_all().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.path)
    }
}

struct OpenSplit {
    name: SplitName,
    chords: MatrixFile,
    notes: MatrixFile,
    masks: MatrixFile,
    labels: BufWriter<File>,
    labels_path: PathBuf,
    stats: SplitStats,
}

/// Streams examples to disk split by split.
pub struct DatasetWriter {
    root: PathBuf,
    config: DatasetConfig,
    synthesizer: String,
    shape: Option<(usize, usize)>,
    current: Option<OpenSplit>,
    stats: BTreeMap<SplitName, SplitStats>,
    pitches: std::collections::BTreeSet<u8>,
    files: BTreeMap<String, String>,
}

impl DatasetWriter {
    pub fn create(root: &Path, config: &DatasetConfig, synthesizer: &str) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            config: config.clone(),
            synthesizer: synthesizer.to_string(),
            shape: None,
            current: None,
            stats: BTreeMap::new(),
            pitches: Default::default(),
            files: BTreeMap::new(),
        })
    }

    /// Opens `name` for appending; `chords` are the unique chords of the split.
    pub fn begin_split(&mut self, name: SplitName, chords: &[ChordSpec]) -> Result<()> {
        if self.current.is_some() {
            return Err(Error::invalid("previous split not finished"));
        }
        let dir = self.root.join(name.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let cols = self.config.mel.n_mels * self.config.crop_frames;
        let labels_path = dir.join("labels.tsv");
        let labels = BufWriter::new(File::create(&labels_path).map_err(|e| Error::io(&labels_path, e))?);
        self.pitches.extend(chords.iter().flat_map(|c| c.pitches.iter().copied()));
        self.current = Some(OpenSplit {
            name,
            chords: MatrixFile::create(dir.join("chords.f32"), cols)?,
            notes: MatrixFile::create(dir.join("notes.f32"), cols)?,
            masks: MatrixFile::create(dir.join("masks.bits"), cols)?,
            labels,
            labels_path,
            stats: SplitStats {
                chords: chords.len(),
                chord_histogram: cardinality_histogram(chords),
                ..SplitStats::default()
            },
        });
        Ok(())
    }

    pub fn append(&mut self, r: &ExampleRecord) -> Result<()> {
        let expected = (self.config.mel.n_mels, self.config.crop_frames);
        if r.shape() != expected {
            return Err(Error::shape(format!("{expected:?}"), format!("{:?}", r.shape())));
        }
        self.shape = Some(expected);
        let s = self.current.as_mut().ok_or_else(|| Error::invalid("no split open"))?;
        s.chords.push_f32(&r.chord_db)?;
        for (db, mask) in r.note_db.iter().zip(&r.note_masks) {
            s.notes.push_f32(db)?;
            s.masks.push_bits(mask)?;
        }
        let line: Vec<String> = r.labels.iter().map(|l| format!("{}:{}", l.pitch, l.instrument)).collect();
        writeln!(s.labels, "{}", line.join("\t")).map_err(|e| Error::io(&s.labels_path, e))?;
        s.stats.examples += 1;
        s.stats.notes += r.labels.len();
        Ok(())
    }

    pub fn end_split(&mut self) -> Result<()> {
        let s = self.current.take().ok_or_else(|| Error::invalid("no split open"))?;
        let mut paths = vec![s.chords.finish()?, s.notes.finish()?, s.masks.finish()?];
        s.labels
            .into_inner()
            .map_err(|e| Error::io(&s.labels_path, e.into_error()))?
            .sync_all()
            .map_err(|e| Error::io(&s.labels_path, e))?;
        paths.push(s.labels_path);
        for p in paths {
            let key = format!("{}/{}", s.name, p.file_name().unwrap().to_string_lossy());
            self.files.insert(key, sha256_file(&p)?);
        }
        self.stats.insert(s.name, s.stats);
        Ok(())
    }

    pub fn finish(mut self) -> Result<DatasetManifest> {
        if self.current.is_some() {
            self.end_split()?;
        }
        let stat = |n| self.stats.get(&n).cloned().unwrap_or_default();
        let pitches: Vec<u8> = self.pitches.iter().copied().collect();
        let manifest = DatasetManifest {
            version: FORMAT_VERSION,
            synthesizer: self.synthesizer.clone(),
            n_mels: self.config.mel.n_mels,
            frames: self.config.crop_frames,
            unique_pitch_count: pitches.len(),
            pitches,
            splits: Splits {
                train: stat(SplitName::Train),
                val: stat(SplitName::Val),
                test: stat(SplitName::Test),
            },
            config: self.config.clone(),
            files: self.files.clone(),
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
        let path = self.root.join(MANIFEST);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Writes in-memory splits in one go.
pub fn write_dataset(
    root: &Path,
    config: &DatasetConfig,
    synthesizer: &str,
    chords: &Splits<Vec<ChordSpec>>,
    records: &Splits<Vec<ExampleRecord>>,
) -> Result<DatasetManifest> {
    let mut w = DatasetWriter::create(root, config, synthesizer)?;
    for name in SplitName::ALL {
        w.begin_split(name, chords.get(name))?;
        for r in records.get(name) {
            w.append(r)?;
        }
        w.end_split()?;
    }
    w.finish()
}

/// A dataset on disk whose checksums have been verified.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

/// Opens a dataset and verifies every file against the manifest.
pub fn read_dataset(root: &Path) -> Result<Dataset> {
    let path = root.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::corrupt(&path, e.to_string()))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::corrupt(&path, format!("unsupported format version {}", manifest.version)));
    }
    for name in SplitName::ALL {
        for f in FILES {
            let key = format!("{name}/{f}");
            let expected = manifest
                .files
                .get(&key)
                .ok_or_else(|| Error::corrupt(&path, format!("manifest lacks checksum for {key}")))?;
            let file = root.join(&key);
            let actual = sha256_file(&file)?;
            if &actual != expected {
                return Err(Error::corrupt(&file, "checksum mismatch"));
            }
        }
    }
    Ok(Dataset { root: root.to_path_buf(), manifest })
}

/// One split loaded into memory.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub n_mels: usize,
    pub frames: usize,
    chords: Vec<f32>,
    notes: Vec<f32>,
    masks: Vec<u8>,
    labels: Vec<Vec<NoteLabel>>,
    note_offsets: Vec<usize>,
}

fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::corrupt(path, "truncated header"));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    Ok((rows, cols, bytes[8..].to_vec()))
}

fn f32s(path: &Path, rows: usize, cols: usize, payload: &[u8]) -> Result<Vec<f32>> {
    if payload.len() != rows * cols * 4 {
        return Err(Error::corrupt(path, format!("expected {} bytes, found {}", rows * cols * 4, payload.len())));
    }
    Ok(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

impl Dataset {
    pub fn split_dir(&self, name: SplitName) -> PathBuf {
        self.root.join(name.as_str())
    }

    pub fn load_split(&self, name: SplitName) -> Result<SplitData> {
        let dir = self.split_dir(name);
        let cols = self.manifest.n_mels * self.manifest.frames;

        let p = dir.join("chords.f32");
        let (n, c, payload) = read_matrix(&p)?;
        if c != cols {
            return Err(Error::corrupt(&p, format!("{c} columns, manifest says {cols}")));
        }
        let chords = f32s(&p, n, c, &payload)?;

        let p = dir.join("notes.f32");
        let (n_notes, c, payload) = read_matrix(&p)?;
        if c != cols {
            return Err(Error::corrupt(&p, format!("{c} columns, manifest says {cols}")));
        }
        let notes = f32s(&p, n_notes, c, &payload)?;

        let p = dir.join("masks.bits");
        let (n_masks, c, masks) = read_matrix(&p)?;
        if n_masks != n_notes || c != cols || masks.len() != n_masks * cols.div_ceil(8) {
            return Err(Error::corrupt(&p, "mask rows do not match notes"));
        }

        let p = dir.join("labels.tsv");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let labels: Vec<Vec<NoteLabel>> = text
            .lines()
            .map(|line| {
                line.split('\t')
                    .map(|field| {
                        let (pitch, inst) = field
                            .split_once(':')
                            .ok_or_else(|| Error::corrupt(&p, format!("bad label '{field}'")))?;
                        Ok(NoteLabel {
                            pitch: pitch.parse().map_err(|_| Error::corrupt(&p, format!("bad pitch '{pitch}'")))?,
                            instrument: inst.parse::<InstrumentId>()?,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        if labels.len() != n {
            return Err(Error::corrupt(&p, format!("{} label lines for {n} examples", labels.len())));
        }
        let mut note_offsets = Vec::with_capacity(n + 1);
        note_offsets.push(0);
        for l in &labels {
            note_offsets.push(note_offsets.last().unwrap() + l.len());
        }
        if *note_offsets.last().unwrap() != n_notes {
            return Err(Error::corrupt(&p, "label count does not match note rows"));
        }
        Ok(SplitData {
            n_mels: self.manifest.n_mels,
            frames: self.manifest.frames,
            chords,
            notes,
            masks,
            labels,
            note_offsets,
        })
    }
}

impl SplitData {
    /// Packs in-memory examples; all spectrograms must share one shape.
    pub fn from_records(records: &[ExampleRecord]) -> Result<Self> {
        let (n_mels, frames) = records.first().map(|r| r.shape()).unwrap_or((0, 0));
        let c = n_mels * frames;
        let row_bytes = c.div_ceil(8);
        let mut out = SplitData {
            n_mels,
            frames,
            chords: Vec::with_capacity(records.len() * c),
            notes: Vec::new(),
            masks: Vec::new(),
            labels: Vec::with_capacity(records.len()),
            note_offsets: vec![0],
        };
        for r in records {
            if r.shape() != (n_mels, frames)
                || r.note_db.len() != r.labels.len()
                || r.note_masks.len() != r.labels.len()
                || r.note_db.iter().any(|n| n.dim() != (n_mels, frames))
                || r.note_masks.iter().any(|m| m.dim() != (n_mels, frames))
            {
                return Err(Error::invalid("records disagree in shape or note count"));
            }
            out.chords.extend(r.chord_db.iter());
            for (n, m) in r.note_db.iter().zip(&r.note_masks) {
                out.notes.extend(n.iter());
                let mut bytes = vec![0u8; row_bytes];
                for (k, &bit) in m.iter().enumerate() {
                    bytes[k / 8] |= (bit as u8) << (k % 8);
                }
                out.masks.extend(bytes);
            }
            out.labels.push(r.labels.clone());
            out.note_offsets.push(out.note_offsets.last().unwrap() + r.labels.len());
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn cols(&self) -> usize {
        self.n_mels * self.frames
    }

    fn grid<T: Clone>(&self, v: Vec<T>) -> Array2<T> {
        Array2::from_shape_vec((self.n_mels, self.frames), v).expect("row length checked on load")
    }

    pub fn chord_db(&self, i: usize) -> Array2<f32> {
        let c = self.cols();
        self.grid(self.chords[i * c..(i + 1) * c].to_vec())
    }

    pub fn labels(&self, i: usize) -> &[NoteLabel] {
        &self.labels[i]
    }

    pub fn max_notes(&self) -> usize {
        self.labels.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn example(&self, i: usize) -> ExampleRecord {
        let c = self.cols();
        let row_bytes = c.div_ceil(8);
        let range = self.note_offsets[i]..self.note_offsets[i + 1];
        ExampleRecord {
            chord_db: self.chord_db(i),
            note_db: range.clone().map(|r| self.grid(self.notes[r * c..(r + 1) * c].to_vec())).collect(),
            note_masks: range
                .map(|r| {
                    let bytes = &self.masks[r * row_bytes..(r + 1) * row_bytes];
                    self.grid((0..c).map(|k| bytes[k / 8] >> (k % 8) & 1 == 1).collect())
                })
                .collect(),
            labels: self.labels[i].clone(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ExampleRecord> + '_ {
        (0..self.len()).map(|i| self.example(i))
    }
}
