//! Spectrogram grids rendered to PNG.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chordset::ExampleRecord;
use crate::error::{Error, Result};
use crate::evalkit::note_mse;
use crate::slotcore::{stack_chords, tensor_to_maps, MusicSlots};

const GAP: u32 = 2;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);

// magma-like ramp
const STOPS: [[f32; 3]; 5] = [
    [0.0, 0.0, 4.0],
    [81.0, 18.0, 124.0],
    [183.0, 55.0, 121.0],
    [252.0, 137.0, 97.0],
    [252.0, 253.0, 191.0],
];

fn colour(t: f32) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f32;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f32;
    let c = |j: usize| (STOPS[i][j] + f * (STOPS[i + 1][j] - STOPS[i][j])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Rows of optional panels; `None` leaves a blank cell so panels can line
/// up under the slot they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: Vec<Vec<Option<Array2<f32>>>>,
}

impl Grid {
    pub fn panel_count(&self) -> usize {
        self.rows.iter().flatten().filter(|p| p.is_some()).count()
    }

    /// Smallest and largest finite value over every panel.
    pub fn value_range(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for p in self.rows.iter().flatten().flatten() {
            for &v in p.iter().filter(|v| v.is_finite()) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if lo > hi {
            (0.0, 1.0)
        } else {
            (lo, hi)
        }
    }

    /// Renders with one colour scale for all panels. Low frequencies are at
    /// the bottom of each panel.
    pub fn render(&self, scale: u32, range: (f32, f32)) -> Result<RgbImage> {
        let (ph, pw) = self
            .rows
            .iter()
            .flatten()
            .flatten()
            .map(|p| p.dim())
            .next()
            .ok_or_else(|| Error::invalid("grid has no panels"))?;
        if self.rows.iter().flatten().flatten().any(|p| p.dim() != (ph, pw)) {
            return Err(Error::invalid("grid panels differ in shape"));
        }
        let scale = scale.max(1);
        let cols = self.rows.iter().map(Vec::len).max().unwrap_or(0) as u32;
        let cell_w = pw as u32 * scale;
        let cell_h = ph as u32 * scale;
        let width = cols * cell_w + (cols + 1) * GAP;
        let height = self.rows.len() as u32 * cell_h + (self.rows.len() as u32 + 1) * GAP;
        let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
        let span = (range.1 - range.0).max(f32::EPSILON);
        for (r, row) in self.rows.iter().enumerate() {
            for (c, panel) in row.iter().enumerate() {
                let Some(p) = panel else { continue };
                let x0 = GAP + c as u32 * (cell_w + GAP);
                let y0 = GAP + r as u32 * (cell_h + GAP);
                for ((f, t), &v) in p.indexed_iter() {
                    let px = colour((v - range.0) / span);
                    let y = y0 + (ph - 1 - f) as u32 * scale;
                    let x = x0 + t as u32 * scale;
                    for dy in 0..scale {
                        for dx in 0..scale {
                            img.put_pixel(x + dx, y + dy, px);
                        }
                    }
                }
            }
        }
        Ok(img)
    }

    pub fn save(&self, path: &Path, scale: u32, range: (f32, f32)) -> Result<()> {
        let img = self.render(scale, range)?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
    }
}

/// One example decomposed by a slot model.
pub struct SlotFigure {
    /// Row 0: input chord. Row 1: the K slot contributions. Row 2: each
    /// ground-truth note under the slot it was matched to.
    pub grid: Grid,
    /// The K normalized masks, in `[0, 1]`.
    pub masks: Grid,
    /// For each ground-truth note, its slot.
    pub matched: Vec<usize>,
}

fn run_model(model: &MusicSlots, record: &ExampleRecord, noise_seed: u64) -> Result<(Vec<Array2<f32>>, Vec<Array2<f32>>)> {
    let x = stack_chords(std::slice::from_ref(record), model.dtype())?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let out = model.forward(&x, &mut rng)?;
    let contrib = model.slot_contributions_db(&out)?.squeeze(0)?;
    let masks = out.masks_norm.squeeze(0)?;
    Ok((tensor_to_maps(&contrib)?, tensor_to_maps(&masks)?))
}

pub fn slot_figure(model: &MusicSlots, record: &ExampleRecord, noise_seed: u64) -> Result<SlotFigure> {
    let (contrib, masks) = run_model(model, record, noise_seed)?;
    let (_, m) = note_mse(&contrib, &record.note_db)?;
    let mut gt_row = vec![None; contrib.len()];
    let mut matched = vec![0; record.note_db.len()];
    for &(g, s) in &m.assignment {
        gt_row[s] = Some(record.note_db[g].clone());
        matched[g] = s;
    }
    Ok(SlotFigure {
        grid: Grid {
            rows: vec![vec![Some(record.chord_db.clone())], contrib.into_iter().map(Some).collect(), gt_row],
        },
        masks: Grid { rows: vec![masks.into_iter().map(Some).collect()] },
        matched,
    })
}

/// Ground-truth notes in the first row, then one row per model holding the
/// slot matched to each note, in note order.
pub fn comparison_figure(models: &[&MusicSlots], record: &ExampleRecord, noise_seed: u64) -> Result<Grid> {
    let mut rows = vec![record.note_db.iter().cloned().map(Some).collect::<Vec<_>>()];
    for model in models {
        let (contrib, _) = run_model(model, record, noise_seed)?;
        let (_, m) = note_mse(&contrib, &record.note_db)?;
        let mut row = vec![None; record.note_db.len()];
        for &(g, s) in &m.assignment {
            row[g] = Some(contrib[s].clone());
        }
        rows.push(row);
    }
    Ok(Grid { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, off: f32) -> Array2<f32> {
        Array2::from_shape_fn((h, w), |(i, j)| off + (i * w + j) as f32)
    }

    #[test]
    fn layout_and_orientation() {
        let g = Grid { rows: vec![vec![Some(ramp(3, 2, 0.0))], vec![None, Some(ramp(3, 2, 10.0))]] };
        assert_eq!(g.panel_count(), 2);
        assert_eq!(g.value_range(), (0.0, 15.0));
        let img = g.render(1, g.value_range()).unwrap();
        assert_eq!(img.dimensions(), (2 * 2 + 3 * GAP, 2 * 3 + 3 * GAP));
        // the blank cell stays background
        assert_eq!(*img.get_pixel(GAP, GAP + 3 + GAP), BACKGROUND);
        // lowest bin of the first panel is at its bottom row, darkest
        assert_eq!(*img.get_pixel(GAP, GAP + 2), colour(0.0));
        assert_eq!(*img.get_pixel(GAP + 2 + GAP + 1, 2 * GAP + 3), colour(1.0));
    }

    #[test]
    fn ramp_ends() {
        assert_eq!(colour(0.0), Rgb([0, 0, 4]));
        assert_eq!(colour(1.0), Rgb([252, 253, 191]));
        assert_eq!(colour(f32::NAN), colour(0.0));
        assert_eq!(colour(7.0), colour(1.0));
    }

    #[test]
    fn mismatched_panels_are_rejected() {
        let g = Grid { rows: vec![vec![Some(ramp(3, 2, 0.0)), Some(ramp(2, 2, 0.0))]] };
        assert!(g.render(1, (0.0, 1.0)).is_err());
        assert!(Grid { rows: vec![vec![None]] }.render(1, (0.0, 1.0)).is_err());
    }
}
