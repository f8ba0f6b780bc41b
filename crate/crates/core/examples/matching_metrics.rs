//! Slot-to-note matching and the decomposition metrics, including the
//! ground-truth echo that scores perfectly.
//!
//!     cargo run --example matching_metrics

use musicslots::chordset::{InstrumentId, NoteLabel};
use musicslots::dsp::threshold_mask;
use musicslots::evalkit::{hungarian, miou, note_mse, probe_chord_accuracy, ChordPrediction, LabelSpace};
use ndarray::{array, Array2};

fn main() -> musicslots::Result<()> {
    // rows are notes, columns slots
    let cost = array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0]];
    let m = hungarian(&cost)?;
    println!("assignment {:?}, total cost {}", m.assignment, m.total_cost);

    let a = Array2::from_shape_fn((4, 4), |(i, j)| -10.0 * (i + j) as f32);
    let b = Array2::from_shape_fn((4, 4), |(i, _)| -20.0 * i as f32);
    let floor = Array2::from_elem((4, 4), -80.0f32);
    let slots = vec![floor.clone(), b.clone(), a.clone()];
    let (mse, m) = note_mse(&slots, &[a.clone(), b.clone()])?;
    println!("note MSE {mse} with slots {:?}", m.assignment);
    let masks = vec![threshold_mask(a.view(), -30.0), threshold_mask(b.view(), -30.0)];
    let (iou, _) = miou(&slots, &masks, -30.0)?;
    println!("mIoU {iou}");

    let space = LabelSpace::with_instruments(vec![60, 64, 67], InstrumentId::ALL.to_vec());
    let labels = vec![
        NoteLabel { pitch: 60, instrument: InstrumentId::Piano },
        NoteLabel { pitch: 67, instrument: InstrumentId::Flute },
    ];
    let right = ChordPrediction::Notes(labels.clone());
    let wrong = ChordPrediction::Notes(vec![labels[0], NoteLabel { pitch: 64, instrument: InstrumentId::Flute }]);
    let acc = probe_chord_accuracy(&[right, wrong], &[labels.clone(), labels], &space)?;
    println!("chord accuracy {acc}");
    Ok(())
}
