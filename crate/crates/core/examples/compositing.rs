//! Power-domain compositing of slot spectrograms under the three mask
//! normalizations.
//!
//!     cargo run --example compositing

use candle_core::{DType, Device, Tensor};
use musicslots::slotcore::{composite, MaskNorm, ModelConfig};

fn main() -> musicslots::Result<()> {
    let cfg = ModelConfig::default();
    let dev = Device::Cpu;
    // two slots, one cell each: both at 0 dB
    let specs = Tensor::zeros((1, 2, 1, 1), DType::F64, &dev)?;
    let logits = Tensor::new(&[[[[2.0f64]], [[-1.0]]]], &dev)?;
    for mode in [MaskNorm::Softmax, MaskNorm::Sigmoid, MaskNorm::None] {
        let (pred, masks) = composite(&specs, &logits, mode, &cfg)?;
        let m: Vec<f64> = masks.flatten_all()?.to_vec1()?;
        let p: f64 = pred.flatten_all()?.to_vec1::<f64>()?[0];
        println!("{mode:?}: masks {:.4} {:.4} -> composite {p:.4} dB", m[0], m[1]);
    }
    println!("two unmasked 0 dB slots sum to 10 log10 2 = {:.4} dB", 10.0 * 2f64.log10());

    // a slot below the floor is clamped
    let quiet = Tensor::new(&[[[[-200.0f64]]]], &dev)?;
    let (pred, _) = composite(&quiet, &Tensor::zeros((1, 1, 1, 1), DType::F64, &dev)?, MaskNorm::None, &cfg)?;
    println!("-200 dB composites to {} dB (floor {})", pred.flatten_all()?.to_vec1::<f64>()?[0], cfg.db_floor);
    Ok(())
}
