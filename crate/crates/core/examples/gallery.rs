//! Writes a strip of renders sweeping each attribute, for eyeballing the generator.

use knoblab::persist::{export_image, ImageFormat};
use knoblab::synth::render_edit;
use knoblab::{AttributeVector, ImageTensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "gallery.png".into());
    let seed = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(7u64);
    let res = 64;
    let steps = [0.0, 0.25, 0.5, 0.75, 1.0];
    let (rows, cols) = (4, steps.len());
    let mut canvas = vec![0.0; rows * res * cols * res];
    for attr in 0..rows {
        for (c, &v) in steps.iter().enumerate() {
            let a = AttributeVector::uniform(0.5)?.with(attr, v)?;
            let img = render_edit(seed, &a, res)?;
            for y in 0..res {
                for x in 0..res {
                    canvas[(attr * res + y) * cols * res + c * res + x] = img.data()[y * res + x];
                }
            }
        }
    }
    let strip = ImageTensor::new(rows * res, cols * res, canvas)?;
    export_image(&strip, out.as_ref(), ImageFormat::Png)?;
    println!("wrote {out}");
    Ok(())
}
