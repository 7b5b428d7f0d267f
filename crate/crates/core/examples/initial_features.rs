//! Extracts the first-stage descriptors (Haar box contrasts, gradient
//! orientation histograms, hue histograms) from a drawn test pattern.
//!
//! cargo run --example initial_features

use classigraph::features::{descriptor_for, extract_haar, integral_image, HaarKind, InitialFeature};
use classigraph::image::Image;

fn pattern(size: usize) -> Image {
    // Red disc on the left half, vertical blue stripes on the right, gray elsewhere.
    let c = size as f64 / 4.0;
    let px = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
            if (x - c).powi(2) + (y - 2.0 * c).powi(2) < (0.8 * c).powi(2) {
                [0.9, 0.1, 0.1]
            } else if x > 2.0 * c && ((x as usize) / 3).is_multiple_of(2) {
                [0.1, 0.2, 0.9]
            } else {
                [0.5, 0.5, 0.5]
            }
        })
        .collect();
    Image::from_rgb(size, size, px).expect("valid pixels")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let image = pattern(32);
    let left = classigraph::image::PixelRect::new(0, 0, 16, 32);
    let right = classigraph::image::PixelRect::new(16, 0, 16, 32);
    let integral = integral_image(&image);

    for kind in HaarKind::ALL {
        println!("haar {kind:?}: whole {:+.4}", extract_haar(&integral, &image.bounds(), kind)?);
    }
    for (name, region) in [("left", left), ("right", right)] {
        let grad = descriptor_for(&InitialFeature::Gradient { cells: 1, bins: 6 }, &image, &region)?;
        let hue = descriptor_for(&InitialFeature::Hue { cells: 1, bins: 6 }, &image, &region)?;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!("{name:>5} gradient [{}]", fmt(&grad.values));
        println!("{name:>5} hue      [{}]", fmt(&hue.values));
    }
    Ok(())
}
