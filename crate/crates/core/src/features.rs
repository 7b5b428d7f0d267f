//! First-stage feature extraction: Haar-like box contrasts over an integral
//! image, gradient-orientation histograms and hue histograms.
//!
//! Every extractor works on a pixel rectangle that must lie inside the image
//! and yields a [`Descriptor`]. Histogram descriptors are L1-normalized over
//! the whole descriptor, or all-zero when no pixel contributes any mass.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Image, PixelRect};

/// Pixels with HSV saturation below this value carry no usable hue.
pub const SATURATION_MIN: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("region {region:?} is not inside the {width}x{height} image")]
    RegionOutside { region: PixelRect, width: usize, height: usize },
    #[error("region {0:?} is smaller than 2x2 pixels")]
    Degenerate(PixelRect),
    #[error("hue histogram needs an RGB image")]
    NoColor,
    #[error("initial feature type `{0}` is not implemented")]
    Unimplemented(&'static str),
    #[error("invalid extractor parameters: {0}")]
    BadParameters(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaarKind {
    /// left minus right
    TwoRectHoriz,
    /// top minus bottom
    TwoRectVert,
    /// outer vertical stripes minus the middle stripe
    ThreeRect,
    /// main diagonal quadrants minus anti-diagonal quadrants
    FourRect,
}

impl HaarKind {
    pub const ALL: [HaarKind; 4] =
        [HaarKind::TwoRectHoriz, HaarKind::TwoRectVert, HaarKind::ThreeRect, HaarKind::FourRect];
}

/// An initial (first-stage) feature type plus its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InitialFeature {
    Haar { kind: HaarKind },
    Gradient { cells: u32, bins: u32 },
    Hue { cells: u32, bins: u32 },
    // Declared so configurations can name them; extraction is not provided.
    Sift,
    Gabor,
    Segmentation,
}

impl InitialFeature {
    /// Length of the descriptor this feature produces.
    pub fn dimension(&self) -> usize {
        match *self {
            InitialFeature::Haar { .. } => 1,
            InitialFeature::Gradient { cells, bins } | InitialFeature::Hue { cells, bins } => {
                (cells * cells * bins) as usize
            }
            InitialFeature::Sift | InitialFeature::Gabor | InitialFeature::Segmentation => 0,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            InitialFeature::Haar { .. } => "haar",
            InitialFeature::Gradient { .. } => "gradient",
            InitialFeature::Hue { .. } => "hue",
            InitialFeature::Sift => "sift",
            InitialFeature::Gabor => "gabor",
            InitialFeature::Segmentation => "segmentation",
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        match *self {
            InitialFeature::Gradient { cells, bins } | InitialFeature::Hue { cells, bins } => {
                if cells == 0 || bins == 0 {
                    return Err(FeatureError::BadParameters(format!("{self} needs cells, bins >= 1")));
                }
                Ok(())
            }
            InitialFeature::Haar { .. } => Ok(()),
            other => Err(FeatureError::Unimplemented(other.tag())),
        }
    }
}

impl fmt::Display for InitialFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialFeature::Haar { kind } => write!(f, "haar({kind:?})"),
            InitialFeature::Gradient { cells, bins } => write!(f, "gradient({cells}x{cells},{bins})"),
            InitialFeature::Hue { cells, bins } => write!(f, "hue({cells}x{cells},{bins})"),
            other => f.write_str(other.tag()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
    pub feature: InitialFeature,
    pub region: PixelRect,
}

/// A region in coordinates normalized to the image, origin top-left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Region {
    pub const FULL: Region = Region { x: 0.0, y: 0.0, w: 1.0, h: 1.0 };

    /// Maps to pixels with floor on the near edge and ceil on the far edge,
    /// grown to at least 2x2 where the image allows it.
    pub fn to_pixels(&self, width: usize, height: usize) -> PixelRect {
        let span = |lo: f64, len: f64, size: usize| -> (i32, u32) {
            let size = size as i64;
            let mut a = ((lo * size as f64).floor() as i64).clamp(0, size);
            let mut b = (((lo + len) * size as f64).ceil() as i64).clamp(0, size);
            if b - a < 2 {
                b = (a + 2).min(size);
                a = (b - 2).max(0);
            }
            (a as i32, (b - a) as u32)
        };
        let (x, w) = span(self.x, self.w, width);
        let (y, h) = span(self.y, self.h, height);
        PixelRect::new(x, y, w, h)
    }
}

/// Summed-area table of intensity with one row and column of zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    pub fn new(image: &Image) -> Self {
        let (w, h) = (image.width(), image.height());
        let stride = w + 1;
        let mut table = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += image.gray(x, y);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
        Self { width: w, height: h, table }
    }

    /// Value at table corner `(x, y)`, i.e. the sum over `[0, x) x [0, y)`.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.table[y * (self.width + 1) + x]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum over the half-open box `[x0, x1) x [y0, y1)` using four lookups.
    #[inline]
    pub fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        self.at(x1, y1) - self.at(x1, y0) - self.at(x0, y1) + self.at(x0, y0)
    }

    pub fn box_sum(&self, rect: &PixelRect) -> f64 {
        if rect.is_empty() {
            return 0.0;
        }
        let x0 = rect.x.max(0) as usize;
        let y0 = rect.y.max(0) as usize;
        let x1 = (rect.right().max(0) as usize).min(self.width);
        let y1 = (rect.bottom().max(0) as usize).min(self.height);
        self.sum(x0, y0, x1, y1)
    }

    fn mean(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Option<f64> {
        let area = (x1.checked_sub(x0)? * y1.checked_sub(y0)?) as f64;
        (area > 0.0).then(|| self.sum(x0, y0, x1, y1) / area)
    }
}

pub fn integral_image(image: &Image) -> IntegralImage {
    IntegralImage::new(image)
}

fn check_region(region: &PixelRect, width: usize, height: usize) -> Result<(usize, usize, usize, usize), FeatureError> {
    if region.is_empty() || !region.inside(width, height) {
        return Err(FeatureError::RegionOutside { region: *region, width, height });
    }
    Ok((region.x as usize, region.y as usize, region.w as usize, region.h as usize))
}

/// Haar-like contrast of normalized box means, in `[-1, 1]`. Odd widths or
/// heights leave the central row/column out so mirrored halves stay equal in
/// size; a kind whose boxes do not fit the region responds with 0.
pub fn extract_haar(integral: &IntegralImage, region: &PixelRect, kind: HaarKind) -> Result<f64, FeatureError> {
    let (x0, y0, w, h) = check_region(region, integral.width, integral.height)?;
    let (x1, y1) = (x0 + w, y0 + h);
    let (hw, hh) = (w / 2, h / 2);
    let value = match kind {
        HaarKind::TwoRectHoriz => {
            let left = integral.mean(x0, y0, x0 + hw, y1);
            let right = integral.mean(x1 - hw, y0, x1, y1);
            left.zip(right).map(|(l, r)| l - r)
        }
        HaarKind::TwoRectVert => {
            let top = integral.mean(x0, y0, x1, y0 + hh);
            let bottom = integral.mean(x0, y1 - hh, x1, y1);
            top.zip(bottom).map(|(t, b)| t - b)
        }
        HaarKind::ThreeRect => {
            let t = w / 3;
            let left = integral.mean(x0, y0, x0 + t, y1);
            let mid = integral.mean(x0 + t, y0, x1 - t, y1);
            let right = integral.mean(x1 - t, y0, x1, y1);
            match (left, mid, right) {
                (Some(l), Some(m), Some(r)) => Some(0.5 * (l + r) - m),
                _ => None,
            }
        }
        HaarKind::FourRect => {
            let tl = integral.mean(x0, y0, x0 + hw, y0 + hh);
            let tr = integral.mean(x1 - hw, y0, x1, y0 + hh);
            let bl = integral.mean(x0, y1 - hh, x0 + hw, y1);
            let br = integral.mean(x1 - hw, y1 - hh, x1, y1);
            match (tl, tr, bl, br) {
                (Some(a), Some(b), Some(c), Some(d)) => Some(0.5 * (a + d) - 0.5 * (b + c)),
                _ => None,
            }
        }
    };
    Ok(value.unwrap_or(0.0).clamp(-1.0, 1.0))
}

fn l1_normalize(values: &mut [f64]) {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        values.iter_mut().for_each(|v| *v /= total);
    }
}

#[inline]
fn cell_of(offset: usize, extent: usize, cells: usize) -> usize {
    (offset * cells / extent).min(cells - 1)
}

/// Histogram of unsigned gradient orientations over `[0, pi)`, magnitude
/// weighted, one histogram per cell of a `cells x cells` grid. Gradients are
/// central differences with borders clamped to the region.
pub fn extract_gradient_histogram(
    image: &Image,
    region: &PixelRect,
    cells: u32,
    bins: u32,
) -> Result<Descriptor, FeatureError> {
    let feature = InitialFeature::Gradient { cells, bins };
    feature.validate()?;
    let (x0, y0, w, h) = check_region(region, image.width(), image.height())?;
    if w < 2 || h < 2 {
        return Err(FeatureError::Degenerate(*region));
    }
    let (c, b) = (cells as usize, bins as usize);
    let mut values = vec![0.0; c * c * b];
    for dy in 0..h {
        let up = y0 + dy.saturating_sub(1);
        let down = y0 + (dy + 1).min(h - 1);
        let cy = cell_of(dy, h, c);
        for dx in 0..w {
            let left = x0 + dx.saturating_sub(1);
            let right = x0 + (dx + 1).min(w - 1);
            let gx = image.gray(right, y0 + dy) - image.gray(left, y0 + dy);
            let gy = image.gray(x0 + dx, down) - image.gray(x0 + dx, up);
            let magnitude = gx.hypot(gy);
            if magnitude == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(PI);
            let bin = ((theta / PI * b as f64) as usize).min(b - 1);
            let cx = cell_of(dx, w, c);
            values[(cy * c + cx) * b + bin] += magnitude;
        }
    }
    l1_normalize(&mut values);
    Ok(Descriptor { values, feature, region: *region })
}

/// Hue in degrees `[0, 360)` and saturation in `[0, 1]` of an RGB triple.
pub fn hue_saturation(rgb: [f64; 3]) -> (f64, f64) {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let saturation = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, saturation);
    }
    let hue = if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (hue.rem_euclid(360.0), saturation)
}

/// Per-cell hue histograms, L1-normalized over the whole descriptor. Pixels
/// with saturation below [`SATURATION_MIN`] are left out.
pub fn extract_hue_histogram(
    image: &Image,
    region: &PixelRect,
    cells: u32,
    bins: u32,
) -> Result<Descriptor, FeatureError> {
    let feature = InitialFeature::Hue { cells, bins };
    feature.validate()?;
    if !image.has_color() {
        return Err(FeatureError::NoColor);
    }
    let (x0, y0, w, h) = check_region(region, image.width(), image.height())?;
    let (c, b) = (cells as usize, bins as usize);
    let mut values = vec![0.0; c * c * b];
    for dy in 0..h {
        let cy = cell_of(dy, h, c);
        for dx in 0..w {
            let Some(rgb) = image.rgb(x0 + dx, y0 + dy) else { continue };
            let (hue, saturation) = hue_saturation(rgb);
            if saturation < SATURATION_MIN {
                continue;
            }
            let bin = ((hue / 360.0 * b as f64) as usize).min(b - 1);
            values[(cy * c + cell_of(dx, w, c)) * b + bin] += 1.0;
        }
    }
    l1_normalize(&mut values);
    Ok(Descriptor { values, feature, region: *region })
}

/// An image together with its integral table, shared by every leaf
/// evaluation on that image.
pub struct PreparedImage<'a> {
    image: &'a Image,
    integral: IntegralImage,
}

impl<'a> PreparedImage<'a> {
    pub fn new(image: &'a Image) -> Self {
        Self { image, integral: IntegralImage::new(image) }
    }

    pub fn image(&self) -> &'a Image {
        self.image
    }

    pub fn integral(&self) -> &IntegralImage {
        &self.integral
    }

    pub fn descriptor(&self, feature: &InitialFeature, region: &PixelRect) -> Result<Descriptor, FeatureError> {
        match *feature {
            InitialFeature::Haar { kind } => Ok(Descriptor {
                values: vec![extract_haar(&self.integral, region, kind)?],
                feature: *feature,
                region: *region,
            }),
            InitialFeature::Gradient { cells, bins } => extract_gradient_histogram(self.image, region, cells, bins),
            InitialFeature::Hue { cells, bins } => extract_hue_histogram(self.image, region, cells, bins),
            other => Err(FeatureError::Unimplemented(other.tag())),
        }
    }
}

/// Uniform dispatch over the initial feature types.
pub fn descriptor_for(feature: &InitialFeature, image: &Image, region: &PixelRect) -> Result<Descriptor, FeatureError> {
    PreparedImage::new(image).descriptor(feature, region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        let px = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Image::from_gray(w, h, px).unwrap()
    }

    fn color(w: usize, h: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Image {
        let px = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Image::from_rgb(w, h, px).unwrap()
    }

    #[test]
    fn integral_full_box_of_ones() {
        let ii = integral_image(&Image::filled(2, 2, 1.0).unwrap());
        assert_eq!(ii.box_sum(&PixelRect::full(2, 2)), 4.0);
        assert_eq!(ii.at(0, 0), 0.0);
        assert_eq!(ii.box_sum(&PixelRect::new(1, 1, 0, 1)), 0.0);
        assert_eq!(ii.sum(1, 1, 1, 2), 0.0);
    }

    #[test]
    fn integral_matches_brute_force_on_every_rectangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // intensities on the 8-bit grid, as loaded from PNM files
        let px = (0..25).map(|_| rng.gen_range(0..=255) as f64 / 255.0).collect();
        let int_img = Image::from_gray(5, 5, px).unwrap();
        let ii = integral_image(&int_img);
        let mut checked = 0;
        for y0 in 0..5 {
            for y1 in y0 + 1..=5 {
                for x0 in 0..5 {
                    for x1 in x0 + 1..=5 {
                        let mut direct = 0.0;
                        for y in y0..y1 {
                            for x in x0..x1 {
                                direct += int_img.gray(x, y);
                            }
                        }
                        let via = ii.sum(x0, y0, x1, y1);
                        assert!((via - direct).abs() <= 1e-12, "box ({x0},{y0})-({x1},{y1})");
                        checked += 1;
                    }
                }
            }
        }
        assert_eq!(checked, 225);
    }

    #[test]
    fn integral_is_monotone() {
        let img = gray(6, 4, |x, y| ((x * 7 + y * 3) % 5) as f64 / 4.0);
        let ii = integral_image(&img);
        for y in 0..=4 {
            for x in 0..=6 {
                if x > 0 {
                    assert!(ii.at(x, y) >= ii.at(x - 1, y));
                }
                if y > 0 {
                    assert!(ii.at(x, y) >= ii.at(x, y - 1));
                }
            }
        }
    }

    #[test]
    fn haar_is_zero_on_constant_images() {
        let ii = integral_image(&Image::filled(9, 9, 0.37).unwrap());
        for kind in HaarKind::ALL {
            assert!(extract_haar(&ii, &PixelRect::full(9, 9), kind).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn haar_step_edges() {
        let img = gray(8, 6, |x, _| if x < 4 { 1.0 } else { 0.0 });
        let ii = integral_image(&img);
        assert_eq!(extract_haar(&ii, &PixelRect::full(8, 6), HaarKind::TwoRectHoriz).unwrap(), 1.0);
        let t = img.transpose();
        let it = integral_image(&t);
        assert_eq!(extract_haar(&it, &PixelRect::full(6, 8), HaarKind::TwoRectVert).unwrap(), 1.0);
    }

    #[test]
    fn haar_rejects_regions_outside() {
        let ii = integral_image(&Image::filled(4, 4, 0.0).unwrap());
        let err = extract_haar(&ii, &PixelRect::new(2, 2, 4, 4), HaarKind::TwoRectHoriz).unwrap_err();
        assert!(matches!(err, FeatureError::RegionOutside { .. }));
    }

    #[test]
    fn gradient_histogram_of_constant_region_is_zero() {
        let d = extract_gradient_histogram(&Image::filled(6, 6, 0.5).unwrap(), &PixelRect::full(6, 6), 2, 9).unwrap();
        assert_eq!(d.values.len(), 36);
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge_puts_all_mass_in_bin_zero() {
        // gx > 0 only, gy = 0 everywhere: orientation 0
        let img = gray(8, 8, |x, _| if x < 4 { 0.0 } else { 1.0 });
        let d = extract_gradient_histogram(&img, &PixelRect::full(8, 8), 1, 9).unwrap();
        assert!((d.values[0] - 1.0).abs() < 1e-15);
        assert!(d.values[1..].iter().all(|&v| v == 0.0));
        // the mirrored edge has gx < 0, which is the same unsigned orientation
        let d = extract_gradient_histogram(&img.flip_horizontal(), &PixelRect::full(8, 8), 1, 9).unwrap();
        assert!((d.values[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_histogram_rejects_tiny_regions() {
        let img = Image::filled(4, 4, 0.0).unwrap();
        assert!(matches!(
            extract_gradient_histogram(&img, &PixelRect::new(0, 0, 1, 3), 1, 9),
            Err(FeatureError::Degenerate(_))
        ));
    }

    #[test]
    fn hue_histogram_fixtures() {
        let red = color(4, 4, |_, _| [1.0, 0.0, 0.0]);
        let d = extract_hue_histogram(&red, &PixelRect::full(4, 4), 1, 12).unwrap();
        assert_eq!(d.values[0], 1.0);

        let grey = color(4, 4, |_, _| [0.4, 0.4, 0.4]);
        let d = extract_hue_histogram(&grey, &PixelRect::full(4, 4), 1, 12).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));

        // direct count: 8 red pixels at hue 0 (bin 0), 8 green at hue 120 (bin 4)
        let split = color(4, 4, |x, _| if x < 2 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] });
        let d = extract_hue_histogram(&split, &PixelRect::full(4, 4), 1, 12).unwrap();
        assert_eq!(d.values[0], 0.5);
        assert_eq!(d.values[4], 0.5);
        assert_eq!(d.values.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn hue_histogram_needs_color() {
        let img = Image::filled(4, 4, 0.5).unwrap();
        assert_eq!(extract_hue_histogram(&img, &PixelRect::full(4, 4), 1, 12), Err(FeatureError::NoColor));
    }

    #[test]
    fn descriptor_dispatch() {
        let img = color(8, 8, |x, y| [x as f64 / 8.0, y as f64 / 8.0, 0.5]);
        let r = PixelRect::full(8, 8);
        assert_eq!(descriptor_for(&InitialFeature::Gradient { cells: 1, bins: 9 }, &img, &r).unwrap().values.len(), 9);
        let haar = InitialFeature::Haar { kind: HaarKind::TwoRectHoriz };
        assert_eq!(descriptor_for(&haar, &img, &r).unwrap().values.len(), 1);
        let a = descriptor_for(&InitialFeature::Hue { cells: 2, bins: 12 }, &img, &r).unwrap();
        let b = descriptor_for(&InitialFeature::Hue { cells: 2, bins: 12 }, &img, &r).unwrap();
        let bits = |d: &Descriptor| d.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(
            descriptor_for(&InitialFeature::Sift, &img, &r),
            Err(FeatureError::Unimplemented("sift"))
        );
    }

    #[test]
    fn normalized_regions_map_to_pixels() {
        assert_eq!(Region::FULL.to_pixels(10, 8), PixelRect::full(10, 8));
        let r = Region { x: 0.25, y: 0.5, w: 0.3, h: 0.01 }.to_pixels(10, 8);
        assert_eq!(r, PixelRect::new(2, 4, 4, 2));
        let corner = Region { x: 0.99, y: 0.99, w: 0.0, h: 0.0 }.to_pixels(10, 8);
        assert_eq!(corner, PixelRect::new(8, 6, 2, 2));
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (2usize..10, 2usize..10).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::array::uniform3(0u8..=255), w * h).prop_map(move |px| {
                let rgb = px.iter().map(|p| p.map(|c| c as f64 / 255.0)).collect();
                Image::from_rgb(w, h, rgb).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn histograms_are_nonnegative_and_sum_to_zero_or_one(img in arb_image(), cells in 1u32..3, bins in 1u32..13) {
            let r = img.bounds();
            for d in [
                extract_gradient_histogram(&img, &r, cells, bins).unwrap(),
                extract_hue_histogram(&img, &r, cells, bins).unwrap(),
            ] {
                prop_assert!(d.values.iter().all(|&v| v >= 0.0 && v.is_finite()));
                let s: f64 = d.values.iter().sum();
                prop_assert!(s.abs() < 1e-9 || (s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn two_rect_haar_negates_under_reflection(img in arb_image()) {
            let r = img.bounds();
            let h = extract_haar(&integral_image(&img), &r, HaarKind::TwoRectHoriz).unwrap();
            let hf = extract_haar(&integral_image(&img.flip_horizontal()), &r, HaarKind::TwoRectHoriz).unwrap();
            prop_assert!((h + hf).abs() < 1e-12);
            let t = img.transpose();
            let v = extract_haar(&integral_image(&t), &t.bounds(), HaarKind::TwoRectVert).unwrap();
            prop_assert!((v - h).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&h));
        }
    }
}
