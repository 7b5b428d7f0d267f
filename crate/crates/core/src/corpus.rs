//! Annotated datasets: a JSON-lines box manifest, crop extraction with a
//! context margin, negative mining, and a seeded generator of synthetic
//! part-whole scenes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{InitialFeature, PreparedImage};
use crate::image::{Image, ImageError, PixelRect};
use crate::learner::{fit_logistic, LearnError, LogisticParams, Sample};

/// Mined negatives overlap every annotated box by less than this IoU.
pub const NEGATIVE_MAX_IOU: f64 = 0.2;
pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("manifest line {line}: box {rect:?} is not inside the {width}x{height} image {image}")]
    BoxOutside { line: usize, image: String, rect: PixelRect, width: usize, height: usize },
    #[error("box {0:?} is empty or outside the image")]
    BadBox(PixelRect),
    #[error("could not place a negative in {image} after {attempts} attempts")]
    NegativeMining { image: String, attempts: usize },
    #[error("negatives requested but class `{0}` has no boxes to size them from")]
    NoTargetBoxes(String),
    #[error("layout infeasible: {0}")]
    Infeasible(String),
    #[error("generated corpus failed its separability probe: {0}")]
    Probe(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Learn(#[from] LearnError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.display().to_string(), source }
}

/// One annotated box. `image` is relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub image: String,
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: [i64; 4],
    pub split: String,
}

impl Annotation {
    pub fn rect(&self) -> Option<PixelRect> {
        let [x, y, w, h] = self.bbox;
        let fits = |v: i64| i32::try_from(v).is_ok();
        if !(fits(x) && fits(y)) || w <= 0 || h <= 0 || w > u32::MAX as i64 || h > u32::MAX as i64 {
            return None;
        }
        Some(PixelRect::new(x as i32, y as i32, w as u32, h as u32))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub annotations: Vec<Annotation>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut annotations = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let a: Annotation = serde_json::from_str(line)
                .map_err(|e| CorpusError::Malformed { line: i + 1, message: e.to_string() })?;
            if a.class.is_empty() {
                return Err(CorpusError::Malformed { line: i + 1, message: "empty class name".into() });
            }
            if a.rect().is_none() {
                return Err(CorpusError::Malformed { line: i + 1, message: format!("invalid box {:?}", a.bbox) });
            }
            annotations.push(a);
        }
        Ok(Self { annotations })
    }

    pub fn read(path: &Path) -> Result<Self, CorpusError> {
        Self::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.annotations {
            out.push_str(&serde_json::to_string(a).expect("annotation serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_jsonl()).map_err(io_err(path))
    }

    /// Image paths in order of first appearance.
    pub fn images(&self) -> Vec<&str> {
        let mut seen = std::collections::BTreeSet::new();
        self.annotations.iter().map(|a| a.image.as_str()).filter(|i| seen.insert(*i)).collect()
    }
}

/// A crop and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    pub image: Image,
    pub rect: PixelRect,
    /// The inflated box reached past the image border.
    pub clipped: bool,
}

/// `rect` inflated by `margin` times its width (height) on each side,
/// clipped to the image.
pub fn crop_sample(image: &Image, rect: &PixelRect, margin: f64) -> Result<Crop, CorpusError> {
    if rect.is_empty() || !rect.inside(image.width(), image.height()) || margin.is_nan() || margin < 0.0 {
        return Err(CorpusError::BadBox(*rect));
    }
    let dx = (margin * rect.w as f64).round() as i64;
    let dy = (margin * rect.h as f64).round() as i64;
    let x0 = rect.x as i64 - dx;
    let y0 = rect.y as i64 - dy;
    let x1 = rect.right() + dx;
    let y1 = rect.bottom() + dy;
    let (cx0, cy0) = (x0.max(0), y0.max(0));
    let (cx1, cy1) = (x1.min(image.width() as i64), y1.min(image.height() as i64));
    let clipped = (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1);
    let out = PixelRect::new(cx0 as i32, cy0 as i32, (cx1 - cx0) as u32, (cy1 - cy0) as u32);
    let image = image.crop(&out).ok_or(CorpusError::BadBox(out))?;
    Ok(Crop { image, rect: out, clipped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub class: String,
    /// Only annotations with this split tag; all when `None`.
    pub split: Option<String>,
    pub margin: f64,
    pub negatives_per_image: usize,
    /// Boxes of these classes become negatives too.
    pub negative_classes: Vec<String>,
    pub seed: u64,
    pub max_attempts: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            class: String::new(),
            split: None,
            margin: 0.5,
            negatives_per_image: 2,
            negative_classes: Vec::new(),
            seed: 0,
            max_attempts: 1000,
        }
    }
}

/// Mined negative boxes for one image: sizes drawn from `sizes`, positions
/// uniform, each kept only if its IoU with every box in `avoid` is below
/// [`NEGATIVE_MAX_IOU`].
pub fn mine_negatives(
    width: usize,
    height: usize,
    avoid: &[PixelRect],
    sizes: &[(u32, u32)],
    count: usize,
    max_attempts: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<PixelRect>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = None;
        for _ in 0..max_attempts {
            let (w, h) = sizes[rng.gen_range(0..sizes.len())];
            let (w, h) = (w.min(width as u32), h.min(height as u32));
            let x = rng.gen_range(0..=(width as u32 - w)) as i32;
            let y = rng.gen_range(0..=(height as u32 - h)) as i32;
            let r = PixelRect::new(x, y, w, h);
            if avoid.iter().all(|a| r.iou(a) < NEGATIVE_MAX_IOU) {
                placed = Some(r);
                break;
            }
        }
        out.push(placed?);
    }
    Some(out)
}

/// One positive per box of `options.class`, one negative per box of the
/// negative classes, and `negatives_per_image` mined negatives per image.
pub fn load_dataset(path: &Path, options: &LoadOptions) -> Result<Vec<Sample>, CorpusError> {
    let manifest = Manifest::read(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_manifest(&manifest, &root, options)
}

pub fn load_manifest(manifest: &Manifest, root: &Path, options: &LoadOptions) -> Result<Vec<Sample>, CorpusError> {
    let selected: Vec<(usize, &Annotation)> = manifest
        .annotations
        .iter()
        .enumerate()
        .filter(|(_, a)| options.split.as_ref().is_none_or(|s| &a.split == s))
        .collect();
    let mut images: BTreeMap<&str, Image> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for (line, a) in &selected {
        if !images.contains_key(a.image.as_str()) {
            let img = Image::read(&root.join(&a.image))?;
            images.insert(&a.image, img);
            order.push(&a.image);
        }
        let img = &images[a.image.as_str()];
        let rect = a.rect().expect("validated on parse");
        if !rect.inside(img.width(), img.height()) {
            return Err(CorpusError::BoxOutside {
                line: line + 1,
                image: a.image.clone(),
                rect,
                width: img.width(),
                height: img.height(),
            });
        }
    }
    let mut samples = Vec::new();
    for &(line, a) in &selected {
        let positive = a.class == options.class;
        if !positive && !options.negative_classes.contains(&a.class) {
            continue;
        }
        let crop = crop_sample(&images[a.image.as_str()], &a.rect().expect("validated"), options.margin)?;
        samples.push(Sample { image: crop.image, positive, class: options.class.clone(), source: line, clipped: crop.clipped });
    }
    if options.negatives_per_image == 0 || order.is_empty() {
        return Ok(samples);
    }
    let sizes: Vec<(u32, u32)> = selected
        .iter()
        .filter(|(_, a)| a.class == options.class)
        .map(|(_, a)| {
            let r = a.rect().expect("validated");
            (r.w, r.h)
        })
        .collect();
    if sizes.is_empty() {
        return Err(CorpusError::NoTargetBoxes(options.class.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut source = manifest.annotations.len();
    for name in order {
        let img = &images[name];
        let avoid: Vec<PixelRect> =
            selected.iter().filter(|(_, a)| a.image == name).map(|(_, a)| a.rect().expect("validated")).collect();
        let boxes = mine_negatives(img.width(), img.height(), &avoid, &sizes, options.negatives_per_image, options.max_attempts, &mut rng)
            .ok_or_else(|| CorpusError::NegativeMining { image: name.to_string(), attempts: options.max_attempts })?;
        for r in boxes {
            let crop = crop_sample(img, &r, options.margin)?;
            samples.push(Sample { image: crop.image, positive: false, class: options.class.clone(), source, clipped: crop.clipped });
            source += 1;
        }
    }
    Ok(samples)
}

/// Scene counts for one split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub name: String,
    pub face: usize,
    pub cart: usize,
    pub distractor: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Side of a composite's square box in pixels.
    pub composite_size: f64,
    /// Relative size variation of composites, uniform in `1 +- size_jitter`.
    pub size_jitter: f64,
    /// Part-center displacement within a composite, as a fraction of its size.
    pub part_jitter: f64,
    pub disc_diameter: f64,
    /// Bar width and height as fractions of the composite size.
    pub bar_size: [f64; 2],
    pub disc_color: [f64; 3],
    pub bar_color: [f64; 3],
    pub wedge_color: [f64; 3],
    pub background: f64,
    pub noise: f64,
    /// Parts scattered in a distractor scene, inclusive range.
    pub distractor_parts: [usize; 2],
    pub splits: Vec<SplitCounts>,
    /// Check that face and cart crops are separable by a gradient-histogram probe.
    pub probe: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            composite_size: 32.0,
            size_jitter: 0.08,
            part_jitter: 0.08,
            disc_diameter: 0.28,
            bar_size: [0.7, 0.2],
            disc_color: [0.85, 0.15, 0.15],
            bar_color: [0.15, 0.25, 0.85],
            wedge_color: [0.2, 0.7, 0.25],
            background: 0.5,
            noise: 0.08,
            distractor_parts: [2, 4],
            splits: vec![
                SplitCounts { name: "train".into(), face: 60, cart: 60, distractor: 40 },
                SplitCounts { name: "test".into(), face: 70, cart: 70, distractor: 60 },
            ],
            probe: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Bar { cx: f64, cy: f64, hw: f64, hh: f64 },
    /// Upward-pointing isosceles triangle inside the box.
    Wedge { cx: f64, cy: f64, hw: f64, hh: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Bar { cx, cy, hw, hh } => (x - cx).abs() <= hw && (y - cy).abs() <= hh,
            Shape::Wedge { cx, cy, hw, hh } => {
                let t = (y - (cy - hh)) / (2.0 * hh);
                (0.0..=1.0).contains(&t) && (x - cx).abs() <= hw * t
            }
        }
    }

    /// Smallest pixel box covering every pixel center the shape paints.
    fn rect(&self) -> PixelRect {
        let (cx, cy, hw, hh) = match *self {
            Shape::Disc { cx, cy, r } => (cx, cy, r, r),
            Shape::Bar { cx, cy, hw, hh } | Shape::Wedge { cx, cy, hw, hh } => (cx, cy, hw, hh),
        };
        let x0 = (cx - hw - 0.5).ceil() as i32;
        let y0 = (cy - hh - 0.5).ceil() as i32;
        let x1 = (cx + hw - 0.5).floor() as i32;
        let y1 = (cy + hh - 0.5).floor() as i32;
        PixelRect::new(x0, y0, (x1 - x0 + 1).max(1) as u32, (y1 - y0 + 1).max(1) as u32)
    }

    fn class(&self) -> &'static str {
        match self {
            Shape::Disc { .. } => "disc",
            Shape::Bar { .. } => "bar",
            Shape::Wedge { .. } => "wedge",
        }
    }
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn render(cfg: &SynthConfig, shapes: &[Shape], rng: &mut ChaCha8Rng) -> Image {
    let mut px = Vec::with_capacity(cfg.width * cfg.height);
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let g = cfg.background + rng.gen_range(-cfg.noise..=cfg.noise);
            let mut c = [g, g, g];
            for s in shapes {
                if s.contains(fx, fy) {
                    c = match s {
                        Shape::Disc { .. } => cfg.disc_color,
                        Shape::Bar { .. } => cfg.bar_color,
                        Shape::Wedge { .. } => cfg.wedge_color,
                    };
                }
            }
            px.push(c.map(quantize));
        }
    }
    Image::from_rgb(cfg.width, cfg.height, px).expect("canvas is nonempty and values are in range")
}

/// Parts of a composite laid out in its box `(x, y, size)`. A face has two
/// discs above a bar, a cart a bar above two discs.
fn composite_parts(cfg: &SynthConfig, face: bool, x: f64, y: f64, size: f64, rng: &mut ChaCha8Rng) -> Vec<Shape> {
    let j = cfg.part_jitter * size;
    let mut jitter = || (rng.gen_range(-j..=j), rng.gen_range(-j..=j));
    let (disc_row, bar_row) = if face { (0.3, 0.72) } else { (0.7, 0.28) };
    let r = cfg.disc_diameter * size / 2.0;
    let mut parts = Vec::with_capacity(3);
    for col in [0.28, 0.72] {
        let (dx, dy) = jitter();
        parts.push(Shape::Disc { cx: x + col * size + dx, cy: y + disc_row * size + dy, r });
    }
    let (dx, dy) = jitter();
    parts.push(Shape::Bar {
        cx: x + 0.5 * size + dx,
        cy: y + bar_row * size + dy,
        hw: cfg.bar_size[0] * size / 2.0,
        hh: cfg.bar_size[1] * size / 2.0,
    });
    parts
}

fn check_layout(cfg: &SynthConfig) -> Result<(), CorpusError> {
    let max = cfg.composite_size * (1.0 + cfg.size_jitter);
    if cfg.width == 0 || cfg.height == 0 || max.ceil() as usize > cfg.width.min(cfg.height) {
        return Err(CorpusError::Infeasible(format!("composite of {max:.1} px on a {}x{} canvas", cfg.width, cfg.height)));
    }
    let r = cfg.disc_diameter / 2.0;
    let j = cfg.part_jitter;
    let disc_ok = 0.28 - r - j >= 0.0 && 0.72 + r + j <= 1.0 && 0.3 - r - j >= 0.0 && 0.7 + r + j <= 1.0;
    let bar_ok = 0.5 - cfg.bar_size[0] / 2.0 - j >= 0.0 && 0.28 - cfg.bar_size[1] / 2.0 - j >= 0.0 && 0.72 + cfg.bar_size[1] / 2.0 + j <= 1.0;
    if !(disc_ok && bar_ok) || cfg.size_jitter < 0.0 || cfg.size_jitter >= 1.0 {
        return Err(CorpusError::Infeasible("part jitter lets parts leave their composite".into()));
    }
    if cfg.distractor_parts[0] > cfg.distractor_parts[1] {
        return Err(CorpusError::Infeasible("distractor part range is reversed".into()));
    }
    Ok(())
}

fn annotation(image: &str, class: &str, r: &PixelRect, split: &str) -> Annotation {
    Annotation { image: image.into(), class: class.into(), bbox: [r.x as i64, r.y as i64, r.w as i64, r.h as i64], split: split.into() }
}

/// Writes scenes as `<split>/<index>.ppm` plus `manifest.jsonl` under
/// `out_dir` and returns the manifest.
pub fn generate_synthetic(config: &SynthConfig, seed: u64, out_dir: &Path) -> Result<Manifest, CorpusError> {
    check_layout(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = Manifest::default();
    let mut probe_crops: Vec<(Image, bool)> = Vec::new();
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    for split in &config.splits {
        let dir: PathBuf = out_dir.join(&split.name);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let kinds = std::iter::repeat_n(Some(true), split.face)
            .chain(std::iter::repeat_n(Some(false), split.cart))
            .chain(std::iter::repeat_n(None, split.distractor));
        for (index, kind) in kinds.enumerate() {
            let name = format!("{}/{index:05}.ppm", split.name);
            let mut shapes = Vec::new();
            let mut notes = Vec::new();
            match kind {
                Some(face) => {
                    let size = config.composite_size * rng.gen_range(1.0 - config.size_jitter..=1.0 + config.size_jitter);
                    let x = rng.gen_range(0.0..=config.width as f64 - size).floor();
                    let y = rng.gen_range(0.0..=config.height as f64 - size).floor();
                    let s = size.floor();
                    shapes = composite_parts(config, face, x, y, s, &mut rng);
                    let rect = PixelRect::new(x as i32, y as i32, s as u32, s as u32);
                    for p in &shapes {
                        debug_assert!(p.rect().intersect(&rect) == Some(p.rect()));
                    }
                    notes.push((if face { "face" } else { "cart" }, rect));
                }
                None => {
                    let n = rng.gen_range(config.distractor_parts[0]..=config.distractor_parts[1]);
                    let size = config.composite_size;
                    for _ in 0..n {
                        let shape = match rng.gen_range(0..3) {
                            0 => {
                                let r = config.disc_diameter * size / 2.0;
                                Shape::Disc {
                                    cx: rng.gen_range(r + 1.0..config.width as f64 - r - 1.0),
                                    cy: rng.gen_range(r + 1.0..config.height as f64 - r - 1.0),
                                    r,
                                }
                            }
                            k => {
                                let hw = config.bar_size[0] * size / 2.0;
                                let hh = config.bar_size[1] * size / 2.0;
                                let cx = rng.gen_range(hw + 1.0..config.width as f64 - hw - 1.0);
                                let cy = rng.gen_range(hh + 1.0..config.height as f64 - hh - 1.0);
                                if k == 1 {
                                    Shape::Bar { cx, cy, hw, hh }
                                } else {
                                    Shape::Wedge { cx, cy, hw: hh * 2.0, hh: hh * 2.0 }
                                }
                            }
                        };
                        shapes.push(shape);
                    }
                }
            }
            let image = render(config, &shapes, &mut rng);
            for (class, rect) in &notes {
                manifest.annotations.push(annotation(&name, class, rect, &split.name));
                if config.probe && probe_crops.len() < 200 {
                    probe_crops.push((image.crop(rect).expect("composite inside canvas"), *class == "face"));
                }
            }
            for s in &shapes {
                let r = s.rect().intersect(&image.bounds()).expect("parts are on the canvas");
                manifest.annotations.push(annotation(&name, s.class(), &r, &split.name));
            }
            image.write(&out_dir.join(&name))?;
        }
    }
    manifest.write(&out_dir.join(MANIFEST_NAME))?;
    if config.probe {
        run_probe(&probe_crops)?;
    }
    Ok(manifest)
}

/// Fits a logistic on 2x2x9 gradient histograms of up to 25 face and 25
/// cart boxes and requires every one of them to be classified correctly.
pub fn run_probe(crops: &[(Image, bool)]) -> Result<(), CorpusError> {
    let faces = crops.iter().filter(|c| c.1).take(25);
    let carts = crops.iter().filter(|c| !c.1).take(25);
    let chosen: Vec<&(Image, bool)> = faces.chain(carts).collect();
    if !chosen.iter().any(|c| c.1) || !chosen.iter().any(|c| !c.1) {
        return Ok(());
    }
    let feature = InitialFeature::Gradient { cells: 2, bins: 9 };
    let x: Vec<Vec<f64>> = chosen
        .iter()
        .map(|(img, _)| PreparedImage::new(img).descriptor(&feature, &img.bounds()).map(|d| d.values))
        .collect::<Result<_, _>>()
        .map_err(|e| CorpusError::Probe(e.to_string()))?;
    let y: Vec<bool> = chosen.iter().map(|c| c.1).collect();
    let w = vec![1.0 / y.len() as f64; y.len()];
    let fit = fit_logistic(&x, &y, &w, &LogisticParams { l2: 1e-6, tol: 1e-10, max_iter: 500 })?;
    let wrong = x.iter().zip(&y).filter(|(row, &l)| (fit.predict(row) >= 0.5) != l).count();
    if wrong > 0 {
        return Err(CorpusError::Probe(format!("{wrong} of {} probe crops misclassified", y.len())));
    }
    Ok(())
}
