//! Raster images in `[0, 1]` intensity, pixel rectangles, and 8-bit PNM I/O.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {0}x{1}")]
    EmptyImage(usize, usize),
    #[error("pixel buffer has {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("pixel value {0} is not finite or outside [0, 1]")]
    BadValue(f64),
    #[error("PNM parse error: {0}")]
    Parse(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An axis-aligned pixel rectangle. Origin is the top-left corner; `x`/`y`
/// may be negative for placements that fall off the image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelRect {
    pub x: i32,
    pub y: i32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub const fn new(x: i32, y: i32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width as u32, height as u32)
    }

    pub fn right(&self) -> i64 {
        self.x as i64 + self.w as i64
    }

    pub fn bottom(&self) -> i64 {
        self.y as i64 + self.h as i64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    /// True when the rectangle lies entirely inside a `width` x `height` image.
    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.x >= 0 && self.y >= 0 && self.right() <= width as i64 && self.bottom() <= height as i64
    }

    pub fn intersect(&self, other: &PixelRect) -> Option<PixelRect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 as i64 || y1 <= y0 as i64 {
            return None;
        }
        Some(PixelRect::new(x0, y0, (x1 - x0 as i64) as u32, (y1 - y0 as i64) as u32))
    }

    pub fn iou(&self, other: &PixelRect) -> f64 {
        let inter = self.intersect(other).map_or(0, |r| r.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Grayscale intensity plane with an optional RGB plane, all values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    gray: Vec<f64>,
    rgb: Option<Vec<[f64; 3]>>,
}

fn check_unit(v: f64) -> Result<(), ImageError> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ImageError::BadValue(v))
    }
}

/// Rec. 601 luma.
pub fn luma(rgb: [f64; 3]) -> f64 {
    (0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]).clamp(0.0, 1.0)
}

impl Image {
    pub fn from_gray(width: usize, height: usize, gray: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage(width, height));
        }
        if gray.len() != width * height {
            return Err(ImageError::BufferSize { expected: width * height, got: gray.len() });
        }
        gray.iter().try_for_each(|&v| check_unit(v))?;
        Ok(Self { width, height, gray, rgb: None })
    }

    /// Builds a color image; the intensity plane is derived as luma.
    pub fn from_rgb(width: usize, height: usize, rgb: Vec<[f64; 3]>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage(width, height));
        }
        if rgb.len() != width * height {
            return Err(ImageError::BufferSize { expected: width * height, got: rgb.len() });
        }
        rgb.iter().flatten().try_for_each(|&v| check_unit(v))?;
        let gray = rgb.iter().map(|&p| luma(p)).collect();
        Ok(Self { width, height, gray, rgb: Some(rgb) })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, ImageError> {
        Self::from_gray(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bounds(&self) -> PixelRect {
        PixelRect::full(self.width, self.height)
    }

    #[inline]
    pub fn gray(&self, x: usize, y: usize) -> f64 {
        self.gray[y * self.width + x]
    }

    pub fn gray_plane(&self) -> &[f64] {
        &self.gray
    }

    pub fn rgb_plane(&self) -> Option<&[[f64; 3]]> {
        self.rgb.as_deref()
    }

    pub fn has_color(&self) -> bool {
        self.rgb.is_some()
    }

    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> Option<[f64; 3]> {
        self.rgb.as_ref().map(|p| p[y * self.width + x])
    }

    /// Copies the pixels of `rect`, which must lie inside the image.
    pub fn crop(&self, rect: &PixelRect) -> Option<Image> {
        if rect.is_empty() || !rect.inside(self.width, self.height) {
            return None;
        }
        let (x0, y0) = (rect.x as usize, rect.y as usize);
        let (w, h) = (rect.w as usize, rect.h as usize);
        let mut gray = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            gray.extend_from_slice(&self.gray[y * self.width + x0..y * self.width + x0 + w]);
        }
        let rgb = self.rgb.as_ref().map(|plane| {
            let mut out = Vec::with_capacity(w * h);
            for y in y0..y0 + h {
                out.extend_from_slice(&plane[y * self.width + x0..y * self.width + x0 + w]);
            }
            out
        });
        Some(Image { width: w, height: h, gray, rgb })
    }

    /// Mirror image about the vertical axis.
    pub fn flip_horizontal(&self) -> Image {
        self.remap(self.width, self.height, |x, y| (self.width - 1 - x, y))
    }

    pub fn transpose(&self) -> Image {
        self.remap(self.height, self.width, |x, y| (y, x))
    }

    fn remap(&self, width: usize, height: usize, src: impl Fn(usize, usize) -> (usize, usize)) -> Image {
        let mut gray = Vec::with_capacity(width * height);
        let mut rgb = self.rgb.as_ref().map(|_| Vec::with_capacity(width * height));
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = src(x, y);
                gray.push(self.gray(sx, sy));
                if let (Some(out), Some(c)) = (rgb.as_mut(), self.rgb(sx, sy)) {
                    out.push(c);
                }
            }
        }
        Image { width, height, gray, rgb }
    }

    /// Parses binary PGM (P5) or PPM (P6) with maxval 255.
    pub fn decode_pnm(bytes: &[u8]) -> Result<Image, ImageError> {
        let mut pos = 0usize;
        let mut token = || -> Result<String, ImageError> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::Parse("truncated header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token()?;
        let mut number = |what: &str| -> Result<usize, ImageError> {
            token()?.parse::<usize>().map_err(|_| ImageError::Parse(format!("bad {what}")))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval != 255 {
            return Err(ImageError::Parse(format!("unsupported maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(ImageError::Parse(format!("unsupported magic {other}"))),
        };
        let need = width * height * channels;
        let raster = bytes
            .get(pos..pos + need)
            .ok_or_else(|| ImageError::Parse(format!("raster needs {need} bytes")))?;
        if channels == 1 {
            Image::from_gray(width, height, raster.iter().map(|&b| b as f64 / 255.0).collect())
        } else {
            let rgb = raster
                .chunks_exact(3)
                .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
                .collect();
            Image::from_rgb(width, height, rgb)
        }
    }

    /// Encodes as P6 when color is present, P5 otherwise.
    pub fn encode_pnm(&self) -> Vec<u8> {
        let q = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        match &self.rgb {
            Some(rgb) => {
                let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
                out.extend(rgb.iter().flat_map(|p| p.map(q)));
                out
            }
            None => {
                let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
                out.extend(self.gray.iter().map(|&v| q(v)));
                out
            }
        }
    }

    pub fn read(path: &Path) -> Result<Image, ImageError> {
        let bytes = fs::read(path).map_err(|source| ImageError::Io { path: path.display().to_string(), source })?;
        Image::decode_pnm(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), ImageError> {
        let io = |source| ImageError::Io { path: path.display().to_string(), source };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(&self.encode_pnm()).map_err(io)
    }
}
