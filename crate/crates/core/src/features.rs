//! Image ingestion and the chromaticity features fed to the trees.
//!
//! Raw camera values are mapped to linear `[0, 1]` with the camera's darkness
//! and saturation levels. Pixels with any channel at or above saturation, and
//! pixels inside caller-supplied rectangles (typically the color checker),
//! are masked out and ignored by every feature.
//!
//! Features, in order: gray-world, brightest color, RGB histogram mode, KDE
//! mode on the `(r, g)` plane, and optionally shades-of-gray. Each contributes
//! an `(f_r, f_g)` pair.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chroma::normalize;
use crate::error::{Error, Result};

/// Black and white points of the sensor, in raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraProfile {
    pub name: String,
    pub darkness_level: f64,
    pub saturation_level: f64,
}

impl CameraProfile {
    pub fn new(name: impl Into<String>, darkness_level: f64, saturation_level: f64) -> Result<Self> {
        let p = Self {
            name: name.into(),
            darkness_level,
            saturation_level,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.darkness_level >= 0.0 && self.darkness_level < self.saturation_level) {
            return Err(Error::InvalidParams(format!(
                "camera `{}`: need 0 <= darkness_level < saturation_level",
                self.name
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        p.validate()?;
        Ok(p)
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

/// Linear RGB image with a usability mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
    mask: Vec<bool>,
}

impl LinearImage {
    /// Builds an image from row-major pixels, all usable.
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        let mask = vec![true; pixels.len()];
        Self::with_mask(width, height, pixels, mask)
    }

    pub fn with_mask(width: usize, height: usize, pixels: Vec<[f64; 3]>, mask: Vec<bool>) -> Result<Self> {
        if pixels.len() != width * height || mask.len() != pixels.len() {
            return Err(Error::Dimension {
                expected: width * height,
                got: pixels.len().min(mask.len()),
            });
        }
        if pixels.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParams("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
            mask,
        })
    }

    /// Converts raw sensor counts (row-major RGB triples).
    pub fn from_raw(width: usize, height: usize, raw: &[[f64; 3]], profile: &CameraProfile, masks: &[Rect]) -> Result<Self> {
        profile.validate()?;
        if raw.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                got: raw.len(),
            });
        }
        let span = profile.saturation_level - profile.darkness_level;
        let mut pixels = Vec::with_capacity(raw.len());
        let mut mask = Vec::with_capacity(raw.len());
        for (i, px) in raw.iter().enumerate() {
            let (x, y) = (i % width, i / width);
            let saturated = px.iter().any(|v| *v >= profile.saturation_level);
            mask.push(!saturated && !masks.iter().any(|r| r.contains(x, y)));
            pixels.push(px.map(|v| ((v - profile.darkness_level) / span).clamp(0.0, 1.0)));
        }
        if !mask.iter().any(|m| *m) {
            return Err(Error::EmptyImage);
        }
        Ok(Self {
            width,
            height,
            pixels,
            mask,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn is_usable(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    /// Unmasked pixels in row-major order.
    pub fn usable(&self) -> impl Iterator<Item = &[f64; 3]> + '_ {
        self.pixels.iter().zip(&self.mask).filter(|(_, m)| **m).map(|(p, _)| p)
    }

    pub fn usable_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Multiplies every pixel by `s`, clamping to `[0, 1]`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            pixels: self.pixels.iter().map(|p| p.map(|v| (v * s).clamp(0.0, 1.0))).collect(),
            ..self.clone()
        }
    }

    fn non_empty(&self) -> Result<()> {
        if self.usable_count() == 0 {
            Err(Error::EmptyImage)
        } else {
            Ok(())
        }
    }
}

/// Reads an 8/16-bit RGB PNG or a binary PPM (P6) and normalizes it.
pub fn load_image(path: impl AsRef<Path>, profile: &CameraProfile, masks: &[Rect]) -> Result<LinearImage> {
    let path = path.as_ref();
    let mut head = [0u8; 8];
    let n = File::open(path)?.read(&mut head)?;
    let (w, h, raw) = if n >= 8 && head == *b"\x89PNG\r\n\x1a\n" {
        decode_png(path)?
    } else if n >= 2 && &head[..2] == b"P6" {
        decode_ppm(path)?
    } else {
        return Err(Error::Image(format!("{}: not a PNG or P6 PPM file", path.display())));
    };
    LinearImage::from_raw(w, h, &raw, profile, masks)
}

type Decoded = (usize, usize, Vec<[f64; 3]>);

fn decode_png(path: &Path) -> Result<Decoded> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info().map_err(|e| Error::Image(e.to_string()))?;
    let info = reader.info();
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::Image(format!("unsupported PNG color type {other:?}"))),
    };
    let wide = match info.bit_depth {
        png::BitDepth::Eight => false,
        png::BitDepth::Sixteen => true,
        other => return Err(Error::Image(format!("unsupported PNG bit depth {other:?}"))),
    };
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Image("image too large".into()))?];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
    let bytes = &buf[..frame.buffer_size()];
    let sample = |i: usize| -> f64 {
        if wide {
            u16::from_be_bytes([bytes[2 * i], bytes[2 * i + 1]]) as f64
        } else {
            bytes[i] as f64
        }
    };
    let raw = (0..w * h)
        .map(|p| [sample(p * channels), sample(p * channels + 1), sample(p * channels + 2)])
        .collect();
    Ok((w, h, raw))
}

fn decode_ppm(path: &Path) -> Result<Decoded> {
    let mut r = BufReader::new(File::open(path)?);
    let mut fields = Vec::new();
    let mut token = Vec::new();
    // Magic, width, height, maxval; '#' starts a comment to end of line.
    while fields.len() < 4 {
        let buf = r.fill_buf()?;
        if buf.is_empty() {
            return Err(Error::Image("truncated PPM header".into()));
        }
        let byte = buf[0];
        r.consume(1);
        if byte == b'#' {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
        } else if byte.is_ascii_whitespace() {
            if !token.is_empty() {
                fields.push(String::from_utf8_lossy(&token).into_owned());
                token.clear();
            }
        } else {
            token.push(byte);
        }
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Image(format!("bad PPM header field `{s}`")));
    if fields[0] != "P6" {
        return Err(Error::Image("only binary P6 PPM is supported".into()));
    }
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    let wide = match maxval {
        255 => false,
        65535 => true,
        other => return Err(Error::Image(format!("unsupported PPM maxval {other}"))),
    };
    let bytes_per = if wide { 2 } else { 1 };
    let mut data = vec![0u8; w * h * 3 * bytes_per];
    r.read_exact(&mut data)?;
    let sample = |i: usize| -> f64 {
        if wide {
            u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as f64
        } else {
            data[i] as f64
        }
    };
    let raw = (0..w * h).map(|p| [sample(3 * p), sample(3 * p + 1), sample(3 * p + 2)]).collect();
    Ok((w, h, raw))
}

fn rg_of(v: [f64; 3]) -> Result<(f64, f64)> {
    let c = normalize(v)?;
    Ok((c.r(), c.g()))
}

/// Chromaticity of the mean unmasked color.
pub fn gray_world(img: &LinearImage) -> Result<(f64, f64)> {
    img.non_empty()?;
    let mut sum = [0.0; 3];
    for p in img.usable() {
        for k in 0..3 {
            sum[k] += p[k];
        }
    }
    let n = img.usable_count() as f64;
    rg_of(sum.map(|s| s / n))
}

/// Chromaticity of the unmasked pixel with the largest `R + G + B`; the first
/// in row-major order wins ties.
pub fn brightest_color(img: &LinearImage) -> Result<(f64, f64)> {
    img.non_empty()?;
    let mut best: Option<&[f64; 3]> = None;
    for p in img.usable() {
        if best.is_none_or(|b| p.iter().sum::<f64>() > b.iter().sum::<f64>()) {
            best = Some(p);
        }
    }
    rg_of(*best.expect("image is non-empty"))
}

/// Bin of `v` among `bins` equal-width bins over `[0, 1]`.
fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Mean color of the most populated cell of a `bins³` RGB histogram (lowest
/// linear index on ties), as a chromaticity.
pub fn histogram_mode(img: &LinearImage, bins: usize) -> Result<(f64, f64)> {
    img.non_empty()?;
    if bins == 0 {
        return Err(Error::InvalidParams("histogram needs at least one bin".into()));
    }
    let index = |p: &[f64; 3]| (bin_of(p[0], bins) * bins + bin_of(p[1], bins)) * bins + bin_of(p[2], bins);
    let mut counts = vec![0u32; bins * bins * bins];
    for p in img.usable() {
        counts[index(p)] += 1;
    }
    let mut mode = 0;
    for (i, c) in counts.iter().enumerate() {
        if *c > counts[mode] {
            mode = i;
        }
    }
    let mut sum = [0.0; 3];
    for p in img.usable().filter(|p| index(p) == mode) {
        for k in 0..3 {
            sum[k] += p[k];
        }
    }
    let n = counts[mode] as f64;
    rg_of(sum.map(|s| s / n))
}

/// Gaussian weights out to where they fall below 1e-12 of the peak.
fn gaussian_kernel(sigma_cells: f64) -> Vec<f64> {
    if sigma_cells <= 0.0 {
        return vec![1.0];
    }
    let radius = (sigma_cells * (2.0 * 1e12f64.ln()).sqrt()).ceil() as usize;
    (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma_cells * sigma_cells)).exp()
        })
        .collect()
}

/// Smoothed `(r, g)` histogram on a `grid × grid` lattice over `[0, 1]²`,
/// row index `r`, column index `g`. Black pixels have no chromaticity and
/// are skipped.
pub fn kde_density(img: &LinearImage, grid: usize, bandwidth: f64) -> Result<Vec<f64>> {
    img.non_empty()?;
    if grid == 0 || !(bandwidth >= 0.0) {
        return Err(Error::InvalidParams("KDE needs grid > 0 and bandwidth >= 0".into()));
    }
    let mut hist = vec![0.0; grid * grid];
    let mut any = false;
    for p in img.usable() {
        if let Ok((r, g)) = rg_of(*p) {
            hist[bin_of(r, grid) * grid + bin_of(g, grid)] += 1.0;
            any = true;
        }
    }
    if !any {
        return Err(Error::EmptyImage);
    }
    // Separable convolution, zero padding outside the unit square.
    let kernel = gaussian_kernel(bandwidth * grid as f64);
    let radius = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; grid * grid];
    for i in 0..grid {
        for j in 0..grid {
            let v = hist[i * grid + j];
            if v == 0.0 {
                continue;
            }
            for (k, w) in kernel.iter().enumerate() {
                let jj = j as isize + k as isize - radius;
                if (0..grid as isize).contains(&jj) {
                    tmp[i * grid + jj as usize] += v * w;
                }
            }
        }
    }
    let mut out = vec![0.0; grid * grid];
    for i in 0..grid {
        for j in 0..grid {
            let v = tmp[i * grid + j];
            if v == 0.0 {
                continue;
            }
            for (k, w) in kernel.iter().enumerate() {
                let ii = i as isize + k as isize - radius;
                if (0..grid as isize).contains(&ii) {
                    out[ii as usize * grid + j] += v * w;
                }
            }
        }
    }
    Ok(out)
}

/// Cell center of the KDE maximum (lowest linear index on ties).
pub fn kde_mode(img: &LinearImage, grid: usize, bandwidth: f64) -> Result<(f64, f64)> {
    let density = kde_density(img, grid, bandwidth)?;
    let mut best = 0;
    for (i, d) in density.iter().enumerate() {
        if *d > density[best] {
            best = i;
        }
    }
    let center = |k: usize| (k as f64 + 0.5) / grid as f64;
    Ok((center(best / grid), center(best % grid)))
}

/// Chromaticity of the per-channel `l_p` means `(mean vᵖ)^(1/p)`.
pub fn shades_of_gray(img: &LinearImage, p: f64) -> Result<(f64, f64)> {
    img.non_empty()?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParams("shades-of-gray needs a finite p >= 1".into()));
    }
    let mut sum = [0.0; 3];
    for px in img.usable() {
        for k in 0..3 {
            sum[k] += px[k].powf(p);
        }
    }
    let n = img.usable_count() as f64;
    rg_of(sum.map(|s| (s / n).powf(1.0 / p)))
}

/// Settings of the feature extractors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub histogram_bins: usize,
    pub kde_grid: usize,
    pub kde_bandwidth: f64,
    pub sg_p: f64,
    pub include_sg: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            histogram_bins: 64,
            kde_grid: 256,
            kde_bandwidth: 0.01,
            sg_p: 5.0,
            include_sg: false,
        }
    }
}

impl FeatureConfig {
    /// One-line description for file provenance headers.
    pub fn describe(&self) -> String {
        format!(
            "histogram_bins={} kde_grid={} kde_bandwidth={} sg_p={} include_sg={}",
            self.histogram_bins, self.kde_grid, self.kde_bandwidth, self.sg_p, self.include_sg
        )
    }
}

/// `(f_r¹, f_g¹, …, f_r⁴, f_g⁴[, f_r^sg, f_g^sg])`.
pub fn extract_features(img: &LinearImage, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let mut pairs = vec![
        gray_world(img)?,
        brightest_color(img)?,
        histogram_mode(img, cfg.histogram_bins)?,
        kde_mode(img, cfg.kde_grid, cfg.kde_bandwidth)?,
    ];
    if cfg.include_sg {
        pairs.push(shades_of_gray(img, cfg.sg_p)?);
    }
    Ok(pairs.into_iter().flat_map(|(r, g)| [r, g]).collect())
}
