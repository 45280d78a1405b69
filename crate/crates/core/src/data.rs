//! Image I/O, dataset layout, patch sampling and synthetic vessel images.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::components::label_components;
use crate::error::{Error, Result};
use crate::grid_graph::{Connectivity, GridShape};

/// A single-channel image with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub shape: GridShape,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(shape: GridShape, pixels: Vec<f64>) -> Result<Self> {
        crate::error::check_len(shape.len(), pixels.len())?;
        Ok(Self { shape, pixels })
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    fn from_bytes(shape: GridShape, bytes: &[u8]) -> Self {
        let pixels = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        Self { shape, pixels }
    }
}

/// Reads an 8-bit grayscale PGM (P5) or an 8-bit PNG. Colour PNGs contribute
/// their green channel.
pub fn load_grayscale(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        parse_pgm(&bytes).map_err(|m| Error::format(path, m))
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes).map_err(|m| Error::format(path, m))
    } else {
        Err(Error::format(path, "neither a binary PGM (P5) nor a PNG file"))
    }
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format!("corrupt PGM header at byte {start}"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| "PGM header value out of range".to_string())?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported PGM maxval {maxval} (only 8-bit, maxval 255)"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("corrupt PGM header: missing separator before pixel data".into());
    }
    pos += 1;
    let shape = GridShape::new(height, width).map_err(|e| e.to_string())?;
    let data = &bytes[pos..];
    if data.len() != shape.len() {
        return Err(format!(
            "PGM pixel data has {} bytes, expected {}",
            data.len(),
            shape.len()
        ));
    }
    Ok(GrayImage::from_bytes(shape, data))
}

fn decode_png(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    if reader.info().bit_depth == png::BitDepth::Sixteen {
        return Err("16-bit PNG is not supported (only 8-bit)".into());
    }
    let size = reader.output_buffer_size().ok_or("PNG too large")?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let shape = GridShape::new(frame.height as usize, frame.width as usize).map_err(|e| e.to_string())?;
    let channel = match frame.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => 0,
        png::ColorType::Rgb | png::ColorType::Rgba => 1,
        other => return Err(format!("unsupported PNG colour type {other:?}")),
    };
    let stride = frame.color_type.samples();
    let gray: Vec<u8> = buf[..frame.buffer_size()]
        .chunks_exact(frame.line_size)
        .flat_map(|row| row.chunks_exact(stride).take(shape.cols()).map(|px| px[channel]))
        .collect();
    Ok(GrayImage::from_bytes(shape, &gray))
}

pub fn save_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", image.shape.cols(), image.shape.rows()).into_bytes();
    out.extend(image.to_bytes());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn save_png(path: &Path, image: &GrayImage) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        image.shape.cols() as u32,
        image.shape.rows() as u32,
    );
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .write_image_data(&image.to_bytes())
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer.finish().map_err(|e| Error::format(path, e.to_string()))
}

/// An input image with its binary vessel mask and optional field of view.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub name: String,
    pub shape: GridShape,
    pub image: Vec<f64>,
    /// 0.0 or 1.0 per pixel.
    pub mask: Vec<f64>,
    pub fov: Option<Vec<bool>>,
}

impl ImageSample {
    pub fn new(
        name: impl Into<String>,
        shape: GridShape,
        image: Vec<f64>,
        mask: Vec<f64>,
        fov: Option<Vec<bool>>,
    ) -> Result<Self> {
        crate::error::check_len(shape.len(), image.len())?;
        crate::error::check_len(shape.len(), mask.len())?;
        if let Some(f) = &fov {
            crate::error::check_len(shape.len(), f.len())?;
        }
        if image.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("image values must lie in [0, 1]".into()));
        }
        let mask = binarize(&mask);
        Ok(Self {
            name: name.into(),
            shape,
            image,
            mask,
            fov,
        })
    }

    pub fn mask_bool(&self) -> Vec<bool> {
        self.mask.iter().map(|&v| v >= 0.5).collect()
    }
}

fn binarize(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect()
}

/// Train and test samples of a dataset directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<ImageSample>,
    pub test: Vec<ImageSample>,
}

/// Stem lists of a `manifest.txt`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Manifest {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut manifest = Manifest::default();
        let mut section: Option<&mut Vec<String>> = None;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "train:" => section = Some(&mut manifest.train),
                "test:" => section = Some(&mut manifest.test),
                stem => match section.as_deref_mut() {
                    Some(list) => list.push(stem.to_string()),
                    None => return Err(format!("line {}: stem before any section header", no + 1)),
                },
            }
        }
        Ok(manifest)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("train:\n");
        for s in &self.train {
            out.push_str(s);
            out.push('\n');
        }
        out.push_str("test:\n");
        for s in &self.test {
            out.push_str(s);
            out.push('\n');
        }
        out
    }
}

/// A directory with `images/`, `masks/`, optional `fov/` and `manifest.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub const MANIFEST: &'static str = "manifest.txt";

    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.root.join(Self::MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Manifest::parse(&text).map_err(|m| Error::format(&path, m))
    }

    fn find(&self, dir: &str, stem: &str) -> Option<PathBuf> {
        ["pgm", "png"]
            .iter()
            .map(|ext| self.root.join(dir).join(format!("{stem}.{ext}")))
            .find(|p| p.is_file())
    }

    pub fn load_sample(&self, stem: &str) -> Result<ImageSample> {
        let missing = |dir: &str| {
            Error::format(
                self.root.join(dir).join(stem),
                "no .pgm or .png file for this stem",
            )
        };
        let image = load_grayscale(&self.find("images", stem).ok_or_else(|| missing("images"))?)?;
        let mask = load_grayscale(&self.find("masks", stem).ok_or_else(|| missing("masks"))?)?;
        let fov = self.find("fov", stem).map(|p| load_grayscale(&p)).transpose()?;
        for other in std::iter::once(&mask).chain(fov.as_ref()) {
            if other.shape != image.shape {
                return Err(Error::ShapeMismatch {
                    expected: (image.shape.rows(), image.shape.cols()),
                    actual: (other.shape.rows(), other.shape.cols()),
                });
            }
        }
        ImageSample::new(
            stem,
            image.shape,
            image.pixels,
            mask.pixels,
            fov.map(|f| f.pixels.iter().map(|&v| v >= 0.5).collect()),
        )
    }

    pub fn load(&self) -> Result<Dataset> {
        let manifest = self.manifest()?;
        let load_all = |stems: &[String]| stems.iter().map(|s| self.load_sample(s)).collect::<Result<Vec<_>>>();
        Ok(Dataset {
            train: load_all(&manifest.train)?,
            test: load_all(&manifest.test)?,
        })
    }

    /// Writes every sample as PGM files plus the manifest.
    pub fn write(&self, dataset: &Dataset) -> Result<()> {
        let has_fov = dataset.train.iter().chain(&dataset.test).any(|s| s.fov.is_some());
        let mut dirs = vec!["images", "masks"];
        if has_fov {
            dirs.push("fov");
        }
        for d in dirs {
            let p = self.root.join(d);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        for s in dataset.train.iter().chain(&dataset.test) {
            let file = format!("{}.pgm", s.name);
            save_pgm(&self.root.join("images").join(&file), &GrayImage::new(s.shape, s.image.clone())?)?;
            save_pgm(&self.root.join("masks").join(&file), &GrayImage::new(s.shape, s.mask.clone())?)?;
            if let Some(fov) = &s.fov {
                let px = fov.iter().map(|&b| b as u8 as f64).collect();
                save_pgm(&self.root.join("fov").join(&file), &GrayImage::new(s.shape, px)?)?;
            }
        }
        let manifest = Manifest {
            train: dataset.train.iter().map(|s| s.name.clone()).collect(),
            test: dataset.test.iter().map(|s| s.name.clone()).collect(),
        };
        let path = self.root.join(Self::MANIFEST);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(manifest.render().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))
    }
}

/// Square patch sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub size: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self {
            size: 48,
            count: 4750,
            seed: 0,
        }
    }
}

/// An image patch and the matching mask patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub image: Vec<f64>,
    pub mask: Vec<f64>,
}

/// Top-left corners drawn uniformly, with replacement, among the positions
/// whose patch center lies inside `fov` (every position when `fov` is `None`).
pub fn patch_corners(shape: GridShape, fov: Option<&[bool]>, spec: &PatchSpec) -> Result<Vec<(usize, usize)>> {
    let size = spec.size;
    if size == 0 || size > shape.rows() || size > shape.cols() {
        return Err(Error::InvalidInput(format!(
            "patch size {size} does not fit a {}x{} image",
            shape.rows(),
            shape.cols()
        )));
    }
    let (nr, nc) = (shape.rows() - size + 1, shape.cols() - size + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match fov {
        None => Ok((0..spec.count)
            .map(|_| (rng.random_range(0..nr), rng.random_range(0..nc)))
            .collect()),
        Some(fov) => {
            crate::error::check_len(shape.len(), fov.len())?;
            let allowed: Vec<(usize, usize)> = (0..nr)
                .flat_map(|r| (0..nc).map(move |c| (r, c)))
                .filter(|&(r, c)| fov[shape.index(r + size / 2, c + size / 2)])
                .collect();
            if allowed.is_empty() {
                return Err(Error::InvalidInput("field of view excludes every patch center".into()));
            }
            Ok((0..spec.count)
                .map(|_| allowed[rng.random_range(0..allowed.len())])
                .collect())
        }
    }
}

/// Copies the `size`x`size` window at `(r, c)` out of a row-major field.
pub fn crop<T: Copy>(field: &[T], shape: GridShape, r: usize, c: usize, size: usize) -> Vec<T> {
    (r..r + size)
        .flat_map(|i| field[shape.index(i, c)..shape.index(i, c) + size].iter().copied())
        .collect()
}

pub fn sample_patches(sample: &ImageSample, spec: &PatchSpec) -> Result<Vec<Patch>> {
    let corners = patch_corners(sample.shape, sample.fov.as_deref(), spec)?;
    Ok(corners
        .into_iter()
        .map(|(r, c)| Patch {
            image: crop(&sample.image, sample.shape, r, c, spec.size),
            mask: crop(&sample.mask, sample.shape, r, c, spec.size),
        })
        .collect())
}

pub const SYNTH_MIN_SIDE: usize = 64;
const SYNTH_ATTEMPTS: usize = 256;

fn stroke(mask: &mut [bool], shape: GridShape, y: f64, x: f64, width: usize) {
    let radius = width as f64 / 2.0;
    let reach = radius.ceil() as isize;
    let (cy, cx) = (y.round() as isize, x.round() as isize);
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let (r, c) = (cy + dy, cx + dx);
            if r < 0 || c < 0 || r >= shape.rows() as isize || c >= shape.cols() as isize {
                continue;
            }
            let d2 = (r as f64 - y).powi(2) + (c as f64 - x).powi(2);
            if (dy == 0 && dx == 0) || d2 <= radius * radius {
                mask[shape.index(r as usize, c as usize)] = true;
            }
        }
    }
}

struct Walker {
    y: f64,
    x: f64,
    heading: f64,
    width: usize,
    steps: usize,
}

fn draw_vessel(mask: &mut [bool], shape: GridShape, rng: &mut ChaCha8Rng, first: Walker) {
    let turn = Normal::new(0.0, 0.12).unwrap();
    let mut pending = vec![(first, 2usize)];
    while let Some((mut w, branches_left)) = pending.pop() {
        let mut branches = branches_left;
        let mut curvature = 0.0f64;
        for _ in 0..w.steps {
            stroke(mask, shape, w.y, w.x, w.width);
            curvature = 0.8 * curvature + turn.sample(rng);
            w.heading += curvature;
            w.y += 0.5 * w.heading.sin();
            w.x += 0.5 * w.heading.cos();
            if w.y < -1.0 || w.x < -1.0 || w.y > shape.rows() as f64 || w.x > shape.cols() as f64 {
                break;
            }
            if branches > 0 && rng.random_bool(0.01) {
                branches -= 1;
                let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let child = Walker {
                    y: w.y,
                    x: w.x,
                    heading: w.heading + side * rng.random_range(0.5..1.1),
                    width: w.width.saturating_sub(1).max(1),
                    steps: w.steps / 2,
                };
                pending.push((child, 0));
            }
        }
    }
}

fn box_blur(field: &[f64], shape: GridShape) -> Vec<f64> {
    let (rows, cols) = (shape.rows() as isize, shape.cols() as isize);
    let at = |r: isize, c: isize| field[shape.index(r.clamp(0, rows - 1) as usize, c.clamp(0, cols - 1) as usize)];
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| {
            let mut s = 0.0;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    s += at(r + dr, c + dc);
                }
            }
            s / 9.0
        })
        .collect()
}

fn synth_mask(shape: GridShape, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut mask = vec![false; shape.len()];
    let (h, w) = (shape.rows() as f64, shape.cols() as f64);
    let vessels = rng.random_range(2..=6);
    for _ in 0..vessels {
        // enter from a random border side, heading roughly inward
        let side = rng.random_range(0..4);
        let t: f64 = rng.random();
        let (y, x, base) = match side {
            0 => (0.0, t * w, std::f64::consts::FRAC_PI_2),
            1 => (h - 1.0, t * w, -std::f64::consts::FRAC_PI_2),
            2 => (t * h, 0.0, 0.0),
            _ => (t * h, w - 1.0, std::f64::consts::PI),
        };
        let walker = Walker {
            y,
            x,
            heading: base + rng.random_range(-0.6..0.6),
            width: rng.random_range(1..=3),
            steps: 3 * (shape.rows() + shape.cols()),
        };
        draw_vessel(&mut mask, shape, rng, walker);
    }
    mask
}

fn acceptable(mask: &[bool], shape: GridShape) -> bool {
    let fg = mask.iter().filter(|&&b| b).count() as f64 / shape.len() as f64;
    if !(0.02..=0.25).contains(&fg) {
        return false;
    }
    label_components(mask, shape, Connectivity::N8)
        .map(|l| l.sizes().iter().any(|&s| s >= 20))
        .unwrap_or(false)
}

/// Generates a vessel-like image and its mask. Masks outside the accepted
/// foreground range are redrawn from the same stream.
pub fn synth_vessels(seed: u64, shape: GridShape) -> Result<ImageSample> {
    if shape.rows() < SYNTH_MIN_SIDE || shape.cols() < SYNTH_MIN_SIDE {
        return Err(Error::InvalidInput(format!(
            "synthetic images need at least {SYNTH_MIN_SIDE}x{SYNTH_MIN_SIDE} pixels, got {}x{}",
            shape.rows(),
            shape.cols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = (0..SYNTH_ATTEMPTS)
        .map(|_| synth_mask(shape, &mut rng))
        .find(|m| acceptable(m, shape))
        .ok_or_else(|| Error::InvalidInput(format!("no acceptable synthetic mask for seed {seed}")))?;

    let mask_f: Vec<f64> = mask.iter().map(|&b| b as u8 as f64).collect();
    let blurred = box_blur(&box_blur(&mask_f, shape), shape);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let (gy, gx) = (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
    let image = blurred
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let (r, c) = shape.coords(i);
            let u = r as f64 / shape.rows() as f64 - 0.5;
            let v = c as f64 / shape.cols() as f64 - 0.5;
            let background = 0.35 + gy * u + gx * v;
            (background + 0.45 * b + noise.sample(&mut rng)).clamp(0.0, 1.0)
        })
        .collect();
    ImageSample::new(format!("synth_{seed}"), shape, image, mask_f, None)
}

/// `n` synthetic samples named `synth_000`, ...; the last `max(1, n / 4)` form
/// the test split.
pub fn synth_dataset(n: usize, seed: u64, shape: GridShape) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidInput("a synthetic dataset needs at least 2 images".into()));
    }
    let mut samples = (0..n)
        .map(|i| {
            let image_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let mut s = synth_vessels(image_seed, shape)?;
            s.name = format!("synth_{i:03}");
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let test = samples.split_off(n - (n / 4).max(1));
    Ok(Dataset { train: samples, test })
}
