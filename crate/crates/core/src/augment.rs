//! Seeded training-time image transforms and the deterministic evaluation
//! preprocessing (resize + normalize).
//!
//! A pipeline owns its rng and applies a fixed step order: rotation,
//! scale-crop, effect (blur / grayscale), resize, normalize. Every `apply`
//! consumes exactly six draws whether or not a step is active, so one
//! config change never shifts the random stream of the others.

use crate::error::{Error, Result};
use crate::imgproc::{self, BoundingBox, ImageU8};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Rotation about the image center by `degrees` (counterclockwise),
/// inverse-mapped with bilinear interpolation; samples falling outside the
/// source are filled with 0. Dimensions are unchanged, and 0 degrees is a
/// bitwise identity.
pub fn rotate(img: &ImageU8, degrees: f32) -> ImageU8 {
    if degrees == 0.0 {
        return img.clone();
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let (cx, cy) = ((w as f32 - 1.0) / 2.0, (h as f32 - 1.0) / 2.0);
    let rad = degrees.to_radians();
    let (sin, cos) = rad.sin_cos();
    let mut pixels = vec![0u8; w * h * c];
    for y in 0..h {
        let dy = y as f32 - cy;
        for x in 0..w {
            let dx = x as f32 - cx;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let (fx, fy) = (sx - x0, sy - y0);
            for ch in 0..c {
                let sample = |ix: f32, iy: f32| -> f32 {
                    if ix < 0.0 || iy < 0.0 || ix >= w as f32 || iy >= h as f32 {
                        0.0
                    } else {
                        img.get(ix as usize, iy as usize, ch) as f32
                    }
                };
                let p00 = sample(x0, y0);
                let p10 = sample(x0 + 1.0, y0);
                let p01 = sample(x0, y0 + 1.0);
                let p11 = sample(x0 + 1.0, y0 + 1.0);
                let top = p00 + (p10 - p00) * fx;
                let bot = p01 + (p11 - p01) * fx;
                let v = top + (bot - top) * fy;
                pixels[(y * w + x) * c + ch] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageU8::from_pixels(w, h, c, pixels).expect("same dims")
}

/// Rotation by an angle drawn uniformly from `[-max_degrees, max_degrees]`.
pub fn random_rotation(max_degrees: f32, img: &ImageU8, rng: &mut Rng) -> Result<ImageU8> {
    if max_degrees < 0.0 || !max_degrees.is_finite() {
        return Err(Error::InvalidRange(format!("rotation bound {max_degrees}")));
    }
    let theta = rng.uniform(-max_degrees, max_degrees)?;
    Ok(rotate(img, theta))
}

/// Crops a window whose sides are a uniformly drawn fraction `s` of the
/// image (position uniform too), then resizes the crop to `target` square.
pub fn random_scale_crop(
    range: (f32, f32),
    img: &ImageU8,
    target: usize,
    rng: &mut Rng,
) -> Result<ImageU8> {
    let (lo, hi) = range;
    if !(0.0 < lo && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidRange(format!("scale range [{lo}, {hi}]")));
    }
    if target == 0 {
        return Err(Error::Config("crop target size must be positive".into()));
    }
    let s = rng.uniform(lo, hi)?;
    let ch = ((s * img.height() as f32).round() as usize).clamp(1, img.height());
    let cw = ((s * img.width() as f32).round() as usize).clamp(1, img.width());
    let max_y = img.height() - ch;
    let max_x = img.width() - cw;
    let uy = rng.uniform(0.0, 1.0)?;
    let ux = rng.uniform(0.0, 1.0)?;
    let oy = ((uy * (max_y + 1) as f32).floor() as usize).min(max_y);
    let ox = ((ux * (max_x + 1) as f32).floor() as usize).min(max_x);
    let window = imgproc::crop(img, &BoundingBox { x: ox, y: oy, w: cw, h: ch }, 0)?;
    imgproc::resize_bilinear(&window, target, target)
}

/// With probability `blur_prob` applies a Gaussian blur of size `blur_k`;
/// with probability `grayscale_prob` collapses a color image to luminance
/// replicated back across its 3 channels. Draws are independent, blur
/// first.
pub fn random_effect(
    blur_prob: f32,
    grayscale_prob: f32,
    blur_k: usize,
    img: &ImageU8,
    rng: &mut Rng,
) -> Result<ImageU8> {
    for p in [blur_prob, grayscale_prob] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidRange(format!("probability {p}")));
        }
    }
    let u_blur = rng.uniform(0.0, 1.0)?;
    let u_gray = rng.uniform(0.0, 1.0)?;
    let mut out = if u_blur < blur_prob { imgproc::gaussian_blur(img, blur_k)? } else { img.clone() };
    if u_gray < grayscale_prob && out.channels() == 3 {
        out = imgproc::to_rgb(&imgproc::to_grayscale(&out));
    }
    Ok(out)
}

/// Pixel p of channel c becomes `(p/255 - mean[c]) / std[c]` as f32, laid
/// out channel-major `[C,H,W]`.
pub fn to_tensor_normalize(img: &ImageU8, mean: &[f32], std: &[f32]) -> Result<Tensor> {
    let c = img.channels();
    if mean.len() != c || std.len() != c {
        return Err(Error::Config(format!(
            "normalization needs {c} mean/std values, got {}/{}",
            mean.len(),
            std.len()
        )));
    }
    if std.iter().any(|&s| s <= 0.0) {
        return Err(Error::Config("normalization std must be positive".into()));
    }
    let (w, h) = (img.width(), img.height());
    let mut data = vec![0.0f32; c * h * w];
    for ch in 0..c {
        let plane = &mut data[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] = (img.get(x, y, ch) as f32 / 255.0 - mean[ch]) / std[ch];
            }
        }
    }
    Tensor::from_vec(&[c, h, w], data)
}

/// Everything but the seed; the default is the identity augmentation
/// (resize + normalize only) at 128x128 grayscale.
#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub rotation_degrees: f32,
    pub scale_lo: f32,
    pub scale_hi: f32,
    pub blur_prob: f32,
    pub grayscale_prob: f32,
    pub blur_k: usize,
    pub image_size: usize,
    pub channels: usize,
    pub norm_mean: f32,
    pub norm_std: f32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_degrees: 0.0,
            scale_lo: 1.0,
            scale_hi: 1.0,
            blur_prob: 0.0,
            grayscale_prob: 0.0,
            blur_k: 3,
            image_size: 128,
            channels: 1,
            norm_mean: 0.5,
            norm_std: 0.5,
        }
    }
}

/// Composable transform chain with its own random stream.
#[derive(Debug, Clone)]
pub struct AugmentPipeline {
    rotation_degrees: f32,
    scale: (f32, f32),
    blur_prob: f32,
    grayscale_prob: f32,
    blur_k: usize,
    image_size: usize,
    channels: usize,
    norm_mean: Vec<f32>,
    norm_std: Vec<f32>,
    rng: Rng,
}

impl AugmentPipeline {
    pub fn new(cfg: &AugmentConfig, seed: u64) -> Result<Self> {
        if cfg.rotation_degrees < 0.0 || !cfg.rotation_degrees.is_finite() {
            return Err(Error::Config(format!("rotation degrees {}", cfg.rotation_degrees)));
        }
        if !(0.0 < cfg.scale_lo && cfg.scale_lo <= cfg.scale_hi && cfg.scale_hi <= 1.0) {
            return Err(Error::Config(format!("scale range [{}, {}]", cfg.scale_lo, cfg.scale_hi)));
        }
        for p in [cfg.blur_prob, cfg.grayscale_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {p} outside [0,1]")));
            }
        }
        if cfg.blur_k % 2 == 0 {
            return Err(Error::Config(format!("blur kernel {} must be odd", cfg.blur_k)));
        }
        if cfg.image_size == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        if cfg.channels != 1 && cfg.channels != 3 {
            return Err(Error::Config(format!("channels must be 1 or 3, got {}", cfg.channels)));
        }
        if cfg.norm_std <= 0.0 {
            return Err(Error::Config("normalization std must be positive".into()));
        }
        Ok(Self {
            rotation_degrees: cfg.rotation_degrees,
            scale: (cfg.scale_lo, cfg.scale_hi),
            blur_prob: cfg.blur_prob,
            grayscale_prob: cfg.grayscale_prob,
            blur_k: cfg.blur_k,
            image_size: cfg.image_size,
            channels: cfg.channels,
            norm_mean: vec![cfg.norm_mean; cfg.channels],
            norm_std: vec![cfg.norm_std; cfg.channels],
            rng: Rng::new(seed),
        })
    }

    /// The deterministic evaluation pipeline: channel conversion, resize,
    /// normalize. No random step is active.
    pub fn evaluation(image_size: usize, channels: usize, mean: f32, std: f32) -> Result<Self> {
        Self::new(
            &AugmentConfig {
                image_size,
                channels,
                norm_mean: mean,
                norm_std: std,
                ..AugmentConfig::default()
            },
            0,
        )
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = Rng::new(seed);
    }

    /// Runs the full chain on one image and returns the normalized
    /// `[C,S,S]` tensor.
    pub fn apply(&mut self, img: &ImageU8) -> Result<Tensor> {
        let img = if img.channels() == self.channels {
            img.clone()
        } else if self.channels == 1 {
            imgproc::to_grayscale(img)
        } else {
            imgproc::to_rgb(img)
        };
        let rotated = {
            let d = self.rotation_degrees;
            let theta = self.rng.uniform(-d, d)?;
            rotate(&img, theta)
        };
        let cropped = random_scale_crop(self.scale, &rotated, self.image_size, &mut self.rng)?;
        let effected =
            random_effect(self.blur_prob, self.grayscale_prob, self.blur_k, &cropped, &mut self.rng)?;
        let sized = if effected.width() == self.image_size && effected.height() == self.image_size {
            effected
        } else {
            imgproc::resize_bilinear(&effected, self.image_size, self.image_size)?
        };
        to_tensor_normalize(&sized, &self.norm_mean, &self.norm_std)
    }
}
