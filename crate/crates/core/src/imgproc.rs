//! Classical image processing for scene-text segmentation: grayscale
//! conversion, Gaussian blur, thresholding, binary morphology, connected
//! components, and the character bounding-box chain built from them.

use crate::error::{Error, Result};

/// 8-bit image, row-major, interleaved channels (1 = grayscale, 3 = RGB).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageU8 {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl ImageU8 {
    pub fn new(width: usize, height: usize, channels: usize, fill: u8) -> Result<Self> {
        Self::validate_dims(width, height, channels)?;
        Ok(Self { width, height, channels, pixels: vec![fill; width * height * channels] })
    }

    pub fn from_pixels(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::validate_dims(width, height, channels)?;
        if pixels.len() != width * height * channels {
            return Err(Error::InvalidShape(format!(
                "pixel buffer has {} bytes, expected {}",
                pixels.len(),
                width * height * channels
            )));
        }
        Ok(Self { width, height, channels, pixels })
    }

    fn validate_dims(width: usize, height: usize, channels: usize) -> Result<()> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidShape(format!("empty image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidShape(format!("unsupported channel count {channels}")));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    fn is_binary(&self) -> bool {
        self.channels == 1 && self.pixels.iter().all(|&p| p == 0 || p == 255)
    }
}

/// Integer region of a detected character: top-left corner plus size.
/// Always lies inside the image it was produced from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    /// p > limit -> 255, else 0.
    Binary,
    /// p > limit -> 0, else 255. Makes dark-on-light glyphs white.
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
    /// Erode then dilate: removes small white specks, keeps region size.
    Open,
    /// Dilate then erode: fills small black holes, keeps region size.
    Close,
}

/// Normalized 2-D Gaussian kernel of odd side length.
#[derive(Debug, Clone)]
pub struct Kernel {
    size: usize,
    weights: Vec<f32>,
}

impl Kernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }
}

/// BT.601 luminance: gray = round(0.299 R + 0.587 G + 0.114 B).
/// Grayscale input passes through unchanged.
pub fn to_grayscale(img: &ImageU8) -> ImageU8 {
    if img.channels == 1 {
        return img.clone();
    }
    let mut pixels = Vec::with_capacity(img.width * img.height);
    for px in img.pixels.chunks_exact(3) {
        let y = 0.299 * px[0] as f32 + 0.587 * px[1] as f32 + 0.114 * px[2] as f32;
        pixels.push(y.round().clamp(0.0, 255.0) as u8);
    }
    ImageU8 { width: img.width, height: img.height, channels: 1, pixels }
}

/// Replicates a grayscale image into 3 identical channels; RGB passes through.
pub fn to_rgb(img: &ImageU8) -> ImageU8 {
    if img.channels == 3 {
        return img.clone();
    }
    let mut pixels = Vec::with_capacity(img.width * img.height * 3);
    for &p in &img.pixels {
        pixels.extend_from_slice(&[p, p, p]);
    }
    ImageU8 { width: img.width, height: img.height, channels: 3, pixels }
}

/// Gaussian kernel with sigma tied to the kernel size by the usual
/// convention `sigma = 0.3*((k-1)/2 - 1) + 0.8`.
pub fn gaussian_kernel(k: usize) -> Result<Kernel> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Config(format!("gaussian kernel size must be odd and positive, got {k}")));
    }
    let r = (k / 2) as f64;
    let sigma = 0.3 * (r - 1.0) + 0.8;
    let mut weights = vec![0.0f64; k * k];
    let mut sum = 0.0f64;
    for y in 0..k {
        for x in 0..k {
            let dx = x as f64 - r;
            let dy = y as f64 - r;
            let w = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            weights[y * k + x] = w;
            sum += w;
        }
    }
    let weights = weights.into_iter().map(|w| (w / sum) as f32).collect();
    Ok(Kernel { size: k, weights })
}

/// Direct 2-D convolution with `gaussian_kernel(k)`, border handled by edge
/// replication, each channel filtered independently. Output rounded to the
/// nearest integer and clamped to 0..=255.
pub fn gaussian_blur(img: &ImageU8, k: usize) -> Result<ImageU8> {
    let kernel = gaussian_kernel(k)?;
    let r = (k / 2) as isize;
    let (w, h, c) = (img.width, img.height, img.channels);
    let mut pixels = vec![0u8; w * h * c];
    for y in 0..h as isize {
        for x in 0..w as isize {
            for ch in 0..c {
                let mut acc = 0.0f32;
                for ky in -r..=r {
                    let sy = (y + ky).clamp(0, h as isize - 1) as usize;
                    for kx in -r..=r {
                        let sx = (x + kx).clamp(0, w as isize - 1) as usize;
                        let kw = kernel.weights[((ky + r) * k as isize + (kx + r)) as usize];
                        acc += kw * img.get(sx, sy, ch) as f32;
                    }
                }
                pixels[(y as usize * w + x as usize) * c + ch] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(ImageU8 { width: w, height: h, channels: c, pixels })
}

/// Binary or inverse-binary thresholding of a grayscale image. The
/// comparison is strict: a pixel exactly at the limit counts as "below".
pub fn threshold(img: &ImageU8, limit: u8, mode: ThresholdMode) -> Result<ImageU8> {
    if img.channels != 1 {
        return Err(Error::Precondition("threshold needs a grayscale image".into()));
    }
    let (above, below) = match mode {
        ThresholdMode::Binary => (255u8, 0u8),
        ThresholdMode::Inverse => (0u8, 255u8),
    };
    let pixels = img.pixels.iter().map(|&p| if p > limit { above } else { below }).collect();
    Ok(ImageU8 { width: img.width, height: img.height, channels: 1, pixels })
}

fn neighborhood_extreme(img: &ImageU8, se: usize, erode: bool) -> ImageU8 {
    let r = (se / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    // Out-of-bounds neighbors count as 255 for erosion and 0 for dilation,
    // so a solid region touching the border keeps its shape.
    let oob: u8 = if erode { 255 } else { 0 };
    let mut pixels = vec![0u8; img.width * img.height];
    for y in 0..h {
        for x in 0..w {
            let mut v = oob;
            'win: for ky in -r..=r {
                for kx in -r..=r {
                    let (sx, sy) = (x + kx, y + ky);
                    let p = if sx < 0 || sy < 0 || sx >= w || sy >= h {
                        oob
                    } else {
                        img.get(sx as usize, sy as usize, 0)
                    };
                    if erode && p == 0 {
                        v = 0;
                        break 'win;
                    }
                    if !erode && p == 255 {
                        v = 255;
                        break 'win;
                    }
                }
            }
            pixels[(y * w + x) as usize] = v;
        }
    }
    ImageU8 { width: img.width, height: img.height, channels: 1, pixels }
}

/// Morphological operation with a square all-ones structuring element of odd
/// side `se`. Input must be strictly binary (only 0 and 255).
pub fn morphology(img: &ImageU8, op: MorphOp, se: usize) -> Result<ImageU8> {
    if se == 0 || se % 2 == 0 {
        return Err(Error::Config(format!("structuring element must be odd and positive, got {se}")));
    }
    if !img.is_binary() {
        return Err(Error::Precondition("morphology needs a binary {0,255} image".into()));
    }
    let out = match op {
        MorphOp::Erode => neighborhood_extreme(img, se, true),
        MorphOp::Dilate => neighborhood_extreme(img, se, false),
        MorphOp::Open => {
            let eroded = neighborhood_extreme(img, se, true);
            neighborhood_extreme(&eroded, se, false)
        }
        MorphOp::Close => {
            let dilated = neighborhood_extreme(img, se, false);
            neighborhood_extreme(&dilated, se, true)
        }
    };
    Ok(out)
}

/// Tight bounding boxes of the 8-connected white components, sorted by x
/// then y.
pub fn connected_components(img: &ImageU8) -> Result<Vec<BoundingBox>> {
    if !img.is_binary() {
        return Err(Error::Precondition("connected components needs a binary image".into()));
    }
    let (w, h) = (img.width, img.height);
    let mut visited = vec![false; w * h];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if visited[start] || img.pixels[start] != 255 {
            continue;
        }
        let (mut min_x, mut min_y) = (w, h);
        let (mut max_x, mut max_y) = (0usize, 0usize);
        visited[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i32 + dx;
                    let ny = y as i32 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if !visited[nidx] && img.pixels[nidx] == 255 {
                        visited[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        boxes.push(BoundingBox { x: min_x, y: min_y, w: max_x - min_x + 1, h: max_y - min_y + 1 });
    }
    boxes.sort_by_key(|b| (b.x, b.y));
    Ok(boxes)
}

/// Tunables of the character segmentation chain.
#[derive(Debug, Clone, Copy)]
pub struct SegmentParams {
    pub blur_k: usize,
    pub limit: u8,
    pub mode: ThresholdMode,
    pub se: usize,
    /// Boxes with area below this fraction of the image area are noise.
    pub min_area_frac: f32,
    /// Boxes with either side below this many pixels are noise.
    pub min_dim: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            blur_k: 3,
            limit: 128,
            mode: ThresholdMode::Inverse,
            se: 3,
            min_area_frac: 0.001,
            min_dim: 2,
        }
    }
}

/// The full chain: grayscale, blur, threshold, morphological opening,
/// connected components, then noise filtering. Surviving boxes come back
/// sorted left to right.
pub fn segment_characters(img: &ImageU8, params: &SegmentParams) -> Result<Vec<BoundingBox>> {
    let gray = to_grayscale(img);
    let blurred = gaussian_blur(&gray, params.blur_k)?;
    let binary = threshold(&blurred, params.limit, params.mode)?;
    let opened = morphology(&binary, MorphOp::Open, params.se)?;
    let min_area = (params.min_area_frac * (img.width * img.height) as f32).ceil() as usize;
    let mut boxes: Vec<BoundingBox> = connected_components(&opened)?
        .into_iter()
        .filter(|b| b.area() >= min_area && b.w.min(b.h) >= params.min_dim)
        .collect();
    boxes.sort_by_key(|b| b.x);
    Ok(boxes)
}

/// Sub-image of `bx` expanded by `pad` on each side, clamped to the image.
pub fn crop(img: &ImageU8, bx: &BoundingBox, pad: usize) -> Result<ImageU8> {
    if bx.w == 0 || bx.h == 0 || bx.right() > img.width || bx.bottom() > img.height {
        return Err(Error::Bounds(format!(
            "box {bx:?} outside {}x{} image",
            img.width, img.height
        )));
    }
    let x0 = bx.x.saturating_sub(pad);
    let y0 = bx.y.saturating_sub(pad);
    let x1 = (bx.right() + pad).min(img.width);
    let y1 = (bx.bottom() + pad).min(img.height);
    let (cw, ch) = (x1 - x0, y1 - y0);
    let mut pixels = Vec::with_capacity(cw * ch * img.channels);
    for y in y0..y1 {
        let row_start = (y * img.width + x0) * img.channels;
        pixels.extend_from_slice(&img.pixels[row_start..row_start + cw * img.channels]);
    }
    ImageU8::from_pixels(cw, ch, img.channels, pixels)
}

/// Bilinear resize with half-pixel-center sampling, border clamped. A
/// same-size resize is the identity.
pub fn resize_bilinear(img: &ImageU8, out_w: usize, out_h: usize) -> Result<ImageU8> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Config(format!("resize target {out_w}x{out_h} must be positive")));
    }
    let sx = img.width as f32 / out_w as f32;
    let sy = img.height as f32 / out_h as f32;
    let c = img.channels;
    let mut pixels = vec![0u8; out_w * out_h * c];
    for oy in 0..out_h {
        let fy = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, img.height as f32 - 1.0);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let wy = fy - y0 as f32;
        for ox in 0..out_w {
            let fx = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, img.width as f32 - 1.0);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let wx = fx - x0 as f32;
            for ch in 0..c {
                let p00 = img.get(x0, y0, ch) as f32;
                let p10 = img.get(x1, y0, ch) as f32;
                let p01 = img.get(x0, y1, ch) as f32;
                let p11 = img.get(x1, y1, ch) as f32;
                let top = p00 + (p10 - p00) * wx;
                let bot = p01 + (p11 - p01) * wx;
                let v = top + (bot - top) * wy;
                pixels[(oy * out_w + ox) * c + ch] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageU8::from_pixels(out_w, out_h, c, pixels)
}
