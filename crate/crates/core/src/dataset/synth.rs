//! Deterministic synthetic data: single-character training images rendered
//! from the embedded font, and multi-character word scenes with exact
//! ground-truth boxes.

use super::font::{GlyphFont, GLYPH_COLS, GLYPH_ROWS};
use super::{Dataset, Sample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::imgproc::{BoundingBox, ImageU8};
use crate::rng::{derive_seed, Rng};

/// Render-time randomness for `synth_glyphs`. All draws come from the
/// dataset seed, so the same seed reproduces the same images byte for byte.
#[derive(Debug, Clone, Copy)]
pub struct GlyphJitter {
    /// Glyph placement offset, uniform in `[-offset_px, offset_px]` per axis.
    pub offset_px: usize,
    /// Base foreground (ink) gray level.
    pub fg: u8,
    /// Base background gray level.
    pub bg: u8,
    /// Gray levels vary uniformly by at most this much around the bases.
    pub level_jitter: u8,
}

impl Default for GlyphJitter {
    fn default() -> Self {
        // dark ink on a light background, like a cropped scene character
        Self { offset_px: 2, fg: 30, bg: 230, level_jitter: 20 }
    }
}

impl GlyphJitter {
    pub fn none() -> Self {
        Self { offset_px: 0, fg: 30, bg: 230, level_jitter: 0 }
    }
}

/// Stamps one glyph, stretched with nearest-neighbor sampling to a
/// `box_w` x `box_h` cell whose top-left corner is (x0, y0). Pixels outside
/// the image are dropped. Returns the tight box of the inked pixels, if any.
fn stamp_glyph(
    img: &mut ImageU8,
    font: &GlyphFont,
    class_id: usize,
    x0: isize,
    y0: isize,
    box_w: usize,
    box_h: usize,
    fg: u8,
) -> Option<BoundingBox> {
    let (mut min_x, mut min_y) = (usize::MAX, usize::MAX);
    let (mut max_x, mut max_y) = (0usize, 0usize);
    for dy in 0..box_h {
        let row = dy * GLYPH_ROWS / box_h;
        for dx in 0..box_w {
            let col = dx * GLYPH_COLS / box_w;
            if !font.ink(class_id, row, col) {
                continue;
            }
            let (x, y) = (x0 + dx as isize, y0 + dy as isize);
            if x < 0 || y < 0 || x >= img.width() as isize || y >= img.height() as isize {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            img.set(x, y, 0, fg);
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
    }
    (min_x != usize::MAX).then(|| BoundingBox {
        x: min_x,
        y: min_y,
        w: max_x - min_x + 1,
        h: max_y - min_y + 1,
    })
}

/// One grayscale character image: the glyph stretched to fill the frame
/// minus a 1/8 margin, at the given placement offset and gray levels.
pub fn render_glyph(
    font: &GlyphFont,
    class_id: usize,
    image_size: usize,
    dx: isize,
    dy: isize,
    fg: u8,
    bg: u8,
) -> Result<ImageU8> {
    let mut img = ImageU8::new(image_size, image_size, 1, bg)?;
    let margin = image_size / 8;
    let cell = image_size - 2 * margin;
    stamp_glyph(&mut img, font, class_id, margin as isize + dx, margin as isize + dy, cell, cell, fg);
    Ok(img)
}

/// Labeled single-character dataset: `n_per_class` jittered renderings of
/// every class, stratified-split with the same seed.
pub fn synth_glyphs(
    font: &GlyphFont,
    n_per_class: usize,
    image_size: usize,
    jitter: GlyphJitter,
    seed: u64,
) -> Result<Dataset> {
    if image_size < 16 {
        return Err(Error::Config(format!("synthetic image size {image_size} below minimum 16")));
    }
    if n_per_class == 0 {
        return Err(Error::EmptyDataset("n_per_class must be at least 1".into()));
    }
    let mut rng = Rng::new(derive_seed(seed, 0x9f));
    let off = jitter.offset_px as f32;
    let lvl = jitter.level_jitter as f32;
    let mut samples = Vec::with_capacity(NUM_CLASSES * n_per_class);
    for class_id in 0..NUM_CLASSES {
        for i in 0..n_per_class {
            let dx = rng.uniform(-off, off + 1.0)?.floor() as isize;
            let dy = rng.uniform(-off, off + 1.0)?.floor() as isize;
            let fg = (jitter.fg as f32 + rng.uniform(-lvl, lvl + 1.0)?.floor()).clamp(0.0, 255.0) as u8;
            let bg = (jitter.bg as f32 + rng.uniform(-lvl, lvl + 1.0)?.floor()).clamp(0.0, 255.0) as u8;
            let image = render_glyph(font, class_id, image_size, dx, dy, fg, bg)?;
            samples.push(Sample {
                image,
                label: class_id,
                name: format!("synth/{}/{}/{i:04}", font.name(), super::id_to_char(class_id)),
            });
        }
    }
    Dataset::with_stratified_split(samples, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    DarkOnLight,
    LightOnDark,
}

/// Word image for segmentation tests: glyphs laid out left to right with a
/// fixed gap on a clean background, plus the exact per-glyph boxes. Glyph
/// height is 60% of the canvas height; rendering is deterministic (no
/// jitter) so the boxes are exact ground truth.
pub fn synth_scene(
    font: &GlyphFont,
    text: &str,
    width: usize,
    height: usize,
    gap_px: usize,
    polarity: Polarity,
) -> Result<(ImageU8, Vec<BoundingBox>)> {
    let (fg, bg) = match polarity {
        Polarity::DarkOnLight => (20u8, 235u8),
        Polarity::LightOnDark => (235u8, 20u8),
    };
    let mut img = ImageU8::new(width, height, 1, bg)?;
    if text.is_empty() {
        return Ok((img, Vec::new()));
    }
    let scale = ((height * 3) / (5 * GLYPH_ROWS)).max(1); // glyph height ~60% of canvas
    let cell_w = GLYPH_COLS * scale;
    let cell_h = GLYPH_ROWS * scale;
    let n = text.chars().count();
    let total_w = n * cell_w + (n - 1) * gap_px;
    let margin_x = cell_w / 2;
    if 2 * margin_x + total_w > width {
        return Err(Error::Layout(format!(
            "text {text:?} needs {} px, canvas is {width}",
            2 * margin_x + total_w
        )));
    }
    let y0 = (height - cell_h) / 2;
    let mut boxes = Vec::with_capacity(n);
    let mut x = margin_x;
    for c in text.chars() {
        let class_id = super::label_map(c)?;
        let tight =
            stamp_glyph(&mut img, font, class_id, x as isize, y0 as isize, cell_w, cell_h, fg)
                .expect("glyph has ink");
        boxes.push(tight);
        x += cell_w + gap_px;
    }
    Ok((img, boxes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgproc::{segment_characters, SegmentParams};

    #[test]
    fn glyph_dataset_is_distinct_and_deterministic() {
        let font = GlyphFont::regular();
        let a = synth_glyphs(&font, 1, 16, GlyphJitter::none(), 5).unwrap();
        assert_eq!(a.len(), 36);
        for i in 0..36 {
            for j in (i + 1)..36 {
                assert_ne!(a.sample(i).image, a.sample(j).image, "classes {i}/{j} render equal");
            }
        }
        let b = synth_glyphs(&font, 1, 16, GlyphJitter::none(), 5).unwrap();
        for i in 0..36 {
            assert_eq!(a.sample(i).image, b.sample(i).image);
        }
        let c = synth_glyphs(&font, 1, 16, GlyphJitter::default(), 6).unwrap();
        assert!((0..36).any(|i| a.sample(i).image != c.sample(i).image));
    }

    #[test]
    fn rendered_glyph_matches_bitmap_placement() {
        let font = GlyphFont::regular();
        let class = super::super::label_map('a').unwrap();
        let size = 32usize;
        let img = render_glyph(&font, class, size, 0, 0, 0, 255).unwrap();
        let margin = size / 8;
        let cell = size - 2 * margin;
        for y in 0..size {
            for x in 0..size {
                let expected = if (margin..margin + cell).contains(&x)
                    && (margin..margin + cell).contains(&y)
                {
                    let row = (y - margin) * GLYPH_ROWS / cell;
                    let col = (x - margin) * GLYPH_COLS / cell;
                    if font.ink(class, row, col) {
                        0
                    } else {
                        255
                    }
                } else {
                    255
                };
                assert_eq!(img.get(x, y, 0), expected, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn scene_boxes_are_ordered_and_disjoint() {
        let font = GlyphFont::regular();
        let (_, boxes) =
            synth_scene(&font, "01", 200, 48, 8, Polarity::DarkOnLight).unwrap();
        assert_eq!(boxes.len(), 2);
        assert!(boxes[1].x > boxes[0].x + boxes[0].w);
    }

    #[test]
    fn empty_scene_has_no_boxes() {
        let font = GlyphFont::regular();
        let (img, boxes) = synth_scene(&font, "", 64, 32, 4, Polarity::DarkOnLight).unwrap();
        assert!(boxes.is_empty());
        assert!(img.pixels().iter().all(|&p| p == 235));
    }

    #[test]
    fn too_long_text_is_layout_error() {
        let font = GlyphFont::regular();
        let r = synth_scene(&font, "0123456789", 40, 32, 4, Polarity::DarkOnLight);
        assert!(matches!(r, Err(Error::Layout(_))));
    }

    #[test]
    fn scene_agrees_with_segmentation() {
        let font = GlyphFont::regular();
        let (img, truth) =
            synth_scene(&font, "COLOR", 300, 64, 10, Polarity::DarkOnLight).unwrap();
        let boxes = segment_characters(&img, &SegmentParams::default()).unwrap();
        assert_eq!(boxes.len(), truth.len());
        for (b, t) in boxes.iter().zip(&truth) {
            assert!((b.x as i64 - t.x as i64).abs() <= 1, "{b:?} vs {t:?}");
            assert!((b.y as i64 - t.y as i64).abs() <= 1, "{b:?} vs {t:?}");
            assert!((b.right() as i64 - t.right() as i64).abs() <= 1, "{b:?} vs {t:?}");
            assert!((b.bottom() as i64 - t.bottom() as i64).abs() <= 1, "{b:?} vs {t:?}");
        }
    }
}
