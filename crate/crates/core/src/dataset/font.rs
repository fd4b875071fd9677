//! Embedded 5x7 bitmap font for the 36 alphanumeric classes.
//!
//! Each glyph is seven rows of five columns; bit 4 of a row byte is the
//! leftmost column. Every glyph is a single 8-connected blob (no detached
//! dots), so a rendered glyph always segments into exactly one component,
//! and all 36 bitmaps are pairwise distinct. Both properties are asserted
//! by tests.

pub const GLYPH_ROWS: usize = 7;
pub const GLYPH_COLS: usize = 5;

/// Class order: '0'..'9' then 'a'..'z'.
const REGULAR: [[u8; GLYPH_ROWS]; 36] = [
    // '0'
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    // '1'
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    // '2'
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    // '3'
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    // '4'
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    // '5'
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    // '6'
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    // '7'
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    // '8'
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    // '9'
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
    // 'a'
    [0b00000, 0b00000, 0b01110, 0b00001, 0b01111, 0b10001, 0b01111],
    // 'b'
    [0b10000, 0b10000, 0b10110, 0b11001, 0b10001, 0b10001, 0b11110],
    // 'c'
    [0b00000, 0b00000, 0b01110, 0b10000, 0b10000, 0b10001, 0b01110],
    // 'd'
    [0b00001, 0b00001, 0b01101, 0b10011, 0b10001, 0b10001, 0b01111],
    // 'e'
    [0b00000, 0b00000, 0b01110, 0b10001, 0b11111, 0b10000, 0b01110],
    // 'f'
    [0b00110, 0b01001, 0b01000, 0b11100, 0b01000, 0b01000, 0b01000],
    // 'g'
    [0b00000, 0b01111, 0b10001, 0b10001, 0b01111, 0b00001, 0b01110],
    // 'h'
    [0b10000, 0b10000, 0b10110, 0b11001, 0b10001, 0b10001, 0b10001],
    // 'i' (serif form keeps the glyph one component)
    [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    // 'j'
    [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100],
    // 'k'
    [0b10000, 0b10000, 0b10001, 0b10010, 0b11100, 0b10010, 0b10001],
    // 'l'
    [0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    // 'm'
    [0b00000, 0b00000, 0b11010, 0b10101, 0b10101, 0b10101, 0b10101],
    // 'n'
    [0b00000, 0b00000, 0b10110, 0b11001, 0b10001, 0b10001, 0b10001],
    // 'o'
    [0b00000, 0b00000, 0b01110, 0b10001, 0b10001, 0b10001, 0b01110],
    // 'p'
    [0b00000, 0b00000, 0b11110, 0b10001, 0b11110, 0b10000, 0b10000],
    // 'q'
    [0b00000, 0b00000, 0b01111, 0b10001, 0b01111, 0b00001, 0b00001],
    // 'r'
    [0b00000, 0b00000, 0b10110, 0b11001, 0b10000, 0b10000, 0b10000],
    // 's'
    [0b00000, 0b00000, 0b01111, 0b10000, 0b01110, 0b00001, 0b11110],
    // 't'
    [0b01000, 0b01000, 0b11100, 0b01000, 0b01000, 0b01001, 0b00110],
    // 'u'
    [0b00000, 0b00000, 0b10001, 0b10001, 0b10001, 0b10011, 0b01101],
    // 'v'
    [0b00000, 0b00000, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100],
    // 'w'
    [0b00000, 0b00000, 0b10101, 0b10101, 0b10101, 0b10101, 0b01010],
    // 'x'
    [0b00000, 0b00000, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001],
    // 'y'
    [0b00000, 0b10001, 0b10001, 0b01010, 0b00100, 0b01000, 0b10000],
    // 'z'
    [0b00000, 0b00000, 0b11111, 0b00010, 0b00100, 0b01000, 0b11111],
];

/// A fixed set of 36 glyph bitmaps. `regular()` is the base design;
/// `bold()` smears every row one column to the right, giving a second,
/// visually related typeface for transfer-learning experiments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphFont {
    name: &'static str,
    bitmaps: [[u8; GLYPH_ROWS]; 36],
}

impl GlyphFont {
    pub fn regular() -> Self {
        Self { name: "regular", bitmaps: REGULAR }
    }

    pub fn bold() -> Self {
        let mut bitmaps = REGULAR;
        for glyph in &mut bitmaps {
            for row in glyph.iter_mut() {
                *row |= *row >> 1;
            }
        }
        Self { name: "bold", bitmaps }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Whether the glyph for `class_id` has ink at (row, col).
    pub fn ink(&self, class_id: usize, row: usize, col: usize) -> bool {
        assert!(class_id < 36 && row < GLYPH_ROWS && col < GLYPH_COLS);
        self.bitmaps[class_id][row] & (1 << (GLYPH_COLS - 1 - col)) != 0
    }

    /// Tight extent of the glyph's ink: (min_col, min_row, max_col, max_row).
    pub fn ink_extent(&self, class_id: usize) -> (usize, usize, usize, usize) {
        let (mut min_c, mut min_r, mut max_c, mut max_r) = (GLYPH_COLS, GLYPH_ROWS, 0, 0);
        for r in 0..GLYPH_ROWS {
            for c in 0..GLYPH_COLS {
                if self.ink(class_id, r, c) {
                    min_c = min_c.min(c);
                    min_r = min_r.min(r);
                    max_c = max_c.max(c);
                    max_r = max_r.max(r);
                }
            }
        }
        (min_c, min_r, max_c, max_r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn connected(font: &GlyphFont, class_id: usize) -> bool {
        let mut cells = Vec::new();
        for r in 0..GLYPH_ROWS {
            for c in 0..GLYPH_COLS {
                if font.ink(class_id, r, c) {
                    cells.push((r as i32, c as i32));
                }
            }
        }
        if cells.is_empty() {
            return false;
        }
        let mut seen = vec![false; cells.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            let (r, c) = cells[i];
            for (j, &(r2, c2)) in cells.iter().enumerate() {
                if !seen[j] && (r - r2).abs() <= 1 && (c - c2).abs() <= 1 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    #[test]
    fn all_glyphs_distinct_and_connected() {
        for font in [GlyphFont::regular(), GlyphFont::bold()] {
            for a in 0..36 {
                assert!(connected(&font, a), "{} glyph {a} is disconnected", font.name());
                for b in (a + 1)..36 {
                    assert_ne!(
                        font.bitmaps[a],
                        font.bitmaps[b],
                        "{} glyphs {a} and {b} collide",
                        font.name()
                    );
                }
            }
        }
    }

    #[test]
    fn fonts_differ() {
        let (a, b) = (GlyphFont::regular(), GlyphFont::bold());
        assert!((0..36).any(|i| a.bitmaps[i] != b.bitmaps[i]));
    }
}
