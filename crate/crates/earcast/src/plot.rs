//! Minimal deterministic raster plotting: lines, text from an embedded 5×7
//! bitmap font, scatter marks and dB heatmaps, encoded as PNG.
//!
//! Nothing here touches system fonts, timestamps or randomness, so
//! identical inputs always produce byte-identical images.

use image::{Rgb, RgbImage};

use crate::error::FrcError;

pub type Color = [u8; 3];

pub const WHITE: Color = [255, 255, 255];
pub const BLACK: Color = [20, 20, 20];
pub const GRAY: Color = [214, 214, 214];
pub const ORANGE: Color = [255, 140, 0];

/// Line palette for data series (orange is reserved for target overlays).
pub const PALETTE: [Color; 8] = [
    [31, 119, 180],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [23, 190, 207],
    [188, 156, 34],
];

/// Classic 5×7 column-encoded font, ASCII 32..=126. Bit 0 of each byte is
/// the top pixel of the column.
#[rustfmt::skip]
const FONT5X7: [[u8; 5]; 95] = [
    [0x00,0x00,0x00,0x00,0x00], // ' '
    [0x00,0x00,0x5f,0x00,0x00], // '!'
    [0x00,0x07,0x00,0x07,0x00], // '"'
    [0x14,0x7f,0x14,0x7f,0x14], // '#'
    [0x24,0x2a,0x7f,0x2a,0x12], // '$'
    [0x23,0x13,0x08,0x64,0x62], // '%'
    [0x36,0x49,0x55,0x22,0x50], // '&'
    [0x00,0x05,0x03,0x00,0x00], // '\''
    [0x00,0x1c,0x22,0x41,0x00], // '('
    [0x00,0x41,0x22,0x1c,0x00], // ')'
    [0x14,0x08,0x3e,0x08,0x14], // '*'
    [0x08,0x08,0x3e,0x08,0x08], // '+'
    [0x00,0x50,0x30,0x00,0x00], // ','
    [0x08,0x08,0x08,0x08,0x08], // '-'
    [0x00,0x60,0x60,0x00,0x00], // '.'
    [0x20,0x10,0x08,0x04,0x02], // '/'
    [0x3e,0x51,0x49,0x45,0x3e], // '0'
    [0x00,0x42,0x7f,0x40,0x00], // '1'
    [0x42,0x61,0x51,0x49,0x46], // '2'
    [0x21,0x41,0x45,0x4b,0x31], // '3'
    [0x18,0x14,0x12,0x7f,0x10], // '4'
    [0x27,0x45,0x45,0x45,0x39], // '5'
    [0x3c,0x4a,0x49,0x49,0x30], // '6'
    [0x01,0x71,0x09,0x05,0x03], // '7'
    [0x36,0x49,0x49,0x49,0x36], // '8'
    [0x06,0x49,0x49,0x29,0x1e], // '9'
    [0x00,0x36,0x36,0x00,0x00], // ':'
    [0x00,0x56,0x36,0x00,0x00], // ';'
    [0x08,0x14,0x22,0x41,0x00], // '<'
    [0x14,0x14,0x14,0x14,0x14], // '='
    [0x00,0x41,0x22,0x14,0x08], // '>'
    [0x02,0x01,0x51,0x09,0x06], // '?'
    [0x32,0x49,0x79,0x41,0x3e], // '@'
    [0x7e,0x11,0x11,0x11,0x7e], // 'A'
    [0x7f,0x49,0x49,0x49,0x36], // 'B'
    [0x3e,0x41,0x41,0x41,0x22], // 'C'
    [0x7f,0x41,0x41,0x22,0x1c], // 'D'
    [0x7f,0x49,0x49,0x49,0x41], // 'E'
    [0x7f,0x09,0x09,0x09,0x01], // 'F'
    [0x3e,0x41,0x49,0x49,0x7a], // 'G'
    [0x7f,0x08,0x08,0x08,0x7f], // 'H'
    [0x00,0x41,0x7f,0x41,0x00], // 'I'
    [0x20,0x40,0x41,0x3f,0x01], // 'J'
    [0x7f,0x08,0x14,0x22,0x41], // 'K'
    [0x7f,0x40,0x40,0x40,0x40], // 'L'
    [0x7f,0x02,0x0c,0x02,0x7f], // 'M'
    [0x7f,0x04,0x08,0x10,0x7f], // 'N'
    [0x3e,0x41,0x41,0x41,0x3e], // 'O'
    [0x7f,0x09,0x09,0x09,0x06], // 'P'
    [0x3e,0x41,0x51,0x21,0x5e], // 'Q'
    [0x7f,0x09,0x19,0x29,0x46], // 'R'
    [0x46,0x49,0x49,0x49,0x31], // 'S'
    [0x01,0x01,0x7f,0x01,0x01], // 'T'
    [0x3f,0x40,0x40,0x40,0x3f], // 'U'
    [0x1f,0x20,0x40,0x20,0x1f], // 'V'
    [0x3f,0x40,0x38,0x40,0x3f], // 'W'
    [0x63,0x14,0x08,0x14,0x63], // 'X'
    [0x07,0x08,0x70,0x08,0x07], // 'Y'
    [0x61,0x51,0x49,0x45,0x43], // 'Z'
    [0x00,0x7f,0x41,0x41,0x00], // '['
    [0x02,0x04,0x08,0x10,0x20], // '\\'
    [0x00,0x41,0x41,0x7f,0x00], // ']'
    [0x04,0x02,0x01,0x02,0x04], // '^'
    [0x40,0x40,0x40,0x40,0x40], // '_'
    [0x00,0x01,0x02,0x04,0x00], // '`'
    [0x20,0x54,0x54,0x54,0x78], // 'a'
    [0x7f,0x48,0x44,0x44,0x38], // 'b'
    [0x38,0x44,0x44,0x44,0x20], // 'c'
    [0x38,0x44,0x44,0x48,0x7f], // 'd'
    [0x38,0x54,0x54,0x54,0x18], // 'e'
    [0x08,0x7e,0x09,0x01,0x02], // 'f'
    [0x0c,0x52,0x52,0x52,0x3e], // 'g'
    [0x7f,0x08,0x04,0x04,0x78], // 'h'
    [0x00,0x44,0x7d,0x40,0x00], // 'i'
    [0x20,0x40,0x44,0x3d,0x00], // 'j'
    [0x7f,0x10,0x28,0x44,0x00], // 'k'
    [0x00,0x41,0x7f,0x40,0x00], // 'l'
    [0x7c,0x04,0x18,0x04,0x78], // 'm'
    [0x7c,0x08,0x04,0x04,0x78], // 'n'
    [0x38,0x44,0x44,0x44,0x38], // 'o'
    [0x7c,0x14,0x14,0x14,0x08], // 'p'
    [0x08,0x14,0x14,0x18,0x7c], // 'q'
    [0x7c,0x08,0x04,0x04,0x08], // 'r'
    [0x48,0x54,0x54,0x54,0x20], // 's'
    [0x04,0x3f,0x44,0x40,0x20], // 't'
    [0x3c,0x40,0x40,0x20,0x7c], // 'u'
    [0x1c,0x20,0x40,0x20,0x1c], // 'v'
    [0x3c,0x40,0x30,0x40,0x3c], // 'w'
    [0x44,0x28,0x10,0x28,0x44], // 'x'
    [0x0c,0x50,0x50,0x50,0x3c], // 'y'
    [0x44,0x64,0x54,0x4c,0x44], // 'z'
    [0x00,0x08,0x36,0x41,0x00], // '{'
    [0x00,0x00,0x7f,0x00,0x00], // '|'
    [0x00,0x41,0x36,0x08,0x00], // '}'
    [0x10,0x08,0x08,0x10,0x08], // '~'
];

/// Fixed-size raster canvas with integer drawing primitives.
pub struct Canvas {
    img: RgbImage,
}

impl Canvas {
    pub fn new(width: u32, height: u32, bg: Color) -> Self {
        let img = RgbImage::from_pixel(width, height, Rgb(bg));
        Self { img }
    }

    pub fn width(&self) -> u32 {
        self.img.width()
    }

    pub fn height(&self) -> u32 {
        self.img.height()
    }

    pub fn put(&mut self, x: i64, y: i64, color: Color) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, Rgb(color));
        }
    }

    /// Bresenham line with square brush of the given thickness.
    pub fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: Color, thickness: u32) {
        let (mut x, mut y) = (x0.round() as i64, y0.round() as i64);
        let (xe, ye) = (x1.round() as i64, y1.round() as i64);
        let dx = (xe - x).abs();
        let dy = -(ye - y).abs();
        let sx = if x < xe { 1 } else { -1 };
        let sy = if y < ye { 1 } else { -1 };
        let mut err = dx + dy;
        let t = thickness as i64;
        loop {
            for ox in 0..t {
                for oy in 0..t {
                    self.put(x + ox - t / 2, y + oy - t / 2, color);
                }
            }
            if x == xe && y == ye {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    pub fn hline(&mut self, x0: f64, x1: f64, y: f64, color: Color, thickness: u32) {
        self.line(x0, y, x1, y, color, thickness);
    }

    pub fn vline(&mut self, x: f64, y0: f64, y1: f64, color: Color, thickness: u32) {
        self.line(x, y0, x, y1, color, thickness);
    }

    pub fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, color: Color) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, color);
            }
        }
    }

    pub fn filled_circle(&mut self, cx: f64, cy: f64, r: f64, color: Color) {
        let ri = r.ceil() as i64;
        let (cxi, cyi) = (cx.round() as i64, cy.round() as i64);
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if (dx * dx + dy * dy) as f64 <= r * r {
                    self.put(cxi + dx, cyi + dy, color);
                }
            }
        }
    }

    /// Draw text with the embedded font at integer scale.
    pub fn text(&mut self, x: i64, y: i64, s: &str, color: Color, scale: u32) {
        let sc = scale.max(1) as i64;
        let mut cx = x;
        for ch in s.chars() {
            let idx = (ch as usize).wrapping_sub(32);
            if idx < FONT5X7.len() {
                let glyph = FONT5X7[idx];
                for (col, bits) in glyph.iter().enumerate() {
                    for row in 0..7 {
                        if bits & (1 << row) != 0 {
                            self.fill_rect(
                                cx + col as i64 * sc,
                                y + row * sc,
                                sc,
                                sc,
                                color,
                            );
                        }
                    }
                }
            }
            cx += 6 * sc;
        }
    }

    pub fn text_width(s: &str, scale: u32) -> i64 {
        s.chars().count() as i64 * 6 * scale.max(1) as i64
    }

    /// Encode as PNG bytes. Deterministic for identical pixel content.
    pub fn encode_png(&self) -> Result<Vec<u8>, FrcError> {
        let mut out = Vec::new();
        let encoder = image::codecs::png::PngEncoder::new(&mut out);
        use image::ImageEncoder;
        encoder
            .write_image(
                self.img.as_raw(),
                self.img.width(),
                self.img.height(),
                image::ExtendedColorType::Rgb8,
            )
            .map_err(|e| FrcError::Png(e.to_string()))?;
        Ok(out)
    }
}

/// Map `v` in [0, 1] to a perceptually ordered blue→yellow ramp (8-anchor
/// approximation of viridis). Used for spectrogram heatmaps.
pub fn heat_color(v: f64) -> Color {
    const ANCHORS: [Color; 8] = [
        [68, 1, 84],
        [70, 50, 127],
        [54, 92, 141],
        [39, 127, 142],
        [31, 161, 135],
        [74, 194, 109],
        [159, 218, 58],
        [253, 231, 37],
    ];
    let v = v.clamp(0.0, 1.0) * (ANCHORS.len() - 1) as f64;
    let i = (v.floor() as usize).min(ANCHORS.len() - 2);
    let t = v - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] =
            (ANCHORS[i][c] as f64 * (1.0 - t) + ANCHORS[i + 1][c] as f64 * t).round() as u8;
    }
    out
}

/// A simple multi-series line chart with linear axes, for loss curves.
pub fn line_chart(
    title: &str,
    series: &[(String, Vec<(f64, f64)>)],
    width: u32,
    height: u32,
) -> Result<Vec<u8>, FrcError> {
    let mut canvas = Canvas::new(width, height, WHITE);
    let (ml, mr, mt, mb) = (56i64, 12i64, 22i64, 30i64);
    let pw = width as i64 - ml - mr;
    let ph = height as i64 - mt - mb;

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, pts) in series {
        for &(x, y) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() || xmax <= xmin {
        xmin = 0.0;
        xmax = 1.0;
    }
    if !ymin.is_finite() || ymax <= ymin {
        ymin = 0.0;
        ymax = 1.0;
    }
    let pad = (ymax - ymin) * 0.05;
    ymin -= pad;
    ymax += pad;

    let sx = |x: f64| ml as f64 + (x - xmin) / (xmax - xmin) * pw as f64;
    let sy = |y: f64| mt as f64 + (1.0 - (y - ymin) / (ymax - ymin)) * ph as f64;

    canvas.text(ml, 6, title, BLACK, 1);
    canvas.hline(ml as f64, (ml + pw) as f64, (mt + ph) as f64, BLACK, 1);
    canvas.vline(ml as f64, mt as f64, (mt + ph) as f64, BLACK, 1);
    for k in 0..=4 {
        let y = ymin + (ymax - ymin) * k as f64 / 4.0;
        let py = sy(y);
        canvas.hline(ml as f64, (ml + pw) as f64, py, GRAY, 1);
        canvas.text(2, py as i64 - 3, &format!("{y:.3}"), BLACK, 1);
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for w in pts.windows(2) {
            canvas.line(sx(w[0].0), sy(w[0].1), sx(w[1].0), sy(w[1].1), color, 2);
        }
        let lx = ml + 8 + i as i64 * 120;
        canvas.hline(lx as f64, (lx + 14) as f64, (mt + 6) as f64, color, 2);
        canvas.text(lx + 18, mt, name, BLACK, 1);
    }
    canvas.encode_png()
}

/// Scatter chart with one color per label, for 2-D embedding maps.
pub fn scatter_chart(
    title: &str,
    points: &[(f64, f64, String)],
    width: u32,
    height: u32,
) -> Result<Vec<u8>, FrcError> {
    let mut canvas = Canvas::new(width, height, WHITE);
    let (ml, mr, mt, mb) = (24i64, 12i64, 22i64, 14i64);
    let pw = width as i64 - ml - mr;
    let ph = height as i64 - mt - mb;

    let mut labels: Vec<&String> = points.iter().map(|p| &p.2).collect();
    labels.sort();
    labels.dedup();

    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, _) in points {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if xmax <= xmin {
        xmax = xmin + 1.0;
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    canvas.text(ml, 6, title, BLACK, 1);
    for &(x, y, ref label) in points {
        let i = labels.binary_search(&label).unwrap_or(0);
        let color = PALETTE[i % PALETTE.len()];
        let px = ml as f64 + (x - xmin) / (xmax - xmin) * pw as f64;
        let py = mt as f64 + (1.0 - (y - ymin) / (ymax - ymin)) * ph as f64;
        canvas.filled_circle(px, py, 2.5, color);
    }
    for (i, label) in labels.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let lx = ml + 8 + i as i64 * 70;
        canvas.filled_circle(lx as f64 + 3.0, (mt + 6) as f64, 3.0, color);
        canvas.text(lx + 10, mt, label, BLACK, 1);
    }
    canvas.encode_png()
}

/// Render a dB-scaled magnitude spectrogram into PNG bytes.
pub fn spectrogram_png(
    title: &str,
    mag_db: &[Vec<f64>], // [freq][time], low freq first
    width: u32,
    height: u32,
) -> Result<Vec<u8>, FrcError> {
    let mut canvas = Canvas::new(width, height, WHITE);
    let (ml, mt, mb) = (8i64, 20i64, 8i64);
    let pw = width as i64 - 2 * ml;
    let ph = height as i64 - mt - mb;
    canvas.text(ml, 4, title, BLACK, 1);
    let nf = mag_db.len().max(1);
    let nt = mag_db.first().map(|r| r.len()).unwrap_or(0).max(1);
    let lo = -80.0;
    let hi = 0.0;
    for py in 0..ph {
        // top of the panel is the highest frequency
        let f = ((ph - 1 - py) as f64 / ph as f64 * nf as f64) as usize;
        for px in 0..pw {
            let t = (px as f64 / pw as f64 * nt as f64) as usize;
            let v = mag_db
                .get(f.min(nf - 1))
                .and_then(|row| row.get(t.min(nt - 1)))
                .copied()
                .unwrap_or(lo);
            let norm = (v - lo) / (hi - lo);
            canvas.put(ml + px, mt + py, heat_color(norm));
        }
    }
    canvas.encode_png()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canvas_png_is_deterministic() {
        let render = || {
            let mut c = Canvas::new(120, 80, WHITE);
            c.line(5.0, 5.0, 115.0, 75.0, PALETTE[0], 2);
            c.text(10, 10, "Hello 123", BLACK, 1);
            c.filled_circle(60.0, 40.0, 4.0, ORANGE);
            c.encode_png().unwrap()
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn png_decodes_with_declared_dimensions() {
        let c = Canvas::new(321, 123, WHITE);
        let bytes = c.encode_png().unwrap();
        let img = image::load_from_memory(&bytes).unwrap();
        assert_eq!(img.width(), 321);
        assert_eq!(img.height(), 123);
    }

    #[test]
    fn heat_color_endpoints() {
        assert_eq!(heat_color(0.0), [68, 1, 84]);
        assert_eq!(heat_color(1.0), [253, 231, 37]);
        assert_ne!(heat_color(0.5), heat_color(0.51));
    }

    #[test]
    fn text_stays_in_bounds() {
        let mut c = Canvas::new(30, 12, WHITE);
        // drawing past the edge must not panic
        c.text(-5, -3, "clipped text run", BLACK, 2);
        c.line(-10.0, -10.0, 100.0, 100.0, BLACK, 3);
    }
}
