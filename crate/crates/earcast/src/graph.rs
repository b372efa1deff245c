//! Render frequency response curves as line-graph images: log-frequency
//! x-axis, dB y-axis padded to 6 dB steps, optional target overlay drawn in
//! orange, legend on. Rendering is a pure function of (curves, style), so
//! repeated calls yield byte-identical PNGs.

use crate::error::FrcError;
use crate::frc::{FrequencyResponse, TargetCurve};
use crate::plot::{Canvas, BLACK, GRAY, ORANGE, PALETTE, WHITE};

/// Fixed appearance of a rendered graph.
#[derive(Debug, Clone)]
pub struct GraphStyle {
    pub width_px: u32,
    pub height_px: u32,
    pub line_px: u32,
    pub show_legend: bool,
}

impl Default for GraphStyle {
    fn default() -> Self {
        Self {
            width_px: 800,
            height_px: 500,
            line_px: 2,
            show_legend: true,
        }
    }
}

/// A rendered line graph plus the metadata a consumer needs to check it.
#[derive(Debug, Clone)]
pub struct FrcLineGraph {
    pub image_bytes: Vec<u8>,
    pub width_px: u32,
    pub height_px: u32,
    pub series_names: Vec<String>,
}

impl FrcLineGraph {
    /// Decode the PNG and confirm the declared dimensions and nonempty
    /// series list.
    pub fn validate(&self) -> Result<(), FrcError> {
        if self.series_names.is_empty() {
            return Err(FrcError::EmptyCurveList);
        }
        let img = image::load_from_memory(&self.image_bytes)
            .map_err(|e| FrcError::Png(e.to_string()))?;
        if img.width() != self.width_px || img.height() != self.height_px {
            return Err(FrcError::Png(format!(
                "decoded {}x{}, declared {}x{}",
                img.width(),
                img.height(),
                self.width_px,
                self.height_px
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), FrcError> {
        std::fs::write(path, &self.image_bytes)?;
        Ok(())
    }
}

const X_TICKS: [(f64, &str); 10] = [
    (20.0, "20"),
    (50.0, "50"),
    (100.0, "100"),
    (200.0, "200"),
    (500.0, "500"),
    (1000.0, "1k"),
    (2000.0, "2k"),
    (5000.0, "5k"),
    (10000.0, "10k"),
    (20000.0, "20k"),
];

/// Render one or more curves (and optionally a target overlay) to PNG.
pub fn render_line_graph(
    frs: &[FrequencyResponse],
    target: Option<&TargetCurve>,
    style: &GraphStyle,
) -> Result<FrcLineGraph, FrcError> {
    if frs.is_empty() {
        return Err(FrcError::EmptyCurveList);
    }
    let mut canvas = Canvas::new(style.width_px, style.height_px, WHITE);
    let (ml, mr, mt, mb) = (56i64, 14i64, 14i64, 36i64);
    let pw = style.width_px as i64 - ml - mr;
    let ph = style.height_px as i64 - mt - mb;

    // frequency span across everything drawn
    let mut fmin = f64::INFINITY;
    let mut fmax = f64::NEG_INFINITY;
    let mut dmin = f64::INFINITY;
    let mut dmax = f64::NEG_INFINITY;
    let all_curves: Vec<&FrequencyResponse> = frs
        .iter()
        .chain(target.map(|t| &t.response))
        .collect();
    for fr in &all_curves {
        let (lo, hi) = fr.span();
        fmin = fmin.min(lo);
        fmax = fmax.max(hi);
        for &m in &fr.mags_db {
            dmin = dmin.min(m);
            dmax = dmax.max(m);
        }
    }
    // pad the dB range outward to the nearest 6 dB step
    let ymin = (dmin / 6.0).floor() * 6.0 - if dmin % 6.0 == 0.0 { 6.0 } else { 0.0 };
    let ymax = (dmax / 6.0).ceil() * 6.0 + if dmax % 6.0 == 0.0 { 6.0 } else { 0.0 };
    let (ymin, ymax) = (ymin.min(-6.0), ymax.max(6.0));

    let sx = |f: f64| ml as f64 + (f / fmin).ln() / (fmax / fmin).ln() * pw as f64;
    let sy = |db: f64| mt as f64 + (1.0 - (db - ymin) / (ymax - ymin)) * ph as f64;

    // grid and ticks
    for (f, label) in X_TICKS {
        if f < fmin || f > fmax {
            continue;
        }
        let px = sx(f);
        canvas.vline(px, mt as f64, (mt + ph) as f64, GRAY, 1);
        canvas.text(
            px as i64 - Canvas::text_width(label, 1) / 2,
            mt + ph + 6,
            label,
            BLACK,
            1,
        );
    }
    let mut db = ymin;
    while db <= ymax + 1e-9 {
        let py = sy(db);
        canvas.hline(ml as f64, (ml + pw) as f64, py, GRAY, 1);
        let label = format!("{db:+.0}");
        canvas.text(
            ml - 6 - Canvas::text_width(&label, 1),
            py as i64 - 3,
            &label,
            BLACK,
            1,
        );
        db += 6.0;
    }
    canvas.hline(ml as f64, (ml + pw) as f64, sy(0.0), BLACK, 1);
    canvas.text(ml + pw / 2 - 6, mt + ph + 20, "Hz", BLACK, 1);
    canvas.text(4, mt + ph / 2 - 3, "dB", BLACK, 1);

    // frame
    canvas.hline(ml as f64, (ml + pw) as f64, mt as f64, BLACK, 1);
    canvas.hline(ml as f64, (ml + pw) as f64, (mt + ph) as f64, BLACK, 1);
    canvas.vline(ml as f64, mt as f64, (mt + ph) as f64, BLACK, 1);
    canvas.vline((ml + pw) as f64, mt as f64, (mt + ph) as f64, BLACK, 1);

    // curves
    let mut series_names = Vec::new();
    let draw_curve = |canvas: &mut Canvas, fr: &FrequencyResponse, color| {
        let mut prev: Option<(f64, f64)> = None;
        for (&f, &m) in fr.freqs_hz.iter().zip(&fr.mags_db) {
            let p = (sx(f), sy(m));
            if let Some(q) = prev {
                canvas.line(q.0, q.1, p.0, p.1, color, style.line_px.max(1));
            }
            prev = Some(p);
        }
    };
    for (i, fr) in frs.iter().enumerate() {
        draw_curve(&mut canvas, fr, PALETTE[i % PALETTE.len()]);
        series_names.push(fr.device_name.clone());
    }
    if let Some(t) = target {
        draw_curve(&mut canvas, &t.response, ORANGE);
        series_names.push(t.label().to_string());
    }

    // legend, top-right
    if style.show_legend {
        let longest = series_names
            .iter()
            .map(|n| Canvas::text_width(n, 1))
            .max()
            .unwrap_or(0);
        let lw = longest + 30;
        let lx = ml + pw - lw - 6;
        let ly = mt + 6;
        canvas.fill_rect(lx, ly, lw, 12 * series_names.len() as i64 + 4, WHITE);
        for (i, name) in series_names.iter().enumerate() {
            let color = if target.is_some() && i == series_names.len() - 1 {
                ORANGE
            } else {
                PALETTE[i % PALETTE.len()]
            };
            let ty = ly + 3 + 12 * i as i64;
            canvas.hline((lx + 2) as f64, (lx + 20) as f64, (ty + 3) as f64, color, 2);
            canvas.text(lx + 24, ty, name, BLACK, 1);
        }
    }

    Ok(FrcLineGraph {
        image_bytes: canvas.encode_png()?,
        width_px: style.width_px,
        height_px: style.height_px,
        series_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frc::standard_grid;

    fn wiggly(name: &str, scale: f64) -> FrequencyResponse {
        let grid = standard_grid();
        let mags: Vec<f64> = grid
            .iter()
            .map(|f| scale * (f / 500.0).ln().sin() * 4.0)
            .collect();
        FrequencyResponse::new(grid, mags, name).unwrap()
    }

    #[test]
    fn renders_declared_dimensions() {
        let style = GraphStyle::default();
        let graph = render_line_graph(&[wiggly("a", 1.0)], None, &style).unwrap();
        assert_eq!(graph.width_px, 800);
        assert_eq!(graph.height_px, 500);
        graph.validate().unwrap();
        let img = image::load_from_memory(&graph.image_bytes).unwrap();
        assert_eq!((img.width(), img.height()), (800, 500));
    }

    #[test]
    fn rendering_is_byte_deterministic() {
        let style = GraphStyle::default();
        let curves = [wiggly("a", 1.0), wiggly("b", -0.6)];
        let grid = standard_grid();
        let target = TargetCurve::harman(&grid);
        let g1 = render_line_graph(&curves, Some(&target), &style).unwrap();
        let g2 = render_line_graph(&curves, Some(&target), &style).unwrap();
        assert_eq!(g1.image_bytes, g2.image_bytes);
    }

    #[test]
    fn target_series_is_labeled_harman() {
        let grid = standard_grid();
        let target = TargetCurve::harman(&grid);
        let graph =
            render_line_graph(&[wiggly("devA", 1.0)], Some(&target), &GraphStyle::default())
                .unwrap();
        assert_eq!(graph.series_names, vec!["devA".to_string(), "Harman".to_string()]);
    }

    #[test]
    fn rejects_empty_curve_list() {
        assert!(matches!(
            render_line_graph(&[], None, &GraphStyle::default()),
            Err(FrcError::EmptyCurveList)
        ));
    }

    #[test]
    fn custom_size_respected() {
        let style = GraphStyle {
            width_px: 400,
            height_px: 250,
            ..GraphStyle::default()
        };
        let graph = render_line_graph(&[wiggly("a", 1.0)], None, &style).unwrap();
        graph.validate().unwrap();
    }
}
