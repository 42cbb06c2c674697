//! Deterministic SVG and raster rendering of designs with drawing overlays.
//!
//! The canvas `[-20, 20]²` (y up) maps onto a square `[0, size]²` screen
//! viewBox (y down). Stored coordinates never leave canvas space; the flip
//! happens only here.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::Design;
use crate::game::Round;
use crate::geometry::{dist_point_segment, Curve, Orientation, Point, CANVAS_HALF};
use crate::message::{drawing_to_svg_styled, Drawing};
use crate::par::{self, Exec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("stroke widths must be positive")]
    BadWidth,
    #[error("bitmap dimensions must be at least 1x1")]
    EmptyBitmap,
    #[error("png encoding failed: {0}")]
    Png(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    /// Side length of the SVG viewBox and default raster, in pixels.
    pub size: u32,
    pub design_width: f64,
    pub overlay_width: f64,
    pub design_color: String,
    pub overlay_color: String,
    pub background: String,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            size: 512,
            design_width: 3.0,
            overlay_width: 3.0,
            design_color: "#000000".into(),
            overlay_color: "#FF0000".into(),
            background: "#FFFFFF".into(),
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.design_width > 0.0 && self.overlay_width > 0.0) {
            return Err(RenderError::BadWidth);
        }
        if self.size == 0 {
            return Err(RenderError::EmptyBitmap);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub design: Design,
    pub overlay: Option<Drawing>,
    pub style: RenderStyle,
}

impl Scene {
    pub fn new(design: Design) -> Self {
        Scene {
            design,
            ..Scene::default()
        }
    }

    pub fn with_overlay(mut self, overlay: Drawing) -> Self {
        self.overlay = Some(overlay);
        self
    }
}

/// Canvas point to screen coordinates in a `size`-pixel square viewBox.
pub fn canvas_to_px(p: Point, size: u32) -> (f64, f64) {
    let s = size as f64;
    let extent = 2.0 * CANVAS_HALF;
    ((p.x + CANVAS_HALF) * s / extent, (CANVAS_HALF - p.y) * s / extent)
}

pub fn px_to_canvas(x: f64, y: f64, size: u32) -> Point {
    let s = size as f64;
    let extent = 2.0 * CANVAS_HALF;
    Point::new(x * extent / s - CANVAS_HALF, CANVAS_HALF - y * extent / s)
}

/// Canonical SVG document for a scene. Curves are emitted in canonical
/// order, then overlay strokes in sequence, so equal scenes give equal bytes.
pub fn scene_to_svg(scene: &Scene) -> Result<String, RenderError> {
    let style = &scene.style;
    style.validate()?;
    let size = style.size;
    let scale = size as f64 / (2.0 * CANVAS_HALF);
    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = write!(out, "\n<rect width=\"{size}\" height=\"{size}\" fill=\"{}\"/>", style.background);
    let _ = write!(
        out,
        "\n<g class=\"design\" stroke=\"{}\" stroke-width=\"{}\" fill=\"none\" stroke-linecap=\"round\">",
        style.design_color, style.design_width
    );
    for curve in scene.design.sorted_curves() {
        out.push('\n');
        match curve {
            Curve::Line([a, b]) => {
                let (x1, y1) = canvas_to_px(a, size);
                let (x2, y2) = canvas_to_px(b, size);
                let _ = write!(out, r#"<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}"/>"#);
            }
            Curve::Circle(_) => {
                let c = curve.circle_params().expect("circle");
                let (cx, cy) = canvas_to_px(c.center, size);
                let r = c.radius * size as f64 / (2.0 * CANVAS_HALF);
                let _ = write!(out, r#"<circle cx="{cx}" cy="{cy}" r="{r}"/>"#);
            }
            Curve::Arc([s, _, e]) => {
                let a = curve.arc_params().expect("validated arc");
                let (sx, sy) = canvas_to_px(s, size);
                let (ex, ey) = canvas_to_px(e, size);
                let r = a.radius * scale;
                let large = u8::from(a.is_large());
                // the y flip reverses the visual direction
                let sweep = u8::from(a.orientation == Orientation::Clockwise);
                let _ = write!(out, r#"<path d="M {sx} {sy} A {r} {r} 0 {large} {sweep} {ex} {ey}"/>"#);
            }
        }
    }
    out.push_str("\n</g>");
    if let Some(overlay) = &scene.overlay {
        out.push('\n');
        out.push_str(&drawing_to_svg_styled(overlay, style));
    }
    out.push_str("\n</svg>\n");
    Ok(out)
}

/// Row-major RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Bitmap {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RenderError> {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| RenderError::Png(e.to_string()))?;
            w.write_image_data(&self.pixels)
                .map_err(|e| RenderError::Png(e.to_string()))?;
        }
        Ok(buf)
    }
}

fn parse_color(s: &str) -> [u8; 3] {
    let hex = s.trim_start_matches('#');
    let c = |i: usize| u8::from_str_radix(hex.get(i..i + 2).unwrap_or("00"), 16).unwrap_or(0);
    [c(0), c(2), c(4)]
}

/// Rasterizes the scene geometry without anti-aliasing: a pixel takes a
/// stroke's color when its center is within half the stroke width of the
/// exact curve. Overlay strokes paint over design curves.
pub fn rasterize(scene: &Scene, width: u32, height: u32) -> Result<Bitmap, RenderError> {
    rasterize_with(Exec::default(), scene, width, height)
}

pub fn rasterize_with(exec: Exec, scene: &Scene, width: u32, height: u32) -> Result<Bitmap, RenderError> {
    scene.style.validate()?;
    if width == 0 || height == 0 {
        return Err(RenderError::EmptyBitmap);
    }
    let extent = 2.0 * CANVAS_HALF;
    let sx = width as f64 / extent;
    let sy = height as f64 / extent;
    let px_per_unit = sx.min(sy);
    let design_half = 0.5 * scene.style.design_width / px_per_unit;
    let overlay_half = 0.5 * scene.style.overlay_width / px_per_unit;
    let bg = parse_color(&scene.style.background);
    let fg = parse_color(&scene.style.design_color);
    let red = parse_color(&scene.style.overlay_color);
    let curves = scene.design.curves();
    let strokes = scene.overlay.as_ref().map(|d| d.strokes.as_slice()).unwrap_or(&[]);

    let rows = par::map_range(exec, height as usize, |row| {
        let mut line = Vec::with_capacity(3 * width as usize);
        let y = CANVAS_HALF - (row as f64 + 0.5) / sy;
        for col in 0..width as usize {
            let q = Point::new((col as f64 + 0.5) / sx - CANVAS_HALF, y);
            let on_overlay = strokes.iter().any(|s| {
                s.points()
                    .windows(2)
                    .any(|w| dist_point_segment(q, w[0], w[1]) <= overlay_half)
            });
            let color = if on_overlay {
                red
            } else if curves.iter().any(|c| c.distance_to(q) <= design_half) {
                fg
            } else {
                bg
            };
            line.extend_from_slice(&color);
        }
        line
    });
    Ok(Bitmap {
        width,
        height,
        pixels: rows.concat(),
    })
}

/// Rendered view of one past round, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryPanel {
    /// 1-based round number.
    pub round: usize,
    pub text: String,
    /// The design the message was written against, with the drawing on top.
    pub before: Scene,
    /// The design after the Maker's actions.
    pub after: Scene,
}

pub fn render_history(rounds: &[Round], style: &RenderStyle) -> Vec<HistoryPanel> {
    rounds
        .iter()
        .enumerate()
        .map(|(i, r)| HistoryPanel {
            round: i + 1,
            text: r.message.text.clone(),
            before: Scene {
                design: r.design_before.clone(),
                overlay: Some(r.message.drawing.clone()),
                style: style.clone(),
            },
            after: Scene {
                design: r.design_after.clone(),
                overlay: None,
                style: style.clone(),
            },
        })
        .collect()
}

/// PNG bytes of a design with an optional drawing overlay at the style's size.
pub fn design_png(design: &Design, overlay: Option<&Drawing>, style: &RenderStyle) -> Result<Vec<u8>, RenderError> {
    let scene = Scene {
        design: design.clone(),
        overlay: overlay.cloned(),
        style: style.clone(),
    };
    rasterize(&scene, style.size, style.size)?.to_png()
}
