//! Designer messages: free text plus a freehand drawing made of strokes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::render::{canvas_to_px, px_to_canvas, RenderStyle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrokeError {
    #[error("a stroke needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("stroke point {0} is not finite")]
    NonFinite(usize),
}

/// A freehand polyline in canvas coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Stroke(Vec<Point>);

impl TryFrom<Vec<Point>> for Stroke {
    type Error = StrokeError;
    fn try_from(points: Vec<Point>) -> Result<Self, Self::Error> {
        Stroke::new(points)
    }
}

impl From<Stroke> for Vec<Point> {
    fn from(s: Stroke) -> Self {
        s.0
    }
}

impl Stroke {
    pub fn new(points: Vec<Point>) -> Result<Stroke, StrokeError> {
        if points.len() < 2 {
            return Err(StrokeError::TooShort(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(StrokeError::NonFinite(i));
        }
        Ok(Stroke(points))
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    /// Polyline arc length.
    pub fn length(&self) -> f64 {
        self.0.windows(2).map(|w| w[0].dist(w[1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Drawing {
    pub strokes: Vec<Stroke>,
}

impl Drawing {
    pub fn new(strokes: Vec<Stroke>) -> Self {
        Drawing { strokes }
    }

    pub fn is_empty(&self) -> bool {
        self.strokes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub text: String,
    #[serde(rename = "strokes")]
    pub drawing: Drawing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    TextOnly,
    DrawingOnly,
    Multimodal,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    #[default]
    None,
    DropText,
    DropDrawing,
}

impl Message {
    pub fn text(text: impl Into<String>) -> Self {
        Message {
            text: text.into(),
            drawing: Drawing::default(),
        }
    }

    pub fn has_text(&self) -> bool {
        !self.text.is_empty()
    }

    pub fn has_drawing(&self) -> bool {
        !self.drawing.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        !self.has_text() && !self.has_drawing()
    }

    pub fn modality(&self) -> Modality {
        match (self.has_text(), self.has_drawing()) {
            (true, true) => Modality::Multimodal,
            (true, false) => Modality::TextOnly,
            (false, true) => Modality::DrawingOnly,
            (false, false) => Modality::Empty,
        }
    }

    /// Removes one channel. The result may be empty.
    pub fn ablate(&self, mode: AblationMode) -> Message {
        match mode {
            AblationMode::None => self.clone(),
            AblationMode::DropText => Message {
                text: String::new(),
                drawing: self.drawing.clone(),
            },
            AblationMode::DropDrawing => Message {
                text: self.text.clone(),
                drawing: Drawing::default(),
            },
        }
    }

    pub fn char_count(&self) -> usize {
        self.text.chars().count()
    }
}

pub fn message_modality(m: &Message) -> Modality {
    m.modality()
}

pub fn ablate(m: &Message, mode: AblationMode) -> Message {
    m.ablate(mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StrokeStats {
    pub stroke_count: usize,
    /// Total polyline length in canvas units.
    pub ink: f64,
}

pub fn stroke_stats(d: &Drawing) -> StrokeStats {
    StrokeStats {
        stroke_count: d.strokes.len(),
        ink: d.strokes.iter().map(Stroke::length).sum(),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvgError {
    #[error("malformed path data at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("unsupported path command '{command}' at byte {offset}")]
    UnsupportedCommand { command: char, offset: usize },
    #[error("invalid stroke: {0}")]
    Stroke(#[from] StrokeError),
}

/// `<g>` group with one red `<path>` per stroke, in screen coordinates.
pub fn drawing_to_svg(d: &Drawing) -> String {
    drawing_to_svg_styled(d, &RenderStyle::default())
}

pub(crate) fn drawing_to_svg_styled(d: &Drawing, style: &RenderStyle) -> String {
    let mut out = format!(
        r#"<g class="drawing" stroke="{}" stroke-width="{}" fill="none" stroke-linecap="round" stroke-linejoin="round">"#,
        style.overlay_color, style.overlay_width
    );
    for stroke in &d.strokes {
        out.push_str(r#"<path d=""#);
        for (i, p) in stroke.points().iter().enumerate() {
            let (x, y) = canvas_to_px(*p, style.size);
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{} {x} {y}", if i == 0 { 'M' } else { 'L' }));
        }
        out.push_str(r#""/>"#);
    }
    out.push_str("</g>");
    out
}

/// Inverse of [`drawing_to_svg`]. Accepts either a document or fragment
/// (every `d` attribute inside the `drawing` group, or the whole input when
/// there is no such group), or bare path data.
pub fn svg_to_drawing(s: &str) -> Result<Drawing, SvgError> {
    svg_to_drawing_sized(s, RenderStyle::default().size)
}

pub(crate) fn svg_to_drawing_sized(s: &str, size: u32) -> Result<Drawing, SvgError> {
    let mut strokes = Vec::new();
    if !s.contains('<') {
        for pts in parse_path_data(s, 0)? {
            strokes.push(Stroke::new(pts.into_iter().map(|(x, y)| px_to_canvas(x, y, size)).collect())?);
        }
        return Ok(Drawing::new(strokes));
    }
    let (scope_start, scope) = match s.find(r#"class="drawing""#) {
        Some(i) => {
            let end = s[i..].find("</g>").map_or(s.len(), |j| i + j);
            (i, &s[i..end])
        }
        None => (0, s),
    };
    let mut rest = scope;
    let mut base = scope_start;
    while let Some(i) = rest.find(" d=\"") {
        let start = i + 4;
        let len = rest[start..].find('"').ok_or_else(|| SvgError::Parse {
            offset: base + start,
            reason: "unterminated d attribute".into(),
        })?;
        for pts in parse_path_data(&rest[start..start + len], base + start)? {
            strokes.push(Stroke::new(pts.into_iter().map(|(x, y)| px_to_canvas(x, y, size)).collect())?);
        }
        base += start + len;
        rest = &rest[start + len..];
    }
    Ok(Drawing::new(strokes))
}

/// Parses absolute `M`/`L` path data into polylines; each `M` starts a new one.
pub fn parse_path_data(d: &str, base: usize) -> Result<Vec<Vec<(f64, f64)>>, SvgError> {
    let bytes = d.as_bytes();
    let mut i = 0;
    let mut out: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut current: Option<char> = None;
    let skip_ws = |i: &mut usize| {
        while *i < bytes.len() && (bytes[*i].is_ascii_whitespace() || bytes[*i] == b',') {
            *i += 1;
        }
    };
    loop {
        skip_ws(&mut i);
        if i >= bytes.len() {
            break;
        }
        let c = bytes[i] as char;
        if "MmLlHhVvCcSsQqTtAaZz".contains(c) {
            match c {
                'M' | 'L' => {
                    current = Some(c);
                    i += 1;
                }
                _ => {
                    return Err(SvgError::UnsupportedCommand {
                        command: c,
                        offset: base + i,
                    })
                }
            }
            if c == 'M' {
                out.push(Vec::new());
            } else if out.is_empty() {
                return Err(SvgError::Parse {
                    offset: base + i - 1,
                    reason: "path must start with M".into(),
                });
            }
        } else if current.is_none() {
            return Err(SvgError::Parse {
                offset: base + i,
                reason: "expected a command".into(),
            });
        }
        let x = parse_number(bytes, &mut i, base)?;
        skip_ws(&mut i);
        let y = parse_number(bytes, &mut i, base)?;
        out.last_mut().expect("an M command opened a polyline").push((x, y));
        // implicit repeats after M are line-tos
        if current == Some('M') {
            current = Some('L');
        }
    }
    Ok(out)
}

fn parse_number(bytes: &[u8], i: &mut usize, base: usize) -> Result<f64, SvgError> {
    while *i < bytes.len() && bytes[*i].is_ascii_whitespace() {
        *i += 1;
    }
    let start = *i;
    while *i < bytes.len() && matches!(bytes[*i], b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E') {
        *i += 1;
    }
    let text = std::str::from_utf8(&bytes[start..*i]).unwrap_or("");
    if text.is_empty() {
        return Err(SvgError::Parse {
            offset: base + start,
            reason: "expected a number".into(),
        });
    }
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| SvgError::Parse {
            offset: base + start,
            reason: format!("invalid number {text:?}"),
        })
}
