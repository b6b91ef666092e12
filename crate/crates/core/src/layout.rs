//! Layout-preserving text reconstruction from OCR block output.
//!
//! OCR engines emit positioned text blocks (a quadrilateral, the text,
//! a confidence). Reconstruction sorts blocks into reading order, groups
//! them into lines by vertical-center proximity, and re-inserts
//! horizontal spacing proportional to the pixel gaps, so downstream
//! prompts see text shaped like the original page. Text-native sources
//! bypass all of this and pass through verbatim.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Fraction of page height used as the vertical line-break threshold.
pub const LINE_BREAK_RATIO: f64 = 0.015;
/// Fraction of page width that equals one space of horizontal gap.
pub const SPACE_UNIT_RATIO: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextBlock {
    pub quad: [Point; 4],
    pub text: String,
    pub confidence: f64,
}

impl TextBlock {
    pub fn center_x(&self) -> f64 {
        let xs = self.quad.iter().map(|p| p.x);
        (fold_min(xs.clone()) + fold_max(xs)) / 2.0
    }

    pub fn center_y(&self) -> f64 {
        let ys = self.quad.iter().map(|p| p.y);
        (fold_min(ys.clone()) + fold_max(ys)) / 2.0
    }

    pub fn left(&self) -> f64 {
        fold_min(self.quad.iter().map(|p| p.x))
    }

    pub fn right(&self) -> f64 {
        fold_max(self.quad.iter().map(|p| p.x))
    }
}

fn fold_min(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

fn fold_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

/// Horizontal center of a block: midpoint of the quad's x extent.
pub fn block_center_x(block: &TextBlock) -> f64 {
    block.center_x()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageGeometry {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrPage {
    pub geometry: PageGeometry,
    pub blocks: Vec<TextBlock>,
    pub page_index: usize,
}

/// Reconstructed page text. Lines are top-to-bottom and contain no
/// newline characters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutText {
    pub lines: Vec<String>,
    pub page_index: usize,
}

impl LayoutText {
    pub fn to_text(&self) -> String {
        self.lines.join("\n")
    }
}

/// Vertical distance below which two consecutive blocks share a line.
pub fn line_break_threshold(geometry: &PageGeometry) -> Result<f64> {
    if !(geometry.height > 0.0) || !geometry.height.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "page height must be positive, got {}",
            geometry.height
        )));
    }
    Ok(geometry.height * LINE_BREAK_RATIO)
}

/// Space count between two horizontally adjacent blocks: the pixel gap
/// in units of 1% page width, floored, never less than one space.
pub fn block_spacing(x_current: f64, x_last: f64, width: f64) -> Result<usize> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "page width must be positive, got {width}"
        )));
    }
    let unit = width * SPACE_UNIT_RATIO;
    let spaces = ((x_current - x_last) / unit).floor();
    if spaces < 1.0 {
        Ok(1)
    } else {
        Ok(spaces as usize)
    }
}

/// Rebuilds page text from positioned blocks.
///
/// Blocks are sorted by (y_center, x_center, text); a block joins the
/// current line when its vertical center is within the threshold of the
/// previous block's (chained grouping). Within a line, blocks are ordered
/// by (x_center, text) and joined with `block_spacing` spaces measured
/// from the previous block's right edge to the current block's left edge.
pub fn reconstruct_layout(page: &OcrPage) -> Result<LayoutText> {
    let threshold = line_break_threshold(&page.geometry)?;
    if !(page.geometry.width > 0.0) || !page.geometry.width.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "page width must be positive, got {}",
            page.geometry.width
        )));
    }

    let mut sorted: Vec<&TextBlock> = page.blocks.iter().collect();
    sorted.sort_by(|a, b| {
        a.center_y()
            .total_cmp(&b.center_y())
            .then(a.center_x().total_cmp(&b.center_x()))
            .then(a.text.cmp(&b.text))
    });

    let mut groups: Vec<Vec<&TextBlock>> = Vec::new();
    for block in sorted {
        match groups.last_mut() {
            Some(line) => {
                let prev = *line.last().expect("line groups are non-empty");
                if (block.center_y() - prev.center_y()).abs() <= threshold {
                    line.push(block);
                } else {
                    groups.push(vec![block]);
                }
            }
            None => groups.push(vec![block]),
        }
    }

    let mut lines = Vec::with_capacity(groups.len());
    for mut line in groups {
        line.sort_by(|a, b| {
            a.center_x()
                .total_cmp(&b.center_x())
                .then(a.text.cmp(&b.text))
        });
        let mut text = String::new();
        let mut prev_right: Option<f64> = None;
        for block in line {
            if let Some(last) = prev_right {
                let spaces = block_spacing(block.left(), last, page.geometry.width)?;
                text.extend(std::iter::repeat(' ').take(spaces));
            }
            text.push_str(&block.text);
            prev_right = Some(block.right());
        }
        lines.push(text);
    }

    Ok(LayoutText { lines, page_index: page.page_index })
}

/// Count of blocks whose confidence falls below `floor`. Low-confidence
/// blocks are kept in the output but reported so callers can flag pages.
pub fn low_confidence_count(page: &OcrPage, floor: f64) -> usize {
    page.blocks.iter().filter(|b| b.confidence < floor).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    PlainText,
    OcrBlocksJson,
}

impl std::str::FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "plain-text" | "txt" => Ok(SourceFormat::PlainText),
            "ocr-json" | "ocr-blocks-json" | "ocr" => Ok(SourceFormat::OcrBlocksJson),
            other => Err(Error::Config(format!("unknown source format `{other}`"))),
        }
    }
}

/// Reads a document into per-page text.
///
/// Plain text passes through verbatim; a form-feed character splits
/// pages (none means a single page 0). OCR block JSON is parsed and each
/// page reconstructed.
pub fn read_document(path: &Path, format: SourceFormat) -> Result<Vec<(usize, String)>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        SourceFormat::PlainText => Ok(split_plain_pages(&raw)),
        SourceFormat::OcrBlocksJson => {
            let pages = parse_ocr_json(&raw, &path.display().to_string())?;
            pages
                .iter()
                .map(|p| Ok((p.page_index, reconstruct_layout(p)?.to_text())))
                .collect()
        }
    }
}

fn split_plain_pages(raw: &str) -> Vec<(usize, String)> {
    if raw.contains('\u{c}') {
        raw.split('\u{c}')
            .enumerate()
            .map(|(i, s)| (i, s.to_string()))
            .collect()
    } else {
        vec![(0, raw.to_string())]
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    pages: Vec<RawPage>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPage {
    page_index: usize,
    width: f64,
    height: f64,
    blocks: Vec<RawBlock>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    quad: [[f64; 2]; 4],
    text: String,
    confidence: f64,
}

/// Parses the OCR block wire format and sanitizes it: coordinates are
/// clamped into the page box, empty-text blocks are dropped with a
/// warning, embedded newlines become spaces, confidence is clamped
/// into [0,1].
pub fn parse_ocr_json(raw: &str, context: &str) -> Result<Vec<OcrPage>> {
    let doc: RawDocument =
        serde_json::from_str(raw).map_err(|e| Error::parse_json(context, &e))?;
    let mut pages = Vec::with_capacity(doc.pages.len());
    for page in doc.pages {
        if !(page.width > 0.0) || !(page.height > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "{context}: page {} has non-positive dimensions {}x{}",
                page.page_index, page.width, page.height
            )));
        }
        let mut blocks = Vec::with_capacity(page.blocks.len());
        for block in page.blocks {
            let text = block.text.replace(['\n', '\r'], " ");
            if text.trim().is_empty() {
                log::warn!(
                    "{context}: dropping empty text block on page {}",
                    page.page_index
                );
                continue;
            }
            let quad = block.quad.map(|[x, y]| Point {
                x: clamp_coord(x, page.width),
                y: clamp_coord(y, page.height),
            });
            blocks.push(TextBlock {
                quad,
                text,
                confidence: block.confidence.clamp(0.0, 1.0),
            });
        }
        pages.push(OcrPage {
            geometry: PageGeometry { width: page.width, height: page.height },
            blocks,
            page_index: page.page_index,
        });
    }
    Ok(pages)
}

fn clamp_coord(v: f64, max: f64) -> f64 {
    if v.is_finite() {
        v.clamp(0.0, max)
    } else {
        0.0
    }
}
