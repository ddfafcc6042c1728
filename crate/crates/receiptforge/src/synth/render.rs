//! Renders one upright receipt strip: logo block, header, product lines and
//! totals, plus the matching line-level ground truth in strip coordinates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::BBox;
use crate::ocr::LineTruth;
use crate::raster::GrayImage;
use crate::semantics::Currency;
use crate::sign::{LogoAspect, StoreRecord};

use super::font;

pub const STRIP_W: usize = 400;
const MARGIN: usize = 8;
const SCALE: usize = 2;
const LINE_STEP: usize = 20; // 14 px of glyph + 6 px of leading
const SECTION_GAP: usize = 18; // extra blank rows between sections
const COLS: usize = 32; // monospace columns per line
pub const LOGO_H: usize = 80;
const PAPER: u8 = 245;
const INK: u8 = 20;
const LOGO_BG: u8 = 10;

/// One ground-truth purchased item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthProduct {
    pub label: String,
    pub concept_id: String,
    pub quantity: u32,
    pub line_price_cents: i64,
    pub currency: Currency,
}

pub struct StripRender {
    pub image: GrayImage,
    /// Text lines with boxes in strip coordinates, top to bottom.
    pub lines: Vec<LineTruth>,
    /// Logo block box in strip coordinates, when rendered.
    pub logo_box: Option<BBox>,
    pub products: Vec<TruthProduct>,
}

/// Logo pixel dimensions for an aspect class.
pub fn logo_dims(aspect: LogoAspect) -> (usize, usize) {
    match aspect {
        LogoAspect::Long => (3 * LOGO_H, LOGO_H),
        LogoAspect::Short => ((3 * LOGO_H) / 2, LOGO_H),
    }
}

/// Draw the logo block: solid dark rectangle, store-specific white stripe
/// pattern, and the store name knocked out in white. The stripe pitch keeps
/// the ten logos visually separable for template matching.
pub fn render_logo(store: &StoreRecord, store_index: usize) -> GrayImage {
    let (w, h) = logo_dims(store.logo_aspect);
    let mut px = vec![LOGO_BG; w * h];
    let pitch = 5 + store_index;
    for y in 0..12 {
        for x in 0..w {
            if (x / pitch) % 2 == (store_index % 2) {
                px[y * w + x] = PAPER;
                px[(h - 1 - y) * w + x] = PAPER;
            }
        }
    }
    let name: String = store.name.chars().take(w / ((font::GLYPH_W + 1) * SCALE)).collect();
    let tw = font::text_width(&name, SCALE);
    let tx = (w.saturating_sub(tw)) / 2;
    let ty = (h - font::line_height(SCALE)) / 2;
    font::draw_text(&mut px, w, h, tx, ty, &name, SCALE, PAPER);
    GrayImage::new(w, h, px)
}

fn format_phone(digits: &str) -> String {
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && i % 2 == 0 {
            out.push(' ');
        }
        out.push(c);
    }
    out
}

fn format_price(cents: i64) -> String {
    format!("{}.{:02}€", cents / 100, cents % 100)
}

/// Compose a monospace line with the price right-aligned to the last column.
fn priced_line(left: &str, cents: i64) -> String {
    let price = format_price(cents);
    let pad = COLS.saturating_sub(left.chars().count() + price.chars().count()).max(2);
    format!("{left}{}{price}", " ".repeat(pad))
}

struct Canvas {
    px: Vec<u8>,
    w: usize,
    h: usize,
    cursor: usize,
    lines: Vec<LineTruth>,
}

impl Canvas {
    fn text_line(&mut self, text: &str, x: usize) {
        let w = font::draw_text(&mut self.px, self.w, self.h, x, self.cursor, text, SCALE, INK);
        self.lines.push(LineTruth {
            box_: BBox::new(x as i64, self.cursor as i64, w.max(1) as i64, font::line_height(SCALE) as i64),
            text: text.trim_end().to_string(),
        });
        self.cursor += LINE_STEP;
    }

    fn centered_line(&mut self, text: &str) {
        let tw = font::text_width(text, SCALE);
        self.text_line(text, (self.w.saturating_sub(tw)) / 2);
    }

    fn section_gap(&mut self) {
        self.cursor += SECTION_GAP;
    }
}

/// Render the strip. `products` are (ontology index, print label, quantity,
/// unit price cents). `extra_bottom` appends blank paper below the footer
/// (used for frame-clipped scenes).
pub fn render_strip(
    store: &StoreRecord,
    store_index: usize,
    products: &[(String, String, u32, i64)], // (concept_id, print label, qty, unit cents)
    with_logo: bool,
    extra_bottom: usize,
    rng: &mut ChaCha8Rng,
) -> StripRender {
    let n_lines = 5 + products.len() + 4; // header + separator rows + totals
    let logo_extent = if with_logo { LOGO_H + MARGIN } else { 0 };
    let h = 2 * MARGIN + logo_extent + n_lines * LINE_STEP + 6 * SECTION_GAP + extra_bottom;
    let mut canvas = Canvas {
        px: vec![PAPER; STRIP_W * h],
        w: STRIP_W,
        h,
        cursor: MARGIN,
        lines: Vec::new(),
    };

    let mut logo_box = None;
    if with_logo {
        let logo = render_logo(store, store_index);
        let lx = (STRIP_W - logo.width()) / 2;
        for y in 0..logo.height() {
            for x in 0..logo.width() {
                canvas.px[(canvas.cursor + y) * STRIP_W + lx + x] = logo.get(x, y);
            }
        }
        logo_box = Some(BBox::new(
            lx as i64,
            canvas.cursor as i64,
            logo.width() as i64,
            logo.height() as i64,
        ));
        canvas.cursor += LOGO_H + MARGIN;
    }

    canvas.centered_line(&store.name);
    canvas.centered_line(&format!("TEL: {}", format_phone(&store.phone_numbers[0])));
    canvas.centered_line(&store.terminology[0]);
    canvas.section_gap();
    canvas.text_line(&"*".repeat(COLS), MARGIN);
    canvas.section_gap();

    let mut truth_products = Vec::new();
    let mut total = 0i64;
    for (concept_id, label, qty, unit_cents) in products {
        let line_cents = *unit_cents * *qty as i64;
        total += line_cents;
        let left = if *qty > 1 { format!("{qty} X {label}") } else { label.clone() };
        canvas.text_line(&priced_line(&left, line_cents), MARGIN);
        truth_products.push(TruthProduct {
            label: label.clone(),
            concept_id: concept_id.clone(),
            quantity: *qty,
            line_price_cents: line_cents,
            currency: Currency::EUR,
        });
    }
    canvas.section_gap();
    canvas.text_line(&"*".repeat(COLS), MARGIN);
    canvas.section_gap();
    canvas.text_line(&priced_line("TOTAL", total), MARGIN);
    let by_card = rng.gen_bool(0.5);
    canvas.text_line(&priced_line(if by_card { "CB" } else { "ESPECES" }, total), MARGIN);
    canvas.section_gap();
    canvas.centered_line("MERCI DE VOTRE VISITE");

    StripRender {
        image: GrayImage::new(STRIP_W, h, canvas.px),
        lines: canvas.lines,
        logo_box,
        products: truth_products,
    }
}
