//! Product line parsing and short-label to ontology-concept matching.
//!
//! Receipt labels are abbreviated and non-standard, so matching runs on
//! normalized tokens with abbreviation expansion and character-bigram
//! similarity against every denoting term of every concept.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::match_product_line;
use crate::geom::BBox;
use crate::layout::{BlockKind, TextBlock};
use crate::ocr::{repair_numeric, OcrBackend, RepairContext};
use crate::textmatch::{bigram_dice, normalize_tokens};

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("line does not match the product-line grammar: {0:?}")]
    NotAProductLine(String),
    #[error("ontology error: {0}")]
    OntologyError(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub category: String,
    pub label: String,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OntologyCategory {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ontology {
    pub schema: String,
    pub categories: Vec<OntologyCategory>,
    pub concepts: Vec<Concept>,
}

impl Ontology {
    pub fn new(
        categories: Vec<OntologyCategory>,
        concepts: Vec<Concept>,
    ) -> Result<Self, SemanticsError> {
        let o = Ontology { schema: "ontology-v1".into(), categories, concepts };
        o.validate()?;
        Ok(o)
    }

    pub fn load(path: &Path) -> Result<Self, SemanticsError> {
        let data = std::fs::read_to_string(path)
            .map_err(|e| SemanticsError::OntologyError(format!("{}: {e}", path.display())))?;
        let o: Ontology = serde_json::from_str(&data)
            .map_err(|e| SemanticsError::OntologyError(format!("{}: {e}", path.display())))?;
        if o.schema != "ontology-v1" {
            return Err(SemanticsError::OntologyError(format!("unknown schema {:?}", o.schema)));
        }
        o.validate()?;
        Ok(o)
    }

    fn validate(&self) -> Result<(), SemanticsError> {
        let mut ids = std::collections::BTreeSet::new();
        for c in &self.concepts {
            if !ids.insert(&c.id) {
                return Err(SemanticsError::OntologyError(format!("duplicate concept id {:?}", c.id)));
            }
            if c.terms.is_empty() {
                return Err(SemanticsError::OntologyError(format!("concept {:?} has no terms", c.id)));
            }
            if !self.categories.iter().any(|cat| cat.id == c.category) {
                return Err(SemanticsError::OntologyError(format!(
                    "concept {:?} references unknown category {:?}",
                    c.id, c.category
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Currency {
    EUR,
    USD,
    GBP,
    Unknown,
}

/// A parsed purchase line: label, quantity and prices in integer minor
/// units (cents).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductLine {
    pub raw_label: String,
    pub quantity: u32,
    pub unit_price_cents: Option<i64>,
    pub line_price_cents: i64,
    pub currency: Currency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum MatchResult {
    Matched { concept_id: String, score: f64 },
    NoMatch { best_score: f64 },
}

/// Token-level abbreviation expansion table.
#[derive(Debug, Clone, Default)]
pub struct AbbreviationTable {
    map: HashMap<String, String>,
}

impl AbbreviationTable {
    /// Parse a two-column TSV (abbreviation, expansion).
    pub fn from_tsv(text: &str) -> Self {
        let mut map = HashMap::new();
        for line in text.lines() {
            if let Some((abbr, full)) = line.split_once('\t') {
                let (abbr, full) = (abbr.trim(), full.trim());
                if !abbr.is_empty() && !full.is_empty() {
                    map.insert(abbr.to_uppercase(), full.to_uppercase());
                }
            }
        }
        AbbreviationTable { map }
    }

    /// The default table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_tsv(include_str!("../assets/abbreviations.tsv"))
    }

    pub fn expand(&self, token: &str) -> String {
        self.map.get(token).cloned().unwrap_or_else(|| token.to_string())
    }
}

/// Non-product lines that still carry a trailing price.
pub const DEFAULT_STOP_WORDS: &[&str] =
    &["TOTAL", "SOUS-TOTAL", "TVA", "CB", "ESPECES", "RENDU", "MONTANT"];

pub fn is_stopped_label(label: &str, stop_words: &[String]) -> bool {
    let first = normalize_tokens(label);
    match first.first() {
        Some(tok) => stop_words.iter().any(|s| crate::textmatch::normalize_compact(s) == *tok),
        None => true,
    }
}

fn parse_minor_units(amount: &str) -> i64 {
    let normalized = amount.replace(',', ".");
    let value: f64 = normalized.parse().unwrap_or(0.0);
    (value * 100.0).round() as i64
}

/// Parse one grammar-matching line into a [`ProductLine`]. A leading
/// `<int> x`/`<int>X` on the label becomes the quantity.
pub fn parse_product_line(line: &str) -> Result<ProductLine, SemanticsError> {
    let m = match_product_line(line)
        .ok_or_else(|| SemanticsError::NotAProductLine(line.to_string()))?;
    let line_price_cents = parse_minor_units(&m.amount);
    let currency = match m.currency.as_deref() {
        Some("€") | Some("EUR") => Currency::EUR,
        Some("$") => Currency::USD,
        Some("£") => Currency::GBP,
        _ => Currency::Unknown,
    };
    let (quantity, raw_label) = split_quantity(&m.label);
    let unit_price_cents = if quantity == 1 { Some(line_price_cents) } else { None };
    Ok(ProductLine { raw_label, quantity, unit_price_cents, line_price_cents, currency })
}

fn split_quantity(label: &str) -> (u32, String) {
    let re = regex::Regex::new(r"(?i)^([0-9]+)\s*x\s+(.+)$").unwrap();
    if let Some(caps) = re.captures(label) {
        if let Ok(q) = caps[1].parse::<u32>() {
            if q >= 1 {
                return (q, caps[2].trim().to_string());
            }
        }
    }
    (1, label.trim().to_string())
}

/// Canonical re-rendering of a parsed line; parsing it again yields the same
/// record.
pub fn render_product_line(p: &ProductLine) -> String {
    let amount = format!("{}.{:02}", p.line_price_cents / 100, p.line_price_cents % 100);
    let currency = match p.currency {
        Currency::EUR => "€",
        Currency::USD => "$",
        Currency::GBP => "£",
        Currency::Unknown => "",
    };
    let label = if p.quantity > 1 {
        format!("{} x {}", p.quantity, p.raw_label)
    } else {
        p.raw_label.clone()
    };
    format!("{label}  {amount}{currency}")
}

/// Normalize a short label for matching: tokens uppercased and
/// diacritics-folded, digits-only tokens dropped, abbreviations expanded.
pub fn normalize_label(label: &str, abbrev: &AbbreviationTable) -> Vec<String> {
    normalize_tokens(label)
        .into_iter()
        .filter(|t| !t.chars().all(|c| c.is_ascii_digit()))
        .flat_map(|t| {
            normalize_tokens(&abbrev.expand(&t))
        })
        .collect()
}

/// Similarity of a normalized label against one term: mean over label
/// tokens of the best per-token bigram dice against the term's tokens.
fn token_set_similarity(label_tokens: &[String], term_tokens: &[String]) -> f64 {
    if label_tokens.is_empty() || term_tokens.is_empty() {
        return 0.0;
    }
    let total: f64 = label_tokens
        .iter()
        .map(|lt| {
            term_tokens
                .iter()
                .map(|tt| bigram_dice(lt, tt))
                .fold(0.0, f64::max)
        })
        .sum();
    total / label_tokens.len() as f64
}

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.65;

/// Score a short label against every concept term and return the argmax
/// concept when it clears the threshold. Ties break on the smallest concept
/// id so matching is fully deterministic.
pub fn match_concept(
    label: &str,
    ontology: &Ontology,
    abbrev: &AbbreviationTable,
    threshold: f64,
) -> MatchResult {
    let tokens = normalize_label(label, abbrev);
    if tokens.is_empty() {
        return MatchResult::NoMatch { best_score: 0.0 };
    }
    // Space-free view of the label: spurious token splits (a common OCR
    // damage mode) vanish here, so each term is scored as the better of the
    // token-set similarity and the whole-string bigram similarity.
    let joined = tokens.concat();
    let mut best: Option<(&str, f64)> = None;
    for concept in &ontology.concepts {
        let score = concept
            .terms
            .iter()
            .map(|t| {
                token_set_similarity(&tokens, &normalize_tokens(t))
                    .max(crate::textmatch::bigram_dice(&joined, &crate::textmatch::normalize_compact(t)))
            })
            .fold(0.0, f64::max);
        let better = match best {
            None => true,
            Some((bid, bs)) => {
                score > bs + 1e-12
                    || ((score - bs).abs() <= 1e-12 && concept.id.as_str() < bid)
            }
        };
        if better {
            best = Some((&concept.id, score));
        }
    }
    match best {
        Some((id, score)) if score >= threshold => {
            MatchResult::Matched { concept_id: id.to_string(), score }
        }
        Some((_, score)) => MatchResult::NoMatch { best_score: score },
        None => MatchResult::NoMatch { best_score: 0.0 },
    }
}

/// A line the extractor had to skip, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedLine {
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub products: Vec<(ProductLine, MatchResult)>,
    pub skipped: Vec<SkippedLine>,
}

/// Walk the layout hierarchy top to bottom, OCR each full-width text line,
/// repair the price side, parse, filter non-product price lines and match
/// each label against the ontology.
pub fn extract_products(
    blocks: &[TextBlock],
    ocr: &dyn OcrBackend,
    ontology: &Ontology,
    abbrev: &AbbreviationTable,
    stop_words: &[String],
    threshold: f64,
) -> ExtractionReport {
    let mut products = Vec::new();
    let mut skipped = Vec::new();
    for region in full_width_line_regions(blocks) {
        for line in ocr.read_region(Some(&region)) {
            let text = line.text.trim_end();
            if text.is_empty() {
                continue;
            }
            let repaired = repair_price_side(text);
            let parsed = match parse_product_line(&repaired) {
                Ok(p) => p,
                Err(_) => {
                    if looks_priced(text) {
                        skipped.push(SkippedLine {
                            text: text.to_string(),
                            reason: "price grammar mismatch".into(),
                        });
                    }
                    continue;
                }
            };
            if is_stopped_label(&parsed.raw_label, stop_words) {
                continue;
            }
            let matched = match_concept(&parsed.raw_label, ontology, abbrev, threshold);
            products.push((parsed, matched));
        }
    }
    ExtractionReport { products, skipped }
}

/// Layout-free variant of [`extract_products`] for callers that only have a
/// plain text transcript (one printed line per text line): repair, parse,
/// filter and match each line in order.
pub fn extract_products_from_text(
    text: &str,
    ontology: &Ontology,
    abbrev: &AbbreviationTable,
    stop_words: &[String],
    threshold: f64,
) -> ExtractionReport {
    let mut products = Vec::new();
    let mut skipped = Vec::new();
    for line in text.lines() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let repaired = repair_price_side(line);
        let parsed = match parse_product_line(&repaired) {
            Ok(p) => p,
            Err(_) => {
                if looks_priced(line) {
                    skipped.push(SkippedLine {
                        text: line.to_string(),
                        reason: "price grammar mismatch".into(),
                    });
                }
                continue;
            }
        };
        if is_stopped_label(&parsed.raw_label, stop_words) {
            continue;
        }
        let matched = match_concept(&parsed.raw_label, ontology, abbrev, threshold);
        products.push((parsed, matched));
    }
    ExtractionReport { products, skipped }
}

/// Band-level line regions spanning the whole band width, ordered top to
/// bottom. Lines of sibling sub-blocks (label and price columns) merge into
/// one region per row so OCR returns the full printed line.
fn full_width_line_regions(blocks: &[TextBlock]) -> Vec<BBox> {
    let mut per_band: BTreeMap<usize, Vec<(i64, i64)>> = BTreeMap::new();
    for b in blocks {
        if b.kind != BlockKind::Line {
            continue;
        }
        let band = blocks[b.parent.unwrap()].parent.unwrap();
        per_band.entry(band).or_default().push((b.box_.y, b.box_.bottom()));
    }
    let mut out = Vec::new();
    for (band_idx, mut spans) in per_band {
        let band = &blocks[band_idx].box_;
        spans.sort_unstable();
        // Merge vertically overlapping spans from different sub-blocks.
        let mut merged: Vec<(i64, i64)> = Vec::new();
        for (y0, y1) in spans {
            match merged.last_mut() {
                Some(last) if y0 < last.1 => last.1 = last.1.max(y1),
                _ => merged.push((y0, y1)),
            }
        }
        for (y0, y1) in merged {
            out.push(BBox::new(band.x, y0, band.w, y1 - y0));
        }
    }
    out.sort_by_key(|b| (b.y, b.x));
    out
}

/// True when a line ends in something price-like even if the full grammar
/// failed; drives skip reporting.
fn looks_priced(text: &str) -> bool {
    let tail: String = text.chars().rev().take(8).collect::<String>().chars().rev().collect();
    tail.chars().filter(|c| c.is_ascii_digit()).count() >= 2
}

/// Repair OCR confusions on the price side of a line (everything after the
/// last multi-space gap). When the repaired line still fails the grammar,
/// retry with internal spaces stripped from the price token — a common OCR
/// damage mode — but only when the collapsed token keeps a decimal
/// separator or currency marker, so digit runs like phone numbers are never
/// promoted to prices.
fn repair_price_side(text: &str) -> String {
    let Some(idx) = text.rfind("  ") else {
        return text.to_string();
    };
    let (label, price) = text.split_at(idx);
    let repaired = format!("{label}{}", repair_numeric(price, RepairContext::PriceColumn));
    if parse_product_line(&repaired).is_ok() {
        return repaired;
    }
    let tail = price.trim_start();
    let gap = &price[..price.len() - tail.len()];
    let collapsed: String = tail.chars().filter(|c| !c.is_whitespace()).collect();
    if collapsed.contains(['.', ',']) || collapsed.contains(['€', '$', '£']) {
        let candidate = format!(
            "{label}{gap}{}",
            repair_numeric(&collapsed, RepairContext::PriceColumn)
        );
        if parse_product_line(&candidate).is_ok() {
            return candidate;
        }
    }
    repaired
}

pub fn default_stop_words() -> Vec<String> {
    DEFAULT_STOP_WORDS.iter().map(|s| s.to_string()).collect()
}
