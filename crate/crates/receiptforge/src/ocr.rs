//! OCR backend contract plus the pieces that let the pipeline run without a
//! commercial OCR: a ground-truth stub, a seeded noise injector modelling
//! real OCR damage, and context-aware character-confusion repair.

use std::hash::{Hash, Hasher};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::BBox;

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("oracle load error: {0}")]
    OracleLoadError(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrLine {
    pub text: String,
    pub confidence: f64,
}

/// Black-box text recognizer: returns the lines of the image (or of a region
/// of it), ordered top to bottom.
pub trait OcrBackend: Send + Sync {
    fn read_region(&self, region: Option<&BBox>) -> Vec<OcrLine>;

    fn read_all_text(&self) -> String {
        let lines: Vec<String> = self.read_region(None).into_iter().map(|l| l.text).collect();
        lines.join("\n")
    }
}

/// One ground-truth text line with its box in receipt-local coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineTruth {
    pub box_: BBox,
    pub text: String,
}

/// OCR stub replaying ground-truth lines. A region query returns every line
/// whose box overlaps the region by at least half of the line box area.
pub struct StubOcr {
    lines: Vec<LineTruth>,
}

impl StubOcr {
    pub fn new(mut lines: Vec<LineTruth>) -> Self {
        lines.sort_by_key(|l| (l.box_.y, l.box_.x));
        StubOcr { lines }
    }

    /// Load from a JSON sidecar holding an array of [`LineTruth`].
    pub fn from_sidecar(path: &Path) -> Result<Self, OcrError> {
        let data = std::fs::read_to_string(path)
            .map_err(|e| OcrError::OracleLoadError(format!("{}: {e}", path.display())))?;
        let lines: Vec<LineTruth> = serde_json::from_str(&data)
            .map_err(|e| OcrError::OracleLoadError(format!("{}: {e}", path.display())))?;
        Ok(StubOcr::new(lines))
    }
}

impl OcrBackend for StubOcr {
    fn read_region(&self, region: Option<&BBox>) -> Vec<OcrLine> {
        self.lines
            .iter()
            .filter(|l| match region {
                None => true,
                Some(r) => {
                    let inter = r.intersection(&l.box_).map_or(0, |b| b.area());
                    2 * inter >= l.box_.area()
                }
            })
            .map(|l| OcrLine { text: l.text.clone(), confidence: 1.0 })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Confusion table and repair
// ---------------------------------------------------------------------------

/// Bidirectional letter/digit confusion pairs. Swaps never change string
/// length.
#[derive(Debug, Clone)]
pub struct ConfusionTable {
    to_digit: Vec<(char, char)>,
    to_alpha: Vec<(char, char)>,
}

impl Default for ConfusionTable {
    fn default() -> Self {
        ConfusionTable {
            to_digit: vec![('I', '1'), ('l', '1'), ('O', '0'), ('o', '0'), ('S', '5'), ('B', '8')],
            to_alpha: vec![('1', 'I'), ('0', 'O'), ('5', 'S'), ('8', 'B')],
        }
    }
}

impl ConfusionTable {
    pub fn digit_for(&self, c: char) -> Option<char> {
        self.to_digit.iter().find(|p| p.0 == c).map(|p| p.1)
    }

    pub fn alpha_for(&self, c: char) -> Option<char> {
        self.to_alpha.iter().find(|p| p.0 == c).map(|p| p.1)
    }

    /// Swap in either direction, if the character has a counterpart.
    pub fn swap(&self, c: char) -> Option<char> {
        self.digit_for(c).or_else(|| self.alpha_for(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairContext {
    PriceColumn,
    FreeText,
}

fn price_shaped(token: &str) -> bool {
    crate::detect::product_line_regex()
        .is_match(&format!("XX  {token}"))
}

/// Map alphabetic confusables to digits inside numeric tokens of a price
/// column. A token is only rewritten when it contains at least one digit,
/// its non-confusable characters are all non-alphabetic, and the rewritten
/// token passes the price grammar; anything else is left alone, as is all
/// free text.
pub fn repair_numeric(text: &str, context: RepairContext) -> String {
    if context == RepairContext::FreeText {
        return text.to_string();
    }
    let table = ConfusionTable::default();
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while !rest.is_empty() {
        let token_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        if token_end == 0 {
            let mut chars = rest.chars();
            out.push(chars.next().unwrap());
            rest = chars.as_str();
            continue;
        }
        let token = &rest[..token_end];
        out.push_str(&repair_token(token, &table));
        rest = &rest[token_end..];
    }
    out
}

fn repair_token(token: &str, table: &ConfusionTable) -> String {
    let digits = token.chars().filter(|c| c.is_ascii_digit()).count();
    let stray_alpha = token
        .chars()
        .filter(|c| c.is_alphabetic() && table.digit_for(*c).is_none())
        .count();
    if digits == 0 || stray_alpha > 0 {
        return token.to_string();
    }
    let repaired: String = token
        .chars()
        .map(|c| table.digit_for(c).unwrap_or(c))
        .collect();
    if price_shaped(&repaired) {
        repaired
    } else {
        token.to_string()
    }
}

// ---------------------------------------------------------------------------
// Noise injection
// ---------------------------------------------------------------------------

/// Wraps another backend and damages each character with the given
/// probability, choosing uniformly among a confusion swap, a deletion and a
/// space insertion. Randomness derives from (seed, region coordinates) so
/// concurrent calls stay deterministic.
pub struct NoisyOcr<B> {
    inner: B,
    rate: f64,
    seed: u64,
}

impl<B: OcrBackend> NoisyOcr<B> {
    pub fn new(inner: B, rate: f64, seed: u64) -> Self {
        assert!((0.0..=0.3).contains(&rate), "noise rate must be in [0, 0.3]");
        NoisyOcr { inner, rate, seed }
    }
}

/// Apply per-character damage; returns the damaged string and the number of
/// edit operations performed.
pub fn corrupt_text(text: &str, rate: f64, rng: &mut impl Rng) -> (String, usize) {
    let table = ConfusionTable::default();
    let mut out = String::with_capacity(text.len() + 4);
    let mut ops = 0usize;
    for c in text.chars() {
        if rate > 0.0 && rng.gen_bool(rate) {
            ops += 1;
            // When the character has no confusion counterpart, fall back to
            // the two always-applicable damage kinds.
            let kinds: &[u8] = if table.swap(c).is_some() { &[0, 1, 2] } else { &[1, 2] };
            match kinds[rng.gen_range(0..kinds.len())] {
                0 => out.push(table.swap(c).unwrap()),
                1 => {} // deletion
                _ => {
                    out.push(' ');
                    out.push(c);
                }
            }
        } else {
            out.push(c);
        }
    }
    (out, ops)
}

fn region_seed(seed: u64, region: Option<&BBox>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    seed.hash(&mut h);
    if let Some(r) = region {
        (r.x, r.y, r.w, r.h).hash(&mut h);
    }
    h.finish()
}

impl<B: OcrBackend> OcrBackend for NoisyOcr<B> {
    fn read_region(&self, region: Option<&BBox>) -> Vec<OcrLine> {
        let mut rng = ChaCha8Rng::seed_from_u64(region_seed(self.seed, region));
        self.inner
            .read_region(region)
            .into_iter()
            .map(|l| {
                let (text, _) = corrupt_text(&l.text, self.rate, &mut rng);
                OcrLine { text, confidence: l.confidence * (1.0 - self.rate) }
            })
            .collect()
    }
}
