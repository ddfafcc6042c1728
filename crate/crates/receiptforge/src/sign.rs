//! Store sign recognition: three text criteria over the OCR output, logo
//! localization and classification on the rectified receipt, and the
//! rule-based fusion that either accepts a store or routes the receipt to
//! human review.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{infer_heatmap, ClassifierBackend, SegmentationBackend};
use crate::geom::BBox;
use crate::layout::{self, LayoutParams};
use crate::raster::GrayImage;
use crate::textmatch::{best_window_score, normalize_compact};

#[derive(Debug, Error)]
pub enum SignError {
    #[error("store db config error: {0}")]
    ConfigError(String),
    #[error("backend error: {0}")]
    Backend(#[from] crate::backends::BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogoAspect {
    Long,
    Short,
}

/// One store brand: the name variants, phone numbers and terminology the
/// text criteria match against, plus logo and layout priors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreRecord {
    pub store_id: String,
    pub name: String,
    pub name_variants: Vec<String>,
    pub phone_numbers: Vec<String>,
    pub terminology: Vec<String>,
    pub logo_aspect: LogoAspect,
    #[serde(default)]
    pub layout_priors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreDb {
    pub schema: String,
    pub stores: Vec<StoreRecord>,
}

impl StoreDb {
    pub fn new(stores: Vec<StoreRecord>) -> Result<Self, SignError> {
        let db = StoreDb { schema: "storedb-v1".into(), stores };
        db.validate()?;
        Ok(db)
    }

    pub fn load(path: &Path) -> Result<Self, SignError> {
        let data = std::fs::read_to_string(path)
            .map_err(|e| SignError::ConfigError(format!("{}: {e}", path.display())))?;
        let db: StoreDb = serde_json::from_str(&data)
            .map_err(|e| SignError::ConfigError(format!("{}: {e}", path.display())))?;
        if db.schema != "storedb-v1" {
            return Err(SignError::ConfigError(format!("unknown schema {:?}", db.schema)));
        }
        db.validate()?;
        Ok(db)
    }

    fn validate(&self) -> Result<(), SignError> {
        let mut seen_terms: BTreeSet<String> = BTreeSet::new();
        for s in &self.stores {
            if s.name_variants.is_empty() {
                return Err(SignError::ConfigError(format!(
                    "store {} has no name variants",
                    s.store_id
                )));
            }
            for p in &s.phone_numbers {
                if !(6..=15).contains(&p.len()) || !p.chars().all(|c| c.is_ascii_digit()) {
                    return Err(SignError::ConfigError(format!(
                        "store {} phone {p:?} must be 6-15 digits",
                        s.store_id
                    )));
                }
            }
            // Terminology phrases must be unique across stores; they are
            // decisive on their own.
            for t in &s.terminology {
                let norm = normalize_compact(t);
                if !seen_terms.insert(norm) {
                    return Err(SignError::ConfigError(format!(
                        "terminology phrase {t:?} appears in more than one store"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, store_id: &str) -> Option<&StoreRecord> {
        self.stores.iter().find(|s| s.store_id == store_id)
    }
}

/// Weighted store candidates from the text criteria, sorted by weight
/// descending then store id ascending. Each weight counts the distinct
/// criteria that named the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignEvidence(pub Vec<(String, u8)>);

impl SignEvidence {
    pub fn weight_of(&self, store_id: &str) -> u8 {
        self.0.iter().find(|(s, _)| s == store_id).map_or(0, |(_, w)| *w)
    }

    pub fn top(&self) -> Option<&(String, u8)> {
        self.0.first()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignConfig {
    /// Bigram-dice acceptance threshold for the name criterion.
    pub name_threshold: f64,
    /// Stricter threshold for terminology phrases, decisive on their own.
    pub terminology_threshold: f64,
    /// Window length slack around the variant length, in characters.
    pub window_slack: usize,
    /// Horizontal shrink factor for long (about 3:1) logos.
    pub long_ratio: f64,
    /// Horizontal shrink factor for short (about 1.5:1) logos.
    pub short_ratio: f64,
    /// Minimum logo-class cell score during localization.
    pub logo_cell_threshold: f64,
    pub logo_class: String,
}

impl Default for SignConfig {
    fn default() -> Self {
        SignConfig {
            name_threshold: 0.75,
            terminology_threshold: 0.85,
            window_slack: 2,
            long_ratio: 3.0,
            short_ratio: 1.5,
            logo_cell_threshold: 0.70,
            logo_class: "logo".into(),
        }
    }
}

// ---------------------------------------------------------------------------
// Text criteria
// ---------------------------------------------------------------------------

/// Store name criterion: best fuzzy window match of any name variant over
/// the normalized text lines; every store reaching both the threshold and
/// the best score is a candidate (ties keep all).
pub fn criterion_name(text: &str, db: &StoreDb, cfg: &SignConfig) -> Vec<String> {
    let lines: Vec<String> = text.lines().map(normalize_compact).collect();
    let mut best: Vec<(String, f64)> = Vec::new();
    for store in &db.stores {
        let mut score: f64 = 0.0;
        for variant in &store.name_variants {
            let needle = normalize_compact(variant);
            for line in &lines {
                score = score.max(best_window_score(line, &needle, cfg.window_slack));
            }
        }
        if score >= cfg.name_threshold {
            best.push((store.store_id.clone(), score));
        }
    }
    let top = best.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<String> = best
        .into_iter()
        .filter(|(_, s)| (top - *s).abs() < 1e-12)
        .map(|(id, _)| id)
        .collect();
    out.sort();
    out
}

fn phone_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\+?[0-9][0-9 ./()\-]{4,}[0-9]").unwrap())
}

/// Map OCR letter confusables to digits so a damaged phone number still
/// forms a digit run.
fn digitize_confusables(text: &str) -> String {
    let table = crate::ocr::ConfusionTable::default();
    text.chars().map(|c| table.digit_for(c).unwrap_or(c)).collect()
}

/// Phone criterion: digit groups shaped like phone numbers, compared exactly
/// against the store phone database after separator stripping. Format alone
/// never identifies a store.
pub fn criterion_phone(text: &str, db: &StoreDb) -> Vec<String> {
    let mut out = BTreeSet::new();
    let searchable = digitize_confusables(text);
    for m in phone_regex().find_iter(&searchable) {
        let digits: String = m.as_str().chars().filter(|c| c.is_ascii_digit()).collect();
        if !(6..=15).contains(&digits.len()) {
            continue;
        }
        for store in &db.stores {
            if store.phone_numbers.iter().any(|p| *p == digits) {
                out.insert(store.store_id.clone());
            }
        }
    }
    out.into_iter().collect()
}

/// Terminology criterion: a slogan/loyalty/distributor phrase found in a
/// same-length normalized window identifies its store.
pub fn criterion_terminology(text: &str, db: &StoreDb, cfg: &SignConfig) -> Vec<String> {
    let lines: Vec<String> = text.lines().map(normalize_compact).collect();
    let mut out = BTreeSet::new();
    for store in &db.stores {
        'phrases: for phrase in &store.terminology {
            let needle = normalize_compact(phrase);
            for line in &lines {
                if best_window_score(line, &needle, cfg.window_slack)
                    >= cfg.terminology_threshold
                {
                    out.insert(store.store_id.clone());
                    break 'phrases;
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Combine the three criteria into the weighted evidence list.
pub fn aggregate_text_evidence(c1: &[String], c2: &[String], c3: &[String]) -> SignEvidence {
    let mut weights: Vec<(String, u8)> = Vec::new();
    for set in [c1, c2, c3] {
        let unique: BTreeSet<&String> = set.iter().collect();
        for id in unique {
            match weights.iter_mut().find(|(s, _)| s == id) {
                Some(entry) => entry.1 += 1,
                None => weights.push((id.clone(), 1)),
            }
        }
    }
    weights.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    SignEvidence(weights)
}

// ---------------------------------------------------------------------------
// Logo localization and classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Upright,
    Inverted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogoResult {
    /// Crop box in rectified-receipt coordinates.
    pub box_: BBox,
    pub store_id: String,
    pub probability: f64,
    pub orientation: Orientation,
    pub used_ratio: LogoAspect,
}

struct Attempt {
    lower: bool,
    aspect: LogoAspect,
    ratio: f64,
}

/// Search for the store logo: upper half first (long then short resize
/// ratio), lower half only when the upper half yields nothing. A lower-half
/// hit means the receipt is upside down.
pub fn locate_logo(
    receipt: &GrayImage,
    seg: &dyn SegmentationBackend,
    cls: &dyn ClassifierBackend,
    cfg: &SignConfig,
) -> Result<Option<LogoResult>, SignError> {
    let attempts = [
        Attempt { lower: false, aspect: LogoAspect::Long, ratio: cfg.long_ratio },
        Attempt { lower: false, aspect: LogoAspect::Short, ratio: cfg.short_ratio },
        Attempt { lower: true, aspect: LogoAspect::Long, ratio: cfg.long_ratio },
        Attempt { lower: true, aspect: LogoAspect::Short, ratio: cfg.short_ratio },
    ];
    let half_h = receipt.height() / 2;
    if half_h == 0 {
        return Ok(None);
    }
    for attempt in attempts {
        let y_off = if attempt.lower { receipt.height() - half_h } else { 0 };
        let half = receipt.crop(&BBox::new(0, y_off as i64, receipt.width() as i64, half_h as i64));
        // Search the lower half upside down: an inverted receipt's logo then
        // sits near the top of the search image, where the sliding grid has
        // full coverage, and candidate crops are already template-upright.
        let half = if attempt.lower { half.rotate180() } else { half };
        // Shrink horizontally so a logo of this aspect class becomes roughly
        // square inside one window.
        let squashed_w = ((half.width() as f64 / attempt.ratio).round() as usize).max(1);
        let squashed = half.resize(squashed_w, half.height());
        let hm = infer_heatmap(&squashed, seg)?;
        let Some(class) = hm.class_index(&cfg.logo_class) else {
            return Err(SignError::ConfigError(format!(
                "segmentation backend lacks class {:?}",
                cfg.logo_class
            )));
        };
        let positive: Vec<(usize, usize)> = (0..hm.grid_h)
            .flat_map(|i| (0..hm.grid_w).map(move |j| (i, j)))
            .filter(|&(i, j)| hm.score(i, j, class) >= cfg.logo_cell_threshold)
            .collect();
        if positive.is_empty() {
            continue;
        }
        // Group adjacent positive cells; each group's window union is a
        // candidate region.
        let mut best: Option<(BBox, String, f64)> = None;
        for group in connected_groups(&positive) {
            let mut region = hm.cell_window(group[0].0, group[0].1);
            for &(i, j) in &group[1..] {
                region = region.union_box(&hm.cell_window(i, j));
            }
            let region = region.clamped(squashed.width() as i64, squashed.height() as i64);
            // Tighten to the ink extent; the coarse cell grid over-crops.
            let region = ink_tight(&squashed, &region).unwrap_or(region);
            let crop = squashed.crop(&region);
            let ranked = cls.ranked(&crop);
            let (label, prob) = ranked[0].clone();
            if best.as_ref().map_or(true, |(_, _, p)| prob > *p) {
                best = Some((region, label, prob));
            }
        }
        if let Some((region, label, prob)) = best {
            // Map the region back to rectified-receipt coordinates,
            // undoing the squash and, for lower-half hits, the rotation.
            let scale = half.width() as f64 / squashed.width() as f64;
            let x = (region.x as f64 * scale).round() as i64;
            let w = (region.w as f64 * scale).round() as i64;
            let (x, y) = if attempt.lower {
                (half.width() as i64 - x - w, half_h as i64 - region.bottom())
            } else {
                (x, region.y)
            };
            let box_ = BBox::new(x, y + y_off as i64, w.max(1), region.h)
                .clamped(receipt.width() as i64, receipt.height() as i64);
            return Ok(Some(LogoResult {
                box_,
                store_id: label,
                probability: prob,
                orientation: if attempt.lower { Orientation::Inverted } else { Orientation::Upright },
                used_ratio: attempt.aspect,
            }));
        }
    }
    Ok(None)
}

fn connected_groups(cells: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut visited = vec![false; cells.len()];
    for start in 0..cells.len() {
        if visited[start] {
            continue;
        }
        let mut group = vec![cells[start]];
        visited[start] = true;
        let mut stack = vec![cells[start]];
        while let Some((i, j)) = stack.pop() {
            for (k, &(ci, cj)) in cells.iter().enumerate() {
                if !visited[k] && ci.abs_diff(i) + cj.abs_diff(j) == 1 {
                    visited[k] = true;
                    group.push((ci, cj));
                    stack.push((ci, cj));
                }
            }
        }
        groups.push(group);
    }
    groups
}

/// Bounding box of dark pixels inside a region.
fn ink_tight(img: &GrayImage, region: &BBox) -> Option<BBox> {
    let (mut x0, mut y0) = (i64::MAX, i64::MAX);
    let (mut x1, mut y1) = (i64::MIN, i64::MIN);
    for y in region.y..region.bottom() {
        for x in region.x..region.right() {
            if img.get(x as usize, y as usize) < 100 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == i64::MAX {
        None
    } else {
        Some(BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }
}

/// Refine a wide logo crop: binarize, cut ink-tight sub-boxes via row and
/// column projections, classify every sub-box plus the original crop, and
/// keep the best. The original is always among the candidates, so the
/// returned probability never drops below direct classification.
pub fn refine_logo_crop(crop: &GrayImage, cls: &dyn ClassifierBackend) -> (String, f64) {
    let params = LayoutParams::default();
    let mask = layout::adaptive_binarize(crop, &params.binarize);
    let mut candidates: Vec<GrayImage> = vec![crop.clone()];
    let blocks = layout::build_hierarchy(&mask, &[], &params);
    for b in blocks {
        if b.kind != crate::layout::BlockKind::Line && b.box_.area() > 0 {
            candidates.push(crop.crop(&b.box_));
        }
    }
    let mut best: Option<(String, f64)> = None;
    for cand in &candidates {
        let ranked = cls.ranked(cand);
        let (label, prob) = ranked[0].clone();
        if best.as_ref().map_or(true, |(_, p)| prob > *p) {
            best = Some((label, prob));
        }
    }
    best.unwrap()
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptBasis {
    TextUnanimous,
    Text2PlusLogo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SignDecision {
    Accepted {
        store_id: String,
        basis: AcceptBasis,
    },
    NeedsHumanReview {
        evidence: SignEvidence,
        logo_store: Option<String>,
    },
}

/// The two acceptance rules: all three text criteria agree, or the logo
/// confirms a store already named by at least two criteria. Anything else is
/// human review.
pub fn fuse_sign(evidence: &SignEvidence, logo: Option<&LogoResult>) -> SignDecision {
    if let Some((store, 3)) = evidence.top().map(|(s, w)| (s.clone(), *w)) {
        return SignDecision::Accepted { store_id: store, basis: AcceptBasis::TextUnanimous };
    }
    if let Some(logo) = logo {
        if evidence.weight_of(&logo.store_id) >= 2 {
            return SignDecision::Accepted {
                store_id: logo.store_id.clone(),
                basis: AcceptBasis::Text2PlusLogo,
            };
        }
    }
    SignDecision::NeedsHumanReview {
        evidence: evidence.clone(),
        logo_store: logo.map(|l| l.store_id.clone()),
    }
}
