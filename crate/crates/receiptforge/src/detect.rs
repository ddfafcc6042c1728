//! Receipt presence decision: a text path looking for at least one product
//! line and an image path thresholding the receipt heatmap, fused with
//! logical OR so that no receipt is missed.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::HeatMap;

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("heatmap has no class {0:?}")]
    ClassMismatch(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Heatmap binarization threshold as a fraction of full scale.
    pub heat_threshold: f64,
    /// Minimum positive-cell fraction for an image hit.
    pub receipt_ratio: f64,
    pub target_class: String,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            heat_threshold: 0.70,
            receipt_ratio: 0.25,
            target_class: "receipt".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub text_hit: bool,
    pub image_hit: bool,
    pub fused: bool,
    pub positive_ratio: f64,
    pub product_line_count: usize,
}

/// Product-line grammar, versioned so it can be tightened without code
/// changes elsewhere: a label of letters/digits/limited punctuation, a gap of
/// two or more spaces (or tabs), and a trailing price token with an optional
/// adjacent currency symbol.
pub const PRODUCT_LINE_PATTERN_V1: &str = concat!(
    r"(?i)^(?P<label>[a-z0-9 .,'\-/%*]{2,40}?)",
    r"(?:[ ]{2,}|\t+)",
    r"(?P<currency_pre>€|\$|£|eur)?(?P<amount>[0-9]+(?:[.,][0-9]{1,2})?)(?P<currency_post>€|\$|£|eur)?$",
);

pub(crate) fn product_line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(PRODUCT_LINE_PATTERN_V1).unwrap())
}

/// Structural captures of a matched product line.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductLineMatch {
    pub label: String,
    pub amount: String,
    pub currency: Option<String>,
}

pub(crate) fn match_product_line(line: &str) -> Option<ProductLineMatch> {
    let line = line.trim_end();
    let caps = product_line_regex().captures(line)?;
    let label = caps.name("label").unwrap().as_str();
    // The label charset allows digits and punctuation; require at least two
    // letters so bare numeric rows do not count as product lines.
    if label.chars().filter(|c| c.is_ascii_alphabetic()).count() < 2 {
        return None;
    }
    let pre = caps.name("currency_pre");
    let post = caps.name("currency_post");
    if pre.is_some() && post.is_some() {
        return None; // at most one currency marker
    }
    Some(ProductLineMatch {
        label: label.trim().to_string(),
        amount: caps.name("amount").unwrap().as_str().to_string(),
        currency: pre.or(post).map(|m| m.as_str().to_uppercase()),
    })
}

/// Spans (line index, byte range) of the lines matching the product-line
/// grammar.
pub fn find_product_lines(text: &str) -> Vec<(usize, Range<usize>)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (idx, line) in text.lines().enumerate() {
        if match_product_line(line).is_some() {
            out.push((idx, offset..offset + line.len()));
        }
        offset += line.len() + 1;
    }
    out
}

/// True iff the decoded text contains at least one product line.
pub fn detect_by_text(text: &str) -> bool {
    text.lines().any(|l| match_product_line(l).is_some())
}

/// Binarize the target-class channel at the heat threshold (inclusive) and
/// compare the positive-cell fraction against the receipt ratio.
pub fn detect_by_image(hm: &HeatMap, cfg: &DetectionConfig) -> Result<(bool, f64), DetectError> {
    let class = hm
        .class_index(&cfg.target_class)
        .ok_or_else(|| DetectError::ClassMismatch(cfg.target_class.clone()))?;
    let total = hm.cell_count();
    let mut positive = 0usize;
    for i in 0..hm.grid_h {
        for j in 0..hm.grid_w {
            if hm.score(i, j, class) >= cfg.heat_threshold {
                positive += 1;
            }
        }
    }
    let ratio = if total == 0 { 0.0 } else { positive as f64 / total as f64 };
    Ok((ratio >= cfg.receipt_ratio, ratio))
}

pub fn fuse_detection(text_hit: bool, image_hit: bool) -> bool {
    text_hit || image_hit
}

pub fn verdict(
    text_hit: bool,
    image_hit: bool,
    positive_ratio: f64,
    product_line_count: usize,
) -> DetectionVerdict {
    DetectionVerdict {
        text_hit,
        image_hit,
        fused: fuse_detection(text_hit, image_hit),
        positive_ratio,
        product_line_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::HeatMap;

    fn heatmap_with(positives: usize, total_cells: usize, pos_score: f64) -> HeatMap {
        let labels = vec!["receipt".to_string(), "not_receipt".to_string()];
        let mut scores = Vec::new();
        for i in 0..total_cells {
            let p = if i < positives { pos_score } else { 0.0 };
            scores.extend([p, 1.0 - p]);
        }
        HeatMap::new(total_cells, 1, 227, 227, labels, scores)
    }

    #[test]
    fn paper_example_line_matches() {
        assert!(detect_by_text("BRICK LP        0.79€"));
        assert_eq!(find_product_lines("BRICK LP        0.79€").len(), 1);
    }

    #[test]
    fn empty_text_no_match() {
        assert_eq!(find_product_lines("").len(), 0);
        assert!(!detect_by_text(""));
    }

    #[test]
    fn grammar_accepts_and_rejects() {
        assert_eq!(find_product_lines("2 YAOURT NATURE   1,35").len(), 1);
        assert_eq!(find_product_lines("MERCI DE VOTRE VISITE").len(), 0);
        // Single-space prices are rejected to limit prose false hits.
        assert!(!detect_by_text("PRICE IS 3.50"));
        // Currency before the amount.
        assert!(detect_by_text("MILK JUG   $2.49"));
        assert!(detect_by_text("the milk jug\t\t2,49eur"));
        // Both-sides currency is not a price token.
        assert!(!detect_by_text("MILK JUG   $2.49€"));
        // Labels need at least two letters.
        assert!(!detect_by_text("12 34   5.00"));
        // More than two decimals is not a price.
        assert!(!detect_by_text("SOME ITEM   1.234"));
    }

    #[test]
    fn lorem_ipsum_is_not_a_receipt() {
        let prose = "Lorem ipsum dolor sit amet\nconsectetur adipiscing elit\nsed do eiusmod";
        assert!(!detect_by_text(prose));
    }

    #[test]
    fn one_valid_line_among_noise() {
        let mut text = String::new();
        for i in 0..100 {
            text.push_str(&format!("random prose line number {i} with no price\n"));
        }
        text.push_str("BRICK LP        0.79€\n");
        assert!(detect_by_text(&text));
        assert_eq!(find_product_lines(&text).len(), 1);
    }

    #[test]
    fn trailing_whitespace_invariance() {
        let a = find_product_lines("BRICK LP        0.79€");
        let b = find_product_lines("BRICK LP        0.79€   \t");
        assert_eq!(a.len(), b.len());
        assert_eq!(a[0].0, b[0].0);
    }

    #[test]
    fn image_detection_thresholds() {
        let cfg = DetectionConfig::default();
        // 30% of cells at 0.9.
        let hm = heatmap_with(30, 100, 0.9);
        assert_eq!(detect_by_image(&hm, &cfg).unwrap(), (true, 0.30));
        // All-zero heatmap.
        let hm = heatmap_with(0, 100, 0.0);
        assert_eq!(detect_by_image(&hm, &cfg).unwrap(), (false, 0.0));
        // 10% positive, consistent with the no-receipt regime.
        let hm = heatmap_with(10, 100, 0.9);
        assert_eq!(detect_by_image(&hm, &cfg).unwrap(), (false, 0.10));
    }

    #[test]
    fn boundary_is_inclusive_bit_exact() {
        let cfg = DetectionConfig::default();
        // Exactly 25.0% of cells at a score of exactly 0.70.
        let hm = heatmap_with(250, 1000, 0.70);
        assert_eq!(detect_by_image(&hm, &cfg).unwrap(), (true, 0.25));
        // 24.9% misses.
        let hm = heatmap_with(249, 1000, 0.70);
        assert_eq!(detect_by_image(&hm, &cfg).unwrap(), (false, 0.249));
        // Score 0.699 is below the threshold.
        let hm = heatmap_with(250, 1000, 0.699);
        assert!(!detect_by_image(&hm, &cfg).unwrap().0);
    }

    #[test]
    fn image_detection_monotone_in_scores() {
        let cfg = DetectionConfig::default();
        let mut hm = heatmap_with(249, 1000, 0.9);
        assert!(!detect_by_image(&hm, &cfg).unwrap().0);
        // Raising one more cell's score can only help.
        hm.scores[249 * 2] = 0.95;
        hm.scores[249 * 2 + 1] = 0.05;
        assert!(detect_by_image(&hm, &cfg).unwrap().0);
    }

    #[test]
    fn missing_class_is_rejected() {
        let hm = HeatMap::new(1, 1, 227, 227, vec!["logo".into(), "background".into()], vec![1.0, 0.0]);
        assert_eq!(
            detect_by_image(&hm, &DetectionConfig::default()),
            Err(DetectError::ClassMismatch("receipt".into()))
        );
    }

    #[test]
    fn fusion_is_or() {
        // Full truth table.
        for (t, i) in [(false, false), (false, true), (true, false), (true, true)] {
            assert_eq!(fuse_detection(t, i), t || i);
        }
        let v = verdict(true, false, 0.1, 2);
        assert!(v.fused);
        assert_eq!(v.product_line_count, 2);
    }
}
