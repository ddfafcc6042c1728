//! Character-bigram similarity and the text normalization shared by the
//! store-sign criteria and the ontology matcher.

use std::collections::HashMap;

/// Fold common Latin diacritics to their ASCII base letter.
pub fn strip_diacritics(c: char) -> char {
    match c {
        'à' | 'á' | 'â' | 'ä' | 'ã' | 'å' | 'À' | 'Á' | 'Â' | 'Ä' | 'Ã' | 'Å' => 'A',
        'ç' | 'Ç' => 'C',
        'è' | 'é' | 'ê' | 'ë' | 'È' | 'É' | 'Ê' | 'Ë' => 'E',
        'ì' | 'í' | 'î' | 'ï' | 'Ì' | 'Í' | 'Î' | 'Ï' => 'I',
        'ñ' | 'Ñ' => 'N',
        'ò' | 'ó' | 'ô' | 'ö' | 'õ' | 'Ò' | 'Ó' | 'Ô' | 'Ö' | 'Õ' => 'O',
        'ù' | 'ú' | 'û' | 'ü' | 'Ù' | 'Ú' | 'Û' | 'Ü' => 'U',
        'ÿ' | 'ý' | 'Ÿ' | 'Ý' => 'Y',
        other => other.to_ascii_uppercase(),
    }
}

/// Uppercase, fold diacritics and drop every non-alphanumeric character.
pub fn normalize_compact(s: &str) -> String {
    s.chars()
        .map(strip_diacritics)
        .filter(|c| c.is_ascii_alphanumeric())
        .collect()
}

/// Uppercase, fold diacritics, and split into alphanumeric tokens.
pub fn normalize_tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(normalize_compact)
        .filter(|t| !t.is_empty())
        .collect()
}

fn bigram_counts(s: &str) -> HashMap<(char, char), usize> {
    let chars: Vec<char> = s.chars().collect();
    let mut m = HashMap::new();
    for w in chars.windows(2) {
        *m.entry((w[0], w[1])).or_insert(0) += 1;
    }
    m
}

/// Dice coefficient over character-bigram multisets. Inputs are expected to
/// be normalized already. Strings shorter than two characters score 0 unless
/// equal.
pub fn bigram_dice(a: &str, b: &str) -> f64 {
    let (la, lb) = (a.chars().count(), b.chars().count());
    if la < 2 || lb < 2 {
        return if a == b && la > 0 { 1.0 } else { 0.0 };
    }
    let ca = bigram_counts(a);
    let cb = bigram_counts(b);
    let shared: usize = ca
        .iter()
        .map(|(bg, &n)| n.min(cb.get(bg).copied().unwrap_or(0)))
        .sum();
    2.0 * shared as f64 / ((la - 1) + (lb - 1)) as f64
}

/// Best bigram-dice score of `needle` against sliding windows of
/// `haystack` whose length is within `slack` of the needle's length.
pub fn best_window_score(haystack: &str, needle: &str, slack: usize) -> f64 {
    let hay: Vec<char> = haystack.chars().collect();
    let n = needle.chars().count();
    if n == 0 || hay.is_empty() {
        return 0.0;
    }
    let lo = n.saturating_sub(slack).max(1);
    let hi = (n + slack).min(hay.len());
    let mut best: f64 = 0.0;
    for len in lo..=hi {
        if len > hay.len() {
            break;
        }
        for start in 0..=hay.len() - len {
            let window: String = hay[start..start + len].iter().collect();
            best = best.max(bigram_dice(&window, needle));
        }
    }
    best
}
