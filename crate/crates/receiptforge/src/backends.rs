//! Inference backend contracts and their deterministic reference
//! implementations.
//!
//! Two contracts cover everything the pipeline needs from trained models: a
//! [`SegmentationBackend`] turns an image into a per-class probability
//! [`HeatMap`] by scoring fixed-size sliding windows, and a
//! [`ClassifierBackend`] scores a single square crop. The reference
//! implementations here are closed-form heuristics; real models plug in
//! through the same traits or through the file-oracle sidecar.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::GrayImage;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("oracle load error: {0}")]
    OracleLoadError(String),
    #[error("oracle shape error: sidecar declares {declared_h}x{declared_w} cells but image implies {expected_h}x{expected_w}")]
    OracleShapeError {
        declared_h: usize,
        declared_w: usize,
        expected_h: usize,
        expected_w: usize,
    },
    #[error("backend config error: {0}")]
    ConfigError(String),
}

/// Geometry and class layout of a window-scoring backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    /// Square window edge in pixels.
    pub input_size: usize,
    /// Pixel step between window placements.
    pub stride: usize,
    pub class_labels: Vec<String>,
}

impl BackendSpec {
    pub fn new(input_size: usize, stride: usize, class_labels: Vec<String>) -> Self {
        assert!(input_size > 0 && stride > 0 && stride <= input_size);
        assert!(class_labels.len() >= 2, "need at least two classes");
        BackendSpec { input_size, stride, class_labels }
    }

    /// Two-class receipt spec with non-overlapping tiling.
    pub fn receipt_default() -> Self {
        BackendSpec::new(227, 227, vec!["receipt".into(), "not_receipt".into()])
    }

    pub fn class_count(&self) -> usize {
        self.class_labels.len()
    }

    /// Number of window placements along an axis of length `dim`.
    pub fn grid_cells(&self, dim: usize) -> usize {
        debug_assert!(dim >= self.input_size);
        (dim - self.input_size) / self.stride + 1
    }
}

/// Per-cell, per-class probability grid. Cell `(row i, col j)` corresponds to
/// the source window with top-left `(j*stride, i*stride)` and edge
/// `input_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub grid_w: usize,
    pub grid_h: usize,
    pub stride: usize,
    pub input_size: usize,
    pub class_labels: Vec<String>,
    /// Row-major cells, `class_count` probabilities per cell.
    pub scores: Vec<f64>,
}

impl HeatMap {
    pub fn new(
        grid_w: usize,
        grid_h: usize,
        stride: usize,
        input_size: usize,
        class_labels: Vec<String>,
        scores: Vec<f64>,
    ) -> Self {
        assert_eq!(scores.len(), grid_w * grid_h * class_labels.len());
        HeatMap { grid_w, grid_h, stride, input_size, class_labels, scores }
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_labels.iter().position(|l| l == label)
    }

    pub fn cell_count(&self) -> usize {
        self.grid_w * self.grid_h
    }

    pub fn score(&self, row: usize, col: usize, class: usize) -> f64 {
        self.scores[(row * self.grid_w + col) * self.class_labels.len() + class]
    }

    /// Pixel rectangle of the source window behind cell `(row, col)`.
    pub fn cell_window(&self, row: usize, col: usize) -> crate::geom::BBox {
        crate::geom::BBox::new(
            (col * self.stride) as i64,
            (row * self.stride) as i64,
            self.input_size as i64,
            self.input_size as i64,
        )
    }
}

pub trait SegmentationBackend: Send + Sync {
    fn spec(&self) -> &BackendSpec;
    /// `img` is already padded to at least `input_size` on both axes.
    fn infer(&self, img: &GrayImage) -> Result<HeatMap, BackendError>;
}

pub trait ClassifierBackend: Send + Sync {
    fn class_labels(&self) -> &[String];
    /// Probability vector over classes for a crop (resized internally).
    fn classify(&self, crop: &GrayImage) -> Vec<f64>;

    /// Class labels sorted by descending probability.
    fn ranked(&self, crop: &GrayImage) -> Vec<(String, f64)> {
        let probs = self.classify(crop);
        let mut out: Vec<(String, f64)> = self
            .class_labels()
            .iter()
            .cloned()
            .zip(probs)
            .collect();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        out
    }
}

/// Run a segmentation backend over an image, border-padding with white when
/// the image is smaller than one window.
pub fn infer_heatmap(
    img: &GrayImage,
    backend: &dyn SegmentationBackend,
) -> Result<HeatMap, BackendError> {
    let size = backend.spec().input_size;
    let padded;
    let img = if img.width() < size || img.height() < size {
        padded = img.pad_to(size, size, 255);
        &padded
    } else {
        img
    };
    backend.infer(img)
}

/// Shared sliding-window driver for backends that score windows pointwise.
fn sliding_window_heatmap<F>(img: &GrayImage, spec: &BackendSpec, score: F) -> HeatMap
where
    F: Fn(&GrayImage, usize, usize) -> Vec<f64>,
{
    let grid_w = spec.grid_cells(img.width());
    let grid_h = spec.grid_cells(img.height());
    let mut scores = Vec::with_capacity(grid_w * grid_h * spec.class_count());
    for i in 0..grid_h {
        for j in 0..grid_w {
            let cell = score(img, j * spec.stride, i * spec.stride);
            debug_assert_eq!(cell.len(), spec.class_count());
            scores.extend(cell);
        }
    }
    HeatMap::new(grid_w, grid_h, spec.stride, spec.input_size, spec.class_labels.clone(), scores)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---------------------------------------------------------------------------
// Heuristic receipt segmentation
// ---------------------------------------------------------------------------

/// Brightness/ink-structure heuristic standing in for the trained two-class
/// receipt segmentation network. Constants are calibration knobs.
#[derive(Debug, Clone)]
pub struct HeuristicReceiptBackend {
    spec: BackendSpec,
    pub alpha: f64,
    pub beta: f64,
    pub bright_threshold: u8,
    pub dark_threshold: u8,
    pub brightness_offset: f64,
    pub ink_row_offset: f64,
}

impl HeuristicReceiptBackend {
    pub fn new(spec: BackendSpec) -> Self {
        HeuristicReceiptBackend {
            spec,
            alpha: 6.0,
            beta: 4.0,
            bright_threshold: 200,
            dark_threshold: 100,
            brightness_offset: 0.5,
            ink_row_offset: 0.15,
        }
    }

    /// Receipt probability of one `input_size` square window at `(x0, y0)`.
    pub fn window_score(&self, img: &GrayImage, x0: usize, y0: usize) -> f64 {
        let n = self.spec.input_size;
        let mut bright = 0usize;
        let mut ink_rows = 0usize;
        for y in y0..y0 + n {
            let mut dark_in_row = 0usize;
            for x in x0..x0 + n {
                let v = img.get(x, y);
                if v > self.bright_threshold {
                    bright += 1;
                }
                if v < self.dark_threshold {
                    dark_in_row += 1;
                }
            }
            if dark_in_row >= 3 {
                ink_rows += 1;
            }
        }
        let brightness_frac = bright as f64 / (n * n) as f64;
        let ink_row_frac = ink_rows as f64 / n as f64;
        logistic(
            self.alpha * (brightness_frac - self.brightness_offset)
                + self.beta * (ink_row_frac - self.ink_row_offset),
        )
    }
}

impl SegmentationBackend for HeuristicReceiptBackend {
    fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn infer(&self, img: &GrayImage) -> Result<HeatMap, BackendError> {
        Ok(sliding_window_heatmap(img, &self.spec, |im, x, y| {
            let p = self.window_score(im, x, y);
            vec![p, 1.0 - p]
        }))
    }
}

// ---------------------------------------------------------------------------
// Ink-density logo segmentation
// ---------------------------------------------------------------------------

/// Logo/background segmentation stand-in: store logos print as dense ink
/// blocks, so the logo probability of a window is a logistic function of its
/// dark-pixel fraction.
#[derive(Debug, Clone)]
pub struct InkDensityLogoBackend {
    spec: BackendSpec,
    pub dark_threshold: u8,
    pub ink_center: f64,
    pub ink_gain: f64,
}

impl InkDensityLogoBackend {
    pub fn new(spec: BackendSpec) -> Self {
        InkDensityLogoBackend { spec, dark_threshold: 100, ink_center: 0.35, ink_gain: 12.0 }
    }

    pub fn logo_default() -> Self {
        InkDensityLogoBackend::new(BackendSpec::new(
            96,
            48,
            vec!["logo".into(), "background".into()],
        ))
    }
}

impl SegmentationBackend for InkDensityLogoBackend {
    fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn infer(&self, img: &GrayImage) -> Result<HeatMap, BackendError> {
        let n = self.spec.input_size;
        Ok(sliding_window_heatmap(img, &self.spec, |im, x0, y0| {
            let mut dark = 0usize;
            for y in y0..y0 + n {
                for x in x0..x0 + n {
                    if im.get(x, y) < self.dark_threshold {
                        dark += 1;
                    }
                }
            }
            let frac = dark as f64 / (n * n) as f64;
            let p = logistic(self.ink_gain * (frac - self.ink_center));
            vec![p, 1.0 - p]
        }))
    }
}

// ---------------------------------------------------------------------------
// File oracle
// ---------------------------------------------------------------------------

/// Segmentation backend that replays an exact heatmap from a sidecar file,
/// ignoring pixel content. Lets tests and externally-run models inject
/// precise maps.
#[derive(Debug, Clone)]
pub struct FileOracleBackend {
    spec: BackendSpec,
    map: HeatMap,
}

impl FileOracleBackend {
    pub fn from_sidecar(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::OracleLoadError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, BackendError> {
        let bad = |m: &str| BackendError::OracleLoadError(m.to_string());
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("HEATMAP v1") {
            return Err(bad("missing 'HEATMAP v1' header"));
        }
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing dimension line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad dimension token")))
            .collect::<Result<_, _>>()?;
        let [grid_h, grid_w, class_count, stride, input_size] = dims[..] else {
            return Err(bad("dimension line needs 5 integers"));
        };
        let labels: Vec<String> = lines
            .next()
            .ok_or_else(|| bad("missing class label line"))?
            .split_whitespace()
            .map(String::from)
            .collect();
        if labels.len() != class_count {
            return Err(bad("class label count mismatch"));
        }
        let mut scores = Vec::with_capacity(grid_h * grid_w * class_count);
        for _ in 0..grid_h * grid_w {
            let row = lines.next().ok_or_else(|| bad("truncated cell data"))?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad score token")))
                .collect::<Result<_, _>>()?;
            if vals.len() != class_count {
                return Err(bad("cell score count mismatch"));
            }
            scores.extend(vals);
        }
        let spec = BackendSpec::new(input_size, stride, labels.clone());
        Ok(FileOracleBackend {
            spec,
            map: HeatMap::new(grid_w, grid_h, stride, input_size, labels, scores),
        })
    }

    pub fn heatmap(&self) -> &HeatMap {
        &self.map
    }
}

/// Serialize a heatmap in the sidecar text format.
pub fn encode_heatmap_sidecar(hm: &HeatMap) -> String {
    let mut out = String::from("HEATMAP v1\n");
    out.push_str(&format!(
        "{} {} {} {} {}\n",
        hm.grid_h,
        hm.grid_w,
        hm.class_labels.len(),
        hm.stride,
        hm.input_size
    ));
    out.push_str(&hm.class_labels.join(" "));
    out.push('\n');
    let k = hm.class_labels.len();
    for cell in hm.scores.chunks(k) {
        let row: Vec<String> = cell.iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

impl SegmentationBackend for FileOracleBackend {
    fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn infer(&self, img: &GrayImage) -> Result<HeatMap, BackendError> {
        let expected_w = self.spec.grid_cells(img.width());
        let expected_h = self.spec.grid_cells(img.height());
        if expected_w != self.map.grid_w || expected_h != self.map.grid_h {
            return Err(BackendError::OracleShapeError {
                declared_h: self.map.grid_h,
                declared_w: self.map.grid_w,
                expected_h,
                expected_w,
            });
        }
        Ok(self.map.clone())
    }
}

// ---------------------------------------------------------------------------
// Template correlation classifier
// ---------------------------------------------------------------------------

/// Classifier scoring a crop against per-class template images by maximum
/// normalized cross-correlation, sharpened into probabilities by a softmax.
pub struct TemplateLogoClassifier {
    labels: Vec<String>,
    /// Per class, templates resized to `input_size` and mean-subtracted.
    templates: Vec<Vec<Vec<f64>>>,
    input_size: usize,
    pub temperature: f64,
}

fn mean_subtracted(img: &GrayImage) -> Vec<f64> {
    let n = img.pixels().len() as f64;
    let mean = img.pixels().iter().map(|&v| v as f64).sum::<f64>() / n;
    img.pixels().iter().map(|&v| v as f64 - mean).collect()
}

/// Normalized cross-correlation of two equal-length mean-subtracted vectors;
/// zero when either side is constant.
fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-9 || nb < 1e-9 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl TemplateLogoClassifier {
    pub fn new(
        input_size: usize,
        classes: Vec<(String, Vec<GrayImage>)>,
    ) -> Result<Self, BackendError> {
        if classes.is_empty() {
            return Err(BackendError::ConfigError("no template classes".into()));
        }
        let mut labels = Vec::new();
        let mut templates = Vec::new();
        for (label, imgs) in classes {
            if imgs.is_empty() {
                return Err(BackendError::ConfigError(format!(
                    "class {label:?} has no templates"
                )));
            }
            labels.push(label);
            templates.push(
                imgs.iter()
                    .map(|t| mean_subtracted(&t.resize(input_size, input_size)))
                    .collect(),
            );
        }
        Ok(TemplateLogoClassifier { labels, templates, input_size, temperature: 0.1 })
    }

    /// Load templates from a directory of `<class_label>_<k>.pgm` files.
    pub fn from_dir(input_size: usize, dir: &Path) -> Result<Self, BackendError> {
        let mut by_class: BTreeMap<String, Vec<GrayImage>> = BTreeMap::new();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| BackendError::ConfigError(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| BackendError::ConfigError(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
                continue;
            }
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| BackendError::ConfigError("bad template name".into()))?;
            let label = stem
                .rsplit_once('_')
                .map(|(l, _)| l.to_string())
                .ok_or_else(|| {
                    BackendError::ConfigError(format!("template {stem:?} lacks a _<k> suffix"))
                })?;
            let img = crate::raster::load_image(&path)
                .map_err(|e| BackendError::ConfigError(format!("{}: {e}", path.display())))?;
            by_class.entry(label).or_default().push(img);
        }
        TemplateLogoClassifier::new(input_size, by_class.into_iter().collect())
    }

    /// Per-class raw correlation scores before the softmax.
    pub fn correlations(&self, crop: &GrayImage) -> Vec<f64> {
        let c = mean_subtracted(&crop.resize(self.input_size, self.input_size));
        self.templates
            .iter()
            .map(|ts| ts.iter().map(|t| ncc(&c, t)).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

impl ClassifierBackend for TemplateLogoClassifier {
    fn class_labels(&self) -> &[String] {
        &self.labels
    }

    fn classify(&self, crop: &GrayImage) -> Vec<f64> {
        let corr = self.correlations(crop);
        let max = corr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = corr.iter().map(|&c| ((c - max) / self.temperature).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }
}
