//! Full-chain orchestration: detect, crop, sign, layout and product
//! extraction over one image, with a replayable OCR abstraction so ground
//! truth, text sidecars or a future real engine plug in interchangeably.

use serde::Serialize;

use crate::backends::{
    infer_heatmap, BackendSpec, ClassifierBackend, HeatMap, HeuristicReceiptBackend,
    InkDensityLogoBackend,
};
use crate::config::PipelineConfig;
use crate::crop::{crop_receipt, CropResult, SceneMap};
use crate::detect::{detect_by_image, detect_by_text, find_product_lines, verdict, DetectionVerdict};
use crate::geom::{BBox, Quad};
use crate::layout::{adaptive_binarize, build_hierarchy};
use crate::ocr::{LineTruth, NoisyOcr, OcrBackend, OcrLine, StubOcr};
use crate::raster::GrayImage;
use crate::semantics::{
    extract_products, AbbreviationTable, ExtractionReport, Ontology,
};
use crate::sign::{
    aggregate_text_evidence, criterion_name, criterion_phone, criterion_terminology, fuse_sign,
    locate_logo, LogoResult, Orientation, SignDecision, SignEvidence, StoreDb,
};
use crate::synth::scene::StripPlacement;

/// Source of OCR text for the pipeline. `scene` reads the raw photo;
/// `rectified` reads the cropped receipt described by the crop transform,
/// optionally flipped 180 degrees after an inverted-orientation call.
pub trait OcrProvider: Send + Sync {
    fn scene(&self) -> Box<dyn OcrBackend>;
    fn rectified(
        &self,
        map: &SceneMap,
        flip: bool,
        rect_w: usize,
        rect_h: usize,
    ) -> Box<dyn OcrBackend>;
}

fn map_box_via(b: &BBox, f: impl Fn(f64, f64) -> (f64, f64)) -> BBox {
    let corners = [
        (b.x as f64, b.y as f64),
        (b.right() as f64, b.y as f64),
        (b.right() as f64, b.bottom() as f64),
        (b.x as f64, b.bottom() as f64),
    ];
    let mapped: Vec<(f64, f64)> = corners.iter().map(|&(x, y)| f(x, y)).collect();
    let x0 = mapped.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let y0 = mapped.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let x1 = mapped.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y1 = mapped.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    BBox::new(
        x0.round() as i64,
        y0.round() as i64,
        ((x1 - x0).round() as i64).max(1),
        ((y1 - y0).round() as i64).max(1),
    )
}

/// Ground-truth replay provider: strip-local text lines plus the strip's
/// scene placement, with an optional character corruption rate.
pub struct TruthOcrProvider {
    lines: Vec<LineTruth>,
    placement: Option<StripPlacement>,
    noise_rate: f64,
    seed: u64,
}

impl TruthOcrProvider {
    pub fn new(
        lines: Vec<LineTruth>,
        placement: Option<StripPlacement>,
        noise_rate: f64,
        seed: u64,
    ) -> Self {
        TruthOcrProvider { lines, placement, noise_rate, seed }
    }

    fn backend_for(&self, lines: Vec<LineTruth>) -> Box<dyn OcrBackend> {
        let stub = StubOcr::new(lines);
        if self.noise_rate > 0.0 {
            Box::new(NoisyOcr::new(stub, self.noise_rate, self.seed))
        } else {
            Box::new(stub)
        }
    }
}

impl OcrProvider for TruthOcrProvider {
    fn scene(&self) -> Box<dyn OcrBackend> {
        let lines = match &self.placement {
            None => Vec::new(),
            Some(p) => self
                .lines
                .iter()
                .map(|l| LineTruth {
                    box_: map_box_via(&l.box_, |x, y| p.strip_to_scene(x, y)),
                    text: l.text.clone(),
                })
                .collect(),
        };
        self.backend_for(lines)
    }

    fn rectified(
        &self,
        map: &SceneMap,
        flip: bool,
        rect_w: usize,
        rect_h: usize,
    ) -> Box<dyn OcrBackend> {
        let lines = match &self.placement {
            None => Vec::new(),
            Some(p) => self
                .lines
                .iter()
                .map(|l| {
                    let b = map_box_via(&l.box_, |x, y| {
                        let (sx, sy) = p.strip_to_scene(x, y);
                        map.map_point(sx, sy)
                    });
                    let b = if flip {
                        BBox::new(rect_w as i64 - b.x - b.w, rect_h as i64 - b.y - b.h, b.w, b.h)
                    } else {
                        b
                    };
                    LineTruth { box_: b, text: l.text.clone() }
                })
                .collect(),
        };
        self.backend_for(lines)
    }
}

/// Adapter for a plain text transcript with no geometry: every region query
/// returns the full transcript, ordered as given.
pub struct TextOcrProvider {
    lines: Vec<String>,
}

impl TextOcrProvider {
    pub fn new(text: &str) -> Self {
        TextOcrProvider { lines: text.lines().map(str::to_string).collect() }
    }
}

struct AllLinesOcr {
    lines: Vec<String>,
}

impl OcrBackend for AllLinesOcr {
    fn read_region(&self, _region: Option<&BBox>) -> Vec<OcrLine> {
        self.lines
            .iter()
            .map(|l| OcrLine { text: l.clone(), confidence: 1.0 })
            .collect()
    }
}

impl OcrProvider for TextOcrProvider {
    fn scene(&self) -> Box<dyn OcrBackend> {
        Box::new(AllLinesOcr { lines: self.lines.clone() })
    }

    fn rectified(&self, _: &SceneMap, _: bool, _: usize, _: usize) -> Box<dyn OcrBackend> {
        Box::new(AllLinesOcr { lines: self.lines.clone() })
    }
}

/// Whether an OCR provider's region queries honor coordinates. The plain
/// text adapter does not, so extraction must bypass the layout regions.
pub enum RegionSupport {
    Geometric,
    WholeImage,
}

/// Shared immutable state for pipeline runs.
pub struct PipelineContext {
    pub config: PipelineConfig,
    pub stores: StoreDb,
    pub ontology: Ontology,
    pub logo_classifier: Box<dyn ClassifierBackend>,
    pub abbreviations: AbbreviationTable,
    pub receipt_backend: HeuristicReceiptBackend,
    pub logo_backend: InkDensityLogoBackend,
}

impl PipelineContext {
    pub fn new(
        config: PipelineConfig,
        stores: StoreDb,
        ontology: Ontology,
        logo_classifier: Box<dyn ClassifierBackend>,
    ) -> Self {
        let receipt_backend = HeuristicReceiptBackend::new(BackendSpec::new(
            config.receipt_input_size,
            config.receipt_stride,
            vec!["receipt".into(), "not_receipt".into()],
        ));
        PipelineContext {
            config,
            stores,
            ontology,
            logo_classifier,
            abbreviations: AbbreviationTable::builtin(),
            receipt_backend,
            logo_backend: InkDensityLogoBackend::logo_default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CropSummary {
    pub wide_box: BBox,
    pub quad: Quad,
    pub skew_angle: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DebugInfo {
    pub positive_ratio: f64,
    pub scene_line_count: usize,
    pub evidence: SignEvidence,
    pub block_count: usize,
}

/// Machine-readable per-image report; one JSON object on stdout per run.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub schema: String,
    pub verdict: DetectionVerdict,
    pub crop: Option<CropSummary>,
    pub sign: Option<SignDecision>,
    pub orientation_inverted: bool,
    pub logo: Option<LogoResult>,
    pub extraction: Option<ExtractionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debug: Option<DebugInfo>,
}

/// Full per-stage results for callers that need more than the report
/// (evaluation reuses the heatmap and raw evidence).
pub struct PipelineOutcome {
    pub report: PipelineReport,
    pub heatmap: HeatMap,
    pub crop: Option<CropResult>,
    pub evidence: Option<SignEvidence>,
    pub logo: Option<LogoResult>,
    /// Logo classifier ranking over the located logo crop.
    pub logo_ranked: Option<Vec<(String, f64)>>,
}

fn full_frame_crop(img: &GrayImage) -> CropResult {
    let full = BBox::new(0, 0, img.width() as i64, img.height() as i64);
    CropResult {
        wide_box: full,
        quad: Quad::new([
            (0.0, 0.0),
            (img.width() as f64, 0.0),
            (img.width() as f64, img.height() as f64),
            (0.0, img.height() as f64),
        ]),
        rectified: img.clone(),
        skew_angle: 0.0,
        map: SceneMap::identity_crop(img.width(), img.height(), full),
        fallback: true,
    }
}

/// Run the whole chain on one image. A negative detection verdict
/// short-circuits: the report then carries only the verdict.
pub fn run_pipeline(
    img: &GrayImage,
    provider: &dyn OcrProvider,
    region_support: RegionSupport,
    ctx: &PipelineContext,
    debug: bool,
) -> anyhow::Result<PipelineOutcome> {
    let cfg = &ctx.config;
    let scene_text = provider.scene().read_all_text();
    let text_hit = detect_by_text(&scene_text);
    let hm = infer_heatmap(img, &ctx.receipt_backend)?;
    let (image_hit, ratio) = detect_by_image(&hm, &cfg.detection)?;
    let v = verdict(text_hit, image_hit, ratio, find_product_lines(&scene_text).len());

    if !v.fused {
        return Ok(PipelineOutcome {
            report: PipelineReport {
                schema: "receiptreport-v1".into(),
                verdict: v,
                crop: None,
                sign: None,
                orientation_inverted: false,
                logo: None,
                extraction: None,
                debug: None,
            },
            heatmap: hm,
            crop: None,
            evidence: None,
            logo: None,
            logo_ranked: None,
        });
    }

    // Crop; a text-only hit can leave the heatmap without positive cells, in
    // which case the whole frame stands in for the wide crop.
    let crop = crop_receipt(img, &hm, &cfg.detection, &cfg.crop)
        .unwrap_or_else(|_| full_frame_crop(img));

    // Sign: logo first (it decides orientation), then the text criteria on
    // the upright text.
    let logo = locate_logo(&crop.rectified, &ctx.logo_backend, ctx.logo_classifier.as_ref(), &cfg.sign)?;
    let inverted = logo.as_ref().is_some_and(|l| l.orientation == Orientation::Inverted);
    let rect_img = if inverted { crop.rectified.rotate180() } else { crop.rectified.clone() };
    let (rw, rh) = (rect_img.width() as i64, rect_img.height() as i64);
    let rect_ocr = provider.rectified(&crop.map, inverted, rect_img.width(), rect_img.height());
    let rect_text = rect_ocr.read_all_text();
    let evidence = aggregate_text_evidence(
        &criterion_name(&rect_text, &ctx.stores, &cfg.sign),
        &criterion_phone(&rect_text, &ctx.stores),
        &criterion_terminology(&rect_text, &ctx.stores, &cfg.sign),
    );
    let decision = fuse_sign(&evidence, logo.as_ref());

    let logo_ranked = logo.as_ref().map(|l| {
        let b = if inverted {
            BBox::new(rw - l.box_.x - l.box_.w, rh - l.box_.y - l.box_.h, l.box_.w, l.box_.h)
        } else {
            l.box_.clone()
        }
        .clamped(rw, rh);
        ctx.logo_classifier.ranked(&rect_img.crop(&b))
    });

    // Layout with the accepted store's column priors, if any.
    let priors: Vec<f64> = match &decision {
        SignDecision::Accepted { store_id, .. } => ctx
            .stores
            .get(store_id)
            .map(|s| s.layout_priors.clone())
            .unwrap_or_default(),
        _ => Vec::new(),
    };
    let mask = adaptive_binarize(&rect_img, &cfg.layout.binarize);
    let blocks = build_hierarchy(&mask, &priors, &cfg.layout);

    let extraction = match region_support {
        RegionSupport::Geometric => extract_products(
            &blocks,
            rect_ocr.as_ref(),
            &ctx.ontology,
            &ctx.abbreviations,
            &cfg.stop_words,
            cfg.match_threshold,
        ),
        RegionSupport::WholeImage => crate::semantics::extract_products_from_text(
            &rect_text,
            &ctx.ontology,
            &ctx.abbreviations,
            &cfg.stop_words,
            cfg.match_threshold,
        ),
    };

    let report = PipelineReport {
        schema: "receiptreport-v1".into(),
        verdict: v,
        crop: Some(CropSummary {
            wide_box: crop.wide_box.clone(),
            quad: crop.quad.clone(),
            skew_angle: crop.skew_angle,
            fallback: crop.fallback,
        }),
        sign: Some(decision),
        orientation_inverted: inverted,
        logo: logo.clone(),
        extraction: Some(extraction),
        debug: debug.then(|| DebugInfo {
            positive_ratio: ratio,
            scene_line_count: scene_text.lines().count(),
            evidence: evidence.clone(),
            block_count: blocks.len(),
        }),
    };
    Ok(PipelineOutcome {
        report,
        heatmap: hm,
        crop: Some(crop),
        evidence: Some(evidence),
        logo,
        logo_ranked,
    })
}

/// Build a logo classifier from the synthetic stores' rendered logos.
pub fn builtin_logo_classifier(stores: &StoreDb) -> anyhow::Result<Box<dyn ClassifierBackend>> {
    let classes: Vec<(String, Vec<GrayImage>)> = stores
        .stores
        .iter()
        .enumerate()
        .map(|(i, s)| (s.store_id.clone(), vec![crate::synth::render_logo(s, i)]))
        .collect();
    Ok(Box::new(crate::backends::TemplateLogoClassifier::new(227, classes)?))
}
