//! Corpus-level evaluation: detection precision/recall per method and
//! class, localization IoU in three configurations (edge-only, heatmap-only
//! and combined), sign top-1/top-2 accuracy, and the label-to-concept
//! association rate. Reports are byte-identical for a fixed seed and config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::crop::{detect_receipt_edges, rectify, wide_crop};
use crate::geom::{iou, BBox};
use crate::pipeline::{
    builtin_logo_classifier, run_pipeline, PipelineContext, RegionSupport, TruthOcrProvider,
};
use crate::raster::{load_image, GrayImage};
use crate::semantics::{MatchResult, Ontology};
use crate::sign::{SignDecision, StoreDb};
use crate::synth::corpus::{
    default_specs, read_manifest, DEFAULT_NON_RECEIPTS, DEFAULT_RECEIPTS,
};
use crate::synth::scene::{generate, Background, GroundTruth, SyntheticSpec};
use crate::synth::{default_ontology, default_stores};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassPr {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

impl ClassPr {
    fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        ClassPr {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
        }
    }
}

/// Two-class view of one detection method: the not-receipt row is the
/// receipt row with prediction and truth both negated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodEval {
    pub receipt: ClassPr,
    pub not_receipt: ClassPr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionEval {
    pub text: MethodEval,
    pub image: MethodEval,
    pub fused: MethodEval,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationEval {
    pub count: usize,
    pub edge_only_mean_iou: f64,
    pub heatmap_only_mean_iou: f64,
    pub combined_mean_iou: f64,
    /// Plain-background samples rotated at most 5 degrees.
    pub clean_count: usize,
    pub combined_clean_mean_iou: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignEval {
    pub total: usize,
    pub text_top1: usize,
    pub logo_top1: usize,
    pub logo_top2: usize,
    pub fused_top1: usize,
    pub accepted: usize,
    pub needs_review: usize,
    pub text_top1_rate: f64,
    pub logo_top1_rate: f64,
    pub logo_top2_rate: f64,
    pub fused_top1_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssociationEval {
    pub total_products: usize,
    pub matched: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub seed: u64,
    pub samples: usize,
    pub receipts: usize,
    pub non_receipts: usize,
    pub skipped: usize,
    pub detection: DetectionEval,
    pub localization: LocalizationEval,
    pub sign: SignEval,
    pub association: AssociationEval,
}

struct SignSample {
    text_ok: bool,
    logo_ok: bool,
    logo_top2_ok: bool,
    fused_ok: bool,
    accepted: bool,
}

struct SampleRecord {
    receipt: bool,
    text_hit: bool,
    image_hit: bool,
    fused_hit: bool,
    iou_edge: f64,
    iou_heat: f64,
    iou_comb: f64,
    clean: bool,
    sign: Option<SignSample>,
    assoc_total: usize,
    assoc_matched: usize,
}

fn full_frame(img: &GrayImage) -> BBox {
    BBox::new(0, 0, img.width() as i64, img.height() as i64)
}

fn safe_iou(a: &BBox, b: &BBox) -> f64 {
    iou(a, b).unwrap_or(0.0)
}

fn evaluate_one(
    spec: &SyntheticSpec,
    img: &GrayImage,
    truth: &GroundTruth,
    ctx: &PipelineContext,
) -> anyhow::Result<SampleRecord> {
    let noise = ctx.config.ocr_noise_rate.unwrap_or(spec.ocr_noise);
    let provider =
        TruthOcrProvider::new(truth.lines.clone(), truth.placement.clone(), noise, spec.seed);
    let outcome = run_pipeline(img, &provider, RegionSupport::Geometric, ctx, false)?;
    let v = &outcome.report.verdict;

    let mut rec = SampleRecord {
        receipt: truth.present,
        text_hit: v.text_hit,
        image_hit: v.image_hit,
        fused_hit: v.fused,
        iou_edge: 0.0,
        iou_heat: 0.0,
        iou_comb: 0.0,
        clean: false,
        sign: None,
        assoc_total: 0,
        assoc_matched: 0,
    };
    if !truth.present {
        return Ok(rec);
    }
    let truth_box = truth.receipt_box.clone().expect("receipt sample has a box");

    // Localization, three configurations against the same truth box.
    let heat_box = wide_crop(
        &outcome.heatmap,
        &ctx.config.detection,
        ctx.config.crop.margin,
        img.width(),
        img.height(),
    )
    .unwrap_or_else(|_| full_frame(img));
    rec.iou_heat = safe_iou(&heat_box, &truth_box);

    let frame = full_frame(img);
    let edge_box = detect_receipt_edges(img, &frame, &ctx.config.crop)
        .and_then(|edges| rectify(img, &edges))
        .map(|r| r.quad.bounding_box().clamped(img.width() as i64, img.height() as i64))
        .unwrap_or(frame);
    rec.iou_edge = safe_iou(&edge_box, &truth_box);

    let comb_box = match &outcome.crop {
        Some(c) if !c.fallback => {
            c.quad.bounding_box().clamped(img.width() as i64, img.height() as i64)
        }
        Some(c) => c.wide_box.clone(),
        None => full_frame(img),
    };
    rec.iou_comb = safe_iou(&comb_box, &truth_box);
    rec.clean = spec.background == Background::Plain && spec.rotation.abs() <= 5.0;

    // Sign accuracy.
    let truth_store = truth.store_id.as_deref().expect("receipt sample has a store");
    let text_pred = outcome.evidence.as_ref().and_then(|e| e.top()).map(|(s, _)| s.as_str());
    let logo_pred = outcome.logo.as_ref().map(|l| l.store_id.as_str());
    let top2: Vec<&str> = outcome
        .logo_ranked
        .as_deref()
        .unwrap_or(&[])
        .iter()
        .take(2)
        .map(|(s, _)| s.as_str())
        .collect();
    let (accepted_store, accepted) = match outcome.report.sign.as_ref() {
        Some(SignDecision::Accepted { store_id, .. }) => (Some(store_id.as_str()), true),
        _ => (None, false),
    };
    let fused_pred = accepted_store.or(text_pred).or(logo_pred);
    rec.sign = Some(SignSample {
        text_ok: text_pred == Some(truth_store),
        logo_ok: logo_pred == Some(truth_store),
        logo_top2_ok: logo_pred == Some(truth_store) || top2.contains(&truth_store),
        fused_ok: fused_pred == Some(truth_store),
        accepted,
    });

    // Association: truth products matched in order by concept id.
    if let Some(extraction) = outcome.report.extraction.as_ref() {
        // In-order matching that does not consume entries on a miss: a
        // dropped line must not cascade into misses for later products.
        let mut cursor = 0usize;
        for t in &truth.products {
            rec.assoc_total += 1;
            if let Some(j) = extraction.products[cursor..].iter().position(|(_, m)| {
                matches!(m, MatchResult::Matched { concept_id, .. } if *concept_id == t.concept_id)
            }) {
                rec.assoc_matched += 1;
                cursor += j + 1;
            }
        }
    } else {
        rec.assoc_total = truth.products.len();
    }
    Ok(rec)
}

fn method_eval(records: &[SampleRecord], hit: impl Fn(&SampleRecord) -> bool) -> MethodEval {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for r in records {
        match (r.receipt, hit(r)) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    MethodEval {
        receipt: ClassPr::from_counts(tp, fp, fn_, tn),
        not_receipt: ClassPr::from_counts(tn, fn_, fp, tp),
    }
}

fn reduce(records: Vec<SampleRecord>, skipped: usize, seed: u64) -> EvalReport {
    let receipts: Vec<&SampleRecord> = records.iter().filter(|r| r.receipt).collect();
    let n_rec = receipts.len();
    let mean = |f: &dyn Fn(&SampleRecord) -> f64, set: &[&SampleRecord]| {
        if set.is_empty() {
            0.0
        } else {
            set.iter().map(|r| f(r)).sum::<f64>() / set.len() as f64
        }
    };
    let clean: Vec<&SampleRecord> = receipts.iter().copied().filter(|r| r.clean).collect();

    let signs: Vec<&SignSample> = receipts.iter().filter_map(|r| r.sign.as_ref()).collect();
    let count_sign = |f: &dyn Fn(&SignSample) -> bool| signs.iter().filter(|s| f(s)).count();
    let text_top1 = count_sign(&|s| s.text_ok);
    let logo_top1 = count_sign(&|s| s.logo_ok);
    let logo_top2 = count_sign(&|s| s.logo_top2_ok);
    let fused_top1 = count_sign(&|s| s.fused_ok);
    let accepted = count_sign(&|s| s.accepted);
    let rate = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };

    let total_products: usize = receipts.iter().map(|r| r.assoc_total).sum();
    let matched: usize = receipts.iter().map(|r| r.assoc_matched).sum();

    EvalReport {
        schema: "evalreport-v1".into(),
        seed,
        samples: records.len(),
        receipts: n_rec,
        non_receipts: records.len() - n_rec,
        skipped,
        detection: DetectionEval {
            text: method_eval(&records, |r| r.text_hit),
            image: method_eval(&records, |r| r.image_hit),
            fused: method_eval(&records, |r| r.fused_hit),
        },
        localization: LocalizationEval {
            count: n_rec,
            edge_only_mean_iou: mean(&|r| r.iou_edge, &receipts),
            heatmap_only_mean_iou: mean(&|r| r.iou_heat, &receipts),
            combined_mean_iou: mean(&|r| r.iou_comb, &receipts),
            clean_count: clean.len(),
            combined_clean_mean_iou: mean(&|r| r.iou_comb, &clean),
        },
        sign: SignEval {
            total: signs.len(),
            text_top1,
            logo_top1,
            logo_top2,
            fused_top1,
            accepted,
            needs_review: signs.len() - accepted,
            text_top1_rate: rate(text_top1, signs.len()),
            logo_top1_rate: rate(logo_top1, signs.len()),
            logo_top2_rate: rate(logo_top2, signs.len()),
            fused_top1_rate: rate(fused_top1, signs.len()),
        },
        association: AssociationEval {
            total_products,
            matched,
            rate: rate(matched, total_products),
        },
    }
}

enum SampleSource<'a> {
    Generate,
    Dir(&'a Path),
}

fn load_sample(
    spec: &SyntheticSpec,
    source: &SampleSource,
    stores: &StoreDb,
    ontology: &Ontology,
) -> anyhow::Result<(GrayImage, GroundTruth)> {
    match source {
        SampleSource::Generate => Ok(generate(spec, stores, ontology)),
        SampleSource::Dir(dir) => {
            let sample_dir = dir.join("samples").join(&spec.id);
            let img = load_image(&sample_dir.join("image.pgm"))?;
            let truth: GroundTruth =
                serde_json::from_slice(&std::fs::read(sample_dir.join("truth.json"))?)?;
            Ok((img, truth))
        }
    }
}

fn evaluate_specs(
    specs: &[SyntheticSpec],
    source: SampleSource,
    ctx: &PipelineContext,
) -> anyhow::Result<EvalReport> {
    anyhow::ensure!(!specs.is_empty(), "empty corpus");
    let jobs = ctx.config.jobs.max(1);
    let mut slots: Vec<Option<SampleRecord>> = Vec::with_capacity(specs.len());
    slots.resize_with(specs.len(), || None);
    if jobs <= 1 {
        for (spec, slot) in specs.iter().zip(slots.iter_mut()) {
            let (img, truth) = load_sample(spec, &source, &ctx.stores, &ctx.ontology)?;
            *slot = evaluate_one(spec, &img, &truth, ctx).ok();
        }
    } else {
        let chunk = specs.len().div_ceil(jobs);
        let source = &source;
        std::thread::scope(|scope| {
            for (spec_chunk, slot_chunk) in specs.chunks(chunk).zip(slots.chunks_mut(chunk)) {
                scope.spawn(move || {
                    for (spec, slot) in spec_chunk.iter().zip(slot_chunk.iter_mut()) {
                        if let Ok((img, truth)) =
                            load_sample(spec, source, &ctx.stores, &ctx.ontology)
                        {
                            *slot = evaluate_one(spec, &img, &truth, ctx).ok();
                        }
                    }
                });
            }
        });
    }
    let mut records = Vec::with_capacity(specs.len());
    let mut skipped = 0usize;
    for slot in slots {
        match slot {
            Some(r) => records.push(r),
            None => skipped += 1,
        }
    }
    Ok(reduce(records, skipped, ctx.config.seed))
}

/// Evaluate the default in-memory corpus (200 receipts, 100 non-receipts)
/// for the configured seed.
pub fn evaluate_default(config: &PipelineConfig) -> anyhow::Result<EvalReport> {
    let stores = default_stores();
    let ontology = default_ontology(crate::synth::corpus::CORPUS_ONTOLOGY_SIZE);
    let cls = builtin_logo_classifier(&stores)?;
    let ctx = PipelineContext::new(config.clone(), stores, ontology, cls);
    let specs = default_specs(config.seed, DEFAULT_RECEIPTS, DEFAULT_NON_RECEIPTS);
    evaluate_specs(&specs, SampleSource::Generate, &ctx)
}

/// Evaluate a corpus previously written to disk by the generator.
pub fn evaluate_dir(dir: &Path, config: &PipelineConfig) -> anyhow::Result<EvalReport> {
    let manifest = read_manifest(dir)?;
    let stores = StoreDb::load(&dir.join("assets/stores.json"))?;
    let ontology = Ontology::load(&dir.join("assets/ontology.json"))?;
    let cls: Box<dyn crate::backends::ClassifierBackend> = Box::new(
        crate::backends::TemplateLogoClassifier::from_dir(227, &dir.join("assets/logos"))?,
    );
    let mut config = config.clone();
    config.seed = manifest.seed;
    let ctx = PipelineContext::new(config, stores, ontology, cls);
    evaluate_specs(&manifest.samples, SampleSource::Dir(dir), &ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocr::corrupt_text;
    use crate::semantics::{match_concept, AbbreviationTable};
    use crate::synth::catalog::concept_print_label;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_report(jobs: usize) -> EvalReport {
        let config = PipelineConfig { jobs, ..PipelineConfig::default() };
        let stores = default_stores();
        let ontology = default_ontology(crate::synth::corpus::CORPUS_ONTOLOGY_SIZE);
        let cls = builtin_logo_classifier(&stores).unwrap();
        let ctx = PipelineContext::new(config, stores, ontology, cls);
        let specs = default_specs(42, 12, 6);
        evaluate_specs(&specs, SampleSource::Generate, &ctx).unwrap()
    }

    #[test]
    fn counts_are_consistent() {
        let r = small_report(1);
        assert_eq!(r.samples, 18);
        assert_eq!(r.receipts, 12);
        let d = &r.detection.fused.receipt;
        assert_eq!(d.true_positives + d.false_negatives, r.receipts);
        assert_eq!(d.false_positives + d.true_negatives, r.non_receipts);
        let n = &r.detection.fused.not_receipt;
        assert_eq!(n.true_positives, d.true_negatives);
        assert_eq!(n.false_negatives, d.false_positives);
    }

    #[test]
    fn clean_subcorpus_is_near_perfect() {
        let r = small_report(1);
        assert_eq!(r.detection.fused.receipt.recall, 1.0);
        assert_eq!(r.association.rate, 1.0, "noiseless association must be exact");
        assert!(r.localization.combined_clean_mean_iou > 0.85);
    }

    #[test]
    fn parallel_report_matches_serial() {
        let serial = serde_json::to_string(&small_report(1)).unwrap();
        let parallel = serde_json::to_string(&small_report(3)).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn disk_corpus_matches_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        let specs = default_specs(42, 6, 3);
        crate::synth::write_corpus(dir.path(), &specs, 42).unwrap();
        let config = PipelineConfig::default();
        let from_disk = evaluate_dir(dir.path(), &config).unwrap();

        let stores = default_stores();
        let ontology = default_ontology(crate::synth::corpus::CORPUS_ONTOLOGY_SIZE);
        let cls = builtin_logo_classifier(&stores).unwrap();
        let ctx = PipelineContext::new(config, stores, ontology, cls);
        let in_memory = evaluate_specs(&specs, SampleSource::Generate, &ctx).unwrap();
        assert_eq!(
            serde_json::to_string(&from_disk).unwrap(),
            serde_json::to_string(&in_memory).unwrap()
        );
    }

    #[test]
    fn association_degrades_monotonically_with_noise() {
        // Statistical monotone-degradation check: 200 printed labels matched
        // against the ontology under increasing corruption rates.
        let ontology = default_ontology(60);
        let abbrev = AbbreviationTable::builtin();
        let rates = [0.0, 0.02, 0.05, 0.10, 0.20];
        let mut assoc = Vec::new();
        for (ri, &rate) in rates.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + ri as u64);
            let mut ok = 0usize;
            for i in 0..200 {
                let idx = i % ontology.concepts.len();
                let label = concept_print_label(&ontology, idx);
                let (noisy, _) = corrupt_text(&label, rate, &mut rng);
                if matches!(
                    match_concept(&noisy, &ontology, &abbrev, 0.65),
                    MatchResult::Matched { concept_id, .. } if concept_id == ontology.concepts[idx].id
                ) {
                    ok += 1;
                }
            }
            assoc.push(ok as f64 / 200.0);
        }
        assert_eq!(assoc[0], 1.0);
        for w in assoc.windows(2) {
            assert!(w[1] <= w[0] + 0.03, "rates not degrading: {assoc:?}");
        }
    }
}
