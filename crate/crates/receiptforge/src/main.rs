//! Command-line front end. Machine output is line-delimited JSON on stdout;
//! logs go to stderr. Exit codes: 0 success, 2 not-receipt, 3 needs-review,
//! 4 and up for errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use receiptforge::backends::{
    infer_heatmap, BackendSpec, ClassifierBackend, FileOracleBackend, HeuristicReceiptBackend,
    SegmentationBackend, TemplateLogoClassifier,
};
use receiptforge::config::PipelineConfig;
use receiptforge::crop::crop_receipt;
use receiptforge::detect::{detect_by_image, detect_by_text, find_product_lines, verdict};
use receiptforge::eval::{evaluate_default, evaluate_dir};
use receiptforge::layout::{adaptive_binarize, build_hierarchy};
use receiptforge::pipeline::{
    builtin_logo_classifier, run_pipeline, PipelineContext, RegionSupport, TextOcrProvider,
    TruthOcrProvider,
};
use receiptforge::raster::{load_image, save_pgm};
use receiptforge::semantics::{
    extract_products_from_text, AbbreviationTable, Ontology,
};
use receiptforge::sign::{
    aggregate_text_evidence, criterion_name, criterion_phone, criterion_terminology, fuse_sign,
    locate_logo, SignDecision, StoreDb,
};
use receiptforge::synth::scene::GroundTruth;
use receiptforge::synth::{default_ontology, default_stores, default_specs, write_corpus};

const EXIT_NOT_RECEIPT: u8 = 2;
const EXIT_NEEDS_REVIEW: u8 = 3;
const EXIT_ERROR: u8 = 4;

#[derive(Parser)]
#[command(name = "receiptforge", version, about = "Receipt-photo understanding pipeline")]
struct Cli {
    /// Configuration file (TOML or JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for corpus-level commands.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Include intermediate stage results in reports.
    #[arg(long, global = true)]
    debug: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether an image shows a receipt.
    Detect(DetectArgs),
    /// Localize, deskew and crop the receipt.
    Crop(CropArgs),
    /// Identify the issuing store on a rectified receipt.
    Sign(SignArgs),
    /// Segment a rectified receipt into bands, columns and lines.
    Layout(LayoutArgs),
    /// Parse product lines from an OCR transcript and match concepts.
    Parse(ParseArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Evaluate the full pipeline over a corpus.
    Eval(EvalArgs),
    /// Run the full chain on one image.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct DetectArgs {
    image: PathBuf,
    /// OCR transcript for the text path (no transcript: image path only).
    #[arg(long)]
    ocr_text: Option<PathBuf>,
    /// `heuristic` or `oracle:<sidecar path>`.
    #[arg(long, default_value = "heuristic")]
    backend: String,
    /// Heatmap score threshold.
    #[arg(long, default_value_t = 0.70)]
    tau: f64,
    /// Minimum positive-cell fraction.
    #[arg(long, default_value_t = 0.25)]
    rho: f64,
}

#[derive(Args)]
struct CropArgs {
    image: PathBuf,
    #[arg(long, default_value = "heuristic")]
    backend: String,
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
    /// Output path for the rectified PGM.
    #[arg(long, default_value = "rectified.pgm")]
    out: PathBuf,
    /// Optional JSON sidecar with wide box, quad and skew angle.
    #[arg(long)]
    emit_quad: Option<PathBuf>,
}

#[derive(Args)]
struct SignArgs {
    rectified: PathBuf,
    #[arg(long)]
    stores: PathBuf,
    #[arg(long)]
    ocr_text: Option<PathBuf>,
    #[arg(long)]
    logo_templates: Option<PathBuf>,
}

#[derive(Args)]
struct LayoutArgs {
    rectified: PathBuf,
    /// Store id whose column priors guide the split.
    #[arg(long)]
    store: Option<String>,
    /// Store database (required with --store).
    #[arg(long)]
    stores: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParseArgs {
    /// OCR transcript, one printed line per text line.
    #[arg(long)]
    ocr_text: PathBuf,
    #[arg(long)]
    ontology: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    receipts: usize,
    #[arg(long, default_value_t = 100)]
    non_receipts: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus directory written by `synth`; omitted: generate in memory.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    image: PathBuf,
    /// Ground-truth sidecar from the generator (replay OCR with geometry).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Plain OCR transcript (no geometry).
    #[arg(long)]
    ocr_text: Option<PathBuf>,
    /// Store database; defaults to the built-in synthetic stores.
    #[arg(long)]
    stores: Option<PathBuf>,
    /// Ontology; defaults to the built-in synthetic ontology.
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    logo_templates: Option<PathBuf>,
    /// OCR corruption rate for truth replay.
    #[arg(long, default_value_t = 0.0)]
    ocr_noise: f64,
}

fn receipt_backend(spec: &str, cfg: &PipelineConfig) -> anyhow::Result<Box<dyn SegmentationBackend>> {
    if spec == "heuristic" {
        Ok(Box::new(HeuristicReceiptBackend::new(BackendSpec::new(
            cfg.receipt_input_size,
            cfg.receipt_stride,
            vec!["receipt".into(), "not_receipt".into()],
        ))))
    } else if let Some(path) = spec.strip_prefix("oracle:") {
        Ok(Box::new(FileOracleBackend::from_sidecar(Path::new(path))?))
    } else {
        anyhow::bail!("unknown backend {spec:?} (expected `heuristic` or `oracle:<path>`)")
    }
}

fn emit<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn logo_classifier(
    path: Option<&Path>,
    stores: &StoreDb,
) -> anyhow::Result<Box<dyn ClassifierBackend>> {
    match path {
        Some(dir) => Ok(Box::new(TemplateLogoClassifier::from_dir(227, dir)?)),
        None => builtin_logo_classifier(stores),
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Detect(args) => {
            let img = load_image(&args.image)?;
            let mut det = cfg.detection.clone();
            det.heat_threshold = args.tau;
            det.receipt_ratio = args.rho;
            let backend = receipt_backend(&args.backend, &cfg)?;
            let hm = infer_heatmap(&img, backend.as_ref())?;
            let (image_hit, ratio) = detect_by_image(&hm, &det)?;
            let text = match &args.ocr_text {
                Some(p) => std::fs::read_to_string(p)?,
                None => String::new(),
            };
            let v = verdict(
                detect_by_text(&text),
                image_hit,
                ratio,
                find_product_lines(&text).len(),
            );
            let fused = v.fused;
            emit(&v)?;
            Ok(if fused { 0 } else { EXIT_NOT_RECEIPT })
        }
        Command::Crop(args) => {
            let img = load_image(&args.image)?;
            let mut crop_cfg = cfg.crop.clone();
            crop_cfg.margin = args.margin;
            let backend = receipt_backend(&args.backend, &cfg)?;
            let hm = infer_heatmap(&img, backend.as_ref())?;
            let result = crop_receipt(&img, &hm, &cfg.detection, &crop_cfg)?;
            save_pgm(&result.rectified, &args.out)?;
            let sidecar = serde_json::json!({
                "wide_box": result.wide_box,
                "quad": result.quad,
                "skew_angle": result.skew_angle,
                "fallback": result.fallback,
            });
            if let Some(path) = &args.emit_quad {
                std::fs::write(path, serde_json::to_vec_pretty(&sidecar)?)?;
            }
            emit(&sidecar)?;
            Ok(0)
        }
        Command::Sign(args) => {
            let img = load_image(&args.rectified)?;
            let stores = StoreDb::load(&args.stores)?;
            let cls = logo_classifier(args.logo_templates.as_deref(), &stores)?;
            let logo_seg = receiptforge::backends::InkDensityLogoBackend::logo_default();
            let logo = locate_logo(&img, &logo_seg, cls.as_ref(), &cfg.sign)?;
            let text = match &args.ocr_text {
                Some(p) => std::fs::read_to_string(p)?,
                None => String::new(),
            };
            let evidence = aggregate_text_evidence(
                &criterion_name(&text, &stores, &cfg.sign),
                &criterion_phone(&text, &stores),
                &criterion_terminology(&text, &stores, &cfg.sign),
            );
            let decision = fuse_sign(&evidence, logo.as_ref());
            let accepted = matches!(decision, SignDecision::Accepted { .. });
            emit(&decision)?;
            Ok(if accepted { 0 } else { EXIT_NEEDS_REVIEW })
        }
        Command::Layout(args) => {
            let img = load_image(&args.rectified)?;
            let priors = match (&args.store, &args.stores) {
                (Some(id), Some(db_path)) => {
                    let db = StoreDb::load(db_path)?;
                    db.get(id)
                        .map(|s| s.layout_priors.clone())
                        .ok_or_else(|| anyhow::anyhow!("unknown store {id:?}"))?
                }
                (Some(_), None) => anyhow::bail!("--store requires --stores"),
                _ => Vec::new(),
            };
            let mask = adaptive_binarize(&img, &cfg.layout.binarize);
            let blocks = build_hierarchy(&mask, &priors, &cfg.layout);
            std::fs::write(&args.out, serde_json::to_vec_pretty(&blocks)?)?;
            emit(&serde_json::json!({ "blocks": blocks.len(), "out": args.out }))?;
            Ok(0)
        }
        Command::Parse(args) => {
            let text = std::fs::read_to_string(&args.ocr_text)?;
            let ontology = Ontology::load(&args.ontology)?;
            let report = extract_products_from_text(
                &text,
                &ontology,
                &AbbreviationTable::builtin(),
                &cfg.stop_words,
                cfg.match_threshold,
            );
            emit(&report)?;
            Ok(0)
        }
        Command::Synth(args) => {
            let specs = default_specs(cfg.seed, args.receipts, args.non_receipts);
            write_corpus(&args.out, &specs, cfg.seed)?;
            emit(&serde_json::json!({
                "out": args.out,
                "receipts": args.receipts,
                "non_receipts": args.non_receipts,
                "seed": cfg.seed,
            }))?;
            Ok(0)
        }
        Command::Eval(args) => {
            let report = match &args.corpus {
                Some(dir) => evaluate_dir(dir, &cfg)?,
                None => evaluate_default(&cfg)?,
            };
            emit(&report)?;
            Ok(0)
        }
        Command::Pipeline(args) => {
            let img = load_image(&args.image)?;
            let stores = match &args.stores {
                Some(p) => StoreDb::load(p)?,
                None => default_stores(),
            };
            let ontology = match &args.ontology {
                Some(p) => Ontology::load(p)?,
                None => default_ontology(60),
            };
            let cls = logo_classifier(args.logo_templates.as_deref(), &stores)?;
            let ctx = PipelineContext::new(cfg.clone(), stores, ontology, cls);
            let outcome = match (&args.truth, &args.ocr_text) {
                (Some(truth_path), _) => {
                    let truth: GroundTruth =
                        serde_json::from_slice(&std::fs::read(truth_path)?)?;
                    let provider = TruthOcrProvider::new(
                        truth.lines.clone(),
                        truth.placement.clone(),
                        args.ocr_noise,
                        cfg.seed,
                    );
                    run_pipeline(&img, &provider, RegionSupport::Geometric, &ctx, cli.debug)?
                }
                (None, Some(text_path)) => {
                    let provider = TextOcrProvider::new(&std::fs::read_to_string(text_path)?);
                    run_pipeline(&img, &provider, RegionSupport::WholeImage, &ctx, cli.debug)?
                }
                (None, None) => {
                    let provider = TextOcrProvider::new("");
                    run_pipeline(&img, &provider, RegionSupport::WholeImage, &ctx, cli.debug)?
                }
            };
            let code = if !outcome.report.verdict.fused {
                EXIT_NOT_RECEIPT
            } else if matches!(
                outcome.report.sign,
                Some(SignDecision::NeedsHumanReview { .. })
            ) {
                EXIT_NEEDS_REVIEW
            } else {
                0
            };
            emit(&outcome.report)?;
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_ERROR);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
