//! Deterministic corpus generation: builds the sample specs for a benchmark
//! run and writes images, ground truth and shared assets to disk.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::raster::save_pgm;

use super::catalog::{default_ontology, default_stores};
use super::render::render_logo;
use super::scene::{generate, Background, LogoPlacement, SyntheticSpec};

pub const DEFAULT_RECEIPTS: usize = 200;
pub const DEFAULT_NON_RECEIPTS: usize = 100;
pub const CORPUS_ONTOLOGY_SIZE: usize = 60;

/// Stable per-sample seed derived from the corpus seed and sample index.
pub fn sample_seed(corpus_seed: u64, index: u64) -> u64 {
    let mut h = corpus_seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58476d1ce4e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d049bb133111eb);
    h ^ (h >> 31)
}

const ROTATIONS: [f64; 8] = [0.0, 3.0, -4.0, 8.0, -10.0, 15.0, 5.0, -2.0];
const BACKGROUNDS: [Background; 3] =
    [Background::Plain, Background::Textured, Background::PhotoTile];
const NOISE: [f64; 3] = [0.0, 4.0, 8.0];

/// Build the default benchmark specs: `receipts` receipt scenes followed by
/// `non_receipts` background-only scenes. The mix cycles rotation,
/// background, noise, logo placement and frame clipping so every pipeline
/// stage sees each condition.
pub fn default_specs(corpus_seed: u64, receipts: usize, non_receipts: usize) -> Vec<SyntheticSpec> {
    let mut specs = Vec::with_capacity(receipts + non_receipts);
    for i in 0..receipts {
        let inverted = i % 7 == 0;
        let logo = if inverted {
            LogoPlacement::BottomInverted
        } else if i % 11 == 0 {
            LogoPlacement::None
        } else {
            LogoPlacement::Top
        };
        // Frame-clipped samples keep the receipt upright and square-on so
        // the missing bottom edge is the only complication.
        let clipped = i % 9 == 0 && !inverted;
        let (rotation, background) = if clipped {
            (0.0, Background::Textured)
        } else {
            (ROTATIONS[i % ROTATIONS.len()], BACKGROUNDS[i % BACKGROUNDS.len()])
        };
        specs.push(SyntheticSpec {
            id: format!("r{i:03}"),
            receipt: true,
            store_index: i % 10,
            product_count: 3 + i % 5,
            rotation,
            background,
            noise_sigma: NOISE[i % NOISE.len()],
            logo,
            clipped,
            ocr_noise: 0.0,
            seed: sample_seed(corpus_seed, i as u64),
        });
    }
    for i in 0..non_receipts {
        specs.push(SyntheticSpec {
            id: format!("n{i:03}"),
            receipt: false,
            store_index: 0,
            product_count: 0,
            rotation: 0.0,
            background: BACKGROUNDS[i % BACKGROUNDS.len()],
            noise_sigma: NOISE[i % NOISE.len()],
            logo: LogoPlacement::None,
            clipped: false,
            ocr_noise: 0.0,
            seed: sample_seed(corpus_seed, (receipts + i) as u64),
        });
    }
    specs
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema: String,
    pub seed: u64,
    pub samples: Vec<SyntheticSpec>,
}

/// Write a full corpus under `dir`:
///
/// ```text
/// dir/manifest.json
/// dir/assets/{stores.json, ontology.json, logos/<store_id>_0.pgm}
/// dir/samples/<id>/{image.pgm, truth.json}
/// ```
pub fn write_corpus(dir: &Path, specs: &[SyntheticSpec], seed: u64) -> anyhow::Result<()> {
    let stores = default_stores();
    let ontology = default_ontology(CORPUS_ONTOLOGY_SIZE);

    let assets = dir.join("assets");
    let logos = assets.join("logos");
    fs::create_dir_all(&logos)?;
    fs::write(assets.join("stores.json"), serde_json::to_vec_pretty(&stores)?)?;
    fs::write(assets.join("ontology.json"), serde_json::to_vec_pretty(&ontology)?)?;
    for (i, store) in stores.stores.iter().enumerate() {
        let logo = render_logo(store, i);
        save_pgm(&logo, &logos.join(format!("{}_0.pgm", store.store_id)))?;
    }

    for spec in specs {
        let sample_dir = dir.join("samples").join(&spec.id);
        fs::create_dir_all(&sample_dir)?;
        let (image, truth) = generate(spec, &stores, &ontology);
        save_pgm(&image, &sample_dir.join("image.pgm"))?;
        fs::write(sample_dir.join("truth.json"), serde_json::to_vec_pretty(&truth)?)?;
    }

    let manifest = CorpusManifest {
        schema: "corpus-v1".into(),
        seed,
        samples: specs.to_vec(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> anyhow::Result<CorpusManifest> {
    let manifest: CorpusManifest =
        serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    anyhow::ensure!(manifest.schema == "corpus-v1", "unknown manifest schema");
    Ok(manifest)
}
