//! Deterministic synthetic receipt-scene generation for benchmarks and
//! regression tests: bitmap font, store/product catalog, strip renderer,
//! scene compositor and corpus writer.

pub mod catalog;
pub mod corpus;
pub mod font;
pub mod render;
pub mod scene;

pub use catalog::{default_ontology, default_stores};
pub use corpus::{default_specs, read_manifest, sample_seed, write_corpus, CorpusManifest};
pub use render::{render_logo, render_strip, StripRender, TruthProduct};
pub use scene::{
    generate, Background, GroundTruth, LogoPlacement, StripPlacement, SyntheticSpec,
};
