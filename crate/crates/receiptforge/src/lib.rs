//! Receipt-photo understanding pipeline: detection, cropping, store-sign
//! recognition, layout analysis, OCR post-processing and product extraction.

pub mod backends;
pub mod config;
pub mod crop;
pub mod detect;
pub mod eval;
pub mod geom;
pub mod layout;
pub mod ocr;
pub mod pipeline;
pub mod raster;
pub mod semantics;
pub mod sign;
pub mod synth;
pub mod textmatch;
