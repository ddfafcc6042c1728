//! Composites a rendered receipt strip onto a background scene with
//! rotation, optional inversion and Gaussian sensor noise, and emits the
//! matching ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{BBox, Quad};
use crate::ocr::LineTruth;
use crate::raster::GrayImage;
use crate::semantics::Ontology;
use crate::sign::StoreDb;

use super::catalog::concept_print_label;
use super::render::{render_strip, TruthProduct};

pub const SCENE_W: usize = 640;
const STRIP_TOP: usize = 130;
/// Dark frame-edge stripe width on textured scenes.
const STRIPE_W: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Plain,
    Textured,
    PhotoTile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogoPlacement {
    Top,
    BottomInverted,
    None,
}

/// Everything that determines one sample bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub id: String,
    pub receipt: bool,
    pub store_index: usize,
    pub product_count: usize,
    pub rotation: f64,
    pub background: Background,
    pub noise_sigma: f64,
    pub logo: LogoPlacement,
    /// Receipt bottom margin runs past the frame edge.
    pub clipped: bool,
    /// Per-character corruption rate applied by the replay OCR backend.
    #[serde(default)]
    pub ocr_noise: f64,
    pub seed: u64,
}

/// Rigid placement of the upright strip in the scene: rotation about the
/// strip center (180 degrees folded in for inverted receipts) followed by
/// the translation to `scene_center`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StripPlacement {
    pub theta: f64,
    pub strip_w: usize,
    pub strip_h: usize,
    pub scene_center: (f64, f64),
}

impl StripPlacement {
    pub fn strip_to_scene(&self, x: f64, y: f64) -> (f64, f64) {
        let rad = self.theta.to_radians();
        let (sin, cos) = rad.sin_cos();
        let (cx, cy) = ((self.strip_w as f64 - 1.0) / 2.0, (self.strip_h as f64 - 1.0) / 2.0);
        let (dx, dy) = (x - cx, y - cy);
        (cos * dx - sin * dy + self.scene_center.0, sin * dx + cos * dy + self.scene_center.1)
    }

    fn scene_to_strip(&self, x: f64, y: f64) -> (f64, f64) {
        let rad = self.theta.to_radians();
        let (sin, cos) = rad.sin_cos();
        let (cx, cy) = ((self.strip_w as f64 - 1.0) / 2.0, (self.strip_h as f64 - 1.0) / 2.0);
        let (dx, dy) = (x - self.scene_center.0, y - self.scene_center.1);
        (cos * dx + sin * dy + cx, -sin * dx + cos * dy + cy)
    }

    /// Strip corners mapped to the scene, TL TR BR BL of the upright strip.
    pub fn quad(&self) -> Quad {
        let (w, h) = (self.strip_w as f64, self.strip_h as f64);
        Quad::new([
            self.strip_to_scene(0.0, 0.0),
            self.strip_to_scene(w, 0.0),
            self.strip_to_scene(w, h),
            self.strip_to_scene(0.0, h),
        ])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub present: bool,
    pub store_id: Option<String>,
    pub placement: Option<StripPlacement>,
    /// Visible receipt bounding box in scene coordinates.
    pub receipt_box: Option<BBox>,
    pub quad: Option<Quad>,
    /// Logo box in strip coordinates.
    pub logo_box: Option<BBox>,
    pub inverted: bool,
    /// Text lines in strip coordinates, top to bottom.
    pub lines: Vec<LineTruth>,
    pub products: Vec<TruthProduct>,
}

fn background_value(bg: Background, x: usize, y: usize, w: usize, seed: u64) -> u8 {
    match bg {
        Background::Plain => 70,
        Background::Textured => {
            if x + STRIPE_W >= w {
                return 30;
            }
            let (bx, by) = (x / 32, y / 32);
            let mut h = seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add((bx as u64) << 32 | by as u64);
            h ^= h >> 29;
            h = h.wrapping_mul(0xbf58476d1ce4e5b9);
            h ^= h >> 32;
            130 + (h % 41) as u8
        }
        Background::PhotoTile => {
            let grad = 60.0 + 110.0 * x as f64 / (w - 1) as f64;
            let ripple = 15.0 * (y as f64 / 37.0).sin();
            (grad + ripple).clamp(45.0, 195.0) as u8
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; both uniforms strictly inside (0, 1).
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Render one sample. The spec seed fully determines the output.
pub fn generate(
    spec: &SyntheticSpec,
    stores: &StoreDb,
    ontology: &Ontology,
) -> (GrayImage, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    if !spec.receipt {
        let h = 560;
        let img = finish_scene(vec![0u8; SCENE_W * h], SCENE_W, h, spec, None, &mut rng);
        return (
            img,
            GroundTruth {
                present: false,
                store_id: None,
                placement: None,
                receipt_box: None,
                quad: None,
                logo_box: None,
                inverted: false,
                lines: Vec::new(),
                products: Vec::new(),
            },
        );
    }

    let store = &stores.stores[spec.store_index];
    let mut products = Vec::with_capacity(spec.product_count);
    for _ in 0..spec.product_count {
        let idx = rng.gen_range(0..ontology.concepts.len());
        let qty = if rng.gen_bool(0.2) { rng.gen_range(2..=3) } else { 1 };
        let cents = rng.gen_range(30..3000);
        products.push((
            ontology.concepts[idx].id.clone(),
            concept_print_label(ontology, idx),
            qty,
            cents,
        ));
    }
    let with_logo = spec.logo != LogoPlacement::None;
    let extra_bottom = if spec.clipped { 80 } else { 0 };
    let strip = render_strip(store, spec.store_index, &products, with_logo, extra_bottom, &mut rng);

    let (sw, sh) = (strip.image.width(), strip.image.height());
    let inverted = spec.logo == LogoPlacement::BottomInverted;
    let theta = spec.rotation + if inverted { 180.0 } else { 0.0 };
    // Clipped scenes cut the frame 40 px into the strip's blank bottom
    // margin; everything else gets a full background border.
    let scene_h = if spec.clipped { STRIP_TOP + sh - 40 } else { STRIP_TOP + sh + STRIP_TOP };
    let center = (SCENE_W as f64 / 2.0, STRIP_TOP as f64 + sh as f64 / 2.0);
    let placement = StripPlacement {
        theta,
        strip_w: sw,
        strip_h: sh,
        scene_center: center,
    };

    let mut px = vec![0u8; SCENE_W * scene_h];
    let img = finish_scene(px.drain(..).collect(), SCENE_W, scene_h, spec, Some((&placement, &strip.image)), &mut rng);

    let quad = placement.quad();
    let receipt_box = quad.bounding_box().clamped(SCENE_W as i64, scene_h as i64);
    (
        img,
        GroundTruth {
            present: true,
            store_id: Some(store.store_id.clone()),
            placement: Some(placement),
            receipt_box: Some(receipt_box),
            quad: Some(quad),
            logo_box: strip.logo_box,
            inverted,
            lines: strip.lines,
            products: strip.products,
        },
    )
}

fn finish_scene(
    mut px: Vec<u8>,
    w: usize,
    h: usize,
    spec: &SyntheticSpec,
    strip: Option<(&StripPlacement, &GrayImage)>,
    rng: &mut ChaCha8Rng,
) -> GrayImage {
    for y in 0..h {
        for x in 0..w {
            let mut v = background_value(spec.background, x, y, w, spec.seed);
            if let Some((placement, strip_img)) = strip {
                let (sx, sy) = placement.scene_to_strip(x as f64, y as f64);
                if sx >= -0.5
                    && sy >= -0.5
                    && sx < strip_img.width() as f64 - 0.5
                    && sy < strip_img.height() as f64 - 0.5
                {
                    v = strip_img.sample_bilinear(sx, sy, v);
                }
            }
            px[y * w + x] = v;
        }
    }
    if spec.noise_sigma > 0.0 {
        for v in px.iter_mut() {
            let noisy = *v as f64 + spec.noise_sigma * gaussian(rng);
            *v = noisy.clamp(0.0, 255.0) as u8;
        }
    }
    GrayImage::new(w, h, px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::catalog::{default_ontology, default_stores};

    fn spec(id: &str) -> SyntheticSpec {
        SyntheticSpec {
            id: id.into(),
            receipt: true,
            store_index: 0,
            product_count: 4,
            rotation: 0.0,
            background: Background::Plain,
            noise_sigma: 0.0,
            logo: LogoPlacement::Top,
            clipped: false,
            ocr_noise: 0.0,
            seed: 7,
        }
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let stores = default_stores();
        let ontology = default_ontology(60);
        let (a, ta) = generate(&spec("x"), &stores, &ontology);
        let (b, tb) = generate(&spec("x"), &stores, &ontology);
        assert_eq!(a.pixels(), b.pixels());
        assert_eq!(
            serde_json::to_string(&ta).unwrap(),
            serde_json::to_string(&tb).unwrap()
        );
    }

    #[test]
    fn receipt_region_is_bright_background_is_dark() {
        let stores = default_stores();
        let ontology = default_ontology(60);
        let (img, truth) = generate(&spec("x"), &stores, &ontology);
        let b = truth.receipt_box.unwrap();
        // Strip corners hold paper white; outside the quad is background.
        assert!(img.get((b.x + 5) as usize, (b.y + 5) as usize) > 200);
        assert!(img.get(5, 5) < 100);
    }

    #[test]
    fn placement_round_trip() {
        let p = StripPlacement {
            theta: 12.0,
            strip_w: 400,
            strip_h: 500,
            scene_center: (320.0, 380.0),
        };
        let (sx, sy) = p.strip_to_scene(13.0, 77.0);
        let (bx, by) = p.scene_to_strip(sx, sy);
        assert!((bx - 13.0).abs() < 1e-9 && (by - 77.0).abs() < 1e-9);
    }

    #[test]
    fn inverted_receipt_flips_strip_content() {
        let stores = default_stores();
        let ontology = default_ontology(60);
        let mut s = spec("x");
        s.logo = LogoPlacement::BottomInverted;
        let (img, truth) = generate(&s, &stores, &ontology);
        assert!(truth.inverted);
        // The logo (dense dark block) sits in the lower half of the scene.
        let b = truth.receipt_box.unwrap();
        let dark = |y0: i64, y1: i64| -> usize {
            let mut n = 0;
            for y in y0..y1 {
                for x in b.x..b.right() {
                    if img.get(x as usize, y as usize) < 50 {
                        n += 1;
                    }
                }
            }
            n
        };
        let mid = (b.y + b.bottom()) / 2;
        assert!(dark(mid, b.bottom()) > dark(b.y, mid) + 1000);
    }

    #[test]
    fn non_receipt_has_no_truth_content() {
        let stores = default_stores();
        let ontology = default_ontology(60);
        let mut s = spec("bg");
        s.receipt = false;
        s.background = Background::Textured;
        let (_, truth) = generate(&s, &stores, &ontology);
        assert!(!truth.present && truth.lines.is_empty() && truth.products.is_empty());
    }

    #[test]
    fn clipped_strip_reaches_frame_bottom_with_paper() {
        let stores = default_stores();
        let ontology = default_ontology(60);
        let mut s = spec("clip");
        s.clipped = true;
        let (img, truth) = generate(&s, &stores, &ontology);
        let h = img.height();
        // Bottom rows at the strip center are paper, not background.
        assert!(img.get(320, h - 2) > 200);
        // All text lines stay inside the frame.
        let placement = truth.placement.unwrap();
        for line in &truth.lines {
            let (_, y) = placement.strip_to_scene(0.0, line.box_.bottom() as f64);
            assert!(y < h as f64 - 2.0, "line {:?} clipped", line.text);
        }
    }
}
