//! Procedural glyph dataset generation.
//!
//! Each class index maps to a fixed stroke pattern: the bits of
//! `class + 1` select a subset of six stroke primitives (segments and arcs)
//! laid out in disjoint regions of the unit square, so any two classes
//! differ by at least one whole stroke. Samples are rendered with seeded
//! rotation, scale, translation, contrast and pixel-noise jitter.
//!
//! Intensities are quantized to the 8-bit grid (multiples of 1/255) at the
//! end, which makes writing a sample to PGM and reloading it lossless.

use ndarray::Array2;

use super::{Dataset, LabeledImage};
use crate::rng::Rng;
use crate::{Error, Result};

const STROKE_HALF_WIDTH: f64 = 0.065;
pub(crate) const MAX_CLASSES: usize = 36;

#[derive(Clone, Copy)]
enum Stroke {
    Segment {
        a: (f64, f64),
        b: (f64, f64),
    },
    /// Circular arc from `start_deg` sweeping `sweep_deg` counter-clockwise
    /// in image coordinates (y down).
    Arc {
        center: (f64, f64),
        radius: f64,
        start_deg: f64,
        sweep_deg: f64,
    },
}

/// Six primitives in disjoint regions (three columns by two rows), mixing
/// orientations and curvature so stroke subsets stay distinguishable under
/// the sampling jitter.
const STROKES: [Stroke; 6] = [
    Stroke::Segment {
        a: (0.165, 0.07),
        b: (0.165, 0.43),
    },
    Stroke::Arc {
        center: (0.5, 0.25),
        radius: 0.10,
        start_deg: 0.0,
        sweep_deg: 270.0,
    },
    Stroke::Segment {
        a: (0.73, 0.07),
        b: (0.94, 0.43),
    },
    Stroke::Segment {
        a: (0.04, 0.93),
        b: (0.25, 0.57),
    },
    Stroke::Arc {
        center: (0.5, 0.75),
        radius: 0.10,
        start_deg: 135.0,
        sweep_deg: 270.0,
    },
    Stroke::Segment {
        a: (0.94, 0.57),
        b: (0.73, 0.93),
    },
];

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let ap = (p.0 - a.0, p.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    let t = ((ap.0 * ab.0 + ap.1 * ab.1) / len2).clamp(0.0, 1.0);
    dist2(p, (a.0 + t * ab.0, a.1 + t * ab.1))
}

fn arc_point(center: (f64, f64), radius: f64, deg: f64) -> (f64, f64) {
    let rad = deg.to_radians();
    (center.0 + radius * rad.cos(), center.1 + radius * rad.sin())
}

fn arc_distance(p: (f64, f64), center: (f64, f64), radius: f64, start: f64, sweep: f64) -> f64 {
    let v = (p.0 - center.0, p.1 - center.1);
    let ang = v.1.atan2(v.0).to_degrees();
    let rel = (ang - start).rem_euclid(360.0);
    if rel <= sweep {
        ((v.0 * v.0 + v.1 * v.1).sqrt() - radius).abs()
    } else {
        let e0 = arc_point(center, radius, start);
        let e1 = arc_point(center, radius, start + sweep);
        dist2(p, e0).min(dist2(p, e1))
    }
}

impl Stroke {
    fn distance(&self, p: (f64, f64)) -> f64 {
        match *self {
            Stroke::Segment { a, b } => segment_distance(p, a, b),
            Stroke::Arc {
                center,
                radius,
                start_deg,
                sweep_deg,
            } => arc_distance(p, center, radius, start_deg, sweep_deg),
        }
    }
}

/// Pattern intensity at unit-square point `p` for the given class:
/// antialiased max coverage over the class's strokes.
fn pattern_at(class: usize, p: (f64, f64), aa: f64) -> f64 {
    let code = class + 1;
    let mut best = 0.0f64;
    for (slot, stroke) in STROKES.iter().enumerate() {
        if code & (1 << slot) == 0 {
            continue;
        }
        let d = stroke.distance(p);
        let cov = ((STROKE_HALF_WIDTH - d) / aa + 0.5).clamp(0.0, 1.0);
        best = best.max(cov);
    }
    best
}

fn quantize(v: f64) -> f64 {
    (v * 255.0).round().clamp(0.0, 255.0) / 255.0
}

/// Render the canonical (jitter-free) stroke pattern for a class,
/// quantized to the 8-bit grid.
pub fn render_glyph(class: usize, side: usize) -> Array2<f64> {
    let aa = 1.0 / side as f64;
    Array2::from_shape_fn((side, side), |(y, x)| {
        let p = ((x as f64 + 0.5) * aa, (y as f64 + 0.5) * aa);
        quantize(pattern_at(class, p, aa))
    })
}

/// Per-sample jitter ranges. [`JitterConfig::default`] gives the standard
/// desk-benchmark jitter; [`JitterConfig::none`] collapses every range so
/// each sample is the canonical rendering.
#[derive(Debug, Clone)]
pub struct JitterConfig {
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    /// Max translation per axis, as a fraction of the side length.
    pub max_translation: f64,
    pub noise_sigma: f64,
    pub contrast_range: (f64, f64),
}

impl Default for JitterConfig {
    fn default() -> Self {
        JitterConfig {
            max_rotation_deg: 15.0,
            scale_range: (0.85, 1.15),
            max_translation: 0.05,
            noise_sigma: 0.02,
            contrast_range: (0.7, 1.0),
        }
    }
}

impl JitterConfig {
    pub fn none() -> Self {
        JitterConfig {
            max_rotation_deg: 0.0,
            scale_range: (1.0, 1.0),
            max_translation: 0.0,
            noise_sigma: 0.0,
            contrast_range: (1.0, 1.0),
        }
    }
}

fn render_sample(class: usize, side: usize, jitter: &JitterConfig, rng: &mut Rng) -> Array2<f64> {
    // Fixed draw order: rotation, scale, tx, ty, contrast, then per-pixel
    // noise in row-major order.
    let theta = rng
        .uniform(-jitter.max_rotation_deg, jitter.max_rotation_deg)
        .to_radians();
    let scale = rng.uniform(jitter.scale_range.0, jitter.scale_range.1);
    let tx = rng.uniform(-jitter.max_translation, jitter.max_translation);
    let ty = rng.uniform(-jitter.max_translation, jitter.max_translation);
    let contrast = rng.uniform(jitter.contrast_range.0, jitter.contrast_range.1);

    let aa = 1.0 / side as f64;
    let (sin, cos) = theta.sin_cos();
    let mut img = Array2::zeros((side, side));
    for y in 0..side {
        for x in 0..side {
            let px = (x as f64 + 0.5) * aa - 0.5 - tx;
            let py = (y as f64 + 0.5) * aa - 0.5 - ty;
            // Inverse transform: undo rotation, then scale, back to pattern space.
            let qx = (cos * px + sin * py) / scale + 0.5;
            let qy = (-sin * px + cos * py) / scale + 0.5;
            let v = contrast * pattern_at(class, (qx, qy), aa);
            let noisy = v + jitter.noise_sigma * rng.normal();
            img[[y, x]] = quantize(noisy.clamp(0.0, 1.0));
        }
    }
    img
}

pub(crate) fn class_name(class: usize) -> String {
    format!("c{class:02}")
}

/// Generate a synthetic glyph dataset with the default jitter.
pub fn synth_glyphs(num_classes: usize, per_class: usize, side: usize, seed: u64) -> Result<Dataset> {
    synth_glyphs_with(num_classes, per_class, side, seed, &JitterConfig::default())
}

/// Generate a synthetic glyph dataset with explicit jitter ranges.
///
/// Deterministic given (arguments, seed): one generator stream is consumed
/// class by class, sample by sample.
pub fn synth_glyphs_with(
    num_classes: usize,
    per_class: usize,
    side: usize,
    seed: u64,
    jitter: &JitterConfig,
) -> Result<Dataset> {
    if !(2..=MAX_CLASSES).contains(&num_classes) {
        return Err(Error::Config(format!(
            "synth_glyphs: num_classes must be in 2..={MAX_CLASSES}, got {num_classes}"
        )));
    }
    if per_class == 0 {
        return Err(Error::Config("synth_glyphs: per_class must be >= 1".into()));
    }
    if side < 32 {
        return Err(Error::Config(format!(
            "synth_glyphs: side must be >= 32, got {side}"
        )));
    }
    let mut rng = Rng::new(seed);
    let class_names: Vec<String> = (0..num_classes).map(class_name).collect();
    let mut images = Vec::with_capacity(num_classes * per_class);
    for class in 0..num_classes {
        for sample in 0..per_class {
            let pixels = render_sample(class, side, jitter, &mut rng);
            images.push(LabeledImage {
                pixels,
                label: class,
                source_id: format!("{}/{sample:04}.pgm", class_names[class]),
            });
        }
    }
    Dataset::new(images, class_names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_counts_and_classes() {
        let ds = synth_glyphs(10, 20, 90, 1).unwrap();
        assert_eq!(ds.images.len(), 200);
        assert_eq!(ds.num_classes(), 10);
        for c in 0..10 {
            assert_eq!(ds.images.iter().filter(|im| im.label == c).count(), 20);
        }
    }

    #[test]
    fn identical_arguments_give_identical_pixels() {
        let a = synth_glyphs(4, 3, 48, 99).unwrap();
        let b = synth_glyphs(4, 3, 48, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = synth_glyphs(4, 3, 48, 1).unwrap();
        let b = synth_glyphs(4, 3, 48, 2).unwrap();
        assert_ne!(a.images[0].pixels, b.images[0].pixels);
    }

    #[test]
    fn collapsed_jitter_reproduces_canonical_patterns() {
        let ds = synth_glyphs_with(5, 1, 64, 7, &JitterConfig::none()).unwrap();
        for (class, img) in ds.images.iter().enumerate() {
            assert_eq!(img.pixels, render_glyph(class, 64), "class {class}");
        }
    }

    #[test]
    fn intensities_stay_in_unit_range() {
        let ds = synth_glyphs(6, 4, 48, 3).unwrap();
        for img in &ds.images {
            assert!(img.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn canonical_patterns_are_pairwise_distinct() {
        // Every pair of canonical renderings must differ in at least 5% of
        // pixels, across the full class range.
        let side = 90;
        let renders: Vec<Array2<f64>> = (0..MAX_CLASSES).map(|c| render_glyph(c, side)).collect();
        let threshold = (side * side) as f64 * 0.05;
        for a in 0..MAX_CLASSES {
            for b in (a + 1)..MAX_CLASSES {
                let differing = renders[a]
                    .iter()
                    .zip(renders[b].iter())
                    .filter(|(x, y)| (**x - **y).abs() >= 0.5)
                    .count();
                assert!(
                    differing as f64 >= threshold,
                    "classes {a} and {b} differ in only {differing} pixels"
                );
            }
        }
    }
}
