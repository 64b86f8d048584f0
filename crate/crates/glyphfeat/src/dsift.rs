//! Dense upright SIFT descriptors on a fixed grid, plus seeded descriptor
//! sampling for dictionary training.
//!
//! Descriptors are the classic 4x4-cell, 8-orientation-bin layout (128
//! components). Gradients come from centered differences with edge
//! replication; contributions are soft-binned trilinearly over (x, y,
//! orientation) under a Gaussian spatial window with sigma = patch_size/2,
//! then L2-normalized, clamped at 0.2, and renormalized. No orientation
//! assignment is performed (upright descriptors), and flat patches yield the
//! all-zero vector instead of NaN.
//!
//! Components are rounded to `f32` precision on emission so the float32 dump
//! format ([`crate::persist`]) is lossless and cached extractions are
//! bit-for-bit equivalent to fresh ones.

use std::f64::consts::PI;

use ndarray::{Array2, ShapeBuilder};

use crate::dataset::{Dataset, LabeledImage};
use crate::rng::Rng;
use crate::{Error, Result};

/// SIFT descriptor length: 4x4 spatial cells times 8 orientation bins.
pub const DESCRIPTOR_DIM: usize = 128;

const CELLS: usize = 4;
const ORI_BINS: usize = 8;
/// Component clamp applied between the two normalization passes.
const CLAMP: f64 = 0.2;

/// One local descriptor with its normalized patch-center position.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDescriptor {
    /// 128 components; either unit L2 norm (within 1e-6) or exactly all-zero.
    pub vector: Vec<f64>,
    /// Patch center x divided by image side, in (0, 1).
    pub pos_x: f64,
    /// Patch center y divided by image side, in (0, 1).
    pub pos_y: f64,
    pub patch_size: usize,
}

impl DenseDescriptor {
    pub fn is_zero(&self) -> bool {
        self.vector.iter().all(|&v| v == 0.0)
    }
}

/// All descriptors of one image, in deterministic grid order (patch sizes in
/// the order given, then rows, then columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub descriptors: Vec<DenseDescriptor>,
    pub image_label: usize,
    pub image_id: String,
}

/// A matrix of sampled descriptors (`d x N`, one column per descriptor) with
/// the class label each column inherited from its source image.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledDescriptors {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
}

/// Per-pixel gradient magnitude and pre-quantized orientation weights,
/// computed once per image and shared across overlapping patches.
struct GradientField {
    side: usize,
    mag: Vec<f64>,
    bin0: Vec<u8>,
    bin1: Vec<u8>,
    /// Soft-binning weight on `bin0`; `bin1` gets the complement.
    w0: Vec<f64>,
}

fn gradient_field(img: &Array2<f64>) -> GradientField {
    let (h, w) = img.dim();
    let n = h * w;
    let mut field = GradientField {
        side: w,
        mag: vec![0.0; n],
        bin0: vec![0; n],
        bin1: vec![0; n],
        w0: vec![0.0; n],
    };
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            let gx = 0.5 * (img[[y, xp]] - img[[y, xm]]);
            let gy = 0.5 * (img[[yp, x]] - img[[ym, x]]);
            let m = (gx * gx + gy * gy).sqrt();
            let i = y * w + x;
            field.mag[i] = m;
            if m == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += 2.0 * PI;
            }
            // Orientation in bin units, [0, 8]; 8 only by rounding, folded to 0.
            let o = theta * ORI_BINS as f64 / (2.0 * PI);
            let f = o.floor();
            let b0 = f as usize % ORI_BINS;
            field.bin0[i] = b0 as u8;
            field.bin1[i] = ((b0 + 1) % ORI_BINS) as u8;
            field.w0[i] = 1.0 - (o - f);
        }
    }
    field
}

/// Per-pixel-offset cell interpolation: lower cell index (may be -1) and the
/// weight assigned to `index + 1`.
fn cell_weights(s: usize) -> Vec<(isize, f64)> {
    (0..s)
        .map(|p| {
            let u = (p as f64 + 0.5) * CELLS as f64 / s as f64 - 0.5;
            let f = u.floor();
            (f as isize, u - f)
        })
        .collect()
}

/// Separable Gaussian window over pixel offsets, sigma = s/2, centered on the
/// patch.
fn gauss_weights(s: usize) -> Vec<f64> {
    let sigma = s as f64 / 2.0;
    let center = (s as f64 - 1.0) / 2.0;
    (0..s)
        .map(|p| {
            let d = p as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Normalize, clamp at [`CLAMP`], renormalize, and round to f32 precision.
/// An exactly-zero histogram (flat patch) stays all-zero.
fn finalize(mut h: Vec<f64>) -> Vec<f64> {
    let energy: f64 = h.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return h;
    }
    let inv = 1.0 / energy.sqrt();
    for v in h.iter_mut() {
        *v *= inv;
        if *v > CLAMP {
            *v = CLAMP;
        }
    }
    debug_assert!(h.iter().all(|&v| (0.0..=CLAMP).contains(&v)));
    // After clamping, the largest component is still >= 1/sqrt(128), so the
    // second norm cannot vanish.
    let norm: f64 = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in h.iter_mut() {
        *v = (*v / norm) as f32 as f64;
    }
    h
}

fn descriptor_at(
    g: &GradientField,
    x0: usize,
    y0: usize,
    s: usize,
    cellw: &[(isize, f64)],
    gauss: &[f64],
) -> Vec<f64> {
    let mut hist = vec![0.0; DESCRIPTOR_DIM];
    for py in 0..s {
        let row = (y0 + py) * g.side + x0;
        let (cy0, wy1) = cellw[py];
        let gy = gauss[py];
        for px in 0..s {
            let i = row + px;
            let m = g.mag[i];
            if m == 0.0 {
                continue;
            }
            let spatial = m * gy * gauss[px];
            let (cx0, wx1) = cellw[px];
            let (b0, b1) = (g.bin0[i] as usize, g.bin1[i] as usize);
            let ow0 = g.w0[i];
            for (cy, wy) in [(cy0, 1.0 - wy1), (cy0 + 1, wy1)] {
                if !(0..CELLS as isize).contains(&cy) {
                    continue;
                }
                for (cx, wx) in [(cx0, 1.0 - wx1), (cx0 + 1, wx1)] {
                    if !(0..CELLS as isize).contains(&cx) {
                        continue;
                    }
                    let base = (cy as usize * CELLS + cx as usize) * ORI_BINS;
                    let wc = spatial * wy * wx;
                    hist[base + b0] += wc * ow0;
                    hist[base + b1] += wc * (1.0 - ow0);
                }
            }
        }
    }
    finalize(hist)
}

/// Extract descriptors at every grid point spaced `step` apart, for every
/// patch size, over a square image.
pub fn extract_dense(
    img: &LabeledImage,
    step: usize,
    patch_sizes: &[usize],
) -> Result<DescriptorSet> {
    let (h, w) = img.pixels.dim();
    if h != w {
        return Err(Error::Extract(format!(
            "image '{}' is {w}x{h}, expected square",
            img.source_id
        )));
    }
    let side = w;
    if step == 0 {
        return Err(Error::Extract("step must be >= 1".into()));
    }
    if patch_sizes.is_empty() {
        return Err(Error::Extract("at least one patch size is required".into()));
    }
    for &s in patch_sizes {
        if s < 8 {
            return Err(Error::Extract(format!("patch size {s} is below the minimum of 8")));
        }
        if s > side {
            return Err(Error::Extract(format!(
                "patch size {s} exceeds image side {side} for '{}'",
                img.source_id
            )));
        }
    }

    let field = gradient_field(&img.pixels);
    let mut descriptors = Vec::new();
    for &s in patch_sizes {
        let cellw = cell_weights(s);
        let gauss = gauss_weights(s);
        let per_axis = (side - s) / step + 1;
        let half = s as f64 / 2.0;
        for gy in 0..per_axis {
            let y0 = gy * step;
            for gx in 0..per_axis {
                let x0 = gx * step;
                descriptors.push(DenseDescriptor {
                    vector: descriptor_at(&field, x0, y0, s, &cellw, &gauss),
                    pos_x: (x0 as f64 + half) / side as f64,
                    pos_y: (y0 as f64 + half) / side as f64,
                    patch_size: s,
                });
            }
        }
    }
    Ok(DescriptorSet {
        descriptors,
        image_label: img.label,
        image_id: img.source_id.clone(),
    })
}

/// Pool non-zero descriptors from every image and draw `min(n, available)`
/// of them uniformly without replacement with the seeded generator.
///
/// Returns them as columns of a `128 x N` matrix together with the class
/// label of each column's source image.
pub fn sample_descriptors(
    ds: &Dataset,
    n: usize,
    step: usize,
    patch_sizes: &[usize],
    seed: u64,
) -> Result<SampledDescriptors> {
    if n == 0 {
        return Err(Error::Sample("sample count must be >= 1".into()));
    }
    // Flat column-major pool to avoid per-descriptor allocations.
    let mut pool: Vec<f64> = Vec::new();
    let mut pool_labels: Vec<usize> = Vec::new();
    for img in &ds.images {
        let set = extract_dense(img, step, patch_sizes)?;
        for d in &set.descriptors {
            if !d.is_zero() {
                pool.extend_from_slice(&d.vector);
                pool_labels.push(set.image_label);
            }
        }
    }
    let available = pool_labels.len();
    if available == 0 {
        return Err(Error::Sample(
            "no non-zero descriptors in the entire dataset (all patches flat)".into(),
        ));
    }
    let k = n.min(available);
    let mut rng = Rng::new(seed);
    let picks = rng.sample_indices(available, k);

    let mut x = Array2::zeros((DESCRIPTOR_DIM, k).f());
    let mut labels = Vec::with_capacity(k);
    for (col, &p) in picks.iter().enumerate() {
        let src = &pool[p * DESCRIPTOR_DIM..(p + 1) * DESCRIPTOR_DIM];
        x.column_mut(col)
            .iter_mut()
            .zip(src)
            .for_each(|(dst, &v)| *dst = v);
        labels.push(pool_labels[p]);
    }
    Ok(SampledDescriptors { x, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(side: usize, seed: u64) -> LabeledImage {
        let mut rng = Rng::new(seed);
        LabeledImage {
            pixels: Array2::from_shape_fn((side, side), |_| rng.next_f64()),
            label: 0,
            source_id: format!("rand-{seed}"),
        }
    }

    /// Literal reference extractor: recomputes gradients per patch and loops
    /// over every (cell, cell, bin) triple with triangle weights. Written
    /// independently of the production binning (floor/fraction) code path.
    fn oracle_descriptor(img: &Array2<f64>, x0: usize, y0: usize, s: usize) -> Vec<f64> {
        let side = img.ncols();
        let sigma = s as f64 / 2.0;
        let center = (s as f64 - 1.0) / 2.0;
        let tri = |u: f64, c: usize| (1.0 - (u - c as f64).abs()).max(0.0);
        let ori = |o: f64, b: usize| {
            let d = (o - b as f64).abs();
            (1.0 - d.min(8.0 - d)).max(0.0)
        };
        let mut hist = vec![0.0; 128];
        for py in 0..s {
            for px in 0..s {
                let (x, y) = (x0 + px, y0 + py);
                let xm = x.saturating_sub(1);
                let xp = (x + 1).min(side - 1);
                let ym = y.saturating_sub(1);
                let yp = (y + 1).min(side - 1);
                let gx = 0.5 * (img[[y, xp]] - img[[y, xm]]);
                let gy = 0.5 * (img[[yp, x]] - img[[ym, x]]);
                let m = (gx * gx + gy * gy).sqrt();
                if m == 0.0 {
                    continue;
                }
                let mut theta = gy.atan2(gx);
                if theta < 0.0 {
                    theta += 2.0 * PI;
                }
                let o = theta * 4.0 / PI;
                let dx = px as f64 - center;
                let dy = py as f64 - center;
                let gw = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                let u = (px as f64 + 0.5) * 4.0 / s as f64 - 0.5;
                let v = (py as f64 + 0.5) * 4.0 / s as f64 - 0.5;
                for cy in 0..4 {
                    for cx in 0..4 {
                        for b in 0..8 {
                            hist[(cy * 4 + cx) * 8 + b] +=
                                m * gw * tri(v, cy) * tri(u, cx) * ori(o, b);
                        }
                    }
                }
            }
        }
        let norm: f64 = hist.iter().map(|h| h * h).sum::<f64>().sqrt();
        if norm == 0.0 {
            return hist;
        }
        for h in hist.iter_mut() {
            *h = (*h / norm).min(0.2);
        }
        let norm2: f64 = hist.iter().map(|h| h * h).sum::<f64>().sqrt();
        for h in hist.iter_mut() {
            *h = (*h / norm2) as f32 as f64;
        }
        hist
    }

    #[test]
    fn constant_image_yields_all_zero_descriptors() {
        let img = LabeledImage {
            pixels: Array2::from_elem((40, 40), 0.3),
            label: 0,
            source_id: "flat".into(),
        };
        let set = extract_dense(&img, 4, &[16]).unwrap();
        assert!(!set.descriptors.is_empty());
        assert!(set.descriptors.iter().all(|d| d.is_zero()));
    }

    #[test]
    fn grid_count_follows_stated_rule() {
        let img = random_image(90, 1);
        let set = extract_dense(&img, 4, &[16]).unwrap();
        assert_eq!(set.descriptors.len(), 361); // ((90-16)/4 + 1)^2 = 19^2

        let multi = extract_dense(&random_image(48, 2), 4, &[12, 16, 24]).unwrap();
        let counts: Vec<usize> = [12usize, 16, 24]
            .iter()
            .map(|&s| multi.descriptors.iter().filter(|d| d.patch_size == s).count())
            .collect();
        assert_eq!(counts, vec![100, 81, 49]);
    }

    #[test]
    fn descriptors_are_unit_norm_bounded_and_f32_exact() {
        let set = extract_dense(&random_image(40, 3), 4, &[12, 16]).unwrap();
        let mut nonzero = 0;
        for d in &set.descriptors {
            assert!(d.pos_x > 0.0 && d.pos_x < 1.0);
            assert!(d.pos_y > 0.0 && d.pos_y < 1.0);
            assert_eq!(d.vector.len(), DESCRIPTOR_DIM);
            for &v in &d.vector {
                assert!((0.0..=1.0).contains(&v));
                assert_eq!(v, v as f32 as f64, "component not f32-representable");
            }
            if !d.is_zero() {
                nonzero += 1;
                let norm: f64 = d.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() <= 1e-6, "norm {norm}");
            }
        }
        assert!(nonzero > 0);
    }

    #[test]
    fn matches_naive_reference_extractor() {
        let mut compared = 0;
        for seed in 0..5u64 {
            let img = random_image(32, 100 + seed);
            let set = extract_dense(&img, 8, &[16]).unwrap();
            let per_axis = (32 - 16) / 8 + 1;
            for gy in 0..per_axis {
                for gx in 0..per_axis {
                    let got = &set.descriptors[gy * per_axis + gx].vector;
                    let want = oracle_descriptor(&img.pixels, gx * 8, gy * 8, 16);
                    for (a, b) in got.iter().zip(&want) {
                        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
                    }
                    compared += 1;
                }
            }
        }
        assert!(compared >= 45);
    }

    #[test]
    fn vertical_edge_lands_in_one_horizontal_orientation_bin() {
        // Left half dark, right half bright: gy = 0 everywhere and gx >= 0,
        // so every contribution has orientation exactly 0 (bin 0).
        let img = LabeledImage {
            pixels: Array2::from_shape_fn((32, 32), |(_, x)| if x < 16 { 0.0 } else { 1.0 }),
            label: 0,
            source_id: "edge".into(),
        };
        let set = extract_dense(&img, 4, &[16]).unwrap();
        let mut saw_edge = false;
        for d in &set.descriptors {
            if d.is_zero() {
                continue;
            }
            saw_edge = true;
            for (k, &v) in d.vector.iter().enumerate() {
                if k % 8 != 0 {
                    assert_eq!(v, 0.0, "unexpected mass in orientation bin {}", k % 8);
                }
            }
        }
        assert!(saw_edge);
    }

    #[test]
    fn shifting_content_by_step_permutes_interior_descriptors() {
        let mut rng = Rng::new(9);
        let base = Array2::from_shape_fn((40, 44), |_| rng.next_f64());
        let cut = |offset: usize| LabeledImage {
            pixels: Array2::from_shape_fn((40, 40), |(y, x)| base[[y, x + offset]]),
            label: 0,
            source_id: format!("cut-{offset}"),
        };
        let left = extract_dense(&cut(0), 4, &[16]).unwrap();
        let shifted = extract_dense(&cut(4), 4, &[16]).unwrap();
        let per_axis = (40 - 16) / 4 + 1;
        // Interior columns: patches whose gradient support stays clear of
        // the replicated borders in both crops.
        let mut pairs = 0;
        for gy in 0..per_axis {
            for gi in 1..=4usize {
                let a = &shifted.descriptors[gy * per_axis + gi].vector;
                let b = &left.descriptors[gy * per_axis + gi + 1].vector;
                assert_eq!(a, b);
                pairs += 1;
            }
        }
        assert!(pairs > 20);
    }

    fn tiny_dataset() -> Dataset {
        let images = (0..4)
            .map(|i| {
                let mut img = random_image(24, 50 + i as u64);
                img.label = i % 2;
                img.source_id = format!("img-{i}");
                img
            })
            .collect();
        Dataset::new(images, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn sampling_returns_exactly_n_columns() {
        let ds = tiny_dataset();
        let got = sample_descriptors(&ds, 37, 4, &[12], 11).unwrap();
        assert_eq!(got.x.dim(), (DESCRIPTOR_DIM, 37));
        assert_eq!(got.labels.len(), 37);
        assert!(got.labels.iter().all(|&l| l < 2));
    }

    #[test]
    fn sampling_caps_at_available_without_replacement() {
        let ds = tiny_dataset();
        // 24px images, patch 12, step 4 -> 4x4 grid -> 16 descriptors/image.
        let available: usize = ds
            .images
            .iter()
            .map(|img| {
                extract_dense(img, 4, &[12])
                    .unwrap()
                    .descriptors
                    .iter()
                    .filter(|d| !d.is_zero())
                    .count()
            })
            .sum();
        let got = sample_descriptors(&ds, 1_000_000, 4, &[12], 11).unwrap();
        assert_eq!(got.x.ncols(), available);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let ds = tiny_dataset();
        let a = sample_descriptors(&ds, 20, 4, &[12], 7).unwrap();
        let b = sample_descriptors(&ds, 20, 4, &[12], 7).unwrap();
        assert_eq!(a, b);
        let c = sample_descriptors(&ds, 20, 4, &[12], 8).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn all_flat_dataset_is_a_sampling_error() {
        let images = vec![LabeledImage {
            pixels: Array2::from_elem((24, 24), 0.5),
            label: 0,
            source_id: "flat".into(),
        }];
        let ds = Dataset::new(images, vec!["a".into()]).unwrap();
        let err = sample_descriptors(&ds, 10, 4, &[12], 1).unwrap_err();
        assert!(matches!(err, Error::Sample(_)), "{err}");
    }

    #[test]
    fn oversized_patch_is_an_extraction_error() {
        let err = extract_dense(&random_image(24, 1), 4, &[32]).unwrap_err();
        assert!(err.to_string().contains("exceeds image side"), "{err}");
    }
}
