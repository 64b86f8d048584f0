//! Labeled character images: ingestion, resizing, deterministic splits, and
//! synthetic glyph generation.
//!
//! On-disk layout is one subdirectory per class under a dataset root, each
//! holding binary 8-bit PGM files:
//!
//! ```text
//! root/<class_name>/<file>.pgm
//! ```
//!
//! Class order is the lexicographic subdirectory order and images within a
//! class are ordered by filename, so loading is independent of filesystem
//! enumeration order.

mod pgm;
mod synth;

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::rng::Rng;
use crate::{Error, Result};

pub use pgm::{read_pgm, write_pgm};
pub use synth::{render_glyph, synth_glyphs, synth_glyphs_with, JitterConfig};

/// A grayscale image with intensities in `[0, 1]`, stored `height x width`
/// (row-major, y first).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: Array2<f64>,
    /// 0-based class index.
    pub label: usize,
    /// Provenance string, unique within a dataset (e.g. `"a/0003.pgm"`).
    pub source_id: String,
}

impl LabeledImage {
    pub fn new(pixels: Array2<f64>, label: usize, source_id: String) -> Result<Self> {
        let (h, w) = pixels.dim();
        if h == 0 || w == 0 {
            return Err(Error::Config("image must be at least 1x1".into()));
        }
        if !pixels.iter().all(|&v| (0.0..=1.0).contains(&v)) {
            return Err(Error::Config(format!(
                "image '{source_id}' has intensities outside [0, 1]"
            )));
        }
        Ok(LabeledImage {
            pixels,
            label,
            source_id,
        })
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }
}

/// An ordered collection of labeled images with named classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<LabeledImage>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(images: Vec<LabeledImage>, class_names: Vec<String>) -> Result<Self> {
        let mut sorted = class_names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != class_names.len() {
            return Err(Error::Config("class names must be unique".into()));
        }
        if let Some(img) = images.iter().find(|im| im.label >= class_names.len()) {
            return Err(Error::Config(format!(
                "image '{}' has label {} but there are only {} classes",
                img.source_id,
                img.label,
                class_names.len()
            )));
        }
        Ok(Dataset {
            images,
            class_names,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

/// Per-class train/test sizes plus the shuffle seed.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

/// Load a `root/<class>/<file>.pgm` tree.
///
/// Classes are the sorted subdirectory names; images within a class are
/// decoded in sorted filename order, with intensities `byte / 255`.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::Config(format!(
            "dataset root '{}' is not a directory",
            root.display()
        )));
    }
    let mut class_dirs: Vec<(String, std::path::PathBuf)> = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if entry.path().is_dir() {
            class_dirs.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::Config(format!(
            "dataset root '{}' contains no class subdirectories",
            root.display()
        )));
    }

    let mut images = Vec::new();
    let mut class_names = Vec::with_capacity(class_dirs.len());
    for (label, (name, dir)) in class_dirs.iter().enumerate() {
        let mut files: Vec<std::path::PathBuf> = fs::read_dir(dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Decode {
                path: dir.clone(),
                msg: format!("class '{name}' has no images"),
            });
        }
        for file in files {
            let pixels = read_pgm(&file)?;
            let file_name = file.file_name().unwrap().to_string_lossy().into_owned();
            images.push(LabeledImage {
                pixels,
                label,
                source_id: format!("{name}/{file_name}"),
            });
        }
        class_names.push(name.clone());
    }
    Dataset::new(images, class_names)
}

/// Write a dataset back out as a `root/<class>/<nnnn>.pgm` tree, numbering
/// images per class in dataset order.
pub fn save_pgm_tree(ds: &Dataset, root: &Path) -> Result<()> {
    fs::create_dir_all(root)?;
    let mut counters = vec![0usize; ds.num_classes()];
    for name in &ds.class_names {
        fs::create_dir_all(root.join(name))?;
    }
    for img in &ds.images {
        let idx = counters[img.label];
        counters[img.label] += 1;
        let path = root
            .join(&ds.class_names[img.label])
            .join(format!("{idx:04}.pgm"));
        write_pgm(&path, &img.pixels)?;
    }
    Ok(())
}

/// Bilinear resize with edge clamping to a square `size x size` image.
///
/// Source coordinates use the half-pixel-center convention, so resizing to
/// the input size is the identity and constants are preserved exactly.
pub fn resize_image(img: &LabeledImage, size: usize) -> LabeledImage {
    assert!(size >= 2, "resize target must be >= 2");
    let (h, w) = img.pixels.dim();
    let sx_scale = w as f64 / size as f64;
    let sy_scale = h as f64 / size as f64;
    let src = &img.pixels;
    let pixels = Array2::from_shape_fn((size, size), |(dy, dx)| {
        let sx = ((dx as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (w - 1) as f64);
        let sy = ((dy as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (h - 1) as f64);
        let x0 = sx.floor() as usize;
        let y0 = sy.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = sx - x0 as f64;
        let fy = sy - y0 as f64;
        let top = src[[y0, x0]] * (1.0 - fx) + src[[y0, x1]] * fx;
        let bottom = src[[y1, x0]] * (1.0 - fx) + src[[y1, x1]] * fx;
        top * (1.0 - fy) + bottom * fy
    });
    LabeledImage {
        pixels,
        label: img.label,
        source_id: img.source_id.clone(),
    }
}

/// Deterministic per-class split: shuffle each class with the seeded
/// generator (one stream, classes in order), take the first
/// `train_per_class` for training and the next `test_per_class` for
/// testing, and discard the rest.
pub fn make_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if spec.train_per_class == 0 || spec.test_per_class == 0 {
        return Err(Error::Split(
            "train_per_class and test_per_class must be >= 1".into(),
        ));
    }
    let need = spec.train_per_class + spec.test_per_class;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, img) in ds.images.iter().enumerate() {
        per_class[img.label].push(i);
    }
    for (c, idxs) in per_class.iter().enumerate() {
        if idxs.len() < need {
            return Err(Error::Split(format!(
                "class '{}' has {} images but the split needs {need}",
                ds.class_names[c],
                idxs.len()
            )));
        }
    }
    let mut rng = Rng::new(spec.seed);
    let mut train = Vec::with_capacity(ds.num_classes() * spec.train_per_class);
    let mut test = Vec::with_capacity(ds.num_classes() * spec.test_per_class);
    for idxs in per_class.iter_mut() {
        rng.shuffle(idxs);
        for &i in &idxs[..spec.train_per_class] {
            train.push(ds.images[i].clone());
        }
        for &i in &idxs[spec.train_per_class..need] {
            test.push(ds.images[i].clone());
        }
    }
    Ok((
        Dataset {
            images: train,
            class_names: ds.class_names.clone(),
        },
        Dataset {
            images: test,
            class_names: ds.class_names.clone(),
        },
    ))
}
