//! End-to-end orchestration: train, eval, dictionary sweep, ablation,
//! dataset synthesis.
//!
//! Every run is a pure function of (dataset bytes, config, root seed).
//! Stages execute sequentially; each is timed and its errors are tagged
//! with the stage name. Wall-clock numbers go to a separate timing CSV so
//! the model files and reports themselves are bitwise-reproducible.
//!
//! The sampled-descriptor matrix is cached under the output directory,
//! keyed by a hash of every config field that influences it. Descriptors
//! are emitted at f32 precision upstream, so a cache hit reproduces the
//! uncached run bit for bit. The key does not see dataset *content*: clear
//! the cache if files under `dataset_root` change in place.

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;

use crate::classify::{evaluate, train_svm, ConfusionMatrix, LinearSvmModel};
use crate::config::PipelineConfig;
use crate::dataset::{load_dataset, make_split, resize_image, save_pgm_tree, synth_glyphs, Dataset};
use crate::deepnet::{self, fine_tune, fine_tune_shallow, stack_train, DeepEncoder};
use crate::dsift::{extract_dense, sample_descriptors, DescriptorSet, SampledDescriptors};
use crate::persist;
use crate::pooling::{pooled_dim, spm_max_pool, PooledFeature, SpmConfig};
use crate::sae::{self, Batch, SaeLayer};
use crate::{Error, Result};

/// One timed stage; `note` carries flags like the descriptor cache state.
#[derive(Debug, Clone)]
pub struct TimingRow {
    pub stage: String,
    pub seconds: f64,
    pub note: String,
}

struct Stages {
    rows: Vec<TimingRow>,
    started: Instant,
}

impl Stages {
    fn new() -> Self {
        Stages {
            rows: Vec::new(),
            started: Instant::now(),
        }
    }

    fn run<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f().map_err(|e| e.in_stage(name))?;
        self.rows.push(TimingRow {
            stage: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
            note: String::new(),
        });
        Ok(out)
    }

    fn note(&mut self, note: &str) {
        if let Some(last) = self.rows.last_mut() {
            last.note = note.to_string();
        }
    }

    fn finish(mut self) -> Vec<TimingRow> {
        self.rows.push(TimingRow {
            stage: "total".to_string(),
            seconds: self.started.elapsed().as_secs_f64(),
            note: String::new(),
        });
        self.rows
    }
}

/// Accuracy summary plus the fully resolved config that produced it, so any
/// number in the report can be reproduced from the report alone. The
/// confusion matrix is written as its own CSV rather than serialized here.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub class_names: Vec<String>,
    #[serde(skip)]
    pub confusion: ConfusionMatrix,
    pub config: PipelineConfig,
}

impl RunReport {
    fn new(cm: ConfusionMatrix, class_names: Vec<String>, config: PipelineConfig) -> Self {
        RunReport {
            accuracy: cm.accuracy(),
            per_class_accuracy: cm.per_class_accuracy(),
            class_names,
            confusion: cm,
            config,
        }
    }

    fn to_text(&self) -> String {
        let mut s = format!("accuracy = {:.6}\nper-class accuracy:\n", self.accuracy);
        for (name, acc) in self.class_names.iter().zip(&self.per_class_accuracy) {
            s.push_str(&format!("  {name}: {acc:.6}\n"));
        }
        s.push_str("config:\n");
        for line in self.config.render().lines() {
            s.push_str("  ");
            s.push_str(line);
            s.push('\n');
        }
        s
    }

    fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        s.push_str(&format!("accuracy,{}\n", self.accuracy));
        for (name, acc) in self.class_names.iter().zip(&self.per_class_accuracy) {
            s.push_str(&format!("class.{name},{acc}\n"));
        }
        s
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Write the `report-<stem>` text/CSV/JSON-lines trio plus the confusion CSV.
fn write_report(dir: &Path, stem: &str, report: &RunReport) -> Result<()> {
    write_text(&dir.join(format!("report-{stem}.txt")), &report.to_text())?;
    write_text(&dir.join(format!("report-{stem}.csv")), &report.to_csv())?;
    let json = serde_json::to_string(report)
        .map_err(|e| Error::Training(format!("report serialization: {e}")))?;
    write_text(&dir.join(format!("report-{stem}.jsonl")), &format!("{json}\n"))?;
    write_text(
        &dir.join(format!("confusion-{stem}.csv")),
        &report.confusion.to_csv(&report.class_names),
    )?;
    Ok(())
}

fn write_timing(dir: &Path, stem: &str, rows: &[TimingRow]) -> Result<()> {
    let mut s = String::from("stage,seconds,note\n");
    for r in rows {
        s.push_str(&format!("{},{:.3},{}\n", r.stage, r.seconds, r.note));
    }
    write_text(&dir.join(format!("timing-{stem}.csv")), &s)
}

/// Either a single layer used directly (ablation) or the stacked encoder.
pub enum Coder<'a> {
    Shallow(&'a SaeLayer),
    Deep(&'a DeepEncoder),
}

impl Coder<'_> {
    pub fn input_dim(&self) -> usize {
        match self {
            Coder::Shallow(l) => l.d(),
            Coder::Deep(e) => e.input_dim(),
        }
    }

    pub fn code_dim(&self) -> usize {
        match self {
            Coder::Shallow(l) => l.k(),
            Coder::Deep(e) => e.code_dim(),
        }
    }

    pub fn encode(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::Dim {
                context: "coder input",
                expected: self.input_dim(),
                got: x.nrows(),
            });
        }
        match self {
            Coder::Shallow(l) => Ok(sae::encode_columns(l, x)),
            Coder::Deep(e) => deepnet::encode_batch(e, x),
        }
    }
}

/// Pack one image's informative descriptors into a `128 x N` column matrix
/// plus their normalized positions.
///
/// Flat (all-zero) descriptors are dropped: they all encode to the same
/// constant code, which would floor every pyramid cell through the max and
/// drown the discriminative signal. Cells with no informative patch pool to
/// zero instead. A fully blank image falls back to its zero descriptors so
/// it still gets a (degenerate) feature vector.
fn descriptor_matrix(set: &DescriptorSet) -> Result<(Array2<f64>, Vec<(f64, f64)>)> {
    if set.descriptors.is_empty() {
        return Err(Error::Extract(format!(
            "image '{}' produced no descriptors",
            set.image_id
        )));
    }
    let mut keep: Vec<&crate::dsift::DenseDescriptor> =
        set.descriptors.iter().filter(|d| !d.is_zero()).collect();
    if keep.is_empty() {
        keep = set.descriptors.iter().collect();
    }
    let d = keep[0].vector.len();
    let mut x = Array2::zeros((d, keep.len()));
    let mut positions = Vec::with_capacity(keep.len());
    for (j, desc) in keep.iter().enumerate() {
        for (i, &v) in desc.vector.iter().enumerate() {
            x[(i, j)] = v;
        }
        positions.push((desc.pos_x, desc.pos_y));
    }
    Ok((x, positions))
}

/// Round every component to f32 and back. Pooled vectors cross the
/// SVM/persistence boundary at f32, which makes feature dumps lossless and
/// cached runs bitwise-identical to uncached ones.
fn quantize(f: &mut PooledFeature) {
    f.vector.mapv_inplace(|v| v as f32 as f64);
}

/// Resize → extract → encode → pool → quantize, one image at a time.
fn pool_images(ds: &Dataset, coder: &Coder, cfg: &PipelineConfig, spm: &SpmConfig) -> Result<Vec<PooledFeature>> {
    let mut out = Vec::with_capacity(ds.images.len());
    for img in &ds.images {
        let resized = resize_image(img, cfg.sift.resize);
        let set = extract_dense(&resized, cfg.sift.step, &cfg.sift.patch_sizes)?;
        let (x, positions) = descriptor_matrix(&set)?;
        let codes = coder.encode(&x)?;
        let mut feat = spm_max_pool(&codes, &positions, spm, set.image_label, &set.image_id)?;
        quantize(&mut feat);
        out.push(feat);
    }
    Ok(out)
}

fn resized_dataset(ds: &Dataset, side: usize) -> Result<Dataset> {
    let images = ds.images.iter().map(|img| resize_image(img, side)).collect();
    Dataset::new(images, ds.class_names.clone())
}

/// Hash of every config field the sampled-descriptor matrix depends on.
fn descriptor_cache_key(cfg: &PipelineConfig) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::hash::DefaultHasher::new();
    cfg.dataset_root.hash(&mut h);
    cfg.seed.hash(&mut h);
    cfg.split.train_per_class.hash(&mut h);
    cfg.split.test_per_class.hash(&mut h);
    cfg.sift.resize.hash(&mut h);
    cfg.sift.step.hash(&mut h);
    cfg.sift.patch_sizes.hash(&mut h);
    cfg.sample_n.hash(&mut h);
    h.finish()
}

/// Load the sampled matrix from cache or compute and cache it. The second
/// return value is true on a cache hit.
fn load_or_sample(
    train: &Dataset,
    cfg: &PipelineConfig,
    cache_dir: &Path,
) -> Result<(SampledDescriptors, bool)> {
    let key = descriptor_cache_key(cfg);
    let x_path = cache_dir.join(format!("descriptors-{key:016x}.gfds"));
    let l_path = cache_dir.join(format!("descriptors-{key:016x}.gfls"));
    if x_path.is_file() && l_path.is_file() {
        let x = persist::read_descriptors(&x_path)?;
        let labels = persist::read_descriptor_labels(&l_path)?;
        if labels.len() != x.ncols() {
            return Err(Error::Format {
                path: l_path,
                msg: format!("{} labels for {} descriptors", labels.len(), x.ncols()),
            });
        }
        return Ok((SampledDescriptors { x, labels }, true));
    }
    let sampled = sample_descriptors(
        train,
        cfg.sample_n,
        cfg.sift.step,
        &cfg.sift.patch_sizes,
        cfg.sample_seed(),
    )?;
    persist::write_descriptors(&x_path, &sampled.x)?;
    persist::write_descriptor_labels(&l_path, &sampled.labels)?;
    Ok((sampled, false))
}

pub const ENCODER_FILE: &str = "encoder.gfde";
pub const SVM_FILE: &str = "svm.gfsv";
pub const TRAIN_FEATURES_FILE: &str = "features-train.gfpf";

#[derive(Debug)]
pub struct TrainOutput {
    pub encoder: DeepEncoder,
    pub svm: LinearSvmModel,
    pub report: RunReport,
    pub timing: Vec<TimingRow>,
}

/// Full training run: writes `encoder.gfde`, `svm.gfsv`, the training-set
/// report files, pooled training features, and a timing CSV to `out_dir`.
pub fn run_train(cfg: &PipelineConfig) -> Result<TrainOutput> {
    run_train_with_cache(cfg, None)
}

/// `cache_dir` overrides where the sampled-descriptor cache lives (the
/// dictionary sweep shares one cache across per-K output directories).
pub fn run_train_with_cache(cfg: &PipelineConfig, cache_dir: Option<&Path>) -> Result<TrainOutput> {
    let mut st = Stages::new();
    st.run("config", || cfg.validate())?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let cache_dir = cache_dir.unwrap_or(&cfg.out_dir);

    let ds = st.run("dataset", || load_dataset(&cfg.dataset_root))?;
    let (train, _test) = st.run("split", || make_split(&ds, &cfg.split_spec()))?;
    let train_resized = st.run("resize", || resized_dataset(&train, cfg.sift.resize))?;

    let (sampled, cache_hit) = st.run("sample", || load_or_sample(&train_resized, cfg, cache_dir))?;
    st.note(if cache_hit { "cache-hit" } else { "cache-miss" });

    let batch = Batch::new(sampled.x).map_err(|e| e.in_stage("sample"))?;
    let mut encoder = st.run("pretrain", || {
        stack_train(&batch, &cfg.sae1_config(), &cfg.sae2_config())
    })?;
    if cfg.fine_tune.enabled {
        encoder = st.run("finetune", || {
            fine_tune(
                &encoder,
                &batch,
                &sampled.labels,
                train.num_classes(),
                &cfg.fine_tune_cfg(),
            )
        })?;
    }
    drop(batch);

    let spm = cfg.spm_config();
    let features = st.run("pool", || pool_images(&train, &Coder::Deep(&encoder), cfg, &spm))?;
    let svm = st.run("svm", || train_svm(&features, &cfg.svm_cfg()))?;
    let (_, cm) = st.run("train-eval", || evaluate(&svm, &features))?;
    let report = RunReport::new(cm, train.class_names.clone(), cfg.clone());

    st.run("persist", || {
        persist::write_encoder(&cfg.out_dir.join(ENCODER_FILE), &encoder)?;
        persist::write_svm(&cfg.out_dir.join(SVM_FILE), &svm)?;
        persist::write_features(&cfg.out_dir.join(TRAIN_FEATURES_FILE), &features)?;
        write_report(&cfg.out_dir, "train", &report)
    })?;
    let timing = st.finish();
    write_timing(&cfg.out_dir, "train", &timing)?;

    Ok(TrainOutput {
        encoder,
        svm,
        report,
        timing,
    })
}

#[derive(Debug)]
pub struct EvalOutput {
    pub report: RunReport,
    pub timing: Vec<TimingRow>,
}

/// Evaluate persisted artifacts from `out_dir` on the held-out test split.
pub fn run_eval(cfg: &PipelineConfig) -> Result<EvalOutput> {
    let mut st = Stages::new();
    st.run("config", || cfg.validate())?;

    let (encoder, svm) = st.run("artifacts", || {
        let encoder = persist::read_encoder(&cfg.out_dir.join(ENCODER_FILE))?;
        let svm = persist::read_svm(&cfg.out_dir.join(SVM_FILE))?;
        let want = pooled_dim(encoder.code_dim(), &cfg.spm_config());
        if svm.dim() != want {
            return Err(Error::Compat(format!(
                "encoder pools to {want}-dim features but the SVM expects {}",
                svm.dim()
            )));
        }
        Ok((encoder, svm))
    })?;

    let ds = st.run("dataset", || load_dataset(&cfg.dataset_root))?;
    let (_train, test) = st.run("split", || make_split(&ds, &cfg.split_spec()))?;
    let spm = cfg.spm_config();
    let features = st.run("pool", || pool_images(&test, &Coder::Deep(&encoder), cfg, &spm))?;
    let (_, cm) = st.run("eval", || evaluate(&svm, &features))?;
    let report = RunReport::new(cm, test.class_names.clone(), cfg.clone());

    st.run("persist", || write_report(&cfg.out_dir, "eval", &report))?;
    let timing = st.finish();
    write_timing(&cfg.out_dir, "eval", &timing)?;

    Ok(EvalOutput { report, timing })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub accuracy: f64,
    pub wall_seconds: f64,
}

/// Train+eval once per dictionary size, sharing the split and the sampled
/// descriptor cache. Per-K artifacts land in `out_dir/k<K>/`; the summary
/// CSV in `out_dir/sweep.csv`.
pub fn run_sweep(cfg: &PipelineConfig, k_list: &[usize]) -> Result<Vec<SweepRow>> {
    if k_list.is_empty() {
        return Err(Error::Config("sweep needs at least one dictionary size".into()).in_stage("config"));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let t0 = Instant::now();
        let mut sub = cfg.clone();
        sub.sae1.hidden = k;
        sub.sae2.hidden = k;
        sub.out_dir = cfg.out_dir.join(format!("k{k}"));
        run_train_with_cache(&sub, Some(&cfg.out_dir))?;
        let eval = run_eval(&sub)?;
        rows.push(SweepRow {
            k,
            accuracy: eval.report.accuracy,
            wall_seconds: t0.elapsed().as_secs_f64(),
        });
    }
    let mut csv = String::from("k,accuracy,wall_seconds\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{:.3}\n", r.k, r.accuracy, r.wall_seconds));
    }
    write_text(&cfg.out_dir.join("sweep.csv"), &csv)?;
    Ok(rows)
}

pub const ABLATION_CONDITIONS: [&str; 4] =
    ["shallow-unsup", "shallow-sup", "deep-unsup", "deep-sup"];

/// Depth × supervision ablation with shared split, descriptors, and seeds.
/// Greedy stacking makes the standalone first layer and the deep encoder's
/// first layer identical, so pretraining runs once and all four conditions
/// reuse it. Writes `out_dir/ablate.csv`.
pub fn run_ablate(cfg: &PipelineConfig) -> Result<Vec<(String, f64)>> {
    let mut st = Stages::new();
    st.run("config", || cfg.validate())?;
    std::fs::create_dir_all(&cfg.out_dir)?;

    let ds = st.run("dataset", || load_dataset(&cfg.dataset_root))?;
    let (train, test) = st.run("split", || make_split(&ds, &cfg.split_spec()))?;
    let train_resized = st.run("resize", || resized_dataset(&train, cfg.sift.resize))?;
    let (sampled, cache_hit) = st.run("sample", || load_or_sample(&train_resized, cfg, &cfg.out_dir))?;
    st.note(if cache_hit { "cache-hit" } else { "cache-miss" });

    let batch = Batch::new(sampled.x).map_err(|e| e.in_stage("sample"))?;
    let deep_unsup = st.run("pretrain", || {
        stack_train(&batch, &cfg.sae1_config(), &cfg.sae2_config())
    })?;
    let num_classes = train.num_classes();
    let ft = cfg.fine_tune_cfg();
    let (shallow_sup, _head) = st.run("finetune", || {
        fine_tune_shallow(&deep_unsup.layer1, &batch, &sampled.labels, num_classes, &ft)
    })?;
    let deep_sup = st.run("finetune", || {
        fine_tune(&deep_unsup, &batch, &sampled.labels, num_classes, &ft)
    })?;
    drop(batch);

    let spm = cfg.spm_config();
    let mut results = Vec::with_capacity(4);
    let coders: [(&str, Coder); 4] = [
        ("shallow-unsup", Coder::Shallow(&deep_unsup.layer1)),
        ("shallow-sup", Coder::Shallow(&shallow_sup)),
        ("deep-unsup", Coder::Deep(&deep_unsup)),
        ("deep-sup", Coder::Deep(&deep_sup)),
    ];
    for (name, coder) in &coders {
        let train_feats = st.run("pool", || pool_images(&train, coder, cfg, &spm))?;
        let test_feats = st.run("pool", || pool_images(&test, coder, cfg, &spm))?;
        let svm = st.run("svm", || train_svm(&train_feats, &cfg.svm_cfg()))?;
        let (acc, _) = st.run("eval", || evaluate(&svm, &test_feats))?;
        results.push((name.to_string(), acc));
    }

    let mut csv = String::from("condition,accuracy\n");
    for (name, acc) in &results {
        csv.push_str(&format!("{name},{acc}\n"));
    }
    write_text(&cfg.out_dir.join("ablate.csv"), &csv)?;
    write_timing(&cfg.out_dir, "ablate", &st.finish())?;
    Ok(results)
}

/// Generate a synthetic glyph dataset and write it as a PGM tree.
pub fn run_synth(
    out: &Path,
    num_classes: usize,
    per_class: usize,
    side: usize,
    seed: u64,
) -> Result<Dataset> {
    let ds = synth_glyphs(num_classes, per_class, side, seed).map_err(|e| e.in_stage("synth"))?;
    save_pgm_tree(&ds, out).map_err(|e| e.in_stage("synth"))?;
    Ok(ds)
}
