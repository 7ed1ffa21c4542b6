//! Temporal datasets with per-entry observation masks: loading, saving,
//! holdout generation, normalization, and a synthetic generator.
//!
//! On disk a dataset is a JSON manifest plus one headerless CSV per time
//! slice; missing cells are the literal token `NA` or an empty cell. In
//! memory a masked entry is stored as NaN so that any accidental read
//! poisons downstream results instead of silently leaking.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{chacha, gaussian_matrix};

/// Scale floor below which an attribute is normalized by mean only.
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {source}")]
    Manifest {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset must have at least one time slice")]
    Empty,
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("{file}: row {row} has {got} cells, expected {expected}")]
    RaggedRow {
        file: String,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("{file}: row {row}, column {col}: cannot parse {token:?} as a number")]
    BadCell {
        file: String,
        row: usize,
        col: usize,
        token: String,
    },
    #[error("mask entries must be 0 or 1, found {0}")]
    BadMask(u8),
    #[error("observed entry at (t={t}, {i}, {j}) is not finite")]
    NonFiniteObserved { t: usize, i: usize, j: usize },
    #[error("holdout fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("dataset has no observed entries")]
    NoObserved,
    #[error("attribute {0} has no visible entries")]
    EmptyAttribute(usize),
    #[error("rank {rank} exceeds min(m, n) = {limit}")]
    RankTooLarge { rank: usize, limit: usize },
    #[error("{0} must be nonnegative, got {1}")]
    NegativeParameter(&'static str, f64),
    #[error("holdout masks do not match the dataset masks")]
    SplitMismatch,
}

/// `T` time slices of an `m x n` matrix with entrywise observation masks.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalDataset {
    slices: Vec<DMatrix<f64>>,
    masks: Vec<DMatrix<u8>>,
    attribute_names: Vec<String>,
    time_labels: Vec<String>,
}

impl TemporalDataset {
    /// Validates dimensions and mask values; entries under a zero mask are
    /// overwritten with NaN so they can never be read as data.
    pub fn new(
        slices: Vec<DMatrix<f64>>,
        masks: Vec<DMatrix<u8>>,
        attribute_names: Vec<String>,
        time_labels: Vec<String>,
    ) -> Result<Self, DatasetError> {
        if slices.is_empty() {
            return Err(DatasetError::Empty);
        }
        if slices.len() != masks.len() {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} slices but {} masks",
                slices.len(),
                masks.len()
            )));
        }
        let m = slices[0].nrows();
        let n = slices[0].ncols();
        let mut slices = slices;
        for (t, (slice, mask)) in slices.iter_mut().zip(&masks).enumerate() {
            if slice.nrows() != m || slice.ncols() != n || mask.nrows() != m || mask.ncols() != n {
                return Err(DatasetError::DimensionMismatch(format!(
                    "slice {t} is {}x{} (mask {}x{}), expected {m}x{n}",
                    slice.nrows(),
                    slice.ncols(),
                    mask.nrows(),
                    mask.ncols()
                )));
            }
            for j in 0..n {
                for i in 0..m {
                    match mask[(i, j)] {
                        0 => slice[(i, j)] = f64::NAN,
                        1 => {
                            if !slice[(i, j)].is_finite() {
                                return Err(DatasetError::NonFiniteObserved { t, i, j });
                            }
                        }
                        other => return Err(DatasetError::BadMask(other)),
                    }
                }
            }
        }
        if attribute_names.len() != n {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} attribute names for {} columns",
                attribute_names.len(),
                n
            )));
        }
        if time_labels.len() != slices.len() {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} time labels for {} slices",
                time_labels.len(),
                slices.len()
            )));
        }
        Ok(Self { slices, masks, attribute_names, time_labels })
    }

    pub fn time_steps(&self) -> usize {
        self.slices.len()
    }

    pub fn rows(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    pub fn masks(&self) -> &[DMatrix<u8>] {
        &self.masks
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn time_labels(&self) -> &[String] {
        &self.time_labels
    }

    /// Number of observed entries across all slices.
    pub fn observed_count(&self) -> usize {
        self.masks.iter().map(|w| w.iter().filter(|&&x| x == 1).count()).sum()
    }
}

/// Partition of the originally observed entries into a visible part and a
/// hidden part used only for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    observed_mask: Vec<DMatrix<u8>>,
    eval_mask: Vec<DMatrix<u8>>,
    fraction: f64,
    seed: u64,
}

impl HoldoutSplit {
    pub fn observed_mask(&self) -> &[DMatrix<u8>] {
        &self.observed_mask
    }

    pub fn eval_mask(&self) -> &[DMatrix<u8>] {
        &self.eval_mask
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Trivial split that keeps every originally observed entry visible.
    pub fn full(dataset: &TemporalDataset) -> Self {
        let observed_mask = dataset.masks().to_vec();
        let eval_mask = dataset
            .masks()
            .iter()
            .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
            .collect();
        Self { observed_mask, eval_mask, fraction: 1.0, seed: 0 }
    }

    pub fn observed_count(&self) -> usize {
        self.observed_mask.iter().map(|w| w.iter().filter(|&&x| x == 1).count()).sum()
    }

    pub fn eval_count(&self) -> usize {
        self.eval_mask.iter().map(|w| w.iter().filter(|&&x| x == 1).count()).sum()
    }
}

/// Per-attribute centering and scaling computed on visible entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl NormalizationStats {
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    #[serde(rename = "T")]
    t: usize,
    m: usize,
    n: usize,
    slices: Vec<String>,
    attributes: Vec<String>,
    times: Vec<String>,
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io { path: path.display().to_string(), source }
}

fn parse_slice_csv(path: &Path, m: usize, n: usize) -> Result<(DMatrix<f64>, DMatrix<u8>), DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file = path.display().to_string();
    let mut values = DMatrix::zeros(m, n);
    let mut mask = DMatrix::zeros(m, n);
    let rows: Vec<&str> = text.lines().collect();
    if rows.len() != m {
        return Err(DatasetError::DimensionMismatch(format!(
            "{file}: {} rows, expected {m}",
            rows.len()
        )));
    }
    for (i, line) in rows.iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n {
            return Err(DatasetError::RaggedRow { file, row: i, expected: n, got: cells.len() });
        }
        for (j, raw) in cells.iter().enumerate() {
            let token = raw.trim();
            if token.is_empty() || token == "NA" {
                values[(i, j)] = f64::NAN;
                mask[(i, j)] = 0;
            } else {
                let parsed: f64 = token.parse().map_err(|_| DatasetError::BadCell {
                    file: file.clone(),
                    row: i,
                    col: j,
                    token: token.to_string(),
                })?;
                values[(i, j)] = parsed;
                mask[(i, j)] = 1;
            }
        }
    }
    Ok((values, mask))
}

/// Loads a dataset from its JSON manifest; slice paths are resolved relative
/// to the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<TemporalDataset, DatasetError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    if manifest.t == 0 || manifest.slices.is_empty() {
        return Err(DatasetError::Empty);
    }
    if manifest.slices.len() != manifest.t {
        return Err(DatasetError::DimensionMismatch(format!(
            "manifest lists {} slices but T = {}",
            manifest.slices.len(),
            manifest.t
        )));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut slices = Vec::with_capacity(manifest.t);
    let mut masks = Vec::with_capacity(manifest.t);
    for rel in &manifest.slices {
        let (values, mask) = parse_slice_csv(&base.join(rel), manifest.m, manifest.n)?;
        slices.push(values);
        masks.push(mask);
    }
    TemporalDataset::new(slices, masks, manifest.attributes, manifest.times)
}

fn format_cell(value: f64, observed: bool) -> String {
    if observed {
        format!("{value:?}")
    } else {
        "NA".to_string()
    }
}

/// Writes `manifest.json` plus one CSV per slice into `dir` and returns the
/// manifest path. Observed values round-trip exactly through
/// [`load_dataset`].
pub fn save_dataset(dataset: &TemporalDataset, dir: &Path) -> Result<PathBuf, DatasetError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut slice_files = Vec::with_capacity(dataset.time_steps());
    for (t, (slice, mask)) in dataset.slices().iter().zip(dataset.masks()).enumerate() {
        let name = format!("slice_{t:03}.csv");
        let mut out = String::new();
        for i in 0..dataset.rows() {
            let row: Vec<String> = (0..dataset.cols())
                .map(|j| format_cell(slice[(i, j)], mask[(i, j)] == 1))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let path = dir.join(&name);
        fs::write(&path, out).map_err(|e| io_err(&path, e))?;
        slice_files.push(name);
    }
    let manifest = Manifest {
        t: dataset.time_steps(),
        m: dataset.rows(),
        n: dataset.cols(),
        slices: slice_files,
        attributes: dataset.attribute_names().to_vec(),
        times: dataset.time_labels().to_vec(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Uniform-without-replacement holdout over all originally observed entries
/// across all slices. Deterministic for a fixed seed.
pub fn generate_holdout(
    dataset: &TemporalDataset,
    fraction: f64,
    seed: u64,
) -> Result<HoldoutSplit, DatasetError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DatasetError::BadFraction(fraction));
    }
    let mut coords = Vec::new();
    for (t, mask) in dataset.masks().iter().enumerate() {
        for i in 0..dataset.rows() {
            for j in 0..dataset.cols() {
                if mask[(i, j)] == 1 {
                    coords.push((t, i, j));
                }
            }
        }
    }
    if coords.is_empty() {
        return Err(DatasetError::NoObserved);
    }
    let keep = ((fraction * coords.len() as f64).round() as usize).min(coords.len());

    let mut rng = chacha(seed);
    let kept_idx = rand::seq::index::sample(&mut rng, coords.len(), keep);

    let mut observed_mask: Vec<DMatrix<u8>> = dataset
        .masks()
        .iter()
        .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
        .collect();
    for idx in kept_idx.iter() {
        let (t, i, j) = coords[idx];
        observed_mask[t][(i, j)] = 1;
    }
    let eval_mask: Vec<DMatrix<u8>> = dataset
        .masks()
        .iter()
        .zip(&observed_mask)
        .map(|(w, o)| {
            DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)] - o[(i, j)])
        })
        .collect();
    Ok(HoldoutSplit { observed_mask, eval_mask, fraction, seed })
}

/// Checks that `split` partitions exactly the observed entries of `dataset`.
pub fn validate_split(dataset: &TemporalDataset, split: &HoldoutSplit) -> Result<(), DatasetError> {
    if split.observed_mask.len() != dataset.time_steps() {
        return Err(DatasetError::SplitMismatch);
    }
    for ((w, o), e) in dataset.masks().iter().zip(&split.observed_mask).zip(&split.eval_mask) {
        if o.nrows() != w.nrows() || o.ncols() != w.ncols() {
            return Err(DatasetError::SplitMismatch);
        }
        for (idx, &wv) in w.iter().enumerate() {
            if o[idx] + e[idx] != wv {
                return Err(DatasetError::SplitMismatch);
            }
        }
    }
    Ok(())
}

/// Zero-mean, unit-scale normalization per attribute.
///
/// Statistics use only entries visible under the split's observed mask
/// (population standard deviation); every originally observed entry is then
/// transformed so hidden truth values live in the same space. Attributes
/// with standard deviation below `1e-12` keep scale 1.
pub fn normalize(
    dataset: &TemporalDataset,
    split: &HoldoutSplit,
) -> Result<(TemporalDataset, NormalizationStats), DatasetError> {
    validate_split(dataset, split)?;
    let n = dataset.cols();
    let mut means = vec![0.0; n];
    let mut scales = vec![1.0; n];
    for j in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (slice, mask) in dataset.slices().iter().zip(split.observed_mask()) {
            for i in 0..dataset.rows() {
                if mask[(i, j)] == 1 {
                    sum += slice[(i, j)];
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(DatasetError::EmptyAttribute(j));
        }
        let mean = sum / count as f64;
        let mut ss = 0.0;
        for (slice, mask) in dataset.slices().iter().zip(split.observed_mask()) {
            for i in 0..dataset.rows() {
                if mask[(i, j)] == 1 {
                    let d = slice[(i, j)] - mean;
                    ss += d * d;
                }
            }
        }
        let sd = (ss / count as f64).sqrt();
        means[j] = mean;
        scales[j] = if sd < SCALE_FLOOR { 1.0 } else { sd };
    }

    let slices = dataset
        .slices()
        .iter()
        .zip(dataset.masks())
        .map(|(slice, mask)| {
            DMatrix::from_fn(dataset.rows(), n, |i, j| {
                if mask[(i, j)] == 1 {
                    (slice[(i, j)] - means[j]) / scales[j]
                } else {
                    f64::NAN
                }
            })
        })
        .collect();
    let normalized = TemporalDataset::new(
        slices,
        dataset.masks().to_vec(),
        dataset.attribute_names().to_vec(),
        dataset.time_labels().to_vec(),
    )?;
    Ok((normalized, NormalizationStats { means, scales }))
}

/// Inverts [`normalize`] on a single matrix: `x -> x * scale + mean` per
/// attribute column.
pub fn denormalize(matrix: &DMatrix<f64>, stats: &NormalizationStats) -> Result<DMatrix<f64>, DatasetError> {
    if matrix.ncols() != stats.len() {
        return Err(DatasetError::DimensionMismatch(format!(
            "matrix has {} columns, stats cover {}",
            matrix.ncols(),
            stats.len()
        )));
    }
    Ok(DMatrix::from_fn(matrix.nrows(), matrix.ncols(), |i, j| {
        matrix[(i, j)] * stats.scales[j] + stats.means[j]
    }))
}

/// Restricts a dataset to the split's visible entries: the result's masks are
/// the observed masks and every hidden or missing entry becomes NaN. This is
/// the view handed to imputation methods, so a leaked read of a hidden value
/// surfaces as a non-finite output.
pub fn apply_split(dataset: &TemporalDataset, split: &HoldoutSplit) -> Result<TemporalDataset, DatasetError> {
    validate_split(dataset, split)?;
    TemporalDataset::new(
        dataset.slices().to_vec(),
        split.observed_mask().to_vec(),
        dataset.attribute_names().to_vec(),
        dataset.time_labels().to_vec(),
    )
}

/// Rounds to a 2^-20 grid so that linear-in-t trajectories built from the
/// drawn values have bit-exactly zero second differences.
fn quantize(x: f64) -> f64 {
    (x * 1_048_576.0).round() / 1_048_576.0
}

fn quantized_gaussian(rng: &mut impl Rng, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
    let mut m = gaussian_matrix(rng, rows, cols, sd);
    m.apply(|x| *x = quantize(*x));
    m
}

fn draw_factors(
    rng: &mut impl Rng,
    t_count: usize,
    m: usize,
    n: usize,
    rank: usize,
    curvature: f64,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let slope_sd = 1.0 / t_count.max(2) as f64;
    let o_base = quantized_gaussian(rng, m, rank, 1.0);
    let p_base = quantized_gaussian(rng, n, rank, 1.0);
    let o_step = quantized_gaussian(rng, m, rank, slope_sd);
    let p_step = quantized_gaussian(rng, n, rank, slope_sd);

    // Smooth perturbations: zero for the first two steps, then accumulated
    // through the second-difference recurrence so the bend per step is a
    // fresh unit draw scaled by `curvature`.
    let mut o_bend: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, rank), DMatrix::zeros(m, rank)];
    let mut p_bend: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, rank), DMatrix::zeros(n, rank)];
    for t in 2..t_count {
        let eo = quantized_gaussian(rng, m, rank, 1.0);
        let ep = quantized_gaussian(rng, n, rank, 1.0);
        o_bend.push(&o_bend[t - 1] * 2.0 - &o_bend[t - 2] + eo);
        p_bend.push(&p_bend[t - 1] * 2.0 - &p_bend[t - 2] + ep);
    }

    let mut o = Vec::with_capacity(t_count);
    let mut p = Vec::with_capacity(t_count);
    for t in 0..t_count {
        o.push(&o_base + &o_step * t as f64 + &o_bend[t.min(o_bend.len() - 1)] * curvature);
        p.push(&p_base + &p_step * t as f64 + &p_bend[t.min(p_bend.len() - 1)] * curvature);
    }
    (o, p)
}

fn validate_synth(t_count: usize, m: usize, n: usize, rank: usize) -> Result<(), DatasetError> {
    if t_count == 0 {
        return Err(DatasetError::Empty);
    }
    if rank == 0 || rank > m.min(n) {
        return Err(DatasetError::RankTooLarge { rank, limit: m.min(n) });
    }
    Ok(())
}

/// Generates a fully observed dataset `F_t = O_t * P_t' + noise` whose factor
/// trajectories are linear in `t` plus a smooth perturbation whose second
/// differences scale with `curvature` (exactly linear when `curvature` is 0).
pub fn synthesize(
    t_count: usize,
    m: usize,
    n: usize,
    rank: usize,
    curvature: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<TemporalDataset, DatasetError> {
    validate_synth(t_count, m, n, rank)?;
    if curvature < 0.0 {
        return Err(DatasetError::NegativeParameter("curvature", curvature));
    }
    if noise_sd < 0.0 {
        return Err(DatasetError::NegativeParameter("noise_sd", noise_sd));
    }
    let mut rng = chacha(seed);
    let (o, p) = draw_factors(&mut rng, t_count, m, n, rank, curvature);

    let mut slices = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let mut f_t = &o[t] * p[t].transpose();
        // The noise stream is drawn for every slice so that datasets with
        // different noise levels share the same factors.
        let noise = gaussian_matrix(&mut rng, m, n, 1.0);
        if noise_sd > 0.0 {
            f_t += noise * noise_sd;
        }
        slices.push(f_t);
    }
    let masks = vec![DMatrix::from_element(m, n, 1u8); t_count];
    let attribute_names = (0..n).map(|j| format!("a{j}")).collect();
    let time_labels = (0..t_count).map(|t| format!("t{t}")).collect();
    TemporalDataset::new(slices, masks, attribute_names, time_labels)
}

/// Latent factor trajectories used by [`synthesize`]; exposed so tests can
/// check the trajectory construction directly.
pub fn synthesize_factors(
    t_count: usize,
    m: usize,
    n: usize,
    rank: usize,
    curvature: f64,
    seed: u64,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>), DatasetError> {
    validate_synth(t_count, m, n, rank)?;
    let mut rng = chacha(seed);
    Ok(draw_factors(&mut rng, t_count, m, n, rank, curvature))
}
