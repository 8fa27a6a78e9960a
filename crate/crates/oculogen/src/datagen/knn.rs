//! Label-consistency check: a pixel-space k-nearest-neighbor regressor must
//! predict gaze far better from real labels than from shuffled ones.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::field::seed_chain;

use super::{DatagenError, DatasetManifest};

/// Feature grid width (pixels are box-averaged down to this).
pub const FEATURE_W: usize = 15;
/// Feature grid height.
pub const FEATURE_H: usize = 10;
/// Smallest dataset the evaluation accepts.
pub const MIN_LABELED_IMAGES: usize = 50;

/// Outcome of one nearest-neighbor evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnReport {
    /// Mean angular error of the k-NN predictor on the test split, degrees.
    pub mean_error_deg: f64,
    /// Mean angular error of always predicting the train-mean gaze, degrees.
    pub baseline_error_deg: f64,
    /// Per-test-image angular errors, in manifest order of the test split.
    pub test_errors_deg: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub k: usize,
}

/// Grayscale box-downsampled features in [0, 1], row-major FEATURE_H x
/// FEATURE_W.
pub fn image_features(img: &image::RgbImage) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Vec::with_capacity(FEATURE_W * FEATURE_H);
    for cy in 0..FEATURE_H {
        for cx in 0..FEATURE_W {
            let x0 = cx * w / FEATURE_W;
            let x1 = ((cx + 1) * w / FEATURE_W).max(x0 + 1).min(w);
            let y0 = cy * h / FEATURE_H;
            let y1 = ((cy + 1) * h / FEATURE_H).max(y0 + 1).min(h);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = img.get_pixel(x as u32, y as u32).0;
                    sum += (0.2126 * p[0] as f64 + 0.7152 * p[1] as f64 + 0.0722 * p[2] as f64)
                        / 255.0;
                }
            }
            out.push(sum / ((x1 - x0) * (y1 - y0)) as f64);
        }
    }
    out
}

/// Loads a PNG and reduces it to features.
pub fn features_from_png(path: &Path) -> Result<Vec<f64>, DatagenError> {
    let img = image::open(path)
        .map_err(|e| DatagenError::Manifest(format!("{}: {e}", path.display())))?
        .to_rgb8();
    Ok(image_features(&img))
}

/// Deterministic train/test split keyed on the per-image seed.
pub fn in_train_split(seed: u64, train_fraction: f64) -> bool {
    let u = seed_chain(seed, &[0xEA]) as f64 / (u64::MAX as f64 + 1.0);
    u < train_fraction
}

/// Mean of the k nearest training gazes (squared-distance metric, ties to the
/// lower index), normalized to a unit vector.
pub fn knn_predict(
    train_features: &[Vec<f64>],
    train_gazes: &[[f64; 3]],
    k: usize,
    query: &[f64],
) -> [f64; 3] {
    assert!(!train_features.is_empty() && train_features.len() == train_gazes.len());
    let mut scored: Vec<(f64, usize)> = train_features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let d2: f64 = f.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let k = k.min(scored.len());
    let mut mean = [0.0; 3];
    for &(_, i) in &scored[..k] {
        for a in 0..3 {
            mean[a] += train_gazes[i][a];
        }
    }
    normalize_or_forward(mean)
}

fn normalize_or_forward(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n > 1e-12 {
        [v[0] / n, v[1] / n, v[2] / n]
    } else {
        [0.0, 0.0, 1.0]
    }
}

/// Angle between two unit vectors, degrees.
pub fn angular_error_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    dot.clamp(-1.0, 1.0).acos().to_degrees()
}

#[derive(Deserialize)]
struct LabelGazeOnly {
    gaze: GazeVectorOnly,
}

#[derive(Deserialize)]
struct GazeVectorOnly {
    vector_cam: [f64; 3],
}

/// Evaluates gaze k-NN regression over an emitted dataset. With
/// `shuffle_seed` set, gaze targets are randomly permuted across images
/// first — the control run whose error a healthy dataset must beat.
pub fn eval_knn(
    manifest: &DatasetManifest,
    root: &Path,
    train_fraction: f64,
    k: usize,
    shuffle_seed: Option<u64>,
) -> Result<KnnReport, DatagenError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatagenError::Range {
            reason: format!("train_fraction = {train_fraction} must lie in (0, 1)"),
        });
    }
    if k == 0 {
        return Err(DatagenError::Range { reason: "k must be >= 1".into() });
    }
    if manifest.entries.len() < MIN_LABELED_IMAGES {
        return Err(DatagenError::TooFewImages {
            found: manifest.entries.len(),
            required: MIN_LABELED_IMAGES,
        });
    }

    let mut features = Vec::with_capacity(manifest.entries.len());
    let mut gazes = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        features.push(features_from_png(&root.join(&entry.image))?);
        let text = std::fs::read_to_string(root.join(&entry.label))?;
        let label: LabelGazeOnly = serde_json::from_str(&text)
            .map_err(|e| DatagenError::Manifest(format!("{}: {e}", entry.label)))?;
        gazes.push(label.gaze.vector_cam);
    }
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..gazes.len()).rev() {
            gazes.swap(i, rng.gen_range(0..=i));
        }
    }

    let mut train_features = Vec::new();
    let mut train_gazes = Vec::new();
    let mut test_features = Vec::new();
    let mut test_gazes = Vec::new();
    for ((entry, f), g) in manifest.entries.iter().zip(features).zip(gazes) {
        if in_train_split(entry.seed, train_fraction) {
            train_features.push(f);
            train_gazes.push(g);
        } else {
            test_features.push(f);
            test_gazes.push(g);
        }
    }
    if train_features.is_empty() || test_features.is_empty() {
        return Err(DatagenError::TooFewImages {
            found: train_features.len().min(test_features.len()),
            required: 1,
        });
    }

    let mut mean_train = [0.0; 3];
    for g in &train_gazes {
        for a in 0..3 {
            mean_train[a] += g[a];
        }
    }
    let baseline_gaze = normalize_or_forward(mean_train);

    let mut test_errors_deg = Vec::with_capacity(test_features.len());
    let mut base_sum = 0.0;
    for (f, g) in test_features.iter().zip(&test_gazes) {
        let pred = knn_predict(&train_features, &train_gazes, k, f);
        test_errors_deg.push(angular_error_deg(pred, *g));
        base_sum += angular_error_deg(baseline_gaze, *g);
    }
    Ok(KnnReport {
        mean_error_deg: test_errors_deg.iter().sum::<f64>() / test_errors_deg.len() as f64,
        baseline_error_deg: base_sum / test_features.len() as f64,
        n_train: train_features.len(),
        n_test: test_features.len(),
        test_errors_deg,
        k,
    })
}
