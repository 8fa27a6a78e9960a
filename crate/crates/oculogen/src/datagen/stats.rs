//! Dataset distribution statistics: exact-grid 2D histograms over gaze
//! angles and head-relative pose, written as text tables and heatmap PNGs.

use std::fs;
use std::path::Path;

use crate::staging::head_frame_angles;

use super::{DatagenError, DatasetManifest};

/// Counts over a 2D grid whose bins are the distinct values that actually
/// occur (exact matches, not ranges).
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    /// Distinct row-axis values, ascending.
    pub row_values: Vec<f64>,
    /// Distinct column-axis values, ascending.
    pub col_values: Vec<f64>,
    /// Row-major counts: `counts[r * col_values.len() + c]`.
    pub counts: Vec<u64>,
}

impl Histogram2D {
    /// Builds a histogram from (row, col) observations.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Histogram2D {
        let mut row_values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut col_values: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        for v in [&mut row_values, &mut col_values] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut counts = vec![0u64; row_values.len() * col_values.len()];
        for &(r, c) in pairs {
            let ri = row_values.binary_search_by(|v| v.total_cmp(&r)).expect("row bin exists");
            let ci = col_values.binary_search_by(|v| v.total_cmp(&c)).expect("col bin exists");
            counts[ri * col_values.len() + ci] += 1;
        }
        Histogram2D { row_values, col_values, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Count at exact (row_value, col_value), or 0 when the bin is absent.
    pub fn count_at(&self, row_value: f64, col_value: f64) -> u64 {
        let ri = self.row_values.binary_search_by(|v| v.total_cmp(&row_value));
        let ci = self.col_values.binary_search_by(|v| v.total_cmp(&col_value));
        match (ri, ci) {
            (Ok(r), Ok(c)) => self.counts[r * self.col_values.len() + c],
            _ => 0,
        }
    }

    /// Plain-text table with row/column headers.
    pub fn to_table(&self, row_label: &str, col_label: &str) -> String {
        let mut s = format!("{row_label} \\ {col_label}");
        for c in &self.col_values {
            s.push_str(&format!("\t{c:.1}"));
        }
        s.push('\n');
        for (ri, r) in self.row_values.iter().enumerate() {
            s.push_str(&format!("{r:.1}"));
            for ci in 0..self.col_values.len() {
                s.push_str(&format!("\t{}", self.counts[ri * self.col_values.len() + ci]));
            }
            s.push('\n');
        }
        s
    }

    /// Grayscale heatmap, nearest-neighbor upscaled for legibility.
    pub fn to_heatmap(&self, scale: usize) -> image::GrayImage {
        let (rows, cols) = (self.row_values.len(), self.col_values.len());
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let (w, h) = ((cols * scale) as u32, (rows * scale) as u32);
        image::GrayImage::from_fn(w, h, |x, y| {
            let c = self.counts[(y as usize / scale) * cols + x as usize / scale];
            image::Luma([(255.0 * c as f64 / max).round() as u8])
        })
    }
}

/// Rounds a reconstructed angle to a 1e-6 degree quantum: angles that differ
/// only by trig round-off (~1e-13 deg) must share a bin, while any two grid
/// values are many orders of magnitude farther apart.
fn quantize_deg(a: f64) -> f64 {
    (a * 1e6).round() / 1e6
}

/// Distribution summary of an emitted dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    /// Counts over the camera-relative gaze grid (alpha rows, beta columns).
    pub gaze: Histogram2D,
    /// Counts over head-frame eyeball rotation (pitch rows, yaw columns).
    pub head_pose: Histogram2D,
}

/// Tabulates gaze and head-pose distributions for every emitted image and
/// writes tables plus heatmaps into `out_dir`.
pub fn stats(manifest: &DatasetManifest, out_dir: &Path) -> Result<StatsReport, DatagenError> {
    fs::create_dir_all(out_dir)?;
    let gaze_pairs: Vec<(f64, f64)> =
        manifest.entries.iter().map(|e| (e.pose.alpha_deg, e.pose.beta_deg)).collect();
    // Head-frame pose is recomputed from the recorded grid coordinates so the
    // histogram covers exactly the emitted images.
    let pose_pairs: Vec<(f64, f64)> = manifest
        .entries
        .iter()
        .map(|e| {
            let camera = crate::staging::place_camera(
                e.pose.theta_deg,
                e.pose.phi_deg,
                manifest.spec.camera.radius_mm,
                (manifest.spec.image.width, manifest.spec.image.height),
                manifest.spec.image.mm_per_px,
            )?;
            let gaze = crate::staging::gaze_direction(&camera, e.pose.alpha_deg, e.pose.beta_deg);
            let (pitch, yaw) = head_frame_angles(gaze);
            Ok::<_, DatagenError>((quantize_deg(pitch), quantize_deg(yaw)))
        })
        .collect::<Result<_, _>>()?;

    let report = StatsReport {
        gaze: Histogram2D::from_pairs(&gaze_pairs),
        head_pose: Histogram2D::from_pairs(&pose_pairs),
    };
    fs::write(out_dir.join("gaze_histogram.txt"), report.gaze.to_table("alpha_deg", "beta_deg"))?;
    fs::write(
        out_dir.join("head_pose_histogram.txt"),
        report.head_pose.to_table("pitch_deg", "yaw_deg"),
    )?;
    report
        .gaze
        .to_heatmap(16)
        .save(out_dir.join("gaze_histogram.png"))
        .map_err(|e| DatagenError::Manifest(format!("heatmap write failed: {e}")))?;
    report
        .head_pose
        .to_heatmap(16)
        .save(out_dir.join("head_pose_histogram.png"))
        .map_err(|e| DatagenError::Manifest(format!("heatmap write failed: {e}")))?;
    Ok(report)
}
