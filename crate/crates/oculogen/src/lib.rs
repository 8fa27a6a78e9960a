//! Procedural eye-region model, physically-based renderer, and generator for
//! gaze-labelled synthetic eye images.
//!
//! The crate builds a two-sphere eyeball (transparent corneal shell over a
//! textured iris/sclera interior) and a procedural skin/eyelid patch, poses
//! them from camera and gaze parameters, renders them with a Monte Carlo path
//! tracer under HDR image-based lighting, and writes images with
//! pixel-accurate landmark and gaze labels.
//!
//! Module layering (each depends only on earlier ones):
//! `geom` → `field` → `eyeball` / `eyeregion` → `staging` → `lighting` →
//! `tracer` → `annotate` → `datagen`.

pub mod field;
pub mod geom;

pub mod eyeball;
pub mod eyeregion;

pub mod staging;

pub mod lighting;

pub mod tracer;

pub mod annotate;

pub mod datagen;
