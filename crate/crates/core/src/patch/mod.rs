//! Slide tiling, eight-way augmentation and patch bookkeeping.

pub mod augment;
pub mod dataset;
pub mod io;
pub mod tiling;

pub use augment::{apply_variant, augment8, compose, flip_vertical, rotate90, VARIANTS};
pub use dataset::{
    build_manifest, build_training_set, group_id, patch_id, PatchRecord, SlideImage, SlideMeta,
    TrainingSet,
};
pub use io::{load_dataset, load_image, save_patch, save_slide};
pub use tiling::{axis_count, tile, GridSize, GridXY, TilingSpec};
