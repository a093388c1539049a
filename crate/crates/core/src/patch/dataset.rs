use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::augment::{augment8, VARIANTS};
use super::tiling::{tile, GridXY, TilingSpec};
use crate::class::Class;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A labeled whole-slide image with pixel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideImage {
    pub slide_id: String,
    pub label: Class,
    pub pixels: Tensor<f32>,
}

impl SlideImage {
    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn meta(&self) -> SlideMeta {
        SlideMeta {
            slide_id: self.slide_id.clone(),
            label: self.label,
            height: self.height(),
            width: self.width(),
        }
    }
}

/// Slide identity and geometry without pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideMeta {
    pub slide_id: String,
    pub label: Class,
    pub height: usize,
    pub width: usize,
}

/// One augmented patch instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub patch_id: String,
    pub slide_id: String,
    pub grid: GridXY,
    pub variant: u8,
    pub group_id: String,
    pub label: Class,
    pub active: bool,
}

pub fn group_id(slide_id: &str, cell: GridXY) -> String {
    format!("{slide_id}/{}/{}", cell.col, cell.row)
}

pub fn patch_id(slide_id: &str, cell: GridXY, variant: u8) -> String {
    format!("{slide_id}/{}/{}/{variant}", cell.col, cell.row)
}

/// Records for every window of every slide, eight variants each, all active.
/// Ordered by slide, then row-major grid cell, then variant.
pub fn build_manifest(slides: &[SlideMeta], spec: &TilingSpec) -> Result<Vec<PatchRecord>> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for slide in slides {
        if !seen.insert(slide.slide_id.as_str()) {
            return Err(Error::DuplicateSlide(slide.slide_id.clone()));
        }
        let grid = spec.grid(slide.height, slide.width)?;
        records.reserve(grid.cells() * VARIANTS as usize);
        for cell in grid.iter() {
            let group = group_id(&slide.slide_id, cell);
            for variant in 0..VARIANTS {
                records.push(PatchRecord {
                    patch_id: patch_id(&slide.slide_id, cell, variant),
                    slide_id: slide.slide_id.clone(),
                    grid: cell,
                    variant,
                    group_id: group.clone(),
                    label: slide.label,
                    active: true,
                });
            }
        }
    }
    Ok(records)
}

/// Patch records with their pixels. Records are only ever deactivated.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    records: Vec<PatchRecord>,
    pixels: Vec<Tensor<f32>>,
    index: HashMap<String, usize>,
    classes: usize,
}

pub fn build_training_set(
    slides: &[SlideImage],
    spec: &TilingSpec,
    classes: usize,
) -> Result<TrainingSet> {
    let metas: Vec<SlideMeta> = slides.iter().map(SlideImage::meta).collect();
    let records = build_manifest(&metas, spec)?;
    if let Some(first) = slides.first() {
        if let Some(odd) = slides.iter().find(|s| s.channels() != first.channels()) {
            return Err(Error::ShapeMismatch {
                expected: first.pixels.shape().to_vec(),
                actual: odd.pixels.shape().to_vec(),
            });
        }
    }
    if let Some(r) = records.iter().find(|r| r.label.index() >= classes) {
        return Err(Error::LabelOutOfRange {
            label: r.label.index(),
            classes,
        });
    }
    let mut pixels = Vec::with_capacity(records.len());
    for slide in slides {
        for (_, patch) in tile(&slide.pixels, spec)? {
            pixels.extend(augment8(&patch)?);
        }
    }
    TrainingSet::new(records, pixels, classes)
}

impl TrainingSet {
    pub fn new(
        records: Vec<PatchRecord>,
        pixels: Vec<Tensor<f32>>,
        classes: usize,
    ) -> Result<Self> {
        if records.len() != pixels.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![records.len()],
                actual: vec![pixels.len()],
            });
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.patch_id.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate patch id `{}`",
                    r.patch_id
                )));
            }
        }
        Ok(Self {
            records,
            pixels,
            index,
            classes,
        })
    }

    pub fn records(&self) -> &[PatchRecord] {
        &self.records
    }

    pub fn pixels(&self, i: usize) -> &Tensor<f32> {
        &self.pixels[i]
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.records.iter().filter(|r| r.active).count()
    }

    /// Indices of active records, in record order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].active)
            .collect()
    }

    pub fn position(&self, patch_id: &str) -> Option<usize> {
        self.index.get(patch_id).copied()
    }

    pub fn record(&self, patch_id: &str) -> Option<&PatchRecord> {
        self.position(patch_id).map(|i| &self.records[i])
    }

    /// Deactivates a record; returns whether it was active.
    pub fn deactivate(&mut self, patch_id: &str) -> Result<bool> {
        let i = self
            .position(patch_id)
            .ok_or_else(|| Error::UnknownId(patch_id.to_string()))?;
        Ok(std::mem::replace(&mut self.records[i].active, false))
    }

    /// Record indices grouped by `group_id`.
    pub fn groups(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            groups.entry(r.group_id.as_str()).or_default().push(i);
        }
        groups
    }
}
