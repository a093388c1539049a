//! Synthetic textured slides with controlled patch-level label contamination.
//!
//! Each class owns an oriented sinusoid (period, angle). A slide is painted
//! with its class texture, then `round(rho * cells)` tiling windows chosen by
//! seeded sampling are repainted with another class's texture while keeping
//! the slide label. Gaussian noise is added and pixels are quantized to 8 bits
//! so datasets survive a pixmap round trip unchanged.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::class::Class;
use crate::error::{Error, Result};
use crate::patch::{group_id, GridXY, PatchRecord, SlideImage, TilingSpec};
use crate::split::{stratified_split, SplitRatio};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureParams {
    /// Wavelength in pixels.
    pub period: f64,
    pub angle_deg: f64,
}

/// How the foreign texture of a contaminated window is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForeignClass {
    /// Uniform over the other classes.
    Random,
    /// Always the next class, `(label + 1) % classes`.
    #[default]
    Adjacent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub slide_height: usize,
    pub slide_width: usize,
    pub channels: usize,
    pub tiling: TilingSpec,
    pub slides_per_class: usize,
    pub contamination_rho: f64,
    pub foreign: ForeignClass,
    pub textures: Vec<TextureParams>,
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            slide_height: 64,
            slide_width: 64,
            channels: 3,
            tiling: TilingSpec {
                window: 32,
                stride: 16,
            },
            slides_per_class: 10,
            contamination_rho: 0.10,
            foreign: ForeignClass::default(),
            textures: default_textures(),
            amplitude: 0.3,
            noise_sigma: 0.08,
            seed: 0,
        }
    }
}

pub fn default_textures() -> Vec<TextureParams> {
    [(4.0, 0.0), (6.5, 30.0), (10.0, 60.0), (15.0, 105.0)]
        .into_iter()
        .map(|(period, angle_deg)| TextureParams { period, angle_deg })
        .collect()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=Class::ALL.len()).contains(&self.classes) {
            return Err(Error::InvalidConfig(format!(
                "classes must be in 2..=4, got {}",
                self.classes
            )));
        }
        if self.textures.len() < self.classes {
            return Err(Error::InvalidConfig(format!(
                "{} textures given for {} classes",
                self.textures.len(),
                self.classes
            )));
        }
        if self
            .textures
            .iter()
            .any(|t| t.period.is_nan() || t.period <= 0.0)
        {
            return Err(Error::InvalidConfig(
                "texture periods must be positive".into(),
            ));
        }
        for (i, a) in self.textures[..self.classes].iter().enumerate() {
            if self.textures[..i].iter().any(|b| b == a) {
                return Err(Error::InvalidConfig(
                    "class textures must be pairwise distinct".into(),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.contamination_rho) {
            return Err(Error::InvalidConfig(format!(
                "contamination_rho must be in [0, 1), got {}",
                self.contamination_rho
            )));
        }
        if self.channels == 0 || self.slides_per_class == 0 {
            return Err(Error::InvalidConfig(
                "channels and slides_per_class must be positive".into(),
            ));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig(
                "noise_sigma must be non-negative".into(),
            ));
        }
        self.tiling.grid(self.slide_height, self.slide_width)?;
        Ok(())
    }

    /// Contaminated windows per slide: `round(rho * cells)`.
    pub fn contaminated_per_slide(&self) -> Result<usize> {
        let cells = self
            .tiling
            .grid(self.slide_height, self.slide_width)?
            .cells();
        Ok((self.contamination_rho * cells as f64).round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub group_id: String,
    pub slide_id: String,
    pub grid: GridXY,
    pub assigned_label: Class,
    pub true_label: Class,
    pub is_mislabeled: bool,
}

/// Ground truth per tiling group, keyed by `group_id`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MislabelOracle {
    pub entries: BTreeMap<String, OracleEntry>,
}

impl MislabelOracle {
    pub fn get(&self, group_id: &str) -> Option<&OracleEntry> {
        self.entries.get(group_id)
    }

    pub fn mislabeled_groups(&self) -> usize {
        self.entries.values().filter(|e| e.is_mislabeled).count()
    }

    pub fn to_json(&self) -> Result<String> {
        let list: Vec<&OracleEntry> = self.entries.values().collect();
        Ok(serde_json::to_string_pretty(&list)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let list: Vec<OracleEntry> = serde_json::from_str(s)?;
        let mut entries = BTreeMap::new();
        for e in list {
            if e.is_mislabeled != (e.assigned_label != e.true_label) {
                return Err(Error::InvalidConfig(format!(
                    "oracle entry {} is inconsistent",
                    e.group_id
                )));
            }
            let key = e.group_id.clone();
            if entries.insert(key.clone(), e).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate oracle group {key}"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    /// All slides, ordered by class then slide id.
    pub slides: Vec<SlideImage>,
    pub oracle: MislabelOracle,
}

impl SynthDataset {
    pub fn split(
        self,
        ratio: SplitRatio,
        seed: u64,
    ) -> Result<(Vec<SlideImage>, Vec<SlideImage>, MislabelOracle)> {
        let (train, val) = stratified_split(self.slides, ratio, seed)?;
        Ok((train, val, self.oracle))
    }
}

pub fn slide_name(class: Class, i: usize) -> String {
    format!("{}_{i:03}", class.name().to_lowercase())
}

fn paint(
    buf: &mut [f64],
    width: usize,
    region: (usize, usize, usize, usize),
    tex: &TextureParams,
    amplitude: f64,
    phase: f64,
) {
    let (x0, y0, x1, y1) = region;
    let (s, c) = tex.angle_deg.to_radians().sin_cos();
    let k = 2.0 * PI / tex.period;
    for y in y0..y1 {
        for x in x0..x1 {
            buf[y * width + x] =
                0.5 + amplitude * (k * (x as f64 * c + y as f64 * s) + phase).sin();
        }
    }
}

fn generate_slide(
    spec: &SynthSpec,
    class: Class,
    index: usize,
    oracle: &mut MislabelOracle,
) -> Result<SlideImage> {
    let (h, w) = (spec.slide_height, spec.slide_width);
    let slide_id = slide_name(class, index);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream((class.index() * 1_000_003 + index) as u64);

    let mut texture = vec![0.0; h * w];
    let phase = rng.random_range(0.0..2.0 * PI);
    paint(
        &mut texture,
        w,
        (0, 0, w, h),
        &spec.textures[class.index()],
        spec.amplitude,
        phase,
    );

    let grid = spec.tiling.grid(h, w)?;
    let cells: Vec<GridXY> = grid.iter().collect();
    let mut chosen = sample(&mut rng, cells.len(), spec.contaminated_per_slide()?).into_vec();
    chosen.sort_unstable();
    let mut truth = vec![class; cells.len()];
    for &ci in &chosen {
        let foreign = match spec.foreign {
            ForeignClass::Adjacent => (class.index() + 1) % spec.classes,
            ForeignClass::Random => {
                let r = rng.random_range(0..spec.classes - 1);
                if r >= class.index() {
                    r + 1
                } else {
                    r
                }
            }
        };
        let foreign = Class::from_index(foreign)?;
        truth[ci] = foreign;
        let (x0, y0) = spec.tiling.origin(cells[ci]);
        let phase = rng.random_range(0.0..2.0 * PI);
        let win = spec.tiling.window;
        paint(
            &mut texture,
            w,
            (x0, y0, x0 + win, y0 + win),
            &spec.textures[foreign.index()],
            spec.amplitude,
            phase,
        );
    }
    for (cell, true_label) in cells.iter().zip(truth) {
        let gid = group_id(&slide_id, *cell);
        oracle.entries.insert(
            gid.clone(),
            OracleEntry {
                group_id: gid,
                slide_id: slide_id.clone(),
                grid: *cell,
                assigned_label: class,
                true_label,
                is_mislabeled: true_label != class,
            },
        );
    }

    let noise =
        Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut data = Vec::with_capacity(h * w * spec.channels);
    for &t in &texture {
        for _ in 0..spec.channels {
            let v = (t + noise.sample(&mut rng)).clamp(0.0, 1.0);
            data.push(((v * 255.0).round() / 255.0) as f32);
        }
    }
    Ok(SlideImage {
        slide_id,
        label: class,
        pixels: Tensor::new(vec![h, w, spec.channels], data)?,
    })
}

/// Generates every slide and its oracle. Fully determined by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut oracle = MislabelOracle::default();
    let mut slides = Vec::with_capacity(spec.classes * spec.slides_per_class);
    for &class in &Class::ALL[..spec.classes] {
        for i in 0..spec.slides_per_class {
            slides.push(generate_slide(spec, class, i, &mut oracle)?);
        }
    }
    Ok(SynthDataset { slides, oracle })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEval {
    /// Removed mislabeled records / all mislabeled records (0 when there are none).
    pub mislabel_recall: f64,
    /// Removed clean records / all clean records (0 when there are none).
    pub clean_false_removal_rate: f64,
    pub removed_mislabeled: usize,
    pub total_mislabeled: usize,
    pub removed_clean: usize,
    pub total_clean: usize,
}

/// Scores a removal list against the oracle over the record population it was drawn from.
pub fn oracle_eval<'a>(
    removed: impl IntoIterator<Item = &'a str>,
    population: &[PatchRecord],
    oracle: &MislabelOracle,
) -> Result<OracleEval> {
    let mut mislabeled_of: BTreeMap<&str, bool> = BTreeMap::new();
    let (mut total_mislabeled, mut total_clean) = (0, 0);
    for r in population {
        let entry = oracle
            .get(&r.group_id)
            .ok_or_else(|| Error::UnknownId(r.group_id.clone()))?;
        mislabeled_of.insert(&r.patch_id, entry.is_mislabeled);
        if entry.is_mislabeled {
            total_mislabeled += 1;
        } else {
            total_clean += 1;
        }
    }
    let (mut removed_mislabeled, mut removed_clean) = (0, 0);
    let mut seen = std::collections::BTreeSet::new();
    for id in removed {
        let &bad = mislabeled_of
            .get(id)
            .ok_or_else(|| Error::UnknownId(id.to_string()))?;
        if !seen.insert(id) {
            continue;
        }
        if bad {
            removed_mislabeled += 1;
        } else {
            removed_clean += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(OracleEval {
        mislabel_recall: ratio(removed_mislabeled, total_mislabeled),
        clean_false_removal_rate: ratio(removed_clean, total_clean),
        removed_mislabeled,
        total_mislabeled,
        removed_clean,
        total_clean,
    })
}
