//! Slide-level classification: non-overlapping tiling, per-patch prediction,
//! majority vote, and a colored class map.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::class::Class;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, Accuracy};
use crate::nn::Network;
use crate::patch::{tile, SlideImage, TilingSpec};
use crate::scalar::Scalar;
use crate::tensor::{stack_images, Tensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Plurality over per-patch argmax labels.
    #[default]
    MajorityVote,
    /// Argmax of the cell-averaged probability vector.
    MeanProbability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidePrediction {
    pub slide_id: String,
    pub rows: usize,
    pub cols: usize,
    /// Per-cell class probabilities, row-major.
    pub probabilities: Vec<Vec<f64>>,
    pub patch_labels: Vec<Class>,
    pub voted_label: Class,
    pub vote_counts: BTreeMap<Class, usize>,
    pub tie_broken: bool,
}

fn argmax(p: &[f64]) -> usize {
    // First maximum wins.
    p.iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > p[best] { i } else { best })
}

/// Plurality winner over `labels`; ties go to the tied class with the largest
/// summed probability, then to the lowest class index. The flag reports
/// whether more than one class shared the top count.
pub fn majority_vote(labels: &[usize], probabilities: &[Vec<f64>]) -> Result<(usize, bool)> {
    if labels.is_empty() {
        return Err(Error::InvalidConfig("majority vote over zero cells".into()));
    }
    if labels.len() != probabilities.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![labels.len()],
            actual: vec![probabilities.len()],
        });
    }
    let classes = labels.iter().copied().max().unwrap_or(0).max(
        probabilities
            .iter()
            .map(Vec::len)
            .max()
            .unwrap_or(0)
            .saturating_sub(1),
    ) + 1;
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let top = *counts.iter().max().expect("non-empty");
    let tied: Vec<usize> = (0..classes).filter(|&c| counts[c] == top).collect();
    if tied.len() == 1 {
        return Ok((tied[0], false));
    }
    let mass = |c: usize| -> f64 {
        probabilities
            .iter()
            .map(|p| p.get(c).copied().unwrap_or(0.0))
            .sum()
    };
    let winner = tied.iter().copied().fold(
        tied[0],
        |best, c| if mass(c) > mass(best) { c } else { best },
    );
    Ok((winner, true))
}

pub fn predict_slide<T: Scalar>(
    net: &Network<T>,
    slide: &SlideImage,
    window: usize,
    aggregation: Aggregation,
) -> Result<SlidePrediction> {
    predict_pixels(net, &slide.slide_id, &slide.pixels, window, aggregation)
}

/// As [`predict_slide`] for an unlabeled `H x W x C` image.
pub fn predict_pixels<T: Scalar>(
    net: &Network<T>,
    slide_id: &str,
    pixels: &Tensor<f32>,
    window: usize,
    aggregation: Aggregation,
) -> Result<SlidePrediction> {
    let &[height, width, _] = pixels.shape() else {
        return Err(Error::InvalidShape {
            shape: pixels.shape().to_vec(),
            reason: "expected an H x W x C image".into(),
        });
    };
    if window == 0 || height % window != 0 || width % window != 0 {
        return Err(Error::InvalidTiling(format!(
            "slide {slide_id} is {width}x{height}, not divisible by window {window}"
        )));
    }
    let spec = TilingSpec::non_overlapping(window);
    let grid = spec.grid(height, width)?;
    let tiles = tile(pixels, &spec)?;
    let batch: Tensor<T> = stack_images(tiles.iter().map(|(_, t)| t))?;
    let probs = net.forward(&batch)?;
    let probabilities: Vec<Vec<f64>> = probs
        .data()
        .chunks_exact(net.classes())
        .map(|row| row.iter().map(|v| v.as_f64()).collect())
        .collect();
    let label_idx: Vec<usize> = probabilities.iter().map(|p| argmax(p)).collect();
    let (voted, tie_broken) = match aggregation {
        Aggregation::MajorityVote => majority_vote(&label_idx, &probabilities)?,
        Aggregation::MeanProbability => {
            let mut mean = vec![0.0; net.classes()];
            for p in &probabilities {
                for (m, v) in mean.iter_mut().zip(p) {
                    *m += v;
                }
            }
            (argmax(&mean), false)
        }
    };
    let patch_labels = label_idx
        .iter()
        .map(|&i| Class::from_index(i))
        .collect::<Result<Vec<_>>>()?;
    let mut vote_counts = BTreeMap::new();
    for &c in &patch_labels {
        *vote_counts.entry(c).or_insert(0) += 1;
    }
    Ok(SlidePrediction {
        slide_id: slide_id.to_string(),
        rows: grid.rows,
        cols: grid.cols,
        probabilities,
        patch_labels,
        voted_label: Class::from_index(voted)?,
        vote_counts,
        tie_broken,
    })
}

/// One `cell_px x cell_px` block per grid cell in the class palette, as an RGB
/// image with values in `[0, 1]` (exact multiples of 1/255).
pub fn render_class_map(prediction: &SlidePrediction, cell_px: usize) -> Tensor<f32> {
    let (h, w) = (prediction.rows * cell_px, prediction.cols * cell_px);
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let class = prediction.patch_labels[(y / cell_px) * prediction.cols + x / cell_px];
            data.extend(class.color().iter().map(|&b| b as f32 / 255.0));
        }
    }
    Tensor::new(vec![h, w, 3], data).expect("class map shape is consistent")
}

/// Reads the class of every cell back from a rendered map (center pixel of each block).
pub fn read_class_map(image: &Tensor<f32>, rows: usize, cols: usize) -> Vec<Option<Class>> {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let (ch, cw) = (h / rows, w / cols);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let px = image.offset(&[r * ch + ch / 2, c * cw + cw / 2, 0]);
            let rgb = [0, 1, 2].map(|k| (image.data()[px + k] * 255.0).round() as u8);
            out.push(Class::from_color(rgb));
        }
    }
    out
}

/// Slide accuracy against `truth` (slide id -> label).
pub fn slice_accuracy(
    predictions: &[SlidePrediction],
    truth: &BTreeMap<String, Class>,
) -> Result<Accuracy> {
    let pairs = predictions
        .iter()
        .map(|p| {
            truth
                .get(&p.slide_id)
                .map(|t| (t.index(), p.voted_label.index()))
                .ok_or_else(|| Error::UnknownId(p.slide_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    accuracy(pairs)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::{build_classifier, ChannelPlan};

    fn onehot(c: usize) -> Vec<f64> {
        let mut v = vec![0.0; 4];
        v[c] = 1.0;
        v
    }

    #[test]
    fn unanimous_and_plurality() {
        let labels = [3; 12];
        let probs: Vec<_> = labels.iter().map(|&c| onehot(c)).collect();
        assert_eq!(majority_vote(&labels, &probs).unwrap(), (3, false));
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2];
        let probs: Vec<_> = labels.iter().map(|&c| onehot(c)).collect();
        assert_eq!(majority_vote(&labels, &probs).unwrap(), (0, false));
    }

    #[test]
    fn tie_goes_to_larger_probability_mass() {
        // Six cells each for classes 0 and 1; class-0 mass 6.2 vs class-1 mass 5.8.
        let mut labels = vec![0; 6];
        labels.extend([1; 6]);
        let mut probs = Vec::new();
        for i in 0..12 {
            let (a, b) = if i < 6 {
                (0.6, 0.4)
            } else {
                (0.4333333333333333, 0.5666666666666667)
            };
            probs.push(vec![a, b, 0.0, 0.0]);
        }
        let mass_a: f64 = probs.iter().map(|p| p[0]).sum();
        let mass_b: f64 = probs.iter().map(|p| p[1]).sum();
        assert!((mass_a - 6.2).abs() < 1e-9 && (mass_b - 5.8).abs() < 1e-9);
        assert_eq!(majority_vote(&labels, &probs).unwrap(), (0, true));

        // Swapping the masses swaps the winner.
        let swapped: Vec<_> = probs.iter().map(|p| vec![p[1], p[0], 0.0, 0.0]).collect();
        assert_eq!(majority_vote(&labels, &swapped).unwrap(), (1, true));

        // Exact mass tie falls back to the lowest index.
        let flat = vec![vec![0.5, 0.5, 0.0, 0.0]; 12];
        let mut l2 = vec![1; 6];
        l2.extend([3; 6]);
        assert_eq!(majority_vote(&l2, &flat).unwrap(), (1, true));
        assert!(majority_vote(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn vote_is_order_free(labels in prop::collection::vec(0usize..4, 1..16), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probs: Vec<Vec<f64>> = labels.iter().map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
            let base = majority_vote(&labels, &probs).unwrap();
            let mut idx: Vec<usize> = (0..labels.len()).collect();
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            let l: Vec<_> = idx.iter().map(|&i| labels[i]).collect();
            let p: Vec<_> = idx.iter().map(|&i| probs[i].clone()).collect();
            prop_assert_eq!(majority_vote(&l, &p).unwrap(), base);
        }

        #[test]
        fn strict_majority_never_ties(n in 1usize..16, winner in 0usize..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let majority = n / 2 + 1;
            let labels: Vec<usize> = (0..n)
                .map(|i| if i < majority { winner } else { rng.random_range(0..4) })
                .collect();
            let probs: Vec<Vec<f64>> = labels.iter().map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
            prop_assert_eq!(majority_vote(&labels, &probs).unwrap(), (winner, false));
        }
    }

    fn pred_with(labels: Vec<Class>, rows: usize, cols: usize) -> SlidePrediction {
        SlidePrediction {
            slide_id: "s".into(),
            rows,
            cols,
            probabilities: labels.iter().map(|c| onehot(c.index())).collect(),
            voted_label: labels[0],
            vote_counts: BTreeMap::new(),
            tie_broken: false,
            patch_labels: labels,
        }
    }

    #[test]
    fn class_map_rendering() {
        let p = pred_with(vec![Class::Normal; 12], 3, 4);
        let img = render_class_map(&p, 2);
        assert_eq!(img.shape(), &[6, 8, 3]);
        let green: Vec<f32> = Class::Normal
            .color()
            .iter()
            .map(|&b| b as f32 / 255.0)
            .collect();
        assert!(img.data().chunks_exact(3).all(|px| px == green.as_slice()));

        let labels: Vec<Class> = (0..12).map(|i| Class::ALL[(i * 7 + i / 4) % 4]).collect();
        let p = pred_with(labels.clone(), 3, 4);
        let img = render_class_map(&p, 3);
        // Hand-built fixture: block (r, c) covers pixels [3r, 3r+3) x [3c, 3c+3).
        for r in 0..3 {
            for c in 0..4 {
                let want = labels[r * 4 + c].color();
                for y in 3 * r..3 * r + 3 {
                    for x in 3 * c..3 * c + 3 {
                        let o = img.offset(&[y, x, 0]);
                        let got = [0, 1, 2].map(|k| (img.data()[o + k] * 255.0).round() as u8);
                        assert_eq!(got, want);
                    }
                }
            }
        }
        let back: Vec<Class> = read_class_map(&img, 3, 4)
            .into_iter()
            .map(Option::unwrap)
            .collect();
        assert_eq!(back, labels);
    }

    #[test]
    fn palette_is_a_bijection() {
        for c in Class::ALL {
            assert_eq!(Class::from_color(c.color()), Some(c));
        }
        let mut colors: Vec<_> = Class::ALL.iter().map(|c| c.color()).collect();
        colors.dedup();
        assert_eq!(colors.len(), 4);
    }

    #[test]
    fn predict_slide_geometry_and_cells() {
        let spec = build_classifier(8, 3, ChannelPlan(2, 3, 2), 4).unwrap();
        let net = Network::<f32>::new(spec, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let slide = SlideImage {
            slide_id: "wide".into(),
            label: Class::InSitu,
            pixels: Tensor::new(
                vec![24, 32, 3],
                (0..24 * 32 * 3).map(|_| rng.random::<f32>()).collect(),
            )
            .unwrap(),
        };
        let p = predict_slide(&net, &slide, 8, Aggregation::MajorityVote).unwrap();
        assert_eq!((p.rows, p.cols), (3, 4));
        assert_eq!(p.vote_counts.values().sum::<usize>(), 12);
        let top = p.vote_counts.values().max().unwrap();
        assert_eq!(p.vote_counts.get(&p.voted_label), Some(top));
        // Independent per-patch forward.
        for (i, (_, patch)) in tile(&slide.pixels, &TilingSpec::non_overlapping(8))
            .unwrap()
            .into_iter()
            .enumerate()
        {
            let one = net
                .forward(&patch.reshape(vec![1, 8, 8, 3]).unwrap())
                .unwrap();
            let probs: Vec<f64> = one.data().iter().map(|&v| v as f64).collect();
            assert_eq!(p.patch_labels[i].index(), argmax(&probs));
        }
        let bad = SlideImage {
            pixels: Tensor::zeros(vec![20, 32, 3]).unwrap(),
            ..slide.clone()
        };
        assert!(predict_slide(&net, &bad, 8, Aggregation::MajorityVote).is_err());

        let single = SlideImage {
            pixels: Tensor::zeros(vec![8, 8, 3]).unwrap(),
            ..slide
        };
        let p = predict_slide(&net, &single, 8, Aggregation::MajorityVote).unwrap();
        assert_eq!(p.probabilities.len(), 1);
        assert_eq!(p.voted_label, p.patch_labels[0]);
    }

    #[test]
    fn slide_accuracy_cases() {
        let mut truth = BTreeMap::new();
        let mut preds = Vec::new();
        for (i, c) in Class::ALL.iter().cycle().take(8).enumerate() {
            truth.insert(format!("s{i}"), *c);
            let mut p = pred_with(vec![Class::Benign], 1, 1);
            p.slide_id = format!("s{i}");
            p.voted_label = Class::Benign;
            preds.push(p);
        }
        let a = slice_accuracy(&preds, &truth).unwrap();
        assert_eq!((a.macro_pct, a.plain_pct), (25.0, 25.0));
        for p in &mut preds {
            p.voted_label = truth[&p.slide_id];
        }
        assert_eq!(slice_accuracy(&preds, &truth).unwrap().macro_pct, 100.0);
        preds[0].slide_id = "ghost".into();
        assert!(matches!(
            slice_accuracy(&preds, &truth),
            Err(Error::UnknownId(_))
        ));
    }

    // Brute-force tally against the metric on a random case.
    #[test]
    fn slide_accuracy_matches_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut truth = BTreeMap::new();
        let mut preds = Vec::new();
        for i in 0..30 {
            let t = Class::ALL[rng.random_range(0..4)];
            let v = Class::ALL[rng.random_range(0..4)];
            truth.insert(format!("s{i}"), t);
            let mut p = pred_with(vec![v], 1, 1);
            p.slide_id = format!("s{i}");
            p.voted_label = v;
            preds.push(p);
        }
        let mut sum = 0.0;
        let mut present = 0;
        for c in Class::ALL {
            let of_c: Vec<_> = preds.iter().filter(|p| truth[&p.slide_id] == c).collect();
            if of_c.is_empty() {
                continue;
            }
            present += 1;
            sum += of_c.iter().filter(|p| p.voted_label == c).count() as f64 / of_c.len() as f64;
        }
        let got = slice_accuracy(&preds, &truth).unwrap();
        assert!((got.macro_pct - 100.0 * sum / present as f64).abs() < 1e-9);
        let plain = preds
            .iter()
            .filter(|p| truth[&p.slide_id] == p.voted_label)
            .count() as f64
            / 30.0;
        assert!((got.plain_pct - 100.0 * plain).abs() < 1e-9);
    }
}
