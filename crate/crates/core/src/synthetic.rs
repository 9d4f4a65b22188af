//! Seeded synthetic datasets for tests, demos and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grabcut::{Mask, Rect, Rgb, RgbImage};
use crate::model::{FeatureMatrix, LabelVector, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
}

/// `n` points in `k` isotropic Gaussian blobs of standard deviation `sigma`.
///
/// Blob means sit on a regular polygon in the first two coordinates, so
/// adjacent means are exactly `separation·sigma` apart (for `k = 2`, the
/// two means are that far apart on the first axis). Point `i` belongs to
/// blob `i·k/n`.
///
/// # Panics
/// If `n < k`, `k == 0` or `dim < 2`.
pub fn gaussian_blobs(
    n: usize,
    k: usize,
    dim: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> SyntheticData {
    assert!(k >= 1 && n >= k && dim >= 2, "need n >= k >= 1 and dim >= 2");
    let gap = separation * sigma;
    let radius = if k == 1 {
        0.0
    } else {
        gap / (2.0 * (std::f64::consts::PI / k as f64).sin())
    };
    let means: Vec<[f64; 2]> = (0..k)
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            [radius * theta.cos(), radius * theta.sin()]
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i * k / n;
        labels.push(label);
        for d in 0..dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let center = means[label].get(d).copied().unwrap_or(0.0);
            data.push(center + sigma * noise);
        }
    }
    SyntheticData {
        features: FeatureMatrix::new(Matrix::new(n, dim, data).expect("sized above"))
            .expect("finite by construction"),
        labels: LabelVector::new(labels),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: RgbImage,
    /// Ground-truth foreground block.
    pub truth: Mask,
    /// Box around the block with a 2–4 px margin.
    pub bbox: Rect,
}

pub const SCENE_SIZE: usize = 64;

fn color_distance(a: Rgb, b: Rgb) -> f64 {
    (0..3)
        .map(|c| (a[c] as f64 - b[c] as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// A uniform square block (side 10–30 px) of one color on a uniform
/// background of another, at least 100 RGB units apart, in a 64×64 image.
pub fn two_color_image(seed: u64) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = rng.random_range(10..=30usize);
    let margin = rng.random_range(2..=4usize);
    let lo = margin;
    let hi = SCENE_SIZE - margin - side;
    let bx = rng.random_range(lo..=hi);
    let by = rng.random_range(lo..=hi);
    let (fg, bg) = loop {
        let a: Rgb = rng.random();
        let b: Rgb = rng.random();
        if color_distance(a, b) >= 100.0 {
            break (a, b);
        }
    };
    let mut image = RgbImage::filled(SCENE_SIZE, SCENE_SIZE, bg).expect("non-empty");
    let block = Rect::new(bx, by, side, side);
    let mut truth = vec![false; SCENE_SIZE * SCENE_SIZE];
    for y in by..by + side {
        for x in bx..bx + side {
            image.put(x, y, fg);
            truth[y * SCENE_SIZE + x] = true;
        }
    }
    SyntheticScene {
        image,
        truth: Mask::new(SCENE_SIZE, SCENE_SIZE, truth).expect("sized above"),
        bbox: Rect::new(
            block.x - margin,
            block.y - margin,
            side + 2 * margin,
            side + 2 * margin,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_layout() {
        let d = gaussian_blobs(300, 3, 2, 10.0, 0.5, 1);
        assert_eq!(d.features.n_samples(), 300);
        assert_eq!(d.labels.as_slice()[0], 0);
        assert_eq!(d.labels.as_slice()[299], 2);
        assert_eq!(d.labels.distinct(), 3);
        // empirical means sit ~5 apart pairwise
        let mut means = [[0.0; 2]; 3];
        for (i, &l) in d.labels.as_slice().iter().enumerate() {
            for c in 0..2 {
                means[l][c] += d.features.row(i)[c] / 100.0;
            }
        }
        for a in 0..3 {
            for b in a + 1..3 {
                let dist = ((means[a][0] - means[b][0]).powi(2) + (means[a][1] - means[b][1]).powi(2)).sqrt();
                assert!((dist - 5.0).abs() < 0.3, "{dist}");
            }
        }
        assert_eq!(d, gaussian_blobs(300, 3, 2, 10.0, 0.5, 1));
    }

    #[test]
    fn scenes_respect_layout_bounds() {
        for seed in 0..50 {
            let s = two_color_image(seed);
            let area = s.truth.foreground_count();
            let side = (area as f64).sqrt() as usize;
            assert_eq!(side * side, area);
            assert!((10..=30).contains(&side));
            assert!(s.bbox.x + s.bbox.w <= SCENE_SIZE && s.bbox.y + s.bbox.h <= SCENE_SIZE);
            assert!(s.bbox.w >= side + 4);
        }
    }
}
