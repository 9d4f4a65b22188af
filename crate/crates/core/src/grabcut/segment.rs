use serde::{Deserialize, Serialize};

use super::gmm::to_f64;
use super::{
    fit_gmm, learn_gmm, max_flow_min_cut, ColorGmm, GrabcutError, Mask, PixelGraph, Rect, RgbImage,
    Stroke, Trimap, TrimapLabel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrabcutParams {
    /// Mixture components per region.
    pub components: usize,
    /// Smoothness weight.
    pub gamma: f64,
    /// Stop once a round flips fewer than this fraction of pixels.
    pub convergence_fraction: f64,
}

impl Default for GrabcutParams {
    fn default() -> Self {
        Self {
            components: 5,
            gamma: 50.0,
            convergence_fraction: 0.001,
        }
    }
}

impl GrabcutParams {
    pub fn validate(&self) -> Result<(), GrabcutError> {
        if self.components == 0 {
            return Err(GrabcutError::Params("components must be at least 1".into()));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(GrabcutError::Params(format!("gamma must be non-negative (got {})", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.convergence_fraction) {
            return Err(GrabcutError::Params(format!(
                "convergence_fraction must lie in [0, 1] (got {})",
                self.convergence_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterateSummary {
    pub rounds_run: usize,
    pub converged: bool,
    pub foreground: usize,
}

/// 8-neighborhood n-links with contrast-sensitive weights. Diagonal links
/// are scaled by `1/√2`.
fn smoothness_edges(image: &RgbImage, gamma: f64) -> Vec<(usize, usize, f64)> {
    let (w, h) = (image.width(), image.height());
    let offsets: [(isize, isize, f64); 4] = [
        (1, 0, 1.0),
        (0, 1, 1.0),
        (1, 1, std::f64::consts::SQRT_2),
        (-1, 1, std::f64::consts::SQRT_2),
    ];
    let mut pairs = Vec::with_capacity(4 * w * h);
    for y in 0..h {
        for x in 0..w {
            for &(dx, dy, dist) in &offsets {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                let a = to_f64(image.get(x, y));
                let b = to_f64(image.get(nx, ny));
                let d2: f64 = (0..3).map(|c| (a[c] - b[c]).powi(2)).sum();
                pairs.push((y * w + x, ny * w + nx, d2, dist));
            }
        }
    }
    let mean = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64
    };
    let beta = if mean > 0.0 { 1.0 / (2.0 * mean) } else { 0.0 };
    pairs
        .into_iter()
        .map(|(a, b, d2, dist)| (a, b, gamma / dist * (-beta * d2).exp()))
        .collect()
}

/// Incremental GrabCut state: trimap, current labeling and color models.
/// Rounds can be run in several calls; results are deterministic in the
/// seed and the sequence of calls.
#[derive(Debug, Clone)]
pub struct GrabcutSession {
    image: RgbImage,
    colors: Vec<[f64; 3]>,
    trimap: Trimap,
    params: GrabcutParams,
    seed: u64,
    edges: Vec<(usize, usize, f64)>,
    hard_cap: f64,
    alpha: Vec<bool>,
    models: Option<(ColorGmm, ColorGmm)>,
    mask: Option<Mask>,
    energy_history: Vec<f64>,
}

impl GrabcutSession {
    pub fn new(
        image: RgbImage,
        bbox: Rect,
        params: GrabcutParams,
        seed: u64,
    ) -> Result<Self, GrabcutError> {
        params.validate()?;
        let trimap = Trimap::from_bbox(image.width(), image.height(), bbox)?;
        let edges = smoothness_edges(&image, params.gamma);
        let mut incident = vec![0.0f64; image.pixels().len()];
        for &(a, b, c) in &edges {
            incident[a] += c;
            incident[b] += c;
        }
        let hard_cap = 1.0 + incident.iter().fold(0.0f64, |m, &v| m.max(v));
        let colors = image.pixels().iter().map(|&p| to_f64(p)).collect();
        let alpha = trimap.labels().iter().map(|l| l.is_foreground()).collect();
        Ok(Self {
            image,
            colors,
            trimap,
            params,
            seed,
            edges,
            hard_cap,
            alpha,
            models: None,
            mask: None,
            energy_history: Vec::new(),
        })
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn trimap(&self) -> &Trimap {
        &self.trimap
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Latest mask, once at least one round has run.
    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    /// Total energy after each completed round.
    pub fn energy_history(&self) -> &[f64] {
        &self.energy_history
    }

    pub fn add_strokes(&mut self, strokes: &[Stroke]) -> Result<(), GrabcutError> {
        self.trimap.apply_strokes(strokes)?;
        self.enforce_hard_labels();
        Ok(())
    }

    fn enforce_hard_labels(&mut self) {
        for (a, l) in self.alpha.iter_mut().zip(self.trimap.labels()) {
            match l {
                TrimapLabel::DefiniteForeground => *a = true,
                TrimapLabel::DefiniteBackground => *a = false,
                _ => {}
            }
        }
    }

    /// Runs up to `rounds` assign/learn/cut rounds, stopping early once a
    /// round changes fewer than `convergence_fraction` of the pixels.
    pub fn iterate(&mut self, rounds: usize) -> Result<IterateSummary, GrabcutError> {
        let n = self.alpha.len();
        let mut summary = IterateSummary {
            rounds_run: 0,
            converged: false,
            foreground: self.alpha.iter().filter(|&&a| a).count(),
        };
        for _ in 0..rounds {
            let changed = self.round()?;
            summary.rounds_run += 1;
            if (changed as f64) < self.params.convergence_fraction * n as f64 {
                summary.converged = true;
                break;
            }
        }
        summary.foreground = self.alpha.iter().filter(|&&a| a).count();
        Ok(summary)
    }

    fn region(&self, fg: bool) -> Vec<[f64; 3]> {
        self.colors
            .iter()
            .zip(&self.alpha)
            .filter(|(_, &a)| a == fg)
            .map(|(c, _)| *c)
            .collect()
    }

    fn initial_model(&self, fg: bool, seed: u64) -> Result<ColorGmm, GrabcutError> {
        let pixels: Vec<_> = self
            .image
            .pixels()
            .iter()
            .zip(&self.alpha)
            .filter(|(_, &a)| a == fg)
            .map(|(p, _)| *p)
            .collect();
        fit_gmm(&pixels, self.params.components.min(pixels.len()).max(1), seed)
    }

    /// Reassigns each region pixel to its cheapest component and refits.
    /// A region with no pixels keeps its previous model.
    fn relearn(&self, old: &ColorGmm, fg: bool) -> Result<ColorGmm, GrabcutError> {
        let pixels = self.region(fg);
        if pixels.is_empty() {
            return Ok(old.clone());
        }
        let assignment: Vec<usize> = pixels.iter().map(|&x| old.assign(x).0).collect();
        learn_gmm(&pixels, &assignment, old.components().len())
    }

    fn energy(&self, alpha: &[bool], d_fg: &[f64], d_bg: &[f64]) -> f64 {
        let data: f64 = alpha
            .iter()
            .enumerate()
            .map(|(i, &a)| if a { d_fg[i] } else { d_bg[i] })
            .sum();
        let smooth: f64 = self
            .edges
            .iter()
            .filter(|&&(a, b, _)| alpha[a] != alpha[b])
            .map(|e| e.2)
            .sum();
        data + smooth
    }

    /// One round; returns the number of pixels whose label flipped.
    fn round(&mut self) -> Result<usize, GrabcutError> {
        self.enforce_hard_labels();
        let (fg, bg) = match &self.models {
            None => (
                self.initial_model(true, self.seed)?,
                self.initial_model(false, self.seed.wrapping_add(1))?,
            ),
            Some((fg, bg)) => (self.relearn(fg, true)?, self.relearn(bg, false)?),
        };
        let d_fg: Vec<f64> = self.colors.iter().map(|&x| fg.cost(x)).collect();
        let d_bg: Vec<f64> = self.colors.iter().map(|&x| bg.cost(x)).collect();

        let n = self.colors.len();
        let mut g = PixelGraph::new(n);
        for (i, label) in self.trimap.labels().iter().enumerate() {
            let (src, snk) = match label {
                TrimapLabel::DefiniteForeground => (self.hard_cap, 0.0),
                TrimapLabel::DefiniteBackground => (0.0, self.hard_cap),
                _ => {
                    let m = d_fg[i].min(d_bg[i]);
                    (d_bg[i] - m, d_fg[i] - m)
                }
            };
            g.source_cap[i] = src;
            g.sink_cap[i] = snk;
        }
        g.edges.clone_from(&self.edges);
        let cut = max_flow_min_cut(&g)?;

        let mut candidate = cut.source_side;
        for (a, l) in candidate.iter_mut().zip(self.trimap.labels()) {
            if l.is_definite() {
                *a = l.is_foreground();
            }
        }
        let previous = self.energy(&self.alpha, &d_fg, &d_bg);
        let mut energy = self.energy(&candidate, &d_fg, &d_bg);
        // the cut is optimal up to flow tolerance; never accept a worse labeling
        if energy > previous {
            candidate.clone_from(&self.alpha);
            energy = previous;
        }
        let changed = candidate
            .iter()
            .zip(&self.alpha)
            .filter(|(a, b)| a != b)
            .count();
        self.alpha = candidate;
        self.models = Some((fg, bg));
        self.energy_history.push(energy);
        self.mask = Some(Mask::new(
            self.image.width(),
            self.image.height(),
            self.alpha.clone(),
        )?);
        Ok(changed)
    }
}

/// Segments `image` from a bounding box and optional strokes with default
/// parameters.
pub fn grabcut_segment(
    image: &RgbImage,
    bbox: Rect,
    strokes: &[Stroke],
    iterations: usize,
    seed: u64,
) -> Result<Mask, GrabcutError> {
    grabcut_segment_with(image, bbox, strokes, iterations, seed, &GrabcutParams::default())
}

pub fn grabcut_segment_with(
    image: &RgbImage,
    bbox: Rect,
    strokes: &[Stroke],
    iterations: usize,
    seed: u64,
    params: &GrabcutParams,
) -> Result<Mask, GrabcutError> {
    if iterations == 0 {
        return Err(GrabcutError::Params("iterations must be at least 1".into()));
    }
    let mut session = GrabcutSession::new(image.clone(), bbox, params.clone(), seed)?;
    session.add_strokes(strokes)?;
    session.iterate(iterations)?;
    Ok(session.mask().expect("at least one round ran").clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grabcut::StrokeKind;
    use crate::synthetic::two_color_image;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn red_block() -> (RgbImage, Mask) {
        let mut img = RgbImage::filled(64, 64, [0, 0, 255]).unwrap();
        let mut truth = vec![false; 64 * 64];
        for y in 22..42 {
            for x in 22..42 {
                img.put(x, y, [255, 0, 0]);
                truth[y * 64 + x] = true;
            }
        }
        (img, Mask::new(64, 64, truth).unwrap())
    }

    #[test]
    fn red_block_is_recovered_exactly() {
        let (img, truth) = red_block();
        let mask = grabcut_segment(&img, Rect::new(20, 20, 24, 24), &[], 5, 0).unwrap();
        assert_eq!(mask, truth);
    }

    #[test]
    fn recovered_block_matches_per_pixel_likelihood() {
        // with no smoothness the cut is the per-pixel cheaper label
        let (img, _) = red_block();
        let params = GrabcutParams {
            gamma: 0.0,
            ..GrabcutParams::default()
        };
        let mut s = GrabcutSession::new(img, Rect::new(20, 20, 24, 24), params, 3).unwrap();
        s.iterate(1).unwrap();
        let (fg, bg) = s.models.clone().unwrap();
        let mask = s.mask().unwrap().clone();
        for (i, &c) in s.colors.iter().enumerate() {
            if s.trimap.labels()[i].is_definite() {
                continue;
            }
            assert_eq!(mask.as_slice()[i], fg.cost(c) < bg.cost(c), "pixel {i}");
        }
    }

    #[test]
    fn background_stroke_is_respected() {
        let (img, _) = red_block();
        let stroke = Stroke {
            kind: StrokeKind::Bg,
            points: vec![[25, 25], [35, 30]],
        };
        let mask = grabcut_segment(&img, Rect::new(20, 20, 24, 24), std::slice::from_ref(&stroke), 5, 0).unwrap();
        for (x, y) in stroke.rasterize() {
            assert!(!mask.get(x as usize, y as usize));
        }
    }

    #[test]
    fn foreground_stroke_outside_box_is_respected() {
        let (img, _) = red_block();
        let stroke = Stroke {
            kind: StrokeKind::Fg,
            points: vec![[2, 2], [2, 6]],
        };
        let mask = grabcut_segment(&img, Rect::new(20, 20, 24, 24), std::slice::from_ref(&stroke), 5, 1).unwrap();
        for (x, y) in stroke.rasterize() {
            assert!(mask.get(x as usize, y as usize));
        }
    }

    #[test]
    fn precondition_errors() {
        let (img, _) = red_block();
        assert_eq!(
            grabcut_segment(&img, Rect::new(0, 0, 64, 64), &[], 5, 0),
            Err(GrabcutError::NoBackground)
        );
        assert_eq!(
            grabcut_segment(&img, Rect::new(3, 3, 0, 10), &[], 5, 0),
            Err(GrabcutError::EmptyBbox)
        );
        assert!(grabcut_segment(&img, Rect::new(60, 0, 10, 10), &[], 5, 0).is_err());
        assert!(grabcut_segment(&img, Rect::new(1, 1, 10, 10), &[], 0, 0).is_err());
    }

    fn noisy_scene(seed: u64) -> (RgbImage, Rect) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (48, 40);
        let mut px = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let inside = (x as i32 - 24).pow(2) + (y as i32 - 20).pow(2) < 100;
                let base: [i32; 3] = if inside { [180, 120, 60] } else { [90, 110, 130] };
                px.push(base.map(|c| (c + rng.random_range(-40..=40)).clamp(0, 255) as u8));
            }
        }
        (RgbImage::new(w, h, px).unwrap(), Rect::new(10, 6, 28, 28))
    }

    #[test]
    fn energy_never_increases() {
        for seed in 0..6 {
            let (img, bbox) = noisy_scene(seed);
            let params = GrabcutParams {
                convergence_fraction: 0.0,
                ..GrabcutParams::default()
            };
            let mut s = GrabcutSession::new(img, bbox, params, seed).unwrap();
            s.iterate(4).unwrap();
            s.iterate(4).unwrap();
            let e = s.energy_history();
            assert_eq!(e.len(), 8);
            for w in e.windows(2) {
                assert!(w[1] <= w[0], "seed {seed}: {e:?}");
            }
        }
    }

    #[test]
    fn deterministic_in_seed_and_split_calls() {
        let (img, bbox) = noisy_scene(2);
        let run = |splits: &[usize]| {
            let mut s = GrabcutSession::new(img.clone(), bbox, GrabcutParams::default(), 9).unwrap();
            for &r in splits {
                s.iterate(r).unwrap();
            }
            (s.mask().cloned(), s.energy_history().to_vec())
        };
        let a = run(&[3]);
        assert_eq!(a, run(&[3]));
        let params = GrabcutParams {
            convergence_fraction: 0.0,
            ..GrabcutParams::default()
        };
        let mut whole = GrabcutSession::new(img.clone(), bbox, params.clone(), 9).unwrap();
        whole.iterate(4).unwrap();
        let mut split = GrabcutSession::new(img, bbox, params, 9).unwrap();
        split.iterate(1).unwrap();
        split.iterate(0).unwrap();
        split.iterate(3).unwrap();
        assert_eq!(whole.mask(), split.mask());
    }

    #[test]
    fn synthetic_two_color_images() {
        for seed in 0..5 {
            let scene = two_color_image(seed);
            let mask = grabcut_segment(&scene.image, scene.bbox, &[], 5, seed).unwrap();
            assert!(mask.iou(&scene.truth) >= 0.99, "seed {seed}");
        }
    }
}
