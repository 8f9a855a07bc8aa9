use std::f64::consts::PI;

use crate::imaging::{GrayImage, Grid, Mask, Pixel};
use crate::numkit::SeededRng;
use crate::synthgen::{ClassSpec, SyntheticRecipe};

const STROMA_LEVEL: f64 = 205.0;
const EPITHELIUM_LEVEL: f64 = 175.0;
const PIXEL_NOISE: f64 = 6.0;
const STROMAL_NUCLEI_DENSITY: f64 = 0.12;
const RING_CELL_SPACING: f64 = 9.0;
const RING_OFFSET: f64 = 12.0;
const HARMONICS: std::ops::RangeInclusive<usize> = 4..=12;
const MIN_FOREGROUND: f64 = 0.05;
const MAX_FOREGROUND: f64 = 0.6;

#[derive(Clone, Debug)]
pub struct RenderedSample {
    pub image: GrayImage,
    pub mask: Mask,
    pub centroids: Vec<Pixel>,
}

/// Star-shaped region: a rotated ellipse plus a band-limited radial perturbation.
struct Region {
    center: (f64, f64),
    semi_major: f64,
    semi_minor: f64,
    rotation: f64,
    harmonics: Vec<(f64, f64, f64)>,
}

impl Region {
    fn random(rng: &mut SeededRng, size: f64, count: usize, roughness: f64) -> Self {
        let shrink = (count as f64).powf(0.35);
        let radius = rng.uniform_range(0.13, 0.22) * size / shrink;
        let ecc = rng.uniform_range(0.0, 0.3);
        let margin = radius * 1.35 + roughness;
        let center = (
            rng.uniform_range(margin, size - margin),
            rng.uniform_range(margin, size - margin),
        );
        let mut harmonics: Vec<(f64, f64, f64)> = HARMONICS
            .map(|h| (h as f64, rng.uniform_range(0.5, 1.0), rng.uniform_range(0.0, 2.0 * PI)))
            .collect();
        // normalize the peak deviation to `roughness` (jittered per region)
        let peak = (0..720)
            .map(|i| harmonic_sum(&harmonics, i as f64 * PI / 360.0).abs())
            .fold(0.0, f64::max);
        let amplitude = roughness * rng.uniform_range(0.75, 1.25);
        for h in &mut harmonics {
            h.1 *= if peak > 0.0 { amplitude / peak } else { 0.0 };
        }
        Self {
            center,
            semi_major: radius * (1.0 + ecc),
            semi_minor: radius / (1.0 + ecc),
            rotation: rng.uniform_range(0.0, PI),
            harmonics,
        }
    }

    fn boundary_radius(&self, theta: f64) -> f64 {
        let phi = theta - self.rotation;
        let (a, b) = (self.semi_major, self.semi_minor);
        let ellipse = a * b / ((b * phi.cos()).powi(2) + (a * phi.sin()).powi(2)).sqrt();
        ellipse + harmonic_sum(&self.harmonics, theta)
    }

    fn polar(&self, r: f64, c: f64) -> (f64, f64) {
        let (dr, dc) = (r - self.center.0, c - self.center.1);
        ((dr * dr + dc * dc).sqrt(), dr.atan2(dc))
    }

    fn contains(&self, r: f64, c: f64) -> bool {
        let (dist, theta) = self.polar(r, c);
        dist <= self.boundary_radius(theta)
    }

    fn outer_extent(&self) -> f64 {
        self.semi_major + self.harmonics.iter().map(|h| h.1).sum::<f64>()
    }
}

fn harmonic_sum(harmonics: &[(f64, f64, f64)], theta: f64) -> f64 {
    harmonics
        .iter()
        .map(|(h, amp, phase)| amp * (h * theta + phase).cos())
        .sum()
}

fn place_regions(rng: &mut SeededRng, class: &ClassSpec, size: usize) -> (Vec<Region>, Mask) {
    let s = size as f64;
    let mut best: Option<(Vec<Region>, Mask)> = None;
    for _attempt in 0..64 {
        let mut regions: Vec<Region> = Vec::new();
        let mut tries = 0;
        while regions.len() < class.region_count && tries < 200 {
            tries += 1;
            let cand = Region::random(rng, s, class.region_count, class.boundary_roughness);
            let clear = regions.iter().all(|r| {
                let d = ((r.center.0 - cand.center.0).powi(2) + (r.center.1 - cand.center.1).powi(2)).sqrt();
                d > r.outer_extent() + cand.outer_extent() + 24.0
            });
            if clear {
                regions.push(cand);
            }
        }
        let mask = rasterize(&regions, size);
        let fraction = mask.count() as f64 / (size * size) as f64;
        let complete = regions.len() == class.region_count;
        if complete && (MIN_FOREGROUND..=MAX_FOREGROUND).contains(&fraction) {
            return (regions, mask);
        }
        if best.is_none() && mask.count() > 0 {
            best = Some((regions, mask));
        }
    }
    best.expect("region placement produced no foreground")
}

fn rasterize(regions: &[Region], size: usize) -> Mask {
    let mut mask = Grid::filled(size, size, false);
    for region in regions {
        let ext = region.outer_extent() + 1.0;
        let r0 = (region.center.0 - ext).floor().max(0.0) as usize;
        let r1 = ((region.center.0 + ext).ceil() as usize).min(size - 1);
        let c0 = (region.center.1 - ext).floor().max(0.0) as usize;
        let c1 = ((region.center.1 + ext).ceil() as usize).min(size - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                if region.contains(r as f64, c as f64) {
                    mask.set(r, c, true);
                }
            }
        }
    }
    mask
}

/// Darkens an elliptical nucleus with a Gaussian intensity profile.
fn stamp_nucleus(
    canvas: &mut [f64],
    size: usize,
    center: (f64, f64),
    axes: (f64, f64),
    angle: f64,
    depth: f64,
) {
    let reach = axes.0.max(axes.1) * 1.6;
    let (sin, cos) = angle.sin_cos();
    let r0 = (center.0 - reach).floor().max(0.0) as usize;
    let r1 = ((center.0 + reach).ceil().max(0.0) as usize).min(size - 1);
    let c0 = (center.1 - reach).floor().max(0.0) as usize;
    let c1 = ((center.1 + reach).ceil().max(0.0) as usize).min(size - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let (dr, dc) = (r as f64 - center.0, c as f64 - center.1);
            let u = (dc * cos + dr * sin) / axes.0;
            let v = (-dc * sin + dr * cos) / axes.1;
            let q2 = u * u + v * v;
            if q2 <= 2.56 {
                canvas[r * size + c] *= 1.0 - depth * (-1.5 * q2).exp();
            }
        }
    }
}

/// Renders sample `index` of class `label`; a pure function of the recipe.
pub fn render_sample(recipe: &SyntheticRecipe, label: usize, index: usize) -> RenderedSample {
    let class = &recipe.classes[label];
    let size = recipe.image_size;
    let s = size as f64;
    let mut rng = SeededRng::derived(recipe.seed, ((label as u64) << 32) | index as u64);

    let (regions, mask) = place_regions(&mut rng, class, size);

    let mut canvas: Vec<f64> = mask
        .as_slice()
        .iter()
        .map(|inside| if *inside { EPITHELIUM_LEVEL } else { STROMA_LEVEL })
        .collect();

    // sparse stromal nuclei outside the epithelium, not listed as centroids
    let stromal = (STROMAL_NUCLEI_DENSITY * (s * s - mask.count() as f64) / 1000.0).round() as usize;
    for _ in 0..stromal {
        let (r, c) = (rng.uniform_range(0.0, s), rng.uniform_range(0.0, s));
        if *mask.get(r as usize, c as usize) {
            continue;
        }
        let axes = (rng.uniform_range(3.0, 5.0), rng.uniform_range(1.5, 2.5));
        let angle = rng.uniform_range(0.0, PI);
        stamp_nucleus(&mut canvas, size, (r, c), axes, angle, 0.45);
    }

    if class.border_ring {
        for region in &regions {
            let circumference = 2.0 * PI * (region.semi_major + region.semi_minor) / 2.0;
            let n = (circumference / RING_CELL_SPACING).round().max(8.0) as usize;
            let phase = rng.uniform_range(0.0, 2.0 * PI);
            for k in 0..n {
                let theta = phase + 2.0 * PI * k as f64 / n as f64;
                let rad = region.boundary_radius(theta) + RING_OFFSET + rng.normal(0.0, 0.5);
                let center = (
                    region.center.0 + rad * theta.sin(),
                    region.center.1 + rad * theta.cos(),
                );
                let axes = (rng.uniform_range(3.5, 4.5), rng.uniform_range(2.0, 2.6));
                // long axis tangential to the boundary
                stamp_nucleus(&mut canvas, size, center, axes, theta + PI / 2.0, 0.7);
            }
        }
    }

    let area = mask.count() as f64;
    let target = (class.cell_density * area / 1000.0).round() as usize;
    let mut centroids = Vec::with_capacity(target);
    let mut guard = 0;
    while centroids.len() < target && guard < target * 50 + 100 {
        guard += 1;
        let (r, c) = (rng.uniform_range(0.0, s), rng.uniform_range(0.0, s));
        let pixel = (r as usize, c as usize);
        if !*mask.get(pixel.0, pixel.1) {
            continue;
        }
        let axes = (rng.uniform_range(3.5, 5.0), rng.uniform_range(2.5, 4.0));
        let angle = rng.uniform_range(0.0, PI);
        stamp_nucleus(
            &mut canvas,
            size,
            (pixel.0 as f64 + 0.5, pixel.1 as f64 + 0.5),
            axes,
            angle,
            0.6,
        );
        centroids.push(pixel);
    }

    let data: Vec<u8> = canvas
        .iter()
        .map(|v| (v + rng.normal(0.0, PIXEL_NOISE)).round().clamp(0.0, 255.0) as u8)
        .collect();
    RenderedSample {
        image: Grid::from_vec(size, size, data).expect("canvas matches size"),
        mask,
        centroids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_recipe() -> SyntheticRecipe {
        SyntheticRecipe {
            image_size: 256,
            samples_per_class: 4,
            ..SyntheticRecipe::default()
        }
    }

    #[test]
    fn centroids_lie_inside_the_mask() {
        let recipe = small_recipe();
        for label in 0..recipe.classes.len() {
            for idx in 0..3 {
                let s = render_sample(&recipe, label, idx);
                assert!(!s.centroids.is_empty());
                for (r, c) in &s.centroids {
                    assert!(*s.mask.get(*r, *c));
                }
            }
        }
    }

    #[test]
    fn foreground_fraction_within_bounds() {
        let recipe = SyntheticRecipe::default();
        for label in 0..recipe.classes.len() {
            for idx in 0..6 {
                let s = render_sample(&recipe, label, idx);
                let f = s.mask.count() as f64 / (512.0 * 512.0);
                assert!((MIN_FOREGROUND..=MAX_FOREGROUND).contains(&f), "class {label} #{idx}: {f}");
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let recipe = small_recipe();
        let a = render_sample(&recipe, 2, 1);
        let b = render_sample(&recipe, 2, 1);
        assert_eq!(a.image, b.image);
        assert_eq!(a.centroids, b.centroids);
        assert_ne!(a.image, render_sample(&recipe, 2, 2).image);
    }

    #[test]
    fn region_count_is_realized() {
        use crate::imaging::{connected_components, Connectivity};
        let recipe = SyntheticRecipe::default();
        for label in 0..recipe.classes.len() {
            let s = render_sample(&recipe, label, 0);
            let n = connected_components(&s.mask, Connectivity::Eight).count;
            assert_eq!(n, recipe.classes[label].region_count, "class {label}");
        }
    }
}
