use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{connected_components, Connectivity, Grid, Mask, Pixel};

/// Moore neighborhood in clockwise order (rows grow downwards), starting west.
const MOORE: [(i64, i64); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

/// Closed outer boundary of one component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub component_id: usize,
    pub points: Vec<Pixel>,
    /// Arc length of the closed loop in pixels; diagonal steps count √2.
    pub perimeter: f64,
}

impl Contour {
    /// Cumulative arc length at every point; the loop closes at `perimeter`.
    pub fn cumulative_arc(&self) -> Vec<f64> {
        let mut cum = Vec::with_capacity(self.points.len());
        let mut acc = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                acc += step_length(self.points[i - 1], *p);
            }
            cum.push(acc);
        }
        cum
    }
}

fn step_length(a: Pixel, b: Pixel) -> f64 {
    let dr = a.0.abs_diff(b.0);
    let dc = a.1.abs_diff(b.1);
    match (dr, dc) {
        (0, 0) => 0.0,
        (1, 1) => std::f64::consts::SQRT_2,
        _ => ((dr * dr + dc * dc) as f64).sqrt(),
    }
}

fn direction_index(dr: i64, dc: i64) -> usize {
    MOORE
        .iter()
        .position(|&d| d == (dr, dc))
        .expect("consecutive Moore neighbors are adjacent")
}

/// Traces the outer contour of the single component in `mask`.
pub fn trace_contour(mask: &Mask) -> Result<Contour> {
    let labeling = connected_components(mask, Connectivity::Eight);
    match labeling.count {
        0 => Err(Error::Invalid("cannot trace the contour of an empty component".into())),
        1 => trace_labeled_contour(&labeling.labels, 1),
        n => Err(Error::Invalid(format!(
            "expected exactly one component, found {n}"
        ))),
    }
}

/// Moore-neighbor tracing of component `label`, clockwise from its top-most,
/// then left-most pixel. Holes are ignored.
pub fn trace_labeled_contour(labels: &Grid<u32>, label: u32) -> Result<Contour> {
    let start = labels
        .as_slice()
        .iter()
        .position(|l| *l == label)
        .map(|i| (i / labels.cols(), i % labels.cols()))
        .ok_or_else(|| Error::Invalid(format!("component {label} is empty")))?;
    let inside = |r: i64, c: i64| labels.get_signed(r, c) == Some(&label);

    let mut points = vec![start];
    let mut p = start;
    // The pixel west of the start is background by the choice of start.
    let mut back = 0usize;
    let limit = 4 * labels.as_slice().len() + 8;
    loop {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let (r, c) = (p.0 as i64 + MOORE[d].0, p.1 as i64 + MOORE[d].1);
            if inside(r, c) {
                next = Some((d, (r as usize, c as usize)));
                break;
            }
        }
        let Some((d, q)) = next else {
            // isolated pixel
            return Ok(Contour {
                component_id: label as usize,
                points,
                perimeter: 0.0,
            });
        };
        if p == start && points.len() > 1 && q == points[1] {
            break;
        }
        let prev = MOORE[(d + 7) % 8];
        back = direction_index(prev.0 - MOORE[d].0, prev.1 - MOORE[d].1);
        points.push(q);
        p = q;
        if points.len() > limit {
            return Err(Error::Numerical("contour tracing did not close".into()));
        }
    }
    // the loop re-entered the start pixel
    points.pop();
    let mut perimeter: f64 = points.windows(2).map(|w| step_length(w[0], w[1])).sum();
    perimeter += step_length(*points.last().expect("non-empty"), points[0]);
    Ok(Contour {
        component_id: label as usize,
        points,
        perimeter,
    })
}

/// Equal arc-length sampling of a contour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSampler {
    pub spacing: f64,
    pub min_points: usize,
    pub max_points: usize,
}

impl Default for ContourSampler {
    fn default() -> Self {
        Self {
            spacing: 16.0,
            min_points: 8,
            max_points: 64,
        }
    }
}

const PHASE_CANDIDATES: usize = 32;

impl ContourSampler {
    pub fn point_count(&self, perimeter: f64) -> usize {
        let raw = (perimeter / self.spacing).floor() as usize;
        raw.clamp(self.min_points, self.max_points.max(self.min_points))
    }

    /// Indices into `contour.points` of the sampled points, in contour order.
    ///
    /// Targets sit at `φ + j·P/count`. Each target snaps to the contour point
    /// nearest in arc length; among a fixed set of phases `φ` the one with the
    /// most even gaps wins, ties going to the half-step phase.
    pub fn sample_indices(&self, contour: &Contour) -> Vec<usize> {
        let count = self.point_count(contour.perimeter);
        if count == 0 || contour.points.is_empty() {
            return Vec::new();
        }
        let total = contour.perimeter;
        if total <= 0.0 {
            return vec![0; count];
        }
        let mut cum = contour.cumulative_arc();
        cum.push(total);
        let step = total / count as f64;

        let mut best: Option<(f64, f64, Vec<usize>)> = None;
        for k in 0..PHASE_CANDIDATES {
            let frac = k as f64 / PHASE_CANDIDATES as f64;
            let picks: Vec<usize> = (0..count)
                .map(|j| nearest_vertex(&cum, (frac + j as f64) * step))
                .collect();
            let spread = gap_spread(&cum, &picks, total);
            let off_center = (frac - 0.5).abs();
            let better = match &best {
                None => true,
                Some((s, o, _)) => spread < *s - 1e-12 || (spread <= *s + 1e-12 && off_center < *o),
            };
            if better {
                best = Some((spread, off_center, picks));
            }
        }
        let n = contour.points.len();
        best.expect("at least one phase")
            .2
            .into_iter()
            .map(|i| i % n)
            .collect()
    }

    pub fn sample(&self, contour: &Contour) -> Vec<Pixel> {
        self.sample_indices(contour)
            .into_iter()
            .map(|i| contour.points[i])
            .collect()
    }
}

/// Index into `cum` (which ends with the closing arc length) nearest to `t`.
fn nearest_vertex(cum: &[f64], t: f64) -> usize {
    let hi = cum.partition_point(|&c| c < t).min(cum.len() - 1);
    if hi == 0 {
        return 0;
    }
    if t - cum[hi - 1] <= cum[hi] - t {
        hi - 1
    } else {
        hi
    }
}

fn gap_spread(cum: &[f64], picks: &[usize], total: f64) -> f64 {
    if picks.len() < 2 {
        return 0.0;
    }
    let arcs: Vec<f64> = picks.iter().map(|&i| cum[i]).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in 0..arcs.len() {
        let gap = if j + 1 < arcs.len() {
            arcs[j + 1] - arcs[j]
        } else {
            total - arcs[j] + arcs[0]
        };
        lo = lo.min(gap);
        hi = hi.max(gap);
    }
    hi - lo
}

/// Samples with the default point bounds (8..=64) at the given spacing.
pub fn sample_contour_uniform(contour: &Contour, spacing: f64) -> Vec<Pixel> {
    ContourSampler {
        spacing,
        ..ContourSampler::default()
    }
    .sample(contour)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled_rect(rows: usize, cols: usize, r0: usize, c0: usize, h: usize, w: usize) -> Mask {
        let mut m = Grid::filled(rows, cols, false);
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                m.set(r, c, true);
            }
        }
        m
    }

    #[test]
    fn single_pixel_contour() {
        let m = filled_rect(5, 5, 2, 3, 1, 1);
        let c = trace_contour(&m).unwrap();
        assert_eq!(c.points, vec![(2, 3)]);
        assert_eq!(c.perimeter, 0.0);
    }

    #[test]
    fn three_by_three_square_clockwise() {
        let m = filled_rect(5, 5, 1, 1, 3, 3);
        let c = trace_contour(&m).unwrap();
        assert_eq!(
            c.points,
            vec![(1, 1), (1, 2), (1, 3), (2, 3), (3, 3), (3, 2), (3, 1), (2, 1)]
        );
        assert_eq!(c.perimeter, 8.0);
    }

    #[test]
    fn square_touching_the_image_border() {
        let m = filled_rect(3, 3, 0, 0, 3, 3);
        let c = trace_contour(&m).unwrap();
        assert_eq!(c.points.len(), 8);
        assert_eq!(c.points[0], (0, 0));
    }

    #[test]
    fn empty_and_multiple_components_are_errors() {
        assert!(trace_contour(&Grid::filled(4, 4, false)).is_err());
        let mut m = filled_rect(6, 6, 0, 0, 2, 2);
        m.set(5, 5, true);
        assert!(trace_contour(&m).is_err());
    }

    #[test]
    fn two_pixel_component_closes() {
        let m = filled_rect(4, 4, 1, 1, 1, 2);
        let c = trace_contour(&m).unwrap();
        assert_eq!(c.points, vec![(1, 1), (1, 2)]);
        assert_eq!(c.perimeter, 2.0);
    }

    #[test]
    fn diagonal_steps_count_root_two() {
        // a plus sign: the four arms are joined diagonally around the centre
        let mut m = Grid::filled(5, 5, false);
        for (r, c) in [(1, 2), (2, 1), (2, 2), (2, 3), (3, 2)] {
            m.set(r, c, true);
        }
        let c = trace_contour(&m).unwrap();
        assert_eq!(c.points, vec![(1, 2), (2, 3), (3, 2), (2, 1)]);
        assert!((c.perimeter - 4.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn square_of_perimeter_40_gives_side_midpoints() {
        let m = filled_rect(15, 15, 2, 2, 11, 11);
        let c = trace_contour(&m).unwrap();
        assert_eq!(c.perimeter, 40.0);
        let pts = sample_contour_uniform(&c, 10.0);
        // 40 / 10 = 4 is clamped up to the default minimum of 8 points
        assert_eq!(pts.len(), 8);
        let sampler = ContourSampler {
            spacing: 10.0,
            min_points: 1,
            max_points: 64,
        };
        let pts = sampler.sample(&c);
        assert_eq!(pts, vec![(2, 7), (7, 12), (12, 7), (7, 2)]);
    }

    #[test]
    fn spacing_beyond_perimeter_gives_min_points() {
        let m = filled_rect(8, 8, 2, 2, 3, 3);
        let c = trace_contour(&m).unwrap();
        let pts = sample_contour_uniform(&c, 100.0);
        assert_eq!(pts.len(), 8);
        assert!(pts.iter().all(|p| c.points.contains(p)));
    }

    #[test]
    fn count_is_clamped_to_max() {
        let m = filled_rect(200, 200, 1, 1, 190, 190);
        let c = trace_contour(&m).unwrap();
        assert_eq!(sample_contour_uniform(&c, 1.0).len(), 64);
    }
}
