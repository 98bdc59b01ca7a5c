//! Product-Gaussian kernel density estimates on a binned grid, with exact
//! evaluation where the grid is too coarse to decide a comparison.

use std::f64::consts::PI;

/// Grid points per dimension.
fn grid_size(k: usize) -> usize {
    match k {
        1 => 4096,
        2 => 512,
        3 => 64,
        _ => 32,
    }
}

/// Kernel support in bandwidths.
const CUTOFF: f64 = 6.0;

/// Sample-size floor under which densities are evaluated exactly.
const EXACT_BELOW: usize = 3000;

/// Relative band around the threshold density within which grid values are
/// replaced by exact sums.
const REFINE_BAND: f64 = 0.03;

pub(crate) struct Kde<'a> {
    /// Rows of the sample.
    points: &'a [Vec<f64>],
    h: Vec<f64>,
    /// Sample sorted on the first coordinate, for windowed exact sums.
    sorted: Vec<&'a [f64]>,
}

impl<'a> Kde<'a> {
    pub fn new(points: &'a [Vec<f64>], h: Vec<f64>) -> Kde<'a> {
        let mut sorted: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Kde { points, h, sorted }
    }

    fn norm(&self) -> f64 {
        let k = self.h.len() as f64;
        1.0 / (self.points.len() as f64 * (2.0 * PI).powf(k / 2.0) * self.h.iter().product::<f64>())
    }

    /// Exact density at `x`, summing kernels within the cutoff.
    pub fn exact(&self, x: &[f64]) -> f64 {
        let w = CUTOFF * self.h[0];
        let lo = self.sorted.partition_point(|p| p[0] < x[0] - w);
        let hi = self.sorted.partition_point(|p| p[0] <= x[0] + w);
        let mut s = 0.0;
        for p in &self.sorted[lo..hi] {
            let mut q = 0.0;
            for j in 0..x.len() {
                let z = (x[j] - p[j]) / self.h[j];
                q += z * z;
            }
            if q < CUTOFF * CUTOFF {
                s += (-0.5 * q).exp();
            }
        }
        s * self.norm()
    }

    /// Densities at every sample point, and at `origin`. Points whose grid
    /// density falls within a narrow band of the origin's are recomputed
    /// exactly so that comparisons against the origin are reliable.
    pub fn at_points(&self, origin: &[f64]) -> (Vec<f64>, f64) {
        let f0 = self.exact(origin);
        let n = self.points.len();
        if n <= EXACT_BELOW {
            return (self.points.iter().map(|p| self.exact(p)).collect(), f0);
        }
        let grid = Grid::build(self, origin);
        let dens = self
            .points
            .iter()
            .map(|p| {
                let g = grid.interpolate(p);
                if (g - f0).abs() <= REFINE_BAND * f0 {
                    self.exact(p)
                } else {
                    g
                }
            })
            .collect();
        (dens, f0)
    }

    /// Density on an evenly spaced grid over `[lo, hi]` (univariate only).
    pub fn curve(&self, lo: f64, hi: f64, m: usize) -> Vec<(f64, f64)> {
        (0..m)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (m - 1).max(1) as f64;
                (x, self.exact(&[x]))
            })
            .collect()
    }
}

struct Grid {
    lo: Vec<f64>,
    step: Vec<f64>,
    size: usize,
    values: Vec<f64>,
}

impl Grid {
    fn build(kde: &Kde, origin: &[f64]) -> Grid {
        let k = kde.h.len();
        let size = grid_size(k);
        let mut lo = vec![f64::INFINITY; k];
        let mut hi = vec![f64::NEG_INFINITY; k];
        for p in kde.points.iter().map(|p| p.as_slice()).chain([origin]) {
            for j in 0..k {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        for j in 0..k {
            lo[j] -= CUTOFF * kde.h[j];
            hi[j] += CUTOFF * kde.h[j];
        }
        let step: Vec<f64> = (0..k).map(|j| (hi[j] - lo[j]) / (size - 1) as f64).collect();
        let total = size.pow(k as u32);
        let mut values = vec![0.0; total];
        // linear binning
        for p in kde.points {
            let mut base = 0;
            let mut fracs = Vec::with_capacity(k);
            for j in (0..k).rev() {
                let u = ((p[j] - lo[j]) / step[j]).clamp(0.0, (size - 1) as f64 - 1e-9);
                let i = u.floor() as usize;
                base = base * size + i;
                fracs.push(u - i as f64);
            }
            fracs.reverse();
            for corner in 0..(1usize << k) {
                let mut w = 1.0;
                let mut idx = base;
                let mut stride = 1;
                for (j, f) in fracs.iter().enumerate() {
                    if corner >> j & 1 == 1 {
                        w *= f;
                        idx += stride;
                    } else {
                        w *= 1.0 - f;
                    }
                    stride *= size;
                }
                values[idx] += w;
            }
        }
        // separable convolution with the kernel
        let mut stride = 1;
        for j in 0..k {
            let half = (CUTOFF * kde.h[j] / step[j]).ceil() as isize;
            let taps: Vec<f64> =
                (-half..=half).map(|m| (-0.5 * (m as f64 * step[j] / kde.h[j]).powi(2)).exp()).collect();
            let mut out = vec![0.0; total];
            for (idx, slot) in out.iter_mut().enumerate() {
                let pos = (idx / stride % size) as isize;
                let mut s = 0.0;
                let from = (-half).max(-pos);
                let to = half.min(size as isize - 1 - pos);
                for m in from..=to {
                    let v = values[(idx as isize + m * stride as isize) as usize];
                    if v != 0.0 {
                        s += v * taps[(m + half) as usize];
                    }
                }
                *slot = s;
            }
            values = out;
            stride *= size;
        }
        let norm = kde.norm();
        for v in &mut values {
            *v *= norm;
        }
        Grid { lo, step, size, values }
    }

    fn interpolate(&self, x: &[f64]) -> f64 {
        let k = self.lo.len();
        let mut base = 0;
        let mut fracs = Vec::with_capacity(k);
        for j in (0..k).rev() {
            let u = ((x[j] - self.lo[j]) / self.step[j]).clamp(0.0, (self.size - 1) as f64 - 1e-9);
            let i = u.floor() as usize;
            base = base * self.size + i;
            fracs.push(u - i as f64);
        }
        fracs.reverse();
        let mut s = 0.0;
        for corner in 0..(1usize << k) {
            let mut w = 1.0;
            let mut idx = base;
            let mut stride = 1;
            for (j, f) in fracs.iter().enumerate() {
                if corner >> j & 1 == 1 {
                    w *= f;
                    idx += stride;
                } else {
                    w *= 1.0 - f;
                }
                stride *= self.size;
            }
            s += w * self.values[idx];
        }
        s
    }
}
