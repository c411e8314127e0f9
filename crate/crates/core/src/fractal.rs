//! 3D box-counting fractal dimension with automatic scaling-window selection.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box sizes are `2^k` voxels for `k = 0..=MAX_SCALE_EXPONENT`.
pub const MAX_SCALE_EXPONENT: u32 = 8;
pub const DEFAULT_OFFSETS: usize = 20;
pub const MIN_WINDOW: usize = 3;
/// Decimal places kept when comparing adjusted R² between windows.
pub const R2_DECIMALS: i32 = 4;

const VOXEL_MAGIC: u32 = u32::from_le_bytes(*b"VOXG");
const VOXEL_VERSION: u32 = 1;

/// Binary occupancy grid with unit isotropic voxels, stored x-fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    occupied: Vec<bool>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], occupied: Vec<bool>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be >= 1, got {dims:?}"
            )));
        }
        let len = dims[0] * dims[1] * dims[2];
        if occupied.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: occupied.len(),
            });
        }
        Ok(Self { dims, occupied })
    }

    pub fn from_fn(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> bool) -> Result<Self> {
        let mut occupied = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    occupied.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, occupied)
    }

    /// Fully occupied `n³` cube.
    pub fn cube(n: usize) -> Result<Self> {
        Self::from_fn([n, n, n], |_, _, _| true)
    }

    /// Single occupied `nx × ny × 1` plane.
    pub fn slab(nx: usize, ny: usize) -> Result<Self> {
        Self::from_fn([nx, ny, 1], |_, _, _| true)
    }

    /// Menger sponge of the given level on a `3^level` grid.
    pub fn menger(level: u32) -> Result<Self> {
        let n = 3usize.pow(level);
        Self::from_fn([n, n, n], |mut x, mut y, mut z| {
            for _ in 0..level {
                let centre = [x % 3 == 1, y % 3 == 1, z % 3 == 1].iter().filter(|&&c| c).count();
                if centre >= 2 {
                    return false;
                }
                x /= 3;
                y /= 3;
                z /= 3;
            }
            true
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupied[(z * self.dims[1] + y) * self.dims[0] + x]
    }

    pub fn n_occupied(&self) -> usize {
        self.occupied.iter().filter(|&&v| v).count()
    }

    /// Copy surrounded by empty voxels.
    pub fn padded(&self, before: [usize; 3], after: [usize; 3]) -> Self {
        let dims = [0, 1, 2].map(|a| self.dims[a] + before[a] + after[a]);
        Self::from_fn(dims, |x, y, z| {
            let p = [x, y, z];
            let inside = (0..3).all(|a| p[a] >= before[a] && p[a] < before[a] + self.dims[a]);
            inside && self.get(x - before[0], y - before[1], z - before[2])
        })
        .expect("padded dimensions are positive")
    }

    fn occupied_coords(&self) -> Vec<[u32; 3]> {
        let [nx, ny, _] = self.dims;
        self.occupied
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| [(i % nx) as u32, ((i / nx) % ny) as u32, (i / (nx * ny)) as u32])
            .collect()
    }

    /// Reads the binary raster format: six little-endian `u32` (magic,
    /// version, nx, ny, nz, reserved) followed by one byte per voxel.
    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 24];
        r.read_exact(&mut header)
            .map_err(|e| Error::ModelFormat(format!("voxel header: {e}")))?;
        let word = |i: usize| u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        if word(0) != VOXEL_MAGIC {
            return Err(Error::ModelFormat("not a voxel grid file (bad magic)".into()));
        }
        if word(1) != VOXEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported voxel file version {}",
                word(1)
            )));
        }
        let dims = [word(2) as usize, word(3) as usize, word(4) as usize];
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::ModelFormat("voxel grid too large".into()))?;
        let mut body = Vec::with_capacity(len);
        r.take(len as u64 + 1)
            .read_to_end(&mut body)
            .map_err(|e| Error::ModelFormat(format!("voxel body: {e}")))?;
        if body.len() != len {
            return Err(Error::ModelFormat(format!(
                "voxel body has {} bytes, header implies {len}",
                body.len()
            )));
        }
        if let Some(b) = body.iter().find(|&&b| b > 1) {
            return Err(Error::ModelFormat(format!("voxel value {b} is not 0 or 1")));
        }
        Self::new(dims, body.into_iter().map(|b| b == 1).collect())
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = [
            VOXEL_MAGIC,
            VOXEL_VERSION,
            self.dims[0] as u32,
            self.dims[1] as u32,
            self.dims[2] as u32,
            0,
        ];
        for h in header {
            w.write_all(&h.to_le_bytes())?;
        }
        let body: Vec<u8> = self.occupied.iter().map(|&v| u8::from(v)).collect();
        w.write_all(&body)?;
        w.flush()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

/// Number of `s`-sized boxes holding at least one occupied voxel when the box
/// lattice is shifted by `offset` (each component in `[0, s)`).
pub fn box_count_at(g: &VoxelGrid, scale: usize, offset: [usize; 3]) -> Result<usize> {
    if scale == 0 || offset.iter().any(|&o| o >= scale) {
        return Err(Error::InvalidArgument(format!(
            "offset {offset:?} outside [0, {scale})"
        )));
    }
    Ok(count_boxes(&g.occupied_coords(), g.dims, scale, offset))
}

fn count_boxes(coords: &[[u32; 3]], dims: [usize; 3], scale: usize, offset: [usize; 3]) -> usize {
    let nb = [0, 1, 2].map(|a| (dims[a] + offset[a]).div_ceil(scale));
    let mut seen = vec![0u64; (nb[0] * nb[1] * nb[2]).div_ceil(64)];
    for c in coords {
        let b = [0, 1, 2].map(|a| (c[a] as usize + offset[a]) / scale);
        let i = (b[2] * nb[1] + b[1]) * nb[0] + b[0];
        seen[i / 64] |= 1 << (i % 64);
    }
    seen.iter().map(|w| w.count_ones() as usize).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCountCurve {
    /// Box sizes in voxels.
    pub scales: Vec<usize>,
    /// Box counts averaged over offsets.
    pub counts: Vec<f64>,
    pub n_offsets: usize,
}

/// Box counts at `s = 1, 2, 4, …, 256`, each averaged over `n_offsets` random
/// lattice offsets drawn afresh for every scale.
pub fn box_count(g: &VoxelGrid, n_offsets: usize, seed: u64) -> Result<BoxCountCurve> {
    if n_offsets == 0 {
        return Err(Error::InvalidArgument("n_offsets must be >= 1".into()));
    }
    let coords = g.occupied_coords();
    if coords.is_empty() {
        return Err(Error::Empty("voxel grid has no occupied voxels".into()));
    }
    let scales: Vec<usize> = (0..=MAX_SCALE_EXPONENT).map(|k| 1usize << k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(usize, [usize; 3])> = scales
        .iter()
        .flat_map(|&s| (0..n_offsets).map(move |_| s).collect::<Vec<_>>())
        .map(|s| (s, [0; 3].map(|_: usize| rng.random_range(0..s))))
        .collect();
    let counts: Vec<usize> = jobs
        .par_iter()
        .map(|&(s, o)| count_boxes(&coords, g.dims, s, o))
        .collect();
    let counts = counts
        .chunks(n_offsets)
        .map(|c| c.iter().sum::<usize>() as f64 / n_offsets as f64)
        .collect();
    Ok(BoxCountCurve {
        scales,
        counts,
        n_offsets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingWindow {
    /// First and last scale index (inclusive) into the curve.
    pub k_lo: usize,
    pub k_hi: usize,
    /// Adjusted R² rounded to [`R2_DECIMALS`] places.
    pub r2_adj: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl ScalingWindow {
    pub fn len(&self) -> usize {
        self.k_hi - self.k_lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

struct LineFit {
    slope: f64,
    intercept: f64,
    r2: f64,
}

fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    // A flat segment is fitted exactly by a zero slope.
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

/// Contiguous window of at least [`MIN_WINDOW`] points with the best rounded
/// adjusted R² of `log N` against `log s`. Ties go to the widest window, then to
/// the one starting at the smallest scale.
pub fn select_scaling_window(c: &BoxCountCurve) -> Result<ScalingWindow> {
    if c.scales.len() != c.counts.len() {
        return Err(Error::DimensionMismatch {
            expected: c.scales.len(),
            found: c.counts.len(),
        });
    }
    if c.counts.iter().any(|&n| !(n > 0.0 && n.is_finite())) || c.scales.contains(&0) {
        return Err(Error::InvalidArgument(
            "box counts and scales must be finite and positive".into(),
        ));
    }
    let n = c.counts.len();
    if n < MIN_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_WINDOW} scales, got {n}"
        )));
    }
    let x: Vec<f64> = c.scales.iter().map(|&s| (s as f64).ln()).collect();
    let y: Vec<f64> = c.counts.iter().map(|n| n.ln()).collect();
    let mut best: Option<ScalingWindow> = None;
    for len in (MIN_WINDOW..=n).rev() {
        for lo in 0..=n - len {
            let hi = lo + len - 1;
            let fit = fit_line(&x[lo..=hi], &y[lo..=hi]);
            let m = len as f64;
            let r2_adj = round_to(1.0 - (1.0 - fit.r2) * (m - 1.0) / (m - 2.0), R2_DECIMALS);
            // Strict improvement only: earlier candidates are wider or start lower.
            if best.is_none_or(|b| r2_adj > b.r2_adj) {
                best = Some(ScalingWindow {
                    k_lo: lo,
                    k_hi: hi,
                    r2_adj,
                    slope: fit.slope,
                    intercept: fit.intercept,
                });
            }
        }
    }
    Ok(best.expect("at least one window"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub fd: f64,
    pub window: ScalingWindow,
    pub curve: BoxCountCurve,
    pub seed: u64,
}

pub fn fractal_dimension(g: &VoxelGrid, n_offsets: usize, seed: u64) -> Result<FdEstimate> {
    let curve = box_count(g, n_offsets, seed)?;
    let window = select_scaling_window(&curve)?;
    Ok(FdEstimate {
        fd: window.slope.abs(),
        window,
        curve,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(counts: Vec<f64>) -> BoxCountCurve {
        BoxCountCurve {
            scales: (0..counts.len()).map(|k| 1 << k).collect(),
            counts,
            n_offsets: 1,
        }
    }

    #[test]
    fn single_voxel_counts_one_everywhere() {
        let g = VoxelGrid::from_fn([5, 4, 3], |x, y, z| (x, y, z) == (2, 1, 1)).unwrap();
        let c = box_count(&g, 4, 9).unwrap();
        assert!(c.counts.iter().all(|&n| n == 1.0));
    }

    #[test]
    fn exact_tilings() {
        let g = VoxelGrid::cube(32).unwrap();
        for k in 0..=5 {
            let s = 1 << k;
            assert_eq!(box_count_at(&g, s, [0; 3]).unwrap(), (32 / s).pow(3));
        }
        let p = VoxelGrid::slab(64, 64).unwrap();
        assert_eq!(box_count_at(&p, 4, [0; 3]).unwrap(), 256);
        assert_eq!(box_count_at(&p, 4, [1, 0, 0]).unwrap(), 17 * 16);
        assert!(box_count_at(&p, 4, [4, 0, 0]).is_err());
    }

    #[test]
    fn menger_occupancy() {
        assert_eq!(VoxelGrid::menger(1).unwrap().n_occupied(), 20);
        assert_eq!(VoxelGrid::menger(2).unwrap().n_occupied(), 400);
    }

    #[test]
    fn linear_curve_selects_full_window() {
        let c = curve((0..9).map(|k| 2f64.powf(2.5 * (8 - k) as f64)).collect());
        let w = select_scaling_window(&c).unwrap();
        assert_eq!((w.k_lo, w.k_hi, w.r2_adj), (0, 8, 1.0));
        assert!((w.slope + 2.5).abs() < 1e-12);
    }

    #[test]
    fn kinked_curve_stays_in_linear_part() {
        let mut counts: Vec<f64> = (0..6).map(|k| 8f64.powi(5 - k)).collect();
        counts.extend([1.0, 1.0, 1.0]);
        let w = select_scaling_window(&curve(counts)).unwrap();
        assert!(w.k_hi <= 5, "{w:?}");
        assert_eq!(w.len(), 6);
    }

    #[test]
    fn ties_prefer_wider_then_lower() {
        // Linear on 0..=3 (slope −1) and 3..=8 (slope −3): the 6-point window wins.
        let y: [f64; 9] = std::array::from_fn(|k| {
            if k <= 3 {
                20.0 - k as f64
            } else {
                17.0 - 3.0 * (k - 3) as f64
            }
        });
        let c = curve(y.iter().map(|v| 2f64.powf(*v)).collect());
        let w = select_scaling_window(&c).unwrap();
        assert_eq!((w.k_lo, w.k_hi), (3, 8));
    }

    #[test]
    fn voxel_file_round_trip_and_errors() {
        let g = VoxelGrid::menger(2).unwrap();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 729);
        assert_eq!(VoxelGrid::read_from(buf.as_slice()).unwrap(), g);
        assert!(VoxelGrid::read_from(&buf[..100]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'x';
        assert!(VoxelGrid::read_from(bad.as_slice()).is_err());
        let mut long = buf;
        long.push(0);
        assert!(VoxelGrid::read_from(long.as_slice()).is_err());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let g = VoxelGrid::from_fn([3, 3, 3], |_, _, _| false).unwrap();
        assert!(matches!(box_count(&g, 1, 0), Err(Error::Empty(_))));
    }
}
