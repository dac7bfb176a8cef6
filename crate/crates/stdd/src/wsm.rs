//! Periodic window-shift token masking.
//!
//! Each frame retains a fraction `r` of the patch-token grid; the
//! retained positions cycle within repeated spatial windows from frame to
//! frame, so that over a full period every cell is kept equally often.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Patch-token grid geometry derived from frame size and patch size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenGrid {
    l1: usize,
    l2: usize,
}

impl TokenGrid {
    /// `height` and `width` in pixels, `patch` the square patch edge.
    pub fn new(height: usize, width: usize, patch: usize) -> Result<Self> {
        if patch == 0 || height % patch != 0 || width % patch != 0 {
            return Err(Error::config(format!(
                "frame {height}x{width} not divisible by patch size {patch}"
            )));
        }
        Ok(TokenGrid {
            l1: height / patch,
            l2: width / patch,
        })
    }

    pub fn from_extents(l1: usize, l2: usize) -> Result<Self> {
        if l1 == 0 || l2 == 0 {
            return Err(Error::config("token grid extents must be positive".to_string()));
        }
        Ok(TokenGrid { l1, l2 })
    }

    /// Rows of patches.
    pub fn l1(&self) -> usize {
        self.l1
    }

    /// Columns of patches.
    pub fn l2(&self) -> usize {
        self.l2
    }

    /// Total patch-token count.
    pub fn n(&self) -> usize {
        self.l1 * self.l2
    }
}

/// Spatial extent of the repeated masking window and the retained
/// fraction `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSpec {
    pub w1: usize,
    pub w2: usize,
    pub r: Real,
}

impl WindowSpec {
    pub fn new(w1: usize, w2: usize, r: Real) -> Self {
        WindowSpec { w1, w2, r }
    }

    /// Cells retained per window: `r * w1 * w2`, which must be a positive
    /// integer no larger than the window.
    pub fn keep_per_window(&self) -> Result<usize> {
        let cells = (self.w1 * self.w2) as Real;
        let keep = self.r * cells;
        let rounded = keep.round();
        if (keep - rounded).abs() > 1e-9 || rounded < 1.0 || rounded > cells {
            return Err(Error::config(format!(
                "r * w1 * w2 = {} * {} * {} is not a positive integer keep-count",
                self.r, self.w1, self.w2
            )));
        }
        Ok(rounded as usize)
    }

    fn validate(&self, grid: TokenGrid) -> Result<usize> {
        if self.w1 == 0 || self.w2 == 0 || grid.l1 % self.w1 != 0 || grid.l2 % self.w2 != 0 {
            return Err(Error::config(format!(
                "{}x{} token grid not tiled by {}x{} windows",
                grid.l1, grid.l2, self.w1, self.w2
            )));
        }
        self.keep_per_window()
    }
}

/// How retained positions are chosen and moved across frames. The
/// canonical choice is [`MaskStrategy::RepeatWindowShift`]; the others
/// exist for ablations and take explicit seeds where randomized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskStrategy {
    /// Cyclic shift by one cell per frame, same pattern in every window.
    RepeatWindowShift,
    /// Fresh uniformly random retained set every frame.
    Random { seed: u64 },
    /// One random retained set over the whole grid, shifted by one flat
    /// cell per frame.
    RandomShift { seed: u64 },
    /// Evenly spaced retained set over the whole grid, shifted by one
    /// flat cell per frame.
    UniformShift,
    /// Independent random pattern per window, each cyclically shifted
    /// within its window per frame.
    RandomWindowShift { seed: u64 },
}

impl Default for MaskStrategy {
    fn default() -> Self {
        MaskStrategy::RepeatWindowShift
    }
}

/// Per-frame binary visibility maps plus their period and retained-index
/// lists. The schedule is identical across encoder layers (the minimal
/// reading of the per-layer mask index) and immutable once built.
#[derive(Clone, Debug)]
pub struct MaskSchedule {
    maps: Vec<Vec<u8>>,
    visible_index: Vec<Vec<usize>>,
    period: usize,
    n_prime: usize,
}

impl MaskSchedule {
    /// Visibility map for frame `t` (0-based); 1 = retained.
    pub fn map(&self, t: usize) -> &[u8] {
        &self.maps[t]
    }

    /// Ascending flat indices of retained cells at frame `t`.
    pub fn visible(&self, t: usize) -> &[usize] {
        &self.visible_index[t]
    }

    pub fn frames(&self) -> usize {
        self.maps.len()
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// Retained tokens per frame (N′).
    pub fn n_prime(&self) -> usize {
        self.n_prime
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "period": self.period,
            "maps": self.maps,
        })
    }
}

fn sample_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Flat grid index of window-local cell `c` in window (`wi`, `wj`).
fn window_cell_to_flat(grid: TokenGrid, win: &WindowSpec, wi: usize, wj: usize, c: usize) -> usize {
    let (ci, cj) = (c / win.w2, c % win.w2);
    (wi * win.w1 + ci) * grid.l2 + wj * win.w2 + cj
}

/// Build the visibility schedule for `frames` frames. `layers` is
/// accepted for interface completeness; maps are layer-independent.
pub fn build_mask_schedule(
    grid: TokenGrid,
    win: WindowSpec,
    frames: usize,
    layers: usize,
    strategy: MaskStrategy,
) -> Result<MaskSchedule> {
    let keep = win.validate(grid)?;
    if frames == 0 || layers == 0 {
        return Err(Error::config(
            "mask schedule needs at least one frame and one layer".to_string(),
        ));
    }
    let n = grid.n();
    let cells = win.w1 * win.w2;
    let windows_i = grid.l1 / win.w1;
    let windows_j = grid.l2 / win.w2;
    let n_prime = windows_i * windows_j * keep;
    let all_kept = keep == cells;

    // Retained window-local cell sets per frame, for window-based
    // strategies; grid-flat sets for the others.
    let mut maps: Vec<Vec<u8>> = Vec::with_capacity(frames);
    let period;
    match strategy {
        MaskStrategy::RepeatWindowShift => {
            period = if all_kept { 1 } else { cells };
            for t in 0..frames {
                let mut map = vec![0u8; n];
                for wi in 0..windows_i {
                    for wj in 0..windows_j {
                        for c in 0..cells {
                            if (c + cells - t % cells) % cells < keep {
                                map[window_cell_to_flat(grid, &win, wi, wj, c)] = 1;
                            }
                        }
                    }
                }
                maps.push(map);
            }
        }
        MaskStrategy::Random { seed } => {
            period = frames;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let total_keep = n_prime;
            for _ in 0..frames {
                let mut map = vec![0u8; n];
                for i in sample_distinct(&mut rng, n, total_keep) {
                    map[i] = 1;
                }
                maps.push(map);
            }
        }
        MaskStrategy::RandomShift { seed } => {
            period = if n_prime == n { 1 } else { n };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = sample_distinct(&mut rng, n, n_prime);
            for t in 0..frames {
                let mut map = vec![0u8; n];
                for &i in &base {
                    map[(i + t) % n] = 1;
                }
                maps.push(map);
            }
        }
        MaskStrategy::UniformShift => {
            period = if n_prime == n { 1 } else { n };
            for t in 0..frames {
                let mut map = vec![0u8; n];
                for j in 0..n_prime {
                    map[(j * n / n_prime + t) % n] = 1;
                }
                maps.push(map);
            }
        }
        MaskStrategy::RandomWindowShift { seed } => {
            period = if all_kept { 1 } else { cells };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bases: Vec<Vec<usize>> = (0..windows_i * windows_j)
                .map(|_| sample_distinct(&mut rng, cells, keep))
                .collect();
            for t in 0..frames {
                let mut map = vec![0u8; n];
                for wi in 0..windows_i {
                    for wj in 0..windows_j {
                        for &c in &bases[wi * windows_j + wj] {
                            let shifted = (c + t) % cells;
                            map[window_cell_to_flat(grid, &win, wi, wj, shifted)] = 1;
                        }
                    }
                }
                maps.push(map);
            }
        }
    }

    let visible_index: Vec<Vec<usize>> = maps
        .iter()
        .map(|m| {
            m.iter()
                .enumerate()
                .filter_map(|(i, &v)| (v == 1).then_some(i))
                .collect()
        })
        .collect();
    for v in &visible_index {
        debug_assert_eq!(v.len(), n_prime);
    }
    Ok(MaskSchedule {
        maps,
        visible_index,
        period,
        n_prime,
    })
}

/// N′ = r·N, cross-checked against the per-window form
/// (L1/w1 · L2/w2) · (r · w1 · w2).
pub fn visible_count(grid: TokenGrid, win: WindowSpec) -> Result<usize> {
    let keep = win.validate(grid)?;
    let per_window = (grid.l1 / win.w1) * (grid.l2 / win.w2) * keep;
    let direct = win.r * grid.n() as Real;
    if (direct - per_window as Real).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "visible-count forms disagree: r*N = {direct} vs windowed {per_window}"
        )));
    }
    Ok(per_window)
}

/// Select the retained patch rows of one frame. Row 0 of `z_t` is the
/// class token and is never selected; returned `kept_idx` are the flat
/// cell positions, so source rows are `kept_idx[i] + 1`.
pub fn apply_mask(z_t: &Tensor, map_t: &[u8]) -> Result<(Tensor, Vec<usize>)> {
    let shape = z_t.shape();
    if shape.len() != 2 || shape[0] != map_t.len() + 1 {
        return Err(Error::dim(format!(
            "apply_mask: tokens {shape:?} vs map over {} cells (need {} rows)",
            map_t.len(),
            map_t.len() + 1
        )));
    }
    let kept_idx: Vec<usize> = map_t
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v == 1).then_some(i))
        .collect();
    let rows: Vec<usize> = kept_idx.iter().map(|&i| i + 1).collect();
    let gathered = z_t.gather_rows(&rows)?;
    Ok((gathered, kept_idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Array, Tape};

    fn grid22() -> TokenGrid {
        TokenGrid::from_extents(2, 2).unwrap()
    }

    #[test]
    fn canonical_two_by_two_half_schedule() {
        let s = build_mask_schedule(
            grid22(),
            WindowSpec::new(2, 2, 0.5),
            4,
            1,
            MaskStrategy::RepeatWindowShift,
        )
        .unwrap();
        assert_eq!(s.period(), 4);
        assert_eq!(s.n_prime(), 2);
        assert_eq!(s.visible(0), &[0, 1]);
        assert_eq!(s.visible(1), &[1, 2]);
        assert_eq!(s.visible(2), &[2, 3]);
        assert_eq!(s.visible(3), &[0, 3]); // the set {3, 0} in ascending order
    }

    #[test]
    fn full_retention_has_period_one() {
        let s = build_mask_schedule(
            grid22(),
            WindowSpec::new(2, 2, 1.0),
            3,
            2,
            MaskStrategy::RepeatWindowShift,
        )
        .unwrap();
        assert_eq!(s.period(), 1);
        for t in 0..3 {
            assert_eq!(s.visible(t), &[0, 1, 2, 3]);
        }
    }

    #[test]
    fn rejects_fractional_keep_count_and_bad_tiling() {
        assert!(matches!(
            build_mask_schedule(grid22(), WindowSpec::new(2, 2, 0.3), 2, 1, MaskStrategy::default()),
            Err(Error::Config(_))
        ));
        let g = TokenGrid::from_extents(3, 2).unwrap();
        assert!(matches!(
            build_mask_schedule(g, WindowSpec::new(2, 2, 0.5), 2, 1, MaskStrategy::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn visible_count_matches_closed_forms() {
        assert_eq!(visible_count(grid22(), WindowSpec::new(2, 2, 0.5)).unwrap(), 2);
        let g = TokenGrid::new(224, 224, 16).unwrap(); // 14 x 14 patches
        assert_eq!(visible_count(g, WindowSpec::new(2, 2, 0.5)).unwrap(), 98);
        assert_eq!(visible_count(g, WindowSpec::new(2, 2, 1.0)).unwrap(), 196);
    }

    #[test]
    fn apply_mask_selects_rows_bitwise() {
        let tape = Tape::new();
        let data: Vec<_> = (0..5 * 3).map(|v| v as Real * 0.37 + 0.11).collect();
        let z = tape.constant(&Array::new(vec![5, 3], data.clone()).unwrap());
        let (zt, kept) = apply_mask(&z, &[1, 1, 0, 0]).unwrap();
        assert_eq!(kept, vec![0, 1]);
        assert_eq!(zt.shape(), &[2, 3]);
        // Rows 1 and 2 of the input (cells 0 and 1, offset past the class
        // token), copied exactly.
        assert_eq!(zt.value(), data[3..9].to_vec());
    }

    #[test]
    fn ablation_strategies_keep_n_prime_rows() {
        let g = TokenGrid::from_extents(4, 4).unwrap();
        let win = WindowSpec::new(2, 2, 0.5);
        for strat in [
            MaskStrategy::Random { seed: 7 },
            MaskStrategy::RandomShift { seed: 7 },
            MaskStrategy::UniformShift,
            MaskStrategy::RandomWindowShift { seed: 7 },
        ] {
            let s = build_mask_schedule(g, win, 6, 1, strat).unwrap();
            for t in 0..6 {
                assert_eq!(s.visible(t).len(), 8, "{strat:?} frame {t}");
            }
        }
    }
}
