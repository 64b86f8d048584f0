//! Spatial pyramid max pooling: collapse an image's (code, position) pairs
//! into one fixed-length vector while keeping coarse spatial layout.
//!
//! For each pyramid level `l` the unit square is cut into `l x l` cells;
//! each cell takes the componentwise maximum over the codes whose positions
//! fall inside it (empty cells stay zero). The per-cell vectors are
//! concatenated level by level, row-major within a level, and optionally
//! L2-normalized.

use ndarray::{s, Array1, Array2};

use crate::{Error, Result};

/// Pyramid layout: grid resolutions per level plus the final normalization
/// switch. The default `[1, 2, 4]` gives the classic 21-cell pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpmConfig {
    pub levels: Vec<usize>,
    pub normalize: bool,
}

impl Default for SpmConfig {
    fn default() -> Self {
        SpmConfig {
            levels: vec![1, 2, 4],
            normalize: true,
        }
    }
}

impl SpmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("spm levels must be nonempty".into()));
        }
        if self.levels[0] == 0 {
            return Err(Error::Config("spm levels must be >= 1".into()));
        }
        if !self.levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "spm levels must be strictly increasing, got {:?}",
                self.levels
            )));
        }
        Ok(())
    }

    /// Total cell count over all levels.
    pub fn cells(&self) -> usize {
        self.levels.iter().map(|&l| l * l).sum()
    }
}

/// Length of the pooled vector for a given code dimension.
pub fn pooled_dim(k2: usize, cfg: &SpmConfig) -> usize {
    k2 * cfg.cells()
}

/// One image's pooled representation.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeature {
    pub vector: Array1<f64>,
    pub label: usize,
    pub image_id: String,
}

/// Pool code columns (`K2 x N`) with their normalized positions into one
/// pyramid vector.
pub fn spm_max_pool(
    codes: &Array2<f64>,
    positions: &[(f64, f64)],
    cfg: &SpmConfig,
    label: usize,
    image_id: &str,
) -> Result<PooledFeature> {
    cfg.validate()?;
    let n = codes.ncols();
    if n == 0 {
        return Err(Error::Pooling(format!("no codes to pool for '{image_id}'")));
    }
    if positions.len() != n {
        return Err(Error::Dim {
            context: "spm positions",
            expected: n,
            got: positions.len(),
        });
    }
    if let Some(&(px, py)) = positions
        .iter()
        .find(|(px, py)| !((0.0..=1.0).contains(px) && (0.0..=1.0).contains(py)))
    {
        return Err(Error::Pooling(format!(
            "position ({px}, {py}) outside the unit square for '{image_id}'"
        )));
    }

    let k2 = codes.nrows();
    let mut vector = Array1::zeros(pooled_dim(k2, cfg));
    let mut offset = 0;
    for &level in &cfg.levels {
        for (i, &(px, py)) in positions.iter().enumerate() {
            let cx = ((px * level as f64) as usize).min(level - 1);
            let cy = ((py * level as f64) as usize).min(level - 1);
            let base = offset + (cy * level + cx) * k2;
            let mut cell = vector.slice_mut(s![base..base + k2]);
            cell.zip_mut_with(&codes.column(i), |slot, &code| {
                if code > *slot {
                    *slot = code;
                }
            });
        }
        offset += level * level * k2;
    }

    if cfg.normalize {
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            vector.mapv_inplace(|v| v / norm);
        }
    }
    Ok(PooledFeature {
        vector,
        label,
        image_id: image_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn cfg(levels: &[usize], normalize: bool) -> SpmConfig {
        SpmConfig {
            levels: levels.to_vec(),
            normalize,
        }
    }

    fn random_input(k2: usize, n: usize, seed: u64) -> (Array2<f64>, Vec<(f64, f64)>) {
        let mut rng = Rng::new(seed);
        let codes = Array2::from_shape_fn((k2, n), |_| rng.next_f64());
        let positions = (0..n).map(|_| (rng.next_f64(), rng.next_f64())).collect();
        (codes, positions)
    }

    /// Independent reference: loop over cells in output order and take the
    /// max over the codes that fall in each.
    fn oracle(codes: &Array2<f64>, positions: &[(f64, f64)], levels: &[usize]) -> Vec<f64> {
        let k2 = codes.nrows();
        let mut out = Vec::new();
        for &l in levels {
            for cy in 0..l {
                for cx in 0..l {
                    for k in 0..k2 {
                        let mut best = 0.0f64;
                        for (i, &(px, py)) in positions.iter().enumerate() {
                            let ix = ((px * l as f64) as usize).min(l - 1);
                            let iy = ((py * l as f64) as usize).min(l - 1);
                            if ix == cx && iy == cy {
                                best = best.max(codes[[k, i]]);
                            }
                        }
                        out.push(best);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn single_code_fills_global_and_owning_cells() {
        let code = Array2::from_shape_vec((4, 1), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let got = spm_max_pool(&code, &[(0.1, 0.1)], &cfg(&[1, 2], false), 3, "img").unwrap();
        assert_eq!(got.label, 3);
        assert_eq!(got.image_id, "img");
        assert_eq!(got.vector.len(), 4 * (1 + 4));
        let v = got.vector.to_vec();
        let c = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(&v[0..4], &c); // level 1 global cell
        assert_eq!(&v[4..8], &c); // level 2 top-left cell
        assert!(v[8..].iter().all(|&x| x == 0.0)); // remaining cells empty
    }

    #[test]
    fn duplicating_codes_changes_nothing() {
        let (codes, positions) = random_input(6, 40, 1);
        let spm = cfg(&[1, 2, 4], true);
        let once = spm_max_pool(&codes, &positions, &spm, 0, "a").unwrap();
        let mut doubled = Array2::zeros((6, 80));
        doubled.slice_mut(s![.., ..40]).assign(&codes);
        doubled.slice_mut(s![.., 40..]).assign(&codes);
        let mut positions2 = positions.clone();
        positions2.extend_from_slice(&positions);
        let twice = spm_max_pool(&doubled, &positions2, &spm, 0, "a").unwrap();
        assert_eq!(once.vector, twice.vector);
    }

    #[test]
    fn matches_brute_force_oracle_exactly() {
        for seed in 0..100u64 {
            let (codes, positions) = random_input(5, 30, 100 + seed);
            let got = spm_max_pool(&codes, &positions, &cfg(&[1, 2, 4], false), 0, "x").unwrap();
            let want = oracle(&codes, &positions, &[1, 2, 4]);
            assert_eq!(got.vector.to_vec(), want, "seed {seed}");
        }
    }

    #[test]
    fn dimension_law() {
        let spm = cfg(&[1, 2, 4], true);
        assert_eq!(pooled_dim(8, &spm), 168);
        assert_eq!(pooled_dim(1024, &spm), 21504);
        for k2 in [8usize, 1024] {
            let (codes, positions) = random_input(k2, 3, k2 as u64);
            let got = spm_max_pool(&codes, &positions, &spm, 0, "x").unwrap();
            assert_eq!(got.vector.len(), 21 * k2);
        }
    }

    #[test]
    fn boundary_positions_stay_in_range() {
        let codes = Array2::from_elem((2, 3), 0.5);
        let positions = vec![(1.0, 1.0), (0.0, 1.0), (1.0, 0.0)];
        let got = spm_max_pool(&codes, &positions, &cfg(&[4], false), 0, "b").unwrap();
        // (1.0, 1.0) must land in the bottom-right cell (index 15).
        let last_cell = &got.vector.to_vec()[15 * 2..16 * 2];
        assert_eq!(last_cell, &[0.5, 0.5]);
    }

    #[test]
    fn normalized_output_has_unit_norm() {
        let (codes, positions) = random_input(7, 25, 42);
        let got = spm_max_pool(&codes, &positions, &cfg(&[1, 2, 4], true), 0, "n").unwrap();
        let norm = got.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn error_cases() {
        let (codes, positions) = random_input(3, 4, 2);
        let empty = Array2::<f64>::zeros((3, 0));
        assert!(matches!(
            spm_max_pool(&empty, &[], &cfg(&[1], true), 0, "e").unwrap_err(),
            Error::Pooling(_)
        ));
        assert!(matches!(
            spm_max_pool(&codes, &positions[..2], &cfg(&[1], true), 0, "e").unwrap_err(),
            Error::Dim { .. }
        ));
        let bad_pos = vec![(0.5, 1.5); 4];
        assert!(matches!(
            spm_max_pool(&codes, &bad_pos, &cfg(&[1], true), 0, "e").unwrap_err(),
            Error::Pooling(_)
        ));
        assert!(cfg(&[2, 2], true).validate().is_err());
        assert!(cfg(&[4, 2], true).validate().is_err());
        assert!(cfg(&[], true).validate().is_err());
        assert!(cfg(&[0, 1], true).validate().is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(seed in 0u64..500, swaps in 1usize..20) {
            let (codes, positions) = random_input(4, 15, seed);
            let spm = cfg(&[1, 2, 4], true);
            let base = spm_max_pool(&codes, &positions, &spm, 0, "p").unwrap();

            let mut rng = Rng::new(seed ^ 0xABCD);
            let mut perm: Vec<usize> = (0..15).collect();
            for _ in 0..swaps {
                let a = rng.below(15) as usize;
                let b = rng.below(15) as usize;
                perm.swap(a, b);
            }
            let mut shuffled = Array2::zeros((4, 15));
            let mut shuffled_pos = vec![(0.0, 0.0); 15];
            for (to, &from) in perm.iter().enumerate() {
                shuffled.column_mut(to).assign(&codes.column(from));
                shuffled_pos[to] = positions[from];
            }
            let permuted = spm_max_pool(&shuffled, &shuffled_pos, &spm, 0, "p").unwrap();
            prop_assert_eq!(base.vector, permuted.vector);
        }

        #[test]
        fn adding_a_code_never_decreases_components(seed in 0u64..500) {
            let (codes, positions) = random_input(4, 10, seed);
            let spm = cfg(&[1, 2, 4], false);
            let base = spm_max_pool(&codes, &positions, &spm, 0, "m").unwrap();

            let mut rng = Rng::new(seed ^ 0x1234);
            let mut grown = Array2::zeros((4, 11));
            grown.slice_mut(s![.., ..10]).assign(&codes);
            grown.column_mut(10).mapv_inplace(|_| rng.next_f64());
            let mut grown_pos = positions.clone();
            grown_pos.push((rng.next_f64(), rng.next_f64()));
            let bigger = spm_max_pool(&grown, &grown_pos, &spm, 0, "m").unwrap();
            for (a, b) in base.vector.iter().zip(bigger.vector.iter()) {
                prop_assert!(b >= a);
            }
        }
    }
}
