//! Block-size schedule for the hierarchy.
//!
//! With `x = T·m/n` the schedule uses `k = ⌊lg lg x⌋ − k_offset` levels,
//! `T_0 = x^{2^k/(2^{k+1}−1)}` and `T_i = T_0^{(2^{i+1}−1)/2^i}`, which is the
//! same sequence as the recursion `T_i = T_{i−1}^{3/2} / √T_{i−2}`.

use crate::error::{Error, Result};
use crate::types::HierarchyConfig;

/// Minimum `T·m/n` below which the schedule degenerates to one level.
pub const MIN_RATIO: f64 = 4.0;

pub const DEFAULT_K_OFFSET: u32 = 1;

// Guards `ceil` against targets such as 127.99999999999997.
const CEIL_SLACK: f64 = 1e-9;

fn ceil_int(x: f64) -> u64 {
    (x - CEIL_SLACK).ceil().max(1.0) as u64
}

/// Real-valued target `T_i = T_0^{(2^{i+1}−1)/2^i}`.
pub fn closed_form_target(t0: f64, i: u32) -> f64 {
    let p = 2f64.powi(i as i32);
    t0.powf((2.0 * p - 1.0) / p)
}

/// Real-valued targets from the recursion `T_i = T_{i−1}^{3/2} / √T_{i−2}`,
/// seeded with `T_{−1} = 1`.
pub fn recursive_targets(t0: f64, levels: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(levels);
    let mut prev2: f64 = 1.0;
    let mut prev = t0;
    for i in 0..levels {
        if i > 0 {
            let next = prev.powf(1.5) / prev2.sqrt();
            prev2 = prev;
            prev = next;
        }
        out.push(prev);
    }
    out
}

/// Number of levels for ratio `x = T·m/n`.
pub fn level_count(ratio: f64, k_offset: u32) -> usize {
    if ratio < MIN_RATIO {
        return 1;
    }
    let lglg = ratio.log2().log2().floor() as i64;
    (lglg - i64::from(k_offset)).max(1) as usize
}

/// `T_0 = ⌈x^{2^k/(2^{k+1}−1)}⌉`, at least 2.
pub fn base_block(ratio: f64, levels: usize) -> u64 {
    let p = 2f64.powi(levels as i32);
    ceil_int(ratio.powf(p / (2.0 * p - 1.0))).max(2)
}

/// Integer block sizes: `T_0` as given, then each target rounded up to a
/// multiple of the previous (rounded) size.
pub fn block_schedule(t0: u64, levels: usize) -> Vec<u64> {
    let mut sizes = vec![t0];
    for i in 1..levels {
        let prev = *sizes.last().unwrap();
        let target = closed_form_target(t0 as f64, i as u32);
        let mult = ceil_int(target / prev as f64).max(2);
        sizes.push(prev * mult);
    }
    sizes
}

/// Picks `k` and block sizes for `n` experts, space `m` and `T` days.
///
/// The horizon of the returned config is `T` rounded up to a multiple of
/// the largest block. Levels whose block would exceed `T` are dropped.
pub fn choose_parameters(n: usize, m: usize, horizon: u64, k_offset: u32) -> Result<HierarchyConfig> {
    if n == 0 || m == 0 || horizon == 0 {
        return Err(Error::Config(format!("n, m and T must be positive (n={n}, m={m}, T={horizon})")));
    }
    let ratio = horizon as f64 * m as f64 / n as f64;
    if ratio < MIN_RATIO {
        return one_level(n, m, horizon);
    }
    let levels = level_count(ratio, k_offset);
    let mut sizes = block_schedule(base_block(ratio, levels), levels);
    while sizes.len() > 1 && *sizes.last().unwrap() > horizon {
        sizes.pop();
    }
    padded_config(n, m, sizes, horizon)
}

/// The single-level schedule `T_0 = ⌈x^{2/3}⌉`, clamped to `[2, max(T, 2)]`.
pub fn one_level(n: usize, m: usize, horizon: u64) -> Result<HierarchyConfig> {
    if n == 0 || m == 0 || horizon == 0 {
        return Err(Error::Config(format!("n, m and T must be positive (n={n}, m={m}, T={horizon})")));
    }
    let ratio = horizon as f64 * m as f64 / n as f64;
    let t0 = ceil_int(ratio.powf(2.0 / 3.0)).clamp(2, horizon.max(2));
    padded_config(n, m, vec![t0], horizon)
}

fn padded_config(n: usize, m: usize, sizes: Vec<u64>, horizon: u64) -> Result<HierarchyConfig> {
    let top = *sizes.last().unwrap();
    let padded = horizon.div_ceil(top) * top;
    HierarchyConfig::new(n, m, sizes, padded)
}

/// Regret proxy `T/√T_0 + n·T_0/m` of the single-level algorithm, without
/// the `T/m` term that does not depend on `T_0`.
pub fn one_level_objective(n: usize, m: usize, horizon: u64, t0: u64) -> f64 {
    horizon as f64 / (t0 as f64).sqrt() + n as f64 * t0 as f64 / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_and_recursion_agree() {
        assert!((closed_form_target(16.0, 1) - 64.0).abs() < 1e-9);
        assert!((closed_form_target(16.0, 2) - 128.0).abs() < 1e-9);
        let rec = recursive_targets(16.0, 3);
        assert!((rec[1] - 64.0).abs() < 1e-9);
        assert!((rec[2] - 128.0).abs() < 1e-9);
        // 64^{3/2} / √16 evaluated directly
        assert!((64f64.powf(1.5) / 4.0 - 128.0).abs() < 1e-12);
    }

    #[test]
    fn worked_example_n256_m16() {
        let c = choose_parameters(256, 16, 4096, 1).unwrap();
        assert_eq!(c.levels(), 2);
        assert!((256f64.powf(4.0 / 7.0) - 23.78).abs() < 0.01);
        assert!((24f64.powf(1.5) - 117.58).abs() < 0.01);
        assert_eq!(c.block_sizes(), &[24, 120]);
        assert_eq!(c.horizon(), 4200);
        assert!((c.epsilon() - 4200f64.ln() / 16.0).abs() < 1e-15);
    }

    #[test]
    fn divisibility_holds_on_a_grid() {
        for &n in &[1usize, 3, 16, 64, 256, 1000] {
            for &m in &[1usize, 2, 8, 32] {
                for &t in &[1u64, 5, 100, 4096, 1 << 16, 1 << 20] {
                    for off in 0..3 {
                        let c = choose_parameters(n, m, t, off).unwrap();
                        let b = c.block_sizes();
                        assert!(b[0] >= 2);
                        for w in b.windows(2) {
                            assert!(w[1] > w[0] && w[1] % w[0] == 0);
                        }
                        assert!(c.horizon() >= t && c.horizon() % b[b.len() - 1] == 0);
                    }
                }
            }
        }
    }

    #[test]
    fn one_level_is_near_the_objective_minimum() {
        for &(n, m, t) in &[(64usize, 8usize, 4096u64), (16, 4, 1 << 14), (256, 16, 1 << 16), (10, 10, 10_000)] {
            let c = one_level(n, m, t).unwrap();
            let chosen = one_level_objective(n, m, t, c.block_size(0));
            let best = (1..=t).map(|t0| one_level_objective(n, m, t, t0)).fold(f64::INFINITY, f64::min);
            assert!(chosen <= 1.1 * best, "n={n} m={m} T={t}: {chosen} vs {best}");
        }
    }

    #[test]
    fn small_ratio_falls_back_to_one_level() {
        let c = choose_parameters(100, 1, 50, 1).unwrap();
        assert_eq!(c.levels(), 1);
        assert_eq!(c.block_size(0), 2);
        assert_eq!(c.horizon(), 50);
        let c = choose_parameters(3, 2, 5, 1).unwrap();
        assert_eq!(c.levels(), 1);
        assert_eq!(c.horizon() % c.block_size(0), 0);
    }

    #[test]
    fn level_count_examples() {
        assert_eq!(level_count(256.0, 1), 2);
        assert_eq!(level_count(256.0, 0), 3);
        assert_eq!(level_count(4.0, 1), 1);
        assert_eq!(level_count(65536.0, 1), 3);
    }

    #[test]
    fn zero_inputs_are_rejected() {
        assert!(matches!(choose_parameters(0, 1, 10, 1), Err(Error::Config(_))));
        assert!(matches!(one_level(1, 0, 10), Err(Error::Config(_))));
    }
}
