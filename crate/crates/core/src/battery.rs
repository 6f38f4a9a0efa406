//! Block-frequency chi-square tests of a world prefix against a claimed
//! Bernoulli measure.
//!
//! This is a finite screen for gross non-typicality. Passing it says nothing
//! about Martin-Löf randomness, which no finite test can certify.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::prob::FiniteProbabilitySpace;
use crate::worlds::WorldPrefix;

pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;
pub const DEFAULT_BLOCK_LENS: [usize; 3] = [1, 2, 3];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatteryConfig {
    pub block_lens: Vec<usize>,
    pub significance: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self { block_lens: DEFAULT_BLOCK_LENS.to_vec(), significance: DEFAULT_SIGNIFICANCE }
    }
}

impl BatteryConfig {
    /// The configured block lengths whose length requirement `length` meets.
    pub fn admissible(&self, length: usize, alphabet: usize) -> (Vec<usize>, Vec<usize>) {
        self.block_lens
            .iter()
            .partition(|&&k| required_length(k, alphabet).is_some_and(|need| length >= need))
    }
}

/// Minimum world length for block length `k`: `10 k |alphabet|^k`.
pub fn required_length(k: usize, alphabet: usize) -> Option<usize> {
    let cells = alphabet.checked_pow(u32::try_from(k).ok()?)?;
    k.checked_mul(cells)?.checked_mul(10)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockTest {
    pub block_len: usize,
    pub blocks: usize,
    pub degrees_of_freedom: usize,
    #[serde(serialize_with = "serialize_stat")]
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Cells with zero expected count, removed from the statistic.
    pub zero_cells_removed: usize,
    /// Blocks observed in a zero-expected cell (any makes the statistic infinite).
    pub impossible_blocks: usize,
}

fn serialize_stat<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatteryReport {
    pub significance: f64,
    pub tests: Vec<BlockTest>,
    pub passed: usize,
    pub pass: bool,
}

impl BatteryReport {
    fn from_tests(significance: f64, tests: Vec<BlockTest>) -> Self {
        let passed = tests.iter().filter(|t| t.pass).count();
        Self { significance, pass: passed == tests.len(), passed, tests }
    }
}

/// Chi-square test over non-overlapping blocks of length `k`.
///
/// Expected block counts come from the product measure `P(s_1)...P(s_k)`.
/// Degrees of freedom are the number of positive-probability blocks minus one;
/// with a single possible block the threshold is 0.
pub fn block_frequency_test(
    world: &WorldPrefix,
    fps: &FiniteProbabilitySpace,
    k: usize,
    significance: f64,
) -> Result<BlockTest> {
    if k == 0 {
        return Err(Error::InvalidArgument("block length must be at least 1".into()));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::InvalidArgument(format!("significance {significance} outside (0, 1)")));
    }
    let n = fps.len();
    let needed = required_length(k, n).unwrap_or(usize::MAX);
    if world.len() < needed {
        return Err(Error::InsufficientLength { length: world.len(), block_len: k, alphabet: n, needed });
    }
    let map = world.alphabet_map(fps)?;
    let cells = n.pow(k as u32);
    let blocks = world.len() / k;
    let mut observed = vec![0u64; cells];
    for block in world.indices().chunks_exact(k) {
        let code = block.iter().fold(0usize, |acc, &i| acc * n + map[i as usize]);
        observed[code] += 1;
    }

    let weights = fps.weights();
    let mut statistic = 0.0;
    let mut positive = 0usize;
    let mut zero_cells_removed = 0usize;
    let mut impossible_blocks = 0u64;
    for (code, &obs) in observed.iter().enumerate() {
        let mut rest = code;
        let mut p = 1.0;
        for _ in 0..k {
            p *= weights[rest % n];
            rest /= n;
        }
        if p > 0.0 {
            positive += 1;
            let expected = blocks as f64 * p;
            let d = obs as f64 - expected;
            statistic += d * d / expected;
        } else {
            zero_cells_removed += 1;
            impossible_blocks += obs;
        }
    }
    if impossible_blocks > 0 {
        statistic = f64::INFINITY;
    }
    let dof = positive.saturating_sub(1);
    let threshold = if dof == 0 {
        0.0
    } else {
        ChiSquared::new(dof as f64)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .inverse_cdf(1.0 - significance)
    };
    Ok(BlockTest {
        block_len: k,
        blocks,
        degrees_of_freedom: dof,
        statistic,
        threshold,
        pass: statistic <= threshold,
        zero_cells_removed,
        impossible_blocks: impossible_blocks as usize,
    })
}

/// Runs one block test per configured block length.
pub fn run_battery(world: &WorldPrefix, fps: &FiniteProbabilitySpace, config: &BatteryConfig) -> Result<BatteryReport> {
    if config.block_lens.is_empty() {
        return Err(Error::InvalidArgument("battery needs at least one block length".into()));
    }
    let tests = config
        .block_lens
        .iter()
        .map(|&k| block_frequency_test(world, fps, k, config.significance))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatteryReport::from_tests(config.significance, tests))
}

/// Like [`run_battery`] but skips block lengths the world is too short for.
pub fn run_admissible(
    world: &WorldPrefix,
    fps: &FiniteProbabilitySpace,
    config: &BatteryConfig,
) -> Result<(BatteryReport, Vec<usize>)> {
    let (usable, skipped) = config.admissible(world.len(), fps.len());
    let tests = usable
        .iter()
        .map(|&k| block_frequency_test(world, fps, k, config.significance))
        .collect::<Result<Vec<_>>>()?;
    Ok((BatteryReport::from_tests(config.significance, tests), skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::Symbol;
    use crate::worlds::{lln_report, sample_world};
    use proptest::prelude::*;

    fn coin_world(bits: &[i64]) -> WorldPrefix {
        let symbols: Vec<Symbol> = bits.iter().map(|&b| Symbol::Int(b)).collect();
        WorldPrefix::from_symbols(vec![Symbol::Int(0), Symbol::Int(1)], &symbols).unwrap()
    }

    #[test]
    fn degenerate_space_has_zero_statistic() {
        let fps = FiniteProbabilitySpace::new(vec![Symbol::Int(0), Symbol::Int(1)], vec![1.0, 0.0]).unwrap();
        let w = sample_world(&fps, 500, 1).unwrap();
        for k in 1..=3 {
            let t = block_frequency_test(&w, &fps, k, 0.01).unwrap();
            assert_eq!(t.statistic, 0.0);
            assert!(t.pass);
            assert_eq!(t.degrees_of_freedom, 0);
        }
        assert!(run_battery(&w, &fps, &BatteryConfig::default()).unwrap().pass);
    }

    #[test]
    fn fair_coin_passes() {
        let coin = FiniteProbabilitySpace::fair_coin();
        let w = sample_world(&coin, 10_000, 42).unwrap();
        let t = block_frequency_test(&w, &coin, 1, 0.01).unwrap();
        assert!(t.pass, "{t:?}");
        assert!((t.threshold - 6.634_896_601).abs() < 1e-6);
    }

    #[test]
    fn alternating_world_fails_pairs() {
        let len = 1000;
        let bits: Vec<i64> = (0..len).map(|i| (i % 2) as i64).collect();
        let w = coin_world(&bits);
        let coin = FiniteProbabilitySpace::fair_coin();
        let t = block_frequency_test(&w, &coin, 2, 0.01).unwrap();
        // All n = 500 blocks land on "01", each cell expects n/4:
        // (3n/4)^2/(n/4) + 3 (n/4) = 3n.
        assert!((t.statistic - 1500.0).abs() < 1e-9);
        assert!(!t.pass);
        // k = 1 cannot see the pattern.
        assert!(block_frequency_test(&w, &coin, 1, 0.01).unwrap().pass);
    }

    #[test]
    fn impossible_block_is_infinite() {
        let fps = FiniteProbabilitySpace::new(vec![Symbol::Int(0), Symbol::Int(1)], vec![1.0, 0.0]).unwrap();
        let mut bits = vec![0i64; 100];
        bits[50] = 1;
        let t = block_frequency_test(&coin_world(&bits), &fps, 1, 0.01).unwrap();
        assert_eq!(t.statistic, f64::INFINITY);
        assert_eq!(t.impossible_blocks, 1);
        assert!(!t.pass);
    }

    #[test]
    fn short_world_rejected() {
        let coin = FiniteProbabilitySpace::fair_coin();
        let w = coin_world(&[0, 1, 0]);
        assert!(matches!(
            block_frequency_test(&w, &coin, 1, 0.01),
            Err(Error::InsufficientLength { needed: 20, .. })
        ));
        let (report, skipped) = run_admissible(&coin_world(&vec![0; 100]), &coin, &BatteryConfig::default()).unwrap();
        assert_eq!(report.tests.len(), 2);
        assert_eq!(skipped, vec![3]);
    }

    #[test]
    fn bad_arguments() {
        let coin = FiniteProbabilitySpace::fair_coin();
        let w = sample_world(&coin, 1000, 1).unwrap();
        assert!(block_frequency_test(&w, &coin, 0, 0.01).is_err());
        assert!(block_frequency_test(&w, &coin, 1, 1.5).is_err());
        let other = FiniteProbabilitySpace::uniform(vec!["x".into(), "y".into()]).unwrap();
        assert!(matches!(block_frequency_test(&w, &other, 1, 0.01), Err(Error::ForeignSymbol(_))));
    }

    proptest! {
        #[test]
        fn gross_k1_deviation_fails_battery(p in 0.05f64..0.95, shift in 0.1f64..0.5, seed in any::<u64>()) {
            let claimed = FiniteProbabilitySpace::new(vec![Symbol::Int(0), Symbol::Int(1)], vec![p, 1.0 - p]).unwrap();
            let actual_p = if p + shift < 1.0 { p + shift } else { p - shift };
            prop_assume!(actual_p > 0.0);
            let actual = FiniteProbabilitySpace::new(vec![Symbol::Int(0), Symbol::Int(1)], vec![actual_p, 1.0 - actual_p]).unwrap();
            let w = sample_world(&actual, 4000, seed).unwrap();
            let lln = lln_report(&w, &claimed, 6.0).unwrap();
            prop_assume!(lln.flagged > 0);
            prop_assert!(!run_battery(&w, &claimed, &BatteryConfig::default()).unwrap().pass);
        }

        #[test]
        fn battery_is_deterministic(seed in any::<u64>()) {
            let coin = FiniteProbabilitySpace::fair_coin();
            let w = sample_world(&coin, 2000, seed).unwrap();
            let config = BatteryConfig::default();
            prop_assert_eq!(run_battery(&w, &coin, &config).unwrap(), run_battery(&w, &coin, &config).unwrap());
        }
    }
}
