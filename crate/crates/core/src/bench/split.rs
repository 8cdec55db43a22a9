use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SPLIT_N: usize = 25;
pub const MIN_STRATUM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// 64 / 16 / 20 train / validation / test.
    Benchmark,
    /// 80 / 20 train / validation; the test set comes from elsewhere.
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles each event stratum with `seed` and cuts it by the mode's ratios.
pub fn split(events: &[bool], seed: u64, mode: SplitMode) -> Result<SplitPlan> {
    let n = events.len();
    if n < MIN_SPLIT_N {
        return Err(Error::Split(format!("{n} subjects, need at least {MIN_SPLIT_N}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = SplitPlan {
        seed,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for flag in [true, false] {
        let mut stratum: Vec<usize> = (0..n).filter(|&i| events[i] == flag).collect();
        if stratum.len() < MIN_STRATUM {
            return Err(Error::Split(format!(
                "{} stratum has {} subjects, need at least {MIN_STRATUM}",
                if flag { "event" } else { "censored" },
                stratum.len()
            )));
        }
        stratum.shuffle(&mut rng);
        let m = stratum.len();
        let (n_test, n_val) = match mode {
            SplitMode::Benchmark => {
                let n_test = (m as f64 * 0.2).round() as usize;
                (n_test, ((m - n_test) as f64 * 0.2).round() as usize)
            }
            SplitMode::Simulation => (0, (m as f64 * 0.2).round() as usize),
        };
        plan.test.extend_from_slice(&stratum[..n_test]);
        plan.val.extend_from_slice(&stratum[n_test..n_test + n_val]);
        plan.train.extend_from_slice(&stratum[n_test + n_val..]);
    }
    plan.train.sort_unstable();
    plan.val.sort_unstable();
    plan.test.sort_unstable();
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events(n: usize, k: usize) -> Vec<bool> {
        (0..n).map(|i| i % (n / k) == 0 && i / (n / k) < k).collect()
    }

    #[test]
    fn benchmark_ratios_and_strata() {
        let e = events(100, 30);
        assert_eq!(e.iter().filter(|&&v| v).count(), 30);
        let p = split(&e, 0, SplitMode::Benchmark).unwrap();
        assert_eq!(p.test.len(), 20);
        let test_events = p.test.iter().filter(|&&i| e[i]).count();
        assert!((5..=7).contains(&test_events));
        assert!((p.val.len() as i64 - 16).abs() <= 1);
        assert!((p.train.len() as i64 - 64).abs() <= 1);
    }

    #[test]
    fn partition_and_determinism() {
        let e: Vec<bool> = (0..257).map(|i| (i * 7) % 10 < 7).collect();
        let a = split(&e, 4, SplitMode::Benchmark).unwrap();
        assert_eq!(a, split(&e, 4, SplitMode::Benchmark).unwrap());
        assert_ne!(a, split(&e, 5, SplitMode::Benchmark).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..257).collect::<Vec<_>>());
    }

    #[test]
    fn simulation_mode_has_no_test() {
        let e: Vec<bool> = (0..1000).map(|i| i % 10 < 7).collect();
        let p = split(&e, 1, SplitMode::Simulation).unwrap();
        assert_eq!((p.train.len(), p.val.len(), p.test.len()), (800, 200, 0));
    }

    #[test]
    fn rejects_small_inputs() {
        assert!(split(&[true; 24], 0, SplitMode::Benchmark).is_err());
        let mut e = vec![true; 30];
        e[0] = false;
        e[1] = false;
        assert!(split(&e, 0, SplitMode::Benchmark).is_err());
    }
}
