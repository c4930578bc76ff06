//! Unbiased pass@k estimator.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub n: u32,
    pub c: u32,
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid pass@k cell n={n} c={c} k={k} (need 0 <= c <= n and 1 <= k <= n)")]
pub struct CellError {
    pub n: u32,
    pub c: u32,
    pub k: u32,
}

impl ScoreCell {
    pub fn new(n: u32, c: u32, k: u32) -> Result<Self, CellError> {
        if c > n || k == 0 || k > n {
            return Err(CellError { n, c, k });
        }
        Ok(Self { n, c, k })
    }

    /// Probability that at least one of `k` samples drawn without
    /// replacement from `n`, `c` of them correct, is correct.
    pub fn pass_at_k(&self) -> f64 {
        let (n, c, k) = (self.n as f64, self.c as f64, self.k);
        if self.n - self.c < k {
            return 1.0;
        }
        let mut miss = 1.0;
        for i in 0..k {
            let i = i as f64;
            miss *= (n - c - i) / (n - i);
        }
        1.0 - miss
    }
}

pub fn pass_at_k(n: u32, c: u32, k: u32) -> Result<f64, CellError> {
    Ok(ScoreCell::new(n, c, k)?.pass_at_k())
}
