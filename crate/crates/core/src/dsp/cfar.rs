use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell-averaging CFAR window, sizes counted per side of the cell under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarConfig {
    pub training_cells: usize,
    pub guard_cells: usize,
    pub threshold_factor: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            training_cells: 8,
            guard_cells: 2,
            threshold_factor: 4.0,
        }
    }
}

impl CfarConfig {
    /// Threshold factor giving false-alarm probability `pfa` on exponentially
    /// distributed (square-law detected Gaussian) noise with two full
    /// training windows: `N * (pfa^(-1/N) - 1)` with `N = 2 * training_cells`.
    pub fn for_pfa(training_cells: usize, guard_cells: usize, pfa: f64) -> Self {
        let n = (2 * training_cells) as f64;
        Self {
            training_cells,
            guard_cells,
            threshold_factor: n * (pfa.powf(-1.0 / n) - 1.0),
        }
    }

    fn validate(&self, len: usize) -> Result<()> {
        if self.training_cells == 0 {
            return Err(Error::Config("cfar: training_cells must be at least 1".into()));
        }
        if !(self.threshold_factor > 0.0) {
            return Err(Error::Config("cfar: threshold_factor must be positive".into()));
        }
        let span = 2 * (self.training_cells + self.guard_cells);
        if len <= span {
            return Err(Error::Config(format!(
                "cfar: window of {} cells does not fit in a {len}-cell profile",
                span + 1
            )));
        }
        Ok(())
    }
}

/// Indices whose power exceeds `threshold_factor` times the mean of their
/// training cells. Near the edges, where one side's window would leave the
/// array, only the complete side is used.
pub fn cfar_detect(power: &[f64], cfg: &CfarConfig) -> Result<Vec<usize>> {
    cfg.validate(power.len())?;
    let n = power.len();
    let reach = cfg.training_cells + cfg.guard_cells;

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for p in power {
        prefix.push(prefix.last().unwrap() + p);
    }
    let window_sum = |lo: usize, hi: usize| prefix[hi] - prefix[lo];

    let mut hits = Vec::new();
    for (i, &p) in power.iter().enumerate() {
        let left = (i >= reach).then(|| window_sum(i - reach, i - cfg.guard_cells));
        let right = (i + reach < n).then(|| window_sum(i + cfg.guard_cells + 1, i + reach + 1));
        let (sum, cells) = match (left, right) {
            (Some(l), Some(r)) => (l + r, 2 * cfg.training_cells),
            (Some(s), None) | (None, Some(s)) => (s, cfg.training_cells),
            (None, None) => unreachable!("validated window always leaves one complete side"),
        };
        if p > cfg.threshold_factor * sum / cells as f64 {
            hits.push(i);
        }
    }
    Ok(hits)
}
