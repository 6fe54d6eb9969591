use serde::Serialize;

/// Symmetric absolute percentage error of one prediction, in `[0, 100]`.
/// Both zero counts as a perfect prediction.
pub fn smape(pred: f64, actual: f64) -> f64 {
    let denom = pred + actual;
    if denom == 0.0 {
        return 0.0;
    }
    100.0 * ((pred - actual).abs() / denom)
}

/// Unweighted mean of per-pair SMAPE; `None` when there are no pairs.
pub fn mean_smape(pairs: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let (sum, n) = pairs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), (p, a)| (s + smape(p, a), n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Overhead and savings of a run relative to a reference run, in percent.
/// Average power is `energy / time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SavingMetrics {
    pub overhead_pct: f64,
    pub energy_saving_pct: f64,
    pub power_saving_pct: f64,
}

impl SavingMetrics {
    pub fn against(t_base: f64, e_base: f64, t: f64, e: f64) -> Self {
        let p_base = e_base / t_base;
        let p = e / t;
        Self {
            overhead_pct: 100.0 * (t - t_base) / t_base,
            energy_saving_pct: 100.0 * (e_base - e) / e_base,
            power_saving_pct: 100.0 * (p_base - p) / p_base,
        }
    }

    /// Relative residual of `(1 - es) = (1 + oh)(1 - ps)`.
    pub fn identity_residual(&self) -> f64 {
        let lhs = 1.0 - self.energy_saving_pct / 100.0;
        let rhs = (1.0 + self.overhead_pct / 100.0) * (1.0 - self.power_saving_pct / 100.0);
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        (lhs - rhs).abs() / scale
    }

    pub fn satisfies_identity(&self, tol: f64) -> bool {
        self.identity_residual() <= tol
    }
}
