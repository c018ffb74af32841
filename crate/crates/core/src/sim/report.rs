use serde::{Deserialize, Serialize};

use crate::stats::{self, SampleVector, StatsError, TestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub mean_m: f64,
    pub sd_m: Option<f64>,
    pub shapiro_w: Option<f64>,
    pub shapiro_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub n_trials: usize,
    pub seeds: Vec<u64>,
    pub v: ConditionStats,
    pub va: ConditionStats,
    /// Paired t on V − VA; negative when airflow keeps the hand farther away.
    pub paired_t: Option<f64>,
    pub paired_df: Option<f64>,
    pub paired_p: Option<f64>,
    pub warnings: Vec<String>,
}

fn condition_stats(
    x: &SampleVector<f64>,
    label: &str,
    warnings: &mut Vec<String>,
) -> Result<ConditionStats, StatsError> {
    let s = stats::summarize(x)?;
    let (shapiro_w, shapiro_p) = match stats::shapiro_wilk(x) {
        Ok(r) => (Some(r.statistic), Some(r.p_value)),
        Err(e) => {
            warnings.push(format!("{label}: Shapiro-Wilk not computed: {e}"));
            (None, None)
        }
    };
    Ok(ConditionStats { mean_m: s.mean, sd_m: s.sd, shapiro_w, shapiro_p })
}

/// Summarises matched `(seed, v_mean, va_mean)` triples.
pub fn analyze_pairs(pairs: &[(u64, f64, f64)]) -> Result<TrialReport, StatsError> {
    if pairs.len() < 2 {
        return Err(StatsError::SampleTooSmall { n: pairs.len(), min: 2 });
    }
    let v = SampleVector::new(pairs.iter().map(|p| p.1).collect())?;
    let va = SampleVector::new(pairs.iter().map(|p| p.2).collect())?;
    let mut warnings = Vec::new();
    let v_stats = condition_stats(&v, "V", &mut warnings)?;
    let va_stats = condition_stats(&va, "VA", &mut warnings)?;
    let paired = match stats::paired_t(&v, &va) {
        Ok(r) => Some(r),
        Err(StatsError::ZeroVarianceDifferences) => {
            warnings.push("paired t not computed: differences have zero variance".to_owned());
            None
        }
        Err(e) => return Err(e),
    };
    let field = |f: fn(&TestResult<f64>) -> Option<f64>| paired.as_ref().and_then(f);
    Ok(TrialReport {
        n_trials: pairs.len(),
        seeds: pairs.iter().map(|p| p.0).collect(),
        v: v_stats,
        va: va_stats,
        paired_t: field(|r| Some(r.statistic)),
        paired_df: field(|r| r.df),
        paired_p: field(|r| Some(r.p_value)),
        warnings,
    })
}
