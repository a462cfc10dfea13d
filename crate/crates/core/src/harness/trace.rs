use serde::{Deserialize, Serialize};

use super::config::RegretMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub instance: usize,
    pub arm: usize,
    pub optimal_arm: usize,
    /// Instantaneous regret (arrival-weighted in weighted mode).
    pub regret: f64,
    pub forced: bool,
}

/// Everything recorded during one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub seed: u64,
    pub mode: RegretMode,
    pub n_instances: usize,
    pub steps: Vec<StepRecord>,
    /// Cumulative regret after each step.
    pub cumulative: Vec<f64>,
    /// `per_instance_cumulative[t][j]`: instance `j`'s cumulative regret after step `t`.
    pub per_instance_cumulative: Vec<Vec<f64>>,
    /// Largest context norm seen.
    pub x_max: f64,
}

impl RegretTrace {
    pub(crate) fn new(seed: u64, mode: RegretMode, n_instances: usize, horizon: usize) -> Self {
        Self {
            seed,
            mode,
            n_instances,
            steps: Vec::with_capacity(horizon),
            cumulative: Vec::with_capacity(horizon),
            per_instance_cumulative: Vec::with_capacity(horizon),
            x_max: 0.0,
        }
    }

    /// Append a step whose regret is split across instances as `shares`.
    pub(crate) fn push(&mut self, record: StepRecord, shares: &[(usize, f64)]) {
        let prev = self.cumulative.last().copied().unwrap_or(0.0);
        let mut inst = self
            .per_instance_cumulative
            .last()
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_instances]);
        for &(j, r) in shares {
            inst[j] += r;
        }
        self.cumulative.push(prev + record.regret);
        self.per_instance_cumulative.push(inst);
        self.steps.push(record);
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn final_instance_regret(&self, instance: usize) -> f64 {
        self.per_instance_cumulative.last().map(|v| v[instance]).unwrap_or(0.0)
    }

    /// Arrivals per instance.
    pub fn arrivals(&self) -> Vec<u64> {
        let mut counts = vec![0; self.n_instances];
        for s in &self.steps {
            counts[s.instance] += 1;
        }
        counts
    }
}

/// Pointwise summary of a family of curves.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub q10: Vec<f64>,
    pub q50: Vec<f64>,
    pub q90: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl CurveStats {
    /// Summarize equal-length curves point by point.
    pub fn from_curves(curves: &[&[f64]]) -> Self {
        let len = curves.first().map_or(0, |c| c.len());
        let mut out = CurveStats::default();
        let mut column = Vec::with_capacity(curves.len());
        for t in 0..len {
            column.clear();
            column.extend(curves.iter().map(|c| c[t]));
            let (m, s) = mean_sd(&column);
            column.sort_by(f64::total_cmp);
            out.mean.push(m);
            out.sd.push(s);
            out.q10.push(quantile_sorted(&column, 0.1));
            out.q50.push(quantile_sorted(&column, 0.5));
            out.q90.push(quantile_sorted(&column, 0.9));
        }
        out
    }
}

/// Replication traces and their pointwise summaries.
#[derive(Debug, Clone)]
pub struct AggregateResult {
    pub seeds: Vec<u64>,
    pub total: CurveStats,
    pub per_instance: Vec<CurveStats>,
    pub traces: Vec<RegretTrace>,
}

impl AggregateResult {
    pub fn from_traces(traces: Vec<RegretTrace>) -> Self {
        let seeds = traces.iter().map(|t| t.seed).collect();
        let totals: Vec<&[f64]> = traces.iter().map(|t| t.cumulative.as_slice()).collect();
        let total = CurveStats::from_curves(&totals);
        let n_instances = traces.first().map_or(0, |t| t.n_instances);
        let per_instance = (0..n_instances)
            .map(|j| {
                let curves: Vec<Vec<f64>> = traces
                    .iter()
                    .map(|t| t.per_instance_cumulative.iter().map(|row| row[j]).collect())
                    .collect();
                let refs: Vec<&[f64]> = curves.iter().map(Vec::as_slice).collect();
                CurveStats::from_curves(&refs)
            })
            .collect();
        AggregateResult {
            seeds,
            total,
            per_instance,
            traces,
        }
    }

    pub fn final_regrets(&self) -> Vec<f64> {
        self.traces.iter().map(RegretTrace::final_regret).collect()
    }

    pub fn final_instance_regrets(&self, instance: usize) -> Vec<f64> {
        self.traces.iter().map(|t| t.final_instance_regret(instance)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert!((quantile_sorted(&v, 0.1) - 1.4).abs() < 1e-12);
        assert!((quantile_sorted(&v, 0.9) - 4.6).abs() < 1e-12);
        assert_eq!(quantile_sorted(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn sample_sd() {
        let (m, s) = mean_sd(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_sd(&[4.0]).1, 0.0);
    }

    #[test]
    fn trace_push_accumulates() {
        let mut tr = RegretTrace::new(0, RegretMode::Realized, 2, 3);
        for (t, j, r) in [(1, 0, 0.5), (2, 1, 0.25), (3, 0, 1.0)] {
            tr.push(
                StepRecord {
                    t,
                    instance: j,
                    arm: 0,
                    optimal_arm: 1,
                    regret: r,
                    forced: false,
                },
                &[(j, r)],
            );
        }
        assert_eq!(tr.cumulative, vec![0.5, 0.75, 1.75]);
        assert_eq!(tr.per_instance_cumulative[2], vec![1.5, 0.25]);
        assert_eq!(tr.arrivals(), vec![2, 1]);
    }
}
