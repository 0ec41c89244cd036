//! JSON reports emitted by `run` and `bench`.

use pimolap_core::engine::PlanCosts;
use pimolap_core::{CostParams, ResultTable, TransferStats};
use serde::Serialize;

use crate::config::{CircuitKind, EngineKind, Geometry, LayoutKind};

/// Configuration echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub params: CostParams,
    pub seed: u64,
    pub sample_fraction: f64,
    pub geometry: Geometry,
    pub records: usize,
    pub pages: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub query: String,
    pub engine: EngineKind,
    pub layout: LayoutKind,
    pub circuit: CircuitKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<ResultTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<TransferStats>,
    /// `host_baseline_bits / pim_to_host_bits`, when both are positive.
    pub reduction_ratio: Option<f64>,
    pub modeled_costs: Option<PlanCosts>,
    pub wall_time_ms: f64,
    pub config: ConfigEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunReport {
    /// Human-readable rendering for `--pretty`.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        if let Some(n) = &self.name {
            out.push_str(&format!("[{n}] "));
        }
        out.push_str(&format!(
            "{} | engine={} layout={} circuit={}\n",
            self.query,
            self.engine.name(),
            self.layout.name(),
            serde_json::to_value(self.circuit).expect("circuit serializes").as_str().unwrap_or("?")
        ));
        if let Some(e) = &self.error {
            out.push_str(&format!("error: {e}\n"));
            return out;
        }
        if let Some(t) = &self.result {
            out.push_str(&t.pretty());
        }
        if let Some(s) = &self.stats {
            out.push_str(&format!(
                "pim->host {} bits, host->pim {} bits, inter-array {} bits, baseline {} bits, col ops {}, cell writes {}, periph rows {}\n",
                s.pim_to_host_bits,
                s.host_to_pim_bits,
                s.inter_array_bits,
                s.host_baseline_bits,
                s.pim_col_ops,
                s.cell_writes,
                s.periph_row_reads
            ));
        }
        match self.reduction_ratio {
            Some(r) => out.push_str(&format!("reduction ratio {r:.3}\n")),
            None => out.push_str("reduction ratio n/a\n"),
        }
        out
    }
}

/// Aggregates for one (engine, layout, circuit) cell of the bench matrix.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigSummary {
    pub engine: EngineKind,
    pub layout: LayoutKind,
    pub circuit: CircuitKind,
    pub queries: usize,
    pub failed: usize,
    /// Geometric mean of the reduction ratios that are defined.
    pub geo_mean_reduction: Option<f64>,
    pub total_pim_to_host_bits: u64,
    pub total_transfer_bits: u64,
    pub total_cell_writes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchSummary {
    pub configs: Vec<ConfigSummary>,
    pub failed: bool,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub reports: Vec<RunReport>,
    pub summary: BenchSummary,
}

impl BenchReport {
    pub fn pretty(&self) -> String {
        let mut out = format!(
            "{:<16} {:<8} {:<11} {:>7} {:>6} {:>12} {:>16}\n",
            "engine", "layout", "circuit", "queries", "failed", "geo-mean", "transfer bits"
        );
        for c in &self.summary.configs {
            let g = c.geo_mean_reduction.map_or("n/a".to_string(), |g| format!("{g:.3}"));
            out.push_str(&format!(
                "{:<16} {:<8} {:<11} {:>7} {:>6} {:>12} {:>16}\n",
                c.engine.name(),
                c.layout.name(),
                serde_json::to_value(c.circuit).expect("circuit serializes").as_str().unwrap_or("?"),
                c.queries,
                c.failed,
                g,
                c.total_transfer_bits
            ));
        }
        for r in self.reports.iter().filter(|r| r.error.is_some()) {
            out.push_str(&format!("FAILED {}: {}\n", r.name.as_deref().unwrap_or(&r.query), r.error.as_deref().unwrap_or("")));
        }
        out
    }
}

/// Geometric mean; `None` for an empty input.
pub fn geo_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geo_mean_of_two_and_eight_is_four() {
        assert!((geo_mean(&[2.0, 8.0]).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(geo_mean(&[]), None);
    }
}
