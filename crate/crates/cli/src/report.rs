//! The documented JSON/CSV report shapes emitted by `plan` and `sweep`.

use serde::Serialize;

use proscale_core::costmodel::FlopsReport;
use proscale_core::encoder::EncoderConfig;
use proscale_core::pyramid::TokenCounts;

use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
pub struct TokensSection {
    #[serde(rename = "K1")]
    pub k1: usize,
    #[serde(rename = "K2")]
    pub k2: usize,
    #[serde(rename = "K3")]
    pub k3: usize,
}

#[derive(Debug, Serialize)]
pub struct MacsSection {
    pub stages: Vec<i64>,
    pub embedding: i64,
    pub trc: i64,
    pub total: i64,
}

/// The stable-key plan report; field order here is the emitted key order.
#[derive(Debug, Serialize)]
pub struct PlanReport {
    pub p1: usize,
    pub p2: usize,
    pub p3: usize,
    pub tokens: TokensSection,
    pub macs: MacsSection,
    pub baseline_total: Option<i64>,
    pub reduction_pct: Option<f64>,
}

fn narrow(value: i128) -> Result<i64> {
    i64::try_from(value)
        .map_err(|_| CliError::Validation(format!("mac count {} exceeds report range", value)))
}

impl PlanReport {
    pub fn from_flops(config: &EncoderConfig, counts: &TokenCounts, report: &FlopsReport) -> Result<PlanReport> {
        Ok(PlanReport {
            p1: config.p1,
            p2: config.p2,
            p3: config.p3,
            tokens: TokensSection { k1: counts.k1, k2: counts.k2, k3: counts.k3 },
            macs: MacsSection {
                stages: report
                    .per_stage
                    .iter()
                    .map(|s| narrow(s.macs))
                    .collect::<Result<_>>()?,
                embedding: narrow(report.embedding_macs)?,
                trc: narrow(report.trc_macs)?,
                total: narrow(report.total_macs)?,
            },
            baseline_total: report.baseline_total_macs.map(narrow).transpose()?,
            reduction_pct: report.reduction_pct,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("report serialization: {}", e)))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "p1,p2,p3,K1,K2,K3,stage1_macs,stage2_macs,stage3_macs,embedding_macs,trc_macs,total_macs,baseline_total,reduction_pct\n",
        );
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.p1,
            self.p2,
            self.p3,
            self.tokens.k1,
            self.tokens.k2,
            self.tokens.k3,
            self.macs.stages.first().copied().unwrap_or(0),
            self.macs.stages.get(1).copied().unwrap_or(0),
            self.macs.stages.get(2).copied().unwrap_or(0),
            self.macs.embedding,
            self.macs.trc,
            self.macs.total,
            self.baseline_total.map_or(String::new(), |v| v.to_string()),
            self.reduction_pct.map_or(String::new(), |v| format!("{:.6}", v)),
        ));
        out
    }
}
