//! Observed-versus-expected correct counts per Model×Practice(×Bloom) cell.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fdr::bh_fdr;
use super::glmm::GlmmFit;
use super::{normal_two_sided_p, StatsError};
use crate::corpus::{Bloom, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualGrouping {
    ModelPractice,
    ModelPracticeBloom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualOptions {
    pub grouping: ResidualGrouping,
    pub alpha: f64,
    pub z_cut: f64,
    /// When false, BH survival alone flags a cell.
    pub require_z: bool,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self {
            grouping: ResidualGrouping::ModelPractice,
            alpha: 0.05,
            z_cut: 3.0,
            require_z: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Better,
    Worse,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Better => "better",
            CellStatus::Worse => "worse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCell {
    pub model_id: String,
    pub practice_id: String,
    pub bloom: Option<Bloom>,
    pub n: usize,
    pub observed: f64,
    pub expected: f64,
    pub variance: f64,
    pub z: f64,
    pub p_value: f64,
    pub bh_reject: bool,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub cells: Vec<ResidualCell>,
    /// Cells dropped because every fitted probability was 0 or 1.
    pub excluded: Vec<String>,
    pub n_better: usize,
    pub n_worse: usize,
}

impl ResidualReport {
    pub fn n_flagged(&self) -> usize {
        self.n_better + self.n_worse
    }
}

pub fn residual_cells(
    fit: &GlmmFit,
    trials: &[TrialRecord],
    options: &ResidualOptions,
) -> Result<ResidualReport, StatsError> {
    type Key = (String, String, Option<Bloom>);
    let mut agg: BTreeMap<Key, (usize, f64, f64, f64)> = BTreeMap::new();
    for t in trials {
        let bloom = match options.grouping {
            ResidualGrouping::ModelPractice => None,
            ResidualGrouping::ModelPracticeBloom => Some(t.bloom),
        };
        let p = fit.fitted(t)?;
        let e = agg
            .entry((t.model_id.clone(), t.practice_id.clone(), bloom))
            .or_insert((0, 0.0, 0.0, 0.0));
        e.0 += 1;
        e.1 += f64::from(u8::from(t.correct));
        e.2 += p;
        e.3 += p * (1.0 - p);
    }

    let mut cells = Vec::with_capacity(agg.len());
    let mut excluded = Vec::new();
    for ((model_id, practice_id, bloom), (n, observed, expected, variance)) in agg {
        if variance <= 0.0 {
            excluded.push(match bloom {
                Some(b) => format!("{model_id}/{practice_id}/{b}"),
                None => format!("{model_id}/{practice_id}"),
            });
            log::warn!("residual cell {model_id}/{practice_id} has zero variance; excluded");
            continue;
        }
        let z = (observed - expected) / variance.sqrt();
        cells.push(ResidualCell {
            model_id,
            practice_id,
            bloom,
            n,
            observed,
            expected,
            variance,
            z,
            p_value: normal_two_sided_p(z),
            bh_reject: false,
            status: CellStatus::Ok,
        });
    }

    let p: Vec<f64> = cells.iter().map(|c| c.p_value).collect();
    let mask = bh_fdr(&p, options.alpha);
    let (mut n_better, mut n_worse) = (0, 0);
    for (cell, reject) in cells.iter_mut().zip(mask) {
        cell.bh_reject = reject;
        let flagged = reject && (!options.require_z || cell.z.abs() > options.z_cut);
        if flagged {
            if cell.z > 0.0 {
                cell.status = CellStatus::Better;
                n_better += 1;
            } else {
                cell.status = CellStatus::Worse;
                n_worse += 1;
            }
        }
    }
    Ok(ResidualReport {
        cells,
        excluded,
        n_better,
        n_worse,
    })
}
