//! Treatment-effect estimation from one forest per arm.
//!
//! The control and treated rows are fitted separately. The two forest
//! measures at `x` estimate the conditional laws of `Y(0)` and `Y(1)`; their
//! mean difference estimates the CATE and their Wasserstein distance gives
//! the distribution-level effect `Lambda_p(x)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{fit, Forest, ForestFile, ForestParams};
use crate::measure::{wasserstein, DiscreteMeasure};
use crate::synth::HTEDataset;

pub const HTE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HTEModel {
    pub forest0: Forest,
    pub forest1: Forest,
    /// Original row index of each control-forest training row.
    pub group0: Vec<usize>,
    /// Original row index of each treated-forest training row.
    pub group1: Vec<usize>,
}

fn arm_name(arm: u8) -> &'static str {
    if arm == 0 {
        "control"
    } else {
        "treated"
    }
}

/// Fits one forest per arm.
pub fn fit_hte(data: &HTEDataset, params0: &ForestParams, params1: &ForestParams) -> Result<HTEModel> {
    for arm in [0u8, 1] {
        if !data.t.contains(&arm) {
            return Err(Error::EmptyArm(arm_name(arm)));
        }
    }
    let mut fitted = Vec::with_capacity(2);
    for (arm, params) in [(0u8, params0), (1u8, params1)] {
        let rows = data.arm_rows(arm);
        if rows.len() < params.nodesize.max(2) {
            return Err(Error::InvalidData(format!(
                "{} arm has {} rows, fewer than nodesize {}",
                arm_name(arm),
                rows.len(),
                params.nodesize.max(2)
            )));
        }
        let forest = fit(&data.arm(arm)?, params)?;
        fitted.push((forest, rows));
    }
    let (forest1, group1) = fitted.pop().expect("two arms");
    let (forest0, group0) = fitted.pop().expect("two arms");
    Ok(HTEModel { forest0, forest1, group0, group1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HTEFile {
    pub version: u32,
    pub forest0: ForestFile,
    pub forest1: ForestFile,
    pub group0: Vec<usize>,
    pub group1: Vec<usize>,
}

/// One out-of-bag `Lambda_p` value per training row that has at least one
/// out-of-bag tree; rows without one are listed in `skipped`.
#[derive(Debug, Clone, PartialEq)]
pub struct OobLambda {
    pub values: Vec<(usize, f64)>,
    pub skipped: Vec<usize>,
}

impl HTEModel {
    pub fn forest(&self, arm: u8) -> Result<&Forest> {
        match arm {
            0 => Ok(&self.forest0),
            1 => Ok(&self.forest1),
            other => Err(Error::InvalidArm(other)),
        }
    }

    pub fn dim_x(&self) -> usize {
        self.forest0.dim_x()
    }

    /// The estimated conditional law of `Y(arm)` at `x`.
    pub fn estimate_pi(&self, arm: u8, x: &[f64]) -> Result<DiscreteMeasure> {
        self.forest(arm)?.predict_measure(x)
    }

    /// Difference of the two arms' forest means.
    pub fn estimate_cate(&self, x: &[f64]) -> Result<f64> {
        if self.forest0.dim_y() != 1 || self.forest1.dim_y() != 1 {
            return Err(Error::UnsupportedOutputDim("cate"));
        }
        Ok(self.forest1.predict_mean(x)?[0] - self.forest0.predict_mean(x)?[0])
    }

    /// `W_p` between the two estimated conditional laws at `x`.
    pub fn lambda_p(&self, x: &[f64], p: f64) -> Result<f64> {
        crate::measure::check_order(p)?;
        self.check_arms()?;
        wasserstein(&self.estimate_pi(0, x)?, &self.estimate_pi(1, x)?, p)
    }

    fn check_arms(&self) -> Result<()> {
        if self.forest0.dim_y() != self.forest1.dim_y() {
            return Err(Error::DimensionMismatch { expected: self.forest0.dim_y(), got: self.forest1.dim_y() });
        }
        if self.forest0.dim_x() != self.forest1.dim_x() {
            return Err(Error::DimensionMismatch { expected: self.forest0.dim_x(), got: self.forest1.dim_x() });
        }
        Ok(())
    }

    /// `Lambda_p` at every training row, where row `i`'s own arm forest only
    /// uses trees whose subsample left `i` out and the other arm's forest,
    /// which never saw `i`, uses all of its trees. `x_of(i)` returns the
    /// covariates of original row `i`.
    pub fn oob_lambda<'a>(&self, p: f64, x_of: impl Fn(usize) -> &'a [f64] + Sync) -> Result<OobLambda> {
        crate::measure::check_order(p)?;
        self.check_arms()?;
        let mut jobs: Vec<(u8, usize, usize)> = Vec::with_capacity(self.group0.len() + self.group1.len());
        jobs.extend(self.group0.iter().enumerate().map(|(local, &row)| (0, local, row)));
        jobs.extend(self.group1.iter().enumerate().map(|(local, &row)| (1, local, row)));
        jobs.sort_by_key(|j| j.2);

        let results: Vec<(usize, Option<f64>)> = jobs
            .par_iter()
            .map(|&(arm, local, row)| {
                let x = x_of(row);
                let own = self.forest(arm)?;
                let other = self.forest(1 - arm)?;
                let Some(w) = own.weights_over(x, |j| !own.trees()[j].contains_row(local)) else {
                    return Ok((row, None));
                };
                let own_measure = own.measure_from_weights(&w)?;
                let other_measure = other.predict_measure(x)?;
                let value = if arm == 0 {
                    wasserstein(&own_measure, &other_measure, p)?
                } else {
                    wasserstein(&other_measure, &own_measure, p)?
                };
                Ok((row, Some(value)))
            })
            .collect::<Result<_>>()?;

        let mut out = OobLambda { values: Vec::new(), skipped: Vec::new() };
        for (row, v) in results {
            match v {
                Some(v) => out.values.push((row, v)),
                None => out.skipped.push(row),
            }
        }
        Ok(out)
    }

    /// The same model with the arm labels exchanged.
    pub fn swap_arms(&self) -> Self {
        Self {
            forest0: self.forest1.clone(),
            forest1: self.forest0.clone(),
            group0: self.group1.clone(),
            group1: self.group0.clone(),
        }
    }

    pub fn to_file(&self) -> HTEFile {
        HTEFile {
            version: HTE_FORMAT_VERSION,
            forest0: self.forest0.to_file(),
            forest1: self.forest1.to_file(),
            group0: self.group0.clone(),
            group1: self.group1.clone(),
        }
    }

    pub fn from_file(file: HTEFile) -> Result<Self> {
        if file.version != HTE_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", file.version)));
        }
        let forest0 = Forest::from_file(file.forest0)?;
        let forest1 = Forest::from_file(file.forest1)?;
        if file.group0.len() != forest0.n() || file.group1.len() != forest1.n() {
            return Err(Error::Format("group sizes do not match the forests' training rows".into()));
        }
        let mut all: Vec<usize> = file.group0.iter().chain(&file.group1).copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Format("control and treated groups overlap".into()));
        }
        let model = Self { forest0, forest1, group0: file.group0, group1: file.group1 };
        model.check_arms().map_err(|e| Error::Format(e.to_string()))?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

/// Detects whether a JSON model text holds a two-arm model.
pub fn is_hte_json(value: &serde_json::Value) -> bool {
    value.get("forest0").is_some() && value.get("forest1").is_some()
}
