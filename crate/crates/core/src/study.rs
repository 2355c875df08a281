//! Estimation pipelines shared by the CLI, and the Monte Carlo study harness
//! that runs them over simulated samples.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ec::{ec_curves, ConnectivityRule, EcCurve, StepCurve};
use crate::eec::{nonparametric_band, EecModel, LevelGrid, SEARCH_INTERVAL};
use crate::error::{Error, Result};
use crate::estimate::{
    bhpe, hpe_sample, lkc_regression, normalize_known_mean, standardize, Estimator, LkcVector,
    ResidualSample,
};
use crate::grid::FieldSample;
use crate::rng::SeedStream;
use crate::sim::{FieldConfig, FieldModel};

/// How raw samples enter the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Mean zero and variance one are known: fields are used as they are.
    #[default]
    Theoretical,
    /// Mean and variance are unknown: fields are standardized first.
    Experimental,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Theoretical => "theoretical",
            Scenario::Experimental => "experimental",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theoretical" => Ok(Scenario::Theoretical),
            "experimental" => Ok(Scenario::Experimental),
            _ => Err(Error::InvalidArgument(format!("unknown scenario {s:?}"))),
        }
    }
}

/// Settings common to every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub scenario: Scenario,
    pub rule: ConnectivityRule,
    pub max_order: usize,
    pub bootstrap_m: usize,
    /// Levels for the regression estimator.
    pub levels: LevelGrid,
}

impl Pipeline {
    /// Defaults for a field of dimension `dim`: `D = dim`, the minimal
    /// connectivity and `M = 1000`.
    pub fn for_dim(dim: usize, scenario: Scenario) -> Result<Self> {
        Ok(Pipeline {
            scenario,
            rule: ConnectivityRule::default_for(dim)?,
            max_order: dim,
            bootstrap_m: 1000,
            levels: LevelGrid::default(),
        })
    }

    /// Per-field EC curves of the estimator input: the raw fields, or
    /// `sqrt(N-1) R_n` in the experimental scenario.
    pub fn curves(&self, sample: &FieldSample) -> Result<Vec<EcCurve>> {
        match self.scenario {
            Scenario::Theoretical => ec_curves(sample, self.rule),
            Scenario::Experimental => {
                let r = standardize(sample)?;
                ec_curves(&r.scaled(((sample.len() - 1) as f64).sqrt()), self.rule)
            }
        }
    }

    /// Bootstrap input: standardized residuals, or in the theoretical
    /// scenario the fields normalized without centering.
    pub fn residuals(&self, sample: &FieldSample) -> Result<ResidualSample> {
        match self.scenario {
            Scenario::Theoretical => normalize_known_mean(sample),
            Scenario::Experimental => standardize(sample),
        }
    }

    pub fn hpe(&self, curves: &[EcCurve]) -> Result<LkcVector> {
        hpe_sample(curves, self.max_order, curves.len() >= 2)
    }

    pub fn regression(&self, curves: &[EcCurve]) -> Result<LkcVector> {
        let steps: Vec<StepCurve> = curves.iter().map(EcCurve::to_step).collect();
        let levels: Vec<f64> = self.levels.points().collect();
        let mut v = lkc_regression(&StepCurve::mean(&steps)?, &levels, self.max_order)?;
        v.n_used = curves.len();
        Ok(v)
    }

    pub fn bhpe(&self, sample: &FieldSample, stream: &SeedStream) -> Result<LkcVector> {
        bhpe(
            &self.residuals(sample)?,
            self.bootstrap_m,
            self.max_order,
            self.rule,
            stream,
        )
    }

    /// Runs one estimator on a raw sample. Bootstrap multipliers come from
    /// `stream`.
    pub fn estimate(
        &self,
        sample: &FieldSample,
        estimator: Estimator,
        stream: &SeedStream,
    ) -> Result<LkcVector> {
        match estimator {
            Estimator::Hpe => self.hpe(&self.curves(sample)?),
            Estimator::Regression => self.regression(&self.curves(sample)?),
            Estimator::Bhpe => self.bhpe(sample, stream),
        }
    }
}

fn default_alpha_level() -> f64 {
    0.05
}

/// Pointwise band coverage of the true EEC at the given levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSpec {
    pub levels: Vec<f64>,
    #[serde(default = "default_alpha_level")]
    pub alpha: f64,
}

fn default_connectivity() -> u32 {
    4
}

fn default_bootstrap_m() -> usize {
    1000
}

/// A Monte Carlo study, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub scenario: Scenario,
    pub estimators: Vec<Estimator>,
    pub field: FieldConfig,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_connectivity")]
    pub connectivity: u32,
    #[serde(default = "default_bootstrap_m")]
    pub bootstrap_m: usize,
    /// Band coverage columns for HPE rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageSpec>,
    /// Threshold columns (`EEC(u) = alpha`) for HPE rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: StudyConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("study config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.runs < 1 {
            return bad("runs must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return bad("no estimators".into());
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return bad(format!("sample sizes must be positive, got {:?}", self.n));
        }
        let needs_two = self.scenario == Scenario::Experimental
            || self.estimators.contains(&Estimator::Bhpe)
            || self.coverage.is_some()
            || self.threshold.is_some();
        if needs_two && self.n.iter().any(|&n| n < 2) {
            return bad("this study needs N >= 2".into());
        }
        if let Some(c) = &self.coverage {
            if c.levels.iter().any(|u| !u.is_finite()) || !(c.alpha > 0.0 && c.alpha < 1.0) {
                return bad("bad coverage spec".into());
            }
        }
        self.field.model()?;
        Ok(())
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        Ok(Pipeline {
            scenario: self.scenario,
            rule: ConnectivityRule::from_code(self.connectivity, 2)?,
            max_order: 2,
            bootstrap_m: self.bootstrap_m,
            levels: LevelGrid::default(),
        })
    }
}

/// Coverage columns of one HPE row at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageCell {
    pub covered: bool,
    pub half_width: f64,
    /// Half-width of the nonparametric band from the same EC curves.
    pub np_half_width: f64,
}

/// One replicate of one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub estimator: Estimator,
    pub n: usize,
    pub run: usize,
    pub lkc: Vec<f64>,
    pub coverage: Vec<CoverageCell>,
    /// `(u_hat, se)`.
    pub threshold: Option<(f64, Option<f64>)>,
}

impl StudyRow {
    /// The numeric columns after `estimator,N,run`, blank ones as `None`.
    fn numbers(&self, config: &StudyConfig) -> Vec<Option<f64>> {
        let mut out: Vec<Option<f64>> = self.lkc.iter().map(|&v| Some(v)).collect();
        if let Some(c) = &config.coverage {
            for k in 0..c.levels.len() {
                match self.coverage.get(k) {
                    Some(cell) => out.extend([
                        Some(if cell.covered { 1.0 } else { 0.0 }),
                        Some(cell.half_width),
                        Some(cell.np_half_width),
                    ]),
                    None => out.extend([None, None, None]),
                }
            }
        }
        if config.threshold.is_some() {
            match self.threshold {
                Some((u, se)) => out.extend([Some(u), se]),
                None => out.extend([None, None]),
            }
        }
        out
    }
}

/// Mean and standard deviation of every numeric column over the runs of
/// one `(estimator, N)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: Estimator,
    pub n: usize,
    pub mean: Vec<Option<f64>>,
    pub sd: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub truth: LkcVector,
    pub rows: Vec<StudyRow>,
}

impl StudyResult {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["estimator", "N", "run"].map(String::from).to_vec();
        h.extend((1..=self.truth.lkc.len()).map(|d| format!("L{d}")));
        if let Some(c) = &self.config.coverage {
            for u in &c.levels {
                h.extend([format!("cover@{u}"), format!("hw@{u}"), format!("np_hw@{u}")]);
            }
        }
        if self.config.threshold.is_some() {
            h.extend(["u_hat".to_string(), "u_se".to_string()]);
        }
        h
    }

    pub fn rows_for(&self, estimator: Estimator, n: usize) -> impl Iterator<Item = &StudyRow> {
        self.rows
            .iter()
            .filter(move |r| r.estimator == estimator && r.n == n)
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for &n in &self.config.n {
            for &estimator in &self.config.estimators {
                let cols: Vec<Vec<Option<f64>>> = self
                    .rows_for(estimator, n)
                    .map(|r| r.numbers(&self.config))
                    .collect();
                let width = cols.first().map_or(0, Vec::len);
                let (mut mean, mut sd) = (Vec::new(), Vec::new());
                for j in 0..width {
                    let xs: Vec<f64> = cols.iter().filter_map(|c| c[j]).collect();
                    let (m, s) = mean_sd(&xs);
                    mean.push(m);
                    sd.push(s);
                }
                out.push(SummaryRow { estimator, n, mean, sd });
            }
        }
        out
    }

    /// One row per `(estimator, N, run)`, then `mean` and `sd` rows per
    /// `(estimator, N)` with `run` set to the statistic's name.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<study csv>", e);
        let cell = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(out, "{}", self.header().join(",")).map_err(io)?;
        for r in &self.rows {
            let nums: Vec<String> = r.numbers(&self.config).iter().map(cell).collect();
            writeln!(out, "{},{},{},{}", r.estimator, r.n, r.run, nums.join(",")).map_err(io)?;
        }
        for s in self.summary() {
            for (label, values) in [("mean", &s.mean), ("sd", &s.sd)] {
                let nums: Vec<String> = values.iter().map(cell).collect();
                writeln!(out, "{},{},{label},{}", s.estimator, s.n, nums.join(",")).map_err(io)?;
            }
        }
        Ok(())
    }
}

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = (xs.len() >= 2)
        .then(|| (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(m), sd)
}

/// The seed stream of replicate `run` at sample size `n`. Simulation draws
/// from its `"simulate"` child and the bootstrap from `"bootstrap"`.
pub fn replicate_stream(seed: u64, n: usize, run: usize) -> SeedStream {
    SeedStream::new(seed)
        .child("study")
        .child(&format!("N={n}"))
        .index(run as u64)
}

/// Runs every `(N, run)` replicate, in parallel over runs. Rows come out in
/// `(N, run, estimator)` order whatever the thread count.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let model = config.field.model()?;
    let pipeline = config.pipeline()?;
    let truth = model.true_lkc();
    let truth_eec = EecModel::new(truth.clone())?;
    let mut rows = Vec::new();
    for &n in &config.n {
        let per_run: Vec<Vec<StudyRow>> = (0..config.runs)
            .into_par_iter()
            .map(|run| replicate(config, &model, &pipeline, &truth_eec, n, run))
            .collect::<Result<_>>()?;
        rows.extend(per_run.into_iter().flatten());
    }
    Ok(StudyResult {
        config: config.clone(),
        truth,
        rows,
    })
}

fn replicate(
    config: &StudyConfig,
    model: &FieldModel,
    pipeline: &Pipeline,
    truth: &EecModel,
    n: usize,
    run: usize,
) -> Result<Vec<StudyRow>> {
    let stream = replicate_stream(config.seed, n, run);
    let sample = model.simulate(n, &stream.child("simulate"))?;
    let needs_curves = config
        .estimators
        .iter()
        .any(|e| matches!(e, Estimator::Hpe | Estimator::Regression));
    let curves = if needs_curves {
        pipeline.curves(&sample)?
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    for &estimator in &config.estimators {
        let lkc = match estimator {
            Estimator::Hpe => pipeline.hpe(&curves)?,
            Estimator::Regression => pipeline.regression(&curves)?,
            Estimator::Bhpe => pipeline.bhpe(&sample, &stream.child("bootstrap"))?,
        };
        let mut row = StudyRow {
            estimator,
            n,
            run,
            lkc: lkc.lkc.clone(),
            coverage: Vec::new(),
            threshold: None,
        };
        if estimator == Estimator::Hpe {
            let fitted = EecModel::new(lkc)?;
            if let Some(c) = &config.coverage {
                for &u in &c.levels {
                    let (lo, hi) = fitted.band(u, c.alpha)?;
                    let (nlo, nhi) = nonparametric_band(&curves, u, c.alpha)?;
                    let target = truth.evaluate(u);
                    row.coverage.push(CoverageCell {
                        covered: lo <= target && target <= hi,
                        half_width: 0.5 * (hi - lo),
                        np_half_width: 0.5 * (nhi - nlo),
                    });
                }
            }
            if let Some(alpha) = config.threshold {
                let t = fitted.solve_threshold(alpha, SEARCH_INTERVAL)?;
                row.threshold = Some((t.u_hat, t.se));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
