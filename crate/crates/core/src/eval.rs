//! Predictive evaluation: misclassification rate and Brier score, overall
//! and in the two borderline regions, in-sample, out-of-sample and by
//! repeated random holdout.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_instance, Baselines, CompiledRow, Dataset, ModelInstance, ModelSpec};
use crate::pitchdata::{classify_region, PitchRecord, Region, StrikeZone};
use crate::sampler::{sample_model, PosteriorDraws, SamplerConfig};
use crate::stats::inv_logit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    Overall,
    Region1,
    Region2,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Overall, Scope::Region1, Scope::Region2];

    pub fn name(self) -> &'static str {
        match self {
            Scope::Overall => "overall",
            Scope::Region1 => "region1",
            Scope::Region2 => "region2",
        }
    }

    fn contains(self, region: Region) -> bool {
        match self {
            Scope::Overall => true,
            Scope::Region1 => region == Region::Region1,
            Scope::Region2 => region == Region::Region2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scope: Scope,
    pub model: String,
    pub miss_rate: f64,
    pub mse: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    /// Scopes that were omitted because they held no pitches, and similar remarks.
    pub notes: Vec<String>,
}

impl MetricsTable {
    pub fn get(&self, scope: Scope, model: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.scope == scope && r.model == model)
    }

    pub fn extend(&mut self, other: MetricsTable) {
        self.rows.extend(other.rows);
        self.notes.extend(other.notes);
    }

    /// Rows ordered by scope, then by model in first-appearance order.
    pub fn sorted(&self) -> MetricsTable {
        let mut models: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
        }
        let mut rows = self.rows.clone();
        rows.sort_by_key(|r| (r.scope, models.iter().position(|m| *m == r.model)));
        MetricsTable {
            rows,
            notes: self.notes.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scope", "model", "miss", "mse", "n"])?;
        for r in &self.rows {
            w.write_record([
                r.scope.name().to_string(),
                r.model.clone(),
                r.miss_rate.to_string(),
                r.mse.to_string(),
                r.n.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<metrics csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Errors unless every coordinate of `row` addresses `draws` (or the zero sentinel).
pub fn check_row(draws: &PosteriorDraws, row: &CompiledRow) -> Result<()> {
    if row.max_index() as usize > draws.dim {
        return Err(Error::DimensionMismatch {
            expected: draws.dim,
            got: row.max_index() as usize,
        });
    }
    Ok(())
}

/// Errors when the draws were not produced on this instance's index map.
pub fn check_compatible(draws: &PosteriorDraws, instance: &ModelInstance) -> Result<()> {
    if draws.dim != instance.dim() {
        return Err(Error::DimensionMismatch {
            expected: instance.dim(),
            got: draws.dim,
        });
    }
    if let Some(h) = &draws.index_hash {
        if *h != instance.index.hash() {
            return Err(Error::InvalidInput(
                "draws were produced on a different index map".into(),
            ));
        }
    }
    Ok(())
}

/// Mean over draws of the called-strike probability for one design row.
pub fn posterior_predictive_prob(draws: &PosteriorDraws, row: &CompiledRow) -> Result<f64> {
    check_row(draws, row)?;
    if draws.n_draws() == 0 {
        return Err(Error::Empty("posterior draws".into()));
    }
    Ok(mean_prob(draws, row))
}

fn mean_prob(draws: &PosteriorDraws, row: &CompiledRow) -> f64 {
    let total: f64 = draws.iter_draws().map(|d| inv_logit(row.eta_at(d))).sum();
    total / draws.n_draws() as f64
}

pub fn predictive_probs(draws: &PosteriorDraws, rows: &[CompiledRow]) -> Result<Vec<f64>> {
    if draws.n_draws() == 0 {
        return Err(Error::Empty("posterior draws".into()));
    }
    for r in rows {
        check_row(draws, r)?;
    }
    Ok(rows.par_iter().map(|r| mean_prob(draws, r)).collect())
}

/// Scores probabilities against the calls of `pitches`. Probabilities at
/// or above `threshold` predict a strike.
pub fn score_predictions(
    model: &str,
    probs: &[f64],
    pitches: &[PitchRecord],
    zone: &StrikeZone,
    threshold: f64,
) -> Result<MetricsTable> {
    if probs.len() != pitches.len() {
        return Err(Error::DimensionMismatch {
            expected: pitches.len(),
            got: probs.len(),
        });
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!("threshold {threshold} outside [0, 1]")));
    }
    let regions: Vec<Region> = pitches.iter().map(|p| classify_region(p.x, p.z, zone)).collect();
    let mut table = MetricsTable::default();
    for scope in Scope::ALL {
        let (mut n, mut miss, mut sq) = (0usize, 0usize, 0.0);
        for ((p, &prob), &region) in pitches.iter().zip(probs).zip(&regions) {
            if !scope.contains(region) {
                continue;
            }
            let y = p.is_called_strike();
            n += 1;
            if (prob >= threshold) != y {
                miss += 1;
            }
            let d = prob - if y { 1.0 } else { 0.0 };
            sq += d * d;
        }
        if n == 0 {
            table
                .notes
                .push(format!("{model}: no pitches in {}; scope omitted", scope.name()));
            continue;
        }
        table.rows.push(MetricsRow {
            scope,
            model: model.to_string(),
            miss_rate: miss as f64 / n as f64,
            mse: sq / n as f64,
            n,
        });
    }
    Ok(table)
}

/// Posterior predictive metrics of a fitted model on `data`.
pub fn evaluate(
    model: &str,
    draws: &PosteriorDraws,
    instance: &ModelInstance,
    data: &Dataset,
    zone: &StrikeZone,
    threshold: f64,
) -> Result<MetricsTable> {
    check_compatible(draws, instance)?;
    let rows = instance.compile(&data.pitches, &data.covariates)?;
    let probs = predictive_probs(draws, &rows)?;
    score_predictions(model, &probs, &data.pitches, zone, threshold)
}

struct Participants<'a> {
    umpires: HashSet<&'a str>,
    catchers: HashSet<&'a str>,
    pitchers: HashSet<&'a str>,
    batters: HashSet<&'a str>,
}

impl<'a> Participants<'a> {
    fn of(pitches: &'a [PitchRecord]) -> Self {
        Participants {
            umpires: pitches.iter().map(|p| p.umpire_id.as_str()).collect(),
            catchers: pitches.iter().map(|p| p.catcher_id.as_str()).collect(),
            pitchers: pitches.iter().map(|p| p.pitcher_id.as_str()).collect(),
            batters: pitches.iter().map(|p| p.batter_id.as_str()).collect(),
        }
    }

    fn all_seen(&self, p: &PitchRecord) -> bool {
        self.umpires.contains(p.umpire_id.as_str())
            && self.catchers.contains(p.catcher_id.as_str())
            && self.pitchers.contains(p.pitcher_id.as_str())
            && self.batters.contains(p.batter_id.as_str())
    }
}

/// Positions of test pitches whose umpire, catcher, pitcher and batter all appear in `train`.
pub fn out_of_sample_indices(train: &[PitchRecord], test: &[PitchRecord]) -> Vec<usize> {
    let seen = Participants::of(train);
    test.iter()
        .enumerate()
        .filter(|(_, p)| seen.all_seen(p))
        .map(|(i, _)| i)
        .collect()
}

pub fn out_of_sample_filter(train: &[PitchRecord], test: &Dataset) -> Dataset {
    test.subset(&out_of_sample_indices(train, &test.pitches))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub n_folds: usize,
    pub holdout_frac: f64,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            n_folds: 10,
            holdout_frac: 0.1,
            seed: 1,
            threshold: 0.5,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds == 0 {
            return Err(Error::InvalidInput("n_folds must be positive".into()));
        }
        if !(self.holdout_frac >= 0.0 && self.holdout_frac < 1.0) {
            return Err(Error::InvalidInput("holdout_frac must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Seeds for the holdout draw and the sampler of `fold`.
    pub fn fold_seeds(&self, fold: usize) -> (u64, u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(fold as u64);
        (rng.next_u64(), rng.next_u64())
    }

    /// Sorted holdout positions for `fold`: at least one pitch, at most `n - 1`.
    pub fn holdout_indices(&self, fold: usize, n: usize) -> Vec<usize> {
        let k = ((self.holdout_frac * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
        let mut rng = ChaCha8Rng::seed_from_u64(self.fold_seeds(fold).0);
        let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        idx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub holdout_seed: u64,
    pub sampler_seed: u64,
    pub n_train: usize,
    pub n_holdout: usize,
    /// Holdout pitches with at least one participant absent from training,
    /// predicted through the hierarchical means or a zero effect.
    pub n_fallback: usize,
    pub metrics: MetricsTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: String,
    pub config: CvConfig,
    pub folds: Vec<FoldReport>,
    /// Per-scope averages over folds; `n` is the total over folds.
    pub mean: MetricsTable,
}

/// Repeated random holdout: each fold holds out an independent seeded
/// sample of pitches, fits on the rest and scores the holdout.
pub fn holdout_cv(
    data: &Dataset,
    spec: &ModelSpec,
    baselines: &Baselines,
    sampler: &SamplerConfig,
    zone: &StrikeZone,
    cv: &CvConfig,
) -> Result<CvReport> {
    cv.validate()?;
    if data.len() < 2 {
        return Err(Error::Empty("cross-validation needs at least two pitches".into()));
    }
    let model = spec.model_id.to_string();
    let folds: Vec<FoldReport> = (0..cv.n_folds)
        .into_par_iter()
        .map(|fold| {
            let (holdout_seed, sampler_seed) = cv.fold_seeds(fold);
            let hold = cv.holdout_indices(fold, data.len());
            let mut in_hold = vec![false; data.len()];
            for &i in &hold {
                in_hold[i] = true;
            }
            let train_idx: Vec<usize> = (0..data.len()).filter(|&i| !in_hold[i]).collect();
            let train = data.subset(&train_idx);
            let test = data.subset(&hold);
            let inst = build_instance(&train, spec, baselines)?;
            let cfg = SamplerConfig {
                seed: sampler_seed,
                ..sampler.clone()
            };
            let draws = sample_model(&inst, &cfg)?;
            let seen = Participants::of(&train.pitches);
            let n_fallback = test.pitches.iter().filter(|p| !seen.all_seen(p)).count();
            let metrics = evaluate(&model, &draws, &inst, &test, zone, cv.threshold)?;
            Ok(FoldReport {
                fold,
                holdout_seed,
                sampler_seed,
                n_train: train.len(),
                n_holdout: test.len(),
                n_fallback,
                metrics,
            })
        })
        .collect::<Result<_>>()?;
    let mean = average_folds(&model, &folds);
    Ok(CvReport {
        model,
        config: cv.clone(),
        folds,
        mean,
    })
}

fn average_folds(model: &str, folds: &[FoldReport]) -> MetricsTable {
    let mut table = MetricsTable::default();
    for scope in Scope::ALL {
        let rows: Vec<&MetricsRow> = folds.iter().filter_map(|f| f.metrics.get(scope, model)).collect();
        if rows.is_empty() {
            table
                .notes
                .push(format!("{model}: no fold had pitches in {}", scope.name()));
            continue;
        }
        if rows.len() < folds.len() {
            table.notes.push(format!(
                "{model}: {} averaged over {} of {} folds",
                scope.name(),
                rows.len(),
                folds.len()
            ));
        }
        let k = rows.len() as f64;
        table.rows.push(MetricsRow {
            scope,
            model: model.to_string(),
            miss_rate: rows.iter().map(|r| r.miss_rate).sum::<f64>() / k,
            mse: rows.iter().map(|r| r.mse).sum::<f64>() / k,
            n: rows.iter().map(|r| r.n).sum(),
        });
    }
    table
}
