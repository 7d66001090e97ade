//! Catcher framing metrics: per-pitch framing effects, runs saved (RS),
//! the opportunity-free aggregate effect (CAFE), rank intervals,
//! counterfactual probability tables, probability contours and
//! season-to-season correlations.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locgam::{HandCombo, LocationSource};
use crate::model::{CompiledRow, Dataset, Factor, ModelInstance, PitchLevels};
use crate::pitchdata::{BoundingBox, Count};
use crate::runvalue::RunValueTable;
use crate::sampler::PosteriorDraws;
use crate::stats::{inv_logit, pearson, quantile_sorted};

/// Everything identifying a taken pitch except its catcher, resolved
/// against an instance's index map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PitchContext {
    pub umpire: Option<usize>,
    pub count: Count,
    pub lo: f64,
    pub combo: HandCombo,
    pub batter: Option<usize>,
    pub pitcher: Option<usize>,
    /// Design row with the catcher term left at the baseline.
    base: CompiledRow,
}

impl PitchContext {
    pub fn new(
        instance: &ModelInstance,
        umpire: Option<usize>,
        count: Count,
        lo: f64,
        combo: HandCombo,
        batter: Option<usize>,
        pitcher: Option<usize>,
    ) -> Self {
        let levels = PitchLevels {
            umpire,
            combo,
            count: instance.index.counts.level(&count.to_string()),
            catcher: None,
            pitcher,
            batter,
        };
        PitchContext {
            umpire,
            count,
            lo,
            combo,
            batter,
            pitcher,
            base: instance.row_for(&levels, lo, 0.0),
        }
    }

    pub fn base_row(&self) -> &CompiledRow {
        &self.base
    }
}

/// Contexts of every pitch in `data`, in order.
pub fn contexts(instance: &ModelInstance, data: &Dataset) -> Vec<PitchContext> {
    data.pitches
        .iter()
        .zip(&data.covariates)
        .map(|(p, c)| {
            let l = instance.levels(p);
            PitchContext::new(
                instance,
                l.umpire,
                p.count,
                c.scaled_logodds,
                l.combo,
                l.batter,
                l.pitcher,
            )
        })
        .collect()
}

/// A fitted model together with the run values that price its calls.
pub struct FramingModel<'a> {
    pub instance: &'a ModelInstance,
    pub run_values: &'a RunValueTable,
}

impl<'a> FramingModel<'a> {
    pub fn new(instance: &'a ModelInstance, run_values: &'a RunValueTable) -> Self {
        FramingModel { instance, run_values }
    }

    pub fn catcher_level(&self, id: &str) -> Result<usize> {
        self.instance
            .index
            .catchers
            .level(id)
            .ok_or_else(|| Error::UnknownLevel {
                factor: Factor::Catcher.name(),
                id: id.to_string(),
            })
    }

    fn catcher_coordinate(&self, level: usize, ctx: &PitchContext) -> usize {
        self.instance
            .effect_coordinate(Factor::Catcher, ctx.umpire, Some(level)) as usize
    }

    #[inline]
    fn effect_at(theta: &[f64], coord: usize, eta_base: f64, rho: f64) -> f64 {
        match theta.get(coord) {
            Some(c) => (inv_logit(eta_base + c) - inv_logit(eta_base)) * rho,
            None => 0.0,
        }
    }

    /// Runs saved on one pitch by `catcher` relative to the baseline catcher under one draw.
    pub fn framing_effect(&self, theta: &[f64], catcher: &str, ctx: &PitchContext) -> Result<f64> {
        self.instance.index.check_dim(theta)?;
        let level = self.catcher_level(catcher)?;
        let coord = self.catcher_coordinate(level, ctx);
        let eta = ctx.base.eta_at(theta);
        Ok(Self::effect_at(theta, coord, eta, self.run_values.rho_of(ctx.count)))
    }

    fn check_draws(&self, draws: &[&[f64]]) -> Result<()> {
        if draws.is_empty() {
            return Err(Error::Empty("posterior draws".into()));
        }
        for d in draws {
            self.instance.index.check_dim(d)?;
        }
        Ok(())
    }

    /// Per-draw RS of each catcher over the contexts of the pitches it caught.
    pub fn rs_draws(
        &self,
        draws: &[&[f64]],
        catchers: &[String],
        caught: &[Vec<PitchContext>],
    ) -> Result<Vec<Vec<f64>>> {
        self.check_draws(draws)?;
        if catchers.len() != caught.len() {
            return Err(Error::DimensionMismatch {
                expected: catchers.len(),
                got: caught.len(),
            });
        }
        catchers
            .par_iter()
            .zip(caught)
            .map(|(id, ctxs)| {
                let level = self.catcher_level(id)?;
                if ctxs.is_empty() {
                    log::warn!("catcher {id} has no pitches; RS is identically zero");
                }
                let coords: Vec<usize> = ctxs.iter().map(|c| self.catcher_coordinate(level, c)).collect();
                Ok(draws
                    .iter()
                    .map(|theta| {
                        ctxs.iter()
                            .zip(&coords)
                            .map(|(c, &k)| {
                                Self::effect_at(theta, k, c.base.eta_at(theta), self.run_values.rho_of(c.count))
                            })
                            .sum()
                    })
                    .collect())
            })
            .collect()
    }

    /// Per-draw CAFE of each catcher: `scale` times its mean framing effect
    /// over every context in `all`.
    pub fn cafe_draws(
        &self,
        draws: &[&[f64]],
        catchers: &[String],
        all: &[PitchContext],
        scale: f64,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_draws(draws)?;
        if all.is_empty() {
            return Err(Error::Empty("CAFE needs at least one pitch context".into()));
        }
        let levels: Vec<usize> = catchers
            .iter()
            .map(|id| self.catcher_level(id))
            .collect::<Result<_>>()?;
        let coords: Vec<Vec<usize>> = levels
            .iter()
            .map(|&l| all.iter().map(|c| self.catcher_coordinate(l, c)).collect())
            .collect();
        let rho: Vec<f64> = all.iter().map(|c| self.run_values.rho_of(c.count)).collect();
        let n = all.len() as f64;
        let per_draw: Vec<Vec<f64>> = draws
            .par_iter()
            .map(|theta| {
                let eta: Vec<f64> = all.iter().map(|c| c.base.eta_at(theta)).collect();
                coords
                    .iter()
                    .map(|ks| {
                        let total: f64 = ks
                            .iter()
                            .zip(&eta)
                            .zip(&rho)
                            .map(|((&k, &e), &r)| Self::effect_at(theta, k, e, r))
                            .sum();
                        scale * total / n
                    })
                    .collect()
            })
            .collect();
        Ok((0..catchers.len())
            .map(|c| per_draw.iter().map(|d| d[c]).collect())
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "RS")]
    Rs,
    #[serde(rename = "CAFE")]
    Cafe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramingSummary {
    pub catcher_id: String,
    pub metric: Metric,
    pub posterior_mean: f64,
    pub posterior_sd: f64,
    /// Central 95% interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_pitches: usize,
    pub rank_low: Option<usize>,
    pub rank_high: Option<usize>,
}

/// Mean, sd and central 95% interval of a sample.
pub fn summarize(values: &[f64]) -> (f64, f64, f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        mean,
        sd,
        quantile_sorted(&sorted, 0.025),
        quantile_sorted(&sorted, 0.975),
    )
}

pub fn summaries(metric: Metric, catchers: &[String], n_pitches: &[usize], values: &[Vec<f64>]) -> Vec<FramingSummary> {
    catchers
        .iter()
        .zip(n_pitches)
        .zip(values)
        .map(|((id, &n), v)| {
            let (mean, sd, lo, hi) = summarize(v);
            FramingSummary {
                catcher_id: id.clone(),
                metric,
                posterior_mean: mean,
                posterior_sd: sd,
                ci_low: lo,
                ci_high: hi,
                n_pitches: n,
                rank_low: None,
                rank_high: None,
            }
        })
        .collect()
}

/// For every draw, each catcher's rank (1 = largest value). Ties go to
/// the lexicographically smaller catcher ID.
pub fn draw_ranks(values: &[Vec<f64>], ids: &[String]) -> Vec<Vec<usize>> {
    let n_draws = values.first().map_or(0, Vec::len);
    (0..n_draws)
        .map(|d| {
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| values[b][d].total_cmp(&values[a][d]).then_with(|| ids[a].cmp(&ids[b])));
            let mut ranks = vec![0; values.len()];
            for (r, &c) in order.iter().enumerate() {
                ranks[c] = r + 1;
            }
            ranks
        })
        .collect()
}

/// Empirical quantile that returns an observed value (inverse of the ECDF).
fn nearest_rank(sorted: &[usize], q: f64) -> usize {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// 2.5th and 97.5th percentiles of each catcher's rank across draws.
pub fn rank_intervals(values: &[Vec<f64>], ids: &[String]) -> Result<Vec<(usize, usize)>> {
    if values.len() < 2 || values.len() != ids.len() {
        return Err(Error::InvalidInput(
            "rank intervals need at least two catchers with ids".into(),
        ));
    }
    let n = values[0].len();
    if n == 0 || values.iter().any(|v| v.len() != n) {
        return Err(Error::InvalidInput(
            "rank intervals need aligned, non-empty draws".into(),
        ));
    }
    let ranks = draw_ranks(values, ids);
    Ok((0..values.len())
        .map(|c| {
            let mut r: Vec<usize> = ranks.iter().map(|d| d[c]).collect();
            r.sort_unstable();
            (nearest_rank(&r, 0.025), nearest_rank(&r, 0.975))
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FramingConfig {
    pub cafe_scale: f64,
    /// Use every `thin`-th draw of each chain.
    pub thin: usize,
}

impl Default for FramingConfig {
    fn default() -> Self {
        FramingConfig {
            cafe_scale: 4000.0,
            thin: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramingReport {
    pub rs: Vec<FramingSummary>,
    pub cafe: Vec<FramingSummary>,
    pub n_draws: usize,
    pub cafe_scale: f64,
}

/// RS and CAFE summaries for every catcher in the index map, with CAFE rank intervals.
pub fn framing_report(
    model: &FramingModel,
    draws: &PosteriorDraws,
    data: &Dataset,
    cfg: &FramingConfig,
) -> Result<FramingReport> {
    let thinned = draws.thinned(cfg.thin);
    let all = contexts(model.instance, data);
    let catchers: Vec<String> = model.instance.index.catchers.ids.clone();
    let slot: HashMap<&str, usize> = catchers.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut caught: Vec<Vec<PitchContext>> = vec![Vec::new(); catchers.len()];
    for (p, ctx) in data.pitches.iter().zip(&all) {
        if let Some(&i) = slot.get(p.catcher_id.as_str()) {
            caught[i].push(*ctx);
        }
    }
    let n_pitches: Vec<usize> = caught.iter().map(Vec::len).collect();
    let rs_values = model.rs_draws(&thinned, &catchers, &caught)?;
    let cafe_values = model.cafe_draws(&thinned, &catchers, &all, cfg.cafe_scale)?;
    let mut cafe = summaries(Metric::Cafe, &catchers, &n_pitches, &cafe_values);
    if catchers.len() >= 2 {
        for (s, (lo, hi)) in cafe.iter_mut().zip(rank_intervals(&cafe_values, &catchers)?) {
            s.rank_low = Some(lo);
            s.rank_high = Some(hi);
        }
    }
    Ok(FramingReport {
        rs: summaries(Metric::Rs, &catchers, &n_pitches, &rs_values),
        cafe,
        n_draws: thinned.len(),
        cafe_scale: cfg.cafe_scale,
    })
}

/// Writes summaries ordered by decreasing posterior mean.
pub fn write_summaries_csv<W: Write>(writer: W, rows: &[FramingSummary]) -> Result<()> {
    let mut order: Vec<&FramingSummary> = rows.iter().collect();
    order.sort_by(|a, b| {
        b.posterior_mean
            .total_cmp(&a.posterior_mean)
            .then_with(|| a.catcher_id.cmp(&b.catcher_id))
    });
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "rank",
        "catcher",
        "mean",
        "sd",
        "ci_low",
        "ci_high",
        "n",
        "rank_low",
        "rank_high",
    ])?;
    let opt = |v: Option<usize>| v.map_or(String::new(), |r| r.to_string());
    for (i, s) in order.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            s.catcher_id.clone(),
            s.posterior_mean.to_string(),
            s.posterior_sd.to_string(),
            s.ci_low.to_string(),
            s.ci_high.to_string(),
            s.n_pitches.to_string(),
            opt(s.rank_low),
            opt(s.rank_high),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<framing csv>", e))?;
    Ok(())
}

/// A fixed batter, pitcher and handedness, with a location covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matchup {
    /// `None` selects the baseline level.
    pub batter: Option<String>,
    pub pitcher: Option<String>,
    pub combo: HandCombo,
    /// Scaled location log-odds; 0 is a location the location model calls a strike half the time.
    pub lo: f64,
}

fn resolve(instance: &ModelInstance, factor: Factor, id: Option<&String>) -> Result<Option<usize>> {
    match id {
        None => Ok(None),
        Some(id) => instance
            .index
            .factor(factor)
            .level(id)
            .map(Some)
            .ok_or_else(|| Error::UnknownLevel {
                factor: factor.name(),
                id: id.clone(),
            }),
    }
}

fn posterior_mean_prob(draws: &[&[f64]], row: &CompiledRow) -> f64 {
    draws.iter().map(|d| inv_logit(row.eta_at(d))).sum::<f64>() / draws.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualTable {
    pub catchers: Vec<String>,
    pub counts: Vec<Count>,
    /// Umpire-averaged probability in the baseline cell (baseline catcher, 0-0).
    pub baseline_prob: f64,
    /// `diff[catcher][count]`: umpire-averaged probability minus `baseline_prob`.
    pub diff: Vec<Vec<f64>>,
    pub umpire_weighting: String,
}

impl CounterfactualTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["catcher".to_string()];
        header.extend(self.counts.iter().map(Count::to_string));
        w.write_record(&header)?;
        for (c, row) in self.catchers.iter().zip(&self.diff) {
            let mut rec = vec![c.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<counterfactual csv>", e))?;
        Ok(())
    }
}

/// Posterior predictive called-strike probability for each catcher and
/// count, averaged over umpires with equal weight, relative to the
/// baseline catcher in an 0-0 count.
pub fn counterfactual_table(
    instance: &ModelInstance,
    draws: &PosteriorDraws,
    matchup: &Matchup,
    catchers: &[String],
    counts: &[Count],
    thin: usize,
) -> Result<CounterfactualTable> {
    let draws = draws.thinned(thin);
    if draws.is_empty() {
        return Err(Error::Empty("posterior draws".into()));
    }
    for d in &draws {
        instance.index.check_dim(d)?;
    }
    let batter = resolve(instance, Factor::Batter, matchup.batter.as_ref())?;
    let pitcher = resolve(instance, Factor::Pitcher, matchup.pitcher.as_ref())?;
    let catcher_levels: Vec<Option<usize>> = catchers
        .iter()
        .map(|c| resolve(instance, Factor::Catcher, Some(c)))
        .collect::<Result<_>>()?;
    let n_umpires = instance.index.umpires.len();
    if n_umpires == 0 {
        return Err(Error::Empty("the model has no umpires".into()));
    }
    let cell = |catcher: Option<usize>, count: Count| -> f64 {
        let total: f64 = (0..n_umpires)
            .map(|u| {
                let levels = PitchLevels {
                    umpire: Some(u),
                    combo: matchup.combo,
                    count: instance.index.counts.level(&count.to_string()),
                    catcher,
                    pitcher,
                    batter,
                };
                posterior_mean_prob(&draws, &instance.row_for(&levels, matchup.lo, 0.0))
            })
            .sum();
        total / n_umpires as f64
    };
    let base_level = instance.index.catchers.level(&instance.index.catchers.baseline);
    let baseline_prob = cell(base_level, Count::ZERO);
    let diff = catcher_levels
        .par_iter()
        .map(|&l| counts.iter().map(|&co| cell(l, co) - baseline_prob).collect())
        .collect();
    Ok(CounterfactualTable {
        catchers: catchers.to_vec(),
        counts: counts.to_vec(),
        baseline_prob,
        diff,
        umpire_weighting: "equal weight per umpire".into(),
    })
}

/// Probabilities at the centers of an `nx` by `nz` grid of cells covering a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityGrid {
    pub bbox: BoundingBox,
    pub nx: usize,
    pub nz: usize,
    /// Row-major in `z`: `prob[iz * nx + ix]`.
    pub prob: Vec<f64>,
}

impl ProbabilityGrid {
    pub fn new(bbox: BoundingBox, nx: usize, nz: usize, prob: Vec<f64>) -> Result<Self> {
        if nx == 0 || nz == 0 || prob.len() != nx * nz {
            return Err(Error::InvalidInput("grid shape does not match its values".into()));
        }
        if !(bbox.x_max > bbox.x_min && bbox.z_max > bbox.z_min) {
            return Err(Error::InvalidInput("grid box is empty".into()));
        }
        Ok(ProbabilityGrid { bbox, nx, nz, prob })
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            (self.bbox.x_max - self.bbox.x_min) / self.nx as f64,
            (self.bbox.z_max - self.bbox.z_min) / self.nz as f64,
        )
    }

    pub fn center(&self, ix: usize, iz: usize) -> (f64, f64) {
        let (w, h) = self.cell_size();
        (
            self.bbox.x_min + (ix as f64 + 0.5) * w,
            self.bbox.z_min + (iz as f64 + 0.5) * h,
        )
    }

    fn centers(bbox: BoundingBox, nx: usize, nz: usize) -> Vec<(f64, f64)> {
        let g = ProbabilityGrid {
            bbox,
            nx,
            nz,
            prob: Vec::new(),
        };
        (0..nz)
            .flat_map(|iz| (0..nx).map(move |ix| (ix, iz)))
            .map(|(ix, iz)| g.center(ix, iz))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "z", "prob"])?;
        for iz in 0..self.nz {
            for ix in 0..self.nx {
                let (x, z) = self.center(ix, iz);
                w.write_record([x.to_string(), z.to_string(), self.prob[iz * self.nx + ix].to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<grid csv>", e))?;
        Ok(())
    }
}

/// Who is involved in a contour: the matchup plus catcher and umpire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub batter: Option<String>,
    pub pitcher: Option<String>,
    pub combo: HandCombo,
    pub catcher: Option<String>,
    /// `None` uses the league-wide mean umpire.
    pub umpire: Option<String>,
    pub count: Count,
}

/// Posterior predictive called-strike probability over a grid of locations.
#[allow(clippy::too_many_arguments)]
pub fn contour_grid(
    instance: &ModelInstance,
    location: &dyn LocationSource,
    spec: &ContourSpec,
    draws: &PosteriorDraws,
    bbox: BoundingBox,
    nx: usize,
    nz: usize,
    thin: usize,
) -> Result<ProbabilityGrid> {
    let draws = draws.thinned(thin);
    if draws.is_empty() {
        return Err(Error::Empty("posterior draws".into()));
    }
    for d in &draws {
        instance.index.check_dim(d)?;
    }
    let umpire = match &spec.umpire {
        None => None,
        Some(id) => Some(instance.index.umpire(id).ok_or_else(|| Error::UnknownLevel {
            factor: "umpire",
            id: id.clone(),
        })?),
    };
    let levels = PitchLevels {
        umpire,
        combo: spec.combo,
        count: instance.index.counts.level(&spec.count.to_string()),
        catcher: resolve(instance, Factor::Catcher, spec.catcher.as_ref())?,
        pitcher: resolve(instance, Factor::Pitcher, spec.pitcher.as_ref())?,
        batter: resolve(instance, Factor::Batter, spec.batter.as_ref())?,
    };
    let prob = ProbabilityGrid::centers(bbox, nx, nz)
        .par_iter()
        .map(|&(x, z)| {
            let lo = location.covariate(x, z, spec.combo)?.scaled_logodds;
            Ok(posterior_mean_prob(&draws, &instance.row_for(&levels, lo, 0.0)))
        })
        .collect::<Result<Vec<f64>>>()?;
    ProbabilityGrid::new(bbox, nx, nz, prob)
}

/// Area in square feet of the cells whose probability is at least `level`.
pub fn contour_area(grid: &ProbabilityGrid, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("contour level {level} outside (0, 1)")));
    }
    let (w, h) = grid.cell_size();
    Ok(grid.prob.iter().filter(|&&p| p >= level).count() as f64 * w * h)
}

pub fn format_area(square_feet: f64) -> String {
    format!("{square_feet:.2} sq. ft.")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub seasons: Vec<i32>,
    /// Catchers present in every season.
    pub catchers: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["season".to_string()];
        header.extend(self.seasons.iter().map(i32::to_string));
        w.write_record(&header)?;
        for (s, row) in self.seasons.iter().zip(&self.matrix) {
            let mut rec = vec![s.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<correlation csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Pearson correlation of per-catcher CAFE posterior means between every
/// pair of seasons, over the catchers present in all of them.
pub fn year_correlation(seasons: &[(i32, Vec<(String, f64)>)]) -> Result<CorrelationMatrix> {
    if seasons.len() < 2 {
        return Err(Error::InvalidInput("need at least two seasons".into()));
    }
    let maps: Vec<HashMap<&str, f64>> = seasons
        .iter()
        .map(|(_, v)| v.iter().map(|(c, x)| (c.as_str(), *x)).collect())
        .collect();
    let common: BTreeSet<&str> = maps[0]
        .keys()
        .copied()
        .filter(|c| maps.iter().all(|m| m.contains_key(c)))
        .collect();
    if common.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "only {} catchers appear in every season; at least 3 are needed",
            common.len()
        )));
    }
    let cols: Vec<Vec<f64>> = maps.iter().map(|m| common.iter().map(|c| m[c]).collect()).collect();
    let k = seasons.len();
    let mut matrix = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let r = pearson(&cols[i], &cols[j]);
            matrix[i][j] = r;
            matrix[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        seasons: seasons.iter().map(|s| s.0).collect(),
        catchers: common.iter().map(|c| c.to_string()).collect(),
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locgam::LocationCovariate;
    use crate::model::{build_instance, Baselines, ModelId, ModelSpec};
    use crate::pitchdata::{Call, Hand, PitchRecord};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pitch(i: usize, ump: &str, ca: &str, count: (i64, i64)) -> PitchRecord {
        PitchRecord {
            pitch_id: format!("p{i}"),
            season: 2014,
            half_inning_id: "h".into(),
            umpire_id: ump.into(),
            batter_id: format!("b{}", i % 3),
            catcher_id: ca.into(),
            pitcher_id: format!("q{}", i % 2),
            batter_hand: Hand::R,
            pitcher_hand: if i.is_multiple_of(4) { Hand::L } else { Hand::R },
            count: Count::new(count.0, count.1).unwrap(),
            x: 0.1 * (i % 7) as f64,
            z: 2.5,
            sz_top: 3.5,
            sz_bot: 1.5,
            taken: true,
            call: Some(if i.is_multiple_of(3) { Call::Strike } else { Call::Ball }),
            runs_rest_of_inning: 0,
        }
    }

    /// Catcher "a" is the most frequent and so the baseline.
    fn fixture(id: ModelId) -> (ModelInstance, Dataset) {
        let mut ps = Vec::new();
        for i in 0..40 {
            let ca = ["a", "a", "b", "c", "d"][i % 5];
            let ump = ["u1", "u2"][i % 2];
            ps.push(pitch(i, ump, ca, ((i % 4) as i64, (i % 3) as i64)));
        }
        let covs: Vec<LocationCovariate> = ps
            .iter()
            .enumerate()
            .map(|(i, p)| LocationCovariate {
                raw_logodds: 0.3 * i as f64 - 4.0,
                scaled_logodds: (0.3 * i as f64 - 4.0) / 2.0,
                combo: HandCombo::of(p),
            })
            .collect();
        let data = Dataset::new(ps, covs, [2.0; 4]).unwrap();
        let inst = build_instance(&data, &ModelSpec::new(id), &Baselines::default()).unwrap();
        (inst, data)
    }

    fn random_draws(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect()
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn baseline_effect_is_exactly_zero() {
        for id in ModelId::ALL {
            let (inst, data) = fixture(id);
            let rv = RunValueTable::reference();
            let fm = FramingModel::new(&inst, &rv);
            assert_eq!(inst.index.catchers.baseline, "a");
            for theta in random_draws(inst.dim(), 5, 1) {
                for ctx in contexts(&inst, &data) {
                    assert_eq!(fm.framing_effect(&theta, "a", &ctx).unwrap(), 0.0);
                }
            }
            assert!(matches!(
                fm.framing_effect(&vec![0.0; inst.dim()], "zz", &contexts(&inst, &data)[0]),
                Err(Error::UnknownLevel { .. })
            ));
        }
    }

    #[test]
    fn log_odds_shifts_at_zero_zero() {
        let (inst, _) = fixture(ModelId::M3);
        let rv = RunValueTable::reference();
        let fm = FramingModel::new(&inst, &rv);
        let k = inst
            .index
            .coordinate(crate::model::Block::Effect(Factor::Catcher), None, "b")
            .unwrap();
        let ctx = PitchContext::new(&inst, Some(0), Count::ZERO, 0.7, HandCombo::ALL[0], None, None);
        let int = inst.index.block(crate::model::Block::UmpireIntercept).unwrap().at(0, 0);

        // a shift of 3 centred on zero moves the probability from 18.24% to 81.76%
        let mut theta = vec![0.0; inst.dim()];
        theta[int] = -1.5;
        theta[k] = 3.0;
        assert!((inv_logit(-1.5) - 0.1824).abs() < 5e-5 && (inv_logit(1.5) - 0.8176).abs() < 5e-5);
        let f = fm.framing_effect(&theta, "b", &ctx).unwrap();
        assert!((f - (inv_logit(1.5) - inv_logit(-1.5)) * 0.062).abs() < 1e-15);

        // from a predictor of 0 the same 81.76% is reached by a shift of 1.5
        let mut theta = vec![0.0; inst.dim()];
        theta[k] = 1.5;
        let f = fm.framing_effect(&theta, "b", &ctx).unwrap();
        assert!((f - 0.01969).abs() < 5e-6, "{f}");
    }

    #[test]
    fn effect_matches_raw_predictor_recomputation() {
        for id in [ModelId::M3, ModelId::M5] {
            let (inst, data) = fixture(id);
            let rv = RunValueTable::reference();
            let fm = FramingModel::new(&inst, &rv);
            let theta = &random_draws(inst.dim(), 1, 7)[0];
            for (p, c) in data.pitches.iter().zip(&data.covariates) {
                let ctx = &contexts(&inst, &data)[data.pitches.iter().position(|q| q.pitch_id == p.pitch_id).unwrap()];
                let mut as_c = p.clone();
                as_c.catcher_id = "c".into();
                let mut as_base = p.clone();
                as_base.catcher_id = "a".into();
                let rows = inst.compile(&[as_c, as_base], &[*c, *c]).unwrap();
                let want = (inv_logit(rows[0].eta_at(theta)) - inv_logit(rows[1].eta_at(theta))) * rv.rho_of(p.count);
                let got = fm.framing_effect(theta, "c", ctx).unwrap();
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rs_and_cafe_identities() {
        let (inst, data) = fixture(ModelId::M4);
        let rv = RunValueTable::reference();
        let fm = FramingModel::new(&inst, &rv);
        let draws = random_draws(inst.dim(), 6, 3);
        let d = refs(&draws);
        let all = contexts(&inst, &data);
        let ids: Vec<String> = ["a", "b", "c", "d"].map(String::from).to_vec();

        let caught: Vec<Vec<PitchContext>> = ids
            .iter()
            .map(|id| {
                data.pitches
                    .iter()
                    .zip(&all)
                    .filter(|(p, _)| &p.catcher_id == id)
                    .map(|(_, c)| *c)
                    .collect()
            })
            .collect();
        let rs = fm.rs_draws(&d, &ids, &caught).unwrap();
        assert!(rs[0].iter().all(|v| *v == 0.0));
        // additivity over a partition of the caught pitches
        let (left, right) = caught[1].split_at(3);
        let b2 = vec!["b".to_string(), "b".to_string()];
        let parts = fm.rs_draws(&d, &b2, &[left.to_vec(), right.to_vec()]).unwrap();
        for k in 0..d.len() {
            assert!((parts[0][k] + parts[1][k] - rs[1][k]).abs() < 1e-12);
        }

        let cafe = fm.cafe_draws(&d, &ids, &all, 4000.0).unwrap();
        assert!(cafe[0].iter().all(|v| *v == 0.0));
        let doubled: Vec<PitchContext> = all.iter().flat_map(|c| [*c, *c]).collect();
        let cafe2 = fm.cafe_draws(&d, &ids, &doubled, 4000.0).unwrap();
        for (a, b) in cafe.iter().flatten().zip(cafe2.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let single = fm.cafe_draws(&d, &ids[2..3], &all[..1], 4000.0).unwrap();
        for (k, theta) in d.iter().enumerate() {
            assert_eq!(single[0][k], 4000.0 * fm.framing_effect(theta, "c", &all[0]).unwrap());
        }

        // linear in the run values
        let rv2 = rv.scaled(2.0);
        let fm2 = FramingModel::new(&inst, &rv2);
        let rs2 = fm2.rs_draws(&d, &ids, &caught).unwrap();
        let cafe_2 = fm2.cafe_draws(&d, &ids, &all, 4000.0).unwrap();
        for (a, b) in rs.iter().flatten().zip(rs2.iter().flatten()) {
            assert_eq!(2.0 * a, *b);
        }
        for (a, b) in cafe.iter().flatten().zip(cafe_2.iter().flatten()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn single_pitch_constant_effect() {
        let (inst, data) = fixture(ModelId::M3);
        let rv = RunValueTable::reference();
        let fm = FramingModel::new(&inst, &rv);
        let theta = random_draws(inst.dim(), 1, 11).remove(0);
        let draws = vec![theta.clone(), theta.clone(), theta];
        let ctx = contexts(&inst, &data)[2];
        let rs = fm.rs_draws(&refs(&draws), &["b".into()], &[vec![ctx]]).unwrap();
        let (mean, sd, lo, hi) = summarize(&rs[0]);
        assert_eq!(sd, 0.0);
        assert_eq!(mean, rs[0][0]);
        assert!(lo <= mean && mean <= hi);
    }

    #[test]
    fn separated_catchers_have_point_rank_intervals() {
        let values = vec![vec![5.0, 6.0, 7.0], vec![1.0, 2.0, 0.5]];
        let ids = vec!["x".to_string(), "y".to_string()];
        assert_eq!(rank_intervals(&values, &ids).unwrap(), vec![(1, 1), (2, 2)]);
        // ties go to the smaller id
        let tied = vec![vec![1.0], vec![1.0]];
        assert_eq!(draw_ranks(&tied, &["b".into(), "a".into()]), vec![vec![2, 1]]);
    }

    #[test]
    fn symmetric_ensemble_spans_widely() {
        // catcher 0 is the baseline (always 0); the others are symmetric about zero
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 2000;
        let mut values = vec![vec![0.0; n]];
        for _ in 0..5 {
            values.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        let ids: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
        let iv = rank_intervals(&values, &ids).unwrap();
        // brute force: rank of the baseline is 1 + number of others above zero
        let mut brute: Vec<usize> = (0..n)
            .map(|d| 1 + (1..6).filter(|&c| values[c][d] > 0.0).count())
            .collect();
        brute.sort_unstable();
        assert_eq!(iv[0], (nearest_rank(&brute, 0.025), nearest_rank(&brute, 0.975)));
        assert!(iv[0].0 <= 2 && iv[0].1 >= 5);
    }

    #[test]
    fn counterfactual_baseline_cell_and_brute_force() {
        let (inst, data) = fixture(ModelId::M4);
        let raw = random_draws(inst.dim(), 8, 13);
        let draws = PosteriorDraws::from_chains(
            vec![raw.clone()],
            inst.index.entries().iter().map(|c| c.name()).collect(),
        )
        .unwrap();
        let m = Matchup {
            batter: Some("b1".into()),
            pitcher: None,
            combo: HandCombo::ALL[0],
            lo: 0.0,
        };
        let catchers: Vec<String> = ["a", "b", "d"].map(String::from).to_vec();
        let counts = vec![Count::ZERO, Count::new(3, 2).unwrap()];
        let t = counterfactual_table(&inst, &draws, &m, &catchers, &counts, 1).unwrap();
        assert_eq!(t.diff[0][0], 0.0);
        // brute force through compiled rows of hypothetical pitches
        let mut total = 0.0;
        for ump in ["u1", "u2"] {
            let mut p = pitch(1, ump, "d", (3, 2));
            p.pitcher_hand = Hand::R;
            p.pitcher_id = "nobody".into();
            let cov = LocationCovariate {
                raw_logodds: 0.0,
                scaled_logodds: 0.0,
                combo: HandCombo::of(&p),
            };
            let row = inst.compile(&[p], &[cov]).unwrap()[0];
            total += raw.iter().map(|d| inv_logit(row.eta_at(d))).sum::<f64>() / raw.len() as f64;
        }
        assert!((t.diff[2][1] - (total / 2.0 - t.baseline_prob)).abs() < 1e-12);
        assert!(counterfactual_table(&inst, &draws, &m, &["zz".into()], &counts, 1).is_err());
        let _ = data;
    }

    #[test]
    fn contour_areas() {
        let bbox = BoundingBox {
            x_min: -1.0,
            x_max: 1.0,
            z_min: 1.0,
            z_max: 3.0,
        };
        let g = ProbabilityGrid::new(bbox, 20, 20, vec![0.6; 400]).unwrap();
        assert!((contour_area(&g, 0.5).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(contour_area(&g, 0.9).unwrap(), 0.0);
        assert!(contour_area(&g, 1.0).is_err() && contour_area(&g, 0.0).is_err());
        assert_eq!(format_area(4.3712), "4.37 sq. ft.");
    }

    #[test]
    fn season_correlations() {
        let s =
            |v: &[f64]| -> Vec<(String, f64)> { v.iter().enumerate().map(|(i, x)| (format!("c{i}"), *x)).collect() };
        let a = s(&[1.0, 3.0, -2.0, 0.5]);
        let m = year_correlation(&[(2013, a.clone()), (2014, a.clone())]).unwrap();
        assert!(m.matrix.iter().flatten().all(|v| (v - 1.0).abs() < 1e-12));
        let neg = s(&[-1.0, -3.0, 2.0, -0.5]);
        let m = year_correlation(&[(2013, a.clone()), (2014, neg)]).unwrap();
        assert!((m.matrix[0][1] + 1.0).abs() < 1e-12);
        assert_eq!(m.matrix[0][1], m.matrix[1][0]);
        assert!(year_correlation(&[(2013, a[..2].to_vec()), (2014, a)]).is_err());
    }

    proptest! {
        #[test]
        fn ranks_are_permutations(values in prop::collection::vec(prop::collection::vec(-3i32..3, 5), 2..8)) {
            let v: Vec<Vec<f64>> = values.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
            let ids: Vec<String> = (0..v.len()).map(|i| format!("c{i:02}")).collect();
            let n = v.len();
            for ranks in draw_ranks(&v, &ids) {
                prop_assert_eq!(ranks.iter().sum::<usize>(), n * (n + 1) / 2);
                let mut s = ranks.clone();
                s.sort_unstable();
                prop_assert_eq!(s, (1..=n).collect::<Vec<_>>());
            }
            for (lo, hi) in rank_intervals(&v, &ids).unwrap() {
                prop_assert!(1 <= lo && lo <= hi && hi <= n);
            }
        }

        #[test]
        fn relabeling_permutes_intervals(values in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 7), 3..7), shift in 0usize..7) {
            let n = values.len();
            let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let pv: Vec<Vec<f64>> = perm.iter().map(|&i| values[i].clone()).collect();
            let pid: Vec<String> = perm.iter().map(|&i| ids[i].clone()).collect();
            let a = rank_intervals(&values, &ids).unwrap();
            let b = rank_intervals(&pv, &pid).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(b[k], a[i]);
            }
        }

        #[test]
        fn contour_containment(probs in prop::collection::vec(0.0f64..1.0, 16), lo in 0.01f64..0.5, gap in 0.0f64..0.49) {
            let bbox = BoundingBox { x_min: 0.0, x_max: 1.0, z_min: 0.0, z_max: 2.0 };
            let g = ProbabilityGrid::new(bbox, 4, 4, probs).unwrap();
            prop_assert!(contour_area(&g, lo + gap).unwrap() <= contour_area(&g, lo).unwrap());
        }
    }
}
