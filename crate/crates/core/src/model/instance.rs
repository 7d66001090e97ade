use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::index::{Block, Factor, FactorLevels, IndexMap};
use super::spec::{ModelSpec, VarianceBlock};
use crate::error::{Error, Result};
use crate::locgam::{HandCombo, LocationCovariate};
use crate::pitchdata::{Count, PitchRecord};
use crate::stats::softplus;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Pitches together with their location covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub pitches: Vec<PitchRecord>,
    pub covariates: Vec<LocationCovariate>,
    /// Per-combo prior mean of the location slopes.
    pub mu_lo: [f64; 4],
}

impl Dataset {
    pub fn new(pitches: Vec<PitchRecord>, covariates: Vec<LocationCovariate>, mu_lo: [f64; 4]) -> Result<Self> {
        if pitches.len() != covariates.len() {
            return Err(Error::DimensionMismatch {
                expected: pitches.len(),
                got: covariates.len(),
            });
        }
        for (i, (p, c)) in pitches.iter().zip(&covariates).enumerate() {
            if HandCombo::of(p) != c.combo {
                return Err(Error::InvalidInput(format!(
                    "covariate {i} is for {} but pitch {} is {}",
                    c.combo.label(),
                    p.pitch_id,
                    HandCombo::of(p).label()
                )));
            }
        }
        if mu_lo.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("mu_lo must be finite".into()));
        }
        Ok(Dataset {
            pitches,
            covariates,
            mu_lo,
        })
    }

    pub fn len(&self) -> usize {
        self.pitches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pitches.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            pitches: idx.iter().map(|&i| self.pitches[i].clone()).collect(),
            covariates: idx.iter().map(|&i| self.covariates[i]).collect(),
            mu_lo: self.mu_lo,
        }
    }
}

/// Optional explicit baseline levels; by default the most frequent level is used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Baselines {
    pub catcher: Option<String>,
    pub pitcher: Option<String>,
    pub batter: Option<String>,
}

/// One pitch reduced to the coordinates that enter its linear predictor.
/// Absent terms point at the zero sentinel slot `dim`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompiledRow {
    /// intercept, location slope, count, catcher, pitcher, batter
    pub idx: [u32; 6],
    pub lo: f64,
    pub y: f64,
}

impl CompiledRow {
    #[inline]
    pub fn eta(&self, theta_ext: &[f64]) -> f64 {
        let i = &self.idx;
        theta_ext[i[0] as usize]
            + self.lo * theta_ext[i[1] as usize]
            + theta_ext[i[2] as usize]
            + theta_ext[i[3] as usize]
            + theta_ext[i[4] as usize]
            + theta_ext[i[5] as usize]
    }

    /// The predictor under an unextended parameter vector; the sentinel slot reads as zero.
    #[inline]
    pub fn eta_at(&self, theta: &[f64]) -> f64 {
        let v = |k: usize| theta.get(self.idx[k] as usize).copied().unwrap_or(0.0);
        v(0) + self.lo * v(1) + v(2) + v(3) + v(4) + v(5)
    }

    pub fn max_index(&self) -> u32 {
        self.idx.iter().copied().max().unwrap_or(0)
    }
}

/// Log-likelihood of `y` under success log-odds `eta`, and its derivative in `eta`.
#[inline]
fn bernoulli_logit(eta: f64, y: f64) -> (f64, f64) {
    let e = (-eta.abs()).exp();
    let p = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (y * eta - eta.max(0.0) - e.ln_1p(), y - p)
}

/// Neumaier's compensated sum.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.carry += if self.sum.abs() >= x.abs() {
            (self.sum - t) + x
        } else {
            (x - t) + self.sum
        };
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `child[u][k] ~ N(mean[k], tau2)`
#[derive(Clone, Debug)]
struct HierGroup {
    child_offset: usize,
    n_umpires: usize,
    width: usize,
    mean_offset: usize,
    tau2: f64,
}

/// `theta[offset + k] ~ N(prior_mean[k], exp(theta[log_var]))`
#[derive(Clone, Debug)]
struct TopGroup {
    offset: usize,
    prior_mean: Vec<f64>,
    log_var: usize,
}

/// Levels a pitch resolves to, before coordinates are assigned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PitchLevels {
    pub umpire: Option<usize>,
    pub combo: HandCombo,
    pub count: Option<usize>,
    pub catcher: Option<usize>,
    pub pitcher: Option<usize>,
    pub batter: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ModelInstance {
    pub spec: ModelSpec,
    pub index: IndexMap,
    pub mu_lo: [f64; 4],
    rows: Vec<CompiledRow>,
    hier: Vec<HierGroup>,
    top: Vec<TopGroup>,
    log_vars: Vec<usize>,
}

fn levels_by_appearance<'a>(ids: impl Iterator<Item = &'a str>) -> (Vec<String>, Vec<usize>) {
    let mut order: Vec<String> = Vec::new();
    let mut freq: Vec<usize> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for id in ids {
        match seen.get(id) {
            Some(&k) => freq[k] += 1,
            None => {
                seen.insert(id, order.len());
                order.push(id.to_string());
                freq.push(1);
            }
        }
    }
    (order, freq)
}

fn choose_baseline(factor: Factor, ids: &[String], freq: &[usize], requested: Option<&String>) -> Result<String> {
    match requested {
        Some(id) if ids.contains(id) => Ok(id.clone()),
        Some(id) => Err(Error::UnknownLevel {
            factor: factor.name(),
            id: id.clone(),
        }),
        None => {
            // most frequent; ties go to the earliest appearance
            let mut best = 0;
            for (k, f) in freq.iter().enumerate() {
                if *f > freq[best] {
                    best = k;
                }
            }
            Ok(ids.get(best).cloned().unwrap_or_default())
        }
    }
}

/// Builds the index map, design rows and prior structure for `spec`.
pub fn build_instance(data: &Dataset, spec: &ModelSpec, baselines: &Baselines) -> Result<ModelInstance> {
    spec.validate()?;
    if data.pitches.len() != data.covariates.len() {
        return Err(Error::DimensionMismatch {
            expected: data.pitches.len(),
            got: data.covariates.len(),
        });
    }
    for (p, c) in data.pitches.iter().zip(&data.covariates) {
        if !p.taken || p.call.is_none() {
            return Err(Error::InvalidInput(format!("pitch {} was not taken", p.pitch_id)));
        }
        if c.combo != HandCombo::of(p) || !c.scaled_logodds.is_finite() {
            return Err(Error::InvalidInput(format!(
                "missing or mismatched location covariate for pitch {}",
                p.pitch_id
            )));
        }
    }
    let ps = &data.pitches;
    let (umpires, _) = levels_by_appearance(ps.iter().map(|p| p.umpire_id.as_str()));
    let count_names: Vec<String> = ps.iter().map(|p| p.count.to_string()).collect();
    let (count_ids, _) = levels_by_appearance(count_names.iter().map(String::as_str));
    let (ca_ids, ca_freq) = levels_by_appearance(ps.iter().map(|p| p.catcher_id.as_str()));
    let (pi_ids, pi_freq) = levels_by_appearance(ps.iter().map(|p| p.pitcher_id.as_str()));
    let (ba_ids, ba_freq) = levels_by_appearance(ps.iter().map(|p| p.batter_id.as_str()));

    let counts = FactorLevels::new(Factor::Count, count_ids, Count::ZERO.to_string());
    let ca_base = choose_baseline(Factor::Catcher, &ca_ids, &ca_freq, baselines.catcher.as_ref())?;
    let pi_base = choose_baseline(Factor::Pitcher, &pi_ids, &pi_freq, baselines.pitcher.as_ref())?;
    let ba_base = choose_baseline(Factor::Batter, &ba_ids, &ba_freq, baselines.batter.as_ref())?;
    let index = IndexMap::new(
        spec,
        umpires,
        counts,
        FactorLevels::new(Factor::Catcher, ca_ids, ca_base),
        FactorLevels::new(Factor::Pitcher, pi_ids, pi_base),
        FactorLevels::new(Factor::Batter, ba_ids, ba_base),
    );
    ModelInstance::with_index(spec.clone(), index, data)
}

impl ModelInstance {
    /// Assembles an instance on an existing index map (e.g. one loaded from disk).
    pub fn with_index(spec: ModelSpec, index: IndexMap, data: &Dataset) -> Result<Self> {
        let mut inst = ModelInstance {
            spec,
            index,
            mu_lo: data.mu_lo,
            rows: Vec::new(),
            hier: Vec::new(),
            top: Vec::new(),
            log_vars: Vec::new(),
        };
        inst.build_prior();
        inst.rows = inst.compile(&data.pitches, &data.covariates)?;
        Ok(inst)
    }

    fn build_prior(&mut self) {
        let idx = &self.index;
        let lv = |v: VarianceBlock| idx.log_variance_coordinate(v).expect("variance block present");
        let b = |bl: Block| idx.block(bl).cloned();
        let mut hier = Vec::new();
        let mut top = Vec::new();
        let tau = &self.spec.tau2;
        for (child, mean, v, m0) in [
            (
                Block::UmpireIntercept,
                Block::MeanIntercept,
                VarianceBlock::Intercept,
                [0.0; 4],
            ),
            (
                Block::UmpireLocation,
                Block::MeanLocation,
                VarianceBlock::Location,
                self.mu_lo,
            ),
        ] {
            let c = b(child).unwrap();
            let m = b(mean).unwrap();
            hier.push(HierGroup {
                child_offset: c.offset,
                n_umpires: c.n_umpires,
                width: 4,
                mean_offset: m.offset,
                tau2: tau.get(v),
            });
            top.push(TopGroup {
                offset: m.offset,
                prior_mean: m0.to_vec(),
                log_var: lv(v),
            });
        }
        for f in Factor::ALL {
            let Some(m) = b(Block::Effect(f)) else { continue };
            top.push(TopGroup {
                offset: m.offset,
                prior_mean: vec![0.0; m.width],
                log_var: lv(f.variance()),
            });
            if let Some(c) = b(Block::UmpireEffect(f)) {
                hier.push(HierGroup {
                    child_offset: c.offset,
                    n_umpires: c.n_umpires,
                    width: c.width,
                    mean_offset: m.offset,
                    tau2: tau.get(f.variance()),
                });
            }
        }
        self.log_vars = idx.variance_blocks.iter().map(|v| lv(*v)).collect();
        self.hier = hier;
        self.top = top;
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    pub fn rows(&self) -> &[CompiledRow] {
        &self.rows
    }

    pub fn n_pitches(&self) -> usize {
        self.rows.len()
    }

    /// Resolves a pitch's participants against the index map. Unseen levels map to `None`.
    pub fn levels(&self, p: &PitchRecord) -> PitchLevels {
        let ix = &self.index;
        PitchLevels {
            umpire: ix.umpire(&p.umpire_id),
            combo: HandCombo::of(p),
            count: ix.counts.level(&p.count.to_string()),
            catcher: ix.catchers.level(&p.catcher_id),
            pitcher: ix.pitchers.level(&p.pitcher_id),
            batter: ix.batters.level(&p.batter_id),
        }
    }

    /// Coordinate holding the effect of `level` of `factor` as seen by `umpire`,
    /// or the sentinel when the term is absent, baseline, or unseen.
    pub fn effect_coordinate(&self, factor: Factor, umpire: Option<usize>, level: Option<usize>) -> u32 {
        let sentinel = self.dim() as u32;
        let Some(level) = level else { return sentinel };
        let Some(pos) = self.index.factor(factor).effect_position_of_level(level) else {
            return sentinel;
        };
        let per_umpire = self.index.block(Block::UmpireEffect(factor));
        match (per_umpire, umpire) {
            (Some(b), Some(u)) => b.at(u, pos) as u32,
            _ => match self.index.block(Block::Effect(factor)) {
                Some(b) => b.at(0, pos) as u32,
                None => sentinel,
            },
        }
    }

    pub fn row_for(&self, levels: &PitchLevels, lo: f64, y: f64) -> CompiledRow {
        let h = levels.combo.index();
        let (int, loc) = match levels.umpire {
            Some(u) => (
                self.index.block(Block::UmpireIntercept).unwrap().at(u, h),
                self.index.block(Block::UmpireLocation).unwrap().at(u, h),
            ),
            None => (
                self.index.block(Block::MeanIntercept).unwrap().at(0, h),
                self.index.block(Block::MeanLocation).unwrap().at(0, h),
            ),
        };
        CompiledRow {
            idx: [
                int as u32,
                loc as u32,
                self.effect_coordinate(Factor::Count, levels.umpire, levels.count),
                self.effect_coordinate(Factor::Catcher, levels.umpire, levels.catcher),
                self.effect_coordinate(Factor::Pitcher, levels.umpire, levels.pitcher),
                self.effect_coordinate(Factor::Batter, levels.umpire, levels.batter),
            ],
            lo,
            y,
        }
    }

    /// Design rows for arbitrary pitches. Unseen umpires fall back to the
    /// hierarchical means and unseen levels contribute zero.
    pub fn compile(&self, pitches: &[PitchRecord], covariates: &[LocationCovariate]) -> Result<Vec<CompiledRow>> {
        if pitches.len() != covariates.len() {
            return Err(Error::DimensionMismatch {
                expected: pitches.len(),
                got: covariates.len(),
            });
        }
        pitches
            .iter()
            .zip(covariates)
            .map(|(p, c)| {
                if c.combo != HandCombo::of(p) {
                    return Err(Error::InvalidInput(format!(
                        "location covariate does not match pitch {}",
                        p.pitch_id
                    )));
                }
                let y = if p.is_called_strike() { 1.0 } else { 0.0 };
                Ok(self.row_for(&self.levels(p), c.scaled_logodds, y))
            })
            .collect()
    }

    pub fn extend(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.index.check_dim(theta)?;
        let mut ext = Vec::with_capacity(theta.len() + 1);
        ext.extend_from_slice(theta);
        ext.push(0.0);
        Ok(ext)
    }

    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; theta.len()];
        self.log_posterior_grad(theta, &mut g)
    }

    pub fn grad_log_posterior(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; theta.len()];
        self.log_posterior_grad(theta, &mut g)?;
        Ok(g)
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        let ext = self.extend(theta)?;
        Ok(self
            .rows
            .iter()
            .map(|r| {
                let eta = r.eta(&ext);
                r.y * eta - softplus(eta)
            })
            .sum())
    }

    /// Log posterior (up to nothing: all normalizing constants included)
    /// and its gradient, written into `grad`.
    pub fn log_posterior_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        let ext = self.extend(theta)?;
        let dim = theta.len();
        if grad.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: grad.len(),
            });
        }
        let mut g = vec![0.0; dim + 1];
        // compensated summation keeps the total accurate to a few ulps,
        // which finite-difference checks on large corpora rely on
        let mut lp = Neumaier::default();
        for r in &self.rows {
            let (ll, resid) = bernoulli_logit(r.eta(&ext), r.y);
            lp.add(ll);
            let i = &r.idx;
            g[i[0] as usize] += resid;
            g[i[1] as usize] += resid * r.lo;
            g[i[2] as usize] += resid;
            g[i[3] as usize] += resid;
            g[i[4] as usize] += resid;
            g[i[5] as usize] += resid;
        }

        for h in &self.hier {
            let norm = -0.5 * (LN_2PI + h.tau2.ln());
            for u in 0..h.n_umpires {
                for k in 0..h.width {
                    let c = h.child_offset + u * h.width + k;
                    let m = h.mean_offset + k;
                    let d = theta[c] - theta[m];
                    lp.add(norm - 0.5 * d * d / h.tau2);
                    g[c] -= d / h.tau2;
                    g[m] += d / h.tau2;
                }
            }
        }

        for t in &self.top {
            let s = theta[t.log_var];
            let inv_var = (-s).exp();
            for (k, m0) in t.prior_mean.iter().enumerate() {
                let c = t.offset + k;
                let d = theta[c] - m0;
                lp.add(-0.5 * (LN_2PI + s) - 0.5 * d * d * inv_var);
                g[c] -= d * inv_var;
                g[t.log_var] += -0.5 + 0.5 * d * d * inv_var;
            }
        }

        let (a, b) = (self.spec.ig_shape, self.spec.ig_rate);
        let ig_norm = a * b.ln() - ln_gamma(a);
        for &c in &self.log_vars {
            let s = theta[c];
            let e = (-s).exp();
            lp.add(ig_norm - a * s - b * e);
            g[c] += -a + b * e;
        }

        grad.copy_from_slice(&g[..dim]);
        Ok(lp.total())
    }
}

impl ModelInstance {
    /// A draw from the prior. Variances listed in `fixed_sigma2` are held at
    /// the given values instead of being drawn from the inverse gamma.
    pub fn sample_prior<R: rand::Rng + ?Sized>(&self, rng: &mut R, fixed_sigma2: &[(VarianceBlock, f64)]) -> Vec<f64> {
        use rand_distr::{Distribution, Gamma, StandardNormal};
        let mut theta = vec![0.0; self.dim()];
        let gamma = Gamma::new(self.spec.ig_shape, 1.0 / self.spec.ig_rate).expect("valid inverse gamma");
        for (v, &c) in self.index.variance_blocks.iter().zip(&self.log_vars) {
            theta[c] = match fixed_sigma2.iter().find(|(b, _)| b == v) {
                Some((_, s2)) => s2.ln(),
                None => -gamma.sample(rng).ln(),
            };
        }
        for t in &self.top {
            let sd = (0.5 * theta[t.log_var]).exp();
            for (k, m0) in t.prior_mean.iter().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                theta[t.offset + k] = m0 + sd * z;
            }
        }
        for h in &self.hier {
            let sd = h.tau2.sqrt();
            for u in 0..h.n_umpires {
                for k in 0..h.width {
                    let z: f64 = StandardNormal.sample(rng);
                    theta[h.child_offset + u * h.width + k] = theta[h.mean_offset + k] + sd * z;
                }
            }
        }
        theta
    }
}
