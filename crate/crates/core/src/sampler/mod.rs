//! Gradient-based MCMC: NUTS or static HMC with windowed warmup adaptation,
//! split-R̂ and effective sample size diagnostics.

mod adapt;
mod diagnostics;
mod hmc;
mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adapt::DualAveragingConfig;
pub use diagnostics::{
    check_convergence, check_convergence_with, effective_sample_size, split_rhat, ConvergenceReport,
    CoordinateDiagnostic, Degenerate,
};
pub use io::{read_draws, write_draws, DrawsMetadata};

use crate::error::{Error, Result};
use crate::model::{ModelId, ModelInstance};
use adapt::{DualAveraging, WindowedMetric};
use hmc::{init_step_size, nuts_transition, static_transition, Integrator, TransitionStats};

/// A differentiable log density on `R^dim`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns `log p(theta)` and writes its gradient into `grad`.
    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64>;

    fn coordinate_name(&self, i: usize) -> String {
        format!("theta[{i}]")
    }
}

impl LogDensity for ModelInstance {
    fn dim(&self) -> usize {
        ModelInstance::dim(self)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.log_posterior_grad(theta, grad)
    }

    fn coordinate_name(&self, i: usize) -> String {
        self.index.coordinate_name(i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Nuts,
    StaticHmc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    /// Warmup plus retained iterations per chain.
    pub n_total: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub algorithm: Algorithm,
    pub max_tree_depth: u32,
    /// Leapfrog steps per static-HMC transition.
    pub n_leapfrog: u32,
    /// Relative step-size jitter for static HMC.
    pub step_jitter: f64,
    /// Initial values are drawn uniformly from `(-init_radius, init_radius)`.
    pub init_radius: f64,
    pub max_divergence_rate: f64,
    pub dual_averaging: DualAveragingConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_warmup: 2000,
            n_total: 4000,
            seed: 1,
            target_accept: 0.8,
            algorithm: Algorithm::Nuts,
            max_tree_depth: 10,
            n_leapfrog: 32,
            step_jitter: 0.1,
            init_radius: 2.0,
            max_divergence_rate: 0.1,
            dual_averaging: DualAveragingConfig::default(),
        }
    }
}

impl SamplerConfig {
    /// Default budgets: 4000 iterations for the two smallest models, 6000 otherwise.
    pub fn for_model(model: ModelId) -> Self {
        let n_total = match model {
            ModelId::M1 | ModelId::M2 => 4000,
            _ => 6000,
        };
        SamplerConfig {
            n_total,
            ..SamplerConfig::default()
        }
    }

    pub fn n_draws(&self) -> usize {
        self.n_total - self.n_warmup
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("sampler config: {m}")));
        if self.n_chains < 2 {
            return bad("at least 2 chains are required for split R-hat");
        }
        if self.n_total <= self.n_warmup {
            return bad("n_total must exceed n_warmup");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if self.max_tree_depth == 0 || self.n_leapfrog == 0 {
            return bad("trajectory length limits must be positive");
        }
        if !(0.0..1.0).contains(&self.step_jitter) {
            return bad("step jitter must lie in [0, 1)");
        }
        if !(self.init_radius >= 0.0) {
            return bad("init radius must be nonnegative");
        }
        if !(self.max_divergence_rate >= 0.0 && self.max_divergence_rate <= 1.0) {
            return bad("max divergence rate must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Per-chain adaptation results and per-draw transition statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub n_leapfrog: Vec<u32>,
    pub tree_depth: Vec<u32>,
    pub divergent: Vec<bool>,
    pub energy: Vec<f64>,
    /// Nominal step size in force at each retained draw.
    pub draw_step_size: Vec<f64>,
    /// Inverse metric in force at the last retained draw.
    pub final_inv_metric: Vec<f64>,
}

impl ChainStats {
    pub fn n_divergent(&self) -> usize {
        self.divergent.iter().filter(|d| **d).count()
    }

    pub fn mean_accept(&self) -> f64 {
        crate::stats::mean(&self.accept_stat)
    }
}

/// Retained draws, chain-major: `values[(chain * n_iter + iter) * dim + coord]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub n_chains: usize,
    pub n_iter: usize,
    pub dim: usize,
    pub values: Vec<f64>,
    pub names: Vec<String>,
    pub index_hash: Option<String>,
    pub stats: Vec<ChainStats>,
}

impl PosteriorDraws {
    pub fn from_chains(chains: Vec<Vec<Vec<f64>>>, names: Vec<String>) -> Result<Self> {
        let n_chains = chains.len();
        let n_iter = chains.first().map_or(0, Vec::len);
        let dim = names.len();
        let mut values = Vec::with_capacity(n_chains * n_iter * dim);
        for c in &chains {
            if c.len() != n_iter {
                return Err(Error::InvalidInput("chains have unequal lengths".into()));
            }
            for d in c {
                if d.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: d.len(),
                    });
                }
                values.extend_from_slice(d);
            }
        }
        Ok(PosteriorDraws {
            n_chains,
            n_iter,
            dim,
            values,
            names,
            index_hash: None,
            stats: Vec::new(),
        })
    }

    pub fn draw(&self, chain: usize, iter: usize) -> &[f64] {
        let start = (chain * self.n_iter + iter) * self.dim;
        &self.values[start..start + self.dim]
    }

    /// All draws in chain-major order.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim.max(1)).take(self.n_chains * self.n_iter)
    }

    pub fn n_draws(&self) -> usize {
        self.n_chains * self.n_iter
    }

    pub fn chain(&self, chain: usize, coord: usize) -> Vec<f64> {
        (0..self.n_iter).map(|i| self.draw(chain, i)[coord]).collect()
    }

    pub fn chains(&self, coord: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains).map(|c| self.chain(c, coord)).collect()
    }

    /// Every `step`-th draw of every chain.
    pub fn thinned(&self, step: usize) -> Vec<&[f64]> {
        let step = step.max(1);
        (0..self.n_chains)
            .flat_map(|c| (0..self.n_iter).step_by(step).map(move |i| (c, i)))
            .map(|(c, i)| self.draw(c, i))
            .collect()
    }

    pub fn mean(&self, coord: usize) -> f64 {
        self.iter_draws().map(|d| d[coord]).sum::<f64>() / self.n_draws() as f64
    }

    pub fn sd(&self, coord: usize) -> f64 {
        let xs: Vec<f64> = self.iter_draws().map(|d| d[coord]).collect();
        crate::stats::sample_sd(&xs)
    }

    pub fn n_divergent(&self) -> usize {
        self.stats.iter().map(ChainStats::n_divergent).sum()
    }
}

fn chain_key(seed: u64, chain: usize) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(chain as u64).to_le_bytes());
    key
}

/// Generator for one `(seed, chain, iteration)` triple.
pub fn iteration_rng(seed: u64, chain: usize, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(chain_key(seed, chain));
    rng.set_stream(iteration);
    rng
}

const INIT_STREAM: u64 = u64::MAX;
const STEP_SEARCH_STREAM: u64 = u64::MAX - 1;
const INIT_ATTEMPTS: usize = 100;

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    stats: ChainStats,
}

fn run_chain<D: LogDensity + ?Sized>(target: &D, cfg: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut inv_metric = vec![1.0; dim];

    let mut init_rng = iteration_rng(cfg.seed, chain, INIT_STREAM);
    let mut z = None;
    for _ in 0..INIT_ATTEMPTS {
        let q: Vec<f64> = (0..dim)
            .map(|_| {
                if cfg.init_radius > 0.0 {
                    init_rng.random_range(-cfg.init_radius..cfg.init_radius)
                } else {
                    0.0
                }
            })
            .collect();
        let integ = Integrator {
            target,
            inv_metric: &inv_metric,
        };
        let pt = integ.point(q)?;
        if pt.logp.is_finite() {
            z = Some(pt);
            break;
        }
    }
    let mut z = z.ok_or(Error::Initialization { chain })?;

    let mut eps = {
        let integ = Integrator {
            target,
            inv_metric: &inv_metric,
        };
        init_step_size(&integ, &z, 1.0, &mut iteration_rng(cfg.seed, chain, STEP_SEARCH_STREAM))?
    };
    let mut da = DualAveraging::new(cfg.dual_averaging, cfg.target_accept, eps);
    let mut windows = WindowedMetric::new(dim, cfg.n_warmup);

    let n_draws = cfg.n_draws();
    let mut draws = Vec::with_capacity(n_draws);
    let mut stats = ChainStats {
        step_size: eps,
        inv_metric: Vec::new(),
        accept_stat: Vec::with_capacity(n_draws),
        n_leapfrog: Vec::with_capacity(n_draws),
        tree_depth: Vec::with_capacity(n_draws),
        divergent: Vec::with_capacity(n_draws),
        energy: Vec::with_capacity(n_draws),
        draw_step_size: Vec::with_capacity(n_draws),
        final_inv_metric: Vec::new(),
    };
    if cfg.n_warmup == 0 {
        stats.step_size = eps;
        stats.inv_metric = inv_metric.clone();
    }

    let report_every = (cfg.n_total / 10).max(1);
    for it in 0..cfg.n_total {
        let mut rng = iteration_rng(cfg.seed, chain, it as u64);
        let t: TransitionStats = {
            let integ = Integrator {
                target,
                inv_metric: &inv_metric,
            };
            match cfg.algorithm {
                Algorithm::Nuts => nuts_transition(&integ, &mut z, eps, cfg.max_tree_depth, &mut rng)?,
                Algorithm::StaticHmc => {
                    static_transition(&integ, &mut z, eps, cfg.n_leapfrog, cfg.step_jitter, &mut rng)?
                }
            }
        };
        if it < cfg.n_warmup {
            eps = da.learn(t.accept_stat);
            if windows.learn(&mut inv_metric, &z.q) {
                let integ = Integrator {
                    target,
                    inv_metric: &inv_metric,
                };
                eps = init_step_size(&integ, &z, eps, &mut rng)?;
                da.restart(eps);
            }
            if it + 1 == cfg.n_warmup {
                eps = da.final_step_size();
                stats.step_size = eps;
                stats.inv_metric = inv_metric.clone();
            }
        } else {
            draws.push(z.q.clone());
            stats.accept_stat.push(t.accept_stat);
            stats.n_leapfrog.push(t.n_leapfrog);
            stats.tree_depth.push(t.tree_depth);
            stats.divergent.push(t.divergent);
            stats.energy.push(t.energy);
            stats.draw_step_size.push(eps);
        }
        if (it + 1) % report_every == 0 {
            log::debug!(
                "chain {chain}: iteration {}/{} (step size {eps:.4}, {} leapfrog steps)",
                it + 1,
                cfg.n_total,
                t.n_leapfrog
            );
        }
    }
    stats.final_inv_metric = inv_metric;

    let divergent = stats.n_divergent();
    let rate = divergent as f64 / n_draws as f64;
    if rate > cfg.max_divergence_rate {
        return Err(Error::Divergences {
            chain,
            rate,
            limit: cfg.max_divergence_rate,
            divergent,
            draws: n_draws,
        });
    }
    Ok(ChainOutput { draws, stats })
}

/// Runs `cfg.n_chains` chains in parallel. Each chain's randomness is keyed
/// by `(seed, chain, iteration)`, so output does not depend on scheduling.
pub fn sample<D: LogDensity + ?Sized>(target: &D, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let outputs: Vec<Result<ChainOutput>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, cfg, c))
        .collect();
    let mut chains = Vec::with_capacity(cfg.n_chains);
    let mut stats = Vec::with_capacity(cfg.n_chains);
    for o in outputs {
        let o = o?;
        chains.push(o.draws);
        stats.push(o.stats);
    }
    let names = (0..target.dim()).map(|i| target.coordinate_name(i)).collect();
    let mut draws = PosteriorDraws::from_chains(chains, names)?;
    draws.stats = stats;
    Ok(draws)
}

/// Samples a model instance and tags the draws with its index-map hash.
pub fn sample_model(instance: &ModelInstance, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    let mut draws = sample(instance, cfg)?;
    draws.index_hash = Some(instance.index.hash());
    Ok(draws)
}
