//! Synthetic corpora with known ground truth: model-generated calls on
//! analytic location surfaces, a count-level run scoring simulator, a toy
//! logistic density and a grid-quadrature posterior oracle.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locgam::{standardize_raw, HandCombo, LocationCovariate, LocationSource};
use crate::model::{
    build_instance, Baselines, Block, Dataset, Factor, IndexMap, ModelId, ModelInstance, ModelSpec, VarianceBlock,
};
use crate::pitchdata::{zone_distance, Call, Count, Hand, PitchRecord, StrikeZone, FRAMEABLE_REACH_FT};
use crate::runvalue::RunValueTable;
use crate::sampler::LogDensity;
use crate::stats::{inv_logit, softplus};

const ZONE_TOP: f64 = 3.5;
const ZONE_BOTTOM: f64 = 1.5;

/// An analytic called-strike log-odds surface: `peak * tanh(-steepness * d / peak)`
/// inside and `-steepness * d` outside, where `d` is the signed distance to the
/// zone expanded by one ball radius and shifted horizontally by `x_shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueSurface {
    pub zone: StrikeZone,
    pub x_shift: f64,
    pub peak: f64,
    pub steepness: f64,
}

impl TrueSurface {
    pub fn logodds(&self, x: f64, z: f64) -> f64 {
        let d = zone_distance(x - self.x_shift, z, &self.zone) - self.zone.ball_radius;
        if d <= 0.0 {
            self.peak * (-self.steepness * d / self.peak).tanh()
        } else {
            -self.steepness * d
        }
    }
}

/// The four true surfaces with the standardization constants of the corpus they generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueLocation {
    pub surfaces: [TrueSurface; 4],
    pub mu_lo: [f64; 4],
}

impl TrueLocation {
    pub fn default_surfaces() -> [TrueSurface; 4] {
        let zone = StrikeZone::new(ZONE_TOP, ZONE_BOTTOM).expect("valid zone");
        HandCombo::ALL.map(|h| TrueSurface {
            zone,
            x_shift: match (h.batter_hand, h.pitcher_hand) {
                (Hand::R, Hand::R) => 0.0,
                (Hand::R, Hand::L) => 0.03,
                (Hand::L, Hand::R) => -0.08,
                (Hand::L, Hand::L) => -0.04,
            },
            peak: 3.0,
            steepness: 8.0,
        })
    }
}

impl LocationSource for TrueLocation {
    fn raw_logodds(&self, x: f64, z: f64, combo: HandCombo) -> Result<f64> {
        Ok(self.surfaces[combo.index()].logodds(x, z))
    }

    fn mu_lo(&self) -> [f64; 4] {
        self.mu_lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSizes {
    pub n_umpires: usize,
    pub n_catchers: usize,
    pub n_pitchers: usize,
    pub n_batters: usize,
    pub n_pitches: usize,
    /// Extra pitches from the preceding season, for fitting location surfaces.
    pub n_history: usize,
}

impl Default for SynthSizes {
    fn default() -> Self {
        SynthSizes {
            n_umpires: 5,
            n_catchers: 30,
            n_pitchers: 40,
            n_batters: 60,
            n_pitches: 20_000,
            n_history: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sizes: SynthSizes,
    pub model: ModelId,
    pub season: i32,
    pub seed: u64,
    /// Variances held fixed when drawing the truth; blocks not listed are
    /// drawn from their inverse-gamma prior.
    pub fixed_sigma2: Vec<(VarianceBlock, f64)>,
    pub right_handed_share: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sizes: SynthSizes::default(),
            model: ModelId::M3,
            season: 2014,
            seed: 1,
            fixed_sigma2: vec![
                (VarianceBlock::Intercept, 0.25),
                (VarianceBlock::Location, 0.25),
                (VarianceBlock::Count, 0.25),
                (VarianceBlock::Catcher, 0.25),
                (VarianceBlock::Pitcher, 0.04),
                (VarianceBlock::Batter, 0.04),
            ],
            right_handed_share: 0.7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sizes;
        if [s.n_umpires, s.n_catchers, s.n_pitchers, s.n_batters, s.n_pitches].contains(&0) {
            return Err(Error::InvalidInput("synthetic sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.right_handed_share) {
            return Err(Error::InvalidInput("right_handed_share must lie in [0, 1]".into()));
        }
        if self.fixed_sigma2.iter().any(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("fixed variances must be positive".into()));
        }
        Ok(())
    }
}

/// Expected runs to the end of the inning after a called ball or strike, by count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountProcess {
    pub count: Count,
    /// Share of taken pitches thrown in this count.
    pub share: f64,
    /// Probability that a taken pitch in this count is called a strike.
    pub strike_share: f64,
    pub mean_after_ball: f64,
    pub mean_after_strike: f64,
}

/// Runs after each taken pitch are Poisson with the per-count, per-call mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringProcess {
    pub counts: Vec<CountProcess>,
    pub pitches_per_inning: u32,
}

impl ScoringProcess {
    /// Means and shares from a run value table, with even ball/strike odds.
    pub fn from_table(table: &RunValueTable) -> Self {
        ScoringProcess {
            counts: table
                .rows()
                .iter()
                .map(|r| CountProcess {
                    count: r.count,
                    share: r.proportion,
                    strike_share: 0.5,
                    mean_after_ball: r.e_runs_ball,
                    mean_after_strike: r.e_runs_strike,
                })
                .collect(),
            pitches_per_inning: 5,
        }
    }

    pub fn process(&self, count: Count) -> Option<&CountProcess> {
        self.counts.iter().find(|c| c.count == count)
    }

    /// The analytic value of a called strike.
    pub fn rho(&self, count: Count) -> Option<f64> {
        self.process(count).map(|c| c.mean_after_ball - c.mean_after_strike)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("scoring process: {m}")));
        if self.pitches_per_inning == 0 {
            return bad("pitches_per_inning must be positive".into());
        }
        if self.counts.is_empty() || !(self.counts.iter().map(|c| c.share).sum::<f64>() > 0.0) {
            return bad("count shares must have a positive sum".into());
        }
        for c in &self.counts {
            if !(c.share >= 0.0 && (0.0..=1.0).contains(&c.strike_share)) {
                return bad(format!("bad shares for count {}", c.count));
            }
            if !(c.mean_after_ball >= 0.0 && c.mean_after_strike >= 0.0) {
                return bad(format!("negative run mean for count {}", c.count));
            }
        }
        Ok(())
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u32
}

fn template_pitch() -> PitchRecord {
    PitchRecord {
        pitch_id: String::new(),
        season: 0,
        half_inning_id: String::new(),
        umpire_id: String::new(),
        batter_id: String::new(),
        catcher_id: String::new(),
        pitcher_id: String::new(),
        batter_hand: Hand::R,
        pitcher_hand: Hand::R,
        count: Count::ZERO,
        x: 0.0,
        z: 2.5,
        sz_top: ZONE_TOP,
        sz_bot: ZONE_BOTTOM,
        taken: true,
        call: Some(Call::Ball),
        runs_rest_of_inning: 0,
    }
}

/// Taken pitches whose runs to the end of the inning follow `process`.
/// Locations and participants are placeholders.
pub fn simulate_innings(n_innings: usize, process: &ScoringProcess, seed: u64) -> Result<Vec<PitchRecord>> {
    process.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = WeightedIndex::new(process.counts.iter().map(|c| c.share))
        .map_err(|e| Error::InvalidInput(format!("count shares: {e}")))?;
    let mut out = Vec::with_capacity(n_innings * process.pitches_per_inning as usize);
    for inning in 0..n_innings {
        for k in 0..process.pitches_per_inning {
            let c = &process.counts[pick.sample(&mut rng)];
            let strike = rng.random::<f64>() < c.strike_share;
            let mean = if strike { c.mean_after_strike } else { c.mean_after_ball };
            let x = rng.random_range(-1.0..1.0);
            let z = rng.random_range(1.5..3.5);
            out.push(PitchRecord {
                pitch_id: format!("S{inning:07}-{k}"),
                season: 2014,
                half_inning_id: format!("S{inning:07}"),
                umpire_id: "U00".into(),
                batter_id: "B00".into(),
                catcher_id: "C00".into(),
                pitcher_id: "P00".into(),
                count: c.count,
                x,
                z,
                call: Some(if strike { Call::Strike } else { Call::Ball }),
                runs_rest_of_inning: poisson(mean, &mut rng),
                ..template_pitch()
            });
        }
    }
    Ok(out)
}

/// Pitch locations for one handedness combination: a three-component
/// Gaussian mixture, mirrored for left-handed batters.
fn sample_location<R: Rng + ?Sized>(combo: HandCombo, zone: &StrikeZone, rng: &mut R) -> (f64, f64) {
    const COMPONENTS: [(f64, f64, f64, f64, f64); 3] = [
        (0.35, 0.0, 2.5, 0.45, 0.45),
        (0.35, 0.75, 2.2, 0.35, 0.5),
        (0.30, 0.0, 1.4, 0.5, 0.3),
    ];
    let mirror = if combo.batter_hand == Hand::L { -1.0 } else { 1.0 };
    let shift = if combo.pitcher_hand == Hand::L { -0.1 } else { 0.0 };
    loop {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = COMPONENTS[COMPONENTS.len() - 1];
        for c in COMPONENTS {
            acc += c.0;
            if u < acc {
                comp = c;
                break;
            }
        }
        let (_, mx, mz, sx, sz) = comp;
        let x = Normal::new(mirror * mx + shift, sx).unwrap().sample(rng);
        let z = Normal::new(mz, sz).unwrap().sample(rng);
        if zone_distance(x, z, zone) <= FRAMEABLE_REACH_FT {
            return (x, z);
        }
    }
}

struct Participants {
    umpires: Vec<String>,
    catchers: Vec<String>,
    catcher_weights: WeightedIndex<f64>,
    pitchers: Vec<(String, Hand)>,
    batters: Vec<(String, Hand, f64, f64)>,
}

impl Participants {
    fn new<R: Rng + ?Sized>(sizes: &SynthSizes, rh: f64, rng: &mut R) -> Self {
        let hand = |rng: &mut R| if rng.random::<f64>() < rh { Hand::R } else { Hand::L };
        let umpires = (0..sizes.n_umpires).map(|i| format!("U{i:02}")).collect();
        let catchers = (0..sizes.n_catchers).map(|i| format!("C{i:02}")).collect();
        // the baseline catcher C00 receives twice the usual workload
        let weights: Vec<f64> = (0..sizes.n_catchers).map(|i| if i == 0 { 2.0 } else { 1.0 }).collect();
        let pitchers = (0..sizes.n_pitchers).map(|i| (format!("P{i:02}"), hand(rng))).collect();
        let batters = (0..sizes.n_batters)
            .map(|i| {
                let top = ZONE_TOP + rng.random_range(-0.05..0.05);
                let bot = ZONE_BOTTOM + rng.random_range(-0.05..0.05);
                (format!("B{i:02}"), hand(rng), top, bot)
            })
            .collect();
        Participants {
            umpires,
            catchers,
            catcher_weights: WeightedIndex::new(weights).expect("positive weights"),
            pitchers,
            batters,
        }
    }

    fn pitch<R: Rng + ?Sized>(
        &self,
        id: String,
        season: i32,
        zone: &StrikeZone,
        counts: &WeightedIndex<f64>,
        rng: &mut R,
    ) -> PitchRecord {
        let umpire = self.umpires[rng.random_range(0..self.umpires.len())].clone();
        let catcher = self.catchers[self.catcher_weights.sample(rng)].clone();
        let (pitcher, ph) = self.pitchers[rng.random_range(0..self.pitchers.len())].clone();
        let (batter, bh, top, bot) = self.batters[rng.random_range(0..self.batters.len())].clone();
        let count = Count::from_index(counts.sample(rng));
        let combo = HandCombo {
            batter_hand: bh,
            pitcher_hand: ph,
        };
        let (x, z) = sample_location(combo, zone, rng);
        PitchRecord {
            half_inning_id: format!("{id}-h"),
            pitch_id: id,
            season,
            umpire_id: umpire,
            batter_id: batter,
            catcher_id: catcher,
            pitcher_id: pitcher,
            batter_hand: bh,
            pitcher_hand: ph,
            count,
            x,
            z,
            sz_top: top,
            sz_bot: bot,
            ..template_pitch()
        }
    }
}

/// Everything needed to regenerate a synthetic corpus and to score recovery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub spec: ModelSpec,
    pub index: IndexMap,
    pub theta: Vec<f64>,
    pub location: TrueLocation,
    pub scoring: ScoringProcess,
}

impl GroundTruth {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut t: GroundTruth = serde_json::from_reader(std::io::BufReader::new(f))?;
        t.index.rebuild_lookups();
        t.index.check_dim(&t.theta)?;
        Ok(t)
    }

    /// League-level true effect of every non-baseline level of `factor`.
    pub fn effects(&self, factor: Factor) -> Vec<(String, f64)> {
        let Some(block) = self.index.block(Block::Effect(factor)) else {
            return Vec::new();
        };
        self.index
            .factor(factor)
            .effect_ids()
            .enumerate()
            .map(|(k, id)| (id.to_string(), self.theta[block.at(0, k)]))
            .collect()
    }

    pub fn catcher_effects(&self) -> Vec<(String, f64)> {
        self.effects(Factor::Catcher)
    }

    pub fn baseline_catcher(&self) -> &str {
        &self.index.catchers.baseline
    }
}

/// A generated corpus: history-season pitches first, then the model season.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub pitches: Vec<PitchRecord>,
    pub truth: GroundTruth,
}

impl SynthCorpus {
    pub fn season_pitches(&self) -> Vec<PitchRecord> {
        let season = self.truth.config.season;
        self.pitches.iter().filter(|p| p.season == season).cloned().collect()
    }

    /// The model-season pitches with their true location covariates.
    pub fn dataset(&self) -> Result<Dataset> {
        let pitches = self.season_pitches();
        let covariates = self.truth.location.covariates(&pitches)?;
        Dataset::new(pitches, covariates, self.truth.location.mu_lo)
    }

    /// The instance the truth was drawn on, rebuilt on the model-season pitches.
    pub fn true_instance(&self) -> Result<ModelInstance> {
        ModelInstance::with_index(self.truth.spec.clone(), self.truth.index.clone(), &self.dataset()?)
    }
}

/// The design of a synthetic corpus: participants, counts and locations, with
/// placeholder calls, plus the location covariates of the model-season pitches.
#[derive(Clone, Debug)]
pub struct SynthDesign {
    pub history: Vec<PitchRecord>,
    pub data: Dataset,
    pub location: TrueLocation,
}

pub fn synthesize_design(cfg: &SynthConfig) -> Result<SynthDesign> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let surfaces = TrueLocation::default_surfaces();
    let zone = surfaces[0].zone;
    let people = Participants::new(&cfg.sizes, cfg.right_handed_share, &mut rng);
    let reference = RunValueTable::reference();
    let counts = WeightedIndex::new(reference.rows().iter().map(|r| r.proportion)).expect("positive shares");
    let history: Vec<PitchRecord> = (0..cfg.sizes.n_history)
        .map(|i| people.pitch(format!("H{i:06}"), cfg.season - 1, &zone, &counts, &mut rng))
        .collect();
    let pitches: Vec<PitchRecord> = (0..cfg.sizes.n_pitches)
        .map(|i| people.pitch(format!("G{i:06}"), cfg.season, &zone, &counts, &mut rng))
        .collect();
    let combos: Vec<HandCombo> = pitches.iter().map(HandCombo::of).collect();
    let raw: Vec<f64> = pitches
        .iter()
        .zip(&combos)
        .map(|(p, c)| surfaces[c.index()].logodds(p.x, p.z))
        .collect();
    let st = standardize_raw(&raw, &combos)?;
    let location = TrueLocation {
        surfaces,
        mu_lo: st.mu_lo,
    };
    Ok(SynthDesign {
        history,
        data: Dataset::new(pitches, st.covariates, st.mu_lo)?,
        location,
    })
}

fn synth_baselines() -> Baselines {
    Baselines {
        catcher: Some("C00".into()),
        pitcher: Some("P00".into()),
        batter: Some("B00".into()),
    }
}

/// Samples every call of `pitches` as Bernoulli(inverse-logit(predictor))
/// under `theta`, and runs to the end of the inning from `scoring`.
pub fn assign_calls<R: Rng + ?Sized>(
    instance: &ModelInstance,
    theta: &[f64],
    pitches: &mut [PitchRecord],
    covariates: &[LocationCovariate],
    scoring: &ScoringProcess,
    rng: &mut R,
) -> Result<()> {
    instance.index.check_dim(theta)?;
    let rows = instance.compile(pitches, covariates)?;
    for (p, row) in pitches.iter_mut().zip(&rows) {
        let strike = rng.random::<f64>() < inv_logit(row.eta_at(theta));
        p.call = Some(if strike { Call::Strike } else { Call::Ball });
        let mean = scoring
            .process(p.count)
            .map_or(0.0, |c| if strike { c.mean_after_strike } else { c.mean_after_ball });
        p.runs_rest_of_inning = poisson(mean, rng);
    }
    Ok(())
}

/// A corpus whose calls follow the configured model with parameters drawn
/// from its priors (variances optionally fixed).
pub fn generate_calls(cfg: &SynthConfig) -> Result<SynthCorpus> {
    let design = synthesize_design(cfg)?;
    let spec = ModelSpec::new(cfg.model);
    let instance = build_instance(&design.data, &spec, &synth_baselines())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let theta = instance.sample_prior(&mut rng, &cfg.fixed_sigma2);
    generate_with_theta(cfg, design, instance, theta)
}

/// Like `generate_calls`, with the true parameter vector chosen by `choose`
/// from the instance built on the design.
pub fn generate_calls_with(cfg: &SynthConfig, choose: impl FnOnce(&ModelInstance) -> Vec<f64>) -> Result<SynthCorpus> {
    let design = synthesize_design(cfg)?;
    let spec = ModelSpec::new(cfg.model);
    let instance = build_instance(&design.data, &spec, &synth_baselines())?;
    let theta = choose(&instance);
    generate_with_theta(cfg, design, instance, theta)
}

fn generate_with_theta(
    cfg: &SynthConfig,
    design: SynthDesign,
    instance: ModelInstance,
    theta: Vec<f64>,
) -> Result<SynthCorpus> {
    let scoring = ScoringProcess::from_table(&RunValueTable::reference());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let SynthDesign {
        mut history,
        data,
        location,
    } = design;
    let mut season = data.pitches;
    assign_calls(&instance, &theta, &mut season, &data.covariates, &scoring, &mut rng)?;
    let history_cov = location.covariates(&history)?;
    assign_calls(&instance, &theta, &mut history, &history_cov, &scoring, &mut rng)?;
    let mut pitches = history;
    pitches.extend(season);
    Ok(SynthCorpus {
        pitches,
        truth: GroundTruth {
            config: cfg.clone(),
            spec: instance.spec.clone(),
            index: instance.index.clone(),
            theta,
            location,
            scoring,
        },
    })
}

/// Bayesian logistic regression `y ~ Bernoulli(inverse-logit(x . beta))`
/// with independent `N(0, prior_sd^2)` coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticToy {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub prior_sd: f64,
    pub dim: usize,
}

impl LogisticToy {
    pub fn new(dim: usize, x: Vec<Vec<f64>>, y: Vec<f64>, prior_sd: f64) -> Result<Self> {
        if x.len() != y.len() || x.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("design and response sizes disagree".into()));
        }
        if !(prior_sd > 0.0) {
            return Err(Error::InvalidInput("prior sd must be positive".into()));
        }
        Ok(LogisticToy { x, y, prior_sd, dim })
    }

    /// `n` observations with standard normal covariates simulated under `beta`.
    pub fn simulate(n: usize, beta: &[f64], prior_sd: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..beta.len())
                .map(|_| rand_distr::StandardNormal.sample(&mut rng))
                .collect();
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            y.push(if rng.random::<f64>() < inv_logit(eta) { 1.0 } else { 0.0 });
            x.push(row);
        }
        Self::new(beta.len(), x, y, prior_sd)
    }
}

impl LogDensity for LogisticToy {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        let v = self.prior_sd * self.prior_sd;
        let mut lp = 0.0;
        for (g, t) in grad.iter_mut().zip(theta) {
            lp -= 0.5 * t * t / v;
            *g = -t / v;
        }
        for (row, y) in self.x.iter().zip(&self.y) {
            let eta: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
            lp += y * eta - softplus(eta);
            let r = y - inv_logit(eta);
            for (g, a) in grad.iter_mut().zip(row) {
                *g += r * a;
            }
        }
        Ok(lp)
    }
}

/// Posterior moments by midpoint-rule quadrature over a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Largest change in any mean or variance between the full grid and one
    /// with half the points per axis.
    pub grid_error: f64,
    /// Posterior mass in the outermost layer of cells; large values mean the box is too small.
    pub edge_mass: f64,
}

fn quadrature(target: &dyn LogDensity, bounds: &[(f64, f64)], n: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let d = bounds.len();
    let total = n.pow(d as u32);
    let h: Vec<f64> = bounds.iter().map(|(a, b)| (b - a) / n as f64).collect();
    let mut logw = Vec::with_capacity(total);
    let mut points = Vec::with_capacity(total);
    let mut grad = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        let mut q = vec![0.0; d];
        let mut edge = false;
        for k in 0..d {
            let i = rem % n;
            rem /= n;
            edge |= i == 0 || i == n - 1;
            q[k] = bounds[k].0 + (i as f64 + 0.5) * h[k];
        }
        logw.push((target.log_density_grad(&q, &mut grad)?, edge));
        points.push(q);
    }
    let max = logw.iter().map(|w| w.0).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InvalidInput(
            "log density is not finite anywhere on the grid".into(),
        ));
    }
    let w: Vec<f64> = logw.iter().map(|(l, _)| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    let edge: f64 = w.iter().zip(&logw).filter(|(_, l)| l.1).map(|(w, _)| w).sum::<f64>() / z;
    let mut mean = vec![0.0; d];
    for (p, wi) in points.iter().zip(&w) {
        for k in 0..d {
            mean[k] += wi * p[k] / z;
        }
    }
    let mut var = vec![0.0; d];
    for (p, wi) in points.iter().zip(&w) {
        for k in 0..d {
            var[k] += wi * (p[k] - mean[k]).powi(2) / z;
        }
    }
    Ok((mean, var, edge))
}

/// Dense-grid posterior moments of a density on at most three parameters.
pub fn tiny_posterior_oracle(
    target: &dyn LogDensity,
    bounds: &[(f64, f64)],
    points_per_axis: usize,
) -> Result<QuadratureMoments> {
    let d = target.dim();
    if d > 3 {
        return Err(Error::QuadratureDimension(d));
    }
    if bounds.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bounds.len(),
        });
    }
    if bounds.iter().any(|(a, b)| !(a < b && a.is_finite() && b.is_finite())) || points_per_axis < 4 {
        return Err(Error::InvalidInput(
            "quadrature needs finite bounds and at least 4 points per axis".into(),
        ));
    }
    let (mean, variance, edge_mass) = quadrature(target, bounds, points_per_axis)?;
    let (m2, v2, _) = quadrature(target, bounds, points_per_axis / 2)?;
    let grid_error = mean
        .iter()
        .zip(&m2)
        .chain(variance.iter().zip(&v2))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(QuadratureMoments {
        mean,
        variance,
        grid_error,
        edge_mass,
    })
}
