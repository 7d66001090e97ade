use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use framing_core::eval::CvConfig;
use framing_core::framing::FramingConfig;
use framing_core::locgam::{GamConfig, HandCombo};
use framing_core::model::{Baselines, ModelId, ModelSpec, Tau2};
use framing_core::pitchdata::{Count, Hand};
use framing_core::sampler::SamplerConfig;
use framing_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the seed of every section below.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub model: ModelId,
    pub out: PathBuf,
    pub data: DataConfig,
    pub gam: GamConfig,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    pub eval: EvalConfig,
    pub framing: FramingConfig,
    pub heatmap: HeatmapConfig,
    pub contours: ContourConfig,
    pub counterfactual: CounterfactualConfig,
    pub simulate: SynthConfig,
    /// Set when the config file fixes `sampler.n_total`; otherwise each
    /// model gets its own default budget.
    #[serde(skip)]
    pub explicit_n_total: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut simulate = SynthConfig::default();
        simulate.sizes.n_history = simulate.sizes.n_pitches;
        RunConfig {
            seed: 1,
            threads: 0,
            model: ModelId::M3,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            gam: GamConfig::default(),
            prior: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            eval: EvalConfig::default(),
            framing: FramingConfig::default(),
            heatmap: HeatmapConfig::default(),
            contours: ContourConfig::default(),
            counterfactual: CounterfactualConfig::default(),
            simulate,
            explicit_n_total: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Pitch CSV used for every step.
    pub train: Option<PathBuf>,
    /// Optional later-season pitch CSV for out-of-sample evaluation.
    pub test: Option<PathBuf>,
    pub model_season: i32,
    /// Inclusive range of seasons used to fit the location surfaces.
    pub gam_seasons: [i32; 2],
    /// Inclusive range of seasons pooled for the run-value table.
    pub rv_seasons: [i32; 2],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: None,
            test: None,
            model_season: 2014,
            gam_seasons: [2011, 2013],
            rv_seasons: [2011, 2014],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub tau2: Tau2,
    pub ig_shape: f64,
    pub ig_rate: f64,
    pub baselines: Baselines,
}

impl Default for PriorConfig {
    fn default() -> Self {
        let spec = ModelSpec::new(ModelId::M1);
        PriorConfig {
            tau2: spec.tau2,
            ig_shape: spec.ig_shape,
            ig_rate: spec.ig_rate,
            baselines: Baselines::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub threshold: f64,
    pub n_folds: usize,
    pub holdout_frac: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let cv = CvConfig::default();
        EvalConfig {
            threshold: cv.threshold,
            n_folds: cv.n_folds,
            holdout_frac: cv.holdout_frac,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    pub cell_size_in: f64,
    /// Resolution of the location-surface prediction grids.
    pub grid_nx: usize,
    pub grid_nz: usize,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        HeatmapConfig {
            cell_size_in: 1.0,
            grid_nx: 50,
            grid_nz: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourConfig {
    pub batter: Option<String>,
    pub pitcher: Option<String>,
    pub batter_hand: Hand,
    pub pitcher_hand: Hand,
    pub catcher: Option<String>,
    /// Unset uses the league-wide mean umpire.
    pub umpire: Option<String>,
    pub count: String,
    pub nx: usize,
    pub nz: usize,
    pub levels: Vec<f64>,
}

impl Default for ContourConfig {
    fn default() -> Self {
        ContourConfig {
            batter: None,
            pitcher: None,
            batter_hand: Hand::R,
            pitcher_hand: Hand::R,
            catcher: None,
            umpire: None,
            count: "0-0".into(),
            nx: 60,
            nz: 60,
            levels: vec![0.5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualConfig {
    /// Empty selects every catcher in the fitted model.
    pub catchers: Vec<String>,
    /// Empty selects all twelve counts.
    pub counts: Vec<String>,
    pub batter: Option<String>,
    pub pitcher: Option<String>,
    pub batter_hand: Hand,
    pub pitcher_hand: Hand,
    pub lo: f64,
}

impl Default for CounterfactualConfig {
    fn default() -> Self {
        CounterfactualConfig {
            catchers: Vec::new(),
            counts: Vec::new(),
            batter: None,
            pitcher: None,
            batter_hand: Hand::R,
            pitcher_hand: Hand::R,
            lo: 0.0,
        }
    }
}

impl ContourConfig {
    pub fn combo(&self) -> HandCombo {
        HandCombo::new(self.batter_hand, self.pitcher_hand)
    }
}

impl CounterfactualConfig {
    pub fn combo(&self) -> HandCombo {
        HandCombo::new(self.batter_hand, self.pitcher_hand)
    }
}

/// Flag values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub model: Option<ModelId>,
    pub out: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                let raw: toml::Table = text
                    .parse()
                    .with_context(|| format!("parsing config {}", path.display()))?;
                let explicit = raw
                    .get("sampler")
                    .and_then(|s| s.as_table())
                    .is_some_and(|s| s.contains_key("n_total"));
                let mut cfg: RunConfig =
                    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
                cfg.explicit_n_total = explicit;
                if let Some(dir) = path.parent() {
                    cfg.resolve_paths(dir);
                }
                cfg
            }
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = overrides.threads {
            cfg.threads = threads;
        }
        if let Some(model) = overrides.model {
            cfg.model = model;
        }
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        if let Some(train) = &overrides.train {
            cfg.data.train = Some(train.clone());
        }
        if let Some(test) = &overrides.test {
            cfg.data.test = Some(test.clone());
        }
        cfg.gam.seed = cfg.seed;
        cfg.sampler.seed = cfg.seed;
        cfg.simulate.seed = cfg.seed;
        if !cfg.explicit_n_total {
            cfg.sampler.n_total = SamplerConfig::for_model(cfg.model).n_total;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative data paths in a config file are taken relative to the file.
    fn resolve_paths(&mut self, dir: &Path) {
        for p in [&mut self.data.train, &mut self.data.test].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.data.train, &self.data.test].into_iter().flatten() {
            if !p.exists() {
                bail!("data file {} does not exist", p.display());
            }
        }
        let [g0, g1] = self.data.gam_seasons;
        if g0 > g1 {
            bail!("gam_seasons must be ordered, got {g0}..{g1}");
        }
        if g1 >= self.data.model_season {
            bail!(
                "the location-surface window {g0}..{g1} must end before the model season {}",
                self.data.model_season
            );
        }
        let [r0, r1] = self.data.rv_seasons;
        if r0 > r1 {
            bail!("rv_seasons must be ordered, got {r0}..{r1}");
        }
        self.gam.validate()?;
        self.spec(self.model).validate()?;
        self.sampler_for(self.model).validate()?;
        self.cv().validate()?;
        self.simulate.validate()?;
        if self.framing.cafe_scale.is_nan() || self.framing.cafe_scale <= 0.0 || self.framing.thin == 0 {
            bail!("framing: cafe_scale must be positive and thin at least 1");
        }
        if !(self.eval.threshold >= 0.0 && self.eval.threshold <= 1.0) {
            bail!("eval threshold must lie in [0, 1]");
        }
        if self.heatmap.cell_size_in.is_nan()
            || self.heatmap.cell_size_in <= 0.0
            || self.heatmap.grid_nx < 2
            || self.heatmap.grid_nz < 2
        {
            bail!("heatmap: cell size must be positive and grids at least 2 by 2");
        }
        if self.contours.nx == 0 || self.contours.nz == 0 {
            bail!("contour grid must be nonempty");
        }
        if self.contours.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            bail!("contour levels must lie in (0, 1)");
        }
        self.contour_count()?;
        self.counterfactual_counts()?;
        Ok(())
    }

    pub fn spec(&self, model: ModelId) -> ModelSpec {
        ModelSpec {
            tau2: self.prior.tau2,
            ig_shape: self.prior.ig_shape,
            ig_rate: self.prior.ig_rate,
            ..ModelSpec::new(model)
        }
    }

    pub fn sampler_for(&self, model: ModelId) -> SamplerConfig {
        let mut s = self.sampler.clone();
        if !self.explicit_n_total {
            s.n_total = SamplerConfig::for_model(model).n_total;
        }
        s
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            n_folds: self.eval.n_folds,
            holdout_frac: self.eval.holdout_frac,
            seed: self.seed,
            threshold: self.eval.threshold,
        }
    }

    pub fn contour_count(&self) -> Result<Count> {
        self.contours
            .count
            .parse()
            .with_context(|| format!("contour count `{}`", self.contours.count))
    }

    pub fn counterfactual_counts(&self) -> Result<Vec<Count>> {
        if self.counterfactual.counts.is_empty() {
            return Ok(Count::all().collect());
        }
        self.counterfactual
            .counts
            .iter()
            .map(|c| c.parse().with_context(|| format!("counterfactual count `{c}`")))
            .collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
