use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl ModelId {
    pub const ALL: [ModelId; 5] = [ModelId::M1, ModelId::M2, ModelId::M3, ModelId::M4, ModelId::M5];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.number())
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().trim_start_matches(['M', 'm']);
        match digits {
            "1" => Ok(ModelId::M1),
            "2" => Ok(ModelId::M2),
            "3" => Ok(ModelId::M3),
            "4" => Ok(ModelId::M4),
            "5" => Ok(ModelId::M5),
            _ => Err(Error::InvalidInput(format!("unknown model `{s}`; expected 1..5"))),
        }
    }
}

/// Fixed within-umpire prior variances, one per effect block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tau2 {
    pub intercept: f64,
    pub location: f64,
    pub count: f64,
    pub catcher: f64,
    pub pitcher: f64,
    pub batter: f64,
}

impl Default for Tau2 {
    fn default() -> Self {
        Tau2 {
            intercept: 0.25,
            location: 0.25,
            count: 0.25,
            catcher: 0.25,
            pitcher: 0.25,
            batter: 0.25,
        }
    }
}

impl Tau2 {
    pub fn get(&self, v: VarianceBlock) -> f64 {
        match v {
            VarianceBlock::Intercept => self.intercept,
            VarianceBlock::Location => self.location,
            VarianceBlock::Count => self.count,
            VarianceBlock::Catcher => self.catcher,
            VarianceBlock::Pitcher => self.pitcher,
            VarianceBlock::Batter => self.batter,
        }
    }
}

/// The six top-level variance hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarianceBlock {
    Intercept,
    Location,
    Count,
    Catcher,
    Pitcher,
    Batter,
}

impl VarianceBlock {
    pub fn name(self) -> &'static str {
        match self {
            VarianceBlock::Intercept => "intercept",
            VarianceBlock::Location => "location",
            VarianceBlock::Count => "count",
            VarianceBlock::Catcher => "catcher",
            VarianceBlock::Pitcher => "pitcher",
            VarianceBlock::Batter => "batter",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: ModelId,
    pub include_count_catcher: bool,
    pub include_pitcher_batter: bool,
    pub umpire_specific_count_catcher: bool,
    pub umpire_specific_pitcher_batter: bool,
    pub tau2: Tau2,
    pub ig_shape: f64,
    pub ig_rate: f64,
}

impl ModelSpec {
    pub fn new(model_id: ModelId) -> Self {
        use ModelId::*;
        ModelSpec {
            model_id,
            include_count_catcher: model_id != M1,
            include_pitcher_batter: matches!(model_id, M3 | M5),
            umpire_specific_count_catcher: matches!(model_id, M4 | M5),
            umpire_specific_pitcher_batter: model_id == M5,
            tau2: Tau2::default(),
            ig_shape: 3.0,
            ig_rate: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tau2;
        let taus = [t.intercept, t.location, t.count, t.catcher, t.pitcher, t.batter];
        if taus.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("tau2 entries must be positive".into()));
        }
        if !(self.ig_shape > 0.0 && self.ig_rate > 0.0) {
            return Err(Error::InvalidInput("inverse-gamma parameters must be positive".into()));
        }
        if self.umpire_specific_count_catcher && !self.include_count_catcher
            || self.umpire_specific_pitcher_batter && !self.include_pitcher_batter
        {
            return Err(Error::InvalidInput(
                "umpire-specific blocks require the corresponding effects".into(),
            ));
        }
        Ok(())
    }

    /// Variance blocks carrying a hyper-parameter, in coordinate order.
    pub fn variance_blocks(&self) -> Vec<VarianceBlock> {
        let mut v = vec![VarianceBlock::Intercept, VarianceBlock::Location];
        if self.include_count_catcher {
            v.extend([VarianceBlock::Count, VarianceBlock::Catcher]);
        }
        if self.include_pitcher_batter {
            v.extend([VarianceBlock::Pitcher, VarianceBlock::Batter]);
        }
        v
    }
}

/// Number of effect coordinates, excluding hierarchical means and variance
/// hyper-parameters.
pub fn count_parameters(
    spec: &ModelSpec,
    n_umpires: usize,
    n_catchers: usize,
    n_pitchers: usize,
    n_batters: usize,
    n_counts: usize,
) -> usize {
    let u = n_umpires;
    let cc = n_counts.saturating_sub(1) + n_catchers.saturating_sub(1);
    let pb = n_pitchers.saturating_sub(1) + n_batters.saturating_sub(1);
    let mut pooled = 0;
    let mut per_umpire = 8;
    if spec.include_count_catcher {
        if spec.umpire_specific_count_catcher {
            per_umpire += cc;
        } else {
            pooled += cc;
        }
    }
    if spec.include_pitcher_batter {
        if spec.umpire_specific_pitcher_batter {
            per_umpire += pb;
        } else {
            pooled += pb;
        }
    }
    u * per_umpire + pooled
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nesting_of_included_terms() {
        let s: Vec<ModelSpec> = ModelId::ALL.iter().map(|&m| ModelSpec::new(m)).collect();
        let terms = |m: &ModelSpec| {
            (
                m.include_count_catcher,
                m.include_pitcher_batter,
                m.umpire_specific_count_catcher,
                m.umpire_specific_pitcher_batter,
            )
        };
        assert_eq!(terms(&s[0]), (false, false, false, false));
        assert_eq!(terms(&s[1]), (true, false, false, false));
        assert_eq!(terms(&s[2]), (true, true, false, false));
        assert_eq!(terms(&s[3]), (true, false, true, false));
        assert_eq!(terms(&s[4]), (true, true, true, true));
        for m in &s {
            m.validate().unwrap();
        }
    }

    #[test]
    fn table_counts() {
        let c = |m| count_parameters(&ModelSpec::new(m), 93, 101, 719, 1010, 12);
        assert_eq!(c(ModelId::M1), 744);
        assert_eq!(c(ModelId::M2), 855);
        assert_eq!(c(ModelId::M3), 2582);
        assert_eq!(c(ModelId::M4), 11_067);
        // the same counting rule gives 171,678 for the richest model
        assert_eq!(c(ModelId::M5), 171_678);
    }

    #[test]
    fn parse_model_ids() {
        assert_eq!("3".parse::<ModelId>().unwrap(), ModelId::M3);
        assert_eq!("M5".parse::<ModelId>().unwrap(), ModelId::M5);
        assert!("6".parse::<ModelId>().is_err());
    }
}
