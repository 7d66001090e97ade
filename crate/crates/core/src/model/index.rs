use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::spec::{ModelSpec, VarianceBlock};
use crate::error::{Error, Result};
use crate::locgam::HandCombo;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Factor {
    Count,
    Catcher,
    Pitcher,
    Batter,
}

impl Factor {
    pub const ALL: [Factor; 4] = [Factor::Count, Factor::Catcher, Factor::Pitcher, Factor::Batter];

    pub fn name(self) -> &'static str {
        match self {
            Factor::Count => "count",
            Factor::Catcher => "catcher",
            Factor::Pitcher => "pitcher",
            Factor::Batter => "batter",
        }
    }

    pub fn variance(self) -> VarianceBlock {
        match self {
            Factor::Count => VarianceBlock::Count,
            Factor::Catcher => VarianceBlock::Catcher,
            Factor::Pitcher => VarianceBlock::Pitcher,
            Factor::Batter => VarianceBlock::Batter,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    UmpireIntercept,
    UmpireLocation,
    MeanIntercept,
    MeanLocation,
    /// Pooled effects, or the hierarchical mean when the factor is umpire-specific.
    Effect(Factor),
    UmpireEffect(Factor),
    LogVariance,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::UmpireIntercept => f.write_str("umpire_intercept"),
            Block::UmpireLocation => f.write_str("umpire_location"),
            Block::MeanIntercept => f.write_str("mean_intercept"),
            Block::MeanLocation => f.write_str("mean_location"),
            Block::Effect(fa) => write!(f, "{}", fa.name()),
            Block::UmpireEffect(fa) => write!(f, "umpire_{}", fa.name()),
            Block::LogVariance => f.write_str("log_sigma2"),
        }
    }
}

/// Levels of one factor in first-appearance order, with the baseline
/// level excluded from the effect coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorLevels {
    pub factor: Factor,
    pub ids: Vec<String>,
    pub baseline: String,
    /// For each level, its position among the non-baseline levels.
    effect_pos: Vec<Option<u32>>,
    #[serde(skip)]
    lookup: HashMap<String, usize>,
}

impl FactorLevels {
    pub fn new(factor: Factor, ids: Vec<String>, baseline: String) -> Self {
        let mut next = 0;
        let effect_pos = ids
            .iter()
            .map(|id| {
                (*id != baseline).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        let mut f = FactorLevels {
            factor,
            ids,
            baseline,
            effect_pos,
            lookup: HashMap::new(),
        };
        f.rebuild_lookup();
        f
    }

    fn rebuild_lookup(&mut self) {
        self.lookup = self.ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    }

    pub fn level(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    /// Position among effect coordinates; `None` for the baseline or an unseen level.
    pub fn effect_position(&self, id: &str) -> Option<usize> {
        self.level(id).and_then(|l| self.effect_pos[l]).map(|p| p as usize)
    }

    pub fn effect_position_of_level(&self, level: usize) -> Option<usize> {
        self.effect_pos[level].map(|p| p as usize)
    }

    pub fn n_effects(&self) -> usize {
        self.effect_pos.iter().filter(|p| p.is_some()).count()
    }

    pub fn effect_ids(&self) -> impl Iterator<Item = &str> {
        self.ids
            .iter()
            .zip(&self.effect_pos)
            .filter(|(_, p)| p.is_some())
            .map(|(s, _)| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl Block {
    pub fn is_per_umpire(self) -> bool {
        matches!(
            self,
            Block::UmpireIntercept | Block::UmpireLocation | Block::UmpireEffect(_)
        )
    }
}

/// A contiguous run of coordinates: `n_umpires` copies of `width` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRange {
    pub block: Block,
    pub offset: usize,
    pub n_umpires: usize,
    pub width: usize,
}

impl BlockRange {
    pub fn len(&self) -> usize {
        self.n_umpires * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn at(&self, umpire: usize, k: usize) -> usize {
        debug_assert!(umpire < self.n_umpires && k < self.width);
        self.offset + umpire * self.width + k
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coordinate {
    pub index: usize,
    pub block: Block,
    pub umpire: Option<String>,
    pub level: String,
}

impl Coordinate {
    pub fn name(&self) -> String {
        match &self.umpire {
            Some(u) => format!("{}[{},{}]", self.block, u, self.level),
            None => format!("{}[{}]", self.block, self.level),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexMap {
    pub umpires: Vec<String>,
    pub counts: FactorLevels,
    pub catchers: FactorLevels,
    pub pitchers: FactorLevels,
    pub batters: FactorLevels,
    pub blocks: Vec<BlockRange>,
    pub variance_blocks: Vec<VarianceBlock>,
    #[serde(skip)]
    umpire_lookup: HashMap<String, usize>,
}

impl IndexMap {
    pub fn new(
        spec: &ModelSpec,
        umpires: Vec<String>,
        counts: FactorLevels,
        catchers: FactorLevels,
        pitchers: FactorLevels,
        batters: FactorLevels,
    ) -> Self {
        let u = umpires.len();
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |block, n_umpires, width| {
            blocks.push(BlockRange {
                block,
                offset,
                n_umpires,
                width,
            });
            offset += n_umpires * width;
        };
        push(Block::UmpireIntercept, u, 4);
        push(Block::UmpireLocation, u, 4);
        push(Block::MeanIntercept, 1, 4);
        push(Block::MeanLocation, 1, 4);
        let groups = [
            (
                spec.include_count_catcher,
                spec.umpire_specific_count_catcher,
                [&counts, &catchers],
            ),
            (
                spec.include_pitcher_batter,
                spec.umpire_specific_pitcher_batter,
                [&pitchers, &batters],
            ),
        ];
        for (included, per_umpire, levels) in groups {
            if !included {
                continue;
            }
            for l in levels {
                push(Block::Effect(l.factor), 1, l.n_effects());
            }
            if per_umpire {
                for l in levels {
                    push(Block::UmpireEffect(l.factor), u, l.n_effects());
                }
            }
        }
        let variance_blocks = spec.variance_blocks();
        push(Block::LogVariance, 1, variance_blocks.len());
        let mut map = IndexMap {
            umpires,
            counts,
            catchers,
            pitchers,
            batters,
            blocks,
            variance_blocks,
            umpire_lookup: HashMap::new(),
        };
        map.rebuild_lookups();
        map
    }

    /// Restores lookup tables after deserialization.
    pub fn rebuild_lookups(&mut self) {
        self.umpire_lookup = self.umpires.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        for f in [
            &mut self.counts,
            &mut self.catchers,
            &mut self.pitchers,
            &mut self.batters,
        ] {
            f.rebuild_lookup();
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn umpire(&self, id: &str) -> Option<usize> {
        self.umpire_lookup.get(id).copied()
    }

    pub fn factor(&self, f: Factor) -> &FactorLevels {
        match f {
            Factor::Count => &self.counts,
            Factor::Catcher => &self.catchers,
            Factor::Pitcher => &self.pitchers,
            Factor::Batter => &self.batters,
        }
    }

    pub fn block(&self, block: Block) -> Option<&BlockRange> {
        self.blocks.iter().find(|b| b.block == block)
    }

    /// Number of coordinates that are neither hierarchical means nor variances.
    pub fn n_effect_coordinates(&self) -> usize {
        let per_umpire: usize = self
            .blocks
            .iter()
            .filter(|b| b.block.is_per_umpire())
            .map(BlockRange::len)
            .sum();
        let pooled: usize = self
            .blocks
            .iter()
            .filter_map(|b| match b.block {
                Block::Effect(f) if self.block(Block::UmpireEffect(f)).is_none() => Some(b.len()),
                _ => None,
            })
            .sum();
        per_umpire + pooled
    }

    pub fn log_variance_coordinate(&self, v: VarianceBlock) -> Option<usize> {
        let b = self.block(Block::LogVariance)?;
        self.variance_blocks.iter().position(|x| *x == v).map(|k| b.at(0, k))
    }

    /// Coordinate for `(block, umpire, level)`; `None` if no such coordinate exists.
    pub fn coordinate(&self, block: Block, umpire: Option<&str>, level: &str) -> Option<usize> {
        let range = self.block(block)?;
        let u = match (block.is_per_umpire(), umpire) {
            (true, Some(id)) => self.umpire(id)?,
            (false, None) => 0,
            _ => return None,
        };
        let k = match block {
            Block::UmpireIntercept | Block::UmpireLocation | Block::MeanIntercept | Block::MeanLocation => {
                HandCombo::ALL.iter().position(|c| c.label() == level)?
            }
            Block::Effect(f) | Block::UmpireEffect(f) => self.factor(f).effect_position(level)?,
            Block::LogVariance => self.variance_blocks.iter().position(|v| v.name() == level)?,
        };
        Some(range.at(u, k))
    }

    pub fn entries(&self) -> Vec<Coordinate> {
        let mut out = Vec::with_capacity(self.dim());
        for b in &self.blocks {
            let levels: Vec<String> = match b.block {
                Block::UmpireIntercept | Block::UmpireLocation | Block::MeanIntercept | Block::MeanLocation => {
                    HandCombo::ALL.iter().map(|c| c.label()).collect()
                }
                Block::Effect(f) | Block::UmpireEffect(f) => self.factor(f).effect_ids().map(str::to_string).collect(),
                Block::LogVariance => self.variance_blocks.iter().map(|v| v.name().to_string()).collect(),
            };
            let per_umpire = b.block.is_per_umpire();
            for u in 0..b.n_umpires {
                for (k, level) in levels.iter().enumerate() {
                    out.push(Coordinate {
                        index: b.at(u, k),
                        block: b.block,
                        umpire: per_umpire.then(|| self.umpires[u].clone()),
                        level: level.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn coordinate_name(&self, i: usize) -> String {
        for b in &self.blocks {
            if i >= b.offset && i < b.offset + b.len() {
                let (u, k) = ((i - b.offset) / b.width, (i - b.offset) % b.width);
                let level = match b.block {
                    Block::UmpireIntercept | Block::UmpireLocation | Block::MeanIntercept | Block::MeanLocation => {
                        HandCombo::ALL[k].label()
                    }
                    Block::Effect(f) | Block::UmpireEffect(f) => {
                        self.factor(f).effect_ids().nth(k).unwrap_or("?").to_string()
                    }
                    Block::LogVariance => self.variance_blocks[k].name().to_string(),
                };
                return if b.block.is_per_umpire() {
                    format!("{}[{},{}]", b.block, self.umpires[u], level)
                } else {
                    format!("{}[{}]", b.block, level)
                };
            }
        }
        format!("theta[{i}]")
    }

    /// SHA-256 of the coordinate listing, used to tie draws files to a model.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for c in self.entries() {
            h.update(c.index.to_le_bytes());
            h.update(c.name().as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.entries())?;
        Ok(())
    }

    pub fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }
}
