use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GamSurface, HandCombo, SurfaceEvaluator};
use crate::error::{Error, Result};
use crate::pitchdata::PitchRecord;
use crate::stats::sample_sd;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationCovariate {
    pub raw_logodds: f64,
    pub scaled_logodds: f64,
    pub combo: HandCombo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub covariates: Vec<LocationCovariate>,
    /// Per-combo standard deviation of the raw log-odds, in `HandCombo::ALL` order.
    pub mu_lo: [f64; 4],
}

/// Scales raw log-odds to unit sample standard deviation within each combo.
pub fn standardize_raw(raw: &[f64], combos: &[HandCombo]) -> Result<Standardized> {
    if raw.len() != combos.len() {
        return Err(Error::DimensionMismatch {
            expected: combos.len(),
            got: raw.len(),
        });
    }
    let mut groups: [Vec<f64>; 4] = Default::default();
    for (r, c) in raw.iter().zip(combos) {
        groups[c.index()].push(*r);
    }
    let mut mu_lo = [0.0; 4];
    for (i, g) in groups.iter().enumerate() {
        let label = HandCombo::ALL[i].label();
        if g.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "combo {label} has {} pitches; standardization needs at least 2",
                g.len()
            )));
        }
        let sd = sample_sd(g);
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::Degenerate(format!(
                "raw log-odds for combo {label} have zero variance"
            )));
        }
        mu_lo[i] = sd;
    }
    let covariates = raw
        .iter()
        .zip(combos)
        .map(|(&r, &combo)| LocationCovariate {
            raw_logodds: r,
            scaled_logodds: r / mu_lo[combo.index()],
            combo,
        })
        .collect();
    Ok(Standardized { covariates, mu_lo })
}

pub fn standardize(surfaces: &[GamSurface; 4], pitches: &[PitchRecord]) -> Result<Standardized> {
    let evals = surface_evaluators(surfaces)?;
    let mut raw = Vec::with_capacity(pitches.len());
    let mut combos = Vec::with_capacity(pitches.len());
    for p in pitches {
        let c = HandCombo::of(p);
        raw.push(evals[c.index()].logodds(p.x, p.z)?);
        combos.push(c);
    }
    standardize_raw(&raw, &combos)
}

fn surface_evaluators(surfaces: &[GamSurface; 4]) -> Result<Vec<SurfaceEvaluator<'_>>> {
    for (i, s) in surfaces.iter().enumerate() {
        if s.combo != HandCombo::ALL[i] {
            return Err(Error::InvalidInput(format!(
                "surface {i} is for {}, expected {}",
                s.combo.label(),
                HandCombo::ALL[i].label()
            )));
        }
    }
    surfaces.iter().map(SurfaceEvaluator::new).collect()
}

/// Anything that yields the scaled location covariate for a point.
pub trait LocationSource: Sync {
    fn raw_logodds(&self, x: f64, z: f64, combo: HandCombo) -> Result<f64>;
    fn mu_lo(&self) -> [f64; 4];

    fn covariate(&self, x: f64, z: f64, combo: HandCombo) -> Result<LocationCovariate> {
        let raw = self.raw_logodds(x, z, combo)?;
        Ok(LocationCovariate {
            raw_logodds: raw,
            scaled_logodds: raw / self.mu_lo()[combo.index()],
            combo,
        })
    }

    fn covariates(&self, pitches: &[PitchRecord]) -> Result<Vec<LocationCovariate>> {
        pitches
            .iter()
            .map(|p| self.covariate(p.x, p.z, HandCombo::of(p)))
            .collect()
    }
}

/// The four fitted surfaces together with their standardization constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationModel {
    pub surfaces: [GamSurface; 4],
    pub mu_lo: [f64; 4],
}

impl LocationModel {
    /// Standardizes on `pitches` and records each surface's training sd.
    pub fn standardized_on(
        mut surfaces: [GamSurface; 4],
        pitches: &[PitchRecord],
    ) -> Result<(Self, Vec<LocationCovariate>)> {
        let st = standardize(&surfaces, pitches)?;
        for (s, sd) in surfaces.iter_mut().zip(st.mu_lo) {
            s.training_sd = Some(sd);
        }
        Ok((
            LocationModel {
                surfaces,
                mu_lo: st.mu_lo,
            },
            st.covariates,
        ))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let m: LocationModel = serde_json::from_reader(std::io::BufReader::new(f))?;
        for s in &m.surfaces {
            s.validate()?;
        }
        surface_evaluators(&m.surfaces)?;
        Ok(m)
    }
}

impl LocationSource for LocationModel {
    fn raw_logodds(&self, x: f64, z: f64, combo: HandCombo) -> Result<f64> {
        super::predict_logodds(&self.surfaces[combo.index()], x, z)
    }

    fn mu_lo(&self) -> [f64; 4] {
        self.mu_lo
    }

    fn covariates(&self, pitches: &[PitchRecord]) -> Result<Vec<LocationCovariate>> {
        let evals = surface_evaluators(&self.surfaces)?;
        pitches
            .iter()
            .map(|p| {
                let combo = HandCombo::of(p);
                let raw = evals[combo.index()].logodds(p.x, p.z)?;
                Ok(LocationCovariate {
                    raw_logodds: raw,
                    scaled_logodds: raw / self.mu_lo[combo.index()],
                    combo,
                })
            })
            .collect()
    }
}
