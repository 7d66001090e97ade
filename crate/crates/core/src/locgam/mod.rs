//! Historical location surfaces: one penalized tensor-product spline
//! logistic model per batter/pitcher handedness combination.

mod basis;
mod fit;
mod standardize;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use basis::{difference_penalty, BSplineBasis};
pub use fit::{fit_all_hgams, fit_hgam, hgam_training_set, GamConfig};
pub use standardize::{standardize, standardize_raw, LocationCovariate, LocationModel, LocationSource, Standardized};

use crate::error::{Error, Result};
use crate::pitchdata::{BoundingBox, Hand, PitchRecord};
use crate::stats::inv_logit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HandCombo {
    pub batter_hand: Hand,
    pub pitcher_hand: Hand,
}

impl HandCombo {
    pub const ALL: [HandCombo; 4] = [
        HandCombo::new(Hand::R, Hand::R),
        HandCombo::new(Hand::R, Hand::L),
        HandCombo::new(Hand::L, Hand::R),
        HandCombo::new(Hand::L, Hand::L),
    ];

    pub const fn new(batter_hand: Hand, pitcher_hand: Hand) -> Self {
        HandCombo {
            batter_hand,
            pitcher_hand,
        }
    }

    pub fn of(p: &PitchRecord) -> Self {
        HandCombo::new(p.batter_hand, p.pitcher_hand)
    }

    /// Position in `HandCombo::ALL`.
    pub fn index(self) -> usize {
        (self.batter_hand == Hand::L) as usize * 2 + (self.pitcher_hand == Hand::L) as usize
    }

    pub fn label(self) -> String {
        format!("{}HB-{}HP", self.batter_hand, self.pitcher_hand)
    }
}

/// A fitted logistic surface `logit p(x, z) = Σ β_ij B_i(x) B_j(z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamSurface {
    pub combo: HandCombo,
    pub x_knots: Vec<f64>,
    pub z_knots: Vec<f64>,
    pub basis_degree: usize,
    pub penalty_order: usize,
    pub lambda: f64,
    /// `coefficients[i][j]` multiplies `B_i(x) B_j(z)`.
    pub coefficients: Vec<Vec<f64>>,
    pub support: BoundingBox,
    /// Standard deviation of raw log-odds on the standardization set, once known.
    pub training_sd: Option<f64>,
}

impl GamSurface {
    pub fn x_basis(&self) -> Result<BSplineBasis> {
        BSplineBasis::from_knots(self.x_knots.clone(), self.basis_degree)
    }

    pub fn z_basis(&self) -> Result<BSplineBasis> {
        BSplineBasis::from_knots(self.z_knots.clone(), self.basis_degree)
    }

    pub fn validate(&self) -> Result<()> {
        let bx = self.x_basis()?;
        let bz = self.z_basis()?;
        if self.coefficients.len() != bx.len() || self.coefficients.iter().any(|r| r.len() != bz.len()) {
            return Err(Error::InvalidInput(
                "coefficient matrix does not match the knot vectors".into(),
            ));
        }
        if self.coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite surface coefficient".into()));
        }
        let (x0, x1) = bx.domain();
        let (z0, z1) = bz.domain();
        let s = &self.support;
        if s.x_min < x0 || s.x_max > x1 || s.z_min < z0 || s.z_max > z1 {
            return Err(Error::InvalidInput("support box exceeds the basis domain".into()));
        }
        Ok(())
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
        let s: GamSurface = serde_json::from_reader(std::io::BufReader::new(f))?;
        s.validate()?;
        Ok(s)
    }
}

/// Evaluates a surface; bases are rebuilt once and reused.
#[derive(Clone, Debug)]
pub struct SurfaceEvaluator<'a> {
    surface: &'a GamSurface,
    bx: BSplineBasis,
    bz: BSplineBasis,
}

impl<'a> SurfaceEvaluator<'a> {
    pub fn new(surface: &'a GamSurface) -> Result<Self> {
        Ok(SurfaceEvaluator {
            surface,
            bx: surface.x_basis()?,
            bz: surface.z_basis()?,
        })
    }

    pub fn logodds(&self, x: f64, z: f64) -> Result<f64> {
        if !self.surface.support.contains(x, z) {
            return Err(Error::OutsideSupport { x, z });
        }
        let p = self.surface.basis_degree;
        let (ix, vx) = self.bx.eval(x);
        let (iz, vz) = self.bz.eval(z);
        let mut eta = 0.0;
        for (a, wx) in vx.iter().enumerate().take(p + 1) {
            let row = &self.surface.coefficients[ix + a];
            let inner: f64 = vz.iter().take(p + 1).zip(&row[iz..]).map(|(w, b)| w * b).sum();
            eta += wx * inner;
        }
        Ok(eta)
    }
}

pub fn predict_logodds(surface: &GamSurface, x: f64, z: f64) -> Result<f64> {
    SurfaceEvaluator::new(surface)?.logodds(x, z)
}

/// Probabilities on an `nx × nz` lattice of cell centres spanning the support box.
pub fn prediction_grid(surface: &GamSurface, nx: usize, nz: usize) -> Result<Vec<(f64, f64, f64)>> {
    if nx == 0 || nz == 0 {
        return Err(Error::InvalidInput("grid resolution must be positive".into()));
    }
    let ev = SurfaceEvaluator::new(surface)?;
    let s = &surface.support;
    let dx = (s.x_max - s.x_min) / nx as f64;
    let dz = (s.z_max - s.z_min) / nz as f64;
    let mut out = Vec::with_capacity(nx * nz);
    for j in 0..nz {
        let z = s.z_min + (j as f64 + 0.5) * dz;
        for i in 0..nx {
            let x = s.x_min + (i as f64 + 0.5) * dx;
            out.push((x, z, inv_logit(ev.logodds(x, z)?)));
        }
    }
    Ok(out)
}

pub fn write_prediction_grid<W: Write>(writer: W, grid: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "z", "prob"])?;
    for (x, z, p) in grid {
        w.write_record([x.to_string(), z.to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<grid writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_surface() -> GamSurface {
        let b = BSplineBasis::uniform(-2.0, 2.0, 4, 3).unwrap();
        let n = b.len();
        GamSurface {
            combo: HandCombo::ALL[0],
            x_knots: b.knots.clone(),
            z_knots: b.knots,
            basis_degree: 3,
            penalty_order: 2,
            lambda: 1.0,
            coefficients: vec![vec![0.0; n]; n],
            support: BoundingBox {
                x_min: -1.5,
                x_max: 1.5,
                z_min: -1.5,
                z_max: 1.5,
            },
            training_sd: None,
        }
    }

    #[test]
    fn combo_indices_are_a_bijection() {
        for (i, c) in HandCombo::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
        }
    }

    #[test]
    fn zero_coefficients_predict_zero() {
        let s = zero_surface();
        assert_eq!(predict_logodds(&s, 0.3, -0.2).unwrap(), 0.0);
    }

    #[test]
    fn constant_coefficients_reproduce_the_constant() {
        let mut s = zero_surface();
        for row in &mut s.coefficients {
            row.fill(1.25);
        }
        assert!((predict_logodds(&s, 1.1, 0.7).unwrap() - 1.25).abs() < 1e-12);
    }

    #[test]
    fn outside_support_is_an_error() {
        let s = zero_surface();
        assert!(matches!(
            predict_logodds(&s, 1.6, 0.0),
            Err(Error::OutsideSupport { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let s = zero_surface();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        s.save_json(&path).unwrap();
        assert_eq!(GamSurface::load_json(&path).unwrap(), s);
    }
}
