use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::{difference_penalty, BSplineBasis, MAX_DEGREE};
use super::{GamSurface, HandCombo};
use crate::error::{Error, Result};
use crate::pitchdata::{BoundingBox, PitchRecord, StrikeZone, FRAMEABLE_REACH_FT};
use crate::stats::softplus;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GamConfig {
    pub n_interior_knots: usize,
    pub degree: usize,
    pub penalty_order: usize,
    pub lambda_grid: Vec<f64>,
    pub holdout_frac: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub min_pitches: usize,
    /// Extra padding (feet) of the support box beyond the frameable reach.
    pub support_margin: f64,
}

impl Default for GamConfig {
    fn default() -> Self {
        GamConfig {
            n_interior_knots: 12,
            degree: 3,
            penalty_order: 2,
            lambda_grid: (0..10).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 9.0)).collect(),
            holdout_frac: 0.2,
            seed: 20_140_101,
            max_iter: 100,
            tol: 1e-8,
            min_pitches: 500,
            support_margin: 0.25,
        }
    }
}

impl GamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("gam config: {m}")));
        if self.degree == 0 || self.degree > MAX_DEGREE {
            return bad("degree out of range");
        }
        if self.n_interior_knots == 0 {
            return bad("need at least one interior knot");
        }
        if self.penalty_order == 0 || self.penalty_order > self.n_interior_knots + self.degree {
            return bad("penalty order out of range");
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad("lambda grid must be nonempty and nonnegative");
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 1.0) {
            return bad("holdout fraction must be in (0, 1)");
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return bad("iteration limits must be positive");
        }
        if !(self.support_margin >= 0.0) {
            return bad("support margin must be nonnegative");
        }
        Ok(())
    }

    pub fn support_box(&self, zone: &StrikeZone) -> BoundingBox {
        zone.reach_box(FRAMEABLE_REACH_FT, self.support_margin)
    }
}

/// Taken pitches from seasons strictly before `model_season`.
pub fn hgam_training_set(pitches: &[PitchRecord], model_season: i32) -> Vec<PitchRecord> {
    pitches
        .iter()
        .filter(|p| p.taken && p.season < model_season)
        .cloned()
        .collect()
}

struct Row {
    ix: usize,
    iz: usize,
    bx: [f64; MAX_DEGREE + 1],
    bz: [f64; MAX_DEGREE + 1],
}

struct Design {
    rows: Vec<Row>,
    y: Vec<f64>,
    nz: usize,
    k: usize,
    order: usize,
    penalty: DMatrix<f64>,
}

impl Design {
    fn eta(&self, r: &Row, beta: &[f64]) -> f64 {
        let mut eta = 0.0;
        for a in 0..=self.order {
            let base = (r.ix + a) * self.nz + r.iz;
            let mut inner = 0.0;
            for c in 0..=self.order {
                inner += r.bz[c] * beta[base + c];
            }
            eta += r.bx[a] * inner;
        }
        eta
    }

    fn deviance(&self, idx: &[usize], beta: &[f64]) -> f64 {
        idx.iter()
            .map(|&i| {
                let eta = self.eta(&self.rows[i], beta);
                2.0 * (softplus(eta) - self.y[i] * eta)
            })
            .sum()
    }

    fn penalized_deviance(&self, idx: &[usize], beta: &[f64], lambda: f64) -> f64 {
        let b = DVector::from_column_slice(beta);
        self.deviance(idx, beta) + lambda * (b.transpose() * &self.penalty * &b)[(0, 0)]
    }
}

struct IrlsFit {
    beta: Vec<f64>,
    trace: Vec<f64>,
}

fn irls(d: &Design, idx: &[usize], lambda: f64, beta0: &[f64], cfg: &GamConfig) -> Result<IrlsFit> {
    let k = d.k;
    let p = d.order + 1;
    let mut beta = beta0.to_vec();
    let mut q = d.penalized_deviance(idx, &beta, lambda);
    let mut trace = vec![q];
    let ridge = 1e-8;
    for _ in 0..cfg.max_iter {
        let mut h = vec![0.0; k * k];
        let mut g = vec![0.0; k];
        let mut cols = [0usize; (MAX_DEGREE + 1) * (MAX_DEGREE + 1)];
        let mut vals = [0.0; (MAX_DEGREE + 1) * (MAX_DEGREE + 1)];
        for &i in idx {
            let r = &d.rows[i];
            let mut m = 0;
            for a in 0..p {
                for c in 0..p {
                    cols[m] = (r.ix + a) * d.nz + r.iz + c;
                    vals[m] = r.bx[a] * r.bz[c];
                    m += 1;
                }
            }
            let mut eta = 0.0;
            for t in 0..m {
                eta += vals[t] * beta[cols[t]];
            }
            let mu = crate::stats::inv_logit(eta);
            let w = (mu * (1.0 - mu)).max(1e-12);
            let resid = d.y[i] - mu;
            for s in 0..m {
                g[cols[s]] += vals[s] * resid;
                let ws = w * vals[s];
                let row = cols[s] * k;
                for t in 0..m {
                    h[row + cols[t]] += ws * vals[t];
                }
            }
        }
        let mut hm = DMatrix::from_row_slice(k, k, &h);
        hm += &d.penalty * lambda;
        let b = DVector::from_column_slice(&beta);
        let grad = DVector::from_column_slice(&g) - (&d.penalty * &b) * lambda;
        let mut step = None;
        let mut jitter = ridge;
        for _ in 0..8 {
            let mut reg = hm.clone();
            for j in 0..k {
                reg[(j, j)] += jitter;
            }
            if let Some(ch) = reg.cholesky() {
                step = Some(ch.solve(&grad));
                break;
            }
            jitter *= 100.0;
        }
        let delta =
            step.ok_or_else(|| Error::Degenerate("penalized information matrix is not positive definite".into()))?;

        // step halving keeps the penalized deviance from increasing
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + scale * d).collect();
            let qc = d.penalized_deviance(idx, &cand, lambda);
            if qc.is_finite() && qc <= q {
                accepted = Some((cand, qc));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, qc)) = accepted else {
            // no decrease is representable: we are at the optimum to machine precision
            return Ok(IrlsFit { beta, trace });
        };
        let rel = (q - qc) / (qc.abs() + 0.1);
        beta = cand;
        q = qc;
        trace.push(q);
        if rel < cfg.tol {
            return Ok(IrlsFit { beta, trace });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        trace,
    })
}

/// Fits the surface for one handedness combination.
///
/// Uses taken pitches of that combination inside the support box. The
/// smoothing weight is chosen from `config.lambda_grid` by deviance on a
/// seeded holdout split, then the model is refit on all of them.
pub fn fit_hgam(
    training: &[PitchRecord],
    combo: HandCombo,
    zone: &StrikeZone,
    config: &GamConfig,
) -> Result<GamSurface> {
    config.validate()?;
    zone.validate()?;
    let support = config.support_box(zone);
    let bx = BSplineBasis::uniform(support.x_min, support.x_max, config.n_interior_knots, config.degree)?;
    let bz = BSplineBasis::uniform(support.z_min, support.z_max, config.n_interior_knots, config.degree)?;
    let (nx, nz) = (bx.len(), bz.len());

    let mut rows = Vec::new();
    let mut y = Vec::new();
    for p in training {
        if !p.taken || HandCombo::of(p) != combo || !support.contains(p.x, p.z) {
            continue;
        }
        let (ix, vx) = bx.eval(p.x);
        let (iz, vz) = bz.eval(p.z);
        rows.push(Row { ix, iz, bx: vx, bz: vz });
        y.push(if p.is_called_strike() { 1.0 } else { 0.0 });
    }
    let n = rows.len();
    if n < config.min_pitches {
        return Err(Error::InvalidInput(format!(
            "combo {} has {n} taken pitches in the support box; at least {} are required",
            combo.label(),
            config.min_pitches
        )));
    }
    let strikes = y.iter().filter(|v| **v > 0.5).count();
    if strikes == 0 || strikes == n {
        return Err(Error::Degenerate(format!(
            "combo {} has only one outcome class; the surface is not identifiable",
            combo.label()
        )));
    }

    let px = difference_penalty(nx, config.penalty_order);
    let pz = difference_penalty(nz, config.penalty_order);
    let k = nx * nz;
    let mut penalty = DMatrix::zeros(k, k);
    for i in 0..nx {
        for j in 0..nz {
            let r = i * nz + j;
            for i2 in 0..nx {
                if px[i][i2] != 0.0 {
                    penalty[(r, i2 * nz + j)] += px[i][i2];
                }
            }
            for j2 in 0..nz {
                if pz[j][j2] != 0.0 {
                    penalty[(r, i * nz + j2)] += pz[j][j2];
                }
            }
        }
    }
    let design = Design {
        rows,
        y,
        nz,
        k,
        order: config.degree,
        penalty,
    };

    let ybar = strikes as f64 / n as f64;
    let start = vec![(ybar / (1.0 - ybar)).ln(); k];

    let lambda = if config.lambda_grid.len() == 1 {
        config.lambda_grid[0]
    } else {
        let mut rng =
            ChaCha8Rng::seed_from_u64(config.seed ^ (combo.index() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let n_hold = ((config.holdout_frac * n as f64).round() as usize).clamp(1, n - 1);
        let mut held = vec![false; n];
        for i in rand::seq::index::sample(&mut rng, n, n_hold) {
            held[i] = true;
        }
        let train_idx: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();
        let hold_idx: Vec<usize> = (0..n).filter(|&i| held[i]).collect();

        // smoothest first, warm-starting each rougher fit from the previous one
        let mut grid = config.lambda_grid.clone();
        grid.sort_by(|a, b| b.total_cmp(a));
        let mut warm = start.clone();
        let mut best: Option<(f64, f64)> = None;
        for &lam in &grid {
            match irls(&design, &train_idx, lam, &warm, config) {
                Ok(fit) => {
                    let dev = design.deviance(&hold_idx, &fit.beta);
                    if best.is_none_or(|(_, d)| dev < d) {
                        best = Some((lam, dev));
                    }
                    warm = fit.beta;
                }
                Err(e) => log::warn!("lambda {lam:e} skipped for {}: {e}", combo.label()),
            }
        }
        best.map(|(l, _)| l)
            .ok_or_else(|| Error::Degenerate(format!("no smoothing weight converged for {}", combo.label())))?
    };

    let fit = irls(&design, &(0..n).collect::<Vec<_>>(), lambda, &start, config)?;
    let coefficients = fit.beta.chunks(nz).map(|c| c.to_vec()).collect();
    log::debug!(
        "{}: lambda {lambda:e}, {} IRLS iterations",
        combo.label(),
        fit.trace.len() - 1
    );
    Ok(GamSurface {
        combo,
        x_knots: bx.knots,
        z_knots: bz.knots,
        basis_degree: config.degree,
        penalty_order: config.penalty_order,
        lambda,
        coefficients,
        support,
        training_sd: None,
    })
}

/// Fits all four combinations in parallel, in `HandCombo::ALL` order.
pub fn fit_all_hgams(training: &[PitchRecord], zone: &StrikeZone, config: &GamConfig) -> Result<[GamSurface; 4]> {
    let fits: Vec<Result<GamSurface>> = HandCombo::ALL
        .par_iter()
        .map(|&c| fit_hgam(training, c, zone, config))
        .collect();
    let mut out = Vec::with_capacity(4);
    for f in fits {
        out.push(f?);
    }
    Ok(out.try_into().expect("four combos"))
}
