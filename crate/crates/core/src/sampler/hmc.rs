//! Leapfrog integration and the two transition kernels: multinomial NUTS
//! with the generalized no-U-turn criterion, and static HMC.

use rand::Rng;
use rand_distr::StandardNormal;

use super::LogDensity;
use crate::error::{Error, Result};
use crate::stats::log_sum_exp;

#[derive(Clone, Debug)]
pub(crate) struct Point {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub g: Vec<f64>,
    pub logp: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct TransitionStats {
    pub accept_stat: f64,
    pub n_leapfrog: u32,
    pub tree_depth: u32,
    pub divergent: bool,
    pub energy: f64,
}

pub(crate) struct Integrator<'a, D: LogDensity + ?Sized> {
    pub target: &'a D,
    pub inv_metric: &'a [f64],
}

impl<D: LogDensity + ?Sized> Integrator<'_, D> {
    /// Log density and gradient at `q`. Leaving the numerically representable
    /// region yields `-inf`; a non-finite gradient at a finite density is an error.
    pub fn eval(&self, q: &[f64], g: &mut [f64]) -> Result<f64> {
        if q.iter().any(|v| !v.is_finite()) {
            return Ok(f64::NEG_INFINITY);
        }
        let lp = self.target.log_density_grad(q, g)?;
        if !lp.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                coordinate: i,
                name: self.target.coordinate_name(i),
            });
        }
        Ok(lp)
    }

    pub fn point(&self, q: Vec<f64>) -> Result<Point> {
        let mut g = vec![0.0; q.len()];
        let logp = self.eval(&q, &mut g)?;
        Ok(Point {
            p: vec![0.0; q.len()],
            q,
            g,
            logp,
        })
    }

    pub fn sample_momentum<R: Rng + ?Sized>(&self, z: &mut Point, rng: &mut R) {
        for (p, m) in z.p.iter_mut().zip(self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    pub fn hamiltonian(&self, z: &Point) -> f64 {
        let k: f64 = z.p.iter().zip(self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>() * 0.5;
        let h = k - z.logp;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    pub fn sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(self.inv_metric).map(|(p, m)| p * m).collect()
    }

    pub fn leapfrog(&self, z: &mut Point, eps: f64) -> Result<()> {
        for (p, g) in z.p.iter_mut().zip(&z.g) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(self.inv_metric) {
            *q += eps * m * p;
        }
        z.logp = self.eval(&z.q, &mut z.g)?;
        if z.logp.is_finite() {
            for (p, g) in z.p.iter_mut().zip(&z.g) {
                *p += 0.5 * eps * g;
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

struct Tree<'a, 'b, D: LogDensity + ?Sized> {
    integ: &'a Integrator<'b, D>,
    eps: f64,
    h0: f64,
    max_delta_h: f64,
    n_leapfrog: u32,
    sum_metro_prob: f64,
    divergent: bool,
}

impl<D: LogDensity + ?Sized> Tree<'_, '_, D> {
    #[allow(clippy::too_many_arguments)]
    fn build<R: Rng + ?Sized>(
        &mut self,
        depth: u32,
        z: &mut Point,
        z_propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        log_sum_weight: &mut f64,
        rng: &mut R,
    ) -> Result<bool> {
        if depth == 0 {
            self.integ.leapfrog(z, self.eps)?;
            self.n_leapfrog += 1;
            let h = self.integ.hamiltonian(z);
            if h - self.h0 > self.max_delta_h {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, self.h0 - h);
            self.sum_metro_prob += if self.h0 - h > 0.0 { 1.0 } else { (self.h0 - h).exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = self.integ.sharp(&z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            p_beg.clone_from(&z.p);
            p_end.clone_from(p_beg);
            return Ok(!self.divergent);
        }

        let dim = z.q.len();
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        let mut lsw_init = f64::NEG_INFINITY;
        let valid_init = self.build(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            &mut lsw_init,
            rng,
        )?;
        if !valid_init {
            return Ok(false);
        }

        let mut z_propose_final = z.clone();
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        let mut lsw_final = f64::NEG_INFINITY;
        let valid_final = self.build(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            &mut lsw_final,
            rng,
        )?;
        if !valid_final {
            return Ok(false);
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = no_u_turn(p_sharp_beg, p_sharp_end, &rho_subtree);
        let rho_ext = add(&rho_init, &p_final_beg);
        persist &= no_u_turn(p_sharp_beg, &p_sharp_final_beg, &rho_ext);
        let rho_ext = add(&rho_final, &p_init_end);
        persist &= no_u_turn(&p_sharp_init_end, p_sharp_end, &rho_ext);
        Ok(persist)
    }
}

pub(crate) const MAX_DELTA_H: f64 = 1000.0;

/// One NUTS transition from `z` (whose momentum is resampled).
pub(crate) fn nuts_transition<D: LogDensity + ?Sized, R: Rng + ?Sized>(
    integ: &Integrator<'_, D>,
    z: &mut Point,
    eps: f64,
    max_depth: u32,
    rng: &mut R,
) -> Result<TransitionStats> {
    integ.sample_momentum(z, rng);
    let mut z_fwd = z.clone();
    let mut z_bck = z.clone();
    let mut z_sample = z.clone();
    let mut z_propose = z.clone();

    let p_sharp = integ.sharp(&z.p);
    let mut p_fwd_fwd = z.p.clone();
    let mut p_sharp_fwd_fwd = p_sharp.clone();
    let mut p_fwd_bck = z.p.clone();
    let mut p_sharp_fwd_bck = p_sharp.clone();
    let mut p_bck_fwd = z.p.clone();
    let mut p_sharp_bck_fwd = p_sharp.clone();
    let mut p_bck_bck = z.p.clone();
    let mut p_sharp_bck_bck = p_sharp;
    let mut rho = z.p.clone();
    let mut log_sum_weight = 0.0;

    let h0 = integ.hamiltonian(z);
    let mut tree = Tree {
        integ,
        eps,
        h0,
        max_delta_h: MAX_DELTA_H,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };
    let dim = z.q.len();
    let mut depth = 0;
    while depth < max_depth {
        let mut rho_fwd = vec![0.0; dim];
        let mut rho_bck = vec![0.0; dim];
        let mut lsw_subtree = f64::NEG_INFINITY;
        let valid = if rng.random::<f64>() > 0.5 {
            rho_bck.clone_from(&rho);
            p_bck_fwd.clone_from(&p_fwd_fwd);
            p_sharp_bck_fwd.clone_from(&p_sharp_fwd_fwd);
            tree.eps = eps;
            let mut zz = z_fwd.clone();
            let v = tree.build(
                depth,
                &mut zz,
                &mut z_propose,
                &mut p_sharp_fwd_bck,
                &mut p_sharp_fwd_fwd,
                &mut rho_fwd,
                &mut p_fwd_bck,
                &mut p_fwd_fwd,
                &mut lsw_subtree,
                rng,
            )?;
            z_fwd = zz;
            v
        } else {
            rho_fwd.clone_from(&rho);
            p_fwd_bck.clone_from(&p_bck_bck);
            p_sharp_fwd_bck.clone_from(&p_sharp_bck_bck);
            tree.eps = -eps;
            let mut zz = z_bck.clone();
            let v = tree.build(
                depth,
                &mut zz,
                &mut z_propose,
                &mut p_sharp_bck_fwd,
                &mut p_sharp_bck_bck,
                &mut rho_bck,
                &mut p_bck_fwd,
                &mut p_bck_bck,
                &mut lsw_subtree,
                rng,
            )?;
            z_bck = zz;
            v
        };
        if !valid {
            break;
        }
        depth += 1;

        if lsw_subtree > log_sum_weight {
            z_sample.clone_from(&z_propose);
        } else {
            let accept = (lsw_subtree - log_sum_weight).exp();
            if rng.random::<f64>() < accept {
                z_sample.clone_from(&z_propose);
            }
        }
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

        rho = add(&rho_bck, &rho_fwd);
        let mut persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
        let rho_ext = add(&rho_bck, &p_fwd_bck);
        persist &= no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_ext);
        let rho_ext = add(&rho_fwd, &p_bck_fwd);
        persist &= no_u_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_ext);
        if !persist {
            break;
        }
    }

    let n_leapfrog = tree.n_leapfrog;
    let stats = TransitionStats {
        accept_stat: if n_leapfrog > 0 {
            tree.sum_metro_prob / n_leapfrog as f64
        } else {
            0.0
        },
        n_leapfrog,
        tree_depth: depth,
        divergent: tree.divergent,
        energy: 0.0,
    };
    *z = z_sample;
    let energy = integ.hamiltonian(z);
    Ok(TransitionStats { energy, ..stats })
}

/// Fixed-length HMC with a Metropolis correction; the step size is jittered
/// uniformly by `±jitter` relative.
pub(crate) fn static_transition<D: LogDensity + ?Sized, R: Rng + ?Sized>(
    integ: &Integrator<'_, D>,
    z: &mut Point,
    eps: f64,
    n_leapfrog: u32,
    jitter: f64,
    rng: &mut R,
) -> Result<TransitionStats> {
    integ.sample_momentum(z, rng);
    let h0 = integ.hamiltonian(z);
    let eps = eps * (1.0 + jitter * (2.0 * rng.random::<f64>() - 1.0));
    let mut prop = z.clone();
    let mut steps = 0;
    for _ in 0..n_leapfrog {
        integ.leapfrog(&mut prop, eps)?;
        steps += 1;
        if !prop.logp.is_finite() {
            break;
        }
    }
    let h = integ.hamiltonian(&prop);
    let accept = if h.is_finite() { (h0 - h).exp().min(1.0) } else { 0.0 };
    let divergent = h - h0 > MAX_DELTA_H;
    if rng.random::<f64>() < accept {
        *z = prop;
    }
    Ok(TransitionStats {
        accept_stat: accept,
        n_leapfrog: steps,
        tree_depth: 0,
        divergent,
        energy: integ.hamiltonian(z),
    })
}

/// Heuristic initial step size: double or halve until a single leapfrog
/// step's acceptance crosses 0.8.
pub(crate) fn init_step_size<D: LogDensity + ?Sized, R: Rng + ?Sized>(
    integ: &Integrator<'_, D>,
    z: &Point,
    mut eps: f64,
    rng: &mut R,
) -> Result<f64> {
    let threshold = 0.8f64.ln();
    let trial = |eps: f64, rng: &mut R| -> Result<f64> {
        let mut zz = z.clone();
        integ.sample_momentum(&mut zz, rng);
        let h0 = integ.hamiltonian(&zz);
        integ.leapfrog(&mut zz, eps)?;
        let h = integ.hamiltonian(&zz);
        Ok(h0 - h)
    };
    let direction = if trial(eps, rng)? > threshold { 1.0 } else { -1.0 };
    loop {
        let delta = trial(eps, rng)?;
        if direction > 0.0 && !(delta > threshold) || direction < 0.0 && !(delta < threshold) {
            return Ok(eps);
        }
        eps = if direction > 0.0 { 2.0 * eps } else { 0.5 * eps };
        if eps > 1e7 {
            return Err(Error::Degenerate(
                "step size search diverged; the posterior may be improper".into(),
            ));
        }
        if eps == 0.0 {
            return Err(Error::Degenerate(
                "step size search collapsed to zero; check the model gradient".into(),
            ));
        }
    }
}
