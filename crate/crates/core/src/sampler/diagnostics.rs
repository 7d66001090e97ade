use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PosteriorDraws;

/// Why a diagnostic could not be computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degenerate {
    /// Fewer than 2 chains or fewer than 4 draws per chain.
    TooFewDraws,
    /// Zero within-chain variance.
    ZeroVariance,
}

fn split_halves(chains: &[Vec<f64>]) -> Result<Vec<&[f64]>, Degenerate> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if chains.len() < 2 || n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Degenerate::TooFewDraws);
    }
    let half = n / 2;
    Ok(chains.iter().flat_map(|c| [&c[..half], &c[n - half..]]).collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Split-chain potential scale reduction factor.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64, Degenerate> {
    let halves = split_halves(chains)?;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| var(h)).sum::<f64>() / halves.len() as f64;
    if !(w > 0.0) {
        return Err(Degenerate::ZeroVariance);
    }
    let b_over_n = var(&means);
    let var_plus = (n - 1.0) / n * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

/// Multi-chain effective sample size on split chains, truncating the
/// autocorrelation sum with Geyer's initial positive monotone sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64, Degenerate> {
    let halves = split_halves(chains)?;
    let m = halves.len();
    let n = halves[0].len();
    let centered: Vec<Vec<f64>> = halves
        .iter()
        .map(|h| {
            let mu = mean(h);
            h.iter().map(|x| x - mu).collect()
        })
        .collect();
    // biased autocovariance at `lag`, averaged over chains
    let mean_acov = |lag: usize| -> f64 {
        centered
            .iter()
            .map(|c| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let chain_means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let acov0 = mean_acov(0);
    let mean_var = acov0 * n as f64 / (n as f64 - 1.0);
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += var(&chain_means);
    }
    if !(mean_var > 0.0) || !(var_plus > 0.0) {
        return Err(Degenerate::ZeroVariance);
    }

    let mut rho = vec![0.0; n + 1];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut t = 1;
    while t + 5 < n && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[t + 1] = rho_even;
            rho[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho[max_t + 1] = rho_even;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            let avg = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 1] = avg;
            rho[t + 2] = avg;
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let mut tau = -1.0 + 2.0 * rho[..=max_t].iter().sum::<f64>() + rho[max_t + 1];
    tau = tau.max(1.0 / total.log10());
    Ok(total / tau)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateDiagnostic {
    pub index: usize,
    pub name: String,
    /// `None` when degenerate.
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
    pub degenerate: Option<Degenerate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub pass: bool,
    pub rhat_limit: f64,
    pub ess_limit: f64,
    pub n_coordinates: usize,
    pub max_rhat: Option<f64>,
    pub min_ess: Option<f64>,
    pub divergences: usize,
    /// Failing coordinates, degenerate ones first, then by decreasing R̂.
    pub failing: Vec<CoordinateDiagnostic>,
    pub coordinates: Vec<CoordinateDiagnostic>,
}

impl ConvergenceReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(
            s,
            "convergence: {verdict} ({} coordinates, R-hat < {}, ESS > {})",
            self.n_coordinates, self.rhat_limit, self.ess_limit
        );
        if let (Some(r), Some(e)) = (self.max_rhat, self.min_ess) {
            let _ = writeln!(s, "max R-hat {r:.4}, min ESS {e:.0}, divergences {}", self.divergences);
        }
        if !self.failing.is_empty() {
            let _ = writeln!(s, "{:<48} {:>10} {:>10}", "coordinate", "R-hat", "ESS");
            for c in &self.failing {
                let f = |v: Option<f64>, p: usize| v.map_or("degenerate".to_string(), |x| format!("{x:.p$}"));
                let _ = writeln!(s, "{:<48} {:>10} {:>10}", c.name, f(c.rhat, 4), f(c.ess, 0));
            }
        }
        s
    }
}

pub fn check_convergence(draws: &PosteriorDraws) -> ConvergenceReport {
    check_convergence_with(draws, 1.1, 1000.0)
}

pub fn check_convergence_with(draws: &PosteriorDraws, rhat_limit: f64, ess_limit: f64) -> ConvergenceReport {
    let coordinates: Vec<CoordinateDiagnostic> = (0..draws.dim)
        .into_par_iter()
        .map(|k| {
            let chains = draws.chains(k);
            let rhat = split_rhat(&chains);
            let ess = effective_sample_size(&chains);
            CoordinateDiagnostic {
                index: k,
                name: draws.names.get(k).cloned().unwrap_or_else(|| format!("theta[{k}]")),
                degenerate: rhat.err().or(ess.err()),
                rhat: rhat.ok(),
                ess: ess.ok(),
            }
        })
        .collect();
    let ok =
        |c: &CoordinateDiagnostic| matches!((c.rhat, c.ess), (Some(r), Some(e)) if r < rhat_limit && e > ess_limit);
    let mut failing: Vec<CoordinateDiagnostic> = coordinates.iter().filter(|c| !ok(c)).cloned().collect();
    failing.sort_by(|a, b| {
        let key = |c: &CoordinateDiagnostic| c.rhat.unwrap_or(f64::INFINITY);
        key(b).total_cmp(&key(a)).then(a.index.cmp(&b.index))
    });
    let max_rhat = coordinates.iter().filter_map(|c| c.rhat).reduce(f64::max);
    let min_ess = coordinates.iter().filter_map(|c| c.ess).reduce(f64::min);
    ConvergenceReport {
        pass: failing.is_empty(),
        rhat_limit,
        ess_limit,
        n_coordinates: coordinates.len(),
        max_rhat,
        min_ess,
        divergences: draws.n_divergent(),
        failing,
        coordinates,
    }
}
