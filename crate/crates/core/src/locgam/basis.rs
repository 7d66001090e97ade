//! Uniform B-spline bases and difference penalties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 5;

/// A B-spline basis on equally spaced knots extended `degree` steps beyond
/// both ends of `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    pub knots: Vec<f64>,
    pub degree: usize,
}

impl BSplineBasis {
    pub fn uniform(lo: f64, hi: f64, n_interior: usize, degree: usize) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!("invalid basis range [{lo}, {hi}]")));
        }
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::InvalidInput(format!(
                "basis degree must be in 1..={MAX_DEGREE}, got {degree}"
            )));
        }
        let step = (hi - lo) / (n_interior + 1) as f64;
        let n_knots = n_interior + 2 + 2 * degree;
        let knots = (0..n_knots).map(|j| lo + (j as f64 - degree as f64) * step).collect();
        Ok(BSplineBasis { knots, degree })
    }

    pub fn from_knots(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::InvalidInput(format!("unsupported basis degree {degree}")));
        }
        if knots.len() < 2 * degree + 2 {
            return Err(Error::InvalidInput("too few knots for the basis degree".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidInput("knot vector must be strictly increasing".into()));
        }
        Ok(BSplineBasis { knots, degree })
    }

    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The interval on which the basis functions form a partition of unity.
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.len()])
    }

    /// Index of the first nonzero basis function at `x` and the
    /// `degree + 1` nonzero values. `x` must lie in `domain()`.
    pub fn eval(&self, x: f64) -> (usize, [f64; MAX_DEGREE + 1]) {
        let p = self.degree;
        let t = &self.knots;
        let n = self.len();
        // knot span k with t[k] <= x < t[k+1], clamped to the domain
        let mut k = p;
        while k + 1 < n && x >= t[k + 1] {
            k += 1;
        }
        let mut basis = [0.0; MAX_DEGREE + 1];
        let mut left = [0.0; MAX_DEGREE + 1];
        let mut right = [0.0; MAX_DEGREE + 1];
        basis[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[k + 1 - j];
            right[j] = t[k + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = basis[r] / (right[r + 1] + left[j - r]);
                basis[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            basis[j] = saved;
        }
        (k - p, basis)
    }
}

/// `DᵀD` for the `order`-th difference matrix `D` on `n` coefficients.
pub fn difference_penalty(n: usize, order: usize) -> Vec<Vec<f64>> {
    let mut d: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..order {
        d = d
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
            .collect();
    }
    let mut p = vec![vec![0.0; n]; n];
    for row in &d {
        for i in 0..n {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                p[i][j] += row[i] * row[j];
            }
        }
    }
    p
}
