//! Exact deterministic moment recursions.
//!
//! The first and second moments of the restricted weighted sum evolve by
//! linear one-step recursions, so they serve as ground truth for the Monte
//! Carlo ensembles. Values can span hundreds of orders of magnitude, so the
//! recursions are carried in log space throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{IndexSet, ModelParams};
use crate::util::log_add_exp;

/// Deterministic moment sequences on a checkpoint grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentSeries {
    pub grid: Vec<u64>,
    /// E[S_n] for the unrestricted walk.
    pub e_s: Vec<f64>,
    /// E[Xi_n] (equals E[Sigma_n] when the index set is everything).
    pub e_xi: Vec<f64>,
    /// E[Xi_n^2].
    pub e_xi2: Vec<f64>,
    /// E[Xi_n^2] / E[Xi_n]^2.
    pub ratio: Vec<f64>,
}

struct MomentEngine {
    p: f64,
    beta: f64,
    /// ln mu_{n+1}
    log_mu_next: f64,
    /// ln E[Xi_n]; -inf before s1
    log_e1: f64,
    /// ln E[Xi_n^2]
    log_e2: f64,
    s1: u64,
    n: u64,
}

impl MomentEngine {
    fn new(params: &ModelParams, s1: u64) -> Self {
        let mut e = Self {
            p: params.p(),
            beta: params.beta(),
            log_mu_next: (1.0 + params.beta()).ln(),
            log_e1: f64::NEG_INFINITY,
            log_e2: f64::NEG_INFINITY,
            s1,
            n: 1,
        };
        if s1 == 1 {
            // Xi_{s1} = mu_{s1} = 1 deterministically
            e.log_e1 = 0.0;
            e.log_e2 = 0.0;
        }
        e
    }

    /// Advances from n to n+1; `member_next` is whether n+1 lies in the set.
    fn step(&mut self, member_next: bool) {
        let n = self.n;
        let next = n + 1;
        let log_mu_step = self.log_mu_next;
        self.log_mu_next += ((self.beta) / (n as f64 + 1.0)).ln_1p();
        if next == self.s1 {
            // deterministic start: Xi = mu_{s1}
            self.log_e1 = log_mu_step;
            self.log_e2 = 2.0 * log_mu_step;
        } else if next > self.s1 && member_next {
            let w = (self.beta + 1.0) / n as f64;
            let pw = self.p * w;
            // E2 first: it needs the un-advanced E1
            self.log_e2 = log_add_exp(
                self.log_e2 + (2.0 * pw).ln_1p(),
                pw.ln() + log_mu_step + self.log_e1,
            );
            self.log_e1 += pw.ln_1p();
        }
        self.n = next;
    }

    fn e1(&self) -> f64 {
        self.log_e1.exp()
    }

    fn e2(&self) -> f64 {
        self.log_e2.exp()
    }

    fn ratio(&self) -> f64 {
        (self.log_e2 - 2.0 * self.log_e1).exp()
    }
}

/// E[Xi_n] on the grid. For the full index set this is E[Sigma_n].
pub fn exact_mean_xi(
    params: &ModelParams,
    index_set: &IndexSet,
    grid: &[u64],
) -> Result<Vec<f64>> {
    Ok(run_engine(params, index_set, grid)?.0)
}

/// E[Xi_n^2] on the grid.
pub fn exact_second_moment_xi(
    params: &ModelParams,
    index_set: &IndexSet,
    grid: &[u64],
) -> Result<Vec<f64>> {
    Ok(run_engine(params, index_set, grid)?.1)
}

fn run_engine(
    params: &ModelParams,
    index_set: &IndexSet,
    grid: &[u64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    index_set.validate()?;
    let n_max = *grid.last().ok_or_else(|| Error::Config("empty grid".into()))?;
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] < 1 {
        return Err(Error::Config("grid must be strictly increasing, >= 1".into()));
    }
    let mut engine = MomentEngine::new(params, index_set.s1());
    let mut e1 = Vec::with_capacity(grid.len());
    let mut e2 = Vec::with_capacity(grid.len());
    let mut ratio = Vec::with_capacity(grid.len());
    let mut gi = 0;
    for n in 1..=n_max {
        if n > 1 {
            engine.step(index_set.contains(n));
        }
        if grid[gi] == n {
            e1.push(engine.e1());
            e2.push(engine.e2());
            ratio.push(engine.ratio());
            gi += 1;
            if gi == grid.len() {
                break;
            }
        }
    }
    Ok((e1, e2, ratio))
}

/// E[S_n] for the unrestricted walk, via
/// `E[S_{n+1}] = E[S_n] + p(beta+1) E[Sigma_n] / (n mu_{n+1})`.
pub fn exact_mean_s(params: &ModelParams, grid: &[u64]) -> Result<Vec<f64>> {
    let n_max = *grid.last().ok_or_else(|| Error::Config("empty grid".into()))?;
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] < 1 {
        return Err(Error::Config("grid must be strictly increasing, >= 1".into()));
    }
    let p = params.p();
    let beta = params.beta();
    let mut out = Vec::with_capacity(grid.len());
    let mut e_s = 1.0f64;
    // log E[Sigma_n] and log mu_{n+1}
    let mut log_e_sigma = 0.0f64;
    let mut log_mu_next = (1.0 + beta).ln();
    let mut gi = 0;
    for n in 1..=n_max {
        if n > 1 {
            let m = (n - 1) as f64;
            let incr = p * (beta + 1.0) * (log_e_sigma - log_mu_next).exp() / m;
            e_s += incr;
            log_e_sigma += (p * (beta + 1.0) / m).ln_1p();
            log_mu_next += (beta / n as f64).ln_1p();
        }
        if grid[gi] == n {
            out.push(e_s);
            gi += 1;
            if gi == grid.len() {
                break;
            }
        }
    }
    Ok(out)
}

/// Computes all exact series on a grid in one pass.
pub fn moment_series(
    params: &ModelParams,
    index_set: &IndexSet,
    grid: &[u64],
) -> Result<MomentSeries> {
    let (e_xi, e_xi2, ratio) = run_engine(params, index_set, grid)?;
    let e_s = exact_mean_s(params, grid)?;
    Ok(MomentSeries { grid: grid.to_vec(), e_s, e_xi, e_xi2, ratio })
}

/// Evidence for the second-moment ratio bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioCertificate {
    /// Maximum observed ratio over the whole run.
    pub sup: f64,
    /// Ratio increase over the final decade `[n_max/10, n_max]`.
    pub last_decade_increment: f64,
    /// Threshold from which the sparsity condition holds over the window.
    pub cond_a_n0: u64,
}

/// Runs the exact recursions to `n_max` and reports the empirical sup of
/// `E[Xi_n^2] / E[Xi_n]^2` together with its final-decade increment.
/// Requires theta > 0 and the sparsity condition to hold on the window.
pub fn ratio_certificate(
    params: &ModelParams,
    index_set: &IndexSet,
    n_max: u64,
) -> Result<RatioCertificate> {
    if params.theta() <= 0.0 {
        return Err(Error::Domain(
            "ratio certificate requires theta > 0".into(),
        ));
    }
    index_set.validate()?;
    let n0 = index_set
        .cond_a_n0(params.theta(), n_max)
        .ok_or_else(|| {
            Error::Domain("index set violates the sparsity condition at the horizon".into())
        })?;
    let s1 = index_set.s1();
    if n_max <= s1 {
        return Err(Error::Config("n_max must exceed s1".into()));
    }
    let mut engine = MomentEngine::new(params, s1);
    let decade_start = (n_max / 10).max(s1);
    let mut sup = f64::NEG_INFINITY;
    let mut ratio_at_decade_start = f64::NAN;
    let mut max_in_decade = f64::NEG_INFINITY;
    for n in 1..=n_max {
        if n > 1 {
            engine.step(index_set.contains(n));
        }
        if n >= s1 {
            let r = engine.ratio();
            sup = sup.max(r);
            if n == decade_start {
                ratio_at_decade_start = r;
            }
            if n >= decade_start {
                max_in_decade = max_in_decade.max(r);
            }
        }
    }
    Ok(RatioCertificate {
        sup,
        last_decade_increment: (max_in_decade - ratio_at_decade_start).max(0.0),
        cond_a_n0: n0,
    })
}

/// Both sides of the Paley-Zygmund inequality for a finite pmf.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PaleyZygmund {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `P(Z > t E[Z]) >= (1-t)^2 (E[Z])^2 / E[Z^2]` for a finite discrete
/// nonnegative Z given as (value, probability) pairs.
pub fn paley_zygmund_check(pmf: &[(f64, f64)], t: f64) -> Result<PaleyZygmund> {
    if !(0.0..1.0).contains(&t) || t <= 0.0 {
        return Err(Error::Domain(format!("theta must lie in (0,1), got {t}")));
    }
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut mass = 0.0;
    for &(z, prob) in pmf {
        if z < 0.0 || prob < 0.0 {
            return Err(Error::Domain("pmf needs nonnegative values and masses".into()));
        }
        mean += z * prob;
        second += z * z * prob;
        mass += prob;
    }
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("pmf mass {mass} != 1")));
    }
    if mean <= 0.0 {
        return Err(Error::Domain("E[Z] must be positive".into()));
    }
    let threshold = t * mean;
    let lhs: f64 = pmf
        .iter()
        .filter(|&&(z, _)| z > threshold)
        .map(|&(_, prob)| prob)
        .sum();
    let rhs = (1.0 - t) * (1.0 - t) * mean * mean / second;
    Ok(PaleyZygmund { lhs, rhs, holds: lhs >= rhs - 1e-12 })
}
