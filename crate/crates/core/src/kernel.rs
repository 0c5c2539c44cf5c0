//! Model parameters and memory-kernel mathematics.
//!
//! The memory weight of step `k` at time `n` is `mu_k / c_n(beta+1)`, where
//! `mu_n = Gamma(n+beta) / (Gamma(n) Gamma(beta+1))` and `c_n(g)` is the same
//! ratio with exponent `g`. Partial sums of `mu` telescope to `c_n(beta+1)`,
//! which is what makes the O(log n) inverse-CDF sampler below exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::log_gamma;

/// Tolerance on theta for detecting the critical boundary beta = p/(1-p).
pub const THETA_TOL: f64 = 1e-12;

/// Growth regime of the walk, classified from (p, beta).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// -1 < beta <= 0: survival is certain and growth is n^theta.
    DriftSub,
    /// 0 < beta < p/(1-p): survival has probability strictly in (0, 1).
    DriftSuper,
    /// beta = p/(1-p): expected count grows like beta * log n, but the walk freezes.
    Critical,
    /// beta > p/(1-p): the expected total count is finite.
    Subextinct,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::DriftSub => "DRIFT_SUB",
            Regime::DriftSuper => "DRIFT_SUPER",
            Regime::Critical => "CRITICAL",
            Regime::Subextinct => "SUBEXTINCT",
        }
    }
}

/// The pair (p, beta) with its derived exponent and regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    p: f64,
    beta: f64,
    theta: f64,
    regime: Regime,
}

impl ModelParams {
    pub fn new(p: f64, beta: f64) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 || p >= 1.0 {
            return Err(Error::Config(format!("p must lie in (0,1), got {p}")));
        }
        if !beta.is_finite() || beta <= -1.0 {
            return Err(Error::Config(format!("beta > -1 required, got {beta}")));
        }
        let theta = p * (beta + 1.0) - beta;
        let regime = if theta.abs() <= THETA_TOL {
            Regime::Critical
        } else if beta <= 0.0 {
            Regime::DriftSub
        } else if theta > 0.0 {
            Regime::DriftSuper
        } else {
            Regime::Subextinct
        };
        Ok(Self { p, beta, theta, regime })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Growth exponent theta = p(beta+1) - beta.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Martingale scaling exponent gamma = p(beta+1).
    pub fn gamma(&self) -> f64 {
        self.p * (self.beta + 1.0)
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    fn require_positive_theta(&self, what: &str) -> Result<()> {
        if self.theta <= THETA_TOL {
            return Err(Error::Domain(format!(
                "{what} is undefined for theta <= 0 (p={}, beta={}, theta={})",
                self.p, self.beta, self.theta
            )));
        }
        Ok(())
    }
}

/// Memory weight `mu_n = Gamma(n+beta) / (Gamma(n) Gamma(beta+1))`.
pub fn mu(params: &ModelParams, n: u64) -> Result<f64> {
    c(params.beta(), n)
}

/// `c_n(g) = Gamma(n+g) / (Gamma(n) Gamma(g+1))` for `g > -1`.
pub fn c(g: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("c_n requires n >= 1".into()));
    }
    if !g.is_finite() || g <= -1.0 {
        return Err(Error::Domain(format!("c_n requires gamma > -1, got {g}")));
    }
    let nf = n as f64;
    let log =
        log_gamma(nf + g)? - log_gamma(nf)? - log_gamma(g + 1.0)?;
    Ok(log.exp())
}

/// Log of `c_n(g)`, for quantities that would overflow in direct space.
pub fn log_c(g: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("c_n requires n >= 1".into()));
    }
    let nf = n as f64;
    Ok(log_gamma(nf + g)? - log_gamma(nf)? - log_gamma(g + 1.0)?)
}

/// Growth constant `C(p,beta) = 1/theta * Gamma(beta+1)/Gamma(p(beta+1))`.
/// Only defined when theta > 0.
pub fn big_c(params: &ModelParams) -> Result<f64> {
    params.require_positive_theta("C(p,beta)")?;
    let log = log_gamma(params.beta() + 1.0)? - log_gamma(params.gamma())?;
    Ok(log.exp() / params.theta())
}

/// Coefficient `(p^2(beta+1)^2 + beta^2) / theta^2` in the limit variance.
pub fn eta_coefficient(params: &ModelParams) -> Result<f64> {
    params.require_positive_theta("eta coefficient")?;
    let g = params.gamma();
    let b = params.beta();
    Ok((g * g + b * b) / (params.theta() * params.theta()))
}

/// `eta^2 = coefficient * C(p,beta) * M_inf`.
pub fn eta_squared(params: &ModelParams, m_inf: f64) -> Result<f64> {
    if !m_inf.is_finite() || m_inf < 0.0 {
        return Err(Error::Domain(format!("m_inf must be >= 0, got {m_inf}")));
    }
    Ok(eta_coefficient(params)? * big_c(params)? * m_inf)
}

/// Probability that the memory index drawn at time n equals k:
/// `mu_k / c_n(beta+1)` for `1 <= k <= n`, zero otherwise.
pub fn memory_pmf(params: &ModelParams, n: u64, k: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("memory_pmf requires n >= 1".into()));
    }
    if k == 0 || k > n {
        return Ok(0.0);
    }
    let log = log_c(params.beta(), k)? - log_c(params.beta() + 1.0, n)?;
    Ok(log.exp())
}

/// Interval between drift re-anchoring checks of the cumulative table.
const ANCHOR_INTERVAL: u64 = 1 << 20;
/// Hard error threshold for incremental-vs-log-gamma divergence.
const ANCHOR_TOL: f64 = 1e-8;

/// Cumulative memory weights `c_m(beta+1)` for `m = 1..n`, grown one cell per
/// step and sampled by binary search. Owned by a single trajectory.
#[derive(Debug, Clone)]
pub struct WeightTable {
    beta: f64,
    cum: Vec<f64>,
}

impl WeightTable {
    pub fn new(beta: f64) -> Self {
        // c_1(beta+1) = 1
        Self { beta, cum: vec![1.0] }
    }

    /// Current horizon n.
    pub fn len(&self) -> u64 {
        self.cum.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `c_m(beta+1)` for `1 <= m <= len`.
    pub fn cumulative(&self, m: u64) -> f64 {
        self.cum[(m - 1) as usize]
    }

    /// Appends cells up to horizon `n` via
    /// `c_{m+1}(beta+1) = c_m(beta+1) * (m + beta + 1) / m`.
    pub fn extend_to(&mut self, n: u64) {
        self.cum.reserve(n.saturating_sub(self.len()) as usize);
        while self.len() < n {
            let m = self.len() as f64;
            let next = self.cum[self.cum.len() - 1] * (m + self.beta + 1.0) / m;
            self.cum.push(next);
            let len = self.len();
            if len % ANCHOR_INTERVAL == 0 {
                self.anchor_check(len);
            }
        }
    }

    /// Compares the incremental cell against the log-gamma form. Divergence
    /// beyond ANCHOR_TOL means the table is corrupt; that is a bug, not a
    /// recoverable condition.
    fn anchor_check(&self, n: u64) {
        let exact = log_c(self.beta + 1.0, n)
            .expect("anchor evaluation")
            .exp();
        let incremental = self.cumulative(n);
        let rel = ((incremental - exact) / exact).abs();
        assert!(
            rel <= ANCHOR_TOL,
            "cumulative weight drift at n={n}: incremental {incremental} vs log-gamma {exact} (rel {rel})"
        );
    }

    /// Inverse-CDF draw over `1..=n`: the smallest m with
    /// `c_m(beta+1) >= u * c_n(beta+1)`. O(log n).
    pub fn sample(&self, n: u64, u: f64) -> u64 {
        debug_assert!(n >= 1 && n <= self.len());
        let target = u * self.cum[(n - 1) as usize];
        let idx = self.cum[..n as usize].partition_point(|&c| c < target);
        (idx as u64 + 1).min(n)
    }
}

/// Draws a memory index for time n, growing the table as needed.
pub fn sample_memory_index(table: &mut WeightTable, n: u64, u: f64) -> u64 {
    table.extend_to(n);
    table.sample(n, u)
}

/// The restriction set S for the modified process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexSet {
    /// All of the naturals.
    All,
    /// `{ start, start + step, start + 2*step, ... }`.
    Arithmetic { start: u64, step: u64 },
    /// Explicit sorted members (finite horizon).
    Members(Vec<u64>),
    /// The naturals minus an explicit sorted exclusion list.
    Complement(Vec<u64>),
}

impl IndexSet {
    /// Validates the representation: sorted, strictly increasing, s1 >= 1.
    pub fn validate(&self) -> Result<()> {
        match self {
            IndexSet::All => Ok(()),
            IndexSet::Arithmetic { start, step } => {
                if *start < 1 || *step < 1 {
                    Err(Error::Config(
                        "arithmetic index set needs start >= 1 and step >= 1".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            IndexSet::Members(v) => {
                if v.is_empty() {
                    return Err(Error::Config("index set must be nonempty".into()));
                }
                if v[0] < 1 || v.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config(
                        "index set members must be strictly increasing and >= 1".into(),
                    ));
                }
                Ok(())
            }
            IndexSet::Complement(v) => {
                if v.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config(
                        "exclusion list must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, k: u64) -> bool {
        if k == 0 {
            return false;
        }
        match self {
            IndexSet::All => true,
            IndexSet::Arithmetic { start, step } => k >= *start && (k - start) % step == 0,
            IndexSet::Members(v) => v.binary_search(&k).is_ok(),
            IndexSet::Complement(v) => v.binary_search(&k).is_err(),
        }
    }

    /// Smallest member s1.
    pub fn s1(&self) -> u64 {
        match self {
            IndexSet::All => 1,
            IndexSet::Arithmetic { start, .. } => *start,
            IndexSet::Members(v) => v[0],
            IndexSet::Complement(v) => {
                let mut k = 1u64;
                for &x in v {
                    if x == k {
                        k += 1;
                    } else if x > k {
                        break;
                    }
                }
                k
            }
        }
    }

    /// Count of members in `(s1, n]`.
    fn members_after_s1(&self, n: u64) -> u64 {
        let s1 = self.s1();
        if n <= s1 {
            return 0;
        }
        match self {
            IndexSet::All => n - s1,
            IndexSet::Arithmetic { start, step } => (n - start) / step,
            IndexSet::Members(v) => {
                v.partition_point(|&x| x <= n) as u64 - 1
            }
            IndexSet::Complement(v) => {
                let excluded =
                    v.partition_point(|&x| x <= n) - v.partition_point(|&x| x <= s1);
                (n - s1) - excluded as u64
            }
        }
    }

    /// Deficiency counter `m_n = #{k : s1 < k <= n, k not in S}`.
    pub fn deficiency(&self, n: u64) -> u64 {
        let s1 = self.s1();
        if n <= s1 {
            return 0;
        }
        (n - s1) - self.members_after_s1(n)
    }

    /// Smallest N0 <= horizon such that `m_n <= n^theta` for all
    /// n in [N0, horizon], or None if the condition fails at the horizon.
    pub fn cond_a_n0(&self, theta: f64, horizon: u64) -> Option<u64> {
        let mut last_violation = 0u64;
        for n in 1..=horizon {
            if (self.deficiency(n) as f64) > (n as f64).powf(theta) {
                last_violation = n;
            }
        }
        if last_violation >= horizon {
            None
        } else {
            Some(last_violation + 1)
        }
    }
}

/// Modified-kernel draw: returns k in S with probability
/// `x_k mu_k / sum mu`, else 0 with the remaining mass. Realized by drawing
/// from the unrestricted kernel and mapping non-members to the null atom.
pub fn modified_memory_sample(
    table: &mut WeightTable,
    index_set: &IndexSet,
    n: u64,
    u: f64,
) -> u64 {
    let k = sample_memory_index(table, n, u);
    if index_set.contains(k) {
        k
    } else {
        0
    }
}
