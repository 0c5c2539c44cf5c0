//! Ensemble-level statistics confronting the limit theory with simulation:
//! growth-exponent regression, survival classification, the standardized
//! CLT sample, KS distance, and conditional-variance diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, ModelParams};
use crate::rng::replica_seed;
use crate::special::log_gamma;
use crate::util::KahanSum;
use crate::walker::{simulate, Checkpoint, SimOptions, Trajectory};

/// Survival classification of one trajectory at its horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Survival {
    Surviving,
    Extinct,
    Undecided,
}

/// Default tail probability for the extinction bound.
pub const DEFAULT_DELTA: f64 = 1e-6;

/// Classifies a trajectory at its horizon.
///
/// For beta > 0 the probability of ever producing another 1 after the
/// horizon n, with the weighted sum frozen at its current value, is at most
///
///   p(beta+1) * Sigma_n * sum_{m >= n} 1 / (m mu_{m+1})
///     <= p(beta+1) * Sigma_n * 2 Gamma(beta+1) * (n^{-1-beta} + n^{-beta}/beta),
///
/// using the Gamma-ratio sandwich Gamma(x+beta)/Gamma(x) >= x^beta / 2 and an
/// integral comparison. Below `delta` the replica is labeled extinct: a
/// one-sided guarantee, not a heuristic. For beta <= 0 the series diverges
/// and no trajectory is ever labeled extinct.
///
/// "Surviving" means the walk produced a 1 inside the last decade (n/10, n].
pub fn classify_survival(traj: &Trajectory, delta: f64) -> Survival {
    let n = traj.n();
    let beta = traj.params().beta();
    if beta > 0.0 && delta > 0.0 {
        let nf = n as f64;
        let log_tail = (nf.powf(-1.0 - beta) + nf.powf(-beta) / beta).ln()
            + log_gamma(beta + 1.0).expect("beta > 0")
            + 2.0f64.ln();
        let bound = traj.params().p() * (beta + 1.0) * traj.sigma() * log_tail.exp();
        if bound < delta {
            return Survival::Extinct;
        }
    }
    if traj.last_one() * 10 > n {
        Survival::Surviving
    } else {
        Survival::Undecided
    }
}

/// Per-replica summary retained after a simulation ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: u64,
    pub seed: u64,
    pub n: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub last_one: u64,
    pub survival: Survival,
}

/// Options for ensemble runs.
#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub sim: SimOptions,
    /// Extinction tail probability.
    pub delta: f64,
    /// Worker threads; None uses the global pool.
    pub threads: Option<usize>,
    /// Smallest n entering the exponent regression.
    pub fit_n_min: u64,
    /// Optionally compute the CLT sample at (n_eval, n_ref).
    pub clt: Option<(u64, u64)>,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            sim: SimOptions::default(),
            delta: DEFAULT_DELTA,
            threads: None,
            fit_n_min: 1_000,
            clt: None,
        }
    }
}

/// Simulates R independent replicas; replica r is seeded by the documented
/// 64-bit mixing of (master_seed, r). Results are sorted by replica index,
/// so the output is independent of scheduling.
pub fn run_replicas(
    params: ModelParams,
    n_max: u64,
    replicas: u64,
    master_seed: u64,
    opts: &EnsembleOptions,
) -> Result<Vec<ReplicaSummary>> {
    if replicas < 1 {
        return Err(Error::Config("replicas must be >= 1".into()));
    }
    let mut sim = opts.sim.clone();
    if let Some((n_eval, n_ref)) = opts.clt {
        sim.extra_checkpoints.push(n_eval);
        sim.extra_checkpoints.push(n_ref);
    }
    let worker = |r: u64| -> Result<ReplicaSummary> {
        let seed = replica_seed(master_seed, r);
        let traj = simulate(params, n_max, seed, &sim)?;
        Ok(ReplicaSummary {
            replica: r,
            seed,
            n: traj.n(),
            checkpoints: traj.checkpoints().to_vec(),
            last_one: traj.last_one(),
            survival: classify_survival(&traj, opts.delta),
        })
    };
    let run_all = || -> Result<Vec<ReplicaSummary>> {
        let mut out = (0..replicas)
            .into_par_iter()
            .map(worker)
            .collect::<Result<Vec<_>>>()?;
        out.sort_by_key(|s| s.replica);
        Ok(out)
    };
    match opts.threads {
        None => run_all(),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
            pool.install(run_all)
        }
    }
}

/// Least-squares exponent estimate with a dispersion CI.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub theta_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub series_used: usize,
}

/// Pooled log-log slope of S_n against n over several series, each demeaned
/// separately (per-series intercepts absorb the replica-level constant). The
/// CI comes from the dispersion of per-series slopes.
pub fn estimate_exponent(series: &[Vec<(u64, f64)>], n_min: u64) -> Result<ExponentEstimate> {
    let mut pooled_sxy = 0.0;
    let mut pooled_sxx = 0.0;
    let mut slopes = Vec::new();
    for s in series {
        let pts: Vec<(f64, f64)> = s
            .iter()
            .filter(|&&(n, v)| n >= n_min && v > 0.0)
            .map(|&(n, v)| ((n as f64).ln(), v.ln()))
            .collect();
        if pts.len() < 4 {
            continue;
        }
        let m = pts.len() as f64;
        let xbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - xbar).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
        if sxx <= 0.0 {
            continue;
        }
        pooled_sxx += sxx;
        pooled_sxy += sxy;
        slopes.push(sxy / sxx);
    }
    if slopes.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "exponent fit needs >= 2 usable series with >= 4 points at n >= {n_min}, got {}",
            slopes.len()
        )));
    }
    let theta_hat = pooled_sxy / pooled_sxx;
    let r = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / r;
    let var = slopes.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let half = 1.96 * (var / r).sqrt();
    Ok(ExponentEstimate {
        theta_hat,
        ci_lower: theta_hat.min(mean - half),
        ci_upper: theta_hat.max(mean + half),
        series_used: slopes.len(),
    })
}

/// Estimates the exponent from surviving replicas of an ensemble.
pub fn estimate_exponent_from_replicas(
    reps: &[ReplicaSummary],
    n_min: u64,
) -> Result<ExponentEstimate> {
    let series: Vec<Vec<(u64, f64)>> = reps
        .iter()
        .filter(|r| r.survival == Survival::Surviving)
        .map(|r| r.checkpoints.iter().map(|c| (c.n, c.s as f64)).collect())
        .collect();
    estimate_exponent(&series, n_min)
}

/// Standardized CLT sample over a set of replicas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltSample {
    pub n_eval: u64,
    pub n_ref: u64,
    /// Standardized values with the finite-reference variance correction
    /// applied (see below); this is the sample tested against N(0,1).
    pub z: Vec<f64>,
    /// Plug-in standardization W / (eta_hat sqrt(n_eval^theta)) without the
    /// correction; biased low in scale whenever n_ref is finite.
    pub z_raw: Vec<f64>,
    /// Unstandardized W / sqrt(n_eval^theta) for the mixture-form view.
    pub w_scaled: Vec<f64>,
    pub excluded_zero_eta: usize,
    pub excluded_nonsurviving: usize,
}

/// Fraction of the limit variance that remains observable when the
/// martingale limit is replaced by its value at n_ref: the increments
/// beyond n_ref are shared between the centering term and the walk itself
/// and cancel. Tends to 1 as n_ref / n_eval grows.
fn variance_retention(params: &ModelParams, n_eval: u64, n_ref: u64) -> f64 {
    let b2 = params.beta() * params.beta();
    let g2 = params.gamma() * params.gamma();
    let rho = (n_eval as f64 / n_ref as f64).powf(params.theta());
    (b2 + g2 * (1.0 - rho)) / (b2 + g2)
}

/// Builds the standardized sample Z = W / (eta_hat sqrt(n_eval^theta)) with
/// W = S_{n_eval} - C(p,beta) M_{n_ref} n_eval^theta and the per-replica
/// plug-in eta_hat. Replicas with eta_hat = 0 are excluded and counted;
/// for beta > 0 only surviving replicas enter.
pub fn clt_sample(
    params: &ModelParams,
    reps: &[ReplicaSummary],
    n_eval: u64,
    n_ref: u64,
) -> Result<CltSample> {
    if n_ref < n_eval {
        return Err(Error::Config(format!(
            "n_ref = {n_ref} must be >= n_eval = {n_eval}"
        )));
    }
    let theta = params.theta();
    if theta <= kernel::THETA_TOL {
        return Err(Error::Domain("CLT standardization requires theta > 0".into()));
    }
    let big_c = kernel::big_c(params)?;
    let scale_n = (n_eval as f64).powf(theta);
    let retention = variance_retention(params, n_eval, n_ref).sqrt();
    let condition_on_survival = params.beta() > 0.0;
    let mut out = CltSample {
        n_eval,
        n_ref,
        z: Vec::new(),
        z_raw: Vec::new(),
        w_scaled: Vec::new(),
        excluded_zero_eta: 0,
        excluded_nonsurviving: 0,
    };
    for rep in reps {
        if condition_on_survival && rep.survival != Survival::Surviving {
            out.excluded_nonsurviving += 1;
            continue;
        }
        let at = |n: u64| -> Result<&Checkpoint> {
            rep.checkpoints
                .iter()
                .find(|c| c.n == n)
                .ok_or_else(|| Error::MissingData(format!("no checkpoint at n={n}")))
        };
        let m_ref = at(n_ref)?.martingale;
        let s_eval = at(n_eval)?.s as f64;
        let eta2 = kernel::eta_squared(params, m_ref.max(0.0))?;
        if eta2 <= 0.0 {
            out.excluded_zero_eta += 1;
            continue;
        }
        let w = s_eval - big_c * m_ref * scale_n;
        let w_scaled = w / scale_n.sqrt();
        let z_raw = w_scaled / eta2.sqrt();
        out.w_scaled.push(w_scaled);
        out.z_raw.push(z_raw);
        out.z.push(z_raw / retention);
    }
    Ok(out)
}

/// Two-sided Kolmogorov-Smirnov distance between the empirical CDF of the
/// sample and a reference CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("KS distance of an empty sample".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN sample"));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f);
    }
    Ok(d)
}

/// Standard normal CDF via a rational erfc approximation (absolute error
/// below 1.2e-7, ample for KS distances at the 0.05 scale).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87
                                    + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let ans = t * poly.exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Summary statistics of one checkpoint across an ensemble.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub n: u64,
    pub mean_m: f64,
    pub mean_s: f64,
    pub s_q10: f64,
    pub s_median: f64,
    pub s_q90: f64,
}

/// Survival counts with a Wilson 95% CI over decided replicas.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SurvivalSummary {
    pub surviving: u64,
    pub extinct: u64,
    pub undecided: u64,
    pub fraction: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// KS summary of the standardized CLT sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CltSummary {
    pub n_eval: u64,
    pub n_ref: u64,
    pub ks: f64,
    pub sample_size: usize,
    pub excluded_zero_eta: usize,
    pub excluded_nonsurviving: usize,
}

/// Aggregated result of an ensemble run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub p: f64,
    pub beta: f64,
    pub theta: f64,
    pub regime: String,
    pub n_max: u64,
    pub replicas: u64,
    pub master_seed: u64,
    pub delta: f64,
    pub grid: Vec<u64>,
    pub checkpoints: Vec<CheckpointStats>,
    pub survival: SurvivalSummary,
    pub exponent: Option<ExponentEstimate>,
    pub clt: Option<CltSummary>,
}

fn wilson_ci(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.96f64;
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}

/// Summarizes survival over a set of replicas.
pub fn survival_summary(reps: &[ReplicaSummary]) -> SurvivalSummary {
    let surviving = reps.iter().filter(|r| r.survival == Survival::Surviving).count() as u64;
    let extinct = reps.iter().filter(|r| r.survival == Survival::Extinct).count() as u64;
    let undecided = reps.len() as u64 - surviving - extinct;
    let decided = surviving + extinct;
    let fraction = if decided > 0 {
        surviving as f64 / decided as f64
    } else {
        f64::NAN
    };
    let (ci_lower, ci_upper) = wilson_ci(surviving, decided);
    SurvivalSummary { surviving, extinct, undecided, fraction, ci_lower, ci_upper }
}

/// Runs R replicas and aggregates. Identical inputs give identical reports
/// regardless of thread budget.
pub fn run_ensemble(
    params: ModelParams,
    n_max: u64,
    replicas: u64,
    master_seed: u64,
    opts: &EnsembleOptions,
) -> Result<EnsembleReport> {
    let reps = run_replicas(params, n_max, replicas, master_seed, opts)?;
    let grid: Vec<u64> = reps[0].checkpoints.iter().map(|c| c.n).collect();
    let mut checkpoints = Vec::with_capacity(grid.len());
    for (i, &n) in grid.iter().enumerate() {
        let mut m_sum = KahanSum::new();
        let mut s_sum = KahanSum::new();
        let mut s_vals = Vec::with_capacity(reps.len());
        for rep in &reps {
            let c = &rep.checkpoints[i];
            debug_assert_eq!(c.n, n);
            m_sum.add(c.martingale);
            s_sum.add(c.s as f64);
            s_vals.push(c.s as f64);
        }
        s_vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let r = reps.len() as f64;
        checkpoints.push(CheckpointStats {
            n,
            mean_m: m_sum.value() / r,
            mean_s: s_sum.value() / r,
            s_q10: quantile(&s_vals, 0.1),
            s_median: quantile(&s_vals, 0.5),
            s_q90: quantile(&s_vals, 0.9),
        });
    }
    let survival = survival_summary(&reps);
    let exponent = estimate_exponent_from_replicas(&reps, opts.fit_n_min).ok();
    let clt = match opts.clt {
        None => None,
        Some((n_eval, n_ref)) => {
            let s = clt_sample(&params, &reps, n_eval, n_ref)?;
            let ks = if s.z.is_empty() {
                f64::NAN
            } else {
                ks_distance(&s.z, normal_cdf)?
            };
            Some(CltSummary {
                n_eval,
                n_ref,
                ks,
                sample_size: s.z.len(),
                excluded_zero_eta: s.excluded_zero_eta,
                excluded_nonsurviving: s.excluded_nonsurviving,
            })
        }
    };
    Ok(EnsembleReport {
        p: params.p(),
        beta: params.beta(),
        theta: params.theta(),
        regime: params.regime().name().to_string(),
        n_max,
        replicas,
        master_seed,
        delta: opts.delta,
        grid,
        checkpoints,
        survival,
        exponent,
        clt,
    })
}

/// Head/tail conditional-variance sums of the martingale-difference
/// decomposition, evaluated at n along a single realized path.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CondVarProfile {
    pub n: u64,
    pub horizon: u64,
    pub head_sum: f64,
    pub tail_sum: f64,
    pub eta2_hat: f64,
    pub m_hat: f64,
    /// head_sum / (beta^2/theta^2 * C * m_hat); None if beta = 0 or m_hat = 0.
    pub head_ratio: Option<f64>,
    /// tail_sum / (gamma^2/theta^2 * C * m_hat); None if m_hat = 0.
    pub tail_ratio: Option<f64>,
}

/// Recomputes the per-step conditional variances cm_k (1 - cm_k) along the
/// realized bits and splits them at n:
///
///   head = beta^2/theta^2 * n^{-theta} * sum_{k<=n} cm_k(1-cm_k)
///   tail = C^2 * n^{-theta} * (G(n+gamma)/G(n+beta))^2
///          * sum_{k>n} (c_k(beta)/c_k(gamma))^2 cm_k(1-cm_k)
///
/// where cm_k = p(beta+1) Sigma_{k-1} / ((k-1) mu_k). Both sums converge to
/// the corresponding limit fractions of eta^2 on surviving paths; the tail
/// is truncated at the trajectory horizon, so the horizon should be well
/// beyond n (the missing mass is about (n/horizon)^theta of the limit).
pub fn conditional_variance_profile(traj: &Trajectory, n: u64) -> Result<CondVarProfile> {
    let params = *traj.params();
    let theta = params.theta();
    if theta <= kernel::THETA_TOL {
        return Err(Error::Domain("profile requires theta > 0".into()));
    }
    let horizon = traj.n();
    if n < 2 || n >= horizon {
        return Err(Error::Config(format!(
            "need 2 <= n < horizon, got n={n}, horizon={horizon}"
        )));
    }
    let p = params.p();
    let beta = params.beta();
    let gamma = params.gamma();
    let big_c = kernel::big_c(&params)?;

    let mut head = KahanSum::new();
    head.add(1.0); // d_1 = X_1 = 1
    let mut tail = KahanSum::new();
    let mut sigma_prev = KahanSum::new();
    sigma_prev.add(1.0); // Sigma_1 = mu_1
    let mut mu_k = 1.0f64; // mu_{k} for the running k (starts at k=1)
    let mut c_gamma = 1.0f64; // c_k(gamma)
    for k in 2..=horizon {
        let km1 = (k - 1) as f64;
        mu_k *= (km1 + beta) / km1;
        c_gamma *= (km1 + gamma) / km1;
        let cm = p * (beta + 1.0) * sigma_prev.value() / (km1 * mu_k);
        let v = cm * (1.0 - cm);
        if k <= n {
            head.add(v);
        } else {
            let ratio = mu_k / c_gamma; // c_k(beta) / c_k(gamma)
            tail.add(ratio * ratio * v);
        }
        if traj.bit(k) {
            sigma_prev.add(mu_k);
        }
    }
    let n_theta = (n as f64).powf(theta);
    let head_sum = beta * beta / (theta * theta) * head.value() / n_theta;
    let nf = n as f64;
    let g_ratio = (log_gamma(nf + gamma)? - log_gamma(nf + beta)?).exp();
    let tail_sum = big_c * big_c * g_ratio * g_ratio * tail.value() / n_theta;

    let m_hat = traj.martingale();
    let eta2_hat = kernel::eta_squared(&params, m_hat.max(0.0))?;
    let head_limit = beta * beta / (theta * theta) * big_c * m_hat;
    let tail_limit = gamma * gamma / (theta * theta) * big_c * m_hat;
    Ok(CondVarProfile {
        n,
        horizon,
        head_sum,
        tail_sum,
        eta2_hat,
        m_hat,
        head_ratio: if head_limit > 0.0 { Some(head_sum / head_limit) } else { None },
        tail_ratio: if tail_limit > 0.0 { Some(tail_sum / tail_limit) } else { None },
    })
}

/// Normalized Gamma-ratio remainder `|G(n+gamma)/G(n+beta) - n^theta| * n^{1-theta}`
/// on a grid. Boundedness of this series is the finite-n form of the
/// remainder decay used to dispose of R_n.
pub fn remainder_decay_check(params: &ModelParams, grid: &[u64]) -> Result<Vec<(u64, f64)>> {
    let theta = params.theta();
    if theta <= 0.0 || theta >= 1.0 {
        return Err(Error::Domain(format!(
            "remainder check requires theta in (0,1), got {theta}"
        )));
    }
    let mut out = Vec::with_capacity(grid.len());
    for &n in grid {
        let nf = n as f64;
        let ratio = (log_gamma(nf + params.gamma())? - log_gamma(nf + params.beta())?).exp();
        let dev = (ratio - nf.powf(theta)).abs() * nf.powf(1.0 - theta);
        out.push((n, dev));
    }
    Ok(out)
}
