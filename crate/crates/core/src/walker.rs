//! Simulation of the walk and its index-set-restricted variant.
//!
//! A trajectory stores the bit sequence packed (one bit per step), the
//! running count `S_n`, the compensated weighted sum `Sigma_n`, and the
//! martingale normalizer `c_n(p(beta+1))` maintained incrementally. Copy
//! links (coin outcome + drawn index) are recorded only when genealogy
//! tracking is enabled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, IndexSet, ModelParams, WeightTable};
use crate::rng::CounterRng;
use crate::util::{BitSeq, KahanSum};

/// Default geometric checkpoint ratio.
pub const DEFAULT_CHECKPOINT_RATIO: f64 = 1.2;

/// Default per-trajectory step budget.
pub const DEFAULT_STEP_BUDGET: u64 = 1 << 30;

/// Geometric grid `ceil(ratio^j)`, deduplicated, clipped to `n_max` and
/// always containing 1 and `n_max`.
pub fn checkpoint_grid(n_max: u64, ratio: f64) -> Vec<u64> {
    let mut grid = vec![1u64];
    let mut v = 1.0f64;
    loop {
        v *= ratio;
        let n = v.ceil() as u64;
        if n >= n_max {
            break;
        }
        if n > *grid.last().unwrap() {
            grid.push(n);
        }
    }
    if *grid.last().unwrap() != n_max {
        grid.push(n_max);
    }
    grid
}

/// One recorded copy link: did the p-coin succeed, and which index was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLink {
    pub success: bool,
    pub drawn: u64,
}

/// State snapshot at a checkpoint.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub s: u64,
    pub sigma: f64,
    pub martingale: f64,
}

/// Simulation options.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub checkpoint_ratio: f64,
    pub track_links: bool,
    pub step_budget: u64,
    /// Extra checkpoint positions (e.g. the n_eval/n_ref of a CLT run).
    pub extra_checkpoints: Vec<u64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            checkpoint_ratio: DEFAULT_CHECKPOINT_RATIO,
            track_links: false,
            step_budget: DEFAULT_STEP_BUDGET,
            extra_checkpoints: Vec::new(),
        }
    }
}

fn build_grid(n_max: u64, opts: &SimOptions) -> Vec<u64> {
    let mut grid = checkpoint_grid(n_max, opts.checkpoint_ratio);
    for &n in &opts.extra_checkpoints {
        if n >= 1 && n <= n_max {
            grid.push(n);
        }
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// One realization of the walk.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: ModelParams,
    n: u64,
    bits: BitSeq,
    s_count: u64,
    sigma: KahanSum,
    /// mu_{n+1}, maintained incrementally.
    mu_next: f64,
    /// c_n(p(beta+1)), maintained incrementally.
    c_gamma: f64,
    table: WeightTable,
    rng: CounterRng,
    links: Option<Vec<StepLink>>,
    /// Index of the last step with X = 1.
    last_one: u64,
    grid: Vec<u64>,
    grid_pos: usize,
    checkpoints: Vec<Checkpoint>,
}

impl Trajectory {
    /// Initial state: n = 1, X_1 = 1.
    pub fn new(params: ModelParams, seed: u64, opts: &SimOptions) -> Self {
        let mut bits = BitSeq::with_capacity(1024);
        bits.push(true);
        let mut sigma = KahanSum::new();
        sigma.add(1.0); // mu_1 = 1
        let grid = build_grid(u64::MAX, opts);
        let mut t = Self {
            params,
            n: 1,
            bits,
            s_count: 1,
            sigma,
            mu_next: 1.0 + params.beta(), // mu_2 = (1+beta)/1 * mu_1
            c_gamma: 1.0,                 // c_1 = 1
            table: WeightTable::new(params.beta()),
            rng: CounterRng::new(seed),
            links: if opts.track_links { Some(Vec::new()) } else { None },
            last_one: 1,
            grid,
            grid_pos: 0,
            checkpoints: Vec::new(),
        };
        t.record_if_checkpoint();
        t
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn s(&self) -> u64 {
        self.s_count
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.value()
    }

    /// mu_{n+1} for the current n.
    pub fn mu_next(&self) -> f64 {
        self.mu_next
    }

    /// c_n(p(beta+1)) for the current n.
    pub fn c_gamma(&self) -> f64 {
        self.c_gamma
    }

    /// X_k for 1 <= k <= n.
    pub fn bit(&self, k: u64) -> bool {
        self.bits.get((k - 1) as usize)
    }

    pub fn bits(&self) -> &BitSeq {
        &self.bits
    }

    pub fn links(&self) -> Option<&[StepLink]> {
        self.links.as_deref()
    }

    pub fn last_one(&self) -> u64 {
        self.last_one
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    /// M_n = Sigma_n / c_n(p(beta+1)) at the current horizon.
    pub fn martingale(&self) -> f64 {
        self.sigma.value() / self.c_gamma
    }

    /// M at a checkpointed time, or the current one.
    pub fn martingale_at(&self, n: u64) -> Result<f64> {
        if n == self.n {
            return Ok(self.martingale());
        }
        self.checkpoints
            .iter()
            .find(|c| c.n == n)
            .map(|c| c.martingale)
            .ok_or_else(|| Error::MissingData(format!("no checkpoint at n={n}")))
    }

    /// Conditional success probability of the next step:
    /// `p(beta+1) Sigma_n / (n mu_{n+1})`.
    pub fn conditional_mean_next(&self) -> f64 {
        self.params.p() * (self.params.beta() + 1.0) * self.sigma.value()
            / (self.n as f64 * self.mu_next)
    }

    fn record_if_checkpoint(&mut self) {
        while self.grid_pos < self.grid.len() && self.grid[self.grid_pos] == self.n {
            self.checkpoints.push(Checkpoint {
                n: self.n,
                s: self.s_count,
                sigma: self.sigma.value(),
                martingale: self.martingale(),
            });
            self.grid_pos += 1;
        }
    }

    /// Advances by one step with explicit uniform draws (coin, index).
    pub fn step_with(&mut self, coin: f64, index_u: f64) {
        let n = self.n;
        let drawn = kernel::sample_memory_index(&mut self.table, n, index_u);
        let success = coin < self.params.p();
        let bit = success && self.bit(drawn);
        self.apply_step(bit, success, drawn);
    }

    fn apply_step(&mut self, bit: bool, success: bool, drawn: u64) {
        let n = self.n;
        // advance normalizers before moving to n+1
        self.c_gamma *= (n as f64 + self.params.gamma()) / n as f64;
        let mu_step = self.mu_next;
        self.mu_next *= (n as f64 + 1.0 + self.params.beta()) / (n as f64 + 1.0);
        self.n = n + 1;
        self.bits.push(bit);
        if bit {
            self.s_count += 1;
            self.sigma.add(mu_step);
            self.last_one = self.n;
        }
        if let Some(links) = &mut self.links {
            links.push(StepLink { success, drawn });
        }
        self.record_if_checkpoint();
    }

    /// Advances by one step, drawing the two per-step variates from the
    /// counter generator at (step = n+1, slots 0 and 1).
    pub fn step(&mut self) {
        let step_index = self.n + 1;
        let coin = self.rng.uniform(step_index, 0);
        let index_u = self.rng.uniform(step_index, 1);
        self.step_with(coin, index_u);
    }

    /// Runs the walk to `n_max`.
    pub fn run_to(&mut self, n_max: u64, budget: u64) -> Result<()> {
        if n_max > budget {
            return Err(Error::Resource(format!(
                "n_max {n_max} exceeds step budget {budget}"
            )));
        }
        while self.n < n_max {
            self.step();
        }
        Ok(())
    }
}

/// Simulates one trajectory to the horizon. Deterministic in
/// (params, n_max, seed, options).
pub fn simulate(
    params: ModelParams,
    n_max: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if n_max < 1 {
        return Err(Error::Config("n_max must be >= 1".into()));
    }
    let mut bounded = opts.clone();
    bounded.extra_checkpoints.push(n_max);
    let mut traj = Trajectory::new(params, seed, &bounded);
    traj.grid.retain(|&n| n <= n_max);
    traj.run_to(n_max, opts.step_budget)?;
    Ok(traj)
}

/// Reconstructs the bit sequence from recorded links. Used to validate the
/// link record: replay must reproduce the stored bits exactly.
pub fn replay_bits(links: &[StepLink]) -> BitSeq {
    let mut bits = BitSeq::with_capacity(links.len() + 1);
    bits.push(true);
    for (i, link) in links.iter().enumerate() {
        let bit = link.success && bits.get((link.drawn - 1) as usize);
        let _ = i;
        bits.push(bit);
    }
    bits
}

/// One realization of the index-set-restricted process.
#[derive(Debug, Clone)]
pub struct ModifiedTrajectory {
    params: ModelParams,
    index_set: IndexSet,
    s1: u64,
    n: u64,
    y_bits: BitSeq,
    t_count: u64,
    xi: KahanSum,
    mu_next: f64,
    table: WeightTable,
    rng: CounterRng,
    grid: Vec<u64>,
    grid_pos: usize,
    checkpoints: Vec<ModifiedCheckpoint>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModifiedCheckpoint {
    pub n: u64,
    pub t: u64,
    pub xi: f64,
}

impl ModifiedTrajectory {
    pub fn new(
        params: ModelParams,
        index_set: IndexSet,
        seed: u64,
        opts: &SimOptions,
    ) -> Result<Self> {
        index_set.validate()?;
        let s1 = index_set.s1();
        let mut y_bits = BitSeq::with_capacity(1024);
        let mut xi = KahanSum::new();
        let mut t_count = 0u64;
        // Y_k = 0 for k < s1, Y_{s1} = 1.
        y_bits.push(s1 == 1);
        if s1 == 1 {
            t_count = 1;
            xi.add(1.0);
        }
        let mut traj = Self {
            params,
            index_set,
            s1,
            n: 1,
            y_bits,
            t_count,
            xi,
            mu_next: 1.0 + params.beta(),
            table: WeightTable::new(params.beta()),
            rng: CounterRng::new(seed),
            grid: build_grid(u64::MAX, opts),
            grid_pos: 0,
            checkpoints: Vec::new(),
        };
        traj.record_if_checkpoint();
        Ok(traj)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn t(&self) -> u64 {
        self.t_count
    }

    pub fn xi(&self) -> f64 {
        self.xi.value()
    }

    pub fn s1(&self) -> u64 {
        self.s1
    }

    pub fn y(&self, k: u64) -> bool {
        self.y_bits.get((k - 1) as usize)
    }

    pub fn checkpoints(&self) -> &[ModifiedCheckpoint] {
        &self.checkpoints
    }

    fn record_if_checkpoint(&mut self) {
        while self.grid_pos < self.grid.len() && self.grid[self.grid_pos] == self.n {
            self.checkpoints.push(ModifiedCheckpoint {
                n: self.n,
                t: self.t_count,
                xi: self.xi.value(),
            });
            self.grid_pos += 1;
        }
    }

    /// One step of the modified process with explicit draws.
    pub fn step_with(&mut self, coin: f64, index_u: f64) {
        let n = self.n;
        let next = n + 1;
        let mu_step = self.mu_next;
        self.mu_next *= (n as f64 + 1.0 + self.params.beta()) / (n as f64 + 1.0);

        let bit = if next == self.s1 {
            // deterministic start of the restricted walk; draws are still
            // consumed so matched-seed coupling with the base walk holds
            let _ = kernel::modified_memory_sample(&mut self.table, &self.index_set, n, index_u);
            true
        } else if next < self.s1 || !self.index_set.contains(next) {
            let _ = kernel::modified_memory_sample(&mut self.table, &self.index_set, n, index_u);
            false
        } else {
            let drawn =
                kernel::modified_memory_sample(&mut self.table, &self.index_set, n, index_u);
            coin < self.params.p() && drawn >= 1 && self.y(drawn)
        };

        self.n = next;
        self.y_bits.push(bit);
        if bit {
            self.t_count += 1;
            self.xi.add(mu_step);
        }
        self.record_if_checkpoint();
    }

    pub fn step(&mut self) {
        let step_index = self.n + 1;
        let coin = self.rng.uniform(step_index, 0);
        let index_u = self.rng.uniform(step_index, 1);
        self.step_with(coin, index_u);
    }

    pub fn run_to(&mut self, n_max: u64, budget: u64) -> Result<()> {
        if n_max > budget {
            return Err(Error::Resource(format!(
                "n_max {n_max} exceeds step budget {budget}"
            )));
        }
        while self.n < n_max {
            self.step();
        }
        Ok(())
    }
}

/// Simulates the restricted process to the horizon.
pub fn simulate_modified(
    params: ModelParams,
    index_set: IndexSet,
    n_max: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<ModifiedTrajectory> {
    if n_max < 1 {
        return Err(Error::Config("n_max must be >= 1".into()));
    }
    let mut bounded = opts.clone();
    bounded.extra_checkpoints.push(n_max);
    let mut traj = ModifiedTrajectory::new(params, index_set, seed, &bounded)?;
    traj.grid.retain(|&n| n <= n_max);
    traj.run_to(n_max, opts.step_budget)?;
    Ok(traj)
}
