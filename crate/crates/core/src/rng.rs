//! Counter-based deterministic random numbers.
//!
//! Every variate is a pure function of (master seed, replica index, step,
//! slot), so a trajectory prefix is identical no matter the horizon, the
//! thread schedule, or how many replicas run around it. Each walk step
//! consumes exactly two variates: slot 0 for the p-coin, slot 1 for the
//! memory-index draw.

/// Stafford mix13 finalizer, the splitmix64 output function.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the per-replica key from a master seed. Documented mixing:
/// `mix64(master ^ mix64(replica + GOLDEN))`.
pub fn replica_seed(master_seed: u64, replica: u64) -> u64 {
    mix64(master_seed ^ mix64(replica.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Keyed counter generator. Stateless apart from the key; `uniform` may be
/// called for any (step, slot) in any order.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key: mix64(key.wrapping_add(0x2545_f491_4f6c_dd1d)) }
    }

    /// Uniform variate in [0, 1) for the given counter coordinates.
    /// `slot` must be 0 or 1.
    #[inline]
    pub fn uniform(&self, step: u64, slot: u64) -> f64 {
        debug_assert!(slot < 2);
        let counter = (step << 1) | slot;
        let z = mix64(self.key ^ mix64(counter));
        // 53 high bits to a double in [0, 1)
        (z >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }
}
