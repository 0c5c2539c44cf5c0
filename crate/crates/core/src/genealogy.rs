//! Ancestry forest over a link-tracked trajectory.
//!
//! An effective link connects step k to the index it successfully copied a
//! one from; chains of effective links partition the 1-sites into
//! generations (distance from site 1) and, at each generation cut, into
//! descendant clusters. A raw mode that links every step to its drawn index
//! regardless of outcome is kept behind a flag for exploration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::walker::Trajectory;

/// Which draws count as ancestry edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkMode {
    /// Edge j -> k only when step k's coin succeeded and X_j = 1. This is
    /// the mode under which the 1-sites decompose exactly into clusters.
    Effective,
    /// Edge j -> k whenever the index drawn at step k was j.
    Raw,
}

const NO_PARENT: u64 = u64::MAX;
const NOT_A_SITE: u32 = u32::MAX;

/// The ancestry forest of a single trajectory.
#[derive(Debug, Clone)]
pub struct AncestryForest {
    mode: LinkMode,
    horizon: u64,
    /// parent[k-1]: parent index of site k, NO_PARENT for roots/non-sites.
    parent: Vec<u64>,
    /// level[k-1]: generation of site k, NOT_A_SITE for non-sites.
    level: Vec<u32>,
    /// level_sets[m]: sites at generation m, ascending.
    level_sets: Vec<Vec<u64>>,
}

/// Builds the forest from a link-tracked trajectory.
pub fn build_forest(traj: &Trajectory, mode: LinkMode) -> Result<AncestryForest> {
    let links = traj
        .links()
        .ok_or_else(|| Error::MissingData("trajectory was simulated without links".into()))?;
    let n = traj.n();
    let mut parent = vec![NO_PARENT; n as usize];
    let mut level = vec![NOT_A_SITE; n as usize];
    let mut level_sets: Vec<Vec<u64>> = vec![vec![1]];
    level[0] = 0;
    for (i, link) in links.iter().enumerate() {
        let k = i as u64 + 2; // links[i] created site i+2
        let is_site = match mode {
            LinkMode::Effective => traj.bit(k),
            LinkMode::Raw => true,
        };
        if !is_site {
            continue;
        }
        let j = link.drawn;
        let attach = match mode {
            LinkMode::Effective => {
                // X_k = 1 forces success and X_j = 1
                debug_assert!(link.success && traj.bit(j));
                true
            }
            LinkMode::Raw => true,
        };
        if attach {
            parent[(k - 1) as usize] = j;
            let m = level[(j - 1) as usize];
            debug_assert_ne!(m, NOT_A_SITE, "parent {j} of {k} is not a site");
            let m = m + 1;
            level[(k - 1) as usize] = m;
            if level_sets.len() as u32 == m {
                level_sets.push(Vec::new());
            }
            level_sets[m as usize].push(k);
        }
    }
    Ok(AncestryForest { mode, horizon: n, parent, level, level_sets })
}

impl AncestryForest {
    pub fn mode(&self) -> LinkMode {
        self.mode
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Number of nonempty generations (levels 0..depth-1).
    pub fn depth(&self) -> usize {
        self.level_sets.len()
    }

    pub fn parent(&self, k: u64) -> Option<u64> {
        let p = self.parent[(k - 1) as usize];
        if p == NO_PARENT {
            None
        } else {
            Some(p)
        }
    }

    /// Generation of site k, if k is a site.
    pub fn level(&self, k: u64) -> Option<u32> {
        let m = self.level[(k - 1) as usize];
        if m == NOT_A_SITE {
            None
        } else {
            Some(m)
        }
    }

    /// All sites in the forest, ascending.
    pub fn sites(&self) -> Vec<u64> {
        let mut out: Vec<u64> = (1..=self.horizon)
            .filter(|&k| self.level[(k - 1) as usize] != NOT_A_SITE)
            .collect();
        out.sort_unstable();
        out
    }

    /// Sites at generation m with index <= n, ascending.
    pub fn level_set(&self, m: u32, n: u64) -> Vec<u64> {
        match self.level_sets.get(m as usize) {
            None => Vec::new(),
            Some(v) => v.iter().copied().take_while(|&k| k <= n).collect(),
        }
    }

    /// Level-m ancestor of every site with generation >= m, as a vector
    /// indexed by site (0 for sites above/below the cut).
    fn ancestors_at_level(&self, m: u32) -> Vec<u64> {
        let mut anc = vec![0u64; self.horizon as usize];
        for k in 1..=self.horizon {
            let idx = (k - 1) as usize;
            let lvl = self.level[idx];
            if lvl == NOT_A_SITE {
                continue;
            }
            if lvl == m {
                anc[idx] = k;
            } else if lvl > m {
                let p = self.parent[idx];
                anc[idx] = anc[(p - 1) as usize];
            }
        }
        anc
    }

    /// The j-th (1-based) level-m site together with all its descendants up
    /// to n: the cluster of generation cut m.
    pub fn cluster(&self, m: u32, j: usize, n: u64) -> Result<Vec<u64>> {
        let roots = self.level_set(m, n);
        if j == 0 || j > roots.len() {
            return Err(Error::Domain(format!(
                "cluster index {j} out of range (level {m} has {} sites <= {n})",
                roots.len()
            )));
        }
        let root = roots[j - 1];
        let anc = self.ancestors_at_level(m);
        let mut out = Vec::new();
        for k in 1..=n {
            if anc[(k - 1) as usize] == root {
                out.push(k);
            }
        }
        Ok(out)
    }

    /// Verifies that the 1-sites up to n are exactly the root, the level-1
    /// sites, and the union of the level-1 clusters.
    pub fn decomposition_check(&self, n: u64) -> bool {
        let mut union: Vec<u64> = vec![1];
        union.extend(self.level_set(1, n));
        let roots = self.level_set(1, n).len();
        for j in 1..=roots {
            match self.cluster(1, j, n) {
                Ok(c) => union.extend(c),
                Err(_) => return false,
            }
        }
        union.sort_unstable();
        union.dedup();
        let mut sites: Vec<u64> = self
            .sites()
            .into_iter()
            .filter(|&k| k <= n)
            .collect();
        sites.sort_unstable();
        union == sites
    }

    /// Number of level-m clusters with at least one member in `(n - window, n]`.
    pub fn surviving_cluster_count(&self, m: u32, n: u64, window: u64) -> Result<usize> {
        if window >= n {
            return Err(Error::Config(format!("window {window} must be < n = {n}")));
        }
        let anc = self.ancestors_at_level(m);
        let mut active: Vec<u64> = (n - window + 1..=n)
            .filter_map(|k| {
                let a = anc[(k - 1) as usize];
                if a != 0 {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        active.sort_unstable();
        active.dedup();
        Ok(active.len())
    }

    /// `#cluster(m,j) up to n, divided by n^theta`, along a grid.
    pub fn cluster_growth_profile(
        &self,
        m: u32,
        j: usize,
        theta: f64,
        grid: &[u64],
    ) -> Result<Vec<(u64, f64)>> {
        let horizon = *grid.last().ok_or_else(|| Error::Config("empty grid".into()))?;
        let members = self.cluster(m, j, horizon.min(self.horizon))?;
        let mut out = Vec::with_capacity(grid.len());
        for &n in grid {
            let count = members.partition_point(|&k| k <= n);
            out.push((n, count as f64 / (n as f64).powf(theta)));
        }
        Ok(out)
    }
}
