//! Exact sampling by sequential conditioning.
//!
//! Elements are visited in ground order; each one is included with
//! probability equal to the current kernel's diagonal entry, and the
//! remaining block is updated by the rank-one Schur complement for the
//! decision taken. The run seed and the draw index determine a dedicated
//! ChaCha substream per draw, so runs replay bit-exactly regardless of the
//! parallel schedule.

use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::gamma_ur;

use crate::ground::{Ground, Mask};
use crate::kernels::Kernel;
use crate::linalg::CMat;
use crate::measure::DistributionTable;
use crate::{Error, Result, ENUMERATION_CAP};

/// Pivots this close to 0 or 1 force the decision without dividing.
const PIVOT_TOL: f64 = 1e-12;

/// The outcome of a batch of seeded draws.
#[derive(Clone, Debug)]
pub struct SampleRun {
    ground: Ground,
    pub seed: u64,
    pub outcomes: Vec<Mask>,
    pub elapsed: Duration,
}

impl SampleRun {
    pub fn ground(&self) -> &Ground {
        &self.ground
    }

    pub fn count(&self) -> usize {
        self.outcomes.len()
    }
}

/// Element visit order for the sequential sampler.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VisitOrder {
    /// Ground order; the default, and the replay-stable choice.
    #[default]
    Ground,
    /// A fixed permutation drawn from the run seed.
    SeededShuffle,
}

fn sample_with_order(entries: &CMat, order: &[usize], rng: &mut ChaCha8Rng) -> Mask {
    let n = order.len();
    let mut work = CMat::from_fn(n, n, |i, j| entries[(order[i], order[j])]);
    let mut out: Mask = 0;
    for &element in order {
        let m = work.nrows();
        let pivot = work[(0, 0)].re;
        debug_assert!(
            (-1e-8..=1.0 + 1e-8).contains(&pivot),
            "intermediate diagonal {pivot} left [0, 1]"
        );
        let (include, divide) = if pivot <= PIVOT_TOL {
            (false, false)
        } else if pivot >= 1.0 - PIVOT_TOL {
            (true, false)
        } else {
            (rng.random::<f64>() < pivot.clamp(0.0, 1.0), true)
        };
        if include {
            out |= 1 << element;
        }
        let mut next = work.view((1, 1), (m - 1, m - 1)).into_owned();
        if divide {
            let col = work.view((1, 0), (m - 1, 1)).into_owned();
            let row = work.view((0, 1), (1, m - 1)).into_owned();
            if include {
                next -= &col * &row / work[(0, 0)];
            } else {
                next += &col * &row / (1.0 - work[(0, 0)]);
            }
        }
        work = next;
    }
    out
}

/// Draw a single subset, consuming randomness from the caller's stream.
pub fn sample_one(kernel: &Kernel, rng: &mut ChaCha8Rng) -> Mask {
    let order: Vec<usize> = (0..kernel.size()).collect();
    sample_with_order(kernel.entries(), &order, rng)
}

/// Draw `n` subsets with per-draw substreams of the given seed.
pub fn sample_many(kernel: &Kernel, n: usize, seed: u64) -> Result<SampleRun> {
    sample_many_with_order(kernel, n, seed, VisitOrder::Ground)
}

/// As [`sample_many`], with an explicit visit order.
pub fn sample_many_with_order(
    kernel: &Kernel,
    n: usize,
    seed: u64,
    visit: VisitOrder,
) -> Result<SampleRun> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let start = Instant::now();
    let order: Vec<usize> = match visit {
        VisitOrder::Ground => (0..kernel.size()).collect(),
        VisitOrder::SeededShuffle => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::MAX);
            let mut order: Vec<usize> = (0..kernel.size()).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            order
        }
    };
    let outcomes: Vec<Mask> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            sample_with_order(kernel.entries(), &order, &mut rng)
        })
        .collect();
    Ok(SampleRun {
        ground: kernel.ground().clone(),
        seed,
        outcomes,
        elapsed: start.elapsed(),
    })
}

/// Normalized outcome counts as a distribution table.
pub fn empirical_table(run: &SampleRun) -> Result<DistributionTable> {
    let n = run.ground.size();
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { size: n, cap: ENUMERATION_CAP });
    }
    if run.outcomes.is_empty() {
        return Err(Error::InvalidArgument("empty sample run".into()));
    }
    let mut mass = vec![0.0; 1 << n];
    let weight = 1.0 / run.outcomes.len() as f64;
    for &m in &run.outcomes {
        mass[m as usize] += weight;
    }
    DistributionTable::from_masses(run.ground.clone(), mass)
}

/// Chi-square goodness of fit report.
#[derive(Clone, Debug)]
pub struct GofReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Number of cells after pooling, including the pooled remainder.
    pub cells: usize,
}

/// Pearson chi-square test of an empirical table against an exact one.
/// Outcomes whose expected count under `exact` falls below 5 are pooled
/// into a single remainder cell. `sample_count` is the number of draws
/// behind `empirical`.
pub fn chisquare_gof(
    empirical: &DistributionTable,
    exact: &DistributionTable,
    sample_count: usize,
) -> Result<GofReport> {
    empirical
        .ground()
        .same_as(exact.ground(), "chi-square ground sets")?;
    if sample_count == 0 {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let n = sample_count as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    let mut pooled_expected = 0.0;
    let mut pooled_observed = 0.0;
    for (mask, &p) in exact.masses().iter().enumerate() {
        let expected = p * n;
        let observed = (empirical.masses()[mask] * n).round();
        if expected >= 5.0 {
            statistic += (observed - expected).powi(2) / expected;
            cells += 1;
        } else {
            pooled_expected += expected;
            pooled_observed += observed;
        }
    }
    if pooled_expected > 0.0 || pooled_observed > 0.0 {
        if pooled_expected <= 0.0 {
            // Mass observed strictly outside the support of the exact law.
            return Ok(GofReport {
                statistic: f64::INFINITY,
                dof: cells.max(1) - 1,
                p_value: 0.0,
                cells,
            });
        }
        statistic += (pooled_observed - pooled_expected).powi(2) / pooled_expected;
        cells += 1;
    }
    let dof = cells.saturating_sub(1);
    let p_value = if dof == 0 || statistic <= 0.0 {
        1.0
    } else {
        gamma_ur(dof as f64 / 2.0, statistic / 2.0)
    };
    Ok(GofReport { statistic, dof, p_value, cells })
}
