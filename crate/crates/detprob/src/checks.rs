//! Experiment suites: negative association, conditional negative
//! association, disjoint-occurrence searches, tail-correlation bounds,
//! entropy concavity probes, and count concentration.
//!
//! Every pass criterion is an exact-enumeration inequality with an
//! explicit tolerance. Theorem suites (negative association, tail
//! correlation, concentration) must pass on every valid input and a
//! failure is a bug; the disjoint-occurrence and concavity suites probe
//! open questions, so a violated inequality there raises a research flag
//! in the report instead of failing.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::ground::{bits, compress, expand, Ground, Mask};
use crate::kernels::{condition, projection_kernel, zoo, ConditionSpec, Kernel, Subspace};
use crate::linalg::{c, hermitian_eigen, CMat, C64};
use crate::measure::{
    cylinder_prob, enumerate, entropy, marginal_count_stats, DistributionTable,
};
use crate::{Error, Result};

/// Full enumeration of monotone events stops at this support size.
pub const EVENT_SUPPORT_CAP: usize = 4;
/// Negative-association suites enumerate the whole law.
pub const NA_GROUND_CAP: usize = 8;
/// Disjoint-occurrence searches walk submask pairs.
pub const BK_GROUND_CAP: usize = 6;
/// Tail-correlation suites enumerate the joint atom table.
pub const TAIL_GROUND_CAP: usize = 10;
/// The correlation bound's `2^|K|` prefactor makes small `K` the
/// informative regime.
pub const TAIL_K_CAP: usize = 3;

const CHECK_TOL: f64 = 1e-9;
const FLAG_TOL: f64 = 1e-8;

/// An event determined by its trace on a support set and closed upward:
/// adding elements never removes a subset from the event.
#[derive(Clone, Debug)]
pub struct IncreasingEvent {
    ground: Ground,
    support: Mask,
    table: Vec<bool>,
}

impl IncreasingEvent {
    /// `table[i]` says whether the subset of `support` with compressed
    /// index `i` belongs to the event. Monotonicity is verified.
    pub fn new(ground: Ground, support: Mask, table: Vec<bool>) -> Result<Self> {
        if support & !ground.full_mask() != 0 {
            return Err(Error::UnknownLabel("event support outside ground".into()));
        }
        let k = support.count_ones() as usize;
        if table.len() != 1 << k {
            return Err(Error::Shape(format!(
                "event table has {} entries for a support of {k}",
                table.len()
            )));
        }
        for i in 0..table.len() {
            if table[i] {
                for b in 0..k {
                    if !table[i | (1 << b)] {
                        return Err(Error::Invalid(
                            "event table is not monotone".into(),
                        ));
                    }
                }
            }
        }
        Ok(IncreasingEvent { ground, support, table })
    }

    /// The up-closure of a list of generator subsets: a subset belongs to
    /// the event when it contains some generator.
    pub fn from_generators(ground: Ground, support: Mask, generators: &[Mask]) -> Result<Self> {
        let k = support.count_ones() as usize;
        let mut table = vec![false; 1 << k];
        for (i, slot) in table.iter_mut().enumerate() {
            let subset = expand(i, support);
            *slot = generators.iter().any(|&g| g & !subset == 0);
        }
        IncreasingEvent::new(ground, support, table)
    }

    pub fn ground(&self) -> &Ground {
        &self.ground
    }

    pub fn support(&self) -> Mask {
        self.support
    }

    pub fn contains(&self, subset: Mask) -> bool {
        self.table[compress(subset & self.support, self.support)]
    }

    pub fn prob(&self, law: &DistributionTable) -> f64 {
        law.event_prob(|m| self.contains(m))
    }

    fn atoms(&self) -> u32 {
        self.table
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u32, |acc, (i, _)| acc | (1 << i))
    }
}

/// Outcome of one experiment suite. `worst_margin` is the smallest slack
/// of the checked inequality across instances: nonnegative means every
/// instance satisfied it exactly, values above `-tolerance` still pass.
/// `research_flag` marks a violated open-question inequality, which is a
/// finding rather than a failure.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub suite: String,
    pub instances: usize,
    pub worst_margin: f64,
    pub pass: bool,
    pub research_flag: bool,
    pub counterexample: Option<serde_json::Value>,
}

impl CheckReport {
    fn clean(suite: &str, instances: usize, worst_margin: f64, tol: f64) -> Self {
        CheckReport {
            suite: suite.into(),
            instances,
            worst_margin,
            pass: worst_margin >= -tol,
            research_flag: false,
            counterexample: None,
        }
    }
}

/// Builds the failing report only after the counterexample reproduces:
/// the margin is recomputed by the supplied independent evaluation and
/// must land within 10% of the reported one.
fn failing_report(
    suite: &str,
    instances: usize,
    margin: f64,
    payload: serde_json::Value,
    recheck: impl Fn() -> f64,
) -> Result<CheckReport> {
    let again = recheck();
    if (again - margin).abs() > 0.1 * margin.abs() + 1e-12 {
        return Err(Error::Invalid(format!(
            "counterexample does not reproduce: margin {margin:.6e} vs recheck {again:.6e}"
        )));
    }
    let mut payload = payload;
    payload["margin_recheck"] = serde_json::json!(again);
    Ok(CheckReport {
        suite: suite.into(),
        instances,
        worst_margin: margin,
        pass: false,
        research_flag: false,
        counterexample: Some(payload),
    })
}

/// All monotone Boolean tables on the subsets of `support`. The counts
/// follow the Dedekind numbers: 3, 6, 20, 168 for supports of 1 to 4.
pub fn enumerate_increasing_events(
    ground: &Ground,
    support: Mask,
) -> Result<Vec<IncreasingEvent>> {
    let k = support.count_ones() as usize;
    if k > EVENT_SUPPORT_CAP {
        return Err(Error::EnumerationCap { size: k, cap: EVENT_SUPPORT_CAP });
    }
    let atoms = 1usize << k;
    let mut out = Vec::new();
    'family: for family in 0u32..(1u32 << atoms) {
        for i in 0..atoms {
            if family >> i & 1 == 1 {
                for b in 0..k {
                    if family >> (i | (1 << b)) & 1 == 0 {
                        continue 'family;
                    }
                }
            }
        }
        let table = (0..atoms).map(|i| family >> i & 1 == 1).collect();
        out.push(IncreasingEvent::new(ground.clone(), support, table)?);
    }
    Ok(out)
}

fn check_support_pair(ground: &Ground, part1: Mask, part2: Mask) -> Result<()> {
    let full = ground.full_mask();
    if part1 & !full != 0 || part2 & !full != 0 {
        return Err(Error::UnknownLabel("split outside ground".into()));
    }
    if part1 == 0 || part2 == 0 {
        return Err(Error::InvalidArgument("split parts must be nonempty".into()));
    }
    if part1 & part2 != 0 {
        return Err(Error::InvalidArgument("split parts must be disjoint".into()));
    }
    Ok(())
}

/// Event probabilities through cylinder determinants instead of the
/// enumerated law; used to reproduce counterexamples independently.
fn slack_by_dets(kernel: &Kernel, ev1: &IncreasingEvent, ev2: &IncreasingEvent) -> f64 {
    let atom = |support: Mask, i: usize| -> f64 {
        let inc = expand(i, support);
        cylinder_prob(kernel, inc, support & !inc).unwrap_or(f64::NAN)
    };
    let mut p1 = 0.0;
    let mut p2 = 0.0;
    let mut p12 = 0.0;
    for (i, &a) in ev1.table.iter().enumerate() {
        if a {
            p1 += atom(ev1.support, i);
        }
    }
    for (j, &b) in ev2.table.iter().enumerate() {
        if b {
            p2 += atom(ev2.support, j);
        }
    }
    let joint_support = ev1.support | ev2.support;
    for (i, &a) in ev1.table.iter().enumerate() {
        for (j, &b) in ev2.table.iter().enumerate() {
            if a && b {
                let inc = expand(i, ev1.support) | expand(j, ev2.support);
                p12 += cylinder_prob(kernel, inc, joint_support & !inc).unwrap_or(f64::NAN);
            }
        }
    }
    p1 * p2 - p12
}

/// Negative association over a two-part split: every pair of increasing
/// events supported on the two parts must satisfy
/// `P(A1 and A2) <= P(A1) P(A2)`.
pub fn check_negative_association(
    kernel: &Kernel,
    part1: Mask,
    part2: Mask,
) -> Result<CheckReport> {
    let n = kernel.size();
    if n > NA_GROUND_CAP {
        return Err(Error::EnumerationCap { size: n, cap: NA_GROUND_CAP });
    }
    check_support_pair(kernel.ground(), part1, part2)?;
    let k1 = part1.count_ones() as usize;
    let k2 = part2.count_ones() as usize;
    if k1 > EVENT_SUPPORT_CAP || k2 > EVENT_SUPPORT_CAP {
        return Err(Error::EnumerationCap {
            size: k1.max(k2),
            cap: EVENT_SUPPORT_CAP,
        });
    }

    let law = enumerate(kernel)?;
    let mut joint = vec![vec![0.0f64; 1 << k2]; 1 << k1];
    for m in 0..(1u64 << n) {
        joint[compress(m & part1, part1)][compress(m & part2, part2)] += law.prob(m);
    }

    let events1 = enumerate_increasing_events(kernel.ground(), part1)?;
    let events2 = enumerate_increasing_events(kernel.ground(), part2)?;
    let marginals2: Vec<f64> = events2
        .iter()
        .map(|ev| {
            (0..(1usize << k2))
                .filter(|&j| ev.table[j])
                .map(|j| (0..(1usize << k1)).map(|i| joint[i][j]).sum::<f64>())
                .sum()
        })
        .collect();

    let per_event: Vec<(f64, usize, usize)> = events1
        .par_iter()
        .enumerate()
        .map(|(i1, ev1)| {
            let mut row = vec![0.0f64; 1 << k2];
            let mut p1 = 0.0;
            for (i, &a) in ev1.table.iter().enumerate() {
                if a {
                    for (j, slot) in row.iter_mut().enumerate() {
                        *slot += joint[i][j];
                    }
                    p1 += joint[i].iter().sum::<f64>();
                }
            }
            let mut worst = f64::INFINITY;
            let mut arg = 0usize;
            for (i2, ev2) in events2.iter().enumerate() {
                let p12: f64 = (0..row.len()).filter(|&j| ev2.table[j]).map(|j| row[j]).sum();
                let slack = p1 * marginals2[i2] - p12;
                if slack < worst {
                    worst = slack;
                    arg = i2;
                }
            }
            (worst, i1, arg)
        })
        .collect();

    let &(worst, i1, i2) = per_event
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("event lists are never empty");
    let instances = events1.len() * events2.len();
    if worst >= -CHECK_TOL {
        return Ok(CheckReport::clean("negative-association", instances, worst, CHECK_TOL));
    }
    let payload = serde_json::json!({
        "part1": part1,
        "part2": part2,
        "event1_atoms": events1[i1].atoms(),
        "event2_atoms": events2[i2].atoms(),
        "margin": worst,
    });
    failing_report("negative-association", instances, worst, payload, || {
        slack_by_dets(kernel, &events1[i1], &events2[i2])
    })
}

/// Negative association of the conditioned measure. The split refers to
/// the original ground set and must avoid the conditioned elements.
pub fn check_conditional_na(
    kernel: &Kernel,
    spec: &ConditionSpec,
    part1: Mask,
    part2: Mask,
) -> Result<CheckReport> {
    let union = spec.union();
    if (part1 | part2) & union != 0 {
        return Err(Error::InvalidArgument(
            "split overlaps the conditioned elements".into(),
        ));
    }
    let conditioned = condition(kernel, spec)?;
    let keep = kernel.ground().full_mask() & !union;
    let mut report = check_negative_association(
        &conditioned,
        compress(part1, keep) as Mask,
        compress(part2, keep) as Mask,
    )?;
    report.suite = "conditional-negative-association".into();
    Ok(report)
}

/// Probability that two increasing events occur disjointly: the sample
/// must split into two disjoint witnesses, one for each event.
pub fn disjoint_occurrence_prob(
    law: &DistributionTable,
    ev1: &IncreasingEvent,
    ev2: &IncreasingEvent,
) -> f64 {
    law.event_prob(|m| {
        let mut s = m;
        loop {
            if ev1.contains(s) && ev2.contains(m & !s) {
                return true;
            }
            if s == 0 {
                return false;
            }
            s = (s - 1) & m;
        }
    })
}

/// Samples pairs of random increasing events and compares the probability
/// of disjoint occurrence against the product of the probabilities.
/// Whether the product always dominates is open; a violation is reported
/// as a research flag, not a failure.
pub fn bk_search(kernel: &Kernel, trials: usize, seed: u64) -> Result<CheckReport> {
    let n = kernel.size();
    if n > BK_GROUND_CAP {
        return Err(Error::EnumerationCap { size: n, cap: BK_GROUND_CAP });
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let law = enumerate(kernel)?;
    let full = kernel.ground().full_mask();

    let random_event = |rng: &mut ChaCha8Rng| -> Result<IncreasingEvent> {
        let count = rng.random_range(1..=3);
        let generators: Vec<Mask> =
            (0..count).map(|_| rng.random::<u64>() & full).collect();
        IncreasingEvent::from_generators(kernel.ground().clone(), full, &generators)
    };

    let slacks: Vec<(f64, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let ev1 = random_event(&mut rng)?;
            let ev2 = random_event(&mut rng)?;
            let slack =
                ev1.prob(&law) * ev2.prob(&law) - disjoint_occurrence_prob(&law, &ev1, &ev2);
            Ok((slack, i))
        })
        .collect::<Result<_>>()?;
    let &(worst, stream) = slacks
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("trials is nonzero");

    let mut report = CheckReport::clean("disjoint-occurrence", trials, worst, FLAG_TOL);
    report.pass = true;
    if worst < -FLAG_TOL {
        report.research_flag = true;
        report.counterexample = Some(serde_json::json!({
            "seed": seed,
            "stream": stream,
            "margin": worst,
        }));
    }
    Ok(report)
}

/// Quantitative tail decoupling: for disjoint `K` and `F`, every event on
/// `K` is nearly independent of every event on `F`, with error controlled
/// by how much of `H`'s projection of `K`'s coordinates sits over `F`.
/// Also checks the variance bound on conditional atom probabilities.
pub fn check_tail_correlation(
    subspace: &Subspace,
    k_mask: Mask,
    f_mask: Mask,
) -> Result<CheckReport> {
    let n = subspace.ground().size();
    if n > TAIL_GROUND_CAP {
        return Err(Error::EnumerationCap { size: n, cap: TAIL_GROUND_CAP });
    }
    check_support_pair(subspace.ground(), k_mask, f_mask)?;
    let k = k_mask.count_ones() as usize;
    if k > TAIL_K_CAP {
        return Err(Error::EnumerationCap { size: k, cap: TAIL_K_CAP });
    }

    let proj = subspace.projection_matrix();
    let leak: f64 = bits(k_mask)
        .map(|e| bits(f_mask).map(|f| proj[(f, e)].norm_sqr()).sum::<f64>())
        .sum();
    let var_bound = k as f64 * leak;
    let cov_bound = ((1u64 << k) as f64 * var_bound).sqrt();

    let kernel = projection_kernel(subspace);
    let law = enumerate(&kernel)?;
    let fsize = f_mask.count_ones() as usize;
    let mut joint = vec![vec![0.0f64; 1 << fsize]; 1 << k];
    for m in 0..(1u64 << n) {
        joint[compress(m & k_mask, k_mask)][compress(m & f_mask, f_mask)] += law.prob(m);
    }
    let f_marginal: Vec<f64> = (0..(1usize << fsize))
        .map(|t| (0..(1usize << k)).map(|c| joint[c][t]).sum())
        .collect();

    let mut worst = f64::INFINITY;
    let mut instances = 0usize;
    let mut worst_case: Option<(u32, f64)> = None;

    // every event on K, against the adversarial event on F: the largest
    // deviation over events on F is the positive part of the signed
    // measure, summed over atoms
    for family in 0u32..(1u32 << (1 << k)) {
        let p1: f64 = (0..(1usize << k))
            .filter(|&cz| family >> cz & 1 == 1)
            .map(|cz| joint[cz].iter().sum::<f64>())
            .sum();
        let deviation: f64 = (0..(1usize << fsize))
            .map(|t| {
                let with: f64 = (0..(1usize << k))
                    .filter(|&cz| family >> cz & 1 == 1)
                    .map(|cz| joint[cz][t])
                    .sum();
                (with - p1 * f_marginal[t]).max(0.0)
            })
            .sum();
        let slack = cov_bound - deviation;
        instances += 1;
        if slack < worst {
            worst = slack;
            worst_case = Some((family, deviation));
        }
    }

    // variance of the conditional probability of each atom on K
    for cz in 0..(1usize << k) {
        let p_atom: f64 = joint[cz].iter().sum();
        let variance: f64 = (0..(1usize << fsize))
            .filter(|&t| f_marginal[t] > 1e-13)
            .map(|t| {
                let cond = joint[cz][t] / f_marginal[t];
                f_marginal[t] * (cond - p_atom) * (cond - p_atom)
            })
            .sum();
        let slack = var_bound - variance;
        instances += 1;
        if slack < worst {
            worst = slack;
            worst_case = None;
        }
    }

    if worst >= -CHECK_TOL {
        return Ok(CheckReport::clean("tail-correlation", instances, worst, CHECK_TOL));
    }
    let payload = serde_json::json!({
        "k_mask": k_mask,
        "f_mask": f_mask,
        "bound": cov_bound,
        "margin": worst,
    });
    failing_report("tail-correlation", instances, worst, payload, || {
        // reproduce through event closures over the law, with the
        // adversarial event on F built explicitly from the positive part
        // of the signed measure
        let Some((family, _)) = worst_case else {
            return worst; // variance case; same arithmetic path
        };
        let in_event = |m: Mask| family >> compress(m & k_mask, k_mask) & 1 == 1;
        let p1 = law.event_prob(in_event);
        let adversary: Vec<bool> = (0..(1usize << fsize))
            .map(|t| {
                let with: f64 = (0..(1usize << k))
                    .filter(|&cz| family >> cz & 1 == 1)
                    .map(|cz| joint[cz][t])
                    .sum();
                with - p1 * f_marginal[t] > 0.0
            })
            .collect();
        let in_f = |m: Mask| adversary[compress(m & f_mask, f_mask)];
        let p2 = law.event_prob(in_f);
        let p12 = law.event_prob(|m| in_event(m) && in_f(m));
        cov_bound - (p12 - p1 * p2).abs()
    })
}

/// How a random kernel ensemble is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ensemble {
    /// Projections onto the column span of a complex Gaussian matrix.
    Projections,
    /// Contractions with clipped Gaussian spectra in a random eigenbasis.
    ClippedGaussian,
    /// Toeplitz truncations of random trigonometric polynomial symbols.
    ToeplitzSymbols,
}

fn rand_c64(rng: &mut ChaCha8Rng) -> C64 {
    c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
}

/// Projection kernel onto the span of `dim` Gaussian columns, with the
/// dimension drawn uniformly when not forced by `n = 1`.
pub fn random_projection_kernel(rng: &mut ChaCha8Rng, n: usize) -> Result<Kernel> {
    let dim = if n == 1 { 1 } else { rng.random_range(1..n) };
    let span = CMat::from_fn(n, dim, |_, _| rand_c64(rng));
    Ok(projection_kernel(&Subspace::new(Ground::indexed(n)?, span)?))
}

/// Positive contraction built as `V diag(s) V*` where `V` is the
/// eigenbasis of a random Hermitian matrix and each `s` is a Gaussian
/// clipped into `[0, 1]`.
pub fn random_clipped_contraction(rng: &mut ChaCha8Rng, n: usize) -> Result<Kernel> {
    let raw = CMat::from_fn(n, n, |_, _| rand_c64(rng));
    let (_, basis) = hermitian_eigen(&(&raw + raw.adjoint()));
    let spectrum: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            (0.5 + 0.35 * g).clamp(0.0, 1.0)
        })
        .collect();
    let diag = CMat::from_fn(n, n, |r, col| {
        if r == col {
            c(spectrum[r], 0.0)
        } else {
            C64::ZERO
        }
    });
    let entries = &basis * diag * basis.adjoint();
    Kernel::new(Ground::indexed(n)?, entries, None)
}

/// Toeplitz kernel of a random trigonometric polynomial symbol
/// `1/2 + sum_m (a_m cos + b_m sin)(m theta) / (2 S)` with
/// `S = sum_m (|a_m| + |b_m|)`, which keeps the symbol inside `[0, 1]`.
pub fn random_toeplitz_kernel(rng: &mut ChaCha8Rng, n: usize) -> Result<Kernel> {
    let harmonics = rng.random_range(1..=3usize);
    let ab: Vec<(f64, f64)> = (0..harmonics)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0))
        .collect();
    let scale: f64 = ab.iter().map(|(a, b)| a.abs() + b.abs()).sum();
    let mut coeffs = vec![C64::ZERO; harmonics + 1];
    coeffs[0] = c(0.5, 0.0);
    if scale > 0.0 {
        for (m, &(a, b)) in ab.iter().enumerate() {
            coeffs[m + 1] = c(a / (4.0 * scale), -b / (4.0 * scale));
        }
    }
    zoo::toeplitz_from_symbol(n, &coeffs)
}

fn draw_kernel(rng: &mut ChaCha8Rng, n: usize, ensemble: Ensemble) -> Result<Kernel> {
    match ensemble {
        Ensemble::Projections => random_projection_kernel(rng, n),
        Ensemble::ClippedGaussian => random_clipped_contraction(rng, n),
        Ensemble::ToeplitzSymbols => random_toeplitz_kernel(rng, n),
    }
}

/// Samples kernel pairs from the ensemble and measures the concavity
/// defect `ent((Q1+Q2)/2) - (ent(Q1)+ent(Q2))/2`. Concavity of entropy is
/// conjectural, so a negative defect is flagged, never failed.
pub fn entropy_concavity_experiment(
    trials: usize,
    n: usize,
    ensemble: Ensemble,
    seed: u64,
) -> Result<CheckReport> {
    if n > 10 {
        return Err(Error::EnumerationCap { size: n, cap: 10 });
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let margins: Vec<(f64, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let q1 = draw_kernel(&mut rng, n, ensemble)?;
            let q2 = draw_kernel(&mut rng, n, ensemble)?;
            let mid = Kernel::new(
                q1.ground().clone(),
                (q1.entries() + q2.entries()).scale(0.5),
                None,
            )?;
            let margin =
                entropy(&mid)? - 0.5 * (entropy(&q1)? + entropy(&q2)?);
            Ok((margin, i))
        })
        .collect::<Result<_>>()?;
    let &(worst, stream) = margins
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("trials is nonzero");

    let mut report = CheckReport::clean("entropy-concavity", trials, worst, FLAG_TOL);
    report.pass = true;
    if worst < -FLAG_TOL {
        report.research_flag = true;
        report.counterexample = Some(serde_json::json!({
            "seed": seed,
            "stream": stream,
            "ensemble": format!("{ensemble:?}"),
            "margin": worst,
        }));
    }
    Ok(report)
}

/// Exact two-sided count tails against the sub-Gaussian bound
/// `2 exp(-2 a^2 / |A|)`, on the grid `a = 0.5, 1, ..., |A|`.
pub fn concentration_check(kernel: &Kernel, a_mask: Mask) -> Result<CheckReport> {
    if a_mask & !kernel.ground().full_mask() != 0 {
        return Err(Error::UnknownLabel("count set outside ground".into()));
    }
    if a_mask == 0 {
        return Err(Error::InvalidArgument("count set must be nonempty".into()));
    }
    let stats = marginal_count_stats(kernel, a_mask)?;
    let size = a_mask.count_ones() as f64;

    let mut worst = f64::INFINITY;
    let mut instances = 0usize;
    let mut steps = 1usize;
    while steps as f64 * 0.5 <= size {
        let a = steps as f64 * 0.5;
        let tail: f64 = stats
            .pmf
            .iter()
            .enumerate()
            .filter(|(j, _)| (*j as f64 - stats.mean).abs() >= a - 1e-12)
            .map(|(_, &p)| p)
            .sum();
        let bound = 2.0 * (-2.0 * a * a / size).exp();
        worst = worst.min(bound - tail);
        instances += 1;
        steps += 1;
    }
    Ok(CheckReport::clean("count-concentration", instances, worst, CHECK_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::zoo;
    use crate::measure::tv_distance;

    fn ground(n: usize) -> Ground {
        Ground::indexed(n).unwrap()
    }

    #[test]
    fn increasing_event_counts_follow_dedekind() {
        let g = ground(4);
        for (k, expected) in [(1usize, 3usize), (2, 6), (3, 20), (4, 168)] {
            let support = (1u64 << k) - 1;
            let events = enumerate_increasing_events(&g, support).unwrap();
            assert_eq!(events.len(), expected, "support size {k}");
        }
        assert!(enumerate_increasing_events(&ground(5), 0b11111).is_err());
    }

    #[test]
    fn constant_events_are_present() {
        let g = ground(2);
        let events = enumerate_increasing_events(&g, 0b11).unwrap();
        let all = |ev: &IncreasingEvent| (0..4u64).all(|m| ev.contains(m));
        let none = |ev: &IncreasingEvent| (0..4u64).all(|m| !ev.contains(m));
        assert_eq!(events.iter().filter(|e| all(e)).count(), 1);
        assert_eq!(events.iter().filter(|e| none(e)).count(), 1);
    }

    #[test]
    fn non_monotone_table_is_rejected() {
        let g = ground(2);
        // contains the empty set but not {e0}
        let table = vec![true, false, true, true];
        assert!(IncreasingEvent::new(g, 0b11, table).is_err());
    }

    #[test]
    fn product_kernel_has_zero_na_margins() {
        let k = zoo::bernoulli(4, 0.3).unwrap();
        let report = check_negative_association(&k, 0b0011, 0b1100).unwrap();
        assert!(report.pass);
        assert!(report.worst_margin.abs() <= 1e-12);
    }

    #[test]
    fn star_space_passes_na() {
        let graph = crate::graphs::Graph::complete(3).unwrap();
        let kernel = crate::graphs::transfer_current(&graph).unwrap();
        let report = check_negative_association(&kernel, 0b001, 0b110).unwrap();
        assert!(report.pass);
        // two distinct edges of a triangle are negatively correlated, so
        // some pair of events has strictly positive slack
        assert!(report.worst_margin >= -1e-9);
    }

    #[test]
    fn random_contraction_passes_na() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let k = random_clipped_contraction(&mut rng, 6).unwrap();
            let report = check_negative_association(&k, 0b000111, 0b111000).unwrap();
            assert!(report.pass, "margin {}", report.worst_margin);
        }
    }

    #[test]
    fn conditional_na_passes_and_respects_overlap() {
        let k = zoo::renewal_truncated(5, 0.4).unwrap();
        let spec = ConditionSpec::include_only(0b00001);
        let report = check_conditional_na(&k, &spec, 0b00110, 0b11000).unwrap();
        assert!(report.pass);
        assert!(check_conditional_na(&k, &spec, 0b00011, 0b11000).is_err());
    }

    #[test]
    fn impossible_condition_errors() {
        let g = ground(2);
        let zero = Kernel::new(g, CMat::zeros(2, 2), None).unwrap();
        let spec = ConditionSpec::include_only(0b01);
        assert!(check_conditional_na(&zero, &spec, 0b10, 0b10).is_err());
    }

    #[test]
    fn bk_product_kernel_has_nonnegative_slack() {
        let k = zoo::bernoulli(4, 0.4).unwrap();
        let report = bk_search(&k, 40, 5).unwrap();
        assert!(report.pass);
        assert!(!report.research_flag, "margin {}", report.worst_margin);
        assert!(report.worst_margin >= -1e-12);
    }

    #[test]
    fn bk_full_event_slack_is_zero() {
        let k = zoo::renewal_truncated(4, 0.4).unwrap();
        let law = enumerate(&k).unwrap();
        let g = k.ground().clone();
        let full_event =
            IncreasingEvent::from_generators(g.clone(), 0b1111, &[0]).unwrap();
        let other =
            IncreasingEvent::from_generators(g, 0b1111, &[0b0011, 0b0100]).unwrap();
        let disjoint = disjoint_occurrence_prob(&law, &other, &full_event);
        assert!((disjoint - other.prob(&law)).abs() <= 1e-12);
    }

    #[test]
    fn bk_singletons_reduce_to_pairwise_negative_correlation() {
        let k = zoo::renewal_truncated(4, 0.4).unwrap();
        let law = enumerate(&k).unwrap();
        let g = k.ground().clone();
        let ev1 = IncreasingEvent::from_generators(g.clone(), 0b1111, &[0b0001]).unwrap();
        let ev2 = IncreasingEvent::from_generators(g, 0b1111, &[0b0010]).unwrap();
        let disjoint = disjoint_occurrence_prob(&law, &ev1, &ev2);
        let joint = law.event_prob(|m| m & 0b0011 == 0b0011);
        assert!((disjoint - joint).abs() <= 1e-12);
        assert!(joint <= ev1.prob(&law) * ev2.prob(&law) + 1e-12);
    }

    #[test]
    fn bk_search_runs_on_determinantal_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = random_projection_kernel(&mut rng, 5).unwrap();
        let report = bk_search(&k, 60, 9).unwrap();
        assert!(report.pass);
        assert!(!report.research_flag, "margin {}", report.worst_margin);
    }

    #[test]
    fn tail_correlation_bound_holds_on_star_space() {
        let graph = crate::graphs::Graph::complete(3).unwrap();
        let sub = crate::graphs::star_space(&graph).unwrap();
        let report = check_tail_correlation(&sub, 0b001, 0b010).unwrap();
        assert!(report.pass, "margin {}", report.worst_margin);
    }

    #[test]
    fn orthogonal_leak_forces_independence() {
        // H spanned by coordinates e0, e1: columns of the projection over
        // F = {e2} vanish, so the bound is zero and exact independence is
        // required
        let g = ground(3);
        let sub = Subspace::coordinate(g, 0b011);
        let report = check_tail_correlation(&sub, 0b001, 0b100).unwrap();
        assert!(report.pass);
        assert!(report.worst_margin >= -1e-12);
    }

    #[test]
    fn tail_correlation_rejects_overlap_and_large_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let raw = CMat::from_fn(5, 2, |_, _| rand_c64(&mut rng));
        let sub = Subspace::new(ground(5), raw).unwrap();
        assert!(check_tail_correlation(&sub, 0b00011, 0b00010).is_err());
        assert!(check_tail_correlation(&sub, 0b01111, 0b10000).is_err());
    }

    #[test]
    fn tail_correlation_random_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..3 {
            let raw = CMat::from_fn(6, 3, |_, _| rand_c64(&mut rng));
            let sub = Subspace::new(ground(6), raw).unwrap();
            let report = check_tail_correlation(&sub, 0b000011, 0b111100).unwrap();
            assert!(report.pass, "margin {}", report.worst_margin);
        }
    }

    #[test]
    fn identical_kernels_have_zero_concavity_defect() {
        let q = zoo::renewal_truncated(4, 0.4).unwrap();
        let margin = entropy(&q).unwrap() - entropy(&q).unwrap();
        assert_eq!(margin, 0.0);
        // through the experiment plumbing: a single-kernel ensemble is not
        // expressible, so check the defect arithmetic directly
        let mid = Kernel::new(
            q.ground().clone(),
            (q.entries() + q.entries()).scale(0.5),
            None,
        )
        .unwrap();
        assert!((entropy(&mid).unwrap() - entropy(&q).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn extreme_pair_concavity_defect_is_ln_two() {
        let g = ground(1);
        let zero = Kernel::new(g.clone(), CMat::zeros(1, 1), None).unwrap();
        let id = Kernel::new(g.clone(), CMat::identity(1, 1), None).unwrap();
        let mid = Kernel::new(
            g,
            (zero.entries() + id.entries()).scale(0.5),
            None,
        )
        .unwrap();
        let defect = entropy(&mid).unwrap()
            - 0.5 * (entropy(&zero).unwrap() + entropy(&id).unwrap());
        assert!((defect - std::f64::consts::LN_2).abs() <= 1e-12);
    }

    #[test]
    fn concavity_experiment_all_ensembles() {
        for ensemble in [
            Ensemble::Projections,
            Ensemble::ClippedGaussian,
            Ensemble::ToeplitzSymbols,
        ] {
            let report = entropy_concavity_experiment(25, 5, ensemble, 3).unwrap();
            assert!(report.pass);
            assert!(
                !report.research_flag,
                "{ensemble:?} margin {}",
                report.worst_margin
            );
        }
    }

    #[test]
    fn ensembles_produce_valid_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for n in [1usize, 3, 6] {
            assert_eq!(random_projection_kernel(&mut rng, n).unwrap().size(), n);
            assert_eq!(random_clipped_contraction(&mut rng, n).unwrap().size(), n);
            assert_eq!(random_toeplitz_kernel(&mut rng, n).unwrap().size(), n);
        }
    }

    #[test]
    fn toeplitz_ensemble_matches_symbol_law_structure() {
        // translation invariance of the symbol shows up as equal diagonal
        // entries, hence equal singleton marginals
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let k = random_toeplitz_kernel(&mut rng, 5).unwrap();
        let first = k.entries()[(0, 0)].re;
        for i in 1..5 {
            assert!((k.entries()[(i, i)].re - first).abs() <= 1e-12);
        }
    }

    #[test]
    fn concentration_product_kernel() {
        let k = zoo::bernoulli(6, 0.5).unwrap();
        let report = concentration_check(&k, 0b111111).unwrap();
        assert!(report.pass, "margin {}", report.worst_margin);
        assert_eq!(report.instances, 12);
    }

    #[test]
    fn concentration_projection_full_ground() {
        // a projection law fixes the count at the rank, so tails beyond
        // any positive a vanish and every margin is the bound itself
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let k = random_projection_kernel(&mut rng, 5).unwrap();
        let report = concentration_check(&k, 0b11111).unwrap();
        assert!(report.pass);
        assert!(report.worst_margin > 0.0);
    }

    #[test]
    fn concentration_transfer_current() {
        let graph = crate::graphs::Graph::complete(4).unwrap();
        let kernel = crate::graphs::transfer_current(&graph).unwrap();
        let report = concentration_check(&kernel, 0b111).unwrap();
        assert!(report.pass, "margin {}", report.worst_margin);
    }

    #[test]
    fn concentration_rejects_empty_set() {
        let k = zoo::bernoulli(3, 0.5).unwrap();
        assert!(concentration_check(&k, 0).is_err());
    }

    #[test]
    fn na_report_counts_event_pairs() {
        let k = zoo::bernoulli(3, 0.5).unwrap();
        let report = check_negative_association(&k, 0b001, 0b110).unwrap();
        // 3 monotone events on one element, 6 on two
        assert_eq!(report.instances, 18);
    }

    #[test]
    fn conditioned_law_matches_table_condition() {
        // cross-check that kernel conditioning and table conditioning
        // agree, which the conditional NA suite relies on
        let k = zoo::renewal_truncated(5, 0.4).unwrap();
        let spec = ConditionSpec::include_only(0b00001);
        let via_kernel = enumerate(&condition(&k, &spec).unwrap()).unwrap();
        let via_table = enumerate(&k).unwrap().condition(&spec).unwrap();
        assert!(tv_distance(&via_kernel, &via_table).unwrap() <= 1e-9);
    }
}
