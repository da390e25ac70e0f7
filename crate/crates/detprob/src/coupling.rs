//! Coupling existence and construction: monotone couplings by max-flow,
//! disjoint union couplings and complete couplings on cyclic groups by
//! linear-programming feasibility.
//!
//! The feasibility engine is a dense phase-1 simplex with Bland's rule;
//! the domination check runs an augmenting-path max-flow with capacity
//! scaling on the subset lattice instead, since only feasibility of a
//! transportation problem is at stake there. Every witness handed back is
//! re-verified against its defining constraints directly from the input
//! tables, never trusted from solver state.

use std::collections::{BTreeMap, HashMap};

use crate::ground::{bits, Ground, Mask};
use crate::kernels::{condition, projection_kernel, zoo, ConditionSpec, Kernel, Subspace};
use crate::linalg::CVec;
use crate::measure::{enumerate, DistributionTable};
use crate::{Error, Result};

/// Domination checks enumerate both supports and are capped here.
pub const DOMINATION_CAP: usize = 12;
/// Union-coupling LPs grow like 4^n and are capped lower.
pub const UNION_CAP: usize = 9;
/// Complete couplings on Z_n solve an n!-variable LP.
pub const ZN_CAP: usize = 6;

/// Mass below this is dropped when building LP variables.
const SUPPORT_EPS: f64 = 1e-12;
/// Constraint satisfaction threshold for feasibility and witnesses.
const FEAS_TOL: f64 = 1e-7;

/// A joint distribution on pairs of subsets, stored sparsely.
#[derive(Clone, Debug)]
pub struct CouplingTable {
    ground: Ground,
    mass: BTreeMap<(Mask, Mask), f64>,
}

impl CouplingTable {
    pub fn new(ground: Ground, mass: BTreeMap<(Mask, Mask), f64>) -> Result<Self> {
        let full = ground.full_mask();
        let mut total = 0.0;
        for (&(a, b), &m) in &mass {
            if a & !full != 0 || b & !full != 0 {
                return Err(Error::UnknownLabel("coupling subset outside ground".into()));
            }
            if !(m >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "negative coupling mass {m} at ({a:#b}, {b:#b})"
                )));
            }
            total += m;
        }
        if (total - 1.0).abs() > FEAS_TOL {
            return Err(Error::InvalidArgument(format!(
                "coupling mass totals {total}, expected 1"
            )));
        }
        Ok(CouplingTable { ground, mass })
    }

    pub fn ground(&self) -> &Ground {
        &self.ground
    }

    pub fn mass(&self) -> &BTreeMap<(Mask, Mask), f64> {
        &self.mass
    }

    /// Largest deviation of the two coordinate marginals from the given
    /// tables.
    pub fn marginal_violation(&self, p: &DistributionTable, q: &DistributionTable) -> f64 {
        let n = self.ground.size();
        let mut first = vec![0.0; 1 << n];
        let mut second = vec![0.0; 1 << n];
        for (&(a, b), &m) in &self.mass {
            first[a as usize] += m;
            second[b as usize] += m;
        }
        let mut worst = 0.0f64;
        for mask in 0..(1usize << n) {
            worst = worst.max((first[mask] - p.prob(mask as Mask)).abs());
            worst = worst.max((second[mask] - q.prob(mask as Mask)).abs());
        }
        worst
    }

    /// Largest deviation of the union pushforward from the given table.
    pub fn union_violation(&self, union: &DistributionTable) -> f64 {
        let n = self.ground.size();
        let mut push = vec![0.0; 1 << n];
        for (&(a, b), &m) in &self.mass {
            push[(a | b) as usize] += m;
        }
        (0..(1usize << n))
            .map(|mask| (push[mask] - union.prob(mask as Mask)).abs())
            .fold(0.0, f64::max)
    }

    /// Total mass on pairs that are not nested `A1 subset A2`.
    pub fn non_monotone_mass(&self) -> f64 {
        self.mass
            .iter()
            .filter(|(&(a, b), _)| a & !b != 0)
            .map(|(_, &m)| m)
            .sum()
    }

    /// Total mass on pairs that intersect.
    pub fn non_disjoint_mass(&self) -> f64 {
        self.mass
            .iter()
            .filter(|(&(a, b), _)| a & b != 0)
            .map(|(_, &m)| m)
            .sum()
    }

    /// Pushforward of the map `(B, B') -> B' minus B`.
    pub fn difference_law(&self) -> Result<DistributionTable> {
        let n = self.ground.size();
        let mut mass = vec![0.0; 1 << n];
        for (&(a, b), &m) in &self.mass {
            mass[(b & !a) as usize] += m;
        }
        DistributionTable::from_masses(self.ground.clone(), mass)
    }
}

/// A distribution over bijections `j -> sigma(j)` of `{0..n-1}`.
#[derive(Clone, Debug)]
pub struct PermutationDistribution {
    pub n: usize,
    /// Pairs of (permutation, probability); images listed in domain order.
    pub support: Vec<(Vec<usize>, f64)>,
}

/// Witness payload of a feasibility search.
#[derive(Clone, Debug)]
pub enum Witness {
    Table(CouplingTable),
    Permutations(PermutationDistribution),
}

/// Outcome of a coupling feasibility search. When `feasible`, the witness
/// satisfies all stated constraints within 1e-7; when not, `max_violation`
/// is the largest constraint residual at the phase-1 optimum.
#[derive(Clone, Debug)]
pub struct FeasibilityResult {
    pub feasible: bool,
    pub witness: Option<Witness>,
    pub max_violation: f64,
}

// ---------------------------------------------------------------------------
// Max-flow on the subset lattice

struct FlowNetwork {
    // arcs stored as (to, capacity); reverse arc is index ^ 1
    to: Vec<usize>,
    cap: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        FlowNetwork { to: Vec::new(), cap: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    fn add_arc(&mut self, from: usize, to: usize, cap: f64) -> usize {
        let id = self.to.len();
        self.to.push(to);
        self.cap.push(cap);
        self.adj[from].push(id);
        self.to.push(from);
        self.cap.push(0.0);
        self.adj[to].push(id + 1);
        id
    }

    /// Augmenting-path max-flow with capacity scaling.
    fn max_flow(&mut self, source: usize, sink: usize) -> f64 {
        let mut flow = 0.0;
        let mut threshold = 1.0;
        while threshold > 1e-13 {
            loop {
                // BFS for a path whose residual capacities all exceed the
                // current scaling threshold.
                let mut prev_arc = vec![usize::MAX; self.adj.len()];
                let mut queue = std::collections::VecDeque::new();
                queue.push_back(source);
                let mut reached = vec![false; self.adj.len()];
                reached[source] = true;
                while let Some(v) = queue.pop_front() {
                    if v == sink {
                        break;
                    }
                    for &arc in &self.adj[v] {
                        let w = self.to[arc];
                        if !reached[w] && self.cap[arc] > threshold {
                            reached[w] = true;
                            prev_arc[w] = arc;
                            queue.push_back(w);
                        }
                    }
                }
                if !reached[sink] {
                    break;
                }
                let mut bottleneck = f64::INFINITY;
                let mut v = sink;
                while v != source {
                    let arc = prev_arc[v];
                    bottleneck = bottleneck.min(self.cap[arc]);
                    v = self.to[arc ^ 1];
                }
                let mut v = sink;
                while v != source {
                    let arc = prev_arc[v];
                    self.cap[arc] -= bottleneck;
                    self.cap[arc ^ 1] += bottleneck;
                    v = self.to[arc ^ 1];
                }
                flow += bottleneck;
            }
            threshold /= 2.0;
        }
        flow
    }
}

/// Strassen's criterion by max-flow: `p` is dominated by `q` exactly when
/// the transportation problem on nested pairs routes all mass. The witness
/// coupling is supported on pairs `A1 subset A2` only.
pub fn check_domination(
    p: &DistributionTable,
    q: &DistributionTable,
) -> Result<FeasibilityResult> {
    p.ground().same_as(q.ground(), "domination marginals")?;
    let n = p.ground().size();
    if n > DOMINATION_CAP {
        return Err(Error::EnumerationCap { size: n, cap: DOMINATION_CAP });
    }

    let p_support: Vec<Mask> = (0..(1u64 << n)).filter(|&m| p.prob(m) > 0.0).collect();
    let q_support: Vec<Mask> = (0..(1u64 << n)).filter(|&m| q.prob(m) > 0.0).collect();
    let p_index: HashMap<Mask, usize> =
        p_support.iter().enumerate().map(|(i, &m)| (m, i)).collect();

    // nodes: 0 source, 1 sink, then p side, then q side
    let mut net = FlowNetwork::new(2 + p_support.len() + q_support.len());
    let p_node = |i: usize| 2 + i;
    let q_node = |j: usize| 2 + p_support.len() + j;
    for (i, &a) in p_support.iter().enumerate() {
        net.add_arc(0, p_node(i), p.prob(a));
    }
    let mut pair_arcs: Vec<(Mask, Mask, usize)> = Vec::new();
    for (j, &b) in q_support.iter().enumerate() {
        net.add_arc(q_node(j), 1, q.prob(b));
        // enumerate the submasks of b that carry p-mass
        let mut s = b;
        loop {
            if let Some(&i) = p_index.get(&s) {
                let arc = net.add_arc(p_node(i), q_node(j), 2.0);
                pair_arcs.push((s, b, arc));
            }
            if s == 0 {
                break;
            }
            s = (s - 1) & b;
        }
    }

    let flow = net.max_flow(0, 1);
    let shortfall = 1.0 - flow;
    if shortfall > 1e-9 {
        return Ok(FeasibilityResult {
            feasible: false,
            witness: None,
            max_violation: shortfall,
        });
    }

    let mut mass = BTreeMap::new();
    for &(a, b, arc) in &pair_arcs {
        let routed = net.cap[arc ^ 1]; // reverse capacity equals the flow
        if routed > SUPPORT_EPS {
            *mass.entry((a, b)).or_insert(0.0) += routed;
        }
    }
    let table = CouplingTable::new(p.ground().clone(), mass)?;
    let violation = table
        .marginal_violation(p, q)
        .max(table.non_monotone_mass());
    if violation > FEAS_TOL {
        return Err(Error::Invalid(format!(
            "max-flow witness violates its constraints by {violation:.3e}"
        )));
    }
    Ok(FeasibilityResult {
        feasible: true,
        witness: Some(Witness::Table(table)),
        max_violation: violation,
    })
}

// ---------------------------------------------------------------------------
// Phase-1 simplex

/// Minimizes the total artificial mass for `A x = b, x >= 0`. Returns the
/// attained infeasibility and the primal solution.
fn phase_one_simplex(a: &[Vec<f64>], b: &[f64]) -> (f64, Vec<f64>) {
    let m = a.len();
    let n = if m == 0 { 0 } else { a[0].len() };
    if m == 0 {
        return (0.0, vec![0.0; n]);
    }
    let width = n + m + 1;
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; width];
        for j in 0..n {
            row[j] = flip * a[i][j];
        }
        row[n + i] = 1.0;
        row[width - 1] = flip * b[i];
        tab.push(row);
    }
    // reduced cost row for minimizing the artificial sum
    let mut cost = vec![0.0; width];
    for row in &tab {
        for j in 0..width {
            cost[j] -= row[j];
        }
    }
    for j in n..n + m {
        cost[j] = 0.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Dantzig's rule drives the descent; after a stretch of degenerate
    // pivots with no objective progress the selection drops to Bland's
    // rule, whose least-index discipline rules out cycling.
    let mut stalled = 0usize;
    let mut last_objective = f64::INFINITY;
    loop {
        let bland = stalled >= 40;
        let enter = if bland {
            (0..n + m).find(|&j| cost[j] < -1e-9)
        } else {
            (0..n + m)
                .filter(|&j| cost[j] < -1e-9)
                .min_by(|&a, &b| cost[a].total_cmp(&cost[b]))
        };
        let Some(enter) = enter else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if tab[i][enter] > 1e-9 {
                let ratio = tab[i][width - 1] / tab[i][enter];
                if ratio < best - 1e-12
                    || (ratio < best + 1e-12
                        && leave.is_some_and(|l| basis[i] < basis[l]))
                {
                    best = best.min(ratio);
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            break; // unbounded cannot happen in phase 1; bail defensively
        };
        let pivot = tab[leave][enter];
        for j in 0..width {
            tab[leave][j] /= pivot;
        }
        for i in 0..m {
            if i != leave && tab[i][enter].abs() > 0.0 {
                let factor = tab[i][enter];
                for j in 0..width {
                    tab[i][j] -= factor * tab[leave][j];
                }
            }
        }
        let factor = cost[enter];
        if factor.abs() > 0.0 {
            for j in 0..width {
                cost[j] -= factor * tab[leave][j];
            }
        }
        basis[leave] = enter;

        let objective = -cost[width - 1];
        if objective < last_objective - 1e-12 {
            stalled = 0;
            last_objective = objective;
        } else {
            stalled += 1;
        }
    }

    let mut x = vec![0.0; n];
    let mut infeasibility = 0.0;
    for i in 0..m {
        let value = tab[i][width - 1];
        if basis[i] < n {
            x[basis[i]] = value;
        } else {
            infeasibility += value;
        }
    }
    (infeasibility, x)
}

/// Largest residual of `A x = b` at the returned point.
fn max_residual(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let lhs: f64 = row.iter().zip(x).map(|(c, v)| c * v).sum();
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Union couplings

fn union_coupling_lp(
    p1: &DistributionTable,
    p2: &DistributionTable,
    p_union: &DistributionTable,
    disjoint_only: bool,
) -> Result<FeasibilityResult> {
    p1.ground().same_as(p2.ground(), "union coupling marginals")?;
    p1.ground().same_as(p_union.ground(), "union coupling marginals")?;
    let n = p1.ground().size();
    if n > UNION_CAP {
        return Err(Error::EnumerationCap { size: n, cap: UNION_CAP });
    }
    let size = 1usize << n;

    let supp = |t: &DistributionTable| -> Vec<Mask> {
        (0..size as u64).filter(|&m| t.prob(m) > SUPPORT_EPS).collect()
    };
    let s1 = supp(p1);
    let s2 = supp(p2);

    let mut vars: Vec<(Mask, Mask)> = Vec::new();
    for &a in &s1 {
        for &b in &s2 {
            if disjoint_only && a & b != 0 {
                continue;
            }
            if p_union.prob(a | b) > SUPPORT_EPS {
                vars.push((a, b));
            }
        }
    }

    // constraint rows: first marginal, second marginal, union pushforward
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut row_for = |masses: &dyn Fn(Mask, Mask) -> Mask, table: &DistributionTable| {
        let mut grouped: BTreeMap<Mask, Vec<usize>> = BTreeMap::new();
        for (k, &(a, b)) in vars.iter().enumerate() {
            grouped.entry(masses(a, b)).or_default().push(k);
        }
        let mut covered: Vec<(Mask, Vec<usize>)> = grouped.into_iter().collect();
        // subsets with table mass but no variables make the LP infeasible
        // through an empty row only if we emit that row
        for m in 0..size as u64 {
            let mass = table.prob(m);
            if mass > SUPPORT_EPS && !covered.iter().any(|(cm, _)| *cm == m) {
                covered.push((m, Vec::new()));
            }
        }
        for (m, ks) in covered {
            let mut row = vec![0.0; vars.len()];
            for k in ks {
                row[k] = 1.0;
            }
            rows.push(row);
            rhs.push(table.prob(m));
        }
    };
    row_for(&|a, _| a, p1);
    row_for(&|_, b| b, p2);
    row_for(&|a, b| a | b, p_union);

    let (infeasibility, x) = phase_one_simplex(&rows, &rhs);
    if infeasibility > FEAS_TOL {
        return Ok(FeasibilityResult {
            feasible: false,
            witness: None,
            max_violation: max_residual(&rows, &rhs, &x),
        });
    }

    let mut mass = BTreeMap::new();
    for (k, &(a, b)) in vars.iter().enumerate() {
        if x[k] > SUPPORT_EPS {
            *mass.entry((a, b)).or_insert(0.0) += x[k];
        }
    }
    let table = CouplingTable::new(p1.ground().clone(), mass)?;
    let violation = table
        .marginal_violation(p1, p2)
        .max(table.union_violation(p_union));
    if violation > FEAS_TOL {
        return Err(Error::Invalid(format!(
            "union coupling witness violates its constraints by {violation:.3e}"
        )));
    }
    Ok(FeasibilityResult {
        feasible: true,
        witness: Some(Witness::Table(table)),
        max_violation: violation,
    })
}

/// Searches for a disjoint coupling of `p1` and `p2` whose union marginal
/// is `p_union`. Variables range over disjoint subset pairs only; for the
/// triples induced by summable contraction pairs this loses nothing, since
/// any such coupling is automatically disjoint.
pub fn find_disjoint_union_coupling(
    p1: &DistributionTable,
    p2: &DistributionTable,
    p_union: &DistributionTable,
) -> Result<FeasibilityResult> {
    union_coupling_lp(p1, p2, p_union, true)
}

/// The same LP without the disjointness filter, used to confirm on small
/// instances that unrestricted witnesses stay on disjoint pairs.
pub fn find_union_coupling_unrestricted(
    p1: &DistributionTable,
    p2: &DistributionTable,
    p_union: &DistributionTable,
) -> Result<FeasibilityResult> {
    union_coupling_lp(p1, p2, p_union, false)
}

// ---------------------------------------------------------------------------
// Complete couplings on cyclic groups

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut used = vec![false; n];
    fn rec(n: usize, current: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                current.push(v);
                rec(n, current, used, out);
                current.pop();
                used[v] = false;
            }
        }
    }
    rec(n, &mut current, &mut used, &mut out);
    out
}

fn rotate_mask(mask: Mask, r: usize, n: usize) -> Mask {
    let wrap = (1u64 << n) - 1;
    ((mask << r) | (mask >> (n - r))) & wrap
}

/// Searches for a complete coupling of the character measures on `Z_n`: a
/// random bijection from frequencies to group elements such that for every
/// frequency set `J`, the image law equals the measure of the character
/// kernel of `J`.
///
/// The constraint system is equivariant under rotating the group, because
/// the character kernels are circulant, so a witness exists exactly when a
/// rotation-invariant witness exists. The LP therefore runs over rotation
/// orbits of bijections, which shrinks it by a factor of about `n^2`; the
/// expanded witness is re-verified against the full constraint family.
pub fn complete_coupling_zn(n: usize) -> Result<FeasibilityResult> {
    if n == 0 || n > ZN_CAP {
        return Err(Error::InvalidArgument(format!(
            "complete couplings are searched for 1 <= n <= {ZN_CAP}, got {n}"
        )));
    }
    let perms = permutations(n);
    let mut image_mask = vec![vec![0u64; 1 << n]; perms.len()];
    for (k, perm) in perms.iter().enumerate() {
        for j_set in 0..(1u64 << n) {
            let mut img = 0u64;
            for j in bits(j_set) {
                img |= 1 << perm[j];
            }
            image_mask[k][j_set as usize] = img;
        }
    }

    // rotation orbits of bijections; each orbit has exactly n members
    let mut perm_index: HashMap<Vec<usize>, usize> = HashMap::new();
    for (k, perm) in perms.iter().enumerate() {
        perm_index.insert(perm.clone(), k);
    }
    let mut orbit_of = vec![usize::MAX; perms.len()];
    let mut orbits: Vec<Vec<usize>> = Vec::new();
    for (k, perm) in perms.iter().enumerate() {
        if orbit_of[k] != usize::MAX {
            continue;
        }
        let id = orbits.len();
        let mut members = Vec::with_capacity(n);
        for r in 0..n {
            let rotated: Vec<usize> = perm.iter().map(|&v| (v + r) % n).collect();
            let idx = perm_index[&rotated];
            orbit_of[idx] = id;
            members.push(idx);
        }
        orbits.push(members);
    }

    // one constraint family per frequency set J, skipping the two trivial
    // ones; target subsets collapse along rotation orbits as well
    let mut laws: Vec<Option<DistributionTable>> = vec![None; 1 << n];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for j_set in 1..(1u64 << n) - 1 {
        let freqs: Vec<usize> = bits(j_set).collect();
        let law = enumerate(&zoo::zn_character(n, &freqs)?)?;
        let cardinality = j_set.count_ones();
        for target in 0..(1u64 << n) {
            if target.count_ones() != cardinality
                || (1..n).any(|r| rotate_mask(target, r, n) < target)
            {
                continue;
            }
            let mut row = vec![0.0; orbits.len()];
            for (o, members) in orbits.iter().enumerate() {
                row[o] = members
                    .iter()
                    .filter(|&&k| image_mask[k][j_set as usize] == target)
                    .count() as f64;
            }
            rows.push(row);
            rhs.push(law.prob(target));
        }
        laws[j_set as usize] = Some(law);
    }
    rows.push(orbits.iter().map(|m| m.len() as f64).collect());
    rhs.push(1.0);

    let (infeasibility, orbit_mass) = phase_one_simplex(&rows, &rhs);

    // expand per-orbit mass to the full permutation distribution and check
    // every constraint, not just the rotation representatives
    let full_mass: Vec<f64> = (0..perms.len()).map(|k| orbit_mass[orbit_of[k]]).collect();
    let mut violation: f64 = (full_mass.iter().sum::<f64>() - 1.0).abs();
    for j_set in 1..(1u64 << n) - 1 {
        let law = laws[j_set as usize].as_ref().unwrap();
        let mut push = vec![0.0; 1 << n];
        for (k, &m) in full_mass.iter().enumerate() {
            push[image_mask[k][j_set as usize] as usize] += m;
        }
        for target in 0..(1u64 << n) {
            violation = violation.max((push[target as usize] - law.prob(target)).abs());
        }
    }

    if infeasibility > FEAS_TOL || violation > FEAS_TOL {
        return Ok(FeasibilityResult {
            feasible: false,
            witness: None,
            max_violation: violation,
        });
    }
    let support: Vec<(Vec<usize>, f64)> = perms
        .into_iter()
        .zip(&full_mass)
        .filter(|(_, &m)| m > SUPPORT_EPS)
        .map(|(perm, &m)| (perm, m))
        .collect();
    Ok(FeasibilityResult {
        feasible: true,
        witness: Some(Witness::Permutations(PermutationDistribution { n, support })),
        max_violation: violation,
    })
}

// ---------------------------------------------------------------------------
// Codimension-one law

/// Report of the codimension-one difference law check.
#[derive(Clone, Debug)]
pub struct Codim1Report {
    /// Largest deviation between the law of `B' minus B` and the rank-one
    /// measure of `u`.
    pub max_deviation: f64,
    pub pass: bool,
}

/// For a monotone coupling of the measures of `H` and `H + [u]`, the law
/// of `B' minus B` must be the rank-one projection measure of `u`: the
/// singleton `{e}` carries mass `|u_e|^2`.
pub fn codim1_coupling_check(
    h: &Subspace,
    u: &CVec,
    coupling: &CouplingTable,
) -> Result<Codim1Report> {
    let n = h.ground().size();
    if u.nrows() != n {
        return Err(Error::Shape(format!(
            "direction vector has {} entries on a ground set of {n}",
            u.nrows()
        )));
    }
    if (u.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument("direction vector must be unit".into()));
    }
    let inside = h.projection_matrix() * u;
    if inside.norm() > 1e-8 {
        return Err(Error::InvalidArgument(
            "direction vector must be orthogonal to the subspace".into(),
        ));
    }
    coupling
        .ground()
        .same_as(h.ground(), "codimension-one coupling")?;
    if coupling.non_monotone_mass() > 1e-9 {
        return Err(Error::InvalidArgument(
            "coupling is not monotone".into(),
        ));
    }

    let law = coupling.difference_law()?;
    let mut worst = 0.0f64;
    for mask in 0..(1u64 << n) {
        let expected = if mask.count_ones() == 1 {
            let e = mask.trailing_zeros() as usize;
            u[e].norm_sqr()
        } else {
            0.0
        };
        worst = worst.max((law.prob(mask) - expected).abs());
    }
    Ok(Codim1Report { max_deviation: worst, pass: worst <= FEAS_TOL })
}

/// Convenience: laws of nested projections, coupled by max-flow, then run
/// through the codimension-one check.
pub fn codim1_from_domination(h: &Subspace, u: &CVec) -> Result<Codim1Report> {
    let ground = h.ground().clone();
    let enlarged = {
        let mut span = h.basis().clone().insert_column(h.dim(), crate::linalg::C64::ZERO);
        for i in 0..ground.size() {
            span[(i, h.dim())] = u[i];
        }
        Subspace::new(ground, span)?
    };
    let p = enumerate(&projection_kernel(h))?;
    let q = enumerate(&projection_kernel(&enlarged))?;
    let result = check_domination(&p, &q)?;
    let Some(Witness::Table(table)) = result.witness else {
        return Err(Error::Invalid(
            "nested projection laws failed to couple monotonically".into(),
        ));
    };
    codim1_coupling_check(h, u, &table)
}

/// Conditioning on inclusion pulls the law of the rest down, conditioning
/// on exclusion pushes it up. Runs the matching domination check for a
/// pure include or pure exclude specification.
pub fn conditional_domination(
    kernel: &Kernel,
    spec: &ConditionSpec,
) -> Result<FeasibilityResult> {
    if spec.include != 0 && spec.exclude != 0 {
        return Err(Error::InvalidArgument(
            "conditional domination takes a pure include or pure exclude spec".into(),
        ));
    }
    let conditioned = condition(kernel, spec)?;
    let keep = kernel.ground().full_mask() & !spec.union();
    let marginal = enumerate(kernel)?.marginal_onto(keep);
    let law = enumerate(&conditioned)?;
    if spec.exclude == 0 {
        check_domination(&law, &marginal)
    } else {
        check_domination(&marginal, &law)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::linalg::{c, CMat, C64};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_c64(rng: &mut ChaCha8Rng) -> C64 {
        c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
    }

    fn random_subspace(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Subspace {
        let raw = CMat::from_fn(n, r, |_, _| rand_c64(rng));
        Subspace::new(Ground::indexed(n).unwrap(), raw).unwrap()
    }

    #[test]
    fn equal_tables_dominate_themselves() {
        let k = zoo::renewal_truncated(4, 0.4).unwrap();
        let law = enumerate(&k).unwrap();
        let result = check_domination(&law, &law).unwrap();
        assert!(result.feasible);
        assert!(result.max_violation <= 1e-9);
        let Some(Witness::Table(table)) = result.witness else {
            panic!("witness expected")
        };
        assert!(table.non_monotone_mass() <= 1e-12);
    }

    #[test]
    fn forced_two_element_coupling() {
        let g = Ground::indexed(2).unwrap();
        let line = Kernel::new(
            g.clone(),
            CMat::from_row_slice(2, 2, &[C64::ONE, C64::ZERO, C64::ZERO, C64::ZERO]),
            None,
        )
        .unwrap();
        let plane = Kernel::new(g, CMat::identity(2, 2), None).unwrap();
        let p = enumerate(&line).unwrap();
        let q = enumerate(&plane).unwrap();
        let result = check_domination(&p, &q).unwrap();
        assert!(result.feasible);
        let Some(Witness::Table(table)) = result.witness else {
            panic!("witness expected")
        };
        assert!((table.mass()[&(0b01, 0b11)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn strict_nesting_fails_in_reverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let big = random_subspace(&mut rng, 4, 3);
        let small = Subspace::new(
            big.ground().clone(),
            big.basis().columns(0, 2).into_owned(),
        )
        .unwrap();
        let p = enumerate(&projection_kernel(&small)).unwrap();
        let q = enumerate(&projection_kernel(&big)).unwrap();
        assert!(check_domination(&p, &q).unwrap().feasible);
        let reverse = check_domination(&q, &p).unwrap();
        assert!(!reverse.feasible);
        assert!(reverse.max_violation > 1e-3);
    }

    #[test]
    fn nested_projections_couple_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for _ in 0..5 {
            let big = random_subspace(&mut rng, 5, 3);
            let small = Subspace::new(
                big.ground().clone(),
                big.basis().columns(0, 2).into_owned(),
            )
            .unwrap();
            let p = enumerate(&projection_kernel(&small)).unwrap();
            let q = enumerate(&projection_kernel(&big)).unwrap();
            let result = check_domination(&p, &q).unwrap();
            assert!(result.feasible);
            assert!(result.max_violation <= 1e-7);
        }
    }

    #[test]
    fn domination_agrees_with_increasing_event_criterion() {
        // brute-force reference: a family of subsets of 2^[n], viewed as a
        // bitset over masks, is increasing when closed under supersets
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let n = 3usize;
        let size = 1usize << n;
        let full = (1usize << size) - 1;
        let mut increasing_events = Vec::new();
        for family in 0..=full {
            let mut ok = true;
            'outer: for m in 0..size {
                if family >> m & 1 == 1 {
                    for e in 0..n {
                        let up = m | (1 << e);
                        if family >> up & 1 == 0 {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
            }
            if ok {
                increasing_events.push(family);
            }
        }
        // Dedekind number for n = 3
        assert_eq!(increasing_events.len(), 20);

        for trial in 0..12 {
            let (p, q) = if trial % 3 == 0 {
                let big = random_subspace(&mut rng, n, 2);
                let small = Subspace::new(
                    big.ground().clone(),
                    big.basis().columns(0, 1).into_owned(),
                )
                .unwrap();
                (
                    enumerate(&projection_kernel(&small)).unwrap(),
                    enumerate(&projection_kernel(&big)).unwrap(),
                )
            } else {
                (
                    enumerate(&projection_kernel(&random_subspace(&mut rng, n, 2))).unwrap(),
                    enumerate(&projection_kernel(&random_subspace(&mut rng, n, 2))).unwrap(),
                )
            };
            let flow_feasible = check_domination(&p, &q).unwrap().feasible;
            let criterion = increasing_events.iter().all(|&family| {
                let pa: f64 = (0..size)
                    .filter(|&m| family >> m & 1 == 1)
                    .map(|m| p.prob(m as Mask))
                    .sum();
                let qa: f64 = (0..size)
                    .filter(|&m| family >> m & 1 == 1)
                    .map(|m| q.prob(m as Mask))
                    .sum();
                pa <= qa + 1e-9
            });
            assert_eq!(flow_feasible, criterion, "trial {trial}");
        }
    }

    #[test]
    fn full_space_split_couples_disjointly() {
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let whole = random_subspace(&mut rng, 4, 4);
        let h1 = Subspace::new(
            whole.ground().clone(),
            whole.basis().columns(0, 2).into_owned(),
        )
        .unwrap();
        let h2 = Subspace::new(
            whole.ground().clone(),
            whole.basis().columns(2, 2).into_owned(),
        )
        .unwrap();
        let p1 = enumerate(&projection_kernel(&h1)).unwrap();
        let p2 = enumerate(&projection_kernel(&h2)).unwrap();
        let pu = enumerate(&projection_kernel(&whole)).unwrap();
        let result = find_disjoint_union_coupling(&p1, &p2, &pu).unwrap();
        assert!(result.feasible);
        let Some(Witness::Table(table)) = &result.witness else {
            panic!("witness expected")
        };
        // complements pair up exactly when the union is everything
        for (&(a, b), &m) in table.mass() {
            if m > 1e-9 {
                assert_eq!(a | b, 0b1111);
                assert_eq!(a & b, 0);
            }
        }
    }

    #[test]
    fn random_orthogonal_decompositions_couple() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        for _ in 0..4 {
            let whole = random_subspace(&mut rng, 5, 3);
            let h1 = Subspace::new(
                whole.ground().clone(),
                whole.basis().columns(0, 1).into_owned(),
            )
            .unwrap();
            let h2 = Subspace::new(
                whole.ground().clone(),
                whole.basis().columns(1, 2).into_owned(),
            )
            .unwrap();
            let p1 = enumerate(&projection_kernel(&h1)).unwrap();
            let p2 = enumerate(&projection_kernel(&h2)).unwrap();
            let pu = enumerate(&projection_kernel(&whole)).unwrap();
            let restricted = find_disjoint_union_coupling(&p1, &p2, &pu).unwrap();
            assert!(restricted.feasible);
            assert!(restricted.max_violation <= 1e-7);

            // unrestricted witnesses stay disjoint on genuine instances
            let unrestricted = find_union_coupling_unrestricted(&p1, &p2, &pu).unwrap();
            assert!(unrestricted.feasible);
            let Some(Witness::Table(table)) = &unrestricted.witness else {
                panic!("witness expected")
            };
            assert!(table.non_disjoint_mass() <= 1e-7);
        }
    }

    #[test]
    fn corrupted_union_marginal_is_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        let whole = random_subspace(&mut rng, 4, 2);
        let h1 = Subspace::new(
            whole.ground().clone(),
            whole.basis().columns(0, 1).into_owned(),
        )
        .unwrap();
        let h2 = Subspace::new(
            whole.ground().clone(),
            whole.basis().columns(1, 1).into_owned(),
        )
        .unwrap();
        let p1 = enumerate(&projection_kernel(&h1)).unwrap();
        let p2 = enumerate(&projection_kernel(&h2)).unwrap();
        let pu = enumerate(&projection_kernel(&whole)).unwrap();
        // swap two union masses to break the constraint set
        let mut masses = pu.masses().to_vec();
        masses.swap(0b0011, 0b0101);
        let corrupted =
            DistributionTable::from_masses(pu.ground().clone(), masses).unwrap();
        let result = find_disjoint_union_coupling(&p1, &p2, &corrupted).unwrap();
        if result.feasible {
            // the swap could accidentally preserve feasibility only if the
            // masses were equal; rule that out
            assert!((pu.prob(0b0011) - pu.prob(0b0101)).abs() < 1e-12);
        } else {
            assert!(result.max_violation > 1e-7);
        }
    }

    #[test]
    fn zn_small_cases_are_feasible() {
        for n in 1..=4 {
            let result = complete_coupling_zn(n).unwrap();
            assert!(result.feasible, "n = {n}");
            assert!(result.max_violation <= 1e-7);
            let Some(Witness::Permutations(dist)) = result.witness else {
                panic!("permutation witness expected")
            };
            let total: f64 = dist.support.iter().map(|(_, m)| m).sum();
            assert!((total - 1.0).abs() <= 1e-7);
        }
        assert!(complete_coupling_zn(7).is_err());
        assert!(complete_coupling_zn(0).is_err());
    }

    #[test]
    fn zn_large_cases_are_feasible() {
        for n in 5..=6 {
            let result = complete_coupling_zn(n).unwrap();
            assert!(result.feasible, "n = {n}");
            assert!(result.max_violation <= 1e-7);
        }
    }

    #[test]
    fn zn_two_admits_the_uniform_witness() {
        let result = complete_coupling_zn(2).unwrap();
        assert!(result.feasible);
        // the J = {0} law is fixed by hand: the constant character gives
        // diagonal entries 1/2, so both images are equally likely; the
        // uniform distribution over both bijections satisfies everything
        let law = enumerate(&zoo::zn_character(2, &[0]).unwrap()).unwrap();
        assert!((law.prob(0b01) - 0.5).abs() < 1e-12);
        assert!((law.prob(0b10) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn codim1_two_element_case_is_deterministic() {
        let g = Ground::indexed(2).unwrap();
        let h = Subspace::coordinate(g.clone(), 0b01);
        let mut u = CVec::zeros(2);
        u[1] = C64::ONE;
        let report = codim1_from_domination(&h, &u).unwrap();
        assert!(report.pass);
        assert!(report.max_deviation <= 1e-9);
    }

    #[test]
    fn codim1_split_direction_splits_the_law() {
        let g = Ground::indexed(3).unwrap();
        let h = Subspace::coordinate(g.clone(), 0b001);
        let mut u = CVec::zeros(3);
        u[1] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        u[2] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let report = codim1_from_domination(&h, &u).unwrap();
        assert!(report.pass, "deviation {}", report.max_deviation);

        // the law itself: difference is {e1} or {e2} with probability 1/2
        let p = enumerate(&projection_kernel(&h)).unwrap();
        let enlarged = Subspace::new(g, {
            let mut m = CMat::zeros(3, 2);
            m[(0, 0)] = C64::ONE;
            m[(1, 1)] = u[1];
            m[(2, 1)] = u[2];
            m
        })
        .unwrap();
        let q = enumerate(&projection_kernel(&enlarged)).unwrap();
        let result = check_domination(&p, &q).unwrap();
        let Some(Witness::Table(table)) = result.witness else {
            panic!("witness expected")
        };
        let diff = table.difference_law().unwrap();
        assert!((diff.prob(0b010) - 0.5).abs() <= 1e-7);
        assert!((diff.prob(0b100) - 0.5).abs() <= 1e-7);
    }

    #[test]
    fn codim1_rejects_bad_inputs() {
        let g = Ground::indexed(2).unwrap();
        let h = Subspace::coordinate(g.clone(), 0b01);
        let mut u = CVec::zeros(2);
        u[0] = C64::ONE; // inside the subspace
        let mut mass = BTreeMap::new();
        mass.insert((0b01u64, 0b11u64), 1.0);
        let table = CouplingTable::new(g.clone(), mass).unwrap();
        assert!(codim1_coupling_check(&h, &u, &table).is_err());

        let mut v = CVec::zeros(2);
        v[1] = c(0.5, 0.0); // not unit
        assert!(codim1_coupling_check(&h, &v, &table).is_err());

        // non-monotone coupling
        let mut bad = BTreeMap::new();
        bad.insert((0b01u64, 0b10u64), 1.0);
        let bad_table = CouplingTable::new(g, bad).unwrap();
        let mut w = CVec::zeros(2);
        w[1] = C64::ONE;
        assert!(codim1_coupling_check(&h, &w, &bad_table).is_err());
    }

    #[test]
    fn conditioned_kernels_still_dominate() {
        let k = zoo::renewal_truncated(4, 0.4).unwrap();
        let include = conditional_domination(&k, &ConditionSpec::include_only(0b0001)).unwrap();
        assert!(include.feasible);
        let exclude = conditional_domination(&k, &ConditionSpec::exclude_only(0b0001)).unwrap();
        assert!(exclude.feasible);
    }

    #[test]
    fn coupling_table_guards() {
        let g = Ground::indexed(1).unwrap();
        let mut mass = BTreeMap::new();
        mass.insert((0b1u64, 0b1u64), 0.7);
        assert!(CouplingTable::new(g.clone(), mass.clone()).is_err());
        mass.insert((0b0u64, 0b0u64), 0.3);
        assert!(CouplingTable::new(g.clone(), mass.clone()).is_ok());
        mass.insert((0b10u64, 0b0u64), 0.0);
        assert!(CouplingTable::new(g, mass).is_err());
    }
}
