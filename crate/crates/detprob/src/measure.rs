//! Exact probability computations: cylinder probabilities by the
//! inclusion-exclusion determinant, full enumeration, coordinatization-row
//! base probabilities, entropy, total variation, and marginal-count
//! statistics.
//!
//! Enumeration computes each of the `2^n` determinants independently
//! rather than by recursive conditioning, so the sampler and the
//! conditioning code share no path with it and cross-validation against it
//! is meaningful.

use rayon::prelude::*;

use crate::ground::{bits, compress, shrink, Ground, Mask};
use crate::kernels::{ConditionSpec, Kernel};
use crate::linalg::{incexc_det, orthonormal_columns, CMat, RANK_TOL};
use crate::{Error, Result, ENUMERATION_CAP};

/// Largest union `|include| + |exclude|` accepted by [`cylinder_prob`].
pub const CYLINDER_CAP: usize = 25;

/// A probability distribution on the subsets of a ground set of at most
/// [`ENUMERATION_CAP`] elements, indexed by subset bitmask.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionTable {
    ground: Ground,
    mass: Vec<f64>,
}

/// Count statistics of `|S intersect A|`.
#[derive(Clone, Debug)]
pub struct CountStats {
    pub mean: f64,
    pub pmf: Vec<f64>,
}

/// A full-row-rank matrix whose columns coordinatize the ground set; its
/// row space carries the projection measure used by [`base_prob_from_matrix`].
#[derive(Clone, Debug)]
pub struct CoordinatizationMatrix {
    ground: Ground,
    rows: CMat,
}

impl CoordinatizationMatrix {
    pub fn new(ground: Ground, rows: CMat) -> Result<Self> {
        if rows.ncols() != ground.size() {
            return Err(Error::Shape(format!(
                "matrix has {} columns but the ground set has {} elements",
                rows.ncols(),
                ground.size()
            )));
        }
        let rank = orthonormal_columns(&rows.adjoint(), RANK_TOL).ncols();
        if rank != rows.nrows() {
            return Err(Error::Singular(format!(
                "coordinatization matrix has row rank {} of {}",
                rank,
                rows.nrows()
            )));
        }
        Ok(CoordinatizationMatrix { ground, rows })
    }

    pub fn ground(&self) -> &Ground {
        &self.ground
    }

    pub fn rows(&self) -> &CMat {
        &self.rows
    }
}

impl DistributionTable {
    /// Wrap raw masses. Entries may carry floating noise down to `-1e-12`
    /// (clamped to zero); anything more negative, or a total off 1 by more
    /// than `1e-8`, is an error.
    pub fn from_masses(ground: Ground, mass: Vec<f64>) -> Result<Self> {
        let n = ground.size();
        if n > ENUMERATION_CAP {
            return Err(Error::EnumerationCap { size: n, cap: ENUMERATION_CAP });
        }
        if mass.len() != 1 << n {
            return Err(Error::Shape(format!(
                "{} masses for a {n}-element ground set",
                mass.len()
            )));
        }
        let mut clamped = mass;
        for m in &mut clamped {
            if *m < -1e-12 {
                return Err(Error::Invalid(format!("negative mass {m:.3e}")));
            }
            if *m < 0.0 {
                *m = 0.0;
            }
        }
        let total: f64 = clamped.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Invalid(format!(
                "masses sum to {total}, off by {:.3e}",
                (total - 1.0).abs()
            )));
        }
        Ok(DistributionTable { ground, mass: clamped })
    }

    pub fn ground(&self) -> &Ground {
        &self.ground
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn prob(&self, subset: Mask) -> f64 {
        self.mass[subset as usize]
    }

    /// Probability of an arbitrary event given by its indicator.
    pub fn event_prob(&self, event: impl Fn(Mask) -> bool) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .filter(|&(m, _)| event(m as Mask))
            .map(|(_, &p)| p)
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        -self
            .mass
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// The law of the complement `E \ S`.
    pub fn complement_pushforward(&self) -> DistributionTable {
        let full = self.ground.full_mask();
        let mass = (0..self.mass.len())
            .map(|m| self.mass[(full & !(m as Mask)) as usize])
            .collect();
        DistributionTable { ground: self.ground.clone(), mass }
    }

    /// The law of `S intersect keep` on the restricted ground set.
    pub fn marginal_onto(&self, keep: Mask) -> DistributionTable {
        let ground = self.ground.restrict(keep);
        let mut mass = vec![0.0; 1 << ground.size()];
        for (m, &p) in self.mass.iter().enumerate() {
            mass[compress(m as Mask & keep, keep)] += p;
        }
        DistributionTable { ground, mass }
    }

    /// Condition on a cylinder event and drop the conditioned elements:
    /// the law of `S \ include` on `E \ (include union exclude)`.
    pub fn condition(&self, spec: &ConditionSpec) -> Result<DistributionTable> {
        let union = spec.union();
        if union & !self.ground.full_mask() != 0 {
            return Err(Error::InvalidArgument(
                "condition references elements outside the ground set".into(),
            ));
        }
        let rest = self.ground.full_mask() & !union;
        let ground = self.ground.restrict(rest);
        let mut mass = vec![0.0; 1 << ground.size()];
        let mut total = 0.0;
        for (m, &p) in self.mass.iter().enumerate() {
            let m = m as Mask;
            if m & spec.include == spec.include && m & spec.exclude == 0 {
                mass[shrink(m & rest, union) as usize] += p;
                total += p;
            }
        }
        if total <= 1e-12 {
            return Err(Error::ImpossibleEvent { prob: total, tol: 1e-12 });
        }
        for m in &mut mass {
            *m /= total;
        }
        Ok(DistributionTable { ground, mass })
    }
}

/// `P[include in S, exclude disjoint from S]` by the inclusion-exclusion
/// determinant with complemented rows for excluded elements.
pub fn cylinder_prob(kernel: &Kernel, include: Mask, exclude: Mask) -> Result<f64> {
    if include & exclude != 0 {
        return Err(Error::InvalidArgument(
            "include and exclude sets overlap".into(),
        ));
    }
    let union = include | exclude;
    if union & !kernel.ground().full_mask() != 0 {
        return Err(Error::InvalidArgument(
            "cylinder references elements outside the ground set".into(),
        ));
    }
    let size = union.count_ones() as usize;
    if size > CYLINDER_CAP {
        return Err(Error::EnumerationCap { size, cap: CYLINDER_CAP });
    }
    let det = incexc_det(kernel.entries(), include, exclude);
    if det.im.abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "cylinder determinant has imaginary residue {:.3e}",
            det.im
        )));
    }
    if det.re < -1e-8 {
        return Err(Error::Invalid(format!(
            "cylinder determinant {:.3e} is negative beyond tolerance",
            det.re
        )));
    }
    if det.re > 1.0 + 1e-8 {
        return Err(Error::Invalid(format!(
            "cylinder determinant {:.3e} exceeds 1 beyond tolerance",
            det.re
        )));
    }
    Ok(det.re.clamp(0.0, 1.0))
}

/// The full distribution: one inclusion-exclusion determinant per subset.
pub fn enumerate(kernel: &Kernel) -> Result<DistributionTable> {
    let n = kernel.size();
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { size: n, cap: ENUMERATION_CAP });
    }
    let full = kernel.ground().full_mask();
    let mass: Vec<f64> = (0..(1u64 << n))
        .into_par_iter()
        .map(|m| cylinder_prob(kernel, m, full & !m))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Invalid(format!(
            "enumerated masses sum to {total}, off by {:.3e}",
            (total - 1.0).abs()
        )));
    }
    DistributionTable::from_masses(kernel.ground().clone(), mass)
}

/// Base probability from a coordinatization matrix:
/// `|det M_B|^2 / det(M M*)`. Returns 0 when `|B|` is not the row count.
pub fn base_prob_from_matrix(m: &CoordinatizationMatrix, b: Mask) -> f64 {
    let r = m.rows.nrows();
    if b.count_ones() as usize != r {
        return 0.0;
    }
    let cols: Vec<usize> = bits(b).collect();
    let minor = CMat::from_fn(r, r, |i, j| m.rows[(i, cols[j])]);
    let gram = &m.rows * m.rows.adjoint();
    minor.determinant().norm_sqr() / gram.determinant().re
}

/// Shannon entropy of the full distribution, in natural-log units.
pub fn entropy(kernel: &Kernel) -> Result<f64> {
    Ok(enumerate(kernel)?.entropy())
}

/// Total variation distance between two tables on the same ground set.
pub fn tv_distance(p: &DistributionTable, q: &DistributionTable) -> Result<f64> {
    p.ground.same_as(&q.ground, "total variation")?;
    Ok(p
        .mass
        .iter()
        .zip(&q.mass)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0)
}

/// Mean and exact pmf of `|S intersect A|`.
pub fn marginal_count_stats(kernel: &Kernel, a: Mask) -> Result<CountStats> {
    let mean: f64 = bits(a).map(|e| kernel.entries()[(e, e)].re).sum();
    let table = enumerate(kernel)?;
    let mut pmf = vec![0.0; a.count_ones() as usize + 1];
    for (m, &p) in table.mass.iter().enumerate() {
        pmf[(m as Mask & a).count_ones() as usize] += p;
    }
    let pmf_mean: f64 = pmf.iter().enumerate().map(|(k, &p)| k as f64 * p).sum();
    if (mean - pmf_mean).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "marginal mean {mean} disagrees with pmf mean {pmf_mean}"
        )));
    }
    Ok(CountStats { mean, pmf })
}
