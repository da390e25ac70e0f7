//! Sparse exterior algebra over the ground set.
//!
//! This module is the crate's independent oracle: probabilities computed by
//! determinant formulas elsewhere are re-derived here from wedge products
//! and interior products of multivectors, sharing no code path with the
//! determinant route beyond the kernel's basis matrix.
//!
//! A multivector is a finite sum of coordinate blades `theta_A` indexed by
//! subset bitmask, with complex coefficients. The inner product is
//! conjugate-linear in the first slot, `<u, v> = sum conj(u_A) v_A`, the
//! same convention the rest of the crate uses for `l2(E)`.

use std::collections::BTreeMap;

use crate::ground::{bits, Mask};
use crate::kernels::Subspace;
use crate::linalg::{C64, CMat, CVec};
use crate::{Error, Result};

/// Ground-set cap for the cylinder oracle (wedges of up to `2^12` terms).
pub const ORACLE_CAP: usize = 12;

/// A sparse multivector: coefficients on coordinate blades keyed by subset
/// bitmask. Zero coefficients are never stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Multivector {
    terms: BTreeMap<Mask, C64>,
}

impl Multivector {
    pub fn zero() -> Self {
        Multivector::default()
    }

    pub fn scalar(c: C64) -> Self {
        Multivector::from_term(0, c)
    }

    /// The coordinate blade `theta_A` for the subset `mask`.
    pub fn blade(mask: Mask) -> Self {
        Multivector::from_term(mask, C64::ONE)
    }

    pub fn from_term(mask: Mask, coeff: C64) -> Self {
        let mut terms = BTreeMap::new();
        if coeff != C64::ZERO {
            terms.insert(mask, coeff);
        }
        Multivector { terms }
    }

    /// The 1-vector with the given `l2(E)` coefficients.
    pub fn from_vector(v: &CVec) -> Self {
        let mut terms = BTreeMap::new();
        for (i, &coeff) in v.iter().enumerate() {
            if coeff != C64::ZERO {
                terms.insert(1u64 << i, coeff);
            }
        }
        Multivector { terms }
    }

    fn from_map(map: BTreeMap<Mask, C64>) -> Self {
        let mut mv = Multivector { terms: map };
        mv.terms.retain(|_, c| *c != C64::ZERO);
        mv
    }

    pub fn terms(&self) -> impl Iterator<Item = (Mask, C64)> + '_ {
        self.terms.iter().map(|(&m, &c)| (m, c))
    }

    pub fn coeff(&self, mask: Mask) -> C64 {
        self.terms.get(&mask).copied().unwrap_or(C64::ZERO)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Multivector) -> Multivector {
        let mut out = self.terms.clone();
        for (&m, &c) in &other.terms {
            *out.entry(m).or_insert(C64::ZERO) += c;
        }
        Multivector::from_map(out)
    }

    pub fn scale(&self, factor: C64) -> Multivector {
        Multivector::from_map(self.terms.iter().map(|(&m, &c)| (m, c * factor)).collect())
    }

    /// Wedge product. Blades with shared elements annihilate; disjoint
    /// blades merge with the inversion-count sign.
    pub fn wedge(&self, other: &Multivector) -> Multivector {
        let mut out: BTreeMap<Mask, C64> = BTreeMap::new();
        for (&ma, &ca) in &self.terms {
            for (&mb, &cb) in &other.terms {
                if ma & mb != 0 {
                    continue;
                }
                let c = ca * cb * merge_sign(ma, mb);
                *out.entry(ma | mb).or_insert(C64::ZERO) += c;
            }
        }
        Multivector::from_map(out)
    }

    /// Interior product `u v v`, defined by `<u v v, w> = <u, w ^ v>`. It
    /// is linear in `u` and conjugate-linear in `v`; on blades it strips
    /// `B` from `A` when `B` is contained in `A` and annihilates otherwise.
    pub fn interior(&self, other: &Multivector) -> Multivector {
        let mut out: BTreeMap<Mask, C64> = BTreeMap::new();
        for (&ma, &ca) in &self.terms {
            for (&mb, &cb) in &other.terms {
                if mb & !ma != 0 {
                    continue;
                }
                let rest = ma & !mb;
                let c = ca * cb.conj() * merge_sign(rest, mb);
                *out.entry(rest).or_insert(C64::ZERO) += c;
            }
        }
        Multivector::from_map(out)
    }

    /// Inner product, conjugate-linear in `self`.
    pub fn inner(&self, other: &Multivector) -> C64 {
        let mut acc = C64::ZERO;
        for (&m, &c) in &self.terms {
            if let Some(&d) = other.terms.get(&m) {
                acc += c.conj() * d;
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Whether `self` and `other` agree up to a global unit-modulus factor.
    pub fn collinear_up_to_phase(&self, other: &Multivector, tol: f64) -> bool {
        let (na, nb) = (self.norm(), other.norm());
        if na < tol || nb < tol {
            return na < tol && nb < tol;
        }
        let ip = self.inner(other);
        (ip.norm() - na * nb).abs() <= tol * na * nb
    }
}

/// Sign `(-1)^inv` for merging two disjoint ascending blades, where `inv`
/// counts pairs `(i, j)` with `i` in `a`, `j` in `b`, and `i > j`.
pub fn merge_sign(a: Mask, b: Mask) -> C64 {
    let mut inversions = 0u32;
    for j in bits(b) {
        inversions += (a >> j >> 1).count_ones();
    }
    if inversions % 2 == 0 {
        C64::ONE
    } else {
        -C64::ONE
    }
}

/// The unit multivector spanning the top exterior power of the subspace:
/// the wedge of its orthonormal basis columns. Defined up to signum; only
/// squared magnitudes of its coefficients are consumed downstream.
pub fn xi(subspace: &Subspace) -> Multivector {
    let basis = subspace.basis();
    let mut acc = Multivector::scalar(C64::ONE);
    for k in 0..basis.ncols() {
        let col = basis.column(k).into_owned();
        acc = acc.wedge(&Multivector::from_vector(&col));
    }
    acc
}

/// Apply the projection onto `Ext(H)` termwise: each blade maps to the
/// wedge of the projections of its factors.
pub fn lifted_projection(subspace: &Subspace, u: &Multivector) -> Multivector {
    let p = subspace.projection_matrix();
    lifted_by_matrix(&p, u)
}

fn lifted_by_matrix(p: &CMat, u: &Multivector) -> Multivector {
    let mut out = Multivector::zero();
    for (mask, coeff) in u.terms() {
        let mut term = Multivector::scalar(coeff);
        for e in bits(mask) {
            let col = p.column(e).into_owned();
            term = term.wedge(&Multivector::from_vector(&col));
            if term.is_zero() {
                break;
            }
        }
        out = out.add(&term);
    }
    out
}

/// Cylinder probability by the exterior-algebra route:
/// `P[include in S, exclude disjoint from S]` equals
/// `<P_Ext(H) theta_include ^ P_Ext(H-perp) theta_exclude,
///   theta_include ^ theta_exclude>`.
pub fn oracle_cylinder(subspace: &Subspace, include: Mask, exclude: Mask) -> Result<f64> {
    let n = subspace.ground().size();
    if n > ORACLE_CAP {
        return Err(Error::EnumerationCap { size: n, cap: ORACLE_CAP });
    }
    if include & exclude != 0 {
        return Err(Error::InvalidArgument(
            "include and exclude sets overlap".into(),
        ));
    }
    let p = subspace.projection_matrix();
    let q = CMat::identity(n, n) - &p;
    let included = lifted_by_matrix(&p, &Multivector::blade(include));
    let excluded = lifted_by_matrix(&q, &Multivector::blade(exclude));
    let w = included.wedge(&excluded);
    let target = Multivector::blade(include).wedge(&Multivector::blade(exclude));
    let value = target.inner(&w);
    if value.im.abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "oracle cylinder value has imaginary residue {:.3e}",
            value.im
        )));
    }
    Ok(value.re.clamp(0.0, 1.0))
}
