//! Kernels, subspaces, and the operations that build new measures from old:
//! validation, duality, conditioning, dilation, reweighting, and a zoo of
//! named constructions.
//!
//! A [`Kernel`] stores the Hermitian matrix of a positive contraction `Q`
//! with `entries[e][f] = <Qe, f>`; for a projection onto a subspace with
//! orthonormal basis columns `U` this is exactly `U U*`. All probability
//! formulas downstream apply to `entries` with no transposition.

use serde::Serialize;

use crate::ground::{shrink, Ground, Mask};
use crate::linalg::{
    self, c, complement_basis, coordinate_basis, hermitian_eigen, hermitize, incexc_det,
    intersect_basis, orthonormal_columns, projection_matrix, psd_sqrt, schur_complement,
    sum_basis, CMat, C64, RANK_TOL,
};
use crate::{Error, Result, GROUND_CAP, REPORT_VERSION};

/// Default validation tolerance for kernels that do not carry their own.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// The Hermitian matrix of a positive contraction on `l2(E)`.
#[derive(Clone, Debug)]
pub struct Kernel {
    ground: Ground,
    entries: CMat,
    tolerance: f64,
}

/// A subspace of `l2(E)`, stored as orthonormal basis columns. Semantics
/// are span-only: constructors are free to rotate the basis.
#[derive(Clone, Debug)]
pub struct Subspace {
    ground: Ground,
    basis: CMat,
}

/// A cylinder event: include every element of `include`, exclude every
/// element of `exclude`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConditionSpec {
    pub include: Mask,
    pub exclude: Mask,
}

/// Outcome of kernel validation.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub version: String,
    pub size: usize,
    pub tolerance: f64,
    pub hermitian_defect: f64,
    pub eigen_min: f64,
    pub eigen_max: f64,
    pub pass: bool,
}

impl ConditionSpec {
    pub fn new(include: Mask, exclude: Mask) -> Result<Self> {
        if include & exclude != 0 {
            return Err(Error::InvalidArgument(
                "include and exclude sets overlap".into(),
            ));
        }
        Ok(ConditionSpec { include, exclude })
    }

    pub fn include_only(include: Mask) -> Self {
        ConditionSpec { include, exclude: 0 }
    }

    pub fn exclude_only(exclude: Mask) -> Self {
        ConditionSpec { include: 0, exclude }
    }

    pub fn union(&self) -> Mask {
        self.include | self.exclude
    }

    fn check_within(&self, ground: &Ground) -> Result<()> {
        if self.include & self.exclude != 0 {
            return Err(Error::InvalidArgument(
                "include and exclude sets overlap".into(),
            ));
        }
        if self.union() & !ground.full_mask() != 0 {
            return Err(Error::InvalidArgument(
                "condition references elements outside the ground set".into(),
            ));
        }
        Ok(())
    }
}

/// Validate raw Hermitian-contraction data without constructing a kernel.
pub fn validate_entries(entries: &CMat, tolerance: f64) -> ValidationReport {
    let defect = linalg::hermitian_defect(entries);
    let (lo, hi) = linalg::eigen_range(entries);
    ValidationReport {
        version: REPORT_VERSION.to_string(),
        size: entries.nrows(),
        tolerance,
        hermitian_defect: defect,
        eigen_min: lo,
        eigen_max: hi,
        pass: defect <= tolerance && lo >= -tolerance && hi <= 1.0 + tolerance,
    }
}

/// Validate a kernel: Hermitian within tolerance, spectrum in
/// `[-tol, 1 + tol]`.
pub fn validate(kernel: &Kernel) -> ValidationReport {
    validate_entries(&kernel.entries, kernel.tolerance)
}

impl Kernel {
    /// Construct and validate. `tolerance` defaults to
    /// [`DEFAULT_TOLERANCE`].
    pub fn new(ground: Ground, entries: CMat, tolerance: Option<f64>) -> Result<Self> {
        let n = ground.size();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::Shape(format!(
                "kernel matrix is {}x{} but the ground set has {} elements",
                entries.nrows(),
                entries.ncols(),
                n
            )));
        }
        let tolerance = tolerance.unwrap_or(DEFAULT_TOLERANCE);
        if !(tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let report = validate_entries(&entries, tolerance);
        if !report.pass {
            return Err(Error::Invalid(format!(
                "hermitian defect {:.3e}, eigenvalues in [{:.3e}, {:.3e}], tolerance {:.1e}",
                report.hermitian_defect, report.eigen_min, report.eigen_max, tolerance
            )));
        }
        Ok(Kernel { ground, entries, tolerance })
    }

    fn trusted(ground: Ground, entries: CMat, tolerance: f64) -> Self {
        Kernel { ground, entries, tolerance }
    }

    pub fn ground(&self) -> &Ground {
        &self.ground
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn size(&self) -> usize {
        self.ground.size()
    }

    /// Principal submatrix on `mask`. Valid by eigenvalue interlacing.
    pub fn restrict(&self, mask: Mask) -> Kernel {
        Kernel::trusted(
            self.ground.restrict(mask),
            linalg::restrict(&self.entries, mask),
            self.tolerance,
        )
    }

    /// Whether every eigenvalue is within tolerance of 0 or 1.
    pub fn is_projection(&self) -> bool {
        let (vals, _) = hermitian_eigen(&self.entries);
        vals.iter()
            .all(|&l| l.abs() <= self.tolerance || (l - 1.0).abs() <= self.tolerance)
    }

    /// The range of a projection kernel as a subspace.
    pub fn range(&self) -> Result<Subspace> {
        let (vals, vecs) = hermitian_eigen(&self.entries);
        for &l in &vals {
            if l.abs() > self.tolerance && (l - 1.0).abs() > self.tolerance {
                return Err(Error::InvalidArgument(format!(
                    "kernel is not a projection: eigenvalue {l:.6} is strictly between 0 and 1"
                )));
            }
        }
        let cols: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > 0.5).collect();
        let basis = CMat::from_fn(self.size(), cols.len(), |r, k| vecs[(r, cols[k])]);
        Ok(Subspace { ground: self.ground.clone(), basis })
    }
}

impl Subspace {
    /// Construct from independent (not necessarily orthonormal) basis
    /// columns; errors if the columns are dependent at the SVD threshold.
    pub fn new(ground: Ground, basis: CMat) -> Result<Self> {
        if basis.nrows() != ground.size() {
            return Err(Error::Shape(format!(
                "basis has {} rows but the ground set has {} elements",
                basis.nrows(),
                ground.size()
            )));
        }
        let ortho = orthonormal_columns(&basis, RANK_TOL);
        if ortho.ncols() != basis.ncols() {
            return Err(Error::Singular(format!(
                "basis columns are dependent: rank {} of {}",
                ortho.ncols(),
                basis.ncols()
            )));
        }
        Ok(Subspace { ground, basis: ortho })
    }

    /// Construct from any spanning set, keeping whatever rank survives.
    pub fn from_span(ground: Ground, span: CMat) -> Result<Self> {
        if span.nrows() != ground.size() {
            return Err(Error::Shape(format!(
                "spanning matrix has {} rows but the ground set has {} elements",
                span.nrows(),
                ground.size()
            )));
        }
        let ortho = orthonormal_columns(&span, RANK_TOL);
        Ok(Subspace { ground, basis: ortho })
    }

    /// The coordinate subspace spanned by the elements of `mask`.
    pub fn coordinate(ground: Ground, mask: Mask) -> Subspace {
        let basis = coordinate_basis(ground.size(), mask);
        Subspace { ground, basis }
    }

    pub fn ground(&self) -> &Ground {
        &self.ground
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn projection_matrix(&self) -> CMat {
        projection_matrix(&self.basis)
    }

    pub fn complement(&self) -> Subspace {
        Subspace {
            ground: self.ground.clone(),
            basis: complement_basis(&self.basis, RANK_TOL),
        }
    }

    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        self.ground.same_as(&other.ground, "subspace sum")?;
        Ok(Subspace {
            ground: self.ground.clone(),
            basis: sum_basis(&self.basis, &other.basis, RANK_TOL),
        })
    }

    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        self.ground.same_as(&other.ground, "subspace intersection")?;
        Ok(Subspace {
            ground: self.ground.clone(),
            basis: intersect_basis(&self.basis, &other.basis, RANK_TOL),
        })
    }
}

/// The projection kernel `U U*` of a subspace.
pub fn projection_kernel(subspace: &Subspace) -> Kernel {
    let entries = hermitize(&subspace.projection_matrix());
    Kernel::trusted(subspace.ground.clone(), entries, DEFAULT_TOLERANCE)
}

/// The complementary kernel `I - Q`, whose measure is the law of the
/// complement `E \ S`.
pub fn dual(kernel: &Kernel) -> Kernel {
    let n = kernel.size();
    let entries = CMat::identity(n, n) - &kernel.entries;
    Kernel::trusted(kernel.ground.clone(), entries, kernel.tolerance)
}

/// Condition on a cylinder event of positive probability. Inclusions are
/// absorbed by a Schur complement on the included block; exclusions by
/// dualizing, including under `I - Q`, and dualizing back. The result
/// lives on the ground set with the conditioned elements removed.
pub fn condition(kernel: &Kernel, spec: &ConditionSpec) -> Result<Kernel> {
    spec.check_within(&kernel.ground)?;
    let prob = incexc_det(&kernel.entries, spec.include, spec.exclude).re;
    if prob <= kernel.tolerance {
        return Err(Error::ImpossibleEvent { prob, tol: kernel.tolerance });
    }

    let mut entries = kernel.entries.clone();
    let mut ground = kernel.ground.clone();
    let exclude = shrink(spec.exclude, spec.include);

    if spec.include != 0 {
        entries = schur_complement(&entries, spec.include)?;
        ground = ground.restrict(ground.full_mask() & !spec.include);
    }
    if exclude != 0 {
        let m = entries.nrows();
        let dual_entries = CMat::identity(m, m) - &entries;
        let conditioned = schur_complement(&dual_entries, exclude)?;
        let k = conditioned.nrows();
        entries = CMat::identity(k, k) - conditioned;
        ground = ground.restrict(ground.full_mask() & !exclude);
    }

    Kernel::new(ground, hermitize(&entries), Some(kernel.tolerance))
}

/// Condition a subspace on a cylinder event:
/// `H_{A,B} = ((H inter [A]-perp) + [A u B]) inter [B]-perp`. The
/// projection measure of the result puts `A` inside and `B` outside the
/// sample almost surely; restricting its kernel off `A u B` recovers
/// [`condition`] applied to the projection kernel of `H`.
pub fn subspace_condition(subspace: &Subspace, spec: &ConditionSpec) -> Result<Subspace> {
    spec.check_within(&subspace.ground)?;
    let ground = subspace.ground.clone();
    let a = Subspace::coordinate(ground.clone(), spec.include);
    let b = Subspace::coordinate(ground.clone(), spec.exclude);
    let ab = Subspace::coordinate(ground, spec.union());
    subspace
        .intersect(&a.complement())?
        .sum(&ab)?
        .intersect(&b.complement())
}

/// Dilate a contraction to a projection on the doubled ground set:
/// the block matrix `[[Q, T That], [That T, I - Q]]` with `T = sqrt(Q)`
/// and `That = sqrt(I - Q)` is a projection whose measure restricted to
/// the original elements is the measure of `Q`.
pub fn dilate(kernel: &Kernel) -> Result<Subspace> {
    let n = kernel.size();
    if 2 * n > GROUND_CAP {
        return Err(Error::GroundTooLarge { size: 2 * n, cap: GROUND_CAP });
    }
    let q = &kernel.entries;
    let eye = CMat::identity(n, n);
    let t = psd_sqrt(q);
    let t_hat = psd_sqrt(&(&eye - q));
    let cross = &t * &t_hat;

    let mut block = CMat::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(q);
    block.view_mut((0, n), (n, n)).copy_from(&cross);
    block.view_mut((n, 0), (n, n)).copy_from(&cross);
    block.view_mut((n, n), (n, n)).copy_from(&(&eye - q));

    let mut labels: Vec<String> = kernel.ground.labels().to_vec();
    for l in kernel.ground.labels() {
        let mut candidate = format!("{l}^");
        while labels.contains(&candidate) {
            candidate.push('^');
        }
        labels.push(candidate);
    }
    let doubled = Ground::new(labels)?;

    let (vals, vecs) = hermitian_eigen(&block);
    let cols: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > 0.5).collect();
    if cols.len() != n {
        return Err(Error::Invalid(format!(
            "dilation should be a rank-{n} projection, found rank {}",
            cols.len()
        )));
    }
    let basis = CMat::from_fn(2 * n, n, |r, k| vecs[(r, cols[k])]);
    Ok(Subspace { ground: doubled, basis })
}

/// The image of the subspace under `D_w e = sqrt(w(e)) e`, orthonormalized.
/// The resulting measure tilts the original by the product of the weights
/// of the chosen elements.
pub fn reweight(subspace: &Subspace, weights: &[f64]) -> Result<Subspace> {
    let n = subspace.ground.size();
    if weights.len() != n {
        return Err(Error::Shape(format!(
            "{} weights for {} elements",
            weights.len(),
            n
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(
            "reweighting requires strictly positive finite weights".into(),
        ));
    }
    let mut scaled = subspace.basis.clone();
    for (i, &w) in weights.iter().enumerate() {
        for k in 0..scaled.ncols() {
            scaled[(i, k)] *= c(w.sqrt(), 0.0);
        }
    }
    let basis = orthonormal_columns(&scaled, RANK_TOL);
    if basis.ncols() != subspace.dim() {
        return Err(Error::Singular(
            "reweighting lost rank, which positive weights cannot do".into(),
        ));
    }
    Ok(Subspace { ground: subspace.ground.clone(), basis })
}

/// Named kernels.
pub mod zoo {
    use super::*;

    /// Independent coin flips: the diagonal kernel with `P[e in S] = p`.
    pub fn bernoulli(n: usize, p: f64) -> Result<Kernel> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "bernoulli parameter {p} outside [0, 1]"
            )));
        }
        let entries = CMat::from_fn(n, n, |r, col| if r == col { c(p, 0.0) } else { C64::ZERO });
        Kernel::new(Ground::indexed(n)?, entries, None)
    }

    /// Truncation of the renewal-process kernel on the integers:
    /// `R(i, j) = (1-a)/(1+a) a^{|i-j|}`. Gaps between successive points
    /// of the full process are distributed as one plus the number of tails
    /// before the second head when flipping a coin with tail probability
    /// `a`.
    pub fn renewal_truncated(n: usize, a: f64) -> Result<Kernel> {
        if !(0.0..1.0).contains(&a) {
            return Err(Error::InvalidArgument(format!(
                "renewal parameter {a} outside [0, 1)"
            )));
        }
        let scale = (1.0 - a) / (1.0 + a);
        let entries = CMat::from_fn(n, n, |r, col| {
            c(scale * a.powi((r as i32 - col as i32).abs()), 0.0)
        });
        Kernel::new(Ground::indexed(n)?, entries, None)
    }

    /// Toeplitz truncation from Fourier coefficients of a symbol: entry
    /// `(j, k)` is `coeffs[k - j]`, with negative indices supplied by
    /// conjugate symmetry. The result must validate as a contraction,
    /// which holds whenever the symbol takes values in `[0, 1]`.
    pub fn toeplitz_from_symbol(n: usize, coeffs: &[C64]) -> Result<Kernel> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument(
                "at least the zeroth Fourier coefficient is required".into(),
            ));
        }
        let coeff = |m: i64| -> C64 {
            let idx = m.unsigned_abs() as usize;
            if idx >= coeffs.len() {
                C64::ZERO
            } else if m >= 0 {
                coeffs[idx]
            } else {
                coeffs[idx].conj()
            }
        };
        let entries = CMat::from_fn(n, n, |r, col| coeff(col as i64 - r as i64));
        Kernel::new(Ground::indexed(n)?, entries, None)
    }

    /// Projection onto the span of the characters of `Z_n` indexed by
    /// `js`: entry `(m, m')` is `(1/n) sum_k exp(2 pi i k (m - m') / n)`.
    pub fn zn_character(n: usize, js: &[usize]) -> Result<Kernel> {
        if n == 0 {
            return Err(Error::InvalidArgument("Z_0 has no elements".into()));
        }
        let mut seen = vec![false; n];
        for &j in js {
            let j = j % n;
            if seen[j] {
                return Err(Error::InvalidArgument(format!(
                    "character index {j} repeated modulo {n}"
                )));
            }
            seen[j] = true;
        }
        let entries = CMat::from_fn(n, n, |m, mp| {
            let mut acc = C64::ZERO;
            for (k, &used) in seen.iter().enumerate() {
                if used {
                    let angle = std::f64::consts::TAU * k as f64 * (m as f64 - mp as f64)
                        / n as f64;
                    acc += c(angle.cos(), angle.sin());
                }
            }
            acc / c(n as f64, 0.0)
        });
        Kernel::new(Ground::indexed(n)?, entries, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_c64(rng: &mut ChaCha8Rng) -> C64 {
        c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
    }

    pub(crate) fn random_subspace(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Subspace {
        let raw = CMat::from_fn(n, r, |_, _| rand_c64(rng));
        Subspace::new(Ground::indexed(n).unwrap(), raw).unwrap()
    }

    #[test]
    fn validation_flags_bad_matrices() {
        let g = Ground::indexed(2).unwrap();
        let asym = CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.2, 0.0), c(0.3, 0.0), c(0.5, 0.0)]);
        assert!(matches!(Kernel::new(g.clone(), asym, None), Err(Error::Invalid(_))));

        let hot = CMat::from_row_slice(2, 2, &[c(1.2, 0.0), C64::ZERO, C64::ZERO, c(0.5, 0.0)]);
        let report = validate_entries(&hot, DEFAULT_TOLERANCE);
        assert!(!report.pass);
        assert!((report.eigen_max - 1.2).abs() < 1e-12);

        let ok = CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.5, 0.0)]);
        assert!(Kernel::new(g, ok, None).is_ok());
    }

    #[test]
    fn tolerance_is_respected() {
        let g = Ground::indexed(1).unwrap();
        let m = CMat::from_row_slice(1, 1, &[c(1.0 + 2e-9, 0.0)]);
        assert!(Kernel::new(g.clone(), m.clone(), None).is_err());
        assert!(Kernel::new(g, m, Some(1e-8)).is_ok());
    }

    #[test]
    fn restriction_of_valid_kernel_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let sub = random_subspace(&mut rng, 6, 3);
            let k = projection_kernel(&sub);
            let mask = rng.random_range(0..64u64);
            let restricted = k.restrict(mask);
            assert!(validate(&restricted).pass);
        }
    }

    #[test]
    fn dual_matches_hand_example() {
        let g = Ground::indexed(2).unwrap();
        let q = CMat::from_row_slice(2, 2, &[c(0.5, 0.0); 4]);
        let k = Kernel::new(g, q, None).unwrap();
        let d = dual(&k);
        let expect =
            CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(-0.5, 0.0), c(-0.5, 0.0), c(0.5, 0.0)]);
        assert!(max_abs(&(d.entries() - expect)) < 1e-15);
        assert!(d.is_projection());
    }

    #[test]
    fn conditioning_rank_one_projection_pins_the_other_element() {
        let g = Ground::indexed(2).unwrap();
        let q = CMat::from_row_slice(2, 2, &[c(0.5, 0.0); 4]);
        let k = Kernel::new(g, q, None).unwrap();

        let inc = condition(&k, &ConditionSpec::include_only(0b01)).unwrap();
        assert_eq!(inc.size(), 1);
        assert!(inc.entries()[(0, 0)].norm() < 1e-12);

        let exc = condition(&k, &ConditionSpec::exclude_only(0b01)).unwrap();
        assert!((exc.entries()[(0, 0)] - C64::ONE).norm() < 1e-12);
        assert_eq!(exc.ground().labels(), &["1".to_string()]);
    }

    #[test]
    fn conditioning_product_measure_leaves_rest_alone() {
        let k = zoo::bernoulli(3, 0.3).unwrap();
        let spec = ConditionSpec::new(0b001, 0b100).unwrap();
        let cond = condition(&k, &spec).unwrap();
        assert_eq!(cond.size(), 1);
        assert!((cond.entries()[(0, 0)] - c(0.3, 0.0)).norm() < 1e-12);
        assert_eq!(cond.ground().labels(), &["1".to_string()]);
    }

    #[test]
    fn conditioning_on_impossible_event_errors() {
        let k = zoo::bernoulli(2, 0.0).unwrap();
        assert!(matches!(
            condition(&k, &ConditionSpec::include_only(0b01)),
            Err(Error::ImpossibleEvent { .. })
        ));
        let full = zoo::bernoulli(2, 1.0).unwrap();
        assert!(matches!(
            condition(&full, &ConditionSpec::exclude_only(0b10)),
            Err(Error::ImpossibleEvent { .. })
        ));
    }

    #[test]
    fn subspace_conditioning_contains_a_and_kills_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..10 {
            let sub = random_subspace(&mut rng, 5, 3);
            let spec = ConditionSpec::new(0b00001, 0b01000).unwrap();
            let cond = subspace_condition(&sub, &spec).unwrap();
            let p = cond.projection_matrix();
            assert!((p[(0, 0)] - C64::ONE).norm() < 1e-9, "A not surely inside");
            assert!(p[(3, 3)].norm() < 1e-9, "B not surely outside");
        }
    }

    #[test]
    fn subspace_route_matches_schur_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..10 {
            let sub = random_subspace(&mut rng, 5, 3);
            let spec = ConditionSpec::new(0b00001, 0b00010).unwrap();
            let via_schur = condition(&projection_kernel(&sub), &spec).unwrap();
            let conditioned = subspace_condition(&sub, &spec).unwrap();
            let p = conditioned.projection_matrix();
            let keep = sub.ground().full_mask() & !spec.union();
            let via_subspace = crate::linalg::restrict(&p, keep);
            let diff = via_subspace - via_schur.entries();
            assert!(
                max_abs(&diff) < 1e-8,
                "routes differ by {:.3e}",
                max_abs(&diff)
            );
        }
    }

    #[test]
    fn commuting_conditions_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..10 {
            let sub = random_subspace(&mut rng, 5, 3);
            let first = subspace_condition(&sub, &ConditionSpec::new(0b00001, 0b00010).unwrap())
                .unwrap();
            let second =
                subspace_condition(&first, &ConditionSpec::new(0b00100, 0b01000).unwrap()).unwrap();
            let joint = subspace_condition(&sub, &ConditionSpec::new(0b00101, 0b01010).unwrap())
                .unwrap();
            let diff = second.projection_matrix() - joint.projection_matrix();
            assert!(
                max_abs(&diff) < 1e-8,
                "projections differ by {:.3e} (dims {} vs {})",
                max_abs(&diff),
                second.dim(),
                joint.dim()
            );
        }
    }

    #[test]
    fn dilation_of_bernoulli_is_the_expected_plane() {
        let k = zoo::bernoulli(1, 0.3).unwrap();
        let sub = dilate(&k).unwrap();
        assert_eq!(sub.ground().labels(), &["0".to_string(), "0^".to_string()]);
        assert_eq!(sub.dim(), 1);
        let p = sub.projection_matrix();
        assert!((p[(0, 0)] - c(0.3, 0.0)).norm() < 1e-12);
        assert!((p[(1, 1)] - c(0.7, 0.0)).norm() < 1e-12);
        assert!((p[(0, 1)] - c((0.3f64 * 0.7).sqrt(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dilation_block_structure_holds_for_random_contractions() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..10 {
            let n = 3;
            let sub = random_subspace(&mut rng, n, 2);
            let scale: f64 = rng.random::<f64>();
            let q = sub.projection_matrix() * c(scale, 0.0);
            let k = Kernel::new(Ground::indexed(n).unwrap(), hermitize(&q), None).unwrap();
            let dilated = dilate(&k).unwrap();
            let p = dilated.projection_matrix();
            let top = p.view((0, 0), (n, n)).into_owned();
            assert!(max_abs(&(top - k.entries())) < 1e-9);
            let bottom = p.view((n, n), (n, n)).into_owned();
            let expect = CMat::identity(n, n) - k.entries();
            assert!(max_abs(&(bottom - expect)) < 1e-9);
        }
    }

    #[test]
    fn reweighting_moves_marginals_as_computed_by_hand() {
        // Span of (1, 1) with weights (4, 1): D_w maps it to span of
        // (2, 1), so the one-point masses tilt from (1/2, 1/2) to
        // (4/5, 1/5), the product-of-weights tilt.
        let g = Ground::indexed(2).unwrap();
        let basis = CMat::from_row_slice(2, 1, &[C64::ONE, C64::ONE]);
        let sub = Subspace::new(g, basis).unwrap();
        let rew = reweight(&sub, &[4.0, 1.0]).unwrap();
        let p = rew.projection_matrix();
        assert!((p[(0, 0)] - c(4.0 / 5.0, 0.0)).norm() < 1e-12);
        assert!((p[(1, 1)] - c(1.0 / 5.0, 0.0)).norm() < 1e-12);
        assert!(reweight(&sub, &[1.0, -1.0]).is_err());
        assert!(reweight(&sub, &[1.0]).is_err());
    }

    #[test]
    fn zoo_values_match_hand_computations() {
        let b = zoo::bernoulli(2, 0.3).unwrap();
        assert!((b.entries()[(0, 0)] - c(0.3, 0.0)).norm() < 1e-15);
        assert!(b.entries()[(0, 1)].norm() < 1e-15);

        let r = zoo::renewal_truncated(3, 0.4).unwrap();
        let s = 0.6 / 1.4;
        assert!((r.entries()[(0, 0)] - c(s, 0.0)).norm() < 1e-12);
        assert!((r.entries()[(0, 2)] - c(s * 0.16, 0.0)).norm() < 1e-12);
        assert!((r.entries()[(2, 0)] - c(s * 0.16, 0.0)).norm() < 1e-12);

        let z = zoo::zn_character(2, &[0]).unwrap();
        assert!(max_abs(&(z.entries() - CMat::from_row_slice(2, 2, &[c(0.5, 0.0); 4]))) < 1e-12);
        assert!(z.is_projection());

        let z4 = zoo::zn_character(4, &[1]).unwrap();
        assert!((z4.entries()[(0, 1)] - c(0.0, -0.25)).norm() < 1e-12);
        assert!(z4.is_projection());
        assert!(zoo::zn_character(4, &[1, 5]).is_err());
    }

    #[test]
    fn toeplitz_from_indicator_symbol_validates() {
        // Symbol 1_{[0, 1/2)}: hat f(0) = 1/2, hat f(m) = -i/(pi m) for odd
        // m, 0 for even nonzero m. All offsets up to n - 1 are needed; a
        // shorter list would instead describe the truncated partial sum,
        // whose symbol overshoots [0, 1].
        let mut coeffs = vec![C64::ZERO; 8];
        coeffs[0] = c(0.5, 0.0);
        for m in (1..8).step_by(2) {
            coeffs[m] = c(0.0, -1.0 / (std::f64::consts::PI * m as f64));
        }
        let k = zoo::toeplitz_from_symbol(8, &coeffs).unwrap();
        let report = validate(&k);
        assert!(report.pass);
        assert!(report.eigen_min > -1e-9 && report.eigen_max < 1.0 + 1e-9);

        let bad = vec![c(2.0, 0.0)];
        assert!(zoo::toeplitz_from_symbol(3, &bad).is_err());
    }

    #[test]
    fn range_recovers_projection_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let sub = random_subspace(&mut rng, 5, 2);
        let k = projection_kernel(&sub);
        let back = k.range().unwrap();
        assert_eq!(back.dim(), 2);
        assert!(max_abs(&(back.projection_matrix() - sub.projection_matrix())) < 1e-9);

        let contraction = zoo::bernoulli(2, 0.3).unwrap();
        assert!(contraction.range().is_err());
    }
}
