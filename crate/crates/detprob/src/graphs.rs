//! Graphic-matroid front end: oriented incidence structures, star spaces,
//! transfer current kernels, Matrix-Tree counts, and Kirchhoff current
//! vectors.
//!
//! Edges are the ground set. The star of a vertex `x` is the vector
//! `sum_e sqrt(w(e)) a(x, e) e` with `a(x, e)` the signed incidence, and
//! the span of all stars has dimension `|V| - 1` on a connected graph. The
//! projection measure of that span is the weighted spanning tree measure.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

use crate::ground::{bits, Ground, Mask};
use crate::kernels::{projection_kernel, Kernel, Subspace};
use crate::linalg::{c, least_squares, max_abs, CMat, CVec};
use crate::measure::enumerate;
use crate::{Error, Result};

/// Enumeration-backed Kirchhoff expectations are limited to this many edges.
pub const KIRCHHOFF_CAP: usize = 12;
/// The conditional variant enumerates twice and is capped lower.
pub const CONDITIONED_KIRCHHOFF_CAP: usize = 10;

/// Masses below this are treated as outside the support when summing over
/// bases.
const SUPPORT_EPS: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct GraphEdge {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub weight: f64,
}

impl GraphEdge {
    pub fn new(
        id: impl Into<String>,
        tail: impl Into<String>,
        head: impl Into<String>,
        weight: f64,
    ) -> Self {
        GraphEdge {
            id: id.into(),
            tail: tail.into(),
            head: head.into(),
            weight,
        }
    }
}

/// A connected multigraph with oriented, positively weighted edges.
/// Parallel edges and self-loops are permitted; self-loops contribute zero
/// star-vector columns and never lie in a spanning tree.
#[derive(Clone, Debug)]
pub struct Graph {
    vertices: Vec<String>,
    /// Per edge: (tail index, head index, weight).
    edges: Vec<(usize, usize, f64)>,
    ground: Ground,
}

impl Graph {
    pub fn new(vertices: Vec<String>, edges: Vec<GraphEdge>) -> Result<Graph> {
        let mut vertex_index: HashMap<&str, usize> = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if vertex_index.insert(v.as_str(), i).is_some() {
                return Err(Error::DuplicateLabel(v.clone()));
            }
        }
        let ground = Ground::new(edges.iter().map(|e| e.id.clone()))?;
        let mut resolved = Vec::with_capacity(edges.len());
        for e in &edges {
            let tail = *vertex_index
                .get(e.tail.as_str())
                .ok_or_else(|| Error::UnknownLabel(e.tail.clone()))?;
            let head = *vertex_index
                .get(e.head.as_str())
                .ok_or_else(|| Error::UnknownLabel(e.head.clone()))?;
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "edge {} has non-positive weight {}",
                    e.id, e.weight
                )));
            }
            resolved.push((tail, head, e.weight));
        }
        let graph = Graph { vertices, edges: resolved, ground };
        let components = graph.components();
        if components.len() > 1 {
            return Err(Error::Disconnected(components));
        }
        Ok(graph)
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    /// The complete graph on vertices `v0..v{n-1}` with unit weights and
    /// edges labelled `e{i}{j}` in lexicographic order.
    pub fn complete(n: usize) -> Result<Graph> {
        let vertices: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push(GraphEdge::new(
                    format!("e{i}{j}"),
                    format!("v{i}"),
                    format!("v{j}"),
                    1.0,
                ));
            }
        }
        Graph::new(vertices, edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// (tail, head, weight) by edge index.
    pub fn edge(&self, i: usize) -> (usize, usize, f64) {
        self.edges[i]
    }

    /// The ground set of edge identifiers, in input order.
    pub fn ground(&self) -> &Ground {
        &self.ground
    }

    fn components(&self) -> Vec<Vec<String>> {
        let n = self.vertices.len();
        let mut seen = vec![false; n];
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(t, h, _) in &self.edges {
            if t != h {
                adj[t].push(h);
                adj[h].push(t);
            }
        }
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen[start] = true;
            while let Some(v) = stack.pop() {
                comp.push(self.vertices[v].clone());
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// Whether the edge subset is a spanning tree: spanning, acyclic, and
    /// containing no self-loops.
    pub fn is_spanning_tree(&self, mask: Mask) -> bool {
        let n = self.vertices.len();
        if mask.count_ones() as usize != n.saturating_sub(1) {
            return false;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut v: usize) -> usize {
            while parent[v] != v {
                parent[v] = parent[parent[v]];
                v = parent[v];
            }
            v
        }
        for i in bits(mask) {
            let (t, h, _) = self.edges[i];
            if t == h {
                return false;
            }
            let (rt, rh) = (find(&mut parent, t), find(&mut parent, h));
            if rt == rh {
                return false;
            }
            parent[rt] = rh;
        }
        true
    }
}

/// Span of the square-root-weighted star vectors. The rank is `|V| - 1`
/// on a connected graph.
pub fn star_space(graph: &Graph) -> Result<Subspace> {
    let n = graph.edge_count();
    let v = graph.vertex_count();
    let mut stars = CMat::zeros(n, v);
    for (i, &(t, h, w)) in graph.edges.iter().enumerate() {
        if t == h {
            continue;
        }
        let root = w.sqrt();
        stars[(i, t)] += c(root, 0.0);
        stars[(i, h)] -= c(root, 0.0);
    }
    let sub = Subspace::from_span(graph.ground.clone(), stars)?;
    if sub.dim() != v.saturating_sub(1) {
        return Err(Error::Invalid(format!(
            "star space of a connected graph on {v} vertices should have rank {}, got {}",
            v.saturating_sub(1),
            sub.dim()
        )));
    }
    Ok(sub)
}

/// The transfer current kernel: the projection onto the star space. Entry
/// `(e, f)` is the current through `f` when a unit of current is imposed
/// between the endpoints of `e`.
pub fn transfer_current(graph: &Graph) -> Result<Kernel> {
    Ok(projection_kernel(&star_space(graph)?))
}

/// Weighted spanning tree count by the Matrix-Tree theorem: determinant of
/// the weighted Laplacian with one vertex row and column removed.
pub fn tree_count(graph: &Graph) -> Result<f64> {
    let v = graph.vertex_count();
    if v <= 1 {
        return Ok(1.0);
    }
    let mut lap = DMatrix::<f64>::zeros(v, v);
    for &(t, h, w) in &graph.edges {
        if t == h {
            continue;
        }
        lap[(t, t)] += w;
        lap[(h, h)] += w;
        lap[(t, h)] -= w;
        lap[(h, t)] -= w;
    }
    let reduced = lap.view((1, 1), (v - 1, v - 1)).into_owned();
    Ok(reduced.determinant())
}

/// Solve `P_H v = sum_{e in B} a_v(e, B) P_H e` for the coefficient vector
/// `zeta^v_B = sum_{e in B} a_v(e, B) e`, returned on the full ground set
/// with zeros off `B`. Errors unless `{P_H e : e in B}` is a basis of `H`.
pub fn kirchhoff_vector(subspace: &Subspace, v: &CVec, base: Mask) -> Result<CVec> {
    let n = subspace.ground().size();
    if v.nrows() != n {
        return Err(Error::Shape(format!(
            "vector has {} entries but the ground set has {n} elements",
            v.nrows()
        )));
    }
    if base & !subspace.ground().full_mask() != 0 {
        return Err(Error::UnknownLabel("base outside the ground set".into()));
    }
    let idx: Vec<usize> = bits(base).collect();
    if idx.len() != subspace.dim() {
        return Err(Error::Singular(format!(
            "base has {} elements but the subspace has dimension {}",
            idx.len(),
            subspace.dim()
        )));
    }
    let proj = subspace.projection_matrix();
    let system = CMat::from_fn(n, idx.len(), |r, k| proj[(r, idx[k])]);
    if crate::linalg::orthonormal_columns(&system, crate::linalg::RANK_TOL).ncols() != idx.len() {
        return Err(Error::Singular(
            "projected base vectors are linearly dependent".into(),
        ));
    }
    let target = &proj * v;
    let coeffs = least_squares(&system, &target)?;
    let residual = &system * &coeffs - &target;
    if residual.iter().map(|z| z.norm()).fold(0.0, f64::max) > 1e-8 {
        return Err(Error::Singular(
            "projected base vectors do not span the subspace".into(),
        ));
    }
    let mut zeta = CVec::zeros(n);
    for (k, &e) in idx.iter().enumerate() {
        zeta[e] = coeffs[k];
    }
    Ok(zeta)
}

/// Average of `zeta^v_B` over the projection measure on bases; equals
/// `P_H v`, and the agreement is checked to 1e-8 before returning.
pub fn expected_kirchhoff(subspace: &Subspace, v: &CVec) -> Result<CVec> {
    let n = subspace.ground().size();
    if n > KIRCHHOFF_CAP {
        return Err(Error::EnumerationCap { size: n, cap: KIRCHHOFF_CAP });
    }
    let table = enumerate(&projection_kernel(subspace))?;
    let r = subspace.dim();
    let mut acc = CVec::zeros(n);
    for (mask, &p) in table.masses().iter().enumerate() {
        if p <= SUPPORT_EPS || (mask as Mask).count_ones() as usize != r {
            continue;
        }
        let zeta = kirchhoff_vector(subspace, v, mask as Mask)?;
        acc += zeta * c(p, 0.0);
    }
    let expected = subspace.projection_matrix() * v;
    let gap = max_abs(&CMat::from_fn(n, 1, |i, _| acc[i] - expected[i]));
    if gap > 1e-8 {
        return Err(Error::Invalid(format!(
            "base-averaged current vector misses its projection by {gap:.3e}"
        )));
    }
    Ok(acc)
}

/// Conditional Kirchhoff identity: with `S = F intersect B` pinned, the
/// projection of `e` onto `H^F_S = (H + [F minus S]) inter [F]-perp` equals
/// the conditional expectation of `zeta^e_B` pushed off `F`. Both sides are
/// computed independently, compared to 1e-7, and the subspace side is
/// returned.
pub fn conditioned_kirchhoff(
    subspace: &Subspace,
    f_mask: Mask,
    s_mask: Mask,
    element: usize,
) -> Result<CVec> {
    let ground = subspace.ground();
    let n = ground.size();
    if n > CONDITIONED_KIRCHHOFF_CAP {
        return Err(Error::EnumerationCap { size: n, cap: CONDITIONED_KIRCHHOFF_CAP });
    }
    if s_mask & !f_mask != 0 {
        return Err(Error::InvalidArgument("S must be a subset of F".into()));
    }
    if element >= n || f_mask & (1 << element) != 0 {
        return Err(Error::InvalidArgument(
            "the probed element must lie outside F".into(),
        ));
    }
    if f_mask & !ground.full_mask() != 0 {
        return Err(Error::UnknownLabel("F outside the ground set".into()));
    }

    let conditioned = subspace
        .sum(&Subspace::coordinate(ground.clone(), f_mask & !s_mask))?
        .intersect(&Subspace::coordinate(ground.clone(), f_mask).complement())?;
    let left = conditioned.projection_matrix().column(element).into_owned();

    let table = enumerate(&projection_kernel(subspace))?;
    let r = subspace.dim();
    let mut total = 0.0;
    let mut acc = CVec::zeros(n);
    let mut unit = CVec::zeros(n);
    unit[element] = c(1.0, 0.0);
    for (mask, &p) in table.masses().iter().enumerate() {
        let mask = mask as Mask;
        if mask & f_mask != s_mask {
            continue;
        }
        total += p;
        if p <= SUPPORT_EPS || mask.count_ones() as usize != r {
            continue;
        }
        acc += kirchhoff_vector(subspace, &unit, mask)? * c(p, 0.0);
    }
    if total <= crate::kernels::DEFAULT_TOLERANCE {
        return Err(Error::ImpossibleEvent { prob: total, tol: crate::kernels::DEFAULT_TOLERANCE });
    }
    acc /= c(total, 0.0);
    for i in bits(f_mask) {
        acc[i] = c(0.0, 0.0);
    }

    let gap = (0..n).map(|i| (left[i] - acc[i]).norm()).fold(0.0, f64::max);
    if gap > 1e-7 {
        return Err(Error::Invalid(format!(
            "conditional current identity fails by {gap:.3e}"
        )));
    }
    Ok(left)
}

/// Expected current vectors keyed by edge index for every edge at once.
pub fn transfer_current_columns(kernel: &Kernel) -> BTreeMap<usize, CVec> {
    let mut out = BTreeMap::new();
    for e in 0..kernel.size() {
        out.insert(e, kernel.entries().column(e).into_owned());
    }
    out
}
