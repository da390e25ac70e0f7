//! File formats: kernels and subspaces as JSON matrices, graphs as JSON
//! vertex and edge lists, distribution tables as JSON or CSV.
//!
//! Field names are part of the external contract and stay fixed. Matrix
//! files round-trip: anything a subcommand writes can be fed back in.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graphs::{Graph, GraphEdge};
use crate::ground::{bits, Ground};
use crate::kernels::{Kernel, Subspace};
use crate::linalg::{c, CMat};
use crate::measure::DistributionTable;
use crate::{Error, Result};

/// Version stamp carried by every report the CLI emits.
pub const FORMAT_VERSION: u32 = 1;

/// A labelled complex matrix: kernels are square, subspace bases are
/// `n x d` with one row per ground element.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixFile {
    pub labels: Vec<String>,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphEdgeFile {
    pub id: String,
    pub tail: String,
    pub head: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: Vec<String>,
    pub edges: Vec<GraphEdgeFile>,
}

fn complex_matrix(file: &MatrixFile, rows: usize) -> Result<CMat> {
    if file.re.len() != rows {
        return Err(Error::Shape(format!(
            "field `re` has {} rows, expected {rows} from `labels`",
            file.re.len()
        )));
    }
    let cols = file.re.first().map_or(0, Vec::len);
    for (i, row) in file.re.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Shape(format!(
                "field `re` row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
    }
    if cols == 0 {
        return Err(Error::Shape("field `re` has no columns".into()));
    }
    if let Some(im) = &file.im {
        if im.len() != rows {
            return Err(Error::Shape(format!(
                "field `im` has {} rows, expected {rows}",
                im.len()
            )));
        }
        for (i, row) in im.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Shape(format!(
                    "field `im` row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
        }
    }
    Ok(CMat::from_fn(rows, cols, |r, col| {
        let re = file.re[r][col];
        let im = file.im.as_ref().map_or(0.0, |m| m[r][col]);
        c(re, im)
    }))
}

fn parse_matrix_file(path: &Path) -> Result<MatrixFile> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn kernel_from_file(file: &MatrixFile) -> Result<Kernel> {
    let n = file.labels.len();
    let entries = complex_matrix(file, n)?;
    if entries.ncols() != n {
        return Err(Error::Shape(format!(
            "kernel must be square: {n} labels but {} columns",
            entries.ncols()
        )));
    }
    Kernel::new(Ground::new(file.labels.clone())?, entries, file.tolerance)
}

pub fn read_kernel(path: &Path) -> Result<Kernel> {
    kernel_from_file(&parse_matrix_file(path)?)
}

pub fn kernel_to_file(kernel: &Kernel) -> MatrixFile {
    let entries = kernel.entries();
    let any_imaginary = entries.iter().any(|z| z.im != 0.0);
    MatrixFile {
        labels: kernel.ground().labels().to_vec(),
        re: (0..entries.nrows())
            .map(|r| (0..entries.ncols()).map(|cl| entries[(r, cl)].re).collect())
            .collect(),
        im: any_imaginary.then(|| {
            (0..entries.nrows())
                .map(|r| (0..entries.ncols()).map(|cl| entries[(r, cl)].im).collect())
                .collect()
        }),
        tolerance: Some(kernel.tolerance()),
    }
}

pub fn subspace_from_file(file: &MatrixFile) -> Result<Subspace> {
    let n = file.labels.len();
    let span = complex_matrix(file, n)?;
    Subspace::new(Ground::new(file.labels.clone())?, span)
}

pub fn read_subspace(path: &Path) -> Result<Subspace> {
    subspace_from_file(&parse_matrix_file(path)?)
}

pub fn subspace_to_file(subspace: &Subspace) -> MatrixFile {
    let basis = subspace.basis();
    let any_imaginary = basis.iter().any(|z| z.im != 0.0);
    MatrixFile {
        labels: subspace.ground().labels().to_vec(),
        re: (0..basis.nrows())
            .map(|r| (0..basis.ncols()).map(|cl| basis[(r, cl)].re).collect())
            .collect(),
        im: any_imaginary.then(|| {
            (0..basis.nrows())
                .map(|r| (0..basis.ncols()).map(|cl| basis[(r, cl)].im).collect())
                .collect()
        }),
        tolerance: None,
    }
}

pub fn graph_from_file(file: &GraphFile) -> Result<Graph> {
    let edges = file
        .edges
        .iter()
        .map(|e| {
            GraphEdge::new(
                e.id.clone(),
                e.tail.clone(),
                e.head.clone(),
                e.w.unwrap_or(1.0),
            )
        })
        .collect();
    Graph::new(file.vertices.clone(), edges)
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path)?;
    let file: GraphFile = serde_json::from_str(&text)?;
    graph_from_file(&file)
}

fn subset_labels(ground: &Ground, mask: u64) -> String {
    bits(mask)
        .map(|i| ground.label(i).to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Rows ordered by subset bitmask.
pub fn distribution_json(table: &DistributionTable) -> serde_json::Value {
    let ground = table.ground();
    let entries: Vec<serde_json::Value> = (0..table.masses().len() as u64)
        .map(|m| {
            serde_json::json!({
                "mask": m,
                "subset": ground.labels_of_mask(m),
                "probability": table.prob(m),
            })
        })
        .collect();
    serde_json::json!({
        "version": FORMAT_VERSION,
        "labels": ground.labels(),
        "entries": entries,
    })
}

pub fn distribution_csv(table: &DistributionTable) -> String {
    let mut out = String::from("mask,subset-labels,probability\n");
    for m in 0..table.masses().len() as u64 {
        out.push_str(&format!(
            "{m},{},{}\n",
            subset_labels(table.ground(), m),
            table.prob(m)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::zoo;
    use crate::measure::enumerate;

    fn tmp(name: &str, contents: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!("detprob-io-{name}"));
        fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn kernel_round_trips() {
        let k = zoo::renewal_truncated(3, 0.4).unwrap();
        let file = kernel_to_file(&k);
        let text = serde_json::to_string(&file).unwrap();
        let path = tmp("roundtrip.json", &text);
        let back = read_kernel(&path).unwrap();
        assert_eq!(back.ground().labels(), k.ground().labels());
        assert!((back.entries() - k.entries()).norm() < 1e-15);
        assert_eq!(back.tolerance(), k.tolerance());
    }

    #[test]
    fn real_kernel_omits_imaginary_block() {
        let k = zoo::bernoulli(2, 0.5).unwrap();
        let file = kernel_to_file(&k);
        assert!(file.im.is_none());
        let text = serde_json::to_string(&file).unwrap();
        assert!(!text.contains("\"im\""));
    }

    #[test]
    fn ragged_rows_are_diagnosed() {
        let path = tmp(
            "ragged.json",
            r#"{"labels":["a","b"],"re":[[1.0,0.0],[0.0]]}"#,
        );
        let err = read_kernel(&path).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn imaginary_shape_mismatch_is_diagnosed() {
        let path = tmp(
            "imshape.json",
            r#"{"labels":["a","b"],"re":[[0.5,0.0],[0.0,0.5]],"im":[[0.0,0.0]]}"#,
        );
        let err = read_kernel(&path).unwrap_err();
        assert!(err.to_string().contains("`im`"), "{err}");
    }

    #[test]
    fn non_square_kernel_is_rejected() {
        let path = tmp(
            "wide.json",
            r#"{"labels":["a","b"],"re":[[0.5,0.0,0.0],[0.0,0.5,0.0]]}"#,
        );
        assert!(read_kernel(&path).is_err());
    }

    #[test]
    fn syntax_errors_surface_as_json_errors() {
        let path = tmp("syntax.json", "{not json");
        match read_kernel(&path).unwrap_err() {
            Error::Json(_) => {}
            other => panic!("expected a JSON error, got {other}"),
        }
    }

    #[test]
    fn subspace_file_preserves_the_span() {
        let g = crate::graphs::Graph::complete(3).unwrap();
        let sub = crate::graphs::star_space(&g).unwrap();
        let file = subspace_to_file(&sub);
        let text = serde_json::to_string(&file).unwrap();
        let path = tmp("subspace.json", &text);
        let back = read_subspace(&path).unwrap();
        assert!((back.projection_matrix() - sub.projection_matrix()).norm() < 1e-10);
    }

    #[test]
    fn graph_defaults_weights_to_one() {
        let text = r#"{
            "vertices": ["u", "v", "w"],
            "edges": [
                {"id": "a", "tail": "u", "head": "v"},
                {"id": "b", "tail": "v", "head": "w", "w": 2.0},
                {"id": "c", "tail": "w", "head": "u"}
            ]
        }"#;
        let path = tmp("graph.json", text);
        let graph = read_graph(&path).unwrap();
        assert_eq!(graph.edge(0).2, 1.0);
        assert_eq!(graph.edge(1).2, 2.0);
        let count = crate::graphs::tree_count(&graph).unwrap();
        assert!((count - 5.0).abs() < 1e-9);
    }

    #[test]
    fn distribution_csv_golden() {
        let k = zoo::bernoulli(2, 0.5).unwrap();
        let law = enumerate(&k).unwrap();
        let csv = distribution_csv(&law);
        let expected = "mask,subset-labels,probability\n\
                        0,,0.25\n\
                        1,0,0.25\n\
                        2,1,0.25\n\
                        3,0 1,0.25\n";
        assert_eq!(csv, expected);
    }

    #[test]
    fn distribution_json_carries_version() {
        let k = zoo::bernoulli(1, 0.25).unwrap();
        let law = enumerate(&k).unwrap();
        let value = distribution_json(&law);
        assert_eq!(value["version"], FORMAT_VERSION);
        assert_eq!(value["entries"][1]["probability"], 0.25);
    }
}
