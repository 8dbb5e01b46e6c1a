//! File formats and graph loading.
//!
//! Formats:
//! * edges: whitespace-separated `src dst` lines, `#` comments
//! * labels: `node_id label_id` lines, `-1` marks unlabeled
//! * splits: three files of node ids, one per line
//! * features: binary `TRNF` (magic, LE u64 n, u64 f, n*f little-endian
//!   f32 row-major) or CSV fallback, sniffed by magic
//! * texts: UTF-8, one JSON string per line, line i = node i

use crate::error::{Error, Result};
use crate::graph::{NodeSplit, TextRichGraph, UNLABELED};
use crate::matrix::Matrix;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const FEATURE_MAGIC: &[u8; 4] = b"TRNF";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Data lines of a text file with `#` comments and blank lines stripped,
/// paired with their 1-based line numbers.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path)?;
    let mut lines = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push((idx + 1, trimmed.to_string()));
    }
    Ok(lines)
}

/// Reads an edge list. Ids are validated against `n` by the graph builder.
pub fn read_edges(path: &Path) -> Result<Vec<(u32, u32)>> {
    let mut edges = Vec::new();
    for (lineno, line) in data_lines(path)? {
        let mut it = line.split_whitespace();
        let (a, b) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(parse_err(path, lineno, "expected `src dst`")),
        };
        let u: u32 = a
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad node id `{a}`")))?;
        let v: u32 = b
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad node id `{b}`")))?;
        edges.push((u, v));
    }
    Ok(edges)
}

/// Reads `node_id label_id` lines into a dense label vector. Nodes absent
/// from the file stay unlabeled.
pub fn read_labels(path: &Path, n: usize) -> Result<Vec<i32>> {
    let mut labels = vec![UNLABELED; n];
    for (lineno, line) in data_lines(path)? {
        let mut it = line.split_whitespace();
        let (a, b) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(parse_err(path, lineno, "expected `node_id label_id`")),
        };
        let id: usize = a
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad node id `{a}`")))?;
        if id >= n {
            return Err(Error::OutOfRangeId { id: id as i64, n });
        }
        let label: i32 = b
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad label `{b}`")))?;
        labels[id] = label;
    }
    Ok(labels)
}

/// Reads one node id per line.
pub fn read_id_list(path: &Path, n: usize) -> Result<Vec<u32>> {
    let mut ids = Vec::new();
    for (lineno, line) in data_lines(path)? {
        let id: u32 = line
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad node id `{line}`")))?;
        if id as usize >= n {
            return Err(Error::OutOfRangeId { id: id as i64, n });
        }
        ids.push(id);
    }
    Ok(ids)
}

/// Reads a feature matrix, sniffing the binary magic and falling back to CSV.
pub fn read_features(path: &Path) -> Result<Matrix> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 4];
    let got = file.read(&mut magic)?;
    if got == 4 && &magic == FEATURE_MAGIC {
        read_features_binary(&mut file, path)
    } else {
        read_features_csv(path)
    }
}

fn read_features_binary(file: &mut File, path: &Path) -> Result<Matrix> {
    let mut header = [0u8; 16];
    file.read_exact(&mut header)
        .map_err(|_| parse_err(path, 0, "truncated feature header"))?;
    let n = u64::from_le_bytes(header[0..8].try_into().unwrap()) as usize;
    let f = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let count = n
        .checked_mul(f)
        .ok_or_else(|| parse_err(path, 0, "feature shape overflow"))?;
    let mut buf = vec![0u8; count * 4];
    file.read_exact(&mut buf)
        .map_err(|_| parse_err(path, 0, "truncated feature payload"))?;
    let mut data = Vec::with_capacity(count);
    for chunk in buf.chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Ok(Matrix::from_vec(n, f, data))
}

fn read_features_csv(path: &Path) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in data_lines(path)? {
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, lineno, "bad float in feature row"))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(path, lineno, "ragged feature row"));
            }
        }
        rows.push(row);
    }
    Ok(Matrix::from_rows(&rows))
}

/// Writes the binary feature format.
pub fn write_features_binary(path: &Path, features: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&(features.rows() as u64).to_le_bytes())?;
    w.write_all(&(features.cols() as u64).to_le_bytes())?;
    for &v in features.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one JSON string per line; line i belongs to node i.
pub fn read_texts(path: &Path, n: usize) -> Result<Vec<String>> {
    let file = File::open(path)?;
    let mut texts = Vec::with_capacity(n);
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let text: String = serde_json::from_str(&line)
            .map_err(|e| parse_err(path, idx + 1, format!("bad JSON string: {e}")))?;
        texts.push(text);
    }
    if texts.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "text lines {} != node count {}",
            texts.len(),
            n
        )));
    }
    Ok(texts)
}

pub fn write_texts(path: &Path, texts: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in texts {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Summary statistics reported after loading.
#[derive(Clone, Debug, serde::Serialize)]
pub struct GraphSummary {
    pub n: usize,
    pub feature_dim: usize,
    pub num_edges: usize,
    pub labeled_homophily: Option<f64>,
    pub num_labeled: usize,
}

impl GraphSummary {
    pub fn of(graph: &TextRichGraph) -> Self {
        GraphSummary {
            n: graph.n(),
            feature_dim: graph.feature_dim(),
            num_edges: graph.num_edges(),
            labeled_homophily: graph.labeled_subgraph_homophily(),
            num_labeled: graph.labels().iter().filter(|&&l| l != UNLABELED).count(),
        }
    }
}

/// Paths of one dataset on disk.
#[derive(Clone, Debug)]
pub struct DatasetPaths {
    pub features: std::path::PathBuf,
    pub edges: std::path::PathBuf,
    pub labels: std::path::PathBuf,
    pub train: std::path::PathBuf,
    pub val: std::path::PathBuf,
    pub test: std::path::PathBuf,
    pub texts: Option<std::path::PathBuf>,
}

impl DatasetPaths {
    /// Conventional file names under one dataset directory.
    pub fn in_dir(dir: &Path) -> Self {
        let texts = dir.join("texts.jsonl");
        DatasetPaths {
            features: dir.join("features.trnf"),
            edges: dir.join("edges.txt"),
            labels: dir.join("labels.txt"),
            train: dir.join("train.txt"),
            val: dir.join("val.txt"),
            test: dir.join("test.txt"),
            texts: texts.exists().then_some(texts),
        }
    }
}

/// Loads a full dataset, canonicalizes the graph, and validates the split.
pub fn load_graph(paths: &DatasetPaths) -> Result<(TextRichGraph, NodeSplit)> {
    let features = read_features(&paths.features)?;
    let n = features.rows();
    let edges = read_edges(&paths.edges)?;
    let labels = read_labels(&paths.labels, n)?;
    let num_classes = labels
        .iter()
        .filter(|&&l| l != UNLABELED)
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(1);
    let texts = match &paths.texts {
        Some(p) => Some(read_texts(p, n)?),
        None => None,
    };
    let graph = TextRichGraph::new(n, edges, features, labels, num_classes, texts)?;
    let split = NodeSplit::new(
        read_id_list(&paths.train, n)?,
        read_id_list(&paths.val, n)?,
        read_id_list(&paths.test, n)?,
        &graph,
    )?;
    Ok((graph, split))
}

/// Writes a dataset directory in the conventional layout.
pub fn write_dataset(
    dir: &Path,
    graph: &TextRichGraph,
    split: &NodeSplit,
    extra_labels: Option<(&str, &[i32])>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_features_binary(&dir.join("features.trnf"), graph.features())?;
    let mut w = BufWriter::new(File::create(dir.join("edges.txt"))?);
    for &(u, v) in graph.edges() {
        writeln!(w, "{} {}", u, v)?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("labels.txt"))?);
    for (i, &l) in graph.labels().iter().enumerate() {
        writeln!(w, "{} {}", i, l)?;
    }
    w.flush()?;
    for (name, ids) in [
        ("train.txt", &split.train),
        ("val.txt", &split.val),
        ("test.txt", &split.test),
    ] {
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        for id in ids {
            writeln!(w, "{}", id)?;
        }
        w.flush()?;
    }
    if let Some(texts) = graph.texts() {
        write_texts(&dir.join("texts.jsonl"), texts)?;
    }
    if let Some((name, labels)) = extra_labels {
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        for (i, &l) in labels.iter().enumerate() {
            writeln!(w, "{} {}", i, l)?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(path: &Path, contents: &str) {
        fs::write(path, contents).unwrap();
    }

    fn three_node_dataset(dir: &Path) -> DatasetPaths {
        write(&dir.join("edges.txt"), "# comment\n0 1\n1 2\n");
        write(&dir.join("labels.txt"), "0 0\n1 0\n2 -1\n");
        write(&dir.join("train.txt"), "0\n1\n");
        write(&dir.join("val.txt"), "");
        write(&dir.join("test.txt"), "2\n");
        let features = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        write_features_binary(&dir.join("features.trnf"), &features).unwrap();
        DatasetPaths {
            features: dir.join("features.trnf"),
            edges: dir.join("edges.txt"),
            labels: dir.join("labels.txt"),
            train: dir.join("train.txt"),
            val: dir.join("val.txt"),
            test: dir.join("test.txt"),
            texts: None,
        }
    }

    #[test]
    fn loads_three_node_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let paths = three_node_dataset(dir.path());
        let (graph, split) = load_graph(&paths).unwrap();
        assert_eq!(graph.n(), 3);
        assert_eq!(graph.num_edges(), 2);
        assert_eq!(graph.feature_dim(), 2);
        assert_eq!(split.train, vec![0, 1]);
        let summary = GraphSummary::of(&graph);
        assert_eq!(summary.num_labeled, 2);
        assert_eq!(summary.labeled_homophily, Some(1.0));
    }

    #[test]
    fn duplicate_edge_lines_collapse_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let paths = three_node_dataset(dir.path());
        write(&paths.edges, "0 1\n1 0\n");
        let (graph, _) = load_graph(&paths).unwrap();
        assert_eq!(graph.edges(), &[(0, 1)]);
    }

    #[test]
    fn out_of_range_label_id_errors() {
        let dir = tempfile::tempdir().unwrap();
        let paths = three_node_dataset(dir.path());
        write(&paths.labels, "99 0\n");
        let err = load_graph(&paths).unwrap_err();
        assert!(matches!(err, Error::OutOfRangeId { id: 99, .. }));
    }

    #[test]
    fn feature_dimension_mismatch_errors() {
        let dir = tempfile::tempdir().unwrap();
        let paths = three_node_dataset(dir.path());
        let features = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        write_features_binary(&paths.features, &features).unwrap();
        // 2 feature rows, but the label file references node 2.
        let err = load_graph(&paths).unwrap_err();
        assert!(matches!(err, Error::OutOfRangeId { .. }));
    }

    #[test]
    fn non_finite_feature_errors() {
        let dir = tempfile::tempdir().unwrap();
        let paths = three_node_dataset(dir.path());
        write(&paths.features, "1.0,2.0\nNaN,0.0\n3.0,4.0\n");
        let err = load_graph(&paths).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn csv_fallback_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write(&path, "1.0, 2.0\n3.0, 4.0\n");
        let m = read_features(&path).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn binary_feature_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.trnf");
        let m = Matrix::from_rows(&[vec![0.5, -1.25], vec![3.0, 0.0]]);
        write_features_binary(&path, &m).unwrap();
        assert_eq!(read_features(&path).unwrap(), m);
    }

    #[test]
    fn texts_roundtrip_and_length_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("texts.jsonl");
        let texts = vec!["[A] doc \"quoted\"".to_string(), "[B] two\nlines".to_string()];
        write_texts(&path, &texts).unwrap();
        assert_eq!(read_texts(&path, 2).unwrap(), texts);
        assert!(read_texts(&path, 3).is_err());
    }
}
