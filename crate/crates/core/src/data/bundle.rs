//! Graph bundle directory.
//!
//! | file | content |
//! |---|---|
//! | `graph.tsv` | `u<TAB>v` per undirected edge, `u < v`, sorted, 0-based |
//! | `features.tsv` | line `i` holds node `i`'s features, tab separated |
//! | `labels.tsv` | line `i` holds node `i`'s class, `-1` when unlabeled |
//! | `meta.json` | `{n, c_i, num_classes, class_names}` |
//! | `splits.json` | optional `{train, val, test}` |
//! | `checksums.json` | SHA-256 hex of every other file |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SplitMask;
use crate::error::{Error, Result};
use crate::graph::{binary_adjacency, build_normalized_adjacency, CsrMatrix, LabelVector};
use crate::matrix::FeatureMatrix;

const GRAPH: &str = "graph.tsv";
const FEATURES: &str = "features.tsv";
const LABELS: &str = "labels.tsv";
const META: &str = "meta.json";
const SPLITS: &str = "splits.json";
const CHECKSUMS: &str = "checksums.json";

#[derive(Clone, Debug, PartialEq)]
pub struct GraphBundle {
    /// Undirected edges as `(u, v)` with `u < v`, sorted, no duplicates.
    pub edges: Vec<(usize, usize)>,
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub class_names: Vec<String>,
    pub split: Option<SplitMask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Meta {
    n: usize,
    c_i: usize,
    num_classes: usize,
    class_names: Vec<String>,
}

impl GraphBundle {
    /// Canonicalizes the edge list and checks every invariant.
    pub fn new(
        edges: &[(usize, usize)],
        features: FeatureMatrix,
        labels: LabelVector,
        class_names: Vec<String>,
        split: Option<SplitMask>,
    ) -> Result<Self> {
        let n = features.n_rows();
        if labels.len() != n {
            return Err(Error::shape(format!("{} labels for {n} feature rows", labels.len())));
        }
        if class_names.len() != labels.num_classes() {
            return Err(Error::shape(format!(
                "{} class names for {} classes",
                class_names.len(),
                labels.num_classes()
            )));
        }
        if let Some(s) = &split {
            s.validate(n)?;
        }
        let edges = crate::graph::canonical_edges(edges, n)?.into_iter().collect();
        Ok(GraphBundle {
            edges,
            features,
            labels,
            class_names,
            split,
        })
    }

    pub fn n(&self) -> usize {
        self.features.n_rows()
    }

    pub fn c_in(&self) -> usize {
        self.features.n_cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    pub fn normalized_adjacency(&self) -> Result<CsrMatrix> {
        build_normalized_adjacency(&self.edges, self.n())
    }

    pub fn binary_adjacency(&self) -> Result<CsrMatrix> {
        binary_adjacency(&self.edges, self.n())
    }

    /// Copy of the features with every row scaled to unit L1 norm (zero rows kept).
    pub fn row_normalized_features(&self) -> FeatureMatrix {
        let mut x = self.features.clone();
        x.normalize_rows_l1();
        x
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_bundle(bundle: &GraphBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(&str, String)> = Vec::new();

    let mut graph = String::new();
    for &(u, v) in &bundle.edges {
        graph.push_str(&format!("{u}\t{v}\n"));
    }
    files.push((GRAPH, graph));

    let mut features = String::new();
    for row in bundle.features.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        features.push_str(&line.join("\t"));
        features.push('\n');
    }
    files.push((FEATURES, features));

    let mut labels = String::new();
    for l in bundle.labels.as_slice() {
        match l {
            Some(c) => labels.push_str(&format!("{c}\n")),
            None => labels.push_str("-1\n"),
        }
    }
    files.push((LABELS, labels));

    let meta = Meta {
        n: bundle.n(),
        c_i: bundle.c_in(),
        num_classes: bundle.num_classes(),
        class_names: bundle.class_names.clone(),
    };
    files.push((META, serde_json::to_string_pretty(&meta)? + "\n"));
    match &bundle.split {
        Some(split) => files.push((SPLITS, serde_json::to_string(split)? + "\n")),
        None => {
            if dir.join(SPLITS).exists() {
                fs::remove_file(dir.join(SPLITS))?;
            }
        }
    }

    let mut sums = BTreeMap::new();
    for (name, content) in &files {
        fs::write(dir.join(name), content)?;
        sums.insert(name.to_string(), sha256_hex(content.as_bytes()));
    }
    fs::write(dir.join(CHECKSUMS), serde_json::to_string_pretty(&sums)? + "\n")?;
    Ok(())
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    Ok(fs::read(path)?)
}

fn utf8<'a>(dir: &Path, name: &str, bytes: &'a [u8]) -> Result<&'a str> {
    std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        path: dir.join(name),
        line: 0,
        msg: format!("not UTF-8: {e}"),
    })
}

/// Loads and validates a bundle. Shapes are checked before checksums so a
/// truncated file reports which part is short.
pub fn load_bundle(dir: &Path) -> Result<GraphBundle> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let meta_bytes = read(dir, META)?;
    let graph_bytes = read(dir, GRAPH)?;
    let feature_bytes = read(dir, FEATURES)?;
    let label_bytes = read(dir, LABELS)?;
    let sum_bytes = read(dir, CHECKSUMS)?;
    let split_bytes = if dir.join(SPLITS).is_file() {
        Some(read(dir, SPLITS)?)
    } else {
        None
    };

    let meta: Meta = serde_json::from_slice(&meta_bytes)?;
    if meta.class_names.len() != meta.num_classes {
        return Err(Error::shape(format!(
            "meta.json lists {} class names for {} classes",
            meta.class_names.len(),
            meta.num_classes
        )));
    }

    let features = parse_features(dir, utf8(dir, FEATURES, &feature_bytes)?, meta.n, meta.c_i)?;
    let labels = parse_labels(dir, utf8(dir, LABELS, &label_bytes)?, meta.n, meta.num_classes)?;
    let edges = parse_edges(dir, utf8(dir, GRAPH, &graph_bytes)?, meta.n)?;
    let split: Option<SplitMask> = match &split_bytes {
        Some(b) => Some(serde_json::from_slice(b)?),
        None => None,
    };

    let sums: BTreeMap<String, String> = serde_json::from_slice(&sum_bytes)?;
    let mut present = vec![
        (META, &meta_bytes),
        (GRAPH, &graph_bytes),
        (FEATURES, &feature_bytes),
        (LABELS, &label_bytes),
    ];
    if let Some(b) = &split_bytes {
        present.push((SPLITS, b));
    }
    for (name, bytes) in present {
        let expected = sums
            .get(name)
            .ok_or_else(|| Error::Format(format!("checksums.json has no entry for {name}")))?;
        if !expected.eq_ignore_ascii_case(&sha256_hex(bytes)) {
            return Err(Error::Checksum(name.to_string()));
        }
    }

    let bundle = GraphBundle::new(&edges, features, labels, meta.class_names, split)?;
    if bundle.edges.len() != edges.len() {
        return Err(Error::Format("graph.tsv contains duplicate or self-loop edges".into()));
    }
    Ok(bundle)
}

fn parse_err(dir: &Path, name: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: dir.join(name),
        line,
        msg: msg.into(),
    }
}

fn parse_features(dir: &Path, text: &str, n: usize, c: usize) -> Result<FeatureMatrix> {
    let mut data = Vec::with_capacity(n * c);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if rows == n {
            return Err(Error::shape(format!("features.tsv has more than {n} rows")));
        }
        let before = data.len();
        if c > 0 {
            for tok in line.split('\t') {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(dir, FEATURES, i + 1, format!("bad number {tok:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(dir, FEATURES, i + 1, "non-finite feature"));
                }
                data.push(v);
            }
        }
        if data.len() - before != c {
            return Err(Error::shape(format!(
                "features.tsv line {} has {} values, meta.json says {c}",
                i + 1,
                data.len() - before
            )));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::shape(format!("features.tsv has {rows} rows, meta.json says {n}")));
    }
    FeatureMatrix::from_vec(n, c, data)
}

fn parse_labels(dir: &Path, text: &str, n: usize, num_classes: usize) -> Result<LabelVector> {
    let labels = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let v: i64 = line
                .trim()
                .parse()
                .map_err(|_| parse_err(dir, LABELS, i + 1, format!("bad label {line:?}")))?;
            match v {
                -1 => Ok(None),
                v if v >= 0 && (v as u64) < num_classes as u64 => Ok(Some(v as usize)),
                v => Err(parse_err(dir, LABELS, i + 1, format!("label {v} out of range"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != n {
        return Err(Error::shape(format!("labels.tsv has {} rows, meta.json says {n}", labels.len())));
    }
    LabelVector::new(labels, num_classes)
}

fn parse_edges(dir: &Path, text: &str, n: usize) -> Result<Vec<(usize, usize)>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let bad = || parse_err(dir, GRAPH, i + 1, format!("expected `u<TAB>v`, got {line:?}"));
            let (u, v) = line.split_once('\t').ok_or_else(bad)?;
            let u: usize = u.parse().map_err(|_| bad())?;
            let v: usize = v.parse().map_err(|_| bad())?;
            if u >= n || v >= n {
                return Err(parse_err(dir, GRAPH, i + 1, format!("endpoint outside [0, {n})")));
            }
            Ok((u, v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> GraphBundle {
        let x = FeatureMatrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 7.0], vec![0.0, 1e300]])
            .unwrap();
        let labels = LabelVector::new(vec![Some(0), None, Some(1)], 2).unwrap();
        GraphBundle::new(&[(1, 0), (2, 1), (0, 1)], x, labels, vec!["a".into(), "b".into()], None)
            .unwrap()
    }

    #[test]
    fn edges_are_canonical() {
        assert_eq!(toy().edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn round_trip_without_split() {
        let dir = tempfile::tempdir().unwrap();
        let b = toy();
        save_bundle(&b, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back, b);
        assert!(back.split.is_none());
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&toy(), dir.path()).unwrap();
        let path = dir.path().join(LABELS);
        fs::write(&path, "1\n-1\n1\n").unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Checksum(_))));
    }

    #[test]
    fn missing_meta_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&toy(), dir.path()).unwrap();
        fs::remove_file(dir.path().join(META)).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::MissingFile(_))));
    }
}
