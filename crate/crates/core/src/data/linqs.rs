//! LINQS citation format: `<id> <f_0> … <f_{C-1}> <class>` per node and
//! `<cited> <citing>` per edge, whitespace separated.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::data::GraphBundle;
use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::matrix::FeatureMatrix;

/// Edges that were discarded while loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinqsWarnings {
    /// Edges naming an id absent from the content file.
    pub dangling_edges: usize,
    pub self_loops: usize,
    /// Repeats of an already seen undirected edge.
    pub duplicate_edges: usize,
}

/// Nodes and classes are indexed in order of first appearance.
pub fn load_linqs(content_path: &Path, cites_path: &Path) -> Result<(GraphBundle, LinqsWarnings)> {
    let content = read_text(content_path)?;
    let cites = read_text(cites_path)?;

    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut class_index: HashMap<&str, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut width: Option<usize> = None;

    for (i, line) in content.lines().enumerate() {
        let parse_err = |msg: String| Error::Parse {
            path: content_path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 2 {
            return Err(parse_err("expected an id and a class".into()));
        }
        let (id, rest) = (tokens[0], &tokens[1..]);
        let (class, feats) = rest.split_last().expect("at least one token");
        match width {
            None => width = Some(feats.len()),
            Some(w) if w != feats.len() => {
                return Err(Error::Format(format!(
                    "{}:{}: {} features, earlier lines have {w}",
                    content_path.display(),
                    i + 1,
                    feats.len()
                )))
            }
            Some(_) => {}
        }
        if ids.insert(id, ids.len()).is_some() {
            return Err(parse_err(format!("node id {id:?} appears twice")));
        }
        for f in feats {
            let v: f64 = f.parse().map_err(|_| parse_err(format!("bad feature value {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite feature value {f:?}")));
            }
            data.push(v);
        }
        let next = class_index.len();
        let c = *class_index.entry(class).or_insert_with(|| {
            class_names.push(class.to_string());
            next
        });
        labels.push(c);
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::Format(format!("{} lists no nodes", content_path.display())));
    }

    let mut warnings = LinqsWarnings::default();
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for (i, line) in cites.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => continue,
            [a, b] => {
                let (Some(&u), Some(&v)) = (ids.get(a), ids.get(b)) else {
                    warnings.dangling_edges += 1;
                    continue;
                };
                if u == v {
                    warnings.self_loops += 1;
                } else if seen.insert((u.min(v), u.max(v))) {
                    edges.push((u, v));
                } else {
                    warnings.duplicate_edges += 1;
                }
            }
            _ => {
                return Err(Error::Parse {
                    path: cites_path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected two ids, got {} tokens", tokens.len()),
                })
            }
        }
    }
    if warnings.dangling_edges > 0 {
        log::warn!(
            "{}: dropped {} edges with unknown endpoints",
            cites_path.display(),
            warnings.dangling_edges
        );
    }

    let features = FeatureMatrix::from_vec(n, width.unwrap_or(0), data)?;
    let labels = LabelVector::dense(labels, class_names.len())?;
    let bundle = GraphBundle::new(&edges, features, labels, class_names, None)?;
    Ok((bundle, warnings))
}

/// Looks for `<name>.content` and `<name>.cites` in `dir`.
pub fn load_linqs_dir(dir: &Path, name: &str) -> Result<(GraphBundle, LinqsWarnings)> {
    load_linqs(
        &dir.join(format!("{name}.content")),
        &dir.join(format!("{name}.cites")),
    )
}

fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}
