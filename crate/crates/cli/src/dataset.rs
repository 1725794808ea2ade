use ladder_core::data::{generate_synthetic, load_bundle, load_linqs_dir, make_split, GraphBundle, SplitMask};
use ladder_core::{CsrMatrix, Exec, FeatureMatrix};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub struct Dataset {
    pub bundle: GraphBundle,
    /// Input features, row-normalized if the config asks for it.
    pub x: FeatureMatrix,
    pub adj: CsrMatrix,
}

pub fn exec(cfg: &RunConfig) -> Exec {
    if cfg.deterministic {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

pub fn load_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let d = &cfg.data;
    let bundle = if let Some(dir) = &d.bundle {
        load_bundle(dir)?
    } else if let Some(l) = &d.linqs {
        let (bundle, warn) = load_linqs_dir(&l.dir, &l.name)?;
        if warn.dangling_edges + warn.self_loops + warn.duplicate_edges > 0 {
            log::warn!(
                "{}: dropped {} dangling, {} self-loop and {} duplicate citations",
                l.name,
                warn.dangling_edges,
                warn.self_loops,
                warn.duplicate_edges
            );
        }
        bundle
    } else if let Some(spec) = &d.synthetic {
        generate_synthetic(spec)?
    } else {
        return Err(CliError::usage("no data source configured"));
    };
    let x = if cfg.normalize_features { bundle.row_normalized_features() } else { bundle.features.clone() };
    let adj = bundle.normalized_adjacency()?;
    Ok(Dataset { bundle, x, adj })
}

impl Dataset {
    /// The bundle's own split unless a fresh one is requested or none ships with it.
    pub fn split(&self, cfg: &RunConfig) -> CliResult<SplitMask> {
        match (&self.bundle.split, cfg.resplit) {
            (Some(s), false) => Ok(s.clone()),
            _ => Ok(make_split(&self.bundle.labels, cfg.split)?),
        }
    }
}
