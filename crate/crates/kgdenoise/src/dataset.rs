//! Assemble a [`Dataset`] from the TSV files on disk.

use std::path::{Path, PathBuf};

use kgdenoise_core::harness::{Dataset, TrainConfig};
use kgdenoise_core::kg::{KgBuilder, KnowledgeGraph, SmoothingMap, TaskMode, UnmappedPolicy};

use crate::tsv::{self, FormatError};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Clone, Debug, Default)]
pub struct DataPaths {
    pub triples: PathBuf,
    pub types: Option<PathBuf>,
    pub smoothing: Option<PathBuf>,
    pub links: Option<PathBuf>,
    pub metapaths: Option<PathBuf>,
}

pub fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })
}

fn origin(path: &Path) -> String {
    path.display().to_string()
}

/// Types first, so entity ids follow the types file, then the triples.
pub fn load_graph(paths: &DataPaths) -> Result<KnowledgeGraph, LoadError> {
    let mut b = KgBuilder::new();
    if let Some(p) = &paths.types {
        tsv::parse_types(&mut b, &read(p)?, &origin(p))?;
    }
    tsv::parse_triples(&mut b, &read(&paths.triples)?, &origin(&paths.triples))?;
    Ok(b.build())
}

/// Without a smoothing file every relation keeps its own name.
pub fn load_smoothing(paths: &DataPaths) -> Result<SmoothingMap, LoadError> {
    match &paths.smoothing {
        Some(p) => Ok(tsv::parse_smoothing(&read(p)?, &origin(p), UnmappedPolicy::Strict)?),
        None => Ok(SmoothingMap::new(UnmappedPolicy::Keep)),
    }
}

/// Graph, smoothing, links and metapaths. `known_classes` pins the class
/// list of a non-binary task.
pub fn load_dataset(paths: &DataPaths, cfg: &TrainConfig, known_classes: Option<&[String]>) -> Result<Dataset, LoadError> {
    let kg = load_graph(paths)?;
    let smoothing = load_smoothing(paths)?;
    let (examples, class_names) = match &paths.links {
        Some(p) => {
            let t = tsv::parse_links(&kg, &read(p)?, &origin(p), cfg.task, known_classes)?;
            (t.examples, t.class_names)
        }
        None => (Vec::new(), Vec::new()),
    };
    let metapaths = match &paths.metapaths {
        Some(p) => Some(tsv::parse_metapaths(&read(p)?, &origin(p))?),
        None => None,
    };
    let num_classes = if cfg.task == TaskMode::Binary { 1 } else { class_names.len() };
    Ok(Dataset { kg, smoothing, examples, task: cfg.task, num_classes, class_names, metapaths })
}
