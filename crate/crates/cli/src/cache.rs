use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use spgc::data_io::DatasetBundle;
use spgc::propagation::cache_file_name;
use spgc::{DiffusionCache, OperatorKind, PropagationOperator};

/// Where caches live: `--cache-dir`, else `$SPGC_CACHE_DIR`, else
/// `<dataset>/cache`.
pub fn cache_dir(explicit: Option<&Path>, data: &Path) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or_else(|| data.join("cache"))
}

pub struct Obtained {
    pub cache: DiffusionCache,
    pub path: Option<PathBuf>,
    pub built: bool,
}

fn check(cache: &DiffusionCache, bundle: &DatasetBundle, op: OperatorKind, k: usize, path: &Path) -> Result<()> {
    let g = &bundle.graph;
    if cache.operator() != op || cache.k() != k || cache.n_nodes() != g.n() || cache.feature_dim() != g.feature_dim() {
        bail!("cache {} does not match ({}, k = {k}, n = {}, c = {})", path.display(), op, g.n(), g.feature_dim());
    }
    Ok(())
}

/// Loads a persisted cache for `(dataset, op, k)` if one exists (full or
/// labeled-rows only), otherwise builds a labeled-rows cache and, unless
/// `persist` is false, stores it for next time.
pub fn obtain(bundle: &DatasetBundle, op: OperatorKind, k: usize, dir: &Path, persist: bool) -> Result<Obtained> {
    for labeled in [false, true] {
        let path = dir.join(cache_file_name(&bundle.name, op, k, labeled));
        if path.is_file() {
            let cache = DiffusionCache::load(&path).with_context(|| format!("loading cache {}", path.display()))?;
            check(&cache, bundle, op, k, &path)?;
            return Ok(Obtained { cache, path: Some(path), built: false });
        }
    }
    let g = &bundle.graph;
    let p = PropagationOperator::from_graph(op, g);
    let cache = DiffusionCache::build_for_rows(&p, g.features(), k, &g.splits().labeled_nodes())?;
    let path = if persist {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(cache_file_name(&bundle.name, op, k, cache.rows().is_some()));
        cache.save(&path).with_context(|| format!("saving cache {}", path.display()))?;
        Some(path)
    } else {
        None
    };
    Ok(Obtained { cache, path, built: true })
}
