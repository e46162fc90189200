use std::path::{Path, PathBuf};

use triple_score::pipeline::{run_ingest, run_train, PipelineConfig};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// Ingests and trains the shared fixture corpus into `workdir`.
pub fn trained_workdir(workdir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::from_file(&fixtures().join("pipeline.conf")).unwrap();
    cfg.workdir = workdir.to_path_buf();
    run_ingest(&cfg).unwrap();
    run_train(&cfg).unwrap();
    cfg
}
