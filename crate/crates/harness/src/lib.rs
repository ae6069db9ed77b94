//! Experiment orchestration for `advaudio-core`: synthetic data, training runs, attack grid
//! searches with threshold-based selection, and report files.

pub mod dataset;
pub mod experiment;
pub mod report;
pub mod synth;

pub use dataset::{load_clips, split_clips, synthetic_clips};
pub use experiment::{run_all_to_target, run_grid_search, select_point, ExperimentReport, ExperimentSpec, Grid, PointReport, Selection};
pub use report::{emit_report, markdown, read_report, sha256_file};
pub use synth::{make_synthetic_dataset, synth_clip};

/// Caps the global rayon pool at `ADVAUDIO_THREADS` when set. Call once at startup.
pub fn init_thread_pool() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("ADVAUDIO_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("ADVAUDIO_THREADS must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n >= 1, "ADVAUDIO_THREADS must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
