use fsvjj_core::engine::{BlockExecutor, Moments};
use rayon::prelude::*;

/// Runs blocks on the rayon pool. Results come back in block order, so the
/// merged statistics match [`fsvjj_core::engine::Sequential`] bit for bit.
#[derive(Clone, Copy, Debug, Default)]
pub struct Parallel;

impl BlockExecutor for Parallel {
    fn run_blocks(&self, n_blocks: usize, job: &(dyn Fn(usize) -> Moments + Sync)) -> Vec<Moments> {
        (0..n_blocks).into_par_iter().map(job).collect()
    }
}
