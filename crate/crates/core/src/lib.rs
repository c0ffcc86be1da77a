//! Permutation-invariant training losses.
//!
//! * [`assignment`]: exact PIT by enumeration and by Kuhn-Munkres, plus the
//!   Birkhoff-von Neumann decomposition.
//! * [`sinkhorn`]: log-domain Sinkhorn balancing and the SinkPIT loss.
//! * [`gradient`]: `dL/dC` of SinkPIT through the unrolled iteration.
//! * [`probpit`]: the log-semiring relaxation over all permutations.
//! * [`signal`] and [`wav`]: SI-SDR costs, mixing, audio I/O.
//! * [`bench`] and [`demix`]: the runtime comparison and a toy training run.

pub mod assignment;
pub mod bench;
pub mod demix;
pub mod error;
pub mod gradient;
pub mod matrix;
pub mod probpit;
pub mod signal;
pub mod sinkhorn;
pub mod wav;

pub use assignment::{birkhoff_decompose, brute_force_pit, hungarian, round_plan, AssignmentResult, BirkhoffTerm};
pub use error::{Error, Result};
pub use gradient::{finite_diff_grad, sinkpit_value_and_grad, GradResult, GradientMode};
pub use matrix::{
    check_doubly_stochastic, entropy, frobenius_inner, permutation_to_matrix, CostMatrix, LogPlan, Permutation,
    SquareMatrix, TransportPlan,
};
pub use probpit::{log_semiring_add, probpit_loss, PermutationPrior};
pub use signal::{pairwise_cost_matrix, si_sdr, Waveform};
pub use sinkhorn::{
    anneal_beta, batch_sinkpit_loss, entropic_objective, sinkhorn_iterate, sinkpit_loss, AnnealSchedule, SinkhornConfig,
};
