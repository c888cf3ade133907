//! Randomized verification of the pointwise curvature inequalities.

mod batch;
mod checkers;
mod identities;
mod sampler;
mod search;

pub use batch::{run_batch, BatchConfig, BatchOutcome, BatchSummary};
pub use checkers::{
    check_ab_estimates, check_bochner_f, check_bochner_hat_a, check_f_evolution_lower, check_gradient_combined,
    check_gradient_q, check_reaction_combined, check_reaction_lower, check_reaction_upper, evaluate_lemma,
    inputs_hash, Lemma, SampleScalars, Side, SlackReport, SLACK_TOLERANCE,
};
pub use identities::{run_identity_suite, IdentityConfig, IdentityRow};
pub use sampler::{sample_pinched_jet, sample_pinched_point, Sampler};
pub use search::{violation_search, SearchConfig, SearchOutcome};

/// Deterministic per-block seed.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut x: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        x ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(x << 6).wrapping_add(x >> 2);
        x = splitmix(x);
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
