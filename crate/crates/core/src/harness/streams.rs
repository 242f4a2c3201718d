//! Named random streams. Each purpose gets its own ChaCha stream under the
//! run seed, so adding draws to one purpose never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Population and recruited tasks.
    Environment,
    EvalTasks,
    /// Arm choices of the policy under test.
    Policy,
    /// Arm choices of the paired oracle.
    OraclePolicy,
    /// Seeds the meta-posterior's own generator.
    Posterior,
    EvalPolicy,
    /// Histogram draws for the true conditional at one grid context.
    OracleTable(usize),
    /// Reward noise for one user, shared by both paired runs.
    Reward(usize),
    EvalReward(usize),
}

impl Stream {
    fn id(self) -> u64 {
        const BLOCK: u64 = 1 << 32;
        match self {
            Stream::Environment => 1,
            Stream::EvalTasks => 2,
            Stream::Policy => 3,
            Stream::OraclePolicy => 4,
            Stream::Posterior => 5,
            Stream::EvalPolicy => 6,
            Stream::OracleTable(c) => BLOCK + c as u64,
            Stream::Reward(u) => 2 * BLOCK + u as u64,
            Stream::EvalReward(u) => 3 * BLOCK + u as u64,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
