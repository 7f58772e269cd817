//! Deterministic random streams.
//!
//! Monte Carlo work is cut into fixed-size blocks. Block `b` draws from a
//! ChaCha8 generator keyed by the master seed on stream `b`, so a parallel
//! run over blocks reproduces the sequential run bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Rows per Monte Carlo block.
pub const BLOCK_ROWS: usize = 16_384;

/// Generator for block `block` under `seed`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// `(block index, first row, row count)` for `count` rows.
pub fn blocks(count: usize) -> impl Iterator<Item = (u64, usize, usize)> + Clone {
    (0..count.div_ceil(BLOCK_ROWS)).map(move |b| {
        let start = b * BLOCK_ROWS;
        (b as u64, start, BLOCK_ROWS.min(count - start))
    })
}
