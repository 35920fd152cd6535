use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Independent substreams of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Noise = 1,
    Positions = 2,
    Amplitudes = 3,
    /// Random initializations for envelope runs; the repetition index is
    /// added to this base.
    Init = 16,
}

/// ChaCha20 seeded from `seed`, positioned on `stream + offset`.
///
/// ChaCha output is specified bit-for-bit, so draws reproduce across
/// platforms.
pub fn stream_rng(seed: u64, stream: Stream, offset: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64 + offset);
    rng
}
