/// Independent random streams derived from one base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Replication = 0,
    Oracle = 1,
    Truth = 2,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of draw `index` in `stream`.
///
/// For a fixed base and stream this is a bijection of `index`: an odd
/// multiple of the index is added to a stream offset and passed through the
/// (invertible) splitmix64 finalizer.
pub fn stream_seed(base: u64, stream: Stream, index: u64) -> u64 {
    let offset = finalize(base ^ finalize((stream as u64).wrapping_add(1).wrapping_mul(GOLDEN)));
    finalize(offset.wrapping_add(index.wrapping_mul(GOLDEN)))
}
