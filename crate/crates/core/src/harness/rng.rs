//! Counter-derived per-trial RNG streams.
//!
//! Every trial's stream is a pure function of `(seed, hypothesis, trial)`,
//! so results cannot depend on scheduling or worker count.

use rand_chacha::ChaCha12Rng;

use crate::decentralized::Hypothesis;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for one `(seed, hypothesis, trial)` triple.
pub fn trial_rng(seed: u64, hypothesis: Hypothesis, trial: u64) -> ChaCha12Rng {
    let hyp = match hypothesis {
        Hypothesis::H0 => 0u64,
        Hypothesis::H1 => 1u64,
    };
    let mut state = seed ^ 0xD1B5_4A32_D192_ED03;
    let mut key = [0u8; 32];
    let words = [
        splitmix64(&mut state),
        splitmix64(&mut state) ^ hyp.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        splitmix64(&mut state) ^ trial,
        {
            let mut mix = seed ^ (hyp << 62) ^ trial.rotate_left(17);
            splitmix64(&mut mix)
        },
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    use rand::SeedableRng;
    ChaCha12Rng::from_seed(key)
}
