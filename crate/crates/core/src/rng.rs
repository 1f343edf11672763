//! The batch-shuffle generator.
//!
//! Batch order is part of the reproducibility contract, so it is produced by a
//! fully specified generator rather than whatever `rand` ships by default:
//!
//! ```text
//! seeding (SplitMix64, one round):
//!     z = seed + 0x9E3779B97F4A7C15            (wrapping)
//!     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!     state = z ^ (z >> 31)                    (replaced by 1 if it is 0)
//!
//! xorshift64* step:
//!     x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27
//!     state = x;  output = x * 0x2545F4914F6CDD1D   (wrapping)
//!
//! Fisher-Yates, for i = n-1 down to 1:
//!     j = output % (i + 1);  swap(i, j)
//! ```

#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        let state = z ^ (z >> 31);
        XorShift64Star {
            state: if state == 0 { 1 } else { state },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

/// Derives an independent seed for a named sub-stream (e.g. epoch `e` of a run).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut g = XorShift64Star::new(seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    g.next_u64()
}
