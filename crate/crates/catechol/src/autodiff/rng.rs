//! Counter-based deterministic randomness.
//!
//! Dropout masks and parameter initialization are keyed by integer tuples
//! (seed, layer id, step, element index) hashed through splitmix64, so a
//! run is bit-reproducible regardless of evaluation order or thread count.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn key_hash(parts: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3u64; // arbitrary fixed offset
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

/// Uniform in [0, 1).
pub fn uniform(parts: &[u64]) -> f64 {
    (key_hash(parts) >> 11) as f64 / (1u64 << 53) as f64
}

/// Uniform in [-scale, scale).
pub fn uniform_signed(parts: &[u64], scale: f64) -> f64 {
    (uniform(parts) * 2.0 - 1.0) * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(key_hash(&[1, 2, 3]), key_hash(&[1, 2, 3]));
        assert_ne!(key_hash(&[1, 2, 3]), key_hash(&[1, 2, 4]));
    }

    #[test]
    fn uniform_in_range() {
        for i in 0..1000 {
            let u = uniform(&[42, i]);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn roughly_centered() {
        let mean: f64 = (0..10_000).map(|i| uniform(&[7, i])).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }
}
