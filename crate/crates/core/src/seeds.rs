//! Seeded generators and seed splitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha20Rng;

pub fn rng(seed: u64) -> SimRng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica/stream `index` derived from `base`.
pub fn split(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ splitmix64(index.wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(1)))
}

/// Seed derived from a base and a tag, e.g. `derive(seed, "chain", k)`.
pub fn derive(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    split(split(base, h), index)
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniform point on the sphere of radius `radius` in `n` dimensions.
pub fn sphere_vec<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, n);
        let norm = crate::linalg::norm(&v);
        if norm > 1e-300 {
            v.iter_mut().for_each(|x| *x *= radius / norm);
            return v;
        }
    }
}

/// Uniform point in the ball of radius `radius` in `n` dimensions.
pub fn ball_vec<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let r: f64 = rng.random::<f64>().powf(1.0 / n as f64);
    sphere_vec(rng, n, radius * r)
}
