//! Deterministic point sets on hemispheres and in parameter intervals.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Coordinates at or below this magnitude count as zero when choosing the
/// antipodal representative.
pub(crate) const SIGN_TOL: f64 = 1e-12;

const GOLDEN: f64 = 0.618_033_988_749_894_9;
/// Increments of the additive recurrences used for translational factors.
const KRONECKER: [f64; 4] = [
    0.414_213_562_373_095_1, // frac(sqrt 2)
    0.732_050_807_568_877_2, // frac(sqrt 3)
    0.236_067_977_499_789_8, // frac(sqrt 5)
    0.645_751_311_064_590_6, // frac(sqrt 7)
];

pub(crate) fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Scales `v` to unit length with its first nonzero coordinate positive.
/// Returns the factor applied, or `None` for a zero vector.
pub(crate) fn canonicalize(v: &mut [f64]) -> Option<f64> {
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(len > SIGN_TOL) {
        return None;
    }
    let lead = v.iter().find(|x| x.abs() > SIGN_TOL * len)?;
    let f = if *lead > 0.0 { 1.0 / len } else { -1.0 / len };
    for x in v.iter_mut() {
        *x *= f;
        if x.abs() <= SIGN_TOL {
            *x = 0.0;
        }
    }
    Some(f)
}

/// The `j`-th translational coordinate of sample `i`, in `[0, 1)`.
pub(crate) fn kronecker(i: usize, j: usize, shift: f64) -> f64 {
    let a = KRONECKER[j % KRONECKER.len()];
    (shift + i as f64 * a).fract()
}

/// Van der Corput radical inverse in base 2.
pub(crate) fn van_der_corput(mut i: u64) -> f64 {
    let mut inv = 0.0;
    let mut f = 0.5;
    while i > 0 {
        if i & 1 == 1 {
            inv += f;
        }
        i >>= 1;
        f *= 0.5;
    }
    inv
}

/// A permutation of `0..m` that visits the buckets of `[0, 1)` coarse to
/// fine: any prefix is spread roughly evenly.
pub(crate) fn progressive_order(m: usize) -> Vec<usize> {
    let mut seen = vec![false; m];
    let mut out = Vec::with_capacity(m);
    let p = m.next_power_of_two() as u64;
    for j in 0..p {
        let b = ((van_der_corput(j) * m as f64) as usize).min(m - 1);
        if !seen[b] {
            seen[b] = true;
            out.push(b);
        }
    }
    out
}

/// `m` canonical unit vectors spread over the hemisphere of `S^(dim-1)`,
/// `i`-th vector stratified by `(i + shift) / m`.
///
/// dim 2 uses equal angles, dim 3 a Fibonacci lattice, dim 4 a
/// super-Fibonacci spiral; higher dimensions fall back to seeded Gaussians.
pub(crate) fn hemisphere(dim: usize, m: usize, shift: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let s = (i as f64 + shift) / m as f64;
        let mut v = match dim {
            1 => vec![1.0],
            2 => {
                let t = PI * s;
                vec![t.cos(), t.sin()]
            }
            3 => {
                let z = s;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = 2.0 * PI * (i as f64 * GOLDEN + shift).fract();
                vec![z, r * phi.cos(), r * phi.sin()]
            }
            4 => {
                const PHI: f64 = std::f64::consts::SQRT_2;
                const PSI: f64 = 1.533_751_168_755_204_3;
                let r = s.sqrt();
                let rr = (1.0 - s).max(0.0).sqrt();
                let si = i as f64 + shift;
                let a = 2.0 * PI * si / PHI;
                let b = 2.0 * PI * si / PSI;
                vec![r * a.sin(), r * a.cos(), rr * b.sin(), rr * b.cos()]
            }
            _ => (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        };
        if canonicalize(&mut v).is_some() {
            out.push(v);
        }
    }
    out
}
