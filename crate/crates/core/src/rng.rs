//! Counter-keyed Gaussian coefficient draws.
//!
//! Every replicate is keyed by `(master_seed, n, replicate_id)`, so its draw
//! does not depend on which worker runs it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const STREAM_A: u64 = 1;
const STREAM_B: u64 = 2;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one replicate, derived from its key.
pub fn derive_seed(master_seed: u64, n: usize, replicate_id: u64) -> u64 {
    let h = splitmix64(master_seed);
    let h = splitmix64(h ^ (n as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    splitmix64(h ^ replicate_id.wrapping_mul(0x9FB2_1C65_1E98_DF25))
}

/// i.i.d. standard Gaussian coefficients `a_k`, `b_k`, `k = 1..=n`
/// (stored zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientDraw {
    pub master_seed: u64,
    pub n: usize,
    pub replicate_id: u64,
    pub seed: u64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl CoefficientDraw {
    /// Draw with explicit coefficients, for tests and hand-built examples.
    pub fn from_coefficients(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::Precondition(format!(
                "coefficient vectors must be non-empty and equal length ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        Ok(CoefficientDraw {
            master_seed: 0,
            n: a.len(),
            replicate_id: 0,
            seed: 0,
            a,
            b,
        })
    }
}

fn gaussian_stream(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn sample_coefficients(master_seed: u64, n: usize, replicate_id: u64) -> Result<CoefficientDraw> {
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    let seed = derive_seed(master_seed, n, replicate_id);
    Ok(CoefficientDraw {
        master_seed,
        n,
        replicate_id,
        seed,
        a: gaussian_stream(seed, STREAM_A, n),
        b: gaussian_stream(seed, STREAM_B, n),
    })
}
