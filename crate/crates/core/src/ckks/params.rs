use super::arith::{is_prime, ntt_primes_above};
use super::CkksError;

/// Ring dimension, modulus chain, encoding scale and noise width.
///
/// The chain is ordered from the base modulus (never dropped) to the
/// top modulus (dropped first by rescale). A value at level `l` lives
/// modulo `chain[0] * ... * chain[l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CkksParams {
    ring_dim: usize,
    modulus_chain: Vec<u64>,
    scale: f64,
    error_stddev: f64,
}

impl CkksParams {
    pub fn new(ring_dim: usize, modulus_chain: Vec<u64>, scale: f64, error_stddev: f64) -> Result<Self, CkksError> {
        if !ring_dim.is_power_of_two() || ring_dim < 16 {
            return Err(CkksError::InvalidParams(format!(
                "ring dimension {ring_dim} is not a power of two >= 16"
            )));
        }
        if modulus_chain.is_empty() {
            return Err(CkksError::InvalidParams("empty modulus chain".into()));
        }
        let two_n = 2 * ring_dim as u64;
        for (i, &q) in modulus_chain.iter().enumerate() {
            if q >= 1 << 62 {
                return Err(CkksError::InvalidParams(format!("modulus {q} exceeds 62 bits")));
            }
            if !is_prime(q) {
                return Err(CkksError::InvalidParams(format!("modulus {q} is not prime")));
            }
            if q % two_n != 1 {
                return Err(CkksError::InvalidParams(format!("modulus {q} is not 1 mod {two_n}")));
            }
            if modulus_chain[..i].contains(&q) {
                return Err(CkksError::InvalidParams(format!("modulus {q} repeated")));
            }
        }
        let smallest = *modulus_chain.iter().min().unwrap() as f64;
        if !(scale > 1.0 && scale.is_finite()) || scale >= smallest {
            return Err(CkksError::InvalidParams(format!(
                "scale {scale} must lie in (1, smallest modulus)"
            )));
        }
        if !(error_stddev >= 0.0 && error_stddev.is_finite()) {
            return Err(CkksError::InvalidParams(format!(
                "error stddev {error_stddev} is not a finite non-negative value"
            )));
        }
        Ok(Self {
            ring_dim,
            modulus_chain,
            scale,
            error_stddev,
        })
    }

    /// Builds a chain from prime bit sizes (base first), searching for the
    /// smallest NTT-friendly primes above each 2^bits.
    pub fn from_bit_sizes(
        ring_dim: usize,
        bit_sizes: &[u32],
        scale_bits: u32,
        error_stddev: f64,
    ) -> Result<Self, CkksError> {
        if !ring_dim.is_power_of_two() || ring_dim < 16 {
            return Err(CkksError::InvalidParams(format!(
                "ring dimension {ring_dim} is not a power of two >= 16"
            )));
        }
        let mut chain: Vec<u64> = Vec::with_capacity(bit_sizes.len());
        for &bits in bit_sizes {
            if !(20..=61).contains(&bits) {
                return Err(CkksError::InvalidParams(format!(
                    "prime size {bits} bits outside 20..=61"
                )));
            }
            let p = ntt_primes_above(bits, ring_dim, 1, &chain)[0];
            chain.push(p);
        }
        Self::new(ring_dim, chain, 2f64.powi(scale_bits as i32), error_stddev)
    }

    /// Three primes near 2^50, 2^40, 2^40 with scale 2^40 and noise width 3.2.
    pub fn standard(ring_dim: usize) -> Result<Self, CkksError> {
        Self::from_bit_sizes(ring_dim, &[50, 40, 40], 40, 3.2)
    }

    /// Named presets: `full` (ring 8192), `desk` (1024), `test` (64).
    pub fn preset(name: &str) -> Result<Self, CkksError> {
        match name {
            "full" => Self::standard(8192),
            "desk" => Self::standard(1024),
            "test" => Self::standard(64),
            other => Err(CkksError::InvalidParams(format!("unknown preset '{other}'"))),
        }
    }

    pub fn ring_dim(&self) -> usize {
        self.ring_dim
    }

    pub fn slots(&self) -> usize {
        self.ring_dim / 2
    }

    pub fn modulus_chain(&self) -> &[u64] {
        &self.modulus_chain
    }

    pub fn max_level(&self) -> usize {
        self.modulus_chain.len() - 1
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn error_stddev(&self) -> f64 {
        self.error_stddev
    }

    /// Product of the moduli active at `level`, as a float.
    pub fn modulus_at(&self, level: usize) -> f64 {
        self.modulus_chain[..=level].iter().map(|&q| q as f64).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_degree_accepted() {
        let p = CkksParams::standard(8192).unwrap();
        assert_eq!(p.ring_dim(), 8192);
        assert_eq!(p.slots(), 4096);
        assert_eq!(p.modulus_chain().len(), 3);
        assert!(p.modulus_chain()[0] > 1 << 50);
        assert!(p.modulus_chain()[1..].iter().all(|&q| q > 1 << 40 && q < 1 << 41));
        assert_eq!(p.scale(), 2f64.powi(40));
    }

    #[test]
    fn rejects_bad_ring_dim() {
        assert!(matches!(CkksParams::standard(100), Err(CkksError::InvalidParams(_))));
        assert!(CkksParams::standard(8).is_err());
    }

    #[test]
    fn rejects_unfriendly_modulus() {
        let good = CkksParams::standard(64).unwrap();
        let mut chain = good.modulus_chain().to_vec();
        chain[1] = 1_099_511_627_791; // prime, but not 1 mod 128
        assert!(CkksParams::new(64, chain, good.scale(), 3.2).is_err());
        let mut chain = good.modulus_chain().to_vec();
        chain[2] = chain[1];
        assert!(CkksParams::new(64, chain, good.scale(), 3.2).is_err());
    }

    #[test]
    fn scale_must_sit_below_smallest_modulus() {
        let good = CkksParams::standard(64).unwrap();
        let chain = good.modulus_chain().to_vec();
        assert!(CkksParams::new(64, chain, 2f64.powi(45), 3.2).is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(CkksParams::preset("test").unwrap().ring_dim(), 64);
        assert_eq!(CkksParams::preset("desk").unwrap().ring_dim(), 1024);
        assert!(CkksParams::preset("huge").is_err());
    }
}
