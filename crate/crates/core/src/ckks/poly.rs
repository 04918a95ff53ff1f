//! Ring elements of R_Q = Z_Q[X]/(X^n + 1) in residue-number-system form.

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, ToPrimitive, Zero};

use super::arith::Modulus;

/// One coefficient array per active modulus, always in coefficient order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyRns {
    residues: Vec<Vec<u64>>,
}

impl PolyRns {
    pub fn zero(ring_dim: usize, moduli: usize) -> Self {
        Self {
            residues: vec![vec![0; ring_dim]; moduli],
        }
    }

    /// Wraps residue arrays; panics if the arrays are ragged or out of range.
    pub fn from_residues(residues: Vec<Vec<u64>>, moduli: &[u64]) -> Self {
        assert_eq!(residues.len(), moduli.len());
        let n = residues.first().map_or(0, Vec::len);
        for (row, &q) in residues.iter().zip(moduli) {
            assert_eq!(row.len(), n, "ragged residue arrays");
            assert!(row.iter().all(|&r| r < q), "residue out of range");
        }
        Self { residues }
    }

    /// Reduces small signed coefficients into every modulus.
    pub fn from_signed(coeffs: &[i64], moduli: &[Modulus]) -> Self {
        Self {
            residues: moduli
                .iter()
                .map(|m| coeffs.iter().map(|&c| m.reduce_i64(c)).collect())
                .collect(),
        }
    }

    pub fn ring_dim(&self) -> usize {
        self.residues.first().map_or(0, Vec::len)
    }

    pub fn moduli_count(&self) -> usize {
        self.residues.len()
    }

    pub fn residues(&self) -> &[Vec<u64>] {
        &self.residues
    }

    pub(crate) fn residues_mut(&mut self) -> &mut [Vec<u64>] {
        &mut self.residues
    }

    /// Keeps only the first `count` residue arrays.
    pub fn truncated(&self, count: usize) -> Self {
        Self {
            residues: self.residues[..count].to_vec(),
        }
    }

    pub(crate) fn drop_last(&mut self) -> Vec<u64> {
        self.residues.pop().expect("no modulus to drop")
    }

    pub fn add(&self, other: &Self, moduli: &[Modulus]) -> Self {
        self.zip_with(other, moduli, |m, a, b| m.add(a, b))
    }

    pub fn sub(&self, other: &Self, moduli: &[Modulus]) -> Self {
        self.zip_with(other, moduli, |m, a, b| m.sub(a, b))
    }

    pub fn neg(&self, moduli: &[Modulus]) -> Self {
        Self {
            residues: self
                .residues
                .iter()
                .zip(moduli)
                .map(|(row, m)| row.iter().map(|&a| m.neg(a)).collect())
                .collect(),
        }
    }

    fn zip_with(&self, other: &Self, moduli: &[Modulus], f: impl Fn(&Modulus, u64, u64) -> u64) -> Self {
        assert_eq!(self.residues.len(), other.residues.len());
        Self {
            residues: self
                .residues
                .iter()
                .zip(&other.residues)
                .zip(moduli)
                .map(|((a, b), m)| a.iter().zip(b).map(|(&x, &y)| f(m, x, y)).collect())
                .collect(),
        }
    }

    /// Exact CRT composition of coefficient `idx` into [0, Q).
    pub fn compose_coeff(&self, idx: usize, moduli: &[u64]) -> BigUint {
        crt_compose(
            &self.residues.iter().map(|r| r[idx]).collect::<Vec<_>>(),
            &moduli[..self.residues.len()],
        )
    }

    /// Builds a polynomial from exact integer coefficients, reduced per modulus.
    pub fn from_bigints(coeffs: &[BigInt], moduli: &[u64]) -> Self {
        Self {
            residues: moduli
                .iter()
                .map(|&q| {
                    let qb = BigInt::from(q);
                    coeffs
                        .iter()
                        .map(|c| {
                            let r = ((c % &qb) + &qb) % &qb;
                            r.to_u64().unwrap()
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Chinese remaindering with big integers.
pub fn crt_compose(residues: &[u64], moduli: &[u64]) -> BigUint {
    let big_q: BigUint = moduli.iter().map(|&q| BigUint::from(q)).product();
    let mut acc = BigUint::zero();
    for (&r, &q) in residues.iter().zip(moduli) {
        let qb = BigUint::from(q);
        let partial = &big_q / &qb;
        let partial_mod = (&partial % &qb).to_u64().unwrap();
        let inv = Modulus::new(q).inv(partial_mod);
        acc += &partial * BigUint::from(Modulus::new(q).mul(r, inv));
    }
    acc % big_q
}

/// Centered exact lift into (-Q/2, Q/2].
pub fn crt_compose_centered(residues: &[u64], moduli: &[u64]) -> BigInt {
    let big_q: BigUint = moduli.iter().map(|&q| BigUint::from(q)).product();
    let x = crt_compose(residues, moduli);
    let half = &big_q >> 1u32;
    if x > half {
        BigInt::from(x) - BigInt::from(big_q)
    } else {
        BigInt::from(x)
    }
}

/// Precomputed mixed-radix (Garner) tables for lifting RNS values to floats.
#[derive(Clone, Debug)]
pub struct GarnerTable {
    moduli: Vec<Modulus>,
    /// inv[i][j] = q_j^{-1} mod q_i for j < i.
    inv: Vec<Vec<u64>>,
    /// radix[i] = q_0 * ... * q_{i-1} as a float.
    radix: Vec<f64>,
}

impl GarnerTable {
    pub fn new(moduli: &[Modulus]) -> Self {
        let inv = (0..moduli.len())
            .map(|i| {
                (0..i)
                    .map(|j| moduli[i].inv(moduli[j].value() % moduli[i].value()))
                    .collect()
            })
            .collect();
        let mut radix = Vec::with_capacity(moduli.len());
        let mut acc = 1.0f64;
        for m in moduli {
            radix.push(acc);
            acc *= m.value() as f64;
        }
        Self {
            moduli: moduli.to_vec(),
            inv,
            radix,
        }
    }

    /// Centered value of the residue tuple as a float, using the first
    /// `residues.len()` moduli.
    pub fn lift_centered(&self, residues: &[u64], digits: &mut [u64]) -> f64 {
        let k = residues.len();
        for i in 0..k {
            let m = &self.moduli[i];
            let mut t = residues[i];
            for j in 0..i {
                t = m.mul(m.sub(t, digits[j] % m.value()), self.inv[i][j]);
            }
            digits[i] = t;
        }
        // Compare against (Q-1)/2, whose mixed-radix digits are (q_i - 1)/2.
        let mut negative = false;
        for i in (0..k).rev() {
            let half = (self.moduli[i].value() - 1) / 2;
            if digits[i] != half {
                negative = digits[i] > half;
                break;
            }
        }
        if negative {
            // Q - x = (Q - 1 - x) + 1, digit-wise complement.
            let mut acc = 1.0;
            for i in 0..k {
                acc += (self.moduli[i].value() - 1 - digits[i]) as f64 * self.radix[i];
            }
            -acc
        } else {
            (0..k).map(|i| digits[i] as f64 * self.radix[i]).sum()
        }
    }
}

/// Converts a centered big integer to f64 (used by tests and diagnostics).
pub fn bigint_to_f64(x: &BigInt) -> f64 {
    let mag = x.abs().to_f64().unwrap_or(f64::INFINITY);
    if x.is_negative() {
        -mag
    } else {
        mag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::params::CkksParams;
    use proptest::prelude::*;

    fn chain() -> Vec<u64> {
        CkksParams::standard(64).unwrap().modulus_chain().to_vec()
    }

    proptest! {
        #[test]
        fn rns_roundtrip_exact(hi in any::<u64>(), mid in any::<u64>(), lo in any::<u64>(), neg in any::<bool>()) {
            let q = chain();
            let big_q: BigUint = q.iter().map(|&x| BigUint::from(x)).product();
            // Compose a value below Q/2 from random words.
            let raw = (BigUint::from(hi) << 128u32) + (BigUint::from(mid) << 64u32) + BigUint::from(lo);
            let v = raw % (&big_q >> 1u32);
            let v = if neg { -BigInt::from(v) } else { BigInt::from(v) };
            let poly = PolyRns::from_bigints(std::slice::from_ref(&v), &q);
            let back = crt_compose_centered(&poly.residues().iter().map(|r| r[0]).collect::<Vec<_>>(), &q);
            prop_assert_eq!(back, v);
        }

        #[test]
        fn garner_matches_bigint(a in any::<u64>(), b in any::<u64>(), c in any::<u64>(), levels in 1usize..=3) {
            let q = chain();
            let moduli: Vec<Modulus> = q.iter().map(|&x| Modulus::new(x)).collect();
            let table = GarnerTable::new(&moduli);
            let res = [a % q[0], b % q[1], c % q[2]];
            let mut digits = [0u64; 3];
            let fast = table.lift_centered(&res[..levels], &mut digits);
            let exact = bigint_to_f64(&crt_compose_centered(&res[..levels], &q[..levels]));
            prop_assert!((fast - exact).abs() <= exact.abs() * 1e-14 + 1.0);
        }
    }

    #[test]
    fn small_negative_values_lift_exactly() {
        let q = chain();
        let moduli: Vec<Modulus> = q.iter().map(|&x| Modulus::new(x)).collect();
        let table = GarnerTable::new(&moduli);
        let poly = PolyRns::from_signed(&[-5, 0, 7, -1], &moduli);
        let mut digits = [0u64; 3];
        let lifted: Vec<f64> = (0..4)
            .map(|i| {
                let r: Vec<u64> = poly.residues().iter().map(|row| row[i]).collect();
                table.lift_centered(&r, &mut digits)
            })
            .collect();
        assert_eq!(lifted, vec![-5.0, 0.0, 7.0, -1.0]);
    }
}
