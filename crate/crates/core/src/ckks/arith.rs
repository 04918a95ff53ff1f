//! Word-sized modular arithmetic and NTT-friendly prime search.

/// An odd modulus below 2^62 with a precomputed Barrett constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    /// floor(2^128 / q), split into (hi, lo) 64-bit words.
    barrett: (u64, u64),
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!(value > 1 && value < (1 << 62), "modulus out of range: {value}");
        let q = value as u128;
        // floor((2^128 - 1) / q) equals floor(2^128 / q) unless q divides 2^128.
        let hi = (u128::MAX / q) >> 64;
        let rem = u128::MAX - (hi << 64) * q;
        let lo = (rem / q) as u64;
        Self {
            value,
            barrett: (hi as u64, lo),
        }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    /// Reduces a 128-bit value modulo q.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let (mhi, mlo) = (self.barrett.0 as u128, self.barrett.1 as u128);
        let xlo = x as u64 as u128;
        let xhi = x >> 64;
        // Estimate floor(x * m / 2^128) ignoring the lo*lo carry, at most 2 low.
        let carry = (xlo * mlo) >> 64;
        let mid1 = xlo * mhi;
        let mid2 = xhi * mlo;
        let mid = (mid1 & u64::MAX as u128) + (mid2 & u64::MAX as u128) + carry;
        let quot = xhi * mhi + (mid1 >> 64) + (mid2 >> 64) + (mid >> 64);
        let mut r = x.wrapping_sub(quot.wrapping_mul(self.value as u128)) as u64;
        while r >= self.value {
            r -= self.value;
        }
        r
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        x % self.value
    }

    /// Reduces a signed value into [0, q).
    #[inline]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        let r = x.rem_euclid(self.value as i64);
        r as u64
    }

    /// Reduces a signed 128-bit value into [0, q).
    pub fn reduce_i128(&self, x: i128) -> u64 {
        x.rem_euclid(self.value as i128) as u64
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Precomputes floor(w * 2^64 / q) for repeated multiplication by `w`.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// Multiplies `a` by a constant `w` whose Shoup factor is `w_shoup`.
    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let q_est = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(q_est.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base %= self.value;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse via Fermat's little theorem; the modulus must be prime.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(!a.is_multiple_of(self.value));
        self.pow(a, self.value - 2)
    }

    /// Maps a residue to its centered representative in (-q/2, q/2].
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every 64-bit input.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Returns `count` distinct primes p ≡ 1 (mod 2n) above 2^bits, ascending,
/// skipping any prime already listed in `exclude`.
pub fn ntt_primes_above(bits: u32, ring_dim: usize, count: usize, exclude: &[u64]) -> Vec<u64> {
    let step = 2 * ring_dim as u64;
    let mut candidate = (1u64 << bits) + 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if is_prime(candidate) && !exclude.contains(&candidate) {
            out.push(candidate);
        }
        candidate += step;
    }
    out
}

/// Finds a primitive 2n-th root of unity modulo the prime q (requires q ≡ 1 mod 2n).
pub fn primitive_root_of_unity(order: u64, q: u64) -> Option<u64> {
    if !(q - 1).is_multiple_of(order) {
        return None;
    }
    let m = Modulus::new(q);
    let cofactor = (q - 1) / order;
    for g in 2..q {
        let candidate = m.pow(g, cofactor);
        // order is a power of two, so candidate^(order/2) = -1 certifies the exact order.
        if m.pow(candidate, order / 2) == q - 1 {
            return Some(candidate);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_primes() {
        let primes: Vec<u64> = (0..50).filter(|&n| is_prime(n)).collect();
        assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47]);
        assert!(is_prime((1 << 61) - 1));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2,3,5,7
    }

    #[test]
    fn ntt_primes_are_friendly() {
        let ps = ntt_primes_above(40, 8192, 2, &[]);
        for &p in &ps {
            assert!(p > 1 << 40);
            assert_eq!(p % 16384, 1);
            assert!(is_prime(p));
        }
        assert!(ps[0] < ps[1]);
    }

    #[test]
    fn root_has_exact_order() {
        let q = ntt_primes_above(30, 64, 1, &[])[0];
        let m = Modulus::new(q);
        let w = primitive_root_of_unity(128, q).unwrap();
        assert_eq!(m.pow(w, 128), 1);
        assert_eq!(m.pow(w, 64), q - 1);
    }

    proptest! {
        #[test]
        fn barrett_matches_u128_rem(a in any::<u64>(), b in any::<u64>(), qi in 0usize..3) {
            let q = [(1u64 << 61) - 1, 1_099_511_922_689, 97][qi];
            let m = Modulus::new(q);
            let (a, b) = (a % q, b % q);
            prop_assert_eq!(m.mul(a, b), (a as u128 * b as u128 % q as u128) as u64);
            let w_s = m.shoup(b);
            prop_assert_eq!(m.mul_shoup(a, b, w_s), m.mul(a, b));
        }

        #[test]
        fn reduce_u128_any(x in any::<u128>()) {
            let q = 1_125_899_906_990_081u64;
            let m = Modulus::new(q);
            prop_assert_eq!(m.reduce_u128(x), (x % q as u128) as u64);
        }
    }
}
