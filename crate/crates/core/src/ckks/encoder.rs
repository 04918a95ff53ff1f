//! Canonical-embedding encoder.
//!
//! Slot j holds m(ζ^(5^j)) with ζ = exp(iπ/n). The special FFT below maps
//! between the n/2 slot values and the n real coefficients (real parts in
//! the low half, imaginary parts in the high half of the coefficient vector).

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct SlotEncoder {
    slots: usize,
    /// 5^j mod 2n.
    rot_group: Vec<usize>,
    /// exp(2πi k / 2n) for k in 0..=2n.
    ksi_pows: Vec<Complex64>,
}

impl SlotEncoder {
    pub fn new(ring_dim: usize) -> Self {
        let m = 2 * ring_dim;
        let slots = ring_dim / 2;
        let mut rot_group = Vec::with_capacity(slots);
        let mut five_pow = 1usize;
        for _ in 0..slots {
            rot_group.push(five_pow);
            five_pow = five_pow * 5 % m;
        }
        let ksi_pows = (0..=m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64))
            .collect();
        Self {
            slots,
            rot_group,
            ksi_pows,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    fn bit_reverse(vals: &mut [Complex64]) {
        let n = vals.len();
        let mut j = 0;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                vals.swap(i, j);
            }
        }
    }

    /// Evaluates the coefficient-side vector at the slot roots.
    pub fn fft_special(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.slots * 2;
        Self::bit_reverse(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = m / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * gap;
                    let u = vals[i + j];
                    let v = vals[i + j + lenh] * self.ksi_pows[idx];
                    vals[i + j] = u + v;
                    vals[i + j + lenh] = u - v;
                }
            }
            len <<= 1;
        }
    }

    /// Inverse of [`fft_special`](Self::fft_special), including the 1/size factor.
    pub fn fft_special_inv(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.slots * 2;
        let mut len = size;
        while len >= 1 {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = m / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * gap;
                    let u = vals[i + j] + vals[i + j + lenh];
                    let v = (vals[i + j] - vals[i + j + lenh]) * self.ksi_pows[idx];
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len >>= 1;
        }
        Self::bit_reverse(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Real slot values → real polynomial coefficients (unscaled, unrounded).
    pub fn slots_to_coeffs(&self, values: &[f64]) -> Vec<f64> {
        let mut vals: Vec<Complex64> = values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
            .take(self.slots)
            .collect();
        self.fft_special_inv(&mut vals);
        let mut coeffs = vec![0.0; 2 * self.slots];
        for (i, v) in vals.iter().enumerate() {
            coeffs[i] = v.re;
            coeffs[i + self.slots] = v.im;
        }
        coeffs
    }

    /// Real polynomial coefficients → complex slot values.
    pub fn coeffs_to_slots(&self, coeffs: &[f64]) -> Vec<Complex64> {
        let mut vals: Vec<Complex64> = (0..self.slots)
            .map(|i| Complex64::new(coeffs[i], coeffs[i + self.slots]))
            .collect();
        self.fft_special(&mut vals);
        vals
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of the polynomial at ζ^(5^j): the embedding's definition.
    fn evaluate_at_slots(coeffs: &[f64]) -> Vec<Complex64> {
        let n = coeffs.len();
        let m = 2 * n;
        let mut out = Vec::new();
        let mut root_exp = 1usize;
        for _ in 0..n / 2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &c) in coeffs.iter().enumerate() {
                let e = (root_exp * k) % m;
                acc += Complex64::from_polar(c, PI * e as f64 / n as f64);
            }
            out.push(acc);
            root_exp = root_exp * 5 % m;
        }
        out
    }

    #[test]
    fn decode_agrees_with_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[16usize, 64, 256] {
            let enc = SlotEncoder::new(n);
            let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = enc.coeffs_to_slots(&coeffs);
            let slow = evaluate_at_slots(&coeffs);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-9, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn encode_then_evaluate_recovers_real_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 64;
        let enc = SlotEncoder::new(n);
        let values: Vec<f64> = (0..n / 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs = enc.slots_to_coeffs(&values);
        let slots = evaluate_at_slots(&coeffs);
        for (v, s) in values.iter().zip(&slots) {
            assert!((s.re - v).abs() < 1e-12 && s.im.abs() < 1e-12);
        }
    }
}
