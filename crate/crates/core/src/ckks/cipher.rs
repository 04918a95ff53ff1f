use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::arith::Modulus;
use super::encoder::SlotEncoder;
use super::ntt::NttTable;
use super::params::CkksParams;
use super::poly::{GarnerTable, PolyRns};
use super::CkksError;

/// Relative tolerance under which two scales count as equal.
pub const SCALE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Plaintext {
    pub poly: PolyRns,
    pub level: usize,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    pub c0: PolyRns,
    pub c1: PolyRns,
    pub level: usize,
    pub scale: f64,
}

/// Public key (b, a) with b = -a·s + e over the full chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PublicKey {
    pub b: PolyRns,
    pub a: PolyRns,
}

/// Ternary secret over the full chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SecretKey {
    pub s: PolyRns,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyPair {
    pub public_key: PublicKey,
    pub secret_key: SecretKey,
}

/// Parameters plus the NTT, encoder and CRT tables derived from them.
///
/// Every operation is a pure function of its arguments, so one context can
/// be shared by reference across threads.
#[derive(Clone, Debug)]
pub struct CkksContext {
    params: CkksParams,
    moduli: Vec<Modulus>,
    ntt: Vec<NttTable>,
    encoder: SlotEncoder,
    garner: GarnerTable,
}

impl CkksContext {
    pub fn new(params: CkksParams) -> Result<Self, CkksError> {
        let n = params.ring_dim();
        let moduli: Vec<Modulus> = params.modulus_chain().iter().map(|&q| Modulus::new(q)).collect();
        let ntt = params
            .modulus_chain()
            .iter()
            .map(|&q| {
                NttTable::new(q, n)
                    .ok_or_else(|| CkksError::InvalidParams(format!("modulus {q} has no 2n-th root of unity")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let garner = GarnerTable::new(&moduli);
        Ok(Self {
            encoder: SlotEncoder::new(n),
            params,
            moduli,
            ntt,
            garner,
        })
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn slots(&self) -> usize {
        self.params.slots()
    }

    pub fn top_level(&self) -> usize {
        self.params.max_level()
    }

    fn moduli_at(&self, level: usize) -> &[Modulus] {
        &self.moduli[..=level]
    }

    fn check_level(&self, level: usize) -> Result<(), CkksError> {
        if level > self.params.max_level() {
            return Err(CkksError::Alignment(format!(
                "level {level} exceeds chain top {}",
                self.params.max_level()
            )));
        }
        Ok(())
    }

    fn poly_mul(&self, a: &PolyRns, b: &PolyRns) -> PolyRns {
        let residues = a
            .residues()
            .iter()
            .zip(b.residues())
            .zip(&self.ntt)
            .map(|((x, y), table)| table.multiply(x, y))
            .collect();
        PolyRns::from_residues(residues, &self.params.modulus_chain()[..a.moduli_count()])
    }

    // ---- encoding ----

    /// Encodes at `level` with the default scale.
    pub fn encode(&self, values: &[f64], level: usize) -> Result<Plaintext, CkksError> {
        self.encode_with_scale(values, level, self.params.scale())
    }

    /// Encodes at an explicit scale, for matching a rescaled ciphertext.
    pub fn encode_with_scale(&self, values: &[f64], level: usize, scale: f64) -> Result<Plaintext, CkksError> {
        self.check_level(level)?;
        if values.len() > self.slots() {
            return Err(CkksError::Capacity {
                requested: values.len(),
                slots: self.slots(),
            });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CkksError::Range(format!("invalid scale {scale}")));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(CkksError::Range(format!("non-finite value {bad}")));
        }
        let coeffs = self.encoder.slots_to_coeffs(values);
        let bound = self.params.modulus_at(level) / 2.0;
        let mut rounded = Vec::with_capacity(coeffs.len());
        for c in coeffs {
            let scaled = (c * scale).round();
            if scaled.abs() >= bound || scaled.abs() >= 2f64.powi(126) {
                return Err(CkksError::Range(format!(
                    "scaled coefficient {scaled:e} exceeds modulus bound {bound:e}"
                )));
            }
            rounded.push(scaled as i128);
        }
        let residues = self
            .moduli_at(level)
            .iter()
            .map(|m| rounded.iter().map(|&c| m.reduce_i128(c)).collect())
            .collect();
        Ok(Plaintext {
            poly: PolyRns::from_residues(residues, &self.params.modulus_chain()[..=level]),
            level,
            scale,
        })
    }

    /// Recovers the first `count` slot values (real parts).
    pub fn decode(&self, pt: &Plaintext, count: usize) -> Result<Vec<f64>, CkksError> {
        if count > self.slots() {
            return Err(CkksError::Capacity {
                requested: count,
                slots: self.slots(),
            });
        }
        if count == 0 {
            return Ok(Vec::new());
        }
        let k = pt.poly.moduli_count();
        let n = self.params.ring_dim();
        let mut digits = vec![0u64; k];
        let mut tuple = vec![0u64; k];
        let coeffs: Vec<f64> = (0..n)
            .map(|i| {
                for (t, row) in tuple.iter_mut().zip(pt.poly.residues()) {
                    *t = row[i];
                }
                self.garner.lift_centered(&tuple, &mut digits) / pt.scale
            })
            .collect();
        let slots = self.encoder.coeffs_to_slots(&coeffs);
        Ok(slots.into_iter().take(count).map(|z| z.re).collect())
    }

    // ---- keys and encryption ----

    fn sample_ternary(&self, rng: &mut ChaCha20Rng) -> Vec<i64> {
        (0..self.params.ring_dim()).map(|_| rng.gen_range(-1i64..=1)).collect()
    }

    fn sample_gaussian(&self, rng: &mut ChaCha20Rng) -> Vec<i64> {
        let sigma = self.params.error_stddev();
        if sigma == 0.0 {
            return vec![0; self.params.ring_dim()];
        }
        let normal = Normal::new(0.0, sigma).expect("validated stddev");
        (0..self.params.ring_dim())
            .map(|_| normal.sample(rng).round() as i64)
            .collect()
    }

    pub fn keygen(&self, seed: u64) -> KeyPair {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let s = PolyRns::from_signed(&self.sample_ternary(&mut rng), &self.moduli);
        let a_res: Vec<Vec<u64>> = self
            .moduli
            .iter()
            .map(|m| {
                (0..self.params.ring_dim())
                    .map(|_| rng.gen_range(0..m.value()))
                    .collect()
            })
            .collect();
        let a = PolyRns::from_residues(a_res, self.params.modulus_chain());
        let e = PolyRns::from_signed(&self.sample_gaussian(&mut rng), &self.moduli);
        let b = e.sub(&self.poly_mul(&a, &s), &self.moduli);
        KeyPair {
            public_key: PublicKey { b, a },
            secret_key: SecretKey { s },
        }
    }

    pub fn encrypt(&self, pt: &Plaintext, pk: &PublicKey, seed: u64) -> Result<Ciphertext, CkksError> {
        self.check_level(pt.level)?;
        let count = pt.level + 1;
        if pt.poly.moduli_count() != count || pk.b.moduli_count() < count {
            return Err(CkksError::Alignment("plaintext or key does not match level".into()));
        }
        let moduli = self.moduli_at(pt.level);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let u = PolyRns::from_signed(&self.sample_ternary(&mut rng), moduli);
        let e0 = PolyRns::from_signed(&self.sample_gaussian(&mut rng), moduli);
        let e1 = PolyRns::from_signed(&self.sample_gaussian(&mut rng), moduli);
        let b = pk.b.truncated(count);
        let a = pk.a.truncated(count);
        let c0 = self.poly_mul(&b, &u).add(&e0, moduli).add(&pt.poly, moduli);
        let c1 = self.poly_mul(&a, &u).add(&e1, moduli);
        Ok(Ciphertext {
            c0,
            c1,
            level: pt.level,
            scale: pt.scale,
        })
    }

    pub fn decrypt(&self, ct: &Ciphertext, sk: &SecretKey) -> Plaintext {
        let count = ct.level + 1;
        let moduli = self.moduli_at(ct.level);
        let s = sk.s.truncated(count);
        let poly = ct.c0.add(&self.poly_mul(&ct.c1, &s), moduli);
        Plaintext {
            poly,
            level: ct.level,
            scale: ct.scale,
        }
    }

    // ---- homomorphic operations ----

    fn check_aligned(level_a: usize, scale_a: f64, level_b: usize, scale_b: f64) -> Result<(), CkksError> {
        if level_a != level_b {
            return Err(CkksError::Alignment(format!("level mismatch: {level_a} vs {level_b}")));
        }
        if ((scale_a - scale_b) / scale_a).abs() > SCALE_TOLERANCE {
            return Err(CkksError::Alignment(format!(
                "scale mismatch: {scale_a:e} vs {scale_b:e}"
            )));
        }
        Ok(())
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, CkksError> {
        Self::check_aligned(a.level, a.scale, b.level, b.scale)?;
        let moduli = self.moduli_at(a.level);
        Ok(Ciphertext {
            c0: a.c0.add(&b.c0, moduli),
            c1: a.c1.add(&b.c1, moduli),
            level: a.level,
            scale: a.scale,
        })
    }

    pub fn add_plain(&self, a: &Ciphertext, p: &Plaintext) -> Result<Ciphertext, CkksError> {
        Self::check_aligned(a.level, a.scale, p.level, p.scale)?;
        let moduli = self.moduli_at(a.level);
        Ok(Ciphertext {
            c0: a.c0.add(&p.poly, moduli),
            c1: a.c1.clone(),
            level: a.level,
            scale: a.scale,
        })
    }

    /// Un-rescaled product; the result scale is `a.scale * p.scale`.
    pub fn mul_plain(&self, a: &Ciphertext, p: &Plaintext) -> Result<Ciphertext, CkksError> {
        if a.level != p.level {
            return Err(CkksError::Alignment(format!(
                "level mismatch: {} vs {}",
                a.level, p.level
            )));
        }
        let scale = a.scale * p.scale;
        let bound = self.params.modulus_at(a.level);
        if scale >= bound {
            return Err(CkksError::Range(format!(
                "product scale {scale:e} does not fit modulus {bound:e}"
            )));
        }
        Ok(Ciphertext {
            c0: self.poly_mul(&a.c0, &p.poly),
            c1: self.poly_mul(&a.c1, &p.poly),
            level: a.level,
            scale,
        })
    }

    /// Divides by the top active modulus and drops it.
    pub fn rescale(&self, a: &Ciphertext) -> Result<Ciphertext, CkksError> {
        if a.level == 0 {
            return Err(CkksError::DepthExhausted);
        }
        let top = self.moduli[a.level];
        let lower = self.moduli_at(a.level - 1);
        let inv_top: Vec<u64> = lower.iter().map(|m| m.inv(top.value() % m.value())).collect();
        let rescale_poly = |p: &PolyRns| {
            let mut out = p.clone();
            let last = out.drop_last();
            for ((row, m), &inv) in out.residues_mut().iter_mut().zip(lower).zip(&inv_top) {
                for (x, &r) in row.iter_mut().zip(&last) {
                    let centered = m.reduce_i64(top.center(r));
                    *x = m.mul(m.sub(*x, centered), inv);
                }
            }
            out
        };
        Ok(Ciphertext {
            c0: rescale_poly(&a.c0),
            c1: rescale_poly(&a.c1),
            level: a.level - 1,
            scale: a.scale / top.value() as f64,
        })
    }
}
