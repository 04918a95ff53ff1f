//! Binary layout for keys, plaintexts and ciphertexts.
//!
//! ```text
//! "CKKS"                     4 bytes magic
//! version                    u8 (= 1)
//! kind                       u8 (1 plaintext, 2 ciphertext, 3 public key, 4 secret key)
//! ring_dim                   u64
//! chain_len                  u64, then chain_len x u64 moduli
//! params.scale               f64 bits
//! params.error_stddev        f64 bits
//! level                      u64
//! scale                      f64 bits
//! poly_count                 u64
//! per poly: moduli_count     u64, then moduli_count x ring_dim x u64 residues
//! ```
//! Every integer is little-endian. Keys carry level = chain_len - 1 and the
//! parameter scale.

use super::cipher::{Ciphertext, Plaintext, PublicKey, SecretKey};
use super::params::CkksParams;
use super::poly::PolyRns;
use super::CkksError;

pub const MAGIC: &[u8; 4] = b"CKKS";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Plaintext = 1,
    Ciphertext = 2,
    PublicKey = 3,
    SecretKey = 4,
}

impl Kind {
    fn from_byte(b: u8) -> Result<Self, CkksError> {
        Ok(match b {
            1 => Kind::Plaintext,
            2 => Kind::Ciphertext,
            3 => Kind::PublicKey,
            4 => Kind::SecretKey,
            other => return Err(CkksError::Format(format!("unknown object kind {other}"))),
        })
    }
}

fn write_header(out: &mut Vec<u8>, params: &CkksParams, kind: Kind, level: usize, scale: f64) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(kind as u8);
    out.extend_from_slice(&(params.ring_dim() as u64).to_le_bytes());
    out.extend_from_slice(&(params.modulus_chain().len() as u64).to_le_bytes());
    for &q in params.modulus_chain() {
        out.extend_from_slice(&q.to_le_bytes());
    }
    out.extend_from_slice(&params.scale().to_bits().to_le_bytes());
    out.extend_from_slice(&params.error_stddev().to_bits().to_le_bytes());
    out.extend_from_slice(&(level as u64).to_le_bytes());
    out.extend_from_slice(&scale.to_bits().to_le_bytes());
}

fn write_polys(out: &mut Vec<u8>, polys: &[&PolyRns]) {
    out.extend_from_slice(&(polys.len() as u64).to_le_bytes());
    for p in polys {
        out.extend_from_slice(&(p.moduli_count() as u64).to_le_bytes());
        for row in p.residues() {
            for &r in row {
                out.extend_from_slice(&r.to_le_bytes());
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], CkksError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CkksError::Format("truncated input".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CkksError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, CkksError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CkksError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn len(&mut self, limit: usize) -> Result<usize, CkksError> {
        let v = self.u64()?;
        if v > limit as u64 {
            return Err(CkksError::Format(format!("length {v} exceeds limit {limit}")));
        }
        Ok(v as usize)
    }
}

struct Decoded {
    params: CkksParams,
    kind: Kind,
    level: usize,
    scale: f64,
    polys: Vec<PolyRns>,
}

fn read_object(bytes: &[u8]) -> Result<Decoded, CkksError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CkksError::Format("bad magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(CkksError::Format(format!("unsupported version {version}")));
    }
    let kind = Kind::from_byte(r.u8()?)?;
    let ring_dim = r.len(1 << 17)?;
    let chain_len = r.len(64)?;
    let chain = (0..chain_len).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
    let pscale = r.f64()?;
    let stddev = r.f64()?;
    let params = CkksParams::new(ring_dim, chain, pscale, stddev)?;
    let level = r.len(params.max_level())?;
    let scale = r.f64()?;
    let poly_count = r.len(2)?;
    let mut polys = Vec::with_capacity(poly_count);
    for _ in 0..poly_count {
        let k = r.len(chain_len)?;
        let mut rows = Vec::with_capacity(k);
        for &q in &params.modulus_chain()[..k] {
            let raw = r.take(ring_dim * 8)?;
            let row: Vec<u64> = raw
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if row.iter().any(|&x| x >= q) {
                return Err(CkksError::Format("residue out of range".into()));
            }
            rows.push(row);
        }
        polys.push(PolyRns::from_residues(rows, &params.modulus_chain()[..k]));
    }
    if r.pos != bytes.len() {
        return Err(CkksError::Format("trailing bytes".into()));
    }
    Ok(Decoded {
        params,
        kind,
        level,
        scale,
        polys,
    })
}

fn expect(d: &Decoded, kind: Kind, polys: usize, moduli: usize) -> Result<(), CkksError> {
    if d.kind != kind {
        return Err(CkksError::Format(format!("expected {kind:?}, found {:?}", d.kind)));
    }
    if d.polys.len() != polys || d.polys.iter().any(|p| p.moduli_count() != moduli) {
        return Err(CkksError::Format("polynomial layout inconsistent with level".into()));
    }
    Ok(())
}

pub fn plaintext_to_bytes(params: &CkksParams, pt: &Plaintext) -> Vec<u8> {
    let mut out = Vec::new();
    write_header(&mut out, params, Kind::Plaintext, pt.level, pt.scale);
    write_polys(&mut out, &[&pt.poly]);
    out
}

pub fn ciphertext_to_bytes(params: &CkksParams, ct: &Ciphertext) -> Vec<u8> {
    let mut out = Vec::new();
    write_header(&mut out, params, Kind::Ciphertext, ct.level, ct.scale);
    write_polys(&mut out, &[&ct.c0, &ct.c1]);
    out
}

pub fn public_key_to_bytes(params: &CkksParams, pk: &PublicKey) -> Vec<u8> {
    let mut out = Vec::new();
    write_header(&mut out, params, Kind::PublicKey, params.max_level(), params.scale());
    write_polys(&mut out, &[&pk.b, &pk.a]);
    out
}

pub fn secret_key_to_bytes(params: &CkksParams, sk: &SecretKey) -> Vec<u8> {
    let mut out = Vec::new();
    write_header(&mut out, params, Kind::SecretKey, params.max_level(), params.scale());
    write_polys(&mut out, &[&sk.s]);
    out
}

pub fn plaintext_from_bytes(bytes: &[u8]) -> Result<(CkksParams, Plaintext), CkksError> {
    let d = read_object(bytes)?;
    expect(&d, Kind::Plaintext, 1, d.level + 1)?;
    let mut polys = d.polys;
    Ok((
        d.params,
        Plaintext {
            poly: polys.remove(0),
            level: d.level,
            scale: d.scale,
        },
    ))
}

pub fn ciphertext_from_bytes(bytes: &[u8]) -> Result<(CkksParams, Ciphertext), CkksError> {
    let d = read_object(bytes)?;
    expect(&d, Kind::Ciphertext, 2, d.level + 1)?;
    let mut polys = d.polys.into_iter();
    Ok((
        d.params,
        Ciphertext {
            c0: polys.next().unwrap(),
            c1: polys.next().unwrap(),
            level: d.level,
            scale: d.scale,
        },
    ))
}

pub fn public_key_from_bytes(bytes: &[u8]) -> Result<(CkksParams, PublicKey), CkksError> {
    let d = read_object(bytes)?;
    let full = d.params.modulus_chain().len();
    expect(&d, Kind::PublicKey, 2, full)?;
    let mut polys = d.polys.into_iter();
    Ok((
        d.params,
        PublicKey {
            b: polys.next().unwrap(),
            a: polys.next().unwrap(),
        },
    ))
}

pub fn secret_key_from_bytes(bytes: &[u8]) -> Result<(CkksParams, SecretKey), CkksError> {
    let d = read_object(bytes)?;
    let full = d.params.modulus_chain().len();
    expect(&d, Kind::SecretKey, 1, full)?;
    Ok((
        d.params,
        SecretKey {
            s: d.polys.into_iter().next().unwrap(),
        },
    ))
}
