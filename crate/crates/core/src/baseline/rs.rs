//! Reed-Solomon RS(255, 152) over GF(2^8).
//!
//! Field polynomial `x^8 + x^4 + x^3 + x^2 + 1` (0x11D), primitive element
//! `α = 2`, generator roots `α^0 .. α^102`. Codewords are systematic with the
//! payload first and the 103 parity bytes last; byte `i` of a codeword is
//! the coefficient of `x^(254 - i)`. Decoding is bounded-distance
//! (Berlekamp-Massey, Chien search, Forney) and corrects up to 51 byte errors.

use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const N: usize = 255;
pub const K: usize = 152;
pub const PARITY: usize = N - K;
/// Correction radius `⌊(n - k) / 2⌋`.
pub const T: usize = PARITY / 2;
pub const PRIMITIVE_POLY: u16 = 0x11d;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
    generator: Vec<u8>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut exp = [0u8; 512];
        let mut log = [0u8; 256];
        let mut x: u16 = 1;
        for i in 0..255 {
            exp[i] = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= PRIMITIVE_POLY;
            }
        }
        for i in 255..512 {
            exp[i] = exp[i - 255];
        }
        let mut t = Tables {
            exp,
            log,
            generator: vec![1],
        };
        // g(x) = Π (x - α^j), highest degree first.
        for j in 0..PARITY {
            let root = t.exp[j];
            let mut next = vec![0u8; t.generator.len() + 1];
            for (i, &c) in t.generator.iter().enumerate() {
                next[i] ^= c;
                next[i + 1] ^= t.mul(c, root);
            }
            t.generator = next;
        }
        t
    })
}

impl Tables {
    fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
        }
    }

    fn div(&self, a: u8, b: u8) -> u8 {
        assert!(b != 0, "division by zero in GF(256)");
        if a == 0 {
            0
        } else {
            self.exp[self.log[a as usize] as usize + 255 - self.log[b as usize] as usize]
        }
    }

    fn pow_alpha(&self, e: usize) -> u8 {
        self.exp[e % 255]
    }

    fn inv(&self, a: u8) -> u8 {
        self.div(1, a)
    }
}

/// Field multiplication.
pub fn gf_mul(a: u8, b: u8) -> u8 {
    tables().mul(a, b)
}

/// `α^e`.
pub fn gf_alpha_pow(e: usize) -> u8 {
    tables().pow_alpha(e)
}

/// Generator polynomial coefficients, highest degree first (monic, degree 103).
pub fn generator() -> &'static [u8] {
    &tables().generator
}

/// Systematic encoding: payload then parity.
pub fn rs_encode(payload: &[u8]) -> Result<[u8; N]> {
    if payload.len() != K {
        return Err(Error::Contract(format!(
            "RS payload must be {K} bytes, got {}",
            payload.len()
        )));
    }
    let t = tables();
    let g = &t.generator;
    let mut rem = [0u8; PARITY];
    for &b in payload {
        let f = b ^ rem[0];
        rem.copy_within(1.., 0);
        rem[PARITY - 1] = 0;
        if f != 0 {
            for (r, &gc) in rem.iter_mut().zip(&g[1..]) {
                *r ^= t.mul(f, gc);
            }
        }
    }
    let mut cw = [0u8; N];
    cw[..K].copy_from_slice(payload);
    cw[K..].copy_from_slice(&rem);
    Ok(cw)
}

/// Successful decode: the payload and the number of corrected bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsDecoded {
    pub payload: Vec<u8>,
    pub corrected: usize,
}

/// Error pattern beyond what the decoder can locate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("uncorrectable codeword")]
pub struct RsFailure;

fn syndromes(t: &Tables, received: &[u8]) -> [u8; PARITY] {
    let mut s = [0u8; PARITY];
    for (j, sj) in s.iter_mut().enumerate() {
        let a = t.pow_alpha(j);
        *sj = received.iter().fold(0u8, |acc, &c| t.mul(acc, a) ^ c);
    }
    s
}

/// Bounded-distance decoding of a 255-byte word.
pub fn rs_decode(received: &[u8]) -> Result<std::result::Result<RsDecoded, RsFailure>> {
    if received.len() != N {
        return Err(Error::Contract(format!(
            "RS codeword must be {N} bytes, got {}",
            received.len()
        )));
    }
    let t = tables();
    let s = syndromes(t, received);
    if s.iter().all(|&x| x == 0) {
        return Ok(Ok(RsDecoded {
            payload: received[..K].to_vec(),
            corrected: 0,
        }));
    }

    // Berlekamp-Massey; polynomials stored lowest degree first.
    let mut lambda = vec![0u8; PARITY + 1];
    lambda[0] = 1;
    let mut prev = lambda.clone();
    let mut l = 0usize;
    let mut m = 1usize;
    let mut b = 1u8;
    for n in 0..PARITY {
        let mut d = s[n];
        for i in 1..=l {
            d ^= t.mul(lambda[i], s[n - i]);
        }
        if d == 0 {
            m += 1;
            continue;
        }
        let coef = t.div(d, b);
        let snapshot = lambda.clone();
        for i in 0..=PARITY - m {
            lambda[i + m] ^= t.mul(coef, prev[i]);
        }
        if 2 * l <= n {
            l = n + 1 - l;
            prev = snapshot;
            b = d;
            m = 1;
        } else {
            m += 1;
        }
    }
    if l > T {
        return Ok(Err(RsFailure));
    }
    lambda.truncate(l + 1);

    // Chien search over the 255 positions. Byte i sits at degree 254 - i,
    // so its locator is X = α^(254 - i) and Λ(X^-1) = 0.
    let mut positions = Vec::with_capacity(l);
    for i in 0..N {
        let x_inv = t.pow_alpha(255 - (N - 1 - i) % 255);
        let v = lambda.iter().rev().fold(0u8, |acc, &c| t.mul(acc, x_inv) ^ c);
        if v == 0 {
            positions.push(i);
        }
    }
    if positions.len() != l {
        return Ok(Err(RsFailure));
    }

    // Ω(x) = S(x) Λ(x) mod x^(2t).
    let mut omega = vec![0u8; PARITY];
    for (i, &li) in lambda.iter().enumerate() {
        for (j, &sj) in s.iter().enumerate() {
            if i + j < PARITY {
                omega[i + j] ^= t.mul(li, sj);
            }
        }
    }
    let mut word = received.to_vec();
    for &i in &positions {
        let degree = N - 1 - i;
        let x = t.pow_alpha(degree);
        let x_inv = t.inv(x);
        let eval = |poly: &[u8]| poly.iter().rev().fold(0u8, |acc, &c| t.mul(acc, x_inv) ^ c);
        let om = eval(&omega);
        // Formal derivative keeps odd-degree terms only.
        let mut dl = 0u8;
        let mut xp = 1u8;
        let x_inv_sq = t.mul(x_inv, x_inv);
        for k in (1..lambda.len()).step_by(2) {
            dl ^= t.mul(lambda[k], xp);
            xp = t.mul(xp, x_inv_sq);
        }
        if dl == 0 {
            return Ok(Err(RsFailure));
        }
        word[i] ^= t.mul(x, t.div(om, dl));
    }
    if syndromes(t, &word).iter().any(|&x| x != 0) {
        return Ok(Err(RsFailure));
    }
    Ok(Ok(RsDecoded {
        payload: word[..K].to_vec(),
        corrected: positions.len(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Carry-less multiply then reduce; independent of the log tables.
    fn slow_mul(mut a: u8, mut b: u8) -> u8 {
        let mut p = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                p ^= a;
            }
            let carry = a & 0x80 != 0;
            a <<= 1;
            if carry {
                a ^= (PRIMITIVE_POLY & 0xff) as u8;
            }
            b >>= 1;
        }
        p
    }

    fn corrupt(cw: &mut [u8], count: usize, rng: &mut ChaCha8Rng) {
        for i in sample(rng, N, count) {
            cw[i] ^= rng.gen_range(1..=255u8);
        }
    }

    #[test]
    fn table_multiply_matches_shift_and_add() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(gf_mul(a, b), slow_mul(a, b));
            }
        }
    }

    #[test]
    fn alpha_is_primitive() {
        let mut seen = std::collections::HashSet::new();
        for e in 0..255 {
            seen.insert(gf_alpha_pow(e));
        }
        assert_eq!(seen.len(), 255);
        assert!(!seen.contains(&0));
    }

    #[test]
    fn codewords_vanish_at_generator_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let payload: Vec<u8> = (0..K).map(|_| rng.gen()).collect();
        let cw = rs_encode(&payload).unwrap();
        for j in 0..PARITY {
            let a = gf_alpha_pow(j);
            let v = cw.iter().fold(0u8, |acc, &c| slow_mul(acc, a) ^ c);
            assert_eq!(v, 0, "root α^{j}");
        }
        assert_eq!(generator().len(), PARITY + 1);
        assert_eq!(generator()[0], 1);
    }

    #[test]
    fn zero_payload_has_zero_parity() {
        let cw = rs_encode(&[0u8; K]).unwrap();
        assert!(cw.iter().all(|&b| b == 0));
        let d = rs_decode(&cw).unwrap().unwrap();
        assert_eq!(d.corrected, 0);
    }

    #[test]
    fn wrong_lengths_are_contract_errors() {
        assert!(matches!(rs_encode(&[0u8; 151]), Err(Error::Contract(_))));
        assert!(matches!(rs_decode(&[0u8; 254]), Err(Error::Contract(_))));
    }

    #[test]
    fn corrects_up_to_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for e in [1, 7, 25, 50, T] {
            for _ in 0..40 {
                let payload: Vec<u8> = (0..K).map(|_| rng.gen()).collect();
                let mut cw = rs_encode(&payload).unwrap();
                corrupt(&mut cw, e, &mut rng);
                let d = rs_decode(&cw).unwrap().expect("within radius");
                assert_eq!(d.payload, payload);
                assert_eq!(d.corrected, e);
            }
        }
    }

    #[test]
    fn beyond_radius_mostly_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let trials = 200;
        let mut failures = 0;
        for _ in 0..trials {
            let payload: Vec<u8> = (0..K).map(|_| rng.gen()).collect();
            let mut cw = rs_encode(&payload).unwrap();
            corrupt(&mut cw, T + 1 + rng.gen_range(0..10), &mut rng);
            match rs_decode(&cw).unwrap() {
                Err(RsFailure) => failures += 1,
                Ok(d) => assert_ne!(d.payload, payload),
            }
        }
        assert!(failures as f64 / trials as f64 > 0.95, "{failures}/{trials}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn noiseless_round_trip(payload in proptest::collection::vec(any::<u8>(), K)) {
            let cw = rs_encode(&payload).unwrap();
            prop_assert_eq!(&cw[..K], &payload[..]);
            let d = rs_decode(&cw).unwrap().unwrap();
            prop_assert_eq!(d.payload, payload);
            prop_assert_eq!(d.corrected, 0);
        }
    }
}
