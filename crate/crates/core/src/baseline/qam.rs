//! Gray-mapped square 16-QAM.
//!
//! A nibble `b3 b2 b1 b0` maps its high bit pair to the in-phase level and
//! its low bit pair to the quadrature level, each through the Gray sequence
//! `00, 01, 11, 10` on levels `-3, -1, +1, +3`. Points are scaled by `1/√10`
//! for unit average energy. Bytes are sent high nibble first.

use num_complex::Complex64;

use crate::channel::ComplexSignal;
use crate::error::{Error, Result};

pub const BITS_PER_SYMBOL: usize = 4;

const LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
/// Gray bit pair carried by each level index.
const GRAY: [u8; 4] = [0b00, 0b01, 0b11, 0b10];

fn scale() -> f64 {
    1.0 / 10f64.sqrt()
}

fn level_of(pair: u8) -> f64 {
    let idx = GRAY.iter().position(|&g| g == pair & 0b11).expect("2-bit pair");
    LEVELS[idx] * scale()
}

fn pair_of(v: f64) -> u8 {
    let u = v / scale();
    let idx = if u < -2.0 {
        0
    } else if u < 0.0 {
        1
    } else if u < 2.0 {
        2
    } else {
        3
    };
    GRAY[idx]
}

/// Constellation point of one nibble.
pub fn map_nibble(nibble: u8) -> Complex64 {
    Complex64::new(level_of(nibble >> 2), level_of(nibble))
}

/// Nearest-point hard decision.
pub fn demap_symbol(y: Complex64) -> u8 {
    (pair_of(y.re) << 2) | pair_of(y.im)
}

/// Modulates a bit sequence (one bit per element, values 0 or 1).
pub fn qam16_modulate(bits: &[u8]) -> Result<ComplexSignal> {
    if bits.len() % BITS_PER_SYMBOL != 0 {
        return Err(Error::Contract(format!(
            "bit length {} is not a multiple of {BITS_PER_SYMBOL}",
            bits.len()
        )));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::Domain(format!("bit value {b}")));
    }
    let symbols = bits
        .chunks(BITS_PER_SYMBOL)
        .map(|c| map_nibble(c.iter().fold(0u8, |acc, &b| (acc << 1) | b)))
        .collect();
    Ok(ComplexSignal::new(symbols))
}

/// Hard-decision demodulation back to one bit per element.
pub fn qam16_demodulate(signal: &ComplexSignal) -> Vec<u8> {
    signal
        .symbols
        .iter()
        .flat_map(|&y| {
            let n = demap_symbol(y);
            (0..BITS_PER_SYMBOL).rev().map(move |k| (n >> k) & 1)
        })
        .collect()
}

/// Bytes to symbols, high nibble first.
pub fn modulate_bytes(bytes: &[u8]) -> ComplexSignal {
    ComplexSignal::new(
        bytes
            .iter()
            .flat_map(|&b| [map_nibble(b >> 4), map_nibble(b & 0x0f)])
            .collect(),
    )
}

/// Symbols to bytes; the symbol count must be even.
pub fn demodulate_bytes(signal: &ComplexSignal) -> Result<Vec<u8>> {
    if signal.len() % 2 != 0 {
        return Err(Error::Contract(format!(
            "{} symbols do not pair into bytes",
            signal.len()
        )));
    }
    Ok(signal
        .symbols
        .chunks(2)
        .map(|p| (demap_symbol(p[0]) << 4) | demap_symbol(p[1]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::apply_awgn;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Exact symbol error rate of the per-axis nearest-point detector at
    /// Es/N0 = `gamma` (linear): `1 - (1 - 1.5 Q(√(γ/5)))²`.
    fn ser_oracle(gamma: f64) -> f64 {
        let q = 0.5 * libm::erfc((gamma / 5.0).sqrt() / std::f64::consts::SQRT_2);
        let p = 1.5 * q;
        1.0 - (1.0 - p) * (1.0 - p)
    }

    #[test]
    fn unit_average_energy() {
        let e: f64 = (0..16u8).map(|n| map_nibble(n).norm_sqr()).sum::<f64>() / 16.0;
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_round_trip() {
        for n in 0..16u8 {
            assert_eq!(demap_symbol(map_nibble(n)), n);
        }
        let bytes: Vec<u8> = (0..=255).collect();
        assert_eq!(demodulate_bytes(&modulate_bytes(&bytes)).unwrap(), bytes);
    }

    #[test]
    fn adjacent_points_differ_in_one_bit() {
        let step = 2.0 * scale();
        for a in 0..16u8 {
            for b in 0..16u8 {
                let d = (map_nibble(a) - map_nibble(b)).norm();
                if (d - step).abs() < 1e-9 {
                    assert_eq!((a ^ b).count_ones(), 1, "{a:04b} vs {b:04b}");
                }
            }
        }
    }

    #[test]
    fn bit_and_byte_paths_agree() {
        let bytes = [0xa5u8, 0x3c];
        let bits: Vec<u8> = bytes.iter().flat_map(|&b| (0..8).rev().map(move |k| (b >> k) & 1)).collect();
        assert_eq!(qam16_modulate(&bits).unwrap(), modulate_bytes(&bytes));
        assert_eq!(qam16_demodulate(&modulate_bytes(&bytes)), bits);
    }

    #[test]
    fn rejects_ragged_bits() {
        assert!(matches!(qam16_modulate(&[1, 0, 1]), Err(Error::Contract(_))));
        assert!(qam16_modulate(&[2, 0, 0, 0]).is_err());
    }

    #[test]
    fn ser_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 200_000;
        let nibbles: Vec<u8> = (0..n).map(|i| (i * 7 % 16) as u8).collect();
        let tx = ComplexSignal::new(nibbles.iter().map(|&b| map_nibble(b)).collect());
        for snr_db in [4.0, 8.0, 12.0] {
            let rx = apply_awgn(&tx, snr_db, &mut rng);
            let errors = rx.symbols.iter().zip(&nibbles).filter(|(&y, &b)| demap_symbol(y) != b).count();
            let ser = errors as f64 / n as f64;
            let oracle = ser_oracle(10f64.powf(snr_db / 10.0));
            assert!((ser - oracle).abs() / oracle < 0.1, "{snr_db} dB: {ser} vs {oracle}");
        }
    }

    proptest! {
        #[test]
        fn byte_round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
            prop_assert_eq!(demodulate_bytes(&modulate_bytes(&bytes)).unwrap(), bytes);
        }
    }
}
