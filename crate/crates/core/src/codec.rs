//! Index modulation: packets of log₂(n_tx) bits select the emitting
//! transmitter.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::topology::RegionIndex;

/// Packet-to-index mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CodingScheme {
    /// Packet read as a big-endian binary number.
    Natural,
    /// Packet read as a binary-reflected Gray code word, so neighbouring
    /// indices differ in one bit.
    Gray,
}

impl CodingScheme {
    pub const ALL: [CodingScheme; 2] = [CodingScheme::Natural, CodingScheme::Gray];

    /// Short label used in reports (`NC`/`GC`).
    pub fn label(self) -> &'static str {
        match self {
            CodingScheme::Natural => "NC",
            CodingScheme::Gray => "GC",
        }
    }

    /// Code word transmitted for `index`.
    pub fn encode_index(self, index: u32) -> u32 {
        match self {
            CodingScheme::Natural => index,
            CodingScheme::Gray => index ^ (index >> 1),
        }
    }

    /// Index selected by `word`.
    pub fn decode_word(self, word: u32) -> u32 {
        match self {
            CodingScheme::Natural => word,
            CodingScheme::Gray => {
                let mut index = word;
                let mut shift = word >> 1;
                while shift != 0 {
                    index ^= shift;
                    shift >>= 1;
                }
                index
            }
        }
    }
}

impl fmt::Display for CodingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CodingScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nc" | "natural" => Ok(CodingScheme::Natural),
            "gc" | "gray" => Ok(CodingScheme::Gray),
            _ => Err(Error::InvalidInput(format!("unknown coding scheme `{s}`"))),
        }
    }
}

fn bits_per_symbol(n_tx: usize) -> Result<usize> {
    if n_tx < 2 || !n_tx.is_power_of_two() || n_tx > 256 {
        return Err(Error::InvalidInput(format!(
            "n_tx must be a power of two in [2, 256], got {n_tx}"
        )));
    }
    Ok(n_tx.trailing_zeros() as usize)
}

/// Splits `bits` (each 0 or 1) into packets and maps each to a transmitter.
pub fn bits_to_symbols(bits: &[u8], scheme: CodingScheme, n_tx: usize) -> Result<Vec<RegionIndex>> {
    let k = bits_per_symbol(n_tx)?;
    if bits.len() % k != 0 {
        return Err(Error::InvalidInput(format!(
            "bit block of length {} is not a multiple of the packet size {k}",
            bits.len()
        )));
    }
    bits.chunks(k)
        .map(|packet| {
            let mut word = 0u32;
            for &b in packet {
                if b > 1 {
                    return Err(Error::InvalidInput(format!("bit value {b} is not 0 or 1")));
                }
                word = (word << 1) | b as u32;
            }
            Ok(RegionIndex(scheme.decode_word(word) as u8))
        })
        .collect()
}

/// Inverse of [`bits_to_symbols`].
pub fn symbols_to_bits(symbols: &[RegionIndex], scheme: CodingScheme, n_tx: usize) -> Result<Vec<u8>> {
    let k = bits_per_symbol(n_tx)?;
    let mut bits = Vec::with_capacity(symbols.len() * k);
    for s in symbols {
        if s.get() >= n_tx {
            return Err(Error::InvalidInput(format!(
                "symbol {s} out of range for {n_tx} transmitters"
            )));
        }
        let word = scheme.encode_index(s.get() as u32);
        bits.extend((0..k).rev().map(|i| ((word >> i) & 1) as u8));
    }
    Ok(bits)
}

/// Number of positions where the streams differ.
pub fn bit_errors(true_bits: &[u8], decoded_bits: &[u8]) -> Result<u64> {
    if true_bits.len() != decoded_bits.len() {
        return Err(Error::InvalidInput(format!(
            "bit streams differ in length ({} vs {})",
            true_bits.len(),
            decoded_bits.len()
        )));
    }
    Ok(true_bits.iter().zip(decoded_bits).filter(|(a, b)| a != b).count() as u64)
}

/// Hamming distance divided by the stream length.
pub fn bit_error_rate(true_bits: &[u8], decoded_bits: &[u8]) -> Result<f64> {
    if true_bits.is_empty() {
        return Err(Error::InvalidInput("empty bit streams".into()));
    }
    Ok(bit_errors(true_bits, decoded_bits)? as f64 / true_bits.len() as f64)
}

/// Bit errors between two symbol sequences under a coding scheme.
pub fn symbol_bit_errors(
    truth: &[RegionIndex],
    decoded: &[RegionIndex],
    scheme: CodingScheme,
    n_tx: usize,
) -> Result<u64> {
    bit_errors(
        &symbols_to_bits(truth, scheme, n_tx)?,
        &symbols_to_bits(decoded, scheme, n_tx)?,
    )
}

/// Bit duration `t_b = t_s / log₂(n_tx)`.
pub fn bit_duration(symbol_duration: f64, n_tx: usize) -> Result<f64> {
    if !(symbol_duration > 0.0) {
        return Err(Error::InvalidInput(format!(
            "symbol duration must be positive, got {symbol_duration}"
        )));
    }
    Ok(symbol_duration / bits_per_symbol(n_tx)? as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(v: u8) -> RegionIndex {
        RegionIndex(v)
    }

    #[test]
    fn packet_examples() {
        for scheme in CodingScheme::ALL {
            assert_eq!(bits_to_symbols(&[0, 0, 0], scheme, 8).unwrap(), vec![sym(0)]);
        }
        assert_eq!(bits_to_symbols(&[0, 1, 0], CodingScheme::Gray, 8).unwrap(), vec![sym(3)]);
        assert_eq!(bits_to_symbols(&[1, 1, 1], CodingScheme::Natural, 8).unwrap(), vec![sym(7)]);
        assert_eq!(symbols_to_bits(&[sym(7)], CodingScheme::Natural, 8).unwrap(), vec![1, 1, 1]);
        assert_eq!(symbols_to_bits(&[sym(3)], CodingScheme::Gray, 8).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn exhaustive_bijection_and_gray_adjacency() {
        for scheme in CodingScheme::ALL {
            let mut seen = [false; 8];
            for i in 0..8u8 {
                let bits = symbols_to_bits(&[sym(i)], scheme, 8).unwrap();
                let back = bits_to_symbols(&bits, scheme, 8).unwrap();
                assert_eq!(back, vec![sym(i)]);
                let word = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
                assert!(!seen[word]);
                seen[word] = true;
            }
        }
        for i in 0..7u8 {
            let a = symbols_to_bits(&[sym(i)], CodingScheme::Gray, 8).unwrap();
            let b = symbols_to_bits(&[sym(i + 1)], CodingScheme::Gray, 8).unwrap();
            assert_eq!(bit_errors(&a, &b).unwrap(), 1, "gray({i}) vs gray({})", i + 1);
        }
    }

    #[test]
    fn ber_examples() {
        let bits = [0, 1, 1, 0, 1, 0];
        assert_eq!(bit_error_rate(&bits, &bits).unwrap(), 0.0);
        let nc = symbol_bit_errors(&[sym(0)], &[sym(7)], CodingScheme::Natural, 8).unwrap();
        assert_eq!(nc, 3);
        let gc = symbol_bit_errors(&[sym(0)], &[sym(1)], CodingScheme::Gray, 8).unwrap();
        assert_eq!(gc, 1);
        assert!(bit_error_rate(&[0, 1], &[0]).is_err());
        assert!(bit_error_rate(&[], &[]).is_err());
    }

    #[test]
    fn malformed_inputs() {
        assert!(bits_to_symbols(&[0, 1], CodingScheme::Natural, 8).is_err());
        assert!(bits_to_symbols(&[0, 2, 1], CodingScheme::Natural, 8).is_err());
        assert!(symbols_to_bits(&[sym(8)], CodingScheme::Gray, 8).is_err());
        assert!(bits_to_symbols(&[0, 1, 1], CodingScheme::Natural, 6).is_err());
    }

    #[test]
    fn bit_durations() {
        assert!((bit_duration(0.5, 8).unwrap() - 0.16667).abs() < 1e-5);
        assert!((bit_duration(5.0 / 3.0, 8).unwrap() - 0.5556).abs() < 1e-4);
        assert_eq!(bit_duration(0.7, 2).unwrap(), 0.7);
        assert!(bit_duration(0.0, 8).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(bits in proptest::collection::vec(0u8..2, 0..20).prop_map(|mut v| { v.truncate(v.len() / 4 * 4); v }),
                      gray in any::<bool>()) {
            let scheme = if gray { CodingScheme::Gray } else { CodingScheme::Natural };
            let s = bits_to_symbols(&bits, scheme, 16).unwrap();
            prop_assert_eq!(symbols_to_bits(&s, scheme, 16).unwrap(), bits);
        }

        #[test]
        fn ber_symmetric(a in proptest::collection::vec(0u8..2, 1..64), seed in any::<u64>()) {
            let b: Vec<u8> = a.iter().enumerate().map(|(i, &x)| x ^ ((seed >> (i % 64)) & 1) as u8).collect();
            prop_assert_eq!(bit_error_rate(&a, &b).unwrap(), bit_error_rate(&b, &a).unwrap());
            let mut ra = a.clone(); ra.reverse();
            let mut rb = b.clone(); rb.reverse();
            prop_assert_eq!(bit_errors(&a, &b).unwrap(), bit_errors(&ra, &rb).unwrap());
        }
    }
}
