//! Format-preserving stream cipher over the 267 encryptable symbols.
//!
//! Data symbols map to their octet value. The eleven admitted control
//! symbols map to 256..=266 in ascending octet order. K28.7 is excluded and
//! refused.

use thiserror::Error;

use crate::keystream::{Keystream, KeystreamValue, MODULUS};
use crate::symbol::Symbol;

/// Control octets in index order, 256 + position.
pub const MAPPED_CONTROLS: [u8; 11] = [
    0x1C, 0x3C, 0x5C, 0x7C, 0x9C, 0xBC, 0xDC, 0xF7, 0xFB, 0xFD, 0xFE,
];

/// Pipeline depth of the cipher unit (map, add, reverse map).
pub const CIPHER_LATENCY: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolIndex(u16);

impl SymbolIndex {
    pub fn new(value: u16) -> Result<Self, MappingError> {
        if value < MODULUS {
            Ok(SymbolIndex(value))
        } else {
            Err(MappingError::IndexOutOfRange(value))
        }
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("K28.7 is excluded from the cipher alphabet")]
    ExcludedSymbol,
    #[error("index {0} is outside 0..267")]
    IndexOutOfRange(u16),
}

const fn control_index_table() -> [u16; 256] {
    let mut t = [u16::MAX; 256];
    let mut i = 0;
    while i < MAPPED_CONTROLS.len() {
        t[MAPPED_CONTROLS[i] as usize] = 256 + i as u16;
        i += 1;
    }
    t
}

const CONTROL_INDEX: [u16; 256] = control_index_table();

pub fn symbol_to_index(s: Symbol) -> Result<SymbolIndex, MappingError> {
    if !s.is_control() {
        return Ok(SymbolIndex(s.octet() as u16));
    }
    match CONTROL_INDEX[s.octet() as usize] {
        u16::MAX => Err(MappingError::ExcludedSymbol),
        i => Ok(SymbolIndex(i)),
    }
}

pub fn index_to_symbol(i: SymbolIndex) -> Symbol {
    match i.0 {
        v @ 0..=255 => Symbol::data(v as u8),
        v => Symbol::control(MAPPED_CONTROLS[(v - 256) as usize])
            .expect("mapped controls are valid K codes"),
    }
}

pub fn encrypt_index(p: SymbolIndex, k: KeystreamValue) -> SymbolIndex {
    SymbolIndex((p.0 + k.value()) % MODULUS)
}

pub fn decrypt_index(c: SymbolIndex, k: KeystreamValue) -> SymbolIndex {
    SymbolIndex((c.0 + MODULUS - k.value()) % MODULUS)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Encrypt,
    Decrypt,
}

/// Map, combine with one keystream value, reverse map.
///
/// A refused symbol consumes no keystream.
pub fn cipher_step<K: Keystream + ?Sized>(
    s: Symbol,
    keystream: &mut K,
    direction: Direction,
) -> Result<Symbol, MappingError> {
    let index = symbol_to_index(s)?;
    let k = keystream.next_value();
    let out = match direction {
        Direction::Encrypt => encrypt_index(index, k),
        Direction::Decrypt => decrypt_index(index, k),
    };
    Ok(index_to_symbol(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keystream::{BankKey, KeystreamGenerator, ZeroKeystream};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn mapping_points() {
        assert_eq!(symbol_to_index(Symbol::data(0)).unwrap().value(), 0);
        assert_eq!(symbol_to_index(Symbol::K28_5).unwrap().value(), 261);
        assert_eq!(
            symbol_to_index(Symbol::K28_7),
            Err(MappingError::ExcludedSymbol)
        );
        assert_eq!(
            index_to_symbol(SymbolIndex::new(0).unwrap()),
            Symbol::data(0)
        );
        assert_eq!(
            index_to_symbol(SymbolIndex::new(266).unwrap()),
            Symbol::K30_7
        );
        assert_eq!(
            SymbolIndex::new(267),
            Err(MappingError::IndexOutOfRange(267))
        );
    }

    #[test]
    fn mapping_is_a_bijection_on_267_symbols() {
        let mut seen = [false; 267];
        for s in Symbol::all().filter(|&s| s != Symbol::K28_7) {
            let i = symbol_to_index(s).unwrap();
            assert!(!seen[i.value() as usize]);
            seen[i.value() as usize] = true;
            assert_eq!(index_to_symbol(i), s);
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn modular_wraparound() {
        let idx = |v| SymbolIndex::new(v).unwrap();
        let key = |v| KeystreamValue::new(v).unwrap();
        assert_eq!(encrypt_index(idx(0), key(0)), idx(0));
        assert_eq!(encrypt_index(idx(266), key(1)), idx(0));
        assert_eq!(decrypt_index(idx(0), key(1)), idx(266));
        assert_eq!(decrypt_index(idx(200), key(200)), idx(0));
    }

    #[test]
    fn zero_keystream_is_identity() {
        let mut ks = ZeroKeystream::default();
        for s in Symbol::all().filter(|&s| s != Symbol::K28_7) {
            assert_eq!(cipher_step(s, &mut ks, Direction::Encrypt), Ok(s));
        }
        assert_eq!(ks.step(), 267);
        assert_eq!(
            cipher_step(Symbol::K28_7, &mut ks, Direction::Encrypt),
            Err(MappingError::ExcludedSymbol)
        );
        assert_eq!(ks.step(), 267);
    }

    #[test]
    fn equal_generators_invert() {
        let key = BankKey::generate(&mut ChaCha20Rng::seed_from_u64(21));
        let mut tx = KeystreamGenerator::new(key);
        let mut rx = KeystreamGenerator::new(key);
        let plain: Vec<Symbol> = Symbol::all()
            .filter(|&s| s != Symbol::K28_7)
            .cycle()
            .take(5000)
            .collect();
        for &p in &plain {
            let c = cipher_step(p, &mut tx, Direction::Encrypt).unwrap();
            assert_ne!(c, Symbol::K28_7);
            assert_eq!(cipher_step(c, &mut rx, Direction::Decrypt).unwrap(), p);
        }
    }
}
