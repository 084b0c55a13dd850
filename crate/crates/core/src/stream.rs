//! File formats shared by the simulator, cipher and analysis tools.
//!
//! * Symbol stream: 2-octet records, a flags octet (bit 0 = K, other bits
//!   zero) followed by the data octet.
//! * Keystream dump: 16-bit little-endian values in 0..267.
//! * Bitstream: packed octets, most significant bit first.

use thiserror::Error;

use crate::keystream::{BankKey, GeneratorCell, Keystream, OutWidth, MODULUS};
use crate::symbol::Symbol;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("stream length {0} is not a whole number of 2-octet records")]
    OddLength(usize),
    #[error(
        "record at offset {offset}: flags {flags:#04x} octet {octet:#04x} is not a valid symbol"
    )]
    InvalidRecord { offset: usize, flags: u8, octet: u8 },
    #[error("value {value} at offset {offset} is outside 0..267")]
    ValueOutOfRange { offset: usize, value: u16 },
}

pub fn encode_symbols(symbols: &[Symbol]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|s| [s.is_control() as u8, s.octet()])
        .collect()
}

pub fn decode_symbols(bytes: &[u8]) -> Result<Vec<Symbol>, StreamError> {
    if !bytes.len().is_multiple_of(2) {
        return Err(StreamError::OddLength(bytes.len()));
    }
    bytes
        .chunks_exact(2)
        .enumerate()
        .map(|(i, r)| {
            let (flags, octet) = (r[0], r[1]);
            let sym = match flags {
                0 => Some(Symbol::data(octet)),
                1 => Symbol::control(octet),
                _ => None,
            };
            sym.ok_or(StreamError::InvalidRecord {
                offset: 2 * i,
                flags,
                octet,
            })
        })
        .collect()
}

pub fn encode_values(values: &[u16]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_values(bytes: &[u8]) -> Result<Vec<u16>, StreamError> {
    if !bytes.len().is_multiple_of(2) {
        return Err(StreamError::OddLength(bytes.len()));
    }
    bytes
        .chunks_exact(2)
        .enumerate()
        .map(|(i, r)| {
            let value = u16::from_le_bytes([r[0], r[1]]);
            if value < MODULUS {
                Ok(value)
            } else {
                Err(StreamError::ValueOutOfRange {
                    offset: 2 * i,
                    value,
                })
            }
        })
        .collect()
}

pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |b, (i, &x)| b | (x as u8) << (7 - i))
        })
        .collect()
}

pub fn unpack_bits(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).map(move |i| b & (0x80 >> i) != 0))
        .collect()
}

/// `n` keystream values.
pub fn keystream_values<K: Keystream>(ks: &mut K, n: usize) -> Vec<u16> {
    (0..n).map(|_| ks.next_value().value()).collect()
}

/// Raw output of one 8-bit generator cell, most significant bit first.
pub fn cell_bitstream(key: &BankKey, cell: usize, nbits: usize) -> Vec<bool> {
    let mut g = GeneratorCell::new(key.cells()[cell], OutWidth::Eight)
        .expect("BankKey is validated on construction");
    let bytes: Vec<u8> = (0..nbits.div_ceil(8))
        .map(|_| g.next_output() as u8)
        .collect();
    let mut bits = unpack_bits(&bytes);
    bits.truncate(nbits);
    bits
}
