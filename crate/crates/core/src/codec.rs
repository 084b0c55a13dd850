//! 8b10b line code (IEEE 802.3 Clause 36).
//!
//! The code tables live in `data/8b10b_table.csv`, generated and validated by
//! `tools/gen_8b10b_table.py`. Code group bits are kept in transmission order
//! `abcdeifghj`, with bit `a` stored as bit 9 of the `u16`, so the group for
//! D0.0 at RD- reads `0b1001110100` the same in tables and as a literal.
//!
//! Running disparity is always passed in and returned explicitly.

use std::fmt;
use std::sync::LazyLock;

use thiserror::Error;

use crate::symbol::{Symbol, CONTROL_OCTETS};

const TABLE_CSV: &str = include_str!("../data/8b10b_table.csv");

/// A 10-bit code group, bits ordered `abcdeifghj` from bit 9 down to bit 0.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CodeGroup(u16);

impl CodeGroup {
    pub const fn new(bits: u16) -> Option<Self> {
        if bits < 1 << 10 {
            Some(CodeGroup(bits))
        } else {
            None
        }
    }

    /// Parses a string of ten `0`/`1` characters, `a` first.
    pub fn from_bit_str(s: &str) -> Option<Self> {
        if s.len() != 10 {
            return None;
        }
        u16::from_str_radix(s, 2).ok().and_then(Self::new)
    }

    pub const fn bits(self) -> u16 {
        self.0
    }

    pub const fn ones(self) -> u32 {
        self.0.count_ones()
    }

    /// Bit `i` in transmission order (`0` is `a`, `9` is `j`).
    pub const fn bit(self, i: usize) -> bool {
        (self.0 >> (9 - i)) & 1 == 1
    }

    /// The `abcdei` sub-block.
    pub const fn six(self) -> u16 {
        self.0 >> 4
    }

    /// The `fghj` sub-block.
    pub const fn four(self) -> u16 {
        self.0 & 0xF
    }
}

impl fmt::Debug for CodeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:010b}", self.0)
    }
}

impl fmt::Display for CodeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum RunningDisparity {
    #[default]
    Negative,
    Positive,
}

impl RunningDisparity {
    const fn column(self) -> usize {
        match self {
            RunningDisparity::Negative => 0,
            RunningDisparity::Positive => 1,
        }
    }

    pub const fn flip(self) -> Self {
        match self {
            RunningDisparity::Negative => RunningDisparity::Positive,
            RunningDisparity::Positive => RunningDisparity::Negative,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("code group {0:?} is not in the 8b10b tables")]
    InvalidCodeGroup(CodeGroup),
    #[error(
        "code group {group:?} is only valid at the opposite running disparity (decoded at {rd:?})"
    )]
    DisparityError {
        group: CodeGroup,
        rd: RunningDisparity,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("octet {0:#04x} is not a valid control code")]
    InvalidControl(u8),
}

struct Tables {
    /// Indexed by symbol ordinal, then disparity column.
    encode: [[CodeGroup; 2]; 268],
    /// Indexed by group bits, then disparity column.
    decode: Vec<[Option<Symbol>; 2]>,
    names: [&'static str; 268],
}

fn ordinal(sym: Symbol) -> usize {
    if sym.is_control() {
        256 + CONTROL_OCTETS
            .iter()
            .position(|&o| o == sym.octet())
            .expect("Symbol guarantees a valid control octet")
    } else {
        sym.octet() as usize
    }
}

fn parse_tables() -> Tables {
    let mut encode = [[CodeGroup(0); 2]; 268];
    let mut names = [""; 268];
    let mut decode = vec![[None; 2]; 1 << 10];
    let mut rows = 0;
    for line in TABLE_CSV.lines() {
        if line.starts_with('#') || line.starts_with("name,") || line.is_empty() {
            continue;
        }
        let cols: Vec<&'static str> = line.split(',').collect();
        assert_eq!(cols.len(), 5, "malformed code table row: {line}");
        let octet = u8::from_str_radix(cols[1].trim_start_matches("0x"), 16).expect("octet column");
        let sym = Symbol::new(octet, cols[0].starts_with('K')).expect("valid symbol in table");
        let ord = ordinal(sym);
        for (column, text) in [(0usize, cols[2]), (1, cols[3])] {
            let group = CodeGroup::from_bit_str(text).expect("10-bit group in table");
            encode[ord][column] = group;
            decode[group.bits() as usize][column] = Some(sym);
        }
        names[ord] = cols[0];
        rows += 1;
    }
    assert_eq!(rows, 268, "code table must list 268 symbols");
    Tables {
        encode,
        decode,
        names,
    }
}

static TABLES: LazyLock<Tables> = LazyLock::new(parse_tables);

/// Disparity after a sub-block of `width` bits, per the Clause 36 rules.
fn sub_block_rd(bits: u16, width: u32, rd: RunningDisparity) -> RunningDisparity {
    let ones = bits.count_ones();
    let half = width / 2;
    let balanced_positive = (width == 6 && bits == 0b000111) || (width == 4 && bits == 0b0011);
    let balanced_negative = (width == 6 && bits == 0b111000) || (width == 4 && bits == 0b1100);
    if ones > half || balanced_positive {
        RunningDisparity::Positive
    } else if ones < half || balanced_negative {
        RunningDisparity::Negative
    } else {
        rd
    }
}

/// Running disparity at the end of `group` when it starts at `rd`.
pub fn disparity_after(group: CodeGroup, rd: RunningDisparity) -> RunningDisparity {
    let rd6 = sub_block_rd(group.six(), 6, rd);
    sub_block_rd(group.four(), 4, rd6)
}

/// Encodes one symbol and returns the group with the updated disparity.
pub fn encode_symbol(sym: Symbol, rd: RunningDisparity) -> (CodeGroup, RunningDisparity) {
    let group = TABLES.encode[ordinal(sym)][rd.column()];
    (group, disparity_after(group, rd))
}

/// Raw-pair form of [`encode_symbol`] for callers holding an unchecked K flag.
pub fn encode_octet(
    octet: u8,
    is_control: bool,
    rd: RunningDisparity,
) -> Result<(CodeGroup, RunningDisparity), EncodeError> {
    let sym = Symbol::new(octet, is_control).ok_or(EncodeError::InvalidControl(octet))?;
    Ok(encode_symbol(sym, rd))
}

pub fn decode_codegroup(
    group: CodeGroup,
    rd: RunningDisparity,
) -> Result<(Symbol, RunningDisparity), DecodeError> {
    let entry = TABLES.decode[group.bits() as usize];
    match entry[rd.column()] {
        Some(sym) => Ok((sym, disparity_after(group, rd))),
        None if entry[rd.flip().column()].is_some() => {
            Err(DecodeError::DisparityError { group, rd })
        }
        None => Err(DecodeError::InvalidCodeGroup(group)),
    }
}

/// `Dx.y` / `Kx.y` name as listed in the code table.
pub fn symbol_name(sym: Symbol) -> &'static str {
    TABLES.names[ordinal(sym)]
}

/// Concatenates groups in transmission order, bit `a` first.
pub fn serialize(groups: &[CodeGroup]) -> Vec<bool> {
    let mut bits = Vec::with_capacity(groups.len() * 10);
    for g in groups {
        bits.extend((0..10).map(|i| g.bit(i)));
    }
    bits
}

/// Splits a bitstream into groups starting at `offset`; a trailing partial
/// group is dropped.
pub fn deserialize(bits: &[bool], offset: usize) -> Vec<CodeGroup> {
    bits.get(offset..)
        .unwrap_or(&[])
        .chunks_exact(10)
        .map(|chunk| {
            let v = chunk.iter().fold(0u16, |acc, &b| (acc << 1) | b as u16);
            CodeGroup(v)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("no comma found in bitstream")]
    NotFound,
}

const COMMA_PLUS: [bool; 7] = [false, false, true, true, true, true, true];
const COMMA_MINUS: [bool; 7] = [true, true, false, false, false, false, false];

/// Bit offset of the first comma (`0011111` or `1100000`), which is also the
/// start of the comma-bearing code group.
pub fn align_comma(bits: &[bool]) -> Result<usize, AlignError> {
    bits.windows(7)
        .position(|w| w == COMMA_PLUS || w == COMMA_MINUS)
        .ok_or(AlignError::NotFound)
}

/// Stateful convenience wrapper that threads disparity through a stream.
#[derive(Clone, Debug, Default)]
pub struct Encoder {
    pub rd: RunningDisparity,
}

impl Encoder {
    pub fn encode(&mut self, sym: Symbol) -> CodeGroup {
        let (group, rd) = encode_symbol(sym, self.rd);
        self.rd = rd;
        group
    }
}

/// Decoder counterpart of [`Encoder`]. On error the disparity is recomputed
/// from the received group so one bad group does not poison the rest.
#[derive(Clone, Debug, Default)]
pub struct Decoder {
    pub rd: RunningDisparity,
}

impl Decoder {
    pub fn decode(&mut self, group: CodeGroup) -> Result<Symbol, DecodeError> {
        match decode_codegroup(group, self.rd) {
            Ok((sym, rd)) => {
                self.rd = rd;
                Ok(sym)
            }
            Err(e) => {
                self.rd = disparity_after(group, self.rd);
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use RunningDisparity::*;

    fn g(s: &str) -> CodeGroup {
        CodeGroup::from_bit_str(s).unwrap()
    }

    #[test]
    fn reference_vectors() {
        // D0.0 is neutral (5 ones): its 6b block ends RD+, its 4b block
        // brings the disparity back, so RD- is preserved.
        assert_eq!(
            encode_symbol(Symbol::data(0), Negative),
            (g("1001110100"), Negative)
        );
        assert_eq!(
            encode_symbol(Symbol::K28_5, Negative),
            (g("0011111010"), Positive)
        );
        assert_eq!(
            decode_codegroup(g("1001110100"), Negative),
            Ok((Symbol::data(0), Negative))
        );
    }

    #[test]
    fn all_zero_group_is_invalid() {
        assert_eq!(
            decode_codegroup(g("0000000000"), Negative),
            Err(DecodeError::InvalidCodeGroup(g("0000000000")))
        );
    }

    #[test]
    fn rd_plus_only_group_at_rd_minus_is_disparity_error() {
        // D0.0 RD+ column
        let plus = g("0110001011");
        assert!(decode_codegroup(plus, Positive).is_ok());
        assert_eq!(
            decode_codegroup(plus, Negative),
            Err(DecodeError::DisparityError {
                group: plus,
                rd: Negative
            })
        );
    }

    #[test]
    fn raw_encode_rejects_non_k_octets() {
        assert_eq!(
            encode_octet(0x00, true, Negative),
            Err(EncodeError::InvalidControl(0x00))
        );
        assert!(encode_octet(0xFC, true, Negative).is_ok());
    }

    #[test]
    fn serialize_edges() {
        assert!(serialize(&[]).is_empty());
        let bits = serialize(&[g("1001110100")]);
        let expect: Vec<bool> = "1001110100".chars().map(|c| c == '1').collect();
        assert_eq!(bits, expect);
        assert_eq!(deserialize(&bits, 0), vec![g("1001110100")]);
    }

    #[test]
    fn comma_alignment() {
        let k285 = serialize(&[g("0011111010")]);
        assert_eq!(align_comma(&k285), Ok(0));
        let mut shifted = vec![true, false, true];
        shifted.extend(&k285);
        assert_eq!(align_comma(&shifted), Ok(3));
        assert_eq!(align_comma(&[false; 40]), Err(AlignError::NotFound));
    }

    #[test]
    fn names_come_from_the_table() {
        assert_eq!(symbol_name(Symbol::K28_7), "K28.7");
        assert_eq!(symbol_name(Symbol::data(0xB5)), "D21.5");
    }
}
