//! The 8b10b-level symbol: one octet plus the K (control) flag.

use std::fmt;

/// Octets that are legal with the K flag set. `0xFC` is K28.7.
pub const CONTROL_OCTETS: [u8; 12] = [
    0x1C, 0x3C, 0x5C, 0x7C, 0x9C, 0xBC, 0xDC, 0xF7, 0xFB, 0xFC, 0xFD, 0xFE,
];

/// An octet with its K flag, as handed to the 8b10b encoder.
///
/// Construction through [`Symbol::control`] is checked; [`Symbol::data`]
/// accepts any octet. The fields are private so that an invalid control
/// symbol cannot be built outside this module.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol {
    octet: u8,
    is_control: bool,
}

impl Symbol {
    pub const fn data(octet: u8) -> Self {
        Symbol {
            octet,
            is_control: false,
        }
    }

    /// Returns `None` when `octet` is not one of the twelve K codes.
    pub const fn control(octet: u8) -> Option<Self> {
        if is_control_octet(octet) {
            Some(Symbol {
                octet,
                is_control: true,
            })
        } else {
            None
        }
    }

    /// Builds a symbol from a raw (octet, K) pair, rejecting bad K codes.
    pub const fn new(octet: u8, is_control: bool) -> Option<Self> {
        if is_control {
            Self::control(octet)
        } else {
            Some(Self::data(octet))
        }
    }

    const fn k(octet: u8) -> Self {
        Symbol {
            octet,
            is_control: true,
        }
    }

    pub const fn octet(self) -> u8 {
        self.octet
    }

    pub const fn is_control(self) -> bool {
        self.is_control
    }

    /// The `x` of the `Dx.y` / `Kx.y` name (low five bits).
    pub const fn x(self) -> u8 {
        self.octet & 0x1F
    }

    /// The `y` of the `Dx.y` / `Kx.y` name (high three bits).
    pub const fn y(self) -> u8 {
        self.octet >> 5
    }

    /// All 268 valid symbols: the 256 data symbols in octet order, then the
    /// 12 control symbols in octet order.
    pub fn all() -> impl Iterator<Item = Symbol> + Clone {
        (0..=255u8)
            .map(Symbol::data)
            .chain(CONTROL_OCTETS.iter().map(|&o| Symbol::k(o)))
    }

    pub const K28_0: Symbol = Symbol::k(0x1C);
    pub const K28_1: Symbol = Symbol::k(0x3C);
    pub const K28_5: Symbol = Symbol::k(0xBC);
    pub const K28_7: Symbol = Symbol::k(0xFC);
    /// `/R/` carrier extend.
    pub const K23_7: Symbol = Symbol::k(0xF7);
    /// `/S/` start of packet.
    pub const K27_7: Symbol = Symbol::k(0xFB);
    /// `/T/` end of packet.
    pub const K29_7: Symbol = Symbol::k(0xFD);
    /// `/V/` error propagation.
    pub const K30_7: Symbol = Symbol::k(0xFE);

    pub const D5_6: Symbol = Symbol::data(0xC5);
    pub const D16_2: Symbol = Symbol::data(0x50);
    pub const D21_5: Symbol = Symbol::data(0xB5);
    pub const D21_2: Symbol = Symbol::data(0x55);

    pub const START: Symbol = Self::K27_7;
    pub const END: Symbol = Self::K29_7;
    pub const CARRIER_EXTEND: Symbol = Self::K23_7;
    pub const ERROR: Symbol = Self::K30_7;
}

pub const fn is_control_octet(octet: u8) -> bool {
    let mut i = 0;
    while i < CONTROL_OCTETS.len() {
        if CONTROL_OCTETS[i] == octet {
            return true;
        }
        i += 1;
    }
    false
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.is_control { 'K' } else { 'D' };
        write!(f, "{}{}.{}", tag, self.x(), self.y())
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// `/I1/`: K28.5 D5.6, flips a positive running disparity to negative.
pub const IDLE1: [Symbol; 2] = [Symbol::K28_5, Symbol::D5_6];
/// `/I2/`: K28.5 D16.2, preserves negative running disparity.
pub const IDLE2: [Symbol; 2] = [Symbol::K28_5, Symbol::D16_2];

/// True when `pair` is `/I1/` or `/I2/`.
pub fn is_idle_pair(first: Symbol, second: Symbol) -> bool {
    first == Symbol::K28_5 && (second == Symbol::D5_6 || second == Symbol::D16_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_follow_dxy_convention() {
        assert_eq!(format!("{:?}", Symbol::K28_5), "K28.5");
        assert_eq!(format!("{:?}", Symbol::D21_5), "D21.5");
        assert_eq!(format!("{:?}", Symbol::D16_2), "D16.2");
        assert_eq!(Symbol::D21_2.octet(), 21 + 32 * 2);
    }

    #[test]
    fn control_construction_is_checked() {
        assert!(Symbol::control(0xBC).is_some());
        assert!(Symbol::control(0x00).is_none());
        assert!(Symbol::new(0x1D, true).is_none());
        assert_eq!(Symbol::new(0x1D, false), Some(Symbol::data(0x1D)));
        assert_eq!(Symbol::all().count(), 268);
    }
}
