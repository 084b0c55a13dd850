//! Chaotic keystream generator: skew-tent-map cells perturbed by a 61-bit
//! LFSR, a bank of nine cells producing 73-bit words, and the modulo-267
//! reduction that turns each word into one cipher keystream value.
//!
//! Fixed-point convention: a `u64` `v` stands for the fraction `v / 2^64`.
//! The map is evaluated with exact 128-bit integer arithmetic, floor rounding,
//! saturating at `2^64 - 1`.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use thiserror::Error;

/// Size of the cipher alphabet.
pub const MODULUS: u16 = 267;

const LFSR61_MASK: u64 = (1 << 61) - 1;

/// Tapped bit positions of x^61 + x^60 + x^46 + x^45 + 1.
const LFSR61_TAPS: [u32; 4] = tap_bits(61, [60, 46, 45, 0]);

/// Maps the non-leading polynomial exponents to state bit positions of a
/// Fibonacci register whose newest bit enters at bit 0 (term `x^i` reads
/// bit `degree - 1 - i`).
pub const fn tap_bits<const N: usize>(degree: u32, exponents: [u32; N]) -> [u32; N] {
    let mut taps = [0u32; N];
    let mut i = 0;
    while i < N {
        taps[i] = degree - 1 - exponents[i];
        i += 1;
    }
    taps
}

/// One Fibonacci shift: the parity of the tapped bits enters at bit 0.
#[inline(always)]
pub fn lfsr_step<const N: usize>(state: u64, taps: &[u32; N], degree: u32) -> u64 {
    let mut feedback = 0;
    for &t in taps {
        feedback ^= state >> t;
    }
    ((state << 1) | (feedback & 1)) & ((1u64 << degree) - 1)
}

/// Skew tent map on 64-bit fixed point.
///
/// `x <= gamma` takes the `x / gamma` branch, otherwise
/// `(1 - x) / (1 - gamma)`. `gamma` must be non-zero. This is the plain
/// 128-bit form; [`GeneratorCell`] uses a precomputed-reciprocal division
/// that returns the same quotients.
#[inline]
pub fn stm_step(x: u64, gamma: u64) -> u64 {
    debug_assert!(gamma != 0);
    let q = if x <= gamma {
        ((x as u128) << 64) / gamma as u128
    } else {
        let one = 1u128 << 64;
        ((one - x as u128) << 64) / (one - gamma as u128)
    };
    q.min(u64::MAX as u128) as u64
}

/// Division of `hi * 2^64` by a fixed 64-bit divisor, for `hi < divisor`,
/// using a precomputed reciprocal (Möller and Granlund, "Improved division
/// by invariant integers").
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct FixedDivisor {
    normalized: u64,
    reciprocal: u64,
    shift: u32,
}

impl FixedDivisor {
    fn new(d: u64) -> Self {
        debug_assert!(d != 0);
        let shift = d.leading_zeros();
        let normalized = d << shift;
        let reciprocal = (u128::MAX / normalized as u128 - (1u128 << 64)) as u64;
        FixedDivisor {
            normalized,
            reciprocal,
            shift,
        }
    }

    /// `floor(hi * 2^64 / d)`; requires `hi < d`.
    #[inline(always)]
    fn div_shifted(&self, hi: u64) -> u64 {
        // hi < d, so hi << shift < normalized and nothing is lost.
        let u1 = hi << self.shift;
        let d = self.normalized;
        let p = (self.reciprocal as u128 * u1 as u128).wrapping_add(((u1 as u128) + 1) << 64);
        let mut q1 = (p >> 64) as u64;
        let q0 = p as u64;
        let mut r = 0u64.wrapping_sub(q1.wrapping_mul(d));
        // First correction fires about half the time; keep it branch-free.
        let over = (r > q0) as u64;
        q1 = q1.wrapping_sub(over);
        r = r.wrapping_add(d & 0u64.wrapping_sub(over));
        if r >= d {
            q1 += 1;
        }
        q1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StmState {
    pub x: u64,
    gamma: u64,
}

impl StmState {
    pub fn new(x: u64, gamma: u64) -> Result<Self, KeyError> {
        if gamma == 0 {
            return Err(KeyError::Invariant("gamma must be in (0, 1)"));
        }
        Ok(StmState { x, gamma })
    }

    pub fn gamma(&self) -> u64 {
        self.gamma
    }

    pub fn step(&mut self) -> u64 {
        self.x = stm_step(self.x, self.gamma);
        self.x
    }
}

/// 61-bit maximal-length LFSR.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lfsr61 {
    state: u64,
}

impl Lfsr61 {
    pub fn new(seed: u64) -> Result<Self, KeyError> {
        if seed == 0 || seed > LFSR61_MASK {
            return Err(KeyError::Invariant("y0 must be a non-zero 61-bit value"));
        }
        Ok(Lfsr61 { state: seed })
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    #[inline]
    pub fn step(&mut self) {
        self.state = lfsr_step(self.state, &LFSR61_TAPS, 61);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutWidth {
    Eight = 8,
    Nine = 9,
}

impl OutWidth {
    const fn mask(self) -> u64 {
        (1 << self as u32) - 1
    }
}

/// Key material of one generator cell: 64 + 64 + 61 = 189 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub gamma: u64,
    pub x0: u64,
    pub y0: u64,
}

impl CellKey {
    pub const BITS: u32 = 64 + 64 + 61;

    pub fn validate(&self) -> Result<(), KeyError> {
        if self.gamma == 0 {
            return Err(KeyError::Invariant("gamma must be in (0, 1)"));
        }
        if self.x0 == 0 {
            return Err(KeyError::Invariant("x0 must be non-zero"));
        }
        if self.y0 == 0 || self.y0 > LFSR61_MASK {
            return Err(KeyError::Invariant("y0 must be a non-zero 61-bit value"));
        }
        Ok(())
    }

    /// Draws a key, resampling any field that would violate an invariant.
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let nonzero = |rng: &mut R, mask: u64| loop {
            let v = rng.next_u64() & mask;
            if v != 0 {
                break v;
            }
        };
        CellKey {
            gamma: nonzero(rng, u64::MAX),
            x0: nonzero(rng, u64::MAX),
            y0: nonzero(rng, LFSR61_MASK),
        }
    }
}

/// The basic generator: one STM cell with its LFSR.
#[derive(Clone, Debug)]
pub struct GeneratorCell {
    stm: StmState,
    lfsr: Lfsr61,
    width: OutWidth,
    /// Divides by gamma.
    left: FixedDivisor,
    /// Divides by 1 - gamma.
    right: FixedDivisor,
}

impl GeneratorCell {
    pub fn new(key: CellKey, width: OutWidth) -> Result<Self, KeyError> {
        key.validate()?;
        Ok(GeneratorCell {
            stm: StmState::new(key.x0, key.gamma)?,
            lfsr: Lfsr61::new(key.y0)?,
            width,
            left: FixedDivisor::new(key.gamma),
            right: FixedDivisor::new(key.gamma.wrapping_neg()),
        })
    }

    pub fn state(&self) -> (StmState, Lfsr61) {
        (self.stm, self.lfsr)
    }

    pub fn width(&self) -> OutWidth {
        self.width
    }

    /// XOR the low LFSR bits into x, emit the low bits of the perturbed
    /// state, iterate the map from the perturbed state, then clock the LFSR.
    #[inline]
    pub fn next_output(&mut self) -> u16 {
        let mask = self.width.mask();
        let perturbed = self.stm.x ^ (self.lfsr.state & mask);
        let out = (perturbed & mask) as u16;
        self.stm.x = self.map(perturbed);
        self.lfsr.step();
        out
    }

    /// Same quotient as [`stm_step`], without a 128-bit division.
    #[inline(always)]
    fn map(&self, x: u64) -> u64 {
        let gamma = self.stm.gamma;
        if x == gamma {
            return u64::MAX;
        }
        // Branch-free select: the branch taken is data dependent and random.
        let m = 0u64.wrapping_sub((x < gamma) as u64);
        let pick = |a: u64, b: u64| (a & m) | (b & !m);
        let div = FixedDivisor {
            normalized: pick(self.left.normalized, self.right.normalized),
            reciprocal: pick(self.left.reciprocal, self.right.reciprocal),
            shift: pick(self.left.shift as u64, self.right.shift as u64) as u32,
        };
        div.div_shifted(pick(x, x.wrapping_neg()))
    }
}

/// A 73-bit bank output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeystreamWord(u128);

impl KeystreamWord {
    pub const BITS: u32 = 73;

    pub fn new(value: u128) -> Option<Self> {
        (value >> Self::BITS == 0).then_some(KeystreamWord(value))
    }

    pub fn value(self) -> u128 {
        self.0
    }
}

/// A keystream value in `0..=266`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeystreamValue(u16);

impl KeystreamValue {
    pub fn new(value: u16) -> Option<Self> {
        (value < MODULUS).then_some(KeystreamValue(value))
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

const TWO64_MOD: u64 = ((1u128 << 64) % MODULUS as u128) as u64;

/// `w mod 267` by direct wide arithmetic.
#[inline]
pub fn mod267(w: KeystreamWord) -> KeystreamValue {
    let hi = (w.0 >> 64) as u64;
    let lo = w.0 as u64;
    let r = ((hi % MODULUS as u64) * TWO64_MOD + lo % MODULUS as u64) % MODULUS as u64;
    KeystreamValue(r as u16)
}

/// Number of stages in [`mod267_staged`]: `n - m + 1` with `n = 73`, `m = 9`.
pub const REDUCER_STAGES: usize = 73 - 9 + 1;

/// The pipelined shift/conditional-subtract reduction.
///
/// Stage 0 reduces the top nine bits; each later stage shifts in one more
/// bit, most significant first, and subtracts 267 if the partial remainder
/// reached it. The partial remainder stays below 267 after every stage.
pub fn mod267_staged(w: KeystreamWord) -> KeystreamValue {
    let m = MODULUS as u32;
    let mut r = (w.0 >> 64) as u32;
    if r >= m {
        r -= m;
    }
    for bit in (0..64).rev() {
        r = (r << 1) | ((w.0 >> bit) & 1) as u32;
        if r >= m {
            r -= m;
        }
    }
    KeystreamValue(r as u16)
}

/// Reduction of only the low nine bits, kept to show the bias that a short
/// modulo input produces.
pub fn mod267_truncated(w: KeystreamWord) -> KeystreamValue {
    KeystreamValue(((w.0 & 0x1FF) % MODULUS as u128) as u16)
}

/// Nine cells: `cells[0..8]` emit 8 bits, `cells[8]` emits 9 bits.
#[derive(Clone, Debug)]
pub struct KeystreamBank {
    cells: [GeneratorCell; 9],
}

impl KeystreamBank {
    pub fn new(key: &BankKey) -> Self {
        let cells = std::array::from_fn(|i| {
            let width = if i == 8 {
                OutWidth::Nine
            } else {
                OutWidth::Eight
            };
            GeneratorCell::new(key.cells[i], width).expect("BankKey is validated on construction")
        });
        KeystreamBank { cells }
    }

    pub fn cells(&self) -> &[GeneratorCell; 9] {
        &self.cells
    }

    /// Advances every cell once. The 9-bit cell is most significant, followed
    /// by cells 7 down to 0.
    #[inline]
    pub fn next_word(&mut self) -> KeystreamWord {
        let mut word = self.cells[8].next_output() as u128;
        for cell in self.cells[..8].iter_mut().rev() {
            word = (word << 8) | cell.next_output() as u128;
        }
        KeystreamWord(word)
    }
}

/// Nine cell keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BankKey {
    cells: [CellKey; 9],
}

impl BankKey {
    pub fn new(cells: [CellKey; 9]) -> Result<Self, KeyError> {
        for c in &cells {
            c.validate()?;
        }
        Ok(BankKey { cells })
    }

    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        BankKey {
            cells: std::array::from_fn(|_| CellKey::generate(rng)),
        }
    }

    pub fn cells(&self) -> &[CellKey; 9] {
        &self.cells
    }

    /// Copy with one bit of one field flipped, re-validated.
    pub fn with_flipped_bit(
        &self,
        cell: usize,
        field: KeyField,
        bit: u32,
    ) -> Result<Self, KeyError> {
        let mut cells = self.cells;
        let c = &mut cells[cell];
        match field {
            KeyField::Gamma => c.gamma ^= 1 << bit,
            KeyField::X0 => c.x0 ^= 1 << bit,
            KeyField::Y0 => c.y0 ^= 1 << bit,
        }
        BankKey::new(cells)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyField {
    Gamma,
    X0,
    Y0,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("key line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("key invariant violated: {0}")]
    Invariant(&'static str),
}

impl fmt::Display for BankKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.cells {
            writeln!(
                f,
                "gamma={:016x} x0={:016x} y0={:016x}",
                c.gamma, c.x0, c.y0
            )?;
        }
        Ok(())
    }
}

fn parse_cell_line(line: &str, lineno: usize) -> Result<CellKey, KeyError> {
    let err = |reason: String| KeyError::Parse {
        line: lineno,
        reason,
    };
    let mut fields = [None; 3];
    for token in line.split_whitespace() {
        let (name, value) = token
            .split_once('=')
            .ok_or_else(|| err(format!("expected name=value, got {token:?}")))?;
        let slot = match name {
            "gamma" => 0,
            "x0" => 1,
            "y0" => 2,
            _ => return Err(err(format!("unknown field {name:?}"))),
        };
        if value.len() != 16 {
            return Err(err(format!("{name} must be 16 hex digits")));
        }
        let v = u64::from_str_radix(value, 16).map_err(|e| err(format!("{name}: {e}")))?;
        if fields[slot].replace(v).is_some() {
            return Err(err(format!("duplicate field {name}")));
        }
    }
    match fields {
        [Some(gamma), Some(x0), Some(y0)] => {
            let key = CellKey { gamma, x0, y0 };
            key.validate().map_err(|e| err(e.to_string()))?;
            Ok(key)
        }
        _ => Err(err("expected gamma, x0 and y0".into())),
    }
}

impl FromStr for BankKey {
    type Err = KeyError;

    /// Nine non-empty lines; blank lines and `#` comments are skipped.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cells = Vec::with_capacity(9);
        for (i, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if cells.len() == 9 {
                return Err(KeyError::Parse {
                    line: i + 1,
                    reason: "more than nine cell keys".into(),
                });
            }
            cells.push(parse_cell_line(line, i + 1)?);
        }
        let cells: [CellKey; 9] = cells
            .try_into()
            .map_err(|v: Vec<CellKey>| KeyError::Parse {
                line: s.lines().count(),
                reason: format!("expected nine cell keys, found {}", v.len()),
            })?;
        BankKey::new(cells)
    }
}

/// Source of keystream values for the cipher.
pub trait Keystream {
    fn next_value(&mut self) -> KeystreamValue;
    /// Rewinds to step 0 of the keyed sequence.
    fn reset(&mut self);
    /// Values produced since the last reset.
    fn step(&self) -> u64;
}

/// Bank plus modulo-267 reducer: one value per encrypted symbol.
#[derive(Clone, Debug)]
pub struct KeystreamGenerator {
    key: BankKey,
    bank: KeystreamBank,
    step: u64,
}

impl KeystreamGenerator {
    pub fn new(key: BankKey) -> Self {
        KeystreamGenerator {
            bank: KeystreamBank::new(&key),
            key,
            step: 0,
        }
    }

    pub fn key(&self) -> &BankKey {
        &self.key
    }
}

impl Keystream for KeystreamGenerator {
    #[inline]
    fn next_value(&mut self) -> KeystreamValue {
        self.step += 1;
        mod267(self.bank.next_word())
    }

    fn reset(&mut self) {
        self.bank = KeystreamBank::new(&self.key);
        self.step = 0;
    }

    fn step(&self) -> u64 {
        self.step
    }
}

/// Always yields zero: makes the cipher an identity, for tests and baselines.
#[derive(Clone, Debug, Default)]
pub struct ZeroKeystream {
    step: u64,
}

impl Keystream for ZeroKeystream {
    fn next_value(&mut self) -> KeystreamValue {
        self.step += 1;
        KeystreamValue(0)
    }

    fn reset(&mut self) {
        self.step = 0;
    }

    fn step(&self) -> u64 {
        self.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn test_key(seed: u64) -> BankKey {
        BankKey::generate(&mut ChaCha20Rng::seed_from_u64(seed))
    }

    #[test]
    fn stm_reference_points() {
        let half = 1u64 << 63;
        assert_eq!(stm_step(1 << 62, half), half);
        assert_eq!(stm_step(3 << 62, half), half);
        assert_eq!(stm_step(half, half), u64::MAX);
        // x = 0 is a fixed point of the left branch
        assert_eq!(stm_step(0, half), 0);
        assert_eq!(stm_step(u64::MAX, 1), 1);
    }

    #[test]
    fn reciprocal_map_matches_wide_division() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let edge = [
            1u64,
            2,
            3,
            (1 << 63) - 1,
            1 << 63,
            (1 << 63) + 1,
            u64::MAX - 1,
            u64::MAX,
        ];
        let mut gammas: Vec<u64> = edge.to_vec();
        gammas.extend((0..200).map(|_| rng.next_u64() | 1));
        gammas.extend(
            (0..50)
                .map(|_| rng.next_u64() >> (rng.next_u32() % 63))
                .filter(|&g| g != 0),
        );
        for gamma in gammas {
            let cell = GeneratorCell::new(
                CellKey {
                    gamma,
                    x0: 1,
                    y0: 1,
                },
                OutWidth::Eight,
            )
            .unwrap();
            let mut xs: Vec<u64> = vec![0, 1, gamma - 1, gamma, gamma.saturating_add(1), u64::MAX];
            xs.extend((0..200).map(|_| rng.next_u64()));
            for x in xs {
                assert_eq!(cell.map(x), stm_step(x, gamma), "x={x:#x} gamma={gamma:#x}");
            }
        }
    }

    #[test]
    fn lfsr_successor_is_deterministic_and_nonzero() {
        let mut a = Lfsr61::new(1).unwrap();
        let mut b = a;
        a.step();
        b.step();
        assert_eq!(a, b);
        assert_ne!(a.state(), 0);
        assert!(Lfsr61::new(0).is_err());
        assert!(Lfsr61::new(1 << 61).is_err());
    }

    #[test]
    fn degree16_register_is_maximal() {
        // Same stepping code, degree-16 primitive polynomial x^16+x^15+x^13+x^4+1.
        let taps = tap_bits(16, [15, 13, 4, 0]);
        let mut s = 1u64;
        let mut period = 0u64;
        loop {
            s = lfsr_step(s, &taps, 16);
            period += 1;
            assert_ne!(s, 0);
            if s == 1 {
                break;
            }
        }
        assert_eq!(period, (1 << 16) - 1);
    }

    /// Multiplication modulo `p` in GF(2)[x], `p` of degree `deg`.
    fn gf2_mulmod(mut a: u128, mut b: u128, p: u128, deg: u32) -> u128 {
        let mut r = 0;
        while b != 0 {
            if b & 1 == 1 {
                r ^= a;
            }
            b >>= 1;
            a <<= 1;
            if (a >> deg) & 1 == 1 {
                a ^= p;
            }
        }
        r
    }

    #[test]
    fn degree61_polynomial_is_primitive() {
        // 61 is prime and so is 2^61 - 1: the polynomial is primitive iff it
        // has no linear factor and x^(2^61) = x (mod p).
        let exps = [61u32, 60, 46, 45, 0];
        let p: u128 = exps.iter().map(|&e| 1u128 << e).fold(0, |a, b| a | b);
        assert_eq!(exps.len() % 2, 1, "p(1) = 1");
        let mut x = 2u128;
        for _ in 0..61 {
            x = gf2_mulmod(x, x, p, 61);
        }
        assert_eq!(x, 2);
        // and the tap mask matches those exponents
        assert_eq!(
            LFSR61_TAPS,
            tap_bits(61, [exps[1], exps[2], exps[3], exps[4]])
        );
    }

    #[test]
    fn cell_output_is_low_bits_when_lfsr_low_bits_are_zero() {
        // y0 with all eight low bits clear: first output = low byte of x0.
        let key = CellKey {
            gamma: 0x9E37_79B9_7F4A_7C15,
            x0: 0x0123_4567_89AB_CDEF,
            y0: 0x1F00,
        };
        let mut cell = GeneratorCell::new(key, OutWidth::Eight).unwrap();
        assert_eq!(cell.next_output(), 0xEF);
        let mut nine = GeneratorCell::new(CellKey { y0: 0x1E00, ..key }, OutWidth::Nine).unwrap();
        assert_eq!(nine.next_output(), 0x1EF);
    }

    #[test]
    fn bank_word_layout() {
        let key = test_key(3);
        let mut bank = KeystreamBank::new(&key);
        let mut cells: Vec<GeneratorCell> = bank.cells().to_vec();
        for _ in 0..100 {
            let w = bank.next_word().value();
            assert!(w < 1 << 73);
            let outs: Vec<u128> = cells.iter_mut().map(|c| c.next_output() as u128).collect();
            let mut expect = outs[8] << 64;
            for (i, o) in outs[..8].iter().enumerate() {
                expect |= o << (8 * i);
            }
            assert_eq!(w, expect);
        }
    }

    #[test]
    fn mod267_small_values() {
        for (w, r) in [(0u128, 0u16), (266, 266), (267, 0), (534, 0), (535, 1)] {
            let w = KeystreamWord::new(w).unwrap();
            assert_eq!(mod267(w).value(), r);
            assert_eq!(mod267_staged(w).value(), r);
        }
        assert_eq!(REDUCER_STAGES, 65);
    }

    #[test]
    fn generator_is_deterministic_and_resettable() {
        let key = test_key(9);
        let mut a = KeystreamGenerator::new(key);
        let mut b = KeystreamGenerator::new(key);
        let first: Vec<_> = (0..500).map(|_| a.next_value()).collect();
        let second: Vec<_> = (0..500).map(|_| b.next_value()).collect();
        assert_eq!(first, second);
        assert!(first.iter().all(|v| v.value() < 267));
        assert_eq!(a.step(), 500);
        a.reset();
        assert_eq!(a.step(), 0);
        let again: Vec<_> = (0..500).map(|_| a.next_value()).collect();
        assert_eq!(first, again);
    }

    #[test]
    fn one_bit_key_change_diverges_quickly() {
        let key = test_key(11);
        for (cell, field, bit) in [
            (0, KeyField::X0, 63),
            (4, KeyField::X0, 17),
            (8, KeyField::X0, 0),
            (2, KeyField::Gamma, 40),
            (6, KeyField::Y0, 60),
        ] {
            let other = key.with_flipped_bit(cell, field, bit).unwrap();
            let mut a = KeystreamGenerator::new(key);
            let mut b = KeystreamGenerator::new(other);
            let differs = (0..64).any(|_| a.next_value() != b.next_value());
            assert!(differs, "cell {cell} {field:?} bit {bit}");
        }
    }

    #[test]
    fn key_text_round_trip_and_rejections() {
        let key = test_key(5);
        let text = key.to_string();
        assert_eq!(text.lines().count(), 9);
        assert_eq!(text.parse::<BankKey>().unwrap(), key);

        let zero_y0 = text.replacen(
            &format!("y0={:016x}", key.cells()[0].y0),
            "y0=0000000000000000",
            1,
        );
        assert!(matches!(
            zero_y0.parse::<BankKey>(),
            Err(KeyError::Parse { line: 1, .. })
        ));

        let wide_y0 = text.replacen(
            &format!("y0={:016x}", key.cells()[3].y0),
            "y0=2000000000000000",
            1,
        );
        assert!(wide_y0.parse::<BankKey>().is_err());

        let short: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(short.parse::<BankKey>().is_err());
        assert!("gamma=12 x0=1 y0=1".parse::<BankKey>().is_err());
        assert!("not a key".parse::<BankKey>().is_err());
    }

    #[test]
    fn keygen_honours_invariants() {
        // A source that emits zeros first forces every resampling path.
        struct ZerosThen(u64);
        impl RngCore for ZerosThen {
            fn next_u32(&mut self) -> u32 {
                self.next_u64() as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0 += 1;
                if self.0 % 2 == 1 {
                    0
                } else {
                    self.0 << 61 | self.0
                }
            }
            fn fill_bytes(&mut self, dest: &mut [u8]) {
                for chunk in dest.chunks_mut(8) {
                    let v = self.next_u64().to_le_bytes();
                    chunk.copy_from_slice(&v[..chunk.len()]);
                }
            }
            fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
                self.fill_bytes(dest);
                Ok(())
            }
        }
        let key = BankKey::generate(&mut ZerosThen(0));
        for c in key.cells() {
            c.validate().unwrap();
        }
        assert_eq!(CellKey::BITS, 189);
    }
}
