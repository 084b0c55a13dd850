//! Two-endpoint 1000BASE-X link simulator.
//!
//! Each direction ("lane") is a deterministic loop over symbol clocks:
//!
//! ```text
//! PcsTx -> Insert -> CipherUnit(tx) -> Encoder -> Channel
//!       -> Aligner -> Decoder -> CipherUnit(rx) -> SyncMonitor -> Extract -> PcsRx
//! ```
//!
//! The two lanes share no state and run on scoped threads.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::cipher::CIPHER_LATENCY;
use crate::codec::{align_comma, encode_symbol, CodeGroup, Decoder, Encoder, RunningDisparity};
use crate::keystream::{BankKey, KeyError, KeyField, KeystreamGenerator};
use crate::pcs_sync::{
    Alarm, AlarmKind, AlarmLatch, CaptureEvent, CipherUnit, Extract, Insert, QueueFull, RxSymbol,
    Side, SyncMonitor, INSERT_LATENCY, SYNC_WINDOW, X_ORDERED_SET,
};
use crate::symbol::{Symbol, IDLE1, IDLE2};

pub const MIN_FRAME_LENGTH: usize = 64;
pub const MAX_FRAME_LENGTH: usize = 1518;
pub const MIN_IFG_SYMBOLS: usize = 12;
/// Preamble octets after `/S/`, ending with the SFD.
pub const PREAMBLE: [u8; 7] = [0x55, 0x55, 0x55, 0x55, 0x55, 0x55, 0xD5];
/// Cycles run after the last frame so every pipeline empties.
const DRAIN_CYCLES: u64 = 256;

const CRC32_POLY_REFLECTED: u32 = 0xEDB8_8320;

const fn crc32_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 {
                (c >> 1) ^ CRC32_POLY_REFLECTED
            } else {
                c >> 1
            };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

static CRC32_TABLE: [u32; 256] = crc32_table();

/// IEEE 802.3 frame check sequence.
pub fn crc32(data: &[u8]) -> u32 {
    !data.iter().fold(u32::MAX, |c, &b| {
        CRC32_TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8)
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub payload: Vec<u8>,
    pub fcs: u32,
}

impl Frame {
    pub fn new(payload: Vec<u8>) -> Self {
        let fcs = crc32(&payload);
        Frame { payload, fcs }
    }

    /// Frame `seq` of `length` octets including the FCS; the payload counts
    /// up from `seq`.
    pub fn generate(seq: u64, length: usize) -> Self {
        let payload = (0..length - 4).map(|i| (seq as usize + i) as u8).collect();
        Frame::new(payload)
    }

    /// Payload followed by the FCS, least significant octet first.
    pub fn octets(&self) -> impl Iterator<Item = u8> + '_ {
        self.payload.iter().copied().chain(self.fcs.to_le_bytes())
    }
}

/// Symbols a frame of `length` octets occupies on the line: `/S/`, seven
/// preamble octets, the frame, `/T/ /R/`, and an `/R/` pad to an even count.
pub fn frame_symbols(length: usize) -> usize {
    let n = 1 + PREAMBLE.len() + length + 2;
    n + n % 2
}

/// Idle symbols between frames for a target utilization. At 100%, each
/// frame occupies its length plus 8 preamble and 12 gap octet times.
pub fn ifg_symbols(length: usize, utilization: u8) -> usize {
    let slot = ((length + 20) * 100).div_ceil(utilization as usize);
    let gap = slot
        .saturating_sub(frame_symbols(length))
        .max(MIN_IFG_SYMBOLS);
    gap + gap % 2
}

/// MAC framing plus PCS transmit ordering.
#[derive(Clone, Debug)]
pub struct PcsTx {
    frame_length: usize,
    frames_total: u64,
    frames_sent: u64,
    ifg: usize,
    idle_left: usize,
    rd: RunningDisparity,
    out: VecDeque<Symbol>,
}

impl PcsTx {
    pub fn new(frame_count: u64, frame_length: usize, utilization: u8) -> Self {
        let ifg = ifg_symbols(frame_length, utilization);
        PcsTx {
            frame_length,
            frames_total: frame_count,
            frames_sent: 0,
            ifg,
            idle_left: ifg,
            rd: RunningDisparity::Negative,
            out: VecDeque::with_capacity(frame_symbols(frame_length)),
        }
    }

    pub fn frames_sent(&self) -> u64 {
        self.frames_sent
    }

    /// Symbol clocks until the last frame has been emitted.
    pub fn schedule_len(&self) -> u64 {
        (self.ifg + self.frames_total as usize * (frame_symbols(self.frame_length) + self.ifg))
            as u64
    }

    fn refill(&mut self) {
        if self.idle_left > 0 || self.frames_sent == self.frames_total {
            // /I1/ brings a positive disparity back to negative.
            let set = if self.rd == RunningDisparity::Positive {
                IDLE1
            } else {
                IDLE2
            };
            self.out.extend(set);
            self.idle_left = self.idle_left.saturating_sub(2);
            return;
        }
        let frame = Frame::generate(self.frames_sent, self.frame_length);
        self.out.push_back(Symbol::START);
        self.out.extend(PREAMBLE.iter().map(|&o| Symbol::data(o)));
        self.out.extend(frame.octets().map(Symbol::data));
        self.out.push_back(Symbol::END);
        self.out.push_back(Symbol::CARRIER_EXTEND);
        if self.out.len() % 2 == 1 {
            self.out.push_back(Symbol::CARRIER_EXTEND);
        }
        self.frames_sent += 1;
        self.idle_left = self.ifg;
    }

    pub fn step(&mut self) -> Symbol {
        if self.out.is_empty() {
            self.refill();
        }
        let s = self.out.pop_front().expect("refilled");
        self.rd = encode_symbol(s, self.rd).1;
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RxState {
    Idle,
    /// K28.5 seen; expects the idle data symbol.
    Comma,
    Frame {
        bad: bool,
    },
    /// `/T/` seen; expects `/R/`.
    End,
}

/// PCS receive ordering plus MAC frame check.
#[derive(Clone, Debug)]
pub struct PcsRx {
    state: RxState,
    buf: Vec<u8>,
    pub frames_received: u64,
    pub crc_errors: u64,
    pub code_errors: u64,
}

impl Default for PcsRx {
    fn default() -> Self {
        PcsRx {
            state: RxState::Idle,
            buf: Vec::with_capacity(MAX_FRAME_LENGTH + PREAMBLE.len()),
            frames_received: 0,
            crc_errors: 0,
            code_errors: 0,
        }
    }
}

impl PcsRx {
    fn finish(&mut self, bad: bool) -> Option<Frame> {
        let ok_len = self.buf.len() >= PREAMBLE.len() + MIN_FRAME_LENGTH;
        if bad || !ok_len || self.buf[..PREAMBLE.len()] != PREAMBLE {
            self.crc_errors += 1;
            return None;
        }
        let body = &self.buf[PREAMBLE.len()..];
        let (payload, fcs) = body.split_at(body.len() - 4);
        let fcs = u32::from_le_bytes(fcs.try_into().expect("four octets"));
        if crc32(payload) != fcs {
            self.crc_errors += 1;
            return None;
        }
        self.frames_received += 1;
        Some(Frame {
            payload: payload.to_vec(),
            fcs,
        })
    }

    fn idle(&mut self, s: Symbol) {
        self.state = if s == Symbol::K28_5 {
            RxState::Comma
        } else if s == Symbol::START {
            self.buf.clear();
            RxState::Frame { bad: false }
        } else {
            if s != Symbol::CARRIER_EXTEND {
                self.code_errors += 1;
            }
            RxState::Idle
        };
    }

    pub fn step(&mut self, sym: RxSymbol) -> Option<Frame> {
        let s = sym.symbol;
        if sym.code_error {
            self.code_errors += 1;
        }
        match self.state {
            RxState::Idle => self.idle(s),
            RxState::Comma => {
                if s != Symbol::D5_6 && s != Symbol::D16_2 {
                    self.code_errors += u64::from(!sym.code_error);
                }
                self.state = RxState::Idle;
            }
            RxState::Frame { bad } => {
                if sym.code_error {
                    self.state = RxState::Frame { bad: true };
                } else if s == Symbol::END {
                    self.state = RxState::End;
                    return self.finish(bad);
                } else if s.is_control() || self.buf.len() > MAX_FRAME_LENGTH + PREAMBLE.len() {
                    self.code_errors += 1;
                    self.crc_errors += 1;
                    self.idle(s);
                } else {
                    self.buf.push(s.octet());
                }
            }
            RxState::End => {
                if s == Symbol::CARRIER_EXTEND {
                    self.state = RxState::Idle;
                } else {
                    self.idle(s);
                }
            }
        }
        None
    }
}

/// Binary symmetric channel with a seeded bit-error process.
#[derive(Clone, Debug)]
pub struct Channel {
    ber: f64,
    rng: ChaCha20Rng,
    /// Clean bits before the next flip.
    gap: u64,
    flips: u64,
}

impl Channel {
    pub fn new(ber: f64, seed: u64) -> Self {
        let mut ch = Channel {
            ber,
            rng: ChaCha20Rng::seed_from_u64(seed),
            gap: 0,
            flips: 0,
        };
        ch.gap = ch.draw_gap();
        ch
    }

    /// Geometric run length of clean bits.
    fn draw_gap(&mut self) -> u64 {
        if self.ber <= 0.0 {
            return u64::MAX;
        }
        if self.ber >= 1.0 {
            return 0;
        }
        let u: f64 = self.rng.gen();
        let g = (1.0 - u).ln() / (-self.ber).ln_1p();
        if g >= u64::MAX as f64 {
            u64::MAX
        } else {
            g as u64
        }
    }

    pub fn flips(&self) -> u64 {
        self.flips
    }

    pub fn step(&mut self, cg: CodeGroup) -> CodeGroup {
        if self.gap >= 10 {
            if self.gap != u64::MAX {
                self.gap -= 10;
            }
            return cg;
        }
        let mut bits = cg.bits();
        let mut i = self.gap;
        while i < 10 {
            bits ^= 1 << (9 - i);
            self.flips += 1;
            let g = self.draw_gap();
            i = i.saturating_add(1).saturating_add(g);
        }
        self.gap = i - 10;
        CodeGroup::new(bits).expect("ten bits")
    }
}

/// Receive deserializer: drops `phase` bits, then locks to the first comma.
#[derive(Clone, Debug)]
struct Aligner {
    drop: u32,
    hunt: Option<Vec<bool>>,
    acc: u32,
    nbits: u32,
    /// Whole transmit groups discarded before lock.
    skipped: u64,
    hunted_bits: u64,
}

impl Aligner {
    fn new(phase: u32) -> Self {
        Aligner {
            drop: phase,
            hunt: Some(Vec::new()),
            acc: 0,
            nbits: 0,
            skipped: 0,
            hunted_bits: 0,
        }
    }

    fn push(&mut self, cg: CodeGroup) -> Option<CodeGroup> {
        let bits = cg.bits() as u32;
        let Some(hunt) = self.hunt.as_mut() else {
            self.acc = (self.acc << 10) | bits;
            return CodeGroup::new(((self.acc >> self.nbits) & 0x3FF) as u16);
        };
        for i in 0..10 {
            if self.drop > 0 {
                self.drop -= 1;
                self.hunted_bits += 1;
                continue;
            }
            hunt.push(bits & (1 << (9 - i)) != 0);
        }
        let off = align_comma(hunt).ok().filter(|&o| o + 10 <= hunt.len())?;
        let rest = &hunt[off..];
        self.skipped = (self.hunted_bits + off as u64) / 10;
        self.acc = rest.iter().fold(0, |a, &b| (a << 1) | b as u32);
        self.nbits = rest.len() as u32 - 10;
        self.hunt = None;
        CodeGroup::new(((self.acc >> self.nbits) & 0x3FF) as u16)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EndpointId {
    A,
    B,
}

impl EndpointId {
    pub fn peer(self) -> Self {
        match self {
            EndpointId::A => EndpointId::B,
            EndpointId::B => EndpointId::A,
        }
    }
}

impl fmt::Display for EndpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EndpointId::A => "A",
            EndpointId::B => "B",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Start,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScenarioAction {
    pub step: u64,
    pub endpoint: EndpointId,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    MgmtStart,
    MgmtStop,
    QueueFull,
    XInserted,
    Capture(Side, CaptureEvent),
    XExtracted,
    Alarm(AlarmKind),
    Slip,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::MgmtStart => f.write_str("mgmt_start"),
            EventKind::MgmtStop => f.write_str("mgmt_stop"),
            EventKind::QueueFull => f.write_str("queue_full"),
            EventKind::XInserted => f.write_str("x_inserted"),
            EventKind::Capture(side, ev) => {
                let side = match side {
                    Side::Tx => "tx",
                    Side::Rx => "rx",
                };
                let ev = match ev {
                    CaptureEvent::Enabled => "on",
                    CaptureEvent::Disabled => "off",
                };
                write!(f, "{side}_cipher_{ev}")
            }
            EventKind::XExtracted => f.write_str("x_extracted"),
            EventKind::Alarm(kind) => write!(f, "alarm {kind}"),
            EventKind::Slip => f.write_str("keystream_slip"),
        }
    }
}

/// One event log line: `<step> <endpoint> <event>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub step: u64,
    pub endpoint: EndpointId,
    pub kind: EventKind,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.step, self.endpoint, self.kind)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("key: {0}")]
    Key(#[from] KeyError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Simulation parameters.
///
/// Text form, one `key = value` per line, `#` comments:
///
/// ```text
/// frames = 10000          # per direction
/// frame_length = 1500     # octets including FCS, 64..=1518
/// utilization = 50        # percent, 1..=98
/// ber = 0                 # channel bit error rate
/// seed = 1
/// encryption = on         # both endpoints start at step 0
/// bypass = off            # remove INSERT, cipher and EXTRACT from the datapath
/// key_file = link.key     # default: generated from seed
/// key_mismatch = off      # receivers use the key with one bit flipped
/// slip_at = 5000          # B's receive keystream skips a value at this step
/// corrupt_x = 2           # corrupt the n-th /X/ sent by A on the line
/// rx_phase_bits = 3       # receivers start mid code group
/// min_cycles = 1000000
/// trace = 1000000         # record that many A->B line symbols
/// action = 20000 A stop   # repeatable: <step> <A|B> <start|stop>
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub frame_count: u64,
    pub frame_length: usize,
    pub utilization: u8,
    pub bit_error_rate: f64,
    pub seed: u64,
    pub bypass: bool,
    pub key: Option<BankKey>,
    pub key_mismatch: bool,
    pub slip_at: Option<u64>,
    pub corrupt_x: Option<u32>,
    pub rx_phase_bits: u32,
    pub min_cycles: u64,
    pub trace: usize,
    pub scenario: Vec<ScenarioAction>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            frame_count: 1000,
            frame_length: 1500,
            utilization: 50,
            bit_error_rate: 0.0,
            seed: 1,
            bypass: false,
            key: None,
            key_mismatch: false,
            slip_at: None,
            corrupt_x: None,
            rx_phase_bits: 0,
            min_cycles: 0,
            trace: 0,
            scenario: Vec::new(),
        }
    }
}

impl SimConfig {
    /// Both endpoints start encrypting at step 0.
    pub fn with_encryption(mut self) -> Self {
        for endpoint in [EndpointId::A, EndpointId::B] {
            self.scenario.push(ScenarioAction {
                step: 0,
                endpoint,
                action: Action::Start,
            });
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(MIN_FRAME_LENGTH..=MAX_FRAME_LENGTH).contains(&self.frame_length) {
            return bad(format!(
                "frame_length {} outside 64..=1518",
                self.frame_length
            ));
        }
        if !(1..=98).contains(&self.utilization) {
            return bad(format!("utilization {} outside 1..=98", self.utilization));
        }
        if !(0.0..=1.0).contains(&self.bit_error_rate) {
            return bad(format!("ber {} outside [0, 1]", self.bit_error_rate));
        }
        if self.rx_phase_bits > 9 {
            return bad(format!(
                "rx_phase_bits {} outside 0..=9",
                self.rx_phase_bits
            ));
        }
        if self.bypass && !self.scenario.is_empty() {
            return bad("bypass has no cipher to start or stop".into());
        }
        Ok(())
    }

    fn link_key(&self) -> BankKey {
        self.key.unwrap_or_else(|| {
            BankKey::generate(&mut ChaCha20Rng::seed_from_u64(self.seed ^ 0x006b_6579))
        })
    }

    /// Symbol clocks each lane runs.
    pub fn cycles(&self) -> u64 {
        let pcs = PcsTx::new(self.frame_count, self.frame_length, self.utilization);
        let last_action = self
            .scenario
            .iter()
            .map(|a| a.step)
            .chain(self.slip_at)
            .max();
        let after_actions = last_action.map_or(0, |s| s + 4 * SYNC_WINDOW);
        (pcs.schedule_len() + DRAIN_CYCLES)
            .max(self.min_cycles)
            .max(after_actions)
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "on" | "true" | "yes" | "1" => Some(true),
        "off" | "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

impl FromStr for SimConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cfg = SimConfig::default();
        let mut encryption = false;
        for (i, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| ConfigError::Parse {
                line: i + 1,
                reason,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<u64>().map_err(|e| err(format!("{k}: {e}")));
            let flag = |v: &str| parse_bool(v).ok_or_else(|| err(format!("{k}: expected on/off")));
            match k {
                "frames" => cfg.frame_count = num(v)?,
                "frame_length" => cfg.frame_length = num(v)? as usize,
                "utilization" => {
                    cfg.utilization = u8::try_from(num(v)?).map_err(|e| err(format!("{k}: {e}")))?
                }
                "ber" => cfg.bit_error_rate = v.parse().map_err(|e| err(format!("{k}: {e}")))?,
                "seed" => cfg.seed = num(v)?,
                "encryption" => encryption = flag(v)?,
                "bypass" => cfg.bypass = flag(v)?,
                "key_mismatch" => cfg.key_mismatch = flag(v)?,
                "key_file" => {
                    let text = std::fs::read_to_string(v).map_err(|source| ConfigError::Io {
                        path: v.to_string(),
                        source,
                    })?;
                    cfg.key = Some(text.parse()?);
                }
                "slip_at" => cfg.slip_at = Some(num(v)?),
                "corrupt_x" => {
                    cfg.corrupt_x =
                        Some(u32::try_from(num(v)?).map_err(|e| err(format!("{k}: {e}")))?)
                }
                "rx_phase_bits" => cfg.rx_phase_bits = num(v)? as u32,
                "min_cycles" => cfg.min_cycles = num(v)?,
                "trace" => cfg.trace = num(v)? as usize,
                "action" => {
                    let parts: Vec<&str> = v.split_whitespace().collect();
                    let [step, ep, act] = parts[..] else {
                        return Err(err("action: expected <step> <A|B> <start|stop>".into()));
                    };
                    let endpoint = match ep {
                        "A" | "a" => EndpointId::A,
                        "B" | "b" => EndpointId::B,
                        _ => return Err(err(format!("action: unknown endpoint {ep:?}"))),
                    };
                    let action = match act {
                        "start" => Action::Start,
                        "stop" => Action::Stop,
                        _ => return Err(err(format!("action: unknown action {act:?}"))),
                    };
                    cfg.scenario.push(ScenarioAction {
                        step: num(step)?,
                        endpoint,
                        action,
                    });
                }
                _ => return Err(err(format!("unknown key {k:?}"))),
            }
        }
        if encryption {
            cfg = cfg.with_encryption();
        }
        cfg.scenario.sort_by_key(|a| a.step);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Counters for one direction, or summed over both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub frames_sent: u64,
    pub frames_received: u64,
    pub crc_errors: u64,
    pub code_errors: u64,
    pub alarms: u64,
    /// Extra cycles between PCS transmit and the encoder, against bypass.
    pub tx_added_latency_cycles: u64,
    /// Code groups put on the line.
    pub line_symbols: u64,
}

impl LinkStats {
    pub const CSV_HEADER: &'static str =
        "frames_sent,frames_received,frames_lost,crc_errors,code_errors,alarms,tx_added_latency_cycles,line_symbols";

    pub fn frames_lost(&self) -> u64 {
        self.frames_sent - self.frames_received
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.frames_sent,
            self.frames_received,
            self.frames_lost(),
            self.crc_errors,
            self.code_errors,
            self.alarms,
            self.tx_added_latency_cycles,
            self.line_symbols
        )
    }

    fn merge(self, o: LinkStats) -> LinkStats {
        LinkStats {
            frames_sent: self.frames_sent + o.frames_sent,
            frames_received: self.frames_received + o.frames_received,
            crc_errors: self.crc_errors + o.crc_errors,
            code_errors: self.code_errors + o.code_errors,
            alarms: self.alarms + o.alarms,
            tx_added_latency_cycles: self.tx_added_latency_cycles.max(o.tx_added_latency_cycles),
            line_symbols: self.line_symbols + o.line_symbols,
        }
    }
}

/// First-`/S/` timing through the transmit path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Latency {
    pub insert: u64,
    pub cipher: u64,
}

impl Latency {
    pub fn total(&self) -> u64 {
        self.insert + self.cipher
    }
}

/// Plaintext (cipher input) and line (cipher output) symbols of one lane.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LineTrace {
    pub plain: Vec<Symbol>,
    pub line: Vec<Symbol>,
}

#[derive(Clone, Debug)]
pub struct LaneReport {
    pub from: EndpointId,
    pub stats: LinkStats,
    pub latency: Latency,
    /// Receiver keystream steps that disagreed with the transmitter's.
    pub alignment_mismatches: u64,
    pub ciphered_symbols: u64,
    pub tx_alarms: Vec<Alarm>,
    pub rx_alarms: Vec<Alarm>,
    pub trace: LineTrace,
}

#[derive(Clone, Debug)]
pub struct SimReport {
    pub stats: LinkStats,
    pub lanes: [LaneReport; 2],
    pub events: Vec<Event>,
}

impl SimReport {
    /// Latched alarms at an endpoint: its transmitter's and its receiver's.
    pub fn alarms(&self, endpoint: EndpointId) -> Vec<Alarm> {
        let mut v: Vec<Alarm> = Vec::new();
        for lane in &self.lanes {
            if lane.from == endpoint {
                v.extend(lane.tx_alarms.iter().copied());
            } else {
                v.extend(lane.rx_alarms.iter().copied());
            }
        }
        v.sort_by_key(|a| a.step);
        v
    }

    pub fn lane(&self, from: EndpointId) -> &LaneReport {
        self.lanes
            .iter()
            .find(|l| l.from == from)
            .expect("two lanes")
    }
}

/// Transmit half of an endpoint.
pub struct TxPath {
    pub pcs: PcsTx,
    pub insert: Insert,
    pub cipher: CipherUnit<KeystreamGenerator>,
    pub encoder: Encoder,
    pub alarms: AlarmLatch,
}

impl TxPath {
    fn new(cfg: &SimConfig, key: BankKey) -> Self {
        TxPath {
            pcs: PcsTx::new(cfg.frame_count, cfg.frame_length, cfg.utilization),
            insert: Insert::default(),
            cipher: CipherUnit::new(Side::Tx, KeystreamGenerator::new(key)),
            encoder: Encoder::default(),
            alarms: AlarmLatch::default(),
        }
    }

    /// Queues `/X/`. A full queue latches `MessageQueueOverflow`.
    pub fn toggle_encryption(&mut self, step: u64) -> Result<(), QueueFull> {
        self.insert.push_message(X_ORDERED_SET).inspect_err(|_| {
            self.alarms.raise(AlarmKind::MessageQueueOverflow, step);
        })
    }
}

/// Receive half of an endpoint.
pub struct RxPath {
    aligner: Aligner,
    pub decoder: Decoder,
    pub cipher: CipherUnit<KeystreamGenerator>,
    pub monitor: SyncMonitor,
    pub extract: Extract,
    pub pcs: PcsRx,
    pub alarms: AlarmLatch,
}

impl RxPath {
    fn new(cfg: &SimConfig, key: BankKey) -> Self {
        RxPath {
            aligner: Aligner::new(cfg.rx_phase_bits),
            decoder: Decoder::default(),
            cipher: CipherUnit::new(Side::Rx, KeystreamGenerator::new(key)),
            monitor: SyncMonitor::default(),
            extract: Extract::default(),
            pcs: PcsRx::default(),
            alarms: AlarmLatch::default(),
        }
    }
}

struct Lane<'a> {
    cfg: &'a SimConfig,
    from: EndpointId,
    tx: TxPath,
    rx: RxPath,
    channel: Channel,
    events: Vec<Event>,
}

impl Lane<'_> {
    fn log(&mut self, step: u64, endpoint: EndpointId, kind: EventKind) {
        let event = Event {
            step,
            endpoint,
            kind,
        };
        log::debug!("{event}");
        self.events.push(event);
    }

    fn run(mut self) -> (LaneReport, Vec<Event>) {
        let cfg = self.cfg;
        let cycles = cfg.cycles();
        let to = self.from.peer();
        let actions: Vec<ScenarioAction> = cfg
            .scenario
            .iter()
            .filter(|a| a.endpoint == self.from)
            .copied()
            .collect();
        let mut next_action = 0;
        let mut tx_inserted = 0;
        let mut x_seen = 0u32;
        let mut first_s: [Option<u64>; 3] = [None; 3];
        // line position -> transmitter keystream step
        let mut tx_steps: VecDeque<Option<u64>> = VecDeque::new();
        let mut tx_base = 0u64;
        let mut rx_pos = 0u64;
        let mut mismatches = 0u64;
        let mut ciphered = 0u64;
        let mut line_symbols = 0u64;
        let mut trace = LineTrace::default();

        for step in 0..cycles {
            while next_action < actions.len() && actions[next_action].step == step {
                let kind = match actions[next_action].action {
                    Action::Start => EventKind::MgmtStart,
                    Action::Stop => EventKind::MgmtStop,
                };
                self.log(step, self.from, kind);
                if self.tx.toggle_encryption(step).is_err() {
                    self.log(step, self.from, EventKind::QueueFull);
                    self.log(
                        step,
                        self.from,
                        EventKind::Alarm(AlarmKind::MessageQueueOverflow),
                    );
                }
                next_action += 1;
            }

            let sym = self.tx.pcs.step();
            if first_s[0].is_none() && sym == Symbol::START {
                first_s[0] = Some(step);
            }

            let (plain, line, tx_step) = if cfg.bypass {
                (sym, sym, None)
            } else {
                let inserted = self.tx.insert.step(sym);
                if self.tx.insert.inserted() != tx_inserted {
                    tx_inserted = self.tx.insert.inserted();
                    self.log(step, self.from, EventKind::XInserted);
                }
                if first_s[1].is_none() && inserted == Symbol::START {
                    first_s[1] = Some(step);
                }
                let out = self.tx.cipher.step(inserted.into());
                if let Some(ev) = out.event {
                    self.log(step, self.from, EventKind::Capture(Side::Tx, ev));
                }
                (out.input.symbol, out.symbol.symbol, out.keystream_step)
            };
            if first_s[2].is_none() && plain == Symbol::START {
                first_s[2] = Some(step);
            }
            if trace.line.len() < cfg.trace {
                trace.plain.push(plain);
                trace.line.push(line);
            }
            ciphered += u64::from(tx_step.is_some());
            tx_steps.push_back(tx_step);

            let mut group = self.tx.encoder.encode(line);
            line_symbols += 1;
            if tx_step.is_none() && line == X_ORDERED_SET[0] {
                x_seen += 1;
                if cfg.corrupt_x == Some(x_seen) {
                    group = CodeGroup::new(group.bits() ^ 1).expect("ten bits");
                }
            }
            let group = self.channel.step(group);

            let Some(group) = self.rx.aligner.push(group) else {
                continue;
            };
            let received = match self.rx.decoder.decode(group) {
                Ok(symbol) => RxSymbol {
                    symbol,
                    code_error: false,
                },
                Err(_) => RxSymbol {
                    symbol: Symbol::ERROR,
                    code_error: true,
                },
            };
            if cfg.bypass {
                self.rx.pcs.step(received);
                continue;
            }
            if to == EndpointId::B && cfg.slip_at == Some(step) {
                self.rx.cipher.slip();
                self.log(step, to, EventKind::Slip);
            }
            let out = self.rx.cipher.step(received);
            if let Some(ev) = out.event {
                self.log(step, to, EventKind::Capture(Side::Rx, ev));
            }
            self.rx.monitor.set_deciphering(out.enabled);
            // this output entered CIPHER_LATENCY receive cycles ago
            if rx_pos >= CIPHER_LATENCY as u64 {
                let line_pos = rx_pos - CIPHER_LATENCY as u64 + self.rx.aligner.skipped;
                while tx_base < line_pos {
                    tx_steps.pop_front();
                    tx_base += 1;
                }
                let sent = tx_steps.front().copied().flatten();
                if sent != out.keystream_step {
                    mismatches += 1;
                }
            }
            rx_pos += 1;
            let alarm = self.rx.monitor.step(out.input, out.symbol);
            if let Some(kind) = alarm {
                if self.rx.alarms.raise(kind, step).is_some() {
                    self.log(step, to, EventKind::Alarm(kind));
                }
            }
            let before = self.rx.extract.extracted();
            let clear = self.rx.extract.step(out.symbol);
            if self.rx.extract.extracted() != before {
                self.log(step, to, EventKind::XExtracted);
            }
            self.rx.pcs.step(clear);
        }

        let latency = match first_s {
            [Some(a), Some(b), Some(c)] => Latency {
                insert: b - a,
                cipher: c - b,
            },
            _ => Latency::default(),
        };
        let tx_alarms = self.tx.alarms.poll();
        let rx_alarms = self.rx.alarms.poll();
        let stats = LinkStats {
            frames_sent: self.tx.pcs.frames_sent(),
            frames_received: self.rx.pcs.frames_received,
            crc_errors: self.rx.pcs.crc_errors,
            code_errors: self.rx.pcs.code_errors,
            alarms: (tx_alarms.len() + rx_alarms.len()) as u64,
            tx_added_latency_cycles: latency.total(),
            line_symbols,
        };
        let report = LaneReport {
            from: self.from,
            stats,
            latency,
            alignment_mismatches: mismatches,
            ciphered_symbols: ciphered,
            tx_alarms,
            rx_alarms,
            trace,
        };
        (report, self.events)
    }
}

/// Receiver key under `key_mismatch`: one flipped bit of cell 0's `x0`.
pub fn mismatched_key(key: &BankKey) -> BankKey {
    key.with_flipped_bit(0, KeyField::X0, 0)
        .or_else(|_| key.with_flipped_bit(0, KeyField::X0, 1))
        .expect("one of two single-bit flips keeps x0 valid")
}

/// Runs both directions of the link.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimReport, ConfigError> {
    cfg.validate()?;
    log::info!("simulating {} cycles per lane", cfg.cycles());
    let key = cfg.link_key();
    let rx_key = if cfg.key_mismatch {
        mismatched_key(&key)
    } else {
        key
    };
    let lane = |from: EndpointId, seed: u64| Lane {
        cfg,
        from,
        tx: TxPath::new(cfg, key),
        rx: RxPath::new(cfg, rx_key),
        channel: Channel::new(cfg.bit_error_rate, seed),
        events: Vec::new(),
    };
    let ab = lane(EndpointId::A, cfg.seed);
    let ba = lane(EndpointId::B, cfg.seed.wrapping_add(1));
    let ((ab, mut events), (ba, ev_ba)) = std::thread::scope(|s| {
        let h = s.spawn(move || ba.run());
        let ab = ab.run();
        (ab, h.join().expect("lane thread panicked"))
    });
    events.extend(ev_ba);
    events.sort_by_key(|x| (x.step, x.endpoint));
    Ok(SimReport {
        stats: ab.stats.merge(ba.stats),
        lanes: [ab, ba],
        events,
    })
}

/// Latency the insert pipeline adds by construction.
pub const EXPECTED_TX_LATENCY: u64 = (INSERT_LATENCY + CIPHER_LATENCY) as u64;

#[cfg(test)]
mod tests {
    use super::*;

    fn crc32_bitwise(data: &[u8]) -> u32 {
        let mut c = u32::MAX;
        for &b in data {
            for i in 0..8 {
                let bit = ((b >> i) & 1) as u32 ^ (c & 1);
                c >>= 1;
                if bit != 0 {
                    c ^= CRC32_POLY_REFLECTED;
                }
            }
        }
        !c
    }

    #[test]
    fn crc32_check_values() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), crc32_bitwise(b""));
        assert_eq!(crc32(b""), 0);
        let data: Vec<u8> = (0..1500u32).map(|i| (i * 7 + 3) as u8).collect();
        assert_eq!(crc32(&data), crc32_bitwise(&data));
    }

    #[test]
    fn crc32_detects_single_bit_flips() {
        let data: Vec<u8> = (0..64u8).collect();
        let fcs = crc32(&data);
        for bit in 0..64 * 8 {
            let mut d = data.clone();
            d[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(crc32(&d), fcs);
        }
    }

    #[test]
    fn idle_pcs_alternates_k_flag() {
        let mut tx = PcsTx::new(0, 64, 50);
        let k: Vec<bool> = (0..100).map(|_| tx.step().is_control()).collect();
        assert!(k.chunks(2).all(|c| c == [true, false]));
    }

    #[test]
    fn frame_walkthrough() {
        let mut tx = PcsTx::new(1, 64, 98);
        let syms: Vec<Symbol> = (0..200).map(|_| tx.step()).collect();
        let s = syms.iter().position(|&s| s == Symbol::START).unwrap();
        assert_eq!(s, MIN_IFG_SYMBOLS);
        assert!(syms[s + 1..s + 8 + 64].iter().all(|s| !s.is_control()));
        assert_eq!(syms[s + 8 + 64], Symbol::END);
        assert_eq!(syms[s + 9 + 64], Symbol::CARRIER_EXTEND);
        // 74 symbols is even: no pad, then idles
        assert_eq!(syms[s + 10 + 64], Symbol::K28_5);
    }

    #[test]
    fn idles_follow_disparity() {
        let mut tx = PcsTx::new(6, 65, 50);
        let mut rd = RunningDisparity::Negative;
        let syms: Vec<Symbol> = (0..3000).map(|_| tx.step()).collect();
        let mut after_frame = false;
        let mut checked = 0;
        for (i, &s) in syms.iter().enumerate() {
            if s == Symbol::K28_5 {
                let set = [s, syms[i + 1]];
                if after_frame && rd == RunningDisparity::Positive {
                    assert_eq!(set, IDLE1);
                    checked += 1;
                } else {
                    assert_eq!(set, IDLE2);
                    assert_eq!(rd, RunningDisparity::Negative);
                }
                after_frame = false;
            }
            if s == Symbol::CARRIER_EXTEND {
                after_frame = true;
            }
            rd = encode_symbol(s, rd).1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn ifg_sizing() {
        assert_eq!(frame_symbols(64), 74);
        assert_eq!(frame_symbols(65), 76);
        assert_eq!(ifg_symbols(1500, 98), 42);
        assert_eq!(ifg_symbols(1500, 10), 13_690);
        assert_eq!(ifg_symbols(64, 98), MIN_IFG_SYMBOLS);
        for u in 1..=98 {
            assert!(ifg_symbols(1500, u).is_multiple_of(2));
        }
    }

    #[test]
    fn loopback_recovers_frames() {
        let mut tx = PcsTx::new(20, 97, 60);
        let mut rx = PcsRx::default();
        let mut got = Vec::new();
        for _ in 0..20 * 400 {
            if let Some(f) = rx.step(tx.step().into()) {
                got.push(f);
            }
        }
        assert_eq!(rx.frames_received, 20);
        assert_eq!(rx.crc_errors + rx.code_errors, 0);
        assert_eq!(got[3], Frame::generate(3, 97));
    }

    #[test]
    fn corrupted_data_counts_crc_error() {
        let mut tx = PcsTx::new(2, 64, 50);
        let mut rx = PcsRx::default();
        let mut since_start = None;
        for _ in 0..1000 {
            let mut s = tx.step();
            if s == Symbol::START && since_start.is_none() {
                since_start = Some(0);
            }
            if let Some(n) = since_start.as_mut() {
                *n += 1;
                if *n == 20 {
                    s = Symbol::data(s.octet() ^ 0x10);
                }
            }
            rx.step(s.into());
        }
        assert_eq!(rx.crc_errors, 1);
        assert_eq!(rx.frames_received, 1);
        assert_eq!(rx.code_errors, 0);
        rx.step(Symbol::END.into());
        assert_eq!(rx.code_errors, 1);
    }

    #[test]
    fn channel_extremes_and_rate() {
        let g = CodeGroup::new(0b1010011100).unwrap();
        let mut clean = Channel::new(0.0, 1);
        assert_eq!(clean.step(g), g);
        let mut all = Channel::new(1.0, 1);
        assert_eq!(all.step(g).bits(), g.bits() ^ 0x3FF);
        let mut ch = Channel::new(1e-3, 7);
        for _ in 0..1_000_000 {
            ch.step(g);
        }
        let n: f64 = 1e7;
        let sigma = (n * 1e-3 * (1.0 - 1e-3)).sqrt();
        assert!(
            (ch.flips() as f64 - 1e4).abs() < 5.0 * sigma,
            "{}",
            ch.flips()
        );
    }

    #[test]
    fn aligner_locks_at_any_phase() {
        let mut enc = Encoder::default();
        let stream: Vec<Symbol> = IDLE2.iter().cycle().take(40).copied().collect();
        let groups: Vec<CodeGroup> = stream.iter().map(|&s| enc.encode(s)).collect();
        for phase in 0..10 {
            let mut al = Aligner::new(phase);
            let mut dec = Decoder::default();
            let out: Vec<Symbol> = groups
                .iter()
                .filter_map(|&g| al.push(g))
                .map(|g| dec.decode(g).unwrap())
                .collect();
            assert!(out.len() >= 30, "phase {phase}");
            assert_eq!(out[0], Symbol::K28_5);
            assert!(out.chunks(2).all(|c| c[0] == Symbol::K28_5));
        }
    }

    #[test]
    fn config_text_round_trip() {
        let text = "\
# demo
frames = 20
frame_length = 128
utilization = 90
encryption = on
action = 5000 A stop
";
        let cfg: SimConfig = text.parse().unwrap();
        assert_eq!(cfg.frame_count, 20);
        assert_eq!(cfg.frame_length, 128);
        assert_eq!(cfg.scenario.len(), 3);
        assert_eq!(cfg.scenario[2].action, Action::Stop);
        for bad in [
            "frames 3",
            "utilization = 99",
            "frame_length = 63",
            "nope = 1",
            "action = 1 C start",
        ] {
            assert!(bad.parse::<SimConfig>().is_err(), "{bad}");
        }
    }

    #[test]
    fn short_encrypted_run_is_lossless() {
        let cfg = SimConfig {
            frame_count: 30,
            frame_length: 333,
            utilization: 80,
            ..SimConfig::default()
        }
        .with_encryption();
        let r = run_simulation(&cfg).unwrap();
        assert_eq!(r.stats.frames_sent, 60);
        assert_eq!(r.stats.frames_received, 60);
        assert_eq!(r.stats.crc_errors + r.stats.code_errors + r.stats.alarms, 0);
        for lane in &r.lanes {
            assert_eq!(lane.alignment_mismatches, 0);
            assert!(lane.ciphered_symbols > 0);
            assert_eq!(
                lane.latency,
                Latency {
                    insert: 18,
                    cipher: 6
                }
            );
        }
        assert_eq!(r.stats.tx_added_latency_cycles, EXPECTED_TX_LATENCY);
    }

    #[test]
    fn phase_offset_link() {
        let cfg = SimConfig {
            frame_count: 10,
            frame_length: 64,
            rx_phase_bits: 7,
            ..SimConfig::default()
        }
        .with_encryption();
        let r = run_simulation(&cfg).unwrap();
        assert_eq!(r.stats.frames_received, 20);
        assert_eq!(r.stats.crc_errors, 0);
        assert!(r.lanes.iter().all(|l| l.alignment_mismatches == 0));
    }
}
