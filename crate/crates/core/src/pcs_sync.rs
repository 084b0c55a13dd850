//! In-band encryption synchronization.
//!
//! A four-symbol `/X/` ordered set (K28.1 D21.5 D21.2 D21.2) toggles the
//! cipher on both ends of a link. The pieces, in datapath order:
//!
//! * [`Insert`]: 18-symbol delay line that swaps two idle ordered sets for a
//!   queued message when they reach its output.
//! * [`CipherUnit`]: 6-cycle cipher pipeline with a [`Capture`] matcher on
//!   its input. A completed `/X/` enables the cipher from the next symbol on
//!   (resetting the keystream to step 0) or disables it starting at the `/X/`
//!   itself, so `/X/` always travels in clear.
//! * [`Extract`]: replaces each received `/X/` with `/I2/ /I2/`.
//! * [`SyncMonitor`]: raises `SyncLoss` or `EncryptionMismatch` when the
//!   receive stream shows no ordered-set structure for 267 symbols
//!   (2.136 us at 8 ns per symbol).

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::cipher::{cipher_step, Direction, CIPHER_LATENCY};
use crate::keystream::Keystream;
use crate::symbol::{is_idle_pair, Symbol, IDLE2};

/// `/X/` Cipher_on_off.
pub const X_ORDERED_SET: [Symbol; 4] = [Symbol::K28_1, Symbol::D21_5, Symbol::D21_2, Symbol::D21_2];

/// Delay of the INSERT pipeline in symbol clocks.
pub const INSERT_LATENCY: usize = 18;

/// Default message buffer capacity, in four-symbol messages.
pub const DEFAULT_QUEUE_CAPACITY: usize = 4;

/// Delay of the EXTRACT matcher.
pub const EXTRACT_LATENCY: usize = 4;

/// Sync-loss window in symbols.
pub const SYNC_WINDOW: u64 = 267;

/// Symbol clock period of the modeled PCS.
pub const SYMBOL_PERIOD_NS: f64 = 8.0;

/// Longest frame the monitor accepts between `/S/` and `/T/`: a 1518-octet
/// frame plus preamble and SFD.
const MAX_FRAME_SYMBOLS: u32 = 1518 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlarmKind {
    SyncLoss,
    EncryptionMismatch,
    MessageQueueOverflow,
}

impl fmt::Display for AlarmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AlarmKind::SyncLoss => "SyncLoss",
            AlarmKind::EncryptionMismatch => "EncryptionMismatch",
            AlarmKind::MessageQueueOverflow => "MessageQueueOverflow",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alarm {
    pub kind: AlarmKind,
    pub latched: bool,
    /// Symbol clock at which the alarm was raised.
    pub step: u64,
}

/// Latches the first occurrence of each alarm kind until cleared.
#[derive(Clone, Debug, Default)]
pub struct AlarmLatch {
    alarms: Vec<Alarm>,
}

impl AlarmLatch {
    /// Returns the alarm if it was not already latched.
    pub fn raise(&mut self, kind: AlarmKind, step: u64) -> Option<Alarm> {
        if self.alarms.iter().any(|a| a.kind == kind) {
            return None;
        }
        let alarm = Alarm {
            kind,
            latched: true,
            step,
        };
        self.alarms.push(alarm);
        Some(alarm)
    }

    pub fn poll(&self) -> Vec<Alarm> {
        self.alarms.clone()
    }

    pub fn is_latched(&self, kind: AlarmKind) -> bool {
        self.alarms.iter().any(|a| a.kind == kind)
    }

    pub fn clear(&mut self) {
        self.alarms.clear();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("insert message queue is full")]
pub struct QueueFull;

/// The INSERT block.
#[derive(Clone, Debug)]
pub struct Insert {
    pipeline: VecDeque<Symbol>,
    queue: VecDeque<[Symbol; 4]>,
    capacity: usize,
    /// Output position, used to find ordered-set boundaries.
    position: u64,
    /// Message symbols still at the head of the pipeline.
    inserting: u8,
    inserted: u64,
}

impl Default for Insert {
    fn default() -> Self {
        Self::new(DEFAULT_QUEUE_CAPACITY)
    }
}

impl Insert {
    /// Starts with the pipeline full of `/I2/`.
    pub fn new(capacity: usize) -> Self {
        let pipeline = IDLE2.iter().copied().cycle().take(INSERT_LATENCY).collect();
        Insert {
            pipeline,
            queue: VecDeque::with_capacity(capacity),
            capacity,
            position: 0,
            inserting: 0,
            inserted: 0,
        }
    }

    pub fn push_message(&mut self, msg: [Symbol; 4]) -> Result<(), QueueFull> {
        if self.queue.len() >= self.capacity {
            return Err(QueueFull);
        }
        self.queue.push_back(msg);
        Ok(())
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Messages placed on the line so far.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    fn head_is_two_idle_sets(&self) -> bool {
        let p = &self.pipeline;
        self.position.is_multiple_of(2) && is_idle_pair(p[0], p[1]) && is_idle_pair(p[2], p[3])
    }

    /// One symbol in, one symbol out, 18 cycles later.
    pub fn step(&mut self, sym: Symbol) -> Symbol {
        self.pipeline.push_back(sym);
        if self.inserting == 0 && !self.queue.is_empty() && self.head_is_two_idle_sets() {
            let msg = self.queue.pop_front().expect("checked non-empty");
            for (slot, s) in self.pipeline.iter_mut().zip(msg) {
                *slot = s;
            }
            self.inserting = 4;
            self.inserted += 1;
        }
        self.inserting = self.inserting.saturating_sub(1);
        self.position += 1;
        self.pipeline.pop_front().expect("pipeline is never empty")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Tx,
    Rx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaptureEvent {
    Enabled,
    Disabled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CaptureOutput {
    pub symbol: Symbol,
    /// Whether this symbol is to be ciphered. On `Disabled`, the three
    /// symbols before this one were the rest of the `/X/` and must be
    /// cleared by the caller as well.
    pub cipher_enable: bool,
    pub event: Option<CaptureEvent>,
}

/// The CAPTURE matcher. A match must start at an even stream position.
#[derive(Clone, Debug)]
pub struct Capture {
    side: Side,
    matched: usize,
    enabled: bool,
    position: u64,
    /// Remaining complete matches to ignore (fault injection).
    blind: u32,
}

impl Capture {
    pub fn new(side: Side) -> Self {
        Capture {
            side,
            matched: 0,
            enabled: false,
            position: 0,
            blind: 0,
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn step(&mut self, sym: Symbol) -> CaptureOutput {
        let pos = self.position;
        self.position += 1;
        if sym == X_ORDERED_SET[self.matched] && (self.matched > 0 || pos.is_multiple_of(2)) {
            self.matched += 1;
        } else if sym == X_ORDERED_SET[0] && pos.is_multiple_of(2) {
            self.matched = 1;
        } else {
            self.matched = 0;
        }
        if self.matched == X_ORDERED_SET.len() {
            self.matched = 0;
            if self.blind > 0 {
                self.blind -= 1;
            } else {
                self.enabled = !self.enabled;
                let event = if self.enabled {
                    CaptureEvent::Enabled
                } else {
                    CaptureEvent::Disabled
                };
                return CaptureOutput {
                    symbol: sym,
                    cipher_enable: false,
                    event: Some(event),
                };
            }
        }
        CaptureOutput {
            symbol: sym,
            cipher_enable: self.enabled,
            event: None,
        }
    }
}

/// A symbol as delivered by the decoder. `code_error` marks a group that
/// failed to decode; its symbol is `/V/`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RxSymbol {
    pub symbol: Symbol,
    pub code_error: bool,
}

impl From<Symbol> for RxSymbol {
    fn from(symbol: Symbol) -> Self {
        RxSymbol {
            symbol,
            code_error: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CipherUnitOutput {
    pub symbol: RxSymbol,
    /// The symbol as it entered the unit.
    pub input: RxSymbol,
    /// Keystream step after this symbol, when it was ciphered.
    pub keystream_step: Option<u64>,
    /// Capture event raised by the symbol that entered on this cycle.
    pub event: Option<CaptureEvent>,
    /// Cipher state for symbols entering after this cycle.
    pub enabled: bool,
}

#[derive(Clone, Copy, Debug)]
struct Stage {
    symbol: RxSymbol,
    cipher: bool,
}

/// CAPTURE followed by CIPHER_OP, `CIPHER_LATENCY` cycles deep.
#[derive(Clone, Debug)]
pub struct CipherUnit<K> {
    capture: Capture,
    direction: Direction,
    keystream: K,
    pipeline: VecDeque<Stage>,
}

impl<K: Keystream> CipherUnit<K> {
    pub fn new(side: Side, keystream: K) -> Self {
        let direction = match side {
            Side::Tx => Direction::Encrypt,
            Side::Rx => Direction::Decrypt,
        };
        let pipeline = IDLE2
            .iter()
            .cycle()
            .take(CIPHER_LATENCY)
            .map(|&s| Stage {
                symbol: s.into(),
                cipher: false,
            })
            .collect();
        CipherUnit {
            capture: Capture::new(side),
            direction,
            keystream,
            pipeline,
        }
    }

    pub fn enabled(&self) -> bool {
        self.capture.enabled()
    }

    pub fn keystream(&self) -> &K {
        &self.keystream
    }

    /// Draws one keystream value out of turn (fault injection).
    pub fn slip(&mut self) {
        self.keystream.next_value();
    }

    /// The capture ignores the next `n` complete `/X/` (fault injection).
    pub fn blind_capture(&mut self, n: u32) {
        self.capture.blind += n;
    }

    pub fn step(&mut self, input: RxSymbol) -> CipherUnitOutput {
        let cap = self.capture.step(input.symbol);
        match cap.event {
            Some(CaptureEvent::Enabled) => self.keystream.reset(),
            Some(CaptureEvent::Disabled) => {
                for stage in self.pipeline.iter_mut().rev().take(X_ORDERED_SET.len() - 1) {
                    stage.cipher = false;
                }
            }
            None => {}
        }
        self.pipeline.push_back(Stage {
            symbol: input,
            cipher: cap.cipher_enable,
        });
        let stage = self.pipeline.pop_front().expect("pipeline is never empty");
        let (symbol, keystream_step) = if stage.cipher {
            let out = if stage.symbol.code_error {
                self.keystream.next_value();
                stage.symbol
            } else {
                match cipher_step(stage.symbol.symbol, &mut self.keystream, self.direction) {
                    Ok(s) => s.into(),
                    Err(_) => {
                        // Keep the ends aligned: a refused symbol still
                        // occupies its keystream step.
                        self.keystream.next_value();
                        RxSymbol {
                            symbol: Symbol::ERROR,
                            code_error: true,
                        }
                    }
                }
            };
            (out, Some(self.keystream.step()))
        } else {
            (stage.symbol, None)
        };
        CipherUnitOutput {
            symbol,
            input: stage.symbol,
            keystream_step,
            event: cap.event,
            enabled: self.capture.enabled(),
        }
    }
}

/// The EXTRACT block.
#[derive(Clone, Debug)]
pub struct Extract {
    window: VecDeque<RxSymbol>,
    extracted: u64,
}

impl Default for Extract {
    fn default() -> Self {
        let window = IDLE2
            .iter()
            .cycle()
            .take(EXTRACT_LATENCY)
            .map(|&s| s.into())
            .collect();
        Extract {
            window,
            extracted: 0,
        }
    }
}

impl Extract {
    pub fn extracted(&self) -> u64 {
        self.extracted
    }

    pub fn step(&mut self, sym: RxSymbol) -> RxSymbol {
        self.window.push_back(sym);
        let is_x = self
            .window
            .iter()
            .skip(1)
            .zip(X_ORDERED_SET)
            .all(|(w, x)| !w.code_error && w.symbol == x);
        if is_x {
            for (slot, s) in self.window.iter_mut().skip(1).zip(IDLE2.iter().cycle()) {
                *slot = (*s).into();
            }
            self.extracted += 1;
        }
        self.window.pop_front().expect("window is never empty")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Grammar {
    /// Between frames, expecting symbol pairs.
    Between,
    /// First symbol of a pair seen.
    PairHead(Symbol),
    /// First pair of `/X/` seen.
    XHalf,
    XHalfHead,
    InFrame(u32),
    /// `/T/` seen; expects `/R/`.
    End,
    /// `/R/` pad to an even boundary.
    EndPad,
    /// Lost; looking for fresh structure.
    Hunting,
    HuntingHead(Symbol),
}

/// Tracks ordered-set structure of a symbol stream and reports how long it
/// has been since the last piece of structure ("anchor").
///
/// Anchors are: the second of two consecutive idle ordered sets, a complete
/// `/X/`, and the `/R/` that closes a `/S/ ... /T/` frame. While inside a
/// frame the window is suspended; a grammar violation in the frame voids it.
/// Ordered sets start at even stream positions.
#[derive(Clone, Debug)]
pub struct StructureTracker {
    state: Grammar,
    position: u64,
    last_anchor: u64,
    idle_run: u32,
}

impl StructureTracker {
    pub fn new(position: u64) -> Self {
        StructureTracker {
            state: Grammar::Between,
            position,
            last_anchor: position,
            idle_run: 0,
        }
    }

    /// Treat the current position as an anchor.
    pub fn reset(&mut self) {
        self.state = Grammar::Between;
        self.last_anchor = self.position;
        self.idle_run = 0;
    }

    fn anchor(&mut self) {
        self.last_anchor = self.position;
    }

    fn violation(&mut self) {
        self.state = Grammar::Hunting;
        self.idle_run = 0;
    }

    fn pair(&mut self, head: Symbol, tail: Symbol, hunting: bool) {
        if is_idle_pair(head, tail) {
            self.idle_run += 1;
            self.state = Grammar::Between;
            if self.idle_run >= 2 {
                self.anchor();
            }
        } else if head == X_ORDERED_SET[0] && tail == X_ORDERED_SET[1] {
            self.state = Grammar::XHalf;
        } else if !hunting && head == Symbol::START && !tail.is_control() {
            self.idle_run = 0;
            self.state = Grammar::InFrame(1);
        } else {
            self.violation();
        }
    }

    pub fn observe(&mut self, sym: RxSymbol) {
        self.position += 1;
        if sym.code_error {
            // Channel noise: neither structure nor a violation.
            if let Grammar::InFrame(n) = self.state {
                self.state = Grammar::InFrame(n + 1);
            }
            return;
        }
        let s = sym.symbol;
        // `position` is now one past this symbol
        let pair_head = self.position % 2 == 1;
        self.state = match self.state {
            Grammar::Between if pair_head => Grammar::PairHead(s),
            Grammar::Hunting if pair_head => Grammar::HuntingHead(s),
            Grammar::Between | Grammar::Hunting => return,
            Grammar::PairHead(head) => {
                self.pair(head, s, false);
                return;
            }
            Grammar::HuntingHead(head) => {
                self.pair(head, s, true);
                return;
            }
            Grammar::XHalf => {
                if s == X_ORDERED_SET[2] {
                    Grammar::XHalfHead
                } else {
                    self.violation();
                    return;
                }
            }
            Grammar::XHalfHead => {
                if s == X_ORDERED_SET[3] {
                    self.idle_run = 0;
                    self.anchor();
                    Grammar::Between
                } else {
                    self.violation();
                    return;
                }
            }
            Grammar::InFrame(n) => {
                if s == Symbol::END {
                    Grammar::End
                } else if s.is_control() || n >= MAX_FRAME_SYMBOLS {
                    self.violation();
                    return;
                } else {
                    Grammar::InFrame(n + 1)
                }
            }
            Grammar::End => {
                if s != Symbol::CARRIER_EXTEND {
                    self.violation();
                    return;
                }
                if !pair_head {
                    self.anchor();
                    Grammar::Between
                } else {
                    Grammar::EndPad
                }
            }
            Grammar::EndPad => {
                if s != Symbol::CARRIER_EXTEND {
                    self.violation();
                    return;
                }
                self.anchor();
                Grammar::Between
            }
        };
    }

    pub fn in_frame(&self) -> bool {
        matches!(
            self.state,
            Grammar::InFrame(_) | Grammar::End | Grammar::EndPad
        )
    }

    /// Symbols since the last anchor; zero while inside a frame.
    pub fn unstructured_run(&self) -> u64 {
        if self.in_frame() {
            0
        } else {
            self.position - self.last_anchor
        }
    }

    /// True when a full window has passed without structure.
    pub fn lost(&self) -> bool {
        self.unstructured_run() >= SYNC_WINDOW
    }
}

/// Receive-side synchronization monitor.
///
/// Watches the stream both before and after the decipher unit. While
/// deciphering, loss of structure after the unit is `SyncLoss`, unless the
/// stream before the unit is itself well-formed clear text, which means the
/// far end is not encrypting (`EncryptionMismatch`). While not deciphering,
/// loss of structure means the far end is encrypting (`EncryptionMismatch`).
#[derive(Clone, Debug)]
pub struct SyncMonitor {
    before: StructureTracker,
    after: StructureTracker,
    deciphering: bool,
    step: u64,
}

impl Default for SyncMonitor {
    fn default() -> Self {
        SyncMonitor {
            before: StructureTracker::new(0),
            after: StructureTracker::new(0),
            deciphering: false,
            step: 0,
        }
    }
}

impl SyncMonitor {
    /// Call on every cipher state change.
    pub fn set_deciphering(&mut self, on: bool) {
        if on != self.deciphering {
            self.deciphering = on;
            self.after.reset();
        }
    }

    /// Observes one symbol on each side of the decipher unit and returns the
    /// alarm kind that the current state indicates, if any.
    pub fn step(&mut self, before: RxSymbol, after: RxSymbol) -> Option<AlarmKind> {
        self.step += 1;
        self.before.observe(before);
        self.after.observe(after);
        if !self.after.lost() {
            return None;
        }
        if self.deciphering && !self.before.lost() {
            Some(AlarmKind::EncryptionMismatch)
        } else if self.deciphering {
            Some(AlarmKind::SyncLoss)
        } else {
            Some(AlarmKind::EncryptionMismatch)
        }
    }

    pub fn after(&self) -> &StructureTracker {
        &self.after
    }
}

/// `syncloss_monitor_step` wrapper that latches into `latch`.
pub fn monitor_and_latch(
    monitor: &mut SyncMonitor,
    latch: &mut AlarmLatch,
    before: RxSymbol,
    after: RxSymbol,
    step: u64,
) -> Option<Alarm> {
    monitor
        .step(before, after)
        .and_then(|kind| latch.raise(kind, step))
}
