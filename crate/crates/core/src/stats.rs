//! Statistical tests for keystreams, chaotic bitstreams and line traces.
//!
//! p-values come from the regularized incomplete gamma functions below
//! (series below `a + 1`, Lentz continued fraction above).

use std::f64::consts::{LN_2, SQRT_2};
use std::fmt;

use thiserror::Error;

use crate::cipher::symbol_to_index;
use crate::keystream::{KeystreamValue, MODULUS};
use crate::symbol::Symbol;

const BINS: usize = MODULUS as usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("{test}: needs at least {needed} samples, got {got}")]
    InsufficientSample {
        test: &'static str,
        needed: u64,
        got: u64,
    },
}

fn need(test: &'static str, needed: u64, got: u64) -> Result<(), StatsError> {
    if got < needed {
        Err(StatsError::InsufficientSample { test, needed, got })
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub significance: f64,
    pub sample_size: u64,
}

impl TestReport {
    fn new(
        name: impl Into<String>,
        statistic: f64,
        p_value: f64,
        significance: f64,
        n: u64,
    ) -> Self {
        TestReport {
            name: name.into(),
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            significance,
            sample_size: n,
        }
    }

    pub fn passed(&self) -> bool {
        self.p_value >= self.significance
    }

    pub const CSV_HEADER: &'static str = "test,statistic,p_value,significance,sample_size,result";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6e},{},{},{}",
            self.name,
            self.statistic,
            self.p_value,
            self.significance,
            self.sample_size,
            if self.passed() { "pass" } else { "fail" }
        )
    }
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} stat={:<14.6} p={:<12.6e} n={} {}",
            self.name,
            self.statistic,
            self.p_value,
            self.sample_size,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + G + 0.5;
    let s = C[1..]
        .iter()
        .enumerate()
        .fold(C[0], |s, (i, c)| s + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 1_000_000;

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_p({a}, {x})");
    if x == 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) (`igamc` in SP 800-22).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q({a}, {x})");
    if x == 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

/// Complementary error function, as Q(1/2, x²) for x ≥ 0.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else {
        gamma_q(0.5, x * x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(statistic: f64, dof: f64) -> f64 {
    gamma_q(dof / 2.0, statistic.max(0.0) / 2.0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram267 {
    counts: [u64; BINS],
    total: u64,
}

impl Default for Histogram267 {
    fn default() -> Self {
        Histogram267 {
            counts: [0; BINS],
            total: 0,
        }
    }
}

impl Histogram267 {
    pub fn add(&mut self, v: u16) {
        assert!(v < MODULUS, "value {v} outside 0..267");
        self.counts[v as usize] += 1;
        self.total += 1;
    }

    pub fn from_values<I: IntoIterator<Item = KeystreamValue>>(values: I) -> Self {
        let mut h = Self::default();
        for v in values {
            h.add(v.value());
        }
        h
    }

    /// Cipher indices of `symbols`; K28.7 is skipped.
    pub fn from_symbols(symbols: &[Symbol]) -> Self {
        let mut h = Self::default();
        for &s in symbols {
            if let Ok(i) = symbol_to_index(s) {
                h.add(i.value());
            }
        }
        h
    }

    pub fn counts(&self) -> &[u64; BINS] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `value,count` lines for plotting.
    pub fn csv(&self) -> String {
        let mut s = String::from("value,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{i},{c}\n"));
        }
        s
    }
}

/// Pearson statistic of `observed` against `probs` scaled to the total.
fn pearson(observed: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = n as f64 * p;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

/// Chi-square goodness of fit to uniform over 0..267, 266 degrees of freedom.
pub fn chi_square_uniform(h: &Histogram267, significance: f64) -> Result<TestReport, StatsError> {
    need("chi_square_uniform", 5 * BINS as u64, h.total)?;
    let e = h.total as f64 / BINS as f64;
    let stat: f64 = h.counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    let p = chi_square_sf(stat, (BINS - 1) as f64);
    Ok(TestReport::new(
        "chi_square_uniform",
        stat,
        p,
        significance,
        h.total,
    ))
}

/// Two-sample chi-square homogeneity test for binned data sets of unequal
/// size; bins empty in both are dropped.
pub fn chi_square_two_sample(r: &[u64], s: &[u64]) -> (f64, f64) {
    let rt: u64 = r.iter().sum();
    let st: u64 = s.iter().sum();
    let k1 = (st as f64 / rt as f64).sqrt();
    let k2 = (rt as f64 / st as f64).sqrt();
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&a, &b) in r.iter().zip(s) {
        if a + b == 0 {
            continue;
        }
        bins += 1;
        stat += (k1 * a as f64 - k2 * b as f64).powi(2) / (a + b) as f64;
    }
    let dof = bins.saturating_sub(1).max(1) as f64;
    (stat, chi_square_sf(stat, dof))
}

pub mod nist {
    //! SP 800-22 subset. Every test takes bits as `bool`s.

    use super::*;

    pub const SIGNIFICANCE: f64 = 0.01;
    pub const MIN_BITS: usize = 1_000_000;
    pub const BLOCK_FREQUENCY_M: usize = 128;
    pub const SERIAL_M: usize = 16;
    pub const APEN_M: usize = 10;

    fn report(name: &str, stat: f64, p: f64, n: usize) -> TestReport {
        TestReport::new(name, stat, p, SIGNIFICANCE, n as u64)
    }

    pub fn monobit(bits: &[bool]) -> TestReport {
        let n = bits.len();
        let s: i64 = bits.iter().map(|&b| if b { 1 } else { -1 }).sum();
        let s_obs = s.unsigned_abs() as f64 / (n as f64).sqrt();
        report("monobit", s_obs, erfc(s_obs / SQRT_2), n)
    }

    pub fn block_frequency(bits: &[bool], m: usize) -> TestReport {
        let blocks = bits.len() / m;
        let chi: f64 = bits
            .chunks_exact(m)
            .map(|b| {
                let pi = b.iter().filter(|&&x| x).count() as f64 / m as f64;
                (pi - 0.5).powi(2)
            })
            .sum::<f64>()
            * 4.0
            * m as f64;
        report(
            "block_frequency",
            chi,
            gamma_q(blocks as f64 / 2.0, chi / 2.0),
            bits.len(),
        )
    }

    pub fn runs(bits: &[bool]) -> TestReport {
        let n = bits.len() as f64;
        let pi = bits.iter().filter(|&&b| b).count() as f64 / n;
        if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
            // frequency prerequisite failed
            return report("runs", 0.0, 0.0, bits.len());
        }
        let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
        let v = v as f64;
        let num = (v - 2.0 * n * pi * (1.0 - pi)).abs();
        let den = 2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi);
        report("runs", v, erfc(num / den), bits.len())
    }

    /// Block size and class table chosen by sequence length.
    fn longest_run_params(n: usize) -> (usize, usize, &'static [f64]) {
        const P8: [f64; 4] = [0.2148, 0.3672, 0.2305, 0.1875];
        const P128: [f64; 6] = [0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124];
        const P10K: [f64; 7] = [0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727];
        if n < 6272 {
            (8, 1, &P8)
        } else if n < 750_000 {
            (128, 4, &P128)
        } else {
            (10_000, 10, &P10K)
        }
    }

    pub fn longest_run(bits: &[bool]) -> TestReport {
        let (m, lowest, pi) = longest_run_params(bits.len());
        let k = pi.len() - 1;
        let mut v = vec![0u64; pi.len()];
        let blocks = bits.len() / m;
        for block in bits.chunks_exact(m) {
            let (mut run, mut best) = (0usize, 0usize);
            for &b in block {
                run = if b { run + 1 } else { 0 };
                best = best.max(run);
            }
            let class = best.saturating_sub(lowest).min(k);
            v[class] += 1;
        }
        let n = blocks as f64;
        let chi: f64 = v
            .iter()
            .zip(pi)
            .map(|(&o, &p)| (o as f64 - n * p).powi(2) / (n * p))
            .sum();
        report(
            "longest_run",
            chi,
            gamma_q(k as f64 / 2.0, chi / 2.0),
            bits.len(),
        )
    }

    pub fn cumulative_sums(bits: &[bool], reverse: bool) -> TestReport {
        let n = bits.len();
        let step = |b: &bool| if *b { 1i64 } else { -1 };
        let mut s = 0i64;
        let mut z = 0i64;
        let mut walk = |b: &bool| {
            s += step(b);
            z = z.max(s.abs());
        };
        if reverse {
            bits.iter().rev().for_each(&mut walk);
        } else {
            bits.iter().for_each(&mut walk);
        }
        let (nf, zf) = (n as f64, z as f64);
        let sq = nf.sqrt();
        let mut sum1 = 0.0;
        let lo = ((-nf / zf + 1.0) / 4.0).floor() as i64;
        let hi = ((nf / zf - 1.0) / 4.0).floor() as i64;
        for k in lo..=hi {
            let k = k as f64;
            sum1 += normal_cdf((4.0 * k + 1.0) * zf / sq) - normal_cdf((4.0 * k - 1.0) * zf / sq);
        }
        let mut sum2 = 0.0;
        let lo = ((-nf / zf - 3.0) / 4.0).floor() as i64;
        for k in lo..=hi {
            let k = k as f64;
            sum2 += normal_cdf((4.0 * k + 3.0) * zf / sq) - normal_cdf((4.0 * k + 1.0) * zf / sq);
        }
        let name = if reverse {
            "cusum_reverse"
        } else {
            "cusum_forward"
        };
        report(name, zf, 1.0 - sum1 + sum2, n)
    }

    /// Overlapping m-bit pattern counts with wraparound.
    fn pattern_counts(bits: &[bool], m: usize) -> Vec<u64> {
        let mut counts = vec![0u64; 1 << m];
        if m == 0 {
            counts[0] = bits.len() as u64;
            return counts;
        }
        let n = bits.len();
        let mask = (1usize << m) - 1;
        let mut w = 0usize;
        for &b in bits.iter().take(m - 1) {
            w = (w << 1) | b as usize;
        }
        for i in 0..n {
            w = ((w << 1) | bits[(i + m - 1) % n] as usize) & mask;
            counts[w] += 1;
        }
        counts
    }

    fn psi_sq(bits: &[bool], m: usize) -> f64 {
        if m == 0 {
            return 0.0;
        }
        let n = bits.len() as f64;
        let sum: f64 = pattern_counts(bits, m)
            .iter()
            .map(|&c| (c as f64).powi(2))
            .sum();
        sum * (1u64 << m) as f64 / n - n
    }

    /// Returns the two serial p-values.
    pub fn serial(bits: &[bool], m: usize) -> [TestReport; 2] {
        let p0 = psi_sq(bits, m);
        let p1 = psi_sq(bits, m - 1);
        let p2 = psi_sq(bits, m - 2);
        let d1 = p0 - p1;
        let d2 = p0 - 2.0 * p1 + p2;
        let n = bits.len();
        [
            report(
                "serial_1",
                d1,
                gamma_q((1u64 << (m - 2)) as f64, d1 / 2.0),
                n,
            ),
            report(
                "serial_2",
                d2,
                gamma_q((1u64 << (m - 3)) as f64, d2 / 2.0),
                n,
            ),
        ]
    }

    fn phi(bits: &[bool], m: usize) -> f64 {
        let n = bits.len() as f64;
        pattern_counts(bits, m)
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum()
    }

    pub fn approximate_entropy(bits: &[bool], m: usize) -> TestReport {
        let n = bits.len() as f64;
        let apen = phi(bits, m) - phi(bits, m + 1);
        let chi = 2.0 * n * (LN_2 - apen);
        report(
            "approximate_entropy",
            chi,
            gamma_q((1u64 << (m - 1)) as f64, chi / 2.0),
            bits.len(),
        )
    }

    /// Seven tests, nine p-values: cumulative sums and serial give two each.
    pub fn subset(bits: &[bool]) -> Result<Vec<TestReport>, StatsError> {
        need("nist_subset", MIN_BITS as u64, bits.len() as u64)?;
        let mut v = vec![
            monobit(bits),
            block_frequency(bits, BLOCK_FREQUENCY_M),
            runs(bits),
            longest_run(bits),
            cumulative_sums(bits, false),
            cumulative_sums(bits, true),
        ];
        v.extend(serial(bits, SERIAL_M));
        v.push(approximate_entropy(bits, APEN_M));
        Ok(v)
    }
}

pub use nist::subset as nist_subset;

pub mod knuth {
    //! Frequency, serial and poker tests over values in 0..267.

    use super::*;

    pub const SIGNIFICANCE: f64 = 0.05;
    pub const HAND: usize = 5;
    /// Reference sample sizes.
    pub const FREQUENCY_VALUES: usize = 3_000_000;
    pub const SERIAL_PAIRS: usize = 15_000_000;

    pub fn frequency(values: &[u16]) -> Result<TestReport, StatsError> {
        let mut h = Histogram267::default();
        values.iter().for_each(|&v| h.add(v));
        let mut r = chi_square_uniform(&h, SIGNIFICANCE)?;
        r.name = "knuth_frequency".into();
        Ok(r)
    }

    /// Non-overlapping ordered pairs over 267² cells.
    pub fn serial(values: &[u16]) -> Result<TestReport, StatsError> {
        let cells = BINS * BINS;
        let pairs = values.len() / 2;
        need("knuth_serial", 5 * cells as u64, pairs as u64)?;
        let mut counts = vec![0u64; cells];
        for p in values.chunks_exact(2) {
            counts[p[0] as usize * BINS + p[1] as usize] += 1;
        }
        let e = pairs as f64 / cells as f64;
        let stat: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        let p = chi_square_sf(stat, (cells - 1) as f64);
        Ok(TestReport::new(
            "knuth_serial",
            stat,
            p,
            SIGNIFICANCE,
            pairs as u64,
        ))
    }

    /// Stirling numbers of the second kind S(n, k), k = 0..=n.
    pub fn stirling2(n: usize) -> Vec<u64> {
        let mut row = vec![1u64];
        for i in 1..=n {
            let mut next = vec![0u64; i + 1];
            for k in 1..=i {
                let keep = if k < row.len() { k as u64 * row[k] } else { 0 };
                next[k] = keep + row[k - 1];
            }
            row = next;
        }
        row
    }

    /// P(r distinct values in a hand of `HAND`), r = 1..=HAND, for alphabet `d`.
    pub fn poker_probabilities(d: u64) -> Vec<f64> {
        let s = stirling2(HAND);
        (1..=HAND)
            .map(|r| {
                let falling: f64 = (0..r as u64).map(|j| (d - j) as f64).product();
                falling * s[r] as f64 / (d as f64).powi(HAND as i32)
            })
            .collect()
    }

    /// Merges categories from the lowest one up until each expected count
    /// reaches 5. Returns (observed, probability) per merged class.
    fn merge_sparse(observed: &[u64], probs: &[f64], n: f64) -> (Vec<u64>, Vec<f64>) {
        let (mut obs, mut pr) = (Vec::new(), Vec::new());
        let (mut o_acc, mut p_acc) = (0u64, 0.0);
        for (&o, &p) in observed.iter().zip(probs) {
            o_acc += o;
            p_acc += p;
            if n * p_acc >= 5.0 {
                obs.push(o_acc);
                pr.push(p_acc);
                o_acc = 0;
                p_acc = 0.0;
            }
        }
        if p_acc > 0.0 {
            match (obs.last_mut(), pr.last_mut()) {
                (Some(o), Some(p)) => {
                    *o += o_acc;
                    *p += p_acc;
                }
                _ => {
                    obs.push(o_acc);
                    pr.push(p_acc);
                }
            }
        }
        (obs, pr)
    }

    /// Hands of five consecutive values, classified by distinct count.
    pub fn poker(values: &[u16]) -> Result<TestReport, StatsError> {
        let hands = values.len() / HAND;
        let probs = poker_probabilities(MODULUS as u64);
        let mut observed = vec![0u64; HAND];
        for hand in values.chunks_exact(HAND) {
            let mut distinct = 0;
            for (i, v) in hand.iter().enumerate() {
                if !hand[..i].contains(v) {
                    distinct += 1;
                }
            }
            observed[distinct - 1] += 1;
        }
        let (obs, pr) = merge_sparse(&observed, &probs, hands as f64);
        need("knuth_poker", 2, obs.len() as u64)?;
        let stat = pearson(&obs, &pr);
        let p = chi_square_sf(stat, (obs.len() - 1) as f64);
        Ok(TestReport::new(
            "knuth_poker",
            stat,
            p,
            SIGNIFICANCE,
            hands as u64,
        ))
    }

    pub fn all(values: &[u16]) -> Result<Vec<TestReport>, StatsError> {
        Ok(vec![frequency(values)?, serial(values)?, poker(values)?])
    }
}

pub use knuth::all as knuth_tests;

#[derive(Clone, Debug, PartialEq)]
pub struct KflagReport {
    pub k_rate_a: f64,
    pub k_rate_b: f64,
    pub homogeneity: TestReport,
}

impl KflagReport {
    /// Expected control rate of a uniformly distributed ciphertext.
    pub const CIPHER_K_RATE: f64 = 11.0 / 267.0;

    /// Whether `rate` over `n` symbols lies within `sigmas` of 11/267.
    pub fn near_cipher_rate(rate: f64, n: usize, sigmas: f64) -> bool {
        let p = Self::CIPHER_K_RATE;
        (rate - p).abs() <= sigmas * (p * (1.0 - p) / n as f64).sqrt()
    }
}

pub fn k_rate(trace: &[Symbol]) -> f64 {
    trace.iter().filter(|s| s.is_control()).count() as f64 / trace.len() as f64
}

/// Control-symbol rates of two traces and a two-sample chi-square on their
/// symbol-index distributions. Indistinguishable at `significance` = pass.
pub fn kflag_analysis(
    a: &[Symbol],
    b: &[Symbol],
    significance: f64,
) -> Result<KflagReport, StatsError> {
    let min = 5 * BINS as u64;
    need("kflag_analysis", min, a.len() as u64)?;
    need("kflag_analysis", min, b.len() as u64)?;
    let ha = Histogram267::from_symbols(a);
    let hb = Histogram267::from_symbols(b);
    let (stat, p) = chi_square_two_sample(ha.counts(), hb.counts());
    Ok(KflagReport {
        k_rate_a: k_rate(a),
        k_rate_b: k_rate(b),
        homogeneity: TestReport::new(
            "kflag_homogeneity",
            stat,
            p,
            significance,
            (a.len() + b.len()) as u64,
        ),
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn uniform_histogram_edges() {
        let mut h = Histogram267::default();
        for v in 0..267u16 {
            for _ in 0..10 {
                h.add(v);
            }
        }
        let r = chi_square_uniform(&h, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(r.passed());

        let mut h = Histogram267::default();
        for _ in 0..5 * 267 {
            h.add(7);
        }
        assert!(!chi_square_uniform(&h, 0.05).unwrap().passed());

        let mut h = Histogram267::default();
        h.add(1);
        assert!(matches!(
            chi_square_uniform(&h, 0.05),
            Err(StatsError::InsufficientSample { .. })
        ));
    }

    #[test]
    fn stirling_row_five() {
        assert_eq!(knuth::stirling2(5), vec![0, 1, 15, 25, 10, 1]);
        let p = knuth::poker_probabilities(267);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poker_probabilities_match_sampling() {
        // small alphabet so every class is well populated
        let d = 6u64;
        let p = knuth::poker_probabilities(d);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let trials = 200_000;
        let mut counts = [0u64; 5];
        for _ in 0..trials {
            let hand: Vec<u64> = (0..5).map(|_| rng.gen_range(0..d)).collect();
            let mut distinct = hand.clone();
            distinct.sort_unstable();
            distinct.dedup();
            counts[distinct.len() - 1] += 1;
        }
        for (c, p) in counts.iter().zip(&p) {
            let sd = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - trials as f64 * p).abs() < 5.0 * sd + 1.0);
        }
    }

    #[test]
    fn constant_stream_fails_knuth_tests() {
        let v = vec![42u16; 5 * 267 * 267 * 2];
        for r in knuth::all(&v).unwrap() {
            assert!(!r.passed(), "{r}");
        }
    }

    #[test]
    fn degenerate_bitstreams_fail() {
        let zeros = vec![false; 1000];
        assert!(nist::monobit(&zeros).p_value < 1e-10);
        let alt: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
        assert!(nist::runs(&alt).p_value < 1e-10);
    }

    #[test]
    fn two_sample_of_identical_sets_is_zero() {
        let a = [5u64, 9, 0, 3];
        let (stat, p) = chi_square_two_sample(&a, &a);
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
    }

    // Frozen from tools/stats_oracle.py (mpmath, 50 digits).
    const E_100: &str = "1100100100001111110110101010001000100001011010001100001000110100\
                         110001001100011001100010100010111000";
    const LONGEST_128: &str = "11001100000101010110110001001100111000000000001001\
                               00110101010001000100111101011010000000110101111100\
                               1100111001101101100010110010";

    fn bits(s: &str) -> Vec<bool> {
        s.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c == '1')
            .collect()
    }

    fn close(got: f64, want: f64, rel: f64) {
        assert!(
            (got - want).abs() <= rel * want.abs().max(1e-300),
            "got {got:e}, want {want:e}"
        );
    }

    #[test]
    fn incomplete_gamma_against_oracle() {
        let cases = [
            (0.5, 0.1, 0.654_720_846_018_577_02),
            (1.5, 3.0, 0.111_610_225_094_712_56),
            (10.0, 12.5, 0.201_431_104_945_535_77),
            (133.0, 140.2, 0.260_379_163_127_252_2),
            (133.0, 100.0, 0.999_064_953_653_585_87),
            (512.0, 530.0, 0.211_551_655_405_654_37),
            (32768.0, 32900.0, 0.232_674_366_738_264_88),
            (35644.0, 35700.3, 0.382_159_649_141_374_07),
            (35644.0, 36500.0, 3.398_359_139_433_374_2e-6),
        ];
        for (a, x, q) in cases {
            close(gamma_q(a, x), q, 1e-9);
            close(gamma_p(a, x), 1.0 - q, 1e-9);
        }
        close(erfc(0.5), 0.479_500_122_186_953_46, 1e-12);
        close(erfc(1.0), 0.157_299_207_050_285_13, 1e-12);
        close(erfc(3.0), 2.209_049_699_858_544_1e-5, 1e-10);
        close(erfc(6.0), 2.151_973_671_249_891_3e-17, 1e-8);
        assert_eq!(erfc(0.0), 1.0);
    }

    #[test]
    fn sp800_22_worked_examples() {
        let e = bits(E_100);
        assert_eq!(e.len(), 100);
        close(
            nist::monobit(&bits("1011010101")).p_value,
            0.527_089_256_865_538_09,
            1e-9,
        );
        close(nist::monobit(&e).p_value, 0.109_598_583_399_115_99, 1e-9);
        close(
            nist::block_frequency(&bits("0110011010"), 3).p_value,
            0.801_251_956_901_200_8,
            1e-9,
        );
        close(
            nist::block_frequency(&e, 10).p_value,
            0.706_438_449_641_280_78,
            1e-9,
        );
        close(
            nist::runs(&bits("1001101011")).p_value,
            0.147_232_255_363_665_56,
            1e-9,
        );
        close(nist::runs(&e).p_value, 0.500_797_917_887_089_38, 1e-9);
        let lr = nist::longest_run(&bits(LONGEST_128));
        close(lr.statistic, 4.882_605_259_774_991_8, 1e-9);
        close(lr.p_value, 0.180_597_976_785_558_13, 1e-9);
        close(
            nist::cumulative_sums(&bits("1011010111"), false).p_value,
            0.411_584_718_252_597_8,
            1e-9,
        );
        close(
            nist::cumulative_sums(&e, false).p_value,
            0.219_193_993_485_626_56,
            1e-9,
        );
        close(
            nist::cumulative_sums(&e, true).p_value,
            0.114_866_215_302_521_59,
            1e-9,
        );
        let [s1, s2] = nist::serial(&bits("0011011101"), 3);
        close(s1.p_value, 0.808_792_135_410_998_86, 1e-9);
        close(s2.p_value, 0.670_320_046_035_639_3, 1e-9);
        close(
            nist::approximate_entropy(&bits("0100110101"), 3).p_value,
            0.261_961_104_881_665_39,
            1e-9,
        );
        close(
            nist::approximate_entropy(&e, 2).p_value,
            0.235_300_745_858_982_97,
            1e-9,
        );
    }

    #[test]
    fn poker_probabilities_against_oracle() {
        let want = [
            1.967_682_189_156_373_8e-10,
            7.851_051_934_733_931_4e-7,
            3.467_547_937_840_819_7e-4,
            3.661_730_622_359_905_6e-2,
            9.630_351_536_806_551_7e-1,
        ];
        for (got, want) in knuth::poker_probabilities(267).iter().zip(want) {
            close(*got, want, 1e-12);
        }
    }

    #[test]
    fn nist_subset_rejects_short_input() {
        assert!(nist_subset(&[true; 1000]).is_err());
    }
}
