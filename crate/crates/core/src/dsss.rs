//! Direct-sequence spreading driven by the synchronized chaotic pair.
//!
//! Each symbol interval takes one chaotic sample at the interval start,
//! expands the fractional part of the scaled sample into an m-bit chip
//! word, and XORs the zero-order-held information bits with those chips.
//! The receiver rebuilds the same chip word from the slave system and XORs
//! again; a block correlator (sum r chips, divide by r) then yields exactly
//! 0 or 1 per information bit precisely when both chip words agree and the
//! channel was clean. Any disagreement leaves a non-integral correlator
//! value, so corruption is detected instead of silently decoded.

use crate::chaos::ChaoticTrace;
use crate::channel::{add_awgn_in_place, LinkSim, NoiseSpec};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tolerance for the exact-{0,1} membership test in [`detect`]. The
/// correlator of matching chip words is integer arithmetic scaled by 1/r,
/// so anything beyond rounding slack marks a mismatch.
pub const DETECT_TOL: f64 = 1e-12;

/// An m-bit spreading sequence aligned to one information-symbol interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChipWord {
    pub bits: Vec<u8>,
    pub symbol_index: usize,
}

impl ChipWord {
    pub fn new(bits: Vec<u8>, symbol_index: usize) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::DomainError("chip word is empty".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::DomainError("chip word has non-binary elements".into()));
        }
        Ok(ChipWord { bits, symbol_index })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// One information symbol: a short block of bits at the symbol rate.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoSymbol {
    pub bits: Vec<u8>,
    /// Symbols per second.
    pub rate: f64,
}

impl InfoSymbol {
    pub fn new(bits: Vec<u8>, rate: f64) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::DomainError("info symbol is empty".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::DomainError("info symbol has non-binary elements".into()));
        }
        if !(rate > 0.0) {
            return Err(Error::DomainError(format!("symbol rate must be positive, got {rate}")));
        }
        Ok(InfoSymbol { bits, rate })
    }
}

/// Expands the fractional part of a scaled chaotic sample into its top
/// `m_chips` binary-fraction digits.
///
/// The caller passes the sample already multiplied by the quantizer scale;
/// only `x mod 1` matters here, so the chips depend on fine structure of
/// the trajectory rather than its coarse range. Multiplying by two and
/// peeling the integer part is exact in floating point, which keeps both
/// ends of a synchronized pair bit-identical.
pub fn gen_chips(x: f64, m_chips: usize) -> ChipWord {
    assert!((2..=64).contains(&m_chips), "m_chips must lie in [2, 64], got {m_chips}");
    let mut frac = x - x.floor();
    let mut bits = Vec::with_capacity(m_chips);
    for _ in 0..m_chips {
        frac *= 2.0;
        let digit = frac.floor();
        bits.push(digit as u8);
        frac -= digit;
    }
    ChipWord { bits, symbol_index: 0 }
}

/// Spreads one symbol: holds each info bit over `r = m/n` chips, then XORs
/// with the chip word.
pub fn spread(sym: &InfoSymbol, chips: &ChipWord) -> Result<Vec<u8>> {
    let n = sym.bits.len();
    let m = chips.len();
    if m % n != 0 {
        return Err(Error::LengthMismatch(format!(
            "{n} info bits do not divide {m} chips evenly"
        )));
    }
    let r = m / n;
    Ok((0..m).map(|j| sym.bits[j / r] ^ chips.bits[j]).collect())
}

/// Despreads a received chip sequence by XOR with the local chip word.
/// Involution with [`spread`] when both sides hold the same chips.
pub fn despread(rx: &[u8], chips: &ChipWord) -> Result<Vec<u8>> {
    if rx.len() != chips.len() {
        return Err(Error::LengthMismatch(format!(
            "received {} chips against a {}-chip word",
            rx.len(),
            chips.len()
        )));
    }
    Ok(rx.iter().zip(&chips.bits).map(|(&a, &c)| a ^ c).collect())
}

/// Block correlator: mean of each group of `r` despread chips. Matching
/// chip words give exactly 0 or 1 per block; any disagreement lands
/// strictly inside (0, 1).
pub fn correlate(despread: &[f64], r: usize) -> Result<Vec<f64>> {
    assert!(r >= 1, "need at least one chip per bit");
    if despread.len() % r != 0 {
        return Err(Error::LengthMismatch(format!(
            "{} despread chips do not form whole blocks of {r}",
            despread.len()
        )));
    }
    Ok(despread
        .chunks_exact(r)
        .map(|block| block.iter().sum::<f64>() / r as f64)
        .collect())
}

/// Turns correlator output into a symbol plus a validity flag.
///
/// The flag is true only when every value sits within [`DETECT_TOL`] of
/// exactly 0 or 1, which certifies that the chip words matched and the
/// channel was error-free. Invalid outputs are still rounded to the nearer
/// level (ties to 0) so downstream consumers always get bits, but flagged.
pub fn detect(correlator_out: &[f64], rate: f64) -> (InfoSymbol, bool) {
    let valid = correlator_out
        .iter()
        .all(|&v| v.abs() <= DETECT_TOL || (v - 1.0).abs() <= DETECT_TOL);
    let bits = correlator_out.iter().map(|&v| u8::from(v > 0.5)).collect();
    (InfoSymbol { bits, rate }, valid)
}

/// Direct-sequence link settings.
#[derive(Debug, Clone)]
pub struct DsssConfig {
    /// Multiplier applied to the chaotic sample before chip extraction.
    pub chip_scale: f64,
    /// Chips per symbol interval.
    pub m_chips: usize,
    /// Information bits per symbol.
    pub symbol_bits: usize,
    /// Samples per symbol interval; chips come from the first sample.
    pub hold: usize,
    /// Antipodal chip amplitude on the channel.
    pub amplitude: f64,
    /// When true the receiver slices each chip to a hard bit before
    /// despreading, hiding sub-threshold noise. When false the scaled
    /// analog level runs through despreading and correlation, so even
    /// tiny perturbations leave non-integral correlator values.
    pub hard_slicing: bool,
    pub noise: Option<NoiseSpec>,
}

impl Default for DsssConfig {
    fn default() -> Self {
        DsssConfig {
            chip_scale: 1000.0,
            m_chips: 16,
            symbol_bits: 4,
            hold: 10_000,
            amplitude: 1.0,
            hard_slicing: false,
            noise: None,
        }
    }
}

/// Everything the link saw for one symbol interval.
#[derive(Debug, Clone)]
pub struct SymbolRecord {
    pub symbol: usize,
    pub tx: InfoSymbol,
    pub chips_tx: ChipWord,
    pub chips_rx: ChipWord,
    /// Spread chips as transmitted, before the channel.
    pub encoded: Vec<u8>,
    pub recovered: InfoSymbol,
    pub valid: bool,
}

fn run_symbol(
    sym: &InfoSymbol,
    symbol_index: usize,
    trace: &ChaoticTrace,
    cfg: &DsssConfig,
    noise_variance: f64,
    rng: &mut impl Rng,
) -> Result<SymbolRecord> {
    let at = symbol_index * cfg.hold;
    let chips_tx = ChipWord {
        symbol_index,
        ..gen_chips(cfg.chip_scale * trace.master_component(0)[at], cfg.m_chips)
    };
    let chips_rx = ChipWord {
        symbol_index,
        ..gen_chips(cfg.chip_scale * trace.slave_component(0)[at], cfg.m_chips)
    };
    let encoded = spread(sym, &chips_tx)?;

    // Antipodal transport: chip c goes out as amplitude*(2c - 1), one
    // channel sample per chip.
    let a = cfg.amplitude;
    let mut channel: Vec<f64> = encoded.iter().map(|&c| a * (2.0 * f64::from(c) - 1.0)).collect();
    add_awgn_in_place(&mut channel, noise_variance, rng);

    let despread_out: Vec<f64> = if cfg.hard_slicing {
        let sliced: Vec<u8> = channel.iter().map(|&v| u8::from(v > 0.0)).collect();
        despread(&sliced, &chips_rx)?.iter().map(|&b| f64::from(b)).collect()
    } else {
        // Analog path: map the level back to [0,1] and apply the XOR as
        // c=1 -> 1-a, c=0 -> a, preserving any channel perturbation.
        channel
            .iter()
            .zip(&chips_rx.bits)
            .map(|(&v, &c)| {
                let soft = (v / a + 1.0) / 2.0;
                if c == 1 {
                    1.0 - soft
                } else {
                    soft
                }
            })
            .collect()
    };
    let r = cfg.m_chips / sym.bits.len();
    let out = correlate(&despread_out, r)?;
    let (recovered, valid) = detect(&out, sym.rate);
    Ok(SymbolRecord {
        symbol: symbol_index,
        tx: sym.clone(),
        chips_tx,
        chips_rx,
        encoded,
        recovered,
        valid,
    })
}

/// Runs the dual-channel direct-sequence link over consecutive symbol
/// intervals of the trace, starting at interval 0.
///
/// Transmit chips come from the master sample at each interval start,
/// receive chips from the slave sample at the same index, so symbols sent
/// before synchronization settles decode with `valid == false`.
pub fn dsss_link(
    info: &[InfoSymbol],
    trace: &ChaoticTrace,
    cfg: &DsssConfig,
) -> Result<Vec<SymbolRecord>> {
    if info.len() * cfg.hold > trace.len() {
        return Err(Error::LengthMismatch(format!(
            "{} symbols need {} samples but the trace has {}",
            info.len(),
            info.len() * cfg.hold,
            trace.len()
        )));
    }
    let (variance, seed) = match &cfg.noise {
        Some(spec) => (spec.variance(cfg.amplitude * cfg.amplitude)?, spec.seed),
        None => (0.0, 0),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    info.iter()
        .enumerate()
        .map(|(s, sym)| run_symbol(sym, s, trace, cfg, variance, &mut rng))
        .collect()
}

/// Monte Carlo adapter: each trial sends fresh random symbols over the
/// post-sync region of a shared trace and counts bit errors after the
/// round-to-nearest detector.
pub struct DsssLinkSim<'a> {
    pub cfg: DsssConfig,
    pub trace: &'a ChaoticTrace,
    /// First symbol interval used; place it past the sync transient.
    pub start_symbol: usize,
    pub symbols_per_trial: usize,
}

impl LinkSim for DsssLinkSim<'_> {
    fn run_trial(&self, noise_variance: f64, seed: u64) -> Result<(u64, u64)> {
        let cfg = &self.cfg;
        let end = (self.start_symbol + self.symbols_per_trial) * cfg.hold;
        if end > self.trace.len() {
            return Err(Error::LengthMismatch(format!(
                "trial needs {end} samples but the trace has {}",
                self.trace.len()
            )));
        }
        let rate = 1.0 / (self.trace.dt * cfg.hold as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bits = 0u64;
        let mut errors = 0u64;
        for s in 0..self.symbols_per_trial {
            let tx = InfoSymbol {
                bits: (0..cfg.symbol_bits).map(|_| rng.random_range(0..=1u8)).collect(),
                rate,
            };
            let rec =
                run_symbol(&tx, self.start_symbol + s, self.trace, cfg, noise_variance, &mut rng)?;
            bits += cfg.symbol_bits as u64;
            errors += tx
                .bits
                .iter()
                .zip(&rec.recovered.bits)
                .filter(|(a, b)| a != b)
                .count() as u64;
        }
        Ok((bits, errors))
    }
}

fn bits_to_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| char::from(b'0' + b)).collect()
}

/// Writes one CSV row per symbol:
/// `symbol,tx_bits,chips_tx,chips_rx,encoded,recovered,valid`.
pub fn write_symbol_csv<W: std::io::Write>(
    records: &[SymbolRecord],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "symbol,tx_bits,chips_tx,chips_rx,encoded,recovered,valid")?;
    for rec in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            rec.symbol,
            bits_to_string(&rec.tx.bits),
            bits_to_string(&rec.chips_tx.bits),
            bits_to_string(&rec.chips_rx.bits),
            bits_to_string(&rec.encoded),
            bits_to_string(&rec.recovered.bits),
            rec.valid
        )?;
    }
    Ok(())
}
