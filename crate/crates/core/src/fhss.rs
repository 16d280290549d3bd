//! Chaos-keyed frequency-hopping link.
//!
//! The transmitter quantizes the master's first state component once per hop
//! interval into a channel index, looks the index up in a fixed frequency
//! table, and frequency-modulates the sum of the chaotic signal and the held
//! information bits onto that carrier. The receiver rebuilds the same hop
//! plan from its synchronized slave state, mixes the passband signal down by
//! the planned carrier, lowpass-filters, runs a quadrature discriminator, and
//! subtracts the delay-aligned slave chaos to leave the information signal.
//!
//! Transmit and mixer carriers step at the same samples, so once the pair is
//! synchronized the discriminator sees a continuous difference phase and hop
//! boundaries leave no artifact in the recovered message.

use crate::chaos::ChaoticTrace;
use crate::channel::{add_awgn_in_place, ber, LinkSim};
use crate::dsp::{self, BitStream, Signal};
use crate::error::{Error, Result};
use crate::fir;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

/// Stopband attenuation of the receiver's channel lowpass, dB.
const DEMOD_ATTEN_DB: f64 = 60.0;
/// Transition width of the channel lowpass as a fraction of the channel
/// bandwidth.
const DEMOD_TRANSITION_FRACTION: f64 = 0.4;

/// Fixed channel lookup table on a 100 kHz lattice.
///
/// Channel k occupies `base_edge + bandwidth * k` to `base_edge + bandwidth *
/// (k + 1)` MHz for k = 1..m-1. Edges are computed in integer tenths of MHz,
/// so every edge and center is an exact binary64 value and equal table
/// entries compare equal bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTable {
    /// Modulus: indices run 1..=m-1.
    pub m: u32,
    pub base_edge_mhz: f64,
    pub bandwidth_mhz: f64,
    base_tenths: i64,
    bw_tenths: i64,
}

impl ChannelTable {
    /// Standard 100-channel table: 58.6 + 1.4 k MHz edges, k = 1..100,
    /// tiling [60, 200] MHz.
    pub fn standard(fs: f64) -> Result<Self> {
        ChannelTable::new(101, 58.6, 1.4, fs)
    }

    /// Builds a table and checks every center sits below Nyquist for the
    /// given sample rate. Edges must lie on the 0.1 MHz lattice.
    pub fn new(m: u32, base_edge_mhz: f64, bandwidth_mhz: f64, fs: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::DomainError(format!("need m >= 2 channels, got {m}")));
        }
        let base_tenths = (base_edge_mhz * 10.0).round() as i64;
        let bw_tenths = (bandwidth_mhz * 10.0).round() as i64;
        if (base_edge_mhz * 10.0 - base_tenths as f64).abs() > 1e-9
            || (bandwidth_mhz * 10.0 - bw_tenths as f64).abs() > 1e-9
            || bw_tenths <= 0
        {
            return Err(Error::DomainError(
                "channel edges must lie on the 0.1 MHz lattice".into(),
            ));
        }
        let table = ChannelTable { m, base_edge_mhz, bandwidth_mhz, base_tenths, bw_tenths };
        let top = table.center_hz(m - 1)?;
        if top >= fs / 2.0 {
            return Err(Error::DomainError(format!(
                "top channel center {top} Hz is not below Nyquist {}",
                fs / 2.0
            )));
        }
        Ok(table)
    }

    fn check_index(&self, k: u32) -> Result<i64> {
        if k < 1 || k > self.m - 1 {
            return Err(Error::IndexOutOfRange { index: k, min: 1, max: self.m - 1 });
        }
        Ok(k as i64)
    }

    /// Lower channel edge in Hz, exact.
    pub fn lower_edge_hz(&self, k: u32) -> Result<f64> {
        let k = self.check_index(k)?;
        Ok((self.base_tenths + self.bw_tenths * k) as f64 * 1e5)
    }

    /// Upper channel edge in Hz, exact.
    pub fn upper_edge_hz(&self, k: u32) -> Result<f64> {
        let k = self.check_index(k)?;
        Ok((self.base_tenths + self.bw_tenths * (k + 1)) as f64 * 1e5)
    }

    /// Channel center frequency in Hz, exact.
    pub fn center_hz(&self, k: u32) -> Result<f64> {
        let k = self.check_index(k)?;
        Ok((2 * self.base_tenths + self.bw_tenths * (2 * k + 1)) as f64 * 0.5e5)
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bw_tenths as f64 * 1e5
    }

    /// All rows as (index, lower edge Hz, upper edge Hz, center Hz).
    pub fn entries(&self) -> Vec<(u32, f64, f64, f64)> {
        (1..self.m)
            .map(|k| {
                (
                    k,
                    self.lower_edge_hz(k).expect("k in range"),
                    self.upper_edge_hz(k).expect("k in range"),
                    self.center_hz(k).expect("k in range"),
                )
            })
            .collect()
    }
}

/// Carrier schedule of one link side: the per-hop channel indices and the
/// per-sample carrier frequency they expand to.
#[derive(Debug, Clone, PartialEq)]
pub struct HopPlan {
    /// Samples per hop.
    pub hold: usize,
    /// Channel index per hop.
    pub indices: Vec<u32>,
    /// Carrier frequency per sample; piecewise constant with run length
    /// `hold` (final run may be shorter).
    pub freqs_hz: Vec<f64>,
    /// Channel bandwidth of the table the plan was built from, Hz.
    pub channel_bw_hz: f64,
}

/// Maps one chaotic sample to a channel index in [1, m-1].
pub fn channel_index(x: f64, s_f: f64, m: u32) -> u32 {
    1 + dsp::upscale_quantize(x, s_f, m - 1)
}

/// Builds the hop plan for one side: hold the chaotic signal per hop, map the
/// held sample to a channel index, and expand to a per-sample carrier.
pub fn synthesize(chaotic: &Signal, table: &ChannelTable, s_f: f64, hold: usize) -> HopPlan {
    assert!(hold >= 1, "hop hold must be at least 1");
    let n = chaotic.len();
    let n_hops = n.div_ceil(hold);
    let mut indices = Vec::with_capacity(n_hops);
    let mut freqs_hz = Vec::with_capacity(n);
    for h in 0..n_hops {
        let k = channel_index(chaotic.data[h * hold], s_f, table.m);
        let f = table.center_hz(k).expect("index mapping stays inside the table");
        indices.push(k);
        let end = ((h + 1) * hold).min(n);
        freqs_hz.extend(std::iter::repeat_n(f, end - h * hold));
    }
    HopPlan { hold, indices, freqs_hz, channel_bw_hz: table.bandwidth_hz() }
}

/// Phase-continuous FM: `s[n] = A cos(phi[n])` with
/// `phi[n] = phi[n-1] + 2 pi (fc[n] + kf msg[n]) dt`.
///
/// Errors if the peak deviation `kf * max|msg|` exceeds half the channel
/// bandwidth, which would spill energy into the neighboring channel.
pub fn fm_modulate(msg: &Signal, plan: &HopPlan, kf: f64, amplitude: f64) -> Result<Signal> {
    if msg.len() != plan.freqs_hz.len() {
        return Err(Error::LengthMismatch(format!(
            "message has {} samples, plan covers {}",
            msg.len(),
            plan.freqs_hz.len()
        )));
    }
    let peak = msg.data.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let limit = plan.channel_bw_hz / 2.0;
    if kf * peak > limit {
        return Err(Error::DeviationExceedsChannel { deviation_hz: kf * peak, limit_hz: limit });
    }
    let dt = 1.0 / msg.fs;
    let tau = std::f64::consts::TAU;
    let mut phi = 0.0f64;
    let data = msg
        .data
        .iter()
        .zip(&plan.freqs_hz)
        .map(|(&m, &fc)| {
            phi = (phi + tau * (fc + kf * m) * dt).rem_euclid(tau);
            amplitude * phi.cos()
        })
        .collect();
    Ok(Signal { fs: msg.fs, data })
}

/// Quadrature discriminator: mix down by the plan's carrier, lowpass to the
/// channel half-bandwidth, and differentiate the baseband phase. The lowpass
/// group delay is compensated internally, so the output is sample-aligned
/// with the input up to the controller's own latency.
pub fn fm_demodulate(rx: &Signal, plan: &HopPlan, kf: f64) -> Signal {
    assert_eq!(rx.len(), plan.freqs_hz.len(), "plan must cover the received signal");
    let dt = 1.0 / rx.fs;
    let tau = std::f64::consts::TAU;

    let mut theta = 0.0f64;
    let baseband: Vec<Complex64> = rx
        .data
        .iter()
        .zip(&plan.freqs_hz)
        .map(|(&s, &fc)| {
            theta = (theta + tau * fc * dt).rem_euclid(tau);
            let (sin, cos) = theta.sin_cos();
            Complex64::new(s * cos, -s * sin)
        })
        .collect();

    let bw = plan.channel_bw_hz;
    let taps = fir::kaiser_lowpass(rx.fs, bw / 2.0, DEMOD_TRANSITION_FRACTION * bw, DEMOD_ATTEN_DB);
    let filtered = fir::convolve_same_complex(&baseband, &taps);

    let gain = 1.0 / (tau * kf * dt);
    let mut data = Vec::with_capacity(rx.len());
    data.push(0.0);
    for n in 1..filtered.len() {
        data.push((filtered[n] * filtered[n - 1].conj()).arg() * gain);
    }
    Signal { fs: rx.fs, data }
}

/// Lag of `recovered` behind `reference`, by cross-correlation argmax over
/// lags 0..=max_lag. Cost is O(len * max_lag); pass windows, not whole runs.
pub fn estimate_alignment_delay(reference: &Signal, recovered: &Signal, max_lag: usize) -> usize {
    let n = reference.len().min(recovered.len());
    let mut best = (f64::NEG_INFINITY, 0usize);
    for d in 0..=max_lag.min(n.saturating_sub(1)) {
        let mut c = 0.0;
        for i in d..n {
            c += recovered.data[i] * reference.data[i - d];
        }
        if c > best.0 {
            best = (c, d);
        }
    }
    best.1
}

/// Parameters of one frequency-hopping link.
#[derive(Debug, Clone, PartialEq)]
pub struct FhssConfig {
    pub table: ChannelTable,
    /// Quantizer scale factor for channel selection.
    pub s_f: f64,
    /// Samples per hop and per information bit.
    pub hold: usize,
    /// FM sensitivity, Hz per message unit.
    pub kf_hz: f64,
    pub carrier_amplitude: f64,
    /// Amplitude of the held information bits added to the chaotic message.
    pub bit_amplitude: f64,
    /// Hop intervals before the first information bit; must cover sync
    /// latency plus the receive filter transient.
    pub warmup_hops: usize,
    /// Largest tolerated sync error at the first information bit.
    pub sync_tol: f64,
    /// Cross-correlation search range for the alignment delay, samples.
    pub align_max_lag: usize,
}

impl Default for FhssConfig {
    fn default() -> Self {
        FhssConfig {
            table: ChannelTable::standard(450e6).expect("standard table fits below Nyquist"),
            s_f: 1000.0,
            hold: 10_000,
            kf_hz: 8e3,
            carrier_amplitude: 1.0,
            bit_amplitude: 1.0,
            warmup_hops: 3,
            sync_tol: 1e-2,
            align_max_lag: 256,
        }
    }
}

/// Information bits a trace of `n_samples` can carry: one bit per hop, minus
/// the warmup and one tail guard hop for the receive filter transient.
pub fn info_capacity(n_samples: usize, cfg: &FhssConfig) -> usize {
    (n_samples / cfg.hold).saturating_sub(cfg.warmup_hops + 1)
}

/// The transmitted message: the master's first chaotic component plus the
/// held information bits, starting after the warmup.
pub fn build_message(info: &BitStream, trace: &ChaoticTrace, cfg: &FhssConfig) -> Result<Signal> {
    let n = trace.len();
    let capacity = info_capacity(n, cfg);
    if info.len() > capacity {
        return Err(Error::LengthMismatch(format!(
            "{} info bits exceed the trace capacity of {capacity}",
            info.len()
        )));
    }
    let fs = 1.0 / trace.dt;
    let mut data = trace.master_component(0).to_vec();
    for (i, &bit) in info.bits.iter().enumerate() {
        if bit == 1 {
            let start = (cfg.warmup_hops + i) * cfg.hold;
            for s in &mut data[start..start + cfg.hold] {
                *s += cfg.bit_amplitude;
            }
        }
    }
    Ok(Signal { fs, data })
}

/// Modulates an information stream onto the hopping channel. Returns the
/// passband signal and the master-side hop plan.
pub fn fhss_transmit(
    info: &BitStream,
    trace: &ChaoticTrace,
    cfg: &FhssConfig,
) -> Result<(Signal, HopPlan)> {
    let fs = 1.0 / trace.dt;
    let msg = build_message(info, trace, cfg)?;
    let chaotic = Signal { fs, data: trace.master_component(0).to_vec() };
    let plan = synthesize(&chaotic, &cfg.table, cfg.s_f, cfg.hold);
    let tx = fm_modulate(&msg, &plan, cfg.kf_hz, cfg.carrier_amplitude)?;
    Ok((tx, plan))
}

/// Everything the receiver recovers from the hopping channel.
#[derive(Debug, Clone)]
pub struct FhssReceived {
    pub bits: BitStream,
    /// Measured lag of the demodulated signal behind the slave chaos.
    pub alignment_delay: usize,
    /// Receiver-side hop plan.
    pub plan: HopPlan,
    /// Demodulated message, shifted onto the transmit timeline.
    pub demodulated: Signal,
    /// Demodulated message minus the aligned slave chaos.
    pub residual: Signal,
}

/// Full receive pipeline with intermediate signals exposed.
///
/// Demodulates with the slave-derived plan, measures the residual alignment
/// delay over the warmup tail, subtracts the slave chaos, thresholds at half
/// the bit amplitude and majority-votes each bit over the trailing half of
/// its interval (the leading half absorbs the channel filter's settling).
pub fn fhss_receive_detail(
    hopping_channel: &Signal,
    trace: &ChaoticTrace,
    cfg: &FhssConfig,
) -> Result<FhssReceived> {
    let n = trace.len();
    if hopping_channel.len() != n {
        return Err(Error::LengthMismatch(format!(
            "channel signal has {} samples, trace has {n}",
            hopping_channel.len()
        )));
    }
    let fs = 1.0 / trace.dt;
    let w0 = cfg.warmup_hops * cfg.hold;
    let sync_err = trace.sync_error()[w0.min(n - 1)];
    if sync_err > cfg.sync_tol {
        return Err(Error::SyncNotReached { error: sync_err, tol: cfg.sync_tol });
    }

    let slave = Signal { fs, data: trace.slave_component(0).to_vec() };
    let plan = synthesize(&slave, &cfg.table, cfg.s_f, cfg.hold);
    let demod = fm_demodulate(hopping_channel, &plan, cfg.kf_hz);

    // Measure alignment on a late-warmup window, clear of the filter
    // transient and of any information bits.
    let lo = if w0 > 3 * cfg.hold { w0 - 2 * cfg.hold } else { 0 };
    let delay = estimate_alignment_delay(
        &Signal { fs, data: slave.data[lo..w0.max(lo + 1)].to_vec() },
        &Signal { fs, data: demod.data[lo..w0.max(lo + 1)].to_vec() },
        cfg.align_max_lag,
    );

    // Shift the demodulated signal onto the transmit timeline, then strip the
    // chaotic component.
    let mut aligned = vec![0.0; n];
    aligned[..n - delay].copy_from_slice(&demod.data[delay..]);
    let mut residual = aligned.clone();
    for (r, c) in residual.iter_mut().zip(&slave.data) {
        *r -= c;
    }
    let residual = Signal { fs, data: residual };
    let demodulated = Signal { fs, data: aligned };

    let hard = dsp::threshold(&residual, cfg.bit_amplitude / 2.0);
    let n_bits = info_capacity(n, cfg);
    let mut bits = Vec::with_capacity(n_bits);
    for i in 0..n_bits {
        let start = (cfg.warmup_hops + i) * cfg.hold + cfg.hold / 2;
        let end = (cfg.warmup_hops + i + 1) * cfg.hold;
        let ones: usize = hard.bits[start..end].iter().map(|&b| b as usize).sum();
        bits.push(u8::from(2 * ones > end - start));
    }
    Ok(FhssReceived {
        bits: BitStream { rate: fs / cfg.hold as f64, bits },
        alignment_delay: delay,
        plan,
        demodulated,
        residual,
    })
}

/// Recovers the information bits from the hopping channel.
pub fn fhss_receive(
    hopping_channel: &Signal,
    trace: &ChaoticTrace,
    cfg: &FhssConfig,
) -> Result<BitStream> {
    Ok(fhss_receive_detail(hopping_channel, trace, cfg)?.bits)
}

/// Single-sample bit readout from a residual-domain signal: one threshold
/// decision at three quarters of each bit interval.
///
/// Used for detector comparisons (raw thresholding against smoothing +
/// thresholding). The readout point keeps half a filter length away from
/// both bit edges, so it measures the detector, not the channel filter's
/// settling.
pub fn readout_bits(residual: &Signal, cfg: &FhssConfig, n_bits: usize) -> BitStream {
    let theta = cfg.bit_amplitude / 2.0;
    let bits = (0..n_bits)
        .map(|i| {
            let at = (cfg.warmup_hops + i) * cfg.hold + 3 * cfg.hold / 4;
            u8::from(residual.data[at] > theta)
        })
        .collect();
    BitStream { rate: residual.fs / cfg.hold as f64, bits }
}

/// Monte Carlo adapter: each trial pushes fresh random bits through the
/// full modulate/demodulate chain over a shared chaotic trace, with noise
/// injected at the stated per-sample variance.
pub struct FhssLinkSim<'a> {
    pub cfg: FhssConfig,
    pub trace: &'a ChaoticTrace,
    pub bits_per_trial: usize,
}

impl LinkSim for FhssLinkSim<'_> {
    fn run_trial(&self, noise_variance: f64, seed: u64) -> Result<(u64, u64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rate = 1.0 / (self.trace.dt * self.cfg.hold as f64);
        let info = BitStream {
            rate,
            bits: (0..self.bits_per_trial).map(|_| rng.random_range(0..=1u8)).collect(),
        };
        let (mut rx, _plan) = fhss_transmit(&info, self.trace, &self.cfg)?;
        add_awgn_in_place(&mut rx.data, noise_variance, &mut rng);
        let recovered = fhss_receive(&rx, self.trace, &self.cfg)?;
        let trimmed = BitStream {
            rate,
            bits: recovered.bits[..self.bits_per_trial].to_vec(),
        };
        let (errors, _) = ber(&info, &trimmed);
        Ok((self.bits_per_trial as u64, errors))
    }
}

/// Writes a hop plan as `hop,index,center_hz` CSV rows.
pub fn write_plan_csv<W: std::io::Write>(plan: &HopPlan, mut w: W) -> std::io::Result<()> {
    writeln!(w, "hop,index,center_hz")?;
    for (h, &k) in plan.indices.iter().enumerate() {
        writeln!(w, "{h},{k},{}", plan.freqs_hz[h * plan.hold])?;
    }
    Ok(())
}

/// Writes transmit/recovered message pairs as `sample,tx_msg,rx_msg,err` CSV
/// rows, one per sample, optionally keeping only every `stride`-th sample.
pub fn write_link_trace_csv<W: std::io::Write>(
    tx_msg: &Signal,
    rx_msg: &Signal,
    stride: usize,
    mut w: W,
) -> std::io::Result<()> {
    assert!(stride >= 1);
    writeln!(w, "sample,tx_msg,rx_msg,err")?;
    let n = tx_msg.len().min(rx_msg.len());
    for i in (0..n).step_by(stride) {
        let (t, r) = (tx_msg.data[i], rx_msg.data[i]);
        writeln!(w, "{i},{t},{r},{}", t - r)?;
    }
    Ok(())
}
