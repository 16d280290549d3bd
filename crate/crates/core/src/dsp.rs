//! Sample-domain primitives shared by the synthesizer, the links and the
//! experiment harness: quantization, hold/delay operators, first-order
//! smoothing, hard thresholding and Welch spectra.

use crate::error::{Error, Result};
use crate::fir;
use rustfft::{num_complex::Complex64, FftPlanner};

/// A uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    /// Sample rate in Hz.
    pub fs: f64,
    pub data: Vec<f64>,
}

impl Signal {
    /// Wraps samples taken at `fs` Hz. Panics if `fs` is not positive and finite.
    pub fn new(fs: f64, data: Vec<f64>) -> Self {
        assert!(fs.is_finite() && fs > 0.0, "sample rate must be positive, got {fs}");
        Signal { fs, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.data.len() as f64 / self.fs
    }
}

/// A binary sequence with an associated symbol rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BitStream {
    /// Bits per second.
    pub rate: f64,
    pub bits: Vec<u8>,
}

impl BitStream {
    /// Wraps a bit sequence. Panics if any element is not 0 or 1.
    pub fn new(rate: f64, bits: Vec<u8>) -> Self {
        assert!(rate.is_finite() && rate > 0.0, "bit rate must be positive, got {rate}");
        assert!(bits.iter().all(|&b| b <= 1), "bit stream may only contain 0 and 1");
        BitStream { rate, bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Maps a real sample to an integer cell: `floor(mod(s_f * x, m))`.
///
/// The modulo is mathematical, so negative inputs land in `[0, m)` like any
/// other. The result is always in `0..m` even when rounding puts
/// `mod(s_f * x, m)` exactly on the upper boundary.
pub fn upscale_quantize(x: f64, s_f: f64, m: u32) -> u32 {
    assert!(s_f > 0.0, "scale factor must be positive, got {s_f}");
    assert!(m >= 2, "need at least two cells, got {m}");
    let y = (s_f * x).rem_euclid(m as f64);
    // rem_euclid may round up to exactly m for tiny negative products.
    (y.floor() as u32).min(m - 1)
}

/// Zero-order hold over non-overlapping blocks: every sample in a block of
/// `factor` samples is replaced by the block's first sample. Length is
/// preserved; a ragged final block holds its own first sample.
pub fn decimate_hold(s: &Signal, factor: usize) -> Signal {
    assert!(factor >= 1, "hold factor must be at least 1");
    let data = (0..s.data.len()).map(|i| s.data[i / factor * factor]).collect();
    Signal { fs: s.fs, data }
}

/// Right-shifts a signal by `n` samples, filling with zeros and keeping the
/// original length.
pub fn delay(s: &Signal, n: usize) -> Signal {
    let len = s.data.len();
    let n = n.min(len);
    let mut data = vec![0.0; len];
    data[n..].copy_from_slice(&s.data[..len - n]);
    Signal { fs: s.fs, data }
}

/// First-order exponential smoother `y[n] = lambda * y[n-1] + (1 - lambda) * x[n]`
/// seeded with `y[0] = x[0]`. `lambda` must lie strictly inside (0, 1).
pub fn exp_smooth(s: &Signal, lambda: f64) -> Result<Signal> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::DomainError(format!(
            "smoothing factor must be in (0, 1), got {lambda}"
        )));
    }
    let mut data = Vec::with_capacity(s.data.len());
    let mut prev = 0.0;
    for (n, &x) in s.data.iter().enumerate() {
        let y = if n == 0 { x } else { lambda * prev + (1.0 - lambda) * x };
        data.push(y);
        prev = y;
    }
    Ok(Signal { fs: s.fs, data })
}

/// Hard threshold: emits 1 where the sample exceeds `theta`, else 0. The bit
/// rate equals the sample rate.
pub fn threshold(s: &Signal, theta: f64) -> BitStream {
    let bits = s.data.iter().map(|&x| u8::from(x > theta)).collect();
    BitStream { rate: s.fs, bits }
}

/// Welch power spectral density with a Kaiser window.
///
/// Segments of `window_len` samples overlap by half. The window's shape
/// parameter is derived from the requested sidelobe attenuation in dB. The
/// estimate is one-sided and scaled so the sum of `power * delta_f` matches
/// the signal's mean square power. Returns `(freq_hz, power_db)` pairs, with
/// power floored at 1e-20 before conversion to dB.
pub fn psd(s: &Signal, window_len: usize, sidelobe_atten_db: f64) -> Result<Vec<(f64, f64)>> {
    if window_len < 8 {
        return Err(Error::DomainError(format!(
            "PSD window must be at least 8 samples, got {window_len}"
        )));
    }
    if s.data.len() < window_len {
        return Err(Error::DomainError(format!(
            "signal ({} samples) shorter than PSD window ({window_len})",
            s.data.len()
        )));
    }

    let beta = fir::kaiser_beta(sidelobe_atten_db);
    let window = fir::kaiser_window(window_len, beta);
    let win_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(window_len);
    let hop = window_len / 2;
    let n_bins = window_len / 2 + 1;
    let mut acc = vec![0.0f64; n_bins];
    let mut buf = vec![Complex64::default(); window_len];
    let mut n_segments = 0usize;

    let mut start = 0;
    while start + window_len <= s.data.len() {
        for (b, (&x, &w)) in buf.iter_mut().zip(s.data[start..].iter().zip(&window)) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        n_segments += 1;
        start += hop;
    }

    let scale = 1.0 / (s.fs * win_power * n_segments as f64);
    let out = acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            // One-sided: interior bins carry the mirrored half of the spectrum.
            let one_sided = if k == 0 || k == window_len / 2 { 1.0 } else { 2.0 };
            let p = (one_sided * scale * a).max(1e-20);
            let freq = k as f64 * s.fs / window_len as f64;
            (freq, 10.0 * p.log10())
        })
        .collect();
    Ok(out)
}

/// Writes a PSD estimate as `freq_hz,power_db` CSV rows.
pub fn write_psd_csv<W: std::io::Write>(psd: &[(f64, f64)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "freq_hz,power_db")?;
    for (freq, power) in psd {
        writeln!(w, "{freq},{power}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantize_wraps_positive_inputs() {
        // 1000 * 1.234 = 1234, and 1234 mod 101 = 22.
        assert_eq!(upscale_quantize(1.234, 1000.0, 101), 22);
    }

    #[test]
    fn quantize_wraps_negative_inputs() {
        // 10 * -0.5 = -5, and -5 mod 101 = 96.
        assert_eq!(upscale_quantize(-0.5, 10.0, 101), 96);
    }

    #[test]
    fn quantize_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1_000_000 {
            let x: f64 = rng.random_range(-1e4..1e4);
            let q = upscale_quantize(x, 1000.0, 101);
            assert!(q < 101, "quantizer left [0, 101) for x = {x}: {q}");
        }
        // Boundary-hostile inputs: tiny negatives whose scaled remainder
        // rounds to the modulus itself.
        for x in [-1e-300, -1e-18, -f64::MIN_POSITIVE, 0.0] {
            assert!(upscale_quantize(x, 1000.0, 101) < 101);
        }
    }

    #[test]
    fn hold_repeats_block_heads() {
        let s = Signal::new(1.0, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(decimate_hold(&s, 3).data, vec![1.0, 1.0, 1.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn hold_keeps_ragged_tail() {
        let s = Signal::new(1.0, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(decimate_hold(&s, 2).data, vec![1.0, 1.0, 3.0, 3.0, 5.0]);
    }

    #[test]
    fn delay_shifts_right_and_zero_fills() {
        let s = Signal::new(1.0, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(delay(&s, 2).data, vec![0.0, 0.0, 1.0, 2.0]);
        assert_eq!(delay(&s, 9).data, vec![0.0; 4]);
    }

    #[test]
    fn smoother_matches_recurrence() {
        let s = Signal::new(1.0, vec![1.0, 0.0, 0.0]);
        let y = exp_smooth(&s, 0.5).unwrap();
        assert_eq!(y.data, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn smoother_rejects_degenerate_factors() {
        let s = Signal::new(1.0, vec![1.0]);
        for lambda in [0.0, 1.0, -0.2, 1.7, f64::NAN] {
            assert!(matches!(exp_smooth(&s, lambda), Err(Error::DomainError(_))));
        }
    }

    #[test]
    fn smoother_output_is_a_convex_combination() {
        // Each output is a convex combination of the inputs seen so far, so it
        // can never leave the running min/max envelope.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..4000).map(|_| rng.random_range(-5.0..5.0)).collect();
        let s = Signal::new(1.0, data);
        for lambda in [0.05, 0.5, 0.93] {
            let y = exp_smooth(&s, lambda).unwrap();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (x, yv) in s.data.iter().zip(&y.data) {
                lo = lo.min(*x);
                hi = hi.max(*x);
                assert!(
                    *yv >= lo - 1e-12 && *yv <= hi + 1e-12,
                    "smoothed value {yv} escaped envelope [{lo}, {hi}]"
                );
            }
        }
    }

    #[test]
    fn threshold_is_strict() {
        let s = Signal::new(1.0, vec![0.4, 0.6, 0.5]);
        assert_eq!(threshold(&s, 0.5).bits, vec![0, 1, 0]);
    }

    #[test]
    fn threshold_commutes_with_delay_for_nonnegative_theta() {
        // Zero fill maps to bit 0 whenever theta >= 0, so the operators commute.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = Signal::new(1.0, data);
        for n in [0, 1, 17, 499] {
            for theta in [0.0, 0.25, 0.9] {
                let a = threshold(&delay(&s, n), theta).bits;
                let mut b = vec![0u8; n];
                b.extend_from_slice(&threshold(&s, theta).bits[..s.len() - n]);
                assert_eq!(a, b, "mismatch at n = {n}, theta = {theta}");
            }
        }
    }

    #[test]
    fn psd_rejects_short_windows() {
        let s = Signal::new(1.0, vec![0.0; 64]);
        assert!(matches!(psd(&s, 7, 60.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn psd_peaks_at_the_tone_frequency() {
        let fs = 1000.0;
        let f0 = 125.0;
        let data: Vec<f64> = (0..8192)
            .map(|n| (2.0 * std::f64::consts::PI * f0 * n as f64 / fs).sin())
            .collect();
        let s = Signal::new(fs, data);
        let spec = psd(&s, 1024, 90.0).unwrap();
        let peak = spec.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!((peak.0 - f0).abs() < fs / 1024.0 + 1e-9, "peak at {} Hz", peak.0);
    }

    #[test]
    fn psd_total_power_matches_mean_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..65536).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = Signal::new(2e6, data);
        let spec = psd(&s, 512, 60.0).unwrap();
        let df = s.fs / 512.0;
        let total: f64 = spec.iter().map(|(_, db)| 10f64.powf(db / 10.0) * df).sum();
        let ms: f64 = s.data.iter().map(|x| x * x).sum::<f64>() / s.len() as f64;
        assert!(
            (total - ms).abs() / ms < 0.05,
            "integrated PSD {total} vs mean square {ms}"
        );
    }
}
