//! Kaiser-window FIR design and FFT convolution.
//!
//! The demodulator needs a sharp complex-baseband lowpass and the spectrum
//! estimator needs the window itself, so both live here. Windows follow the
//! usual empirical Kaiser design rules; convolution runs overlap-save.

use rustfft::{num_complex::Complex64, FftPlanner};

/// Zeroth-order modified Bessel function of the first kind, by power series.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= (half / k) * (half / k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Kaiser shape parameter for a target sidelobe attenuation in dB.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Symmetric Kaiser window of length `len`.
pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    assert!(len >= 1, "window must have at least one sample");
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).sqrt()) / denom
        })
        .collect()
}

/// Windowed-sinc lowpass taps with `cutoff_hz` passband edge, `transition_hz`
/// transition width and at least `atten_db` stopband attenuation. The length
/// comes from the Kaiser length estimate, forced odd so the group delay is an
/// integer number of samples.
pub fn kaiser_lowpass(fs: f64, cutoff_hz: f64, transition_hz: f64, atten_db: f64) -> Vec<f64> {
    assert!(cutoff_hz > 0.0 && cutoff_hz + transition_hz < fs / 2.0, "band edges must fit below Nyquist");
    let delta_w = 2.0 * std::f64::consts::PI * transition_hz / fs;
    let mut len = (((atten_db - 8.0) / (2.285 * delta_w)).ceil() as usize).max(3) + 1;
    if len % 2 == 0 {
        len += 1;
    }
    let beta = kaiser_beta(atten_db);
    let window = kaiser_window(len, beta);
    // Cut in the middle of the transition band.
    let wc = 2.0 * std::f64::consts::PI * (cutoff_hz + transition_hz / 2.0) / fs;
    let mid = (len / 2) as isize;
    (0..len as isize)
        .map(|n| {
            let k = (n - mid) as f64;
            let sinc = if n == mid { wc / std::f64::consts::PI } else { (wc * k).sin() / (std::f64::consts::PI * k) };
            sinc * window[n as usize]
        })
        .collect()
}

/// Overlap-save FIR filtering of a complex signal with real taps.
///
/// Returns the "same"-size result: the full convolution is computed and then
/// shifted left by the filter's group delay `(len - 1) / 2`, so a symmetric
/// filter introduces no net delay. The tail beyond the input is dropped.
pub fn convolve_same_complex(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let l = taps.len();
    assert!(l >= 1 && l % 2 == 1, "taps must have odd length for integer group delay");
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len();
    let delay = (l - 1) / 2;

    let fft_len = (4 * l.max(64)).next_power_of_two();
    let valid = fft_len - (l - 1);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_len);
    let ifft = planner.plan_fft_inverse(fft_len);

    let mut h = vec![Complex64::default(); fft_len];
    for (hh, &t) in h.iter_mut().zip(taps) {
        *hh = Complex64::new(t, 0.0);
    }
    fft.process(&mut h);

    // Full linear convolution has n + l - 1 samples; we keep the window that
    // starts at the group delay.
    let full_len = n + l - 1;
    let mut out = vec![Complex64::default(); n];
    let mut block = vec![Complex64::default(); fft_len];
    let scale = 1.0 / fft_len as f64;

    let mut produced = 0usize;
    while produced < full_len {
        // Overlap-save: each block sees l - 1 samples of history.
        let hist_start = produced as isize - (l as isize - 1);
        for (j, b) in block.iter_mut().enumerate() {
            let src = hist_start + j as isize;
            *b = if src >= 0 && (src as usize) < n { x[src as usize] } else { Complex64::default() };
        }
        fft.process(&mut block);
        for (b, hh) in block.iter_mut().zip(&h) {
            *b *= hh;
        }
        ifft.process(&mut block);

        let take = valid.min(full_len - produced);
        for j in 0..take {
            let k = produced + j;
            if k >= delay && k - delay < n {
                out[k - delay] = block[l - 1 + j] * scale;
            }
        }
        produced += take;
    }
    out
}
