//! AWGN channel, BER accounting and seeded Monte Carlo sweeps.
//!
//! Noise strength is specified either as Eb/N0 in dB against a declared
//! per-bit energy, or as an absolute power in dBm across a 1-ohm reference,
//! or both (the larger implied variance wins; worst case on purpose). Power
//! accounting uses a 1-sample-per-symbol convention throughout: a signal's
//! power is its mean square sample value, and the per-bit energy reference is
//! the squared bit amplitude.
//!
//! Monte Carlo trials draw their seeds from a splitmix64 chain over
//! (master seed, grid cell, trial), so any execution order, thread count or
//! scheduling produces the identical report.

use crate::dsp::{BitStream, Signal};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// The Eb/N0 bookkeeping convention, recorded in experiment metadata.
pub const EB_CONVENTION: &str =
    "Eb = bit_amplitude^2 per bit (information component, 1-ohm, 1-sample-per-symbol); \
     sample noise variance = N0/2; when snr_db and noise_power_dbm are both set the larger \
     implied variance applies";

/// AWGN strength: Eb/N0 in dB, absolute power in dBm, or both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Eb/N0 in dB; `f64::INFINITY` is the documented zero-noise sentinel.
    pub snr_db: Option<f64>,
    /// Noise power in dBm across 1 ohm.
    pub noise_power_dbm: Option<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn from_snr_db(snr_db: f64, seed: u64) -> Self {
        NoiseSpec { snr_db: Some(snr_db), noise_power_dbm: None, seed }
    }

    pub fn from_dbm(noise_power_dbm: f64, seed: u64) -> Self {
        NoiseSpec { snr_db: None, noise_power_dbm: Some(noise_power_dbm), seed }
    }

    /// Per-sample noise variance implied by the spec. When both fields are
    /// set the larger variance applies.
    pub fn variance(&self, bit_energy_ref: f64) -> Result<f64> {
        let from_snr = match self.snr_db {
            Some(snr) if snr.is_nan() => {
                return Err(Error::DomainError("snr_db is NaN".into()));
            }
            Some(snr) => {
                if !(bit_energy_ref > 0.0) {
                    return Err(Error::DomainError(format!(
                        "Eb/N0 needs a positive bit energy reference, got {bit_energy_ref}"
                    )));
                }
                // N0 = Eb / 10^(snr/10), half per real sample.
                Some(bit_energy_ref / 10f64.powf(snr / 10.0) / 2.0)
            }
            None => None,
        };
        let from_dbm = match self.noise_power_dbm {
            Some(dbm) if dbm.is_nan() => {
                return Err(Error::DomainError("noise_power_dbm is NaN".into()));
            }
            Some(dbm) => Some(10f64.powf((dbm - 30.0) / 10.0)),
            None => None,
        };
        match (from_snr, from_dbm) {
            (Some(a), Some(b)) => Ok(a.max(b)),
            (Some(a), None) => Ok(a),
            (None, Some(b)) => Ok(b),
            (None, None) => Err(Error::SpecIncomplete(
                "noise spec sets neither snr_db nor noise_power_dbm".into(),
            )),
        }
    }
}

/// Adds zero-mean Gaussian samples of the given variance in place.
pub fn add_awgn_in_place(data: &mut [f64], variance: f64, rng: &mut impl rand::Rng) {
    if variance == 0.0 {
        return;
    }
    let dist = Normal::new(0.0, variance.sqrt()).expect("finite standard deviation");
    for x in data {
        *x += dist.sample(rng);
    }
}

/// Applies AWGN to a signal. Zero derived variance returns the input
/// unchanged; otherwise the noise stream is drawn from a ChaCha8 generator
/// seeded by the spec, so equal seeds reproduce equal outputs.
pub fn awgn(s: &Signal, spec: &NoiseSpec, bit_energy_ref: f64) -> Result<Signal> {
    let variance = spec.variance(bit_energy_ref)?;
    let mut out = s.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    add_awgn_in_place(&mut out.data, variance, &mut rng);
    Ok(out)
}

/// Bit errors between two streams, trimmed to the shorter length.
/// Returns (error count, error rate).
pub fn ber(tx: &BitStream, rx: &BitStream) -> (u64, f64) {
    let n = tx.len().min(rx.len());
    if n == 0 {
        return (0, 0.0);
    }
    let errors = tx.bits[..n]
        .iter()
        .zip(&rx.bits[..n])
        .filter(|(a, b)| a != b)
        .count() as u64;
    (errors, errors as f64 / n as f64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Stable per-trial seed: a splitmix64 chain over master seed, grid cell and
/// trial index. Part of the reproducibility contract.
pub fn trial_seed(master_seed: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ cell) ^ trial)
}

/// One end-to-end link simulation, repeatable from (variance, seed) alone.
/// Implementations return (bits compared, bit errors).
pub trait LinkSim: Sync {
    fn run_trial(&self, noise_variance: f64, seed: u64) -> Result<(u64, u64)>;
}

/// One grid cell of a BER sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BerCell {
    pub snr_db: Option<f64>,
    pub noise_dbm: Option<f64>,
    pub trials: u32,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    /// Normal-approximation 95% half-width.
    pub ci95: f64,
    /// False when fewer than 10 errors were seen; the interval is then
    /// indicative only.
    pub ci95_reliable: bool,
}

/// BER sweep result over a noise grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BerReport {
    pub grid: Vec<BerCell>,
    pub seed: u64,
}

fn make_cell(spec: &NoiseSpec, trials: u32, bits: u64, errors: u64) -> BerCell {
    let ber = if bits == 0 { 0.0 } else { errors as f64 / bits as f64 };
    let ci95 = if bits == 0 { 0.0 } else { 1.96 * (ber * (1.0 - ber) / bits as f64).sqrt() };
    BerCell {
        snr_db: spec.snr_db,
        noise_dbm: spec.noise_power_dbm,
        trials,
        bits,
        errors,
        ber,
        ci95,
        ci95_reliable: errors >= 10,
    }
}

fn aggregate(results: Vec<(u64, u64)>) -> (u64, u64) {
    results
        .into_iter()
        .fold((0, 0), |(b, e), (tb, te)| (b + tb, e + te))
}

/// Runs `trials` independent link simulations per grid cell, in parallel,
/// and aggregates bit errors. The per-trial seeds depend only on
/// (master_seed, cell index, trial index), and the integer aggregation is
/// order-free, so the report is identical for any thread count and matches
/// [`monte_carlo_seq`] bit for bit.
#[cfg(feature = "parallel")]
pub fn monte_carlo<L: LinkSim>(
    link: &L,
    grid: &[NoiseSpec],
    trials: u32,
    master_seed: u64,
    bit_energy_ref: f64,
) -> Result<BerReport> {
    let mut cells = Vec::with_capacity(grid.len());
    for (ci, spec) in grid.iter().enumerate() {
        let variance = spec.variance(bit_energy_ref)?;
        let results = (0..trials)
            .into_par_iter()
            .map(|t| link.run_trial(variance, trial_seed(master_seed, ci as u64, t as u64)))
            .collect::<Result<Vec<_>>>()?;
        let (bits, errors) = aggregate(results);
        cells.push(make_cell(spec, trials, bits, errors));
    }
    Ok(BerReport { grid: cells, seed: master_seed })
}

/// Sequential fallback with the identical contract and output.
pub fn monte_carlo_seq<L: LinkSim>(
    link: &L,
    grid: &[NoiseSpec],
    trials: u32,
    master_seed: u64,
    bit_energy_ref: f64,
) -> Result<BerReport> {
    let mut cells = Vec::with_capacity(grid.len());
    for (ci, spec) in grid.iter().enumerate() {
        let variance = spec.variance(bit_energy_ref)?;
        let results = (0..trials)
            .map(|t| link.run_trial(variance, trial_seed(master_seed, ci as u64, t as u64)))
            .collect::<Result<Vec<_>>>()?;
        let (bits, errors) = aggregate(results);
        cells.push(make_cell(spec, trials, bits, errors));
    }
    Ok(BerReport { grid: cells, seed: master_seed })
}

/// Without the `parallel` feature, [`monte_carlo`] is the sequential path.
#[cfg(not(feature = "parallel"))]
pub fn monte_carlo<L: LinkSim>(
    link: &L,
    grid: &[NoiseSpec],
    trials: u32,
    master_seed: u64,
    bit_energy_ref: f64,
) -> Result<BerReport> {
    monte_carlo_seq(link, grid, trials, master_seed, bit_energy_ref)
}

/// Writes a report as `snr_db,noise_dbm,trials,bits,errors,ber,ci95` CSV
/// rows; unset noise fields stay empty.
pub fn write_ber_csv<W: std::io::Write>(report: &BerReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "snr_db,noise_dbm,trials,bits,errors,ber,ci95")?;
    for c in &report.grid {
        let snr = c.snr_db.map(|v| v.to_string()).unwrap_or_default();
        let dbm = c.noise_dbm.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{snr},{dbm},{},{},{},{},{}",
            c.trials, c.bits, c.errors, c.ber, c.ci95
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_maps_to_watts_variance() {
        let spec = NoiseSpec::from_dbm(-30.0, 1);
        assert_eq!(spec.variance(1.0).unwrap(), 1e-6);
        let spec = NoiseSpec::from_dbm(0.0, 1);
        assert!((spec.variance(1.0).unwrap() - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn snr_maps_through_the_bit_energy() {
        // Eb = 1, 50 dB: N0 = 1e-5, variance = 5e-6.
        let spec = NoiseSpec::from_snr_db(50.0, 1);
        assert!((spec.variance(1.0).unwrap() - 5e-6).abs() < 1e-20);
        // Infinite SNR is the zero-noise sentinel.
        let spec = NoiseSpec::from_snr_db(f64::INFINITY, 1);
        assert_eq!(spec.variance(1.0).unwrap(), 0.0);
    }

    #[test]
    fn both_fields_take_the_worse_variance() {
        let spec = NoiseSpec { snr_db: Some(50.0), noise_power_dbm: Some(-30.0), seed: 1 };
        // 5e-6 from SNR beats 1e-6 from dBm.
        assert!((spec.variance(1.0).unwrap() - 5e-6).abs() < 1e-20);
        let spec = NoiseSpec { snr_db: Some(50.0), noise_power_dbm: Some(10.0), seed: 1 };
        // 1e-2 from dBm beats 5e-6 from SNR.
        assert!((spec.variance(1.0).unwrap() - 1e-2).abs() < 1e-16);
    }

    #[test]
    fn empty_spec_is_rejected() {
        let spec = NoiseSpec { snr_db: None, noise_power_dbm: None, seed: 1 };
        assert!(matches!(spec.variance(1.0), Err(Error::SpecIncomplete(_))));
    }

    #[test]
    fn zero_variance_is_the_identity() {
        let s = Signal::new(1e6, vec![1.0, -2.0, 3.5]);
        let out = awgn(&s, &NoiseSpec::from_snr_db(f64::INFINITY, 9), 1.0).unwrap();
        assert_eq!(out.data, s.data);
    }

    #[test]
    fn measured_noise_variance_matches_the_dbm_formula() {
        let s = Signal::new(1e6, vec![0.0; 1_000_000]);
        let out = awgn(&s, &NoiseSpec::from_dbm(-30.0, 7), 1.0).unwrap();
        let var = out.data.iter().map(|x| x * x).sum::<f64>() / out.len() as f64;
        assert!(
            (var - 1e-6).abs() / 1e-6 < 0.02,
            "sample variance {var:e} vs 1e-6"
        );
    }

    #[test]
    fn measured_ebn0_stays_within_a_fifth_of_a_db() {
        let eb = 4.0;
        let s = Signal::new(1e6, vec![0.0; 1_000_000]);
        let out = awgn(&s, &NoiseSpec::from_snr_db(50.0, 3), eb).unwrap();
        let var = out.data.iter().map(|x| x * x).sum::<f64>() / out.len() as f64;
        let measured = 10.0 * (eb / (2.0 * var)).log10();
        assert!((measured - 50.0).abs() < 0.2, "measured Eb/N0 {measured} dB");
    }

    #[test]
    fn awgn_reproduces_for_equal_seeds() {
        let s = Signal::new(1e6, vec![0.5; 4096]);
        let a = awgn(&s, &NoiseSpec::from_dbm(0.0, 11), 1.0).unwrap();
        let b = awgn(&s, &NoiseSpec::from_dbm(0.0, 11), 1.0).unwrap();
        let c = awgn(&s, &NoiseSpec::from_dbm(0.0, 12), 1.0).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn ber_counts_hamming_distance() {
        let a = BitStream::new(1.0, vec![1, 0, 1, 1]);
        assert_eq!(ber(&a, &a), (0, 0.0));
        let flipped = BitStream::new(1.0, vec![0, 1, 0, 0]);
        assert_eq!(ber(&a, &flipped), (4, 1.0));

        let mut bits = vec![0u8; 1000];
        bits[123] = 1;
        let rx = BitStream::new(1.0, bits);
        let tx = BitStream::new(1.0, vec![0u8; 1000]);
        assert_eq!(ber(&tx, &rx), (1, 0.001));
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let a = trial_seed(1, 0, 0);
        assert_eq!(a, trial_seed(1, 0, 0));
        let others = [trial_seed(1, 0, 1), trial_seed(1, 1, 0), trial_seed(2, 0, 0)];
        assert!(others.iter().all(|&o| o != a));
        assert_eq!(others.iter().collect::<std::collections::HashSet<_>>().len(), 3);
    }

    /// Deterministic toy link: error pattern is a pure function of the seed.
    struct ToyLink;

    impl LinkSim for ToyLink {
        fn run_trial(&self, variance: f64, seed: u64) -> Result<(u64, u64)> {
            let noisy = variance > 0.0;
            Ok((64, if noisy { seed % 5 } else { 0 }))
        }
    }

    #[test]
    fn sequential_and_parallel_sweeps_agree_exactly() {
        let grid = [
            NoiseSpec::from_snr_db(f64::INFINITY, 0),
            NoiseSpec::from_snr_db(10.0, 0),
            NoiseSpec::from_dbm(-3.0, 0),
        ];
        let seq = monte_carlo_seq(&ToyLink, &grid, 40, 99, 1.0).unwrap();
        assert_eq!(seq.grid[0].errors, 0, "noiseless cell sees no errors");
        assert!(seq.grid[1].errors > 0);

        let par = monte_carlo(&ToyLink, &grid, 40, 99, 1.0).unwrap();
        assert_eq!(seq, par);

        #[cfg(feature = "parallel")]
        for threads in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let alt = pool.install(|| monte_carlo(&ToyLink, &grid, 40, 99, 1.0)).unwrap();
            assert_eq!(seq, alt, "report changed under {threads} threads");
        }
    }

    #[test]
    fn ber_csv_leaves_unset_fields_empty() {
        let report = monte_carlo_seq(
            &ToyLink,
            &[NoiseSpec::from_dbm(-3.0, 0), NoiseSpec::from_snr_db(10.0, 0)],
            3,
            1,
            1.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_ber_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "snr_db,noise_dbm,trials,bits,errors,ber,ci95");
        assert!(lines[1].starts_with(",-3,3,192,"), "row: {}", lines[1]);
        assert!(lines[2].starts_with("10,,3,192,"), "row: {}", lines[2]);
    }
}
