//! Experiment recipes: each name wires the library modules into one
//! reproducible run that drops CSV artifacts plus a `run.meta` file.
//!
//! `run.meta` doubles as a config file: measurements ride in `#` comments
//! above the resolved key=value block, so feeding the meta file back through
//! `--config` reproduces the run without the original command line.

use crate::config::{Experiment, ExperimentConfig};
use chaoscomm_core::channel::{
    awgn, ber, monte_carlo, write_ber_csv, BerReport, NoiseSpec, EB_CONVENTION,
};
use chaoscomm_core::chaos::{
    run_sync, sync_settle_index, write_trace_csv, ChaosConfig, ChaoticState, ChaoticTrace,
    DEFAULT_P_HAT0, T_SYNC_SAMPLES,
};
use chaoscomm_core::dsp::{exp_smooth, psd, write_psd_csv, BitStream, Signal};
use chaoscomm_core::dsss::{dsss_link, write_symbol_csv, DsssConfig, InfoSymbol, SymbolRecord};
use chaoscomm_core::fhss::{
    build_message, fhss_receive_detail, fhss_transmit, readout_bits, write_link_trace_csv,
    write_plan_csv, ChannelTable, FhssConfig, FhssLinkSim, FhssReceived, HopPlan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum RunError {
    /// Bad configuration; exit code 2.
    Config(String),
    /// Simulation or artifact-writing failure; exit code 3.
    Sim(String),
    /// A self-test expectation was violated; exit code 4.
    Check(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Sim(_) => 3,
            RunError::Check(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunError::Config(m) | RunError::Sim(m) | RunError::Check(m) => m,
        }
    }
}

impl From<chaoscomm_core::Error> for RunError {
    fn from(e: chaoscomm_core::Error) -> Self {
        RunError::Sim(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Sim(format!("artifact io: {e}"))
    }
}

/// Tracks files created by a run so a failure can remove partial outputs.
struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn file(&mut self, name: &str) -> std::io::Result<BufWriter<fs::File>> {
        let path = self.dir.join(name);
        let f = fs::File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// Runs one experiment, returning a one-line summary. Partial artifacts are
/// removed when the run itself fails; a self-test failure keeps them for
/// inspection.
pub fn run(
    experiment: Experiment,
    cfg: &ExperimentConfig,
    out_dir: &Path,
    self_test: bool,
    scale: u64,
) -> Result<String, RunError> {
    let mut art = Artifacts::new(out_dir)?;
    let result = dispatch(experiment, cfg, &mut art, self_test, scale);
    if matches!(result, Err(RunError::Sim(_) | RunError::Config(_))) {
        art.discard();
    }
    result
}

fn dispatch(
    experiment: Experiment,
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    self_test: bool,
    scale: u64,
) -> Result<String, RunError> {
    match experiment {
        Experiment::Sync => run_sync_experiment(cfg, art, self_test, scale),
        Experiment::Fhss | Experiment::FhssNoise => {
            run_fhss_experiment(experiment, cfg, art, self_test, scale)
        }
        Experiment::FhssSmooth => run_fhss_smooth(cfg, art, self_test, scale),
        Experiment::Dsss | Experiment::DsssNoise => {
            run_dsss_experiment(experiment, cfg, art, self_test, scale)
        }
        Experiment::BerSweep => run_ber_sweep(cfg, art, self_test, scale),
        Experiment::Psd => run_psd(cfg, art, self_test, scale),
    }
}

fn chaos_trace(cfg: &ExperimentConfig, n: usize) -> Result<ChaoticTrace, RunError> {
    let ccfg = ChaosConfig::default();
    let master0 = ChaoticState::new(cfg.master_x0, ccfg.params.as_array(), 0.0);
    let slave0 = ChaoticState::new(cfg.slave_x0, DEFAULT_P_HAT0, 0.0);
    Ok(run_sync(&ccfg, &master0, &slave0, n, 1.0 / cfg.sample_rate_hz)?)
}

fn fhss_config(cfg: &ExperimentConfig) -> Result<FhssConfig, RunError> {
    let table = ChannelTable::new(cfg.m, 58.6, 1.4, cfg.sample_rate_hz)?;
    Ok(FhssConfig {
        table,
        s_f: cfg.s_f,
        hold: cfg.hop_hold,
        kf_hz: cfg.kf_hz,
        carrier_amplitude: cfg.carrier_amplitude,
        bit_amplitude: cfg.bit_amplitude,
        warmup_hops: cfg.warmup_hops,
        sync_tol: cfg.sync_tol,
        align_max_lag: cfg.align_max_lag,
    })
}

/// Channel noise resolved from the config; the noise stream is seeded apart
/// from the data stream so changing one leaves the other untouched.
fn noise_spec(cfg: &ExperimentConfig) -> Option<NoiseSpec> {
    if cfg.snr_db.is_none() && cfg.noise_power_dbm.is_none() {
        return None;
    }
    Some(NoiseSpec {
        snr_db: cfg.snr_db,
        noise_power_dbm: cfg.noise_power_dbm,
        seed: cfg.seed.wrapping_add(1),
    })
}

fn random_bits(seed: u64, n: usize, rate: f64) -> BitStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BitStream { rate, bits: (0..n).map(|_| rng.random_range(0..=1u8)).collect() }
}

/// Writes `run.meta`: measurements as comments, then the resolved config,
/// so the file parses as a config reproducing the run.
fn write_meta(
    art: &mut Artifacts,
    experiment: Experiment,
    cfg: &ExperimentConfig,
    scale: u64,
    measurements: &[(&str, String)],
) -> Result<(), RunError> {
    let mut w = art.file("run.meta")?;
    writeln!(w, "# experiment = {}", experiment.name())?;
    writeln!(w, "# scale = {scale} (already applied to the values below)")?;
    writeln!(w, "# eb_convention = {EB_CONVENTION}")?;
    for (key, value) in measurements {
        writeln!(w, "# {key} = {value}")?;
    }
    writeln!(w, "# resolved config; pass this file to --config to reproduce the run")?;
    write!(w, "{}", cfg.to_file_string())?;
    Ok(())
}

fn fmt_variance(spec: &Option<NoiseSpec>, eb: f64) -> Result<(f64, String), RunError> {
    match spec {
        Some(s) => {
            let v = s.variance(eb)?;
            Ok((v, format!("{v:e}")))
        }
        None => Ok((0.0, "none".into())),
    }
}

fn run_sync_experiment(
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    self_test: bool,
    scale: u64,
) -> Result<String, RunError> {
    let n = if cfg.n_samples > 0 { cfg.n_samples } else { 30_000 };
    let trace = chaos_trace(cfg, n)?;
    let settle = sync_settle_index(&trace, 1e-3);
    let final_err = *trace.sync_error().last().unwrap();

    write_trace_csv(&trace, art.file("trace.csv")?)?;
    let settle_s = settle.map(|i| i.to_string()).unwrap_or_else(|| "none".into());
    write_meta(
        art,
        Experiment::Sync,
        cfg,
        scale,
        &[("t_sync_samples", settle_s.clone()), ("final_error", format!("{final_err:e}"))],
    )?;

    if self_test {
        match settle {
            None => {
                return Err(RunError::Check(format!(
                    "sync error never stays below 1e-3 over {n} samples"
                )))
            }
            Some(i) if n >= T_SYNC_SAMPLES && i > T_SYNC_SAMPLES => {
                return Err(RunError::Check(format!(
                    "sync error settles at sample {i}, after the documented {T_SYNC_SAMPLES}"
                )))
            }
            Some(_) => {}
        }
    }
    Ok(format!("sync: settled at sample {settle_s}, final error {final_err:.2e}"))
}

struct LinkRun {
    info: BitStream,
    msg: Signal,
    tx_plan: HopPlan,
    out: FhssReceived,
    settle: Option<usize>,
    variance_note: String,
}

fn run_link(cfg: &ExperimentConfig) -> Result<LinkRun, RunError> {
    let fcfg = fhss_config(cfg)?;
    let n = if cfg.n_samples > 0 {
        cfg.n_samples
    } else {
        (cfg.warmup_hops + cfg.n_bits + 1) * cfg.hop_hold
    };
    let trace = chaos_trace(cfg, n)?;
    let rate = cfg.sample_rate_hz / cfg.hop_hold as f64;
    let info = random_bits(cfg.seed, cfg.n_bits, rate);
    let (tx, tx_plan) = fhss_transmit(&info, &trace, &fcfg)?;
    let msg = build_message(&info, &trace, &fcfg)?;
    let spec = noise_spec(cfg);
    let eb = cfg.bit_amplitude * cfg.bit_amplitude;
    let (_, variance_note) = fmt_variance(&spec, eb)?;
    let rx = match &spec {
        Some(s) => awgn(&tx, s, eb)?,
        None => tx,
    };
    let out = fhss_receive_detail(&rx, &trace, &fcfg)?;
    let settle = sync_settle_index(&trace, 1e-3);
    Ok(LinkRun { info, msg, tx_plan, out, settle, variance_note })
}

fn run_fhss_experiment(
    experiment: Experiment,
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    self_test: bool,
    scale: u64,
) -> Result<String, RunError> {
    let run = run_link(cfg)?;
    let recovered = &run.out.bits.bits[..cfg.n_bits];
    let rx_stream = BitStream { rate: run.info.rate, bits: recovered.to_vec() };
    let (errors, rate) = ber(&run.info, &rx_stream);

    // Both plans go out so their hop-by-hop agreement can be inspected; they
    // match exactly wherever the pair is synchronized.
    write_plan_csv(&run.tx_plan, art.file("plan_tx.csv")?)?;
    write_plan_csv(&run.out.plan, art.file("plan_rx.csv")?)?;
    {
        let mut w = art.file("bits.csv")?;
        writeln!(w, "bit,tx,rx")?;
        for (i, (&t, &r)) in run.info.bits.iter().zip(recovered).enumerate() {
            writeln!(w, "{i},{t},{r}")?;
        }
    }
    write_link_trace_csv(
        &run.msg,
        &run.out.demodulated,
        cfg.trace_stride.max(1),
        art.file("link_trace.csv")?,
    )?;

    let settle_s = run.settle.map(|i| i.to_string()).unwrap_or_else(|| "none".into());
    write_meta(
        art,
        experiment,
        cfg,
        scale,
        &[
            ("t_sync_samples", settle_s),
            ("alignment_delay", run.out.alignment_delay.to_string()),
            ("noise_variance", run.variance_note.clone()),
            ("errors", errors.to_string()),
            ("ber", rate.to_string()),
        ],
    )?;

    if self_test && errors != 0 {
        return Err(RunError::Check(format!(
            "{} expects an error-free stream, saw {errors} errors over {} bits",
            experiment.name(),
            cfg.n_bits
        )));
    }
    Ok(format!(
        "{}: {errors} errors over {} bits (ber {rate}), alignment delay {}",
        experiment.name(),
        cfg.n_bits,
        run.out.alignment_delay
    ))
}

fn run_fhss_smooth(
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    self_test: bool,
    scale: u64,
) -> Result<String, RunError> {
    let fcfg = fhss_config(cfg)?;
    let run = run_link(cfg)?;
    let raw = readout_bits(&run.out.residual, &fcfg, cfg.n_bits);
    let smoothed_sig = exp_smooth(&run.out.residual, cfg.lambda)?;
    let smooth = readout_bits(&smoothed_sig, &fcfg, cfg.n_bits);
    let (raw_errors, raw_ber) = ber(&run.info, &raw);
    let (smooth_errors, smooth_ber) = ber(&run.info, &smooth);

    {
        let mut w = art.file("bits.csv")?;
        writeln!(w, "bit,tx,raw,smoothed")?;
        for i in 0..cfg.n_bits {
            writeln!(w, "{i},{},{},{}", run.info.bits[i], raw.bits[i], smooth.bits[i])?;
        }
    }
    {
        let stride = cfg.trace_stride.max(1);
        let mut w = art.file("residual.csv")?;
        writeln!(w, "sample,residual,smoothed")?;
        for i in (0..run.out.residual.len()).step_by(stride) {
            writeln!(w, "{i},{},{}", run.out.residual.data[i], smoothed_sig.data[i])?;
        }
    }

    let settle_s = run.settle.map(|i| i.to_string()).unwrap_or_else(|| "none".into());
    write_meta(
        art,
        Experiment::FhssSmooth,
        cfg,
        scale,
        &[
            ("t_sync_samples", settle_s),
            ("alignment_delay", run.out.alignment_delay.to_string()),
            ("noise_variance", run.variance_note.clone()),
            ("raw_errors", raw_errors.to_string()),
            ("raw_ber", raw_ber.to_string()),
            ("smoothed_errors", smooth_errors.to_string()),
            ("smoothed_ber", smooth_ber.to_string()),
        ],
    )?;

    if self_test {
        if raw_ber <= 0.1 {
            return Err(RunError::Check(format!(
                "raw thresholding ber {raw_ber} not above 0.1; noise point too mild for the contrast"
            )));
        }
        if smooth_ber >= 0.01 {
            return Err(RunError::Check(format!(
                "smoothed ber {smooth_ber} not below 0.01"
            )));
        }
    }
    Ok(format!(
        "fhss-smooth: raw ber {raw_ber:.3} vs smoothed ber {smooth_ber:.4} over {} bits (lambda {})",
        cfg.n_bits, cfg.lambda
    ))
}

fn alphabet_symbols(cfg: &ExperimentConfig, rate: f64) -> Result<Vec<InfoSymbol>, RunError> {
    let period = 1u64 << cfg.symbol_bits;
    (0..cfg.n_symbols)
        .map(|s| {
            let v = s as u64 % period;
            let bits =
                (0..cfg.symbol_bits).map(|i| ((v >> (cfg.symbol_bits - 1 - i)) & 1) as u8).collect();
            InfoSymbol::new(bits, rate).map_err(RunError::from)
        })
        .collect()
}

fn first_post_sync_symbol(hold: usize) -> usize {
    T_SYNC_SAMPLES.div_ceil(hold)
}

fn run_dsss_experiment(
    experiment: Experiment,
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    self_test: bool,
    scale: u64,
) -> Result<String, RunError> {
    let dcfg = DsssConfig {
        chip_scale: cfg.chip_scale,
        m_chips: cfg.m_chips,
        symbol_bits: cfg.symbol_bits,
        hold: cfg.hop_hold,
        amplitude: cfg.bit_amplitude,
        hard_slicing: cfg.hard_slicing,
        noise: noise_spec(cfg),
    };
    let n = if cfg.n_samples > 0 { cfg.n_samples } else { cfg.n_symbols * cfg.hop_hold };
    let trace = chaos_trace(cfg, n)?;
    let rate = cfg.sample_rate_hz / cfg.hop_hold as f64;
    let info = alphabet_symbols(cfg, rate)?;
    let records = dsss_link(&info, &trace, &dcfg)?;

    write_symbol_csv(&records, art.file("symbols.csv")?)?;

    let first_post = first_post_sync_symbol(cfg.hop_hold);
    let post: Vec<&SymbolRecord> = records.iter().filter(|r| r.symbol >= first_post).collect();
    let invalid_post = post.iter().filter(|r| !r.valid).count();
    // Exactness is judged on the rounded bits alone; a symbol can be flagged
    // invalid yet still round to the right word.
    let exact_post = post.iter().filter(|r| r.recovered.bits == r.tx.bits).count();
    let settle = sync_settle_index(&trace, 1e-3);
    let settle_s = settle.map(|i| i.to_string()).unwrap_or_else(|| "none".into());
    let eb = cfg.bit_amplitude * cfg.bit_amplitude;
    let (_, variance_note) = fmt_variance(&dcfg.noise, eb)?;
    write_meta(
        art,
        experiment,
        cfg,
        scale,
        &[
            ("t_sync_samples", settle_s),
            ("noise_variance", variance_note),
            ("first_post_sync_symbol", first_post.to_string()),
            ("post_sync_symbols", post.len().to_string()),
            ("post_sync_exact", exact_post.to_string()),
            ("post_sync_invalid", invalid_post.to_string()),
            ("pre_sync_first_valid", records.first().map(|r| r.valid).unwrap_or(false).to_string()),
        ],
    )?;

    if self_test {
        if exact_post != post.len() {
            return Err(RunError::Check(format!(
                "only {exact_post}/{} post-sync symbols rounded to the right word",
                post.len()
            )));
        }
        match experiment {
            Experiment::Dsss => {
                if records.first().is_some_and(|r| r.valid) {
                    return Err(RunError::Check(
                        "first pre-sync symbol decoded as valid; expected a flagged mismatch"
                            .into(),
                    ));
                }
                if invalid_post != 0 {
                    return Err(RunError::Check(format!(
                        "{invalid_post} noiseless post-sync symbols were flagged invalid"
                    )));
                }
            }
            _ => {
                if invalid_post == 0 {
                    return Err(RunError::Check(
                        "no post-sync correlator output left {0,1}; fragility not reproduced"
                            .into(),
                    ));
                }
            }
        }
    }
    Ok(format!(
        "{}: {exact_post}/{} post-sync symbols exact, {invalid_post} flagged invalid",
        experiment.name(),
        post.len()
    ))
}

fn monotone_within_ci(report: &BerReport) -> bool {
    report
        .grid
        .windows(2)
        .all(|w| w[1].ber <= w[0].ber + w[0].ci95 + w[1].ci95)
}

fn run_ber_sweep(
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    self_test: bool,
    scale: u64,
) -> Result<String, RunError> {
    let fcfg = fhss_config(cfg)?;
    let n = if cfg.n_samples > 0 {
        cfg.n_samples
    } else {
        (cfg.warmup_hops + cfg.n_bits + 1) * cfg.hop_hold
    };
    let trace = chaos_trace(cfg, n)?;
    let sim = FhssLinkSim { cfg: fcfg, trace: &trace, bits_per_trial: cfg.n_bits };
    let grid: Vec<NoiseSpec> =
        cfg.snr_grid_db.iter().map(|&db| NoiseSpec::from_snr_db(db, 0)).collect();
    if grid.is_empty() {
        return Err(RunError::Config("snr_grid_db is empty".into()));
    }
    let eb = cfg.bit_amplitude * cfg.bit_amplitude;
    let report = monte_carlo(&sim, &grid, cfg.trials, cfg.seed, eb)?;

    write_ber_csv(&report, art.file("ber.csv")?)?;
    let monotone = monotone_within_ci(&report);
    let bers: Vec<String> = report.grid.iter().map(|c| format!("{:.4}", c.ber)).collect();
    write_meta(
        art,
        Experiment::BerSweep,
        cfg,
        scale,
        &[
            ("bers", bers.join(",")),
            ("monotone_within_ci95", monotone.to_string()),
        ],
    )?;

    if self_test && !monotone {
        return Err(RunError::Check(
            "ber rose with snr beyond the ci95 slack somewhere in the grid".into(),
        ));
    }
    Ok(format!(
        "ber-sweep: bers [{}] over {} trials/point",
        bers.join(", "),
        cfg.trials
    ))
}

fn run_psd(
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    self_test: bool,
    scale: u64,
) -> Result<String, RunError> {
    let fcfg = fhss_config(cfg)?;
    let n = if cfg.n_samples > 0 {
        cfg.n_samples
    } else {
        (cfg.warmup_hops + cfg.n_bits + 1) * cfg.hop_hold
    };
    let trace = chaos_trace(cfg, n)?;
    let rate = cfg.sample_rate_hz / cfg.hop_hold as f64;
    let info = random_bits(cfg.seed, cfg.n_bits, rate);
    let (tx, _) = fhss_transmit(&info, &trace, &fcfg)?;
    let spectrum = psd(&tx, cfg.psd_window, cfg.psd_atten_db)?;
    write_psd_csv(&spectrum, art.file("psd.csv")?)?;

    let (peak_hz, peak_db) = spectrum
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0.0, f64::NEG_INFINITY));
    write_meta(
        art,
        Experiment::Psd,
        cfg,
        scale,
        &[
            ("peak_hz", peak_hz.to_string()),
            ("peak_db", format!("{peak_db:.2}")),
        ],
    )?;

    if self_test {
        let lo = fcfg.table.lower_edge_hz(1)?;
        let hi = fcfg.table.upper_edge_hz(fcfg.table.m - 1)?;
        if !(lo..=hi).contains(&peak_hz) {
            return Err(RunError::Check(format!(
                "spectral peak {peak_hz} Hz fell outside the hop band [{lo}, {hi}]"
            )));
        }
    }
    Ok(format!("psd: peak {:.1} MHz at {peak_db:.1} dB", peak_hz / 1e6))
}
