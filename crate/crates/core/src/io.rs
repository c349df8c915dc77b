//! File formats and the command implementations behind the binary.
//!
//! Result files are CSV with a header row. Their first line is a comment
//! `# config_sha256=<hex>` naming the SHA-256 of the config file bytes they
//! were produced from. Every result file gets a sidecar
//! `<file>.manifest.json` holding seed, worker count, arguments and wall-clock
//! timestamps, so the result file itself is byte-identical across reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bounds::{sweep_rate_vs_loss, ParameterSchedule, SweepMode, SweepOptions, SweepRow};
use crate::decoy::{analyze, Analysis, EstimatorOptions, GainRow, Method, ObservedGains};
use crate::simulator::{run_simulation_with, SimulationOptions};
use crate::types::{IntensityPair, ProtocolConfig, TallyTable, ValidationResult};
use crate::{Error, Result};

const HASH_PREFIX: &str = "# config_sha256=";

pub const TALLY_HEADER: [&str; 6] =
    ["pair", "sent", "psi_minus_successes", "psi_minus_errors", "psi_plus_successes", "psi_plus_errors"];
pub const GAINS_HEADER: [&str; 4] = ["pair_label", "sent", "successes", "errors"];
pub const SWEEP_HEADER: [&str; 8] =
    ["loss_db", "eta", "y11_lower", "e11ph_upper", "rate_per_pulse", "rate_bps", "plob", "ideal_decoy"];

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error {
    let context = context.into();
    move |source| Error::Io { context, source }
}

fn read_file(path: &Path, what: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        let context = if e.kind() == std::io::ErrorKind::NotFound {
            format!("{what} not found: {}", path.display())
        } else {
            format!("cannot read {what} {}", path.display())
        };
        Error::Io { context, source: e }
    })
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io_err(format!("cannot write {}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io { context: format!("cannot move output into {}", path.display()), source: e }
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Config plus the hash of the bytes it was parsed from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ProtocolConfig,
    pub sha256: String,
}

/// Parses without validating.
pub fn parse_config(text: &str) -> Result<ProtocolConfig> {
    toml::from_str(text).map_err(|e| Error::Parse(format!("config: {}", e.message())))
}

pub fn config_to_toml(config: &ProtocolConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Parse(format!("cannot serialise config: {e}")))
}

pub fn load_config_unchecked(path: &Path) -> Result<LoadedConfig> {
    let bytes = read_file(path, "config")?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Parse("config is not UTF-8".into()))?;
    Ok(LoadedConfig { config: parse_config(&text)?, sha256: sha256_hex(&bytes) })
}

/// Loads and validates a config file.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let loaded = load_config_unchecked(path)?;
    loaded.config.validate().into_result()?;
    Ok(loaded)
}

pub fn save_config(path: &Path, config: &ProtocolConfig) -> Result<()> {
    write_atomic(path, config_to_toml(config)?.as_bytes())
}

fn csv_bytes(hash: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut out = format!("{HASH_PREFIX}{hash}\n").into_bytes();
    let mut w = csv::Writer::from_writer(&mut out);
    let wrap = |e: csv::Error| Error::Parse(format!("csv: {e}"));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Parse(format!("csv: {e}")))?;
    drop(w);
    Ok(out)
}

/// Hash comment and records of a CSV file.
struct CsvTable {
    hash: Option<String>,
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_csv(bytes: &[u8], what: &str) -> Result<CsvTable> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse(format!("{what} is not UTF-8")))?;
    let hash = text.lines().find_map(|l| l.strip_prefix(HASH_PREFIX)).map(|h| h.trim().to_owned());
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(bytes);
    let header = r.headers().map_err(|e| Error::Parse(format!("{what}: {e}")))?.iter().map(str::to_owned).collect();
    let rows = r.records().collect::<Result<Vec<_>, _>>().map_err(|e| Error::Parse(format!("{what}: {e}")))?;
    Ok(CsvTable { hash, header, rows })
}

fn parse_count(field: &str, what: &str) -> Result<u64> {
    // Sent counts may be written in float notation, e.g. 2.056752e12.
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(v as u64),
        _ => Err(Error::InvalidCounts(format!("{what}: '{field}' is not a nonnegative integer count"))),
    }
}

pub fn tally_to_csv(tally: &TallyTable, hash: &str) -> Result<Vec<u8>> {
    let rows = tally
        .iter()
        .map(|(pair, t)| {
            vec![
                pair.to_string(),
                t.sent.to_string(),
                t.psi_minus.successes.to_string(),
                t.psi_minus.errors.to_string(),
                t.psi_plus.successes.to_string(),
                t.psi_plus.errors.to_string(),
            ]
        })
        .collect();
    csv_bytes(hash, &TALLY_HEADER, rows)
}

fn tally_from_table(t: &CsvTable) -> Result<TallyTable> {
    let mut tally = TallyTable::new();
    for r in &t.rows {
        if r.len() != TALLY_HEADER.len() {
            return Err(Error::Parse(format!("tally row has {} fields, expected {}", r.len(), TALLY_HEADER.len())));
        }
        let pair: IntensityPair = r[0].parse()?;
        let n = |i: usize| parse_count(&r[i], &r[0]);
        let e = tally.entry(pair);
        e.sent += n(1)?;
        e.psi_minus.successes += n(2)?;
        e.psi_minus.errors += n(3)?;
        e.psi_plus.successes += n(4)?;
        e.psi_plus.errors += n(5)?;
    }
    tally.check()?;
    Ok(tally)
}

pub fn tally_from_csv(bytes: &[u8]) -> Result<(TallyTable, Option<String>)> {
    let t = read_csv(bytes, "tally")?;
    if t.header != TALLY_HEADER {
        return Err(Error::Parse(format!("tally header must be {}", TALLY_HEADER.join(","))));
    }
    Ok((tally_from_table(&t)?, t.hash))
}

pub fn gains_to_csv(gains: &ObservedGains, hash: &str) -> Result<Vec<u8>> {
    let rows = gains
        .rows()
        .iter()
        .map(|r| {
            vec![
                r.label(),
                r.sent.to_string(),
                r.successes.to_string(),
                r.errors.map_or_else(|| "NA".to_owned(), |e| e.to_string()),
            ]
        })
        .collect();
    csv_bytes(hash, &GAINS_HEADER, rows)
}

fn gains_from_table(t: &CsvTable) -> Result<ObservedGains> {
    let mut rows = Vec::new();
    for r in &t.rows {
        if r.len() != GAINS_HEADER.len() {
            return Err(Error::Parse(format!("gains row has {} fields, expected {}", r.len(), GAINS_HEADER.len())));
        }
        let errors = match &r[3] {
            "NA" | "na" | "" => None,
            s => Some(parse_count(s, &r[0])?),
        };
        rows.push(GainRow {
            pairs: GainRow::parse_label(&r[0])?,
            sent: parse_count(&r[1], &r[0])?,
            successes: parse_count(&r[2], &r[0])?,
            errors,
        });
    }
    ObservedGains::new(rows)
}

/// Reads either a gains file or a tally file, telling them apart by header.
pub fn read_observations(bytes: &[u8]) -> Result<(ObservedGains, Option<String>)> {
    let t = read_csv(bytes, "gains")?;
    let gains = if t.header == GAINS_HEADER {
        gains_from_table(&t)?
    } else if t.header == TALLY_HEADER {
        ObservedGains::from_tally(&tally_from_table(&t)?)?
    } else {
        return Err(Error::Parse(format!(
            "unrecognised header '{}'; expected {} or {}",
            t.header.join(","),
            GAINS_HEADER.join(","),
            TALLY_HEADER.join(",")
        )));
    };
    Ok((gains, t.hash))
}

/// Long-format `field,value` rows for an analysis.
pub fn analysis_to_csv(a: &Analysis, hash: &str) -> Result<Vec<u8>> {
    let r = &a.result;
    let mut rows: Vec<Vec<String>> = [
        ("method", a.method.to_string()),
        ("y11_lower", r.y11_lower.to_string()),
        ("e11ph_upper", r.e11ph_upper.to_string()),
        ("rate_per_pulse", r.key_rate_per_pulse.to_string()),
        ("rate_bps", r.key_rate_bps.to_string()),
        ("rate_clamped", r.clamped.to_string()),
        ("y_ss", a.y_ss.to_string()),
        ("e_ss", a.e_ss.to_string()),
        ("diagnostic", a.diagnostic.clone().unwrap_or_default()),
    ]
    .into_iter()
    .map(|(k, v)| vec![k.to_owned(), v])
    .collect();
    for ci in &a.intervals {
        rows.push(vec![format!("interval.{}.observed", ci.label), ci.observed.to_string()]);
        rows.push(vec![format!("interval.{}.lower", ci.label), ci.lower.to_string()]);
        rows.push(vec![format!("interval.{}.upper", ci.label), ci.upper.to_string()]);
    }
    csv_bytes(hash, &["field", "value"], rows)
}

/// Reads back the `field,value` pairs of an analysis file.
pub fn read_fields(bytes: &[u8]) -> Result<Vec<(String, String)>> {
    let t = read_csv(bytes, "result")?;
    Ok(t.rows.iter().map(|r| (r.get(0).unwrap_or("").to_owned(), r.get(1).unwrap_or("").to_owned())).collect())
}

pub fn sweep_to_csv(rows: &[SweepRow], hash: &str) -> Result<Vec<u8>> {
    let rows = rows
        .iter()
        .map(|r| {
            [r.loss_db, r.eta, r.y11_lower, r.e11ph_upper, r.rate_per_pulse, r.rate_bps, r.plob, r.ideal_decoy]
                .iter()
                .map(f64::to_string)
                .collect()
        })
        .collect();
    csv_bytes(hash, &SWEEP_HEADER, rows)
}

/// Sidecar describing how a result file was produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub worker_count: Option<usize>,
    pub arguments: Vec<(String, String)>,
    pub notes: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    fn start(command: &str, config_path: &Path, config_sha256: &str) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_path: config_path.display().to_string(),
            config_sha256: config_sha256.into(),
            seed: None,
            worker_count: None,
            arguments: Vec::new(),
            notes: Vec::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    fn arg(&mut self, key: &str, value: impl ToString) {
        self.arguments.push((key.into(), value.to_string()));
    }

    fn finish(mut self, result_path: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let json = serde_json::to_vec_pretty(&self).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
        write_atomic(&manifest_path(result_path), &json)
    }
}

pub fn manifest_path(result_path: &Path) -> PathBuf {
    let mut p = result_path.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}

/// Runs the simulator and writes the tally. `pairs` overrides the config's
/// pulse-pair budget.
pub fn cmd_simulate(
    config_path: &Path,
    seed: u64,
    workers: usize,
    pairs: Option<u64>,
    out: &Path,
) -> Result<TallyTable> {
    let loaded = load_config(config_path)?;
    let mut manifest = RunManifest::start("simulate", config_path, &loaded.sha256);
    let budget = pairs.unwrap_or(loaded.config.pulse_pair_budget);
    manifest.seed = Some(seed);
    manifest.worker_count = Some(workers);
    manifest.arg("pairs", budget);
    let tally = run_simulation_with(&loaded.config, &SimulationOptions::new(seed, budget).workers(workers))?;
    write_atomic(out, &tally_to_csv(&tally, &loaded.sha256)?)?;
    manifest.finish(out)?;
    Ok(tally)
}

/// Decoy analysis of a gains or tally file. Tallies carrying a different
/// config hash are refused unless `force` is set. Writes the result before
/// reporting an infeasible constraint system.
pub fn cmd_analyze(input: &Path, config_path: &Path, out: &Path, method: Method, force: bool) -> Result<Analysis> {
    let loaded = load_config(config_path)?;
    let (gains, hash) = read_observations(&read_file(input, "gains file")?)?;
    let mut manifest = RunManifest::start("analyze", config_path, &loaded.sha256);
    manifest.arg("input", input.display());
    manifest.arg("method", method);
    if let Some(h) = hash.filter(|h| *h != loaded.sha256) {
        if !force {
            return Err(Error::Mismatch(format!(
                "{} was produced from config {h}, not {}; pass --force to analyze anyway",
                input.display(),
                loaded.sha256
            )));
        }
        manifest.notes.push(format!("config hash mismatch overridden: input {h}"));
    }
    let opts = EstimatorOptions::from_config(&loaded.config).method(method);
    let analysis = analyze(&gains, &loaded.config, &opts)?;
    write_atomic(out, &analysis_to_csv(&analysis, &loaded.sha256)?)?;
    manifest.finish(out)?;
    match &analysis.diagnostic {
        Some(msg) => Err(Error::Infeasible(msg.clone())),
        None => Ok(analysis),
    }
}

/// Parses a comma-separated loss list.
pub fn parse_losses(text: &str) -> Result<Vec<f64>> {
    let losses: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f64::from_str(s).map_err(|_| Error::Parse(format!("loss '{s}' is not a number"))))
        .collect::<Result<_>>()?;
    if losses.is_empty() {
        return Err(Error::domain("no losses given"));
    }
    Ok(losses)
}

/// Removes repeated losses, keeping first occurrences. Returns warnings.
pub fn dedup_losses(losses: &mut Vec<f64>) -> Vec<String> {
    let mut seen: Vec<f64> = Vec::new();
    let mut warnings = Vec::new();
    losses.retain(|l| {
        if seen.contains(l) {
            warnings.push(format!("duplicate loss {l} dB ignored"));
            false
        } else {
            seen.push(*l);
            true
        }
    });
    warnings
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepCommand {
    pub mode: SweepMode,
    pub schedule: ParameterSchedule,
}

/// Rate-versus-loss sweep. Returns the rows and any warnings.
pub fn cmd_sweep(
    config_path: &Path,
    losses: &[f64],
    cmd: SweepCommand,
    out: &Path,
) -> Result<(Vec<SweepRow>, Vec<String>)> {
    if losses.is_empty() {
        return Err(Error::domain("no losses given"));
    }
    let loaded = load_config(config_path)?;
    let mut grid = losses.to_vec();
    let warnings = dedup_losses(&mut grid);
    let mut manifest = RunManifest::start("sweep", config_path, &loaded.sha256);
    manifest.arg("losses", grid.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    match cmd.mode {
        SweepMode::FullSimulation { seed, workers, pairs } => {
            manifest.seed = Some(seed);
            manifest.worker_count = Some(workers);
            manifest.arg("mode", "full-simulation");
            manifest.arg("pairs", pairs);
        }
        SweepMode::AnalyticGains => manifest.arg("mode", "analytic-gains"),
    }
    manifest.arg("parameter_schedule", cmd.schedule.describe());
    manifest.notes.extend(warnings.iter().cloned());
    let opts = SweepOptions { mode: cmd.mode, schedule: cmd.schedule, ..SweepOptions::default() };
    let rows = sweep_rate_vs_loss(&loaded.config, &grid, &opts)?;
    for r in &rows {
        if let Some(d) = &r.diagnostic {
            manifest.notes.push(format!("{} dB: {d}", r.loss_db));
        }
    }
    write_atomic(out, &sweep_to_csv(&rows, &loaded.sha256)?)?;
    manifest.finish(out)?;
    Ok((rows, warnings))
}

/// Validates a config file without running anything.
pub fn cmd_validate(config_path: &Path) -> Result<ValidationResult> {
    Ok(load_config_unchecked(config_path)?.config.validate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::IntensityLabel::*;

    #[test]
    fn config_round_trips_losslessly() {
        for cfg in
            [ProtocolConfig::experiment_24db(), ProtocolConfig::experiment_35db(), ProtocolConfig::experiment_44db()]
        {
            let text = config_to_toml(&cfg).unwrap();
            assert_eq!(parse_config(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn malformed_config_is_a_parse_error() {
        assert!(matches!(parse_config("clock_rate_mhz = \"fast\""), Err(Error::Parse(_))));
    }

    #[test]
    fn tally_round_trips() {
        let mut t = TallyTable::new();
        let e = t.entry(IntensityPair::new(Mu, Vacuum));
        e.sent = 10;
        e.psi_minus.successes = 3;
        e.psi_plus.successes = 2;
        e.psi_plus.errors = 1;
        let bytes = tally_to_csv(&t, "abc").unwrap();
        let (back, hash) = tally_from_csv(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(hash.as_deref(), Some("abc"));
    }

    #[test]
    fn gains_round_trip_with_na() {
        let g = ObservedGains::measured_35db();
        let bytes = gains_to_csv(&g, "h").unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("nu_nu,2700000000,25250,NA"));
        assert!(text.contains("mu_o+o_mu,"));
        let (back, _) = read_observations(&bytes).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn errors_above_successes_are_rejected() {
        let text = "pair_label,sent,successes,errors\nmu_mu,100,5,6\n";
        assert!(matches!(read_observations(text.as_bytes()), Err(Error::InvalidCounts(_))));
    }

    #[test]
    fn unknown_header_is_rejected() {
        assert!(matches!(read_observations(b"a,b\n1,2\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn float_notation_counts_are_accepted() {
        assert_eq!(parse_count("2.056752e12", "x").unwrap(), 2_056_752_000_000);
        assert!(parse_count("1.5", "x").is_err());
        assert!(parse_count("-3", "x").is_err());
    }

    #[test]
    fn loss_lists() {
        assert_eq!(parse_losses("24, 35,44").unwrap(), vec![24.0, 35.0, 44.0]);
        assert_eq!(parse_losses("").unwrap_err().to_string(), "no losses given");
        assert!(parse_losses("24,x").is_err());
        let mut l = vec![24.0, 35.0, 24.0];
        let w = dedup_losses(&mut l);
        assert_eq!(l, vec![24.0, 35.0]);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn missing_config_is_an_io_error() {
        let err = load_config(Path::new("/nonexistent/cfg.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("config not found"));
    }
}
