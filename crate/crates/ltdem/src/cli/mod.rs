//! Configuration ingestion and the batch subcommands behind the `ltdem`
//! binary: `fit-detectors`, `tomography`, `keyrate` and `proofcheck`.
//!
//! All outputs are written atomically (temp file in the target directory,
//! then rename) and are byte-stable for a fixed config and seed.

mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;
use thiserror::Error;

use crate::channel::{self, DetectionStats, EveMode, SentState, SweepConfig, SweepPoint};
use crate::detector::{
    fit_detector, tomography, CountRateSample, DetectorError, DetectorFit, EfficiencyOperator,
    Polarization,
};
use crate::linalg::CVec;
use crate::proofcheck::{self, CheckRow, VIOLATION_TOL};
use crate::qstate::{MeasBasis, ProtocolProbs, SignalStates};
use crate::security::{self, LambdaBounds};

/// Command-level errors carrying the process exit code: `2` for input
/// problems, `3` for computation failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Compute(_) => 3,
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn compute(msg: impl Into<String>) -> CliError {
    CliError::Compute(msg.into())
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::InsufficientData(_) => input(e.to_string()),
            other => compute(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    eta_by_pol: Option<BTreeMap<String, f64>>,
    count_data: Option<PathBuf>,
    dark_rate_hz: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetectors {
    d0: RawDetector,
    d1: RawDetector,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawEveMode {
    MinEigD1,
    /// Mode state as `[[re0, im0], [re1, im1]]`, normalised on load.
    Explicit([[f64; 2]; 2]),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    detectors: RawDetectors,
    theta: Option<f64>,
    c01z: Option<f64>,
    phi0x_angle: Option<f64>,
    p_za: f64,
    p_zb: f64,
    alpha_db_per_km: f64,
    p_dark: f64,
    f_ec: f64,
    l_min_km: f64,
    l_max_km: f64,
    l_step_km: f64,
    eve_mode: Option<RawEveMode>,
    optimize_labeling: Option<bool>,
    seed: Option<u64>,
    proofcheck_trials: Option<usize>,
    stats_override_path: Option<PathBuf>,
}

/// Where one detector's efficiency operator comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSource {
    /// Tomography read-outs `(eta_H, eta_V, eta_D, eta_L)`.
    Etas(f64, f64, f64, f64),
    /// Raw count-rate data to be fitted first.
    CountData { path: PathBuf, dark_rate_hz: f64 },
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub d0: DetectorSource,
    pub d1: DetectorSource,
    pub theta: f64,
    pub phi0x_angle: f64,
    pub probs: ProtocolProbs,
    pub alpha_db_per_km: f64,
    pub p_dark: f64,
    pub f_ec: f64,
    pub l_min_km: f64,
    pub l_max_km: f64,
    pub l_step_km: f64,
    pub eve_mode: EveMode,
    /// Evaluate both detector labelings per lambda source and report the
    /// better one. Off by default: the two lambda methods then share the
    /// configured labeling and stay directly comparable.
    pub optimize_labeling: bool,
    pub seed: u64,
    pub proofcheck_trials: usize,
    pub stats_override_path: Option<PathBuf>,
}

impl RunConfig {
    /// Loads and validates a JSON config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| input(format!("cannot read config {}: {e}", path.display())))?;
        let raw: RawConfig = serde_json::from_str(&text)
            .map_err(|e| input(format!("config parse error: {e}")))?;
        Self::validate(raw, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(raw: RawConfig, base_dir: &Path) -> Result<Self, CliError> {
        let field = |name: &str, msg: String| input(format!("config field `{name}`: {msg}"));

        let theta = match (raw.theta, raw.c01z) {
            (Some(_), Some(_)) => {
                return Err(input(
                    "config fields `theta` and `c01z` are mutually exclusive; set exactly one",
                ))
            }
            (None, None) => {
                return Err(input(
                    "config requires exactly one of the fields `theta` and `c01z`",
                ))
            }
            (Some(t), None) => {
                if t.is_nan() || t <= -std::f64::consts::PI || t > std::f64::consts::PI {
                    return Err(field("theta", format!("{t} outside (-pi, pi]")));
                }
                t
            }
            (None, Some(c)) => {
                if c.is_nan() || c.abs() >= 1.0 {
                    return Err(field("c01z", format!("{c} outside (-1, 1)")));
                }
                c.asin()
            }
        };
        let phi0x_angle = raw.phi0x_angle.unwrap_or(std::f64::consts::FRAC_PI_2);
        if !phi0x_angle.is_finite() {
            return Err(field("phi0x_angle", "must be finite".into()));
        }
        for (name, v) in [("p_za", raw.p_za), ("p_zb", raw.p_zb)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(field(name, format!("{v} outside [0, 1]")));
            }
        }
        let probs = ProtocolProbs::new(raw.p_za, raw.p_zb)
            .map_err(|e| input(format!("config probabilities: {e}")))?;
        if raw.alpha_db_per_km < 0.0 {
            return Err(field("alpha_db_per_km", "must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&raw.p_dark) {
            return Err(field("p_dark", format!("{} outside [0, 1)", raw.p_dark)));
        }
        if raw.f_ec.is_nan() || raw.f_ec < 0.0 {
            return Err(field("f_ec", "must be >= 0".into()));
        }
        if raw.l_min_km < 0.0 {
            return Err(field("l_min_km", "must be >= 0".into()));
        }
        if raw.l_step_km.is_nan() || raw.l_step_km <= 0.0 {
            return Err(field("l_step_km", "must be > 0".into()));
        }
        let eve_mode = match raw.eve_mode.unwrap_or(RawEveMode::MinEigD1) {
            RawEveMode::MinEigD1 => EveMode::MinEigD1,
            RawEveMode::Explicit(parts) => {
                let mut v = CVec::from_vec(vec![
                    Complex64::new(parts[0][0], parts[0][1]),
                    Complex64::new(parts[1][0], parts[1][1]),
                ]);
                let n = v.norm();
                if n.is_nan() || n <= 0.0 {
                    return Err(field("eve_mode", "explicit mode state must be non-zero".into()));
                }
                v /= Complex64::new(n, 0.0);
                EveMode::Explicit(v)
            }
        };
        let proofcheck_trials = raw.proofcheck_trials.unwrap_or(1000);
        if proofcheck_trials == 0 {
            return Err(field("proofcheck_trials", "must be >= 1".into()));
        }
        let resolve_detector = |name: &str, d: RawDetector| -> Result<DetectorSource, CliError> {
            match (d.eta_by_pol, d.count_data) {
                (Some(_), Some(_)) => Err(field(
                    name,
                    "set exactly one of `eta_by_pol` and `count_data`".into(),
                )),
                (None, None) => Err(field(
                    name,
                    "one of `eta_by_pol` and `count_data` is required".into(),
                )),
                (Some(map), None) => {
                    let mut etas = [0.0; 4];
                    for (i, key) in ["H", "V", "D", "L"].iter().enumerate() {
                        let v = *map.get(*key).ok_or_else(|| {
                            field(name, format!("`eta_by_pol` is missing polarization {key}"))
                        })?;
                        if !(0.0..=1.0).contains(&v) {
                            return Err(field(
                                name,
                                format!("eta_by_pol[{key}] = {v} outside [0, 1]"),
                            ));
                        }
                        etas[i] = v;
                    }
                    if map.len() != 4 {
                        return Err(field(
                            name,
                            "`eta_by_pol` must contain exactly the keys H, V, D, L".into(),
                        ));
                    }
                    Ok(DetectorSource::Etas(etas[0], etas[1], etas[2], etas[3]))
                }
                (None, Some(path)) => {
                    let dark = d.dark_rate_hz.ok_or_else(|| {
                        field(name, "`dark_rate_hz` is required with `count_data`".into())
                    })?;
                    if dark < 0.0 {
                        return Err(field(name, "`dark_rate_hz` must be >= 0".into()));
                    }
                    let path = if path.is_relative() {
                        base_dir.join(path)
                    } else {
                        path
                    };
                    Ok(DetectorSource::CountData {
                        path,
                        dark_rate_hz: dark,
                    })
                }
            }
        };
        let d0 = resolve_detector("detectors.d0", raw.detectors.d0)?;
        let d1 = resolve_detector("detectors.d1", raw.detectors.d1)?;
        let stats_override_path = raw.stats_override_path.map(|p| {
            if p.is_relative() {
                base_dir.join(p)
            } else {
                p
            }
        });
        Ok(RunConfig {
            d0,
            d1,
            theta,
            phi0x_angle,
            probs,
            alpha_db_per_km: raw.alpha_db_per_km,
            p_dark: raw.p_dark,
            f_ec: raw.f_ec,
            l_min_km: raw.l_min_km,
            l_max_km: raw.l_max_km,
            l_step_km: raw.l_step_km,
            eve_mode,
            optimize_labeling: raw.optimize_labeling.unwrap_or(false),
            seed: raw.seed.unwrap_or(0),
            proofcheck_trials,
            stats_override_path,
        })
    }

    pub fn signal_states(&self) -> SignalStates {
        SignalStates::from_theta(self.theta, self.phi0x_angle)
    }
}

// ---------------------------------------------------------------------------
// File helpers.
// ---------------------------------------------------------------------------

/// Writes a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| input(format!("invalid output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| input(format!("cannot write {}: {e}", path.display())))
}

/// Reads a `polarization,r_in_hz,r_det_hz` CSV of count-rate samples.
pub fn read_count_data(path: &Path) -> Result<Vec<CountRateSample>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| input(format!("cannot read count data {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| input(format!("{}: {e}", path.display())))?
        .clone();
    let expected = ["polarization", "r_in_hz", "r_det_hz"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(input(format!(
            "{}: expected header `polarization,r_in_hz,r_det_hz`, found `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2; // header is line 1
        let record = record.map_err(|e| input(format!("{} row {row}: {e}", path.display())))?;
        let pol = match record.get(0) {
            Some("H") => Polarization::H,
            Some("V") => Polarization::V,
            Some("D") => Polarization::D,
            Some("L") => Polarization::L,
            other => {
                return Err(input(format!(
                    "{} row {row}: polarization must be one of H, V, D, L (found {:?})",
                    path.display(),
                    other.unwrap_or("")
                )))
            }
        };
        let parse = |idx: usize, name: &str| -> Result<f64, CliError> {
            record
                .get(idx)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    input(format!(
                        "{} row {row}: cannot parse {name} as a number",
                        path.display()
                    ))
                })
        };
        out.push(CountRateSample {
            polarization: pol,
            r_in_hz: parse(1, "r_in_hz")?,
            r_det_hz: parse(2, "r_det_hz")?,
        });
    }
    Ok(out)
}

/// Reads a twelve-row `s,basis,sent,p` CSV of externally measured
/// detection statistics.
pub fn read_stats_override(
    path: &Path,
    probs: &ProtocolProbs,
) -> Result<DetectionStats, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| input(format!("cannot read stats override {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| input(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["s", "basis", "sent", "p"] {
        return Err(input(format!(
            "{}: expected header `s,basis,sent,p`",
            path.display()
        )));
    }
    let mut seen: BTreeMap<(u8, u8, u8), f64> = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| input(format!("{} row {row}: {e}", path.display())))?;
        let bad = |what: &str| input(format!("{} row {row}: {what}", path.display()));
        let s: u8 = match record.get(0).map(str::trim) {
            Some("0") => 0,
            Some("1") => 1,
            _ => return Err(bad("s must be 0 or 1")),
        };
        let basis: u8 = match record.get(1).map(str::trim) {
            Some("Z") => 0,
            Some("X") => 1,
            _ => return Err(bad("basis must be Z or X")),
        };
        let sent: u8 = match record.get(2).map(str::trim) {
            Some("0Z") => 0,
            Some("1Z") => 1,
            Some("0X") => 2,
            _ => return Err(bad("sent must be one of 0Z, 1Z, 0X")),
        };
        let p: f64 = record
            .get(3)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("cannot parse p as a number"))?;
        if seen.insert((s, basis, sent), p).is_some() {
            return Err(bad("duplicate (s, basis, sent) combination"));
        }
    }
    if seen.len() != 12 {
        return Err(input(format!(
            "{}: expected 12 rows covering all (s, basis, sent) combinations, found {}",
            path.display(),
            seen.len()
        )));
    }
    let stats = DetectionStats::from_fn(|s, basis, sent| {
        let b = match basis {
            MeasBasis::Z => 0,
            MeasBasis::X => 1,
        };
        let i = match sent {
            SentState::ZeroZ => 0,
            SentState::OneZ => 1,
            SentState::ZeroX => 2,
        };
        seen[&(s, b, i)]
    })
    .map_err(|e| input(format!("{}: {e}", path.display())))?;
    stats
        .validate_against(probs)
        .map_err(|e| input(format!("{}: {e}", path.display())))?;
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Detector resolution shared by the subcommands.
// ---------------------------------------------------------------------------

fn fitted_etas(path: &Path, dark_rate_hz: f64) -> Result<(DetectorFit, [f64; 4]), CliError> {
    let samples = read_count_data(path)?;
    let fit = fit_detector(&samples, dark_rate_hz)?;
    let etas = [
        fit.eta_by_pol[&Polarization::H],
        fit.eta_by_pol[&Polarization::V],
        fit.eta_by_pol[&Polarization::D],
        fit.eta_by_pol[&Polarization::L],
    ];
    Ok((fit, etas))
}

fn resolve_etas(source: &DetectorSource) -> Result<[f64; 4], CliError> {
    match source {
        DetectorSource::Etas(h, v, d, l) => Ok([*h, *v, *d, *l]),
        DetectorSource::CountData { path, dark_rate_hz } => {
            Ok(fitted_etas(path, *dark_rate_hz)?.1)
        }
    }
}

fn resolve_operator(source: &DetectorSource) -> Result<EfficiencyOperator, CliError> {
    let [h, v, d, l] = resolve_etas(source)?;
    let op = tomography(h, v, d, l)?;
    Ok(op.factorized()?)
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

/// Fits both detectors' count-rate data and writes `d0_fit.json` and
/// `d1_fit.json` into `out_dir`.
pub fn cmd_fit_detectors(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| input(format!("cannot create {}: {e}", out_dir.display())))?;
    for (name, source) in [("d0", &cfg.d0), ("d1", &cfg.d1)] {
        let DetectorSource::CountData { path, dark_rate_hz } = source else {
            return Err(input(format!(
                "config field `detectors.{name}`: fit-detectors requires `count_data`"
            )));
        };
        let (fit, _) = fitted_etas(path, *dark_rate_hz)?;
        let json = serde_json::to_string_pretty(&fit).expect("fit serialises");
        write_atomic(&out_dir.join(format!("{name}_fit.json")), json.as_bytes())?;
    }
    Ok(())
}

fn format_gram(op: &EfficiencyOperator) -> String {
    // Six decimal places, [re, im] pairs, row major.
    let g = op.gram();
    let ent = |i: usize, j: usize| format!("[{:.6}, {:.6}]", g[(i, j)].re, g[(i, j)].im);
    format!(
        "[\n      [{}, {}],\n      [{}, {}]\n    ]",
        ent(0, 0),
        ent(0, 1),
        ent(1, 0),
        ent(1, 1)
    )
}

/// Computes both efficiency operators and writes them as JSON with six
/// decimal places.
pub fn cmd_tomography(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mut body = String::from("{\n");
    for (idx, (name, source)) in [("d0", &cfg.d0), ("d1", &cfg.d1)].iter().enumerate() {
        let [h, v, d, l] = resolve_etas(source)?;
        let op = tomography(h, v, d, l)?;
        body.push_str(&format!("  \"{name}\": {{\n    \"gram\": {}\n  }}", format_gram(&op)));
        body.push_str(if idx == 0 { ",\n" } else { "\n" });
    }
    body.push_str("}\n");
    write_atomic(out, body.as_bytes())
}

/// Formats one CSV row of the key-rate sweep.
fn keyrate_row(p: &SweepPoint) -> String {
    let best = p.report.best();
    format!(
        "{},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}\n",
        p.l_km,
        p.eta_ch,
        best.p_z_sift,
        best.e_b,
        best.e_p_u,
        best.r_x_virt_l,
        p.report.analytical.skr,
        p.report.sdp.skr,
    )
}

/// Runs the key-rate sweep (or a single externally supplied statistics
/// point) and writes the CSV, plus an optional SVG plot.
pub fn cmd_keyrate(cfg: &RunConfig, out: &Path, svg_out: Option<&Path>) -> Result<(), CliError> {
    let f0 = resolve_operator(&cfg.d0)?;
    let f1 = resolve_operator(&cfg.d1)?;
    let states = cfg.signal_states();
    let points: Vec<SweepPoint> = if let Some(stats_path) = &cfg.stats_override_path {
        let stats = read_stats_override(stats_path, &cfg.probs)?;
        let report = if cfg.optimize_labeling {
            security::optimize_labeling(&f0, &f1, &states, &cfg.probs, &stats, cfg.f_ec)
        } else {
            security::evaluate_point(&f0, &f1, &states, &cfg.probs, &stats, cfg.f_ec)
        }
        .map_err(|e| compute(e.to_string()))?;
        vec![SweepPoint {
            l_km: cfg.l_min_km,
            eta_ch: channel::channel_transmittance(cfg.alpha_db_per_km, cfg.l_min_km),
            report,
        }]
    } else {
        let sweep_cfg = SweepConfig {
            alpha_db_per_km: cfg.alpha_db_per_km,
            p_dark: cfg.p_dark,
            eve_mode: cfg.eve_mode.clone(),
            l_min_km: cfg.l_min_km,
            l_max_km: cfg.l_max_km,
            l_step_km: cfg.l_step_km,
            f_ec: cfg.f_ec,
            optimize_labeling: cfg.optimize_labeling,
        };
        channel::sweep(&f0, &f1, &states, &cfg.probs, &sweep_cfg)
            .map_err(|e| compute(e.to_string()))?
    };
    for p in &points {
        if p.report.sdp.yield_vanished {
            eprintln!(
                "note: optimised bounds infeasible at {} km; skr_sdp reported as 0",
                p.l_km
            );
        }
    }
    let mut body = String::from("l_km,eta_ch,p_sift,e_b,ep_u,r_virt_l,skr_ab,skr_sdp\n");
    for p in &points {
        body.push_str(&keyrate_row(p));
    }
    write_atomic(out, body.as_bytes())?;
    if let Some(svg_path) = svg_out {
        write_atomic(svg_path, svg::render_rate_plot(&points).as_bytes())?;
    }
    Ok(())
}

/// Result of the proofcheck subcommand: the table rows and overall verdict.
#[derive(Debug, Clone)]
pub struct ProofcheckRun {
    pub rows: Vec<CheckRow>,
    pub passed: bool,
}

impl ProofcheckRun {
    /// Renders the pass/fail table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<28} {:>14}  {}\n", "inequality", "max_violation", "status"));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<28} {:>14.3e}  {}\n",
                row.name,
                row.max_violation,
                if row.max_violation <= VIOLATION_TOL { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "overall: {}\n",
            if self.passed { "pass" } else { "FAIL" }
        ));
        out
    }
}

/// Verifies the operator identities and inequalities for the configured
/// detectors. `corrupt_lambda` deliberately inflates a lower bound to
/// exercise the failure path.
pub fn cmd_proofcheck(cfg: &RunConfig, corrupt_lambda: bool) -> Result<ProofcheckRun, CliError> {
    let f0 = resolve_operator(&cfg.d0)?;
    let f1 = resolve_operator(&cfg.d1)?;
    let g = security::gram_diagonalize(&f0, &f1).map_err(|e| compute(e.to_string()))?;
    let c = security::build_c(&g, &f0).map_err(|e| compute(e.to_string()))?;
    let mut lam: LambdaBounds =
        security::lambda_analytical(&g).map_err(|e| compute(e.to_string()))?;
    if corrupt_lambda {
        lam.lm0 *= 1.5;
    }
    let mut rows = Vec::new();

    // Structural identities first.
    let qz = proofcheck::build_qz(&f0, &f1).map_err(|e| compute(e.to_string()))?;
    let mut povm_defect = 0.0f64;
    for (s, op) in [&f0, &f1].into_iter().enumerate() {
        let proj = crate::linalg::kron(
            &(proofcheck::basis_state_b(s as u8, MeasBasis::Z)
                * proofcheck::basis_state_b(s as u8, MeasBasis::Z).adjoint()),
            &crate::linalg::ceye(f0.dim()),
        );
        let m = qz.matrix.adjoint() * proj * &qz.matrix;
        povm_defect = povm_defect.max(crate::linalg::max_abs_diff(
            &m,
            &proofcheck::povm_element(s as u8, MeasBasis::Z, op),
        ));
    }
    rows.push(CheckRow {
        name: "povm_from_filter".into(),
        max_violation: povm_defect,
    });
    match proofcheck::build_g(&c, &f0, &f1) {
        Ok(gf) => {
            let gtg = gf.matrix.adjoint() * &gf.matrix;
            rows.push(CheckRow {
                name: "filter_validity_g".into(),
                max_violation: (crate::linalg::max_eigenvalue(&gtg) - 1.0).max(0.0),
            });
            let want = crate::linalg::kron(&crate::linalg::ceye(2), c.c());
            rows.push(CheckRow {
                name: "gq_equals_id_times_c".into(),
                max_violation: crate::linalg::max_abs_diff(&(&gf.matrix * &qz.matrix), &want),
            });
        }
        Err(proofcheck::ProofError::InvalidFilter(excess)) => {
            rows.push(CheckRow {
                name: "filter_validity_g".into(),
                max_violation: excess,
            });
        }
        Err(e) => return Err(compute(e.to_string())),
    }

    // Randomised inequality trials.
    let report = proofcheck::run_sandwich_trials(&lam, &c, &f0, &f1, cfg.proofcheck_trials, cfg.seed);
    rows.extend(report.rows);
    let states = cfg.signal_states();
    let ep = proofcheck::run_ep_bound_trials(
        &lam,
        &c,
        &f0,
        &f1,
        states.c01(),
        &cfg.probs,
        cfg.proofcheck_trials,
        cfg.seed.wrapping_add(1),
    );
    rows.extend(ep.rows);

    let passed = rows.iter().all(|r| r.max_violation <= VIOLATION_TOL);
    Ok(ProofcheckRun { rows, passed })
}
