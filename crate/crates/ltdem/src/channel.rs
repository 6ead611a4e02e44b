//! Asymptotic detection statistics for a lossy channel with dark counts and
//! a polarisation-steering eavesdropper.
//!
//! The module produces the exact asymptotic joint probabilities rather than
//! Monte Carlo counts: in the asymptotic security setting sampled counts
//! would only add noise on top of the quantities of interest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::EfficiencyOperator;
use crate::linalg::CVec;
use crate::qstate::{MeasBasis, ProtocolProbs, SignalStates};
use crate::security::{self, PointReport, SecurityError};

/// Errors from statistics construction and ingestion.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("probability {value} for outcome {outcome} out of range [0, 1]")]
    ProbabilityOutOfRange { outcome: String, value: f64 },
    #[error("summed detection probabilities {sum} for sent state {sent} exceed the sending probability {bound}")]
    ExceedsSendingProbability { sent: String, sum: f64, bound: f64 },
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
}

/// Which of the three signal states Alice sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SentState {
    ZeroZ,
    OneZ,
    ZeroX,
}

impl SentState {
    pub const ALL: [SentState; 3] = [SentState::ZeroZ, SentState::OneZ, SentState::ZeroX];

    fn index(self) -> usize {
        match self {
            SentState::ZeroZ => 0,
            SentState::OneZ => 1,
            SentState::ZeroX => 2,
        }
    }
}

/// The twelve joint probabilities `p_{s_beta, i}` of Bob announcing outcome
/// `s` in basis `beta` while Alice sent state `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionStats {
    // Rows: outcome (s, basis) with Z0, Z1, X0, X1; columns: sent state.
    p: [[f64; 3]; 4],
}

fn outcome_index(s: u8, basis: MeasBasis) -> usize {
    debug_assert!(s <= 1);
    match basis {
        MeasBasis::Z => s as usize,
        MeasBasis::X => 2 + s as usize,
    }
}

impl DetectionStats {
    /// Builds the table from a closure over `(s, basis, sent)`, validating
    /// that every entry is a probability.
    pub fn from_fn(
        f: impl Fn(u8, MeasBasis, SentState) -> f64,
    ) -> Result<Self, ChannelError> {
        let mut p = [[0.0; 3]; 4];
        for s in 0..2u8 {
            for basis in [MeasBasis::Z, MeasBasis::X] {
                for sent in SentState::ALL {
                    let value = f(s, basis, sent);
                    if !(0.0..=1.0).contains(&value) {
                        return Err(ChannelError::ProbabilityOutOfRange {
                            outcome: format!("p[{s}_{basis:?},{sent:?}]"),
                            value,
                        });
                    }
                    p[outcome_index(s, basis)][sent.index()] = value;
                }
            }
        }
        Ok(Self { p })
    }

    pub fn get(&self, s: u8, basis: MeasBasis, sent: SentState) -> f64 {
        self.p[outcome_index(s, basis)][sent.index()]
    }

    /// Checks that, per sent state, the total detection probability does not
    /// exceed the probability of that state being sent at all.
    pub fn validate_against(&self, probs: &ProtocolProbs) -> Result<(), ChannelError> {
        for sent in SentState::ALL {
            let bound = probs.p_send(sent);
            let sum: f64 = (0..2u8)
                .flat_map(|s| {
                    [MeasBasis::Z, MeasBasis::X]
                        .into_iter()
                        .map(move |b| self.get(s, b, sent))
                })
                .sum();
            if sum > bound + 1e-12 {
                return Err(ChannelError::ExceedsSendingProbability {
                    sent: format!("{sent:?}"),
                    sum,
                    bound,
                });
            }
        }
        Ok(())
    }

    /// The same measured data described with the detector labels exchanged:
    /// outcomes flip (`s -> 1-s`) and, to keep the sifted-bit convention,
    /// the two key states swap labels as well.
    pub fn relabeled(&self) -> Self {
        let mut p = [[0.0; 3]; 4];
        for s in 0..2u8 {
            for basis in [MeasBasis::Z, MeasBasis::X] {
                for sent in SentState::ALL {
                    let src_sent = match sent {
                        SentState::ZeroZ => SentState::OneZ,
                        SentState::OneZ => SentState::ZeroZ,
                        SentState::ZeroX => SentState::ZeroX,
                    };
                    p[outcome_index(s, basis)][sent.index()] =
                        self.get(1 - s, basis, src_sent);
                }
            }
        }
        Self { p }
    }
}

/// How the adversary prepares the mode (polarisation) state reaching Bob.
#[derive(Debug, Clone, PartialEq)]
pub enum EveMode {
    /// Steer every pulse into the eigenstate of detector D1's efficiency
    /// operator with the smallest eigenvalue.
    MinEigD1,
    /// A fixed, explicitly supplied mode state.
    Explicit(CVec),
}

/// Channel and attack configuration for one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub alpha_db_per_km: f64,
    pub length_km: f64,
    pub p_dark: f64,
    pub eve_mode: EveMode,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.alpha_db_per_km < 0.0 {
            return Err(ChannelError::InvalidConfig(
                "alpha_db_per_km must be >= 0".into(),
            ));
        }
        if self.length_km < 0.0 {
            return Err(ChannelError::InvalidConfig("length_km must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.p_dark) {
            return Err(ChannelError::InvalidConfig(
                "p_dark must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Transmittance of `length` km of fibre with attenuation `alpha` dB/km:
/// `10^(-alpha L / 10)`.
pub fn channel_transmittance(alpha_db_per_km: f64, length_km: f64) -> f64 {
    debug_assert!(alpha_db_per_km >= 0.0 && length_km >= 0.0);
    10f64.powf(-alpha_db_per_km * length_km / 10.0)
}

/// Click probabilities `(eta_0, eta_1)` of the two detectors for the mode
/// state selected by the attack.
pub fn eve_attack_efficiencies(
    f0: &EfficiencyOperator,
    f1: &EfficiencyOperator,
    cfg: &ChannelConfig,
) -> (f64, f64) {
    let sigma = match &cfg.eve_mode {
        EveMode::MinEigD1 => f1.min_eigen_state().0,
        EveMode::Explicit(state) => state.clone(),
    };
    (f0.efficiency_for(&sigma), f1.efficiency_for(&sigma))
}

/// Joint detection probabilities for the scenario in which the adversary
/// fixes the mode state (hence scalar efficiencies `eta_s`) and the qubit
/// goes through a lossy channel with dark counts:
///
/// `p_{s_beta,i} = p_i p_beta [ eta_ch |<phi_i|s_beta>|^2 eta_s (1 - pd/2)
///                 + pd (1 - eta_ch |<phi_i|s_beta>|^2 eta_s)(1 - pd/2) ]`
///
/// Double clicks are already folded in by the `(1 - pd/2)` factors through
/// the random single-click assignment convention.
pub fn detection_probabilities(
    states: &SignalStates,
    eta0: f64,
    eta1: f64,
    cfg: &ChannelConfig,
    probs: &ProtocolProbs,
) -> Result<DetectionStats, ChannelError> {
    cfg.validate()?;
    let eta_ch = channel_transmittance(cfg.alpha_db_per_km, cfg.length_km);
    let pd = cfg.p_dark;
    DetectionStats::from_fn(|s, basis, sent| {
        let phi = match sent {
            SentState::ZeroZ => &states.phi0z,
            SentState::OneZ => &states.phi1z,
            SentState::ZeroX => &states.phi0x,
        };
        let p_basis = match basis {
            MeasBasis::Z => probs.p_zb,
            MeasBasis::X => probs.p_xb,
        };
        let eta_s = if s == 0 { eta0 } else { eta1 };
        let y = eta_ch * phi.ideal_projection(s, basis) * eta_s;
        probs.p_send(sent) * p_basis * (1.0 - pd / 2.0) * (y + pd * (1.0 - y))
    })
}

/// One evaluated distance of a key-rate sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub l_km: f64,
    pub eta_ch: f64,
    pub report: PointReport,
}

/// Sweep configuration: channel parameters plus the distance grid.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub alpha_db_per_km: f64,
    pub p_dark: f64,
    pub eve_mode: EveMode,
    pub l_min_km: f64,
    pub l_max_km: f64,
    pub l_step_km: f64,
    pub f_ec: f64,
    /// Evaluate both detector labelings and keep the better one per
    /// lambda source.
    pub optimize_labeling: bool,
}

/// Evaluates the full pipeline over a range of channel lengths.
///
/// Returns one point per distance `l_min, l_min + step, ..., <= l_max`
/// (empty for an empty range).
pub fn sweep(
    f0: &EfficiencyOperator,
    f1: &EfficiencyOperator,
    states: &SignalStates,
    probs: &ProtocolProbs,
    cfg: &SweepConfig,
) -> Result<Vec<SweepPoint>, SweepError> {
    if cfg.l_step_km.is_nan() || cfg.l_step_km <= 0.0 {
        return Err(ChannelError::InvalidConfig("l_step_km must be > 0".into()).into());
    }
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let l = cfg.l_min_km + cfg.l_step_km * k as f64;
        if l > cfg.l_max_km + 1e-9 * cfg.l_step_km {
            break;
        }
        let point_cfg = ChannelConfig {
            alpha_db_per_km: cfg.alpha_db_per_km,
            length_km: l,
            p_dark: cfg.p_dark,
            eve_mode: cfg.eve_mode.clone(),
        };
        let (eta0, eta1) = eve_attack_efficiencies(f0, f1, &point_cfg);
        let stats = detection_probabilities(states, eta0, eta1, &point_cfg, probs)?;
        let report = if cfg.optimize_labeling {
            security::optimize_labeling(f0, f1, states, probs, &stats, cfg.f_ec)?
        } else {
            security::evaluate_point(f0, f1, states, probs, &stats, cfg.f_ec)?
        };
        out.push(SweepPoint {
            l_km: l,
            eta_ch: channel_transmittance(cfg.alpha_db_per_km, l),
            report,
        });
        k += 1;
    }
    Ok(out)
}

/// Errors surfaced by a sweep: either from statistics generation or from
/// the security pipeline itself.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Security(#[from] SecurityError),
}
