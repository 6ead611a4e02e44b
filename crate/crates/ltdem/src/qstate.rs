//! Qubit states on the XZ plane of the Bloch sphere.
//!
//! All signal states handled by the analysis are pure qubit states with real
//! amplitudes: the axis convention places the two key (Z) states symmetric
//! about the X axis, which makes every overlap real. A complex representation
//! would only invite convention drift.

use thiserror::Error;

/// Tolerance on `amp0^2 + amp1^2 - 1` accepted by [`BlochQubit::new`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Minimum norm of the sum/difference of two Z states before they are
/// considered degenerate for the purpose of building virtual X states.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Errors produced by state construction and combination.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QStateError {
    /// Amplitudes do not form a unit vector.
    #[error("state is not normalized: amp0^2 + amp1^2 = {0}")]
    NotNormalized(f64),
    /// The two Z states are (nearly) parallel or anti-parallel.
    #[error("Z states are degenerate: combination norm {0} < {DEGENERACY_TOL}")]
    DegenerateStates(f64),
    /// A probability argument lies outside [0, 1].
    #[error("probability {name} = {value} outside [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
}

/// Measurement basis at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasBasis {
    Z,
    X,
}

/// A pure qubit state `amp0 |0_Z> + amp1 |1_Z>` with real amplitudes.
///
/// The Bloch vector is `(V_x, 0, V_z)` with `V_x = 2 amp0 amp1` and
/// `V_z = amp0^2 - amp1^2`; the Y component is identically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochQubit {
    amp0: f64,
    amp1: f64,
}

impl BlochQubit {
    /// Builds a state from amplitudes, checking normalization.
    pub fn new(amp0: f64, amp1: f64) -> Result<Self, QStateError> {
        let norm2 = amp0 * amp0 + amp1 * amp1;
        if !norm2.is_finite() || (norm2 - 1.0).abs() > NORMALIZATION_TOL {
            return Err(QStateError::NotNormalized(norm2));
        }
        Ok(Self { amp0, amp1 })
    }

    /// State at polar angle `angle` from the Z axis on the XZ plane:
    /// `cos(angle/2) |0_Z> + sin(angle/2) |1_Z>`.
    pub fn from_plane_angle(angle: f64) -> Self {
        Self {
            amp0: (angle / 2.0).cos(),
            amp1: (angle / 2.0).sin(),
        }
    }

    pub fn zero_z() -> Self {
        Self { amp0: 1.0, amp1: 0.0 }
    }

    pub fn one_z() -> Self {
        Self { amp0: 0.0, amp1: 1.0 }
    }

    pub fn zero_x() -> Self {
        Self::from_plane_angle(std::f64::consts::FRAC_PI_2)
    }

    pub fn one_x() -> Self {
        Self {
            amp0: std::f64::consts::FRAC_1_SQRT_2,
            amp1: -std::f64::consts::FRAC_1_SQRT_2,
        }
    }

    pub fn amp0(&self) -> f64 {
        self.amp0
    }

    pub fn amp1(&self) -> f64 {
        self.amp1
    }

    /// X component of the Bloch vector.
    pub fn bloch_x(&self) -> f64 {
        2.0 * self.amp0 * self.amp1
    }

    /// Z component of the Bloch vector.
    pub fn bloch_z(&self) -> f64 {
        self.amp0 * self.amp0 - self.amp1 * self.amp1
    }

    /// Density matrix `|phi><phi|` as a real 2x2 array, row major.
    pub fn density(&self) -> [[f64; 2]; 2] {
        [
            [self.amp0 * self.amp0, self.amp0 * self.amp1],
            [self.amp1 * self.amp0, self.amp1 * self.amp1],
        ]
    }

    /// Squared projection `|<phi | s_basis>|^2` onto an ideal basis state.
    pub fn ideal_projection(&self, s: u8, basis: MeasBasis) -> f64 {
        debug_assert!(s <= 1);
        let amp = match (basis, s) {
            (MeasBasis::Z, 0) => self.amp0,
            (MeasBasis::Z, _) => self.amp1,
            (MeasBasis::X, 0) => (self.amp0 + self.amp1) * std::f64::consts::FRAC_1_SQRT_2,
            (MeasBasis::X, _) => (self.amp0 - self.amp1) * std::f64::consts::FRAC_1_SQRT_2,
        };
        amp * amp
    }

    /// The state with Bloch vector `(-V_x, 0, -V_z)`, i.e. the orthogonal
    /// state on the same plane. Used when the two detectors swap roles.
    pub fn antipode(&self) -> Self {
        Self {
            amp0: -self.amp1,
            amp1: self.amp0,
        }
    }
}

/// Key state emitted for bit `a` with preparation flaw angle `theta`:
/// `cos((theta - a pi)/2) |0_Z> + (-1)^a sin((theta - a pi)/2) |1_Z>`.
///
/// `theta = 0` reproduces the ideal Z eigenstates; the two states for a
/// common `theta` are symmetric about the X axis and their overlap is
/// `sin(theta)`.
pub fn flawed_z_state(a: u8, theta: f64) -> BlochQubit {
    assert!(a <= 1, "bit value must be 0 or 1");
    debug_assert!(theta > -std::f64::consts::PI && theta <= std::f64::consts::PI);
    let half = (theta - f64::from(a) * std::f64::consts::PI) / 2.0;
    let sign = if a == 0 { 1.0 } else { -1.0 };
    BlochQubit {
        amp0: half.cos(),
        amp1: sign * half.sin(),
    }
}

/// Inner product `<s1|s2>`, exactly real for XZ-plane states.
pub fn overlap(s1: &BlochQubit, s2: &BlochQubit) -> f64 {
    s1.amp0 * s2.amp0 + s1.amp1 * s2.amp1
}

/// Virtual X states: the normalized balanced superpositions
/// `(|phi0Z> +- |phi1Z>) / ||...||`, together with the probability
/// `(1 + <phi0Z|phi1Z>) / 2` of the `+` branch in the virtual picture.
pub fn virtual_x_states(
    phi0z: &BlochQubit,
    phi1z: &BlochQubit,
) -> Result<(BlochQubit, BlochQubit, f64), QStateError> {
    let sum = (phi0z.amp0 + phi1z.amp0, phi0z.amp1 + phi1z.amp1);
    let diff = (phi0z.amp0 - phi1z.amp0, phi0z.amp1 - phi1z.amp1);
    let nsum = (sum.0 * sum.0 + sum.1 * sum.1).sqrt();
    let ndiff = (diff.0 * diff.0 + diff.1 * diff.1).sqrt();
    if ndiff < DEGENERACY_TOL {
        return Err(QStateError::DegenerateStates(ndiff));
    }
    if nsum < DEGENERACY_TOL {
        return Err(QStateError::DegenerateStates(nsum));
    }
    let plus = BlochQubit {
        amp0: sum.0 / nsum,
        amp1: sum.1 / nsum,
    };
    let minus = BlochQubit {
        amp0: diff.0 / ndiff,
        amp1: diff.1 / ndiff,
    };
    let p0x_virt = (1.0 + overlap(phi0z, phi1z)) / 2.0;
    Ok((plus, minus, p0x_virt))
}

/// Coefficients of the density-matrix expansion
/// `|phi><phi| = (1/2) sum_w W_w sigma_w` over `{1, X, Y, Z}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliVector {
    pub w_id: f64,
    pub w_x: f64,
    pub w_y: f64,
    pub w_z: f64,
}

/// Pauli decomposition of a pure XZ-plane state: `W = (1, V_x, 0, V_z)`.
pub fn pauli_decomposition(s: &BlochQubit) -> PauliVector {
    PauliVector {
        w_id: 1.0,
        w_x: s.bloch_x(),
        w_y: 0.0,
        w_z: s.bloch_z(),
    }
}

/// The three signal states of the protocol: two key (Z) states and the
/// trial (X) state used to probe the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalStates {
    pub phi0z: BlochQubit,
    pub phi1z: BlochQubit,
    pub phi0x: BlochQubit,
}

impl SignalStates {
    /// Symmetric key states at flaw angle `theta`, trial state at
    /// `phi0x_angle` (pi/2 gives the ideal `|0_X>`).
    pub fn from_theta(theta: f64, phi0x_angle: f64) -> Self {
        Self {
            phi0z: flawed_z_state(0, theta),
            phi1z: flawed_z_state(1, theta),
            phi0x: BlochQubit::from_plane_angle(phi0x_angle),
        }
    }

    /// Same as [`SignalStates::from_theta`] but parameterised by the key
    /// state overlap `c01 = sin(theta)`.
    pub fn from_overlap(c01: f64, phi0x_angle: f64) -> Result<Self, QStateError> {
        if c01.is_nan() || c01.abs() >= 1.0 {
            return Err(QStateError::DegenerateStates(1.0 - c01.abs()));
        }
        Ok(Self::from_theta(c01.asin(), phi0x_angle))
    }

    /// Overlap `<phi0Z|phi1Z>` of the key states.
    pub fn c01(&self) -> f64 {
        overlap(&self.phi0z, &self.phi1z)
    }

    /// The same physical states described with the two detector labels
    /// exchanged: outcome bits flip, which maps every state to its antipode
    /// and swaps the roles of the two key states.
    pub fn relabeled(&self) -> Self {
        Self {
            phi0z: self.phi1z.antipode(),
            phi1z: self.phi0z.antipode(),
            phi0x: self.phi0x.antipode(),
        }
    }

    /// The states in the order used by the transfer-coefficient inversion.
    pub fn as_array(&self) -> [&BlochQubit; 3] {
        [&self.phi0z, &self.phi1z, &self.phi0x]
    }
}

/// Basis-choice probabilities of the protocol.
///
/// `p3 = p4 = p_za * p_xb / 2` and `p5 = p_xa * p_xb` are the joint
/// probabilities of the three configurations used to probe the channel with
/// X-basis measurements (key states and trial state respectively).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolProbs {
    pub p_za: f64,
    pub p_xa: f64,
    pub p_zb: f64,
    pub p_xb: f64,
}

impl ProtocolProbs {
    /// Builds from the Z-basis selection probabilities of the two parties.
    pub fn new(p_za: f64, p_zb: f64) -> Result<Self, QStateError> {
        for (name, value) in [("p_za", p_za), ("p_zb", p_zb)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(QStateError::InvalidProbability { name, value });
            }
        }
        Ok(Self {
            p_za,
            p_xa: 1.0 - p_za,
            p_zb,
            p_xb: 1.0 - p_zb,
        })
    }

    /// The symmetric choice of the reference simulation: each of the three
    /// states is sent with probability 1/3 and Bob picks Z with 2/3.
    pub fn symmetric_thirds() -> Self {
        Self::new(2.0 / 3.0, 2.0 / 3.0).expect("valid constants")
    }

    pub fn p3(&self) -> f64 {
        self.p_za * self.p_xb / 2.0
    }

    pub fn p4(&self) -> f64 {
        self.p3()
    }

    pub fn p5(&self) -> f64 {
        self.p_xa * self.p_xb
    }

    /// Probability that Alice sends a given state in the actual protocol.
    pub fn p_send(&self, sent: crate::channel::SentState) -> f64 {
        match sent {
            crate::channel::SentState::ZeroZ | crate::channel::SentState::OneZ => self.p_za / 2.0,
            crate::channel::SentState::ZeroX => self.p_xa,
        }
    }
}
