use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Which conjugate variable the passivity controller may modify at a port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortRole {
    /// Channel outputs an effort (leader side): a series damper on the
    /// torque fed back to the arm.
    Impedance,
    /// Channel outputs a flow (follower side): a parallel damper on the
    /// commanded velocity.
    Admittance,
}

/// Energy bookkeeping of one channel port.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub role: PortRole,
    /// Cumulative energy that entered the channel here, J.
    pub e_in: f64,
    /// Cumulative energy that left the channel here, J.
    pub e_out: f64,
    /// Latest input energy reported by the opposite port, J.
    pub e_in_remote: f64,
    /// Power of the last observed sample, W (positive into the channel).
    pub p_obs: f64,
    /// Damper coefficient applied on the last step.
    pub alpha: f64,
    /// Total energy removed by the damper, J.
    pub dissipated: f64,
    /// Number of steps on which the damper was active.
    pub activations: u64,
}

impl EnergyLedger {
    pub fn new(role: PortRole) -> Self {
        Self {
            role,
            e_in: 0.0,
            e_out: 0.0,
            e_in_remote: 0.0,
            p_obs: 0.0,
            alpha: 0.0,
            dissipated: 0.0,
            activations: 0,
        }
    }

    /// Records a received energy report; reports never decrease.
    pub fn receive(&mut self, e_in_remote: f64) {
        self.e_in_remote = self.e_in_remote.max(e_in_remote);
    }

    /// Passivity margin `E_in_remote - E_out`, J.
    pub fn margin(&self) -> f64 {
        self.e_in_remote - self.e_out
    }
}

/// Power entering the channel at a port. At the impedance port the effort
/// is the torque the channel applies to the arm and the flow the arm
/// velocity; at the admittance port the effort is the reaction torque from
/// the arm and the flow the commanded velocity.
pub fn port_power(role: PortRole, effort: &DVector<f64>, flow: &DVector<f64>) -> f64 {
    match role {
        PortRole::Impedance => -effort.dot(flow),
        PortRole::Admittance => effort.dot(flow),
    }
}

/// Energy observer: accumulates one sample into the in/out totals.
pub fn tdpa_observe(ledger: &mut EnergyLedger, effort: &DVector<f64>, flow: &DVector<f64>, dt: f64) {
    let p = port_power(ledger.role, effort, flow);
    ledger.p_obs = p;
    if p > 0.0 {
        ledger.e_in += p * dt;
    } else {
        ledger.e_out -= p * dt;
    }
}

/// Passivity controller. When the output energy exceeds what the other
/// port reports as input, modifies the signal this port outputs so that the
/// excess is dissipated on this step. Returns the (possibly) modified
/// effort (impedance role) or flow (admittance role).
pub fn tdpa_damp(
    ledger: &mut EnergyLedger,
    effort: &DVector<f64>,
    flow: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let excess = ledger.e_out - ledger.e_in_remote;
    ledger.alpha = 0.0;
    let (output, conjugate) = match ledger.role {
        PortRole::Impedance => (effort, flow),
        PortRole::Admittance => (flow, effort),
    };
    if excess <= 0.0 {
        return output.clone();
    }
    let norm2 = conjugate.norm_squared();
    if norm2 == 0.0 || dt <= 0.0 {
        return output.clone();
    }
    let alpha = excess / (dt * norm2);
    ledger.alpha = alpha;
    ledger.dissipated += excess;
    ledger.activations += 1;
    ledger.e_out = ledger.e_in_remote;
    match ledger.role {
        PortRole::Impedance => effort - flow * alpha,
        PortRole::Admittance => flow + effort * alpha,
    }
}
