use nalgebra::DVector;

use super::codec::{
    decode_follower_fb, decode_leader_cmd, encode_follower_fb, encode_leader_cmd, FollowerFeedbackPacket,
    LeaderCommandPacket,
};
use super::hold::StaleHold;
use super::impair::{ChannelConfig, ImpairedLink};
use super::tdpa::{tdpa_damp, tdpa_observe, EnergyLedger, PortRole};
use super::ChannelError;
use crate::controllers::AutonomyLevel;
use crate::environment::Stage;

/// Seconds to whole microseconds.
pub fn to_micros(t: f64) -> u64 {
    (t * 1e6).round().max(0.0) as u64
}

/// Counters for one session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub commands_sent: u64,
    pub commands_received: u64,
    pub feedback_sent: u64,
    pub feedback_received: u64,
    /// Packets that failed to decode or arrived out of order.
    pub discarded: u64,
}

/// Command as seen by the follower controller on this tick.
#[derive(Clone, Debug, PartialEq)]
pub struct FollowerCommand {
    pub q_d: DVector<f64>,
    pub dq_d: DVector<f64>,
    /// False until the first command arrives.
    pub valid: bool,
}

/// Feedback as seen by the leader on this tick.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaderFeedback {
    pub tau: DVector<f64>,
    pub eta: AutonomyLevel,
    pub stage: Stage,
    pub f_ext: [f64; 6],
}

/// Both directions of the leader/follower channel with passivity control
/// on both ports.
///
/// Per tick the caller runs [`leader_send`](Self::leader_send),
/// [`follower_receive`](Self::follower_receive), steps the follower,
/// [`follower_send`](Self::follower_send) and finally
/// [`leader_receive`](Self::leader_receive) before stepping the leader.
#[derive(Clone, Debug)]
pub struct BilateralChannel {
    n: usize,
    tdpa: bool,
    cmd: ImpairedLink<Vec<u8>>,
    fb: ImpairedLink<Vec<u8>>,
    pub leader_ledger: EnergyLedger,
    pub follower_ledger: EnergyLedger,
    leader_seq: u32,
    follower_seq: u32,
    last_cmd_seq: Option<u32>,
    last_fb_seq: Option<u32>,
    q_hold: Option<DVector<f64>>,
    dq_hold: StaleHold,
    tau_hold: StaleHold,
    /// Feedback torque the leader applied on the previous tick.
    tau_applied: DVector<f64>,
    /// Feedback torque the follower produced on the previous tick.
    tau_produced: DVector<f64>,
    /// Position offset accumulated by follower-side damping.
    drift: DVector<f64>,
    eta: AutonomyLevel,
    stage: Stage,
    f_ext: [f64; 6],
    pub stats: LinkStats,
}

impl BilateralChannel {
    /// `forward` impairs leader to follower, `backward` the reverse path.
    pub fn new(n: usize, forward: ChannelConfig, backward: ChannelConfig, tdpa: bool) -> Result<Self, ChannelError> {
        forward.validate()?;
        backward.validate()?;
        Ok(Self {
            n,
            tdpa,
            cmd: ImpairedLink::new(forward).without_log(),
            fb: ImpairedLink::new(backward).without_log(),
            leader_ledger: EnergyLedger::new(PortRole::Impedance),
            follower_ledger: EnergyLedger::new(PortRole::Admittance),
            leader_seq: 0,
            follower_seq: 0,
            last_cmd_seq: None,
            last_fb_seq: None,
            q_hold: None,
            dq_hold: StaleHold::new(n),
            tau_hold: StaleHold::new(n),
            tau_applied: DVector::zeros(n),
            tau_produced: DVector::zeros(n),
            drift: DVector::zeros(n),
            eta: AutonomyLevel::Manual,
            stage: Stage::PositionGuiding,
            f_ext: [0.0; 6],
            stats: LinkStats::default(),
        })
    }

    /// Same impairments in both directions; the reverse path uses the next
    /// seed.
    pub fn symmetric(n: usize, cfg: ChannelConfig, tdpa: bool) -> Result<Self, ChannelError> {
        let back = ChannelConfig {
            seed: cfg.seed.wrapping_add(1),
            ..cfg
        };
        Self::new(n, cfg, back, tdpa)
    }

    pub fn tdpa_enabled(&self) -> bool {
        self.tdpa
    }

    pub fn dof(&self) -> usize {
        self.n
    }

    /// Observes the leader port with the torque applied last tick and the
    /// current leader velocity, then sends the command.
    pub fn leader_send(&mut self, now: f64, dt: f64, q: &DVector<f64>, dq: &DVector<f64>) -> Result<(), ChannelError> {
        if self.tdpa {
            tdpa_observe(&mut self.leader_ledger, &self.tau_applied, dq, dt);
        }
        self.leader_seq = self.leader_seq.wrapping_add(1);
        let pkt = LeaderCommandPacket {
            seq: self.leader_seq,
            t_send: to_micros(now),
            q_d: q.as_slice().to_vec(),
            dq_d: dq.as_slice().to_vec(),
            e_in_l: self.leader_ledger.e_in,
        };
        let bytes = encode_leader_cmd(&pkt)?;
        self.cmd.send(to_micros(now), bytes);
        self.stats.commands_sent += 1;
        Ok(())
    }

    /// Drains the command path and returns the (held, passivated) command.
    pub fn follower_receive(&mut self, now: f64, dt: f64) -> FollowerCommand {
        for bytes in self.cmd.poll(to_micros(now)) {
            match decode_leader_cmd(&bytes) {
                Ok(p) if p.q_d.len() == self.n && self.last_cmd_seq.is_none_or(|s| p.seq > s) => {
                    self.last_cmd_seq = Some(p.seq);
                    self.q_hold = Some(DVector::from_vec(p.q_d));
                    self.dq_hold.update(DVector::from_vec(p.dq_d), now);
                    self.follower_ledger.receive(p.e_in_l);
                    self.stats.commands_received += 1;
                }
                Ok(_) => self.stats.discarded += 1,
                Err(e) => {
                    log::warn!("dropping command packet: {e}");
                    self.stats.discarded += 1;
                }
            }
        }
        let Some(q) = &self.q_hold else {
            return FollowerCommand {
                q_d: DVector::zeros(self.n),
                dq_d: DVector::zeros(self.n),
                valid: false,
            };
        };
        let mut dq = self.dq_hold.get(now);
        if self.tdpa {
            tdpa_observe(&mut self.follower_ledger, &self.tau_produced, &dq, dt);
            let damped = tdpa_damp(&mut self.follower_ledger, &self.tau_produced, &dq, dt);
            if self.follower_ledger.alpha > 0.0 {
                self.drift += (&damped - &dq) * dt;
            }
            dq = damped;
        }
        FollowerCommand {
            q_d: q + &self.drift,
            dq_d: dq,
            valid: true,
        }
    }

    /// Sends the follower's feedback torque and diagnostics.
    pub fn follower_send(
        &mut self,
        now: f64,
        tau: &DVector<f64>,
        f_ext: [f64; 6],
        eta: AutonomyLevel,
        stage: Stage,
    ) -> Result<(), ChannelError> {
        self.tau_produced.copy_from(tau);
        self.follower_seq = self.follower_seq.wrapping_add(1);
        let pkt = FollowerFeedbackPacket {
            seq: self.follower_seq,
            t_send: to_micros(now),
            tau_d_f: tau.as_slice().to_vec(),
            f_ext_f: f_ext,
            eta,
            stage,
            e_in_f: self.follower_ledger.e_in,
        };
        let bytes = encode_follower_fb(&pkt)?;
        self.fb.send(to_micros(now), bytes);
        self.stats.feedback_sent += 1;
        Ok(())
    }

    /// Drains the feedback path and returns the torque the leader applies
    /// this tick. `dq` is the current leader velocity.
    pub fn leader_receive(&mut self, now: f64, dt: f64, dq: &DVector<f64>) -> LeaderFeedback {
        for bytes in self.fb.poll(to_micros(now)) {
            self.accept_feedback(&bytes, now);
        }
        let mut tau = self.tau_hold.get(now);
        if self.tdpa {
            tau = tdpa_damp(&mut self.leader_ledger, &tau, dq, dt);
        }
        self.tau_applied.copy_from(&tau);
        LeaderFeedback {
            tau,
            eta: self.eta,
            stage: self.stage,
            f_ext: self.f_ext,
        }
    }

    /// Injects raw feedback bytes as if they had arrived from the follower.
    pub fn inject_feedback(&mut self, bytes: &[u8], now: f64) {
        self.accept_feedback(bytes, now);
    }

    fn accept_feedback(&mut self, bytes: &[u8], now: f64) {
        match decode_follower_fb(bytes) {
            Ok(p) if p.tau_d_f.len() == self.n && self.last_fb_seq.is_none_or(|s| p.seq > s) => {
                self.last_fb_seq = Some(p.seq);
                self.tau_hold.update(DVector::from_vec(p.tau_d_f), now);
                self.leader_ledger.receive(p.e_in_f);
                self.eta = p.eta;
                self.stage = p.stage;
                self.f_ext = p.f_ext_f;
                self.stats.feedback_received += 1;
            }
            Ok(_) => self.stats.discarded += 1,
            Err(e) => {
                log::warn!("dropping feedback packet: {e}");
                self.stats.discarded += 1;
            }
        }
    }

    /// Reserves a feedback sequence number, for building injected packets.
    pub fn take_feedback_seq(&mut self) -> u32 {
        self.follower_seq = self.follower_seq.wrapping_add(1);
        self.follower_seq
    }
}
