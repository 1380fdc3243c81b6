use std::path::PathBuf;

use nalgebra::Vector3;

use teleosim_core::environment::{Stage, TaskId, TrialOutcome};
use teleosim_core::harness::{write_dataset, OperatorSelect, Session, SessionConfig, TaskSelect};
use teleosim_core::operators::{HumanCommand, TeleopMode};

use crate::protocol::{
    ClientMessage, ErrorCode, HoleView, LifecycleState, PegView, ServerMessage, StateSnapshot, TrialFiles,
    VelocityLimits,
};
use crate::ServiceError;

/// Latest operator input, composed into one velocity command per tick.
#[derive(Clone, Copy, Debug, Default)]
struct Input {
    linear: [f64; 3],
    angular: [f64; 3],
    yaw_rate: f64,
    /// Trial time of the newest command.
    t: Option<f64>,
    t_client: Option<f64>,
}

/// Idle / Running / Done state machine around one live session. Pure: time
/// only advances through `tick`.
pub struct Lifecycle {
    base: SessionConfig,
    out_dir: Option<PathBuf>,
    limits: VelocityLimits,
    state: LifecycleState,
    session: Session,
    /// State shown while Done.
    last: Option<StateSnapshot>,
    input: Input,
    ticks: u64,
    seq: u64,
    next_seed: u64,
    trials: u64,
}

impl Lifecycle {
    /// `base` sets task, mode, seed and everything else for the first
    /// trial; the operator is always the human adapter.
    pub fn new(mut base: SessionConfig, out_dir: Option<PathBuf>, limits: VelocityLimits) -> Result<Self, ServiceError> {
        base.operator = OperatorSelect::Named("human".into());
        let session = Session::new(base.clone())?;
        Ok(Self {
            next_seed: base.seed,
            base,
            out_dir,
            limits,
            state: LifecycleState::Idle,
            session,
            last: None,
            input: Input::default(),
            ticks: 0,
            seq: 0,
            trials: 0,
        })
    }

    pub fn state(&self) -> LifecycleState {
        self.state
    }

    pub fn mode(&self) -> TeleopMode {
        self.base.mode
    }

    pub fn task(&self) -> TaskId {
        self.base.task.id()
    }

    pub fn limits(&self) -> VelocityLimits {
        self.limits
    }

    pub fn dt(&self) -> f64 {
        self.base.dt
    }

    /// Service time, s.
    pub fn time(&self) -> f64 {
        self.ticks as f64 * self.base.dt
    }

    /// Trials started so far.
    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Applies one console message and returns the frames it produces.
    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::EeVelocity {
                linear,
                angular,
                t_client,
            } => {
                if linear.iter().chain(&angular).any(|v| !v.is_finite()) {
                    return vec![ServerMessage::error(ErrorCode::InvalidCommand, "non-finite velocity")];
                }
                let (l, a, _) = self.limits.clamp(linear, angular);
                self.input.linear = l;
                self.input.angular = a;
                self.touch(t_client);
                vec![]
            }
            ClientMessage::GripYawRate { rate, t_client } => {
                if !rate.is_finite() {
                    return vec![ServerMessage::error(ErrorCode::InvalidCommand, "non-finite yaw rate")];
                }
                self.input.yaw_rate = self.limits.clamp_rate(rate);
                self.touch(t_client);
                vec![]
            }
            ClientMessage::SetMode { mode } => {
                if self.state == LifecycleState::Running {
                    return vec![ServerMessage::error(ErrorCode::InvalidState, "cannot change mode during a trial")];
                }
                self.base.mode = mode;
                if self.state == LifecycleState::Idle {
                    if let Err(e) = self.rebuild_preview() {
                        return vec![e.frame()];
                    }
                }
                vec![ServerMessage::ModeChanged { mode }]
            }
            ClientMessage::StartTrial { task, seed } => match self.start(task, seed) {
                Ok(m) => vec![m],
                Err(e) => vec![e.frame()],
            },
            ClientMessage::Abort => {
                if self.state != LifecycleState::Running {
                    return vec![ServerMessage::error(ErrorCode::InvalidState, "no trial is running")];
                }
                self.session.abort();
                self.finish()
            }
            ClientMessage::Heartbeat { t_client } => {
                if t_client.is_some() {
                    self.input.t_client = t_client;
                }
                vec![]
            }
        }
    }

    fn touch(&mut self, t_client: Option<f64>) {
        self.input.t = Some(self.session.time());
        if t_client.is_some() {
            self.input.t_client = t_client;
        }
    }

    fn rebuild_preview(&mut self) -> Result<(), ServiceError> {
        self.session = Session::new(self.base.clone())?;
        Ok(())
    }

    fn start(&mut self, task: Option<TaskSelect>, seed: Option<u64>) -> Result<ServerMessage, ServiceError> {
        if self.state == LifecycleState::Running {
            return Err(ServiceError::State("a trial is already running".into()));
        }
        let mut cfg = self.base.clone();
        if let Some(t) = task {
            cfg.task = t;
        }
        cfg.seed = seed.unwrap_or(self.next_seed);
        let session = Session::new(cfg.clone())?;
        self.next_seed = cfg.seed.wrapping_add(1);
        self.base = cfg;
        self.session = session;
        self.state = LifecycleState::Running;
        self.last = None;
        self.input = Input::default();
        self.trials += 1;
        log::info!("trial {} started: task {} mode {} seed {}", self.trials, self.task(), self.mode().as_str(), self.base.seed);
        Ok(ServerMessage::TrialStarted {
            task: self.task(),
            mode: self.mode(),
            seed: self.base.seed,
        })
    }

    /// Advances service time by one control period, stepping the trial when
    /// one is running. Returns the frames produced (trial end, failures).
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        self.ticks += 1;
        if self.state != LifecycleState::Running {
            return vec![];
        }
        self.feed_input();
        match self.session.step() {
            Ok(None) => vec![],
            Ok(Some(_)) => self.finish(),
            Err(e) => {
                log::error!("trial ended by simulation failure: {e}");
                self.session.abort();
                let mut out = vec![ServerMessage::error(ErrorCode::Numerical, e.to_string())];
                out.extend(self.finish());
                out
            }
        }
    }

    /// Queues the composed command on the human adapter while input is
    /// fresh; silence lets the adapter's dead-man release the leader.
    fn feed_input(&mut self) {
        let Some(t_cmd) = self.input.t else { return };
        let now = self.session.time();
        let tool_z = self.session.snapshot().ee_l.z_axis();
        let w = Vector3::from(self.input.angular) + tool_z * self.input.yaw_rate;
        let (linear, angular, _) = self.limits.clamp(self.input.linear, w.into());
        let cmd = HumanCommand {
            t: t_cmd.min(now),
            linear,
            angular,
        };
        if let Some(h) = self.session.human_mut() {
            h.push(cmd).expect("inputs are checked finite");
        }
        self.input.t = None;
    }

    /// Running → Done: records the trial and writes its dataset.
    fn finish(&mut self) -> Vec<ServerMessage> {
        let mut snap = self.snapshot();
        snap.state = LifecycleState::Done;
        self.last = Some(snap);
        self.state = LifecycleState::Done;
        let outcome = self.session.outcome().expect("finished trial has an outcome");
        let replacement = Session::new(self.base.clone());
        let files = match replacement {
            Ok(next) => {
                let done = std::mem::replace(&mut self.session, next);
                self.write(done)
            }
            Err(e) => Err(e.into()),
        };
        log::info!("trial {} done: {:?}", self.trials, outcome);
        let mut out = Vec::new();
        let files = files.unwrap_or_else(|e| {
            log::error!("{e}");
            out.push(e.frame());
            None
        });
        out.push(ServerMessage::TrialDone {
            task: self.task(),
            mode: self.mode(),
            seed: self.base.seed,
            outcome,
            files,
        });
        out
    }

    fn write(&self, done: Session) -> Result<Option<TrialFiles>, ServiceError> {
        let Some(dir) = &self.out_dir else { return Ok(None) };
        let record = done.into_record().expect("finished trial has a record");
        let f = write_dataset(&record, &self.base.protocol, dir)?;
        Ok(Some(TrialFiles {
            csv: f.csv.display().to_string(),
            json: f.json.display().to_string(),
        }))
    }

    /// Outcome of the last finished trial.
    pub fn last_outcome(&self) -> Option<TrialOutcome> {
        self.last.as_ref().and_then(|s| s.outcome)
    }

    /// Builds the next state frame.
    pub fn snapshot(&mut self) -> StateSnapshot {
        self.seq += 1;
        let t = self.time();
        if let (LifecycleState::Done, Some(last)) = (self.state, &self.last) {
            let mut s = last.clone();
            s.seq = self.seq;
            s.t = t;
            return s;
        }
        let s = &self.session;
        let v = s.snapshot();
        let p = &self.base.protocol;
        let running = self.state == LifecycleState::Running;
        let trial_t = if running { v.t } else { 0.0 };
        let stage_remaining = match v.stage {
            Stage::Done => 0.0,
            _ if running => (p.stage_limit - (v.t - v.t_stage_entry)).max(0.0),
            _ => p.stage_limit,
        };
        let geometry = s.geometry();
        let tip = v.ee_f.position + v.ee_f.z_axis() * geometry.peg_length;
        StateSnapshot {
            seq: self.seq,
            t,
            state: self.state,
            task: self.task(),
            mode: self.mode(),
            seed: self.base.seed,
            trial_t,
            leader: (&v.ee_l).into(),
            follower: (&v.ee_f).into(),
            peg: PegView {
                pose: (&v.ee_f).into(),
                tip: tip.into(),
            },
            hole: HoleView::from(geometry),
            f_ext: (&v.f_ext).into(),
            feedback_norm: v.feedback_norm,
            eta: v.eta as u8,
            stage: v.stage,
            stage_remaining,
            total_remaining: (p.total_limit - trial_t).max(0.0),
            insertion_depth_mm: v.insertion_depth_mm,
            engaged: running && s.human_engaged(),
            t_client: self.input.t_client,
            outcome: v.outcome,
        }
    }
}
