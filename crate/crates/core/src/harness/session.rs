use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::config::SessionConfig;
use super::HarnessError;
use crate::channel::BilateralChannel;
use crate::controllers::{
    clip_torque, feedback_torque, follower_baseline_with, follower_shared_with, leader_assist_goal,
    leader_baseline_with, leader_shared_with, wiggle_force, AutonomyGate, AutonomyLevel, FollowerGains, LeaderGains,
    WiggleParams,
};
use crate::environment::{
    adjudicate, aborted, stage_update, surface_normal_estimate, ContactModel, ForceWindow, FrictionState, Stage,
    StageState, TaskConfig, TaskGeometry, TaskId, TrialOutcome,
};
use crate::kinodynamics::{
    inverse_kinematics, step_with, ArmDynamics, ChainKinematics, JointState, ManipulatorModel, Pose, Wrench,
    WrenchFrame,
};
use crate::operators::{HumanAdapter, LeaderView, OperatorWrench, ScriptedOperator, TaskView, TeleopMode};

/// Configuration the arms start from before being placed over the task.
pub const HOME_Q: [f64; 7] = [0.0, -0.4, 0.0, -2.2, 0.0, 1.8, 0.785];

/// One logged control tick: state after the tick and the commands applied
/// during it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    /// s.
    pub t: f64,
    pub q_l: Vec<f64>,
    pub dq_l: Vec<f64>,
    pub q_f: Vec<f64>,
    pub dq_f: Vec<f64>,
    /// Follower end effector `[x, y, z, qw, qx, qy, qz]`, m.
    pub ee_f: [f64; 7],
    /// Follower contact wrench, end-effector axes.
    pub f_ext_f: [f64; 6],
    pub tau_c_l: Vec<f64>,
    pub tau_c_f: Vec<f64>,
    pub tau_d_f: Vec<f64>,
    pub eta: u8,
    pub stage: u8,
}

/// Aggregates of one trial that are cheap to keep for every run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub ticks: u64,
    /// Largest windowed contact force, N.
    pub max_window_force: f64,
    /// Largest instantaneous contact force, N.
    pub peak_force: f64,
    /// Time with the wiggle gate open, s.
    pub eta_time: f64,
    pub tdpa_activations: u64,
    /// J.
    pub tdpa_dissipated: f64,
    pub final_depth_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_hash: String,
    pub seed: u64,
    pub task: TaskId,
    pub mode: TeleopMode,
    pub operator: String,
    pub dt: f64,
    pub rows: Vec<TickRow>,
    pub outcome: TrialOutcome,
    pub stats: TrialStats,
}

/// Source of the hand wrench on the leader.
#[derive(Clone, Debug)]
pub enum Driver {
    Scripted(Box<ScriptedOperator>),
    Human(HumanAdapter),
    Idle,
}

/// Snapshot used by live front ends.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionSnapshot {
    pub t: f64,
    pub q_l: DVector<f64>,
    pub q_f: DVector<f64>,
    pub ee_l: Pose<f64>,
    pub ee_f: Pose<f64>,
    pub f_ext: Wrench<f64>,
    pub eta: AutonomyLevel,
    pub stage: Stage,
    pub insertion_depth_mm: f64,
    /// Norm of the feedback torque rendered on the leader, N·m.
    pub feedback_norm: f64,
    /// s.
    pub t_stage_entry: f64,
    pub outcome: Option<TrialOutcome>,
}

/// Lockstep simulation of one trial: operator, leader, channel, follower,
/// contact and the feedback path.
#[derive(Clone, Debug)]
pub struct Session {
    cfg: SessionConfig,
    task: TaskConfig,
    model: ManipulatorModel<f64>,
    leader: JointState<f64>,
    follower: JointState<f64>,
    q_start: DVector<f64>,
    leader_gains: LeaderGains<f64>,
    follower_gains: FollowerGains<f64>,
    wiggle: WiggleParams<f64>,
    gate: AutonomyGate,
    eta: AutonomyLevel,
    channel: BilateralChannel,
    contact: ContactModel,
    friction: FrictionState,
    stage: StageState,
    window: ForceWindow,
    driver: Driver,
    z_target: Vector3<f64>,
    tick: u64,
    f_ext: Wrench<f64>,
    felt: DVector<f64>,
    outcome: Option<TrialOutcome>,
    rows: Vec<TickRow>,
    stats: TrialStats,
    hand: OperatorWrench,
    ee_l: Pose<f64>,
    ee_f: Pose<f64>,
}

fn row_of(
    t: f64,
    leader: &JointState<f64>,
    follower: &JointState<f64>,
    ee: &Pose<f64>,
    f_ext: &Wrench<f64>,
    taus: [&DVector<f64>; 3],
    eta: AutonomyLevel,
    stage: Stage,
) -> TickRow {
    let q = ee.orientation.quaternion();
    TickRow {
        t,
        q_l: leader.q.as_slice().to_vec(),
        dq_l: leader.dq.as_slice().to_vec(),
        q_f: follower.q.as_slice().to_vec(),
        dq_f: follower.dq.as_slice().to_vec(),
        ee_f: [ee.position.x, ee.position.y, ee.position.z, q.w, q.i, q.j, q.k],
        f_ext_f: f_ext.to_vector().into(),
        tau_c_l: taus[0].as_slice().to_vec(),
        tau_c_f: taus[1].as_slice().to_vec(),
        tau_d_f: taus[2].as_slice().to_vec(),
        eta: eta.as_u8(),
        stage: stage.as_u8(),
    }
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let model = crate::kinodynamics::panda_nominal::<f64>();
        let n = model.n();
        cfg.gains.validate(n)?;
        let task = cfg.task_config()?;
        let contact = ContactModel::from_task(&task, cfg.contact)?;
        let geo = &contact.geometry;

        let home = DVector::from_row_slice(&HOME_Q);
        let home_pose = ChainKinematics::compute(&model, &home)?.ee_pose();
        let hole = geo.hole_pose;
        let axis = hole.z_axis();
        let align = nalgebra::UnitQuaternion::rotation_between(&home_pose.z_axis(), &axis)
            .unwrap_or_else(nalgebra::UnitQuaternion::identity);
        let mm = 1e-3 * cfg.geometry_scale;
        let tip_local = Vector3::new(cfg.start.lateral[0] * mm, cfg.start.lateral[1] * mm, -cfg.start.height * mm);
        let tip = hole.position + hole.orientation * tip_local;
        let start = Pose::new(tip - axis * geo.peg_length, align * home_pose.orientation);
        let q0 = inverse_kinematics(&model, &start, &home, 500)?;

        let driver = match cfg.operator.profile()? {
            Some(profile) => Driver::Scripted(Box::new(ScriptedOperator::new(
                profile,
                cfg.scripted,
                cfg.mode,
                cfg.geometry_scale,
                cfg.seed,
            )?)),
            None => Driver::Human(HumanAdapter::new(Default::default(), cfg.scripted.limits)),
        };
        let z_target = surface_normal_estimate(&task, cfg.normal_noise, cfg.seed ^ 0x5eed_0001);
        let channel = BilateralChannel::symmetric(n, cfg.channel, cfg.tdpa)?;
        let leader = JointState::at_rest(q0.clone());
        let follower = JointState::at_rest(q0.clone());
        let ee = ChainKinematics::compute(&model, &q0)?.ee_pose();
        let stage = stage_update(
            &StageState::new(0.0),
            &contact.peg_tip(&ee),
            geo,
            &cfg.protocol,
            cfg.geometry_scale,
            0.0,
        );
        let zeros = DVector::zeros(n);
        let f_ext = Wrench::zero(WrenchFrame::EndEffector);
        let mut s = Self {
            leader_gains: cfg.gains.leader(),
            follower_gains: cfg.gains.follower(),
            wiggle: cfg.gains.wiggle(),
            gate: AutonomyGate::new(cfg.gains.autonomy),
            eta: AutonomyLevel::Manual,
            window: ForceWindow::new(cfg.protocol.safety_window),
            task,
            channel,
            contact,
            friction: FrictionState::default(),
            stage,
            driver,
            z_target,
            tick: 0,
            f_ext,
            felt: zeros.clone(),
            outcome: None,
            rows: Vec::new(),
            stats: TrialStats::default(),
            hand: OperatorWrench::zero(),
            ee_l: ee,
            ee_f: ee,
            q_start: q0,
            leader,
            follower,
            model,
            cfg,
        };
        if s.cfg.record_rows {
            let row = row_of(0.0, &s.leader, &s.follower, &ee, &f_ext, [&zeros, &zeros, &zeros], s.eta, s.stage.stage);
            s.rows.push(row);
        }
        Ok(s)
    }

    pub fn geometry(&self) -> &TaskGeometry {
        &self.contact.geometry
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn task(&self) -> &TaskConfig {
        &self.task
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.dt
    }

    pub fn outcome(&self) -> Option<TrialOutcome> {
        self.outcome
    }

    pub fn driver(&self) -> &Driver {
        &self.driver
    }

    pub fn human_mut(&mut self) -> Option<&mut HumanAdapter> {
        match &mut self.driver {
            Driver::Human(h) => Some(h),
            _ => None,
        }
    }

    /// True while a human driver is receiving fresh commands.
    pub fn human_engaged(&self) -> bool {
        matches!(&self.driver, Driver::Human(h) if h.engaged(self.time()))
    }

    pub fn channel(&self) -> &BilateralChannel {
        &self.channel
    }

    pub fn last_hand_wrench(&self) -> OperatorWrench {
        self.hand
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            t: self.time(),
            q_l: self.leader.q.clone(),
            q_f: self.follower.q.clone(),
            ee_l: self.ee_l,
            ee_f: self.ee_f,
            f_ext: self.f_ext,
            eta: self.eta,
            stage: self.stage.stage,
            insertion_depth_mm: self.stage.insertion_depth,
            feedback_norm: self.felt.norm(),
            t_stage_entry: self.stage.t_stage_entry,
            outcome: self.outcome,
        }
    }

    /// Ends the trial as an operator abort.
    pub fn abort(&mut self) -> TrialOutcome {
        let o = *self
            .outcome
            .get_or_insert_with(|| aborted(&self.stage, self.tick as f64 * self.cfg.dt, &self.cfg.protocol));
        o
    }

    fn numerical(&self, e: impl Into<HarnessError>) -> HarnessError {
        HarnessError::Numerical {
            tick: self.tick,
            message: e.into().to_string(),
        }
    }

    /// Advances one control period. Returns the outcome once the trial has
    /// ended; further calls are no-ops.
    pub fn step(&mut self) -> Result<Option<TrialOutcome>, HarnessError> {
        if self.outcome.is_some() {
            return Ok(self.outcome);
        }
        let dt = self.cfg.dt;
        let t = self.time();
        let mode = self.cfg.mode;
        let n = self.model.n();

        let dl = ArmDynamics::compute(&self.model, &self.leader.q, &self.leader.dq).map_err(|e| self.numerical(e))?;
        let jl = dl.kin.jacobian();
        let pose_l = dl.kin.ee_pose();
        let twist_l = Vector6::from_column_slice((&jl * &self.leader.dq).as_slice());
        let geo = &self.contact.geometry;
        let tip = self.contact.peg_tip(&self.ee_f);
        let view = LeaderView {
            pose: pose_l,
            twist: twist_l,
            jacobian: &jl,
            felt_torque: &self.felt,
        };
        let task_view = TaskView {
            hole_pose: geo.hole_pose,
            peg_length: geo.peg_length,
            hole_depth: geo.depth,
            stage: self.stage.stage,
            tip_depth: self.contact.to_hole(&tip).z,
            geometry_scale: self.cfg.geometry_scale,
        };
        self.hand = match &mut self.driver {
            Driver::Scripted(op) => op.step(&view, &task_view, t, dt),
            Driver::Human(h) => h.step(&view, t, dt),
            Driver::Idle => OperatorWrench::zero(),
        };

        self.channel.leader_send(t, dt, &self.leader.q, &self.leader.dq)?;
        let cmd = self.channel.follower_receive(t, dt);
        let (q_d, dq_d) = if cmd.valid {
            (cmd.q_d, cmd.dq_d)
        } else {
            (self.q_start.clone(), DVector::zeros(n))
        };

        let df = ArmDynamics::compute(&self.model, &self.follower.q, &self.follower.dq).map_err(|e| self.numerical(e))?;
        let mut tau_f = if mode == TeleopMode::Shared {
            let f_ff = wiggle_force(&self.wiggle, t);
            follower_shared_with(&df, &self.follower, &q_d, &dq_d, &self.follower_gains, self.eta, &f_ff)?
        } else {
            follower_baseline_with(&df, &self.follower, &q_d, &dq_d, &self.follower_gains)?
        };
        clip_torque(&self.model, &mut tau_f);
        let kin_f = self.integrate_follower(&df, &tau_f)?;
        self.ee_f = kin_f.ee_pose();

        let tau_fb_out = if mode.has_feedback() {
            feedback_torque(&kin_f.ee_jacobian(), &self.f_ext, &self.follower_gains.feedback_selection)?.0
        } else {
            DVector::zeros(n)
        };
        let now = t + dt;
        let tip = self.contact.peg_tip(&self.ee_f);
        self.stage = stage_update(
            &self.stage,
            &tip,
            &self.contact.geometry,
            &self.cfg.protocol,
            self.cfg.geometry_scale,
            now,
        );
        self.eta = if mode == TeleopMode::Shared {
            self.gate.update(&self.f_ext, self.stage.stage, now)
        } else {
            AutonomyLevel::Manual
        };
        self.channel
            .follower_send(t, &tau_fb_out, self.f_ext.to_vector().into(), self.eta, self.stage.stage)?;

        let fb = self.channel.leader_receive(t, dt, &self.leader.dq);
        let tau_fb = if mode.has_feedback() { fb.tau } else { DVector::zeros(n) };
        let mut tau_l = if mode == TeleopMode::Shared {
            let goal = leader_assist_goal(&pose_l, &self.z_target)?;
            leader_shared_with(&dl, &self.leader.dq, &goal.pose, &self.leader_gains, &tau_fb)?
        } else {
            leader_baseline_with(&dl, &tau_fb)?
        };
        clip_torque(&self.model, &mut tau_l);
        let hand = DVector::from_column_slice(self.hand.wrench.as_slice());
        let tau_ext_l = jl.transpose() * hand - &self.leader.dq * self.cfg.leader_joint_friction;
        let report = step_with(&self.model, &dl, &self.leader, &tau_l, &tau_ext_l, dt).map_err(|e| self.numerical(e))?;
        self.leader = report.state;
        self.leader.t = now;
        self.felt = tau_fb;
        self.ee_l = ChainKinematics::compute(&self.model, &self.leader.q)
            .map_err(|e| self.numerical(e))?
            .ee_pose();

        let force = self.f_ext.force.norm();
        self.window.push(now, force);
        let mean = self.window.mean();
        self.stats.ticks += 1;
        self.stats.peak_force = self.stats.peak_force.max(force);
        self.stats.max_window_force = self.stats.max_window_force.max(mean);
        if self.eta == AutonomyLevel::Shared {
            self.stats.eta_time += dt;
        }
        self.stats.final_depth_mm = self.stage.insertion_depth;
        self.tick += 1;

        if self.cfg.record_rows {
            let row = row_of(
                now,
                &self.leader,
                &self.follower,
                &self.ee_f,
                &self.f_ext,
                [&tau_l, &tau_f, &self.felt],
                self.eta,
                self.stage.stage,
            );
            self.rows.push(row);
        }
        self.outcome = adjudicate(&self.stage, mean, now, &self.cfg.protocol);
        Ok(self.outcome)
    }

    /// Integrates the follower over one control period with contact
    /// sub-steps; the mass matrix and bias forces are held over the period.
    fn integrate_follower(&mut self, df: &ArmDynamics<f64>, tau: &DVector<f64>) -> Result<ChainKinematics<f64>, HarnessError> {
        let dt = self.cfg.dt;
        let chol = df
            .mass
            .clone()
            .cholesky()
            .ok_or_else(|| self.numerical(crate::kinodynamics::DynamicsError::SingularMassMatrix))?;
        let free = tau - &df.coriolis - &df.gravity;
        let guard = 2e-3 * self.cfg.geometry_scale;
        let start_pose = df.kin.ee_pose();
        let (subs, h) = if self.contact.may_touch(&start_pose, guard) {
            (self.cfg.contact_substeps, dt / self.cfg.contact_substeps as f64)
        } else {
            (1, dt)
        };
        let mut q = self.follower.q.clone();
        let mut dq = self.follower.dq.clone();
        let mut sum = Vector6::zeros();
        let mut touched = false;
        let mut kin = df.kin.clone();
        let mut ddq = DVector::zeros(q.len());
        for k in 0..subs {
            if k > 0 {
                kin = ChainKinematics::compute(&self.model, &q).map_err(|e| self.numerical(e))?;
            }
            let mut rhs = free.clone();
            if subs > 1 {
                let pose = kin.ee_pose();
                let j: DMatrix<f64> = kin.jacobian();
                let twist = Vector6::from_column_slice((&j * &dq).as_slice());
                let rep = self.contact.wrench_stateful(&pose, &twist, h, &mut self.friction);
                if rep.active_points > 0 {
                    touched = true;
                    let wb = DVector::from_column_slice(rep.wrench_base.to_vector().as_slice());
                    rhs += j.transpose() * wb;
                    sum += rep.wrench.to_vector();
                }
            }
            ddq = chol.solve(&rhs);
            dq += &ddq * h;
            q += &dq * h;
            for (i, link) in self.model.links.iter().enumerate() {
                if link.continuous {
                    continue;
                }
                if q[i] > link.upper {
                    q[i] = link.upper;
                    dq[i] = 0.0;
                } else if q[i] < link.lower {
                    q[i] = link.lower;
                    dq[i] = 0.0;
                }
            }
        }
        if !touched {
            self.friction.reset();
        }
        if !(q.iter().chain(dq.iter()).all(|x| x.is_finite())) {
            return Err(self.numerical(crate::kinodynamics::DynamicsError::NonFinite("follower state")));
        }
        self.f_ext = Wrench::from_vector(&(sum / subs as f64), WrenchFrame::EndEffector);
        self.follower = JointState {
            q,
            dq,
            ddq,
            t: self.follower.t + dt,
        };
        ChainKinematics::compute(&self.model, &self.follower.q).map_err(|e| self.numerical(e))
    }

    /// Runs to completion and returns the record.
    pub fn run(mut self) -> Result<TrialRecord, HarnessError> {
        while self.step()?.is_none() {}
        Ok(self.into_record().expect("trial finished"))
    }

    /// The record of a finished trial, `None` while it is still running.
    pub fn into_record(mut self) -> Option<TrialRecord> {
        let outcome = self.outcome?;
        self.stats.tdpa_activations = self.channel.leader_ledger.activations + self.channel.follower_ledger.activations;
        self.stats.tdpa_dissipated = self.channel.leader_ledger.dissipated + self.channel.follower_ledger.dissipated;
        Some(TrialRecord {
            config_hash: self.cfg.config_hash(),
            seed: self.cfg.seed,
            task: self.task.id.clone(),
            mode: self.cfg.mode,
            operator: self.cfg.operator.label(),
            dt: self.cfg.dt,
            rows: std::mem::take(&mut self.rows),
            outcome,
            stats: self.stats,
        })
    }
}

/// Runs one trial.
pub fn run_trial(cfg: &SessionConfig) -> Result<TrialRecord, HarnessError> {
    Session::new(cfg.clone())?.run()
}
