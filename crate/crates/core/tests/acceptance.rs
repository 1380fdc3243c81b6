//! Acceptance suite: one PASS/FAIL line per criterion. Run with
//! `cargo test -p teleosim-core --test acceptance`.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DVector, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teleosim_core::channel::*;
use teleosim_core::controllers::*;
use teleosim_core::environment::{FailureReason, ProtocolConfig, Stage, TaskId, TrialOutcome};
use teleosim_core::harness::*;
use teleosim_core::kinodynamics::*;
use teleosim_core::operators::TeleopMode;

/// Outcome of one criterion: pass flag and a one-line account.
struct Verdict {
    pass: bool,
    detail: String,
}

struct Checks {
    pass: bool,
    notes: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self {
            pass: true,
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, note: String) {
        self.pass &= ok;
        self.notes.push(if ok { note } else { format!("[x] {note}") });
    }

    fn done(self) -> Verdict {
        Verdict {
            pass: self.pass,
            detail: self.notes.join("; "),
        }
    }
}

fn random_q(model: &ManipulatorModel<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(
        model.n(),
        model.links.iter().map(|l| {
            let m = 0.1 * (l.upper - l.lower);
            rng.random_range(l.lower + m..l.upper - m)
        }),
    )
}

fn random_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-scale..scale)))
}

fn home() -> DVector<f64> {
    DVector::from_vec(vec![0.0, -0.4, 0.0, -2.2, 0.0, 1.8, 0.785])
}

fn dynamics() -> Verdict {
    let model = panda_nominal::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut c = Checks::new();

    let mut asym: f64 = 0.0;
    for _ in 0..200 {
        let m = mass_matrix(&model, &random_q(&model, &mut rng)).unwrap();
        asym = asym.max((&m - m.transpose()).amax());
    }
    c.check(asym < 1e-9, format!("mass-matrix asymmetry {asym:.1e} < 1e-9"));

    let h = 1e-6;
    let mut jac_rel: f64 = 0.0;
    for _ in 0..20 {
        let q = random_q(&model, &mut rng);
        let j = geometric_jacobian(&model, &q).unwrap();
        for k in 0..model.n() {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[k] += h;
            qm[k] -= h;
            let (fp, fm) = (forward_kinematics(&model, &qp).unwrap(), forward_kinematics(&model, &qm).unwrap());
            let mut fd = Vector6::zeros();
            fd.fixed_rows_mut::<3>(0).copy_from(&((fp.position - fm.position) / (2.0 * h)));
            fd.fixed_rows_mut::<3>(3)
                .copy_from(&(orientation_error(&fp.orientation, &fm.orientation) / (2.0 * h)));
            let col: Vector6<f64> = j.column(k).into_owned().fixed_rows::<6>(0).into_owned();
            jac_rel = jac_rel.max((fd - col).norm() / col.norm().max(1e-3));
        }
    }
    c.check(jac_rel < 1e-5, format!("Jacobian vs central differences {jac_rel:.1e} < 1e-5 relative"));

    let mut rt: f64 = 0.0;
    for _ in 0..200 {
        let q = random_q(&model, &mut rng);
        let dq = random_vec(7, 2.0, &mut rng);
        let tau = random_vec(7, 20.0, &mut rng);
        let ddq = forward_dynamics(&model, &q, &dq, &tau, &DVector::zeros(7)).unwrap();
        rt = rt.max((inverse_dynamics(&model, &q, &dq, &ddq).unwrap() - &tau).amax());
    }
    c.check(rt < 1e-9, format!("inverse/forward round trip {rt:.1e} < 1e-9"));

    let mut free = model.clone();
    free.gravity = Vector3::zeros();
    for l in &mut free.links {
        l.continuous = true;
    }
    let q0 = home();
    let dq0 = DVector::from_vec(vec![0.3, -0.2, 0.4, 0.2, -0.5, 0.3, 0.6]);
    let e0 = kinetic_energy(&free, &q0, &dq0).unwrap();
    let mut s = JointState::new(q0, dq0, 0.0);
    let z = DVector::zeros(7);
    for _ in 0..10_000 {
        s = step(&free, &s, &z, &z, 1e-4).unwrap().state;
    }
    let drift = (kinetic_energy(&free, &s.q, &s.dq).unwrap() - e0).abs() / e0;
    c.check(
        drift < 5e-3,
        format!("zero-gravity energy drift {:.3} % < 0.5 % over 1e4 steps", 100.0 * drift),
    );
    c.done()
}

fn controller_algebra() -> Verdict {
    let model = panda_nominal::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut c = Checks::new();

    let mut align: f64 = 0.0;
    for _ in 0..1000 {
        let r = UnitQuaternion::from_euler_angles(
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
        );
        let target = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let pose = Pose::new(random_vec(3, 1.0, &mut rng).fixed_rows::<3>(0).into_owned(), r);
        let goal = leader_assist_goal(&pose, &target).unwrap().pose;
        align = align.max((goal.z_axis() - target).norm());
    }
    c.check(align < 1e-9, format!("alignment post-rotation z error {align:.1e} < 1e-9"));

    let leader = LeaderGains::default();
    let follower = FollowerGains::table_iv();
    let (mut reduce, mut off): (f64, bool) = (0.0, true);
    for _ in 0..200 {
        let q = random_q(&model, &mut rng);
        let tau_df = random_vec(7, 5.0, &mut rng);
        let s = JointState::at_rest(q.clone());
        let pose = forward_kinematics(&model, &q).unwrap();
        let goal = leader_assist_goal(&pose, &pose.z_axis()).unwrap().pose;
        let gap = leader_shared_torque(&model, &s, &goal, &leader, &tau_df).unwrap()
            - leader_baseline_torque(&model, &s, &tau_df).unwrap();
        reduce = reduce.max(gap.amax());

        let moving = JointState::new(q.clone(), random_vec(7, 1.0, &mut rng), 0.0);
        let qd = &q + random_vec(7, 0.05, &mut rng);
        let dqd = random_vec(7, 0.5, &mut rng);
        let f = Vector6::from_iterator((0..6).map(|_| rng.random_range(-2.0..2.0)));
        off &= follower_shared_torque(&model, &moving, &qd, &dqd, &follower, AutonomyLevel::Manual, &f).unwrap()
            == follower_baseline_torque(&model, &moving, &qd, &dqd, &follower).unwrap();
    }
    c.check(
        reduce < 1e-9,
        format!("shared leader law vs baseline at zero alignment error {reduce:.1e} < 1e-9"),
    );
    c.check(off, "shared follower law with eta = 0 equals the baseline bit for bit".into());

    let sel = follower.feedback_selection;
    let mut moments = true;
    for _ in 0..200 {
        let j = geometric_jacobian(&model, &random_q(&model, &mut rng)).unwrap();
        let m = Vector6::new(
            0.0,
            0.0,
            0.0,
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        let tau = feedback_torque(&j, &Wrench::from_vector(&m, WrenchFrame::Base), &sel).unwrap().0;
        moments &= tau.iter().all(|x| *x == 0.0);
    }
    c.check(moments, "force-only feedback maps pure moments to exactly zero torque".into());

    let w = WiggleParams::<f64>::default();
    let mut wig: f64 = 0.0;
    for i in 0..1000 {
        let t = i as f64 * 0.0173;
        let f = wiggle_force(&w, t);
        let rx = 0.766 * (2.0 * PI * 2.150 * t - 1.562).sin();
        let ry = 0.906 * (2.0 * PI * 2.160 * t + 0.610).sin();
        wig = wig.max((f[3] - rx).abs()).max((f[4] - ry).abs());
        wig = wig.max(f[0].abs() + f[1].abs() + f[2].abs() + f[5].abs());
    }
    c.check(wig < 1e-12, format!("wiggle vs closed form at 1000 times {wig:.1e} < 1e-12"));
    c.done()
}

fn random_leader_packet(rng: &mut ChaCha8Rng) -> LeaderCommandPacket {
    let n = rng.random_range(1..=12);
    let mut x = || rng.random_range(-1e6..1e6);
    LeaderCommandPacket {
        seq: 0,
        t_send: 0,
        q_d: (0..n).map(|_| x()).collect(),
        dq_d: (0..n).map(|_| x()).collect(),
        e_in_l: x(),
    }
}

fn random_follower_packet(rng: &mut ChaCha8Rng) -> FollowerFeedbackPacket {
    let n = rng.random_range(1..=12);
    FollowerFeedbackPacket {
        seq: rng.random(),
        t_send: rng.random(),
        tau_d_f: (0..n).map(|_| rng.random_range(-1e3..1e3)).collect(),
        f_ext_f: std::array::from_fn(|_| rng.random_range(-1e3..1e3)),
        eta: AutonomyLevel::from_u8(rng.random_range(0..2)).unwrap(),
        stage: Stage::from_u8(rng.random_range(0..3)).unwrap(),
        e_in_f: rng.random_range(0.0..1e3),
    }
}

fn drive(cfg: ChannelConfig, ticks: u64) -> (Vec<Delivery>, Vec<u64>) {
    let mut link = ImpairedLink::new(cfg);
    let mut got = Vec::new();
    for k in 0..ticks {
        link.send(k * 1000, k);
        got.extend(link.poll(k * 1000));
    }
    got.extend(link.poll(ticks * 1000 + 1_000_000));
    (link.log().to_vec(), got)
}

/// One-joint leader driven by a spring hand, one-joint follower pushing into
/// a stiff wall; optionally a forged energetic feedback packet.
fn teleop_1dof(cfg: ChannelConfig, tdpa: bool, inject_at: Option<usize>) -> (Vec<[f64; 4]>, f64, u64) {
    let dt = 1e-3;
    let mut ch = BilateralChannel::symmetric(1, cfg, tdpa).unwrap();
    let (mut x_l, mut v_l, mut x_f, mut v_f) = (0.0, 0.0, 0.0, 0.0);
    let one = |x: f64| DVector::from_element(1, x);
    let mut samples = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..3000 {
        let t = k as f64 * dt;
        ch.leader_send(t, dt, &one(x_l), &one(v_l)).unwrap();
        let cmd = ch.follower_receive(t, dt);
        let (q_d, dq_d) = if cmd.valid { (cmd.q_d[0], cmd.dq_d[0]) } else { (0.0, 0.0) };
        let pen = x_f - 0.02;
        let f_env = if pen > 0.0 { -2e4 * pen } else { 0.0 };
        v_f += dt * (400.0 * (q_d - x_f) + 40.0 * (dq_d - v_f) + f_env);
        x_f += dt * v_f;
        ch.follower_send(t, &one(f_env), [f_env, 0.0, 0.0, 0.0, 0.0, 0.0], AutonomyLevel::Manual, Stage::PositionGuiding)
            .unwrap();
        if inject_at == Some(k) {
            let pkt = FollowerFeedbackPacket {
                seq: ch.take_feedback_seq(),
                t_send: to_micros(t),
                tau_d_f: vec![40.0 * v_l.signum()],
                f_ext_f: [0.0; 6],
                eta: AutonomyLevel::Manual,
                stage: Stage::PositionGuiding,
                e_in_f: ch.follower_ledger.e_in,
            };
            ch.inject_feedback(&encode_follower_fb(&pkt).unwrap(), t);
        }
        let fb = ch.leader_receive(t, dt, &one(v_l));
        let f_h = 200.0 * (0.04 * (PI * t).sin() - x_l) - 10.0 * v_l;
        v_l += dt * (f_h + fb.tau[0]);
        x_l += dt * v_l;
        for l in [&ch.leader_ledger, &ch.follower_ledger] {
            worst = worst.max(l.e_out - l.e_in_remote);
        }
        samples.push([x_l, v_l, x_f, v_f]);
    }
    let activations = ch.leader_ledger.activations + ch.follower_ledger.activations;
    (samples, worst, activations)
}

fn channel() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut c = Checks::new();

    let mut ok = 0;
    for i in 0..10_000u32 {
        let mut l = random_leader_packet(&mut rng);
        l.seq = i;
        l.t_send = rng.random();
        let f = random_follower_packet(&mut rng);
        let lb = encode_leader_cmd(&l).unwrap();
        let fb = encode_follower_fb(&f).unwrap();
        if decode_leader_cmd(&lb).unwrap() == l && decode_follower_fb(&fb).unwrap() == f {
            ok += 1;
        }
    }
    c.check(ok == 10_000, format!("codec round trip {ok}/10000 packets of each kind"));

    let cfg = ChannelConfig {
        delay_ms: 20.0,
        jitter_ms: 8.0,
        loss_prob: 0.1,
        reorder_prob: 0.2,
        reorder_holdback_ms: 3.0,
        seed: 9,
    };
    let a = drive(cfg, 3000);
    let b = drive(cfg, 3000);
    let other = drive(ChannelConfig { seed: 10, ..cfg }, 3000);
    c.check(a == b && a.0 != other.0, "impairment replay identical per seed, distinct across seeds".into());

    let mut margins = Vec::new();
    let mut engaged = true;
    for delay in [0.0, 50.0, 200.0] {
        let (samples, worst, act) = teleop_1dof(
            ChannelConfig {
                delay_ms: delay,
                ..Default::default()
            },
            true,
            Some(1200),
        );
        engaged &= act > 0 && samples.iter().flatten().all(|x| x.is_finite());
        margins.push(worst);
    }
    let worst = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    c.check(
        worst <= 1e-12 && engaged,
        format!("passivity E_out - E_in <= {worst:.1e} J at 0/50/200 ms with injected disturbance"),
    );

    let (on, _, act) = teleop_1dof(ChannelConfig::default(), true, None);
    let (off, _, _) = teleop_1dof(ChannelConfig::default(), false, None);
    let gap = on
        .iter()
        .zip(&off)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    c.check(gap <= 1e-9 && act == 0, format!("zero-delay transparency {gap:.1e} <= 1e-9"));
    c.done()
}

const TASKS: [TaskId; 3] = [TaskId::A, TaskId::B, TaskId::C];

fn batch() -> MetricsSummary {
    let base = SessionConfig {
        operator: OperatorSelect::Named("intermediate".into()),
        geometry_scale: 10.0,
        record_rows: false,
        ..SessionConfig::default()
    };
    let tasks = TASKS.iter().cloned().map(TaskSelect::Preset).collect();
    run_batch(&BatchSpec::new(base, tasks, TeleopMode::ALL.to_vec(), 50, 1)).unwrap()
}

fn mode_ordering(summary: &MetricsSummary) -> Verdict {
    let mut c = Checks::new();
    let rate = |t: &TaskId, m| summary.cell(t, m).unwrap().success_rate;
    for t in &TASKS {
        let (u, b, s) = (
            rate(t, TeleopMode::Unilateral),
            rate(t, TeleopMode::Bilateral),
            rate(t, TeleopMode::Shared),
        );
        c.check(s >= b && b >= u, format!("{t}: shared {s:.0} >= bilateral {b:.0} >= unilateral {u:.0} %"));
    }
    let u: Vec<f64> = TASKS.iter().map(|t| rate(t, TeleopMode::Unilateral)).collect();
    c.check(
        u[0] > u[1] && u[1] > u[2],
        format!("unilateral falls A > B > C: {:.0} > {:.0} > {:.0} %", u[0], u[1], u[2]),
    );
    let (sa, sc) = (rate(&TaskId::A, TeleopMode::Shared), rate(&TaskId::C, TeleopMode::Shared));
    c.check(sc >= 0.9 * sa, format!("shared C {sc:.0} % >= 0.9 x shared A {sa:.0} %"));
    let errors: usize = summary.cells.iter().map(|c| c.errors.len()).sum();
    c.check(errors == 0, format!("{} trials, {errors} errors", summary.cells.iter().map(|c| c.trials).sum::<usize>()));
    c.done()
}

fn stage_times(summary: &MetricsSummary) -> Verdict {
    let mut c = Checks::new();
    for t in &TASKS {
        let cells: Vec<&CellSummary> = TeleopMode::ALL.iter().map(|m| summary.cell(t, *m).unwrap()).collect();
        let s1: Vec<f64> = cells.iter().map(|c| c.mean_t_stage1).collect();
        let (lo, hi) = (s1.iter().copied().fold(f64::MAX, f64::min), s1.iter().copied().fold(0.0, f64::max));
        c.check(
            hi <= 1.15 * lo,
            format!("{t}: stage-1 means {:.2}/{:.2}/{:.2} s within 15 %", s1[0], s1[1], s1[2]),
        );
        let s2: Vec<f64> = cells.iter().map(|c| c.mean_t_stage2).collect();
        c.check(
            s2[2] <= s2[0] && s2[2] <= s2[1],
            format!("{t}: shared stage-2 mean {:.2} s is the minimum (uni {:.2}, bil {:.2})", s2[2], s2[0], s2[1]),
        );
    }
    c.done()
}

fn protocol_fidelity() -> Verdict {
    let mut c = Checks::new();
    let mut stalled = SessionConfig {
        record_rows: true,
        ..SessionConfig::default()
    };
    stalled.scripted.approach_speed = 1e-3;
    let rec = run_trial(&stalled).unwrap();
    let o = rec.outcome;
    let end = rec.rows.last().unwrap().t;
    c.check(
        o.t_total == 60.0 && o.failure_reason == FailureReason::Timeout && (o.t_stage1 - 30.0).abs() < 1e-9,
        format!(
            "stage-1 stall: ends at {end:.3} s, t_stage1 {:.3} s, recorded total {} s",
            o.t_stage1, o.t_total
        ),
    );
    c.check((end - 30.0).abs() < 1e-9, "stage-1 limit of 30 s enforced".into());

    let mut jam = SessionConfig {
        record_rows: true,
        ..SessionConfig::default()
    };
    jam.scripted.insert_speed = 1e-3;
    jam.scripted.lead = 0.0;
    jam.scripted.escalation_rate = 0.0;
    let rec = run_trial(&jam).unwrap();
    let o = rec.outcome;
    let end = rec.rows.last().unwrap().t;
    c.check(
        !o.success && o.t_total == 60.0 && (o.t_stage2 - 30.0).abs() < 1e-9 && (end - o.t_stage1 - 30.0).abs() < 1e-9,
        format!(
            "stage-2 stall: stage 2 entered at {:.3} s, ends at {end:.3} s, t_stage2 {:.3} s, recorded total {} s",
            o.t_stage1, o.t_stage2, o.t_total
        ),
    );

    let p = ProtocolConfig::default();
    let ok = |t1: f64, t2: f64| TrialOutcome {
        success: true,
        t_total: t1 + t2,
        t_stage1: t1,
        t_stage2: t2,
        failure_reason: FailureReason::None,
    };
    let fail = TrialOutcome {
        success: false,
        t_total: 60.0,
        t_stage1: 4.0,
        t_stage2: 30.0,
        failure_reason: FailureReason::Timeout,
    };
    let cell = summarize(
        TaskId::A,
        TeleopMode::Shared,
        vec![(1, ok(2.0, 8.0)), (2, ok(3.0, 17.0)), (3, fail), (4, ok(5.0, 25.0))],
        Vec::new(),
        &p,
    );
    let expect = 0.75 / ((10.0 + 20.0 + 60.0 + 30.0) / 4.0 / 60.0);
    c.check(
        (cell.efficiency - expect).abs() < 1e-12 && efficiency(0.0, 30.0) == 0.0,
        format!("efficiency {:.6} equals rate / mean minutes {expect:.6}", cell.efficiency),
    );
    c.done()
}

fn determinism() -> Verdict {
    let mut c = Checks::new();
    for mode in TeleopMode::ALL {
        let cfg = SessionConfig {
            task: TaskSelect::Preset(TaskId::C),
            mode,
            seed: 77,
            ..SessionConfig::default()
        };
        let a = serde_json::to_vec(&run_trial(&cfg).unwrap()).unwrap();
        let b = serde_json::to_vec(&run_trial(&cfg).unwrap()).unwrap();
        c.check(a == b, format!("{}: {} bytes identical on re-run", mode.as_str(), a.len()));
    }
    let base = SessionConfig {
        record_rows: false,
        ..SessionConfig::default()
    };
    let tasks = vec![TaskSelect::Preset(TaskId::B)];
    let mut spec = BatchSpec::new(base, tasks, TeleopMode::ALL.to_vec(), 4, 3);
    spec.parallel = true;
    let par = serde_json::to_vec(&run_batch(&spec).unwrap()).unwrap();
    spec.parallel = false;
    let ser = serde_json::to_vec(&run_batch(&spec).unwrap()).unwrap();
    c.check(par == ser, "parallel batch summary identical to serial".into());
    c.done()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let filter = args.iter().skip(1).find(|a| !a.starts_with('-')).cloned();
    let mut failed = 0;
    let mut run = |name: &str, budget: f64, f: &mut dyn FnMut() -> Verdict| {
        if filter.as_ref().is_some_and(|p| !name.contains(p.as_str())) {
            return;
        }
        let t0 = Instant::now();
        let v = f();
        let secs = t0.elapsed().as_secs_f64();
        let pass = v.pass && secs <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name} ({secs:.1} s of {budget:.0} s): {}",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
    };
    run("dynamics suite", 60.0, &mut dynamics);
    run("controller algebra suite", 10.0, &mut controller_algebra);
    run("channel suite", 60.0, &mut channel);
    let mut summary = None;
    run("mode-ordering experiment", 600.0, &mut || {
        let s = batch();
        let v = mode_ordering(&s);
        summary = Some(s);
        v
    });
    run("stage-time direction", 600.0, &mut || match &summary {
        Some(s) => stage_times(s),
        None => stage_times(&batch()),
    });
    run("protocol fidelity", 60.0, &mut protocol_fidelity);
    run("determinism", 60.0, &mut determinism);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
