//! Wire format, impairment replay and passivity of the bilateral channel.

use nalgebra::DVector;
use proptest::prelude::*;
use teleosim_core::channel::*;
use teleosim_core::controllers::AutonomyLevel;
use teleosim_core::environment::Stage;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, Just(0.0), Just(-0.0), Just(f64::MAX), Just(f64::MIN_POSITIVE)]
}

fn leader_packet() -> impl Strategy<Value = LeaderCommandPacket> {
    (1usize..=12).prop_flat_map(|n| {
        (
            any::<u32>(),
            any::<u64>(),
            prop::collection::vec(finite(), n),
            prop::collection::vec(finite(), n),
            finite(),
        )
            .prop_map(|(seq, t_send, q_d, dq_d, e_in_l)| LeaderCommandPacket {
                seq,
                t_send,
                q_d,
                dq_d,
                e_in_l,
            })
    })
}

fn follower_packet() -> impl Strategy<Value = FollowerFeedbackPacket> {
    (1usize..=12).prop_flat_map(|n| {
        (
            any::<u32>(),
            any::<u64>(),
            prop::collection::vec(finite(), n),
            prop::array::uniform6(finite()),
            0u8..2,
            0u8..3,
            finite(),
        )
            .prop_map(|(seq, t_send, tau_d_f, f_ext_f, eta, stage, e_in_f)| FollowerFeedbackPacket {
                seq,
                t_send,
                tau_d_f,
                f_ext_f,
                eta: AutonomyLevel::from_u8(eta).unwrap(),
                stage: Stage::from_u8(stage).unwrap(),
                e_in_f,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn leader_packets_round_trip(p in leader_packet()) {
        let bytes = encode_leader_cmd(&p).unwrap();
        prop_assert_eq!(bytes.len(), leader_packet_len(p.q_d.len()));
        prop_assert_eq!(decode_leader_cmd(&bytes).unwrap(), p);
    }

    #[test]
    fn follower_packets_round_trip(p in follower_packet()) {
        let bytes = encode_follower_fb(&p).unwrap();
        prop_assert_eq!(bytes.len(), follower_packet_len(p.tau_d_f.len()));
        prop_assert_eq!(decode_follower_fb(&bytes).unwrap(), p);
    }
}

fn sample_leader() -> LeaderCommandPacket {
    LeaderCommandPacket {
        seq: 7,
        t_send: 123_456,
        q_d: (0..7).map(|i| i as f64 * 0.1).collect(),
        dq_d: (0..7).map(|i| -(i as f64)).collect(),
        e_in_l: 0.25,
    }
}

fn sample_follower() -> FollowerFeedbackPacket {
    FollowerFeedbackPacket {
        seq: 3,
        t_send: 99,
        tau_d_f: vec![1.5; 7],
        f_ext_f: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        eta: AutonomyLevel::Shared,
        stage: Stage::GuidedInsertion,
        e_in_f: 2.0,
    }
}

#[test]
fn seven_joint_packet_lengths() {
    let field_widths = 4 + 1 + 4 + 8 + 1;
    assert_eq!(encode_leader_cmd(&sample_leader()).unwrap().len(), field_widths + 7 * 8 + 7 * 8 + 8);
    assert_eq!(field_widths + 7 * 8 + 7 * 8 + 8, 138);
    assert_eq!(
        encode_follower_fb(&sample_follower()).unwrap().len(),
        field_widths + 7 * 8 + 6 * 8 + 1 + 1 + 8
    );
}

#[test]
fn leader_layout_is_little_endian_in_field_order() {
    let bytes = encode_leader_cmd(&sample_leader()).unwrap();
    assert_eq!(&bytes[..4], b"TSA1");
    assert_eq!(bytes[4], 1);
    assert_eq!(&bytes[5..9], &7u32.to_le_bytes());
    assert_eq!(&bytes[9..17], &123_456u64.to_le_bytes());
    assert_eq!(bytes[17], 7);
    assert_eq!(&bytes[18..26], &0.0f64.to_le_bytes());
    assert_eq!(&bytes[26..34], &0.1f64.to_le_bytes());
    assert_eq!(&bytes[74..82], &(-0.0f64).to_le_bytes());
    assert_eq!(&bytes[130..138], &0.25f64.to_le_bytes());
}

#[test]
fn decode_errors_are_distinct() {
    let good = encode_leader_cmd(&sample_leader()).unwrap();

    let short = &good[..good.len() - 1];
    assert!(matches!(decode_leader_cmd(short), Err(CodecError::Truncated { needed: 138, got: 137 })));
    assert!(matches!(decode_leader_cmd(&good[..5]), Err(CodecError::Truncated { .. })));

    let mut b = good.clone();
    b[0] = b'X';
    assert!(matches!(decode_leader_cmd(&b), Err(CodecError::BadMagic(_))));

    let mut b = good.clone();
    b[4] = 2;
    assert!(matches!(decode_leader_cmd(&b), Err(CodecError::VersionMismatch { expected: 1, got: 2 })));

    let mut b = good.clone();
    b[18..26].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(matches!(decode_leader_cmd(&b), Err(CodecError::NonFinite(_))));

    let mut b = good.clone();
    b.push(0);
    assert!(matches!(decode_leader_cmd(&b), Err(CodecError::TrailingBytes(1))));

    assert!(matches!(decode_follower_fb(&good), Err(CodecError::BadMagic(_))));

    let fb = encode_follower_fb(&sample_follower()).unwrap();
    let eta_at = 18 + 7 * 8 + 48;
    let mut b = fb.clone();
    b[eta_at] = 2;
    assert!(matches!(decode_follower_fb(&b), Err(CodecError::InvalidEta(2))));
    let mut b = fb.clone();
    b[eta_at + 1] = 3;
    assert!(matches!(decode_follower_fb(&b), Err(CodecError::InvalidStage(3))));

    let mut bad = sample_leader();
    bad.dq_d[2] = f64::INFINITY;
    assert!(matches!(encode_leader_cmd(&bad), Err(CodecError::NonFinite(_))));
    let mut bad = sample_leader();
    bad.dq_d.pop();
    assert!(matches!(encode_leader_cmd(&bad), Err(CodecError::Length { .. })));
}

fn drive(cfg: ChannelConfig, ticks: u64) -> (Vec<Delivery>, Vec<u32>) {
    let mut link = ImpairedLink::new(cfg);
    let mut received = Vec::new();
    for k in 0..ticks {
        let now = k * 1000;
        link.send(now, k as u32);
        received.extend(link.poll(now));
    }
    received.extend(link.poll(ticks * 1000 + 1_000_000));
    (link.log().to_vec(), received)
}

#[test]
fn ideal_link_is_immediate_fifo() {
    let (log, got) = drive(ChannelConfig::default(), 100);
    assert_eq!(got, (0..100).collect::<Vec<_>>());
    assert!(log.iter().all(|d| d.delivered == Some(d.sent)));
}

#[test]
fn fixed_delay_is_exact() {
    let cfg = ChannelConfig {
        delay_ms: 50.0,
        ..Default::default()
    };
    let mut link = ImpairedLink::new(cfg);
    for k in 0..200u64 {
        let now = k * 1000;
        link.send(now, k);
        for p in link.poll(now) {
            assert_eq!(now, p * 1000 + 50_000);
        }
    }
    assert!(link.log().iter().all(|d| d.delivered == Some(d.sent + 50_000)));
    assert_eq!(link.log().len(), 150);
}

#[test]
fn total_loss_delivers_nothing() {
    let cfg = ChannelConfig {
        loss_prob: 1.0,
        ..Default::default()
    };
    let (log, got) = drive(cfg, 100);
    assert!(got.is_empty());
    assert!(log.iter().all(|d| d.delivered.is_none()));
}

#[test]
fn impairment_replay_is_deterministic() {
    let cfg = ChannelConfig {
        delay_ms: 20.0,
        jitter_ms: 8.0,
        loss_prob: 0.1,
        reorder_prob: 0.2,
        reorder_holdback_ms: 3.0,
        seed: 42,
    };
    let a = drive(cfg, 2000);
    let b = drive(cfg, 2000);
    assert_eq!(a, b);
    let c = drive(ChannelConfig { seed: 43, ..cfg }, 2000);
    assert_ne!(a.0, c.0);

    let lost = a.0.iter().filter(|d| d.delivered.is_none()).count();
    assert!((100..300).contains(&lost), "lost {lost}");
    assert!(a.1.windows(2).any(|w| w[1] < w[0]), "expected some reordering");
    for d in a.0.iter().filter_map(|d| d.delivered.map(|t| t - d.sent)) {
        assert!((20_000..=32_000).contains(&d), "latency {d}");
    }
}

#[test]
fn invalid_config_rejected() {
    for cfg in [
        ChannelConfig { loss_prob: 1.5, ..Default::default() },
        ChannelConfig { reorder_prob: -0.1, ..Default::default() },
        ChannelConfig { delay_ms: -1.0, ..Default::default() },
        ChannelConfig { jitter_ms: f64::NAN, ..Default::default() },
    ] {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

#[test]
fn observer_zero_velocity_leaves_energy_unchanged() {
    let mut l = EnergyLedger::new(PortRole::Admittance);
    for _ in 0..100 {
        tdpa_observe(&mut l, &v(&[5.0, -3.0]), &v(&[0.0, 0.0]), 1e-3);
    }
    assert_eq!((l.e_in, l.e_out), (0.0, 0.0));
}

#[test]
fn observer_integrates_constant_power() {
    let mut l = EnergyLedger::new(PortRole::Admittance);
    for _ in 0..1000 {
        tdpa_observe(&mut l, &v(&[2.0]), &v(&[0.5]), 1e-3);
    }
    assert!((l.e_in - 1.0).abs() < 1e-12);
    assert_eq!(l.e_out, 0.0);

    let mut l = EnergyLedger::new(PortRole::Impedance);
    for _ in 0..1000 {
        tdpa_observe(&mut l, &v(&[2.0]), &v(&[0.5]), 1e-3);
    }
    assert!((l.e_out - 1.0).abs() < 1e-12);
}

#[test]
fn observer_splits_by_sign() {
    let dt = 1e-3;
    let mut l = EnergyLedger::new(PortRole::Admittance);
    let (mut pos, mut neg, mut abs) = (0.0, 0.0, 0.0);
    let mut e_in_prev = 0.0;
    let mut e_out_prev = 0.0;
    for k in 0..2000 {
        let t = k as f64 * dt;
        let effort = v(&[(3.0 * t).cos(), 0.4]);
        let flow = v(&[1.5, (7.0 * t).sin()]);
        let p: f64 = 1.5 * (3.0 * t).cos() + 0.4 * (7.0 * t).sin();
        if p > 0.0 {
            pos += p * dt;
        } else {
            neg -= p * dt;
        }
        abs += p.abs() * dt;
        tdpa_observe(&mut l, &effort, &flow, dt);
        assert!(l.e_in >= e_in_prev && l.e_out >= e_out_prev);
        e_in_prev = l.e_in;
        e_out_prev = l.e_out;
    }
    assert!(pos > 0.1 && neg > 0.1);
    assert!((l.e_in - pos).abs() < 1e-12);
    assert!((l.e_out - neg).abs() < 1e-12);
    assert!((l.e_in + l.e_out - abs).abs() < 1e-12);
}

#[test]
fn damper_sizes_alpha_to_the_deficit() {
    let dt = 1e-3;
    let effort = v(&[3.0, -1.0]);
    let flow = v(&[0.2, 0.4]);

    let mut l = EnergyLedger::new(PortRole::Impedance);
    l.receive(0.5);
    l.e_out = 0.5;
    let out = tdpa_damp(&mut l, &effort, &flow, dt);
    assert_eq!(out, effort);
    assert_eq!(l.alpha, 0.0);

    let run = |deficit: f64| {
        let mut l = EnergyLedger::new(PortRole::Impedance);
        l.receive(0.5);
        l.e_out = 0.5 + deficit;
        let out = tdpa_damp(&mut l, &effort, &flow, dt);
        (l, out)
    };
    let (l1, out1) = run(1e-3);
    let alpha = 1e-3 / (dt * 0.2);
    assert!((l1.alpha - alpha).abs() < 1e-12);
    assert!(l1.e_out <= l1.e_in_remote + 1e-12);
    let expected = &effort - &flow * alpha;
    assert!((out1 - &expected).norm() < 1e-12);
    // Removed power over the step equals the deficit.
    let removed = (&expected - &effort).dot(&flow).abs() * dt;
    assert!((removed - 1e-3).abs() < 1e-15);

    let (l2, _) = run(2e-3);
    assert!((l2.dissipated - 2.0 * l1.dissipated).abs() < 1e-15);

    let mut l = EnergyLedger::new(PortRole::Admittance);
    l.e_out = 0.01;
    let out = tdpa_damp(&mut l, &effort, &flow, dt);
    let alpha = 0.01 / (dt * 10.0);
    assert!((out - (&flow + &effort * alpha)).norm() < 1e-12);
}

#[test]
fn ledger_reports_never_decrease() {
    let mut l = EnergyLedger::new(PortRole::Impedance);
    l.receive(2.0);
    l.receive(1.0);
    assert_eq!(l.e_in_remote, 2.0);
}

#[test]
fn stale_hold_keeps_then_decays() {
    let mut h = StaleHold::new(2);
    assert_eq!(h.get(0.0), v(&[0.0, 0.0]));
    h.update(v(&[1.0, -2.0]), 1.0);
    assert_eq!(h.get(1.0 + 0.99 * HOLD_TIMEOUT), v(&[1.0, -2.0]));
    let later = h.get(1.0 + HOLD_TIMEOUT + HOLD_DECAY);
    assert!((later[0] - (-1.0f64).exp()).abs() < 1e-12);
    assert!(h.get(3.0).norm() < 1e-12);
}

#[test]
fn loopback_is_ordered() {
    let (mut a, mut b) = Loopback::pair();
    a.send(b"one").unwrap();
    a.send(b"two").unwrap();
    b.send(b"back").unwrap();
    assert_eq!(b.recv().unwrap().as_deref(), Some(&b"one"[..]));
    assert_eq!(b.recv().unwrap().as_deref(), Some(&b"two"[..]));
    assert_eq!(b.recv().unwrap(), None);
    assert_eq!(a.recv().unwrap().as_deref(), Some(&b"back"[..]));
}

fn free_port() -> u16 {
    std::net::UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn udp_carries_one_packet_per_datagram() {
    let (mut leader, mut follower) = udp_pair(free_port(), free_port()).unwrap();
    let cmd = encode_leader_cmd(&sample_leader()).unwrap();
    leader.send(&cmd).unwrap();
    let fb = encode_follower_fb(&sample_follower()).unwrap();
    follower.send(&fb).unwrap();

    let wait = |t: &mut UdpTransport| {
        for _ in 0..200 {
            if let Some(b) = t.recv().unwrap() {
                return b;
            }
            std::thread::sleep(std::time::Duration::from_millis(5));
        }
        panic!("no datagram");
    };
    assert_eq!(decode_leader_cmd(&wait(&mut follower)).unwrap(), sample_leader());
    assert_eq!(decode_follower_fb(&wait(&mut leader)).unwrap(), sample_follower());
}

#[test]
fn default_ports() {
    if std::env::var(COMMAND_PORT_ENV).is_err() && std::env::var(FEEDBACK_PORT_ENV).is_err() {
        assert_eq!(udp_ports(), (47001, 47002));
    }
}

/// One-joint leader held by a spring-damper hand that follows a sinusoid,
/// one-joint follower tracking it into a stiff wall.
struct Plant {
    x_l: f64,
    v_l: f64,
    x_f: f64,
    v_f: f64,
}

struct Trace {
    samples: Vec<[f64; 4]>,
    leader: EnergyLedger,
    follower: EnergyLedger,
    worst_margin: f64,
    injected_alpha: Option<f64>,
}

fn simulate(cfg: ChannelConfig, tdpa: bool, inject_at: Option<usize>) -> Trace {
    let dt = 1e-3;
    let mut ch = BilateralChannel::symmetric(1, cfg, tdpa).unwrap();
    let mut p = Plant {
        x_l: 0.0,
        v_l: 0.0,
        x_f: 0.0,
        v_f: 0.0,
    };
    let wall = 0.02;
    let mut samples = Vec::new();
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut injected_alpha = None;
    for k in 0..3000 {
        let t = k as f64 * dt;
        ch.leader_send(t, dt, &v(&[p.x_l]), &v(&[p.v_l])).unwrap();
        let cmd = ch.follower_receive(t, dt);
        let (q_d, dq_d) = if cmd.valid { (cmd.q_d[0], cmd.dq_d[0]) } else { (0.0, 0.0) };
        let pen = p.x_f - wall;
        let f_env = if pen > 0.0 { -2e4 * pen } else { 0.0 };
        let f_ctl = 400.0 * (q_d - p.x_f) + 40.0 * (dq_d - p.v_f);
        p.v_f += dt * (f_ctl + f_env);
        p.x_f += dt * p.v_f;
        ch.follower_send(t, &v(&[f_env]), [f_env, 0.0, 0.0, 0.0, 0.0, 0.0], AutonomyLevel::Manual, Stage::PositionGuiding)
            .unwrap();
        if inject_at == Some(k) {
            let pkt = FollowerFeedbackPacket {
                seq: ch.take_feedback_seq(),
                t_send: to_micros(t),
                tau_d_f: vec![40.0 * p.v_l.signum()],
                f_ext_f: [0.0; 6],
                eta: AutonomyLevel::Manual,
                stage: Stage::PositionGuiding,
                e_in_f: ch.follower_ledger.e_in,
            };
            ch.inject_feedback(&encode_follower_fb(&pkt).unwrap(), t);
        }
        let fb = ch.leader_receive(t, dt, &v(&[p.v_l]));
        // The injected torque is applied this tick and observed on the next.
        if inject_at == Some(k.wrapping_sub(1)) {
            injected_alpha = Some(ch.leader_ledger.alpha);
        }
        let x_ref = 0.04 * (std::f64::consts::PI * t).sin();
        let f_h = 200.0 * (x_ref - p.x_l) - 10.0 * p.v_l;
        p.v_l += dt * (f_h + fb.tau[0]);
        p.x_l += dt * p.v_l;

        for l in [&ch.leader_ledger, &ch.follower_ledger] {
            worst = worst.max(l.e_out - l.e_in_remote);
        }
        samples.push([p.x_l, p.v_l, p.x_f, p.v_f]);
    }
    Trace {
        samples,
        leader: ch.leader_ledger.clone(),
        follower: ch.follower_ledger.clone(),
        worst_margin: worst,
        injected_alpha,
    }
}

#[test]
fn passivity_holds_under_delay_and_active_disturbance() {
    for delay in [0.0, 50.0, 200.0] {
        let cfg = ChannelConfig {
            delay_ms: delay,
            ..Default::default()
        };
        let tr = simulate(cfg, true, Some(1200));
        assert!(tr.worst_margin <= 1e-12, "delay {delay}: margin {}", tr.worst_margin);
        assert!(tr.leader.activations > 0, "delay {delay}: damper never engaged");
        if delay == 0.0 {
            assert!(tr.injected_alpha.unwrap() > 0.0);
        }
        assert!(tr.samples.iter().all(|s| s.iter().all(|x| x.is_finite() && x.abs() < 10.0)));
    }
}

#[test]
fn contact_makes_the_follower_feel_the_wall() {
    let tr = simulate(ChannelConfig::default(), true, None);
    let max_f = tr.samples.iter().map(|s| s[2]).fold(f64::NEG_INFINITY, f64::max);
    assert!(max_f > 0.02 && max_f < 0.025, "{max_f}");
    assert!(tr.follower.e_in > 0.0 && tr.leader.e_in > 0.0);
}

#[test]
fn zero_delay_tdpa_is_transparent() {
    let on = simulate(ChannelConfig::default(), true, None);
    let off = simulate(ChannelConfig::default(), false, None);
    assert_eq!(on.leader.activations + on.follower.activations, 0);
    let worst = on
        .samples
        .iter()
        .zip(&off.samples)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(worst <= 1e-9, "{worst}");
}
