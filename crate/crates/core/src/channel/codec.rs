use thiserror::Error;

use crate::controllers::AutonomyLevel;
use crate::environment::Stage;

pub const LEADER_MAGIC: [u8; 4] = *b"TSA1";
pub const FOLLOWER_MAGIC: [u8; 4] = *b"TSF1";
pub const PROTOCOL_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("protocol version {got}, expected {expected}")]
    VersionMismatch { expected: u8, got: u8 },
    #[error("truncated packet: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid autonomy level {0}")]
    InvalidEta(u8),
    #[error("invalid stage {0}")]
    InvalidStage(u8),
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("{field} has {got} entries, expected {expected}")]
    Length {
        field: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Leader to follower: joint position and velocity command.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaderCommandPacket {
    pub seq: u32,
    /// µs since session start.
    pub t_send: u64,
    pub q_d: Vec<f64>,
    pub dq_d: Vec<f64>,
    /// Cumulative energy entering the channel at the leader port, J.
    pub e_in_l: f64,
}

/// Follower to leader: feedback torque and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct FollowerFeedbackPacket {
    pub seq: u32,
    pub t_send: u64,
    pub tau_d_f: Vec<f64>,
    /// Contact wrench at the follower end effector, end-effector axes.
    pub f_ext_f: [f64; 6],
    pub eta: AutonomyLevel,
    pub stage: Stage,
    pub e_in_f: f64,
}

pub fn leader_packet_len(n: usize) -> usize {
    4 + 1 + 4 + 8 + 1 + 16 * n + 8
}

pub fn follower_packet_len(n: usize) -> usize {
    4 + 1 + 4 + 8 + 1 + 8 * n + 48 + 1 + 1 + 8
}

fn check_finite(field: &'static str, v: &[f64]) -> Result<(), CodecError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CodecError::NonFinite(field))
    }
}

fn joint_count(field: &'static str, len: usize) -> Result<u8, CodecError> {
    u8::try_from(len).map_err(|_| CodecError::Length {
        field,
        expected: u8::MAX as usize,
        got: len,
    })
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        a
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }

    fn f64s(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Checks magic, version and total length; returns the joint count.
fn header(buf: &[u8], magic: [u8; 4], len_of: fn(usize) -> usize) -> Result<usize, CodecError> {
    const HEAD: usize = 18;
    if buf.len() < HEAD {
        return Err(CodecError::Truncated {
            needed: HEAD,
            got: buf.len(),
        });
    }
    let got_magic: [u8; 4] = buf[..4].try_into().expect("length checked");
    if got_magic != magic {
        return Err(CodecError::BadMagic(got_magic));
    }
    if buf[4] != PROTOCOL_VERSION {
        return Err(CodecError::VersionMismatch {
            expected: PROTOCOL_VERSION,
            got: buf[4],
        });
    }
    let n = buf[17] as usize;
    let needed = len_of(n);
    if buf.len() < needed {
        return Err(CodecError::Truncated {
            needed,
            got: buf.len(),
        });
    }
    if buf.len() > needed {
        return Err(CodecError::TrailingBytes(buf.len() - needed));
    }
    Ok(n)
}

pub fn encode_leader_cmd(p: &LeaderCommandPacket) -> Result<Vec<u8>, CodecError> {
    let n = joint_count("q_d", p.q_d.len())?;
    if p.dq_d.len() != p.q_d.len() {
        return Err(CodecError::Length {
            field: "dq_d",
            expected: p.q_d.len(),
            got: p.dq_d.len(),
        });
    }
    check_finite("q_d", &p.q_d)?;
    check_finite("dq_d", &p.dq_d)?;
    check_finite("e_in_l", &[p.e_in_l])?;
    let mut out = Vec::with_capacity(leader_packet_len(n as usize));
    out.extend_from_slice(&LEADER_MAGIC);
    out.push(PROTOCOL_VERSION);
    out.extend_from_slice(&p.seq.to_le_bytes());
    out.extend_from_slice(&p.t_send.to_le_bytes());
    out.push(n);
    put_f64s(&mut out, &p.q_d);
    put_f64s(&mut out, &p.dq_d);
    out.extend_from_slice(&p.e_in_l.to_le_bytes());
    Ok(out)
}

pub fn decode_leader_cmd(buf: &[u8]) -> Result<LeaderCommandPacket, CodecError> {
    let n = header(buf, LEADER_MAGIC, leader_packet_len)?;
    let mut r = Reader { buf, pos: 5 };
    let seq = r.u32();
    let t_send = r.u64();
    r.u8();
    let p = LeaderCommandPacket {
        seq,
        t_send,
        q_d: r.f64s(n),
        dq_d: r.f64s(n),
        e_in_l: r.f64(),
    };
    check_finite("q_d", &p.q_d)?;
    check_finite("dq_d", &p.dq_d)?;
    check_finite("e_in_l", &[p.e_in_l])?;
    Ok(p)
}

pub fn encode_follower_fb(p: &FollowerFeedbackPacket) -> Result<Vec<u8>, CodecError> {
    let n = joint_count("tau_d_f", p.tau_d_f.len())?;
    check_finite("tau_d_f", &p.tau_d_f)?;
    check_finite("f_ext_f", &p.f_ext_f)?;
    check_finite("e_in_f", &[p.e_in_f])?;
    let mut out = Vec::with_capacity(follower_packet_len(n as usize));
    out.extend_from_slice(&FOLLOWER_MAGIC);
    out.push(PROTOCOL_VERSION);
    out.extend_from_slice(&p.seq.to_le_bytes());
    out.extend_from_slice(&p.t_send.to_le_bytes());
    out.push(n);
    put_f64s(&mut out, &p.tau_d_f);
    put_f64s(&mut out, &p.f_ext_f);
    out.push(p.eta.as_u8());
    out.push(p.stage.as_u8());
    out.extend_from_slice(&p.e_in_f.to_le_bytes());
    Ok(out)
}

pub fn decode_follower_fb(buf: &[u8]) -> Result<FollowerFeedbackPacket, CodecError> {
    let n = header(buf, FOLLOWER_MAGIC, follower_packet_len)?;
    let mut r = Reader { buf, pos: 5 };
    let seq = r.u32();
    let t_send = r.u64();
    r.u8();
    let tau_d_f = r.f64s(n);
    let f: Vec<f64> = r.f64s(6);
    let eta_raw = r.u8();
    let stage_raw = r.u8();
    let e_in_f = r.f64();
    check_finite("tau_d_f", &tau_d_f)?;
    check_finite("f_ext_f", &f)?;
    check_finite("e_in_f", &[e_in_f])?;
    Ok(FollowerFeedbackPacket {
        seq,
        t_send,
        tau_d_f,
        f_ext_f: f.try_into().expect("six values"),
        eta: AutonomyLevel::from_u8(eta_raw).ok_or(CodecError::InvalidEta(eta_raw))?,
        stage: Stage::from_u8(stage_raw).ok_or(CodecError::InvalidStage(stage_raw))?,
        e_in_f,
    })
}
