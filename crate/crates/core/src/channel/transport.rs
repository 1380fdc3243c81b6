use std::collections::VecDeque;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::{Arc, Mutex};

/// Default UDP port for leader to follower commands.
pub const DEFAULT_COMMAND_PORT: u16 = 47001;
/// Default UDP port for follower to leader feedback.
pub const DEFAULT_FEEDBACK_PORT: u16 = 47002;
pub const COMMAND_PORT_ENV: &str = "TELEOSIM_COMMAND_PORT";
pub const FEEDBACK_PORT_ENV: &str = "TELEOSIM_FEEDBACK_PORT";

/// Datagram transport, one packet per message.
pub trait Transport: Send {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()>;
    /// Next pending datagram, `None` when nothing is queued.
    fn recv(&mut self) -> io::Result<Option<Vec<u8>>>;
}

type Queue = Arc<Mutex<VecDeque<Vec<u8>>>>;

/// In-process endpoint pair sharing two ordered queues.
#[derive(Clone, Debug, Default)]
pub struct Loopback {
    tx: Queue,
    rx: Queue,
}

impl Loopback {
    pub fn pair() -> (Loopback, Loopback) {
        let a: Queue = Arc::default();
        let b: Queue = Arc::default();
        (
            Loopback {
                tx: a.clone(),
                rx: b.clone(),
            },
            Loopback { tx: b, rx: a },
        )
    }
}

impl Transport for Loopback {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.tx.lock().expect("loopback queue poisoned").push_back(bytes.to_vec());
        Ok(())
    }

    fn recv(&mut self) -> io::Result<Option<Vec<u8>>> {
        Ok(self.rx.lock().expect("loopback queue poisoned").pop_front())
    }
}

/// Non-blocking UDP endpoint bound locally and sending to a fixed peer.
#[derive(Debug)]
pub struct UdpTransport {
    socket: UdpSocket,
    peer: SocketAddr,
    buf: Vec<u8>,
}

impl UdpTransport {
    pub fn bind(local: SocketAddr, peer: SocketAddr) -> io::Result<Self> {
        let socket = UdpSocket::bind(local)?;
        socket.set_nonblocking(true)?;
        Ok(Self {
            socket,
            peer,
            buf: vec![0; 2048],
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }
}

impl Transport for UdpTransport {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.socket.send_to(bytes, self.peer).map(|_| ())
    }

    fn recv(&mut self) -> io::Result<Option<Vec<u8>>> {
        loop {
            match self.socket.recv_from(&mut self.buf) {
                Ok((len, from)) if from == self.peer => return Ok(Some(self.buf[..len].to_vec())),
                Ok(_) => continue,
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => return Ok(None),
                Err(e) => return Err(e),
            }
        }
    }
}

fn port_from_env(var: &str, default: u16) -> u16 {
    match std::env::var(var) {
        Ok(v) => v.parse().unwrap_or_else(|_| {
            log::warn!("ignoring {var}={v}: not a port number");
            default
        }),
        Err(_) => default,
    }
}

/// `(command, feedback)` ports, honouring the environment overrides.
pub fn udp_ports() -> (u16, u16) {
    (
        port_from_env(COMMAND_PORT_ENV, DEFAULT_COMMAND_PORT),
        port_from_env(FEEDBACK_PORT_ENV, DEFAULT_FEEDBACK_PORT),
    )
}

/// Leader and follower UDP endpoints on localhost: the leader sends to the
/// command port, the follower to the feedback port.
pub fn udp_pair(command_port: u16, feedback_port: u16) -> io::Result<(UdpTransport, UdpTransport)> {
    let cmd: SocketAddr = ([127, 0, 0, 1], command_port).into();
    let fb: SocketAddr = ([127, 0, 0, 1], feedback_port).into();
    let leader = UdpTransport::bind(fb, cmd)?;
    let follower = UdpTransport::bind(cmd, fb)?;
    Ok((leader, follower))
}
