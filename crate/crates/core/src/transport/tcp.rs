//! TCP backend.
//!
//! Every connection opens with a 10-byte hello: magic `SDMP`, version byte,
//! sender id (`0xFF` for a client) and the little-endian CRC32 of the
//! canonical config. After that the stream carries `[u32 LE length][payload]`
//! frames. Party `i` dials every `j < i` and accepts from every `j > i`.

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError};

use super::{CostReport, Link, Message, Network};
use crate::error::{Error, Result, TransportError};
use crate::rss::PartyId;

pub const MAGIC: [u8; 4] = *b"SDMP";
pub const VERSION: u8 = 1;
pub const CLIENT_ID: u8 = 0xFF;
const HELLO_LEN: usize = 10;
const MAX_FRAME: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hello {
    pub magic: [u8; 4],
    pub version: u8,
    pub id: u8,
    pub config_hash: u32,
}

impl Hello {
    pub fn new(id: u8, config_hash: u32) -> Self {
        Hello {
            magic: MAGIC,
            version: VERSION,
            id,
            config_hash,
        }
    }

    pub fn to_bytes(&self) -> [u8; HELLO_LEN] {
        let mut b = [0u8; HELLO_LEN];
        b[..4].copy_from_slice(&self.magic);
        b[4] = self.version;
        b[5] = self.id;
        b[6..].copy_from_slice(&self.config_hash.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HELLO_LEN]) -> Self {
        Hello {
            magic: [b[0], b[1], b[2], b[3]],
            version: b[4],
            id: b[5],
            config_hash: u32::from_le_bytes([b[6], b[7], b[8], b[9]]),
        }
    }

    /// Checks a peer's hello against ours; the error names the first bad field.
    pub fn check(&self, ours: &Hello) -> Result<()> {
        if self.magic != MAGIC {
            return Err(Error::Handshake {
                field: "magic",
                detail: format!("expected {MAGIC:?}, got {:?}", self.magic),
            });
        }
        if self.version != ours.version {
            return Err(Error::Handshake {
                field: "version",
                detail: format!("expected {}, got {}", ours.version, self.version),
            });
        }
        if self.config_hash != ours.config_hash {
            return Err(Error::Handshake {
                field: "config_hash",
                detail: format!(
                    "expected {:#010x}, got {:#010x}",
                    ours.config_hash, self.config_hash
                ),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TcpOptions {
    pub id: PartyId,
    pub addrs: [String; 3],
    pub config_hash: u32,
    pub timeout: Duration,
    pub connect_timeout: Duration,
    pub expect_client: bool,
    pub version: u8,
}

impl TcpOptions {
    pub fn new(id: PartyId, addrs: [String; 3], config_hash: u32) -> Self {
        TcpOptions {
            id,
            addrs,
            config_hash,
            timeout: Duration::from_secs(30),
            connect_timeout: Duration::from_secs(30),
            expect_client: false,
            version: VERSION,
        }
    }

    fn hello(&self) -> Hello {
        Hello {
            version: self.version,
            ..Hello::new(self.id.index() as u8, self.config_hash)
        }
    }
}

/// Blocking framed stream, used for the client connection.
pub struct FrameStream {
    stream: TcpStream,
    what: String,
}

impl FrameStream {
    fn new(stream: TcpStream, what: String) -> Self {
        FrameStream { stream, what }
    }

    pub fn write_frame(&mut self, payload: &[u8]) -> Result<()> {
        write_frame(&mut self.stream, payload).map_err(|e| Error::io(&self.what, e))
    }

    pub fn read_frame(&mut self) -> Result<Vec<u8>> {
        read_frame(&mut self.stream).map_err(|e| Error::io(&self.what, e))
    }

    pub fn set_timeout(&mut self, t: Option<Duration>) -> Result<()> {
        self.stream
            .set_read_timeout(t)
            .map_err(|e| Error::io(&self.what, e))
    }
}

fn write_frame(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(4 + payload.len());
    buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    buf.extend_from_slice(payload);
    w.write_all(&buf)?;
    w.flush()
}

fn read_frame(r: &mut impl Read) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn exchange_hello(stream: &mut TcpStream, ours: &Hello, send_first: bool) -> Result<Hello> {
    let io_err = |e: io::Error| Error::Handshake {
        field: "stream",
        detail: e.to_string(),
    };
    let mut buf = [0u8; HELLO_LEN];
    if send_first {
        stream.write_all(&ours.to_bytes()).map_err(io_err)?;
        stream.read_exact(&mut buf).map_err(io_err)?;
    } else {
        stream.read_exact(&mut buf).map_err(io_err)?;
        stream.write_all(&ours.to_bytes()).map_err(io_err)?;
    }
    let theirs = Hello::from_bytes(&buf);
    theirs.check(ours)?;
    Ok(theirs)
}

fn dial(addr: &str, deadline: Instant, total: Duration) -> Result<TcpStream> {
    loop {
        let attempt = addr
            .to_socket_addrs()
            .ok()
            .and_then(|mut a| a.next())
            .map(|sa| TcpStream::connect_timeout(&sa, Duration::from_millis(500)));
        if let Some(Ok(s)) = attempt {
            return Ok(s);
        }
        if Instant::now() >= deadline {
            return Err(Error::ConnectTimeout {
                addr: addr.to_string(),
                after: total,
            });
        }
        thread::sleep(Duration::from_millis(25));
    }
}

/// Connects as the data owner to a party daemon.
pub fn connect_client(
    addr: &str,
    config_hash: u32,
    connect_timeout: Duration,
) -> Result<FrameStream> {
    let deadline = Instant::now() + connect_timeout;
    let mut s = dial(addr, deadline, connect_timeout)?;
    s.set_read_timeout(Some(connect_timeout))
        .map_err(|e| Error::io(addr, e))?;
    exchange_hello(&mut s, &Hello::new(CLIENT_ID, config_hash), true)?;
    s.set_read_timeout(None).map_err(|e| Error::io(addr, e))?;
    Ok(FrameStream::new(s, addr.to_string()))
}

/// A party's socket endpoints to both peers.
pub struct TcpLink {
    id: PartyId,
    streams: [Option<TcpStream>; 3],
    rx: [Option<Receiver<io::Result<Vec<u8>>>>; 3],
    recv_seq: [u64; 3],
    timeout: Duration,
}

impl TcpLink {
    fn new(id: PartyId, streams: [Option<TcpStream>; 3], timeout: Duration) -> Result<Self> {
        let mut rx: [Option<Receiver<io::Result<Vec<u8>>>>; 3] = Default::default();
        for (j, s) in streams.iter().enumerate() {
            if let Some(s) = s {
                s.set_nodelay(true).ok();
                let mut reader = s.try_clone().map_err(|e| Error::io("socket", e))?;
                let (tx, r) = unbounded();
                thread::spawn(move || loop {
                    match read_frame(&mut reader) {
                        Ok(f) => {
                            if tx.send(Ok(f)).is_err() {
                                break;
                            }
                        }
                        Err(e) => {
                            let _ = tx.send(Err(e));
                            break;
                        }
                    }
                });
                rx[j] = Some(r);
            }
        }
        Ok(TcpLink {
            id,
            streams,
            rx,
            recv_seq: [0; 3],
            timeout,
        })
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        for s in self.streams.iter().flatten() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Link for TcpLink {
    fn send(&mut self, msg: Message) -> Result<(), TransportError> {
        let peer = msg.receiver;
        let s = self.streams[peer.index()]
            .as_mut()
            .ok_or(TransportError::Payload {
                party: self.id,
                peer,
                detail: "no socket to self".into(),
            })?;
        write_frame(s, &msg.payload).map_err(|e| TransportError::Io {
            party: self.id,
            peer,
            detail: e.to_string(),
        })
    }

    fn recv(&mut self, from: PartyId) -> Result<Message, TransportError> {
        let sequence = self.recv_seq[from.index()];
        let rx = self.rx[from.index()]
            .as_ref()
            .ok_or(TransportError::Payload {
                party: self.id,
                peer: from,
                detail: "no socket from self".into(),
            })?;
        let payload = match rx.recv_timeout(self.timeout) {
            Ok(Ok(p)) => p,
            Ok(Err(e)) if e.kind() == io::ErrorKind::UnexpectedEof => {
                return Err(TransportError::Disconnected {
                    party: self.id,
                    peer: from,
                    sequence,
                })
            }
            Ok(Err(e)) => {
                return Err(TransportError::Io {
                    party: self.id,
                    peer: from,
                    detail: e.to_string(),
                })
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(TransportError::Timeout {
                    party: self.id,
                    peer: from,
                    sequence,
                    after: self.timeout,
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(TransportError::Disconnected {
                    party: self.id,
                    peer: from,
                    sequence,
                })
            }
        };
        self.recv_seq[from.index()] += 1;
        Ok(Message {
            sender: from,
            receiver: self.id,
            sequence,
            payload,
        })
    }
}

pub struct TcpSession {
    pub link: TcpLink,
    pub client: Option<FrameStream>,
}

/// Binds, dials lower ids, accepts higher ids (and the client if expected),
/// and checks every hello.
pub fn establish(opts: &TcpOptions) -> Result<TcpSession> {
    let me = opts.id.index();
    let ours = opts.hello();
    let listen_addr = &opts.addrs[me];
    let listener = TcpListener::bind(listen_addr).map_err(|e| Error::io(listen_addr, e))?;
    let deadline = Instant::now() + opts.connect_timeout;
    let mut streams: [Option<TcpStream>; 3] = Default::default();

    for j in 0..me {
        let mut s = dial(&opts.addrs[j], deadline, opts.connect_timeout)?;
        s.set_read_timeout(Some(opts.connect_timeout))
            .map_err(|e| Error::io(&opts.addrs[j], e))?;
        let theirs = exchange_hello(&mut s, &ours, true)?;
        if theirs.id as usize != j {
            return Err(Error::Handshake {
                field: "party_id",
                detail: format!(
                    "dialled P{j} at {}, peer claims id {}",
                    opts.addrs[j], theirs.id
                ),
            });
        }
        s.set_read_timeout(None)
            .map_err(|e| Error::io(&opts.addrs[j], e))?;
        streams[j] = Some(s);
    }

    let mut client = None;
    let pending = |streams: &[Option<TcpStream>; 3], client: &Option<FrameStream>| {
        (me + 1..3).any(|j| streams[j].is_none()) || (opts.expect_client && client.is_none())
    };
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::io(listen_addr, e))?;
    while pending(&streams, &client) {
        match listener.accept() {
            Ok((mut s, peer_addr)) => {
                s.set_nonblocking(false)
                    .map_err(|e| Error::io(listen_addr, e))?;
                s.set_read_timeout(Some(opts.connect_timeout))
                    .map_err(|e| Error::io(listen_addr, e))?;
                let theirs = exchange_hello(&mut s, &ours, false)?;
                s.set_read_timeout(None)
                    .map_err(|e| Error::io(listen_addr, e))?;
                let id = theirs.id as usize;
                if theirs.id == CLIENT_ID && opts.expect_client && client.is_none() {
                    client = Some(FrameStream::new(s, format!("client {peer_addr}")));
                } else if id > me && id < 3 && streams[id].is_none() {
                    streams[id] = Some(s);
                } else {
                    return Err(Error::Handshake {
                        field: "party_id",
                        detail: format!("unexpected connection claiming id {}", theirs.id),
                    });
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(Error::ConnectTimeout {
                        addr: listen_addr.clone(),
                        after: opts.connect_timeout,
                    });
                }
                thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(Error::io(listen_addr, e)),
        }
    }

    log::debug!(
        "{}: connected to peers{}",
        opts.id,
        if client.is_some() { " and client" } else { "" }
    );
    Ok(TcpSession {
        link: TcpLink::new(opts.id, streams, opts.timeout)?,
        client,
    })
}

/// Runs one party program over sockets. The report holds this party's view.
pub fn run_tcp_party<T, F>(opts: &TcpOptions, f: F) -> Result<(T, CostReport)>
where
    F: FnOnce(&mut Network) -> Result<T>,
{
    let session = establish(opts)?;
    let mut net = Network::new(opts.id, Box::new(session.link));
    let out = f(&mut net).map_err(|e| Error::Abort {
        party: opts.id,
        source: Box::new(e),
    })?;
    let cost = net.take_cost();
    Ok((out, CostReport::from_single(opts.id.index(), &cost)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_roundtrip_and_checks() {
        let h = Hello::new(2, 0xDEADBEEF);
        assert_eq!(Hello::from_bytes(&h.to_bytes()), h);
        let bad_version = Hello { version: 9, ..h };
        assert!(matches!(
            bad_version.check(&h),
            Err(Error::Handshake {
                field: "version",
                ..
            })
        ));
        let bad_hash = Hello {
            config_hash: 1,
            ..h
        };
        assert!(matches!(
            bad_hash.check(&h),
            Err(Error::Handshake {
                field: "config_hash",
                ..
            })
        ));
    }

    #[test]
    fn frames_roundtrip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"abc").unwrap();
        assert_eq!(buf.len(), 7);
        assert_eq!(read_frame(&mut &buf[..]).unwrap(), b"abc");
    }
}
