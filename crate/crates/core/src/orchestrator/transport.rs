use std::io::{ErrorKind, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use thiserror::Error;

use super::protocol::{decode_message, encode_message, frame_len, FrameError, WireMessage};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("peer closed the connection")]
    Closed,
    #[error("timed out waiting for a message")]
    Timeout,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A bidirectional, ordered message channel.
pub trait Link: Send {
    fn send(&mut self, msg: &WireMessage) -> Result<(), LinkError>;
    /// Blocks until a message arrives; `None` waits indefinitely.
    fn recv(&mut self, timeout: Option<Duration>) -> Result<WireMessage, LinkError>;
}

/// In-process link carrying encoded frames over channels.
pub struct ChannelLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn channel_pair() -> (ChannelLink, ChannelLink) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (ChannelLink { tx: a_tx, rx: a_rx }, ChannelLink { tx: b_tx, rx: b_rx })
}

impl Link for ChannelLink {
    fn send(&mut self, msg: &WireMessage) -> Result<(), LinkError> {
        self.tx.send(encode_message(msg)?).map_err(|_| LinkError::Closed)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<WireMessage, LinkError> {
        let bytes = match timeout {
            Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => LinkError::Timeout,
                RecvTimeoutError::Disconnected => LinkError::Closed,
            })?,
            None => self.rx.recv().map_err(|_| LinkError::Closed)?,
        };
        let (msg, used) = decode_message(&bytes)?;
        debug_assert_eq!(used, bytes.len());
        Ok(msg)
    }
}

pub struct TcpLink {
    stream: TcpStream,
}

impl TcpLink {
    pub fn new(stream: TcpStream) -> Result<Self, LinkError> {
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn connect(addr: &str) -> Result<Self, LinkError> {
        Self::new(TcpStream::connect(addr)?)
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), LinkError> {
        self.stream.read_exact(buf).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe => LinkError::Closed,
            ErrorKind::WouldBlock | ErrorKind::TimedOut => LinkError::Timeout,
            _ => LinkError::Io(e),
        })
    }
}

impl Link for TcpLink {
    fn send(&mut self, msg: &WireMessage) -> Result<(), LinkError> {
        let bytes = encode_message(msg)?;
        self.stream.write_all(&bytes).map_err(|e| match e.kind() {
            ErrorKind::BrokenPipe | ErrorKind::ConnectionReset => LinkError::Closed,
            _ => LinkError::Io(e),
        })
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<WireMessage, LinkError> {
        self.stream.set_read_timeout(timeout)?;
        let mut frame = vec![0u8; 4];
        self.read_exact(&mut frame)?;
        let total = frame_len(&frame)?;
        frame.resize(total, 0);
        self.read_exact(&mut frame[4..])?;
        Ok(decode_message(&frame)?.0)
    }
}
