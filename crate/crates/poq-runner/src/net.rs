//! Byte-stream transport for the protocol engines. Frames go over TCP in
//! their wire encoding; each connection carries one trial, opened with a
//! HELLO exchange that pins the protocol, parameters, and trial count
//! before any protocol frame flows.

use crate::RunnerError;
use poq_core::session::{Metered, Party};
use poq_core::transcript::Direction;
use poq_core::wire::{Frame, Hello, WireError};
use poq_core::ProtocolError;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

pub struct FrameStream {
    stream: TcpStream,
    buf: Vec<u8>,
}

impl FrameStream {
    pub fn new(stream: TcpStream) -> Result<Self, RunnerError> {
        stream
            .set_nodelay(true)
            .map_err(|e| RunnerError::Transport(e.to_string()))?;
        Ok(FrameStream {
            stream,
            buf: Vec::new(),
        })
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), RunnerError> {
        self.stream
            .write_all(&frame.encode())
            .map_err(|e| RunnerError::Transport(e.to_string()))
    }

    pub fn recv(&mut self) -> Result<Frame, RunnerError> {
        loop {
            if !self.buf.is_empty() {
                match Frame::decode(&self.buf) {
                    Ok((frame, used)) => {
                        self.buf.drain(..used);
                        return Ok(frame);
                    }
                    Err(WireError::Truncated { .. }) => {}
                    Err(e) => return Err(ProtocolError::from(e).into()),
                }
            }
            let mut chunk = [0u8; 4096];
            let n = self
                .stream
                .read(&mut chunk)
                .map_err(|e| RunnerError::Transport(e.to_string()))?;
            if n == 0 {
                return Err(RunnerError::Transport(
                    "connection closed mid-trial".into(),
                ));
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }
}

fn check_hello(ours: &Hello, theirs: &Hello) -> Result<(), RunnerError> {
    if ours != theirs {
        return Err(ProtocolError::HelloMismatch {
            ours: ours.params_hash,
            theirs: theirs.params_hash,
        }
        .into());
    }
    Ok(())
}

/// Connecting side speaks first; both sides verify before any protocol
/// frame moves.
pub fn client_hello(io: &mut FrameStream, ours: &Hello) -> Result<(), RunnerError> {
    io.send(&Frame::hello(ours))?;
    let theirs = io.recv()?.as_hello().map_err(ProtocolError::from)?;
    check_hello(ours, &theirs)
}

pub fn server_hello(io: &mut FrameStream, ours: &Hello) -> Result<(), RunnerError> {
    let theirs = io.recv()?.as_hello().map_err(ProtocolError::from)?;
    io.send(&Frame::hello(ours))?;
    check_hello(ours, &theirs)
}

/// Runs the frame-initiating party over the stream, returning its record
/// sequence and peak persisted bits. The sequence matches what the in-proc
/// driver produces for the same engines.
pub fn pump_initiator<V: Party + Metered + ?Sized>(
    party: &mut V,
    io: &mut FrameStream,
) -> Result<(Vec<(Direction, Frame)>, usize), RunnerError> {
    let mut log = Vec::new();
    let mut peak = party.persisted_bits();
    for frame in party.start()? {
        io.send(&frame)?;
        log.push((Direction::VerifierToProver, frame));
    }
    peak = peak.max(party.persisted_bits());
    while !party.finished() {
        let frame = io.recv()?;
        log.push((Direction::ProverToVerifier, frame.clone()));
        let replies = party.on_frame(&frame)?;
        peak = peak.max(party.persisted_bits());
        for frame in replies {
            io.send(&frame)?;
            log.push((Direction::VerifierToProver, frame));
        }
    }
    Ok((log, peak))
}

pub fn pump_responder<P: Party + ?Sized>(
    party: &mut P,
    io: &mut FrameStream,
) -> Result<Vec<(Direction, Frame)>, RunnerError> {
    let mut log = Vec::new();
    for frame in party.start()? {
        io.send(&frame)?;
        log.push((Direction::ProverToVerifier, frame));
    }
    while !party.finished() {
        let frame = io.recv()?;
        log.push((Direction::VerifierToProver, frame.clone()));
        for reply in party.on_frame(&frame)? {
            io.send(&reply)?;
            log.push((Direction::ProverToVerifier, reply));
        }
    }
    Ok(log)
}

/// One trial over a loopback socket pair: the initiator runs on the calling
/// thread, the responder on a helper thread. Returns the initiator-side
/// records, its peak bits, and the responder engine for inspection.
pub fn loopback_trial<V, P>(
    verifier: &mut V,
    prover: P,
    hello: &Hello,
) -> Result<(Vec<(Direction, Frame)>, usize, P), RunnerError>
where
    V: Party + Metered,
    P: Party + Send + 'static,
{
    let listener = TcpListener::bind(("127.0.0.1", 0))
        .map_err(|e| RunnerError::Transport(e.to_string()))?;
    let addr = listener
        .local_addr()
        .map_err(|e| RunnerError::Transport(e.to_string()))?;
    let peer_hello = *hello;
    let handle = thread::spawn(move || -> Result<P, RunnerError> {
        let mut prover = prover;
        let stream =
            TcpStream::connect(addr).map_err(|e| RunnerError::Transport(e.to_string()))?;
        let mut io = FrameStream::new(stream)?;
        client_hello(&mut io, &peer_hello)?;
        pump_responder(&mut prover, &mut io)?;
        Ok(prover)
    });
    let (stream, _) = listener
        .accept()
        .map_err(|e| RunnerError::Transport(e.to_string()))?;
    let mut io = FrameStream::new(stream)?;
    let server = server_hello(&mut io, hello)
        .and_then(|()| pump_initiator(verifier, &mut io));
    // Close our end before joining so a failed initiator cannot leave the
    // responder blocked on a read.
    drop(io);
    let prover = handle
        .join()
        .map_err(|_| RunnerError::Transport("responder thread panicked".into()))?;
    let (records, peak) = server?;
    let prover = prover?;
    Ok((records, peak, prover))
}

/// Dials with retries so a prover can start before its verifier finishes
/// binding.
pub fn connect_with_retry(endpoint: &str, timeout: Duration) -> Result<TcpStream, RunnerError> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(endpoint) {
            Ok(stream) => return Ok(stream),
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(RunnerError::Transport(format!(
                        "connect to {endpoint} failed after retries: {e}"
                    )));
                }
                thread::sleep(Duration::from_millis(50));
            }
        }
    }
}
