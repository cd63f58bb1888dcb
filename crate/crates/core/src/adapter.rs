//! Binary framed protocol for external enhancement and scale-prediction
//! processes, spoken over the child's stdin/stdout.
//!
//! All integers and samples are little-endian; samples are f32,
//! channel-planar.
//!
//! ```text
//! ENH1 request : "ENH1" | u32 D | u32 channels | f32 gain | D*D*channels samples (LAB)
//! ENH1 response: "ENH1" | u32 D | u32 channels | D*D*channels samples (LAB)
//! SCL1 request : "SCL1" | u32 height | u32 width | u32 channels | samples (LAB)
//! SCL1 response: "SCL1" | u32 height | u32 width | u32 1 | height*width p_long samples
//! ```
//!
//! One response per request, in order. A connection carries one request at
//! a time; parallel callers get their own connections from a pool.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

pub const ENH_MAGIC: [u8; 4] = *b"ENH1";
pub const SCL_MAGIC: [u8; 4] = *b"SCL1";

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Upper bound on samples in one frame; larger headers are treated as
/// corrupt.
const MAX_SAMPLES: usize = 1 << 28;

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("failed to launch adapter `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("adapter process exited before responding ({status})")]
    Exited { status: String },
    #[error("malformed frame from adapter: {0}")]
    Malformed(String),
    #[error("adapter response shape {found} does not match request {expected}")]
    ShapeMismatch { expected: String, found: String },
    #[error("adapter did not respond within {0:?}")]
    Timeout(Duration),
    #[error("adapter i/o error: {0}")]
    Io(#[source] io::Error),
}

/// Which framing a stream uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Enhance,
    Scale,
}

impl FrameKind {
    pub fn magic(self) -> [u8; 4] {
        match self {
            FrameKind::Enhance => ENH_MAGIC,
            FrameKind::Scale => SCL_MAGIC,
        }
    }
}

/// A decoded frame. For `Enhance` frames `height == width == D`; `gain` is
/// only present on enhancement requests.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub gain: Option<f32>,
    pub samples: Vec<f32>,
}

impl Frame {
    pub fn enhance_request(d: u32, channels: u32, gain: f32, samples: Vec<f32>) -> Frame {
        Frame { kind: FrameKind::Enhance, height: d, width: d, channels, gain: Some(gain), samples }
    }

    pub fn enhance_response(d: u32, channels: u32, samples: Vec<f32>) -> Frame {
        Frame { kind: FrameKind::Enhance, height: d, width: d, channels, gain: None, samples }
    }

    pub fn scale_request(height: u32, width: u32, channels: u32, samples: Vec<f32>) -> Frame {
        Frame { kind: FrameKind::Scale, height, width, channels, gain: None, samples }
    }

    pub fn scale_response(height: u32, width: u32, samples: Vec<f32>) -> Frame {
        Frame { kind: FrameKind::Scale, height, width, channels: 1, gain: None, samples }
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    /// Serializes the frame. Enhancement frames must be square.
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + self.samples.len() * 4);
        buf.extend_from_slice(&self.kind.magic());
        match self.kind {
            FrameKind::Enhance => {
                debug_assert_eq!(self.height, self.width);
                buf.extend_from_slice(&self.height.to_le_bytes());
                buf.extend_from_slice(&self.channels.to_le_bytes());
            }
            FrameKind::Scale => {
                buf.extend_from_slice(&self.height.to_le_bytes());
                buf.extend_from_slice(&self.width.to_le_bytes());
                buf.extend_from_slice(&self.channels.to_le_bytes());
            }
        }
        if let Some(g) = self.gain {
            buf.extend_from_slice(&g.to_le_bytes());
        }
        for s in &self.samples {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        buf
    }
}

/// Fills `buf`, distinguishing a clean end of stream before the first byte
/// (`Ok(false)`) from a truncated read (error).
fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, AdapterError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => {
                return Err(AdapterError::Malformed(format!(
                    "short frame: stream ended after {filled} of {} bytes",
                    buf.len()
                )))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(AdapterError::Io(e)),
        }
    }
    Ok(true)
}

fn read_body<R: Read>(r: &mut R, len: usize) -> Result<Vec<u8>, AdapterError> {
    let mut buf = vec![0u8; len];
    if len > 0 && !read_exact_or_eof(r, &mut buf)? {
        return Err(AdapterError::Malformed(format!("short frame: stream ended before {len} payload bytes")));
    }
    Ok(buf)
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().unwrap())
}

/// Reads one frame. Returns `Ok(None)` on a clean end of stream at a frame
/// boundary. `request` selects whether an enhancement frame carries a gain.
pub fn read_frame<R: Read>(r: &mut R, kind: FrameKind, request: bool) -> Result<Option<Frame>, AdapterError> {
    let mut magic = [0u8; 4];
    if !read_exact_or_eof(r, &mut magic)? {
        return Ok(None);
    }
    if magic != kind.magic() {
        return Err(AdapterError::Malformed(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(&kind.magic())
        )));
    }
    let (height, width, channels, gain) = match kind {
        FrameKind::Enhance => {
            let head = read_body(r, if request { 12 } else { 8 })?;
            let d = le_u32(&head[0..4]);
            let gain = request.then(|| f32::from_le_bytes(head[8..12].try_into().unwrap()));
            (d, d, le_u32(&head[4..8]), gain)
        }
        FrameKind::Scale => {
            let head = read_body(r, 12)?;
            (le_u32(&head[0..4]), le_u32(&head[4..8]), le_u32(&head[8..12]), None)
        }
    };
    let n = (height as usize)
        .checked_mul(width as usize)
        .and_then(|v| v.checked_mul(channels as usize))
        .filter(|&v| v <= MAX_SAMPLES)
        .ok_or_else(|| AdapterError::Malformed(format!("implausible frame size {height}x{width}x{channels}")))?;
    let body = read_body(r, n * 4)?;
    let samples = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Some(Frame { kind, height, width, channels, gain, samples }))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()
}

/// Request loop for adapter servers: reads requests of `kind` from `input`
/// until end of stream and writes whatever `handle` returns.
pub fn serve<R: Read, W: Write>(
    input: R,
    output: W,
    kind: FrameKind,
    mut handle: impl FnMut(Frame) -> Vec<u8>,
) -> Result<(), AdapterError> {
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    while let Some(frame) = read_frame(&mut input, kind, true)? {
        output.write_all(&handle(frame)).map_err(AdapterError::Io)?;
        output.flush().map_err(AdapterError::Io)?;
    }
    Ok(())
}

/// One running adapter process.
struct Connection {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    responses: Receiver<Result<Option<Frame>, AdapterError>>,
}

impl Connection {
    fn spawn(command: &[String], kind: FrameKind) -> Result<Connection, AdapterError> {
        let (program, args) = command.split_first().ok_or_else(|| AdapterError::Spawn {
            command: String::new(),
            source: io::Error::new(io::ErrorKind::InvalidInput, "empty command"),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| AdapterError::Spawn { command: command.join(" "), source })?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || loop {
            let msg = read_frame(&mut stdout, kind, false);
            let stop = !matches!(msg, Ok(Some(_)));
            if tx.send(msg).is_err() || stop {
                break;
            }
        });
        log::debug!("spawned adapter `{}` (pid {})", command.join(" "), child.id());
        Ok(Connection { child, stdin, responses: rx })
    }

    fn exit_status(&mut self) -> String {
        // The reader saw end of stream; give the process a moment to finish.
        for _ in 0..50 {
            if let Ok(Some(status)) = self.child.try_wait() {
                return status.to_string();
            }
            thread::sleep(Duration::from_millis(10));
        }
        "stdout closed".to_string()
    }

    fn round_trip(&mut self, request: &Frame, timeout: Duration) -> Result<Frame, AdapterError> {
        let sent = write_frame(&mut self.stdin, request);
        match self.responses.recv_timeout(timeout) {
            Ok(Ok(Some(frame))) => Ok(frame),
            Ok(Ok(None)) => Err(AdapterError::Exited { status: self.exit_status() }),
            Ok(Err(e)) => Err(e),
            Err(RecvTimeoutError::Timeout) => Err(AdapterError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => match sent {
                Err(e) => Err(AdapterError::Io(e)),
                Ok(()) => Err(AdapterError::Exited { status: self.exit_status() }),
            },
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Pool of connections to one adapter command. Failed connections are
/// discarded, never reused.
pub struct AdapterPool {
    command: Vec<String>,
    kind: FrameKind,
    timeout: Duration,
    idle: Mutex<Vec<Connection>>,
}

impl AdapterPool {
    pub fn new(command: Vec<String>, kind: FrameKind, timeout: Duration) -> AdapterPool {
        AdapterPool { command, kind, timeout, idle: Mutex::new(Vec::new()) }
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    /// Sends `request` and checks the response's shape against
    /// `expected = (height, width, channels)`.
    pub fn call(&self, request: &Frame, expected: (u32, u32, u32)) -> Result<Frame, AdapterError> {
        let conn = self.idle.lock().unwrap_or_else(|e| e.into_inner()).pop();
        let mut conn = match conn {
            Some(c) => c,
            None => Connection::spawn(&self.command, self.kind)?,
        };
        let response = conn.round_trip(request, self.timeout)?;
        let found = (response.height, response.width, response.channels);
        if found != expected || response.samples.len() != (found.0 * found.1 * found.2) as usize {
            return Err(AdapterError::ShapeMismatch {
                expected: format!("{}x{}x{}", expected.0, expected.1, expected.2),
                found: response.shape_string(),
            });
        }
        self.idle.lock().unwrap_or_else(|e| e.into_inner()).push(conn);
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn enhance_request_bytes() {
        let f = Frame::enhance_request(2, 1, 1.5, vec![1.0, 2.0, 3.0, 4.0]);
        let bytes = f.encode();
        assert_eq!(&bytes[0..4], b"ENH1");
        assert_eq!(&bytes[4..8], &[2, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 16);
        let back = read_frame(&mut Cursor::new(&bytes), FrameKind::Enhance, true).unwrap().unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn enhance_response_has_no_gain() {
        let f = Frame::enhance_response(1, 3, vec![0.5, -1.0, 2.0]);
        let bytes = f.encode();
        assert_eq!(bytes.len(), 12 + 12);
        let back = read_frame(&mut Cursor::new(&bytes), FrameKind::Enhance, false).unwrap().unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn scale_frames_carry_height_and_width() {
        let f = Frame::scale_response(2, 3, vec![0.0, 0.5, 1.0, 0.25, 0.75, 1.0]);
        let bytes = f.encode();
        assert_eq!(&bytes[0..4], b"SCL1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        let back = read_frame(&mut Cursor::new(&bytes), FrameKind::Scale, false).unwrap().unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn clean_eof_and_truncation() {
        assert!(read_frame(&mut Cursor::new(Vec::<u8>::new()), FrameKind::Enhance, false).unwrap().is_none());
        let bytes = Frame::enhance_response(2, 1, vec![0.0; 4]).encode();
        for cut in [2, 6, 13, bytes.len() - 1] {
            let err = read_frame(&mut Cursor::new(&bytes[..cut]), FrameKind::Enhance, false).unwrap_err();
            assert!(matches!(err, AdapterError::Malformed(_)), "cut {cut}: {err}");
        }
    }

    #[test]
    fn bad_magic_and_absurd_sizes() {
        let mut bytes = Frame::enhance_response(2, 1, vec![0.0; 4]).encode();
        bytes[0] = b'X';
        assert!(matches!(
            read_frame(&mut Cursor::new(&bytes), FrameKind::Enhance, false),
            Err(AdapterError::Malformed(_))
        ));
        let mut huge = b"ENH1".to_vec();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&3u32.to_le_bytes());
        assert!(matches!(
            read_frame(&mut Cursor::new(&huge), FrameKind::Enhance, false),
            Err(AdapterError::Malformed(_))
        ));
    }

    #[test]
    fn serve_loop_echoes_in_order() {
        let mut input = Vec::new();
        for k in 0..3 {
            input.extend(Frame::enhance_request(1, 1, 2.0, vec![k as f32]).encode());
        }
        let mut output = Vec::new();
        serve(Cursor::new(input), &mut output, FrameKind::Enhance, |f| {
            Frame::enhance_response(f.height, f.channels, f.samples).encode()
        })
        .unwrap();
        let mut cur = Cursor::new(output);
        for k in 0..3 {
            let f = read_frame(&mut cur, FrameKind::Enhance, false).unwrap().unwrap();
            assert_eq!(f.samples, vec![k as f32]);
        }
        assert!(read_frame(&mut cur, FrameKind::Enhance, false).unwrap().is_none());
    }

    #[test]
    fn spawn_failure_is_reported() {
        let pool = AdapterPool::new(vec!["/nonexistent/adapter".into()], FrameKind::Enhance, DEFAULT_TIMEOUT);
        let req = Frame::enhance_request(1, 1, 1.0, vec![0.0]);
        assert!(matches!(pool.call(&req, (1, 1, 1)), Err(AdapterError::Spawn { .. })));
    }
}
