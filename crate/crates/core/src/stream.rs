//! Streaming frontend: hand frames in, interpolated joint commands out.
//!
//! Transport is length-prefixed JSON in both directions: a 4-byte big-endian
//! payload length followed by one JSON document. Input messages are frame
//! records in the trajectory schema; an optional trajectory header may come
//! first. Output messages are commands `{"t": seconds, "q": [...]}`.
//!
//! Two stages share a single-slot mailbox. The ingestion stage parses input
//! and overwrites the mailbox with the newest frame. The solve stage wakes at
//! `loop_rate`, takes whatever frame is newest, solves it and emits the
//! commands for the elapsed period at `command_rate`, interpolating linearly
//! from the previous target to the new one.
//!
//! Unpaced mode replaces the wall clock with frame timestamps: tick `k` is at
//! `t0 + k / loop_rate` where `t0` is the first frame's timestamp, and a
//! frame becomes visible at the first tick not earlier than its timestamp.
//! This makes a run a pure function of its input.

use std::io::{self, Read, Write};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io::{parse_frame_record, parse_header};
use crate::model::KinematicChain;
use crate::objective::{HumanHandFrame, ObjectiveConfig};
use crate::solver::{lerp, JointState, Retargeter, SolverSettings};

/// Largest accepted message payload.
pub const MAX_MESSAGE_BYTES: usize = 16 << 20;

/// Slack when comparing frame timestamps with tick times (s).
const TICK_SLACK: f64 = 1e-6;

/// Read one length-prefixed message. `Ok(None)` on a clean end of input.
pub fn read_message(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Io(io::ErrorKind::UnexpectedEof.into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_MESSAGE_BYTES {
        return Err(Error::InvalidInput(format!("message of {len} bytes exceeds {MAX_MESSAGE_BYTES}")));
    }
    let mut buf = vec![0; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn write_message(w: &mut impl Write, value: &impl Serialize) -> Result<()> {
    let body = serde_json::to_vec(value)?;
    let len = u32::try_from(body.len()).map_err(|_| Error::InvalidInput("message too large".into()))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&body)?;
    Ok(())
}

/// One emitted joint command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub t: f64,
    pub q: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub loop_rate: f64,
    pub command_rate: f64,
    /// Tick on the wall clock instead of frame timestamps.
    pub paced: bool,
    pub solver: SolverSettings,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self { loop_rate: 20.0, command_rate: 100.0, paced: false, solver: SolverSettings::default() }
    }
}

impl StreamConfig {
    fn validate(&self) -> Result<()> {
        let ok = |r: f64| r.is_finite() && r > 0.0;
        if !ok(self.loop_rate) || !ok(self.command_rate) || self.command_rate < self.loop_rate {
            return Err(Error::InvalidInput(format!(
                "rates must satisfy 0 < loop_rate ({}) <= command_rate ({})",
                self.loop_rate, self.command_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    pub frames_processed: usize,
    /// Frames overwritten in the mailbox before any tick consumed them.
    pub frames_dropped: usize,
    /// Undecodable, schema-invalid or out-of-order messages.
    pub frames_malformed: usize,
    /// Frames whose solve took longer than one loop period.
    pub frames_over_budget: usize,
    pub ticks: usize,
    pub commands_emitted: usize,
    /// s
    pub mean_solve_time: f64,
    /// s
    pub max_solve_time: f64,
    /// Mean of frame age at its tick plus solve time (s).
    pub latency_estimate: f64,
}

/// Result of a stream run: statistics and the per-tick targets.
#[derive(Clone, Debug)]
pub struct StreamRun {
    pub stats: StreamStats,
    /// Smoothed solution of every processed frame, stamped with the frame time.
    pub targets: Vec<JointState>,
}

struct Arrival {
    frame: HumanHandFrame,
    received: Instant,
}

#[derive(Default)]
struct MailboxState {
    latest: Option<Arrival>,
    /// Timestamp of the last frame read from input, published or not.
    horizon: Option<f64>,
    /// Virtual time the solve stage has reached (unpaced mode).
    clock: f64,
    closed: bool,
    dropped: usize,
    malformed: usize,
    error: Option<Error>,
}

struct Mailbox {
    state: Mutex<MailboxState>,
    changed: Condvar,
}

impl Mailbox {
    fn new() -> Self {
        Self {
            state: Mutex::new(MailboxState { clock: f64::NEG_INFINITY, ..Default::default() }),
            changed: Condvar::new(),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, MailboxState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn decode(bytes: &[u8], finger_count: usize, index: usize) -> Result<Option<HumanHandFrame>> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::Schema { index, message: e.to_string() })?;
    if value.get("format_version").is_some() {
        let header = parse_header(value)?;
        if header.finger_count != finger_count {
            return Err(Error::DimensionMismatch { expected: finger_count, got: header.finger_count });
        }
        return Ok(None);
    }
    parse_frame_record(value, finger_count, index).map(Some)
}

fn ingest(mut input: impl Read, mailbox: &Mailbox, finger_count: usize, paced: bool) {
    let mut index = 0;
    let mut last_ts = f64::NEG_INFINITY;
    loop {
        let bytes = match read_message(&mut input) {
            Ok(Some(b)) => b,
            Ok(None) => break,
            Err(e) => {
                mailbox.lock().error = Some(e);
                break;
            }
        };
        let frame = match decode(&bytes, finger_count, index) {
            Ok(Some(f)) if f.timestamp > last_ts => f,
            Ok(None) => continue,
            Ok(Some(_)) | Err(_) => {
                mailbox.lock().malformed += 1;
                index += 1;
                continue;
            }
        };
        index += 1;
        last_ts = frame.timestamp;

        let mut st = mailbox.lock();
        st.horizon = Some(frame.timestamp);
        mailbox.changed.notify_all();
        if !paced {
            while st.clock < frame.timestamp - TICK_SLACK {
                st = mailbox.changed.wait(st).unwrap_or_else(|e| e.into_inner());
            }
        }
        if st.latest.replace(Arrival { frame, received: Instant::now() }).is_some() {
            st.dropped += 1;
        }
        mailbox.changed.notify_all();
    }
    let mut st = mailbox.lock();
    st.closed = true;
    mailbox.changed.notify_all();
}

/// Command grid index range emitted at tick `k`: `(j(k-1), j(k)]`.
fn grid_index(k: usize, per_tick: f64) -> usize {
    (k as f64 * per_tick + 1e-9).floor() as usize
}

/// Run the pipeline until input ends. Commands are written to `output`.
pub fn run_stream(
    input: impl Read + Send,
    mut output: impl Write,
    chain: &KinematicChain,
    cfg: &ObjectiveConfig,
    q0: &JointState,
    config: &StreamConfig,
) -> Result<StreamRun> {
    config.validate()?;
    let mut retargeter = Retargeter::new(chain, cfg, config.solver, q0.clone())?;
    let mailbox = Mailbox::new();
    let finger_count = chain.finger_count();
    let period = 1.0 / config.loop_rate;
    let per_tick = config.command_rate / config.loop_rate;

    thread::scope(|scope| {
        scope.spawn(|| ingest(input, &mailbox, finger_count, config.paced));

        let mut stats = StreamStats::default();
        let mut targets = Vec::new();
        let mut solve_total = 0.0;
        let mut latency_total = 0.0;
        let mut previous = q0.clone();
        let mut t0 = None;
        let mut wall0 = Instant::now();

        let fail = |e: Error| {
            // Unblock the ingestion stage before returning.
            let mut st = mailbox.lock();
            st.clock = f64::INFINITY;
            st.closed = true;
            mailbox.changed.notify_all();
            e
        };

        for k in 0usize.. {
            let (arrival, tick_time) = {
                let mut st = mailbox.lock();
                // The first tick is anchored to the first frame.
                if t0.is_none() {
                    while st.horizon.is_none() && !st.closed {
                        st = mailbox.changed.wait(st).unwrap_or_else(|e| e.into_inner());
                    }
                    match st.horizon {
                        Some(h) => {
                            t0 = Some(h);
                            wall0 = Instant::now();
                        }
                        None => break,
                    }
                }
                let tick_time = t0.unwrap_or_default() + k as f64 * period;
                if config.paced {
                    drop(st);
                    let due = wall0 + Duration::from_secs_f64(k as f64 * period);
                    if let Some(wait) = due.checked_duration_since(Instant::now()) {
                        thread::sleep(wait);
                    }
                    st = mailbox.lock();
                } else {
                    st.clock = tick_time;
                    mailbox.changed.notify_all();
                    // Frames up to this tick are all published once the
                    // ingestion stage has read past it or closed.
                    while !st.closed && st.horizon.is_some_and(|h| h <= tick_time + TICK_SLACK) {
                        st = mailbox.changed.wait(st).unwrap_or_else(|e| e.into_inner());
                    }
                }
                let arrival = st.latest.take();
                if arrival.is_none() && st.closed {
                    break;
                }
                (arrival, tick_time)
            };
            stats.ticks += 1;

            let target = match arrival {
                Some(a) => {
                    let (q, report) = retargeter.step(&a.frame).map_err(fail)?;
                    let age = if config.paced {
                        a.received.elapsed().as_secs_f64() - report.solve_time
                    } else {
                        tick_time - a.frame.timestamp
                    };
                    stats.frames_processed += 1;
                    solve_total += report.solve_time;
                    latency_total += age.max(0.0) + report.solve_time;
                    stats.max_solve_time = stats.max_solve_time.max(report.solve_time);
                    if report.solve_time > period {
                        stats.frames_over_budget += 1;
                    }
                    targets.push(q.clone());
                    q
                }
                None => previous.clone(),
            };

            let tick0 = t0.unwrap_or_default();
            let hi = grid_index(k, per_tick);
            let lo = if k == 0 { 0 } else { grid_index(k - 1, per_tick) + 1 };
            for j in lo..=hi {
                let t = tick0 + j as f64 / config.command_rate;
                let q = if k == 0 {
                    target.q.clone()
                } else {
                    let u = ((t - (tick_time - period)) * config.loop_rate).clamp(0.0, 1.0);
                    if j == hi && (t - tick_time).abs() < TICK_SLACK {
                        target.q.clone()
                    } else {
                        lerp(&previous, &target, u).q
                    }
                };
                write_message(&mut output, &Command { t, q }).map_err(fail)?;
                stats.commands_emitted += 1;
            }
            output.flush().map_err(|e| fail(e.into()))?;
            previous = target;
        }

        let st = mailbox.lock();
        stats.frames_dropped = st.dropped;
        stats.frames_malformed = st.malformed;
        if stats.frames_processed > 0 {
            stats.mean_solve_time = solve_total / stats.frames_processed as f64;
            stats.latency_estimate = latency_total / stats.frames_processed as f64;
        }
        drop(st);
        if let Some(e) = mailbox.lock().error.take() {
            if !matches!(&e, Error::Io(io) if io.kind() == io::ErrorKind::UnexpectedEof) {
                return Err(e);
            }
            stats.frames_malformed += 1;
        }
        Ok(StreamRun { stats, targets })
    })
}

/// Encode frames as a length-prefixed message stream (header first).
pub fn encode_frames(frames: &[HumanHandFrame], rate_hz: f64) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if let Some(first) = frames.first() {
        write_message(&mut buf, &crate::io::TrajectoryHeader::new(first.finger_count(), rate_hz))?;
    }
    for f in frames {
        write_message(&mut buf, &crate::io::frame_record(f))?;
    }
    Ok(buf)
}

/// Decode a command stream produced by [`run_stream`].
pub fn decode_commands(mut bytes: &[u8]) -> Result<Vec<Command>> {
    let mut out = Vec::new();
    while let Some(msg) = read_message(&mut bytes)? {
        out.push(serde_json::from_slice(&msg)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framing_round_trip() {
        let mut buf = Vec::new();
        write_message(&mut buf, &Command { t: 0.5, q: vec![1.0, 2.0] }).unwrap();
        write_message(&mut buf, &Command { t: 0.6, q: vec![] }).unwrap();
        let cmds = decode_commands(&buf).unwrap();
        assert_eq!(cmds.len(), 2);
        assert_eq!(cmds[0].q, vec![1.0, 2.0]);
        assert!(read_message(&mut &buf[..3]).is_err());
    }

    #[test]
    fn grid_indices() {
        assert_eq!((0..4).map(|k| grid_index(k, 5.0)).collect::<Vec<_>>(), vec![0, 5, 10, 15]);
        assert_eq!(grid_index(3, 10.0 / 3.0), 10);
    }
}
