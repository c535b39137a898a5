//! Live session service: one client at a time over a TCP connection
//! upgraded from HTTP to newline-delimited JSON frames.

use crate::commands::{claim, load_policy, load_world};
use crate::{input_error, runtime_error, CliError, Config};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::time::Instant;
use teamplan::adapt::{Adapter, CycleRecord, HumanSource, PlannedCycle};
use teamplan::fetch::{deploy_live, WorldSpec};
use teamplan::live::{Frame, JsonLines, LiveChannel, PlanSummary, PROTOCOL_VERSION};
use teamplan::Error;

/// Value of the `Upgrade` header a client must send.
pub const UPGRADE_TOKEN: &str = "teamplan-jsonl";
pub const SERVER_AGENT: &str = "teamplan";

pub fn bind(addr: &str) -> Result<TcpListener, CliError> {
    TcpListener::bind(addr).map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => input_error(format!("port busy: {addr} is already in use")),
        _ => input_error(format!("cannot listen on {addr}: {e}")),
    })
}

/// Reads the HTTP request head and answers it. Returns false when the
/// request was not an upgrade to the session protocol.
fn handshake(reader: &mut impl BufRead, writer: &mut impl Write) -> std::io::Result<bool> {
    let mut request = String::new();
    reader.read_line(&mut request)?;
    let mut upgrade = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(false);
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("upgrade") {
                upgrade = Some(value.trim().to_string());
            }
        }
    }
    let ok = request.starts_with("GET ") && upgrade.as_deref() == Some(UPGRADE_TOKEN);
    if ok {
        write!(
            writer,
            "HTTP/1.1 101 Switching Protocols\r\nUpgrade: {UPGRADE_TOKEN}\r\nConnection: Upgrade\r\n\r\n"
        )?;
    } else {
        write!(
            writer,
            "HTTP/1.1 426 Upgrade Required\r\nUpgrade: {UPGRADE_TOKEN}\r\nConnection: close\r\nContent-Length: 0\r\n\r\n"
        )?;
    }
    writer.flush()?;
    Ok(ok)
}

/// Adaptation state that outlives individual connections.
pub struct Service<'a> {
    adapter: Adapter<'a>,
    world: &'a WorldSpec,
    pending: Option<PlannedCycle>,
    log: BufWriter<File>,
}

enum Next {
    Continue,
    Close,
}

impl<'a> Service<'a> {
    fn record(&mut self, record: &CycleRecord) -> Result<(), CliError> {
        serde_json::to_writer(&mut self.log, record).map_err(runtime_error)?;
        self.log.write_all(b"\n")?;
        self.log.flush()?;
        Ok(())
    }

    fn take_plan(&mut self) -> Result<PlannedCycle, CliError> {
        match self.pending.take() {
            Some(p) => Ok(p),
            None => Ok(self.adapter.plan()?),
        }
    }

    fn run_cycle(&mut self, channel: &mut dyn LiveChannel) -> Result<Next, CliError> {
        if self.adapter.finished() {
            channel.send(&Frame::error("finished", "every configured cycle has run"))?;
            return Ok(Next::Continue);
        }
        let planned = self.take_plan()?;
        channel.send(&Frame::StartCycle {
            cycle: planned.cycle as u32,
            plan: Some(PlanSummary::from(&planned.plan)),
            world: Some(Box::new(self.world.clone())),
        })?;
        let started = Instant::now();
        let outcome = deploy_live(&planned.plan, self.world, channel);
        let deploy_ms = started.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(obs) => {
                let record = self.adapter.complete(planned, &obs, deploy_ms)?;
                self.record(&record)?;
                log::info!("cycle {} complete, makespan {:.2}", record.cycle, obs.makespan);
                channel.send(&self.adapter.cycle_complete_frame(&record, Some(&obs)))?;
                if !self.adapter.finished() {
                    self.pending = Some(self.adapter.plan()?);
                }
                Ok(Next::Continue)
            }
            Err(Error::LiveAborted(reason)) => self.abort(planned, reason, deploy_ms),
            Err(Error::Io(e)) => self.abort(planned, e.to_string(), deploy_ms),
            Err(e) => Err(e.into()),
        }
    }

    fn abort(&mut self, planned: PlannedCycle, reason: String, deploy_ms: f64) -> Result<Next, CliError> {
        log::warn!("cycle {} aborted: {reason}", planned.cycle);
        let record = self.adapter.abort(planned, reason, deploy_ms);
        self.record(&record)?;
        Ok(Next::Close)
    }

    /// Serves one connection to completion.
    pub fn session(&mut self, stream: TcpStream) -> Result<(), CliError> {
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        if !handshake(&mut reader, &mut writer)? {
            log::warn!("rejected a connection without a session upgrade");
            return Ok(());
        }
        let mut channel = JsonLines::new(reader, writer);
        match channel.recv() {
            Ok(Some(Frame::Hello { protocol, .. })) if protocol == PROTOCOL_VERSION => {}
            Ok(Some(Frame::Hello { protocol, .. })) => {
                let msg = format!("protocol {protocol} not supported (server speaks {PROTOCOL_VERSION})");
                return Ok(channel.send(&Frame::error("protocol", msg))?);
            }
            Ok(Some(other)) => {
                let msg = format!("expected hello, got {}", other.kind());
                return Ok(channel.send(&Frame::error("protocol", msg))?);
            }
            Ok(None) => return Ok(()),
            Err(e) => return Ok(channel.send(&Frame::error("protocol", e.to_string()))?),
        }
        channel.send(&Frame::Hello {
            protocol: PROTOCOL_VERSION,
            agent: SERVER_AGENT.into(),
        })?;
        loop {
            let frame = match channel.recv() {
                Ok(Some(f)) => f,
                Ok(None) => return Ok(()),
                Err(e @ Error::LiveAborted(_)) => {
                    return Ok(channel.send(&Frame::error("protocol", e.to_string()))?);
                }
                Err(e) => return Err(e.into()),
            };
            match frame {
                Frame::StartCycle { .. } => {
                    if let Next::Close = self.run_cycle(&mut channel)? {
                        return Ok(());
                    }
                }
                // input keeps streaming while a summary is on screen
                Frame::HumanMove { .. } => {}
                other => {
                    let msg = format!("unexpected {} frame between cycles", other.kind());
                    return Ok(channel.send(&Frame::error("protocol", msg))?);
                }
            }
        }
    }
}

/// Listens on the configured address and serves sessions one at a time;
/// stops after `sessions` connections when given.
pub fn serve_cmd(cfg: &Config, out: &Path, force: bool, sessions: Option<usize>) -> Result<(), CliError> {
    let [log_path] = <[std::path::PathBuf; 1]>::try_from(claim(out, &["live.jsonl".into()], force)?).unwrap();
    let world = load_world(&cfg.world)?;
    let policy = load_policy(&cfg.policy)?;
    let mut run = cfg.run.clone();
    run.human = HumanSource::Live;
    let listener = bind(&cfg.serve.addr)?;
    let adapter = Adapter::new(run, &world, &policy)?;
    let mut service = Service {
        adapter,
        world: &world,
        pending: None,
        log: BufWriter::new(File::create(&log_path)?),
    };
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    let mut served = 0;
    for stream in listener.incoming() {
        let stream = stream?;
        log::info!("session from {}", stream.peer_addr().map_or("?".into(), |a| a.to_string()));
        if let Err(e) = service.session(stream) {
            if e.code != 1 {
                return Err(e);
            }
            log::warn!("session ended: {e}");
        }
        served += 1;
        if sessions.is_some_and(|n| served >= n) {
            break;
        }
    }
    Ok(())
}
