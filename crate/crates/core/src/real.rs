//! Container-backed backend: launch plans and the channel adapter.
//!
//! A container IDE exposes four channels. `control` carries action injection,
//! shell commands, file access and lifecycle; `capture` returns one PNG frame
//! per request; `dom` returns the DOM tree; `stream` is an optional video feed
//! the adapter never reads. Requests are single JSON lines. Every response is a
//! 4-byte big-endian length followed by the body: a JSON [`ControlResponse`] on
//! control, PNG bytes on capture, a DOM document on dom.
//!
//! Checkpoints of this backend are a filesystem snapshot plus a descriptor of
//! the open editors. Restoring one guarantees an equal filesystem only; process
//! state inside the container is not captured.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::action::{parse_command, render_command, ActionSequence};
use crate::backend::{
    ApplyOutcome, Backend, BackendError, BackendKind, CheckpointPayload, ShellOutput,
};
use crate::digest::DigestBuilder;
use crate::geometry::ScreenGeometry;
use crate::harness::{Resources, TaskSpec};
use crate::observation::{DomTree, Screenshot};
use crate::sim::{SimBackend, SimConfig};

pub const CHANNEL_PROTOCOL: &str = "idegym-channel/1";
pub const REAL_CHECKPOINT_FORMAT: &str = "idegym.real-checkpoint";
pub const DEFAULT_IMAGE: &str = "idegym/ide:latest";
pub const DEFAULT_CPU: f64 = 2.0;
pub const DEFAULT_MEM: u64 = 4 << 30;
pub const DEFAULT_PORTS: ChannelPorts = ChannelPorts {
    control: 7101,
    capture: 7102,
    dom: 7103,
    stream: 7104,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Control,
    Capture,
    Dom,
    Stream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelPorts {
    pub control: u16,
    pub capture: u16,
    pub dom: u16,
    pub stream: u16,
}

impl ChannelPorts {
    pub fn port(&self, c: Channel) -> u16 {
        match c {
            Channel::Control => self.control,
            Channel::Capture => self.capture,
            Channel::Dom => self.dom,
            Channel::Stream => self.stream,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mount {
    pub host: String,
    pub sandbox: String,
}

/// Container-specific options of a session config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RealOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_ports: Option<ChannelPorts>,
    #[serde(default)]
    pub mounts: Vec<Mount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendLaunchPlan {
    pub image_ref: String,
    pub display: ScreenGeometry,
    /// Cores.
    pub cpu_limit: f64,
    /// Bytes.
    pub mem_limit: u64,
    pub channel_ports: ChannelPorts,
    pub mounts: Vec<Mount>,
    pub startup_commands: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LaunchError {
    #[error("invalid resource spec: {0}")]
    InvalidResourceSpec(String),
}

/// Pure: equal inputs give equal plans. Unset fields take the defaults above;
/// the task's setup commands run after the workspace is created.
pub fn translate_session_config(
    display: ScreenGeometry,
    resources: Resources,
    options: &RealOptions,
    task: Option<&TaskSpec>,
) -> Result<BackendLaunchPlan, LaunchError> {
    let bad = |m: String| Err(LaunchError::InvalidResourceSpec(m));
    if !display.is_positive() {
        return bad(format!("display {}x{}", display.width, display.height));
    }
    let cpu = resources.cpu.unwrap_or(DEFAULT_CPU);
    if !cpu.is_finite() || cpu <= 0.0 {
        return bad(format!("cpu {cpu}"));
    }
    let mem = resources.mem.unwrap_or(DEFAULT_MEM);
    if mem == 0 {
        return bad("mem 0".into());
    }
    let ports = options.channel_ports.unwrap_or(DEFAULT_PORTS);
    let list = [ports.control, ports.capture, ports.dom, ports.stream];
    if list.contains(&0) {
        return bad("channel port 0".into());
    }
    for i in 0..list.len() {
        if list[i + 1..].contains(&list[i]) {
            return bad(format!("channel port {} used twice", list[i]));
        }
    }
    for m in &options.mounts {
        if !m.sandbox.starts_with('/') || m.host.is_empty() {
            return bad(format!("mount {} -> {}", m.host, m.sandbox));
        }
    }
    let mut startup_commands = vec!["mkdir -p /workspace".to_string()];
    if let Some(t) = task {
        startup_commands.extend(t.setup.iter().cloned());
    }
    Ok(BackendLaunchPlan {
        image_ref: options
            .image_ref
            .clone()
            .unwrap_or_else(|| DEFAULT_IMAGE.to_string()),
        display,
        cpu_limit: cpu,
        mem_limit: mem,
        channel_ports: ports,
        mounts: options.mounts.clone(),
        startup_commands,
    })
}

/// Backend-interface operations, for the channel mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendOp {
    Create,
    Apply,
    Capture,
    Dom,
    Exec,
    ReadFile,
    WriteFile,
    OpenEditor,
    ExportFiles,
    Checkpoint,
    Restore,
    Pause,
    Resume,
    Destroy,
}

impl BackendOp {
    pub const ALL: [BackendOp; 14] = [
        BackendOp::Create,
        BackendOp::Apply,
        BackendOp::Capture,
        BackendOp::Dom,
        BackendOp::Exec,
        BackendOp::ReadFile,
        BackendOp::WriteFile,
        BackendOp::OpenEditor,
        BackendOp::ExportFiles,
        BackendOp::Checkpoint,
        BackendOp::Restore,
        BackendOp::Pause,
        BackendOp::Resume,
        BackendOp::Destroy,
    ];
}

/// The one channel that carries each operation. Nothing maps to `Stream`.
pub fn channel_for(op: BackendOp) -> Channel {
    match op {
        BackendOp::Capture => Channel::Capture,
        BackendOp::Dom => Channel::Dom,
        BackendOp::Create
        | BackendOp::Apply
        | BackendOp::Exec
        | BackendOp::ReadFile
        | BackendOp::WriteFile
        | BackendOp::OpenEditor
        | BackendOp::ExportFiles
        | BackendOp::Checkpoint
        | BackendOp::Restore
        | BackendOp::Pause
        | BackendOp::Resume
        | BackendOp::Destroy => Channel::Control,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lifecycle {
    Pause,
    Resume,
    Destroy,
}

/// Control-channel request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ControlRequest {
    Hello {
        protocol: String,
    },
    ApplyAction {
        command: String,
    },
    Exec {
        cmd: String,
    },
    Lifecycle {
        action: Lifecycle,
    },
    ReadFile {
        path: String,
    },
    WriteFile {
        path: String,
        base64: String,
    },
    OpenEditor {
        path: String,
    },
    ExportFiles,
    /// Open editors and the active one.
    Describe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResponse {
    pub ok: bool,
    #[serde(default)]
    pub result: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<BackendError>,
}

impl ControlResponse {
    fn ok(result: Value) -> Self {
        Self {
            ok: true,
            result,
            error: None,
        }
    }

    fn err(e: BackendError) -> Self {
        Self {
            ok: false,
            result: Value::Null,
            error: Some(e),
        }
    }
}

/// Byte transport to the four channels.
pub trait Transport: Send {
    fn request(&mut self, channel: Channel, body: &[u8]) -> Result<Vec<u8>, BackendError>;
}

/// Reference peer: answers one channel request against a local backend. Used
/// by [`LoopbackTransport`] and by tests that stand up TCP channels.
pub fn serve_request(
    backend: &mut dyn Backend,
    paused: &mut bool,
    channel: Channel,
    body: &[u8],
) -> Vec<u8> {
    match channel {
        Channel::Capture => match backend.screenshot() {
            Ok(s) => s.png,
            Err(_) => Vec::new(),
        },
        Channel::Dom => match backend.dom() {
            Ok(d) => d.to_json().into_bytes(),
            Err(e) => serde_json::to_vec(&ControlResponse::err(e)).expect("serializes"),
        },
        Channel::Stream => Vec::new(),
        Channel::Control => {
            let resp = match serde_json::from_slice::<ControlRequest>(body) {
                Ok(req) => handle_control(backend, paused, req),
                Err(e) => ControlResponse::err(BackendError::Protocol(e.to_string())),
            };
            serde_json::to_vec(&resp).expect("responses serialize")
        }
    }
}

fn handle_control(
    backend: &mut dyn Backend,
    paused: &mut bool,
    req: ControlRequest,
) -> ControlResponse {
    let wrap = |r: Result<Value, BackendError>| match r {
        Ok(v) => ControlResponse::ok(v),
        Err(e) => ControlResponse::err(e),
    };
    if *paused
        && !matches!(
            req,
            ControlRequest::Lifecycle { .. } | ControlRequest::Hello { .. }
        )
    {
        return ControlResponse::err(BackendError::Rejected("container is paused".into()));
    }
    match req {
        ControlRequest::Hello { protocol } if protocol == CHANNEL_PROTOCOL => ControlResponse::ok(
            json!({"protocol": CHANNEL_PROTOCOL, "geometry": backend.geometry()}),
        ),
        ControlRequest::Hello { protocol } => ControlResponse::err(BackendError::Protocol(
            format!("unsupported protocol {protocol}"),
        )),
        ControlRequest::ApplyAction { command } => wrap(
            parse_command(&command)
                .map_err(|e| BackendError::Rejected(e.to_string()))
                .and_then(|seq| backend.apply(&seq))
                .map(|o| json!({"ignored": o.ignored})),
        ),
        ControlRequest::Exec { cmd } => wrap(
            backend
                .exec(&cmd)
                .map(|o| serde_json::to_value(o).expect("serializes")),
        ),
        ControlRequest::Lifecycle { action } => {
            *paused = action == Lifecycle::Pause;
            ControlResponse::ok(Value::Null)
        }
        ControlRequest::ReadFile { path } => {
            wrap(backend.read_file(&path).map(|b| json!(STANDARD.encode(b))))
        }
        ControlRequest::WriteFile { path, base64 } => wrap(
            STANDARD
                .decode(base64)
                .map_err(|e| BackendError::Protocol(e.to_string()))
                .and_then(|b| backend.write_file(&path, &b))
                .map(|_| Value::Null),
        ),
        ControlRequest::OpenEditor { path } => {
            wrap(backend.open_editor(&path).map(|_| Value::Null))
        }
        ControlRequest::ExportFiles => wrap(backend.export_files().map(|files| {
            let m: BTreeMap<String, String> = files
                .into_iter()
                .map(|(p, b)| (p, STANDARD.encode(b)))
                .collect();
            json!(m)
        })),
        ControlRequest::Describe => wrap(backend.dom().map(|d| describe_from_dom(&d))),
    }
}

/// Open editors and the active one, read off the DOM's tab strip.
fn describe_from_dom(dom: &DomTree) -> Value {
    use crate::observation::Role;
    let tabs: Vec<String> = dom
        .nodes_pre_order()
        .into_iter()
        .filter(|n| n.role == Role::Tab)
        .map(|n| n.name.trim_end_matches(" *").to_string())
        .collect();
    let active = dom
        .nodes_pre_order()
        .into_iter()
        .find(|n| n.role == Role::Editor)
        .map(|n| n.name.clone());
    json!({"open_files": tabs, "active_editor": active})
}

/// In-process peer around a local backend.
pub struct LoopbackTransport {
    peer: Box<dyn Backend>,
    paused: bool,
}

impl LoopbackTransport {
    pub fn new(peer: Box<dyn Backend>) -> Self {
        Self {
            peer,
            paused: false,
        }
    }
}

impl Transport for LoopbackTransport {
    fn request(&mut self, channel: Channel, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        Ok(serve_request(
            self.peer.as_mut(),
            &mut self.paused,
            channel,
            body,
        ))
    }
}

/// One persistent TCP connection per channel.
pub struct TcpTransport {
    host: std::net::IpAddr,
    ports: ChannelPorts,
    conns: BTreeMap<u16, BufReader<TcpStream>>,
}

impl TcpTransport {
    pub fn new(host: std::net::IpAddr, ports: ChannelPorts) -> Self {
        Self {
            host,
            ports,
            conns: BTreeMap::new(),
        }
    }
}

/// Writes one length-prefixed frame.
pub fn write_frame(w: &mut impl Write, body: &[u8]) -> std::io::Result<()> {
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

pub fn read_frame(r: &mut impl Read) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut body = vec![0u8; u32::from_be_bytes(len) as usize];
    r.read_exact(&mut body)?;
    Ok(body)
}

/// Reads one request line from a channel connection. `None` on EOF.
pub fn read_request_line(r: &mut impl BufRead) -> std::io::Result<Option<Vec<u8>>> {
    let mut line = Vec::new();
    if r.read_until(b'\n', &mut line)? == 0 {
        return Ok(None);
    }
    if line.last() == Some(&b'\n') {
        line.pop();
    }
    Ok(Some(line))
}

impl Transport for TcpTransport {
    fn request(&mut self, channel: Channel, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let port = self.ports.port(channel);
        let io = |e: std::io::Error| BackendError::Unavailable(format!("{channel:?} channel: {e}"));
        if !self.conns.contains_key(&port) {
            let stream = TcpStream::connect(SocketAddr::new(self.host, port)).map_err(io)?;
            self.conns.insert(port, BufReader::new(stream));
        }
        let conn = self.conns.get_mut(&port).expect("inserted above");
        let result = (|| {
            let s = conn.get_mut();
            s.write_all(body)?;
            s.write_all(b"\n")?;
            s.flush()?;
            read_frame(conn)
        })();
        if result.is_err() {
            self.conns.remove(&port);
        }
        result.map_err(io)
    }
}

/// [`Backend`] over the four channels. The transport sits behind a mutex, so
/// control writes are serialized and capture/dom reads never overlap an
/// in-flight action.
pub struct ChannelBackend {
    transport: Mutex<Box<dyn Transport>>,
    geometry: ScreenGeometry,
}

impl ChannelBackend {
    /// Handshakes on the control channel and learns the display geometry.
    pub fn connect(transport: Box<dyn Transport>) -> Result<Self, BackendError> {
        let mut b = Self {
            transport: Mutex::new(transport),
            geometry: ScreenGeometry::DEFAULT,
        };
        let hello = b.control(ControlRequest::Hello {
            protocol: CHANNEL_PROTOCOL.into(),
        })?;
        b.geometry = serde_json::from_value(hello["geometry"].clone())
            .map_err(|e| BackendError::Protocol(format!("hello: {e}")))?;
        Ok(b)
    }

    fn raw(&self, channel: Channel, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        self.transport
            .lock()
            .map_err(|_| BackendError::Unavailable("transport poisoned".into()))?
            .request(channel, body)
    }

    fn control(&self, req: ControlRequest) -> Result<Value, BackendError> {
        let body = serde_json::to_vec(&req).expect("requests serialize");
        let raw = self.raw(Channel::Control, &body)?;
        let resp: ControlResponse =
            serde_json::from_slice(&raw).map_err(|e| BackendError::Protocol(e.to_string()))?;
        match (resp.ok, resp.error) {
            (true, _) => Ok(resp.result),
            (false, Some(e)) => Err(e),
            (false, None) => Err(BackendError::Protocol("error without detail".into())),
        }
    }

    pub fn lifecycle(&mut self, action: Lifecycle) -> Result<(), BackendError> {
        self.control(ControlRequest::Lifecycle { action })
            .map(|_| ())
    }

    /// Writes back a snapshot's files and removes files the snapshot lacks.
    /// Filesystem equality is the whole guarantee; editors are reopened
    /// best-effort.
    pub fn restore(&mut self, payload: &CheckpointPayload) -> Result<(), BackendError> {
        let doc = &payload.document;
        if payload.kind != BackendKind::Real
            || doc["format"].as_str() != Some(REAL_CHECKPOINT_FORMAT)
        {
            return Err(BackendError::Protocol("not a container checkpoint".into()));
        }
        let files: BTreeMap<String, String> = serde_json::from_value(doc["files"].clone())
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        let existing = self.export_files()?;
        for path in existing.keys().filter(|p| !files.contains_key(*p)) {
            let quoted = format!("'{}'", path.replace('\'', r"'\''"));
            self.exec(&format!("rm -f {quoted}"))?;
        }
        for (path, b64) in files {
            let bytes = STANDARD
                .decode(b64)
                .map_err(|e| BackendError::Protocol(e.to_string()))?;
            self.write_file(&path, &bytes)?;
        }
        if let Some(open) = doc["descriptor"]["open_files"].as_array() {
            for p in open.iter().filter_map(Value::as_str) {
                let _ = self.open_editor(p);
            }
        }
        Ok(())
    }
}

fn files_digest(files: &BTreeMap<String, Vec<u8>>) -> String {
    let mut b = DigestBuilder::new().str(REAL_CHECKPOINT_FORMAT);
    for (p, bytes) in files {
        b = b.str(p).part(bytes);
    }
    b.finish()
}

fn decode_b64(v: Value) -> Result<Vec<u8>, BackendError> {
    let s = v
        .as_str()
        .ok_or_else(|| BackendError::Protocol("expected base64 string".into()))?;
    STANDARD
        .decode(s)
        .map_err(|e| BackendError::Protocol(e.to_string()))
}

impl Backend for ChannelBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Real
    }

    fn geometry(&self) -> ScreenGeometry {
        self.geometry
    }

    fn apply(&mut self, seq: &ActionSequence) -> Result<ApplyOutcome, BackendError> {
        let v = self.control(ControlRequest::ApplyAction {
            command: render_command(seq),
        })?;
        Ok(ApplyOutcome {
            ignored: v["ignored"].as_bool().unwrap_or(false),
        })
    }

    fn screenshot(&mut self) -> Result<Screenshot, BackendError> {
        let png = self.raw(Channel::Capture, b"{\"op\":\"frame\"}")?;
        if !png.starts_with(b"\x89PNG") {
            return Err(BackendError::Protocol(
                "capture channel returned no PNG".into(),
            ));
        }
        Ok(Screenshot::from_png(png, self.geometry))
    }

    fn dom(&mut self) -> Result<DomTree, BackendError> {
        let raw = self.raw(Channel::Dom, b"{\"op\":\"tree\"}")?;
        let text = String::from_utf8(raw).map_err(|e| BackendError::Protocol(e.to_string()))?;
        DomTree::from_json(&text).map_err(|e| BackendError::Protocol(e.to_string()))
    }

    fn exec(&mut self, cmd: &str) -> Result<ShellOutput, BackendError> {
        let v = self.control(ControlRequest::Exec { cmd: cmd.into() })?;
        serde_json::from_value(v).map_err(|e| BackendError::Protocol(e.to_string()))
    }

    fn read_file(&self, path: &str) -> Result<Vec<u8>, BackendError> {
        decode_b64(self.control(ControlRequest::ReadFile { path: path.into() })?)
    }

    fn write_file(&mut self, path: &str, bytes: &[u8]) -> Result<(), BackendError> {
        self.control(ControlRequest::WriteFile {
            path: path.into(),
            base64: STANDARD.encode(bytes),
        })
        .map(|_| ())
    }

    fn open_editor(&mut self, path: &str) -> Result<(), BackendError> {
        self.control(ControlRequest::OpenEditor { path: path.into() })
            .map(|_| ())
    }

    fn export_files(&self) -> Result<BTreeMap<String, Vec<u8>>, BackendError> {
        let v = self.control(ControlRequest::ExportFiles)?;
        let m: BTreeMap<String, Value> =
            serde_json::from_value(v).map_err(|e| BackendError::Protocol(e.to_string()))?;
        m.into_iter()
            .map(|(p, b)| Ok((p, decode_b64(b)?)))
            .collect()
    }

    fn snapshot(&self) -> Result<CheckpointPayload, BackendError> {
        let files = self.export_files()?;
        let descriptor = self.control(ControlRequest::Describe)?;
        let encoded: BTreeMap<&String, String> =
            files.iter().map(|(p, b)| (p, STANDARD.encode(b))).collect();
        Ok(CheckpointPayload {
            kind: BackendKind::Real,
            document: json!({
                "format": REAL_CHECKPOINT_FORMAT,
                "version": 1,
                "files": encoded,
                "descriptor": descriptor,
            }),
        })
    }

    /// Filesystem only: that is what a restore can promise.
    fn state_digest(&self) -> Result<String, BackendError> {
        Ok(files_digest(&self.export_files()?))
    }
}

/// Starts containers from launch plans.
pub trait RealLauncher: Send + Sync {
    /// Starts a container, runs the plan's startup commands and connects.
    fn launch(&self, plan: &BackendLaunchPlan) -> Result<ChannelBackend, String>;
}

/// Launcher used when no container runtime is configured: always fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRuntime;

impl RealLauncher for NoRuntime {
    fn launch(&self, plan: &BackendLaunchPlan) -> Result<ChannelBackend, String> {
        Err(format!(
            "no container runtime configured to start {}",
            plan.image_ref
        ))
    }
}

/// Runs each "container" as an in-process simulated IDE behind the channel
/// protocol. Exercises the adapter end to end without a container runtime.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoopbackLauncher;

impl RealLauncher for LoopbackLauncher {
    fn launch(&self, plan: &BackendLaunchPlan) -> Result<ChannelBackend, String> {
        let sim = SimBackend::new(&SimConfig {
            geometry: plan.display,
            ..SimConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let mut b = ChannelBackend::connect(Box::new(LoopbackTransport::new(Box::new(sim))))
            .map_err(|e| e.to_string())?;
        for cmd in &plan.startup_commands {
            let out = b.exec(cmd).map_err(|e| e.to_string())?;
            if out.exit_code != 0 {
                return Err(format!("startup command {cmd:?} exited {}", out.exit_code));
            }
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::parse_command;
    use std::net::{IpAddr, Ipv4Addr, TcpListener};

    fn plan(res: Resources, opts: &RealOptions) -> Result<BackendLaunchPlan, LaunchError> {
        translate_session_config(ScreenGeometry::DEFAULT, res, opts, None)
    }

    #[test]
    fn default_plan() {
        let p = plan(Resources::default(), &RealOptions::default()).unwrap();
        assert_eq!((p.display.width, p.display.height), (1280, 720));
        let ports = [
            p.channel_ports.control,
            p.channel_ports.capture,
            p.channel_ports.dom,
            p.channel_ports.stream,
        ];
        let mut uniq = ports.to_vec();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 4);
        assert!(p.mounts.is_empty());
        assert_eq!(p.startup_commands, vec!["mkdir -p /workspace"]);
    }

    #[test]
    fn limits_and_validation() {
        let res = Resources {
            cpu: Some(0.5),
            mem: Some(1 << 30),
        };
        let p = plan(res, &RealOptions::default()).unwrap();
        assert_eq!((p.cpu_limit, p.mem_limit), (0.5, 1 << 30));
        assert_eq!(p, plan(res, &RealOptions::default()).unwrap());

        let dup = RealOptions {
            channel_ports: Some(ChannelPorts {
                control: 9000,
                capture: 9001,
                dom: 9000,
                stream: 9002,
            }),
            ..RealOptions::default()
        };
        assert!(matches!(
            plan(Resources::default(), &dup),
            Err(LaunchError::InvalidResourceSpec(_))
        ));
        let neg = Resources {
            cpu: Some(-1.0),
            mem: None,
        };
        assert!(plan(neg, &RealOptions::default()).is_err());
        let zero = ScreenGeometry {
            width: 0,
            ..ScreenGeometry::DEFAULT
        };
        assert!(translate_session_config(
            zero,
            Resources::default(),
            &RealOptions::default(),
            None
        )
        .is_err());
    }

    #[test]
    fn every_op_has_one_channel() {
        for op in BackendOp::ALL {
            assert_ne!(channel_for(op), Channel::Stream, "{op:?}");
        }
        assert_eq!(channel_for(BackendOp::Capture), Channel::Capture);
        assert_eq!(channel_for(BackendOp::Dom), Channel::Dom);
    }

    fn loopback() -> ChannelBackend {
        let sim = SimBackend::new(&SimConfig {
            seed_files: [("a.txt".to_string(), b"one\n".to_vec())].into(),
            ..SimConfig::default()
        })
        .unwrap();
        ChannelBackend::connect(Box::new(LoopbackTransport::new(Box::new(sim)))).unwrap()
    }

    #[test]
    fn loopback_round_trip() {
        let mut b = loopback();
        assert_eq!(b.geometry(), ScreenGeometry::DEFAULT);
        assert_eq!(b.read_file("a.txt").unwrap(), b"one\n");
        b.write_file("b.txt", b"two").unwrap();
        let out = b.exec("cat b.txt").unwrap();
        assert_eq!((out.output.as_str(), out.exit_code), ("two", 0));
        assert!(b.screenshot().unwrap().png.starts_with(b"\x89PNG"));
        assert!(!b.dom().unwrap().nodes_pre_order().is_empty());
        b.apply(&parse_command("xdotool mousemove 10 10").unwrap())
            .unwrap();
        assert!(matches!(
            b.read_file("zzz"),
            Err(BackendError::FileNotFound(_))
        ));
    }

    #[test]
    fn paused_container_rejects_work() {
        let mut b = loopback();
        b.lifecycle(Lifecycle::Pause).unwrap();
        assert!(matches!(b.exec("true"), Err(BackendError::Rejected(_))));
        b.lifecycle(Lifecycle::Resume).unwrap();
        assert!(b.exec("true").is_ok());
    }

    #[test]
    fn checkpoint_restores_filesystem() {
        let mut b = loopback();
        b.open_editor("a.txt").unwrap();
        let snap = b.snapshot().unwrap();
        let digest = b.state_digest().unwrap();
        assert_eq!(snap.document["descriptor"]["open_files"][0], "a.txt");
        b.write_file("a.txt", b"changed").unwrap();
        b.write_file("extra.txt", b"x").unwrap();
        assert_ne!(b.state_digest().unwrap(), digest);

        let mut fresh = loopback();
        fresh.write_file("stray.txt", b"y").unwrap();
        fresh.restore(&snap).unwrap();
        assert_eq!(fresh.state_digest().unwrap(), digest);
        b.restore(&snap).unwrap();
        assert_eq!(b.export_files().unwrap(), fresh.export_files().unwrap());

        let bogus = CheckpointPayload {
            kind: BackendKind::Sim,
            document: json!({}),
        };
        assert!(b.restore(&bogus).is_err());
    }

    #[test]
    fn tcp_framing() {
        // One listener per channel, each served by a thread sharing one peer.
        let peer = std::sync::Arc::new(Mutex::new((
            Box::new(SimBackend::new(&SimConfig::default()).unwrap()) as Box<dyn Backend>,
            false,
        )));
        let mut ports = Vec::new();
        for channel in [
            Channel::Control,
            Channel::Capture,
            Channel::Dom,
            Channel::Stream,
        ] {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            ports.push(l.local_addr().unwrap().port());
            let peer = peer.clone();
            std::thread::spawn(move || {
                let (stream, _) = l.accept().unwrap();
                let mut w = stream.try_clone().unwrap();
                let mut r = BufReader::new(stream);
                while let Ok(Some(line)) = read_request_line(&mut r) {
                    let mut g = peer.lock().unwrap();
                    let (b, paused) = &mut *g;
                    let resp = serve_request(b.as_mut(), paused, channel, &line);
                    write_frame(&mut w, &resp).unwrap();
                }
            });
        }
        let ports = ChannelPorts {
            control: ports[0],
            capture: ports[1],
            dom: ports[2],
            stream: ports[3],
        };
        let t = TcpTransport::new(IpAddr::V4(Ipv4Addr::LOCALHOST), ports);
        let mut b = ChannelBackend::connect(Box::new(t)).unwrap();
        b.write_file("x.txt", b"hi").unwrap();
        assert_eq!(b.read_file("x.txt").unwrap(), b"hi");
        assert!(b.screenshot().unwrap().png.starts_with(b"\x89PNG"));
        assert!(b.dom().is_ok());
    }

    #[test]
    fn frame_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"hello").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 5]);
        assert_eq!(read_frame(&mut buf.as_slice()).unwrap(), b"hello");
    }

    #[test]
    fn loopback_launcher_runs_startup() {
        let mut p = plan(Resources::default(), &RealOptions::default()).unwrap();
        p.startup_commands.push("echo hi > made.txt".into());
        let b = LoopbackLauncher.launch(&p).unwrap();
        assert_eq!(b.read_file("made.txt").unwrap(), b"hi\n");
        assert!(NoRuntime.launch(&p).is_err());
    }
}
