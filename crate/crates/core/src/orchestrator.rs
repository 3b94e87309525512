//! Session lifecycle across backends: create, pause, checkpoint, restore,
//! destroy, and bounded-concurrency episode runs.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::ActionSequence;
use crate::agents::tools::{ToolCall, ToolResult};
use crate::agents::{AgentPolicy, ModelClient};
use crate::backend::{Backend, BackendKind, CheckpointPayload};
use crate::geometry::ScreenGeometry;
use crate::harness::{
    prepare_backend, sim_config, HarnessError, Resources, RewardReport, TaskSpec,
};
use crate::observation::Observation;
use crate::real::{translate_session_config, NoRuntime, RealLauncher, RealOptions};
use crate::runtime::{
    run_episode, Clock, EnvError, Environment, EpisodeLimits, EpisodeOptions, EpisodeResult,
    Session, SessionError, SessionStatus, StepOutcome, Termination, Trajectory,
};
use crate::sim::{SimBackend, SimConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub backend_kind: BackendKind,
    #[serde(default)]
    pub geometry: ScreenGeometry,
    #[serde(default)]
    pub resources: Resources,
    /// Resolved by the caller (the service looks tasks up by id).
    #[serde(skip)]
    pub task: Option<Arc<TaskSpec>>,
    /// Falls back to the task's limits, then to the defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<EpisodeLimits>,
    #[serde(default)]
    pub real: RealOptions,
}

impl SessionConfig {
    pub fn for_task(task: Arc<TaskSpec>) -> Self {
        Self {
            resources: task.resources,
            task: Some(task),
            ..Self::default()
        }
    }

    pub fn effective_limits(&self) -> EpisodeLimits {
        self.limits
            .or_else(|| self.task.as_ref().and_then(|t| t.limits))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error("backend launch failed: {0}")]
    BackendLaunchFailed(String),
    #[error("unknown session: {0}")]
    UnknownSession(String),
    #[error("unknown checkpoint id: {0}")]
    UnknownCheckpointId(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Setup(#[from] HarnessError),
    #[error("checkpoint store: {0}")]
    Store(String),
}

/// Content-addressed storage for checkpoint blobs. Ids are opaque tokens, fresh
/// for every `put` even when the bytes repeat.
pub trait CheckpointStore: Send + Sync {
    fn put(&self, bytes: &[u8]) -> Result<String, OrchestratorError>;
    fn get(&self, id: &str) -> Result<Vec<u8>, OrchestratorError>;
}

fn fresh_token() -> String {
    format!("{:032x}", rand::random::<u128>())
}

#[derive(Default)]
pub struct MemoryStore {
    blobs: Mutex<HashMap<String, Arc<Vec<u8>>>>,
}

impl CheckpointStore for MemoryStore {
    fn put(&self, bytes: &[u8]) -> Result<String, OrchestratorError> {
        let id = fresh_token();
        lock(&self.blobs).insert(id.clone(), Arc::new(bytes.to_vec()));
        Ok(id)
    }

    fn get(&self, id: &str) -> Result<Vec<u8>, OrchestratorError> {
        lock(&self.blobs)
            .get(id)
            .map(|b| b.as_ref().clone())
            .ok_or_else(|| OrchestratorError::UnknownCheckpointId(id.into()))
    }
}

/// `<root>/manifest.json` maps checkpoint ids to object hashes; blobs live at
/// `<root>/objects/<sha256>`. Survives process restarts.
pub struct DiskStore {
    root: PathBuf,
    manifest: Mutex<BTreeMap<String, String>>,
}

impl DiskStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, OrchestratorError> {
        let root = root.into();
        let io = |e: std::io::Error| OrchestratorError::Store(e.to_string());
        std::fs::create_dir_all(root.join("objects")).map_err(io)?;
        let manifest = match std::fs::read(root.join("manifest.json")) {
            Ok(b) => serde_json::from_slice(&b)
                .map_err(|e| OrchestratorError::Store(format!("manifest: {e}")))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(io(e)),
        };
        Ok(Self {
            root,
            manifest: Mutex::new(manifest),
        })
    }
}

impl CheckpointStore for DiskStore {
    fn put(&self, bytes: &[u8]) -> Result<String, OrchestratorError> {
        let io = |e: std::io::Error| OrchestratorError::Store(e.to_string());
        let hash = hex::encode(Sha256::digest(bytes));
        let obj = self.root.join("objects").join(&hash);
        if !obj.exists() {
            let tmp = obj.with_extension("tmp");
            std::fs::write(&tmp, bytes).map_err(io)?;
            std::fs::rename(&tmp, &obj).map_err(io)?;
        }
        let id = fresh_token();
        let mut m = lock(&self.manifest);
        m.insert(id.clone(), hash);
        let text = serde_json::to_vec_pretty(&*m).expect("manifest serializes");
        let tmp = self.root.join("manifest.json.tmp");
        std::fs::write(&tmp, text).map_err(io)?;
        std::fs::rename(&tmp, self.root.join("manifest.json")).map_err(io)?;
        Ok(id)
    }

    fn get(&self, id: &str) -> Result<Vec<u8>, OrchestratorError> {
        let hash = lock(&self.manifest)
            .get(id)
            .cloned()
            .ok_or_else(|| OrchestratorError::UnknownCheckpointId(id.into()))?;
        std::fs::read(self.root.join("objects").join(hash))
            .map_err(|e| OrchestratorError::Store(e.to_string()))
    }
}

/// What a checkpoint id resolves to.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointRecord {
    payload: CheckpointPayload,
    steps_taken: u32,
    limits: EpisodeLimits,
    geometry: ScreenGeometry,
    resources: Resources,
    real: RealOptions,
    task: Option<TaskSpec>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

pub type SessionHandle = Arc<Mutex<Session>>;

struct Entry {
    session: SessionHandle,
    config: SessionConfig,
}

pub struct Orchestrator {
    sessions: Mutex<HashMap<String, Entry>>,
    store: Box<dyn CheckpointStore>,
    launcher: Box<dyn RealLauncher>,
    clock: Arc<dyn Clock>,
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl Orchestrator {
    /// In-memory checkpoints, no container runtime.
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            store: Box::new(MemoryStore::default()),
            launcher: Box::new(NoRuntime),
            clock,
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn with_store(mut self, store: Box<dyn CheckpointStore>) -> Self {
        self.store = store;
        self
    }

    pub fn with_launcher(mut self, launcher: Box<dyn RealLauncher>) -> Self {
        self.launcher = launcher;
        self
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Sessions currently alive.
    pub fn live(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    /// Highest value [`Orchestrator::live`] has reached.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn launch(
        &self,
        config: &SessionConfig,
        payload: Option<&CheckpointPayload>,
    ) -> Result<Box<dyn Backend>, OrchestratorError> {
        let task = config.task.as_deref();
        match (config.backend_kind, payload) {
            (BackendKind::Sim, Some(p)) => SimBackend::from_payload(p)
                .map(|b| Box::new(b) as Box<dyn Backend>)
                .map_err(|e| OrchestratorError::Store(e.to_string())),
            (BackendKind::Sim, None) => {
                let sim = match task {
                    Some(t) => sim_config(t, config.geometry)?,
                    None => SimConfig {
                        geometry: config.geometry,
                        ..SimConfig::default()
                    },
                };
                let mut b = SimBackend::new(&sim)
                    .map_err(|e| OrchestratorError::BackendLaunchFailed(e.to_string()))?;
                if let Some(t) = task {
                    prepare_backend(t, &mut b, false)?;
                }
                Ok(Box::new(b))
            }
            (BackendKind::Real, payload) => {
                // A restore brings its files with it; setup must not run again.
                let setup_task = if payload.is_some() { None } else { task };
                let plan = translate_session_config(
                    config.geometry,
                    config.resources,
                    &config.real,
                    setup_task,
                )
                .map_err(|e| OrchestratorError::BackendLaunchFailed(e.to_string()))?;
                let mut b = self
                    .launcher
                    .launch(&plan)
                    .map_err(OrchestratorError::BackendLaunchFailed)?;
                match payload {
                    Some(p) => b
                        .restore(p)
                        .map_err(|e| OrchestratorError::Store(e.to_string()))?,
                    None => {
                        if let Some(t) = task {
                            // Setup already ran as startup commands.
                            for (path, bytes) in t.initial_files()? {
                                b.write_file(&path, &bytes).map_err(|e| {
                                    OrchestratorError::BackendLaunchFailed(e.to_string())
                                })?;
                            }
                            if let Some(entry) = &t.entry_file {
                                let _ = b.open_editor(entry);
                            }
                        }
                    }
                }
                Ok(Box::new(b))
            }
        }
    }

    fn register(&self, session: Session, config: SessionConfig) -> String {
        let id = session.session_id.clone();
        lock(&self.sessions).insert(
            id.clone(),
            Entry {
                session: Arc::new(Mutex::new(session)),
                config,
            },
        );
        let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        id
    }

    /// Launches a backend and brings it to the task's initial state. A setup
    /// failure leaves nothing behind.
    pub fn create(&self, config: SessionConfig) -> Result<String, OrchestratorError> {
        let backend = self.launch(&config, None)?;
        let session = Session::new(
            fresh_token(),
            backend,
            config.effective_limits(),
            config.task.clone(),
        );
        Ok(self.register(session, config))
    }

    pub fn session(&self, id: &str) -> Result<SessionHandle, OrchestratorError> {
        lock(&self.sessions)
            .get(id)
            .map(|e| e.session.clone())
            .ok_or_else(|| OrchestratorError::UnknownSession(id.into()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        lock(&self.sessions).keys().cloned().collect()
    }

    pub fn pause(&self, id: &str) -> Result<(), OrchestratorError> {
        let s = self.session(id)?;
        let now = self.clock.now();
        lock(&s).pause(now)?;
        Ok(())
    }

    pub fn resume(&self, id: &str) -> Result<(), OrchestratorError> {
        let s = self.session(id)?;
        let now = self.clock.now();
        lock(&s).resume(now)?;
        Ok(())
    }

    /// Terminates and forgets the session. Its checkpoints stay restorable.
    pub fn destroy(&self, id: &str) -> Result<(), OrchestratorError> {
        let entry = lock(&self.sessions)
            .remove(id)
            .ok_or_else(|| OrchestratorError::UnknownSession(id.into()))?;
        lock(&entry.session).terminate();
        self.live.fetch_sub(1, Ordering::SeqCst);
        tracing::debug!(session = id, "destroyed");
        Ok(())
    }

    pub fn checkpoint(&self, id: &str) -> Result<String, OrchestratorError> {
        let (handle, config) = {
            let map = lock(&self.sessions);
            let e = map
                .get(id)
                .ok_or_else(|| OrchestratorError::UnknownSession(id.into()))?;
            (e.session.clone(), e.config.clone())
        };
        let record = {
            let s = lock(&handle);
            if s.status() == SessionStatus::Terminated {
                return Err(SessionError::SessionTerminated.into());
            }
            CheckpointRecord {
                payload: s.backend().snapshot().map_err(SessionError::from)?,
                steps_taken: s.steps_taken,
                limits: s.limits,
                geometry: config.geometry,
                resources: config.resources,
                real: config.real.clone(),
                task: s.task.as_deref().cloned(),
            }
        };
        let bytes = serde_json::to_vec(&record).expect("checkpoint serializes");
        self.store.put(&bytes)
    }

    /// A new running session in the checkpointed state, with the same step
    /// count. The original session, if still alive, is untouched.
    pub fn restore(&self, checkpoint_id: &str) -> Result<String, OrchestratorError> {
        let bytes = self.store.get(checkpoint_id)?;
        let record: CheckpointRecord = serde_json::from_slice(&bytes)
            .map_err(|e| OrchestratorError::Store(format!("corrupt checkpoint: {e}")))?;
        let config = SessionConfig {
            backend_kind: record.payload.kind,
            geometry: record.geometry,
            resources: record.resources,
            task: record.task.map(Arc::new),
            limits: Some(record.limits),
            real: record.real,
        };
        let backend = self.launch(&config, Some(&record.payload))?;
        let mut session = Session::new(fresh_token(), backend, record.limits, config.task.clone());
        session.steps_taken = record.steps_taken;
        Ok(self.register(session, config))
    }

    /// Runs each job in its own session with at most `k` alive at once.
    /// Results come back in job order. A job whose session cannot be created
    /// ends with an `Error` termination and a zero reward.
    pub fn run_parallel(&self, jobs: Vec<EpisodeJob>, k: usize) -> Vec<EpisodeResult> {
        let n = jobs.len();
        let queue: Mutex<VecDeque<(usize, EpisodeJob)>> =
            Mutex::new(jobs.into_iter().enumerate().collect());
        let results: Mutex<Vec<Option<EpisodeResult>>> = Mutex::new(vec![None; n]);
        std::thread::scope(|scope| {
            for _ in 0..k.max(1).min(n.max(1)) {
                scope.spawn(|| loop {
                    let Some((i, job)) = lock(&queue).pop_front() else {
                        break;
                    };
                    let r = self.run_job(job);
                    lock(&results)[i] = Some(r);
                });
            }
        });
        results
            .into_inner()
            .unwrap_or_else(|p| p.into_inner())
            .into_iter()
            .map(|r| r.expect("every job ran"))
            .collect()
    }

    fn run_job(&self, mut job: EpisodeJob) -> EpisodeResult {
        match self.create(job.config.clone()) {
            Ok(id) => {
                let mut env = OrchestratedEnv::new(self, id.clone());
                let r = run_episode(
                    &mut env,
                    job.policy.as_mut(),
                    job.model.as_mut(),
                    &job.options,
                );
                let _ = self.destroy(&id);
                r
            }
            Err(e) => {
                tracing::warn!(task = ?job.options.task_id, error = %e, "episode could not start");
                EpisodeResult {
                    session_id: String::new(),
                    task_id: job.options.task_id.clone(),
                    agent_design: job.policy.design(),
                    limits: job.options.limits,
                    trajectory: Trajectory {
                        records: Vec::new(),
                        termination: Some(Termination::Error),
                        error: Some(e.to_string()),
                    },
                    reward: RewardReport::failed(e.to_string()),
                    interaction_stats: None,
                }
            }
        }
    }
}

/// One episode for [`Orchestrator::run_parallel`].
pub struct EpisodeJob {
    pub config: SessionConfig,
    pub options: EpisodeOptions,
    pub policy: Box<dyn AgentPolicy>,
    pub model: Box<dyn ModelClient>,
}

/// Episode options for a task: its instruction, id, limits and image
/// attachments.
pub fn episode_options(
    task: &TaskSpec,
    limits: EpisodeLimits,
    clock: Arc<dyn Clock>,
) -> Result<EpisodeOptions, HarnessError> {
    let mut o = EpisodeOptions::new(limits, task.instruction.clone(), clock);
    o.task_id = Some(task.task_id.clone());
    o.attachments = task.attachment_images()?;
    Ok(o)
}

/// [`Environment`] over a session held by an [`Orchestrator`].
pub struct OrchestratedEnv<'a> {
    orch: &'a Orchestrator,
    id: String,
}

impl<'a> OrchestratedEnv<'a> {
    pub fn new(orch: &'a Orchestrator, id: String) -> Self {
        Self { orch, id }
    }

    fn with<T>(&self, f: impl FnOnce(&mut Session) -> Result<T, EnvError>) -> Result<T, EnvError> {
        let s = self
            .orch
            .session(&self.id)
            .map_err(|_| EnvError::Session(SessionError::SessionTerminated))?;
        let mut g = lock(&s);
        f(&mut g)
    }
}

impl Environment for OrchestratedEnv<'_> {
    fn session_id(&self) -> String {
        self.id.clone()
    }

    fn observe(&mut self, dom: bool, som: bool) -> Result<Observation, EnvError> {
        self.with(|s| Environment::observe(s, dom, som))
    }

    fn step(&mut self, seq: &ActionSequence) -> Result<StepOutcome, EnvError> {
        self.with(|s| s.step(seq))
    }

    fn tool(&mut self, call: &ToolCall) -> Result<ToolResult, EnvError> {
        self.with(|s| s.tool(call))
    }

    fn terminate(&mut self) -> Result<(), EnvError> {
        self.with(Environment::terminate)
    }

    fn reward(&mut self) -> Result<RewardReport, EnvError> {
        self.with(Environment::reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::parse_command;
    use crate::agents::{EchoModel, TextSwePolicy};
    use crate::harness::load_taskspec;
    use crate::real::LoopbackLauncher;
    use crate::runtime::ManualClock;

    fn task(setup: &str) -> Arc<TaskSpec> {
        Arc::new(
            load_taskspec(
                &format!(
                    r#"{{"task_id": "t1", "dataset": "humaneval", "category": "CodeGenEditing",
                    "seed_files": {{"hello.txt": "hello\n"}}, "entry_file": "hello.txt",
                    "setup": {setup}, "instruction": "say goodbye",
                    "verifier": {{"command": "runtests /verifier/t.spec", "success_rule": "exitcode",
                                 "timeout_s": 5,
                                 "fixtures": {{"t.spec": "file_equals hello.txt \"goodbye\\n\"\n"}}}}}}"#
                ),
                None,
            )
            .unwrap(),
        )
    }

    fn orch() -> Orchestrator {
        Orchestrator::new(Arc::new(ManualClock::new()))
    }

    #[test]
    fn create_and_destroy() {
        let o = orch();
        let id = o.create(SessionConfig::for_task(task("[]"))).unwrap();
        assert_eq!(o.live(), 1);
        let s = o.session(&id).unwrap();
        assert_eq!(
            lock(&s).backend().read_file("hello.txt").unwrap(),
            b"hello\n"
        );
        o.destroy(&id).unwrap();
        assert_eq!(o.live(), 0);
        assert!(matches!(
            o.destroy(&id),
            Err(OrchestratorError::UnknownSession(_))
        ));
        assert_eq!(lock(&s).status(), SessionStatus::Terminated);
    }

    #[test]
    fn failed_setup_leaves_nothing() {
        let o = orch();
        let r = o.create(SessionConfig::for_task(task(r#"["cat nope"]"#)));
        assert!(matches!(r, Err(OrchestratorError::Setup(_))));
        assert_eq!(o.live(), 0);
        assert!(o.session_ids().is_empty());
    }

    #[test]
    fn real_without_runtime_fails_to_launch() {
        let o = orch();
        let mut c = SessionConfig::for_task(task("[]"));
        c.backend_kind = BackendKind::Real;
        assert!(matches!(
            o.create(c),
            Err(OrchestratorError::BackendLaunchFailed(_))
        ));
    }

    fn checkpoint_round_trip(o: &Orchestrator, kind: BackendKind) {
        let mut c = SessionConfig::for_task(task("[]"));
        c.backend_kind = kind;
        let id = o.create(c).unwrap();
        let s = o.session(&id).unwrap();
        lock(&s)
            .apply_action(&parse_command("xdotool type 'x'").unwrap())
            .unwrap();
        lock(&s).backend_mut().write_file("new.txt", b"n").unwrap();
        let before = lock(&s).state_digest().unwrap();
        let cp = o.checkpoint(&id).unwrap();
        lock(&s)
            .backend_mut()
            .write_file("new.txt", b"changed")
            .unwrap();

        let restored = o.restore(&cp).unwrap();
        assert_ne!(restored, id);
        let r = o.session(&restored).unwrap();
        let r = lock(&r);
        assert_eq!(r.state_digest().unwrap(), before);
        assert_eq!(r.steps_taken, 1);
        assert_eq!(r.status(), SessionStatus::Running);
        assert_ne!(lock(&s).state_digest().unwrap(), before);
    }

    #[test]
    fn sim_checkpoint_restore() {
        checkpoint_round_trip(&orch(), BackendKind::Sim);
    }

    #[test]
    fn real_checkpoint_restore_over_loopback() {
        let o = orch().with_launcher(Box::new(LoopbackLauncher));
        checkpoint_round_trip(&o, BackendKind::Real);
    }

    #[test]
    fn checkpoint_ids_are_unique_and_survive_destroy() {
        let o = orch();
        let id = o.create(SessionConfig::default()).unwrap();
        let a = o.checkpoint(&id).unwrap();
        let b = o.checkpoint(&id).unwrap();
        assert_ne!(a, b);
        o.destroy(&id).unwrap();
        assert!(o.restore(&a).is_ok());
        assert!(matches!(
            o.restore("nope"),
            Err(OrchestratorError::UnknownCheckpointId(_))
        ));
    }

    #[test]
    fn disk_store_persists() {
        let dir = tempfile::tempdir().unwrap();
        let cp = {
            let o = orch().with_store(Box::new(DiskStore::open(dir.path()).unwrap()));
            let id = o.create(SessionConfig::for_task(task("[]"))).unwrap();
            o.checkpoint(&id).unwrap()
        };
        let o = orch().with_store(Box::new(DiskStore::open(dir.path()).unwrap()));
        let id = o.restore(&cp).unwrap();
        let s = o.session(&id).unwrap();
        assert_eq!(
            lock(&s).backend().read_file("hello.txt").unwrap(),
            b"hello\n"
        );
        assert_eq!(
            std::fs::read_dir(dir.path().join("objects"))
                .unwrap()
                .count(),
            1
        );
    }

    #[test]
    fn pause_blocks_actions() {
        let o = orch();
        let id = o.create(SessionConfig::default()).unwrap();
        o.pause(&id).unwrap();
        let mut env = OrchestratedEnv::new(&o, id.clone());
        let seq = parse_command("xdotool key Return").unwrap();
        assert!(matches!(
            env.step(&seq),
            Err(EnvError::Session(SessionError::SessionPaused))
        ));
        assert!(o.pause(&id).is_err());
        o.resume(&id).unwrap();
        assert!(env.step(&seq).is_ok());
    }

    #[test]
    fn parallel_respects_bound() {
        let o = orch();
        let clock: Arc<dyn Clock> = Arc::new(ManualClock::new());
        let t = task("[]");
        let jobs: Vec<EpisodeJob> = (0..12)
            .map(|i| {
                let mut config = SessionConfig::for_task(t.clone());
                if i == 5 {
                    config.backend_kind = BackendKind::Real;
                }
                EpisodeJob {
                    options: episode_options(&t, EpisodeLimits::with_max_steps(3), clock.clone())
                        .unwrap(),
                    config,
                    policy: Box::new(TextSwePolicy::new()),
                    model: Box::new(EchoModel),
                }
            })
            .collect();
        let results = o.run_parallel(jobs, 4);
        assert_eq!(results.len(), 12);
        assert!(o.peak() <= 4 && o.peak() >= 1);
        assert_eq!(o.live(), 0);
        assert_eq!(results[5].termination(), Termination::Error);
        assert_eq!(results[5].reward.score, 0.0);
        for (i, r) in results.iter().enumerate() {
            if i != 5 {
                assert_eq!(r.task_id.as_deref(), Some("t1"));
                assert_ne!(
                    r.termination(),
                    Termination::Error,
                    "{:?}",
                    r.trajectory.error
                );
            }
        }
    }
}
