//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero when any criterion fails.
//!
//! `cargo test --test acceptance -- <filter>` runs the criteria whose name
//! contains `<filter>`.

#[path = "../common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{repo, TestServer};
use idegym_core::action::{
    parse_command, parse_element_action, render_command, resolve_element_action, ActionSequence,
    AtomicAction, ElementAction, KeyChord, Modifier, MouseButton, NAMED_KEYS,
};
use idegym_core::agents::tools::ToolCall;
use idegym_core::agents::{build_policy, AgentDesign, ReplayEntry, ReplayModel, ReplayScript};
use idegym_core::geometry::{BBox, ScreenGeometry};
use idegym_core::harness::registry::{canonical_ids, total_instances};
use idegym_core::harness::{
    aggregate, full_registry_instances, load_taskspec_path, sample_lite, Category, TaskSpec,
    DATASETS,
};
use idegym_core::observation::{annotate_som, DomNode, DomTree, RegistryEntry, Role, Screenshot};
use idegym_core::orchestrator::{
    episode_options, EpisodeJob, OrchestratedEnv, Orchestrator, SessionConfig,
};
use idegym_core::raster::Canvas;
use idegym_core::runtime::{
    interaction_stats, run_episode, strip_volatile, write_trajectory_log, Clock, EnvError,
    Environment, EpisodeLimits, EpisodeResult, ManualClock, RecordedAction, SessionError,
    SessionStatus, StepRecord, SystemClock, Termination, Trajectory,
};
use idegym_server::api::CreateSession;
use idegym_server::client::{ClientError, HttpClient, HttpEnv};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestError, TestRng, TestRunner};
use serde_json::json;

struct Ctx {
    client: HttpClient,
    _server: TestServer,
}

/// Failed sub-checks of one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) -> bool {
        if !ok {
            self.failures.push(what.into());
        }
        ok
    }

    fn eq<T: PartialEq + Debug>(&mut self, what: &str, got: T, want: T) -> bool {
        let ok = got == want;
        if !ok {
            self.failures
                .push(format!("{what}: got {got:?}, want {want:?}"));
        }
        ok
    }

    fn close(&mut self, what: &str, got: f64, want: f64, tol: f64) -> bool {
        self.check(
            (got - want).abs() <= tol,
            format!("{what}: got {got:.4}, want {want} ± {tol}"),
        )
    }
}

struct Criterion {
    n: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn(&Ctx, &mut Checks),
}

const fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        n: 1,
        name: "pure_cua_category_scores",
        budget: secs(1),
        run: pure_cua_row,
    },
    Criterion {
        n: 2,
        name: "tools_cua_category_scores",
        budget: secs(1),
        run: tools_cua_row,
    },
    Criterion {
        n: 3,
        name: "registry_and_lite_subset",
        budget: secs(1),
        run: registry_and_lite,
    },
    Criterion {
        n: 4,
        name: "grammar_round_trip",
        budget: secs(5),
        run: grammar_round_trip,
    },
    Criterion {
        n: 5,
        name: "som_properties",
        budget: secs(10),
        run: som_properties,
    },
    Criterion {
        n: 6,
        name: "checkpoint_determinism",
        budget: secs(30),
        run: checkpoint_determinism,
    },
    Criterion {
        n: 7,
        name: "episode_contract",
        budget: secs(10),
        run: episode_contract,
    },
    Criterion {
        n: 8,
        name: "toy_episodes_end_to_end",
        budget: secs(10),
        run: toy_episodes,
    },
    Criterion {
        n: 9,
        name: "interaction_statistics",
        budget: None,
        run: interaction_fractions,
    },
    Criterion {
        n: 10,
        name: "replay_determinism",
        budget: None,
        run: replay_determinism,
    },
    Criterion {
        n: 11,
        name: "parallel_isolation",
        budget: None,
        run: parallel_isolation,
    },
];

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let filters: Vec<&str> = args
        .iter()
        .map(String::as_str)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if args.iter().any(|a| a == "--list") {
        for c in CRITERIA {
            println!("criterion_{:02}_{}: test", c.n, c.name);
        }
        return;
    }
    let selected: Vec<&Criterion> = CRITERIA
        .iter()
        .filter(|c| {
            let id = format!("criterion_{:02}_{}", c.n, c.name);
            filters.is_empty() || filters.iter().any(|f| id.contains(f))
        })
        .collect();
    if selected.is_empty() {
        return;
    }

    let server = TestServer::start();
    let ctx = Ctx {
        client: HttpClient::new(&server.url),
        _server: server,
    };
    let mut failed = 0;
    for c in &selected {
        let mut checks = Checks::default();
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| (c.run)(&ctx, &mut checks)));
        let elapsed = started.elapsed();
        if let Err(p) = outcome {
            checks
                .failures
                .push(format!("panicked: {}", panic_message(p.as_ref())));
        }
        if let Some(budget) = c.budget {
            checks.check(
                elapsed < budget,
                format!(
                    "runtime {:.2}s exceeds {}s",
                    elapsed.as_secs_f64(),
                    budget.as_secs()
                ),
            );
        }
        let verdict = if checks.failures.is_empty() {
            "PASS"
        } else {
            "FAIL"
        };
        let budget = c
            .budget
            .map(|b| format!(" / {}s", b.as_secs()))
            .unwrap_or_default();
        println!(
            "{verdict} criterion {:>2} {:<28} {:.3}s{budget}",
            c.n,
            c.name,
            elapsed.as_secs_f64()
        );
        for f in &checks.failures {
            println!("     - {f}");
        }
        if !checks.failures.is_empty() {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        selected.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn toy(task: &str) -> Arc<TaskSpec> {
    Arc::new(load_taskspec_path(&repo().join("datasets/toy").join(task)).unwrap())
}

fn tape(name: &str) -> ReplayScript {
    ReplayScript::load(&repo().join("replays").join(name)).unwrap()
}

fn config(task: &Arc<TaskSpec>, limits: EpisodeLimits) -> SessionConfig {
    let mut c = SessionConfig::for_task(task.clone());
    c.limits = Some(limits);
    c
}

fn run_local(
    orch: &Orchestrator,
    task: &Arc<TaskSpec>,
    design: AgentDesign,
    script: ReplayScript,
    limits: EpisodeLimits,
) -> (String, EpisodeResult) {
    let id = orch.create(config(task, limits)).unwrap();
    let opts = episode_options(task, limits, orch.clock().clone()).unwrap();
    let mut policy = build_policy(design, Some(&task.dataset), true, false);
    let result = run_episode(
        &mut OrchestratedEnv::new(orch, id.clone()),
        policy.as_mut(),
        &mut ReplayModel::new(script),
        &opts,
    );
    (id, result)
}

fn manual_orch() -> Orchestrator {
    Orchestrator::new(Arc::new(ManualClock::new()))
}

// ---------------------------------------------------------------- 1 and 2

/// Dataset names in per-task table column order.
const COLUMNS: [&str; 15] = [
    "humaneval",
    "swebench",
    "swebench-multilingual",
    "resq",
    "canitedit",
    "swtbench",
    "design2code",
    "chartmimic",
    "dsbench",
    "swebench-mm",
    "intercode",
    "bird",
    "minictx",
    "vscode",
    "general-swe",
];

/// Half a unit in the last reported digit, plus float noise: 95.7 / 6 lands
/// exactly on the 15.95 rounding boundary.
const ROUNDING_TOL: f64 = 0.05 + 1e-9;

fn check_row(checks: &mut Checks, percent: [f64; 15], want: [f64; 4], want_overall: f64) {
    let results: BTreeMap<String, f64> = COLUMNS
        .iter()
        .zip(percent)
        .map(|(d, p)| (d.to_string(), p / 100.0))
        .collect();
    let report = aggregate("row", &results, true).unwrap();
    for (c, w) in Category::ALL.into_iter().zip(want) {
        let got = report.category(c).map(|s| s * 100.0).unwrap_or(f64::NAN);
        checks.close(c.title(), got, w, ROUNDING_TOL);
    }
    checks.close(
        "overall",
        report.overall * 100.0,
        want_overall,
        ROUNDING_TOL,
    );
}

fn pure_cua_row(_: &Ctx, checks: &mut Checks) {
    check_row(
        checks,
        [
            20.0, 10.0, 5.0, 20.0, 20.0, 20.7, 60.1, 72.4, 10.0, 10.0, 20.0, 0.0, 0.0, 55.0, 20.0,
        ],
        [16.0, 38.1, 6.7, 37.5],
        22.9,
    );
}

fn tools_cua_row(_: &Ctx, checks: &mut Checks) {
    check_row(
        checks,
        [
            100.0, 30.0, 25.0, 55.0, 60.0, 50.6, 86.6, 79.5, 53.1, 15.0, 100.0, 15.0, 15.0, 50.0,
            25.0,
        ],
        [53.4, 58.6, 43.3, 37.5],
        50.7,
    );
}

// ---------------------------------------------------------------------- 3

/// Instance counts from the published per-task count table.
const PUBLISHED_COUNTS: [(&str, u32); 15] = [
    ("humaneval", 165),
    ("design2code", 485),
    ("chartmimic", 600),
    ("intercode", 100),
    ("resq", 100),
    ("canitedit", 105),
    ("vscode", 20),
    ("bird", 500),
    ("dsbench", 112),
    ("swebench", 2000),
    ("swebench-multilingual", 91),
    ("swebench-mm", 510),
    ("swtbench", 276),
    ("minictx", 381),
    ("general-swe", 20),
];

fn registry_and_lite(_: &Ctx, checks: &mut Checks) {
    checks.eq("dataset count", DATASETS.len(), 15);
    for (name, count) in PUBLISHED_COUNTS {
        let got = DATASETS
            .iter()
            .find(|d| d.name == name)
            .map(|d| d.instance_count);
        checks.eq(&format!("{name} instance count"), got, Some(count));
    }
    checks.eq("registry total", total_instances(), 5400);

    let instances = full_registry_instances();
    let a = sample_lite(&instances, 7).unwrap();
    let b = sample_lite(&instances, 7).unwrap();
    checks.eq("lite size", a.len(), 300);
    checks.check(a == b, "lite sample differs between runs with one seed");
    checks.check(
        sample_lite(&instances, 8).unwrap() != a,
        "lite sample ignores the seed",
    );
    for d in &DATASETS {
        let picked: BTreeSet<&str> = a
            .iter()
            .filter(|r| r.dataset == d.name)
            .map(|r| r.instance_id.as_str())
            .collect();
        checks.eq(&format!("{} lite refs", d.name), picked.len(), 20);
        if d.instance_count == 20 {
            let all = canonical_ids(d);
            checks.check(
                all.iter().all(|id| picked.contains(id.as_str())),
                format!("{} not fully included", d.name),
            );
        }
    }
}

// ---------------------------------------------------------------------- 4

fn key_chord() -> impl Strategy<Value = KeyChord> {
    let name = prop_oneof![
        proptest::sample::select(NAMED_KEYS.to_vec()).prop_map(String::from),
        (0x21u8..0x7f).prop_map(|b| char::from(b).to_string()),
    ];
    (
        proptest::collection::vec(proptest::sample::select(Modifier::ALL.to_vec()), 0..3),
        name,
    )
        .prop_map(|(m, k)| KeyChord::new(m, k))
}

fn atomic_action() -> impl Strategy<Value = AtomicAction> {
    let button = proptest::sample::select(MouseButton::ALL.to_vec());
    prop_oneof![
        (any::<u32>(), any::<u32>()).prop_map(|(x, y)| AtomicAction::MouseMove { x, y }),
        button
            .clone()
            .prop_map(|button| AtomicAction::Click { button }),
        "(?s).{1,24}".prop_map(|text| AtomicAction::Type { text }),
        key_chord().prop_map(|chord| AtomicAction::Key { chord }),
        button
            .clone()
            .prop_map(|button| AtomicAction::MouseDown { button }),
        button.prop_map(|button| AtomicAction::MouseUp { button }),
        (0u64..100_000_000).prop_map(|millis| AtomicAction::Sleep { millis }),
    ]
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn record_outcome<T: Debug>(checks: &mut Checks, what: &str, r: Result<(), TestError<T>>) {
    match r {
        Ok(()) => {}
        Err(TestError::Fail(why, value)) => checks
            .failures
            .push(format!("{what}: {why}; minimal input {value:?}")),
        Err(TestError::Abort(why)) => checks.failures.push(format!("{what}: aborted: {why}")),
    }
}

fn grammar_round_trip(_: &Ctx, checks: &mut Checks) {
    let listing =
        parse_command("xdotool mousemove 1000 1200 click 1 && xdotool type 'hello world'");
    checks.eq(
        "listing command",
        listing,
        Ok(ActionSequence::new(vec![
            AtomicAction::MouseMove { x: 1000, y: 1200 },
            AtomicAction::Click {
                button: MouseButton::Left,
            },
            AtomicAction::Type {
                text: "hello world".into(),
            },
        ])),
    );

    let cases = AtomicUsize::new(0);
    let strategy = proptest::collection::vec(atomic_action(), 1..8).prop_map(ActionSequence::new);
    let r = runner(1000).run(&strategy, |seq| {
        cases.fetch_add(1, Ordering::Relaxed);
        let text = render_command(&seq);
        prop_assert_eq!(
            parse_command(&text),
            Ok(seq.clone()),
            "rendered as {:?}",
            text
        );
        Ok(())
    });
    record_outcome(checks, "parse(render(seq)) == seq", r);
    checks.check(
        cases.load(Ordering::Relaxed) >= 1000,
        format!("only {} sequences generated", cases.load(Ordering::Relaxed)),
    );
}

// ---------------------------------------------------------------------- 5

fn dom_node() -> impl Strategy<Value = DomNode> {
    let role = proptest::sample::select(vec![
        Role::Button,
        Role::Textfield,
        Role::Editor,
        Role::Tab,
        Role::Listitem,
        Role::Pane,
        Role::Menu,
        Role::Statusbar,
        Role::Other,
    ]);
    let bbox = (-80i32..600, -60i32..440, -4i32..260, -4i32..180)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h));
    let leaf = (role.clone(), "[a-z]{0,6}", bbox.clone(), any::<bool>())
        .prop_map(|(r, n, b, i)| DomNode::new(r, n, b, i));
    leaf.prop_recursive(4, 48, 5, move |inner| {
        (
            role.clone(),
            "[a-z]{0,6}",
            bbox.clone(),
            any::<bool>(),
            proptest::collection::vec(inner, 0..5),
        )
            .prop_map(|(r, n, b, i, kids)| DomNode::new(r, n, b, i).with_children(kids))
    })
}

/// Interactable nodes in pre-order with boxes clipped to a `w`×`h` screen,
/// dropping those left with no area.
fn expected_registry(dom: &DomTree, w: i64, h: i64) -> Vec<RegistryEntry> {
    fn walk(n: &DomNode, w: i64, h: i64, out: &mut Vec<RegistryEntry>) {
        if n.interactable {
            let (x0, y0) = (i64::from(n.bbox.x).max(0), i64::from(n.bbox.y).max(0));
            let x1 = (i64::from(n.bbox.x) + i64::from(n.bbox.w)).min(w);
            let y1 = (i64::from(n.bbox.y) + i64::from(n.bbox.h)).min(h);
            if x1 > x0 && y1 > y0 {
                out.push(RegistryEntry {
                    bbox: BBox::new(x0 as i32, y0 as i32, (x1 - x0) as i32, (y1 - y0) as i32),
                    role: n.role,
                    name: n.name.clone(),
                });
            }
        }
        for c in &n.children {
            walk(c, w, h, out);
        }
    }
    let mut out = Vec::new();
    walk(&dom.root, w, h, &mut out);
    out
}

fn som_properties(_: &Ctx, checks: &mut Checks) {
    let screen = (64u32..=640, 48u32..=480, any::<[u8; 3]>(), any::<[u8; 3]>());
    let strategy = (dom_node(), screen);
    let cases = AtomicUsize::new(0);
    let r = runner(200).run(&strategy, |(root, (w, h, bg, fg))| {
        cases.fetch_add(1, Ordering::Relaxed);
        let geom = ScreenGeometry::new(w, h);
        let mut canvas = Canvas::new(geom, bg);
        canvas.fill_rect(BBox::new(w as i32 / 4, h as i32 / 4, w as i32 / 2, 8), fg);
        let shot = Screenshot::from_canvas(&canvas);
        let dom = DomTree::new(root);

        let (marked, reg) = annotate_som(&shot, &dom).unwrap();
        let ids: Vec<u32> = reg.iter().map(|(id, _)| id).collect();
        prop_assert_eq!(ids, (1..=reg.len() as u32).collect::<Vec<_>>());
        let entries: Vec<RegistryEntry> = reg.iter().map(|(_, e)| e.clone()).collect();
        prop_assert_eq!(entries, expected_registry(&dom, i64::from(w), i64::from(h)));
        if reg.is_empty() {
            prop_assert_eq!(&marked, &shot);
        }

        for (id, entry) in reg.iter() {
            let ea = parse_element_action(&format!("click [{id}]")).unwrap();
            prop_assert_eq!(&ea, &ElementAction::click(id));
            let seq = resolve_element_action(&ea, &reg).unwrap();
            let Some(AtomicAction::MouseMove { x, y }) = seq.actions.first() else {
                return Err(TestCaseError::fail(
                    "resolved click does not start with a move",
                ));
            };
            prop_assert!(
                entry.bbox.contains(i64::from(*x), i64::from(*y)),
                "click ({}, {}) outside {:?}",
                x,
                y,
                entry.bbox
            );
            prop_assert!(geom.contains(i64::from(*x), i64::from(*y)));
            prop_assert_eq!(
                &seq.actions[1..],
                &[AtomicAction::Click {
                    button: MouseButton::Left
                }][..]
            );
        }

        let (again, reg2) = annotate_som(&shot, &dom).unwrap();
        prop_assert_eq!(&again.digest, &marked.digest);
        prop_assert_eq!(&reg2, &reg);
        let reloaded = DomTree::from_json(&dom.to_json()).unwrap();
        let copy = Screenshot::from_png(shot.png.clone(), geom);
        let (third, reg3) = annotate_som(&copy, &reloaded).unwrap();
        prop_assert_eq!(&third.digest, &marked.digest);
        prop_assert_eq!(&reg3, &reg);
        Ok(())
    });
    record_outcome(checks, "set-of-marks", r);
    checks.check(
        cases.load(Ordering::Relaxed) >= 200,
        format!("only {} trees generated", cases.load(Ordering::Relaxed)),
    );
}

// ---------------------------------------------------------------------- 6

fn ide_action() -> impl Strategy<Value = ActionSequence> {
    let key = proptest::sample::select(vec![
        "Return",
        "BackSpace",
        "Left",
        "Right",
        "Up",
        "Down",
        "Home",
        "End",
        "Tab",
        "ctrl+s",
        "Delete",
    ]);
    prop_oneof![
        3 => (0u32..1280, 0u32..720).prop_map(|(x, y)| vec![
            AtomicAction::mouse_move(x, y),
            AtomicAction::click(MouseButton::Left)
        ]),
        3 => "[a-z ]{1,8}".prop_map(|t| vec![AtomicAction::type_text(t)]),
        3 => key.prop_map(|k| vec![AtomicAction::key(k)]),
        1 => (0u32..1280, 0u32..720).prop_map(|(x, y)| vec![
            AtomicAction::mouse_move(x, y),
            AtomicAction::click(MouseButton::ScrollDown)
        ]),
    ]
    .prop_map(ActionSequence::new)
}

fn apply(orch: &Orchestrator, id: &str, seq: &ActionSequence) -> String {
    let s = orch.session(id).unwrap();
    let mut s = s.lock().unwrap();
    s.apply_action(seq).unwrap().screenshot.digest
}

fn checkpoint_determinism(_: &Ctx, checks: &mut Checks) {
    let tasks = [toy("echo-01"), toy("replace-01")];
    let seq = |lo: usize, hi: usize| proptest::collection::vec(ide_action(), lo..=hi);
    let strategy = (0usize..2, seq(0, 9), seq(10, 10), seq(1, 9));
    let orch = manual_orch();
    let diverged = AtomicUsize::new(0);
    let cases = AtomicUsize::new(0);
    let r = runner(50).run(&strategy, |(t, prefix, divergent, suffix)| {
        cases.fetch_add(1, Ordering::Relaxed);
        let cfg = || config(&tasks[t], EpisodeLimits::long_horizon());

        let straight = orch.create(cfg()).unwrap();
        for a in &prefix {
            apply(&orch, &straight, a);
        }
        let want: Vec<String> = suffix.iter().map(|a| apply(&orch, &straight, a)).collect();

        let branched = orch.create(cfg()).unwrap();
        let mut at_checkpoint = String::new();
        for a in &prefix {
            at_checkpoint = apply(&orch, &branched, a);
        }
        let cp = orch.checkpoint(&branched).unwrap();
        let mut last = at_checkpoint.clone();
        for a in &divergent {
            last = apply(&orch, &branched, a);
        }
        if last != at_checkpoint {
            diverged.fetch_add(1, Ordering::Relaxed);
        }
        let restored = orch.restore(&cp).unwrap();
        let got: Vec<String> = suffix.iter().map(|a| apply(&orch, &restored, a)).collect();
        prop_assert_eq!(got, want);

        let state = |id: &str| {
            orch.session(id)
                .unwrap()
                .lock()
                .unwrap()
                .state_digest()
                .unwrap()
        };
        prop_assert_eq!(state(&restored), state(&straight));
        for id in [straight, branched, restored] {
            orch.destroy(&id).unwrap();
        }
        Ok(())
    });
    record_outcome(checks, "restore then replay", r);
    checks.check(
        cases.load(Ordering::Relaxed) >= 50,
        format!("only {} scripts generated", cases.load(Ordering::Relaxed)),
    );
    // Divergent actions that leave the screen unchanged would make the check vacuous.
    checks.check(
        diverged.load(Ordering::Relaxed) * 2 > cases.load(Ordering::Relaxed),
        format!(
            "divergent actions changed the screen in only {} of {} scripts",
            diverged.load(Ordering::Relaxed),
            cases.load(Ordering::Relaxed)
        ),
    );
}

// ---------------------------------------------------------------------- 7

fn endless_gui(n: u32) -> ReplayScript {
    ReplayScript::new(
        (0..n)
            .map(|t| ReplayEntry::text(t, "```\nxdotool key Right\n```"))
            .collect(),
    )
}

fn endless_bash(n: u32) -> ReplayScript {
    ReplayScript::new(
        (0..n)
            .map(|t| ReplayEntry::tool(t, "bash", json!({"cmd": "true"})))
            .collect(),
    )
}

fn expect_terminated<T: Debug>(checks: &mut Checks, what: &str, r: Result<T, EnvError>) {
    let ok = matches!(
        &r,
        Err(EnvError::Session(SessionError::SessionTerminated))
            | Err(EnvError::Tool(idegym_core::agents::ToolError::Session(
                SessionError::SessionTerminated
            )))
    );
    checks.check(ok, format!("{what} after termination: {r:?}"));
}

fn episode_contract(ctx: &Ctx, checks: &mut Checks) {
    let task = toy("echo-01");
    let orch = manual_orch();

    for (design, limits, script, want) in [
        (
            AgentDesign::PureCua,
            EpisodeLimits::default(),
            endless_gui(400),
            20,
        ),
        (
            AgentDesign::ToolsCua,
            EpisodeLimits::default(),
            endless_bash(400),
            20,
        ),
        (
            AgentDesign::ToolsCua,
            EpisodeLimits::long_horizon(),
            endless_bash(400),
            250,
        ),
        (
            AgentDesign::TextSwe,
            EpisodeLimits::long_horizon(),
            endless_bash(400),
            250,
        ),
    ] {
        let (id, r) = run_local(&orch, &task, design, script, limits);
        let tag = format!("{} cap {}", design.as_str(), limits.max_steps);
        checks.eq(&format!("{tag}: steps"), r.trajectory.records.len(), want);
        checks.eq(
            &format!("{tag}: termination"),
            r.termination(),
            Termination::StepCap,
        );
        let status = orch.session(&id).unwrap().lock().unwrap().status();
        checks.eq(&format!("{tag}: status"), status, SessionStatus::Terminated);
        let mut env = OrchestratedEnv::new(&orch, id);
        expect_terminated(
            checks,
            &tag,
            env.step(&parse_command("xdotool key Up").unwrap()),
        );
        expect_terminated(
            checks,
            &tag,
            env.tool(&ToolCall::new("bash", json!({"cmd": "ls"}))),
        );
    }

    // The session enforces its cap independently of the loop.
    let id = orch
        .create(config(&task, EpisodeLimits::default()))
        .unwrap();
    let seq = parse_command("xdotool key Right").unwrap();
    let mut env = OrchestratedEnv::new(&orch, id);
    for _ in 0..20 {
        env.step(&seq).unwrap();
    }
    checks.eq(
        "21st session step",
        env.step(&seq).err(),
        Some(EnvError::Session(SessionError::StepCapExceeded(20))),
    );

    let mut stop = endless_gui(3);
    stop.entries.push(ReplayEntry::text(3, "STOP done"));
    let (_, r) = run_local(
        &orch,
        &task,
        AgentDesign::PureCua,
        stop,
        EpisodeLimits::default(),
    );
    checks.eq("stop: steps", r.trajectory.records.len(), 4);
    checks.eq(
        "stop: termination",
        r.termination(),
        Termination::StopCommand,
    );
    let mut finish = endless_bash(5);
    finish
        .entries
        .push(ReplayEntry::tool(5, "finish", json!({"message": "done"})));
    let (_, r) = run_local(
        &orch,
        &task,
        AgentDesign::ToolsCua,
        finish,
        EpisodeLimits::default(),
    );
    checks.eq("finish: steps", r.trajectory.records.len(), 6);
    checks.eq(
        "finish: termination",
        r.termination(),
        Termination::StopCommand,
    );

    // Over the wire.
    let c = &ctx.client;
    let info = c
        .create(&CreateSession {
            task_id: Some("echo-01".into()),
            ..CreateSession::default()
        })
        .unwrap();
    let opts = episode_options(
        &task,
        EpisodeLimits::default(),
        Arc::new(ManualClock::new()),
    )
    .unwrap();
    let mut policy = build_policy(AgentDesign::PureCua, Some(&task.dataset), true, false);
    let r = run_episode(
        &mut HttpEnv::new(c.clone(), info.session_id.clone()),
        policy.as_mut(),
        &mut ReplayModel::new(endless_gui(400)),
        &opts,
    );
    checks.eq("wire: steps", r.trajectory.records.len(), 20);
    checks.eq("wire: termination", r.termination(), Termination::StepCap);
    let status = c.session(&info.session_id).map(|i| i.status).ok();
    checks.eq("wire: status", status, Some(SessionStatus::Terminated));
    for (what, result) in [
        (
            "wire step",
            c.step(&info.session_id, "xdotool key Up").err(),
        ),
        (
            "wire tool",
            c.tool(
                &info.session_id,
                &ToolCall::new("bash", json!({"cmd": "ls"})),
            )
            .err(),
        ),
    ] {
        let got = match result {
            Some(ClientError::Api { status, body }) => Some((status.as_u16(), body.error)),
            _ => None,
        };
        checks.eq(what, got, Some((410, "session_terminated".to_string())));
    }
    c.delete(&info.session_id).unwrap();
}

// ---------------------------------------------------------------------- 8

/// Listing commands an agent can issue, prepended to a tape.
const LISTINGS: [&str; 5] = ["ls -a", "ls /", "find /", "ls -a /workspace", "find ."];

fn with_listings(script: ReplayScript) -> ReplayScript {
    let n = LISTINGS.len() as u32;
    let mut entries: Vec<ReplayEntry> = LISTINGS
        .iter()
        .enumerate()
        .map(|(i, cmd)| ReplayEntry::tool(i as u32, "bash", json!({ "cmd": cmd })))
        .collect();
    entries.extend(script.entries.into_iter().map(|mut e| {
        e.turn += n;
        e
    }));
    ReplayScript::new(entries)
}

fn fixture_names(task: &TaskSpec) -> Vec<String> {
    let mut names: Vec<String> = task.fixture_files().unwrap().into_keys().collect();
    names.push("verifier".into());
    names
}

fn toy_episodes(_: &Ctx, checks: &mut Checks) {
    let orch = manual_orch();
    for (task, tape_name, want) in [
        ("replace-01", "replace-01.tools-cua.rpl", 1.0),
        ("replace-01", "replace-01.sabotage.tools-cua.rpl", 0.0),
        ("echo-01", "echo-01.tools-cua.rpl", 1.0),
        ("echo-01", "echo-01.sabotage.tools-cua.rpl", 0.0),
    ] {
        let spec = toy(task);
        let script = tape(tape_name);
        let used: BTreeSet<String> = script
            .entries
            .iter()
            .filter_map(|e| e.tool_call.as_ref().map(|c| c.name.clone()))
            .collect();
        if task == "replace-01" {
            checks.check(
                used.contains("bash") && used.contains("string_replace"),
                format!("{tape_name} uses {used:?}"),
            );
        }
        let (_, r) = run_local(
            &orch,
            &spec,
            AgentDesign::ToolsCua,
            with_listings(script),
            EpisodeLimits::default(),
        );
        checks.eq(&format!("{tape_name} reward"), r.reward.score, want);
        checks.eq(
            &format!("{tape_name} termination"),
            r.termination(),
            Termination::StopCommand,
        );
        let names = fixture_names(&spec);
        for rec in &r.trajectory.records[..LISTINGS.len()] {
            for f in &names {
                checks.check(
                    !rec.execution_result.contains(f.as_str()),
                    format!("{tape_name}: listing step {} shows {f}", rec.index),
                );
            }
        }
    }

    // Every shipped task: shell listings, the explorer tree and direct reads.
    let mut roots = vec![repo().join("datasets/toy")];
    roots.extend(
        std::fs::read_dir(repo().join("datasets"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_dir() && !p.ends_with("toy")),
    );
    let mut seen = 0;
    for root in roots {
        for entry in std::fs::read_dir(&root).unwrap() {
            let dir = entry.unwrap().path();
            if !dir.join("manifest.json").exists() {
                continue;
            }
            seen += 1;
            let spec = Arc::new(load_taskspec_path(&dir).unwrap());
            let names = fixture_names(&spec);
            let id = orch
                .create(config(&spec, EpisodeLimits::long_horizon()))
                .unwrap();
            let mut env = OrchestratedEnv::new(&orch, id.clone());
            let mut visible = Vec::new();
            for cmd in LISTINGS {
                let out = env
                    .tool(&ToolCall::new("bash", json!({ "cmd": cmd })))
                    .unwrap();
                visible.push((cmd.to_string(), out.output));
            }
            let dom = env.observe(true, false).unwrap().dom.unwrap();
            let explorer: Vec<String> = dom
                .nodes_pre_order()
                .iter()
                .map(|n| n.name.clone())
                .collect();
            visible.push(("explorer".into(), explorer.join("\n")));
            for (what, text) in &visible {
                for f in &names {
                    checks.check(
                        !text.contains(f.as_str()),
                        format!("{}: {what} shows {f}", spec.task_id),
                    );
                }
            }
            let read = env
                .tool(&ToolCall::new(
                    "bash",
                    json!({"cmd": "cat /verifier/tests.spec"}),
                ))
                .unwrap();
            checks.check(
                read.exit_code != Some(0),
                format!("{}: verifier fixture readable", spec.task_id),
            );
            orch.destroy(&id).unwrap();
        }
    }
    checks.eq("shipped tasks inspected", seen, 17);
}

// ---------------------------------------------------------------------- 9

fn record(index: u32, action: RecordedAction) -> StepRecord {
    StepRecord {
        index,
        observation_digest: None,
        agent_output_text: String::new(),
        action,
        execution_result: "ok".into(),
        wall_time: 0.0,
    }
}

fn tool_step(i: u32) -> StepRecord {
    record(
        i,
        RecordedAction::Tool {
            name: "bash".into(),
            args: json!({"cmd": "true"}),
        },
    )
}

fn gui_step(i: u32) -> StepRecord {
    let command = "xdotool key Right".to_string();
    record(
        i,
        RecordedAction::Gui {
            actions: parse_command(&command).unwrap(),
            command,
        },
    )
}

fn trajectory(records: Vec<StepRecord>) -> Trajectory {
    Trajectory {
        records,
        termination: Some(Termination::StepCap),
        error: None,
    }
}

fn interaction_fractions(_: &Ctx, checks: &mut Checks) {
    let all_tool = interaction_stats(&trajectory((0..7).map(tool_step).collect())).unwrap();
    checks.eq(
        "all-tool (tool, gui)",
        (all_tool.tool, all_tool.gui),
        (1.0, 0.0),
    );
    let gui_only = interaction_stats(&trajectory((0..9).map(gui_step).collect())).unwrap();
    checks.eq(
        "gui-only (tool, gui)",
        (gui_only.tool, gui_only.gui),
        (0.0, 1.0),
    );
    let mixed: Vec<StepRecord> = (0..10)
        .map(|i| if i % 5 < 2 { tool_step(i) } else { gui_step(i) })
        .collect();
    let mixed = interaction_stats(&trajectory(mixed)).unwrap();
    checks.eq("mixed 4/6 (tool, gui)", (mixed.tool, mixed.gui), (0.4, 0.6));

    // The same fractions from episodes the loop actually ran.
    let orch = manual_orch();
    let task = toy("echo-01");
    let mut entries = Vec::new();
    for t in 0..10u32 {
        entries.push(if t % 5 < 2 {
            ReplayEntry::tool(t, "bash", json!({"cmd": "true"}))
        } else {
            ReplayEntry::text(t, "```\nxdotool key Right\n```")
        });
    }
    for (what, design, script, want) in [
        (
            "episode all-tool",
            AgentDesign::ToolsCua,
            endless_bash(6),
            (1.0, 0.0),
        ),
        (
            "episode gui-only",
            AgentDesign::PureCua,
            endless_gui(6),
            (0.0, 1.0),
        ),
        (
            "episode mixed",
            AgentDesign::ToolsCua,
            ReplayScript::new(entries),
            (0.4, 0.6),
        ),
    ] {
        let limits = EpisodeLimits::with_max_steps(script.entries.len() as u32);
        let (_, r) = run_local(&orch, &task, design, script, limits);
        let s = r.interaction_stats.unwrap();
        checks.eq(what, (s.tool, s.gui), want);
    }
}

// --------------------------------------------------------------------- 10

fn replay_tapes() -> Vec<(String, String, AgentDesign)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(repo().join("replays")).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        let Some(stem) = name.strip_suffix(".rpl") else {
            continue;
        };
        let parts: Vec<&str> = stem.split('.').collect();
        let design = AgentDesign::parse(parts[parts.len() - 1]).unwrap();
        out.push((parts[0].to_string(), name, design));
    }
    out.sort_by(|a, b| a.1.cmp(&b.1));
    out
}

fn replay_determinism(ctx: &Ctx, checks: &mut Checks) {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
    let orch = Orchestrator::new(clock.clone());
    let tapes = replay_tapes();
    checks.check(tapes.len() >= 5, format!("only {} tapes", tapes.len()));
    for (task, name, design) in tapes {
        let spec = toy(&task);
        let limits = EpisodeLimits::default();
        let log = |r: &EpisodeResult| write_trajectory_log(r);
        let (_, first) = run_local(&orch, &spec, design, tape(&name), limits);
        let (_, second) = run_local(&orch, &spec, design, tape(&name), limits);

        let info = ctx
            .client
            .create(&CreateSession {
                task_id: Some(task.clone()),
                ..CreateSession::default()
            })
            .unwrap();
        let opts = episode_options(&spec, limits, clock.clone()).unwrap();
        let mut policy = build_policy(design, Some(&spec.dataset), true, false);
        let remote = run_episode(
            &mut HttpEnv::new(ctx.client.clone(), info.session_id.clone()),
            policy.as_mut(),
            &mut ReplayModel::new(tape(&name)),
            &opts,
        );
        ctx.client.delete(&info.session_id).unwrap();

        checks.check(
            first.trajectory.termination == Some(Termination::StopCommand),
            format!("{name}: ended with {:?}", first.trajectory),
        );
        let base = strip_volatile(&log(&first));
        checks.check(
            strip_volatile(&log(&second)) == base,
            format!("{name}: in-process rerun differs"),
        );
        checks.check(
            strip_volatile(&log(&remote)) == base,
            format!("{name}: run over the wire differs"),
        );
        checks.check(
            log(&first).lines().count() == first.trajectory.records.len() + 2,
            format!("{name}: log has unexpected line count"),
        );
    }
}

// --------------------------------------------------------------------- 11

fn parallel_jobs(clock: &Arc<dyn Clock>) -> Vec<EpisodeJob> {
    [
        ("echo-01", "echo-01.tools-cua.rpl"),
        ("replace-01", "replace-01.sabotage.tools-cua.rpl"),
        ("echo-01", "echo-01.pure-cua.rpl"),
        ("replace-01", "replace-01.tools-cua.rpl"),
        ("echo-01", "echo-01.sabotage.tools-cua.rpl"),
    ]
    .into_iter()
    .map(|(task, name)| {
        let spec = toy(task);
        let design =
            AgentDesign::parse(name.trim_end_matches(".rpl").rsplit('.').next().unwrap()).unwrap();
        EpisodeJob {
            options: episode_options(&spec, EpisodeLimits::default(), clock.clone()).unwrap(),
            config: SessionConfig::for_task(spec.clone()),
            policy: build_policy(design, Some(&spec.dataset), true, false),
            model: Box::new(ReplayModel::new(tape(name))),
        }
    })
    .collect()
}

fn parallel_isolation(_: &Ctx, checks: &mut Checks) {
    let clock: Arc<dyn Clock> = Arc::new(ManualClock::new());
    let sequential = Orchestrator::new(clock.clone());
    let seq = sequential.run_parallel(parallel_jobs(&clock), 1);
    let parallel = Orchestrator::new(clock.clone());
    let par = parallel.run_parallel(parallel_jobs(&clock), 2);

    let rewards = |rs: &[EpisodeResult]| rs.iter().map(|r| r.reward.score).collect::<Vec<_>>();
    checks.eq(
        "sequential rewards",
        rewards(&seq),
        vec![1.0, 0.0, 1.0, 1.0, 0.0],
    );
    checks.eq("parallel rewards", rewards(&par), rewards(&seq));
    for (a, b) in seq.iter().zip(&par) {
        checks.check(
            strip_volatile(&write_trajectory_log(a)) == strip_volatile(&write_trajectory_log(b)),
            format!("{:?}: trajectory differs under concurrency", a.task_id),
        );
    }
    checks.check(
        parallel.peak() <= 2,
        format!("peak concurrency {}", parallel.peak()),
    );
    checks.eq("sequential peak", sequential.peak(), 1);
    checks.eq("live sessions after the run", parallel.live(), 0);
}
