//! Closed built-in shell over the simulated filesystem.
//!
//! Supports `&&`, `||`, `;`, newlines, pipes, `>`/`>>`/`2>`/`2>&1` redirection,
//! single/double quotes, backslash escapes and `*`/`?` globs in the last path
//! component. No variables, subshells or host processes.

use std::collections::BTreeSet;

use crate::backend::ShellOutput;

use super::{paths, SimState, WORKSPACE_ROOT};

pub const NOT_FOUND_EXIT: i32 = 127;

const DEV_NULL: &str = "/dev/null";

/// Runs `cmd` against `state`. Never fails: errors become output and exit codes.
pub fn run(state: &mut SimState, cmd: &str) -> ShellOutput {
    let tokens = match lex(cmd) {
        Ok(t) => t,
        Err(msg) => {
            return ShellOutput {
                output: format!("sh: {msg}\n"),
                exit_code: 2,
            }
        }
    };
    let list = match parse(tokens) {
        Ok(l) => l,
        Err(msg) => {
            return ShellOutput {
                output: format!("sh: {msg}\n"),
                exit_code: 2,
            }
        }
    };
    let mut output = String::new();
    let mut status = 0;
    for (connector, pipeline) in list {
        let run_it = match connector {
            Connector::Always => true,
            Connector::And => status == 0,
            Connector::Or => status != 0,
        };
        if !run_it {
            continue;
        }
        let (code, exit) = run_pipeline(state, &pipeline, &mut output);
        status = code;
        if exit {
            break;
        }
    }
    ShellOutput {
        output,
        exit_code: status,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Word {
    text: String,
    /// Contains an unquoted `*` or `?`.
    glob: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(Word),
    And,
    Or,
    Semi,
    Pipe,
    Redirect { fd: u8, append: bool },
    StderrToStdout,
}

fn lex(input: &str) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let mut chars = input.chars().peekable();
    let mut cur = String::new();
    let mut started = false;
    let mut glob = false;

    fn flush(out: &mut Vec<Token>, cur: &mut String, started: &mut bool, glob: &mut bool) {
        if *started {
            out.push(Token::Word(Word {
                text: std::mem::take(cur),
                glob: *glob,
            }));
        }
        *started = false;
        *glob = false;
    }

    while let Some(c) = chars.next() {
        match c {
            ' ' | '\t' => flush(&mut out, &mut cur, &mut started, &mut glob),
            '\n' | ';' => {
                flush(&mut out, &mut cur, &mut started, &mut glob);
                out.push(Token::Semi);
            }
            '&' => {
                flush(&mut out, &mut cur, &mut started, &mut glob);
                if chars.next_if_eq(&'&').is_none() {
                    return Err("background jobs are not supported".into());
                }
                out.push(Token::And);
            }
            '|' => {
                flush(&mut out, &mut cur, &mut started, &mut glob);
                out.push(if chars.next_if_eq(&'|').is_some() {
                    Token::Or
                } else {
                    Token::Pipe
                });
            }
            '>' => {
                let fd = if started && cur == "2" && !glob {
                    cur.clear();
                    started = false;
                    2
                } else {
                    flush(&mut out, &mut cur, &mut started, &mut glob);
                    1
                };
                let append = chars.next_if_eq(&'>').is_some();
                if fd == 2 && !append && chars.next_if_eq(&'&').is_some() {
                    if chars.next_if_eq(&'1').is_none() {
                        return Err("unsupported redirection".into());
                    }
                    out.push(Token::StderrToStdout);
                } else {
                    out.push(Token::Redirect { fd, append });
                }
            }
            '<' => return Err("input redirection is not supported".into()),
            '\'' => {
                started = true;
                loop {
                    match chars.next() {
                        Some('\'') => break,
                        Some(c) => cur.push(c),
                        None => return Err("unterminated quote".into()),
                    }
                }
            }
            '"' => {
                started = true;
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some(e @ ('"' | '\\' | '$' | '`')) => cur.push(e),
                            Some(e) => {
                                cur.push('\\');
                                cur.push(e);
                            }
                            None => return Err("unterminated quote".into()),
                        },
                        Some(c) => cur.push(c),
                        None => return Err("unterminated quote".into()),
                    }
                }
            }
            '\\' => {
                started = true;
                match chars.next() {
                    Some('\n') | None => {}
                    Some(e) => cur.push(e),
                }
            }
            c => {
                started = true;
                if c == '*' || c == '?' {
                    glob = true;
                }
                cur.push(c);
            }
        }
    }
    flush(&mut out, &mut cur, &mut started, &mut glob);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Connector {
    Always,
    And,
    Or,
}

#[derive(Debug, Default)]
struct Simple {
    argv: Vec<Word>,
    stdout: Option<(String, bool)>,
    stderr: Option<(String, bool)>,
    stderr_to_stdout: bool,
}

type Pipeline = Vec<Simple>;

fn parse(tokens: Vec<Token>) -> Result<Vec<(Connector, Pipeline)>, String> {
    let mut list = Vec::new();
    let mut connector = Connector::Always;
    let mut pipeline: Pipeline = Vec::new();
    let mut simple = Simple::default();
    let mut it = tokens.into_iter().peekable();

    let finish_simple = |simple: &mut Simple, pipeline: &mut Pipeline| -> Result<(), String> {
        let s = std::mem::take(simple);
        if s.argv.is_empty() {
            if s.stdout.is_some() || s.stderr.is_some() {
                return Err("missing command before redirection".into());
            }
            return Ok(());
        }
        pipeline.push(s);
        Ok(())
    };

    while let Some(tok) = it.next() {
        match tok {
            Token::Word(w) => simple.argv.push(w),
            Token::Redirect { fd, append } => {
                let Some(Token::Word(target)) = it.next() else {
                    return Err("syntax error near redirection".into());
                };
                let slot = (target.text, append);
                if fd == 1 {
                    simple.stdout = Some(slot);
                } else {
                    simple.stderr = Some(slot);
                }
            }
            Token::StderrToStdout => simple.stderr_to_stdout = true,
            Token::Pipe => {
                if simple.argv.is_empty() {
                    return Err("syntax error near `|'".into());
                }
                finish_simple(&mut simple, &mut pipeline)?;
            }
            Token::And | Token::Or | Token::Semi => {
                let had_pipe_tail = !pipeline.is_empty() && simple.argv.is_empty();
                finish_simple(&mut simple, &mut pipeline)?;
                if had_pipe_tail {
                    return Err("syntax error: pipe without command".into());
                }
                if pipeline.is_empty() {
                    if tok != Token::Semi {
                        return Err("syntax error near operator".into());
                    }
                } else {
                    list.push((connector, std::mem::take(&mut pipeline)));
                }
                connector = match tok {
                    Token::And => Connector::And,
                    Token::Or => Connector::Or,
                    _ => Connector::Always,
                };
            }
        }
    }
    let had_pipe_tail = !pipeline.is_empty() && simple.argv.is_empty();
    finish_simple(&mut simple, &mut pipeline)?;
    if had_pipe_tail {
        return Err("syntax error: pipe without command".into());
    }
    if !pipeline.is_empty() {
        list.push((connector, pipeline));
    } else if connector != Connector::Always {
        return Err("syntax error: missing command after operator".into());
    }
    Ok(list)
}

/// Output of one command before redirection.
#[derive(Default)]
struct Out {
    stdout: String,
    stderr: String,
    code: i32,
    /// `exit` was called.
    exit: bool,
}

impl Out {
    fn ok(stdout: String) -> Self {
        Out {
            stdout,
            ..Out::default()
        }
    }

    fn err(stderr: String, code: i32) -> Self {
        Out {
            stderr,
            code,
            ..Out::default()
        }
    }
}

fn run_pipeline(state: &mut SimState, pipeline: &Pipeline, output: &mut String) -> (i32, bool) {
    let mut stdin: Option<String> = None;
    let mut code = 0;
    let mut exit = false;
    for (i, simple) in pipeline.iter().enumerate() {
        let argv = expand(state, &simple.argv);
        let mut out = dispatch(state, &argv, stdin.take());
        if simple.stderr_to_stdout {
            let err = std::mem::take(&mut out.stderr);
            out.stdout.push_str(&err);
        }
        if let Some((target, append)) = &simple.stdout {
            let data = std::mem::take(&mut out.stdout);
            if let Err(msg) = redirect(state, target, data.as_bytes(), *append) {
                out.stderr.push_str(&msg);
                out.code = 1;
            }
        }
        if let Some((target, append)) = &simple.stderr {
            let data = std::mem::take(&mut out.stderr);
            if let Err(msg) = redirect(state, target, data.as_bytes(), *append) {
                out.stderr = msg;
                out.code = 1;
            }
        }
        if i + 1 == pipeline.len() {
            output.push_str(&out.stdout);
        } else {
            stdin = Some(std::mem::take(&mut out.stdout));
        }
        output.push_str(&out.stderr);
        code = out.code;
        exit = out.exit;
        if exit {
            break;
        }
    }
    (code, exit)
}

fn redirect(state: &mut SimState, target: &str, data: &[u8], append: bool) -> Result<(), String> {
    let abs = paths::resolve(&state.terminal.cwd, target);
    if abs == DEV_NULL {
        return Ok(());
    }
    let mut bytes = Vec::new();
    if append {
        if let Some(existing) = state.files.get(&abs) {
            bytes.extend_from_slice(existing);
        }
    }
    bytes.extend_from_slice(data);
    write(state, &abs, bytes).map_err(|e| format!("sh: {target}: {e}\n"))
}

/// Checked write: parent must exist, target must not be a directory or read-only.
fn write(state: &mut SimState, abs: &str, bytes: Vec<u8>) -> Result<(), &'static str> {
    if state.is_read_only(abs) {
        return Err("read-only file system");
    }
    if state.is_dir(abs) {
        return Err("is a directory");
    }
    if !state.is_dir(paths::parent(abs)) {
        return Err("no such file");
    }
    state.put_file(abs, bytes);
    Ok(())
}

fn expand(state: &SimState, words: &[Word]) -> Vec<String> {
    let mut out = Vec::new();
    for w in words {
        if !w.glob {
            out.push(w.text.clone());
            continue;
        }
        let (dir_arg, pattern) = match w.text.rfind('/') {
            Some(i) => (&w.text[..=i], &w.text[i + 1..]),
            None => ("", w.text.as_str()),
        };
        if dir_arg.contains(['*', '?']) {
            out.push(w.text.clone());
            continue;
        }
        let dir = paths::resolve(
            &state.terminal.cwd,
            if dir_arg.is_empty() { "." } else { dir_arg },
        );
        let matches: Vec<String> = children(state, &dir)
            .into_iter()
            .filter(|name| {
                (pattern.starts_with('.') || !name.starts_with('.')) && glob_match(pattern, name)
            })
            .map(|name| format!("{dir_arg}{name}"))
            .collect();
        if matches.is_empty() {
            out.push(w.text.clone());
        } else {
            out.extend(matches);
        }
    }
    out
}

/// `*` and `?` wildcard match over characters.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|c| *c == '*')
}

/// Names of the immediate children of a directory.
pub fn children(state: &SimState, dir: &str) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    let mut add = |path: &str| {
        if path != dir && paths::is_within(path, dir) {
            let rest = if dir == "/" {
                &path[1..]
            } else {
                &path[dir.len() + 1..]
            };
            if let Some(first) = rest.split('/').next() {
                names.insert(first.to_string());
            }
        }
    };
    for f in state.files.keys() {
        add(f);
    }
    for d in &state.dirs {
        add(d);
    }
    if dir == "/" {
        names.insert(WORKSPACE_ROOT[1..].to_string());
    }
    names
}

fn exists(state: &SimState, abs: &str) -> bool {
    state.files.contains_key(abs) || state.is_dir(abs)
}

/// Every file at or below `abs`.
fn files_under(state: &SimState, abs: &str) -> Vec<String> {
    state
        .files
        .keys()
        .filter(|f| paths::is_within(f, abs))
        .cloned()
        .collect()
}

/// Splits leading `-xyz` flag clusters from operands. `--` ends flags.
fn flags<'a>(args: &'a [String], allowed: &str) -> Result<(BTreeSet<char>, Vec<&'a str>), char> {
    let mut set = BTreeSet::new();
    let mut rest = Vec::new();
    let mut done = false;
    for a in args {
        if !done && a == "--" {
            done = true;
        } else if !done && a.len() > 1 && a.starts_with('-') {
            for c in a[1..].chars() {
                if !allowed.contains(c) {
                    return Err(c);
                }
                set.insert(c);
            }
        } else {
            done = true;
            rest.push(a.as_str());
        }
    }
    Ok((set, rest))
}

fn usage(cmd: &str, flag: char) -> Out {
    Out::err(format!("{cmd}: invalid option -- '{flag}'\n"), 2)
}

fn dispatch(state: &mut SimState, argv: &[String], stdin: Option<String>) -> Out {
    let Some(name) = argv.first() else {
        return Out::default();
    };
    let args = &argv[1..];
    match name.as_str() {
        "echo" => echo(args),
        "printf" => printf(args),
        "cat" => cat(state, args, stdin),
        "ls" => ls(state, args),
        "mkdir" => mkdir(state, args),
        "rm" => rm(state, args),
        "cp" => copy_or_move(state, args, false),
        "mv" => copy_or_move(state, args, true),
        "cd" => cd(state, args),
        "pwd" => Out::ok(format!("{}\n", state.terminal.cwd)),
        "grep" => grep(state, args, stdin),
        "head" => head_tail(state, args, stdin, true),
        "tail" => head_tail(state, args, stdin, false),
        "wc" => wc(state, args, stdin),
        "find" => find(state, args),
        "touch" => touch(state, args),
        "true" => Out::default(),
        "false" => Out::err(String::new(), 1),
        "sleep" => sleep(state, args),
        "runtests" => runtests(state, args),
        "exit" => {
            let code = match args.first().map(|a| a.parse::<i32>()) {
                None => 0,
                Some(Ok(n)) => n & 0xff,
                Some(Err(_)) => 2,
            };
            Out {
                code,
                exit: true,
                ..Out::default()
            }
        }
        other => Out::err(format!("sh: {other}: command not found\n"), NOT_FOUND_EXIT),
    }
}

fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            Some('"') => out.push('"'),
            Some('\'') => out.push('\''),
            Some(o) => {
                out.push('\\');
                out.push(o);
            }
            None => out.push('\\'),
        }
    }
    out
}

fn echo(args: &[String]) -> Out {
    let mut newline = true;
    let mut escapes = false;
    let mut i = 0;
    while let Some(a) = args.get(i) {
        if a.len() > 1 && a.starts_with('-') && a[1..].chars().all(|c| c == 'n' || c == 'e') {
            newline &= !a.contains('n');
            escapes |= a.contains('e');
            i += 1;
        } else {
            break;
        }
    }
    let mut text = args[i..].join(" ");
    if escapes {
        text = unescape(&text);
    }
    if newline {
        text.push('\n');
    }
    Out::ok(text)
}

fn printf(args: &[String]) -> Out {
    let Some(format) = args.first() else {
        return Out::err("printf: usage: printf format [arguments]\n".into(), 2);
    };
    let format = unescape(format);
    let mut rest = args[1..].iter();
    let mut out = String::new();
    // The format is reused while arguments remain, as in POSIX printf.
    loop {
        let mut consumed = false;
        let mut it = format.chars().peekable();
        while let Some(c) = it.next() {
            if c != '%' {
                out.push(c);
                continue;
            }
            match it.next() {
                Some('%') => out.push('%'),
                Some('s') | Some('d') => {
                    consumed = true;
                    out.push_str(rest.next().map(String::as_str).unwrap_or(""));
                }
                Some(o) => {
                    out.push('%');
                    out.push(o);
                }
                None => out.push('%'),
            }
        }
        if !consumed || rest.len() == 0 {
            break;
        }
    }
    Out::ok(out)
}

fn read_text(state: &SimState, cmd: &str, arg: &str) -> Result<String, Out> {
    let abs = paths::resolve(&state.terminal.cwd, arg);
    match state.files.get(&abs) {
        Some(b) => Ok(String::from_utf8_lossy(b).into_owned()),
        None if state.is_dir(&abs) => Err(Out::err(format!("{cmd}: {arg}: is a directory\n"), 1)),
        None => Err(Out::err(format!("{cmd}: {arg}: no such file\n"), 1)),
    }
}

fn cat(state: &SimState, args: &[String], stdin: Option<String>) -> Out {
    if args.is_empty() {
        return Out::ok(stdin.unwrap_or_default());
    }
    let mut out = Out::default();
    for a in args {
        match read_text(state, "cat", a) {
            Ok(t) => out.stdout.push_str(&t),
            Err(e) => {
                out.stderr.push_str(&e.stderr);
                out.code = e.code;
            }
        }
    }
    out
}

fn ls(state: &SimState, args: &[String]) -> Out {
    let (fl, operands) = match flags(args, "al1") {
        Ok(v) => v,
        Err(c) => return usage("ls", c),
    };
    let all = fl.contains(&'a');
    let operands = if operands.is_empty() {
        vec!["."]
    } else {
        operands
    };
    let mut out = Out::default();
    let multiple = operands.len() > 1;
    let mut blocks = Vec::new();
    for op in &operands {
        let abs = paths::resolve(&state.terminal.cwd, op);
        if state.files.contains_key(&abs) {
            blocks.push(format!("{op}\n"));
        } else if state.is_dir(&abs) {
            let mut block = String::new();
            if multiple {
                block.push_str(&format!("{op}:\n"));
            }
            for name in children(state, &abs) {
                if all || !name.starts_with('.') {
                    block.push_str(&name);
                    block.push('\n');
                }
            }
            blocks.push(block);
        } else {
            out.stderr.push_str(&format!("ls: {op}: no such file\n"));
            out.code = 2;
        }
    }
    out.stdout = blocks.join(if multiple { "\n" } else { "" });
    out
}

fn mkdir(state: &mut SimState, args: &[String]) -> Out {
    let (fl, operands) = match flags(args, "p") {
        Ok(v) => v,
        Err(c) => return usage("mkdir", c),
    };
    if operands.is_empty() {
        return Out::err("mkdir: missing operand\n".into(), 1);
    }
    let parents = fl.contains(&'p');
    let mut out = Out::default();
    for op in operands {
        let abs = paths::resolve(&state.terminal.cwd, op);
        let fail = |msg: &str| format!("mkdir: {op}: {msg}\n");
        if state.is_read_only(&abs) {
            out.stderr.push_str(&fail("read-only file system"));
            out.code = 1;
        } else if state.files.contains_key(&abs) || (state.is_dir(&abs) && !parents) {
            out.stderr.push_str(&fail("file exists"));
            out.code = 1;
        } else if !parents && !state.is_dir(paths::parent(&abs)) {
            out.stderr.push_str(&fail("no such file"));
            out.code = 1;
        } else {
            let mut dir = abs.as_str();
            let mut blocked = false;
            while dir != "/" {
                if state.files.contains_key(dir) {
                    blocked = true;
                    break;
                }
                dir = paths::parent(dir);
            }
            if blocked {
                out.stderr.push_str(&fail("not a directory"));
                out.code = 1;
                continue;
            }
            let mut dir = abs.as_str();
            while dir != "/" {
                state.dirs.insert(dir.to_string());
                dir = paths::parent(dir);
            }
        }
    }
    out
}

fn remove_tree(state: &mut SimState, abs: &str) {
    state.files.retain(|f, _| !paths::is_within(f, abs));
    state.dirs.retain(|d| !paths::is_within(d, abs));
}

fn rm(state: &mut SimState, args: &[String]) -> Out {
    let (fl, operands) = match flags(args, "rRf") {
        Ok(v) => v,
        Err(c) => return usage("rm", c),
    };
    let recursive = fl.contains(&'r') || fl.contains(&'R');
    let force = fl.contains(&'f');
    if operands.is_empty() && !force {
        return Out::err("rm: missing operand\n".into(), 1);
    }
    let mut out = Out::default();
    for op in operands {
        let abs = paths::resolve(&state.terminal.cwd, op);
        let mut fail = |msg: &str| {
            out.stderr.push_str(&format!("rm: {op}: {msg}\n"));
            out.code = 1;
        };
        if abs == "/" || abs == WORKSPACE_ROOT {
            fail("refusing to remove");
        } else if state.is_read_only(&abs) {
            fail("read-only file system");
        } else if state.files.contains_key(&abs) {
            state.files.remove(&abs);
        } else if state.is_dir(&abs) {
            if recursive {
                remove_tree(state, &abs);
            } else {
                fail("is a directory");
            }
        } else if !force {
            fail("no such file");
        }
    }
    out
}

fn copy_or_move(state: &mut SimState, args: &[String], is_move: bool) -> Out {
    let cmd = if is_move { "mv" } else { "cp" };
    let (fl, operands) = match flags(args, if is_move { "f" } else { "rRf" }) {
        Ok(v) => v,
        Err(c) => return usage(cmd, c),
    };
    let recursive = is_move || fl.contains(&'r') || fl.contains(&'R');
    let [sources @ .., dest] = operands.as_slice() else {
        return Out::err(format!("{cmd}: missing operand\n"), 1);
    };
    if sources.is_empty() {
        return Out::err(format!("{cmd}: missing destination operand\n"), 1);
    }
    let dest_abs = paths::resolve(&state.terminal.cwd, dest);
    let dest_is_dir = state.is_dir(&dest_abs);
    if sources.len() > 1 && !dest_is_dir {
        return Out::err(format!("{cmd}: {dest}: not a directory\n"), 1);
    }
    let mut out = Out::default();
    for src in sources {
        let src_abs = paths::resolve(&state.terminal.cwd, src);
        let target = if dest_is_dir {
            paths::resolve(&dest_abs, paths::basename(&src_abs))
        } else {
            dest_abs.clone()
        };
        let mut fail = |msg: &str| {
            out.stderr.push_str(&format!("{cmd}: {src}: {msg}\n"));
            out.code = 1;
        };
        if !exists(state, &src_abs) {
            fail("no such file");
            continue;
        }
        if state.is_read_only(&target) || (is_move && state.is_read_only(&src_abs)) {
            fail("read-only file system");
            continue;
        }
        if target == src_abs {
            fail("source and destination are the same");
            continue;
        }
        if let Some(bytes) = state.files.get(&src_abs).cloned() {
            if let Err(msg) = write(state, &target, bytes) {
                fail(msg);
                continue;
            }
            if is_move {
                state.files.remove(&src_abs);
            }
            continue;
        }
        // Directory source.
        if !recursive {
            fail("is a directory (use -r)");
            continue;
        }
        if paths::is_within(&target, &src_abs) {
            fail("cannot copy a directory into itself");
            continue;
        }
        if state.files.contains_key(&target) || !state.is_dir(paths::parent(&target)) {
            fail("cannot create destination");
            continue;
        }
        let moved_files: Vec<(String, Vec<u8>)> = files_under(state, &src_abs)
            .into_iter()
            .map(|f| {
                let suffix = f[src_abs.len()..].to_string();
                (format!("{target}{suffix}"), state.files[&f].clone())
            })
            .collect();
        let moved_dirs: Vec<String> = state
            .dirs
            .iter()
            .filter(|d| paths::is_within(d, &src_abs))
            .map(|d| format!("{target}{}", &d[src_abs.len()..]))
            .collect();
        if is_move {
            remove_tree(state, &src_abs);
        }
        state.dirs.insert(target.clone());
        state.dirs.extend(moved_dirs);
        for (path, bytes) in moved_files {
            state.put_file(&path, bytes);
        }
    }
    out
}

fn cd(state: &mut SimState, args: &[String]) -> Out {
    let target = args.first().map(String::as_str).unwrap_or(WORKSPACE_ROOT);
    let abs = paths::resolve(&state.terminal.cwd, target);
    if state.is_dir(&abs) {
        state.terminal.cwd = abs;
        Out::default()
    } else if state.files.contains_key(&abs) {
        Out::err(format!("cd: {target}: not a directory\n"), 1)
    } else {
        Out::err(format!("cd: {target}: no such file\n"), 1)
    }
}

fn grep(state: &SimState, args: &[String], stdin: Option<String>) -> Out {
    let (fl, operands) = match flags(args, "nrRlivcFHh") {
        Ok(v) => v,
        Err(c) => return usage("grep", c),
    };
    let Some((pattern, files)) = operands.split_first() else {
        return Out::err("grep: usage: grep [-nrlivc] PATTERN [FILE...]\n".into(), 2);
    };
    let ignore_case = fl.contains(&'i');
    let invert = fl.contains(&'v');
    let recursive = fl.contains(&'r') || fl.contains(&'R');
    let needle = if ignore_case {
        pattern.to_lowercase()
    } else {
        pattern.to_string()
    };
    let matches = |line: &str| {
        let hit = if ignore_case {
            line.to_lowercase().contains(&needle)
        } else {
            line.contains(&needle)
        };
        hit != invert
    };

    let mut out = Out::default();
    // (display name, text)
    let mut sources: Vec<(Option<String>, String)> = Vec::new();
    if files.is_empty() && !recursive {
        sources.push((None, stdin.unwrap_or_default()));
    } else {
        let files: Vec<&str> = if files.is_empty() {
            vec!["."]
        } else {
            files.to_vec()
        };
        for f in files {
            let abs = paths::resolve(&state.terminal.cwd, f);
            if let Some(b) = state.files.get(&abs) {
                sources.push((Some(f.to_string()), String::from_utf8_lossy(b).into_owned()));
            } else if state.is_dir(&abs) {
                if !recursive {
                    out.stderr.push_str(&format!("grep: {f}: is a directory\n"));
                    out.code = 2;
                    continue;
                }
                let prefix = f.trim_end_matches('/');
                for path in files_under(state, &abs) {
                    let rest = &path[abs.len()..];
                    let rest = if abs == "/" { &path[..] } else { rest };
                    let shown = if prefix.is_empty() {
                        rest.to_string()
                    } else {
                        format!("{prefix}{rest}")
                    };
                    let text = String::from_utf8_lossy(&state.files[&path]).into_owned();
                    sources.push((Some(shown), text));
                }
            } else {
                out.stderr.push_str(&format!("grep: {f}: no such file\n"));
                out.code = 2;
            }
        }
    }
    let show_names = !fl.contains(&'h') && (fl.contains(&'H') || recursive || sources.len() > 1);
    let mut any = false;
    for (name, text) in &sources {
        let mut count = 0;
        for (i, line) in text.lines().enumerate() {
            if !matches(line) {
                continue;
            }
            any = true;
            count += 1;
            if fl.contains(&'l') || fl.contains(&'c') {
                continue;
            }
            if let (true, Some(n)) = (show_names, name) {
                out.stdout.push_str(n);
                out.stdout.push(':');
            }
            if fl.contains(&'n') {
                out.stdout.push_str(&format!("{}:", i + 1));
            }
            out.stdout.push_str(line);
            out.stdout.push('\n');
        }
        let label = name.as_deref().unwrap_or("(standard input)");
        if fl.contains(&'l') && count > 0 {
            out.stdout.push_str(label);
            out.stdout.push('\n');
        } else if fl.contains(&'c') {
            if show_names {
                out.stdout.push_str(&format!("{label}:"));
            }
            out.stdout.push_str(&format!("{count}\n"));
        }
    }
    if out.code == 0 {
        out.code = if any { 0 } else { 1 };
    }
    out
}

fn head_tail(state: &SimState, args: &[String], stdin: Option<String>, head: bool) -> Out {
    let cmd = if head { "head" } else { "tail" };
    let mut n: usize = 10;
    let mut files = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        let count = if a == "-n" {
            i += 1;
            args.get(i).map(String::as_str)
        } else if let Some(v) = a.strip_prefix("-n") {
            Some(v)
        } else if a.len() > 1 && a.starts_with('-') {
            Some(&a[1..])
        } else {
            files.push(a.as_str());
            None
        };
        if let Some(c) = count {
            match c.parse() {
                Ok(v) => n = v,
                Err(_) => return Out::err(format!("{cmd}: invalid number of lines\n"), 1),
            }
        }
        i += 1;
    }
    let text = match files.as_slice() {
        [] => stdin.unwrap_or_default(),
        [f] => match read_text(state, cmd, f) {
            Ok(t) => t,
            Err(e) => return e,
        },
        _ => return Out::err(format!("{cmd}: one file at a time\n"), 1),
    };
    let lines: Vec<&str> = text.lines().collect();
    let picked = if head {
        &lines[..n.min(lines.len())]
    } else {
        &lines[lines.len().saturating_sub(n)..]
    };
    Out::ok(picked.iter().map(|l| format!("{l}\n")).collect())
}

fn wc(state: &SimState, args: &[String], stdin: Option<String>) -> Out {
    let (fl, operands) = match flags(args, "lwc") {
        Ok(v) => v,
        Err(c) => return usage("wc", c),
    };
    let fl = if fl.is_empty() {
        ['l', 'w', 'c'].into_iter().collect()
    } else {
        fl
    };
    let count = |t: &str| {
        let mut parts = Vec::new();
        if fl.contains(&'l') {
            parts.push(t.matches('\n').count().to_string());
        }
        if fl.contains(&'w') {
            parts.push(t.split_whitespace().count().to_string());
        }
        if fl.contains(&'c') {
            parts.push(t.len().to_string());
        }
        parts.join(" ")
    };
    if operands.is_empty() {
        return Out::ok(format!("{}\n", count(&stdin.unwrap_or_default())));
    }
    let mut out = Out::default();
    for f in operands {
        match read_text(state, "wc", f) {
            Ok(t) => out.stdout.push_str(&format!("{} {f}\n", count(&t))),
            Err(e) => {
                out.stderr.push_str(&e.stderr);
                out.code = 1;
            }
        }
    }
    out
}

fn find(state: &SimState, args: &[String]) -> Out {
    let mut root = ".";
    let mut name: Option<&str> = None;
    let mut kind: Option<&str> = None;
    let mut i = 0;
    while i < args.len() {
        match args[i].as_str() {
            "-name" => {
                i += 1;
                name = args.get(i).map(String::as_str);
            }
            "-type" => {
                i += 1;
                kind = args.get(i).map(String::as_str);
            }
            a if i == 0 && !a.starts_with('-') => root = a,
            a => return Out::err(format!("find: unsupported argument {a}\n"), 1),
        }
        i += 1;
    }
    let abs = paths::resolve(&state.terminal.cwd, root);
    if !exists(state, &abs) {
        return Out::err(format!("find: {root}: no such file\n"), 1);
    }
    let mut entries: BTreeSet<(String, bool)> = BTreeSet::new();
    for f in files_under(state, &abs) {
        entries.insert((f, false));
    }
    for d in state.dirs.iter().filter(|d| paths::is_within(d, &abs)) {
        entries.insert((d.clone(), true));
    }
    if state.is_dir(&abs) {
        entries.insert((abs.clone(), true));
    }
    let prefix = root.trim_end_matches('/');
    let mut out = String::new();
    for (path, is_dir) in entries {
        if kind == Some("f") && is_dir || kind == Some("d") && !is_dir {
            continue;
        }
        if let Some(n) = name {
            if !glob_match(n, paths::basename(&path)) {
                continue;
            }
        }
        let shown = if path == abs {
            root.to_string()
        } else {
            format!(
                "{prefix}{}",
                &path[if abs == "/" { 0 } else { abs.len() }..]
            )
        };
        out.push_str(&shown);
        out.push('\n');
    }
    Out::ok(out)
}

fn touch(state: &mut SimState, args: &[String]) -> Out {
    if args.is_empty() {
        return Out::err("touch: missing operand\n".into(), 1);
    }
    let mut out = Out::default();
    for a in args {
        let abs = paths::resolve(&state.terminal.cwd, a);
        if state.files.contains_key(&abs) || state.is_dir(&abs) {
            continue;
        }
        if let Err(msg) = write(state, &abs, Vec::new()) {
            out.stderr.push_str(&format!("touch: {a}: {msg}\n"));
            out.code = 1;
        }
    }
    out
}

fn sleep(state: &mut SimState, args: &[String]) -> Out {
    let Some(secs) = args.first().and_then(|a| a.parse::<f64>().ok()) else {
        return Out::err("sleep: invalid time interval\n".into(), 1);
    };
    if !(secs.is_finite() && secs >= 0.0) {
        return Out::err("sleep: invalid time interval\n".into(), 1);
    }
    state.virtual_clock_ms = state
        .virtual_clock_ms
        .saturating_add((secs * 1000.0).round() as u64);
    Out::default()
}

/// One checked assertion of a `runtests` spec.
#[derive(Debug, Clone, PartialEq)]
enum Assertion {
    Equals(String, String),
    Contains(String, String),
    NotContains(String, String),
    Exists(String),
    Absent(String),
}

impl Assertion {
    fn describe(&self) -> String {
        match self {
            Assertion::Equals(p, _) => format!("file_equals {p}"),
            Assertion::Contains(p, s) => format!("file_contains {p} {s:?}"),
            Assertion::NotContains(p, s) => format!("file_not_contains {p} {s:?}"),
            Assertion::Exists(p) => format!("file_exists {p}"),
            Assertion::Absent(p) => format!("file_absent {p}"),
        }
    }

    fn check(&self, state: &SimState) -> bool {
        let read = |p: &str| state.files.get(&paths::resolve(&state.terminal.cwd, p));
        match self {
            Assertion::Equals(p, want) => read(p).is_some_and(|b| b == want.as_bytes()),
            Assertion::Contains(p, s) => {
                read(p).is_some_and(|b| String::from_utf8_lossy(b).contains(s.as_str()))
            }
            Assertion::NotContains(p, s) => {
                read(p).is_some_and(|b| !String::from_utf8_lossy(b).contains(s.as_str()))
            }
            Assertion::Exists(p) => read(p).is_some(),
            Assertion::Absent(p) => !exists(state, &paths::resolve(&state.terminal.cwd, p)),
        }
    }
}

/// Parses a spec into `(group, assertion)` pairs. Lines: `# comment`,
/// `group NAME`, `file_equals PATH "json string"`, `file_contains PATH "…"`,
/// `file_not_contains PATH "…"`, `file_exists PATH`, `file_absent PATH`.
fn parse_spec(text: &str) -> Result<Vec<(Option<String>, Assertion)>, String> {
    let mut group = None;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || format!("line {}: malformed assertion", n + 1);
        let (directive, rest) = line.split_once(char::is_whitespace).ok_or_else(bad)?;
        let rest = rest.trim();
        if directive == "group" {
            group = Some(rest.to_string());
            continue;
        }
        let (path, arg) = match rest.split_once(char::is_whitespace) {
            Some((p, a)) => (p.to_string(), Some(a.trim())),
            None => (rest.to_string(), None),
        };
        let literal = || -> Result<String, String> {
            serde_json::from_str::<String>(arg.ok_or_else(bad)?).map_err(|_| bad())
        };
        let assertion = match (directive, arg) {
            ("file_equals", _) => Assertion::Equals(path, literal()?),
            ("file_contains", _) => Assertion::Contains(path, literal()?),
            ("file_not_contains", _) => Assertion::NotContains(path, literal()?),
            ("file_exists", None) => Assertion::Exists(path),
            ("file_absent", None) => Assertion::Absent(path),
            _ => return Err(bad()),
        };
        out.push((group.clone(), assertion));
    }
    Ok(out)
}

fn runtests(state: &SimState, args: &[String]) -> Out {
    let [spec] = args else {
        return Out::err("runtests: usage: runtests SPEC\n".into(), 2);
    };
    let text = match read_text(state, "runtests", spec) {
        Ok(t) => t,
        Err(e) => return Out::err(e.stderr, 2),
    };
    let assertions = match parse_spec(&text) {
        Ok(a) => a,
        Err(msg) => return Out::err(format!("runtests: {spec}: {msg}\n"), 2),
    };
    if assertions.is_empty() {
        return Out::err(format!("runtests: {spec}: no assertions\n"), 2);
    }
    let mut out = String::new();
    let mut passed = 0;
    // group → (passed, total), in first-seen order
    let mut groups: Vec<(String, usize, usize)> = Vec::new();
    for (i, (group, a)) in assertions.iter().enumerate() {
        let ok = a.check(state);
        passed += usize::from(ok);
        let status = if ok { "ok" } else { "not ok" };
        out.push_str(&format!("{status} {} - {}\n", i + 1, a.describe()));
        if let Some(g) = group {
            match groups.iter_mut().find(|(name, _, _)| name == g) {
                Some(entry) => {
                    entry.1 += usize::from(ok);
                    entry.2 += 1;
                }
                None => groups.push((g.clone(), usize::from(ok), 1)),
            }
        }
    }
    for (name, p, t) in &groups {
        out.push_str(&format!("submetric {name} {:.4}\n", *p as f64 / *t as f64));
    }
    let total = assertions.len();
    out.push_str(&format!("passed: {passed}/{total}\n"));
    out.push_str(&format!("score: {:.4}\n", passed as f64 / total as f64));
    Out {
        stdout: out,
        code: if passed == total { 0 } else { 1 },
        ..Out::default()
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::config;
    use super::super::{sim_create, sim_exec_shell};
    use super::*;

    fn state(files: &[(&str, &str)]) -> SimState {
        sim_create(&config(files, None)).unwrap()
    }

    fn sh(s: &mut SimState, cmd: &str) -> (String, i32) {
        let out = run(s, cmd);
        (out.output, out.exit_code)
    }

    #[test]
    fn echo_and_missing_file() {
        let s = state(&[]);
        let (out, code, _) = sim_exec_shell(&s, "echo hi");
        assert_eq!((out.as_str(), code), ("hi\n", 0));
        let (out, code, _) = sim_exec_shell(&s, "cat missing.txt");
        assert_eq!(
            (out.as_str(), code),
            ("cat: missing.txt: no such file\n", 1)
        );
    }

    #[test]
    fn unknown_command() {
        let mut s = state(&[]);
        assert_eq!(
            sh(&mut s, "python3 x.py"),
            ("sh: python3: command not found\n".into(), 127)
        );
    }

    #[test]
    fn operators_and_redirection() {
        let mut s = state(&[]);
        assert_eq!(
            sh(&mut s, "false && echo no || echo yes"),
            ("yes\n".into(), 0)
        );
        assert_eq!(
            sh(&mut s, "echo a > f; echo b >> f; cat f"),
            ("a\nb\n".into(), 0)
        );
        assert_eq!(sh(&mut s, "cat nope 2>/dev/null"), (String::new(), 1));
        assert_eq!(
            sh(&mut s, "cat nope > out 2>&1; cat out"),
            ("cat: nope: no such file\n".into(), 0)
        );
        assert_eq!(sh(&mut s, "echo 'a b'\"c\"\\ d"), ("a bc d\n".into(), 0));
        assert_eq!(sh(&mut s, "echo x&&echo y"), ("x\ny\n".into(), 0));
        assert_eq!(sh(&mut s, "exit 3; echo never"), (String::new(), 3));
        assert_eq!(sh(&mut s, "echo 'unterminated").1, 2);
        assert_eq!(sh(&mut s, "&& echo x").1, 2);
    }

    #[test]
    fn pipes() {
        let mut s = state(&[("a.txt", "one\ntwo\nthree\n")]);
        assert_eq!(sh(&mut s, "cat a.txt | grep t"), ("two\nthree\n".into(), 0));
        assert_eq!(sh(&mut s, "cat a.txt | wc -l"), ("3\n".into(), 0));
        assert_eq!(sh(&mut s, "cat a.txt | head -n 1"), ("one\n".into(), 0));
        assert_eq!(sh(&mut s, "tail -2 a.txt"), ("two\nthree\n".into(), 0));
    }

    #[test]
    fn filesystem_commands() {
        let mut s = state(&[("src/a.py", "x")]);
        assert_eq!(sh(&mut s, "ls"), ("src\n".into(), 0));
        assert_eq!(
            sh(&mut s, "mkdir -p out/deep && ls out"),
            ("deep\n".into(), 0)
        );
        assert_eq!(
            sh(&mut s, "cp src/a.py out/ && cat out/a.py"),
            ("x".into(), 0)
        );
        assert_eq!(
            sh(&mut s, "mv out/a.py b.py && ls out/deep"),
            (String::new(), 0)
        );
        assert_eq!(sh(&mut s, "cat b.py"), ("x".into(), 0));
        assert_eq!(sh(&mut s, "rm out").1, 1);
        assert_eq!(sh(&mut s, "rm -r out && ls"), ("b.py\nsrc\n".into(), 0));
        assert_eq!(sh(&mut s, "cd src && pwd"), ("/workspace/src\n".into(), 0));
        assert_eq!(sh(&mut s, "cat a.py"), ("x".into(), 0));
        assert_eq!(
            sh(&mut s, "cd .. && cp -r src lib && ls lib"),
            ("a.py\n".into(), 0)
        );
        assert_eq!(sh(&mut s, "touch t && cat t"), (String::new(), 0));
        assert_eq!(sh(&mut s, "echo x > missing_dir/f").1, 1);
        assert_eq!(sh(&mut s, "ls /"), ("workspace\n".into(), 0));
        assert_eq!(sh(&mut s, "ls *.py"), ("b.py\n".into(), 0));
        assert_eq!(
            sh(&mut s, "find . -name '*.py'"),
            ("./b.py\n./lib/a.py\n./src/a.py\n".into(), 0)
        );
    }

    #[test]
    fn grep_fixed_string() {
        let mut s = state(&[("a.txt", "foo.bar\nbaz\n"), ("d/b.txt", "foo\n")]);
        assert_eq!(sh(&mut s, "grep -n o.b a.txt"), ("1:foo.bar\n".into(), 0));
        // fixed string: `.` is not a wildcard
        assert_eq!(sh(&mut s, "grep o.x a.txt"), (String::new(), 1));
        assert_eq!(
            sh(&mut s, "grep -rn foo ."),
            ("./a.txt:1:foo.bar\n./d/b.txt:1:foo\n".into(), 0)
        );
        assert_eq!(sh(&mut s, "grep -rl foo d"), ("d/b.txt\n".into(), 0));
        assert_eq!(sh(&mut s, "grep x nope").1, 2);
    }

    #[test]
    fn printf_and_echo_escapes() {
        let mut s = state(&[]);
        assert_eq!(sh(&mut s, "printf 'a\\nb %s\\n' c"), ("a\nb c\n".into(), 0));
        assert_eq!(sh(&mut s, "echo -n x"), ("x".into(), 0));
        assert_eq!(sh(&mut s, "echo -e 'a\\tb'"), ("a\tb\n".into(), 0));
    }

    #[test]
    fn read_only_prefix_blocks_writes() {
        let mut s = state(&[("a", "1")]);
        s.read_only_prefix = Some(WORKSPACE_ROOT.into());
        assert_eq!(sh(&mut s, "echo 2 > a").1, 1);
        assert_eq!(sh(&mut s, "rm a").1, 1);
        assert_eq!(sh(&mut s, "cat a"), ("1".into(), 0));
    }

    #[test]
    fn runtests_pass_and_fail() {
        let spec = "# checks\nfile_equals out.txt \"hello\\n\"\nfile_exists out.txt\n";
        let mut s = state(&[("tests.spec", spec)]);
        let (out, code) = sh(&mut s, "runtests tests.spec");
        assert_eq!(code, 1);
        assert!(out.contains("not ok 1 - file_equals out.txt"));
        assert!(out.ends_with("passed: 0/2\nscore: 0.0000\n"));

        sh(&mut s, "echo hello > out.txt");
        let (out, code) = sh(&mut s, "runtests tests.spec");
        assert_eq!(code, 0);
        assert_eq!(
            out,
            "ok 1 - file_equals out.txt\nok 2 - file_exists out.txt\npassed: 2/2\nscore: 1.0000\n"
        );
    }

    #[test]
    fn runtests_groups_and_errors() {
        let spec = "group alpha\nfile_exists a\nfile_absent a\ngroup beta\nfile_contains a \"x\"\n";
        let mut s = state(&[
            ("t.spec", spec),
            ("a", "xyz"),
            ("empty.spec", "# nothing\n"),
        ]);
        let (out, code) = sh(&mut s, "runtests t.spec");
        assert_eq!(code, 1);
        assert!(out.contains("submetric alpha 0.5000\nsubmetric beta 1.0000\n"));
        assert_eq!(sh(&mut s, "runtests empty.spec").1, 2);
        assert_eq!(sh(&mut s, "runtests nope.spec").1, 2);
        sh(&mut s, "echo 'file_equals a not-json' > bad.spec");
        assert_eq!(sh(&mut s, "runtests bad.spec").1, 2);
    }

    #[test]
    fn glob_matching() {
        assert!(glob_match("*.py", "a.py"));
        assert!(glob_match("a?c", "abc"));
        assert!(glob_match("*", ""));
        assert!(!glob_match("*.py", "a.rs"));
        assert!(glob_match("a*b*c", "aXXbYYc"));
    }
}
