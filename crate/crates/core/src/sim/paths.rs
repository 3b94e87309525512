//! Absolute path handling for the simulated filesystem.

pub const WORKSPACE_ROOT: &str = "/workspace";

/// Resolves `path` against `cwd` into a normalized absolute path. `..` never
/// climbs above `/`.
pub fn resolve(cwd: &str, path: &str) -> String {
    let mut parts: Vec<&str> = if path.starts_with('/') {
        Vec::new()
    } else {
        cwd.split('/').filter(|p| !p.is_empty()).collect()
    };
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            s => parts.push(s),
        }
    }
    format!("/{}", parts.join("/"))
}

/// Workspace-relative or absolute agent path to an absolute workspace path.
/// `None` if the result falls outside the workspace.
pub fn workspace_path(path: &str) -> Option<String> {
    let abs = resolve(WORKSPACE_ROOT, path);
    (abs.starts_with(WORKSPACE_ROOT)
        && abs.len() > WORKSPACE_ROOT.len() + 1
        && abs.as_bytes()[WORKSPACE_ROOT.len()] == b'/')
        .then_some(abs)
}

/// Strips the workspace prefix: `/workspace/a/b` → `a/b`.
pub fn relative(abs: &str) -> Option<&str> {
    abs.strip_prefix(WORKSPACE_ROOT)?.strip_prefix('/')
}

pub fn parent(abs: &str) -> &str {
    match abs.rfind('/') {
        Some(0) | None => "/",
        Some(i) => &abs[..i],
    }
}

pub fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// `true` when `path` equals `dir` or lies underneath it.
pub fn is_within(path: &str, dir: &str) -> bool {
    if dir == "/" {
        return true;
    }
    path == dir || (path.starts_with(dir) && path.as_bytes().get(dir.len()) == Some(&b'/'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution() {
        assert_eq!(resolve("/workspace", "a/b.txt"), "/workspace/a/b.txt");
        assert_eq!(resolve("/workspace/a", "../b"), "/workspace/b");
        assert_eq!(resolve("/workspace", "/etc/x"), "/etc/x");
        assert_eq!(resolve("/", "../../.."), "/");
        assert_eq!(resolve("/workspace", "./x/./y/"), "/workspace/x/y");
    }

    #[test]
    fn workspace_confinement() {
        assert_eq!(
            workspace_path("main.py").as_deref(),
            Some("/workspace/main.py")
        );
        assert_eq!(
            workspace_path("/workspace/src/a.rs").as_deref(),
            Some("/workspace/src/a.rs")
        );
        assert_eq!(workspace_path("../etc/passwd"), None);
        assert_eq!(workspace_path("/verifier/tests.spec"), None);
        assert_eq!(workspace_path(""), None);
        assert_eq!(workspace_path("/workspacex/a"), None);
    }

    #[test]
    fn containment() {
        assert!(is_within("/workspace/a", "/workspace"));
        assert!(!is_within("/workspacex", "/workspace"));
        assert_eq!(parent("/workspace/a.txt"), "/workspace");
        assert_eq!(parent("/a"), "/");
        assert_eq!(basename("/workspace/src/a.rs"), "a.rs");
    }
}
