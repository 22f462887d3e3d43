//! Builds the C programs under `tests/` and runs them with and without the
//! shim preloaded.

#![allow(dead_code)]

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

pub const PROGRAM_TIMEOUT: Duration = Duration::from_secs(60);

/// Path of the shim library, rebuilt if stale. Cargo does not rebuild a
/// cdylib-only package before running its integration tests, so this asks
/// cargo for it once per test binary.
pub fn shim_path() -> PathBuf {
    static PATH: OnceLock<PathBuf> = OnceLock::new();
    PATH.get_or_init(build_shim).clone()
}

fn build_shim() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    // target/<profile>/deps/<test binary>
    let profile = exe.parent().and_then(Path::parent).and_then(Path::file_name).unwrap();
    let profile = match profile.to_str().unwrap() {
        "debug" => "dev",
        other => other,
    };
    let out = Command::new(env!("CARGO"))
        .args(["build", "--quiet", "--lib", "-p", "threadcache-shim", "--profile", profile])
        .args(["--message-format", "json"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .stderr(Stdio::inherit())
        .output()
        .expect("running cargo");
    assert!(out.status.success(), "building the shim failed");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let marker = "libthreadcache_shim.so\"";
    let end = stdout.find(marker).expect("no shim artifact reported") + marker.len() - 1;
    let start = stdout[..end].rfind('"').unwrap() + 1;
    PathBuf::from(&stdout[start..end])
}

fn tests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

/// C sources in `tests/<dir>`, sorted by name.
pub fn sources(dir: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(tests_dir().join(dir))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "c"))
        .collect();
    v.sort();
    v
}

pub struct Program {
    pub name: String,
    pub exe: PathBuf,
}

/// Compiles `src` with the system C compiler into `out_dir`.
pub fn compile(src: &Path, out_dir: &Path) -> Result<Program, String> {
    let name = src.file_stem().unwrap().to_string_lossy().into_owned();
    let exe = out_dir.join(&name);
    let out = Command::new("cc")
        .args(["-O1", "-pthread", "-o"])
        .arg(&exe)
        .arg(src)
        .arg("-ldl")
        .output()
        .map_err(|e| format!("running cc: {e}"))?;
    if !out.status.success() {
        return Err(format!("{name}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(Program { name, exe })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    /// Exit code, or `None` when killed by a signal or the timeout.
    pub code: Option<i32>,
}

/// Runs `program`, optionally with the shim preloaded and extra environment.
pub fn run(program: &Program, preload: bool, env: &[(&str, &str)]) -> Outcome {
    let mut cmd = Command::new(&program.exe);
    cmd.stdout(Stdio::piped()).stderr(Stdio::null()).env_remove("LD_PRELOAD");
    for var in ["THREADCACHE", "THREADCACHE_POLICY", "THREADCACHE_CLAMP", "THREADCACHE_AGE_MS",
        "THREADCACHE_BUDGET_MS", "THREADCACHE_REAP_MS", "THREADCACHE_RELEASE_MS"]
    {
        cmd.env_remove(var);
    }
    if preload {
        cmd.env("LD_PRELOAD", shim_path());
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().unwrap();
    let mut pipe = child.stdout.take().unwrap();
    let reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = pipe.read_to_string(&mut s);
        s
    });
    let deadline = Instant::now() + PROGRAM_TIMEOUT;
    let status = loop {
        if let Some(status) = child.try_wait().unwrap() {
            break Some(status);
        }
        if Instant::now() > deadline {
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        thread::sleep(Duration::from_millis(5));
    };
    Outcome {
        stdout: reader.join().unwrap(),
        code: status.and_then(|s| s.code()),
    }
}

/// Retention settings the conformance corpus is replayed under.
pub const POLICY_ENVS: &[&[(&str, &str)]] = &[
    &[],
    &[("THREADCACHE_POLICY", "clamp"), ("THREADCACHE_CLAMP", "2")],
    &[("THREADCACHE_POLICY", "clamp"), ("THREADCACHE_CLAMP", "0")],
    &[
        ("THREADCACHE_POLICY", "age"),
        ("THREADCACHE_AGE_MS", "1"),
        ("THREADCACHE_REAP_MS", "1"),
        ("THREADCACHE_RELEASE_MS", "1"),
    ],
    &[("THREADCACHE_POLICY", "integral"), ("THREADCACHE_BUDGET_MS", "1"), ("THREADCACHE_REAP_MS", "1")],
    &[("THREADCACHE", "0")],
];

/// Compiles the conformance corpus and compares native and preloaded runs
/// under every setting in [`POLICY_ENVS`]. Returns the number of programs
/// and a list of mismatches.
pub fn conformance(out_dir: &Path) -> Result<(usize, Vec<String>), String> {
    let programs = sources("corpus")
        .iter()
        .map(|src| compile(src, out_dir))
        .collect::<Result<Vec<_>, _>>()?;
    let mut mismatches = Vec::new();
    for p in &programs {
        let native = run(p, false, &[]);
        if native.code != Some(0) {
            mismatches.push(format!("{}: native run failed: {native:?}", p.name));
            continue;
        }
        for env in POLICY_ENVS {
            let shimmed = run(p, true, env);
            if shimmed != native {
                mismatches.push(format!(
                    "{} under {env:?}: native {native:?}, preloaded {shimmed:?}",
                    p.name
                ));
            }
        }
    }
    Ok((programs.len(), mismatches))
}
