// SPDX-License-Identifier: Apache-2.0
//! Tool execution backends.
//!
//! [`ProcessRunner`] drives the real EDA binaries. [`FixtureRunner`] replays
//! recorded outputs so everything above this layer can be tested on a machine
//! without Icarus Verilog, Verilator or Yosys.

use crate::text::fnv1a64;
use crate::verilog;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStage {
    /// `iverilog -g2001 -t null`
    LintStrict,
    /// `verilator --lint-only`
    LintVerilator,
    /// `iverilog -g2012 -t null`, used when Verilator is missing.
    LintIcarusSv,
    /// `iverilog -g2012 -o sim.vvp`
    SimCompile,
    /// `vvp sim.vvp`
    Simulate,
    /// `yosys` generic synthesis plus `check` and `stat`.
    Synth,
}

impl ToolStage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LintStrict => "lint_strict",
            Self::LintVerilator => "lint_verilator",
            Self::LintIcarusSv => "lint_icarus_sv",
            Self::SimCompile => "sim_compile",
            Self::Simulate => "simulate",
            Self::Synth => "synth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub name: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self { name: name.into(), text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub stage: ToolStage,
    pub files: Vec<SourceFile>,
    #[serde(default)]
    pub top: Option<String>,
    /// Directory shared by the stages of one validation run; `Simulate`
    /// expects the `sim.vvp` left there by `SimCompile`.
    #[serde(skip)]
    pub workdir: PathBuf,
    #[serde(with = "secs")]
    pub timeout: Duration,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?.max(0.0)))
    }
}

impl ToolInvocation {
    /// All file contents joined with newlines, the text fixture rules see.
    pub fn joined(&self) -> String {
        self.files.iter().map(|f| f.text.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub exit_code: i32,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub timed_out: bool,
}

impl ToolOutput {
    pub fn success(&self) -> bool {
        self.exit_code == 0 && !self.timed_out
    }

    pub fn combined(&self) -> String {
        if self.stderr.is_empty() {
            self.stdout.clone()
        } else if self.stdout.is_empty() {
            self.stderr.clone()
        } else {
            format!("{}\n{}", self.stdout, self.stderr)
        }
    }
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("tool not found: {0} (set {1} or add it to PATH)")]
    Missing(&'static str, &'static str),
    #[error("{tool} crashed: {stderr}")]
    Crash { tool: &'static str, stderr: String },
    #[error("tool workspace: {0}")]
    Io(#[from] io::Error),
}

pub trait ToolRunner: Send + Sync {
    fn run(&self, inv: &ToolInvocation) -> Result<ToolOutput, ToolError>;

    /// Whether the backing tool for `stage` is available. Defaults to true.
    fn has_stage(&self, _stage: ToolStage) -> bool {
        true
    }
}

/// Counting semaphore bounding concurrent tool processes.
#[derive(Debug)]
pub struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Explicit tool paths; `None` means look up `RTLFORGE_*` then `PATH`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolPaths {
    #[serde(default)]
    pub iverilog: Option<PathBuf>,
    #[serde(default)]
    pub vvp: Option<PathBuf>,
    #[serde(default)]
    pub verilator: Option<PathBuf>,
    #[serde(default)]
    pub yosys: Option<PathBuf>,
}

fn search_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(name)).find(|p| p.is_file())
}

fn resolve(explicit: &Option<PathBuf>, env: &'static str, name: &'static str) -> Result<PathBuf, ToolError> {
    if let Some(p) = explicit {
        return if p.is_file() { Ok(p.clone()) } else { Err(ToolError::Missing(name, env)) };
    }
    if let Some(p) = std::env::var_os(env).map(PathBuf::from) {
        return if p.is_file() { Ok(p) } else { Err(ToolError::Missing(name, env)) };
    }
    search_path(name).ok_or(ToolError::Missing(name, env))
}

impl ToolPaths {
    pub fn iverilog(&self) -> Result<PathBuf, ToolError> {
        resolve(&self.iverilog, "RTLFORGE_IVERILOG", "iverilog")
    }
    pub fn vvp(&self) -> Result<PathBuf, ToolError> {
        resolve(&self.vvp, "RTLFORGE_VVP", "vvp")
    }
    pub fn verilator(&self) -> Result<PathBuf, ToolError> {
        resolve(&self.verilator, "RTLFORGE_VERILATOR", "verilator")
    }
    pub fn yosys(&self) -> Result<PathBuf, ToolError> {
        resolve(&self.yosys, "RTLFORGE_YOSYS", "yosys")
    }

    /// True when every tool of the strict flow (iverilog, vvp, yosys) resolves.
    pub fn all_present(&self) -> bool {
        self.iverilog().is_ok() && self.vvp().is_ok() && self.yosys().is_ok()
    }
}

/// Runs the real binaries as subprocesses.
#[derive(Debug)]
pub struct ProcessRunner {
    pub paths: ToolPaths,
    limit: Semaphore,
}

impl ProcessRunner {
    pub fn new(paths: ToolPaths, max_concurrent: usize) -> Self {
        Self { paths, limit: Semaphore::new(max_concurrent) }
    }

    fn command(&self, inv: &ToolInvocation, names: &[String]) -> Result<(Command, &'static str), ToolError> {
        let (mut cmd, tool) = match inv.stage {
            ToolStage::LintStrict | ToolStage::LintIcarusSv => {
                let mut c = Command::new(self.paths.iverilog()?);
                let g = if inv.stage == ToolStage::LintStrict { "-g2001" } else { "-g2012" };
                c.args([g, "-t", "null"]);
                if let Some(top) = &inv.top {
                    c.args(["-s", top]);
                }
                c.args(names);
                (c, "iverilog")
            }
            ToolStage::LintVerilator => {
                let mut c = Command::new(self.paths.verilator()?);
                c.args(["--lint-only", "-Wno-fatal", "-Wno-DECLFILENAME", "-Wno-UNUSEDSIGNAL"]);
                if let Some(top) = &inv.top {
                    c.args(["--top-module", top]);
                }
                c.args(names);
                (c, "verilator")
            }
            ToolStage::SimCompile => {
                let mut c = Command::new(self.paths.iverilog()?);
                c.args(["-g2012", "-o", "sim.vvp"]).args(names);
                (c, "iverilog")
            }
            ToolStage::Simulate => {
                let mut c = Command::new(self.paths.vvp()?);
                c.args(["-n", "sim.vvp"]);
                (c, "vvp")
            }
            ToolStage::Synth => {
                let mut c = Command::new(self.paths.yosys()?);
                let top = inv.top.as_ref().map_or("-auto-top".to_string(), |t| format!("-top {t}"));
                let script = format!("read_verilog -sv {}; synth {top}; check; stat", names.join(" "));
                c.args(["-p", &script]);
                (c, "yosys")
            }
        };
        cmd.current_dir(&inv.workdir);
        Ok((cmd, tool))
    }
}

fn run_with_timeout(mut cmd: Command, dir: &Path, tag: &str, timeout: Duration) -> io::Result<(Option<i32>, bool, String, String)> {
    let out_path = dir.join(format!("{tag}.stdout"));
    let err_path = dir.join(format!("{tag}.stderr"));
    cmd.stdin(Stdio::null()).stdout(File::create(&out_path)?).stderr(File::create(&err_path)?);
    let mut child = cmd.spawn()?;
    let start = Instant::now();
    let mut timed_out = false;
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break Some(s);
        }
        if start.elapsed() >= timeout {
            timed_out = true;
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let stdout = String::from_utf8_lossy(&fs::read(&out_path)?).into_owned();
    let stderr = String::from_utf8_lossy(&fs::read(&err_path)?).into_owned();
    Ok((status.and_then(|s| s.code()), timed_out, stdout, stderr))
}

impl ToolRunner for ProcessRunner {
    fn run(&self, inv: &ToolInvocation) -> Result<ToolOutput, ToolError> {
        fs::create_dir_all(&inv.workdir)?;
        let mut names = Vec::with_capacity(inv.files.len());
        for f in &inv.files {
            fs::write(inv.workdir.join(&f.name), &f.text)?;
            names.push(f.name.clone());
        }
        let (cmd, tool) = self.command(inv, &names)?;
        let _permit = self.limit.acquire();
        let (code, timed_out, stdout, stderr) = run_with_timeout(cmd, &inv.workdir, inv.stage.as_str(), inv.timeout)?;
        match code {
            Some(exit_code) => Ok(ToolOutput { exit_code, stdout, stderr, timed_out }),
            None if timed_out => Ok(ToolOutput { exit_code: -1, stdout, stderr, timed_out }),
            None => Err(ToolError::Crash { tool, stderr }),
        }
    }

    fn has_stage(&self, stage: ToolStage) -> bool {
        match stage {
            ToolStage::LintVerilator => self.paths.verilator().is_ok(),
            ToolStage::Simulate => self.paths.vvp().is_ok(),
            ToolStage::Synth => self.paths.yosys().is_ok(),
            _ => self.paths.iverilog().is_ok(),
        }
    }
}

/// One recorded response. A rule matches when the stage agrees and every
/// given predicate holds: `contains` is a substring of the joined sources,
/// `digest` the FNV-1a hex digest of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRule {
    pub stage: ToolStage,
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub digest: Option<String>,
    #[serde(flatten)]
    pub output: ToolOutput,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureSet {
    #[serde(default)]
    pub rules: Vec<FixtureRule>,
    #[serde(default)]
    pub defaults: BTreeMap<ToolStage, ToolOutput>,
    /// Answer unmatched lint and synth calls with the structural checker.
    #[serde(default)]
    pub structural: bool,
}

/// Replays recorded tool logs. Unmatched calls fall back to the structural
/// checker (when enabled), then to the per-stage default, then to a clean
/// exit with empty output.
#[derive(Debug, Default)]
pub struct FixtureRunner {
    set: FixtureSet,
    calls: Mutex<Vec<ToolInvocation>>,
}

pub fn source_digest(text: &str) -> String {
    format!("{:016x}", fnv1a64(text.as_bytes()))
}

impl FixtureRunner {
    pub fn new(set: FixtureSet) -> Self {
        Self { set, calls: Mutex::new(Vec::new()) }
    }

    /// Structural fallback only: lint and synth answered from source shape,
    /// simulation reports no marker.
    pub fn structural() -> Self {
        Self::new(FixtureSet { structural: true, ..FixtureSet::default() })
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn with_rule(mut self, rule: FixtureRule) -> Self {
        self.set.rules.push(rule);
        self
    }

    pub fn with_default(mut self, stage: ToolStage, output: ToolOutput) -> Self {
        self.set.defaults.insert(stage, output);
        self
    }

    /// Every invocation seen so far, in order.
    pub fn calls(&self) -> Vec<ToolInvocation> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn call_count(&self, stage: ToolStage) -> usize {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).iter().filter(|c| c.stage == stage).count()
    }
}

impl ToolRunner for FixtureRunner {
    fn run(&self, inv: &ToolInvocation) -> Result<ToolOutput, ToolError> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).push(inv.clone());
        let joined = inv.joined();
        let digest = source_digest(&joined);
        let hit = self.set.rules.iter().find(|r| {
            r.stage == inv.stage
                && r.contains.as_ref().is_none_or(|c| joined.contains(c.as_str()))
                && r.digest.as_ref().is_none_or(|d| d.eq_ignore_ascii_case(&digest))
        });
        if let Some(r) = hit {
            return Ok(r.output.clone());
        }
        if self.set.structural {
            match inv.stage {
                ToolStage::LintStrict => return Ok(structural_lint(&inv.files, true)),
                ToolStage::LintVerilator | ToolStage::LintIcarusSv | ToolStage::SimCompile => {
                    return Ok(structural_lint(&inv.files, false));
                }
                ToolStage::Synth => return Ok(structural_synth(&inv.files)),
                ToolStage::Simulate => {}
            }
        }
        Ok(self.set.defaults.get(&inv.stage).cloned().unwrap_or_default())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn balance(text: &str, opens: &[&str], close: &str) -> i64 {
    let words = || text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '$'));
    words().filter(|t| opens.contains(t)).count() as i64 - words().filter(|t| *t == close).count() as i64
}

/// Approximates a lint run from source structure: unbalanced blocks,
/// missing modules, undefined instantiated modules and, in strict mode,
/// SystemVerilog-only keywords. Messages mimic iverilog's shapes so the
/// categorizer treats them like the real thing.
pub fn structural_lint(files: &[SourceFile], strict: bool) -> ToolOutput {
    let mut defined = Vec::new();
    let mut msgs = Vec::new();
    let mut parsed = Vec::new();
    for f in files {
        let mods = verilog::find_modules(&f.text);
        defined.extend(mods.iter().map(|m| m.name.clone()));
        parsed.push((f, mods));
    }
    let mut first_def: Vec<(&str, &str, usize)> = Vec::new();
    for (f, mods) in &parsed {
        let clean = verilog::strip_comments(&f.text);
        for m in mods {
            let line = line_of(&clean, m.start);
            match first_def.iter().find(|(n, _, _)| *n == m.name) {
                Some((_, file, l)) => {
                    msgs.push(format!("{}:{line}: error: Module {} was already declared here: {file}:{l}", f.name, m.name))
                }
                None => first_def.push((&m.name, &f.name, line)),
            }
        }
    }
    for (f, mods) in &parsed {
        let clean = verilog::strip_comments(&f.text);
        if mods.is_empty() {
            msgs.push(format!("{}:1: syntax error", f.name));
            msgs.push(format!("{}:1: error: no module definition found", f.name));
            continue;
        }
        let pairs: [(&[&str], &str); 4] = [
            (&["begin"], "end"),
            (&["case", "casez", "casex"], "endcase"),
            (&["module", "macromodule"], "endmodule"),
            (&["function"], "endfunction"),
        ];
        for (opens, close) in pairs {
            if balance(&clean, opens, close) != 0 {
                let open = opens[0];
                msgs.push(format!("{}:{}: syntax error", f.name, line_of(&clean, clean.len())));
                msgs.push(format!("{}:{}: error: unbalanced {open}/{close}", f.name, line_of(&clean, clean.len())));
            }
        }
        for m in mods {
            for inst in verilog::instantiated_modules(&f.text, m) {
                if !defined.contains(&inst) {
                    let at = clean[m.header_end..].find(&inst).map_or(m.start, |i| i + m.header_end);
                    msgs.push(format!("{}:{}: error: Unknown module type: {inst}", f.name, line_of(&clean, at)));
                }
            }
        }
        if strict {
            for kw in verilog::systemverilog_keywords_used(&f.text) {
                let re = regex::Regex::new(&format!(r"\b{kw}\b")).expect("keyword pattern");
                let at = re.find(&clean).map_or(0, |m| m.start());
                msgs.push(format!("{}:{}: syntax error", f.name, line_of(&clean, at)));
                msgs.push(format!("{}:{}: error: SystemVerilog keyword `{kw}' in Verilog-2001 mode", f.name, line_of(&clean, at)));
            }
        }
    }
    if msgs.is_empty() {
        ToolOutput::default()
    } else {
        msgs.push(format!("{} error(s) during elaboration.", msgs.len()));
        ToolOutput { exit_code: 1, stdout: String::new(), stderr: msgs.join("\n") + "\n", timed_out: false }
    }
}

/// Estimated `stat` report: one cell per continuous assignment, always
/// block and instance; one wire per port.
pub fn structural_synth(files: &[SourceFile]) -> ToolOutput {
    let lint = structural_lint(files, false);
    if !lint.success() {
        return ToolOutput { exit_code: 1, ..lint };
    }
    let mut cells = 0usize;
    let mut wires = 0usize;
    for f in files {
        let clean = verilog::strip_comments(&f.text);
        let words: Vec<&str> = clean.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).collect();
        cells += words.iter().filter(|w| matches!(**w, "assign" | "always" | "always_ff" | "always_comb")).count();
        for m in verilog::find_modules(&f.text) {
            wires += m.ports.len();
            cells += verilog::instantiated_modules(&f.text, &m).len();
        }
    }
    let stdout = format!("=== design ===\n\n   Number of wires: {wires}\n   Number of cells: {cells}\n");
    ToolOutput { exit_code: 0, stdout, stderr: String::new(), timed_out: false }
}
