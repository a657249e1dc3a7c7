// SPDX-License-Identifier: Apache-2.0
//! Reference-library indexing.
//!
//! A library directory holds `.v`/`.sv` files plus an optional
//! `attribution.json` mapping file names (relative to the directory, or
//! `"*"` as a default) to `{"source": ..., "domain": ...}`. Files that fail
//! lint or exceed the line threshold are rejected with a reason.

use crate::text::{content_words, contains_keyword};
use crate::verilog::{find_modules, Direction};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    CpuBuildingBlocks,
    Datapath,
    ProtocolBridges,
    NetworkPacket,
    PeripheralControllers,
    Dsp,
    FlowControl,
    Memory,
    CryptographicCores,
    SystemInfrastructure,
    ClockReset,
    SerdesLineCoding,
    Arbitration,
    ErrorCorrection,
}

impl Domain {
    pub const ALL: [Domain; 14] = [
        Domain::CpuBuildingBlocks,
        Domain::Datapath,
        Domain::ProtocolBridges,
        Domain::NetworkPacket,
        Domain::PeripheralControllers,
        Domain::Dsp,
        Domain::FlowControl,
        Domain::Memory,
        Domain::CryptographicCores,
        Domain::SystemInfrastructure,
        Domain::ClockReset,
        Domain::SerdesLineCoding,
        Domain::Arbitration,
        Domain::ErrorCorrection,
    ];

    pub fn words(self) -> &'static str {
        match self {
            Domain::CpuBuildingBlocks => "cpu building blocks",
            Domain::Datapath => "datapath",
            Domain::ProtocolBridges => "protocol bridges",
            Domain::NetworkPacket => "network packet",
            Domain::PeripheralControllers => "peripheral controllers",
            Domain::Dsp => "dsp",
            Domain::FlowControl => "flow control",
            Domain::Memory => "memory",
            Domain::CryptographicCores => "cryptographic cores",
            Domain::SystemInfrastructure => "system infrastructure",
            Domain::ClockReset => "clock and reset",
            Domain::SerdesLineCoding => "serdes line coding",
            Domain::Arbitration => "arbitration",
            Domain::ErrorCorrection => "error correction",
        }
    }

    /// Keyword guess from a module name and synopsis.
    pub fn infer(text: &str) -> Domain {
        const RULES: &[(&[&str], Domain)] = &[
            (&["ecc", "hamming", "crc", "parity", "secded"], Domain::ErrorCorrection),
            (&["arbiter", "arbitration", "round robin"], Domain::Arbitration),
            (&["aes", "sha", "des", "crypto", "cipher"], Domain::CryptographicCores),
            (&["8b10b", "serdes", "encoder", "decoder", "manchester", "lfsr", "scrambler"], Domain::SerdesLineCoding),
            (&["clock", "reset", "pll", "synchronizer", "cdc"], Domain::ClockReset),
            (&["fifo", "skid", "credit", "backpressure", "handshake"], Domain::FlowControl),
            (&["ram", "rom", "sram", "memory", "regfile", "cache"], Domain::Memory),
            (&["axi", "apb", "ahb", "wishbone", "bridge"], Domain::ProtocolBridges),
            (&["ethernet", "packet", "mac", "router", "noc"], Domain::NetworkPacket),
            (&["uart", "spi", "i2c", "gpio", "pwm", "timer"], Domain::PeripheralControllers),
            (&["fir", "iir", "filter", "fft", "dsp", "mac"], Domain::Dsp),
            (&["alu", "pipeline", "cpu", "risc", "branch", "decode"], Domain::CpuBuildingBlocks),
            (&["interrupt", "dma", "bus", "interconnect", "debug"], Domain::SystemInfrastructure),
        ];
        let text = text.replace(['_', '-'], " ");
        RULES
            .iter()
            .find(|(kws, _)| kws.iter().any(|k| contains_keyword(&text, k)))
            .map_or(Domain::Datapath, |(_, d)| *d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortSummary {
    pub name: String,
    pub direction: Direction,
    /// Constant width in bits, when it can be computed.
    pub width: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceModule {
    pub id: String,
    pub module_name: String,
    pub port_list: Vec<PortSummary>,
    pub parameters: Vec<(String, String)>,
    pub synopsis: String,
    pub domain: Domain,
    pub source_attribution: String,
    /// Source file relative to the library root.
    pub path: String,
    /// Not stored in the index; filled by [`load_index`].
    #[serde(skip)]
    pub body: String,
}

impl ReferenceModule {
    /// Keywords used for retrieval scoring.
    pub fn keywords(&self) -> Vec<String> {
        let mut k: Vec<String> = content_words(&self.module_name.replace('_', " ")).into_iter().collect();
        k.push(self.domain.words().to_string());
        k
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexOutcome {
    pub modules: Vec<ReferenceModule>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexOptions {
    pub max_lines: usize,
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self { max_lines: 2000 }
    }
}

#[derive(Debug, Default, Deserialize)]
struct Attribution {
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    domain: Option<Domain>,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if matches!(p.extension().and_then(|x| x.to_str()), Some("v" | "sv")) {
            out.push(p);
        }
    }
    Ok(())
}

fn synopsis_of(src: &str, module: &str, ports: usize) -> String {
    let skip = |l: &str| {
        let lower = l.to_ascii_lowercase();
        l.is_empty() || lower.contains("spdx") || lower.contains("copyright") || lower.contains("license")
    };
    src.lines()
        .take(30)
        .filter_map(|l| l.trim().strip_prefix("//").map(str::trim))
        .find(|l| !skip(l))
        .map(str::to_string)
        .unwrap_or_else(|| format!("{module}: {ports} ports"))
}

/// Indexes every Verilog file under `dir`. `lint` returns `true` for a
/// clean file. Per-file I/O failures are recorded as rejections.
pub fn index_reference_library(
    dir: &Path,
    opts: &IndexOptions,
    lint: &dyn Fn(&str) -> bool,
) -> std::io::Result<IndexOutcome> {
    let attributions: BTreeMap<String, Attribution> = match std::fs::read_to_string(dir.join("attribution.json")) {
        Ok(text) => serde_json::from_str(&text).map_err(std::io::Error::other)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(e),
    };
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    let mut out = IndexOutcome::default();
    for path in files {
        let rel = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().replace('\\', "/");
        let reject = |reason: String| Rejection { path: rel.clone(), reason };
        let src = match std::fs::read_to_string(&path) {
            Ok(s) => s,
            Err(e) => {
                out.rejected.push(reject(format!("io: {e}")));
                continue;
            }
        };
        if src.lines().count() > opts.max_lines {
            out.rejected.push(reject("size".into()));
            continue;
        }
        let Some(m) = find_modules(&src).into_iter().find(|m| !m.is_stub) else {
            out.rejected.push(reject("no module".into()));
            continue;
        };
        if !lint(&src) {
            out.rejected.push(reject("lint".into()));
            continue;
        }
        let meta = attributions.get(&rel).or_else(|| attributions.get("*"));
        let synopsis = synopsis_of(&src, &m.name, m.ports.len());
        let domain = meta
            .and_then(|a| a.domain)
            .unwrap_or_else(|| Domain::infer(&format!("{} {synopsis}", m.name)));
        out.modules.push(ReferenceModule {
            id: rel.rsplit_once('.').map_or(rel.clone(), |(s, _)| s.to_string()),
            module_name: m.name.clone(),
            port_list: m
                .ports
                .iter()
                .map(|p| PortSummary { name: p.name.clone(), direction: p.direction, width: p.width() })
                .collect(),
            parameters: m.parameters.clone(),
            synopsis,
            domain,
            source_attribution: meta.and_then(|a| a.source.clone()).unwrap_or_else(|| "unknown".into()),
            path: rel.clone(),
            body: src,
        });
    }
    Ok(out)
}

/// Writes the index as JSON lines, one record per line.
pub fn save_index(modules: &[ReferenceModule], path: &Path) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for m in modules {
        serde_json::to_writer(&mut f, m)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

/// Reads a JSON-lines index and loads each body from `root`.
pub fn load_index(path: &Path, root: &Path) -> std::io::Result<Vec<ReferenceModule>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut m: ReferenceModule = serde_json::from_str(&line)?;
        m.body = std::fs::read_to_string(root.join(&m.path))?;
        out.push(m);
    }
    Ok(out)
}
