//! Text trace format.
//!
//! One item per line, `#` starts a comment:
//!
//! ```text
//! place <owner> <hex-vaddr> <size>        # pre-touch a range for G<n> or CPU
//! <device> <op> <hex-vaddr> <size> [dep]  # a trace record
//! ```
//!
//! `device` is `G<gpu>.C<cu>` or `CPU`; `op` is `R`, `W`, `C` (copy source
//! read) or `B` (barrier). Sizes are decimal bytes, `dep` is the index of an
//! earlier record. Barriers carry size 0; every other record needs size >= 1.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::topology::Owner;

/// Issuing unit of a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Requester {
    Cu { gpu: u32, cu: u32 },
    Cpu,
}

impl Requester {
    pub fn owner(self) -> Owner {
        match self {
            Requester::Cu { gpu, .. } => Owner::Gpu(gpu),
            Requester::Cpu => Owner::Cpu,
        }
    }
}

impl fmt::Display for Requester {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Requester::Cu { gpu, cu } => write!(f, "G{gpu}.C{cu}"),
            Requester::Cpu => f.write_str("CPU"),
        }
    }
}

impl FromStr for Requester {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "CPU" {
            return Ok(Requester::Cpu);
        }
        let bad = || format!("bad device `{s}` (expected G<n>.C<m> or CPU)");
        let rest = s.strip_prefix('G').ok_or_else(bad)?;
        let (g, c) = rest.split_once(".C").ok_or_else(bad)?;
        Ok(Requester::Cu {
            gpu: g.parse().map_err(|_| bad())?,
            cu: c.parse().map_err(|_| bad())?,
        })
    }
}

fn parse_owner(s: &str) -> Result<Owner, String> {
    if s == "CPU" {
        return Ok(Owner::Cpu);
    }
    s.strip_prefix('G')
        .and_then(|g| g.parse().ok())
        .map(Owner::Gpu)
        .ok_or_else(|| format!("bad placement owner `{s}` (expected G<n> or CPU)"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Read,
    Write,
    /// Read of an explicit copy's source range; the paired destination
    /// write is an ordinary `Write` depending on it.
    CopyMarker,
    /// Every later record waits until every earlier record has completed.
    Barrier,
}

impl Op {
    fn code(self) -> char {
        match self {
            Op::Read => 'R',
            Op::Write => 'W',
            Op::CopyMarker => 'C',
            Op::Barrier => 'B',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub device: Requester,
    pub op: Op,
    pub vaddr: u64,
    pub size_bytes: u64,
    pub dependency: Option<usize>,
}

impl TraceRecord {
    pub fn read(device: Requester, vaddr: u64, size_bytes: u64) -> Self {
        Self {
            device,
            op: Op::Read,
            vaddr,
            size_bytes,
            dependency: None,
        }
    }

    pub fn write(device: Requester, vaddr: u64, size_bytes: u64) -> Self {
        Self {
            op: Op::Write,
            ..Self::read(device, vaddr, size_bytes)
        }
    }

    pub fn copy(device: Requester, src: u64, size_bytes: u64) -> Self {
        Self {
            op: Op::CopyMarker,
            ..Self::read(device, src, size_bytes)
        }
    }

    pub fn barrier() -> Self {
        Self {
            device: Requester::Cpu,
            op: Op::Barrier,
            vaddr: 0,
            size_bytes: 0,
            dependency: None,
        }
    }

    pub fn after(mut self, dep: usize) -> Self {
        self.dependency = Some(dep);
        self
    }
}

/// Pre-touch directive: map `[vaddr, vaddr + size)` as if `owner` touched it
/// first, before the timed run starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub owner: Owner,
    pub vaddr: u64,
    pub size_bytes: u64,
}

/// A complete workload: placement directives plus the record stream.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Workload {
    pub name: String,
    pub seed: u64,
    /// Free-form header lines emitted as comments.
    pub notes: Vec<String>,
    /// Labels for the barrier-delimited phases, in order.
    pub phase_names: Vec<String>,
    pub placements: Vec<Placement>,
    pub records: Vec<TraceRecord>,
}

impl Workload {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Appends a record and returns its index.
    pub fn push(&mut self, r: TraceRecord) -> usize {
        self.records.push(r);
        self.records.len() - 1
    }

    pub fn place(&mut self, owner: Owner, vaddr: u64, size_bytes: u64) {
        self.placements.push(Placement {
            owner,
            vaddr,
            size_bytes,
        });
    }

    /// Bytes carried by read, write and copy records.
    pub fn issued_bytes(&self) -> u64 {
        self.records
            .iter()
            .filter(|r| r.op != Op::Barrier)
            .map(|r| r.size_bytes)
            .sum()
    }

    /// Number of barrier-delimited phases (at least one).
    pub fn phase_count(&self) -> usize {
        1 + self.records.iter().filter(|r| r.op == Op::Barrier).count()
    }

    pub fn phase_name(&self, phase: usize) -> String {
        self.phase_names
            .get(phase)
            .cloned()
            .unwrap_or_else(|| format!("phase{phase}"))
    }

    pub fn copy_bytes(&self) -> u64 {
        self.records
            .iter()
            .filter(|r| r.op == Op::CopyMarker)
            .map(|r| r.size_bytes)
            .sum()
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        for (i, r) in self.records.iter().enumerate() {
            if r.op != Op::Barrier && r.size_bytes == 0 {
                return Err(TraceError::Invalid {
                    index: i,
                    reason: "size must be at least 1 byte".into(),
                });
            }
            if let Some(d) = r.dependency {
                if d >= i {
                    return Err(TraceError::DanglingDependency { index: i, dep: d });
                }
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# workload: {}", self.name)?;
        writeln!(out, "# seed: {}", self.seed)?;
        for n in &self.notes {
            writeln!(out, "# {n}")?;
        }
        for p in &self.phase_names {
            writeln!(out, "# phase: {p}")?;
        }
        for p in &self.placements {
            writeln!(out, "place {} {:#x} {}", p.owner, p.vaddr, p.size_bytes)?;
        }
        for r in &self.records {
            write!(out, "{} {} {:#x} {}", r.device, r.op.code(), r.vaddr, r.size_bytes)?;
            if let Some(d) = r.dependency {
                write!(out, " {d}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("trace text is ASCII")
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        let io_err = |source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut w = io::BufWriter::new(file);
        self.write_to(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)
    }
}

fn parse_hex(tok: &str) -> Result<u64, String> {
    let digits = tok
        .strip_prefix("0x")
        .or_else(|| tok.strip_prefix("0X"))
        .ok_or_else(|| format!("address `{tok}` must be hex with 0x prefix"))?;
    u64::from_str_radix(digits, 16).map_err(|e| format!("address `{tok}`: {e}"))
}

fn parse_size(tok: &str) -> Result<u64, String> {
    tok.parse()
        .map_err(|_| format!("size `{tok}` is not a decimal byte count"))
}

/// Parses trace text. Header comments `# workload:` and `# seed:` are
/// recognized; other comments are kept as notes.
pub fn parse_trace(text: &str) -> Result<Workload, TraceError> {
    let mut w = Workload::new("trace");
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let err = |reason: String| TraceError::Parse { line: line_no, reason };
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let c = comment.trim();
            if let Some(name) = c.strip_prefix("workload:") {
                w.name = name.trim().to_string();
            } else if let Some(p) = c.strip_prefix("phase:") {
                w.phase_names.push(p.trim().to_string());
            } else if let Some(seed) = c.strip_prefix("seed:") {
                w.seed = seed
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad seed `{}`", seed.trim())))?;
            } else {
                w.notes.push(c.to_string());
            }
            continue;
        }
        let content = line.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.first() == Some(&"place") {
            if toks.len() != 4 {
                return Err(err("placement needs `place <owner> <hex-vaddr> <size>`".into()));
            }
            let owner = parse_owner(toks[1]).map_err(err)?;
            let vaddr = parse_hex(toks[2]).map_err(err)?;
            let size_bytes = parse_size(toks[3]).map_err(err)?;
            w.place(owner, vaddr, size_bytes);
            continue;
        }
        if !(4..=5).contains(&toks.len()) {
            return Err(err(format!("expected 4 or 5 fields, found {}", toks.len())));
        }
        let device: Requester = toks[0].parse().map_err(err)?;
        let op = match toks[1] {
            "R" => Op::Read,
            "W" => Op::Write,
            "C" => Op::CopyMarker,
            "B" => Op::Barrier,
            other => return Err(err(format!("unknown op `{other}`"))),
        };
        let vaddr = parse_hex(toks[2]).map_err(err)?;
        let size_bytes = parse_size(toks[3]).map_err(err)?;
        let dependency = match toks.get(4) {
            Some(t) => Some(
                t.parse::<usize>()
                    .map_err(|_| err(format!("bad dependency index `{t}`")))?,
            ),
            None => None,
        };
        if op != Op::Barrier && size_bytes == 0 {
            return Err(err("size must be at least 1 byte".into()));
        }
        w.records.push(TraceRecord {
            device,
            op,
            vaddr,
            size_bytes,
            dependency,
        });
    }
    w.validate()?;
    Ok(w)
}

pub fn load_trace(path: &Path) -> Result<Workload, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_empty_trace() {
        let w = parse_trace("").unwrap();
        assert!(w.records.is_empty() && w.placements.is_empty());
    }

    #[test]
    fn one_read() {
        let w = parse_trace("G0.C3 R 0x1000 64").unwrap();
        assert_eq!(
            w.records,
            vec![TraceRecord::read(Requester::Cu { gpu: 0, cu: 3 }, 0x1000, 64)]
        );
    }

    #[test]
    fn comments_and_placements() {
        let text = "# workload: demo\n# seed: 9\n# hello\nplace G1 0x0 8192\nCPU W 0x10 4 # trailing\nCPU B 0x0 0\nG1.C0 C 0x0 64 0\n";
        let w = parse_trace(text).unwrap();
        assert_eq!(w.name, "demo");
        assert_eq!(w.seed, 9);
        assert_eq!(w.notes, vec!["hello".to_string()]);
        assert_eq!(
            w.placements,
            vec![Placement {
                owner: Owner::Gpu(1),
                vaddr: 0,
                size_bytes: 8192
            }]
        );
        assert_eq!(w.records.len(), 3);
        assert_eq!(w.records[2].dependency, Some(0));
        assert_eq!(parse_trace(&w.to_text()).unwrap(), w);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_trace("G0.C0 R 0x0 64\n\nG0.C0 X 0x0 64\n").unwrap_err();
        assert!(matches!(e, TraceError::Parse { line: 3, .. }), "{e}");
        let e = parse_trace("G0.C0 R 4096 64").unwrap_err();
        assert!(matches!(e, TraceError::Parse { line: 1, .. }));
        let e = parse_trace("GPU0 R 0x0 64").unwrap_err();
        assert!(matches!(e, TraceError::Parse { line: 1, .. }));
        let e = parse_trace("G0.C0 R 0x0 0").unwrap_err();
        assert!(matches!(e, TraceError::Parse { line: 1, .. }));
    }

    #[test]
    fn dangling_dependency() {
        let e = parse_trace("G0.C0 R 0x0 64 0").unwrap_err();
        assert!(matches!(e, TraceError::DanglingDependency { index: 0, dep: 0 }));
        let e = parse_trace("G0.C0 R 0x0 64\nG0.C0 R 0x0 64 7").unwrap_err();
        assert!(matches!(e, TraceError::DanglingDependency { index: 1, dep: 7 }));
    }

    proptest::proptest! {
        #[test]
        fn text_round_trip(recs in proptest::collection::vec((0u32..4, 0u32..32, 0u8..4, 0u64..1 << 40, 1u64..1 << 20), 0..50)) {
            let mut w = Workload::new("prop");
            for (i, (g, c, op, addr, size)) in recs.into_iter().enumerate() {
                let dev = if g == 3 { Requester::Cpu } else { Requester::Cu { gpu: g, cu: c } };
                let mut r = match op {
                    0 => TraceRecord::read(dev, addr, size),
                    1 => TraceRecord::write(dev, addr, size),
                    2 => TraceRecord::copy(dev, addr, size),
                    _ => TraceRecord::barrier(),
                };
                if i > 0 && size % 2 == 0 {
                    r = r.after(i - 1);
                }
                w.push(r);
            }
            proptest::prop_assert_eq!(parse_trace(&w.to_text()).unwrap(), w);
        }
    }
}
