//! The MAP-Elites repertoire and its newline-delimited JSON file format.
//!
//! Line 1 is a header, every following line is one cell, sorted by bin:
//!
//! ```text
//! {"kind":"mfswarm-archive","format":1,"binning":{"version":1,"dims":[10,100,10],"variance_ceiling":166666.66666666666},"config_hash":"…","master_seed":7,"cells":2}
//! {"bins":[0,12,9],"raw":{"exploration":0.0,"network":0.1225,"localization":151234.5},"fitness":0.41,"evals":5,"genome":{"params":[…32 numbers…],"mask":"11111111"},"seeds":[…]}
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::Genome;
use crate::error::{Error, Result};
use crate::metrics::{BehaviorDescriptor, BinningConfig, RawDescriptor};

pub const ARCHIVE_KIND: &str = "mfswarm-archive";
pub const ARCHIVE_FORMAT: u32 = 1;

/// Archive coordinates (exploration, network, localization).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bin(pub [usize; 3]);

impl Bin {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        Bin([i, j, k])
    }
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

/// One elite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveCell {
    pub bins: Bin,
    /// Raw characteristics averaged over `evals` episodes.
    pub raw: RawDescriptor,
    pub fitness: f64,
    pub evals: usize,
    pub genome: Genome,
    pub seeds: Vec<u64>,
}

impl ArchiveCell {
    pub fn descriptor(&self) -> BehaviorDescriptor {
        BehaviorDescriptor { raw: self.raw, bins: self.bins }
    }

    /// Total order used only to settle equal-fitness conflicts in merges.
    fn tiebreak_key(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }

    fn beats(&self, other: &ArchiveCell) -> bool {
        self.fitness > other.fitness
            || (self.fitness == other.fitness && self.tiebreak_key() < other.tiebreak_key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveHeader {
    pub kind: String,
    pub format: u32,
    pub binning: BinningConfig,
    pub config_hash: String,
    pub master_seed: u64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repertoire {
    binning: BinningConfig,
    config_hash: String,
    master_seed: u64,
    cells: BTreeMap<Bin, ArchiveCell>,
}

impl Repertoire {
    pub fn new(binning: BinningConfig, config_hash: impl Into<String>, master_seed: u64) -> Self {
        Repertoire { binning, config_hash: config_hash.into(), master_seed, cells: BTreeMap::new() }
    }

    pub fn binning(&self) -> &BinningConfig {
        &self.binning
    }

    pub fn dims(&self) -> [usize; 3] {
        self.binning.dims
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Filled fraction of all bins.
    pub fn coverage(&self) -> f64 {
        self.cells.len() as f64 / self.binning.n_bins() as f64
    }

    pub fn get(&self, bin: Bin) -> Option<&ArchiveCell> {
        self.cells.get(&bin)
    }

    /// Like [`Repertoire::get`] but distinguishes out-of-range from empty.
    pub fn cell(&self, bin: Bin) -> Result<&ArchiveCell> {
        if !self.binning.contains(bin) {
            return Err(Error::BinOutOfRange(bin));
        }
        self.cells.get(&bin).ok_or(Error::EmptyCell(bin))
    }

    /// Cells in ascending bin order.
    pub fn iter(&self) -> impl Iterator<Item = &ArchiveCell> {
        self.cells.values()
    }

    pub fn bins(&self) -> impl Iterator<Item = Bin> + '_ {
        self.cells.keys().copied()
    }

    /// Stores `cell` if its bin is empty or it is strictly fitter than the
    /// incumbent.
    pub fn insert(&mut self, cell: ArchiveCell) -> bool {
        match self.cells.get(&cell.bins) {
            Some(incumbent) if cell.fitness <= incumbent.fitness => false,
            _ => {
                self.cells.insert(cell.bins, cell);
                true
            }
        }
    }

    /// Per-bin best across `parts`. Equal fitness is settled by a content
    /// ordering so the result does not depend on argument order.
    pub fn merge(parts: &[Repertoire]) -> Result<Repertoire> {
        let first = parts.first().ok_or_else(|| Error::Config("nothing to merge".into()))?;
        for p in &parts[1..] {
            if p.binning != first.binning {
                return Err(Error::IncompatibleBinning(format!(
                    "{:?} (v{}) vs {:?} (v{})",
                    first.binning.dims, first.binning.version, p.binning.dims, p.binning.version
                )));
            }
        }
        let mut hashes: Vec<&str> = parts.iter().map(|p| p.config_hash.as_str()).collect();
        hashes.sort_unstable();
        hashes.dedup();
        let config_hash = if hashes.len() == 1 {
            hashes[0].to_string()
        } else {
            sha256_hex(hashes.join("\n").as_bytes())
        };
        let master_seed = parts.iter().map(|p| p.master_seed).min().unwrap_or(0);
        let mut out = Repertoire::new(first.binning, config_hash, master_seed);
        for cell in parts.iter().flat_map(|p| p.cells.values()) {
            match out.cells.get(&cell.bins) {
                Some(cur) if !cell.beats(cur) => {}
                _ => {
                    out.cells.insert(cell.bins, cell.clone());
                }
            }
        }
        Ok(out)
    }

    pub fn header(&self) -> ArchiveHeader {
        ArchiveHeader {
            kind: ARCHIVE_KIND.to_string(),
            format: ARCHIVE_FORMAT,
            binning: self.binning,
            config_hash: self.config_hash.clone(),
            master_seed: self.master_seed,
            cells: self.cells.len(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header())?;
        w.write_all(b"\n")?;
        for cell in self.cells.values() {
            serde_json::to_writer(&mut w, cell)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(reader: R, origin: &str) -> Result<Repertoire> {
        let err = |line: usize, msg: String| Error::Archive { path: origin.into(), line, msg };
        let mut lines = reader.lines().enumerate();
        let header: ArchiveHeader = match lines.next() {
            Some((_, line)) => {
                let line = line.map_err(|e| err(1, e.to_string()))?;
                serde_json::from_str(&line).map_err(|e| err(1, format!("bad header: {e}")))?
            }
            None => return Err(err(1, "empty file".into())),
        };
        if header.kind != ARCHIVE_KIND {
            return Err(err(1, format!("not an archive (kind {:?})", header.kind)));
        }
        if header.format != ARCHIVE_FORMAT {
            return Err(err(1, format!("unsupported format {}", header.format)));
        }
        header.binning.validate().map_err(|e| err(1, e.to_string()))?;
        let mut rep = Repertoire::new(header.binning, header.config_hash, header.master_seed);
        for (idx, line) in lines {
            let n = idx + 1;
            let line = line.map_err(|e| err(n, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let cell: ArchiveCell = serde_json::from_str(&line).map_err(|e| err(n, e.to_string()))?;
            if !rep.binning.contains(cell.bins) {
                return Err(err(n, format!("bin {} outside dims {:?}", cell.bins, rep.binning.dims)));
            }
            if !cell.fitness.is_finite() || !cell.raw.is_finite() {
                return Err(err(n, format!("non-finite values in cell {}", cell.bins)));
            }
            if rep.cells.insert(cell.bins, cell).is_some() {
                return Err(err(n, "duplicate bin".into()));
            }
        }
        if rep.cells.len() != header.cells {
            return Err(err(1, format!("header lists {} cells, file has {}", header.cells, rep.cells.len())));
        }
        Ok(rep)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Repertoire> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Repertoire::read_jsonl(BufReader::new(file), &path.display().to_string())
    }

    /// Writes to a sibling temporary file and renames it into place, so a
    /// reader never sees a partial archive.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        self.write_jsonl(BufWriter::new(&file)).map_err(|e| Error::io(&tmp, e))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the JSON form of a config value.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}
