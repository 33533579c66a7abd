//! Seed storage, scheduling, lineage and crash triage.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coverage::{EdgeId, NoveltyVerdict};

pub type SeedId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Initial,
    Classic,
    Llm,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Initial => "initial",
            Origin::Classic => "classic",
            Origin::Llm => "llm",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "initial" => Ok(Origin::Initial),
            "classic" => Ok(Origin::Classic),
            "llm" => Ok(Origin::Llm),
            other => Err(CorpusError::BadFileName(format!("unknown origin {other:?}"))),
        }
    }
}

/// Provenance class of a seed with respect to the mutation channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lineage {
    LlmDirect,
    LlmDescendant,
    NonLlm,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("seed id {0} already in corpus")]
    DuplicateId(SeedId),
    #[error("unknown seed id {0}")]
    UnknownId(SeedId),
    #[error("corpus is empty")]
    Empty,
    #[error("seed {id}: {reason}")]
    InvalidLineage { id: SeedId, reason: &'static str },
    #[error("malformed corpus file name: {0}")]
    BadFileName(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub id: SeedId,
    pub payload: Vec<u8>,
    pub origin: Origin,
    pub parent_id: Option<SeedId>,
    pub exec_count: u64,
    /// Seconds since campaign start.
    pub found_at: f64,
    pub caused_crash: bool,
    pub format_tag: String,
    /// Novelty observed when the seed was executed for admission.
    pub verdict: NoveltyVerdict,
}

impl Seed {
    pub fn new(id: SeedId, payload: Vec<u8>, origin: Origin, parent_id: Option<SeedId>) -> Self {
        Self {
            id,
            payload,
            origin,
            parent_id,
            exec_count: 0,
            found_at: 0.0,
            caused_crash: false,
            format_tag: String::new(),
            verdict: NoveltyVerdict::default(),
        }
    }

    /// `id_<id>,src_<origin>,parent_<parent|none>`
    pub fn file_name(&self) -> String {
        match self.parent_id {
            Some(p) => format!("id_{},src_{},parent_{}", self.id, self.origin, p),
            None => format!("id_{},src_{},parent_none", self.id, self.origin),
        }
    }
}

/// Parse a corpus file name back into `(id, origin, parent)`.
pub fn parse_file_name(name: &str) -> Result<(SeedId, Origin, Option<SeedId>), CorpusError> {
    let bad = || CorpusError::BadFileName(name.to_string());
    let mut parts = name.split(',');
    let id = parts
        .next()
        .and_then(|p| p.strip_prefix("id_"))
        .and_then(|p| p.parse().ok())
        .ok_or_else(bad)?;
    let origin = parts
        .next()
        .and_then(|p| p.strip_prefix("src_"))
        .ok_or_else(bad)?
        .parse()?;
    let parent = match parts.next().and_then(|p| p.strip_prefix("parent_")) {
        Some("none") => None,
        Some(p) => Some(p.parse().map_err(|_| bad())?),
        None => return Err(bad()),
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((id, origin, parent))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub seed_id: SeedId,
    /// Edges first seen in the crashing execution, ascending.
    pub signature: Vec<EdgeId>,
    pub detail: String,
    /// Number of crashing executions that collapsed into this record.
    pub hits: u64,
}

/// Metadata line persisted next to the corpus for offline analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub id: SeedId,
    pub origin: Origin,
    pub parent: Option<SeedId>,
    pub found_at: f64,
    pub exec_count: u64,
    pub caused_crash: bool,
    pub new_edges: u32,
    pub new_buckets: u32,
    pub format_tag: String,
}

impl From<&Seed> for SeedRecord {
    fn from(s: &Seed) -> Self {
        Self {
            id: s.id,
            origin: s.origin,
            parent: s.parent_id,
            found_at: s.found_at,
            exec_count: s.exec_count,
            caused_crash: s.caused_crash,
            new_edges: s.verdict.new_edges,
            new_buckets: s.verdict.new_buckets,
            format_tag: s.format_tag.clone(),
        }
    }
}

#[derive(Debug)]
struct Entry {
    seed: Seed,
    lineage: Lineage,
    scheduled: bool,
}

/// Admitted seeds plus scheduling state.
#[derive(Debug, Default)]
pub struct Corpus {
    entries: Vec<Entry>,
    index: HashMap<SeedId, usize>,
    fresh: VecDeque<usize>,
    cursor: usize,
    crashes: Vec<CrashRecord>,
    crash_index: HashMap<Vec<EdgeId>, usize>,
    next_id: SeedId,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest id strictly greater than every id admitted so far.
    pub fn next_id(&self) -> SeedId {
        self.next_id
    }

    pub fn get(&self, id: SeedId) -> Option<&Seed> {
        self.index.get(&id).map(|&i| &self.entries[i].seed)
    }

    pub fn seeds(&self) -> impl Iterator<Item = &Seed> {
        self.entries.iter().map(|e| &e.seed)
    }

    /// The seed admitted `index`-th.
    pub fn by_index(&self, index: usize) -> Option<&Seed> {
        self.entries.get(index).map(|e| &e.seed)
    }

    pub fn crashes(&self) -> &[CrashRecord] {
        &self.crashes
    }

    /// Admit `seed` if it is interesting or crashed. Crashing seeds also
    /// produce (or bump) a [`CrashRecord`] keyed by `crash_signature`.
    pub fn admit(
        &mut self,
        mut seed: Seed,
        verdict: NoveltyVerdict,
        crash_signature: &[EdgeId],
        crash_detail: &str,
    ) -> Result<bool, CorpusError> {
        if self.index.contains_key(&seed.id) {
            return Err(CorpusError::DuplicateId(seed.id));
        }
        if !(verdict.is_interesting || seed.caused_crash) {
            return Ok(false);
        }
        if seed.id < self.next_id {
            return Err(CorpusError::InvalidLineage {
                id: seed.id,
                reason: "ids must increase monotonically",
            });
        }
        let lineage = match (seed.origin, seed.parent_id) {
            (Origin::Initial, None) => Lineage::NonLlm,
            (Origin::Initial, Some(_)) => {
                return Err(CorpusError::InvalidLineage {
                    id: seed.id,
                    reason: "initial seeds have no parent",
                })
            }
            (_, None) => {
                return Err(CorpusError::InvalidLineage {
                    id: seed.id,
                    reason: "derived seeds need a parent",
                })
            }
            (origin, Some(p)) => {
                let parent = self.index.get(&p).ok_or(CorpusError::InvalidLineage {
                    id: seed.id,
                    reason: "parent not in corpus",
                })?;
                match (origin, self.entries[*parent].lineage) {
                    (Origin::Llm, _) => Lineage::LlmDirect,
                    (_, Lineage::NonLlm) => Lineage::NonLlm,
                    _ => Lineage::LlmDescendant,
                }
            }
        };
        seed.verdict = verdict;

        if seed.caused_crash {
            match self.crash_index.get(crash_signature) {
                Some(&i) => self.crashes[i].hits += 1,
                None => {
                    self.crash_index.insert(crash_signature.to_vec(), self.crashes.len());
                    self.crashes.push(CrashRecord {
                        seed_id: seed.id,
                        signature: crash_signature.to_vec(),
                        detail: crash_detail.to_string(),
                        hits: 1,
                    });
                }
            }
        }

        let idx = self.entries.len();
        self.next_id = seed.id + 1;
        self.index.insert(seed.id, idx);
        self.entries.push(Entry {
            seed,
            lineage,
            scheduled: false,
        });
        self.fresh.push_back(idx);
        Ok(true)
    }

    /// Count another hit on an existing crash record. Returns `false` when no
    /// record has this signature.
    pub fn bump_crash(&mut self, signature: &[EdgeId]) -> bool {
        match self.crash_index.get(signature) {
            Some(&i) => {
                self.crashes[i].hits += 1;
                true
            }
            None => false,
        }
    }

    /// Pick the next seed to fuzz: never-scheduled seeds first, in admission
    /// order, then plain round-robin.
    pub fn next_seed(&mut self) -> Result<SeedId, CorpusError> {
        if self.entries.is_empty() {
            return Err(CorpusError::Empty);
        }
        let idx = match self.fresh.pop_front() {
            Some(i) => i,
            None => {
                let i = self.cursor % self.entries.len();
                self.cursor = i + 1;
                i
            }
        };
        self.entries[idx].scheduled = true;
        Ok(self.entries[idx].seed.id)
    }

    pub fn was_scheduled(&self, id: SeedId) -> Option<bool> {
        self.index.get(&id).map(|&i| self.entries[i].scheduled)
    }

    pub fn record_exec(&mut self, id: SeedId) {
        if let Some(&i) = self.index.get(&id) {
            self.entries[i].seed.exec_count += 1;
        }
    }

    /// Provenance class, computed at admission from the parent's class.
    pub fn lineage_origin(&self, id: SeedId) -> Result<Lineage, CorpusError> {
        self.index
            .get(&id)
            .map(|&i| self.entries[i].lineage)
            .ok_or(CorpusError::UnknownId(id))
    }

    /// Write every admitted seed into `dir` (created if needed).
    pub fn persist(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for e in &self.entries {
            let path = dir.join(e.seed.file_name());
            fs::write(&path, &e.seed.payload).map_err(io_err(&path))?;
        }
        Ok(())
    }

    /// One file per deduplicated crash: `crash_<n>,id_<seed>`.
    pub fn persist_crashes(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (n, c) in self.crashes.iter().enumerate() {
            let path = dir.join(format!("crash_{n},id_{}", c.seed_id));
            let seed = self.get(c.seed_id).ok_or(CorpusError::UnknownId(c.seed_id))?;
            fs::write(&path, &seed.payload).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// A seed file read back from a corpus directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredSeed {
    pub id: SeedId,
    pub origin: Origin,
    pub parent: Option<SeedId>,
    pub payload: Vec<u8>,
}

/// Read a persisted corpus directory, sorted by id.
pub fn load_dir(dir: &Path) -> Result<Vec<StoredSeed>, CorpusError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with('.') {
            continue;
        }
        let (id, origin, parent) = parse_file_name(&name)?;
        let path = entry.path();
        let payload = fs::read(&path).map_err(io_err(&path))?;
        out.push(StoredSeed {
            id,
            origin,
            parent,
            payload,
        });
    }
    out.sort_by_key(|s| s.id);
    Ok(out)
}

/// Read every regular file in `dir` as an initial seed, sorted by file name.
pub fn read_initial_seeds(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, CorpusError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let payload = fs::read(&path).map_err(io_err(&path))?;
        out.push((entry.file_name().to_string_lossy().into_owned(), payload));
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interesting() -> NoveltyVerdict {
        NoveltyVerdict::new(1, 0)
    }

    fn seed(id: SeedId, origin: Origin, parent: Option<SeedId>) -> Seed {
        Seed::new(id, vec![id as u8], origin, parent)
    }

    #[test]
    fn admit_rules() {
        let mut c = Corpus::new();
        assert!(c.admit(seed(0, Origin::Initial, None), interesting(), &[], "").unwrap());
        assert!(!c
            .admit(seed(1, Origin::Classic, Some(0)), NoveltyVerdict::default(), &[], "")
            .unwrap());
        let mut s = seed(1, Origin::Classic, Some(0));
        s.caused_crash = true;
        assert!(c.admit(s, NoveltyVerdict::default(), &[42], "B1").unwrap());
        assert_eq!(c.crashes().len(), 1);
        assert_eq!(c.crashes()[0].detail, "B1");
    }

    #[test]
    fn duplicate_id_is_an_error() {
        let mut c = Corpus::new();
        c.admit(seed(0, Origin::Initial, None), interesting(), &[], "").unwrap();
        assert!(matches!(
            c.admit(seed(0, Origin::Initial, None), interesting(), &[], ""),
            Err(CorpusError::DuplicateId(0))
        ));
    }

    #[test]
    fn crash_signatures_dedupe() {
        let mut c = Corpus::new();
        c.admit(seed(0, Origin::Initial, None), interesting(), &[], "").unwrap();
        for id in 1..=2 {
            let mut s = seed(id, Origin::Classic, Some(0));
            s.caused_crash = true;
            c.admit(s, NoveltyVerdict::default(), &[5, 9], "B2").unwrap();
        }
        assert_eq!(c.crashes().len(), 1);
        assert_eq!(c.crashes()[0].hits, 2);
    }

    #[test]
    fn scheduling_examples() {
        let mut c = Corpus::new();
        assert!(matches!(c.next_seed(), Err(CorpusError::Empty)));
        c.admit(seed(0, Origin::Initial, None), interesting(), &[], "").unwrap();
        assert_eq!(c.next_seed().unwrap(), 0);
        c.admit(seed(1, Origin::Classic, Some(0)), interesting(), &[], "")
            .unwrap();
        // fresh B ahead of fuzzed A
        assert_eq!(c.next_seed().unwrap(), 1);
        assert_eq!(c.next_seed().unwrap(), 0);
        assert_eq!(c.next_seed().unwrap(), 1);
        assert_eq!(c.next_seed().unwrap(), 0);
    }

    #[test]
    fn lineage_examples() {
        let mut c = Corpus::new();
        c.admit(seed(0, Origin::Initial, None), interesting(), &[], "").unwrap();
        c.admit(seed(1, Origin::Llm, Some(0)), interesting(), &[], "").unwrap();
        c.admit(seed(2, Origin::Classic, Some(1)), interesting(), &[], "")
            .unwrap();
        c.admit(seed(3, Origin::Classic, Some(0)), interesting(), &[], "")
            .unwrap();
        c.admit(seed(4, Origin::Classic, Some(3)), interesting(), &[], "")
            .unwrap();
        assert_eq!(c.lineage_origin(1).unwrap(), Lineage::LlmDirect);
        assert_eq!(c.lineage_origin(2).unwrap(), Lineage::LlmDescendant);
        assert_eq!(c.lineage_origin(4).unwrap(), Lineage::NonLlm);
        assert!(matches!(c.lineage_origin(99), Err(CorpusError::UnknownId(99))));
    }

    #[test]
    fn lineage_invariants_enforced() {
        let mut c = Corpus::new();
        assert!(c.admit(seed(0, Origin::Classic, None), interesting(), &[], "").is_err());
        assert!(c
            .admit(seed(0, Origin::Initial, Some(3)), interesting(), &[], "")
            .is_err());
        c.admit(seed(5, Origin::Initial, None), interesting(), &[], "").unwrap();
        assert!(c.admit(seed(3, Origin::Initial, None), interesting(), &[], "").is_err());
        assert!(c
            .admit(seed(6, Origin::Classic, Some(4)), interesting(), &[], "")
            .is_err());
    }

    #[test]
    fn file_names_round_trip() {
        let s = seed(12, Origin::Llm, Some(7));
        assert_eq!(s.file_name(), "id_12,src_llm,parent_7");
        assert_eq!(parse_file_name(&s.file_name()).unwrap(), (12, Origin::Llm, Some(7)));
        assert_eq!(
            parse_file_name("id_0,src_initial,parent_none").unwrap(),
            (0, Origin::Initial, None)
        );
        assert!(parse_file_name("id_x,src_llm,parent_1").is_err());
        assert!(parse_file_name("id_1,src_robot,parent_1").is_err());
    }

    #[test]
    fn persist_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Corpus::new();
        c.admit(seed(0, Origin::Initial, None), interesting(), &[], "").unwrap();
        c.admit(seed(1, Origin::Llm, Some(0)), interesting(), &[], "").unwrap();
        c.persist(dir.path()).unwrap();
        let back = load_dir(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].payload, vec![1]);
        assert_eq!(back[1].parent, Some(0));
    }
}
