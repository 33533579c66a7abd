//! Coverage growth with provenance, rebuilt from a campaign's output files.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::campaign::{read_seed_records, CORPUS_DIR};
use super::stats::read_stats;
use super::EngineError;
use crate::corpus::{Lineage, Origin, SeedId, SeedRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub elapsed_s: f64,
    pub edges_seen: u64,
    pub admitted_llm_direct: u64,
    pub admitted_llm_descendant: u64,
    pub admitted_other: u64,
}

/// Classify every record by walking its full ancestor chain.
pub fn classify(records: &[SeedRecord]) -> Result<HashMap<SeedId, Lineage>, String> {
    let by_id: HashMap<SeedId, &SeedRecord> = records.iter().map(|r| (r.id, r)).collect();
    let mut out = HashMap::with_capacity(records.len());
    for r in records {
        let lineage = if r.origin == Origin::Llm {
            Lineage::LlmDirect
        } else {
            let mut cur = r.parent;
            let mut found = false;
            while let Some(p) = cur {
                let parent = by_id
                    .get(&p)
                    .ok_or_else(|| format!("seed {}: parent {p} missing", r.id))?;
                if parent.id >= r.id {
                    return Err(format!("seed {}: parent {p} is not older", r.id));
                }
                if parent.origin == Origin::Llm {
                    found = true;
                    break;
                }
                cur = parent.parent;
            }
            if found {
                Lineage::LlmDescendant
            } else {
                Lineage::NonLlm
            }
        };
        out.insert(r.id, lineage);
    }
    Ok(out)
}

/// One row per `stats.csv` sample with admissions counted by provenance.
pub fn report(out_dir: &Path) -> Result<Vec<ReportRow>, EngineError> {
    let corpus = out_dir.join(CORPUS_DIR);
    if !corpus.is_dir() {
        return Err(EngineError::Artifact {
            path: corpus,
            reason: "missing corpus directory".into(),
        });
    }
    let stats = read_stats(out_dir)?;
    let records = read_seed_records(out_dir)?;
    let lineage = classify(&records).map_err(|reason| EngineError::Artifact {
        path: out_dir.to_path_buf(),
        reason,
    })?;
    let mut found: Vec<(f64, Lineage)> = records.iter().map(|r| (r.found_at, lineage[&r.id])).collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rows = Vec::with_capacity(stats.len());
    let mut counts = [0u64; 3];
    let mut next = 0;
    for s in stats {
        while next < found.len() && found[next].0 <= s.elapsed_s {
            counts[match found[next].1 {
                Lineage::LlmDirect => 0,
                Lineage::LlmDescendant => 1,
                Lineage::NonLlm => 2,
            }] += 1;
            next += 1;
        }
        rows.push(ReportRow {
            elapsed_s: s.elapsed_s,
            edges_seen: s.edges_seen,
            admitted_llm_direct: counts[0],
            admitted_llm_descendant: counts[1],
            admitted_other: counts[2],
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "elapsed_s",
        "edges_seen",
        "admitted_llm_direct",
        "admitted_llm_descendant",
        "admitted_other",
    ])
    .expect("in-memory write");
    let mut w = {
        let inner = w.into_inner().expect("in-memory flush");
        csv::WriterBuilder::new().has_headers(false).from_writer(inner)
    };
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
