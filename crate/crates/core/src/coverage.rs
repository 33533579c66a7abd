//! Edge-coverage accounting.
//!
//! Raw hit counts are folded into eight power-of-two buckets; a map stores,
//! per edge, the set of buckets ever observed as a bit mask. An execution is
//! interesting when it touches an unseen edge or lands an edge in an unseen
//! bucket.

use std::collections::{BTreeMap, HashMap};

/// Identifier of a control-flow edge.
pub type EdgeId = u32;

/// Number of hit-count buckets.
pub const BUCKETS: u8 = 8;

/// Map a raw hit count to its bucket index.
///
/// Buckets: `1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+`.
///
/// Panics on `count == 0`: absent edges are never bucketized.
#[inline]
pub fn bucketize(count: u32) -> u8 {
    assert!(count >= 1, "bucketize called with a zero hit count");
    match count {
        1 => 0,
        2 => 1,
        3 => 2,
        4..=7 => 3,
        8..=15 => 4,
        16..=31 => 5,
        32..=127 => 6,
        _ => 7,
    }
}

/// Raw per-edge hit counts from one execution.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeTrace {
    hits: BTreeMap<EdgeId, u32>,
}

impl EdgeTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one traversal of `edge`. Counts saturate.
    #[inline]
    pub fn hit(&mut self, edge: EdgeId) {
        let c = self.hits.entry(edge).or_insert(0);
        *c = c.saturating_add(1);
    }

    /// Add `count` traversals at once; zero is ignored.
    pub fn add(&mut self, edge: EdgeId, count: u32) {
        if count == 0 {
            return;
        }
        let c = self.hits.entry(edge).or_insert(0);
        *c = c.saturating_add(count);
    }

    pub fn count(&self, edge: EdgeId) -> u32 {
        self.hits.get(&edge).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// Iterate `(edge, count)` in ascending edge order.
    pub fn iter(&self) -> impl Iterator<Item = (EdgeId, u32)> + '_ {
        self.hits.iter().map(|(&e, &c)| (e, c))
    }

    /// Build a trace from a dense counter array where the index is the edge id.
    pub fn from_dense<T: Copy + Into<u32>>(counters: &[T]) -> Self {
        let hits = counters
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| {
                let c: u32 = c.into();
                (c > 0).then_some((i as EdgeId, c))
            })
            .collect();
        Self { hits }
    }
}

impl FromIterator<(EdgeId, u32)> for EdgeTrace {
    fn from_iter<I: IntoIterator<Item = (EdgeId, u32)>>(iter: I) -> Self {
        let mut t = EdgeTrace::new();
        for (e, c) in iter {
            t.add(e, c);
        }
        t
    }
}

/// Outcome of comparing a trace against the accumulated map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoveltyVerdict {
    pub new_edges: u32,
    pub new_buckets: u32,
    pub is_interesting: bool,
}

impl NoveltyVerdict {
    pub fn new(new_edges: u32, new_buckets: u32) -> Self {
        Self {
            new_edges,
            new_buckets,
            is_interesting: new_edges > 0 || new_buckets > 0,
        }
    }
}

/// Accumulated coverage: one bucket mask per edge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageMap {
    buckets: HashMap<EdgeId, u8>,
    edges_seen: usize,
}

impl CoverageMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of distinct edges ever observed.
    pub fn edges_seen(&self) -> usize {
        self.edges_seen
    }

    pub fn mask(&self, edge: EdgeId) -> u8 {
        self.buckets.get(&edge).copied().unwrap_or(0)
    }

    /// Compare without merging. Returns the verdict and the edge ids that
    /// would be seen for the first time, ascending.
    pub fn diff(&self, trace: &EdgeTrace) -> (NoveltyVerdict, Vec<EdgeId>) {
        let mut new_edges = Vec::new();
        let mut new_buckets = 0u32;
        for (edge, count) in trace.iter() {
            let bit = 1u8 << bucketize(count);
            match self.buckets.get(&edge) {
                None | Some(0) => new_edges.push(edge),
                Some(m) if m & bit == 0 => new_buckets += 1,
                Some(_) => {}
            }
        }
        (NoveltyVerdict::new(new_edges.len() as u32, new_buckets), new_edges)
    }

    /// OR the trace's bucket bits into the map and report what was new.
    pub fn observe(&mut self, trace: &EdgeTrace) -> NoveltyVerdict {
        let mut new_edges = 0u32;
        let mut new_buckets = 0u32;
        for (edge, count) in trace.iter() {
            let bit = 1u8 << bucketize(count);
            let mask = self.buckets.entry(edge).or_insert(0);
            if *mask == 0 {
                new_edges += 1;
                self.edges_seen += 1;
            } else if *mask & bit == 0 {
                new_buckets += 1;
            }
            *mask |= bit;
        }
        NoveltyVerdict::new(new_edges, new_buckets)
    }

    /// Edge ids with a nonzero mask, ascending.
    pub fn edges(&self) -> Vec<EdgeId> {
        let mut v: Vec<EdgeId> = self.buckets.iter().filter(|(_, &m)| m != 0).map(|(&e, _)| e).collect();
        v.sort_unstable();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    // Interval table written out independently of the match in `bucketize`.
    fn bucket_by_interval(count: u32) -> u8 {
        const LOWER: [u32; 8] = [1, 2, 3, 4, 8, 16, 32, 128];
        LOWER.iter().rposition(|&lo| count >= lo).unwrap() as u8
    }

    #[test]
    fn bucketize_table_examples() {
        assert_eq!(bucketize(1), 0);
        assert_eq!(bucketize(5), 3);
        assert_eq!(bucketize(200), 7);
    }

    #[test]
    fn bucketize_matches_intervals_exhaustively() {
        for c in 1..=300 {
            assert_eq!(bucketize(c), bucket_by_interval(c), "count {c}");
        }
        assert_eq!(bucketize(u32::MAX), 7);
    }

    #[test]
    #[should_panic]
    fn bucketize_rejects_zero() {
        bucketize(0);
    }

    #[test]
    fn observe_examples() {
        let mut m = CoverageMap::new();
        let v = m.observe(&[(7, 1)].into_iter().collect());
        assert_eq!(v, NoveltyVerdict::new(1, 0));
        assert!(v.is_interesting);

        let v = m.observe(&[(7, 1)].into_iter().collect());
        assert_eq!(v, NoveltyVerdict::new(0, 0));
        assert!(!v.is_interesting);

        let v = m.observe(&[(7, 9)].into_iter().collect());
        assert_eq!(v.new_edges, 0);
        assert_eq!(v.new_buckets, 1);
        assert!(v.is_interesting);
    }

    #[test]
    fn dense_conversion_skips_zeros() {
        let t = EdgeTrace::from_dense(&[0u8, 3, 0, 1]);
        assert_eq!(t.iter().collect::<Vec<_>>(), vec![(1, 3), (3, 1)]);
    }

    #[test]
    fn diff_does_not_mutate() {
        let mut m = CoverageMap::new();
        m.observe(&[(1, 1)].into_iter().collect());
        let t: EdgeTrace = [(1, 4), (2, 1)].into_iter().collect();
        let (v, fresh) = m.diff(&t);
        assert_eq!(v, NoveltyVerdict::new(1, 1));
        assert_eq!(fresh, vec![2]);
        assert_eq!(m.edges_seen(), 1);
    }

    fn arb_trace() -> impl Strategy<Value = EdgeTrace> {
        proptest::collection::btree_map(0u32..64, 1u32..400, 0..20).prop_map(|m| m.into_iter().collect())
    }

    proptest! {
        #[test]
        fn observe_is_idempotent(seed in proptest::collection::vec(arb_trace(), 0..5), t in arb_trace()) {
            let mut m = CoverageMap::new();
            for s in &seed { m.observe(s); }
            m.observe(&t);
            prop_assert!(!m.observe(&t).is_interesting);
        }

        #[test]
        fn edges_seen_is_monotone(traces in proptest::collection::vec(arb_trace(), 1..10)) {
            let mut m = CoverageMap::new();
            let mut last = 0;
            for t in &traces {
                m.observe(t);
                prop_assert!(m.edges_seen() >= last);
                prop_assert_eq!(m.edges_seen(), m.edges().len());
                last = m.edges_seen();
            }
        }

        #[test]
        fn bucketize_monotone(a in 1u32.., b in 1u32..) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bucketize(lo) <= bucketize(hi));
        }

        #[test]
        fn verdict_matches_set_diff(prev in proptest::collection::vec(arb_trace(), 0..6), t in arb_trace()) {
            let mut m = CoverageMap::new();
            let mut seen: BTreeSet<(u32, u8)> = BTreeSet::new();
            for p in &prev {
                m.observe(p);
                seen.extend(p.iter().map(|(e, c)| (e, bucket_by_interval(c))));
            }
            let edges: BTreeSet<u32> = seen.iter().map(|&(e, _)| e).collect();
            let ne = t.iter().filter(|(e, _)| !edges.contains(e)).count() as u32;
            let nb = t.iter().filter(|&(e, c)| edges.contains(&e) && !seen.contains(&(e, bucket_by_interval(c)))).count() as u32;
            prop_assert_eq!(m.observe(&t), NoveltyVerdict::new(ne, nb));
        }
    }
}
