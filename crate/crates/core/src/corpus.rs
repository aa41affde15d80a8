//! Verb–noun pair observations.
//!
//! Pair files are line oriented UTF-8: `verb<TAB>noun[<TAB>count]`. Blank
//! lines and lines starting with `#` are ignored. Column one is always the
//! context word and column two the word being clustered; to cluster verbs by
//! their objects instead, swap the columns before ingestion.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::seq::index;

use crate::error::{Error, Result};
use crate::seeded_rng;

/// Bijection between strings and dense ordinals, assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the ordinal of `symbol`, inserting it if unseen.
    pub fn intern(&mut self, symbol: &str) -> u32 {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        assert!(!symbol.is_empty(), "empty symbols are not allowed");
        let id = self.symbols.len() as u32;
        self.symbols.push(symbol.to_string());
        self.index.insert(symbol.to_string(), id);
        id
    }

    pub fn get(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn from_symbols<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocab::new();
        for (i, s) in symbols.into_iter().enumerate() {
            let s = s.as_ref();
            if s.is_empty() {
                return Err(Error::Range(format!("empty symbol at position {i}")));
            }
            if vocab.get(s).is_some() {
                return Err(Error::Range(format!("duplicate symbol {s:?}")));
            }
            vocab.intern(s);
        }
        Ok(vocab)
    }
}

/// Sparse table of verb–noun co-occurrence counts `f(v, n)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairCorpus {
    verbs: Vocab,
    nouns: Vocab,
    counts: BTreeMap<(u32, u32), u64>,
}

impl PairCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// An empty corpus sharing the vocabularies of `self`.
    pub fn empty_like(&self) -> Self {
        Self {
            verbs: self.verbs.clone(),
            nouns: self.nouns.clone(),
            counts: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, verb: &str, noun: &str, count: u64) {
        if count == 0 {
            return;
        }
        let v = self.verbs.intern(verb);
        let n = self.nouns.intern(noun);
        *self.counts.entry((v, n)).or_insert(0) += count;
    }

    fn add_ids(&mut self, v: u32, n: u32, count: u64) {
        if count > 0 {
            *self.counts.entry((v, n)).or_insert(0) += count;
        }
    }

    pub fn verbs(&self) -> &Vocab {
        &self.verbs
    }

    pub fn nouns(&self) -> &Vocab {
        &self.nouns
    }

    pub fn count(&self, verb: u32, noun: u32) -> u64 {
        self.counts.get(&(verb, noun)).copied().unwrap_or(0)
    }

    pub fn count_of(&self, verb: &str, noun: &str) -> u64 {
        match (self.verbs.get(verb), self.nouns.get(noun)) {
            (Some(v), Some(n)) => self.count(v, n),
            _ => 0,
        }
    }

    /// Nonzero cells in (verb, noun) ordinal order.
    pub fn cells(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        self.counts.iter().map(|(&(v, n), &c)| (v, n, c))
    }

    pub fn num_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn verb_totals(&self) -> Vec<u64> {
        let mut totals = vec![0; self.verbs.len()];
        for (&(v, _), &c) in &self.counts {
            totals[v as usize] += c;
        }
        totals
    }

    pub fn noun_totals(&self) -> Vec<u64> {
        let mut totals = vec![0; self.nouns.len()];
        for (&(_, n), &c) in &self.counts {
            totals[n as usize] += c;
        }
        totals
    }

    /// Per-noun verb counts, each list sorted by verb ordinal.
    pub fn by_noun(&self) -> Vec<Vec<(u32, u64)>> {
        let mut rows = vec![Vec::new(); self.nouns.len()];
        for (&(v, n), &c) in &self.counts {
            rows[n as usize].push((v, c));
        }
        rows
    }

    /// Drops vocabulary entries with no remaining counts and re-indexes in
    /// first-seen order over the cell ordering.
    pub fn compact(&self) -> PairCorpus {
        let mut out = PairCorpus::new();
        for (v, n, c) in self.cells() {
            out.add(self.verbs.symbol(v), self.nouns.symbol(n), c);
        }
        out
    }

    /// Count table keyed by strings, independent of ordinal assignment.
    pub fn to_string_map(&self) -> BTreeMap<(String, String), u64> {
        self.cells()
            .map(|(v, n, c)| {
                (
                    (
                        self.verbs.symbol(v).to_string(),
                        self.nouns.symbol(n).to_string(),
                    ),
                    c,
                )
            })
            .collect()
    }
}

/// Reads a pair file.
pub fn ingest_pairs<R: BufRead>(reader: R) -> Result<PairCorpus> {
    let mut corpus = PairCorpus::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |msg: &str| Error::Parse {
            line: lineno,
            msg: msg.to_string(),
        };
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err("expected verb<TAB>noun[<TAB>count]"));
        }
        let (verb, noun) = (fields[0], fields[1]);
        if verb.is_empty() || noun.is_empty() {
            return Err(parse_err("empty verb or noun field"));
        }
        let count = match fields.get(2) {
            None => 1,
            Some(raw) => {
                let value: i128 = raw
                    .parse()
                    .map_err(|_| parse_err(&format!("count {raw:?} is not an integer")))?;
                if value <= 0 {
                    return Err(Error::Range(format!(
                        "line {lineno}: count must be positive, got {value}"
                    )));
                }
                u64::try_from(value)
                    .map_err(|_| Error::Range(format!("line {lineno}: count {value} too large")))?
            }
        };
        corpus.add(verb, noun, count);
    }
    Ok(corpus)
}

/// Writes `corpus` as a pair file with explicit counts.
pub fn write_pairs<W: Write>(corpus: &PairCorpus, mut out: W) -> std::io::Result<()> {
    for (v, n, c) in corpus.cells() {
        writeln!(out, "{}\t{}\t{}", corpus.verbs.symbol(v), corpus.nouns.symbol(n), c)?;
    }
    Ok(())
}

/// Keeps the `k` nouns with the highest total count. Ties go to the
/// lexicographically smaller noun.
pub fn filter_top_nouns(corpus: &PairCorpus, k: usize) -> Result<PairCorpus> {
    if k == 0 {
        return Err(Error::Range("k must be at least 1".into()));
    }
    let totals = corpus.noun_totals();
    let mut order: Vec<u32> = (0..corpus.nouns.len() as u32)
        .filter(|&n| totals[n as usize] > 0)
        .collect();
    order.sort_by(|&a, &b| {
        totals[b as usize]
            .cmp(&totals[a as usize])
            .then_with(|| corpus.nouns.symbol(a).cmp(corpus.nouns.symbol(b)))
    });
    let keep: BTreeSet<u32> = order.into_iter().take(k).collect();
    let mut out = PairCorpus::new();
    for (v, n, c) in corpus.cells() {
        if keep.contains(&n) {
            out.add(corpus.verbs.symbol(v), corpus.nouns.symbol(n), c);
        }
    }
    Ok(out)
}

/// Token-level random split. Exactly `round(train_fraction * N)` tokens go to
/// the training side. Both halves keep the source vocabularies.
pub fn split_train_test(
    corpus: &PairCorpus,
    train_fraction: f64,
    seed: u64,
) -> Result<(PairCorpus, PairCorpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Range(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let total = corpus.total();
    if total < 2 {
        return Err(Error::InsufficientData(format!(
            "corpus has {total} tokens, need at least 2"
        )));
    }
    let total = usize::try_from(total)
        .map_err(|_| Error::Range("corpus too large to split".into()))?;
    let n_train = (train_fraction * total as f64).round() as usize;
    let mut rng = seeded_rng(seed);
    let mut picked = index::sample(&mut rng, total, n_train).into_vec();
    picked.sort_unstable();

    let mut train = corpus.empty_like();
    let mut test = corpus.empty_like();
    let mut cursor = 0usize;
    let mut start = 0usize;
    for (&(v, n), &c) in &corpus.counts {
        let end = start + c as usize;
        let mut in_train = 0u64;
        while cursor < picked.len() && picked[cursor] < end {
            in_train += 1;
            cursor += 1;
        }
        train.add_ids(v, n, in_train);
        test.add_ids(v, n, c - in_train);
        start = end;
    }
    Ok((train, test))
}

/// A set of (verb, noun) cells, by ordinal in some source corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeletionSet {
    pub pairs: BTreeSet<(u32, u32)>,
}

impl DeletionSet {
    /// Resolves string pairs against `corpus`; each must be a nonzero cell.
    pub fn resolve<'a, I>(corpus: &PairCorpus, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut out = BTreeSet::new();
        for (verb, noun) in pairs {
            match (corpus.verbs.get(verb), corpus.nouns.get(noun)) {
                (Some(v), Some(n)) if corpus.count(v, n) > 0 => {
                    out.insert((v, n));
                }
                _ => return Err(Error::NotFound(format!("pair ({verb}, {noun})"))),
            }
        }
        Ok(DeletionSet { pairs: out })
    }

    /// Reads `verb<TAB>noun` lines, resolved against `corpus`. Blank lines
    /// and `#` comments are skipped.
    pub fn read<R: BufRead>(corpus: &PairCorpus, reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                [v, n] | [v, n, _] => pairs.push((v.to_string(), n.to_string())),
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: "expected verb<TAB>noun".into(),
                    })
                }
            }
        }
        Self::resolve(corpus, pairs.iter().map(|(v, n)| (v.as_str(), n.as_str())))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn write<W: Write>(&self, corpus: &PairCorpus, mut out: W) -> std::io::Result<()> {
        for &(v, n) in &self.pairs {
            writeln!(out, "{}\t{}", corpus.verbs.symbol(v), corpus.nouns.symbol(n))?;
        }
        Ok(())
    }
}

/// Removes every occurrence of the listed cells.
pub fn delete_pairs(corpus: &PairCorpus, del: &DeletionSet) -> Result<PairCorpus> {
    let mut out = corpus.clone();
    for &(v, n) in &del.pairs {
        if out.counts.remove(&(v, n)).is_none() {
            let verb = corpus.verbs.symbols.get(v as usize).map_or("?", |s| s);
            let noun = corpus.nouns.symbols.get(n as usize).map_or("?", |s| s);
            return Err(Error::NotFound(format!("pair ({verb}, {noun})")));
        }
    }
    Ok(out)
}

/// Default arguments for [`select_decision_pairs`].
pub const DECISION_PAIR_COUNT: usize = 104;
pub const DECISION_MIN_VERB_FREQ: u64 = 500;
pub const DECISION_MAX_VERB_FREQ: u64 = 5000;

/// Uniformly samples `count` distinct cells whose verb total lies in
/// `[min_vf, max_vf]`.
pub fn select_decision_pairs(
    corpus: &PairCorpus,
    count: usize,
    min_vf: u64,
    max_vf: u64,
    seed: u64,
) -> Result<DeletionSet> {
    let verb_totals = corpus.verb_totals();
    let qualifying: Vec<(u32, u32)> = corpus
        .cells()
        .filter(|&(v, _, _)| (min_vf..=max_vf).contains(&verb_totals[v as usize]))
        .map(|(v, n, _)| (v, n))
        .collect();
    if qualifying.len() < count {
        return Err(Error::InsufficientData(format!(
            "{} cells have verb frequency in [{min_vf}, {max_vf}], {count} requested",
            qualifying.len()
        )));
    }
    let mut rng = seeded_rng(seed);
    let pairs = index::sample(&mut rng, qualifying.len(), count)
        .into_iter()
        .map(|i| qualifying[i])
        .collect();
    Ok(DeletionSet { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest_str(s: &str) -> Result<PairCorpus> {
        ingest_pairs(s.as_bytes())
    }

    #[test]
    fn ingest_counts_and_totals() {
        let c = ingest_str("fire\tgun\t2\nfire\tworker\t1\n").unwrap();
        assert_eq!(c.num_cells(), 2);
        assert_eq!(c.total(), 3);
        assert_eq!(c.count_of("fire", "gun"), 2);
    }

    #[test]
    fn ingest_accumulates_repeats() {
        let c = ingest_str("fire\tgun\nfire\tgun\n").unwrap();
        assert_eq!(c.count_of("fire", "gun"), 2);
        assert_eq!(c.num_cells(), 1);
    }

    #[test]
    fn ingest_skips_comments_and_blank_lines() {
        let c = ingest_str("# header\n\nfire\tgun\n").unwrap();
        assert_eq!(c.total(), 1);
    }

    #[test]
    fn ingest_rejects_space_separated() {
        match ingest_str("fire gun\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_reports_line_numbers() {
        match ingest_str("a\tb\n# c\nbroken\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_nonpositive_counts() {
        assert!(matches!(ingest_str("a\tb\t0\n"), Err(Error::Range(_))));
        assert!(matches!(ingest_str("a\tb\t-3\n"), Err(Error::Range(_))));
        assert!(matches!(ingest_str("a\tb\tx\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn vocab_first_seen_order() {
        let c = ingest_str("b\tx\na\ty\nb\tz\n").unwrap();
        assert_eq!(c.verbs().symbols(), &["b", "a"]);
        assert_eq!(c.nouns().symbols(), &["x", "y", "z"]);
    }

    #[test]
    fn top_nouns_strict_ordering() {
        let c = ingest_str("v\tx\t3\nv\ty\t1\nw\tx\t1\n").unwrap();
        let f = filter_top_nouns(&c, 1).unwrap();
        assert_eq!(f.nouns().symbols(), &["x"]);
        assert_eq!(f.total(), 4);
    }

    #[test]
    fn top_nouns_tie_break_is_lexicographic() {
        let c = ingest_str("v\ty\t2\nv\tx\t2\n").unwrap();
        let f = filter_top_nouns(&c, 1).unwrap();
        assert_eq!(f.nouns().symbols(), &["x"]);
    }

    #[test]
    fn top_nouns_identity_when_k_covers_all() {
        let c = ingest_str("v\ty\t2\nv\tx\t2\nw\tz\t5\n").unwrap();
        let f = filter_top_nouns(&c, 3).unwrap();
        assert_eq!(f.to_string_map(), c.to_string_map());
        assert!(filter_top_nouns(&c, 0).is_err());
    }

    #[test]
    fn split_exact_totals() {
        let mut c = PairCorpus::new();
        for i in 0..10 {
            c.add("v", &format!("n{i}"), 10);
        }
        let (train, test) = split_train_test(&c, 0.9, 7).unwrap();
        assert_eq!(train.total(), 90);
        assert_eq!(test.total(), 10);
    }

    #[test]
    fn split_single_cell() {
        let mut c = PairCorpus::new();
        c.add("v", "n", 10);
        let (train, test) = split_train_test(&c, 0.7, 1).unwrap();
        assert_eq!(train.count_of("v", "n"), 7);
        assert_eq!(test.count_of("v", "n"), 3);
    }

    #[test]
    fn split_is_deterministic() {
        let c = ingest_str("a\tx\t5\nb\tx\t3\nb\ty\t9\nc\tz\t4\n").unwrap();
        let a = split_train_test(&c, 0.5, 42).unwrap();
        let b = split_train_test(&c, 0.5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let c = ingest_str("a\tx\t5\n").unwrap();
        assert!(matches!(split_train_test(&c, 0.0, 1), Err(Error::Range(_))));
        assert!(matches!(split_train_test(&c, 1.0, 1), Err(Error::Range(_))));
        let tiny = ingest_str("a\tx\n").unwrap();
        assert!(split_train_test(&tiny, 0.5, 1).is_err());
    }

    #[test]
    fn delete_removes_cell() {
        let c = ingest_str("v\tn\t5\nw\tn\t2\n").unwrap();
        let del = DeletionSet::resolve(&c, [("v", "n")]).unwrap();
        let d = delete_pairs(&c, &del).unwrap();
        assert_eq!(d.count_of("v", "n"), 0);
        assert_eq!(d.total(), 2);
        assert_eq!(delete_pairs(&c, &DeletionSet::default()).unwrap(), c);
    }

    #[test]
    fn delete_absent_pair_is_not_found() {
        let c = ingest_str("v\tn\t5\nw\tm\t2\n").unwrap();
        assert!(matches!(
            DeletionSet::resolve(&c, [("v", "m")]),
            Err(Error::NotFound(_))
        ));
        let mut del = DeletionSet::default();
        del.pairs.insert((0, 1));
        assert!(matches!(delete_pairs(&c, &del), Err(Error::NotFound(_))));
    }

    #[test]
    fn decision_pairs_forced_choice() {
        let c = ingest_str("v\ta\t600\nw\ta\t10\nw\tb\t10\n").unwrap();
        let del = select_decision_pairs(&c, 1, 500, 5000, 3).unwrap();
        let &(v, _) = del.pairs.iter().next().unwrap();
        assert_eq!(c.verbs().symbol(v), "v");
    }

    #[test]
    fn decision_pairs_insufficient() {
        let c = ingest_str("v\ta\t600\nw\ta\t10\n").unwrap();
        assert!(matches!(
            select_decision_pairs(&c, 2, 500, 5000, 3),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn decision_pair_defaults() {
        assert_eq!(DECISION_PAIR_COUNT, 104);
        assert_eq!((DECISION_MIN_VERB_FREQ, DECISION_MAX_VERB_FREQ), (500, 5000));
    }
}
