//! Plain-text model files.
//!
//! ```text
//! #DCM 1
//! META 3
//! beta<TAB>β
//! noun_prior<TAB>name
//! clusters<TAB>K
//! VERBS V            one symbol per line
//! NOUNS N            one symbol per line, membership row order
//! PRIORS K           id<TAB>p(c)
//! CENTROID id S      verb ordinal<TAB>p(v|c), S lines, once per cluster
//! MEMBERSHIPS N      K values per line
//! DISTORTIONS N      K values per line, `inf` allowed
//! HIERARCHY H        id<TAB>parent or -<TAB>birth β
//! ```
//!
//! Reals use the shortest decimal that parses back to the same binary value,
//! so save, load, save is byte-identical.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::classmodel::ClassModel;
use crate::corpus::Vocab;
use crate::engine::{HierarchyNode, Matrix};
use crate::error::{Error, Result};
use crate::simplex::{Distribution, MASS_TOL};

pub const MAGIC: &str = "#DCM 1";

fn join(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(f64::to_string).collect();
    cells.join("\t")
}

pub fn to_string(model: &ClassModel) -> String {
    let mut s = String::new();
    let k = model.num_clusters();
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "META 3").unwrap();
    writeln!(s, "beta\t{}", model.beta).unwrap();
    writeln!(s, "noun_prior\t{}", model.noun_prior).unwrap();
    writeln!(s, "clusters\t{k}").unwrap();
    for (name, vocab) in [("VERBS", &model.verbs), ("NOUNS", &model.nouns)] {
        writeln!(s, "{name} {}", vocab.len()).unwrap();
        for sym in vocab.symbols() {
            writeln!(s, "{sym}").unwrap();
        }
    }
    writeln!(s, "PRIORS {k}").unwrap();
    for (id, p) in model.cluster_ids.iter().zip(&model.priors) {
        writeln!(s, "{id}\t{p}").unwrap();
    }
    for (id, c) in model.cluster_ids.iter().zip(&model.centroids) {
        writeln!(s, "CENTROID {id} {}", c.support_len()).unwrap();
        for &(v, p) in c.entries() {
            writeln!(s, "{v}\t{p}").unwrap();
        }
    }
    for (name, m) in [("MEMBERSHIPS", &model.memberships), ("DISTORTIONS", &model.distortions)] {
        writeln!(s, "{name} {}", m.rows()).unwrap();
        for r in 0..m.rows() {
            writeln!(s, "{}", join(m.row(r))).unwrap();
        }
    }
    writeln!(s, "HIERARCHY {}", model.hierarchy.len()).unwrap();
    for n in &model.hierarchy {
        let parent = n.parent.map_or_else(|| "-".to_string(), |p| p.to_string());
        writeln!(s, "{}\t{parent}\t{}", n.id, n.birth_beta).unwrap();
    }
    s
}

/// Writes through a temporary file in the target directory, then renames.
pub fn save(model: &ClassModel, path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(to_string(model).as_bytes())
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ClassModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    section: String,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(&self.section, msg)
    }

    fn next(&mut self) -> Result<&'a str> {
        self.inner.next().ok_or_else(|| self.err("unexpected end of file"))
    }

    /// Reads a `NAME args...` header and returns the arguments.
    fn header(&mut self, name: &str) -> Result<Vec<&'a str>> {
        self.section = name.to_string();
        let line = self.next()?;
        let mut parts = line.split(' ');
        if parts.next() != Some(name) {
            return Err(self.err(format!("expected section header, got {line:?}")));
        }
        Ok(parts.collect())
    }

    fn counted(&mut self, name: &str) -> Result<usize> {
        let args = self.header(name)?;
        match args.as_slice() {
            [n] => self.num(n),
            _ => Err(self.err("expected a line count")),
        }
    }

    fn num<T: FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad number {s:?}")))
    }

    fn fields(&mut self, n: usize) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != n {
            return Err(self.err(format!("expected {n} fields, got {}", f.len())));
        }
        Ok(f)
    }

    fn vocab(&mut self, name: &str) -> Result<Vocab> {
        let n = self.counted(name)?;
        let syms: Vec<&str> = (0..n).map(|_| self.next()).collect::<Result<_>>()?;
        Vocab::from_symbols(syms).map_err(|e| self.err(e.to_string()))
    }

    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        if self.counted(name)? != rows {
            return Err(self.err(format!("expected {rows} rows")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            for f in self.fields(cols)? {
                data.push(self.num::<f64>(f)?);
            }
        }
        Ok(Matrix::from_rows(rows, cols, data))
    }
}

pub fn parse(text: &str) -> Result<ClassModel> {
    let mut l = Lines {
        inner: text.lines(),
        section: "header".into(),
    };
    if l.next()? != MAGIC {
        return Err(l.err(format!("missing {MAGIC:?} line")));
    }

    if l.counted("META")? != 3 {
        return Err(l.err("expected 3 entries"));
    }
    let mut meta = Vec::new();
    for key in ["beta", "noun_prior", "clusters"] {
        let f = l.fields(2)?;
        if f[0] != key {
            return Err(l.err(format!("expected key {key:?}, got {:?}", f[0])));
        }
        meta.push(f[1]);
    }
    let beta: f64 = l.num(meta[0])?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(l.err(format!("beta must be positive, got {beta}")));
    }
    let noun_prior = meta[1].to_string();
    let k: usize = l.num(meta[2])?;
    if k == 0 {
        return Err(l.err("no clusters"));
    }

    let verbs = l.vocab("VERBS")?;
    let nouns = l.vocab("NOUNS")?;

    if l.counted("PRIORS")? != k {
        return Err(l.err(format!("expected {k} priors")));
    }
    let mut cluster_ids = Vec::with_capacity(k);
    let mut priors = Vec::with_capacity(k);
    for _ in 0..k {
        let f = l.fields(2)?;
        cluster_ids.push(l.num::<usize>(f[0])?);
        priors.push(l.num::<f64>(f[1])?);
    }
    if priors.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err(l.err("priors must lie in (0, 1]"));
    }
    if (priors.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
        return Err(l.err("priors do not sum to 1"));
    }
    let mut sorted = cluster_ids.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != k {
        return Err(l.err("duplicate cluster id"));
    }

    let mut centroids = Vec::with_capacity(k);
    for &id in &cluster_ids {
        let args = l.header("CENTROID")?;
        let [got, n] = args.as_slice() else {
            return Err(l.err("expected id and entry count"));
        };
        l.section = format!("CENTROID {got}");
        if l.num::<usize>(got)? != id {
            return Err(l.err(format!("expected cluster {id}")));
        }
        let n: usize = l.num(n)?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let f = l.fields(2)?;
            entries.push((l.num::<u32>(f[0])?, l.num::<f64>(f[1])?));
        }
        centroids.push(Distribution::from_sparse(verbs.len(), entries).map_err(|e| l.err(e.to_string()))?);
    }

    let memberships = l.matrix("MEMBERSHIPS", nouns.len(), k)?;
    for r in 0..memberships.rows() {
        let row = memberships.row(r);
        if row.iter().any(|&q| !(0.0..=1.0).contains(&q)) || (row.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
            return Err(l.err(format!("row {} is not a distribution", r + 1)));
        }
    }
    let distortions = l.matrix("DISTORTIONS", nouns.len(), k)?;
    if distortions.as_slice().iter().any(|&d| !(d >= 0.0)) {
        return Err(l.err("distortions must be nonnegative"));
    }

    let h = l.counted("HIERARCHY")?;
    let mut hierarchy: Vec<HierarchyNode> = Vec::with_capacity(h);
    for _ in 0..h {
        let f = l.fields(3)?;
        let id = l.num::<usize>(f[0])?;
        let parent = match f[1] {
            "-" => None,
            p => Some(l.num::<usize>(p)?),
        };
        if parent.is_some_and(|p| !hierarchy.iter().any(|n| n.id == p)) {
            return Err(l.err(format!("node {id} precedes its parent")));
        }
        if hierarchy.iter().any(|n| n.id == id) {
            return Err(l.err(format!("duplicate node {id}")));
        }
        hierarchy.push(HierarchyNode {
            id,
            parent,
            birth_beta: l.num(f[2])?,
        });
    }
    if !hierarchy.is_empty() && !cluster_ids.iter().all(|c| hierarchy.iter().any(|n| n.id == *c)) {
        return Err(l.err("cluster missing from hierarchy"));
    }

    l.section = "trailer".into();
    if let Some(extra) = l.inner.find(|s| !s.is_empty()) {
        return Err(l.err(format!("unexpected line {extra:?}")));
    }

    Ok(ClassModel {
        beta,
        verbs,
        nouns,
        cluster_ids,
        priors,
        centroids,
        memberships,
        distortions,
        hierarchy,
        noun_prior,
    })
}
