//! Windowed co-occurrence counting and the empirical conditional /
//! context-marginal distributions derived from it.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{TokenStream, Vocabulary};
use crate::{Error, Result};

/// Sparse symmetric co-occurrence matrix for a ±h token window.
///
/// Rows are sorted by context id. The matrix is immutable once counted and
/// safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoocMatrix {
    h: u32,
    rows: Vec<Vec<(u32, u32)>>,
    row_sums: Vec<u64>,
}

impl CoocMatrix {
    /// Assemble a matrix from explicit `(row, col, count)` entries. Entries
    /// may arrive in any order but must not repeat a `(row, col)` cell.
    pub fn from_entries(
        h: u32,
        vocab_size: usize,
        entries: impl IntoIterator<Item = (u32, u32, u32)>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, u32)>> = vec![Vec::new(); vocab_size];
        for (r, c, n) in entries {
            if r as usize >= vocab_size || c as usize >= vocab_size {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r},{c}) outside vocabulary of size {vocab_size}"
                )));
            }
            if n > 0 {
                rows[r as usize].push((c, n));
            }
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidArgument("duplicate (row, col) entry".into()));
            }
        }
        let row_sums = rows
            .iter()
            .map(|row| row.iter().map(|&(_, n)| n as u64).sum())
            .collect();
        Ok(CoocMatrix { h, rows, row_sums })
    }

    pub fn window(&self) -> u32 {
        self.h
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.len()
    }

    /// Sparse row n_{w,·}, sorted by context id.
    pub fn row(&self, w: u32) -> &[(u32, u32)] {
        &self.rows[w as usize]
    }

    pub fn row_sum(&self, w: u32) -> u64 {
        self.row_sums[w as usize]
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    /// Grand total Σ_{w,w'} n_{w,w'}.
    pub fn total(&self) -> u64 {
        self.row_sums.iter().sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Serialize as a `#h= #V= #total=` header followed by TSV triples
    /// `row<TAB>col<TAB>count` sorted by (row, col).
    pub fn write_tsv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(
            w,
            "#h={} #V={} #total={}",
            self.h,
            self.rows.len(),
            self.total()
        )?;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, n) in row {
                writeln!(w, "{r}\t{c}\t{n}")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_tsv(std::fs::File::create(path)?)
    }

    pub fn read_tsv<R: Read>(r: R, origin: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))??;
        let mut h = None;
        let mut v = None;
        let mut total = None;
        for field in header.split_whitespace() {
            if let Some(x) = field.strip_prefix("#h=") {
                h = x.parse::<u32>().ok();
            } else if let Some(x) = field.strip_prefix("#V=") {
                v = x.parse::<usize>().ok();
            } else if let Some(x) = field.strip_prefix("#total=") {
                total = x.parse::<u64>().ok();
            }
        }
        let (h, v, total) = match (h, v, total) {
            (Some(h), Some(v), Some(t)) => (h, v, t),
            _ => return Err(parse_err(1, format!("bad header: {header:?}"))),
        };
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut it = line.split('\t');
            let bad = || parse_err(i + 2, format!("expected row<TAB>col<TAB>count: {line:?}"));
            let r: u32 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let c: u32 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let n: u32 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            entries.push((r, c, n));
        }
        let matrix = Self::from_entries(h, v, entries)?;
        if matrix.total() != total {
            return Err(parse_err(
                1,
                format!(
                    "header says total={total} but entries sum to {}",
                    matrix.total()
                ),
            ));
        }
        Ok(matrix)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        Self::read_tsv(std::fs::File::open(path)?, &path.display().to_string())
    }
}

/// Count co-occurrences within a clipped ±h window around every position.
///
/// Counting is parallel over corpus chunks: each chunk owns the adjacencies
/// whose left endpoint falls inside it (right neighbors may peek past the
/// chunk edge), so every unordered adjacency is counted exactly once and the
/// merged result is independent of chunking.
pub fn count_cooccurrences(
    stream: &TokenStream,
    vocab: &Vocabulary,
    h: u32,
) -> Result<CoocMatrix> {
    if h == 0 {
        return Err(Error::InvalidArgument("window h must be ≥ 1".into()));
    }
    let v = vocab.len();
    if let Some(&bad) = stream.tokens.iter().find(|&&t| t as usize >= v) {
        return Err(Error::InvalidArgument(format!(
            "token id {bad} outside vocabulary of size {v}"
        )));
    }
    let n = stream.tokens.len();
    let tokens = &stream.tokens;
    let chunk = 1 << 18;
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();

    // Per chunk: canonical (min,max) keys for each adjacency, sorted and
    // run-length encoded.
    let chunked: Vec<Vec<(u64, u32)>> = starts
        .into_par_iter()
        .map(|start| {
            let end = (start + chunk).min(n);
            let mut keys: Vec<u64> = Vec::with_capacity((end - start) * h as usize);
            for i in start..end {
                let a = tokens[i];
                let hi = (i + h as usize).min(n - 1);
                for &b in &tokens[i + 1..=hi] {
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    keys.push((lo as u64) << 32 | hi as u64);
                }
            }
            keys.sort_unstable();
            let mut agg: Vec<(u64, u32)> = Vec::new();
            for k in keys {
                match agg.last_mut() {
                    Some(last) if last.0 == k => last.1 += 1,
                    _ => agg.push((k, 1)),
                }
            }
            agg
        })
        .collect();

    // Merge chunks: sort the concatenation and accumulate runs.
    let mut merged: Vec<(u64, u32)> = chunked.into_iter().flatten().collect();
    merged.sort_unstable_by_key(|&(k, _)| k);
    let mut canonical: Vec<(u64, u64)> = Vec::new();
    for (k, c) in merged {
        match canonical.last_mut() {
            Some(last) if last.0 == k => last.1 += c as u64,
            _ => canonical.push((k, c as u64)),
        }
    }

    // Expand canonical pairs into the symmetric matrix. An (a,b) adjacency
    // contributes to both rows; an (a,a) adjacency contributes 2 to its cell.
    let mut row_len = vec![0usize; v];
    for &(k, _) in &canonical {
        let a = (k >> 32) as usize;
        let b = (k & 0xffff_ffff) as usize;
        row_len[a] += 1;
        if a != b {
            row_len[b] += 1;
        }
    }
    let mut rows: Vec<Vec<(u32, u32)>> = row_len
        .iter()
        .map(|&len| Vec::with_capacity(len))
        .collect();
    let downcast = |c: u64| -> Result<u32> {
        u32::try_from(c).map_err(|_| Error::Numerical("co-occurrence count exceeds u32".into()))
    };
    for &(k, c) in &canonical {
        let a = (k >> 32) as u32;
        let b = (k & 0xffff_ffff) as u32;
        if a == b {
            rows[a as usize].push((a, downcast(c * 2)?));
        } else {
            rows[a as usize].push((b, downcast(c)?));
            rows[b as usize].push((a, downcast(c)?));
        }
    }
    // Canonical keys are visited in ascending (a,b) order, so row `a` gets
    // its high-id half sorted; the `b` pushes arrive in ascending a as well,
    // but interleaved — sort each row to restore the invariant.
    rows.par_iter_mut()
        .for_each(|row| row.sort_unstable_by_key(|&(c, _)| c));
    let row_sums: Vec<u64> = rows
        .iter()
        .map(|row| row.iter().map(|&(_, n)| n as u64).sum())
        .collect();
    Ok(CoocMatrix { h, rows, row_sums })
}

/// Empirical conditional p(·|w) = n_{w,·} / Σ n_{w,·} as a sparse vector
/// sorted by context id.
pub fn conditional_distribution(cooc: &CoocMatrix, w: u32) -> Result<Vec<(u32, f64)>> {
    let sum = cooc.row_sum(w);
    if sum == 0 {
        return Err(Error::ZeroSupport {
            word: format!("id {w}"),
        });
    }
    let sum = sum as f64;
    Ok(cooc
        .row(w)
        .iter()
        .map(|&(c, n)| (c, n as f64 / sum))
        .collect())
}

/// Frequency-weighted average of the conditionals: the exact count-level
/// marginal q(w') = Σ_w n_{w,w'} / Σ_{w,w''} n_{w,w''}.
pub fn context_marginal(cooc: &CoocMatrix) -> Result<Vec<f64>> {
    let total = cooc.total();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "context marginal of an all-zero matrix".into(),
        ));
    }
    let mut col = vec![0u64; cooc.vocab_size()];
    for w in 0..cooc.vocab_size() {
        for &(c, n) in cooc.row(w as u32) {
            col[c as usize] += n as u64;
        }
    }
    Ok(col.iter().map(|&c| c as f64 / total as f64).collect())
}
