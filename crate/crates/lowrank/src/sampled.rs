//! Sparse symmetric storage for the observed entries of a PSD matrix.
//!
//! The observation set contains only off-diagonal positions and is
//! symmetric: `(i, j)` is observed iff `(j, i)` is. Each unordered pair is
//! recorded once on input and mirrored into a compressed-row layout over
//! the symmetric expansion, so row-wise iteration sees both orientations.
//!
//! Triplet text format: first line `n nnz_pairs`, then `nnz_pairs` lines
//! `i j value` with 0-based `i < j` and the value in scientific notation
//! with 17 significant digits (bit-exact round trip). Lines starting with
//! `#` are comments.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Symmetric sparse matrix holding the sampled off-diagonal entries.
///
/// There is intentionally no constructor from a dense matrix: every build
/// path goes through an explicit pair list, keeping memory proportional to
/// the number of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledMatrix {
    n: usize,
    /// Sampling probability used when the observation set was generated.
    p_nominal: f64,
    /// Row offsets over the symmetric expansion, length `n + 1`.
    row_ptr: Vec<usize>,
    /// Column indices of the symmetric expansion, sorted within each row.
    col_idx: Vec<usize>,
    /// Entry values aligned with `col_idx`.
    values: Vec<f64>,
}

impl SampledMatrix {
    /// Builds the store from unordered pairs `(i, j, value)` with `i != j`.
    ///
    /// Pairs may arrive in any order and orientation; duplicates (in either
    /// orientation) are rejected.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize, f64)], p_nominal: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("matrix dimension must be at least 1"));
        }
        if !(0.0..=1.0).contains(&p_nominal) {
            return Err(Error::invalid(format!(
                "nominal sampling probability {p_nominal} outside [0, 1]"
            )));
        }
        let mut degree = vec![0usize; n];
        for &(i, j, v) in pairs {
            if i == j {
                return Err(Error::invalid(format!(
                    "diagonal entry ({i}, {j}) not allowed"
                )));
            }
            if i >= n || j >= n {
                return Err(Error::invalid(format!(
                    "index ({i}, {j}) out of range for n={n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite value at ({i}, {j})")));
            }
            degree[i] += 1;
            degree[j] += 1;
        }

        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + degree[i];
        }
        let nnz = row_ptr[n];
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![0.0f64; nnz];
        let mut cursor = row_ptr[..n].to_vec();
        for &(i, j, v) in pairs {
            col_idx[cursor[i]] = j;
            values[cursor[i]] = v;
            cursor[i] += 1;
            col_idx[cursor[j]] = i;
            values[cursor[j]] = v;
            cursor[j] += 1;
        }

        // Sort each row by column index; detect duplicates while at it.
        for i in 0..n {
            let lo = row_ptr[i];
            let hi = row_ptr[i + 1];
            let mut perm: Vec<usize> = (lo..hi).collect();
            perm.sort_unstable_by_key(|&k| col_idx[k]);
            let sorted_cols: Vec<usize> = perm.iter().map(|&k| col_idx[k]).collect();
            let sorted_vals: Vec<f64> = perm.iter().map(|&k| values[k]).collect();
            for w in sorted_cols.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::invalid(format!(
                        "duplicate pair ({}, {}) in input",
                        i.min(w[0]),
                        i.max(w[0])
                    )));
                }
            }
            col_idx[lo..hi].copy_from_slice(&sorted_cols);
            values[lo..hi].copy_from_slice(&sorted_vals);
        }

        Ok(SampledMatrix {
            n,
            p_nominal,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_nominal(&self) -> f64 {
        self.p_nominal
    }

    /// Number of unordered observed pairs.
    pub fn nnz_pairs(&self) -> usize {
        debug_assert!(self.values.len().is_multiple_of(2));
        self.values.len() / 2
    }

    /// Number of stored entries in the symmetric expansion (`2 * nnz_pairs`).
    pub fn nnz_directed(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Neighbors of row `i` with their values, both orientations mirrored.
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// Iterates over each unordered pair once, `i < j`, sorted.
    pub fn iter_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.row_entries(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, v)| (i, j, v))
        })
    }

    /// Iterates over every stored entry of the symmetric expansion.
    pub fn iter_directed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row_entries(i).map(move |(j, v)| (i, j, v)))
    }

    /// Largest absolute observed value; `None` when nothing was sampled.
    pub fn max_abs_value(&self) -> Option<f64> {
        self.values.iter().map(|v| v.abs()).fold(None, |acc, v| {
            Some(match acc {
                None => v,
                Some(a) => a.max(v),
            })
        })
    }

    /// Sparse matvec `y = P_Ω(M) v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::dim(format!(
                "vector length {} does not match n={}",
                v.len(),
                self.n
            )));
        }
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, val) in self.row_entries(i) {
                acc += val * v[j];
            }
            *yi = acc;
        }
        Ok(y)
    }

    /// Numeric entries held by this structure: values and column indices of
    /// the symmetric expansion plus `n + 1` row offsets.
    pub fn storage_entries(&self) -> usize {
        2 * self.values.len() + self.n + 1
    }
}

/// Storage accounting for one solve: entries for the sparse sample and for
/// an `n x r` factor.
pub fn memory_footprint(m: &SampledMatrix, r: usize) -> (usize, usize) {
    (m.storage_entries(), m.n() * r)
}

/// Writes `m` in the triplet text format.
pub fn save_sampled(m: &SampledMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{} {}", m.n(), m.nnz_pairs())?;
        writeln!(w, "# p_nominal {:.16e}", m.p_nominal())?;
        for (i, j, v) in m.iter_pairs() {
            writeln!(w, "{i} {j} {v:.16e}")?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Reads a triplet file back into a [`SampledMatrix`].
///
/// The `# p_nominal <value>` comment emitted by [`save_sampled`] is honored
/// when present; other comments are skipped.
pub fn load_sampled(path: impl AsRef<Path>) -> Result<SampledMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut header: Option<(usize, usize)> = None;
    let mut p_nominal = 0.0f64;
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            if it.next() == Some("p_nominal") {
                if let Some(tok) = it.next() {
                    p_nominal = tok.parse().map_err(|_| {
                        Error::parse(path, lineno, format!("invalid p_nominal {tok:?}"))
                    })?;
                }
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match header {
            None => {
                if fields.len() != 2 {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("header needs `n nnz_pairs`, found {} tokens", fields.len()),
                    ));
                }
                let n: usize = fields[0].parse().map_err(|_| {
                    Error::parse(path, lineno, format!("invalid dimension {:?}", fields[0]))
                })?;
                let nnz: usize = fields[1].parse().map_err(|_| {
                    Error::parse(path, lineno, format!("invalid pair count {:?}", fields[1]))
                })?;
                header = Some((n, nnz));
                pairs.reserve(nnz);
            }
            Some((n, _)) => {
                if fields.len() != 3 {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("triplet needs `i j value`, found {} tokens", fields.len()),
                    ));
                }
                let i: usize = fields[0].parse().map_err(|_| {
                    Error::parse(path, lineno, format!("invalid row index {:?}", fields[0]))
                })?;
                let j: usize = fields[1].parse().map_err(|_| {
                    Error::parse(
                        path,
                        lineno,
                        format!("invalid column index {:?}", fields[1]),
                    )
                })?;
                let v: f64 = fields[2].parse().map_err(|_| {
                    Error::parse(path, lineno, format!("invalid value {:?}", fields[2]))
                })?;
                if i == j {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("diagonal entry ({i}, {j})"),
                    ));
                }
                if i >= j {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("triplet must satisfy i < j, found ({i}, {j})"),
                    ));
                }
                if j >= n {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("index ({i}, {j}) out of range for n={n}"),
                    ));
                }
                pairs.push((i, j, v));
            }
        }
    }

    let (n, nnz) = header.ok_or_else(|| Error::parse(path, 1, "missing header line"))?;
    if pairs.len() != nnz {
        return Err(Error::parse(
            path,
            0,
            format!(
                "header promised {} pairs, file contains {}",
                nnz,
                pairs.len()
            ),
        ));
    }
    SampledMatrix::from_pairs(n, &pairs, p_nominal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_matrix_saves_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        let m = SampledMatrix::from_pairs(5, &[], 0.0).unwrap();
        save_sampled(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let data_lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data_lines, vec!["5 0"]);
    }

    #[test]
    fn single_pair_triplet() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.txt");
        let m = SampledMatrix::from_pairs(3, &[(0, 1, 2.5)], 0.5).unwrap();
        save_sampled(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut data_lines = text.lines().filter(|l| !l.starts_with('#'));
        assert_eq!(data_lines.next(), Some("3 1"));
        let triplet = data_lines.next().unwrap();
        let fields: Vec<&str> = triplet.split_whitespace().collect();
        assert_eq!(fields[0], "0");
        assert_eq!(fields[1], "1");
        assert_eq!(fields[2].parse::<f64>().unwrap(), 2.5);
    }

    #[test]
    fn load_simple_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.txt");
        std::fs::write(&path, "3 1\n0 1 2.5\n").unwrap();
        let m = load_sampled(&path).unwrap();
        assert_eq!(m.n(), 3);
        let pairs: Vec<_> = m.iter_pairs().collect();
        assert_eq!(pairs, vec![(0, 1, 2.5)]);
        // both orientations visible in row iteration
        assert_eq!(m.row_entries(1).collect::<Vec<_>>(), vec![(0, 2.5)]);
    }

    #[test]
    fn load_rejects_diagonal_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "3 1\n2 2 1.0\n").unwrap();
        match load_sampled(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad2.txt");
        std::fs::write(&path, "3 1\n0 3 1.0\n").unwrap();
        assert!(load_sampled(&path).is_err());
    }

    #[test]
    fn constructor_rejects_duplicates() {
        assert!(SampledMatrix::from_pairs(3, &[(0, 1, 1.0), (1, 0, 2.0)], 0.5).is_err());
    }

    #[test]
    fn footprint_counts() {
        let m = SampledMatrix::from_pairs(100, &[], 0.0).unwrap();
        assert_eq!(memory_footprint(&m, 5), (101, 500));
    }

    #[test]
    fn footprint_matches_csr_accounting() {
        // With |pairs| = n^2 p / 2 unordered pairs the symmetric CSR stores
        // n^2 p values plus n^2 p column indices plus n + 1 offsets.
        let n = 40;
        let p = 0.1;
        let target = ((n * n) as f64 * p / 2.0).round() as usize;
        let mut pairs = Vec::new();
        'outer: for i in 0..n {
            for j in (i + 1)..n {
                if pairs.len() == target {
                    break 'outer;
                }
                pairs.push((i, j, 1.0));
            }
        }
        let m = SampledMatrix::from_pairs(n, &pairs, p).unwrap();
        let (sparse, factor) = memory_footprint(&m, 3);
        let expected = (2.0 * (n * n) as f64 * p) as usize + n + 1;
        assert_eq!(sparse, expected);
        assert_eq!(sparse, 2 * m.nnz_directed() + n + 1);
        assert_eq!(factor, n * 3);
    }

    #[test]
    fn symmetry_of_iteration() {
        let m = SampledMatrix::from_pairs(4, &[(0, 2, 1.5), (1, 3, -0.5)], 0.5).unwrap();
        for (i, j, v) in m.iter_directed() {
            let mirrored = m
                .row_entries(j)
                .find(|&(col, _)| col == i)
                .map(|(_, val)| val);
            assert_eq!(mirrored, Some(v));
        }
    }

    fn arb_sampled() -> impl Strategy<Value = SampledMatrix> {
        (2usize..20, any::<u64>()).prop_map(|(n, seed)| {
            // cheap deterministic pseudo-random instance
            let mut state = seed | 1;
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                state
            };
            let mut pairs = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if next() % 100 < 30 {
                        let v = (next() % 2000) as f64 / 100.0 - 10.0;
                        pairs.push((i, j, v));
                    }
                }
            }
            SampledMatrix::from_pairs(n, &pairs, 0.3).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn roundtrip_is_identity(m in arb_sampled()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.txt");
            save_sampled(&m, &path).unwrap();
            let back = load_sampled(&path).unwrap();
            prop_assert_eq!(m, back);
        }
    }

    #[test]
    fn roundtrip_random_instance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.3 {
                    pairs.push((i, j, rng.random::<f64>() * 20.0 - 10.0));
                }
            }
        }
        let m = SampledMatrix::from_pairs(n, &pairs, 0.3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt50.txt");
        save_sampled(&m, &path).unwrap();
        let back = load_sampled(&path).unwrap();
        assert_eq!(
            m.iter_pairs().collect::<Vec<_>>(),
            back.iter_pairs().collect::<Vec<_>>()
        );
    }
}
