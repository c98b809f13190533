//! Binary influence-sample matrices.
//!
//! Sample `t` is a column: the set of nodes that reach the sample's target in
//! one realization. Columns are stored as packed bitsets.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfluenceSampleMatrix {
    n: usize,
    m: usize,
    words: usize,
    bits: Vec<u64>,
}

impl InfluenceSampleMatrix {
    /// An `n`-row matrix with no samples.
    pub fn new(n: usize) -> Self {
        InfluenceSampleMatrix {
            n,
            m: 0,
            words: n.div_ceil(64),
            bits: Vec::new(),
        }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        let words = n.div_ceil(64);
        InfluenceSampleMatrix {
            n,
            m,
            words,
            bits: vec![0; words * m],
        }
    }

    /// Build from columns given as node lists.
    pub fn from_columns<C: AsRef<[usize]>>(n: usize, columns: &[C]) -> Result<Self> {
        let mut x = Self::new(n);
        for c in columns {
            x.push_column(c.as_ref())?;
        }
        Ok(x)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn push_column(&mut self, nodes: &[usize]) -> Result<()> {
        let start = self.bits.len();
        self.bits.resize(start + self.words, 0);
        for &v in nodes {
            if v >= self.n {
                self.bits.truncate(start);
                return Err(Error::param(format!("node {v} out of range for n = {}", self.n)));
            }
            self.bits[start + v / 64] |= 1 << (v % 64);
        }
        self.m += 1;
        Ok(())
    }

    pub(crate) fn push_words(&mut self, words: &[u64]) {
        debug_assert_eq!(words.len(), self.words);
        self.bits.extend_from_slice(words);
        self.m += 1;
    }

    /// Packed bits of column `t`.
    pub fn column(&self, t: usize) -> &[u64] {
        &self.bits[t * self.words..(t + 1) * self.words]
    }

    pub(crate) fn column_mut(&mut self, t: usize) -> &mut [u64] {
        &mut self.bits[t * self.words..(t + 1) * self.words]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[u64]> {
        (0..self.m).map(move |t| self.column(t))
    }

    pub fn get(&self, v: usize, t: usize) -> bool {
        self.column(t)[v / 64] >> (v % 64) & 1 == 1
    }

    pub fn set(&mut self, v: usize, t: usize, value: bool) {
        let w = &mut self.column_mut(t)[v / 64];
        if value {
            *w |= 1 << (v % 64);
        } else {
            *w &= !(1 << (v % 64));
        }
    }

    pub fn flip(&mut self, v: usize, t: usize) {
        self.column_mut(t)[v / 64] ^= 1 << (v % 64);
    }

    /// Sorted node ids of column `t`.
    pub fn column_nodes(&self, t: usize) -> Vec<usize> {
        ones(self.column(t)).collect()
    }

    pub fn column_len(&self, t: usize) -> usize {
        self.column(t).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of set entries in the whole matrix.
    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Serialise in the line format: header `# n=<n> m=<m>`, then one line per
    /// sample with its sorted node ids separated by spaces.
    pub fn to_text(&self) -> String {
        let mut s = format!("# n={} m={}\n", self.n, self.m);
        for t in 0..self.m {
            let mut first = true;
            for v in ones(self.column(t)) {
                if !first {
                    s.push(' ');
                }
                first = false;
                write!(s, "{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (n, m) = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((i, l)) => {
                    break parse_header(l).ok_or_else(|| Error::Parse {
                        line: i + 1,
                        msg: "expected header \"# n=<n> m=<m>\"".into(),
                    })?
                }
                None => {
                    return Err(Error::Parse {
                        line: 1,
                        msg: "missing header".into(),
                    })
                }
            }
        };
        let mut x = Self::new(n);
        for (i, line) in lines {
            if x.m == m {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("more than m = {m} samples"),
                });
            }
            let nodes = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("invalid node id {tok:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            x.push_column(&nodes).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        if x.m != m {
            return Err(Error::Parse {
                line: text.lines().count(),
                msg: format!("header declares m = {m} but found {} samples", x.m),
            });
        }
        Ok(x)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&s)
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.trim().strip_prefix('#')?;
    let mut n = None;
    let mut m = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("n=") {
            n = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("m=") {
            m = v.parse().ok();
        }
    }
    Some((n?, m?))
}

/// Indices of set bits in a packed bitset, ascending.
pub(crate) fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(i, &w)| {
        let mut w = w;
        std::iter::from_fn(move || {
            if w == 0 {
                None
            } else {
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(i * 64 + b)
            }
        })
    })
}
