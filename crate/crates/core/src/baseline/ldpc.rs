//! Binary LDPC codes: Gallager construction, systematic-by-elimination
//! encoding and sum-product belief-propagation decoding.
//!
//! LLRs are `ln P(bit = 0) / P(bit = 1)`.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    n: usize,
    /// Variable indices of every parity check.
    checks: Vec<Vec<usize>>,
    /// Check indices of every variable.
    vars: Vec<Vec<usize>>,
    /// Codeword positions carrying information bits.
    info_cols: Vec<usize>,
    /// `(pivot column, dense row)` of the reduced parity-check matrix.
    pivots: Vec<(usize, Vec<u64>)>,
}

const LLR_CLAMP: f64 = 50.0;

fn get(row: &[u64], j: usize) -> bool {
    row[j / 64] >> (j % 64) & 1 == 1
}

impl LdpcCode {
    /// Regular Gallager code: `n * dv / dc` checks, the first band in natural
    /// order and the remaining `dv - 1` bands column-permuted from `seed`.
    /// Carries `n * (dc - dv) / dc` information bits.
    pub fn gallager(n: usize, dv: usize, dc: usize, seed: u64) -> Result<Self> {
        if dv == 0 || dc <= dv || n == 0 || n % dc != 0 {
            return Err(Error::config("Gallager code needs n divisible by dc and dc > dv > 0"));
        }
        let band = n / dc;
        let mut rng = stream(seed, &[tag::BASELINE, 0]);
        let mut checks = Vec::with_capacity(band * dv);
        let mut perm: Vec<usize> = (0..n).collect();
        for b in 0..dv {
            if b > 0 {
                perm.shuffle(&mut rng);
            }
            for i in 0..band {
                let mut row: Vec<usize> = perm[i * dc..(i + 1) * dc].to_vec();
                row.sort_unstable();
                checks.push(row);
            }
        }
        Self::build(n, checks, Some(n * (dc - dv) / dc))
    }

    /// Code with the given checks; all `n - rank` free positions carry
    /// information.
    pub fn from_checks(n: usize, checks: Vec<Vec<usize>>) -> Result<Self> {
        Self::build(n, checks, None)
    }

    fn build(n: usize, checks: Vec<Vec<usize>>, info: Option<usize>) -> Result<Self> {
        let words = n.div_ceil(64);
        let mut vars = vec![Vec::new(); n];
        let mut rows = Vec::with_capacity(checks.len());
        for (c, row) in checks.iter().enumerate() {
            let mut dense = vec![0u64; words];
            for &v in row {
                if v >= n || get(&dense, v) {
                    return Err(Error::config("parity check has an out-of-range or repeated variable"));
                }
                dense[v / 64] |= 1 << (v % 64);
                vars[v].push(c);
            }
            rows.push(dense);
        }
        if vars.iter().any(Vec::is_empty) {
            return Err(Error::config("every code bit must take part in a check"));
        }
        // Gauss-Jordan elimination over GF(2).
        let mut pivots: Vec<(usize, Vec<u64>)> = Vec::new();
        let mut is_pivot = vec![false; n];
        let mut r = 0;
        for col in 0..n {
            let Some(p) = (r..rows.len()).find(|&i| get(&rows[i], col)) else {
                continue;
            };
            rows.swap(r, p);
            let pivot = rows[r].clone();
            for (i, row) in rows.iter_mut().enumerate() {
                if i != r && get(row, col) {
                    row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
                }
            }
            is_pivot[col] = true;
            r += 1;
        }
        for row in rows.into_iter().take(r) {
            let col = (0..n).find(|&j| get(&row, j)).expect("pivot row is nonzero");
            pivots.push((col, row));
        }
        let free: Vec<usize> = (0..n).filter(|&j| !is_pivot[j]).collect();
        let k = info.unwrap_or(free.len());
        if k > free.len() || k == 0 {
            return Err(Error::config("parity checks leave too few information positions"));
        }
        Ok(LdpcCode {
            n,
            checks,
            vars,
            info_cols: free[..k].to_vec(),
            pivots,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn info_len(&self) -> usize {
        self.info_cols.len()
    }

    pub fn rate(&self) -> f64 {
        self.info_len() as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.info_len() {
            return Err(Error::Dimension {
                context: "LDPC information bits",
                expected: self.info_len(),
                actual: info.len(),
            });
        }
        let mut c = vec![0u8; self.n];
        for (&col, &b) in self.info_cols.iter().zip(info) {
            c[col] = b & 1;
        }
        for (col, row) in &self.pivots {
            let mut parity = 0;
            for (j, &bit) in c.iter().enumerate() {
                if j != *col && bit == 1 && get(row, j) {
                    parity ^= 1;
                }
            }
            c[*col] = parity;
        }
        Ok(c)
    }

    pub fn syndrome_ok(&self, word: &[u8]) -> bool {
        self.checks
            .iter()
            .all(|row| row.iter().fold(0u8, |acc, &v| acc ^ word[v]) == 0)
    }

    pub fn extract_info(&self, word: &[u8]) -> Vec<u8> {
        self.info_cols.iter().map(|&c| word[c]).collect()
    }

    /// Sum-product decoding. Returns the codeword and the number of message
    /// passing iterations run; parity already satisfied by the channel hard
    /// decisions costs zero iterations.
    pub fn decode(&self, llrs: &[f64], max_iter: usize) -> Result<(Vec<u8>, usize)> {
        if llrs.len() != self.n {
            return Err(Error::Dimension {
                context: "LDPC channel LLRs",
                expected: self.n,
                actual: llrs.len(),
            });
        }
        let prior: Vec<f64> = llrs.iter().map(|l| l.clamp(-LLR_CLAMP, LLR_CLAMP)).collect();
        let hard = |post: &[f64]| post.iter().map(|&l| u8::from(l < 0.0)).collect::<Vec<u8>>();
        let mut word = hard(&prior);
        if self.syndrome_ok(&word) {
            return Ok((word, 0));
        }
        // Edge messages laid out check by check.
        let mut to_var: Vec<Vec<f64>> = self.checks.iter().map(|r| vec![0.0; r.len()]).collect();
        let mut to_check: Vec<Vec<f64>> = self.checks.iter().map(|r| r.iter().map(|&v| prior[v]).collect()).collect();
        let mut post = prior.clone();
        let mut tanhs = Vec::new();
        for it in 1..=max_iter {
            for (c, row) in self.checks.iter().enumerate() {
                tanhs.clear();
                tanhs.extend(to_check[c].iter().map(|&q| libm::tanh(q / 2.0)));
                for e in 0..row.len() {
                    let prod: f64 = tanhs
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != e)
                        .map(|(_, t)| t)
                        .product();
                    let p = prod.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    to_var[c][e] = (2.0 * libm::atanh(p)).clamp(-LLR_CLAMP, LLR_CLAMP);
                }
            }
            post.copy_from_slice(&prior);
            for (c, row) in self.checks.iter().enumerate() {
                for (e, &v) in row.iter().enumerate() {
                    post[v] += to_var[c][e];
                }
            }
            for (c, row) in self.checks.iter().enumerate() {
                for (e, &v) in row.iter().enumerate() {
                    to_check[c][e] = (post[v] - to_var[c][e]).clamp(-LLR_CLAMP, LLR_CLAMP);
                }
            }
            word = hard(&post);
            if self.syndrome_ok(&word) {
                return Ok((word, it));
            }
        }
        debug_assert_eq!(self.vars.len(), self.n);
        Err(Error::DecodeFailure { iterations: max_iter })
    }
}
