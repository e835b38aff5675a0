//! Binary LDPC codes loaded from alist files: systematic encoding through a
//! reduced parity-check matrix and normalized min-sum decoding.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const DEFAULT_ALIST: &str = include_str!("../data/ieee80211n_1944_972.alist");

/// Sparse parity-check code with a precomputed systematic encoder.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    /// Edge `e` of check `c` lives in `check_ptr[c]..check_ptr[c + 1]`.
    check_ptr: Vec<usize>,
    edge_var: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
    info_cols: Vec<usize>,
    parity_cols: Vec<usize>,
    /// Row `r` holds the info-bit mask whose parity gives bit `parity_cols[r]`.
    parity_rows: Vec<Vec<u64>>,
    pub max_iterations: usize,
    /// Scale applied to check-node messages.
    pub normalization: f64,
}

/// Result of one decoding attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub info: Vec<u8>,
    pub codeword: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

impl LdpcCode {
    /// The rate-1/2, length-1944 quasi-cyclic code shipped with the crate.
    pub fn standard() -> &'static LdpcCode {
        static CODE: OnceLock<LdpcCode> = OnceLock::new();
        CODE.get_or_init(|| LdpcCode::from_alist(DEFAULT_ALIST).expect("bundled alist parses"))
    }

    /// Parses an alist description and builds the encoder.
    pub fn from_alist(text: &str) -> Result<Self> {
        let mut nums = text.split_whitespace().map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::invalid(format!("alist: bad integer {t:?}")))
        });
        let mut next = || nums.next().unwrap_or_else(|| Err(Error::invalid("alist: truncated")));
        let n = next()?;
        let m = next()?;
        let max_col = next()?;
        let max_row = next()?;
        if n == 0 || m == 0 || m >= n {
            return Err(Error::invalid(format!("alist: unusable dimensions {n} x {m}")));
        }
        let col_deg: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_>>()?;
        let row_deg: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_>>()?;
        let mut cols = vec![Vec::new(); n];
        for (c, d) in col_deg.iter().enumerate() {
            for i in 0..max_col {
                let v = next()?;
                if i < *d {
                    if v == 0 || v > m {
                        return Err(Error::invalid(format!("alist: column {c} lists row {v}")));
                    }
                    cols[c].push(v - 1);
                }
            }
        }
        let mut rows = vec![Vec::new(); m];
        for (r, d) in row_deg.iter().enumerate() {
            for i in 0..max_row {
                let v = next()?;
                if i < *d {
                    if v == 0 || v > n {
                        return Err(Error::invalid(format!("alist: row {r} lists column {v}")));
                    }
                    rows[r].push(v - 1);
                }
            }
        }
        for (r, row) in rows.iter().enumerate() {
            for &c in row {
                if !cols[c].contains(&r) {
                    return Err(Error::invalid(format!(
                        "alist: row {r} and column {c} lists disagree"
                    )));
                }
            }
        }
        Self::from_rows(n, rows)
    }

    /// Builds a code from the column indices of each parity check.
    pub fn from_rows(n: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut check_ptr = vec![0];
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); n];
        for row in &rows {
            for &c in row {
                if c >= n {
                    return Err(Error::invalid(format!("check references column {c} >= {n}")));
                }
                var_edges[c].push(edge_var.len());
                edge_var.push(c);
            }
            check_ptr.push(edge_var.len());
        }
        let (info_cols, parity_cols, parity_rows) = systematic_form(n, &rows)?;
        Ok(LdpcCode {
            n,
            k: info_cols.len(),
            check_ptr,
            edge_var,
            var_edges,
            info_cols,
            parity_cols,
            parity_rows,
            max_iterations: 50,
            normalization: 0.75,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn checks(&self) -> usize {
        self.check_ptr.len() - 1
    }

    /// Codeword positions that carry the information bits, in order.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_cols
    }

    /// `true` when every parity check of `word` is satisfied.
    pub fn is_codeword(&self, word: &[u8]) -> bool {
        word.len() == self.n
            && (0..self.checks()).all(|c| {
                self.edge_var[self.check_ptr[c]..self.check_ptr[c + 1]]
                    .iter()
                    .fold(0u8, |acc, &v| acc ^ (word[v] & 1))
                    == 0
            })
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k {
            return Err(Error::invalid(format!(
                "encoder takes {} bits, got {}",
                self.k,
                info.len()
            )));
        }
        let mut packed = vec![0u64; self.k.div_ceil(64)];
        for (j, b) in info.iter().enumerate() {
            if b & 1 == 1 {
                packed[j / 64] |= 1 << (j % 64);
            }
        }
        let mut word = vec![0u8; self.n];
        for (j, &c) in self.info_cols.iter().enumerate() {
            word[c] = info[j] & 1;
        }
        for (r, &c) in self.parity_cols.iter().enumerate() {
            let ones: u32 = self.parity_rows[r]
                .iter()
                .zip(&packed)
                .map(|(a, b)| (a & b).count_ones())
                .sum();
            word[c] = (ones & 1) as u8;
        }
        Ok(word)
    }

    /// Decodes channel LLRs (positive favours bit 0) to information bits.
    pub fn decode(&self, llrs: &[f64]) -> Result<Vec<u8>> {
        Ok(self.decode_detailed(llrs)?.info)
    }

    /// Flooding normalized min-sum with syndrome-based early exit.
    pub fn decode_detailed(&self, llrs: &[f64]) -> Result<DecodeOutcome> {
        if llrs.len() != self.n {
            return Err(Error::invalid(format!(
                "decoder takes {} LLRs, got {}",
                self.n,
                llrs.len()
            )));
        }
        let edges = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| llrs[v]).collect();
        let mut c2v = vec![0.0; edges];
        let mut post = llrs.to_vec();
        let mut hard: Vec<u8> = post.iter().map(|l| u8::from(*l < 0.0)).collect();
        let mut converged = self.is_codeword(&hard);
        let mut iterations = 0;
        while !converged && iterations < self.max_iterations {
            iterations += 1;
            for c in 0..self.checks() {
                let range = self.check_ptr[c]..self.check_ptr[c + 1];
                let (mut min1, mut min2, mut at) = (f64::INFINITY, f64::INFINITY, usize::MAX);
                let mut negative = false;
                for e in range.clone() {
                    let a = v2c[e].abs();
                    negative ^= v2c[e] < 0.0;
                    if a < min1 {
                        min2 = min1;
                        min1 = a;
                        at = e;
                    } else if a < min2 {
                        min2 = a;
                    }
                }
                for e in range {
                    let mag = if e == at { min2 } else { min1 };
                    let sign = negative ^ (v2c[e] < 0.0);
                    let m = self.normalization * mag;
                    c2v[e] = if sign { -m } else { m };
                }
            }
            for (v, es) in self.var_edges.iter().enumerate() {
                post[v] = llrs[v] + es.iter().map(|&e| c2v[e]).sum::<f64>();
                hard[v] = u8::from(post[v] < 0.0);
                for &e in es {
                    v2c[e] = post[v] - c2v[e];
                }
            }
            converged = self.is_codeword(&hard);
        }
        Ok(DecodeOutcome {
            info: self.info_cols.iter().map(|&c| hard[c]).collect(),
            codeword: hard,
            converged,
            iterations,
        })
    }
}

type Systematic = (Vec<usize>, Vec<usize>, Vec<Vec<u64>>);

/// Gauss-Jordan reduction of `H`, pivoting from the rightmost column so the
/// information bits stay in front when the parity part is invertible.
fn systematic_form(n: usize, rows: &[Vec<usize>]) -> Result<Systematic> {
    let words = n.div_ceil(64);
    let mut mat: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| {
            let mut w = vec![0u64; words];
            for &c in r {
                w[c / 64] ^= 1 << (c % 64);
            }
            w
        })
        .collect();
    let bit = |row: &[u64], c: usize| (row[c / 64] >> (c % 64)) & 1 == 1;
    let m = mat.len();
    let mut pivots: Vec<usize> = Vec::new();
    let mut rank = 0;
    for col in (0..n).rev() {
        if rank == m {
            break;
        }
        let Some(p) = (rank..m).find(|&r| bit(&mat[r], col)) else {
            continue;
        };
        mat.swap(rank, p);
        let pivot_row = mat[rank].clone();
        for (r, row) in mat.iter_mut().enumerate() {
            if r != rank && bit(row, col) {
                for (a, b) in row.iter_mut().zip(&pivot_row) {
                    *a ^= b;
                }
            }
        }
        pivots.push(col);
        rank += 1;
    }
    if rank == 0 {
        return Err(Error::invalid("parity-check matrix has rank zero"));
    }
    let mut is_pivot = vec![false; n];
    for &c in &pivots {
        is_pivot[c] = true;
    }
    let info_cols: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let k = info_cols.len();
    let parity_rows = (0..rank)
        .map(|r| {
            let mut w = vec![0u64; k.div_ceil(64)];
            for (j, &c) in info_cols.iter().enumerate() {
                if bit(&mat[r], c) {
                    w[j / 64] |= 1 << (j % 64);
                }
            }
            w
        })
        .collect();
    Ok((info_cols, pivots, parity_rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const BASE: [[i32; 24]; 12] = [
        [57, -1, -1, -1, 50, -1, 11, -1, 50, -1, 79, -1, 1, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
        [3, -1, 28, -1, 0, -1, -1, -1, 55, 7, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1],
        [30, -1, -1, -1, 24, 37, -1, -1, 56, 14, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1, -1],
        [62, 53, -1, -1, 53, -1, -1, 3, 35, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1],
        [40, -1, -1, 20, 66, -1, -1, 22, 28, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1],
        [0, -1, -1, -1, 8, -1, 42, -1, 50, -1, -1, 8, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1],
        [69, 79, 79, -1, -1, -1, 56, -1, 52, -1, -1, -1, 0, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1],
        [65, -1, -1, -1, 38, 57, -1, -1, 72, -1, 27, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1],
        [64, -1, -1, -1, 14, 52, -1, -1, 30, -1, -1, 32, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1],
        [-1, 45, -1, 70, 0, -1, -1, -1, 77, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1],
        [2, 56, -1, 57, 35, -1, -1, -1, -1, -1, 12, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0],
        [24, -1, 61, -1, 60, -1, -1, 27, 51, -1, -1, 16, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0],
    ];

    fn expanded_rows() -> Vec<Vec<usize>> {
        let z = 81;
        let mut rows = vec![Vec::new(); 12 * z];
        for (bi, brow) in BASE.iter().enumerate() {
            for (bj, &p) in brow.iter().enumerate() {
                if p < 0 {
                    continue;
                }
                for i in 0..z {
                    rows[bi * z + i].push(bj * z + (i + p as usize) % z);
                }
            }
        }
        rows.iter_mut().for_each(|r| r.sort_unstable());
        rows
    }

    fn random_info(code: &LdpcCode, rng: &mut ChaCha8Rng) -> Vec<u8> {
        (0..code.k()).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn bundled_matrix_is_the_quasi_cyclic_expansion() {
        let code = LdpcCode::standard();
        assert_eq!((code.n(), code.k(), code.checks()), (1944, 972, 972));
        let want = expanded_rows();
        for (c, row) in want.iter().enumerate() {
            let mut got: Vec<usize> = code.edge_var[code.check_ptr[c]..code.check_ptr[c + 1]].to_vec();
            got.sort_unstable();
            assert_eq!(&got, row, "check {c}");
        }
    }

    #[test]
    fn encoder_is_systematic_in_front() {
        let code = LdpcCode::standard();
        assert_eq!(code.info_positions(), &(0..972).collect::<Vec<_>>()[..]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let info = random_info(code, &mut rng);
        let word = code.encode(&info).unwrap();
        assert_eq!(&word[..972], &info[..]);
        assert!(code.is_codeword(&word));
    }

    #[test]
    fn all_zero() {
        let code = LdpcCode::standard();
        let word = code.encode(&vec![0; 972]).unwrap();
        assert!(word.iter().all(|b| *b == 0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let llr: Vec<f64> = (0..1944).map(|_| rng.random_range(0.0..5.0)).collect();
        assert!(code.decode(&llr).unwrap().iter().all(|b| *b == 0));
    }

    #[test]
    fn confident_llrs_decode_exactly() {
        let code = LdpcCode::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let info = random_info(code, &mut rng);
        let word = code.encode(&info).unwrap();
        let llr: Vec<f64> = word.iter().map(|b| if *b == 0 { 1e6 } else { -1e6 }).collect();
        let out = code.decode_detailed(&llr).unwrap();
        assert_eq!(out.info, info);
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn length_errors() {
        let code = LdpcCode::standard();
        assert!(code.encode(&[0; 10]).is_err());
        assert!(code.decode(&[0.0; 10]).is_err());
    }

    #[test]
    fn rejects_malformed_alist() {
        assert!(LdpcCode::from_alist("4 2\n2 2\n1 1 1 1").is_err());
        assert!(LdpcCode::from_alist("x").is_err());
    }

    #[test]
    fn small_code_from_alist() {
        // Hamming (7, 4) as an alist.
        let text = "7 3\n3 4\n2 2 2 1 1 1 3\n4 4 4\n1 2 0\n1 3 0\n2 3 0\n1 0 0\n2 0 0\n3 0 0\n1 2 3\n1 2 4 7\n1 3 5 7\n2 3 6 7\n";
        let code = LdpcCode::from_alist(text).unwrap();
        assert_eq!(code.k(), 4);
        for v in 0..16u8 {
            let info: Vec<u8> = (0..4).map(|i| (v >> i) & 1).collect();
            assert!(code.is_codeword(&code.encode(&info).unwrap()));
        }
    }

    #[test]
    fn waterfall_at_three_db() {
        let code = LdpcCode::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ebn0 = 10f64.powf(0.3);
        let sigma2 = 1.0 / (2.0 * 0.5 * ebn0);
        let blocks = 104;
        let mut errors = 0usize;
        for _ in 0..blocks {
            let info = random_info(code, &mut rng);
            let word = code.encode(&info).unwrap();
            let llr: Vec<f64> = word
                .iter()
                .map(|b| {
                    let x = if *b == 0 { 1.0 } else { -1.0 };
                    let noise: f64 = rng.sample(StandardNormal);
                    2.0 * (x + sigma2.sqrt() * noise) / sigma2
                })
                .collect();
            let out = code.decode(&llr).unwrap();
            errors += out.iter().zip(&info).filter(|(a, b)| a != b).count();
        }
        let ber = errors as f64 / (blocks * 972) as f64;
        assert!(ber < 1e-3, "BER {ber}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn zero_syndrome_outputs_are_codewords(seed in any::<u64>(), snr in 0.0f64..2.0) {
            let code = LdpcCode::standard();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let info = random_info(code, &mut rng);
            let word = code.encode(&info).unwrap();
            let sigma2 = 10f64.powf(-snr / 10.0);
            let llr: Vec<f64> = word
                .iter()
                .map(|b| {
                    let x = if *b == 0 { 1.0 } else { -1.0 };
                    let noise: f64 = rng.sample(StandardNormal);
                    2.0 * (x + sigma2.sqrt() * noise) / sigma2
                })
                .collect();
            let out = code.decode_detailed(&llr).unwrap();
            if out.converged {
                prop_assert!(code.is_codeword(&out.codeword));
            }
        }
    }
}
