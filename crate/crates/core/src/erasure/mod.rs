//! Systematic (n, k) MDS erasure code over GF(2^8).
//!
//! The generator is a Vandermonde matrix on the points `1..=n`, brought into
//! systematic form by multiplying with the inverse of its top `k x k` block.
//! Any `k` rows of the result are linearly independent, so any `k` fragments
//! determine the value.

pub mod gf256;

use rand::seq::index::sample;
use rand::SeedableRng;
use thiserror::Error;

use crate::types::Fragment;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ErasureError {
    #[error("invalid code parameters n = {n}, k = {k}")]
    InvalidParams { n: usize, k: usize },
    #[error("generator rows {rows:?} are linearly dependent")]
    NotMds { rows: Vec<usize> },
    #[error("cannot encode an empty value")]
    EmptyValue,
    #[error("expected {expected} fragment slots, got {got}")]
    WrongSlotCount { expected: usize, got: usize },
    #[error("only {have} of the {need} required fragments are present")]
    InsufficientFragments { have: usize, need: usize },
    #[error("fragment lengths disagree")]
    LengthMismatch,
    #[error("requested length {ell} exceeds the {capacity} bytes carried by the fragments")]
    LengthTooLarge { ell: usize, capacity: usize },
}

/// Dense row-major matrix over GF(256).
#[derive(Clone, Debug, PartialEq, Eq)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl Matrix {
    fn zero(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0; rows * cols] }
    }

    fn identity(size: usize) -> Self {
        let mut m = Self::zero(size, size);
        for i in 0..size {
            m.set(i, i, 1);
        }
        m
    }

    fn vandermonde(rows: usize, cols: usize) -> Self {
        let mut m = Self::zero(rows, cols);
        for r in 0..rows {
            let x = (r + 1) as u8;
            for c in 0..cols {
                m.set(r, c, gf256::pow(x, c));
            }
        }
        m
    }

    fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: u8) {
        self.data[r * self.cols + c] = v;
    }

    fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::zero(rows.len(), self.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.data[i * self.cols..(i + 1) * self.cols].copy_from_slice(self.row(r));
        }
        out
    }

    fn mul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows);
        let mut out = Self::zero(self.rows, rhs.cols);
        for r in 0..self.rows {
            for c in 0..rhs.cols {
                let mut acc = 0u8;
                for i in 0..self.cols {
                    acc ^= gf256::mul(self.get(r, i), rhs.get(i, c));
                }
                out.set(r, c, acc);
            }
        }
        out
    }

    /// Gauss-Jordan inversion; `None` when singular.
    fn invert(&self) -> Option<Matrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot = (col..n).find(|&r| a.get(r, col) != 0)?;
            if pivot != col {
                for c in 0..n {
                    a.data.swap(pivot * n + c, col * n + c);
                    inv.data.swap(pivot * n + c, col * n + c);
                }
            }
            let scale = gf256::inv(a.get(col, col));
            for c in 0..n {
                a.set(col, c, gf256::mul(a.get(col, c), scale));
                inv.set(col, c, gf256::mul(inv.get(col, c), scale));
            }
            for r in 0..n {
                let f = a.get(r, col);
                if r == col || f == 0 {
                    continue;
                }
                for c in 0..n {
                    a.set(r, c, a.get(r, c) ^ gf256::mul(f, a.get(col, c)));
                    inv.set(r, c, inv.get(r, c) ^ gf256::mul(f, inv.get(col, c)));
                }
            }
        }
        Some(inv)
    }
}

/// An `(n, k)` erasure code. Stateless after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErasureCodec {
    n: usize,
    k: usize,
    generator: Matrix,
}

/// Number of random `k`-subsets probed by the MDS check when exhaustive
/// enumeration is too expensive.
const MDS_SAMPLES: usize = 256;

impl ErasureCodec {
    pub fn new(n: usize, k: usize) -> Result<Self, ErasureError> {
        if k == 0 || k > n || n > 255 {
            return Err(ErasureError::InvalidParams { n, k });
        }
        let vander = Matrix::vandermonde(n, k);
        let top_inv = vander
            .select_rows(&(0..k).collect::<Vec<_>>())
            .invert()
            .ok_or(ErasureError::NotMds { rows: (0..k).collect() })?;
        let codec = ErasureCodec { n, k, generator: vander.mul(&top_inv) };
        codec.verify_mds()?;
        Ok(codec)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Generator coefficient at row `r` (fragment), column `c` (source piece).
    pub fn generator_entry(&self, r: usize, c: usize) -> u8 {
        self.generator.get(r, c)
    }

    /// Checks that every `k x k` row selection of the generator is
    /// invertible. Exhaustive for `n <= 8`, sampled otherwise.
    pub fn verify_mds(&self) -> Result<(), ErasureError> {
        let check = |rows: &[usize]| -> Result<(), ErasureError> {
            match self.generator.select_rows(rows).invert() {
                Some(_) => Ok(()),
                None => Err(ErasureError::NotMds { rows: rows.to_vec() }),
            }
        };
        if self.n <= 8 {
            for rows in k_subsets(self.n, self.k) {
                check(&rows)?;
            }
        } else {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64((self.n * 256 + self.k) as u64);
            for _ in 0..MDS_SAMPLES {
                let mut rows = sample(&mut rng, self.n, self.k).into_vec();
                rows.sort_unstable();
                check(&rows)?;
            }
        }
        Ok(())
    }

    /// Fragment length for a value of `len` bytes.
    pub fn fragment_len(&self, len: usize) -> usize {
        len.div_ceil(self.k)
    }

    /// Splits the zero-padded value into `k` pieces and produces `n`
    /// fragments; the first `k` are the pieces themselves.
    pub fn encode(&self, value: &[u8]) -> Result<Vec<Fragment>, ErasureError> {
        if value.is_empty() {
            return Err(ErasureError::EmptyValue);
        }
        let len = self.fragment_len(value.len());
        let mut padded = value.to_vec();
        padded.resize(len * self.k, 0);
        let pieces: Vec<&[u8]> = padded.chunks(len).collect();
        let frags = (0..self.n)
            .map(|r| {
                let mut out = vec![0u8; len];
                for (c, piece) in pieces.iter().enumerate() {
                    gf256::mul_add_slice(&mut out, piece, self.generator.get(r, c));
                }
                Fragment(out)
            })
            .collect();
        Ok(frags)
    }

    /// Recovers the `ell`-byte value from any `k` present fragments, using
    /// the `k` lowest-indexed ones when more are available. Fragments are
    /// assumed consistent; integrity is checked by the caller.
    pub fn reconstruct(&self, frags: &[Option<Fragment>], ell: usize) -> Result<Vec<u8>, ErasureError> {
        if frags.len() != self.n {
            return Err(ErasureError::WrongSlotCount { expected: self.n, got: frags.len() });
        }
        let present: Vec<usize> = frags
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.as_ref().map(|_| i))
            .take(self.k)
            .collect();
        if present.len() < self.k {
            return Err(ErasureError::InsufficientFragments { have: present.len(), need: self.k });
        }
        let len = frags[present[0]].as_ref().map_or(0, Fragment::len);
        if present.iter().any(|&i| frags[i].as_ref().map_or(0, Fragment::len) != len) {
            return Err(ErasureError::LengthMismatch);
        }
        if ell > len * self.k {
            return Err(ErasureError::LengthTooLarge { ell, capacity: len * self.k });
        }
        let decode = self
            .generator
            .select_rows(&present)
            .invert()
            .ok_or_else(|| ErasureError::NotMds { rows: present.clone() })?;
        let mut out = vec![0u8; len * self.k];
        for (piece, chunk) in out.chunks_mut(len).enumerate() {
            for (j, &row) in present.iter().enumerate() {
                let src = frags[row].as_ref().map(Fragment::as_bytes).unwrap_or_default();
                gf256::mul_add_slice(chunk, src, decode.get(piece, j));
            }
        }
        out.truncate(ell);
        Ok(out)
    }
}

/// All `k`-element subsets of `0..n` in lexicographic order.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Independent route: the code word position `r` of each byte column is
    /// the evaluation at x = r + 1 of the unique polynomial of degree < k
    /// through (x_j, d_j), j < k. Computed by Lagrange interpolation.
    fn lagrange_fragment(pieces: &[Vec<u8>], r: usize) -> Vec<u8> {
        let k = pieces.len();
        let x = (r + 1) as u8;
        let xs: Vec<u8> = (0..k).map(|j| (j + 1) as u8).collect();
        let mut out = vec![0u8; pieces[0].len()];
        for j in 0..k {
            let mut basis = 1u8;
            for m in 0..k {
                if m != j {
                    basis = gf256::mul(basis, gf256::div(x ^ xs[m], xs[j] ^ xs[m]));
                }
            }
            for (o, &b) in out.iter_mut().zip(&pieces[j]) {
                *o ^= gf256::mul(basis, b);
            }
        }
        out
    }

    fn pieces_of(v: &[u8], k: usize) -> Vec<Vec<u8>> {
        let len = v.len().div_ceil(k);
        let mut p = v.to_vec();
        p.resize(len * k, 0);
        p.chunks(len).map(<[u8]>::to_vec).collect()
    }

    #[test]
    fn k1_is_replication_in_first_fragment() {
        let codec = ErasureCodec::new(3, 1).unwrap();
        let v = b"arbitrary bytes".to_vec();
        let f = codec.encode(&v).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f[0].0, v);
    }

    #[test]
    fn fragment_shape() {
        let codec = ErasureCodec::new(4, 2).unwrap();
        let f = codec.encode(&[1, 2, 3, 4]).unwrap();
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|x| x.len() == 2));
        assert_eq!(f[0].0, vec![1, 2]);
        assert_eq!(f[1].0, vec![3, 4]);
        let odd = codec.encode(&[1, 2, 3]).unwrap();
        assert!(odd.iter().all(|x| x.len() == 2));
    }

    #[test]
    fn matches_polynomial_evaluation_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for (n, k) in [(4, 2), (5, 3), (7, 3), (8, 8), (12, 5), (255, 4)] {
            let codec = ErasureCodec::new(n, k).unwrap();
            let v: Vec<u8> = (0..rng.gen_range(1..50)).map(|_| rng.gen()).collect();
            let frags = codec.encode(&v).unwrap();
            let pieces = pieces_of(&v, k);
            for (r, f) in frags.iter().enumerate() {
                assert_eq!(f.0, lagrange_fragment(&pieces, r), "n={n} k={k} row {r}");
            }
        }
    }

    #[test]
    fn golden_vector_n4_k2() {
        // Frozen once; cross-checked against the Lagrange oracle above.
        let codec = ErasureCodec::new(4, 2).unwrap();
        let v: Vec<u8> = (0..8u8).map(|i| i.wrapping_mul(37).wrapping_add(5)).collect();
        let frags: Vec<String> = codec.encode(&v).unwrap().iter().map(|f| hex::encode(&f.0)).collect();
        let pieces = pieces_of(&v, 2);
        for (r, f) in frags.iter().enumerate() {
            assert_eq!(*f, hex::encode(lagrange_fragment(&pieces, r)));
        }
        assert_eq!(frags, GOLDEN_N4_K2);
    }

    const GOLDEN_N4_K2: [&str; 4] = ["052a4f74", "99bee308", "ed3987d7", "bc8ba6f0"];

    #[test]
    fn round_trip_without_erasures() {
        let codec = ErasureCodec::new(6, 3).unwrap();
        let v = b"hello erasure world".to_vec();
        let f: Vec<_> = codec.encode(&v).unwrap().into_iter().map(Some).collect();
        assert_eq!(codec.reconstruct(&f, v.len()).unwrap(), v);
    }

    #[test]
    fn below_threshold_fails() {
        let codec = ErasureCodec::new(5, 3).unwrap();
        let v = vec![9u8; 10];
        let mut f: Vec<_> = codec.encode(&v).unwrap().into_iter().map(Some).collect();
        f[0] = None;
        f[2] = None;
        f[4] = None;
        assert_eq!(
            codec.reconstruct(&f, v.len()),
            Err(ErasureError::InsufficientFragments { have: 2, need: 3 })
        );
    }

    #[test]
    fn all_erasure_patterns_small_n() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 1..=8 {
            for k in 1..=n {
                let codec = ErasureCodec::new(n, k).unwrap();
                let v: Vec<u8> = (0..rng.gen_range(1..40)).map(|_| rng.gen()).collect();
                let full = codec.encode(&v).unwrap();
                for keep in k_subsets(n, k) {
                    let frags: Vec<_> = (0..n)
                        .map(|i| keep.contains(&i).then(|| full[i].clone()))
                        .collect();
                    assert_eq!(codec.reconstruct(&frags, v.len()).unwrap(), v, "n={n} k={k} {keep:?}");
                }
            }
        }
    }

    #[test]
    fn random_erasures_large_n() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let codec = ErasureCodec::new(20, 7).unwrap();
        for _ in 0..10_000 {
            let v: Vec<u8> = (0..rng.gen_range(1..30)).map(|_| rng.gen()).collect();
            let full = codec.encode(&v).unwrap();
            let keep = sample(&mut rng, 20, 7).into_vec();
            let frags: Vec<_> = (0..20).map(|i| keep.contains(&i).then(|| full[i].clone())).collect();
            assert_eq!(codec.reconstruct(&frags, v.len()).unwrap(), v);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ErasureCodec::new(3, 0).is_err());
        assert!(ErasureCodec::new(3, 4).is_err());
        assert!(ErasureCodec::new(256, 2).is_err());
        let codec = ErasureCodec::new(3, 1).unwrap();
        assert_eq!(codec.encode(&[]), Err(ErasureError::EmptyValue));
        assert!(matches!(codec.reconstruct(&[None], 1), Err(ErasureError::WrongSlotCount { .. })));
        let f = vec![Some(Fragment(vec![1, 2])), Some(Fragment(vec![1])), None];
        let codec2 = ErasureCodec::new(3, 2).unwrap();
        assert_eq!(codec2.reconstruct(&f, 2), Err(ErasureError::LengthMismatch));
    }

    #[test]
    fn largest_field_code_is_mds_on_samples() {
        let codec = ErasureCodec::new(255, 10).unwrap();
        assert!(codec.verify_mds().is_ok());
    }

    #[test]
    fn subsets_count() {
        assert_eq!(k_subsets(8, 3).len(), 56);
        assert_eq!(k_subsets(4, 4), vec![vec![0, 1, 2, 3]]);
    }
}
