use crate::error::{invalid_arg, Result};

/// The GF(2) map `u -> u G_N` with `G_N` the `t`-fold Kronecker power of
/// `[[1, 0], [1, 1]]`, in natural (not bit-reversed) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolarTransform {
    n: usize,
}

impl PolarTransform {
    pub fn new(n: usize) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(invalid_arg(format!("block length {n} is not a power of two")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log2(&self) -> u32 {
        self.n.trailing_zeros()
    }

    /// In-place butterfly; the transform is its own inverse.
    pub fn apply_in_place(&self, v: &mut [u8]) {
        debug_assert_eq!(v.len(), self.n);
        butterfly(v);
    }

    pub fn apply(&self, u: &[u8]) -> Result<Vec<u8>> {
        if u.len() != self.n {
            return Err(invalid_arg(format!(
                "expected {} bits, got {}",
                self.n,
                u.len()
            )));
        }
        let mut x = u.to_vec();
        butterfly(&mut x);
        Ok(x)
    }
}

fn butterfly(v: &mut [u8]) {
    let n = v.len();
    let mut half = 1;
    while half < n {
        for block in v.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter()) {
                *a ^= *b;
            }
        }
        half *= 2;
    }
}

/// `x = u G_N` over GF(2).
pub fn transform(u: &[u8]) -> Result<Vec<u8>> {
    PolarTransform::new(u.len())?.apply(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        assert_eq!(transform(&[1, 1]).unwrap(), vec![0, 1]);
        assert_eq!(transform(&[0, 0, 0, 1]).unwrap(), vec![1, 1, 1, 1]);
        assert_eq!(transform(&[1, 0, 0, 0]).unwrap(), vec![1, 0, 0, 0]);
        assert_eq!(transform(&[1]).unwrap(), vec![1]);
        assert!(transform(&[0, 1, 1]).is_err());
    }

    #[test]
    fn matches_kronecker_matrix() {
        // row i of G_N has a one at column c iff c is a submask of i
        let n = 16;
        for i in 0..n {
            let mut u = vec![0u8; n];
            u[i] = 1;
            let x = transform(&u).unwrap();
            for (c, &b) in x.iter().enumerate() {
                assert_eq!(b == 1, c & i == c, "row {i} col {c}");
            }
        }
    }
}
