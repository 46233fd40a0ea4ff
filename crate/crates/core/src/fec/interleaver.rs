use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::substream;

/// Fixed pseudorandom permutation: `interleave(x)[k] = x[perm[k]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Interleaver {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut rng = substream(seed, &[0x1A7E, len as u64]);
        let mut perm: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let mut inverse = vec![0; len];
        for (k, &p) in perm.iter().enumerate() {
            inverse[p] = k;
        }
        Interleaver { perm, inverse }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.perm.len() {
            return Err(Error::usage(format!(
                "interleaver of length {} applied to {n} elements",
                self.perm.len()
            )));
        }
        Ok(())
    }

    pub fn interleave<T: Copy>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x.len())?;
        Ok(self.perm.iter().map(|&p| x[p]).collect())
    }

    pub fn deinterleave<T: Copy>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x.len())?;
        Ok(self.inverse.iter().map(|&k| x[k]).collect())
    }
}
