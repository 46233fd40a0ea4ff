//! Rate-1/2 parallel-concatenated turbo code built from two (7, 5) RSC
//! encoders, plus the bit interleaver and LLR containers used by the
//! detection/decoding loop.

mod interleaver;
mod rsc;
mod turbo;

pub use interleaver::Interleaver;
pub use rsc::{bcjr, BcjrOutput, Trellis};
pub use turbo::{reencode_remodulate, DecodeOutput, TurboCode, TurboCodeConfig};

use crate::error::{Error, Result};

/// Saturation bound for every LLR leaving the decoder or soft detector.
pub const LLR_MAX: f64 = 50.0;

/// Position of an LLR vector in the detection/decoding loop: MUD (`M*`) or
/// channel decoder (`C*`), a-priori / a-posteriori / extrinsic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlrRole {
    MPr,
    MPo,
    ME,
    CPr,
    CPo,
    CE,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlrFrame {
    pub values: Vec<f64>,
    pub role: LlrRole,
}

impl LlrFrame {
    /// Builds a frame, clamping every value to `[-LLR_MAX, LLR_MAX]`.
    /// NaN is mapped to 0 (no information).
    pub fn new(values: Vec<f64>, role: LlrRole) -> Self {
        let values = values.into_iter().map(clamp_llr).collect();
        LlrFrame { values, role }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self - other` elementwise, tagged `role` (extrinsic = posterior - prior).
    pub fn minus(&self, other: &LlrFrame, role: LlrRole) -> Result<LlrFrame> {
        if self.len() != other.len() {
            return Err(Error::usage(format!(
                "LLR frames of length {} and {} cannot be subtracted",
                self.len(),
                other.len()
            )));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(LlrFrame { values, role })
    }

    pub fn hard_bits(&self) -> Vec<u8> {
        self.values.iter().map(|&v| u8::from(v < 0.0)).collect()
    }
}

#[inline]
pub fn clamp_llr(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-LLR_MAX, LLR_MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_saturate_and_subtract() {
        let a = LlrFrame::new(vec![1e9, -1e9, f64::NAN, 3.0], LlrRole::CPo);
        assert_eq!(a.values, vec![LLR_MAX, -LLR_MAX, 0.0, 3.0]);
        let b = LlrFrame::new(vec![1.0, 1.0, 1.0, 1.0], LlrRole::CPr);
        let e = a.minus(&b, LlrRole::CE).unwrap();
        assert_eq!(e.values, vec![49.0, -51.0, -1.0, 2.0]);
        assert_eq!(a.hard_bits(), vec![0, 1, 0, 0]);
        assert!(a.minus(&LlrFrame::new(vec![0.0], LlrRole::CPr), LlrRole::CE).is_err());
    }
}
