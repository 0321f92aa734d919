//! Shared fixtures for the kernel benchmarks.

use qwgrowth::{InterlacingArray, ModelParams, Specialization};

/// Plancherel model with unit speeds and γ = 1.
pub fn unit_params(levels: usize, eps: f64) -> ModelParams {
    ModelParams::new(eps, vec![1.0; levels], Specialization::Plancherel { gamma: 1.0 }).expect("valid fixture")
}

pub fn empty(levels: usize) -> InterlacingArray {
    InterlacingArray::packed(levels)
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_build() {
        assert_eq!(super::unit_params(4, 0.1).levels(), 4);
        assert_eq!(super::empty(4).levels(), 4);
    }
}
