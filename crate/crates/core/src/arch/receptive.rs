//! Receptive field of the last pooling layer and first-layer enumeration.
//!
//! The network is `n` blocks of convolution followed by 2/2 max pooling.
//! Block 1 has kernel width `W1` and stride `S1`; blocks 2..n use width 3,
//! stride 1. Counting from one neuron of the last pooling layer
//! (`R(n) = 1`), each deeper block maps `R(l) -> R(l-1) = 2 R(l) + 2`, so
//!
//! * `R(1) = 3 * 2^(n-1) - 2`
//! * `R(0) = S1 * (2 R(1) - 1) + W1 = S1 * (3 * 2^n - 5) + W1`
//!
//! A first layer is admissible for input length `L` and `N` samples per
//! revolution when `L mod S1 = 0` and `N <= R(0) <= L`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Width and stride of the blocks after the first.
pub const DEEP_KERNEL_WIDTH: usize = 3;
pub const POOL_WIDTH: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReceptiveField {
    /// `chain[l]` is `R(l)` for `l = 0..=n`; `chain[n] = 1`.
    pub chain: Vec<u64>,
}

impl ReceptiveField {
    pub fn r0(&self) -> u64 {
        self.chain[0]
    }

    pub fn r1(&self) -> u64 {
        self.chain[1]
    }
}

/// Admissible first-layer configurations sharing one stride.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FirstLayerPlan {
    pub stride: usize,
    pub widths: Vec<usize>,
    /// `R(0)` for each entry of `widths`.
    pub receptive_fields: Vec<u64>,
}

/// Input span of one input-side convolution followed by pooling, given the
/// span `r` at the pooling output.
fn back_through_block(r: u64, width: u64, stride: u64) -> u64 {
    let conv_span = (r - 1) * POOL_WIDTH as u64 + POOL_WIDTH as u64;
    (conv_span - 1) * stride + width
}

/// Unrolled chain from `R(n) = 1` down to `R(0)`.
pub fn receptive_field(n_layers: usize, s1: usize, w1: usize) -> Result<ReceptiveField> {
    if n_layers == 0 || s1 == 0 || w1 == 0 {
        return Err(Error::invalid("layer count, stride and width must be positive"));
    }
    if n_layers > 60 {
        return Err(Error::invalid(format!("{n_layers} layers overflow the receptive field")));
    }
    let mut chain = vec![0u64; n_layers + 1];
    chain[n_layers] = 1;
    for l in (1..n_layers).rev() {
        chain[l] = back_through_block(chain[l + 1], DEEP_KERNEL_WIDTH as u64, 1);
    }
    chain[0] = back_through_block(chain[1], w1 as u64, s1 as u64);
    Ok(ReceptiveField { chain })
}

pub fn closed_form_r1(n_layers: u32) -> u64 {
    3 * (1u64 << (n_layers - 1)) - 2
}

pub fn closed_form_r0(n_layers: u32, s1: u64, w1: u64) -> u64 {
    s1 * (3 * (1u64 << n_layers) - 5) + w1
}

pub fn divisors(n: usize) -> Vec<usize> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// Every stride dividing `length` with the candidate widths whose `R(0)` lies
/// in `[period, length]`, in ascending stride order. Strides with no
/// admissible width are omitted.
pub fn enumerate_first_layer(
    length: usize,
    period: usize,
    n_layers: usize,
    candidate_widths: &[usize],
) -> Result<Vec<FirstLayerPlan>> {
    if length == 0 || period == 0 || n_layers == 0 {
        return Err(Error::invalid("length, period and layer count must be positive"));
    }
    if period > length {
        return Err(Error::invalid(format!("period {period} exceeds input length {length}")));
    }
    let mut widths: Vec<usize> = candidate_widths.to_vec();
    widths.sort_unstable();
    widths.dedup();
    let mut plans = Vec::new();
    for s in divisors(length) {
        let mut plan = FirstLayerPlan {
            stride: s,
            widths: Vec::new(),
            receptive_fields: Vec::new(),
        };
        for &w in &widths {
            let r0 = receptive_field(n_layers, s, w)?.r0();
            if (period as u64..=length as u64).contains(&r0) {
                plan.widths.push(w);
                plan.receptive_fields.push(r0);
            }
        }
        if !plan.widths.is_empty() {
            plans.push(plan);
        }
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_layer_values() {
        let rf = receptive_field(6, 16, 64).unwrap();
        assert_eq!(rf.r1(), 94);
        assert_eq!(rf.r0(), 3056);
        assert_eq!(receptive_field(1, 1, 3).unwrap().r0(), 4);
    }

    #[test]
    fn chain_matches_closed_form_and_recurrence() {
        for n in 1..=12u32 {
            for (s, w) in [(1, 3), (16, 64), (8, 256), (3, 7)] {
                let rf = receptive_field(n as usize, s, w).unwrap();
                assert_eq!(rf.r1(), closed_form_r1(n));
                assert_eq!(rf.r0(), closed_form_r0(n, s as u64, w as u64));
                for l in 2..=n as usize {
                    assert_eq!(rf.chain[l - 1], 2 * rf.chain[l] + 2);
                }
            }
        }
    }

    #[test]
    fn canonical_design() {
        let plans = enumerate_first_layer(4096, 1925, 6, &[32, 64, 128, 256]).unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].stride, 16);
        assert_eq!(plans[0].widths, vec![32, 64, 128, 256]);
        // stride 8 reaches at most 8 * 187 + 256
        assert_eq!(receptive_field(6, 8, 256).unwrap().r0(), 1752);
    }

    #[test]
    fn period_equal_to_length() {
        let widths: Vec<usize> = (1..=4096).collect();
        let plans = enumerate_first_layer(4096, 4096, 6, &widths).unwrap();
        assert_eq!(plans.iter().map(|p| p.stride).collect::<Vec<_>>(), vec![1, 2, 4, 8, 16]);
        for p in &plans {
            assert!(p.receptive_fields.iter().all(|&r| r == 4096));
        }
    }

    #[test]
    fn divisor_list() {
        assert_eq!(divisors(12), vec![1, 2, 3, 4, 6, 12]);
        assert_eq!(divisors(16), vec![1, 2, 4, 8, 16]);
        assert_eq!(divisors(1), vec![1]);
    }
}
