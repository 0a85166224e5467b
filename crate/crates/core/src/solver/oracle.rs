use crate::consensus::{CoveringProgram, LabelVector};
use crate::error::{Error, Result};

const MAX_VARS: usize = 24;

/// Exhaustive search over all assignments. Returns the optimum and the
/// lexicographically smallest optimal `z` vector (`z_0` most significant).
pub fn brute_force_oracle(program: &CoveringProgram) -> Result<(usize, LabelVector)> {
    let n = program.num_vars();
    if n > MAX_VARS {
        return Err(Error::TooLarge { num_vars: n });
    }
    // variable i lives at bit n-1-i so numeric order is lexicographic order
    let bit = |i: usize| 1u32 << (n - 1 - i);
    let masks: Vec<u32> = program
        .constraints()
        .iter()
        .map(|c| c.iter().fold(0, |m, &i| m | bit(i)))
        .collect();
    let feasible = |z: u32| masks.iter().all(|&c| z & c != 0);

    for k in 0..=n {
        // Gosper's hack enumerates k-subsets in increasing numeric order
        let mut z: u32 = if k == 0 { 0 } else { (1u32 << k) - 1 };
        let limit: u64 = 1u64 << n;
        while (z as u64) < limit {
            if feasible(z) {
                let outliers = (0..n).filter(|&i| z & bit(i) != 0);
                return Ok((k, LabelVector::from_outliers(n, outliers)));
            }
            if k == 0 {
                break;
            }
            let c = z & z.wrapping_neg();
            let r = z + c;
            z = (((r ^ z) >> 2) / c) | r;
            if r == 0 {
                break;
            }
        }
    }
    unreachable!("the all-outlier assignment is always feasible")
}
