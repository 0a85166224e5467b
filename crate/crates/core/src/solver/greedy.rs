use crate::consensus::{CoveringProgram, Label, LabelVector};
use crate::error::Result;

use super::{check_fixed_len, PartialAssignment, Residual};

/// Greedy cover: repeatedly marks as outlier the free variable that covers the
/// most unsatisfied constraints (lowest index on ties). Fixed variables keep
/// their value; free variables never picked are inliers.
pub fn greedy_cover(program: &CoveringProgram, fixed: &PartialAssignment) -> Result<LabelVector> {
    check_fixed_len(program, fixed)?;
    let residual = Residual::build(program.num_vars(), program.constraints(), |i| {
        fixed[i].map(Label::is_outlier)
    })?;
    let mut labels: Vec<Label> = fixed.iter().map(|l| l.unwrap_or(Label::Inlier)).collect();
    for local in greedy_residual(&residual) {
        labels[residual.vars[local]] = Label::Outlier;
    }
    Ok(LabelVector(labels))
}

/// Local indices picked by the greedy rule on an unfixed residual program.
pub(crate) fn greedy_residual(residual: &Residual) -> Vec<usize> {
    let n = residual.vars.len();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, c) in residual.constraints.iter().enumerate() {
        for &i in c {
            incident[i].push(k);
        }
    }
    let mut counts: Vec<usize> = incident.iter().map(Vec::len).collect();
    let mut satisfied = vec![false; residual.constraints.len()];
    let mut remaining = residual.constraints.len();
    let mut picked = Vec::new();
    while remaining > 0 {
        let (best, _) = counts
            .iter()
            .enumerate()
            .fold((usize::MAX, 0), |acc, (i, &c)| if c > acc.1 { (i, c) } else { acc });
        debug_assert!(best != usize::MAX);
        picked.push(best);
        for &k in &incident[best] {
            if satisfied[k] {
                continue;
            }
            satisfied[k] = true;
            remaining -= 1;
            for &j in &residual.constraints[k] {
                counts[j] -= 1;
            }
        }
    }
    picked
}
