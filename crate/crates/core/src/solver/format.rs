//! Text formats for covering programs and solver traces.
//!
//! Instance: first line `p c`, then `c` lines each holding a space-separated,
//! 1-based constraint index list. Trace: CSV with header
//! `iteration,upper,lower,open_nodes`.

use std::fmt::Write as _;
use std::path::Path;

use crate::consensus::CoveringProgram;
use crate::error::{Error, Result};

use super::TraceEntry;

pub fn parse_instance(text: &str, origin: &Path) -> Result<CoveringProgram> {
    let malformed = |line: usize, message: String| Error::Malformed {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| malformed(1, "missing header".into()))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| malformed(hl, format!("bad integer {t:?}"))))
        .collect::<Result<_>>()?;
    let [p, c] = nums[..] else {
        return Err(malformed(hl, "header must be \"p c\"".into()));
    };
    let mut constraints = Vec::with_capacity(c);
    for (ln, line) in lines {
        let set = line
            .split_whitespace()
            .map(|t| match t.parse::<i64>() {
                Ok(v) if v >= 1 && (v as usize) <= p => Ok(v as usize - 1),
                Ok(v) => Err(malformed(ln, format!("index {v} outside 1..={p}"))),
                Err(_) => Err(malformed(ln, format!("bad integer {t:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        constraints.push(set);
    }
    if constraints.len() != c {
        return Err(malformed(hl, format!("expected {c} constraints, found {}", constraints.len())));
    }
    CoveringProgram::new(p, constraints).map_err(|e| malformed(hl, e.to_string()))
}

pub fn emit_instance(program: &CoveringProgram) -> String {
    let mut out = format!("{} {}\n", program.num_vars(), program.constraints().len());
    for c in program.constraints() {
        let line: Vec<String> = c.iter().map(|i| (i + 1).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from("iteration,upper,lower,open_nodes\n");
    for t in trace {
        let _ = writeln!(out, "{},{},{},{}", t.iteration, t.upper_bound, t.lower_bound, t.open_nodes);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_one_based_instance() {
        let p = parse_instance("3 2\n1 2\n2 3\n", Path::new("x")).unwrap();
        assert_eq!(p.num_vars(), 3);
        assert_eq!(p.constraints(), &[vec![0, 1], vec![1, 2]]);
        assert_eq!(emit_instance(&p), "3 2\n1 2\n2 3\n");
    }

    #[test]
    fn reports_line_of_bad_index() {
        let err = parse_instance("3 2\n1 2\n2 4\n", Path::new("inst.txt")).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 3, .. }), "{err}");
        let err = parse_instance("3 1\n0\n", Path::new("inst.txt")).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }));
    }

    #[test]
    fn trace_header() {
        let csv = trace_csv(&[TraceEntry {
            iteration: 0,
            upper_bound: 3,
            lower_bound: 1.5,
            open_nodes: 1,
        }]);
        assert_eq!(csv, "iteration,upper,lower,open_nodes\n0,3,1.5,1\n");
    }
}
