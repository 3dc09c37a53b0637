use std::io::{BufRead, Write};

use super::{IterateRecord, StepConstants};
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "k,F,increment,residual,alpha,beta,wall_ms";

/// Writes one CSV row per iteration. Floats use the shortest representation
/// that round-trips exactly.
pub fn write_trace_csv(mut w: impl Write, trace: &[IterateRecord]) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in trace {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{:?},{:.3}",
            r.k, r.objective, r.increment, r.residual, r.alpha, r.beta, r.wall_ms
        )?;
    }
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]; step constants are not stored
/// and come back empty.
pub fn read_trace_csv(r: impl BufRead) -> Result<Vec<IterateRecord>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(TRACE_HEADER) {
        return Err(Error::Format(format!("trace must start with `{TRACE_HEADER}`")));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::Format(format!("trace row {} has {} columns", n + 2, cols.len())));
        }
        let num = |i: usize| -> Result<f64> {
            cols[i]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("trace row {}: bad number `{}`", n + 2, cols[i])))
        };
        out.push(IterateRecord {
            k: cols[0]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("trace row {}: bad index", n + 2)))?,
            objective: num(1)?,
            increment: num(2)?,
            residual: num(3)?,
            alpha: num(4)?,
            beta: num(5)?,
            wall_ms: num(6)?,
            constants: StepConstants::default(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let rec = IterateRecord {
            k: 3,
            objective: 0.1 + 0.2,
            increment: 1e-300,
            residual: std::f64::consts::PI,
            alpha: 1.1,
            beta: 2.2,
            wall_ms: 4.5,
            constants: StepConstants::default(),
        };
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, std::slice::from_ref(&rec)).unwrap();
        let back = read_trace_csv(&buf[..]).unwrap();
        assert_eq!(back, vec![rec]);
        assert!(read_trace_csv(&b"k,F\n"[..]).is_err());
    }
}
