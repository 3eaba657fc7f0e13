use std::io::{Read, Write};

use super::{Breakpoint, MonotoneFn};
use crate::error::{Error, Result};
use crate::Scalar;

/// Reads a `u,left,right` table (with header) into a piecewise-affine function.
pub fn read_breakpoints_csv<F: Scalar, R: Read>(reader: R) -> Result<MonotoneFn<F>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let want = ["u", "left", "right"];
    if headers.len() != 3 || headers.iter().zip(want).any(|(h, w)| !h.eq_ignore_ascii_case(w)) {
        return Err(Error::Parse(format!("expected header u,left,right, found {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let mut pts = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut vals = [F::zero(); 3];
        for (j, v) in vals.iter_mut().enumerate() {
            let s = rec.get(j).ok_or_else(|| Error::Parse(format!("row {}: missing column", line + 2)))?;
            let x: f64 = s.parse().map_err(|_| Error::Parse(format!("row {}: bad number {s:?}", line + 2)))?;
            *v = F::c(x);
        }
        pts.push(Breakpoint { u: vals[0], left: vals[1], right: vals[2] });
    }
    MonotoneFn::from_breakpoints(&pts)
}

/// Writes a `u,left,right` table; non-affine pieces are sampled 16 times per piece.
pub fn write_breakpoints_csv<F: Scalar, W: Write>(f: &MonotoneFn<F>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["u", "left", "right"])?;
    for p in f.to_table(16) {
        w.write_record([p.u.to_string(), p.left.to_string(), p.right.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "u,left,right\n0,0,0\n0.25,0,0.25\n0.5,0.5,0.5\n0.75,0.5,0.75\n1,1,1\n";
        let f: MonotoneFn<f64> = read_breakpoints_csv(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_breakpoints_csv(&f, &mut buf).unwrap();
        let g: MonotoneFn<f64> = read_breakpoints_csv(buf.as_slice()).unwrap();
        assert_eq!(f.breakpoints(), g.breakpoints());
    }

    #[test]
    fn rejects_bad_header_and_numbers() {
        assert!(read_breakpoints_csv::<f64, _>("a,b,c\n0,0,0\n1,1,1\n".as_bytes()).is_err());
        assert!(read_breakpoints_csv::<f64, _>("u,left,right\n0,0,x\n1,1,1\n".as_bytes()).is_err());
    }
}
