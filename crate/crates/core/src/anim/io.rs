//! Line-oriented text interchange format.
//!
//! ```text
//! ANIM <N> <P> <num_faces>
//! v x y z            (N lines, rest pose)
//! f i j k            (num_faces lines, 0-based)
//! frame <p>          (P blocks)
//! x y z              (N lines each)
//! ```
//!
//! Reals are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::io::{BufRead, Write};

use super::{AnimSequence, Vec3};
use crate::error::{Error, Result};

/// Writes `seq` in the text format.
pub fn write_anim<W: Write>(seq: &AnimSequence, mut out: W) -> std::io::Result<()> {
    writeln!(out, "ANIM {} {} {}", seq.vertex_count(), seq.frame_count(), seq.faces().len())?;
    for v in seq.rest_pose() {
        writeln!(out, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)?;
    }
    for [a, b, c] in seq.faces() {
        writeln!(out, "f {a} {b} {c}")?;
    }
    for (p, frame) in seq.frames().iter().enumerate() {
        writeln!(out, "frame {p}")?;
        for v in frame {
            writeln!(out, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)?;
        }
    }
    out.flush()
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                None => return Err(self.error("unexpected end of file")),
                Some(Err(e)) => return Err(self.error(&e.to_string())),
                Some(Ok(s)) if s.trim().is_empty() => continue,
                Some(Ok(s)) => return Ok(s),
            }
        }
    }

    fn error(&self, message: &str) -> Error {
        Error::Parse { line: self.line, message: message.to_string() }
    }

    fn fields<'a>(&self, s: &'a str, tag: Option<&str>, count: usize) -> Result<Vec<&'a str>> {
        let mut parts = s.split_whitespace();
        if let Some(tag) = tag {
            if parts.next() != Some(tag) {
                return Err(self.error(&format!("expected `{tag}` line, found `{s}`")));
            }
        }
        let rest: Vec<&str> = parts.collect();
        if rest.len() != count {
            return Err(self.error(&format!("expected {count} fields, found {}", rest.len())));
        }
        Ok(rest)
    }

    fn vec3(&self, fields: &[&str]) -> Result<Vec3> {
        let mut c = [0.0; 3];
        for (slot, s) in c.iter_mut().zip(fields) {
            *slot = s.parse().map_err(|_| self.error(&format!("bad number `{s}`")))?;
        }
        Ok(Vec3::from(c))
    }

    fn uint(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.error(&format!("bad integer `{s}`")))
    }
}

/// Parses the text format. Invariants of [`AnimSequence`] are checked.
pub fn read_anim<R: BufRead>(input: R) -> Result<AnimSequence> {
    let mut lines = Lines { inner: input.lines(), line: 0 };
    let header = lines.next_line()?;
    let h = lines.fields(&header, Some("ANIM"), 3)?;
    let (n, p, nf) = (lines.uint(h[0])?, lines.uint(h[1])?, lines.uint(h[2])?);

    let mut rest = Vec::with_capacity(n);
    for _ in 0..n {
        let s = lines.next_line()?;
        let f = lines.fields(&s, Some("v"), 3)?;
        rest.push(lines.vec3(&f)?);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let s = lines.next_line()?;
        let f = lines.fields(&s, Some("f"), 3)?;
        faces.push([lines.uint(f[0])?, lines.uint(f[1])?, lines.uint(f[2])?]);
    }
    let mut frames = Vec::with_capacity(p);
    for expected in 0..p {
        let s = lines.next_line()?;
        let f = lines.fields(&s, Some("frame"), 1)?;
        if lines.uint(f[0])? != expected {
            return Err(lines.error(&format!("expected frame {expected}")));
        }
        let mut frame = Vec::with_capacity(n);
        for _ in 0..n {
            let s = lines.next_line()?;
            let f = lines.fields(&s, None, 3)?;
            frame.push(lines.vec3(&f)?);
        }
        frames.push(frame);
    }
    AnimSequence::new(rest, frames, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anim::make_synthetic_rig;

    #[test]
    fn round_trip_is_exact() {
        let (seq, _, _) = make_synthetic_rig(2, 15, 4, 11).unwrap();
        let mut buf = Vec::new();
        write_anim(&seq, &mut buf).unwrap();
        let back = read_anim(buf.as_slice()).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn header_shape() {
        let seq = AnimSequence::new(vec![Vec3::zeros(); 3], vec![vec![Vec3::x(); 3]; 2], vec![[0, 1, 2]]).unwrap();
        let mut buf = Vec::new();
        write_anim(&seq, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "ANIM 3 2 1");
        assert_eq!(lines[4], "f 0 1 2");
        assert_eq!(lines[5], "frame 0");
        assert_eq!(lines.len(), 1 + 3 + 1 + 2 * 4);
    }

    #[test]
    fn truncated_file_reports_line() {
        let err = read_anim("ANIM 2 1 0\nv 0 0 0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn face_index_checked() {
        let text = "ANIM 1 1 1\nv 0 0 0\nf 0 0 3\nframe 0\n0 0 0\n";
        assert!(matches!(read_anim(text.as_bytes()), Err(Error::FaceOutOfRange { .. })));
    }
}
