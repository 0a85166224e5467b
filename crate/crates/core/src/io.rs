//! Text formats: correspondences, ASCII OBJ and PLY meshes, point lists and
//! camera intrinsics.
//!
//! Every parser works on a string plus the path it came from, so errors carry
//! a location. `read_*` helpers add the file access. Emitters write numbers
//! with Rust's shortest round-trip formatting, so emit-then-parse is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point2, Point3};

use crate::consensus::{Correspondence, Label, LabelVector, MatchSet};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::pose::CameraIntrinsics;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Lines<'a> {
    origin: PathBuf,
    inner: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Numbered, trimmed, non-empty lines; `#` starts a comment when
    /// `comments` is set.
    fn new(text: &'a str, origin: &Path, comments: bool) -> Self {
        let inner = text.lines().enumerate().filter_map(move |(i, l)| {
            let l = if comments { l.split('#').next().unwrap_or("") } else { l };
            let l = l.trim();
            (!l.is_empty()).then_some((i + 1, l))
        });
        Lines {
            origin: origin.to_path_buf(),
            inner: Box::new(inner),
            last: 0,
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Malformed {
            path: self.origin.clone(),
            line,
            message: message.into(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((n, l)) => {
                self.last = n;
                Ok((n, l))
            }
            None => Err(self.err(self.last + 1, format!("unexpected end of file, expected {what}"))),
        }
    }

    fn index(&self, line: usize, token: &str) -> Result<usize> {
        match token.parse::<i64>() {
            Ok(v) if v >= 0 => Ok(v as usize),
            Ok(v) => Err(self.err(line, format!("negative index {v}"))),
            Err(_) => Err(self.err(line, format!("bad integer {token:?}"))),
        }
    }

    fn real(&self, line: usize, token: &str) -> Result<f64> {
        match token.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(line, format!("bad number {token:?}"))),
        }
    }

    fn reals<const N: usize>(&self, line: usize, tokens: &[&str]) -> Result<[f64; N]> {
        if tokens.len() != N {
            return Err(self.err(line, format!("expected {N} numbers, found {}", tokens.len())));
        }
        let mut out = [0.0; N];
        for (o, t) in out.iter_mut().zip(tokens) {
            *o = self.real(line, t)?;
        }
        Ok(out)
    }

    fn count(&mut self) -> Result<usize> {
        let (n, l) = self.next_line("a count")?;
        self.index(n, l)
    }

    fn expect_end(&mut self) -> Result<()> {
        match self.inner.next() {
            Some((n, _)) => Err(self.err(n, "trailing data after the declared count")),
            None => Ok(()),
        }
    }
}

/// Correspondence file: a count, then `src tgt [gt]` per line, 0-based. The
/// optional ground-truth flag is 1 for outlier and 0 for inlier, and must be
/// present on either every line or none.
pub fn parse_matches(text: &str, origin: &Path) -> Result<MatchSet> {
    let mut lines = Lines::new(text, origin, true);
    let count = lines.count()?;
    let mut pairs = Vec::with_capacity(count);
    let mut flags = Vec::with_capacity(count);
    for k in 0..count {
        let (n, l) = lines.next_line(&format!("match {k}"))?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        if tokens.len() != 2 && tokens.len() != 3 {
            return Err(lines.err(n, "expected \"src tgt [gt]\""));
        }
        pairs.push(Correspondence {
            source: lines.index(n, tokens[0])?,
            target: lines.index(n, tokens[1])?,
        });
        let flag = match tokens.get(2) {
            None => None,
            Some(&"0") => Some(Label::Inlier),
            Some(&"1") => Some(Label::Outlier),
            Some(t) => return Err(lines.err(n, format!("ground-truth flag must be 0 or 1, got {t:?}"))),
        };
        if k > 0 && flag.is_some() != (flags.len() == k) {
            return Err(lines.err(n, "ground-truth flag present on some lines only"));
        }
        flags.extend(flag);
    }
    lines.expect_end()?;
    let set = MatchSet::new(pairs);
    Ok(if flags.is_empty() || count == 0 {
        set
    } else {
        set.with_ground_truth(LabelVector(flags))
    })
}

pub fn emit_matches(matches: &MatchSet) -> String {
    let mut out = format!("{}\n", matches.len());
    for (k, c) in matches.pairs.iter().enumerate() {
        let _ = match &matches.gt_labels {
            Some(gt) => writeln!(out, "{} {} {}", c.source, c.target, u8::from(gt[k].is_outlier())),
            None => writeln!(out, "{} {}", c.source, c.target),
        };
    }
    out
}

pub fn read_matches(path: &Path) -> Result<MatchSet> {
    parse_matches(&read_text(path)?, path)
}

/// ASCII OBJ: `v x y z` and `f a b c ...` records, 1-based. Face entries may
/// carry `/vt/vn` suffixes; polygons are fan-triangulated. Other records are
/// ignored.
pub fn parse_obj(text: &str, origin: &Path) -> Result<TriMesh> {
    let mut lines = Lines::new(text, origin, true);
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, Vec<usize>)> = Vec::new();
    while let Some((n, l)) = lines.inner.next() {
        let mut tokens = l.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let rest: Vec<&str> = tokens.collect();
                // an optional fourth weight component is tolerated
                if rest.len() != 3 && rest.len() != 4 {
                    return Err(lines.err(n, "vertex needs 3 coordinates"));
                }
                let [x, y, z] = lines.reals::<3>(n, &rest[..3])?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let idx = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        match head.parse::<i64>() {
                            Ok(v) if v >= 1 => Ok(v as usize - 1),
                            Ok(v) => Err(lines.err(n, format!("face index {v} must be >= 1"))),
                            Err(_) => Err(lines.err(n, format!("bad face index {t:?}"))),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() < 3 {
                    return Err(lines.err(n, "face needs at least 3 vertices"));
                }
                faces.push((n, idx));
            }
            _ => {}
        }
    }
    let mut triangles = Vec::new();
    for (n, idx) in faces {
        if let Some(bad) = idx.iter().find(|&&i| i >= vertices.len()) {
            return Err(lines.err(n, format!("face index {} exceeds {} vertices", bad + 1, vertices.len())));
        }
        for k in 1..idx.len() - 1 {
            triangles.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    TriMesh::new(vertices, triangles).map_err(|e| lines.err(0, e.to_string()))
}

pub fn emit_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

struct PlyElement {
    name: String,
    count: usize,
    /// Scalar property names; a list property is recorded as `None`.
    props: Vec<Option<String>>,
}

/// ASCII PLY with a `vertex` element (x, y, z among its scalar properties)
/// and an optional `face` element whose list property holds the indices.
pub fn parse_ply(text: &str, origin: &Path) -> Result<TriMesh> {
    let mut lines = Lines::new(text, origin, false);
    let (n, magic) = lines.next_line("ply magic")?;
    if magic != "ply" {
        return Err(lines.err(n, "missing \"ply\" magic"));
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (n, l) = lines.next_line("end_header")?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        match tokens[0] {
            "format" => {
                if tokens.get(1) != Some(&"ascii") {
                    return Err(lines.err(n, "only ascii PLY is supported"));
                }
            }
            "comment" | "obj_info" => {}
            "element" => {
                let [_, name, count] = tokens[..] else {
                    return Err(lines.err(n, "expected \"element name count\""));
                };
                elements.push(PlyElement {
                    name: name.to_string(),
                    count: lines.index(n, count)?,
                    props: Vec::new(),
                });
            }
            "property" => {
                let Some(el) = elements.last_mut() else {
                    return Err(lines.err(n, "property before any element"));
                };
                match tokens[..] {
                    ["property", "list", _, _, _] => el.props.push(None),
                    ["property", _, name] => el.props.push(Some(name.to_string())),
                    _ => return Err(lines.err(n, "malformed property")),
                }
            }
            "end_header" => break,
            other => return Err(lines.err(n, format!("unknown header keyword {other:?}"))),
        }
    }

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        let xyz = ["x", "y", "z"].map(|c| el.props.iter().position(|p| p.as_deref() == Some(c)));
        for k in 0..el.count {
            let (n, l) = lines.next_line(&format!("{} {k}", el.name))?;
            let tokens: Vec<&str> = l.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let [Some(x), Some(y), Some(z)] = xyz else {
                        return Err(lines.err(n, "vertex element lacks x, y, z"));
                    };
                    if tokens.len() != el.props.len() {
                        return Err(lines.err(n, format!("expected {} values", el.props.len())));
                    }
                    vertices.push(Point3::new(
                        lines.real(n, tokens[x])?,
                        lines.real(n, tokens[y])?,
                        lines.real(n, tokens[z])?,
                    ));
                }
                "face" => {
                    let (first, rest) = tokens.split_first().ok_or_else(|| lines.err(n, "empty face"))?;
                    let m = lines.index(n, first)?;
                    if m < 3 || rest.len() < m {
                        return Err(lines.err(n, "face list is too short"));
                    }
                    let idx = rest[..m]
                        .iter()
                        .map(|t| lines.index(n, t))
                        .collect::<Result<Vec<_>>>()?;
                    if let Some(bad) = idx.iter().find(|&&i| i >= vertices.len()) {
                        return Err(lines.err(n, format!("face index {bad} exceeds {} vertices", vertices.len())));
                    }
                    for j in 1..m - 1 {
                        triangles.push([idx[0], idx[j], idx[j + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    lines.expect_end()?;
    TriMesh::new(vertices, triangles).map_err(|e| lines.err(0, e.to_string()))
}

pub fn emit_ply(mesh: &TriMesh) -> String {
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.triangles().len()
    );
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    out
}

/// Dispatches on the extension (`.obj` or `.ply`, case-insensitive).
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => parse_obj(&read_text(path)?, path),
        Some("ply") => parse_ply(&read_text(path)?, path),
        _ => Err(Error::Malformed {
            path: path.to_path_buf(),
            line: 0,
            message: "mesh files must end in .obj or .ply".into(),
        }),
    }
}

/// Point list: a count, then `x y z` per line.
pub fn parse_points3(text: &str, origin: &Path) -> Result<Vec<Point3<f64>>> {
    let mut lines = Lines::new(text, origin, true);
    let count = lines.count()?;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let (n, l) = lines.next_line(&format!("point {k}"))?;
        let [x, y, z] = lines.reals::<3>(n, &l.split_whitespace().collect::<Vec<_>>())?;
        out.push(Point3::new(x, y, z));
    }
    lines.expect_end()?;
    Ok(out)
}

/// Pixel list: a count, then `u v` per line.
pub fn parse_points2(text: &str, origin: &Path) -> Result<Vec<Point2<f64>>> {
    let mut lines = Lines::new(text, origin, true);
    let count = lines.count()?;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let (n, l) = lines.next_line(&format!("pixel {k}"))?;
        let [u, v] = lines.reals::<2>(n, &l.split_whitespace().collect::<Vec<_>>())?;
        out.push(Point2::new(u, v));
    }
    lines.expect_end()?;
    Ok(out)
}

pub fn emit_points3(points: &[Point3<f64>]) -> String {
    let mut out = format!("{}\n", points.len());
    for p in points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

pub fn emit_points2(points: &[Point2<f64>]) -> String {
    let mut out = format!("{}\n", points.len());
    for p in points {
        let _ = writeln!(out, "{} {}", p.x, p.y);
    }
    out
}

pub fn read_points3(path: &Path) -> Result<Vec<Point3<f64>>> {
    parse_points3(&read_text(path)?, path)
}

pub fn read_points2(path: &Path) -> Result<Vec<Point2<f64>>> {
    parse_points2(&read_text(path)?, path)
}

/// JSON object with `fx`, `fy`, `cx`, `cy`.
pub fn parse_intrinsics(text: &str, origin: &Path) -> Result<CameraIntrinsics> {
    let k: CameraIntrinsics = serde_json::from_str(text).map_err(|e| Error::Malformed {
        path: origin.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    k.validate().map_err(|e| Error::Malformed {
        path: origin.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    Ok(k)
}

pub fn emit_intrinsics(k: &CameraIntrinsics) -> String {
    let mut s = serde_json::to_string_pretty(k).expect("plain struct serializes");
    s.push('\n');
    s
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    parse_intrinsics(&read_text(path)?, path)
}
