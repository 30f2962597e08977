//! Mesh and size-field file formats.
//!
//! OFF is the canonical interchange format; OBJ is supported for
//! convenience. Triangles only: polygonal faces with more than three sides
//! are rejected. Floats are written in shortest round-trip decimal form, so
//! write-then-read reproduces coordinates bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::geom::Point3;
use crate::{Error, Result};

/// An indexed triangle mesh: plain storage, no validity guarantees beyond
/// finite coordinates and in-range indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Self {
        TriMesh { vertices, triangles }
    }

    pub fn bbox(&self) -> Option<(Point3, Point3)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for &v in &self.vertices[1..] {
            lo = lo.min_coords(v);
            hi = hi.max_coords(v);
        }
        Some((lo, hi))
    }

    pub fn bbox_diagonal(&self) -> f64 {
        match self.bbox() {
            Some((lo, hi)) => (hi - lo).norm(),
            None => 0.0,
        }
    }
}

/// Raw size-field samples as stored on disk; binding to a host surface and
/// Lipschitz validation happen in `sizing`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSizeField {
    pub lipschitz_g: f64,
    pub samples: Vec<(Point3, f64)>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_f64(tok: &str, path: &str, line_no: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line_no, format!("expected a number, got `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line_no, "non-finite coordinate"));
    }
    Ok(v)
}

fn parse_index(tok: &str, n_vertices: usize, path: &str, line_no: usize) -> Result<u32> {
    let idx: u64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line_no, format!("expected a vertex index, got `{tok}`")))?;
    if idx >= n_vertices as u64 {
        return Err(Error::parse(
            path,
            line_no,
            format!("vertex index {idx} out of range (mesh has {n_vertices} vertices)"),
        ));
    }
    Ok(idx as u32)
}

/// Parses OFF text. Tolerates comments, blank lines and trailing tokens
/// (e.g. per-face colours); rejects non-triangle faces.
pub fn parse_off(text: &str, path: &str) -> Result<TriMesh> {
    // (line_no, content) pairs with comments and blanks removed.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l).trim()))
        .filter(|(_, l)| !l.is_empty());

    let (mut line_no, mut header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    if let Some(rest) = header.strip_prefix("OFF") {
        header = rest.trim();
        if header.is_empty() {
            let (no, l) = lines
                .next()
                .ok_or_else(|| Error::parse(path, line_no, "missing counts line"))?;
            line_no = no;
            header = l;
        }
    }
    let mut counts = header.split_whitespace();
    let nv: usize = counts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, line_no, "malformed counts line"))?;
    let nf: usize = counts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, line_no, "malformed counts line"))?;
    // Edge count is present in conforming files but unused here.

    // A vertex or face line occupies at least a few bytes; header counts
    // beyond the input size are lies from malformed input.
    if nv > text.len() || nf > text.len() {
        return Err(Error::parse(path, line_no, "counts exceed file size"));
    }

    let mut mesh = TriMesh::default();
    mesh.vertices.reserve(nv);
    for _ in 0..nv {
        let (no, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, line_no, "unexpected end of vertex list"))?;
        line_no = no;
        let mut toks = l.split_whitespace();
        let mut coord = [0.0f64; 3];
        for c in &mut coord {
            let tok = toks
                .next()
                .ok_or_else(|| Error::parse(path, no, "vertex line needs 3 coordinates"))?;
            *c = parse_f64(tok, path, no)?;
        }
        mesh.vertices.push(Point3::new(coord[0], coord[1], coord[2]));
    }

    mesh.triangles.reserve(nf);
    for _ in 0..nf {
        let (no, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, line_no, "unexpected end of face list"))?;
        line_no = no;
        let mut toks = l.split_whitespace();
        let arity: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(path, no, "malformed face line"))?;
        if arity != 3 {
            return Err(Error::parse(
                path,
                no,
                format!("only triangles are supported, got a face with {arity} sides"),
            ));
        }
        let mut tri = [0u32; 3];
        for t in &mut tri {
            let tok = toks
                .next()
                .ok_or_else(|| Error::parse(path, no, "face line needs 3 indices"))?;
            *t = parse_index(tok, mesh.vertices.len(), path, no)?;
        }
        mesh.triangles.push(tri);
    }
    Ok(mesh)
}

/// Parses Wavefront OBJ text. Supports `v` and `f` records (with `f`
/// accepting `i`, `i/t`, `i//n` and `i/t/n` forms plus negative relative
/// indices); other record types are ignored. Faces must be triangles.
pub fn parse_obj(text: &str, path: &str) -> Result<TriMesh> {
    let mut mesh = TriMesh::default();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    let tok = toks
                        .next()
                        .ok_or_else(|| Error::parse(path, no, "vertex line needs 3 coordinates"))?;
                    *c = parse_f64(tok, path, no)?;
                }
                mesh.vertices.push(Point3::new(coord[0], coord[1], coord[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = toks.collect();
                if refs.len() != 3 {
                    return Err(Error::parse(
                        path,
                        no,
                        format!("only triangles are supported, got a face with {} sides", refs.len()),
                    ));
                }
                let mut tri = [0u32; 3];
                for (slot, r) in tri.iter_mut().zip(&refs) {
                    let first = r.split('/').next().unwrap_or("");
                    let idx: i64 = first.parse().map_err(|_| {
                        Error::parse(path, no, format!("malformed face reference `{r}`"))
                    })?;
                    let n = mesh.vertices.len() as i64;
                    let resolved = if idx > 0 { idx - 1 } else { n + idx };
                    if resolved < 0 || resolved >= n {
                        return Err(Error::parse(
                            path,
                            no,
                            format!("vertex index {idx} out of range (mesh has {n} vertices)"),
                        ));
                    }
                    *slot = resolved as u32;
                }
                mesh.triangles.push(tri);
            }
            _ => {}
        }
    }
    Ok(mesh)
}

/// Serialises a mesh as OFF.
pub fn format_off(mesh: &TriMesh) -> String {
    let mut out = String::new();
    out.push_str("OFF\n");
    let _ = writeln!(out, "{} {} 0", mesh.vertices.len(), mesh.triangles.len());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    out
}

/// Serialises a mesh as OBJ.
pub fn format_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

/// Parses the `sizefield v1` text format:
/// a header line `sizefield v1 g=<g>`, then one `x y z h` line per sample.
pub fn parse_sizefield(text: &str, path: &str) -> Result<RawSizeField> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l).trim()))
        .filter(|(_, l)| !l.is_empty());
    let (no, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("sizefield") || toks.next() != Some("v1") {
        return Err(Error::parse(path, no, "expected header `sizefield v1 g=<g>`"));
    }
    let g_tok = toks
        .next()
        .and_then(|t| t.strip_prefix("g="))
        .ok_or_else(|| Error::parse(path, no, "expected header `sizefield v1 g=<g>`"))?;
    let g = parse_f64(g_tok, path, no)?;
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::parse(path, no, format!("gradient limit g={g} outside (0, 1)")));
    }

    let mut samples = Vec::new();
    for (no, l) in lines {
        let mut toks = l.split_whitespace();
        let mut vals = [0.0f64; 4];
        for v in &mut vals {
            let tok = toks
                .next()
                .ok_or_else(|| Error::parse(path, no, "sample line needs `x y z h`"))?;
            *v = parse_f64(tok, path, no)?;
        }
        if vals[3] <= 0.0 {
            return Err(Error::parse(path, no, format!("non-positive size value {}", vals[3])));
        }
        samples.push((Point3::new(vals[0], vals[1], vals[2]), vals[3]));
    }
    Ok(RawSizeField { lipschitz_g: g, samples })
}

/// Serialises a size field in the `sizefield v1` text format.
pub fn format_sizefield(g: f64, samples: &[(Point3, f64)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sizefield v1 g={g}");
    for (p, h) in samples {
        let _ = writeln!(out, "{} {} {} {}", p.x, p.y, p.z, h);
    }
    out
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a mesh, dispatching on the file extension (`.off` / `.obj`).
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    let text = read_to_string(path)?;
    let name = path.display().to_string();
    match extension(path) {
        Some("off") => parse_off(&text, &name),
        Some("obj") => parse_obj(&text, &name),
        _ => Err(Error::InvalidMesh(format!(
            "{name}: unsupported mesh extension (expected .off or .obj)"
        ))),
    }
}

/// Writes a mesh, dispatching on the file extension (`.off` / `.obj`).
pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    let name = path.display().to_string();
    let text = match extension(path) {
        Some("off") => format_off(mesh),
        Some("obj") => format_obj(mesh),
        _ => {
            return Err(Error::InvalidMesh(format!(
                "{name}: unsupported mesh extension (expected .off or .obj)"
            )))
        }
    };
    std::fs::write(path, text).map_err(|e| Error::io(name, e))
}

pub fn read_sizefield(path: &Path) -> Result<RawSizeField> {
    let text = read_to_string(path)?;
    parse_sizefield(&text, &path.display().to_string())
}

pub fn write_sizefield(path: &Path, g: f64, samples: &[(Point3, f64)]) -> Result<()> {
    std::fs::write(path, format_sizefield(g, samples))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}
