//! OFF, OBJ and ASCII PLY readers and writers.
//!
//! Coordinates are written with the shortest representation that parses back
//! to the same `f64`, so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("off") => Ok(MeshFormat::Off),
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::Format(format!(
                "cannot infer mesh format from {}",
                path.display()
            ))),
        }
    }
}

pub type Rgb = [u8; 3];

pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read(path)
        .map_err(|e| Error::io(path, e))
        .and_then(|bytes| {
            String::from_utf8(bytes).map_err(|_| {
                Error::Format(format!("{} is not UTF-8 text (binary file?)", path.display()))
            })
        })
}

/// Writes a dense matrix as whitespace-separated rows.
pub fn save_matrix(m: &nalgebra::DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a matrix written by [`save_matrix`]; all rows must have equal length.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<nalgebra::DMatrix<f64>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::Parse {
                    line: k + 1,
                    msg: format!("bad number {t:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("expected {} values, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(nalgebra::DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Loads a mesh, inferring the format from the file extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    load_mesh_as(path, MeshFormat::from_path(path)?)
}

pub fn load_mesh_as(path: impl AsRef<Path>, format: MeshFormat) -> Result<Mesh> {
    let path = path.as_ref();
    if format == MeshFormat::Ply {
        // checked before the UTF-8 decode so binary PLY gets a precise message
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let head = &bytes[..bytes.len().min(256)];
        let head = String::from_utf8_lossy(head);
        if head.contains("format binary") {
            return Err(Error::Format("binary PLY is not supported; convert to ASCII".into()));
        }
    }
    let text = read_text(path)?;
    let (v, t) = match format {
        MeshFormat::Off => parse_off(&text)?,
        MeshFormat::Obj => parse_obj(&text)?,
        MeshFormat::Ply => {
            let (v, t, _) = parse_ply(&text)?;
            (v, t)
        }
    };
    Mesh::new(v, t)
}

/// Loads an ASCII PLY together with its per-vertex colors, if present.
pub fn load_ply_with_colors(path: impl AsRef<Path>) -> Result<(Mesh, Option<Vec<Rgb>>)> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let (v, t, c) = parse_ply(&text)?;
    Ok((Mesh::new(v, t)?, c))
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match MeshFormat::from_path(path)? {
        MeshFormat::Off => write_off(mesh),
        MeshFormat::Obj => write_obj(mesh),
        MeshFormat::Ply => write_ply(mesh, None),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_ply_colored(mesh: &Mesh, colors: &[Rgb], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if colors.len() != mesh.num_vertices() {
        return Err(Error::dims(mesh.num_vertices(), colors.len()));
    }
    fs::write(path, write_ply(mesh, Some(colors))).map_err(|e| Error::io(path, e))
}

/// Meaningful lines with their 1-based line numbers, `#` comments stripped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {what} '{tok}'"),
    })
}

pub fn parse_off(text: &str) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    let mut lines = content_lines(text).peekable();
    let (first_line, first) = *lines.peek().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let counts_src = if first.starts_with("OFF") {
        lines.next();
        let rest = first[3..].trim();
        if rest.is_empty() {
            lines.next()
        } else {
            Some((first_line, rest))
        }
    } else {
        lines.next()
    };
    let (cl, counts) = counts_src.ok_or(Error::Parse {
        line: first_line,
        msg: "missing element counts".into(),
    })?;
    let mut toks = counts.split_whitespace();
    let nv: usize = parse_num(toks.next(), cl, "vertex count")?;
    let nf: usize = parse_num(toks.next(), cl, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines.next().ok_or(Error::Parse {
            line: cl,
            msg: format!("expected {nv} vertices"),
        })?;
        let mut t = s.split_whitespace();
        vertices.push([
            parse_num(t.next(), l, "x")?,
            parse_num(t.next(), l, "y")?,
            parse_num(t.next(), l, "z")?,
        ]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines.next().ok_or(Error::Parse {
            line: cl,
            msg: format!("expected {nf} faces"),
        })?;
        let mut t = s.split_whitespace();
        let k: usize = parse_num(t.next(), l, "face size")?;
        if k != 3 {
            return Err(Error::Parse {
                line: l,
                msg: format!("only triangles are supported, found a {k}-gon"),
            });
        }
        faces.push([
            parse_num(t.next(), l, "index")?,
            parse_num(t.next(), l, "index")?,
            parse_num(t.next(), l, "index")?,
        ]);
    }
    Ok((vertices, faces))
}

pub fn parse_obj(text: &str) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (l, s) in content_lines(text) {
        let mut t = s.split_whitespace();
        match t.next() {
            Some("v") => vertices.push([
                parse_num(t.next(), l, "x")?,
                parse_num(t.next(), l, "y")?,
                parse_num(t.next(), l, "z")?,
            ]),
            Some("f") => {
                let idx: Vec<&str> = t.collect();
                if idx.len() != 3 {
                    return Err(Error::Parse {
                        line: l,
                        msg: format!("only triangles are supported, found {} indices", idx.len()),
                    });
                }
                let mut face = [0usize; 3];
                for (slot, tok) in face.iter_mut().zip(&idx) {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = parse_num(Some(head), l, "index")?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        -1
                    };
                    if resolved < 0 {
                        return Err(Error::Parse {
                            line: l,
                            msg: format!("invalid face index {i}"),
                        });
                    }
                    *slot = resolved as usize;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
    // parallel to `props`: true for list properties
    list_props: Vec<bool>,
}

pub fn parse_ply(text: &str) -> Result<(Vec<Point3>, Vec<[usize; 3]>, Option<Vec<Rgb>>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "missing 'ply' magic".into(),
            })
        }
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    loop {
        let (l, s) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "unterminated header".into(),
        })?;
        let mut t = s.split_whitespace();
        match t.next() {
            Some("format") => {
                let f = t.next().unwrap_or("");
                if f != "ascii" {
                    return Err(Error::Format(format!(
                        "PLY format '{f}' is not supported; only ascii"
                    )));
                }
                saw_format = true;
            }
            Some("element") => {
                let name = t.next().unwrap_or("").to_string();
                let count = parse_num(t.next(), l, "element count")?;
                elements.push(PlyElement {
                    name,
                    count,
                    props: Vec::new(),
                    list_props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or(Error::Parse {
                    line: l,
                    msg: "property before element".into(),
                })?;
                let rest: Vec<&str> = t.collect();
                let is_list = rest.first() == Some(&"list");
                el.props.push(rest.last().unwrap_or(&"").to_string());
                el.list_props.push(is_list);
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    if !saw_format {
        return Err(Error::Parse {
            line: 2,
            msg: "missing format line".into(),
        });
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut colors: Option<Vec<Rgb>> = None;
    let mut body = lines.filter(|(_, s)| !s.is_empty());
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let pos = |n: &str| el.props.iter().position(|p| p == n);
                let (xi, yi, zi) = match (pos("x"), pos("y"), pos("z")) {
                    (Some(a), Some(b), Some(c)) => (a, b, c),
                    _ => {
                        return Err(Error::Format("PLY vertex element lacks x/y/z".into()));
                    }
                };
                let rgb = match (pos("red"), pos("green"), pos("blue")) {
                    (Some(a), Some(b), Some(c)) => Some((a, b, c)),
                    _ => None,
                };
                let mut cols = Vec::new();
                for _ in 0..el.count {
                    let (l, s) = body.next().ok_or(Error::Parse {
                        line: 0,
                        msg: format!("expected {} vertices", el.count),
                    })?;
                    let toks: Vec<&str> = s.split_whitespace().collect();
                    if toks.len() < el.props.len() {
                        return Err(Error::Parse {
                            line: l,
                            msg: "too few vertex properties".into(),
                        });
                    }
                    vertices.push([
                        parse_num(Some(toks[xi]), l, "x")?,
                        parse_num(Some(toks[yi]), l, "y")?,
                        parse_num(Some(toks[zi]), l, "z")?,
                    ]);
                    if let Some((r, g, b)) = rgb {
                        cols.push([
                            parse_num(Some(toks[r]), l, "red")?,
                            parse_num(Some(toks[g]), l, "green")?,
                            parse_num(Some(toks[b]), l, "blue")?,
                        ]);
                    }
                }
                if rgb.is_some() {
                    colors = Some(cols);
                }
            }
            "face" => {
                if el.list_props.first() != Some(&true) {
                    return Err(Error::Format("PLY face element must start with a list".into()));
                }
                for _ in 0..el.count {
                    let (l, s) = body.next().ok_or(Error::Parse {
                        line: 0,
                        msg: format!("expected {} faces", el.count),
                    })?;
                    let mut t = s.split_whitespace();
                    let k: usize = parse_num(t.next(), l, "face size")?;
                    if k != 3 {
                        return Err(Error::Parse {
                            line: l,
                            msg: format!("only triangles are supported, found a {k}-gon"),
                        });
                    }
                    faces.push([
                        parse_num(t.next(), l, "index")?,
                        parse_num(t.next(), l, "index")?,
                        parse_num(t.next(), l, "index")?,
                    ]);
                }
            }
            _ => {
                for _ in 0..el.count {
                    body.next();
                }
            }
        }
    }
    Ok((vertices, faces, colors))
}

pub fn write_off(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", mesh.num_vertices(), mesh.num_triangles());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]));
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn write_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for p in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]));
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn write_ply(mesh: &Mesh, colors: Option<&[Rgb]>) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", mesh.num_vertices());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    let _ = writeln!(s, "element face {}", mesh.num_triangles());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = write!(s, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]));
        if let Some(c) = colors {
            let _ = write!(s, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        s.push('\n');
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}
