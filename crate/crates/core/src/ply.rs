//! ASCII PLY reading and writing.
//!
//! The interchange schema is deliberately narrow: `element vertex N` with
//! float properties `x y z`, optional float `nx ny nz`, and an optional
//! integer `label` per vertex. Floats are written with fixed `%.6f`
//! formatting, one vertex per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::pointcloud::{Point3, PointCloud};

/// Everything parsed out of a PLY file.
#[derive(Debug, Clone)]
pub struct PlyContents {
    pub cloud: PointCloud,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub labels: Option<Vec<i32>>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::PlyParse {
        line,
        msg: msg.into(),
    }
}

/// Load an ASCII PLY file.
///
/// Optional `nx ny nz` and `label` vertex properties are returned as
/// sidecar arrays. Unknown vertex properties are skipped. Non-finite
/// coordinates and malformed headers are reported with their line number.
pub fn load_ply(path: &Path) -> Result<PlyContents> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let mut line_no;
    let next_line = |lines: &mut std::iter::Enumerate<std::io::Lines<BufReader<File>>>|
     -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((i, Ok(text))) => Ok(Some((i + 1, text))),
            Some((i, Err(e))) => Err(parse_err(i + 1, format!("unreadable line: {e}"))),
            None => Ok(None),
        }
    };

    let (n, magic) = next_line(&mut lines)?
        .ok_or_else(|| parse_err(1, "empty file"))?;
    line_no = n;
    if magic.trim() != "ply" {
        return Err(parse_err(line_no, "missing `ply` magic"));
    }

    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    let mut saw_format = false;

    loop {
        let (n, line) = next_line(&mut lines)?
            .ok_or_else(|| parse_err(line_no, "unexpected end of header"))?;
        line_no = n;
        let line = line.trim().to_string();
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first().copied() {
            Some("format") => {
                if tokens.get(1) != Some(&"ascii") {
                    return Err(parse_err(
                        line_no,
                        format!("unsupported encoding `{}` (only ascii 1.0)", tokens.get(1).unwrap_or(&"?")),
                    ));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                match tokens.get(1).copied() {
                    Some("vertex") => {
                        let count: usize = tokens
                            .get(2)
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| parse_err(line_no, "bad vertex count"))?;
                        vertex_count = Some(count);
                        in_vertex_element = true;
                    }
                    Some(other) => {
                        return Err(parse_err(
                            line_no,
                            format!("unsupported element `{other}`"),
                        ));
                    }
                    None => return Err(parse_err(line_no, "element without a name")),
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    return Err(parse_err(line_no, "property before any element"));
                }
                let name = tokens
                    .last()
                    .copied()
                    .ok_or_else(|| parse_err(line_no, "property without a name"))?;
                properties.push(name.to_string());
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(parse_err(line_no, format!("unknown header keyword `{other}`")));
            }
            None => {}
        }
    }

    if !saw_format {
        return Err(parse_err(line_no, "missing `format` line"));
    }
    let vertex_count =
        vertex_count.ok_or_else(|| parse_err(line_no, "missing `element vertex`"))?;

    let col = |name: &str| properties.iter().position(|p| p == name);
    let (cx, cy, cz) = match (col("x"), col("y"), col("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(parse_err(line_no, "vertex element lacks x/y/z properties")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let label_col = col("label");

    let mut points = Vec::with_capacity(vertex_count);
    let mut normals = normal_cols.map(|_| Vec::with_capacity(vertex_count));
    let mut labels = label_col.map(|_| Vec::with_capacity(vertex_count));

    for _ in 0..vertex_count {
        let (n, line) = next_line(&mut lines)?
            .ok_or_else(|| parse_err(line_no, "fewer vertex lines than declared"))?;
        line_no = n;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < properties.len() {
            return Err(parse_err(
                line_no,
                format!("expected {} fields, got {}", properties.len(), fields.len()),
            ));
        }
        let float_at = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("bad float `{}`", fields[i])))
        };
        let p = Point3::new(float_at(cx)?, float_at(cy)?, float_at(cz)?);
        if !p.is_finite() {
            return Err(parse_err(line_no, "non-finite coordinate"));
        }
        points.push(p);
        if let (Some((a, b, c)), Some(out)) = (normal_cols, normals.as_mut()) {
            out.push(Vector3::new(float_at(a)?, float_at(b)?, float_at(c)?));
        }
        if let (Some(i), Some(out)) = (label_col, labels.as_mut()) {
            let v: i32 = fields[i]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad label `{}`", fields[i])))?;
            out.push(v);
        }
    }

    Ok(PlyContents {
        cloud: PointCloud::new(points, ""),
        normals,
        labels,
    })
}

/// Write an ASCII PLY file. The header declares exactly the properties
/// provided; sidecar arrays must match the cloud length.
pub fn save_ply(
    path: &Path,
    cloud: &PointCloud,
    normals: Option<&[Vector3<f64>]>,
    labels: Option<&[i32]>,
) -> Result<()> {
    if let Some(ns) = normals {
        if ns.len() != cloud.len() {
            return Err(Error::InvalidArgument {
                name: "normals",
                msg: format!("length {} != cloud size {}", ns.len(), cloud.len()),
            });
        }
    }
    if let Some(ls) = labels {
        if ls.len() != cloud.len() {
            return Err(Error::InvalidArgument {
                name: "labels",
                msg: format!("length {} != cloud size {}", ls.len(), cloud.len()),
            });
        }
    }

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    writeln!(w, "ply").map_err(io_err)?;
    writeln!(w, "format ascii 1.0").map_err(io_err)?;
    writeln!(w, "element vertex {}", cloud.len()).map_err(io_err)?;
    writeln!(w, "property float x").map_err(io_err)?;
    writeln!(w, "property float y").map_err(io_err)?;
    writeln!(w, "property float z").map_err(io_err)?;
    if normals.is_some() {
        writeln!(w, "property float nx").map_err(io_err)?;
        writeln!(w, "property float ny").map_err(io_err)?;
        writeln!(w, "property float nz").map_err(io_err)?;
    }
    if labels.is_some() {
        writeln!(w, "property int label").map_err(io_err)?;
    }
    writeln!(w, "end_header").map_err(io_err)?;

    for (i, p) in cloud.points().iter().enumerate() {
        write!(w, "{:.6} {:.6} {:.6}", p.x, p.y, p.z).map_err(io_err)?;
        if let Some(ns) = normals {
            write!(w, " {:.6} {:.6} {:.6}", ns[i].x, ns[i].y, ns[i].z).map_err(io_err)?;
        }
        if let Some(ls) = labels {
            write!(w, " {}", ls[i]).map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
