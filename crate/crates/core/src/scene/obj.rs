use std::collections::HashMap;
use std::path::Path;

use nalgebra::Point3;

use super::Mesh;
use crate::error::{Error, Result};

/// Loads the Wavefront OBJ subset used for scene geometry.
///
/// `v` and `f` are read; polygons are fan-triangulated in declaration order;
/// `o` and `g` start a new object label. Labels are numbered by first
/// appearance, starting at 0 (faces before any `o`/`g` take label 0 and
/// named groups then start at 1). Every other directive is ignored.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<Mesh> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    // (line, raw 1-based or negative index resolved later)
    let mut faces: Vec<(usize, [usize; 3])> = Vec::new();
    let mut object_ids = Vec::new();
    let mut names: HashMap<String, u32> = HashMap::new();
    let mut current: Option<u32> = None;
    let mut implicit_used = false;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(directive) = tokens.next() else {
            continue;
        };
        match directive {
            "v" => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| parse_err(lineno, format!("bad coordinate {t:?}")))
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(parse_err(lineno, "vertex needs 3 coordinates".into()));
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(parse_err(lineno, "non-finite coordinate".into()));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let mut idx = Vec::new();
                for t in tokens {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad face index {t:?}")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(parse_err(lineno, "face index 0 is invalid".into()));
                    };
                    if resolved < 0 {
                        return Err(parse_err(lineno, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(parse_err(lineno, "face needs at least 3 vertices".into()));
                }
                let id = match current {
                    Some(id) => id,
                    None => {
                        implicit_used = true;
                        0
                    }
                };
                for k in 1..idx.len() - 1 {
                    faces.push((lineno, [idx[0], idx[k], idx[k + 1]]));
                    object_ids.push(id);
                }
            }
            "o" | "g" => {
                let name: String = tokens.collect::<Vec<_>>().join(" ");
                let next = names.len() as u32 + implicit_used as u32;
                current = Some(*names.entry(name).or_insert(next));
            }
            _ => {}
        }
    }

    if faces.is_empty() {
        return Err(Error::Mesh(format!("{}: mesh has no faces", path.display())));
    }
    let nv = vertices.len();
    let mut triangles = Vec::with_capacity(faces.len());
    for (lineno, tri) in faces {
        if let Some(&bad) = tri.iter().find(|&&i| i >= nv) {
            return Err(parse_err(
                lineno,
                format!("vertex index {} out of range ({nv} vertices)", bad + 1),
            ));
        }
        triangles.push(tri.map(|i| i as u32));
    }
    Mesh::new(vertices, triangles, object_ids)
}
