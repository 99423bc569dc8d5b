//! ASCII mesh file format.
//!
//! ```text
//! $Nodes
//! <count>
//! <id> <x> <y>
//! ...
//! $Cells
//! <count>
//! <id> <v0> <v1> <v2>
//! ...
//! $Boundary
//! <count>
//! <id> <v0> <v1> <D|N>
//! ```
//!
//! All indices are 0-based. The writer emits the same format, so refined
//! meshes round-trip.

use super::{BoundaryMarker, Mesh};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub fn write_mesh_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    writeln!(out, "$Nodes").unwrap();
    writeln!(out, "{}", mesh.n_vertices()).unwrap();
    for (i, v) in mesh.vertices().iter().enumerate() {
        writeln!(out, "{} {:.17e} {:.17e}", i, v[0], v[1]).unwrap();
    }
    writeln!(out, "$Cells").unwrap();
    writeln!(out, "{}", mesh.n_cells()).unwrap();
    for (i, c) in mesh.cells().iter().enumerate() {
        writeln!(out, "{} {} {} {}", i, c[0], c[1], c[2]).unwrap();
    }
    let boundary: Vec<_> = mesh.boundary_edges().collect();
    writeln!(out, "$Boundary").unwrap();
    writeln!(out, "{}", boundary.len()).unwrap();
    for (i, (e, marker)) in boundary.iter().enumerate() {
        let [a, b] = mesh.edge(*e).vertices;
        let m = match marker {
            BoundaryMarker::Dirichlet => "D",
            BoundaryMarker::Neumann => "N",
        };
        writeln!(out, "{i} {a} {b} {m}").unwrap();
    }
    out
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, write_mesh_string(mesh))?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    read_mesh_str(&std::fs::read_to_string(path)?)
}

pub fn read_mesh_str(text: &str) -> Result<Mesh> {
    let mut parser = Parser {
        lines: text.lines().enumerate(),
    };

    parser.expect_section("$Nodes")?;
    let n_nodes = parser.count()?;
    let mut vertices = vec![[f64::NAN; 2]; n_nodes];
    for _ in 0..n_nodes {
        let (line_no, fields) = parser.fields(3)?;
        let id: usize = parse(&fields[0], line_no)?;
        if id >= n_nodes {
            return Err(fmt_err(line_no, format!("node id {id} out of range")));
        }
        vertices[id] = [parse(&fields[1], line_no)?, parse(&fields[2], line_no)?];
    }

    parser.expect_section("$Cells")?;
    let n_cells = parser.count()?;
    let mut cells = vec![[usize::MAX; 3]; n_cells];
    for _ in 0..n_cells {
        let (line_no, fields) = parser.fields(4)?;
        let id: usize = parse(&fields[0], line_no)?;
        if id >= n_cells {
            return Err(fmt_err(line_no, format!("cell id {id} out of range")));
        }
        cells[id] = [
            parse(&fields[1], line_no)?,
            parse(&fields[2], line_no)?,
            parse(&fields[3], line_no)?,
        ];
    }

    parser.expect_section("$Boundary")?;
    let n_boundary = parser.count()?;
    let mut boundary = Vec::with_capacity(n_boundary);
    for _ in 0..n_boundary {
        let (line_no, fields) = parser.fields(4)?;
        let _id: usize = parse(&fields[0], line_no)?;
        let a = parse(&fields[1], line_no)?;
        let b = parse(&fields[2], line_no)?;
        let marker = match fields[3].as_str() {
            "D" => BoundaryMarker::Dirichlet,
            "N" => BoundaryMarker::Neumann,
            other => {
                return Err(fmt_err(
                    line_no,
                    format!("unknown boundary marker {other:?}, expected D or N"),
                ))
            }
        };
        boundary.push((a, b, marker));
    }

    Mesh::new(vertices, cells, &boundary)
}

struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl Parser<'_> {
    fn next_content(&mut self) -> Result<(usize, &str)> {
        for (i, line) in self.lines.by_ref() {
            let t = line.trim();
            if !t.is_empty() {
                return Ok((i + 1, t));
            }
        }
        Err(Error::MeshFormat {
            line: 0,
            message: "unexpected end of file".into(),
        })
    }

    fn expect_section(&mut self, name: &str) -> Result<()> {
        let (line, content) = self.next_content()?;
        if content != name {
            return Err(fmt_err(line, format!("expected {name}, found {content:?}")));
        }
        Ok(())
    }

    fn count(&mut self) -> Result<usize> {
        let (line, content) = self.next_content()?;
        parse(content, line)
    }

    fn fields(&mut self, n: usize) -> Result<(usize, Vec<String>)> {
        let (line, content) = self.next_content()?;
        let fields: Vec<String> = content.split_whitespace().map(str::to_owned).collect();
        if fields.len() != n {
            return Err(fmt_err(
                line,
                format!("expected {n} fields, found {}", fields.len()),
            ));
        }
        Ok((line, fields))
    }
}

fn parse<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| fmt_err(line, format!("cannot parse {s:?}")))
}

fn fmt_err(line: usize, message: String) -> Error {
    Error::MeshFormat { line, message }
}
