//! Triangular meshes of the unit square with the edge data H(div) elements
//! need.
//!
//! Conventions:
//! - cells are counterclockwise vertex triples; local edge `l` is the edge
//!   opposite local vertex `l`, i.e. it connects local vertices `l+1` and
//!   `l+2` (mod 3),
//! - global edges are stored as `(low, high)` vertex-index pairs, oriented
//!   from the lower to the higher index,
//! - the global edge normal is the 90-degree clockwise rotation of the unit
//!   tangent: `t = (tx, ty)` gives `n = (ty, -tx)`,
//! - the incidence sign of a (cell, edge) pair is `+1` iff the cell's outward
//!   normal on that edge equals the global edge normal.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Mesh {
    /// Vertex coordinates in the plane.
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub cells: Vec<[usize; 3]>,
    /// Vertex pairs `(low, high)`.
    pub edges: Vec<[usize; 2]>,
    /// Per cell: `(edge index, incidence sign)` for local edges 0, 1, 2.
    pub cell_edges: Vec<[(usize, i8); 3]>,
    /// Sorted indices of boundary edges.
    pub boundary_edges: Vec<usize>,
    /// Per edge: incident `(cell, sign)` pairs (one or two entries).
    pub edge_cells: Vec<Vec<(usize, i8)>>,
    /// Cells per side for structured unit-square meshes, `None` if imported.
    pub n: Option<usize>,
}

impl Mesh {
    /// Structured mesh of the unit square: `n * n` squares, each split by the
    /// diagonal from its lower-left to its upper-right corner.
    pub fn unit_square(n: usize) -> Result<Mesh> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "unit square mesh needs n >= 1 cells per side".into(),
            ));
        }
        let np = n + 1;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let v = |i: usize, j: usize| j * np + i;
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10) = (v(i, j), v(i + 1, j));
                let (v01, v11) = (v(i, j + 1), v(i + 1, j + 1));
                cells.push([v00, v10, v11]);
                cells.push([v00, v11, v01]);
            }
        }
        let mut mesh = Self::from_cells(vertices, cells)?;
        mesh.n = Some(n);
        Ok(mesh)
    }

    /// Builds a mesh from raw vertices and cells: orients every cell
    /// counterclockwise and derives edges, incidence signs and boundary
    /// flags.  Rejects degenerate cells and edges shared by more than two
    /// cells.
    pub fn from_cells(vertices: Vec<[f64; 2]>, mut cells: Vec<[usize; 3]>) -> Result<Mesh> {
        for cell in cells.iter_mut() {
            for &vi in cell.iter() {
                if vi >= vertices.len() {
                    return Err(Error::MeshFormat(format!(
                        "cell references vertex {vi} out of {}",
                        vertices.len()
                    )));
                }
            }
            let area2 = signed_area2(&vertices, cell);
            if area2.abs() < 1e-14 {
                return Err(Error::MeshFormat(format!(
                    "degenerate cell {:?} (zero area)",
                    cell
                )));
            }
            if area2 < 0.0 {
                cell.swap(1, 2);
            }
        }

        let mut edge_map: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut cell_edges = vec![[(0usize, 0i8); 3]; cells.len()];
        for (c, cell) in cells.iter().enumerate() {
            for l in 0..3 {
                let a = cell[(l + 1) % 3];
                let b = cell[(l + 2) % 3];
                let key = [a.min(b), a.max(b)];
                let e = *edge_map.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
                // The cell traverses this edge a -> b counterclockwise, so its
                // outward normal matches the global one exactly when a < b.
                let sign: i8 = if a < b { 1 } else { -1 };
                cell_edges[c][l] = (e, sign);
            }
        }

        let mut edge_cells = vec![Vec::with_capacity(2); edges.len()];
        for (c, ce) in cell_edges.iter().enumerate() {
            for &(e, s) in ce.iter() {
                edge_cells[e].push((c, s));
            }
        }
        for (e, inc) in edge_cells.iter().enumerate() {
            if inc.len() > 2 {
                let [a, b] = edges[e];
                return Err(Error::NonManifold(a, b, inc.len()));
            }
        }
        let boundary_edges: Vec<usize> = edge_cells
            .iter()
            .enumerate()
            .filter(|(_, inc)| inc.len() == 1)
            .map(|(e, _)| e)
            .collect();

        Ok(Mesh {
            vertices,
            cells,
            edges,
            cell_edges,
            boundary_edges,
            edge_cells,
            n: None,
        })
    }

    /// Maximum over cells of the longest edge length.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for cell in &self.cells {
            for l in 0..3 {
                let a = self.vertices[cell[l]];
                let b = self.vertices[cell[(l + 1) % 3]];
                h = h.max(((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt());
            }
        }
        h
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_cells[e].len() == 1
    }

    pub fn cell_coords(&self, c: usize) -> [[f64; 2]; 3] {
        let [a, b, d] = self.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    /// Jacobian of the affine map from the reference triangle
    /// `{(x, y): x, y >= 0, x + y <= 1}` and its (positive) determinant.
    pub fn jacobian(&self, c: usize) -> ([[f64; 2]; 2], f64) {
        let [p0, p1, p2] = self.cell_coords(c);
        let j = [
            [p1[0] - p0[0], p2[0] - p0[0]],
            [p1[1] - p0[1], p2[1] - p0[1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        (j, det)
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        0.5 * self.jacobian(c).1
    }

    pub fn ref_to_phys(&self, c: usize, xr: [f64; 2]) -> [f64; 2] {
        let [p0, _, _] = self.cell_coords(c);
        let (j, _) = self.jacobian(c);
        [
            p0[0] + j[0][0] * xr[0] + j[0][1] * xr[1],
            p0[1] + j[1][0] * xr[0] + j[1][1] * xr[1],
        ]
    }

    pub fn phys_to_ref(&self, c: usize, x: [f64; 2]) -> [f64; 2] {
        let [p0, _, _] = self.cell_coords(c);
        let (j, det) = self.jacobian(c);
        let r = [x[0] - p0[0], x[1] - p0[1]];
        [
            (j[1][1] * r[0] - j[0][1] * r[1]) / det,
            (-j[1][0] * r[0] + j[0][0] * r[1]) / det,
        ]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt()
    }

    /// Unit tangent from the low to the high vertex.
    pub fn edge_tangent(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = self.edge_length(e);
        [(pb[0] - pa[0]) / len, (pb[1] - pa[1]) / len]
    }

    /// Global unit normal: clockwise rotation of the tangent.
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        let t = self.edge_tangent(e);
        [t[1], -t[0]]
    }

    /// Point at parameter `t` in `[0, 1]` along the edge (low to high vertex).
    pub fn edge_point(&self, e: usize, t: f64) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    }

    /// Reads the plain-text format: first line `nv nc`, then `nv` lines
    /// `x y`, then `nc` lines `i j k` with 0-based vertex indices.
    pub fn from_file(path: &Path) -> Result<Mesh> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let mut next_line = || -> Result<String> {
            loop {
                match lines.next() {
                    None => return Err(Error::MeshFormat("unexpected end of file".into())),
                    Some(line) => {
                        let line = line?;
                        if !line.trim().is_empty() {
                            return Ok(line);
                        }
                    }
                }
            }
        };
        let header = next_line()?;
        let mut it = header.split_whitespace();
        let nv: usize = parse_field(it.next(), "vertex count")?;
        let nc: usize = parse_field(it.next(), "cell count")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = next_line()?;
            let mut it = line.split_whitespace();
            let x: f64 = parse_field(it.next(), "vertex x")?;
            let y: f64 = parse_field(it.next(), "vertex y")?;
            vertices.push([x, y]);
        }
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let line = next_line()?;
            let mut it = line.split_whitespace();
            let i: usize = parse_field(it.next(), "cell vertex")?;
            let j: usize = parse_field(it.next(), "cell vertex")?;
            let k: usize = parse_field(it.next(), "cell vertex")?;
            cells.push([i, j, k]);
        }
        Self::from_cells(vertices, cells)
    }

    /// Writes the same plain-text format `from_file` reads.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{} {}", self.num_vertices(), self.num_cells())?;
        for v in &self.vertices {
            writeln!(out, "{} {}", v[0], v[1])?;
        }
        for c in &self.cells {
            writeln!(out, "{} {} {}", c[0], c[1], c[2])?;
        }
        Ok(())
    }
}

fn signed_area2(vertices: &[[f64; 2]], cell: &[usize; 3]) -> f64 {
    let (a, b, c) = (vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::MeshFormat(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::MeshFormat(format!("cannot parse {what}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euler_characteristic(mesh: &Mesh) -> isize {
        mesh.num_vertices() as isize - mesh.num_edges() as isize + mesh.num_cells() as isize
    }

    #[test]
    fn unit_square_counts_n2() {
        let mesh = Mesh::unit_square(2).unwrap();
        assert_eq!(mesh.num_vertices(), 9);
        assert_eq!(mesh.num_cells(), 8);
        assert_eq!(mesh.num_edges(), 16);
        assert_eq!(mesh.boundary_edges.len(), 8);
        assert_eq!(euler_characteristic(&mesh), 1);
    }

    #[test]
    fn unit_square_counts_n1() {
        let mesh = Mesh::unit_square(1).unwrap();
        assert_eq!(mesh.num_cells(), 2);
        assert_eq!(mesh.num_edges(), 5);
        assert_eq!(mesh.boundary_edges.len(), 4);
        assert!((mesh.mesh_size() - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_subdivisions() {
        assert!(Mesh::unit_square(0).is_err());
    }

    #[test]
    fn mesh_size_follows_table_values() {
        // h = sqrt(2)/n, matching the tabulated 4-significant-figure column.
        for (n, h) in [(2, 0.7071), (4, 0.3536), (32, 0.0442), (64, 0.0221)] {
            let mesh = Mesh::unit_square(n).unwrap();
            assert!(
                (mesh.mesh_size() - h).abs() < 5e-5,
                "n={n}: got {}",
                mesh.mesh_size()
            );
        }
    }

    #[test]
    fn cells_positive_area_and_cover_domain() {
        for n in [1, 2, 5, 8] {
            let mesh = Mesh::unit_square(n).unwrap();
            let mut total = 0.0;
            for c in 0..mesh.num_cells() {
                let a = mesh.cell_area(c);
                assert!(a > 0.0);
                total += a;
            }
            assert!((total - 1.0).abs() < 1e-12, "n={n}: total area {total}");
            assert_eq!(euler_characteristic(&mesh), 1);
        }
    }

    #[test]
    fn edge_incidence_signs_are_consistent() {
        let mesh = Mesh::unit_square(3).unwrap();
        for (e, inc) in mesh.edge_cells.iter().enumerate() {
            match inc.len() {
                1 => assert!(mesh.boundary_edges.contains(&e)),
                2 => {
                    assert_eq!(inc[0].1 + inc[1].1, 0, "edge {e} signs must oppose");
                    assert!(!mesh.boundary_edges.contains(&e));
                }
                k => panic!("edge {e} has {k} incident cells"),
            }
        }
    }

    #[test]
    fn single_cell_signs_match_outward_normals() {
        // Reference-like cell (0,0), (1,0), (0,1).  Computing outward normals
        // directly: bottom edge (0,1) tangent +x, global normal (0,-1) which
        // is outward (+1); left edge (0,2) tangent +y, global normal (1,0)
        // which points inward (-1); hypotenuse (1,2) tangent (-1,1)/sqrt2,
        // global normal (1,1)/sqrt2 which is outward (+1).
        let mesh = Mesh::from_cells(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(mesh.num_edges(), 3);
        assert_eq!(mesh.boundary_edges.len(), 3);
        let sign_of = |pair: [usize; 2]| -> i8 {
            let e = mesh.edges.iter().position(|&x| x == pair).unwrap();
            mesh.edge_cells[e][0].1
        };
        assert_eq!(sign_of([0, 1]), 1);
        assert_eq!(sign_of([0, 2]), -1);
        assert_eq!(sign_of([1, 2]), 1);
    }

    #[test]
    fn orientation_is_fixed_on_import() {
        // Clockwise input cell gets flipped.
        let mesh = Mesh::from_cells(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 2, 1]],
        )
        .unwrap();
        assert!(mesh.cell_area(0) > 0.0);
    }

    #[test]
    fn rejects_non_manifold_input() {
        // Three cells sharing the edge (0, 1).
        let r = Mesh::from_cells(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0]],
            vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]],
        );
        assert!(matches!(r, Err(Error::NonManifold(0, 1, 3))));
    }

    #[test]
    fn rejects_degenerate_cell() {
        let r = Mesh::from_cells(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            vec![[0, 1, 2]],
        );
        assert!(r.is_err());
    }

    #[test]
    fn phys_ref_roundtrip() {
        let mesh = Mesh::unit_square(3).unwrap();
        for c in [0, 5, 11] {
            for xr in [[0.2, 0.3], [0.0, 0.0], [0.5, 0.5]] {
                let x = mesh.ref_to_phys(c, xr);
                let back = mesh.phys_to_ref(c, x);
                assert!((back[0] - xr[0]).abs() < 1e-13);
                assert!((back[1] - xr[1]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.txt");
        let mesh = Mesh::unit_square(3).unwrap();
        mesh.write_file(&path).unwrap();
        let back = Mesh::from_file(&path).unwrap();
        assert_eq!(back.num_vertices(), mesh.num_vertices());
        assert_eq!(back.num_cells(), mesh.num_cells());
        assert_eq!(back.num_edges(), mesh.num_edges());
        assert_eq!(back.vertices, mesh.vertices);
        assert_eq!(back.cells, mesh.cells);
    }
}
