//! Triangular meshes of a disk with one circular inclusion.
//!
//! Both circles are polygonized with at least [`MIN_POLYGON_SIDES`] sides and
//! inserted as constraint loops of a constrained Delaunay triangulation, so
//! the interface between the two regions is made of element edges and the
//! region split of the bilinear form is exact. Interior points come from a
//! seeded, jittered hexagonal lattice whose spacing is tuned until the
//! predicted element count matches the requested target.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

pub type Point = [f64; 2];

/// Smallest polygon side count keeping the chord sagitta below 1% of the radius.
pub const MIN_POLYGON_SIDES: usize = 23;

/// Minimum gap between inclusion and outer boundary, relative to the outer radius.
pub const MIN_RELATIVE_GAP: f64 = 0.02;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("target element count {0} is below the minimum of 50")]
    TooFewElements(usize),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub outer_radius: f64,
    pub inclusion_center: Point,
    pub inclusion_radius: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            outer_radius: 25.0,
            inclusion_center: [-15.0, -10.0],
            inclusion_radius: 5.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<(), MeshError> {
        let Geometry {
            outer_radius: big,
            inclusion_center: c,
            inclusion_radius: small,
        } = *self;
        if !(big.is_finite() && big > 0.0 && small.is_finite() && small > 0.0) {
            return Err(MeshError::InvalidGeometry(format!(
                "radii must be positive and finite (outer {big}, inclusion {small})"
            )));
        }
        if !(c[0].is_finite() && c[1].is_finite()) {
            return Err(MeshError::InvalidGeometry(
                "inclusion center is not finite".into(),
            ));
        }
        let reach = norm(c) + small;
        if reach > big * (1.0 - MIN_RELATIVE_GAP) {
            return Err(MeshError::InvalidGeometry(format!(
                "inclusion touches the outer boundary within tolerance \
                 (|center| + radius = {reach}, outer radius = {big})"
            )));
        }
        Ok(())
    }

    pub fn in_inclusion(&self, p: Point) -> bool {
        dist(p, self.inclusion_center) < self.inclusion_radius
    }
}

/// A conforming triangulation with per-element region labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<u8>,
    boundary_edges: Vec<[usize; 2]>,
}

impl TriMesh {
    /// Assembles a mesh from raw parts, checking index ranges, labels,
    /// orientation and that the boundary edges form one closed loop.
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<u8>,
        boundary_edges: Vec<[usize; 2]>,
    ) -> Result<Self, MeshError> {
        let n = vertices.len();
        if triangles.len() != regions.len() {
            return Err(MeshError::Invalid(format!(
                "{} triangles but {} region labels",
                triangles.len(),
                regions.len()
            )));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(MeshError::Invalid(format!(
                    "triangle {t} references a vertex outside 0..{n}"
                )));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(MeshError::Invalid(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
        }
        if let Some(t) = regions.iter().position(|&r| r > 1) {
            return Err(MeshError::Invalid(format!(
                "triangle {t} has region label {}",
                regions[t]
            )));
        }
        let mesh = Self {
            vertices,
            triangles,
            regions,
            boundary_edges,
        };
        mesh.check_boundary_loop()?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn regions(&self) -> &[u8] {
        &self.regions
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn region_area(&self, region: u8) -> f64 {
        (0..self.num_triangles())
            .filter(|&t| self.regions[t] == region)
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|&[a, b]| dist(self.vertices[a], self.vertices[b]))
            .sum()
    }

    /// Longest edge over all elements.
    pub fn max_diameter(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                dist(a, b).max(dist(b, c)).max(dist(c, a))
            })
            .fold(0.0, f64::max)
    }

    /// Labels that disagree with the inclusion circle, as element indices.
    pub fn region_violations(&self, geometry: &Geometry) -> Vec<usize> {
        (0..self.num_triangles())
            .filter(|&t| (self.regions[t] == 1) != geometry.in_inclusion(self.centroid(t)))
            .collect()
    }

    /// Boundary vertex closest to `point`; ties go to the lowest index.
    pub fn nearest_boundary_vertex(&self, point: Point) -> usize {
        let mut candidates: Vec<usize> = self.boundary_edges.iter().map(|e| e[0]).collect();
        candidates.sort_unstable();
        candidates.dedup();
        let mut best = candidates[0];
        let mut best_d = dist(self.vertices[best], point);
        for &v in &candidates[1..] {
            let d = dist(self.vertices[v], point);
            if d < best_d {
                best = v;
                best_d = d;
            }
        }
        best
    }

    /// Splits every triangle into four through its edge midpoints.
    pub fn refine_uniform(&self) -> TriMesh {
        let mut vertices = self.vertices.clone();
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.num_triangles());
        let mut regions = Vec::with_capacity(4 * self.num_triangles());
        for (tri, &region) in self.triangles.iter().zip(&self.regions) {
            let [a, b, c] = *tri;
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            for t in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
                triangles.push(t);
                regions.push(region);
            }
        }
        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for &[a, b] in &self.boundary_edges {
            let m = midpoint(a, b, &mut vertices);
            boundary_edges.push([a, m]);
            boundary_edges.push([m, b]);
        }
        TriMesh {
            vertices,
            triangles,
            regions,
            boundary_edges,
        }
    }

    fn check_boundary_loop(&self) -> Result<(), MeshError> {
        let edges = &self.boundary_edges;
        if edges.len() < 3 {
            return Err(MeshError::Invalid(format!(
                "boundary has only {} edges",
                edges.len()
            )));
        }
        let n = self.vertices.len();
        if edges.iter().flatten().any(|&v| v >= n) {
            return Err(MeshError::Invalid(
                "boundary edge references a vertex out of range".into(),
            ));
        }
        let mut next: HashMap<usize, usize> = HashMap::new();
        for &[a, b] in edges {
            if next.insert(a, b).is_some() {
                return Err(MeshError::Invalid(format!(
                    "boundary vertex {a} starts two edges"
                )));
            }
        }
        let start = edges[0][0];
        let mut v = start;
        for _ in 0..edges.len() {
            v = *next
                .get(&v)
                .ok_or_else(|| MeshError::Invalid(format!("boundary loop broken at vertex {v}")))?;
        }
        if v != start {
            return Err(MeshError::Invalid(
                "boundary edges do not form a single closed loop".into(),
            ));
        }
        // Boundary edges must be exactly the edges used by one element.
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let single = counts.values().filter(|&&c| c == 1).count();
        let listed_single = edges
            .iter()
            .filter(|&&[a, b]| counts.get(&(a.min(b), a.max(b))) == Some(&1))
            .count();
        if single != edges.len() || listed_single != edges.len() {
            return Err(MeshError::Invalid(format!(
                "boundary edge list ({}) does not match the {single} element edges used once",
                edges.len()
            )));
        }
        Ok(())
    }
}

/// Generates a conforming mesh of `geometry` with roughly `target_elements`
/// triangles. Deterministic for a fixed `(geometry, target_elements, seed)`.
pub fn generate_mesh(
    geometry: &Geometry,
    target_elements: usize,
    seed: u64,
) -> Result<TriMesh, MeshError> {
    geometry.validate()?;
    if target_elements < 50 {
        return Err(MeshError::TooFewElements(target_elements));
    }
    let big = geometry.outer_radius;
    let ideal_area = std::f64::consts::PI * big * big / target_elements as f64;
    // Equilateral element of area A has side sqrt(4A/√3).
    let mut spacing = (4.0 * ideal_area / 3f64.sqrt()).sqrt();
    let mut points = place_points(geometry, spacing, seed);
    for _ in 0..40 {
        let predicted = points.predicted_elements() as f64;
        let ratio = predicted / target_elements as f64;
        if (ratio - 1.0).abs() < 0.03 {
            break;
        }
        spacing *= ratio.sqrt().clamp(0.8, 1.25);
        points = place_points(geometry, spacing, seed);
    }
    triangulate(geometry, points)
}

struct PointSet {
    all: Vec<Point>,
    outer_count: usize,
    inclusion_count: usize,
}

impl PointSet {
    // Triangulation of a convex polygon with V points, B on the hull: T = 2V - B - 2.
    fn predicted_elements(&self) -> usize {
        2 * self.all.len() - self.outer_count - 2
    }
}

fn polygon(center: Point, radius: f64, sides: usize) -> Vec<Point> {
    (0..sides)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
            [
                center[0] + radius * theta.cos(),
                center[1] + radius * theta.sin(),
            ]
        })
        .collect()
}

fn sides_for(radius: f64, spacing: f64) -> usize {
    ((2.0 * std::f64::consts::PI * radius / spacing).ceil() as usize).max(MIN_POLYGON_SIDES)
}

fn place_points(geometry: &Geometry, spacing: f64, seed: u64) -> PointSet {
    let big = geometry.outer_radius;
    let small = geometry.inclusion_radius;
    let center = geometry.inclusion_center;
    let outer = polygon([0.0, 0.0], big, sides_for(big, spacing));
    let inner = polygon(center, small, sides_for(small, spacing));
    let outer_count = outer.len();
    let inclusion_count = inner.len();
    let mut all = outer;
    all.extend(inner);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clearance = 0.6 * spacing;
    let row_height = spacing * 3f64.sqrt() / 2.0;
    let rows = (big / row_height).ceil() as i64;
    let cols = (big / spacing).ceil() as i64 + 1;
    for j in -rows..=rows {
        let shift = if j.rem_euclid(2) == 1 { 0.5 * spacing } else { 0.0 };
        for i in -cols..=cols {
            let jitter: [f64; 2] = [
                rng.gen_range(-0.1..0.1) * spacing,
                rng.gen_range(-0.1..0.1) * spacing,
            ];
            let p = [
                i as f64 * spacing + shift + jitter[0],
                j as f64 * row_height + jitter[1],
            ];
            if big - norm(p) < clearance {
                continue;
            }
            if (dist(p, center) - small).abs() < clearance {
                continue;
            }
            all.push(p);
        }
    }
    PointSet {
        all,
        outer_count,
        inclusion_count,
    }
}

fn triangulate(geometry: &Geometry, points: PointSet) -> Result<TriMesh, MeshError> {
    let PointSet {
        all,
        outer_count,
        inclusion_count,
    } = points;
    let mut constraints = Vec::with_capacity(outer_count + inclusion_count);
    for k in 0..outer_count {
        constraints.push([k, (k + 1) % outer_count]);
    }
    for k in 0..inclusion_count {
        constraints.push([outer_count + k, outer_count + (k + 1) % inclusion_count]);
    }
    let input: Vec<Point2<f64>> = all.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(input, constraints)
        .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
    if cdt.num_vertices() != all.len() {
        return Err(MeshError::Triangulation(format!(
            "{} duplicate points removed",
            all.len() - cdt.num_vertices()
        )));
    }
    let vertices: Vec<Point> = cdt
        .vertices()
        .map(|v| {
            let p = v.position();
            [p.x, p.y]
        })
        .collect();
    debug_assert!(vertices.iter().zip(&all).all(|(a, b)| a == b));

    let inclusion_polygon = &all[outer_count..outer_count + inclusion_count];
    let mut triangles = Vec::with_capacity(cdt.num_inner_faces());
    let mut regions = Vec::with_capacity(cdt.num_inner_faces());
    for face in cdt.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let mut tri = [a, b, c];
        if signed_area(vertices[a], vertices[b], vertices[c]) < 0.0 {
            tri = [a, c, b];
        }
        let centroid = [
            (vertices[a][0] + vertices[b][0] + vertices[c][0]) / 3.0,
            (vertices[a][1] + vertices[b][1] + vertices[c][1]) / 3.0,
        ];
        let region = u8::from(inside_convex_polygon(inclusion_polygon, centroid));
        triangles.push(tri);
        regions.push(region);
    }
    let boundary_edges: Vec<[usize; 2]> = (0..outer_count)
        .map(|k| [k, (k + 1) % outer_count])
        .collect();
    let mesh = TriMesh::from_parts(vertices, triangles, regions, boundary_edges)?;
    if !mesh.region_violations(geometry).is_empty() {
        return Err(MeshError::Triangulation(
            "region labels disagree with the inclusion circle".into(),
        ));
    }
    Ok(mesh)
}

fn inside_convex_polygon(poly: &[Point], p: Point) -> bool {
    (0..poly.len()).all(|k| signed_area(poly[k], poly[(k + 1) % poly.len()], p) > 0.0)
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}

/// Serializes a mesh in the plain-text mesh format. Coordinates use the
/// shortest representation that round-trips exactly.
pub fn mesh_to_string(mesh: &TriMesh) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "vertices {} / triangles {}",
        mesh.num_vertices(),
        mesh.num_triangles()
    )
    .unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{:?} {:?}", v[0], v[1]).unwrap();
    }
    for (t, r) in mesh.triangles.iter().zip(&mesh.regions) {
        writeln!(out, "{} {} {} {}", t[0], t[1], t[2], r).unwrap();
    }
    for e in &mesh.boundary_edges {
        writeln!(out, "{} {}", e[0], e[1]).unwrap();
    }
    out
}

pub fn mesh_from_str(text: &str) -> Result<TriMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let parse_err = |line: usize, message: String| MeshError::Parse { line, message };

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty mesh file".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let (nv, nt) = match tokens.as_slice() {
        ["vertices", nv, "/", "triangles", nt] => (
            nv.parse::<usize>()
                .map_err(|e| parse_err(hline, format!("vertex count: {e}")))?,
            nt.parse::<usize>()
                .map_err(|e| parse_err(hline, format!("triangle count: {e}")))?,
        ),
        _ => {
            return Err(parse_err(
                hline,
                format!("expected `vertices N / triangles M`, found `{header}`"),
            ))
        }
    };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in vertex block".into()))?;
        let vals = parse_fields::<f64>(l, 2).map_err(|m| parse_err(ln, m))?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(ln, "non-finite coordinate".into()));
        }
        vertices.push([vals[0], vals[1]]);
    }
    let mut triangles = Vec::with_capacity(nt);
    let mut regions = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in triangle block".into()))?;
        let vals = parse_fields::<usize>(l, 4).map_err(|m| parse_err(ln, m))?;
        if let Some(bad) = vals[..3].iter().find(|&&v| v >= nv) {
            return Err(parse_err(
                ln,
                format!("vertex index {bad} out of range (mesh has {nv} vertices)"),
            ));
        }
        if vals[3] > 1 {
            return Err(parse_err(
                ln,
                format!("region label {} is not 0 or 1", vals[3]),
            ));
        }
        triangles.push([vals[0], vals[1], vals[2]]);
        regions.push(vals[3] as u8);
    }
    let mut boundary_edges = Vec::new();
    for (ln, l) in lines {
        let vals = parse_fields::<usize>(l, 2).map_err(|m| parse_err(ln, m))?;
        if let Some(bad) = vals.iter().find(|&&v| v >= nv) {
            return Err(parse_err(ln, format!("boundary vertex {bad} out of range")));
        }
        boundary_edges.push([vals[0], vals[1]]);
    }
    TriMesh::from_parts(vertices, triangles, regions, boundary_edges)
}

fn parse_fields<T: std::str::FromStr>(line: &str, count: usize) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != count {
        return Err(format!("expected {count} fields, found {}", fields.len()));
    }
    fields
        .iter()
        .map(|f| f.parse::<T>().map_err(|e| format!("`{f}`: {e}")))
        .collect()
}

pub fn write_mesh(mesh: &TriMesh, path: &Path) -> Result<(), MeshError> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<TriMesh, MeshError> {
    mesh_from_str(&std::fs::read_to_string(path)?)
}
