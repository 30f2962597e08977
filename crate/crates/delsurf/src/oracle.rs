//! The geometry oracle over the input surface.
//!
//! Wraps the immutable polyhedral surface in the intersection and proximity
//! predicates the refinement drivers need: segment, ray and circle
//! intersection, point containment and nearest-point projection. All queries
//! are backed by an axis-aligned bounding-box tree (median split, leaf
//! size 8) and are safe to call from any number of threads.

use crate::geom::{Plane3, Point3, Vec3};
use crate::io::TriMesh;
use crate::{Error, Result};

/// Merge tolerance for coincident hits, relative to the bbox diagonal.
const HIT_DEDUP_REL: f64 = 1e-10;
/// On-surface resolution tolerance for `contains`, relative to the bbox diagonal.
const ON_SURFACE_REL: f64 = 1e-10;
/// Barycentric slack when accepting hits near triangle edges; the dedup pass
/// merges the double-finds on shared edges.
const BARY_EPS: f64 = 1e-10;

/// A point on the surface produced by a query.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceHit {
    pub point: Point3,
    pub triangle: u32,
    /// Barycentric coordinates on `triangle`: non-negative, summing to one.
    pub bary: [f64; 3],
    /// Parameter along the query primitive: segment fraction, ray distance,
    /// circle angle in radians, or distance for nearest-point queries.
    pub param: f64,
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3,
    hi: Point3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            hi: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn add_point(&mut self, p: Point3) {
        self.lo = self.lo.min_coords(p);
        self.hi = self.hi.max_coords(p);
    }

    fn merge(&mut self, other: &Aabb) {
        self.lo = self.lo.min_coords(other.lo);
        self.hi = self.hi.max_coords(other.hi);
    }

    fn pad(&mut self, eps: f64) {
        let d = Vec3::new(eps, eps, eps);
        self.lo = self.lo - d;
        self.hi = self.hi + d;
    }

    fn centre(&self) -> Point3 {
        self.lo.midpoint(self.hi)
    }

    /// Slab test against the segment `a + t (b - a)`, `t` in `[0, 1]`.
    fn intersects_segment(&self, a: Point3, d: Vec3) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for axis in 0..3 {
            let (lo, hi, o, dir) = match axis {
                0 => (self.lo.x, self.hi.x, a.x, d.x),
                1 => (self.lo.y, self.hi.y, a.y, d.y),
                _ => (self.lo.z, self.hi.z, a.z, d.z),
            };
            if dir == 0.0 {
                if o < lo || o > hi {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / dir;
            let (mut ta, mut tb) = ((lo - o) * inv, (hi - o) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }

    fn intersects_box(&self, other: &Aabb) -> bool {
        self.lo.x <= other.hi.x
            && other.lo.x <= self.hi.x
            && self.lo.y <= other.hi.y
            && other.lo.y <= self.hi.y
            && self.lo.z <= other.hi.z
            && other.lo.z <= self.hi.z
    }

    fn distance2(&self, p: Point3) -> f64 {
        let dx = (self.lo.x - p.x).max(0.0).max(p.x - self.hi.x);
        let dy = (self.lo.y - p.y).max(0.0).max(p.y - self.hi.y);
        let dz = (self.lo.z - p.z).max(0.0).max(p.z - self.hi.z);
        dx * dx + dy * dy + dz * dz
    }
}

enum NodeKind {
    Leaf { start: u32, end: u32 },
    Inner { left: u32, right: u32 },
}

struct Node {
    bbox: Aabb,
    kind: NodeKind,
}

struct AabbTree {
    nodes: Vec<Node>,
    /// Triangle ids, permuted so each leaf owns a contiguous range.
    order: Vec<u32>,
}

const LEAF_SIZE: usize = 8;

impl AabbTree {
    fn build(boxes: &[Aabb]) -> AabbTree {
        let mut order: Vec<u32> = (0..boxes.len() as u32).collect();
        let mut tree = AabbTree { nodes: Vec::new(), order: Vec::new() };
        if !boxes.is_empty() {
            let mut scratch = std::mem::take(&mut order);
            let n = scratch.len();
            tree.build_range(boxes, &mut scratch, 0, n);
            tree.order = scratch;
        }
        tree
    }

    fn build_range(&mut self, boxes: &[Aabb], order: &mut [u32], start: usize, end: usize) -> u32 {
        let mut bbox = Aabb::empty();
        for &t in &order[start..end] {
            bbox.merge(&boxes[t as usize]);
        }
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node {
                bbox,
                kind: NodeKind::Leaf { start: start as u32, end: end as u32 },
            });
            return id;
        }
        // Median split along the widest axis of the centroid extents.
        let mut clo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut chi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &t in &order[start..end] {
            let c = boxes[t as usize].centre();
            clo = clo.min_coords(c);
            chi = chi.max_coords(c);
        }
        let ext = chi - clo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        let key = |t: u32| {
            let c = boxes[t as usize].centre();
            match axis {
                0 => c.x,
                1 => c.y,
                _ => c.z,
            }
        };
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b))
        });
        self.nodes.push(Node {
            bbox: Aabb::empty(),
            kind: NodeKind::Leaf { start: 0, end: 0 }, // patched below
        });
        let left = self.build_range(boxes, order, start, mid);
        let right = self.build_range(boxes, order, mid, end);
        self.nodes[id as usize] = Node { bbox, kind: NodeKind::Inner { left, right } };
        id
    }

    /// Visits every leaf triangle whose box passes `pred`, in deterministic order.
    fn visit<P: Fn(&Aabb) -> bool>(&self, pred: P, mut emit: impl FnMut(u32)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if !pred(&node.bbox) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &t in &self.order[start as usize..end as usize] {
                        emit(t);
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }
}

/// The validated, immutable input surface with its spatial tree.
pub struct SurfacePolyhedron {
    mesh: TriMesh,
    tri_normals: Vec<Vec3>,
    vert_normals: Vec<Vec3>,
    component_of_tri: Vec<u32>,
    component_count: u32,
    /// Undirected edges, sorted lexicographically.
    edges: Vec<(u32, u32)>,
    vertex_tris: Vec<Vec<u32>>,
    tree: AabbTree,
    bbox: (Point3, Point3),
    bbox_diag: f64,
}

impl SurfacePolyhedron {
    /// Reads and validates a mesh file (`.off` / `.obj`).
    pub fn load(path: &std::path::Path) -> Result<SurfacePolyhedron> {
        Self::validate(crate::io::read_mesh(path)?)
    }

    /// Validates a closed, consistently oriented 2-manifold triangle mesh
    /// and builds the query structures. Components wound inside-out are
    /// re-wound so that triangle normals point outward.
    pub fn validate(mut mesh: TriMesh) -> Result<SurfacePolyhedron> {
        if mesh.triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        for (i, v) in mesh.vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidMesh(format!("vertex {i} has non-finite coordinates")));
            }
        }
        let nv = mesh.vertices.len() as u32;
        for (i, t) in mesh.triangles.iter().enumerate() {
            if t[0] >= nv || t[1] >= nv || t[2] >= nv {
                return Err(Error::InvalidMesh(format!("triangle {i} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[2] == t[0] {
                return Err(Error::InvalidMesh(format!("triangle {i} repeats a vertex")));
            }
        }

        // Edge incidence: key (lo, hi) -> (directed uses as (u, v), triangles).
        use std::collections::BTreeMap;
        let mut edge_uses: BTreeMap<(u32, u32), Vec<(bool, u32)>> = BTreeMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                let key = (u.min(v), u.max(v));
                edge_uses.entry(key).or_default().push((u < v, t as u32));
            }
        }
        for (&(u, v), uses) in &edge_uses {
            if uses.len() != 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({u}, {v}) is used by {} triangle(s); a closed 2-manifold needs exactly 2",
                    uses.len()
                )));
            }
            if uses[0].0 == uses[1].0 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({u}, {v}) has inconsistent orientation between triangles {} and {}",
                    uses[0].1, uses[1].1
                )));
            }
        }
        let edges: Vec<(u32, u32)> = edge_uses.keys().copied().collect();

        // Triangle adjacency across shared edges -> connected components.
        let nt = mesh.triangles.len();
        let mut tri_adj: Vec<[u32; 3]> = vec![[u32::MAX; 3]; nt];
        for uses in edge_uses.values() {
            let (a, b) = (uses[0].1 as usize, uses[1].1 as usize);
            for slot in tri_adj[a].iter_mut() {
                if *slot == u32::MAX {
                    *slot = b as u32;
                    break;
                }
            }
            for slot in tri_adj[b].iter_mut() {
                if *slot == u32::MAX {
                    *slot = a as u32;
                    break;
                }
            }
        }
        let mut component_of_tri = vec![u32::MAX; nt];
        let mut component_count = 0u32;
        for seed in 0..nt {
            if component_of_tri[seed] != u32::MAX {
                continue;
            }
            let label = component_count;
            component_count += 1;
            let mut stack = vec![seed as u32];
            component_of_tri[seed] = label;
            while let Some(t) = stack.pop() {
                for &n in &tri_adj[t as usize] {
                    if n != u32::MAX && component_of_tri[n as usize] == u32::MAX {
                        component_of_tri[n as usize] = label;
                        stack.push(n);
                    }
                }
            }
        }

        // Re-wind components whose signed volume is negative, so that stored
        // windings give outward normals.
        let mut signed_volume = vec![0.0f64; component_count as usize];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let a = mesh.vertices[tri[0] as usize].to_vec();
            let b = mesh.vertices[tri[1] as usize].to_vec();
            let c = mesh.vertices[tri[2] as usize].to_vec();
            signed_volume[component_of_tri[t] as usize] += a.dot(b.cross(c)) / 6.0;
        }
        for (t, tri) in mesh.triangles.iter_mut().enumerate() {
            if signed_volume[component_of_tri[t] as usize] < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut tri_normals = Vec::with_capacity(nt);
        for tri in &mesh.triangles {
            let a = mesh.vertices[tri[0] as usize];
            let b = mesh.vertices[tri[1] as usize];
            let c = mesh.vertices[tri[2] as usize];
            let n = (b - a).cross(c - a).normalized().ok_or_else(|| {
                Error::InvalidMesh("mesh contains a zero-area triangle".into())
            })?;
            tri_normals.push(n);
        }

        // Angle-weighted vertex normals.
        let mut vert_normals = vec![Vec3::ZERO; mesh.vertices.len()];
        let mut vertex_tris: Vec<Vec<u32>> = vec![Vec::new(); mesh.vertices.len()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let v = tri[k] as usize;
                vertex_tris[v].push(t as u32);
                let p = mesh.vertices[v];
                let q = mesh.vertices[tri[(k + 1) % 3] as usize];
                let r = mesh.vertices[tri[(k + 2) % 3] as usize];
                let u1 = (q - p).normalized().unwrap_or(Vec3::ZERO);
                let u2 = (r - p).normalized().unwrap_or(Vec3::ZERO);
                let angle = u1.dot(u2).clamp(-1.0, 1.0).acos();
                vert_normals[v] = vert_normals[v] + tri_normals[t] * angle;
            }
        }
        for n in &mut vert_normals {
            *n = n.normalized().unwrap_or(Vec3::ZERO);
        }

        let (lo, hi) = mesh.bbox().expect("non-empty");
        let bbox_diag = (hi - lo).norm();
        let pad = 1e-9 * bbox_diag.max(1e-300);
        let mut boxes = Vec::with_capacity(nt);
        for tri in &mesh.triangles {
            let mut b = Aabb::empty();
            for &v in tri {
                b.add_point(mesh.vertices[v as usize]);
            }
            b.pad(pad);
            boxes.push(b);
        }
        let tree = AabbTree::build(&boxes);

        Ok(SurfacePolyhedron {
            mesh,
            tri_normals,
            vert_normals,
            component_of_tri,
            component_count,
            edges,
            vertex_tris,
            tree,
            bbox: (lo, hi),
            bbox_diag,
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.mesh.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.mesh.triangles
    }

    pub fn triangle_points(&self, t: u32) -> [Point3; 3] {
        let tri = self.mesh.triangles[t as usize];
        [
            self.mesh.vertices[tri[0] as usize],
            self.mesh.vertices[tri[1] as usize],
            self.mesh.vertices[tri[2] as usize],
        ]
    }

    pub fn triangle_normal(&self, t: u32) -> Vec3 {
        self.tri_normals[t as usize]
    }

    pub fn vertex_normal(&self, v: u32) -> Vec3 {
        self.vert_normals[v as usize]
    }

    pub fn component_of_triangle(&self, t: u32) -> u32 {
        self.component_of_tri[t as usize]
    }

    pub fn component_of_vertex(&self, v: u32) -> u32 {
        self.vertex_tris[v as usize]
            .first()
            .map(|&t| self.component_of_tri[t as usize])
            .unwrap_or(u32::MAX)
    }

    pub fn component_count(&self) -> u32 {
        self.component_count
    }

    /// Undirected edges of the polyhedron, sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn vertex_triangles(&self, v: u32) -> &[u32] {
        &self.vertex_tris[v as usize]
    }

    pub fn bbox(&self) -> (Point3, Point3) {
        self.bbox
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bbox_diag
    }

    fn dedup_tol(&self) -> f64 {
        HIT_DEDUP_REL * self.bbox_diag
    }

    /// All intersections of the open segment `(a, b)` with the surface,
    /// sorted by parameter, with coincident hits merged.
    pub fn intersect_segment(&self, a: Point3, b: Point3) -> Vec<SurfaceHit> {
        self.segment_hits_with_retry(a, b, |t| t)
    }

    /// All intersections of the ray `origin + s * dir` (`s >= 0`, `dir` unit)
    /// with the surface; `param` is the distance along the ray.
    pub fn intersect_ray(&self, origin: Point3, dir: Vec3) -> Vec<SurfaceHit> {
        // The surface is bounded: clip the ray to the padded bbox.
        let (lo, hi) = self.bbox;
        let pad = 1e-6 * self.bbox_diag;
        let (mut s0, mut s1) = (0.0f64, f64::INFINITY);
        for axis in 0..3 {
            let (l, h, o, d) = match axis {
                0 => (lo.x - pad, hi.x + pad, origin.x, dir.x),
                1 => (lo.y - pad, hi.y + pad, origin.y, dir.y),
                _ => (lo.z - pad, hi.z + pad, origin.z, dir.z),
            };
            if d == 0.0 {
                if o < l || o > h {
                    return Vec::new();
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut ta, mut tb) = ((l - o) * inv, (h - o) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            s0 = s0.max(ta);
            s1 = s1.min(tb);
            if s0 > s1 {
                return Vec::new();
            }
        }
        if !s1.is_finite() || s1 <= 0.0 {
            return Vec::new();
        }
        let end = origin + dir * s1;
        self.segment_hits_with_retry(origin, end, move |t| t * s1)
    }

    /// Segment query with the grazing policy: a segment lying in a
    /// triangle's plane is retried with endpoints nudged along that plane's
    /// normal (up to 3 times), after which the tangency is reported as a
    /// single hit at the segment midpoint projection.
    fn segment_hits_with_retry(
        &self,
        a: Point3,
        b: Point3,
        remap: impl Fn(f64) -> f64,
    ) -> Vec<SurfaceHit> {
        let mut a_try = a;
        let mut b_try = b;
        for attempt in 0..4 {
            match self.segment_hits_once(a_try, b_try) {
                Ok(mut hits) => {
                    for h in &mut hits {
                        h.param = remap(h.param);
                    }
                    return hits;
                }
                Err(grazed_tri) => {
                    if attempt == 3 {
                        // Report the tangency once, at the nearest surface
                        // point to the segment midpoint.
                        let mid = a.midpoint(b);
                        let mut hit = self.nearest_point(mid);
                        hit.param = remap(0.5);
                        return vec![hit];
                    }
                    let n = self.tri_normals[grazed_tri as usize];
                    let delta = n * (1e-12 * self.bbox_diag * (attempt + 1) as f64);
                    a_try = a + delta;
                    b_try = b + delta;
                }
            }
        }
        unreachable!()
    }

    /// One pass of the segment query; `Err(tri)` reports an in-plane graze.
    fn segment_hits_once(&self, a: Point3, b: Point3) -> std::result::Result<Vec<SurfaceHit>, u32> {
        let d = b - a;
        let mut raw: Vec<SurfaceHit> = Vec::new();
        let mut graze: Option<u32> = None;
        self.tree.visit(
            |bb| bb.intersects_segment(a, d),
            |t| {
                if graze.is_some() {
                    return;
                }
                match self.tri_segment(t, a, b, d) {
                    Ok(Some(hit)) => raw.push(hit),
                    Ok(None) => {}
                    Err(()) => graze = Some(t),
                }
            },
        );
        if let Some(t) = graze {
            return Err(t);
        }
        Ok(self.dedup_hits(raw))
    }

    /// Segment/triangle intersection. `Err(())` signals an in-plane graze.
    fn tri_segment(
        &self,
        t: u32,
        a: Point3,
        b: Point3,
        d: Vec3,
    ) -> std::result::Result<Option<SurfaceHit>, ()> {
        let [v0, v1, v2] = self.triangle_points(t);
        let n = (v1 - v0).cross(v2 - v0);
        let denom = n.dot(d);
        let from0 = n.dot(a - v0);
        if denom == 0.0 {
            if from0 == 0.0 {
                // Segment in the supporting plane: graze only if it actually
                // meets the triangle, otherwise an ordinary miss.
                if self.segment_meets_coplanar_triangle(a, b, v0, v1, v2) {
                    return Err(());
                }
            }
            return Ok(None);
        }
        let s = -from0 / denom;
        if !(0.0..=1.0).contains(&s) {
            return Ok(None);
        }
        let p = a + d * s;
        match bary_in_triangle(p, v0, v1, v2) {
            Some(bary) => Ok(Some(SurfaceHit { point: p, triangle: t, bary, param: s })),
            None => Ok(None),
        }
    }

    fn segment_meets_coplanar_triangle(
        &self,
        a: Point3,
        b: Point3,
        v0: Point3,
        v1: Point3,
        v2: Point3,
    ) -> bool {
        // Coarse but adequate: sample the segment and test containment.
        for k in 0..=8 {
            let t = k as f64 / 8.0;
            let p = a + (b - a) * t;
            if bary_in_triangle(p, v0, v1, v2).is_some() {
                return true;
            }
        }
        false
    }

    fn dedup_hits(&self, mut raw: Vec<SurfaceHit>) -> Vec<SurfaceHit> {
        raw.sort_by(|x, y| {
            x.param
                .partial_cmp(&y.param)
                .unwrap()
                .then(x.triangle.cmp(&y.triangle))
        });
        let tol2 = self.dedup_tol() * self.dedup_tol();
        let mut out: Vec<SurfaceHit> = Vec::new();
        for h in raw {
            if out.iter().all(|o| o.point.distance2(h.point) > tol2) {
                out.push(h);
            }
        }
        out
    }

    /// All points lying on the surface, on `plane`, at distance `radius`
    /// from `centre` (which must lie on the plane). Candidate triangles are
    /// clipped against the plane and the clip segments intersected with the
    /// query sphere. `param` is the angle about `centre` in the plane.
    pub fn intersect_circle(&self, plane: &Plane3, centre: Point3, radius: f64) -> Vec<SurfaceHit> {
        debug_assert!(radius > 0.0);
        // In-plane basis for the angle parameter.
        let n = plane.normal;
        let seed = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
            Vec3::new(1.0, 0.0, 0.0)
        } else if n.y.abs() <= n.z.abs() {
            Vec3::new(0.0, 1.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        let u = (seed - n * seed.dot(n)).normalized().expect("basis");
        let v = n.cross(u);

        let mut query = Aabb::empty();
        query.add_point(centre - Vec3::new(radius, radius, radius));
        query.add_point(centre + Vec3::new(radius, radius, radius));

        let mut raw: Vec<SurfaceHit> = Vec::new();
        self.tree.visit(
            |bb| bb.intersects_box(&query),
            |t| {
                self.circle_hits_on_triangle(t, plane, centre, radius, u, v, &mut raw);
            },
        );
        let mut hits = self.dedup_hits_by_angle(raw);
        // Containment contract: every hit satisfies both equations.
        let tol = 1e-9 * radius;
        hits.retain(|h| {
            plane.signed_distance(h.point).abs() <= tol
                && (h.point.distance(centre) - radius).abs() <= tol
        });
        hits
    }

    fn circle_hits_on_triangle(
        &self,
        t: u32,
        plane: &Plane3,
        centre: Point3,
        radius: f64,
        u: Vec3,
        v: Vec3,
        out: &mut Vec<SurfaceHit>,
    ) {
        let tri = self.triangle_points(t);
        let d = [
            plane.signed_distance(tri[0]),
            plane.signed_distance(tri[1]),
            plane.signed_distance(tri[2]),
        ];
        // Clip the triangle boundary against the plane.
        let mut clip: Vec<Point3> = Vec::new();
        for k in 0..3 {
            let (i, j) = (k, (k + 1) % 3);
            if d[i] == 0.0 {
                clip.push(tri[i]);
            }
            if (d[i] > 0.0 && d[j] < 0.0) || (d[i] < 0.0 && d[j] > 0.0) {
                let s = d[i] / (d[i] - d[j]);
                clip.push(tri[i] + (tri[j] - tri[i]) * s);
            }
        }
        clip.dedup_by(|a, b| a.distance2(*b) <= (1e-14 * self.bbox_diag).powi(2));
        if clip.len() < 2 {
            // A plane touching at a single vertex can still land on the circle.
            if let Some(&q) = clip.first() {
                if (q.distance(centre) - radius).abs() <= 1e-9 * radius {
                    self.push_circle_hit(t, q, centre, u, v, out);
                }
            }
            return;
        }
        let (q0, q1) = (clip[0], clip[1]);
        // |q0 + s (q1 - q0) - centre|^2 = radius^2.
        let e = q1 - q0;
        let w = q0 - centre;
        let aa = e.norm2();
        if aa == 0.0 {
            return;
        }
        let bb = 2.0 * e.dot(w);
        let cc = w.norm2() - radius * radius;
        let disc = bb * bb - 4.0 * aa * cc;
        if disc < 0.0 {
            return;
        }
        let sq = disc.sqrt();
        // Citardauq form for the root nearer cancellation.
        let r1 = if bb >= 0.0 { (-bb - sq) / (2.0 * aa) } else { (2.0 * cc) / (-bb + sq) };
        let r2 = if bb >= 0.0 { (2.0 * cc) / (-bb - sq) } else { (-bb + sq) / (2.0 * aa) };
        for s in [r1, r2] {
            if !s.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&s) {
                continue;
            }
            let p = q0 + e * s.clamp(0.0, 1.0);
            self.push_circle_hit(t, p, centre, u, v, out);
            if disc == 0.0 {
                break;
            }
        }
    }

    fn push_circle_hit(
        &self,
        t: u32,
        p: Point3,
        centre: Point3,
        u: Vec3,
        v: Vec3,
        out: &mut Vec<SurfaceHit>,
    ) {
        let tri = self.triangle_points(t);
        if let Some(bary) = bary_in_triangle(p, tri[0], tri[1], tri[2]) {
            let rel = p - centre;
            let mut angle = rel.dot(v).atan2(rel.dot(u));
            if angle < 0.0 {
                angle += 2.0 * std::f64::consts::PI;
            }
            out.push(SurfaceHit { point: p, triangle: t, bary, param: angle });
        }
    }

    fn dedup_hits_by_angle(&self, mut raw: Vec<SurfaceHit>) -> Vec<SurfaceHit> {
        raw.sort_by(|x, y| {
            x.param
                .partial_cmp(&y.param)
                .unwrap()
                .then(x.triangle.cmp(&y.triangle))
        });
        let tol2 = self.dedup_tol() * self.dedup_tol();
        let mut out: Vec<SurfaceHit> = Vec::new();
        for h in raw {
            if out.iter().all(|o| o.point.distance2(h.point) > tol2) {
                out.push(h);
            }
        }
        out
    }

    /// Point containment in the enclosed volume by ray-crossing parity.
    /// On-surface points (within `1e-10` of the bbox diagonal) resolve as
    /// inside. Grazing rays are re-cast in a new deterministic direction.
    pub fn contains(&self, p: Point3) -> bool {
        let near = self.nearest_point(p);
        if near.param <= ON_SURFACE_REL * self.bbox_diag {
            return true;
        }
        // Deterministic direction sequence from a fixed-seed xorshift.
        let mut state = 0x853c_49e6_748f_ea9bu64;
        let mut next_dir = move || {
            let mut sample = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            };
            loop {
                let v = Vec3::new(sample(), sample(), sample());
                if let Some(u) = v.normalized() {
                    if v.norm2() > 1e-4 {
                        return u;
                    }
                }
            }
        };
        let mut last_parity = false;
        for _ in 0..8 {
            let dir = next_dir();
            match self.count_crossings(p, dir) {
                Some(count) => return count % 2 == 1,
                None => {
                    last_parity = false;
                }
            }
        }
        last_parity
    }

    /// Counts strict ray crossings; `None` when the ray grazes an edge,
    /// vertex, or coplanar triangle and should be re-cast.
    fn count_crossings(&self, p: Point3, dir: Vec3) -> Option<usize> {
        let (lo, hi) = self.bbox;
        let pad = 1e-6 * self.bbox_diag;
        let mut s1 = f64::INFINITY;
        for axis in 0..3 {
            let (l, h, o, d) = match axis {
                0 => (lo.x - pad, hi.x + pad, p.x, dir.x),
                1 => (lo.y - pad, hi.y + pad, p.y, dir.y),
                _ => (lo.z - pad, hi.z + pad, p.z, dir.z),
            };
            if d == 0.0 {
                if o < l || o > h {
                    return Some(0);
                }
                continue;
            }
            let inv = 1.0 / d;
            let (ta, tb) = (((l - o) * inv), ((h - o) * inv));
            let (_, tb) = if ta > tb { (tb, ta) } else { (ta, tb) };
            if tb < 0.0 {
                return Some(0);
            }
            s1 = s1.min(tb);
        }
        if !s1.is_finite() {
            s1 = 4.0 * self.bbox_diag;
        }
        let b = p + dir * (s1 + pad);
        let d = b - p;
        let mut count = 0usize;
        let mut grazed = false;
        self.tree.visit(
            |bb| bb.intersects_segment(p, d),
            |t| {
                if grazed {
                    return;
                }
                let [v0, v1, v2] = self.triangle_points(t);
                let n = (v1 - v0).cross(v2 - v0);
                let denom = n.dot(d);
                let from0 = n.dot(p - v0);
                if denom == 0.0 {
                    if from0 == 0.0 && self.segment_meets_coplanar_triangle(p, b, v0, v1, v2) {
                        grazed = true;
                    }
                    return;
                }
                let s = -from0 / denom;
                if s <= 0.0 || s > 1.0 {
                    return;
                }
                let q = p + d * s;
                match bary_strict(q, v0, v1, v2) {
                    BaryClass::Interior => count += 1,
                    BaryClass::Boundary => grazed = true,
                    BaryClass::Outside => {}
                }
            },
        );
        if grazed {
            None
        } else {
            Some(count)
        }
    }

    /// Closest point on the surface to `p`; `param` carries the distance.
    pub fn nearest_point(&self, p: Point3) -> SurfaceHit {
        let mut best = SurfaceHit {
            point: p,
            triangle: u32::MAX,
            bary: [0.0; 3],
            param: f64::INFINITY,
        };
        self.nearest_in_node(0, p, &mut best);
        best
    }

    fn nearest_in_node(&self, node: u32, p: Point3, best: &mut SurfaceHit) {
        let n = &self.nodes_ref()[node as usize];
        if n.bbox.distance2(p) >= best.param * best.param {
            return;
        }
        match n.kind {
            NodeKind::Leaf { start, end } => {
                for &t in &self.tree.order[start as usize..end as usize] {
                    let tri = self.triangle_points(t);
                    let (q, bary) = closest_point_triangle(p, tri[0], tri[1], tri[2]);
                    let dist = p.distance(q);
                    if dist < best.param {
                        *best = SurfaceHit { point: q, triangle: t, bary, param: dist };
                    }
                }
            }
            NodeKind::Inner { left, right } => {
                let dl = self.nodes_ref()[left as usize].bbox.distance2(p);
                let dr = self.nodes_ref()[right as usize].bbox.distance2(p);
                let (first, second) = if dl <= dr { (left, right) } else { (right, left) };
                self.nearest_in_node(first, p, best);
                self.nearest_in_node(second, p, best);
            }
        }
    }

    fn nodes_ref(&self) -> &[Node] {
        &self.tree.nodes
    }
}

enum BaryClass {
    Interior,
    Boundary,
    Outside,
}

/// Classifies a coplanar point against a triangle with a strict interior
/// margin, for parity counting.
fn bary_strict(p: Point3, v0: Point3, v1: Point3, v2: Point3) -> BaryClass {
    match bary_raw(p, v0, v1, v2) {
        Some(b) => {
            let min = b[0].min(b[1]).min(b[2]);
            if min > 1e-9 {
                BaryClass::Interior
            } else if min > -1e-9 {
                BaryClass::Boundary
            } else {
                BaryClass::Outside
            }
        }
        None => BaryClass::Boundary,
    }
}

fn bary_raw(p: Point3, v0: Point3, v1: Point3, v2: Point3) -> Option<[f64; 3]> {
    let e0 = v1 - v0;
    let e1 = v2 - v0;
    let w = p - v0;
    let d00 = e0.dot(e0);
    let d01 = e0.dot(e1);
    let d11 = e1.dot(e1);
    let d20 = w.dot(e0);
    let d21 = w.dot(e1);
    let det = d00 * d11 - d01 * d01;
    if det <= 0.0 {
        return None;
    }
    let b1 = (d11 * d20 - d01 * d21) / det;
    let b2 = (d00 * d21 - d01 * d20) / det;
    Some([1.0 - b1 - b2, b1, b2])
}

/// Barycentric coordinates if `p` lies in the (slightly padded) triangle;
/// clamped non-negative and renormalised to sum to one.
fn bary_in_triangle(p: Point3, v0: Point3, v1: Point3, v2: Point3) -> Option<[f64; 3]> {
    let mut b = bary_raw(p, v0, v1, v2)?;
    if b[0] < -BARY_EPS || b[1] < -BARY_EPS || b[2] < -BARY_EPS {
        return None;
    }
    for c in &mut b {
        *c = c.max(0.0);
    }
    let sum = b[0] + b[1] + b[2];
    Some([b[0] / sum, b[1] / sum, b[2] / sum])
}

/// Closest point on triangle `(a, b, c)` to `p`, with barycentric
/// coordinates of the result.
pub(crate) fn closest_point_triangle(
    p: Point3,
    a: Point3,
    b: Point3,
    c: Point3,
) -> (Point3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn icosphere_oracle() -> SurfacePolyhedron {
        SurfacePolyhedron::validate(synth::icosphere(3, 1.0)).unwrap()
    }

    #[test]
    fn load_icosahedron() {
        let text = include_str!("../testdata/icosahedron.off");
        let mesh = crate::io::parse_off(text, "icosahedron.off").unwrap();
        let s = SurfacePolyhedron::validate(mesh).unwrap();
        assert_eq!(s.vertices().len(), 12);
        assert_eq!(s.triangles().len(), 20);
        assert_eq!(s.component_count(), 1);
    }

    #[test]
    fn two_sphere_components() {
        let s = SurfacePolyhedron::validate(synth::two_spheres(1, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(s.component_count(), 2);
    }

    #[test]
    fn open_mesh_rejected_naming_edge() {
        // A single triangle: every edge is a boundary edge.
        let mesh = crate::io::TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        );
        let err = SurfacePolyhedron::validate(mesh).err().unwrap().to_string();
        assert!(err.contains("edge (0, 1)"), "{err}");
        assert!(err.contains("1 triangle"), "{err}");
    }

    #[test]
    fn inconsistent_orientation_rejected() {
        // Tetrahedron with one face wound the wrong way.
        let mesh = crate::io::TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        );
        // Flip one face.
        let mut bad = mesh.clone();
        bad.triangles[1] = [1, 0, 3];
        let err = SurfacePolyhedron::validate(bad).err().unwrap().to_string();
        assert!(err.contains("inconsistent orientation"), "{err}");
        // The consistent version validates.
        SurfacePolyhedron::validate(mesh).unwrap();
    }

    #[test]
    fn segment_through_icosphere_hits_twice() {
        let s = icosphere_oracle();
        let hits = s.intersect_segment(Point3::new(0.01, 0.02, -2.0), Point3::new(0.01, 0.02, 2.0));
        assert_eq!(hits.len(), 2);
        assert!(hits[0].param < hits[1].param);
        for h in &hits {
            assert!((h.point.to_vec().norm() - 1.0).abs() < 0.01);
            let sum: f64 = h.bary.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(h.bary.iter().all(|&b| b >= 0.0));
        }
    }

    #[test]
    fn segment_inside_hits_nothing() {
        let s = icosphere_oracle();
        let hits = s.intersect_segment(Point3::new(-0.3, 0.1, 0.0), Point3::new(0.3, -0.1, 0.1));
        assert!(hits.is_empty());
    }

    #[test]
    fn ray_mirrors_segment_behaviour() {
        let s = icosphere_oracle();
        let hits = s.intersect_ray(Point3::new(0.01, 0.02, -2.0), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(hits.len(), 2);
        // Ray param is a distance from the origin point.
        assert!((hits[0].param - 1.0).abs() < 0.05, "{}", hits[0].param);
        let inside = s.intersect_ray(Point3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(inside.len(), 1);
    }

    #[test]
    fn circle_hits_satisfy_both_equations() {
        let s = icosphere_oracle();
        let plane = Plane3::new(Point3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let hits = s.intersect_circle(&plane, Point3::new(0.0, 0.0, 0.0), 1.0);
        assert!(!hits.is_empty());
        for h in &hits {
            assert!(plane.signed_distance(h.point).abs() <= 1e-9);
            assert!((h.point.to_vec().norm() - 1.0).abs() <= 1e-9);
        }
        // A plane missing the surface entirely.
        let plane = Plane3::new(Point3::new(0.0, 0.0, 5.0), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(s.intersect_circle(&plane, Point3::new(0.0, 0.0, 5.0), 0.5).is_empty());
    }

    #[test]
    fn contains_trivial_cases() {
        let s = icosphere_oracle();
        assert!(s.contains(Point3::new(0.0, 0.0, 0.0)));
        assert!(s.contains(Point3::new(0.3, -0.2, 0.5)));
        assert!(!s.contains(Point3::new(10.0, 10.0, 10.0)));
        assert!(!s.contains(Point3::new(1.5, 0.0, 0.0)));
        // On-surface points resolve as inside.
        let near = s.nearest_point(Point3::new(0.9, 0.0, 0.0));
        assert!(s.contains(near.point));
    }

    #[test]
    fn nearest_point_cases() {
        let s = icosphere_oracle();
        // A point on the surface maps to itself.
        let v = s.vertices()[5];
        let hit = s.nearest_point(v);
        assert!(hit.param < 1e-12);
        assert!(hit.point.distance(v) < 1e-12);
        // Radial symmetry up to faceting.
        let hit = s.nearest_point(Point3::new(0.0, 0.0, 2.0));
        assert!((hit.param - 1.0).abs() < 0.01);
        assert!(hit.point.distance(Point3::new(0.0, 0.0, 1.0)) < 0.05);
    }

    #[test]
    fn closed_surface_parity() {
        let s = icosphere_oracle();
        let inside = Point3::new(0.1, 0.2, -0.3);
        let outside = Point3::new(1.7, 0.4, 0.2);
        let far = Point3::new(-2.0, 1.0, 3.0);
        assert_eq!(s.intersect_segment(inside, outside).len() % 2, 1);
        assert_eq!(s.intersect_segment(outside, far).len() % 2, 0);
    }
}
