//! The mesh size function: a g-Lipschitz scalar field sampled at the
//! vertices of the input surface.
//!
//! The geometric constraint comes from a pole-based approximation of the
//! distance to the medial axis (local feature size): the Voronoi diagram of
//! the surface vertices is read off the full Delaunay tessellation, each
//! vertex contributes its farthest cell vertex on each side of the surface
//! as a pole, and lfs is the distance to the pole cloud. User and geometric
//! constraints combine as `min(h_user, eps * lfs)` and are then gradient-
//! limited over the surface edge graph so that
//! `h(x_i) <= h(x_j) + g |x_i - x_j|` holds on every edge.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::delaunay::Tessellation;
use crate::geom::Point3;
use crate::io::RawSizeField;
use crate::oracle::SurfacePolyhedron;
use crate::{Error, Result};

/// Default geometric sizing coefficient `eps` in `h_g = eps * lfs`.
pub const DEFAULT_LFS_EPS: f64 = 0.5;
/// Default gradient limit.
pub const DEFAULT_GRAD_LIMIT: f64 = 0.2;

/// Per-vertex local-feature-size estimate.
#[derive(Debug, Clone)]
pub struct LfsEstimate {
    /// Distance-to-medial-axis approximation per surface vertex.
    pub values: Vec<f64>,
    /// The medial-axis point cloud (poles) the estimate used.
    pub poles: Vec<Point3>,
    /// Vertices that fell back to nearest-non-adjacent-triangle distance.
    pub fallback_count: usize,
}

/// User sizing constraint.
#[derive(Debug, Clone)]
pub enum UserSize {
    Uniform(f64),
    PerVertex(Vec<f64>),
}

impl UserSize {
    fn at(&self, v: usize) -> f64 {
        match self {
            UserSize::Uniform(h) => *h,
            UserSize::PerVertex(hs) => hs[v],
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            UserSize::Uniform(h) => {
                if !(*h > 0.0) || !h.is_finite() {
                    return Err(Error::Config(format!("non-positive target size {h}")));
                }
            }
            UserSize::PerVertex(hs) => {
                if hs.len() != n {
                    return Err(Error::Config(format!(
                        "per-vertex sizes: {} values for {n} vertices",
                        hs.len()
                    )));
                }
                if let Some(h) = hs.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
                    return Err(Error::Config(format!("non-positive target size {h}")));
                }
            }
        }
        Ok(())
    }
}

/// The g-Lipschitz mesh size function, piecewise linear over the host
/// surface. Immutable after construction; evaluation is thread-safe.
#[derive(Clone)]
pub struct SizeField {
    host: Arc<SurfacePolyhedron>,
    values: Vec<f64>,
    lipschitz_g: f64,
}

/// Estimates lfs at every vertex of the surface via Amenta-Bern poles.
pub fn estimate_lfs(surface: &SurfacePolyhedron) -> Result<LfsEstimate> {
    let verts = surface.vertices();
    let n = verts.len();
    let tess = Tessellation::build(verts)?;
    if tess.vertex_count() != n {
        return Err(Error::InvalidMesh(
            "surface has coincident vertices; cannot estimate feature size".into(),
        ));
    }

    // Voronoi cell vertices = circumcentres of incident cells.
    let mut cell_vertices: Vec<Vec<Point3>> = vec![Vec::new(); n];
    for t in tess.finite_tets() {
        if let Ok(cc) = tess.circumcentre(t) {
            for v in tess.tet_vertices(t) {
                cell_vertices[v as usize].push(cc);
            }
        }
    }
    // Vertices on the convex hull have unbounded cells: their outer pole
    // lies at infinity and is skipped.
    let mut on_hull = vec![false; n];
    for t in tess.live_tets() {
        if tess.is_ghost_tet(t) {
            for v in tess.tet_vertices(t) {
                if v != crate::delaunay::GHOST {
                    on_hull[v as usize] = true;
                }
            }
        }
    }

    let diag = surface.bbox_diagonal();
    let mut poles: Vec<Point3> = Vec::new();
    let mut no_pole: Vec<usize> = Vec::new();
    for v in 0..n {
        let p = verts[v];
        let normal = surface.vertex_normal(v as u32);
        let mut inner: Option<(f64, Point3)> = None;
        let mut outer: Option<(f64, Point3)> = None;
        for &cc in &cell_vertices[v] {
            let rel = cc - p;
            let d = rel.norm();
            if d > 4.0 * diag {
                continue; // wildly degenerate circumcentre
            }
            let side = rel.dot(normal);
            let slot = if side < 0.0 { &mut inner } else { &mut outer };
            if slot.map(|(best, _)| d > best).unwrap_or(true) {
                *slot = Some((d, cc));
            }
        }
        let mut found = false;
        if let Some((d, cc)) = inner {
            if d > 0.0 {
                poles.push(cc);
                found = true;
            }
        }
        if !on_hull[v] {
            if let Some((d, cc)) = outer {
                if d > 0.0 {
                    poles.push(cc);
                    found = true;
                }
            }
        }
        if !found {
            no_pole.push(v);
        }
    }
    if poles.is_empty() {
        return Err(Error::InvalidMesh(
            "no poles found; input too coarse for feature-size estimation".into(),
        ));
    }

    let kd = KdTree::build(&poles);
    let mut values = vec![0.0f64; n];
    for v in 0..n {
        values[v] = kd.nearest_distance(verts[v]).min(diag);
    }
    // Fallback for vertices whose own cell produced no pole: distance to the
    // nearest triangle outside the one-ring, a crude local thickness.
    let mut fallback_count = 0usize;
    for &v in &no_pole {
        fallback_count += 1;
        let d = nearest_non_adjacent_triangle(surface, v as u32);
        values[v] = values[v].min(d).min(diag);
    }
    for (v, val) in values.iter_mut().enumerate() {
        if !(*val > 0.0) {
            return Err(Error::InvalidMesh(format!(
                "non-positive feature size at vertex {v}"
            )));
        }
    }
    Ok(LfsEstimate { values, poles, fallback_count })
}

fn nearest_non_adjacent_triangle(surface: &SurfacePolyhedron, v: u32) -> f64 {
    use std::collections::HashSet;
    let mut ring: HashSet<u32> = HashSet::new();
    for &t in surface.vertex_triangles(v) {
        ring.insert(t);
        for &w in &surface.triangles()[t as usize] {
            for &t2 in surface.vertex_triangles(w) {
                ring.insert(t2);
            }
        }
    }
    let p = surface.vertices()[v as usize];
    let mut best = f64::INFINITY;
    for t in 0..surface.triangles().len() as u32 {
        if ring.contains(&t) {
            continue;
        }
        let [a, b, c] = surface.triangle_points(t);
        let (q, _) = crate::oracle::closest_point_triangle(p, a, b, c);
        best = best.min(p.distance(q));
    }
    best
}

/// Builds the size field: `min(user, eps * lfs)` per vertex, then
/// gradient-limited over the edge graph by a Dijkstra-style sweep so the
/// Lipschitz inequality holds exactly on every edge.
pub fn build_field(
    surface: &Arc<SurfacePolyhedron>,
    lfs: &LfsEstimate,
    user: &UserSize,
    epsilon: f64,
    g: f64,
) -> Result<SizeField> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Config(format!("lfs coefficient eps={epsilon} must be positive")));
    }
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::Config(format!("gradient limit g={g} outside (0, 1)")));
    }
    let n = surface.vertices().len();
    user.validate(n)?;
    if lfs.values.len() != n {
        return Err(Error::Config("lfs estimate does not match the surface".into()));
    }
    let mut values: Vec<f64> = (0..n)
        .map(|v| user.at(v).min(epsilon * lfs.values[v]))
        .collect();
    gradient_limit(surface, &mut values, g);
    Ok(SizeField { host: Arc::clone(surface), values, lipschitz_g: g })
}

/// In-place Persson-style gradient limiting over the surface edge graph:
/// a multi-source Dijkstra sweep that only ever lowers values.
fn gradient_limit(surface: &SurfacePolyhedron, values: &mut [f64], g: f64) {
    let verts = surface.vertices();
    // Adjacency from the validated edge list.
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); verts.len()];
    for &(u, v) in surface.edges() {
        adj[u as usize].push(v);
        adj[v as usize].push(u);
    }
    let mut heap: BinaryHeap<Reverse<(u64, u32)>> = values
        .iter()
        .enumerate()
        .map(|(i, &h)| Reverse((h.to_bits(), i as u32)))
        .collect();
    while let Some(Reverse((bits, u))) = heap.pop() {
        let h = f64::from_bits(bits);
        if h > values[u as usize] {
            continue; // stale entry
        }
        for &v in &adj[u as usize] {
            let cand = h + g * verts[u as usize].distance(verts[v as usize]);
            if cand < values[v as usize] {
                values[v as usize] = cand;
                heap.push(Reverse((cand.to_bits(), v)));
            }
        }
    }
}

impl SizeField {
    /// Uniform field of value `h` (trivially g-Lipschitz).
    pub fn uniform(host: &Arc<SurfacePolyhedron>, h: f64, g: f64) -> Result<SizeField> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Config(format!("non-positive target size {h}")));
        }
        Ok(SizeField {
            host: Arc::clone(host),
            values: vec![h; host.vertices().len()],
            lipschitz_g: g,
        })
    }

    /// Rebinds a deserialised field to its host surface, validating sample
    /// correspondence and the Lipschitz invariant (naming the first
    /// offending edge on failure).
    pub fn from_raw(host: &Arc<SurfacePolyhedron>, raw: &RawSizeField) -> Result<SizeField> {
        let verts = host.vertices();
        if raw.samples.len() != verts.len() {
            return Err(Error::Config(format!(
                "size field has {} samples for {} surface vertices",
                raw.samples.len(),
                verts.len()
            )));
        }
        let tol = 1e-9 * host.bbox_diagonal();
        for (i, (p, _)) in raw.samples.iter().enumerate() {
            if p.distance(verts[i]) > tol {
                return Err(Error::Config(format!(
                    "size field sample {i} does not coincide with surface vertex {i}"
                )));
            }
        }
        let g = raw.lipschitz_g;
        let values: Vec<f64> = raw.samples.iter().map(|(_, h)| *h).collect();
        for &(u, v) in host.edges() {
            let (hu, hv) = (values[u as usize], values[v as usize]);
            let len = verts[u as usize].distance(verts[v as usize]);
            let bound = hv + g * len;
            if hu - bound > 1e-9 * hu {
                return Err(Error::Config(format!(
                    "size field violates the g-Lipschitz bound on edge ({u}, {v})"
                )));
            }
            let bound = hu + g * len;
            if hv - bound > 1e-9 * hv {
                return Err(Error::Config(format!(
                    "size field violates the g-Lipschitz bound on edge ({u}, {v})"
                )));
            }
        }
        Ok(SizeField { host: Arc::clone(host), values, lipschitz_g: g })
    }

    /// Evaluates the field at an arbitrary point: nearest-point projection
    /// onto the host surface, then barycentric interpolation.
    pub fn eval(&self, p: Point3) -> f64 {
        let hit = self.host.nearest_point(p);
        let tri = self.host.triangles()[hit.triangle as usize];
        hit.bary[0] * self.values[tri[0] as usize]
            + hit.bary[1] * self.values[tri[1] as usize]
            + hit.bary[2] * self.values[tri[2] as usize]
    }

    pub fn value_at_vertex(&self, v: u32) -> f64 {
        self.values[v as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lipschitz_g(&self) -> f64 {
        self.lipschitz_g
    }

    pub fn host(&self) -> &Arc<SurfacePolyhedron> {
        &self.host
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Samples for the `sizefield v1` serialisation.
    pub fn to_samples(&self) -> Vec<(Point3, f64)> {
        self.host
            .vertices()
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .collect()
    }
}

/// Minimal kd-tree for nearest-neighbour queries over a point cloud.
struct KdTree {
    points: Vec<Point3>,
    /// Recursive median layout: node i splits `idx` by axis `depth % 3`.
    idx: Vec<u32>,
}

impl KdTree {
    fn build(points: &[Point3]) -> KdTree {
        let mut idx: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree { points: points.to_vec(), idx: Vec::new() };
        let n = idx.len();
        if n > 0 {
            tree.sort_range(&mut idx, 0, n, 0);
        }
        tree.idx = idx;
        tree
    }

    fn sort_range(&self, idx: &mut [u32], start: usize, end: usize, depth: usize) {
        if end - start <= 1 {
            return;
        }
        let mid = (start + end) / 2;
        let axis = depth % 3;
        let key = |p: Point3| match axis {
            0 => p.x,
            1 => p.y,
            _ => p.z,
        };
        idx[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            key(self.points[a as usize])
                .partial_cmp(&key(self.points[b as usize]))
                .unwrap()
                .then(a.cmp(&b))
        });
        self.sort_range(idx, start, mid, depth + 1);
        self.sort_range(idx, mid + 1, end, depth + 1);
    }

    fn nearest_distance(&self, q: Point3) -> f64 {
        let mut best = f64::INFINITY;
        self.search(q, 0, self.idx.len(), 0, &mut best);
        best.sqrt()
    }

    fn search(&self, q: Point3, start: usize, end: usize, depth: usize, best: &mut f64) {
        if start >= end {
            return;
        }
        let mid = (start + end) / 2;
        let p = self.points[self.idx[mid] as usize];
        *best = best.min(q.distance2(p));
        let axis = depth % 3;
        let delta = match axis {
            0 => q.x - p.x,
            1 => q.y - p.y,
            _ => q.z - p.z,
        };
        let (near, far) = if delta < 0.0 {
            ((start, mid), (mid + 1, end))
        } else {
            ((mid + 1, end), (start, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        if delta * delta < *best {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn surf(mesh: crate::io::TriMesh) -> Arc<SurfacePolyhedron> {
        Arc::new(SurfacePolyhedron::validate(mesh).unwrap())
    }

    #[test]
    fn lfs_of_sphere_is_the_radius() {
        let s = surf(synth::icosphere(3, 2.0));
        let lfs = estimate_lfs(&s).unwrap();
        let n = lfs.values.len() as f64;
        let mean: f64 = lfs.values.iter().sum::<f64>() / n;
        assert!((mean - 2.0).abs() / 2.0 < 0.15, "mean lfs {mean} vs radius 2");
        for &v in &lfs.values {
            assert!((v - 2.0).abs() / 2.0 < 0.15, "lfs {v} vs radius 2");
        }
    }

    #[test]
    fn lfs_of_thin_plate_is_half_thickness() {
        // Faces sampled finer than the thickness, so the pole cloud's
        // lateral quantisation stays small against t/2.
        let s = surf(synth::slab(2.0, 2.0, 0.4, 20, 20, 2));
        let lfs = estimate_lfs(&s).unwrap();
        // Check interior face vertices (away from the slab's side walls).
        let mut checked = 0;
        for (i, p) in s.vertices().iter().enumerate() {
            let on_face = p.z == 0.0 || p.z == 0.4;
            let interior =
                p.x > 0.55 && p.x < 1.45 && p.y > 0.55 && p.y < 1.45;
            if on_face && interior {
                assert!(
                    (lfs.values[i] - 0.2).abs() / 0.2 < 0.25,
                    "lfs {} at {:?} vs t/2 = 0.2",
                    lfs.values[i],
                    p
                );
                checked += 1;
            }
        }
        assert!(checked > 20, "checked {checked}");
    }

    #[test]
    fn lfs_of_separated_spheres_is_componentwise() {
        let s = surf(synth::two_spheres(2, 1.0, 0.5, 3.0));
        let lfs = estimate_lfs(&s).unwrap();
        for (i, p) in s.vertices().iter().enumerate() {
            let expected = if p.x < 2.0 { 1.0 } else { 0.5 };
            assert!(
                (lfs.values[i] - expected).abs() / expected < 0.2,
                "lfs {} at vertex {i}, expected {expected}",
                lfs.values[i]
            );
        }
    }

    #[test]
    fn field_without_user_constraint_tracks_lfs() {
        let s = surf(synth::icosphere(3, 1.0));
        let lfs = estimate_lfs(&s).unwrap();
        let f = build_field(&s, &lfs, &UserSize::Uniform(1e9), 0.5, 0.2).unwrap();
        for &v in f.values() {
            assert!((v - 0.5).abs() < 0.1, "field {v} vs eps*R = 0.5");
        }
    }

    #[test]
    fn small_uniform_user_constraint_passes_through_unchanged() {
        let s = surf(synth::icosphere(2, 1.0));
        let lfs = estimate_lfs(&s).unwrap();
        let f = build_field(&s, &lfs, &UserSize::Uniform(0.05), 0.5, 0.2).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.05), "limiting must be a no-op");
    }

    #[test]
    fn pinned_value_matches_dijkstra_oracle() {
        let s = surf(synth::icosphere(1, 1.0));
        let lfs = estimate_lfs(&s).unwrap();
        let n = s.vertices().len();
        let mut user = vec![10.0; n];
        user[0] = 0.01;
        let g = 0.1;
        let f = build_field(&s, &lfs, &UserSize::PerVertex(user.clone()), 0.5, g).unwrap();

        // Independent oracle: h(i) = min_j raw(j) + g * dist_graph(i, j) via
        // Bellman-Ford over the edge graph.
        let raw: Vec<f64> = (0..n).map(|v| user[v].min(0.5 * lfs.values[v])).collect();
        let mut oracle = raw.clone();
        for _ in 0..n {
            let mut changed = false;
            for &(u, v) in s.edges() {
                let len = s.vertices()[u as usize].distance(s.vertices()[v as usize]);
                let (u, v) = (u as usize, v as usize);
                if oracle[u] + g * len < oracle[v] {
                    oracle[v] = oracle[u] + g * len;
                    changed = true;
                }
                if oracle[v] + g * len < oracle[u] {
                    oracle[u] = oracle[v] + g * len;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for i in 0..n {
            assert!(
                (f.values()[i] - oracle[i]).abs() <= 1e-12,
                "vertex {i}: {} vs oracle {}",
                f.values()[i],
                oracle[i]
            );
        }
    }

    #[test]
    fn limiting_is_monotone_and_idempotent() {
        let s = surf(synth::torus(1.0, 0.4, 24, 12));
        let lfs = estimate_lfs(&s).unwrap();
        let n = s.vertices().len();
        let mut user = vec![0.8; n];
        user[5] = 0.02;
        let f = build_field(&s, &lfs, &UserSize::PerVertex(user.clone()), 0.5, 0.15).unwrap();
        for (i, &v) in f.values().iter().enumerate() {
            let raw = user[i].min(0.5 * lfs.values[i]);
            assert!(v <= raw + 1e-15, "limiting only decreases values");
        }
        // Idempotent: re-limiting the limited values changes nothing.
        let again =
            build_field(&s, &lfs, &UserSize::PerVertex(f.values().to_vec()), 1e9, 0.15).unwrap();
        for i in 0..n {
            assert_eq!(f.values()[i].to_bits(), again.values()[i].to_bits());
        }
        // Edge inequality holds exactly.
        for &(u, v) in s.edges() {
            let len = s.vertices()[u as usize].distance(s.vertices()[v as usize]);
            let (hu, hv) = (f.values()[u as usize], f.values()[v as usize]);
            assert!(hu <= hv + 0.15 * len + 1e-12 * hu);
            assert!(hv <= hu + 0.15 * len + 1e-12 * hv);
        }
    }

    #[test]
    fn field_becomes_uniform_as_g_shrinks() {
        let s = surf(synth::icosphere(2, 1.0));
        let lfs = estimate_lfs(&s).unwrap();
        let n = s.vertices().len();
        let mut user = vec![10.0; n];
        user[0] = 0.01;
        let spread = |g: f64| {
            let f = build_field(&s, &lfs, &UserSize::PerVertex(user.clone()), 0.5, g).unwrap();
            let max = f.values().iter().cloned().fold(f64::MIN, f64::max);
            max - 0.01
        };
        let wide = spread(0.3);
        let narrow = spread(0.01);
        assert!(narrow < wide / 5.0, "narrow {narrow} vs wide {wide}");
    }

    #[test]
    fn eval_reproduces_samples_and_interpolates() {
        let s = surf(synth::icosphere(2, 1.0));
        let lfs = estimate_lfs(&s).unwrap();
        let n = s.vertices().len();
        let user: Vec<f64> = (0..n).map(|i| 0.1 + 0.001 * (i % 7) as f64).collect();
        let f = build_field(&s, &lfs, &UserSize::PerVertex(user), 0.5, 0.3).unwrap();
        // Exactly reproduces node values.
        for (i, &p) in s.vertices().iter().enumerate().step_by(17) {
            assert_eq!(f.eval(p).to_bits(), f.values()[i].to_bits(), "vertex {i}");
        }
        // Edge midpoints average the endpoints.
        for &(u, v) in s.edges().iter().step_by(37) {
            let mid = s.vertices()[u as usize].midpoint(s.vertices()[v as usize]);
            let expect = 0.5 * (f.values()[u as usize] + f.values()[v as usize]);
            let tol = 1e-9 * expect.abs().max(1e-12);
            assert!((f.eval(mid) - expect).abs() <= tol);
        }
    }

    #[test]
    fn field_is_lipschitz_along_surface_polylines() {
        let s = surf(synth::icosphere(3, 1.0));
        let lfs = estimate_lfs(&s).unwrap();
        let n = s.vertices().len();
        let mut user = vec![0.6; n];
        user[0] = 0.03;
        let g = 0.2;
        let f = build_field(&s, &lfs, &UserSize::PerVertex(user), 0.5, g).unwrap();
        // Dense polyline along a great circle.
        let steps = 400;
        let mut prev: Option<(Point3, f64)> = None;
        for k in 0..=steps {
            let a = std::f64::consts::PI * 2.0 * k as f64 / steps as f64;
            let p = Point3::new(a.cos(), a.sin(), 0.0);
            let h = f.eval(p);
            if let Some((q, hq)) = prev {
                let d = p.distance(q);
                assert!(
                    (h - hq).abs() <= g * d + 1e-6,
                    "Lipschitz violated along polyline: |{h} - {hq}| > {g}*{d}"
                );
            }
            prev = Some((p, h));
        }
    }

    #[test]
    fn raw_round_trip_and_validation() {
        let s = surf(synth::icosphere(1, 1.0));
        let lfs = estimate_lfs(&s).unwrap();
        let f = build_field(&s, &lfs, &UserSize::Uniform(0.2), 0.5, 0.2).unwrap();
        let text = crate::io::format_sizefield(f.lipschitz_g(), &f.to_samples());
        let raw = crate::io::parse_sizefield(&text, "f.txt").unwrap();
        let f2 = SizeField::from_raw(&s, &raw).unwrap();
        for i in 0..f.values().len() {
            assert_eq!(f.values()[i].to_bits(), f2.values()[i].to_bits());
        }
        // Injected gradient violation is rejected, naming an edge.
        let mut broken = raw.clone();
        broken.samples[0].1 = 100.0;
        let err = SizeField::from_raw(&s, &broken).err().unwrap().to_string();
        assert!(err.contains("g-Lipschitz bound on edge"), "{err}");
    }
}
