//! Incremental full-dimensional Delaunay tessellation with Voronoi-dual
//! accessors.
//!
//! Bowyer-Watson insertion over exact predicates. The convex hull is closed
//! by ghost cells sharing a single conceptual vertex at infinity, so hull
//! facets behave like ordinary facets whose dual edges are rays. Exact
//! cosphericity is resolved by a symbolic tie-break on insertion order:
//! on an exactly-zero insphere sign the query point counts as inside only
//! when its index is lower than the largest vertex index of the cell, so a
//! newly inserted point (largest index so far) never claims a tied sphere.
//!
//! Single-writer: mutation is confined to one thread of control; read-only
//! traversal of a quiescent tessellation is freely shareable.

use std::collections::HashMap;

use crate::geom::{self, Point3, Vec3};
use crate::{Error, Result};

/// Vertex index into the point array; `GHOST` is the vertex at infinity.
pub type VertexId = u32;
/// Cell index.
pub type TetId = u32;

pub const GHOST: VertexId = u32::MAX;
const NO_TET: TetId = u32::MAX;

/// Relative tolerance (to the bbox diagonal) under which points collapse.
pub const COLLAPSE_REL: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Tet {
    v: [VertexId; 4],
    /// `nbr[i]` is the cell across the facet opposite `v[i]`.
    nbr: [TetId; 4],
    alive: bool,
}

/// A facet handle: the 2-face of `tet` opposite local vertex `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FacetRef {
    pub tet: TetId,
    pub slot: u8,
}

/// The dual Voronoi edge of a facet: a segment between the two adjacent
/// circumcentres, or a ray for hull facets.
#[derive(Debug, Clone, Copy)]
pub enum VoronoiEdge {
    Segment { a: Point3, b: Point3 },
    Ray { origin: Point3, dir: Vec3 },
}

/// The dual Voronoi edge of a facet in axis form: points are
/// `origin + t * dir`. Evaluating endpoints this way stays accurate even
/// when a sliver cell's circumcentre lies astronomically far away, since
/// `origin` is the facet's local diametric centre and the parameters carry
/// the distance.
///
/// The parameter signs are exact: the anchor cell's apex lies behind the
/// outward-wound facet and the neighbour's apex in front of it (orientation
/// invariants of the complex), which fixes the direction each circumcentre
/// leaves the facet plane. Magnitudes are floating point and degrade to
/// infinity for flat cells; callers clip to their window of interest and
/// should validate hits against the apexes.
#[derive(Debug, Clone, Copy)]
pub struct DualAxis {
    /// Diametric (in-plane) circumcentre of the facet.
    pub origin: Point3,
    /// Unit facet normal, pointing away from the anchor cell.
    pub dir: Vec3,
    /// Parameter of the anchor cell's circumcentre (possibly `-inf` for
    /// numerically flat cells).
    pub t_self: f64,
    /// Parameter of the neighbour's circumcentre; `+inf` across a ghost or
    /// a numerically flat neighbour.
    pub t_other: f64,
    /// The anchor cell's fourth vertex.
    pub apex_self: Point3,
    /// The neighbour's fourth vertex; `None` across a ghost.
    pub apex_other: Option<Point3>,
}

impl DualAxis {
    pub fn at(&self, t: f64) -> Point3 {
        self.origin + self.dir * t
    }

    /// True when `p` is no closer to either apex than to the facet
    /// vertex `v` (with relative slack): the bisector conditions that carve
    /// the dual edge out of the axis.
    pub fn admits(&self, p: Point3, v: Point3) -> bool {
        let d0 = p.distance2(v) * (1.0 - 1e-9);
        if p.distance2(self.apex_self) < d0 {
            return false;
        }
        match self.apex_other {
            Some(q) => p.distance2(q) >= d0,
            None => true,
        }
    }
}

/// Result of a committed insertion.
#[derive(Debug)]
pub struct InsertResult {
    pub vertex: VertexId,
    pub destroyed: Vec<TetId>,
    pub created: Vec<TetId>,
}

/// A planned (not yet committed) insertion.
#[derive(Debug)]
pub struct InsertPlan {
    point: Point3,
    cavity: Vec<TetId>,
    /// Boundary facets as (cavity tet, slot, outside neighbour).
    boundary: Vec<(TetId, u8, TetId)>,
    /// Minimum distance from the new point to any rim vertex: the length of
    /// the shortest edge the commit will create.
    pub min_new_edge: f64,
}

/// Why an insertion plan was refused.
#[derive(Debug, Clone, Copy)]
pub enum InsertReject {
    /// The point lies within the collapse tolerance of an existing vertex.
    Duplicate(VertexId),
}

pub struct Tessellation {
    points: Vec<Point3>,
    tets: Vec<Tet>,
    free: Vec<TetId>,
    last_located: TetId,
    epoch: u32,
    mark: Vec<u32>,
    collapse_tol: f64,
    duplicate_warnings: usize,
}

/// For a positively oriented cell `[v0, v1, v2, v3]`, the facet opposite
/// each slot, wound so its normal points away from the opposite vertex.
const FACET_ORDER: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

impl Tessellation {
    /// Builds the Delaunay tessellation of `initial_points`. Points closer
    /// than `1e-12` of the bbox diagonal collapse with a warning count.
    /// Fails when the input has no four affinely independent points.
    pub fn build(initial_points: &[Point3]) -> Result<Tessellation> {
        for p in initial_points {
            if !p.is_finite() {
                return Err(Error::Config("non-finite input point".into()));
            }
        }
        if initial_points.len() < 4 {
            return Err(Error::Config(
                "need at least 4 points to seed a 3D tessellation".into(),
            ));
        }
        let mut lo = initial_points[0];
        let mut hi = initial_points[0];
        for &p in initial_points {
            lo = lo.min_coords(p);
            hi = hi.max_coords(p);
        }
        let diag = (hi - lo).norm();
        if diag == 0.0 {
            return Err(Error::Config("all input points coincide".into()));
        }
        let collapse_tol = COLLAPSE_REL * diag;

        // Spatial-hash dedup of the input.
        let cell = collapse_tol.max(1e-300);
        let key_of = |p: Point3| -> (i64, i64, i64) {
            (
                (p.x / cell).floor() as i64,
                (p.y / cell).floor() as i64,
                (p.z / cell).floor() as i64,
            )
        };
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        let mut unique: Vec<Point3> = Vec::with_capacity(initial_points.len());
        let mut duplicate_warnings = 0usize;
        'outer: for &p in initial_points {
            let (kx, ky, kz) = key_of(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(ids) = grid.get(&(kx + dx, ky + dy, kz + dz)) {
                            for &i in ids {
                                if unique[i].distance(p) < collapse_tol {
                                    duplicate_warnings += 1;
                                    continue 'outer;
                                }
                            }
                        }
                    }
                }
            }
            grid.entry((kx, ky, kz)).or_default().push(unique.len());
            unique.push(p);
        }

        // First four affinely independent points, decided exactly.
        let p0 = 0usize;
        let p1 = (1..unique.len())
            .find(|&i| unique[i] != unique[p0])
            .ok_or_else(|| Error::Config("all points coincide".into()))?;
        let p2 = (p1 + 1..unique.len())
            .find(|&i| !collinear(unique[p0], unique[p1], unique[i]))
            .ok_or_else(|| Error::Config("all points are collinear".into()))?;
        let p3 = (p2 + 1..unique.len())
            .find(|&i| geom::orient3d(unique[p0], unique[p1], unique[p2], unique[i]) != 0)
            .ok_or_else(|| Error::Config("all points are coplanar; cannot seed a 3D complex".into()))?;

        let mut tess = Tessellation {
            points: Vec::new(),
            tets: Vec::new(),
            free: Vec::new(),
            last_located: 0,
            epoch: 0,
            mark: Vec::new(),
            collapse_tol,
            duplicate_warnings,
        };
        tess.seed_first_cell(&unique, [p0, p1, p2, p3]);

        for (i, &p) in unique.iter().enumerate() {
            if i == p0 || i == p1 || i == p2 || i == p3 {
                continue;
            }
            match tess.insert(p) {
                Ok(_) => {}
                Err(InsertReject::Duplicate(_)) => tess.duplicate_warnings += 1,
            }
        }
        Ok(tess)
    }

    fn seed_first_cell(&mut self, unique: &[Point3], chosen: [usize; 4]) {
        // Keep vertex ids in input order; orient the cell by permuting the
        // index tuple, not the stored points.
        let quad = chosen.map(|i| unique[i]);
        self.points.extend_from_slice(&quad);
        let ids: [VertexId; 4] = if geom::orient3d(quad[0], quad[1], quad[2], quad[3]) > 0 {
            [0, 1, 2, 3]
        } else {
            [0, 1, 3, 2]
        };

        // One finite cell and four ghosts across its facets.
        let t0: TetId = 0;
        self.tets.push(Tet {
            v: ids,
            nbr: [1, 2, 3, 4], // ghost i+1 across facet i
            alive: true,
        });
        for slot in 0..4usize {
            let f = FACET_ORDER[slot].map(|k| ids[k]);
            // Ghost at slot 0 puts the hull facet (outward) at facet 0.
            self.tets.push(Tet {
                v: [GHOST, f[0], f[1], f[2]],
                nbr: [t0, NO_TET, NO_TET, NO_TET],
                alive: true,
            });
        }
        // Wire ghost-to-ghost adjacency through their shared edges.
        // Ghost g (1-based slot s) has hull facet (f0, f1, f2); its facet
        // opposite v[k] (k in 1..4) contains GHOST and two hull vertices.
        let ghosts: Vec<TetId> = (1..5).collect();
        for &g in &ghosts {
            for k in 1..4usize {
                if self.tets[g as usize].nbr[k] != NO_TET {
                    continue;
                }
                let facet = self.facet_vertices(g, k as u8);
                let pair = ghost_facet_pair(facet);
                for &h in &ghosts {
                    if h == g {
                        continue;
                    }
                    for k2 in 1..4usize {
                        let other = self.facet_vertices(h, k2 as u8);
                        if ghost_facet_pair(other) == pair {
                            self.tets[g as usize].nbr[k] = h;
                            self.tets[h as usize].nbr[k2] = g;
                        }
                    }
                }
            }
        }
        self.last_located = t0;
    }

    pub fn point(&self, v: VertexId) -> Point3 {
        self.points[v as usize]
    }

    pub fn vertex_count(&self) -> usize {
        self.points.len()
    }

    pub fn duplicate_warnings(&self) -> usize {
        self.duplicate_warnings
    }

    pub fn collapse_tolerance(&self) -> f64 {
        self.collapse_tol
    }

    pub fn is_alive(&self, t: TetId) -> bool {
        self.tets
            .get(t as usize)
            .map(|tet| tet.alive)
            .unwrap_or(false)
    }

    pub fn tet_vertices(&self, t: TetId) -> [VertexId; 4] {
        self.tets[t as usize].v
    }

    pub fn tet_neighbours(&self, t: TetId) -> [TetId; 4] {
        self.tets[t as usize].nbr
    }

    pub fn is_ghost_tet(&self, t: TetId) -> bool {
        self.tets[t as usize].v.contains(&GHOST)
    }

    fn ghost_slot(&self, t: TetId) -> Option<u8> {
        self.tets[t as usize].v.iter().position(|&v| v == GHOST).map(|s| s as u8)
    }

    /// Vertices of the facet opposite `slot`, wound away from `v[slot]`
    /// (outward hull orientation when `slot` is the ghost slot).
    pub fn facet_vertices(&self, t: TetId, slot: u8) -> [VertexId; 3] {
        let v = self.tets[t as usize].v;
        FACET_ORDER[slot as usize].map(|k| v[k])
    }

    /// Ids of live finite cells, ascending.
    pub fn finite_tets(&self) -> impl Iterator<Item = TetId> + '_ {
        self.tets
            .iter()
            .enumerate()
            .filter(|(_, t)| t.alive && !t.v.contains(&GHOST))
            .map(|(i, _)| i as TetId)
    }

    /// Ids of all live cells including ghosts, ascending.
    pub fn live_tets(&self) -> impl Iterator<Item = TetId> + '_ {
        self.tets
            .iter()
            .enumerate()
            .filter(|(_, t)| t.alive)
            .map(|(i, _)| i as TetId)
    }

    /// Every finite facet exactly once, as `(FacetRef, sorted key)`.
    /// The handle is anchored on the finite side (or the lower cell id when
    /// both sides are finite).
    pub fn finite_facets(&self) -> Vec<(FacetRef, [VertexId; 3])> {
        let mut out = Vec::new();
        for t in self.live_tets() {
            let tet = &self.tets[t as usize];
            if tet.v.contains(&GHOST) {
                continue;
            }
            for slot in 0..4u8 {
                let n = tet.nbr[slot as usize];
                let keep = if self.is_ghost_tet(n) { true } else { t < n };
                if keep {
                    let f = self.facet_vertices(t, slot);
                    out.push((FacetRef { tet: t, slot }, sorted3(f)));
                }
            }
        }
        out
    }

    /// Circumcentre of a finite cell.
    pub fn circumcentre(&self, t: TetId) -> Result<Point3> {
        let v = self.tets[t as usize].v;
        debug_assert!(!v.contains(&GHOST));
        geom::circumcentre_tet(
            self.points[v[0] as usize],
            self.points[v[1] as usize],
            self.points[v[2] as usize],
            self.points[v[3] as usize],
        )
    }

    /// The Voronoi edge dual to a finite facet. The facet must have at
    /// least one finite side; `facet.tet` must be finite.
    pub fn voronoi_edge(&self, facet: FacetRef) -> Result<VoronoiEdge> {
        let t = facet.tet;
        debug_assert!(!self.is_ghost_tet(t), "dual edges anchor on a finite cell");
        let n = self.tets[t as usize].nbr[facet.slot as usize];
        let a = self.circumcentre(t)?;
        if self.is_ghost_tet(n) {
            let f = self.facet_vertices(t, facet.slot);
            let [p0, p1, p2] = f.map(|v| self.points[v as usize]);
            let dir = (p1 - p0)
                .cross(p2 - p0)
                .normalized()
                .ok_or(Error::DegenerateSimplex("degenerate hull facet"))?;
            Ok(VoronoiEdge::Ray { origin: a, dir })
        } else {
            let b = self.circumcentre(n)?;
            Ok(VoronoiEdge::Segment { a, b })
        }
    }

    /// The dual edge of a facet in stable axis form. The anchor cell
    /// (`facet.tet`) must be finite. `window_cap` is the largest |t| the
    /// caller will look at: parameters provably beyond it are reported as
    /// signed infinity without resolving their exact magnitude. Parameters
    /// can be NaN for fully degenerate facets; callers clip to their
    /// window of interest.
    pub fn dual_axis(&self, facet: FacetRef, window_cap: f64) -> Result<DualAxis> {
        let t = facet.tet;
        debug_assert!(!self.is_ghost_tet(t));
        let tri = self.facet_vertices(t, facet.slot);
        let [a, b, c] = tri.map(|v| self.points[v as usize]);
        let ball = geom::circumball_tri3(a, b, c)?;
        let dir = (b - a)
            .cross(c - a)
            .normalized()
            .ok_or(Error::DegenerateSimplex("degenerate facet"))?;
        // Filtered evaluation. The denominator's sign is an orientation
        // invariant of the complex (the anchor's apex is behind the
        // outward-wound facet, the neighbour's in front), so only
        // magnitudes and the numerator sign are measured. A flat cell
        // (apex height below rounding noise) with a healthy numerator has
        // |t| provably beyond the caller's window, so signed infinity is
        // exact for the clipped query; only the doubly degenerate corner
        // (apex also on the diametric sphere to within noise) escalates to
        // rational arithmetic for the numerator sign.
        let apex_param = |apex: Point3, denom_sign: f64| -> f64 {
            let w = apex - ball.centre;
            let num = w.norm2() - ball.radius * ball.radius;
            let nd = dir.dot(w);
            let nd_noise = 1e-13 * w.norm();
            let num_noise = 1e-13 * (w.norm2() + ball.radius * ball.radius);
            if nd.abs() > nd_noise {
                if num.abs() <= num_noise {
                    return 0.0; // apex on the diametric sphere
                }
                debug_assert_eq!(nd > 0.0, denom_sign > 0.0, "orientation invariant");
                let mag = (num / (2.0 * nd)).abs();
                let mag = if mag.is_finite() { mag } else { f64::INFINITY };
                let num_sign = if num > 0.0 { 1.0 } else { -1.0 };
                return num_sign * denom_sign * mag;
            }
            // Flat cell: |t| >= (|num| - num_noise) / (4 nd_noise).
            let beyond = num.abs() > num_noise + 4.0 * window_cap * nd_noise;
            let num_sign = if beyond {
                if num > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                exact_diametric_side(a, b, c, apex)
            };
            num_sign * denom_sign * f64::INFINITY
        };
        let self_apex = self.tets[t as usize].v[facet.slot as usize];
        let t_self = apex_param(self.points[self_apex as usize], -1.0);
        let n = self.tets[t as usize].nbr[facet.slot as usize];
        let (t_other, apex_other) = if self.is_ghost_tet(n) {
            (f64::INFINITY, None)
        } else {
            let shared = sorted3(tri);
            let apex = self.tets[n as usize]
                .v
                .iter()
                .copied()
                .find(|v| !shared.contains(v))
                .expect("neighbour has an apex");
            let q = self.points[apex as usize];
            (apex_param(q, 1.0), Some(q))
        };
        Ok(DualAxis {
            origin: ball.centre,
            dir,
            t_self,
            t_other,
            apex_self: self.points[self_apex as usize],
            apex_other,
        })
    }

    /// Conflict ("the open circumball of `t` claims `p`") under the
    /// insertion-order tie-break. `p_idx` is the index the point has or
    /// would get.
    fn conflicts(&self, t: TetId, p: Point3, p_idx: VertexId) -> bool {
        let tet = &self.tets[t as usize];
        match tet.v.iter().position(|&v| v == GHOST) {
            None => {
                let [a, b, c, d] = tet.v.map(|v| self.points[v as usize]);
                match geom::insphere(a, b, c, d, p) {
                    Ok(s) if s > 0 => true,
                    Ok(s) if s < 0 => false,
                    Ok(_) => p_idx < tet.v.iter().copied().max().unwrap(),
                    Err(_) => false,
                }
            }
            Some(gs) => {
                let hull = self.facet_vertices(t, gs as u8);
                let [a, b, c] = hull.map(|v| self.points[v as usize]);
                let o = geom::orient3d(a, b, c, p);
                if o > 0 {
                    return true;
                }
                if o < 0 {
                    return false;
                }
                // Coplanar with the hull facet: decide by the in-circle
                // test lifted through the interior neighbour's apex.
                let interior = tet.nbr[gs as usize];
                let apex = self
                    .tets[interior as usize]
                    .v
                    .iter()
                    .copied()
                    .find(|v| !hull.contains(v) && *v != GHOST)
                    .expect("interior cell has a finite apex");
                let q = self.points[apex as usize];
                match geom::insphere(a, b, c, q, p) {
                    Ok(s) if s > 0 => true,
                    Ok(s) if s < 0 => false,
                    Ok(_) => {
                        let max =
                            hull.iter().copied().chain([apex]).max().unwrap();
                        p_idx < max
                    }
                    Err(_) => false,
                }
            }
        }
    }

    /// Finds any cell in conflict with `p`, or `None` when no open
    /// circumball claims it (an exact duplicate of an existing vertex).
    fn locate_conflict(&mut self, p: Point3, p_idx: VertexId) -> Option<TetId> {
        let mut cur = if self.is_alive(self.last_located) {
            self.last_located
        } else {
            self.live_tets().next()?
        };
        if self.is_ghost_tet(cur) {
            let gs = self.ghost_slot(cur).unwrap();
            cur = self.tets[cur as usize].nbr[gs as usize];
        }
        let cap = 64 + 4 * (self.tets.len() as f64).cbrt() as usize * 4;
        let mut prev = NO_TET;
        for _ in 0..cap {
            let tet = &self.tets[cur as usize];
            let mut advanced = false;
            for slot in 0..4u8 {
                let n = tet.nbr[slot as usize];
                if n == prev {
                    continue;
                }
                let f = self.facet_vertices(cur, slot);
                let [a, b, c] = f.map(|v| self.points[v as usize]);
                if geom::orient3d(a, b, c, p) > 0 {
                    if self.is_ghost_tet(n) {
                        // Stepping past the hull: the ghost is in conflict.
                        return Some(n);
                    }
                    prev = cur;
                    cur = n;
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                // Containing cell found.
                if self.conflicts(cur, p, p_idx) {
                    return Some(cur);
                }
                break;
            }
        }
        // Hull surf: breadth-first over ghost cells.
        let ghost_seed = self.live_tets().find(|&t| self.is_ghost_tet(t));
        if let Some(seed) = ghost_seed {
            self.epoch += 1;
            let epoch = self.epoch;
            self.mark.resize(self.tets.len(), 0);
            let mut queue = std::collections::VecDeque::from([seed]);
            self.mark[seed as usize] = epoch;
            while let Some(g) = queue.pop_front() {
                if self.conflicts(g, p, p_idx) {
                    return Some(g);
                }
                for slot in 0..4u8 {
                    let n = self.tets[g as usize].nbr[slot as usize];
                    if self.is_ghost_tet(n) && self.mark[n as usize] != epoch {
                        self.mark[n as usize] = epoch;
                        queue.push_back(n);
                    }
                }
            }
        }
        // Last resort: exhaustive scan.
        let live: Vec<TetId> = self.live_tets().collect();
        live.into_iter().find(|&t| self.conflicts(t, p, p_idx))
    }

    /// Plans the insertion of `p`: computes the conflict cavity and its
    /// boundary without mutating the complex.
    pub fn plan_insert(&mut self, p: Point3) -> std::result::Result<InsertPlan, InsertReject> {
        debug_assert!(p.is_finite());
        let p_idx = self.points.len() as VertexId;
        let seed = match self.locate_conflict(p, p_idx) {
            Some(t) => t,
            None => {
                let dup = (0..self.points.len())
                    .min_by(|&a, &b| {
                        self.points[a]
                            .distance2(p)
                            .partial_cmp(&self.points[b].distance2(p))
                            .unwrap()
                    })
                    .unwrap() as VertexId;
                return Err(InsertReject::Duplicate(dup));
            }
        };

        // Conflict cavity by breadth-first search.
        self.epoch += 1;
        let epoch = self.epoch;
        self.mark.resize(self.tets.len(), 0);
        let mut cavity = vec![seed];
        self.mark[seed as usize] = epoch;
        let mut head = 0usize;
        while head < cavity.len() {
            let t = cavity[head];
            head += 1;
            for slot in 0..4u8 {
                let n = self.tets[t as usize].nbr[slot as usize];
                if self.mark[n as usize] == epoch {
                    continue;
                }
                if self.conflicts(n, p, p_idx) {
                    self.mark[n as usize] = epoch;
                    cavity.push(n);
                }
            }
        }

        // Collapse-tolerance duplicates are always cavity vertices.
        let mut min_new_edge = f64::INFINITY;
        let mut boundary = Vec::new();
        for &t in &cavity {
            for slot in 0..4u8 {
                let n = self.tets[t as usize].nbr[slot as usize];
                if self.mark[n as usize] != epoch {
                    boundary.push((t, slot, n));
                    for v in self.facet_vertices(t, slot) {
                        if v != GHOST {
                            min_new_edge = min_new_edge.min(self.points[v as usize].distance(p));
                        }
                    }
                }
            }
            for v in self.tets[t as usize].v {
                if v != GHOST && self.points[v as usize].distance(p) < self.collapse_tol {
                    return Err(InsertReject::Duplicate(v));
                }
            }
        }

        Ok(InsertPlan { point: p, cavity, boundary, min_new_edge })
    }

    /// Commits a plan produced by `plan_insert` with no intervening
    /// mutation. Returns the new vertex and the destroyed/created cells.
    pub fn commit(&mut self, plan: InsertPlan) -> InsertResult {
        let p = plan.point;
        let p_idx = self.points.len() as VertexId;
        self.points.push(p);

        // Retire the cavity.
        for &t in &plan.cavity {
            self.tets[t as usize].alive = false;
        }

        // One new cell per boundary facet.
        let mut created = Vec::with_capacity(plan.boundary.len());
        let mut rim: HashMap<(VertexId, VertexId), (TetId, u8)> = HashMap::new();
        for &(t, slot, outside) in &plan.boundary {
            let f = self.facet_vertices(t, slot);
            let new_tet = if let Some(g) = f.iter().position(|&v| v == GHOST) {
                // Hull hole facet: the rim edge keeps the winding induced by
                // the destroyed hull facet, with the ghost re-attached.
                debug_assert!(self.tets[t as usize].v.contains(&GHOST));
                let _ = g;
                let gslot = self.ghost_slot(t).unwrap();
                let hull = self.facet_vertices(t, gslot);
                // Directed rim edge: hull cyclic order with the absent
                // vertex dropped.
                let absent = hull
                    .iter()
                    .position(|v| !f.contains(v))
                    .expect("one hull vertex is outside the shared facet");
                let u = hull[(absent + 1) % 3];
                let w = hull[(absent + 2) % 3];
                Tet { v: [u, w, GHOST, p_idx], nbr: [NO_TET; 4], alive: true }
            } else {
                let [a, b, c] = f.map(|v| self.points[v as usize]);
                let o = geom::orient3d(a, b, c, p);
                debug_assert!(o != 0, "cavity boundary facet coplanar with the new point");
                let (x, y, z) = if o > 0 { (f[0], f[1], f[2]) } else { (f[0], f[2], f[1]) };
                Tet { v: [x, y, z, p_idx], nbr: [NO_TET; 4], alive: true }
            };
            let id = match self.free.pop() {
                Some(id) => {
                    self.tets[id as usize] = new_tet;
                    id
                }
                None => {
                    self.tets.push(new_tet);
                    (self.tets.len() - 1) as TetId
                }
            };
            created.push((id, outside));
        }
        self.mark.resize(self.tets.len(), 0);

        // Wire each new cell to the surviving outside cell, then to its
        // siblings through the rim edges.
        for &(id, outside) in &created {
            // Facet opposite the new vertex (slot 3) faces the outside cell.
            let shared = sorted3(self.facet_vertices(id, 3));
            let o_slot = (0..4u8)
                .find(|&s| sorted3(self.facet_vertices(outside, s)) == shared)
                .expect("outside cell shares the boundary facet");
            self.tets[id as usize].nbr[3] = outside;
            self.tets[outside as usize].nbr[o_slot as usize] = id;

            for slot in 0..3u8 {
                let f = self.facet_vertices(id, slot);
                let pair = facet_pair_without(&f, p_idx);
                match rim.entry(pair) {
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert((id, slot));
                    }
                    std::collections::hash_map::Entry::Occupied(e) => {
                        let (other, oslot) = *e.get();
                        self.tets[id as usize].nbr[slot as usize] = other;
                        self.tets[other as usize].nbr[oslot as usize] = id;
                    }
                }
            }
        }

        let created: Vec<TetId> = created.into_iter().map(|(id, _)| id).collect();
        for &t in &plan.cavity {
            self.free.push(t);
        }
        self.last_located = created[0];

        if cfg!(debug_assertions) {
            for &t in &created {
                self.assert_cell_invariants(t);
            }
        }

        InsertResult { vertex: p_idx, destroyed: plan.cavity, created }
    }

    /// Plans and commits in one step.
    pub fn insert(&mut self, p: Point3) -> std::result::Result<InsertResult, InsertReject> {
        let plan = self.plan_insert(p)?;
        Ok(self.commit(plan))
    }

    fn assert_cell_invariants(&self, t: TetId) {
        let tet = &self.tets[t as usize];
        if !tet.v.contains(&GHOST) {
            let [a, b, c, d] = tet.v.map(|v| self.points[v as usize]);
            debug_assert!(geom::orient3d(a, b, c, d) > 0, "cell {t} not positively oriented");
        }
        for slot in 0..4u8 {
            let n = tet.nbr[slot as usize];
            debug_assert!(n != NO_TET, "cell {t} slot {slot} unwired");
            debug_assert!(self.tets[n as usize].alive, "cell {t} wired to dead {n}");
            let back = self.tets[n as usize]
                .nbr
                .iter()
                .any(|&m| m == t);
            debug_assert!(back, "asymmetric adjacency {t} <-> {n}");
        }
    }

    /// Brute-force Delaunay check: no vertex lies strictly inside the open
    /// circumball of any live finite cell. Quadratic; tests only.
    pub fn check_delaunay_brute_force(&self) -> bool {
        for t in self.finite_tets() {
            let vs = self.tets[t as usize].v;
            let [a, b, c, d] = vs.map(|v| self.points[v as usize]);
            for (i, &p) in self.points.iter().enumerate() {
                if vs.contains(&(i as VertexId)) {
                    continue;
                }
                if matches!(geom::insphere(a, b, c, d, p), Ok(s) if s > 0) {
                    return false;
                }
            }
        }
        true
    }

    /// The set of live finite cells as sorted vertex quadruples, sorted;
    /// the canonical combinatorial fingerprint of the complex.
    pub fn tet_set(&self) -> Vec<[VertexId; 4]> {
        let mut out: Vec<[VertexId; 4]> = self
            .finite_tets()
            .map(|t| {
                let mut v = self.tets[t as usize].v;
                v.sort_unstable();
                v
            })
            .collect();
        out.sort_unstable();
        out
    }
}

fn sorted3(mut f: [VertexId; 3]) -> [VertexId; 3] {
    f.sort_unstable();
    f
}

/// The two finite vertices of a ghost-containing facet, sorted.
fn ghost_facet_pair(f: [VertexId; 3]) -> (VertexId, VertexId) {
    let fin: Vec<VertexId> = f.iter().copied().filter(|&v| v != GHOST).collect();
    debug_assert_eq!(fin.len(), 2);
    (fin[0].min(fin[1]), fin[0].max(fin[1]))
}

/// Key for a facet of a new cell: its vertices with the apex removed,
/// sorted (the ghost id participates like any other).
fn facet_pair_without(f: &[VertexId; 3], apex: VertexId) -> (VertexId, VertexId) {
    let rest: Vec<VertexId> = f.iter().copied().filter(|&v| v != apex).collect();
    debug_assert_eq!(rest.len(), 2);
    (rest[0].min(rest[1]), rest[0].max(rest[1]))
}

/// Exact side of apex `q` relative to the diametric sphere of facet
/// `(a, b, c)`: +1 outside, -1 inside, 0 on it. Rational arithmetic;
/// evaluates `sign(|aq|^2 |n|^2 - aq . P)` where `c0 - a = P / (2 |n|^2)`.
fn exact_diametric_side(a: Point3, b: Point3, c: Point3, q: Point3) -> f64 {
    use num_rational::BigRational;
    use num_traits::Signed;

    type V = [BigRational; 3];
    let r = |x: f64| BigRational::from_float(x).expect("finite coordinate");
    let vec = |p: Point3, o: Point3| -> V { [r(p.x) - r(o.x), r(p.y) - r(o.y), r(p.z) - r(o.z)] };
    let dot = |u: &V, v: &V| -> BigRational {
        u[0].clone() * v[0].clone() + u[1].clone() * v[1].clone() + u[2].clone() * v[2].clone()
    };
    let cross = |u: &V, v: &V| -> V {
        [
            u[1].clone() * v[2].clone() - u[2].clone() * v[1].clone(),
            u[2].clone() * v[0].clone() - u[0].clone() * v[2].clone(),
            u[0].clone() * v[1].clone() - u[1].clone() * v[0].clone(),
        ]
    };

    let ab = vec(b, a);
    let ac = vec(c, a);
    let aq = vec(q, a);
    let n = cross(&ab, &ac);
    let n2 = dot(&n, &n);
    let p1 = cross(&n, &ab);
    let p2 = cross(&ac, &n);
    let p = [
        p1[0].clone() * dot(&ac, &ac) + p2[0].clone() * dot(&ab, &ab),
        p1[1].clone() * dot(&ac, &ac) + p2[1].clone() * dot(&ab, &ab),
        p1[2].clone() * dot(&ac, &ac) + p2[2].clone() * dot(&ab, &ab),
    ];
    let value = dot(&aq, &aq) * n2 - dot(&aq, &p);
    if value.is_positive() {
        1.0
    } else if value.is_negative() {
        -1.0
    } else {
        0.0
    }
}

/// Exact collinearity of three points: all three axis projections are
/// collinear in 2D.
fn collinear(a: Point3, b: Point3, c: Point3) -> bool {
    use robust::{orient2d, Coord};
    let pr = |x: f64, y: f64| Coord { x, y };
    orient2d(pr(a.x, a.y), pr(b.x, b.y), pr(c.x, c.y)) == 0.0
        && orient2d(pr(a.y, a.z), pr(b.y, b.z), pr(c.y, c.z)) == 0.0
        && orient2d(pr(a.z, a.x), pr(b.z, b.x), pr(c.z, c.x)) == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    fn lcg_points(n: usize, seed: u64, scale: f64) -> Vec<Point3> {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        (0..n).map(|_| pt(next() * scale, next() * scale, next() * scale)).collect()
    }

    #[test]
    fn build_minimal_complex() {
        let t = Tessellation::build(&[
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(0.0, 1.0, 0.0),
            pt(0.0, 0.0, 1.0),
        ])
        .unwrap();
        assert_eq!(t.finite_tets().count(), 1);
        assert_eq!(t.live_tets().count(), 5); // one finite + four ghosts
        assert!(t.check_delaunay_brute_force());
    }

    #[test]
    fn build_rejects_coplanar() {
        let err = Tessellation::build(&[
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(0.0, 1.0, 0.0),
            pt(1.0, 1.0, 0.0),
            pt(0.25, 0.75, 0.0),
        ])
        .err()
        .unwrap();
        assert!(err.to_string().contains("coplanar"), "{err}");
    }

    #[test]
    fn build_cube_corners() {
        let corners: Vec<Point3> = (0..8)
            .map(|i| pt((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let t = Tessellation::build(&corners).unwrap();
        let n = t.finite_tets().count();
        assert!(n == 5 || n == 6, "cube triangulates into 5 or 6 tets, got {n}");
        assert!(t.check_delaunay_brute_force());
    }

    #[test]
    fn build_collapses_duplicates_with_warning() {
        let mut pts = vec![
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(0.0, 1.0, 0.0),
            pt(0.0, 0.0, 1.0),
        ];
        pts.push(pt(0.0, 0.0, 0.0)); // exact duplicate
        let t = Tessellation::build(&pts).unwrap();
        assert_eq!(t.duplicate_warnings(), 1);
        assert_eq!(t.vertex_count(), 4);
    }

    #[test]
    fn insert_centroid_one_to_four_flip() {
        let mut t = Tessellation::build(&[
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(0.0, 1.0, 0.0),
            pt(0.0, 0.0, 1.0),
        ])
        .unwrap();
        let r = t.insert(pt(0.25, 0.25, 0.25)).unwrap();
        assert_eq!(r.destroyed.len(), 1);
        assert_eq!(r.created.len(), 4);
        assert_eq!(t.finite_tets().count(), 4);
        assert!(t.check_delaunay_brute_force());
    }

    #[test]
    fn insert_duplicate_rejected() {
        let mut t = Tessellation::build(&lcg_points(20, 7, 1.0)).unwrap();
        let existing = t.point(5);
        match t.insert(existing) {
            Err(InsertReject::Duplicate(v)) => assert_eq!(v, 5),
            other => panic!("expected duplicate rejection, got {other:?}"),
        }
        // Within collapse tolerance but not exact.
        let nudged = existing + Vec3::new(t.collapse_tolerance() * 0.3, 0.0, 0.0);
        assert!(matches!(t.insert(nudged), Err(InsertReject::Duplicate(_))));
    }

    #[test]
    fn insert_outside_hull_expands() {
        let mut t = Tessellation::build(&[
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(0.0, 1.0, 0.0),
            pt(0.0, 0.0, 1.0),
        ])
        .unwrap();
        let r = t.insert(pt(2.0, 2.0, 2.0)).unwrap();
        assert!(!r.created.is_empty());
        assert!(t.check_delaunay_brute_force());
        assert_eq!(t.finite_tets().count(), 2);
    }

    #[test]
    fn incremental_matches_batch_build() {
        let pts = lcg_points(50, 42, 2.0);
        let batch = Tessellation::build(&pts).unwrap();
        let mut inc = Tessellation::build(&pts[..4]).unwrap();
        for &p in &pts[4..] {
            inc.insert(p).unwrap();
        }
        assert_eq!(batch.tet_set(), inc.tet_set());
        assert!(batch.check_delaunay_brute_force());
    }

    #[test]
    fn insertion_order_independence() {
        let pts = lcg_points(40, 99, 1.5);
        let reference = geometric_tet_set(&Tessellation::build(&pts).unwrap());
        // Deterministic shuffles via an LCG permutation.
        let mut order: Vec<usize> = (0..pts.len()).collect();
        let mut state = 0xDEADBEEFu64;
        for round in 0..6 {
            for i in (1..order.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(round);
                let j = (state >> 33) as usize % (i + 1);
                order.swap(i, j);
            }
            let shuffled: Vec<Point3> = order.iter().map(|&i| pts[i]).collect();
            let t = Tessellation::build(&shuffled).unwrap();
            assert_eq!(geometric_tet_set(&t), reference, "round {round}");
        }
    }

    fn geometric_tet_set(t: &Tessellation) -> Vec<[(u64, u64, u64); 4]> {
        let mut out: Vec<[(u64, u64, u64); 4]> = t
            .finite_tets()
            .map(|id| {
                let mut q = t.tet_vertices(id).map(|v| {
                    let p = t.point(v);
                    (p.x.to_bits(), p.y.to_bits(), p.z.to_bits())
                });
                q.sort_unstable();
                q
            })
            .collect();
        out.sort_unstable();
        out
    }

    #[test]
    fn link_of_new_vertex_is_a_ball() {
        let mut t = Tessellation::build(&lcg_points(30, 3, 1.0)).unwrap();
        let r = t.insert(pt(0.1, 0.05, -0.07)).unwrap();
        // Every created cell contains the new vertex exactly once, at slot 3.
        for &c in &r.created {
            let v = t.tet_vertices(c);
            assert_eq!(v[3], r.vertex);
            assert_eq!(v.iter().filter(|&&x| x == r.vertex).count(), 1);
        }
        // Each boundary facet of the cavity appears in exactly one new cell:
        // the facets opposite the new vertex are pairwise distinct.
        let mut keys: Vec<[VertexId; 3]> =
            r.created.iter().map(|&c| sorted3(t.facet_vertices(c, 3))).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), r.created.len());
    }

    #[test]
    fn random_points_on_sphere_are_delaunay() {
        // 200 near-cospherical points stress the exact predicates.
        let raw = lcg_points(200, 1234, 1.0);
        let pts: Vec<Point3> = raw
            .iter()
            .map(|p| {
                let n = p.to_vec().norm();
                pt(p.x / n, p.y / n, p.z / n)
            })
            .collect();
        let t = Tessellation::build(&pts).unwrap();
        assert!(t.check_delaunay_brute_force());
    }

    #[test]
    fn voronoi_edge_bipyramid_is_symmetric() {
        // Equilateral triangle in z=0 with apexes above and below.
        let h = 3f64.sqrt() / 2.0;
        let pts = [
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(0.5, h, 0.0),
            pt(0.5, h / 3.0, 0.8),
            pt(0.5, h / 3.0, -0.8),
        ];
        let t = Tessellation::build(&pts).unwrap();
        assert_eq!(t.finite_tets().count(), 2);
        // The shared facet is the equilateral triangle {0,1,2}.
        let shared = t
            .finite_facets()
            .into_iter()
            .find(|(_, key)| *key == [0, 1, 2])
            .expect("shared facet");
        match t.voronoi_edge(shared.0).unwrap() {
            VoronoiEdge::Segment { a, b } => {
                // Crosses the facet plane at the facet circumcentre.
                assert!(a.z * b.z < 0.0);
                let s = a.z / (a.z - b.z);
                let hit = a + (b - a) * s;
                let cc = geom::circumball_tri3(pts[0], pts[1], pts[2]).unwrap().centre;
                assert!(hit.distance(cc) < 1e-12);
            }
            other => panic!("expected a segment, got {other:?}"),
        }
    }

    #[test]
    fn voronoi_edge_hull_facet_is_outward_ray() {
        let t = Tessellation::build(&[
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(0.0, 1.0, 0.0),
            pt(0.0, 0.0, 1.0),
        ])
        .unwrap();
        let t0 = t.finite_tets().next().unwrap();
        let cc = t.circumcentre(t0).unwrap();
        // Facet {0,1,2} lies in z = 0; its outward direction is -z.
        let facet = t
            .finite_facets()
            .into_iter()
            .find(|(_, key)| *key == [0, 1, 2])
            .unwrap();
        match t.voronoi_edge(facet.0).unwrap() {
            VoronoiEdge::Ray { origin, dir } => {
                assert!(origin.distance(cc) < 1e-12);
                assert!((dir.z + 1.0).abs() < 1e-12, "outward is -z, got {dir:?}");
            }
            other => panic!("expected a ray, got {other:?}"),
        }
    }

    #[test]
    fn voronoi_edge_endpoints_equidistant_from_facet() {
        let pts = lcg_points(60, 5, 1.0);
        let t = Tessellation::build(&pts).unwrap();
        let mut checked = 0;
        for (fr, key) in t.finite_facets() {
            let n = t.tet_neighbours(fr.tet)[fr.slot as usize];
            if t.is_ghost_tet(n) {
                continue;
            }
            if let Ok(VoronoiEdge::Segment { a, b }) = t.voronoi_edge(fr) {
                let vs = key.map(|v| t.point(v));
                for end in [a, b] {
                    let d0 = end.distance(vs[0]);
                    for v in &vs[1..] {
                        assert!((end.distance(*v) - d0).abs() <= 1e-9 * d0.max(1.0));
                    }
                }
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn insert_on_shared_facet_matches_rebuild() {
        // Two tets sharing facet {0,1,2}; insert a point on that facet.
        let h = 3f64.sqrt() / 2.0;
        let pts = vec![
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(0.5, h, 0.0),
            pt(0.5, h / 3.0, 0.9),
            pt(0.5, h / 3.0, -0.9),
        ];
        let on_facet = pt(0.5, h / 3.0, 0.0);
        let mut inc = Tessellation::build(&pts).unwrap();
        inc.insert(on_facet).unwrap();
        assert!(inc.check_delaunay_brute_force());

        let mut batch_pts = pts.clone();
        batch_pts.push(on_facet);
        let batch = Tessellation::build(&batch_pts).unwrap();
        assert_eq!(inc.tet_set(), batch.tet_set());
    }
}
