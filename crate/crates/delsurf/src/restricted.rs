//! The restricted Delaunay complexes: the sub-complex of surface facets
//! whose dual Voronoi edges pierce the surface, and the sub-complex of
//! cells whose circumcentres fall inside the enclosed volume.
//!
//! Facet identity is the sorted vertex triple: cell ids churn across cavity
//! retriangulations but vertex triples are stable. `update_after_insert`
//! must run before the next insertion commits, while the destroyed cells'
//! vertex arrays are still readable.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::delaunay::{FacetRef, InsertResult, TetId, Tessellation, VertexId, GHOST};
use crate::geom::{self, Ball3};
use crate::oracle::{SurfaceHit, SurfacePolyhedron};

/// Scale factor from surface-ball radius to the element size measure:
/// `h(f) = sqrt(3) * r`, the edge length of an equilateral triangle whose
/// diametric ball has radius `r`.
pub const SIZE_FROM_RADIUS: f64 = 1.732_050_807_568_877_2;

/// A facet of the restricted surface complex with its cached geometry.
#[derive(Debug, Clone)]
pub struct RestrictedFacet {
    /// Sorted vertex triple: the stable identity.
    pub key: [VertexId; 3],
    /// Current handle, anchored on a finite cell.
    pub facet: FacetRef,
    /// Vertices in the winding induced by the handle.
    pub tri: [VertexId; 3],
    /// Largest surface Delaunay ball.
    pub surface_ball: Ball3,
    /// Every dual-edge intersection with the surface.
    pub all_hits: Vec<SurfaceHit>,
    /// Radius-edge ratio of the 2-simplex.
    pub rho: f64,
    /// Element size h(f) = sqrt(3) r.
    pub size_h: f64,
    /// Surface discretisation error: distance between the surface-ball
    /// centre and the diametric-ball centre.
    pub err_eps: f64,
    /// Diametric (in-plane) circumball of the facet.
    pub diametric: Ball3,
    /// Frontal status, maintained by the refinement driver.
    pub frontal: bool,
}

/// Keys removed from and (re)classified into the complex by one update.
#[derive(Debug, Default)]
pub struct FacetDelta {
    pub removed: Vec<[VertexId; 3]>,
    pub added: Vec<[VertexId; 3]>,
}

/// Necessary-condition topology summary of the surface complex.
#[derive(Debug)]
pub struct ManifoldnessReport {
    /// edge use count -> number of edges with that count.
    pub edge_use_histogram: BTreeMap<usize, usize>,
    /// V - E + F of the facet complex.
    pub euler_characteristic: i64,
    /// Connected components of the facet complex (edge-adjacency).
    pub component_count: usize,
}

impl ManifoldnessReport {
    pub fn is_closed_manifold(&self) -> bool {
        self.edge_use_histogram.keys().all(|&k| k == 2)
    }
}

pub struct RestrictedComplex {
    pub surface_facets: HashMap<[VertexId; 3], RestrictedFacet>,
    pub volume_tets: HashSet<TetId>,
    /// Undirected surface edge -> facet keys using it.
    edge_facets: HashMap<(VertexId, VertexId), Vec<[VertexId; 3]>>,
    /// Multiset of surface edge lengths (f64 bits -> multiplicity), for the
    /// running minimum-edge instrumentation.
    edge_lengths: BTreeMap<u64, usize>,
    /// Facets whose classification failed numerically (degenerate duals);
    /// diagnostic only.
    pub skipped_facets: usize,
}

impl RestrictedComplex {
    /// Classifies the whole tessellation from scratch.
    pub fn new(tess: &Tessellation, oracle: &SurfacePolyhedron) -> RestrictedComplex {
        let mut rc = RestrictedComplex {
            surface_facets: HashMap::new(),
            volume_tets: HashSet::new(),
            edge_facets: HashMap::new(),
            edge_lengths: BTreeMap::new(),
            skipped_facets: 0,
        };
        for (facet, _key) in tess.finite_facets() {
            rc.classify_and_store(tess, oracle, facet);
        }
        for t in tess.finite_tets() {
            if Self::tet_in_volume(tess, oracle, t) {
                rc.volume_tets.insert(t);
            }
        }
        rc
    }

    /// Whether a finite cell belongs to the restricted volume complex:
    /// its circumcentre lies in the enclosed volume.
    pub fn tet_in_volume(tess: &Tessellation, oracle: &SurfacePolyhedron, t: TetId) -> bool {
        match tess.circumcentre(t) {
            Ok(c) => oracle.contains(c),
            Err(_) => false,
        }
    }

    /// Classifies one facet: computes its dual Voronoi edge, intersects it
    /// with the surface, and builds the cached record when restricted.
    /// The handle may be anchored on either side; ghost-ghost facets and
    /// facets with no surface intersection return `None`.
    pub fn classify_facet(
        tess: &Tessellation,
        oracle: &SurfacePolyhedron,
        facet: FacetRef,
    ) -> Option<RestrictedFacet> {
        let anchored = canonical_anchor(tess, facet)?;
        let tri = tess.facet_vertices(anchored.tet, anchored.slot);
        let pts = tri.map(|v| tess.point(v));

        // The dual edge in axis form, clipped to a window that certainly
        // contains the surface. Sliver cells put circumcentres arbitrarily
        // far out; querying the oracle with such endpoints would throw away
        // all precision, so the window is capped at 4 bbox diagonals.
        let cap = 4.0 * oracle.bbox_diagonal();
        let axis = tess.dual_axis(anchored, cap).ok()?;
        if axis.t_self.is_nan() || axis.t_other.is_nan() {
            return None;
        }
        let lo = axis.t_self.min(axis.t_other).max(-cap);
        let hi = axis.t_self.max(axis.t_other).min(cap);
        if !(lo < hi) {
            return None;
        }
        let mut hits = oracle.intersect_segment(axis.at(lo), axis.at(hi));
        // Flat cells report infinite parameters, widening the window to the
        // whole cap; the bisector conditions discard any hit the true dual
        // edge does not reach.
        hits.retain(|h| axis.admits(h.point, pts[0]));
        if hits.is_empty() {
            return None;
        }

        // Largest associated surface ball; ties keep the first hit in
        // (param, triangle) order.
        let mut best = 0usize;
        let mut best_r = f64::NEG_INFINITY;
        for (i, h) in hits.iter().enumerate() {
            let r = h.point.distance(pts[0]);
            if r > best_r {
                best_r = r;
                best = i;
            }
        }
        let centre = hits[best].point;
        let surface_ball = Ball3::new(centre, best_r);

        let diametric = geom::circumball_tri3(pts[0], pts[1], pts[2]).ok()?;
        let err_eps = centre.distance(diametric.centre);
        let rho = geom::radius_edge(pts[0], pts[1], pts[2]);

        Some(RestrictedFacet {
            key: sorted3(tri),
            facet: anchored,
            tri,
            surface_ball,
            all_hits: hits,
            rho,
            size_h: SIZE_FROM_RADIUS * best_r,
            err_eps,
            diametric,
            frontal: false,
        })
    }

    fn classify_and_store(
        &mut self,
        tess: &Tessellation,
        oracle: &SurfacePolyhedron,
        facet: FacetRef,
    ) -> Option<[VertexId; 3]> {
        let anchored = match canonical_anchor(tess, facet) {
            Some(a) => a,
            None => return None,
        };
        let key = sorted3(tess.facet_vertices(anchored.tet, anchored.slot));
        match Self::classify_facet(tess, oracle, anchored) {
            Some(rf) => {
                self.insert_facet(tess, rf);
                Some(key)
            }
            None => {
                // May fail numerically rather than geometrically.
                if tess.dual_axis(anchored, 1.0).is_err() {
                    self.skipped_facets += 1;
                }
                None
            }
        }
    }

    fn insert_facet(&mut self, tess: &Tessellation, rf: RestrictedFacet) {
        let key = rf.key;
        if let Some(old) = self.surface_facets.insert(key, rf) {
            // Replacing an existing record: drop its edge bookkeeping first.
            self.remove_edges(tess, &old.key);
        }
        for (u, v) in facet_edges(key) {
            self.edge_facets.entry((u, v)).or_default().push(key);
            let len = tess.point(u).distance(tess.point(v));
            *self.edge_lengths.entry(len.to_bits()).or_insert(0) += 1;
        }
    }

    fn remove_edges(&mut self, tess: &Tessellation, key: &[VertexId; 3]) {
        for (u, v) in facet_edges(*key) {
            if let Some(list) = self.edge_facets.get_mut(&(u, v)) {
                if let Some(pos) = list.iter().position(|k| k == key) {
                    list.remove(pos);
                }
                if list.is_empty() {
                    self.edge_facets.remove(&(u, v));
                }
            }
            let len = tess.point(u).distance(tess.point(v)).to_bits();
            if let Some(count) = self.edge_lengths.get_mut(&len) {
                *count -= 1;
                if *count == 0 {
                    self.edge_lengths.remove(&len);
                }
            }
        }
    }

    fn remove_facet(&mut self, tess: &Tessellation, key: &[VertexId; 3]) -> bool {
        if self.surface_facets.remove(key).is_some() {
            self.remove_edges(tess, key);
            true
        } else {
            false
        }
    }

    /// Shortest edge length currently present in the surface complex.
    pub fn min_edge_length(&self) -> Option<f64> {
        self.edge_lengths.keys().next().map(|&b| f64::from_bits(b))
    }

    /// Facet keys sharing the undirected edge `(u, v)`.
    pub fn facets_on_edge(&self, u: VertexId, v: VertexId) -> &[[VertexId; 3]] {
        self.edge_facets
            .get(&(u.min(v), u.max(v)))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    /// Incremental maintenance after one committed insertion: facets of
    /// destroyed cells leave the complex, facets of created cells are
    /// (re)classified. Equivalent to reclassifying from scratch.
    pub fn update_after_insert(
        &mut self,
        tess: &Tessellation,
        oracle: &SurfacePolyhedron,
        result: &InsertResult,
    ) -> FacetDelta {
        let mut delta = FacetDelta::default();

        for &t in &result.destroyed {
            self.volume_tets.remove(&t);
            for slot in 0..4u8 {
                let tri = tess.facet_vertices(t, slot);
                if tri.contains(&GHOST) {
                    continue;
                }
                let key = sorted3(tri);
                if self.remove_facet(tess, &key) {
                    delta.removed.push(key);
                }
            }
        }

        let mut seen: HashSet<[VertexId; 3]> = HashSet::new();
        for &t in &result.created {
            if !tess.is_ghost_tet(t) && Self::tet_in_volume(tess, oracle, t) {
                self.volume_tets.insert(t);
            }
            for slot in 0..4u8 {
                let tri = tess.facet_vertices(t, slot);
                if tri.contains(&GHOST) {
                    continue;
                }
                let key = sorted3(tri);
                if !seen.insert(key) {
                    continue;
                }
                let had = self.remove_facet(tess, &key);
                if self
                    .classify_and_store(tess, oracle, FacetRef { tet: t, slot })
                    .is_some()
                {
                    delta.added.push(key);
                } else if had {
                    delta.removed.push(key);
                }
            }
        }
        delta.removed.sort_unstable();
        delta.removed.dedup();
        delta.added.sort_unstable();
        delta
    }

    /// Edge-use histogram, Euler characteristic and component count of the
    /// current facet complex. Diagnostic: pre-convergence complexes may be
    /// non-manifold.
    pub fn manifoldness_report(&self) -> ManifoldnessReport {
        let mut edge_use: HashMap<(VertexId, VertexId), usize> = HashMap::new();
        let mut vertices: HashSet<VertexId> = HashSet::new();
        for key in self.surface_facets.keys() {
            vertices.extend(key.iter().copied());
            for e in facet_edges(*key) {
                *edge_use.entry(e).or_insert(0) += 1;
            }
        }
        let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in edge_use.values() {
            *histogram.entry(c).or_insert(0) += 1;
        }
        let v = vertices.len() as i64;
        let e = edge_use.len() as i64;
        let f = self.surface_facets.len() as i64;

        // Components over edge adjacency.
        let mut labels: HashMap<[VertexId; 3], usize> = HashMap::new();
        let mut component_count = 0usize;
        let mut keys: Vec<[VertexId; 3]> = self.surface_facets.keys().copied().collect();
        keys.sort_unstable();
        for key in &keys {
            if labels.contains_key(key) {
                continue;
            }
            component_count += 1;
            let mut stack = vec![*key];
            labels.insert(*key, component_count);
            while let Some(k) = stack.pop() {
                for e in facet_edges(k) {
                    for other in self.facets_on_edge(e.0, e.1) {
                        if !labels.contains_key(other) {
                            labels.insert(*other, component_count);
                            stack.push(*other);
                        }
                    }
                }
            }
        }

        ManifoldnessReport {
            edge_use_histogram: histogram,
            euler_characteristic: v - e + f,
            component_count,
        }
    }
}

/// Re-anchors a facet handle on a canonical finite cell so classification
/// floats do not depend on which side the caller held: of the finite sides,
/// the cell with the lexicographically smaller sorted vertex quadruple
/// anchors. `None` for ghost-ghost facets.
fn canonical_anchor(tess: &Tessellation, facet: FacetRef) -> Option<FacetRef> {
    let key = sorted3(tess.facet_vertices(facet.tet, facet.slot));
    let other = tess.tet_neighbours(facet.tet)[facet.slot as usize];
    let mut best: Option<([VertexId; 4], FacetRef)> = None;
    for cell in [facet.tet, other] {
        if tess.is_ghost_tet(cell) {
            continue;
        }
        let mut quad = tess.tet_vertices(cell);
        quad.sort_unstable();
        let slot = (0..4u8).find(|&s| sorted3(tess.facet_vertices(cell, s)) == key)?;
        let fr = FacetRef { tet: cell, slot };
        if best.map(|(q, _)| quad < q).unwrap_or(true) {
            best = Some((quad, fr));
        }
    }
    best.map(|(_, fr)| fr)
}

fn sorted3(mut f: [VertexId; 3]) -> [VertexId; 3] {
    f.sort_unstable();
    f
}

fn facet_edges(key: [VertexId; 3]) -> [(VertexId, VertexId); 3] {
    let e = |a: VertexId, b: VertexId| (a.min(b), a.max(b));
    [e(key[0], key[1]), e(key[1], key[2]), e(key[2], key[0])]
}
