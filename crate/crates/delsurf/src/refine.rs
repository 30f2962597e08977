//! The refinement drivers.
//!
//! One driver, two point-placement policies. `Dr` is conventional
//! Delaunay refinement: the worst facet (largest radius-edge ratio) is
//! eliminated by inserting the centre of its largest surface Delaunay ball
//! (the Type I vertex). `Fd` is the frontal variant: where possible it
//! places a size-optimal Type II vertex on the Voronoi facet of the
//! frontal (shortest) edge, at the altitude
//! `a = min(sqrt(h^2 - |e0/2|^2), (sqrt(3)/2) h)` of the isosceles
//! candidate triangle, and gates refinement so a facet is refined only when
//! its frontal edge borders a facet that already meets all constraints.
//!
//! A facet is refinable (`bad`) when `rho > rho_max`, or
//! `eps > eps_ratio * h(c)`, or `h_f > alpha * h(c)`, all strict, with the
//! size function sampled at the surface-ball centre `c`. The loop is
//! sequential; every insert is traced with the running minimum edge length
//! so the edge-length guarantees can be audited after any run.

use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::delaunay::{InsertReject, Tessellation, VertexId};
use crate::geom::{Point3, Vec3};
use crate::io::TriMesh;
use crate::metrics::InsertCounts;
use crate::oracle::SurfacePolyhedron;
use crate::restricted::{RestrictedComplex, RestrictedFacet};
use crate::sizing::SizeField;
use crate::{Error, Result};

/// Worst-case single-insert reduction factor of the minimum edge length.
pub const MIN_EDGE_FACTOR: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Conventional Delaunay refinement (Type I vertices only).
    Dr,
    /// Frontal-Delaunay (off-centre Type II vertices where admissible).
    Fd,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Algorithm> {
        match s {
            "dr" => Ok(Algorithm::Dr),
            "fd" => Ok(Algorithm::Fd),
            other => Err(Error::Config(format!("unknown algorithm `{other}` (use dr|fd)"))),
        }
    }
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Dr => "dr",
            Algorithm::Fd => "fd",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefineConfig {
    /// Radius-edge threshold, at least 1.
    pub rho_max: f64,
    /// Surface-error bound coefficient: allowed eps is `eps_ratio * h`.
    pub eps_ratio: f64,
    /// Size slack: a facet is oversized when `h_f > alpha * h`.
    pub alpha: f64,
    pub algorithm: Algorithm,
    /// Safety cap on Steiner insertions.
    pub max_inserts: usize,
    /// Initial sample size; 0 selects `max(32, 4 * components)`.
    pub seed_count: usize,
}

impl RefineConfig {
    pub fn new(algorithm: Algorithm) -> RefineConfig {
        RefineConfig {
            rho_max: 1.0,
            eps_ratio: 0.25,
            alpha: 4.0 / 3.0,
            algorithm,
            max_inserts: 200_000,
            seed_count: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_max >= 1.0) {
            return Err(Error::Config(format!(
                "rho threshold {} violates the termination precondition rho >= 1",
                self.rho_max
            )));
        }
        if !(self.eps_ratio > 0.0) {
            return Err(Error::Config("eps-ratio must be positive".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        Ok(())
    }

    fn effective_seed_count(&self, components: u32) -> usize {
        if self.seed_count > 0 {
            self.seed_count
        } else {
            32usize.max(4 * components as usize)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Seed,
    Type1,
    Type2,
}

impl VertexKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VertexKind::Seed => "seed",
            VertexKind::Type1 => "type1",
            VertexKind::Type2 => "type2",
        }
    }
}

/// One refinement insertion, as recorded for the audit trail.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub step: usize,
    pub kind: VertexKind,
    /// Radius-edge ratio of the facet that was popped.
    pub rho: f64,
    /// Surface-ball radius of that facet.
    pub r: f64,
    /// Target frontal edge length `H = sqrt(a^2 + |e0/2|^2)` when a Type II
    /// candidate was constructed.
    pub target_h: f64,
    /// Distance from the frontal-edge midpoint to the Type I point.
    pub d1: f64,
    /// Distance from the frontal-edge midpoint to the Type II point.
    pub d2: f64,
    pub min_edge_before: f64,
    pub min_edge_after: f64,
}

/// A finished refinement run with the final complexes.
pub struct Refined {
    pub converged: bool,
    pub tess: Tessellation,
    pub rc: RestrictedComplex,
    pub trace: Vec<TraceRecord>,
    pub insert_counts: InsertCounts,
    /// Frontal-gate suspensions (bootstrap/deadlock valve pops).
    pub gate_suspensions: usize,
    /// Facets abandoned after repeated duplicate Steiner points.
    pub dropped_facets: usize,
    pub wall: Duration,
}

/// Farthest-point seed sampling: at least one vertex per connected
/// component (the lowest-index vertex of each), then greedy farthest-point
/// insertion. Deterministic.
pub fn seed_sample(surface: &SurfacePolyhedron, n: usize) -> Result<Vec<Point3>> {
    let comps = surface.component_count() as usize;
    if n < comps {
        return Err(Error::Config(format!(
            "{n} seeds cannot cover {comps} connected components"
        )));
    }
    let verts = surface.vertices();
    let n = n.min(verts.len());
    let mut chosen: Vec<u32> = Vec::with_capacity(n);
    let mut first_of_component = vec![u32::MAX; comps];
    for v in 0..verts.len() as u32 {
        let c = surface.component_of_vertex(v) as usize;
        if first_of_component[c] == u32::MAX {
            first_of_component[c] = v;
        }
    }
    chosen.extend(first_of_component);

    let mut dist: Vec<f64> = verts
        .iter()
        .map(|p| {
            chosen
                .iter()
                .map(|&s| p.distance(verts[s as usize]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    while chosen.len() < n {
        let mut best = 0u32;
        let mut best_d = f64::NEG_INFINITY;
        for (v, &d) in dist.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = v as u32;
            }
        }
        if best_d <= 0.0 {
            break; // all vertices taken
        }
        chosen.push(best);
        for (v, d) in dist.iter_mut().enumerate() {
            *d = d.min(verts[v].distance(verts[best as usize]));
        }
    }
    Ok(chosen.into_iter().map(|v| verts[v as usize]).collect())
}

/// The refinement predicate: true when the facet violates the shape, the
/// surface-error, or the size constraint (all strict).
pub fn bad_simplex(f: &RestrictedFacet, cfg: &RefineConfig, field: &SizeField) -> bool {
    if f.rho > cfg.rho_max {
        return true;
    }
    let h = field.eval(f.surface_ball.centre);
    f.err_eps > cfg.eps_ratio * h || f.size_h > cfg.alpha * h
}

/// The Type I refinement point: the centre of the largest surface
/// Delaunay ball.
pub fn type1_point(f: &RestrictedFacet) -> Point3 {
    f.surface_ball.centre
}

/// Altitude of the isosceles candidate over a frontal edge of half-length
/// `half_e0`, for target edge length `h`: the ideal-element altitude capped
/// by the circumscribing constraint. `None` when the edge is too long for
/// any isosceles candidate of size `h`.
pub fn isosceles_altitude(h: f64, half_e0: f64) -> Option<f64> {
    let lift2 = h * h - half_e0 * half_e0;
    if lift2 <= 0.0 {
        return None;
    }
    Some(lift2.sqrt().min(3f64.sqrt() / 2.0 * h))
}

/// A constructed Type II (size-optimal off-centre) candidate.
#[derive(Debug, Clone, Copy)]
pub struct TypeTwo {
    pub point: Point3,
    /// Altitude of the isosceles candidate.
    pub altitude: f64,
    /// Target frontal edge length `H`.
    pub target_h: f64,
    /// Distance from the frontal-edge midpoint.
    pub d2: f64,
}

/// Identifies the frontal (shortest) edge of a facet; ties break on the
/// sorted vertex pair. Returns the two vertex ids and their points.
pub fn frontal_edge(f: &RestrictedFacet, tess: &Tessellation) -> (VertexId, VertexId) {
    let t = f.tri;
    let mut best: Option<((u32, u32), f64)> = None;
    for k in 0..3 {
        let (u, v) = (t[k], t[(k + 1) % 3]);
        let pair = (u.min(v), u.max(v));
        let len = tess.point(u).distance(tess.point(v));
        let better = match best {
            None => true,
            Some((bp, bl)) => len < bl || (len == bl && pair < bp),
        };
        if better {
            best = Some((pair, len));
        }
    }
    best.unwrap().0
}

/// Constructs the Type II candidate for a refinable facet: the plane
/// through the frontal-edge midpoint, the diametric-ball centre and the
/// surface-ball centre is intersected with the surface along the circle of
/// radius `a` about the midpoint; of the hits, the one best aligned with
/// the frontal direction wins. `None` signals fallback to Type I.
pub fn type2_point(
    f: &RestrictedFacet,
    tess: &Tessellation,
    field: &SizeField,
    oracle: &SurfacePolyhedron,
) -> Option<TypeTwo> {
    let (u, v) = frontal_edge(f, tess);
    let (pu, pv) = (tess.point(u), tess.point(v));
    let m0 = pu.midpoint(pv);
    let half_e0 = 0.5 * pu.distance(pv);

    // The plane through the edge midpoint, the diametric-ball centre and
    // the surface-ball centre is the bisector plane of the frontal edge:
    // all three points are equidistant from its endpoints. Building it from
    // the edge direction keeps it defined on flat regions, where the two
    // ball centres coincide and a three-point fit would degenerate.
    let e_dir = (pv - pu).normalized()?;
    let to_ball = f.surface_ball.centre - m0;
    let lift = (to_ball - e_dir * to_ball.dot(e_dir)).normalized();
    let lift = match lift {
        Some(l) => l,
        None => return None, // frontal direction undefined
    };

    // Predictor-corrector for the weakly nonlinear altitude equations.
    let mut h_sigma = field.eval(m0);
    let mut altitude = isosceles_altitude(h_sigma, half_e0)?;
    for _ in 0..4 {
        let apex = m0 + lift * altitude;
        let m1 = pu.midpoint(apex);
        let m2 = pv.midpoint(apex);
        h_sigma = 0.5 * (field.eval(m1) + field.eval(m2));
        let next = isosceles_altitude(h_sigma, half_e0)?;
        let done = (next - altitude).abs() <= 1e-6 * altitude;
        altitude = next;
        if done {
            break;
        }
    }

    let plane = crate::geom::Plane3::new(m0, e_dir).ok()?;
    let hits = oracle.intersect_circle(&plane, m0, altitude);
    let best = hits.iter().max_by(|a, b| {
        let da = (a.point - m0).dot(to_ball);
        let db = (b.point - m0).dot(to_ball);
        da.partial_cmp(&db)
            .unwrap()
            .then(b.param.partial_cmp(&a.param).unwrap())
            .then(b.triangle.cmp(&a.triangle))
    })?;
    let point = best.point;
    Some(TypeTwo {
        point,
        altitude,
        target_h: (altitude * altitude + half_e0 * half_e0).sqrt(),
        d2: point.distance(m0),
    })
}

/// The off-centre selection rule: the Type II point wins only when it lies
/// no farther from the frontal edge than the Type I point and at least half
/// the frontal edge length away.
pub fn select_point(
    c1: Point3,
    d1: f64,
    c2: Option<(Point3, f64)>,
    half_e0: f64,
) -> (Point3, VertexKind) {
    match c2 {
        Some((p, d2)) if d2 <= d1 && d2 >= half_e0 => (p, VertexKind::Type2),
        _ => (c1, VertexKind::Type1),
    }
}

#[derive(Debug, Clone)]
struct FacetState {
    rho: f64,
    bad: bool,
    gate_open: bool,
    e0: (VertexId, VertexId),
    gen: u64,
}

#[derive(Debug, PartialEq)]
struct QEntry {
    rho: f64,
    key: [VertexId; 3],
    gen: u64,
}

impl Eq for QEntry {}

impl Ord for QEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap on rho; ties prefer the smaller key.
        self.rho
            .total_cmp(&other.rho)
            .then_with(|| other.key.cmp(&self.key))
            .then_with(|| other.gen.cmp(&self.gen))
    }
}

impl PartialOrd for QEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct Driver<'a> {
    oracle: &'a Arc<SurfacePolyhedron>,
    field: &'a SizeField,
    cfg: &'a RefineConfig,
    tess: Tessellation,
    rc: RestrictedComplex,
    states: HashMap<[VertexId; 3], FacetState>,
    heap: BinaryHeap<QEntry>,
    gen: u64,
    /// Facets that produced one duplicate Steiner point already.
    penalized: HashSet<[VertexId; 3]>,
    dropped: HashSet<[VertexId; 3]>,
    trace: Vec<TraceRecord>,
    counts: InsertCounts,
    gate_suspensions: usize,
}

impl<'a> Driver<'a> {
    fn frontal(&self) -> bool {
        self.cfg.algorithm == Algorithm::Fd
    }

    fn compute_gate(&self, key: &[VertexId; 3], e0: (VertexId, VertexId)) -> bool {
        if !self.frontal() {
            return true;
        }
        self.rc
            .facets_on_edge(e0.0, e0.1)
            .iter()
            .any(|k| k != key && self.states.get(k).map(|s| !s.bad).unwrap_or(false))
    }

    fn refresh_state(&mut self, key: [VertexId; 3]) {
        let Some(rf) = self.rc.surface_facets.get(&key) else {
            self.states.remove(&key);
            return;
        };
        let bad = bad_simplex(rf, self.cfg, self.field);
        let e0 = frontal_edge(rf, &self.tess);
        self.gen += 1;
        let state = FacetState { rho: rf.rho, bad, gate_open: false, e0, gen: self.gen };
        self.states.insert(key, state);
    }

    fn refresh_gate_and_push(&mut self, key: [VertexId; 3]) {
        let Some(s) = self.states.get(&key) else { return };
        let (e0, bad, rho, gen) = (s.e0, s.bad, s.rho, s.gen);
        let open = self.compute_gate(&key, e0);
        if let Some(s) = self.states.get_mut(&key) {
            s.gate_open = open;
        }
        if bad && open && !self.dropped.contains(&key) {
            self.heap.push(QEntry { rho, key, gen });
        }
    }

    /// Recomputes states for changed facets, then gate status for them and
    /// for the facets whose frontal edge they border.
    fn apply_delta(&mut self, removed: &[[VertexId; 3]], added: &[[VertexId; 3]]) {
        let mut gate_candidates: Vec<[VertexId; 3]> = Vec::new();
        for key in removed {
            self.states.remove(key);
            gate_candidates.extend(self.neighbours_gated_by(key));
        }
        for key in added {
            self.refresh_state(*key);
        }
        for key in added {
            gate_candidates.push(*key);
            gate_candidates.extend(self.neighbours_gated_by(key));
        }
        gate_candidates.sort_unstable();
        gate_candidates.dedup();
        for key in gate_candidates {
            self.refresh_gate_and_push(key);
        }
    }

    /// Facets whose frontal edge is one of `key`'s edges.
    fn neighbours_gated_by(&self, key: &[VertexId; 3]) -> Vec<[VertexId; 3]> {
        let mut out = Vec::new();
        let edges = [
            (key[0].min(key[1]), key[0].max(key[1])),
            (key[1].min(key[2]), key[1].max(key[2])),
            (key[0].min(key[2]), key[0].max(key[2])),
        ];
        for e in edges {
            for k in self.rc.facets_on_edge(e.0, e.1) {
                if k == key {
                    continue;
                }
                if let Some(s) = self.states.get(k) {
                    if s.e0 == e {
                        out.push(*k);
                    }
                }
            }
        }
        out
    }

    /// Pops the next refinable facet under the current policy. The frontal
    /// gate is suspended for one pop when it blocks every queued facet.
    fn pop(&mut self) -> Option<[VertexId; 3]> {
        while let Some(entry) = self.heap.pop() {
            match self.states.get(&entry.key) {
                Some(s)
                    if s.gen == entry.gen
                        && s.bad
                        && !self.dropped.contains(&entry.key)
                        && (s.gate_open || !self.frontal()) =>
                {
                    return Some(entry.key);
                }
                _ => continue,
            }
        }
        // Heap drained: any remaining bad facet is gate-blocked (or the
        // complex is converged).
        let mut worst: Option<(f64, [VertexId; 3])> = None;
        for (key, s) in &self.states {
            if !s.bad || self.dropped.contains(key) {
                continue;
            }
            let better = match worst {
                None => true,
                Some((rho, wkey)) => s.rho > rho || (s.rho == rho && *key < wkey),
            };
            if better {
                worst = Some((s.rho, *key));
            }
        }
        let (_, key) = worst?;
        if self.frontal() {
            self.gate_suspensions += 1;
        }
        Some(key)
    }

    fn step(&mut self) -> bool {
        let Some(key) = self.pop() else { return false };
        let rf = self.rc.surface_facets[&key].clone();
        let (eu, ev) = frontal_edge(&rf, &self.tess);
        let m0 = self.tess.point(eu).midpoint(self.tess.point(ev));
        let half_e0 = 0.5 * self.tess.point(eu).distance(self.tess.point(ev));
        let c1 = type1_point(&rf);
        let d1 = c1.distance(m0);

        let two = if self.frontal() {
            type2_point(&rf, &self.tess, self.field, self.oracle)
        } else {
            None
        };
        let (mut point, mut kind) =
            select_point(c1, d1, two.map(|t| (t.point, t.d2)), half_e0);

        let min_before = self.rc.min_edge_length().unwrap_or(f64::INFINITY);

        // A Type II candidate must not shorten the complex below the
        // worst-case single-insert factor; fall back to the Type I point
        // (which carries the guarantee) when it would, or when it collides
        // with an existing vertex.
        if kind == VertexKind::Type2 {
            let safe = match self.tess.plan_insert(point) {
                Ok(plan) => {
                    if plan.min_new_edge >= (MIN_EDGE_FACTOR - 1e-9) * min_before {
                        Some(plan)
                    } else {
                        None
                    }
                }
                Err(InsertReject::Duplicate(_)) => None,
            };
            match safe {
                Some(plan) => {
                    self.commit(plan, key, &rf, kind, two, d1, min_before);
                    return true;
                }
                None => {
                    point = c1;
                    kind = VertexKind::Type1;
                }
            }
        }

        match self.tess.plan_insert(point) {
            Ok(plan) => {
                self.commit(plan, key, &rf, kind, two, d1, min_before);
            }
            Err(InsertReject::Duplicate(dup)) => {
                if std::env::var_os("DELSURF_DEBUG_DUP").is_some() {
                    let dv = self.tess.point(dup);
                    eprintln!(
                        "DUP step={} key={:?} kind={:?} rho={:.3} eps={:.3e} h={:.3e} r={:.3e} |p-dup|={:.3e} tol={:.3e} dup_id={} nverts={}",
                        self.trace.len(), key, kind, rf.rho, rf.err_eps, rf.size_h,
                        rf.surface_ball.radius, point.distance(dv),
                        self.tess.collapse_tolerance(), dup, self.tess.vertex_count()
                    );
                }
                // Steiner point collides with an existing vertex. Retry the
                // facet once after other work; drop it for good on a repeat.
                if self.penalized.insert(key) {
                    if let Some(s) = self.states.get(&key) {
                        self.heap.push(QEntry { rho: s.rho, key, gen: s.gen });
                    }
                } else {
                    self.dropped.insert(key);
                }
            }
        }
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn commit(
        &mut self,
        plan: crate::delaunay::InsertPlan,
        key: [VertexId; 3],
        rf: &RestrictedFacet,
        kind: VertexKind,
        two: Option<TypeTwo>,
        d1: f64,
        min_before: f64,
    ) {
        let result = self.tess.commit(plan);
        let delta = self.rc.update_after_insert(&self.tess, self.oracle, &result);
        self.apply_delta(&delta.removed, &delta.added);
        // The popped facet can survive an off-centre insert untouched;
        // requeue it so it is never lost.
        if self.rc.surface_facets.contains_key(&key)
            && !delta.added.contains(&key)
        {
            self.refresh_state(key);
            self.refresh_gate_and_push(key);
        }
        let min_after = self.rc.min_edge_length().unwrap_or(f64::INFINITY);
        match kind {
            VertexKind::Type1 => self.counts.type1 += 1,
            VertexKind::Type2 => self.counts.type2 += 1,
            VertexKind::Seed => {}
        }
        self.trace.push(TraceRecord {
            step: self.trace.len(),
            kind,
            rho: rf.rho,
            r: rf.surface_ball.radius,
            target_h: two.map(|t| t.target_h).unwrap_or(f64::NAN),
            d1,
            d2: two.map(|t| t.d2).unwrap_or(f64::NAN),
            min_edge_before: min_before,
            min_edge_after: min_after,
        });
    }
}

/// Runs restricted Delaunay refinement to convergence (or the insertion
/// cap) and returns the final complexes with the audit trace.
pub fn run(
    oracle: &Arc<SurfacePolyhedron>,
    field: &SizeField,
    cfg: &RefineConfig,
) -> Result<Refined> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds = seed_sample(oracle, cfg.effective_seed_count(oracle.component_count()))?;
    let tess = Tessellation::build(&seeds)?;
    let rc = RestrictedComplex::new(&tess, oracle);

    let mut driver = Driver {
        oracle,
        field,
        cfg,
        tess,
        rc,
        states: HashMap::new(),
        heap: BinaryHeap::new(),
        gen: 0,
        penalized: HashSet::new(),
        dropped: HashSet::new(),
        trace: Vec::new(),
        counts: InsertCounts { seed: seeds.len() as u64, ..Default::default() },
        gate_suspensions: 0,
    };
    let mut keys: Vec<[VertexId; 3]> = driver.rc.surface_facets.keys().copied().collect();
    keys.sort_unstable();
    for key in &keys {
        driver.refresh_state(*key);
    }
    for key in &keys {
        driver.refresh_gate_and_push(*key);
    }

    let mut converged = true;
    while driver.trace.len() < cfg.max_inserts {
        if !driver.step() {
            break;
        }
    }
    if driver.trace.len() >= cfg.max_inserts {
        converged = false;
    }
    if !driver.dropped.is_empty() {
        converged = false;
    }

    Ok(Refined {
        converged,
        tess: driver.tess,
        rc: driver.rc,
        trace: driver.trace,
        insert_counts: driver.counts,
        gate_suspensions: driver.gate_suspensions,
        dropped_facets: driver.dropped.len(),
        wall: start.elapsed(),
    })
}

impl Refined {
    /// Extracts the surface triangulation, windings aligned with the
    /// reference surface normals, vertices compacted in id order.
    pub fn surface_mesh(&self, oracle: &SurfacePolyhedron) -> TriMesh {
        let mut keys: Vec<[VertexId; 3]> = self.rc.surface_facets.keys().copied().collect();
        keys.sort_unstable();
        let mut used: Vec<VertexId> = keys.iter().flatten().copied().collect();
        used.sort_unstable();
        used.dedup();
        let remap: HashMap<VertexId, u32> = used
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i as u32))
            .collect();
        let vertices: Vec<Point3> = used.iter().map(|&v| self.tess.point(v)).collect();
        let triangles: Vec<[u32; 3]> = keys
            .iter()
            .map(|k| {
                let [a, b, c] = k.map(|v| self.tess.point(v));
                let bc = Point3::new(
                    (a.x + b.x + c.x) / 3.0,
                    (a.y + b.y + c.y) / 3.0,
                    (a.z + b.z + c.z) / 3.0,
                );
                let n = oracle.triangle_normal(oracle.nearest_point(bc).triangle);
                let mut tri = k.map(|v| remap[&v]);
                if (b - a).cross(c - a).dot(n) < 0.0 {
                    tri.swap(1, 2);
                }
                tri
            })
            .collect();
        TriMesh::new(vertices, triangles)
    }

    /// Extracts the coarse volume tetrahedralisation: all sample points and
    /// the cells of the restricted volume complex.
    pub fn volume_mesh(&self) -> (Vec<Point3>, Vec<[VertexId; 4]>) {
        let points: Vec<Point3> = (0..self.tess.vertex_count() as VertexId)
            .map(|v| self.tess.point(v))
            .collect();
        let mut tets: Vec<[VertexId; 4]> = self
            .rc
            .volume_tets
            .iter()
            .map(|&t| self.tess.tet_vertices(t))
            .collect();
        tets.sort_unstable();
        (points, tets)
    }

    /// Fresh postcondition sweep: reclassifies every facet of the final
    /// complex and counts violations of the three constraints at the given
    /// tolerance slack. Zero on any converged run.
    pub fn constraint_violations(
        &self,
        oracle: &SurfacePolyhedron,
        field: &SizeField,
        cfg: &RefineConfig,
        slack: f64,
    ) -> usize {
        let fresh = RestrictedComplex::new(&self.tess, oracle);
        let mut violations = 0;
        for rf in fresh.surface_facets.values() {
            let h = field.eval(rf.surface_ball.centre);
            let rho_ok = rf.rho <= cfg.rho_max * (1.0 + slack);
            let eps_ok = rf.err_eps <= cfg.eps_ratio * h * (1.0 + slack);
            let size_ok = rf.size_h <= cfg.alpha * h * (1.0 + slack);
            if !(rho_ok && eps_ok && size_ok) {
                violations += 1;
            }
        }
        violations
    }
}
