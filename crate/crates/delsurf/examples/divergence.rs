// Finds the first insert after which the incremental restricted complex
// diverges from a from-scratch reclassification.
use std::sync::Arc;

use delsurf::delaunay::Tessellation;
use delsurf::oracle::SurfacePolyhedron;
use delsurf::refine::{self, Algorithm, RefineConfig};
use delsurf::restricted::RestrictedComplex;
use delsurf::sizing::SizeField;
use delsurf::synth;

fn main() {
    let s = Arc::new(SurfacePolyhedron::validate(synth::icosphere(3, 1.0)).unwrap());
    let field = SizeField::uniform(&s, 0.04, 0.2).unwrap();
    let seeds = refine::seed_sample(&s, 32).unwrap();
    let mut tess = Tessellation::build(&seeds).unwrap();
    let mut rc = RestrictedComplex::new(&tess, &s);

    // Drive exactly like the DR loop: always insert the worst facet's SDB centre.
    let cfg = RefineConfig::new(Algorithm::Dr);
    let mut last_report = std::time::Instant::now();
    for step in 0..40000 {
        if last_report.elapsed().as_secs() >= 5 {
            last_report = std::time::Instant::now();
            println!("... step {step}, facets {}, vertices {}", rc.surface_facets.len(), tess.vertex_count());
        }
        // worst bad facet
        let mut worst: Option<([u32; 3], f64)> = None;
        let mut keys: Vec<[u32; 3]> = rc.surface_facets.keys().copied().collect();
        keys.sort_unstable();
        for k in keys {
            let f = &rc.surface_facets[&k];
            if refine::bad_simplex(f, &cfg, &field) {
                if worst.map(|(_, r)| f.rho > r).unwrap_or(true) {
                    worst = Some((k, f.rho));
                }
            }
        }
        let Some((key, _)) = worst else {
            println!("converged at step {step}");
            break;
        };
        let p = rc.surface_facets[&key].surface_ball.centre;
        let result = match tess.insert(p) {
            Ok(r) => r,
            Err(e) => {
                println!("step {step}: duplicate rejection {e:?} for facet {key:?}");
                let fresh = RestrictedComplex::new(&tess, &s);
                let stale = &rc.surface_facets[&key];
                match fresh.surface_facets.get(&key) {
                    Some(ff) => println!(
                        "  incremental r={} eps={} nhits={} vs fresh r={} eps={} nhits={}",
                        stale.surface_ball.radius, stale.err_eps, stale.all_hits.len(),
                        ff.surface_ball.radius, ff.err_eps, ff.all_hits.len()
                    ),
                    None => println!("  fresh reclassification has NO such facet (incremental stale)"),
                }
                println!("  stale hit params/radii:");
                for h in &stale.all_hits {
                    let r = h.point.distance(tess.point(key[0]));
                    println!("    param={} tri={} r={}", h.param, h.triangle, r);
                }
                let anchored = stale.facet;
                println!("  handle tet={} slot={} alive={}", anchored.tet, anchored.slot, tess.is_alive(anchored.tet));
                let n = tess.tet_neighbours(anchored.tet)[anchored.slot as usize];
                println!("  cells: {:?} and {:?} (ghost={})", tess.tet_vertices(anchored.tet), tess.tet_vertices(n), tess.is_ghost_tet(n));
                match tess.voronoi_edge(anchored) {
                    Ok(delsurf::delaunay::VoronoiEdge::Segment{a,b}) => println!("  dual segment ({:?})-({:?})", a, b),
                    Ok(delsurf::delaunay::VoronoiEdge::Ray{origin,dir}) => println!("  dual ray {:?} dir {:?}", origin, dir),
                    Err(e) => println!("  dual edge error {e}"),
                }
                break;
            }
        };
        rc.update_after_insert(&tess, &s, &result);
        // Handle validity: every record's (tet, slot) must still name its key
        // on a live cell.
        for (k, f) in rc.surface_facets.iter() {
            let ok = tess.is_alive(f.facet.tet) && {
                let mut tri = tess.facet_vertices(f.facet.tet, f.facet.slot);
                tri.sort_unstable();
                tri == *k
            };
            if !ok {
                println!("step {step}: STALE HANDLE for facet {k:?} (tet {} slot {} alive={})",
                    f.facet.tet, f.facet.slot, tess.is_alive(f.facet.tet));
                let mut tri = tess.facet_vertices(f.facet.tet, f.facet.slot);
                tri.sort_unstable();
                println!("  handle names {tri:?}");
                return;
            }
        }
        if false {
            let fresh = RestrictedComplex::new(&tess, &s);
            let mut ka: Vec<_> = rc.surface_facets.keys().copied().collect();
            let mut kb: Vec<_> = fresh.surface_facets.keys().copied().collect();
            ka.sort_unstable();
            kb.sort_unstable();
            if ka != kb {
                println!("step {step}: KEY SET DIVERGENCE");
                for k in &ka { if !kb.contains(k) { println!("  incremental-only {k:?}"); } }
                for k in &kb { if !ka.contains(k) { println!("  fresh-only {k:?}"); } }
                break;
            }
            for k in &ka {
                let a = &rc.surface_facets[k];
                let b = &fresh.surface_facets[k];
                let rel = (a.surface_ball.radius - b.surface_ball.radius).abs()
                    / b.surface_ball.radius.max(1e-300);
                if rel > 1e-9 {
                    println!(
                        "step {step}: facet {k:?} r_incremental={} r_fresh={} rel={rel}",
                        a.surface_ball.radius, b.surface_ball.radius
                    );
                    return;
                }
            }
        }
    }
    println!("done");
}
