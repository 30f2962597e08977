use std::sync::Arc;

use delsurf::metrics;
use delsurf::oracle::SurfacePolyhedron;
use delsurf::refine::{self, Algorithm, RefineConfig};
use delsurf::sizing::{self, SizeField, UserSize};
use delsurf::synth;

fn main() {
    for (name, mesh, h) in [
        ("sphere", synth::icosphere(3, 1.0), 0.04),
        ("torus", synth::torus(1.0, 0.4, 48, 24), 0.0427),
        ("cube", synth::rounded_cube(3, 1.0), 0.04),
    ] {
        let s = Arc::new(SurfacePolyhedron::validate(mesh).unwrap());
        let lfs = sizing::estimate_lfs(&s).unwrap();
        let field = sizing::build_field(&s, &lfs, &UserSize::Uniform(h), 0.5, 0.2).unwrap();
        let mut results = Vec::new();
        for alg in [Algorithm::Dr, Algorithm::Fd] {
            let cfg = RefineConfig::new(alg);
            let t0 = std::time::Instant::now();
            let out = refine::run(&s, &field, &cfg).unwrap();
            let wall = t0.elapsed();
            let surf = out.surface_mesh(&s);
            let report = metrics::build_report(&surf, Some(&s), Some(&field), None);
            let viol = out.constraint_violations(&s, &field, &cfg, 1e-9);
            let manifold = out.rc.manifoldness_report();
            println!(
                "{name}/{}: conv={} elems={} meanA={:.4} minA={:.4} MAD={:.3} mean_hr={:.4} sd_hr={:.4} viol={} chi={} t={:?} t2={} gates={} drops={}",
                alg.as_str(), out.converged, report.element_count,
                report.area_length.mean, report.area_length.min,
                report.plane_angle_deg.mad,
                report.relative_length.as_ref().map(|r| r.mean).unwrap_or(0.0),
                report.relative_length.as_ref().map(|r| r.stddev).unwrap_or(0.0),
                viol, manifold.euler_characteristic, wall,
                out.insert_counts.type2, out.gate_suspensions, out.dropped_facets,
            );
            results.push((report.plane_angle_deg.mad, report.area_length.mean));
        }
        let (mad_dr, a_dr) = results[0];
        let (mad_fd, a_fd) = results[1];
        println!("  -> MAD ratio {:.2} (need >= 1.3), dA = {:+.4} (need >= 0.02)", mad_dr / mad_fd, a_fd - a_dr);
    }
}
