//! Mesh quality measurement and report assembly.
//!
//! Scalar metrics follow the definitions used throughout the comparison
//! harness: the area-length ratio `a(f) = (4 sqrt(3) / 3) A_f / |e_rms|^2`
//! (1 for equilateral, 0 degenerate, negative for inverted), interior plane
//! angles, the radius-edge ratio, per-edge relative length
//! `h_r = |e| / h(midpoint)`, and the mean absolute deviation of the pooled
//! plane-angle distribution. Histogram binning is fixed so that reports
//! diff cleanly across runs.

use serde::Serialize;

use crate::geom::{self, Point3, Vec3};
use crate::io::TriMesh;
use crate::oracle::SurfacePolyhedron;
use crate::sizing::SizeField;

pub const AREA_LENGTH_BINS: usize = 50;
pub const ANGLE_BINS: usize = 60;
pub const RELATIVE_LENGTH_BINS: usize = 50;

/// Area-length shape quality of a triangle, signed against an optional
/// reference normal (positive when the winding agrees with it).
pub fn area_length(a: Point3, b: Point3, c: Point3, reference: Option<Vec3>) -> f64 {
    let cross = (b - a).cross(c - a);
    let area = 0.5 * cross.norm();
    let e_rms2 = ((b - a).norm2() + (c - b).norm2() + (a - c).norm2()) / 3.0;
    if e_rms2 == 0.0 {
        return 0.0;
    }
    let sign = match reference {
        Some(n) if cross.dot(n) < 0.0 => -1.0,
        _ => 1.0,
    };
    sign * (4.0 * 3f64.sqrt() / 3.0) * area / e_rms2
}

/// Interior plane angles in degrees, summing to 180; degenerate triangles
/// report `{0, 0, 180}`.
pub fn plane_angles(a: Point3, b: Point3, c: Point3) -> [f64; 3] {
    let angle_at = |v: Point3, p: Point3, q: Point3| -> Option<f64> {
        let u = (p - v).normalized()?;
        let w = (q - v).normalized()?;
        Some(u.dot(w).clamp(-1.0, 1.0).acos().to_degrees())
    };
    match (angle_at(a, b, c), angle_at(b, c, a), angle_at(c, a, b)) {
        (Some(x), Some(y), Some(z)) if x + y + z > 1.0 => [x, y, z],
        _ => [0.0, 0.0, 180.0],
    }
}

/// Mean absolute deviation of a pooled sample.
pub fn mean_absolute_deviation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).abs()).sum::<f64>() / values.len() as f64
}

/// Relative length of every unique edge: `|e| / h(midpoint)`.
pub fn relative_lengths(mesh: &TriMesh, field: &SizeField) -> Vec<f64> {
    unique_edges(mesh)
        .into_iter()
        .map(|(u, v)| {
            let (p, q) = (mesh.vertices[u as usize], mesh.vertices[v as usize]);
            p.distance(q) / field.eval(p.midpoint(q))
        })
        .collect()
}

/// Unsigned angle (degrees, in `[0, 90]`) between each facet normal and the
/// reference surface normal at the facet barycentre.
pub fn normal_deviation(mesh: &TriMesh, oracle: &SurfacePolyhedron) -> Vec<f64> {
    mesh.triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|v| mesh.vertices[v as usize]);
            let n = match (b - a).cross(c - a).normalized() {
                Some(n) => n,
                None => return 90.0,
            };
            let bc = Point3::new(
                (a.x + b.x + c.x) / 3.0,
                (a.y + b.y + c.y) / 3.0,
                (a.z + b.z + c.z) / 3.0,
            );
            let hit = oracle.nearest_point(bc);
            let m = oracle.triangle_normal(hit.triangle);
            n.dot(m).abs().clamp(0.0, 1.0).acos().to_degrees()
        })
        .collect()
}

pub fn unique_edges(mesh: &TriMesh) -> Vec<(u32, u32)> {
    let mut edges: Vec<(u32, u32)> = mesh
        .triangles
        .iter()
        .flat_map(|t| {
            [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
                .map(|(u, v)| (u.min(v), u.max(v)))
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Fixed-bin histogram; out-of-range samples clamp into the edge bins so
/// total mass always equals the sample count.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(lo: f64, hi: f64, bins: usize, values: &[f64]) -> Histogram {
        let mut counts = vec![0u64; bins];
        for &v in values {
            let t = ((v - lo) / (hi - lo) * bins as f64).floor();
            let idx = (t.max(0.0) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Histogram { lo, hi, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ScalarSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

fn summarize(values: &[f64]) -> ScalarSummary {
    if values.is_empty() {
        return ScalarSummary { min: 0.0, max: 0.0, mean: 0.0 };
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    ScalarSummary { min, max, mean: sum / values.len() as f64 }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AreaLengthSection {
    pub min: f64,
    pub mean: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AngleSection {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub mad: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RelativeLengthSection {
    pub mean: f64,
    pub stddev: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct NormalDeviationSection {
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq)]
pub struct InsertCounts {
    pub seed: u64,
    pub type1: u64,
    pub type2: u64,
}

/// The serialisable per-mesh quality report (schema v1; field order is the
/// stable key order).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct QualityReport {
    pub schema: &'static str,
    pub element_count: usize,
    pub vertex_count: usize,
    pub edge_count: usize,
    pub area_length: AreaLengthSection,
    pub plane_angle_deg: AngleSection,
    pub radius_edge: ScalarSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_length: Option<RelativeLengthSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_deviation_deg: Option<NormalDeviationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inserts: Option<InsertCounts>,
    /// Timings live in the run manifest; a report embeds one only on
    /// request since byte-stable output is the default contract.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// Assembles the quality report for a mesh. `oracle` enables the normal-
/// deviation section (and signs `a(f)` against the reference surface);
/// `field` enables the relative-length section.
pub fn build_report(
    mesh: &TriMesh,
    oracle: Option<&SurfacePolyhedron>,
    field: Option<&SizeField>,
    inserts: Option<InsertCounts>,
) -> QualityReport {
    let mut a_values = Vec::with_capacity(mesh.triangles.len());
    let mut angles = Vec::with_capacity(mesh.triangles.len() * 3);
    let mut rho_values = Vec::with_capacity(mesh.triangles.len());
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|v| mesh.vertices[v as usize]);
        let reference = oracle.map(|o| {
            let bc = Point3::new(
                (a.x + b.x + c.x) / 3.0,
                (a.y + b.y + c.y) / 3.0,
                (a.z + b.z + c.z) / 3.0,
            );
            o.triangle_normal(o.nearest_point(bc).triangle)
        });
        a_values.push(area_length(a, b, c, reference));
        angles.extend_from_slice(&plane_angles(a, b, c));
        rho_values.push(geom::radius_edge(a, b, c));
    }

    let edges = unique_edges(mesh);
    let relative_length = field.map(|f| {
        let hr = relative_lengths(mesh, f);
        let mean = hr.iter().sum::<f64>() / hr.len().max(1) as f64;
        let var = hr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hr.len().max(1) as f64;
        RelativeLengthSection {
            mean,
            stddev: var.sqrt(),
            histogram: Histogram::build(0.0, 2.0, RELATIVE_LENGTH_BINS, &hr),
        }
    });
    let normal_deviation_deg = oracle.map(|o| {
        let dev = normal_deviation(mesh, o);
        let s = summarize(&dev);
        NormalDeviationSection { mean: s.mean, max: s.max }
    });

    let a_summary = summarize(&a_values);
    let angle_summary = summarize(&angles);
    QualityReport {
        schema: "delsurf-quality-report/v1",
        element_count: mesh.triangles.len(),
        vertex_count: mesh.vertices.len(),
        edge_count: edges.len(),
        area_length: AreaLengthSection {
            min: a_summary.min,
            mean: a_summary.mean,
            histogram: Histogram::build(0.0, 1.0, AREA_LENGTH_BINS, &a_values),
        },
        plane_angle_deg: AngleSection {
            min: angle_summary.min,
            max: angle_summary.max,
            mean: angle_summary.mean,
            mad: mean_absolute_deviation(&angles),
            histogram: Histogram::build(0.0, 180.0, ANGLE_BINS, &angles),
        },
        radius_edge: summarize(&rho_values),
        relative_length,
        normal_deviation_deg,
        inserts,
        wall_time_s: None,
    }
}

/// Per-facet raw metric rows as CSV (header + one row per facet).
pub fn facet_csv(mesh: &TriMesh, oracle: Option<&SurfacePolyhedron>) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("facet,v0,v1,v2,area_length,theta_min,theta_max,rho,normal_dev_deg\n");
    let devs = oracle.map(|o| normal_deviation(mesh, o));
    for (i, t) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = t.map(|v| mesh.vertices[v as usize]);
        let angles = plane_angles(a, b, c);
        let theta_min = angles.iter().cloned().fold(f64::INFINITY, f64::min);
        let theta_max = angles.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dev = devs.as_ref().map(|d| d[i]).unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            t[0],
            t[1],
            t[2],
            area_length(a, b, c, None),
            theta_min,
            theta_max,
            geom::radius_edge(a, b, c),
            dev
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    #[test]
    fn area_length_reference_values() {
        // Equilateral, side 1: exactly 1.
        let a = area_length(
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(0.5, 3f64.sqrt() / 2.0, 0.0),
            None,
        );
        assert!((a - 1.0).abs() < 1e-12, "{a}");
        // Right isosceles, legs 1: sqrt(3)/2.
        let a = area_length(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(0.0, 1.0, 0.0), None);
        assert!((a - 3f64.sqrt() / 2.0).abs() < 1e-12, "{a}");
        // Needle.
        let a = area_length(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(0.5, 1e-4, 0.0), None);
        assert!(a < 0.01, "{a}");
        // Inverted against a reference normal.
        let n = Vec3::new(0.0, 0.0, 1.0);
        let a = area_length(pt(0.0, 0.0, 0.0), pt(0.0, 1.0, 0.0), pt(1.0, 0.0, 0.0), Some(n));
        assert!(a < 0.0);
        // Zero-length edge.
        let a = area_length(pt(0.0, 0.0, 0.0), pt(0.0, 0.0, 0.0), pt(0.0, 0.0, 0.0), None);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn plane_angle_reference_values() {
        let angles = plane_angles(
            pt(0.0, 0.0, 0.0),
            pt(1.0, 0.0, 0.0),
            pt(0.5, 3f64.sqrt() / 2.0, 0.0),
        );
        for a in angles {
            assert!((a - 60.0).abs() < 1e-9);
        }
        let angles = plane_angles(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(0.0, 1.0, 0.0));
        assert!(angles.iter().any(|a| (a - 90.0).abs() < 1e-9));
        // Degenerate convention: two zeros and a straight angle.
        let mut angles = plane_angles(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(2.0, 0.0, 0.0));
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(angles, [0.0, 0.0, 180.0]);
        // Fully coincident points fall back to the same convention.
        let mut angles = plane_angles(pt(0.0, 0.0, 0.0), pt(0.0, 0.0, 0.0), pt(0.0, 0.0, 0.0));
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(angles, [0.0, 0.0, 180.0]);
    }

    proptest! {
        #[test]
        fn plane_angles_sum_to_180(
            coords in proptest::collection::vec(-5.0f64..5.0, 9)
        ) {
            let a = pt(coords[0], coords[1], coords[2]);
            let b = pt(coords[3], coords[4], coords[5]);
            let c = pt(coords[6], coords[7], coords[8]);
            prop_assume!((b - a).cross(c - a).norm() > 1e-9);
            let sum: f64 = plane_angles(a, b, c).iter().sum();
            prop_assert!((sum - 180.0).abs() < 1e-9, "sum {sum}");
        }
    }

    #[test]
    fn mad_hand_case_and_invariance() {
        // One triangle with angles {30, 60, 90}: mean 60, MAD 20.
        let mad = mean_absolute_deviation(&[30.0, 60.0, 90.0]);
        assert!((mad - 20.0).abs() < 1e-12);
        // Translation invariance.
        let shifted = mean_absolute_deviation(&[40.0, 70.0, 100.0]);
        assert!((mad - shifted).abs() < 1e-12);
        // Zero iff all equal.
        assert_eq!(mean_absolute_deviation(&[60.0; 7]), 0.0);
    }

    #[test]
    fn relative_length_uniform_field() {
        use std::sync::Arc;
        let host = Arc::new(
            crate::oracle::SurfacePolyhedron::validate(crate::synth::icosphere(2, 1.0)).unwrap(),
        );
        let field = SizeField::uniform(&host, 0.25, 0.2).unwrap();
        // A flat strip of two triangles with edge lengths around 0.25.
        let mesh = TriMesh::new(
            vec![
                pt(1.0, 0.0, 0.0),
                pt(1.0, 0.25, 0.0),
                pt(1.0, 0.0, 0.25),
                pt(1.0, 0.25, 0.25),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        );
        let hr = relative_lengths(&mesh, &field);
        assert_eq!(hr.len(), 5);
        for &r in &hr {
            assert!(r >= 1.0 - 1e-9 && r <= 2f64.sqrt() + 1e-9);
        }
        // An edge of exactly the target length scores 1.
        assert!(hr.iter().any(|&r| (r - 1.0).abs() < 1e-9));
    }

    #[test]
    fn histogram_mass_reconciles_and_clamps() {
        let h = Histogram::build(0.0, 1.0, 10, &[-0.5, 0.05, 0.5, 0.999, 2.5]);
        assert_eq!(h.total(), 5);
        assert_eq!(h.counts[0], 2); // -0.5 clamps down, 0.05 lands here
        assert_eq!(h.counts[9], 2); // 0.999 lands, 2.5 clamps up
    }

    #[test]
    fn report_sections_and_counts() {
        let mesh = crate::synth::icosphere(1, 1.0);
        let report = build_report(&mesh, None, None, None);
        assert_eq!(report.element_count, 80);
        assert_eq!(report.vertex_count, 42);
        assert_eq!(report.edge_count, 120);
        assert_eq!(report.area_length.histogram.total() as usize, report.element_count);
        assert_eq!(report.plane_angle_deg.histogram.total() as usize, 3 * report.element_count);
        assert!(report.area_length.min <= report.area_length.mean);
        assert!(report.area_length.mean <= 1.0);
        assert!(report.relative_length.is_none());
        assert!(report.normal_deviation_deg.is_none());
        // Stable key order in serialisation.
        let json = serde_json::to_string_pretty(&report).unwrap();
        let schema_pos = json.find("\"schema\"").unwrap();
        let count_pos = json.find("\"element_count\"").unwrap();
        assert!(schema_pos < count_pos);
        assert!(!json.contains("wall_time_s"));
    }

    #[test]
    fn normal_deviation_flat_and_range() {
        use std::sync::Arc;
        let host = Arc::new(
            crate::oracle::SurfacePolyhedron::validate(crate::synth::slab(2.0, 2.0, 0.5, 4, 4, 1))
                .unwrap(),
        );
        // A triangle lying in the slab's top face: deviation 0.
        let mesh = TriMesh::new(
            vec![pt(0.9, 0.9, 0.5), pt(1.2, 0.9, 0.5), pt(0.9, 1.2, 0.5)],
            vec![[0, 1, 2]],
        );
        let dev = normal_deviation(&mesh, &host);
        assert!(dev[0] < 1e-9, "{}", dev[0]);
        // Range contract on arbitrary meshes.
        let mesh = crate::synth::icosphere(1, 1.0);
        for d in normal_deviation(&mesh, &host) {
            assert!((0.0..=90.0).contains(&d));
        }
    }
}
