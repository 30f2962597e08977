//! Synthetic test geometries.
//!
//! Closed, consistently oriented triangle meshes used by the test suites and
//! handy for trying the remesher without external data.

use std::collections::HashMap;

use crate::geom::Point3;
use crate::io::TriMesh;

/// Icosphere: an icosahedron with `subdivisions` rounds of 1:4 loop
/// splitting, vertices projected to the sphere of the given radius.
/// Subdivision 3 gives 642 vertices and 1280 triangles.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices = Vec::new();
    for &(a, b) in &[(1.0, phi), (1.0, -phi), (-1.0, phi), (-1.0, -phi)] {
        vertices.push(Point3::new(0.0, a, b));
        vertices.push(Point3::new(a, b, 0.0));
        vertices.push(Point3::new(b, 0.0, a));
    }
    let norm = |p: Point3| {
        let n = p.to_vec().norm();
        Point3::new(p.x / n * radius, p.y / n * radius, p.z / n * radius)
    };
    for v in &mut vertices {
        *v = norm(*v);
    }
    // Faces of the icosahedron: triangles of mutually nearest vertices,
    // wound outward.
    let edge2 = {
        let mut best = f64::INFINITY;
        for i in 0..12 {
            for j in (i + 1)..12 {
                best = best.min(vertices[i].distance2(vertices[j]));
            }
        }
        best * 1.01
    };
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for i in 0..12u32 {
        for j in (i + 1)..12 {
            if vertices[i as usize].distance2(vertices[j as usize]) > edge2 {
                continue;
            }
            for k in (j + 1)..12 {
                if vertices[i as usize].distance2(vertices[k as usize]) <= edge2
                    && vertices[j as usize].distance2(vertices[k as usize]) <= edge2
                {
                    let (a, b, c) = (vertices[i as usize], vertices[j as usize], vertices[k as usize]);
                    let outward = (b - a).cross(c - a).dot(a.to_vec()) > 0.0;
                    triangles.push(if outward { [i, j, k] } else { [i, k, j] });
                }
            }
        }
    }

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut m = [0u32; 3];
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                let key = (u.min(v), u.max(v));
                m[k] = *midpoint.entry(key).or_insert_with(|| {
                    let p = norm(vertices[u as usize].midpoint(vertices[v as usize]));
                    vertices.push(p);
                    (vertices.len() - 1) as u32
                });
            }
            next.push([tri[0], m[0], m[2]]);
            next.push([tri[1], m[1], m[0]]);
            next.push([tri[2], m[2], m[1]]);
            next.push([m[0], m[1], m[2]]);
        }
        triangles = next;
    }
    TriMesh::new(vertices, triangles)
}

/// Torus with major radius `big_r`, tube radius `small_r`, sampled on an
/// `n_major x n_minor` grid.
pub fn torus(big_r: f64, small_r: f64, n_major: u32, n_minor: u32) -> TriMesh {
    let mut vertices = Vec::with_capacity((n_major * n_minor) as usize);
    for i in 0..n_major {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n_minor as f64;
            let rad = big_r + small_r * phi.cos();
            vertices.push(Point3::new(
                rad * theta.cos(),
                rad * theta.sin(),
                small_r * phi.sin(),
            ));
        }
    }
    let idx = |i: u32, j: u32| (i % n_major) * n_minor + (j % n_minor);
    let mut triangles = Vec::with_capacity((2 * n_major * n_minor) as usize);
    for i in 0..n_major {
        for j in 0..n_minor {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriMesh::new(vertices, triangles)
}

/// A cube with rounded edges: the superellipsoid `x^4 + y^4 + z^4 = 1`
/// scaled by `half_extent`, sampled by projecting icosphere directions.
pub fn rounded_cube(subdivisions: u32, half_extent: f64) -> TriMesh {
    let mut mesh = icosphere(subdivisions, 1.0);
    for v in &mut mesh.vertices {
        let d = v.to_vec();
        let q = (d.x.powi(4) + d.y.powi(4) + d.z.powi(4)).powf(-0.25) * half_extent;
        *v = Point3::new(d.x * q, d.y * q, d.z * q);
    }
    mesh
}

/// A closed axis-aligned box `[0,w] x [0,d] x [0,t]` with each face
/// subdivided on a grid of the given resolution (welded, outward).
pub fn slab(w: f64, d: f64, t: f64, nx: u32, ny: u32, nz: u32) -> TriMesh {
    let mut vertices: Vec<Point3> = Vec::new();
    let mut index: HashMap<(u64, u64, u64), u32> = HashMap::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let dims = [w, d, t];
    let res = [nx.max(1), ny.max(1), nz.max(1)];

    let mut vertex_at = |coords: [f64; 3]| -> u32 {
        let key = (coords[0].to_bits(), coords[1].to_bits(), coords[2].to_bits());
        *index.entry(key).or_insert_with(|| {
            vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            (vertices.len() - 1) as u32
        })
    };

    // For each axis, the faces at coordinate 0 and dims[axis].
    for axis in 0..3usize {
        let (ua, va) = (((axis + 1) % 3), ((axis + 2) % 3));
        for (side, flip) in [(0.0, true), (dims[axis], false)] {
            let (nu, nv) = (res[ua], res[va]);
            for i in 0..nu {
                for j in 0..nv {
                    let corner = |di: u32, dj: u32| {
                        let mut c = [0.0f64; 3];
                        c[axis] = side;
                        c[ua] = dims[ua] * (i + di) as f64 / nu as f64;
                        c[va] = dims[va] * (j + dj) as f64 / nv as f64;
                        c
                    };
                    let q = [
                        vertex_at(corner(0, 0)),
                        vertex_at(corner(1, 0)),
                        vertex_at(corner(1, 1)),
                        vertex_at(corner(0, 1)),
                    ];
                    let quads = if flip {
                        [[q[0], q[2], q[1]], [q[0], q[3], q[2]]]
                    } else {
                        [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
                    };
                    triangles.extend_from_slice(&quads);
                }
            }
        }
    }
    TriMesh::new(vertices, triangles)
}

/// Two icospheres of the given radii, separated along x by `gap` between
/// their closest points.
pub fn two_spheres(subdivisions: u32, r1: f64, r2: f64, gap: f64) -> TriMesh {
    let a = icosphere(subdivisions, r1);
    let mut b = icosphere(subdivisions, r2);
    let shift = r1 + gap + r2;
    for v in &mut b.vertices {
        v.x += shift;
    }
    let base = a.vertices.len() as u32;
    let mut mesh = a;
    mesh.vertices.extend(b.vertices);
    mesh.triangles
        .extend(b.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::SurfacePolyhedron;

    #[test]
    fn generators_produce_valid_surfaces() {
        for (mesh, comps) in [
            (icosphere(2, 1.0), 1),
            (torus(1.0, 0.4, 24, 12), 1),
            (rounded_cube(2, 1.0), 1),
            (slab(2.0, 2.0, 0.2, 8, 8, 1), 1),
            (two_spheres(1, 1.0, 0.5, 2.0), 2),
        ] {
            let s = SurfacePolyhedron::validate(mesh).unwrap();
            assert_eq!(s.component_count(), comps);
        }
    }

    #[test]
    fn icosphere_sizes() {
        let m = icosphere(3, 1.0);
        assert_eq!(m.vertices.len(), 642);
        assert_eq!(m.triangles.len(), 1280);
    }
}
