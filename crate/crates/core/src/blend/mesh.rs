//! Laplacian (differential-coordinate) integration of a replacement region
//! into a base mesh, using the uniform graph Laplacian.

use std::collections::BTreeSet;

use super::linalg::{solve_cg, SparseSystem};
use crate::error::{Error, Result};

/// Vertex neighbourhoods derived from a triangle list.
#[derive(Clone, Debug)]
pub struct MeshAdjacency {
    neighbors: Vec<Vec<usize>>,
}

impl MeshAdjacency {
    pub fn from_triangles(num_vertices: usize, triangles: &[[u32; 3]]) -> Self {
        let mut sets = vec![BTreeSet::new(); num_vertices];
        for t in triangles {
            for k in 0..3 {
                let (a, b) = (t[k] as usize, t[(k + 1) % 3] as usize);
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        Self {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// ROI vertices with at least one neighbour outside the ROI.
    pub fn region_boundary(&self, roi: &[usize]) -> Vec<usize> {
        let inside: BTreeSet<usize> = roi.iter().copied().collect();
        let mut ring: Vec<usize> = roi
            .iter()
            .copied()
            .filter(|&v| self.neighbors[v].iter().any(|n| !inside.contains(n)))
            .collect();
        ring.sort_unstable();
        ring.dedup();
        ring
    }

    /// Uniform Laplacian `x_v - mean(x_n)` of one coordinate.
    fn laplacian(&self, positions: &[[f64; 3]], v: usize, axis: usize) -> f64 {
        let nbrs = &self.neighbors[v];
        if nbrs.is_empty() {
            return 0.0;
        }
        let mean = nbrs.iter().map(|&n| positions[n][axis]).sum::<f64>() / nbrs.len() as f64;
        positions[v][axis] - mean
    }
}

const CG_TOLERANCE: f64 = 1e-13;

/// Minimizes `|L x - L x_rep|^2` over the ROI rows plus
/// `weight^2 * |x_a - base_a|^2` over the anchors, with non-ROI vertices held
/// at `base`. `replacement` is indexed like `base`; entries outside the ROI
/// are ignored (the base positions are used there).
pub fn laplacian_mesh_integrate(
    adjacency: &MeshAdjacency,
    base: &[[f64; 3]],
    replacement: &[[f64; 3]],
    roi: &[usize],
    anchors: &[usize],
    weight: f64,
) -> Result<Vec<[f64; 3]>> {
    let n = base.len();
    if replacement.len() != n || adjacency.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "base has {n} vertices, replacement {}, adjacency {}",
            replacement.len(),
            adjacency.len()
        )));
    }
    let mut var = vec![usize::MAX; n];
    let mut unknowns: Vec<usize> = roi.to_vec();
    unknowns.sort_unstable();
    unknowns.dedup();
    for (k, &v) in unknowns.iter().enumerate() {
        if v >= n {
            return Err(Error::Invalid(format!("ROI vertex {v} out of range")));
        }
        var[v] = k;
    }
    if let Some(&a) = anchors.iter().find(|&&a| a >= n || var[a] == usize::MAX) {
        return Err(Error::Invalid(format!("anchor {a} is not an ROI vertex")));
    }
    check_anchored_components(adjacency, &unknowns, &var, anchors)?;

    let mut target = base.to_vec();
    for &v in &unknowns {
        target[v] = replacement[v];
    }

    let m = unknowns.len();
    let mut normal = SparseSystem::new(m);
    let mut rhs = vec![[0.0f64; 3]; m];
    // Each row is (coefficients on unknowns, constant per axis); the residual
    // is sum(c_k x_k) - constant.
    let mut add_row = |coeffs: &[(usize, f64)], constant: [f64; 3]| {
        for &(i, ci) in coeffs {
            for &(j, cj) in coeffs {
                normal.add(i, j, ci * cj);
            }
            for axis in 0..3 {
                rhs[i][axis] += ci * constant[axis];
            }
        }
    };
    for &v in &unknowns {
        let nbrs = adjacency.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        let mut coeffs = vec![(var[v], 1.0)];
        let mut constant = [0.0; 3];
        for axis in 0..3 {
            constant[axis] = adjacency.laplacian(&target, v, axis);
        }
        for &u in nbrs {
            if var[u] != usize::MAX {
                coeffs.push((var[u], -inv));
            } else {
                for axis in 0..3 {
                    constant[axis] += inv * base[u][axis];
                }
            }
        }
        add_row(&coeffs, constant);
    }
    for &a in anchors {
        let b = base[a];
        add_row(&[(var[a], weight)], [weight * b[0], weight * b[1], weight * b[2]]);
    }

    let mut out = base.to_vec();
    for axis in 0..3 {
        normal.rhs = rhs.iter().map(|r| r[axis]).collect();
        let solution = solve_cg(&normal, CG_TOLERANCE, 50 * m + 200)?;
        for (k, &v) in unknowns.iter().enumerate() {
            out[v][axis] = solution[k];
        }
    }
    Ok(out)
}

fn check_anchored_components(
    adjacency: &MeshAdjacency,
    unknowns: &[usize],
    var: &[usize],
    anchors: &[usize],
) -> Result<()> {
    let mut component = vec![usize::MAX; unknowns.len()];
    let mut anchored = Vec::new();
    for start in 0..unknowns.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let id = anchored.len();
        anchored.push(false);
        component[start] = id;
        let mut stack = vec![unknowns[start]];
        while let Some(v) = stack.pop() {
            for &u in adjacency.neighbors(v) {
                let k = var[u];
                if k != usize::MAX && component[k] == usize::MAX {
                    component[k] = id;
                    stack.push(u);
                }
            }
        }
    }
    for &a in anchors {
        anchored[component[var[a]]] = true;
    }
    if let Some(c) = anchored.iter().position(|&a| !a) {
        let v = unknowns[component.iter().position(|&k| k == c).unwrap()];
        return Err(Error::UnderConstrained(format!(
            "ROI component containing vertex {v} has no anchor"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blend::linalg::tests::dense_solve;

    /// `k x k` planar grid in the z = 0 plane.
    fn grid(k: usize) -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
        let mut verts = Vec::new();
        for y in 0..k {
            for x in 0..k {
                verts.push([x as f64, y as f64, 0.0]);
            }
        }
        let mut tris = Vec::new();
        for y in 0..k - 1 {
            for x in 0..k - 1 {
                let v = (y * k + x) as u32;
                let k = k as u32;
                tris.push([v, v + 1, v + k]);
                tris.push([v + 1, v + k + 1, v + k]);
            }
        }
        (verts, tris)
    }

    fn inner_roi(k: usize, margin: usize) -> Vec<usize> {
        (0..k * k)
            .filter(|v| {
                let (x, y) = (v % k, v / k);
                x >= margin && y >= margin && x + margin < k && y + margin < k
            })
            .collect()
    }

    #[test]
    fn replacement_equal_to_base_is_fixed_point() {
        let (verts, tris) = grid(6);
        let adj = MeshAdjacency::from_triangles(verts.len(), &tris);
        let roi = inner_roi(6, 1);
        let ring = adj.region_boundary(&roi);
        let out = laplacian_mesh_integrate(&adj, &verts, &verts, &roi, &ring, 1.0).unwrap();
        for (a, b) in out.iter().zip(&verts) {
            for axis in 0..3 {
                assert!((a[axis] - b[axis]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn heavy_anchors_hold_base() {
        let (verts, tris) = grid(7);
        let adj = MeshAdjacency::from_triangles(verts.len(), &tris);
        let roi = inner_roi(7, 1);
        let ring = adj.region_boundary(&roi);
        let moved: Vec<[f64; 3]> = verts.iter().map(|p| [p[0] + 0.3, p[1], p[2] + 1.0]).collect();
        let out = laplacian_mesh_integrate(&adj, &verts, &moved, &roi, &ring, 1e6).unwrap();
        for &a in &ring {
            for axis in 0..3 {
                assert!((out[a][axis] - verts[a][axis]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn translated_patch_matches_dense_least_squares() {
        let k = 9;
        let (verts, tris) = grid(k);
        let adj = MeshAdjacency::from_triangles(verts.len(), &tris);
        let roi = inner_roi(k, 1);
        let ring = adj.region_boundary(&roi);
        let moved: Vec<[f64; 3]> = verts.iter().map(|p| [p[0], p[1], p[2] + 1.0]).collect();
        let w = 10.0;
        let out = laplacian_mesh_integrate(&adj, &verts, &moved, &roi, &ring, w).unwrap();

        // Dense oracle for the z axis: explicit rectangular system, normal equations.
        let idx = |v: usize| roi.iter().position(|&r| r == v);
        let mut target = verts.clone();
        for &v in &roi {
            target[v] = moved[v];
        }
        let m = roi.len();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for &v in &roi {
            let nb = adj.neighbors(v);
            let inv = 1.0 / nb.len() as f64;
            let mut row = vec![0.0; m];
            row[idx(v).unwrap()] = 1.0;
            let mut c = target[v][2] - nb.iter().map(|&u| target[u][2]).sum::<f64>() * inv;
            for &u in nb {
                match idx(u) {
                    Some(j) => row[j] -= inv,
                    None => c += inv * verts[u][2],
                }
            }
            rows.push((row, c));
        }
        for &a in &ring {
            let mut row = vec![0.0; m];
            row[idx(a).unwrap()] = w;
            rows.push((row, w * verts[a][2]));
        }
        let mut ata = vec![vec![0.0; m]; m];
        let mut atb = vec![0.0; m];
        for (row, c) in &rows {
            for i in 0..m {
                atb[i] += row[i] * c;
                for j in 0..m {
                    ata[i][j] += row[i] * row[j];
                }
            }
        }
        let oracle = dense_solve(ata, atb);
        for (k, &v) in roi.iter().enumerate() {
            assert!((out[v][2] - oracle[k]).abs() < 1e-6, "{} vs {}", out[v][2], oracle[k]);
        }
        // Outside the ROI the base is kept exactly.
        for v in 0..verts.len() {
            if !roi.contains(&v) {
                assert_eq!(out[v], verts[v]);
            }
        }
        // Displacement varies monotonically from the patch centre to the ring.
        let c = k / 2;
        let profile: Vec<f64> = (1..=c).map(|x| out[c * k + x][2]).collect();
        let increasing = profile.windows(2).all(|p| p[1] >= p[0] - 1e-12);
        let decreasing = profile.windows(2).all(|p| p[1] <= p[0] + 1e-12);
        assert!(increasing || decreasing, "{profile:?}");
    }

    #[test]
    fn unanchored_component_is_rejected() {
        let (verts, tris) = grid(6);
        let adj = MeshAdjacency::from_triangles(verts.len(), &tris);
        // Two separate ROI islands; only the first has an anchor.
        let roi = vec![7, 8, 27, 28];
        let err = laplacian_mesh_integrate(&adj, &verts, &verts, &roi, &[7], 1.0).unwrap_err();
        assert!(matches!(err, Error::UnderConstrained(_)));
    }
}
