//! Wavefront-OBJ subset and the binary shape-basis format.

use std::fmt::Write as _;
use std::path::Path;

use super::model::ShapeModel;
use crate::error::{Error, Result};
use crate::formats::{read_file, write_file, Reader, Writer};

const VSBM_VERSION: u32 = 1;

/// Mesh as read from OBJ: positions, per-vertex uv and triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjMesh {
    pub positions: Vec<[f64; 3]>,
    pub uv: Vec<[f64; 2]>,
    pub triangles: Vec<[u32; 3]>,
}

pub fn write_obj(positions: &[[f64; 3]], uv: &[[f64; 2]], triangles: &[[u32; 3]]) -> String {
    let mut out = String::new();
    for p in positions {
        writeln!(out, "v {} {} {}", p[0], p[1], p[2]).unwrap();
    }
    for t in uv {
        writeln!(out, "vt {} {}", t[0], t[1]).unwrap();
    }
    for f in triangles {
        let [a, b, c] = f.map(|i| i + 1);
        writeln!(out, "f {a}/{a} {b}/{b} {c}/{c}").unwrap();
    }
    out
}

/// Parses `v`, `vt` and triangular `f a/b` records. Each vertex must use a
/// single texture coordinate throughout the file. Other records are ignored.
pub fn parse_obj(text: &str) -> Result<ObjMesh> {
    let mut positions = Vec::new();
    let mut texcoords = Vec::new();
    let mut faces = Vec::new();
    let bad = |line: usize, what: &str| Error::Invalid(format!("OBJ line {}: {what}", line + 1));
    for (ln, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        let nums = |tok: std::str::SplitWhitespace, n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = tok
                .take(n)
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(ln, "malformed number"))?;
            if v.len() != n {
                return Err(bad(ln, "too few coordinates"));
            }
            Ok(v)
        };
        match tok.next() {
            Some("v") => {
                let v = nums(tok, 3)?;
                positions.push([v[0], v[1], v[2]]);
            }
            Some("vt") => {
                let v = nums(tok, 2)?;
                texcoords.push([v[0], v[1]]);
            }
            Some("f") => {
                let corners: Vec<&str> = tok.collect();
                if corners.len() != 3 {
                    return Err(bad(ln, "only triangles are supported"));
                }
                let mut face = [(0usize, 0usize); 3];
                for (k, c) in corners.iter().enumerate() {
                    let mut parts = c.split('/');
                    let idx = |s: Option<&str>| -> Result<usize> {
                        s.and_then(|s| s.parse::<usize>().ok())
                            .filter(|&i| i >= 1)
                            .map(|i| i - 1)
                            .ok_or_else(|| bad(ln, "face corner must be a/b with 1-based indices"))
                    };
                    face[k] = (idx(parts.next())?, idx(parts.next())?);
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    let n = positions.len();
    let mut uv: Vec<Option<usize>> = vec![None; n];
    let mut triangles = Vec::with_capacity(faces.len());
    for face in &faces {
        let mut tri = [0u32; 3];
        for (k, &(v, t)) in face.iter().enumerate() {
            if v >= n || t >= texcoords.len() {
                return Err(Error::Invalid(format!("OBJ face references missing vertex {} / uv {}", v + 1, t + 1)));
            }
            match uv[v] {
                Some(prev) if texcoords[prev] != texcoords[t] => {
                    return Err(Error::Invalid(format!("OBJ vertex {} has more than one uv", v + 1)));
                }
                _ => uv[v] = Some(t),
            }
            tri[k] = v as u32;
        }
        triangles.push(tri);
    }
    let uv = uv
        .into_iter()
        .enumerate()
        .map(|(v, t)| match t {
            Some(t) => Ok(texcoords[t]),
            // Loose vertices fall back to a same-index vt when present.
            None => texcoords
                .get(v)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("OBJ vertex {} has no uv", v + 1))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObjMesh {
        positions,
        uv,
        triangles,
    })
}

pub fn encode_basis(model: &ShapeModel) -> Vec<u8> {
    let mut w = Writer::new(b"VSBM", VSBM_VERSION);
    w.u32(model.num_vertices() as u32);
    w.u32(model.num_basis() as u32);
    w.f32_array(model.mean());
    w.f32_array(model.basis());
    w.into_bytes()
}

/// Mean shape and column-major basis from a VSBM buffer.
pub fn decode_basis(bytes: &[u8]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let mut r = Reader::new(bytes, "VSBM");
    r.magic(b"VSBM")?;
    r.version(VSBM_VERSION)?;
    let n = r.u32("vertex count")? as usize;
    let k = r.u32("basis count")? as usize;
    let mean = r.f32_array(3 * n, "mean shape")?;
    let basis = r.f32_array(3 * n * k, "basis")?;
    r.finish()?;
    Ok((mean, basis, k))
}

/// Loads a model from an OBJ (connectivity and uv) and a VSBM (mean and
/// basis). The VSBM mean is authoritative for positions.
pub fn load_model(obj: &Path, basis: &Path) -> Result<ShapeModel> {
    let text = std::fs::read_to_string(obj).map_err(|e| Error::io(obj, e))?;
    let mesh = parse_obj(&text)?;
    let (mean, b, k) = decode_basis(&read_file(basis)?)?;
    if mean.len() != 3 * mesh.positions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} vertices but {} describes {}",
            obj.display(),
            mesh.positions.len(),
            basis.display(),
            mean.len() / 3
        )));
    }
    ShapeModel::new(mean, b, k, mesh.triangles, mesh.uv)
}

pub fn save_model(model: &ShapeModel, obj: &Path, basis: &Path) -> Result<()> {
    let positions: Vec<[f64; 3]> = model.mean().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    write_file(obj, write_obj(&positions, model.uv(), model.triangles()).as_bytes())?;
    write_file(basis, &encode_basis(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn obj_round_trip() {
        let pos = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.5], [0.0, 1.0, -0.25], [1.0, 1.0, 0.0]];
        let uv = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let tris = vec![[0, 1, 2], [1, 3, 2]];
        let mesh = parse_obj(&write_obj(&pos, &uv, &tris)).unwrap();
        assert_eq!(mesh, ObjMesh { positions: pos, uv, triangles: tris });
    }

    #[test]
    fn obj_rejects_quads_and_zero_index() {
        assert!(parse_obj("v 0 0 0\nvt 0 0\nf 1/1 1/1 1/1 1/1\n").is_err());
        assert!(parse_obj("v 0 0 0\nvt 0 0\nf 0/1 1/1 1/1\n").is_err());
    }

    #[test]
    fn basis_round_trip_is_byte_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = crate::face::model::tests::random_model(&mut rng, 7, 15);
        let bytes = encode_basis(&model);
        let (mean, basis, k) = decode_basis(&bytes).unwrap();
        let back = ShapeModel::new(mean, basis, k, model.triangles().to_vec(), model.uv().to_vec()).unwrap();
        assert_eq!(encode_basis(&back), bytes);
    }

    #[test]
    fn truncated_basis_reports_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = crate::face::model::tests::random_model(&mut rng, 4, 2);
        let bytes = encode_basis(&model);
        let err = decode_basis(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { offset, .. } if offset == 16 + 4 * 12));
    }
}
