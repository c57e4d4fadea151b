use std::io::{BufRead, Read, Write};

use super::{level_stats, IcoMesh, Vec3, MAX_LEVEL};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"UGSM";
const VERSION: u16 = 1;

/// Writes `v x y z` / `f i j k` lines (1-based indices).
pub fn write_obj<W: Write>(mesh: &IcoMesh, mut w: W) -> Result<()> {
    writeln!(w, "# icosphere level {}", mesh.level())?;
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for f in mesh.faces() {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Reads an OBJ written by [`write_obj`]. The level is inferred from the face count.
pub fn read_obj<R: BufRead>(r: R) -> Result<IcoMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        let bad = || Error::Format(format!("obj line {}: {line:?}", lineno + 1));
        match it.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for x in &mut p {
                    *x = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut t = [0u32; 3];
                for x in &mut t {
                    // tolerate `i/t/n` forms
                    let idx: u32 = it
                        .next()
                        .and_then(|s| s.split('/').next())
                        .and_then(|s| s.parse().ok())
                        .filter(|&i| i >= 1)
                        .ok_or_else(bad)?;
                    *x = idx - 1;
                }
                faces.push(t);
            }
            _ => {}
        }
    }
    let level = infer_level(faces.len())?;
    check_counts(level, vertices.len(), &faces)?;
    Ok(IcoMesh::from_parts(level, vertices, faces))
}

/// Native binary cache: magic, version, level, then LE f64 vertices and u32 faces.
pub fn write_bin<W: Write>(mesh: &IcoMesh, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(mesh.level() as u16).to_le_bytes())?;
    for v in mesh.vertices() {
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    for f in mesh.faces() {
        for i in f {
            w.write_all(&i.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_bin<R: Read>(mut r: R) -> Result<IcoMesh> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("truncated mesh header".into()))?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("bad mesh magic".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported mesh version {version}")));
    }
    let level = u16::from_le_bytes([head[6], head[7]]) as u32;
    if level > MAX_LEVEL {
        return Err(Error::LevelOutOfRange {
            level,
            max: MAX_LEVEL,
        });
    }
    let stats = level_stats(level);
    let mut buf = vec![0u8; stats.n_v * 24 + stats.n_f * 12];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated mesh body".into()))?;
    let (vb, fb) = buf.split_at(stats.n_v * 24);
    let f64_at = |b: &[u8], i: usize| f64::from_le_bytes(b[8 * i..8 * i + 8].try_into().unwrap());
    let u32_at = |b: &[u8], i: usize| u32::from_le_bytes(b[4 * i..4 * i + 4].try_into().unwrap());
    let vertices: Vec<Vec3> = (0..stats.n_v)
        .map(|i| [f64_at(vb, 3 * i), f64_at(vb, 3 * i + 1), f64_at(vb, 3 * i + 2)])
        .collect();
    let faces: Vec<[u32; 3]> = (0..stats.n_f)
        .map(|i| [u32_at(fb, 3 * i), u32_at(fb, 3 * i + 1), u32_at(fb, 3 * i + 2)])
        .collect();
    check_counts(level, vertices.len(), &faces)?;
    Ok(IcoMesh::from_parts(level, vertices, faces))
}

fn infer_level(n_faces: usize) -> Result<u32> {
    (0..=MAX_LEVEL)
        .find(|&l| level_stats(l).n_f == n_faces)
        .ok_or_else(|| Error::Format(format!("{n_faces} faces is not an icosphere face count")))
}

fn check_counts(level: u32, n_v: usize, faces: &[[u32; 3]]) -> Result<()> {
    let stats = level_stats(level);
    if n_v != stats.n_v || faces.len() != stats.n_f {
        return Err(Error::Format(format!(
            "level {level} expects {} vertices and {} faces, found {n_v} and {}",
            stats.n_v,
            stats.n_f,
            faces.len()
        )));
    }
    if let Some(&i) = faces.iter().flatten().find(|&&i| i as usize >= n_v) {
        return Err(Error::Format(format!("face index {i} out of range")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_at_level;

    #[test]
    fn obj_round_trip_is_exact() {
        let m = mesh_at_level(2).unwrap();
        let mut buf = Vec::new();
        write_obj(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 162);
        assert_eq!(read_obj(&buf[..]).unwrap(), m);
    }

    #[test]
    fn bin_round_trip_and_errors() {
        let m = mesh_at_level(3).unwrap();
        let mut buf = Vec::new();
        write_bin(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 642 * 24 + 1280 * 12);
        assert_eq!(read_bin(&buf[..]).unwrap(), m);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_bin(&bad[..]), Err(Error::Format(_))));
        assert!(matches!(read_bin(&buf[..100]), Err(Error::Format(_))));
    }
}
