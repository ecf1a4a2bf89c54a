//! Binary little-endian splat PLY reader and writer.
//!
//! Reads the common 3DGS vertex layout (x, y, z, opacity, scale_0..2,
//! rot_0..3, plus tolerated extras like normals and SH coefficients) and
//! auto-detects logit-encoded opacity and log-encoded scales. The writer
//! always emits linear opacity and linear scales.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::scene::{Gaussian3D, GaussianScene};

const REQUIRED: [&str; 11] = [
    "x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

#[derive(Debug, Clone, Copy, PartialEq)]
enum PropType {
    F32,
    F64,
}

impl PropType {
    fn size(self) -> usize {
        match self {
            PropType::F32 => 4,
            PropType::F64 => 8,
        }
    }
}

struct Header {
    vertex_count: usize,
    properties: Vec<(String, PropType)>,
    body_offset: u64,
}

fn parse_header(reader: &mut impl BufRead) -> Result<Header> {
    let mut offset: u64 = 0;
    let mut line_buf = String::new();
    let mut read_line = |reader: &mut dyn BufRead, buf: &mut String| -> Result<u64> {
        buf.clear();
        let start = offset;
        let n = reader.read_line(buf).map_err(|e| Error::Parse {
            offset,
            message: e.to_string(),
        })?;
        if n == 0 {
            return Err(Error::Parse {
                offset,
                message: "unexpected end of header".into(),
            });
        }
        offset += n as u64;
        Ok(start)
    };

    let at = read_line(reader, &mut line_buf)?;
    if line_buf.trim_end() != "ply" {
        return Err(Error::Parse {
            offset: at,
            message: "missing `ply` magic".into(),
        });
    }
    let at = read_line(reader, &mut line_buf)?;
    if line_buf.trim_end() != "format binary_little_endian 1.0" {
        return Err(Error::Parse {
            offset: at,
            message: format!("unsupported format `{}`", line_buf.trim_end()),
        });
    }

    let mut vertex_count: Option<usize> = None;
    let mut properties = Vec::new();
    loop {
        let at = read_line(reader, &mut line_buf)?;
        let line = line_buf.trim_end();
        if line == "end_header" {
            break;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("comment") => continue,
            Some("element") => {
                let name = parts.next().unwrap_or("");
                if name != "vertex" {
                    return Err(Error::Parse {
                        offset: at,
                        message: format!("unsupported element `{name}`"),
                    });
                }
                if vertex_count.is_some() {
                    return Err(Error::Parse {
                        offset: at,
                        message: "duplicate vertex element".into(),
                    });
                }
                let count = parts.next().and_then(|c| c.parse::<usize>().ok()).ok_or(
                    Error::Parse {
                        offset: at,
                        message: "bad vertex count".into(),
                    },
                )?;
                vertex_count = Some(count);
            }
            Some("property") => {
                if vertex_count.is_none() {
                    return Err(Error::Parse {
                        offset: at,
                        message: "property before element".into(),
                    });
                }
                let ty = parts.next().unwrap_or("");
                let name = parts.next().unwrap_or("").to_string();
                let ty = match ty {
                    "float" | "float32" => PropType::F32,
                    "double" | "float64" => PropType::F64,
                    other => {
                        return Err(Error::Parse {
                            offset: at,
                            message: format!("unsupported property type `{other}` for `{name}`"),
                        })
                    }
                };
                properties.push((name, ty));
            }
            _ => {
                return Err(Error::Parse {
                    offset: at,
                    message: format!("unrecognized header line `{line}`"),
                })
            }
        }
    }

    Ok(Header {
        vertex_count: vertex_count.ok_or(Error::Parse {
            offset,
            message: "no vertex element".into(),
        })?,
        properties,
        body_offset: offset,
    })
}

/// Loads Gaussians from a splat PLY without fitting a scene frame.
pub fn load_splat_gaussians(path: impl AsRef<Path>) -> Result<Vec<Gaussian3D>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = parse_header(&mut reader)?;

    let mut col_of = [usize::MAX; REQUIRED.len()];
    for (ci, (name, _)) in header.properties.iter().enumerate() {
        if let Some(ri) = REQUIRED.iter().position(|r| r == name) {
            col_of[ri] = ci;
        }
    }
    for (ri, name) in REQUIRED.iter().enumerate() {
        if col_of[ri] == usize::MAX {
            return Err(Error::MissingProperty {
                property: name.to_string(),
            });
        }
    }

    let stride: usize = header.properties.iter().map(|(_, t)| t.size()).sum();
    let mut body = Vec::new();
    reader
        .read_to_end(&mut body)
        .map_err(|e| Error::io(path, e))?;
    let needed = stride * header.vertex_count;
    if body.len() < needed {
        return Err(Error::Parse {
            offset: header.body_offset + body.len() as u64,
            message: format!(
                "truncated body: expected {needed} bytes for {} vertices, found {}",
                header.vertex_count,
                body.len()
            ),
        });
    }

    // raw rows in required-property order
    let slot_of: Vec<Option<usize>> = (0..header.properties.len())
        .map(|ci| col_of.iter().position(|&c| c == ci))
        .collect();
    let mut rows: Vec<[f64; 11]> = Vec::with_capacity(header.vertex_count);
    for vi in 0..header.vertex_count {
        let mut row = [0.0f64; 11];
        let mut cursor = vi * stride;
        for ((_, ty), slot) in header.properties.iter().zip(&slot_of) {
            let val = match ty {
                PropType::F32 => {
                    f32::from_le_bytes(body[cursor..cursor + 4].try_into().unwrap()) as f64
                }
                PropType::F64 => f64::from_le_bytes(body[cursor..cursor + 8].try_into().unwrap()),
            };
            cursor += ty.size();
            if let Some(ri) = slot {
                row[*ri] = val;
            }
        }
        rows.push(row);
    }

    // encoding detection over whole columns: logits if any opacity escapes
    // [0,1], log-scales if any scale is negative
    let opacity_is_logit = rows.iter().any(|r| !(0.0..=1.0).contains(&r[3]));
    let scale_is_log = rows.iter().any(|r| r[4] < 0.0 || r[5] < 0.0 || r[6] < 0.0);

    let mut gaussians = Vec::with_capacity(rows.len());
    for (vi, r) in rows.iter().enumerate() {
        let opacity = if opacity_is_logit { logistic(r[3]) } else { r[3] };
        let scale = if scale_is_log {
            Vector3::new(r[4].exp(), r[5].exp(), r[6].exp())
        } else {
            Vector3::new(r[4], r[5], r[6])
        };
        let q = Quaternion::new(r[7], r[8], r[9], r[10]);
        if q.norm() < 1e-12 {
            return Err(Error::InvalidInput(format!("vertex {vi}: zero quaternion")));
        }
        gaussians.push(
            Gaussian3D::new(
                Vector3::new(r[0], r[1], r[2]),
                scale,
                UnitQuaternion::from_quaternion(q),
                opacity,
            )
            .map_err(|e| Error::InvalidInput(format!("vertex {vi}: {e}")))?,
        );
    }
    Ok(gaussians)
}

/// Loads a splat PLY and fits a scene frame from the Gaussians themselves.
/// Pipelines with cameras should `refit` the scene on them afterwards.
pub fn load_splat_ply(path: impl AsRef<Path>) -> Result<GaussianScene> {
    let gaussians = load_splat_gaussians(path)?;
    GaussianScene::fit(gaussians, &[])
}

/// Writes Gaussians in the canonical layout (linear opacity/scales, f32).
pub fn save_splat_gaussians(gaussians: &[Gaussian3D], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let do_io = |e: std::io::Error| Error::io(path, e);

    write!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}\n", gaussians.len())
        .map_err(do_io)?;
    for name in REQUIRED {
        writeln!(w, "property float {name}").map_err(do_io)?;
    }
    writeln!(w, "end_header").map_err(do_io)?;

    for g in gaussians {
        let q = g.rotation.quaternion();
        let fields: [f64; 11] = [
            g.position.x,
            g.position.y,
            g.position.z,
            g.opacity,
            g.scale.x,
            g.scale.y,
            g.scale.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ];
        for f in fields {
            w.write_all(&(f as f32).to_le_bytes()).map_err(do_io)?;
        }
    }
    w.flush().map_err(do_io)
}

pub fn save_splat_ply(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    save_splat_gaussians(scene.gaussians(), path)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn make_gaussians(n: usize) -> Vec<Gaussian3D> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.7;
                Gaussian3D::new(
                    Vector3::new(t.sin() * 9.0, t.cos() * 9.0, (t * 0.3).sin()),
                    Vector3::new(
                        0.02 + 0.1 * (t.cos().abs() + 0.1),
                        0.05,
                        0.02 + 0.05 * (t.sin().abs() + 0.1),
                    ),
                    UnitQuaternion::from_euler_angles(t, t * 0.5, t * 0.2),
                    (0.3 + 0.5 * (t.sin() * t.sin())).clamp(0.0, 1.0),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn round_trip_preserves_fields() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scene.ply");
        let gaussians = make_gaussians(1000);
        save_splat_gaussians(&gaussians, &path).unwrap();
        let loaded = load_splat_gaussians(&path).unwrap();
        assert_eq!(loaded.len(), 1000);
        for (a, b) in gaussians.iter().zip(&loaded) {
            for axis in 0..3 {
                assert!((a.position[axis] - b.position[axis]).abs() < 1e-6);
                assert!((a.scale[axis] - b.scale[axis]).abs() < 1e-6);
            }
            assert!((a.opacity - b.opacity).abs() < 1e-6);
            let qa = a.rotation.quaternion();
            let qb = b.rotation.quaternion();
            // q and -q are the same rotation; saving normalized keeps the sign
            assert!((qa.w - qb.w).abs() < 1e-6);
            assert!((qa.i - qb.i).abs() < 1e-6);
        }
    }

    #[test]
    fn save_is_deterministic() {
        let dir = tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.ply"), dir.path().join("b.ply"));
        let gaussians = make_gaussians(50);
        save_splat_gaussians(&gaussians, &p1).unwrap();
        save_splat_gaussians(&gaussians, &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn empty_scene_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.ply");
        save_splat_gaussians(&[], &path).unwrap();
        let loaded = load_splat_gaussians(&path).unwrap();
        assert!(loaded.is_empty());
        // and a full GaussianScene load stays valid
        let scene = load_splat_ply(&path).unwrap();
        assert!(scene.is_empty());
    }

    #[test]
    fn order_preserved() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("three.ply");
        let gaussians = make_gaussians(3);
        save_splat_gaussians(&gaussians, &path).unwrap();
        let loaded = load_splat_gaussians(&path).unwrap();
        for (a, b) in gaussians.iter().zip(&loaded) {
            assert!((a.position - b.position).norm() < 1e-5);
        }
    }

    /// Hand-written PLY with logit opacities and log scales.
    fn write_raw_ply(path: &Path, rows: &[[f32; 11]], props: &[&str]) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
        bytes.extend_from_slice(format!("element vertex {}\n", rows.len()).as_bytes());
        for p in props {
            bytes.extend_from_slice(format!("property float {p}\n").as_bytes());
        }
        bytes.extend_from_slice(b"end_header\n");
        for row in rows {
            for v in row.iter().take(props.len()) {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, bytes).unwrap();
    }

    #[test]
    fn logit_opacity_and_log_scale_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("logit.ply");
        // opacities {0.0, 3.0}: 3.0 escapes [0,1] so the column is logits;
        // scales negative so the columns are log-scales
        let rows = [
            [0.0, 0.0, 0.0, 0.0, -1.0, -1.0, -1.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 2.0, 3.0, 3.0, -2.0, -1.5, -0.5, 1.0, 0.0, 0.0, 0.0],
        ];
        write_raw_ply(&path, &rows, &REQUIRED);
        let loaded = load_splat_gaussians(&path).unwrap();
        assert!((loaded[0].opacity - 0.5).abs() < 1e-6); // logistic(0) = 0.5
        assert!((loaded[1].opacity - 1.0 / (1.0 + (-3.0f64).exp())).abs() < 1e-6);
        assert!((loaded[0].scale.x - (-1.0f64).exp()).abs() < 1e-6);
        assert!((loaded[1].scale.z - (-0.5f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn linear_opacity_passes_through() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("linear.ply");
        let rows = [[0.0, 0.0, 0.0, 0.25, 0.1, 0.1, 0.1, 1.0, 0.0, 0.0, 0.0]];
        write_raw_ply(&path, &rows, &REQUIRED);
        let loaded = load_splat_gaussians(&path).unwrap();
        assert!((loaded[0].opacity - 0.25).abs() < 1e-6);
        assert!((loaded[0].scale.x - 0.1).abs() < 1e-6);
    }

    #[test]
    fn extra_properties_tolerated() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("extras.ply");
        let props = [
            "x", "y", "z", "f_dc_0", "f_dc_1", "opacity", "scale_0", "scale_1", "scale_2",
            "rot_0", "rot_1", "rot_2", "rot_3",
        ];
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ply\nformat binary_little_endian 1.0\nelement vertex 1\n");
        for p in props {
            bytes.extend_from_slice(format!("property float {p}\n").as_bytes());
        }
        bytes.extend_from_slice(b"end_header\n");
        for v in [1.0f32, 2.0, 3.0, 9.9, 9.9, 0.5, 0.1, 0.2, 0.3, 1.0, 0.0, 0.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let loaded = load_splat_gaussians(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert!((loaded[0].position.y - 2.0).abs() < 1e-6);
        assert!((loaded[0].opacity - 0.5).abs() < 1e-6);
    }

    #[test]
    fn missing_property_named() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("missing.ply");
        let props = ["x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"];
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ply\nformat binary_little_endian 1.0\nelement vertex 0\n");
        for p in props {
            bytes.extend_from_slice(format!("property float {p}\n").as_bytes());
        }
        bytes.extend_from_slice(b"end_header\n");
        std::fs::write(&path, bytes).unwrap();
        match load_splat_gaussians(&path) {
            Err(Error::MissingProperty { property }) => assert_eq!(property, "opacity"),
            other => panic!("expected MissingProperty, got {other:?}"),
        }
    }

    #[test]
    fn truncated_body_reports_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.ply");
        let rows = [[0.0f32; 11]; 2];
        write_raw_ply(&path, &rows, &REQUIRED);
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 10]).unwrap();
        match load_splat_gaussians(&path) {
            Err(Error::Parse { offset, message }) => {
                assert!(offset > 0);
                assert!(message.contains("truncated"));
            }
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_reports_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        std::fs::write(&path, b"ply\nformat ascii 1.0\nend_header\n").unwrap();
        match load_splat_gaussians(&path) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected Parse error, got {other:?}"),
        }
    }
}
