//! COLMAP-style text camera files: `cameras.txt` intrinsics and `images.txt`
//! poses. Only PINHOLE and SIMPLE_PINHOLE models are supported; the points2D
//! lines of images.txt are ignored.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::scene::CameraView;

/// Depth planes are not part of the COLMAP format; loaded views get these.
pub const DEFAULT_Z_NEAR: f64 = 0.01;
pub const DEFAULT_Z_FAR: f64 = 1e6;

#[derive(Debug, Clone, Copy)]
struct Intrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

fn parse_cameras_txt(text: &str) -> Result<HashMap<u32, Intrinsics>> {
    let mut out = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::Parse {
            offset: lineno as u64 + 1,
            message: format!("cameras.txt line {}: {msg}", lineno + 1),
        };
        if f.len() < 4 {
            return Err(bad("expected `ID MODEL W H params...`"));
        }
        let id: u32 = f[0].parse().map_err(|_| bad("bad camera id"))?;
        let width: u32 = f[2].parse().map_err(|_| bad("bad width"))?;
        let height: u32 = f[3].parse().map_err(|_| bad("bad height"))?;
        let params: Vec<f64> = f[4..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad parameter"))?;
        let intr = match f[1] {
            "PINHOLE" => {
                if params.len() != 4 {
                    return Err(bad("PINHOLE needs fx fy cx cy"));
                }
                Intrinsics {
                    fx: params[0],
                    fy: params[1],
                    cx: params[2],
                    cy: params[3],
                    width,
                    height,
                }
            }
            "SIMPLE_PINHOLE" => {
                if params.len() != 3 {
                    return Err(bad("SIMPLE_PINHOLE needs f cx cy"));
                }
                Intrinsics {
                    fx: params[0],
                    fy: params[0],
                    cx: params[1],
                    cy: params[2],
                    width,
                    height,
                }
            }
            other => return Err(Error::UnsupportedCameraModel(other.to_string())),
        };
        out.insert(id, intr);
    }
    Ok(out)
}

/// Reads `cameras.txt` + `images.txt` from `dir`, one CameraView per
/// registered image, in file order.
pub fn load_colmap_cameras(dir: impl AsRef<Path>) -> Result<Vec<CameraView>> {
    let dir = dir.as_ref();
    let cam_path = dir.join("cameras.txt");
    let img_path = dir.join("images.txt");
    let cam_text = fs::read_to_string(&cam_path).map_err(|e| Error::io(&cam_path, e))?;
    let img_text = fs::read_to_string(&img_path).map_err(|e| Error::io(&img_path, e))?;
    let intrinsics = parse_cameras_txt(&cam_text)?;

    let mut views = Vec::new();
    let mut lines = img_text.lines().enumerate().peekable();
    while let Some((lineno, raw)) = lines.next() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::Parse {
            offset: lineno as u64 + 1,
            message: format!("images.txt line {}: {msg}", lineno + 1),
        };
        if f.len() < 10 {
            return Err(bad("expected `ID QW QX QY QZ TX TY TZ CAM_ID NAME`"));
        }
        let image_id: u32 = f[0].parse().map_err(|_| bad("bad image id"))?;
        let vals: Vec<f64> = f[1..8]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad pose value"))?;
        let camera_id: u32 = f[8].parse().map_err(|_| bad("bad camera id"))?;
        let intr = intrinsics
            .get(&camera_id)
            .ok_or(Error::DanglingCameraId(camera_id))?;

        let q = Quaternion::new(vals[0], vals[1], vals[2], vals[3]);
        if q.norm() < 1e-12 {
            return Err(bad("zero quaternion"));
        }
        let rotation = UnitQuaternion::from_quaternion(q);
        let translation = Translation3::from(Vector3::new(vals[4], vals[5], vals[6]));
        let world_to_cam = Isometry3::from_parts(translation, rotation);
        views.push(CameraView::new(
            image_id,
            intr.fx,
            intr.fy,
            intr.cx,
            intr.cy,
            intr.width,
            intr.height,
            world_to_cam,
            DEFAULT_Z_NEAR,
            DEFAULT_Z_FAR,
        )?);

        // the following line lists 2D points; skip it even when empty
        lines.next();
    }
    Ok(views)
}

/// Writes `cameras.txt` + `images.txt` for the given views (one PINHOLE
/// camera entry per view). Inverse of [`load_colmap_cameras`] up to the
/// default depth planes.
pub fn save_colmap_cameras(dir: impl AsRef<Path>, cameras: &[CameraView]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut cam_text = String::from("# Camera list: ID MODEL WIDTH HEIGHT PARAMS[]\n");
    for c in cameras {
        cam_text.push_str(&format!(
            "{} PINHOLE {} {} {} {} {} {}\n",
            c.id, c.width, c.height, c.fx, c.fy, c.cx, c.cy
        ));
    }
    let cam_path = dir.join("cameras.txt");
    fs::write(&cam_path, cam_text).map_err(|e| Error::io(&cam_path, e))?;

    let mut img_text =
        String::from("# Image list: IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME\n");
    for c in cameras {
        let q = c.world_to_cam.rotation.quaternion();
        let t = c.world_to_cam.translation.vector;
        img_text.push_str(&format!(
            "{} {} {} {} {} {} {} {} {} cam_{:05}.png\n\n",
            c.id, q.w, q.i, q.j, q.k, t.x, t.y, t.z, c.id, c.id
        ));
    }
    let img_path = dir.join("images.txt");
    fs::write(&img_path, img_text).map_err(|e| Error::io(&img_path, e))
}
