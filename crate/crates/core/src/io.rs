//! On-disk sequence format.
//!
//! A sequence directory holds
//!
//! * `frame_%06d.png` (or `.pgm`, binary P5) grayscale frames, numbered without gaps,
//! * optional `flow_%06d.flo` Middlebury flow files (flow from frame `i` to `i + 1`),
//! * an optional `poses.txt` with one `timestamp tx ty tz qx qy qz qw` line per frame.
//!
//! Without a pose file, timestamps are `index / DEFAULT_FPS`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::camera::Pose;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::GrayImage;

pub const FLO_MAGIC: &[u8; 4] = b"PIEH";
pub const DEFAULT_FPS: f64 = 30.0;
pub const POSE_FILE: &str = "poses.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFrame {
    pub index: usize,
    pub timestamp: f64,
    pub image: GrayImage,
    pub gt_flow_to_next: Option<FlowField>,
    pub pose: Option<Pose>,
}

pub fn frame_file_name(index: usize, ext: &str) -> String {
    format!("frame_{index:06}.{ext}")
}

pub fn flow_file_name(index: usize) -> String {
    format!("flow_{index:06}.flo")
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 8 * flow.du().len());
    buf.extend_from_slice(FLO_MAGIC);
    buf.extend_from_slice(&(flow.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(flow.height() as u32).to_le_bytes());
    for ((&u, &v), &ok) in flow.du().iter().zip(flow.dv()).zip(flow.valid()) {
        // Middlebury convention: components above 1e9 mark unknown flow.
        let (u, v) = if ok {
            (u, v)
        } else {
            (f32::INFINITY, f32::INFINITY)
        };
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |reason: String| Error::CorruptFlow {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 12 {
        return Err(corrupt(format!(
            "{} byte file is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != FLO_MAGIC {
        return Err(corrupt(format!("bad magic {:?}", &bytes[0..4])));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| corrupt("dimension overflow".into()))?;
    let expected = 12 + 8 * n;
    if width == 0 || height == 0 || bytes.len() != expected {
        return Err(corrupt(format!(
            "{width}x{height} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let mut du = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for px in bytes[12..].chunks_exact(8) {
        let u = f32::from_le_bytes(px[0..4].try_into().unwrap());
        let v = f32::from_le_bytes(px[4..8].try_into().unwrap());
        let ok = u.is_finite() && v.is_finite() && u.abs() < 1e9 && v.abs() < 1e9;
        du.push(if ok { u } else { 0.0 });
        dv.push(if ok { v } else { 0.0 });
        valid.push(ok);
    }
    FlowField::new(width, height, du, dv, valid)
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{} {}\n255\n", image.width(), image.height())
        .and_then(|_| w.write_all(&image.to_u8()))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let codec = |reason: &str| Error::ImageCodec {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(codec("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "P5" {
        return Err(codec("only binary P5 PGM is supported"));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| codec("non-numeric header field"))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(codec("maxval out of range"));
    }
    let raster = bytes.get(pos..).unwrap_or(&[]);
    let data: Vec<f64> = if maxval < 256 {
        if raster.len() < w * h {
            return Err(codec("truncated raster"));
        }
        raster[..w * h]
            .iter()
            .map(|&b| f64::from(b) / maxval as f64)
            .collect()
    } else {
        if raster.len() < 2 * w * h {
            return Err(codec("truncated raster"));
        }
        raster[..2 * w * h]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / maxval as f64)
            .collect()
    };
    GrayImage::new(w, h, data.into_iter().map(|v| v.min(1.0)).collect())
}

pub fn write_png(path: &Path, image: &GrayImage) -> Result<()> {
    let buf =
        image::GrayImage::from_raw(image.width() as u32, image.height() as u32, image.to_u8())
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::ImageCodec {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Reads a PNG, converting color input with luma weights 0.299/0.587/0.114.
pub fn read_png(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::ImageCodec {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    use image::DynamicImage as D;
    let data: Vec<f64> = match img {
        D::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 255.0)
            .collect(),
        D::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 65535.0)
            .collect(),
        other => other
            .to_rgb32f()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(f64::from);
                (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0)
            })
            .collect(),
    };
    GrayImage::new(w, h, data)
}

pub fn read_image(path: &Path) -> Result<GrayImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(path),
        _ => read_png(path),
    }
}

pub fn write_poses(path: &Path, entries: &[(f64, Pose)]) -> Result<()> {
    let mut out = String::new();
    for (ts, pose) in entries {
        let t = pose.translation;
        let q = pose.quaternion_xyzw();
        out.push_str(&format!(
            "{ts:.9} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}\n",
            t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_poses(path: &Path) -> Result<Vec<(f64, Pose)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::MalformedPoseLine {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let vals = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| bad(format!("not a number: {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 8 {
            return Err(bad(format!("expected 8 fields, found {}", vals.len())));
        }
        let pose = Pose::from_components(
            [vals[1], vals[2], vals[3]],
            [vals[4], vals[5], vals[6], vals[7]],
        )
        .map_err(|e| bad(e.to_string()))?;
        out.push((vals[0], pose));
    }
    Ok(out)
}

fn parse_numbered(name: &str, prefix: &str) -> Option<(usize, String)> {
    let rest = name.strip_prefix(prefix)?;
    let (num, ext) = rest.split_once('.')?;
    if num.is_empty() || !num.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((num.parse().ok()?, ext.to_string()))
}

pub fn load_sequence(dir: &Path) -> Result<Vec<SequenceFrame>> {
    let mut frames: BTreeMap<usize, PathBuf> = BTreeMap::new();
    let mut flows: BTreeMap<usize, PathBuf> = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((idx, ext)) = parse_numbered(&name, "frame_") {
            if ext == "png" || ext == "pgm" {
                frames.insert(idx, entry.path());
            }
        } else if let Some((idx, ext)) = parse_numbered(&name, "flow_") {
            if ext == "flo" {
                flows.insert(idx, entry.path());
            }
        }
    }
    let Some((&first, _)) = frames.iter().next() else {
        return Ok(Vec::new());
    };
    let last = *frames.keys().next_back().unwrap();
    if let Some(missing) = (first..=last).find(|i| !frames.contains_key(i)) {
        return Err(Error::MissingFrame {
            dir: dir.to_path_buf(),
            index: missing,
        });
    }

    let pose_path = dir.join(POSE_FILE);
    let poses = if pose_path.exists() {
        let poses = read_poses(&pose_path)?;
        if poses.len() != frames.len() {
            return Err(Error::MalformedPoseLine {
                path: pose_path,
                line: poses.len(),
                reason: format!("{} poses for {} frames", poses.len(), frames.len()),
            });
        }
        Some(poses)
    } else {
        None
    };

    let mut out = Vec::with_capacity(frames.len());
    for (k, (idx, path)) in frames.into_iter().enumerate() {
        let image = read_image(&path)?;
        let gt_flow_to_next = flows.get(&idx).map(|p| read_flo(p)).transpose()?;
        if let Some(f) = &gt_flow_to_next {
            if f.width() != image.width() || f.height() != image.height() {
                return Err(Error::CorruptFlow {
                    path: flows[&idx].clone(),
                    reason: "flow size differs from frame size".into(),
                });
            }
        }
        let (timestamp, pose) = match &poses {
            Some(p) => (p[k].0, Some(p[k].1)),
            None => (idx as f64 / DEFAULT_FPS, None),
        };
        out.push(SequenceFrame {
            index: idx,
            timestamp,
            image,
            gt_flow_to_next,
            pose,
        });
    }
    for pair in out.windows(2) {
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(Error::MalformedPoseLine {
                path: dir.join(POSE_FILE),
                line: pair[1].index - first + 1,
                reason: "timestamps must be strictly increasing".into(),
            });
        }
    }
    Ok(out)
}

/// Writes frames as PNG plus flow and pose sidecars. Creates `dir` if needed.
pub fn save_sequence(dir: &Path, frames: &[SequenceFrame]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for frame in frames {
        write_png(&dir.join(frame_file_name(frame.index, "png")), &frame.image)?;
        if let Some(flow) = &frame.gt_flow_to_next {
            write_flo(&dir.join(flow_file_name(frame.index)), flow)?;
        }
    }
    if frames.iter().all(|f| f.pose.is_some()) && !frames.is_empty() {
        let entries: Vec<_> = frames
            .iter()
            .map(|f| (f.timestamp, f.pose.unwrap()))
            .collect();
        write_poses(&dir.join(POSE_FILE), &entries)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn bare_frames_load_without_sidecars() {
        let dir = tmp();
        for i in 0..3 {
            let img = GrayImage::from_fn(10, 8, |x, y| ((x + y + i) % 7) as f64 / 7.0);
            write_png(&dir.path().join(frame_file_name(i, "png")), &img).unwrap();
        }
        let seq = load_sequence(dir.path()).unwrap();
        assert_eq!(seq.len(), 3);
        assert!(seq
            .iter()
            .all(|f| f.gt_flow_to_next.is_none() && f.pose.is_none()));
        assert_eq!(
            seq.iter().map(|f| f.index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn gap_in_numbering_is_missing_frame() {
        let dir = tmp();
        let img = GrayImage::filled(4, 4, 0.2);
        write_png(&dir.path().join(frame_file_name(0, "png")), &img).unwrap();
        write_png(&dir.path().join(frame_file_name(2, "png")), &img).unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(Error::MissingFrame { index: 1, .. })
        ));
    }

    #[test]
    fn bad_magic_is_corrupt_flow() {
        let dir = tmp();
        let path = dir.path().join("flow_000000.flo");
        write_flo(&path, &FlowField::zeros(3, 2)).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_flo(&path), Err(Error::CorruptFlow { .. })));
        bytes[0] = b'P';
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_flo(&path), Err(Error::CorruptFlow { .. })));
    }

    #[test]
    fn flo_layout_is_little_endian_interleaved() {
        let dir = tmp();
        let path = dir.path().join("f.flo");
        let flow =
            FlowField::new(2, 1, vec![1.5, -2.0], vec![0.25, 3.0], vec![true, true]).unwrap();
        write_flo(&path, &flow).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"PIEH");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &0.25f32.to_le_bytes());
        assert_eq!(&bytes[20..24], &(-2.0f32).to_le_bytes());
    }

    #[test]
    fn malformed_pose_line_reports_line_number() {
        let dir = tmp();
        let path = dir.path().join(POSE_FILE);
        fs::write(&path, "0.0 0 0 0 0 0 0 1\n0.1 0 0 0 0 0 1\n").unwrap();
        match read_poses(&path) {
            Err(Error::MalformedPoseLine { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pgm_roundtrip_and_color_png_luma() {
        let dir = tmp();
        let img = GrayImage::from_fn(7, 5, |x, y| ((x * 31 + y * 17) % 256) as f64 / 255.0);
        let p = dir.path().join("a.pgm");
        write_pgm(&p, &img).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), img);

        let rgb = image::RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 0]));
        let cp = dir.path().join("c.png");
        rgb.save(&cp).unwrap();
        let g = read_png(&cp).unwrap();
        assert!((g.get(0, 0) - 0.299).abs() < 1e-6);
    }

    #[test]
    fn sequence_roundtrip_with_sidecars() {
        let dir = tmp();
        let frames: Vec<_> = (0..3)
            .map(|i| SequenceFrame {
                index: i,
                timestamp: i as f64 * 0.1,
                image: GrayImage::from_fn(9, 9, |x, y| ((x * y + i) % 255) as f64 / 255.0),
                gt_flow_to_next: (i < 2).then(|| FlowField::zeros(9, 9)),
                pose: Some(
                    Pose::from_components([i as f64, 0.5, -1.0], [0.0, 0.0, 0.0, 1.0]).unwrap(),
                ),
            })
            .collect();
        save_sequence(dir.path(), &frames).unwrap();
        let back = load_sequence(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in frames.iter().zip(&back) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.gt_flow_to_next, b.gt_flow_to_next);
            assert!((a.pose.unwrap().translation - b.pose.unwrap().translation).norm() < 1e-12);
            assert!((a.timestamp - b.timestamp).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn flo_roundtrip_is_bit_exact(
            w in 1usize..12, h in 1usize..12,
            seed in proptest::collection::vec(-1e6f32..1e6, 144),
        ) {
            let n = w * h;
            let du: Vec<f32> = seed[..n].to_vec();
            let dv: Vec<f32> = seed[..n].iter().rev().map(|v| v * 0.37).collect();
            let flow = FlowField::new(w, h, du, dv, vec![true; n]).unwrap();
            let dir = tmp();
            let path = dir.path().join("x.flo");
            write_flo(&path, &flow).unwrap();
            let back = read_flo(&path).unwrap();
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(back.du()), bits(flow.du()));
            prop_assert_eq!(bits(back.dv()), bits(flow.dv()));
        }
    }
}
