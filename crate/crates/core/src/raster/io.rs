use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use super::{check_unit_range, LabelMap, Plane, ProbabilityMap, RawPlane};
use crate::{Error, Result, CLASS_COUNT};

/// Magic prefix of probability map files.
pub const PROB_MAGIC: [u8; 16] = *b"WMAPPROB\0\0\0\0\0\0\0\0";
/// Magic prefix of generic float plane stacks (channel planes, tiles).
pub const STACK_MAGIC: [u8; 16] = *b"WMAPSTCK\0\0\0\0\0\0\0\0";

#[derive(Serialize, Deserialize)]
struct Header {
    w: usize,
    h: usize,
    c: usize,
}

fn write_planes(path: &Path, magic: &[u8; 16], planes: &[Plane]) -> Result<()> {
    let (w, h) = planes.first().map(Plane::dims).unwrap_or((0, 0));
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(magic)?;
    let header = serde_json::to_string(&Header {
        w,
        h,
        c: planes.len(),
    })
    .expect("header serializes");
    out.write_all(header.as_bytes())?;
    out.write_all(b"\n")?;
    for plane in planes {
        for v in plane.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_planes(path: &Path, magic: &[u8; 16]) -> Result<(usize, usize, Vec<Plane>)> {
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut input = BufReader::new(File::open(path)?);
    let mut got = [0u8; 16];
    input.read_exact(&mut got)?;
    if &got != magic {
        return Err(decode_err("bad magic".into()));
    }
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: Header =
        serde_json::from_str(line.trim_end()).map_err(|e| decode_err(format!("header: {e}")))?;
    let n = header.w * header.h;
    let mut planes = Vec::with_capacity(header.c);
    let mut buf = vec![0u8; 4 * 65536];
    for _ in 0..header.c {
        let mut data = Vec::with_capacity(n);
        let mut remaining = n;
        while remaining > 0 {
            let take = remaining.min(buf.len() / 4);
            let bytes = &mut buf[..take * 4];
            input
                .read_exact(bytes)
                .map_err(|e| decode_err(format!("truncated planes: {e}")))?;
            data.extend(
                bytes
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            );
            remaining -= take;
        }
        planes.push(Plane::from_vec(header.w, header.h, data)?);
    }
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(decode_err("trailing bytes".into()));
    }
    Ok((header.w, header.h, planes))
}

/// Writes a probability map; every value must lie in `[0, 1]`.
pub fn write_probability_map(map: &ProbabilityMap, path: impl AsRef<Path>) -> Result<()> {
    for p in map.planes() {
        check_unit_range(p.data())?;
    }
    write_planes(path.as_ref(), &PROB_MAGIC, map.planes())
}

pub fn read_probability_map(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    let (w, h, planes) = read_planes(path.as_ref(), &PROB_MAGIC)?;
    if planes.is_empty() {
        return Ok(ProbabilityMap::from_planes_unchecked(w, h, planes));
    }
    ProbabilityMap::new(planes)
}

/// Writes an arbitrary stack of equally sized float planes.
pub fn write_plane_stack(planes: &[Plane], path: impl AsRef<Path>) -> Result<()> {
    if let Some(first) = planes.first() {
        if planes.iter().any(|p| p.dims() != first.dims()) {
            return Err(Error::DimensionMismatch("stack planes differ in size".into()));
        }
    }
    write_planes(path.as_ref(), &STACK_MAGIC, planes)
}

pub fn read_plane_stack(path: impl AsRef<Path>) -> Result<Vec<Plane>> {
    read_planes(path.as_ref(), &STACK_MAGIC).map(|(_, _, planes)| planes)
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Decodes an 8- or 16-bit single-channel PNG / PGM.
pub fn decode_raw_plane(path: impl AsRef<Path>) -> Result<RawPlane> {
    let path = path.as_ref();
    match open_image(path)? {
        DynamicImage::ImageLuma8(img) => Ok(RawPlane {
            width: img.width() as usize,
            height: img.height() as usize,
            bits: 8,
            data: img.into_raw().into_iter().map(u16::from).collect(),
        }),
        DynamicImage::ImageLuma16(img) => Ok(RawPlane {
            width: img.width() as usize,
            height: img.height() as usize,
            bits: 16,
            data: img.into_raw(),
        }),
        other => Err(Error::Decode {
            path: path.to_path_buf(),
            reason: format!("expected a single-channel image, found {:?}", other.color()),
        }),
    }
}

/// Loads a band plane as float: integer images are scaled to `[0, 1]`,
/// `.wmap` single-plane stacks are read verbatim.
pub fn load_band_plane(path: impl AsRef<Path>) -> Result<Plane> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "wmap") {
        let mut planes = read_plane_stack(path)?;
        if planes.len() != 1 {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: format!("expected 1 plane, found {}", planes.len()),
            });
        }
        return Ok(planes.pop().unwrap());
    }
    Ok(decode_raw_plane(path)?.to_unit_plane())
}

/// Writes a `[0, 1]` plane as a 16-bit grayscale PNG.
pub fn write_png_u16(plane: &Plane, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u16> = plane
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    write_u16(plane.width(), plane.height(), data, path.as_ref())
}

pub(crate) fn write_u16(width: usize, height: usize, data: Vec<u16>, path: &Path) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, data)
            .ok_or_else(|| Error::DimensionMismatch("u16 buffer size".into()))?;
    img.save(path).map_err(image_io_err)
}

/// Writes a plane as an 8-bit grayscale PNG, mapping `[lo, hi]` linearly to `[0, 255]`.
pub fn write_png_u8(plane: &Plane, lo: f32, hi: f32, path: impl AsRef<Path>) -> Result<()> {
    let scale = 255.0 / (hi - lo);
    let data: Vec<u8> = plane
        .data()
        .iter()
        .map(|v| ((v.clamp(lo, hi) - lo) * scale).round() as u8)
        .collect();
    let img = GrayImage::from_raw(plane.width() as u32, plane.height() as u32, data)
        .ok_or_else(|| Error::DimensionMismatch("u8 buffer size".into()))?;
    img.save(path.as_ref()).map_err(image_io_err)
}

pub fn write_label_png(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let img = GrayImage::from_raw(
        labels.width() as u32,
        labels.height() as u32,
        labels.labels().to_vec(),
    )
    .expect("label buffer matches dimensions");
    img.save(path.as_ref()).map_err(image_io_err)
}

/// Reads an 8-bit label PNG whose gray values are class ids.
pub fn read_label_png(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let raw = decode_raw_plane(path)?;
    if raw.bits != 8 {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: "label maps must be 8-bit".into(),
        });
    }
    let labels = raw.data.into_iter().map(|v| v as u8).collect();
    LabelMap::new(raw.width, raw.height, labels, CLASS_COUNT)
}

pub(crate) fn image_io_err(e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(other.to_string())),
    }
}
