//! File formats: binary point clouds with optional `.trace` sidecars and
//! plain-text box records.
//!
//! Clouds are raw little-endian f32 triples (x, y, z) with no header; a
//! sidecar named `<cloud>.trace` holds one f32 trace per point. Box files
//! are UTF-8 lines `class score x y z l w h yaw` with floats printed in
//! shortest round-trip form, so write/read/write is byte-stable.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::boxes::Box3D;
use crate::error::{Error, Result};
use crate::propagation::TaggedPointCloud;

/// `<cloud>.trace`, appended to the full file name.
pub fn trace_path(cloud: &Path) -> PathBuf {
    let mut name = cloud.file_name().unwrap_or_default().to_os_string();
    name.push(".trace");
    cloud.with_file_name(name)
}

pub fn write_cloud(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    let mut bytes = Vec::with_capacity(points.len() * 12);
    for p in points {
        for c in 0..3 {
            bytes.extend_from_slice(&(p[c] as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_cloud(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 12 != 0 {
        return Err(Error::MalformedBinary {
            path: path.display().to_string(),
            offset: (bytes.len() / 12 * 12) as u64,
            message: format!(
                "trailing {} bytes, expected 12-byte records",
                bytes.len() % 12
            ),
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / 12);
    for record in bytes.chunks_exact(12) {
        let coord =
            |i: usize| f32::from_le_bytes(record[4 * i..4 * i + 4].try_into().unwrap()) as f64;
        points.push(Vector3::new(coord(0), coord(1), coord(2)));
    }
    Ok(points)
}

pub fn write_traces(path: &Path, traces: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(traces.len() * 4);
    for t in traces {
        bytes.extend_from_slice(&(*t as f32).to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_traces(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::MalformedBinary {
            path: path.display().to_string(),
            offset: (bytes.len() / 4 * 4) as u64,
            message: format!(
                "trailing {} bytes, expected 4-byte records",
                bytes.len() % 4
            ),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

/// Writes the cloud and its `.trace` sidecar.
pub fn write_tagged_cloud(path: &Path, cloud: &TaggedPointCloud) -> Result<()> {
    write_cloud(path, cloud.points())?;
    write_traces(&trace_path(path), cloud.traces())
}

/// Reads a cloud plus its sidecar; without a sidecar all traces are zero.
pub fn read_tagged_cloud(path: &Path) -> Result<TaggedPointCloud> {
    let points = read_cloud(path)?;
    let sidecar = trace_path(path);
    if !sidecar.exists() {
        return Ok(TaggedPointCloud::from_points(points));
    }
    let traces = read_traces(&sidecar)?;
    if traces.len() != points.len() {
        return Err(Error::MalformedBinary {
            path: sidecar.display().to_string(),
            offset: (traces.len().min(points.len()) * 4) as u64,
            message: format!(
                "sidecar has {} traces for {} points",
                traces.len(),
                points.len()
            ),
        });
    }
    TaggedPointCloud::new(points, traces)
}

fn format_box(b: &Box3D) -> String {
    format!(
        "{} {} {} {} {} {} {} {} {}",
        b.class_id,
        b.score,
        b.center.x,
        b.center.y,
        b.center.z,
        b.size.x,
        b.size.y,
        b.size.z,
        b.yaw
    )
}

pub fn write_boxes(path: &Path, boxes: &[Box3D]) -> Result<()> {
    let mut out = String::new();
    for b in boxes {
        out.push_str(&format_box(b));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_box_line(path: &Path, record: usize, line: &str) -> Result<Box3D> {
    let malformed = |message: String| Error::MalformedRecord {
        path: path.display().to_string(),
        record,
        message,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 9 {
        return Err(malformed(format!(
            "expected 9 fields, got {}",
            fields.len()
        )));
    }
    let class_id: u32 = fields[0]
        .parse()
        .map_err(|e| malformed(format!("class `{}`: {e}", fields[0])))?;
    let mut v = [0.0_f64; 8];
    for (i, field) in fields[1..].iter().enumerate() {
        v[i] = field
            .parse()
            .map_err(|e| malformed(format!("field `{field}`: {e}")))?;
    }
    Box3D::new(
        class_id,
        v[0],
        Vector3::new(v[1], v[2], v[3]),
        Vector3::new(v[4], v[5], v[6]),
        v[7],
    )
    .map_err(|e| malformed(e.to_string()))
}

/// Parses `class score x y z l w h yaw` lines; blank lines are skipped.
/// Record numbers in errors are 1-based line numbers.
pub fn read_boxes(path: &Path) -> Result<Vec<Box3D>> {
    let text = std::fs::read_to_string(path)?;
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        boxes.push(parse_box_line(path, i + 1, line)?);
    }
    Ok(boxes)
}

/// Writes rows as CSV with a header line.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}
