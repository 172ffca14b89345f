//! PLY point clouds: `binary_little_endian` and `ascii` read, binary write.
//! Only the `vertex` element is used; it must come first.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyCloud {
    pub points: Vec<Point3>,
    pub instance_ids: Option<Vec<i32>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

struct Header {
    encoding: Encoding,
    count: usize,
    properties: Vec<(String, Scalar)>,
    body_offset: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let bad = |m: String| Error::format(path, m);
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| bad("no end_header".into()))?;
    let mut body_offset = end + END.len();
    if bytes.get(body_offset) == Some(&b'\r') {
        body_offset += 1;
    }
    if bytes.get(body_offset) != Some(&b'\n') {
        return Err(bad("end_header not followed by a newline".into()));
    }
    body_offset += 1;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
    let mut lines = text.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(bad("missing ply magic".into()));
    }
    let mut encoding = None;
    let mut count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    let mut seen_element = false;
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", "1.0"] => encoding = Some(Encoding::Ascii),
            ["format", "binary_little_endian", "1.0"] => encoding = Some(Encoding::BinaryLe),
            ["format", other, ..] => return Err(bad(format!("unsupported format {other}"))),
            ["element", name, n] => {
                if !seen_element && *name != "vertex" {
                    return Err(bad(format!("first element is {name:?}, expected vertex")));
                }
                in_vertex = *name == "vertex" && !seen_element;
                seen_element = true;
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|_| bad(format!("bad vertex count {n:?}")))?);
                }
            }
            ["property", "list", ..] if in_vertex => return Err(bad("list properties on vertices".into())),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown property type {ty:?}")))?;
                properties.push((name.to_string(), s));
            }
            ["property", ..] => {}
            _ => return Err(bad(format!("unrecognised header line {line:?}"))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| bad("missing format line".into()))?,
        count: count.ok_or_else(|| bad("missing vertex element".into()))?,
        properties,
        body_offset,
    })
}

pub fn read_ply(path: &Path) -> Result<PlyCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let h = parse_header(path, &bytes)?;
    let bad = |m: String| Error::format(path, m);
    let find = |name: &str| h.properties.iter().position(|(n, _)| n == name);
    let (x, y, z) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(bad("vertex element lacks x, y or z".into())),
    };
    let id = find("instance_id");
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };

    let np = h.properties.len();
    let mut values = vec![0.0f64; np];
    let mut cloud = PlyCloud {
        points: Vec::with_capacity(h.count),
        instance_ids: id.map(|_| Vec::with_capacity(h.count)),
        colors: rgb.map(|_| Vec::with_capacity(h.count)),
    };
    let body = &bytes[h.body_offset..];
    let mut ascii_lines = match h.encoding {
        Encoding::Ascii => Some(
            std::str::from_utf8(body)
                .map_err(|_| bad("ascii body is not UTF-8".into()))?
                .lines()
                .filter(|l| !l.trim().is_empty()),
        ),
        Encoding::BinaryLe => None,
    };
    let stride: usize = h.properties.iter().map(|(_, s)| s.size()).sum();
    if h.encoding == Encoding::BinaryLe && body.len() < stride * h.count {
        return Err(bad(format!(
            "body holds {} bytes, {} vertices need {}",
            body.len(),
            h.count,
            stride * h.count
        )));
    }
    for v in 0..h.count {
        match ascii_lines.as_mut() {
            Some(lines) => {
                let line = lines.next().ok_or_else(|| bad(format!("only {v} of {} vertices", h.count)))?;
                let tok: Vec<&str> = line.split_whitespace().collect();
                if tok.len() < np {
                    return Err(bad(format!("vertex {v} has {} values, expected {np}", tok.len())));
                }
                for (k, t) in tok.iter().take(np).enumerate() {
                    values[k] = t.parse().map_err(|_| bad(format!("vertex {v}: bad number {t:?}")))?;
                }
            }
            None => {
                let mut off = v * stride;
                for (k, (_, s)) in h.properties.iter().enumerate() {
                    values[k] = s.read_le(&body[off..off + s.size()]);
                    off += s.size();
                }
            }
        }
        let p = [values[x], values[y], values[z]];
        if p.iter().any(|c| !c.is_finite()) {
            return Err(bad(format!("vertex {v} has a non-finite coordinate")));
        }
        cloud.points.push(p);
        if let (Some(ids), Some(k)) = (cloud.instance_ids.as_mut(), id) {
            let val = values[k];
            if val.fract() != 0.0 || val < i32::MIN as f64 || val > i32::MAX as f64 {
                return Err(bad(format!("vertex {v}: instance_id {val} is not an int32")));
            }
            ids.push(val as i32);
        }
        if let (Some(cols), Some([r, g, b])) = (cloud.colors.as_mut(), rgb) {
            let c = |k: usize| values[k].clamp(0.0, 255.0) as u8;
            cols.push([c(r), c(g), c(b)]);
        }
    }
    Ok(cloud)
}

/// Binary little-endian PLY: float x/y/z, then int instance_id and uchar
/// red/green/blue when present.
pub fn write_ply(path: &Path, cloud: &PlyCloud) -> Result<()> {
    let n = cloud.points.len();
    if cloud.instance_ids.as_ref().is_some_and(|v| v.len() != n) || cloud.colors.as_ref().is_some_and(|v| v.len() != n) {
        return Err(Error::Config("PLY attribute lengths differ from point count".into()));
    }
    let mut out = Vec::with_capacity(256 + n * 19);
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {n}\n");
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.instance_ids.is_some() {
        header.push_str("property int instance_id\n");
    }
    if cloud.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    out.extend_from_slice(header.as_bytes());
    for (i, p) in cloud.points.iter().enumerate() {
        for c in p {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        if let Some(ids) = &cloud.instance_ids {
            out.extend_from_slice(&ids[i].to_le_bytes());
        }
        if let Some(cols) = &cloud.colors {
            out.extend_from_slice(&cols[i]);
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ply");
        let cloud = PlyCloud {
            points: vec![[0.025, 1.5, -2.0], [3.0, 4.0, 5.0]],
            instance_ids: Some(vec![7, -1]),
            colors: Some(vec![[1, 2, 3], [250, 251, 252]]),
        };
        write_ply(&path, &cloud).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.instance_ids, cloud.instance_ids);
        assert_eq!(back.colors, cloud.colors);
        assert_eq!(back.points[0][0], 0.025f32 as f64);
        assert_eq!(back.points[1], [3.0, 4.0, 5.0]);
    }

    #[test]
    fn ascii_with_extra_properties() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ply");
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty double x\nproperty double y\n\
                    property double z\nproperty float nx\nproperty int instance_id\nelement face 0\n\
                    property list uchar int vertex_indices\nend_header\n0 0 0 1 3\n1 2 3 0.5 4\n";
        fs::write(&path, text).unwrap();
        let c = read_ply(&path).unwrap();
        assert_eq!(c.points, vec![[0.0; 3], [1.0, 2.0, 3.0]]);
        assert_eq!(c.instance_ids, Some(vec![3, 4]));
        assert!(c.colors.is_none());
    }

    #[test]
    fn truncated_body_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ply");
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
                    property float z\nend_header\n";
        let mut bytes = text.as_bytes().to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        fs::write(&path, bytes).unwrap();
        let e = read_ply(&path).unwrap_err();
        assert!(matches!(e, Error::Format { .. }));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = read_ply(Path::new("/nonexistent/points.ply")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/points.ply"));
    }
}
