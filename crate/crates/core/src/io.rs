//! Point cloud readers and writers: PLY (ASCII and binary little-endian),
//! OBJ (`v` lines) and XYZ (3 or 6 columns).

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use log::warn;
use nalgebra::{Point3, Vector3};

use crate::cloud::PointCloud;
use crate::error::LoadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    Obj,
    Xyz,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Result<Self, LoadError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "ply" => Ok(CloudFormat::Ply),
            "obj" => Ok(CloudFormat::Obj),
            "xyz" | "txt" => Ok(CloudFormat::Xyz),
            other => Err(LoadError::UnsupportedFormat(other.to_string())),
        }
    }
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud, LoadError> {
    let bytes = fs::read(path)?;
    parse_cloud(&bytes, format)
}

/// Loads a cloud, inferring the format from the file extension.
pub fn load_cloud_auto(path: &Path) -> Result<PointCloud, LoadError> {
    load_cloud(path, CloudFormat::from_path(path)?)
}

pub fn parse_cloud(bytes: &[u8], format: CloudFormat) -> Result<PointCloud, LoadError> {
    let (points, normals) = match format {
        CloudFormat::Ply => parse_ply(bytes)?,
        CloudFormat::Obj => (parse_obj(bytes)?, None),
        CloudFormat::Xyz => parse_xyz(bytes)?,
    };
    if points.is_empty() {
        return Err(LoadError::EmptyCloud);
    }
    Ok(match normals {
        Some(n) => PointCloud::with_normals(points, n)?,
        None => PointCloud::new(points)?,
    })
}

type Parsed = (Vec<Point3<f64>>, Option<Vec<Vector3<f64>>>);

fn parse_f64(tok: &str, line: usize) -> Result<f64, LoadError> {
    tok.parse::<f64>()
        .map_err(|_| LoadError::parse(line, format!("bad number `{tok}`")))
}

fn parse_xyz(bytes: &[u8]) -> Result<Parsed, LoadError> {
    let text = std::str::from_utf8(bytes).map_err(|_| LoadError::parse(0, "not UTF-8"))?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| parse_f64(t, ln + 1))
            .collect::<Result<Vec<_>, _>>()?;
        let cols = *columns.get_or_insert(vals.len());
        if cols != 3 && cols != 6 {
            return Err(LoadError::parse(ln + 1, format!("expected 3 or 6 columns, got {cols}")));
        }
        if vals.len() != cols {
            return Err(LoadError::parse(ln + 1, "inconsistent column count"));
        }
        points.push(Point3::new(vals[0], vals[1], vals[2]));
        if cols == 6 {
            normals.push(Vector3::new(vals[3], vals[4], vals[5]));
        }
    }
    let normals = (columns == Some(6)).then_some(normals);
    Ok((points, normals))
}

fn parse_obj(bytes: &[u8]) -> Result<Vec<Point3<f64>>, LoadError> {
    let mut points = Vec::new();
    for (ln, line) in bytes.lines().enumerate() {
        let line = line?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some("v") {
            continue;
        }
        let coords = toks
            .take(3)
            .map(|t| parse_f64(t, ln + 1))
            .collect::<Result<Vec<_>, _>>()?;
        if coords.len() != 3 {
            return Err(LoadError::parse(ln + 1, "vertex needs three coordinates"));
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PlyProperty {
    Scalar { name: String, ty: ScalarType },
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProperty>,
}

const VERTEX_PROPS: [&str; 6] = ["x", "y", "z", "nx", "ny", "nz"];

fn parse_ply(bytes: &[u8]) -> Result<Parsed, LoadError> {
    // Header is ASCII up to and including "end_header\n".
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let next_line = |pos: &mut usize| -> Option<String> {
        if *pos >= bytes.len() {
            return None;
        }
        let end = bytes[*pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| *pos + e)
            .unwrap_or(bytes.len());
        let line = String::from_utf8_lossy(&bytes[*pos..end])
            .trim_end_matches('\r')
            .to_string();
        *pos = (end + 1).min(bytes.len());
        Some(line)
    };

    match next_line(&mut pos) {
        Some(l) if l.trim() == "ply" => {}
        _ => return Err(LoadError::parse(1, "missing `ply` magic")),
    }
    line_no += 1;
    let mut encoding = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut ended = false;
    while let Some(line) = next_line(&mut pos) {
        line_no += 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _ver] => {
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLe,
                    other => {
                        return Err(LoadError::parse(line_no, format!("unsupported PLY format `{other}`")))
                    }
                })
            }
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| LoadError::parse(line_no, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", cty, ity, _name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| LoadError::parse(line_no, "property before element"))?;
                let count = ScalarType::parse(cty)
                    .ok_or_else(|| LoadError::parse(line_no, "bad list count type"))?;
                let item = ScalarType::parse(ity)
                    .ok_or_else(|| LoadError::parse(line_no, "bad list item type"))?;
                el.props.push(PlyProperty::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| LoadError::parse(line_no, "property before element"))?;
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| LoadError::parse(line_no, format!("bad property type `{ty}`")))?;
                el.props.push(PlyProperty::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            ["end_header"] => {
                ended = true;
                break;
            }
            _ => return Err(LoadError::parse(line_no, format!("unrecognized header line `{line}`"))),
        }
    }
    if !ended {
        return Err(LoadError::parse(line_no, "truncated PLY header"));
    }
    let encoding = encoding.ok_or_else(|| LoadError::parse(line_no, "missing format line"))?;
    let vertex_idx = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| LoadError::parse(line_no, "no vertex element"))?;

    let vertex = &elements[vertex_idx];
    let mut slots = [None::<usize>; 6];
    for (pi, p) in vertex.props.iter().enumerate() {
        match p {
            PlyProperty::Scalar { name, .. } => {
                if let Some(k) = VERTEX_PROPS.iter().position(|n| n == name) {
                    slots[k] = Some(pi);
                } else {
                    warn!("skipping unknown vertex property `{name}`");
                }
            }
            PlyProperty::List { .. } => warn!("skipping list property on vertex element"),
        }
    }
    if slots[..3].iter().any(Option::is_none) {
        return Err(LoadError::parse(line_no, "vertex element lacks x/y/z"));
    }
    let has_normals = slots[3..].iter().all(Option::is_some);

    let body = &bytes[pos..];
    let rows = match encoding {
        PlyEncoding::Ascii => read_ascii_rows(body, &elements, vertex_idx, line_no)?,
        PlyEncoding::BinaryLe => read_binary_rows(body, &elements, vertex_idx)?,
    };
    let get = |row: &[f64], k: usize| row[slots[k].unwrap()];
    let points = rows
        .iter()
        .map(|r| Point3::new(get(r, 0), get(r, 1), get(r, 2)))
        .collect();
    let normals = has_normals.then(|| {
        rows.iter()
            .map(|r| Vector3::new(get(r, 3), get(r, 4), get(r, 5)))
            .collect()
    });
    Ok((points, normals))
}

fn read_ascii_rows(
    body: &[u8],
    elements: &[PlyElement],
    vertex_idx: usize,
    header_lines: usize,
) -> Result<Vec<Vec<f64>>, LoadError> {
    let text = std::str::from_utf8(body).map_err(|_| LoadError::parse(header_lines, "ASCII body is not UTF-8"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    for el in &elements[..vertex_idx] {
        for _ in 0..el.count {
            lines
                .next()
                .ok_or_else(|| LoadError::parse(header_lines, "body ends early"))?;
        }
    }
    let vertex = &elements[vertex_idx];
    let mut rows = Vec::with_capacity(vertex.count);
    for _ in 0..vertex.count {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| LoadError::parse(header_lines, "vertex list ends early"))?;
        let lno = header_lines + ln + 1;
        let mut toks = line.split_whitespace();
        let mut row = Vec::with_capacity(vertex.props.len());
        for p in &vertex.props {
            match p {
                PlyProperty::Scalar { .. } => {
                    let t = toks
                        .next()
                        .ok_or_else(|| LoadError::parse(lno, "missing vertex value"))?;
                    row.push(parse_f64(t, lno)?);
                }
                PlyProperty::List { .. } => {
                    let n = toks
                        .next()
                        .ok_or_else(|| LoadError::parse(lno, "missing list count"))?;
                    let n = parse_f64(n, lno)? as usize;
                    for _ in 0..n {
                        toks.next();
                    }
                    row.push(f64::NAN);
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_binary_rows(
    body: &[u8],
    elements: &[PlyElement],
    vertex_idx: usize,
) -> Result<Vec<Vec<f64>>, LoadError> {
    let mut off = 0usize;
    let truncated = || LoadError::parse(0, "binary body is truncated");
    let skip_element = |el: &PlyElement, off: &mut usize| -> Result<(), LoadError> {
        for _ in 0..el.count {
            for p in &el.props {
                match p {
                    PlyProperty::Scalar { ty, .. } => *off += ty.size(),
                    PlyProperty::List { count, item } => {
                        let b = body.get(*off..*off + count.size()).ok_or_else(truncated)?;
                        let n = count.read_le(b) as usize;
                        *off += count.size() + n * item.size();
                    }
                }
            }
        }
        Ok(())
    };
    for el in &elements[..vertex_idx] {
        skip_element(el, &mut off)?;
    }
    let vertex = &elements[vertex_idx];
    let mut rows = Vec::with_capacity(vertex.count);
    for _ in 0..vertex.count {
        let mut row = Vec::with_capacity(vertex.props.len());
        for p in &vertex.props {
            match p {
                PlyProperty::Scalar { ty, .. } => {
                    let b = body.get(off..off + ty.size()).ok_or_else(truncated)?;
                    row.push(ty.read_le(b));
                    off += ty.size();
                }
                PlyProperty::List { count, item } => {
                    let b = body.get(off..off + count.size()).ok_or_else(truncated)?;
                    let n = count.read_le(b) as usize;
                    off += count.size() + n * item.size();
                    row.push(f64::NAN);
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Serializes a cloud as binary little-endian PLY with `double` properties.
/// Output is a pure function of the cloud, so byte-identical across runs.
pub fn ply_bytes(cloud: &PointCloud) -> Vec<u8> {
    let with_normals = cloud.normals().is_some();
    let mut out = Vec::with_capacity(64 + cloud.len() * 48);
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", cloud.len()).as_bytes());
    for p in ["x", "y", "z"] {
        out.extend_from_slice(format!("property double {p}\n").as_bytes());
    }
    if with_normals {
        for p in ["nx", "ny", "nz"] {
            out.extend_from_slice(format!("property double {p}\n").as_bytes());
        }
    }
    out.extend_from_slice(b"end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        for c in p.coords.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(ns) = cloud.normals() {
            for c in ns[i].iter() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    out
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&ply_bytes(cloud))?;
    f.flush()
}

/// Writes an XYZ file (6 columns when normals are present), full precision.
pub fn write_xyz(path: &Path, cloud: &PointCloud) -> std::io::Result<()> {
    let mut s = String::new();
    for (i, p) in cloud.points().iter().enumerate() {
        s.push_str(&format!("{:?} {:?} {:?}", p.x, p.y, p.z));
        if let Some(ns) = cloud.normals() {
            let n = ns[i];
            s.push_str(&format!(" {:?} {:?} {:?}", n.x, n.y, n.z));
        }
        s.push('\n');
    }
    fs::write(path, s)
}
