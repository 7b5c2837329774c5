//! Binary little-endian PLY for checkpoints and point clouds.
//!
//! Checkpoints store one vertex per primitive with the raw parameters as
//! `double` properties: `x y z`, `scale_0..2` (log-scales), `rot_0..3`
//! (w, x, y, z), `opacity` (logit) and `f_dc_0..2` (raw colors). Note that
//! `f_dc_*` here are sigmoid pre-activations, not SH coefficients. The
//! reader also accepts `float` properties and ignores unknown ones.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;

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
    fn parse(name: &str) -> Option<Self> {
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

    fn read(self, b: &[u8]) -> f64 {
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

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, Scalar)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.properties.iter().map(|(_, t)| t.size()).sum()
    }
}

/// Vertex table read from a PLY file: property names and row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexTable {
    pub names: Vec<String>,
    pub types_are_u8: Vec<bool>,
    pub rows: usize,
    pub values: Vec<f64>,
}

impl VertexTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, row: usize, column: usize) -> f64 {
        self.values[row * self.names.len() + column]
    }

    /// Column indices for `names`, or a load error listing every absent one.
    pub fn require(&self, names: &[&str], path: &Path) -> Result<Vec<usize>> {
        let missing: Vec<&str> = names.iter().copied().filter(|n| self.column(n).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::load(path, format!("missing vertex properties: {}", missing.join(", "))));
        }
        Ok(names.iter().map(|n| self.column(n).unwrap()).collect())
    }
}

fn read_header<R: BufRead>(r: &mut R, path: &Path) -> Result<Vec<Element>> {
    let mut line = String::new();
    let mut next = |r: &mut R| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::load(path, "unexpected end of PLY header"));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next(r)? != "ply" {
        return Err(Error::load(path, "not a PLY file (missing `ply` magic)"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    loop {
        let l = next(r)?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", _] => format_ok = true,
            ["format", other, _] => {
                return Err(Error::load(path, format!("unsupported PLY format `{other}`")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::load(path, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", ..] => {
                let el = elements.last().map(|e| e.name.as_str()).unwrap_or("?");
                return Err(Error::load(path, format!("list property in element `{el}` is not supported")));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| Error::load(path, format!("unknown property type `{ty}`")))?;
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::load(path, "property before any element"))?;
                el.properties.push((name.to_string(), ty));
            }
            _ => return Err(Error::load(path, format!("malformed PLY header line `{l}`"))),
        }
    }
    if !format_ok {
        return Err(Error::load(path, "PLY header has no format line"));
    }
    Ok(elements)
}

/// Reads the `vertex` element of a binary little-endian PLY stream.
pub fn read_vertices<R: BufRead>(mut r: R, path: &Path) -> Result<VertexTable> {
    let elements = read_header(&mut r, path)?;
    for el in &elements {
        let mut buf = vec![0u8; el.stride()];
        if el.name != "vertex" {
            for _ in 0..el.count {
                r.read_exact(&mut buf)
                    .map_err(|e| Error::load(path, format!("truncated element `{}`: {e}", el.name)))?;
            }
            continue;
        }
        let width = el.properties.len();
        let mut values = Vec::with_capacity(el.count * width);
        for row in 0..el.count {
            r.read_exact(&mut buf)
                .map_err(|e| Error::load(path, format!("truncated vertex data at row {row}: {e}")))?;
            let mut off = 0;
            for (_, ty) in &el.properties {
                values.push(ty.read(&buf[off..]));
                off += ty.size();
            }
        }
        return Ok(VertexTable {
            names: el.properties.iter().map(|(n, _)| n.clone()).collect(),
            types_are_u8: el.properties.iter().map(|(_, t)| *t == Scalar::U8).collect(),
            rows: el.count,
            values,
        });
    }
    Err(Error::load(path, "PLY file has no `vertex` element"))
}

const CHECKPOINT_PROPERTIES: [&str; 14] = [
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity", "f_dc_0", "f_dc_1",
    "f_dc_2",
];

fn write_header<W: Write>(w: &mut W, count: usize, properties: &[(&str, &str)]) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {count}")?;
    for (ty, name) in properties {
        writeln!(w, "property {ty} {name}")?;
    }
    writeln!(w, "end_header")?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(cloud: &GaussianCloud, mut w: W) -> Result<()> {
    let props: Vec<(&str, &str)> = CHECKPOINT_PROPERTIES.iter().map(|n| ("double", *n)).collect();
    write_header(&mut w, cloud.len(), &props)?;
    for i in 0..cloud.len() {
        let row = cloud.positions[i]
            .iter()
            .chain(&cloud.log_scales[i])
            .chain(&cloud.rotations[i])
            .chain(std::iter::once(&cloud.opacity_logits[i]))
            .chain(&cloud.colors_raw[i]);
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(r: R, path: &Path) -> Result<GaussianCloud> {
    let t = read_vertices(r, path)?;
    let c = t.require(&CHECKPOINT_PROPERTIES, path)?;
    let mut cloud = GaussianCloud::with_capacity(t.rows);
    for i in 0..t.rows {
        let g = |k: usize| t.get(i, c[k]);
        cloud.push_raw(
            [g(0), g(1), g(2)],
            [g(3), g(4), g(5)],
            [g(6), g(7), g(8), g(9)],
            g(10),
            [g(11), g(12), g(13)],
        );
    }
    Ok(cloud)
}

pub fn save_checkpoint(cloud: &GaussianCloud, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path.as_ref())?;
    write_checkpoint(cloud, BufWriter::new(f))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::load(path, e.to_string()))?;
    read_checkpoint(BufReader::new(f), path)
}

/// Writes a point cloud with `double` coordinates and `uchar` colors.
pub fn save_points(points: &[[f64; 3]], colors: &[[f64; 3]], path: impl AsRef<Path>) -> Result<()> {
    if points.len() != colors.len() {
        return Err(Error::validation("points and colors differ in length"));
    }
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    let props = [
        ("double", "x"),
        ("double", "y"),
        ("double", "z"),
        ("uchar", "red"),
        ("uchar", "green"),
        ("uchar", "blue"),
    ];
    write_header(&mut w, points.len(), &props)?;
    for (p, c) in points.iter().zip(colors) {
        for v in p {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in c {
            w.write_all(&[(v.clamp(0.0, 1.0) * 255.0).round() as u8])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `x y z` and optional `red green blue` (as `uchar` in 0..=255 or
/// floating point in [0, 1]); missing colors default to mid-gray.
pub fn load_points(path: impl AsRef<Path>) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::load(path, e.to_string()))?;
    let t = read_vertices(BufReader::new(f), path)?;
    let xyz = t.require(&["x", "y", "z"], path)?;
    let rgb: Option<Vec<usize>> = ["red", "green", "blue"].iter().map(|n| t.column(n)).collect();
    let mut points = Vec::with_capacity(t.rows);
    let mut colors = Vec::with_capacity(t.rows);
    for i in 0..t.rows {
        points.push([t.get(i, xyz[0]), t.get(i, xyz[1]), t.get(i, xyz[2])]);
        colors.push(match &rgb {
            Some(c) => std::array::from_fn(|k| {
                let v = t.get(i, c[k]);
                if t.types_are_u8[c[k]] {
                    v / 255.0
                } else {
                    v
                }
            }),
            None => [0.5; 3],
        });
    }
    Ok((points, colors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GaussianCloud {
        let mut c = GaussianCloud::new();
        c.push_raw([0.1, -2.0, 3.5], [-1.0, -2.0, 0.3], [0.9, 0.1, -0.2, 0.3], -4.2, [0.0, 1.5, -7.25]);
        c.push_raw([1e-300, f64::MAX, -0.0], [0.0; 3], [1.0, 0.0, 0.0, 0.0], 13.0, [2.0; 3]);
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let mut buf = Vec::new();
        write_checkpoint(&c, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.positions[1][2].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn empty_cloud() {
        let mut buf = Vec::new();
        write_checkpoint(&GaussianCloud::new(), &mut buf).unwrap();
        let text = String::from_utf8_lossy(&buf);
        assert!(text.contains("element vertex 0"));
        assert!(read_checkpoint(buf.as_slice(), Path::new("mem")).unwrap().is_empty());
    }

    #[test]
    fn missing_properties_are_listed() {
        let mut buf = Vec::new();
        let props: Vec<(&str, &str)> = CHECKPOINT_PROPERTIES
            .iter()
            .filter(|n| **n != "opacity" && **n != "rot_3")
            .map(|n| ("float", *n))
            .collect();
        write_header(&mut buf, 0, &props).unwrap();
        let err = read_checkpoint(buf.as_slice(), Path::new("bad.ply")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("opacity") && msg.contains("rot_3") && msg.contains("bad.ply"), "{msg}");
    }

    #[test]
    fn float_properties_and_extras_are_accepted() {
        let mut buf = Vec::new();
        let mut props: Vec<(&str, &str)> = vec![("float", "nx")];
        props.extend(CHECKPOINT_PROPERTIES.iter().map(|n| ("float", *n)));
        write_header(&mut buf, 1, &props).unwrap();
        for k in 0..15 {
            buf.extend_from_slice(&(k as f32 * 0.5).to_le_bytes());
        }
        let c = read_checkpoint(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(c.positions[0], [0.5, 1.0, 1.5]);
        assert_eq!(c.colors_raw[0], [6.0, 6.5, 7.0]);
    }

    #[test]
    fn malformed_headers() {
        assert!(read_checkpoint(&b"plx\n"[..], Path::new("m")).is_err());
        assert!(read_checkpoint(&b"ply\nformat ascii 1.0\nend_header\n"[..], Path::new("m")).is_err());
        assert!(read_checkpoint(&b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\n"[..], Path::new("m")).is_err());
        let truncated = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\nend_header\n\0\0";
        assert!(read_vertices(&truncated[..], Path::new("m")).is_err());
    }
}
