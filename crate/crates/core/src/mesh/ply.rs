//! Binary little-endian PLY with double-precision vertices.

use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};

pub fn write_ply_bytes(mesh: &TriMesh) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    );
    let mut out = Vec::with_capacity(header.len() + mesh.vertices.len() * 24 + mesh.faces.len() * 13);
    out.extend_from_slice(header.as_bytes());
    for v in &mesh.vertices {
        for c in v {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

pub fn write_mesh(mesh: &TriMesh, path: &Path) -> Result<()> {
    mesh.validate()?;
    std::fs::write(path, write_ply_bytes(mesh)).map_err(|e| Error::io(path, e))
}

pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_ply_bytes(&bytes, path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
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

    fn decode(self, b: &[u8]) -> f64 {
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

enum Property {
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.path, self.pos, format!("unexpected end of file reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn scalar(&mut self, ty: Scalar, what: &str) -> Result<f64> {
        let b = self.take(ty.size(), what)?;
        Ok(ty.decode(b))
    }
}

pub fn read_ply_bytes(bytes: &[u8], path: &Path) -> Result<TriMesh> {
    let (elements, body) = parse_header(bytes, path)?;
    let mut cur = Cursor { bytes, pos: body, path };
    let mut mesh = TriMesh::default();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let axis: Vec<Option<usize>> = el
                    .props
                    .iter()
                    .map(|p| match p {
                        Property::Scalar(n, _) => ["x", "y", "z"].iter().position(|a| a == n),
                        Property::List(..) => None,
                    })
                    .collect();
                for a in 0..3 {
                    if !axis.contains(&Some(a)) {
                        return Err(Error::parse(path, body, "vertex element lacks x, y or z"));
                    }
                }
                mesh.vertices.reserve(el.count);
                for _ in 0..el.count {
                    let mut v = [0.0; 3];
                    for (p, ax) in el.props.iter().zip(&axis) {
                        let val = read_property(&mut cur, p, "vertex")?;
                        if let (Some(a), Some(x)) = (ax, val.first()) {
                            v[*a] = *x;
                        }
                    }
                    mesh.vertices.push(v);
                }
            }
            "face" => {
                mesh.faces.reserve(el.count);
                for _ in 0..el.count {
                    let start = cur.pos;
                    let mut idx = None;
                    for p in &el.props {
                        let vals = read_property(&mut cur, p, "face")?;
                        if matches!(p, Property::List(..)) && idx.is_none() {
                            idx = Some(vals);
                        }
                    }
                    let idx = idx.ok_or_else(|| Error::parse(path, start, "face element has no index list"))?;
                    if idx.len() < 3 {
                        return Err(Error::parse(path, start, format!("face with {} vertices", idx.len())));
                    }
                    // fan-triangulate polygons
                    for k in 1..idx.len() - 1 {
                        let tri = [idx[0], idx[k], idx[k + 1]];
                        if tri.iter().any(|&i| i < 0.0 || i >= mesh.vertices.len() as f64) {
                            return Err(Error::parse(path, start, "face index out of range"));
                        }
                        mesh.faces.push(tri.map(|i| i as u32));
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.props {
                        read_property(&mut cur, p, &el.name)?;
                    }
                }
            }
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

fn read_property(cur: &mut Cursor<'_>, p: &Property, what: &str) -> Result<Vec<f64>> {
    match p {
        Property::Scalar(_, ty) => Ok(vec![cur.scalar(*ty, what)?]),
        Property::List(count_ty, item_ty) => {
            let at = cur.pos;
            let n = cur.scalar(*count_ty, what)?;
            if !(n >= 0.0) {
                return Err(Error::parse(cur.path, at, "negative list length"));
            }
            (0..n as usize).map(|_| cur.scalar(*item_ty, what)).collect()
        }
    }
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<(Vec<Element>, usize)> {
    let mut pos = 0;
    let mut elements: Vec<Element> = Vec::new();
    let mut line_no = 0;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, pos, "unterminated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| Error::parse(path, pos, "header is not valid text"))?
            .trim_end_matches('\r');
        let at = pos;
        pos += end + 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        if line_no == 0 {
            if line != "ply" {
                return Err(Error::parse(path, at, "missing ply magic"));
            }
            line_no += 1;
            continue;
        }
        line_no += 1;
        match words.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::parse(path, at, format!("unsupported format {fmt}")));
                }
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(path, at, format!("bad element count {count}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", ct, it, _] => {
                let (Some(ct), Some(it)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                    return Err(Error::parse(path, at, "unknown list property type"));
                };
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, at, "property before element"))?;
                el.props.push(Property::List(ct, it));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| Error::parse(path, at, format!("unknown type {ty}")))?;
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, at, "property before element"))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            ["end_header"] => return Ok((elements, pos)),
            _ => return Err(Error::parse(path, at, format!("unrecognized header line {line:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triangle() -> TriMesh {
        TriMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            faces: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn single_triangle_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ply");
        write_mesh(&triangle(), &path).unwrap();
        let text = String::from_utf8_lossy(&std::fs::read(&path).unwrap()).to_string();
        assert!(text.contains("element vertex 3\n"));
        assert!(text.contains("element face 1\n"));
        assert_eq!(read_mesh(&path).unwrap(), triangle());
    }

    #[test]
    fn truncated_file_reports_offset() {
        let bytes = write_ply_bytes(&triangle());
        let cut = &bytes[..bytes.len() - 5];
        match read_ply_bytes(cut, Path::new("cut.ply")) {
            Err(Error::Parse { offset, .. }) => assert!(offset > 0 && offset < bytes.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(read_ply_bytes(b"plx\n", Path::new("bad.ply")).is_err());
        assert!(read_ply_bytes(b"", Path::new("empty.ply")).is_err());
    }

    #[test]
    fn float_vertices_and_extra_props() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n".to_vec();
        for v in triangle().vertices {
            for c in v {
                bytes.extend_from_slice(&(c as f32).to_le_bytes());
            }
            bytes.push(200);
        }
        bytes.push(3);
        for i in 0u32..3 {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        assert_eq!(read_ply_bytes(&bytes, Path::new("f.ply")).unwrap(), triangle());
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            verts in proptest::collection::vec(proptest::array::uniform3(-10.0f64..10.0), 3..30),
            picks in proptest::collection::vec(proptest::array::uniform3(0usize..1000), 1..30)
        ) {
            let n = verts.len();
            let mesh = TriMesh {
                faces: picks.iter().map(|p| p.map(|i| (i % n) as u32)).collect(),
                vertices: verts,
            };
            let back = read_ply_bytes(&write_ply_bytes(&mesh), Path::new("p.ply")).unwrap();
            prop_assert_eq!(back, mesh);
        }
    }
}
