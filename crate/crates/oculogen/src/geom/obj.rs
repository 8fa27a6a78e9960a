use std::io::{self, Write};

use super::mesh::TriMesh;
use super::vec::Vec3;

/// Wavefront OBJ writer for debug dumps of the assembled geometry.
///
/// Each mesh becomes an `o` object; polylines (eyelash fibers) are emitted as
/// `l` records. Indices in OBJ are 1-based and shared across objects.
pub struct ObjWriter<W: Write> {
    out: W,
    vertex_base: usize,
    uv_base: usize,
    normal_base: usize,
}

impl<W: Write> ObjWriter<W> {
    pub fn new(mut out: W) -> io::Result<ObjWriter<W>> {
        writeln!(out, "# oculogen geometry dump")?;
        Ok(ObjWriter { out, vertex_base: 0, uv_base: 0, normal_base: 0 })
    }

    pub fn write_mesh(&mut self, name: &str, mesh: &TriMesh) -> io::Result<()> {
        writeln!(self.out, "o {name}")?;
        for v in &mesh.vertices {
            writeln!(self.out, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for uv in &mesh.uvs {
            writeln!(self.out, "vt {} {}", uv[0], uv[1])?;
        }
        for n in &mesh.normals {
            writeln!(self.out, "vn {} {} {}", n.x, n.y, n.z)?;
        }
        let has_uv = !mesh.uvs.is_empty();
        let has_n = !mesh.normals.is_empty();
        for &[a, b, c] in &mesh.faces {
            let idx = |i: u32| {
                let v = self.vertex_base + i as usize + 1;
                match (has_uv, has_n) {
                    (true, true) => format!("{v}/{}/{}", self.uv_base + i as usize + 1, self.normal_base + i as usize + 1),
                    (true, false) => format!("{v}/{}", self.uv_base + i as usize + 1),
                    (false, true) => format!("{v}//{}", self.normal_base + i as usize + 1),
                    (false, false) => format!("{v}"),
                }
            };
            writeln!(self.out, "f {} {} {}", idx(a), idx(b), idx(c))?;
        }
        self.vertex_base += mesh.vertices.len();
        self.uv_base += mesh.uvs.len();
        self.normal_base += mesh.normals.len();
        Ok(())
    }

    /// Emit a set of polylines as one object of `l` records.
    pub fn write_polylines(&mut self, name: &str, lines: &[Vec<Vec3>]) -> io::Result<()> {
        writeln!(self.out, "o {name}")?;
        for line in lines {
            for p in line {
                writeln!(self.out, "v {} {} {}", p.x, p.y, p.z)?;
            }
        }
        let mut idx = self.vertex_base + 1;
        for line in lines {
            if line.len() < 2 {
                idx += line.len();
                continue;
            }
            write!(self.out, "l")?;
            for _ in line {
                write!(self.out, " {idx}")?;
                idx += 1;
            }
            writeln!(self.out)?;
        }
        self.vertex_base += lines.iter().map(Vec::len).sum::<usize>();
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
