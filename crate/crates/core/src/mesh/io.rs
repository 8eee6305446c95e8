//! Binary cluster files and the text scene manifest.
//!
//! Cluster file, little-endian:
//!
//! ```text
//! "UVM1" | u32 version=1 | u32 vertices | u32 tets | u32 pyrs | u32 wedges | u32 hexes
//!        | u32 fields | u32 timesteps
//! positions       f64 x 3 per vertex
//! element ids     u32, VTK order, tets then pyramids then wedges then hexes
//! scalars         f32 per vertex, one block per (field, timestep), field-major
//! ```
//!
//! The manifest has one `<rank> <path>` line per cluster; the cluster id is
//! the line's position among non-empty lines. Relative paths resolve against
//! the manifest's directory.

use super::{Cluster, ElementKind, Mesh, MeshError, ScalarFields};
use crate::geom::Vec3;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"UVM1";
const VERSION: u32 = 1;

pub fn write_mesh<W: Write>(mesh: &Mesh, mut w: W) -> Result<(), MeshError> {
    w.write_all(MAGIC)?;
    let counts = mesh.counts();
    let header = [
        VERSION,
        mesh.positions.len() as u32,
        counts[0] as u32,
        counts[1] as u32,
        counts[2] as u32,
        counts[3] as u32,
        mesh.fields.field_count() as u32,
        mesh.fields.timestep_count() as u32,
    ];
    for h in header {
        w.write_all(&h.to_le_bytes())?;
    }
    for p in &mesh.positions {
        for c in p.iter() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    for kind in ElementKind::ALL {
        for id in &mesh.indices[kind as usize] {
            w.write_all(&id.to_le_bytes())?;
        }
    }
    for block in mesh.fields.blocks() {
        for s in block {
            w.write_all(&s.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N], MeshError> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => {
                    MeshError::Format(format!("truncated {what} section"))
                }
                _ => MeshError::Io(e),
            })?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32, MeshError> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }
}

pub fn read_mesh<R: Read>(r: R) -> Result<Mesh, MeshError> {
    let mut r = Reader { inner: r };
    let magic: [u8; 4] = r.bytes("header")?;
    if &magic != MAGIC {
        return Err(MeshError::Format(format!("magic mismatch: {magic:?}")));
    }
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(MeshError::Format(format!("unsupported version {version}")));
    }
    let nv = r.u32("header")? as usize;
    let mut counts = [0usize; 4];
    for c in counts.iter_mut() {
        *c = r.u32("header")? as usize;
    }
    let nf = r.u32("header")? as usize;
    let nt = r.u32("header")? as usize;

    let mut positions = Vec::with_capacity(nv.min(1 << 24));
    for _ in 0..nv {
        let mut p = Vec3::zeros();
        for a in 0..3 {
            p[a] = f64::from_le_bytes(r.bytes("positions")?);
        }
        positions.push(p);
    }
    let mut indices: [Vec<u32>; 4] = Default::default();
    for kind in ElementKind::ALL {
        let n = counts[kind as usize] * kind.vertex_count();
        let v = &mut indices[kind as usize];
        v.reserve(n.min(1 << 24));
        for _ in 0..n {
            v.push(r.u32("element")?);
        }
    }
    let mut blocks = Vec::with_capacity(nf * nt);
    for _ in 0..nf * nt {
        let mut b = Vec::with_capacity(nv.min(1 << 24));
        for _ in 0..nv {
            b.push(f32::from_le_bytes(r.bytes("scalar")?));
        }
        blocks.push(b);
    }
    let mesh = Mesh {
        positions,
        indices,
        fields: ScalarFields::new(nf, nt, blocks),
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn save_cluster(cluster: &Cluster, path: &Path) -> Result<(), MeshError> {
    write_mesh(&cluster.mesh, BufWriter::new(File::create(path)?))
}

pub fn load_cluster(path: &Path, id: u32, rank: u32) -> Result<Cluster, MeshError> {
    let mesh = read_mesh(BufReader::new(File::open(path)?))?;
    Ok(Cluster { id, rank, mesh })
}

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneEntry {
    pub rank: u32,
    pub path: PathBuf,
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<SceneEntry>, MeshError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let mut it = line.splitn(2, char::is_whitespace);
            let rank = it
                .next()
                .and_then(|r| r.parse::<u32>().ok())
                .ok_or_else(|| MeshError::Format(format!("bad manifest line: {line:?}")))?;
            let p = it
                .next()
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .ok_or_else(|| {
                    MeshError::Format(format!("manifest line without path: {line:?}"))
                })?;
            let path = Path::new(p);
            let path = if path.is_absolute() {
                path.to_path_buf()
            } else {
                base.join(path)
            };
            Ok(SceneEntry { rank, path })
        })
        .collect()
}

pub fn load_scene(manifest: &Path) -> Result<Vec<Cluster>, MeshError> {
    let text = std::fs::read_to_string(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base)?
        .into_iter()
        .enumerate()
        .map(|(id, e)| load_cluster(&e.path, id as u32, e.rank))
        .collect()
}

/// Writes `cluster_<id>.uvm` files plus `scene.txt` into `dir`; returns the manifest path.
pub fn save_scene(clusters: &[Cluster], dir: &Path) -> Result<PathBuf, MeshError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let mut sorted: Vec<&Cluster> = clusters.iter().collect();
    sorted.sort_by_key(|c| c.id);
    for c in sorted {
        let name = format!("cluster_{}.uvm", c.id);
        save_cluster(c, &dir.join(&name))?;
        manifest.push_str(&format!("{} {}\n", c.rank, name));
    }
    let path = dir.join("scene.txt");
    std::fs::write(&path, manifest)?;
    Ok(path)
}
