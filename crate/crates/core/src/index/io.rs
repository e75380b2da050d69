//! Index persistence.
//!
//! Layout, all little-endian: magic "T2VI", version u32, backend u8
//! (0 exact, 1 graph), layout u8 (0 full, 1 asymmetric), n u64, dim u32,
//! params (degree u32, ef_construction u32, ef_search u32, seed u64),
//! then the n×dim f32 vectors; graph backends append entry point u32,
//! max level u32, and per node a u32 level count followed by each
//! level's u32 neighbor count and ids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::index::hnsw::HnswGraph;
use crate::index::{CatalogIndex, CatalogLayout, IndexParams};
use crate::linalg::Mat;

const INDEX_MAGIC: &[u8; 4] = b"T2VI";
const INDEX_VERSION: u32 = 1;

impl CatalogIndex {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path, e);

        w.write_all(INDEX_MAGIC).map_err(io_err)?;
        w.write_u32::<LittleEndian>(INDEX_VERSION).map_err(io_err)?;
        w.write_u8(if self.graph.is_some() { 1 } else { 0 }).map_err(io_err)?;
        w.write_u8(self.layout.tag()).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.len() as u64).map_err(io_err)?;
        w.write_u32::<LittleEndian>(self.dim() as u32).map_err(io_err)?;
        w.write_u32::<LittleEndian>(self.params.graph_degree as u32).map_err(io_err)?;
        w.write_u32::<LittleEndian>(self.params.ef_construction as u32).map_err(io_err)?;
        w.write_u32::<LittleEndian>(self.params.ef_search as u32).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.params.seed).map_err(io_err)?;
        for &x in self.vectors.data() {
            w.write_f32::<LittleEndian>(x).map_err(io_err)?;
        }
        if let Some(graph) = &self.graph {
            w.write_u32::<LittleEndian>(graph.entry_point).map_err(io_err)?;
            w.write_u32::<LittleEndian>(graph.max_level as u32).map_err(io_err)?;
            for node in &graph.links {
                w.write_u32::<LittleEndian>(node.len() as u32).map_err(io_err)?;
                for level in node {
                    w.write_u32::<LittleEndian>(level.len() as u32).map_err(io_err)?;
                    for &nb in level {
                        w.write_u32::<LittleEndian>(nb).map_err(io_err)?;
                    }
                }
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let trunc = |what: &str| Error::Format(format!("index file truncated in {what}"));

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| trunc("magic"))?;
        if &magic != INDEX_MAGIC {
            return Err(Error::Format(format!(
                "bad index magic {magic:?}, expected {INDEX_MAGIC:?}"
            )));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| trunc("header"))?;
        if version != INDEX_VERSION {
            return Err(Error::Format(format!("unsupported index version {version}")));
        }
        let backend_tag = r.read_u8().map_err(|_| trunc("header"))?;
        let layout = CatalogLayout::from_tag(r.read_u8().map_err(|_| trunc("header"))?)?;
        let n = r.read_u64::<LittleEndian>().map_err(|_| trunc("header"))? as usize;
        let dim = r.read_u32::<LittleEndian>().map_err(|_| trunc("header"))? as usize;
        let params = IndexParams {
            graph_degree: r.read_u32::<LittleEndian>().map_err(|_| trunc("params"))? as usize,
            ef_construction: r.read_u32::<LittleEndian>().map_err(|_| trunc("params"))? as usize,
            ef_search: r.read_u32::<LittleEndian>().map_err(|_| trunc("params"))? as usize,
            seed: r.read_u64::<LittleEndian>().map_err(|_| trunc("params"))?,
        };
        if n == 0 || dim == 0 {
            return Err(Error::Format("index with empty catalog or zero dim".into()));
        }

        let mut data = vec![0f32; n * dim];
        r.read_f32_into::<LittleEndian>(&mut data)
            .map_err(|_| trunc("vectors"))?;
        let vectors = Mat::from_vec(n, dim, data);

        let graph = match backend_tag {
            0 => None,
            1 => {
                let entry_point = r.read_u32::<LittleEndian>().map_err(|_| trunc("graph"))?;
                let max_level = r.read_u32::<LittleEndian>().map_err(|_| trunc("graph"))? as usize;
                let mut links = Vec::with_capacity(n);
                for node in 0..n {
                    let level_count = r
                        .read_u32::<LittleEndian>()
                        .map_err(|_| trunc("graph"))? as usize;
                    let mut node_links = Vec::with_capacity(level_count);
                    for _ in 0..level_count {
                        let cnt = r
                            .read_u32::<LittleEndian>()
                            .map_err(|_| trunc("graph"))? as usize;
                        let mut ids = vec![0u32; cnt];
                        r.read_u32_into::<LittleEndian>(&mut ids)
                            .map_err(|_| trunc("graph"))?;
                        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= n) {
                            return Err(Error::Format(format!(
                                "graph link {bad} out of range at node {node}"
                            )));
                        }
                        node_links.push(ids);
                    }
                    links.push(node_links);
                }
                Some(HnswGraph {
                    links,
                    entry_point,
                    max_level,
                })
            }
            other => {
                return Err(Error::Format(format!("unknown backend tag {other}")));
            }
        };

        let mut probe = [0u8; 1];
        if r.read(&mut probe).map_err(|e| Error::io(path, e))? != 0 {
            return Err(Error::Format("trailing data after index payload".into()));
        }

        Ok(CatalogIndex {
            layout,
            vectors,
            graph,
            params,
        })
    }
}
