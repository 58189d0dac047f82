use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path as FsPath;

use super::{Edge, EntityNode, KgError};

pub const TSV_HEADER: [&str; 7] = [
    "src_id",
    "src_name",
    "src_category",
    "relation",
    "dst_id",
    "dst_name",
    "dst_category",
];

/// Immutable in-memory graph with node and incidence indexes. Edges are
/// stored once; traversal treats them as undirected.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    nodes: Vec<EntityNode>,
    index: HashMap<String, usize>,
    edges: Vec<Edge>,
    incidence: Vec<Vec<usize>>,
}

struct RawEdge {
    line: usize,
    src: String,
    relation: String,
    dst: String,
}

#[derive(Default)]
struct Builder {
    defined: BTreeMap<String, (EntityNode, usize)>,
    edges: Vec<RawEdge>,
}

impl Builder {
    fn define(&mut self, line: usize, id: &str, name: &str, category: &str) -> Result<(), KgError> {
        if name.is_empty() {
            return Ok(());
        }
        match self.defined.get(id) {
            Some((existing, first)) if existing.name != name || existing.category != category => {
                Err(KgError::Load {
                    line,
                    message: format!(
                        "node '{id}' redefined as '{name}' ({category}); line {first} defined '{}' ({})",
                        existing.name, existing.category
                    ),
                })
            }
            Some(_) => Ok(()),
            None => {
                self.defined.insert(
                    id.to_string(),
                    (
                        EntityNode {
                            node_id: id.to_string(),
                            name: name.to_string(),
                            category: category.to_string(),
                        },
                        line,
                    ),
                );
                Ok(())
            }
        }
    }

    fn finish(self) -> Result<KnowledgeGraph, KgError> {
        for e in &self.edges {
            for id in [&e.src, &e.dst] {
                if !self.defined.contains_key(id) {
                    return Err(KgError::Load {
                        line: e.line,
                        message: format!("edge endpoint '{id}' is not defined by any line"),
                    });
                }
            }
        }
        let nodes = self.defined.into_values().map(|(n, _)| n).collect();
        let edges = self
            .edges
            .into_iter()
            .map(|e| Edge::new(e.src, e.relation, e.dst))
            .collect();
        Ok(KnowledgeGraph::from_parts(nodes, edges).expect("endpoints checked above"))
    }
}

impl KnowledgeGraph {
    /// Builds a graph from nodes and edges. Repeated edges, including the
    /// same relation listed in the reverse direction, are stored once.
    pub fn from_parts(mut nodes: Vec<EntityNode>, edges: Vec<Edge>) -> Result<Self, KgError> {
        nodes.sort();
        nodes.dedup();
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.node_id.clone(), i).is_some() {
                return Err(KgError::Load {
                    line: 0,
                    message: format!("node '{}' has conflicting definitions", n.node_id),
                });
            }
        }
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut incidence = vec![Vec::new(); nodes.len()];
        for e in edges {
            for id in [&e.src, &e.dst] {
                if !index.contains_key(id) {
                    return Err(KgError::Load {
                        line: 0,
                        message: format!("edge endpoint '{id}' is not a node"),
                    });
                }
            }
            let key = if e.src <= e.dst {
                (e.src.clone(), e.relation.clone(), e.dst.clone())
            } else {
                (e.dst.clone(), e.relation.clone(), e.src.clone())
            };
            if !seen.insert(key) {
                continue;
            }
            let ei = kept.len();
            incidence[index[&e.src]].push(ei);
            if e.dst != e.src {
                incidence[index[&e.dst]].push(ei);
            }
            kept.push(e);
        }
        for list in &mut incidence {
            list.sort_by(|&a, &b| kept[a].cmp(&kept[b]));
        }
        Ok(Self {
            nodes,
            index,
            edges: kept,
            incidence,
        })
    }

    /// Parses the canonical seven-column TSV. A node may be referenced with
    /// empty name and category when another line defines it.
    pub fn load_tsv<R: Read>(reader: R) -> Result<Self, KgError> {
        let mut builder = Builder::default();
        let mut saw_header = false;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if !saw_header {
                if cols != TSV_HEADER {
                    return Err(KgError::Load {
                        line: lineno,
                        message: format!("expected header '{}'", TSV_HEADER.join("\\t")),
                    });
                }
                saw_header = true;
                continue;
            }
            if cols.len() != 7 {
                return Err(KgError::Load {
                    line: lineno,
                    message: format!("expected 7 tab-separated columns, found {}", cols.len()),
                });
            }
            if cols[0].is_empty() || cols[3].is_empty() || cols[4].is_empty() {
                return Err(KgError::Load {
                    line: lineno,
                    message: "src_id, relation and dst_id are required".into(),
                });
            }
            builder.define(lineno, cols[0], cols[1], cols[2])?;
            builder.define(lineno, cols[4], cols[5], cols[6])?;
            builder.edges.push(RawEdge {
                line: lineno,
                src: cols[0].into(),
                relation: cols[3].into(),
                dst: cols[4].into(),
            });
        }
        builder.finish()
    }

    pub fn load_tsv_path(path: impl AsRef<FsPath>) -> Result<Self, KgError> {
        Self::load_tsv(File::open(path)?)
    }

    /// Imports a PrimeKG-style CSV (`relation, x_id, x_type, x_name, y_id,
    /// y_type, y_name`, extra columns ignored). When `x_source`/`y_source`
    /// columns exist, node ids become `<source>:<id>` since raw ids are
    /// only unique within a source vocabulary.
    pub fn import_primekg<R: Read>(reader: R) -> Result<Self, KgError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| KgError::Load {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let required = ["relation", "x_id", "x_type", "x_name", "y_id", "y_type", "y_name"];
        let mut idx = HashMap::new();
        for name in required {
            let i = col(name).ok_or_else(|| KgError::Load {
                line: 1,
                message: format!("missing column '{name}'"),
            })?;
            idx.insert(name, i);
        }
        let (xs, ys) = (col("x_source"), col("y_source"));
        let mut builder = Builder::default();
        for (i, rec) in rdr.records().enumerate() {
            let lineno = i + 2;
            let rec = rec.map_err(|e| KgError::Load {
                line: lineno,
                message: e.to_string(),
            })?;
            let get = |name: &str| rec.get(idx[name]).unwrap_or("").trim();
            let qualify = |id: &str, src: Option<usize>| match src.and_then(|s| rec.get(s)) {
                Some(s) if !s.trim().is_empty() => format!("{}:{id}", s.trim()),
                _ => id.to_string(),
            };
            let x = qualify(get("x_id"), xs);
            let y = qualify(get("y_id"), ys);
            builder.define(lineno, &x, get("x_name"), get("x_type"))?;
            builder.define(lineno, &y, get("y_name"), get("y_type"))?;
            builder.edges.push(RawEdge {
                line: lineno,
                src: x,
                relation: get("relation").to_string(),
                dst: y,
            });
        }
        builder.finish()
    }

    pub fn import_primekg_path(path: impl AsRef<FsPath>) -> Result<Self, KgError> {
        Self::import_primekg(File::open(path)?)
    }

    /// Writes the canonical TSV, fully defining both endpoints on each line.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<(), KgError> {
        writeln!(out, "{}", TSV_HEADER.join("\t"))?;
        for e in &self.edges {
            let s = self.node(&e.src).expect("indexed");
            let d = self.node(&e.dst).expect("indexed");
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.node_id, s.name, s.category, e.relation, d.node_id, d.name, d.category
            )?;
        }
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&EntityNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Nodes sorted by id.
    pub fn nodes(&self) -> &[EntityNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges touching `id`, ordered by (src, relation, dst).
    pub fn incident(&self, id: &str) -> impl Iterator<Item = &Edge> + '_ {
        let list = self.index.get(id).map(|&i| self.incidence[i].as_slice()).unwrap_or(&[]);
        list.iter().map(move |&ei| &self.edges[ei])
    }

    pub fn find_by_name(&self, name: &str) -> Option<&EntityNode> {
        self.nodes.iter().find(|n| n.name == name)
    }
}
