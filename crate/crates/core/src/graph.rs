//! Workload dataflow graphs: kernels connected by single-producer,
//! single-consumer tensors.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sharding::default_scheme_ids;

pub const DEFAULT_ELEMENT_SIZE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Gemm,
    AttentionScore,
    Softmax,
    Elementwise,
    EmbeddingLookup,
    FftStage,
    LuStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub id: usize,
    pub name: String,
    pub kind: KernelKind,
    /// Floating-point operations of one forward execution.
    pub flop: f64,
    /// (M, K, N) with any batch dimension folded into M.
    pub gemm_dims: Option<(u64, u64, u64)>,
    pub scheme_ids: Vec<String>,
    /// Parameters resident in DRAM, bytes.
    pub weight_bytes: f64,
    /// Size of the full logical output, bytes.
    pub output_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub id: usize,
    pub src: usize,
    pub dst: usize,
    pub bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataflowGraph {
    pub name: String,
    pub kernels: Vec<Kernel>,
    pub tensors: Vec<Tensor>,
    pub element_size: f64,
}

impl DataflowGraph {
    pub fn n(&self) -> usize {
        self.kernels.len()
    }

    pub fn m(&self) -> usize {
        self.tensors.len()
    }

    pub fn total_flop(&self) -> f64 {
        self.kernels.iter().map(|k| k.flop).sum()
    }

    pub fn kernel_by_name(&self, name: &str) -> Option<&Kernel> {
        self.kernels.iter().find(|k| k.name == name)
    }

    pub fn topological_order(&self) -> Result<Vec<usize>> {
        topo_sort(self.n(), self.tensors.iter().map(|t| (t.src, t.dst)))
            .map_err(|k| Error::Validation(format!("cycle through kernel {} ({})", k, self.kernels[k].name)))
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        for k in &self.kernels {
            if let (KernelKind::Gemm, Some((m, kk, n))) = (k.kind, k.gemm_dims) {
                let expected = gemm_flop(m, kk, n);
                if (k.flop - expected).abs() > 1e-9 * expected.max(1.0) {
                    return Err(Error::Validation(format!(
                        "kernel {}: gemm flop {} differs from 2*M*K*N = {expected}",
                        k.name, k.flop
                    )));
                }
            }
        }
        Ok(())
    }

    /// Everything `validate` checks except FLOP matching the GEMM shape,
    /// which no longer holds once work is scaled per chip and per pass.
    pub fn validate_structure(&self) -> Result<()> {
        for (i, k) in self.kernels.iter().enumerate() {
            if k.id != i {
                return Err(Error::Validation(format!("kernel {} has id {}, expected dense index {i}", k.name, k.id)));
            }
            if !(k.flop >= 0.0) || !k.flop.is_finite() {
                return Err(Error::Validation(format!("kernel {}: flop must be >= 0, got {}", k.name, k.flop)));
            }
            if k.weight_bytes < 0.0 || k.output_bytes < 0.0 {
                return Err(Error::Validation(format!("kernel {}: negative byte count", k.name)));
            }
            crate::sharding::kernel_schemes(k)?;
        }
        for (j, t) in self.tensors.iter().enumerate() {
            if t.id != j {
                return Err(Error::Validation(format!("tensor {j} has id {}", t.id)));
            }
            for end in [t.src, t.dst] {
                if end >= self.n() {
                    return Err(Error::Validation(format!(
                        "dangling endpoint: tensor {j} references kernel {end} of {}",
                        self.n()
                    )));
                }
            }
            if t.src == t.dst {
                return Err(Error::Validation(format!("tensor {j} is a self-loop on kernel {}", t.src)));
            }
            if !(t.bytes > 0.0) || !t.bytes.is_finite() {
                return Err(Error::Validation(format!("nonpositive size: tensor {j} has {} bytes", t.bytes)));
            }
        }
        self.topological_order().map(|_| ())
    }

    /// Subgraph induced by `kernels` (in the given order). Tensors with both
    /// endpoints inside are kept; ids are re-densified. Returns the graph and
    /// the original id of every retained tensor.
    pub fn induced(&self, kernels: &[usize]) -> (DataflowGraph, Vec<usize>) {
        let mut local = vec![usize::MAX; self.n()];
        for (i, &k) in kernels.iter().enumerate() {
            local[k] = i;
        }
        let kernels_out = kernels
            .iter()
            .enumerate()
            .map(|(i, &k)| Kernel { id: i, ..self.kernels[k].clone() })
            .collect();
        let mut tensors = Vec::new();
        let mut origin = Vec::new();
        for t in &self.tensors {
            if local[t.src] != usize::MAX && local[t.dst] != usize::MAX {
                tensors.push(Tensor { id: tensors.len(), src: local[t.src], dst: local[t.dst], bytes: t.bytes });
                origin.push(t.id);
            }
        }
        (
            DataflowGraph { name: self.name.clone(), kernels: kernels_out, tensors, element_size: self.element_size },
            origin,
        )
    }
}

/// Kahn's algorithm; on failure returns a kernel that lies on a cycle.
pub(crate) fn topo_sort(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> std::result::Result<Vec<usize>, usize> {
    let mut indeg = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for (s, d) in edges {
        out[s].push(d);
        indeg[d] += 1;
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&k| indeg[k] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(k) = queue.pop_front() {
        order.push(k);
        for &d in &out[k] {
            indeg[d] -= 1;
            if indeg[d] == 0 {
                queue.push_back(d);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&k| indeg[k] > 0).unwrap_or(0))
    }
}

pub fn gemm_flop(m: u64, k: u64, n: u64) -> f64 {
    (2u128 * m as u128 * k as u128 * n as u128) as f64
}

/// An edge that may feed several consumers, as written in workload files.
#[derive(Debug, Clone, PartialEq)]
pub struct FanoutEdge {
    pub src: usize,
    pub dsts: Vec<usize>,
    pub bytes: f64,
}

/// A graph whose edges may still have multiple consumers.
#[derive(Debug, Clone, PartialEq)]
pub struct FanoutGraph {
    pub name: String,
    pub kernels: Vec<Kernel>,
    pub edges: Vec<FanoutEdge>,
    pub element_size: f64,
}

/// Replicates every multi-consumer edge into one tensor per consumer.
pub fn normalize_fanout(g: FanoutGraph) -> FanoutGraph {
    let edges = g
        .edges
        .into_iter()
        .flat_map(|e| {
            let FanoutEdge { src, dsts, bytes } = e;
            dsts.into_iter().map(move |d| FanoutEdge { src, dsts: vec![d], bytes })
        })
        .collect();
    FanoutGraph { edges, ..g }
}

impl FanoutGraph {
    /// Normalizes fan-out and validates the result.
    pub fn into_graph(self) -> Result<DataflowGraph> {
        let g = normalize_fanout(self);
        let tensors = g
            .edges
            .iter()
            .enumerate()
            .map(|(j, e)| Tensor { id: j, src: e.src, dst: e.dsts[0], bytes: e.bytes })
            .collect();
        let graph = DataflowGraph { name: g.name, kernels: g.kernels, tensors, element_size: g.element_size };
        graph.validate()?;
        Ok(graph)
    }
}

impl From<&DataflowGraph> for FanoutGraph {
    fn from(g: &DataflowGraph) -> Self {
        FanoutGraph {
            name: g.name.clone(),
            kernels: g.kernels.clone(),
            edges: g.tensors.iter().map(|t| FanoutEdge { src: t.src, dsts: vec![t.dst], bytes: t.bytes }).collect(),
            element_size: g.element_size,
        }
    }
}

// ---------------------------------------------------------------------------
// Workload file format

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub element_size: Option<f64>,
    pub kernels: Vec<KernelEntry>,
    #[serde(default)]
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelEntry {
    pub name: String,
    pub kind: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gemm_dims: Option<(u64, u64, u64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_bytes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_bytes: Option<f64>,
}

/// Kernel reference by dense index or by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Consumers {
    One(KernelRef),
    Many(Vec<KernelRef>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub src: KernelRef,
    pub dst: Consumers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<f64>,
}

fn resolve_ref(r: &KernelRef, names: &BTreeMap<&str, usize>, what: &str) -> Result<usize> {
    match r {
        KernelRef::Index(i) => Ok(*i),
        KernelRef::Name(n) => names
            .get(n.as_str())
            .copied()
            .ok_or_else(|| Error::Validation(format!("dangling endpoint: {what} references unknown kernel `{n}`"))),
    }
}

impl WorkloadFile {
    pub fn into_fanout(self) -> Result<FanoutGraph> {
        let es = self.element_size.unwrap_or(DEFAULT_ELEMENT_SIZE);
        if !(es > 0.0) {
            return Err(Error::Validation(format!("element_size must be > 0, got {es}")));
        }
        let names: BTreeMap<&str, usize> = self.kernels.iter().enumerate().map(|(i, k)| (k.name.as_str(), i)).collect();
        if names.len() != self.kernels.len() {
            return Err(Error::Validation("kernel names must be unique".into()));
        }

        let mut edges = Vec::with_capacity(self.tensors.len());
        for (j, t) in self.tensors.iter().enumerate() {
            let what = format!("tensor {j}");
            let src = resolve_ref(&t.src, &names, &what)?;
            let dsts = match &t.dst {
                Consumers::One(r) => vec![resolve_ref(r, &names, &what)?],
                Consumers::Many(v) => v.iter().map(|r| resolve_ref(r, &names, &what)).collect::<Result<_>>()?,
            };
            if dsts.is_empty() {
                return Err(Error::Validation(format!("{what} has no consumer")));
            }
            let bytes = match (t.bytes, t.elements) {
                (Some(b), None) => b,
                (None, Some(e)) => e * es,
                _ => return Err(Error::Validation(format!("{what}: give exactly one of `bytes` or `elements`"))),
            };
            edges.push(FanoutEdge { src, dsts, bytes });
        }

        let mut kernels = Vec::with_capacity(self.kernels.len());
        for (i, k) in self.kernels.iter().enumerate() {
            let flop = match (k.flop, k.gemm_dims) {
                (Some(f), _) => f,
                (None, Some((m, kk, n))) => gemm_flop(m, kk, n),
                (None, None) => {
                    return Err(Error::Validation(format!("kernel {}: give `flop` or `gemm_dims`", k.name)))
                }
            };
            let output_bytes = k.output_bytes.unwrap_or_else(|| match k.gemm_dims {
                Some((m, _, n)) => (m as f64) * (n as f64) * es,
                None => edges.iter().filter(|e| e.src == i && e.bytes.is_finite()).map(|e| e.bytes).fold(0.0, f64::max),
            });
            kernels.push(Kernel {
                id: i,
                name: k.name.clone(),
                kind: k.kind,
                flop,
                gemm_dims: k.gemm_dims,
                scheme_ids: k.schemes.clone().unwrap_or_else(|| default_scheme_ids(k.kind)),
                weight_bytes: k.weight_bytes.unwrap_or(0.0),
                output_bytes,
            });
        }
        Ok(FanoutGraph { name: self.name.unwrap_or_else(|| "workload".into()), kernels, edges, element_size: es })
    }

    pub fn from_graph(g: &DataflowGraph) -> Self {
        WorkloadFile {
            name: Some(g.name.clone()),
            element_size: Some(g.element_size),
            kernels: g
                .kernels
                .iter()
                .map(|k| KernelEntry {
                    name: k.name.clone(),
                    kind: k.kind,
                    flop: Some(k.flop),
                    gemm_dims: k.gemm_dims,
                    schemes: Some(k.scheme_ids.clone()),
                    weight_bytes: Some(k.weight_bytes),
                    output_bytes: Some(k.output_bytes),
                })
                .collect(),
            tensors: g
                .tensors
                .iter()
                .map(|t| TensorEntry {
                    src: KernelRef::Index(t.src),
                    dst: Consumers::One(KernelRef::Index(t.dst)),
                    bytes: Some(t.bytes),
                    elements: None,
                })
                .collect(),
        }
    }
}

pub fn parse_graph(text: &str) -> Result<DataflowGraph> {
    let file: WorkloadFile =
        serde_json::from_str(text).map_err(|e| Error::Parse { what: "workload".into(), message: e.to_string() })?;
    file.into_fanout()?.into_graph()
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<DataflowGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_graph(&text)
}

pub fn graph_to_json(g: &DataflowGraph) -> String {
    serde_json::to_string_pretty(&WorkloadFile::from_graph(g)).expect("workload serialization is infallible")
}

pub fn save_graph(g: &DataflowGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, graph_to_json(g)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Generators

struct Builder {
    kernels: Vec<Kernel>,
    tensors: Vec<Tensor>,
    es: f64,
}

impl Builder {
    fn new(es: f64) -> Self {
        Builder { kernels: Vec::new(), tensors: Vec::new(), es }
    }

    fn gemm(&mut self, name: &str, kind: KernelKind, m: u64, k: u64, n: u64, weights: f64) -> usize {
        let id = self.kernels.len();
        self.kernels.push(Kernel {
            id,
            name: name.into(),
            kind,
            flop: gemm_flop(m, k, n),
            gemm_dims: Some((m, k, n)),
            scheme_ids: default_scheme_ids(kind),
            weight_bytes: weights,
            output_bytes: m as f64 * n as f64 * self.es,
        });
        id
    }

    fn op(&mut self, name: &str, kind: KernelKind, flop: f64, output_elems: f64, weights: f64) -> usize {
        let id = self.kernels.len();
        self.kernels.push(Kernel {
            id,
            name: name.into(),
            kind,
            flop,
            gemm_dims: None,
            scheme_ids: default_scheme_ids(kind),
            weight_bytes: weights,
            output_bytes: output_elems * self.es,
        });
        id
    }

    fn edge(&mut self, src: usize, dst: usize, elems: f64) {
        let id = self.tensors.len();
        self.tensors.push(Tensor { id, src, dst, bytes: elems * self.es });
    }

    fn finish(self, name: String) -> Result<DataflowGraph> {
        let g = DataflowGraph { name, kernels: self.kernels, tensors: self.tensors, element_size: self.es };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GptParams {
    pub batch: u64,
    pub seq: u64,
    pub hidden: u64,
    pub heads: u64,
    pub ffn_mult: u64,
    pub element_size: f64,
}

impl GptParams {
    pub fn new(batch: u64, seq: u64, hidden: u64, heads: u64, ffn_mult: u64) -> Self {
        GptParams { batch, seq, hidden, heads, ffn_mult, element_size: DEFAULT_ELEMENT_SIZE }
    }
}

pub const GPT_KERNELS: [&str; 10] = ["Q", "K", "V", "MHA1", "Softmax", "MHA2", "Proj", "FFN0", "FFN1", "Add"];

/// One transformer layer: Q/K/V projections, two attention matmuls around a
/// softmax, the output projection, a two-GEMM MLP and the residual add.
pub fn generate_gpt_layer(p: GptParams) -> Result<DataflowGraph> {
    generate_gpt(p, 1)
}

/// `layers` stacked transformer layers, each layer's `Add` feeding the next
/// layer's Q/K/V. Kernel names carry an `L<i>.` prefix when `layers > 1`.
pub fn generate_gpt(p: GptParams, layers: u64) -> Result<DataflowGraph> {
    let GptParams { batch: b, seq: s, hidden: h, heads, ffn_mult, element_size: es } = p;
    if [b, s, h, heads, ffn_mult, layers].contains(&0) {
        return Err(Error::InvalidDimension("all GPT parameters must be >= 1".into()));
    }
    if h % heads != 0 {
        return Err(Error::InvalidDimension(format!("hidden {h} not divisible by heads {heads}")));
    }
    if !(es > 0.0) {
        return Err(Error::InvalidDimension("element size must be > 0".into()));
    }
    let tokens = b * s;
    let act = (tokens * h) as f64;
    let scores = (b * heads) as f64 * (s * s) as f64;
    let ffn = ffn_mult * h;
    let w = |rows: u64, cols: u64| (rows * cols) as f64 * es;

    let mut g = Builder::new(es);
    let mut prev_add = None;
    for layer in 0..layers {
        let name = |k: &str| if layers == 1 { k.to_string() } else { format!("L{layer}.{k}") };
        let q = g.gemm(&name("Q"), KernelKind::Gemm, tokens, h, h, w(h, h));
        let k = g.gemm(&name("K"), KernelKind::Gemm, tokens, h, h, w(h, h));
        let v = g.gemm(&name("V"), KernelKind::Gemm, tokens, h, h, w(h, h));
        // Per head: (s x h/heads) . (h/heads x s); summed over heads this is 2*b*s*s*h.
        let mha1 = g.gemm(&name("MHA1"), KernelKind::AttentionScore, tokens, h, s, 0.0);
        g.kernels[mha1].output_bytes = scores * es;
        let softmax = g.op(&name("Softmax"), KernelKind::Softmax, 5.0 * scores, scores, 0.0);
        let mha2 = g.gemm(&name("MHA2"), KernelKind::AttentionScore, tokens, s, h, 0.0);
        let proj = g.gemm(&name("Proj"), KernelKind::Gemm, tokens, h, h, w(h, h));
        let ffn0 = g.gemm(&name("FFN0"), KernelKind::Gemm, tokens, h, ffn, w(h, ffn));
        let ffn1 = g.gemm(&name("FFN1"), KernelKind::Gemm, tokens, ffn, h, w(ffn, h));
        let add = g.op(&name("Add"), KernelKind::Elementwise, act, act, 0.0);

        if let Some(prev) = prev_add {
            for dst in [q, k, v] {
                g.edge(prev, dst, act);
            }
        }
        g.edge(q, mha1, act);
        g.edge(k, mha1, act);
        g.edge(mha1, softmax, scores);
        g.edge(softmax, mha2, scores);
        g.edge(v, mha2, act);
        g.edge(mha2, proj, act);
        g.edge(proj, ffn0, act);
        g.edge(ffn0, ffn1, (tokens * ffn) as f64);
        g.edge(ffn1, add, act);
        prev_add = Some(add);
    }
    let suffix = if layers == 1 { String::new() } else { format!("_l{layers}") };
    g.finish(format!("gpt_b{b}_s{s}_h{h}{suffix}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadParams {
    Dlrm {
        tables: u64,
        rows_per_table: u64,
        emb_dim: u64,
        batch: u64,
        /// Lookups pooled per sample and table.
        pooling: u64,
        mlp_layers: u64,
        mlp_width: u64,
    },
    Hpl {
        n: u64,
        block: u64,
    },
    Fft {
        points: u64,
        radix: u64,
    },
}

pub fn generate_workload(params: WorkloadParams) -> Result<DataflowGraph> {
    generate_workload_with(params, DEFAULT_ELEMENT_SIZE)
}

pub fn generate_workload_with(params: WorkloadParams, es: f64) -> Result<DataflowGraph> {
    match params {
        WorkloadParams::Dlrm { tables, rows_per_table, emb_dim, batch, pooling, mlp_layers, mlp_width } => {
            if [tables, rows_per_table, emb_dim, batch, pooling, mlp_layers, mlp_width].contains(&0) {
                return Err(Error::InvalidDimension("all DLRM parameters must be >= 1".into()));
            }
            let mut g = Builder::new(es);
            let features = tables + 1;
            let emb_out = (batch * emb_dim) as f64;
            let embs: Vec<usize> = (0..tables)
                .map(|t| {
                    g.op(
                        &format!("Emb{t}"),
                        KernelKind::EmbeddingLookup,
                        (batch * pooling * emb_dim) as f64,
                        emb_out,
                        (rows_per_table * emb_dim) as f64 * es,
                    )
                })
                .collect();
            // Pairwise dot products among the dense feature and every table.
            let inter = g.gemm("Interact", KernelKind::Gemm, batch * features, emb_dim, features, 0.0);
            for e in embs {
                g.edge(e, inter, emb_out);
            }
            let mut prev = inter;
            for l in 0..mlp_layers {
                let k = if l == 0 { features * features } else { mlp_width };
                let mlp = g.gemm(&format!("MLP{l}"), KernelKind::Gemm, batch, k, mlp_width, (k * mlp_width) as f64 * es);
                let elems = if l == 0 { (batch * features * features) as f64 } else { (batch * mlp_width) as f64 };
                g.edge(prev, mlp, elems);
                prev = mlp;
            }
            g.finish(format!("dlrm_t{tables}_b{batch}"))
        }
        WorkloadParams::Hpl { n, block } => {
            if n == 0 || block == 0 || n % block != 0 {
                return Err(Error::InvalidDimension(format!("HPL needs n >= 1 divisible by block, got n={n} block={block}")));
            }
            let mut g = Builder::new(es);
            let steps = n / block;
            let mut prev_update: Option<usize> = None;
            for step in 0..steps {
                let r = n - step * block;
                let panel = g.op(
                    &format!("Panel{step}"),
                    KernelKind::LuStage,
                    hpl_panel_flop(r, block),
                    (r * block) as f64,
                    0.0,
                );
                if let Some(u) = prev_update {
                    g.edge(u, panel, (r * r) as f64);
                }
                if r > block {
                    let rest = r - block;
                    let update = g.gemm(&format!("Update{step}"), KernelKind::Gemm, rest, block, rest, 0.0);
                    g.edge(panel, update, (r * block) as f64);
                    prev_update = Some(update);
                }
            }
            g.finish(format!("hpl_n{n}_nb{block}"))
        }
        WorkloadParams::Fft { points, radix } => {
            if radix < 2 || points < radix {
                return Err(Error::InvalidDimension(format!("FFT needs radix >= 2 and points >= radix, got {points}/{radix}")));
            }
            let mut stages = 0u32;
            let mut rest = points;
            while rest > 1 {
                if rest % radix != 0 {
                    return Err(Error::InvalidDimension(format!("{points} points is not a power of radix {radix}")));
                }
                rest /= radix;
                stages += 1;
            }
            let total = 5.0 * points as f64 * (points as f64).log2();
            // Complex samples: two values per point.
            let elems = 2.0 * points as f64;
            let mut g = Builder::new(es);
            let mut prev = None;
            for s in 0..stages {
                let k = g.op(&format!("Stage{s}"), KernelKind::FftStage, total / stages as f64, elems, 0.0);
                if let Some(p) = prev {
                    g.edge(p, k, elems);
                }
                prev = Some(k);
            }
            g.finish(format!("fft_n{points}_r{radix}"))
        }
    }
}

/// Random DAG of GEMM and elementwise kernels; every kernel after the first
/// has at least one producer among earlier kernels.
pub fn generate_random(kernels: usize, edge_prob: f64, seed: u64) -> Result<DataflowGraph> {
    use rand::{Rng, SeedableRng};
    if kernels == 0 || !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::InvalidDimension(format!("random graph needs kernels >= 1 and edge_prob in [0, 1], got {kernels}/{edge_prob}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut g = Builder::new(DEFAULT_ELEMENT_SIZE);
    for k in 0..kernels {
        let dim = |rng: &mut rand_chacha::ChaCha8Rng| 64 * rng.gen_range(1..=16u64);
        let id = if rng.gen_bool(0.6) {
            let (m, kk, n) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
            g.gemm(&format!("G{k}"), KernelKind::Gemm, m, kk, n, (kk * n) as f64 * DEFAULT_ELEMENT_SIZE)
        } else {
            let elems = (dim(&mut rng) * dim(&mut rng)) as f64;
            g.op(&format!("E{k}"), KernelKind::Elementwise, elems, elems, 0.0)
        };
        if id > 0 {
            let mut any = false;
            for src in 0..id {
                if rng.gen_bool(edge_prob) {
                    g.edge(src, id, g.kernels[src].output_bytes / DEFAULT_ELEMENT_SIZE);
                    any = true;
                }
            }
            if !any {
                let src = rng.gen_range(0..id);
                g.edge(src, id, g.kernels[src].output_bytes / DEFAULT_ELEMENT_SIZE);
            }
        }
    }
    g.finish(format!("random_n{kernels}_s{seed}"))
}

/// Right-looking blocked LU: panel factorization of an r x nb column block
/// plus the triangular solve for the U12 block row.
fn hpl_panel_flop(r: u64, nb: u64) -> f64 {
    let mut flop: u128 = 0;
    for jj in 0..nb {
        let below = (r - jj - 1) as u128;
        let right_in_panel = (nb - jj - 1) as u128;
        flop += below + 2 * below * right_in_panel;
    }
    let trsm = (r - nb) as u128 * nb as u128 * (nb as u128 - 1);
    (flop + trsm) as f64
}
