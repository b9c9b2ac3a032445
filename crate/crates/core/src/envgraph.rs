//! Environment graph: the DAG whose arcs carry the gate parameters.
//!
//! Vertices are numbered 0..=L. Vertex 0 is the input vertex and has no
//! in-arcs; vertex L is the output vertex, the unique sink, so every maximal
//! path ends there. Each arc (i, j) carries a parameter theta_ij; on graphs
//! bound to a circuit all in-arcs of a vertex j share one value, the gate
//! parameter theta_j of the unitary at j. The side-network algebra works on
//! arbitrary per-arc values, and the shared-value property is validated when
//! a circuit is derived.

use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::qsim::{Circuit, Gate, PauliString};

/// Vertex attributes as they appear in the serialized form. `pauli` is
/// absent on the input vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSpec {
    pub id: usize,
    pub pauli: Option<PauliString>,
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub label: f64,
}

/// Directed arc with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub from: usize,
    pub to: usize,
    pub theta: f64,
}

/// Immutable parameter-carrying DAG. Construct with [`EnvGraph::from_parts`]
/// or [`EnvGraph::chain`]; updates produce new graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvGraph {
    n: usize,
    biases: Vec<f64>,
    labels: Vec<f64>,
    paulis: Vec<Option<PauliString>>,
    thetas: BTreeMap<(usize, usize), f64>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

/// Topological order of the vertices, ties broken by ascending id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoOrder {
    order: Vec<usize>,
    pos: Vec<usize>,
}

impl TopoOrder {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Rank of `v` in the order.
    pub fn position(&self, v: usize) -> Result<usize> {
        self.pos.get(v).copied().ok_or(CoreError::UnknownVertex(v))
    }
}

impl EnvGraph {
    /// Builds and validates a graph from explicit vertex and arc lists.
    ///
    /// Vertex ids must cover 0..=L exactly. Rejected: self-loops, duplicate
    /// arcs, in-arcs of vertex 0, out-arcs of vertex L, sinks other than L,
    /// cycles, non-finite attributes, and a Pauli on vertex 0.
    pub fn from_parts(n: usize, vertices: Vec<VertexSpec>, arcs: Vec<ArcSpec>) -> Result<EnvGraph> {
        if n == 0 {
            return Err(CoreError::InvalidInput("graph needs n >= 1 data wires".into()));
        }
        if vertices.len() < 2 {
            return Err(CoreError::InvalidInput(
                "graph needs an input vertex and at least one unitary".into(),
            ));
        }
        let count = vertices.len();
        let l = count - 1;

        let mut biases = vec![f64::NAN; count];
        let mut labels = vec![f64::NAN; count];
        let mut paulis: Vec<Option<PauliString>> = vec![None; count];
        let mut seen = vec![false; count];
        for v in vertices {
            if v.id >= count {
                return Err(CoreError::UnknownVertex(v.id));
            }
            if seen[v.id] {
                return Err(CoreError::InvalidInput(format!(
                    "duplicate vertex id {}",
                    v.id
                )));
            }
            seen[v.id] = true;
            if !v.bias.is_finite() || !v.label.is_finite() {
                return Err(CoreError::Numeric(format!(
                    "vertex {} has non-finite bias or label",
                    v.id
                )));
            }
            if let Some(p) = &v.pauli {
                if v.id == 0 {
                    return Err(CoreError::InvalidInput(
                        "input vertex 0 cannot carry a Pauli string".into(),
                    ));
                }
                if p.wires() != n + 1 {
                    return Err(CoreError::DimensionMismatch(format!(
                        "vertex {} Pauli spans {} wires, register has {}",
                        v.id,
                        p.wires(),
                        n + 1
                    )));
                }
            }
            biases[v.id] = v.bias;
            labels[v.id] = v.label;
            paulis[v.id] = v.pauli;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(CoreError::MissingVertex(missing));
        }

        let mut thetas = BTreeMap::new();
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); count];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); count];
        for a in &arcs {
            if a.from >= count {
                return Err(CoreError::UnknownVertex(a.from));
            }
            if a.to >= count {
                return Err(CoreError::UnknownVertex(a.to));
            }
            if a.from == a.to {
                return Err(CoreError::InvalidInput(format!(
                    "self-loop on vertex {}",
                    a.from
                )));
            }
            if a.to == 0 {
                return Err(CoreError::InvalidInput(format!(
                    "arc ({}, 0): input vertex cannot have in-arcs",
                    a.from
                )));
            }
            if a.from == l {
                return Err(CoreError::InvalidInput(format!(
                    "arc ({}, {}): output vertex cannot have out-arcs",
                    a.from, a.to
                )));
            }
            if !a.theta.is_finite() {
                return Err(CoreError::Numeric(format!(
                    "arc ({}, {}) has non-finite parameter",
                    a.from, a.to
                )));
            }
            if thetas.insert((a.from, a.to), a.theta).is_some() {
                return Err(CoreError::InvalidInput(format!(
                    "duplicate arc ({}, {})",
                    a.from, a.to
                )));
            }
            parents[a.to].push(a.from);
            children[a.from].push(a.to);
        }
        for v in 0..count {
            parents[v].sort_unstable();
            children[v].sort_unstable();
        }
        for v in 0..l {
            if children[v].is_empty() {
                return Err(CoreError::InvalidInput(format!(
                    "vertex {v} is a sink; only the output vertex {l} may be"
                )));
            }
        }

        let g = EnvGraph {
            n,
            biases,
            labels,
            paulis,
            thetas,
            parents,
            children,
        };
        g.topological_order()?; // rejects cycles, names a cycle vertex
        Ok(g)
    }

    /// Chain graph 0 -> 1 -> ... -> L for a sequential circuit; arc into
    /// vertex k carries `thetas[k-1]`, biases and labels default to zero.
    pub fn chain(n: usize, paulis: Vec<PauliString>, thetas: &[f64]) -> Result<EnvGraph> {
        if paulis.len() != thetas.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} Pauli strings but {} parameters",
                paulis.len(),
                thetas.len()
            )));
        }
        let l = paulis.len();
        let mut vertices = vec![VertexSpec {
            id: 0,
            pauli: None,
            bias: 0.0,
            label: 0.0,
        }];
        for (k, p) in paulis.into_iter().enumerate() {
            vertices.push(VertexSpec {
                id: k + 1,
                pauli: Some(p),
                bias: 0.0,
                label: 0.0,
            });
        }
        let arcs = (1..=l)
            .map(|k| ArcSpec {
                from: k - 1,
                to: k,
                theta: thetas[k - 1],
            })
            .collect();
        EnvGraph::from_parts(n, vertices, arcs)
    }

    pub fn data_wires(&self) -> usize {
        self.n
    }

    /// Number of unitary vertices, L.
    pub fn unitaries(&self) -> usize {
        self.biases.len() - 1
    }

    /// Total vertex count, L + 1.
    pub fn num_vertices(&self) -> usize {
        self.biases.len()
    }

    pub fn arcs(&self) -> impl Iterator<Item = ArcSpec> + '_ {
        self.thetas.iter().map(|(&(from, to), &theta)| ArcSpec { from, to, theta })
    }

    pub fn num_arcs(&self) -> usize {
        self.thetas.len()
    }

    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.thetas.contains_key(&(from, to))
    }

    pub fn theta(&self, from: usize, to: usize) -> Result<f64> {
        self.thetas
            .get(&(from, to))
            .copied()
            .ok_or(CoreError::UnknownArc(from, to))
    }

    pub fn bias(&self, v: usize) -> Result<f64> {
        self.biases.get(v).copied().ok_or(CoreError::UnknownVertex(v))
    }

    pub fn label(&self, v: usize) -> Result<f64> {
        self.labels.get(v).copied().ok_or(CoreError::UnknownVertex(v))
    }

    pub fn pauli(&self, v: usize) -> Result<Option<&PauliString>> {
        self.paulis
            .get(v)
            .map(|p| p.as_ref())
            .ok_or(CoreError::UnknownVertex(v))
    }

    pub fn parents(&self, v: usize) -> Result<&[usize]> {
        self.parents
            .get(v)
            .map(|p| p.as_slice())
            .ok_or(CoreError::UnknownVertex(v))
    }

    pub fn children(&self, v: usize) -> Result<&[usize]> {
        self.children
            .get(v)
            .map(|c| c.as_slice())
            .ok_or(CoreError::UnknownVertex(v))
    }

    /// Kahn's algorithm with an ascending-id tie break, so the order is
    /// unique and deterministic. On a cycle, names one vertex lying on it.
    pub fn topological_order(&self) -> Result<TopoOrder> {
        let count = self.num_vertices();
        let mut indegree: Vec<usize> = (0..count).map(|v| self.parents[v].len()).collect();
        let mut ready: BinaryHeap<Reverse<usize>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(v, _)| Reverse(v))
            .collect();
        let mut order = Vec::with_capacity(count);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if order.len() != count {
            let leftover: HashSet<usize> =
                (0..count).filter(|&v| indegree[v] > 0).collect();
            return Err(CoreError::Cycle(self.find_cycle_vertex(&leftover)));
        }
        let mut pos = vec![0usize; count];
        for (rank, &v) in order.iter().enumerate() {
            pos[v] = rank;
        }
        Ok(TopoOrder { order, pos })
    }

    /// Walks backwards through vertices that still have unresolved in-arcs
    /// until one repeats; that vertex lies on a cycle.
    fn find_cycle_vertex(&self, leftover: &HashSet<usize>) -> usize {
        let start = *leftover.iter().min().expect("leftover set is non-empty");
        let mut visited = HashSet::new();
        let mut cur = start;
        loop {
            if !visited.insert(cur) {
                return cur;
            }
            cur = *self.parents[cur]
                .iter()
                .find(|p| leftover.contains(p))
                .expect("every leftover vertex keeps an unresolved parent");
        }
    }

    /// Shared gate parameter of vertex `v`, derived from its in-arcs.
    /// Fails if `v` has no in-arcs or the in-arcs disagree.
    pub fn vertex_theta(&self, v: usize) -> Result<f64> {
        if v == 0 || v >= self.num_vertices() {
            return Err(CoreError::UnknownVertex(v));
        }
        let ps = &self.parents[v];
        if ps.is_empty() {
            return Err(CoreError::MissingVertex(v));
        }
        let first = self.thetas[&(ps[0], v)];
        for &p in &ps[1..] {
            if self.thetas[&(p, v)] != first {
                return Err(CoreError::ThetaMismatch(v));
            }
        }
        Ok(first)
    }

    /// Per-vertex gate parameters, index 0 unused (zero).
    pub fn vertex_thetas(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.num_vertices()];
        for v in 1..self.num_vertices() {
            out[v] = self.vertex_theta(v)?;
        }
        Ok(out)
    }

    /// New graph with the gate parameter of every vertex replaced:
    /// each in-arc of vertex `v` takes `thetas[v]`. `thetas[0]` is ignored.
    pub fn with_vertex_thetas(&self, thetas: &[f64]) -> Result<EnvGraph> {
        if thetas.len() != self.num_vertices() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} parameters for {} vertices",
                thetas.len(),
                self.num_vertices()
            )));
        }
        for (v, t) in thetas.iter().enumerate().skip(1) {
            if !t.is_finite() {
                return Err(CoreError::Numeric(format!(
                    "parameter for vertex {v} is not finite"
                )));
            }
        }
        let mut g = self.clone();
        for ((_, to), theta) in g.thetas.iter_mut() {
            *theta = thetas[*to];
        }
        Ok(g)
    }

    /// New graph with one arc's parameter replaced, all else shared.
    pub fn with_arc_theta(&self, from: usize, to: usize, theta: f64) -> Result<EnvGraph> {
        if !theta.is_finite() {
            return Err(CoreError::Numeric(format!(
                "arc ({from}, {to}) parameter must be finite"
            )));
        }
        let mut g = self.clone();
        match g.thetas.get_mut(&(from, to)) {
            Some(t) => *t = theta,
            None => return Err(CoreError::UnknownArc(from, to)),
        }
        Ok(g)
    }

    /// Derives the gate sequence: unitary vertices in topological order,
    /// each carrying its Pauli string. Requires a Pauli on every unitary
    /// vertex; parameters come separately from [`EnvGraph::vertex_thetas`].
    pub fn bind_circuit(&self) -> Result<Circuit> {
        let order = self.topological_order()?;
        let mut gates = Vec::with_capacity(self.unitaries());
        for &v in order.order() {
            if v == 0 {
                continue;
            }
            let pauli = self.paulis[v]
                .clone()
                .ok_or(CoreError::MissingVertex(v))?;
            gates.push(Gate { pauli, vertex: v });
        }
        Circuit::new(self.n, gates)
    }

    /// Gate parameters in the same order as [`EnvGraph::bind_circuit`] gates.
    pub fn gate_thetas(&self, circuit: &Circuit) -> Result<Vec<f64>> {
        circuit
            .gates()
            .iter()
            .map(|g| self.vertex_theta(g.vertex))
            .collect()
    }

    /// New graph whose vertex parameters follow the circuit's gate order.
    pub fn with_gate_thetas(&self, circuit: &Circuit, thetas: &[f64]) -> Result<EnvGraph> {
        if thetas.len() != circuit.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} parameters for {} gates",
                thetas.len(),
                circuit.len()
            )));
        }
        let mut per_vertex = self.vertex_thetas()?;
        for (g, &t) in circuit.gates().iter().zip(thetas) {
            per_vertex[g.vertex] = t;
        }
        self.with_vertex_thetas(&per_vertex)
    }

    /// Replaces per-vertex biases; length must be L + 1.
    pub fn with_biases(&self, biases: Vec<f64>) -> Result<EnvGraph> {
        if biases.len() != self.num_vertices() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} biases for {} vertices",
                biases.len(),
                self.num_vertices()
            )));
        }
        if let Some(v) = biases.iter().position(|b| !b.is_finite()) {
            return Err(CoreError::Numeric(format!("bias of vertex {v} is not finite")));
        }
        let mut g = self.clone();
        g.biases = biases;
        Ok(g)
    }

    /// Replaces per-vertex labels; length must be L + 1.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<EnvGraph> {
        if labels.len() != self.num_vertices() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} labels for {} vertices",
                labels.len(),
                self.num_vertices()
            )));
        }
        if let Some(v) = labels.iter().position(|x| !x.is_finite()) {
            return Err(CoreError::Numeric(format!("label of vertex {v} is not finite")));
        }
        let mut g = self.clone();
        g.labels = labels;
        Ok(g)
    }

    /// Constraint residual `sum_v (zeta_v + phi_v) - 2 |V|` for boolean
    /// per-vertex indicators of the transition and output constraints.
    /// Zero exactly when every indicator is satisfied.
    pub fn constraint_residual(
        &self,
        transition_ok: &[bool],
        output_ok: &[bool],
    ) -> Result<i64> {
        let count = self.num_vertices();
        for (name, flags) in [("transition", transition_ok), ("output", output_ok)] {
            if flags.len() < count {
                return Err(CoreError::MissingVertex(flags.len()));
            }
            if flags.len() > count {
                return Err(CoreError::InvalidInput(format!(
                    "{name} indicators cover {} vertices, graph has {count}",
                    flags.len()
                )));
            }
        }
        let satisfied: i64 = transition_ok
            .iter()
            .zip(output_ok)
            .map(|(&z, &p)| i64::from(z) + i64::from(p))
            .sum();
        Ok(satisfied - 2 * count as i64)
    }

    /// A graph is a diffusion machine exactly when the residual vanishes.
    pub fn is_diffusion_machine(
        &self,
        transition_ok: &[bool],
        output_ok: &[bool],
    ) -> Result<bool> {
        Ok(self.constraint_residual(transition_ok, output_ok)? == 0)
    }
}

/// Serialized layout: `{n, vertices, arcs}` with vertices ascending by id
/// and arcs ascending by (from, to). Finite values round-trip bit-exactly.
#[derive(Serialize, Deserialize)]
struct GraphDoc {
    n: usize,
    vertices: Vec<VertexSpec>,
    arcs: Vec<ArcSpec>,
}

impl Serialize for EnvGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let vertices = (0..self.num_vertices())
            .map(|id| VertexSpec {
                id,
                pauli: self.paulis[id].clone(),
                bias: self.biases[id],
                label: self.labels[id],
            })
            .collect();
        GraphDoc {
            n: self.n,
            vertices,
            arcs: self.arcs().collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EnvGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = GraphDoc::deserialize(deserializer)?;
        EnvGraph::from_parts(doc.n, doc.vertices, doc.arcs).map_err(serde::de::Error::custom)
    }
}

/// Chain graph realizing the layered reference circuit, parameters included.
pub fn reference_ansatz(n: usize, layers: usize, thetas: &[f64]) -> Result<EnvGraph> {
    let circuit = crate::qsim::reference_circuit(n, layers)?;
    let paulis = circuit.gates().iter().map(|g| g.pauli.clone()).collect();
    EnvGraph::chain(n, paulis, thetas)
}
