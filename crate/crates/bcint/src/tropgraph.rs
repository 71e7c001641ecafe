//! Tropical 1-forms on the dual graph `Γ`, tropical integration, homology
//! bases with exact dual forms, and the ι/κ comparison with the relative
//! homology of the even subtree.
//!
//! Every edge of `Γ` has length 1; all arithmetic here is exact rational
//! (never p-adic, never floating point).  A tropical 1-form assigns a
//! rational to each directed edge, antisymmetric under reversal and
//! harmonic at every vertex.  Cycles are integer edge chains (coefficients
//! in the stored `a → b` orientation); the cycle pairing is
//! `⟨C, D⟩ = Σ_e C_e·D_e`, and tropical integration of the form attached
//! to a cycle computes exactly this pairing.

use num_rational::Rational64;
use thiserror::Error;

use crate::newton_cover::{CoveringTree, DualGraph, Parity, Sign};

pub type Rat = Rational64;

fn rat(n: i64) -> Rat {
    Rat::from_integer(n)
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TropError {
    #[error("path is not a walk in the graph (step {0})")]
    PathNotInGraph(usize),
}

pub type Result<T> = std::result::Result<T, TropError>;

// ---------------------------------------------------------------------------
// Tropical 1-forms
// ---------------------------------------------------------------------------

/// A tropical 1-form on `Γ`: one rational per edge, in the stored
/// `a → b` orientation; the reversed orientation negates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TropicalOneForm {
    pub values: Vec<Rat>,
}

impl TropicalOneForm {
    pub fn zero(g: &DualGraph) -> TropicalOneForm {
        TropicalOneForm {
            values: vec![rat(0); g.edges.len()],
        }
    }

    /// The form `η_C` attached to an edge chain: `η_C(e) = C_e`.
    pub fn from_chain(chain: &[Rat]) -> TropicalOneForm {
        TropicalOneForm {
            values: chain.to_vec(),
        }
    }

    pub fn value(&self, edge: usize, forward: bool) -> Rat {
        if forward {
            self.values[edge]
        } else {
            -self.values[edge]
        }
    }

    pub fn scale(&self, s: Rat) -> TropicalOneForm {
        TropicalOneForm {
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &TropicalOneForm) -> TropicalOneForm {
        TropicalOneForm {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Harmonicity: at every vertex the outgoing values sum to zero.
    pub fn is_harmonic(&self, g: &DualGraph) -> bool {
        let mut sums = vec![rat(0); g.vertices.len()];
        for (ei, e) in g.edges.iter().enumerate() {
            sums[e.a] += self.values[ei];
            sums[e.b] -= self.values[ei];
        }
        sums.iter().all(|s| *s == rat(0))
    }
}

// ---------------------------------------------------------------------------
// Paths and integration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub edge: usize,
    pub forward: bool,
}

/// A walk in `Γ` with optional fractional first/last edges: the walk
/// starts at parameter `start_frac` along its first edge and ends at
/// `end_frac` along its last (each in [0,1], measured in the step's
/// direction of travel).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TropPath {
    pub steps: Vec<PathStep>,
    pub start_frac: Rat,
    pub end_frac: Rat,
}

impl TropPath {
    pub fn whole(steps: Vec<PathStep>) -> TropPath {
        TropPath {
            steps,
            start_frac: rat(0),
            end_frac: rat(1),
        }
    }

    pub fn empty() -> TropPath {
        TropPath::whole(vec![])
    }

    pub fn reversed(&self) -> TropPath {
        TropPath {
            steps: self
                .steps
                .iter()
                .rev()
                .map(|s| PathStep {
                    edge: s.edge,
                    forward: !s.forward,
                })
                .collect(),
            start_frac: rat(1) - self.end_frac,
            end_frac: rat(1) - self.start_frac,
        }
    }
}

fn step_tail(g: &DualGraph, s: &PathStep) -> usize {
    if s.forward {
        g.edges[s.edge].a
    } else {
        g.edges[s.edge].b
    }
}

fn step_head(g: &DualGraph, s: &PathStep) -> usize {
    if s.forward {
        g.edges[s.edge].b
    } else {
        g.edges[s.edge].a
    }
}

/// `∫_γ η`: each full edge contributes `η(e)`, the fractional first/last
/// edges contribute proportionally.
pub fn tropical_integral(g: &DualGraph, eta: &TropicalOneForm, path: &TropPath) -> Result<Rat> {
    for (i, w) in path.steps.windows(2).enumerate() {
        if step_head(g, &w[0]) != step_tail(g, &w[1]) {
            return Err(TropError::PathNotInGraph(i + 1));
        }
    }
    let n = path.steps.len();
    let mut total = rat(0);
    for (i, s) in path.steps.iter().enumerate() {
        let lo = if i == 0 { path.start_frac } else { rat(0) };
        let hi = if i == n - 1 { path.end_frac } else { rat(1) };
        total += eta.value(s.edge, s.forward) * (hi - lo);
    }
    Ok(total)
}

/// The cycle pairing `⟨C, D⟩ = Σ_e C_e·D_e` (each edge of length 1).
pub fn cycle_pairing(c: &[Rat], d: &[Rat]) -> Rat {
    c.iter().zip(d).map(|(a, b)| a * b).sum()
}

/// Express an integer edge chain as a closed walk (used to integrate over
/// a cycle); the chain must be a sum of closed loops.
pub fn chain_to_walk(g: &DualGraph, chain: &[Rat]) -> Option<TropPath> {
    // Eulerian-style traversal over the multiset of directed edges.
    let mut remaining: Vec<i64> = chain
        .iter()
        .map(|c| {
            assert!(c.is_integer(), "walks need integer chains");
            c.to_integer()
        })
        .collect();
    let mut steps = vec![];
    loop {
        let start = match remaining.iter().position(|&c| c != 0) {
            None => break,
            Some(e) => e,
        };
        let forward = remaining[start] > 0;
        let s0 = PathStep {
            edge: start,
            forward,
        };
        remaining[start] -= if forward { 1 } else { -1 };
        let origin = step_tail(g, &s0);
        let mut cur = step_head(g, &s0);
        let mut this_loop = vec![s0];
        while cur != origin {
            let next = (0..remaining.len()).find_map(|e| {
                if remaining[e] > 0 && g.edges[e].a == cur {
                    Some(PathStep {
                        edge: e,
                        forward: true,
                    })
                } else if remaining[e] < 0 && g.edges[e].b == cur {
                    Some(PathStep {
                        edge: e,
                        forward: false,
                    })
                } else {
                    None
                }
            })?;
            remaining[next.edge] -= if next.forward { 1 } else { -1 };
            cur = step_head(g, &next);
            this_loop.push(next);
        }
        steps.extend(this_loop);
    }
    Some(TropPath::whole(steps))
}

// ---------------------------------------------------------------------------
// Homology basis with exact dual forms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CycleBasis {
    /// Integer cycles `C₁,…,C_h` (coefficients per Γ-edge).
    pub cycles: Vec<Vec<Rat>>,
    /// Dual tropical forms with `∫_{C_i} η_j = δ_ij`.
    pub forms: Vec<TropicalOneForm>,
}

/// Solve `A x = b` over the rationals (A square nonsingular).
pub(crate) fn solve_rational(a: &[Vec<Rat>], b: &[Rat]) -> Vec<Rat> {
    let n = a.len();
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(*rhs);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .find(|&r| m[r][col] != rat(0))
            .expect("singular Gram matrix");
        m.swap(col, piv);
        let inv = m[col][col];
        for x in m[col].iter_mut() {
            *x /= inv;
        }
        for r in 0..n {
            if r != col && m[r][col] != rat(0) {
                let f = m[r][col];
                for c in col..=n {
                    let sub = f * m[col][c];
                    m[r][c] -= sub;
                }
            }
        }
    }
    (0..n).map(|r| m[r][n]).collect()
}

/// Fundamental cycles of `Γ` from a spanning forest, plus the dual forms
/// obtained by inverting the (positive-definite) Gram matrix of the
/// cycle pairing.
pub fn homology_basis(g: &DualGraph) -> CycleBasis {
    let nv = g.vertices.len();
    // BFS spanning forest: parent step per vertex.
    let mut parent: Vec<Option<PathStep>> = vec![None; nv];
    let mut visited = vec![false; nv];
    let mut in_tree = vec![false; g.edges.len()];
    for s in 0..nv {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for (ei, e) in g.edges.iter().enumerate() {
                let next = if e.a == v && !visited[e.b] {
                    Some((e.b, PathStep { edge: ei, forward: true }))
                } else if e.b == v && !visited[e.a] {
                    Some((e.a, PathStep { edge: ei, forward: false }))
                } else {
                    None
                };
                if let Some((w, step)) = next {
                    visited[w] = true;
                    in_tree[ei] = true;
                    parent[w] = Some(step);
                    queue.push_back(w);
                }
            }
        }
    }
    // Chain of the tree path root→v.
    let path_chain = |mut v: usize| -> Vec<Rat> {
        let mut chain = vec![rat(0); g.edges.len()];
        while let Some(step) = parent[v] {
            chain[step.edge] += if step.forward { rat(1) } else { rat(-1) };
            v = step_tail(g, &step);
        }
        chain
    };
    let mut cycles: Vec<Vec<Rat>> = vec![];
    for (ei, e) in g.edges.iter().enumerate() {
        if in_tree[ei] {
            continue;
        }
        // Fundamental cycle: the non-tree edge plus tree path b → a.
        let pa = path_chain(e.a);
        let pb = path_chain(e.b);
        let mut chain = vec![rat(0); g.edges.len()];
        chain[ei] = rat(1);
        for j in 0..chain.len() {
            chain[j] += pa[j] - pb[j];
        }
        cycles.push(chain);
    }
    let h = cycles.len();
    if h == 0 {
        return CycleBasis {
            cycles,
            forms: vec![],
        };
    }
    let gram: Vec<Vec<Rat>> = cycles
        .iter()
        .map(|ci| cycles.iter().map(|cj| cycle_pairing(ci, cj)).collect())
        .collect();
    let mut forms = vec![];
    for i in 0..h {
        let mut rhs = vec![rat(0); h];
        rhs[i] = rat(1);
        let x = solve_rational(&gram, &rhs);
        let mut form = TropicalOneForm::zero(g);
        for (j, cj) in cycles.iter().enumerate() {
            form = form.add(&TropicalOneForm::from_chain(cj).scale(x[j]));
        }
        debug_assert!(form.is_harmonic(g));
        forms.push(form);
    }
    CycleBasis { cycles, forms }
}

// ---------------------------------------------------------------------------
// ι/κ and the relative homology of the even subtree
// ---------------------------------------------------------------------------

/// A basis of `H₁(T_e, V_o; Z)`: chains on the even edges of `T` whose
/// boundary is supported on the odd vertices adjacent to even edges.
/// Since `T_e` is a forest, these are exactly the paths between boundary
/// vertices within each component: a component with `k ≥ 2` boundary
/// vertices contributes `k − 1` independent paths.
pub fn relative_even_basis(t: &CoveringTree) -> Vec<Vec<Rat>> {
    let ne = t.edges.len();
    let even_edges: Vec<usize> = (0..ne)
        .filter(|&e| t.edges[e].parity == Some(Parity::Even))
        .collect();
    // Components of T_e via union-find over vertices.
    let nv = t.nodes.len();
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &e in &even_edges {
        let (a, b) = (t.edges[e].parent, t.edges[e].child);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    // Boundary vertices: odd vertices adjacent to an even edge.
    let mut boundary: Vec<usize> = vec![];
    for v in 0..nv {
        if t.nodes[v].parity == Some(Parity::Odd)
            && t.adjacent_edges(v)
                .iter()
                .any(|&e| t.edges[e].parity == Some(Parity::Even))
        {
            boundary.push(v);
        }
    }
    // Per component: anchor at the first boundary vertex, one path to
    // each further boundary vertex (within T_e).
    let mut anchors: std::collections::BTreeMap<usize, usize> = Default::default();
    let mut basis = vec![];
    for &v in &boundary {
        let comp = find(&mut parent, v);
        match anchors.get(&comp) {
            None => {
                anchors.insert(comp, v);
            }
            Some(&anchor) => {
                basis.push(tree_path_chain(t, &even_edges, anchor, v));
            }
        }
    }
    basis
}

/// The chain of the unique path anchor → v inside the even subgraph.
fn tree_path_chain(t: &CoveringTree, even_edges: &[usize], anchor: usize, v: usize) -> Vec<Rat> {
    // DFS from anchor using even edges only.
    fn dfs(
        t: &CoveringTree,
        even_edges: &[usize],
        cur: usize,
        target: usize,
        used: &mut Vec<bool>,
        chain: &mut Vec<Rat>,
    ) -> bool {
        if cur == target {
            return true;
        }
        for (i, &e) in even_edges.iter().enumerate() {
            if used[i] {
                continue;
            }
            let (a, b) = (t.edges[e].parent, t.edges[e].child);
            let next = if a == cur {
                Some((b, rat(1)))
            } else if b == cur {
                Some((a, rat(-1)))
            } else {
                None
            };
            if let Some((w, sign)) = next {
                used[i] = true;
                chain[e] = sign;
                if dfs(t, even_edges, w, target, used, chain) {
                    return true;
                }
                chain[e] = rat(0);
            }
        }
        false
    }
    let mut chain = vec![rat(0); t.edges.len()];
    let mut used = vec![false; even_edges.len()];
    let found = dfs(t, even_edges, anchor, v, &mut used, &mut chain);
    assert!(found, "boundary vertices not connected in T_e");
    chain
}

/// `ι: C₁(T_e) → C₁(Γ)`, `e ↦ ẽ₊ − ẽ₋`.
pub fn iota(g: &DualGraph, t: &CoveringTree, chain: &[Rat]) -> Vec<Rat> {
    let mut out = vec![rat(0); g.edges.len()];
    for (te, &c) in chain.iter().enumerate() {
        if c == rat(0) {
            continue;
        }
        assert_eq!(
            t.edges[te].parity,
            Some(Parity::Even),
            "ι is defined on even edges"
        );
        for gi in g.edges_over(te) {
            match g.edges[gi].sign {
                Some(Sign::Plus) => out[gi] += c,
                Some(Sign::Minus) => out[gi] -= c,
                None => unreachable!("even tree edge lifts in a signed pair"),
            }
        }
    }
    out
}

/// `κ: C₁(Γ) → C₁(T_e)`: `ẽ ↦ 0`, `ẽ₊ ↦ e`, `ẽ₋ ↦ 0`.
pub fn kappa(g: &DualGraph, t: &CoveringTree, cycle: &[Rat]) -> Vec<Rat> {
    let mut out = vec![rat(0); t.edges.len()];
    for (gi, &c) in cycle.iter().enumerate() {
        if c != rat(0) && g.edges[gi].sign == Some(Sign::Plus) {
            out[g.edges[gi].tree_edge] += c;
        }
    }
    out
}
