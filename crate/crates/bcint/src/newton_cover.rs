//! Newton polygons, the recursive good semistable covering of `P^{1,an}`
//! with respect to the roots of `f`, parity labels, and the double-cover
//! dual graph `Γ`.
//!
//! The covering of a disc is built recursively: cluster the roots by the
//! "same residue disc at the current scale" relation, delete one closed
//! disc per cluster of size ≥ 2, and recurse into each cluster at the
//! finer scale.  All radii are carried as rational exponents of `p`
//! (`radius = p^{−v}`), never as floats.  Because the roots are supplied
//! exactly as `K`-points, the Newton-polygon radius selection of the
//! source algorithm reduces to exact pairwise-distance computations: `f`
//! translated to a root β has a segment of slope `−s` exactly for each
//! root at distance `p^{−s}` from β.
//!
//! `Γ` doubles even vertices and even edges of the covering tree `T`: an
//! edge of `T` is even when both complementary components of its annulus
//! contain an even number of roots (∞ counts as a root when `deg f` is
//! odd), a vertex is even when all adjacent edges are, and the genus of a
//! vertex is `g(v) = (n_o(v) − 2)/2` with even vertices assigned genus −1.

use std::collections::BTreeMap;

use num_rational::Rational64;
use thiserror::Error;

use crate::padic::{Elem, FieldRef};
use crate::poly::Poly;

pub type Rat = Rational64;

fn rat(n: i64) -> Rat {
    Rat::from_integer(n)
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CoverError {
    /// A coefficient is only zero-at-precision and sits low enough that
    /// the lower hull cannot be certified.
    #[error("Newton polygon indeterminate: coefficient of x^{0} known only to O(π^{1})")]
    IndeterminateCoefficient(usize, i64),
    /// Two supplied roots are indistinguishable at full precision.
    #[error("coincident roots at indices {0} and {1}")]
    CoincidentRoots(usize, usize),
    /// Two supplied roots agree to their (limited) precision.
    #[error("precision too low to separate roots {0} and {1}")]
    PrecisionTooLowToSeparate(usize, usize),
    /// A supplied root list was empty or otherwise unusable.
    #[error("invalid root data: {0}")]
    BadRoots(String),
}

pub type Result<T> = std::result::Result<T, CoverError>;

// ---------------------------------------------------------------------------
// Newton polygons
// ---------------------------------------------------------------------------

/// The lower convex hull of `{(i, v_p(a_i))}` (p-units), together with the
/// slope multiset.  Roots exactly equal to 0 (an `x^k` factor) have no
/// finite slope and are reported separately in `zero_roots`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewtonPolygon {
    /// Hull vertices, left to right, as (degree, p-adic valuation).
    pub vertices: Vec<(usize, Rat)>,
    /// Segment slopes with multiplicities (slope −s ↔ roots of valuation s).
    pub slopes: Vec<(Rat, usize)>,
    /// Multiplicity of the root 0 (degree of the `x^k` factor).
    pub zero_roots: usize,
}

impl NewtonPolygon {
    /// All finite root valuations (= negated slopes), with multiplicity.
    pub fn root_valuations(&self) -> Vec<Rat> {
        let mut out = vec![];
        for &(s, m) in &self.slopes {
            for _ in 0..m {
                out.push(-s);
            }
        }
        out
    }
}

/// Lower convex hull of the coefficient valuations of `f`.
pub fn newton_polygon(f: &Poly) -> Result<NewtonPolygon> {
    let field = f.field();
    let e = field.e;
    let deg = f
        .degree_apparent()
        .ok_or_else(|| CoverError::BadRoots("Newton polygon of the zero polynomial".into()))?;
    // Definite points (i, v_p(a_i)); uncertain coefficients recorded with
    // their precision bound.
    let mut points: Vec<(usize, Rat)> = vec![];
    let mut uncertain: Vec<(usize, Rat)> = vec![];
    let mut zero_roots = 0usize;
    let mut seen_nonzero = false;
    for i in 0..=deg {
        let c = f.coeff(i);
        if c.is_zero() {
            if !seen_nonzero {
                zero_roots += 1;
            }
            if c.prec() < field.capacity() {
                uncertain.push((i, Rat::new(c.prec(), e)));
            }
            continue;
        }
        seen_nonzero = true;
        points.push((i, Rat::new(c.valuation(), e)));
    }
    if points.is_empty() {
        return Err(CoverError::BadRoots(
            "no coefficient with certified valuation".into(),
        ));
    }
    // Lower hull by monotone chain over the (sorted) points.
    let mut hull: Vec<(usize, Rat)> = vec![];
    for &(x, y) in &points {
        while hull.len() >= 2 {
            let (x1, y1) = hull[hull.len() - 2];
            let (x2, y2) = hull[hull.len() - 1];
            // Keep (x1,y1)-(x2,y2)-(x,y) strictly convex from below.
            let lhs = (y2 - y1) * rat(x as i64 - x1 as i64);
            let rhs = (y - y1) * rat(x2 as i64 - x1 as i64);
            if lhs >= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((x, y));
    }
    // An uncertain coefficient strictly below the hull would change it.
    for &(i, bound) in &uncertain {
        if i < hull[0].0 || i > hull[hull.len() - 1].0 {
            // Left of the hull start: it would extend the polygon.
            if i < hull[0].0 && bound < hull[0].1 {
                return Err(CoverError::IndeterminateCoefficient(
                    i,
                    (bound * rat(e)).to_integer(),
                ));
            }
            continue;
        }
        // Interpolate the hull at abscissa i.
        for w in hull.windows(2) {
            let (x1, y1) = w[0];
            let (x2, y2) = w[1];
            if x1 <= i && i <= x2 {
                let hull_y =
                    y1 + (y2 - y1) * Rat::new(i as i64 - x1 as i64, x2 as i64 - x1 as i64);
                if bound < hull_y {
                    return Err(CoverError::IndeterminateCoefficient(
                        i,
                        (bound * rat(e)).to_integer(),
                    ));
                }
                break;
            }
        }
    }
    let mut slopes: Vec<(Rat, usize)> = vec![];
    for w in hull.windows(2) {
        let (x1, y1) = w[0];
        let (x2, y2) = w[1];
        let s = (y2 - y1) / rat(x2 as i64 - x1 as i64);
        slopes.push((s, x2 - x1));
    }
    Ok(NewtonPolygon {
        vertices: hull,
        slopes,
        zero_roots,
    })
}

// ---------------------------------------------------------------------------
// Covering tree
// ---------------------------------------------------------------------------

/// A half-edge endpoint: a finite root (by index into the supplied root
/// list) or the point at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RootLabel {
    Finite(usize),
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

/// The p-adic geometry of a covering node (absent for synthetic trees
/// built directly in tests).
#[derive(Debug, Clone)]
pub struct NodeGeometry {
    /// Center β of the node's chart.
    pub center: Elem,
    /// `v_p` of the node's open outer radius; `None` for the root node,
    /// which is `P^{1,an}` minus the deleted discs.
    pub outer_val: Option<Rat>,
    /// Deleted closed discs `B̄(c, p^{−v})`, one per child edge, in child
    /// order.
    pub deleted: Vec<(Elem, Rat)>,
}

#[derive(Debug, Clone)]
pub struct CoverNode {
    /// Elements of `S_f` contained in this node.
    pub half_edges: Vec<RootLabel>,
    pub geometry: Option<NodeGeometry>,
    pub parity: Option<Parity>,
    pub genus: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct CoverEdge {
    /// Parent node (closer to the tree root).
    pub parent: usize,
    /// Child node.
    pub child: usize,
    /// The connecting annulus `A(p^{−inner}, p^{−outer})` around the
    /// child's center: `inner` is the parent's deleted-disc exponent,
    /// `outer` the child's open radius exponent (`inner ≥ outer`).
    pub annulus: Option<(Rat, Rat)>,
    pub parity: Option<Parity>,
}

/// The rooted tree `T` of a good semistable covering of `P^{1,an}` with
/// respect to `S_f`.
#[derive(Debug, Clone)]
pub struct CoveringTree {
    pub roots: Vec<Elem>,
    /// Whether ∞ ∈ S_f (odd-degree `f`).
    pub infinity_in_s: bool,
    pub nodes: Vec<CoverNode>,
    pub edges: Vec<CoverEdge>,
    /// Index of the root node (the `P^{1,an}`-minus-discs chart).
    pub root: usize,
}

impl CoveringTree {
    /// A synthetic tree for tests/properties: `half_edge_counts[i]` half
    /// edges on node `i`, `edges` as (parent, child) pairs, node 0 root.
    pub fn synthetic(half_edge_counts: &[usize], edges: &[(usize, usize)]) -> CoveringTree {
        let mut label = 0usize;
        let nodes = half_edge_counts
            .iter()
            .map(|&k| {
                let hes = (0..k)
                    .map(|_| {
                        label += 1;
                        RootLabel::Finite(label - 1)
                    })
                    .collect();
                CoverNode {
                    half_edges: hes,
                    geometry: None,
                    parity: None,
                    genus: None,
                }
            })
            .collect();
        CoveringTree {
            roots: vec![],
            infinity_in_s: false,
            nodes,
            edges: edges
                .iter()
                .map(|&(a, b)| CoverEdge {
                    parent: a,
                    child: b,
                    annulus: None,
                    parity: None,
                })
                .collect(),
            root: 0,
        }
    }

    /// Children (edge index, child node index) of a node.
    pub fn children(&self, v: usize) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.parent == v)
            .map(|(i, e)| (i, e.child))
            .collect()
    }

    /// Edge indices adjacent to a node.
    pub fn adjacent_edges(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.parent == v || e.child == v)
            .map(|(i, _)| i)
            .collect()
    }

    /// Total size of `S_f`.
    pub fn s_count(&self) -> usize {
        self.nodes.iter().map(|n| n.half_edges.len()).sum()
    }

    /// Number of elements of `S_f` in the subtree hanging below each edge
    /// (on the child side).
    fn counts_below(&self) -> Vec<usize> {
        fn walk(t: &CoveringTree, v: usize, below: &mut Vec<usize>) -> usize {
            let mut c = t.nodes[v].half_edges.len();
            for (ei, ch) in t.children(v) {
                let sub = walk(t, ch, below);
                below[ei] = sub;
                c += sub;
            }
            c
        }
        let mut below = vec![0usize; self.edges.len()];
        walk(self, self.root, &mut below);
        below
    }

    /// Label every edge and vertex odd/even and assign genera.
    pub fn label_parity_and_genus(&mut self) {
        let below = self.counts_below();
        let total = self.s_count();
        debug_assert!(total % 2 == 0, "S_f always has even cardinality");
        for (ei, e) in self.edges.iter_mut().enumerate() {
            e.parity = Some(if below[ei] % 2 == 0 {
                Parity::Even
            } else {
                Parity::Odd
            });
        }
        for v in 0..self.nodes.len() {
            let mut n_odd = self.nodes[v].half_edges.len() as i64;
            for ei in self.adjacent_edges(v) {
                if self.edges[ei].parity == Some(Parity::Odd) {
                    n_odd += 1;
                }
            }
            let parity = if n_odd == 0 { Parity::Even } else { Parity::Odd };
            let genus = if parity == Parity::Even {
                -1
            } else {
                debug_assert!(n_odd % 2 == 0, "odd-degree count must be even");
                (n_odd - 2) / 2
            };
            self.nodes[v].parity = Some(parity);
            self.nodes[v].genus = Some(genus);
        }
    }

    /// Sum of the (non-negative part of the) vertex genera.
    pub fn total_vertex_genus(&self) -> i64 {
        self.nodes
            .iter()
            .map(|n| n.genus.unwrap_or(0).max(0))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Building the covering
// ---------------------------------------------------------------------------

/// `v_p` of the difference of two roots, as an exact rational.
fn root_distance(field: &FieldRef, roots: &[Elem], i: usize, j: usize) -> Result<Rat> {
    let d = &roots[i] - &roots[j];
    if d.is_zero() {
        // Exact inputs carry at least the internal working precision;
        // anything below that is a precision problem, not true equality.
        if d.prec() < field.n_internal {
            return Err(CoverError::PrecisionTooLowToSeparate(i, j));
        }
        return Err(CoverError::CoincidentRoots(i, j));
    }
    Ok(Rat::new(d.valuation(), field.e))
}

/// Cluster `members` by the relation `v_p(rᵢ − rⱼ) > scale`.
fn clusters_at(
    dist: &BTreeMap<(usize, usize), Rat>,
    members: &[usize],
    scale: Rat,
) -> Vec<Vec<usize>> {
    let mut assigned: Vec<Option<usize>> = vec![None; members.len()];
    let mut out: Vec<Vec<usize>> = vec![];
    for (a, &i) in members.iter().enumerate() {
        if assigned[a].is_some() {
            continue;
        }
        let cid = out.len();
        assigned[a] = Some(cid);
        let mut cl = vec![i];
        for (b, &j) in members.iter().enumerate().skip(a + 1) {
            if assigned[b].is_none() {
                let key = (i.min(j), i.max(j));
                if dist[&key] > scale {
                    assigned[b] = Some(cid);
                    cl.push(j);
                }
            }
        }
        out.push(cl);
    }
    out
}

/// Build the good semistable covering of `P^{1,an}` with respect to the
/// roots of `f` (supplied exactly; ∞ included as a half-edge when
/// `odd_degree`).  The top-level node is `P^{1,an}` minus the deleted
/// discs — the bounded top chart and the chart at infinity of the source
/// construction merged into one, as in the worked examples.
pub fn build_covering(
    field: &FieldRef,
    roots: &[Elem],
    odd_degree: bool,
) -> Result<CoveringTree> {
    if roots.is_empty() {
        return Err(CoverError::BadRoots("no finite roots supplied".into()));
    }
    let mut dist = BTreeMap::new();
    for i in 0..roots.len() {
        for j in (i + 1)..roots.len() {
            dist.insert((i, j), root_distance(field, roots, i, j)?);
        }
    }
    let mut tree = CoveringTree {
        roots: roots.to_vec(),
        infinity_in_s: odd_degree,
        nodes: vec![],
        edges: vec![],
        root: 0,
    };
    let all: Vec<usize> = (0..roots.len()).collect();
    if roots.len() == 1 {
        tree.nodes.push(CoverNode {
            half_edges: vec![RootLabel::Finite(0)],
            geometry: Some(NodeGeometry {
                center: roots[0].clone(),
                outer_val: None,
                deleted: vec![],
            }),
            parity: None,
            genus: None,
        });
        if odd_degree {
            tree.nodes[0].half_edges.push(RootLabel::Infinity);
        }
        return Ok(tree);
    }
    // Top scale: the minimum pairwise distance exponent (the rescaling
    // that puts the largest mutual distance at absolute value 1).
    let scale = *dist.values().min().unwrap();
    build_node(&mut tree, &dist, &all, scale, None)?;
    if odd_degree {
        let r = tree.root;
        tree.nodes[r].half_edges.push(RootLabel::Infinity);
    }
    Ok(tree)
}

/// Recursively build the node covering the cluster `members` (all mutual
/// distances have exponent ≥ `scale`, with equality attained), returning
/// its index.  `outer_val` is the node's open radius exponent (`None` at
/// the top).
fn build_node(
    tree: &mut CoveringTree,
    dist: &BTreeMap<(usize, usize), Rat>,
    members: &[usize],
    scale: Rat,
    outer_val: Option<Rat>,
) -> Result<usize> {
    let beta = tree.roots[members[0]].clone();
    let me = tree.nodes.len();
    tree.nodes.push(CoverNode {
        half_edges: vec![],
        geometry: Some(NodeGeometry {
            center: beta,
            outer_val,
            deleted: vec![],
        }),
        parity: None,
        genus: None,
    });
    for cl in clusters_at(dist, members, scale) {
        if cl.len() == 1 {
            tree.nodes[me].half_edges.push(RootLabel::Finite(cl[0]));
            continue;
        }
        // β = first listed root of the cluster (input order, for
        // reproducibility); deleted closed radius = largest distance
        // within the cluster; child open radius = distance to the
        // nearest root outside the cluster.
        let b = cl[0];
        let inner = cl[1..]
            .iter()
            .map(|&j| dist[&(b.min(j), b.max(j))])
            .min()
            .unwrap();
        let outer = members
            .iter()
            .filter(|&&j| !cl.contains(&j))
            .map(|&j| dist[&(b.min(j), b.max(j))])
            .max()
            .unwrap_or(scale);
        let center = tree.roots[b].clone();
        let child = build_node(tree, dist, &cl, inner, Some(outer))?;
        tree.nodes[me]
            .geometry
            .as_mut()
            .unwrap()
            .deleted
            .push((center, inner));
        tree.edges.push(CoverEdge {
            parent: me,
            child,
            annulus: Some((inner, outer)),
            parity: None,
        });
    }
    Ok(me)
}

// ---------------------------------------------------------------------------
// The dual graph Γ
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GVertex {
    /// The `T`-vertex below this one.
    pub tree_vertex: usize,
    /// `Some` when the `T`-vertex is even and was doubled.
    pub sign: Option<Sign>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GEdge {
    pub a: usize,
    pub b: usize,
    /// The `T`-edge below this one.
    pub tree_edge: usize,
    /// `Some` when the `T`-edge is even and was doubled.
    pub sign: Option<Sign>,
}

/// The double cover `Γ` of `T`, with the projection recorded on each
/// vertex/edge.  Reference points on the curve are attached later by the
/// integration layer, keyed by these indices.
#[derive(Debug, Clone)]
pub struct DualGraph {
    pub vertices: Vec<GVertex>,
    pub edges: Vec<GEdge>,
    /// Half-edges of Γ: (vertex index, label).
    pub half_edges: Vec<(usize, RootLabel)>,
}

impl DualGraph {
    pub fn vertex_index(&self, tree_vertex: usize, sign: Option<Sign>) -> Option<usize> {
        self.vertices
            .iter()
            .position(|v| v.tree_vertex == tree_vertex && v.sign == sign)
    }

    /// Edge indices above a given `T`-edge.
    pub fn edges_over(&self, tree_edge: usize) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.tree_edge == tree_edge)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn components(&self) -> usize {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &self.edges {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..n)
            .filter(|&v| find(&mut parent, v) == v)
            .count()
    }

    /// First Betti number `b₁(Γ) = |E| − |V| + #components`.
    pub fn b1(&self) -> i64 {
        self.edges.len() as i64 - self.vertices.len() as i64 + self.components() as i64
    }
}

/// Construct `Γ` from a parity-labeled tree.
pub fn build_dual_graph(t: &CoveringTree) -> DualGraph {
    let mut g = DualGraph {
        vertices: vec![],
        edges: vec![],
        half_edges: vec![],
    };
    for (vi, node) in t.nodes.iter().enumerate() {
        match node.parity.expect("parity labels required") {
            Parity::Odd => g.vertices.push(GVertex {
                tree_vertex: vi,
                sign: None,
            }),
            Parity::Even => {
                g.vertices.push(GVertex {
                    tree_vertex: vi,
                    sign: Some(Sign::Plus),
                });
                g.vertices.push(GVertex {
                    tree_vertex: vi,
                    sign: Some(Sign::Minus),
                });
            }
        }
    }
    let lift = |g: &DualGraph, v: usize, s: Sign| -> usize {
        match t.nodes[v].parity.unwrap() {
            Parity::Odd => g.vertex_index(v, None).unwrap(),
            Parity::Even => g.vertex_index(v, Some(s)).unwrap(),
        }
    };
    for (ei, e) in t.edges.iter().enumerate() {
        match e.parity.expect("parity labels required") {
            Parity::Odd => {
                // Both endpoints are necessarily odd.
                let a = g.vertex_index(e.parent, None).unwrap();
                let b = g.vertex_index(e.child, None).unwrap();
                g.edges.push(GEdge {
                    a,
                    b,
                    tree_edge: ei,
                    sign: None,
                });
            }
            Parity::Even => {
                for s in [Sign::Plus, Sign::Minus] {
                    let a = lift(&g, e.parent, s);
                    let b = lift(&g, e.child, s);
                    g.edges.push(GEdge {
                        a,
                        b,
                        tree_edge: ei,
                        sign: Some(s),
                    });
                }
            }
        }
    }
    for (vi, node) in t.nodes.iter().enumerate() {
        // Half-edges only occur on odd vertices.
        for &he in &node.half_edges {
            let v = g.vertex_index(vi, None).expect("half-edge on even vertex");
            g.half_edges.push((v, he));
        }
    }
    g
}
