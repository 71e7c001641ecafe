//! Integration on the full hyperelliptic curve `y² = f(x)`.
//!
//! The covering machinery ([`crate::newton_cover`], [`crate::wideopen`])
//! cuts the curve into good-reduction charts glued along annuli; the dual
//! graph `Γ` records the gluing.  A path between two points is described
//! combinatorially by an edge word in `Γ` together with fixed *reference
//! points*: one ordinary point `P_v` per Γ-vertex (inside the central
//! affinoid of its chart) and one point `P_e` per Γ-edge (inside the
//! corresponding annulus).  The Berkovich–Coleman integral along the path
//! is the sum of single-chart integrals
//!
//! ```text
//!   ∫_x^{P_v}  +  Σ_steps ( ∫_{P_{i(e)}}^{P_e}  +  ∫_{P_e}^{P_{t(e)}} )  +  ∫_{P_w}^y ,
//! ```
//!
//! each evaluated with [`crate::coleman::ChartIntegrator`] on the chart of
//! the vertex the leg belongs to.  Periods are the same sums over closed
//! walks; they depend only on the homology class of the walk.  The
//! path-independent (abelian) integral is recovered by subtracting the
//! tropical correction
//!
//! ```text
//!   Ab∫_x^y ω = BC∫_γ ω − Σ_i (BC∫_{γ_i} ω) · (∫_{τ(γ)} η_i),
//! ```
//!
//! where `γ_i` are closed walks representing a homology basis of `Γ` and
//! `η_i` are the dual tropical one-forms, both obtained from the covering
//! tree: integer chains on the even tree edges lift to cycles of `Γ`, and
//! the duals (with a factor ½ compensating the doubling of the
//! intersection pairing under the lift) integrate to the Kronecker δ.

use std::cell::OnceCell;
use std::collections::VecDeque;

use num_rational::Rational64 as Rat;
use thiserror::Error;

use crate::coleman::{solve_dense, ChartIntegrator, ColemanError, Pt};
use crate::newton_cover::{
    build_covering, build_dual_graph, CoverError, CoveringTree, DualGraph, Parity, Sign,
};
use crate::padic::{Elem, FieldRef, PadicError};
use crate::poly::Poly;
use crate::reduction::MeroForm;
use crate::tropgraph::{
    chain_to_walk, cycle_pairing, iota, relative_even_basis, solve_rational, tropical_integral,
    PathStep, TropError, TropPath, TropicalOneForm,
};
use crate::wideopen::{expand_form, ChartError, ExpansionRegion, WideOpenChart};

#[derive(Debug, Error)]
pub enum BcError {
    /// A point does not lie where the operation requires it (off the curve,
    /// outside a chart, or reducing to the wrong vertex/annulus).
    #[error("point not in the required region: {0}")]
    PointNotInRegion(String),
    /// On a disconnected (even) chart or annulus the component of a point
    /// could not be determined, or does not match its assigned label.
    #[error("component undetermined or mismatched: {0}")]
    ComponentAmbiguity(String),
    /// A cycle word does not describe a closed walk in `Γ`.
    #[error("edge word is not a closed walk")]
    NotClosed,
    /// A malformed path/word or missing prerequisite.
    #[error("invalid path: {0}")]
    BadPath(String),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Coleman(#[from] ColemanError),
    #[error(transparent)]
    Padic(#[from] PadicError),
    #[error(transparent)]
    Trop(#[from] TropError),
}

pub type Result<T> = std::result::Result<T, BcError>;

fn rat(n: i64) -> Rat {
    Rat::from_integer(n)
}

/// An affine point `(x, y)` on the full curve `y² = f(x)`.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub x: Elem,
    pub y: Elem,
}

impl CurvePoint {
    pub fn new(x: Elem, y: Elem) -> CurvePoint {
        CurvePoint { x, y }
    }

    /// The hyperelliptic conjugate `(x, −y)`.
    pub fn conj(&self) -> CurvePoint {
        CurvePoint {
            x: self.x.clone(),
            y: self.y.negate(),
        }
    }
}

/// A homotopy class of paths between two points, described by the
/// Γ-vertices the endpoints reduce to and an edge word connecting them.
#[derive(Debug, Clone)]
pub struct PathSpec {
    pub start: CurvePoint,
    /// Γ-vertex the start point reduces to.
    pub start_vertex: usize,
    pub end: CurvePoint,
    /// Γ-vertex the end point reduces to.
    pub end_vertex: usize,
    /// Consecutive Γ-edge steps from `start_vertex` to `end_vertex`.
    pub word: Vec<PathStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralKind {
    BerkovichColeman,
    Abelian,
    Period,
}

/// A computed integral with its certified absolute precision (π-digits).
#[derive(Debug, Clone)]
pub struct IntegralValue {
    pub value: Elem,
    pub kind: IntegralKind,
    pub certified: i64,
}

/// Reference points: one per Γ-vertex (reducing into the central affinoid
/// of its chart) and one per Γ-edge (inside the corresponding annulus,
/// on the component the edge labels).
#[derive(Debug, Clone)]
pub struct ReferencePoints {
    pub vertex: Vec<CurvePoint>,
    pub edge: Vec<CurvePoint>,
}

/// Curve-level integrator: covering tree, dual graph, one wide-open chart
/// per tree node, and lazily-built chart integrators.
pub struct CurveIntegrator {
    field: FieldRef,
    /// The full polynomial `f` (monic times `lc`).
    pub f: Poly,
    pub lc: Elem,
    pub tree: CoveringTree,
    pub graph: DualGraph,
    pub charts: Vec<WideOpenChart>,
    cells: Vec<OnceCell<ChartIntegrator>>,
    refs: Option<ReferencePoints>,
}

impl CurveIntegrator {
    /// Build the covering and all charts from the (exact) roots of `f`.
    pub fn new(field: &FieldRef, roots: Vec<Elem>, lc: Elem) -> Result<CurveIntegrator> {
        let odd = roots.len() % 2 == 1;
        let mut tree = build_covering(field, &roots, odd)?;
        tree.label_parity_and_genus();
        let graph = build_dual_graph(&tree);
        let mut charts = Vec::with_capacity(tree.nodes.len());
        for node in 0..tree.nodes.len() {
            charts.push(WideOpenChart::build(&tree, node, &lc, None)?);
        }
        let cells = (0..tree.nodes.len()).map(|_| OnceCell::new()).collect();
        let f = Poly::from_roots(field, &roots).scale(&lc);
        Ok(CurveIntegrator {
            field: field.clone(),
            f,
            lc,
            tree,
            graph,
            charts,
            cells,
            refs: None,
        })
    }

    pub fn field(&self) -> &FieldRef {
        &self.field
    }

    /// Genus of the full curve.
    pub fn genus(&self) -> i64 {
        (self.tree.s_count() as i64 - 2) / 2
    }

    /// Number of holomorphic basis forms `ω_i = xⁱ·dx/2y`, `i = 0..g−1`.
    pub fn num_forms(&self) -> usize {
        self.genus().max(0) as usize
    }

    fn validate_lambda(&self, lambda: &[Elem]) -> Result<()> {
        if lambda.is_empty() || lambda.len() > self.num_forms() {
            return Err(BcError::BadPath(format!(
                "form has {} coefficients; the curve has {} holomorphic forms",
                lambda.len(),
                self.num_forms()
            )));
        }
        Ok(())
    }

    /// The chart integrator of a tree node (built on first use; charts of
    /// positive genus trigger a Frobenius-matrix computation here).
    fn integrator(&self, node: usize) -> Result<&ChartIntegrator> {
        if self.cells[node].get().is_none() {
            let it = ChartIntegrator::from_chart(&self.charts[node])?;
            let _ = self.cells[node].set(it);
        }
        Ok(self.cells[node].get().expect("just initialized"))
    }

    // -- point location -----------------------------------------------------

    /// Relative on-curve check (tolerates exterior points, where `f(x)` is
    /// large).
    fn check_on_curve(&self, p: &CurvePoint, who: &str) -> Result<()> {
        let fx = self.f.eval(&p.x);
        let base = if fx.is_zero() { 0 } else { fx.valuation().min(0) };
        let gap = &(&p.y * &p.y) - &fx;
        if !gap.is_zero() && gap.valuation() < base + 1 {
            return Err(BcError::PointNotInRegion(format!(
                "{who}: point does not lie on y² = f(x)"
            )));
        }
        Ok(())
    }

    /// Chart coordinates of a point whose reduction is the vertex of
    /// `node` (not inside any deleted disc or connecting annulus).
    fn at_vertex(&self, node: usize, p: &CurvePoint) -> Result<(Elem, Elem)> {
        let chart = &self.charts[node];
        let (xt, yt) = chart.to_chart(&p.x, &p.y)?;
        if node != self.tree.root && xt.valuation() < 0 {
            return Err(BcError::PointNotInRegion(
                "point lies in the annulus toward the parent chart".into(),
            ));
        }
        for (j, cc) in chart.centers.iter().enumerate() {
            let d = &xt - &cc.beta;
            if d.is_zero() || d.valuation() > 0 {
                return Err(BcError::PointNotInRegion(format!(
                    "point reduces into deleted disc {j}; not at this vertex"
                )));
            }
        }
        Ok((xt, yt))
    }

    /// Chart coordinates (on the parent chart) of a point inside the open
    /// annulus of a tree edge.
    fn on_edge(&self, tree_edge: usize, p: &CurvePoint) -> Result<(usize, Elem, Elem)> {
        let parent = self.tree.edges[tree_edge].parent;
        let chart = &self.charts[parent];
        let ci = self
            .tree
            .children(parent)
            .iter()
            .position(|&(ei, _)| ei == tree_edge)
            .expect("tree edge listed under its parent");
        let (xt, yt) = chart.to_chart(&p.x, &p.y)?;
        let diff = &xt - &chart.centers[ci].beta;
        let deep_enough = !diff.is_zero() && diff.valuation() > 0;
        if !deep_enough || rat(diff.valuation()) >= chart.centers[ci].annulus_val {
            return Err(BcError::PointNotInRegion(format!(
                "point is not inside the annulus of tree edge {tree_edge}"
            )));
        }
        Ok((parent, xt, yt))
    }

    /// Component label of a point on a chart whose double cover splits
    /// there (even chart, or an even annulus): `Plus` iff `ỹ` agrees with
    /// the canonical branch `+√g(x̃)`.
    fn tag_on_chart(&self, node: usize, xt: &Elem, yt: &Elem) -> Result<Sign> {
        let chart = &self.charts[node];
        let canon = chart.g.eval(xt).sqrt(None)?;
        let tol = canon.valuation() + 1;
        let dp = yt - &canon;
        if dp.is_zero() || dp.valuation() >= tol {
            return Ok(Sign::Plus);
        }
        let dm = yt + &canon;
        if dm.is_zero() || dm.valuation() >= tol {
            return Ok(Sign::Minus);
        }
        Err(BcError::ComponentAmbiguity(
            "ỹ matches neither branch of √g(x̃)".into(),
        ))
    }

    /// Γ-vertex a point reduces to (errors for points inside an annulus).
    pub fn locate_vertex(&self, p: &CurvePoint) -> Result<usize> {
        self.check_on_curve(p, "locate")?;
        for node in 0..self.tree.nodes.len() {
            if let Ok((xt, yt)) = self.at_vertex(node, p) {
                let sign = match self.tree.nodes[node].parity {
                    Some(Parity::Even) => Some(self.tag_on_chart(node, &xt, &yt)?),
                    _ => None,
                };
                return self.graph.vertex_index(node, sign).ok_or_else(|| {
                    BcError::PointNotInRegion("no Γ-vertex over the covering node".into())
                });
            }
        }
        Err(BcError::PointNotInRegion(
            "point does not reduce to any vertex of Γ".into(),
        ))
    }

    // -- reference points ---------------------------------------------------

    /// Build reference points from x-coordinates: one per tree node (for
    /// the vertices) and one per tree edge (for the annuli).  The
    /// y-coordinates are canonical square roots; on doubled vertices and
    /// edges the two conjugate points are assigned by component label.
    pub fn reference_points_from_x(
        &self,
        vertex_x: &[Elem],
        edge_x: &[Elem],
    ) -> Result<ReferencePoints> {
        if vertex_x.len() != self.tree.nodes.len() || edge_x.len() != self.tree.edges.len() {
            return Err(BcError::BadPath(
                "need one x per tree vertex and one per tree edge".into(),
            ));
        }
        let mut vertex: Vec<Option<CurvePoint>> = vec![None; self.graph.vertices.len()];
        for (node, x) in vertex_x.iter().enumerate() {
            let y = self.f.eval(x).sqrt(None)?;
            let p = CurvePoint::new(x.clone(), y);
            if self.tree.nodes[node].parity == Some(Parity::Even) {
                let (xt, yt) = self.at_vertex(node, &p)?;
                let tag = self.tag_on_chart(node, &xt, &yt)?;
                let other = match tag {
                    Sign::Plus => Sign::Minus,
                    Sign::Minus => Sign::Plus,
                };
                let vi = self.graph.vertex_index(node, Some(tag)).expect("lift");
                let wi = self.graph.vertex_index(node, Some(other)).expect("lift");
                vertex[wi] = Some(p.conj());
                vertex[vi] = Some(p);
            } else {
                let vi = self.graph.vertex_index(node, None).expect("lift");
                vertex[vi] = Some(p);
            }
        }
        let mut edge: Vec<Option<CurvePoint>> = vec![None; self.graph.edges.len()];
        for (te, x) in edge_x.iter().enumerate() {
            let y = self.f.eval(x).sqrt(None)?;
            let p = CurvePoint::new(x.clone(), y);
            let lifts = self.graph.edges_over(te);
            if lifts.len() == 1 {
                edge[lifts[0]] = Some(p);
            } else {
                let (parent, xt, yt) = self.on_edge(te, &p)?;
                let tag = self.tag_on_chart(parent, &xt, &yt)?;
                for gi in lifts {
                    let sign = self.graph.edges[gi].sign.expect("doubled edge is signed");
                    edge[gi] = Some(if sign == tag { p.clone() } else { p.conj() });
                }
            }
        }
        Ok(ReferencePoints {
            vertex: vertex.into_iter().map(|p| p.expect("assigned")).collect(),
            edge: edge.into_iter().map(|p| p.expect("assigned")).collect(),
        })
    }

    /// Install reference points after validating their location and (for
    /// doubled vertices/edges) their component labels.
    pub fn set_reference_points(&mut self, refs: ReferencePoints) -> Result<()> {
        if refs.vertex.len() != self.graph.vertices.len()
            || refs.edge.len() != self.graph.edges.len()
        {
            return Err(BcError::BadPath(
                "reference point counts must match Γ".into(),
            ));
        }
        for (vi, p) in refs.vertex.iter().enumerate() {
            self.check_on_curve(p, "vertex reference point")?;
            let node = self.graph.vertices[vi].tree_vertex;
            let (xt, yt) = self.at_vertex(node, p)?;
            if let Some(sign) = self.graph.vertices[vi].sign {
                if self.tag_on_chart(node, &xt, &yt)? != sign {
                    return Err(BcError::ComponentAmbiguity(format!(
                        "reference point of Γ-vertex {vi} lies on the other component"
                    )));
                }
            }
        }
        for (ei, p) in refs.edge.iter().enumerate() {
            self.check_on_curve(p, "edge reference point")?;
            let ge = &self.graph.edges[ei];
            let (parent, xt, yt) = self.on_edge(ge.tree_edge, p)?;
            if let Some(sign) = ge.sign {
                if self.tag_on_chart(parent, &xt, &yt)? != sign {
                    return Err(BcError::ComponentAmbiguity(format!(
                        "reference point of Γ-edge {ei} lies on the other annulus component"
                    )));
                }
            }
        }
        self.refs = Some(refs);
        Ok(())
    }

    fn refs(&self) -> Result<&ReferencePoints> {
        self.refs
            .as_ref()
            .ok_or_else(|| BcError::BadPath("reference points not set".into()))
    }

    // -- single-chart legs --------------------------------------------------

    /// Expansion region covering the given chart coordinates: bounds on the
    /// depth toward every deleted center and on the growth beyond the unit
    /// disc, from the actual endpoints of the leg.
    fn leg_region(&self, chart: &WideOpenChart, pts: &[&Elem]) -> ExpansionRegion {
        let center_depth = chart
            .centers
            .iter()
            .map(|cc| {
                pts.iter()
                    .map(|x| {
                        let d = *x - &cc.beta;
                        if d.is_zero() {
                            rat(0)
                        } else {
                            rat(d.valuation())
                        }
                    })
                    .max()
                    .unwrap_or_else(|| rat(0))
                    .max(rat(0))
            })
            .collect();
        let outer_growth = pts
            .iter()
            .map(|x| rat(-x.valuation()))
            .max()
            .unwrap_or_else(|| rat(0))
            .max(rat(0));
        ExpansionRegion {
            center_depth,
            outer_growth,
        }
    }

    /// `∫_s^r Σ λ_i ω_i` with both endpoints on the chart of `node`
    /// (also the building block of multi-chart paths: a path integral is
    /// the sum of such legs between consecutive reference points).
    pub fn chart_leg(
        &self,
        node: usize,
        lambda: &[Elem],
        s: &CurvePoint,
        r: &CurvePoint,
    ) -> Result<Elem> {
        let chart = &self.charts[node];
        let (xs, ys) = chart.to_chart(&s.x, &s.y)?;
        let (xr, yr) = chart.to_chart(&r.x, &r.y)?;
        if (&xs - &xr).is_zero() && (&ys - &yr).is_zero() {
            return Ok(Elem::zero(&self.field));
        }
        let region = self.leg_region(chart, &[&xs, &xr]);
        let target = self.field.n_work + 2;
        if chart.even {
            return self.even_chart_leg(chart, lambda, &region, target, (&xs, &ys), (&xr, &yr));
        }
        let it = self.integrator(node)?;
        let mut eta = MeroForm::new(Poly::zero(&self.field), vec![0; it.ctx.centers.len()]);
        for (i, li) in lambda.iter().enumerate() {
            if li.is_zero() {
                continue;
            }
            let exp = expand_form(chart, i, &region, target)?;
            eta = eta.add_scaled(&it.ctx, &it.mero_from_terms(&exp.terms), li);
        }
        Ok(it.integrate_mero(&eta, &Pt::new(xs, ys), &Pt::new(xr, yr))?)
    }

    /// Leg on a disconnected chart (`g` constant): `ỹ = ±1` exactly, so
    /// the form is the rational function `Σ terms · dx̃ / (2ỹ)` and the
    /// integral is elementary (partial fractions and logarithms).
    fn even_chart_leg(
        &self,
        chart: &WideOpenChart,
        lambda: &[Elem],
        region: &ExpansionRegion,
        target: i64,
        s: (&Elem, &Elem),
        r: (&Elem, &Elem),
    ) -> Result<Elem> {
        let field = &self.field;
        let sgn_s = unit_sign(field, s.1)?;
        let sgn_r = unit_sign(field, r.1)?;
        if !(&sgn_s - &sgn_r).is_zero() {
            return Err(BcError::BadPath(
                "endpoints lie on different components of a split chart".into(),
            ));
        }
        let mut total = Elem::zero(field);
        for (i, li) in lambda.iter().enumerate() {
            if li.is_zero() {
                continue;
            }
            let exp = expand_form(chart, i, region, target)?;
            for t in &exp.terms {
                let num = Poly::constant(&t.coeff * li).shift_up(t.x_power as usize);
                let poles: Vec<(Elem, i64)> = chart
                    .centers
                    .iter()
                    .zip(&t.pole_orders)
                    .filter(|(_, &n)| n > 0)
                    .map(|(cc, &n)| (cc.beta.clone(), n))
                    .collect();
                total = &total + &integrate_rational(field, &num, &poles, s.0, r.0)?;
            }
        }
        Ok((&total * &sgn_s).div_i64(2)?)
    }

    // -- paths, periods, abelian integrals ----------------------------------

    fn step_tail(&self, s: &PathStep) -> usize {
        let e = &self.graph.edges[s.edge];
        if s.forward {
            e.a
        } else {
            e.b
        }
    }

    fn step_head(&self, s: &PathStep) -> usize {
        let e = &self.graph.edges[s.edge];
        if s.forward {
            e.b
        } else {
            e.a
        }
    }

    fn validate_word(&self, word: &[PathStep], from: usize, to: usize) -> Result<()> {
        let mut cur = from;
        for (i, st) in word.iter().enumerate() {
            if st.edge >= self.graph.edges.len() {
                return Err(BcError::BadPath(format!("step {i}: no such Γ-edge")));
            }
            if self.step_tail(st) != cur {
                return Err(BcError::BadPath(format!(
                    "step {i} does not continue the walk"
                )));
            }
            cur = self.step_head(st);
        }
        if cur != to {
            return Err(BcError::BadPath("word does not reach the end vertex".into()));
        }
        Ok(())
    }

    /// A point must reduce to the given Γ-vertex (including the component
    /// label when the vertex is doubled).
    fn check_endpoint(&self, p: &CurvePoint, gvertex: usize, who: &str) -> Result<()> {
        self.check_on_curve(p, who)?;
        let node = self.graph.vertices[gvertex].tree_vertex;
        let (xt, yt) = self.at_vertex(node, p)?;
        if let Some(sign) = self.graph.vertices[gvertex].sign {
            if self.tag_on_chart(node, &xt, &yt)? != sign {
                return Err(BcError::ComponentAmbiguity(format!(
                    "{who}: point lies on the other component of its chart"
                )));
            }
        }
        Ok(())
    }

    /// Sum of the per-edge legs of a word (reference point to reference
    /// point, two charts per step).
    fn edge_word_sum(&self, lambda: &[Elem], word: &[PathStep]) -> Result<Elem> {
        let refs = self.refs()?;
        let mut total = Elem::zero(&self.field);
        for st in word {
            let ge = &self.graph.edges[st.edge];
            let (iv, tv) = if st.forward { (ge.a, ge.b) } else { (ge.b, ge.a) };
            let pe = &refs.edge[st.edge];
            let ni = self.graph.vertices[iv].tree_vertex;
            let nt = self.graph.vertices[tv].tree_vertex;
            total = &total + &self.chart_leg(ni, lambda, &refs.vertex[iv], pe)?;
            total = &total + &self.chart_leg(nt, lambda, pe, &refs.vertex[tv])?;
        }
        Ok(total)
    }

    fn value(&self, value: Elem, kind: IntegralKind) -> IntegralValue {
        let certified = value.prec().min(self.field.n_work);
        IntegralValue {
            value,
            kind,
            certified,
        }
    }

    /// Berkovich–Coleman integral of `ω = Σ λ_i ω_i` along the path.
    pub fn bc_integral(&self, lambda: &[Elem], path: &PathSpec) -> Result<IntegralValue> {
        self.validate_lambda(lambda)?;
        let refs = self.refs()?;
        self.check_endpoint(&path.start, path.start_vertex, "path start")?;
        self.check_endpoint(&path.end, path.end_vertex, "path end")?;
        self.validate_word(&path.word, path.start_vertex, path.end_vertex)?;
        let ns = self.graph.vertices[path.start_vertex].tree_vertex;
        let ne = self.graph.vertices[path.end_vertex].tree_vertex;
        let mut total =
            self.chart_leg(ns, lambda, &path.start, &refs.vertex[path.start_vertex])?;
        total = &total + &self.edge_word_sum(lambda, &path.word)?;
        total = &total + &self.chart_leg(ne, lambda, &refs.vertex[path.end_vertex], &path.end)?;
        Ok(self.value(total, IntegralKind::BerkovichColeman))
    }

    /// Period of `ω = Σ λ_i ω_i` over a closed walk.
    pub fn period(&self, lambda: &[Elem], word: &[PathStep]) -> Result<IntegralValue> {
        self.validate_lambda(lambda)?;
        if let Some(first) = word.first() {
            let base = self.step_tail(first);
            if self.validate_word(word, base, base).is_err() {
                return Err(BcError::NotClosed);
            }
        }
        Ok(self.value(self.edge_word_sum(lambda, word)?, IntegralKind::Period))
    }

    /// Closed walks `γ_i` representing the homology basis of `Γ` coming
    /// from the covering tree, with the dual tropical one-forms `η_i`
    /// (`∫_{γ_i} η_j = δ_ij`).
    fn dual_basis(&self) -> Result<(Vec<TropPath>, Vec<TropicalOneForm>)> {
        let rel = relative_even_basis(&self.tree);
        let h = rel.len();
        debug_assert_eq!(h as i64, self.graph.b1());
        let mut walks = Vec::with_capacity(h);
        let mut etas = Vec::with_capacity(h);
        if h == 0 {
            return Ok((walks, etas));
        }
        let gram: Vec<Vec<Rat>> = rel
            .iter()
            .map(|ci| rel.iter().map(|cj| cycle_pairing(ci, cj)).collect())
            .collect();
        for i in 0..h {
            let cycle = iota(&self.graph, &self.tree, &rel[i]);
            walks.push(chain_to_walk(&self.graph, &cycle).ok_or_else(|| {
                BcError::BadPath("homology class has no closed-walk representative".into())
            })?);
            let mut unit = vec![rat(0); h];
            unit[i] = rat(1);
            let co = solve_rational(&gram, &unit);
            let mut dual = vec![rat(0); self.tree.edges.len()];
            for (j, cj) in rel.iter().enumerate() {
                for (te, v) in cj.iter().enumerate() {
                    dual[te] += co[j] * v;
                }
            }
            // The lift doubles the intersection pairing, hence the ½.
            etas.push(TropicalOneForm::from_chain(&iota(&self.graph, &self.tree, &dual)).scale(Rat::new(1, 2)));
        }
        Ok((walks, etas))
    }

    /// Periods of `ω = Σ λ_i ω_i` over the homology basis walks.
    pub fn periods(&self, lambda: &[Elem]) -> Result<Vec<IntegralValue>> {
        self.validate_lambda(lambda)?;
        let (walks, _) = self.dual_basis()?;
        walks
            .iter()
            .map(|w| {
                Ok(self.value(self.edge_word_sum(lambda, &w.steps)?, IntegralKind::Period))
            })
            .collect()
    }

    /// Path-independent (abelian) integral of `ω = Σ λ_i ω_i` from
    /// `path.start` to `path.end`: the Berkovich–Coleman integral minus the
    /// period correction weighted by tropical integrals along the
    /// tropicalized path.
    pub fn abelian_integral(&self, lambda: &[Elem], path: &PathSpec) -> Result<IntegralValue> {
        let bc = self.bc_integral(lambda, path)?;
        let (walks, etas) = self.dual_basis()?;
        let mut total = bc.value;
        for (walk, eta) in walks.iter().zip(&etas) {
            let t = tropical_integral(&self.graph, eta, &TropPath::whole(path.word.clone()))?;
            if t == rat(0) {
                continue;
            }
            let per = self.edge_word_sum(lambda, &walk.steps)?;
            let tk = Elem::from_ratio_i64(&self.field, *t.numer(), *t.denom());
            total = &total - &(&per * &tk);
        }
        Ok(self.value(total, IntegralKind::Abelian))
    }

    /// Abelian integral along a shortest edge word between the vertices
    /// the endpoints reduce to (any word gives the same answer).
    pub fn abelian_between(
        &self,
        lambda: &[Elem],
        s: &CurvePoint,
        r: &CurvePoint,
    ) -> Result<IntegralValue> {
        let sv = self.locate_vertex(s)?;
        let rv = self.locate_vertex(r)?;
        let word = self
            .shortest_word(sv, rv)
            .ok_or_else(|| BcError::BadPath("endpoints lie on different components of Γ".into()))?;
        self.abelian_integral(
            lambda,
            &PathSpec {
                start: s.clone(),
                start_vertex: sv,
                end: r.clone(),
                end_vertex: rv,
                word,
            },
        )
    }

    /// Shortest edge word between two Γ-vertices (BFS).
    pub fn shortest_word(&self, from: usize, to: usize) -> Option<Vec<PathStep>> {
        if from == to {
            return Some(vec![]);
        }
        let n = self.graph.vertices.len();
        let mut prev: Vec<Option<PathStep>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for (ei, e) in self.graph.edges.iter().enumerate() {
                for forward in [true, false] {
                    let (tail, head) = if forward { (e.a, e.b) } else { (e.b, e.a) };
                    if tail == v && !seen[head] {
                        seen[head] = true;
                        prev[head] = Some(PathStep { edge: ei, forward });
                        queue.push_back(head);
                    }
                }
            }
        }
        if !seen[to] {
            return None;
        }
        let mut word = vec![];
        let mut cur = to;
        while cur != from {
            let st = prev[cur].clone().expect("BFS predecessor");
            cur = self.step_tail(&st);
            word.push(st);
        }
        word.reverse();
        Some(word)
    }

    /// For a genus-2 curve with both endpoints reducing into one chart:
    /// the coefficients `(b, −a)` with `a = ∫_s^r ω_0`, `b = ∫_s^r ω_1`,
    /// so that `b·ω_0 − a·ω_1` kills the integral between `s` and `r`.
    pub fn chabauty_annihilator(&self, s: &CurvePoint, r: &CurvePoint) -> Result<(Elem, Elem)> {
        if self.genus() < 2 {
            return Err(BcError::BadPath("needs a curve of genus ≥ 2".into()));
        }
        let vs = self.locate_vertex(s)?;
        let vr = self.locate_vertex(r)?;
        if vs != vr {
            return Err(BcError::BadPath(
                "both points must reduce into one chart".into(),
            ));
        }
        let node = self.graph.vertices[vs].tree_vertex;
        let one = Elem::one(&self.field);
        let zero = Elem::zero(&self.field);
        let a = self.chart_leg(node, &[one.clone()], s, r)?;
        let b = self.chart_leg(node, &[zero, one], s, r)?;
        Ok((b, a.negate()))
    }
}

/// `ỹ` on a split chart as an exact sign `±1`.
fn unit_sign(field: &FieldRef, y: &Elem) -> Result<Elem> {
    let one = Elem::one(field);
    let dp = y - &one;
    if dp.is_zero() || dp.valuation() >= 1 {
        return Ok(one);
    }
    let dm = y + &one;
    if dm.is_zero() || dm.valuation() >= 1 {
        return Ok(one.negate());
    }
    Err(BcError::ComponentAmbiguity(
        "ỹ is not ±1 on a split chart".into(),
    ))
}

/// `∫_s^r num(x)·∏(x−β_j)^{−n_j} dx` by partial fractions: polynomial
/// part, power primitives, and Iwasawa logarithms for the simple poles.
pub fn integrate_rational(
    field: &FieldRef,
    num: &Poly,
    poles: &[(Elem, i64)],
    s: &Elem,
    r: &Elem,
) -> Result<Elem> {
    let mut den = Poly::one(field);
    for (beta, n) in poles {
        let lin = Poly::x_minus(beta);
        for _ in 0..*n {
            den = den.mul(&lin);
        }
    }
    let (q, rem) = num.divmod(&den)?;
    let prim = q.antiderivative()?;
    let mut total = &prim.eval(r) - &prim.eval(s);
    let dim: i64 = poles.iter().map(|(_, n)| n).sum();
    if dim == 0 {
        return Ok(total);
    }
    // rem/den = Σ_{j,m} c_{jm}·(x−β_j)^{−m}: match coefficients of
    // rem = Σ c_{jm}·den/(x−β_j)^m.
    let mut cols: Vec<Poly> = vec![];
    let mut pole_of: Vec<(usize, i64)> = vec![];
    for (j, (beta, nj)) in poles.iter().enumerate() {
        let lin = Poly::x_minus(beta);
        for m in 1..=*nj {
            let mut b = Poly::one(field);
            for (k, (bk, nk)) in poles.iter().enumerate() {
                let link = Poly::x_minus(bk);
                let reps = if k == j { nk - m } else { *nk };
                for _ in 0..reps {
                    b = b.mul(&link);
                }
            }
            let _ = &lin;
            cols.push(b);
            pole_of.push((j, m));
        }
    }
    let d = dim as usize;
    let mat: Vec<Vec<Elem>> = (0..d)
        .map(|row| cols.iter().map(|c| c.coeff(row)).collect())
        .collect();
    let rhs: Vec<Elem> = (0..d).map(|row| rem.coeff(row)).collect();
    let coeffs = solve_dense(&mat, &rhs)?;
    for (c, &(j, m)) in coeffs.iter().zip(&pole_of) {
        if c.is_zero() {
            continue;
        }
        let beta = &poles[j].0;
        let rs = r - beta;
        let ss = s - beta;
        if m == 1 {
            total = &total + &(c * &rs.div(&ss)?.log_iwasawa()?);
        } else {
            let pw = &rs.pow_i64(1 - m) - &ss.pow_i64(1 - m);
            total = &total + &(c * &pw.div_i64(1 - m)?);
        }
    }
    Ok(total)
}

/// Chord–tangent addition on `y² = g(x)` with `g` a cubic: returns
/// `P + Q` in affine coordinates (errors when the sum is the point at
/// infinity).
pub fn elliptic_add(g: &Poly, p: &CurvePoint, q: &CurvePoint) -> Result<CurvePoint> {
    if g.degree() != Some(3) {
        return Err(BcError::BadPath("chord–tangent law needs a cubic".into()));
    }
    let lead = g.coeff(3);
    let dx = &q.x - &p.x;
    let lam = if dx.is_zero() {
        if (&q.y + &p.y).is_zero() {
            return Err(BcError::BadPath("sum is the point at infinity".into()));
        }
        g.derivative().eval(&p.x).div(&p.y.mul_i64(2))?
    } else {
        (&q.y - &p.y).div(&dx)?
    };
    // x₁ + x₂ + x₃ = (λ² − a₂)/a₃ for g = a₃x³ + a₂x² + …
    let sum = (&(&lam * &lam) - &g.coeff(2)).div(&lead)?;
    let x3 = &sum - &(&p.x + &q.x);
    let y3 = (&(&lam * &(&x3 - &p.x)) + &p.y).negate();
    Ok(CurvePoint::new(x3, y3))
}
