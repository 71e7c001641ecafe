//! Good-reduction charts over the covering elements.
//!
//! For a node `U` of the covering tree, the double cover `π⁻¹(U)` is
//! described by a chart: after the affine normalization `x = c + S·x̃`
//! (which puts the roots of `f` seen by `U` into the closed unit disc),
//! the defining polynomial factors as
//!
//! ```text
//!   f(c + S·x̃) = c_tot · g(x̃) · h(x̃)² · k(x̃),
//! ```
//!
//! where `g` collects one root per residue disc (the chart curve is
//! `ỹ² = g(x̃)`, of good reduction), `h(x̃) = ∏ (x̃ − β_j)^{L_j}` collects
//! the deleted-disc centers with multiplicity, and `k` is a unit on the
//! chart: a product of factors `1 − δ/(x̃ − β_j)` (within-cluster root
//! differences δ) and `1 − x̃/r̃` (roots outside the chart).  The analytic
//! square root `ℓ(x̃) = h(x̃)·k(x̃)^{1/2}` (branch ≡ 1 for each unit
//! factor) and `y_scale = c_tot^{1/2}` give the coordinate change
//! `y = y_scale · ℓ(x̃) · ỹ`.
//!
//! [`expand_form`] rewrites `x^i dx/2y` on the chart as a finite sum of
//! *elementary terms* `B · x̃^{n_∞} ∏ (x̃ − β_j)^{−n_j} · dx̃/2ỹ` plus a
//! certified tail: the series coefficients decay at least like
//! `π^{n·v_min}` per excess pole order, evaluation inside the declared
//! region costs at most the declared depth per order, and primitives cost
//! at most `e/(p−1)` per order plus logarithmic denominators — the
//! truncation keeps every term whose worst-case contribution exceeds the
//! target and certifies the rest below it.

use num_rational::Rational64;
use thiserror::Error;

use crate::newton_cover::{CoveringTree, Parity, RootLabel};
use crate::padic::{ceil_log_p, Elem, FieldRef, PadicError};
use crate::poly::Poly;

pub type Rat = Rational64;

fn rat(n: i64) -> Rat {
    Rat::from_integer(n)
}

#[derive(Debug, Clone, Error)]
pub enum ChartError {
    /// Two objects that must occupy distinct residue discs do not.
    #[error("residue discs not separated: {0}")]
    NonSeparableResidues(String),
    /// A required square root does not exist in `K` (or needs a hint).
    #[error("square-root branch undetermined: {0}")]
    SquareRootBranchUndetermined(String),
    /// The expansions only converge when `e < p − 1`.
    #[error("ramification e = {e} too large for p = {p}: expansions need e < p − 1")]
    RamificationTooLarge { e: i64, p: u64 },
    /// The requested region/precision combination cannot be certified.
    #[error("target precision unreachable: {0}")]
    TargetPrecisionUnreachable(String),
    /// Evaluation at a point outside the chart's region of validity.
    #[error("point outside the chart region: {0}")]
    PointOutsideChart(String),
    /// The covering node carries no geometry (synthetic tree).
    #[error("covering node carries no geometry")]
    MissingGeometry,
    #[error(transparent)]
    Padic(#[from] PadicError),
}

pub type Result<T> = std::result::Result<T, ChartError>;

/// A deleted-disc center `β_j` of a chart, with the data of its cluster.
#[derive(Debug, Clone)]
pub struct ClusterCenter {
    /// The center, in normalized chart coordinates.
    pub beta: Elem,
    /// Whether the cluster has odd size (then `β_j` is a root of `g`).
    pub weierstrass: bool,
    /// `L_j`: the multiplicity of `(x̃ − β_j)` in `h`.
    pub multiplicity: i64,
    /// Within-cluster differences `β − β_j` (normalized), `β ≠ β_j`.
    pub deltas: Vec<Elem>,
    /// Minimum π-valuation of the deltas (≥ 1).
    pub v_min: i64,
    /// π-valuation exponent of the deleted closed disc radius, in
    /// normalized coordinates (how deep the adjoining annulus goes).
    pub annulus_val: Rat,
}

/// A good-reduction chart `ỹ² = g(x̃)` over one covering element.
#[derive(Debug, Clone)]
pub struct WideOpenChart {
    field: FieldRef,
    /// Index of the covering-tree node this chart covers.
    pub node: usize,
    /// Whether the double cover of the node is disconnected (two
    /// components, swapped by the hyperelliptic involution).
    pub even: bool,
    /// Genus of the chart curve (−1 for the disconnected case).
    pub genus: i64,
    /// Affine normalization `x = center + scale · x̃`.
    pub center: Elem,
    pub scale: Elem,
    /// π-valuation of `scale`.
    pub scale_val: i64,
    /// `y = y_scale · ℓ(x̃) · ỹ`.
    pub y_scale: Elem,
    /// The chart curve polynomial (monic, one root per residue disc).
    pub g: Poly,
    pub g_roots: Vec<Elem>,
    /// Deleted-disc centers `β_1 … β_ℓ`.
    pub centers: Vec<ClusterCenter>,
    /// `1/r̃` for every root of `f` outside the chart (all of positive
    /// valuation).
    pub outer_inv: Vec<Elem>,
    /// Minimum π-valuation among the `outer_inv` (None when empty).
    pub outer_v_min: Option<i64>,
}

/// One meromorphic summand `coeff · x̃^{x_power} ∏ (x̃−β_j)^{−pole_orders[j]}`
/// of the expansion of a form (always relative to `dx̃/2ỹ`).
#[derive(Debug, Clone)]
pub struct ElementaryTerm {
    pub coeff: Elem,
    /// Pole order at each chart center, in center order.
    pub pole_orders: Vec<i64>,
    /// Power of `x̃` in the numerator (≥ 0).
    pub x_power: i64,
}

/// Where the expansion will be evaluated/integrated: upper bounds, in
/// π-digits, on `v_π(x̃ − β_j)` (per center) and on `−v_π(x̃)`.
#[derive(Debug, Clone)]
pub struct ExpansionRegion {
    pub center_depth: Vec<Rat>,
    pub outer_growth: Rat,
}

/// A truncated expansion with a certified tail: the omitted terms (and
/// their primitives) contribute valuation ≥ `tail_val` anywhere in the
/// region the expansion was produced for.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub terms: Vec<ElementaryTerm>,
    pub tail_val: i64,
}

/// Finite root indices contained in the subtree rooted at `node`.
fn subtree_roots(tree: &CoveringTree, node: usize) -> Vec<usize> {
    let mut out = vec![];
    let mut stack = vec![node];
    while let Some(v) = stack.pop() {
        for he in &tree.nodes[v].half_edges {
            if let RootLabel::Finite(i) = he {
                out.push(*i);
            }
        }
        for (_, ch) in tree.children(v) {
            stack.push(ch);
        }
    }
    out.sort_unstable();
    out
}

impl WideOpenChart {
    /// Build the chart over covering node `node`.  `lc` is the leading
    /// coefficient of `f`; `sqrt_hint` (optional) selects the branch of
    /// the `y`-normalization constant's square root.
    pub fn build(
        tree: &CoveringTree,
        node: usize,
        lc: &Elem,
        sqrt_hint: Option<&Elem>,
    ) -> Result<WideOpenChart> {
        let field = lc.field().clone();
        let cover_node = &tree.nodes[node];
        let geo = cover_node
            .geometry
            .as_ref()
            .ok_or(ChartError::MissingGeometry)?;
        let center = geo.center.clone();

        // Groups seen by this node: its own half-edge roots as singletons
        // and one cluster per child subtree.
        let half_roots: Vec<usize> = cover_node
            .half_edges
            .iter()
            .filter_map(|he| match he {
                RootLabel::Finite(i) => Some(*i),
                RootLabel::Infinity => None,
            })
            .collect();
        let children = tree.children(node);
        let cluster_roots: Vec<Vec<usize>> = children
            .iter()
            .map(|&(_, ch)| subtree_roots(tree, ch))
            .collect();
        if geo.deleted.len() != cluster_roots.len() {
            return Err(ChartError::MissingGeometry);
        }

        // The node's scale: the (common) π-valuation of cross-group root
        // differences.  With fewer than two groups the chart is a single
        // point cluster; use scale 0.
        let mut groups: Vec<Vec<usize>> = half_roots.iter().map(|&i| vec![i]).collect();
        groups.extend(cluster_roots.iter().cloned());
        let mut scale_val: Option<i64> = None;
        for a in 0..groups.len() {
            for b in (a + 1)..groups.len() {
                for &i in &groups[a] {
                    for &j in &groups[b] {
                        let d = &tree.roots[i] - &tree.roots[j];
                        let v = d.valuation();
                        scale_val = Some(scale_val.map_or(v, |s: i64| s.min(v)));
                    }
                }
            }
        }
        let scale_val = scale_val.unwrap_or(0);
        let scale = if scale_val >= 0 {
            Elem::pi_pow(&field, scale_val)
        } else {
            Elem::pi_pow(&field, -scale_val).inv()?
        };
        let scale_inv = scale.inv()?;
        let norm = |r: &Elem| -> Elem { &(r - &center) * &scale_inv };

        // In-chart roots and the g-polynomial.
        let mut g_roots: Vec<Elem> = vec![];
        for &i in &half_roots {
            g_roots.push(norm(&tree.roots[i]));
        }
        let mut centers: Vec<ClusterCenter> = vec![];
        for (ci, cl) in cluster_roots.iter().enumerate() {
            let b = cl[0];
            let beta = norm(&tree.roots[b]);
            let mut deltas = vec![];
            let mut v_min = i64::MAX;
            for &j in &cl[1..] {
                let d = &norm(&tree.roots[j]) - &beta;
                if d.is_zero() {
                    return Err(ChartError::NonSeparableResidues(format!(
                        "cluster roots {b} and {j} indistinguishable"
                    )));
                }
                v_min = v_min.min(d.valuation());
                deltas.push(d);
            }
            if v_min < 1 {
                return Err(ChartError::NonSeparableResidues(format!(
                    "cluster at center index {ci} not inside one residue disc"
                )));
            }
            let odd = cl.len() % 2 == 1;
            if odd {
                g_roots.push(beta.clone());
            }
            let annulus_val = geo.deleted[ci].1 * rat(field.e) - rat(scale_val);
            centers.push(ClusterCenter {
                beta,
                weierstrass: odd,
                multiplicity: (cl.len() as i64) / 2,
                deltas,
                v_min,
                annulus_val,
            });
        }

        // Residue-disc separation of the chart's distinguished points.
        let mut marks: Vec<&Elem> = g_roots.iter().collect();
        for cc in &centers {
            if !cc.weierstrass {
                marks.push(&cc.beta);
            }
        }
        for m in &marks {
            if m.valuation() < 0 {
                return Err(ChartError::NonSeparableResidues(
                    "chart root outside the closed unit disc".into(),
                ));
            }
        }
        for a in 0..marks.len() {
            for b in (a + 1)..marks.len() {
                let d = &*marks[a] - &*marks[b];
                if d.is_zero() || d.valuation() != 0 {
                    return Err(ChartError::NonSeparableResidues(
                        "two chart roots/centers share a residue disc".into(),
                    ));
                }
            }
        }
        let g = Poly::from_roots(&field, &g_roots);

        // Outer roots and the y-normalization constant.
        let in_subtree = subtree_roots(tree, node);
        let mut outer_inv = vec![];
        let mut outer_v_min: Option<i64> = None;
        let mut c_tot = lc.clone();
        let in_count = in_subtree.len() as i64;
        c_tot = &c_tot * &scale.pow_i64(in_count);
        for i in 0..tree.roots.len() {
            if in_subtree.binary_search(&i).is_ok() {
                continue;
            }
            let rn = norm(&tree.roots[i]);
            if rn.is_zero() || rn.valuation() >= 0 {
                return Err(ChartError::NonSeparableResidues(format!(
                    "root {i} outside the chart subtree lies inside its unit disc"
                )));
            }
            // x − r = −(r − c) · (1 − x̃/r̃), so the constant picks up
            // −(r − c) = −scale·r̃ and the unit factor 1 − x̃·(1/r̃).
            c_tot = &c_tot * &(&rn * &scale).negate();
            let ri = rn.inv()?;
            let v = ri.valuation();
            outer_v_min = Some(outer_v_min.map_or(v, |m: i64| m.min(v)));
            outer_inv.push(ri);
        }

        let y_scale = match c_tot.sqrt(sqrt_hint) {
            Ok(v) => v,
            Err(PadicError::OddValuation { .. }) | Err(PadicError::NonSquareResidue) => {
                return Err(ChartError::SquareRootBranchUndetermined(
                    "y-normalization constant has no square root in K; \
                     supply a hint or enlarge the field"
                        .into(),
                ))
            }
            Err(e) => return Err(e.into()),
        };

        // Unit-norm checks at the centers.
        for cc in &centers {
            let (val, what) = if cc.weierstrass {
                (g.derivative().eval(&cc.beta).valuation(), "g′")
            } else {
                (g.eval(&cc.beta).valuation(), "g")
            };
            if val != 0 {
                return Err(ChartError::NonSeparableResidues(format!(
                    "‖{what}(β)‖ ≠ 1 at a deleted-disc center"
                )));
            }
        }

        let even = cover_node.parity == Some(Parity::Even);
        let deg_g = g.degree().map_or(0, |d| d as i64);
        let branch = deg_g + deg_g % 2;
        let genus = (branch - 2) / 2;
        if let Some(label) = cover_node.genus {
            debug_assert_eq!(label, genus, "chart genus disagrees with tree label");
        }

        Ok(WideOpenChart {
            field,
            node,
            even,
            genus,
            center,
            scale,
            scale_val,
            y_scale,
            g,
            g_roots,
            centers,
            outer_inv,
            outer_v_min,
        })
    }

    pub fn field(&self) -> &FieldRef {
        &self.field
    }

    /// `x = center + scale·x̃`.
    pub fn from_chart_x(&self, xt: &Elem) -> Elem {
        &self.center + &(&self.scale * xt)
    }

    /// `x̃ = (x − center)/scale`.
    pub fn to_chart_x(&self, x: &Elem) -> Result<Elem> {
        Ok(&(x - &self.center) * &self.scale.inv()?)
    }

    /// The unit `k(x̃)` under the square root of `ℓ`, with validity checks
    /// (every factor must be ≡ 1 mod π at the point).
    fn k_unit_at(&self, xt: &Elem) -> Result<Elem> {
        let one = Elem::one(&self.field);
        let mut acc = Elem::one(&self.field);
        for cc in &self.centers {
            let diff = xt - &cc.beta;
            if diff.is_zero() {
                return Err(ChartError::PointOutsideChart(
                    "evaluation at a deleted-disc center".into(),
                ));
            }
            let t = diff.inv()?;
            for d in &cc.deltas {
                let w = d * &t;
                if !w.is_zero() && w.valuation() <= 0 {
                    return Err(ChartError::PointOutsideChart(
                        "point inside a deleted disc".into(),
                    ));
                }
                acc = &acc * &(&one - &w);
            }
        }
        for ri in &self.outer_inv {
            let w = xt * ri;
            if !w.is_zero() && w.valuation() <= 0 {
                return Err(ChartError::PointOutsideChart(
                    "point beyond the chart's outer radius".into(),
                ));
            }
            acc = &acc * &(&one - &w);
        }
        Ok(acc)
    }

    /// `ℓ(x̃) = h(x̃)·k(x̃)^{1/2}` with the branch ≡ 1 on each unit factor.
    pub fn ell_at(&self, xt: &Elem) -> Result<Elem> {
        let one = Elem::one(&self.field);
        let unit = self.k_unit_at(xt)?;
        let root = unit.sqrt(Some(&one))?;
        let mut h = Elem::one(&self.field);
        for cc in &self.centers {
            h = &h * &(xt - &cc.beta).pow_i64(cc.multiplicity);
        }
        Ok(&h * &root)
    }

    /// Map a curve point `(x, y)` (global coordinates, `y² = f(x)`) to
    /// chart coordinates `(x̃, ỹ)` with `ỹ² = g(x̃)`.
    pub fn to_chart(&self, x: &Elem, y: &Elem) -> Result<(Elem, Elem)> {
        let xt = self.to_chart_x(x)?;
        let ell = self.ell_at(&xt)?;
        let yt = y.div(&(&self.y_scale * &ell))?;
        Ok((xt, yt))
    }

    /// Map chart coordinates back to the curve.
    pub fn from_chart(&self, xt: &Elem, yt: &Elem) -> Result<(Elem, Elem)> {
        let x = self.from_chart_x(xt);
        let y = &(&self.y_scale * &self.ell_at(xt)?) * yt;
        Ok((x, y))
    }

    /// The default region: depth `(1 − e/(p−1))/2` into every annulus and
    /// the same allowance beyond the unit disc (midpoint of the certified
    /// convergence range).
    pub fn default_region(&self) -> ExpansionRegion {
        let half = (rat(1) - Rat::new(self.field.e, self.field.p as i64 - 1)) / rat(2);
        ExpansionRegion {
            center_depth: vec![half; self.centers.len()],
            outer_growth: half,
        }
    }

    /// Coefficients `B_{j,0..=m}` of `k_j(x̃)^{−1/2}` as a series in
    /// `t = 1/(x̃ − β_j)`.
    pub(crate) fn center_series(&self, j: usize, m: usize) -> Vec<Elem> {
        inv_sqrt_series(&self.field, &self.centers[j].deltas, m)
    }

    /// Coefficients of `k_∞(x̃)^{−1/2}` as a series in `x̃`.
    pub(crate) fn outer_series(&self, m: usize) -> Vec<Elem> {
        inv_sqrt_series(&self.field, &self.outer_inv, m)
    }
}

/// Truncated product of two coefficient vectors (degree ≤ `m`).
fn trunc_mul(field: &FieldRef, a: &[Elem], b: &[Elem], m: usize) -> Vec<Elem> {
    let n = (a.len() + b.len()).saturating_sub(1).min(m + 1);
    let mut out = vec![Elem::zero(field); n];
    for (i, ai) in a.iter().enumerate() {
        if i > m || ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            if i + j > m {
                break;
            }
            out[i + j] = &out[i + j] + &(ai * bj);
        }
    }
    out
}

/// Series coefficients of `(∏ (1 − δ·t))^{−1/2}` up to degree `m`, via
/// the binomial series (its coefficients are p-integral for odd p).  The
/// degree-`n` coefficient has π-valuation ≥ `n · min v_π(δ)`.
fn inv_sqrt_series(field: &FieldRef, deltas: &[Elem], m: usize) -> Vec<Elem> {
    let one = Elem::one(field);
    let mut k = vec![one.clone()];
    for d in deltas {
        k = trunc_mul(field, &k, &[one.clone(), d.negate()], m);
    }
    // w = k − 1 has zero constant term, so wⁿ needs n ≤ m only.
    let mut w = k;
    w[0] = &w[0] - &one;
    let mut acc = vec![Elem::zero(field); m + 1];
    acc[0] = one.clone();
    let mut wpow = vec![one];
    let mut coef = Elem::one(field);
    for n in 1..=(m as i64) {
        wpow = trunc_mul(field, &wpow, &w, m);
        coef = &coef * &Elem::from_ratio_i64(field, -(2 * n - 1), 2 * n);
        for (i, c) in wpow.iter().enumerate() {
            acc[i] = &acc[i] + &(c * &coef);
        }
    }
    acc
}

/// Expand `ω_i = x^i dx/2y` on the chart into elementary terms relative
/// to `dx̃/2ỹ`, certified to contribute everything above `π^{target}` on
/// the given region (primitives included).
pub fn expand_form(
    chart: &WideOpenChart,
    i: usize,
    region: &ExpansionRegion,
    target: i64,
) -> Result<Expansion> {
    let field = chart.field();
    let p = field.p;
    if field.e >= p as i64 - 1 {
        return Err(ChartError::RamificationTooLarge { e: field.e, p });
    }
    if region.center_depth.len() != chart.centers.len() {
        return Err(ChartError::TargetPrecisionUnreachable(
            "region has the wrong number of center depths".into(),
        ));
    }
    let denom_cost = Rat::new(field.e, p as i64 - 1);
    let mut slopes: Vec<Rat> = vec![];
    for (j, cc) in chart.centers.iter().enumerate() {
        let s = rat(cc.v_min) - region.center_depth[j] - denom_cost;
        if s <= rat(0) {
            return Err(ChartError::TargetPrecisionUnreachable(format!(
                "no decay at center {j}: series gain {} vs region depth {}",
                cc.v_min, region.center_depth[j]
            )));
        }
        slopes.push(s);
    }
    let outer_slope = match chart.outer_v_min {
        None => None,
        Some(v) => {
            let s = rat(v) - region.outer_growth - denom_cost;
            if s <= rat(0) {
                return Err(ChartError::TargetPrecisionUnreachable(format!(
                    "no decay in the outer direction: gain {v} vs growth {}",
                    region.outer_growth
                )));
            }
            Some(s)
        }
    };

    // Numerator polynomial (c + S·x̃)^i · S / y_scale.
    let lin = Poly::new(field, vec![chart.center.clone(), chart.scale.clone()]);
    let mut num = Poly::one(field);
    for _ in 0..i {
        num = num.mul(&lin);
    }
    num = num.scale(&(&chart.scale * &chart.y_scale.inv()?));
    let v0 = num
        .coeffs()
        .iter()
        .filter(|c| !c.is_zero())
        .map(|c| c.valuation())
        .min()
        .unwrap_or(0)
        .min(0);

    // Fixed point for the flat part of the primitive-loss budget (it
    // depends logarithmically on the maximal degree kept).
    let mut flat = field.e * 4 + 4;
    let w_cap;
    loop {
        let cap = rat(target + flat - v0);
        let mut d_max = i as i64;
        for (j, s) in slopes.iter().enumerate() {
            d_max += chart.centers[j].multiplicity + (cap / s).floor().to_integer();
        }
        if let Some(s) = outer_slope {
            d_max += (cap / s).floor().to_integer();
        }
        let flat2 = field.e * (ceil_log_p(p, d_max + 2) + 4) + 4;
        if flat2 <= flat {
            w_cap = cap;
            break;
        }
        flat = flat2;
    }

    struct Partial {
        coeff: Elem,
        poles: Vec<i64>,
        xp: i64,
        weight: Rat,
    }
    let nl = chart.centers.len();
    let mut list: Vec<Partial> = num
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(a, c)| Partial {
            coeff: c.clone(),
            poles: vec![0; nl],
            xp: a as i64,
            weight: rat(0),
        })
        .collect();
    for (j, slope) in slopes.iter().enumerate() {
        let m = (w_cap / slope).floor().to_integer().max(0) as usize;
        let ser = chart.center_series(j, m);
        let lj = chart.centers[j].multiplicity;
        let mut next = vec![];
        for t in &list {
            for (n, b) in ser.iter().enumerate() {
                let w = t.weight + rat(n as i64) * slope;
                if n > 0 && w >= w_cap {
                    break;
                }
                let c = &t.coeff * b;
                if c.is_zero() && n > 0 {
                    continue;
                }
                let mut poles = t.poles.clone();
                poles[j] = lj + n as i64;
                next.push(Partial {
                    coeff: c,
                    poles,
                    xp: t.xp,
                    weight: w,
                });
            }
        }
        list = next;
    }
    if let Some(slope) = outer_slope {
        let m = (w_cap / slope).floor().to_integer().max(0) as usize;
        let ser = chart.outer_series(m);
        let mut next = vec![];
        for t in &list {
            for (n, b) in ser.iter().enumerate() {
                let w = t.weight + rat(n as i64) * slope;
                if n > 0 && w >= w_cap {
                    break;
                }
                let c = &t.coeff * b;
                if c.is_zero() && n > 0 {
                    continue;
                }
                next.push(Partial {
                    coeff: c,
                    poles: t.poles.clone(),
                    xp: t.xp + n as i64,
                    weight: w,
                });
            }
        }
        list = next;
    }
    let terms = list
        .into_iter()
        .map(|t| ElementaryTerm {
            coeff: t.coeff,
            pole_orders: t.poles,
            x_power: t.xp,
        })
        .collect();
    Ok(Expansion {
        terms,
        tail_val: target,
    })
}

/// Evaluate `Σ coeff·x̃^{xp}·∏(x̃−β)^{−n}` at a point (the coefficient of
/// `dx̃/2ỹ`, not the form itself).
pub fn eval_terms(chart: &WideOpenChart, terms: &[ElementaryTerm], xt: &Elem) -> Result<Elem> {
    let field = chart.field();
    let mut acc = Elem::zero(field);
    let invs: Vec<Elem> = chart
        .centers
        .iter()
        .map(|cc| (xt - &cc.beta).inv())
        .collect::<crate::padic::Result<_>>()?;
    for t in terms {
        let mut v = &t.coeff * &xt.pow_i64(t.x_power);
        for (j, &n) in t.pole_orders.iter().enumerate() {
            v = &v * &invs[j].pow_i64(n);
        }
        acc = &acc + &v;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton_cover::build_covering;
    use crate::padic::Field;

    fn ints(field: &FieldRef, ns: &[i64]) -> Vec<Elem> {
        ns.iter().map(|&n| Elem::from_i64(field, n)).collect()
    }

    fn covering(field: &FieldRef, roots: &[i64], odd: bool) -> CoveringTree {
        let mut t = build_covering(field, &ints(field, roots), odd).unwrap();
        t.label_parity_and_genus();
        t
    }

    #[test]
    fn genus1_outer_chart_matches_closed_form() {
        // f = (x−6)(x−5)(x+11), p = 17, outer chart: g has the single
        // root 5 (shifted), h(x) = x−6 and k = 1 + 17/(x−6).
        let f = Field::qp(17, 14).unwrap();
        let t = covering(&f, &[6, 5, -11], true);
        let ch = WideOpenChart::build(&t, t.root, &Elem::one(&f), None).unwrap();
        assert_eq!(ch.scale_val, 0);
        assert!(ch.center.eq_mod(&Elem::from_i64(&f, 6), 12));
        assert!(!ch.even);
        assert_eq!(ch.genus, 0);
        assert!(ch.y_scale.pow_i64(2).eq_mod(&Elem::one(&f), 12));
        // g(x̃) = x̃ + 1, i.e. x − 5 in the original coordinate.
        assert_eq!(ch.g.degree(), Some(1));
        assert!(ch.g_roots[0].eq_mod(&Elem::from_i64(&f, -1), 12));
        assert_eq!(ch.centers.len(), 1);
        let cc = &ch.centers[0];
        assert!(cc.beta.is_zero());
        assert!(!cc.weierstrass);
        assert_eq!(cc.multiplicity, 1);
        assert_eq!(cc.deltas.len(), 1);
        assert!(cc.deltas[0].eq_mod(&Elem::from_i64(&f, -17), 12));
        // ℓ(x̃) against the closed form x̃·(1 + 17/x̃)^{1/2} at x̃ = 4.
        let xt = Elem::from_i64(&f, 4);
        let ell = ch.ell_at(&xt).unwrap();
        let direct = &xt
            * &(&Elem::one(&f) + &Elem::from_ratio_i64(&f, 17, 4))
                .sqrt(Some(&Elem::one(&f)))
                .unwrap();
        assert!(ell.eq_mod(&direct, 11), "ℓ = {ell}, closed form {direct}");
    }

    #[test]
    fn genus2_inner_chart_matches_closed_form() {
        // f = x(x−1)(x−2)(x−3)(x−7), p = 7, inner chart x̃ = x/7:
        // ỹ² = x̃(x̃−1) and (y_scale·ℓ(x̃))² = 7²(7x̃−1)(7x̃−2)(7x̃−3).
        let f = Field::pure_eisenstein(7, 2, 14, "a").unwrap();
        let t = covering(&f, &[0, 1, 2, 3, 7], true);
        let inner = t.edges[0].child;
        let ch = WideOpenChart::build(&t, inner, &Elem::one(&f), None).unwrap();
        assert_eq!(ch.scale_val, 2); // scale = 7 = π²
        assert_eq!(ch.g.degree(), Some(2));
        assert_eq!(ch.genus, 0);
        assert_eq!(ch.centers.len(), 0);
        assert_eq!(ch.outer_inv.len(), 3);
        let xt = Elem::from_i64(&f, 3);
        let lhs = (&ch.y_scale * &ch.ell_at(&xt).unwrap()).pow_i64(2);
        let mut rhs = Elem::from_i64(&f, 49);
        for r in [1i64, 2, 3] {
            rhs = &rhs * &(&Elem::from_i64(&f, 7 * 3) - &Elem::from_i64(&f, r));
        }
        assert!(lhs.eq_mod(&rhs, 14), "(y_scale·ℓ)² = {lhs} vs {rhs}");
        // Chart curve relation at a genuine curve point: x = 14, x̃ = 2.
        let x = Elem::from_i64(&f, 14);
        let fx = Poly::from_roots(&f, &ints(&f, &[0, 1, 2, 3, 7])).eval(&x);
        let y = fx.sqrt(None).unwrap();
        let (xt2, yt) = ch.to_chart(&x, &y).unwrap();
        assert!(xt2.eq_mod(&Elem::from_i64(&f, 2), 12));
        assert!(yt.pow_i64(2).eq_mod(&ch.g.eval(&xt2), 11));
        // The involution flips the chart component/sign.
        let (_, ytm) = ch.to_chart(&x, &y.negate()).unwrap();
        assert!((&yt + &ytm).is_zero() || (&yt + &ytm).valuation() >= 11);
    }

    #[test]
    fn even_node_with_no_roots_has_trivial_g() {
        // f = x(x−5)(x−1)(x−6) over Q₅: the outer node sees two even
        // clusters and no roots of its own → g = 1, disconnected cover.
        let f = Field::qp(5, 12).unwrap();
        let t = covering(&f, &[0, 5, 1, 6], false);
        let ch = WideOpenChart::build(&t, t.root, &Elem::one(&f), None).unwrap();
        assert!(ch.even);
        assert_eq!(ch.g.degree(), Some(0));
        assert_eq!(ch.genus, -1);
        assert_eq!(ch.centers.len(), 2);
        for cc in &ch.centers {
            assert!(!cc.weierstrass);
            assert_eq!(cc.multiplicity, 1);
        }
    }

    #[test]
    fn chart_without_clusters_expands_to_single_term() {
        // Three unit-separated roots: h = k = 1, so ω₁ is already
        // elementary: exactly one term x̃¹ with coefficient 1.
        let f = Field::qp(5, 12).unwrap();
        let t = covering(&f, &[0, 1, 2], true);
        let ch = WideOpenChart::build(&t, t.root, &Elem::one(&f), None).unwrap();
        assert!(ch.centers.is_empty() && ch.outer_inv.is_empty());
        let exp = expand_form(&ch, 1, &ch.default_region(), 10).unwrap();
        assert_eq!(exp.terms.len(), 1);
        let term = &exp.terms[0];
        assert_eq!(term.x_power, 1);
        assert!(term.pole_orders.is_empty());
        assert!(term.coeff.eq_mod(&Elem::one(&f), 10));
    }

    #[test]
    fn expansion_matches_direct_quotient() {
        // Oracle: Σ terms at a point must equal x^i·S/(y_scale·ℓ(x̃)),
        // computed by direct evaluation and a pointwise square root.
        let f = Field::qp(7, 16).unwrap();
        let t = covering(&f, &[0, 1, 2, 3, 7], true);
        let ch = WideOpenChart::build(&t, t.root, &Elem::one(&f), None).unwrap();
        assert_eq!(ch.centers.len(), 1);
        let target = 12;
        let xt = Elem::from_i64(&f, 5);
        for i in 0..3usize {
            let exp = expand_form(&ch, i, &ch.default_region(), target).unwrap();
            let got = eval_terms(&ch, &exp.terms, &xt).unwrap();
            let x = ch.from_chart_x(&xt);
            let want = &(&x.pow_i64(i as i64) * &ch.scale)
                * &(&ch.y_scale * &ch.ell_at(&xt).unwrap()).inv().unwrap();
            assert!(
                got.eq_mod(&want, target - 1),
                "ω_{i}: terms sum {got} vs direct {want}"
            );
        }
    }

    #[test]
    fn expansion_matches_direct_quotient_two_clusters() {
        // Same oracle on a chart with two deleted discs and an odd
        // cluster (Weierstrass center).
        let f = Field::qp(7, 16).unwrap();
        let t = covering(&f, &[0, 7, 14, 1, 8, 3], false);
        let ch = WideOpenChart::build(&t, t.root, &Elem::one(&f), None).unwrap();
        assert_eq!(ch.centers.len(), 2);
        assert!(ch.centers.iter().any(|c| c.weierstrass));
        let target = 10;
        let xt = Elem::from_i64(&f, 5);
        let exp = expand_form(&ch, 1, &ch.default_region(), target).unwrap();
        let got = eval_terms(&ch, &exp.terms, &xt).unwrap();
        let x = ch.from_chart_x(&xt);
        let want = &(&x * &ch.scale) * &(&ch.y_scale * &ch.ell_at(&xt).unwrap()).inv().unwrap();
        assert!(got.eq_mod(&want, target - 1), "{got} vs {want}");
        // Every term has at least the h-multiplicity pole at each center.
        for term in &exp.terms {
            for (j, cc) in ch.centers.iter().enumerate() {
                assert!(term.pole_orders[j] >= cc.multiplicity);
            }
        }
    }

    #[test]
    fn series_coefficients_decay_one_digit_per_order() {
        // B_{j,n} of k_j^{−1/2} must satisfy v_π(B_n) ≥ n·v_min.
        let f = Field::qp(7, 16).unwrap();
        let t = covering(&f, &[0, 1, 2, 3, 7], true);
        let ch = WideOpenChart::build(&t, t.root, &Elem::one(&f), None).unwrap();
        let m = 36usize;
        let ser = ch.center_series(0, m);
        for (n, b) in ser.iter().enumerate() {
            assert!(
                b.is_zero() || b.valuation() >= n as i64 * ch.centers[0].v_min,
                "B_{n} = {b} too large"
            );
        }
        // And the outer series of the inner genus-2 chart.
        let f2 = Field::pure_eisenstein(7, 2, 14, "a").unwrap();
        let t2 = covering(&f2, &[0, 1, 2, 3, 7], true);
        let ch2 = WideOpenChart::build(&t2, t2.edges[0].child, &Elem::one(&f2), None).unwrap();
        let ser2 = ch2.outer_series(m);
        let vmin = ch2.outer_v_min.unwrap();
        for (n, b) in ser2.iter().enumerate() {
            assert!(b.is_zero() || b.valuation() >= n as i64 * vmin);
        }
    }

    #[test]
    fn reconstruction_f_equals_c_g_h2_k() {
        // (y_scale·ℓ(x̃))²·g(x̃) = f(c + S·x̃) pointwise, on a chart whose
        // normalization constant has odd p-valuation (needs e = 4).
        let f = Field::pure_eisenstein(13, 4, 16, "a").unwrap();
        let roots = [0i64, 13, 169, 1, 14, 27, 4];
        let t = covering(&f, &roots, true);
        // The child with three half-edges (the shifted chart at 1).
        let inner = (0..t.nodes.len())
            .find(|&v| v != t.root && t.nodes[v].half_edges.len() == 3)
            .unwrap();
        let ch = WideOpenChart::build(&t, inner, &Elem::one(&f), None).unwrap();
        assert_eq!(ch.g.degree(), Some(3));
        assert_eq!(ch.genus, 1);
        let fx = Poly::from_roots(&f, &ints(&f, &roots));
        let xt = Elem::from_i64(&f, 5);
        let lhs = &(&ch.y_scale * &ch.ell_at(&xt).unwrap()).pow_i64(2) * &ch.g.eval(&xt);
        let rhs = fx.eval(&ch.from_chart_x(&xt));
        assert!(lhs.eq_mod(&rhs, 14), "{lhs} vs {rhs}");
    }

    #[test]
    fn ramification_bound_enforced() {
        // e = p − 1 = 4 over Q₅: expansions must refuse.
        let f = Field::pure_eisenstein(5, 4, 10, "a").unwrap();
        let t = covering(&f, &[0, 1, 2], true);
        let ch = WideOpenChart::build(&t, t.root, &Elem::one(&f), None).unwrap();
        match expand_form(&ch, 0, &ch.default_region(), 8) {
            Err(ChartError::RamificationTooLarge { e: 4, p: 5 }) => {}
            other => panic!("expected RamificationTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn region_deeper_than_cluster_separation_is_rejected() {
        let f = Field::qp(7, 16).unwrap();
        let t = covering(&f, &[0, 1, 2, 3, 7], true);
        let ch = WideOpenChart::build(&t, t.root, &Elem::one(&f), None).unwrap();
        let region = ExpansionRegion {
            center_depth: vec![rat(1)], // as deep as the cluster separation
            outer_growth: rat(0),
        };
        match expand_form(&ch, 0, &region, 8) {
            Err(ChartError::TargetPrecisionUnreachable(_)) => {}
            other => panic!("expected TargetPrecisionUnreachable, got {other:?}"),
        }
    }

    #[test]
    fn points_in_deleted_discs_are_rejected() {
        let f = Field::qp(17, 12).unwrap();
        let t = covering(&f, &[6, 5, -11], true);
        let ch = WideOpenChart::build(&t, t.root, &Elem::one(&f), None).unwrap();
        // x = 6 + 17² lies inside the deleted disc B̄(6, 1/17).
        let xt = Elem::from_i64(&f, 17 * 17);
        match ch.ell_at(&xt) {
            Err(ChartError::PointOutsideChart(_)) => {}
            other => panic!("expected PointOutsideChart, got {other:?}"),
        }
    }
}
