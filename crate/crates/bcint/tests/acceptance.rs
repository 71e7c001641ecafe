//! End-to-end acceptance gate.
//!
//! Seven criteria, each reported as exactly one PASS/FAIL line (visible
//! with `--nocapture`, and always shown when the gate fails).  All golden
//! digit expansions and tolerances are pinned in the criterion bodies;
//! the property suites draw from a fixed-seed generator so reruns are
//! byte-identical.

use std::cell::RefCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::Rational64 as Rat;

use bcint::bc_abelian::{elliptic_add, CurveIntegrator, CurvePoint, PathSpec, ReferencePoints};
use bcint::coleman::{ChartCurve, ChartIntegrator};
use bcint::newton_cover::{build_dual_graph, CoveringTree};
use bcint::padic::{Elem, Field, FieldRef};
use bcint::poly::Poly;
use bcint::reduction::{
    cohomology_class, decomposition_residual, MeroForm, PoleCenter, ReductionCtx,
};
use bcint::tropgraph::{
    chain_to_walk, cycle_pairing, homology_basis, iota, relative_even_basis, tropical_integral,
    PathStep, TropPath, TropicalOneForm,
};
use bcint::wideopen::{eval_terms, expand_form, ElementaryTerm};

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

fn e(field: &FieldRef, n: i64) -> Elem {
    Elem::from_i64(field, n)
}

fn rat(n: i64) -> Rat {
    Rat::from_integer(n)
}

/// `Σ c·π^k` from `(c, k)` pairs.
fn from_digits(field: &FieldRef, pairs: &[(i64, i64)]) -> Elem {
    pairs.iter().fold(Elem::zero(field), |acc, &(c, k)| {
        &acc + &Elem::pi_pow(field, k).mul_i64(c)
    })
}

/// Deterministic xorshift generator for the property suites.
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

/// A curve point with the canonical square-root lift of `y`.
fn point_on(ci: &CurveIntegrator, x: Elem) -> CurvePoint {
    let y = ci.f.eval(&x).sqrt(None).expect("f(x) must be a square");
    CurvePoint::new(x, y)
}

/// The step along Γ-edge `ge` leaving vertex `from`.
fn step_from(ci: &CurveIntegrator, ge: usize, from: usize) -> PathStep {
    PathStep {
        edge: ge,
        forward: ci.graph.edges[ge].a == from,
    }
}

/// `0 mod π^n`: zero digits and certified to at least `n`.
fn vanishes_mod(v: &Elem, n: i64) -> bool {
    v.eq_mod(&Elem::zero(&field_of(v)), n)
}

fn field_of(v: &Elem) -> FieldRef {
    v.field().clone()
}

// ---------------------------------------------------------------------------
// Curve builders (golden examples)
// ---------------------------------------------------------------------------

/// `y² = (x−6)(x−5)(x+11)` over `Q₁₇(a)`, `a² = 17`.
fn genus1(n_work: i64) -> CurveIntegrator {
    let field = Field::pure_eisenstein(17, 2, n_work, "a").unwrap();
    let roots = vec![e(&field, 6), e(&field, 5), e(&field, -11)];
    let mut ci = CurveIntegrator::new(&field, roots, Elem::one(&field)).unwrap();
    let a6 = &Elem::uniformizer(&field) + &e(&field, 6);
    let vx: Vec<Elem> = (0..ci.tree.nodes.len())
        .map(|node| {
            if node == ci.tree.root {
                e(&field, 1)
            } else {
                e(&field, -28)
            }
        })
        .collect();
    let refs = ci.reference_points_from_x(&vx, &[a6]).unwrap();
    ci.set_reference_points(refs).unwrap();
    ci
}

/// `y² = x(x−1)(x−2)(x−3)(x−7)` over `Q₇(a)`, `a² = 7`.
fn genus2(n_work: i64) -> CurveIntegrator {
    let field = Field::pure_eisenstein(7, 2, n_work, "a").unwrap();
    let roots: Vec<Elem> = [0, 1, 2, 3, 7].iter().map(|&n| e(&field, n)).collect();
    let mut ci = CurveIntegrator::new(&field, roots, Elem::one(&field)).unwrap();
    let vx: Vec<Elem> = (0..ci.tree.nodes.len())
        .map(|node| {
            if node == ci.tree.root {
                e(&field, -1)
            } else {
                e(&field, 14)
            }
        })
        .collect();
    let refs = ci
        .reference_points_from_x(&vx, &[Elem::uniformizer(&field)])
        .unwrap();
    ci.set_reference_points(refs).unwrap();
    ci
}

/// `y² = x(x−13)(x−169)(x−1)(x−14)(x−27)(x−4)` over `Q₁₃(a)`, `a⁴ = 13`,
/// plus the tree-node indices of the three non-root charts, keyed by the
/// cluster they cut out: `u2` ↔ {1, 14, 27}, `u3` ↔ {0, 13, 169},
/// `u4` ↔ {0, 169}.
struct Genus3 {
    ci: CurveIntegrator,
    u2: usize,
    u3: usize,
    u4: usize,
}

fn genus3(n_work: i64) -> Genus3 {
    let field = Field::pure_eisenstein(13, 4, n_work, "a").unwrap();
    let roots: Vec<Elem> = [0, 13, 169, 1, 14, 27, 4]
        .iter()
        .map(|&n| e(&field, n))
        .collect();
    let mut ci = CurveIntegrator::new(&field, roots, Elem::one(&field)).unwrap();
    // Locate the tree node of each vertex reference x-coordinate.
    let node_of = |ci: &CurveIntegrator, num: i64, den: i64| -> usize {
        let p = point_on(ci, Elem::from_ratio_i64(ci.field(), num, den));
        let gv = ci.locate_vertex(&p).unwrap();
        ci.graph.vertices[gv].tree_vertex
    };
    let root = node_of(&ci, 2, 1);
    assert_eq!(root, ci.tree.root);
    let u2 = node_of(&ci, 20, 7);
    let u3 = node_of(&ci, -13, 12);
    let u4 = node_of(&ci, 169, 14);
    let mut vx = vec![Elem::zero(&field); ci.tree.nodes.len()];
    vx[root] = e(&field, 2);
    vx[u2] = Elem::from_ratio_i64(&field, 20, 7);
    vx[u3] = Elem::from_ratio_i64(&field, -13, 12);
    vx[u4] = Elem::from_ratio_i64(&field, 169, 14);
    let a2 = Elem::pi_pow(&field, 2);
    let mut ex = vec![Elem::zero(&field); ci.tree.edges.len()];
    for (te, edge) in ci.tree.edges.iter().enumerate() {
        ex[te] = if edge.child == u2 {
            &a2 + &Elem::one(&field)
        } else if edge.child == u3 {
            a2.clone()
        } else {
            a2.mul_i64(13)
        };
    }
    let refs = ci.reference_points_from_x(&vx, &ex).unwrap();
    ci.set_reference_points(refs).unwrap();
    Genus3 { ci, u2, u3, u4 }
}

/// `y² = x⁶ − 5x⁴ + 7x² − 2` over `K = Q₅(√2, √5)`, presented with the
/// generator θ = √5 + √10 (also a uniformizer): the six roots are ±√2 and
/// (±1 ± √5)/2.
fn chabauty_curve(n_work: i64) -> CurveIntegrator {
    let m: Vec<BigInt> = [25i64, 0, -30, 0, 1].iter().map(|&c| BigInt::from(c)).collect();
    let field = Field::mixed_uniformizer(5, m, 2, n_work, "t").unwrap();
    let theta = Elem::gen(&field);
    let tenth = Elem::from_ratio_i64(&field, 1, 10);
    let s2 = &(&(&theta * &theta) - &e(&field, 15)) * &tenth;
    let s5 = &(&theta * &(&(&theta * &theta) - &e(&field, 25))) * &tenth;
    assert!((&(&s2 * &s2) - &e(&field, 2)).is_zero());
    assert!((&(&s5 * &s5) - &e(&field, 5)).is_zero());
    let half = Elem::from_ratio_i64(&field, 1, 2);
    let one = Elem::one(&field);
    let roots = vec![
        s2.clone(),
        s2.negate(),
        &(&one + &s5) * &half,
        &(&one - &s5) * &half,
        &(&one.negate() + &s5) * &half,
        &(&one.negate() - &s5) * &half,
    ];
    CurveIntegrator::new(&field, roots, one).unwrap()
}

// ---------------------------------------------------------------------------
// Result plumbing
// ---------------------------------------------------------------------------

/// `(label, certified precision, required precision)` for criterion 7.
type PrecRecord = (String, i64, i64);

struct Gate {
    lines: Vec<String>,
    failed: bool,
    prec: RefCell<Vec<PrecRecord>>,
}

impl Gate {
    fn new() -> Gate {
        Gate {
            lines: vec![],
            failed: false,
            prec: RefCell::new(vec![]),
        }
    }

    fn record(&self, label: &str, certified: i64, required: i64) {
        self.prec
            .borrow_mut()
            .push((label.to_string(), certified, required));
    }

    fn run(
        &mut self,
        number: usize,
        name: &str,
        body: impl FnOnce(&Gate) -> Result<String, String>,
    ) {
        let outcome = catch_unwind(AssertUnwindSafe(|| body(self)));
        let line = match outcome {
            Ok(Ok(detail)) => format!("criterion {number} ({name}): PASS — {detail}"),
            Ok(Err(msg)) => {
                self.failed = true;
                format!("criterion {number} ({name}): FAIL — {msg}")
            }
            Err(panic) => {
                self.failed = true;
                format!(
                    "criterion {number} ({name}): FAIL — panic: {}",
                    panic_text(&*panic)
                )
            }
        };
        println!("{line}");
        self.lines.push(line);
    }
}

fn panic_text(panic: &(dyn std::any::Any + Send)) -> String {
    panic
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn check(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: nodal elliptic curve golden digits
// ---------------------------------------------------------------------------

fn criterion1(gate: &Gate) -> Result<String, String> {
    let t0 = Instant::now();
    let ci = genus1(14);
    let field = ci.field().clone();
    let lambda = [Elem::one(&field)];
    let s = point_on(&ci, e(&field, 7));
    let r = CurvePoint::new(e(&field, 23), e(&field, 102));
    let sv = ci.locate_vertex(&s).unwrap();
    let rv = ci.locate_vertex(&r).unwrap();
    let path = |edge: usize| PathSpec {
        start: s.clone(),
        start_vertex: sv,
        end: r.clone(),
        end_vertex: rv,
        word: vec![step_from(&ci, edge, sv)],
    };

    let ab = ci.abelian_integral(&lambda, &path(0)).unwrap();
    let want_ab = from_digits(
        &field,
        &[(12, 2), (8, 4), (15, 6), (9, 8), (16, 10), (8, 12)],
    );
    check(
        ab.value.eq_mod(&want_ab, 14),
        &format!("abelian value {} off the golden digits", ab.value),
    )?;
    gate.record("genus-1 abelian", ab.certified, 14);

    let bc: Vec<_> = (0..2)
        .map(|ed| ci.bc_integral(&lambda, &path(ed)).unwrap())
        .collect();
    let want_bc = from_digits(&field, &[(15, 4), (11, 6), (12, 8), (1, 10), (11, 12)]);
    let hit = bc.iter().position(|v| v.value.eq_mod(&want_bc, 14));
    check(
        hit.is_some(),
        &format!(
            "neither homotopy class gives the golden path value: {} / {}",
            bc[0].value, bc[1].value
        ),
    )?;
    gate.record("genus-1 path integral", bc[hit.unwrap()].certified, 14);

    let periods = ci.periods(&lambda).unwrap();
    check(periods.len() == 1, "expected a single basis cycle")?;
    let per = &periods[0];
    let want_per = from_digits(
        &field,
        &[(10, 2), (12, 4), (9, 6), (5, 8), (4, 10), (4, 12)],
    );
    check(
        per.value.eq_mod(&want_per, 14) || per.value.negate().eq_mod(&want_per, 14),
        &format!("period {} off the golden digits", per.value),
    )?;
    gate.record("genus-1 period", per.certified, 14);

    let secs = t0.elapsed().as_secs_f64();
    check(secs < 60.0, &format!("runtime {secs:.1}s exceeds 60s"))?;
    Ok(format!(
        "abelian, path value and period match mod a^14 in {secs:.1}s"
    ))
}

// ---------------------------------------------------------------------------
// Criterion 2: torsion differences vanish
// ---------------------------------------------------------------------------

fn criterion2(gate: &Gate) -> Result<String, String> {
    let t0 = Instant::now();
    let ci = genus1(20);
    let field = ci.field().clone();
    let lambda = [Elem::one(&field)];
    let g = Poly::from_roots(&field, &[e(&field, 6), e(&field, 5), e(&field, -11)]);
    let w5 = CurvePoint::new(e(&field, 5), Elem::zero(&field));
    let w6 = CurvePoint::new(e(&field, 6), Elem::zero(&field));
    let w11 = CurvePoint::new(e(&field, -11), Elem::zero(&field));
    let p = CurvePoint::new(e(&field, -3), e(&field, 24));
    let mut min_cert = i64::MAX;
    let mut ip: Option<CurvePoint> = None;
    for i in 0..=10i64 {
        let (a, b, c) = match &ip {
            None => (w5.clone(), w6.clone(), w11.clone()),
            Some(q) => (
                elliptic_add(&g, &w5, q).unwrap(),
                elliptic_add(&g, &w6, q).unwrap(),
                elliptic_add(&g, &w11, q).unwrap(),
            ),
        };
        for (other, tag) in [(&b, "(6,0)"), (&c, "(-11,0)")] {
            let v = ci.abelian_between(&lambda, &a, other).unwrap();
            check(
                vanishes_mod(&v.value, 14),
                &format!("i = {i}: difference with {tag} gives {} ≠ 0 mod a^14", v.value),
            )?;
            min_cert = min_cert.min(v.certified);
        }
        ip = Some(match &ip {
            None => p.clone(),
            Some(q) => elliptic_add(&g, q, &p).unwrap(),
        });
    }
    gate.record("genus-1 torsion suite", min_cert, 14);
    let secs = t0.elapsed().as_secs_f64();
    check(secs < 600.0, &format!("runtime {secs:.1}s exceeds 10min"))?;
    Ok(format!(
        "22 torsion differences vanish mod a^14 in {secs:.1}s"
    ))
}

// ---------------------------------------------------------------------------
// Criterion 3: genus-2 golden digits
// ---------------------------------------------------------------------------

fn criterion3(gate: &Gate) -> Result<String, String> {
    let ci = genus2(14);
    let field = ci.field().clone();
    let s = CurvePoint::new(e(&field, 1), Elem::zero(&field));
    let r = CurvePoint::new(Elem::zero(&field), Elem::zero(&field));
    let sv = ci.locate_vertex(&s).unwrap();
    let rv = ci.locate_vertex(&r).unwrap();
    let path = |edge: usize| PathSpec {
        start: s.clone(),
        start_vertex: sv,
        end: r.clone(),
        end_vertex: rv,
        word: vec![step_from(&ci, edge, sv)],
    };
    let one = Elem::one(&field);
    let lambdas = [vec![one.clone()], vec![Elem::zero(&field), one.clone()]];
    let want_bc = [
        from_digits(&field, &[(4, 6), (2, 8), (2, 10), (5, 12)]),
        from_digits(&field, &[(6, 2), (6, 6), (4, 10), (6, 12)]),
    ];

    // One homotopy class must give both golden path values.
    let mut hit = None;
    for edge in 0..2 {
        let vals: Vec<_> = lambdas
            .iter()
            .map(|l| ci.bc_integral(l, &path(edge)).unwrap())
            .collect();
        if vals
            .iter()
            .zip(&want_bc)
            .all(|(v, w)| v.value.eq_mod(w, 14))
        {
            hit = Some((edge, vals));
        }
    }
    let (_, bc_vals) = hit.ok_or("no homotopy class gives both golden path values")?;
    for (i, v) in bc_vals.iter().enumerate() {
        gate.record(&format!("genus-2 path integral {i}"), v.certified, 14);
    }

    let want_per = [
        from_digits(&field, &[(1, 6), (5, 8), (4, 10), (3, 12)]),
        from_digits(&field, &[(5, 2), (1, 4), (5, 6), (1, 8), (1, 10), (6, 12)]),
    ];
    let pers: Vec<_> = lambdas.iter().map(|l| ci.periods(l).unwrap().remove(0)).collect();
    // The cycle orientation is a global choice: both periods flip together.
    let plus = pers
        .iter()
        .zip(&want_per)
        .all(|(p, w)| p.value.eq_mod(w, 14));
    let minus = pers
        .iter()
        .zip(&want_per)
        .all(|(p, w)| p.value.negate().eq_mod(w, 14));
    check(
        plus || minus,
        &format!("periods {} / {} off the golden digits", pers[0].value, pers[1].value),
    )?;
    for (i, p) in pers.iter().enumerate() {
        gate.record(&format!("genus-2 period {i}"), p.certified, 14);
    }

    for (i, l) in lambdas.iter().enumerate() {
        for edge in 0..2 {
            let ab = ci.abelian_integral(l, &path(edge)).unwrap();
            check(
                vanishes_mod(&ab.value, 14),
                &format!("abelian integral of form {i} between branch points is {}", ab.value),
            )?;
            gate.record(&format!("genus-2 abelian {i}"), ab.certified, 14);
        }
    }
    Ok("both path values, both periods, and the vanishing abelian values match mod a^14".into())
}

// ---------------------------------------------------------------------------
// Criterion 4: genus-3 golden digits
// ---------------------------------------------------------------------------

fn criterion4(gate: &Gate) -> Result<String, String> {
    let g3 = genus3(28);
    let ci = &g3.ci;
    let field = ci.field().clone();
    let one = Elem::one(&field);
    let a2 = Elem::pi_pow(&field, 2);

    // -- Part A: branch-point endpoints, split at the two annulus points.
    let s = CurvePoint::new(e(&field, 1), Elem::zero(&field));
    let r = CurvePoint::new(e(&field, 13), Elem::zero(&field));
    let pe1x = &a2 + &one;
    let pe2x = a2.clone();
    let want_leg = [
        from_digits(&field, &[(2, -1), (8, 1), (6, 3), (9, 5), (8, 7), (3, 9), (5, 11)]),
        from_digits(&field, &[(4, -1), (6, 1), (3, 3), (10, 5), (8, 7), (9, 9), (11, 11)]),
        from_digits(&field, &[(7, -1), (12, 1), (3, 3), (5, 5), (9, 7), (12, 9), (8, 11)]),
    ];
    let omega0 = [one.clone()];
    let mut matched = None;
    'signs: for s1 in [false, true] {
        for s2 in [false, true] {
            let mut pe1 = point_on(ci, pe1x.clone());
            if s1 {
                pe1 = pe1.conj();
            }
            let mut pe2 = point_on(ci, pe2x.clone());
            if s2 {
                pe2 = pe2.conj();
            }
            let legs = [
                ci.chart_leg(g3.u2, &omega0, &s, &pe1).unwrap(),
                ci.chart_leg(ci.tree.root, &omega0, &pe1, &pe2).unwrap(),
                ci.chart_leg(g3.u3, &omega0, &pe2, &r).unwrap(),
            ];
            if legs.iter().zip(&want_leg).all(|(l, w)| l.eq_mod(w, 13)) {
                matched = Some(legs);
                break 'signs;
            }
        }
    }
    let legs = matched.ok_or("no annulus-point branch choice gives the golden partial integrals")?;
    let sum = legs.iter().fold(Elem::zero(&field), |acc, l| &acc + l);
    check(
        vanishes_mod(&sum, 13),
        &format!("partial integrals sum to {sum} ≠ 0 mod a^13"),
    )?;
    for (i, l) in legs.iter().enumerate() {
        gate.record(
            &format!("genus-3 partial integral {i}"),
            l.prec().min(field.n_work),
            13,
        );
    }

    // -- Part B: ω₁ + ω₂ along the two-edge path, its period, and the
    //    path-independent value.
    let lambda = [Elem::zero(&field), one.clone(), one.clone()];
    let xs = e(&field, 7);
    let ys = {
        let want = from_digits(&field, &[(4, 0), (7, 8), (12, 16), (6, 20)]);
        let y = ci.f.eval(&xs).sqrt(None).unwrap();
        if y.eq_mod(&want, 28) {
            y
        } else {
            let yn = y.negate();
            check(
                yn.eq_mod(&want, 28),
                &format!("neither square root matches the pinned start y: {y}"),
            )?;
            yn
        }
    };
    let xr = e(&field, 2197);
    let yr = {
        let want = from_digits(&field, &[(2, 12), (2, 16), (10, 20), (11, 24)]);
        let y = ci.f.eval(&xr).sqrt(None).unwrap();
        if y.eq_mod(&want, 28) {
            y
        } else {
            let yn = y.negate();
            check(
                yn.eq_mod(&want, 28),
                &format!("neither square root matches the pinned end y: {y}"),
            )?;
            yn
        }
    };
    let bs = CurvePoint::new(xs, ys);
    let br = CurvePoint::new(xr, yr);
    let sv = ci.locate_vertex(&bs).unwrap();
    let rv = ci.locate_vertex(&br).unwrap();
    let te_u3 = ci.tree.edges.iter().position(|t| t.child == g3.u3).unwrap();
    let te_u4 = ci.tree.edges.iter().position(|t| t.child == g3.u4).unwrap();
    let ge_mid = ci.graph.edges_over(te_u3)[0];
    let lifts = ci.graph.edges_over(te_u4);
    check(lifts.len() == 2, "the deep annulus must lift to a doubled edge")?;
    let mid_v = {
        let st = step_from(ci, ge_mid, sv);
        if st.forward {
            ci.graph.edges[ge_mid].b
        } else {
            ci.graph.edges[ge_mid].a
        }
    };
    let path = |lift: usize| PathSpec {
        start: bs.clone(),
        start_vertex: sv,
        end: br.clone(),
        end_vertex: rv,
        word: vec![step_from(ci, ge_mid, sv), step_from(ci, lift, mid_v)],
    };
    let want_bc = from_digits(
        &field,
        &[
            (11, 0), (4, 2), (2, 4), (10, 6), (6, 8), (7, 10), (8, 12),
            (9, 14), (9, 16), (11, 18), (9, 20), (6, 22), (4, 24), (10, 26),
        ],
    );
    let bc: Vec<_> = lifts
        .iter()
        .map(|&l| ci.bc_integral(&lambda, &path(l)).unwrap())
        .collect();
    let hit = bc.iter().position(|v| v.value.eq_mod(&want_bc, 28));
    check(
        hit.is_some(),
        &format!(
            "neither homotopy class gives the golden path value: {} / {}",
            bc[0].value, bc[1].value
        ),
    )?;
    gate.record("genus-3 path integral", bc[hit.unwrap()].certified, 28);

    let pers = ci.periods(&lambda).unwrap();
    check(pers.len() == 1, "expected a single basis cycle")?;
    let want_per = from_digits(
        &field,
        &[(8, 2), (7, 6), (2, 10), (6, 14), (10, 18), (8, 26)],
    );
    check(
        pers[0].value.eq_mod(&want_per, 28) || pers[0].value.negate().eq_mod(&want_per, 28),
        &format!("period {} off the golden digits", pers[0].value),
    )?;
    gate.record("genus-3 period", pers[0].certified, 28);

    let want_ab = from_digits(
        &field,
        &[(11, 0), (2, 4), (6, 8), (8, 12), (9, 16), (9, 20), (4, 24)],
    );
    let ab: Vec<_> = lifts
        .iter()
        .map(|&l| ci.abelian_integral(&lambda, &path(l)).unwrap())
        .collect();
    check(
        ab[0].value.eq_mod(&ab[1].value, 28),
        "abelian value depends on the homotopy class",
    )?;
    check(
        ab[0].value.eq_mod(&want_ab, 28),
        &format!("abelian value {} off the golden digits", ab[0].value),
    )?;
    gate.record("genus-3 abelian", ab[0].certified, 28);
    Ok("partial, path, period and abelian values match their pinned digits".into())
}

// ---------------------------------------------------------------------------
// Criterion 5: even-degree sextic annihilator
// ---------------------------------------------------------------------------

fn criterion5(gate: &Gate) -> Result<String, String> {
    let ci = chabauty_curve(20);
    let field = ci.field().clone();
    let one = Elem::one(&field);
    let s = CurvePoint::new(one.clone(), one.clone());
    let r = CurvePoint::new(one.clone(), one.negate());
    let (b, minus_a) = ci.chabauty_annihilator(&s, &r).unwrap();
    let a = minus_a.negate();
    // a = 2·5 + 5⁴ + 3·5⁶ + 2·5⁷ + 2·5⁸ + 4·5⁹ as an exact integer: the
    // uniformizer t satisfies t² = 5·unit with a non-trivial unit, so the
    // base-5 digits must be assembled rationally, not as powers of t.
    let a_int: i64 = 2 * 5 + 5i64.pow(4) + 3 * 5i64.pow(6) + 2 * 5i64.pow(7)
        + 2 * 5i64.pow(8)
        + 4 * 5i64.pow(9);
    let want_a = e(&field, a_int);
    check(
        a.eq_mod(&want_a, 20),
        &format!("first coordinate {a} off the golden digits"),
    )?;
    check(
        vanishes_mod(&b, 20),
        &format!("second integral {b} should vanish mod 5^10"),
    )?;
    gate.record("sextic annihilator a", a.prec().min(field.n_work), 20);
    gate.record("sextic annihilator b", b.prec().min(field.n_work), 20);
    // Swapping the endpoints negates both coordinates.
    let (b2, minus_a2) = ci.chabauty_annihilator(&r, &s).unwrap();
    check(
        (&b2 + &b).is_zero() || (&b2 + &b).valuation() >= 20,
        "swapped endpoints must negate the annihilator",
    )?;
    check(
        (&minus_a2 - &a).is_zero() || (&minus_a2 - &a).valuation() >= 20,
        "swapped endpoints must negate the annihilator",
    )?;
    Ok("annihilator (b, −a) matches the golden digits mod 5^10".into())
}

// ---------------------------------------------------------------------------
// Criterion 6: property suites
// ---------------------------------------------------------------------------

/// (i) 200 random elementary terms across 5 random pole configurations:
/// the decomposition re-expands to the original form.
fn suite_decomposition() -> Result<(), String> {
    let mut rng = Rng(0x9e3779b97f4a7c15);
    let primes = [5u64, 7, 11, 13, 5];
    for (k, &p) in primes.iter().enumerate() {
        let field = Field::qp(p, 16).unwrap();
        // Random odd-degree monic g with distinct residues, plus pole
        // centers: every root (Weierstrass) and up to two unit residues.
        let d = [1usize, 3, 5][rng.below(3) as usize];
        let mut used = vec![];
        while used.len() < d {
            let c = rng.below(p) as i64;
            if !used.contains(&c) {
                used.push(c);
            }
        }
        let roots: Vec<Elem> = used.iter().map(|&c| e(&field, c)).collect();
        let g = Poly::from_roots(&field, &roots);
        let mut centers: Vec<PoleCenter> = roots
            .iter()
            .map(|r| PoleCenter {
                beta: r.clone(),
                weierstrass: true,
            })
            .collect();
        let mut extra = 0;
        while extra < 2 && used.len() < p as usize {
            let c = rng.below(p) as i64;
            if !used.contains(&c) {
                used.push(c);
                centers.push(PoleCenter {
                    beta: e(&field, c),
                    weierstrass: false,
                });
                extra += 1;
            }
        }
        let ctx = ReductionCtx::new(&g, centers).map_err(|e| e.to_string())?;
        for t in 0..40 {
            let term = ElementaryTerm {
                coeff: e(&field, 1 + rng.below(40) as i64),
                pole_orders: (0..ctx.centers.len())
                    .map(|_| rng.below(4) as i64)
                    .collect(),
                x_power: rng.below(3) as i64,
            };
            let eta = MeroForm::from_elementary(&ctx, &term);
            let dec = cohomology_class(&ctx, &eta)
                .map_err(|err| format!("configuration {k}, term {t}: {err}"))?;
            let residual = decomposition_residual(&ctx, &eta, &dec).map_err(|e| e.to_string())?;
            for (i, c) in residual.coeffs().iter().enumerate() {
                // Pinned tolerance: 2 digits of slack for re-assembly.
                if !c.is_zero() && c.valuation() < 14 {
                    return Err(format!(
                        "configuration {k}, term {t}: residual coefficient {i} is {c}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// (ii) Expansion tail certificates: the elementary-term sum agrees with
/// the direct quotient to at least the advertised tail valuation.
fn suite_norm_certificates() -> Result<(), String> {
    let cases: [(&dyn Fn() -> CurveIntegrator, i64); 3] = [
        (&|| genus1(16), 12),
        (&|| genus2(16), 12),
        (&|| genus3(24).ci, 16),
    ];
    for (build, target) in cases {
        let ci = build();
        let field = ci.field().clone();
        for chart in &ci.charts {
            for i in 0..3usize {
                let exp = expand_form(chart, i, &chart.default_region(), target)
                    .map_err(|e| e.to_string())?;
                if exp.tail_val < target {
                    return Err(format!(
                        "advertised tail {} below the requested target {target}",
                        exp.tail_val
                    ));
                }
                // Sample unit points avoiding the deleted residue discs.
                let mut sampled = 0;
                for u in 1..40i64 {
                    let xt = e(&field, u);
                    if xt.valuation() != 0
                        || chart.centers.iter().any(|cc| {
                            let d = &xt - &cc.beta;
                            d.is_zero() || d.valuation() > 0
                        })
                        || chart.g_roots.iter().any(|r| {
                            let d = &xt - r;
                            d.is_zero() || d.valuation() > 0
                        })
                    {
                        continue;
                    }
                    let got = eval_terms(chart, &exp.terms, &xt).map_err(|e| e.to_string())?;
                    let x = chart.from_chart_x(&xt);
                    let want = &(&x.pow_i64(i as i64) * &chart.scale)
                        * &(&chart.y_scale * &chart.ell_at(&xt).map_err(|e| e.to_string())?)
                            .inv()
                            .map_err(|e| e.to_string())?;
                    let diff = &got - &want;
                    if !diff.is_zero() && diff.valuation() < exp.tail_val.min(target) {
                        return Err(format!(
                            "truncation error {} beats the certificate {} at x̃ = {u}",
                            diff.valuation(),
                            exp.tail_val
                        ));
                    }
                    sampled += 1;
                    if sampled >= 3 {
                        break;
                    }
                }
                if sampled == 0 {
                    return Err("no admissible sample point on a chart".into());
                }
            }
        }
    }
    Ok(())
}

/// (iii) Tropical duality on 100 random parity-labelled trees.
fn suite_tropical() -> Result<(), String> {
    let mut rng = Rng(0x5851f42d4c957f2d);
    for it in 0..100 {
        let n = 3 + rng.below(5) as usize;
        let edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.below(v as u64) as usize, v)).collect();
        let mut counts: Vec<usize> = (0..n).map(|_| rng.below(3) as usize).collect();
        if counts.iter().sum::<usize>() % 2 == 1 {
            counts[0] += 1;
        }
        let mut t = CoveringTree::synthetic(&counts, &edges);
        t.label_parity_and_genus();
        let g = build_dual_graph(&t);
        let basis = homology_basis(&g);
        for (i, ci) in basis.cycles.iter().enumerate() {
            let walk = chain_to_walk(&g, ci).ok_or("cycle without a closed walk")?;
            for (j, fj) in basis.forms.iter().enumerate() {
                let v = tropical_integral(&g, fj, &walk).map_err(|e| e.to_string())?;
                let want = rat(if i == j { 1 } else { 0 });
                if v != want {
                    return Err(format!("tree {it}: ∫_C{i} η{j} = {v} ≠ {want}"));
                }
            }
        }
        let rel = relative_even_basis(&t);
        if rel.len() as i64 != g.b1() {
            return Err(format!(
                "tree {it}: relative rank {} ≠ b₁ = {}",
                rel.len(),
                g.b1()
            ));
        }
        for c in &rel {
            let img = iota(&g, &t, c);
            if !TropicalOneForm::from_chain(&img).is_harmonic(&g) {
                return Err(format!("tree {it}: ι-image is not a cycle"));
            }
            for d in &rel {
                let imd = iota(&g, &t, d);
                if cycle_pairing(&img, &imd) != rat(2) * cycle_pairing(c, d) {
                    return Err(format!("tree {it}: pairing does not double under ι"));
                }
            }
        }
    }
    Ok(())
}

/// (iv) Frobenius-matrix trace against brute-force point counts.
fn suite_kedlaya_trace() -> Result<(), String> {
    let models: [(u64, &[i64]); 10] = [
        (5, &[0, 1, 2]),
        (5, &[0, 1, 3]),
        (5, &[0, 1, 2, 3, 4]),
        (7, &[0, 1, 3]),
        (7, &[1, 2, 5]),
        (7, &[0, 1, 2, 3, 4]),
        (11, &[0, 1, 4]),
        (11, &[0, 1, 2, 3, 7]),
        (13, &[2, 5, 6]),
        (13, &[0, 1, 2, 3, 7]),
    ];
    for (p, roots) in models {
        let field = Field::qp(p, 10).unwrap();
        let rs: Vec<Elem> = roots.iter().map(|&r| e(&field, r)).collect();
        let curve = ChartCurve::new(&field, rs, vec![]).map_err(|e| e.to_string())?;
        let it = ChartIntegrator::new(curve).map_err(|e| e.to_string())?;
        let frob = it.frob.as_ref().ok_or("odd model without Frobenius data")?;
        let mut trace = Elem::zero(&field);
        for (i, row) in frob.mmat.iter().enumerate() {
            trace = &trace + &row[i];
        }
        // Brute-force count of y² = g(x) over F_p (plus one point at ∞).
        let ip = p as i64;
        let legendre = |n: i64| -> i64 {
            let n = n.rem_euclid(ip);
            if n == 0 {
                return 0;
            }
            let mut acc = 1i64;
            let mut base = n;
            let mut exp = (ip - 1) / 2;
            while exp > 0 {
                if exp & 1 == 1 {
                    acc = acc * base % ip;
                }
                base = base * base % ip;
                exp >>= 1;
            }
            if acc == 1 {
                1
            } else {
                -1
            }
        };
        let mut count = 1i64;
        for x in 0..ip {
            let gx: i64 = roots.iter().fold(1, |acc, &r| acc * (x - r) % ip);
            count += 1 + legendre(gx);
        }
        let a = ip + 1 - count;
        let diff = &trace - &e(&field, a);
        if !diff.is_zero() && diff.valuation() < 1 {
            return Err(format!(
                "p = {p}, roots {roots:?}: trace {trace} ≢ {a} mod {p}"
            ));
        }
    }
    Ok(())
}

/// Deterministic search for a full alternative reference assignment.
fn alternate_refs(ci: &CurveIntegrator, salt: i64) -> Option<ReferencePoints> {
    let field = ci.field().clone();
    let mut vx = vec![];
    for node in 0..ci.tree.nodes.len() {
        let chart = &ci.charts[node];
        let mut found = None;
        for k in 0..80i64 {
            let xt = e(&field, salt + k);
            if xt.is_zero()
                || xt.valuation() != 0
                || chart.centers.iter().any(|cc| {
                    let d = &xt - &cc.beta;
                    d.is_zero() || d.valuation() > 0
                })
            {
                continue;
            }
            let x = chart.from_chart_x(&xt);
            if ci.f.eval(&x).sqrt(None).is_ok() {
                found = Some(x);
                break;
            }
        }
        vx.push(found?);
    }
    let mut ex = vec![];
    for te in 0..ci.tree.edges.len() {
        let parent = ci.tree.edges[te].parent;
        let chart = &ci.charts[parent];
        let slot = ci
            .tree
            .children(parent)
            .iter()
            .position(|&(ei, _)| ei == te)?;
        let cc = &chart.centers[slot];
        let mut found = None;
        'depth: for j in 1..40i64 {
            if Rat::from_integer(j) >= cc.annulus_val {
                break;
            }
            for k in 0..40i64 {
                let u = e(&field, salt + k);
                if u.valuation() != 0 {
                    continue;
                }
                let xt = &cc.beta + &(&Elem::pi_pow(&field, j) * &u);
                let x = chart.from_chart_x(&xt);
                if ci.f.eval(&x).sqrt(None).is_ok() {
                    found = Some(x);
                    break 'depth;
                }
            }
        }
        ex.push(found?);
    }
    ci.reference_points_from_x(&vx, &ex).ok()
}

/// (v) Periods are invariant under reference-point reassignment:
/// 3 assignments per example.
fn suite_reference_invariance() -> Result<(), String> {
    let cases: [(&str, &dyn Fn() -> CurveIntegrator, Vec<Vec<i64>>, i64); 3] = [
        ("nodal elliptic", &|| genus1(14), vec![vec![1]], 14),
        (
            "genus-2",
            &|| genus2(14),
            vec![vec![1, 0], vec![0, 1]],
            14,
        ),
        (
            "genus-3",
            &|| genus3(28).ci,
            vec![vec![0, 1, 1]],
            28,
        ),
    ];
    for (name, build, lambdas, n) in cases {
        let mut ci = build();
        let field = ci.field().clone();
        let lams: Vec<Vec<Elem>> = lambdas
            .iter()
            .map(|l| l.iter().map(|&c| e(&field, c)).collect())
            .collect();
        let base: Vec<Vec<Elem>> = lams
            .iter()
            .map(|l| {
                ci.periods(l)
                    .unwrap()
                    .into_iter()
                    .map(|v| v.value)
                    .collect()
            })
            .collect();
        let mut assignments = 1;
        for salt in [3i64, 23] {
            let refs = alternate_refs(&ci, salt)
                .ok_or_else(|| format!("{name}: no reference assignment found for salt {salt}"))?;
            ci.set_reference_points(refs).map_err(|e| format!("{name}: {e}"))?;
            assignments += 1;
            for (l, want) in lams.iter().zip(&base) {
                let got = ci.periods(l).unwrap();
                for (g, w) in got.iter().zip(want) {
                    if !(g.value.eq_mod(w, n) || g.value.negate().eq_mod(w, n)) {
                        return Err(format!(
                            "{name}: period changed under reassignment: {} vs {w}",
                            g.value
                        ));
                    }
                }
            }
        }
        if assignments != 3 {
            return Err(format!("{name}: expected 3 assignments"));
        }
    }
    Ok(())
}

/// (vi) The two homotopy classes of the nodal elliptic example differ by
/// exactly the homologically predicted multiple of the period.
fn suite_homotopy_dependence() -> Result<(), String> {
    let ci = genus1(14);
    let field = ci.field().clone();
    let lambda = [Elem::one(&field)];
    let s = point_on(&ci, e(&field, 7));
    let r = CurvePoint::new(e(&field, 23), e(&field, 102));
    let sv = ci.locate_vertex(&s).unwrap();
    let rv = ci.locate_vertex(&r).unwrap();
    let words: Vec<Vec<PathStep>> = (0..2).map(|ed| vec![step_from(&ci, ed, sv)]).collect();
    let ab: Vec<Elem> = words
        .iter()
        .map(|w| {
            ci.abelian_integral(
                &lambda,
                &PathSpec {
                    start: s.clone(),
                    start_vertex: sv,
                    end: r.clone(),
                    end_vertex: rv,
                    word: w.clone(),
                },
            )
            .unwrap()
            .value
        })
        .collect();
    if !ab[0].eq_mod(&ab[1], 14) {
        return Err("abelian value depends on the homotopy class".into());
    }
    let bc: Vec<Elem> = words
        .iter()
        .map(|w| {
            ci.bc_integral(
                &lambda,
                &PathSpec {
                    start: s.clone(),
                    start_vertex: sv,
                    end: r.clone(),
                    end_vertex: rv,
                    word: w.clone(),
                },
            )
            .unwrap()
            .value
        })
        .collect();
    // Homological prediction of the class difference.
    let basis = homology_basis(&ci.graph);
    if basis.cycles.len() != 1 {
        return Err("expected one basis cycle".into());
    }
    let m = tropical_integral(&ci.graph, &basis.forms[0], &TropPath::whole(words[0].clone()))
        .map_err(|e| e.to_string())?
        - tropical_integral(&ci.graph, &basis.forms[0], &TropPath::whole(words[1].clone()))
            .map_err(|e| e.to_string())?;
    if !m.is_integer() || m == rat(0) {
        return Err(format!("class difference {m} is not a nonzero integer"));
    }
    let walk = chain_to_walk(&ci.graph, &basis.cycles[0]).ok_or("no walk for the basis cycle")?;
    let per = ci.period(&lambda, &walk.steps).unwrap().value;
    let predicted = per.mul_i64(m.to_integer());
    let diff = &bc[0] - &bc[1];
    if !diff.eq_mod(&predicted, 14) {
        return Err(format!(
            "path-value difference {diff} ≠ predicted multiple {predicted}"
        ));
    }
    Ok(())
}

fn criterion6(_gate: &Gate) -> Result<String, String> {
    let suites: [(&str, &dyn Fn() -> Result<(), String>); 6] = [
        ("decomposition exactness", &suite_decomposition),
        ("expansion tail certificates", &suite_norm_certificates),
        ("tropical duality", &suite_tropical),
        ("Frobenius trace vs point count", &suite_kedlaya_trace),
        ("reference invariance", &suite_reference_invariance),
        ("homotopy dependence", &suite_homotopy_dependence),
    ];
    for (name, body) in suites {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(body))
            .map_err(|cause| format!("panic: {}", panic_text(&*cause)))
            .and_then(|r| r);
        outcome.map_err(|msg| format!("{name}: {msg}"))?;
    }
    Ok("all six property suites hold".into())
}

// ---------------------------------------------------------------------------
// Criterion 7: precision contract
// ---------------------------------------------------------------------------

fn criterion7(gate: &Gate) -> Result<String, String> {
    let records = gate.prec.borrow();
    if records.is_empty() {
        return Err("no emitted values were recorded by the golden criteria".into());
    }
    let bad: Vec<String> = records
        .iter()
        .filter(|(_, certified, required)| certified < required)
        .map(|(label, certified, required)| format!("{label}: {certified} < {required}"))
        .collect();
    if !bad.is_empty() {
        return Err(format!("under-certified values: {}", bad.join("; ")));
    }
    Ok(format!(
        "all {} emitted values certify at least their pinned precision",
        records.len()
    ))
}

// ---------------------------------------------------------------------------
// The gate
// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let mut gate = Gate::new();
    gate.run(1, "nodal elliptic golden digits", criterion1);
    gate.run(2, "torsion differences vanish", criterion2);
    gate.run(3, "genus-2 golden digits", criterion3);
    gate.run(4, "genus-3 golden digits", criterion4);
    gate.run(5, "even sextic annihilator", criterion5);
    gate.run(6, "property suites", criterion6);
    gate.run(7, "precision contract", criterion7);
    assert!(
        !gate.failed,
        "acceptance gate failed:\n{}",
        gate.lines.join("\n")
    );
}

// -- temporary probes (removed before release) ------------------------------

#[test]
#[ignore]
fn probe_c2() {
    for n in [20i64, 40] {
        let ci = genus1(n);
        let field = ci.field().clone();
        let lambda = [Elem::one(&field)];
        let g = Poly::from_roots(&field, &[e(&field, 6), e(&field, 5), e(&field, -11)]);
        let w5 = CurvePoint::new(e(&field, 5), Elem::zero(&field));
        let w6 = CurvePoint::new(e(&field, 6), Elem::zero(&field));
        let p = CurvePoint::new(e(&field, -3), e(&field, 24));
        let mut q = p.clone();
        for _ in 1..8 {
            q = elliptic_add(&g, &q, &p).unwrap();
        }
        let a8 = elliptic_add(&g, &w5, &q).unwrap();
        let b8 = elliptic_add(&g, &w6, &q).unwrap();
        println!("n={n} a8.x={} prec={} val={}", a8.x, a8.x.prec(), a8.x.valuation());
        println!("n={n} b8.x={} prec={} val={}", b8.x, b8.x.prec(), b8.x.valuation());
        let va = ci.abelian_between(&lambda, &a8, &b8).unwrap();
        println!("n={n} diff={} certified={}", va.value, va.certified);
    }
}

#[test]
#[ignore]
fn probe_c5() {
    let ci = chabauty_curve(20);
    let field = ci.field().clone();
    let one = Elem::one(&field);
    let s = CurvePoint::new(one.clone(), one.clone());
    let r = CurvePoint::new(one.clone(), one.negate());
    let (b, minus_a) = ci.chabauty_annihilator(&s, &r).unwrap();
    let a = minus_a.negate();
    let a_int: i64 = 2 * 5 + 5i64.pow(4) + 3 * 5i64.pow(6) + 2 * 5i64.pow(7)
        + 2 * 5i64.pow(8)
        + 4 * 5i64.pow(9);
    let want_a = e(&field, a_int);
    println!("a       = {a}");
    println!("want_a  = {want_a}");
    println!("diff    = {}", &a - &want_a);
    println!("b       = {b}");
}

#[test]
#[ignore]
fn probe_suites() {
    let suites: [(&str, &dyn Fn() -> Result<(), String>); 6] = [
        ("decomposition exactness", &suite_decomposition),
        ("expansion tail certificates", &suite_norm_certificates),
        ("tropical duality", &suite_tropical),
        ("Frobenius trace vs point count", &suite_kedlaya_trace),
        ("reference invariance", &suite_reference_invariance),
        ("homotopy dependence", &suite_homotopy_dependence),
    ];
    for (name, body) in suites {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(body))
            .map_err(|cause| format!("panic: {}", panic_text(&*cause)))
            .and_then(|r| r);
        println!("suite {name}: {outcome:?}");
    }
}

#[test]
#[ignore]
fn probe_g3_eval() {
    for n in [24i64, 28, 30] {
        let field = Field::pure_eisenstein(13, 4, n, "a").unwrap();
        let roots: Vec<Elem> = [0, 13, 169, 1, 14, 27, 4]
            .iter()
            .map(|&k| e(&field, k))
            .collect();
        let f = Poly::from_roots(&field, &roots);
        let x = Elem::from_ratio_i64(&field, 20, 7);
        let v = f.eval(&x);
        println!("n={n}: f(20/7) val={} prec={}", v.valuation(), v.prec());
        match std::panic::catch_unwind(|| v.clone().sqrt(None)) {
            Ok(Ok(y)) => println!("  sqrt ok val={} prec={}", y.valuation(), y.prec()),
            Ok(Err(err)) => println!("  sqrt err {err}"),
            Err(cause) => println!("  sqrt panic {}", panic_text(&*cause)),
        }
    }
}

#[test]
#[ignore]
fn probe_g3_sqrt_inner() {
    let n = 24i64;
    let field = Field::pure_eisenstein(13, 4, n, "a").unwrap();
    let roots: Vec<Elem> = [0, 13, 169, 1, 14, 27, 4]
        .iter()
        .map(|&k| e(&field, k))
        .collect();
    let f = Poly::from_roots(&field, &roots);
    let x = Elem::from_ratio_i64(&field, 20, 7);
    let v = f.eval(&x);
    let u = &v * &Elem::pi_pow(&field, -v.valuation());
    println!("u val={} prec={}", u.valuation(), u.prec());
    let mut s = None;
    for r in Elem::residue_reps(&field) {
        if r.valuation() >= 1 {
            continue;
        }
        if (&(&r * &r) - &u).valuation() >= 1 {
            s = Some(r);
            break;
        }
    }
    let mut s = s.unwrap();
    let half = Elem::from_ratio_i64(&field, 1, 2);
    let target = u.prec();
    let mut gain = 1i64;
    while gain < target {
        s = &(&s + &u.div(&s).unwrap()) * &half;
        gain = (2 * gain).min(target);
        println!("gain={gain} s.val={} s.prec={}", s.valuation(), s.prec());
    }
    let neg = s.negate();
    println!("neg.val={} neg.prec={}", neg.valuation(), neg.prec());
}
