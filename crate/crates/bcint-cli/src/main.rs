//! Thin command-line front end for the integration library.
//!
//! Reads a problem file (JSON), runs one task, and writes deterministic
//! outputs into `--output-dir`:
//!
//! * `cover` — the covering tree as `cover.dot`;
//! * `skeleton` — the dual graph Γ as `skeleton.dot`;
//! * `bc-integrate` / `abelian-integrate` — `result.json` with the value
//!   in wire form (digits, valuation, certified precision);
//! * `periods` — `result.json` with one value per basis cycle;
//! * `chabauty` — `result.json` with the two integrals and the
//!   annihilating coefficient pair.
//!
//! Exit codes: 0 success, 2 malformed input (schema), 3 violated
//! mathematical precondition, 4 precision exhausted.  There is no
//! randomness anywhere; reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Parser;
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use bcint::bc_abelian::{BcError, CurveIntegrator, CurvePoint, IntegralValue, PathSpec};
use bcint::newton_cover::{Parity, Sign};
use bcint::padic::{Elem, Field, FieldRef, PadicError, WireElem};
use bcint::tropgraph::PathStep;

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "bcint",
    about = "p-adic (Berkovich–Coleman and abelian) integration on hyperelliptic curves"
)]
struct Args {
    /// Problem file (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Directory for the output files (default: current directory).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the working precision of the problem file (π-digits).
    #[arg(long)]
    precision: Option<i64>,
    /// Override the task of the problem file.
    #[arg(long)]
    task: Option<String>,
}

// ---------------------------------------------------------------------------
// Problem schema
// ---------------------------------------------------------------------------

/// An exact number: a rational string, or coordinates in the power basis
/// of the field generator θ (each a rational string).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumberDesc {
    Rational(String),
    Theta { theta: Vec<String> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldDesc {
    /// "qp" | "pure-eisenstein" | "eisenstein" | "unramified" |
    /// "mixed-uniformizer".
    kind: String,
    p: u64,
    #[serde(default)]
    e: Option<i64>,
    /// Coefficients of the defining polynomial, constant first.
    #[serde(default)]
    m: Option<Vec<String>>,
    #[serde(default)]
    symbol: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveDesc {
    /// Leading coefficient of `f`.
    #[serde(default)]
    lc: Option<String>,
    /// Exact roots of `f`.
    roots: Vec<NumberDesc>,
    /// Optional cross-check: the coefficients of `f`, constant first.
    #[serde(default)]
    coefficients: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDesc {
    x: NumberDesc,
    /// Exact `y`; omit to take the square root of `f(x)`.
    #[serde(default)]
    y: Option<NumberDesc>,
    /// Branch hint for an omitted `y`: "+" (default) or "-".
    #[serde(default)]
    sign: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDesc {
    edge: usize,
    /// Omit to orient the step automatically along the walk.
    #[serde(default)]
    forward: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefDesc {
    /// One x-coordinate per tree vertex, in construction order.
    vertex_x: Vec<NumberDesc>,
    /// One x-coordinate per tree edge, in construction order.
    edge_x: Vec<NumberDesc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    task: String,
    /// Working precision in π-digits.
    precision: i64,
    field: FieldDesc,
    curve: CurveDesc,
    #[serde(default)]
    reference_points: Option<RefDesc>,
    /// Coefficients λ_i of the form `Σ λ_i ω_i` (rational strings).
    #[serde(default)]
    form: Option<Vec<String>>,
    #[serde(default)]
    start: Option<PointDesc>,
    #[serde(default)]
    end: Option<PointDesc>,
    /// Edge word in Γ; omit for `abelian-integrate` to use a shortest
    /// word between the reduction vertices.
    #[serde(default)]
    path: Option<Vec<StepDesc>>,
}

// ---------------------------------------------------------------------------
// Output schema
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ValueOut {
    kind: String,
    value: WireElem,
    /// Human-readable digit expansion with the O(π^N) tail marker.
    display: String,
    /// Certified absolute precision in π-digits.
    certified: i64,
}

impl ValueOut {
    fn new(v: &IntegralValue, kind: &str) -> ValueOut {
        // Truncate at the certified precision so every printed digit and
        // the O(·) tail marker are backed by the certificate.
        let shown = v.value.clone().with_prec(v.certified.min(v.value.prec()));
        ValueOut {
            kind: kind.to_string(),
            value: WireElem::from_elem(&shown),
            display: format!("{shown}"),
            certified: v.certified,
        }
    }

    fn from_elem(x: &Elem, field: &FieldRef, kind: &str) -> ValueOut {
        let certified = x.prec().min(field.n_work);
        let shown = x.clone().with_prec(certified);
        ValueOut {
            kind: kind.to_string(),
            value: WireElem::from_elem(&shown),
            display: format!("{shown}"),
            certified,
        }
    }
}

// ---------------------------------------------------------------------------
// Error → exit code
// ---------------------------------------------------------------------------

enum CliError {
    /// Exit 2: malformed problem file.
    Schema(String),
    /// Exit 3: violated mathematical precondition.
    Math(String),
    /// Exit 4: precision exhausted.
    Precision(String),
}

type Result<T> = std::result::Result<T, CliError>;

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

fn classify_padic(e: PadicError) -> CliError {
    match e {
        PadicError::PrecisionExhausted(_) => CliError::Precision(e.to_string()),
        PadicError::BadDescriptor(_) | PadicError::BadWire(_) => CliError::Schema(e.to_string()),
        _ => CliError::Math(e.to_string()),
    }
}

fn classify_bc(e: BcError) -> CliError {
    match &e {
        BcError::Padic(p) => classify_padic(p.clone()),
        _ => {
            let msg = e.to_string();
            if msg.contains("precision exhausted") {
                CliError::Precision(msg)
            } else {
                CliError::Math(msg)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing helpers
// ---------------------------------------------------------------------------

fn parse_rational(s: &str) -> Result<BigRational> {
    BigRational::from_str(s.trim()).map_err(|e| schema(format!("bad rational '{s}': {e}")))
}

fn parse_int(s: &str) -> Result<BigInt> {
    BigInt::from_str(s.trim()).map_err(|e| schema(format!("bad integer '{s}': {e}")))
}

fn to_elem(field: &FieldRef, n: &NumberDesc) -> Result<Elem> {
    match n {
        NumberDesc::Rational(s) => Ok(Elem::from_rational(field, &parse_rational(s)?)),
        NumberDesc::Theta { theta } => {
            let coords = theta
                .iter()
                .map(|s| parse_rational(s))
                .collect::<Result<Vec<_>>>()?;
            Ok(Elem::from_theta_coords(field, &coords))
        }
    }
}

fn build_field(desc: &FieldDesc, n_work: i64) -> Result<FieldRef> {
    let sym = desc.symbol.as_deref().unwrap_or("pi");
    let m = || -> Result<Vec<BigInt>> {
        desc.m
            .as_ref()
            .ok_or_else(|| schema("this field kind needs the defining polynomial 'm'"))?
            .iter()
            .map(|s| parse_int(s))
            .collect()
    };
    let built = match desc.kind.as_str() {
        "qp" => Field::qp(desc.p, n_work),
        "pure-eisenstein" => Field::pure_eisenstein(
            desc.p,
            desc.e.ok_or_else(|| schema("pure-eisenstein needs 'e'"))?,
            n_work,
            sym,
        ),
        "eisenstein" => Field::eisenstein(desc.p, m()?, n_work, sym),
        "unramified" => Field::unramified(desc.p, m()?, n_work, sym),
        "mixed-uniformizer" => Field::mixed_uniformizer(
            desc.p,
            m()?,
            desc.e.ok_or_else(|| schema("mixed-uniformizer needs 'e'"))?,
            n_work,
            sym,
        ),
        other => return Err(schema(format!("unknown field kind '{other}'"))),
    };
    built.map_err(classify_padic)
}

fn build_curve(field: &FieldRef, desc: &CurveDesc, n: i64) -> Result<CurveIntegrator> {
    let lc = match &desc.lc {
        None => Elem::one(field),
        Some(s) => Elem::from_rational(field, &parse_rational(s)?),
    };
    let roots = desc
        .roots
        .iter()
        .map(|r| to_elem(field, r))
        .collect::<Result<Vec<_>>>()?;
    let ci = CurveIntegrator::new(field, roots, lc).map_err(classify_bc)?;
    if let Some(coeffs) = &desc.coefficients {
        // Schema invariant: the supplied coefficients and the supplied
        // roots describe the same f, i.e. every root kills f to the
        // working precision.
        let want = coeffs
            .iter()
            .map(|s| Ok(Elem::from_rational(field, &parse_rational(s)?)))
            .collect::<Result<Vec<_>>>()?;
        for (i, w) in want.iter().enumerate() {
            let got = ci.f.coeff(i);
            let diff = &got - w;
            if !diff.is_zero() && diff.valuation() < n {
                return Err(schema(format!(
                    "coefficient {i} of f disagrees with the supplied roots: {got}"
                )));
            }
        }
        if want.len() as i64 <= ci.f.degree().unwrap_or(0) as i64 {
            return Err(schema("coefficient list shorter than deg f + 1"));
        }
    }
    Ok(ci)
}

fn build_point(ci: &CurveIntegrator, desc: &PointDesc) -> Result<CurvePoint> {
    let field = ci.field().clone();
    let x = to_elem(&field, &desc.x)?;
    let y = match &desc.y {
        Some(yd) => to_elem(&field, yd)?,
        None => {
            let y = ci
                .f
                .eval(&x)
                .sqrt(None)
                .map_err(|e| CliError::Math(format!("no square root for y at this x: {e}")))?;
            match desc.sign.as_deref() {
                None | Some("+") => y,
                Some("-") => y.negate(),
                Some(other) => return Err(schema(format!("bad sign hint '{other}'"))),
            }
        }
    };
    Ok(CurvePoint::new(x, y))
}

fn build_form(ci: &CurveIntegrator, form: &Option<Vec<String>>) -> Result<Vec<Elem>> {
    let field = ci.field().clone();
    let coeffs = form
        .as_ref()
        .ok_or_else(|| schema("this task needs the 'form' coefficients"))?;
    coeffs
        .iter()
        .map(|s| Ok(Elem::from_rational(&field, &parse_rational(s)?)))
        .collect()
}

fn build_word(ci: &CurveIntegrator, steps: &[StepDesc], mut at: usize) -> Result<Vec<PathStep>> {
    let mut word = vec![];
    for (i, st) in steps.iter().enumerate() {
        let edge = ci
            .graph
            .edges
            .get(st.edge)
            .ok_or_else(|| schema(format!("step {i}: no Γ-edge {}", st.edge)))?;
        let forward = match st.forward {
            Some(fwd) => fwd,
            None if edge.a == at && edge.b != at => true,
            None if edge.b == at && edge.a != at => false,
            None => {
                return Err(schema(format!(
                    "step {i}: orientation of edge {} is ambiguous here",
                    st.edge
                )))
            }
        };
        word.push(PathStep {
            edge: st.edge,
            forward,
        });
        at = if forward { edge.b } else { edge.a };
    }
    Ok(word)
}

fn install_refs(ci: &mut CurveIntegrator, refs: &Option<RefDesc>) -> Result<()> {
    let field = ci.field().clone();
    let desc = refs
        .as_ref()
        .ok_or_else(|| schema("this task needs 'reference_points'"))?;
    let vx = desc
        .vertex_x
        .iter()
        .map(|n| to_elem(&field, n))
        .collect::<Result<Vec<_>>>()?;
    let ex = desc
        .edge_x
        .iter()
        .map(|n| to_elem(&field, n))
        .collect::<Result<Vec<_>>>()?;
    let built = ci.reference_points_from_x(&vx, &ex).map_err(classify_bc)?;
    ci.set_reference_points(built).map_err(classify_bc)
}

// ---------------------------------------------------------------------------
// DOT output
// ---------------------------------------------------------------------------

fn cover_dot(ci: &CurveIntegrator) -> String {
    let mut out = String::from("graph covering_tree {\n  node [shape=circle];\n");
    for (i, node) in ci.tree.nodes.iter().enumerate() {
        let parity = match node.parity {
            Some(Parity::Odd) => "odd",
            Some(Parity::Even) => "even",
            None => "?",
        };
        let genus = node.genus.unwrap_or(0);
        let _ = writeln!(out, "  v{i} [label=\"v{i}\\n{parity}, g={genus}\"];");
    }
    for edge in &ci.tree.edges {
        let parity = match edge.parity {
            Some(Parity::Odd) => "odd",
            Some(Parity::Even) => "even",
            None => "?",
        };
        let _ = writeln!(out, "  v{} -- v{} [label=\"{parity}\"];", edge.parent, edge.child);
    }
    out.push_str("}\n");
    out
}

fn skeleton_dot(ci: &CurveIntegrator) -> String {
    let mut out = String::from("graph skeleton {\n  node [shape=circle];\n");
    for (i, v) in ci.graph.vertices.iter().enumerate() {
        let sign = match v.sign {
            Some(Sign::Plus) => "+",
            Some(Sign::Minus) => "-",
            None => "",
        };
        let _ = writeln!(out, "  w{i} [label=\"v{}{sign}\"];", v.tree_vertex);
    }
    for (i, edge) in ci.graph.edges.iter().enumerate() {
        let sign = match edge.sign {
            Some(Sign::Plus) => "+",
            Some(Sign::Minus) => "-",
            None => "",
        };
        let _ = writeln!(
            out,
            "  w{} -- w{} [label=\"e{i}{sign}\"];",
            edge.a, edge.b
        );
    }
    out.push_str("}\n");
    out
}

// ---------------------------------------------------------------------------
// Task dispatch
// ---------------------------------------------------------------------------

fn path_spec(ci: &CurveIntegrator, problem: &ProblemFile) -> Result<PathSpec> {
    let start = build_point(
        ci,
        problem
            .start
            .as_ref()
            .ok_or_else(|| schema("this task needs 'start'"))?,
    )?;
    let end = build_point(
        ci,
        problem
            .end
            .as_ref()
            .ok_or_else(|| schema("this task needs 'end'"))?,
    )?;
    let start_vertex = ci.locate_vertex(&start).map_err(classify_bc)?;
    let end_vertex = ci.locate_vertex(&end).map_err(classify_bc)?;
    let word = match &problem.path {
        Some(steps) => build_word(ci, steps, start_vertex)?,
        None => ci
            .shortest_word(start_vertex, end_vertex)
            .ok_or_else(|| CliError::Math("endpoints on different components of Γ".into()))?,
    };
    Ok(PathSpec {
        start,
        start_vertex,
        end,
        end_vertex,
        word,
    })
}

fn run(problem: &ProblemFile, task: &str, out_dir: &PathBuf, n: i64) -> Result<()> {
    if let Ok(workers) = std::env::var("BCINT_WORKERS") {
        workers
            .parse::<usize>()
            .map_err(|_| schema("BCINT_WORKERS must be a positive integer"))?;
        // Reserved: the library currently runs single-threaded.
    }
    let field = build_field(&problem.field, n)?;
    let mut ci = build_curve(&field, &problem.curve, n)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Schema(format!("cannot create output dir: {e}")))?;
    let write = |name: &str, data: &str| -> Result<()> {
        fs::write(out_dir.join(name), data)
            .map_err(|e| CliError::Schema(format!("cannot write {name}: {e}")))
    };
    let write_json = |name: &str, v: &serde_json::Value| -> Result<()> {
        let mut text = serde_json::to_string_pretty(v).expect("serializable");
        text.push('\n');
        write(name, &text)
    };
    match task {
        "cover" => write("cover.dot", &cover_dot(&ci)),
        "skeleton" => write("skeleton.dot", &skeleton_dot(&ci)),
        "bc-integrate" => {
            if problem.path.is_none() {
                return Err(schema("bc-integrate needs an explicit 'path'"));
            }
            install_refs(&mut ci, &problem.reference_points)?;
            let lambda = build_form(&ci, &problem.form)?;
            let path = path_spec(&ci, problem)?;
            let v = ci.bc_integral(&lambda, &path).map_err(classify_bc)?;
            write_json(
                "result.json",
                &serde_json::to_value(ValueOut::new(&v, "berkovich-coleman")).unwrap(),
            )
        }
        "abelian-integrate" => {
            install_refs(&mut ci, &problem.reference_points)?;
            let lambda = build_form(&ci, &problem.form)?;
            let path = path_spec(&ci, problem)?;
            let v = ci.abelian_integral(&lambda, &path).map_err(classify_bc)?;
            write_json(
                "result.json",
                &serde_json::to_value(ValueOut::new(&v, "abelian")).unwrap(),
            )
        }
        "periods" => {
            install_refs(&mut ci, &problem.reference_points)?;
            let lambda = build_form(&ci, &problem.form)?;
            let vals = ci.periods(&lambda).map_err(classify_bc)?;
            let outs: Vec<_> = vals.iter().map(|v| ValueOut::new(v, "period")).collect();
            write_json("result.json", &serde_json::to_value(outs).unwrap())
        }
        "chabauty" => {
            let start = build_point(
                &ci,
                problem
                    .start
                    .as_ref()
                    .ok_or_else(|| schema("chabauty needs 'start'"))?,
            )?;
            let end = build_point(
                &ci,
                problem
                    .end
                    .as_ref()
                    .ok_or_else(|| schema("chabauty needs 'end'"))?,
            )?;
            let (b, minus_a) = ci.chabauty_annihilator(&start, &end).map_err(classify_bc)?;
            let a = minus_a.negate();
            let out = serde_json::json!({
                "integral_0": ValueOut::from_elem(&a, &field, "berkovich-coleman"),
                "integral_1": ValueOut::from_elem(&b, &field, "berkovich-coleman"),
                "annihilator": [
                    ValueOut::from_elem(&b, &field, "coefficient"),
                    ValueOut::from_elem(&minus_a, &field, "coefficient"),
                ],
            });
            write_json("result.json", &out)
        }
        other => Err(schema(format!("unknown task '{other}'"))),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match fs::read_to_string(&args.input) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.input.display());
            return ExitCode::from(2);
        }
    };
    let problem: ProblemFile = match serde_json::from_str(&text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: malformed problem file: {e}");
            return ExitCode::from(2);
        }
    };
    let n = args.precision.unwrap_or(problem.precision);
    if n < 1 {
        eprintln!("error: precision must be ≥ 1");
        return ExitCode::from(2);
    }
    let task = args.task.clone().unwrap_or_else(|| problem.task.clone());
    let out_dir = args.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    match run(&problem, &task, &out_dir, n) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Schema(msg)) => {
            eprintln!("error (schema): {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Math(msg)) => {
            eprintln!("error (precondition): {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Precision(msg)) => {
            eprintln!("error (precision): {msg}");
            ExitCode::from(4)
        }
    }
}
