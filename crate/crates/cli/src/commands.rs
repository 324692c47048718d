use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lrc_core::analyzer::{
    cover_check, min_distance, optimality_check, structural_locality, CoverReport, LocalityReport,
    OptimalityReport,
};
use lrc_core::builder::{algorithm1, baseline, nu_params, realize};
use lrc_core::codec::{
    bytes_from_data, data_from_bytes, decode_erasures, encode, local_repair, ErasurePattern,
    MatrixFile, StripeFile,
};
use lrc_core::simstore::{
    pairs_trace, random_workload, singles_trace, trace_from_jsonl, trace_to_jsonl, Cluster,
    WorkloadMix,
};
use lrc_core::updatemeter::{
    balance_predicate, compare as compare_reports, numeric_support, structural_support,
    uc_bounds_u1, uc_curve, uc_curve_with_samples, Comparison, SupportMatrix, UcReport, UcRow,
};
use lrc_core::{CodeParams, CodeRealization, FieldContext, Method, TannerGraph};
use serde::Serialize;

use crate::manifest::{digest_file, Run, RunManifest};
use crate::{
    coded, CodeFiles, CodecCommand, CompareArgs, ConstructArgs, FieldSpec, ParamsArgs, Pattern,
    RerunArgs, SimRunArgs, UcArgs, VerifyArgs, WorkloadArgs, EXIT_IO, EXIT_VERIFY,
};

fn field_context(spec: FieldSpec) -> Result<FieldContext> {
    Ok(match spec.polynomial {
        Some(p) => FieldContext::with_polynomial(spec.m, p)?,
        None => FieldContext::new(spec.m)?,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load_graph(path: &Path) -> Result<TannerGraph> {
    TannerGraph::from_json(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_matrix(path: &Path) -> Result<MatrixFile> {
    MatrixFile::parse(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_code(files: &CodeFiles) -> Result<CodeRealization> {
    let graph = load_graph(&files.graph)?;
    Ok(load_matrix(&files.matrix)?.realize(graph)?)
}

fn load_stripe(path: &Path, real: Option<&CodeRealization>) -> Result<StripeFile> {
    let sf = StripeFile::from_bytes(&read_bytes(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    if let Some(real) = real {
        let f = real.field();
        if sf.m != f.degree()
            || sf.polynomial != f.polynomial()
            || sf.stripe.n() != real.graph().n()
        {
            return Err(coded(
                EXIT_VERIFY,
                format!("{} was not written for this code", path.display()),
            ));
        }
    }
    Ok(sf)
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    w.into_inner().context("flushing csv")
}

// ---- params ----

#[derive(Serialize)]
struct ParamsReport {
    n: usize,
    k: usize,
    d: usize,
    r: usize,
    groups: usize,
    local_checks: usize,
    global_checks: usize,
    cover_set_size: usize,
    cover_threshold: usize,
    lambda: usize,
    plain_global_degree_target: usize,
    balance_predicate: bool,
    u1_min: usize,
    u1_max: usize,
    optimality: OptimalityReport,
}

pub fn params(a: &ParamsArgs) -> Result<()> {
    let p = nu_params(a.n, a.k, a.r)?;
    let (u1_min, u1_max) = uc_bounds_u1(&p);
    let report = ParamsReport {
        n: p.n,
        k: p.k,
        d: p.d,
        r: p.r,
        groups: p.group_count(),
        local_checks: p.local_check_count(),
        global_checks: p.global_check_count(),
        cover_set_size: p.cover_set_size(),
        cover_threshold: p.cover_threshold(),
        lambda: p.lambda(),
        plain_global_degree_target: p.plain_global_degree_target(),
        balance_predicate: balance_predicate(&p),
        u1_min,
        u1_max,
        optimality: optimality_check(&p),
    };
    if a.json {
        print!("{}", String::from_utf8(pretty(&report)?)?);
        return Ok(());
    }
    println!("n={} k={} d={} r={}", p.n, p.k, p.d, p.r);
    println!("groups={}", report.groups);
    println!("local_checks={}", report.local_checks);
    println!("global_checks={}", report.global_checks);
    println!("cover_set_size={}", report.cover_set_size);
    println!("cover_threshold={}", report.cover_threshold);
    println!("lambda={}", report.lambda);
    println!(
        "plain_global_degree_target={}",
        report.plain_global_degree_target
    );
    println!("balance_predicate={}", report.balance_predicate);
    println!("u1_range={}..={}", u1_min, u1_max);
    println!(
        "optimal={} ({})",
        report.optimality.optimal, report.optimality.detail
    );
    Ok(())
}

// ---- construct ----

pub fn construct(a: &ConstructArgs, args: &[String], config: serde_json::Value) -> Result<()> {
    let p = nu_params(a.n, a.k, a.r)?;
    let field = field_context(a.field)?;
    let method = Method::from(a.method);
    let graph = method.build(&p)?;
    let real = realize(&graph, &field, a.seed, a.max_retries)?;
    let mut run = Run::new(&a.out)?;
    run.seed("realization", a.seed);
    run.write("graph.json", graph.to_json().as_bytes())?;
    run.write(
        "matrix.txt",
        MatrixFile::from_realization(&real).to_text().as_bytes(),
    )?;
    run.finish("construct", args, config)?;
    let degrees: Vec<usize> = graph.global_checks().map(|c| c.neighbors.len()).collect();
    println!(
        "{} code {p} over GF(2^{}) seed {}",
        method.name(),
        field.degree(),
        a.seed
    );
    println!(
        "edges={} global_check_degrees={degrees:?}",
        graph.edge_count()
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

// ---- verify ----

#[derive(Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct VerifyReport {
    params: CodeParams,
    passed: bool,
    checks: Vec<Check>,
    d_exact: Option<usize>,
    witness: Option<Vec<usize>>,
    cover: Option<CoverReport>,
    locality: LocalityReport,
    optimality: OptimalityReport,
}

pub fn verify(a: &VerifyArgs, args: &[String], config: serde_json::Value) -> Result<()> {
    let graph = load_graph(&a.code.graph)?;
    let mf = load_matrix(&a.code.matrix)?;
    let params = *graph.params();
    let mut checks = Vec::new();

    let violations = graph.validate();
    checks.push(Check {
        name: "graph",
        passed: violations.is_empty(),
        detail: if violations.is_empty() {
            "structure valid".into()
        } else {
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        },
    });

    let header_ok = mf.params == params;
    checks.push(Check {
        name: "header",
        passed: header_ok,
        detail: format!("matrix file {} / graph {params}", mf.params),
    });

    let mismatches = if header_ok {
        mf.support_mismatches(&graph)
    } else {
        Vec::new()
    };
    checks.push(Check {
        name: "support",
        passed: header_ok && mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            "nonzero pattern of H equals the graph's edges".into()
        } else {
            format!("support mismatch at (check, variable) {mismatches:?}")
        },
    });

    let real = if header_ok && mismatches.is_empty() {
        match mf.realize(graph.clone()) {
            Ok(real) => {
                checks.push(Check {
                    name: "parity_block",
                    passed: true,
                    detail: "P solves H and G H^T = 0".into(),
                });
                Some(real)
            }
            Err(e) => {
                checks.push(Check {
                    name: "parity_block",
                    passed: false,
                    detail: e.to_string(),
                });
                None
            }
        }
    } else {
        None
    };

    let cover = match cover_check(&graph, params.d) {
        Ok(rep) => {
            let detail = match rep.failures.first() {
                None => format!(
                    "all {} check subsets with gamma in [{}, {}] pass",
                    rep.subsets_checked, rep.gamma_min, rep.gamma_max
                ),
                Some(f) => format!(
                    "{} failing subsets; first: checks {:?} (gamma {}) cover {} variables",
                    rep.failure_count, f.checks, f.gamma, f.covered
                ),
            };
            checks.push(Check {
                name: "cover",
                passed: rep.passed(),
                detail,
            });
            Some(rep)
        }
        Err(e) => {
            checks.push(Check {
                name: "cover",
                passed: false,
                detail: e.to_string(),
            });
            None
        }
    };

    let (mut d_exact, mut witness) = (None, None);
    match &real {
        Some(real) => match min_distance(real.field(), real.parity_check()) {
            Ok(rep) => {
                checks.push(Check {
                    name: "distance",
                    passed: rep.d_exact == params.d,
                    detail: format!("d_exact = {} (target {})", rep.d_exact, params.d),
                });
                d_exact = Some(rep.d_exact);
                witness = Some(rep.witness);
            }
            Err(e) => checks.push(Check {
                name: "distance",
                passed: false,
                detail: e.to_string(),
            }),
        },
        None => checks.push(Check {
            name: "distance",
            passed: false,
            detail: "no usable realization".into(),
        }),
    }

    let locality = structural_locality(&graph);
    checks.push(Check {
        name: "locality",
        passed: locality.certified,
        detail: format!(
            "max locality {} (r = {})",
            locality.per_node.iter().max().unwrap_or(&0),
            params.r
        ),
    });

    let optimality = optimality_check(&params);
    checks.push(Check {
        name: "optimality",
        passed: optimality.optimal,
        detail: optimality.detail.clone(),
    });

    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    let report = VerifyReport {
        params,
        passed,
        checks,
        d_exact,
        witness,
        cover,
        locality,
        optimality,
    };
    if let Some(out) = &a.out {
        let mut run = Run::new(out)?;
        run.input(&a.code.graph);
        run.input(&a.code.matrix);
        run.write("report.json", &pretty(&report)?)?;
        run.finish("verify", args, config)?;
    }
    if !passed {
        return Err(coded(
            EXIT_VERIFY,
            format!("verification failed: {}", failed.join(", ")),
        ));
    }
    Ok(())
}

// ---- uc ----

#[derive(Serialize)]
struct U1Check {
    lo: usize,
    hi: usize,
    per_node: Vec<usize>,
    holds: bool,
}

#[derive(Serialize)]
struct UcOutput {
    label: String,
    params: CodeParams,
    support: &'static str,
    u1: U1Check,
    balance_predicate: bool,
    reports: Vec<UcReport>,
}

fn u1_check(params: &CodeParams, s: &SupportMatrix) -> U1Check {
    let (lo, hi) = uc_bounds_u1(params);
    let per_node: Vec<usize> = (0..s.rows()).map(|i| s.row_weight(i)).collect();
    let holds = per_node.iter().all(|&u| (lo..=hi).contains(&u));
    U1Check {
        lo,
        hi,
        per_node,
        holds,
    }
}

fn print_report(label: &str, r: &UcReport) {
    let mode = if r.is_exact() { "exact" } else { "sampled" };
    println!(
        "{label} x={} u_bar={}/{} ({}) min={} max={} {mode} histogram={:?}",
        r.x, r.u_bar_num, r.u_bar_den, r.u_bar_decimal, r.u_min, r.u_max, r.histogram
    );
}

pub fn uc(a: &UcArgs, args: &[String], config: serde_json::Value) -> Result<()> {
    let graph = load_graph(&a.graph)?;
    let params = *graph.params();
    let mut run = Run::new(&a.out)?;
    run.input(&a.graph);
    let (support, kind) = match &a.matrix {
        Some(path) => {
            let mf = load_matrix(path)?;
            if mf.params != params {
                return Err(coded(
                    EXIT_VERIFY,
                    "matrix file and graph disagree on parameters",
                ));
            }
            run.input(path);
            (numeric_support(&mf.p), "numeric")
        }
        None => (structural_support(&graph), "structural"),
    };
    run.seed("sampling", a.seed);
    let reports =
        a.x.iter()
            .map(|&x| uc_curve_with_samples(&support, x, a.budget, a.seed, a.samples))
            .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<UcRow> = reports
        .iter()
        .map(|r| UcRow::new(&a.label, &params, r))
        .collect();
    let out = UcOutput {
        label: a.label.clone(),
        params,
        support: kind,
        u1: u1_check(&params, &support),
        balance_predicate: balance_predicate(&params),
        reports,
    };
    for r in &out.reports {
        print_report(&a.label, r);
    }
    println!("u1 within [{}, {}]: {}", out.u1.lo, out.u1.hi, out.u1.holds);
    run.write("uc.json", &pretty(&out)?)?;
    run.write("uc.csv", &csv_bytes(&rows)?)?;
    run.finish("uc", args, config)
}

// ---- compare ----

#[derive(Serialize)]
struct CompareRow {
    x: usize,
    label_a: String,
    a_num: u64,
    a_den: u64,
    a_decimal: String,
    label_b: String,
    b_num: u64,
    b_den: u64,
    b_decimal: String,
    improvement_num: i64,
    improvement_den: i64,
    improvement_percent: String,
    exact: bool,
}

#[derive(Serialize)]
struct CompareOutput {
    a: Side,
    b: Side,
    rows: Vec<CompareRow>,
}

#[derive(Serialize)]
struct Side {
    label: String,
    params: CodeParams,
    reports: Vec<UcReport>,
}

fn compare_row(
    x: usize,
    la: &str,
    ra: &UcReport,
    lb: &str,
    rb: &UcReport,
    c: &Comparison,
) -> CompareRow {
    CompareRow {
        x,
        label_a: la.to_string(),
        a_num: ra.u_bar_num,
        a_den: ra.u_bar_den,
        a_decimal: ra.u_bar_decimal.clone(),
        label_b: lb.to_string(),
        b_num: rb.u_bar_num,
        b_den: rb.u_bar_den,
        b_decimal: rb.u_bar_decimal.clone(),
        improvement_num: c.improvement_num,
        improvement_den: c.improvement_den,
        improvement_percent: c.improvement_decimal.clone(),
        exact: c.exact,
    }
}

pub fn compare(a: &CompareArgs, args: &[String], config: serde_json::Value) -> Result<()> {
    if let Some(grid) = &a.sweep {
        return sweep(a, grid, args, config);
    }
    let (pa, pb) = (
        a.a.as_ref().expect("required"),
        a.b.as_ref().expect("required"),
    );
    let (ga, gb) = (load_graph(pa)?, load_graph(pb)?);
    let (sa, sb) = (structural_support(&ga), structural_support(&gb));
    let mut run = Run::new(&a.out)?;
    run.input(pa);
    run.input(pb);
    run.seed("sampling", a.seed);
    let mut rows = Vec::new();
    let (mut ra_all, mut rb_all) = (Vec::new(), Vec::new());
    for &x in &a.x {
        let ra = uc_curve(&sa, x, a.budget, a.seed)?;
        let rb = uc_curve(&sb, x, a.budget, a.seed)?;
        let c = compare_reports(&ra, &rb, false)?;
        println!(
            "x={x} {}={}/{} ({}) {}={}/{} ({}) improvement={}%",
            a.label_a,
            ra.u_bar_num,
            ra.u_bar_den,
            ra.u_bar_decimal,
            a.label_b,
            rb.u_bar_num,
            rb.u_bar_den,
            rb.u_bar_decimal,
            c.improvement_decimal
        );
        rows.push(compare_row(x, &a.label_a, &ra, &a.label_b, &rb, &c));
        ra_all.push(ra);
        rb_all.push(rb);
    }
    let out = CompareOutput {
        a: Side {
            label: a.label_a.clone(),
            params: *ga.params(),
            reports: ra_all,
        },
        b: Side {
            label: a.label_b.clone(),
            params: *gb.params(),
            reports: rb_all,
        },
        rows,
    };
    run.write("compare.json", &pretty(&out)?)?;
    run.write("compare.csv", &csv_bytes(&out.rows)?)?;
    run.finish("compare", args, config)
}

#[derive(Debug, Clone, Serialize)]
struct Grid {
    rates: Vec<f64>,
    localities: Vec<usize>,
    n: Vec<usize>,
}

fn parse_grid(entries: &[String]) -> Result<Grid> {
    let mut grid = Grid {
        rates: vec![0.6, 0.5],
        localities: vec![4],
        n: vec![15, 20],
    };
    for e in entries {
        let (key, list) = e
            .split_once('=')
            .ok_or_else(|| coded(EXIT_VERIFY, format!("sweep entry {e:?} is not key=list")))?;
        let items = list.split(',').map(str::trim).filter(|s| !s.is_empty());
        let bad = |s: &str| coded(EXIT_VERIFY, format!("sweep {key}: bad value {s:?}"));
        match key {
            "rates" => {
                grid.rates = items
                    .map(|s| {
                        s.parse::<f64>()
                            .ok()
                            .filter(|v| *v > 0.0 && *v < 1.0)
                            .ok_or_else(|| bad(s))
                    })
                    .collect::<Result<_>>()?
            }
            "localities" => {
                grid.localities = items
                    .map(|s| s.parse().map_err(|_| bad(s)))
                    .collect::<Result<_>>()?
            }
            "n" => {
                grid.n = items
                    .map(|s| s.parse().map_err(|_| bad(s)))
                    .collect::<Result<_>>()?
            }
            _ => return Err(coded(EXIT_VERIFY, format!("unknown sweep key {key:?}"))),
        }
    }
    Ok(grid)
}

#[derive(Serialize)]
struct SweepRow {
    n: usize,
    rate: f64,
    k: usize,
    r: usize,
    d: usize,
    method: String,
    x: usize,
    u_min: usize,
    u_bar_num: u64,
    u_bar_den: u64,
    u_bar_decimal: String,
    u_max: usize,
}

#[derive(Serialize)]
struct SweepImprovement {
    n: usize,
    rate: f64,
    k: usize,
    r: usize,
    x: usize,
    improvement_num: i64,
    improvement_den: i64,
    improvement_percent: String,
}

#[derive(Serialize)]
struct Skipped {
    n: usize,
    rate: f64,
    k: usize,
    r: usize,
    reason: String,
}

#[derive(Serialize)]
struct SweepOutput {
    grid: Grid,
    rows: Vec<SweepRow>,
    improvements: Vec<SweepImprovement>,
    skipped: Vec<Skipped>,
}

fn sweep(
    a: &CompareArgs,
    entries: &[String],
    args: &[String],
    config: serde_json::Value,
) -> Result<()> {
    let grid = parse_grid(entries)?;
    let mut out = SweepOutput {
        grid: grid.clone(),
        rows: Vec::new(),
        improvements: Vec::new(),
        skipped: Vec::new(),
    };
    for &n in &grid.n {
        for &rate in &grid.rates {
            for &r in &grid.localities {
                let k = (rate * n as f64 + 1e-9).floor() as usize;
                let skip = |reason: String| Skipped {
                    n,
                    rate,
                    k,
                    r,
                    reason,
                };
                let p = match nu_params(n, k, r) {
                    Ok(p) => p,
                    Err(e) => {
                        out.skipped.push(skip(e.to_string()));
                        continue;
                    }
                };
                let proposed = match algorithm1(&p) {
                    Ok(g) => g,
                    Err(e) => {
                        out.skipped.push(skip(e.to_string()));
                        continue;
                    }
                };
                let base = baseline(&p);
                let (sp, sb) = (structural_support(&proposed), structural_support(&base));
                for &x in a.x.iter().filter(|&&x| x <= p.k) {
                    let rp = uc_curve(&sp, x, a.budget, a.seed)?;
                    let rb = uc_curve(&sb, x, a.budget, a.seed)?;
                    for (method, rep) in [("proposed", &rp), ("baseline", &rb)] {
                        out.rows.push(SweepRow {
                            n,
                            rate,
                            k,
                            r,
                            d: p.d,
                            method: method.into(),
                            x,
                            u_min: rep.u_min,
                            u_bar_num: rep.u_bar_num,
                            u_bar_den: rep.u_bar_den,
                            u_bar_decimal: rep.u_bar_decimal.clone(),
                            u_max: rep.u_max,
                        });
                    }
                    let c = compare_reports(&rp, &rb, false)?;
                    println!(
                        "n={n} rate={rate} k={k} r={r} d={} x={x} proposed={} baseline={} improvement={}%",
                        p.d, rp.u_bar_decimal, rb.u_bar_decimal, c.improvement_decimal
                    );
                    out.improvements.push(SweepImprovement {
                        n,
                        rate,
                        k,
                        r,
                        x,
                        improvement_num: c.improvement_num,
                        improvement_den: c.improvement_den,
                        improvement_percent: c.improvement_decimal,
                    });
                }
            }
        }
    }
    for s in &out.skipped {
        eprintln!(
            "skipped n={} rate={} k={} r={}: {}",
            s.n, s.rate, s.k, s.r, s.reason
        );
    }
    let mut run = Run::new(&a.out)?;
    run.seed("sampling", a.seed);
    run.write("sweep.csv", &csv_bytes(&out.rows)?)?;
    run.write("sweep.json", &pretty(&out)?)?;
    run.finish("compare", args, config)
}

// ---- codec ----

#[derive(Serialize)]
struct DecodeOutput {
    erased: Vec<usize>,
    blocks_read: Vec<usize>,
    payload_len: u64,
}

#[derive(Serialize)]
struct RepairOutput {
    node: usize,
    blocks_read: Vec<usize>,
    count: usize,
}

pub fn codec(c: &CodecCommand, args: &[String], config: serde_json::Value) -> Result<()> {
    match c {
        CodecCommand::Encode { code, input, out } => {
            let real = load_code(code)?;
            let bytes = read_bytes(input)?;
            let data = data_from_bytes(real.field(), real.graph().k(), &bytes)?;
            let stripe = encode(&real, &data)?;
            let file = StripeFile {
                m: real.field().degree(),
                polynomial: real.field().polynomial(),
                payload_len: bytes.len() as u64,
                stripe,
            };
            let mut run = Run::new(out)?;
            run.input(&code.graph);
            run.input(&code.matrix);
            run.input(input);
            run.write("stripe.bin", &file.to_bytes())?;
            run.finish("codec encode", args, config)?;
            println!(
                "encoded {} bytes into {} blocks of {} symbols",
                bytes.len(),
                file.stripe.n(),
                file.stripe.rows()
            );
            Ok(())
        }
        CodecCommand::Erase {
            stripe,
            blocks,
            out,
        } => {
            let mut sf = load_stripe(stripe, None)?;
            sf.stripe
                .erase(&ErasurePattern::new(blocks.iter().copied()))?;
            let mut run = Run::new(out)?;
            run.input(stripe);
            run.write("stripe.bin", &sf.to_bytes())?;
            run.finish("codec erase", args, config)?;
            println!("missing blocks {:?}", sf.stripe.missing());
            Ok(())
        }
        CodecCommand::Decode { code, stripe, out } => {
            let real = load_code(code)?;
            let sf = load_stripe(stripe, Some(&real))?;
            let erased = sf.stripe.missing();
            let decoded = decode_erasures(&real, &sf.stripe, &ErasurePattern::default())?;
            let data = decoded.stripe.data(&real)?;
            let payload_len = usize::try_from(sf.payload_len).context("payload length")?;
            let bytes = bytes_from_data(real.field(), &data, payload_len)?;
            let report = DecodeOutput {
                erased: erased.clone(),
                blocks_read: decoded.blocks_read.iter().copied().collect(),
                payload_len: sf.payload_len,
            };
            let full = StripeFile {
                stripe: decoded.stripe,
                ..sf
            };
            let mut run = Run::new(out)?;
            run.input(&code.graph);
            run.input(&code.matrix);
            run.input(stripe);
            run.write("data.bin", &bytes)?;
            run.write("stripe.bin", &full.to_bytes())?;
            run.write("decode.json", &pretty(&report)?)?;
            run.finish("codec decode", args, config)?;
            println!(
                "recovered blocks {erased:?} reading {} blocks; wrote {} bytes",
                report.blocks_read.len(),
                bytes.len()
            );
            Ok(())
        }
        CodecCommand::Repair {
            code,
            stripe,
            node,
            out,
        } => {
            let real = load_code(code)?;
            let mut sf = load_stripe(stripe, Some(&real))?;
            if *node >= sf.stripe.n() {
                return Err(coded(EXIT_VERIFY, format!("no node {node}")));
            }
            // a present block is treated as lost
            sf.stripe.erase(&ErasurePattern::new([*node]))?;
            let (column, read) = local_repair(&real, &sf.stripe, *node)?;
            sf.stripe.set_block(*node, column)?;
            let report = RepairOutput {
                node: *node,
                count: read.len(),
                blocks_read: read.into_iter().collect(),
            };
            let mut run = Run::new(out)?;
            run.input(&code.graph);
            run.input(&code.matrix);
            run.input(stripe);
            run.write("stripe.bin", &sf.to_bytes())?;
            run.write("repair.json", &pretty(&report)?)?;
            run.finish("codec repair", args, config)?;
            println!(
                "repaired node {node} reading {} blocks {:?}",
                report.count, report.blocks_read
            );
            Ok(())
        }
    }
}

// ---- sim ----

pub fn workload(a: &WorkloadArgs, args: &[String], config: serde_json::Value) -> Result<()> {
    let p = nu_params(a.n, a.k, a.r)?;
    let field_size = field_context(a.field)?.size();
    let trace = match a.pattern {
        Pattern::Singles => singles_trace(p.k, 0, a.rows, a.seed, field_size),
        Pattern::Pairs => pairs_trace(p.k, 0, a.rows, a.seed, field_size),
        Pattern::Random => {
            let mix = WorkloadMix {
                update: a.update,
                batch_update: a.batch,
                failure: a.failure,
                batch_size: a.batch_size,
                stripes: a.stripes,
                rows: a.rows,
                max_failed: a.max_failed.unwrap_or(p.d - 1),
            };
            random_workload(&p, &mix, a.length, a.seed, field_size)
                .map_err(|e| coded(EXIT_VERIFY, e))?
        }
    };
    let mut run = Run::new(&a.out)?;
    run.seed("trace", a.seed);
    run.write("trace.jsonl", trace_to_jsonl(&trace).as_bytes())?;
    run.finish("sim workload", args, config)?;
    println!("wrote {} events", trace.len());
    Ok(())
}

pub fn sim_run(a: &SimRunArgs, args: &[String], config: serde_json::Value) -> Result<()> {
    let mut run = Run::new(&a.out)?;
    let mut cluster = match (&a.state, &a.graph, &a.matrix) {
        (Some(state), _, _) => {
            run.input(state);
            Cluster::load(state)?
        }
        (None, Some(graph), Some(matrix)) => {
            let files = CodeFiles {
                graph: graph.clone(),
                matrix: matrix.clone(),
            };
            run.input(graph);
            run.input(matrix);
            run.seed("data", a.data_seed);
            let mut c = Cluster::provision(load_code(&files)?);
            c.fill_random(a.stripes, a.rows, a.data_seed)?;
            c
        }
        _ => return Err(coded(EXIT_IO, "need --state or --graph with --matrix")),
    };
    run.input(&a.trace);
    let trace = trace_from_jsonl(&read_text(&a.trace)?)
        .map_err(|e| coded(EXIT_IO, format!("parsing {}: {e}", a.trace.display())))?;
    let metrics = cluster.replay(&trace)?;
    let s = metrics.summary();
    run.write("metrics.json", metrics.to_json().as_bytes())?;
    run.write("metrics.csv", metrics.to_csv().as_bytes())?;
    let state_dir = run.dir().join("cluster");
    if state_dir.exists() {
        fs::remove_dir_all(&state_dir)
            .with_context(|| format!("clearing {}", state_dir.display()))?;
    }
    cluster.save(&state_dir)?;
    run.record_dir("cluster")?;
    run.finish("sim run", args, config)?;
    println!(
        "events={} updates={} mean_parity_writes={}/{} ({}) repairs={} repair_reads={} degraded_reads={}",
        metrics.events.len(),
        s.updates,
        s.mean_parity_writes_num,
        s.mean_parity_writes_den,
        s.mean_parity_writes_decimal,
        s.repairs,
        s.repair_reads,
        s.degraded_reads
    );
    Ok(())
}

// ---- rerun ----

fn replace_out(args: &[String], out: &Path) -> Result<Vec<String>> {
    let mut next = Vec::with_capacity(args.len());
    let mut replaced = false;
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--out" {
            next.push(arg.clone());
            iter.next();
            next.push(out.to_string_lossy().into_owned());
            replaced = true;
        } else if arg.starts_with("--out=") {
            next.push(format!("--out={}", out.display()));
            replaced = true;
        } else {
            next.push(arg.clone());
        }
    }
    if !replaced {
        return Err(coded(EXIT_IO, "manifest arguments carry no --out"));
    }
    Ok(next)
}

pub fn rerun(a: &RerunArgs) -> Result<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    let out: PathBuf = std::path::absolute(&a.out)?;
    std::env::set_current_dir(&manifest.cwd)
        .with_context(|| format!("entering {}", manifest.cwd.display()))?;
    for input in &manifest.inputs {
        let now = digest_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(coded(EXIT_VERIFY, format!("input {} changed", input.path)));
        }
    }
    let args = replace_out(&manifest.args, &out)?;
    crate::run(&args)?;
    let mut mismatched = Vec::new();
    for o in &manifest.outputs {
        let path = out.join(&o.path);
        match digest_file(&path) {
            Ok(d) if d == o.sha256 => {}
            _ => mismatched.push(o.path.clone()),
        }
    }
    if !mismatched.is_empty() {
        return Err(coded(
            EXIT_VERIFY,
            format!(
                "outputs differ from the manifest: {}",
                mismatched.join(", ")
            ),
        ));
    }
    println!(
        "reproduced {} outputs byte-identically",
        manifest.outputs.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_defaults_and_overrides() {
        let g = parse_grid(&[]).unwrap();
        assert_eq!(
            (g.rates, g.localities, g.n),
            (vec![0.6, 0.5], vec![4], vec![15, 20])
        );
        let g = parse_grid(&["rates=0.5,0.6".into(), "localities=4,6".into()]).unwrap();
        assert_eq!(g.rates, vec![0.5, 0.6]);
        assert_eq!(g.localities, vec![4, 6]);
        assert!(parse_grid(&["rates=1.5".into()]).is_err());
        assert!(parse_grid(&["colour=red".into()]).is_err());
    }

    #[test]
    fn out_argument_is_replaced() {
        let args: Vec<String> = ["uc", "--graph", "g.json", "--out", "a"]
            .map(String::from)
            .to_vec();
        let next = replace_out(&args, Path::new("/tmp/b")).unwrap();
        assert_eq!(next[4], "/tmp/b");
        let args: Vec<String> = ["uc", "--out=a"].map(String::from).to_vec();
        assert_eq!(replace_out(&args, Path::new("b")).unwrap()[1], "--out=b");
        assert!(replace_out(&["params".to_string()], Path::new("b")).is_err());
    }
}
