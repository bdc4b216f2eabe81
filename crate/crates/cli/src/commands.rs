//! Subcommand bodies: each returns text or residual rows; `main` handles I/O.

use std::fmt::Write as _;
use std::path::Path;

use bratteli_core::diagram::{Diagram, DiagramError, DEFAULT_PATH_CAP};
use bratteli_core::laplacian::{
    energy, exact_visit_rate, harmonic_residual, solve_harmonic, walk, Boundary, HarmonicOptions, LevelFunction, WalkOptions,
    WeightedNetwork,
};
use bratteli_core::markov::{check_dual_identities, check_operators, dual_kernels, kolmogorov_residual, MarkovError, MarkovSystem};
use bratteli_core::measurable::duality_defects;
use bratteli_core::measures::{ers_ecs_classify, hat_matrix, tower_masses, verify_tail_invariance};
use bratteli_core::perron::{check_irreducible_aperiodic, classify_recurrence, pf_solve_matrix, PfOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::spec::{tail_invariant, SpecError, SpecFile, TransitionSpec};
use crate::{AnalyzeOpts, Analysis, Format, Suite, TestFunction};

fn issue(kind: String, message: String) -> Value {
    json!({ "kind": kind, "message": message })
}

/// Report with `valid` and every violation found; read errors propagate.
pub fn validate(path: &Path, no_isolated_points: bool) -> Result<(Value, Option<SpecFile>), SpecError> {
    let text = std::fs::read_to_string(path)?;
    let file = match SpecFile::parse(&text) {
        Ok(f) => f,
        Err(e) => return Ok((json!({ "valid": false, "violations": [issue(e.kind(), e.to_string())] }), None)),
    };
    let mut violations: Vec<Value> = match file.violations() {
        Ok(v) => v.iter().map(|e| issue(crate::spec::variant_name(e), e.to_string())).collect(),
        Err(e) => vec![issue(e.kind(), e.to_string())],
    };
    if no_isolated_points && violations.is_empty() {
        if let Ok(mats) = file.raw_matrices() {
            violations.extend(Diagram::single_successor_violations(&mats).iter().map(|e| issue(crate::spec::variant_name(e), e.to_string())));
        }
    }
    if violations.is_empty() {
        match file.build_diagram() {
            Err(e) => violations.push(issue(e.kind(), e.to_string())),
            Ok(d) => {
                if file.markov.is_some() {
                    if let Err(e) = file.build_markov(&d) {
                        violations.push(issue(e.kind(), e.to_string()));
                    }
                }
            }
        }
    }
    if file.kernels.is_some() {
        if let Err(e) = file.build_chain() {
            violations.push(issue(e.kind(), e.to_string()));
        }
    }
    let valid = violations.is_empty();
    Ok((json!({ "valid": valid, "violations": violations }), Some(file)))
}

fn load(path: &Path, depth: Option<usize>) -> Result<SpecFile, SpecError> {
    let mut file = SpecFile::read(path)?;
    if let Some(d) = depth {
        file.diagram.depth = d;
    }
    Ok(file)
}

/// The spec's Markov system, or uniform transitions from a uniform start.
fn markov_or_uniform(file: &SpecFile, d: &Diagram) -> Result<MarkovSystem, SpecError> {
    if file.markov.is_some() {
        return file.build_markov(d);
    }
    let k = d.level_size(0);
    Ok(MarkovSystem::uniform(d.clone(), vec![1.0 / k as f64; k])?)
}

fn network(file: &SpecFile, d: &Diagram) -> Result<WeightedNetwork, SpecError> {
    let hk = dual_kernels(&markov_or_uniform(file, d)?)?;
    Ok(WeightedNetwork::new(hk, Boundary::Reflect)?)
}

fn test_function(kind: TestFunction, sizes: &[usize]) -> LevelFunction {
    let top = (sizes.len().max(2) - 1) as f64;
    sizes
        .iter()
        .enumerate()
        .map(|(n, &k)| {
            (0..k)
                .map(|v| match kind {
                    TestFunction::Linear => n as f64 / top,
                    TestFunction::Constant => 1.0,
                    TestFunction::Alternating => if n % 2 == 0 { 1.0 } else { -1.0 },
                    TestFunction::Vertex => v as f64,
                })
                .collect()
        })
        .collect()
}

fn level_csv(header: &str, d: &Diagram, values: &[Vec<f64>]) -> String {
    let mut out = format!("level,label,{header}\n");
    for (n, l) in values.iter().enumerate() {
        let w = d.level_window(n);
        for (v, x) in l.iter().enumerate() {
            let _ = writeln!(out, "{n},{},{x:.16e}", w.label(v));
        }
    }
    out
}

fn render(format: Format, json: Value, csv: impl FnOnce() -> String) -> Result<String, SpecError> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(&json)?,
        Format::Csv => csv(),
    })
}

pub fn analyze(what: Analysis, path: &Path, opts: &AnalyzeOpts) -> Result<String, SpecError> {
    let file = load(path, opts.depth)?;
    if what == Analysis::Kernels {
        return analyze_kernels(&file, opts);
    }
    let d = file.build_diagram()?;
    match what {
        Analysis::Pf => {
            if !d.is_stationary() {
                return Err(SpecError::Invalid("pf needs a stationary diagram".into()));
            }
            let f = d.matrix(0);
            let a = f.transpose_f64();
            let pf = pf_solve_matrix(&a, f.col_window(), &PfOptions { tol: opts.tol, ..Default::default() })?;
            let period = check_irreducible_aperiodic(&a, a.nrows().max(1));
            let recurrence = opts.horizon.map(|h| {
                let r = classify_recurrence(&a, pf.lambda, h);
                json!({ "classification": r.classification, "decay_exponent": r.decay_exponent, "first_return_mass": r.first_return_mass })
            });
            let json = json!({
                "lambda": pf.lambda, "window": pf.window, "t": pf.t, "s": pf.s,
                "residual": pf.residual, "iterations": pf.iterations, "irreducibility": period, "recurrence": recurrence,
            });
            render(opts.format, json, || {
                let mut out = String::from("label,lambda,t,s\n");
                for (k, (t, s)) in pf.t.iter().zip(&pf.s).enumerate() {
                    let _ = writeln!(out, "{},{:.16e},{t:.16e},{s:.16e}", pf.window.label(k), pf.lambda);
                }
                out
            })
        }
        Analysis::Measure => {
            let mu = tail_invariant(&d)?;
            let report = verify_tail_invariance(&d, &mu, opts.tol)?;
            let class = ers_ecs_classify(&d);
            let json = json!({
                "levels": mu.levels, "total_mass": mu.total_mass(), "tail_invariance": report,
                "ers": class.ers, "ecs": class.ecs, "class": class.label(),
            });
            render(opts.format, json, || level_csv("mu", &d, &mu.levels))
        }
        Analysis::Markov => {
            let sys = file.build_markov(&d)?;
            let q = sys.propagate_q();
            let kolmogorov = match kolmogorov_residual(&sys, DEFAULT_PATH_CAP) {
                Ok(r) => Some(r),
                Err(MarkovError::Diagram(DiagramError::TooManyPaths { .. })) => None,
                Err(e) => return Err(e.into()),
            };
            let hk = dual_kernels(&sys)?;
            let q_hat: Vec<_> = hk.q_hat.iter().map(|m| m.to_dense()).collect();
            let json = json!({ "q": q, "q_hat": q_hat, "kolmogorov_residual": kolmogorov, "duals": check_dual_identities(&hk) });
            render(opts.format, json, || level_csv("q", &d, &q))
        }
        Analysis::Laplacian => {
            let net = network(&file, &d)?;
            let sizes = net.level_sizes();
            let bottom = vec![0.0; sizes[0]];
            let top = vec![1.0; sizes[net.top()]];
            let sol = solve_harmonic(&net, &bottom, &top, &HarmonicOptions { tol: opts.tol, max_iter: 1_000_000, ..Default::default() })?;
            let json = json!({
                "f": sol.f, "iterations": sol.iterations, "residual": sol.residual, "max_principle_ok": sol.max_principle_ok,
            });
            render(opts.format, json, || level_csv("f", &d, &sol.f))
        }
        Analysis::Energy => {
            let net = network(&file, &d)?;
            let f = test_function(opts.function, &net.level_sizes());
            let e = energy(&net, &f)?;
            let json = json!({ "direct": e.direct, "operator": e.operator, "per_level": e.per_level });
            render(opts.format, json, || {
                let mut out = String::from("level,energy\n");
                for (n, x) in e.per_level.iter().enumerate() {
                    let _ = writeln!(out, "{n},{x:.16e}");
                }
                out
            })
        }
        Analysis::Walk => {
            let net = network(&file, &d)?;
            let wo = WalkOptions { steps: opts.steps, trials: opts.trials, seed: opts.seed };
            let stats = walk(&net, opts.start, &wo)?;
            let exact = exact_visit_rate(&net, opts.start, opts.steps)?;
            let json = json!({
                "start": stats.start, "steps": opts.steps, "trials": opts.trials, "seed": opts.seed,
                "return_fraction": stats.return_fraction, "visit_rate": stats.visit_rate,
                "visit_rate_se": stats.visit_rate_se, "exact_visit_rate": exact,
            });
            render(opts.format, json, || {
                let mut out = String::from("trial,returns\n");
                for (i, r) in stats.returns_per_trial.iter().enumerate() {
                    let _ = writeln!(out, "{i},{r}");
                }
                out
            })
        }
        Analysis::Kernels => unreachable!("handled above"),
    }
}

fn analyze_kernels(file: &SpecFile, opts: &AnalyzeOpts) -> Result<String, SpecError> {
    let chain = file.build_chain()?;
    let masses = chain.masses();
    let defects: Vec<f64> = chain
        .duals()?
        .iter()
        .map(|p| {
            let (a, b) = duality_defects(p);
            a.iter().chain(&b).fold(0.0_f64, |m, x| m.max(x.abs()))
        })
        .collect();
    let sizes: Vec<usize> = masses.iter().map(Vec::len).collect();
    let f = test_function(opts.function, &sizes);
    let json = json!({
        "masses": masses, "tail_variation": chain.tail_variation(), "duality_defects": defects,
        "energy": chain.energy(&f)?,
    });
    render(opts.format, json, || {
        let mut out = String::from("level,cell,mass\n");
        for (n, l) in masses.iter().enumerate() {
            for (x, m) in l.iter().enumerate() {
                let _ = writeln!(out, "{n},{x},{m:.16e}");
            }
        }
        out
    })
}

#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: String,
    pub residual: f64,
}

fn row(name: impl Into<String>, residual: f64) -> CheckRow {
    CheckRow { name: name.into(), residual }
}

pub fn check(path: &Path, suite: Suite, seed: u64) -> Result<Vec<CheckRow>, SpecError> {
    let file = SpecFile::read(path)?;
    let mut rows = Vec::new();
    let all = suite == Suite::All;
    if suite == Suite::Kernels || (all && file.kernels.is_some()) {
        check_kernels(&file, &mut rows)?;
    }
    if suite == Suite::Kernels {
        return Ok(rows);
    }
    let d = file.build_diagram()?;
    if all || suite == Suite::Consistency {
        let mu = tail_invariant(&d)?;
        rows.push(row("tail invariance", verify_tail_invariance(&d, &mu, f64::INFINITY)?.max_residual));
        let towers = tower_masses(&d, &mu)?;
        rows.push(row("tower recursion", towers.recursion_residuals.iter().copied().fold(0.0, f64::max)));
        let sys = markov_or_uniform(&file, &d)?;
        match kolmogorov_residual(&sys, DEFAULT_PATH_CAP) {
            Ok(r) => rows.push(row("kolmogorov consistency", r)),
            Err(MarkovError::Diagram(DiagramError::TooManyPaths { .. })) => log::warn!("kolmogorov check skipped: too many cylinders"),
            Err(e) => return Err(e.into()),
        }
        let hk = dual_kernels(&sys)?;
        let r = check_dual_identities(&hk);
        rows.push(row("forward propagation", r.forward_propagation));
        rows.push(row("backward propagation", r.backward_propagation));
        if matches!(file.markov.as_ref().map(|m| &m.p), Some(TransitionSpec::FromTailInvariant)) {
            let diff = (0..d.depth()).map(|n| hk.q_hat[n].max_abs_diff(&hat_matrix(&d, n).to_f64())).fold(0.0, f64::max);
            rows.push(row("dual kernel equals hat matrix", diff));
        }
    }
    if all || suite == Suite::Operators {
        let sys = markov_or_uniform(&file, &d)?;
        let hk = dual_kernels(&sys)?;
        let r = check_dual_identities(&hk);
        rows.push(row("detailed balance", r.detailed_balance));
        rows.push(row("dual kernel stochastic", r.q_hat_stochastic));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = [0.0_f64; 4];
        for n in 0..d.depth() {
            let f = bratteli_core::gen::random_probability(&mut rng, d.level_size(n + 1));
            let g = bratteli_core::gen::random_probability(&mut rng, d.level_size(n));
            let o = check_operators(&hk, n, &f, &g);
            for (w, x) in worst.iter_mut().zip([o.adjointness, o.contractivity_slack.max(0.0), o.stationarity, o.t_hat_stochastic]) {
                *w = w.max(x);
            }
        }
        for (name, x) in ["adjointness", "contractivity excess", "stationarity of T", "T stochastic"].iter().zip(worst) {
            rows.push(row(*name, x));
        }
    }
    if all || suite == Suite::Laplacian {
        let net = network(&file, &d)?;
        let sizes = net.level_sizes();
        let opts = HarmonicOptions { tol: 1e-13, max_iter: 1_000_000, ..Default::default() };
        let sol = solve_harmonic(&net, &vec![0.0; sizes[0]], &vec![1.0; sizes[net.top()]], &opts)?;
        rows.push(row("harmonic residual", harmonic_residual(&net, &sol.f)?));
        rows.push(row("maximum principle", if sol.max_principle_ok { 0.0 } else { f64::INFINITY }));
        for kind in [TestFunction::Linear, TestFunction::Vertex] {
            let e = energy(&net, &test_function(kind, &sizes))?;
            rows.push(row(format!("energy forms agree ({kind:?})").to_lowercase(), (e.direct - e.operator).abs() / e.direct.abs().max(1.0)));
        }
        rows.push(row("energy of constants", energy(&net, &net.constant(1.0))?.direct));
    }
    Ok(rows)
}

fn check_kernels(file: &SpecFile, rows: &mut Vec<CheckRow>) -> Result<(), SpecError> {
    let chain = file.build_chain()?;
    let duals = chain.duals()?;
    let defect = duals
        .iter()
        .map(|p| {
            let (a, b) = duality_defects(p);
            a.iter().chain(&b).fold(0.0_f64, |m, x| m.max(x.abs()))
        })
        .fold(0.0, f64::max);
    rows.push(row("kernel duality", defect));
    let hk = chain.hat_kernels()?;
    let diff = duals.iter().zip(&hk.q_hat).map(|(p, q)| p.q.to_csr().max_abs_diff(q)).fold(0.0, f64::max);
    rows.push(row("chain duals equal dual kernels", diff));
    let sizes: Vec<usize> = hk.q.iter().map(Vec::len).collect();
    let f = test_function(TestFunction::Vertex, &sizes);
    let net = WeightedNetwork::new(hk, Boundary::Reflect)?;
    let e = chain.energy(&f)?;
    let direct = energy(&net, &f)?.direct;
    rows.push(row("chain energy is twice network energy", (e - 2.0 * direct).abs() / e.abs().max(1.0)));
    Ok(())
}
