//! Subcommand implementations.

use std::path::PathBuf;

use metastate_core::exec::Execution;
use metastate_core::gibbs::{self, DisorderString, NeighborhoodSpec};
use metastate_core::markov::{self, presets, ChainJson, CovarianceMethod, Start, TransitionMatrix};
use metastate_core::meanfield::{self, ModelSpec, PottsParams, SearchOptions};
use metastate_core::metastate::{self, Estimator, KappaOptions, MarginSchedule, PottsStates};
use metastate_core::potts;
use metastate_core::simplex::{SimplexVector, TangentVector};
use metastate_core::verify::{self, Scale, Suite};
use serde::Serialize;
use serde_json::json;

use crate::config::Global;
use crate::output::{num, Output};
use crate::{
    ChainArgs, CliError, EstimatorArg, GibbsArgs, MethodArg, MinimizeArgs, PottsArgs, SimulateArgs, SuiteArg,
    VerifyArgs, WeightsArgs,
};

const DEFAULT_BETA: f64 = 4.0;

fn config_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

fn out_dir(g: &Global) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn execution(g: &Global) -> Execution {
    if g.sequential == Some(true) {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    options: &'a T,
    global: &'a Global,
    #[serde(skip_serializing_if = "Option::is_none")]
    chain: Option<ChainJson>,
}

fn manifest<T: Serialize>(out: &Output, options: &T, g: &Global, chain: Option<&TransitionMatrix>) -> Result<(), CliError> {
    out.manifest(&Resolved { options, global: g, chain: chain.map(|m| m.to_json()) })
}

fn load_chain(
    preset: &Option<String>,
    chain: &Option<String>,
    matrix: &Option<String>,
    fallback: Option<&str>,
) -> Result<TransitionMatrix, CliError> {
    let given = [preset.is_some(), chain.is_some(), matrix.is_some()].iter().filter(|x| **x).count();
    if given > 1 {
        return Err(config_err("give at most one of --preset, --chain, --matrix"));
    }
    if let Some(p) = preset {
        return presets::parse(p).map_err(|e| config_err(e.to_string()));
    }
    if let Some(c) = chain {
        let text = if c.trim_start().starts_with('{') {
            c.clone()
        } else {
            std::fs::read_to_string(c).map_err(|e| config_err(format!("cannot read chain {c}: {e}")))?
        };
        let json: ChainJson = serde_json::from_str(&text).map_err(|e| config_err(format!("chain JSON: {e}")))?;
        return TransitionMatrix::from_json(&json).map_err(|e| config_err(e.to_string()));
    }
    if let Some(m) = matrix {
        let rows = m
            .split(';')
            .map(|r| parse_list(r, "--matrix"))
            .collect::<Result<Vec<_>, _>>()?;
        return TransitionMatrix::new(rows).map_err(|e| config_err(e.to_string()));
    }
    match fallback {
        Some(p) => presets::parse(p).map_err(|e| config_err(e.to_string())),
        None => Err(config_err("no chain given: use --preset, --chain or --matrix")),
    }
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| config_err(format!("{what}: {x:?}: {e}"))))
        .collect()
}

fn parse_start(s: &str, q: usize) -> Result<Start, CliError> {
    if s == "stationary" {
        return Ok(Start::Stationary);
    }
    match s.parse::<usize>() {
        Ok(k) if (1..=q).contains(&k) => Ok(Start::State(k - 1)),
        _ => Err(config_err(format!("--start must be 1..{q} or stationary, got {s:?}"))),
    }
}

fn potts_params(beta: f64, field: Option<f64>, q: usize) -> Result<PottsParams, CliError> {
    let field = match field {
        Some(f) => f,
        None => potts::coexistence(beta, q, (0.0, 5.0), 1e-13)?.field,
    };
    PottsParams::new(beta, field, q).map_err(|e| config_err(e.to_string()))
}

fn vec_cols(prefix: &str, q: usize) -> Vec<String> {
    (1..=q).map(|i| format!("{prefix}{i}")).collect()
}

pub fn chain_defaults() -> ChainArgs {
    ChainArgs {
        method: Some(MethodArg::FundamentalMatrix),
        tol: Some(1e-12),
        rank_tol: Some(1e-10),
        ..Default::default()
    }
}

pub fn chain(g: &Global, a: ChainArgs) -> Result<bool, CliError> {
    let m = load_chain(&a.preset, &a.chain, &a.matrix, None)?;
    let mut out = Output::new(&out_dir(g), "chain", None)?;
    manifest(&out, &a, g, Some(&m))?;
    let cert = markov::validate_chain(&m)?;
    let pi = markov::stationary(&m)?;
    let spectral = markov::spectral_info(&m)?;
    let (method, other) = match a.method.unwrap_or(MethodArg::FundamentalMatrix) {
        MethodArg::Series => (CovarianceMethod::Series, CovarianceMethod::FundamentalMatrix),
        MethodArg::FundamentalMatrix => (CovarianceMethod::FundamentalMatrix, CovarianceMethod::Series),
    };
    let tol = a.tol.unwrap_or(1e-12);
    let cov = markov::covariance_limit(&m, &pi, method, tol)?;
    let cross = markov::covariance_limit(&m, &pi, other, tol)?.max_abs_diff(&cov);
    let rank = markov::tangent_rank(&cov, a.rank_tol.unwrap_or(1e-10));
    let finite = a.n.map(|n| markov::covariance_finite(&m, &pi, n)).transpose()?;
    out.json(
        "chain.json",
        &json!({
            "chain": m.to_json(),
            "certificate": cert,
            "stationary": pi,
            "spectral": spectral,
            "covariance_limit": cov.rows(),
            "method_cross_check": cross,
            "tangent_rank": rank,
            "covariance_finite": finite.as_ref().map(|f| json!({"n": a.n, "rows": f.rows(), "max_diff_to_limit": f.max_abs_diff(&cov)})),
        }),
    )?;
    let q = m.size();
    let mut rows = Vec::new();
    for i in 0..q {
        for j in 0..q {
            let mut r = vec![(i + 1).to_string(), (j + 1).to_string(), num(cov.get(i, j))];
            if let Some(f) = &finite {
                r.push(num(f.get(i, j)));
            }
            rows.push(r);
        }
    }
    let mut headers = vec!["i", "j", "limit"];
    if finite.is_some() {
        headers.push("finite");
    }
    out.csv("covariance.csv", &headers, &rows)?;
    out.say(format!("ergodic: M^{} > 0", cert.power));
    out.say(format!("stationary law: {:?}", pi.as_slice()));
    out.say(format!("second eigenvalue modulus {} (multiplicity {})", spectral.mu, spectral.multiplicity));
    out.say(format!("limit covariance: {:?} (methods differ by {cross:.1e})", cov.rows()));
    out.say(format!("tangent rank {} of {}", rank.rank, q - 1));
    for d in &rank.null_directions {
        out.say(format!("null direction {:?}", d.as_slice()));
    }
    out.finish()?;
    Ok(true)
}

pub fn minimize_defaults() -> MinimizeArgs {
    MinimizeArgs {
        beta: Some(DEFAULT_BETA),
        field: Some(1.0),
        q: Some(3),
        grid: Some(SearchOptions::default().grid_resolution),
        tol: Some(SearchOptions::default().tol),
        ..Default::default()
    }
}

pub fn minimize(g: &Global, a: MinimizeArgs) -> Result<bool, CliError> {
    let q = a.q.unwrap_or(3);
    let params = potts_params(a.beta.unwrap_or(DEFAULT_BETA), a.field, q)?;
    let any_chain = a.preset.is_some() || a.chain.is_some() || a.matrix.is_some();
    let chain = if any_chain { Some(load_chain(&a.preset, &a.chain, &a.matrix, None)?) } else { None };
    let pi = match (&a.pi, &chain) {
        (Some(_), Some(_)) => return Err(config_err("give either --pi or a chain, not both")),
        (Some(p), None) => SimplexVector::normalized(parse_list(p, "--pi")?).map_err(|e| config_err(e.to_string()))?,
        (None, Some(m)) => markov::stationary(m)?,
        (None, None) => SimplexVector::uniform(q),
    };
    if pi.len() != q {
        return Err(config_err(format!("disorder law has {} entries, the Potts model needs {q}", pi.len())));
    }
    let mut out = Output::new(&out_dir(g), "minimize", None)?;
    manifest(&out, &a, g, chain.as_ref())?;
    let model = ModelSpec::potts(&params);
    let opts = SearchOptions {
        grid_resolution: a.grid.unwrap_or(11),
        tol: a.tol.unwrap_or(1e-9),
        execution: execution(g),
        ..SearchOptions::default()
    };
    let search = meanfield::find_minimizers(&model, &pi, &opts)?;
    let condition2 = meanfield::check_condition2(&meanfield::global_stability_vectors(&search));
    out.json("minimizers.json", &json!({"pi": pi, "search": search, "condition2": condition2}))?;
    let mut headers: Vec<String> = ["index", "global", "boundary", "value", "hessian_pd", "min_hessian_eigenvalue"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    headers.extend(vec_cols("total_", q));
    headers.extend(vec_cols("stability_", q));
    let rows: Vec<Vec<String>> = search
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![
                i.to_string(),
                r.global.to_string(),
                r.boundary.to_string(),
                num(r.value),
                r.hessian_pd.map(|b| b.to_string()).unwrap_or_default(),
                r.min_hessian_eigenvalue.map(num).unwrap_or_default(),
            ];
            row.extend(r.total.as_slice().iter().map(|&x| num(x)));
            match &r.stability {
                Some(b) => row.extend(b.as_slice().iter().map(|&x| num(x))),
                None => row.extend(std::iter::repeat_n(String::new(), q)),
            }
            row
        })
        .collect();
    let h: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
    out.csv("minimizers.csv", &h, &rows)?;
    out.say(format!("{} critical profiles, {} global, {} starts dropped", search.records.len(), search.global().count(), search.dropped));
    for (i, r) in search.records.iter().enumerate() {
        out.say(format!(
            "  [{i}] φ = {:.12} total {:.6?} global {} hessian pd {:?}",
            r.value,
            r.total.as_slice(),
            r.global,
            r.hessian_pd
        ));
    }
    out.say(format!("distinct stability vectors: {} (min distance {:.3e})", condition2.holds, condition2.min_distance));
    out.finish()?;
    Ok(true)
}

pub fn potts_defaults() -> PottsArgs {
    PottsArgs { beta: Some(DEFAULT_BETA), q: Some(3), window: Some("0,5".into()), ..Default::default() }
}

pub fn potts(g: &Global, mut a: PottsArgs) -> Result<bool, CliError> {
    let q = a.q.unwrap_or(3);
    let beta = a.beta.unwrap_or(DEFAULT_BETA);
    let window = parse_list(a.window.as_deref().unwrap_or("0,5"), "--window")?;
    let [lo, hi] = window[..] else {
        return Err(config_err("--window takes two numbers"));
    };
    let params = match a.field {
        Some(f) => PottsParams::new(beta, f, q).map_err(|e| config_err(e.to_string()))?,
        None => PottsParams::new(beta, potts::coexistence(beta, q, (lo, hi), 1e-13)?.field, q)?,
    };
    a.field = Some(params.field);
    let mut out = Output::new(&out_dir(g), "potts", None)?;
    manifest(&out, &a, g, None)?;
    let zero = potts::potts_free_energy_u(&params, 0.0);
    let roots: Vec<_> = potts::solve_order_parameters(&params)
        .into_iter()
        .map(|r| json!({"u": r.u, "residual": r.residual, "free_energy": potts::potts_free_energy_u(&params, r.u) - zero}))
        .collect();
    let branch = potts::ordered_branch(&params, 1e-9).ok();
    let (p1, p) = match (branch, q) {
        (Some(b), 3) => (Some(potts::p1(&params, b.u)?), Some(potts::p_of(&params, b.u)?)),
        _ => (None, None),
    };
    out.say(format!("β = {beta}, B = {}, q = {q}", params.field));
    out.say(format!("roots of the mean-field equation: {}", roots.len()));
    for r in &roots {
        out.say(format!("  u = {} (free energy relative to u=0: {})", r["u"], r["free_energy"]));
    }
    match (branch, p1, p) {
        (Some(b), Some(p1), Some(p)) => out.say(format!("ordered branch u* = {}, p1 = {p1}, p = {p}", b.u)),
        (Some(b), _, _) => out.say(format!("ordered branch u* = {}", b.u)),
        _ => out.say("no ordered phase at these parameters"),
    }
    let mut curve = Vec::new();
    if let Some(list) = &a.betas {
        let mut rows = Vec::new();
        for b in parse_list(list, "--betas")? {
            match potts::coexistence(b, q, (lo, hi), 1e-13) {
                Ok(cp) => {
                    let pp = PottsParams::new(b, cp.field, q)?;
                    let p = if q == 3 { potts::p_of(&pp, cp.u_star).ok() } else { None };
                    rows.push(vec![num(b), num(cp.field), num(cp.u_star), p.map(num).unwrap_or_default()]);
                    curve.push(json!({"beta": b, "field": cp.field, "u_star": cp.u_star, "p": p}));
                }
                Err(e) => {
                    out.say(format!("  β = {b}: {e}"));
                    curve.push(json!({"beta": b, "error": e.to_string()}));
                }
            }
        }
        out.csv("phase.csv", &["beta", "field", "u_star", "p"], &rows)?;
        out.say(format!("coexistence curve: {} points written to phase.csv", rows.len()));
    }
    out.json(
        "potts.json",
        &json!({"params": params, "roots": roots, "ordered_branch": branch, "p1": p1, "p": p, "coexistence": curve}),
    )?;
    out.finish()?;
    Ok(true)
}

pub fn gibbs_defaults() -> GibbsArgs {
    GibbsArgs {
        beta: Some(DEFAULT_BETA),
        n: Some(240),
        start: Some("3".into()),
        seed: Some(1),
        ..Default::default()
    }
}

pub fn gibbs(g: &Global, mut a: GibbsArgs) -> Result<bool, CliError> {
    let params = potts_params(a.beta.unwrap_or(DEFAULT_BETA), a.field, 3)?;
    a.field = Some(params.field);
    let m = load_chain(&a.preset, &a.chain, &a.matrix, Some("degenerate:0.5"))?;
    let start = parse_start(a.start.as_deref().unwrap_or("3"), m.size())?;
    let states = PottsStates::new(&params)?;
    let eps = a.epsilon.unwrap_or_else(|| gibbs::default_radius(&states.totals));
    a.epsilon = Some(eps);
    let seed = a.seed.unwrap_or(1);
    let n = a.n.unwrap_or(240);
    let mut out = Output::new(&out_dir(g), "gibbs", Some(seed))?;
    manifest(&out, &a, g, Some(&m))?;
    let path = markov::sample_path(&m, start, n, seed)?;
    let eta = DisorderString::new(path.states.clone(), m.size())?;
    let model = ModelSpec::potts(&params);
    let dist = gibbs::count_distribution(&model, &eta)?;
    let rows: Vec<Vec<String>> = dist
        .iter()
        .map(|(k, p)| k.iter().map(|c| c.to_string()).chain([num(p)]).collect())
        .collect();
    out.csv("counts.csv", &["k1", "k2", "k3", "probability"], &rows)?;
    let specs: Vec<NeighborhoodSpec> = states
        .totals
        .iter()
        .map(|t| NeighborhoodSpec::new(t.clone(), eps))
        .collect::<Result<_, _>>()?;
    let masses: Vec<f64> = specs.iter().map(|s| gibbs::neighborhood_mass(&dist, s)).collect();
    let ratio = gibbs::gibbs_ratio_from(&dist, &specs[0], &specs[1]).ok();
    let marginals: Vec<Option<SimplexVector>> =
        specs.iter().map(|s| gibbs::site_marginal_conditional(&model, &eta, s).ok()).collect();
    let kernels: Vec<SimplexVector> =
        states.totals.iter().map(|t| meanfield::gamma_kernel(&model, eta.last(), t)).collect();
    out.json(
        "gibbs.json",
        &json!({
            "params": params,
            "disorder_counts": eta.counts(),
            "last_symbol": eta.last() + 1,
            "log_z": dist.log_z,
            "epsilon": eps,
            "ordered_totals": states.totals,
            "neighborhood_masses": masses,
            "ratio_1_2": ratio,
            "p1": states.p1,
            "site_marginals": marginals,
            "product_kernels": kernels,
        }),
    )?;
    out.say(format!("disorder counts {:?}, last symbol {}", eta.counts(), eta.last() + 1));
    out.say(format!("log Z = {}", dist.log_z));
    out.say(format!("neighbourhood masses (ε = {eps}): {masses:?}"));
    if let Some(r) = ratio {
        out.say(format!("mass ratio state 1 / state 2 = {r} (p1 = {})", states.p1));
    }
    out.finish()?;
    Ok(true)
}

pub fn weights_defaults() -> WeightsArgs {
    WeightsArgs {
        beta: Some(DEFAULT_BETA),
        samples: Some(1_000_000),
        margin: Some(0.0),
        seed: Some(1),
        empirical_n: Some(0),
        empirical_replicas: Some(10_000),
        grid: Some(0),
        ..Default::default()
    }
}

pub fn weights(g: &Global, mut a: WeightsArgs) -> Result<bool, CliError> {
    let params = potts_params(a.beta.unwrap_or(DEFAULT_BETA), a.field, 3)?;
    a.field = Some(params.field);
    let m = load_chain(&a.preset, &a.chain, &a.matrix, Some("iid:uniform"))?;
    if m.size() != 3 {
        return Err(config_err("the Potts stability vectors need a three-state chain"));
    }
    let seed = a.seed.unwrap_or(1);
    let mut out = Output::new(&out_dir(g), "weights", Some(seed))?;
    manifest(&out, &a, g, Some(&m))?;
    let exec = execution(g);
    let pi = markov::stationary(&m)?;
    let model = ModelSpec::potts(&params);
    let search = meanfield::find_minimizers(&model, &pi, &SearchOptions { execution: exec, ..Default::default() })?;
    let globals: Vec<_> = search.global().filter(|r| r.stability.is_some()).collect();
    let stab: Vec<TangentVector> = globals.iter().filter_map(|r| r.stability.clone()).collect();
    let sigma = markov::covariance_limit(&m, &pi, CovarianceMethod::FundamentalMatrix, 1e-13)?;
    let gw = metastate::gaussian_weights(&sigma, &stab, a.samples.unwrap_or(1_000_000), a.margin.unwrap_or(0.0), seed, exec)?;
    let emp = match a.empirical_n.unwrap_or(0) {
        0 => None,
        n => Some(metastate::empirical_region_weights(
            &m,
            &pi,
            &stab,
            n,
            a.empirical_replicas.unwrap_or(10_000),
            MarginSchedule::scaled(&stab),
            seed.wrapping_add(1),
            exec,
        )?),
    };
    let mut rows = Vec::new();
    for (j, r) in globals.iter().enumerate() {
        let mut row = vec![(j + 1).to_string()];
        row.extend(r.total.as_slice().iter().map(|&x| num(x)));
        row.extend([num(gw.weights[j]), num(gw.stderr[j])]);
        if let Some(e) = &emp {
            row.extend([num(e.weights[j]), num(e.stderr[j])]);
        }
        rows.push(row);
    }
    let mut undecided = vec!["undecided".to_string(), String::new(), String::new(), String::new()];
    undecided.extend([num(gw.undecided), num(gw.undecided_stderr)]);
    if let Some(e) = &emp {
        undecided.extend([num(e.undecided), num(e.undecided_stderr)]);
    }
    rows.push(undecided);
    let mut headers = vec!["region", "total_1", "total_2", "total_3", "gaussian", "gaussian_stderr"];
    if emp.is_some() {
        headers.extend(["empirical", "empirical_stderr"]);
    }
    out.csv("weights.csv", &headers, &rows)?;
    let grid = a.grid.unwrap_or(0);
    if grid > 1 {
        // region map over the tangent plane in Helmert coordinates
        let basis = markov::tangent_basis(3);
        let rows: Vec<Vec<String>> = (0..grid * grid)
            .map(|k| {
                let s = -3.0 + 6.0 * (k / grid) as f64 / (grid - 1) as f64;
                let t = -3.0 + 6.0 * (k % grid) as f64 / (grid - 1) as f64;
                let x = TangentVector::project((0..3).map(|i| s * basis[(i, 0)] + t * basis[(i, 1)]).collect());
                let region = metastate::classify(&x, &stab, 0.0).map(|j| (j + 1).to_string()).unwrap_or_default();
                vec![num(s), num(t), region]
            })
            .collect();
        out.csv("regions.csv", &["s", "t", "region"], &rows)?;
    }
    out.json(
        "weights.json",
        &json!({
            "params": params,
            "pi": pi,
            "covariance": sigma.rows(),
            "minimizers": globals.iter().map(|r| json!({"total": r.total, "stability": r.stability})).collect::<Vec<_>>(),
            "gaussian": gw,
            "empirical": emp,
        }),
    )?;
    out.say(format!("{} global minimizers at β = {}, B = {}", globals.len(), params.beta, params.field));
    for (j, r) in globals.iter().enumerate() {
        out.say(format!("  region {}: total {:.6?} weight {:.5} ± {:.5}", j + 1, r.total.as_slice(), gw.weights[j], gw.stderr[j]));
    }
    out.say(format!("  undecided {:.5}", gw.undecided));
    if let Some(e) = &emp {
        out.say(format!("empirical weights {:.5?}, undecided {:.5}", e.weights, e.undecided));
    }
    out.finish()?;
    Ok(true)
}

pub fn simulate_defaults() -> SimulateArgs {
    SimulateArgs {
        model: Some(crate::ModelArg::Potts),
        beta: Some(DEFAULT_BETA),
        start: Some("3".into()),
        n: Some(10_000),
        replicas: Some(20_000),
        epsilon: Some(0.1),
        estimator: Some(EstimatorArg::Structural),
        seed: Some(1),
        ..Default::default()
    }
}

pub fn simulate(g: &Global, mut a: SimulateArgs) -> Result<bool, CliError> {
    let params = potts_params(a.beta.unwrap_or(DEFAULT_BETA), a.field, 3)?;
    a.field = Some(params.field);
    let m = load_chain(&a.preset, &a.chain, &a.matrix, Some("degenerate:0.5"))?;
    let seed = a.seed.unwrap_or(1);
    let opts = KappaOptions {
        start: parse_start(a.start.as_deref().unwrap_or("3"), m.size())?,
        n: a.n.unwrap_or(10_000),
        replicas: a.replicas.unwrap_or(20_000),
        epsilon: a.epsilon.unwrap_or(0.1),
        seed,
        estimator: match a.estimator.unwrap_or(EstimatorArg::Structural) {
            EstimatorArg::Structural => Estimator::Structural,
            EstimatorArg::Direct => Estimator::Direct,
        },
        schedule: None,
    };
    let mut out = Output::new(&out_dir(g), "simulate", Some(seed))?;
    manifest(&out, &a, g, Some(&m))?;
    let states = PottsStates::new(&params)?;
    let (estimate, records) = metastate::degenerate_potts_kappa(&states, &m, &opts, execution(g))?;
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.replica.to_string(), (r.last + 1).to_string()];
            row.extend(r.counts.iter().map(|c| c.to_string()));
            row.push(r.three_like.to_string());
            row.extend(r.coefficients.iter().map(|&c| num(c)));
            row
        })
        .collect();
    out.csv(
        "replicas.csv",
        &["replica", "last", "count_1", "count_2", "count_3", "three_like", "coef_1", "coef_2", "coef_3"],
        &rows,
    )?;
    out.json(
        "estimate.json",
        &json!({"estimate": estimate, "u": states.u, "p1": states.p1, "p": states.p(), "params": params}),
    )?;
    out.say(format!("β = {}, B = {}, u* = {}, p = {}", params.beta, params.field, states.u, states.p()));
    for atom in &estimate.atoms {
        out.say(format!("  atom {:.4?} weight {:.4} ± {:.4}", atom.coefficients, atom.weight, atom.stderr));
    }
    if estimate.degenerate {
        out.say("  minimizers coincide: the atoms are not distinguishable");
    }
    out.finish()?;
    Ok(true)
}

pub fn verify_defaults() -> VerifyArgs {
    VerifyArgs { suite: Some(SuiteArg::Theorem3), quick: Some(false), beta: Some(DEFAULT_BETA), seed: Some(1) }
}

pub fn verify(g: &Global, a: VerifyArgs) -> Result<bool, CliError> {
    let seed = a.seed.unwrap_or(1);
    let mut out = Output::new(&out_dir(g), "verify", Some(seed))?;
    manifest(&out, &a, g, None)?;
    let suite = match a.suite.unwrap_or(SuiteArg::Theorem3) {
        SuiteArg::Theorem1 => Suite::Theorem1,
        SuiteArg::Theorem3 => Suite::Theorem3,
    };
    let scale = if a.quick == Some(true) { Scale::Quick } else { Scale::Full };
    let report = verify::run(suite, scale, a.beta.unwrap_or(DEFAULT_BETA), seed, execution(g))?;
    out.json("verify.json", &report)?;
    if !report.convergence.is_empty() {
        let rows: Vec<Vec<String>> = report
            .convergence
            .iter()
            .map(|c| std::iter::once(c.n.to_string()).chain(c.weights.iter().map(|&w| num(w))).collect())
            .collect();
        out.csv("convergence.csv", &["n", "pure_3", "even", "biased", "reversed"], &rows)?;
    }
    for c in &report.checks {
        let status = match (c.passed, c.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (non-gating)",
        };
        out.say(format!("{status}: {} = {:.5} (tolerance {})", c.name, c.value, c.tolerance));
    }
    let passed = report.passed();
    out.say(if passed { "suite passed" } else { "suite failed" });
    out.finish()?;
    Ok(passed)
}
