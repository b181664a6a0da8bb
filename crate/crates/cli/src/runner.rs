//! Task dispatch: resolve inputs, call the owning module, wrap the payload
//! in a run report.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use lo_core::constructions::{
    build_linear_gap_instance, build_mixed_instance, build_quadratic_gap_instance,
    build_rank_one_instance, verify_pigeonhole,
};
use lo_core::decoupling::{decoupling_check, parse_subset_bits, DecouplingConstants, SubsetMask};
use lo_core::gap::Gap;
use lo_core::inverse::{
    bilinear_certificate, fit_gap_linear, quadratic_certificate, verify_certificate, CertOptions,
    FitParams, QuadOptions, StructureCertificate, SubsetMode, YMode,
};
use lo_core::randvar::{bernoulli_lazy, ConditionParams, DiscreteDist};
use lo_core::scalar::{parse_scalar, powi, Scalar};
use lo_core::smallball::{
    rho_bilinear_exact, rho_linear_exact, rho_monte_carlo, rho_quadratic_exact, CenterMode,
    CoeffMatrix, CoeffVector, McForm,
};
use lo_core::Q;

use crate::args::{
    Cmd, ConstructArgs, DecoupleArgs, FormKind, InverseBilinearArgs, InverseLinearArgs,
    InverseQuadraticArgs, RhoArgs, RhoMode, VerifyArgs,
};
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub task: String,
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub versions: Value,
    pub timing_ms: u128,
    pub payload: Value,
}

fn versions() -> Value {
    json!({
        "lo-core": env!("CARGO_PKG_VERSION"),
        "lo-cli": env!("CARGO_PKG_VERSION"),
    })
}

fn report<C: Serialize>(
    task: &str,
    config: &C,
    seed: Option<u64>,
    started: Instant,
    payload: Value,
) -> Result<RunReport, CliError> {
    Ok(RunReport {
        task: task.into(),
        config: serde_json::to_value(config)?,
        seed,
        versions: versions(),
        timing_ms: started.elapsed().as_millis(),
        payload,
    })
}

pub fn parse_dist(spec: &str) -> Result<DiscreteDist<Q>, CliError> {
    match spec {
        "bernoulli" => Ok(DiscreteDist::bernoulli()),
        "sym-bernoulli" => Ok(DiscreteDist::<Q>::bernoulli().symmetrize()),
        "lazy-sym-bernoulli" => Ok(DiscreteDist::<Q>::bernoulli()
            .symmetrize()
            .lazy_product(&Q::from_ratio(1, 2))?),
        other => {
            if let Some(mu) = other.strip_prefix("lazy:") {
                let mu: Q = parse_scalar(mu).map_err(CliError::Config)?;
                Ok(bernoulli_lazy(&mu)?)
            } else {
                read_json(Path::new(other))
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
}

fn parse_q(s: &str) -> Result<Q, CliError> {
    parse_scalar(s).map_err(CliError::Config)
}

fn parse_center(spec: &str, dim: usize) -> Result<CenterMode<Q>, CliError> {
    if spec == "sup" {
        return Ok(CenterMode::SupOverCenter);
    }
    let coords: Result<Vec<Q>, _> = spec.split(',').map(parse_q).collect();
    let coords = coords?;
    if coords.len() != dim {
        return Err(CliError::Config(format!(
            "center has {} coordinates, form lives in dimension {dim}",
            coords.len()
        )));
    }
    Ok(CenterMode::FixedCenter(coords))
}

fn parse_ymode(spec: &str, seed: u64) -> Result<YMode, CliError> {
    if spec == "exhaustive" {
        Ok(YMode::Exhaustive)
    } else if let Some(c) = spec.strip_prefix("sample:") {
        let count: usize = c.parse().map_err(|_| CliError::Config(format!("bad count {c:?}")))?;
        Ok(YMode::Sampled { seed, count })
    } else {
        Err(CliError::Config(format!("unknown mode {spec:?}")))
    }
}

fn parse_subset_mode(spec: &str, seed: u64) -> Result<SubsetMode, CliError> {
    if spec == "exhaustive" {
        Ok(SubsetMode::Exhaustive)
    } else if let Some(c) = spec.strip_prefix("sample:") {
        let count: usize = c.parse().map_err(|_| CliError::Config(format!("bad count {c:?}")))?;
        Ok(SubsetMode::Sampled { seed, count })
    } else {
        Err(CliError::Config(format!("unknown subset mode {spec:?}")))
    }
}

fn load_fit_params(path: &Option<std::path::PathBuf>, beta: Q) -> Result<FitParams<Q>, CliError> {
    match path {
        None => Ok(FitParams::with_beta(beta)),
        Some(p) => {
            let mut params: FitParams<Q> = read_json(p)?;
            params.beta = beta;
            Ok(params)
        }
    }
}

pub fn run(cmd: &Cmd) -> Result<RunReport, CliError> {
    match cmd {
        Cmd::Rho(a) => run_rho(a),
        Cmd::Construct(a) => run_construct(a),
        Cmd::Decouple(a) => run_decouple(a),
        Cmd::InverseLinear(a) => run_inverse_linear(a),
        Cmd::InverseBilinear(a) => run_inverse_bilinear(a),
        Cmd::InverseQuadratic(a) => run_inverse_quadratic(a),
        Cmd::Verify(a) => run_verify(a),
        Cmd::Accept(a) => crate::accept::run_accept(a),
    }
}

fn run_rho(a: &RhoArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let dist = parse_dist(&a.dist)?;
    let beta = parse_q(&a.beta)?;
    let payload = match (a.form, a.mode) {
        (FormKind::Linear, RhoMode::Exact) => {
            let coeffs: CoeffVector<Q> = read_json(&a.matrix)?;
            let center = parse_center(&a.center, coeffs.dim)?;
            let r = rho_linear_exact(&coeffs, &dist, &beta, &center, a.budget)?;
            serde_json::to_value(&r.estimate)?
        }
        (FormKind::Bilinear, RhoMode::Exact) => {
            let m: CoeffMatrix<Q> = read_json(&a.matrix)?;
            let center = parse_center(&a.center, m.dim)?;
            let r = rho_bilinear_exact(&m, &dist, &beta, &center, a.budget)?;
            serde_json::to_value(&r.estimate)?
        }
        (FormKind::Quadratic, RhoMode::Exact) => {
            let m: CoeffMatrix<Q> = read_json(&a.matrix)?;
            let b = match &a.bvec {
                Some(p) => read_json(p)?,
                None => CoeffVector::zeros(m.dim, m.n()),
            };
            let center = parse_center(&a.center, m.dim)?;
            let r = rho_quadratic_exact(&m, &b, &dist, &beta, &center, a.budget)?;
            serde_json::to_value(&r.estimate)?
        }
        (form, RhoMode::Mc) => {
            let grid: Option<Vec<Vec<Q>>> = match &a.grid {
                Some(p) => {
                    let g: CoeffVector<Q> = read_json(p)?;
                    Some(g.entries)
                }
                None => None,
            };
            let est = match form {
                FormKind::Linear => {
                    let coeffs: CoeffVector<Q> = read_json(&a.matrix)?;
                    let center = parse_center(&a.center, coeffs.dim)?;
                    rho_monte_carlo(
                        &McForm::Linear(&coeffs),
                        &dist,
                        &beta,
                        &center,
                        grid.as_deref(),
                        a.samples,
                        a.seed,
                    )?
                }
                FormKind::Bilinear => {
                    let m: CoeffMatrix<Q> = read_json(&a.matrix)?;
                    let center = parse_center(&a.center, m.dim)?;
                    rho_monte_carlo(
                        &McForm::Bilinear(&m),
                        &dist,
                        &beta,
                        &center,
                        grid.as_deref(),
                        a.samples,
                        a.seed,
                    )?
                }
                FormKind::Quadratic => {
                    let m: CoeffMatrix<Q> = read_json(&a.matrix)?;
                    let b = match &a.bvec {
                        Some(p) => read_json(p)?,
                        None => CoeffVector::zeros(m.dim, m.n()),
                    };
                    let center = parse_center(&a.center, m.dim)?;
                    rho_monte_carlo(
                        &McForm::Quadratic(&m, &b),
                        &dist,
                        &beta,
                        &center,
                        grid.as_deref(),
                        a.samples,
                        a.seed,
                    )?
                }
            };
            serde_json::to_value(&est)?
        }
    };
    report("rho", a, Some(a.seed), started, payload)
}

#[derive(serde::Deserialize)]
struct ConstructParams {
    n: usize,
    #[serde(default)]
    gap: Option<Gap<Q>>,
    #[serde(default = "zero_string")]
    delta: String,
    #[serde(default)]
    k: Option<Vec<i64>>,
    #[serde(default)]
    b: Option<CoeffVector<Q>>,
    #[serde(default)]
    k_rows: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    b_rows: Option<Vec<CoeffVector<Q>>>,
    #[serde(default = "default_k_bound")]
    k_bound: i64,
}

fn zero_string() -> String {
    "0".into()
}

fn default_k_bound() -> i64 {
    1_000_000
}

fn run_construct(a: &ConstructArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let p: ConstructParams = read_json(&a.params)?;
    let delta = parse_q(&p.delta)?;
    let need_gap = || {
        p.gap
            .clone()
            .ok_or_else(|| CliError::Config("this kind needs a \"gap\" in the params".into()))
    };
    let inst = match a.kind.as_str() {
        "ex1.1" => build_linear_gap_instance(p.n, &need_gap()?, &delta, a.seed, a.cap)?,
        "ex1.4" => build_quadratic_gap_instance(p.n, &need_gap()?, &delta, a.seed, a.cap)?,
        "ex1.5" => {
            let k = p.k.clone().ok_or_else(|| CliError::Config("ex1.5 needs \"k\"".into()))?;
            let b = p.b.clone().ok_or_else(|| CliError::Config("ex1.5 needs \"b\"".into()))?;
            build_rank_one_instance(p.n, &k, &b, &delta, a.seed, p.k_bound, a.budget)?
        }
        "ex1.6" => {
            let k_rows = p.k_rows.clone().unwrap_or_default();
            let b_rows = p.b_rows.clone().unwrap_or_default();
            build_mixed_instance(p.n, &need_gap()?, &k_rows, &b_rows, &delta, a.seed, a.cap, a.budget)?
        }
        other => return Err(CliError::Config(format!("unknown kind {other:?}"))),
    };
    let check = if a.no_check {
        Value::Null
    } else {
        let (rho, ok) = verify_pigeonhole(&inst, &DiscreteDist::bernoulli(), a.budget)?;
        json!({ "exact_rho_lower_bound": rho.to_string(), "satisfied": ok })
    };
    let payload = json!({
        "instance": serde_json::to_value(&inst)?,
        "pigeonhole": check,
    });
    report("construct", a, Some(a.seed), started, payload)
}

fn run_decouple(a: &DecoupleArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let m: CoeffMatrix<Q> = read_json(&a.matrix)?;
    let dist = parse_dist(&a.dist)?;
    let beta = parse_q(&a.beta)?;
    let clog = parse_q(&a.clog)?;
    let bits = parse_subset_bits(&a.subset).map_err(CliError::Config)?;
    let subset = SubsetMask::new(m.n(), bits)?;
    let b = match &a.bvec {
        Some(p) => read_json(p)?,
        None => CoeffVector::zeros(m.dim, m.n()),
    };
    let center: Vec<Q> = match &a.center {
        Some(c) => match parse_center(c, m.dim)? {
            CenterMode::FixedCenter(v) => v,
            CenterMode::SupOverCenter => {
                return Err(CliError::Config("decouple needs a fixed witness center".into()))
            }
        },
        None => vec![Q::zero(); m.dim],
    };
    let condition = match &a.condition {
        Some(c) => {
            let parts: Result<Vec<Q>, _> = c.split(',').map(parse_q).collect();
            let parts = parts?;
            if parts.len() != 3 {
                return Err(CliError::Config("condition must be c1,c2,c3".into()));
            }
            Some(ConditionParams::new(parts[0].clone(), parts[1].clone(), parts[2].clone())?)
        }
        None => None,
    };
    let constants = DecouplingConstants::for_dim(m.dim);
    let rep = decoupling_check(
        &m,
        &subset,
        &beta,
        &dist,
        &b,
        &center,
        &clog,
        condition.as_ref(),
        &constants,
        a.budget,
    )?;
    let payload = serde_json::to_value(&rep)?;
    report("decouple", a, None, started, payload)
}

fn run_inverse_linear(a: &InverseLinearArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let points: CoeffVector<Q> = read_json(&a.points)?;
    let beta = parse_q(&a.beta)?;
    let params = load_fit_params(&a.params, beta)?;
    let fit = fit_gap_linear(&points.entries, &params)?;
    let payload = json!({
        "fit": fit.as_ref().map(serde_json::to_value).transpose()?,
        "covered": fit.as_ref().map(|f| f.covered.len()),
        "n": points.len(),
    });
    report("inverse-linear", a, None, started, payload)
}

fn run_inverse_bilinear(a: &InverseBilinearArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let m: CoeffMatrix<Q> = read_json(&a.matrix)?;
    let dist = parse_dist(&a.dist)?;
    let beta = parse_q(&a.beta)?;
    let params = load_fit_params(&a.params, beta.clone())?;
    let opts = CertOptions {
        rho_witness: a.rho.as_deref().map(parse_q).transpose()?,
        y_mode: parse_ymode(&a.ymode, a.seed)?,
        budget: a.budget,
    };
    let (cert, trace) = bilinear_certificate(&m, &dist, &beta, &params, &opts)?;
    let payload = json!({
        "certificate": serde_json::to_value(&cert)?,
        "trace": serde_json::to_value(&trace)?,
    });
    report("inverse-bilinear", a, Some(a.seed), started, payload)
}

fn run_inverse_quadratic(a: &InverseQuadraticArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let m: CoeffMatrix<Q> = read_json(&a.matrix)?;
    let dist = parse_dist(&a.dist)?;
    let beta = parse_q(&a.beta)?;
    let params = load_fit_params(&a.params, beta.clone())?;
    let opts = QuadOptions {
        rho_witness: a.rho.as_deref().map(parse_q).transpose()?,
        c_log: parse_q(&a.clog)?,
        subset_mode: parse_subset_mode(&a.subsets, a.seed)?,
        y_mode: parse_ymode(&a.ymode, a.seed)?,
        budget: a.budget,
        min_support: 1,
    };
    let (cert, trace) = quadratic_certificate(&m, &dist, &beta, &params, &opts)?;
    let payload = json!({
        "certificate": serde_json::to_value(&cert)?,
        "trace": serde_json::to_value(&trace)?,
    });
    report("inverse-quadratic", a, Some(a.seed), started, payload)
}

fn run_verify(a: &VerifyArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let m: CoeffMatrix<Q> = read_json(&a.matrix)?;
    let cert: StructureCertificate = read_json(&a.cert)?;
    let dist = parse_dist(&a.dist)?;
    let beta = parse_q(&a.beta)?;
    let probs = verify_certificate(&m, &cert, &dist, &beta, a.budget)?;
    let floor = Q::one() / powi(&Q::from_int(m.n() as i64), cert.bound_exponent.max(0) as u32);
    let all_above = probs.values().all(|p| *p >= floor);
    let probs_json: serde_json::Map<String, Value> = probs
        .iter()
        .map(|(i, p)| (i.to_string(), Value::String(p.to_string())))
        .collect();
    let payload = json!({
        "probabilities": probs_json,
        "floor": floor.to_string(),
        "all_above_floor": all_above,
    });
    report("verify", a, None, started, payload)
}
