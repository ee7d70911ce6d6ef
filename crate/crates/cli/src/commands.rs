use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::info;
use secdiff_core::bench::{bench as run_bench, BenchProtocol, BenchResult};
use secdiff_core::config::Config;
use secdiff_core::diffusion::remote::{sample_mpc_tcp, serve_party};
use secdiff_core::diffusion::{
    sample_mpc_local, sample_plain, DenoiserParams, DenoiserShape, Flavor,
};
use secdiff_core::fit::{
    activation_error, exp_error, fit_activation, fit_exp_chebyshev, fit_power, PowerBasis,
};
use secdiff_core::image::{write_pgm, write_raw};
use secdiff_core::nonlinear::{
    format_activation_coefficients, format_exp_coefficients, Activation, ActivationKind,
    ChebyshevExpFit,
};
use secdiff_core::oracle::{grid_error, GridError};
use secdiff_core::transport::tcp::TcpOptions;
use secdiff_core::transport::CostReport;
use secdiff_core::{Error, PartyId, Result};

use crate::{FitFunction, PlainFlavor, SampleMode};

/// Half-width of the grid used to report activation errors.
const ACTIVATION_RANGE: f64 = 8.0;
const REPORT_POINTS: usize = 100_001;

fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Argument(format!("interval `{s}` is not `lo,hi`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

fn error_lines(out: &mut String, label: &str, e: &GridError) {
    let _ = writeln!(out, "{label}.mse={:.6e}", e.mse);
    let _ = writeln!(out, "{label}.max_abs={:.6e}", e.max_abs);
    let _ = writeln!(out, "{label}.worst_input={:.6}", e.worst_input);
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

pub fn fit(
    function: FitFunction,
    interval: Option<&str>,
    degree: Option<usize>,
    even: bool,
    t_exp: f64,
    points: usize,
    output: Option<&Path>,
) -> Result<()> {
    let interval = interval.map(parse_interval).transpose()?;
    let mut report = String::new();
    let coefficients = match function {
        FitFunction::Exp => {
            let (lo, hi) = interval.unwrap_or((t_exp, 0.0));
            if hi != 0.0 {
                return Err(Error::Argument(format!(
                    "the exponential is fitted on [t_exp, 0], got upper end {hi}"
                )));
            }
            let degree = degree.unwrap_or(7);
            let mut coeffs = fit_exp_chebyshev(lo, degree, points)?;
            coeffs.resize(8, 0.0);
            let fit = ChebyshevExpFit {
                t_exp: lo,
                coeffs: coeffs.try_into().expect("eight coefficients"),
            };
            let table = ChebyshevExpFit {
                t_exp: lo,
                ..ChebyshevExpFit::default()
            };
            error_lines(&mut report, "fit", &exp_error(&fit, REPORT_POINTS));
            error_lines(&mut report, "table", &exp_error(&table, REPORT_POINTS));
            format_exp_coefficients(&fit)
        }
        FitFunction::Silu | FitFunction::Mish => {
            let kind = if function == FitFunction::Silu {
                ActivationKind::Silu
            } else {
                ActivationKind::Mish
            };
            match (interval, degree) {
                (None, None) => {
                    let fit = fit_activation(kind, points)?;
                    let r = ACTIVATION_RANGE;
                    error_lines(
                        &mut report,
                        "fit",
                        &activation_error(&fit, -r, r, REPORT_POINTS),
                    );
                    format_activation_coefficients(&fit)
                }
                _ => {
                    let (lo, hi) = interval.unwrap_or((-2.0, 6.0));
                    let degree = degree.unwrap_or(2);
                    let basis = if even {
                        PowerBasis::EvenPlusLinear
                    } else {
                        PowerBasis::Full
                    };
                    let f = |x| kind.exact(x);
                    let fit = fit_power(f, lo, hi, degree, basis, points)?;
                    let e = grid_error(lo, hi, REPORT_POINTS, |x| fit.eval(x), f);
                    error_lines(&mut report, "fit", &e);
                    let mut s = format!("# {} on [{lo}, {hi}]: powers", kind.name());
                    for k in &fit.exponents {
                        let _ = write!(s, " {k}");
                    }
                    s.push('\n');
                    for c in &fit.coeffs {
                        let _ = writeln!(s, "{c:.8}");
                    }
                    s
                }
            }
        }
    };
    match output {
        Some(p) => write_text(p, &coefficients)?,
        None => print!("{coefficients}"),
    }
    print!("{report}");
    Ok(())
}

fn emit_cost(cost: &CostReport, json: bool) {
    if json {
        println!("{}", cost.to_json());
    } else {
        print!("{}", cost.to_text());
    }
}

pub fn sample(
    config: &Path,
    mode: SampleMode,
    flavor: PlainFlavor,
    output: &Path,
    raw: Option<&Path>,
    json: bool,
) -> Result<()> {
    let cfg = Config::load(config)?;
    let params_path = cfg
        .params
        .clone()
        .ok_or_else(|| Error::Config("`params` is not set".into()))?;
    let params = DenoiserParams::load(&params_path)?;
    let sc = cfg.sampler_config()?;
    let start = Instant::now();
    let (x0, cost) = match mode {
        SampleMode::Plain => {
            let flavor = match flavor {
                PlainFlavor::Approx => Flavor::Approximated,
                PlainFlavor::Exact => Flavor::Exact,
            };
            (sample_plain(&params, &sc, flavor)?, CostReport::default())
        }
        SampleMode::MpcLocal => sample_mpc_local(&params, &sc)?,
        SampleMode::MpcTcp => {
            sample_mpc_tcp(&cfg.parties, cfg.hash()?, cfg.timeout(), &params, &sc)?
        }
    };
    info!("sampled in {:.3}s", start.elapsed().as_secs_f64());
    write_pgm(output, cfg.image_w, cfg.image_h, &x0)?;
    let raw = raw
        .map(Path::to_path_buf)
        .unwrap_or_else(|| output.with_extension("f32"));
    write_raw(&raw, &x0)?;
    emit_cost(&cost, json);
    Ok(())
}

pub fn party(id: usize, config: &Path, json: bool) -> Result<()> {
    let id = PartyId::new(id)?;
    let cfg = Config::load(config)?;
    let sc = cfg.sampler_config()?;
    let opts = TcpOptions {
        timeout: cfg.timeout(),
        connect_timeout: cfg.timeout(),
        ..TcpOptions::new(id, cfg.parties.clone(), cfg.hash()?)
    };
    let cost = serve_party(&opts, &sc)?;
    emit_cost(&cost, json);
    Ok(())
}

fn baseline_of(p: BenchProtocol) -> Option<BenchProtocol> {
    match p {
        BenchProtocol::Softmax => Some(BenchProtocol::BaselineSoftmax),
        BenchProtocol::Silu => Some(BenchProtocol::BaselineSilu),
        BenchProtocol::Mish => Some(BenchProtocol::BaselineMish),
        _ => None,
    }
}

pub fn bench(
    config: Option<&Path>,
    protocols: &str,
    sizes: &[usize],
    trials: usize,
    json: bool,
) -> Result<()> {
    let cfg = load_config(config)?;
    let protos = if protocols.trim() == "all" {
        BenchProtocol::ALL.to_vec()
    } else {
        protocols
            .split(',')
            .map(BenchProtocol::parse)
            .collect::<Result<Vec<_>>>()?
    };
    if sizes.is_empty() {
        return Err(Error::Argument("no sizes given".into()));
    }
    let mut results: Vec<BenchResult> = Vec::new();
    for &size in sizes {
        for &p in &protos {
            results.push(run_bench(p, size, trials, cfg.encoding(), cfg.seed)?);
        }
    }
    let find = |p: BenchProtocol, n: usize| results.iter().find(|r| r.protocol == p && r.size == n);
    let mut ratios = Vec::new();
    for r in &results {
        if let Some(b) = baseline_of(r.protocol).and_then(|b| find(b, r.size)) {
            ratios.push((r.protocol.label(), r.size, b.bytes / r.bytes));
        }
    }
    if json {
        let rows: Vec<_> = results
            .iter()
            .map(|r| {
                serde_json::json!({
                    "protocol": r.protocol.label(),
                    "size": r.size,
                    "trials": r.trials,
                    "bytes": r.bytes,
                    "payload_bytes": r.payload_bytes,
                    "messages": r.messages,
                    "rounds": r.rounds,
                    "wall_ms": r.wall.as_secs_f64() * 1e3,
                })
            })
            .collect();
        let ratio_rows: Vec<_> = ratios
            .iter()
            .map(|(p, n, x)| serde_json::json!({"protocol": p, "size": n, "baseline_bytes_ratio": x}))
            .collect();
        let doc = serde_json::json!({"results": rows, "ratios": ratio_rows});
        println!(
            "{}",
            serde_json::to_string_pretty(&doc).expect("bench report serializes")
        );
        return Ok(());
    }
    println!(
        "{:<18} {:>6} {:>6} {:>12} {:>12} {:>9} {:>7} {:>10}",
        "protocol", "size", "trials", "bytes", "payload", "messages", "rounds", "wall_ms"
    );
    for r in &results {
        println!(
            "{:<18} {:>6} {:>6} {:>12.0} {:>12.0} {:>9.0} {:>7.0} {:>10.3}",
            r.protocol.label(),
            r.size,
            r.trials,
            r.bytes,
            r.payload_bytes,
            r.messages,
            r.rounds,
            r.wall.as_secs_f64() * 1e3
        );
    }
    for (p, n, x) in ratios {
        println!("ratio {p} n={n}: baseline uses {x:.3}x the bytes");
    }
    Ok(())
}

pub fn accuracy(activation: &str, grid: usize, config: Option<&Path>) -> Result<()> {
    if grid < 2 {
        return Err(Error::Argument("grid needs at least two points".into()));
    }
    let mut cfg = load_config(config)?;
    let mut report = String::new();
    match activation.trim() {
        "exp" => {
            let fit = cfg.exp_fit()?;
            let _ = writeln!(
                report,
                "function=exp interval=[{},0] grid={grid}",
                fit.t_exp
            );
            error_lines(&mut report, "approx", &exp_error(&fit, grid));
        }
        name => {
            let kind = ActivationKind::parse(name)?;
            if cfg.activation != kind {
                cfg.activation = kind;
                cfg.activation_coefficients = None;
            }
            let act = cfg.activation()?;
            let r = ACTIVATION_RANGE;
            let _ = writeln!(
                report,
                "function={} interval=[{},{}] grid={grid}",
                kind.name(),
                -r,
                r
            );
            let e = match &act {
                Activation::Piecewise(fit) => activation_error(fit, -r, r, grid),
                other => grid_error(-r, r, grid, |x| other.approx(x), |x| kind.exact(x)),
            };
            error_lines(&mut report, "approx", &e);
        }
    }
    print!("{report}");
    Ok(())
}

pub fn gen_params(output: &Path, seed: u64, width: usize, height: usize, zero: bool) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Argument("image dimensions must be positive".into()));
    }
    let shape = DenoiserShape::for_image(width, height);
    let params = if zero {
        DenoiserParams::zeros(shape)?
    } else {
        DenoiserParams::random(shape, seed)?
    };
    params.save(output)?;
    let count: usize = params.tensors().values().map(|t| t.len()).sum();
    println!(
        "wrote {} ({} tensors, {count} weights)",
        output.display(),
        params.tensors().len()
    );
    Ok(())
}
