mod args;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use serde::Serialize;

use args::*;
use permqmc::approx::assemble_qdn;
use permqmc::cbc::{cbc_construct, cbc_with_shift, shift_search, CbcMode};
use permqmc::config::ExperimentConfig;
use permqmc::error_engine::{
    mean_sq_error_decomposed, mean_sq_error_kernel, mean_sq_error_spectral, shifted_error_sq_spectral,
    initial_error_sq, worst_case_error_sq, ErrorReport,
};
use permqmc::integrands::{integrate, Integrand, IntegrandSpec, RuleFile};
use permqmc::kernels::EvalMode;
use permqmc::perm::PermStructure;
use permqmc::study::{dimension_experiment, rows_to_csv, run_convergence_study};
use permqmc::weights::{Generator, SpectralWeight};

/// Bad input: unreadable config, invalid parameters, inconsistent flags.
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl fmt::Display) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.to_string()))
}

enum Outcome {
    Clean,
    Flagged,
}

impl Outcome {
    fn from_flag(flagged: bool) -> Self {
        if flagged {
            Outcome::Flagged
        } else {
            Outcome::Clean
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Flagged) => {
            eprintln!("warning: result flagged by certification checks");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    use permqmc::Error as E;
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<E>() {
        Some(
            E::InvalidParameter(_)
            | E::NotPrime(_)
            | E::Domain(_)
            | E::DimensionMismatch { .. }
            | E::Parse(_),
        ) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| config_error(format!("cannot start {t} threads: {e}")))?;
    }
    match &cli.command {
        Command::Cbc(a) => cmd_cbc(&cli, a),
        Command::ShiftSearch(a) => cmd_shift(&cli, a),
        Command::ErrorEval(a) => cmd_error(&cli, a),
        Command::ApproxBuild(a) => cmd_approx(&cli, a),
        Command::Convergence(a) => cmd_convergence(&cli, a),
        Command::Integrate(a) => cmd_integrate(&cli, a),
    }
}

fn load_config(cli: &Cli, space: &SpaceArgs, default_d: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?,
        None => {
            let d = space
                .d
                .or(default_d)
                .ok_or_else(|| config_error("no dimension given; pass --d or --config"))?;
            let w = SpectralWeight::sobolev(1.0).map_err(config_error)?;
            ExperimentConfig::new(w, PermStructure::full(d).map_err(config_error)?)
        }
    };
    let w = &cfg.space;
    let generator = match space.generator {
        Some(GeneratorArg::Korobov) => Generator::KorobovLinear,
        Some(GeneratorArg::Plain) => Generator::PlainLinear,
        None => w.generator().clone(),
    };
    cfg.space = SpectralWeight::new(
        space.alpha.unwrap_or(w.alpha()),
        space.beta0.unwrap_or(w.beta0()),
        space.beta1.unwrap_or(w.beta1()),
        generator,
        space.c_r.unwrap_or(w.c_r()),
    )
    .map_err(config_error)?;
    if space.d.is_some() || space.invariant.is_some() {
        let d = space.d.unwrap_or(cfg.structure.d());
        cfg.structure = match space.invariant.as_deref() {
            None if cli.config.is_none() => PermStructure::full(d),
            None => PermStructure::new(d, cfg.structure.invariant()),
            Some(text) => parse_invariant(d, text)?,
        }
        .map_err(config_error)?;
    }
    match space.eval {
        Some(EvalArg::Closed) => cfg.eval = Some(EvalMode::ClosedForm),
        Some(EvalArg::Spectral) => cfg.eval = Some(EvalMode::Spectral { half_width: None }),
        None => {}
    }
    if let Some(s) = cli.seed {
        cfg.params.seed = s;
    }
    if let Some(t) = cli.tol {
        cfg.params.tol = t;
    }
    Ok(cfg)
}

fn parse_invariant(d: usize, text: &str) -> Result<permqmc::Result<PermStructure>> {
    Ok(match text.trim() {
        "all" => PermStructure::full(d),
        "none" | "" => PermStructure::none(d),
        list => {
            let idx = list
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| config_error(format!("invariant list '{list}': {e}")))?;
            PermStructure::from_one_based(d, &idx)
        }
    })
}

fn validated(cfg: ExperimentConfig) -> Result<ExperimentConfig> {
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn emit(path: Option<&PathBuf>, content: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, content),
        None => {
            print!("{content}");
            if !content.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes") + "\n"
}

fn read_rule(path: &Path) -> Result<RuleFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RuleFile::parse(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn single<T: Copy>(flag: Option<T>, list: &[T], what: &str) -> Result<T> {
    match (flag, list) {
        (Some(v), _) => Ok(v),
        (None, [v]) => Ok(*v),
        (None, []) => Err(config_error(format!("no {what} given"))),
        (None, _) => Err(config_error(format!("this command takes a single {what}; the config lists {}", list.len()))),
    }
}

fn cmd_cbc(cli: &Cli, a: &CbcArgs) -> Result<Outcome> {
    let mut cfg = load_config(cli, &a.space, None)?;
    let n = single(a.n, &cfg.params.n, "n")?;
    cfg.params.n = vec![n];
    let lambda = a.lambda.or(match cfg.params.mode {
        CbcMode::BetterThanAverage { lambda } => Some(lambda),
        CbcMode::Minimize => None,
    });
    cfg.params.mode = match (a.mode, lambda) {
        (Some(ModeArg::Minimize), _) => CbcMode::Minimize,
        (Some(ModeArg::Average), l) => CbcMode::BetterThanAverage { lambda: l.unwrap_or(1.0) },
        (None, Some(l)) => CbcMode::BetterThanAverage { lambda: l },
        (None, None) => CbcMode::Minimize,
    };
    if let Some(t) = a.trials {
        cfg.params.trials = t;
    }
    let cfg = validated(cfg)?;
    let spec = cfg.kernel_spec()?;
    let p = &cfg.params;
    let res = if p.trials > 0 {
        cbc_with_shift(&spec, n, p.mode, p.trials, p.seed)?
    } else {
        cbc_construct(&spec, n, p.mode)?
    };
    if let Some(path) = a.out.out_rule.as_ref().or(cfg.output.rule.as_ref()) {
        write_file(path, &res.rule.to_text())?;
    }
    emit(a.out.out_json.as_ref().or(cfg.output.json.as_ref()), &(res.to_json() + "\n"))?;
    let flagged = !res.bound_holds()
        || res.shift.as_ref().is_some_and(|s| s.flagged)
        || res.achieved_mean_e2_certificate > p.tol * initial_error_sq(&spec);
    Ok(Outcome::from_flag(flagged))
}

fn cmd_shift(cli: &Cli, a: &ShiftArgs) -> Result<Outcome> {
    let rule = match read_rule(&a.rule)? {
        RuleFile::Lattice(r) => r,
        RuleFile::Weighted(_) => return Err(config_error("shift search needs a lattice rule file")),
    };
    let mut cfg = load_config(cli, &a.space, Some(rule.d()))?;
    if let Some(t) = a.trials {
        cfg.params.trials = t;
    }
    if cfg.params.trials == 0 {
        cfg.params.trials = 64;
    }
    let cfg = validated(cfg)?;
    let spec = cfg.kernel_spec()?;
    if rule.d() != spec.d() {
        return Err(permqmc::Error::DimensionMismatch { expected: spec.d(), found: rule.d() }.into());
    }
    let s = shift_search(&rule, &spec, cfg.params.trials, cfg.params.seed)?;
    if let Some(path) = a.out.out_rule.as_ref().or(cfg.output.rule.as_ref()) {
        write_file(path, &s.rule.to_text())?;
    }
    emit(a.out.out_json.as_ref().or(cfg.output.json.as_ref()), &pretty(&s))?;
    Ok(Outcome::from_flag(s.flagged))
}

#[derive(Serialize)]
struct ErrorOutput {
    rule_kind: &'static str,
    nodes: usize,
    d: usize,
    reports: Vec<ErrorReport>,
    /// routes to the same quantity agree within their certificates
    agree: bool,
    flagged: bool,
}

fn cmd_error(cli: &Cli, a: &ErrorArgs) -> Result<Outcome> {
    let rule = read_rule(&a.rule)?;
    let d = rule.d().ok_or_else(|| config_error("the rule file has no nodes"))?;
    let mut cfg = load_config(cli, &a.space, Some(d))?;
    if let Some(h) = a.half_width {
        cfg.params.half_width = h;
    }
    let cfg = validated(cfg)?;
    let spec = cfg.kernel_spec()?;
    let h = cfg.params.half_width;
    let want = |m: MethodArg| a.method == MethodArg::All || a.method == m;
    let explicit = a.method != MethodArg::All;
    let mut reports = Vec::new();
    // optional routes are skipped with a warning under `all`
    let push = |reports: &mut Vec<ErrorReport>, name: &str, r: permqmc::Result<ErrorReport>| -> Result<()> {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) if !explicit => eprintln!("warning: {name} route skipped: {e}"),
            Err(e) => return Err(e.into()),
        }
        Ok(())
    };
    let (kind, nodes) = match &rule {
        RuleFile::Lattice(r) => ("lattice", r.n() as usize),
        RuleFile::Weighted(w) => ("weighted", w.len()),
    };
    if want(MethodArg::Worst) {
        push(&mut reports, "worst-case", worst_case_error_sq(&rule.to_cubature(), &spec))?;
    }
    let mut mean_reports = Vec::new();
    match &rule {
        RuleFile::Lattice(r) if r.shift().is_none() => {
            if want(MethodArg::Kernel) {
                mean_reports.push(("kernel", mean_sq_error_kernel(r, &spec)));
            }
            if want(MethodArg::Decomposition) {
                mean_reports.push(("decomposition", mean_sq_error_decomposed(r, &spec)));
            }
            if want(MethodArg::Spectral) {
                mean_reports.push(("spectral", mean_sq_error_spectral(r, &spec, h)));
            }
        }
        RuleFile::Lattice(r) => {
            if want(MethodArg::Spectral) {
                push(&mut reports, "spectral", shifted_error_sq_spectral(r, &spec, h))?;
            }
            if matches!(a.method, MethodArg::Kernel | MethodArg::Decomposition) {
                return Err(config_error("mean-over-shifts routes need an unshifted lattice rule"));
            }
        }
        RuleFile::Weighted(_) => {
            if !want(MethodArg::Worst) {
                return Err(config_error("weighted rules only support the worst-case route"));
            }
        }
    }
    let first_mean = reports.len();
    for (name, r) in mean_reports {
        push(&mut reports, name, r)?;
    }
    // routes to the same quantity; a shifted lattice rule has two routes to its worst-case error
    let groups: Vec<&[ErrorReport]> = match &rule {
        RuleFile::Lattice(r) if r.shift().is_some() => vec![&reports[..]],
        _ => vec![&reports[..first_mean], &reports[first_mean..]],
    };
    let scale = initial_error_sq(&spec);
    let uncertified = |r: &ErrorReport| r.flagged || r.certificate > cfg.params.tol * scale;
    let agree = groups.iter().all(|g| g.windows(2).all(|p| p[0].agrees_with(&p[1])));
    // a quantity is certified when at least one route certifies it
    let flagged = !agree || groups.iter().any(|g| !g.is_empty() && g.iter().all(uncertified));
    let out = ErrorOutput { rule_kind: kind, nodes, d, reports, agree, flagged };
    emit(a.out_json.as_ref().or(cfg.output.json.as_ref()), &pretty(&out))?;
    Ok(Outcome::from_flag(flagged))
}

fn cmd_approx(cli: &Cli, a: &ApproxArgs) -> Result<Outcome> {
    let mut cfg = load_config(cli, &a.space, None)?;
    let n = single(a.big_n, &cfg.params.big_n, "N")?;
    cfg.params.big_n = vec![n];
    if let Some(t) = a.tau {
        cfg.params.tau = t;
    }
    if let Some(dl) = a.delta {
        cfg.params.delta = dl;
    }
    if let Some(b) = a.search_budget {
        cfg.params.search_budget = b;
    }
    let cfg = validated(cfg)?;
    let spec = cfg.kernel_spec()?;
    let q = assemble_qdn(&spec, n, cfg.approx_params())?;
    if let Some(path) = a.out.out_rule.as_ref().or(cfg.output.rule.as_ref()) {
        write_file(path, &q.rule.to_text())?;
    }
    emit(a.out.out_json.as_ref().or(cfg.output.json.as_ref()), &(q.to_json() + "\n"))?;
    Ok(Outcome::from_flag(q.flagged || !q.bound_holds()))
}

fn cmd_convergence(cli: &Cli, a: &ConvergenceArgs) -> Result<Outcome> {
    let mut cfg = load_config(cli, &a.space, None)?;
    let p = &mut cfg.params;
    if let Some(v) = &a.n {
        p.n = v.clone();
    }
    if let Some(v) = &a.big_n {
        p.big_n = v.clone();
    }
    if let Some(v) = &a.dims {
        p.dims = v.clone();
    }
    if let Some(t) = a.trials {
        p.trials = t;
    }
    if let Some(t) = a.tau {
        p.tau = t;
    }
    let cfg = validated(cfg)?;
    let table = run_convergence_study(&cfg)?;
    for r in table.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("warning: row n = {} failed: {}", r.n, r.error.as_deref().unwrap_or(""));
    }
    let csv_path = a.csv.as_ref().or(cfg.output.csv.as_ref());
    emit(csv_path, &table.to_csv())?;
    let mut flagged = table.any_flagged();
    if !cfg.params.dims.is_empty() {
        let n = *cfg
            .params
            .n
            .first()
            .ok_or_else(|| anyhow!(ConfigError("the dimension table needs a lattice size".into())))?;
        let rows = dimension_experiment(&cfg.space, n, &cfg.params.dims);
        flagged |= rows.iter().any(|r| r.error.is_some());
        emit(a.dims_csv.as_ref(), &rows_to_csv(&rows))?;
    }
    match a.out_json.as_ref().or(cfg.output.json.as_ref()) {
        Some(path) => write_file(path, &(table.summary_json() + "\n"))?,
        None if csv_path.is_some() => println!("{}", table.summary_json()),
        None => eprintln!("{}", table.summary_json()),
    }
    Ok(Outcome::from_flag(flagged))
}

fn read_integrand(path: &Path) -> Result<IntegrandSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn cmd_integrate(cli: &Cli, a: &IntegrateArgs) -> Result<Outcome> {
    let rule = read_rule(&a.rule)?;
    let cfg = validated(load_config(cli, &a.space, rule.d())?)?;
    let spec = cfg.kernel_spec()?;
    let ispec = match (&a.integrand, a.constant) {
        (Some(path), _) => read_integrand(path)?,
        (None, Some(value)) => IntegrandSpec::Constant { value },
        (None, None) => bail!(ConfigError("pass --integrand or --constant".into())),
    };
    let f = Integrand::build(&ispec, &cfg.space, &cfg.structure)?;
    let report = integrate(&rule.to_cubature(), &f, &spec)?;
    if !report.invariant {
        eprintln!("warning: the integrand is not invariant under the configured permutations; the bound does not apply");
    }
    emit(a.out_json.as_ref().or(cfg.output.json.as_ref()), &pretty(&report))?;
    Ok(Outcome::from_flag(report.invariant && !report.within_bound))
}
