use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use wflab_core::bounds::DirectionSet;
use wflab_core::model::DominatingHamiltonian;
use wflab_core::simulate::trajectories_csv;
use wflab_core::{
    build_minorant, chernoff_exit_bound, check_hypotheses, estimate_semigroup, l1_rate, ldp_report, martingale_check,
    minimize_action, rate_to_set, sample_tilted, try_legendre, DiagnosticsReport, Error, JumpKernel, LdpOptions,
    PolygonalPath, RateProfile, SimConfig, TiltConfig,
};

use crate::config::{
    ActionBlock, BoundsBlock, CheckBlock, Command, ConfigError, ConjugateBlock, ExperimentConfig, SimulateBlock,
    VerifyBlock,
};

/// A named CSV table.
pub struct Table {
    pub file: &'static str,
    pub body: String,
}

/// Everything a subcommand produced; also carried by failures that still
/// have results to report.
#[derive(Default)]
pub struct Outcome {
    pub result: Value,
    pub rows: Vec<Value>,
    pub tables: Vec<Table>,
}

pub struct Failure {
    pub exit: i32,
    pub code: String,
    pub message: String,
    pub partial: Outcome,
}

impl Failure {
    pub fn config(e: ConfigError) -> Self {
        Failure { exit: 2, code: "invalid_config".into(), message: e.0, partial: Outcome::default() }
    }

    fn with(mut self, partial: Outcome) -> Self {
        self.partial = partial;
        self
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match &e {
            Error::InvalidKernel(_) | Error::InvalidArgument(_) => 2,
            Error::HypothesisViolation(_) => 3,
            Error::InsufficientSamples { .. } => 4,
            _ => 1,
        };
        Failure { exit, code: e.code().into(), message: e.to_string(), partial: Outcome::default() }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

/// Shortest round-trip form, with an exponent for tiny and huge values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn coord_header(prefix: &str, d: usize) -> String {
    (1..=d).map(|k| format!("{prefix}_{k}")).collect::<Vec<_>>().join(",")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",")
}

pub fn run(cmd: Command, cfg: &ExperimentConfig, kernel: &JumpKernel) -> Result<Outcome, Failure> {
    let missing = || Failure::config(ConfigError(format!("missing `{}` block", cmd.block())));
    match cmd {
        Command::Rate => rate(kernel, cfg.action.as_ref().ok_or_else(missing)?, cfg.seed),
        Command::Simulate => simulate(kernel, cfg.simulate.as_ref().ok_or_else(missing)?, cfg.seed),
        Command::VerifyLdp => verify(kernel, cfg.verify.as_ref().ok_or_else(missing)?, cfg),
        Command::CheckHypotheses => check(kernel, cfg.check.as_ref().ok_or_else(missing)?),
        Command::Bounds => bounds(kernel, cfg.bounds.as_ref().ok_or_else(missing)?),
        Command::Minorant => minorant(kernel, cfg.conjugate.as_ref().ok_or_else(missing)?),
    }
}

fn path_table(path: &PolygonalPath) -> (Table, Vec<Value>) {
    let dt = path.dt();
    let rows = path.knots.iter().enumerate().map(|(k, x)| json!({ "t": k as f64 * dt, "x": x })).collect();
    (Table { file: "path.csv", body: path.to_csv() }, rows)
}

fn rate(kernel: &JumpKernel, block: &ActionBlock, seed: u64) -> Result<Outcome, Failure> {
    let opts = block.options(seed);
    let (result, path) = match (&block.y, &block.target) {
        (Some(y), None) => {
            let r = minimize_action(kernel, &block.x, y, &opts.action)?;
            (to_value(&r), r.path)
        }
        (None, Some(target)) => {
            let r = rate_to_set(kernel, &block.x, target, &opts)?;
            (to_value(&r), r.path)
        }
        _ => return Err(Failure::config(ConfigError("action block needs exactly one of `y` and `target`".into()))),
    };
    let (table, rows) = path_table(&path);
    Ok(Outcome { result, rows, tables: vec![table] })
}

fn simulate(kernel: &JumpKernel, block: &SimulateBlock, seed: u64) -> Result<Outcome, Failure> {
    let cfg = SimConfig {
        h: block.h,
        horizon: block.horizon,
        x0: block.x0.clone(),
        n_paths: block.paths,
        seed,
        max_events: block.max_events,
        substep_factor: block.substep_factor,
    };
    let tilt = block.tilt.as_ref().map(|c| TiltConfig::new(c.clone(), block.x0.clone()));
    let (est, estimator) = match (&tilt, block.martingale) {
        (Some(t), true) => (martingale_check(kernel, &cfg, t)?, "martingale"),
        (None, true) => {
            return Err(Failure::config(ConfigError("`martingale` needs a `tilt` covector".into())));
        }
        (Some(t), false) => (sample_tilted(kernel, &cfg, t, &block.observable)?, "tilted"),
        (None, false) => (estimate_semigroup(kernel, &cfg, &block.observable)?, "plain"),
    };
    let mut tables = vec![Table {
        file: "estimate.csv",
        body: format!(
            "estimator,h,horizon,mean,stderr,n,aborted,seed\n{estimator},{:?},{:?},{:?},{:?},{},{},{}\n",
            cfg.h, cfg.horizon, est.mean, est.stderr, est.n, est.aborted, est.seed
        ),
    }];
    if block.dump_paths > 0 {
        tables.push(Table { file: "trajectories.csv", body: trajectories_csv(kernel, &cfg, block.dump_paths)? });
    }
    let row = json!({ "estimator": estimator, "estimate": to_value(&est) });
    Ok(Outcome { result: row.clone(), rows: vec![row], tables })
}

fn verify(kernel: &JumpKernel, block: &VerifyBlock, cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let mut rate = block.rate.clone();
    rate.action.seed = cfg.seed;
    let opts = LdpOptions {
        paths: block.paths,
        seed: cfg.seed,
        tilt_policy: block.tilt_policy,
        tolerance: block.tolerance,
        max_relative_stderr: block.max_relative_stderr,
        rate,
        model_id: cfg.name.clone().unwrap_or_else(|| "model".into()),
    };
    let report = ldp_report(kernel, &block.x0, &block.target, &block.h_list, &opts)?;
    let mut result = to_value(&report);
    result["approaches_bound_monotonically"] = json!(report.approaches_bound_monotonically());
    let out = Outcome {
        result,
        rows: report.rows.iter().map(to_value).collect(),
        tables: vec![Table { file: "ldp.csv", body: report.to_csv() }],
    };
    if let Err(e) = report.check_samples() {
        return Err(Failure::from(e).with(out));
    }
    if !report.verdict {
        let message = "h log p_hat exceeds -bound + tolerance for some h".to_string();
        return Err(Failure { exit: 1, code: "bound_violated".into(), message, partial: out });
    }
    Ok(out)
}

fn diagnostics_outcome(report: &DiagnosticsReport) -> Outcome {
    let mut modulus = String::from("delta,value\n");
    for m in &report.modulus {
        let _ = writeln!(modulus, "{:?},{:?}", m.delta, m.value);
    }
    let d = report.rays.first().map_or(0, |r| r.direction.len());
    let mut rays = format!("ray,{},radius,ratio\n", coord_header("direction", d));
    for (i, r) in report.rays.iter().enumerate() {
        for (radius, ratio) in r.radii.iter().zip(&r.ratios) {
            let _ = writeln!(rays, "{i},{},{radius:?},{ratio}", join(&r.direction));
        }
    }
    Outcome {
        result: to_value(report),
        rows: report.violations.iter().map(to_value).collect(),
        tables: vec![Table { file: "modulus.csv", body: modulus }, Table { file: "rays.csv", body: rays }],
    }
}

fn check(kernel: &JumpKernel, block: &CheckBlock) -> Result<Outcome, Failure> {
    let h1 = DominatingHamiltonian::from_kernel(kernel);
    match check_hypotheses(kernel, &h1, block.radius, &block.probe) {
        Ok(report) => Ok(diagnostics_outcome(&report)),
        Err(Error::HypothesisViolation(report)) => {
            let out = diagnostics_outcome(&report);
            Err(Failure::from(Error::HypothesisViolation(report)).with(out))
        }
        Err(e) => Err(e.into()),
    }
}

fn bounds(kernel: &JumpKernel, block: &BoundsBlock) -> Result<Outcome, Failure> {
    let dirs = match &block.directions {
        Some(d) => {
            let set = DirectionSet::new(d.clone())?;
            if (set.radius - block.radius).abs() > 1e-9 * block.radius {
                return Err(Failure::config(ConfigError(format!(
                    "directions have norm {} but radius is {}",
                    set.radius, block.radius
                ))));
            }
            set
        }
        None => DirectionSet::axes(kernel.dim, block.radius),
    };
    let profile = RateProfile::from_kernel(kernel);
    let mut body = String::from("h,t,radius,total\n");
    let mut rows = Vec::new();
    for &h in &block.h_list {
        let b = chernoff_exit_bound(&profile, block.t, h, &dirs)?;
        let _ = writeln!(body, "{h:?},{:?},{:?},{:?}", b.t, dirs.radius, b.total);
        rows.push(to_value(&b));
    }
    let result = json!({ "t": block.t, "radius": dirs.radius, "directions": dirs.directions });
    Ok(Outcome { result, rows, tables: vec![Table { file: "chernoff.csv", body }] })
}

fn minorant(kernel: &JumpKernel, block: &ConjugateBlock) -> Result<Outcome, Failure> {
    let m = build_minorant(kernel, &block.x, block.radius, block.chi)?;
    let d = kernel.dim;
    let mut supports =
        format!("index,{},{},intercept\n", coord_header("alpha", d), coord_header("slope", d));
    for (i, ((a, s), c)) in m.support_points.iter().zip(&m.slopes).zip(&m.intercepts).enumerate() {
        let _ = writeln!(supports, "{i},{},{},{c:?}", join(a), join(s));
    }

    let profile = RateProfile::from_kernel(kernel);
    let mut evaluation = format!("{},rate,minorant,gap,l1\n", coord_header("alpha", d));
    let mut rows = Vec::with_capacity(block.alphas.len());
    for a in &block.alphas {
        if a.len() != d {
            return Err(Failure::config(ConfigError(format!("alpha {a:?} does not have dimension {d}"))));
        }
        let l = try_legendre(kernel, &block.x, a)?.map(|r| r.value);
        let lower = m.eval(a);
        let gap = l.map(|v| v - lower);
        let l1 = l1_rate(&profile, a);
        let _ = writeln!(evaluation, "{},{},{lower:?},{},{l1}", join(a), fmt_opt(l), fmt_opt(gap));
        rows.push(json!({ "alpha": a, "rate": l, "minorant": lower, "gap": gap, "l1": l1 }));
    }
    Ok(Outcome {
        result: to_value(&m),
        rows,
        tables: vec![Table { file: "supports.csv", body: supports }, Table { file: "evaluation.csv", body: evaluation }],
    })
}
