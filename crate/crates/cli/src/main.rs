//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when a check or condition report fails,
//! 1 on errors.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use effstab::diophantine::{default_search_cap, dirichlet_approx, period_of_fractions, ResonanceFrame};
use effstab::dynamics::{integrate, IntegratorConfig};
use effstab::harness::{builtin_system, initial_condition, row_seed, run_scaling, ExperimentConfig, Family, SystemSpec};
use effstab::morse::{check_morse, MorseGrid, MorseParams};
use effstab::normal_form::{composed_normal_form, NormalFormConfig};
use effstab::restrain::{check_conditions, exponents, realized_mu, try_restrain, ConditionParams, RestrainOutcome};
use effstab::series::{io as series_io, HamiltonianSystem, PolynomialHamiltonian};
use effstab::Regularity;

#[derive(Parser)]
#[command(name = "effstab", version, about = "Effective stability workbench for near-integrable Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simultaneous Dirichlet approximation of a frequency vector.
    Approx {
        /// Comma-separated components.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        v: Vec<f64>,
        #[arg(long = "Q")]
        q: f64,
        /// Candidate budget; defaults to a size based on Q and n.
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Composed resonant normal form along a frame of periodic vectors.
    Normalform {
        #[command(flatten)]
        system: SystemArgs,
        /// Frame vectors as `p/q` lists, vectors separated by `;`,
        /// e.g. `1/1,0/1;0/1,1/2`.
        #[arg(long)]
        frame: String,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 4)]
        order: u32,
        /// Write the resonant part to this series file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Diophantine Morse check of the integrable part.
    MorseCheck {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 2.0)]
        tau: f64,
        #[arg(long = "L", default_value_t = 3)]
        l_max: u32,
        #[arg(long, default_value_t = 33)]
        grid: usize,
        /// Radius of the sampled ball; defaults to the domain radius.
        #[arg(long)]
        ball: Option<f64>,
        /// Write failing subspaces and points as CSV.
        #[arg(long)]
        failures_csv: Option<PathBuf>,
    },
    /// Integrates one trajectory and writes it as CSV.
    Drift {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tries to certify one trajectory as restrained.
    Restrain {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Experiment config supplying the multipliers.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Certificate output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scaling study over an epsilon ladder.
    Scaling {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Exact exponents a_j, a and b.
    Exponents {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        tau: f64,
    },
    /// Evaluates the eleven parameter conditions.
    Conditions {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        tau: f64,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long)]
        eps: f64,
        /// Defaults to `ε^b`.
        #[arg(long)]
        mu0: Option<f64>,
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Periods T_1..T_n.
        #[arg(long, value_delimiter = ',')]
        periods: Vec<f64>,
        /// Indices L_1..L_n; default to the periods.
        #[arg(long = "L", value_delimiter = ',')]
        l: Vec<f64>,
        /// Radii μ_1..μ_n; default to `T_j^{-1} ε^{a_j}`.
        #[arg(long, value_delimiter = ',')]
        mus: Vec<f64>,
        /// One multiplier for all conditions, or eleven.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        mult: Vec<f64>,
    },
}

#[derive(Args)]
struct SystemArgs {
    /// Builtin family: quasi-convex, linear, steep-toy, pendulum, integrable.
    #[arg(long)]
    system: Option<String>,
    /// Integrable part as a series file.
    #[arg(long)]
    h: Option<PathBuf>,
    /// Perturbation as a series file (taken at its stored size).
    #[arg(long)]
    f: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// `gevrey:<alpha>:<L>` or `ck:<k>:<k*>`.
    #[arg(long, default_value = "gevrey:1:1")]
    regularity: String,
}

impl SystemArgs {
    fn regularity(&self) -> Result<Regularity> {
        Ok(Regularity::parse_tag(&self.regularity)?)
    }

    fn build(&self) -> Result<HamiltonianSystem> {
        let reg = self.regularity()?;
        match (&self.system, &self.h) {
            (Some(name), None) => Ok(builtin_system(name.parse::<Family>()?, self.n, self.radius, self.eps, reg)?),
            (None, Some(h)) => {
                let (h, _) = series_io::read(h).with_context(|| format!("reading {}", h.display()))?;
                let f = match &self.f {
                    Some(p) => series_io::read(p).with_context(|| format!("reading {}", p.display()))?.0,
                    None => effstab::FourierTaylorSeries::zero(h.domain(), 0, 0),
                };
                Ok(HamiltonianSystem::new(h, f, self.eps, reg)?)
            }
            _ => bail!("give exactly one of --system and --h"),
        }
    }

    fn spec(&self) -> Result<SystemSpec> {
        match (&self.system, &self.h, &self.f) {
            (Some(name), None, _) => Ok(SystemSpec::Builtin(name.parse()?)),
            (None, Some(h), Some(f)) => Ok(SystemSpec::Files { h: h.clone(), f: f.clone() }),
            _ => bail!("give --system, or both --h and --f"),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-2)]
    step: f64,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Final time; defaults to the capped time budget.
    #[arg(long)]
    t_max: Option<f64>,
}

enum Status {
    Ok,
    ConditionFailed,
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_frame(n: usize, text: &str) -> Result<ResonanceFrame> {
    let mut vectors = Vec::new();
    for part in text.split(';') {
        let fracs = part
            .split(',')
            .map(|f| {
                let (p, q) = f.trim().split_once('/').unwrap_or((f.trim(), "1"));
                Ok((p.trim().parse::<i64>()?, q.trim().parse::<i64>()?))
            })
            .collect::<Result<Vec<_>>>()
            .with_context(|| format!("bad frame vector `{part}`"))?;
        vectors.push(period_of_fractions(&fracs)?);
    }
    Ok(ResonanceFrame::new(n, vectors)?)
}

fn experiment(system: &SystemArgs, run: &RunArgs, config: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.system = system.spec()?;
    cfg.n = system.n;
    cfg.radius = system.radius;
    cfg.regularity = system.regularity()?;
    cfg.epsilons = vec![system.eps];
    cfg.seed = run.seed;
    cfg.integrator = IntegratorConfig { sample_stride: run.stride, ..IntegratorConfig::with_step(run.step) };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Exponents { n, tau } => {
            let e = exponents(n, tau)?;
            println!("a = b = {} ~ {:.10}", e.a, e.a_f64());
            for (j, a) in e.a_list.iter().enumerate() {
                println!("a_{} = {} ~ {:.10}", j + 1, a, e.a_j(j + 1));
            }
            Ok(Status::Ok)
        }
        Command::Approx { v, q, cap } => {
            let r = dirichlet_approx(&v, q, cap.unwrap_or_else(|| default_search_cap(q, v.len())))?;
            println!("omega = ({})", r.vector.omega_strings().join(","));
            println!("T = {}", r.vector.period());
            println!("error = {:e} (bound {:e})", r.error, r.error_bound);
            println!("period margins: lower {:e}, upper {:e}", r.lower_margin, r.upper_margin);
            Ok(Status::Ok)
        }
        Command::Conditions { n, tau, gamma, eps, mu0, m, periods, l, mus, mult } => {
            let e = exponents(n, tau)?;
            if periods.len() != n {
                bail!("need {n} periods");
            }
            let l_indices = if l.is_empty() { periods.clone() } else { l };
            let mus = if mus.is_empty() {
                periods.iter().enumerate().map(|(j, &t)| realized_mu(1.0, t, eps, e.a_j(j + 1))).collect()
            } else {
                mus
            };
            let multipliers: [f64; 11] = match mult.len() {
                1 => [mult[0]; 11],
                11 => mult.try_into().expect("eleven values"),
                k => bail!("--mult takes 1 or 11 values, got {k}"),
            };
            let report = check_conditions(&ConditionParams {
                n,
                tau,
                gamma,
                epsilon: eps,
                mu0: mu0.unwrap_or_else(|| eps.powf(e.b_f64())),
                m,
                periods,
                l_indices,
                mus,
                multipliers,
            })?;
            println!("{report}");
            Ok(if report.passed { Status::Ok } else { Status::ConditionFailed })
        }
        Command::Normalform { system, frame, m, order, out } => {
            let sys = system.build()?;
            let frame = parse_frame(sys.dim(), &frame)?;
            let omega = frame.vectors().last().expect("nonempty").omega_f64();
            let h = effstab::FourierTaylorSeries::linear(sys.integrable().domain(), &omega).add(sys.perturbation())?;
            let r = composed_normal_form(&h, &frame, &NormalFormConfig::new(m, order)?)?;
            println!("g_norm {:e}", r.norm_certificates.g_norm);
            println!("remainder_norm {:e}", r.norm_certificates.remainder_norm);
            println!("displacement_norm {:e}", r.norm_certificates.displacement_norm);
            println!("dropped_mass {:e}", r.dropped_mass);
            println!("symmetry_checked {}", r.symmetry_checked);
            for (i, steps) in r.steps.iter().enumerate() {
                let trace: Vec<String> = steps.iter().map(|s| format!("{:.3e}", s.remainder_norm)).collect();
                println!("vector {} remainder trace {}", i + 1, trace.join(" "));
            }
            let mut ok = true;
            for mg in &r.margins {
                println!("margin {} lhs={:e} rhs={:e} {}", mg.name, mg.lhs, mg.rhs, if mg.holds { "ok" } else { "FAIL" });
                ok &= mg.holds;
            }
            if let Some(p) = out {
                series_io::write(&p, &r.g, Some(sys.regularity()))?;
            }
            Ok(if ok { Status::Ok } else { Status::ConditionFailed })
        }
        Command::MorseCheck { system, gamma, tau, l_max, grid, ball, failures_csv } => {
            let sys = system.build()?;
            let h = PolynomialHamiltonian::new(sys.integrable())?;
            let g = MorseGrid::new(sys.dim(), ball.unwrap_or(system.radius), grid);
            let report = check_morse(&h, MorseParams::new(gamma, tau)?, l_max, &g)?;
            println!("{report}");
            if let Some(p) = failures_csv {
                fs::write(&p, report.failures_csv())?;
            }
            Ok(if report.passed { Status::Ok } else { Status::ConditionFailed })
        }
        Command::Drift { system, run, out } => {
            let cfg = experiment(&system, &run, None)?;
            let sys = system.build()?;
            let seed = row_seed(cfg.seed, system.eps, 0);
            let (angles, actions) = initial_condition(&cfg, seed);
            let t_max = match run.t_max {
                Some(t) => t,
                None => cfg.budget(system.eps)?.0.tau_m,
            };
            let mut traj = integrate(&sys, (&angles, &actions), t_max, &cfg.integrator)?;
            traj.seed = Some(seed);
            let mut buf = Vec::new();
            traj.write_csv(&mut buf)?;
            emit(&out, &String::from_utf8(buf)?)?;
            if traj.energy_alarm {
                eprintln!("warning: relative energy deviation {:e}", traj.max_energy_deviation);
            }
            Ok(Status::Ok)
        }
        Command::Restrain { system, run, config, out } => {
            let mut cfg = experiment(&system, &run, config.as_ref())?;
            cfg.restrain = true;
            let eps = system.eps;
            let sys = system.build()?;
            let seed = row_seed(cfg.seed, eps, 0);
            let (angles, actions) = initial_condition(&cfg, seed);
            let budget = cfg.budget(eps)?.0;
            let t_max = run.t_max.unwrap_or(budget.tau_m).max(budget.tau_m);
            let traj = integrate(&sys, (&angles, &actions), t_max, &cfg.integrator)?;
            match try_restrain(&sys, &traj, cfg.mu0(eps)?, budget, &[], &cfg.restrain_config(eps))? {
                RestrainOutcome::Certified(c) => {
                    emit(&out, &c.to_text())?;
                    Ok(Status::Ok)
                }
                RestrainOutcome::Failed(f) => {
                    emit(&out, &f.partial.to_text())?;
                    eprintln!("failed at step {}: {} ({})", f.step, f.condition, f.detail);
                    Ok(Status::ConditionFailed)
                }
            }
        }
        Command::Scaling { config, output, workers } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            if output.is_some() {
                cfg.output = output;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let res = run_scaling(&cfg)?;
            if cfg.output.is_none() {
                println!("{}", effstab::harness::ScalingRecord::CSV_HEADER);
                for r in &res.records {
                    println!("{}", r.to_csv());
                }
            }
            match &res.fit {
                Some(fit) => eprint!("{fit}"),
                None => eprintln!("fit: not enough non-sentinel rows"),
            }
            let violated = res.records.iter().filter(|r| r.exclusion == "violated").count();
            if violated > 0 {
                eprintln!("{violated} certified rows drifted past (n+1)^2 mu_0");
                return Ok(Status::ConditionFailed);
            }
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ConditionFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
