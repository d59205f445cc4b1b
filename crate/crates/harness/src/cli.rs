//! `promptsim` command-line interface. Exit codes: 0 success, 1 domain
//! error, 2 usage error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use promptsim_core::instance_gen::{generate_synthetic, make_counterexample, Counterexample, SyntheticConfig};
use promptsim_core::planner::{
    build_shortest_path_ip, exact_shortest_path, greedy_bound_factor, greedy_path, is_reachable, model_from_instance,
    GainSpec, PathIpOptions, DEFAULT_MAX_NODES,
};
use promptsim_core::policy::{optimal_target, run_deterministic_policy, run_general_policy, PolicyConfig};
use promptsim_core::trajectory::{policy_records, write_jsonl, StageRecord};
use promptsim_core::{natural_matching, step, EcosystemInstance, EcosystemState, StepOptions};
use promptsim_joint::{build_joint_mip, linearize, lp_file_name, validate_trajectory, ExperimentTrajectory, JointMipSpec, PolicyClass};
use promptsim_mip::{enumerate_binaries_solve, read_lp_file, solve, write_lp_file, write_solution, Backend, Status, DEFAULT_MAX_BINARIES};
use serde_json::json;

use crate::experiment::{make_backend, run_experiment, solve_policies, write_reports, BackendKind, ExperimentConfig};
use crate::metrics::{compute_metrics, PerPolicy};

#[derive(Debug, Parser)]
#[command(name = "promptsim", version, about = "Recommender-ecosystem prompting simulator and planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ClassArg {
    Prompting,
    NoPromptAdaptive,
    Stationary,
}

impl From<ClassArg> for PolicyClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Prompting => PolicyClass::Prompting,
            ClassArg::NoPromptAdaptive => PolicyClass::NoPromptAdaptive,
            ClassArg::Stationary => PolicyClass::Stationary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimPolicy {
    /// Every provider best-responds under the natural matching.
    None,
    /// Two-phase policy at full trust with expected audiences.
    Deterministic,
    /// Two-phase policy with sampled matchings.
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlanMethod {
    Greedy,
    Exact,
    Ip,
}

#[derive(Debug, clap::Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "oracle")]
    pub backend: BackendKind,
    /// External solver command with `{lp}` and `{sol}` placeholders.
    #[arg(long)]
    pub solver_cmd: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_BINARIES)]
    pub max_binaries: usize,
}

impl SolverArgs {
    fn backend(&self) -> Result<Backend> {
        Ok(make_backend(self.backend, self.solver_cmd.as_deref(), self.max_binaries)?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an instance from a synthetic config or a named counterexample.
    Gen {
        #[arg(long, conflicts_with = "counterexample", required_unless_present = "counterexample")]
        config: Option<PathBuf>,
        #[arg(long)]
        counterexample: Option<String>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the unprompted dynamics or a single-provider prompting policy.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "none")]
        policy: SimPolicy,
        #[arg(long, default_value_t = 0)]
        provider: usize,
        /// Goal point; defaults to the welfare-maximizing point for the provider.
        #[arg(long)]
        target: Option<usize>,
        /// Stages for the unprompted dynamics.
        #[arg(long, default_value_t = 10)]
        stages: usize,
        /// Policy parameters (JSON) for the general policy.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stage records (JSON lines); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shortest promptable content path for one provider.
    Plan {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        provider: usize,
        #[arg(long)]
        target: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        g0: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, value_enum, default_value = "greedy")]
        method: PlanMethod,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the linearized joint program as an LP file.
    EmitLp {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long, value_enum, default_value = "prompting")]
        class: ClassArg,
        /// Instance label in the file name; defaults to the instance file stem.
        #[arg(long)]
        name: Option<String>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve the joint program and print the objective.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long, value_enum, default_value = "prompting")]
        class: ClassArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Decoded trajectory (JSON lines).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics for an instance, from trajectory files or by solving all three classes.
    Metrics {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, required_unless_present = "prompting")]
        horizon: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, requires_all = ["no_prompt", "stationary"])]
        prompting: Option<PathBuf>,
        #[arg(long)]
        no_prompt: Option<PathBuf>,
        #[arg(long)]
        stationary: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-seed experiment from a JSON config; writes CSV reports.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Reference external solver: solve an LP file with the built-in oracle and
    /// write a name-value solution file.
    LpSolve {
        lp: PathBuf,
        sol: PathBuf,
        #[arg(long, default_value_t = 32)]
        max_binaries: usize,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn write_records(out: Option<&Path>, records: &[StageRecord]) -> Result<()> {
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            write_jsonl(records, &mut w)?;
            Ok(w.flush()?)
        }
        None => Ok(write_jsonl(records, io::stdout().lock())?),
    }
}

fn load_instance(path: &Path) -> Result<EcosystemInstance> {
    let inst = EcosystemInstance::load(path).with_context(|| format!("loading instance {}", path.display()))?;
    inst.validate()?;
    Ok(inst)
}

fn read_trajectory(path: &Path, class: PolicyClass) -> Result<ExperimentTrajectory> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(ExperimentTrajectory::read_jsonl(BufReader::new(file), class)?)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { config, counterexample, seed, out } => {
            let inst = match (config, counterexample) {
                (_, Some(name)) => make_counterexample(name.parse::<Counterexample>()?)?,
                (Some(path), None) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    let mut cfg: SyntheticConfig = serde_json::from_str(&text)?;
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    generate_synthetic(&cfg)?
                }
                (None, None) => bail!("either --config or --counterexample is required"),
            };
            write_output(out.as_deref(), &(inst.to_json()? + "\n"))
        }
        Command::Simulate { instance, policy, provider, target, stages, config, seed, out } => {
            let inst = load_instance(&instance)?;
            let state = EcosystemState::initial(&inst)?;
            let records = match policy {
                SimPolicy::None => {
                    let mut records = Vec::with_capacity(stages);
                    let mut current = state;
                    let prompts = vec![None; inst.num_providers()];
                    for _ in 0..stages {
                        let mu = natural_matching(&current.locations, &inst)?;
                        let (_, next, outcome) = step(&current, &mu, &prompts, &inst, &StepOptions::default())?;
                        records.push(StageRecord::new(&current, &mu, &prompts, &outcome));
                        current = next;
                    }
                    records
                }
                SimPolicy::Deterministic | SimPolicy::General => {
                    if provider >= inst.num_providers() {
                        bail!("provider {provider} out of range ({} providers)", inst.num_providers());
                    }
                    let j_star = match target {
                        Some(j) => j,
                        None => optimal_target(&inst, provider, &state.locations)?,
                    };
                    let mu = natural_matching(&state.locations, &inst)?;
                    let run = if policy == SimPolicy::Deterministic {
                        run_deterministic_policy(&inst, provider, &state, &mu, j_star)?
                    } else {
                        let cfg = match config {
                            Some(p) => serde_json::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                            None => PolicyConfig::new(0.5, 0.05, 0.1)?,
                        };
                        run_general_policy(&inst, provider, &state, &mu, j_star, &cfg, seed)?
                    };
                    eprintln!(
                        "provider {provider}: target {j_star}, final location {}, {} rounds",
                        run.final_location(provider),
                        run.rounds
                    );
                    policy_records(&run, provider)
                }
            };
            write_records(out.as_deref(), &records)
        }
        Command::Plan { instance, provider, target, g0, rho, method, out } => {
            let inst = load_instance(&instance)?;
            if provider >= inst.num_providers() {
                bail!("provider {provider} out of range ({} providers)", inst.num_providers());
            }
            let model = model_from_instance(&inst, provider, GainSpec { g0, rho })?;
            let start = EcosystemState::initial(&inst)?;
            let j_star = match target {
                Some(j) => j,
                None => optimal_target(&inst, provider, &start.locations)?,
            };
            let (reachable, level) = is_reachable(&model, j_star);
            let report = if !reachable {
                json!({ "target": j_star, "reachable": false, "initial_set": model.initial_set })
            } else {
                let path = match method {
                    PlanMethod::Greedy => greedy_path(&model, j_star)?,
                    PlanMethod::Exact => exact_shortest_path(&model, j_star, DEFAULT_MAX_NODES)?,
                    PlanMethod::Ip => {
                        let ip = build_shortest_path_ip(&model, j_star, PathIpOptions::default())?;
                        let sol = enumerate_binaries_solve(&ip, 64)?;
                        if sol.status != Status::Optimal {
                            bail!("path program returned {:?}", sol.status);
                        }
                        // The program only certifies the length; the path itself
                        // comes from the exact search.
                        let path = exact_shortest_path(&model, j_star, DEFAULT_MAX_NODES)?;
                        if (sol.objective - path.len() as f64).abs() > 1e-6 {
                            bail!("program length {} disagrees with search length {}", sol.objective, path.len());
                        }
                        path
                    }
                };
                json!({
                    "target": j_star,
                    "reachable": true,
                    "level": level,
                    "initial_set": model.initial_set,
                    "path": path,
                    "length": path.len(),
                    "bound_factor": greedy_bound_factor(&model, &path, j_star),
                })
            };
            write_output(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
        }
        Command::EmitLp { instance, horizon, class, name, out } => {
            let inst = load_instance(&instance)?;
            let label = name.unwrap_or_else(|| instance.file_stem().map_or("instance".into(), |s| s.to_string_lossy().into_owned()));
            let spec = JointMipSpec::new(inst, horizon, class.into());
            let model = linearize(&build_joint_mip(&spec)?.model)?;
            fs::create_dir_all(&out)?;
            let path = out.join(lp_file_name(&label, spec.policy_class, horizon));
            write_lp_file(&model, &path)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Solve { instance, horizon, class, solver, out } => {
            let inst = load_instance(&instance)?;
            let spec = JointMipSpec::new(inst.clone(), horizon, class.into());
            let sol = promptsim_joint::solve_joint(&spec, &solver.backend()?)?;
            let violations = validate_trajectory(&sol.trajectory, &inst);
            if let Some(path) = out.as_deref() {
                write_records(Some(path), &sol.trajectory.stages)?;
            }
            let summary = json!({
                "policy_class": spec.policy_class,
                "horizon": horizon,
                "objective": sol.solution.objective,
                "stage_welfare": sol.trajectory.stage_welfare(),
                "violations": violations,
            });
            write_output(None, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
            if !violations.is_empty() {
                bail!("{} replay violations", violations.len());
            }
            Ok(())
        }
        Command::Metrics { instance, horizon, solver, prompting, no_prompt, stationary, out } => {
            let inst = load_instance(&instance)?;
            let trajectories = match (prompting, no_prompt, stationary) {
                (Some(p), Some(n), Some(s)) => PerPolicy {
                    prompting: read_trajectory(&p, PolicyClass::Prompting)?,
                    no_prompt_adaptive: read_trajectory(&n, PolicyClass::NoPromptAdaptive)?,
                    stationary: read_trajectory(&s, PolicyClass::Stationary)?,
                },
                _ => {
                    let horizon = horizon.context("--horizon is required without trajectory files")?;
                    solve_policies(&inst, horizon, &solver.backend()?)?.map(|s| s.trajectory.clone())
                }
            };
            let report = compute_metrics(&inst, &trajectories)?;
            write_output(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
        }
        Command::Experiment { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let results = run_experiment(&cfg)?;
            write_reports(&results, cfg.histogram_bins, &out)?;
            let failed = results.iter().filter(|r| r.metrics.is_none()).count();
            println!("{} instances, {} failed, reports in {}", results.len(), failed, out.display());
            Ok(())
        }
        Command::LpSolve { lp, sol, max_binaries } => {
            let model = read_lp_file(&lp).with_context(|| format!("reading {}", lp.display()))?;
            let solution = solve(&model, &Backend::Oracle { max_binaries })?;
            fs::write(&sol, write_solution(&model, &solution)).with_context(|| format!("writing {}", sol.display()))?;
            Ok(())
        }
    }
}
