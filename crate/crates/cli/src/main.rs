use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use storm_harness::renewal_check::renewal_validation;
use storm_harness::{
    render_report, run_plan, validate_dir, ExperimentPlan, HarnessError, ProblemName, RuleName,
};

#[derive(Parser)]
#[command(
    name = "storm",
    version,
    about = "Stochastic trust-region experiments and bound checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment plan and check it against the complexity bound.
    Run(PlanArgs),
    /// Check the renewal-process lemmas by simulation.
    Renewal(RenewalArgs),
    /// Recompute the summary and bound checks from an output directory.
    Validate { dir: PathBuf },
    /// Print the drift constants and bounds implied by a configuration.
    Constants(PlanArgs),
}

#[derive(Args, Default)]
struct PlanArgs {
    /// TOML plan file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    problem: Option<ProblemName>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma_g: Option<f64>,
    #[arg(long)]
    cond: Option<f64>,
    /// Tolerance; repeat for a grid.
    #[arg(long)]
    epsilon: Vec<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    eta2: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    delta_max: Option<f64>,
    #[arg(long)]
    kappa_ef: Option<f64>,
    #[arg(long)]
    kappa_eg: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eps_f: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_enum)]
    rule: Option<RuleName>,
    /// Probability that an oracle query is corrupted.
    #[arg(long)]
    failure_prob: Option<f64>,
    /// Write traces.csv.
    #[arg(long)]
    trace: bool,
    /// Classify accuracy events and check the per-iteration lemmas and the drift.
    #[arg(long)]
    instrument: bool,
    /// Record wall-clock time in runs.csv.
    #[arg(long)]
    timing: bool,
    /// Accept accuracy targets that fail the drift conditions.
    #[arg(long)]
    no_feasibility_check: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

macro_rules! set {
    ($($src:expr => $dst:expr),* $(,)?) => {
        $(if let Some(v) = $src { $dst = v; })*
    };
}

impl PlanArgs {
    fn plan(self) -> Result<ExperimentPlan, HarnessError> {
        let mut plan = match &self.config {
            Some(path) => ExperimentPlan::load(path)?,
            None => ExperimentPlan::default(),
        };
        set! {
            self.problem => plan.problem.name,
            self.dim => plan.problem.dim,
            self.sigma => plan.problem.sigma,
            self.sigma_g => plan.problem.sigma_g,
            self.cond => plan.problem.cond,
            self.reps => plan.run.reps,
            self.seed => plan.run.seed,
            self.gamma => plan.storm.gamma,
            self.eta1 => plan.storm.eta1,
            self.eta2 => plan.storm.eta2,
            self.delta0 => plan.storm.delta0,
            self.delta_max => plan.storm.delta_max,
            self.kappa_ef => plan.storm.kappa_ef,
            self.kappa_eg => plan.storm.kappa_eg,
            self.alpha => plan.oracle.alpha,
            self.beta => plan.oracle.beta,
            self.eps_f => plan.storm.eps_f,
            self.max_iters => plan.storm.max_iters,
            self.rule => plan.oracle.rule,
            self.failure_prob => plan.oracle.failure_prob,
        }
        if !self.epsilon.is_empty() {
            plan.run.epsilon = self.epsilon;
        }
        plan.run.trace |= self.trace;
        plan.run.instrument |= self.instrument;
        plan.run.timing |= self.timing;
        if self.no_feasibility_check {
            plan.run.check_feasibility = false;
        }
        if self.out.is_some() {
            plan.run.out = self.out;
        }
        Ok(plan)
    }
}

#[derive(Args)]
struct RenewalArgs {
    /// Up-step probability; repeat for several walks.
    #[arg(long = "p", default_values_t = [0.6, 0.75, 0.9])]
    p: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    steps: usize,
    /// Replications per synthetic drift configuration; 0 skips the stop-time check.
    #[arg(long, default_value_t = 10_000)]
    stop_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let plan = args.plan()?;
            let out = run_plan(&plan)?;
            print!("{}", render_report(&out.summary, &out.bound, &out.validations));
            if let Some(dir) = &plan.run.out {
                println!("artifacts written to {}", dir.display());
            }
            Ok(out.all_passed())
        }
        Command::Renewal(args) => {
            let report = renewal_validation(&args.p, args.steps, args.stop_reps, args.seed)?;
            print!("{}", report.render());
            Ok(report.all_pass())
        }
        Command::Validate { dir } => {
            let (_, summary, bound, checks) = validate_dir(&dir)?;
            print!("{}", render_report(&summary, &bound, &checks));
            Ok(checks.iter().all(|c| !c.enabled || c.passed))
        }
        Command::Constants(args) => {
            let plan = args.plan()?;
            let (problem, _) = plan.build_problem()?;
            let c = plan.drift_constants(problem.lipschitz)?;
            let pot = plan.potential();
            let (a, b) = (plan.oracle.alpha, plan.oracle.beta);
            println!("problem          {} (L = {})", problem.name, problem.lipschitz);
            println!("nu               {}", pot.nu);
            println!("zeta             {}", c.zeta);
            println!("theta            {:e}", c.theta);
            println!("C1               {}", c.c1);
            println!("C2               {:e}", c.c2);
            println!("C3               {}", c.c3);
            println!("beta_min         {}", c.beta_min);
            println!("ab_threshold     {}", c.ab_threshold);
            println!("alpha_min(beta)  {}", c.alpha_min(b));
            println!("ab ratio         {}", storm_core::DriftConstants::ab_ratio(a, b));
            println!("feasible         {}", c.feasible(a, b));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("storm").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.toml");
        std::fs::write(&path, "problem.dim = 3\nproblem.sigma = 0.5\nrun.reps = 4\n").unwrap();
        let cli = parse(&[
            "run",
            "--config",
            path.to_str().unwrap(),
            "--sigma",
            "0.2",
            "--epsilon",
            "0.5",
            "--epsilon",
            "0.05",
        ]);
        let Command::Run(args) = cli.command else {
            panic!("expected run")
        };
        let plan = args.plan().unwrap();
        assert_eq!(plan.problem.dim, 3);
        assert_eq!(plan.problem.sigma, 0.2);
        assert_eq!(plan.run.reps, 4);
        assert_eq!(plan.run.epsilon, vec![0.5, 0.05]);
    }

    #[test]
    fn exit_status_follows_the_validations() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let ok = run(parse(&[
            "run",
            "--dim",
            "2",
            "--sigma",
            "0",
            "--sigma-g",
            "0",
            "--reps",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert!(ok.unwrap());
        assert!(run(parse(&["validate", out.to_str().unwrap()])).unwrap());
        assert!(run(parse(&[
            "renewal",
            "--p",
            "0.75",
            "--steps",
            "10000",
            "--stop-reps",
            "50"
        ]))
        .unwrap());
    }

    #[test]
    fn configuration_errors_map_to_exit_code_two() {
        let err = run(parse(&["run", "--beta", "0.99"])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = run(parse(&["validate", "/nonexistent/storm-out"])).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
