use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nbm::cli::{cmd_convergence, cmd_eval, cmd_solve, parse_levels, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "nbm", version, about = "Neural surrogates for 3D elliptic interface problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one problem and write the run directory.
    Solve(RunArgs),
    /// Train at several resolutions and tabulate observed orders.
    Convergence {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated grid resolutions.
        #[arg(long, default_value = "8,16,32")]
        levels: String,
    },
    /// Evaluate a checkpoint against the exact solution.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// bulk, sphere, star or lpbe.
    #[arg(long)]
    problem: Option<String>,
    /// Configuration file of key = value lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    resolution: Option<usize>,
    /// grid or cloud.
    #[arg(long)]
    sampling: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// regression, neural or pinn.
    #[arg(long)]
    approach: Option<String>,
    /// slow or fast.
    #[arg(long)]
    bias: Option<String>,
    /// off, whole-fast or fast-whole-slow.
    #[arg(long)]
    switching: Option<String>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    multires_levels: Option<usize>,
    #[arg(long)]
    levelset_file: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_resolution: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra key=value configuration entries.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match (&self.config, &self.problem) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                RunConfig::parse(&text)?
            }
            (None, Some(p)) => RunConfig::for_problem(p)?,
            (None, None) => return Err(CliError::Usage("either --problem or --config is required".into())),
        };
        if let (Some(_), Some(p)) = (&self.config, &self.problem) {
            cfg.set("problem", p)?;
        }
        let opt = |v: &Option<String>| v.clone();
        let pairs: [(&str, Option<String>); 13] = [
            ("resolution", self.resolution.map(|v| v.to_string())),
            ("sampling", opt(&self.sampling)),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("approach", opt(&self.approach)),
            ("bias", opt(&self.bias)),
            ("switching", opt(&self.switching)),
            ("tau", self.tau.map(|v| v.to_string())),
            ("multires_levels", self.multires_levels.map(|v| v.to_string())),
            ("levelset_file", self.levelset_file.as_ref().map(|p| p.display().to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("eval_resolution", self.eval_resolution.map(|v| v.to_string())),
            ("output_dir", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.config()?;
            let out = cmd_solve(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&out.report).map_err(|e| CliError::Io(e.to_string()))?);
        }
        Command::Convergence { run, levels } => {
            let cfg = run.config()?;
            print!("{}", cmd_convergence(&cfg, &parse_levels(&levels)?)?);
        }
        Command::Eval { run, checkpoint } => {
            let cfg = run.config()?;
            let report = cmd_eval(&checkpoint, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
