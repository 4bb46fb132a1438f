use clap::{Args, Parser, Subcommand};
use racert_cli::export::{self, ExportArgs};
use racert_cli::run::{self, Common, EXIT_ERROR, EXIT_OK};
use racert_cli::{config, registry};
use std::path::PathBuf;
use std::process::ExitCode;

/// Neural reach-avoid certificates for controlled SDEs.
#[derive(Parser)]
#[command(name = "racert", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Bundled config name or path to a TOML file.
    #[arg(long, short)]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: runs/<config name>).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Dotted KEY=VALUE config override, repeatable.
    #[arg(long = "override", short = 'O', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn common(self) -> anyhow::Result<Common> {
        let out = match self.out {
            Some(o) => o,
            None => {
                let (text, _) = config::read_source(&self.config)?;
                let name = config::parse(&text, &self.overrides)?.name;
                PathBuf::from("runs").join(name)
            }
        };
        Ok(Common {
            config: self.config,
            seed: self.seed,
            out,
            overrides: self.overrides,
        })
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a certificate for a fixed closed loop by bound training.
    Verify(RunArgs),
    /// Train a controller and certificate jointly.
    Synthesize(RunArgs),
    /// Fit the certificate's last layer by a scenario LP with a PAC bound.
    Scenario(RunArgs),
    /// Estimate the reach-avoid probability by Monte Carlo.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Controller checkpoint replacing the configured controller.
        #[arg(long)]
        controller: Option<PathBuf>,
    },
    /// Write CSV views of a run directory.
    Export {
        #[arg(long)]
        from: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        /// Two 1-based state axes for the certificate grid.
        #[arg(long, num_args = 2, default_values_t = [1, 2])]
        axes: Vec<usize>,
    },
    /// List the bundled configs.
    List,
    /// Print the normalized form of a config.
    Show(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    let q = cli.quiet;
    let res = match cli.cmd {
        Cmd::Verify(a) => a.common().and_then(|c| run::verify(&c, q)),
        Cmd::Synthesize(a) => a.common().and_then(|c| run::synthesize(&c, q)),
        Cmd::Scenario(a) => a.common().and_then(|c| run::scenario(&c, q)),
        Cmd::Simulate { run: a, controller } => a.common().and_then(|c| run::simulate(&c, controller.as_deref(), q)),
        Cmd::Export {
            from,
            out,
            resolution,
            axes,
        } => export::export(&ExportArgs {
            from,
            out,
            resolution,
            axes: (axes[0], axes.get(1).copied().unwrap_or(axes[0])),
        })
        .map(|files| {
            for f in files {
                println!("{f}");
            }
            EXIT_OK
        }),
        Cmd::List => {
            for n in registry::bundled_names() {
                println!("{n}");
            }
            Ok(EXIT_OK)
        }
        Cmd::Show(a) => a.common().and_then(|c| {
            let p = c.load()?;
            print!("{}", p.config.dump()?);
            Ok(EXIT_OK)
        }),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
