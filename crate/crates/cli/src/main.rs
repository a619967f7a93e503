use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use skew_euler::boundary::{regime_sweep, write_sweep_csv};
use skew_euler::config::RunConfig;
use skew_euler::mms::{convergence_study, write_convergence_csv, ManufacturedSolution};
use skew_euler::sbp::{Order, SbpOperator1D};
use skew_euler::solver::{Forcing, Scheme};
use skew_euler::state::{GasModel, Topology};
use skew_euler::verify;
use skew_euler::Error;

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "skew-euler", version, about = "Energy-conserving split-form Euler solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every identity suite and print per-suite residuals.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Integrate a configured case and write the energy history and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boundary eigenvalues and condition counts over a normal Mach range.
    Sweep {
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha2: f64,
        #[arg(long = "mn-min", allow_negative_numbers = true)]
        mn_min: f64,
        #[arg(long = "mn-max", allow_negative_numbers = true)]
        mn_max: f64,
        #[arg(long)]
        steps: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manufactured-solution convergence study.
    Converge {
        #[arg(long)]
        config: PathBuf,
        /// Either a level count (grids double from `grid.nx`) or an explicit
        /// comma-separated list such as `32,64,128`.
        #[arg(long)]
        levels: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump quadrature weights and nonzero entries of Q for one operator.
    Operator {
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = TopologyArg::Bounded)]
        topology: TopologyArg,
        #[arg(long, default_value_t = 1.0)]
        length: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    Bounded,
    Periodic,
}

impl From<TopologyArg> for Topology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::Bounded => Topology::Bounded,
            TopologyArg::Periodic => Topology::Periodic,
        }
    }
}

enum Failure {
    Error(Error),
    Verify,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Divergence { .. } | Error::Vacuum { .. } | Error::Cfl { .. } => EXIT_DIVERGED,
        _ => EXIT_INVALID,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify) => ExitCode::from(EXIT_VERIFY),
        Err(Failure::Error(Error::Io(e))) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Verify { seed } => cmd_verify(seed),
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Sweep {
            gamma,
            alpha2,
            mn_min,
            mn_max,
            steps,
            out,
        } => cmd_sweep(gamma, alpha2, mn_min, mn_max, steps, out),
        Command::Converge { config, levels, out } => cmd_converge(&config, &levels, out),
        Command::Operator {
            order,
            n,
            topology,
            length,
        } => cmd_operator(order, n, topology.into(), length),
    }
}

fn cmd_verify(seed: u64) -> Result<(), Failure> {
    let report = verify::run_all(seed)?;
    let stdout = io::stdout();
    report.write_report(stdout.lock())?;
    if let Err(msg) = report.check_manifest() {
        eprintln!("error: {msg}");
        return Err(Failure::Verify);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn cmd_run(path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = RunConfig::from_path(path)?;
    let scheme = Scheme::new(cfg.scheme_config()?)?;
    let grid = *scheme.grid();
    let gas = cfg.gas()?;
    let initial = cfg.initial.build(&grid, &gas, &config_dir(path))?;
    let mms = ManufacturedSolution::standard(gas);
    let forcing: Option<&dyn Forcing> = if cfg.uses_source() { Some(&mms) } else { None };

    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;

    let rec = scheme.run(&initial, forcing)?;
    let mut w = create(&dir.join("energy.csv"))?;
    rec.write_csv(&mut w)?;
    w.flush()?;

    let mut index = create(&dir.join("snapshots.csv"))?;
    writeln!(index, "index,t,file")?;
    for (k, (t, f)) in rec.snapshots.iter().enumerate() {
        let name = format!("snapshot_{k:03}.csv");
        let mut w = create(&dir.join(&name))?;
        f.write_csv(&grid, &mut w)?;
        w.flush()?;
        writeln!(index, "{k},{t},{name}")?;
    }
    index.flush()?;
    if let Some(f) = &rec.final_field {
        let mut w = create(&dir.join("final.csv"))?;
        f.write_csv(&grid, &mut w)?;
        w.flush()?;
    }

    let (first, last) = (rec.samples[0], rec.samples[rec.samples.len() - 1]);
    println!(
        "steps {}  t {}  energy {:.12e} -> {:.12e}  max rate residual {:.3e}",
        rec.steps,
        last.t,
        first.energy,
        last.energy,
        rec.samples.iter().map(|s| s.rate_residual).fold(0.0, f64::max)
    );
    Ok(())
}

fn cmd_sweep(gamma: f64, alpha2: f64, mn_min: f64, mn_max: f64, steps: usize, out: Option<PathBuf>) -> Result<(), Failure> {
    let gas = GasModel::new(gamma, alpha2)?;
    let rows = regime_sweep(&gas, mn_min, mn_max, steps)?;
    match out {
        Some(p) => {
            let mut w = create(&p)?;
            write_sweep_csv(&rows, &mut w)?;
            w.flush()?;
        }
        None => write_sweep_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn parse_levels(arg: &str, base: usize) -> Result<Vec<usize>, Error> {
    let bad = || Error::Config {
        line: None,
        msg: format!("invalid --levels value {arg:?}"),
    };
    let levels: Vec<usize> = if arg.contains(',') {
        arg.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    } else {
        let count: u32 = arg.trim().parse().map_err(|_| bad())?;
        (0..count).map(|k| base << k).collect()
    };
    if levels.len() < 3 {
        return Err(Error::Config {
            line: None,
            msg: "a convergence study needs at least three levels".into(),
        });
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config {
            line: None,
            msg: "levels must increase".into(),
        });
    }
    Ok(levels)
}

fn cmd_converge(path: &Path, levels: &str, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = RunConfig::from_path(path)?;
    let levels = parse_levels(levels, cfg.grid.nx)?;
    let scheme_cfg = cfg.scheme_config()?;
    let mms = ManufacturedSolution::standard(scheme_cfg.gas);
    let table = convergence_study(&scheme_cfg, &mms, &levels)?;
    write_convergence_csv(&table, io::stdout().lock())?;
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir)?;
    let mut w = create(&dir.join("convergence.csv"))?;
    write_convergence_csv(&table, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_operator(order: usize, n: usize, topology: Topology, length: f64) -> Result<(), Failure> {
    let order = Order::try_from(order)?;
    if !(length > 0.0) {
        return Err(Error::Domain {
            quantity: "length",
            value: length,
        }
        .into());
    }
    let h = match topology {
        Topology::Bounded if n > 1 => length / (n - 1) as f64,
        _ => length / n.max(1) as f64,
    };
    let op = SbpOperator1D::build(order, n, h, topology)?;
    op.write_csv(io::stdout().lock())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_parsing() {
        assert_eq!(parse_levels("3", 16).unwrap(), vec![16, 32, 64]);
        assert_eq!(parse_levels("32,64,128", 16).unwrap(), vec![32, 64, 128]);
        assert!(parse_levels("2", 16).is_err());
        assert!(parse_levels("64,32,128", 16).is_err());
        assert!(parse_levels("x", 16).is_err());
    }

    #[test]
    fn exit_code_classes() {
        assert_eq!(exit_code(&Error::Divergence { t: 0.1 }), EXIT_DIVERGED);
        assert_eq!(exit_code(&Error::Vacuum { phi1: 0.0, node: Some(3) }), EXIT_DIVERGED);
        assert_eq!(exit_code(&Error::Config { line: Some(2), msg: "x".into() }), EXIT_INVALID);
        assert_eq!(exit_code(&Error::Model("gamma".into())), EXIT_INVALID);
    }
}
