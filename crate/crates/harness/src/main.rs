use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cvqkd_cs::channel::{write_dataset_csv, write_ensemble_csv};
use cvqkd_cs_harness::config::{load_config, ExperimentConfig, Preset};
use cvqkd_cs_harness::report::{write_reports, REPORT_TOML};
use cvqkd_cs_harness::sweep::{build_ensembles, run_sweep, simulate_cell, Stages};

/// Compressive-sensing channel estimation and key-rate experiments for
/// free-space CV-QKD.
#[derive(Debug, Parser)]
#[command(name = "cvqkd-cs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `experiment.output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write each distance's ensemble and the first seed's quadratures.
    Simulate,
    /// Per-sub-channel estimates and MSE tables.
    Estimate,
    /// Mutual incoherence of the sensing operators.
    Mip,
    /// Key rates from the true and estimated ensemble means.
    Keyrate,
    /// Everything above except the raw quadrature dump.
    Sweep,
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path, common.preset).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::preset(common.preset),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.experiment.output = out.clone();
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let seed = cfg.experiment.seeds[0];
    let mut written = Vec::new();
    for (d, (_, ens)) in build_ensembles(cfg)?.iter().enumerate() {
        let path = dir.join(format!("ensemble_{d}.csv"));
        write_ensemble_csv(ens, create(&path)?)?;
        written.push(path);
        let data = simulate_cell(cfg, ens, d, seed)?;
        let path = dir.join(format!("dataset_{d}.csv"));
        write_dataset_csv(&data, create(&path)?)?;
        written.push(path);
    }
    let path = dir.join(REPORT_TOML);
    std::fs::write(&path, cfg.to_toml()).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = resolve(&cli.common)?;
    let dir = cfg.experiment.output.clone();
    let stages = match cli.command {
        Command::Simulate => return simulate(&cfg, &dir),
        Command::Estimate => Stages { estimates: true, mip: false, keyrate: false },
        Command::Mip => Stages { estimates: false, mip: true, keyrate: false },
        Command::Keyrate => Stages { estimates: false, mip: false, keyrate: true },
        Command::Sweep => Stages::ALL,
    };
    let report = run_sweep(&cfg, stages)?;
    Ok(write_reports(&report, &dir)?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    for path in run(&cli)? {
        println!("{}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> PathBuf {
        let path = dir.join("small.toml");
        std::fs::write(
            &path,
            "[experiment]\nseeds = [1, 2]\nfractions = [0.5, 1.0]\n\
             [ensemble]\nsubchannels = 3\nblock_length = 128\ndistances = [2.0]\n\
             [mip]\ncolumns = 64\n",
        )
        .unwrap();
        path
    }

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("cvqkd-cs").chain(args.iter().copied())).unwrap()
    }

    fn names(paths: &[PathBuf]) -> Vec<String> {
        let mut v: Vec<String> = paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        v.sort();
        v
    }

    #[test]
    fn flags_parse_anywhere() {
        let c = cli(&["--preset", "paper", "mip", "--seed", "9", "--out", "x"]);
        assert!(matches!(c.command, Command::Mip));
        assert_eq!(c.common.preset, Preset::Paper);
        assert_eq!(c.common.seed, Some(9));
        assert!(Cli::try_parse_from(["cvqkd-cs", "sweep", "--preset", "huge"]).is_err());
        assert!(Cli::try_parse_from(["cvqkd-cs", "plot"]).is_err());
    }

    #[test]
    fn subcommands_write_their_tables() {
        let tmp = tempfile::tempdir().unwrap();
        let config = small_config(tmp.path());
        let run_in = |command: &str| {
            let out = tmp.path().join(command);
            let c = cli(&[command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            names(&run(&c).unwrap())
        };
        assert_eq!(run_in("estimate"), ["estimates.csv", "mse.csv", "report.toml"]);
        assert_eq!(run_in("mip"), ["mip.csv", "report.toml"]);
        assert_eq!(run_in("keyrate"), ["keyrate.csv", "report.toml"]);
        assert_eq!(run_in("sweep"), ["estimates.csv", "keyrate.csv", "mip.csv", "mse.csv", "report.toml"]);
        assert_eq!(run_in("simulate"), ["dataset_0.csv", "ensemble_0.csv", "report.toml"]);

        let dataset = std::fs::read_to_string(tmp.path().join("simulate/dataset_0.csv")).unwrap();
        assert!(dataset.starts_with("i,j,x,y\n"));
        assert_eq!(dataset.lines().count(), 1 + 3 * 128);
    }

    #[test]
    fn seed_flag_replaces_the_seed_list() {
        let tmp = tempfile::tempdir().unwrap();
        let config = small_config(tmp.path());
        let out = tmp.path().join("o");
        let c = cli(&["estimate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "42"]);
        run(&c).unwrap();
        let text = std::fs::read_to_string(out.join("estimates.csv")).unwrap();
        assert!(text.lines().skip(1).all(|l| l.split(',').nth(3) == Some("42")));
        let mse = std::fs::read_to_string(out.join("mse.csv")).unwrap();
        assert!(mse.lines().skip(1).all(|l| l.split(',').nth(3) == Some("1")));
    }

    #[test]
    fn bad_config_reports_the_path() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("bad.toml");
        std::fs::write(&path, "[experiment]\nfractions = [1.5]\n").unwrap();
        let c = cli(&["sweep", "--config", path.to_str().unwrap()]);
        let msg = format!("{:#}", run(&c).unwrap_err());
        assert!(msg.contains("bad.toml") && msg.contains("experiment.fractions"), "{msg}");
    }
}
