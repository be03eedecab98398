use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use scalp_core::basis::{BasisKind, MeasureConfig};
use scalp_core::io::{self, ColumnSpec, PlotField, RecordWriter};
use scalp_core::pipeline::{Engine, EngineConfig};
use scalp_core::scalp::{FlKind, FlVariant, ZKind};
use scalp_core::{Error, Result};

/// Computes execution-flow and scalp indicators for a tab-separated tick file.
#[derive(Parser, Debug)]
#[command(name = "scalp-muse", version)]
struct Cli {
    /// Input file of (time ns, price, shares) rows; `.gz` is decompressed.
    #[arg(long = "musein_file", value_name = "PATH")]
    musein_file: PathBuf,
    /// TOTAL:T:P:V, zero-based.
    #[arg(long = "musein_cols", value_name = "SPEC")]
    musein_cols: String,
    #[arg(long = "museout_file", value_name = "PATH")]
    museout_file: PathBuf,
    /// Basis dimension.
    #[arg(long, default_value_t = 12)]
    n: usize,
    /// Measure time scale in seconds.
    #[arg(long, default_value_t = 128.0)]
    tau: f64,
    #[arg(long, default_value = "ScalpedMaxIProjectionLegendreShifted")]
    measure: String,
    /// Directional attribute.
    #[arg(long = "dp_to_use", default_value = "PROBCORR_2D_SCALP")]
    dp_to_use: String,
    /// Weight of the two-state and non-local attributes.
    #[arg(long)]
    z: Option<String>,
    /// Optional narrow series for plotting.
    #[arg(long = "plot_file", value_name = "PATH")]
    plot_file: Option<PathBuf>,
    /// Comma-separated `name[:shift[:scale]]` fields.
    #[arg(long = "plot_fields", value_name = "LIST", requires = "plot_file")]
    plot_fields: Option<String>,
}

fn config(cli: &Cli) -> Result<(EngineConfig, ColumnSpec, Vec<PlotField>)> {
    let cols: ColumnSpec = cli.musein_cols.parse()?;
    let kind = BasisKind::from_token(&cli.measure)
        .ok_or_else(|| Error::Config(format!("unknown measure `{}`", cli.measure)))?;
    let fl = FlKind::from_token(&cli.dp_to_use)
        .ok_or_else(|| Error::Config(format!("unknown dp_to_use `{}`", cli.dp_to_use)))?;
    let z = cli
        .z
        .as_deref()
        .map(|s| ZKind::from_token(s).ok_or_else(|| Error::Config(format!("unknown z `{s}`"))))
        .transpose()?;
    let measure = MeasureConfig::new(kind, cli.n, cli.tau)?;
    let variant = FlVariant::new(fl, z)?;
    let plot = match (&cli.plot_file, &cli.plot_fields) {
        (None, _) => Vec::new(),
        (Some(_), None) => vec!["P_last".parse()?, "getSumFdt".parse()?],
        (Some(_), Some(list)) => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?,
    };
    Ok((EngineConfig { measure, variant }, cols, plot))
}

fn run(cli: &Cli) -> Result<usize> {
    let (cfg, cols, plot) = config(cli)?;
    let mut engine = Engine::new(cfg)?;
    let mut writer = RecordWriter::create(&cli.museout_file)?;
    let mut kept = Vec::new();
    let mut count = 0;
    for tick in io::open_ticks(&cli.musein_file, cols)? {
        let rec = engine.step(tick?)?;
        writer.write(&rec)?;
        if !plot.is_empty() {
            kept.push(rec);
        }
        count += 1;
    }
    writer.finish()?;
    if let Some(path) = &cli.plot_file {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        io::emit_plot_series(&kept, &plot, &mut BufWriter::new(file))?;
    }
    Ok(count)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scalp-muse: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
