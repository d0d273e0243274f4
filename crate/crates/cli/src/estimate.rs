//! `causal-dr estimate`: estimators on a user-supplied CSV file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::Args;

use causal_dr_core::data::{CovariateSpec, Dataset};
use causal_dr_core::estimators::{estimate_many, Method, ResamplingConfig};
use causal_dr_core::numerics::{Matrix, RngStream};
use causal_dr_core::report::write_estimates_csv;

use crate::CliError;

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    outcome: String,
    /// Column holding the 0/1 treatment.
    #[arg(long)]
    treatment: String,
    /// Outcome-model covariates, comma-separated; prefix `abs:` for |x|/sqrt(1-2/pi).
    #[arg(long, default_value = "")]
    s_cols: String,
    /// Treatment-model covariates, same syntax as --s-cols.
    #[arg(long, default_value = "")]
    b_cols: String,
    #[arg(long, default_value = "all")]
    estimators: String,
    #[arg(long, default_value_t = 200)]
    draws: usize,
    #[arg(long, default_value_t = 200)]
    boot: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    no_stabilize: bool,
    /// Output CSV (standard output if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn base_name(term: &str) -> &str {
    term.strip_prefix("abs:").unwrap_or(term)
}

fn terms(list: &str) -> Vec<&str> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Reads the outcome, treatment and the named covariate columns. Errors
/// name the column and the 1-based data row.
fn read_dataset(args: &EstimateArgs) -> Result<Dataset, CliError> {
    let file = File::open(&args.data).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", args.data.display())))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Usage(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let find = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| CliError::Usage(format!("column `{name}` not found in {}", args.data.display())))
    };

    let mut covariates: Vec<String> = Vec::new();
    for t in terms(&args.s_cols).into_iter().chain(terms(&args.b_cols)) {
        let name = base_name(t).to_string();
        if !covariates.contains(&name) {
            covariates.push(name);
        }
    }
    let y_col = find(&args.outcome)?;
    let z_col = find(&args.treatment)?;
    let x_cols: Vec<usize> = covariates.iter().map(|c| find(c)).collect::<Result<_, _>>()?;

    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut x = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Usage(format!("row {}: {e}", row + 1)))?;
        let cell = |col: usize| -> Result<f64, CliError> {
            let raw = record.get(col).unwrap_or("");
            let name = &header[col];
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return Err(CliError::Usage(format!("missing value in column `{name}` at row {}", row + 1)));
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("column `{name}` at row {}: `{raw}` is not a number", row + 1)))
        };
        y.push(cell(y_col)?);
        let zv = cell(z_col)?;
        if zv != 0.0 && zv != 1.0 {
            return Err(CliError::Usage(format!(
                "treatment column `{}` at row {} is {zv} (must be 0 or 1)",
                args.treatment,
                row + 1
            )));
        }
        z.push(zv);
        for &c in &x_cols {
            x.push(cell(c)?);
        }
    }
    let n = y.len();
    let x = Matrix::from_row_major(n, covariates.len(), x)?;
    Ok(Dataset::new(y, z, x, covariates)?)
}

pub fn run(args: EstimateArgs) -> Result<(), CliError> {
    let methods = Method::parse_list(&args.estimators)?;
    let data = read_dataset(&args)?;
    let spec = CovariateSpec::new(
        CovariateSpec::parse_terms(&args.s_cols, data.names())?,
        CovariateSpec::parse_terms(&args.b_cols, data.names())?,
    );
    let cfg = ResamplingConfig {
        n_draws: args.draws,
        n_boot: args.boot,
        stabilize: !args.no_stabilize,
    };
    let mut results = Vec::new();
    for (method, r) in estimate_many(&methods, &data, &spec, &cfg, &RngStream::new(args.seed, 0)) {
        match r {
            Ok(est) => results.push(est),
            Err(e) => return Err(CliError::Usage(format!("{method}: {e}"))),
        }
    }
    match &args.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))?;
            write_estimates_csv(f, &results)?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_estimates_csv(&mut lock, &results)?;
            lock.flush().map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    Ok(())
}
