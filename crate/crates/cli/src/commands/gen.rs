//! `mwr gen-data`

use std::path::PathBuf;

use clap::Args;

use mwr_core::data::{generate_synthetic, write_csv, GeneratorConfig};
use mwr_core::error::Result;

use crate::runs::write_json_atomic;

#[derive(Args)]
pub struct GenDataArgs {
    /// Output CSV path; a `<name>.config.json` sidecar records the
    /// generator configuration.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator config JSON; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_cases: Option<usize>,
    #[arg(long)]
    pub positive_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub skin_baseline: Option<f64>,
    #[arg(long)]
    pub internal_baseline: Option<f64>,
    #[arg(long)]
    pub sym_sigma: Option<f64>,
    #[arg(long)]
    pub meas_sigma: Option<f64>,
    #[arg(long)]
    pub tumor_amp_min: Option<f64>,
    #[arg(long)]
    pub tumor_amp_max: Option<f64>,
}

pub fn effective_config(args: &GenDataArgs) -> Result<GeneratorConfig> {
    // Precedence: flags over config file over defaults.
    let mut config: GeneratorConfig = match &args.config {
        Some(path) => super::load_config_file(path)?,
        None => GeneratorConfig::default(),
    };
    if let Some(v) = args.n_cases {
        config.n_cases = v;
    }
    if let Some(v) = args.positive_fraction {
        config.positive_fraction = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.skin_baseline {
        config.skin_baseline = v;
    }
    if let Some(v) = args.internal_baseline {
        config.internal_baseline = v;
    }
    if let Some(v) = args.sym_sigma {
        config.sym_sigma = v;
    }
    if let Some(v) = args.meas_sigma {
        config.meas_sigma = v;
    }
    if let Some(v) = args.tumor_amp_min {
        config.tumor_amp_min = v;
    }
    if let Some(v) = args.tumor_amp_max {
        config.tumor_amp_max = v;
    }
    Ok(config)
}

pub fn run(args: GenDataArgs) -> Result<()> {
    let config = effective_config(&args)?;
    let dataset = generate_synthetic(&config)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| mwr_core::Error::io(dir.display().to_string(), e))?;
    }
    write_csv(&dataset, &args.out)?;
    write_json_atomic(&args.out.with_extension("config.json"), &config)?;
    let (neg, pos) = dataset.class_counts();
    println!(
        "wrote {} cases ({neg} healthy, {pos} cancerous) to {}",
        dataset.len(),
        args.out.display()
    );
    Ok(())
}
