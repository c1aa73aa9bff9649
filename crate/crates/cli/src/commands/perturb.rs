use std::path::PathBuf;

use skelfit_core::cloud::{add_gaussian_noise, subsample};
use skelfit_core::io::{write_cloud, CloudFormat};

use crate::error::{CliError, CliResult};
use crate::files::read_cloud;
use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Gaussian noise with standard deviation `magnitude` per coordinate
    Noise,
    /// Keep a random fraction `magnitude` of the points
    Subsample,
}

#[derive(Debug, clap::Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long, allow_negative_numbers = true)]
    pub magnitude: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output cloud; the format follows the extension. The manifest is
    /// written beside it as `<out>.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &PerturbArgs) -> CliResult<()> {
    let mut target = args.out.clone().into_os_string();
    target.push(".manifest.json");
    let mut manifest = Manifest::new("perturb", target.into());
    let outcome = execute(args, &mut manifest);
    manifest.finish(outcome)
}

fn execute(args: &PerturbArgs, manifest: &mut Manifest) -> CliResult<()> {
    manifest.seed = Some(args.seed);
    manifest.set("mode", args.mode);
    manifest.set("magnitude", args.magnitude);
    manifest.add_input(&args.input)?;
    manifest.write()?;
    let cloud = read_cloud(&args.input)?;
    let out = match args.mode {
        Mode::Noise => add_gaussian_noise(&cloud, args.magnitude, args.seed)?,
        Mode::Subsample => subsample(&cloud, args.magnitude, args.seed)?,
    };
    manifest.set("points_in", cloud.len());
    manifest.set("points_out", out.len());
    write_cloud(&args.out, &out, CloudFormat::from_path(&args.out)).map_err(|e| CliError::from(e).at(&args.out))
}
