//! Implementations of the five subcommands. Each returns `CliError` variants
//! that map onto the documented exit codes: 1 validation, 2 i/o, 3 check
//! failure.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;

use proscale_core::analysis::{redundancy_profile, smooth_pyramid, RedundancyProfile};
use proscale_core::costmodel::{compare, macs_baseline, macs_encoder, CostDims};
use proscale_core::encoder::{proscale_encode, EncoderConfig, EncoderParams};
use proscale_core::gradchecks::registered_checks;
use proscale_core::numerics::{Dtype, Tensor};
use proscale_core::pyramid::{build_pyramid, token_counts, PyramidSource, ScaleName, TokenPyramid};

use crate::error::{CliError, Result};
use crate::report::PlanReport;
use crate::runconfig::RunConfig;
use crate::tensorfile;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// `p1,p2,p3` triple as given on the command line.
fn parse_config_triple(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Validation(format!(
            "config must be three comma-separated depths, got {:?}",
            s
        )));
    }
    let depth = |p: &str| {
        p.trim()
            .parse::<usize>()
            .map_err(|_| CliError::Validation(format!("bad stage depth {:?} in config {:?}", p, s)))
    };
    Ok((depth(parts[0])?, depth(parts[1])?, depth(parts[2])?))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        None => {
            print!("{}", text);
            Ok(())
        }
        Some(path) => tensorfile::write_atomic(path, text.as_bytes()),
    }
}

/// Flags shared by `plan` and `sweep`: geometry, widths, and output routing.
#[derive(Debug, Args)]
pub struct DimsArgs {
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub ffn: Option<usize>,
    #[arg(long)]
    pub baseline_layers: Option<usize>,
    /// JSON file with defaults for any of the above; flags win.
    #[arg(long)]
    pub run_config: Option<PathBuf>,
}

impl DimsArgs {
    fn resolve(&self) -> Result<(CostDims, RunConfig)> {
        let file = match &self.run_config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let height = self
            .height
            .or(file.image_height)
            .ok_or_else(|| CliError::Validation("--height is required".into()))?;
        let width = self
            .width
            .or(file.image_width)
            .ok_or_else(|| CliError::Validation("--width is required".into()))?;
        let mut dims = CostDims::new(height, width);
        if let Some(c) = self.channels.or(file.channels) {
            dims.channels = c;
        }
        if let Some(m) = self.heads.or(file.heads) {
            dims.heads = m;
        }
        if let Some(p) = self.points.or(file.points) {
            dims.points = p;
        }
        if let Some(f) = self.ffn.or(file.ffn_dim) {
            dims.ffn_dim = f;
        }
        if let Some(b) = self.baseline_layers.or(file.baseline_layers) {
            dims.baseline_layers = b;
        }
        Ok((dims, file))
    }
}

fn encoder_config_for_dims(p: (usize, usize, usize), dims: &CostDims) -> EncoderConfig {
    EncoderConfig {
        p1: p.0,
        p2: p.1,
        p3: p.2,
        channels: dims.channels,
        heads: dims.heads,
        points: dims.points,
        ffn_dim: dims.ffn_dim,
        ..EncoderConfig::default()
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Stage depths as `p1,p2,p3`.
    #[arg(long)]
    pub config: String,
    #[command(flatten)]
    pub dims: DimsArgs,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn plan_report(config_triple: &str, dims_args: &DimsArgs) -> Result<PlanReport> {
    let triple = parse_config_triple(config_triple)?;
    let (dims, file) = dims_args.resolve()?;
    let mut config = encoder_config_for_dims(triple, &dims);
    if let Some(eps) = file.epsilon {
        config.epsilon = eps;
    }
    config.validate()?;
    let counts = token_counts(dims.image_height, dims.image_width)?;
    let staged = macs_encoder(&config, &dims)?;
    let baseline = macs_baseline(&dims)?;
    let merged = compare(&staged, &baseline)?;
    PlanReport::from_flops(&config, &counts, &merged)
}

pub fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let report = plan_report(&args.config, &args.dims)?;
    let text = match args.format {
        ReportFormat::Json => {
            let mut s = report.to_json()?;
            s.push('\n');
            s
        }
        ReportFormat::Csv => report.to_csv(),
    };
    emit(&text, args.out.as_deref())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Semicolon-separated list of `p1,p2,p3` triples.
    #[arg(long)]
    pub configs: String,
    #[command(flatten)]
    pub dims: DimsArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut csv = String::from("p1,p2,p3,total_macs,reduction_pct\n");
    for triple in args.configs.split(';') {
        let report = plan_report(triple, &args.dims)?;
        csv.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            report.p1,
            report.p2,
            report.p3,
            report.macs.total,
            report.reduction_pct.unwrap_or(f64::NAN),
        ));
    }
    emit(&csv, args.out.as_deref())
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Stage depths as `p1,p2,p3`.
    #[arg(long)]
    pub config: String,
    /// Generate a seeded standard-normal pyramid instead of reading files.
    #[arg(long, conflicts_with = "input")]
    pub synthetic: bool,
    /// Directory containing s1.pstf .. s4.pstf.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_trc: bool,
    #[arg(long)]
    pub no_lpe_fusion: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Write float64 payloads (default float32).
    #[arg(long)]
    pub float64: bool,
    #[arg(long)]
    pub run_config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct EncodeStats {
    shapes: EncodeShapes,
    update_counts: [usize; 3],
    stage_norms: StageNorms,
}

#[derive(Debug, Serialize)]
struct EncodeShapes {
    s_prime3: Vec<usize>,
    e_emb: Vec<usize>,
    per_scale: Vec<Vec<usize>>,
}

/// L2 norms of the refined per-scale maps, coarsest first.
#[derive(Debug, Serialize)]
struct StageNorms {
    s4: f64,
    s3: f64,
    s2: f64,
}

fn l2_norm(t: &Tensor) -> f64 {
    t.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn load_input_pyramid(dir: &Path, args: &EncodeArgs, channels: usize) -> Result<TokenPyramid> {
    let mut maps = Vec::with_capacity(4);
    for name in ScaleName::ALL {
        let path = dir.join(format!("{}.pstf", name.label()));
        let t = tensorfile::read(&path)?;
        if t.shape().len() != 3 {
            return Err(CliError::Validation(format!(
                "{} must be a rank-3 [H,W,C] tensor, got rank {}",
                path.display(),
                t.shape().len()
            )));
        }
        maps.push(t);
    }
    // Image geometry defaults to the finest grid scaled by its stride.
    let height = args.height.unwrap_or(maps[0].shape()[0] * 4);
    let width = args.width.unwrap_or(maps[0].shape()[1] * 4);
    let maps: [Tensor; 4] = maps.try_into().expect("four scales");
    Ok(build_pyramid(height, width, channels, PyramidSource::Tensors(Box::new(maps)))?)
}

pub fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let triple = parse_config_triple(&args.config)?;
    let file = match &args.run_config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let dtype = if args.float64 { Dtype::F64 } else { Dtype::F32 };
    let channels = args.channels.or(file.channels).unwrap_or(256);
    let mut config = EncoderConfig {
        p1: triple.0,
        p2: triple.1,
        p3: triple.2,
        channels,
        trc_enabled: !args.no_trc && file.trc_enabled.unwrap_or(true),
        lpe_fusion: !args.no_lpe_fusion && file.lpe_fusion.unwrap_or(true),
        seed: args.seed,
        ..EncoderConfig::default()
    };
    if let Some(m) = file.heads {
        config.heads = m;
    }
    if let Some(p) = file.points {
        config.points = p;
    }
    if let Some(f) = file.ffn_dim {
        config.ffn_dim = f;
    }
    if let Some(eps) = file.epsilon {
        config.epsilon = eps;
    }
    config.validate()?;

    let pyramid = match &args.input {
        Some(dir) => load_input_pyramid(dir, args, channels)?,
        None => {
            if !args.synthetic {
                return Err(CliError::Validation(
                    "either --synthetic or --input DIR is required".into(),
                ));
            }
            let height = args
                .height
                .or(file.image_height)
                .ok_or_else(|| CliError::Validation("--height is required with --synthetic".into()))?;
            let width = args
                .width
                .or(file.image_width)
                .ok_or_else(|| CliError::Validation("--width is required with --synthetic".into()))?;
            build_pyramid(height, width, channels, PyramidSource::Synthetic { seed: args.seed, dtype })?
        }
    };

    let params = EncoderParams::init(&config, &pyramid.scales, dtype)?;
    let output = proscale_encode(&pyramid, &config, &params)?;

    let stats = EncodeStats {
        shapes: EncodeShapes {
            s_prime3: output.s_out.shape().to_vec(),
            e_emb: output.e_emb.shape().to_vec(),
            per_scale: output.per_scale.iter().map(|t| t.shape().to_vec()).collect(),
        },
        update_counts: [
            output.update_counts.0,
            output.update_counts.1,
            output.update_counts.2,
        ],
        stage_norms: StageNorms {
            s4: l2_norm(&output.per_scale[0]),
            s3: l2_norm(&output.per_scale[1]),
            s2: l2_norm(&output.per_scale[2]),
        },
    };

    std::fs::create_dir_all(&args.out)?;
    tensorfile::write(&args.out.join("s_prime3.pstf"), &output.s_out.cast(dtype))?;
    tensorfile::write(&args.out.join("e_emb.pstf"), &output.e_emb.cast(dtype))?;
    let stats_json = serde_json::to_string_pretty(&stats)
        .map_err(|e| CliError::Io(format!("stats serialization: {}", e)))?;
    tensorfile::write_atomic(&args.out.join("stats.json"), format!("{}\n", stats_json).as_bytes())?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Check a single op by name, or `all`.
    #[arg(long, default_value = "all")]
    pub op: String,
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let checks = registered_checks();
    let selected: Vec<_> = if args.op == "all" {
        checks.iter().collect()
    } else {
        let hit: Vec<_> = checks.iter().filter(|c| c.name == args.op).collect();
        if hit.is_empty() {
            let names: Vec<_> = checks.iter().map(|c| c.name).collect();
            return Err(CliError::Validation(format!(
                "unknown op {:?}; registered: {}",
                args.op,
                names.join(", ")
            )));
        }
        hit
    };
    let mut failing = Vec::new();
    for check in selected {
        let report = check
            .run(args.seed, args.tolerance)
            .map_err(|e| CliError::Check(format!("{}: {}", check.name, e)))?;
        println!("{}", report);
        if !report.passed {
            failing.push(check.name);
        }
    }
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("failing ops: {}", failing.join(", "))))
    }
}

#[derive(Debug, Args)]
pub struct RedundancyArgs {
    /// TensorFile holding an [N,C] token matrix.
    #[arg(long, conflicts_with = "synthetic_smooth")]
    pub input: Option<PathBuf>,
    /// Profile all scales of a generated low-frequency pyramid instead.
    #[arg(long)]
    pub synthetic_smooth: bool,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_distance: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn profile_csv_rows(csv: &mut String, profile: &RedundancyProfile, with_scale: bool) {
    for d in 0..profile.mean_similarity.len() {
        if with_scale {
            csv.push_str(&format!(
                "{},{},{:.9},{}\n",
                profile.scale, d, profile.mean_similarity[d], profile.sample_count[d]
            ));
        } else {
            csv.push_str(&format!(
                "{},{:.9},{}\n",
                d, profile.mean_similarity[d], profile.sample_count[d]
            ));
        }
    }
}

pub fn cmd_redundancy(args: &RedundancyArgs) -> Result<()> {
    let csv = match (&args.input, args.synthetic_smooth) {
        (Some(path), false) => {
            let tokens = tensorfile::read(path)?;
            let profile = redundancy_profile(&tokens, args.max_distance, "input")?;
            let mut csv = String::from("distance,mean_similarity,sample_count\n");
            profile_csv_rows(&mut csv, &profile, false);
            csv
        }
        (None, true) => {
            let height = args
                .height
                .ok_or_else(|| CliError::Validation("--height is required with --synthetic-smooth".into()))?;
            let width = args
                .width
                .ok_or_else(|| CliError::Validation("--width is required with --synthetic-smooth".into()))?;
            let pyramid = smooth_pyramid(height, width, args.channels, args.seed)?;
            let mut csv = String::from("scale,distance,mean_similarity,sample_count\n");
            for name in ScaleName::ALL {
                let profile =
                    redundancy_profile(&pyramid.tokens(name)?, args.max_distance, name.label())?;
                profile_csv_rows(&mut csv, &profile, true);
            }
            csv
        }
        _ => {
            return Err(CliError::Validation(
                "exactly one of --input or --synthetic-smooth is required".into(),
            ))
        }
    };
    emit(&csv, args.out.as_deref())
}
