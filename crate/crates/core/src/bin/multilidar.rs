//! Command-line front end: worked propagation example, plane-fit sweep,
//! synthetic scene generation, fusion, evaluation, and the end-to-end
//! robustness sweep. Every command is deterministic given its arguments,
//! so repeated runs produce byte-identical files and stdout.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use multilidar::config::RigConfig;
use multilidar::error::Result;
use multilidar::eval::{evaluate, Difficulty, EvalConfig};
use multilidar::experiment::{propagate_example, robustness_sweep};
use multilidar::fusion::{feature_fuse, input_fuse, result_fuse, voxelize_mean};
use multilidar::perturbation::DEFAULT_ALPHA_LEVELS;
use multilidar::plane::fitting_sweep_with;
use multilidar::scene::generate_scene;
use multilidar::{io, se3::RigidTransform};

#[derive(Parser)]
#[command(
    name = "multilidar",
    about = "Multi-LiDAR calibration-uncertainty toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults are built in.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Input,
    Feature,
    Result,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the worked-example landmark at each alpha.
    PropagateExample {
        #[command(flatten)]
        common: Common,
        /// Comma-separated alpha levels.
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        /// Landmark in the sensor frame, meters.
        #[arg(long, value_name = "X,Y,Z", value_delimiter = ',', num_args = 3, default_values_t = [10.0, 10.0, 10.0])]
        landmark: Vec<f64>,
    },
    /// Weighted-vs-unweighted plane fitting across alpha levels.
    PlaneSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        /// Overrides the config's trial count.
        #[arg(long, value_name = "N")]
        trials: Option<usize>,
    },
    /// Generate a synthetic scene: per-sensor clouds plus ground truth.
    GenScene {
        #[command(flatten)]
        common: Common,
    },
    /// Fuse per-sensor files with the configured rig.
    Fuse {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        scheme: Scheme,
        /// Per-sensor inputs, one per configured sensor: clouds for
        /// input/feature, box files for result.
        #[arg(value_name = "FILE", required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score detections against ground truth over six metric cells.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(value_name = "DET_FILE")]
        det: PathBuf,
        #[arg(value_name = "GT_FILE")]
        gt: PathBuf,
    },
    /// End-to-end robustness: generate, perturb, fuse, detect, evaluate.
    AlphaSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        /// Number of independent scene seeds to average.
        #[arg(long, value_name = "N", default_value_t = 10)]
        seeds: usize,
        /// Matching IoU threshold.
        #[arg(long, value_name = "X", default_value_t = 0.7)]
        iou: f64,
    },
}

fn load_config(common: &Common, fallback: RigConfig) -> Result<RigConfig> {
    let mut config = match &common.config {
        Some(path) => RigConfig::load(path)?,
        None => fallback,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn ensure_out(common: &Common) -> Result<()> {
    std::fs::create_dir_all(&common.out)?;
    Ok(())
}

fn fmt_matrix(m: &nalgebra::Matrix3<f64>) -> String {
    (0..3)
        .map(|i| {
            format!(
                "  [{:>9.4} {:>9.4} {:>9.4}]",
                m[(i, 0)],
                m[(i, 1)],
                m[(i, 2)]
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn cmd_propagate_example(common: &Common, alpha: Option<Vec<f64>>, landmark: &[f64]) -> Result<()> {
    let config = load_config(common, RigConfig::worked_example())?;
    let mut alphas = alpha.unwrap_or_else(|| {
        let mut a = DEFAULT_ALPHA_LEVELS.to_vec();
        a.push(1.0);
        a
    });
    if alphas.is_empty() {
        alphas = vec![1.0];
    }
    let landmark = Vector3::new(landmark[0], landmark[1], landmark[2]);
    let rows = propagate_example(&config.sensor[0], &landmark, &alphas)?;
    ensure_out(common)?;
    let mut csv_rows = Vec::with_capacity(rows.len());
    for row in &rows {
        let cells: Vec<String> = std::iter::once(row.alpha.to_string())
            .chain((0..9).map(|k| row.extrinsic[(k / 3, k % 3)].to_string()))
            .chain((0..9).map(|k| row.full[(k / 3, k % 3)].to_string()))
            .chain(row.per_axis_std.iter().map(|s| s.to_string()))
            .collect();
        csv_rows.push(cells.join(","));
        println!("alpha = {}", row.alpha);
        println!("extrinsic part:\n{}", fmt_matrix(&row.extrinsic));
        println!("full covariance:\n{}", fmt_matrix(&row.full));
        println!(
            "per-axis std: [{:.4} {:.4} {:.4}] m\n",
            row.per_axis_std[0], row.per_axis_std[1], row.per_axis_std[2]
        );
    }
    let header: Vec<String> = std::iter::once("alpha".to_string())
        .chain((0..9).map(|k| format!("ext_{}{}", k / 3, k % 3)))
        .chain((0..9).map(|k| format!("full_{}{}", k / 3, k % 3)))
        .chain(["std_x", "std_y", "std_z"].map(String::from))
        .collect();
    io::write_csv(
        &common.out.join("propagate_example.csv"),
        &header.join(","),
        &csv_rows,
    )
}

fn cmd_plane_sweep(common: &Common, alpha: Option<Vec<f64>>, trials: Option<usize>) -> Result<()> {
    let config = load_config(common, RigConfig::worked_example())?;
    let alphas = alpha.unwrap_or_else(|| DEFAULT_ALPHA_LEVELS.to_vec());
    let trials = trials.unwrap_or(config.plane.trials);
    let sweep = config.plane_sweep_config()?;
    let reports = fitting_sweep_with(&sweep, &alphas, trials, config.seed)?;
    ensure_out(common)?;
    let mut rows = Vec::with_capacity(reports.len());
    for r in &reports {
        rows.push(format!(
            "{},{},{},{},{}",
            r.alpha, r.error_weighted, r.error_unweighted, r.trials, r.failures
        ));
        println!(
            "alpha {:>5}: weighted {:.6}  unweighted {:.6}  ({} trials, {} failures)",
            r.alpha, r.error_weighted, r.error_unweighted, r.trials, r.failures
        );
    }
    io::write_csv(
        &common.out.join("plane_sweep.csv"),
        "alpha,err_weighted,err_unweighted,trials,failures",
        &rows,
    )
}

fn cmd_gen_scene(common: &Common) -> Result<()> {
    let config = load_config(common, RigConfig::default())?;
    let extrinsics: Vec<RigidTransform> = config.sensor.iter().map(|s| s.extrinsics()).collect();
    let scene = generate_scene(&config.scene, &extrinsics, config.seed)?;
    ensure_out(common)?;
    for (i, cloud) in scene.sensor_clouds.iter().enumerate() {
        io::write_cloud(&common.out.join(format!("sensor{i}.bin")), cloud)?;
    }
    io::write_boxes(&common.out.join("gt.txt"), &scene.gt_boxes)?;
    println!(
        "scene seed {}: {} boxes, clouds {:?}",
        config.seed,
        scene.gt_boxes.len(),
        scene.sensor_clouds.iter().map(Vec::len).collect::<Vec<_>>()
    );
    Ok(())
}

fn cmd_fuse(common: &Common, scheme: Scheme, inputs: &[PathBuf]) -> Result<()> {
    let config = load_config(common, RigConfig::default())?;
    let rig = config.rig()?;
    rig.check_count(inputs.len())?;
    ensure_out(common)?;
    match scheme {
        Scheme::Input => {
            let clouds = inputs
                .iter()
                .map(|p| io::read_cloud(p))
                .collect::<Result<Vec<_>>>()?;
            let fused = input_fuse(&rig, &clouds)?;
            let path = common.out.join("fused.bin");
            io::write_tagged_cloud(&path, &fused)?;
            println!("fused {} points -> fused.bin (+.trace)", fused.len());
        }
        Scheme::Feature => {
            let grid_config = config.fusion.voxel_grid()?;
            let grids = inputs
                .iter()
                .map(|p| Ok(voxelize_mean(&io::read_tagged_cloud(p)?, &grid_config)))
                .collect::<Result<Vec<_>>>()?;
            let fused = feature_fuse(&rig, &grids)?;
            let rows: Vec<String> = fused
                .cells()
                .iter()
                .map(|(idx, f)| {
                    format!(
                        "{},{},{},{},{},{},{}",
                        idx[0], idx[1], idx[2], f.mean.x, f.mean.y, f.mean.z, f.count
                    )
                })
                .collect();
            io::write_csv(
                &common.out.join("fused_grid.csv"),
                "ix,iy,iz,mean_x,mean_y,mean_z,count",
                &rows,
            )?;
            println!("fused {} occupied cells -> fused_grid.csv", fused.len());
        }
        Scheme::Result => {
            let box_sets = inputs
                .iter()
                .map(|p| io::read_boxes(p))
                .collect::<Result<Vec<_>>>()?;
            let fused = result_fuse(&rig, &box_sets, config.fusion.nms_iou_threshold)?;
            io::write_boxes(&common.out.join("fused.txt"), &fused)?;
            println!("fused {} boxes -> fused.txt", fused.len());
        }
    }
    Ok(())
}

fn cmd_eval(common: &Common, det_path: &Path, gt_path: &Path) -> Result<()> {
    let dets = io::read_boxes(det_path)?;
    let gts = io::read_boxes(gt_path)?;
    ensure_out(common)?;
    let mut rows = Vec::with_capacity(6);
    for iou in [0.7, 0.5] {
        for difficulty in Difficulty::ALL {
            let report = evaluate(&dets, &gts, &EvalConfig::new(iou, difficulty)?);
            rows.push(format!(
                "{},{},{},{},{}",
                iou,
                difficulty.label(),
                report.curve.ap,
                report.n_gt,
                report.n_det
            ));
            println!(
                "IoU>={iou} {:<9} AP {:.4}  ({} gt, {} det)",
                difficulty.label(),
                report.curve.ap,
                report.n_gt,
                report.n_det
            );
        }
    }
    io::write_csv(
        &common.out.join("eval.csv"),
        "iou,difficulty,ap,n_gt,n_det",
        &rows,
    )
}

fn cmd_alpha_sweep(common: &Common, alpha: Option<Vec<f64>>, seeds: usize, iou: f64) -> Result<()> {
    let config = load_config(common, RigConfig::default())?;
    let alphas = alpha.unwrap_or_else(|| DEFAULT_ALPHA_LEVELS.to_vec());
    let rows = robustness_sweep(&config, &alphas, seeds, iou)?;
    ensure_out(common)?;
    let csv: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.alpha, r.scheme, r.ap[0], r.ap[1], r.ap[2]
            )
        })
        .collect();
    for r in &rows {
        println!(
            "alpha {:>5} {:<8} AP easy {:.4}  moderate {:.4}  hard {:.4}",
            r.alpha, r.scheme, r.ap[0], r.ap[1], r.ap[2]
        );
    }
    io::write_csv(
        &common.out.join("robustness.csv"),
        "alpha,scheme,ap_easy,ap_moderate,ap_hard",
        &csv,
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PropagateExample {
            common,
            alpha,
            landmark,
        } => cmd_propagate_example(&common, alpha, &landmark),
        Command::PlaneSweep {
            common,
            alpha,
            trials,
        } => cmd_plane_sweep(&common, alpha, trials),
        Command::GenScene { common } => cmd_gen_scene(&common),
        Command::Fuse {
            common,
            scheme,
            inputs,
        } => cmd_fuse(&common, scheme, &inputs),
        Command::Eval { common, det, gt } => cmd_eval(&common, &det, &gt),
        Command::AlphaSweep {
            common,
            alpha,
            seeds,
            iou,
        } => cmd_alpha_sweep(&common, alpha, seeds, iou),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
