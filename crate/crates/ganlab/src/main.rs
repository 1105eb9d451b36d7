//! Command-line front end: training runs, the bilinear self-play demo, the
//! multi-architecture benchmark, gradient verification, and artifact
//! rendering (level sets, latent walks).
//!
//! Exit codes: 0 success, 1 usage/configuration/I-O errors, 2 a training run
//! that started but was marked failed (non-finite losses).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ganlab::gradcheck::{run_gradcheck, FIRST_ORDER_TOL, SECOND_ORDER_TOL};
use ganlab::harness::train::agd_train_with;
use ganlab::harness::{bogonet_run, canonical_algorithms, DatasetSelector, GameConfig};
use ganlab::metrics::{latent_walk, levelset_grid, SeriesSummary};
use ganlab::nets::Mlp;
use ganlab::regretgame::{bilinear_self_play, BoxGame, EtaSchedule};
use ganlab::synthdata::{export_points_csv, sample_noise};

#[derive(Parser)]
#[command(
    name = "ganlab",
    version,
    about = "Adversarial-training laboratory on 2D synthetic data"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a generator/discriminator pair from a JSON config
    Train {
        /// Path to a JSON training configuration
        #[arg(long)]
        config: PathBuf,
        /// Override the config's RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the CSV log, checkpoints, and level-set renders
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Upper bound on the number of level-set snapshots (0 disables)
        #[arg(long, default_value_t = 10)]
        levelsets: usize,
    },
    /// Self-play on the scalar bilinear game: averaging converges, the last
    /// iterate cycles
    GameDemo {
        /// Number of self-play rounds
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        /// Log one CSV row every this many rounds
        #[arg(long, default_value_t = 100)]
        checkpoint_every: usize,
        /// Directory for the CSV log
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Rank training algorithms over a pool of random architectures
    Bogonet {
        /// Number of random architecture instances
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Generator-iteration budget per run (shared by all algorithms)
        #[arg(long, default_value_t = 1_000)]
        g_iters: usize,
        /// Benchmark seed (drives architecture sampling and training)
        #[arg(long, default_value_t = 4242)]
        seed: u64,
        /// Directory for the summary CSV
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Verify engine gradients against central finite differences
    Gradcheck {
        /// Number of random first-order cases
        #[arg(long, default_value_t = 120)]
        cases: usize,
        /// RNG seed for case generation
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Render a discriminator checkpoint's level sets to a PGM image
    Levelset {
        /// Discriminator checkpoint (2D input)
        #[arg(long)]
        checkpoint: PathBuf,
        /// Grid resolution per axis
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        /// Grid bounds as xmin,xmax,ymin,ymax
        #[arg(long, default_value = "-3,3,-3,3", value_parser = parse_bounds)]
        bounds: (f64, f64, f64, f64),
        /// Output PGM path
        #[arg(long, default_value = "levelset.pgm")]
        out: PathBuf,
        /// Also write the raw grid values as CSV next to the PGM
        #[arg(long)]
        csv: bool,
    },
    /// Walk a straight latent segment through a generator checkpoint
    LatentWalk {
        /// Generator checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of interpolation points (endpoints included)
        #[arg(long, default_value_t = 9)]
        steps: usize,
        /// Seed for the two latent endpoints
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output CSV path
        #[arg(long, default_value = "latent_walk.csv")]
        out: PathBuf,
    },
}

fn parse_bounds(s: &str) -> Result<(f64, f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err("expected xmin,xmax,ymin,ymax".to_string());
    }
    let mut v = [0.0; 4];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("bad bound '{p}'"))?;
    }
    if !(v[0] < v[1] && v[2] < v[3]) {
        return Err("bounds must satisfy xmin<xmax and ymin<ymax".to_string());
    }
    Ok((v[0], v[1], v[2], v[3]))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> ganlab::Result<ExitCode> {
    match cli.cmd {
        Cmd::Train {
            config,
            seed,
            out_dir,
            levelsets,
        } => cmd_train(&config, seed, &out_dir, levelsets),
        Cmd::GameDemo {
            iters,
            checkpoint_every,
            out_dir,
        } => cmd_game_demo(iters, checkpoint_every, &out_dir),
        Cmd::Bogonet {
            instances,
            g_iters,
            seed,
            out_dir,
        } => cmd_bogonet(instances, g_iters, seed, &out_dir),
        Cmd::Gradcheck { cases, seed } => cmd_gradcheck(cases, seed),
        Cmd::Levelset {
            checkpoint,
            resolution,
            bounds,
            out,
            csv,
        } => cmd_levelset(&checkpoint, resolution, bounds, &out, csv),
        Cmd::LatentWalk {
            checkpoint,
            steps,
            seed,
            out,
        } => cmd_latent_walk(&checkpoint, steps, seed, &out),
    }
}

fn create_writer(path: &Path) -> ganlab::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn cmd_train(
    config: &Path,
    seed: Option<u64>,
    out_dir: &Path,
    levelsets: usize,
) -> ganlab::Result<ExitCode> {
    let mut cfg = GameConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(out_dir)?;

    // Spread the level-set snapshots evenly across the run's eval marks.
    let eval_count = cfg.total_g_iters.div_ceil(cfg.eval_interval).max(1);
    let snapshot_stride = if levelsets == 0 {
        usize::MAX
    } else {
        eval_count.div_ceil(levelsets).max(1)
    };
    let two_d = !matches!(cfg.dataset, DatasetSelector::Idx { .. });

    let mut eval_idx = 0usize;
    let mut snapshot_err: Option<ganlab::Error> = None;
    let mut snapshots = 0usize;
    let outcome = agd_train_with(&cfg, |ev| {
        let take = levelsets > 0 && two_d && eval_idx % snapshot_stride == 0;
        eval_idx += 1;
        if !take || snapshot_err.is_some() {
            return;
        }
        let name = format!("levelset_{:06}.pgm", ev.row.g_iter);
        let render = levelset_grid(ev.discriminator, (-3.0, 3.0, -3.0, 3.0), 64)
            .and_then(|grid| create_writer(&out_dir.join(&name)).and_then(|w| grid.write_pgm(w)));
        match render {
            Ok(()) => snapshots += 1,
            Err(e) => snapshot_err = Some(e),
        }
    })?;
    if let Some(e) = snapshot_err {
        return Err(e);
    }

    let log_path = out_dir.join("train_log.csv");
    outcome.log.write_csv(create_writer(&log_path)?)?;
    outcome.generator.save(&out_dir.join("generator.ckpt"))?;
    outcome
        .discriminator
        .save(&out_dir.join("discriminator.ckpt"))?;

    if two_d {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let z = sample_noise(1024, cfg.generator.latent_dim, &mut rng);
        let samples = outcome.generator.apply(&z)?;
        export_points_csv(&samples, create_writer(&out_dir.join("samples.csv"))?)?;
    }

    if let Some(f) = &outcome.log.failed {
        eprintln!(
            "run failed at generator iteration {}: {}",
            f.g_iter, f.reason
        );
        println!(
            "train: FAILED at iter {} ({} rows logged, {} level-set snapshots) -> {}",
            f.g_iter,
            outcome.log.rows.len(),
            snapshots,
            out_dir.display()
        );
        return Ok(ExitCode::from(2));
    }

    let last = outcome
        .log
        .rows
        .last()
        .expect("a finished run logs at least its final eval");
    println!(
        "train: {} g-iters, final covered_modes={} hq_fraction={:.3} d_loss={:.4} ({} rows, {} level-set snapshots) -> {}",
        last.g_iter,
        last.covered_modes,
        last.hq_fraction,
        last.d_loss,
        outcome.log.rows.len(),
        snapshots,
        out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_game_demo(
    iters: usize,
    checkpoint_every: usize,
    out_dir: &Path,
) -> ganlab::Result<ExitCode> {
    std::fs::create_dir_all(out_dir)?;
    let game = BoxGame::scalar_bilinear();
    let rows = bilinear_self_play(
        &game,
        &[0.5],
        &[0.5],
        iters,
        EtaSchedule::InvSqrt(1.0),
        checkpoint_every,
    )?;

    let path = out_dir.join("game_demo.csv");
    let mut w = create_writer(&path)?;
    writeln!(
        w,
        "round,phi,theta,phi_bar,theta_bar,regret_1,regret_2,duality_gap"
    )?;
    for r in &rows {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.round,
            r.phi[0],
            r.theta[0],
            r.phi_bar[0],
            r.theta_bar[0],
            r.regret1,
            r.regret2,
            r.duality_gap
        )?;
    }
    w.flush()?;

    let last = rows.last().expect("self-play always logs the final round");
    println!(
        "game-demo: {} rounds, averaged-iterate gap {:.6}, last-iterate gap {:.6} -> {}",
        last.round,
        last.duality_gap,
        last.last_iterate_gap,
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_bogonet(
    instances: usize,
    g_iters: usize,
    seed: u64,
    out_dir: &Path,
) -> ganlab::Result<ExitCode> {
    std::fs::create_dir_all(out_dir)?;
    let algorithms = canonical_algorithms(g_iters);
    let results = bogonet_run(instances, &algorithms, seed)?;

    let path = out_dir.join("bogonet_summary.csv");
    let mut w = create_writer(&path)?;
    writeln!(w, "algorithm,{}", SeriesSummary::CSV_HEADER)?;
    for r in &results {
        writeln!(w, "{},{}", r.name, r.summary.to_csv_row())?;
    }
    w.flush()?;

    println!(
        "bogonet: {} instances x {} algorithms, {} generator iterations each",
        instances,
        results.len(),
        g_iters
    );
    for r in &results {
        println!(
            "  {:<10} final {:.3} +- {:.3}   auc {:.1} +- {:.1}",
            r.name,
            r.summary.final_mean,
            r.summary.final_std,
            r.summary.auc_mean,
            r.summary.auc_std
        );
    }
    println!("summary -> {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(cases: usize, seed: u64) -> ganlab::Result<ExitCode> {
    let t0 = std::time::Instant::now();
    let report = run_gradcheck(cases, seed)?;
    println!(
        "first order:  {} cases, max relative error {:.3e} (tolerance {:.0e})",
        report.first_order_cases, report.max_first_order_err, FIRST_ORDER_TOL
    );
    for (label, n, err) in &report.second_order {
        println!(
            "second order: {label:<12} {n} cases, max relative error {err:.3e} (tolerance {SECOND_ORDER_TOL:.0e})"
        );
    }
    eprintln!("gradcheck took {:.2}s", t0.elapsed().as_secs_f64());
    if report.passed() {
        println!("gradcheck: PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("gradcheck: FAIL");
        Ok(ExitCode::from(1))
    }
}

fn cmd_levelset(
    checkpoint: &Path,
    resolution: usize,
    bounds: (f64, f64, f64, f64),
    out: &Path,
    csv: bool,
) -> ganlab::Result<ExitCode> {
    let d = Mlp::load(checkpoint)?;
    let grid = levelset_grid(&d, bounds, resolution)?;
    grid.write_pgm(create_writer(out)?)?;
    if csv {
        let csv_path = out.with_extension("csv");
        grid.write_csv(create_writer(&csv_path)?)?;
    }
    println!(
        "levelset: {}x{} grid, values in [{:.4}, {:.4}] -> {}",
        resolution,
        resolution,
        grid.min,
        grid.max,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_latent_walk(
    checkpoint: &Path,
    steps: usize,
    seed: u64,
    out: &Path,
) -> ganlab::Result<ExitCode> {
    let g = Mlp::load(checkpoint)?;
    let dim = g.in_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let z0 = draw(dim);
    let z1 = draw(dim);
    let pts = latent_walk(&g, &z0, &z1, steps)?;

    let mut w = create_writer(out)?;
    let coord_names: Vec<String> = (0..pts.cols()).map(|j| format!("x{j}")).collect();
    writeln!(w, "step,t,{}", coord_names.join(","))?;
    for i in 0..pts.rows() {
        let t = if steps == 1 {
            0.0
        } else {
            i as f64 / (steps - 1) as f64
        };
        let coords: Vec<String> = (0..pts.cols())
            .map(|j| format!("{:.16e}", pts.get(i, j)))
            .collect();
        writeln!(w, "{},{:.16e},{}", i, t, coords.join(","))?;
    }
    w.flush()?;

    println!(
        "latent-walk: {} points through a {}->{} generator -> {}",
        steps,
        dim,
        pts.cols(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}
