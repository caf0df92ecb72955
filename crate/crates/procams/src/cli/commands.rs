//! Implementations behind the subcommands.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use super::chart::render_bar_chart;
use super::rows::{append_rows, read_rows, BenchRow};
use super::{
    absolute, write_run_json, AblateArgs, CalibrateArgs, CliError, Commands, CompensateArgs,
    GenDatasetArgs, ReportArgs, RerunArgs,
};
use crate::dataset::{build_dataset, load_manifest, BuildConfig, DatasetError, DatasetManifest};
use crate::imaging::{read_png, resample_bilinear, write_png};
use crate::pipeline::{
    self, ablate_priors, crop_flow, AblationRow, AblationTable, CalibrationBundle,
    CalibrationMethod, SimulatorRig,
};
use crate::sim::{true_correspondence, SetupConfig};

/// Accepts either the dataset directory or a direct manifest path.
fn open_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    let p = absolute(path);
    let p = if p.is_dir() { p.join("manifest.json") } else { p };
    load_manifest(&p).map_err(CliError::usage)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::run(format!("{}: {e}", dir.display())))
}

pub(super) fn gen_dataset(args: &GenDatasetArgs) -> Result<(), CliError> {
    if args.setups == 0 {
        return Err(CliError::Usage("--setups must be at least 1".into()));
    }
    if args.train == 0 || args.val == 0 {
        return Err(CliError::Usage("--train and --val must be at least 1".into()));
    }
    let out = absolute(&args.out);
    let source = args.source.as_ref().map(|p| absolute(p));
    let config = BuildConfig {
        n_setups: args.setups,
        train: args.train,
        val: args.val,
        test: args.test,
        resolution: args.res,
        test_resolution: args.test_res,
        seed: args.seed,
    };
    let t0 = Instant::now();
    let manifest = build_dataset(&config, source.as_deref(), &out).map_err(|e| match e {
        DatasetError::BadInput { .. } => CliError::usage(e),
        other => CliError::run(other),
    })?;
    write_run_json(
        &out,
        Commands::GenDataset(GenDatasetArgs {
            out: out.clone(),
            source,
            ..args.clone()
        }),
    )?;

    println!(
        "{:<11} {:<10} {:>20} {:>6} {:>4} {:>5}",
        "setup", "difficulty", "seed", "train", "val", "test"
    );
    for e in &manifest.setups {
        println!(
            "{:<11} {:<10} {:>20} {:>6} {:>4} {:>5}",
            e.setup_id,
            e.difficulty.as_str(),
            e.seed,
            e.train,
            e.val,
            e.test
        );
    }
    println!(
        "wrote {} setups to {} in {:.1}s (train/val at {} px, test at {} px)",
        manifest.setups.len(),
        out.display(),
        t0.elapsed().as_secs_f64(),
        args.res,
        args.test_res
    );
    Ok(())
}

pub(super) fn calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    let method = match args.method.as_str() {
        "graycode" => CalibrationMethod::Graycode,
        "flow" => CalibrationMethod::Flow,
        other => {
            return Err(CliError::Usage(format!(
                "unknown method {other:?} (expected graycode or flow)"
            )))
        }
    };
    if !matches!(args.k, 1 | 3 | 5) {
        return Err(CliError::Usage(format!(
            "--k must be 1, 3, or 5 (got {})",
            args.k
        )));
    }
    let manifest = open_manifest(&args.dataset)?;
    let entry = manifest.entry(&args.setup).ok_or_else(|| {
        CliError::Usage(format!(
            "setup {:?} is not in the manifest ({} setups listed)",
            args.setup,
            manifest.setups.len()
        ))
    })?;
    let setup = manifest.load_setup(entry).map_err(CliError::usage)?;
    let rig = SimulatorRig::new(setup.clone()).map_err(CliError::run)?;
    let bundle = pipeline::calibrate(&rig, method, args.k).map_err(CliError::run)?;

    let out = absolute(&args.out);
    bundle.save(&out).map_err(CliError::run)?;
    // Store the scene next to the bundle so `compensate --simulate` is
    // self-contained.
    setup.save(&out).map_err(CliError::run)?;
    write_run_json(
        &out,
        Commands::Calibrate(CalibrateArgs {
            dataset: absolute(&args.dataset),
            out: out.clone(),
            ..args.clone()
        }),
    )?;

    let truth = true_correspondence(&setup).map_err(CliError::run)?;
    let truth_b = crop_flow(&truth, bundle.crop_offset, bundle.crop_size);
    let stats = bundle.back_flow.epe_vs(&truth_b).map_err(CliError::run)?;

    println!(
        "method {}  priors {}  captures {}",
        args.method, args.k, bundle.timing.captures
    );
    println!(
        "crop {}x{} at ({}, {}); inscribed rect {}x{} at ({}, {})",
        bundle.crop_size.0,
        bundle.crop_size.1,
        bundle.crop_offset.0,
        bundle.crop_offset.1,
        bundle.rect.w,
        bundle.rect.h,
        bundle.rect.x,
        bundle.rect.y
    );
    println!(
        "correspondence error vs scene truth: mean {:.4} px, max {:.4} px over {} pixels",
        stats.mean, stats.max, stats.compared
    );
    println!(
        "capture {:.0} ms  solve {:.0} ms  total {:.0} ms",
        bundle.timing.capture_ms, bundle.timing.solve_ms, bundle.timing.total_ms
    );
    println!("bundle written to {}", out.display());
    Ok(())
}

pub(super) fn compensate(args: &CompensateArgs) -> Result<(), CliError> {
    let bundle_dir = absolute(&args.bundle);
    if !bundle_dir.join("bundle.json").is_file() {
        return Err(CliError::Usage(format!(
            "{} has no bundle.json (expected a `procams calibrate` output directory)",
            bundle_dir.display()
        )));
    }
    let bundle = CalibrationBundle::load(&bundle_dir).map_err(CliError::usage)?;
    let image_path = absolute(&args.image);
    let image = read_png(&image_path).map_err(CliError::usage)?;
    let (pw, ph) = bundle.projector_size;
    let x = if image.dims() == (pw, ph) && image.channels() == 3 {
        image
    } else {
        resample_bilinear(&image.to_rgb(), pw, ph).map_err(CliError::run)?
    };

    let result = if args.simulate {
        let setup_path = bundle_dir.join("setup.json");
        if !setup_path.is_file() {
            return Err(CliError::Usage(format!(
                "--simulate needs the scene stored next to the bundle; {} is missing",
                setup_path.display()
            )));
        }
        let setup = SetupConfig::load(&setup_path).map_err(CliError::usage)?;
        let rig = SimulatorRig::new(setup).map_err(CliError::run)?;
        pipeline::evaluate_real(&x, &bundle, &rig).map_err(CliError::run)?
    } else {
        pipeline::compensate(&x, &bundle).map_err(CliError::run)?
    };

    let out = absolute(&args.out);
    ensure_dir(&out)?;
    write_png(&result.drive, &out.join("drive.png")).map_err(CliError::run)?;
    write_png(&result.predicted_capture, &out.join("predicted.png")).map_err(CliError::run)?;
    write_png(&result.desired, &out.join("desired.png")).map_err(CliError::run)?;
    if let Some(captured) = &result.captured {
        write_png(captured, &out.join("captured.png")).map_err(CliError::run)?;
    }

    let setup_id = args.setup_id.clone().unwrap_or_else(|| {
        bundle_dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "bundle".into())
    });
    let image_id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let k = bundle.priors_warped.levels().len();
    let mut csv_rows = vec![BenchRow {
        setup_id: setup_id.clone(),
        image_id: image_id.clone(),
        k,
        method: "compensated".into(),
        psnr: result.metrics.psnr,
        rmse: result.metrics.rmse,
        ssim: result.metrics.ssim,
        de00: result.metrics.de00_mean,
        clip_frac: result.clip.fraction,
        ms: result.wall_ms,
    }];
    if let Some(b) = &result.baseline {
        csv_rows.push(BenchRow {
            setup_id,
            image_id,
            k,
            method: "uncompensated".into(),
            psnr: b.psnr,
            rmse: b.rmse,
            ssim: b.ssim,
            de00: b.de00_mean,
            clip_frac: 0.0,
            ms: 0.0,
        });
    }
    append_rows(&out.join("metrics.csv"), &csv_rows)?;
    write_run_json(
        &out,
        Commands::Compensate(CompensateArgs {
            bundle: bundle_dir,
            image: image_path,
            out: out.clone(),
            ..args.clone()
        }),
    )?;

    let scored = if args.simulate { "captured" } else { "predicted" };
    println!(
        "{scored} vs desired: PSNR {:.2} dB  RMSE {:.5}  SSIM {:.4}  dE00 {:.3}",
        result.metrics.psnr, result.metrics.rmse, result.metrics.ssim, result.metrics.de00_mean
    );
    if let Some(b) = &result.baseline {
        println!(
            "uncompensated baseline: PSNR {:.2} dB  RMSE {:.5}  SSIM {:.4}  dE00 {:.3}",
            b.psnr, b.rmse, b.ssim, b.de00_mean
        );
        let de_change = if b.de00_mean > 0.0 {
            100.0 * (result.metrics.de00_mean - b.de00_mean) / b.de00_mean
        } else {
            0.0
        };
        println!(
            "gain: {:+.2} dB PSNR, {:+.1}% dE00",
            result.metrics.psnr - b.psnr,
            de_change
        );
    }
    println!(
        "clipped drive pixels: {:.2}%",
        100.0 * result.clip.fraction
    );
    println!("outputs in {}", out.display());
    Ok(())
}

pub(super) fn ablate(args: &AblateArgs) -> Result<(), CliError> {
    let mut ks = args.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(CliError::Usage("--ks must list at least one prior count".into()));
    }
    if let Some(bad) = ks.iter().copied().find(|&k| !matches!(k, 1 | 3 | 5)) {
        return Err(CliError::Usage(format!(
            "prior count {bad} is unsupported (choose from 1, 3, 5)"
        )));
    }
    if args.images == 0 {
        return Err(CliError::Usage("--images must be at least 1".into()));
    }
    let manifest = open_manifest(&args.dataset)?;
    let out = absolute(&args.out);
    ensure_dir(&out)?;

    #[derive(Default)]
    struct Agg {
        psnr: f64,
        rmse: f64,
        ssim: f64,
        de00: f64,
        clip: f64,
        samples: usize,
    }
    let mut agg: Vec<Agg> = ks.iter().map(|_| Agg::default()).collect();
    let mut bench_rows = Vec::new();

    for entry in &manifest.setups {
        let setup = manifest.load_setup(entry).map_err(CliError::run)?;
        let dir = manifest.setup_dir(entry);
        let n = args.images.min(entry.val);
        let mut images = Vec::with_capacity(n);
        for i in 0..n {
            let p = dir.join("val").join("prj").join(format!("{i:03}.png"));
            images.push(read_png(&p).map_err(CliError::run)?);
        }
        let t0 = Instant::now();
        let table = ablate_priors(&[setup], &ks, &images).map_err(CliError::run)?;
        let sweep_ms = t0.elapsed().as_secs_f64() * 1e3;
        for (slot, row) in table.rows.iter().enumerate() {
            bench_rows.push(BenchRow {
                setup_id: entry.setup_id.clone(),
                image_id: "mean".into(),
                k: row.k,
                method: "compensated".into(),
                psnr: row.psnr,
                rmse: row.rmse,
                ssim: row.ssim,
                de00: row.de00,
                clip_frac: row.clip_fraction,
                ms: sweep_ms,
            });
            let w = row.samples as f64;
            agg[slot].psnr += row.psnr * w;
            agg[slot].rmse += row.rmse * w;
            agg[slot].ssim += row.ssim * w;
            agg[slot].de00 += row.de00 * w;
            agg[slot].clip += row.clip_fraction * w;
            agg[slot].samples += row.samples;
        }
        println!(
            "{}: swept priors {:?} over {} images in {:.1}s",
            entry.setup_id,
            ks,
            n,
            sweep_ms / 1e3
        );
    }

    append_rows(&out.join("ablation.csv"), &bench_rows)?;
    let overall = AblationTable {
        rows: ks
            .iter()
            .zip(&agg)
            .map(|(&k, a)| {
                let w = a.samples.max(1) as f64;
                AblationRow {
                    k,
                    psnr: a.psnr / w,
                    rmse: a.rmse / w,
                    ssim: a.ssim / w,
                    de00: a.de00 / w,
                    clip_fraction: a.clip / w,
                    samples: a.samples,
                }
            })
            .collect(),
    };
    std::fs::write(out.join("summary.csv"), overall.to_csv())
        .map_err(|e| CliError::run(format!("{}: {e}", out.join("summary.csv").display())))?;
    write_run_json(
        &out,
        Commands::Ablate(AblateArgs {
            dataset: absolute(&args.dataset),
            out: out.clone(),
            ks: ks.clone(),
            images: args.images,
        }),
    )?;

    println!(
        "{:>3} {:>10} {:>11} {:>8} {:>8} {:>7} {:>8}",
        "k", "PSNR", "RMSE", "SSIM", "dE00", "clip%", "samples"
    );
    for r in &overall.rows {
        println!(
            "{:>3} {:>10.3} {:>11.6} {:>8.4} {:>8.3} {:>7.2} {:>8}",
            r.k,
            r.psnr,
            r.rmse,
            r.ssim,
            r.de00,
            100.0 * r.clip_fraction,
            r.samples
        );
    }
    println!(
        "mean PSNR strictly increases with prior count: {}",
        if overall.psnr_ordering_holds() { "yes" } else { "no" }
    );
    println!("rows written to {}", out.join("ablation.csv").display());
    Ok(())
}

pub(super) fn report(args: &ReportArgs) -> Result<(), CliError> {
    let csv_path = absolute(&args.csv);
    let rows = read_rows(&csv_path)?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "{} has no data rows",
            csv_path.display()
        )));
    }
    let out = absolute(&args.out);
    ensure_dir(&out)?;

    struct Group {
        label: String,
        psnr: f64,
        rmse: f64,
        ssim: f64,
        de00: f64,
        n: usize,
    }
    let mut buckets: BTreeMap<(String, usize), (f64, f64, f64, f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = buckets
            .entry((r.method.clone(), r.k))
            .or_insert((0.0, 0.0, 0.0, 0.0, 0));
        e.0 += r.psnr;
        e.1 += r.rmse;
        e.2 += r.ssim;
        e.3 += r.de00;
        e.4 += 1;
    }
    let groups: Vec<Group> = buckets
        .into_iter()
        .map(|((method, k), (psnr, rmse, ssim, de00, n))| {
            let short: String = method.to_uppercase().chars().take(6).collect();
            Group {
                label: format!("{short} K{k}"),
                psnr: psnr / n as f64,
                rmse: rmse / n as f64,
                ssim: ssim / n as f64,
                de00: de00 / n as f64,
                n,
            }
        })
        .collect();

    println!(
        "{:<16} {:>6} {:>10} {:>11} {:>8} {:>8}",
        "group", "rows", "PSNR", "RMSE", "SSIM", "dE00"
    );
    let mut summary = String::from("group,rows,psnr,rmse,ssim,de00\n");
    for g in &groups {
        println!(
            "{:<16} {:>6} {:>10.3} {:>11.6} {:>8.4} {:>8.3}",
            g.label, g.n, g.psnr, g.rmse, g.ssim, g.de00
        );
        summary.push_str(&format!(
            "{},{},{:.6},{:.8},{:.6},{:.6}\n",
            g.label, g.n, g.psnr, g.rmse, g.ssim, g.de00
        ));
    }
    std::fs::write(out.join("summary.csv"), summary)
        .map_err(|e| CliError::run(format!("{}: {e}", out.join("summary.csv").display())))?;

    let labels: Vec<String> = groups.iter().map(|g| g.label.clone()).collect();
    let charts: [(&str, fn(&Group) -> f64); 4] = [
        ("psnr", |g| g.psnr),
        ("rmse", |g| g.rmse),
        ("ssim", |g| g.ssim),
        ("de00", |g| g.de00),
    ];
    for (name, pick) in charts {
        let values: Vec<f64> = groups.iter().map(pick).collect();
        render_bar_chart(
            &format!("MEAN {} BY GROUP", name.to_uppercase()),
            &labels,
            &values,
            &out.join(format!("report_{name}.png")),
        )?;
    }
    write_run_json(
        &out,
        Commands::Report(ReportArgs {
            csv: csv_path,
            out: out.clone(),
        }),
    )?;
    println!("summary and charts written to {}", out.display());
    Ok(())
}

pub(super) fn rerun(args: &RerunArgs) -> Result<(), CliError> {
    let path = absolute(&args.run);
    let cfg = super::load_run(&path)?;
    if matches!(cfg.command, Commands::Rerun(_)) {
        return Err(CliError::Usage(
            "run record contains another rerun; nothing to execute".into(),
        ));
    }
    println!(
        "re-executing recorded {} run from {}",
        cfg.command.name(),
        path.display()
    );
    super::run(cfg.command)
}
