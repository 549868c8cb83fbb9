//! Subcommand implementations.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use log::info;

use inn::classify::{evaluate, train_binary, train_multiclass, write_metrics_csv, ClassifierConfig, Head};
use inn::datasets::{filter_classes, load_idx_dir, load_image_dir, preprocess_idx, LabeledImageSet, Preprocess, Split};
use inn::igan::{export_grid, generate_images, pixel_diversity, train_gan, write_history_csv, GanConfig, GanLoss};
use inn::model::{read_checkpoint, write_checkpoint, NetworkArch};
use inn::optim::InitScheme;
use inn::qubo::{
    bench, brute_force_min, energies, is_exact, optimality_gap, sample_instance, solve_with_table, summarize,
    write_bench_csv, BenchConfig, QuboDistribution, QuboInstance, SolveConfig,
};
use inn::report::fmt_f64;
use inn::selftest::{gradient_suite, run_all, Check};

use crate::config::{Resolver, UsageError};
use crate::run::RunContext;
use crate::{
    ClassifyCommand, ClassifyEvalArgs, ClassifyTrainArgs, Cli, Command, DataArgs, Failure, GanCommand, GanSampleArgs,
    GanTrainArgs, QuboBenchArgs, QuboCommand, QuboSolveArgs, SolverArgs,
};

type Outcome = Result<ExitCode, Failure>;

fn usage<E: Display>(e: E) -> UsageError {
    UsageError(e.to_string())
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Qubo(QuboCommand::Bench(_)) => "qubo bench",
        Command::Qubo(QuboCommand::Solve(_)) => "qubo solve",
        Command::Classify(ClassifyCommand::Train(_)) => "classify train",
        Command::Classify(ClassifyCommand::Eval(_)) => "classify eval",
        Command::Gan(GanCommand::Train(_)) => "gan train",
        Command::Gan(GanCommand::Sample(_)) => "gan sample",
        Command::Gradcheck => "gradcheck",
        Command::Selftest => "selftest",
    }
}

pub fn dispatch(cli: &Cli, threads: usize) -> Outcome {
    let name = command_name(&cli.command);
    let mut ctx = RunContext::new(&cli.global, name, threads)?;
    info!(
        "inn {name}: seed {} threads {threads} out {}",
        ctx.seed,
        ctx.out_dir.display()
    );
    let c = &mut ctx;
    let code = match &cli.command {
        Command::Qubo(QuboCommand::Bench(a)) => qubo_bench(c, a),
        Command::Qubo(QuboCommand::Solve(a)) => qubo_solve(c, a),
        Command::Classify(ClassifyCommand::Train(a)) => classify_train(c, a),
        Command::Classify(ClassifyCommand::Eval(a)) => classify_eval(c, a),
        Command::Gan(GanCommand::Train(a)) => gan_train(c, a),
        Command::Gan(GanCommand::Sample(a)) => gan_sample(c, a),
        Command::Gradcheck => gradcheck(c),
        Command::Selftest => selftest(c),
    }?;
    let manifest = ctx.write_manifest()?;
    info!("wrote {}", manifest.display());
    Ok(code)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn parse_arch(text: &str) -> Result<NetworkArch, UsageError> {
    NetworkArch::parse(text).map_err(usage)
}

fn solver_config(s: &mut Resolver, a: &SolverArgs, seed: u64) -> Result<SolveConfig, UsageError> {
    let d = SolveConfig::default();
    let init = s.value("qubo.init", a.init.clone(), d.init.name().to_string())?;
    Ok(SolveConfig {
        depth: s.value("qubo.depth", a.depth, d.depth)?,
        epochs: s.value("qubo.epochs", a.epochs, d.epochs)?,
        lr: s.value("qubo.lr", a.lr, d.lr)?,
        betas: (
            s.value("qubo.beta1", a.beta1, d.betas.0)?,
            s.value("qubo.beta2", a.beta2, d.betas.1)?,
        ),
        seed,
        init: InitScheme::parse(&init).map_err(usage)?,
    })
}

fn distribution(s: &mut Resolver, flag: &Option<String>) -> Result<QuboDistribution, UsageError> {
    let name = s.value("qubo.dist", flag.clone(), "uniform".to_string())?;
    QuboDistribution::parse(&name).map_err(usage)
}

fn qubo_bench(ctx: &mut RunContext, a: &QuboBenchArgs) -> Outcome {
    let seed = ctx.seed;
    let s = &mut ctx.settings;
    let cfg = BenchConfig {
        distribution: distribution(s, &a.dist)?,
        n: s.value("qubo.n", a.n, 12usize)?,
        instances: s.value("qubo.instances", a.instances, 100usize)?,
        seed,
        solve: solver_config(s, &a.solver, seed)?,
    };
    let out_name = s.value("qubo.out", a.out.clone(), "results.csv".to_string())?;
    let out = ctx.artifact(&out_name)?;
    if cfg.instances == 0 {
        return Err(UsageError("--instances must be positive".into()).into());
    }
    let rows = bench(&cfg)?;
    let mut w = create(&out)?;
    write_bench_csv(&rows, &mut w, !ctx.omit_timing)?;
    w.flush()?;
    let sum = summarize(&rows);
    println!(
        "{} instances, {} n={}: exact {}/{} ({:.1}%), mean gap {:.3}%, max gap {:.3}%{}",
        sum.instances,
        cfg.distribution.name(),
        cfg.n,
        sum.exact_hits,
        sum.instances,
        100.0 * sum.exact_rate(),
        sum.mean_gap,
        sum.max_gap,
        if sum.gap_undefined > 0 {
            format!(" ({} with E_min = 0 excluded from gaps)", sum.gap_undefined)
        } else {
            String::new()
        }
    );
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

/// Whitespace-separated square matrix, row-major.
fn read_matrix(path: &Path) -> Result<QuboInstance, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let values = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| UsageError(format!("{}: bad number {t:?}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = (values.len() as f64).sqrt().round() as usize;
    if n * n != values.len() {
        return Err(UsageError(format!(
            "{}: {} entries is not a square matrix",
            path.display(),
            values.len()
        ))
        .into());
    }
    Ok(QuboInstance::new(n, values).map_err(usage)?)
}

fn qubo_solve(ctx: &mut RunContext, a: &QuboSolveArgs) -> Outcome {
    let seed = ctx.seed;
    let s = &mut ctx.settings;
    let matrix = s.optional("qubo.matrix", a.matrix.as_ref().map(|p| p.display().to_string()))?;
    let inst = match matrix {
        Some(p) => read_matrix(Path::new(&p))?,
        None => {
            let dist = distribution(s, &a.dist)?;
            let n = s.value("qubo.n", a.n, 12usize)?;
            sample_instance(dist, n, seed).map_err(usage)?
        }
    };
    let cfg = solver_config(s, &a.solver, seed)?;
    let table = energies(&inst);
    let sol = solve_with_table(&inst, &table, &cfg)?;
    let (e_min, j_min) = brute_force_min(&table);
    let n = inst.n();

    let mut hist = create(&ctx.artifact("history.csv")?)?;
    writeln!(hist, "epoch,energy")?;
    for (e, v) in sol.history.iter().enumerate() {
        writeln!(hist, "{e},{}", fmt_f64(*v))?;
    }
    hist.flush()?;

    let gap = match optimality_gap(sol.energy, e_min) {
        Ok(g) => fmt_f64(g),
        Err(_) => "undefined".to_string(),
    };
    let report = format!(
        "n = {n}\nx_sol = {:0n$b}\nE_sol = {}\nfinal_expectation = {}\nx_min = {:0n$b}\nE_min = {}\nexact_hit = {}\ngap_percent = {gap}\n",
        sol.j_sol,
        fmt_f64(sol.energy),
        fmt_f64(sol.final_expectation),
        j_min,
        fmt_f64(e_min),
        is_exact(sol.energy, e_min),
    );
    fs::write(ctx.artifact("solution.txt")?, &report)?;
    print!("{report}");
    Ok(ExitCode::SUCCESS)
}

/// `mnist` and `fashion` map to `data/<name>`; anything else is a path.
fn resolve_data_dir(
    s: &mut Resolver,
    key_dataset: &str,
    key_dir: &str,
    a_dataset: &Option<String>,
    a_dir: &Option<PathBuf>,
) -> Result<(String, PathBuf), UsageError> {
    let dataset = s.value(key_dataset, a_dataset.clone(), "mnist".to_string())?;
    let default_dir = match dataset.as_str() {
        "mnist" | "fashion" => format!("data/{dataset}"),
        other => other.to_string(),
    };
    let dir = s.value(key_dir, a_dir.as_ref().map(|p| p.display().to_string()), default_dir)?;
    Ok((dataset, PathBuf::from(dir)))
}

/// `all` or a comma-separated list of class labels.
fn parse_classes(text: &str) -> Result<Option<Vec<usize>>, UsageError> {
    if text == "all" {
        return Ok(None);
    }
    let classes = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| UsageError(format!("bad class label {t:?} in --classes")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if classes.len() < 2 {
        return Err(UsageError("--classes needs at least two labels".into()));
    }
    let mut seen = classes.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != classes.len() {
        return Err(UsageError("--classes lists a label twice".into()));
    }
    Ok(Some(classes))
}

struct ClassifyData {
    dir: PathBuf,
    classes: Vec<usize>,
    preprocess: Preprocess,
    test_limit: Option<usize>,
}

fn classify_data(s: &mut Resolver, a: &DataArgs) -> Result<ClassifyData, UsageError> {
    let (_, dir) = resolve_data_dir(s, "classify.dataset", "classify.data_dir", &a.dataset, &a.data_dir)?;
    let classes = parse_classes(&s.value("classify.classes", a.classes.clone(), "all".to_string())?)?;
    let size = s.value("classify.size", a.size, 16usize)?;
    if size == 0 {
        return Err(UsageError("--size must be positive".into()));
    }
    let crop = s.switch("classify.crop", a.crop)?;
    let test_limit = s.optional("classify.test_limit", a.test_limit)?;
    Ok(ClassifyData {
        dir,
        classes: classes.unwrap_or_else(|| (0..10).collect()),
        preprocess: Preprocess {
            height: size,
            width: size,
            crop,
        },
        test_limit,
    })
}

fn load_split(data: &ClassifyData, split: Split, limit: Option<usize>) -> Result<LabeledImageSet, Failure> {
    let raw =
        load_idx_dir(&data.dir, split).with_context(|| format!("cannot load IDX data from {}", data.dir.display()))?;
    let set = preprocess_idx(&raw, &data.preprocess)?;
    let mut set = filter_classes(&set, &data.classes)?;
    if let Some(n) = limit {
        set.truncate(n);
    }
    Ok(set)
}

fn classify_train(ctx: &mut RunContext, a: &ClassifyTrainArgs) -> Outcome {
    let seed = ctx.seed;
    let s = &mut ctx.settings;
    let data = classify_data(s, &a.data)?;
    let c = data.classes.len();
    let binary = c == 2;
    let pixels = data.preprocess.height * data.preprocess.width;
    let base = if binary {
        ClassifierConfig::binary()
    } else {
        ClassifierConfig::multiclass(c)
    };
    let default_arch = if binary {
        NetworkArch::new(vec![pixels, 1], vec![2])
    } else {
        NetworkArch::new(vec![pixels, 64, c], vec![2, 2])
    }
    .map_err(usage)?;
    let arch = parse_arch(&s.value("classify.arch", a.arch.clone(), default_arch.to_string())?)?;
    let init = s.value("classify.init", a.init.clone(), base.init.name().to_string())?;
    let cfg = ClassifierConfig {
        arch,
        lr: s.value("classify.lr", a.lr, base.lr)?,
        betas: (
            s.value("classify.beta1", a.beta1, base.betas.0)?,
            s.value("classify.beta2", a.beta2, base.betas.1)?,
        ),
        batch_size: s.value("classify.batch_size", a.batch_size, base.batch_size)?,
        epochs: s.value("classify.epochs", a.epochs, base.epochs)?,
        seed,
        head: base.head,
        init: InitScheme::parse(&init).map_err(usage)?,
        encoding: base.encoding,
    };
    cfg.validate().map_err(usage)?;
    if cfg.arch.input_dim() != pixels {
        return Err(UsageError(format!(
            "architecture input {} does not match {pixels} pixels",
            cfg.arch.input_dim()
        ))
        .into());
    }
    if !binary && cfg.arch.output_dim() != c {
        return Err(UsageError(format!(
            "architecture output {} does not match {c} classes",
            cfg.arch.output_dim()
        ))
        .into());
    }
    let train_limit = s.optional("classify.train_limit", a.train_limit)?;

    let train = load_split(&data, Split::Train, train_limit)?;
    let test = load_split(&data, Split::Test, data.test_limit)?;
    info!(
        "{} training and {} test images, classes {:?}",
        train.len(),
        test.len(),
        data.classes
    );
    let trained = if binary {
        train_binary(&cfg, &train, Some(&test))?
    } else {
        train_multiclass(&cfg, &train, Some(&test))?
    };

    let mut w = create(&ctx.artifact("metrics.csv")?)?;
    write_metrics_csv(&trained.history, &mut w)?;
    w.flush()?;
    write_checkpoint(&trained.network, &ctx.artifact("model.inn")?)?;
    let report = trained.report.as_ref().expect("test set given");
    let text = format!(
        "classes = {:?}\nhead = {}\n{}",
        data.classes,
        cfg.head.name(),
        report.render()
    );
    fs::write(ctx.artifact("report.txt")?, &text)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn classify_eval(ctx: &mut RunContext, a: &ClassifyEvalArgs) -> Outcome {
    let s = &mut ctx.settings;
    let checkpoint = s
        .optional(
            "classify.checkpoint",
            a.checkpoint.as_ref().map(|p| p.display().to_string()),
        )?
        .ok_or_else(|| UsageError("classify eval needs --checkpoint".into()))?;
    let data = classify_data(s, &a.data)?;
    let net = read_checkpoint(Path::new(&checkpoint))?;
    let head = if net.arch().output_dim() == 1 {
        Head::Binary
    } else {
        Head::Softmax
    };
    let expected = match head {
        Head::Binary => 2,
        Head::Softmax => net.arch().output_dim(),
    };
    if data.classes.len() != expected {
        return Err(UsageError(format!(
            "checkpoint has {expected} classes but --classes selects {}",
            data.classes.len()
        ))
        .into());
    }
    let pixels = data.preprocess.height * data.preprocess.width;
    if net.arch().input_dim() != pixels {
        return Err(UsageError(format!(
            "checkpoint input {} does not match {pixels} pixels",
            net.arch().input_dim()
        ))
        .into());
    }
    let test = load_split(&data, Split::Test, data.test_limit)?;
    let report = evaluate(&net, head, ClassifierConfig::binary().encoding, &test)?;
    let text = format!(
        "classes = {:?}\nhead = {}\n{}",
        data.classes,
        head.name(),
        report.render()
    );
    fs::write(ctx.artifact("report.txt")?, &text)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn gan_train(ctx: &mut RunContext, a: &GanTrainArgs) -> Outcome {
    let seed = ctx.seed;
    let s = &mut ctx.settings;
    let (_, dir) = resolve_data_dir(s, "gan.dataset", "gan.data_dir", &a.dataset, &a.data_dir)?;
    let digit = s.value("gan.digit", a.digit.clone(), "all".to_string())?;
    let digit = match digit.as_str() {
        "all" => None,
        d => Some(
            d.parse::<usize>()
                .map_err(|_| UsageError(format!("--digit must be 0-9 or all, got {d:?}")))?,
        ),
    };
    let size = s.value("gan.size", a.size, 20usize)?;
    if size == 0 {
        return Err(UsageError("--size must be positive".into()).into());
    }
    let px = size * size;
    let base = GanConfig::mnist();
    let arch_d = s.value("gan.arch_d", a.arch_d.clone(), format!("d={px},64,1;L=3,3"))?;
    let arch_g = s.value("gan.arch_g", a.arch_g.clone(), format!("d=8,64,{px};L=3,3"))?;
    let loss = s.value("gan.loss", a.loss.clone(), base.loss.name().to_string())?;
    let init = s.value("gan.init", a.init.clone(), base.init.name().to_string())?;
    let mut cfg = GanConfig {
        arch_d: parse_arch(&arch_d)?,
        arch_g: parse_arch(&arch_g)?,
        batch_size: s.value("gan.batch_size", a.batch_size, base.batch_size)?,
        epochs: s.value("gan.epochs", a.epochs, base.epochs)?,
        lr: s.value("gan.lr", a.lr, base.lr)?,
        betas: (
            s.value("gan.beta1", a.beta1, base.betas.0)?,
            s.value("gan.beta2", a.beta2, base.betas.1)?,
        ),
        data_size: 0,
        seed,
        init: InitScheme::parse(&init).map_err(usage)?,
        loss: GanLoss::parse(&loss).map_err(usage)?,
    };
    cfg.validate().map_err(usage)?;
    if cfg.arch_d.input_dim() != px {
        return Err(UsageError(format!(
            "discriminator input {} does not match {px} pixels",
            cfg.arch_d.input_dim()
        ))
        .into());
    }
    let count = s.value("gan.count", a.count, 64usize)?;
    let data_size_flag = s.optional("gan.data_size", a.data_size)?;

    let data = if dir.join("train-images-idx3-ubyte").is_file() {
        let raw =
            load_idx_dir(&dir, Split::Train).with_context(|| format!("cannot load IDX data from {}", dir.display()))?;
        let set = preprocess_idx(&raw, &Preprocess::resize(size, size))?;
        match digit {
            Some(d) => filter_classes(&set, &[d])?,
            None => set,
        }
    } else {
        if digit.is_some() {
            return Err(UsageError("--digit needs a labeled IDX dataset".into()).into());
        }
        load_image_dir(&dir, size, size).with_context(|| format!("cannot load images from {}", dir.display()))?
    };
    // Without an explicit value the default is capped at what is available.
    cfg.data_size = match data_size_flag {
        Some(n) => n,
        None => {
            let n = base.data_size.min(data.len());
            ctx.settings.value("gan.data_size", None, n)?
        }
    };
    info!("{} candidate images, training on {}", data.len(), cfg.data_size);

    let ckpt = ctx.subdir("checkpoints")?;
    let outcome = train_gan(&cfg, &data, Some(&ckpt))?;
    let mut w = create(&ctx.artifact("history.csv")?)?;
    write_history_csv(&outcome.history, &mut w)?;
    w.flush()?;

    let (rows, cols) = grid_shape(count, None, None)?;
    let plain = generate_images(&outcome.g, count, seed, false)?;
    let contrast = generate_images(&outcome.g, count, seed, true)?;
    write_grid(&plain, size, rows, cols, &ctx.artifact("samples.pgm")?)?;
    write_grid(&contrast, size, rows, cols, &ctx.artifact("samples_contrast.pgm")?)?;

    if let Some((l_d, l_g, p_real, p_fake)) = outcome.history.epoch_means(cfg.epochs.saturating_sub(1)) {
        println!(
            "final epoch: L_D={} L_G={} P_real={} P_fake={}",
            fmt_f64(l_d),
            fmt_f64(l_g),
            fmt_f64(p_real),
            fmt_f64(p_fake)
        );
    }
    println!("pixel diversity = {}", fmt_f64(pixel_diversity(&plain)));
    Ok(ExitCode::SUCCESS)
}

/// Grid rows and columns for `count` images: near-square by default.
fn grid_shape(count: usize, rows: Option<usize>, cols: Option<usize>) -> Result<(usize, usize), UsageError> {
    if count == 0 {
        return Err(UsageError("--count must be positive".into()));
    }
    let (r, c) = match (rows, cols) {
        (Some(r), Some(c)) => (r, c),
        (Some(r), None) => (r, count.div_ceil(r.max(1))),
        (None, Some(c)) => (count.div_ceil(c.max(1)), c),
        (None, None) => {
            let c = (count as f64).sqrt().ceil() as usize;
            (count.div_ceil(c), c)
        }
    };
    if r == 0 || c == 0 {
        return Err(UsageError("grid rows and columns must be positive".into()));
    }
    Ok((r, c))
}

/// Exports a square-tile grid; cells past the last image stay black.
fn write_grid(images: &[Vec<f64>], side: usize, rows: usize, cols: usize, path: &Path) -> Result<(), Failure> {
    let mut tiles = images.to_vec();
    tiles.resize(rows * cols, vec![-1.0; side * side]);
    export_grid(&tiles, side, side, rows, cols, path)?;
    Ok(())
}

fn gan_sample(ctx: &mut RunContext, a: &GanSampleArgs) -> Outcome {
    let seed = ctx.seed;
    let s = &mut ctx.settings;
    let checkpoint = s
        .optional("gan.checkpoint", a.checkpoint.as_ref().map(|p| p.display().to_string()))?
        .ok_or_else(|| UsageError("gan sample needs --checkpoint (a generator, e.g. checkpoints/G.inn)".into()))?;
    let count = s.value("gan.count", a.count, 64usize)?;
    let contrast = s.switch("gan.contrast", a.contrast)?;
    let rows = s.optional("gan.grid_rows", a.rows)?;
    let cols = s.optional("gan.grid_cols", a.cols)?;
    let (rows, cols) = grid_shape(count, rows, cols)?;
    let out_name = s.value("gan.out", a.out.clone(), "grid.pgm".to_string())?;
    let out = ctx.artifact(&out_name)?;

    let g = read_checkpoint(Path::new(&checkpoint))?;
    let px = g.arch().output_dim();
    let side = (px as f64).sqrt().round() as usize;
    if side * side != px {
        return Err(UsageError(format!("generator output {px} is not a square image")).into());
    }
    let images = generate_images(&g, count, seed, contrast)?;
    write_grid(&images, side, rows, cols, &out)?;
    println!(
        "{count} samples ({rows}x{cols} grid, {side}x{side} each), pixel diversity {}",
        fmt_f64(pixel_diversity(&images))
    );
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn report_checks(ctx: &RunContext, checks: &[Check], file: &str) -> Outcome {
    let mut text = String::new();
    for c in checks {
        text.push_str(&c.line());
        text.push('\n');
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    text.push_str(&format!("{} checks, {failed} failed\n", checks.len()));
    fs::write(ctx.artifact(file)?, &text)?;
    print!("{text}");
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn gradcheck(ctx: &mut RunContext) -> Outcome {
    let checks = gradient_suite(ctx.seed)?;
    let worst = checks.iter().map(|c| c.error).fold(0.0, f64::max);
    println!("max error = {worst:.3e}");
    report_checks(ctx, &checks, "gradcheck.txt")
}

fn selftest(ctx: &mut RunContext) -> Outcome {
    let checks = run_all(ctx.seed)?;
    report_checks(ctx, &checks, "selftest.txt")
}
