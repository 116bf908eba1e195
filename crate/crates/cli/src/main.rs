mod args;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, FiltersArgs, ManifestArgs, ScatterArgs, SignificanceArgs, SynthArgs, TrainArgs, TrainEvalArgs};
use stn_core::audio::{decode_audio, load_corpus, segment_track, Dataset, SEGMENT_LEN};
use stn_core::classify::ClassifierKind;
use stn_core::container::{write_bank, write_scattering};
use stn_core::pipeline::{
    default_experiments, extract_features, run_table, significance_maps, train_full, write_significance, Experiment,
    TableRun, TrainedModel,
};
use stn_core::scattering::Scatterer;
use stn_core::synth::{write_corpus, SynthConfig};
use stn_core::{Error, Result};

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Dimension { .. } => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Filters(a) => filters(a),
        Command::Scatter(a) => scatter(a),
        Command::TrainEval(a) => train_eval(a, cli.cache_dir.as_deref()),
        Command::Train(a) => train(a, cli.cache_dir.as_deref()),
        Command::Significance(a) => significance(a),
        Command::Manifest(a) => manifest(a),
        Command::Synth(a) => synth(a),
    }
}

fn cache_dir(flag: Option<&Path>, out_dir: &Path) -> PathBuf {
    flag.map_or_else(|| out_dir.join("cache"), Path::to_path_buf)
}

fn corpus(root: &Path) -> Result<Dataset> {
    let ds = load_corpus(root)?;
    if ds.is_empty() {
        return Err(Error::Data(format!("no audio tracks under {}", root.display())));
    }
    Ok(ds)
}

fn filters(a: &FiltersArgs) -> Result<()> {
    let cfg = a.scattering.config()?;
    let lens = cfg.signal_lengths(a.signal_len);
    std::fs::create_dir_all(&a.out_dir)?;
    for m in 0..cfg.num_layers() {
        let bank = cfg.bank_spec(m).build(lens[m])?;
        let stem = a.out_dir.join(format!("layer{}_{}", m + 1, cfg.family.name()));
        write_bank(BufWriter::new(File::create(stem.with_extension("gmwb"))?), &bank)?;
        bank.write_csv(BufWriter::new(File::create(stem.with_extension("csv"))?))?;
        println!(
            "layer {}: {} filters, N = {}, Q = {}, J = {} -> {}",
            m + 1,
            bank.num_scales(),
            bank.signal_len(),
            bank.quality(),
            bank.j_max(),
            stem.with_extension("gmwb").display()
        );
    }
    Ok(())
}

fn scatter(a: &ScatterArgs) -> Result<()> {
    let cfg = a.scattering.config()?;
    let track = decode_audio(&a.input, &a.decode.options())?;
    let segments = segment_track(&track)?;
    let scatterer = Scatterer::new(&cfg, SEGMENT_LEN)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let stem = a
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("track")
        .to_string();
    for seg in &segments {
        let out = scatterer.scatter(&seg.samples)?;
        let base = format!("{stem}_seg{:02}", seg.k);
        write_scattering(BufWriter::new(File::create(a.out_dir.join(format!("{base}.stnc")))?), &out)?;
        if a.csv {
            out.write_csv(BufWriter::new(File::create(a.out_dir.join(format!("{base}.csv")))?))?;
        }
    }
    let shapes: Vec<String> = (0..=cfg.num_layers())
        .map(|m| format!("{:?}", cfg.output_shapes(SEGMENT_LEN)[m]))
        .collect();
    println!("{} segments written to {} (shapes {})", segments.len(), a.out_dir.display(), shapes.join(" "));
    Ok(())
}

fn train_eval(a: &TrainEvalArgs, cache_flag: Option<&Path>) -> Result<()> {
    let cfg = a.scattering.config()?;
    let exp = a.experiment.config(ClassifierKind::Svm)?;
    let ds = corpus(&a.data_root)?;
    let experiments = match a.classifier {
        Some(c) => {
            let classifier: ClassifierKind = c.into();
            let name = match classifier {
                ClassifierKind::Svm => "SVM",
                ClassifierKind::Glmnet => "GLMNet",
            };
            vec![Experiment {
                name: format!("{}-{name}", cfg.family.name().to_uppercase()),
                family: cfg.family,
                classifier,
            }]
        }
        None => default_experiments(),
    };
    let layers: Vec<usize> = a.eval_layers.clone().unwrap_or_else(|| (1..=cfg.num_layers()).collect());
    if let Some(&bad) = layers.iter().find(|&&l| l == 0 || l > cfg.num_layers()) {
        return Err(Error::Config(format!("cannot evaluate layer {bad} with {} layers", cfg.num_layers())));
    }
    let cache = cache_dir(cache_flag, &a.out_dir);
    let decode = a.decode.options();
    let (table, _) = run_table(&TableRun {
        dataset: &ds,
        scattering: &cfg,
        experiments: &experiments,
        layers: &layers,
        exp: &exp,
        decode: &decode,
        cache_dir: Some(&cache),
        out_dir: Some(&a.out_dir),
    })?;
    print!("{}", table.render());
    Ok(())
}

fn train(a: &TrainArgs, cache_flag: Option<&Path>) -> Result<()> {
    let cfg = a.scattering.config()?;
    let exp = a.experiment.config(a.classifier.into())?;
    let layer = a.layer.unwrap_or(cfg.num_layers());
    if layer == 0 || layer > cfg.num_layers() {
        return Err(Error::Config(format!("--layer must be in 1..={}", cfg.num_layers())));
    }
    let ds = corpus(&a.data_root)?;
    let out_dir = a.model_dir.parent().unwrap_or(Path::new("."));
    let features = extract_features(&ds, &cfg, &a.decode.options(), Some(&cache_dir(cache_flag, out_dir)))?;
    let model = train_full(&features, &ds.labels(), &ds.genres, &cfg, layer, &exp)?;
    model.save(&a.model_dir)?;
    println!(
        "trained {} on {} tracks at layer {layer} with {} components -> {}",
        exp.classifier,
        ds.len(),
        model.pca.k(),
        a.model_dir.display()
    );
    Ok(())
}

fn significance(a: &SignificanceArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model_dir)?;
    let maps = significance_maps(&model)?;
    for m in maps.iter().filter(|m| m.degenerate) {
        eprintln!("warning: all coefficients for '{}' are zero; its grid is flat", m.genre);
    }
    for path in write_significance(&maps, &a.out_dir, a.clamp)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn manifest(a: &ManifestArgs) -> Result<()> {
    let ds = corpus(&a.data_root)?;
    match &a.output {
        Some(path) => ds.write_manifest(BufWriter::new(File::create(path)?), &a.decode.options()),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            ds.write_manifest(&mut lock, &a.decode.options())?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        tracks_per_genre: a.tracks_per_genre,
        duration_s: a.duration,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let ds = write_corpus(&a.out_dir, &cfg)?;
    println!("{} tracks in {} genres under {}", ds.len(), ds.genres.len(), a.out_dir.display());
    Ok(())
}
