use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use melclean_core::audio::{read_wav, write_wav_f32};
use melclean_core::config::RunConfig;
use melclean_core::dsp::{log_mel, power_mel, Framing, MelFilterbank, StftEngine, EPS_OFFLINE, HOP_OFFLINE, N_FREQS};
use melclean_core::enhance::enhance_waveform;
use melclean_core::features::{filterbank, make_example, Example};
use melclean_core::metrics::{logmel_mae, lsd, si_sdr};
use melclean_core::model::{EnhancementModel, ModelConfig, Target};
use melclean_core::reconstruct::PhaseMode;
use melclean_core::stream::StreamSession;
use melclean_core::synth::{make_pair, Corpus, DemoCorpusSpec, SynthesisRecipe};
use melclean_core::train::{evaluate, TrainConfig, Trainer};
use melclean_core::Error;

use crate::{
    Cli, Command, DemoCorpusArgs, EvalArgs, InferArgs, PhaseArg, SpectrogramArgs, StreamArgs, SynthArgs, TrainArgs,
};

pub const SEED_ENV: &str = "MELCLEAN_SEED";

struct Ctx {
    config: RunConfig,
    seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = resolve_seed(cli.seed, config.seed)?;
    let ctx = Ctx { config, seed };
    match cli.command {
        Command::DemoCorpus(a) => demo_corpus(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Enhance(a) => enhance(&ctx, a.io),
        Command::Stream(a) => stream(&ctx, a),
        Command::Eval(a) => eval(a),
        Command::Spectrogram(a) => spectrogram(a),
    }
}

/// Flag, then config file, then the environment, then 0.
fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer")).into()),
        Err(_) => Ok(0),
    }
}

/// Maps `f` over `items` on up to `jobs` threads, keeping the input order.
fn par_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn demo_corpus(ctx: &Ctx, a: DemoCorpusArgs) -> Result<()> {
    let spec = DemoCorpusSpec { n_speech: a.n_speech, n_rir: a.n_rir, n_noise: a.n_noise, ..Default::default() };
    if spec.n_speech == 0 || spec.n_noise == 0 {
        return Err(Error::Config("a corpus needs at least one speech and one noise source".into()).into());
    }
    let manifest = Corpus::synthetic(ctx.seed, spec).write(&a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn recipes(ctx: &Ctx, corpus: &Corpus, seed: u64, n: usize, clip_ms: Option<u64>) -> Result<Vec<SynthesisRecipe>> {
    let mut ranges = ctx.config.recipe_ranges();
    if let Some(ms) = clip_ms {
        if ms == 0 {
            return Err(Error::Config("--clip-ms must be positive".into()).into());
        }
        ranges.clip_samples = Some(ms as usize * 16);
    }
    Ok(SynthesisRecipe::draw_many(seed, n, corpus, &ranges)?)
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let corpus = Corpus::from_manifest(&a.manifest)?;
    let recipes = recipes(ctx, &corpus, ctx.seed, a.n, a.clip_ms)?;
    fs::create_dir_all(&a.out)?;
    let ids: Vec<(String, &SynthesisRecipe)> =
        recipes.iter().enumerate().map(|(i, r)| (format!("pair{i:05}"), r)).collect();
    let results = par_map(a.jobs, &ids, |(id, r)| -> Result<()> {
        let pair = make_pair(r, &corpus)?;
        write_wav_f32(a.out.join(format!("{id}.noisy.wav")), &pair.noisy)?;
        write_wav_f32(a.out.join(format!("{id}.clean.wav")), &pair.clean)?;
        Ok(())
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    let mut log = String::new();
    for (id, r) in &ids {
        writeln!(log, "{}", serde_json::json!({ "id": id, "recipe": r }))?;
    }
    fs::write(a.out.join("recipes.jsonl"), log)?;
    eprintln!("wrote {} pairs to {}", ids.len(), a.out.display());
    Ok(())
}

fn examples(ctx: &Ctx, corpus: &Corpus, cfg: &ModelConfig, seed: u64, n: usize, clip_ms: Option<u64>, jobs: usize) -> Result<Vec<Example>> {
    let recipes = recipes(ctx, corpus, seed, n, clip_ms)?;
    let fb = filterbank(cfg);
    let engine = StftEngine::new();
    par_map(jobs, &recipes, |r| -> Result<Example> {
        let pair = make_pair(r, corpus)?;
        Ok(make_example(&engine, &pair, cfg, ctx.config.norm.k, &fb)?)
    })
    .into_iter()
    .collect()
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let mut run = ctx.config.clone();
    if let Some(p) = &a.preset {
        run.model.preset = p.clone();
    }
    let cfg = run.model_config(a.target.map(Target::from))?;
    let tc = TrainConfig {
        lr0: a.lr.unwrap_or(run.train.lr0),
        epochs: a.epochs.unwrap_or(run.train.epochs),
        max_steps: a.max_steps.or(run.train.max_steps),
        batch_size: a.batch_size.unwrap_or(run.train.batch_size),
        seed: ctx.seed,
        ..run.train.clone()
    };
    tc.validate()?;
    if a.n == 0 {
        return Err(Error::Config("--n must be positive".into()).into());
    }
    let corpus = Corpus::from_manifest(&a.manifest)?;
    let clip = a.clip_ms.or(run.synth.clip_ms);
    let train_set = examples(ctx, &corpus, &cfg, ctx.seed, a.n, clip, a.jobs)?;
    // Validation recipes come from a separate stream so they never repeat training pairs.
    let val_set = examples(ctx, &corpus, &cfg, ctx.seed ^ 0x5EED_0F_7A11, a.n_val, clip, a.jobs)?;

    let mut model = EnhancementModel::build(cfg, ctx.seed)?;
    eprintln!("training {} parameters on {} pairs ({} held out)", model.num_params(), train_set.len(), val_set.len());
    let report = Trainer::new(&mut model, tc, Some(&a.out))?.fit(&train_set, &val_set)?;
    let final_val = if val_set.is_empty() { None } else { Some(evaluate(&model, &val_set, 4)?) };
    model.save(
        a.out.join("final.ckpt"),
        serde_json::json!({ "steps": report.steps, "epochs": report.epochs, "val_loss": final_val, "seed": ctx.seed }),
    )?;
    let first = report.step_losses.first().copied().unwrap_or(f64::NAN);
    let last = report.step_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "steps {} epochs {} skipped {} loss {first:.5} -> {last:.5} val {}",
        report.steps,
        report.epochs,
        report.skipped,
        final_val.map(|v| format!("{v:.5}")).unwrap_or_else(|| "n/a".into())
    );
    println!("{}", a.out.join("final.ckpt").display());
    Ok(())
}

fn load_model(io: &InferArgs) -> Result<EnhancementModel> {
    let (model, _) = EnhancementModel::load(&io.checkpoint)?;
    if let Some(t) = io.target {
        let t = Target::from(t);
        if t != model.config.target {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint was trained for {:?}, --target asks for {t:?}",
                model.config.target
            ))
            .into());
        }
    }
    Ok(model)
}

fn phase(io: &InferArgs) -> PhaseMode {
    match io.phase {
        PhaseArg::Noisy => PhaseMode::Noisy,
        PhaseArg::Gl => PhaseMode::GriffinLim { iters: io.gl_iters },
    }
}

fn enhance(ctx: &Ctx, io: InferArgs) -> Result<()> {
    let model = load_model(&io)?;
    ctx.config.check_mode(model.config.mode)?;
    let noisy = read_wav(&io.input)?;
    let out = enhance_waveform(&model, &noisy, ctx.config.norm.k, phase(&io))?;
    write_wav_f32(&io.output, &out.waveform)?;
    Ok(())
}

fn stream(ctx: &Ctx, a: StreamArgs) -> Result<()> {
    let io = &a.io;
    if !(a.chunk_ms.is_finite() && a.chunk_ms > 0.0) {
        return Err(Error::Config(format!("--chunk-ms {} must be positive", a.chunk_ms)).into());
    }
    let model = load_model(io)?;
    ctx.config.check_mode(model.config.mode)?;
    let noisy = read_wav(&io.input)?;
    let chunk = ((a.chunk_ms * 16.0).round() as usize).max(1);
    let mut session = StreamSession::new(&model, ctx.config.norm.k)?;
    for part in noisy.chunks(chunk) {
        session.push(part)?;
    }
    session.finalize()?;
    write_wav_f32(&io.output, &session.waveform(phase(io))?)?;
    Ok(())
}

/// The id of a file: its name up to the first dot.
fn file_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")));
    files.sort();
    Ok(files)
}

/// Pairs reference and estimate files. Directories are matched by id; an
/// estimate directory may hold other files as long as each id is unique.
fn eval_pairs(reference: &Path, estimate: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    for p in [reference, estimate] {
        if !p.exists() {
            return Err(Error::NotFound(p.to_path_buf()).into());
        }
    }
    match (reference.is_dir(), estimate.is_dir()) {
        (false, false) => Ok(vec![(file_id(reference), reference.to_path_buf(), estimate.to_path_buf())]),
        (true, true) => {
            let estimates = wav_files(estimate)?;
            let mut out = Vec::new();
            for r in wav_files(reference)? {
                let id = file_id(&r);
                let hits: Vec<&PathBuf> = estimates.iter().filter(|e| file_id(e) == id).collect();
                match hits.as_slice() {
                    [e] => out.push((id, r, (*e).clone())),
                    [] => return Err(Error::NotFound(estimate.join(format!("{id}.*.wav"))).into()),
                    _ => {
                        return Err(Error::InvalidArgument(format!("several estimates share the id '{id}'")).into())
                    }
                }
            }
            if out.is_empty() {
                return Err(Error::EmptyInput("reference directory has no WAV files").into());
            }
            Ok(out)
        }
        _ => Err(Error::InvalidArgument("--reference and --estimate must both be files or both directories".into()).into()),
    }
}

struct Scores {
    logmel_mae: f64,
    lsd: f64,
    si_sdr: f64,
}

fn score(engine: &StftEngine, fb: &MelFilterbank, reference: &[f64], estimate: &[f64]) -> melclean_core::Result<Scores> {
    let n = reference.len().min(estimate.len());
    let (r, e) = (&reference[..n], &estimate[..n]);
    let sr = engine.stft(r, HOP_OFFLINE, Framing::Centered)?;
    let se = engine.stft(e, HOP_OFFLINE, Framing::Centered)?;
    let mae = logmel_mae(&log_mel(&power_mel(&se, fb)?, EPS_OFFLINE)?, &log_mel(&power_mel(&sr, fb)?, EPS_OFFLINE)?)?;
    let mag = |s: &melclean_core::dsp::ComplexSpectrogram| s.frames().flatten().map(|c| c.norm()).collect::<Vec<f64>>();
    Ok(Scores { logmel_mae: mae, lsd: lsd(&mag(&se), &mag(&sr), N_FREQS)?, si_sdr: si_sdr(e, r)? })
}

fn eval(a: EvalArgs) -> Result<()> {
    let pairs = eval_pairs(&a.reference, &a.estimate)?;
    let fb = MelFilterbank::new();
    let engine = StftEngine::new();
    let scores = par_map(a.jobs, &pairs, |(id, r, e)| -> Result<Scores> {
        let s = score(&engine, &fb, &read_wav(r)?, &read_wav(e)?).with_context(|| format!("scoring {id}"))?;
        Ok(s)
    });
    let mut csv = String::from("id,logmel_mae,lsd,si_sdr\n");
    let mut sum = [0.0; 3];
    for ((id, _, _), s) in pairs.iter().zip(scores) {
        let s = s?;
        writeln!(csv, "{id},{:.6},{:.6},{:.4}", s.logmel_mae, s.lsd, s.si_sdr)?;
        sum[0] += s.logmel_mae;
        sum[1] += s.lsd;
        sum[2] += s.si_sdr;
    }
    let n = pairs.len() as f64;
    writeln!(csv, "mean,{:.6},{:.6},{:.4}", sum[0] / n, sum[1] / n, sum[2] / n)?;
    match &a.out {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// Gray levels for a frame-major logMel: one row per band with the highest
/// band on top, `ln eps` black and the maximum white.
pub fn spectrogram_pixels(logmel: &[f64], n_bands: usize, eps: f64) -> Vec<u8> {
    let t = logmel.len() / n_bands;
    let lo = eps.ln();
    let hi = logmel.iter().copied().fold(lo, f64::max);
    let range = hi - lo;
    let mut px = vec![0u8; t * n_bands];
    for m in 0..n_bands {
        let row = n_bands - 1 - m;
        for f in 0..t {
            let v = if range > 0.0 { (logmel[f * n_bands + m] - lo) / range } else { 0.0 };
            px[row * t + f] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    px
}

fn spectrogram(a: SpectrogramArgs) -> Result<()> {
    if !(a.eps.is_finite() && a.eps > 0.0) {
        return Err(Error::Config(format!("--eps {} must be positive", a.eps)).into());
    }
    let x = read_wav(&a.input)?;
    let fb = MelFilterbank::new();
    let spec = StftEngine::new().stft(&x, HOP_OFFLINE, Framing::Centered)?;
    let lm = log_mel(&power_mel(&spec, &fb)?, a.eps)?;
    let px = spectrogram_pixels(lm.data(), lm.n_bands(), a.eps);
    let file = fs::File::create(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), lm.n_frames() as u32, lm.n_bands() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header()?;
    w.write_image_data(&px)?;
    w.finish()?;
    Ok(())
}
