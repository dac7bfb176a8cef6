//! Command-line harness: self-tests, complexity and runtime benchmarks,
//! video encoding, zero-shot classification, knowledge-graph prompt
//! building, and toy training.
//!
//! Exit codes: 0 success, 1 invariant failure, 2 configuration or usage
//! error, 3 I/O error.

mod schema;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use indexmap::IndexMap;
use serde_json::{json, Value};

use stdd::alignment::{overall_score, score_t2v, score_v2t, zero_shot_predict, TextBank};
use stdd::askg::{
    build_action_graph, load_graph, save_graph, triples_to_prompts, validate_graph,
    FixtureClient, HttpClient, LlmClient,
};
use stdd::bench;
use stdd::config::RunConfig;
use stdd::encoder::{EncoderConfig, Model, WeightMap};
use stdd::synth::load_video_frames;
use stdd::tensor::{load_arrays, save_arrays, Array, Real, Tape};
use stdd::{Error, Result};

#[derive(Parser)]
#[command(name = "stdd", version, about = "Space-time video encoding toolkit")]
struct Cli {
    /// Plain-text key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Individual key=value overrides applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the gradient, collapse, mask-balance, and alignment checks.
    Selftest {
        /// Negative control: misalign mixed channel segments, which must
        /// make the collapse check fail.
        #[arg(long)]
        sabotage: bool,
        /// Write the JSON report here as well as printing per-check lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify measured attention pair counts against closed forms.
    BenchFlops {
        /// Number of random geometries to exercise.
        #[arg(long, default_value_t = 20)]
        configs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Render closed-form pair counts versus frame count as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Time the attention path over frame counts and fit scaling slopes.
    BenchRuntime {
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Render median wall-times versus frame count as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Encode stored videos to per-frame feature arrays.
    Encode {
        /// Weight file produced by `train-toy --save-weights`.
        #[arg(long)]
        weights: PathBuf,
        /// Directory of video directories (frame_NNNN.rgb files).
        #[arg(long)]
        videos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify stored videos against a text-embedding bank.
    Zeroshot {
        #[arg(long)]
        weights: PathBuf,
        /// Array file with one [prompts, d_model] unit-row array per class.
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        videos: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for encoding videos (timing-sensitive commands
        /// stay single-threaded).
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Knowledge-graph operations.
    #[command(subcommand)]
    Askg(AskgCmd),
    /// Gradient-descent sanity run on the two synthetic classes.
    TrainToy {
        #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: Real,
        #[arg(long, default_value_t = 10.0)]
        logit_scale: Real,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Render the loss curves as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Save the first seed's trained weights as an array file.
        #[arg(long)]
        save_weights: Option<PathBuf>,
        /// Save the prompt-embedding bank used for scoring.
        #[arg(long)]
        save_bank: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AskgCmd {
    /// Build action graphs from stored LLM responses or a live endpoint.
    Build {
        /// Directory of <slug>.stage1.txt / <slug>.stage2.txt responses.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Chat-completion endpoint URL (alternative to --fixtures).
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value = "gpt-4")]
        model: String,
        /// Environment variable holding the API key.
        #[arg(long, default_value = "LLM_API_KEY")]
        key_env: String,
        /// Cache live responses here as replayable fixtures.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        actions: Vec<String>,
        /// Number of objects to request per action.
        #[arg(long, default_value_t = 7)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive the spatial/temporal prompt bank from a stored graph.
    Prompts {
        #[arg(long)]
        graph: PathBuf,
        /// Sentence completions saved next to the graph by `build`.
        #[arg(long)]
        sentences: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::parse(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    for pair in &cli.overrides {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(Error::config(format!("--set expects key=value, got {pair:?}")));
        };
        cfg.set(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit_report(report: &Value, schema_text: &str, out: Option<&Path>) -> Result<()> {
    let schema: Value = serde_json::from_str(schema_text)?;
    schema::validate(&schema, report, "")
        .map_err(|e| Error::contract(format!("report fails its schema at {e}")))?;
    let text = serde_json::to_string_pretty(report)?;
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

/// Frame indices for one uniform-stride temporal view. Views differ by a
/// phase offset spread over the slack left after striding; short videos
/// clamp to the last frame (a single frame repeats).
fn sample_clip(total: usize, frames: usize, view: usize, views: usize) -> Vec<usize> {
    let stride = (total / frames).max(1);
    let span = (frames - 1) * stride + 1;
    let slack = total.saturating_sub(span);
    let phase = if views > 1 { view * slack / (views - 1) } else { slack / 2 };
    (0..frames)
        .map(|i| (phase + i * stride).min(total.saturating_sub(1)))
        .collect()
}

fn take_frames(video: &Array, indices: &[usize]) -> Result<Array> {
    let shape = video.shape();
    if shape.len() != 4 {
        return Err(Error::dim(format!("video rank {} != 4", shape.len())));
    }
    let frame_len = shape[1] * shape[2] * shape[3];
    let mut data = Vec::with_capacity(indices.len() * frame_len);
    for &i in indices {
        data.extend_from_slice(&video.data()[i * frame_len..(i + 1) * frame_len]);
    }
    Array::new(vec![indices.len(), shape[1], shape[2], shape[3]], data)
}

/// Sorted (name, frames) pairs: every subdirectory of `root` holding
/// .rgb files, or `root` itself if it holds them directly.
fn enumerate_videos(root: &Path) -> Result<Vec<(String, Array)>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        dirs.push(root.to_path_buf());
    }
    let mut out = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        out.push((name, load_video_frames(&dir)?));
    }
    Ok(out)
}

fn encode_clip(cfg: &EncoderConfig, weights: &WeightMap, clip: &Array) -> Result<Vec<Real>> {
    let tape = Tape::new();
    let model = Model::bind(&tape, cfg, weights, false)?;
    Ok(model.encode_video(clip)?.value())
}

/// Score one video against the bank over all temporal views.
fn classify_video(
    cfg: &EncoderConfig,
    weights: &WeightMap,
    bank: &TextBank,
    video: &Array,
    views: usize,
    logit_scale: Real,
) -> Result<(usize, Vec<Real>)> {
    let total = video.shape()[0];
    let mut view_scores = Vec::with_capacity(views);
    for view in 0..views {
        let clip = take_frames(video, &sample_clip(total, cfg.frames, view, views))?;
        let tape = Tape::new();
        let model = Model::bind(&tape, cfg, weights, false)?;
        let z = vec![model.encode_video(&clip)?];
        let banks = bank.bind(&tape);
        let scores = overall_score(
            &score_v2t(&z, &banks, logit_scale)?,
            &score_t2v(&z, &banks, logit_scale)?,
        )?;
        view_scores.push(scores.value());
    }
    zero_shot_predict(&view_scores)
}

fn cmd_selftest(sabotage: bool, out: Option<&Path>) -> Result<bool> {
    let checks = bench::selftest(sabotage);
    for c in &checks {
        println!(
            "{} {} — {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let pass = checks.iter().all(|c| c.pass);
    let report = json!({
        "kind": "selftest",
        "checks": checks
            .iter()
            .map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail}))
            .collect::<Vec<_>>(),
        "pass": pass,
    });
    if out.is_some() {
        emit_report(&report, include_str!("../schemas/selftest.schema.json"), out)?;
    }
    Ok(pass)
}

fn cmd_bench_flops(seed: u64, configs: usize, out: Option<&Path>, svg: Option<&Path>) -> Result<bool> {
    let report = bench::flops_report(seed, configs)?;
    emit_report(&report, include_str!("../schemas/bench_flops.schema.json"), out)?;
    if let Some(path) = svg {
        // Closed-form counts versus frame count at the default geometry.
        let frames = [4usize, 8, 16, 32];
        let mut series = Vec::new();
        for variant in ["spatial_only", "stca", "factorized", "full_spacetime"] {
            let ys = frames
                .iter()
                .map(|&t| {
                    let cfg = EncoderConfig {
                        frames: t,
                        variant: stdd::encoder::Variant::parse(variant)?,
                        ..EncoderConfig::default()
                    };
                    Ok(stdd::encoder::closed_form_pairs(&cfg)? as f64)
                })
                .collect::<Result<Vec<f64>>>()?;
            series.push((variant, ys));
        }
        let xs: Vec<f64> = frames.iter().map(|&t| t as f64).collect();
        fs::write(path, bench::svg_line_chart("attention pair counts vs frames", &xs, &series))?;
    }
    Ok(report["pass"].as_bool().unwrap_or(false))
}

fn cmd_bench_runtime(repeats: usize, out: Option<&Path>, svg: Option<&Path>) -> Result<bool> {
    if cfg!(debug_assertions) {
        eprintln!("warning: unoptimized build; timings will be noisy");
    }
    let report = bench::runtime_report(repeats)?;
    emit_report(&report, include_str!("../schemas/bench_runtime.schema.json"), out)?;
    if let Some(path) = svg {
        let mut xs = Vec::new();
        let mut series = Vec::new();
        for entry in report["series"].as_array().into_iter().flatten() {
            xs = entry["frames"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(Value::as_u64)
                .map(|v| v as f64)
                .collect();
            let ys: Vec<f64> = entry["median_seconds"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(Value::as_f64)
                .collect();
            series.push((entry["variant"].as_str().unwrap_or("?").to_string(), ys));
        }
        let named: Vec<(&str, Vec<f64>)> =
            series.iter().map(|(n, ys)| (n.as_str(), ys.clone())).collect();
        fs::write(path, bench::svg_line_chart("attention seconds vs frames", &xs, &named))?;
    }
    Ok(report["pass"].as_bool().unwrap_or(false))
}

fn cmd_encode(cfg: &RunConfig, weights: &Path, videos: &Path, out: &Path) -> Result<()> {
    let weights = load_arrays(weights)?;
    let mut features = IndexMap::new();
    for (name, video) in enumerate_videos(videos)? {
        let total = video.shape()[0];
        let clip = take_frames(&video, &sample_clip(total, cfg.encoder.frames, 0, 1))?;
        let values = encode_clip(&cfg.encoder, &weights, &clip)?;
        features.insert(
            name,
            Array::new(vec![cfg.encoder.frames, cfg.encoder.d_model], values)?,
        );
    }
    save_arrays(out, &features)?;
    println!("encoded {} videos -> {}", features.len(), out.display());
    Ok(())
}

fn cmd_zeroshot(
    cfg: &RunConfig,
    weights: &Path,
    bank: &Path,
    videos: &Path,
    out: Option<&Path>,
    threads: usize,
) -> Result<()> {
    let weights = load_arrays(weights)?;
    let bank_arrays = load_arrays(bank)?;
    let classes: Vec<String> = bank_arrays.keys().cloned().collect();
    let bank = TextBank::new(bank_arrays.values().cloned().collect())?;
    let videos = enumerate_videos(videos)?;
    let views = cfg.temporal_views;
    let logit_scale = cfg.loss.logit_scale;

    let results: Vec<Result<(usize, Vec<Real>)>> = if threads <= 1 {
        videos
            .iter()
            .map(|(_, v)| classify_video(&cfg.encoder, &weights, &bank, v, views, logit_scale))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let chunk = videos.len().div_ceil(threads);
            let handles: Vec<_> = videos
                .chunks(chunk.max(1))
                .map(|part| {
                    let (weights, bank, cfg) = (&weights, &bank, &cfg.encoder);
                    scope.spawn(move || {
                        part.iter()
                            .map(|(_, v)| classify_video(cfg, weights, bank, v, views, logit_scale))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        })
    };

    let mut predictions = Vec::with_capacity(videos.len());
    for ((name, _), result) in videos.iter().zip(results) {
        let (predicted, scores) = result?;
        predictions.push(json!({
            "video": name,
            "predicted": predicted,
            "class": classes[predicted],
            "scores": scores,
        }));
    }
    let report = json!({
        "kind": "zeroshot",
        "classes": classes,
        "temporal_views": views,
        "predictions": predictions,
    });
    emit_report(&report, include_str!("../schemas/zeroshot.schema.json"), out)
}

fn cmd_askg_build(args: &AskgCmd) -> Result<()> {
    let AskgCmd::Build { fixtures, endpoint, model, key_env, cache, actions, k, out } = args
    else {
        unreachable!()
    };
    let client: Box<dyn LlmClient> = match (fixtures, endpoint) {
        (Some(dir), _) => Box::new(FixtureClient::new(dir.clone())),
        (None, Some(url)) => Box::new(HttpClient::new(url.clone(), model.clone(), key_env, cache.clone())),
        (None, None) => {
            return Err(Error::config(
                "askg build needs --fixtures or --endpoint".to_string(),
            ))
        }
    };
    if actions.is_empty() {
        return Err(Error::config("askg build needs --actions".to_string()));
    }
    let mut violations = 0usize;
    for action in actions {
        let (graph, sentences, warnings) = build_action_graph(client.as_ref(), action, *k)?;
        for w in &warnings {
            eprintln!("warning: {action}: {w}");
        }
        let report = validate_graph(&graph);
        for v in &report.violations {
            eprintln!("violation: {action}: {v}");
            violations += 1;
        }
        let path = save_graph(out, &graph)?;
        let sentences_path = out.join(format!(
            "{}.sentences.json",
            stdd::askg::action_slug(action)
        ));
        fs::write(&sentences_path, serde_json::to_string_pretty(&sentences)?)?;
        println!("{action}: wrote {} and {}", path.display(), sentences_path.display());
    }
    if violations > 0 {
        return Err(Error::validation(format!("{violations} graph violations")));
    }
    Ok(())
}

fn cmd_askg_prompts(graph: &Path, sentences: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let graph = load_graph(graph)?;
    let sentences: IndexMap<String, String> = match sentences {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => IndexMap::new(),
    };
    let bank = triples_to_prompts(&graph, &sentences);
    let text = serde_json::to_string_pretty(&bank.to_json())?;
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_toy(
    seeds: &[u64],
    steps: usize,
    lr: Real,
    logit_scale: Real,
    out: Option<&Path>,
    svg: Option<&Path>,
    save_weights: Option<&Path>,
    save_bank: Option<&Path>,
) -> Result<bool> {
    let mut runs = Vec::new();
    let mut curves = Vec::new();
    let mut pass = true;
    for (i, &seed) in seeds.iter().enumerate() {
        let (losses, weights, bank) = bench::train_toy(seed, steps, lr, logit_scale)?;
        let initial = losses[0];
        let last = *losses.last().expect("at least the initial loss");
        let reduction = 1.0 - last / initial;
        pass &= reduction >= 0.5;
        println!("seed {seed}: ce {initial:.4} -> {last:.4} ({:.1}% reduction)", reduction * 100.0);
        runs.push(json!({
            "seed": seed,
            "initial_ce": initial,
            "final_ce": last,
            "reduction": reduction,
            "losses": losses,
        }));
        curves.push((format!("seed {seed}"), losses.iter().map(|&v| v as f64).collect::<Vec<_>>()));
        if i == 0 {
            if let Some(path) = save_weights {
                save_arrays(path, &weights)?;
            }
            if let Some(path) = save_bank {
                let mut arrays = IndexMap::new();
                for k in 0..bank.num_classes() {
                    arrays.insert(format!("class{k}"), bank.class(k).clone());
                }
                save_arrays(path, &arrays)?;
            }
        }
    }
    let report = json!({
        "kind": "train_toy",
        "steps": steps,
        "lr": lr,
        "logit_scale": logit_scale,
        "runs": runs,
        "pass": pass,
    });
    emit_report(&report, include_str!("../schemas/train_toy.schema.json"), out)?;
    if let Some(path) = svg {
        let xs: Vec<f64> = (0..=steps).map(|s| s as f64).collect();
        let named: Vec<(&str, Vec<f64>)> =
            curves.iter().map(|(n, ys)| (n.as_str(), ys.clone())).collect();
        fs::write(path, bench::svg_line_chart("cross-entropy vs step", &xs, &named))?;
    }
    Ok(pass)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.cmd {
        Cmd::Selftest { sabotage, out } => cmd_selftest(*sabotage, out.as_deref()),
        Cmd::BenchFlops { configs, seed, out, svg } => {
            cmd_bench_flops(*seed, *configs, out.as_deref(), svg.as_deref())
        }
        Cmd::BenchRuntime { repeats, out, svg } => {
            cmd_bench_runtime(*repeats, out.as_deref(), svg.as_deref())
        }
        Cmd::Encode { weights, videos, out } => {
            let cfg = load_config(cli)?;
            cmd_encode(&cfg, weights, videos, out).map(|()| true)
        }
        Cmd::Zeroshot { weights, bank, videos, out, threads } => {
            let cfg = load_config(cli)?;
            cmd_zeroshot(&cfg, weights, bank, videos, out.as_deref(), *threads).map(|()| true)
        }
        Cmd::Askg(sub) => match sub {
            AskgCmd::Build { .. } => cmd_askg_build(sub).map(|()| true),
            AskgCmd::Prompts { graph, sentences, out } => {
                cmd_askg_prompts(graph, sentences.as_deref(), out.as_deref()).map(|()| true)
            }
        },
        Cmd::TrainToy { seeds, steps, lr, logit_scale, out, svg, save_weights, save_bank } => {
            cmd_train_toy(
                seeds,
                *steps,
                *lr,
                *logit_scale,
                out.as_deref(),
                svg.as_deref(),
                save_weights.as_deref(),
                save_bank.as_deref(),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Parse(_) => 2,
                Error::Io(_) | Error::Json(_) | Error::Http(_) => 3,
                Error::Dimension(_) | Error::Contract(_) | Error::Validation(_) => 1,
            };
            ExitCode::from(code)
        }
    }
}
