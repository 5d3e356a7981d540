use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use semdist::codec::{
    amodal_mask, analyze_order, decode_levels, encode_semdist, modal_mask, DEFAULT_CONFIDENCE,
    DEFAULT_THRESHOLD,
};
use semdist::compositor::{generate, perturb, render, scene_stats, GenConfig, PerturbConfig};
use semdist::io::{
    encode_pgm, encode_pgm_mask, encode_ppm, read_semdist, write_annotations, write_scene, write_semdist,
    AnnotationSet,
};
use semdist::metrics::{evaluate, EvalImage, EvalOptions, MatchOptions, OrderOptions};
use semdist::ConfidencePolicy;

mod load;

use load::{load_document, Document};

#[derive(Parser)]
#[command(name = "semdist", version, about = "Sem-dist maps for amodal instance segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic layered scenes.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..=4096))]
        width: u32,
        #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..=4096))]
        height: u32,
        /// Inclusive object count range, e.g. 3..6.
        #[arg(long, default_value = "3..6", value_parser = parse_range)]
        objects: (usize, usize),
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
        max_levels: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one sem-dist map per instance of a scene.
    Encode {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CONFIDENCE as f64, value_parser = parse_open_unit)]
        confidence: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a sem-dist map into a PGM image.
    Decode {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_enum)]
        mode: DecodeMode,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = parse_open_unit)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decide which of two instances is in front.
    Order {
        #[arg(long)]
        map_a: PathBuf,
        #[arg(long)]
        map_b: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = parse_open_unit)]
        c: f64,
    },
    /// Degrade ground truth into synthetic predictions.
    Perturb {
        /// Scene or annotation JSON.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0)]
        erode: usize,
        #[arg(long, default_value_t = 0)]
        dilate: usize,
        #[arg(long, default_value_t = 0.0, value_parser = parse_closed_unit)]
        drop_occluded: f64,
        #[arg(long, default_value_t = 0.0, value_parser = parse_closed_unit)]
        score_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth.
    Eval {
        /// Scene or annotation JSON, or a directory of them.
        #[arg(long)]
        gt: PathBuf,
        /// Same layout as --gt; directory entries are matched by file name.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        k10: u32,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
        k100: u32,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = parse_open_unit)]
        c: f64,
        #[arg(long)]
        class_aware: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render a scene as a PPM image.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write amodal_<id>.pgm and visible_<id>.pgm here.
        #[arg(long)]
        masks: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DecodeMode {
    Modal,
    Amodal,
    Levels,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| format!("expected MIN..MAX, got {s:?}"))?;
    let lo: usize = lo.trim().parse().map_err(|_| format!("bad minimum {lo:?}"))?;
    let hi: usize = hi.trim().parse().map_err(|_| format!("bad maximum {hi:?}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("range {lo}..{hi} must satisfy 1 <= MIN <= MAX"));
    }
    Ok((lo, hi))
}

fn parse_open_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn parse_closed_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

pub(crate) enum Failure {
    Usage(String),
    Data(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

impl From<semdist::Error> for Failure {
    fn from(e: semdist::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

pub(crate) type CliResult<T> = Result<T, Failure>;

pub(crate) fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Adds the file name to errors raised while parsing a file.
pub(crate) fn in_file<T>(path: &Path, r: semdist::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    width: u32,
    height: u32,
    objects: [usize; 2],
    max_levels: u32,
    scenes: Vec<ManifestEntry>,
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    seed: u64,
    objects: usize,
    max_depth: usize,
    gt_none: usize,
    gt_partial: usize,
    gt_heavy: usize,
}

fn cmd_generate(
    seed: u64,
    count: usize,
    (width, height): (u32, u32),
    objects: (usize, usize),
    max_levels: u32,
    out: &Path,
) -> CliResult<()> {
    let config = GenConfig {
        width: width as usize,
        height: height as usize,
        objects,
        max_levels: max_levels as usize,
        ..GenConfig::default()
    };
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let scenes = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed.wrapping_add(i);
            let scene = generate(&GenConfig { seed, ..config.clone() })?;
            let stats = scene_stats(&scene)?;
            let entry = ManifestEntry {
                file: format!("scene_{i:04}.json"),
                seed,
                objects: stats.objects,
                max_depth: stats.max_depth,
                gt_none: stats.gt_none,
                gt_partial: stats.gt_partial,
                gt_heavy: stats.gt_heavy,
            };
            Ok((entry, write_scene(&scene)))
        })
        .collect::<semdist::Result<Vec<_>>>()?;
    create_dir(out)?;
    let mut entries = Vec::with_capacity(scenes.len());
    for (entry, json) in scenes {
        write(&out.join(&entry.file), json)?;
        entries.push(entry);
    }
    let manifest =
        Manifest { seed, width, height, objects: [objects.0, objects.1], max_levels, scenes: entries };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialization is infallible");
    write(&out.join("manifest.json"), json + "\n")?;
    println!("wrote {count} scenes to {}", out.display());
    Ok(())
}

fn cmd_encode(scene_path: &Path, confidence: f64, out: &Path) -> CliResult<()> {
    let scene = load::load_scene(scene_path)?;
    let policy = ConfidencePolicy::constant(confidence as f32)?;
    let mut ids: Vec<_> = scene.ids().collect();
    ids.sort_unstable();
    create_dir(out)?;
    for &id in &ids {
        let map = encode_semdist(&scene, id, &policy)?;
        write(&out.join(format!("instance_{id}.sdm")), write_semdist(&map)?)?;
    }
    println!("wrote {} maps to {}", ids.len(), out.display());
    Ok(())
}

fn cmd_decode(map_path: &Path, mode: DecodeMode, threshold: f64, out: &Path) -> CliResult<()> {
    let map = in_file(map_path, read_semdist(&read_bytes(map_path)?))?;
    let (w, h) = map.dims();
    let pgm = match mode {
        DecodeMode::Modal => encode_pgm_mask(&modal_mask(&map, threshold)?),
        DecodeMode::Amodal => encode_pgm_mask(&amodal_mask(&map, threshold)?),
        DecodeMode::Levels => {
            // Level L is stored as L + 1 so that 0 stays background.
            let gray: Vec<u8> = decode_levels(&map, threshold)?
                .iter()
                .map(|l| l.map_or(0, |l| (l + 1).min(255) as u8))
                .collect();
            encode_pgm(w, h, &gray)
        }
    };
    write(out, pgm)
}

fn cmd_order(a_path: &Path, b_path: &Path, c: f64) -> CliResult<()> {
    let a = in_file(a_path, read_semdist(&read_bytes(a_path)?))?;
    let b = in_file(b_path, read_semdist(&read_bytes(b_path)?))?;
    let analysis = analyze_order(&a, &b, c)?;
    let regions: Vec<String> = analysis
        .regions
        .iter()
        .map(|r| format!("{}{}", if r.sign > 0 { '+' } else { '-' }, r.area))
        .collect();
    println!("{} overlap={} regions={}", analysis.order, analysis.overlap_area, regions.join(","));
    Ok(())
}

fn cmd_perturb(gt: &Path, config: PerturbConfig, out: &Path) -> CliResult<()> {
    let (width, height, annotations) = match load_document(gt)? {
        Document::Scene(scene) => {
            let (w, h) = scene.dims();
            (w, h, semdist::compositor::annotations_from_scene(&scene)?)
        }
        Document::Annotations(set, _) => (set.width, set.height, set.annotations),
    };
    let perturbed = perturb(&annotations, &config)?;
    println!("kept {} of {} instances", perturbed.len(), annotations.len());
    write(out, write_annotations(&AnnotationSet::new(width, height, perturbed)))
}

struct EvalArgs {
    k_small: usize,
    k_large: usize,
    c: f64,
    class_aware: bool,
}

fn json_files(dir: &Path) -> CliResult<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".json") && name != "manifest.json" && entry.path().is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn cmd_eval(gt: &Path, pred: &Path, args: EvalArgs, report_path: Option<&Path>) -> CliResult<()> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if gt.is_dir() {
        if !pred.is_dir() {
            return Err(Failure::Usage("--pred must be a directory when --gt is".into()));
        }
        json_files(gt)?
            .into_iter()
            .map(|name| {
                let (g, p) = (gt.join(&name), pred.join(&name));
                (name, g, p)
            })
            .collect()
    } else {
        let name =
            gt.file_name().map_or_else(|| gt.display().to_string(), |n| n.to_string_lossy().into_owned());
        vec![(name, gt.to_path_buf(), pred.to_path_buf())]
    };
    if pairs.is_empty() {
        return Err(Failure::Data(format!("{}: no ground-truth files", gt.display())));
    }
    let confidence = DEFAULT_CONFIDENCE;
    let images = pairs
        .par_iter()
        .map(|(name, g, p)| {
            if !p.is_file() {
                return Err(Failure::Data(format!("{}: missing prediction file", p.display())));
            }
            load::eval_image(name, g, p, confidence, args.c)
        })
        .collect::<CliResult<Vec<EvalImage>>>()?;
    let opts = EvalOptions {
        matching: MatchOptions { class_aware: args.class_aware },
        k_small: args.k_small,
        k_large: args.k_large,
        order: OrderOptions { threshold: args.c, confidence },
        ..EvalOptions::default()
    };
    let report = evaluate(&images, &opts)?;
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"));
    println!(
        "ap {:.4}  ar@{} {:.4}  ar@{} {:.4}  order_accuracy {}",
        report.ap,
        args.k_small,
        report.ar10,
        args.k_large,
        report.ar100,
        show(report.order_accuracy)
    );
    println!(
        "ar by occlusion: none {}  partial {}  heavy {}",
        show(report.ar_none),
        show(report.ar_partial),
        show(report.ar_heavy)
    );
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report).expect("report serialization is infallible");
        write(path, json + "\n")?;
    }
    Ok(())
}

fn cmd_render(scene_path: &Path, out: &Path, masks: Option<&Path>) -> CliResult<()> {
    let scene = load::load_scene(scene_path)?;
    write(out, encode_ppm(&render(&scene)))?;
    if let Some(dir) = masks {
        create_dir(dir)?;
        for id in scene.ids() {
            write(&dir.join(format!("amodal_{id}.pgm")), encode_pgm_mask(&scene.amodal_mask_of(id)?))?;
            write(&dir.join(format!("visible_{id}.pgm")), encode_pgm_mask(&scene.visible_mask_of(id)?))?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { seed, count, width, height, objects, max_levels, out } => {
            cmd_generate(seed, count, (width, height), objects, max_levels, &out)
        }
        Command::Encode { scene, confidence, out } => cmd_encode(&scene, confidence, &out),
        Command::Decode { map, mode, threshold, out } => cmd_decode(&map, mode, threshold, &out),
        Command::Order { map_a, map_b, c } => cmd_order(&map_a, &map_b, c),
        Command::Perturb { gt, erode, dilate, drop_occluded, score_noise, seed, out } => {
            let config = PerturbConfig {
                erode_radius: erode,
                dilate_radius: dilate,
                drop_occluded_prob: drop_occluded,
                score_noise,
                seed,
                ..PerturbConfig::default()
            };
            cmd_perturb(&gt, config, &out)
        }
        Command::Eval { gt, pred, k10, k100, c, class_aware, report } => {
            let args = EvalArgs { k_small: k10 as usize, k_large: k100 as usize, c, class_aware };
            cmd_eval(&gt, &pred, args, report.as_deref())
        }
        Command::Render { scene, out, masks } => cmd_render(&scene, &out, masks.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            match failure {
                Failure::Usage(_) => ExitCode::from(2),
                Failure::Data(_) => ExitCode::from(1),
            }
        }
    }
}
