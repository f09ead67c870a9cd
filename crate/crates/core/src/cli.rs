//! The `vocanim` command line: detect, merge, synth, run and gen.
//!
//! Exit codes are 0 on success, 2 for unreadable or invalid inputs and 64
//! for malformed invocations.

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::audio::{load_wav, save_wav_as, WavEncoding};
use crate::detector::{correlation_traces, detect, DetectorConfig, PatternDictionary, SoundPattern};
use crate::scene::{build_animation, parse_scene, safe_name, AnimationOutput};
use crate::test_signals::{place_instances, GenPlan};
use crate::timeline::{merge, EventKind, Timeline, Track};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

pub const MERGED_TIMELINE: &str = "timeline.json";
pub const ANIMATION_DOC: &str = "animation.json";

pub fn timeline_file(track_id: &str) -> String {
    format!("{track_id}.timeline.json")
}

pub fn report_file(track_id: &str) -> String {
    format!("{track_id}.correlation.csv")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvocationResult {
    pub exit_code: u8,
    /// Files written, in order.
    pub outputs: Vec<PathBuf>,
}

#[derive(Parser, Debug)]
#[command(
    name = "vocanim",
    version,
    about = "Detect vocal sound patterns and drive animation from them"
)]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect pattern events in one soundtrack.
    Detect {
        sequence: PathBuf,
        #[arg(long)]
        patterns: PathBuf,
        /// Track id; defaults to the sequence file stem.
        #[arg(long)]
        track_id: Option<String>,
        #[command(flatten)]
        detect: DetectFlags,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Combine per-track timelines into one.
    Merge {
        #[arg(required = true)]
        timelines: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Turn a timeline and a scene into curves and spawns.
    Synth {
        timeline: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        synth: SynthFlags,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// detect every track, merge, then synth.
    Run {
        /// Soundtrack as `ID=WAV`; repeat for several tracks.
        #[arg(long = "track", value_parser = parse_track)]
        tracks: Vec<(String, PathBuf)>,
        #[arg(long)]
        patterns: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        detect: DetectFlags,
        #[command(flatten)]
        synth: SynthFlags,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Generate synthetic patterns, a sequence and its ground truth.
    Gen {
        plan: PathBuf,
        /// Overrides the plan's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct DetectFlags {
    #[arg(long, default_value_t = 0.5)]
    impulse_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    continuous_threshold: f64,
    /// Shortest continuous event kept, in seconds.
    #[arg(long, default_value_t = 0.15)]
    min_continuous_duration: f64,
    /// Keep overlapping impulse candidates of different patterns.
    #[arg(long)]
    no_suppression: bool,
    /// Also write per-pattern correlation traces as CSV.
    #[arg(long)]
    report: bool,
}

impl DetectFlags {
    fn config(&self) -> DetectorConfig {
        DetectorConfig {
            impulse_threshold: self.impulse_threshold,
            continuous_threshold: self.continuous_threshold,
            continuous_min_duration_s: self.min_continuous_duration,
            suppression: !self.no_suppression,
        }
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct SynthFlags {
    /// Overrides the scene frame rate.
    #[arg(long)]
    fps: Option<f64>,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_track(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((id, path)) if safe_name(id) && !path.is_empty() => Ok((id.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected ID=WAV with a plain track id, got `{s}`")),
    }
}

/// One entry of a patterns manifest. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub kind: EventKind,
    /// Tracks this pattern is searched in; all tracks if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracks: Option<Vec<String>>,
}

enum Failure {
    Usage(String),
    Input(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

type CmdResult = Result<(), Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| anyhow!("{}: {}: {}", path.display(), e.path(), e.inner()))
}

fn load_dictionary(manifest: &Path, track_id: &str) -> anyhow::Result<PatternDictionary> {
    let entries: Vec<ManifestEntry> = read_json(manifest, "patterns manifest")?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut patterns = Vec::new();
    for entry in entries {
        if entry.tracks.as_ref().is_some_and(|t| !t.iter().any(|t| t == track_id)) {
            continue;
        }
        let path = base.join(&entry.path);
        let clip = load_wav(&path).with_context(|| format!("pattern `{}`", entry.id))?;
        patterns.push(SoundPattern::new(entry.id, clip, entry.kind)?);
    }
    PatternDictionary::new(patterns)
        .with_context(|| format!("{}: no usable patterns for track `{track_id}`", manifest.display()))
}

fn load_timeline(path: &Path) -> anyhow::Result<Timeline> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read timeline {}", path.display()))?;
    Timeline::from_json(&text).with_context(|| format!("timeline {}", path.display()))
}

struct Session {
    outputs: Vec<PathBuf>,
}

impl Session {
    fn write(&mut self, dir: &Path, name: &str, contents: &[u8]) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        log::info!("wrote {}", path.display());
        self.outputs.push(path);
        Ok(())
    }

    fn detect(
        &mut self,
        track_id: &str,
        sequence: &Path,
        manifest: &Path,
        flags: &DetectFlags,
        out_dir: &Path,
    ) -> anyhow::Result<()> {
        let dict = load_dictionary(manifest, track_id)?;
        let s = load_wav(sequence)?;
        let detected = detect(track_id, &s, &dict, &flags.config())?;
        let source = sequence.file_name().map(|n| n.to_string_lossy().into_owned());
        let events = detected.tracks()[0].events.clone();
        log::info!("track `{track_id}`: {} event(s)", events.len());
        let timeline = Timeline::new(vec![Track::new(track_id, source, events)], detected.duration_s())?;
        self.write(out_dir, &timeline_file(track_id), timeline.to_json().as_bytes())?;
        if flags.report {
            let traces = correlation_traces(&s, &dict)?;
            self.write(
                out_dir,
                &report_file(track_id),
                correlation_csv(&traces, s.sample_rate_hz()).as_bytes(),
            )?;
        }
        Ok(())
    }

    fn merge(&mut self, paths: &[PathBuf], out_dir: &Path) -> anyhow::Result<Timeline> {
        let timelines = paths
            .iter()
            .map(|p| load_timeline(p))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let merged = merge(&timelines)?;
        self.write(out_dir, MERGED_TIMELINE, merged.to_json().as_bytes())?;
        Ok(merged)
    }

    fn synth(&mut self, timeline: &Path, scene: &Path, flags: &SynthFlags, out_dir: &Path) -> CmdResult {
        let timeline = load_timeline(timeline)?;
        let text = std::fs::read_to_string(scene).with_context(|| format!("cannot read scene {}", scene.display()))?;
        let mut cfg = parse_scene(&text).with_context(|| format!("scene {}", scene.display()))?;
        if let Some(fps) = flags.fps {
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(Failure::Usage(format!("--fps {fps} must be positive")));
            }
            cfg.fps = fps;
        }
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        let out = build_animation(&timeline, &cfg).map_err(anyhow::Error::from)?;
        for obj in &out.objects {
            let name = AnimationOutput::curve_table_name(&obj.object_id);
            self.write(out_dir, &name, obj.curves.to_csv().as_bytes())?;
        }
        self.write(out_dir, ANIMATION_DOC, out.to_json().as_bytes())?;
        let consumed: usize = out.objects.iter().map(|o| o.events_consumed).sum();
        println!(
            "{} object(s), {consumed} event(s) consumed, {} spawn(s), {} s at {} fps",
            out.objects.len(),
            out.spawns().len(),
            out.duration_s,
            out.fps
        );
        Ok(())
    }

    fn gen(&mut self, plan_path: &Path, seed: Option<u64>, out_dir: &Path) -> anyhow::Result<()> {
        let mut plan: GenPlan = read_json(plan_path, "plan")?;
        if let Some(seed) = seed {
            plan.truth.seed = seed;
        }
        let sr = plan.truth.sample_rate_hz;
        let mut patterns = Vec::with_capacity(plan.patterns.len());
        for (i, spec) in plan.patterns.iter().enumerate() {
            if !safe_name(&spec.id) {
                bail!(
                    "{}: patterns[{i}].id `{}` is not a plain file name",
                    plan_path.display(),
                    spec.id
                );
            }
            patterns.push(spec.build(sr).with_context(|| format!("patterns[{i}]"))?);
        }
        let dict = PatternDictionary::new(patterns)?;
        let placed = place_instances(&dict, &plan.truth).with_context(|| format!("plan {}", plan_path.display()))?;

        let pattern_dir = out_dir.join("patterns");
        let mut manifest = Vec::new();
        for p in dict.patterns() {
            let name = format!("{}.wav", p.id());
            std::fs::create_dir_all(&pattern_dir)?;
            let path = pattern_dir.join(&name);
            save_wav_as(p.clip(), &path, WavEncoding::Float32)?;
            self.outputs.push(path);
            manifest.push(ManifestEntry {
                id: p.id().to_string(),
                path: Path::new("patterns").join(name),
                kind: p.kind(),
                tracks: None,
            });
        }
        std::fs::create_dir_all(out_dir)?;
        let sequence = out_dir.join("sequence.wav");
        save_wav_as(&placed.clip, &sequence, WavEncoding::Float32)?;
        self.outputs.push(sequence);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        self.write(out_dir, "patterns.json", text.as_bytes())?;
        let mut truth = serde_json::to_string_pretty(&plan.truth)?;
        truth.push('\n');
        self.write(out_dir, "ground_truth.json", truth.as_bytes())?;
        if placed.gain != 1.0 {
            log::warn!("mix scaled by {} to avoid clipping", placed.gain);
        }
        Ok(())
    }
}

/// Traces as `t,<pattern>...` rows, one per lag.
fn correlation_csv(traces: &[(String, crate::signal::CorrelationTrace)], sample_rate_hz: u32) -> String {
    let rows = traces.iter().map(|(_, t)| t.values.len()).max().unwrap_or(0);
    let mut out = String::from("t");
    for (id, _) in traces {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for i in 0..rows {
        write!(out, "{}", i as f64 / sample_rate_hz as f64).unwrap();
        for (_, t) in traces {
            match t.values.get(i) {
                Some(v) => write!(out, ",{v}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn check_detect_flags(flags: &DetectFlags) -> CmdResult {
    flags.config().validate().map_err(|e| Failure::Usage(e.to_string()))
}

fn dispatch(command: Command, session: &mut Session) -> CmdResult {
    match command {
        Command::Detect {
            sequence,
            patterns,
            track_id,
            detect,
            out_dir,
        } => {
            check_detect_flags(&detect)?;
            let track_id = match track_id {
                Some(id) => id,
                None => sequence
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
            };
            if !safe_name(&track_id) {
                return Err(Failure::Usage(format!("track id `{track_id}` is not a plain name")));
            }
            session.detect(&track_id, &sequence, &patterns, &detect, &out_dir)?;
        }
        Command::Merge { timelines, out_dir } => {
            session.merge(&timelines, &out_dir)?;
        }
        Command::Synth {
            timeline,
            scene,
            synth,
            out_dir,
        } => session.synth(&timeline, &scene, &synth, &out_dir)?,
        Command::Run {
            tracks,
            patterns,
            scene,
            detect,
            synth,
            out_dir,
        } => {
            if tracks.is_empty() {
                return Err(Failure::Usage("run needs at least one --track ID=WAV".into()));
            }
            let mut ids: Vec<&str> = tracks.iter().map(|(id, _)| id.as_str()).collect();
            ids.sort_unstable();
            if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
                return Err(Failure::Usage(format!("track `{}` given twice", w[0])));
            }
            check_detect_flags(&detect)?;
            let mut per_track = Vec::with_capacity(tracks.len());
            for (id, wav) in &tracks {
                session.detect(id, wav, &patterns, &detect, &out_dir)?;
                per_track.push(out_dir.join(timeline_file(id)));
            }
            session.merge(&per_track, &out_dir)?;
            session.synth(&out_dir.join(MERGED_TIMELINE), &scene, &synth, &out_dir)?;
        }
        Command::Gen { plan, seed, out_dir } => session.gen(&plan, seed, &out_dir)?,
    }
    Ok(())
}

/// Parses `args` (program name first) and executes the command.
pub fn run<I, T>(args: I) -> InvocationResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let exit_code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            return InvocationResult {
                exit_code,
                outputs: Vec::new(),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let mut session = Session { outputs: Vec::new() };
    let exit_code = match dispatch(cli.command, &mut session) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    };
    InvocationResult {
        exit_code,
        outputs: session.outputs,
    }
}
