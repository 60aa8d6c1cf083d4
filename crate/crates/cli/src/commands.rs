use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};

use armsflow::bench::{bench_stream, report, run_bench};
use armsflow::config::{PipelineConfig, PolaritySetting};
use armsflow::flow::{FlowVector, LocalFlow};
use armsflow::io::{
    open_events, read_flow_records, read_truth_csv, write_events, write_truth_csv, EventFormat, EventReader,
    FlowRecordWriter, FlowRow, PredictionWriter,
};
use armsflow::metrics::{aee, direction_stats};
use armsflow::pipeline::{FlowMode, FlowRecord, StageTimes};
use armsflow::predict::{affine_summary, affine_windows, cluster_windows, predict_event, ClusterMember};
use armsflow::render::render_flow;
use armsflow::synth::{
    bar_square_scene, generate, occlusion_scene, rotated_bar_suite, two_squares_scene, LabeledEvent,
};
use armsflow::{Event, Pipeline, SensorGeometry};

use crate::{
    BenchArgs, ConfigArgs, EvalAeeArgs, EvalAffineArgs, FlowArgs, FormatArg, HistArgs, InputArgs, ModeArg,
    PolarityArg, PredictArgs, RenderArgs, SceneArg, SynthArgs,
};

/// Default horizon when none is configured (µs).
const DEFAULT_HORIZON: u64 = 250_000;

#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Config(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Config(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Config(e) => e,
        }
    }
}

pub type CmdResult = Result<(), Failure>;

trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn config(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }

    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
}

impl From<ModeArg> for FlowMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Arms => FlowMode::Arms,
            ModeArg::Edl => FlowMode::Edl,
        }
    }
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig, Failure> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p).config()?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($dst:tt)+) => {
                if let Some(v) = self.$flag.clone() {
                    c.$($dst)+ = v;
                }
            };
        }
        set!(filter_radius => edl.filter_radius);
        set!(inlier_fraction => edl.inlier_fraction);
        set!(min_fit_events => edl.min_fit_events);
        set!(refit_passes => edl.refit_passes);
        set!(t_past => edl.t_past);
        set!(inlier_threshold_scale => edl.inlier_threshold_scale);
        set!(radii => scales.radii);
        set!(scale_t_past => scales.t_past);
        set!(min_pool_count => scales.min_pool_count);
        set!(tie_tolerance => scales.tie_tolerance);
        set!(horizons => horizons);
        set!(cluster_span => cluster_span);
        if let Some(p) = self.polarity_mode {
            c.polarity_mode = match p {
                PolarityArg::Separate => PolaritySetting::Separate,
                PolarityArg::Merged => PolaritySetting::Merged,
            };
        }
        c.validate().config()?;
        Ok(c)
    }
}

fn format_of(path: &Path, explicit: Option<FormatArg>) -> EventFormat {
    match explicit {
        Some(FormatArg::Csv) => EventFormat::Csv,
        Some(FormatArg::Bin) => EventFormat::Binary,
        None => EventFormat::from_path(path),
    }
}

type Reader = EventReader<BufReader<File>>;

fn open_input(path: Option<&Path>, format: Option<FormatArg>, w: u16, h: u16) -> Result<(SensorGeometry, Reader), Failure> {
    let path = path.ok_or_else(|| Failure::Input(anyhow!("no input file given")))?;
    let format = format_of(path, format);
    let fallback = SensorGeometry::new(w, h).config()?;
    let geometry = match format {
        EventFormat::Csv => Some(fallback),
        EventFormat::Binary => None,
    };
    let reader = open_events(path, format, geometry)
        .with_context(|| format!("cannot open {}", path.display()))
        .input()?;
    Ok((reader.geometry().unwrap_or(fallback), reader))
}

impl InputArgs {
    fn open(&self, cfg: &PipelineConfig) -> Result<(SensorGeometry, Reader), Failure> {
        let path = self.input.clone().or_else(|| cfg.input.clone());
        open_input(path.as_deref(), self.format, self.width, self.height)
    }
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display())).input()?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open_buffered(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .input()
}

fn horizons(cfg: &PipelineConfig) -> Vec<u64> {
    if cfg.horizons.is_empty() {
        vec![DEFAULT_HORIZON]
    } else {
        cfg.horizons.clone()
    }
}

pub fn synth(a: SynthArgs) -> CmdResult {
    let mut spec = match a.scene {
        SceneArg::BarSquare => bar_square_scene(a.speed),
        SceneArg::TwoSquares => two_squares_scene(a.speed),
        SceneArg::Occlusion => occlusion_scene(a.speed),
        SceneArg::Bar => {
            let bar = rotated_bar_suite(&[a.angle], a.speed).remove(0);
            if bar.degenerate {
                return Err(Failure::Config(anyhow!(
                    "bar at {}° is parallel to its motion and emits no events",
                    a.angle
                )));
            }
            bar.spec
        }
    };
    spec.noise_rate = a.noise_rate;
    let labeled = generate(&spec, a.duration_us, a.seed).config()?;
    let events: Vec<Event> = labeled.iter().map(|l| l.event).collect();
    write_events(&a.output, EventFormat::from_path(&a.output), spec.geometry, &events)
        .with_context(|| format!("cannot write {}", a.output.display()))
        .input()?;
    if let Some(t) = &a.truth {
        let f = File::create(t).with_context(|| format!("cannot create {}", t.display())).input()?;
        write_truth_csv(BufWriter::new(f), &labeled).input()?;
    }
    eprintln!("wrote {} events", events.len());
    Ok(())
}

pub fn flow(a: FlowArgs) -> CmdResult {
    let cfg = a.cfg.resolve()?;
    let (geometry, reader) = a.input.open(&cfg)?;
    let mut pipeline = Pipeline::new(geometry, &cfg).config()?.with_mode(a.mode.into());
    let mut out = FlowRecordWriter::new(sink(a.output.as_ref().or(cfg.output.as_ref()))?).input()?;
    let mut preds = match &a.predictions {
        Some(p) => Some(PredictionWriter::new(sink(Some(p))?).input()?),
        None => None,
    };
    let hs = horizons(&cfg);
    for e in reader {
        let e = e.input()?;
        let rec = pipeline.process(&e).input()?;
        out.write(&rec).input()?;
        if let (Some(pw), true) = (preds.as_mut(), rec.valid) {
            for &h in &hs {
                pw.write(&predict_event(&rec.event, &rec.flow, h, &geometry)).input()?;
            }
        }
    }
    out.finish().input()?;
    if let Some(pw) = preds {
        pw.finish().input()?;
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> CmdResult {
    let cfg = a.cfg.resolve()?;
    let (geometry, reader) = a.input.open(&cfg)?;
    let mut pipeline = Pipeline::new(geometry, &cfg).config()?.with_mode(a.mode.into());
    let mut pw = PredictionWriter::new(sink(a.output.as_ref().or(cfg.output.as_ref()))?).input()?;
    let hs = horizons(&cfg);
    for e in reader {
        let rec = pipeline.process(&e.input()?).input()?;
        if rec.valid {
            for &h in &hs {
                pw.write(&predict_event(&rec.event, &rec.flow, h, &geometry)).input()?;
            }
        }
    }
    pw.finish().input()?;
    Ok(())
}

fn paired(flows: Vec<FlowRow>, truth: Vec<LabeledEvent>) -> Result<Vec<(FlowRow, LabeledEvent)>, Failure> {
    if flows.len() != truth.len() {
        return Err(Failure::Input(anyhow!(
            "{} flow records but {} ground-truth rows",
            flows.len(),
            truth.len()
        )));
    }
    flows
        .into_iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (f, t))| {
            if f.event != t.event {
                Err(Failure::Input(anyhow!("row {} refers to different events in flow and truth files", i + 1)))
            } else {
                Ok((f, t))
            }
        })
        .collect()
}

pub fn eval_aee(a: EvalAeeArgs) -> CmdResult {
    let flows = read_flow_records(open_buffered(&a.flow)?).input()?;
    let truth = read_truth_csv(open_buffered(&a.truth)?).input()?;
    let total = flows.len();
    let (est, gt): (Vec<FlowVector<f64>>, Vec<FlowVector<f64>>) = paired(flows, truth)?
        .into_iter()
        .filter(|(f, t)| f.valid && t.object_id.is_some() && a.object.is_none_or(|o| t.object_id == Some(o)))
        .map(|(f, t)| (f.flow, t.true_flow))
        .unzip();
    let value = aee(&est, &gt).context("no valid flow records on labeled events").input()?;
    println!("aee,valid,total\n{value},{},{total}", est.len());
    Ok(())
}

pub fn eval_affine(a: EvalAffineArgs) -> CmdResult {
    let cfg = a.cfg.resolve()?;
    let (geometry, reader) = a.input.open(&cfg)?;
    let events: Vec<Event> = reader.collect::<Result<_, _>>().input()?;
    let mut pipeline = Pipeline::new(geometry, &cfg).config()?.with_mode(a.mode.into());
    let records = pipeline.run(&events).input()?;
    let keep: Vec<bool> = match (&a.truth, a.object) {
        (Some(t), Some(o)) => {
            let truth = read_truth_csv(open_buffered(t)?).input()?;
            if truth.len() != events.len() || truth.iter().zip(&events).any(|(l, e)| l.event != *e) {
                return Err(Failure::Input(anyhow!("ground truth does not match the event file")));
            }
            truth.iter().map(|l| l.object_id == Some(o)).collect()
        }
        _ => vec![true; events.len()],
    };
    let members = records.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| ClusterMember {
        event: r.event,
        flow: r.flow,
        valid: r.valid,
    });
    let actual: Vec<Event> = events.iter().zip(&keep).filter(|(_, k)| **k).map(|(e, _)| *e).collect();
    let windows = cluster_windows(members, cfg.cluster_span);
    let mut out = sink(a.output.as_ref())?;
    writeln!(out, "horizon,t_start,scale,tx,ty,residual").input()?;
    let mut summary = Vec::new();
    for h in horizons(&cfg) {
        let fits = affine_windows(&windows, &actual, h, a.normalize, &geometry);
        for w in &fits {
            let f = &w.fit;
            writeln!(out, "{h},{},{},{},{},{}", w.t_start, f.scale, f.translation.0, f.translation.1, f.residual).input()?;
        }
        summary.push((h, fits.len(), affine_summary(&fits)));
    }
    out.flush().input()?;
    for (h, n, s) in summary {
        match s {
            Some((se, tm)) => eprintln!("horizon {h} us: {n} windows, mean |scale-1| {se:.4}, mean translation {tm:.3} px"),
            None => eprintln!("horizon {h} us: no windows with a defined fit"),
        }
    }
    Ok(())
}

pub fn hist(a: HistArgs) -> CmdResult {
    let flows = read_flow_records(open_buffered(&a.flow)?).input()?;
    let vs: Vec<FlowVector<f64>> = flows.iter().filter(|r| r.valid).map(|r| r.flow).collect();
    if a.bins == 0 {
        return Err(Failure::Config(anyhow!("--bins must be positive")));
    }
    let h = direction_stats(&vs, a.bins).context("no valid flow records").input()?;
    let mut out = sink(a.output.as_ref())?;
    out.write_all(h.to_csv().as_bytes()).input()?;
    out.flush().input()?;
    let modes: Vec<String> = h.modes(0.05).iter().map(|&i| format!("{:.1}", h.bin_center(i).to_degrees())).collect();
    eprintln!(
        "n {}, circular mean {:.2} deg, circular std {:.4} rad, modes [{}]",
        h.total(),
        h.circular_mean.to_degrees(),
        h.circular_std,
        modes.join(", ")
    );
    Ok(())
}

pub fn render(a: RenderArgs) -> CmdResult {
    let geometry = SensorGeometry::new(a.width, a.height).config()?;
    if a.start >= a.end {
        return Err(Failure::Config(anyhow!("--start must be before --end")));
    }
    let rows = read_flow_records(open_buffered(&a.flow)?).input()?;
    let records: Vec<FlowRecord<f64>> = rows
        .into_iter()
        .map(|r| FlowRecord {
            event: r.event,
            local: LocalFlow::invalid(),
            flow: r.flow,
            valid: r.valid,
            chosen_radius: r.chosen_radius,
        })
        .collect();
    let img = render_flow(&records, geometry, a.start, a.end, a.max_speed).input()?;
    let f = File::create(&a.output).with_context(|| format!("cannot create {}", a.output.display())).input()?;
    img.write_ppm(BufWriter::new(f)).input()?;
    Ok(())
}

pub fn bench(a: BenchArgs) -> CmdResult {
    let cfg = a.cfg.resolve()?;
    let rep = match &a.input {
        Some(p) => {
            let t0 = Instant::now();
            let (geometry, reader) = open_input(Some(p), a.format, a.width, a.height)?;
            let events: Vec<Event> = reader.collect::<Result<_, _>>().input()?;
            let io_time = t0.elapsed();
            let mut pipeline = Pipeline::new(geometry, &cfg).config()?.with_mode(a.mode.into());
            let mut times = StageTimes::default();
            let t1 = Instant::now();
            for e in &events {
                pipeline.process_timed(e, &mut times).input()?;
            }
            report(events.len() as u64, t1.elapsed() + io_time, &times, io_time)
        }
        None => {
            if a.events == 0 {
                return Err(Failure::Config(anyhow!("--events must be positive")));
            }
            let (geometry, stream) = bench_stream(a.events, a.seed).config()?;
            let mut pipeline = Pipeline::new(geometry, &cfg).config()?.with_mode(a.mode.into());
            run_bench(&mut pipeline, stream)
        }
    };
    print!("{}", rep.to_csv());
    Ok(())
}
