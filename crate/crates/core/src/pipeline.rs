//! Per-event orchestration: ingest, local flow, multi-scale correction.

use std::time::{Duration, Instant};

use crate::arms::{ArmsError, ArmsPooler};
use crate::config::PipelineConfig;
use crate::edl::{ConfigError, EdlEstimator};
use crate::event::{Event, SensorGeometry, SurfaceError, TimeSurface};
use crate::flow::{FlowSurface, FlowVector, LocalFlow};
use crate::scalar::Scalar;

/// Which flow a record carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlowMode {
    /// Multi-scale corrected flow.
    #[default]
    Arms,
    /// Local plane-fit flow only.
    Edl,
}

/// Output of the pipeline for one event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecord<T> {
    pub event: Event,
    pub local: LocalFlow<T>,
    /// Emitted flow; zero when `valid` is false.
    pub flow: FlowVector<T>,
    pub valid: bool,
    /// Pooling radius that produced `flow`; `None` for invalid or local-only records.
    pub chosen_radius: Option<u32>,
}

impl<T: Scalar> FlowRecord<T> {
    fn invalid(event: Event, local: LocalFlow<T>) -> Self {
        Self {
            event,
            local,
            flow: FlowVector::zero(),
            valid: false,
            chosen_radius: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub edl: Duration,
    pub arms: Duration,
}

/// Streaming flow pipeline. Memory is proportional to the sensor resolution.
#[derive(Debug, Clone)]
pub struct Pipeline<T> {
    surface: TimeSurface,
    flows: FlowSurface<T>,
    edl: EdlEstimator<T>,
    pooler: ArmsPooler<T>,
    mode: FlowMode,
}

impl<T: Scalar> Pipeline<T> {
    pub fn new(geometry: SensorGeometry, cfg: &PipelineConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            surface: TimeSurface::new(geometry, cfg.polarity_mode.into()),
            flows: FlowSurface::new(geometry, cfg.scales.t_past),
            edl: EdlEstimator::new(cfg.edl.clone()),
            pooler: ArmsPooler::new(cfg.scales.clone()),
            mode: FlowMode::Arms,
        })
    }

    pub fn with_mode(mut self, mode: FlowMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.surface.geometry()
    }

    pub fn time_surface(&self) -> &TimeSurface {
        &self.surface
    }

    pub fn flow_surface(&self) -> &FlowSurface<T> {
        &self.flows
    }

    /// Processes one event. Bounds and ordering violations are rejected and leave
    /// the state unchanged; algorithmic failures yield an invalid record.
    pub fn process(&mut self, e: &Event) -> Result<FlowRecord<T>, SurfaceError> {
        self.process_inner(e, None)
    }

    /// As [`process`](Self::process), accumulating per-stage wall time.
    pub fn process_timed(&mut self, e: &Event, times: &mut StageTimes) -> Result<FlowRecord<T>, SurfaceError> {
        self.process_inner(e, Some(times))
    }

    fn process_inner(&mut self, e: &Event, times: Option<&mut StageTimes>) -> Result<FlowRecord<T>, SurfaceError> {
        let t0 = times.as_ref().map(|_| Instant::now());
        self.surface.ingest(e)?;
        let local = self.edl.local_flow(e, &self.surface);
        self.flows.update(e.x, e.y, e.t, &local)?;
        let t1 = times.as_ref().map(|_| Instant::now());

        let record = if !local.valid {
            FlowRecord::invalid(*e, local)
        } else {
            match self.mode {
                FlowMode::Edl => FlowRecord {
                    event: *e,
                    local,
                    flow: local.to_vector(),
                    valid: true,
                    chosen_radius: None,
                },
                FlowMode::Arms => match self.pooler.correct(e, &local, &self.flows) {
                    Ok((radius, flow)) if flow.is_finite() => FlowRecord {
                        event: *e,
                        local,
                        flow,
                        valid: true,
                        chosen_radius: Some(radius),
                    },
                    Ok(_) | Err(ArmsError::NoEligibleScale(_)) | Err(ArmsError::NoValidCenterFlow) => {
                        FlowRecord::invalid(*e, local)
                    }
                },
            }
        };
        if let (Some(times), Some(t0), Some(t1)) = (times, t0, t1) {
            times.edl += t1 - t0;
            times.arms += t1.elapsed();
        }
        Ok(record)
    }

    /// Runs over a whole slice, collecting the records.
    pub fn run(&mut self, events: &[Event]) -> Result<Vec<FlowRecord<T>>, SurfaceError> {
        events.iter().map(|e| self.process(e)).collect()
    }
}

/// Convenience: fresh pipeline over `events` in the given mode.
pub fn run_pipeline<T: Scalar>(
    geometry: SensorGeometry,
    cfg: &PipelineConfig,
    mode: FlowMode,
    events: &[Event],
) -> Result<Vec<FlowRecord<T>>, PipelineError> {
    let mut p = Pipeline::new(geometry, cfg)?.with_mode(mode);
    Ok(p.run(events)?)
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stream(#[from] SurfaceError),
}
