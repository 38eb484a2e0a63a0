//! Named tracker variants shared by the CLI and the reproduction driver.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{run_tbd, Association, TbdConfig};
use crate::error::{Error, Result};
use crate::io::{group_frames, DetectionRecord};
use crate::model::ModelParams;
use crate::tracker::{run_frames, PipelineOptions, Propagation, SequenceOutput};
use crate::types::TrackerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Pftrack,
    PftrackNoExt,
    PftrackNoPast,
    Velocity,
    TbdHungarian,
    TbdGreedy,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Pftrack,
        Mode::PftrackNoExt,
        Mode::PftrackNoPast,
        Mode::Velocity,
        Mode::TbdHungarian,
        Mode::TbdGreedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Pftrack => "pftrack",
            Mode::PftrackNoExt => "pftrack-no-ext",
            Mode::PftrackNoPast => "pftrack-no-past",
            Mode::Velocity => "velocity",
            Mode::TbdHungarian => "tbd-hungarian",
            Mode::TbdGreedy => "tbd-greedy",
        }
    }

    pub fn uses_weights(self) -> bool {
        !matches!(self, Mode::TbdHungarian | Mode::TbdGreedy)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
                Error::config(
                    "mode",
                    format!("unknown mode {s:?}; expected one of {}", names.join(", ")),
                )
            })
    }
}

/// Trained weights: the full model, and a motion head trained on
/// unrefined queries for the variant without past reasoning.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub full: ModelParams,
    pub no_past: ModelParams,
}

/// Runs one variant over a detections log. `frames` pads trailing frames
/// without detections; TBD variants produce no forecasts.
pub fn run_mode(
    mode: Mode,
    records: &[DetectionRecord],
    frames: Option<u64>,
    weights: &Weights,
    config: &TrackerConfig,
    tbd: &TbdConfig,
) -> Result<SequenceOutput> {
    let grouped = || group_frames(records, frames);
    match mode {
        Mode::Pftrack => run_frames(
            &grouped(),
            &weights.full,
            config,
            &PipelineOptions::default(),
        ),
        Mode::PftrackNoExt => {
            let cfg = TrackerConfig {
                tau_e: 0,
                ..*config
            };
            run_frames(&grouped(), &weights.full, &cfg, &PipelineOptions::default())
        }
        Mode::PftrackNoPast => {
            let options = PipelineOptions {
                query_refinement: false,
                track_refinement: false,
                propagation: Propagation::Learned,
            };
            run_frames(&grouped(), &weights.no_past, config, &options)
        }
        Mode::Velocity => {
            let options = PipelineOptions {
                propagation: Propagation::Velocity,
                ..PipelineOptions::default()
            };
            run_frames(&grouped(), &weights.full, config, &options)
        }
        Mode::TbdHungarian | Mode::TbdGreedy => {
            let assoc = if mode == Mode::TbdHungarian {
                Association::Hungarian
            } else {
                Association::Greedy
            };
            Ok(SequenceOutput {
                tracks: run_tbd(records, assoc, tbd)?,
                forecasts: Vec::new(),
            })
        }
    }
}
