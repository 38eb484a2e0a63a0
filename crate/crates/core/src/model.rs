//! Learned parameters of the past- and future-reasoning modules.

use std::path::Path;

use querytrack_nn::{join, AttentionBlock, MlpParams, Params, SeededInit, Tensor2D};
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::{load_weights_into, read_json, weights_to_json, write_atomic, WeightsFile};
use crate::types::TrackerConfig;

/// Outputs of the box-regression head: residual xyz, raw size (softplus),
/// sin/cos of yaw, velocity.
pub const REG_OUTPUTS: usize = 10;

/// Initial scale of the residual branches of the past-reasoning blocks.
const PAST_RESIDUAL_INIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub cross_frame: AttentionBlock,
    pub cross_object: AttentionBlock,
    pub reg_head: MlpParams,
    pub cls_head: MlpParams,
    pub motion_attn: AttentionBlock,
    pub decode_head: MlpParams,
}

impl ModelParams {
    pub fn seeded(config: &TrackerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let mut init = SeededInit::new(seed);
        let mut cross_frame = AttentionBlock::seeded(d, config.heads, config.layers, d, &mut init)?;
        let mut cross_object =
            AttentionBlock::seeded(d, config.heads, config.layers, config.pe3d_dim(), &mut init)?;
        cross_frame.scale_residual_branches(PAST_RESIDUAL_INIT);
        cross_object.scale_residual_branches(PAST_RESIDUAL_INIT);
        Ok(Self {
            cross_frame,
            cross_object,
            reg_head: MlpParams::two_layer(d, 4 * d, REG_OUTPUTS, &mut init),
            cls_head: MlpParams::two_layer(d, 4 * d, 1, &mut init),
            motion_attn: AttentionBlock::seeded(d, config.heads, config.layers, d, &mut init)?,
            decode_head: MlpParams::two_layer(2 * d, 4 * d, 2, &mut init),
        })
    }

    pub fn dim(&self) -> usize {
        self.cross_frame.dim()
    }

    /// Checks that tensor shapes agree with `config`.
    pub fn check_config(&self, config: &TrackerConfig) -> Result<()> {
        let expected = Self::seeded(config, 0)?;
        let mut shapes = Vec::new();
        expected.visit("", &mut |name, t| {
            shapes.push((name.to_string(), t.shape()))
        });
        let mut i = 0;
        let mut err = None;
        self.visit("", &mut |name, t| {
            if err.is_none()
                && shapes
                    .get(i)
                    .is_none_or(|(n, s)| n != name || *s != t.shape())
            {
                err = Some(Error::config(
                    format!("weights.{name}"),
                    format!("shape {:?} incompatible with d = {}", t.shape(), config.d),
                ));
            }
            i += 1;
        });
        if let Some(e) = err {
            return Err(e);
        }
        if i != shapes.len() || self.cross_frame.layers[0].attn.heads != config.heads {
            return Err(Error::config("weights", "layout does not match config"));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, config: &TrackerConfig) -> Result<()> {
        let meta = json!({
            "d": config.d,
            "heads": config.heads,
            "layers": config.layers,
            "tau_h": config.tau_h,
            "tau_f": config.tau_f,
        });
        write_atomic(path, weights_to_json(self, &meta).as_bytes())
    }

    pub fn load(path: &Path, config: &TrackerConfig) -> Result<Self> {
        let file: WeightsFile = read_json(path)?;
        if let Some(d) = file.meta.get("d").and_then(|v| v.as_u64()) {
            if d as usize != config.d {
                return Err(Error::config(
                    "d",
                    format!(
                        "weights were trained with d = {d}, config has d = {}",
                        config.d
                    ),
                ));
            }
        }
        let mut params = Self::seeded(config, 0)?;
        load_weights_into(&mut params, &file)?;
        Ok(params)
    }
}

impl Params for ModelParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        self.cross_frame.visit(&join(prefix, "past.cross_frame"), f);
        self.cross_object
            .visit(&join(prefix, "past.cross_object"), f);
        self.reg_head
            .visit(&join(prefix, "past.refine_head.reg"), f);
        self.cls_head
            .visit(&join(prefix, "past.refine_head.cls"), f);
        self.motion_attn
            .visit(&join(prefix, "future.motion_attn"), f);
        self.decode_head
            .visit(&join(prefix, "future.decode_head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        self.cross_frame
            .visit_mut(&join(prefix, "past.cross_frame"), f);
        self.cross_object
            .visit_mut(&join(prefix, "past.cross_object"), f);
        self.reg_head
            .visit_mut(&join(prefix, "past.refine_head.reg"), f);
        self.cls_head
            .visit_mut(&join(prefix, "past.refine_head.cls"), f);
        self.motion_attn
            .visit_mut(&join(prefix, "future.motion_attn"), f);
        self.decode_head
            .visit_mut(&join(prefix, "future.decode_head"), f);
    }
}
