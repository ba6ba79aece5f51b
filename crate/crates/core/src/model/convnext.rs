use crate::error::{Error, Result};
use crate::model::layers::{Bind, Builder, Conv1d};
use crate::numerics::{Conv1dOpts, Float, ParamId, Var};

/// ConvNeXt V2 block on `[batch, channels, time]`:
/// depthwise conv, layer norm, pointwise expansion, GELU, GRN, pointwise
/// projection, residual add.
#[derive(Debug, Clone)]
pub struct ConvNeXtV2Block {
    pub channels: usize,
    pub depthwise: Conv1d,
    pub norm_gamma: ParamId,
    pub norm_beta: ParamId,
    pub expand: Conv1d,
    pub grn_gamma: ParamId,
    pub grn_beta: ParamId,
    pub project: Conv1d,
    pub layer_norm_eps: f64,
    pub grn_eps: f64,
}

impl ConvNeXtV2Block {
    pub fn new<T: Float>(
        b: &mut Builder<'_, T>,
        channels: usize,
        expansion: usize,
        kernel: usize,
        layer_norm_eps: f64,
        grn_eps: f64,
    ) -> Self {
        let hidden = channels * expansion;
        ConvNeXtV2Block {
            channels,
            depthwise: Conv1d::new(
                &mut b.sub("dwconv"),
                channels,
                channels,
                kernel,
                Conv1dOpts {
                    padding: kernel / 2,
                    groups: channels,
                    ..Default::default()
                },
            ),
            norm_gamma: b.constant("norm.gamma", &[channels], 1.0),
            norm_beta: b.constant("norm.beta", &[channels], 0.0),
            expand: Conv1d::new(&mut b.sub("pwconv1"), channels, hidden, 1, Conv1dOpts::default()),
            grn_gamma: b.constant("grn.gamma", &[hidden], 0.0),
            grn_beta: b.constant("grn.beta", &[hidden], 0.0),
            project: Conv1d::new(&mut b.sub("pwconv2"), hidden, channels, 1, Conv1dOpts::default()),
            layer_norm_eps,
            grn_eps,
        }
    }

    pub fn forward<'t, T: Float>(&self, p: Bind<'_, 't, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let shape = x.shape();
        if shape.len() != 3 || shape[1] != self.channels {
            return Err(Error::dim(format!(
                "ConvNeXt block of width {} got input {shape:?}",
                self.channels
            )));
        }
        let h = self.depthwise.forward(p, x)?;
        let h = h.layer_norm_channels(p.p(self.norm_gamma), p.p(self.norm_beta), T::lit(self.layer_norm_eps))?;
        let h = self.expand.forward(p, h)?.gelu();
        let h = h.grn(p.p(self.grn_gamma), p.p(self.grn_beta), T::lit(self.grn_eps))?;
        let h = self.project.forward(p, h)?;
        x.add(h)
    }
}
