use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{hann_periodic, FramePlan, SpectralEngine};
use crate::error::{Error, Result};
use crate::model::layers::{Bind, Builder, Conv2d};
use crate::model::DiscriminatorConfig;
use crate::numerics::{Conv2dOpts, Float, ParamStore, Tape, Var};

/// Score map and intermediate activations of one sub-discriminator.
#[derive(Debug, Clone)]
pub struct DiscriminatorOutput<'t, T: Float> {
    pub score: Var<'t, T>,
    pub features: Vec<Var<'t, T>>,
}

fn conv_stack<'t, T: Float>(
    p: Bind<'_, 't, T>,
    convs: &[Conv2d],
    post: &Conv2d,
    slope: f64,
    x: Var<'t, T>,
) -> Result<DiscriminatorOutput<'t, T>> {
    let mut h = x;
    let mut features = Vec::with_capacity(convs.len() + 1);
    for conv in convs {
        h = conv.forward(p, h)?.leaky_relu(T::lit(slope));
        features.push(h);
    }
    let score = post.forward(p, h)?;
    features.push(score);
    Ok(DiscriminatorOutput { score, features })
}

/// Judges a waveform folded into a `[time / period, period]` grid.
#[derive(Debug, Clone)]
pub struct PeriodDiscriminator {
    pub period: usize,
    pub convs: Vec<Conv2d>,
    pub post: Conv2d,
}

impl PeriodDiscriminator {
    fn new<T: Float>(b: &mut Builder<'_, T>, period: usize, c: &DiscriminatorConfig) -> Self {
        let k = c.period_kernel;
        let mut cin = 1;
        let last = c.period_channels.len().saturating_sub(1);
        let convs = c
            .period_channels
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let stride = if i == last { 1 } else { c.period_stride };
                let conv = Conv2d::new(
                    &mut b.sub(&format!("convs.{i}")),
                    cin,
                    cout,
                    (k, 1),
                    Conv2dOpts {
                        stride: (stride, 1),
                        padding: ((k - 1) / 2, 0),
                    },
                );
                cin = cout;
                conv
            })
            .collect();
        let post = Conv2d::new(
            &mut b.sub("post"),
            cin,
            1,
            (3, 1),
            Conv2dOpts {
                stride: (1, 1),
                padding: (1, 0),
            },
        );
        PeriodDiscriminator { period, convs, post }
    }

    pub fn forward<'t, T: Float>(
        &self,
        p: Bind<'_, 't, T>,
        slope: f64,
        x: Var<'t, T>,
    ) -> Result<DiscriminatorOutput<'t, T>> {
        let &[batch, len] = x.shape().as_slice() else {
            return Err(Error::dim(format!("discriminator expects [batch, time], got {:?}", x.shape())));
        };
        let pad = (self.period - len % self.period) % self.period;
        let x = if pad > 0 { x.reflect_pad_right(pad)? } else { x };
        let rows = (len + pad) / self.period;
        let x = x.reshape(&[batch, 1, rows, self.period])?;
        conv_stack(p, &self.convs, &self.post, slope, x)
    }
}

/// Judges the amplitude spectrogram at one STFT resolution.
#[derive(Debug, Clone)]
pub struct ResolutionDiscriminator<T: Float> {
    pub resolution: (usize, usize, usize),
    pub engine: SpectralEngine<T>,
    pub convs: Vec<Conv2d>,
    pub post: Conv2d,
}

impl<T: Float> ResolutionDiscriminator<T> {
    fn new(b: &mut Builder<'_, T>, resolution: (usize, usize, usize), c: &DiscriminatorConfig) -> Result<Self> {
        let (n_fft, hop, win) = resolution;
        if win > n_fft || hop == 0 || hop > n_fft {
            return Err(Error::Config(format!("invalid discriminator resolution {resolution:?}")));
        }
        let engine = SpectralEngine::new(FramePlan {
            fft_size: n_fft,
            hop,
            window: hann_periodic(win),
            pad: (n_fft - hop) / 2,
            offset: (n_fft - win) / 2,
        })?;
        let ch = c.resolution_channels;
        let freq = |stride| Conv2dOpts {
            stride: (stride, 1),
            padding: (4, 1),
        };
        let square = Conv2dOpts {
            stride: (1, 1),
            padding: (1, 1),
        };
        let convs = vec![
            Conv2d::new(&mut b.sub("convs.0"), 1, ch, (9, 3), freq(1)),
            Conv2d::new(&mut b.sub("convs.1"), ch, ch, (9, 3), freq(2)),
            Conv2d::new(&mut b.sub("convs.2"), ch, ch, (9, 3), freq(2)),
            Conv2d::new(&mut b.sub("convs.3"), ch, ch, (9, 3), freq(2)),
            Conv2d::new(&mut b.sub("convs.4"), ch, ch, (3, 3), square),
        ];
        let post = Conv2d::new(&mut b.sub("post"), ch, 1, (3, 3), square);
        Ok(ResolutionDiscriminator {
            resolution,
            engine,
            convs,
            post,
        })
    }

    pub fn forward<'t>(&self, p: Bind<'_, 't, T>, slope: f64, x: Var<'t, T>) -> Result<DiscriminatorOutput<'t, T>> {
        let amp = self.engine.amplitude_var(x)?;
        let s = amp.shape();
        let amp = amp.reshape(&[s[0], 1, s[1], s[2]])?;
        conv_stack(p, &self.convs, &self.post, slope, amp)
    }
}

#[derive(Debug, Clone)]
pub struct MultiPeriodDiscriminator {
    pub subs: Vec<PeriodDiscriminator>,
}

#[derive(Debug, Clone)]
pub struct MultiResolutionDiscriminator<T: Float> {
    pub subs: Vec<ResolutionDiscriminator<T>>,
}

/// Both discriminator families and their parameters.
#[derive(Debug, Clone)]
pub struct Discriminators<T: Float> {
    pub config: DiscriminatorConfig,
    pub params: ParamStore<T>,
    pub mpd: MultiPeriodDiscriminator,
    pub mrd: MultiResolutionDiscriminator<T>,
}

impl<T: Float> Discriminators<T> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if config.periods.iter().any(|&p| p == 0)
            || config.period_channels.is_empty()
            || config.period_kernel % 2 == 0
            || config.period_stride == 0
            || config.resolution_channels == 0
        {
            return Err(Error::Config(format!("invalid discriminator config {config:?}")));
        }
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder::new(&mut params, &mut rng, "disc");
        let mpd = MultiPeriodDiscriminator {
            subs: config
                .periods
                .iter()
                .map(|&p| PeriodDiscriminator::new(&mut b.sub(&format!("mpd.{p}")), p, &config))
                .collect(),
        };
        let mrd = MultiResolutionDiscriminator {
            subs: config
                .resolutions
                .iter()
                .enumerate()
                .map(|(i, &r)| ResolutionDiscriminator::new(&mut b.sub(&format!("mrd.{i}")), r, &config))
                .collect::<Result<_>>()?,
        };
        Ok(Discriminators {
            config,
            params,
            mpd,
            mrd,
        })
    }

    pub fn num_subs(&self) -> usize {
        self.mpd.subs.len() + self.mrd.subs.len()
    }

    /// Runs every sub-discriminator on a `[batch, time]` waveform, period
    /// discriminators first. With `frozen`, parameters enter as constants.
    pub fn discriminate<'t>(
        &self,
        tape: &'t Tape<T>,
        waveform: Var<'t, T>,
        frozen: bool,
    ) -> Result<Vec<DiscriminatorOutput<'t, T>>> {
        let s = waveform.shape();
        if s.len() != 2 {
            return Err(Error::dim(format!("discriminator expects [batch, time], got {s:?}")));
        }
        let min = self.config.min_length();
        if s[1] < min {
            return Err(Error::InvalidArgument(format!(
                "waveform of {} samples is too short for the discriminators (minimum {min})",
                s[1]
            )));
        }
        let p = Bind {
            tape,
            store: &self.params,
            frozen,
        };
        let slope = self.config.leaky_slope;
        let mut out = Vec::with_capacity(self.num_subs());
        for d in &self.mpd.subs {
            out.push(d.forward(p, slope, waveform)?);
        }
        for d in &self.mrd.subs {
            out.push(d.forward(p, slope, waveform)?);
        }
        Ok(out)
    }
}

/// Score maps of a list of discriminator outputs.
pub fn scores<'t, T: Float>(outputs: &[DiscriminatorOutput<'t, T>]) -> Vec<Var<'t, T>> {
    outputs.iter().map(|o| o.score).collect()
}
