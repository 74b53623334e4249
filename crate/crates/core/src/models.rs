//! Network builders: ResNet-18/50/101 classifiers with configurable stem
//! and a compact-block super-resolution network (16 blocks, width 64,
//! ×4 upscale by default), each with a uniform attention choice.

use crate::attention::AttentionKind;
use crate::blocks::{BasicBlock, BlockKind, BlockSpec, BottleneckBlock, SrBlock, BOTTLENECK_EXPANSION};
use crate::cost::{CostReport, CostRow};
use crate::error::{Error, Result};
use crate::layers::{BatchNormLayer, Conv2dLayer, FwdCtx, LinearLayer};
use crate::rng::Pcg32;
use crate::tensor::{Mode, ParamBinding, ParamStore, Scalar, Shape, Tape, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StemKind {
    /// 7×7 stride-2 convolution followed by a 3×3 stride-2 max pool.
    ImageNet,
    /// 3×3 stride-1 convolution, no pooling.
    Cifar,
}

#[derive(Debug, Clone)]
pub enum ModelSpec {
    Classifier {
        depth: usize,
        classes: usize,
        stem: StemKind,
        attention: AttentionKind,
        /// Stage-one width; 64 reproduces the reference networks, smaller
        /// values give toy models for gradient checking and desk runs.
        base_width: usize,
    },
    SuperRes {
        blocks: usize,
        width: usize,
        upscale: usize,
        attention: AttentionKind,
    },
}

impl ModelSpec {
    pub fn resnet(depth: usize, classes: usize, stem: StemKind, attention: AttentionKind) -> ModelSpec {
        ModelSpec::Classifier {
            depth,
            classes,
            stem,
            attention,
            base_width: 64,
        }
    }

    pub fn msrresnet(attention: AttentionKind) -> ModelSpec {
        ModelSpec::SuperRes {
            blocks: 16,
            width: 64,
            upscale: 4,
            attention,
        }
    }

    pub fn attention(&self) -> AttentionKind {
        match self {
            ModelSpec::Classifier { attention, .. } => *attention,
            ModelSpec::SuperRes { attention, .. } => *attention,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ModelSpec::Classifier { depth, attention, .. } => {
                format!("resnet{depth}+{}", attention.label())
            }
            ModelSpec::SuperRes { attention, .. } => format!("msrresnet+{}", attention.label()),
        }
    }

    /// Fixed-width numeric encoding for checkpoint metadata.
    pub fn encode(&self) -> Vec<f32> {
        fn att_code(a: &AttentionKind) -> (f32, f32, f32) {
            match a {
                AttentionKind::None => (0.0, 0.0, 0.0),
                AttentionKind::Pfca { lambda } => (1.0, 0.0, *lambda as f32),
                AttentionKind::Ca { reduction } => (2.0, *reduction as f32, 0.0),
                AttentionKind::Pa => (3.0, 0.0, 0.0),
            }
        }
        match self {
            ModelSpec::Classifier {
                depth,
                classes,
                stem,
                attention,
                base_width,
            } => {
                let (a, r, l) = att_code(attention);
                let s = match stem {
                    StemKind::ImageNet => 0.0,
                    StemKind::Cifar => 1.0,
                };
                vec![0.0, *depth as f32, *classes as f32, s, a, r, l, *base_width as f32, 0.0]
            }
            ModelSpec::SuperRes {
                blocks,
                width,
                upscale,
                attention,
            } => {
                let (a, r, l) = att_code(attention);
                vec![1.0, *blocks as f32, 0.0, 0.0, a, r, l, *width as f32, *upscale as f32]
            }
        }
    }

    pub fn decode(data: &[f32]) -> Result<ModelSpec> {
        if data.len() != 9 {
            return Err(Error::Config(format!(
                "model spec metadata has {} slots, expected 9",
                data.len()
            )));
        }
        let attention = match data[4] as u32 {
            0 => AttentionKind::None,
            1 => AttentionKind::Pfca { lambda: data[6] as f64 },
            2 => AttentionKind::Ca { reduction: data[5] as usize },
            3 => AttentionKind::Pa,
            other => {
                return Err(Error::Config(format!("unknown attention code {other}")));
            }
        };
        match data[0] as u32 {
            0 => Ok(ModelSpec::Classifier {
                depth: data[1] as usize,
                classes: data[2] as usize,
                stem: if data[3] == 0.0 { StemKind::ImageNet } else { StemKind::Cifar },
                attention,
                base_width: data[7] as usize,
            }),
            1 => Ok(ModelSpec::SuperRes {
                blocks: data[1] as usize,
                width: data[7] as usize,
                upscale: data[8] as usize,
                attention,
            }),
            other => Err(Error::Config(format!("unknown model family code {other}"))),
        }
    }
}

struct ClassifierNet {
    stem_conv: Conv2dLayer,
    stem_bn: BatchNormLayer,
    has_maxpool: bool,
    blocks: Vec<ClassifierBlock>,
    head: LinearLayer,
}

enum ClassifierBlock {
    Basic(BasicBlock),
    Bottleneck(BottleneckBlock),
}

struct SrNet {
    conv_first: Conv2dLayer,
    blocks: Vec<SrBlock>,
    upconvs: Vec<Conv2dLayer>,
    conv_hr: Conv2dLayer,
    conv_last: Conv2dLayer,
    upscale: usize,
}

enum Net {
    Classifier(ClassifierNet),
    Sr(SrNet),
}

/// A built network: its spec, its parameters, and its layer structure.
pub struct Model {
    pub spec: ModelSpec,
    pub store: ParamStore,
    net: Net,
}

/// Stage depths per classification depth.
fn resnet_layout(depth: usize) -> Result<(BlockKind, [usize; 4])> {
    match depth {
        18 => Ok((BlockKind::Basic, [2, 2, 2, 2])),
        50 => Ok((BlockKind::Bottleneck, [3, 4, 6, 3])),
        101 => Ok((BlockKind::Bottleneck, [3, 4, 23, 3])),
        other => Err(Error::UnsupportedModel(format!(
            "unsupported ResNet depth {other} (expected 18, 50, or 101)"
        ))),
    }
}

impl Model {
    /// Deterministic build: the same spec and seed always produce a
    /// bitwise-identical parameter store.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Model> {
        let mut rng = Pcg32::new(seed);
        let mut store = ParamStore::new();
        let net = match spec {
            ModelSpec::Classifier {
                depth,
                classes,
                stem,
                attention,
                base_width,
            } => {
                let (kind, counts) = resnet_layout(*depth)?;
                if *base_width == 0 || *classes == 0 {
                    return Err(Error::UnsupportedModel(
                        "classifier needs base_width >= 1 and classes >= 1".into(),
                    ));
                }
                let w = *base_width;
                let expansion = match kind {
                    BlockKind::Basic => 1,
                    _ => BOTTLENECK_EXPANSION,
                };
                let (stem_conv, has_maxpool) = match stem {
                    StemKind::ImageNet => {
                        (Conv2dLayer::new("stem.conv", 3, w, 7, 2, 3, false), true)
                    }
                    StemKind::Cifar => (Conv2dLayer::new("stem.conv", 3, w, 3, 1, 1, false), false),
                };
                let stem_bn = BatchNormLayer::new("stem.bn", w);
                stem_conv.init(&mut store, &mut rng, 1.0)?;
                stem_bn.init(&mut store)?;

                let mut blocks = Vec::new();
                let mut in_ch = w;
                for (stage, &count) in counts.iter().enumerate() {
                    let stage_width = w << stage;
                    let out_ch = stage_width * expansion;
                    for b in 0..count {
                        let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                        let bspec = BlockSpec {
                            kind,
                            in_channels: in_ch,
                            out_channels: out_ch,
                            stride,
                            attention: *attention,
                        };
                        let name = format!("body.{stage}.{b}");
                        let block = match kind {
                            BlockKind::Basic => ClassifierBlock::Basic(BasicBlock::new(&name, &bspec)?),
                            BlockKind::Bottleneck => {
                                ClassifierBlock::Bottleneck(BottleneckBlock::new(&name, &bspec)?)
                            }
                            BlockKind::CompactSr => unreachable!(),
                        };
                        match &block {
                            ClassifierBlock::Basic(b) => b.init(&mut store, &mut rng)?,
                            ClassifierBlock::Bottleneck(b) => b.init(&mut store, &mut rng)?,
                        }
                        blocks.push(block);
                        in_ch = out_ch;
                    }
                }
                let head = LinearLayer::new("head.fc", in_ch, *classes);
                head.init(&mut store, &mut rng)?;
                Net::Classifier(ClassifierNet {
                    stem_conv,
                    stem_bn,
                    has_maxpool,
                    blocks,
                    head,
                })
            }
            ModelSpec::SuperRes {
                blocks,
                width,
                upscale,
                attention,
            } => {
                if *upscale != 4 {
                    return Err(Error::UnsupportedModel(format!(
                        "super-resolution network supports upscale 4 only, got {upscale}"
                    )));
                }
                if *blocks == 0 || *width == 0 {
                    return Err(Error::UnsupportedModel(
                        "super-resolution network needs blocks >= 1 and width >= 1".into(),
                    ));
                }
                let w = *width;
                let conv_first = Conv2dLayer::new("head_conv", 3, w, 3, 1, 1, true);
                conv_first.init(&mut store, &mut rng, 1.0)?;
                let mut body = Vec::new();
                for b in 0..*blocks {
                    let block = SrBlock::new(format!("body.{b}"), w, *attention);
                    block.init(&mut store, &mut rng)?;
                    body.push(block);
                }
                let mut upconvs = Vec::new();
                for stage in 0..2 {
                    let up = Conv2dLayer::new(format!("up{stage}.conv"), w, w * 4, 3, 1, 1, true);
                    up.init(&mut store, &mut rng, 1.0)?;
                    upconvs.push(up);
                }
                let conv_hr = Conv2dLayer::new("hr_conv", w, w, 3, 1, 1, true);
                conv_hr.init(&mut store, &mut rng, 1.0)?;
                let conv_last = Conv2dLayer::new("out_conv", w, 3, 3, 1, 1, true);
                conv_last.init(&mut store, &mut rng, 1.0)?;
                Net::Sr(SrNet {
                    conv_first,
                    blocks: body,
                    upconvs,
                    conv_hr,
                    conv_last,
                    upscale: *upscale,
                })
            }
        };
        Ok(Model {
            spec: spec.clone(),
            store,
            net,
        })
    }

    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<ParamBinding> {
        self.store.bind(tape)
    }

    /// Runs the network on an input already on the tape. Train mode updates
    /// batch-norm running statistics inside the store.
    pub fn forward<T: Scalar>(
        &mut self,
        tape: &mut Tape<T>,
        binding: &ParamBinding,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let store = &mut self.store;
        let mut ctx = FwdCtx {
            tape,
            binding,
            store,
            mode,
        };
        match &self.net {
            Net::Classifier(net) => {
                let mut y = net.stem_conv.forward(&mut ctx, x)?;
                y = net.stem_bn.forward(&mut ctx, y)?;
                y = ctx.tape.relu(y)?;
                if net.has_maxpool {
                    y = ctx.tape.max_pool(y, 3, 2, 1)?;
                }
                for block in &net.blocks {
                    y = match block {
                        ClassifierBlock::Basic(b) => b.forward(&mut ctx, y)?,
                        ClassifierBlock::Bottleneck(b) => b.forward(&mut ctx, y)?,
                    };
                }
                y = ctx.tape.global_avg_pool(y)?;
                net.head.forward(&mut ctx, y)
            }
            Net::Sr(net) => {
                let mut y = net.conv_first.forward(&mut ctx, x)?;
                for block in &net.blocks {
                    y = block.forward(&mut ctx, y)?;
                }
                for up in &net.upconvs {
                    y = up.forward(&mut ctx, y)?;
                    y = ctx.tape.pixel_shuffle(y, 2)?;
                    y = ctx.tape.leaky_relu(y, LEAKY_SLOPE)?;
                }
                y = net.conv_hr.forward(&mut ctx, y)?;
                y = ctx.tape.leaky_relu(y, LEAKY_SLOPE)?;
                y = net.conv_last.forward(&mut ctx, y)?;
                let skip = ctx.tape.bilinear_up(x, net.upscale)?;
                ctx.tape.add(y, skip)
            }
        }
    }

    /// One-shot inference: builds a private tape, returns the output tensor.
    pub fn predict(&mut self, input: &Tensor<f32>, mode: Mode) -> Result<Tensor<f32>> {
        let mut tape = Tape::<f32>::new();
        let binding = self.bind(&mut tape)?;
        let x = tape.leaf(input.clone())?;
        let y = self.forward(&mut tape, &binding, x, mode)?;
        Ok(tape.value(y).clone())
    }

    /// Analytic per-layer cost walk on the given input shape.
    pub fn cost_report(&self, input: Shape) -> Result<CostReport> {
        let mut rows = Vec::new();
        match &self.net {
            Net::Classifier(net) => {
                if input.c != 3 {
                    return Err(Error::ChannelMismatch {
                        expected: 3,
                        got: input.c,
                    });
                }
                let mut s = net.stem_conv.append_costs(input, &mut rows)?;
                s = net.stem_bn.append_costs(s, &mut rows);
                rows.push(CostRow::elemwise("stem.relu", s.count() as u64));
                if net.has_maxpool {
                    let oh = crate::tensor::conv_out_dim(s.h, 3, 2, 1)?;
                    let ow = crate::tensor::conv_out_dim(s.w, 3, 2, 1)?;
                    s = Shape::new(s.n, s.c, oh, ow)?;
                    rows.push(CostRow::elemwise("stem.maxpool", 9 * s.count() as u64));
                }
                for block in &net.blocks {
                    s = match block {
                        ClassifierBlock::Basic(b) => b.append_costs(s, &mut rows)?,
                        ClassifierBlock::Bottleneck(b) => b.append_costs(s, &mut rows)?,
                    };
                }
                rows.push(CostRow::elemwise("pool", s.count() as u64));
                let pooled = Shape::new(s.n, s.c, 1, 1)?;
                net.head.append_costs(pooled, &mut rows)?;
            }
            Net::Sr(net) => {
                if input.c != 3 {
                    return Err(Error::ChannelMismatch {
                        expected: 3,
                        got: input.c,
                    });
                }
                let mut s = net.conv_first.append_costs(input, &mut rows)?;
                for block in &net.blocks {
                    s = block.append_costs(s, &mut rows)?;
                }
                for (i, up) in net.upconvs.iter().enumerate() {
                    s = up.append_costs(s, &mut rows)?;
                    s = Shape::new(s.n, s.c / 4, s.h * 2, s.w * 2)?;
                    rows.push(CostRow::elemwise(format!("up{i}.lrelu"), s.count() as u64));
                }
                s = net.conv_hr.append_costs(s, &mut rows)?;
                rows.push(CostRow::elemwise("hr_lrelu", s.count() as u64));
                s = net.conv_last.append_costs(s, &mut rows)?;
                rows.push(CostRow::elemwise("global_skip", 9 * s.count() as u64));
            }
        }
        Ok(CostReport::from_rows(self.spec.describe(), input, rows))
    }
}
