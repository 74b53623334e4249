//! Residual block variants: the classification basic and bottleneck blocks
//! (batch-normalized) and the compact super-resolution block (no batch
//! norm). Attention always sits on the residual branch, after the last
//! convolution and before the addition, never on the shortcut.

use crate::attention::AttentionKind;
use crate::cost::CostRow;
use crate::error::{Error, Result};
use crate::layers::{BatchNormLayer, Conv2dLayer, FwdCtx};
use crate::rng::Pcg32;
use crate::tensor::{Scalar, Shape, Var};

pub const BOTTLENECK_EXPANSION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Basic,
    Bottleneck,
    CompactSr,
}

#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub attention: AttentionKind,
}

/// 3×3–BN–relu–3×3–BN residual branch with optional projection shortcut.
#[derive(Debug, Clone)]
pub struct BasicBlock {
    name: String,
    conv1: Conv2dLayer,
    bn1: BatchNormLayer,
    conv2: Conv2dLayer,
    bn2: BatchNormLayer,
    downsample: Option<(Conv2dLayer, BatchNormLayer)>,
    attention: AttentionKind,
    out_channels: usize,
}

impl BasicBlock {
    pub fn new(name: impl Into<String>, spec: &BlockSpec) -> Result<BasicBlock> {
        if spec.kind != BlockKind::Basic {
            return Err(Error::UnsupportedModel("BasicBlock expects kind Basic".into()));
        }
        let name = name.into();
        let (cin, cout, s) = (spec.in_channels, spec.out_channels, spec.stride);
        let downsample = if s != 1 || cin != cout {
            Some((
                Conv2dLayer::new(format!("{name}.down.conv"), cin, cout, 1, s, 0, false),
                BatchNormLayer::new(format!("{name}.down.bn"), cout),
            ))
        } else {
            None
        };
        Ok(BasicBlock {
            conv1: Conv2dLayer::new(format!("{name}.conv1"), cin, cout, 3, s, 1, false),
            bn1: BatchNormLayer::new(format!("{name}.bn1"), cout),
            conv2: Conv2dLayer::new(format!("{name}.conv2"), cout, cout, 3, 1, 1, false),
            bn2: BatchNormLayer::new(format!("{name}.bn2"), cout),
            downsample,
            attention: spec.attention,
            out_channels: cout,
            name,
        })
    }

    pub fn init(&self, store: &mut crate::tensor::ParamStore, rng: &mut Pcg32) -> Result<()> {
        self.conv1.init(store, rng, 1.0)?;
        self.bn1.init(store)?;
        self.conv2.init(store, rng, 1.0)?;
        self.bn2.init(store)?;
        if let Some((conv, bn)) = &self.downsample {
            conv.init(store, rng, 1.0)?;
            bn.init(store)?;
        }
        self.attention
            .init_params(&format!("{}.att", self.name), self.out_channels, store, rng)
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut FwdCtx<'_, T>, x: Var) -> Result<Var> {
        let mut y = self.conv1.forward(ctx, x)?;
        y = self.bn1.forward(ctx, y)?;
        y = ctx.tape.relu(y)?;
        y = self.conv2.forward(ctx, y)?;
        y = self.bn2.forward(ctx, y)?;
        y = self
            .attention
            .forward(ctx.tape, ctx.binding, &format!("{}.att", self.name), y)?;
        let shortcut = match &self.downsample {
            Some((conv, bn)) => {
                let s = conv.forward(ctx, x)?;
                bn.forward(ctx, s)?
            }
            None => x,
        };
        let sum = ctx.tape.add(y, shortcut)?;
        ctx.tape.relu(sum)
    }

    pub fn append_costs(&self, input: Shape, rows: &mut Vec<CostRow>) -> Result<Shape> {
        let mut s = self.conv1.append_costs(input, rows)?;
        s = self.bn1.append_costs(s, rows);
        rows.push(CostRow::elemwise(format!("{}.relu1", self.name), s.count() as u64));
        s = self.conv2.append_costs(s, rows)?;
        s = self.bn2.append_costs(s, rows);
        append_attention_costs(&self.attention, &self.name, s, rows);
        if let Some((conv, bn)) = &self.downsample {
            let d = conv.append_costs(input, rows)?;
            bn.append_costs(d, rows);
        }
        rows.push(CostRow::elemwise(
            format!("{}.add_relu", self.name),
            2 * s.count() as u64,
        ));
        Ok(s)
    }
}

/// 1×1 reduce → 3×3 → 1×1 expand (×4) residual branch.
#[derive(Debug, Clone)]
pub struct BottleneckBlock {
    name: String,
    conv1: Conv2dLayer,
    bn1: BatchNormLayer,
    conv2: Conv2dLayer,
    bn2: BatchNormLayer,
    conv3: Conv2dLayer,
    bn3: BatchNormLayer,
    downsample: Option<(Conv2dLayer, BatchNormLayer)>,
    attention: AttentionKind,
    out_channels: usize,
}

impl BottleneckBlock {
    pub fn new(name: impl Into<String>, spec: &BlockSpec) -> Result<BottleneckBlock> {
        if spec.kind != BlockKind::Bottleneck {
            return Err(Error::UnsupportedModel(
                "BottleneckBlock expects kind Bottleneck".into(),
            ));
        }
        if spec.out_channels % BOTTLENECK_EXPANSION != 0 {
            return Err(Error::UnsupportedModel(format!(
                "bottleneck output channels {} not divisible by expansion {}",
                spec.out_channels, BOTTLENECK_EXPANSION
            )));
        }
        let name = name.into();
        let (cin, cout, s) = (spec.in_channels, spec.out_channels, spec.stride);
        let mid = cout / BOTTLENECK_EXPANSION;
        let downsample = if s != 1 || cin != cout {
            Some((
                Conv2dLayer::new(format!("{name}.down.conv"), cin, cout, 1, s, 0, false),
                BatchNormLayer::new(format!("{name}.down.bn"), cout),
            ))
        } else {
            None
        };
        Ok(BottleneckBlock {
            conv1: Conv2dLayer::new(format!("{name}.conv1"), cin, mid, 1, 1, 0, false),
            bn1: BatchNormLayer::new(format!("{name}.bn1"), mid),
            conv2: Conv2dLayer::new(format!("{name}.conv2"), mid, mid, 3, s, 1, false),
            bn2: BatchNormLayer::new(format!("{name}.bn2"), mid),
            conv3: Conv2dLayer::new(format!("{name}.conv3"), mid, cout, 1, 1, 0, false),
            bn3: BatchNormLayer::new(format!("{name}.bn3"), cout),
            downsample,
            attention: spec.attention,
            out_channels: cout,
            name,
        })
    }

    pub fn init(&self, store: &mut crate::tensor::ParamStore, rng: &mut Pcg32) -> Result<()> {
        self.conv1.init(store, rng, 1.0)?;
        self.bn1.init(store)?;
        self.conv2.init(store, rng, 1.0)?;
        self.bn2.init(store)?;
        self.conv3.init(store, rng, 1.0)?;
        self.bn3.init(store)?;
        if let Some((conv, bn)) = &self.downsample {
            conv.init(store, rng, 1.0)?;
            bn.init(store)?;
        }
        self.attention
            .init_params(&format!("{}.att", self.name), self.out_channels, store, rng)
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut FwdCtx<'_, T>, x: Var) -> Result<Var> {
        let mut y = self.conv1.forward(ctx, x)?;
        y = self.bn1.forward(ctx, y)?;
        y = ctx.tape.relu(y)?;
        y = self.conv2.forward(ctx, y)?;
        y = self.bn2.forward(ctx, y)?;
        y = ctx.tape.relu(y)?;
        y = self.conv3.forward(ctx, y)?;
        y = self.bn3.forward(ctx, y)?;
        y = self
            .attention
            .forward(ctx.tape, ctx.binding, &format!("{}.att", self.name), y)?;
        let shortcut = match &self.downsample {
            Some((conv, bn)) => {
                let s = conv.forward(ctx, x)?;
                bn.forward(ctx, s)?
            }
            None => x,
        };
        let sum = ctx.tape.add(y, shortcut)?;
        ctx.tape.relu(sum)
    }

    pub fn append_costs(&self, input: Shape, rows: &mut Vec<CostRow>) -> Result<Shape> {
        let mut s = self.conv1.append_costs(input, rows)?;
        s = self.bn1.append_costs(s, rows);
        rows.push(CostRow::elemwise(format!("{}.relu1", self.name), s.count() as u64));
        s = self.conv2.append_costs(s, rows)?;
        s = self.bn2.append_costs(s, rows);
        rows.push(CostRow::elemwise(format!("{}.relu2", self.name), s.count() as u64));
        s = self.conv3.append_costs(s, rows)?;
        s = self.bn3.append_costs(s, rows);
        append_attention_costs(&self.attention, &self.name, s, rows);
        if let Some((conv, bn)) = &self.downsample {
            let d = conv.append_costs(input, rows)?;
            bn.append_costs(d, rows);
        }
        rows.push(CostRow::elemwise(
            format!("{}.add_relu", self.name),
            2 * s.count() as u64,
        ));
        Ok(s)
    }
}

/// conv–relu–conv plus identity shortcut, no batch normalization.
/// Attention sits after the second convolution, before the addition.
#[derive(Debug, Clone)]
pub struct SrBlock {
    name: String,
    conv1: Conv2dLayer,
    conv2: Conv2dLayer,
    attention: AttentionKind,
    channels: usize,
}

impl SrBlock {
    pub fn new(name: impl Into<String>, channels: usize, attention: AttentionKind) -> SrBlock {
        let name = name.into();
        SrBlock {
            conv1: Conv2dLayer::new(format!("{name}.conv1"), channels, channels, 3, 1, 1, true),
            conv2: Conv2dLayer::new(format!("{name}.conv2"), channels, channels, 3, 1, 1, true),
            attention,
            channels,
            name,
        }
    }

    pub fn from_spec(name: impl Into<String>, spec: &BlockSpec) -> Result<SrBlock> {
        if spec.kind != BlockKind::CompactSr {
            return Err(Error::UnsupportedModel("SrBlock expects kind CompactSr".into()));
        }
        if spec.in_channels != spec.out_channels || spec.stride != 1 {
            return Err(Error::UnsupportedModel(
                "compact SR block preserves channel count and spatial size".into(),
            ));
        }
        Ok(SrBlock::new(name, spec.in_channels, spec.attention))
    }

    /// Residual-branch convolutions are initialized at 0.1× Kaiming scale
    /// for stable training without normalization.
    pub fn init(&self, store: &mut crate::tensor::ParamStore, rng: &mut Pcg32) -> Result<()> {
        self.conv1.init(store, rng, 0.1)?;
        self.conv2.init(store, rng, 0.1)?;
        self.attention
            .init_params(&format!("{}.att", self.name), self.channels, store, rng)
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut FwdCtx<'_, T>, x: Var) -> Result<Var> {
        let mut y = self.conv1.forward(ctx, x)?;
        y = ctx.tape.relu(y)?;
        y = self.conv2.forward(ctx, y)?;
        y = self
            .attention
            .forward(ctx.tape, ctx.binding, &format!("{}.att", self.name), y)?;
        ctx.tape.add(y, x)
    }

    pub fn param_count(&self) -> u64 {
        self.conv1.param_count()
            + self.conv2.param_count()
            + self.attention.param_count(self.channels)
    }

    pub fn append_costs(&self, input: Shape, rows: &mut Vec<CostRow>) -> Result<Shape> {
        let mut s = self.conv1.append_costs(input, rows)?;
        rows.push(CostRow::elemwise(format!("{}.relu", self.name), s.count() as u64));
        s = self.conv2.append_costs(s, rows)?;
        append_attention_costs(&self.attention, &self.name, s, rows);
        rows.push(CostRow::elemwise(format!("{}.add", self.name), s.count() as u64));
        Ok(s)
    }
}

fn append_attention_costs(
    kind: &AttentionKind,
    block_name: &str,
    s: Shape,
    rows: &mut Vec<CostRow>,
) {
    if matches!(kind, AttentionKind::None) {
        return;
    }
    rows.push(CostRow::new(
        format!("{block_name}.att.{}", kind.label()),
        kind.param_count(s.c),
        kind.macs(s.n, s.c, s.h, s.w),
        kind.elem_ops(s.n, s.c, s.h, s.w),
    ));
}
