//! The local-global attention block and its single-branch ablations.

use crate::attention::config::LgaConfig;
use crate::attention::scaled::{attention_core_flops, scaled_attention};
use crate::autodiff::{Tape, VarId};
use crate::error::{Error, Result};
use crate::flops::FlopRow;
use crate::nn::{Bound, Conv2dLayer, ParamId, ParamStore, SepConv};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor4};

/// Which attention branches a block carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branches {
    Both,
    LocalOnly,
    GlobalOnly,
}

impl Branches {
    pub fn local(self) -> bool {
        self != Branches::GlobalOnly
    }

    pub fn global(self) -> bool {
        self != Branches::LocalOnly
    }
}

/// Separate depthwise + pointwise stacks producing Q, K and V.
#[derive(Clone, Debug)]
pub struct QkvProjection {
    pub kernel: usize,
    pub q: SepConv,
    pub k: SepConv,
    pub v: SepConv,
}

impl QkvProjection {
    fn init<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize, kernel: usize, rng: &mut Rng) -> Result<Self> {
        Ok(QkvProjection {
            kernel,
            q: SepConv::init(store, &format!("{name}.q"), d, kernel, rng)?,
            k: SepConv::init(store, &format!("{name}.k"), d, kernel, rng)?,
            v: SepConv::init(store, &format!("{name}.v"), d, kernel, rng)?,
        })
    }

    fn param_count(&self) -> usize {
        self.q.param_count() + self.k.param_count() + self.v.param_count()
    }

    fn flops(&self, h: usize, w: usize) -> u64 {
        self.q.flops(h, w) + self.k.flops(h, w) + self.v.flops(h, w)
    }
}

/// Intermediate values of one forward pass, kept for inspection and tests.
#[derive(Clone, Debug)]
pub struct LgaTrace {
    /// `X` followed by each multi-scale map `Y_i`.
    pub features: Vec<VarId>,
    /// Per-pixel softmax over the feature list, `(b, n_s + 1, h, w)`.
    pub scale_weights: VarId,
    pub x_weighted: VarId,
    /// `(1, D, h, w)` positional encoding at the input resolution.
    pub pe: VarId,
    pub local_out: Option<VarId>,
    pub global_out: Option<VarId>,
    /// Attention weights of every local kernel, then the global branch.
    pub attention: Vec<VarId>,
    pub fused: VarId,
    pub output: VarId,
}

/// Parameter handles of one block; the tensors live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct LgaBlock {
    pub cfg: LgaConfig,
    pub branches: Branches,
    pub scales: Vec<SepConv>,
    pub w_scale: Conv2dLayer,
    pub pe: ParamId,
    pub local: Vec<QkvProjection>,
    pub global: Option<QkvProjection>,
    pub alpha_local: Option<ParamId>,
    pub alpha_global: Option<ParamId>,
    pub final_conv: Conv2dLayer,
}

impl LgaBlock {
    pub fn init<T: Scalar>(
        cfg: &LgaConfig,
        branches: Branches,
        store: &mut ParamStore<T>,
        prefix: &str,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let scales = cfg
            .scale_kernels
            .iter()
            .enumerate()
            .map(|(i, &k)| SepConv::init(store, &format!("{prefix}.scale{i}"), d, k, rng))
            .collect::<Result<Vec<_>>>()?;
        let w_scale = Conv2dLayer::init(store, &format!("{prefix}.w_scale"), d, cfg.num_scales() + 1, 1, 1, rng)?;
        let (h0, w0) = cfg.pe_base;
        let pe_init = Tensor4::from_fn(Dims::new(1, d, h0, w0), |_, _, _, _| T::from_f64(rng.normal(0.0, 0.02)));
        let pe = store.add(format!("{prefix}.pe"), pe_init)?;
        let mut local = Vec::new();
        if branches.local() {
            for &k in &cfg.local_kernels {
                local.push(QkvProjection::init(store, &format!("{prefix}.local{k}"), d, k, rng)?);
            }
        }
        let global = if branches.global() {
            Some(QkvProjection::init(store, &format!("{prefix}.global"), d, cfg.global_kernel, rng)?)
        } else {
            None
        };
        let half = || Tensor4::full(Dims::SCALAR, T::from_f64(0.5));
        let alpha_local = match branches.local() {
            true => Some(store.add(format!("{prefix}.alpha_local"), half())?),
            false => None,
        };
        let alpha_global = match branches.global() {
            true => Some(store.add(format!("{prefix}.alpha_global"), half())?),
            false => None,
        };
        let final_conv = Conv2dLayer::init(store, &format!("{prefix}.out"), d, d, 1, 1, rng)?;
        Ok(LgaBlock {
            cfg: cfg.clone(),
            branches,
            scales,
            w_scale,
            pe,
            local,
            global,
            alpha_local,
            alpha_global,
            final_conv,
        })
    }

    fn check_input<T: Scalar>(&self, tape: &Tape<T>, x: VarId) -> Result<Dims> {
        let d = tape.value(x).dims();
        if d.c != self.cfg.embed_dim {
            return Err(Error::shape(format!(
                "block expects {} channels, input is {d:?}",
                self.cfg.embed_dim
            )));
        }
        Ok(d)
    }

    /// `[X, Y_1, …]` with `Y_i = pointwise(depthwise_i(X)) + X`.
    pub fn multiscale_features<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<Vec<VarId>> {
        self.check_input(tape, x)?;
        let mut out = vec![x];
        for sep in &self.scales {
            let y = sep.forward(tape, p, x)?;
            out.push(tape.add(y, x)?);
        }
        Ok(out)
    }

    /// Returns `(X_weighted, α)` where `α = softmax_c(w_scale ∗ X)`.
    pub fn adaptive_scale_mix<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: VarId,
        features: &[VarId],
    ) -> Result<(VarId, VarId)> {
        let n = self.cfg.num_scales() + 1;
        if features.len() != n {
            return Err(Error::Length(format!("expected {n} scale features, got {}", features.len())));
        }
        let logits = self.w_scale.forward(tape, p, x)?;
        let alpha = tape.softmax(logits, 1)?;
        let mut acc: Option<VarId> = None;
        for (i, &f) in features.iter().enumerate() {
            let a = tape.slice_channels(alpha, i, 1)?;
            let term = tape.mul(f, a)?;
            acc = Some(match acc {
                None => term,
                Some(s) => tape.add(s, term)?,
            });
        }
        Ok((acc.expect("at least one feature"), alpha))
    }

    /// Stored encoding resized to `h × w`; the stored tensor itself when the
    /// sizes already match.
    pub fn positional_encoding<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, h: usize, w: usize) -> Result<VarId> {
        let pe = p.get(self.pe);
        if (h, w) == self.cfg.pe_base {
            Ok(pe)
        } else {
            tape.bilinear_resize(pe, h, w)
        }
    }

    fn branch<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        proj: &QkvProjection,
        input: VarId,
        x: VarId,
    ) -> Result<(VarId, VarId)> {
        let q = proj.q.forward(tape, p, input)?;
        let k = proj.k.forward(tape, p, input)?;
        let v = proj.v.forward(tape, p, input)?;
        let att = scaled_attention(tape, q, k, v, x, self.cfg.num_heads)?;
        Ok((att.output, att.weights))
    }

    /// Mean over local kernels of attention on projections of
    /// `X_weighted + PE`, each with residual `+ X`. Also returns the
    /// per-kernel attention weights.
    pub fn local_branch<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x_weighted: VarId,
        pe: VarId,
        x: VarId,
    ) -> Result<(VarId, Vec<VarId>)> {
        if self.local.is_empty() {
            return Err(Error::config("block has no local branch"));
        }
        let input = tape.add_broadcast(x_weighted, pe)?;
        let mut outs = Vec::new();
        let mut weights = Vec::new();
        for proj in &self.local {
            let (o, w) = self.branch(tape, p, proj, input, x)?;
            outs.push(o);
            weights.push(w);
        }
        Ok((tape.mean_list(&outs)?, weights))
    }

    pub fn global_branch<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x_weighted: VarId,
        pe: VarId,
        x: VarId,
    ) -> Result<(VarId, VarId)> {
        let proj = self.global.as_ref().ok_or_else(|| Error::config("block has no global branch"))?;
        let input = tape.add_broadcast(x_weighted, pe)?;
        self.branch(tape, p, proj, input, x)
    }

    /// `α_local · local + α_global · global` over whichever terms are present.
    pub fn fuse_outputs<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        local_out: Option<VarId>,
        global_out: Option<VarId>,
    ) -> Result<VarId> {
        let mut terms = Vec::new();
        if let (Some(a), Some(l)) = (self.alpha_local, local_out) {
            terms.push(tape.scalar_mul(p.get(a), l)?);
        }
        if let (Some(a), Some(g)) = (self.alpha_global, global_out) {
            terms.push(tape.scalar_mul(p.get(a), g)?);
        }
        match terms[..] {
            [one] => Ok(one),
            [l, g] => tape.add(l, g),
            _ => Err(Error::config("nothing to fuse")),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<VarId> {
        Ok(self.forward_traced(tape, p, x)?.output)
    }

    pub fn forward_traced<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<LgaTrace> {
        self.forward_branches(tape, p, x, self.branches)
    }

    /// Forward pass restricted to `use_branches`, which must be a subset of
    /// the branches the block was built with. A skipped branch contributes
    /// nothing to the fusion, as if its α were zero.
    pub fn forward_branches<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: VarId,
        use_branches: Branches,
    ) -> Result<LgaTrace> {
        let d = self.check_input(tape, x)?;
        if (use_branches.local() && !self.branches.local()) || (use_branches.global() && !self.branches.global()) {
            return Err(Error::config(format!(
                "block built with {:?} cannot run {use_branches:?}",
                self.branches
            )));
        }
        let features = self.multiscale_features(tape, p, x)?;
        let (x_weighted, scale_weights) = self.adaptive_scale_mix(tape, p, x, &features)?;
        let pe = self.positional_encoding(tape, p, d.h, d.w)?;
        let mut attention = Vec::new();
        let local_out = if use_branches.local() {
            let (out, w) = self.local_branch(tape, p, x_weighted, pe, x)?;
            attention.extend(w);
            Some(out)
        } else {
            None
        };
        let global_out = if use_branches.global() {
            let (out, w) = self.global_branch(tape, p, x_weighted, pe, x)?;
            attention.push(w);
            Some(out)
        } else {
            None
        };
        let fused = self.fuse_outputs(tape, p, local_out, global_out)?;
        let output = self.final_conv.forward(tape, p, fused)?;
        Ok(LgaTrace {
            features,
            scale_weights,
            x_weighted,
            pe,
            local_out,
            global_out,
            attention,
            fused,
            output,
        })
    }

    pub fn param_count(&self) -> usize {
        let d = self.cfg.embed_dim;
        let (h0, w0) = self.cfg.pe_base;
        self.scales.iter().map(SepConv::param_count).sum::<usize>()
            + self.w_scale.param_count()
            + d * h0 * w0
            + self.local.iter().map(QkvProjection::param_count).sum::<usize>()
            + self.global.as_ref().map_or(0, QkvProjection::param_count)
            + self.alpha_local.map_or(0, |_| 1)
            + self.alpha_global.map_or(0, |_| 1)
            + self.final_conv.param_count()
    }

    /// Per-layer FLOPs for one `D × h × w` input.
    pub fn flops(&self, prefix: &str, h: usize, w: usize) -> Vec<FlopRow> {
        let mut rows = Vec::new();
        for (i, s) in self.scales.iter().enumerate() {
            rows.push(FlopRow::new(format!("{prefix}.scale{i}"), s.flops(h, w)));
        }
        rows.push(FlopRow::new(format!("{prefix}.w_scale"), self.w_scale.flops(h, w)));
        let (qk, av) = attention_core_flops(h * w, self.cfg.head_dim(), self.cfg.num_heads);
        for proj in &self.local {
            let name = format!("{prefix}.local{}", proj.kernel);
            rows.push(FlopRow::new(format!("{name}.qkv"), proj.flops(h, w)));
            rows.push(FlopRow::new(format!("{name}.attn"), qk + av));
        }
        if let Some(proj) = &self.global {
            rows.push(FlopRow::new(format!("{prefix}.global.qkv"), proj.flops(h, w)));
            rows.push(FlopRow::new(format!("{prefix}.global.attn"), qk + av));
        }
        rows.push(FlopRow::new(format!("{prefix}.out"), self.final_conv.flops(h, w)));
        rows
    }
}

/// Closed-form parameter count of a block with `branches` under `cfg`.
pub fn lga_param_formula(cfg: &LgaConfig, branches: Branches) -> usize {
    let d = cfg.embed_dim;
    let sep = |k: usize| d * k * k + d * d + 2 * d;
    let mut total = cfg.scale_kernels.iter().map(|&k| sep(k)).sum::<usize>();
    total += (cfg.num_scales() + 1) * (d + 1);
    total += d * cfg.pe_base.0 * cfg.pe_base.1;
    if branches.local() {
        total += cfg.local_kernels.iter().map(|&k| 3 * sep(k)).sum::<usize>() + 1;
    }
    if branches.global() {
        total += 3 * sep(cfg.global_kernel) + 1;
    }
    total + d * d + d
}
