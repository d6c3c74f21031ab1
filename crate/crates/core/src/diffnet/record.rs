use std::sync::Arc;

use num_complex::Complex64;

use super::ops;
use super::params::{ParamId, ParamStore};
use super::{Batch, Mode};
use crate::error::{Error, Result};
use crate::filters::{resample_half, GainInterpolation};
use crate::harmonics::ShtPlan;
use crate::sphgrid::make_grid;

pub(crate) const NORM_EPS: f64 = 1e-5;
pub(crate) const NORM_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

/// Parameter handles of one normalization layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormParams {
    pub scale: ParamId,
    pub shift: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

#[derive(Debug)]
enum Op {
    Input,
    SphConv {
        input: NodeId,
        anchors: ParamId,
        bias: ParamId,
        interp: GainInterpolation,
        gains: Vec<f64>,
        spectrum: Vec<Complex64>,
        plan: Arc<ShtPlan>,
    },
    Pointwise {
        input: NodeId,
        weight: ParamId,
        bias: ParamId,
    },
    Relu {
        input: NodeId,
    },
    Norm {
        input: NodeId,
        params: NormParams,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        mode: Mode,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    SpectralResample {
        input: NodeId,
        from: Arc<ShtPlan>,
        to: Arc<ShtPlan>,
    },
    AvgPool {
        input: NodeId,
    },
    Nearest {
        input: NodeId,
    },
    PlanarConv {
        input: NodeId,
        kernel: ParamId,
        bias: ParamId,
    },
}

#[derive(Debug)]
struct Node {
    value: Batch,
    op: Op,
}

/// Ordered list of executed primitives with what their adjoints need.
#[derive(Debug, Default)]
pub struct ComputationRecord {
    nodes: Vec<Node>,
}

/// Gradients with respect to every node reached during a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Batch>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Batch> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

fn check_shape(store: &ParamStore, id: ParamId, shape: &[usize], what: &str) -> Result<()> {
    if id.0 >= store.len() {
        return Err(Error::ShapeMismatch(format!("{what}: parameter handle out of range")));
    }
    let p = store.get(id);
    if p.shape() != shape {
        return Err(Error::ShapeMismatch(format!(
            "{what}: parameter {} has shape {:?}, expected {:?}",
            p.name(),
            p.shape(),
            shape
        )));
    }
    Ok(())
}

impl ComputationRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Batch {
        &self.nodes[id.0].value
    }

    pub fn into_value(mut self, id: NodeId) -> Batch {
        self.nodes.swap_remove(id.0).value
    }

    fn push(&mut self, value: Batch, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, x: Batch) -> NodeId {
        self.push(x, Op::Input)
    }

    /// Spherical convolution with anchors shaped `[cin, cout, K]` and biases `[cout]`.
    pub fn sph_conv(&mut self, store: &ParamStore, x: NodeId, anchors: ParamId, bias: ParamId) -> Result<NodeId> {
        let xb = &self.nodes[x.0].value;
        let (b, cin, samples) = (xb.bandlimit, xb.channels, xb.samples);
        let shape = store.get(anchors).shape().to_vec();
        if shape.len() != 3 || shape[0] != cin {
            return Err(Error::ShapeMismatch(format!(
                "sph_conv: anchors {:?} for {cin} input channels",
                shape
            )));
        }
        let (cout, k) = (shape[1], shape[2]);
        check_shape(store, bias, &[cout], "sph_conv bias")?;
        let interp = GainInterpolation::new(k, b)?;
        let a = store.get(anchors).values();
        let mut gains = vec![0.0; cin * cout * b];
        for (pair, g) in gains.chunks_mut(b).enumerate() {
            interp.apply(&a[pair * k..(pair + 1) * k], g);
        }
        let plan = ShtPlan::for_bandlimit(b)?;
        let spectrum = plan.analyze(&xb.data, samples * cin, true);
        let mixed = ops::mix_degrees(&plan.half_degrees(), b, &spectrum, samples, cin, cout, &gains);
        let mut data = plan.synthesize(&mixed, samples * cout);
        let nodes = xb.nodes();
        let bv = store.get(bias).values();
        for (i, plane) in data.chunks_mut(nodes).enumerate() {
            let beta = bv[i % cout];
            plane.iter_mut().for_each(|v| *v += beta);
        }
        let value = Batch::new(samples, cout, b, data)?;
        Ok(self.push(
            value,
            Op::SphConv {
                input: x,
                anchors,
                bias,
                interp,
                gains,
                spectrum,
                plan,
            },
        ))
    }

    /// Per-node channel mixing with weight `[cout, cin]` and bias `[cout]`.
    pub fn pointwise(&mut self, store: &ParamStore, x: NodeId, weight: ParamId, bias: ParamId) -> Result<NodeId> {
        let xb = &self.nodes[x.0].value;
        let shape = store.get(weight).shape();
        if shape.len() != 2 || shape[1] != xb.channels {
            return Err(Error::ShapeMismatch(format!(
                "pointwise: weight {:?} for {} input channels",
                shape, xb.channels
            )));
        }
        let cout = shape[0];
        check_shape(store, bias, &[cout], "pointwise bias")?;
        let data = ops::pointwise_forward(
            &xb.data,
            xb.samples,
            xb.channels,
            cout,
            xb.nodes(),
            store.get(weight).values(),
            store.get(bias).values(),
        );
        let value = Batch::new(xb.samples, cout, xb.bandlimit, data)?;
        Ok(self.push(value, Op::Pointwise { input: x, weight, bias }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let xb = &self.nodes[x.0].value;
        let value = Batch {
            data: xb.data.iter().map(|v| v.max(0.0)).collect(),
            ..*xb
        };
        self.push(value, Op::Relu { input: x })
    }

    /// Quadrature-weighted normalization. In [`Mode::Train`] batch statistics are
    /// used and folded into the running averages.
    pub fn norm(&mut self, store: &mut ParamStore, x: NodeId, params: NormParams, mode: Mode) -> Result<NodeId> {
        let xb = &self.nodes[x.0].value;
        let c = xb.channels;
        for id in [params.scale, params.shift, params.running_mean, params.running_var] {
            check_shape(store, id, &[c], "norm")?;
        }
        let (mean, var) = match mode {
            Mode::Train => {
                let grid = make_grid(xb.bandlimit)?;
                let areas = ops::node_areas(&grid);
                let (mean, var) = ops::weighted_moments(&xb.data, xb.samples, c, &areas);
                let rm = store.get_mut(params.running_mean).values_mut();
                rm.iter_mut()
                    .zip(&mean)
                    .for_each(|(r, m)| *r = NORM_MOMENTUM * *r + (1.0 - NORM_MOMENTUM) * m);
                let rv = store.get_mut(params.running_var).values_mut();
                rv.iter_mut()
                    .zip(&var)
                    .for_each(|(r, v)| *r = NORM_MOMENTUM * *r + (1.0 - NORM_MOMENTUM) * v);
                (mean, var)
            }
            Mode::Eval => (
                store.get(params.running_mean).values().to_vec(),
                store.get(params.running_var).values().to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        let nodes = xb.nodes();
        let mut xhat = xb.data.clone();
        let mut data = vec![0.0; xhat.len()];
        let (scale, shift) = (store.get(params.scale).values(), store.get(params.shift).values());
        for (i, (h, y)) in xhat.chunks_mut(nodes).zip(data.chunks_mut(nodes)).enumerate() {
            let ch = i % c;
            for (hv, yv) in h.iter_mut().zip(y.iter_mut()) {
                *hv = (*hv - mean[ch]) * inv_std[ch];
                *yv = scale[ch] * *hv + shift[ch];
            }
        }
        let value = Batch { data, ..*xb };
        Ok(self.push(
            value,
            Op::Norm {
                input: x,
                params,
                xhat,
                inv_std,
                mode,
            },
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if (av.samples, av.channels, av.bandlimit) != (bv.samples, bv.channels, bv.bandlimit) {
            return Err(Error::ShapeMismatch(format!(
                "add: {}x{}@{} vs {}x{}@{}",
                av.samples, av.channels, av.bandlimit, bv.samples, bv.channels, bv.bandlimit
            )));
        }
        let value = Batch {
            data: av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect(),
            ..*av
        };
        Ok(self.push(value, Op::Add { a, b }))
    }

    /// Spectral truncation to bandlimit `B/2` on the coarser grid.
    pub fn downsample_spectral(&mut self, x: NodeId) -> Result<NodeId> {
        let b = self.nodes[x.0].value.bandlimit;
        if !b.is_multiple_of(2) {
            return Err(Error::InvalidBandlimit(b));
        }
        self.spectral_resample(x, b / 2)
    }

    /// Spectral zero-padding to bandlimit `2B` on the finer grid.
    pub fn upsample_spectral(&mut self, x: NodeId) -> Result<NodeId> {
        let b = self.nodes[x.0].value.bandlimit;
        self.spectral_resample(x, 2 * b)
    }

    fn spectral_resample(&mut self, x: NodeId, b_to: usize) -> Result<NodeId> {
        let xb = &self.nodes[x.0].value;
        let from = ShtPlan::for_bandlimit(xb.bandlimit)?;
        let to = ShtPlan::for_bandlimit(b_to)?;
        let n_sig = xb.signals();
        let spectrum = from.analyze(&xb.data, n_sig, true);
        let moved = resample_half(&from, &to, &spectrum, n_sig);
        let value = Batch::new(xb.samples, xb.channels, b_to, to.synthesize(&moved, n_sig))?;
        Ok(self.push(value, Op::SpectralResample { input: x, from, to }))
    }

    /// 2x2 average pooling on the equiangular lattice.
    pub fn avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let xb = &self.nodes[x.0].value;
        if !xb.bandlimit.is_multiple_of(2) {
            return Err(Error::InvalidBandlimit(xb.bandlimit));
        }
        let data = ops::avg_pool(&xb.data, xb.signals(), xb.resolution());
        let value = Batch::new(xb.samples, xb.channels, xb.bandlimit / 2, data)?;
        Ok(self.push(value, Op::AvgPool { input: x }))
    }

    /// Nearest-neighbor 2x upsampling on the equiangular lattice.
    pub fn upsample_nearest(&mut self, x: NodeId) -> Result<NodeId> {
        let xb = &self.nodes[x.0].value;
        let data = ops::nearest_up(&xb.data, xb.signals(), xb.resolution());
        let value = Batch::new(xb.samples, xb.channels, xb.bandlimit * 2, data)?;
        Ok(self.push(value, Op::Nearest { input: x }))
    }

    /// 3x3 cross-correlation with kernel `[cout, cin, 3, 3]` and bias `[cout]`.
    pub fn planar_conv(&mut self, store: &ParamStore, x: NodeId, kernel: ParamId, bias: ParamId) -> Result<NodeId> {
        let xb = &self.nodes[x.0].value;
        let shape = store.get(kernel).shape();
        if shape.len() != 4 || shape[1] != xb.channels || shape[2] != 3 || shape[3] != 3 {
            return Err(Error::ShapeMismatch(format!(
                "planar_conv: kernel {:?} for {} input channels",
                shape, xb.channels
            )));
        }
        let cout = shape[0];
        check_shape(store, bias, &[cout], "planar_conv bias")?;
        let data = ops::planar_conv_forward(
            &xb.data,
            xb.samples,
            xb.channels,
            cout,
            xb.resolution(),
            store.get(kernel).values(),
            store.get(bias).values(),
        );
        let value = Batch::new(xb.samples, cout, xb.bandlimit, data)?;
        Ok(self.push(value, Op::PlanarConv { input: x, kernel, bias }))
    }

    /// Reverse pass from `output` seeded with `grad`. Parameter gradients are
    /// added to the accumulators in `store`.
    pub fn backward(&self, store: &mut ParamStore, output: NodeId, grad: Batch) -> Result<Gradients> {
        let out = &self.nodes[output.0].value;
        if grad.data.len() != out.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "seed gradient has {} values, output has {}",
                grad.data.len(),
                out.data.len()
            )));
        }
        let mut grads: Vec<Option<Batch>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(grad);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let value = &node.value;
            match &node.op {
                Op::Input => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::SphConv {
                    input,
                    anchors,
                    bias,
                    interp,
                    gains,
                    spectrum,
                    plan,
                } => {
                    let xb = &self.nodes[input.0].value;
                    let (samples, cin, cout, b) = (xb.samples, xb.channels, value.channels, xb.bandlimit);
                    let k = interp.anchors();
                    check_shape(store, *anchors, &[cin, cout, k], "sph_conv backward")?;
                    check_shape(store, *bias, &[cout], "sph_conv backward")?;
                    let gb = ops::channel_sums(&g.data, samples, cout, value.nodes());
                    let gy = plan.adjoint_synthesize(&g.data, samples * cout);
                    let gg = ops::mix_degrees_gain_grad(plan, spectrum, &gy, samples, cin, cout);
                    let ga = store.get_mut(*anchors).grad_mut();
                    for (pair, gl) in gg.chunks(b).enumerate() {
                        interp.apply_transpose(gl, &mut ga[pair * k..(pair + 1) * k]);
                    }
                    add_into(store.get_mut(*bias).grad_mut(), &gb);
                    let gx_spec = ops::mix_degrees_transpose(&plan.half_degrees(), b, &gy, samples, cin, cout, gains);
                    let gx = plan.adjoint_analyze(&gx_spec, samples * cin);
                    accumulate(&mut grads, *input, xb, gx);
                }
                Op::Pointwise { input, weight, bias } => {
                    let xb = &self.nodes[input.0].value;
                    let (cin, cout) = (xb.channels, value.channels);
                    check_shape(store, *weight, &[cout, cin], "pointwise backward")?;
                    check_shape(store, *bias, &[cout], "pointwise backward")?;
                    let (gx, gw, gb) = ops::pointwise_backward(
                        &xb.data,
                        &g.data,
                        xb.samples,
                        cin,
                        cout,
                        xb.nodes(),
                        store.get(*weight).values(),
                    );
                    add_into(store.get_mut(*weight).grad_mut(), &gw);
                    add_into(store.get_mut(*bias).grad_mut(), &gb);
                    accumulate(&mut grads, *input, xb, gx);
                }
                Op::Relu { input } => {
                    let gx = g
                        .data
                        .iter()
                        .zip(&value.data)
                        .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *input, value, gx);
                }
                Op::Norm {
                    input,
                    params,
                    xhat,
                    inv_std,
                    mode,
                } => {
                    let c = value.channels;
                    for id in [params.scale, params.shift] {
                        check_shape(store, id, &[c], "norm backward")?;
                    }
                    let nodes = value.nodes();
                    let mut gscale = vec![0.0; c];
                    let mut gshift = vec![0.0; c];
                    for (i, (gp, hp)) in g.data.chunks(nodes).zip(xhat.chunks(nodes)).enumerate() {
                        let ch = i % c;
                        for (gv, hv) in gp.iter().zip(hp) {
                            gshift[ch] += gv;
                            gscale[ch] += gv * hv;
                        }
                    }
                    let scale = store.get(params.scale).values().to_vec();
                    let gx = match mode {
                        Mode::Train => {
                            let grid = make_grid(value.bandlimit)?;
                            let areas = ops::node_areas(&grid);
                            ops::norm_backward_batch(&g.data, xhat, inv_std, &scale, value.samples, c, &areas)
                        }
                        Mode::Eval => g
                            .data
                            .chunks(nodes)
                            .enumerate()
                            .flat_map(|(i, gp)| {
                                let f = scale[i % c] * inv_std[i % c];
                                gp.iter().map(move |v| v * f)
                            })
                            .collect(),
                    };
                    add_into(store.get_mut(params.scale).grad_mut(), &gscale);
                    add_into(store.get_mut(params.shift).grad_mut(), &gshift);
                    accumulate(&mut grads, *input, value, gx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, value, g.data.clone());
                    accumulate(&mut grads, *b, value, g.data);
                }
                Op::SpectralResample { input, from, to } => {
                    let xb = &self.nodes[input.0].value;
                    let n_sig = xb.signals();
                    let gs = to.adjoint_synthesize(&g.data, n_sig);
                    let moved = resample_half(to, from, &gs, n_sig);
                    accumulate(&mut grads, *input, xb, from.adjoint_analyze(&moved, n_sig));
                }
                Op::AvgPool { input } => {
                    let xb = &self.nodes[input.0].value;
                    let gx = ops::avg_pool_backward(&g.data, xb.signals(), xb.resolution());
                    accumulate(&mut grads, *input, xb, gx);
                }
                Op::Nearest { input } => {
                    let xb = &self.nodes[input.0].value;
                    let gx = ops::nearest_up_backward(&g.data, xb.signals(), xb.resolution());
                    accumulate(&mut grads, *input, xb, gx);
                }
                Op::PlanarConv { input, kernel, bias } => {
                    let xb = &self.nodes[input.0].value;
                    let (cin, cout) = (xb.channels, value.channels);
                    check_shape(store, *kernel, &[cout, cin, 3, 3], "planar_conv backward")?;
                    check_shape(store, *bias, &[cout], "planar_conv backward")?;
                    let (gx, gk, gb) = ops::planar_conv_backward(
                        &xb.data,
                        &g.data,
                        xb.samples,
                        cin,
                        cout,
                        xb.resolution(),
                        store.get(*kernel).values(),
                    );
                    add_into(store.get_mut(*kernel).grad_mut(), &gk);
                    add_into(store.get_mut(*bias).grad_mut(), &gb);
                    accumulate(&mut grads, *input, xb, gx);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn accumulate(grads: &mut [Option<Batch>], id: NodeId, like: &Batch, g: Vec<f64>) {
    match &mut grads[id.0] {
        Some(existing) => add_into(&mut existing.data, &g),
        slot @ None => {
            *slot = Some(Batch {
                data: g,
                ..*like
            })
        }
    }
}
