use super::{EncoderConfig, Input, ParameterSet, BIAS, W_HH, W_IH};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[c * 4 + k] * b[c * 4 + k];
        }
    }
    let mut s = acc[0] + acc[1] + acc[2] + acc[3];
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Per-direction activations, indexed by time (not processing order).
#[derive(Debug, Clone)]
struct DirCache {
    /// Post-activation gates `[i f g o]`, `T x 4H`.
    gates: Vec<f64>,
    /// Cell state, `T x H`.
    c: Vec<f64>,
    /// `tanh(c)`, `T x H`.
    tc: Vec<f64>,
    /// Hidden state, `T x H`.
    h: Vec<f64>,
}

#[derive(Debug, Clone)]
enum LayerInput {
    Dense(Vec<f64>),
    OneHot(Vec<u16>),
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: LayerInput,
    dirs: [DirCache; 2],
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    config: Option<EncoderConfig>,
    steps: usize,
    layers: Vec<LayerCache>,
    feat: Vec<f64>,
    embedding: Vec<f64>,
}

impl Default for ForwardCache {
    fn default() -> Self {
        Self::empty()
    }
}

impl ForwardCache {
    /// A cache holding no forward pass; `backward` rejects it.
    pub fn empty() -> Self {
        ForwardCache { config: None, steps: 0, layers: Vec::new(), feat: Vec::new(), embedding: Vec::new() }
    }

    pub fn is_filled(&self) -> bool {
        self.config.is_some()
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub(crate) fn config(&self) -> EncoderConfig {
        self.config.expect("filled cache")
    }
}

fn run_direction(params: &ParameterSet, layer: usize, rev: bool, input: &LayerInput, in_dim: usize, steps: usize) -> DirCache {
    let hid = params.config.hidden;
    let h4 = 4 * hid;
    let w_ih = params.cell(layer, rev, W_IH);
    let w_hh = params.cell(layer, rev, W_HH);
    let bias = params.cell(layer, rev, BIAS);
    let mut out = DirCache {
        gates: vec![0.0; steps * h4],
        c: vec![0.0; steps * hid],
        tc: vec![0.0; steps * hid],
        h: vec![0.0; steps * hid],
    };
    let mut a = vec![0.0; h4];
    let mut prev: Option<usize> = None;
    for s in 0..steps {
        let t = if rev { steps - 1 - s } else { s };
        a.copy_from_slice(bias);
        match input {
            LayerInput::Dense(x) => {
                let frame = &x[t * in_dim..(t + 1) * in_dim];
                for (k, &xk) in frame.iter().enumerate() {
                    if xk != 0.0 {
                        axpy(&mut a, xk, &w_ih[k * h4..(k + 1) * h4]);
                    }
                }
            }
            LayerInput::OneHot(ids) => {
                let k = ids[t] as usize;
                axpy(&mut a, 1.0, &w_ih[k * h4..(k + 1) * h4]);
            }
        }
        if let Some(p) = prev {
            let hp = &out.h[p * hid..(p + 1) * hid];
            for (k, &hk) in hp.iter().enumerate() {
                axpy(&mut a, hk, &w_hh[k * h4..(k + 1) * h4]);
            }
        }
        let g = &mut out.gates[t * h4..(t + 1) * h4];
        for j in 0..hid {
            g[j] = sigmoid(a[j]);
            g[hid + j] = sigmoid(a[hid + j]);
            g[2 * hid + j] = a[2 * hid + j].tanh();
            g[3 * hid + j] = sigmoid(a[3 * hid + j]);
        }
        for j in 0..hid {
            let c_prev = prev.map_or(0.0, |p| out.c[p * hid + j]);
            let c = g[hid + j] * c_prev + g[j] * g[2 * hid + j];
            let tc = c.tanh();
            out.c[t * hid + j] = c;
            out.tc[t * hid + j] = tc;
            out.h[t * hid + j] = g[3 * hid + j] * tc;
        }
        prev = Some(t);
    }
    out
}

pub(super) fn forward(params: &ParameterSet, x: Input<'_>) -> ForwardCache {
    let cfg = params.config;
    let hid = cfg.hidden;
    let steps = x.len();
    let mut input = match x {
        Input::Dense { data, .. } => LayerInput::Dense(data.to_vec()),
        Input::OneHot { ids, .. } => LayerInput::OneHot(ids.to_vec()),
    };
    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let in_dim = cfg.layer_input(l);
        let fwd = run_direction(params, l, false, &input, in_dim, steps);
        let bwd = run_direction(params, l, true, &input, in_dim, steps);
        let mut next = vec![0.0; steps * 2 * hid];
        for t in 0..steps {
            next[t * 2 * hid..t * 2 * hid + hid].copy_from_slice(&fwd.h[t * hid..(t + 1) * hid]);
            next[t * 2 * hid + hid..(t + 1) * 2 * hid].copy_from_slice(&bwd.h[t * hid..(t + 1) * hid]);
        }
        layers.push(LayerCache { input, dirs: [fwd, bwd] });
        input = LayerInput::Dense(next);
    }
    let top = layers.last().unwrap();
    let mut feat = Vec::with_capacity(2 * hid);
    feat.extend_from_slice(&top.dirs[0].h[(steps - 1) * hid..steps * hid]);
    feat.extend_from_slice(&top.dirs[1].h[..hid]);

    let w = params.proj_weight();
    let embedding: Vec<f64> =
        params.proj_bias().iter().enumerate().map(|(e, b)| b + dot(&w[e * 2 * hid..(e + 1) * 2 * hid], &feat)).collect();
    ForwardCache { config: Some(cfg), steps, layers, feat, embedding }
}

/// Backpropagates one direction. `dh_out` is the loss gradient w.r.t. the
/// direction's hidden state at each time step (`T x H`); the input gradient
/// is accumulated into `dx` when given.
#[allow(clippy::too_many_arguments)]
fn backprop_direction(
    params: &ParameterSet,
    grads: &mut ParameterSet,
    layer: usize,
    rev: bool,
    cache: &DirCache,
    input: &LayerInput,
    in_dim: usize,
    dh_out: &[f64],
    mut dx: Option<&mut [f64]>,
) {
    let hid = params.config.hidden;
    let h4 = 4 * hid;
    let steps = cache.h.len() / hid;
    let w_ih = params.cell(layer, rev, W_IH);
    let w_hh = params.cell(layer, rev, W_HH);

    let mut dh_next = vec![0.0; hid];
    let mut dc_next = vec![0.0; hid];
    let mut da = vec![0.0; h4];
    let mut d_bias = vec![0.0; h4];

    for s in (0..steps).rev() {
        let t = if rev { steps - 1 - s } else { s };
        let prev = if s == 0 { None } else if rev { Some(t + 1) } else { Some(t - 1) };
        let g = &cache.gates[t * h4..(t + 1) * h4];
        for j in 0..hid {
            let dh = dh_out[t * hid + j] + dh_next[j];
            let (i, f, gg, o) = (g[j], g[hid + j], g[2 * hid + j], g[3 * hid + j]);
            let tc = cache.tc[t * hid + j];
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            let c_prev = prev.map_or(0.0, |p| cache.c[p * hid + j]);
            da[j] = dc * gg * i * (1.0 - i);
            da[hid + j] = dc * c_prev * f * (1.0 - f);
            da[2 * hid + j] = dc * i * (1.0 - gg * gg);
            da[3 * hid + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        axpy(&mut d_bias, 1.0, &da);

        {
            let dw = grads.cell_mut(layer, rev, W_IH);
            match input {
                LayerInput::Dense(x) => {
                    let frame = &x[t * in_dim..(t + 1) * in_dim];
                    for (k, &xk) in frame.iter().enumerate() {
                        if xk != 0.0 {
                            axpy(&mut dw[k * h4..(k + 1) * h4], xk, &da);
                        }
                    }
                }
                LayerInput::OneHot(ids) => {
                    let k = ids[t] as usize;
                    axpy(&mut dw[k * h4..(k + 1) * h4], 1.0, &da);
                }
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let row = &mut dx[t * in_dim..(t + 1) * in_dim];
            for (k, r) in row.iter_mut().enumerate() {
                *r += dot(&w_ih[k * h4..(k + 1) * h4], &da);
            }
        }
        match prev {
            Some(p) => {
                let hp = &cache.h[p * hid..(p + 1) * hid];
                let dw = grads.cell_mut(layer, rev, W_HH);
                for (k, &hk) in hp.iter().enumerate() {
                    if hk != 0.0 {
                        axpy(&mut dw[k * h4..(k + 1) * h4], hk, &da);
                    }
                }
                for (k, d) in dh_next.iter_mut().enumerate() {
                    *d = dot(&w_hh[k * h4..(k + 1) * h4], &da);
                }
            }
            None => dh_next.fill(0.0),
        }
    }
    axpy(grads.cell_mut(layer, rev, BIAS), 1.0, &d_bias);
}

pub(super) fn backward(
    params: &ParameterSet,
    cache: &ForwardCache,
    d_emb: &[f64],
    grads: &mut ParameterSet,
    want_input: bool,
) -> Option<Vec<f64>> {
    let cfg = params.config;
    let hid = cfg.hidden;
    let steps = cache.steps;

    let w = params.proj_weight();
    let mut d_feat = vec![0.0; 2 * hid];
    {
        let (dw, db) = grads.proj_mut();
        for (e, &de) in d_emb.iter().enumerate() {
            db[e] += de;
            axpy(&mut dw[e * 2 * hid..(e + 1) * 2 * hid], de, &cache.feat);
            axpy(&mut d_feat, de, &w[e * 2 * hid..(e + 1) * 2 * hid]);
        }
    }

    let mut dh_fwd = vec![0.0; steps * hid];
    let mut dh_bwd = vec![0.0; steps * hid];
    dh_fwd[(steps - 1) * hid..].copy_from_slice(&d_feat[..hid]);
    dh_bwd[..hid].copy_from_slice(&d_feat[hid..]);

    let mut input_grad = None;
    for l in (0..cfg.layers).rev() {
        let lc = &cache.layers[l];
        let in_dim = cfg.layer_input(l);
        let want_dx = l > 0 || (want_input && matches!(lc.input, LayerInput::Dense(_)));
        let mut dx = if want_dx { Some(vec![0.0; steps * in_dim]) } else { None };
        backprop_direction(params, grads, l, false, &lc.dirs[0], &lc.input, in_dim, &dh_fwd, dx.as_deref_mut());
        backprop_direction(params, grads, l, true, &lc.dirs[1], &lc.input, in_dim, &dh_bwd, dx.as_deref_mut());
        if l > 0 {
            let dx = dx.unwrap();
            for t in 0..steps {
                dh_fwd[t * hid..(t + 1) * hid].copy_from_slice(&dx[t * 2 * hid..t * 2 * hid + hid]);
                dh_bwd[t * hid..(t + 1) * hid].copy_from_slice(&dx[t * 2 * hid + hid..(t + 1) * 2 * hid]);
            }
        } else {
            input_grad = dx;
        }
    }
    input_grad
}
