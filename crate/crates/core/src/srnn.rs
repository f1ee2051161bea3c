//! The shuffling recurrent cell.
//!
//! ```text
//! h_t = σ(shift(h_{t-1}, +1) + b(x_t))
//! b(x) = f_r(x) ⊙ sigmoid(W_s x + b_s)
//! o_t = W_o h_t + c_o
//! ```
//!
//! The recurrence has no learned weights: `shift` is the fixed cyclic rotation
//! from [`crate::tensor::circular_shift`]. Because `b` never sees the hidden
//! state it is evaluated once over every distinct input row before the
//! recurrence runs (all timesteps for dense inputs, the embedding table for
//! token inputs), and its backward pass likewise runs once on the summed
//! adjoints.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::checkpoint::{self, Container, NamedArray};
use crate::error::{Error, Result};
use crate::model::{check_output_grads, Backward, ParamSet, ParamView, SeqInput, SequenceModel};
use crate::tensor::{circular_shift_into, matmul_acc, matmul_nt, matmul_tn_acc, sigmoid, Activation, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"SRNN1";

/// `y = x Wᵀ + bias`, with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl AffineLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        AffineLayer { weight: Matrix::zeros(output, input), bias: vec![0.0; output] }
    }

    /// Gaussian weights with variance `gain / fan_in`, zero bias.
    pub fn gaussian(input: usize, output: usize, variance: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, variance.sqrt()).expect("finite variance");
        let weight = Matrix::from_fn(output, input, |_, _| normal.sample(rng));
        AffineLayer { weight, bias: vec![0.0; output] }
    }

    pub fn input_size(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = matmul_nt(x, &self.weight);
        y.add_row_vector(&self.bias);
        y
    }

    /// Accumulates weight/bias gradients for upstream `dy` at input `x` into `grad`.
    pub fn accumulate_grads(&self, x: &Matrix, dy: &Matrix, grad: &mut AffineLayer) {
        matmul_tn_acc(dy, x, &mut grad.weight);
        dy.col_sums_into(&mut grad.bias);
    }

    /// `dx = dy W`.
    pub fn input_grad(&self, dy: &Matrix) -> Matrix {
        let mut dx = Matrix::zeros(dy.rows(), self.input_size());
        matmul_acc(dy, &self.weight, &mut dx);
        dx
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Shape and behaviour of an SRNN, independent of weight values.
#[derive(Clone, Debug, PartialEq)]
pub struct SrnnConfig {
    /// Width of the raw dense input; ignored when `vocab` is set.
    pub d_in: usize,
    pub d_h: usize,
    pub d_o: usize,
    pub f_r_hidden: Vec<usize>,
    /// Token vocabulary; requires `d_e`.
    pub vocab: Option<usize>,
    pub d_e: Option<usize>,
    pub gating: bool,
    pub activation: Activation,
}

impl SrnnConfig {
    pub fn dense(d_in: usize, d_h: usize, d_o: usize, f_r_hidden: &[usize]) -> Self {
        SrnnConfig {
            d_in,
            d_h,
            d_o,
            f_r_hidden: f_r_hidden.to_vec(),
            vocab: None,
            d_e: None,
            gating: true,
            activation: Activation::Relu,
        }
    }

    pub fn tokens(vocab: usize, d_e: usize, d_h: usize, d_o: usize, f_r_hidden: &[usize]) -> Self {
        SrnnConfig { vocab: Some(vocab), d_e: Some(d_e), d_in: d_e, ..Self::dense(d_e, d_h, d_o, f_r_hidden) }
    }

    /// Width of the vector fed to the `b` network.
    pub fn b_input_size(&self) -> usize {
        self.d_e.unwrap_or(self.d_in)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_h == 0 || self.d_o == 0 || self.b_input_size() == 0 {
            return Err(Error::config("SRNN dimensions must be positive"));
        }
        if self.f_r_hidden.contains(&0) {
            return Err(Error::config("f_r hidden widths must be positive"));
        }
        match (self.vocab, self.d_e) {
            (Some(0), _) => Err(Error::config("vocab must be positive")),
            (Some(_), Some(_)) | (None, None) => Ok(()),
            _ => Err(Error::config("vocab and d_e must be given together")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrnnParams {
    /// `vocab × d_e` lookup table.
    pub embedding: Option<Matrix>,
    /// Primary branch of `b`; relu between layers, linear output of width `d_h`.
    pub f_r: Vec<AffineLayer>,
    /// Gating branch `W_s, b_s`; `None` disables gating.
    pub gate: Option<AffineLayer>,
    pub readout: AffineLayer,
    pub activation: Activation,
}

/// Cached values of one evaluation of `b` over a stack of input rows.
#[derive(Clone, Debug)]
pub struct BPass {
    /// Pre-activation of every f_r layer; the last one is the f_r output.
    pub f_r_pre: Vec<Matrix>,
    /// Sigmoid output of the gate branch.
    pub gate: Option<Matrix>,
    pub out: Matrix,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Rows fed to `b`: the embedding table for token input, or all
    /// timesteps stacked (`row = t * batch + s`) for dense input.
    pub b_input: Matrix,
    pub tokens: Option<Vec<Vec<usize>>>,
    pub b: BPass,
    /// `z_1 ..= z_T`.
    pub z: Vec<Matrix>,
    /// `h_0 ..= h_T`.
    pub h: Vec<Matrix>,
    pub batch: usize,
}

impl ForwardTrace {
    pub fn steps(&self) -> usize {
        self.z.len()
    }

    /// Row of `b.out` holding `b(x_t)` for sample `s` (t is 0-based here).
    #[inline]
    pub fn b_row(&self, t: usize, s: usize) -> usize {
        match &self.tokens {
            Some(ids) => ids[t][s],
            None => t * self.batch + s,
        }
    }
}

impl SrnnParams {
    /// He-style initialisation: every weight ~ N(0, 2 / fan_in), biases zero,
    /// embedding rows ~ N(0, 1). Deterministic in `seed`.
    pub fn init(config: &SrnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_b = config.b_input_size();
        let embedding = match (config.vocab, config.d_e) {
            (Some(v), Some(e)) => {
                let normal = Normal::new(0.0, 1.0).expect("unit normal");
                Some(Matrix::from_fn(v, e, |_, _| normal.sample(&mut rng)))
            }
            _ => None,
        };
        let mut widths = vec![d_b];
        widths.extend(&config.f_r_hidden);
        widths.push(config.d_h);
        let f_r = widths
            .windows(2)
            .map(|w| AffineLayer::gaussian(w[0], w[1], 2.0 / w[0] as f64, &mut rng))
            .collect();
        let gate = config
            .gating
            .then(|| AffineLayer::gaussian(d_b, config.d_h, 2.0 / d_b as f64, &mut rng));
        let readout = AffineLayer::gaussian(config.d_h, config.d_o, 2.0 / config.d_h as f64, &mut rng);
        Ok(SrnnParams { embedding, f_r, gate, readout, activation: config.activation })
    }

    pub fn config(&self) -> SrnnConfig {
        SrnnConfig {
            d_in: self.b_input_size(),
            d_h: self.hidden_size(),
            d_o: self.readout.output_size(),
            f_r_hidden: self.f_r[..self.f_r.len() - 1].iter().map(AffineLayer::output_size).collect(),
            vocab: self.embedding.as_ref().map(Matrix::rows),
            d_e: self.embedding.as_ref().map(Matrix::cols),
            gating: self.gate.is_some(),
            activation: self.activation,
        }
    }

    pub fn b_input_size(&self) -> usize {
        self.f_r[0].input_size()
    }

    pub fn gating(&self) -> bool {
        self.gate.is_some()
    }

    /// Evaluates `b` on every row of `x`.
    pub fn b_apply(&self, x: &Matrix) -> Result<BPass> {
        if x.cols() != self.b_input_size() {
            return Err(Error::shape(format!(
                "b network expects width {}, got {}",
                self.b_input_size(),
                x.cols()
            )));
        }
        let mut f_r_pre = Vec::with_capacity(self.f_r.len());
        let mut act = None::<Matrix>;
        for (l, layer) in self.f_r.iter().enumerate() {
            let pre = layer.forward(act.as_ref().unwrap_or(x));
            if l + 1 < self.f_r.len() {
                act = Some(pre.map(|v| Activation::Relu.apply(v)));
            }
            f_r_pre.push(pre);
        }
        let f = f_r_pre.last().expect("f_r has at least one layer");
        let (gate, out) = match &self.gate {
            Some(g) => {
                let s = g.forward(x).map(sigmoid);
                let mut out = f.clone();
                out.as_mut_slice().iter_mut().zip(s.as_slice()).for_each(|(o, &s)| *o *= s);
                (Some(s), out)
            }
            None => (None, f.clone()),
        };
        Ok(BPass { f_r_pre, gate, out })
    }

    fn b_input(&self, input: &SeqInput) -> Result<(Matrix, Option<Vec<Vec<usize>>>)> {
        input.validate()?;
        match (input, &self.embedding) {
            (SeqInput::Tokens(ids), Some(table)) => {
                if let Some(&bad) = ids.iter().flatten().find(|&&id| id >= table.rows()) {
                    return Err(Error::shape(format!("token id {bad} outside vocabulary of {}", table.rows())));
                }
                Ok((table.clone(), Some(ids.clone())))
            }
            (SeqInput::Dense(xs), None) => {
                let width = xs[0].cols();
                if width != self.b_input_size() {
                    return Err(Error::shape(format!("input width {width}, model expects {}", self.b_input_size())));
                }
                let batch = xs[0].rows();
                let mut stacked = Matrix::zeros(xs.len() * batch, width);
                for (t, x) in xs.iter().enumerate() {
                    stacked.as_mut_slice()[t * batch * width..(t + 1) * batch * width].copy_from_slice(x.as_slice());
                }
                Ok((stacked, None))
            }
            (SeqInput::Tokens(_), None) => Err(Error::shape("token input given to a model without embedding")),
            (SeqInput::Dense(_), Some(_)) => Err(Error::shape("dense input given to a model with an embedding")),
        }
    }

    /// Runs the recurrence from an explicit initial state (`batch × d_h`).
    pub fn forward_from(&self, input: &SeqInput, h0: &Matrix) -> Result<(Vec<Matrix>, ForwardTrace)> {
        let (b_input, tokens) = self.b_input(input)?;
        let batch = input.batch();
        let d_h = self.hidden_size();
        if h0.shape() != (batch, d_h) {
            return Err(Error::shape(format!("h0 is {}x{}, expected {batch}x{d_h}", h0.rows(), h0.cols())));
        }
        let b = self.b_apply(&b_input)?;
        let mut trace = ForwardTrace {
            b_input,
            tokens,
            b,
            z: Vec::with_capacity(input.len()),
            h: Vec::with_capacity(input.len() + 1),
            batch,
        };
        trace.h.push(h0.clone());
        let mut outputs = Vec::with_capacity(input.len());
        for t in 0..input.len() {
            let prev = &trace.h[t];
            let mut z = Matrix::zeros(batch, d_h);
            for s in 0..batch {
                let zr = z.row_mut(s);
                circular_shift_into(prev.row(s), 1, zr);
                let br = trace.b.out.row(trace.b_row(t, s));
                zr.iter_mut().zip(br).for_each(|(z, b)| *z += b);
            }
            let h = z.map(|v| self.activation.apply(v));
            outputs.push(self.readout.forward(&h));
            trace.z.push(z);
            trace.h.push(h);
        }
        Ok((outputs, trace))
    }

    fn backward_impl(
        &self,
        trace: &ForwardTrace,
        output_grads: &[Option<Matrix>],
        record_hidden: bool,
    ) -> Result<Backward<SrnnParams>> {
        let d_h = self.hidden_size();
        let steps = trace.steps();
        let batch = trace.batch;
        if trace.b.out.cols() != d_h || trace.b_input.cols() != self.b_input_size() {
            return Err(Error::shape("trace was not produced by these parameters"));
        }
        check_output_grads(output_grads, steps, batch, self.output_size())?;

        let mut grads = self.zeros_like();
        let mut d_b = Matrix::zeros(trace.b.out.rows(), d_h);
        let mut dh = Matrix::zeros(batch, d_h);
        let mut hidden = record_hidden.then(|| vec![Matrix::zeros(0, 0); steps]);
        let mut dz = Matrix::zeros(batch, d_h);

        for t in (0..steps).rev() {
            let h_t = &trace.h[t + 1];
            if let Some(g) = &output_grads[t] {
                self.readout.accumulate_grads(h_t, g, &mut grads.readout);
                matmul_acc(g, &self.readout.weight, &mut dh);
            }
            if let Some(hs) = hidden.as_mut() {
                hs[t] = dh.clone();
            }
            let z_t = &trace.z[t];
            for ((d, &g), &z) in dz.as_mut_slice().iter_mut().zip(dh.as_slice()).zip(z_t.as_slice()) {
                *d = g * self.activation.grad(z);
            }
            for s in 0..batch {
                let row = trace.b_row(t, s);
                d_b.row_mut(row).iter_mut().zip(dz.row(s)).for_each(|(a, b)| *a += b);
                // Adjoint of the +1 rotation is the -1 rotation.
                circular_shift_into(dz.row(s), -1, dh.row_mut(s));
            }
        }

        let d_input = self.b_backward(&trace.b_input, &trace.b, &d_b, &mut grads, trace.tokens.is_some());
        if let (Some(ge), Some(dx)) = (grads.embedding.as_mut(), d_input) {
            *ge = dx;
        }
        Ok(Backward { grads, hidden_grads: hidden })
    }

    /// Backpropagates adjoints `d_out` of `b`'s output into `grads`; returns
    /// the input adjoint when requested.
    fn b_backward(
        &self,
        x: &Matrix,
        pass: &BPass,
        d_out: &Matrix,
        grads: &mut SrnnParams,
        want_input: bool,
    ) -> Option<Matrix> {
        let f = pass.f_r_pre.last().expect("non-empty f_r");
        let mut d_x = want_input.then(|| Matrix::zeros(x.rows(), x.cols()));
        let mut d_f = d_out.clone();
        if let (Some(gate), Some(gate_s), Some(g_gate)) = (&self.gate, &pass.gate, grads.gate.as_mut()) {
            let mut d_g = Matrix::zeros(d_out.rows(), d_out.cols());
            let it = d_f
                .as_mut_slice()
                .iter_mut()
                .zip(d_g.as_mut_slice())
                .zip(gate_s.as_slice())
                .zip(f.as_slice());
            for (((df, dg), &s), &fv) in it {
                let upstream = *df;
                *df = upstream * s;
                *dg = upstream * fv * s * (1.0 - s);
            }
            gate.accumulate_grads(x, &d_g, g_gate);
            if let Some(dx) = d_x.as_mut() {
                matmul_acc(&d_g, &gate.weight, dx);
            }
        }

        let mut d_pre = d_f;
        for l in (0..self.f_r.len()).rev() {
            let layer = &self.f_r[l];
            let input_act;
            let layer_in = if l == 0 {
                x
            } else {
                input_act = pass.f_r_pre[l - 1].map(|v| Activation::Relu.apply(v));
                &input_act
            };
            layer.accumulate_grads(layer_in, &d_pre, &mut grads.f_r[l]);
            if l > 0 {
                let mut d_in = layer.input_grad(&d_pre);
                d_in.as_mut_slice()
                    .iter_mut()
                    .zip(pass.f_r_pre[l - 1].as_slice())
                    .for_each(|(d, &p)| *d *= Activation::Relu.grad(p));
                d_pre = d_in;
            } else if let Some(dx) = d_x.as_mut() {
                matmul_acc(&d_pre, &layer.weight, dx);
            }
        }
        d_x
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let cfg = self.config();
        let meta = vec![
            ("activation".to_string(), self.activation.name().to_string()),
            ("gating".to_string(), if cfg.gating { "on" } else { "off" }.to_string()),
            ("f_r_layers".to_string(), self.f_r.len().to_string()),
        ];
        let arrays = self.views().into_iter().map(NamedArray::from).collect();
        checkpoint::write(path, &Container { magic: *CHECKPOINT_MAGIC, meta, arrays })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = checkpoint::read(path)?;
        Self::from_container(&c).map_err(|msg| Error::Format { path: path.to_path_buf(), msg })
    }

    pub fn from_container(c: &Container) -> std::result::Result<Self, String> {
        if &c.magic != CHECKPOINT_MAGIC {
            return Err(format!("expected magic SRNN1, found {:?}", String::from_utf8_lossy(&c.magic)));
        }
        let activation: Activation = c.meta_value("activation")?.parse()?;
        let gating = match c.meta_value("gating")? {
            "on" => true,
            "off" => false,
            other => return Err(format!("bad gating flag '{other}'")),
        };
        let layers: usize = c.meta_value("f_r_layers")?.parse().map_err(|_| "bad f_r_layers".to_string())?;
        let mut arrays = c.arrays.iter();
        let mut next = |name: &str| -> std::result::Result<&NamedArray, String> {
            let a = arrays.next().ok_or_else(|| format!("missing array {name}"))?;
            if a.name != name {
                return Err(format!("expected array {name}, found {}", a.name));
            }
            Ok(a)
        };
        let embedding = match c.arrays.first() {
            Some(a) if a.name == "embedding" => Some(next("embedding")?.to_matrix()?),
            _ => None,
        };
        let mut affine = |prefix: &str| -> std::result::Result<AffineLayer, String> {
            let weight = next(&format!("{prefix}.weight"))?.to_matrix()?;
            let bias = next(&format!("{prefix}.bias"))?.to_vector(weight.rows())?;
            Ok(AffineLayer { weight, bias })
        };
        let mut f_r = Vec::with_capacity(layers);
        for l in 0..layers {
            f_r.push(affine(&format!("f_r.{l}"))?);
        }
        let gate = if gating { Some(affine("gate")?) } else { None };
        let readout = affine("readout")?;
        let p = SrnnParams { embedding, f_r, gate, readout, activation };
        p.check_shapes()?;
        Ok(p)
    }

    fn check_shapes(&self) -> std::result::Result<(), String> {
        if self.f_r.is_empty() {
            return Err("f_r needs at least one layer".into());
        }
        for w in self.f_r.windows(2) {
            if w[0].output_size() != w[1].input_size() {
                return Err("f_r layer widths do not chain".into());
            }
        }
        let d_h = self.hidden_size();
        if let Some(e) = &self.embedding {
            if e.cols() != self.b_input_size() {
                return Err("embedding width does not match f_r input".into());
            }
        }
        if let Some(g) = &self.gate {
            if g.output_size() != d_h || g.input_size() != self.b_input_size() {
                return Err("gate shape does not match".into());
            }
        }
        if self.readout.input_size() != d_h {
            return Err("readout input does not match d_h".into());
        }
        Ok(())
    }
}

impl ParamSet for SrnnParams {
    fn views(&self) -> Vec<ParamView<'_>> {
        let mut v = Vec::new();
        if let Some(e) = &self.embedding {
            v.push(ParamView { name: "embedding".into(), shape: vec![e.rows(), e.cols()], data: e.as_slice() });
        }
        fn affine<'a>(prefix: String, l: &'a AffineLayer, v: &mut Vec<ParamView<'a>>) {
            v.push(ParamView {
                name: format!("{prefix}.weight"),
                shape: vec![l.weight.rows(), l.weight.cols()],
                data: l.weight.as_slice(),
            });
            v.push(ParamView { name: format!("{prefix}.bias"), shape: vec![l.bias.len()], data: &l.bias });
        }
        for (i, l) in self.f_r.iter().enumerate() {
            affine(format!("f_r.{i}"), l, &mut v);
        }
        if let Some(g) = &self.gate {
            affine("gate".into(), g, &mut v);
        }
        affine("readout".into(), &self.readout, &mut v);
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        if let Some(e) = self.embedding.as_mut() {
            v.push(e.as_mut_slice());
        }
        for l in self.f_r.iter_mut().chain(self.gate.as_mut()).chain(std::iter::once(&mut self.readout)) {
            v.push(l.weight.as_mut_slice());
            v.push(&mut l.bias);
        }
        v
    }
}

impl SequenceModel for SrnnParams {
    type Trace = ForwardTrace;

    fn hidden_size(&self) -> usize {
        self.f_r.last().expect("non-empty f_r").output_size()
    }

    fn output_size(&self) -> usize {
        self.readout.output_size()
    }

    fn forward(&self, input: &SeqInput) -> Result<(Vec<Matrix>, ForwardTrace)> {
        let h0 = Matrix::zeros(input.batch(), self.hidden_size());
        self.forward_from(input, &h0)
    }

    fn backward_full(
        &self,
        trace: &ForwardTrace,
        output_grads: &[Option<Matrix>],
        record_hidden: bool,
    ) -> Result<Backward<Self>> {
        self.backward_impl(trace, output_grads, record_hidden)
    }

    fn hidden_states<'t>(&self, trace: &'t ForwardTrace) -> &'t [Matrix] {
        &trace.h
    }

    fn relu_preactivations<'t>(&self, trace: &'t ForwardTrace) -> Vec<&'t Matrix> {
        let mut v: Vec<&Matrix> = trace.b.f_r_pre[..trace.b.f_r_pre.len() - 1].iter().collect();
        if self.activation == Activation::Relu {
            v.extend(trace.z.iter());
        }
        v
    }
}
