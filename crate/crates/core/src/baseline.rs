//! Vanilla RNN, `h_t = σ(W_1 h_{t-1} + W_2 x_t + c)`, with the same trace and
//! backward contract as the shuffling cell. It exists as the reference point
//! for gradient growth/decay and for the quadratic-in-`d_h` step cost.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::checkpoint::{self, Container, NamedArray};
use crate::error::{Error, Result};
use crate::model::{check_output_grads, Backward, ParamSet, ParamView, SeqInput, SequenceModel};
use crate::srnn::AffineLayer;
use crate::tensor::{matmul_acc, matmul_nt, matmul_tn_acc, Activation, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"VRNN1";

#[derive(Clone, Debug, PartialEq)]
pub struct VanillaConfig {
    pub d_in: usize,
    pub d_h: usize,
    pub d_o: usize,
    pub vocab: Option<usize>,
    pub d_e: Option<usize>,
    pub activation: Activation,
}

impl VanillaConfig {
    pub fn dense(d_in: usize, d_h: usize, d_o: usize) -> Self {
        VanillaConfig { d_in, d_h, d_o, vocab: None, d_e: None, activation: Activation::Tanh }
    }

    pub fn tokens(vocab: usize, d_e: usize, d_h: usize, d_o: usize) -> Self {
        VanillaConfig { vocab: Some(vocab), d_e: Some(d_e), ..Self::dense(d_e, d_h, d_o) }
    }

    fn input_size(&self) -> usize {
        self.d_e.unwrap_or(self.d_in)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VanillaParams {
    pub embedding: Option<Matrix>,
    /// Recurrent matrix `W_1`, `d_h × d_h`.
    pub w_rec: Matrix,
    /// Input matrix `W_2`, `d_h × d_in`.
    pub w_in: Matrix,
    pub bias: Vec<f64>,
    pub readout: AffineLayer,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct VanillaTrace {
    /// Distinct input rows (embedding table or stacked timesteps).
    pub x_rows: Matrix,
    /// `x_rows W_2ᵀ + c`, precomputed once.
    pub u_rows: Matrix,
    pub tokens: Option<Vec<Vec<usize>>>,
    pub z: Vec<Matrix>,
    pub h: Vec<Matrix>,
    pub batch: usize,
}

impl VanillaTrace {
    #[inline]
    fn row(&self, t: usize, s: usize) -> usize {
        match &self.tokens {
            Some(ids) => ids[t][s],
            None => t * self.batch + s,
        }
    }
}

impl VanillaParams {
    /// Glorot-normal weights (variance `2 / (fan_in + fan_out)`), zero biases,
    /// embedding rows ~ N(0, 1). `W_1` then has spectral radius close to 1.
    pub fn init(config: &VanillaConfig, seed: u64) -> Result<Self> {
        let d_x = config.input_size();
        if config.d_h == 0 || config.d_o == 0 || d_x == 0 {
            return Err(Error::config("RNN dimensions must be positive"));
        }
        if config.vocab.is_some() != config.d_e.is_some() || config.vocab == Some(0) {
            return Err(Error::config("vocab and d_e must be given together"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let glorot = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let n = Normal::new(0.0, (2.0 / (rows + cols) as f64).sqrt()).expect("finite");
            Matrix::from_fn(rows, cols, |_, _| n.sample(rng))
        };
        let embedding = config.vocab.map(|v| {
            let n = Normal::new(0.0, 1.0).expect("unit normal");
            Matrix::from_fn(v, d_x, |_, _| n.sample(&mut rng))
        });
        let w_rec = glorot(config.d_h, config.d_h, &mut rng);
        let w_in = glorot(config.d_h, d_x, &mut rng);
        let readout = AffineLayer { weight: glorot(config.d_o, config.d_h, &mut rng), bias: vec![0.0; config.d_o] };
        Ok(VanillaParams {
            embedding,
            w_rec,
            w_in,
            bias: vec![0.0; config.d_h],
            readout,
            activation: config.activation,
        })
    }

    pub fn input_size(&self) -> usize {
        self.w_in.cols()
    }

    pub fn config(&self) -> VanillaConfig {
        VanillaConfig {
            d_in: self.input_size(),
            d_h: self.hidden_size(),
            d_o: self.output_size(),
            vocab: self.embedding.as_ref().map(Matrix::rows),
            d_e: self.embedding.as_ref().map(Matrix::cols),
            activation: self.activation,
        }
    }

    fn input_rows(&self, input: &SeqInput) -> Result<(Matrix, Option<Vec<Vec<usize>>>)> {
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
                if width != self.input_size() {
                    return Err(Error::shape(format!("input width {width}, model expects {}", self.input_size())));
                }
                let mut data = Vec::with_capacity(xs.len() * xs[0].len());
                for x in xs {
                    data.extend_from_slice(x.as_slice());
                }
                Ok((Matrix::from_vec(xs.len() * xs[0].rows(), width, data), None))
            }
            _ => Err(Error::shape("input kind does not match the model (tokens need an embedding)")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = vec![("activation".to_string(), self.activation.name().to_string())];
        let arrays = self.views().into_iter().map(NamedArray::from).collect();
        checkpoint::write(path, &Container { magic: *CHECKPOINT_MAGIC, meta, arrays })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = checkpoint::read(path)?;
        Self::from_container(&c).map_err(|msg| Error::Format { path: path.to_path_buf(), msg })
    }

    pub fn from_container(c: &Container) -> std::result::Result<Self, String> {
        if &c.magic != CHECKPOINT_MAGIC {
            return Err(format!("expected magic VRNN1, found {:?}", String::from_utf8_lossy(&c.magic)));
        }
        let activation: Activation = c.meta_value("activation")?.parse()?;
        let mut arrays = c.arrays.iter().peekable();
        let embedding = match arrays.peek() {
            Some(a) if a.name == "embedding" => Some(arrays.next().expect("peeked").to_matrix()?),
            _ => None,
        };
        let mut next = |name: &str| {
            arrays
                .next()
                .filter(|a| a.name == name)
                .ok_or_else(|| format!("expected array {name}"))
        };
        let w_rec = next("w_rec")?.to_matrix()?;
        let w_in = next("w_in")?.to_matrix()?;
        let bias = next("bias")?.to_vector(w_rec.rows())?;
        let weight = next("readout.weight")?.to_matrix()?;
        let rbias = next("readout.bias")?.to_vector(weight.rows())?;
        if w_rec.rows() != w_rec.cols() || w_in.rows() != w_rec.rows() || weight.cols() != w_rec.rows() {
            return Err("inconsistent RNN shapes".into());
        }
        if embedding.as_ref().is_some_and(|e| e.cols() != w_in.cols()) {
            return Err("embedding width does not match W_2".into());
        }
        Ok(VanillaParams { embedding, w_rec, w_in, bias, readout: AffineLayer { weight, bias: rbias }, activation })
    }
}

impl ParamSet for VanillaParams {
    fn views(&self) -> Vec<ParamView<'_>> {
        fn m<'a>(name: &str, x: &'a Matrix) -> ParamView<'a> {
            ParamView { name: name.into(), shape: vec![x.rows(), x.cols()], data: x.as_slice() }
        }
        let mut v = Vec::new();
        if let Some(e) = &self.embedding {
            v.push(m("embedding", e));
        }
        v.push(m("w_rec", &self.w_rec));
        v.push(m("w_in", &self.w_in));
        v.push(ParamView { name: "bias".into(), shape: vec![self.bias.len()], data: &self.bias });
        v.push(m("readout.weight", &self.readout.weight));
        v.push(ParamView { name: "readout.bias".into(), shape: vec![self.readout.bias.len()], data: &self.readout.bias });
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        if let Some(e) = self.embedding.as_mut() {
            v.push(e.as_mut_slice());
        }
        v.push(self.w_rec.as_mut_slice());
        v.push(self.w_in.as_mut_slice());
        v.push(&mut self.bias);
        v.push(self.readout.weight.as_mut_slice());
        v.push(&mut self.readout.bias);
        v
    }
}

impl SequenceModel for VanillaParams {
    type Trace = VanillaTrace;

    fn hidden_size(&self) -> usize {
        self.w_rec.rows()
    }

    fn output_size(&self) -> usize {
        self.readout.output_size()
    }

    fn forward(&self, input: &SeqInput) -> Result<(Vec<Matrix>, VanillaTrace)> {
        let (x_rows, tokens) = self.input_rows(input)?;
        let mut u_rows = matmul_nt(&x_rows, &self.w_in);
        u_rows.add_row_vector(&self.bias);
        let batch = input.batch();
        let d_h = self.hidden_size();
        let mut trace = VanillaTrace { x_rows, u_rows, tokens, z: Vec::new(), h: vec![Matrix::zeros(batch, d_h)], batch };
        let mut outputs = Vec::with_capacity(input.len());
        for t in 0..input.len() {
            let mut z = matmul_nt(&trace.h[t], &self.w_rec);
            for s in 0..batch {
                let u = trace.u_rows.row(trace.row(t, s));
                z.row_mut(s).iter_mut().zip(u).for_each(|(a, b)| *a += b);
            }
            let h = z.map(|v| self.activation.apply(v));
            outputs.push(self.readout.forward(&h));
            trace.z.push(z);
            trace.h.push(h);
        }
        Ok((outputs, trace))
    }

    fn backward_full(
        &self,
        trace: &VanillaTrace,
        output_grads: &[Option<Matrix>],
        record_hidden: bool,
    ) -> Result<Backward<Self>> {
        let d_h = self.hidden_size();
        let steps = trace.z.len();
        let batch = trace.batch;
        if trace.u_rows.cols() != d_h || trace.x_rows.cols() != self.input_size() {
            return Err(Error::shape("trace was not produced by these parameters"));
        }
        check_output_grads(output_grads, steps, batch, self.output_size())?;

        let mut grads = self.zeros_like();
        let mut d_u = Matrix::zeros(trace.u_rows.rows(), d_h);
        let mut dh = Matrix::zeros(batch, d_h);
        let mut hidden = record_hidden.then(|| vec![Matrix::zeros(0, 0); steps]);
        let mut dz = Matrix::zeros(batch, d_h);
        for t in (0..steps).rev() {
            if let Some(g) = &output_grads[t] {
                self.readout.accumulate_grads(&trace.h[t + 1], g, &mut grads.readout);
                matmul_acc(g, &self.readout.weight, &mut dh);
            }
            if let Some(hs) = hidden.as_mut() {
                hs[t] = dh.clone();
            }
            for ((d, &g), &z) in dz.as_mut_slice().iter_mut().zip(dh.as_slice()).zip(trace.z[t].as_slice()) {
                *d = g * self.activation.grad(z);
            }
            matmul_tn_acc(&dz, &trace.h[t], &mut grads.w_rec);
            for s in 0..batch {
                let r = trace.row(t, s);
                d_u.row_mut(r).iter_mut().zip(dz.row(s)).for_each(|(a, b)| *a += b);
            }
            dh.fill(0.0);
            matmul_acc(&dz, &self.w_rec, &mut dh);
        }
        matmul_tn_acc(&d_u, &trace.x_rows, &mut grads.w_in);
        d_u.col_sums_into(&mut grads.bias);
        if let Some(ge) = grads.embedding.as_mut() {
            *ge = Matrix::zeros(d_u.rows(), self.input_size());
            matmul_acc(&d_u, &self.w_in, ge);
        }
        Ok(Backward { grads, hidden_grads: hidden })
    }

    fn hidden_states<'t>(&self, trace: &'t VanillaTrace) -> &'t [Matrix] {
        &trace.h
    }

    fn relu_preactivations<'t>(&self, trace: &'t VanillaTrace) -> Vec<&'t Matrix> {
        if self.activation == Activation::Relu {
            trace.z.iter().collect()
        } else {
            Vec::new()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_dense(t: usize, batch: usize, width: usize, seed: u64) -> SeqInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SeqInput::Dense((0..t).map(|_| Matrix::from_fn(batch, width, |_, _| rng.random_range(-1.0..1.0))).collect())
    }

    #[test]
    fn param_count_closed_form() {
        let p = VanillaParams::init(&VanillaConfig::dense(1, 128, 1), 0).unwrap();
        assert_eq!(p.param_count(), 128 * 128 + 128 + 128 + 128 + 1);
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = VanillaConfig::tokens(10, 8, 16, 9);
        assert_eq!(VanillaParams::init(&cfg, 5).unwrap(), VanillaParams::init(&cfg, 5).unwrap());
    }

    #[test]
    fn recurrent_matrix_spectral_radius_is_order_one() {
        // Power iteration on W1ᵀW1 estimates the largest singular value, an upper
        // bound on the spectral radius.
        let p = VanillaParams::init(&VanillaConfig::dense(1, 128, 1), 11).unwrap();
        let w = &p.w_rec;
        let mut v = vec![1.0; 128];
        let mut sigma = 0.0;
        for _ in 0..200 {
            let wv: Vec<f64> = (0..128).map(|i| (0..128).map(|j| w.get(i, j) * v[j]).sum()).collect();
            let wtwv: Vec<f64> = (0..128).map(|j| (0..128).map(|i| w.get(i, j) * wv[i]).sum()).collect();
            let n = crate::tensor::l2_norm(&wtwv);
            sigma = n.sqrt();
            v = wtwv.iter().map(|x| x / n).collect();
        }
        assert!(sigma.is_finite() && sigma > 0.5 && sigma < 3.0, "largest singular value {sigma}");
    }

    #[test]
    fn zero_recurrence_is_a_per_step_mlp() {
        let mut p = VanillaParams::init(&VanillaConfig::dense(3, 6, 2), 1).unwrap();
        p.w_rec.fill(0.0);
        let input = random_dense(4, 2, 3, 2);
        let (outs, _) = p.forward(&input).unwrap();
        let SeqInput::Dense(xs) = &input else { unreachable!() };
        for (x, o) in xs.iter().zip(&outs) {
            let mut z = matmul_nt(x, &p.w_in);
            z.add_row_vector(&p.bias);
            let h = z.map(f64::tanh);
            assert_eq!(&p.readout.forward(&h), o);
        }
    }

    #[test]
    fn identity_recurrence_holds_state() {
        let mut p = VanillaParams::init(&VanillaConfig::dense(2, 4, 1), 1).unwrap();
        p.w_rec = Matrix::identity(4);
        p.activation = Activation::Identity;
        // The first input sets a nonzero state; afterwards the input is zero.
        let mut xs = vec![Matrix::from_rows(&[vec![1.0, -1.0]])];
        xs.extend((0..5).map(|_| Matrix::zeros(1, 2)));
        let (_, trace) = p.forward(&SeqInput::Dense(xs)).unwrap();
        for t in 2..=6 {
            assert_eq!(trace.h[t], trace.h[1]);
        }
    }

    #[test]
    fn hand_evaluation() {
        let p = VanillaParams {
            embedding: None,
            w_rec: Matrix::from_rows(&[vec![0.5, 0.0], vec![1.0, -1.0]]),
            w_in: Matrix::from_rows(&[vec![1.0], vec![2.0]]),
            bias: vec![0.0, 0.1],
            readout: AffineLayer { weight: Matrix::from_rows(&[vec![1.0, 1.0]]), bias: vec![0.0] },
            activation: Activation::Identity,
        };
        let xs = vec![Matrix::from_rows(&[vec![1.0]]), Matrix::from_rows(&[vec![2.0]])];
        let (outs, trace) = p.forward(&SeqInput::Dense(xs)).unwrap();
        // h1 = [1, 2.1]; h2 = [0.5 + 2, 1 - 2.1 + 4 + 0.1] = [2.5, 3.0]
        assert_eq!(trace.h[1].as_slice(), &[1.0, 2.1]);
        assert!((trace.h[2].get(0, 0) - 2.5).abs() < 1e-15);
        assert!((trace.h[2].get(0, 1) - 3.0).abs() < 1e-12);
        assert!((outs[1].get(0, 0) - 5.5).abs() < 1e-12);
    }

    #[test]
    fn zero_output_grads_give_zero_gradients() {
        let p = VanillaParams::init(&VanillaConfig::tokens(5, 3, 6, 2), 2).unwrap();
        let (_, trace) = p.forward(&SeqInput::Tokens(vec![vec![1], vec![2]])).unwrap();
        let g = p.backward(&trace, &[None, None]).unwrap();
        assert!(g.views().iter().all(|v| v.data.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn scaled_identity_recurrence_grows_gradients_geometrically() {
        let mut p = VanillaParams::init(&VanillaConfig::dense(1, 5, 1), 3).unwrap();
        p.w_rec = Matrix::identity(5);
        p.w_rec.scale(2.0);
        p.activation = Activation::Identity;
        let steps = 12;
        let (_, trace) = p.forward(&random_dense(steps, 1, 1, 1)).unwrap();
        let mut og = vec![None; steps];
        og[steps - 1] = Some(Matrix::from_vec(1, 1, vec![1.0]));
        let hg = p.backward_full(&trace, &og, true).unwrap().hidden_grads.unwrap();
        let last = hg[steps - 1].frobenius_norm();
        for (t, g) in hg.iter().enumerate() {
            let want = last * 2f64.powi((steps - 1 - t) as i32);
            assert!((g.frobenius_norm() - want).abs() <= 1e-12 * want);
        }
    }
}
