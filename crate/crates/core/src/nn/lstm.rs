use rand::Rng;

use super::dense::glorot_fill;
use super::{sigmoid, Params};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// LSTM gate order used for every per-gate array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        }
    }
}

/// Weights of one LSTM direction: per gate `W: D × H`, `U: H × H`, `b: H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w: [Tensor; 4],
    pub u: [Tensor; 4],
    pub b: [Tensor; 4],
}

/// Intermediate values of one [`LstmParams::step`].
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates in [`Gate`] order, each of length `H`.
    gates: [Vec<f64>; 4],
    tanh_c: Vec<f64>,
}

impl LstmStepCache {
    pub fn gate(&self, g: Gate) -> &[f64] {
        &self.gates[g as usize]
    }
}

impl LstmParams {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        let per_gate = |shape: &[usize]| std::array::from_fn(|_| Tensor::zeros(shape));
        LstmParams {
            w: per_gate(&[dim, hidden]),
            u: per_gate(&[hidden, hidden]),
            b: per_gate(&[hidden]),
        }
    }

    /// Glorot-uniform `W` and `U`, zero biases except the forget gate at 1.0.
    pub fn glorot<R: Rng>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = LstmParams::zeros(dim, hidden);
        for g in Gate::ALL {
            glorot_fill(&mut p.w[g as usize], dim, hidden, rng);
            glorot_fill(&mut p.u[g as usize], hidden, hidden, rng);
        }
        p.b[Gate::Forget as usize].fill(1.0);
        p
    }

    pub fn dim(&self) -> usize {
        self.w[0].shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.u[0].shape()[0]
    }

    fn check(&self) -> Result<()> {
        let (d, h) = (self.dim(), self.hidden());
        let ok = self.w.iter().all(|t| t.shape() == [d, h])
            && self.u.iter().all(|t| t.shape() == [h, h])
            && self.b.iter().all(|t| t.shape() == [h]);
        if ok {
            Ok(())
        } else {
            Err(Error::shape("lstm", "inconsistent gate parameter shapes"))
        }
    }

    /// One cell update: `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache)> {
        self.check()?;
        let (d, hid) = (self.dim(), self.hidden());
        if x.len() != d || h.len() != hid || c.len() != hid {
            return Err(Error::shape(
                "lstm step",
                format!("x {}, h {}, c {} for D={d}, H={hid}", x.len(), h.len(), c.len()),
            ));
        }
        let gates: [Vec<f64>; 4] = std::array::from_fn(|gi| {
            let mut pre = self.b[gi].data().to_vec();
            let w = self.w[gi].data();
            for (k, &xv) in x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (p, &wv) in pre.iter_mut().zip(&w[k * hid..(k + 1) * hid]) {
                    *p += xv * wv;
                }
            }
            let u = self.u[gi].data();
            for (k, &hv) in h.iter().enumerate() {
                if hv == 0.0 {
                    continue;
                }
                for (p, &uv) in pre.iter_mut().zip(&u[k * hid..(k + 1) * hid]) {
                    *p += hv * uv;
                }
            }
            if gi == Gate::Candidate as usize {
                pre.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                pre.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            pre
        });
        let [i, f, o, g] = &gates;
        let c_new: Vec<f64> = (0..hid).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = (0..hid).map(|j| o[j] * tanh_c[j]).collect();
        let cache = LstmStepCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            c_prev: c.to_vec(),
            gates,
            tanh_c,
        };
        Ok((h_new, c_new, cache))
    }

    /// Backward through one step given `dL/dh'` and `dL/dc'`. Parameter
    /// gradients are added into `grads`; returns `(dx, dh, dc)` where `dx` is
    /// only computed when `need_x` is set.
    pub fn step_backward(
        &self,
        cache: &LstmStepCache,
        dh_next: &[f64],
        dc_next: &[f64],
        grads: &mut LstmParams,
        need_x: bool,
    ) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let (d, hid) = (self.dim(), self.hidden());
        let [i, f, o, g] = &cache.gates;
        let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hid]);
        let mut dc_prev = vec![0.0; hid];
        for j in 0..hid {
            let th = cache.tanh_c[j];
            let d_o = dh_next[j] * th;
            let dc = dc_next[j] + dh_next[j] * o[j] * (1.0 - th * th);
            let d_i = dc * g[j];
            let d_g = dc * i[j];
            let d_f = dc * cache.c_prev[j];
            dc_prev[j] = dc * f[j];
            da[Gate::Input as usize][j] = d_i * i[j] * (1.0 - i[j]);
            da[Gate::Forget as usize][j] = d_f * f[j] * (1.0 - f[j]);
            da[Gate::Output as usize][j] = d_o * o[j] * (1.0 - o[j]);
            da[Gate::Candidate as usize][j] = d_g * (1.0 - g[j] * g[j]);
        }

        let mut dx = need_x.then(|| vec![0.0; d]);
        let mut dh_prev = vec![0.0; hid];
        for gi in 0..4 {
            let a = &da[gi];
            for (b, &v) in grads.b[gi].data_mut().iter_mut().zip(a) {
                *b += v;
            }
            let gw = grads.w[gi].data_mut();
            for (k, &xv) in cache.x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (wv, &av) in gw[k * hid..(k + 1) * hid].iter_mut().zip(a) {
                    *wv += xv * av;
                }
            }
            let gu = grads.u[gi].data_mut();
            for (k, &hv) in cache.h_prev.iter().enumerate() {
                if hv == 0.0 {
                    continue;
                }
                for (uv, &av) in gu[k * hid..(k + 1) * hid].iter_mut().zip(a) {
                    *uv += hv * av;
                }
            }
            if let Some(dx) = dx.as_mut() {
                let w = self.w[gi].data();
                for (k, out) in dx.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (&wv, &av) in w[k * hid..(k + 1) * hid].iter().zip(a) {
                        acc += wv * av;
                    }
                    *out += acc;
                }
            }
            let u = self.u[gi].data();
            for (k, out) in dh_prev.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (&uv, &av) in u[k * hid..(k + 1) * hid].iter().zip(a) {
                    acc += uv * av;
                }
                *out += acc;
            }
        }
        (dx, dh_prev, dc_prev)
    }
}

impl Params for LstmParams {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(12);
        for g in Gate::ALL {
            let gi = g as usize;
            out.push((format!("w_{}", g.name()), &self.w[gi]));
            out.push((format!("u_{}", g.name()), &self.u[gi]));
            out.push((format!("b_{}", g.name()), &self.b[gi]));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let LstmParams { w, u, b } = self;
        let mut out = Vec::with_capacity(12);
        for (((g, w), u), b) in Gate::ALL.iter().zip(w.iter_mut()).zip(u.iter_mut()).zip(b.iter_mut()) {
            out.push((format!("w_{}", g.name()), w));
            out.push((format!("u_{}", g.name()), u));
            out.push((format!("b_{}", g.name()), b));
        }
        out
    }
}

/// Per-step caches of both scan directions.
#[derive(Debug, Clone)]
pub struct BiLstmCache {
    seq_shape: Vec<usize>,
    /// Forward scan over positions `0..ℓ`.
    forward: Vec<LstmStepCache>,
    /// Backward scan over positions `ℓ-1, ..., 0`, in scan order.
    backward: Vec<LstmStepCache>,
}

impl BiLstmCache {
    pub fn true_length(&self) -> usize {
        self.forward.len()
    }

    /// Backpropagates `d_out` (length `2H`) through both scans. Returns the
    /// gradient w.r.t. the input sequence (PAD rows zero) when `need_input`.
    pub fn backward(
        &self,
        fw: &LstmParams,
        bw: &LstmParams,
        d_out: &[f64],
        fw_grads: &mut LstmParams,
        bw_grads: &mut LstmParams,
        need_input: bool,
    ) -> Result<Option<Tensor>> {
        let hid = fw.hidden();
        if d_out.len() != 2 * hid {
            return Err(Error::shape(
                "bilstm backward",
                format!("upstream length {} for 2H = {}", d_out.len(), 2 * hid),
            ));
        }
        let mut gx = need_input.then(|| Tensor::zeros(&self.seq_shape));
        let len = self.true_length();

        let mut scan = |params: &LstmParams, steps: &[LstmStepCache], grads: &mut LstmParams, d_last: &[f64], position: &dyn Fn(usize) -> usize| {
            let mut dh = d_last.to_vec();
            let mut dc = vec![0.0; hid];
            for s in (0..steps.len()).rev() {
                let (dx, dh_prev, dc_prev) = params.step_backward(&steps[s], &dh, &dc, grads, need_input);
                if let (Some(gx), Some(dx)) = (gx.as_mut(), dx) {
                    for (a, v) in gx.row_mut(position(s)).iter_mut().zip(dx) {
                        *a += v;
                    }
                }
                dh = dh_prev;
                dc = dc_prev;
            }
        };
        scan(fw, &self.forward, fw_grads, &d_out[..hid], &|s| s);
        scan(bw, &self.backward, bw_grads, &d_out[hid..], &|s| len - 1 - s);
        Ok(gx)
    }
}

/// Runs `fw` over positions `0..ℓ` and `bw` over `ℓ-1..=0` of a `L × D`
/// sequence, returning `[h_fw ; h_bw]` of the last scan step of each. Rows at
/// or beyond `ℓ` are never read.
pub fn bilstm_forward(seq: &Tensor, true_length: usize, fw: &LstmParams, bw: &LstmParams) -> Result<(Vec<f64>, BiLstmCache)> {
    if seq.rank() != 2 || seq.shape()[1] != fw.dim() || fw.dim() != bw.dim() || fw.hidden() != bw.hidden() {
        return Err(Error::shape(
            "bilstm",
            format!("sequence {:?} for D={}, H={}", seq.shape(), fw.dim(), fw.hidden()),
        ));
    }
    if true_length == 0 || true_length > seq.rows() {
        return Err(Error::InvalidArgument(format!(
            "true length {true_length} must be in 1..={}",
            seq.rows()
        )));
    }
    let hid = fw.hidden();
    let run = |params: &LstmParams, order: &mut dyn Iterator<Item = usize>| -> Result<(Vec<f64>, Vec<LstmStepCache>)> {
        let mut h = vec![0.0; hid];
        let mut c = vec![0.0; hid];
        let mut steps = Vec::with_capacity(true_length);
        for t in order {
            let (h2, c2, cache) = params.step(seq.row(t), &h, &c)?;
            h = h2;
            c = c2;
            steps.push(cache);
        }
        Ok((h, steps))
    };
    let (h_fw, forward) = run(fw, &mut (0..true_length))?;
    let (h_bw, backward) = run(bw, &mut (0..true_length).rev())?;
    let mut out = h_fw;
    out.extend(h_bw);
    Ok((
        out,
        BiLstmCache {
            seq_shape: seq.shape().to_vec(),
            forward,
            backward,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let (h, c, cache) = p.step(&[0.3, -1.0, 2.0], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
        assert_eq!(cache.gate(Gate::Input), &[0.5, 0.5]);
        assert_eq!(cache.gate(Gate::Candidate), &[0.0, 0.0]);
    }

    #[test]
    fn zero_params_carry_half_the_cell() {
        // f = o = 0.5, g = 0: c' = 0.5, h' = 0.5·tanh(0.5)
        let p = LstmParams::zeros(2, 1);
        let (h, c, _) = p.step(&[4.0, -7.0], &[0.0], &[1.0]).unwrap();
        assert_eq!(c, vec![0.5]);
        assert!((h[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.2311).abs() < 1e-4);
    }

    #[test]
    fn gate_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::glorot(4, 5, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let h: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, _, cache) = p.step(&x, &h, &c).unwrap();
        for g in [Gate::Input, Gate::Forget, Gate::Output] {
            assert!(cache.gate(g).iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert!(cache.gate(Gate::Candidate).iter().all(|&v| v > -1.0 && v < 1.0));
        assert!(p.b[Gate::Forget as usize].data().iter().all(|&b| b == 1.0));
    }

    #[test]
    fn step_shape_errors() {
        let p = LstmParams::zeros(2, 3);
        assert!(p.step(&[1.0], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(p.step(&[1.0, 2.0], &[0.0; 2], &[0.0; 3]).is_err());
    }

    fn random_seq(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Tensor {
        Tensor::new(vec![rows, dim], (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn length_one_runs_a_single_step_each_way() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fw = LstmParams::glorot(3, 2, &mut rng);
        let bw = LstmParams::glorot(3, 2, &mut rng);
        let seq = random_seq(&mut rng, 4, 3);
        let (out, _) = bilstm_forward(&seq, 1, &fw, &bw).unwrap();
        let (h_fw, _, _) = fw.step(seq.row(0), &[0.0; 2], &[0.0; 2]).unwrap();
        let (h_bw, _, _) = bw.step(seq.row(0), &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(&out[..2], h_fw.as_slice());
        assert_eq!(&out[2..], h_bw.as_slice());
    }

    #[test]
    fn backward_scan_equals_forward_scan_on_reversed_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = LstmParams::glorot(3, 4, &mut rng);
        let seq = random_seq(&mut rng, 6, 3);
        let len = 4;
        let (out, _) = bilstm_forward(&seq, len, &p, &p).unwrap();
        let reversed: Vec<f64> = (0..len).rev().flat_map(|t| seq.row(t).to_vec()).collect();
        let rev = Tensor::new(vec![len, 3], reversed).unwrap();
        let (rev_out, _) = bilstm_forward(&rev, len, &p, &p).unwrap();
        assert_eq!(&out[4..], &rev_out[..4]);
    }

    #[test]
    fn zero_length_is_an_error() {
        let p = LstmParams::zeros(2, 2);
        assert!(bilstm_forward(&Tensor::zeros(&[3, 2]), 0, &p, &p).is_err());
        assert!(bilstm_forward(&Tensor::zeros(&[3, 2]), 4, &p, &p).is_err());
    }

    #[test]
    fn pad_suffix_is_never_read() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fw = LstmParams::glorot(3, 3, &mut rng);
        let bw = LstmParams::glorot(3, 3, &mut rng);
        let mut seq = random_seq(&mut rng, 7, 3);
        let (a, _) = bilstm_forward(&seq, 3, &fw, &bw).unwrap();
        for t in 3..7 {
            for v in seq.row_mut(t) {
                *v = rng.gen_range(-100.0..100.0);
            }
        }
        let (b, _) = bilstm_forward(&seq, 3, &fw, &bw).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn direction_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = LstmParams::glorot(3, 3, &mut rng);
        let seq = random_seq(&mut rng, 3, 3);
        let reversed: Vec<f64> = (0..3).rev().flat_map(|t| seq.row(t).to_vec()).collect();
        let rev = Tensor::new(vec![3, 3], reversed).unwrap();
        let (a, _) = bilstm_forward(&seq, 3, &p, &p).unwrap();
        let (b, _) = bilstm_forward(&rev, 3, &p, &p).unwrap();
        assert_ne!(&a[..3], &b[..3]);
    }
}
