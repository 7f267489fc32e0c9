//! Single-direction LSTM over a whole sequence as one graph node.
//!
//! Gate layout inside the `4h` axis is input, forget, cell, output.

use crate::numeric::kernels::gemm;
use crate::numeric::{sigmoid, CustomOp, Graph, Tensor, TensorError, Var};

struct LstmOp {
    hidden: usize,
    reverse: bool,
    /// Activated gates per position, `n x 4h`.
    gates: Vec<f64>,
    /// Cell states per position, `n x h`.
    cells: Vec<f64>,
}

fn order(n: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    }
}

impl CustomOp for LstmOp {
    fn name(&self) -> &'static str {
        "lstm"
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (x, w_ih, w_hh) = (inputs[0], inputs[1], inputs[2]);
        let h = self.hidden;
        let n = x.rows();
        let input_dim = x.cols();
        let hs = output.data();
        let steps: Vec<usize> = order(n, self.reverse).collect();

        let mut dz = vec![0.0; n * 4 * h];
        let mut h_prev_rows = vec![0.0; n * h];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for (k, &t) in steps.iter().enumerate().rev() {
            let prev = if k > 0 { Some(steps[k - 1]) } else { None };
            let gates = &self.gates[t * 4 * h..(t + 1) * 4 * h];
            let c = &self.cells[t * h..(t + 1) * h];
            let dzt = &mut dz[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let (i_g, f_g, g_g, o_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let c_prev = prev.map_or(0.0, |p| self.cells[p * h + j]);
                let tc = c[j].tanh();
                let dh = grad.data()[t * h + j] + dh_next[j];
                let dc = dc_next[j] + dh * o_g * (1.0 - tc * tc);
                dzt[j] = dc * g_g * i_g * (1.0 - i_g);
                dzt[h + j] = dc * c_prev * f_g * (1.0 - f_g);
                dzt[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
                dzt[3 * h + j] = dh * tc * o_g * (1.0 - o_g);
                dc_next[j] = dc * f_g;
            }
            // dh_prev = dz_t . W_hh^T
            gemm(1, 4 * h, h, 1.0, dzt, false, w_hh.data(), true, 0.0, &mut dh_next);
            if let Some(p) = prev {
                h_prev_rows[t * h..(t + 1) * h].copy_from_slice(&hs[p * h..(p + 1) * h]);
            }
        }
        let mut dx = vec![0.0; n * input_dim];
        gemm(n, 4 * h, input_dim, 1.0, &dz, false, w_ih.data(), true, 0.0, &mut dx);
        let mut dw_ih = vec![0.0; input_dim * 4 * h];
        gemm(input_dim, n, 4 * h, 1.0, x.data(), true, &dz, false, 0.0, &mut dw_ih);
        let mut dw_hh = vec![0.0; h * 4 * h];
        gemm(h, n, 4 * h, 1.0, &h_prev_rows, true, &dz, false, 0.0, &mut dw_hh);
        let mut db = vec![0.0; 4 * h];
        for row in dz.chunks(4 * h) {
            db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        vec![
            Some(Tensor::new(vec![n, input_dim], dx).expect("shape")),
            Some(Tensor::new(vec![input_dim, 4 * h], dw_ih).expect("shape")),
            Some(Tensor::new(vec![h, 4 * h], dw_hh).expect("shape")),
            Some(Tensor::vector(db)),
        ]
    }
}

/// Runs the LSTM over the rows of `x` (last row first when `reverse`) and
/// returns the hidden states in the original row order.
pub fn lstm_node(g: &mut Graph, x: Var, w_ih: Var, w_hh: Var, bias: Var, reverse: bool) -> Result<Var, TensorError> {
    let xv = g.value(x);
    let (n, input_dim) = (xv.rows(), xv.cols());
    let whh = g.value(w_hh);
    let h = whh.rows();
    if g.value(w_ih).shape() != [input_dim, 4 * h] || whh.shape() != [h, 4 * h] || g.value(bias).shape() != [4 * h] {
        return Err(TensorError::ShapeMismatch {
            op: "lstm",
            left: g.value(w_ih).shape().to_vec(),
            right: whh.shape().to_vec(),
        });
    }
    let mut z_in = vec![0.0; n * 4 * h];
    for row in z_in.chunks_mut(4 * h) {
        row.copy_from_slice(g.value(bias).data());
    }
    gemm(n, input_dim, 4 * h, 1.0, xv.data(), false, g.value(w_ih).data(), false, 1.0, &mut z_in);

    let mut gates = vec![0.0; n * 4 * h];
    let mut cells = vec![0.0; n * h];
    let mut hs = vec![0.0; n * h];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut z = vec![0.0; 4 * h];
    for t in order(n, reverse) {
        z.copy_from_slice(&z_in[t * 4 * h..(t + 1) * 4 * h]);
        gemm(1, h, 4 * h, 1.0, &h_prev, false, whh.data(), false, 1.0, &mut z);
        let gt = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        for j in 0..h {
            let i_g = sigmoid(z[j]);
            let f_g = sigmoid(z[h + j]);
            let g_g = z[2 * h + j].tanh();
            let o_g = sigmoid(z[3 * h + j]);
            gt[j] = i_g;
            gt[h + j] = f_g;
            gt[2 * h + j] = g_g;
            gt[3 * h + j] = o_g;
            let c = f_g * c_prev[j] + i_g * g_g;
            cells[t * h + j] = c;
            hs[t * h + j] = o_g * c.tanh();
        }
        c_prev.copy_from_slice(&cells[t * h..(t + 1) * h]);
        h_prev.copy_from_slice(&hs[t * h..(t + 1) * h]);
    }
    let out = Tensor::new(vec![n, h], hs)?;
    Ok(g.custom(
        Box::new(LstmOp {
            hidden: h,
            reverse,
            gates,
            cells,
        }),
        &[x, w_ih, w_hh, bias],
        out,
    ))
}
