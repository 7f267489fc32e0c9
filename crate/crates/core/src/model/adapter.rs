//! Bottleneck adapters and the parameter generator that produces them from
//! an annotator embedding.

use crate::numeric::{Graph, Tensor, TensorError, Var};

/// Weights of one adapter, row-vector convention (`h · W`).
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterParams {
    /// `model_dim x bottleneck`
    pub w_down: Tensor,
    /// `bottleneck`
    pub b_down: Tensor,
    /// `bottleneck x model_dim`
    pub w_up: Tensor,
    /// `model_dim`
    pub b_up: Tensor,
}

/// Generator tensors; every parameter gains a trailing annotator axis `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct PgnTensors {
    /// `model_dim x bottleneck x d`
    pub t_w_down: Tensor,
    /// `bottleneck x d`
    pub t_b_down: Tensor,
    /// `bottleneck x model_dim x d`
    pub t_w_up: Tensor,
    /// `model_dim x d`
    pub t_b_up: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct AdapterVars {
    pub w_down: Var,
    pub b_down: Var,
    pub w_up: Var,
    pub b_up: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct PgnVars {
    pub t_w_down: Var,
    pub t_b_down: Var,
    pub t_w_up: Var,
    pub t_b_up: Var,
}

/// `h_out = GELU(h_in · W_down + b_down) · W_up + b_up + h_in`
pub fn adapter_node(g: &mut Graph, h: Var, p: &AdapterVars) -> Result<Var, TensorError> {
    let down = g.matmul(h, p.w_down)?;
    let down = g.add(down, p.b_down)?;
    let mid = g.gelu(down);
    let up = g.matmul(mid, p.w_up)?;
    let up = g.add(up, p.b_up)?;
    g.add(up, h)
}

/// Contracts each generator tensor with `e`.
pub fn generate_node(g: &mut Graph, t: &PgnVars, e: Var) -> Result<AdapterVars, TensorError> {
    Ok(AdapterVars {
        w_down: g.mode3_contract(t.t_w_down, e)?,
        b_down: g.contract_last(t.t_b_down, e)?,
        w_up: g.mode3_contract(t.t_w_up, e)?,
        b_up: g.contract_last(t.t_b_up, e)?,
    })
}

impl AdapterParams {
    fn bind(&self, g: &mut Graph) -> AdapterVars {
        AdapterVars {
            w_down: g.constant(self.w_down.clone()),
            b_down: g.constant(self.b_down.clone()),
            w_up: g.constant(self.w_up.clone()),
            b_up: g.constant(self.b_up.clone()),
        }
    }
}

pub fn adapter_forward(h_in: &Tensor, params: &AdapterParams) -> Result<Tensor, TensorError> {
    let mut g = Graph::new();
    let h = g.constant(h_in.clone());
    let p = params.bind(&mut g);
    let out = adapter_node(&mut g, h, &p)?;
    Ok(g.value(out).clone())
}

pub fn pgn_generate(tensors: &PgnTensors, e: &[f64]) -> Result<AdapterParams, TensorError> {
    if e.is_empty() {
        return Err(TensorError::Empty { op: "pgn_generate" });
    }
    let mut g = Graph::new();
    let t = PgnVars {
        t_w_down: g.constant(tensors.t_w_down.clone()),
        t_b_down: g.constant(tensors.t_b_down.clone()),
        t_w_up: g.constant(tensors.t_w_up.clone()),
        t_b_up: g.constant(tensors.t_b_up.clone()),
    };
    let ev = g.constant(Tensor::vector(e.to_vec()));
    let a = generate_node(&mut g, &t, ev)?;
    Ok(AdapterParams {
        w_down: g.value(a.w_down).clone(),
        b_down: g.value(a.b_down).clone(),
        w_up: g.value(a.w_up).clone(),
        b_up: g.value(a.b_up).clone(),
    })
}
