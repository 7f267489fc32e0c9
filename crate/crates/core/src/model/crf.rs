//! Linear-chain CRF over tag sequences.
//!
//! `score(y) = start[y0] + sum_i emit[i, yi] + sum_i trans[yi, yi+1] + end[y_last]`,
//! normalized over all tag sequences with the forward algorithm in log space.

use crate::numeric::{logsumexp, CustomOp, Graph, Tensor, TensorError, Var};

/// Transition, start and end scores.
#[derive(Clone, Debug, PartialEq)]
pub struct CrfParams {
    /// `transitions[a * tags + b]` scores tag `a` followed by tag `b`.
    pub transitions: Tensor,
    pub start: Tensor,
    pub end: Tensor,
}

impl CrfParams {
    pub fn zeros(tags: usize) -> Self {
        Self {
            transitions: Tensor::zeros(&[tags, tags]),
            start: Tensor::zeros(&[tags]),
            end: Tensor::zeros(&[tags]),
        }
    }

    pub fn tags(&self) -> usize {
        self.start.len()
    }
}

fn check(emissions: &Tensor, crf: &CrfParams) -> Result<(usize, usize), TensorError> {
    if emissions.rank() != 2 {
        return Err(TensorError::Rank {
            op: "crf",
            expected: 2,
            shape: emissions.shape().to_vec(),
        });
    }
    let tags = crf.tags();
    if emissions.cols() != tags || crf.transitions.shape() != [tags, tags] || crf.end.len() != tags {
        return Err(TensorError::ShapeMismatch {
            op: "crf",
            left: emissions.shape().to_vec(),
            right: crf.transitions.shape().to_vec(),
        });
    }
    Ok((emissions.rows(), tags))
}

fn check_labels(n: usize, tags: usize, labels: &[usize]) -> Result<(), TensorError> {
    if labels.len() != n {
        return Err(TensorError::Invalid {
            op: "crf",
            detail: format!("{} labels for {n} positions", labels.len()),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= tags) {
        return Err(TensorError::Invalid {
            op: "crf",
            detail: format!("label {bad} outside {tags} tags"),
        });
    }
    Ok(())
}

/// Unnormalized score of one tag sequence.
pub fn sequence_score(emissions: &Tensor, crf: &CrfParams, labels: &[usize]) -> Result<f64, TensorError> {
    let (n, tags) = check(emissions, crf)?;
    check_labels(n, tags, labels)?;
    let e = emissions.data();
    let t = crf.transitions.data();
    let mut s = crf.start.data()[labels[0]] + crf.end.data()[labels[n - 1]];
    for i in 0..n {
        s += e[i * tags + labels[i]];
        if i + 1 < n {
            s += t[labels[i] * tags + labels[i + 1]];
        }
    }
    Ok(s)
}

/// Forward log-messages `alpha[i * tags + t]` (start and emissions included).
fn alphas(emissions: &[f64], trans: &[f64], start: &[f64], n: usize, tags: usize) -> Vec<f64> {
    let mut alpha = vec![0.0; n * tags];
    for t in 0..tags {
        alpha[t] = start[t] + emissions[t];
    }
    let mut buf = vec![0.0; tags];
    for i in 1..n {
        for t in 0..tags {
            for (p, b) in buf.iter_mut().enumerate() {
                *b = alpha[(i - 1) * tags + p] + trans[p * tags + t];
            }
            alpha[i * tags + t] = logsumexp(&buf).expect("non-empty") + emissions[i * tags + t];
        }
    }
    alpha
}

/// Backward log-messages `beta[i * tags + t]` (end included, emission at `i` excluded).
fn betas(emissions: &[f64], trans: &[f64], end: &[f64], n: usize, tags: usize) -> Vec<f64> {
    let mut beta = vec![0.0; n * tags];
    beta[(n - 1) * tags..].copy_from_slice(end);
    let mut buf = vec![0.0; tags];
    for i in (0..n - 1).rev() {
        for t in 0..tags {
            for (q, b) in buf.iter_mut().enumerate() {
                *b = trans[t * tags + q] + emissions[(i + 1) * tags + q] + beta[(i + 1) * tags + q];
            }
            beta[i * tags + t] = logsumexp(&buf).expect("non-empty");
        }
    }
    beta
}

/// `log Z`, the log-sum of `exp(score)` over every tag sequence.
pub fn log_partition(emissions: &Tensor, crf: &CrfParams) -> Result<f64, TensorError> {
    let (n, tags) = check(emissions, crf)?;
    let alpha = alphas(emissions.data(), crf.transitions.data(), crf.start.data(), n, tags);
    let last: Vec<f64> = (0..tags).map(|t| alpha[(n - 1) * tags + t] + crf.end.data()[t]).collect();
    logsumexp(&last)
}

/// Negative log-likelihood `log Z - score(labels)`.
pub fn nll(emissions: &Tensor, crf: &CrfParams, labels: &[usize]) -> Result<f64, TensorError> {
    Ok(log_partition(emissions, crf)? - sequence_score(emissions, crf, labels)?)
}

/// Highest-scoring tag sequence. Ties go to the lowest tag index, both in
/// back-pointers and in the final choice.
pub fn viterbi(emissions: &Tensor, crf: &CrfParams) -> Result<Vec<usize>, TensorError> {
    let (n, tags) = check(emissions, crf)?;
    let e = emissions.data();
    let tr = crf.transitions.data();
    let mut best: Vec<f64> = (0..tags).map(|t| crf.start.data()[t] + e[t]).collect();
    let mut back = vec![0usize; n * tags];
    let mut next = vec![0.0; tags];
    for i in 1..n {
        for t in 0..tags {
            let mut arg = 0;
            let mut val = best[0] + tr[t];
            for p in 1..tags {
                let v = best[p] + tr[p * tags + t];
                if v > val {
                    val = v;
                    arg = p;
                }
            }
            back[i * tags + t] = arg;
            next[t] = val + e[i * tags + t];
        }
        std::mem::swap(&mut best, &mut next);
    }
    let mut last = 0;
    let mut val = best[0] + crf.end.data()[0];
    for t in 1..tags {
        let v = best[t] + crf.end.data()[t];
        if v > val {
            val = v;
            last = t;
        }
    }
    let mut path = vec![0usize; n];
    path[n - 1] = last;
    for i in (1..n).rev() {
        path[i - 1] = back[i * tags + path[i]];
    }
    Ok(path)
}

struct CrfNllOp {
    labels: Vec<usize>,
}

impl CustomOp for CrfNllOp {
    fn name(&self) -> &'static str {
        "crf_nll"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (emissions, trans, start, end) = (inputs[0], inputs[1], inputs[2], inputs[3]);
        let (n, tags) = (emissions.rows(), emissions.cols());
        let g = grad.item();
        let e = emissions.data();
        let tr = trans.data();
        let alpha = alphas(e, tr, start.data(), n, tags);
        let beta = betas(e, tr, end.data(), n, tags);
        let last: Vec<f64> = (0..tags).map(|t| alpha[(n - 1) * tags + t] + end.data()[t]).collect();
        let log_z = logsumexp(&last).expect("non-empty");

        let mut ge = vec![0.0; n * tags];
        for i in 0..n {
            for t in 0..tags {
                ge[i * tags + t] = g * (alpha[i * tags + t] + beta[i * tags + t] - log_z).exp();
            }
            ge[i * tags + self.labels[i]] -= g;
        }
        let mut gt = vec![0.0; tags * tags];
        for i in 0..n.saturating_sub(1) {
            for a in 0..tags {
                for b in 0..tags {
                    let lp = alpha[i * tags + a] + tr[a * tags + b] + e[(i + 1) * tags + b] + beta[(i + 1) * tags + b]
                        - log_z;
                    gt[a * tags + b] += g * lp.exp();
                }
            }
            gt[self.labels[i] * tags + self.labels[i + 1]] -= g;
        }
        let mut gs: Vec<f64> = (0..tags).map(|t| g * (alpha[t] + beta[t] - log_z).exp()).collect();
        gs[self.labels[0]] -= g;
        let mut gend: Vec<f64> = (0..tags).map(|t| g * (last[t] - log_z).exp()).collect();
        gend[self.labels[n - 1]] -= g;
        vec![
            Some(Tensor::new(vec![n, tags], ge).expect("shape")),
            Some(Tensor::new(vec![tags, tags], gt).expect("shape")),
            Some(Tensor::vector(gs)),
            Some(Tensor::vector(gend)),
        ]
    }
}

/// CRF negative log-likelihood as a differentiable graph node.
pub fn nll_node(
    g: &mut Graph,
    emissions: Var,
    transitions: Var,
    start: Var,
    end: Var,
    labels: &[usize],
) -> Result<Var, TensorError> {
    let crf = CrfParams {
        transitions: g.value(transitions).clone(),
        start: g.value(start).clone(),
        end: g.value(end).clone(),
    };
    let value = nll(g.value(emissions), &crf, labels)?;
    Ok(g.custom(
        Box::new(CrfNllOp {
            labels: labels.to_vec(),
        }),
        &[emissions, transitions, start, end],
        Tensor::scalar(value),
    ))
}
