use super::Params;
use crate::error::{Error, Result};
use crate::roadnet::SquareMatrix;
use crate::tensor::Tensor;

/// `D^-1/2 (A + I) D^-1/2` with `D` the row sums of `A + I`.
pub fn normalized_adjacency(adj: &SquareMatrix) -> Result<Tensor> {
    let n = adj.n;
    if !adj.is_symmetric() {
        return Err(Error::invalid("GCN adjacency must be symmetric"));
    }
    if adj.data.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid(
            "GCN adjacency must be finite and non-negative",
        ));
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let deg = 1.0
                + (0..n)
                    .filter(|&j| j != i)
                    .map(|j| adj.get(i, j))
                    .sum::<f64>()
                + adj.get(i, i);
            1.0 / deg.sqrt()
        })
        .collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let a = adj.get(i, j) + if i == j { 1.0 } else { 0.0 };
            out[i * n + j] = inv_sqrt_deg[i] * a * inv_sqrt_deg[j];
        }
    }
    Tensor::new(&[n, n], out)
}

/// Stack of `H <- act(Â H W + b)`; ReLU between layers, the last layer is
/// linear into `d_model`.
pub fn gcn_embed(
    adj_norm: &Tensor,
    node_feats: &Tensor,
    params: &Params,
    layers: usize,
) -> Result<Tensor> {
    let (sa, sf) = (adj_norm.shape(), node_feats.shape());
    if sa.len() != 2 || sa[0] != sa[1] || sf.len() != 2 || sf[0] != sa[0] {
        return Err(Error::Shape(format!(
            "gcn_embed: adjacency {sa:?} vs features {sf:?}"
        )));
    }
    let mut h = node_feats.clone();
    for l in 0..layers {
        let w = params.get(&format!("gcn.{l}.weight"));
        let b = params.get(&format!("gcn.{l}.bias"));
        h = adj_norm.matmul(&h.matmul(w)?)?.add(b)?;
        if l + 1 < layers {
            h = h.relu()?;
        }
    }
    Ok(h)
}
