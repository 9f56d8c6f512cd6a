use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Sample-by-sample Gram matrix `M = A_S A_Sᵀ` of one layer's activations
/// restricted to the neuron subset `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Array2<f64>,
    layer: usize,
    neurons: Vec<bool>,
}

impl GramMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn samples(&self) -> usize {
        self.values.nrows()
    }

    /// The neuron subset, ascending.
    pub fn subset(&self) -> Vec<usize> {
        self.neurons
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    pub fn subset_len(&self) -> usize {
        self.neurons.iter().filter(|&&k| k).count()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        frob(self.values.view())
    }
}

fn frob(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_subset(width: usize, subset: &[usize], taken: &[bool]) -> Result<()> {
    let mut seen = vec![false; width];
    for &n in subset {
        if n >= width {
            return Err(Error::shape(format!("neuron {n} outside a layer of {width}")));
        }
        if seen[n] {
            return Err(Error::arg(format!("neuron {n} listed twice")));
        }
        if taken.get(n).copied().unwrap_or(false) {
            return Err(Error::arg(format!("neuron {n} is already in the Gram subset")));
        }
        seen[n] = true;
    }
    Ok(())
}

fn outer_sum(acts: ArrayView2<'_, f32>, subset: &[usize]) -> Array2<f64> {
    let cols = acts.select(Axis(1), subset).mapv(f64::from);
    cols.dot(&cols.t())
}

/// Gram matrix of `acts` (`[samples × neurons]`) over `subset`.
/// An empty subset gives the zero matrix.
pub fn gram(acts: ArrayView2<'_, f32>, layer: usize, subset: &[usize]) -> Result<GramMatrix> {
    check_subset(acts.ncols(), subset, &[])?;
    let mut neurons = vec![false; acts.ncols()];
    for &n in subset {
        neurons[n] = true;
    }
    Ok(GramMatrix {
        values: outer_sum(acts, subset),
        layer,
        neurons,
    })
}

/// `M + Σ_{n ∈ new} a_n a_nᵀ`; `new` must be disjoint from `M`'s subset.
pub fn gram_add(m: &GramMatrix, acts: ArrayView2<'_, f32>, new: &[usize]) -> Result<GramMatrix> {
    let mut out = m.clone();
    gram_add_in_place(&mut out, acts, new)?;
    Ok(out)
}

pub(crate) fn gram_add_in_place(
    m: &mut GramMatrix,
    acts: ArrayView2<'_, f32>,
    new: &[usize],
) -> Result<()> {
    if acts.ncols() != m.neurons.len() || acts.nrows() != m.samples() {
        return Err(Error::shape(format!(
            "activations are {}×{}, Gram matrix covers {} samples of a {}-neuron layer",
            acts.nrows(),
            acts.ncols(),
            m.samples(),
            m.neurons.len()
        )));
    }
    check_subset(acts.ncols(), new, &m.neurons)?;
    if new.is_empty() {
        return Ok(());
    }
    m.values += &outer_sum(acts, new);
    for &n in new {
        m.neurons[n] = true;
    }
    Ok(())
}

fn same_shape(a: &GramMatrix, b: &GramMatrix) -> Result<()> {
    if a.values.dim() != b.values.dim() {
        return Err(Error::shape(format!(
            "Gram matrices are {:?} and {:?}",
            a.values.dim(),
            b.values.dim()
        )));
    }
    Ok(())
}

fn cosine(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let na = frob(a);
    let nb = frob(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    dot / (na * nb)
}

/// Frobenius cosine `⟨M1, M2⟩ / (‖M1‖ ‖M2‖)` of two Gram matrices, without
/// centering. Zero when either matrix is zero.
pub fn cka(m1: &GramMatrix, m2: &GramMatrix) -> Result<f64> {
    same_shape(m1, m2)?;
    Ok(cosine(m1.values.view(), m2.values.view()))
}

/// Same cosine after double-centering both matrices (`H M H`).
pub fn cka_centered(m1: &GramMatrix, m2: &GramMatrix) -> Result<f64> {
    same_shape(m1, m2)?;
    let a = center(m1.values.view());
    let b = center(m2.values.view());
    Ok(cosine(a.view(), b.view()))
}

fn center(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = m.nrows() as f64;
    let row = m.mean_axis(Axis(1)).expect("non-empty");
    let col = m.mean_axis(Axis(0)).expect("non-empty");
    let all = row.sum() / n;
    Array2::from_shape_fn(m.dim(), |(i, j)| m[[i, j]] - row[i] - col[j] + all)
}
