//! Reverse-mode tape over real component vectors.
//!
//! Every node holds a flat `f64` buffer; quaternion tensors occupy four
//! consecutive reals per element in `(q0, q1, q2, q3)` order. Hamilton
//! products are recorded as whole blocks with their 4×4 adjoint rules
//! rather than one node per scalar multiply.

use super::emulation::{left_block, matvec4, matvec4_t, right_block};
use crate::error::{shape_err, Error, Result};
use crate::layers::{Activation, ProductOrder};

pub type NodeId = usize;

/// Geometry of a 1D convolution node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub batch: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn l_out(&self) -> usize {
        (self.len - self.kernel) / self.stride + 1
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `z[b,i] = b_i + Σ_j w_ij ⊗ x[b,j]`.
    QAffine { w: NodeId, x: NodeId, b: NodeId, batch: usize, m: usize, n: usize },
    QConv { w: NodeId, x: NodeId, b: NodeId, shape: ConvShape, order: ProductOrder },
    RAffine { w: NodeId, x: NodeId, b: NodeId, batch: usize, m: usize, n: usize },
    RConv { w: NodeId, x: NodeId, b: NodeId, shape: ConvShape },
    Elementwise { x: NodeId, act: Activation },
    /// `y[i] = x[idx[i]]`.
    Gather { x: NodeId, idx: Vec<usize> },
    /// `y[i] = factor[i] · x[i]`.
    Scale { x: NodeId, factor: Vec<f64> },
    /// Same buffer, new interpretation.
    Alias { x: NodeId },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Nodes are appended in evaluation order, so the node list is always a
/// topological order.
#[derive(Debug, Clone, Default)]
pub struct AdTape {
    nodes: Vec<Node>,
}

fn quad(v: &[f64], at: usize) -> [f64; 4] {
    [v[at], v[at + 1], v[at + 2], v[at + 3]]
}

fn add_quad(v: &mut [f64], at: usize, d: [f64; 4]) {
    for c in 0..4 {
        v[at + c] += d[c];
    }
}

impl AdTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    fn expect_len(&self, id: NodeId, len: usize, what: &str) -> Result<()> {
        let got = self.nodes.get(id).map(|n| n.value.len());
        match got {
            Some(l) if l == len => Ok(()),
            Some(l) => shape_err(format!("{what}: expected {len} reals, got {l}")),
            None => Err(Error::MissingTape(format!("{what}: unknown node {id}"))),
        }
    }

    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn q_affine(&mut self, w: NodeId, x: NodeId, b: NodeId, batch: usize, m: usize, n: usize) -> Result<NodeId> {
        self.expect_len(w, 4 * m * n, "affine weight")?;
        self.expect_len(x, 4 * batch * n, "affine input")?;
        self.expect_len(b, 4 * m, "affine bias")?;
        let (wv, xv, bv) = (self.value(w), self.value(x), self.value(b));
        let mut out = Vec::with_capacity(4 * batch * m);
        for bb in 0..batch {
            for i in 0..m {
                let mut acc = quad(bv, 4 * i);
                for j in 0..n {
                    let y = matvec4(&left_block(quad(wv, 4 * (i * n + j))), quad(xv, 4 * (bb * n + j)));
                    for c in 0..4 {
                        acc[c] += y[c];
                    }
                }
                out.extend(acc);
            }
        }
        Ok(self.push(out, Op::QAffine { w, x, b, batch, m, n }))
    }

    pub fn q_conv(&mut self, w: NodeId, x: NodeId, b: NodeId, shape: ConvShape, order: ProductOrder) -> Result<NodeId> {
        let ConvShape { batch, c_in, len, c_out, kernel, stride } = shape;
        if kernel == 0 || stride == 0 || kernel > len {
            return shape_err(format!("conv kernel {kernel}, stride {stride} on length {len}"));
        }
        self.expect_len(w, 4 * c_out * c_in * kernel, "conv weight")?;
        self.expect_len(x, 4 * batch * c_in * len, "conv input")?;
        self.expect_len(b, 4 * c_out, "conv bias")?;
        let l_out = shape.l_out();
        let (wv, xv, bv) = (self.value(w), self.value(x), self.value(b));
        let mut out = Vec::with_capacity(4 * batch * c_out * l_out);
        for bb in 0..batch {
            for j in 0..c_out {
                for i in 0..l_out {
                    let mut acc = quad(bv, 4 * j);
                    for c in 0..c_in {
                        for k in 0..kernel {
                            let wq = quad(wv, 4 * ((j * c_in + c) * kernel + k));
                            let xq = quad(xv, 4 * ((bb * c_in + c) * len + i * stride + k));
                            let y = match order {
                                ProductOrder::WeightLeft => matvec4(&left_block(wq), xq),
                                ProductOrder::InputLeft => matvec4(&right_block(wq), xq),
                            };
                            for cc in 0..4 {
                                acc[cc] += y[cc];
                            }
                        }
                    }
                    out.extend(acc);
                }
            }
        }
        Ok(self.push(out, Op::QConv { w, x, b, shape, order }))
    }

    pub fn r_affine(&mut self, w: NodeId, x: NodeId, b: NodeId, batch: usize, m: usize, n: usize) -> Result<NodeId> {
        self.expect_len(w, m * n, "affine weight")?;
        self.expect_len(x, batch * n, "affine input")?;
        self.expect_len(b, m, "affine bias")?;
        let (wv, xv, bv) = (self.value(w), self.value(x), self.value(b));
        let mut out = Vec::with_capacity(batch * m);
        for bb in 0..batch {
            let xb = &xv[bb * n..(bb + 1) * n];
            for i in 0..m {
                out.push(bv[i] + wv[i * n..(i + 1) * n].iter().zip(xb).map(|(w, x)| w * x).sum::<f64>());
            }
        }
        Ok(self.push(out, Op::RAffine { w, x, b, batch, m, n }))
    }

    pub fn r_conv(&mut self, w: NodeId, x: NodeId, b: NodeId, shape: ConvShape) -> Result<NodeId> {
        let ConvShape { batch, c_in, len, c_out, kernel, stride } = shape;
        if kernel == 0 || stride == 0 || kernel > len {
            return shape_err(format!("conv kernel {kernel}, stride {stride} on length {len}"));
        }
        self.expect_len(w, c_out * c_in * kernel, "conv weight")?;
        self.expect_len(x, batch * c_in * len, "conv input")?;
        self.expect_len(b, c_out, "conv bias")?;
        let l_out = shape.l_out();
        let (wv, xv, bv) = (self.value(w), self.value(x), self.value(b));
        let mut out = Vec::with_capacity(batch * c_out * l_out);
        for bb in 0..batch {
            for j in 0..c_out {
                for i in 0..l_out {
                    let mut acc = bv[j];
                    for c in 0..c_in {
                        let wo = (j * c_in + c) * kernel;
                        let xo = (bb * c_in + c) * len + i * stride;
                        for k in 0..kernel {
                            acc += wv[wo + k] * xv[xo + k];
                        }
                    }
                    out.push(acc);
                }
            }
        }
        Ok(self.push(out, Op::RConv { w, x, b, shape }))
    }

    pub fn elementwise(&mut self, x: NodeId, act: Activation) -> NodeId {
        let out = self.value(x).iter().map(|&v| act.apply(v)).collect();
        self.push(out, Op::Elementwise { x, act })
    }

    pub fn gather(&mut self, x: NodeId, idx: Vec<usize>) -> Result<NodeId> {
        let src = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= src.len()) {
            return shape_err(format!("gather index {bad} out of {}", src.len()));
        }
        let out = idx.iter().map(|&i| src[i]).collect();
        Ok(self.push(out, Op::Gather { x, idx }))
    }

    pub fn scale(&mut self, x: NodeId, factor: Vec<f64>) -> Result<NodeId> {
        self.expect_len(x, factor.len(), "scale")?;
        let out = self.value(x).iter().zip(&factor).map(|(v, f)| v * f).collect();
        Ok(self.push(out, Op::Scale { x, factor }))
    }

    pub fn alias(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).to_vec();
        self.push(out, Op::Alias { x })
    }

    /// Adjoints of every node for the seed `∂L/∂output`.
    pub fn backward(&self, output: NodeId, seed: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.expect_len(output, seed.len(), "backward seed")?;
        let mut adj: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        adj[output].copy_from_slice(seed);
        for id in (0..=output).rev() {
            let g = std::mem::take(&mut adj[id]);
            if g.iter().all(|v| *v == 0.0) {
                adj[id] = g;
                continue;
            }
            self.propagate(id, &g, &mut adj);
            adj[id] = g;
        }
        Ok(adj)
    }

    fn propagate(&self, id: NodeId, g: &[f64], adj: &mut [Vec<f64>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            &Op::QAffine { w, x, b, batch, m, n } => {
                let (wv, xv) = (self.value(w), self.value(x));
                for bb in 0..batch {
                    for i in 0..m {
                        let gz = quad(g, 4 * (bb * m + i));
                        add_quad(&mut adj[b], 4 * i, gz);
                        for j in 0..n {
                            let (wo, xo) = (4 * (i * n + j), 4 * (bb * n + j));
                            let wq = quad(wv, wo);
                            let xq = quad(xv, xo);
                            add_quad(&mut adj[x], xo, matvec4_t(&left_block(wq), gz));
                            add_quad(&mut adj[w], wo, matvec4_t(&right_block(xq), gz));
                        }
                    }
                }
            }
            &Op::QConv { w, x, b, shape, order } => {
                let ConvShape { batch, c_in, len, c_out, kernel, stride } = shape;
                let l_out = shape.l_out();
                let (wv, xv) = (self.value(w), self.value(x));
                for bb in 0..batch {
                    for j in 0..c_out {
                        for i in 0..l_out {
                            let gz = quad(g, 4 * ((bb * c_out + j) * l_out + i));
                            add_quad(&mut adj[b], 4 * j, gz);
                            for c in 0..c_in {
                                for k in 0..kernel {
                                    let wo = 4 * ((j * c_in + c) * kernel + k);
                                    let xo = 4 * ((bb * c_in + c) * len + i * stride + k);
                                    let (wq, xq) = (quad(wv, wo), quad(xv, xo));
                                    let (dx, dw) = match order {
                                        ProductOrder::WeightLeft => {
                                            (matvec4_t(&left_block(wq), gz), matvec4_t(&right_block(xq), gz))
                                        }
                                        ProductOrder::InputLeft => {
                                            (matvec4_t(&right_block(wq), gz), matvec4_t(&left_block(xq), gz))
                                        }
                                    };
                                    add_quad(&mut adj[x], xo, dx);
                                    add_quad(&mut adj[w], wo, dw);
                                }
                            }
                        }
                    }
                }
            }
            &Op::RAffine { w, x, b, batch, m, n } => {
                for bb in 0..batch {
                    for i in 0..m {
                        let gz = g[bb * m + i];
                        adj[b][i] += gz;
                        for j in 0..n {
                            adj[x][bb * n + j] += gz * self.value(w)[i * n + j];
                            adj[w][i * n + j] += gz * self.value(x)[bb * n + j];
                        }
                    }
                }
            }
            &Op::RConv { w, x, b, shape } => {
                let ConvShape { batch, c_in, len, c_out, kernel, stride } = shape;
                let l_out = shape.l_out();
                for bb in 0..batch {
                    for j in 0..c_out {
                        for i in 0..l_out {
                            let gz = g[(bb * c_out + j) * l_out + i];
                            adj[b][j] += gz;
                            for c in 0..c_in {
                                let wo = (j * c_in + c) * kernel;
                                let xo = (bb * c_in + c) * len + i * stride;
                                for k in 0..kernel {
                                    adj[x][xo + k] += gz * self.value(w)[wo + k];
                                    adj[w][wo + k] += gz * self.value(x)[xo + k];
                                }
                            }
                        }
                    }
                }
            }
            &Op::Elementwise { x, act } => {
                for ((a, gv), xv) in adj[x].iter_mut().zip(g).zip(self.value(x)) {
                    *a += gv * act.derivative(*xv);
                }
            }
            Op::Gather { x, idx } => {
                for (gv, &i) in g.iter().zip(idx) {
                    adj[*x][i] += gv;
                }
            }
            Op::Scale { x, factor } => {
                for ((a, gv), f) in adj[*x].iter_mut().zip(g).zip(factor) {
                    *a += gv * f;
                }
            }
            &Op::Alias { x } => {
                for (a, gv) in adj[x].iter_mut().zip(g) {
                    *a += gv;
                }
            }
        }
    }
}
