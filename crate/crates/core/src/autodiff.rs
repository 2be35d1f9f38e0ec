//! Tensor-valued reverse-mode differentiation.
//!
//! A [`Graph`] records every operation with its eagerly computed value.
//! [`Graph::gradients`] appends the backward pass to the same graph, built
//! from the same primitives, so a gradient can itself be differentiated.
//! That is what the critic's gradient penalty needs: the gradient of a
//! function of `grad_x D` with respect to the critic weights.
//!
//! The primitive set is closed under differentiation. In particular the
//! three convolution kernels (forward, input adjoint, weight adjoint) are
//! each bilinear and their adjoints are again one of the three.

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape {shape:?} vs {} values", data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![v; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Geometry of a 1-D convolution: `y[t]` reads `x[t * stride + k - pad_left]`,
/// with out-of-range taps treated as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad_left: usize,
    pub in_len: usize,
    pub out_len: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// Indicator `x > 0`; treated as locally constant.
    Step(Var),
    Relu(Var),
    Sqrt(Var),
    /// `1/x`, or 0 at `x = 0`.
    SafeRecip(Var),
    Reshape(Var),
    /// `[C] -> [B, C, L]`
    BroadcastChannel(Var),
    /// `[B, C, L] -> [C]`
    SumChannel(Var),
    /// `[B, ...] -> [B]`
    SumRows(Var),
    /// `[B] -> [B, ...]`
    BroadcastRows(Var),
    /// `[...] -> [1]`
    SumAll(Var),
    /// `[1] -> [...]`
    BroadcastAll(Var),
    /// `x [B, Ci, Li], w [Co, Ci, K] -> [B, Co, Lo]`
    Conv(Var, Var, ConvGeom),
    /// `g [B, Co, Lo], w [Co, Ci, K] -> [B, Ci, Li]`
    ConvInputGrad(Var, Var, ConvGeom),
    /// `x [B, Ci, Li], g [B, Co, Lo] -> [Co, Ci, K]`
    ConvWeightGrad(Var, Var, ConvGeom),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::Conv(a, b, _) | Op::ConvInputGrad(a, b, _) | Op::ConvWeightGrad(a, b, _) => vec![a, b],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Step(a)
            | Op::Relu(a)
            | Op::Sqrt(a)
            | Op::SafeRecip(a)
            | Op::Reshape(a)
            | Op::BroadcastChannel(a)
            | Op::SumChannel(a)
            | Op::SumRows(a)
            | Op::BroadcastRows(a)
            | Op::SumAll(a)
            | Op::BroadcastAll(a) => vec![a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let x = self.value(a);
        let value = Tensor { shape: x.shape.clone(), data: x.data.iter().map(|&v| f(v)).collect() };
        self.push(value, op)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape, y.shape, "elementwise shape mismatch");
        let data = x.data.iter().zip(&y.data).map(|(&u, &v)| f(u, v)).collect();
        let value = Tensor { shape: x.shape.clone(), data };
        self.push(value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Add(a, b), |u, v| u + v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Mul(a, b), |u, v| u * v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |v| v * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::AddScalar(a), |v| v + c)
    }

    pub fn step(&mut self, a: Var) -> Var {
        self.map(a, Op::Step(a), |v| if v > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |v| v.max(0.0))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn safe_recip(&mut self, a: Var) -> Var {
        self.map(a, Op::SafeRecip(a), |v| if v == 0.0 { 0.0 } else { 1.0 / v })
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let x = self.value(a);
        let value = Tensor::new(shape, x.data.clone());
        self.push(value, Op::Reshape(a))
    }

    pub fn broadcast_channel(&mut self, a: Var, shape: [usize; 3]) -> Var {
        let [b, c, l] = shape;
        let x = self.value(a);
        assert_eq!(x.shape, vec![c], "channel broadcast shape");
        let mut data = Vec::with_capacity(b * c * l);
        for _ in 0..b {
            for &v in &x.data {
                data.extend(std::iter::repeat_n(v, l));
            }
        }
        self.push(Tensor::new(shape.to_vec(), data), Op::BroadcastChannel(a))
    }

    pub fn sum_channel(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (b, c, l) = (x.shape[0], x.shape[1], x.shape[2]);
        let mut data = vec![0.0; c];
        for bi in 0..b {
            for (ci, acc) in data.iter_mut().enumerate() {
                let off = (bi * c + ci) * l;
                *acc += x.data[off..off + l].iter().sum::<f64>();
            }
        }
        self.push(Tensor::new(vec![c], data), Op::SumChannel(a))
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let b = x.shape[0];
        let w = x.len() / b.max(1);
        let data = (0..b).map(|i| x.data[i * w..(i + 1) * w].iter().sum()).collect();
        self.push(Tensor::new(vec![b], data), Op::SumRows(a))
    }

    pub fn broadcast_rows(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape, vec![shape[0]], "row broadcast shape");
        let w: usize = shape[1..].iter().product();
        let data = x.data.iter().flat_map(|&v| std::iter::repeat_n(v, w)).collect();
        self.push(Tensor::new(shape, data), Op::BroadcastRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::new(vec![1], vec![s]), Op::SumAll(a))
    }

    pub fn broadcast_all(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), 1, "broadcast_all needs a scalar");
        let value = Tensor::filled(shape, x.data[0]);
        self.push(value, Op::BroadcastAll(a))
    }

    pub fn conv1d(&mut self, x: Var, w: Var, geom: ConvGeom) -> Var {
        let value = conv1d(self.value(x), self.value(w), geom);
        self.push(value, Op::Conv(x, w, geom))
    }

    pub fn conv1d_input_grad(&mut self, g: Var, w: Var, geom: ConvGeom) -> Var {
        let value = conv1d_input_grad(self.value(g), self.value(w), geom);
        self.push(value, Op::ConvInputGrad(g, w, geom))
    }

    pub fn conv1d_weight_grad(&mut self, x: Var, g: Var, geom: ConvGeom) -> Var {
        let value = conv1d_weight_grad(self.value(x), self.value(g), geom);
        self.push(value, Op::ConvWeightGrad(x, g, geom))
    }

    /// Reverse pass from `output` seeded with `seed` (same shape), recorded as
    /// new nodes. Returns one gradient node per entry of `wrt`; unreachable
    /// entries get a zero leaf. Every node between the inputs and `output`
    /// is visited exactly once, in reverse creation order.
    pub fn gradients(&mut self, output: Var, seed: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(self.shape(output), self.shape(seed), "seed shape");
        let end = output.0 + 1;
        let mut requires = vec![false; end];
        for v in wrt {
            if v.0 < end {
                requires[v.0] = true;
            }
        }
        for i in 0..end {
            if !requires[i] {
                let op = &self.nodes[i].op;
                requires[i] = !matches!(op, Op::Step(_)) && op.inputs().iter().any(|v| requires[v.0]);
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; end];
        grads[output.0] = Some(seed);
        for i in (0..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !requires[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let mut acc = |graph: &mut Graph, target: Var, contrib: Var| {
                if requires[target.0] {
                    grads[target.0] = Some(match grads[target.0] {
                        Some(prev) => graph.add(prev, contrib),
                        None => contrib,
                    });
                }
            };
            match op {
                Op::Leaf | Op::Step(_) => {}
                Op::Add(a, b) => {
                    acc(self, a, g);
                    acc(self, b, g);
                }
                Op::Mul(a, b) => {
                    if requires[a.0] {
                        let c = self.mul(g, b);
                        acc(self, a, c);
                    }
                    if requires[b.0] {
                        let c = self.mul(g, a);
                        acc(self, b, c);
                    }
                }
                Op::Scale(a, c) => {
                    let d = self.scale(g, c);
                    acc(self, a, d);
                }
                Op::AddScalar(a) => acc(self, a, g),
                Op::Relu(a) => {
                    let mask = self.step(a);
                    let d = self.mul(g, mask);
                    acc(self, a, d);
                }
                Op::Sqrt(a) => {
                    let y = Var(i);
                    let r = self.safe_recip(y);
                    let half = self.scale(r, 0.5);
                    let d = self.mul(g, half);
                    acc(self, a, d);
                }
                Op::SafeRecip(a) => {
                    let y = Var(i);
                    let y2 = self.mul(y, y);
                    let neg = self.scale(y2, -1.0);
                    let d = self.mul(g, neg);
                    acc(self, a, d);
                }
                Op::Reshape(a) => {
                    let shape = self.shape(a).to_vec();
                    let d = self.reshape(g, shape);
                    acc(self, a, d);
                }
                Op::BroadcastChannel(a) => {
                    let d = self.sum_channel(g);
                    acc(self, a, d);
                }
                Op::SumChannel(a) => {
                    let s = self.shape(a);
                    let shape = [s[0], s[1], s[2]];
                    let d = self.broadcast_channel(g, shape);
                    acc(self, a, d);
                }
                Op::SumRows(a) => {
                    let shape = self.shape(a).to_vec();
                    let d = self.broadcast_rows(g, shape);
                    acc(self, a, d);
                }
                Op::BroadcastRows(a) => {
                    let d = self.sum_rows(g);
                    acc(self, a, d);
                }
                Op::SumAll(a) => {
                    let shape = self.shape(a).to_vec();
                    let d = self.broadcast_all(g, shape);
                    acc(self, a, d);
                }
                Op::BroadcastAll(a) => {
                    let d = self.sum_all(g);
                    let shape = self.shape(a).to_vec();
                    let d = self.reshape(d, shape);
                    acc(self, a, d);
                }
                Op::Conv(x, w, geom) => {
                    if requires[x.0] {
                        let d = self.conv1d_input_grad(g, w, geom);
                        acc(self, x, d);
                    }
                    if requires[w.0] {
                        let d = self.conv1d_weight_grad(x, g, geom);
                        acc(self, w, d);
                    }
                }
                Op::ConvInputGrad(go, w, geom) => {
                    // <J^T(go, w), h> = <go, conv(h, w)> = <w, weight_grad(h, go)>
                    if requires[go.0] {
                        let d = self.conv1d(g, w, geom);
                        acc(self, go, d);
                    }
                    if requires[w.0] {
                        let d = self.conv1d_weight_grad(g, go, geom);
                        acc(self, w, d);
                    }
                }
                Op::ConvWeightGrad(x, go, geom) => {
                    // <weight_grad(x, go), h> = <go, conv(x, h)> = <x, input_grad(go, h)>
                    if requires[go.0] {
                        let d = self.conv1d(x, g, geom);
                        acc(self, go, d);
                    }
                    if requires[x.0] {
                        let d = self.conv1d_input_grad(go, g, geom);
                        acc(self, x, d);
                    }
                }
            }
        }

        wrt.iter()
            .map(|&v| match grads.get(v.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.shape(v).to_vec();
                    self.leaf(Tensor::zeros(shape))
                }
            })
            .collect()
    }
}

fn conv_dims(x: &Tensor, w: &Tensor, geom: ConvGeom) -> (usize, usize, usize) {
    assert_eq!(x.shape.len(), 3, "conv input must be [B, C, L]");
    assert_eq!(w.shape, vec![w.shape[0], x.shape[1], geom.kernel], "conv weight shape");
    assert_eq!(x.shape[2], geom.in_len, "conv input length");
    (x.shape[0], x.shape[1], w.shape[0])
}

/// Input index read by output position `t` at tap `k`, if in range.
#[inline]
fn tap(geom: &ConvGeom, t: usize, k: usize) -> Option<usize> {
    (t * geom.stride + k).checked_sub(geom.pad_left).filter(|&i| i < geom.in_len)
}

pub fn conv1d(x: &Tensor, w: &Tensor, geom: ConvGeom) -> Tensor {
    let (b, ci, co) = conv_dims(x, w, geom);
    let (li, lo, kk) = (geom.in_len, geom.out_len, geom.kernel);
    let mut y = vec![0.0; b * co * lo];
    for bi in 0..b {
        for o in 0..co {
            let out = &mut y[(bi * co + o) * lo..(bi * co + o + 1) * lo];
            for c in 0..ci {
                let xrow = &x.data[(bi * ci + c) * li..(bi * ci + c + 1) * li];
                let wrow = &w.data[(o * ci + c) * kk..(o * ci + c + 1) * kk];
                for (t, acc) in out.iter_mut().enumerate() {
                    for (k, &wk) in wrow.iter().enumerate() {
                        if let Some(i) = tap(&geom, t, k) {
                            *acc += wk * xrow[i];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![b, co, lo], y)
}

pub fn conv1d_input_grad(g: &Tensor, w: &Tensor, geom: ConvGeom) -> Tensor {
    let (b, co) = (g.shape[0], g.shape[1]);
    let ci = w.shape[1];
    assert_eq!(w.shape, vec![co, ci, geom.kernel]);
    assert_eq!(g.shape[2], geom.out_len);
    let (li, lo, kk) = (geom.in_len, geom.out_len, geom.kernel);
    let mut gx = vec![0.0; b * ci * li];
    for bi in 0..b {
        for c in 0..ci {
            let out = &mut gx[(bi * ci + c) * li..(bi * ci + c + 1) * li];
            for o in 0..co {
                let grow = &g.data[(bi * co + o) * lo..(bi * co + o + 1) * lo];
                let wrow = &w.data[(o * ci + c) * kk..(o * ci + c + 1) * kk];
                for (t, &gt) in grow.iter().enumerate() {
                    for (k, &wk) in wrow.iter().enumerate() {
                        if let Some(i) = tap(&geom, t, k) {
                            out[i] += gt * wk;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![b, ci, li], gx)
}

pub fn conv1d_weight_grad(x: &Tensor, g: &Tensor, geom: ConvGeom) -> Tensor {
    let (b, ci) = (x.shape[0], x.shape[1]);
    let co = g.shape[1];
    assert_eq!(g.shape, vec![b, co, geom.out_len]);
    assert_eq!(x.shape[2], geom.in_len);
    let (li, lo, kk) = (geom.in_len, geom.out_len, geom.kernel);
    let mut gw = vec![0.0; co * ci * kk];
    for bi in 0..b {
        for o in 0..co {
            let grow = &g.data[(bi * co + o) * lo..(bi * co + o + 1) * lo];
            for c in 0..ci {
                let xrow = &x.data[(bi * ci + c) * li..(bi * ci + c + 1) * li];
                let out = &mut gw[(o * ci + c) * kk..(o * ci + c + 1) * kk];
                for (t, &gt) in grow.iter().enumerate() {
                    for (k, acc) in out.iter_mut().enumerate() {
                        if let Some(i) = tap(&geom, t, k) {
                            *acc += gt * xrow[i];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![co, ci, kk], gw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
    }

    fn geoms() -> Vec<ConvGeom> {
        vec![
            ConvGeom { stride: 1, pad_left: 0, in_len: 9, out_len: 5, kernel: 5 },
            ConvGeom { stride: 2, pad_left: 0, in_len: 9, out_len: 3, kernel: 3 },
            ConvGeom { stride: 2, pad_left: 1, in_len: 8, out_len: 4, kernel: 3 },
            ConvGeom { stride: 1, pad_left: 0, in_len: 1, out_len: 1, kernel: 1 },
        ]
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for geom in geoms() {
            let x = random(vec![2, 3, geom.in_len], &mut rng);
            let w = random(vec![4, 3, geom.kernel], &mut rng);
            let y = conv1d(&x, &w, geom);
            for b in 0..2 {
                for o in 0..4 {
                    for t in 0..geom.out_len {
                        let mut s = 0.0;
                        for c in 0..3 {
                            for k in 0..geom.kernel {
                                let i = (t * geom.stride + k) as isize - geom.pad_left as isize;
                                if i >= 0 && (i as usize) < geom.in_len {
                                    s += w.data[(o * 3 + c) * geom.kernel + k] * x.data[(b * 3 + c) * geom.in_len + i as usize];
                                }
                            }
                        }
                        assert!((y.data[(b * 4 + o) * geom.out_len + t] - s).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn conv_adjoints_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for geom in geoms() {
            let x = random(vec![2, 3, geom.in_len], &mut rng);
            let w = random(vec![4, 3, geom.kernel], &mut rng);
            let g = random(vec![2, 4, geom.out_len], &mut rng);
            let lhs = dot(&conv1d(&x, &w, geom), &g);
            assert!((lhs - dot(&conv1d_input_grad(&g, &w, geom), &x)).abs() < 1e-12);
            assert!((lhs - dot(&conv1d_weight_grad(&x, &g, geom), &w)).abs() < 1e-12);
        }
    }

    fn numeric_grad(f: &dyn Fn(&Tensor) -> f64, x: &Tensor) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.clone();
                p.data[i] += h;
                let mut m = x.clone();
                m.data[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    /// f(x) = sum(sqrt(sum_rows(relu(conv(x, w))^2)) * c)
    fn build(g: &mut Graph, x: Var, w: Var, geom: ConvGeom) -> Var {
        let y = g.conv1d(x, w, geom);
        let r = g.relu(y);
        let sq = g.mul(r, r);
        let s = g.sum_rows(sq);
        let n = g.sqrt(s);
        let n = g.add_scalar(n, -0.3);
        let n2 = g.mul(n, n);
        g.sum_all(n2)
    }

    #[test]
    fn first_order_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let geom = ConvGeom { stride: 2, pad_left: 1, in_len: 8, out_len: 4, kernel: 3 };
        let x0 = random(vec![2, 2, 8], &mut rng);
        let w0 = random(vec![3, 2, 3], &mut rng);
        let eval = |x: &Tensor, w: &Tensor| {
            let mut g = Graph::new();
            let (xv, wv) = (g.leaf(x.clone()), g.leaf(w.clone()));
            let out = build(&mut g, xv, wv, geom);
            g.value(out).data[0]
        };
        let mut g = Graph::new();
        let (xv, wv) = (g.leaf(x0.clone()), g.leaf(w0.clone()));
        let out = build(&mut g, xv, wv, geom);
        let seed = g.leaf(Tensor::filled(vec![1], 1.0));
        let grads = g.gradients(out, seed, &[xv, wv]);
        let fx = numeric_grad(&|x| eval(x, &w0), &x0);
        let fw = numeric_grad(&|w| eval(&x0, w), &w0);
        for (a, b) in g.value(grads[0]).data.iter().zip(&fx) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        for (a, b) in g.value(grads[1]).data.iter().zip(&fw) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn second_order_matches_finite_differences() {
        // h(w) = sum((grad_x f(x, w))^2), differentiated in w through the backward graph.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let geom = ConvGeom { stride: 1, pad_left: 0, in_len: 6, out_len: 4, kernel: 3 };
        let x0 = random(vec![2, 1, 6], &mut rng);
        let w0 = random(vec![3, 1, 3], &mut rng);
        let penalty = |g: &mut Graph, xv: Var, wv: Var| {
            let out = build(g, xv, wv, geom);
            let seed = g.leaf(Tensor::filled(vec![1], 1.0));
            let gx = g.gradients(out, seed, &[xv])[0];
            let sq = g.mul(gx, gx);
            g.sum_all(sq)
        };
        let eval = |w: &Tensor| {
            let mut g = Graph::new();
            let (xv, wv) = (g.leaf(x0.clone()), g.leaf(w.clone()));
            let p = penalty(&mut g, xv, wv);
            g.value(p).data[0]
        };
        let mut g = Graph::new();
        let (xv, wv) = (g.leaf(x0.clone()), g.leaf(w0.clone()));
        let p = penalty(&mut g, xv, wv);
        let seed = g.leaf(Tensor::filled(vec![1], 1.0));
        let gw = g.gradients(p, seed, &[wv])[0];
        let fd = numeric_grad(&eval, &w0);
        for (a, b) in g.value(gw).data.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn broadcast_and_sum_adjoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::new();
        let c = g.leaf(random(vec![3], &mut rng));
        let b = g.broadcast_channel(c, [2, 3, 4]);
        let s = g.sum_channel(b);
        assert_eq!(g.value(s).data, g.value(c).data.iter().map(|v| v * 8.0).collect::<Vec<_>>());
        let r = g.leaf(random(vec![2], &mut rng));
        let br = g.broadcast_rows(r, vec![2, 3, 4]);
        let sr = g.sum_rows(br);
        for (a, b) in g.value(sr).data.iter().zip(&g.value(r).data) {
            assert!((a - 12.0 * b).abs() < 1e-14);
        }
        let seed = g.leaf(Tensor::filled(vec![3], 1.0));
        let gc = g.gradients(s, seed, &[c, r]);
        assert_eq!(g.value(gc[0]).data, vec![8.0; 3]);
        assert_eq!(g.value(gc[1]).data, vec![0.0; 2]);
    }

    #[test]
    fn safe_recip_at_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2], vec![0.0, 4.0]));
        let s = g.sqrt(x);
        let seed = g.leaf(Tensor::filled(vec![2], 1.0));
        let d = g.gradients(s, seed, &[x])[0];
        assert_eq!(g.value(d).data, vec![0.0, 0.25]);
    }
}
